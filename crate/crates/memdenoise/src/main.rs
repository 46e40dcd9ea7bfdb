use std::process::ExitCode;

fn main() -> ExitCode {
    match memdenoise::cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                // clap has already formatted these, including the prefix
                memdenoise::Error::Usage(msg) => eprint!("{msg}"),
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
