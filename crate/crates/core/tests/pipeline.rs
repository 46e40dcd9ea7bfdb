use memdenoise_core::baselines::FilterSpec;
use memdenoise_core::conv::ConvLayer;
use memdenoise_core::crossbar::ProgramOptions;
use memdenoise_core::dense::{DenseDenoiser, DenseNet};
use memdenoise_core::device::{DeviceModel, Levels};
use memdenoise_core::fusion::FusionDenoiser;
use memdenoise_core::metrics;
use memdenoise_core::noise::NoiseSpec;
use memdenoise_core::{Denoiser, ImageTensor, Shape};
use proptest::prelude::*;

fn digitish(h: usize, w: usize, salt: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, |r, c| if (r * 3 + c * 5 + salt) % 7 < 3 { 0.9 } else { 0.05 })
}

fn identity_member(h: usize, w: usize, seed: u64) -> DenseDenoiser {
    DenseNet::identity(h, w)
        .deploy(&DeviceModel::ideal(), ProgramOptions::default(), seed)
        .unwrap()
}

#[test]
fn identity_network_on_ideal_crossbar_passes_images_through() {
    let img = digitish(6, 5, 2);
    let out = identity_member(6, 5, 3).denoise(&img).unwrap();
    for (a, b) in img.data().iter().zip(out.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn one_hot_fusion_kernel_selects_a_member() {
    let (h, w) = (6, 6);
    let members: Vec<DenseDenoiser> = (0..8)
        .map(|m| {
            // member m scales its input by (m + 1) / 8
            let mut net = DenseNet::identity(h, w);
            let n = net.pixels();
            let mut weights = net.weights().to_vec();
            for i in 0..n {
                weights[i * n + i] = (m + 1) as f64 / 8.0;
            }
            net = DenseNet::from_weights(h, w, weights).unwrap();
            net.deploy(&DeviceModel::ideal(), ProgramOptions::default(), 1).unwrap()
        })
        .collect();
    let img = digitish(h, w, 1);
    for pick in [0, 5, 7] {
        let mut kernel = ConvLayer::zeros(8, 1, 3);
        kernel.set_tap(0, pick, 1, 1, 1.0);
        let fused = FusionDenoiser::new(members.clone(), kernel, &DeviceModel::ideal(), ProgramOptions::default(), 2).unwrap();
        let got = fused.denoise(&img).unwrap();
        let want = members[pick].denoise(&img).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let zero = FusionDenoiser::new(members, ConvLayer::zeros(8, 1, 3), &DeviceModel::ideal(), ProgramOptions::default(), 2).unwrap();
    assert!(zero.denoise(&img).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn every_denoiser_keeps_the_shape() {
    let img = digitish(8, 6, 0);
    let denoisers: Vec<Box<dyn Denoiser>> = vec![
        Box::new(identity_member(8, 6, 0)),
        Box::new(FilterSpec::Median { window: 3 }),
        Box::new(FilterSpec::GaussianBlur { sigma: 0.8 }),
        Box::new(FilterSpec::TotalVariation { weight: 0.1, iters: 20 }),
    ];
    for d in &denoisers {
        assert_eq!(d.denoise(&img).unwrap().shape(), Shape::new(8, 6, 1));
    }
}

fn noise_strategy() -> impl Strategy<Value = NoiseSpec> {
    prop_oneof![
        (0.0f64..0.6).prop_map(NoiseSpec::gaussian),
        (0.0f64..1.0).prop_map(NoiseSpec::salt_pepper),
        (1.0f64..50.0).prop_map(|peak| NoiseSpec::Poisson { peak }),
        (0.0f64..2.0).prop_map(|variance| NoiseSpec::Speckle { variance, clip: true }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corruption_is_a_function_of_seed_and_index(spec in noise_strategy(), seed: u64, index in 0u64..1000) {
        let img = digitish(7, 7, index as usize);
        let a = spec.corrupt_indexed(&img, seed, index);
        let b = spec.corrupt_indexed(&img, seed, index);
        prop_assert_eq!(a.data(), b.data());
        prop_assert_eq!(a.shape(), img.shape());
    }

    #[test]
    fn clipped_noise_stays_in_range(spec in noise_strategy(), seed: u64) {
        let spec = match spec {
            NoiseSpec::Gaussian { variance, .. } => NoiseSpec::Gaussian { variance, clip: true },
            other => other,
        };
        let out = spec.corrupt_indexed(&digitish(9, 9, 3), seed, 0);
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn text_form_round_trips(spec in noise_strategy()) {
        let back: NoiseSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn metrics_stay_in_range(spec in noise_strategy(), seed: u64) {
        let clean = digitish(10, 10, 4);
        let noisy = spec.corrupt_indexed(&clean, seed, 1);
        let s = metrics::ssim(&clean, &noisy).unwrap();
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
        let mse = metrics::mse(&clean, &noisy).unwrap();
        prop_assert!(mse >= 0.0);
        if let Some(p) = metrics::psnr(&clean, &noisy).unwrap() {
            prop_assert!(p >= 0.0);
        }
    }

    #[test]
    fn non_ideal_deployment_keeps_outputs_in_range(levels in 2u32..64, sigma in 0.0f64..0.1, seed: u64) {
        let dev = DeviceModel::new(Levels::Finite(levels), sigma).unwrap();
        let d = DenseNet::identity(5, 5).deploy(&dev, ProgramOptions::default(), seed).unwrap();
        let out = d.denoise(&digitish(5, 5, 2)).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn filters_fix_constant_images(v in 0.0f64..1.0, sigma in 0.3f64..2.0, window in prop::sample::select(vec![3usize, 5])) {
        let img = ImageTensor::filled(Shape::new(6, 7, 1), v);
        for f in [
            FilterSpec::GaussianBlur { sigma },
            FilterSpec::Median { window },
            FilterSpec::TotalVariation { weight: 0.2, iters: 10 },
        ] {
            let out = f.denoise(&img).unwrap();
            for x in out.data() {
                prop_assert!((x - v).abs() < 1e-12);
            }
        }
    }
}
