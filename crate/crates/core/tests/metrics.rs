mod common;

use compressnet::data::synthetic_image;
use compressnet::losses::FeatureExtractor;
use compressnet::metrics::{evaluate_pairs, fid, fsim_c, gaussian_stats, psnr, ssim, GaussianStats};
use compressnet::{Grid, ImageTensor};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn noisy(img: &ImageTensor, sigma: f64, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut g = img.grid().clone();
    g.data_mut().iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    ImageTensor::from_grid_clamped(g)
}

fn crop(img: &ImageTensor, h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, |y, x, c| img.grid().get(y, x, c))
}

#[test]
fn fsim_matches_reference_implementation() {
    let sizes = [(32, 32), (40, 48), (33, 45), (48, 40), (36, 36)];
    for (i, &(h, w)) in sizes.iter().enumerate() {
        let a = crop(&synthetic_image(i + 1, 64), h, w);
        let b = noisy(&a, 0.05 + 0.03 * i as f64, i as u64);
        let ours = fsim_c(&a, &b).unwrap().value;
        let reference = common::fsim_c_reference(a.data(), b.data(), h, w);
        assert!((ours - reference).abs() < 1e-6, "{h}x{w}: {ours} vs {reference}");
    }
}

#[test]
fn metrics_degrade_monotonically_with_noise() {
    for i in 0..4 {
        let a = crop(&synthetic_image(i, 64), 32, 32);
        let levels: Vec<ImageTensor> = [0.02, 0.08, 0.2].iter().map(|&s| noisy(&a, s, 10 + i as u64)).collect();
        let p: Vec<f64> = levels.iter().map(|b| psnr(&a, b, 1.0).unwrap()).collect();
        let s: Vec<f64> = levels.iter().map(|b| ssim(&a, b).unwrap()).collect();
        let f: Vec<f64> = levels.iter().map(|b| fsim_c(&a, b).unwrap().value).collect();
        for v in [&p, &s, &f] {
            assert!(v[0] > v[1] && v[1] > v[2], "image {i}: {v:?}");
        }
    }
}

#[test]
fn grey_images_have_no_chroma_term() {
    let grey =
        |f: &dyn Fn(usize, usize) -> f64| ImageTensor::from_grid_clamped(Grid::from_fn(32, 32, 1, |y, x, _| f(y, x)));
    let a = grey(&|y, x| ((y * 7 + x * 3) % 32) as f64 / 31.0);
    let b = grey(&|y, x| ((y * 7 + x * 3) % 32) as f64 / 31.0 + 0.1 * ((x * y) as f64).sin());
    let f = fsim_c(&a, &b).unwrap();
    assert!(!f.chromatic);
    assert!(f.value > 0.0 && f.value < 1.0);
    assert!(fsim_c(&synthetic_image(0, 32), &synthetic_image(1, 32)).unwrap().chromatic);
}

#[test]
fn evaluate_pairs_reports_identity() {
    let imgs: Vec<ImageTensor> = (0..3).map(|i| synthetic_image(i, 32)).collect();
    let fe = FeatureExtractor::test_profile(1);
    let r = evaluate_pairs(&imgs, &imgs, &fe, None).unwrap();
    assert_eq!(r.psnr, f64::INFINITY);
    assert!((r.ssim - 1.0).abs() < 1e-12 && (r.fsim_c - 1.0).abs() < 1e-12);
    assert_eq!(r.perceptual, 0.0);
    assert!(r.fid.abs() < 1e-9);
}

fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

fn stats(mean: DVector<f64>, cov: DMatrix<f64>) -> GaussianStats {
    GaussianStats { mean, cov, n: 100 }
}

#[test]
fn fid_matches_denman_beavers_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let (ca, cb) = (random_psd(8, &mut rng), random_psd(8, &mut rng));
        let ma: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mb: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let expected = common::fid_reference(&ma, &ca, &mb, &cb);
        let got = fid(&stats(DVector::from_vec(ma), ca), &stats(DVector::from_vec(mb), cb)).unwrap();
        assert!((got - expected).abs() < 1e-6 * (1.0 + expected.abs()), "{got} vs {expected}");
    }
}

#[test]
fn stats_of_a_rank_deficient_sample_still_give_finite_fid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let feats = |rng: &mut ChaCha8Rng| {
        (0..4).map(|_| (0..16).map(|_| rng.random_range(0.0..1.0)).collect()).collect::<Vec<Vec<f64>>>()
    };
    let a = gaussian_stats(&feats(&mut rng)).unwrap();
    let b = gaussian_stats(&feats(&mut rng)).unwrap();
    let v = fid(&a, &b).unwrap();
    assert!(v.is_finite() && v >= 0.0);
    assert!(fid(&a, &a).unwrap().abs() < 1e-9);
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fid_is_symmetric_and_rotation_invariant(seed in any::<u64>(), dim in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ca, cb) = (random_psd(dim, &mut rng), random_psd(dim, &mut rng));
        let ma = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
        let mb = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
        let a = stats(ma.clone(), ca.clone());
        let b = stats(mb.clone(), cb.clone());
        let ab = fid(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - fid(&b, &a).unwrap()).abs() < 1e-6 * (1.0 + ab));
        let q = random_orthogonal(dim, &mut rng);
        let ra = stats(&q * ma, &q * ca * q.transpose());
        let rb = stats(&q * mb, &q * cb * q.transpose());
        prop_assert!((fid(&ra, &rb).unwrap() - ab).abs() < 1e-6 * (1.0 + ab));
        prop_assert!(fid(&a, &a).unwrap().abs() < 1e-8);
    }

    #[test]
    fn psnr_and_ssim_are_symmetric(seed in any::<u64>()) {
        let a = synthetic_image((seed % 16) as usize, 16);
        let b = noisy(&a, 0.1, seed);
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }
}
