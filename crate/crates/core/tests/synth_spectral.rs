//! Monte Carlo checks of the spiked-model sampler and the spectral
//! estimators against closed-form white-noise oracles.

use nalgebra::{DMatrix, SymmetricEigen};

use eoptshrinkq::rng::{derive_seed, SeedRole};
use eoptshrinkq::spectral::{self, NoiseSpectrumEstimate};
use eoptshrinkq::stats::{ks_p_value, ks_statistic, mean};
use eoptshrinkq::synth::{
    mp_bulk_edge, mp_stieltjes, sample_block, white_noise_alpha, CovarianceSpec, SpikedModelSpec,
};
use eoptshrinkq::DataBlock;

const D: usize = 128;

fn seed(root: u64, i: u64) -> u64 {
    derive_seed(root, i, SeedRole::Synthetic)
}

fn white(strengths: &[f64], s: u64) -> DataBlock {
    sample_block(&SpikedModelSpec::white(D, D, strengths.to_vec(), s)).unwrap().0
}

fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.singular_values().iter().map(|s| s * s).collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

#[test]
fn pure_noise_top_eigenvalue_sits_at_edge() {
    // At d = 128 the top eigenvalue sits below the limiting edge by the
    // Tracy-Widom mean shift, 2^{4/3} d^{-2/3} * 1.2065, with spread
    // 2^{4/3} d^{-2/3} * 1.268.
    let scale = 2f64.powf(4.0 / 3.0) * (D as f64).powf(-2.0 / 3.0);
    let center = mp_bulk_edge(1.0) - 1.2065 * scale;
    let tops: Vec<f64> = (0..200).map(|i| eigenvalues(white(&[], seed(1, i)).matrix())[0]).collect();
    let inside = tops.iter().filter(|&&t| (t - center).abs() <= 0.3).count();
    assert!(inside >= 190, "{inside}/200 top eigenvalues within 0.3 of {center:.4}");
    let m = mean(&tops);
    assert!((m - center).abs() < 3.0 * 1.268 * scale / (200f64).sqrt(), "mean {m:.4}, center {center:.4}");
}

#[test]
fn random_block_top_singular_value_near_two() {
    let inside = (0..100)
        .filter(|&i| {
            let s = spectral::decompose(&white(&[], seed(2, i))).unwrap().singular_values[0];
            (1.9..=2.1).contains(&s)
        })
        .count();
    assert!(inside >= 90, "{inside}/100 in [1.9, 2.1]");
}

#[test]
fn sub_threshold_spike_is_invisible() {
    let alpha = white_noise_alpha(1.0);
    let tops = |strengths: &[f64], root| -> Vec<f64> {
        (0..200).map(|i| eigenvalues(white(strengths, seed(root, i)).matrix())[0]).collect()
    };
    let noise = tops(&[], 3);
    let spiked = tops(&[0.5 * alpha], 4);
    let stat = ks_statistic(&noise, &spiked);
    let p = ks_p_value(stat, noise.len(), spiked.len());
    assert!(p > 0.01, "KS {stat:.4}, p {p:.4}");
}

#[test]
fn super_threshold_spike_gives_one_outlier() {
    let alpha = white_noise_alpha(1.0);
    let threshold = mp_bulk_edge(1.0) * (1.0 + (D as f64).powf(-1.0 / 3.0));
    let exact = (0..200)
        .filter(|&i| {
            let e = eigenvalues(white(&[2.0 * alpha], seed(5, i)).matrix());
            e.iter().filter(|&&l| l > threshold).count() == 1
        })
        .count();
    assert!(exact >= 190, "{exact}/200 with exactly one outlier");
}

#[test]
fn spike_of_three_lands_at_predicted_location() {
    // White square noise: a spike of strength s sits at (1 + s^2)^2 / s^2.
    let s: f64 = 3.0;
    let predicted = ((1.0 + s * s).powi(2) / (s * s)).sqrt();
    let tops: Vec<f64> = (0..100)
        .map(|i| spectral::decompose(&white(&[s], seed(6, i))).unwrap().singular_values[0])
        .collect();
    let m = mean(&tops);
    assert!(predicted > 2.0);
    assert!((m - predicted).abs() / predicted < 0.02, "mean top {m:.4}, predicted {predicted:.4}");
}

#[test]
fn noise_energy_tracks_covariance_traces() {
    // Entries of the core matrix have variance 1/d, so E||Z||^2 = tr(A) tr(B) / d.
    let (n, d) = (D, D);
    let spec = SpikedModelSpec {
        noise_row_cov: CovarianceSpec::toeplitz(0.4, n),
        noise_col_cov: CovarianceSpec::diagonal((0..d).map(|j| 0.5 + j as f64 / d as f64).collect()),
        ..SpikedModelSpec::white(n, d, vec![], 0)
    };
    let tr_a = n as f64;
    let tr_b: f64 = (0..d).map(|j| 0.5 + j as f64 / d as f64).sum();
    let expected = tr_a * tr_b / d as f64 / (n * d) as f64;
    let energies: Vec<f64> = (0..50)
        .map(|i| {
            let (_, t) = sample_block(&spec.with_seed(seed(7, i))).unwrap();
            t.noise.norm_squared() / (n * d) as f64
        })
        .collect();
    let m = mean(&energies);
    assert!((m - expected).abs() / expected < 0.02, "mean {m:.6e}, expected {expected:.6e}");
}

#[test]
fn sampler_is_deterministic_and_pure_noise_has_zero_signal() {
    let spec = SpikedModelSpec::white(D, D, vec![], 77);
    let (a, ta) = sample_block(&spec).unwrap();
    let (b, _) = sample_block(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.signal.norm(), 0.0);
    assert_eq!(a.matrix(), &ta.noise);
}

#[test]
fn bulk_edge_estimate_on_pure_noise() {
    let edges: Vec<f64> = (0..100)
        .map(|i| {
            let sd = spectral::decompose(&white(&[], seed(8, i))).unwrap();
            spectral::estimate_bulk_edge(&sd).unwrap().lambda_plus_hat
        })
        .collect();
    let m = mean(&edges);
    assert!((m - 4.0).abs() <= 0.25, "mean edge {m}");
}

#[test]
fn rank_recovery_and_pure_noise_rank() {
    let alpha = white_noise_alpha(1.0);
    let strengths: Vec<f64> = [5.0, 4.0, 3.0, 2.5, 2.0].iter().map(|m| m * alpha).collect();
    for r in [1usize, 3, 5] {
        let hits = (0..200)
            .filter(|&i| {
                let sd = spectral::decompose(&white(&strengths[..r], seed(9 + r as u64, i))).unwrap();
                spectral::estimate_bulk_edge(&sd).unwrap().r_plus_hat == r
            })
            .count();
        assert!(hits >= 190, "rank {r}: {hits}/200");
    }
    let zero = (0..200)
        .filter(|&i| {
            let sd = spectral::decompose(&white(&[], seed(20, i))).unwrap();
            spectral::estimate_bulk_edge(&sd).unwrap().r_plus_hat == 0
        })
        .count();
    assert!(zero >= 190, "pure noise: {zero}/200");
}

#[test]
fn imputed_spectrum_matches_fresh_noise() {
    let distances: Vec<f64> = (0..50)
        .map(|i| {
            let a = spectral::analyze(&white(&[3.0], seed(21, i))).unwrap();
            let fresh = eigenvalues(white(&[], seed(22, i)).matrix());
            ks_statistic(&a.noise.eigenvalues, &fresh)
        })
        .collect();
    let m = mean(&distances);
    assert!(m < 0.08, "mean KS {m:.4}");
}

#[test]
fn d_transform_is_positive_and_decreasing_above_bulk() {
    for i in 0..5 {
        let a = spectral::analyze(&white(&[4.0, 2.5], seed(23, i))).unwrap();
        let start = a.noise.guard();
        let mut last = f64::INFINITY;
        for step in 0..200 {
            let z = start * (1.0 + 0.01 * step as f64);
            let t = a.noise.d_transform_at(z).unwrap();
            assert!(t.t_value > 0.0 && t.t_value < last, "z {z}: {t:?}");
            assert!(t.t_prime < 0.0);
            last = t.t_value;
        }
    }
}

#[test]
fn empirical_transform_matches_white_noise_limit() {
    // 512 x 2048 pure noise, beta = 1/4: edge 2.25.
    let (n, d) = (512, 2048);
    let beta = n as f64 / d as f64;
    let (b, _) = sample_block(&SpikedModelSpec::white(n, d, vec![], 24)).unwrap();
    let gram = b.matrix() * b.matrix().transpose();
    let mut e: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    let noise = NoiseSpectrumEstimate { eigenvalues: e, n, d };

    let edge = mp_bulk_edge(beta);
    assert!((edge - 2.25).abs() < 1e-12);
    for z in [2.5, 3.0, 4.0, 6.0] {
        let p = noise.d_transform_at(z).unwrap();
        let (m1, m2) = mp_stieltjes(beta, z);
        assert!((p.m1 - m1).abs() / m1.abs() < 0.01, "z {z}: m1 {} vs {m1}", p.m1);
        assert!((p.m2 - m2).abs() / m2.abs() < 0.01, "z {z}: m2 {} vs {m2}", p.m2);
    }
    // Near the edge T(z) ~ T(edge) - c1 sqrt(z - edge) + c2 (z - edge). Fit
    // that profile to the empirical transform away from the sample's top
    // eigenvalue and extrapolate to the edge.
    let offsets: Vec<f64> = (0..26).map(|i| 0.1 + 0.02 * i as f64).collect();
    let design = DMatrix::from_fn(offsets.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => offsets[i].sqrt(),
        _ => offsets[i],
    });
    let target = nalgebra::DVector::from_iterator(
        offsets.len(),
        offsets.iter().map(|o| noise.d_transform_at(edge + o).unwrap().t_value),
    );
    let coef = (design.transpose() * &design)
        .lu()
        .solve(&(design.transpose() * target))
        .unwrap();
    let empirical_alpha = 1.0 / coef[0].sqrt();
    let alpha = white_noise_alpha(beta);
    assert!((alpha - 0.25f64.powf(0.25)).abs() < 1e-12);
    assert!((empirical_alpha - alpha).abs() / alpha < 0.03, "{empirical_alpha} vs {alpha}");
}

#[test]
fn padding_identity_with_tall_block() {
    let (b, _) = sample_block(&SpikedModelSpec::white(2 * 64, 64, vec![3.0], 25)).unwrap();
    let a = spectral::analyze(&b).unwrap();
    let (n, d) = (a.noise.n as f64, a.noise.d as f64);
    for z in [a.noise.guard(), 10.0, 50.0] {
        let p = a.noise.d_transform_at(z).unwrap();
        let lhs = n * p.m1 - d * p.m2;
        let rhs = (n - d) * (-1.0 / z);
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "z {z}: {lhs} vs {rhs}");
    }
}
