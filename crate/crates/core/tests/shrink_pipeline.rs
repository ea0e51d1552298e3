//! Shrinkage estimates against planted ground truth, and pipeline-level
//! invariants: bit accounting, monotonicity and the rank-zero path.

use nalgebra::DMatrix;

use eoptshrinkq::io::compressed::encode_record;
use eoptshrinkq::metrics::{relative_l2, BlockCompressor};
use eoptshrinkq::pipeline::{self, bits::Bits, factors, kivi, CompressionConfig, KiviAxis, Method};
use eoptshrinkq::rng::{self, derive_seed, SeedRole, Stream};
use eoptshrinkq::shrink::{shrink, Loss};
use eoptshrinkq::spectral;
use eoptshrinkq::stats::{ks_statistic, mean};
use eoptshrinkq::synth::{sample_block, white_noise_alpha, SpikedGroundTruth, SpikedModelSpec};
use eoptshrinkq::turboquant::TurboQuant;
use eoptshrinkq::DataBlock;

const D: usize = 128;

fn seed(root: u64, i: u64) -> u64 {
    derive_seed(root, i, SeedRole::Synthetic)
}

fn spiked(n: usize, d: usize, strengths: &[f64], s: u64) -> (DataBlock, SpikedGroundTruth) {
    sample_block(&SpikedModelSpec::white(n, d, strengths.to_vec(), s)).unwrap()
}

#[test]
fn strength_and_overlaps_recovered_at_256() {
    let mut d_hats = Vec::new();
    let mut gaps = Vec::new();
    for i in 0..50 {
        let (b, _) = spiked(256, 256, &[3.0], seed(1, i));
        let (result, _) = shrink(&b, Loss::Frobenius).unwrap();
        assert_eq!(result.rank(), 1, "seed {i}");
        let c = &result.components[0];
        d_hats.push(c.d_hat);
        gaps.push(c.a1_hat - c.a2_hat);
    }
    let d_mean = mean(&d_hats);
    assert!((d_mean - 3.0).abs() / 3.0 < 0.10, "mean strength estimate {d_mean}");
    assert!(mean(&gaps).abs() < 0.05, "mean overlap gap {}", mean(&gaps));
}

#[test]
fn pure_noise_leaves_block_untouched() {
    let mut zero = 0;
    for i in 0..100 {
        let (b, _) = spiked(D, D, &[], seed(2, i));
        let (result, residual) = shrink(&b, Loss::Frobenius).unwrap();
        if result.rank() == 0 {
            zero += 1;
            assert_eq!(residual, b);
        }
    }
    assert!(zero >= 95, "{zero}/100");
}

fn truncation(b: &DataBlock, rank: usize) -> DMatrix<f64> {
    spectral::decompose(b).unwrap().truncate(rank)
}

#[test]
fn shrinkage_beats_rank_one_truncation() {
    let wins = (0..100)
        .filter(|&i| {
            let (b, t) = spiked(D, D, &[3.0], seed(3, i));
            let (result, _) = shrink(&b, Loss::Frobenius).unwrap();
            (result.estimate() - &t.signal).norm_squared() < (truncation(&b, 1) - &t.signal).norm_squared()
        })
        .count();
    assert!(wins >= 90, "{wins}/100");
}

#[test]
fn shrinkage_dominates_oracle_rank_truncation_and_never_inflates() {
    let alpha = white_noise_alpha(1.0);
    for multiple in [1.5, 2.0, 4.0] {
        let strengths = [multiple * alpha];
        let mut shrink_loss = 0.0;
        let mut trunc_loss = 0.0;
        for i in 0..100 {
            let (b, t) = spiked(D, D, &strengths, seed(4 + multiple as u64 * 10, i));
            let (result, _) = shrink(&b, Loss::Frobenius).unwrap();
            for c in &result.components {
                assert!(c.phi_hat <= c.observed_eigenvalue.sqrt(), "{c:?}");
            }
            shrink_loss += (result.estimate() - &t.signal).norm_squared();
            trunc_loss += (truncation(&b, strengths.len()) - &t.signal).norm_squared();
        }
        assert!(shrink_loss <= trunc_loss, "{multiple} alpha: {shrink_loss} > {trunc_loss}");
    }
}

#[test]
fn residual_spectrum_matches_noise_spectrum() {
    let alpha = white_noise_alpha(1.0);
    let distances: Vec<f64> = (0..50)
        .map(|i| {
            let (b, t) = spiked(D, D, &[2.0 * alpha], seed(5, i));
            let (_, residual) = shrink(&b, Loss::Frobenius).unwrap();
            let eig = |m: &DMatrix<f64>| m.singular_values().iter().map(|s| s * s).collect::<Vec<_>>();
            ks_statistic(&eig(residual.matrix()), &eig(&t.noise))
        })
        .collect();
    assert!(mean(&distances) < 0.08, "mean KS {}", mean(&distances));
}

fn expected_bits(method: Method, b: u64, bs: u64, rank: u64, n: u64, d: u64, g: u64) -> Bits {
    let b = Bits::from_integer(b);
    let factors = Bits::new(rank * (n + d) * bs, n * d);
    match method {
        Method::TqMse => b,
        Method::TqProd => b + 1,
        Method::Svd1Tq | Method::EoptMse => b + factors,
        Method::EoptProd => b + factors + 1,
        Method::Kivi => b + Bits::new(32, g),
    }
}

#[test]
fn bit_totals_follow_the_formula_for_every_block() {
    let strengths = [9.0, 6.0, 3.0];
    for method in Method::ALL {
        for b in [1u8, 2, 4] {
            for bs in [2u8, 4, 8] {
                let cfg = CompressionConfig {
                    factor_bits: bs,
                    kivi_group: 48,
                    ..CompressionConfig::new(method, b)
                };
                for i in 0..3 {
                    let (blk, _) = spiked(96, 80, &strengths, seed(6, i));
                    let cb = pipeline::compress_block(&blk, &cfg, i).unwrap();
                    let want = expected_bits(method, b as u64, bs as u64, cb.rank() as u64, 96, 80, 48);
                    assert_eq!(cb.bits.total, want, "{method} b={b} bs={bs}");
                }
            }
        }
    }
}

#[test]
fn mean_total_tracks_mean_rank() {
    let strengths = [15.0, 13.0, 11.0, 9.0, 7.0, 5.0];
    let cfg = CompressionConfig::new(Method::EoptMse, 2);
    let mut totals = Vec::new();
    let mut ranks = Vec::new();
    for i in 0..10 {
        let (blk, _) = spiked(D, D, &strengths, seed(7, i));
        let cb = pipeline::compress_block(&blk, &cfg, i).unwrap();
        totals.push(pipeline::bits::to_f64(cb.bits.total));
        ranks.push(cb.rank() as f64);
    }
    let (t, r) = (mean(&totals), mean(&ranks));
    assert_eq!(t, 2.0 + r / 16.0);
    assert!((5.0..=6.0).contains(&r), "mean rank {r}");
    assert!((t - 2.35).abs() < 0.05, "mean total {t}");
}

#[test]
fn error_is_monotone_in_bits() {
    for method in Method::ALL {
        for i in 0..3 {
            let (blk, _) = spiked(D, D, &[8.0, 4.0], seed(8, i));
            let errors: Vec<f64> = (1..=6u8)
                .map(|b| {
                    let r = CompressionConfig::new(method, b).with_seed(i).reconstruct(&blk, 0).unwrap();
                    relative_l2(&blk, &r.block).unwrap()
                })
                .collect();
            assert!(errors.windows(2).all(|w| w[1] <= w[0]), "{method}: {errors:?}");
        }
    }
}

#[test]
fn rank_zero_path_is_plain_quantization() {
    let mut checked = 0;
    for i in 0..10 {
        let (blk, _) = spiked(D, D, &[], seed(9, i));
        let eopt = pipeline::compress_block(&blk, &CompressionConfig::new(Method::EoptMse, 3).with_seed(4), i).unwrap();
        if eopt.rank() != 0 {
            continue;
        }
        checked += 1;
        let tq = pipeline::compress_block(&blk, &CompressionConfig::new(Method::TqMse, 3).with_seed(4), i).unwrap();
        assert_eq!(encode_record(&eopt).unwrap(), encode_record(&tq).unwrap());
        assert_eq!(eopt.bits.total, Bits::from_integer(3));

        let quantizer = TurboQuant::new(D, 3, eopt.rotation_seed).unwrap();
        let decoded = pipeline::decompress_block(&eopt).unwrap();
        for t in 0..D {
            let mut qv = quantizer.encode(&blk.row(t)).unwrap();
            qv.norm = qv.norm as f32 as f64;
            assert_eq!(decoded.row(t), quantizer.decode(&qv).unwrap());
        }
    }
    assert!(checked >= 9, "only {checked} rank-zero blocks");
}

#[test]
fn compression_is_repeatable() {
    let (blk, _) = spiked(D, D, &[7.0, 3.0], 10);
    for method in Method::ALL {
        let cfg = CompressionConfig::new(method, 2).with_seed(1);
        let a = pipeline::compress_block(&blk, &cfg, 5).unwrap();
        let b = pipeline::compress_block(&blk, &cfg, 5).unwrap();
        assert_eq!(encode_record(&a).unwrap(), encode_record(&b).unwrap());
        assert_eq!(pipeline::decompress_block(&a).unwrap(), pipeline::decompress_block(&b).unwrap());
    }
}

#[test]
fn shrinkage_beats_plain_quantization_at_matched_bits() {
    let alpha = white_noise_alpha(1.0);
    let strengths: Vec<f64> = [4.0, 3.0, 2.0].iter().map(|m| m * alpha).collect();
    let wins = (0..100)
        .filter(|&i| {
            let (blk, _) = spiked(D, D, &strengths, seed(11, i));
            let l2 = |m| {
                let r = CompressionConfig::new(m, 3).with_seed(i).reconstruct(&blk, 0).unwrap();
                relative_l2(&blk, &r.block).unwrap()
            };
            l2(Method::EoptMse) < l2(Method::TqMse)
        })
        .count();
    assert!(wins >= 90, "{wins}/100");
}

#[test]
fn factor_quantization_error() {
    // Squared relative error of orthonormal factors, averaged over draws.
    for (bits, limit) in [(4u8, 0.05), (8, 0.005)] {
        let errors: Vec<f64> = (0..50)
            .map(|s| {
                let mut r = rng::stream(s, Stream::LeftVectors);
                let u = eoptshrinkq::linalg::gaussian_orthonormal(D, 5, &mut r);
                let q = factors::quantize_factor(&u, bits).dequantize();
                (&q - &u).norm_squared() / u.norm_squared()
            })
            .collect();
        assert!(mean(&errors) < limit, "b_s={bits}: {}", mean(&errors));
    }
}

#[test]
fn kivi_accounting_and_ramp() {
    let cfg = CompressionConfig {
        kivi_group: 64,
        ..CompressionConfig::new(Method::Kivi, 2)
    };
    let (blk, _) = spiked(D, D, &[], 12);
    let cb = pipeline::compress_block(&blk, &cfg, 0).unwrap();
    assert_eq!(cb.bits.total, Bits::new(5, 2));

    let ramp = DataBlock::new(DMatrix::from_fn(4, 256, |t, j| (t + 1) as f64 * j as f64 / 255.0));
    let p = kivi::kivi_compress(&ramp, 8, KiviAxis::PerToken, 64);
    let back = DataBlock::new(p.reconstruct(4, 256));
    assert!(relative_l2(&ramp, &back).unwrap() < 0.5);
}
