//! Randomized invariants over the containers and the statistics helpers.

use nalgebra::DMatrix;
use proptest::prelude::*;

use eoptshrinkq::io::{ingest, BlockFile, CompressedFile, Layout};
use eoptshrinkq::pipeline::{self, CompressionConfig, KiviAxis, Method};
use eoptshrinkq::shrink::Loss;
use eoptshrinkq::stats::Moments;
use eoptshrinkq::synth::{sample_block, SpikedModelSpec};
use eoptshrinkq::DataBlock;

fn f32_block(n: usize, d: usize, values: &[f32]) -> DataBlock {
    DataBlock::new(DMatrix::from_fn(n, d, |i, j| values[(i * d + j) % values.len()] as f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn merged_moments_equal_sequential(xs in prop::collection::vec(-1e3f64..1e3, 0..60), cut in 0usize..60) {
        let cut = cut.min(xs.len());
        let whole: Moments = xs.iter().copied().collect();
        let mut left: Moments = xs[..cut].iter().copied().collect();
        left.merge(&xs[cut..].iter().copied().collect());
        prop_assert_eq!(left.count, whole.count);
        prop_assert!((left.mean - whole.mean).abs() <= 1e-9 * (1.0 + whole.mean.abs()));
        prop_assert!((left.variance() - whole.variance()).abs() <= 1e-7 * (1.0 + whole.variance()));
    }

    #[test]
    fn ingest_export_round_trip(
        n in 1usize..6,
        d in 1usize..6,
        blocks in 1usize..4,
        extra in 0usize..5,
        values in prop::collection::vec(-1e4f32..1e4, 1..40),
        csv in any::<bool>(),
    ) {
        let layout = if csv { Layout::Csv } else { Layout::RawF32 };
        let extra = extra.min(n - 1);
        let rows: Vec<Vec<f64>> = (0..n * blocks + extra)
            .map(|t| (0..d).map(|j| values[(t * d + j) % values.len()] as f64).collect())
            .collect();
        let file = ingest::blocks_from_rows(&rows, n, d).unwrap();
        prop_assert_eq!(file.blocks.len(), blocks);
        let bytes = ingest::export_bytes(&file, layout).unwrap();
        let back = ingest::ingest_bytes(&bytes, n, d, layout).unwrap();
        prop_assert_eq!(&back, &file);
        let again = BlockFile::decode(&file.encode().unwrap()).unwrap();
        prop_assert_eq!(again, file);
    }

    #[test]
    fn compressed_container_round_trips(
        method_index in 0usize..Method::ALL.len(),
        b in 1u8..=4,
        factor_bits in 2u8..=8,
        loss in prop_oneof![Just(Loss::Frobenius), Just(Loss::Operator), Just(Loss::Nuclear)],
        per_token in any::<bool>(),
        seed in any::<u64>(),
        strength in 0.0f64..8.0,
    ) {
        let (n, d) = (24, 16);
        let cfg = CompressionConfig {
            factor_bits,
            loss,
            kivi_group: 8,
            kivi_axis: if per_token { KiviAxis::PerToken } else { KiviAxis::PerChannel },
            ..CompressionConfig::new(Method::ALL[method_index], b).with_seed(seed)
        };
        let strengths = if strength < 1.0 { vec![] } else { vec![strength] };
        let blocks: Vec<DataBlock> = (0..2)
            .map(|i| sample_block(&SpikedModelSpec::white(n, d, strengths.clone(), seed ^ i)).unwrap().0)
            .collect();
        let compressed = pipeline::compress_blocks(&blocks, &cfg, 1).unwrap();
        let file = CompressedFile { config: cfg, n, d, blocks: compressed };
        let bytes = file.encode().unwrap();
        let back = CompressedFile::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode().unwrap(), bytes);
        for (a, c) in back.blocks.iter().zip(&file.blocks) {
            prop_assert_eq!(pipeline::decompress_block(a).unwrap(), pipeline::decompress_block(c).unwrap());
        }
    }

    #[test]
    fn truncated_containers_are_rejected(cut in 0usize..200, values in prop::collection::vec(-10f32..10.0, 1..16)) {
        let file = BlockFile::new(4, 4, vec![f32_block(4, 4, &values)]).unwrap();
        let bytes = file.encode().unwrap();
        let cut = cut % bytes.len();
        prop_assert!(BlockFile::decode(&bytes[..cut]).is_err());
    }
}
