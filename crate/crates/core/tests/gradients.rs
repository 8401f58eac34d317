mod common;

use common::{worst_relative_error, KINK_FREE_SEED};
use isr_core::neural::{ConvFeatureEncoder, EncoderConfig, FeatureEncoder, LossKind, LossRegion};

#[test]
fn mse_gradients_match_finite_differences() {
    let worst = worst_relative_error(LossKind::Mse, LossRegion::Full, KINK_FREE_SEED, 1e-4);
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn perceptual_gradients_match_finite_differences() {
    let worst = worst_relative_error(LossKind::Perceptual, LossRegion::Full, KINK_FREE_SEED, 1e-4);
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn null_region_gradients_match_finite_differences() {
    let worst = worst_relative_error(LossKind::Mse, LossRegion::Nulls, KINK_FREE_SEED, 1e-4);
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn gradients_converge_for_other_seeds_with_finer_steps() {
    for seed in [5, 6, 7] {
        for (kind, region) in [
            (LossKind::Mse, LossRegion::Full),
            (LossKind::Perceptual, LossRegion::Full),
            (LossKind::Mse, LossRegion::Nulls),
        ] {
            let worst = worst_relative_error(kind, region, seed, 1e-6);
            assert!(worst < 1e-4, "seed {seed} {kind:?}/{region:?}: {worst:e}");
        }
    }
}

#[test]
fn encoder_features_are_frozen_by_seed() {
    let a = ConvFeatureEncoder::new(EncoderConfig::default(), 9).unwrap();
    let b = ConvFeatureEncoder::new(EncoderConfig::default(), 9).unwrap();
    let x: Vec<f64> = (0..400).map(|i| (i as f64 * 0.1).sin()).collect();
    assert_eq!(a.encode(&x).unwrap(), b.encode(&x).unwrap());
}
