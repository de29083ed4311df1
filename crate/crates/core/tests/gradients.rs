//! Analytic gradients against central finite differences.

mod common;

use graphpmu_core::graphenc::GraphMode;
use graphpmu_core::temporal::DecoderSeed;

#[test]
fn every_op_matches_finite_differences() {
    for (name, err, tol) in common::op_gradient_errors() {
        assert!(err < tol, "{name}: relative error {err:e} exceeds {tol:e}");
    }
}

#[test]
fn autoencoder_gradient_matches_finite_differences() {
    for decoder in [DecoderSeed::Tiled, DecoderSeed::PerStep] {
        let err = common::aed_gradient_error(decoder);
        assert!(err < 1e-3, "{decoder:?}: {err:e}");
    }
}

#[test]
fn graph_encoder_gradient_matches_finite_differences() {
    for mode in [GraphMode::NodeGraph, GraphMode::GraphOnly] {
        let err = common::gcn_gradient_error(mode);
        assert!(err < 1e-3, "{mode:?}: {err:e}");
    }
}
