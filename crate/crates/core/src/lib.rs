//! g-expectations of terminal claims, their capacities and Choquet
//! integrals, computed with an explicit finite-difference PDE solver or a
//! least-squares Monte Carlo BSDE solver.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common types.

pub mod choquet;
pub mod claims;
pub mod error;
pub mod expectation;
pub mod generators;
pub mod linalg;
pub mod lsmc;
pub mod pde;
pub mod quadrature;
pub mod sampling;
pub mod scalar;
pub mod sde;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Claim64 = claims::TerminalClaim<f64>;
pub type Claim32 = claims::TerminalClaim<f32>;
pub type Generator64 = generators::GeneratorSpec<f64>;
pub type Generator32 = generators::GeneratorSpec<f32>;
pub type Model64 = expectation::Model<f64>;
pub type Model32 = expectation::Model<f32>;
pub type Engine64 = expectation::Engine<f64>;
pub type Engine32 = expectation::Engine<f32>;
pub type Coefficients64 = sde::CoefficientField<f64>;
pub type Coefficients32 = sde::CoefficientField<f32>;
pub type Ensemble64 = sde::PathEnsemble<f64>;
pub type Ensemble32 = sde::PathEnsemble<f32>;

#[cfg(test)]
mod single_precision {
    use super::*;
    use crate::choquet::{choquet_with, QuadratureRule};
    use crate::expectation::{BackendSpec, LsmcBackend, PdeBackend};

    #[test]
    fn f32_pipeline_matches_f64() {
        let model = Model32::brownian(1.0, 50).unwrap();
        let g = Generator32::abs(0.5).unwrap();
        let claim = Claim32::tanh(1.0, 0.0, 1.0, 0.0);
        let pde = Engine32::new(model.clone(), BackendSpec::Pde(PdeBackend { nx: 201, ..Default::default() }));
        let e = pde.g_expectation(&g, &claim).unwrap();
        let e64 = Engine64::new(Model64::brownian(1.0, 50).unwrap(), pde.backend)
            .g_expectation(&Generator64::abs(0.5).unwrap(), &Claim64::tanh(1.0, 0.0, 1.0, 0.0))
            .unwrap();
        assert!((e.value as f64 - e64.value).abs() < 1e-4, "{} vs {}", e.value, e64.value);

        let step = Claim32::indicator(0.0).scaled(0.5).plus(Claim32::indicator(0.5).scaled(0.5));
        let c = choquet_with(&pde, &g, &step, QuadratureRule::LevelAdapted).unwrap();
        let direct = pde.g_expectation(&g, &step).unwrap();
        assert!((c.value - direct.value).abs() <= c.quadrature_error + direct.error_estimate + 1e-3);

        let lsmc = Engine32::new(model, BackendSpec::Lsmc(LsmcBackend { n_paths: 5000, seed: 3, ..Default::default() }));
        let l = lsmc.g_expectation(&g, &claim).unwrap();
        assert!((l.value - e.value).abs() <= l.error_estimate + 0.02);
    }
}
