//! High-resolution oracle for the UNEQUAL margins of the verification
//! matrix. Prints the `margins.rs` table to stdout:
//!
//! cargo run --release -p gexpect-core --example oracle_margins > crates/core/src/verify/margins.rs
//!
//! Each margin is `|E_g − C_g| − (err_E + err_C)` from a fine PDE grid and
//! 2001 thresholds, a lower bound on the true gap. A margin is only issued
//! when it exceeds the oracle's own error: a smaller one could not be
//! resolved by any cell coarser than the oracle.

use std::time::Instant;

use gexpect::choquet::{choquet_with, QuadratureRule};
use gexpect::claims::TerminalClaim;
use gexpect::expectation::{BackendSpec, Engine, Model, PdeBackend};
use gexpect::generators::GeneratorSpec;

const K: usize = 2001;
const NX_SMOOTH: usize = 1201;
const NX_JUMP: usize = 6401;

fn main() {
    let model = Model::<f64>::brownian(1.0, 100).unwrap();
    let family = TerminalClaim::indicator(0.0).scaled(0.5).plus(TerminalClaim::interval_indicator(0.0, 0.5).scaled(0.5));
    let cells: Vec<(GeneratorSpec<f64>, TerminalClaim<f64>)> = vec![
        (GeneratorSpec::smooth_nonhom(1.0).unwrap(), TerminalClaim::identity_clipped(6.0)),
        (GeneratorSpec::abs(0.5).unwrap(), TerminalClaim::abs_value_clipped(6.0)),
        (GeneratorSpec::abs(0.5).unwrap(), TerminalClaim::two_bump_default()),
        (GeneratorSpec::pos_part(0.5).unwrap(), TerminalClaim::two_bump_default()),
        (GeneratorSpec::smooth_nonhom(1.0).unwrap(), TerminalClaim::two_bump_default()),
        (GeneratorSpec::abs(0.5).unwrap(), family),
    ];

    println!("// Generated by `cargo run --release -p gexpect-core --example oracle_margins`.");
    println!("// Do not edit by hand; rerun the oracle instead.");
    println!();
    println!("use super::FrozenMargin;");
    println!();
    println!("pub const FROZEN_MARGINS: &[FrozenMargin] = &[");
    for (g, claim) in cells {
        let started = Instant::now();
        let jump = !claim.is_continuous();
        let nx = if jump { NX_JUMP } else { NX_SMOOTH };
        let probe = Engine::new(model.clone(), BackendSpec::Pde(PdeBackend { nx, ..Default::default() }));
        let dx = probe.pde_grid(&g).unwrap().dx();
        let eps = if jump { dx } else { 2.0 * dx };
        let backend = BackendSpec::Pde(PdeBackend { nx, eps: Some(eps), ..Default::default() });
        let engine = Engine::new(model.clone(), backend);
        let e = engine.g_expectation(&g, &claim).unwrap();
        let c = choquet_with(&engine, &g, &claim, QuadratureRule::Uniform { count: K }).unwrap();
        let gap = (e.value - c.value).abs();
        let combined = e.error_estimate + c.quadrature_error;
        let margin = gap - combined;
        eprintln!("{} {}: gap {gap:.6} combined {combined:.6} ({:?})", g.name(), claim.id(), started.elapsed());
        println!("    FrozenMargin {{");
        println!("        generator: {:?},", g.name());
        println!("        claim: {:?},", claim.id());
        println!("        model: {:?},", model.id());
        if margin > combined {
            println!("        margin: Some({margin:e}),");
        } else {
            println!("        margin: None,");
        }
        println!("        oracle_e: {:e},", e.value);
        println!("        oracle_c: {:e},", c.value);
        println!("        oracle_combined_err: {combined:e},");
        println!("        oracle: \"pde nx={nx} eps={eps:.3e} uniform K={K}\",");
        println!("    }},");
    }
    println!("];");
}
