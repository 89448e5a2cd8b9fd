//! Whether `det D psi` and its gradient can vanish together, for the
//! uncoupled sine kick and the strong-coupling kick.
//!
//! `cargo run --release --example transversality [grid]`

use torus_rds::diagnostics::{
    strong_coupling_system_min, strong_coupling_system_residual, transversality_residual,
};
use torus_rds::torus::{SineKick, StrongCouplingPsi};

fn main() -> torus_rds::Result<()> {
    let grid: usize = std::env::args()
        .nth(1)
        .map_or(512, |s| s.parse().expect("grid"));

    let sine = transversality_residual(&SineKick { n: 2 }, grid, 50)?;
    println!(
        "uncoupled sine: min |det| + |grad det| = {:.3e} at {:?}",
        sine.min_residual, sine.argmin
    );
    let strong = transversality_residual(&StrongCouplingPsi, grid, 50)?;
    println!(
        "strong coupling: min residual = {:.4e} (|det| {:.3e}, |grad| {:.3e}) at {:?}",
        strong.min_residual, strong.det_term, strong.grad_term, strong.argmin
    );

    let (m, at) = strong_coupling_system_min(4 * grid);
    println!(
        "three-equation system: min max-abs residual = {m:.4e} at {at:?}, residuals {:?}",
        strong_coupling_system_residual(at[0], at[1])
    );
    Ok(())
}
