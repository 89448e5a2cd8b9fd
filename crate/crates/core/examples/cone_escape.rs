//! Probability that a Haar plane leaves the horizontal cone `C^x_2` after `n`
//! steps on orbits confined to the good set, against `L^{-beta n}`.
//!
//! `cargo run --release --example cone_escape [trials]`

use std::time::Instant;

use torus_rds::diagnostics::cone_escape_fraction;
use torus_rds::noise::{CenterMode, NoiseDescriptor};
use torus_rds::MapFamily;

fn main() -> torus_rds::Result<()> {
    let trials: u64 = std::env::args()
        .nth(1)
        .map_or(20_000, |s| s.parse().expect("trials"));
    let (l, beta) = (1e3, 0.5);
    for (dim, centers) in [(1, CenterMode::Faithful), (2, CenterMode::LightGrid(2))] {
        let fam = MapFamily::coupled_standard(dim, l, None)?;
        let model = NoiseDescriptor::Rotational { c: None, centers }.build(dim)?;
        for n in 1..=2 {
            let t = Instant::now();
            let rep = cone_escape_fraction(&fam, &model, beta, n, trials, 3)?;
            println!(
                "N = {dim}, n = {n}: escape {:.3e} ± {:.1e}, 10 L^(-beta n) = {:.3e}, acceptance {:.3} ({:.2?})",
                rep.estimate.value,
                rep.estimate.stderr,
                10.0 * rep.bound,
                rep.acceptance_rate,
                t.elapsed()
            );
        }
    }
    Ok(())
}
