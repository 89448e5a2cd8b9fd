//! Singular-value windows of `D F^n_ω` along orbits confined to the good set.
//!
//! `cargo run --release --example svd_window [windows] [n] [beta]`

use nalgebra::DMatrix;
use torus_rds::lyapunov::{sample_confined_start, svd_window_along};
use torus_rds::noise::{CenterMode, NoiseDescriptor};
use torus_rds::{derive_substream, MapFamily, NoiseSample};

fn main() -> torus_rds::Result<()> {
    let mut args = std::env::args().skip(1);
    let windows: u64 = args.next().map_or(1000, |s| s.parse().expect("windows"));
    let n: usize = args.next().map_or(3, |s| s.parse().expect("n"));
    let beta: f64 = args.next().map_or(0.5, |s| s.parse().expect("beta"));
    let l = 1e3;
    let fam = MapFamily::coupled_standard(2, l, Some(DMatrix::zeros(2, 2)))?;
    let model = NoiseDescriptor::Rotational {
        c: None,
        centers: CenterMode::LightGrid(2),
    }
    .build(2)?;
    let bound = n as f64 * beta / 2.0 * l.ln();
    let (mut gap_ok, mut cone_ok, mut both, mut attempts) = (0u64, 0u64, 0u64, 0u64);
    let mut worst_top = f64::INFINITY;
    for w in 0..windows {
        let mut rng = derive_substream(1, w, "confined-start");
        let path: Vec<NoiseSample> = (0..n).map(|_| model.draw(&mut rng, 2)).collect();
        let (z, tries) = sample_confined_start(&fam, &model, &path, beta, &mut rng)?;
        attempts += tries;
        let win = svd_window_along(&fam, &model, &z, &path)?;
        let gap = win.log_sigma[1] >= bound && win.log_sigma[2] <= -bound;
        let cones = win.satisfies_cone_structure(0.1);
        worst_top = worst_top.min(win.log_sigma[1]);
        gap_ok += gap as u64;
        cone_ok += cones as u64;
        both += (gap && cones) as u64;
    }
    let pct = |k: u64| 100.0 * k as f64 / windows as f64;
    println!("noise {}", model.label());
    println!("n = {n}, beta = {beta}, bound (n beta / 2) log L = {bound:.4}");
    println!("acceptance rate {:.4}", windows as f64 / attempts as f64);
    println!(
        "gap holds in {:.1}%, cones in {:.1}%, both in {:.1}%",
        pct(gap_ok),
        pct(cone_ok),
        pct(both)
    );
    println!("smallest log sigma_N = {worst_top:.4}");
    Ok(())
}
