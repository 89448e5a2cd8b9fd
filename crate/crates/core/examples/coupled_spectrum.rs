//! Four-dimensional spectrum of two coupled standard maps with light noise,
//! cross-checked against the Grassmannian volume estimator.
//!
//! `cargo run --release --example coupled_spectrum [L] [n_steps]`

use nalgebra::DMatrix;
use torus_rds::lyapunov::{grassmann_sum_estimator, haar_initial_plane, qr_spectrum};
use torus_rds::noise::{CenterMode, NoiseDescriptor};
use torus_rds::{MapFamily, RunOptions, TorusPoint};

fn main() -> torus_rds::Result<()> {
    let mut args = std::env::args().skip(1);
    let l: f64 = args.next().map_or(1e4, |s| s.parse().expect("L"));
    let n_steps: u64 = args.next().map_or(50_000, |s| s.parse().expect("n_steps"));
    let mu = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let fam = MapFamily::coupled_standard(2, l, Some(mu))?;
    let model = NoiseDescriptor::Rotational {
        c: None,
        centers: CenterMode::LightGrid(2),
    }
    .build(2)?;
    println!("family L = {l}, noise {}", model.label());

    let z0 = TorusPoint::new(vec![0.11, 0.37, 0.52, 0.83])?;
    let opts = RunOptions::default();
    let rep = qr_spectrum(&z0, &fam, &model, n_steps, 11, &opts)?;
    for (i, (lam, se)) in rep.exponents.iter().zip(&rep.stderr).enumerate() {
        println!("lambda_{} = {lam:+.4} ± {se:.4}", i + 1);
    }
    let min_abs = rep
        .exponents
        .iter()
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min);
    println!("min |lambda_i| / log L = {:.3}", min_abs / l.ln());
    println!("pairing lambda_i + lambda_(2N+1-i) = {:?}", rep.pairing());

    let e0 = haar_initial_plane(11, 0, 2);
    let est = grassmann_sum_estimator(&z0, &e0, &fam, &model, n_steps, 11, &opts)?;
    println!(
        "volume estimator {:.4} ± {:.4} vs lambda_1 + lambda_2 = {:.4}",
        est.value,
        est.stderr,
        rep.exponents[0] + rep.exponents[1]
    );
    Ok(())
}
