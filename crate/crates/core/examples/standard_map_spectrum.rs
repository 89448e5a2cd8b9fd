//! Lyapunov spectrum of the noisy standard map at L = 10^3.
//!
//! Run with `cargo run --release --example standard_map_spectrum [n_steps]`.

use std::time::Instant;

use torus_rds::noise::{CenterMode, NoiseDescriptor};
use torus_rds::{lyapunov, MapFamily, RunOptions, TorusPoint};

fn main() -> torus_rds::Result<()> {
    let n_steps: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("n_steps must be an integer"))
        .unwrap_or(100_000);
    let l = 1e3;
    let fam = MapFamily::coupled_standard(1, l, None)?;
    let t = Instant::now();
    let model = NoiseDescriptor::Rotational {
        c: None,
        centers: CenterMode::Faithful,
    }
    .build(1)?;
    println!(
        "noise: {} (calibrated in {:.2?})",
        model.label(),
        t.elapsed()
    );

    let t = Instant::now();
    let z0 = TorusPoint::new(vec![0.123, 0.456])?;
    let rep = lyapunov::qr_spectrum(&z0, &fam, &model, n_steps, 7, &RunOptions::default())?;
    println!("n = {n_steps}, elapsed {:.2?}", t.elapsed());
    for (i, (lam, se)) in rep.exponents.iter().zip(&rep.stderr).enumerate() {
        println!("lambda_{} = {lam:+.5} ± {se:.5}", i + 1);
    }
    println!(
        "log L = {:.5}, log 2πL = {:.5}",
        l.ln(),
        (2.0 * std::f64::consts::PI * l).ln()
    );
    println!(
        "sum = {:+.3e}, leading plane in C^x_2 for {:.1}% of steps",
        rep.sum(),
        100.0 * rep.cone_fraction
    );
    Ok(())
}
