//! Principal angles, Hausdorff and geodesic distances between Haar-random
//! planes in `Gr_k(R^m)`.
//!
//! `cargo run --release --example grassmann_metrics [m] [k] [pairs]`

use std::f64::consts::FRAC_2_PI;

use torus_rds::derive_stream;
use torus_rds::grassmann::{d_geodesic, d_hausdorff, haar_random_subspace, principal_angles};

fn main() -> torus_rds::Result<()> {
    let mut args = std::env::args().skip(1);
    let m: usize = args.next().map_or(4, |s| s.parse().expect("m"));
    let k: usize = args.next().map_or(2, |s| s.parse().expect("k"));
    let pairs: u64 = args.next().map_or(10_000, |s| s.parse().expect("pairs"));
    let mut rng = derive_stream(8, 0);
    let mut geo_lower = 0u64;
    let mut angle_lower = 0u64;
    let mut upper = 0u64;
    let mut worst_ratio = f64::INFINITY;
    for _ in 0..pairs {
        let e = haar_random_subspace(&mut rng, m, k);
        let f = haar_random_subspace(&mut rng, m, k);
        let psi = principal_angles(&e, &f)?;
        let dh = d_hausdorff(&e, &f)?;
        let dg = d_geodesic(&e, &f)?;
        geo_lower += (FRAC_2_PI * dg > dh) as u64;
        angle_lower += (FRAC_2_PI * psi.largest() > dh) as u64;
        upper += (dh > dg) as u64;
        worst_ratio = worst_ratio.min(dh / dg);
    }
    println!("{pairs} Haar pairs in Gr_{k}(R^{m})");
    println!("(2/pi) d_geo > d_H in {geo_lower} pairs");
    println!("(2/pi) psi_max > d_H in {angle_lower} pairs");
    println!("d_H > d_geo in {upper} pairs");
    println!(
        "min d_H / d_geo = {worst_ratio:.4}, 2/pi = {FRAC_2_PI:.4}, 2/(pi sqrt k) = {:.4}",
        FRAC_2_PI / (k as f64).sqrt()
    );
    Ok(())
}
