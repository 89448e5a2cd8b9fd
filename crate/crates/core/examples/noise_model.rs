//! The rotational noise model on `T^2`: calibration of the parameter radius,
//! the cone and norm conditions, locality and the spread of one-step images.
//!
//! `cargo run --release --example noise_model`

use torus_rds::grassmann::haar_random_subspace;
use torus_rds::noise::{
    calibrate_c, check_cone_condition, check_nd_spread, CALIBRATION_ITERATIONS, CALIBRATION_TRIALS,
};
use torus_rds::{derive_stream, NoiseModel, RotationalNoise, TorusPoint};

fn main() -> torus_rds::Result<()> {
    let base = RotationalNoise::faithful(2, 0.0)?;
    println!("faithful grid: {} centers", base.centers().len());
    let covered = base.covering_holds(&mut derive_stream(1, 0), 10_000);
    println!("covering by 1/20-balls on 10^4 points: {covered}");

    let cal = calibrate_c(&base, CALIBRATION_TRIALS, CALIBRATION_ITERATIONS)?;
    println!("calibrated c_max = {:.6}", cal.c_max);
    let noise = base.with_c(cal.c_max);

    let mut rng = derive_stream(2, 0);
    let z = TorusPoint::new(vec![0.3, 0.6])?;
    let s = noise.sample(&mut rng);
    println!(
        "locality witness for z = (0.3, 0.6): center {:?}",
        noise.locality_witness(&z, &s)
    );

    let model = NoiseModel::Rotational(noise);
    let rep = check_cone_condition(&model, 1, 100_000, &mut rng)?;
    println!(
        "cone condition on 10^5 samples: slope {:.4} (<= {}), ||D R|| {:.4}, ||D R^-1|| {:.4} (<= {}), |det - 1| {:.1e}, pass {}",
        rep.max_output_slope,
        rep.slope_bound,
        rep.max_norm,
        rep.max_inverse_norm,
        rep.norm_bound,
        rep.max_det_deviation,
        rep.passed
    );

    let e = haar_random_subspace(&mut rng, 2, 1);
    for (name, m) in [("rotational", model), ("shift", NoiseModel::shift(0.05)?)] {
        let spread = check_nd_spread(&m, &z, &e, 100_000, 16, &mut rng)?;
        let degenerate: Vec<bool> = spread
            .subspace_marginals
            .iter()
            .map(|m| m.degenerate)
            .collect();
        println!(
            "{name}: point-marginal bins occupied {}..{}, subspace marginals degenerate {degenerate:?}",
            spread.min_occupancy, spread.max_occupancy
        );
    }
    Ok(())
}
