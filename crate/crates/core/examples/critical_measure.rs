//! Measure of the critical set `B_beta` as `L` grows, and the product-set
//! area formula it rests on.
//!
//! `cargo run --release --example critical_measure`

use torus_rds::diagnostics::{estimate_critical_measure, mc_product_set, s_n_closed_form};
use torus_rds::stats::linear_fit;
use torus_rds::MapFamily;

fn main() -> torus_rds::Result<()> {
    let beta = 0.1;
    let samples = 1_000_000;
    let mut logs = (Vec::new(), Vec::new());
    for l in [1e3, 1e4, 1e5] {
        let fam = MapFamily::coupled_standard(2, l, None)?;
        let m = estimate_critical_measure(&fam, beta, samples, 5)?;
        println!(
            "L = {l:.0e}: Leb(B_beta) = {:.4e} ± {:.1e}",
            m.value, m.stderr
        );
        logs.0.push(l.ln());
        logs.1.push(m.value.ln());
    }
    let fit = linear_fit(&logs.0, &logs.1);
    println!(
        "fitted exponent {:.3} ± {:.3} (threshold -(1 - 3 beta) + 0.15 = {:.2})",
        fit.slope,
        fit.slope_stderr,
        -(1.0 - 3.0 * beta) + 0.15
    );

    println!("\nLeb{{x in [0,1]^N : prod x_i <= delta}}");
    for n in 1..=3 {
        for delta in [0.3, 0.05, 0.01] {
            let exact = s_n_closed_form(n, delta)?;
            let mc = mc_product_set(n, delta, samples, 9)?;
            println!(
                "N = {n}, delta = {delta:<4}: closed form {exact:.6}, Monte Carlo {:.6} ± {:.1e}",
                mc.value, mc.stderr
            );
        }
    }
    Ok(())
}
