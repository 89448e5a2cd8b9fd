//! Monte Carlo and closed-form checks of the quantitative estimates: the
//! critical-set measure, the product-set area formula, cone escape under
//! conditioning on `G^n_β`, transversality of `det Dψ`, and uniformity of the
//! pushed-forward Lebesgue measure.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{cone_membership, Axis};
use crate::lyapunov::{haar_initial_plane, sample_confined_start, TrajectoryState};
use crate::noise::{NoiseModel, NoiseSample};
use crate::stats::{binomial_stderr, ks_critical, ks_uniform};
use crate::stream::{derive_stream, derive_substream};
use crate::torus::{MapFamily, SmoothMap, TorusPoint};

/// Samples per independent Monte Carlo chunk.
const CHUNK: u64 = 1 << 16;

/// A Monte Carlo proportion with its binomial standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub description: String,
}

impl MeasureEstimate {
    fn from_count(hits: u64, n: u64, description: String) -> Self {
        let value = hits as f64 / n as f64;
        Self {
            value,
            stderr: binomial_stderr(value, n),
            n_samples: n,
            description,
        }
    }

    /// `|value − target| ≤ k · stderr`, with a floor for zero-variance cases.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        let tol = (k * self.stderr).max(k / self.n_samples as f64);
        (self.value - target).abs() <= tol
    }
}

/// Count hits of `hit` over `n` samples drawn in fixed-size chunks, each from
/// its own substream; order-independent by construction.
fn chunked_count<F>(seed: u64, purpose: &str, n: u64, hit: F) -> Result<u64>
where
    F: Fn(&mut crate::stream::Stream) -> Result<bool> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let counts: Vec<Result<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_substream(seed, c, purpose);
            let len = CHUNK.min(n - c * CHUNK);
            let mut hits = 0;
            for _ in 0..len {
                hits += hit(&mut rng)? as u64;
            }
            Ok(hits)
        })
        .collect();
    counts.into_iter().sum()
}

/// `Leb(B_β)` by uniform sampling of `x ∈ T^N`.
pub fn estimate_critical_measure(
    fam: &MapFamily,
    beta: f64,
    n_samples: u64,
    seed: u64,
) -> Result<MeasureEstimate> {
    let threshold = fam.critical_threshold(beta)?;
    let n = fam.n();
    let hits = chunked_count(seed, "critical-measure", n_samples, |rng| {
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        Ok(fam.jac_f(&x)?.determinant().abs() <= threshold)
    })?;
    Ok(MeasureEstimate::from_count(
        hits,
        n_samples,
        format!(
            "Leb(B_beta), beta = {beta}, L = {}",
            fam.l().unwrap_or(f64::NAN)
        ),
    ))
}

/// `Leb{θ : |a + b cos θ| ≤ t}` for `θ` uniform on the circle, `b > 0`.
pub fn cosine_band_measure(a: f64, b: f64, t: f64) -> f64 {
    let lo = ((-t - a) / b).clamp(-1.0, 1.0);
    let hi = ((t - a) / b).clamp(-1.0, 1.0);
    (lo.acos() - hi.acos()) / std::f64::consts::PI
}

/// `Leb S_N(δ) = δ Σ_{i<N} (−log δ)^i / i!` for `S_N(δ) = {Π x_i ≤ δ} ⊂ [0,1]^N`.
pub fn s_n_closed_form(n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!(
            "delta must lie in (0, 1] (got {delta})"
        )));
    }
    let l = -delta.ln();
    let mut term = 1.0;
    let mut sum = 0.0;
    for i in 0..n {
        if i > 0 {
            term *= l / i as f64;
        }
        sum += term;
    }
    Ok(delta * sum)
}

/// Monte Carlo estimate of `Leb S_N(δ)`.
pub fn mc_product_set(n: usize, delta: f64, n_samples: u64, seed: u64) -> Result<MeasureEstimate> {
    s_n_closed_form(n, delta)?;
    let hits = chunked_count(seed, "product-set", n_samples, |rng| {
        let p: f64 = (0..n).map(|_| rng.random::<f64>()).product();
        Ok(p <= delta)
    })?;
    Ok(MeasureEstimate::from_count(
        hits,
        n_samples,
        format!("Leb S_{n}({delta})"),
    ))
}

/// Outcome of the conditioned cone-escape experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeEscapeReport {
    pub estimate: MeasureEstimate,
    /// `L^{−βn}`.
    pub bound: f64,
    /// Accepted starts over all rejection attempts.
    pub acceptance_rate: f64,
}

/// Fraction of trials with `D_z F^n_ω(E) ∉ C^x_2`, where per trial the noise
/// path `ω` is fixed first, `z` is rejection-sampled from `G^n_β` for that
/// path, and `E` is Haar.
pub fn cone_escape_fraction(
    fam: &MapFamily,
    model: &NoiseModel,
    beta: f64,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<ConeEscapeReport> {
    fam.critical_threshold(beta)?;
    if n == 0 || n > 6 {
        return Err(Error::Domain(format!(
            "cone escape needs 1 <= n <= 6 (got {n})"
        )));
    }
    let dim = fam.n();
    let outcomes: Vec<Result<(bool, u64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derive_stream(seed, t);
            let path: Vec<NoiseSample> = (0..n).map(|_| model.draw(&mut rng, dim)).collect();
            let mut start_rng = derive_substream(seed, t, "confined-start");
            let (z, attempts) = sample_confined_start(fam, model, &path, beta, &mut start_rng)?;
            let e0 = haar_initial_plane(seed, t, dim);
            let mut state = TrajectoryState::new(z, e0)?;
            for s in &path {
                state.advance_with(fam, model, s)?;
            }
            Ok((!cone_membership(&state.frame, 2.0, Axis::X), attempts))
        })
        .collect();
    let mut escapes = 0u64;
    let mut attempts = 0u64;
    for o in outcomes {
        let (esc, a) = o?;
        escapes += esc as u64;
        attempts += a;
    }
    let rate = trials as f64 / attempts.max(1) as f64;
    if rate < 1e-3 {
        return Err(Error::InfeasibleConditioning { rate, attempts });
    }
    let l = fam.l().expect("checked by critical_threshold");
    Ok(ConeEscapeReport {
        estimate: MeasureEstimate::from_count(
            escapes,
            trials,
            format!("P(E_n not in C^x_2 | G^n_beta), n = {n}, beta = {beta}"),
        ),
        bound: l.powf(-beta * n as f64),
        acceptance_rate: rate,
    })
}

/// Numeric surrogate for `{det Dψ = 0} ∩ {∇ det Dψ = 0} = ∅`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub grid_per_axis: usize,
    pub refine_iters: usize,
    /// `|det Dψ| + ‖∇ det Dψ‖` at the argmin.
    pub min_residual: f64,
    pub det_term: f64,
    pub grad_term: f64,
    pub argmin: Vec<f64>,
    pub period: f64,
}

/// Adjugate by cofactors: `adj(A)_{ij} = (−1)^{i+j} det(A without row j, column i)`.
pub fn adjugate(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    DMatrix::from_fn(n, n, |i, j| {
        let minor = a.clone().remove_row(j).remove_column(i);
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    })
}

/// `(|det Dψ(x)|, ‖∇ det Dψ(x)‖)` with `∂_k det A = Tr(Adj(A) ∂_k A)`.
pub fn transversality_terms(psi: &dyn SmoothMap, x: &[f64]) -> Result<(f64, f64)> {
    let a = psi
        .jacobian(x)
        .ok_or_else(|| Error::Unsupported(format!("`{}` has no analytic Jacobian", psi.name())))?;
    let da = psi.jacobian_derivatives(x).ok_or_else(|| {
        Error::Unsupported(format!(
            "`{}` has no analytic second derivatives",
            psi.name()
        ))
    })?;
    let adj = adjugate(&a);
    let grad: f64 = da
        .iter()
        .map(|dk| (&adj * dk).trace().powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((a.determinant().abs(), grad))
}

fn residual(psi: &dyn SmoothMap, x: &[f64]) -> Result<f64> {
    let (d, g) = transversality_terms(psi, x)?;
    Ok(d + g)
}

/// Minimize `|det Dψ| + ‖∇ det Dψ‖` over a uniform grid on `[0, period)^N`,
/// then refine the best grid points by coordinate descent with halving steps.
pub fn transversality_residual(
    psi: &dyn SmoothMap,
    grid_per_axis: usize,
    refine_iters: usize,
) -> Result<TransversalityReport> {
    const STARTS: usize = 16;
    let n = psi.dim();
    let period = psi.period();
    if grid_per_axis == 0 {
        return Err(Error::Domain(
            "grid needs at least one point per axis".into(),
        ));
    }
    let total = grid_per_axis
        .checked_pow(n as u32)
        .filter(|t| *t <= 1 << 26)
        .ok_or_else(|| Error::Domain("transversality grid is too large".into()))?;
    let h = period / grid_per_axis as f64;
    let point = |idx: usize| -> Vec<f64> {
        let mut rem = idx;
        (0..n)
            .map(|_| {
                let v = (rem % grid_per_axis) as f64 * h;
                rem /= grid_per_axis;
                v
            })
            .collect()
    };
    let values: Vec<Result<f64>> = (0..total)
        .into_par_iter()
        .map(|i| residual(psi, &point(i)))
        .collect();
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut best = (values[order[0]], point(order[0]));
    for &start in order.iter().take(STARTS) {
        let mut x = point(start);
        let mut fx = values[start];
        let mut step = h;
        for _ in 0..refine_iters {
            let mut improved = false;
            for k in 0..n {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[k] = (y[k] + dir * step).rem_euclid(period);
                    let fy = residual(psi, &y)?;
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if fx < best.0 {
            best = (fx, x);
        }
    }
    let (det_term, grad_term) = transversality_terms(psi, &best.1)?;
    Ok(TransversalityReport {
        grid_per_axis,
        refine_iters,
        min_residual: best.0,
        det_term,
        grad_term,
        argmin: best.1,
        period,
    })
}

/// Left-hand sides of the three-equation system for the strong-coupling kick,
/// written on `[0, 2π)^2`:
/// `c1 c2 + (c1 + c2) c12`,
/// `−s1 c2 − s1 c12 − (c1 + c2) s12`,
/// `−s2 c1 − s2 c12 + (c1 + c2) s12`,
/// with `c12 = cos(x1 − x2)`, `s12 = sin(x1 − x2)`.
pub fn strong_coupling_system_residual(x1: f64, x2: f64) -> [f64; 3] {
    let (s1, c1) = x1.sin_cos();
    let (s2, c2) = x2.sin_cos();
    let (s12, c12) = (x1 - x2).sin_cos();
    [
        c1 * c2 + (c1 + c2) * c12,
        -s1 * c2 - s1 * c12 - (c1 + c2) * s12,
        -s2 * c1 - s2 * c12 + (c1 + c2) * s12,
    ]
}

/// Minimum over a `grid × grid` lattice of `[0, 2π)^2` of the max-abs
/// residual of the three-equation system, with its argmin.
pub fn strong_coupling_system_min(grid: usize) -> (f64, [f64; 2]) {
    let h = std::f64::consts::TAU / grid as f64;
    (0..grid)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, [0.0, 0.0]);
            for j in 0..grid {
                let (x1, x2) = (i as f64 * h, j as f64 * h);
                let m = strong_coupling_system_residual(x1, x2)
                    .iter()
                    .fold(0.0f64, |a, v| a.max(v.abs()));
                if m < best.0 {
                    best = (m, [x1, x2]);
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(
            (f64::INFINITY, [0.0, 0.0]),
            |a, b| if b.0 < a.0 { b } else { a },
        )
}

/// Per-coordinate KS test of the time-`n` pushforward of Lebesgue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub n_steps: usize,
    pub samples: usize,
    pub ks: Vec<f64>,
    /// KS critical value at level 1%.
    pub critical: f64,
    pub accepted: bool,
    /// `max |det D F_ω − 1|` over the guard prefix.
    pub max_det_deviation: f64,
}

/// Samples whose whole orbit is checked for `det = 1` before the KS test.
const DET_GUARD_SAMPLES: usize = 256;

/// Push `samples` uniform points forward `n` steps (each sample with its own
/// stream) and KS-test every coordinate against uniform. A volume check on
/// a prefix of orbits runs first and aborts with an invariant error.
pub fn uniformity_check(
    fam: &MapFamily,
    model: &NoiseModel,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<UniformityReport> {
    let dim = fam.n();
    let guard: Vec<Result<f64>> = (0..DET_GUARD_SAMPLES.min(samples))
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(seed, i as u64);
            let mut z =
                TorusPoint::uniform(&mut derive_substream(seed, i as u64, "uniform-start"), dim);
            let mut worst = 0.0f64;
            for _ in 0..n {
                let s = model.draw(&mut rng, dim);
                let (next, jac) = crate::lyapunov::composed_step(fam, model, &z, &s)?;
                worst = worst.max((jac.determinant() - 1.0).abs());
                z = next;
            }
            Ok(worst)
        })
        .collect();
    let mut max_dev = 0.0f64;
    for g in guard {
        max_dev = max_dev.max(g?);
    }
    if max_dev > 1e-6 {
        return Err(Error::Invariant(format!(
            "det D F_omega drifts from 1 by {max_dev:.3e}"
        )));
    }
    let finals: Vec<Result<TorusPoint>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(seed, i as u64);
            let mut z =
                TorusPoint::uniform(&mut derive_substream(seed, i as u64, "uniform-start"), dim);
            for _ in 0..n {
                let s = model.draw(&mut rng, dim);
                z = model.apply(&fam.map_point(&z)?, &s)?;
            }
            Ok(z)
        })
        .collect();
    let finals: Vec<TorusPoint> = finals.into_iter().collect::<Result<_>>()?;
    let ks: Vec<f64> = (0..2 * dim)
        .map(|k| ks_uniform(&finals.iter().map(|z| z.coords()[k]).collect::<Vec<_>>()))
        .collect();
    let critical = ks_critical(samples, 0.01);
    Ok(UniformityReport {
        n_steps: n,
        samples,
        accepted: ks.iter().all(|d| *d < critical),
        ks,
        critical,
        max_det_deviation: max_dev,
    })
}
