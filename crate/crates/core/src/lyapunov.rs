//! The random composition `F^n_ω = F_{ω_n} ∘ ⋯ ∘ F_{ω_1}` with `F_ω = R_ω ∘ F`,
//! its QR cocycle, and finite singular-value windows.
//!
//! Every step draws exactly one noise sample from the trajectory stream and
//! nothing else, so runs that differ only in what they record share the same
//! sample path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{cone_membership, haar_random_subspace, qr_positive, Axis, SubspaceFrame};
use crate::noise::{NoiseDescriptor, NoiseModel, NoiseSample};
use crate::stats::batch_means;
use crate::stream::{derive_stream, derive_substream, Stream};
use crate::torus::{FamilyDescriptor, MapFamily, TorusPoint};

/// Number of batch-means blocks used for exponent standard errors.
pub const STDERR_BLOCKS: usize = 20;
/// Longest window accepted by [`svd_window`].
pub const MAX_WINDOW: usize = 8;
/// Largest `log σ_1 − log σ_{2N}` accepted by [`svd_window`].
pub const MAX_LOG_SPREAD: f64 = 600.0;

/// Point, tracked frame and accumulated log growth of a trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryState {
    pub z: TorusPoint,
    pub frame: SubspaceFrame,
    /// Running `Σ log R_ii` for each frame column.
    pub log_accum: Vec<f64>,
    pub step: u64,
}

/// Knobs shared by the trajectory-level estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Steps discarded before accumulation starts.
    pub burn_in: u64,
    /// Index of this trajectory within its run; selects the stream.
    pub trial: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            trial: 0,
        }
    }
}

/// Bound on `|Σ log R_ii|` per full-frame step. Householder QR is backward
/// stable, so the log-determinant error scales like `eps · cond(J)`.
fn volume_tolerance(jac: &DMatrix<f64>) -> f64 {
    let norm = jac.norm();
    1e-8 + 100.0 * f64::EPSILON * norm * norm
}

impl TrajectoryState {
    pub fn new(z: TorusPoint, frame: SubspaceFrame) -> Result<Self> {
        if frame.ambient_dim() != z.dim() {
            return Err(Error::DimensionMismatch {
                expected: z.dim(),
                got: frame.ambient_dim(),
            });
        }
        let k = frame.dim();
        Ok(Self {
            z,
            frame,
            log_accum: vec![0.0; k],
            step: 0,
        })
    }

    /// Full `2N` frame starting from the standard basis.
    pub fn full(z: TorusPoint) -> Self {
        let d = z.dim();
        let frame = SubspaceFrame::from_orthonormal(DMatrix::identity(d, d));
        Self::new(z, frame).expect("identity frame matches")
    }

    /// Exponent estimates `log_accum / step`.
    pub fn exponents(&self) -> Vec<f64> {
        self.log_accum
            .iter()
            .map(|v| v / self.step.max(1) as f64)
            .collect()
    }

    fn dump(&self) -> String {
        format!(
            "z = {:?}, log_accum = {:?}",
            self.z.coords(),
            self.log_accum
        )
    }

    /// One step of the chain; returns the per-column `log R_ii` added.
    pub fn advance(
        &mut self,
        fam: &MapFamily,
        model: &NoiseModel,
        rng: &mut Stream,
    ) -> Result<DVector<f64>> {
        let sample = model.draw(rng, fam.n());
        self.advance_with(fam, model, &sample)
    }

    /// Step with a caller-provided noise sample.
    pub fn advance_with(
        &mut self,
        fam: &MapFamily,
        model: &NoiseModel,
        sample: &NoiseSample,
    ) -> Result<DVector<f64>> {
        let (next, jac) = composed_step(fam, model, &self.z, sample)?;
        let (q, diag) = qr_positive(&jac * self.frame.cols());
        if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Numeric {
                step: self.step,
                message: format!("degenerate frame, |R_ii| = {:?}", diag.as_slice()),
                state: self.dump(),
            });
        }
        let logs = diag.map(f64::ln);
        if self.frame.dim() == self.frame.ambient_dim() {
            let total: f64 = logs.iter().sum();
            let tol = volume_tolerance(&jac);
            if total.abs() > tol {
                return Err(Error::Invariant(format!(
                    "volume drift {total:.3e} > {tol:.3e} at step {}; {}",
                    self.step,
                    self.dump()
                )));
            }
        }
        for (acc, l) in self.log_accum.iter_mut().zip(logs.iter()) {
            *acc += l;
        }
        self.frame = SubspaceFrame::from_orthonormal(q);
        self.z = next;
        self.step += 1;
        Ok(logs)
    }
}

/// `F_ω(z)` and `D_z F_ω = D R_ω · D F`.
pub fn composed_step(
    fam: &MapFamily,
    model: &NoiseModel,
    z: &TorusPoint,
    sample: &NoiseSample,
) -> Result<(TorusPoint, DMatrix<f64>)> {
    let jf = fam.map_jacobian(z)?.assembled;
    let mid = fam.map_point(z)?;
    let (next, jr) = model.apply_with_jacobian(
        &mid,
        sample,
        !matches!(sample, NoiseSample::Identity | NoiseSample::Shift(_)),
    )?;
    let jac = match jr {
        Some(jr) => jr * jf,
        None => jf,
    };
    Ok((next, jac))
}

/// `step(state, fam, model, rng) → state'`.
pub fn step(
    state: &TrajectoryState,
    fam: &MapFamily,
    model: &NoiseModel,
    rng: &mut Stream,
) -> Result<TrajectoryState> {
    let mut next = state.clone();
    next.advance(fam, model, rng)?;
    Ok(next)
}

/// Sorted exponent estimates of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Nonincreasing, nats per step.
    pub exponents: Vec<f64>,
    /// Batch-means standard error per exponent.
    pub stderr: Vec<f64>,
    pub n_steps: u64,
    pub burn_in: u64,
    /// Fraction of accumulation steps with the leading `N`-plane in `C^x_2`.
    pub cone_fraction: f64,
    pub seed: u64,
    pub trial: u64,
    pub family: FamilyDescriptor,
    pub noise: NoiseDescriptor,
}

impl LyapunovReport {
    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }

    /// `λ_i + λ_{2N+1−i}` for `i = 1..N`.
    pub fn pairing(&self) -> Vec<f64> {
        let k = self.exponents.len();
        (0..k / 2)
            .map(|i| self.exponents[i] + self.exponents[k - 1 - i])
            .collect()
    }
}

fn leading_plane(frame: &SubspaceFrame, n: usize) -> SubspaceFrame {
    SubspaceFrame::from_orthonormal(frame.cols().columns(0, n).into_owned())
}

/// Full spectrum by the QR cocycle: `λ_i = log_accum_i / n` after burn-in.
pub fn qr_spectrum(
    z0: &TorusPoint,
    fam: &MapFamily,
    model: &NoiseModel,
    n_steps: u64,
    seed: u64,
    opts: &RunOptions,
) -> Result<LyapunovReport> {
    if n_steps == 0 {
        return Err(Error::Domain("qr_spectrum needs n >= 1".into()));
    }
    let n = fam.n();
    let mut rng = derive_stream(seed, opts.trial);
    let mut state = TrajectoryState::full(z0.clone());
    for _ in 0..opts.burn_in {
        state.advance(fam, model, &mut rng)?;
    }
    state.log_accum.iter_mut().for_each(|v| *v = 0.0);
    state.step = 0;
    let k = 2 * n;
    let mut series = vec![Vec::with_capacity(n_steps as usize); k];
    let mut in_cone = 0u64;
    for _ in 0..n_steps {
        let logs = state.advance(fam, model, &mut rng)?;
        for (s, l) in series.iter_mut().zip(logs.iter()) {
            s.push(*l);
        }
        if cone_membership(&leading_plane(&state.frame, n), 2.0, Axis::X) {
            in_cone += 1;
        }
    }
    let raw = state.exponents();
    let errs: Vec<f64> = series
        .iter()
        .map(|s| batch_means(s, STDERR_BLOCKS).1)
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    let report = LyapunovReport {
        exponents: order.iter().map(|&i| raw[i]).collect(),
        stderr: order.iter().map(|&i| errs[i]).collect(),
        n_steps,
        burn_in: opts.burn_in,
        cone_fraction: in_cone as f64 / n_steps as f64,
        seed,
        trial: opts.trial,
        family: FamilyDescriptor::from(fam),
        noise: NoiseDescriptor::describe(model),
    };
    let bound = report.stderr.iter().filter(|s| s.is_finite()).sum::<f64>() + 1e-2;
    if report.sum().abs() > bound {
        return Err(Error::Invariant(format!(
            "exponent sum {:.3e} exceeds {bound:.3e}",
            report.sum()
        )));
    }
    Ok(report)
}

/// Haar-random initial `N`-plane for trial `trial`, from its own substream so
/// the dynamics stream is untouched.
pub fn haar_initial_plane(seed: u64, trial: u64, n: usize) -> SubspaceFrame {
    let mut rng = derive_substream(seed, trial, "initial-plane");
    haar_random_subspace(&mut rng, 2 * n, n)
}

/// Mean log volume growth of a transported `k`-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// `(1/n) Σ_k log det(D F_{ω_k}|_{E_k})` along the trajectory of
/// [`qr_spectrum`] with the same seed, trial and burn-in. For an `N`-plane
/// `E_0` this estimates `λ_1 + ⋯ + λ_N`.
pub fn grassmann_sum_estimator(
    z0: &TorusPoint,
    e0: &SubspaceFrame,
    fam: &MapFamily,
    model: &NoiseModel,
    n_steps: u64,
    seed: u64,
    opts: &RunOptions,
) -> Result<SumEstimate> {
    if n_steps == 0 {
        return Err(Error::Domain("estimator needs n >= 1".into()));
    }
    let mut rng = derive_stream(seed, opts.trial);
    let mut state = TrajectoryState::new(z0.clone(), e0.clone())?;
    for _ in 0..opts.burn_in {
        let sample = model.draw(&mut rng, fam.n());
        state.z = composed_step(fam, model, &state.z, &sample)?.0;
    }
    let mut series = Vec::with_capacity(n_steps as usize);
    for _ in 0..n_steps {
        series.push(state.advance(fam, model, &mut rng)?.sum());
    }
    let (value, stderr) = batch_means(&series, STDERR_BLOCKS);
    Ok(SumEstimate { value, stderr })
}

/// Per-step cone and critical-set bookkeeping for a transported `N`-plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeTrack {
    /// Entry `k`: `Z_k ∈ G_β`, for `k = 0..=n`.
    pub in_good_set: Vec<bool>,
    /// Entry `k`: `E_k ∈ C^x_2`.
    pub in_wide_cone: Vec<bool>,
    /// Entry `k`: `E_k ∈ C^x_{1/10}`.
    pub in_narrow_cone: Vec<bool>,
    pub good_fraction: f64,
    pub wide_fraction: f64,
    pub narrow_fraction: f64,
}

impl ConeTrack {
    /// First `k` with `E_k ∈ C^x_{1/10}`.
    pub fn first_narrow(&self) -> Option<usize> {
        self.in_narrow_cone.iter().position(|b| *b)
    }

    /// Whether `Z_0, …, Z_{k−1}` all lie in `G_β`.
    pub fn good_through(&self, k: usize) -> bool {
        self.in_good_set.iter().take(k).all(|b| *b)
    }
}

fn fraction(v: &[bool]) -> f64 {
    v.iter().filter(|b| **b).count() as f64 / v.len() as f64
}

/// Track `(Z_k, E_k)` from `(z0, E_0)` without burn-in.
pub fn cone_tracking(
    z0: &TorusPoint,
    e0: &SubspaceFrame,
    fam: &MapFamily,
    model: &NoiseModel,
    n_steps: u64,
    seed: u64,
    beta: f64,
    trial: u64,
) -> Result<ConeTrack> {
    fam.critical_threshold(beta)?;
    let mut rng = derive_stream(seed, trial);
    let mut state = TrajectoryState::new(z0.clone(), e0.clone())?;
    let cap = n_steps as usize + 1;
    let (mut good, mut wide, mut narrow) = (
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
    );
    let mut record = |s: &TrajectoryState| -> Result<()> {
        good.push(!fam.in_critical_set(s.z.x(), beta)?);
        wide.push(cone_membership(&s.frame, 2.0, Axis::X));
        narrow.push(cone_membership(&s.frame, 0.1, Axis::X));
        Ok(())
    };
    record(&state)?;
    for _ in 0..n_steps {
        state.advance(fam, model, &mut rng)?;
        record(&state)?;
    }
    Ok(ConeTrack {
        good_fraction: fraction(&good),
        wide_fraction: fraction(&wide),
        narrow_fraction: fraction(&narrow),
        in_good_set: good,
        in_wide_cone: wide,
        in_narrow_cone: narrow,
    })
}

/// Point orbit `Z_0, …, Z_n` under a fixed noise path.
pub fn orbit(
    fam: &MapFamily,
    model: &NoiseModel,
    z0: &TorusPoint,
    path: &[NoiseSample],
) -> Result<Vec<TorusPoint>> {
    let mut out = Vec::with_capacity(path.len() + 1);
    out.push(z0.clone());
    for s in path {
        let mid = fam.map_point(out.last().expect("nonempty"))?;
        out.push(model.apply(&mid, s)?);
    }
    Ok(out)
}

/// Whether `Z_0, …, Z_{n−1}` all avoid `B_β` under `path`.
pub fn stays_good(
    fam: &MapFamily,
    model: &NoiseModel,
    z0: &TorusPoint,
    path: &[NoiseSample],
    beta: f64,
) -> Result<bool> {
    let mut z = z0.clone();
    for s in path {
        if fam.in_critical_set(z.x(), beta)? {
            return Ok(false);
        }
        z = model.apply(&fam.map_point(&z)?, s)?;
    }
    Ok(true)
}

/// Rejection-sample `z` uniform on `G^n_β = {Z_i ∈ G_β, 0 ≤ i < n}` for the
/// fixed `path`. Fails when the acceptance rate drops below 1/1000.
pub fn sample_confined_start(
    fam: &MapFamily,
    model: &NoiseModel,
    path: &[NoiseSample],
    beta: f64,
    rng: &mut Stream,
) -> Result<(TorusPoint, u64)> {
    const MAX_ATTEMPTS: u64 = 10_000;
    for attempt in 1..=MAX_ATTEMPTS {
        let z = TorusPoint::uniform(rng, fam.n());
        if stays_good(fam, model, &z, path, beta)? {
            return Ok((z, attempt));
        }
    }
    Err(Error::InfeasibleConditioning {
        rate: 0.0,
        attempts: MAX_ATTEMPTS,
    })
}

/// Singular values (log scale) and singular frames of `D_{z_0} F^n_ω`.
#[derive(Clone, Debug)]
pub struct SvdWindow {
    /// `log σ_1 ≥ ⋯ ≥ log σ_{2N}`.
    pub log_sigma: Vec<f64>,
    /// Right singular vectors `h_i` as columns.
    pub right: DMatrix<f64>,
    /// Left singular vectors `h_i'` as columns, `M h_i = σ_i h_i'`.
    pub left: DMatrix<f64>,
}

/// Whether `w = (u, v)` lies in `C^x_α` (`‖v‖ ≤ α‖u‖`) or `C^y_α`.
pub fn vector_in_cone(w: &[f64], alpha: f64, axis: Axis) -> bool {
    let n = w.len() / 2;
    let nx = w[..n].iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = w[n..].iter().map(|a| a * a).sum::<f64>().sqrt();
    match axis {
        Axis::X => ny <= alpha * nx,
        Axis::Y => nx <= alpha * ny,
    }
}

impl SvdWindow {
    /// Checks both the singular-value gap and the cone placement of all frames.
    pub fn satisfies_cone_structure(&self, alpha: f64) -> bool {
        let k = self.log_sigma.len();
        let n = k / 2;
        (0..k).all(|i| {
            let axis = if i < n { Axis::X } else { Axis::Y };
            vector_in_cone(self.right.column(i).as_slice(), alpha, axis)
                && vector_in_cone(self.left.column(i).as_slice(), alpha, axis)
        })
    }
}

/// SVD of `M = J_n ⋯ J_1` along a fixed noise path. The top half comes from
/// `SVD(M)` and the bottom half from `SVD(M⁻¹)` with `M⁻¹ = J_1⁻¹ ⋯ J_n⁻¹`,
/// so small singular values keep full relative accuracy.
pub fn svd_window_along(
    fam: &MapFamily,
    model: &NoiseModel,
    z0: &TorusPoint,
    path: &[NoiseSample],
) -> Result<SvdWindow> {
    let len = path.len();
    if len == 0 || len > MAX_WINDOW {
        return Err(Error::Domain(format!(
            "window length must lie in 1..={MAX_WINDOW} (got {len})"
        )));
    }
    let d = z0.dim();
    let n = d / 2;
    let mut m = DMatrix::<f64>::identity(d, d);
    let mut m_inv = DMatrix::<f64>::identity(d, d);
    let mut z = z0.clone();
    for s in path {
        let block = fam.map_jacobian(&z)?;
        let mid = fam.map_point(&z)?;
        let (next, jr) = model.apply_with_jacobian(&mid, s, true)?;
        let jr = jr.expect("jacobian requested");
        let jr_inv = jr.clone().try_inverse().ok_or_else(|| Error::Numeric {
            step: 0,
            message: "noise jacobian is singular".into(),
            state: format!("{:?}", mid.coords()),
        })?;
        m = &jr * &block.assembled * m;
        m_inv = m_inv * block.inverse() * jr_inv;
        z = next;
    }
    let top = m.svd(true, true);
    let bottom = m_inv.svd(true, true);
    let order = |s: &DVector<f64>| {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        idx
    };
    let (tu, tv) = (top.u.expect("u"), top.v_t.expect("v_t").transpose());
    let (bu, bv) = (bottom.u.expect("u"), bottom.v_t.expect("v_t").transpose());
    let to = order(&top.singular_values);
    let bo = order(&bottom.singular_values);
    let spread = top.singular_values[to[0]].ln() + bottom.singular_values[bo[0]].ln();
    if !(spread <= MAX_LOG_SPREAD) {
        return Err(Error::WindowTooLong {
            spread,
            limit: MAX_LOG_SPREAD,
        });
    }
    let mut log_sigma = vec![0.0; d];
    let mut right = DMatrix::zeros(d, d);
    let mut left = DMatrix::zeros(d, d);
    for i in 0..n {
        log_sigma[i] = top.singular_values[to[i]].ln();
        right.set_column(i, &tv.column(to[i]));
        left.set_column(i, &tu.column(to[i]));
        // M⁻¹ h'_j = σ_j⁻¹ h_j: left vectors of M⁻¹ are h, right vectors are h'.
        let j = d - 1 - i;
        log_sigma[j] = -bottom.singular_values[bo[i]].ln();
        right.set_column(j, &bu.column(bo[i]));
        left.set_column(j, &bv.column(bo[i]));
    }
    Ok(SvdWindow {
        log_sigma,
        right,
        left,
    })
}

/// [`svd_window_along`] with the noise path drawn from `stream(seed, 0)`.
pub fn svd_window(
    z0: &TorusPoint,
    fam: &MapFamily,
    model: &NoiseModel,
    n: usize,
    seed: u64,
) -> Result<SvdWindow> {
    let mut rng = derive_stream(seed, 0);
    let path: Vec<NoiseSample> = (0..n).map(|_| model.draw(&mut rng, fam.n())).collect();
    svd_window_along(fam, model, z0, &path)
}
