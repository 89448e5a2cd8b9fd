//! Volume-preserving random diffeomorphisms `R_ω` of `T^d`.
//!
//! The rotational model composes local twists
//! `Φ_U(z) = z_i + exp(ψ(|Δ_i(z)|) U) Δ_i(z)` around a list of centers `z_i`
//! and finishes with a translation `T_v`:
//! `R = T_v ∘ Φ^{(K)} ∘ ⋯ ∘ Φ^{(1)}`. Each `Φ` is a rigid rotation on spheres
//! around its center, fading to the identity outside radius 1/5.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::SpectralNorm;
use crate::grassmann::{cone_slope, principal_angles, Axis, GraphRep, SubspaceFrame};
use crate::stream::{derive_substream, Stream};
use crate::torus::{centered, reduce, TorusPoint};

/// Inner radius of the bump plateau (`ψ ≡ 1` below).
pub const BUMP_INNER: f64 = 0.1;
/// Outer radius of the bump support (`ψ ≡ 0` above).
pub const BUMP_OUTER: f64 = 0.2;
/// Covering radius required of the center list in faithful mode.
pub const COVER_RADIUS: f64 = 0.05;

const TAYLOR_DEGREE: usize = 12;
const SCALED_NORM: f64 = 1.0 / 16.0;

#[inline]
fn g(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

#[inline]
fn g_prime(t: f64) -> f64 {
    if t > 0.0 {
        g(t) / (t * t)
    } else {
        0.0
    }
}

/// Smooth step `h(t) = g(t) / (g(t) + g(1 − t))`, `g(t) = e^{−1/t}`.
fn smooth_step(t: f64) -> f64 {
    let (a, b) = (g(t), g(1.0 - t));
    a / (a + b)
}

fn smooth_step_prime(t: f64) -> f64 {
    let (a, b) = (g(t), g(1.0 - t));
    (g_prime(t) * b + a * g_prime(1.0 - t)) / ((a + b) * (a + b))
}

/// `C^∞` bump: 1 on `[0, 1/10]`, 0 on `[1/5, ∞)`.
pub fn bump(r: f64) -> f64 {
    if r <= BUMP_INNER {
        1.0
    } else if r >= BUMP_OUTER {
        0.0
    } else {
        smooth_step((BUMP_OUTER - r) / (BUMP_OUTER - BUMP_INNER))
    }
}

/// Derivative of [`bump`].
pub fn bump_deriv(r: f64) -> f64 {
    if r <= BUMP_INNER || r >= BUMP_OUTER {
        0.0
    } else {
        let w = BUMP_OUTER - BUMP_INNER;
        -smooth_step_prime((BUMP_OUTER - r) / w) / w
    }
}

/// `exp(U)` by scaling and squaring with a degree-12 Taylor polynomial at
/// scaled norm `≤ 2^{-4}`.
pub fn expm_skew(u: &DMatrix<f64>) -> DMatrix<f64> {
    let d = u.nrows();
    let norm1 = (0..d)
        .map(|j| u.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scaled_norm = norm1;
    while scaled_norm > SCALED_NORM {
        scaled_norm *= 0.5;
        squarings += 1;
    }
    let a = u * 0.5f64.powi(squarings as i32);
    let id = DMatrix::<f64>::identity(d, d);
    // Horner: I + A (I + A/2 (I + A/3 (…)))
    let mut acc = id.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        acc = &id + (&a * acc) / k as f64;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

/// `exp(t U)`; closed-form plane rotation when `d = 2`.
fn twist(u: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    if u.nrows() == 2 {
        let (sin, cos) = (t * u[(1, 0)]).sin_cos();
        DMatrix::from_row_slice(2, 2, &[cos, -sin, sin, cos])
    } else {
        expm_skew(&(u * t))
    }
}

/// Number of strictly-upper-triangular entries of a `d × d` matrix.
pub fn skew_params(d: usize) -> usize {
    d * (d - 1) / 2
}

/// Skew-symmetric matrix from its strict upper triangle (row-major).
pub fn skew_from_upper(d: usize, upper: &[f64]) -> DMatrix<f64> {
    assert_eq!(upper.len(), skew_params(d));
    let mut m = DMatrix::zeros(d, d);
    let mut idx = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            m[(i, j)] = upper[idx];
            m[(j, i)] = -upper[idx];
            idx += 1;
        }
    }
    m
}

fn offset(z: &[f64], center: &[f64]) -> DVector<f64> {
    DVector::from_iterator(z.len(), z.iter().zip(center).map(|(a, b)| centered(a - b)))
}

/// `Φ_U` around `center`; exactly the identity off the radius-1/5 ball.
pub fn apply_phi(z: &TorusPoint, center: &[f64], u: &DMatrix<f64>) -> TorusPoint {
    let delta = offset(z.coords(), center);
    let r = delta.norm();
    if r >= BUMP_OUTER {
        return z.clone();
    }
    // Adding the displacement keeps z bit-exact wherever the rotation is I.
    let moved = twist(u, bump(r)) * &delta - &delta;
    TorusPoint::from_reduced(
        z.coords()
            .iter()
            .zip(moved.iter())
            .map(|(c, v)| reduce(c + v))
            .collect(),
    )
}

/// `D_z Φ_U = exp(ψ U) (I + ψ'(r) U Δ Δᵀ / r)`; `exp(U)` at the center.
pub fn jac_phi(z: &TorusPoint, center: &[f64], u: &DMatrix<f64>) -> DMatrix<f64> {
    let delta = offset(z.coords(), center);
    phi_jacobian_at(&delta, u)
}

fn phi_jacobian_at(delta: &DVector<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let d = delta.len();
    let r = delta.norm();
    if r >= BUMP_OUTER {
        return DMatrix::identity(d, d);
    }
    let rot = twist(u, bump(r));
    phi_jacobian_with(rot, delta, r, u)
}

fn phi_jacobian_with(
    rot: DMatrix<f64>,
    delta: &DVector<f64>,
    r: f64,
    u: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dpsi = bump_deriv(r);
    if dpsi == 0.0 || r == 0.0 {
        return rot;
    }
    let d = delta.len();
    let shear = (u * delta) * delta.transpose() * (dpsi / r);
    rot * (DMatrix::identity(d, d) + shear)
}

/// How the twist centers were chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CenterMode {
    /// Cubic grid of spacing `1/⌈10√d⌉`, which covers `T^d` by 1/20-balls.
    Faithful,
    /// Caller-supplied centers; no covering guarantee.
    Light(Vec<Vec<f64>>),
    /// Regular grid with the given number of points per axis; no covering guarantee.
    LightGrid(usize),
}

/// Parameters of the rotational noise model.
#[derive(Clone, Debug)]
pub struct RotationalNoise {
    d: usize,
    centers: Vec<Vec<f64>>,
    /// Radius of the parameter ball.
    pub c: f64,
    /// Positivity radius; recorded, not used in any computation.
    pub zeta: f64,
    faithful: bool,
}

impl RotationalNoise {
    /// Grid centers covering `T^d` by balls of radius 1/20.
    pub fn faithful(d: usize, c: f64) -> Result<Self> {
        let m = (10.0 * (d as f64).sqrt()).ceil() as usize;
        let k = m
            .checked_pow(d as u32)
            .filter(|k| *k <= 4_000_000)
            .ok_or_else(|| {
                Error::Config(format!("faithful center grid for d = {d} is too large"))
            })?;
        let mut centers = Vec::with_capacity(k);
        for idx in 0..k {
            let mut rem = idx;
            let mut p = vec![0.0; d];
            for coord in p.iter_mut() {
                *coord = (rem % m) as f64 / m as f64;
                rem /= m;
            }
            centers.push(p);
        }
        Self::build(d, centers, c, true)
    }

    /// User-supplied centers (covering not checked).
    pub fn light(d: usize, centers: Vec<Vec<f64>>, c: f64) -> Result<Self> {
        if centers.iter().any(|p| p.len() != d) {
            return Err(Error::Config(format!(
                "every center must have {d} coordinates"
            )));
        }
        let centers = centers
            .into_iter()
            .map(|p| p.into_iter().map(reduce).collect())
            .collect();
        Self::build(d, centers, c, false)
    }

    /// Regular grid with `per_axis` points per coordinate, as a light center list.
    pub fn light_grid(d: usize, per_axis: usize, c: f64) -> Result<Self> {
        let k = per_axis.pow(d as u32);
        let centers = (0..k)
            .map(|idx| {
                let mut rem = idx;
                (0..d)
                    .map(|_| {
                        let v = (rem % per_axis) as f64 / per_axis as f64;
                        rem /= per_axis;
                        v
                    })
                    .collect()
            })
            .collect();
        Self::light(d, centers, c)
    }

    fn build(d: usize, centers: Vec<Vec<f64>>, c: f64, faithful: bool) -> Result<Self> {
        if d < 2 || !d.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "ambient dimension must be even (got {d})"
            )));
        }
        if centers.is_empty() {
            return Err(Error::Config(
                "rotational noise needs at least one center".into(),
            ));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Config(format!(
                "noise radius c must be >= 0 (got {c})"
            )));
        }
        Ok(Self {
            d,
            centers,
            c,
            zeta: c,
            faithful,
        })
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self.zeta = c;
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    /// Dimension `d + K d(d−1)/2` of the parameter space.
    pub fn param_dim(&self) -> usize {
        self.d + self.centers.len() * skew_params(self.d)
    }

    /// Whether `trials` uniform points all lie within 1/20 of some center.
    pub fn covering_holds<R: Rng + ?Sized>(&self, rng: &mut R, trials: usize) -> bool {
        (0..trials).all(|_| {
            let z: Vec<f64> = (0..self.d).map(|_| rng.random()).collect();
            self.centers.iter().any(|p| {
                z.iter()
                    .zip(p)
                    .map(|(a, b)| centered(a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    <= COVER_RADIUS
            })
        })
    }

    /// Uniform draw from the radius-`c` ball of the parameter space.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseSample {
        self.sample_scaled(rng, false)
    }

    /// A draw with `‖ω‖ = c` exactly, where the twist is strongest.
    pub fn sample_on_boundary<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseSample {
        self.sample_scaled(rng, true)
    }

    fn sample_scaled<R: Rng + ?Sized>(&self, rng: &mut R, boundary: bool) -> NoiseSample {
        let dim = self.param_dim();
        let mut w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = if boundary {
            self.c
        } else {
            self.c * rng.random::<f64>().powf(1.0 / dim as f64)
        };
        let scale = if norm > 0.0 { radius / norm } else { 0.0 };
        w.iter_mut().for_each(|v| *v *= scale);
        let v = w[..self.d].to_vec();
        let upper = w[self.d..].to_vec();
        NoiseSample::rotational(self.d, v, upper)
    }

    /// Uniform point in the support ball of a uniformly chosen center.
    fn point_near_center<R: Rng + ?Sized>(&self, rng: &mut R) -> TorusPoint {
        let center = &self.centers[rng.random_range(0..self.centers.len())];
        let dir: DVector<f64> = DVector::from_fn(self.d, |_, _| rng.sample(StandardNormal));
        let r = BUMP_OUTER * rng.random::<f64>().powf(1.0 / self.d as f64);
        let coords = center
            .iter()
            .zip(dir.iter())
            .map(|(c, u)| reduce(c + r * u / dir.norm()))
            .collect();
        TorusPoint::from_reduced(coords)
    }

    /// Index `j` such that the point after `Φ^{(1)}, …, Φ^{(j−1)}` sits within
    /// 1/10 of center `j` (first such index).
    pub fn locality_witness(&self, z: &TorusPoint, sample: &NoiseSample) -> Option<usize> {
        let NoiseSample::Rotational { upper, .. } = sample else {
            return None;
        };
        let per = skew_params(self.d);
        let mut p = z.clone();
        for (j, center) in self.centers.iter().enumerate() {
            if offset(p.coords(), center).norm() <= BUMP_INNER {
                return Some(j);
            }
            let u = skew_from_upper(self.d, &upper[j * per..(j + 1) * per]);
            p = apply_phi(&p, center, &u);
        }
        None
    }

    fn apply(
        &self,
        z: &TorusPoint,
        sample: &NoiseSample,
        want_jac: bool,
    ) -> (TorusPoint, Option<DMatrix<f64>>) {
        let NoiseSample::Rotational { v, upper } = sample else {
            unreachable!("rotational model applied to a non-rotational sample");
        };
        let d = self.d;
        let per = skew_params(d);
        let mut p: Vec<f64> = z.coords().to_vec();
        let mut jac = want_jac.then(|| DMatrix::<f64>::identity(d, d));
        for (j, center) in self.centers.iter().enumerate() {
            let r_sq: f64 = p
                .iter()
                .zip(center)
                .map(|(a, b)| centered(a - b).powi(2))
                .sum();
            if r_sq >= BUMP_OUTER * BUMP_OUTER {
                continue;
            }
            let delta = offset(&p, center);
            let r = delta.norm();
            if r >= BUMP_OUTER {
                continue;
            }
            let u = skew_from_upper(d, &upper[j * per..(j + 1) * per]);
            let u = &u;
            let rot = twist(u, bump(r));
            let rotated = &rot * &delta;
            if let Some(j) = jac.as_mut() {
                *j = phi_jacobian_with(rot, &delta, r, u) * &*j;
            }
            for i in 0..d {
                p[i] = reduce(p[i] + (rotated[i] - delta[i]));
            }
        }
        for i in 0..d {
            p[i] = reduce(p[i] + v[i]);
        }
        (TorusPoint::from_reduced(p), jac)
    }
}

/// One draw `ω` of the noise.
#[derive(Clone, Debug)]
pub enum NoiseSample {
    /// The identity map (no noise, or a zero draw).
    Identity,
    /// `(x, y) ↦ (x + ω, y)`.
    Shift(Vec<f64>),
    /// `ω = (v, U^{(1)}, …, U^{(K)})`; `upper` stacks the strict upper
    /// triangles of the `U^{(j)}` in center order.
    Rotational { v: Vec<f64>, upper: Vec<f64> },
}

impl NoiseSample {
    pub fn rotational(d: usize, v: Vec<f64>, upper: Vec<f64>) -> Self {
        debug_assert_eq!(v.len(), d);
        debug_assert_eq!(upper.len() % skew_params(d).max(1), 0);
        Self::Rotational { v, upper }
    }

    /// Euclidean norm of the stacked parameter vector.
    pub fn norm(&self) -> f64 {
        match self {
            Self::Identity => 0.0,
            Self::Shift(w) => w.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Self::Rotational { v, upper, .. } => {
                v.iter().chain(upper).map(|x| x * x).sum::<f64>().sqrt()
            }
        }
    }
}

/// Distribution of the noise `R_ω`.
#[derive(Clone, Debug)]
pub enum NoiseModel {
    Rotational(RotationalNoise),
    /// Horizontal shift, `ω` uniform in `[−ε, ε]^N`.
    Shift {
        epsilon: f64,
    },
    None,
}

impl NoiseModel {
    pub fn shift(epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::Config(format!(
                "shift epsilon must lie in [0, 1/2) (got {epsilon})"
            )));
        }
        Ok(Self::Shift { epsilon })
    }

    /// Human-readable label for reports.
    pub fn label(&self) -> String {
        match self {
            Self::Rotational(r) => format!(
                "rotational[{},K={},c={:e}]",
                if r.faithful { "faithful" } else { "light" },
                r.centers.len(),
                r.c
            ),
            Self::Shift { epsilon } => format!("shift[eps={epsilon:e}]"),
            Self::None => "none".into(),
        }
    }

    /// Draw `ω` for a step of the random composition on `T^{2n}`.
    /// The deterministic model draws nothing and returns the identity.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> NoiseSample {
        match self {
            Self::None => NoiseSample::Identity,
            Self::Shift { epsilon } => {
                let e = *epsilon;
                NoiseSample::Shift(
                    (0..n)
                        .map(|_| {
                            if e > 0.0 {
                                rng.random_range(-e..=e)
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                )
            }
            Self::Rotational(r) => r.sample(rng),
        }
    }

    /// `sample_noise`: like [`draw`](Self::draw) but the deterministic model is an error.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<NoiseSample> {
        if matches!(self, Self::None) {
            return Err(Error::Unsupported(
                "the None noise model has no samples".into(),
            ));
        }
        Ok(self.draw(rng, n))
    }

    fn check_dim(&self, z: &TorusPoint) -> Result<()> {
        if let Self::Rotational(r) = self {
            if r.d != z.dim() {
                return Err(Error::DimensionMismatch {
                    expected: r.d,
                    got: z.dim(),
                });
            }
        }
        Ok(())
    }

    /// `R_ω(z)`.
    pub fn apply(&self, z: &TorusPoint, sample: &NoiseSample) -> Result<TorusPoint> {
        Ok(self.apply_with_jacobian(z, sample, false)?.0)
    }

    /// `D_z R_ω`.
    pub fn jacobian(&self, z: &TorusPoint, sample: &NoiseSample) -> Result<DMatrix<f64>> {
        Ok(self
            .apply_with_jacobian(z, sample, true)?
            .1
            .expect("jacobian requested"))
    }

    /// `R_ω(z)` and, when `want_jac`, `D_z R_ω`, in a single pass.
    pub fn apply_with_jacobian(
        &self,
        z: &TorusPoint,
        sample: &NoiseSample,
        want_jac: bool,
    ) -> Result<(TorusPoint, Option<DMatrix<f64>>)> {
        self.check_dim(z)?;
        let d = z.dim();
        let identity = || want_jac.then(|| DMatrix::identity(d, d));
        match (self, sample) {
            (_, NoiseSample::Identity) => Ok((z.clone(), identity())),
            (Self::Shift { .. }, NoiseSample::Shift(w)) => {
                let n = z.n();
                if w.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: w.len(),
                    });
                }
                let mut c = z.coords().to_vec();
                for i in 0..n {
                    c[i] = reduce(c[i] + w[i]);
                }
                Ok((TorusPoint::from_reduced(c), identity()))
            }
            (Self::Rotational(r), s @ NoiseSample::Rotational { .. }) => {
                Ok(r.apply(z, s, want_jac))
            }
            _ => Err(Error::Unsupported(
                "sample does not belong to this noise model".into(),
            )),
        }
    }
}

/// Outcome of a Monte Carlo check of the cone condition.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConeConditionReport {
    pub trials: usize,
    pub max_input_slope: f64,
    pub max_output_slope: f64,
    pub max_norm: f64,
    pub max_inverse_norm: f64,
    pub max_det_deviation: f64,
    pub slope_bound: f64,
    pub norm_bound: f64,
    pub passed: bool,
}

/// Map `trials` random planes `E = graph(G)`, `‖G‖ = 1/20`, through `D_z R_ω`
/// at uniform `z`, recording the worst output slope and operator norms.
pub fn check_cone_condition<R: Rng + ?Sized>(
    model: &NoiseModel,
    n: usize,
    trials: usize,
    rng: &mut R,
) -> Result<ConeConditionReport> {
    check_cone_condition_with(model, n, trials, rng, 0.1, 2.0, false)
}

fn check_cone_condition_with<R: Rng + ?Sized>(
    model: &NoiseModel,
    n: usize,
    trials: usize,
    rng: &mut R,
    slope_bound: f64,
    norm_bound: f64,
    targeted: bool,
) -> Result<ConeConditionReport> {
    let d = 2 * n;
    let mut rep = ConeConditionReport {
        trials,
        max_input_slope: 0.0,
        max_output_slope: 0.0,
        max_norm: 0.0,
        max_inverse_norm: 0.0,
        max_det_deviation: 0.0,
        slope_bound,
        norm_bound,
        passed: true,
    };
    for _ in 0..trials {
        let (z, sample) = match model {
            NoiseModel::Rotational(r) if targeted && !r.centers.is_empty() => {
                (r.point_near_center(rng), r.sample_on_boundary(rng))
            }
            _ => (TorusPoint::uniform(rng, n), model.draw(rng, n)),
        };
        let raw = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = GraphRep::new(&raw * (0.05 / raw.norm_spectral()));
        let jac = model.jacobian(&z, &sample)?;
        let e = SubspaceFrame::from_graph(&g)?;
        let img = SubspaceFrame::orthonormalize(&jac * e.cols())?;
        let out = cone_slope(&img, Axis::X).unwrap_or(f64::INFINITY);
        let sv = jac.singular_values();
        rep.max_input_slope = rep.max_input_slope.max(g.norm());
        rep.max_output_slope = rep.max_output_slope.max(out);
        rep.max_norm = rep.max_norm.max(sv.max());
        rep.max_inverse_norm = rep.max_inverse_norm.max(1.0 / sv.min());
        rep.max_det_deviation = rep.max_det_deviation.max((jac.determinant() - 1.0).abs());
        debug_assert_eq!(jac.nrows(), d);
    }
    rep.passed = rep.max_output_slope <= slope_bound
        && rep.max_norm <= norm_bound
        && rep.max_inverse_norm <= norm_bound;
    Ok(rep)
}

/// Result of calibrating the parameter radius.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Calibration {
    pub c_max: f64,
    pub trials: usize,
    pub iterations: usize,
}

/// Largest radius `c` (by bisection over `[0, hi]`) at which the cone
/// condition holds on `trials` adversarial draws with bounds tightened by
/// 10% (`‖G'‖ ≤ 0.09`, norms `≤ 1.8`). Each draw puts `z` inside the support
/// of a random center and takes `‖ω‖ = c`; elsewhere `R_ω` is a translation.
/// Uses a fixed internal stream so the result depends only on the centers.
pub fn calibrate_c(
    base: &RotationalNoise,
    trials: usize,
    iterations: usize,
) -> Result<Calibration> {
    let n = base.d / 2;
    let passes = |c: f64| -> Result<bool> {
        let model = NoiseModel::Rotational(base.clone().with_c(c));
        let mut rng: Stream = derive_substream(0x5eed_c0de, base.centers.len() as u64, "calibrate");
        Ok(check_cone_condition_with(&model, n, trials, &mut rng, 0.09, 1.8, true)?.passed)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while passes(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            break;
        }
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration {
        c_max: lo,
        trials,
        iterations,
    })
}

/// Histogram of one scalar marginal.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Marginal {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// All mass at a single value.
    pub degenerate: bool,
}

impl Marginal {
    fn from_values(name: &str, values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0u64; bins];
        let degenerate = !(hi - lo > 1e-12);
        for &v in values {
            let b = if degenerate {
                0
            } else {
                (((v - lo) / (hi - lo)) * bins as f64)
                    .floor()
                    .min((bins - 1) as f64) as usize
            };
            counts[b] += 1;
        }
        Self {
            name: name.into(),
            lo,
            hi,
            counts,
            degenerate,
        }
    }

    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }
}

/// Empirical spread of `(R_ω z, D_z R_ω(E))` over many draws.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NdSpreadReport {
    pub samples: usize,
    pub bins: usize,
    /// One marginal per coordinate of the displacement `R_ω z − z`.
    pub point_marginals: Vec<Marginal>,
    /// Largest principal angle of `D_z R_ω(E)` to `E` and to `R^x`.
    pub subspace_marginals: Vec<Marginal>,
    pub min_occupancy: u64,
    pub max_occupancy: u64,
}

/// Histogram the noise image of a fixed `(z, E)`; min/max bin counts serve as
/// a crude proxy for a bounded, positive density.
pub fn check_nd_spread<R: Rng + ?Sized>(
    model: &NoiseModel,
    z: &TorusPoint,
    e: &SubspaceFrame,
    samples: usize,
    bins: usize,
    rng: &mut R,
) -> Result<NdSpreadReport> {
    let n = z.n();
    let d = z.dim();
    let rx = SubspaceFrame::coordinate_plane(n, Axis::X);
    let mut disp = vec![Vec::with_capacity(samples); d];
    let mut to_e = Vec::with_capacity(samples);
    let mut to_x = Vec::with_capacity(samples);
    for _ in 0..samples {
        let s = model.draw(rng, n);
        let (img, jac) = model.apply_with_jacobian(z, &s, true)?;
        for i in 0..d {
            disp[i].push(centered(img.coords()[i] - z.coords()[i]));
        }
        let pushed = SubspaceFrame::orthonormalize(jac.expect("jacobian") * e.cols())?;
        to_e.push(principal_angles(&pushed, e)?.largest());
        to_x.push(principal_angles(&pushed, &rx)?.largest());
    }
    let point_marginals: Vec<Marginal> = disp
        .iter()
        .enumerate()
        .map(|(i, v)| Marginal::from_values(&format!("dz{i}"), v, bins))
        .collect();
    let subspace_marginals = vec![
        Marginal::from_values("angle_to_E", &to_e, bins),
        Marginal::from_values("angle_to_Rx", &to_x, bins),
    ];
    let all = point_marginals.iter().chain(&subspace_marginals);
    let (mut min_occ, mut max_occ) = (u64::MAX, 0u64);
    for m in all {
        if m.degenerate {
            continue;
        }
        for &c in &m.counts {
            min_occ = min_occ.min(c);
            max_occ = max_occ.max(c);
        }
    }
    if min_occ == u64::MAX {
        min_occ = 0;
        max_occ = samples as u64;
    }
    Ok(NdSpreadReport {
        samples,
        bins,
        point_marginals,
        subspace_marginals,
        min_occupancy: min_occ,
        max_occupancy: max_occ,
    })
}

/// Config-document form of [`NoiseModel`]. `c = null` asks for calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum NoiseDescriptor {
    Rotational {
        #[serde(default)]
        c: Option<f64>,
        #[serde(default = "default_centers")]
        centers: CenterMode,
    },
    Shift {
        epsilon: f64,
    },
    None,
}

fn default_centers() -> CenterMode {
    CenterMode::Faithful
}

/// Samples used per bisection step when calibrating `c`.
pub const CALIBRATION_TRIALS: usize = 2_000;
/// Bisection steps when calibrating `c`.
pub const CALIBRATION_ITERATIONS: usize = 16;

impl NoiseDescriptor {
    /// Build the model on `T^{2n}`, calibrating `c` when it is not given.
    pub fn build(&self, n: usize) -> Result<NoiseModel> {
        match self {
            Self::None => Ok(NoiseModel::None),
            Self::Shift { epsilon } => NoiseModel::shift(*epsilon),
            Self::Rotational { c, centers } => {
                let d = 2 * n;
                let base = match centers {
                    CenterMode::Faithful => RotationalNoise::faithful(d, 0.0)?,
                    CenterMode::Light(p) => RotationalNoise::light(d, p.clone(), 0.0)?,
                    CenterMode::LightGrid(k) => {
                        if *k == 0 || k.checked_pow(d as u32).is_none_or(|t| t > 1_000_000) {
                            return Err(Error::Config(format!("light_grid = {k} is out of range")));
                        }
                        RotationalNoise::light_grid(d, *k, 0.0)?
                    }
                };
                let c = match c {
                    Some(c) => *c,
                    None => calibrate_c(&base, CALIBRATION_TRIALS, CALIBRATION_ITERATIONS)?.c_max,
                };
                Ok(NoiseModel::Rotational(base.with_c(c)))
            }
        }
    }

    pub fn describe(model: &NoiseModel) -> Self {
        match model {
            NoiseModel::None => Self::None,
            NoiseModel::Shift { epsilon } => Self::Shift { epsilon: *epsilon },
            NoiseModel::Rotational(r) => Self::Rotational {
                c: Some(r.c),
                centers: if r.faithful {
                    CenterMode::Faithful
                } else {
                    CenterMode::Light(r.centers.clone())
                },
            },
        }
    }
}
