//! Deterministic twist maps `F(x, y) = (f(x) - y, x)` on the torus `[0,1)^{2N}`.
//!
//! All trigonometric terms carry an explicit `2π` so the torus is parametrized
//! by `[0,1)` in every coordinate.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::SpectralNorm;

/// Reduce a real number to `[0, 1)`.
///
/// `t - floor(t)` can round up to exactly `1.0` for tiny negative inputs; that
/// value is mapped to `0.0`.
#[inline]
pub fn reduce(t: f64) -> f64 {
    let r = t - t.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Representative of `t` modulo 1 in `[-1/2, 1/2)`.
#[inline]
pub fn centered(t: f64) -> f64 {
    reduce(t + 0.5) - 0.5
}

/// A point `z = (x, y)` of `T^{2N}`; the first `N` coordinates are `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Build a point from raw coordinates, reducing each modulo 1.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || !coords.len().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "torus point needs an even, nonzero number of coordinates (got {})",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite torus coordinate".into()));
        }
        Ok(Self {
            coords: coords.into_iter().map(reduce).collect(),
        })
    }

    pub fn from_xy(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Self::new(x.iter().chain(y).copied().collect())
    }

    /// Uniform point on `T^{2N}`.
    pub fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        Self {
            coords: (0..2 * n).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// Half the ambient dimension.
    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn x(&self) -> &[f64] {
        &self.coords[..self.n()]
    }

    pub fn y(&self) -> &[f64] {
        &self.coords[self.n()..]
    }

    pub(crate) fn from_reduced(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| (0.0..1.0).contains(c)));
        Self { coords }
    }
}

/// A smooth map `T^N -> R^N` used as a building block of `f = L ψ + φ`.
///
/// `jacobian` returns `None` when no analytic derivative is available; callers
/// then fall back to central finite differences and flag the result.
pub trait SmoothMap: fmt::Debug + Send + Sync {
    /// Registry name, used when a family is written to a config document.
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> DVector<f64>;

    fn jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// `out[k] = ∂/∂x_k (Dψ)`, needed for the gradient of `det Dψ`.
    fn jacobian_derivatives(&self, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// Length of the fundamental domain per axis (1 on the unit torus).
    fn period(&self) -> f64 {
        1.0
    }
}

/// Central finite-difference Jacobian with step `h`.
pub fn finite_difference_jacobian<F>(eval: F, x: &[f64], h: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let n = x.len();
    let mut out = DMatrix::zeros(eval(x).len(), n);
    let mut probe = x.to_vec();
    for j in 0..n {
        probe[j] = x[j] + h;
        let plus = eval(&probe);
        probe[j] = x[j] - h;
        let minus = eval(&probe);
        probe[j] = x[j];
        out.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    out
}

/// `ψ(x) = (sin 2π x_i)_i`, the uncoupled kick.
#[derive(Clone, Debug)]
pub struct SineKick {
    pub n: usize,
}

impl SmoothMap for SineKick {
    fn name(&self) -> &str {
        "sine"
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().map(|&t| (TAU * t).sin()))
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_iterator(
            x.len(),
            x.iter().map(|&t| TAU * (TAU * t).cos()),
        )))
    }
    fn jacobian_derivatives(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = x.len();
        Some(
            (0..n)
                .map(|k| {
                    let mut m = DMatrix::zeros(n, n);
                    m[(k, k)] = -TAU * TAU * (TAU * x[k]).sin();
                    m
                })
                .collect(),
        )
    }
}

/// The strong-coupling kick on `T^2`:
/// `ψ(x) = (sin 2πx₁ + sin 2π(x₂−x₁), sin 2πx₂ + sin 2π(x₁−x₂))`.
#[derive(Clone, Debug, Default)]
pub struct StrongCouplingPsi;

impl SmoothMap for StrongCouplingPsi {
    fn name(&self) -> &str {
        "strong_coupling"
    }
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        let d = TAU * (x[1] - x[0]);
        DVector::from_vec(vec![
            (TAU * x[0]).sin() + d.sin(),
            (TAU * x[1]).sin() - d.sin(),
        ])
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let c = (TAU * (x[1] - x[0])).cos();
        let c1 = (TAU * x[0]).cos();
        let c2 = (TAU * x[1]).cos();
        Some(DMatrix::from_row_slice(2, 2, &[c1 - c, c, c, c2 - c]) * TAU)
    }
    fn jacobian_derivatives(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        // ∂/∂x₁ and ∂/∂x₂ of the Jacobian above.
        let s = (TAU * (x[1] - x[0])).sin();
        let s1 = (TAU * x[0]).sin();
        let s2 = (TAU * x[1]).sin();
        let t2 = TAU * TAU;
        let d1 = DMatrix::from_row_slice(2, 2, &[-s1 - s, s, s, -s]) * t2;
        let d2 = DMatrix::from_row_slice(2, 2, &[s, -s, -s, -s2 + s]) * t2;
        Some(vec![d1, d2])
    }
}

/// `φ(x) = c·x` (the `2x` twist of the standard map when `c = 2`).
#[derive(Clone, Debug)]
pub struct ScaledIdentity {
    pub n: usize,
    pub scale: f64,
}

impl SmoothMap for ScaledIdentity {
    fn name(&self) -> &str {
        if self.scale == 2.0 {
            "doubling"
        } else if self.scale == 1.0 {
            "identity"
        } else if self.scale == 0.0 {
            "zero"
        } else {
            "scaled_identity"
        }
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().map(|&t| self.scale * t))
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(x.len(), x.len()) * self.scale)
    }
    fn jacobian_derivatives(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(x.len(), x.len()); x.len()])
    }
}

/// A map given on the unit torus, re-expressed on `[0, period)^N`:
/// `ψ̃(θ) = ψ(θ / period)`.
#[derive(Clone, Debug)]
pub struct Reparametrized<M> {
    pub inner: M,
    pub period: f64,
}

impl<M: SmoothMap> SmoothMap for Reparametrized<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        self.inner.eval(&self.unit(x))
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.inner.jacobian(&self.unit(x)).map(|j| j / self.period)
    }
    fn jacobian_derivatives(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let p2 = self.period * self.period;
        self.inner
            .jacobian_derivatives(&self.unit(x))
            .map(|v| v.into_iter().map(|m| m / p2).collect())
    }
    fn period(&self) -> f64 {
        self.period
    }
}

impl<M> Reparametrized<M> {
    fn unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|t| t / self.period).collect()
    }
}

/// Look up a built-in smooth map by its registry name.
pub fn smooth_map_by_name(name: &str, n: usize) -> Result<Arc<dyn SmoothMap>> {
    Ok(match name {
        "sine" => Arc::new(SineKick { n }),
        "strong_coupling" if n == 2 => Arc::new(StrongCouplingPsi),
        "strong_coupling" => {
            return Err(Error::Config("strong_coupling requires N = 2".into()));
        }
        "doubling" => Arc::new(ScaledIdentity { n, scale: 2.0 }),
        "identity" => Arc::new(ScaledIdentity { n, scale: 1.0 }),
        "zero" => Arc::new(ScaledIdentity { n, scale: 0.0 }),
        other => return Err(Error::Config(format!("unknown smooth map `{other}`"))),
    })
}

/// `D_x f` and the assembled cocycle `[[D_x f, -I], [I, 0]]`.
#[derive(Clone, Debug)]
pub struct JacobianBlock {
    pub dxf: DMatrix<f64>,
    pub assembled: DMatrix<f64>,
}

impl JacobianBlock {
    pub fn from_dxf(dxf: DMatrix<f64>) -> Self {
        let n = dxf.nrows();
        let mut assembled = DMatrix::zeros(2 * n, 2 * n);
        assembled.view_mut((0, 0), (n, n)).copy_from(&dxf);
        for i in 0..n {
            assembled[(i, n + i)] = -1.0;
            assembled[(n + i, i)] = 1.0;
        }
        Self { dxf, assembled }
    }

    /// Exact inverse `[[0, I], [-I, D_x f]]`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dxf.nrows();
        let mut inv = DMatrix::zeros(2 * n, 2 * n);
        inv.view_mut((n, n), (n, n)).copy_from(&self.dxf);
        for i in 0..n {
            inv[(i, n + i)] = 1.0;
            inv[(n + i, i)] = -1.0;
        }
        inv
    }
}

/// The deterministic family `f_L`.
#[derive(Clone, Debug)]
pub enum MapFamily {
    /// `f_i = 2x_i + L sin 2πx_i + Σ_{j≠i} μ_ij sin 2π(x_j − x_i)` with symmetric `μ`.
    CoupledStandard { n: usize, l: f64, mu: DMatrix<f64> },
    /// The `N = 2` family with coupling amplitude equal to `L`.
    StrongCoupling2 { l: f64 },
    /// `f = L ψ + φ` for caller-supplied smooth maps.
    GenericLPsiPhi {
        n: usize,
        l: f64,
        psi: Arc<dyn SmoothMap>,
        phi: Arc<dyn SmoothMap>,
    },
    /// `f(x) = A x` for an integer matrix `A`; constant cocycle, exact spectrum.
    LinearTest { a: DMatrix<f64> },
}

impl MapFamily {
    pub fn coupled_standard(n: usize, l: f64, mu: Option<DMatrix<f64>>) -> Result<Self> {
        let mu = mu.unwrap_or_else(|| DMatrix::zeros(n, n));
        let fam = Self::CoupledStandard { n, l, mu };
        fam.validate()?;
        Ok(fam)
    }

    pub fn strong_coupling(l: f64) -> Result<Self> {
        let fam = Self::StrongCoupling2 { l };
        fam.validate()?;
        Ok(fam)
    }

    pub fn generic(l: f64, psi: Arc<dyn SmoothMap>, phi: Arc<dyn SmoothMap>) -> Result<Self> {
        let fam = Self::GenericLPsiPhi {
            n: psi.dim(),
            l,
            psi,
            phi,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn linear(a: Vec<Vec<i64>>) -> Result<Self> {
        let n = a.len();
        if n == 0 || a.iter().any(|row| row.len() != n) {
            return Err(Error::Config("A must be a nonempty square matrix".into()));
        }
        let a = DMatrix::from_fn(n, n, |i, j| a[i][j] as f64);
        Ok(Self::LinearTest { a })
    }

    pub fn validate(&self) -> Result<()> {
        let check_l = |l: f64| {
            if l.is_finite() && l >= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "L must be a finite real >= 1 (got {l})"
                )))
            }
        };
        match self {
            Self::CoupledStandard { n, l, mu } => {
                check_l(*l)?;
                if *n == 0 {
                    return Err(Error::Config("N must be positive".into()));
                }
                if mu.nrows() != *n || mu.ncols() != *n {
                    return Err(Error::Config(format!("mu must be {n}x{n}")));
                }
                for i in 0..*n {
                    if mu[(i, i)] != 0.0 {
                        return Err(Error::Config("mu must have zero diagonal".into()));
                    }
                    for j in 0..*n {
                        if !mu[(i, j)].is_finite() {
                            return Err(Error::Config("mu entries must be finite".into()));
                        }
                        if mu[(i, j)] != mu[(j, i)] {
                            return Err(Error::Config("mu must be symmetric".into()));
                        }
                    }
                }
                Ok(())
            }
            Self::StrongCoupling2 { l } => check_l(*l),
            Self::GenericLPsiPhi { n, l, psi, phi } => {
                check_l(*l)?;
                if psi.dim() != *n || phi.dim() != *n || *n == 0 {
                    return Err(Error::Config(
                        "psi and phi must share a positive dimension".into(),
                    ));
                }
                Ok(())
            }
            Self::LinearTest { a } => {
                if a.nrows() == 0 || a.nrows() != a.ncols() {
                    return Err(Error::Config("A must be a nonempty square matrix".into()));
                }
                Ok(())
            }
        }
    }

    /// Number of degrees of freedom `N` (the torus is `T^{2N}`).
    pub fn n(&self) -> usize {
        match self {
            Self::CoupledStandard { n, .. } | Self::GenericLPsiPhi { n, .. } => *n,
            Self::StrongCoupling2 { .. } => 2,
            Self::LinearTest { a } => a.nrows(),
        }
    }

    /// The large parameter `L`, absent for the linear test family.
    pub fn l(&self) -> Option<f64> {
        match self {
            Self::CoupledStandard { l, .. }
            | Self::StrongCoupling2 { l }
            | Self::GenericLPsiPhi { l, .. } => Some(*l),
            Self::LinearTest { .. } => None,
        }
    }

    /// Same family with a different `L` (used by sweeps).
    pub fn with_l(&self, new_l: f64) -> Result<Self> {
        let fam = match self.clone() {
            Self::CoupledStandard { n, mu, .. } => Self::CoupledStandard { n, l: new_l, mu },
            Self::StrongCoupling2 { .. } => Self::StrongCoupling2 { l: new_l },
            Self::GenericLPsiPhi { n, psi, phi, .. } => Self::GenericLPsiPhi {
                n,
                l: new_l,
                psi,
                phi,
            },
            Self::LinearTest { .. } => {
                return Err(Error::Unsupported("LinearTest has no parameter L".into()));
            }
        };
        fam.validate()?;
        Ok(fam)
    }

    /// True when `D_x f` comes from finite differences rather than an
    /// analytic formula.
    pub fn uses_finite_difference(&self) -> bool {
        match self {
            Self::GenericLPsiPhi { psi, phi, .. } => {
                let probe = vec![0.0; psi.dim()];
                psi.jacobian(&probe).is_none() || phi.jacobian(&probe).is_none()
            }
            _ => false,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn coupling(&self) -> Option<(f64, CouplingRef<'_>)> {
        match self {
            Self::CoupledStandard { l, mu, .. } => Some((*l, CouplingRef::Matrix(mu))),
            Self::StrongCoupling2 { l } => Some((*l, CouplingRef::Uniform(*l))),
            _ => None,
        }
    }

    /// `f_L(x)`, not reduced modulo 1.
    pub fn eval_f(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let n = self.n();
        if let Some((l, mu)) = self.coupling() {
            let mut out = DVector::zeros(n);
            for i in 0..n {
                let mut v = 2.0 * x[i] + l * (TAU * x[i]).sin();
                for j in 0..n {
                    if j != i {
                        v += mu.get(i, j) * (TAU * (x[j] - x[i])).sin();
                    }
                }
                out[i] = v;
            }
            return Ok(out);
        }
        Ok(match self {
            Self::GenericLPsiPhi { l, psi, phi, .. } => psi.eval(x) * *l + phi.eval(x),
            Self::LinearTest { a } => a * DVector::from_column_slice(x),
            _ => unreachable!(),
        })
    }

    /// Analytic `D_x f_L`.
    pub fn jac_f(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let n = self.n();
        if let Some((l, mu)) = self.coupling() {
            let mut out = DMatrix::zeros(n, n);
            for i in 0..n {
                let mut diag = 2.0 + TAU * l * (TAU * x[i]).cos();
                for j in 0..n {
                    if j != i {
                        let c = TAU * mu.get(i, j) * (TAU * (x[j] - x[i])).cos();
                        out[(i, j)] = c;
                        diag -= c;
                    }
                }
                out[(i, i)] = diag;
            }
            return Ok(out);
        }
        Ok(match self {
            Self::GenericLPsiPhi { l, psi, phi, .. } => {
                let dpsi = psi
                    .jacobian(x)
                    .unwrap_or_else(|| finite_difference_jacobian(|p| psi.eval(p), x, 1e-6));
                let dphi = phi
                    .jacobian(x)
                    .unwrap_or_else(|| finite_difference_jacobian(|p| phi.eval(p), x, 1e-6));
                dpsi * *l + dphi
            }
            Self::LinearTest { a } => a.clone(),
            _ => unreachable!(),
        })
    }

    /// `F(x, y) = (f(x) − y mod 1, x)`.
    pub fn map_point(&self, z: &TorusPoint) -> Result<TorusPoint> {
        let n = self.n();
        if z.n() != n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: z.dim(),
            });
        }
        let fx = self.eval_f(z.x())?;
        let mut coords = Vec::with_capacity(2 * n);
        coords.extend((0..n).map(|i| reduce(fx[i] - z.y()[i])));
        coords.extend_from_slice(z.x());
        Ok(TorusPoint::from_reduced(coords))
    }

    /// `F⁻¹(x, y) = (y, f(y) − x mod 1)`.
    pub fn inverse_point(&self, z: &TorusPoint) -> Result<TorusPoint> {
        let n = self.n();
        if z.n() != n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: z.dim(),
            });
        }
        let fy = self.eval_f(z.y())?;
        let mut coords = Vec::with_capacity(2 * n);
        coords.extend_from_slice(z.y());
        coords.extend((0..n).map(|i| reduce(fy[i] - z.x()[i])));
        Ok(TorusPoint::from_reduced(coords))
    }

    /// `D_z F` as a [`JacobianBlock`].
    pub fn map_jacobian(&self, z: &TorusPoint) -> Result<JacobianBlock> {
        if z.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n(),
                got: z.dim(),
            });
        }
        Ok(JacobianBlock::from_dxf(self.jac_f(z.x())?))
    }

    /// Threshold `L^{N − (1 − β)}` on `|det D_x f|` below which `x` is critical.
    pub fn critical_threshold(&self, beta: f64) -> Result<f64> {
        let l = self
            .l()
            .ok_or_else(|| Error::Unsupported("critical set needs a parameter L".into()))?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive (got {beta})")));
        }
        Ok(l.powf(self.n() as f64 - (1.0 - beta)))
    }

    /// Membership of `x` in `B_β = {|det D_x f| ≤ L^{N − (1 − β)}}`.
    pub fn in_critical_set(&self, x: &[f64], beta: f64) -> Result<bool> {
        let threshold = self.critical_threshold(beta)?;
        Ok(self.jac_f(x)?.determinant().abs() <= threshold)
    }

    /// Empirical `sup ‖D_x f‖ / L` over uniform samples; stands in for the
    /// growth constant of the family.
    pub fn empirical_growth_constant<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        samples: usize,
    ) -> Result<f64> {
        let l = self
            .l()
            .ok_or_else(|| Error::Unsupported("growth constant needs a parameter L".into()))?;
        let mut sup = 0.0f64;
        for _ in 0..samples {
            let x: Vec<f64> = (0..self.n()).map(|_| rng.random()).collect();
            sup = sup.max(self.jac_f(&x)?.norm_spectral() / l);
        }
        Ok(sup)
    }
}

enum CouplingRef<'a> {
    Matrix(&'a DMatrix<f64>),
    Uniform(f64),
}

impl CouplingRef<'_> {
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            CouplingRef::Matrix(m) => m[(i, j)],
            CouplingRef::Uniform(v) => *v,
        }
    }
}

/// Config-document form of [`MapFamily`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum FamilyDescriptor {
    CoupledStandard {
        #[serde(alias = "N")]
        n: usize,
        #[serde(alias = "L")]
        l: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<Vec<Vec<f64>>>,
    },
    StrongCoupling2 {
        #[serde(alias = "L")]
        l: f64,
    },
    GenericLPsiPhi {
        #[serde(alias = "N")]
        n: usize,
        #[serde(alias = "L")]
        l: f64,
        psi: String,
        phi: String,
    },
    LinearTest {
        #[serde(alias = "A")]
        a: Vec<Vec<i64>>,
    },
}

impl TryFrom<&FamilyDescriptor> for MapFamily {
    type Error = Error;

    fn try_from(d: &FamilyDescriptor) -> Result<Self> {
        match d {
            FamilyDescriptor::CoupledStandard { n, l, mu } => {
                let mu = match mu {
                    None => None,
                    Some(rows) => {
                        if rows.len() != *n || rows.iter().any(|r| r.len() != *n) {
                            return Err(Error::Config(format!("mu must be {n}x{n}")));
                        }
                        Some(DMatrix::from_fn(*n, *n, |i, j| rows[i][j]))
                    }
                };
                MapFamily::coupled_standard(*n, *l, mu)
            }
            FamilyDescriptor::StrongCoupling2 { l } => MapFamily::strong_coupling(*l),
            FamilyDescriptor::GenericLPsiPhi { n, l, psi, phi } => MapFamily::generic(
                *l,
                smooth_map_by_name(psi, *n)?,
                smooth_map_by_name(phi, *n)?,
            ),
            FamilyDescriptor::LinearTest { a } => MapFamily::linear(a.clone()),
        }
    }
}

impl From<&MapFamily> for FamilyDescriptor {
    fn from(f: &MapFamily) -> Self {
        match f {
            MapFamily::CoupledStandard { n, l, mu } => FamilyDescriptor::CoupledStandard {
                n: *n,
                l: *l,
                mu: Some(
                    (0..*n)
                        .map(|i| (0..*n).map(|j| mu[(i, j)]).collect())
                        .collect(),
                ),
            },
            MapFamily::StrongCoupling2 { l } => FamilyDescriptor::StrongCoupling2 { l: *l },
            MapFamily::GenericLPsiPhi { n, l, psi, phi } => FamilyDescriptor::GenericLPsiPhi {
                n: *n,
                l: *l,
                psi: psi.name().to_string(),
                phi: phi.name().to_string(),
            },
            MapFamily::LinearTest { a } => FamilyDescriptor::LinearTest {
                a: (0..a.nrows())
                    .map(|i| (0..a.ncols()).map(|j| a[(i, j)] as i64).collect())
                    .collect(),
            },
        }
    }
}

impl Serialize for MapFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FamilyDescriptor::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MapFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let desc = FamilyDescriptor::deserialize(d)?;
        MapFamily::try_from(&desc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::derive_stream;
    use std::f64::consts::PI;

    fn families() -> Vec<MapFamily> {
        let mu3 = DMatrix::from_row_slice(3, 3, &[0.0, 0.7, -0.3, 0.7, 0.0, 1.1, -0.3, 1.1, 0.0]);
        vec![
            MapFamily::coupled_standard(1, 10.0, None).unwrap(),
            MapFamily::coupled_standard(3, 50.0, Some(mu3)).unwrap(),
            MapFamily::strong_coupling(5.0).unwrap(),
            MapFamily::generic(
                20.0,
                Arc::new(StrongCouplingPsi),
                Arc::new(ScaledIdentity { n: 2, scale: 2.0 }),
            )
            .unwrap(),
            MapFamily::linear(vec![vec![2, 1], vec![1, 1]]).unwrap(),
        ]
    }

    #[test]
    fn reduce_edge_cases() {
        assert_eq!(reduce(-1e-20), 0.0);
        assert_eq!(reduce(-0.25), 0.75);
        assert_eq!(reduce(3.0), 0.0);
        assert_eq!(centered(0.75), -0.25);
        assert_eq!(centered(-0.5), -0.5);
    }

    #[test]
    fn eval_f_examples() {
        let fam = MapFamily::coupled_standard(1, 10.0, None).unwrap();
        assert!((fam.eval_f(&[0.25]).unwrap()[0] - 10.5).abs() < 1e-12);
        assert_eq!(fam.eval_f(&[0.0]).unwrap()[0], 0.0);
        let sc = MapFamily::strong_coupling(5.0).unwrap();
        let v = sc.eval_f(&[0.25, 0.25]).unwrap();
        assert!((v[0] - 5.5).abs() < 1e-12 && (v[1] - 5.5).abs() < 1e-12);
        assert!(matches!(
            fam.eval_f(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jac_f_examples() {
        let fam = MapFamily::coupled_standard(1, 10.0, None).unwrap();
        assert!((fam.jac_f(&[0.25]).unwrap()[(0, 0)] - 2.0).abs() < 1e-12);
        let fam = MapFamily::coupled_standard(1, 100.0, None).unwrap();
        assert!((fam.jac_f(&[0.0]).unwrap()[(0, 0)] - (2.0 + 200.0 * PI)).abs() < 1e-9);
    }

    #[test]
    fn jac_f_matches_finite_differences() {
        let mut rng = derive_stream(3, 0);
        for fam in families() {
            for _ in 0..1000 {
                let x: Vec<f64> = (0..fam.n()).map(|_| rng.random()).collect();
                let fd = finite_difference_jacobian(|p| fam.eval_f(p).unwrap(), &x, 1e-6);
                let an = fam.jac_f(&x).unwrap();
                assert!((fd - an).amax() < 1e-5 * fam.l().unwrap_or(1.0).max(1.0));
            }
        }
    }

    #[test]
    fn linear_map_example() {
        let fam = MapFamily::linear(vec![vec![3]]).unwrap();
        let z = TorusPoint::new(vec![0.1, 0.4]).unwrap();
        let out = fam.map_point(&z).unwrap();
        assert!((out.coords()[0] - 0.9).abs() < 1e-12);
        assert!((out.coords()[1] - 0.1).abs() < 1e-15);
        let jb = fam.map_jacobian(&z).unwrap();
        assert_eq!(
            jb.assembled,
            DMatrix::from_row_slice(2, 2, &[3.0, -1.0, 1.0, 0.0])
        );
        assert!((jb.assembled.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_round_trip_and_unit_determinant() {
        let mut rng = derive_stream(4, 0);
        for fam in families() {
            for _ in 0..1000 {
                let z = TorusPoint::uniform(&mut rng, fam.n());
                let back = fam.inverse_point(&fam.map_point(&z).unwrap()).unwrap();
                for (a, b) in z.coords().iter().zip(back.coords()) {
                    assert!(centered(a - b).abs() < 1e-12);
                }
                let det = fam.map_jacobian(&z).unwrap().assembled.determinant();
                assert!((det - 1.0).abs() < 1e-10, "det {det}");
            }
        }
    }

    #[test]
    fn block_inverse_is_exact() {
        let fam = MapFamily::coupled_standard(2, 30.0, None).unwrap();
        let z = TorusPoint::new(vec![0.1, 0.7, 0.3, 0.2]).unwrap();
        let jb = fam.map_jacobian(&z).unwrap();
        let prod = &jb.assembled * jb.inverse();
        assert!((prod - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn critical_set_examples() {
        let fam = MapFamily::coupled_standard(1, 100.0, None).unwrap();
        assert!(fam.in_critical_set(&[0.25], 0.5).unwrap());
        assert!(!fam.in_critical_set(&[0.0], 0.5).unwrap());
        let lin = MapFamily::linear(vec![vec![3]]).unwrap();
        assert!(matches!(
            lin.in_critical_set(&[0.1], 0.5),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn minimum_norm_bound_on_good_set() {
        // m(D) ≥ |det D| / ‖D‖^{N−1} for every matrix, and |det| > L^{N−1+β} on G_β.
        let fam = MapFamily::coupled_standard(3, 1e3, None).unwrap();
        let beta = 0.5;
        let mut rng = derive_stream(5, 0);
        let threshold = fam.critical_threshold(beta).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            if fam.in_critical_set(&x, beta).unwrap() {
                continue;
            }
            let d = fam.jac_f(&x).unwrap();
            let sv = d.singular_values();
            let m = sv.min();
            let norm = sv.max();
            let det = d.determinant().abs();
            assert!(det > threshold);
            assert!(m >= det / norm.powi(2) * (1.0 - 1e-9));
        }
    }

    #[test]
    fn rejects_asymmetric_coupling() {
        let mu = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        let err = MapFamily::coupled_standard(2, 10.0, Some(mu)).unwrap_err();
        assert!(err.to_string().contains("mu must be symmetric"));
    }

    #[test]
    fn descriptor_round_trip() {
        for fam in families() {
            let text = serde_json::to_string(&fam).unwrap();
            let back: MapFamily = serde_json::from_str(&text).unwrap();
            assert_eq!(FamilyDescriptor::from(&fam), FamilyDescriptor::from(&back));
        }
        let bad = r#"{"type":"StrongCoupling2","l":5.0,"typo":1}"#;
        assert!(serde_json::from_str::<MapFamily>(bad).is_err());
    }

    #[test]
    fn growth_constant_is_near_two_pi() {
        let fam = MapFamily::coupled_standard(1, 1e4, None).unwrap();
        let c0 = fam
            .empirical_growth_constant(&mut derive_stream(1, 1), 10_000)
            .unwrap();
        assert!(c0 > 6.0 && c0 <= TAU + 1e-3);
    }
}
