//! `k`-planes in `R^{2N}` stored as orthonormal frames.
//!
//! Charts over the horizontal space `R^x` ([`GraphRep`]) are derived views;
//! frames are valid everywhere on the Grassmannian.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative singular-value floor below which a frame is rank deficient.
const RANK_TOL: f64 = 1e-12;
/// Condition number above which a plane is not treated as a graph.
const GRAPH_COND_LIMIT: f64 = 1e12;
/// Angles below this are reported as exactly zero.
const ANGLE_FLOOR: f64 = 1e-8;

/// Operator 2-norm (largest singular value).
pub trait SpectralNorm {
    fn norm_spectral(&self) -> f64;
}

impl SpectralNorm for DMatrix<f64> {
    fn norm_spectral(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.singular_values().max()
    }
}

/// Which half of `R^{2N} = R^x ⊕ R^y` a cone or chart is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Column-orthonormal frame spanning a subspace.
#[derive(Clone, Debug)]
pub struct SubspaceFrame {
    cols: DMatrix<f64>,
}

/// Thin QR with positive diagonal. Returns `(Q, diag(R))`.
pub(crate) fn qr_positive(m: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let k = m.ncols();
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = DVector::zeros(k);
    for i in 0..k {
        let rii = r[(i, i)];
        if rii < 0.0 {
            q.column_mut(i).neg_mut();
        }
        diag[i] = rii.abs();
    }
    (q, diag)
}

impl SubspaceFrame {
    /// Orthonormalize `raw`, keeping its column span.
    pub fn orthonormalize(raw: DMatrix<f64>) -> Result<Self> {
        if raw.ncols() == 0 || raw.ncols() > raw.nrows() {
            return Err(Error::DegenerateSubspace(format!(
                "{}x{} matrix cannot span a frame",
                raw.nrows(),
                raw.ncols()
            )));
        }
        let sv = raw.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smax.is_finite() && smin >= RANK_TOL * smax) || smax == 0.0 {
            return Err(Error::DegenerateSubspace(format!(
                "singular values span [{smin:.3e}, {smax:.3e}]"
            )));
        }
        let (q, _) = qr_positive(raw);
        Ok(Self { cols: q })
    }

    /// Wrap a matrix already known to be orthonormal.
    pub(crate) fn from_orthonormal(cols: DMatrix<f64>) -> Self {
        Self { cols }
    }

    /// The coordinate plane `R^x` (axis X) or `R^y` (axis Y) in `R^{2n}`.
    pub fn coordinate_plane(n: usize, axis: Axis) -> Self {
        let offset = match axis {
            Axis::X => 0,
            Axis::Y => n,
        };
        let mut cols = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            cols[(offset + i, i)] = 1.0;
        }
        Self { cols }
    }

    /// Frame of `graph(G) = {(u, G u)}`.
    pub fn from_graph(g: &GraphRep) -> Result<Self> {
        let n = g.matrix.nrows();
        let mut raw = DMatrix::zeros(2 * n, n);
        raw.view_mut((0, 0), (n, n)).fill_with_identity();
        raw.view_mut((n, 0), (n, n)).copy_from(&g.matrix);
        Self::orthonormalize(raw)
    }

    pub fn cols(&self) -> &DMatrix<f64> {
        &self.cols
    }

    /// Subspace dimension `k`.
    pub fn dim(&self) -> usize {
        self.cols.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.cols.nrows()
    }

    /// Orthogonal projector onto the span.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.cols * self.cols.transpose()
    }

    /// Largest deviation of `colsᵀ cols` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.cols.transpose() * &self.cols - DMatrix::identity(self.dim(), self.dim())).amax()
    }

    /// Same subspace, different basis: `cols · O` for orthogonal `O`.
    pub fn rotated_basis(&self, o: &DMatrix<f64>) -> Self {
        Self {
            cols: &self.cols * o,
        }
    }

    fn halves(&self, axis: Axis) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.ambient_dim() / 2;
        let k = self.dim();
        let top = self.cols.view((0, 0), (n, k)).into_owned();
        let bottom = self.cols.view((n, 0), (n, k)).into_owned();
        match axis {
            Axis::X => (top, bottom),
            Axis::Y => (bottom, top),
        }
    }
}

/// `G : R^x → R^y` with `graph(G) = {(u, G u)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphRep {
    pub matrix: DMatrix<f64>,
}

impl GraphRep {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    /// Spectral norm `‖G‖`.
    pub fn norm(&self) -> f64 {
        self.matrix.norm_spectral()
    }
}

/// Jordan (principal) angles `ψ₁ ≤ … ≤ ψ_k` in `[0, π/2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct JordanAngles {
    pub psi: Vec<f64>,
}

impl JordanAngles {
    pub fn largest(&self) -> f64 {
        self.psi.last().copied().unwrap_or(0.0)
    }
}

fn check_pair(e: &SubspaceFrame, f: &SubspaceFrame) -> Result<()> {
    if e.ambient_dim() != f.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: e.ambient_dim(),
            got: f.ambient_dim(),
        });
    }
    if e.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: f.dim(),
        });
    }
    Ok(())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Principal angles between two `k`-planes.
///
/// Cosines come from `σ(Eᵀ F)` and sines from `σ((I − Π_F) E)`; each angle is
/// read from whichever is better conditioned (sine below π/4, cosine above).
pub fn principal_angles(e: &SubspaceFrame, f: &SubspaceFrame) -> Result<JordanAngles> {
    check_pair(e, f)?;
    // The angles are symmetric in (E, F); a canonical order makes the
    // floating-point evaluation symmetric too.
    let (e, f) = match e.cols.as_slice().partial_cmp(f.cols.as_slice()) {
        Some(std::cmp::Ordering::Greater) => (f, e),
        _ => (e, f),
    };
    let k = e.dim();
    // descending cosines pair with ascending angles
    let mut cos = sorted(
        (e.cols.transpose() * &f.cols)
            .singular_values()
            .iter()
            .map(|c| c.clamp(0.0, 1.0))
            .collect(),
    );
    cos.reverse();
    let residual = &e.cols - &f.cols * (f.cols.transpose() * &e.cols);
    let mut sin: Vec<f64> = residual
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    sin.resize(k, 0.0);
    let sin = sorted(sin);
    let psi = (0..k)
        .map(|i| {
            let angle = if sin[i] < std::f64::consts::FRAC_1_SQRT_2 {
                sin[i].asin()
            } else {
                cos[i].acos()
            };
            if angle < ANGLE_FLOOR {
                0.0
            } else {
                angle.min(FRAC_PI_2)
            }
        })
        .collect();
    Ok(JordanAngles { psi: sorted(psi) })
}

/// `d_H(E, F) = sin ψ_k = ‖(I − Π_F) Π_E‖`.
pub fn d_hausdorff(e: &SubspaceFrame, f: &SubspaceFrame) -> Result<f64> {
    Ok(principal_angles(e, f)?.largest().sin())
}

/// Geodesic distance `sqrt(Σ ψ_i²)`.
pub fn d_geodesic(e: &SubspaceFrame, f: &SubspaceFrame) -> Result<f64> {
    Ok(principal_angles(e, f)?
        .psi
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt())
}

/// Whether `E` lies in the cone `C_α` around `R^x` (or `R^y`): `E` must be a
/// graph over that axis with slope `‖G‖ ≤ α`.
pub fn cone_membership(e: &SubspaceFrame, alpha: f64, axis: Axis) -> bool {
    cone_slope(e, axis).is_some_and(|s| s <= alpha)
}

/// `‖G‖` for `E = graph(G)` over `axis`, or `None` if `E` is not a graph.
pub fn cone_slope(e: &SubspaceFrame, axis: Axis) -> Option<f64> {
    if e.ambient_dim() != 2 * e.dim() {
        return None;
    }
    graph_over(e, axis).ok().map(|g| g.norm())
}

fn graph_over(e: &SubspaceFrame, axis: Axis) -> Result<GraphRep> {
    let (base, fibre) = e.halves(axis);
    let sv = base.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= GRAPH_COND_LIMIT) {
        return Err(Error::NotAGraph { condition });
    }
    let inv = base.try_inverse().ok_or(Error::NotAGraph { condition })?;
    Ok(GraphRep::new(fibre * inv))
}

/// Chart of `E` over `R^x`: `G = (Π^y E)(Π^x E)⁻¹`.
pub fn graph_from_frame(e: &SubspaceFrame) -> Result<GraphRep> {
    if e.ambient_dim() != 2 * e.dim() {
        return Err(Error::DimensionMismatch {
            expected: 2 * e.dim(),
            got: e.ambient_dim(),
        });
    }
    graph_over(e, Axis::X)
}

/// Induced action on charts: `G' = (D_x f − G)⁻¹`.
pub fn graph_transform(g: &GraphRep, dxf: &DMatrix<f64>) -> Result<GraphRep> {
    if g.matrix.shape() != dxf.shape() {
        return Err(Error::DimensionMismatch {
            expected: dxf.nrows(),
            got: g.matrix.nrows(),
        });
    }
    let m = dxf - &g.matrix;
    let sv = m.singular_values();
    if sv.min() <= 1e-14 * sv.max().max(1.0) {
        return Err(Error::ConeDegeneracy);
    }
    m.try_inverse()
        .map(GraphRep::new)
        .ok_or(Error::ConeDegeneracy)
}

/// Image `A(E)` as an orthonormal frame.
pub fn apply_linear(a: &DMatrix<f64>, e: &SubspaceFrame) -> Result<SubspaceFrame> {
    if a.ncols() != e.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: e.ambient_dim(),
            got: a.ncols(),
        });
    }
    SubspaceFrame::orthonormalize(a * &e.cols)
}

/// `log det(A|_E)`, the log volume ratio of `A` restricted to `E`.
pub fn log_restricted_det(a: &DMatrix<f64>, e: &SubspaceFrame) -> Result<f64> {
    if a.ncols() != e.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: e.ambient_dim(),
            got: a.ncols(),
        });
    }
    let (_, diag) = qr_positive(a * &e.cols);
    Ok(diag.iter().map(|d| d.ln()).sum())
}

/// `det(A|_E) = sqrt(det((A E)ᵀ (A E)))`.
pub fn restricted_det(a: &DMatrix<f64>, e: &SubspaceFrame) -> Result<f64> {
    Ok(log_restricted_det(a, e)?.exp())
}

/// Volume factor `sqrt(det(I + GᵀG))` of `u ↦ (u, G u)`.
pub fn graph_volume_factor(g: &GraphRep) -> f64 {
    let n = g.matrix.ncols();
    (DMatrix::identity(n, n) + g.matrix.transpose() * &g.matrix)
        .determinant()
        .sqrt()
}

/// Haar-distributed `k`-plane in `R^{ambient}`.
pub fn haar_random_subspace<R: Rng + ?Sized>(
    rng: &mut R,
    ambient: usize,
    k: usize,
) -> SubspaceFrame {
    assert!(k >= 1 && k <= ambient, "need 1 <= k <= ambient");
    loop {
        let raw = DMatrix::from_fn(ambient, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(frame) = SubspaceFrame::orthonormalize(raw) {
            return frame;
        }
    }
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with positive diagonal).
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    haar_random_subspace(rng, dim, dim).cols
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::derive_stream;

    fn frame(cols: &[&[f64]]) -> SubspaceFrame {
        let m = cols[0].len();
        let raw = DMatrix::from_fn(m, cols.len(), |i, j| cols[j][i]);
        SubspaceFrame::orthonormalize(raw).unwrap()
    }

    /// `‖(I − Π_F) Π_E‖` computed directly from projectors.
    fn projector_gap(e: &SubspaceFrame, f: &SubspaceFrame) -> f64 {
        let m = e.ambient_dim();
        ((DMatrix::identity(m, m) - f.projector()) * e.projector()).norm_spectral()
    }

    #[test]
    fn orthonormalize_examples() {
        let e = frame(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
        assert_eq!(
            e.cols(),
            &DMatrix::from_fn(4, 2, |i, j| (i == j) as u8 as f64)
        );
        let raw = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let a = SubspaceFrame::orthonormalize(raw.clone()).unwrap();
        let b = SubspaceFrame::orthonormalize(raw * 7.0).unwrap();
        assert!((a.cols() - b.cols()).amax() < 1e-14);
        let mut rng = derive_stream(10, 0);
        let g = DMatrix::from_fn(4, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        assert!(
            SubspaceFrame::orthonormalize(g)
                .unwrap()
                .orthonormality_error()
                < 1e-12
        );
    }

    #[test]
    fn orthonormalize_rejects_rank_deficient() {
        let raw = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            SubspaceFrame::orthonormalize(raw),
            Err(Error::DegenerateSubspace(_))
        ));
    }

    #[test]
    fn principal_angle_examples() {
        let e = frame(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
        let f = frame(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]]);
        assert_eq!(principal_angles(&e, &e).unwrap().psi, vec![0.0, 0.0]);
        let psi = principal_angles(&e, &f).unwrap().psi;
        assert!(psi[0].abs() < 1e-15 && (psi[1] - FRAC_PI_2).abs() < 1e-12);
        assert!((d_geodesic(&e, &f).unwrap() - FRAC_PI_2).abs() < 1e-12);
        let t = 0.3f64;
        let a = frame(&[&[1.0, 0.0]]);
        let b = frame(&[&[t.cos(), t.sin()]]);
        assert!((principal_angles(&a, &b).unwrap().psi[0] - t).abs() < 1e-14);
        let c = frame(&[&[0.0, 1.0]]);
        assert!((d_hausdorff(&a, &c).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(d_hausdorff(&a, &a).unwrap(), 0.0);
        assert!(matches!(
            principal_angles(&a, &e),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hausdorff_matches_projector_norm_and_metric_equivalence() {
        let mut rng = derive_stream(11, 0);
        for _ in 0..10_000 {
            let e = haar_random_subspace(&mut rng, 4, 2);
            let f = haar_random_subspace(&mut rng, 4, 2);
            let dh = d_hausdorff(&e, &f).unwrap();
            let dg = d_geodesic(&e, &f).unwrap();
            assert!((dh - projector_gap(&e, &f)).abs() <= 1e-9);
            let psi_max = principal_angles(&e, &f).unwrap().largest();
            assert!(2.0 / std::f64::consts::PI * psi_max <= dh + 1e-12);
            assert!(dh <= psi_max + 1e-12 && psi_max <= dg + 1e-12);
            assert!(dg <= 2f64.sqrt() * psi_max + 1e-12);
        }
    }

    #[test]
    fn small_angles_are_accurate() {
        let t = 1e-7f64;
        let a = frame(&[&[1.0, 0.0, 0.0]]);
        let b = frame(&[&[t.cos(), t.sin(), 0.0]]);
        let psi = principal_angles(&a, &b).unwrap().psi[0];
        assert!((psi - t).abs() < 1e-15);
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = derive_stream(12, 0);
        for _ in 0..1000 {
            let a = haar_random_subspace(&mut rng, 6, 3);
            let b = haar_random_subspace(&mut rng, 6, 3);
            let c = haar_random_subspace(&mut rng, 6, 3);
            for d in [d_geodesic, d_hausdorff] {
                assert_eq!(d(&a, &b).unwrap(), d(&b, &a).unwrap());
                assert!(d(&a, &c).unwrap() <= d(&a, &b).unwrap() + d(&b, &c).unwrap() + 1e-9);
            }
        }
    }

    #[test]
    fn basis_choice_is_irrelevant() {
        let mut rng = derive_stream(13, 0);
        for _ in 0..200 {
            let e = haar_random_subspace(&mut rng, 4, 2);
            let f = haar_random_subspace(&mut rng, 4, 2);
            let e2 = e.rotated_basis(&haar_orthogonal(&mut rng, 2));
            let pa = principal_angles(&e, &f).unwrap().psi;
            let pb = principal_angles(&e2, &f).unwrap().psi;
            for (x, y) in pa.iter().zip(&pb) {
                assert!((x - y).abs() < 1e-9);
            }
            let g1 = graph_from_frame(&e).unwrap();
            let g2 = graph_from_frame(&e2).unwrap();
            assert!((&g1.matrix - &g2.matrix).amax() < 1e-9 * g2.norm().max(1.0));
        }
    }

    #[test]
    fn cone_examples() {
        let rx = SubspaceFrame::coordinate_plane(2, Axis::X);
        let ry = SubspaceFrame::coordinate_plane(2, Axis::Y);
        assert!(cone_membership(&rx, 1e-6, Axis::X));
        assert!(!cone_membership(&ry, 100.0, Axis::X));
        assert!(cone_membership(&ry, 1e-6, Axis::Y));
        let g = SubspaceFrame::from_graph(&GraphRep::new(DMatrix::identity(2, 2) * 0.05)).unwrap();
        assert!(cone_membership(&g, 0.1, Axis::X));
        assert!(!cone_membership(&g, 0.04, Axis::X));
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = derive_stream(14, 0);
        let rx = SubspaceFrame::coordinate_plane(3, Axis::X);
        assert!(graph_from_frame(&rx).unwrap().matrix.amax() == 0.0);
        assert!(matches!(
            graph_from_frame(&SubspaceFrame::coordinate_plane(3, Axis::Y)),
            Err(Error::NotAGraph { .. })
        ));
        for _ in 0..500 {
            let raw = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let scale = rng.random_range(0.0..10.0) / raw.norm_spectral();
            let g0 = GraphRep::new(raw * scale);
            let back = graph_from_frame(&SubspaceFrame::from_graph(&g0).unwrap()).unwrap();
            assert!((back.matrix - &g0.matrix).amax() < 1e-9);
        }
    }

    #[test]
    fn graph_transform_examples() {
        let n = 2;
        let id = DMatrix::<f64>::identity(n, n);
        let g = graph_transform(&GraphRep::new(DMatrix::zeros(n, n)), &(&id * 10.0)).unwrap();
        assert!((g.matrix - &id * 0.1).amax() < 1e-15);
        let g = graph_transform(&GraphRep::new(&id * 0.1), &(&id * 2.0)).unwrap();
        assert!((g.matrix - &id * (1.0 / 1.9)).amax() < 1e-15);
        assert!(matches!(
            graph_transform(&GraphRep::new(&id * 2.0), &(&id * 2.0)),
            Err(Error::ConeDegeneracy)
        ));
    }

    fn block(dxf: &DMatrix<f64>) -> DMatrix<f64> {
        crate::torus::JacobianBlock::from_dxf(dxf.clone()).assembled
    }

    fn random_dxf(rng: &mut impl Rng, n: usize, min_norm: f64) -> DMatrix<f64> {
        loop {
            let d = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * 20.0);
            if d.singular_values().min() >= min_norm {
                return d;
            }
        }
    }

    #[test]
    fn graph_transform_matches_frame_pushforward() {
        let mut rng = derive_stream(15, 0);
        for _ in 0..500 {
            let n = 3;
            let raw = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = GraphRep::new(&raw * (0.1 * rng.random::<f64>() / raw.norm_spectral()));
            let dxf = random_dxf(&mut rng, n, 5.0);
            let gp = graph_transform(&g, &dxf).unwrap();
            let pushed =
                apply_linear(&block(&dxf), &SubspaceFrame::from_graph(&g).unwrap()).unwrap();
            let via_chart = SubspaceFrame::from_graph(&gp).unwrap();
            assert!(d_hausdorff(&pushed, &via_chart).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn apply_linear_examples() {
        let rx = SubspaceFrame::coordinate_plane(2, Axis::X);
        let same = apply_linear(&DMatrix::identity(4, 4), &rx).unwrap();
        assert_eq!(d_hausdorff(&same, &rx).unwrap(), 0.0);
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                10., 0., -1., 0., 0., 10., 0., -1., 1., 0., 0., 0., 0., 1., 0., 0.,
            ],
        );
        let img = apply_linear(&a, &rx).unwrap();
        let g = graph_from_frame(&img).unwrap();
        assert!((g.matrix - DMatrix::identity(2, 2) * 0.1).amax() < 1e-14);
    }

    #[test]
    fn apply_linear_matches_svd_column_space() {
        let mut rng = derive_stream(16, 0);
        for _ in 0..500 {
            let a = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let e = haar_random_subspace(&mut rng, 5, 2);
            let img = apply_linear(&a, &e).unwrap();
            let svd = (&a * e.cols()).svd(true, false);
            let u = svd.u.unwrap();
            let oracle = SubspaceFrame::from_orthonormal(u.columns(0, 2).into_owned());
            assert!(d_hausdorff(&img, &oracle).unwrap() < 1e-10);
        }
    }

    #[test]
    fn restricted_det_examples_and_inverse_identity() {
        let mut rng = derive_stream(17, 0);
        let e = haar_random_subspace(&mut rng, 4, 2);
        assert!(
            (restricted_det(&(DMatrix::identity(4, 4) * 3.0), &e).unwrap() - 9.0).abs() < 1e-12
        );
        assert!((restricted_det(&DMatrix::identity(4, 4), &e).unwrap() - 1.0).abs() < 1e-14);
        for _ in 0..500 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let e = haar_random_subspace(&mut rng, 4, 2);
            let ae = apply_linear(&a, &e).unwrap();
            let inv = a.clone().try_inverse().unwrap();
            let p = restricted_det(&a, &e).unwrap() * restricted_det(&inv, &ae).unwrap();
            assert!((p - 1.0).abs() < 1e-8);
            // Definition via the Gram determinant.
            let ae_raw = &a * e.cols();
            let gram = (ae_raw.transpose() * &ae_raw).determinant().sqrt();
            assert!((restricted_det(&a, &e).unwrap() / gram - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn restricted_det_graph_identity() {
        // det(D_z F|_E) = det(D_x f − G) · vol(I + G') / vol(I + G).
        let mut rng = derive_stream(18, 0);
        for _ in 0..500 {
            let n = 2;
            let raw = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = GraphRep::new(&raw * (0.1 * rng.random::<f64>() / raw.norm_spectral()));
            let dxf = random_dxf(&mut rng, n, 5.0);
            let gp = graph_transform(&g, &dxf).unwrap();
            let e = SubspaceFrame::from_graph(&g).unwrap();
            let lhs = restricted_det(&block(&dxf), &e).unwrap();
            let rhs = (&dxf - &g.matrix).determinant().abs() * graph_volume_factor(&gp)
                / graph_volume_factor(&g);
            assert!((lhs / rhs - 1.0).abs() < 1e-8, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn haar_examples() {
        let mut rng = derive_stream(19, 0);
        let full = haar_random_subspace(&mut rng, 4, 4);
        assert_eq!(d_hausdorff(&full, &full).unwrap(), 0.0);
        // E‖Π^x v‖² = 1/2 for a uniform unit vector in R^4.
        let draws = 100_000;
        let vals: Vec<f64> = (0..draws)
            .map(|_| {
                let v = haar_random_subspace(&mut rng, 4, 1);
                v.cols()[(0, 0)].powi(2) + v.cols()[(1, 0)].powi(2)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        assert!((mean - 0.5).abs() < 3.0 * (var / draws as f64).sqrt());
    }

    #[test]
    fn haar_law_is_rotation_invariant() {
        let mut rng = derive_stream(20, 0);
        let reference = SubspaceFrame::coordinate_plane(2, Axis::X);
        let rot = haar_orthogonal(&mut derive_stream(21, 0), 4);
        let n = 5_000;
        let mut before = Vec::with_capacity(n);
        let mut after = Vec::with_capacity(n);
        for _ in 0..n {
            let e = haar_random_subspace(&mut rng, 4, 2);
            before.push(principal_angles(&e, &reference).unwrap().largest());
            let f = haar_random_subspace(&mut rng, 4, 2);
            let rotated = SubspaceFrame::from_orthonormal(&rot * f.cols());
            after.push(principal_angles(&rotated, &reference).unwrap().largest());
        }
        let d = crate::stats::ks_two_sample(&before, &after);
        assert!(d < crate::stats::ks_two_sample_critical(n, n, 0.01));
    }
}
