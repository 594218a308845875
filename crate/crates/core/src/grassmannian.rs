//! Linear planes, the Grassmannian distance and Haar measures on `G(d, n)`.
//!
//! A plane is stored as a row-orthonormal `d × n` frame. Distances are
//! spectral norms of differences of projectors, computed from symmetric
//! eigen-decompositions.

use crate::error::{Error, Result};
use crate::measure::SampledSet;
use crate::rng::{Estimate, Rng};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashSet;

/// Tolerance on `frame · frameᵀ = I`.
pub const FRAME_TOL: f64 = 1e-12;

/// A `d`-dimensional linear subspace of `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlane {
    frame: DMatrix<f64>,
}

/// Largest eigenvalue of a symmetric matrix (0 for an empty matrix).
fn sym_max_eig(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Operator norm `‖m‖ = sqrt(λ_max(mᵀ m))`.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0.0;
    }
    sym_max_eig(m.transpose() * m).max(0.0).sqrt()
}

/// Orthonormalize the rows of `m` (Gram-Schmidt through a thin QR).
fn orthonormal_rows(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if d == 0 {
        return Ok(m.clone());
    }
    let qr = m.transpose().qr();
    let r = qr.r();
    let scale = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..d).any(|i| r[(i, i)].abs() <= 1e-12 * scale.max(1e-300)) {
        return Err(Error::InvalidInput("frame rows are linearly dependent".into()));
    }
    Ok(qr.q().transpose())
}

impl LinearPlane {
    /// Wrap a frame after checking row orthonormality.
    pub fn from_frame(frame: DMatrix<f64>) -> Result<LinearPlane> {
        let d = frame.nrows();
        let defect = (&frame * frame.transpose() - DMatrix::identity(d, d)).abs().max();
        if d > 0 && defect > FRAME_TOL * 10.0 {
            return Err(Error::NotOrthonormal(defect));
        }
        Ok(LinearPlane { frame })
    }

    /// Span of the given rows.
    pub fn span_of(rows: &DMatrix<f64>) -> Result<LinearPlane> {
        Ok(LinearPlane { frame: orthonormal_rows(rows)? })
    }

    /// Span of the first `d` coordinate axes.
    pub fn coordinate(d: usize, n: usize) -> LinearPlane {
        LinearPlane { frame: DMatrix::identity(d, n) }
    }

    /// Line spanned by `v`.
    pub fn line(v: &[f64]) -> Result<LinearPlane> {
        Self::span_of(&DMatrix::from_row_slice(1, v.len(), v))
    }

    pub fn d(&self) -> usize {
        self.frame.nrows()
    }

    pub fn n(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// `p_V = frameᵀ frame`.
    pub fn projector(&self) -> DMatrix<f64> {
        self.frame.transpose() * &self.frame
    }

    /// Coordinates of `p_V x` in the frame basis.
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        (&self.frame * DVector::from_column_slice(x)).iter().cloned().collect()
    }

    /// `p_V x` in ambient coordinates.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let c = &self.frame * DVector::from_column_slice(x);
        (self.frame.transpose() * c).iter().cloned().collect()
    }

    /// Orthonormal frame of `V^⊥`.
    pub fn complement(&self) -> LinearPlane {
        let n = self.n();
        let q = DMatrix::identity(n, n) - self.projector();
        let eig = SymmetricEigen::new(q);
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 0.5 {
                rows.push(eig.eigenvectors.column(i).into_owned());
            }
        }
        let mut f = DMatrix::zeros(rows.len(), n);
        for (i, r) in rows.iter().enumerate() {
            f.set_row(i, &r.transpose());
        }
        LinearPlane { frame: orthonormal_rows(&f).unwrap_or(f) }
    }

    fn check_same(&self, w: &LinearPlane) -> Result<()> {
        if self.n() != w.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: w.n() });
        }
        if self.d() != w.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: w.d() });
        }
        Ok(())
    }
}

/// `d(V, W) = ‖p_V − p_W‖`.
pub fn plane_distance(v: &LinearPlane, w: &LinearPlane) -> Result<f64> {
    v.check_same(w)?;
    let diff = v.projector() - w.projector();
    Ok(sym_max_eig(&diff * &diff).max(0.0).sqrt().min(1.0))
}

/// Norms of `p_V − p_W` restricted to `V`, `W` and `V^⊥`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedDistance {
    pub on_v: f64,
    pub on_w: f64,
    pub on_v_perp: f64,
}

impl RestrictedDistance {
    /// `max(‖·|_V‖, ‖·|_W‖)`.
    pub fn max_vw(&self) -> f64 {
        self.on_v.max(self.on_w)
    }
    /// `max(‖·|_V‖, ‖·|_{V^⊥}‖)`.
    pub fn max_v_vperp(&self) -> f64 {
        self.on_v.max(self.on_v_perp)
    }
}

pub fn plane_distance_restricted(v: &LinearPlane, w: &LinearPlane) -> Result<RestrictedDistance> {
    v.check_same(w)?;
    let diff = v.projector() - w.projector();
    let sq = &diff * &diff;
    let restricted = |f: &DMatrix<f64>| sym_max_eig(f * &sq * f.transpose()).max(0.0).sqrt();
    let vp = v.complement();
    Ok(RestrictedDistance {
        on_v: restricted(v.frame()),
        on_w: restricted(w.frame()),
        on_v_perp: restricted(vp.frame()),
    })
}

/// `W = {x + φ(x) : x ∈ V}` with `φ : V → V^⊥`, in frame coordinates.
#[derive(Debug, Clone)]
pub struct GraphMap {
    pub base: LinearPlane,
    pub base_perp: LinearPlane,
    /// `(n−d) × d` matrix from `V` coordinates to `V^⊥` coordinates.
    pub matrix: DMatrix<f64>,
}

impl GraphMap {
    pub fn new(base: LinearPlane, matrix: DMatrix<f64>) -> Result<GraphMap> {
        let base_perp = base.complement();
        if matrix.nrows() != base_perp.d() || matrix.ncols() != base.d() {
            return Err(Error::DimensionMismatch { expected: base_perp.d() * base.d(), got: matrix.len() });
        }
        Ok(GraphMap { base, base_perp, matrix })
    }
}

pub fn graph_to_plane(g: &GraphMap) -> Result<LinearPlane> {
    let rows = g.base.frame() + g.matrix.transpose() * g.base_perp.frame();
    LinearPlane::span_of(&rows)
}

/// Inverse of [`graph_to_plane`]: `φ = C Gᵀ (F Gᵀ)^{-1}`.
pub fn plane_to_graph(v: &LinearPlane, w: &LinearPlane) -> Result<GraphMap> {
    let dist = plane_distance(v, w)?;
    if dist >= 1.0 - 1e-9 {
        return Err(Error::DistanceOne(dist));
    }
    let c = v.complement();
    let fg = v.frame() * w.frame().transpose();
    let inv = fg.try_inverse().ok_or(Error::DistanceOne(dist))?;
    let matrix = c.frame() * w.frame().transpose() * inv;
    Ok(GraphMap { base: v.clone(), base_perp: c, matrix })
}

/// `‖φ‖ / sqrt(1 + ‖φ‖²)`.
pub fn graph_norm_distance(g: &GraphMap) -> f64 {
    let t = op_norm(&g.matrix);
    t / (1.0 + t * t).sqrt()
}

/// Image of a plane under an invertible map, with the map's condition number.
#[derive(Debug, Clone)]
pub struct IsoImage {
    pub plane: LinearPlane,
    pub condition_number: f64,
    pub norm: f64,
    pub inverse_norm: f64,
}

pub fn apply_isomorphism(u: &DMatrix<f64>, v: &LinearPlane) -> Result<IsoImage> {
    let n = v.n();
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.nrows() });
    }
    let eig = SymmetricEigen::new(u.transpose() * u);
    let smax = eig.eigenvalues.max().max(0.0).sqrt();
    let smin = eig.eigenvalues.min().max(0.0).sqrt();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < 1e12) {
        return Err(Error::Singular(cond));
    }
    let rows = v.frame() * u.transpose();
    Ok(IsoImage { plane: LinearPlane::span_of(&rows)?, condition_number: cond, norm: smax, inverse_norm: 1.0 / smin })
}

/// Haar-distributed `d`-plane of `R^n`: orthonormalized Gaussian frame.
pub fn haar_sample(d: usize, n: usize, rng: &mut Rng) -> LinearPlane {
    assert!(d <= n, "haar_sample needs d <= n");
    if d == n {
        return LinearPlane::coordinate(n, n);
    }
    loop {
        let g = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(rng));
        if let Ok(f) = orthonormal_rows(&g) {
            return LinearPlane { frame: f };
        }
    }
}

/// Haar `q`-plane inside `V^⊥`, expressed in `R^n`.
pub fn haar_sample_in(perp: &LinearPlane, q: usize, rng: &mut Rng) -> LinearPlane {
    let local = haar_sample(q, perp.d(), rng);
    LinearPlane { frame: local.frame() * perp.frame() }
}

/// Sum `V + W` of planes with trivial intersection.
pub fn plane_sum(v: &LinearPlane, w: &LinearPlane) -> Result<LinearPlane> {
    let mut rows = DMatrix::zeros(v.d() + w.d(), v.n());
    rows.rows_mut(0, v.d()).copy_from(v.frame());
    rows.rows_mut(v.d(), w.d()).copy_from(w.frame());
    LinearPlane::span_of(&rows)
}

/// Monte Carlo estimate of `γ_{1,n+1}` of a set of lines.
pub fn line_set_measure(predicate: impl Fn(&LinearPlane) -> bool, n: usize, samples: usize, rng: &mut Rng) -> Estimate {
    let hits = (0..samples).filter(|_| predicate(&haar_sample(1, n + 1, rng))).count();
    Estimate::proportion(hits, samples)
}

/// Both sides of the disintegration formula for `G(p+q, n)`.
#[derive(Debug, Clone, Copy)]
pub struct DisintegrationReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
}

impl DisintegrationReport {
    pub fn combined_sigma(&self) -> f64 {
        (self.lhs.std_error.powi(2) + self.rhs.std_error.powi(2)).sqrt()
    }
    pub fn consistent(&self, k: f64) -> bool {
        (self.lhs.value - self.rhs.value).abs() <= k * self.combined_sigma()
    }
}

/// Direct estimate of `γ_{p+q,n}(A)` against the nested integral
/// `∫ γ_{q,V^⊥}{W : V + W ∈ A} dγ_{p,n}(V)`.
pub fn disintegration_check(
    p: usize,
    q: usize,
    n: usize,
    predicate: impl Fn(&LinearPlane) -> bool,
    direct_samples: usize,
    outer: usize,
    inner: usize,
    rng: &mut Rng,
) -> Result<DisintegrationReport> {
    if p + q > n || p == 0 || q == 0 {
        return Err(Error::InvalidInput(format!("need 1 <= p, q and p + q <= n (p={p}, q={q}, n={n})")));
    }
    let hits = (0..direct_samples).filter(|_| predicate(&haar_sample(p + q, n, rng))).count();
    let lhs = Estimate::proportion(hits, direct_samples);
    let mut means = Vec::with_capacity(outer);
    for _ in 0..outer {
        let v = haar_sample(p, n, rng);
        let vp = v.complement();
        let mut h = 0usize;
        for _ in 0..inner {
            let w = haar_sample_in(&vp, q, rng);
            if predicate(&plane_sum(&v, &w)?) {
                h += 1;
            }
        }
        means.push(h as f64 / inner as f64);
    }
    let rhs = if means.iter().all(|&m| m == means[0]) {
        // constant inner means: the outer spread is zero, fall back to binomial error
        let e = Estimate::proportion((means[0] * (outer * inner) as f64).round() as usize, outer * inner);
        Estimate { value: means[0], ..e }
    } else {
        Estimate::from_samples(&means)
    };
    Ok(DisintegrationReport { lhs, rhs })
}

/// An affine plane `x + V`.
#[derive(Debug, Clone)]
pub struct AffinePlane {
    pub point: Vec<f64>,
    pub direction: LinearPlane,
}

impl AffinePlane {
    /// Point of the plane nearest the origin.
    pub fn foot(&self) -> Vec<f64> {
        let proj = self.direction.project(&self.point);
        self.point.iter().zip(&proj).map(|(a, b)| a - b).collect()
    }
}

/// `H^n(k)`: area of the unit `k`-sphere.
pub fn sphere_area(k: usize) -> f64 {
    let (mut a, mut i) = if k % 2 == 0 { (2.0, 0) } else { (2.0 * std::f64::consts::PI, 1) };
    while i < k {
        a *= 2.0 * std::f64::consts::PI / (i + 1) as f64;
        i += 2;
    }
    a
}

/// Outcome of the hyperplane/line comparison.
#[derive(Debug, Clone)]
pub struct HyperplaneLineBound {
    /// Area of the occupied cells in hyperplane coordinates.
    pub lhs: f64,
    /// `(σ_n/2)(r²/r₀)^n γ`, with its standard error.
    pub rhs: Estimate,
    pub gamma: Estimate,
    pub r: f64,
    pub r0: f64,
    pub max_line_distance: f64,
    /// `sqrt(1 − (r₀/r)²)`.
    pub distance_bound: f64,
}

impl HyperplaneLineBound {
    pub fn distance_bound_holds(&self) -> bool {
        self.max_line_distance <= self.distance_bound + 1e-9
    }
}

/// Compare `H^n(A)` with the measure of lines meeting `A ⊂ H`.
///
/// `A` is discretized as the union `U` of occupied `δ`-cells in the
/// coordinates of `H`; a line meets `U` when its crossing with `H` lands
/// in an occupied cell, and `r` is the largest norm over `U`.
pub fn hyperplane_line_bound(
    h: &AffinePlane,
    a: &SampledSet,
    delta: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<HyperplaneLineBound> {
    let m = h.direction.n();
    let n = m - 1;
    if h.direction.d() != n {
        return Err(Error::InvalidInput("expected a hyperplane".into()));
    }
    if a.n != m {
        return Err(Error::DimensionMismatch { expected: m, got: a.n });
    }
    let foot = h.foot();
    let r0 = foot.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r0 <= 1e-12 {
        return Err(Error::InvalidInput("hyperplane passes through the origin".into()));
    }
    let nu: Vec<f64> = foot.iter().map(|x| x / r0).collect();
    let key = |y: &[f64]| -> Vec<i64> { y.iter().map(|c| (c / delta).floor() as i64).collect() };
    let occupied: HashSet<Vec<i64>> = a.points.iter().map(|x| key(&h.direction.coords(x))).collect();
    if occupied.is_empty() {
        let zero = Estimate { value: 0.0, std_error: 0.0, samples };
        return Ok(HyperplaneLineBound {
            lhs: 0.0,
            rhs: zero,
            gamma: zero,
            r: r0,
            r0,
            max_line_distance: 0.0,
            distance_bound: 0.0,
        });
    }
    let lhs = occupied.len() as f64 * delta.powi(n as i32);
    let ymax2 = occupied
        .iter()
        .map(|c| {
            c.iter()
                .map(|&j| {
                    let (lo, hi) = (j as f64 * delta, (j + 1) as f64 * delta);
                    lo.abs().max(hi.abs()).powi(2)
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let r = (r0 * r0 + ymax2).sqrt();
    let l0 = LinearPlane::line(&nu)?;
    let mut hits = 0usize;
    let mut max_dist: f64 = 0.0;
    for _ in 0..samples {
        let line = haar_sample(1, m, rng);
        let u: Vec<f64> = line.frame().row(0).iter().cloned().collect();
        let s: f64 = u.iter().zip(&nu).map(|(a, b)| a * b).sum();
        if s.abs() < 1e-15 {
            continue;
        }
        let x: Vec<f64> = u.iter().map(|ui| ui * r0 / s).collect();
        if occupied.contains(&key(&h.direction.coords(&x))) {
            hits += 1;
            max_dist = max_dist.max(plane_distance(&line, &l0)?);
        }
    }
    let gamma = Estimate::proportion(hits, samples);
    let c = sphere_area(n) / 2.0 * (r * r / r0).powi(n as i32);
    Ok(HyperplaneLineBound {
        lhs,
        rhs: gamma.scaled(c),
        gamma,
        r,
        r0,
        max_line_distance: max_dist,
        distance_bound: (1.0 - (r0 / r).powi(2)).max(0.0).sqrt(),
    })
}

/// Result of one self-test check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SelftestCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Random `n × n` matrix scaled to operator norm `eps`.
pub fn perturbation(n: usize, eps: f64, rng: &mut Rng) -> DMatrix<f64> {
    let e = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let s = op_norm(&e);
    e * (eps / s)
}

/// Invariant checks for `(d, n)` on `pairs` random pairs: range of the
/// distance, complement isometry, graph-norm agreement and the
/// isomorphism bounds.
pub fn identity_checks(d: usize, n: usize, pairs: usize, rng: &mut Rng) -> Result<SelftestCheck> {
    let mut worst_iso = 0.0f64;
    let mut worst_graph = 0.0f64;
    let mut range_ok = true;
    let mut bound_ok = true;
    for _ in 0..pairs {
        let v = haar_sample(d, n, rng);
        let w = haar_sample(d, n, rng);
        let dist = plane_distance(&v, &w)?;
        range_ok &= (0.0..=1.0).contains(&dist);
        worst_iso = worst_iso.max((dist - plane_distance(&v.complement(), &w.complement())?).abs());
        if dist < 1.0 - 1e-6 {
            let g = plane_to_graph(&v, &w)?;
            worst_graph = worst_graph.max((graph_norm_distance(&g) - dist).abs());
        }
        let u = DMatrix::identity(n, n) + perturbation(n, 0.2, rng);
        let uv = apply_isomorphism(&u, &v)?;
        let uw = apply_isomorphism(&u, &w)?;
        bound_ok &= plane_distance(&uv.plane, &v)? <= 0.2 / 0.8 + 1e-12;
        bound_ok &= plane_distance(&uv.plane, &uw.plane)? <= uv.norm * uv.inverse_norm * dist + 1e-12;
    }
    Ok(SelftestCheck {
        name: format!("identities G({d},{n})"),
        pass: range_ok && bound_ok && worst_iso <= 1e-9 && worst_graph <= 1e-9,
        detail: format!("range {range_ok}, complement defect {worst_iso:.2e}, graph defect {worst_graph:.2e}, iso bounds {bound_ok}"),
    })
}

/// Lines within angle `theta` of the axis `axis`.
pub fn cone_predicate(axis: usize, theta: f64) -> impl Fn(&LinearPlane) -> bool {
    move |l: &LinearPlane| l.frame()[(0, axis)].abs() >= theta.cos()
}

/// Identities, Haar/sphere correspondence and disintegration.
pub fn selftest(seed: u64, samples: usize) -> Result<Vec<SelftestCheck>> {
    let mut out = Vec::new();
    for (i, &(d, n)) in [(1, 2), (1, 3), (2, 3), (2, 4)].iter().enumerate() {
        let mut rng = crate::rng::stream(seed, "selftest/identities", i as u64);
        out.push(identity_checks(d, n, 500, &mut rng)?);
    }
    let third = std::f64::consts::FRAC_PI_3;
    let mut rng = crate::rng::stream(seed, "selftest/haar", 0);
    let arc = line_set_measure(cone_predicate(0, third / 2.0), 1, samples, &mut rng);
    out.push(SelftestCheck {
        name: "arc measure in G(1,2)".into(),
        pass: arc.within(1.0 / 3.0, 3.0),
        detail: format!("{:.5} ± {:.5} vs 1/3", arc.value, arc.std_error),
    });
    let cap = line_set_measure(cone_predicate(2, third), 2, samples, &mut rng);
    out.push(SelftestCheck {
        name: "cap measure in G(1,3)".into(),
        pass: cap.within(0.5, 3.0),
        detail: format!("{:.5} ± {:.5} vs 1/2", cap.value, cap.std_error),
    });
    // 2-planes of R³ whose normal lies in the cap of angle π/3 about e₃
    let normal_cap = move |p: &LinearPlane| cone_predicate(2, third)(&p.complement());
    let outer = (samples / 100).max(1);
    let r = disintegration_check(1, 1, 3, normal_cap, samples, outer, 100, &mut rng)?;
    out.push(SelftestCheck {
        name: "disintegration p=q=1, n=3".into(),
        pass: r.consistent(3.0),
        detail: format!("direct {:.5}, nested {:.5}, sigma {:.5}", r.lhs.value, r.rhs.value, r.combined_sigma()),
    });
    Ok(out)
}
