//! Sampled `d`-sets and the occupancy estimators built on them.
//!
//! Raw box counting ([`OccupancyGrid`]) is direction dependent for
//! `0 < d < n`: a segment at angle `θ` in the plane meets about
//! `L(|cos θ| + |sin θ|)/δ` cells. [`hausdorff_estimate`] therefore
//! averages the count over a fixed family of rotated grids and divides
//! by the isotropic box-counting constant `c_{d,n} = E_V Σ_I |det F_I|`
//! (the mean `ℓ¹` norm of the Plücker coordinates of a random `d`-plane).
//! For `d = 0` and `d = n` the constant is 1.

use crate::dyadic::{euclid, Cell, DomainOracle, Membership, EPS_GEOM};
use crate::error::{Error, Result};
use crate::grassmannian::{haar_sample, LinearPlane};
use crate::rng::{stream, Estimate, Rng};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

/// Default number of neighbours for tangent estimation.
pub const PCA_K: usize = 12;

/// Weighted point cloud approximating a `d`-dimensional set in `R^n`.
#[derive(Debug, Clone)]
pub struct SampledSet {
    pub d: usize,
    pub n: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Nominal spacing between samples.
    pub resolution: f64,
    pub tangents: Option<Vec<LinearPlane>>,
}

impl SampledSet {
    pub fn new(d: usize, n: usize, points: Vec<Vec<f64>>, weights: Vec<f64>, resolution: f64) -> Result<SampledSet> {
        if d > n {
            return Err(Error::InvalidInput(format!("d = {d} exceeds n = {n}")));
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: weights.len() });
        }
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput("weights must be positive and finite".into()));
        }
        if !(resolution > 0.0) {
            return Err(Error::InvalidInput("resolution must be positive".into()));
        }
        Ok(SampledSet { d, n, points, weights, resolution, tangents: None })
    }

    pub fn empty(d: usize, n: usize) -> SampledSet {
        SampledSet { d, n, points: vec![], weights: vec![], resolution: 1.0, tangents: None }
    }

    /// Samples at spacing `h`, each of weight `h^d`.
    pub fn uniform(d: usize, points: Vec<Vec<f64>>, h: f64) -> Result<SampledSet> {
        let n = points.first().map(|p| p.len()).unwrap_or(d.max(1));
        let w = vec![h.powi(d as i32); points.len()];
        SampledSet::new(d, n, points, w, h)
    }

    pub fn with_tangents(mut self, t: Vec<LinearPlane>) -> Result<SampledSet> {
        if t.len() != self.points.len() {
            return Err(Error::DimensionMismatch { expected: self.points.len(), got: t.len() });
        }
        if t.iter().any(|p| p.d() != self.d || p.n() != self.n) {
            return Err(Error::InvalidInput("tangent planes must be d-planes of R^n".into()));
        }
        self.tangents = Some(t);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Samples with the given indices.
    pub fn subset(&self, idx: &[usize]) -> SampledSet {
        SampledSet {
            d: self.d,
            n: self.n,
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            resolution: self.resolution,
            tangents: self.tangents.as_ref().map(|t| idx.iter().map(|&i| t[i].clone()).collect()),
        }
    }

    /// Samples satisfying `keep`.
    pub fn filter(&self, keep: impl Fn(&[f64]) -> bool) -> SampledSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.points[i])).collect();
        self.subset(&idx)
    }

    /// Same weights, moved points (tangents dropped).
    pub fn moved(&self, points: Vec<Vec<f64>>) -> SampledSet {
        SampledSet { points, tangents: None, ..self.clone() }
    }

    pub fn union(&self, other: &SampledSet) -> Result<SampledSet> {
        if self.d != other.d || self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let mut s = self.clone();
        s.points.extend(other.points.iter().cloned());
        s.weights.extend(other.weights.iter().cloned());
        s.resolution = self.resolution.max(other.resolution);
        s.tangents = None;
        Ok(s)
    }

    /// Default estimator resolution `2 δ_set`.
    pub fn default_delta(&self) -> f64 {
        2.0 * self.resolution
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        wr.write_record(&header).map_err(csv_err)?;
        for (p, w) in self.points.iter().zip(&self.weights) {
            let rec: Vec<String> = p.iter().chain(std::iter::once(w)).map(|v| format!("{v}")).collect();
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Read `x1,...,xn,weight`; the resolution is the median nearest
    /// neighbour spacing.
    pub fn read_csv<R: Read>(r: R, d: usize) -> Result<SampledSet> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rd.headers().map_err(csv_err)?.clone();
        let cols = header.len();
        if cols < 2 || header.get(cols - 1) != Some("weight") {
            return Err(Error::Csv { line: 1, msg: "header must be x1,...,xn,weight".into() });
        }
        for (i, h) in header.iter().take(cols - 1).enumerate() {
            if h != format!("x{}", i + 1) {
                return Err(Error::Csv { line: 1, msg: format!("unexpected column name {h:?}") });
            }
        }
        let n = cols - 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != cols {
                return Err(Error::Csv { line, msg: format!("expected {cols} fields, found {}", rec.len()) });
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Csv { line, msg: format!("{f:?}: {e}") }))
                .collect::<Result<_>>()?;
            if vals.iter().any(|v| !v.is_finite()) || vals[n] <= 0.0 {
                return Err(Error::Csv { line, msg: "non-finite value or non-positive weight".into() });
            }
            points.push(vals[..n].to_vec());
            weights.push(vals[n]);
        }
        let res = estimate_resolution(&points);
        SampledSet::new(d, n, points, weights, res)
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Csv { line, msg: e.to_string() }
}

/// Median nearest-neighbour distance (1.0 for fewer than two points).
pub fn estimate_resolution(points: &[Vec<f64>]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let step = (points.len() / 2000).max(1);
    let mut nn: Vec<f64> = (0..points.len())
        .step_by(step)
        .map(|i| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| euclid(&points[i], q))
                .filter(|&d| d > 0.0)
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect();
    if nn.is_empty() {
        return 1.0;
    }
    nn.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nn[nn.len() / 2]
}

/// Occupied cells of an axis-aligned `δ`-grid.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub origin: Vec<f64>,
    pub delta: f64,
    pub d: usize,
    pub keys: HashSet<Vec<i64>>,
}

impl OccupancyGrid {
    pub fn from_points<'a>(
        points: impl IntoIterator<Item = &'a [f64]>,
        n: usize,
        delta: f64,
        d: usize,
    ) -> OccupancyGrid {
        let origin = vec![0.0; n];
        let keys = points.into_iter().map(|p| cell_key(p, &origin, delta)).collect();
        OccupancyGrid { origin, delta, d, keys }
    }

    /// `|occupied| δ^d`.
    pub fn mass(&self) -> f64 {
        self.keys.len() as f64 * self.delta.powi(self.d as i32)
    }
}

fn cell_key(p: &[f64], origin: &[f64], delta: f64) -> Vec<i64> {
    p.iter().zip(origin).map(|(x, o)| ((x - o) / delta).floor() as i64).collect()
}

/// Raw axis-aligned occupancy mass of a set.
pub fn occupancy_mass(s: &SampledSet, delta: f64) -> f64 {
    OccupancyGrid::from_points(s.points.iter().map(|p| p.as_slice()), s.n, delta, s.d).mass()
}

fn check_delta(s: &SampledSet, delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    if delta < s.resolution && !s.is_empty() {
        log::warn!("delta {delta} is below the sampling resolution {}", s.resolution);
    }
    Ok(())
}

/// Ratio `Γ(k/2) / Γ((k+1)/2)`.
fn gamma_ratio(k: usize) -> f64 {
    let sp = std::f64::consts::PI.sqrt();
    let (mut r, mut i) = if k % 2 == 1 { (sp, 1) } else { (2.0 / sp, 2) };
    while i < k {
        r *= i as f64 / (i + 1) as f64;
        i += 2;
    }
    r
}

/// Isotropic box-counting constant `c_{d,n}`.
pub fn box_counting_constant(d: usize, n: usize) -> f64 {
    if d == 0 || d >= n {
        return 1.0;
    }
    if d == 1 || d == n - 1 {
        // n E|u_1| for a uniform unit vector u
        return n as f64 * gamma_ratio(n) / std::f64::consts::PI.sqrt();
    }
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&(d, n)) {
        return *v;
    }
    let mut rng = stream(0, "box-counting-constant", (d * 100 + n) as u64);
    let samples = 20_000;
    let subsets = combinations(n, d);
    let mut acc = 0.0;
    for _ in 0..samples {
        let f = haar_sample(d, n, &mut rng);
        for s in &subsets {
            let m = DMatrix::from_fn(d, d, |i, j| f.frame()[(i, s[j])]);
            acc += m.determinant().abs();
        }
    }
    let v = acc / samples as f64;
    cache.lock().unwrap().insert((d, n), v);
    v
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Fixed rotations used to average out grid orientation.
fn grid_rotations(n: usize) -> Arc<Vec<DMatrix<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<DMatrix<f64>>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&n) {
        return v.clone();
    }
    let mut rots = vec![DMatrix::identity(n, n)];
    if n == 2 {
        let count = 8;
        for r in 1..count {
            let t = r as f64 * std::f64::consts::FRAC_PI_2 / count as f64;
            rots.push(DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]));
        }
    } else if n > 2 {
        let mut rng = stream(0, "grid-rotations", n as u64);
        for _ in 1..32 {
            let g = haar_sample(n - 1, n, &mut rng);
            let c = g.complement();
            let mut m = DMatrix::zeros(n, n);
            m.rows_mut(0, n - 1).copy_from(g.frame());
            m.rows_mut(n - 1, 1).copy_from(c.frame());
            rots.push(m);
        }
    }
    let arc = Arc::new(rots);
    cache.lock().unwrap().insert(n, arc.clone());
    arc
}

/// Per-sample share of the calibrated occupancy mass.
///
/// For each rotated grid every occupied cell carries `δ^d` split evenly
/// among its samples; shares are averaged over grids and divided by
/// `c_{d,n}`. The shares sum to [`hausdorff_estimate`].
pub fn occupancy_weights(s: &SampledSet, delta: f64) -> Result<Vec<f64>> {
    check_delta(s, delta)?;
    let mut w = vec![0.0; s.len()];
    if s.is_empty() {
        return Ok(w);
    }
    let rots = if s.d == 0 || s.d == s.n { Arc::new(vec![DMatrix::identity(s.n, s.n)]) } else { grid_rotations(s.n) };
    let cell = delta.powi(s.d as i32);
    let c = box_counting_constant(s.d, s.n);
    for (r, rot) in rots.iter().enumerate() {
        // generic grid offsets keep lattice-aligned inputs off cell corners
        let shift: Vec<f64> = (0..s.n).map(|i| ((r * s.n + i + 1) as f64 * 0.618_033_988_75).fract() * delta).collect();
        let keys: Vec<Vec<i64>> = s
            .points
            .iter()
            .map(|p| {
                let y = rot * nalgebra::DVector::from_column_slice(p);
                y.iter().zip(&shift).map(|(v, o)| ((v + o) / delta).floor() as i64).collect()
            })
            .collect();
        let mut counts: HashMap<&Vec<i64>, usize> = HashMap::new();
        for k in &keys {
            *counts.entry(k).or_default() += 1;
        }
        for (i, k) in keys.iter().enumerate() {
            w[i] += cell / counts[k] as f64;
        }
    }
    let norm = rots.len() as f64 * c;
    for v in &mut w {
        *v /= norm;
    }
    Ok(w)
}

/// Calibrated occupancy estimate of `H^d`.
///
/// Reads low by roughly `0.2 h/δ` for curves sampled at spacing `h`,
/// since a sampling step can jump over the corner of a rotated cell.
pub fn hausdorff_estimate(s: &SampledSet, delta: f64) -> Result<f64> {
    Ok(occupancy_weights(s, delta)?.iter().sum())
}

/// `Σ w_i`.
pub fn weight_mass(s: &SampledSet) -> f64 {
    s.weights.iter().sum()
}

/// Occupancy of `p_V(S)` in a `δ`-grid of `V`-coordinates, times `δ^d`.
pub fn project_measure(s: &SampledSet, v: &LinearPlane, delta: f64) -> Result<f64> {
    if v.n() != s.n {
        return Err(Error::DimensionMismatch { expected: s.n, got: v.n() });
    }
    if v.d() != s.d {
        return Err(Error::DimensionMismatch { expected: s.d, got: v.d() });
    }
    check_delta(s, delta)?;
    let coords: Vec<Vec<f64>> = s.points.iter().map(|p| v.coords(p)).collect();
    Ok(OccupancyGrid::from_points(coords.iter().map(|c| c.as_slice()), s.d, delta, s.d).mass())
}

/// `ζ^d(S)`: Haar average of [`project_measure`].
pub fn zeta_gauge(s: &SampledSet, n_planes: usize, delta: f64, rng: &mut Rng) -> Result<Estimate> {
    check_delta(s, delta)?;
    let vals =
        (0..n_planes).map(|_| project_measure(s, &haar_sample(s.d, s.n, rng), delta)).collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&vals))
}

/// Embed a plane of the span of `A` (given in `A`'s open-axis coordinates)
/// into `R^n`.
pub fn embed_in_cell(a: &Cell, local: &LinearPlane) -> LinearPlane {
    let open: Vec<usize> = (0..a.ambient_dim()).filter(|&i| a.is_open_axis(i)).collect();
    let mut f = DMatrix::zeros(local.d(), a.ambient_dim());
    for r in 0..local.d() {
        for (j, &ax) in open.iter().enumerate() {
            f[(r, ax)] = local.frame()[(r, j)];
        }
    }
    LinearPlane::from_frame(f).expect("embedding preserves orthonormality")
}

/// `ζ^d⌊A(S ∩ A)`: average over `d`-planes of `aff(A)`.
pub fn zeta_restricted(s: &SampledSet, a: &Cell, n_planes: usize, delta: f64, rng: &mut Rng) -> Result<Estimate> {
    let m = a.dim();
    if m < s.d {
        return Err(Error::InvalidInput(format!("cell of dimension {m} is below d = {}", s.d)));
    }
    let inside = s.filter(|p| a.membership(p, EPS_GEOM).map(|x| x != Membership::Outside).unwrap_or(false));
    if inside.is_empty() {
        return Ok(Estimate { value: 0.0, std_error: 0.0, samples: n_planes });
    }
    if m == s.d {
        let v = embed_in_cell(a, &LinearPlane::coordinate(m, m));
        let val = project_measure(&inside, &v, delta)?;
        return Ok(Estimate { value: val, std_error: 0.0, samples: 1 });
    }
    let vals = (0..n_planes)
        .map(|_| project_measure(&inside, &embed_in_cell(a, &haar_sample(s.d, m, rng)), delta))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&vals))
}

type PosFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type AnisoFn = dyn Fn(&[f64], &LinearPlane) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum IntegrandKind {
    Hausdorff,
    PositionOnly(Arc<PosFn>),
    Anisotropic(Arc<AnisoFn>),
}

/// `i(x, V)` with `Λ^{-1} ≤ i ≤ Λ`.
#[derive(Clone)]
pub struct Integrand {
    pub kind: IntegrandKind,
    pub lambda: f64,
    pub name: String,
}

impl std::fmt::Debug for Integrand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Integrand({}, Λ={})", self.name, self.lambda)
    }
}

impl Integrand {
    pub fn hausdorff() -> Integrand {
        Integrand { kind: IntegrandKind::Hausdorff, lambda: 1.0, name: "hausdorff".into() }
    }

    pub fn constant(c: f64) -> Result<Integrand> {
        if !(c > 0.0) {
            return Err(Error::InvalidInput("constant integrand must be positive".into()));
        }
        Ok(Integrand {
            kind: IntegrandKind::PositionOnly(Arc::new(move |_| c)),
            lambda: c.max(1.0 / c),
            name: format!("constant({c})"),
        })
    }

    pub fn position(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, lambda: f64) -> Integrand {
        Integrand { kind: IntegrandKind::PositionOnly(Arc::new(f)), lambda, name: "position".into() }
    }

    pub fn anisotropic(f: impl Fn(&[f64], &LinearPlane) -> f64 + Send + Sync + 'static, lambda: f64) -> Integrand {
        Integrand { kind: IntegrandKind::Anisotropic(Arc::new(f)), lambda, name: "anisotropic".into() }
    }

    /// `base + gain · |p_V e_axis|`.
    pub fn axis_cosine(axis: usize, base: f64, gain: f64) -> Result<Integrand> {
        if !(base > 0.0 && gain >= 0.0) {
            return Err(Error::InvalidInput("axis_cosine needs base > 0, gain >= 0".into()));
        }
        let hi = base + gain;
        let f = move |_x: &[f64], v: &LinearPlane| {
            let c: f64 = (0..v.d()).map(|r| v.frame()[(r, axis)].powi(2)).sum::<f64>().sqrt();
            base + gain * c
        };
        Ok(Integrand {
            kind: IntegrandKind::Anisotropic(Arc::new(f)),
            lambda: hi.max(1.0 / base),
            name: format!("axis_cosine({axis},{base},{gain})"),
        })
    }

    pub fn needs_tangents(&self) -> bool {
        matches!(self.kind, IntegrandKind::Anisotropic(_))
    }

    /// Evaluate with the bound check.
    pub fn eval(&self, x: &[f64], t: Option<&LinearPlane>) -> Result<f64> {
        let v = match &self.kind {
            IntegrandKind::Hausdorff => 1.0,
            IntegrandKind::PositionOnly(f) => f(x),
            IntegrandKind::Anisotropic(f) => f(x, t.ok_or_else(|| Error::Precondition("tangent missing".into()))?),
        };
        let slack = 1e-12;
        if !(v >= 1.0 / self.lambda - slack && v <= self.lambda + slack) {
            return Err(Error::IntegrandOutOfBounds { value: v, lambda: self.lambda });
        }
        Ok(v)
    }
}

/// Tangent planes by PCA over the `k` nearest neighbours.
pub fn estimate_tangents(s: &SampledSet, k: usize) -> Result<Vec<LinearPlane>> {
    let n = s.len();
    let avail = n.saturating_sub(1);
    if avail < s.d + 1 || k < s.d + 1 {
        return Err(Error::InsufficientNeighbors { needed: s.d + 1, got: avail.min(k) });
    }
    let k = k.min(avail);
    let mut out = Vec::with_capacity(n);
    let mut degenerate = 0usize;
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dists.clear();
        dists.extend(s.points.iter().enumerate().map(|(j, q)| (euclid(&s.points[i], q), j)));
        dists.select_nth_unstable_by(k, |a, b| a.0.partial_cmp(&b.0).unwrap());
        let nb: Vec<usize> = dists[..=k].iter().map(|x| x.1).collect();
        let mean: Vec<f64> =
            (0..s.n).map(|c| nb.iter().map(|&j| s.points[j][c]).sum::<f64>() / nb.len() as f64).collect();
        let cov = DMatrix::from_fn(s.n, s.n, |a, b| {
            nb.iter().map(|&j| (s.points[j][a] - mean[a]) * (s.points[j][b] - mean[b])).sum::<f64>()
        });
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..s.n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let top = eig.eigenvalues[order[0]].max(1e-300);
        if s.d > 0 && eig.eigenvalues[order[s.d - 1]] <= 1e-12 * top {
            degenerate += 1;
        }
        let mut f = DMatrix::zeros(s.d, s.n);
        for r in 0..s.d {
            f.set_row(r, &eig.eigenvectors.column(order[r]).transpose());
        }
        out.push(LinearPlane::span_of(&f).unwrap_or_else(|_| LinearPlane::coordinate(s.d, s.n)));
    }
    if degenerate > 0 {
        log::warn!("{degenerate} samples have a degenerate local spectrum");
    }
    Ok(out)
}

fn tangents_for(s: &SampledSet, i: &Integrand, pca_k: usize) -> Result<Option<Vec<LinearPlane>>> {
    if !i.needs_tangents() {
        return Ok(None);
    }
    match &s.tangents {
        Some(t) => Ok(Some(t.clone())),
        None => estimate_tangents(s, pca_k).map(Some),
    }
}

/// `Σ w_i i(x_i, T_i)`.
pub fn energy_eval(s: &SampledSet, integrand: &Integrand, pca_k: usize) -> Result<f64> {
    if matches!(integrand.kind, IntegrandKind::Hausdorff) {
        return Ok(weight_mass(s));
    }
    let t = tangents_for(s, integrand, pca_k)?;
    let mut e = 0.0;
    for (i, (p, w)) in s.points.iter().zip(&s.weights).enumerate() {
        e += w * integrand.eval(p, t.as_ref().map(|t| &t[i]))?;
    }
    Ok(e)
}

/// Energy with calibrated occupancy shares in place of the weights.
pub fn occupancy_energy(s: &SampledSet, integrand: &Integrand, delta: f64, pca_k: usize) -> Result<f64> {
    let w = occupancy_weights(s, delta)?;
    if matches!(integrand.kind, IntegrandKind::Hausdorff) {
        return Ok(w.iter().sum());
    }
    let t = if integrand.needs_tangents() && s.len() <= s.d + 1 {
        // too few points for PCA: any plane will do, the mass is tiny
        Some(vec![LinearPlane::coordinate(s.d, s.n); s.len()])
    } else {
        tangents_for(s, integrand, pca_k)?
    };
    let mut e = 0.0;
    for (i, p) in s.points.iter().enumerate() {
        e += w[i] * integrand.eval(p, t.as_ref().map(|t| &t[i]))?;
    }
    Ok(e)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AhlforsRow {
    pub center: Vec<f64>,
    pub radius: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AhlforsReport {
    pub rows: Vec<AhlforsRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// `H^d(S ∩ B(x, r)) / r^d` for every pair.
pub fn ahlfors_audit(s: &SampledSet, centers: &[Vec<f64>], radii: &[f64], delta: f64) -> Result<AhlforsReport> {
    let mut rows = Vec::new();
    for c in centers {
        for &r in radii {
            if !(r > 0.0) {
                return Err(Error::InvalidInput("radii must be positive".into()));
            }
            let part = s.filter(|p| euclid(p, c) < r);
            let ratio = hausdorff_estimate(&part, delta)? / r.powi(s.d as i32);
            rows.push(AhlforsRow { center: c.clone(), radius: r, ratio });
        }
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(AhlforsReport { rows, min_ratio, max_ratio })
}

/// `P = (κ, h, s)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiminParams {
    pub kappa: f64,
    pub h: f64,
    /// `None` stands for `s = ∞`.
    #[serde(default)]
    pub scale: Option<f64>,
}

impl QuasiminParams {
    pub fn new(kappa: f64, h: f64, scale: Option<f64>) -> Result<QuasiminParams> {
        let p = QuasiminParams { kappa, h, scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 1.0 && self.h >= 0.0) || self.scale.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::InvalidInput("need kappa >= 1, h >= 0, scale > 0".into()));
        }
        Ok(())
    }

    pub fn scale_value(&self) -> f64 {
        self.scale.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasiminAudit {
    pub lhs: f64,
    pub rhs: f64,
    pub moved: usize,
    pub satisfied: bool,
}

/// Check `I(W_f) ≤ κ I(f(W_f)) + h I(S ∩ hB)` on samples.
#[allow(clippy::too_many_arguments)]
pub fn quasimin_audit(
    s: &SampledSet,
    images: &[Vec<f64>],
    ball_center: &[f64],
    ball_radius: f64,
    params: &QuasiminParams,
    integrand: &Integrand,
    delta: f64,
    tol: f64,
    domain: Option<&dyn DomainOracle>,
) -> Result<QuasiminAudit> {
    params.validate()?;
    if images.len() != s.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: images.len() });
    }
    if let Some(dom) = domain {
        let r = crate::dyadic::scale_radius(ball_center, params.scale_value(), dom)?;
        if dom.dist_to_complement(ball_center) < ball_radius || ball_radius > r {
            return Err(Error::InvalidInput("ball is not inside the domain at the allowed scale".into()));
        }
    }
    let moved: Vec<usize> = (0..s.len()).filter(|&i| euclid(&s.points[i], &images[i]) > EPS_GEOM).collect();
    if moved.is_empty() {
        return Ok(QuasiminAudit { lhs: 0.0, rhs: 0.0, moved: 0, satisfied: true });
    }
    let w = s.subset(&moved);
    let fw = w.moved(moved.iter().map(|&i| images[i].clone()).collect());
    let lhs = occupancy_energy(&w, integrand, delta, PCA_K)?;
    let mut rhs = params.kappa * occupancy_energy(&fw, integrand, delta, PCA_K)?;
    if params.h > 0.0 {
        let hb = s.filter(|p| euclid(p, ball_center) < params.h * ball_radius);
        rhs += params.h * occupancy_energy(&hb, integrand, delta, PCA_K)?;
    }
    Ok(QuasiminAudit { lhs, rhs, moved: moved.len(), satisfied: lhs <= rhs * (1.0 + tol) })
}

/// Four-corner Cantor set of depth `m` in `[0,1]^2`: centres of the `4^m`
/// squares of side `4^{-m}`.
pub fn cantor_four_corner(m: u32) -> Result<SampledSet> {
    if m > 8 {
        return Err(Error::InvalidInput("depth must be at most 8".into()));
    }
    let mut squares = vec![(0.0f64, 0.0f64, 1.0f64)];
    for _ in 0..m {
        let mut next = Vec::with_capacity(squares.len() * 4);
        for &(x, y, s) in &squares {
            let t = s / 4.0;
            for (dx, dy) in [(0.0, 0.0), (3.0 * t, 0.0), (0.0, 3.0 * t), (3.0 * t, 3.0 * t)] {
                next.push((x + dx, y + dy, t));
            }
        }
        squares = next;
    }
    let side = (0.25f64).powi(m as i32);
    let points = squares.iter().map(|&(x, y, s)| vec![x + s / 2.0, y + s / 2.0]).collect();
    SampledSet::new(1, 2, points, vec![side; squares.len()], side)
}

/// Test-set generators.
pub mod generators {
    use super::*;

    /// Segment from `a` to `b` at spacing about `h`, sampled at cell centres.
    pub fn segment(a: &[f64], b: &[f64], h: f64) -> Result<SampledSet> {
        polyline(&[a.to_vec(), b.to_vec()], h)
    }

    /// Polyline through `pts`, arc-length weights.
    pub fn polyline(pts: &[Vec<f64>], h: f64) -> Result<SampledSet> {
        let n = pts.first().map(|p| p.len()).ok_or_else(|| Error::InvalidInput("empty polyline".into()))?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for w in pts.windows(2) {
            let len = euclid(&w[0], &w[1]);
            let k = ((len / h).round() as usize).max(1);
            for j in 0..k {
                let t = (j as f64 + 0.5) / k as f64;
                points.push(w[0].iter().zip(&w[1]).map(|(a, b)| a + t * (b - a)).collect());
                weights.push(len / k as f64);
            }
        }
        SampledSet::new(1, n, points, weights, h)
    }

    /// Union of segments from `center` to each end point.
    pub fn star(center: &[f64], ends: &[Vec<f64>], h: f64) -> Result<SampledSet> {
        let mut out: Option<SampledSet> = None;
        for e in ends {
            let s = segment(center, e, h)?;
            out = Some(match out {
                None => s,
                Some(o) => o.union(&s)?,
            });
        }
        out.ok_or_else(|| Error::InvalidInput("star needs end points".into()))
    }

    /// Circle of radius `r` in the `x1,x2` plane.
    pub fn circle(center: &[f64], r: f64, h: f64) -> Result<SampledSet> {
        let k = ((2.0 * std::f64::consts::PI * r / h).round() as usize).max(3);
        let points: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                let mut p = center.to_vec();
                p[0] += r * t.cos();
                p[1] += r * t.sin();
                p
            })
            .collect();
        let w = 2.0 * std::f64::consts::PI * r / k as f64;
        SampledSet::new(1, center.len(), points, vec![w; k], h)
    }

    /// Axis-aligned square patch `[lo, lo+side]^2 × {rest}` as a 2-set.
    pub fn square_patch(lo: &[f64], side: f64, h: f64) -> Result<SampledSet> {
        let k = ((side / h).round() as usize).max(1);
        let mut pts = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                let mut p = lo.to_vec();
                p[0] += side * (i as f64 + 0.5) / k as f64;
                p[1] += side * (j as f64 + 0.5) / k as f64;
                pts.push(p);
            }
        }
        let w = (side / k as f64).powi(2);
        let n = lo.len();
        SampledSet::new(2, n, pts, vec![w; k * k], side / k as f64)
    }
}
