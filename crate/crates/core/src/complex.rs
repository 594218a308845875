//! Complexes of dyadic cells.
//!
//! A [`Complex`] is a finite set of cells with an exact key index and a
//! spatial index: for each scale level present, cells are bucketed by the
//! level-sized cube holding their lowest corner. Point and box queries
//! visit a handful of buckets per level.

use crate::dyadic::{Cell, CellJson, DomainOracle, DyadicScalar, Membership};
use crate::error::{Error, Result};
use serde::Serialize;
use std::collections::{BTreeSet, HashMap, HashSet};

/// Default cap on the number of cells a pasting may produce.
pub const DEFAULT_SIZE_CAP: usize = 2_000_000;

#[derive(Clone, Default)]
pub struct Complex {
    n: usize,
    cells: Vec<Cell>,
    keys: HashMap<Cell, usize>,
    buckets: HashMap<(u32, Vec<i64>), Vec<usize>>,
    levels: BTreeSet<u32>,
}

impl std::fmt::Debug for Complex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Complex").field("n", &self.n).field("cells", &self.cells.len()).finish()
    }
}

fn bucket_coord(x: f64, level: u32) -> i64 {
    (x * (2f64).powi(level as i32)).floor() as i64
}

impl Complex {
    pub fn empty(n: usize) -> Complex {
        Complex { n, ..Default::default() }
    }

    /// Build from cells; duplicates are merged.
    pub fn from_cells(n: usize, cells: impl IntoIterator<Item = Cell>) -> Result<Complex> {
        let mut k = Complex::empty(n);
        for c in cells {
            k.insert(c)?;
        }
        Ok(k)
    }

    /// Insert a cell; returns false if it was already present.
    pub fn insert(&mut self, c: Cell) -> Result<bool> {
        if c.ambient_dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: c.ambient_dim() });
        }
        if self.keys.contains_key(&c) {
            return Ok(false);
        }
        let idx = self.cells.len();
        let level = c.scale_exp();
        let home: Vec<i64> = c.anchor().iter().map(|a| bucket_coord(a.to_f64(), level)).collect();
        self.buckets.entry((level, home)).or_default().push(idx);
        self.levels.insert(level);
        self.keys.insert(c.clone(), idx);
        self.cells.push(c);
        Ok(true)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: &Cell) -> bool {
        self.keys.contains_key(c)
    }

    pub fn index_of(&self, c: &Cell) -> Option<usize> {
        self.keys.get(c).copied()
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.levels.iter().copied()
    }

    pub fn max_level(&self) -> u32 {
        self.levels.iter().next_back().copied().unwrap_or(0)
    }

    /// Indices of cells whose level satisfies `keep` and whose closed box
    /// may meet the box `[lo - eps, hi + eps]` (a superset; callers filter).
    fn candidates(&self, lo: &[f64], hi: &[f64], eps: f64, keep: impl Fn(u32) -> bool) -> Vec<usize> {
        let mut out = Vec::new();
        for &level in self.levels.iter().filter(|&&l| keep(l)) {
            let ranges: Vec<(i64, i64)> =
                (0..self.n).map(|i| (bucket_coord(lo[i] - eps, level) - 1, bucket_coord(hi[i] + eps, level))).collect();
            let count: i64 = ranges.iter().map(|(a, b)| b - a + 1).product();
            if count > 4096 {
                // a fine level under a large query box: scan the level instead
                for (idx, c) in self.cells.iter().enumerate() {
                    if c.scale_exp() == level {
                        out.push(idx);
                    }
                }
                continue;
            }
            let mut key: Vec<i64> = ranges.iter().map(|r| r.0).collect();
            loop {
                if let Some(v) = self.buckets.get(&(level, key.clone())) {
                    out.extend_from_slice(v);
                }
                let mut i = 0;
                loop {
                    if i == self.n {
                        break;
                    }
                    key[i] += 1;
                    if key[i] <= ranges[i].1 {
                        break;
                    }
                    key[i] = ranges[i].0;
                    i += 1;
                }
                if i == self.n {
                    break;
                }
            }
        }
        out
    }

    /// Cells whose closed box contains `x` (within `tol`).
    pub fn cells_containing_point(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.candidates(x, x, tol, |_| true)
            .into_iter()
            .filter(|&i| self.cells[i].membership(x, tol).map(|m| m != Membership::Outside).unwrap_or(false))
            .collect()
    }

    /// The cell whose relative interior holds `x`, if any.
    ///
    /// With a positive tolerance a point within `tol` of a wall is assigned
    /// to the lower-dimensional face; among several claims the
    /// lowest-dimensional cell wins.
    pub fn locate(&self, x: &[f64], tol: f64) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in self.candidates(x, x, tol, |_| true) {
            if self.cells[i].membership(x, tol).ok() == Some(Membership::Interior) {
                match best {
                    Some(b) if self.cells[b].dim() <= self.cells[i].dim() => {}
                    _ => best = Some(i),
                }
            }
        }
        best
    }

    /// Whether `x` lies in the support `|K|`.
    pub fn support_contains(&self, x: &[f64], tol: f64) -> bool {
        !self.cells_containing_point(x, tol).is_empty()
    }

    /// Cells `B` of the complex with `A ⊆ B` (closed containment).
    pub fn supersets(&self, a: &Cell) -> Vec<usize> {
        let c = a.center_f64();
        self.candidates(&c, &c, 0.0, |l| l <= a.scale_exp())
            .into_iter()
            .filter(|&i| self.cells[i].contains_cell(a))
            .collect()
    }

    /// `V_A = ∪{int B : B ∈ K, A ⊆ B}`.
    pub fn neighborhood_va(&self, a: &Cell) -> Result<VaRegion> {
        if !self.contains(a) {
            return Err(Error::NotInComplex);
        }
        let cells = self.supersets(a).into_iter().map(|i| self.cells[i].clone()).collect();
        Ok(VaRegion { cells })
    }

    /// Cells of dimension exactly `d`.
    pub fn skeleton(&self, d: usize) -> Vec<Cell> {
        self.cells.iter().filter(|c| c.dim() == d).cloned().collect()
    }

    /// Cells of dimension at most `d`.
    pub fn skeleton_upto(&self, d: usize) -> Vec<Cell> {
        self.cells.iter().filter(|c| c.dim() <= d).cloned().collect()
    }

    /// The canonical complex `E_n`: the `3^n` cells `Π[0, α_i]`.
    pub fn canonical_chart(n: usize) -> Result<Complex> {
        if !(1..=6).contains(&n) {
            return Err(Error::InvalidInput(format!("canonical chart supports 1 <= n <= 6, got {n}")));
        }
        Self::chart_at(&vec![DyadicScalar::ZERO; n], 0)
    }

    /// `p + 2^{-k} E_n` for any dyadic `p` (no lattice check).
    pub fn chart_at(p: &[DyadicScalar], k: u32) -> Result<Complex> {
        let n = p.len();
        let mut cells = Vec::with_capacity(3usize.pow(n as u32));
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let alpha: Vec<i8> = (0..n)
                .map(|_| {
                    let a = (c % 3) as i8 - 1;
                    c /= 3;
                    a
                })
                .collect();
            cells.push(Cell::from_alpha(p, &alpha, k)?);
        }
        Complex::from_cells(n, cells)
    }

    /// The dyadic chart `E_n(p, k)`; requires `p ∈ 2^{-k} Z^n`.
    pub fn dyadic_chart(p: &[DyadicScalar], k: u32) -> Result<Complex> {
        if p.iter().any(|c| !c.on_lattice(k as i32)) {
            return Err(Error::NonDyadicCenter(k as i32));
        }
        Self::chart_at(p, k)
    }

    /// Canonical grid of level `k` on the box `[lo, hi]` (corners on the
    /// level-`k` lattice): every face of every top cell. With
    /// `exclude_boundary`, faces lying in the box boundary are dropped.
    pub fn grid(lo: &[DyadicScalar], hi: &[DyadicScalar], k: u32, exclude_boundary: bool) -> Result<Complex> {
        let n = lo.len();
        if hi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: hi.len() });
        }
        if lo.iter().chain(hi).any(|c| !c.on_lattice(k as i32)) {
            return Err(Error::NonDyadicCenter(k as i32));
        }
        let h = DyadicScalar::pow2_neg(k as i32);
        let counts: Vec<i64> = (0..n)
            .map(|i| {
                let len = hi[i] - lo[i];
                len.scale_pow2(-(k as i32)).map(|v| v.mantissa())
            })
            .collect::<Result<_>>()?;
        if counts.iter().any(|&c| c <= 0) {
            return Err(Error::InvalidInput("grid box must have lo < hi".into()));
        }
        // integer coordinates 0..=2*count: even = vertex coordinate, odd = open interval
        let dims: Vec<i64> = counts.iter().map(|c| 2 * c + 1).collect();
        let total: i64 = dims.iter().product();
        if total as usize > DEFAULT_SIZE_CAP {
            return Err(Error::SizeCap { cells: total as usize, cap: DEFAULT_SIZE_CAP });
        }
        let mut k_out = Complex::empty(n);
        let mut idx = vec![0i64; n];
        for _ in 0..total {
            let mut anchor = Vec::with_capacity(n);
            let mut span = 0u32;
            let mut on_box_boundary = false;
            for i in 0..n {
                let step = idx[i] / 2;
                let a = lo[i] + DyadicScalar::from_int(step).scale_pow2(k as i32)?;
                if idx[i] % 2 == 1 {
                    span |= 1 << i;
                } else if idx[i] == 0 || idx[i] == dims[i] - 1 {
                    on_box_boundary = true;
                }
                anchor.push(a);
            }
            if !(exclude_boundary && on_box_boundary) {
                k_out.insert(Cell::new(anchor, span, k)?)?;
            }
            for i in 0..n {
                idx[i] += 1;
                if idx[i] < dims[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        let _ = h;
        Ok(k_out)
    }

    /// Check the three complex axioms.
    pub fn validate(&self) -> ValidationReport {
        self.validate_with(None)
    }

    /// As [`Complex::validate`], with an explicit sampling resolution for
    /// axiom (iii) (default `2^{-(k_max+2)}`).
    pub fn validate_with(&self, resolution: Option<f64>) -> ValidationReport {
        let mut report = ValidationReport { valid: true, ..Default::default() };
        // (i) pairwise disjoint interiors, checked from the finer cell of each pair
        for (i, a) in self.cells.iter().enumerate() {
            let (lo, hi) = (a.lo_f64(), a.hi_f64());
            for j in self.candidates(&lo, &hi, 0.0, |l| l <= a.scale_exp()) {
                if j == i {
                    continue;
                }
                let b = &self.cells[j];
                if b.scale_exp() == a.scale_exp() && j < i {
                    continue;
                }
                if a.interiors_intersect(b) {
                    report.overlapping.push((i.min(j), i.max(j)));
                }
            }
        }
        report.overlapping.sort();
        report.overlapping.dedup();
        // (ii) finiteness holds by construction; record the containment count
        for a in &self.cells {
            report.max_containing = report.max_containing.max(self.supersets(a).len());
        }
        // (iii) V_A is a relative neighbourhood of int(A) in |K|
        let res = resolution.unwrap_or_else(|| (0.5f64).powi(self.max_level() as i32 + 2));
        let kappa = 1.0 + (self.n as f64).sqrt();
        let dirs = probe_directions(self.n);
        for a in &self.cells {
            if a.dim() == self.n {
                continue; // V_A = int(A), open in R^n
            }
            let va = match self.neighborhood_va(a) {
                Ok(v) => v,
                Err(_) => continue,
            };
            for y in interior_samples(a, res) {
                let rho =
                    if a.dim() == 0 { res } else { res.min(a.dist_to_boundary(&y).unwrap_or(res) / (2.0 * kappa)) };
                report.samples_checked += 1;
                for u in &dirs {
                    let z: Vec<f64> = y.iter().zip(u).map(|(yi, ui)| yi + rho * ui).collect();
                    if self.support_contains(&z, 0.0) && !va.contains(&z) {
                        report.neighborhood_failures.push(NeighborhoodFailure {
                            cell: a.clone(),
                            sample: y.clone(),
                            probe: z,
                        });
                        break;
                    }
                }
            }
        }
        report.valid = report.overlapping.is_empty() && report.neighborhood_failures.is_empty();
        report
    }

    /// Serialize as a JSON array of cells.
    pub fn to_json(&self) -> Result<String> {
        let v: Vec<CellJson> = self.cells.iter().map(|c| c.to_json()).collect();
        Ok(serde_json::to_string(&v)?)
    }

    pub fn from_json(s: &str) -> Result<Complex> {
        let v: Vec<CellJson> = serde_json::from_str(s)?;
        let cells = v.iter().map(Cell::from_json).collect::<Result<Vec<_>>>()?;
        let n = cells.first().map(|c| c.ambient_dim()).unwrap_or(1);
        Complex::from_cells(n, cells)
    }
}

/// Unit probe directions: the normalized nonzero vectors of `{-1,0,1}^n`.
fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let a = (c % 3) as f64 - 1.0;
                c /= 3;
                a
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.push(v.iter().map(|x| x / norm).collect());
        }
    }
    out
}

/// Sample points of `int(A)` at spacing about `res` (at most 8 per axis).
fn interior_samples(a: &Cell, res: f64) -> Vec<Vec<f64>> {
    let side = a.side_f64();
    let m = ((side / res).round() as usize).clamp(1, 8);
    let lo = a.lo_f64();
    let open: Vec<usize> = (0..a.ambient_dim()).filter(|&i| a.is_open_axis(i)).collect();
    let total = m.pow(open.len() as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut y = lo.clone();
        for &i in &open {
            let j = c % m;
            c /= m;
            y[i] = lo[i] + side * (j as f64 + 0.5) / m as f64;
        }
        out.push(y);
    }
    out
}

/// `V_A` as an explicit union of cell interiors.
#[derive(Debug, Clone)]
pub struct VaRegion {
    pub cells: Vec<Cell>,
}

impl VaRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.cells.iter().any(|c| c.membership(x, 0.0).ok() == Some(Membership::Interior))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NeighborhoodFailure {
    pub cell: Cell,
    pub sample: Vec<f64>,
    pub probe: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    /// Index pairs with intersecting interiors (axiom i).
    pub overlapping: Vec<(usize, usize)>,
    /// Largest number of cells containing a single cell.
    pub max_containing: usize,
    /// Points of some `int(A)` whose small neighbourhood in `|K|` escapes `V_A` (axiom iii).
    pub neighborhood_failures: Vec<NeighborhoodFailure>,
    pub samples_checked: usize,
}

/// `x ∈ V_A(κ)`, i.e. `d(x, A) < κ^{-1} d(x, ∂A)`.
pub fn in_cone_va_kappa(a: &Cell, kappa: f64, x: &[f64]) -> Result<bool> {
    if a.dim() == 0 {
        return Err(Error::ZeroDimCell);
    }
    if x.len() != a.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: a.ambient_dim(), got: x.len() });
    }
    if !(kappa >= 1.0) {
        return Err(Error::InvalidInput(format!("kappa must be >= 1, got {kappa}")));
    }
    Ok(a.dist(x) < a.dist_to_boundary(x)? / kappa)
}

/// `L ⊆ K` and `L` is upward closed in `K`.
pub fn is_subcomplex(l: &Complex, k: &Complex) -> bool {
    l.cells().iter().all(|a| k.contains(a) && k.supersets(a).into_iter().all(|j| l.contains(&k.cells()[j])))
}

/// `x ∈ U(L) = ∪ int(A)`.
pub fn rigid_open_set_contains(l: &Complex, x: &[f64]) -> bool {
    l.locate(x, 0.0).is_some()
}

/// `L ⪯ K`: every interior of `L` lies inside an interior of `K`.
pub fn is_subordinate(l: &Complex, k: &Complex) -> bool {
    l.cells().iter().all(|a| {
        let c = a.center_f64();
        k.cells_containing_point(&c, 0.0).into_iter().any(|j| k.cells()[j].interior_contains_interior(a))
    })
}

/// A system of charts, each a complex.
#[derive(Debug, Clone, Default)]
pub struct ChartSystem {
    pub charts: Vec<Complex>,
}

/// Maximal cells of a chart system.
pub fn paste_system(s: &ChartSystem) -> Result<Complex> {
    paste_system_capped(s, DEFAULT_SIZE_CAP)
}

pub fn paste_system_capped(s: &ChartSystem, cap: usize) -> Result<Complex> {
    let n = match s.charts.first() {
        Some(c) => c.ambient_dim(),
        None => return Ok(Complex::empty(1)),
    };
    let mut all = Complex::empty(n);
    for ch in &s.charts {
        for c in ch.cells() {
            all.insert(c.clone())?;
            if all.len() > cap {
                return Err(Error::SizeCap { cells: all.len(), cap });
            }
        }
    }
    maximal_cells(&all)
}

/// Keep the cells whose interior is not strictly inside another interior;
/// fails if two interiors meet without nesting.
pub fn maximal_cells(all: &Complex) -> Result<Complex> {
    let cells = all.cells();
    let mut absorbed = vec![false; cells.len()];
    for (i, a) in cells.iter().enumerate() {
        let (lo, hi) = (a.lo_f64(), a.hi_f64());
        for j in all.candidates(&lo, &hi, 0.0, |l| l <= a.scale_exp()) {
            if j == i {
                continue;
            }
            let b = &cells[j];
            if !a.interiors_intersect(b) {
                continue;
            }
            if b.interior_contains_interior(a) {
                absorbed[i] = true;
            } else if a.interior_contains_interior(b) {
                absorbed[j] = true;
            } else {
                return Err(Error::AxiomViolation {
                    axiom: "i",
                    detail: format!("interiors of {a} and {b} overlap without nesting"),
                });
            }
        }
    }
    Complex::from_cells(all.ambient_dim(), cells.iter().zip(&absorbed).filter(|(_, &x)| !x).map(|(c, _)| c.clone()))
}

/// Maximal cells of `{E_n(p,k) : |E_n(p,k)| ⊂ X, k ≤ k_max}`.
pub fn whitney_decompose(domain: &dyn DomainOracle, k_max: u32) -> Result<Complex> {
    let n = domain.dim();
    let (blo, bhi) = domain.bounding_box();
    if blo.iter().chain(&bhi).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("domain needs a bounded box".into()));
    }
    let mut all = Complex::empty(n);
    let mut seen: HashSet<Cell> = HashSet::new();
    for k in 0..=k_max {
        let h = (0.5f64).powi(k as i32);
        // p ranges over the lattice with p ± h inside the bounding box
        let ranges: Vec<(i64, i64)> =
            (0..n).map(|i| (((blo[i] + h) / h).ceil() as i64, ((bhi[i] - h) / h).floor() as i64)).collect();
        if ranges.iter().any(|(a, b)| a > b) {
            continue;
        }
        let count: i64 = ranges.iter().map(|(a, b)| b - a + 1).product();
        if (count as usize).saturating_mul(3usize.pow(n as u32)) > DEFAULT_SIZE_CAP {
            return Err(Error::SizeCap { cells: count as usize, cap: DEFAULT_SIZE_CAP });
        }
        let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            let pf: Vec<f64> = idx.iter().map(|&j| j as f64 * h).collect();
            let lo: Vec<f64> = pf.iter().map(|v| v - h).collect();
            let hi: Vec<f64> = pf.iter().map(|v| v + h).collect();
            if domain.contains_closed_box(&lo, &hi) {
                let p: Vec<DyadicScalar> =
                    idx.iter().map(|&j| DyadicScalar::from_int(j).scale_pow2(k as i32)).collect::<Result<_>>()?;
                for c in Complex::chart_at(&p, k)?.cells() {
                    if seen.insert(c.clone()) {
                        all.insert(c.clone())?;
                    }
                }
            }
            for i in 0..n {
                idx[i] += 1;
                if idx[i] <= ranges[i].1 {
                    continue 'outer;
                }
                idx[i] = ranges[i].0;
            }
            break;
        }
    }
    maximal_cells(&all)
}

/// A rigid boundary: a set of faces of the level-`k` grid, closed under
/// taking faces.
#[derive(Debug, Clone)]
pub struct BoundarySpec {
    pub grid_level: u32,
    pub faces: Complex,
}

impl BoundarySpec {
    pub fn new(grid_level: u32, faces: Complex) -> Result<BoundarySpec> {
        for c in faces.cells() {
            if c.scale_exp() != grid_level {
                return Err(Error::InvalidInput(format!("boundary face {c} not at level {grid_level}")));
            }
            if c.anchor().iter().any(|a| !a.on_lattice(grid_level as i32)) {
                return Err(Error::NonDyadicCenter(grid_level as i32));
            }
            for f in c.faces() {
                if !faces.contains(&f) {
                    return Err(Error::InvalidInput(format!("face {f} of boundary cell {c} missing")));
                }
            }
        }
        Ok(BoundarySpec { grid_level, faces })
    }

    /// Closure under faces of the given cells.
    pub fn from_top_faces(grid_level: u32, n: usize, tops: &[Cell]) -> Result<BoundarySpec> {
        let mut k = Complex::empty(n);
        for t in tops {
            for f in t.faces() {
                k.insert(f)?;
            }
        }
        BoundarySpec::new(grid_level, k)
    }

    /// Whether `x ∈ |S|`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.faces.support_contains(x, tol)
    }

    /// Euclidean distance to `|S|`.
    pub fn dist(&self, x: &[f64]) -> f64 {
        self.faces.cells().iter().map(|c| c.dist(x)).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{OpenBox, PuncturedBox};
    use proptest::prelude::*;

    fn dy(m: i64, e: u32) -> DyadicScalar {
        DyadicScalar::new(m, e)
    }

    fn cell(anchor: &[(i64, u32)], span: u32, k: u32) -> Cell {
        Cell::new(anchor.iter().map(|&(m, e)| dy(m, e)).collect(), span, k).unwrap()
    }

    #[test]
    fn canonical_counts() {
        let e1 = Complex::canonical_chart(1).unwrap();
        assert_eq!(e1.len(), 3);
        let e2 = Complex::canonical_chart(2).unwrap();
        let mut dims = [0usize; 3];
        for c in e2.cells() {
            dims[c.dim()] += 1;
        }
        assert_eq!(dims, [1, 4, 4]);
        assert_eq!(Complex::canonical_chart(3).unwrap().len(), 27);
        assert!(Complex::canonical_chart(7).is_err());
    }

    #[test]
    fn dyadic_chart_examples() {
        let p0 = vec![DyadicScalar::ZERO; 2];
        let c = Complex::dyadic_chart(&p0, 0).unwrap();
        let e2 = Complex::canonical_chart(2).unwrap();
        assert!(c.cells().iter().all(|x| e2.contains(x)));
        let p = vec![dy(1, 1), dy(1, 1)];
        let ch = Complex::dyadic_chart(&p, 1).unwrap();
        assert_eq!(ch.len(), 9);
        assert!(ch.cells().iter().all(|x| x.side() == dy(1, 1)));
        // support p + [-1/2, 1/2]^2
        let lo = ch.cells().iter().map(|c| c.lo(0)).min().unwrap();
        let hi = ch.cells().iter().map(|c| c.hi(0)).max().unwrap();
        assert_eq!((lo, hi), (DyadicScalar::ZERO, DyadicScalar::ONE));
        assert!(matches!(Complex::dyadic_chart(&[dy(1, 2), dy(0, 0)], 1), Err(Error::NonDyadicCenter(1))));
    }

    #[test]
    fn canonical_is_valid() {
        for n in 1..=3 {
            let r = Complex::canonical_chart(n).unwrap().validate();
            assert!(r.valid, "n={n}: {r:?}");
            assert!(r.max_containing <= 3usize.pow(n as u32));
        }
    }

    #[test]
    fn two_squares_validation() {
        let sq1 = cell(&[(0, 0), (0, 0)], 0b11, 0);
        let sq2 = cell(&[(1, 0), (0, 0)], 0b11, 0);
        let mut full = Complex::empty(2);
        for f in sq1.faces().into_iter().chain(sq2.faces()) {
            full.insert(f).unwrap();
        }
        assert_eq!(full.len(), 2 + 7 + 6);
        assert!(full.validate().valid);

        // shared edge and its end points absent: still a complex
        let shared = cell(&[(1, 0), (0, 0)], 0b10, 0);
        let without: Vec<Cell> = full.cells().iter().filter(|c| !shared.contains_cell(c)).cloned().collect();
        let k = Complex::from_cells(2, without).unwrap();
        assert!(k.validate().valid);

        // shared edge absent but its end points kept: V_A of (1,0) is no neighbourhood
        let dangling: Vec<Cell> = full.cells().iter().filter(|c| **c != shared).cloned().collect();
        let k = Complex::from_cells(2, dangling).unwrap();
        let r = k.validate();
        assert!(!r.valid);
        assert!(r.overlapping.is_empty());
        assert!(!r.neighborhood_failures.is_empty());
    }

    #[test]
    fn overlapping_squares_invalid() {
        let a = cell(&[(0, 0), (0, 0)], 0b11, 0);
        let b = cell(&[(1, 1), (0, 0)], 0b11, 0);
        let k = Complex::from_cells(2, vec![a, b]).unwrap();
        let r = k.validate();
        assert!(!r.valid);
        assert_eq!(r.overlapping, vec![(0, 1)]);
    }

    #[test]
    fn va_examples() {
        let e2 = Complex::canonical_chart(2).unwrap();
        let a = cell(&[(0, 0), (0, 0)], 0b01, 0);
        let va = e2.neighborhood_va(&a).unwrap();
        assert!(va.contains(&[0.5, 0.99]));
        assert!(va.contains(&[0.5, -0.99]));
        assert!(va.contains(&[0.5, 0.0]));
        assert!(!va.contains(&[0.0, 0.5]));
        assert!(!va.contains(&[-0.5, 0.5]));
        assert!(!va.contains(&[0.5, 1.0]));
        let top = cell(&[(0, 0), (0, 0)], 0b11, 0);
        let vt = e2.neighborhood_va(&top).unwrap();
        assert_eq!(vt.cells.len(), 1);
        let v = cell(&[(0, 0), (0, 0)], 0, 0);
        let vv = e2.neighborhood_va(&v).unwrap();
        assert_eq!(vv.cells.len(), 9);
        assert!(vv.contains(&[0.0, 0.99]) && vv.contains(&[-0.9, 0.9]));
        let far = cell(&[(5, 0), (0, 0)], 0, 0);
        assert!(matches!(e2.neighborhood_va(&far), Err(Error::NotInComplex)));
    }

    #[test]
    fn cone_examples() {
        let a = cell(&[(0, 0), (0, 0)], 0b01, 0);
        assert!(in_cone_va_kappa(&a, 5.0, &[0.3, 0.0]).unwrap());
        assert!(in_cone_va_kappa(&a, 2.0, &[0.5, 0.1]).unwrap());
        assert!(!in_cone_va_kappa(&a, 2.0, &[-0.5, 0.0]).unwrap());
        let v = cell(&[(0, 0), (0, 0)], 0, 0);
        assert!(matches!(in_cone_va_kappa(&v, 2.0, &[0.0, 0.0]), Err(Error::ZeroDimCell)));
    }

    #[test]
    fn subcomplex_examples() {
        let e2 = Complex::canonical_chart(2).unwrap();
        assert!(is_subcomplex(&e2, &e2));
        let squares = Complex::from_cells(2, e2.skeleton(2)).unwrap();
        assert!(is_subcomplex(&squares, &e2));
        let edge = Complex::from_cells(2, vec![cell(&[(0, 0), (0, 0)], 0b01, 0)]).unwrap();
        assert!(!is_subcomplex(&edge, &e2));
    }

    #[test]
    fn rigid_open_set_examples() {
        let e2 = Complex::canonical_chart(2).unwrap();
        assert!(rigid_open_set_contains(&e2, &[0.0, 0.0]));
        assert!(!rigid_open_set_contains(&e2, &[1.0, 0.5]));
        assert!(!rigid_open_set_contains(&Complex::empty(2), &[0.0, 0.0]));
    }

    #[test]
    fn subordination_examples() {
        let e2 = Complex::canonical_chart(2).unwrap();
        assert!(is_subordinate(&e2, &e2));
        // level-1 grid of ]-1,1[^2 inside U(E_2)
        let fine = Complex::grid(&[dy(-1, 0), dy(-1, 0)], &[dy(1, 0), dy(1, 0)], 1, true).unwrap();
        assert!(is_subordinate(&fine, &e2));
        assert!(!is_subordinate(&e2, &fine));
        // offset by about 1/3 at depth 40
        let third = DyadicScalar::round_f64(1.0 / 3.0, 40).unwrap();
        let shifted = Complex::chart_at(&[third, DyadicScalar::ZERO], 0).unwrap();
        assert!(!is_subordinate(&shifted, &e2));
    }

    #[test]
    fn grid_pasting_reproduces_canonical_grid() {
        let mut sys = ChartSystem::default();
        for x in -2..=2 {
            for y in -2..=2 {
                sys.charts
                    .push(Complex::dyadic_chart(&[DyadicScalar::from_int(x), DyadicScalar::from_int(y)], 0).unwrap());
            }
        }
        let pasted = paste_system(&sys).unwrap();
        let grid = Complex::grid(&[dy(-3, 0), dy(-3, 0)], &[dy(3, 0), dy(3, 0)], 0, true).unwrap();
        assert_eq!(pasted.len(), grid.len());
        assert_eq!(grid.len(), 36 + 60 + 25);
        assert!(grid.cells().iter().all(|c| pasted.contains(c)));
    }

    #[test]
    fn paste_single_and_conflict() {
        let e2 = Complex::canonical_chart(2).unwrap();
        let one = paste_system(&ChartSystem { charts: vec![e2.clone()] }).unwrap();
        assert_eq!(one.len(), 9);
        // the level-1 chart at (1/2,1/2) nests inside a square of E_2
        let nested = Complex::dyadic_chart(&[dy(1, 1), dy(1, 1)], 1).unwrap();
        assert_eq!(paste_system(&ChartSystem { charts: vec![e2.clone(), nested] }).unwrap().len(), 9);
        let other = Complex::chart_at(&[dy(1, 1), dy(1, 1)], 0).unwrap();
        let r = paste_system(&ChartSystem { charts: vec![e2, other] });
        assert!(matches!(r, Err(Error::AxiomViolation { axiom: "i", .. })));
        let big = Complex::canonical_chart(3).unwrap();
        assert!(matches!(paste_system_capped(&ChartSystem { charts: vec![big] }, 10), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn nested_charts_paste() {
        // a fine chart inside a coarse square is absorbed
        let coarse = Complex::dyadic_chart(&[DyadicScalar::ONE, DyadicScalar::ONE], 0).unwrap();
        let fine = Complex::dyadic_chart(&[dy(1, 1), dy(1, 1)], 1).unwrap();
        let k = paste_system(&ChartSystem { charts: vec![coarse.clone(), fine] }).unwrap();
        assert_eq!(k.len(), coarse.len());
    }

    #[test]
    fn whitney_unit_square() {
        let bx = OpenBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let k = whitney_decompose(&bx, 6).unwrap();
        let r = k.validate();
        assert!(r.valid && r.max_containing <= 9, "{:?}", r.overlapping.len());
        for a in k.skeleton(2) {
            let c = a.center_f64();
            assert!(a.side_f64() <= bx.dist_inf_to_complement(&c).min(1.0) + 1e-15);
            assert!(bx.contains_closed_box(&a.lo_f64(), &a.hi_f64()));
        }
    }

    #[test]
    fn whitney_full_space_is_one_chart() {
        let fs = crate::dyadic::FullSpace { window_lo: vec![0.0, 0.0], window_hi: vec![2.0, 2.0] };
        let k = whitney_decompose(&fs, 3).unwrap();
        assert_eq!(k.len(), 9);
        assert!(k.cells().iter().all(|c| c.scale_exp() == 0));
    }

    #[test]
    fn whitney_punctured() {
        let d = PuncturedBox { bx: OpenBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), holes: vec![vec![0.5, 0.5]] };
        let k = whitney_decompose(&d, 5).unwrap();
        assert!(k.validate().valid);
        let near = k.locate(&[0.59, 0.58], 0.0).map(|i| k.cells()[i].side_f64()).unwrap();
        let far = k.locate(&[0.2, 0.3], 0.0).map(|i| k.cells()[i].side_f64()).unwrap();
        assert!(near < far);
    }

    #[test]
    fn skeleton_counts() {
        let e2 = Complex::canonical_chart(2).unwrap();
        assert_eq!(e2.skeleton(1).len(), 4);
        assert_eq!(e2.skeleton(2).len(), 4);
        assert_eq!(e2.skeleton_upto(1).len(), 5);
        let g = Complex::grid(&[dy(0, 0), dy(0, 0)], &[dy(2, 0), dy(2, 0)], 0, false).unwrap();
        assert_eq!(g.skeleton(0).len(), 9);
    }

    #[test]
    fn json_round_trip_bit_exact() {
        let third = DyadicScalar::round_f64(1.0 / 3.0, 40).unwrap();
        let k = Complex::chart_at(&[third, dy(-3, 2)], 2).unwrap();
        let s = k.to_json().unwrap();
        let back = Complex::from_json(&s).unwrap();
        assert_eq!(back.cells(), k.cells());
        assert_eq!(back.to_json().unwrap(), s);
    }

    #[test]
    fn boundary_spec_closure() {
        let e = cell(&[(0, 0), (0, 0)], 0b01, 0);
        let b = BoundarySpec::from_top_faces(0, 2, &[e.clone()]).unwrap();
        assert_eq!(b.faces.len(), 3);
        assert!(b.contains(&[0.5, 0.0], 0.0));
        assert!((b.dist(&[0.5, 0.25]) - 0.25).abs() < 1e-15);
        let bad = Complex::from_cells(2, vec![e]).unwrap();
        assert!(BoundarySpec::new(0, bad).is_err());
    }

    proptest! {
        #[test]
        fn cone_inside_va(x in -1.0f64..1.0, y in -1.0f64..1.0, pick in 0usize..8) {
            let e2 = Complex::canonical_chart(2).unwrap();
            let kappa = 1.0 + 2f64.sqrt();
            let a = e2.cells().iter().filter(|c| c.dim() >= 1).nth(pick).unwrap().clone();
            if in_cone_va_kappa(&a, kappa, &[x, y]).unwrap() {
                prop_assert!(e2.neighborhood_va(&a).unwrap().contains(&[x, y]));
            }
        }

        #[test]
        fn pasted_grids_have_bounded_overlap(sx in -3i64..3, sy in -3i64..3, k in 0u32..3) {
            let h = DyadicScalar::pow2_neg(k as i32);
            let p0 = [DyadicScalar::from_int(sx).scale_pow2(k as i32).unwrap(),
                      DyadicScalar::from_int(sy).scale_pow2(k as i32).unwrap()];
            let p1 = [p0[0] + h, p0[1]];
            let p2 = [p0[0], p0[1] + h + h];
            let sys = ChartSystem { charts: vec![
                Complex::dyadic_chart(&p0, k).unwrap(),
                Complex::dyadic_chart(&p1, k).unwrap(),
                Complex::dyadic_chart(&p2, k).unwrap(),
            ]};
            let pasted = paste_system(&sys).unwrap();
            let r = pasted.validate();
            prop_assert!(r.valid);
            prop_assert!(r.max_containing <= 9);
            for (i, a) in pasted.cells().iter().enumerate() {
                for b in &pasted.cells()[i + 1..] {
                    prop_assert!(!a.interiors_intersect(b));
                }
            }
        }

        #[test]
        fn subordination_antisymmetric(k1 in 0u32..3, k2 in 0u32..3) {
            let a = Complex::grid(&[dy(0, 0), dy(0, 0)], &[dy(1, 0), dy(1, 0)], k1, true).unwrap();
            let b = Complex::grid(&[dy(0, 0), dy(0, 0)], &[dy(1, 0), dy(1, 0)], k2, true).unwrap();
            if is_subordinate(&a, &b) && is_subordinate(&b, &a) {
                prop_assert_eq!(a.len(), b.len());
                prop_assert!(a.cells().iter().all(|c| b.contains(c)));
            }
        }
    }
}
