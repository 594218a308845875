//! Federer-Fleming projection of sampled sets onto the skeleta of a
//! cubical complex.
//!
//! Samples are moved one dimension at a time: for `m = n, …, d+1` every
//! `m`-cell whose interior holds samples gets a center in its concentric
//! half cell, and its interior samples are pushed radially onto its
//! boundary. Weights are carried unchanged; measure claims are made with
//! occupancy estimates.

use crate::complex::Complex;
use crate::dyadic::{euclid, Cell, Membership, EPS_GEOM};
use crate::error::{Error, Result};
use crate::grassmannian::LinearPlane;
use crate::lipschitz::lipschitz_constant_estimate;
use crate::measure::{embed_in_cell, hausdorff_estimate, occupancy_mass, project_measure, zeta_restricted, SampledSet};
use crate::rng::{stream, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Tunables of the projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FfParams {
    /// Per-cell bound on the occupancy ratio of image to source.
    pub lambda: f64,
    /// Required clearance of the center from the set, as a fraction of `diam A`.
    pub c_dist: f64,
    pub max_tries: usize,
    /// Estimator resolution; `None` means twice the set's resolution.
    pub delta: Option<f64>,
    /// Planes per gauge estimate in the center test.
    pub zeta_planes: usize,
    /// Skip the gauge test (faster, weaker center choice).
    pub check_zeta: bool,
}

impl Default for FfParams {
    fn default() -> Self {
        FfParams { lambda: 20.0, c_dist: 0.125, max_tries: 64, delta: None, zeta_planes: 16, check_zeta: true }
    }
}

impl FfParams {
    fn delta_for(&self, s: &SampledSet) -> f64 {
        self.delta.unwrap_or_else(|| s.default_delta())
    }
}

/// Radial projection of a cell from `center`, linear inside the guard ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProjection {
    pub cell: Cell,
    pub center: Vec<f64>,
    pub delta: f64,
}

impl RadialProjection {
    pub fn new(cell: Cell, center: Vec<f64>, delta: f64) -> Result<RadialProjection> {
        if cell.membership(&center, 0.0)? != Membership::Interior {
            return Err(Error::InvalidInput("center must lie in the interior of the cell".into()));
        }
        if !(delta >= 0.0) {
            return Err(Error::InvalidInput("guard radius must be non-negative".into()));
        }
        Ok(RadialProjection { cell, center, delta })
    }

    /// Image of `y ∈ A`.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let a = &self.cell;
        if a.membership(y, EPS_GEOM)? == Membership::Outside {
            return Err(Error::InvalidInput(format!("point {y:?} is not in {a}")));
        }
        let r = euclid(y, &self.center);
        if r == 0.0 {
            return Ok(self.center.clone());
        }
        let b = boundary_hit(a, &self.center, y);
        if r >= self.delta {
            return Ok(b);
        }
        let s = r / self.delta;
        let mut out: Vec<f64> = self.center.iter().zip(&b).map(|(c, bi)| c + s * (bi - c)).collect();
        clamp_to_cell(a, &mut out);
        Ok(out)
    }
}

/// First point of `∂A` on the ray from `x` through `y`, walls snapped exactly.
fn boundary_hit(a: &Cell, x: &[f64], y: &[f64]) -> Vec<f64> {
    let lo = a.lo_f64();
    let hi = a.hi_f64();
    let mut t_best = f64::INFINITY;
    for i in 0..x.len() {
        if !a.is_open_axis(i) {
            continue;
        }
        let dy = y[i] - x[i];
        let t = if dy > 0.0 {
            (hi[i] - x[i]) / dy
        } else if dy < 0.0 {
            (lo[i] - x[i]) / dy
        } else {
            continue;
        };
        t_best = t_best.min(t);
    }
    let mut out: Vec<f64> = (0..x.len()).map(|i| x[i] + t_best * (y[i] - x[i])).collect();
    clamp_to_cell(a, &mut out);
    // the coordinate that attains the minimum sits on its wall
    let mut snapped = false;
    for i in 0..x.len() {
        if !a.is_open_axis(i) {
            continue;
        }
        let dy = y[i] - x[i];
        let (wall, t) = if dy > 0.0 {
            (hi[i], (hi[i] - x[i]) / dy)
        } else if dy < 0.0 {
            (lo[i], (lo[i] - x[i]) / dy)
        } else {
            continue;
        };
        if t <= t_best * (1.0 + 1e-12) {
            out[i] = wall;
            snapped = true;
        }
    }
    debug_assert!(snapped);
    out
}

fn clamp_to_cell(a: &Cell, p: &mut [f64]) {
    let lo = a.lo_f64();
    let hi = a.hi_f64();
    for i in 0..p.len() {
        p[i] = if a.is_open_axis(i) { p[i].clamp(lo[i], hi[i]) } else { lo[i] };
    }
}

/// Unguarded radial projection onto `∂A` from `x ∈ int A`.
pub fn radial_project(a: &Cell, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if a.membership(x, 0.0)? != Membership::Interior {
        return Err(Error::InvalidInput("center lies on the boundary of the cell".into()));
    }
    RadialProjection { cell: a.clone(), center: x.to_vec(), delta: 0.0 }.apply(y)
}

/// Uniform point of `½A`.
pub fn sample_half(a: &Cell, rng: &mut Rng) -> Vec<f64> {
    let lo = a.lo_f64();
    let s = a.side_f64();
    (0..a.ambient_dim())
        .map(|i| if a.is_open_axis(i) { lo[i] + s * (0.25 + 0.5 * rng.gen::<f64>()) } else { lo[i] })
        .collect()
}

/// Draws in `½A` from a randomly shifted `R_m` low-discrepancy sequence.
///
/// Each draw is uniform on `½A`; successive draws spread over `½A` instead
/// of clumping, so a small admissible region is found in fewer tries.
pub struct HalfCellSequence {
    lo: Vec<f64>,
    side: f64,
    axes: Vec<usize>,
    shift: Vec<f64>,
    alpha: Vec<f64>,
    t: u64,
}

impl HalfCellSequence {
    pub fn new(a: &Cell, rng: &mut Rng) -> HalfCellSequence {
        let axes: Vec<usize> = (0..a.ambient_dim()).filter(|&i| a.is_open_axis(i)).collect();
        let m = axes.len();
        // φ_m: the positive root of x^{m+1} = x + 1
        let mut phi = 2.0f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (m as f64 + 1.0));
        }
        let alpha = (1..=m).map(|j| phi.powi(-(j as i32)).fract()).collect();
        let shift = (0..m).map(|_| rng.gen::<f64>()).collect();
        HalfCellSequence { lo: a.lo_f64(), side: a.side_f64(), axes, shift, alpha, t: 0 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.t += 1;
        let mut x = self.lo.clone();
        for (j, &i) in self.axes.iter().enumerate() {
            let u = (self.shift[j] + self.t as f64 * self.alpha[j]).fract();
            x[i] = self.lo[i] + self.side * (0.25 + 0.5 * u);
        }
        x
    }
}

fn in_interior(a: &Cell, p: &[f64]) -> bool {
    a.membership(p, EPS_GEOM).ok() == Some(Membership::Interior)
}

fn in_closed(a: &Cell, p: &[f64]) -> bool {
    a.membership(p, EPS_GEOM).map(|m| m != Membership::Outside).unwrap_or(false)
}

/// Summary of the averaged projection ratio over centers in `½Q`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AverageProjection {
    pub avg_ratio: f64,
    pub std_error: f64,
    /// Min, 25%, 50%, 75%, 90% and max of the sampled ratios.
    pub quantiles: [f64; 6],
    pub admissible: usize,
    pub rejected: usize,
}

/// Monte Carlo average of `H^d(ψ_x(S)) / H^d(S)` over admissible `x ∈ ½Q`.
pub fn average_projection_check(
    q: &Cell,
    s: &SampledSet,
    n_centers: usize,
    delta: f64,
    rng: &mut Rng,
) -> Result<AverageProjection> {
    if q.dim() == 0 {
        return Err(Error::ZeroDimCell);
    }
    let src = hausdorff_estimate(s, delta)?;
    if src == 0.0 {
        return Err(Error::InvalidInput("set has no mass".into()));
    }
    let mut ratios = Vec::with_capacity(n_centers);
    let mut rejected = 0;
    let budget = 20 * n_centers.max(1);
    while ratios.len() < n_centers && ratios.len() + rejected < budget {
        let x = sample_half(q, rng);
        let clear = s.points.iter().map(|p| euclid(p, &x)).fold(f64::INFINITY, f64::min);
        if clear <= delta {
            rejected += 1;
            continue;
        }
        let psi = RadialProjection::new(q.clone(), x, clear / 2.0)?;
        let img = s.points.iter().map(|p| psi.apply(p)).collect::<Result<Vec<_>>>()?;
        ratios.push(hausdorff_estimate(&s.moved(img), delta)? / src);
    }
    if ratios.is_empty() {
        return Err(Error::Precondition("no admissible centers: the set is too dense".into()));
    }
    let est = crate::rng::Estimate::from_samples(&ratios);
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let qt = |f: f64| ratios[((ratios.len() - 1) as f64 * f).round() as usize];
    Ok(AverageProjection {
        avg_ratio: est.value,
        std_error: est.std_error,
        quantiles: [qt(0.0), qt(0.25), qt(0.5), qt(0.75), qt(0.9), qt(1.0)],
        admissible: ratios.len(),
        rejected,
    })
}

/// An accepted center with the ratios that qualified it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenterChoice {
    pub projection: RadialProjection,
    pub ratio_h: f64,
    pub ratio_zeta: f64,
    pub tries: usize,
}

/// Draw centers in `½A` until clearance, parent-ratio and gauge tests pass.
pub fn select_center(
    a: &Cell,
    f: &SampledSet,
    parents: &[Cell],
    params: &FfParams,
    rng: &mut Rng,
) -> Result<CenterChoice> {
    if a.dim() == 0 {
        return Err(Error::ZeroDimCell);
    }
    let delta = params.delta_for(f);
    let inside: Vec<usize> = (0..f.len()).filter(|&i| in_interior(a, &f.points[i])).collect();
    let in_a = f.filter(|p| in_closed(a, p));
    let need = params.c_dist * a.diam();
    let parent_src: Vec<(Vec<usize>, f64)> = parents
        .iter()
        .map(|b| {
            let idx: Vec<usize> = (0..f.len()).filter(|&i| in_closed(b, &f.points[i])).collect();
            let h = hausdorff_estimate(&f.subset(&idx), delta)?;
            Ok((idx, h))
        })
        .collect::<Result<_>>()?;
    let zeta_src = if params.check_zeta && !inside.is_empty() && a.dim() >= f.d {
        zeta_restricted(&in_a, a, params.zeta_planes, delta, rng)?.value
    } else {
        0.0
    };
    let mut draws = HalfCellSequence::new(a, rng);
    for tries in 1..=params.max_tries {
        let x = draws.next_point();
        let wall = a.dist_to_boundary(&x)?;
        let clear = inside.iter().map(|&i| euclid(&f.points[i], &x)).fold(f64::INFINITY, f64::min);
        if inside.is_empty() {
            let projection = RadialProjection::new(a.clone(), x, wall / 2.0)?;
            return Ok(CenterChoice { projection, ratio_h: 0.0, ratio_zeta: 0.0, tries });
        }
        if clear < need {
            continue;
        }
        let psi = RadialProjection::new(a.clone(), x, (clear / 2.0).min(wall / 2.0))?;
        let mut moved: HashMap<usize, Vec<f64>> = HashMap::with_capacity(inside.len());
        for &i in &inside {
            moved.insert(i, psi.apply(&f.points[i])?);
        }
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for (idx, src) in &parent_src {
            if *src == 0.0 {
                continue;
            }
            let pts = idx.iter().map(|i| moved.get(i).cloned().unwrap_or_else(|| f.points[*i].clone())).collect();
            let r = hausdorff_estimate(&f.subset(idx).moved(pts), delta)? / src;
            worst = worst.max(r);
            if r > params.lambda {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let mut ratio_zeta = 0.0;
        if zeta_src > 0.0 {
            let img = in_a.moved(
                (0..f.len())
                    .filter(|&i| in_closed(a, &f.points[i]))
                    .map(|i| moved.get(&i).cloned().unwrap_or_else(|| f.points[i].clone()))
                    .collect(),
            );
            let mut z = 0.0;
            for face in a.facets().iter().filter(|c| c.dim() >= f.d) {
                z += zeta_restricted(&img, face, params.zeta_planes, delta, rng)?.value;
            }
            ratio_zeta = z / zeta_src;
            if ratio_zeta > params.lambda {
                continue;
            }
        }
        return Ok(CenterChoice { projection: psi, ratio_h: worst, ratio_zeta, tries });
    }
    Err(Error::CenterExhausted { cell: a.to_string(), tries: params.max_tries })
}

/// Apply the stage-`m` projections to every sample claimed by an `m`-cell.
pub fn ff_sweep(
    k: &Complex,
    m: usize,
    f: &SampledSet,
    centers: &HashMap<Cell, RadialProjection>,
) -> Result<SampledSet> {
    let mut pts = f.points.clone();
    for p in pts.iter_mut() {
        if let Some(ci) = k.locate(p, EPS_GEOM) {
            let c = &k.cells()[ci];
            if c.dim() == m {
                let psi = centers.get(c).ok_or_else(|| Error::MissingCenter(c.to_string()))?;
                *p = psi.apply(p)?;
            }
        }
    }
    Ok(f.moved(pts))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub cell: Cell,
    pub center: Vec<f64>,
    pub delta: f64,
    #[serde(rename = "ratio_H")]
    pub ratio_h: f64,
    pub ratio_zeta: f64,
    pub lip_est: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub m: usize,
    pub cells: Vec<CellDiagnostics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FfDiagnostics {
    pub stages: Vec<StageDiagnostics>,
}

/// Centers used at each stage, highest dimension first.
#[derive(Debug, Clone)]
pub struct FfPlan {
    pub d: usize,
    pub sweeps: Vec<(usize, Vec<RadialProjection>)>,
}

#[derive(Debug, Clone)]
pub struct FfResult {
    pub mapped: SampledSet,
    pub plan: FfPlan,
    pub diagnostics: FfDiagnostics,
    /// Samples whose image stays in the closed box of their starting cell.
    pub preserved: usize,
    /// Largest distance from an image to the `d`-skeleton.
    pub skeleton_distance: f64,
    /// Product over stages of the per-stage largest `ratio_H`.
    pub ratio_ledger: f64,
}

impl FfResult {
    pub fn diagnostics_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.diagnostics)?)
    }
}

/// Ratio of `(d+1)`-dimensional occupancy content at `δ` and `2δ`.
///
/// About `1/2` for a `d`-dimensional set and about `1` for a set of
/// dimension `d+1`. `None` when the set is too small to tell.
pub fn dimension_proxy(e: &SampledSet, d: usize) -> Option<f64> {
    if d >= e.n {
        return None;
    }
    let delta = 2.0 * e.resolution;
    let coarse = occupancy_mass(e, 2.0 * delta) / (2.0 * delta).powi(e.d as i32);
    if coarse < 16.0 {
        return None;
    }
    let fine = occupancy_mass(e, delta) / delta.powi(e.d as i32);
    let p = (d + 1) as i32;
    Some(fine * delta.powi(p) / (coarse * (2.0 * delta).powi(p)))
}

/// Distance from `x` to the union of cells of dimension at most `d`.
pub fn skeleton_distance(k: &Complex, d: usize, x: &[f64]) -> f64 {
    k.cells_containing_point(x, EPS_GEOM)
        .into_iter()
        .map(|i| &k.cells()[i])
        .flat_map(|c| c.faces().into_iter().filter(|f| f.dim() <= d))
        .map(|f| f.dist(x))
        .fold(f64::INFINITY, f64::min)
}

/// Project `E ⊂ |K|` into the `d`-skeleton.
pub fn ff_project(k: &Complex, d: usize, e: &SampledSet, params: &FfParams, rng: &mut Rng) -> Result<FfResult> {
    let n = k.ambient_dim();
    if e.n != n {
        return Err(Error::DimensionMismatch { expected: n, got: e.n });
    }
    if d >= n {
        return Err(Error::InvalidInput(format!("target dimension {d} must be below {n}")));
    }
    if let Some(p) = e.points.iter().find(|p| !k.support_contains(p, EPS_GEOM)) {
        return Err(Error::Precondition(format!("sample {p:?} lies outside the complex")));
    }
    if let Some(r) = dimension_proxy(e, d) {
        if r > 0.75 {
            return Err(Error::Precondition(format!(
                "set looks {}-dimensional at its resolution (content ratio {r:.3})",
                d + 1
            )));
        }
    }
    let start: Vec<Option<usize>> = e.points.iter().map(|p| k.locate(p, 0.0)).collect();
    let root: u64 = rng.gen();
    let mut f = e.clone();
    f.tangents = None;
    let mut sweeps = Vec::new();
    let mut stages = Vec::new();
    let mut ledger = 1.0;
    for m in (d + 1..=n).rev() {
        let mut occupied: Vec<usize> =
            f.points.iter().filter_map(|p| k.locate(p, EPS_GEOM)).filter(|&ci| k.cells()[ci].dim() == m).collect();
        occupied.sort_unstable();
        occupied.dedup();
        let mut centers = HashMap::new();
        let mut diags = Vec::new();
        let mut stage_max: f64 = 0.0;
        for ci in occupied {
            let a = &k.cells()[ci];
            let parents: Vec<Cell> = k.supersets(a).into_iter().map(|i| k.cells()[i].clone()).collect();
            let mut crng = stream(root, &format!("ff-center/{m}/{a}"), 0);
            let choice = select_center(a, &f, &parents, params, &mut crng)?;
            let idx: Vec<usize> = (0..f.len()).filter(|&i| in_interior(a, &f.points[i])).collect();
            let src: Vec<Vec<f64>> = idx.iter().map(|&i| f.points[i].clone()).collect();
            let img = src.iter().map(|p| choice.projection.apply(p)).collect::<Result<Vec<_>>>()?;
            let lip_est = if src.len() >= 2 { lipschitz_constant_estimate(&src, &img, &mut crng)? } else { 0.0 };
            stage_max = stage_max.max(choice.ratio_h);
            diags.push(CellDiagnostics {
                cell: a.clone(),
                center: choice.projection.center.clone(),
                delta: choice.projection.delta,
                ratio_h: choice.ratio_h,
                ratio_zeta: choice.ratio_zeta,
                lip_est,
            });
            centers.insert(a.clone(), choice.projection);
        }
        f = ff_sweep(k, m, &f, &centers)?;
        if stage_max > 0.0 {
            ledger *= stage_max;
        }
        sweeps.push((m, centers.into_values().collect()));
        stages.push(StageDiagnostics { m, cells: diags });
        debug_assert!(f.points.iter().all(|p| k.locate(p, EPS_GEOM).map(|c| k.cells()[c].dim() < m).unwrap_or(true)));
    }
    let preserved = start
        .iter()
        .zip(&f.points)
        .filter(|(s, p)| match s {
            Some(ci) => k.cells()[*ci].membership(p, 0.0).map(|m| m != Membership::Outside).unwrap_or(false),
            None => false,
        })
        .count();
    let skeleton_distance = f.points.iter().map(|p| skeleton_distance(k, d, p)).fold(0.0, f64::max);
    Ok(FfResult {
        mapped: f,
        plan: FfPlan { d, sweeps },
        diagnostics: FfDiagnostics { stages },
        preserved,
        skeleton_distance,
        ratio_ledger: ledger,
    })
}

/// Per-cell occupancy ratios of image to source over the cells of `K`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRatioReport {
    pub max_ratio: f64,
    pub global_ratio: f64,
    /// Largest `H^d(image ∩ A) / ζ(E ∩ V_A along A)` over `d`-cells.
    pub max_skeleton_ratio: f64,
}

/// Check the per-cell and skeleton measure bounds of an FF result.
pub fn cell_ratio_report(
    k: &Complex,
    d: usize,
    e: &SampledSet,
    mapped: &SampledSet,
    delta: f64,
) -> Result<CellRatioReport> {
    let global_src = hausdorff_estimate(e, delta)?;
    let global_ratio = if global_src > 0.0 { hausdorff_estimate(mapped, delta)? / global_src } else { 0.0 };
    let mut max_ratio: f64 = 0.0;
    let mut max_skel: f64 = 0.0;
    for a in k.cells() {
        let idx: Vec<usize> = (0..e.len()).filter(|&i| in_closed(a, &e.points[i])).collect();
        if idx.len() >= 2 {
            let src = hausdorff_estimate(&e.subset(&idx), delta)?;
            let img = e.subset(&idx).moved(idx.iter().map(|&i| mapped.points[i].clone()).collect());
            if src > 0.0 {
                max_ratio = max_ratio.max(hausdorff_estimate(&img, delta)? / src);
            }
        }
        if a.dim() == d && d > 0 {
            let on_a = mapped.filter(|p| in_closed(a, p));
            if on_a.is_empty() {
                continue;
            }
            let va = k.neighborhood_va(a)?;
            let near = e.filter(|p| va.contains(p));
            let v: LinearPlane = embed_in_cell(a, &LinearPlane::coordinate(d, d));
            let z = project_measure(&near, &v, delta)?;
            if z > 0.0 {
                max_skel = max_skel.max(occupancy_mass(&on_a, delta) / z);
            }
        }
    }
    Ok(CellRatioReport { max_ratio, global_ratio, max_skeleton_ratio: max_skel })
}

/// Push samples out of `d`-cells holding less than `threshold · H^d(½A)`.
pub fn prune_low_mass_dcells(
    k: &Complex,
    d: usize,
    f: &SampledSet,
    threshold: f64,
    rng: &mut Rng,
) -> Result<SampledSet> {
    if d == 0 {
        return Ok(f.clone());
    }
    let delta = f.default_delta();
    let mut by_cell: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, p) in f.points.iter().enumerate() {
        if let Some(ci) = k.locate(p, EPS_GEOM) {
            if k.cells()[ci].dim() == d {
                by_cell.entry(ci).or_default().push(i);
            }
        }
    }
    let mut pts = f.points.clone();
    let mut cells: Vec<_> = by_cell.into_iter().collect();
    cells.sort_by_key(|(c, _)| *c);
    for (ci, idx) in cells {
        let a = &k.cells()[ci];
        let mass = occupancy_mass(&f.subset(&idx), delta);
        if mass >= threshold * (a.side_f64() / 2.0).powi(d as i32) {
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..64 {
            let x = sample_half(a, rng);
            let clear = idx.iter().map(|&i| euclid(&f.points[i], &x)).fold(f64::INFINITY, f64::min);
            if best.as_ref().map(|b| clear > b.0).unwrap_or(true) {
                best = Some((clear, x));
            }
        }
        let (clear, x) = best.expect("at least one draw");
        if clear <= EPS_GEOM {
            continue;
        }
        let psi = RadialProjection::new(a.clone(), x, clear / 2.0)?;
        for &i in &idx {
            pts[i] = psi.apply(&f.points[i])?;
        }
    }
    Ok(f.moved(pts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::DyadicScalar;
    use crate::measure::generators::*;
    use proptest::prelude::*;

    fn square(lo: f64, side_exp: u32) -> Cell {
        let l = DyadicScalar::from_f64_exact(lo).unwrap();
        Cell::new(vec![l, l], 0b11, side_exp).unwrap()
    }

    fn unit_grid(k: u32) -> Complex {
        Complex::grid(&[DyadicScalar::ZERO; 2], &[DyadicScalar::ONE; 2], k, false).unwrap()
    }

    #[test]
    fn radial_examples() {
        // [-1,1]^2 as a cell of side 2 is not representable; use [0,1]^2
        // with center (1/2,1/2) and shift the examples
        let a = square(0.0, 0);
        let c = [0.5, 0.5];
        assert_eq!(radial_project(&a, &c, &[0.75, 0.5]).unwrap(), vec![1.0, 0.5]);
        assert_eq!(radial_project(&a, &c, &[0.625, 0.625]).unwrap(), vec![1.0, 1.0]);
        assert!(radial_project(&a, &[0.0, 0.5], &[0.7, 0.5]).is_err());
        assert!(radial_project(&a, &c, &[1.5, 0.5]).is_err());
        // t = 1/‖y − x‖_∞ oracle
        for y in [[0.6, 0.8], [0.1, 0.45], [0.52, 0.13]] {
            let v = [y[0] - c[0], y[1] - c[1]];
            let t = 0.5 / v[0].abs().max(v[1].abs());
            let want = [c[0] + t * v[0], c[1] + t * v[1]];
            let got = radial_project(&a, &c, &y).unwrap();
            assert!(euclid(&got, &want) < 1e-12);
            assert!(a.dist_to_boundary(&got).unwrap() == 0.0);
        }
    }

    #[test]
    fn radial_lipschitz_bound() {
        let a = square(0.0, 0);
        let psi = RadialProjection::new(a.clone(), vec![0.4, 0.55], 0.05).unwrap();
        let mut pts = Vec::new();
        for i in 0..=40 {
            for j in 0..=40 {
                let p = vec![i as f64 / 40.0, j as f64 / 40.0];
                if euclid(&p, &psi.center) >= psi.delta {
                    pts.push(p);
                }
            }
        }
        let img: Vec<Vec<f64>> = pts.iter().map(|p| psi.apply(p).unwrap()).collect();
        let l = lipschitz_constant_estimate(&pts, &img, &mut stream(0, "l", 0)).unwrap();
        assert!(l <= 10.0 * a.diam() / psi.delta, "{l}");
        // continuous across the guard sphere
        let inner = psi.apply(&[0.4 + 0.05 * (1.0 - 1e-9), 0.55]).unwrap();
        let outer = psi.apply(&[0.4 + 0.05, 0.55]).unwrap();
        assert!(euclid(&inner, &outer) < 1e-6);
    }

    #[test]
    fn average_projection_examples() {
        let q = square(0.0, 0);
        let mut rng = stream(3, "avg", 0);
        let on_bd = segment(&[0.0, 0.0], &[1.0, 0.0], 0.001).unwrap();
        let r = average_projection_check(&q, &on_bd, 30, 0.01, &mut rng).unwrap();
        assert!((r.avg_ratio - 1.0).abs() < 1e-12);
        let corner = SampledSet::uniform(0, vec![vec![0.01, 0.02]], 0.01).unwrap();
        let r = average_projection_check(&q, &corner, 50, 0.01, &mut rng).unwrap();
        assert!(r.avg_ratio.is_finite() && r.avg_ratio <= 1.0 + 1e-12);
        // scaling Q and S together keeps the ratio
        let s1 = segment(&[0.1, 0.2], &[0.45, 0.3], 0.0005).unwrap();
        let q2 = Cell::new(vec![DyadicScalar::ZERO; 2], 0b11, 1).unwrap();
        let s2 = s1.moved(s1.points.iter().map(|p| vec![p[0] / 2.0, p[1] / 2.0]).collect());
        let s2 =
            SampledSet { resolution: s1.resolution / 2.0, weights: s1.weights.iter().map(|w| w / 2.0).collect(), ..s2 };
        let a1 = average_projection_check(&q, &s1, 400, 0.005, &mut stream(4, "a", 0)).unwrap();
        let a2 = average_projection_check(&q2, &s2, 400, 0.0025, &mut stream(4, "a", 0)).unwrap();
        assert!((a1.avg_ratio - a2.avg_ratio).abs() / a1.avg_ratio < 0.1, "{a1:?} {a2:?}");
    }

    #[test]
    fn select_center_examples() {
        let a = square(0.0, 0);
        let params = FfParams::default();
        let empty = SampledSet::empty(1, 2);
        let c = select_center(&a, &empty, &[a.clone()], &params, &mut stream(0, "s", 0)).unwrap();
        assert_eq!(c.tries, 1);
        assert!((c.projection.delta - a.dist_to_boundary(&c.projection.center).unwrap() / 2.0).abs() < 1e-15);
        let seg = segment(&[0.0, 0.5], &[1.0, 0.5], 0.002).unwrap();
        for seed in 0..100 {
            let c = select_center(&a, &seg, &[a.clone()], &params, &mut stream(seed, "s", 0)).unwrap();
            assert!(c.ratio_h <= params.lambda);
            let clear = seg.points.iter().map(|p| euclid(p, &c.projection.center)).fold(f64::INFINITY, f64::min);
            assert!(clear >= params.c_dist * a.diam());
        }
        let mut fill = Vec::new();
        for i in 0..100 {
            for j in 0..100 {
                fill.push(vec![(i as f64 + 0.5) / 100.0, (j as f64 + 0.5) / 100.0]);
            }
        }
        let fill = SampledSet::uniform(1, fill, 0.01).unwrap();
        assert!(matches!(
            select_center(&a, &fill, &[a.clone()], &params, &mut stream(0, "s", 0)),
            Err(Error::CenterExhausted { .. })
        ));
        let v = Cell::new(vec![DyadicScalar::ZERO; 2], 0, 0).unwrap();
        assert!(select_center(&v, &seg, &[], &params, &mut stream(0, "s", 0)).is_err());
    }

    #[test]
    fn half_cell_sequence_covers() {
        let a = square(0.0, 0);
        let mut seq = HalfCellSequence::new(&a, &mut stream(4, "seq", 0));
        let mut boxes = [0usize; 16];
        for _ in 0..64 {
            let x = seq.next_point();
            assert!(x.iter().all(|c| (0.25..0.75).contains(c)));
            let bx = ((x[0] - 0.25) * 8.0) as usize;
            let by = ((x[1] - 0.25) * 8.0) as usize;
            boxes[4 * bx + by] += 1;
        }
        assert!(boxes.iter().all(|&b| b >= 1), "{boxes:?}");
        // an edge keeps its fixed coordinate
        let e = Cell::new(vec![DyadicScalar::ZERO, DyadicScalar::ONE], 0b01, 0).unwrap();
        let mut seq = HalfCellSequence::new(&e, &mut stream(4, "seq", 1));
        for _ in 0..10 {
            let x = seq.next_point();
            assert_eq!(x[1], 1.0);
            assert!((0.25..0.75).contains(&x[0]));
        }
    }

    #[test]
    fn sweep_examples() {
        let k = unit_grid(0);
        let a = square(0.0, 0);
        let psi = RadialProjection::new(a.clone(), vec![0.3, 0.6], 0.01).unwrap();
        let centers: HashMap<Cell, RadialProjection> = [(a.clone(), psi)].into_iter().collect();
        let edge = segment(&[0.0, 0.0], &[1.0, 0.0], 0.01).unwrap();
        assert_eq!(ff_sweep(&k, 2, &edge, &centers).unwrap().points, edge.points);
        let diag = segment(&[0.0, 0.0], &[1.0, 1.0], 0.002).unwrap();
        let out = ff_sweep(&k, 2, &diag, &centers).unwrap();
        assert!(out.points.iter().all(|p| a.dist_to_boundary(p).unwrap() == 0.0));
        let r = hausdorff_estimate(&out, 0.01).unwrap() / hausdorff_estimate(&diag, 0.01).unwrap();
        assert!(r <= 20.0);
        assert!(matches!(ff_sweep(&k, 2, &diag, &HashMap::new()), Err(Error::MissingCenter(_))));
    }

    #[test]
    fn sweep_gluing() {
        // samples on the shared edge x = 1/2 of two squares stay put; samples
        // a hair to either side land within ε_geom of each other
        let k = unit_grid(1);
        let mut centers = HashMap::new();
        for c in k.skeleton(2) {
            let x = c.center_f64();
            let x = vec![x[0] + 0.01, x[1] - 0.02];
            centers.insert(c.clone(), RadialProjection::new(c, x, 0.01).unwrap());
        }
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![0.5, 0.05 + 0.02 * i as f64]).collect();
        let left: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] - 1e-11, p[1]]).collect();
        let right: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + 1e-11, p[1]]).collect();
        for side in [left, right] {
            let s = SampledSet::uniform(1, side, 0.02).unwrap();
            let out = ff_sweep(&k, 2, &s, &centers).unwrap();
            for (q, p) in out.points.iter().zip(&pts) {
                assert!(euclid(q, p) < EPS_GEOM);
            }
        }
    }

    #[test]
    fn project_examples() {
        let k = unit_grid(1);
        let mut rng = stream(5, "ff", 0);
        let params = FfParams::default();
        let edges = segment(&[0.0, 0.5], &[1.0, 0.5], 0.002).unwrap();
        let r = ff_project(&k, 1, &edges, &params, &mut rng).unwrap();
        assert_eq!(r.mapped.points, edges.points);
        let diag = segment(&[0.0, 0.0], &[1.0, 1.0], 0.001).unwrap();
        let r = ff_project(&k, 1, &diag, &params, &mut rng).unwrap();
        assert_eq!(r.preserved, diag.len());
        assert!(r.skeleton_distance <= EPS_GEOM);
        let rep = cell_ratio_report(&k, 1, &diag, &r.mapped, 0.01).unwrap();
        assert!(rep.global_ratio <= params.lambda, "{rep:?}");
        let json: serde_json::Value = serde_json::from_str(&r.diagnostics_json().unwrap()).unwrap();
        assert!(json["stages"][0]["cells"][0]["ratio_H"].is_number());
        // deterministic under the seed
        let again = ff_project(&k, 1, &diag, &params, &mut stream(5, "ff", 0)).unwrap();
        let first = ff_project(&k, 1, &diag, &params, &mut stream(5, "ff", 0)).unwrap();
        assert_eq!(again.mapped.points, first.mapped.points);
    }

    #[test]
    fn project_preserves_boundary_subcomplex() {
        // Γ = the bottom edge of the unit square, S ⊂ level-0 grid faces
        let k = unit_grid(2);
        let gamma = Cell::new(vec![DyadicScalar::ZERO; 2], 0b01, 0).unwrap();
        let base = segment(&[0.0, 0.0], &[1.0, 0.0], 0.004).unwrap();
        let arc = segment(&[0.1, 0.0], &[0.9, 0.7], 0.002).unwrap();
        let e = base.union(&arc).unwrap();
        let r = ff_project(&k, 1, &e, &FfParams::default(), &mut stream(6, "ff", 0)).unwrap();
        for i in 0..base.len() {
            assert_eq!(gamma.membership(&r.mapped.points[i], 0.0).unwrap() != Membership::Outside, true);
        }
    }

    #[test]
    fn project_rejects_dense_input() {
        let k = unit_grid(1);
        let mut fill = Vec::new();
        for i in 0..200 {
            for j in 0..200 {
                fill.push(vec![(i as f64 + 0.5) / 200.0, (j as f64 + 0.5) / 200.0]);
            }
        }
        let fill = SampledSet::uniform(1, fill, 0.005).unwrap();
        assert!(matches!(
            ff_project(&k, 1, &fill, &FfParams::default(), &mut stream(0, "ff", 0)),
            Err(Error::Precondition(_))
        ));
        let outside = segment(&[0.0, 0.0], &[2.0, 0.0], 0.01).unwrap();
        assert!(ff_project(&k, 1, &outside, &FfParams::default(), &mut stream(0, "ff", 0)).is_err());
    }

    #[test]
    fn prune_examples() {
        let k = unit_grid(1);
        let mut rng = stream(7, "prune", 0);
        let full = segment(&[0.0, 0.0], &[0.5, 0.0], 0.001).unwrap();
        assert_eq!(prune_low_mass_dcells(&k, 1, &full, 0.5, &mut rng).unwrap().points, full.points);
        let stray = full.union(&SampledSet::uniform(1, vec![vec![0.75, 0.5]], 0.001).unwrap()).unwrap();
        let once = prune_low_mass_dcells(&k, 1, &stray, 0.5, &mut rng).unwrap();
        let moved = once.points.last().unwrap();
        assert!(moved[0] == 0.5 || moved[0] == 1.0, "{moved:?}");
        let twice = prune_low_mass_dcells(&k, 1, &once, 0.5, &mut rng).unwrap();
        assert_eq!(twice.points, once.points);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn radial_stays_in_cell(cx in 0.26f64..0.74, cy in 0.26f64..0.74, px in 0.0f64..1.0, py in 0.0f64..1.0, g in 0.0f64..0.2) {
            let a = square(0.0, 0);
            let psi = RadialProjection::new(a.clone(), vec![cx, cy], g).unwrap();
            let q = psi.apply(&[px, py]).unwrap();
            prop_assert!(a.membership(&q, 0.0).unwrap() != Membership::Outside);
            if euclid(&[px, py], &[cx, cy]) >= g && (px, py) != (cx, cy) {
                prop_assert_eq!(a.dist_to_boundary(&q).unwrap(), 0.0);
            }
        }

        #[test]
        fn ff_descent_and_preservation(seed in 0u64..500) {
            let k = unit_grid(2);
            let mut rng = stream(seed, "arc", 0);
            let a = vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let b = vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let s = segment(&a, &b, 0.002).unwrap();
            let r = ff_project(&k, 1, &s, &FfParams { check_zeta: false, ..FfParams::default() }, &mut rng).unwrap();
            prop_assert_eq!(r.preserved, s.len());
            prop_assert!(r.skeleton_distance <= EPS_GEOM);
        }
    }
}
