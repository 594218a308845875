//! McShane extension, Lipschitz approximation and their combination, all
//! over finite sample sets.

use crate::dyadic::euclid;
use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;

/// Samples of `f: A → R^n`.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    pub domain_points: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub lipschitz: Option<f64>,
}

impl SampledFunction {
    /// Validates shapes and, when `lipschitz` is given, every sampled pair.
    pub fn new(domain_points: Vec<Vec<f64>>, values: Vec<Vec<f64>>, lipschitz: Option<f64>) -> Result<SampledFunction> {
        if domain_points.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: domain_points.len(), got: values.len() });
        }
        if let (Some(p), Some(v)) = (domain_points.first(), values.first()) {
            if let Some(q) = domain_points.iter().find(|q| q.len() != p.len()) {
                return Err(Error::DimensionMismatch { expected: p.len(), got: q.len() });
            }
            if let Some(w) = values.iter().find(|w| w.len() != v.len()) {
                return Err(Error::DimensionMismatch { expected: v.len(), got: w.len() });
            }
        }
        if let Some(l) = lipschitz {
            if !(l >= 0.0) {
                return Err(Error::InvalidInput("Lipschitz constant must be non-negative".into()));
            }
            for i in 0..domain_points.len() {
                for j in i + 1..domain_points.len() {
                    let dx = euclid(&domain_points[i], &domain_points[j]);
                    let df = euclid(&values[i], &values[j]);
                    if df > l * dx * (1.0 + 1e-12) + 1e-12 {
                        return Err(Error::Precondition(format!("pair ({i},{j}) has ratio {} > {l}", df / dx)));
                    }
                }
            }
        }
        Ok(SampledFunction { domain_points, values, lipschitz })
    }

    /// Samples `f` at `points`.
    pub fn from_fn(points: Vec<Vec<f64>>, f: impl Fn(&[f64]) -> Vec<f64>) -> SampledFunction {
        let values = points.iter().map(|p| f(p)).collect();
        SampledFunction { domain_points: points, values, lipschitz: None }
    }

    pub fn len(&self) -> usize {
        self.domain_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain_points.is_empty()
    }

    fn value_dim(&self) -> usize {
        self.values.first().map(|v| v.len()).unwrap_or(0)
    }
}

/// Coordinatewise `g_j(x) = min_y f_j(y) + L|y − x|`.
///
/// Returns `f(x)` verbatim when `x` is a sample, so the extension agrees
/// with `f` bit for bit on `A`.
pub fn mcshane_extend(f: &SampledFunction, l: f64, x: &[f64]) -> Result<Vec<f64>> {
    if f.is_empty() {
        return Err(Error::InvalidInput("empty domain".into()));
    }
    if x.len() != f.domain_points[0].len() {
        return Err(Error::DimensionMismatch { expected: f.domain_points[0].len(), got: x.len() });
    }
    if let Some(i) = f.domain_points.iter().position(|p| p.as_slice() == x) {
        return Ok(f.values[i].clone());
    }
    let mut g = vec![f64::INFINITY; f.value_dim()];
    for (p, v) in f.domain_points.iter().zip(&f.values) {
        let r = l * euclid(p, x);
        for (gj, vj) in g.iter_mut().zip(v) {
            *gj = gj.min(vj + r);
        }
    }
    Ok(g)
}

/// `g(x) = min_y f(y) + 2Mδ⁻¹|x − y|` over a fixed grid.
#[derive(Debug, Clone)]
pub struct LipschitzApprox {
    grid: SampledFunction,
    slope: f64,
}

impl LipschitzApprox {
    /// `f` is sampled once on `grid`; `m_bound ≥ sup|f|`.
    pub fn new(f: impl Fn(&[f64]) -> Vec<f64>, m_bound: f64, delta: f64, grid: &[Vec<f64>]) -> Result<LipschitzApprox> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        if !(delta > 0.0 && m_bound >= 0.0) {
            return Err(Error::InvalidInput("need delta > 0 and M >= 0".into()));
        }
        let sf = SampledFunction::from_fn(grid.to_vec(), f);
        if let Some(v) = sf.values.iter().flatten().find(|v| v.abs() > m_bound * (1.0 + 1e-12)) {
            return Err(Error::Precondition(format!("|f| = {} exceeds M = {m_bound}", v.abs())));
        }
        Ok(LipschitzApprox { grid: sf, slope: 2.0 * m_bound / delta })
    }

    /// Lipschitz constant `2M/δ` of each coordinate.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![f64::INFINITY; self.grid.value_dim()];
        for (p, v) in self.grid.domain_points.iter().zip(&self.grid.values) {
            let r = self.slope * euclid(p, x);
            for (gj, vj) in g.iter_mut().zip(v) {
                *gj = gj.min(vj + r);
            }
        }
        g
    }
}

/// One-shot form of [`LipschitzApprox`].
pub fn lipschitz_approximate(
    f: impl Fn(&[f64]) -> Vec<f64>,
    m_bound: f64,
    delta: f64,
    grid: &[Vec<f64>],
    x: &[f64],
) -> Result<Vec<f64>> {
    Ok(LipschitzApprox::new(f, m_bound, delta, grid)?.eval(x))
}

/// `g = g₁ + clamp(ext(f − g₁ on A), 0, ε/2)` where `g₁` approximates `f`
/// to `ε/2` and `ext` is the McShane extension of the residual.
#[derive(Debug, Clone)]
pub struct ApproxExtension {
    approx: LipschitzApprox,
    residual: SampledFunction,
    residual_lip: f64,
    on_a: SampledFunction,
    eps: f64,
}

impl ApproxExtension {
    /// `delta` must satisfy `ω_f(δ) ≤ ε/2` on `grid`.
    pub fn new(
        f: impl Fn(&[f64]) -> Vec<f64>,
        a_points: &[Vec<f64>],
        grid: &[Vec<f64>],
        m_bound: f64,
        delta: f64,
        eps: f64,
    ) -> Result<ApproxExtension> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        if a_points.is_empty() {
            return Err(Error::InvalidInput("empty domain".into()));
        }
        let approx = LipschitzApprox::new(&f, m_bound, delta, grid)?;
        let on_a = SampledFunction::from_fn(a_points.to_vec(), &f);
        let res_vals: Vec<Vec<f64>> = on_a
            .domain_points
            .iter()
            .zip(&on_a.values)
            .map(|(p, v)| v.iter().zip(approx.eval(p)).map(|(fv, gv)| (fv - gv).clamp(0.0, eps / 2.0)).collect())
            .collect();
        let residual = SampledFunction { domain_points: on_a.domain_points.clone(), values: res_vals, lipschitz: None };
        let residual_lip = coordinate_lipschitz(&residual);
        Ok(ApproxExtension { approx, residual, residual_lip, on_a, eps })
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(i) = self.on_a.domain_points.iter().position(|p| p.as_slice() == x) {
            return Ok(self.on_a.values[i].clone());
        }
        let g1 = self.approx.eval(x);
        let r = mcshane_extend(&self.residual, self.residual_lip, x)?;
        Ok(g1.iter().zip(r).map(|(a, b)| a + b.clamp(0.0, self.eps / 2.0)).collect())
    }
}

/// One-shot form of [`ApproxExtension`].
pub fn approx_extend(
    f: impl Fn(&[f64]) -> Vec<f64>,
    a_points: &[Vec<f64>],
    grid: &[Vec<f64>],
    m_bound: f64,
    delta: f64,
    eps: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    ApproxExtension::new(f, a_points, grid, m_bound, delta, eps)?.eval(x)
}

/// Largest coordinatewise pair ratio, the constant the McShane formula needs.
fn coordinate_lipschitz(f: &SampledFunction) -> f64 {
    let mut l: f64 = 0.0;
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            let dx = euclid(&f.domain_points[i], &f.domain_points[j]);
            if dx > 0.0 {
                for (a, b) in f.values[i].iter().zip(&f.values[j]) {
                    l = l.max((a - b).abs() / dx);
                }
            }
        }
    }
    l
}

/// Max of `|Δf| / |Δx|` over all pairs (up to 2000 points) or over `10^6`
/// random pairs. Coincident points are skipped.
pub fn lipschitz_constant_estimate(points: &[Vec<f64>], images: &[Vec<f64>], rng: &mut Rng) -> Result<f64> {
    if points.len() != images.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: images.len() });
    }
    if points.len() < 2 {
        return Err(Error::InvalidInput("need at least two points".into()));
    }
    let ratio = |i: usize, j: usize| {
        let dx = euclid(&points[i], &points[j]);
        if dx > 0.0 {
            euclid(&images[i], &images[j]) / dx
        } else {
            0.0
        }
    };
    let n = points.len();
    let mut best: f64 = 0.0;
    if n <= 2000 {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(ratio(i, j));
            }
        }
    } else {
        for _ in 0..1_000_000 {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j {
                best = best.max(ratio(i, j));
            }
        }
    }
    Ok(best)
}
