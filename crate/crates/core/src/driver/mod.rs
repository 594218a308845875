//! Direct-method driver: refine, project, clean up and keep a step only
//! when it lowers the energy.

pub mod graph;
pub mod nested;
pub mod schedule;
pub mod sliding;

use crate::complex::{BoundarySpec, Complex};
use crate::dyadic::{euclid, Cell, DyadicScalar, EPS_GEOM};
use crate::error::{Error, Result};
use crate::ff::{ff_project, prune_low_mass_dcells, FfParams};
use crate::measure::{
    ahlfors_audit, energy_eval, quasimin_audit, Integrand, QuasiminAudit, QuasiminParams, SampledSet, PCA_K,
};
use crate::rng::stream;
use graph::{clean_graph, extract_graph, steiner_polish, Graph};
use nested::{nested_complexes, Direction};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Anchors(Vec<Vec<f64>>),
    /// Faces of the level-`grid_level` grid; their vertices become anchors.
    Faces {
        grid_level: u32,
        cells: Vec<Cell>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSet {
    Polyline {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        closed: bool,
    },
    Segments(Vec<[Vec<f64>; 2]>),
    /// CSV file, relative to the config file.
    File(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandConfig {
    #[default]
    Hausdorff,
    Constant {
        value: f64,
    },
    AxisCosine {
        axis: usize,
        base: f64,
        gain: f64,
    },
}

impl IntegrandConfig {
    pub fn build(&self) -> Result<Integrand> {
        match *self {
            IntegrandConfig::Hausdorff => Ok(Integrand::hausdorff()),
            IntegrandConfig::Constant { value } => Integrand::constant(value),
            IntegrandConfig::AxisCosine { axis, base, gain } => Integrand::axis_cosine(axis, base, gain),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Grid level `start_level + k` over the domain box.
    Uniform,
    /// Expanding nested complexes on `[−1,1]^n` for `q_schedule(mu)`.
    Mu,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: ScheduleMode,
    #[serde(default)]
    pub mu: Option<f64>,
    pub iterations: usize,
    #[serde(default = "default_start_level")]
    pub start_level: u32,
}

fn default_start_level() -> u32 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub eps_geom: f64,
    pub delta: Option<f64>,
    pub lambda: f64,
    pub threshold_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { eps_geom: EPS_GEOM, delta: None, lambda: 20.0, threshold_fraction: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxConfig {
    pub enabled: bool,
    pub step: f64,
    pub iters: usize,
    pub rounds: usize,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig { enabled: true, step: 0.05, iters: 500, rounds: 12 }
    }
}

fn default_quasimin() -> QuasiminParams {
    QuasiminParams { kappa: 1.0, h: 0.0, scale: None }
}

fn default_spacing() -> f64 {
    0.005
}

fn default_stalls() -> usize {
    3
}

/// Versioned run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema: u32,
    pub n: usize,
    pub d: usize,
    pub domain: DomainBox,
    pub boundary: BoundaryConfig,
    pub initial_set: InitialSet,
    #[serde(default)]
    pub integrand: IntegrandConfig,
    pub schedule: ScheduleConfig,
    #[serde(default = "default_quasimin")]
    pub quasimin: QuasiminParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub relax: RelaxConfig,
    #[serde(default = "default_spacing")]
    pub sample_spacing: f64,
    #[serde(default = "default_stalls")]
    pub max_stalls: usize,
    /// Directory for relative paths; set by [`ProblemConfig::load`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ProblemConfig {
    pub fn from_json(s: &str) -> Result<ProblemConfig> {
        let c: ProblemConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ProblemConfig> {
        let mut c = ProblemConfig::from_json(&std::fs::read_to_string(path)?)?;
        c.base_dir = path.parent().map(|p| p.to_path_buf());
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.schema != 1 {
            return bad(format!("unsupported schema {}", self.schema));
        }
        if self.d != 1 || self.n < 2 {
            return bad("the driver handles d = 1 in n >= 2".into());
        }
        if self.domain.lo.len() != self.n || self.domain.hi.len() != self.n {
            return bad("domain box has the wrong dimension".into());
        }
        if self.domain.lo.iter().zip(&self.domain.hi).any(|(a, b)| !(a < b)) {
            return bad("domain box must have lo < hi".into());
        }
        if self.schedule.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.schedule.mode == ScheduleMode::Mu {
            match self.schedule.mu {
                Some(m) if m > 0.0 && m < 1.0 => {}
                _ => return bad("mu schedule needs mu in (0,1)".into()),
            }
        }
        if !(self.sample_spacing > 0.0 && self.tolerances.eps_geom > 0.0 && self.tolerances.lambda >= 1.0) {
            return bad("spacing, eps_geom must be positive and lambda >= 1".into());
        }
        self.quasimin.validate()?;
        let anchors = self.anchors()?;
        if anchors.is_empty() {
            return bad("boundary has no anchor points".into());
        }
        for a in &anchors {
            if a.len() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, got: a.len() });
            }
            if a.iter().enumerate().any(|(i, x)| *x <= self.domain.lo[i] || *x >= self.domain.hi[i]) {
                return bad(format!("anchor {a:?} is not inside the domain"));
            }
        }
        Ok(())
    }

    pub fn anchors(&self) -> Result<Vec<Vec<f64>>> {
        match &self.boundary {
            BoundaryConfig::Anchors(a) => Ok(a.clone()),
            BoundaryConfig::Faces { grid_level, cells } => {
                let faces = Complex::from_cells(self.n, cells.iter().flat_map(|c| c.faces()))?;
                BoundarySpec::new(*grid_level, faces.clone())?;
                Ok(faces.skeleton(0).iter().map(|c| c.lo_f64()).collect())
            }
        }
    }

    fn initial_set(&self) -> Result<(SampledSet, Option<Graph>)> {
        let anchors = self.anchors()?;
        let mut g = Graph::default();
        let node = |g: &mut Graph, p: &Vec<f64>| -> usize {
            if let Some(i) = g.nodes.iter().position(|q| q == p) {
                return i;
            }
            let fixed = anchors.iter().any(|a| a == p);
            g.add_node(p.clone(), fixed)
        };
        match &self.initial_set {
            InitialSet::Polyline { points, closed } => {
                let ids: Vec<usize> = points.iter().map(|p| node(&mut g, p)).collect();
                for w in ids.windows(2) {
                    g.edges.push((w[0], w[1]));
                }
                if *closed && ids.len() > 2 {
                    g.edges.push((ids[ids.len() - 1], ids[0]));
                }
            }
            InitialSet::Segments(segs) => {
                for [a, b] in segs {
                    let (i, j) = (node(&mut g, a), node(&mut g, b));
                    g.edges.push((i, j));
                }
            }
            InitialSet::File(path) => {
                let p = match &self.base_dir {
                    Some(b) => b.join(path),
                    None => PathBuf::from(path),
                };
                let mut s = SampledSet::read_csv(std::fs::File::open(p)?, self.d)?;
                let snap = 2.0 * s.resolution.max(self.tolerances.eps_geom);
                for a in &anchors {
                    let (i, dist) = s
                        .points
                        .iter()
                        .enumerate()
                        .map(|(i, q)| (i, euclid(a, q)))
                        .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                        .ok_or_else(|| Error::InvalidInput("initial set is empty".into()))?;
                    if dist > snap {
                        return Err(Error::Precondition(format!("anchor {a:?} is {dist} away from the initial set")));
                    }
                    s.points[i] = a.clone();
                }
                return Ok((s, None));
            }
        }
        for (i, a) in anchors.iter().enumerate() {
            if !g.nodes.iter().any(|q| q == a) {
                return Err(Error::Precondition(format!("anchor {i} at {a:?} is not a vertex of the initial set")));
            }
        }
        let s = g.resample(self.sample_spacing)?;
        Ok((s, Some(g)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub k: usize,
    pub level: u32,
    pub cells: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub pruned: usize,
    pub ahlfors_min: Option<f64>,
    pub ahlfors_max: Option<f64>,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalAudit {
    pub ahlfors_min: f64,
    pub ahlfors_max: f64,
    pub quasimin: Vec<QuasiminAudit>,
    pub quasimin_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub accepted_energies: Vec<f64>,
    pub junction_angles: Vec<Vec<f64>>,
    pub anchors_conserved: bool,
    pub final_audit: Option<FinalAudit>,
    /// The off-grid length relaxation is a polish step on top of the
    /// projection pipeline.
    pub relax_polish: bool,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutput {
    pub final_set: SampledSet,
    pub graph: Option<Graph>,
    pub reports: Vec<IterationReport>,
    pub summary: RunSummary,
}

fn domain_grid(cfg: &ProblemConfig, level: u32) -> Result<Complex> {
    let conv = |v: &[f64]| -> Result<Vec<DyadicScalar>> {
        v.iter()
            .map(|x| {
                DyadicScalar::from_f64_exact(*x)
                    .filter(|d| d.on_lattice(level as i32))
                    .ok_or_else(|| Error::InvalidInput(format!("domain bound {x} is off the level-{level} lattice")))
            })
            .collect()
    };
    Complex::grid(&conv(&cfg.domain.lo)?, &conv(&cfg.domain.hi)?, level, false)
}

/// Run the direct-method loop.
pub fn minimize(cfg: &ProblemConfig) -> Result<MinimizeOutput> {
    cfg.validate()?;
    let anchors = cfg.anchors()?;
    let integrand = cfg.integrand.build()?;
    let (mut current, mut graph) = cfg.initial_set()?;
    let initial_energy = energy_eval(&current, &integrand, PCA_K)?;
    let mut energy = initial_energy;
    let mut accepted_energies = vec![energy];
    let mut reports = Vec::new();
    let mut stalls = 0;
    let nested = match cfg.schedule.mode {
        ScheduleMode::Mu => {
            let q = schedule::q_schedule(cfg.schedule.mu.unwrap_or(0.5), cfg.schedule.iterations)?;
            Some(nested_complexes(Direction::Expanding, &q, cfg.n)?)
        }
        ScheduleMode::Uniform => None,
    };
    let params = FfParams {
        lambda: cfg.tolerances.lambda,
        delta: cfg.tolerances.delta,
        check_zeta: false,
        ..FfParams::default()
    };
    for k in 0..cfg.schedule.iterations {
        let complex = match &nested {
            Some(ks) => ks[k].clone(),
            None => domain_grid(cfg, cfg.schedule.start_level + k as u32)?,
        };
        let level = complex.max_level();
        let side = 0.5f64.powi(level as i32);
        let h = cfg.sample_spacing.min(side / 4.0);
        let e = match &graph {
            Some(g) => g.resample(h)?,
            None => current.clone(),
        };
        let mut rng = stream(cfg.seed, "minimize", k as u64);
        let mut report = IterationReport {
            k,
            level,
            cells: complex.len(),
            energy_before: energy,
            energy_after: energy,
            pruned: 0,
            ahlfors_min: None,
            ahlfors_max: None,
            accepted: false,
            note: None,
        };
        match candidate(cfg, &complex, &e, &anchors, &params, h, &mut rng) {
            Ok((cand_set, cand_graph, pruned)) => {
                let cand_energy = energy_eval(&cand_set, &integrand, PCA_K)?;
                report.energy_after = cand_energy;
                report.pruned = pruned;
                if let Some((lo, hi)) = ahlfors_range(&cand_set, &cand_graph) {
                    report.ahlfors_min = Some(lo);
                    report.ahlfors_max = Some(hi);
                }
                if cand_energy < energy {
                    energy = cand_energy;
                    current = cand_set;
                    graph = Some(cand_graph);
                    accepted_energies.push(energy);
                    report.accepted = true;
                    stalls = 0;
                } else {
                    stalls += 1;
                }
            }
            Err(err @ (Error::CenterExhausted { .. } | Error::Precondition(_))) => {
                report.note = Some(err.to_string());
                stalls += 1;
            }
            Err(err) => return Err(err),
        }
        log::info!("iteration {k}: energy {} accepted {}", report.energy_after, report.accepted);
        reports.push(report);
        if cfg.max_stalls > 0 && stalls >= cfg.max_stalls {
            break;
        }
    }
    let anchors_conserved = anchors.iter().all(|a| current.points.iter().any(|p| p == a));
    let junction_angles = graph.as_ref().map(|g| g.junction_angles()).unwrap_or_default();
    let final_audit = graph.as_ref().and_then(|g| final_audit(&current, g, &cfg.quasimin, &integrand).ok());
    Ok(MinimizeOutput {
        summary: RunSummary {
            initial_energy,
            final_energy: energy,
            accepted_energies,
            junction_angles,
            anchors_conserved,
            final_audit,
            relax_polish: cfg.relax.enabled,
        },
        final_set: current,
        graph,
        reports,
    })
}

/// Project, prune, re-snap, extract and polish one candidate.
fn candidate(
    cfg: &ProblemConfig,
    complex: &Complex,
    e: &SampledSet,
    anchors: &[Vec<f64>],
    params: &FfParams,
    h: f64,
    rng: &mut crate::rng::Rng,
) -> Result<(SampledSet, Graph, usize)> {
    let inside: Vec<usize> = (0..e.len()).filter(|&i| complex.support_contains(&e.points[i], EPS_GEOM)).collect();
    let mut mapped = e.clone();
    if !inside.is_empty() {
        let part = e.subset(&inside);
        let r = ff_project(complex, cfg.d, &part, params, rng)?;
        for (j, &i) in inside.iter().enumerate() {
            mapped.points[i] = r.mapped.points[j].clone();
        }
    }
    let pruned_set = prune_low_mass_dcells(complex, cfg.d, &mapped, cfg.tolerances.threshold_fraction, rng)?;
    let pruned = mapped.points.iter().zip(&pruned_set.points).filter(|(a, b)| a != b).count();
    let mut snapped = pruned_set;
    for (i, p) in e.points.iter().enumerate() {
        if anchors.iter().any(|a| a == p) {
            snapped.points[i] = p.clone();
        }
    }
    let mut g = clean_graph(extract_graph(complex, &snapped, anchors));
    if cfg.relax.enabled {
        steiner_polish(&mut g, cfg.relax.step, cfg.relax.iters, cfg.relax.rounds);
    }
    let s = g.resample(h)?;
    Ok((s, g, pruned))
}

/// Probe points and radius for density checks: junctions and edge midpoints.
fn probes(g: &Graph) -> (Vec<Vec<f64>>, f64) {
    let adj = g.adjacency();
    let min_edge = g.edges.iter().map(|&(a, b)| euclid(&g.nodes[a], &g.nodes[b])).fold(f64::INFINITY, f64::min);
    let r = (0.25 * min_edge).min(0.1);
    let mut c: Vec<Vec<f64>> =
        (0..g.nodes.len()).filter(|&i| !g.fixed[i] && adj[i].len() >= 3).map(|i| g.nodes[i].clone()).collect();
    c.extend(g.edges.iter().map(|&(a, b)| g.nodes[a].iter().zip(&g.nodes[b]).map(|(x, y)| 0.5 * (x + y)).collect()));
    (c, r)
}

fn ahlfors_range(s: &SampledSet, g: &Graph) -> Option<(f64, f64)> {
    let (centers, r) = probes(g);
    if centers.is_empty() || !(r > 0.0) {
        return None;
    }
    let delta = (r / 10.0).max(2.0 * s.resolution);
    let rep = ahlfors_audit(s, &centers, &[r], delta).ok()?;
    Some((rep.min_ratio, rep.max_ratio))
}

/// Density range plus bump deformations at edge midpoints.
fn final_audit(s: &SampledSet, g: &Graph, p: &QuasiminParams, integrand: &Integrand) -> Result<FinalAudit> {
    let (lo, hi) = ahlfors_range(s, g).ok_or_else(|| Error::InvalidInput("nothing to audit".into()))?;
    let (_, r) = probes(g);
    let delta = (r / 10.0).max(2.0 * s.resolution);
    let mut cases = Vec::new();
    for &(a, b) in g.edges.iter().take(3) {
        let (pa, pb) = (&g.nodes[a], &g.nodes[b]);
        let c: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| 0.5 * (x + y)).collect();
        let t: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| y - x).collect();
        let nu = normal_to(&t);
        let images: Vec<Vec<f64>> = s
            .points
            .iter()
            .map(|x| {
                let w = (1.0 - euclid(x, &c) / r).max(0.0);
                x.iter().zip(&nu).map(|(xi, ni)| xi + 0.3 * r * w * ni).collect()
            })
            .collect();
        cases.push(quasimin_audit(s, &images, &c, 2.0 * r, p, integrand, delta, 0.05, None)?);
    }
    let quasimin_pass = cases.iter().all(|c| c.satisfied);
    Ok(FinalAudit { ahlfors_min: lo, ahlfors_max: hi, quasimin: cases, quasimin_pass })
}

fn normal_to(t: &[f64]) -> Vec<f64> {
    let tn = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    let axis = (0..t.len()).min_by(|&i, &j| t[i].abs().partial_cmp(&t[j].abs()).unwrap()).unwrap_or(0);
    let mut v = vec![0.0; t.len()];
    v[axis] = 1.0;
    let dot = t[axis] / tn;
    for (vi, ti) in v.iter_mut().zip(t) {
        *vi -= dot * ti / tn;
    }
    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / vn).collect()
}

/// Write `report.json`, `final.csv` and `skeleton.off` under `dir`.
pub fn write_outputs(dir: &Path, out: &MinimizeOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let report = serde_json::json!({
        "summary": out.summary,
        "iterations": out.reports,
    });
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    out.final_set.write_csv(std::fs::File::create(dir.join("final.csv"))?)?;
    let g = out.graph.clone().unwrap_or_default();
    g.write_off(std::fs::File::create(dir.join("skeleton.off"))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_anchor_config() -> ProblemConfig {
        ProblemConfig::from_json(
            r#"{
                "schema": 1, "n": 2, "d": 1,
                "domain": {"lo": [-0.5, -0.5], "hi": [1.5, 1.5]},
                "boundary": {"anchors": [[0.0, 0.0], [1.0, 0.25]]},
                "initial_set": {"polyline": {"points": [[0.0, 0.0], [0.3, 0.6], [0.7, -0.3], [1.0, 0.25]]}},
                "schedule": {"mode": "uniform", "iterations": 2, "start_level": 3}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn bent_polyline_straightens() {
        let out = minimize(&two_anchor_config()).unwrap();
        let target = euclid(&[0.0, 0.0], &[1.0, 0.25]);
        assert!((out.summary.final_energy - target).abs() / target < 0.01, "{:?}", out.summary);
        assert!(out.summary.anchors_conserved);
        assert!(out.summary.accepted_energies.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn config_rejections() {
        let base = serde_json::to_value(two_anchor_config()).unwrap();
        let mut v = base.clone();
        v["schema"] = 2.into();
        assert!(ProblemConfig::from_json(&v.to_string()).is_err());
        let mut v = base.clone();
        v["unknown"] = 1.into();
        assert!(ProblemConfig::from_json(&v.to_string()).is_err());
        let mut v = base.clone();
        v["schedule"]["iterations"] = 0.into();
        assert!(ProblemConfig::from_json(&v.to_string()).is_err());
        let mut v = base;
        v["schedule"]["mode"] = "mu".into();
        v["schedule"]["mu"] = 1.5.into();
        assert!(ProblemConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn mu_schedule_run() {
        let mut cfg = two_anchor_config();
        cfg.domain = DomainBox { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        cfg.boundary = BoundaryConfig::Anchors(vec![vec![-0.25, 0.0], vec![0.25, 0.125]]);
        cfg.initial_set =
            InitialSet::Polyline { points: vec![vec![-0.25, 0.0], vec![0.0, 0.3], vec![0.25, 0.125]], closed: false };
        cfg.schedule = ScheduleConfig { mode: ScheduleMode::Mu, mu: Some(0.5), iterations: 2, start_level: 0 };
        let out = minimize(&cfg).unwrap();
        let target = euclid(&[-0.25, 0.0], &[0.25, 0.125]);
        assert!((out.summary.final_energy - target).abs() / target < 0.01);
    }

    #[test]
    fn outputs_written() {
        let out = minimize(&two_anchor_config()).unwrap();
        let dir = std::env::temp_dir().join(format!("plateau-out-{}", std::process::id()));
        write_outputs(&dir, &out).unwrap();
        for f in ["report.json", "final.csv", "skeleton.off"] {
            assert!(dir.join(f).exists());
        }
        let back = SampledSet::read_csv(std::fs::File::open(dir.join("final.csv")).unwrap(), 1).unwrap();
        assert_eq!(back.len(), out.final_set.len());
        std::fs::remove_dir_all(dir).ok();
    }
}
