//! Embedded graphs for `d = 1` sets: extraction from a projected sample
//! cloud, cleanup, length relaxation and resampling.

use crate::complex::Complex;
use crate::dyadic::{euclid, EPS_GEOM};
use crate::error::{Error, Result};
use crate::measure::SampledSet;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

#[derive(Debug, Clone, Default, Serialize)]
pub struct Graph {
    pub nodes: Vec<Vec<f64>>,
    /// Anchored nodes never move.
    pub fixed: Vec<bool>,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn add_node(&mut self, p: Vec<f64>, fixed: bool) -> usize {
        self.nodes.push(p);
        self.fixed.push(fixed);
        self.nodes.len() - 1
    }

    pub fn length(&self) -> f64 {
        self.edges.iter().map(|&(a, b)| euclid(&self.nodes[a], &self.nodes[b])).sum()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    fn node_length(&self, adj: &[Vec<usize>], i: usize, p: &[f64]) -> f64 {
        adj[i].iter().map(|&j| euclid(p, &self.nodes[j])).sum()
    }

    /// Drop self loops, duplicate edges and nodes without edges (anchors kept).
    pub fn compact(&mut self) {
        let mut seen = BTreeSet::new();
        self.edges.retain(|&(a, b)| a != b && seen.insert((a.min(b), a.max(b))));
        let adj = self.adjacency();
        let keep: Vec<bool> = (0..self.nodes.len()).map(|i| self.fixed[i] || !adj[i].is_empty()).collect();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        let mut fixed = Vec::new();
        for i in 0..self.nodes.len() {
            if keep[i] {
                remap[i] = nodes.len();
                nodes.push(self.nodes[i].clone());
                fixed.push(self.fixed[i]);
            }
        }
        self.edges = self.edges.iter().map(|&(a, b)| (remap[a], remap[b])).collect();
        self.nodes = nodes;
        self.fixed = fixed;
    }

    /// Connected components as lists of nodes.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; self.nodes.len()];
        let mut out = Vec::new();
        for s in 0..self.nodes.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![s];
            let mut members = Vec::new();
            comp[s] = id;
            while let Some(u) = stack.pop() {
                members.push(u);
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        stack.push(v);
                    }
                }
            }
            out.push(members);
        }
        out
    }

    /// Join components holding anchors with shortest straight bridges and
    /// drop components without anchors.
    pub fn connect_anchors(&mut self) {
        let comps = self.components();
        let anchored: Vec<&Vec<usize>> = comps.iter().filter(|c| c.iter().any(|&i| self.fixed[i])).collect();
        let mut joined: Vec<usize> = (0..anchored.len()).collect();
        fn find(j: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while j[r] != r {
                r = j[r];
            }
            j[x] = r;
            r
        }
        let mut bridges = Vec::new();
        for a in 0..anchored.len() {
            for b in a + 1..anchored.len() {
                let mut best = (f64::INFINITY, 0, 0);
                for &i in anchored[a] {
                    for &j in anchored[b] {
                        let d = euclid(&self.nodes[i], &self.nodes[j]);
                        if d < best.0 {
                            best = (d, i, j);
                        }
                    }
                }
                bridges.push((best.0, a, b, best.1, best.2));
            }
        }
        bridges.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        for (_, a, b, i, j) in bridges {
            let (ra, rb) = (find(&mut joined, a), find(&mut joined, b));
            if ra != rb {
                joined[ra] = rb;
                self.edges.push((i, j));
            }
        }
        let keep: BTreeSet<usize> = anchored.iter().flat_map(|c| c.iter().copied()).collect();
        self.edges.retain(|(a, _)| keep.contains(a));
        let unanchored: Vec<usize> = (0..self.nodes.len()).filter(|i| !keep.contains(i)).collect();
        for i in unanchored {
            self.fixed[i] = false;
        }
        self.compact();
    }

    /// Keep a minimum spanning forest (Euclidean lengths).
    pub fn break_cycles(&mut self) {
        let mut edges: Vec<(f64, usize, usize)> =
            self.edges.iter().map(|&(a, b)| (euclid(&self.nodes[a], &self.nodes[b]), a, b)).collect();
        edges.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        self.edges.clear();
        for (_, a, b) in edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                self.edges.push((a, b));
            }
        }
    }

    /// Repeatedly drop free leaves.
    pub fn prune_leaves(&mut self) {
        loop {
            let adj = self.adjacency();
            let leaves: BTreeSet<usize> =
                (0..self.nodes.len()).filter(|&i| !self.fixed[i] && adj[i].len() <= 1).collect();
            if leaves.iter().all(|&i| adj[i].is_empty()) {
                break;
            }
            self.edges.retain(|(a, b)| !leaves.contains(a) && !leaves.contains(b));
        }
        self.compact();
    }

    /// Replace every free node of degree 2 by a straight edge.
    pub fn contract_degree_two(&mut self) {
        loop {
            let adj = self.adjacency();
            let Some(i) = (0..self.nodes.len()).find(|&i| !self.fixed[i] && adj[i].len() == 2) else {
                break;
            };
            let (a, b) = (adj[i][0], adj[i][1]);
            self.edges.retain(|&(x, y)| x != i && y != i);
            if a != b {
                self.edges.push((a, b));
            }
            self.compact_keep_free(i);
        }
        self.compact();
    }

    fn compact_keep_free(&mut self, removed: usize) {
        self.fixed[removed] = false;
        self.compact();
    }

    /// Merge free nodes closer than `tol` to a neighbour.
    pub fn merge_short_edges(&mut self, tol: f64) {
        loop {
            let hit = self
                .edges
                .iter()
                .position(|&(a, b)| (!self.fixed[a] || !self.fixed[b]) && euclid(&self.nodes[a], &self.nodes[b]) < tol);
            let Some(e) = hit else { break };
            let (a, b) = self.edges[e];
            let (keep, drop) = if self.fixed[b] { (b, a) } else { (a, b) };
            for ed in self.edges.iter_mut() {
                if ed.0 == drop {
                    ed.0 = keep;
                }
                if ed.1 == drop {
                    ed.1 = keep;
                }
            }
            self.fixed[drop] = false;
            self.compact();
        }
    }

    /// Angles (degrees) between consecutive edges around free nodes of degree ≥ 3.
    pub fn junction_angles(&self) -> Vec<Vec<f64>> {
        let adj = self.adjacency();
        (0..self.nodes.len())
            .filter(|&i| !self.fixed[i] && adj[i].len() >= 3 && self.nodes[i].len() == 2)
            .map(|i| {
                let p = &self.nodes[i];
                let mut th: Vec<f64> =
                    adj[i].iter().map(|&j| (self.nodes[j][1] - p[1]).atan2(self.nodes[j][0] - p[0])).collect();
                th.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let k = th.len();
                (0..k)
                    .map(|t| {
                        let next = if t + 1 < k { th[t + 1] } else { th[0] + 2.0 * std::f64::consts::PI };
                        (next - th[t]).to_degrees()
                    })
                    .collect()
            })
            .collect()
    }

    /// Resample edges at spacing about `h`; endpoints included, trapezoid weights.
    pub fn resample(&self, h: f64) -> Result<SampledSet> {
        let n = self.nodes.first().map(|p| p.len()).ok_or_else(|| Error::InvalidInput("empty graph".into()))?;
        let mut pts = Vec::new();
        let mut w = Vec::new();
        for &(a, b) in &self.edges {
            let (pa, pb) = (&self.nodes[a], &self.nodes[b]);
            let len = euclid(pa, pb);
            if len == 0.0 {
                continue;
            }
            let k = ((len / h).ceil() as usize).max(1);
            let step = len / k as f64;
            for j in 0..=k {
                let t = j as f64 / k as f64;
                let p = if j == 0 {
                    pa.clone()
                } else if j == k {
                    pb.clone()
                } else {
                    pa.iter().zip(pb).map(|(x, y)| x + t * (y - x)).collect()
                };
                pts.push(p);
                w.push(if j == 0 || j == k { step / 2.0 } else { step });
            }
        }
        if pts.is_empty() {
            return Err(Error::InvalidInput("graph has no length".into()));
        }
        SampledSet::new(1, n, pts, w, h)
    }

    /// OFF text: vertices (padded to 3D) and edges as degenerate triangles.
    pub fn write_off<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "OFF")?;
        writeln!(w, "{} {} 0", self.nodes.len(), self.edges.len())?;
        for p in &self.nodes {
            let c: Vec<String> = (0..3).map(|i| format!("{}", p.get(i).copied().unwrap_or(0.0))).collect();
            writeln!(w, "{}", c.join(" "))?;
        }
        for &(a, b) in &self.edges {
            writeln!(w, "3 {a} {b} {b}")?;
        }
        Ok(())
    }
}

/// Result of [`relax_skeleton`].
#[derive(Debug, Clone, Serialize)]
pub struct RelaxTrace {
    pub lengths: Vec<f64>,
    pub backtracks: usize,
}

/// Coordinate descent on total edge length with anchors fixed.
///
/// Each free node takes a gradient step of size at most `step`; a step
/// that would lengthen the graph is halved until it does not, so the
/// length never increases.
pub fn relax_skeleton(g: &mut Graph, step: f64, iters: usize) -> RelaxTrace {
    let adj = g.adjacency();
    let mut steps = vec![step; g.nodes.len()];
    let mut lengths = vec![g.length()];
    let mut backtracks = 0;
    for _ in 0..iters {
        for i in 0..g.nodes.len() {
            if g.fixed[i] || adj[i].is_empty() {
                continue;
            }
            let p = g.nodes[i].clone();
            let mut grad = vec![0.0; p.len()];
            for &j in &adj[i] {
                let r = euclid(&p, &g.nodes[j]);
                if r > 0.0 {
                    for (c, gc) in grad.iter_mut().enumerate() {
                        *gc += (p[c] - g.nodes[j][c]) / r;
                    }
                }
            }
            let gn = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
            if gn < 1e-15 {
                continue;
            }
            let before = g.node_length(&adj, i, &p);
            let mut s = steps[i];
            let mut moved = false;
            for _ in 0..60 {
                let q: Vec<f64> = p.iter().zip(&grad).map(|(x, d)| x - s * d / gn).collect();
                if g.node_length(&adj, i, &q) < before {
                    g.nodes[i] = q;
                    moved = true;
                    break;
                }
                s /= 2.0;
                backtracks += 1;
            }
            steps[i] = if moved { (s * 1.5).min(step) } else { s };
        }
        lengths.push(g.length());
    }
    RelaxTrace { lengths, backtracks }
}

/// Split nodes whose two incident edges meet at less than 120°: a new
/// free node takes both edges and joins the old node.
fn split_sharp_pair(g: &mut Graph) -> bool {
    let adj = g.adjacency();
    let mut best: Option<(f64, usize, usize, usize)> = None;
    for i in 0..g.nodes.len() {
        let deg = adj[i].len();
        if deg < 2 || (!g.fixed[i] && deg < 4) {
            continue;
        }
        for x in 0..deg {
            for y in x + 1..deg {
                let (a, b) = (adj[i][x], adj[i][y]);
                let ang = angle(&g.nodes[i], &g.nodes[a], &g.nodes[b]);
                if ang < 120f64.to_radians() - 1e-6 && best.map(|bb| ang < bb.0).unwrap_or(true) {
                    best = Some((ang, i, a, b));
                }
            }
        }
    }
    let Some((_, i, a, b)) = best else { return false };
    let p = &g.nodes[i];
    let (ua, ub) = (unit(p, &g.nodes[a]), unit(p, &g.nodes[b]));
    let reach = euclid(p, &g.nodes[a]).min(euclid(p, &g.nodes[b]));
    let s: Vec<f64> = p.iter().enumerate().map(|(c, x)| x + 0.05 * reach * (ua[c] + ub[c])).collect();
    let k = g.add_node(s, false);
    g.edges.retain(|&e| e != (i, a) && e != (a, i) && e != (i, b) && e != (b, i));
    g.edges.extend([(k, a), (k, b), (k, i)]);
    true
}

fn unit(from: &[f64], to: &[f64]) -> Vec<f64> {
    let r = euclid(from, to).max(1e-300);
    from.iter().zip(to).map(|(a, b)| (b - a) / r).collect()
}

fn angle(at: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (ua, ub) = (unit(at, a), unit(at, b));
    ua.iter().zip(&ub).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0).acos()
}

/// Topology polish: split sharp pairs, relax, contract and merge until
/// the graph is stable. Only candidates that shorten the graph are kept.
pub fn steiner_polish(g: &mut Graph, step: f64, iters: usize, rounds: usize) -> usize {
    let mut accepted = 0;
    relax_skeleton(g, step, iters);
    for _ in 0..rounds {
        let mut cand = g.clone();
        if !split_sharp_pair(&mut cand) {
            break;
        }
        relax_skeleton(&mut cand, step, iters);
        cand.merge_short_edges(1e-7);
        cand.contract_degree_two();
        relax_skeleton(&mut cand, step, iters);
        if cand.length() < g.length() - 1e-12 {
            *g = cand;
            accepted += 1;
        } else {
            break;
        }
    }
    accepted
}

/// Graph of a projected `d = 1` cloud: occupied grid edges and vertices,
/// plus anchors joined to their nearest occupied vertex.
pub fn extract_graph(k: &Complex, f: &SampledSet, anchors: &[Vec<f64>]) -> Graph {
    let mut g = Graph::default();
    let mut vertex_ids: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    let level = k.max_level();
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|x| (x * (1u64 << level) as f64).round() as i64).collect() };
    let mut node_of =
        |g: &mut Graph, p: Vec<f64>| -> usize { *vertex_ids.entry(key(&p)).or_insert_with(|| g.add_node(p, false)) };
    let mut edge_cells = BTreeSet::new();
    for p in &f.points {
        if anchors.iter().any(|a| euclid(a, p) <= EPS_GEOM) {
            continue;
        }
        if let Some(ci) = k.locate(p, EPS_GEOM) {
            let c = &k.cells()[ci];
            match c.dim() {
                0 => {
                    node_of(&mut g, c.lo_f64());
                }
                1 => {
                    edge_cells.insert(ci);
                }
                _ => {}
            }
        }
    }
    for ci in edge_cells {
        let c = &k.cells()[ci];
        let a = node_of(&mut g, c.lo_f64());
        let b = node_of(&mut g, c.hi_f64());
        g.edges.push((a, b));
    }
    let grid_nodes = g.nodes.len();
    let mut anchor_ids = HashMap::new();
    for a in anchors {
        let id = g.add_node(a.clone(), true);
        anchor_ids.insert(id, ());
        let near =
            (0..grid_nodes).min_by(|&x, &y| euclid(&g.nodes[x], a).partial_cmp(&euclid(&g.nodes[y], a)).unwrap());
        if let Some(j) = near {
            g.edges.push((id, j));
        }
    }
    g
}

/// Extraction followed by cleanup: bridge anchor components, break
/// cycles, drop free leaves and contract free degree-2 nodes.
pub fn clean_graph(mut g: Graph) -> Graph {
    g.compact();
    g.connect_anchors();
    g.break_cycles();
    g.prune_leaves();
    g.contract_degree_two();
    g.merge_short_edges(1e-9);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::DyadicScalar;
    use proptest::prelude::*;

    fn triangle() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]
    }

    #[test]
    fn two_anchor_path_straightens() {
        let mut g = Graph::default();
        let a = g.add_node(vec![0.0, 0.0], true);
        let b = g.add_node(vec![1.0, 0.0], true);
        let m1 = g.add_node(vec![0.3, 0.4], false);
        let m2 = g.add_node(vec![0.6, -0.2], false);
        g.edges = vec![(a, m1), (m1, m2), (m2, b)];
        let t = relax_skeleton(&mut g, 0.1, 2000);
        assert!(t.lengths.windows(2).all(|w| w[1] <= w[0]));
        assert!((g.length() - 1.0).abs() < 1e-3);
        g.contract_degree_two();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.length(), 1.0);
    }

    #[test]
    fn triangle_y_angles() {
        let mut g = Graph::default();
        let ids: Vec<usize> = triangle().into_iter().map(|p| g.add_node(p, true)).collect();
        let s = g.add_node(vec![0.2, 0.1], false);
        g.edges = ids.iter().map(|&i| (i, s)).collect();
        relax_skeleton(&mut g, 0.05, 500);
        for a in g.junction_angles().concat() {
            assert!((a - 120.0).abs() < 1.0, "{a}");
        }
        assert!((g.length() - 3f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn big_steps_backtrack() {
        let mut g = Graph::default();
        let ids: Vec<usize> = triangle().into_iter().map(|p| g.add_node(p, true)).collect();
        let s = g.add_node(vec![0.5, 0.3], false);
        g.edges = ids.iter().map(|&i| (i, s)).collect();
        let t = relax_skeleton(&mut g, 50.0, 50);
        assert!(t.backtracks > 0);
        assert!(t.lengths.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn polish_finds_steiner_points() {
        // two sides of the triangle: the 60° corner splits into a Y
        let mut g = Graph::default();
        let ids: Vec<usize> = triangle().into_iter().map(|p| g.add_node(p, true)).collect();
        g.edges = vec![(ids[0], ids[1]), (ids[1], ids[2])];
        steiner_polish(&mut g, 0.05, 500, 10);
        assert!((g.length() - 3f64.sqrt()).abs() < 1e-4, "{}", g.length());
        // three sides of the unit square give the double Y
        let mut g = Graph::default();
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let ids: Vec<usize> = sq.iter().map(|p| g.add_node(p.to_vec(), true)).collect();
        g.edges = vec![(ids[0], ids[1]), (ids[1], ids[2]), (ids[2], ids[3])];
        steiner_polish(&mut g, 0.05, 500, 10);
        assert!((g.length() - (1.0 + 3f64.sqrt())).abs() < 1e-3, "{}", g.length());
    }

    #[test]
    fn extraction_from_grid_cloud() {
        let k = Complex::grid(&[DyadicScalar::ZERO; 2], &[DyadicScalar::ONE; 2], 2, false).unwrap();
        // an L-shaped staircase on the grid plus a cycle around one square
        let pts: Vec<Vec<f64>> = (0..=40)
            .map(|i| vec![i as f64 / 40.0, 0.0])
            .chain((0..=40).map(|i| vec![1.0, i as f64 / 40.0]))
            .chain((0..=10).map(|i| vec![0.25 + i as f64 / 40.0, 0.25]))
            .collect();
        let f = SampledSet::uniform(1, pts, 0.025).unwrap();
        let anchors = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let g = clean_graph(extract_graph(&k, &f, &anchors));
        assert!((g.length() - 2f64.sqrt()).abs() < 1e-12 || (g.length() - 2.0).abs() < 1e-12, "{}", g.length());
        assert_eq!(g.components().len(), 1);
        let s = g.resample(0.01).unwrap();
        assert!((crate::measure::weight_mass(&s) - g.length()).abs() < 1e-12);
        let mut off = Vec::new();
        g.write_off(&mut off).unwrap();
        assert!(String::from_utf8(off).unwrap().starts_with("OFF\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn relax_monotone(x in -1.0f64..2.0, y in -1.0f64..2.0, step in 0.001f64..5.0) {
            let mut g = Graph::default();
            let ids: Vec<usize> = triangle().into_iter().map(|p| g.add_node(p, true)).collect();
            let s = g.add_node(vec![x, y], false);
            g.edges = ids.iter().map(|&i| (i, s)).collect();
            let t = relax_skeleton(&mut g, step, 100);
            prop_assert!(t.lengths.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(g.nodes[..3] == triangle()[..]);
        }
    }
}
