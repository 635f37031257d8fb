//! Absorption-preserving pseudo-orbit graphs on a probe grid.

use std::collections::VecDeque;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::flow_map;
use crate::error::{Error, Result};
use crate::grid::{distance, ring_offsets, BoxRegion, Grid};
use crate::model::{validate_assumptions, ModelSpec, Region, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceParams {
    pub grid_step: f64,
    /// Jump tolerance of the pseudo-orbits.
    pub delta: f64,
    /// Flight times; edges are unioned over all of them.
    pub t_list: Vec<f64>,
    /// RK4 step used for the flow map.
    pub flow_step: f64,
}

impl RecurrenceParams {
    pub fn new(grid_step: f64, delta: f64, t: f64) -> Self {
        Self {
            grid_step,
            delta,
            t_list: vec![t],
            flow_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Quasiattractor,
    NonQuasiattractor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceClass {
    pub points: Vec<Vec<f64>>,
    pub quasiattractor: bool,
    #[serde(skip)]
    pub nodes: Vec<usize>,
}

impl RecurrenceClass {
    pub fn kind(&self) -> ClassKind {
        if self.quasiattractor {
            ClassKind::Quasiattractor
        } else {
            ClassKind::NonQuasiattractor
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        let d = self.points[0].len();
        let mut c = vec![0.0; d];
        for p in &self.points {
            for k in 0..d {
                c[k] += p[k];
            }
        }
        c.iter_mut().for_each(|v| *v /= self.points.len() as f64);
        c
    }

    pub fn distance_to(&self, x: &[f64]) -> f64 {
        self.points.iter().map(|p| distance(p, x)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub grid: Grid,
    pub params: RecurrenceParams,
    /// Interior classes, sorted by lexicographically smallest member.
    pub classes: Vec<RecurrenceClass>,
    /// `(i, j)` when class `i` reaches class `j` by pseudo-orbits.
    pub dag_edges: Vec<(usize, usize)>,
    /// Recurrent classes inside the boundary collar; excluded from the interior set.
    pub boundary_classes: Vec<RecurrenceClass>,
}

impl RecurrenceReport {
    pub fn quasiattractors(&self) -> impl Iterator<Item = &RecurrenceClass> {
        self.classes.iter().filter(|c| c.quasiattractor)
    }
}

/// The δ-ball graph of the time-T flow maps, with the absorption constraint applied.
#[derive(Debug, Clone)]
pub struct PseudoOrbitGraph {
    pub grid: Grid,
    pub adjacency: Vec<Vec<u32>>,
    pub collar: Vec<bool>,
}

impl PseudoOrbitGraph {
    pub fn build(model: &ModelSpec, region: &BoxRegion, params: &RecurrenceParams) -> Result<Self> {
        if region.dim() != model.d() {
            return Err(Error::Precondition(format!(
                "box has dimension {} but model has {}",
                region.dim(),
                model.d()
            )));
        }
        if !(params.delta > params.grid_step / 2.0) {
            return Err(Error::Precondition(format!(
                "delta {} must exceed half the grid step {}",
                params.delta, params.grid_step
            )));
        }
        if params.t_list.is_empty() || params.t_list.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Precondition("flight times must be positive and non-empty".into()));
        }
        if region.lower.iter().any(|l| *l < 0.0) {
            return Err(Error::Precondition("box must lie in the closed orthant".into()));
        }
        let grid = Grid::new(region, params.grid_step)?;
        let h = params.grid_step;
        let collar: Vec<bool> = (0..grid.len()).map(|k| grid.point(k).iter().any(|v| *v < h)).collect();
        let adjacency = (0..grid.len())
            .into_par_iter()
            .map(|u| -> Result<Vec<u32>> {
                let x = grid.point(u);
                let mut out: Vec<u32> = Vec::new();
                for &t in &params.t_list {
                    let y = flow_map(model, &x, t, params.flow_step)?;
                    for v in grid.nodes_within(&y, params.delta) {
                        if !collar[u] || collar[v] {
                            out.push(v as u32);
                        }
                    }
                }
                out.sort_unstable();
                out.dedup();
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, adjacency, collar })
    }

    /// Nodes reachable from `starts` (inclusive) by following edges.
    pub fn reachable(&self, starts: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.adjacency.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in starts {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Like [`reachable`](Self::reachable) but never expanding past collar nodes.
    pub fn reachable_avoiding_collar(&self, starts: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.adjacency.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in starts {
            if !seen[s] && !self.collar[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                let v = v as usize;
                if !seen[v] && !self.collar[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Recurrent SCCs: size at least two, or a single node with a self-loop.
    pub fn recurrent_components(&self) -> Vec<Vec<usize>> {
        let mut g: DiGraph<(), ()> = DiGraph::with_capacity(self.adjacency.len(), 0);
        let ids: Vec<_> = (0..self.adjacency.len()).map(|_| g.add_node(())).collect();
        for (u, out) in self.adjacency.iter().enumerate() {
            for &v in out {
                g.add_edge(ids[u], ids[v as usize], ());
            }
        }
        tarjan_scc(&g)
            .into_iter()
            .map(|c| c.into_iter().map(|n| n.index()).collect::<Vec<usize>>())
            .filter(|c| c.len() >= 2 || self.adjacency[c[0]].binary_search(&(c[0] as u32)).is_ok())
            .collect()
    }
}

/// Unions recurrent components on the same side of the collar that touch on the grid.
///
/// At finite δ a continuum class is a fattened set whose edge nodes can round into
/// separate self-loop components; this glues them back.
pub(crate) fn merge_adjacent(grid: &Grid, collar: &[bool], comps: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let mut owner = vec![usize::MAX; grid.len()];
    for (c, comp) in comps.iter().enumerate() {
        for &u in comp {
            owner[u] = c;
        }
    }
    let mut parent: Vec<usize> = (0..comps.len()).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    let offsets = ring_offsets(grid.dim(), 1);
    for (c, comp) in comps.iter().enumerate() {
        for &u in comp {
            for o in &offsets {
                if let Some(v) = grid.offset(u, o) {
                    if owner[v] != usize::MAX && owner[v] != c && collar[u] == collar[v] {
                        let (a, b) = (find(&mut parent, c), find(&mut parent, owner[v]));
                        parent[a] = b;
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); comps.len()];
    for (c, comp) in comps.into_iter().enumerate() {
        let root = find(&mut parent, c);
        groups[root].extend(comp);
    }
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

pub(crate) fn make_class(grid: &Grid, mut nodes: Vec<usize>) -> RecurrenceClass {
    nodes.sort_unstable();
    RecurrenceClass {
        points: nodes.iter().map(|&k| grid.point(k)).collect(),
        quasiattractor: false,
        nodes,
    }
}

fn lexicographic(a: &RecurrenceClass, b: &RecurrenceClass) -> std::cmp::Ordering {
    // Row-major node order is lexicographic in the coordinates.
    a.nodes[0].cmp(&b.nodes[0])
}

/// Grid realisation of AP chain recurrence: SCCs of the pseudo-orbit graph.
pub fn chain_recurrence(model: &ModelSpec, region: &BoxRegion, params: &RecurrenceParams) -> Result<RecurrenceReport> {
    let graph = PseudoOrbitGraph::build(model, region, params)?;
    recurrence_from_graph(model, region, params, &graph)
}

pub(crate) fn recurrence_from_graph(
    model: &ModelSpec,
    region: &BoxRegion,
    params: &RecurrenceParams,
    graph: &PseudoOrbitGraph,
) -> Result<RecurrenceReport> {
    let mut classes = Vec::new();
    let mut boundary = Vec::new();
    for comp in merge_adjacent(&graph.grid, &graph.collar, graph.recurrent_components()) {
        // Collar nodes cannot reach the interior, so a component is wholly one or the other.
        if graph.collar[comp[0]] {
            boundary.push(make_class(&graph.grid, comp));
        } else {
            classes.push(make_class(&graph.grid, comp));
        }
    }
    classes.sort_by(lexicographic);
    boundary.sort_by(lexicographic);

    if classes.is_empty() {
        let lower: Vec<f64> = region.lower.iter().map(|l| l.max(params.grid_step)).collect();
        let interior = Region::new(lower, region.upper.clone());
        let repels = validate_assumptions(model, &interior, params.grid_step)
            .check("2(c)")
            .map(|c| c.verdict == Verdict::Pass)
            .unwrap_or(false);
        if repels {
            return Err(Error::Resolution(
                "no interior recurrent class found although the boundary repels; refine the grid or enlarge delta"
                    .into(),
            ));
        }
    }

    let mut dag_edges = Vec::new();
    for i in 0..classes.len() {
        let seen = graph.reachable(&classes[i].nodes);
        for (j, other) in classes.iter().enumerate() {
            if i != j && other.nodes.iter().any(|&v| seen[v]) {
                dag_edges.push((i, j));
            }
        }
    }
    for (i, class) in classes.iter_mut().enumerate() {
        class.quasiattractor = !dag_edges.iter().any(|&(a, _)| a == i);
    }
    Ok(RecurrenceReport {
        grid: graph.grid.clone(),
        params: params.clone(),
        classes,
        dag_edges,
        boundary_classes: boundary,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoOrbitCheck {
    pub valid: bool,
    pub first_violation: Option<usize>,
}

fn on_boundary(x: &[f64]) -> bool {
    x.contains(&0.0)
}

/// Checks the defining conditions of a `(δ, T)` AP-pseudo-orbit `ξ_0, …, ξ_n` with flight times `T_1, …, T_{n-1}`.
///
/// The violation index is the `i` of the offending `ξ_i`; a flight time below `T` is reported at its own index.
pub fn is_ap_pseudo_orbit(
    model: &ModelSpec,
    points: &[Vec<f64>],
    times: &[f64],
    delta: f64,
    t_min: f64,
    flow_step: f64,
) -> Result<PseudoOrbitCheck> {
    if points.len() < 2 || times.len() + 2 != points.len() {
        return Err(Error::Precondition(format!(
            "need n+1 >= 2 points and n-1 times, got {} points and {} times",
            points.len(),
            times.len()
        )));
    }
    let fail = |i| Ok(PseudoOrbitCheck {
        valid: false,
        first_violation: Some(i),
    });
    let n = points.len() - 1;
    for i in 0..n {
        let jump_ok = if i == 0 {
            distance(&points[0], &points[1]) < delta
        } else {
            let t = times[i - 1];
            if t < t_min {
                return fail(i);
            }
            let y = flow_map(model, &points[i], t, flow_step)?;
            distance(&points[i + 1], &y) < delta
        };
        let absorbing_ok = !on_boundary(&points[i]) || on_boundary(&points[i + 1]);
        if !jump_ok || !absorbing_ok {
            return fail(i);
        }
    }
    Ok(PseudoOrbitCheck {
        valid: true,
        first_violation: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub radius: f64,
    pub starts: usize,
    /// `(t, sup over starts of dist(φ_t(x), class))`.
    pub checkpoints: Vec<(f64, f64)>,
    pub attracting: bool,
    pub tolerance: f64,
}

/// Flows sampled starts at `radius` from the class and tracks their worst distance to it.
///
/// Starts are offsets along every axis and every sign-diagonal from each class point,
/// restricted to the open orthant. Verdict "attracting" once the sup drops below `tolerance`.
pub fn attractor_basin_check(
    model: &ModelSpec,
    class: &RecurrenceClass,
    radius: f64,
    t_max: f64,
    tolerance: f64,
    flow_step: f64,
) -> Result<BasinReport> {
    if radius == 0.0 || class.points.is_empty() {
        return Ok(BasinReport {
            radius,
            starts: 0,
            checkpoints: Vec::new(),
            attracting: true,
            tolerance,
        });
    }
    let d = model.d();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for k in 0..d {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; d];
            e[k] = s;
            dirs.push(e);
        }
    }
    if d > 1 {
        for mask in 0..(1usize << d) {
            let e: Vec<f64> = (0..d)
                .map(|k| if mask >> k & 1 == 1 { 1.0 } else { -1.0 } / (d as f64).sqrt())
                .collect();
            dirs.push(e);
        }
    }
    let mut starts = Vec::new();
    for p in &class.points {
        for e in &dirs {
            let x: Vec<f64> = p.iter().zip(e).map(|(a, b)| a + radius * b).collect();
            if x.iter().all(|v| *v > 0.0) {
                starts.push(x);
            }
        }
    }
    let n_check = t_max.ceil().max(1.0) as usize;
    let checkpoint_times: Vec<f64> = (1..=n_check).map(|k| k as f64 * t_max / n_check as f64).collect();
    let per_start: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|x| -> Result<Vec<f64>> {
            let mut y = x.clone();
            let mut prev = 0.0;
            let mut out = Vec::with_capacity(checkpoint_times.len());
            for &t in &checkpoint_times {
                y = flow_map(model, &y, t - prev, flow_step)?;
                prev = t;
                out.push(class.distance_to(&y));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let checkpoints: Vec<(f64, f64)> = checkpoint_times
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, per_start.iter().map(|v| v[k]).fold(0.0, f64::max)))
        .collect();
    let attracting = checkpoints.iter().any(|&(_, s)| s < tolerance);
    Ok(BasinReport {
        radius,
        starts: starts.len(),
        checkpoints,
        attracting,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::shipped;

    fn bh_report() -> RecurrenceReport {
        let m = shipped::beverton_holt_1d();
        chain_recurrence(&m, &BoxRegion::new(vec![0.0], vec![3.0]), &RecurrenceParams::new(0.02, 0.05, 2.0)).unwrap()
    }

    #[test]
    fn beverton_holt_single_class() {
        let r = bh_report();
        assert_eq!(r.classes.len(), 1);
        let c = &r.classes[0];
        assert!(c.quasiattractor);
        assert!(c.distance_to(&[1.0]) < 0.02);
        assert!(r.dag_edges.is_empty());
        assert_eq!(r.boundary_classes.len(), 1);
        assert_eq!(r.boundary_classes[0].points, vec![vec![0.0]]);
    }

    #[test]
    fn huge_delta_gives_one_class() {
        let m = shipped::beverton_holt_1d();
        let r = chain_recurrence(&m, &BoxRegion::new(vec![0.0], vec![1.0]), &RecurrenceParams::new(0.1, 5.0, 1.0)).unwrap();
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].points.len(), 10);
    }

    #[test]
    fn pseudo_orbit_conditions() {
        let m = shipped::beverton_holt_1d();
        let x = vec![0.4];
        let y = flow_map(&m, &x, 1.0, 0.01).unwrap();
        let z = flow_map(&m, &y, 1.0, 0.01).unwrap();
        let ok = is_ap_pseudo_orbit(&m, &[x.clone(), x.clone(), y.clone(), z.clone()], &[1.0, 1.0], 1e-9, 1.0, 0.01).unwrap();
        assert!(ok.valid);
        let bad = is_ap_pseudo_orbit(&m, &[x.clone(), vec![0.0], vec![0.3]], &[1.0], 10.0, 1.0, 0.01).unwrap();
        assert_eq!(bad.first_violation, Some(1));
        let short = is_ap_pseudo_orbit(&m, &[x.clone(), x.clone(), y.clone()], &[0.5], 1.0, 1.0, 0.01).unwrap();
        assert_eq!(short.first_violation, Some(1));
        assert!(is_ap_pseudo_orbit(&m, &[x.clone(), x], &[1.0], 1.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn basin_of_the_equilibrium() {
        let m = shipped::beverton_holt_1d();
        let r = bh_report();
        let b = attractor_basin_check(&m, &r.classes[0], 0.3, 20.0, 0.02, 0.01).unwrap();
        assert!(b.attracting);
        assert!(b.checkpoints.last().unwrap().1 < 0.02);
        let v = attractor_basin_check(&m, &r.classes[0], 0.0, 20.0, 0.02, 0.01).unwrap();
        assert!(v.attracting && v.starts == 0);
    }

    #[test]
    fn bistable_two_sinks_and_a_saddle() {
        let m = shipped::bistable_ricker_2d();
        let r = chain_recurrence(&m, &BoxRegion::cube(2, 0.0, 5.0), &RecurrenceParams::new(0.05, 0.06, 3.0)).unwrap();
        assert_eq!(r.classes.len(), 3);
        let sinks: Vec<_> = r.quasiattractors().collect();
        assert_eq!(sinks.len(), 2);
        assert!(sinks.iter().any(|c| c.distance_to(&[0.637, 3.911]) < 0.05));
        assert!(sinks.iter().any(|c| c.distance_to(&[3.911, 0.637]) < 0.05));
        let saddle = r.classes.iter().position(|c| !c.quasiattractor).unwrap();
        assert!(r.classes[saddle].distance_to(&[2.559, 2.559]) < 0.05);
        let mut out: Vec<_> = r.dag_edges.iter().filter(|e| e.0 == saddle).map(|e| e.1).collect();
        out.sort();
        assert_eq!(out.len(), 2);
        assert_eq!(r.dag_edges.len(), 2);
    }
}
