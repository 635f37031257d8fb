//! Shortest-path quasipotential on an interior grid and V-chain recurrence.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use petgraph::algo::{dijkstra, tarjan_scc};
use petgraph::graph::{DiGraph, NodeIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{make_class, merge_adjacent, RecurrenceClass};
use crate::grid::{distance, ring_offsets, BoxRegion, Grid};
use crate::model::{local_rate_with_birth, ModelSpec, Rate};

/// `{0.05 · 2^k : k = 0..8}`.
pub fn default_time_grid() -> Vec<f64> {
    (0..=8).map(|k| 0.05 * 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasipotentialParams {
    pub grid_step: f64,
    pub time_grid: Vec<f64>,
    /// Neighbour offsets with `‖o‖_∞ <= ring`.
    pub ring: usize,
    /// Nodes with a coordinate below `alpha` are excluded.
    pub alpha: f64,
}

impl QuasipotentialParams {
    pub fn new(grid_step: f64) -> Self {
        Self {
            grid_step,
            time_grid: default_time_grid(),
            ring: 3,
            alpha: 2.0 * grid_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasipotentialField {
    pub grid: Grid,
    pub params: QuasipotentialParams,
    pub source: Vec<f64>,
    pub source_node: usize,
    /// `V(source, node)`; infinite for excluded or unreachable nodes.
    pub values: Vec<f64>,
}

impl QuasipotentialField {
    /// Value at the grid node nearest to `y`.
    pub fn value_at(&self, y: &[f64]) -> Option<f64> {
        self.grid.nearest(y).map(|k| self.values[k])
    }

    /// CSV with columns `x_1..x_d, value`.
    pub fn to_csv(&self) -> String {
        let d = self.grid.dim();
        let mut out: String = (1..=d).map(|i| format!("x_{i},")).collect();
        out.push_str("value\n");
        for (k, v) in self.values.iter().enumerate() {
            for c in self.grid.point(k) {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

/// Weighted digraph of straight-segment costs between nearby interior nodes.
struct CostGraph {
    grid: Grid,
    interior: Vec<bool>,
    adj: Vec<Vec<(u32, f64)>>,
}

/// `min_T T · L(mid, (v − u)/T)` over the time grid.
fn edge_cost(model: &ModelSpec, u: &[f64], v: &[f64], times: &[f64], f: &mut [f64], mid: &mut [f64]) -> f64 {
    for k in 0..u.len() {
        mid[k] = 0.5 * (u[k] + v[k]);
    }
    model.birth_into(mid, f);
    let mut best = f64::INFINITY;
    let mut beta = vec![0.0; u.len()];
    for &t in times {
        for k in 0..u.len() {
            beta[k] = (v[k] - u[k]) / t;
        }
        if let Rate::Finite(l) = local_rate_with_birth(f, mid, &beta) {
            best = best.min(t * l);
        }
    }
    best
}

impl CostGraph {
    fn build(model: &ModelSpec, region: &BoxRegion, params: &QuasipotentialParams) -> Result<Self> {
        if region.dim() != model.d() {
            return Err(Error::Precondition("box and model dimensions differ".into()));
        }
        if params.time_grid.is_empty() || params.time_grid.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Precondition("time grid must hold positive times".into()));
        }
        if params.ring == 0 {
            return Err(Error::Precondition("neighbour ring must be at least 1".into()));
        }
        let grid = Grid::new(region, params.grid_step)?;
        let cut = params.alpha - 1e-12;
        let interior: Vec<bool> = (0..grid.len()).map(|k| grid.point(k).iter().all(|v| *v >= cut)).collect();
        let offsets = ring_offsets(model.d(), params.ring);
        let adj = (0..grid.len())
            .into_par_iter()
            .map(|u| {
                if !interior[u] {
                    return Vec::new();
                }
                let d = model.d();
                let (mut f, mut mid) = (vec![0.0; d], vec![0.0; d]);
                let x = grid.point(u);
                offsets
                    .iter()
                    .filter_map(|o| grid.offset(u, o))
                    .filter(|&v| interior[v])
                    .filter_map(|v| {
                        let c = edge_cost(model, &x, &grid.point(v), &params.time_grid, &mut f, &mut mid);
                        c.is_finite().then_some((v as u32, c))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { grid, interior, adj })
    }

    fn petgraph(&self) -> (DiGraph<(), f64>, Vec<NodeIndex>) {
        let mut g = DiGraph::with_capacity(self.adj.len(), 0);
        let ids: Vec<NodeIndex> = (0..self.adj.len()).map(|_| g.add_node(())).collect();
        for (u, out) in self.adj.iter().enumerate() {
            for &(v, c) in out {
                g.add_edge(ids[u], ids[v as usize], c);
            }
        }
        (g, ids)
    }

    /// Nodes other than `s` at graph distance strictly below `cutoff`.
    fn ball(&self, s: usize, cutoff: f64) -> Vec<usize> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
            }
        }
        let mut best: HashMap<usize, f64> = HashMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(s, 0.0);
        heap.push(Item(0.0, s));
        let mut out = Vec::new();
        while let Some(Item(c, u)) = heap.pop() {
            if c > best[&u] {
                continue;
            }
            if u != s {
                out.push(u);
            }
            for &(v, w) in &self.adj[u] {
                let nc = c + w;
                let v = v as usize;
                if nc < cutoff && best.get(&v).is_none_or(|&b| nc < b) {
                    best.insert(v, nc);
                    heap.push(Item(nc, v));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Graph quasipotential `V(source, ·)` by Dijkstra over straight-segment edge costs.
pub fn quasipotential_field(
    model: &ModelSpec,
    region: &BoxRegion,
    source: &[f64],
    params: &QuasipotentialParams,
) -> Result<QuasipotentialField> {
    let graph = CostGraph::build(model, region, params)?;
    let s = graph
        .grid
        .nearest(source)
        .filter(|&k| graph.interior[k])
        .ok_or_else(|| Error::Precondition(format!("source {source:?} is not an interior grid point of the box")))?;
    let (g, ids) = graph.petgraph();
    let dist = dijkstra(&g, ids[s], None, |e| *e.weight());
    let mut values = vec![f64::INFINITY; graph.grid.len()];
    for (node, v) in dist {
        values[node.index()] = v;
    }
    Ok(QuasipotentialField {
        grid: graph.grid,
        params: params.clone(),
        source: source.to_vec(),
        source_node: s,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VClassReport {
    pub eps_v: f64,
    pub classes: Vec<RecurrenceClass>,
    pub dag_edges: Vec<(usize, usize)>,
}

impl VClassReport {
    pub fn quasiattractors(&self) -> impl Iterator<Item = &RecurrenceClass> {
        self.classes.iter().filter(|c| c.quasiattractor)
    }
}

/// Classes of mutual near-zero cost: `u → v` when the graph quasipotential is below `eps_v`.
pub fn v_chain_classes(
    model: &ModelSpec,
    region: &BoxRegion,
    params: &QuasipotentialParams,
    eps_v: f64,
) -> Result<VClassReport> {
    if !(eps_v > 0.0) {
        return Err(Error::Precondition(format!("eps_v must be positive, got {eps_v}")));
    }
    let graph = CostGraph::build(model, region, params)?;
    let near: Vec<Vec<usize>> = (0..graph.grid.len())
        .into_par_iter()
        .map(|u| if graph.interior[u] { graph.ball(u, eps_v) } else { Vec::new() })
        .collect();
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(near.len(), 0);
    let ids: Vec<NodeIndex> = (0..near.len()).map(|_| g.add_node(())).collect();
    for (u, out) in near.iter().enumerate() {
        for &v in out {
            g.add_edge(ids[u], ids[v], ());
        }
    }
    let comps: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| c.into_iter().map(|n| n.index()).collect())
        .collect();
    let excluded: Vec<bool> = graph.interior.iter().map(|b| !b).collect();
    let mut classes: Vec<RecurrenceClass> = merge_adjacent(&graph.grid, &excluded, comps)
        .into_iter()
        .map(|c| make_class(&graph.grid, c))
        .collect();
    classes.sort_by(|a, b| a.nodes[0].cmp(&b.nodes[0]));

    let reach = |starts: &[usize]| {
        let mut seen = vec![false; near.len()];
        let mut stack: Vec<usize> = starts.to_vec();
        for &s in starts {
            seen[s] = true;
        }
        while let Some(u) = stack.pop() {
            for &v in &near[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    let mut dag_edges = Vec::new();
    for i in 0..classes.len() {
        let seen = reach(&classes[i].nodes);
        for (j, other) in classes.iter().enumerate() {
            if i != j && other.nodes.iter().any(|&v| seen[v]) {
                dag_edges.push((i, j));
            }
        }
    }
    for (i, class) in classes.iter_mut().enumerate() {
        class.quasiattractor = !dag_edges.iter().any(|&(a, _)| a == i);
    }
    Ok(VClassReport {
        eps_v,
        classes,
        dag_edges,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMatch {
    pub v_class: usize,
    pub ap_class: usize,
    pub set_distance: f64,
    pub same_kind: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassComparison {
    pub tolerance: f64,
    pub matches: Vec<ClassMatch>,
    pub unmatched_v: Vec<usize>,
    pub unmatched_ap: Vec<usize>,
    /// Every class matched on both sides, with agreeing quasiattractor flags.
    pub consistent: bool,
}

fn set_distance(a: &RecurrenceClass, b: &RecurrenceClass) -> f64 {
    a.points
        .iter()
        .flat_map(|p| b.points.iter().map(move |q| distance(p, q)))
        .fold(f64::INFINITY, f64::min)
}

/// Pairs each V-class with the nearest AP class when their point sets come within `tolerance`.
pub fn compare_classes(v: &[RecurrenceClass], ap: &[RecurrenceClass], tolerance: f64) -> ClassComparison {
    let mut matches = Vec::new();
    let mut unmatched_v = Vec::new();
    let mut hit_ap = vec![false; ap.len()];
    for (i, vc) in v.iter().enumerate() {
        let best = ap
            .iter()
            .enumerate()
            .map(|(j, a)| (j, set_distance(vc, a)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((j, dist)) if dist <= tolerance => {
                hit_ap[j] = true;
                matches.push(ClassMatch {
                    v_class: i,
                    ap_class: j,
                    set_distance: dist,
                    same_kind: vc.quasiattractor == ap[j].quasiattractor,
                });
            }
            _ => unmatched_v.push(i),
        }
    }
    let unmatched_ap: Vec<usize> = (0..ap.len()).filter(|&j| !hit_ap[j]).collect();
    let mut ap_used = vec![0usize; ap.len()];
    for m in &matches {
        ap_used[m.ap_class] += 1;
    }
    let consistent = unmatched_v.is_empty()
        && unmatched_ap.is_empty()
        && matches.iter().all(|m| m.same_kind)
        && ap_used.iter().all(|&c| c == 1);
    ClassComparison {
        tolerance,
        matches,
        unmatched_v,
        unmatched_ap,
        consistent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::shipped;

    #[test]
    fn source_is_zero_and_values_nonnegative() {
        let m = shipped::beverton_holt_1d();
        let f = quasipotential_field(&m, &BoxRegion::new(vec![0.0], vec![3.0]), &[1.0], &QuasipotentialParams::new(0.05)).unwrap();
        assert_eq!(f.values[f.source_node], 0.0);
        assert!(f.values.iter().all(|v| *v >= 0.0));
        assert!(f.values[0].is_infinite());
        // uphill from the equilibrium toward larger x is cheap but not free
        assert!(f.value_at(&[2.0]).unwrap() > 0.0);
    }

    #[test]
    fn source_outside_rejected() {
        let m = shipped::beverton_holt_1d();
        let r = quasipotential_field(&m, &BoxRegion::new(vec![0.0], vec![3.0]), &[0.01], &QuasipotentialParams::new(0.05));
        assert!(r.is_err());
    }

    #[test]
    fn flow_direction_is_nearly_free() {
        let m = shipped::competition_ricker_2d();
        let params = QuasipotentialParams::new(0.05);
        let f = quasipotential_field(&m, &BoxRegion::cube(2, 0.0, 2.0), &[0.3, 1.5], &params).unwrap();
        let y = crate::flow::flow_map(&m, &[0.3, 1.5], 3.0, 0.01).unwrap();
        assert!(f.value_at(&y).unwrap() < 0.05);
    }

    #[test]
    fn beverton_holt_single_v_class() {
        let m = shipped::beverton_holt_1d();
        let params = QuasipotentialParams::new(0.02);
        let r = v_chain_classes(&m, &BoxRegion::new(vec![0.0], vec![3.0]), &params, 1e-3).unwrap();
        assert_eq!(r.classes.len(), 1);
        assert!(r.classes[0].quasiattractor);
        assert!(r.classes[0].distance_to(&[1.0]) < 0.02);
    }

    #[test]
    fn huge_threshold_gives_one_class() {
        let m = shipped::beverton_holt_1d();
        let params = QuasipotentialParams::new(0.1);
        let r = v_chain_classes(&m, &BoxRegion::new(vec![0.0], vec![2.0]), &params, 1e6).unwrap();
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].points.len(), 19);
    }
}

#[cfg(test)]
mod oracle_tests {
    use super::*;
    use crate::model::shipped;

    // ∫_{0.5}^{1} ln(2/(1+s)) ds in closed form.
    fn bh_oracle() -> f64 {
        let prim = |s: f64| s * 2f64.ln() - ((1.0 + s) * (1.0 + s).ln() - (1.0 + s));
        prim(1.0) - prim(0.5)
    }

    #[test]
    fn one_dimensional_value_matches_integral() {
        let m = shipped::beverton_holt_1d();
        let f = quasipotential_field(&m, &BoxRegion::new(vec![0.0], vec![2.0]), &[1.0], &QuasipotentialParams::new(0.01)).unwrap();
        let v = f.value_at(&[0.5]).unwrap();
        let o = bh_oracle();
        assert!((o - 0.06848).abs() < 1e-4);
        assert!((v - o).abs() < 0.1 * o, "graph {v} vs oracle {o}");
    }
}
