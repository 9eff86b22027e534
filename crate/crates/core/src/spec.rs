//! Specification graphs over finite point sets, their lift to extended
//! states, and the "meets the specification up to θ" test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantization::linf;
use crate::transition::FiniteSystem;

/// Nodes live in the coordinates selected by `axes` from the plant state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecGraph {
    pub nodes: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub initials: Vec<usize>,
    pub axes: Vec<usize>,
    #[serde(skip)]
    succ: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeetResult {
    pub n: usize,
    pub ok: bool,
    pub end_nodes: Vec<usize>,
}

impl SpecGraph {
    pub fn new(nodes: Vec<Vec<f64>>, edges: Vec<(usize, usize)>, initials: Vec<usize>, axes: Vec<usize>) -> Result<Self> {
        let n = nodes.len();
        if nodes.iter().any(|p| p.len() != axes.len()) {
            return Err(Error::InvalidSystem("spec node dimension differs from the observed axes".into()));
        }
        if edges.iter().any(|&(a, b)| a >= n || b >= n) || initials.iter().any(|&i| i >= n) {
            return Err(Error::InvalidSystem("spec edge or initial index out of range".into()));
        }
        let mut g = Self { nodes, edges, initials, axes, succ: Vec::new() };
        g.edges.sort_unstable();
        g.edges.dedup();
        g.initials.sort_unstable();
        g.initials.dedup();
        g.index();
        Ok(g)
    }

    fn index(&mut self) {
        self.succ = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            self.succ[a].push(b);
        }
    }

    /// Rebuilds adjacency after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.nodes, self.edges, self.initials, self.axes)
    }

    pub fn successors(&self, q: usize) -> &[usize] {
        &self.succ[q]
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.axes.iter().map(|&i| x[i]).collect()
    }

    /// Distance between a plant state and a node over the observed axes.
    pub fn distance(&self, x: &[f64], q: usize) -> f64 {
        self.axes.iter().zip(&self.nodes[q]).map(|(&i, v)| (x[i] - v).abs()).fold(0.0, f64::max)
    }

    /// Initial nodes within `theta` of `x`.
    pub fn initial_anchors(&self, x: &[f64], theta: f64) -> Vec<usize> {
        self.initials.iter().copied().filter(|&q| self.distance(x, q) <= theta).collect()
    }

    /// Frontier propagation: for every prefix length `N ∈ [n_min, n_max]`,
    /// the nodes `q_N` ending an edge path `q₀ → … → q_N` with `q₀` an anchor
    /// and every `samples[i−1]` within `theta` of `q_i`.
    pub fn meets(&self, samples: &[Vec<f64>], anchors: &[usize], theta: f64, n_min: usize, n_max: usize) -> Vec<MeetResult> {
        let mut front: Vec<usize> = anchors.to_vec();
        let mut mark = vec![false; self.nodes.len()];
        let mut out = Vec::with_capacity(n_max + 1 - n_min);
        for (i, s) in samples.iter().take(n_max).enumerate() {
            let mut next = Vec::new();
            for &q in &front {
                for &r in &self.succ[q] {
                    if !mark[r] && self.distance(s, r) <= theta {
                        mark[r] = true;
                        next.push(r);
                    }
                }
            }
            for &r in &next {
                mark[r] = false;
            }
            next.sort_unstable();
            front = next;
            let n = i + 1;
            if n >= n_min {
                out.push(MeetResult { n, ok: !front.is_empty(), end_nodes: front.clone() });
            }
        }
        out
    }

    /// Witness path for a whole sample sequence, `samples[0]` matched to an
    /// initial node; smallest node indices win ties.
    pub fn embed(&self, samples: &[Vec<f64>], tol: f64) -> Option<Vec<usize>> {
        let first = samples.first()?;
        let mut layers: Vec<Vec<(usize, usize)>> = Vec::with_capacity(samples.len());
        layers.push(self.initial_anchors(first, tol).into_iter().map(|q| (q, usize::MAX)).collect());
        if layers[0].is_empty() {
            return None;
        }
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for s in &samples[1..] {
            let prev = layers.last().unwrap();
            let mut next: Vec<(usize, usize)> = Vec::new();
            for (k, &(q, _)) in prev.iter().enumerate() {
                for &r in &self.succ[q] {
                    if pos[r] == usize::MAX && self.distance(s, r) <= tol {
                        pos[r] = next.len();
                        next.push((r, k));
                    }
                }
            }
            for &(r, _) in &next {
                pos[r] = usize::MAX;
            }
            if next.is_empty() {
                return None;
            }
            next.sort_unstable();
            layers.push(next);
        }
        let mut path = Vec::with_capacity(layers.len());
        let mut k = 0;
        for layer in layers.iter().rev() {
            let (q, back) = layer[k];
            path.push(q);
            k = back;
        }
        path.reverse();
        Some(path)
    }

    /// Polyline route through `waypoints` with nodes every `spacing` or less,
    /// `dwell` extra copies at every waypoint, edges to the next `lookahead`
    /// nodes, and a self-loop on the last node.
    pub fn route(waypoints: &[Vec<f64>], spacing: f64, dwell: usize, lookahead: usize, axes: Vec<usize>) -> Result<Self> {
        if waypoints.is_empty() || !(spacing > 0.0) || lookahead == 0 {
            return Err(Error::InvalidParameter("route needs waypoints, positive spacing and lookahead".into()));
        }
        let mut nodes = Vec::new();
        for (w, p) in waypoints.iter().enumerate() {
            for _ in 0..=dwell {
                nodes.push(p.clone());
            }
            if let Some(q) = waypoints.get(w + 1) {
                let len = linf(p, q);
                let pieces = (len / spacing - 1e-9).ceil().max(1.0) as usize;
                for k in 1..pieces {
                    let t = k as f64 / pieces as f64;
                    nodes.push(p.iter().zip(q).map(|(a, b)| a + t * (b - a)).collect());
                }
            }
        }
        let n = nodes.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..=(i + lookahead).min(n - 1) {
                edges.push((i, j));
            }
        }
        edges.push((n - 1, n - 1));
        Self::new(nodes, edges, vec![0], axes)
    }
}

/// The lift `Q`: bare initial nodes plus every edge path with length in
/// `[n_min, n_max]`, one dummy input, transitions joining the end of one path
/// to the start of the next along an edge. Returns the system and the node
/// path of every state.
pub fn lift_spec(g: &SpecGraph, n_min: usize, n_max: usize, state_ceiling: usize) -> Result<(FiniteSystem, Vec<Vec<usize>>)> {
    if n_min == 0 || n_min > n_max {
        return Err(Error::InvalidParameter(format!("need 1 ≤ n_min ≤ n_max, got {n_min}, {n_max}")));
    }
    let mut paths: Vec<Vec<usize>> = g.initials.iter().map(|&q| vec![q]).collect();
    let mut layer: Vec<Vec<usize>> = (0..g.nodes.len()).map(|q| vec![q]).collect();
    for len in 1..=n_max {
        if len >= n_min {
            paths.extend(layer.iter().cloned());
            if paths.len() > state_ceiling {
                return Err(Error::Budget(format!("specification lift exceeds {state_ceiling} states")));
            }
        }
        if len < n_max {
            layer = layer
                .iter()
                .flat_map(|p| g.successors(*p.last().unwrap()).iter().map(move |&r| {
                    let mut q = p.clone();
                    q.push(r);
                    q
                }))
                .collect();
        }
    }
    // bare initials coincide with length-1 paths when n_min = 1
    let mut sorted = paths.clone();
    sorted.sort();
    sorted.dedup();
    let init_paths: Vec<Vec<usize>> = g.initials.iter().map(|&q| vec![q]).collect();
    let initials = init_paths.iter().map(|p| sorted.binary_search(p).unwrap()).collect();
    let mut by_first: Vec<Vec<usize>> = vec![Vec::new(); g.nodes.len()];
    for (i, p) in sorted.iter().enumerate() {
        if p.len() >= n_min {
            by_first[p[0]].push(i);
        }
    }
    let mut trans = Vec::new();
    for (i, p) in sorted.iter().enumerate() {
        for &r in g.successors(*p.last().unwrap()) {
            for &j in &by_first[r] {
                trans.push((i, 0, j));
            }
        }
    }
    let outputs = sorted.iter().map(|p| p.iter().map(|&q| g.nodes[q].clone()).collect()).collect();
    Ok((FiniteSystem::new(outputs, initials, 1, trans)?, sorted))
}
