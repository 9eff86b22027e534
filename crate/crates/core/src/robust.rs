//! Lag-aware synthesis over whole quantization cells.
//!
//! The networked loop applies `C(y_k)` only from the next refresh on, so the
//! input held over an iteration was chosen one measurement earlier. A search
//! node therefore carries the cell, the held input and the spec frontier. Its
//! successors cover every cell that any state of the source cell can reach,
//! using a growth bound of the plant or of its δ-FC certificate.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::plant::{ControlSystem, FcCertificate};
use crate::quantization::Grid;
use crate::spec::SpecGraph;
use crate::synthesis::{synthesis_targets, Controller, Diagnostics, Limits, SynthesisParams};

/// `α̲⁻¹(e^{λt} ᾱ(r0))`: distance after time `t` between two trajectories
/// under the same input that started `r0` apart.
pub fn growth_radius(cert: &FcCertificate, r0: f64, t: f64) -> f64 {
    cert.alpha_lo.inverse((cert.lambda * t).exp() * cert.alpha_hi.eval(r0))
}

/// Componentwise spread after time `t` of a cell of half-width `half` under
/// `u`: the plant's own bound when it has one, else the certificate's.
pub fn cell_spread(plant: &ControlSystem, cert: &FcCertificate, half: f64, u: &[f64], t: f64) -> Vec<f64> {
    let n = plant.state_dim();
    plant.growth_bound(&vec![half; n], u, t).unwrap_or_else(|| vec![growth_radius(cert, half, t); n])
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RobustOptions {
    pub limits: Limits,
    /// Input held by the zero-order hold before the first refresh.
    pub initial_input: Vec<f64>,
}


#[derive(Debug, Clone)]
pub struct RobustOutcome {
    pub found: bool,
    pub controller: Controller,
    pub targets: Vec<usize>,
    pub diagnostics: Diagnostics,
    /// Distinct `(cell, held input, frontier)` nodes created.
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Fresh,
    Active,
    Done,
    Bad,
}

struct Node {
    cell: usize,
    held: usize,
    anchors: Vec<usize>,
    status: Status,
    /// Whether the node's own segment passes, once computed.
    viable: Option<bool>,
    depth: usize,
    /// Shallowest in-progress frame this node relies on, `NONE` once closed.
    low: usize,
}

/// Per-`N` successor cells and the spec frontier after `N` samples.
type Cover = Vec<(Vec<usize>, Vec<usize>)>;

struct Frame {
    node: usize,
    depth: usize,
    low: usize,
    cover: Cover,
    candidates: Vec<usize>,
    next_cand: usize,
    /// `(N index, cell index)` of the next child to check.
    cursor: Option<(usize, usize)>,
    log_mark: usize,
}

const NONE: usize = usize::MAX;

enum Step {
    Push(usize),
    Done(bool),
}

struct Engine<'a> {
    plant: &'a ControlSystem,
    spec: &'a SpecGraph,
    n_min: usize,
    n_max: usize,
    cert: &'a FcCertificate,
    eps: f64,
    tau: f64,
    limits: Limits,
    sg: Grid,
    ig: Grid,
    nodes: Vec<Node>,
    ids: HashMap<(usize, usize, Vec<usize>), usize>,
    by_pair: HashMap<(usize, usize), Vec<usize>>,
    entry: Vec<usize>,
    owner: Vec<usize>,
    log: Vec<usize>,
    diag: Diagnostics,
}

impl<'a> Engine<'a> {
    fn node_id(&mut self, cell: usize, held: usize, anchors: Vec<usize>) -> usize {
        if let Some(&id) = self.ids.get(&(cell, held, anchors.clone())) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(Node { cell, held, anchors: anchors.clone(), status: Status::Fresh, viable: None, depth: NONE, low: NONE });
        self.by_pair.entry((cell, held)).or_default().push(id);
        self.ids.insert((cell, held, anchors), id);
        id
    }

    fn slot(&self, id: usize) -> usize {
        self.nodes[id].cell
    }

    fn dependency(&self, id: usize) -> usize {
        let n = &self.nodes[id];
        match n.status {
            Status::Active => n.depth,
            _ => n.low,
        }
    }

    /// A settled or in-progress node at `(cell, held)` whose frontier is
    /// contained in `ends`.
    fn covering(&self, cell: usize, held: usize, ends: &[usize]) -> Option<usize> {
        self.by_pair.get(&(cell, held))?.iter().copied().find(|&id| {
            let n = &self.nodes[id];
            matches!(n.status, Status::Active | Status::Done) && n.anchors.iter().all(|q| ends.binary_search(q).is_ok())
        })
    }

    fn visit(&mut self) -> Result<()> {
        self.diag.visits += 1;
        if self.diag.visits > self.limits.max_visits {
            return Err(Error::Budget(format!("synthesis exceeded {} visits", self.limits.max_visits)));
        }
        Ok(())
    }

    /// Successor cells of a node under its held input, or `None` when some
    /// state of the cell may leave the state box or miss the spec.
    fn cover(&self, id: usize) -> Option<Cover> {
        let n = &self.nodes[id];
        let x0 = self.sg.point(n.cell);
        let u = self.ig.point(n.held);
        let samples = self.plant.samples_unchecked(&x0, &u, self.tau, self.n_max).ok()?;
        let half = 0.5 * self.sg.mu();
        let radii: Vec<Vec<f64>> = (1..=self.n_max).map(|k| cell_spread(self.plant, self.cert, half, &u, k as f64 * self.tau)).collect();
        let spread = radii.iter().flat_map(|r| self.spec.axes.iter().map(move |&a| r[a])).fold(0.0, f64::max);
        let tol = self.eps - spread;
        if tol <= 0.0 {
            return None;
        }
        let sb = self.plant.state_box();
        for (s, r) in samples.iter().zip(&radii) {
            let inside = s.iter().enumerate().all(|(i, v)| v - r[i] >= sb.lower()[i] && v + r[i] <= sb.upper()[i]);
            if !inside {
                return None;
            }
        }
        let meets = self.spec.meets(&samples, &n.anchors, tol, self.n_min, self.n_max);
        if meets.len() != self.n_max + 1 - self.n_min || meets.iter().any(|m| !m.ok) {
            return None;
        }
        Some(
            meets
                .into_iter()
                .map(|m| {
                    let (s, r) = (&samples[m.n - 1], &radii[m.n - 1]);
                    let lo: Vec<f64> = s.iter().zip(r).map(|(v, d)| v - d).collect();
                    let hi: Vec<f64> = s.iter().zip(r).map(|(v, d)| v + d).collect();
                    (self.sg.cells_meeting(&lo, &hi), m.end_nodes)
                })
                .collect(),
        )
    }

    fn viable(&mut self, id: usize) -> bool {
        if let Some(v) = self.nodes[id].viable {
            return v;
        }
        let v = self.cover(id).is_some();
        self.nodes[id].viable = Some(v);
        v
    }

    /// Cheap look-ahead: every successor of the candidate `v` is covered,
    /// or fresh with a passing segment.
    fn precheck(&mut self, f: &Frame, v: usize) -> bool {
        for (cells, ends) in &f.cover {
            for &c in cells {
                if self.covering(c, v, ends).is_some() {
                    continue;
                }
                let id = self.node_id(c, v, ends.clone());
                if self.nodes[id].status != Status::Fresh {
                    return false;
                }
                if !self.viable(id) {
                    self.nodes[id].status = Status::Bad;
                    return false;
                }
            }
        }
        true
    }

    fn rollback(&mut self, mark: usize, depth: usize) {
        let tail = self.log.split_off(mark);
        for id in tail {
            let n = &self.nodes[id];
            if n.status != Status::Done {
                continue;
            }
            if n.low == NONE || n.low > depth {
                self.log.push(id);
            } else {
                self.reset(id);
            }
        }
        self.diag.rollbacks += 1;
    }

    fn reset(&mut self, id: usize) {
        let cell = self.slot(id);
        if self.owner[cell] == id {
            self.entry[cell] = NONE;
            self.owner[cell] = NONE;
        }
        let n = &mut self.nodes[id];
        n.status = Status::Fresh;
        n.low = NONE;
    }

    fn settle(&mut self, mark: usize, depth: usize, low: usize) {
        let to = if low < depth { low } else { NONE };
        for &id in &self.log[mark..] {
            let l = self.nodes[id].low;
            if l != NONE && l >= depth {
                self.nodes[id].low = to;
            }
        }
    }

    fn open(&mut self, id: usize, depth: usize) -> Frame {
        let n = &mut self.nodes[id];
        n.status = Status::Active;
        n.depth = depth;
        n.low = depth;
        self.log.push(id);
        let log_mark = self.log.len();
        Frame { node: id, depth, low: NONE, cover: Vec::new(), candidates: Vec::new(), next_cand: 0, cursor: None, log_mark }
    }

    fn start(&mut self, f: &mut Frame) -> bool {
        let Some(cover) = self.cover(f.node) else {
            return false;
        };
        f.cover = cover;
        let cell = self.slot(f.node);
        f.candidates = if self.entry[cell] == NONE { self.ranked_inputs(f.node, &f.cover) } else { vec![self.entry[cell]] };
        true
    }

    /// Inputs ordered by how far along the spec graph the nominal
    /// continuation from the latest sample gets; infeasible ones last, ties by
    /// index.
    fn ranked_inputs(&self, id: usize, cover: &Cover) -> Vec<usize> {
        let n = &self.nodes[id];
        let Ok(samples) = self.plant.samples_unchecked(&self.sg.point(n.cell), &self.ig.point(n.held), self.tau, self.n_max) else {
            return (0..self.ig.len()).collect();
        };
        let (last, ends) = (&samples[self.n_max - 1], &cover[cover.len() - 1].1);
        let half = 0.5 * self.sg.mu();
        let mut scored: Vec<(i64, usize)> = (0..self.ig.len())
            .map(|v| {
                let u = self.ig.point(v);
                let r = cell_spread(self.plant, self.cert, half, &u, self.n_max as f64 * self.tau);
                let tol = self.eps - self.spec.axes.iter().map(|&a| r[a]).fold(0.0, f64::max);
                let score = match self.plant.samples_unchecked(last, &u, self.tau, self.n_max) {
                    Ok(next) if tol > 0.0 => {
                        let m = self.spec.meets(&next, ends, tol, self.n_min, self.n_max);
                        if m.iter().all(|m| m.ok) {
                            m.iter().flat_map(|m| m.end_nodes.iter().copied()).max().map_or(-1, |q| q as i64)
                        } else {
                            -1
                        }
                    }
                    _ => -1,
                };
                (-score, v)
            })
            .collect();
        scored.sort();
        scored.into_iter().map(|(_, v)| v).collect()
    }

    fn fail_candidate(&mut self, f: &mut Frame) {
        f.cursor = None;
        self.rollback(f.log_mark, f.depth);
        let cell = self.slot(f.node);
        if self.owner[cell] == f.node {
            self.entry[cell] = NONE;
            self.owner[cell] = NONE;
        }
        f.low = NONE;
    }

    fn step(&mut self, f: &mut Frame) -> Step {
        loop {
            if let Some((ni, ci)) = f.cursor {
                if ni == f.cover.len() {
                    return Step::Done(true);
                }
                let (cells, ends) = &f.cover[ni];
                if ci == cells.len() {
                    f.cursor = Some((ni + 1, 0));
                    continue;
                }
                f.cursor = Some((ni, ci + 1));
                let v = f.candidates[f.next_cand - 1];
                let c = cells[ci];
                if let Some(other) = self.covering(c, v, ends) {
                    self.diag.reuse_events += 1;
                    f.low = f.low.min(self.dependency(other));
                    continue;
                }
                let ends = ends.clone();
                let child = self.node_id(c, v, ends);
                if self.nodes[child].status == Status::Fresh {
                    return Step::Push(child);
                }
                // bad, or in progress under a frontier not contained in `ends`
                self.fail_candidate(f);
                continue;
            }
            if f.next_cand == f.candidates.len() {
                self.nodes[f.node].status = Status::Bad;
                return Step::Done(false);
            }
            let v = f.candidates[f.next_cand];
            f.next_cand += 1;
            self.diag.candidates += 1;
            if !self.precheck(f, v) {
                continue;
            }
            let cell = self.slot(f.node);
            if self.entry[cell] == NONE {
                self.entry[cell] = v;
                self.owner[cell] = f.node;
            } else {
                let o = self.owner[cell];
                f.low = f.low.min(self.dependency(o));
            }
            f.cursor = Some((0, 0));
        }
    }

    fn build(&mut self, root: usize) -> Result<bool> {
        self.visit()?;
        let mut first = self.open(root, 0);
        if !self.start(&mut first) {
            self.nodes[root].status = Status::Bad;
            self.log.pop();
            return Ok(false);
        }
        let mut stack = vec![first];
        let mut ret: Option<(bool, usize)> = None;
        while let Some(mut f) = stack.pop() {
            if let Some((ok, low)) = ret.take() {
                if ok {
                    f.low = f.low.min(low);
                } else {
                    self.fail_candidate(&mut f);
                }
            }
            match self.step(&mut f) {
                Step::Push(child) => {
                    stack.push(f);
                    if stack.len() >= self.limits.max_depth {
                        return Err(Error::Budget(format!("synthesis exceeded recursion depth {}", self.limits.max_depth)));
                    }
                    self.visit()?;
                    self.diag.peak_depth = self.diag.peak_depth.max(stack.len() + 1);
                    let mut g = self.open(child, stack.len());
                    if self.start(&mut g) {
                        stack.push(g);
                    } else {
                        self.nodes[child].status = Status::Bad;
                        self.log.pop();
                        ret = Some((false, NONE));
                    }
                }
                Step::Done(ok) => {
                    let mut low = NONE;
                    if ok {
                        self.nodes[f.node].status = Status::Done;
                        let mark = f.log_mark - 1;
                        self.settle(mark, f.depth, f.low);
                        if f.low < f.depth {
                            low = f.low;
                        }
                    }
                    ret = Some((ok, low));
                }
            }
        }
        Ok(ret.is_some_and(|r| r.0))
    }
}

/// Lag-aware synthesis: every state of every reached cell, under every
/// admissible hold sequence, stays within `ε` of the spec and lands in cells
/// whose held input has been verified.
pub fn synthesize_robust(
    plant: &ControlSystem,
    cert: &FcCertificate,
    spec: &SpecGraph,
    n_bounds: (usize, usize),
    p: &SynthesisParams,
    opts: &RobustOptions,
) -> Result<RobustOutcome> {
    let (n_min, n_max) = n_bounds;
    if n_min == 0 || n_min > n_max {
        return Err(Error::InvalidParameter(format!("need 1 ≤ N_min ≤ N_max, got {n_min}, {n_max}")));
    }
    if spec.axes.iter().any(|&a| a >= plant.state_dim()) {
        return Err(Error::InvalidSystem("spec axes exceed the plant state dimension".into()));
    }
    let sg = Grid::new(plant.state_box().clone(), p.mu_x)?;
    let ig = Grid::new(plant.input_box().clone(), p.mu_u)?;
    let u0 = if opts.initial_input.is_empty() { vec![0.0; plant.input_dim()] } else { opts.initial_input.clone() };
    let held0 = ig
        .quantize(&u0)
        .filter(|&i| crate::quantization::linf(&ig.point(i), &u0) <= 1e-9)
        .ok_or_else(|| Error::InvalidParameter(format!("initial input {u0:?} is not an input grid point")))?;
    let n = sg.len();
    let targets = synthesis_targets(plant, spec, &sg, p.theta);
    let mut e = Engine {
        plant,
        spec,
        n_min,
        n_max,
        cert,
        eps: p.eps,
        tau: p.tau,
        limits: opts.limits,
        sg: sg.clone(),
        ig: ig.clone(),
        nodes: Vec::new(),
        ids: HashMap::new(),
        by_pair: HashMap::new(),
        entry: vec![NONE; n],
        owner: vec![NONE; n],
        log: Vec::new(),
        diag: Diagnostics::default(),
    };
    let mut found = !targets.is_empty();
    for &x in &targets {
        let anchors = spec.initial_anchors(&sg.point(x), p.theta);
        if e.covering(x, held0, &anchors).is_some() {
            e.diag.reuse_events += 1;
            continue;
        }
        let root = e.node_id(x, held0, anchors);
        if e.nodes[root].status == Status::Bad || !e.build(root)? {
            found = false;
            break;
        }
    }
    let table: BTreeMap<usize, usize> = if found { (0..n).filter(|&x| e.entry[x] != NONE).map(|x| (x, e.entry[x])).collect() } else { BTreeMap::new() };
    let bad: BTreeSet<usize> = e.nodes.iter().filter(|nd| nd.status == Status::Bad && !table.contains_key(&nd.cell)).map(|nd| nd.cell).collect();
    let mut controller = Controller::from_parts(sg, ig, table, bad)?;
    controller.header = vec![
        ("eps".into(), format!("{:?}", p.eps)),
        ("theta".into(), format!("{:?}", p.theta)),
        ("eta".into(), format!("{:?}", p.eta)),
        ("tau".into(), format!("{:?}", p.tau)),
        ("n_min".into(), n_min.to_string()),
        ("n_max".into(), n_max.to_string()),
        ("mode".into(), "robust".into()),
    ];
    Ok(RobustOutcome { found, controller, targets, diagnostics: e.diag, nodes: e.nodes.len() })
}
