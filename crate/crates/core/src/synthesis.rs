//! Controller synthesis: the maximal controller over an explicit symbolic
//! model, and the integrated depth-first construction that never builds the
//! model.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::plant::{ControlSystem, FcCertificate};
use crate::quantization::{linf, Grid, Rect};
use crate::spec::SpecGraph;
use crate::transition::{chain_distance, FiniteSystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisParams {
    pub eps: f64,
    pub theta: f64,
    pub mu_x: f64,
    pub mu_u: f64,
    pub eta: f64,
    pub tau: f64,
}

/// The first violated solving inequality, if any.
pub fn violated_inequality(p: &SynthesisParams, cert: &FcCertificate, state_box: &Rect) -> Option<&'static str> {
    if !(p.eps > 0.0 && p.theta > 0.0 && p.mu_x > 0.0 && p.mu_u > 0.0 && p.eta > 0.0 && p.tau > 0.0) {
        return Some("all parameters positive");
    }
    if p.mu_x + p.theta > p.eps {
        return Some("μx + θ ≤ ε");
    }
    let m = state_box.min_span().min(cert.alpha_hi.inverse(cert.alpha_lo.eval(p.theta)));
    if p.mu_x > m {
        return Some("μx ≤ min{μ̂_X, ᾱ⁻¹(α̲(θ))}");
    }
    if m > p.theta {
        return Some("min{μ̂_X, ᾱ⁻¹(α̲(θ))} ≤ θ");
    }
    if p.theta > p.eta {
        return Some("θ ≤ η");
    }
    None
}

pub fn check_synthesis_params(p: &SynthesisParams, cert: &FcCertificate, state_box: &Rect) -> bool {
    violated_inequality(p, cert, state_box).is_none()
}

/// Memoryless controller `[X]_μx → [U]_μu` plus the set of states known to
/// admit no input.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    state_grid: Grid,
    input_grid: Grid,
    table: BTreeMap<usize, usize>,
    bad: BTreeSet<usize>,
    pub header: Vec<(String, String)>,
}

impl Controller {
    pub fn new(state_grid: Grid, input_grid: Grid) -> Self {
        Self { state_grid, input_grid, table: BTreeMap::new(), bad: BTreeSet::new(), header: Vec::new() }
    }

    pub fn from_parts(state_grid: Grid, input_grid: Grid, table: BTreeMap<usize, usize>, bad: BTreeSet<usize>) -> Result<Self> {
        if table.keys().any(|k| bad.contains(k)) {
            return Err(Error::InvalidSystem("controller table and bad set overlap".into()));
        }
        if table.iter().any(|(&k, &v)| k >= state_grid.len() || v >= input_grid.len()) || bad.iter().any(|&b| b >= state_grid.len()) {
            return Err(Error::InvalidSystem("controller entry outside its grids".into()));
        }
        Ok(Self { state_grid, input_grid, table, bad, header: Vec::new() })
    }

    pub fn state_grid(&self) -> &Grid {
        &self.state_grid
    }
    pub fn input_grid(&self) -> &Grid {
        &self.input_grid
    }
    pub fn table(&self) -> &BTreeMap<usize, usize> {
        &self.table
    }
    pub fn bad(&self) -> &BTreeSet<usize> {
        &self.bad
    }
    pub fn len(&self) -> usize {
        self.table.len()
    }
    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
    pub fn get(&self, x: usize) -> Option<usize> {
        self.table.get(&x).copied()
    }

    /// Input for the measurement `y`: its own entry, else the entry of the
    /// nearest domain state within `theta` (ties to the smaller index).
    pub fn lookup(&self, y: usize, theta: f64) -> Option<(usize, usize)> {
        if let Some(u) = self.get(y) {
            return Some((y, u));
        }
        let p = self.state_grid.point(y);
        self.state_grid
            .ball(&p, theta)
            .into_iter()
            .filter_map(|c| self.get(c).map(|u| (linf(&p, &self.state_grid.point(c)), c, u)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, c, u)| (c, u))
    }

    pub fn input_point(&self, u: usize) -> Vec<f64> {
        self.input_grid.point(u)
    }

    /// Text form: header, one `k₁ … k_n -> j` line per entry with `k` the
    /// integer grid coordinates and `j` the input index, then the bad set.
    pub fn to_text(&self) -> String {
        let mut s = String::from("symctl-controller 1\n");
        let fmt_v = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "state_lower {}", fmt_v(self.state_grid.bounds().lower()));
        let _ = writeln!(s, "state_upper {}", fmt_v(self.state_grid.bounds().upper()));
        let _ = writeln!(s, "mu_x {:?}", self.state_grid.mu());
        let _ = writeln!(s, "input_lower {}", fmt_v(self.input_grid.bounds().lower()));
        let _ = writeln!(s, "input_upper {}", fmt_v(self.input_grid.bounds().upper()));
        let _ = writeln!(s, "mu_u {:?}", self.input_grid.mu());
        for (k, v) in &self.header {
            let _ = writeln!(s, "param {k} {v}");
        }
        let _ = writeln!(s, "entries {}", self.table.len());
        for (&x, &u) in &self.table {
            let m: Vec<String> = self.state_grid.multi_of(x).iter().map(|k| k.to_string()).collect();
            let _ = writeln!(s, "{} -> {u}", m.join(" "));
        }
        let _ = writeln!(s, "bad {}", self.bad.len());
        for &x in &self.bad {
            let m: Vec<String> = self.state_grid.multi_of(x).iter().map(|k| k.to_string()).collect();
            let _ = writeln!(s, "{}", m.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let (no, first) = lines.next().ok_or(Error::Parse { line: 0, msg: "empty controller file".into() })?;
        if first.trim() != "symctl-controller 1" {
            return Err(perr(no, "missing `symctl-controller 1` header"));
        }
        let mut field = |key: &str| -> Result<(usize, Vec<f64>)> {
            let (no, l) = lines.next().ok_or(Error::Parse { line: 0, msg: format!("missing `{key}`") })?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(perr(no, &format!("expected `{key}`")));
            }
            let v = it.map(str::parse).collect::<std::result::Result<Vec<f64>, _>>().map_err(|_| perr(no, "bad number"))?;
            Ok((no, v))
        };
        let (_, sl) = field("state_lower")?;
        let (_, su) = field("state_upper")?;
        let (_, mx) = field("mu_x")?;
        let (_, il) = field("input_lower")?;
        let (_, iu) = field("input_upper")?;
        let (no, mu) = field("mu_u")?;
        let (Some(&mx), Some(&mu)) = (mx.first(), mu.first()) else {
            return Err(perr(no, "missing grid step"));
        };
        let state_grid = Grid::new(Rect::new(sl, su)?, mx)?;
        let input_grid = Grid::new(Rect::new(il, iu)?, mu)?;
        let mut header = Vec::new();
        let mut table = BTreeMap::new();
        let mut bad = BTreeSet::new();
        let mut section = "";
        for (no, l) in lines {
            let l = l.trim();
            if let Some(rest) = l.strip_prefix("param ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                header.push((k.to_string(), v.to_string()));
                continue;
            }
            if l.starts_with("entries ") {
                section = "entries";
                continue;
            }
            if l.starts_with("bad ") {
                section = "bad";
                continue;
            }
            let multi = |s: &str| -> Result<usize> {
                let m = s.split_whitespace().map(str::parse).collect::<std::result::Result<Vec<i64>, _>>().map_err(|_| perr(no, "bad grid index"))?;
                if m.len() != state_grid.dim() {
                    return Err(perr(no, "grid index has wrong dimension"));
                }
                state_grid.flat_of(&m).ok_or_else(|| perr(no, "grid index outside the state grid"))
            };
            match section {
                "entries" => {
                    let (lhs, rhs) = l.split_once("->").ok_or_else(|| perr(no, "expected `k … -> j`"))?;
                    let u: usize = rhs.trim().parse().map_err(|_| perr(no, "bad input index"))?;
                    table.insert(multi(lhs)?, u);
                }
                "bad" => {
                    bad.insert(multi(l)?);
                }
                _ => return Err(perr(no, "unexpected line before `entries`")),
            }
        }
        let mut c = Self::from_parts(state_grid, input_grid, table, bad)?;
        c.header = header;
        Ok(c)
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub max_visits: u64,
    pub max_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_visits: 10_000_000, max_depth: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Calls of the recursive step.
    pub visits: u64,
    /// Calls on a state already visited within its current entry epoch.
    pub revisits: u64,
    /// Successes through an existing domain entry within θ.
    pub reuse_events: u64,
    /// Reuses of an entry recorded for spec nodes disjoint from the current ones.
    pub cross_anchor_reuses: u64,
    pub candidates: u64,
    pub rollbacks: u64,
    pub peak_depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComplexityReport {
    pub controller_entries: usize,
    pub bad_entries: usize,
    pub peak_extended_states: usize,
}

impl ComplexityReport {
    /// Integers stored: one grid index and one input index per entry, one per
    /// bad state, and each extended state's chain plus labels.
    pub fn integers(&self) -> usize {
        2 * self.controller_entries + self.bad_entries + self.peak_extended_states
    }
}

#[derive(Debug, Clone)]
pub struct IntegratedOutcome {
    pub found: bool,
    pub controller: Controller,
    pub targets: Vec<usize>,
    pub diagnostics: Diagnostics,
}

impl IntegratedOutcome {
    pub fn complexity(&self) -> ComplexityReport {
        ComplexityReport {
            controller_entries: self.controller.len(),
            bad_entries: self.controller.bad().len(),
            peak_extended_states: 0,
        }
    }
}

/// Which existing controller entries a reached point may fall back on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReusePolicy {
    /// Any domain state within θ, regardless of the spec nodes it was
    /// synthesized for.
    Literal,
    /// A domain state within θ whose recorded spec nodes all lie in the
    /// current frontier.
    #[default]
    Anchored,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegratedOptions {
    pub limits: Limits,
    pub reuse: ReusePolicy,
    /// Follow the pseudocode literally: clear the whole controller before each
    /// top-level candidate, stop at the first initial state that succeeds, and
    /// on failure drop only the failing state's own entry.
    pub strict_pseudocode: bool,
}

struct Candidate {
    u: usize,
    /// `(sample, end nodes)` for every `N ∈ [n_min, n_max]`.
    steps: Vec<(Vec<f64>, Vec<usize>)>,
    next_step: usize,
    log_mark: usize,
}

struct Frame {
    x: usize,
    anchors: Vec<usize>,
    next_u: usize,
    top: bool,
    depth: usize,
    /// Shallowest in-progress frame whose tentative entry this subtree relies on.
    low: usize,
    cand: Option<Candidate>,
}

struct Engine<'a> {
    plant: &'a ControlSystem,
    spec: &'a SpecGraph,
    p: SynthesisParams,
    n_min: usize,
    n_max: usize,
    opts: IntegratedOptions,
    sg: Grid,
    ig: Grid,
    entry: Vec<usize>,
    entry_anchors: Vec<Vec<usize>>,
    log: Vec<usize>,
    /// Depth of the frame currently deciding each state, `NONE` when idle.
    active: Vec<usize>,
    /// Shallowest in-progress frame an entry relies on, `NONE` once closed.
    entry_low: Vec<usize>,
    bad: Vec<bool>,
    epoch: Vec<u32>,
    seen_epoch: Vec<u32>,
    diag: Diagnostics,
}

const NONE: usize = usize::MAX;
const UNSEEN: u32 = u32::MAX;

enum Step {
    Push(usize, Vec<usize>),
    Done(bool),
}

impl<'a> Engine<'a> {
    fn reusable_near(&self, p: &[f64], ends: &[usize]) -> Option<usize> {
        self.sg.ball(p, self.p.theta).into_iter().find(|&c| self.reusable(c, ends))
    }

    fn reusable(&self, c: usize, ends: &[usize]) -> bool {
        self.entry[c] != NONE
            && match self.opts.reuse {
                ReusePolicy::Literal => true,
                ReusePolicy::Anchored => self.entry_anchors[c].iter().all(|q| ends.binary_search(q).is_ok()),
            }
    }

    fn set_entry(&mut self, x: usize, u: usize, anchors: &[usize]) {
        if self.entry[x] == NONE {
            self.log.push(x);
        }
        self.entry[x] = u;
        self.entry_anchors[x] = anchors.to_vec();
    }

    fn clear_entry(&mut self, x: usize) {
        self.entry[x] = NONE;
        self.entry_anchors[x].clear();
        self.epoch[x] += 1;
    }

    /// Withdraws entries logged after `mark` that rely on a frame at depth
    /// `depth` or shallower; closed entries survive.
    fn rollback(&mut self, mark: usize, depth: usize) {
        let tail = self.log.split_off(mark);
        for x in tail {
            if self.entry[x] == NONE {
                continue;
            }
            if self.entry_low[x] == NONE || self.entry_low[x] > depth {
                self.log.push(x);
            } else {
                self.clear_entry(x);
            }
        }
        self.diag.rollbacks += 1;
    }

    /// Rewrites dependencies of the entries logged after `mark` once the frame
    /// at `depth` has succeeded with dependency `low`.
    fn settle(&mut self, mark: usize, depth: usize, low: usize) {
        let to = if low < depth { low } else { NONE };
        for &x in &self.log[mark..] {
            let l = self.entry_low[x];
            if l != NONE && l >= depth {
                self.entry_low[x] = to;
            }
        }
    }

    fn dependency(&self, x: usize) -> usize {
        if self.active[x] != NONE {
            self.active[x]
        } else {
            self.entry_low[x]
        }
    }

    fn clear_all(&mut self) {
        for x in std::mem::take(&mut self.log) {
            if self.entry[x] != NONE {
                self.clear_entry(x);
            }
        }
    }

    fn visit(&mut self, x: usize) -> Result<()> {
        self.diag.visits += 1;
        if self.seen_epoch[x] == self.epoch[x] {
            self.diag.revisits += 1;
        }
        self.seen_epoch[x] = self.epoch[x];
        if self.diag.visits > self.opts.limits.max_visits {
            return Err(Error::Budget(format!("synthesis exceeded {} visits", self.opts.limits.max_visits)));
        }
        Ok(())
    }

    /// Samples `x(τ), …, x(N_max τ)` from the grid point `x` under `u`, and the
    /// spec frontier per `N`; `None` when the flow leaves the state box or
    /// some `N` fails to meet the specification.
    fn evaluate(&self, x: usize, u: usize, anchors: &[usize]) -> Option<Vec<(Vec<f64>, Vec<usize>)>> {
        let x0 = self.sg.point(x);
        let uv = self.ig.point(u);
        let samples = match self.plant.samples_unchecked(&x0, &uv, self.p.tau, self.n_max) {
            Ok(s) => s,
            Err(_) => return None,
        };
        let meets = self.spec.meets(&samples, anchors, self.p.theta, self.n_min, self.n_max);
        if meets.len() != self.n_max + 1 - self.n_min || meets.iter().any(|m| !m.ok) {
            return None;
        }
        Some(meets.into_iter().map(|m| (samples[m.n - 1].clone(), m.end_nodes)).collect())
    }

    /// Advances the top frame by one decision.
    fn step(&mut self, f: &mut Frame) -> Result<Step> {
        loop {
            if let Some(c) = f.cand.as_mut() {
                if c.next_step == c.steps.len() {
                    return Ok(Step::Done(true));
                }
                let (sample, ends) = &c.steps[c.next_step];
                c.next_step += 1;
                if let Some(xc) = self.reusable_near(sample, ends) {
                    self.diag.reuse_events += 1;
                    f.low = f.low.min(self.dependency(xc));
                    if !self.entry_anchors[xc].is_empty() && !self.entry_anchors[xc].iter().any(|q| ends.contains(q)) {
                        self.diag.cross_anchor_reuses += 1;
                    }
                    continue;
                }
                match self.sg.quantize(sample) {
                    Some(q) if !self.bad[q] && self.entry[q] == NONE => return Ok(Step::Push(q, ends.clone())),
                    _ => {
                        self.fail_candidate(f);
                        continue;
                    }
                }
            }
            // pick the next candidate input
            if f.next_u == self.ig.len() {
                if !f.top {
                    self.bad[f.x] = true;
                }
                return Ok(Step::Done(false));
            }
            let u = f.next_u;
            f.next_u += 1;
            self.diag.candidates += 1;
            if f.top && self.opts.strict_pseudocode {
                self.clear_all();
            }
            let log_mark = self.log.len();
            if !(f.top && self.opts.strict_pseudocode) {
                self.set_entry(f.x, u, &f.anchors);
                self.entry_low[f.x] = f.depth;
            }
            match self.evaluate(f.x, u, &f.anchors) {
                Some(steps) => f.cand = Some(Candidate { u, steps, next_step: 0, log_mark }),
                None => {
                    f.cand = Some(Candidate { u, steps: Vec::new(), next_step: 0, log_mark });
                    self.fail_candidate(f);
                }
            }
        }
    }

    fn fail_candidate(&mut self, f: &mut Frame) {
        let c = f.cand.take().expect("active candidate");
        if self.opts.strict_pseudocode {
            if self.entry[f.x] != NONE && !f.top {
                self.clear_entry(f.x);
            }
        } else {
            self.rollback(c.log_mark, f.depth);
            if self.entry[f.x] != NONE {
                self.clear_entry(f.x);
            }
            f.low = NONE;
        }
    }

    /// Runs the recursive step from `x` to completion.
    fn build_tree(&mut self, x: usize, anchors: Vec<usize>, top: bool) -> Result<bool> {
        self.visit(x)?;
        self.active[x] = 0;
        let mut stack = vec![Frame { x, anchors, next_u: 0, top, depth: 0, low: NONE, cand: None }];
        let mut ret: Option<(bool, usize)> = None;
        while let Some(mut f) = stack.pop() {
            if let Some((ok, low)) = ret.take() {
                if ok {
                    f.low = f.low.min(low);
                } else {
                    self.fail_candidate(&mut f);
                }
            }
            match self.step(&mut f)? {
                Step::Push(q, ends) => {
                    stack.push(f);
                    if stack.len() >= self.opts.limits.max_depth {
                        return Err(Error::Budget(format!("synthesis exceeded recursion depth {}", self.opts.limits.max_depth)));
                    }
                    self.diag.peak_depth = self.diag.peak_depth.max(stack.len() + 1);
                    self.visit(q)?;
                    let depth = stack.len();
                    self.active[q] = depth;
                    stack.push(Frame { x: q, anchors: ends, next_u: 0, top: false, depth, low: NONE, cand: None });
                }
                Step::Done(ok) => {
                    self.active[f.x] = NONE;
                    let mut low = NONE;
                    if ok {
                        let c = f.cand.as_ref().unwrap();
                        if f.top && self.opts.strict_pseudocode {
                            self.set_entry(f.x, c.u, &f.anchors);
                        } else {
                            self.settle(c.log_mark, f.depth, f.low);
                        }
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

/// Initial grid states within `θ` of some spec initial node.
pub fn synthesis_targets(plant: &ControlSystem, spec: &SpecGraph, sg: &Grid, theta: f64) -> Vec<usize> {
    (0..sg.len())
        .filter(|&i| {
            let p = sg.point(i);
            plant.init_box().contains(&p) && !spec.initial_anchors(&p, theta).is_empty()
        })
        .collect()
}

pub fn synthesize_integrated(
    plant: &ControlSystem,
    spec: &SpecGraph,
    n_bounds: (usize, usize),
    p: &SynthesisParams,
    opts: IntegratedOptions,
) -> Result<IntegratedOutcome> {
    let (n_min, n_max) = n_bounds;
    if n_min == 0 || n_min > n_max {
        return Err(Error::InvalidParameter(format!("need 1 ≤ N_min ≤ N_max, got {n_min}, {n_max}")));
    }
    if spec.axes.iter().any(|&a| a >= plant.state_dim()) {
        return Err(Error::InvalidSystem("spec axes exceed the plant state dimension".into()));
    }
    let sg = Grid::new(plant.state_box().clone(), p.mu_x)?;
    let ig = Grid::new(plant.input_box().clone(), p.mu_u)?;
    let n = sg.len();
    let targets = synthesis_targets(plant, spec, &sg, p.theta);
    let mut e = Engine {
        plant,
        spec,
        p: *p,
        n_min,
        n_max,
        opts,
        sg: sg.clone(),
        ig: ig.clone(),
        entry: vec![NONE; n],
        entry_anchors: vec![Vec::new(); n],
        log: Vec::new(),
        active: vec![NONE; n],
        entry_low: vec![NONE; n],
        bad: vec![false; n],
        epoch: vec![0; n],
        seen_epoch: vec![UNSEEN; n],
        diag: Diagnostics::default(),
    };
    let mut found = !targets.is_empty();
    if opts.strict_pseudocode {
        found = false;
        for &x in &targets {
            let anchors = spec.initial_anchors(&sg.point(x), p.theta);
            if e.build_tree(x, anchors, true)? {
                found = true;
                break;
            }
        }
    } else {
        for &x in &targets {
            let anchors = spec.initial_anchors(&sg.point(x), p.theta);
            if e.entry[x] != NONE {
                e.diag.reuse_events += 1;
                if e.reusable(x, &anchors) {
                    continue;
                }
                found = false;
                break;
            }
            if !e.build_tree(x, anchors, true)? {
                found = false;
                break;
            }
        }
    }
    let table: BTreeMap<usize, usize> = if found { (0..n).filter(|&x| e.entry[x] != NONE).map(|x| (x, e.entry[x])).collect() } else { BTreeMap::new() };
    let bad: BTreeSet<usize> = (0..n).filter(|&x| e.bad[x] && !table.contains_key(&x)).collect();
    let mut controller = Controller::from_parts(sg, ig, table, bad)?;
    controller.header = vec![
        ("eps".into(), format!("{:?}", p.eps)),
        ("theta".into(), format!("{:?}", p.theta)),
        ("eta".into(), format!("{:?}", p.eta)),
        ("tau".into(), format!("{:?}", p.tau)),
        ("n_min".into(), n_min.to_string()),
        ("n_max".into(), n_max.to_string()),
        ("mode".into(), if opts.strict_pseudocode { "integrated-strict" } else { "integrated" }.into()),
        ("reuse".into(), format!("{:?}", opts.reuse).to_lowercase()),
    ];
    Ok(IntegratedOutcome { found, controller, targets, diagnostics: e.diag })
}

/// Restricts every output point to the coordinates in `axes`.
pub fn project_outputs(s: &FiniteSystem, axes: &[usize]) -> FiniteSystem {
    let outputs = s.outputs().iter().map(|c| c.iter().map(|p| axes.iter().map(|&i| p[i]).collect()).collect()).collect();
    FiniteSystem::new(outputs, s.initials().to_vec(), s.input_count(), s.transitions().collect::<Vec<_>>()).expect("same structure")
}

#[derive(Debug, Clone)]
pub struct NaiveOutcome {
    /// States are the surviving `(model state, spec state)` pairs.
    pub controller: FiniteSystem,
    pub pairs: Vec<(usize, usize)>,
    pub model_states: usize,
}

impl NaiveOutcome {
    pub fn found(&self) -> bool {
        !self.controller.initials().is_empty()
    }

    pub fn complexity(&self) -> ComplexityReport {
        ComplexityReport { controller_entries: self.pairs.len(), bad_entries: 0, peak_extended_states: self.model_states }
    }
}

/// Inputs `u` enabled at `x` whose every successor `x′` pairs with some
/// `q′ ∈ Post(q)` inside `win`.
fn safe_inputs(model: &FiniteSystem, q: &FiniteSystem, win: &HashSet<(usize, usize)>, x: usize, qs: usize) -> Vec<usize> {
    model
        .enabled(x)
        .into_iter()
        .filter(|&u| model.post_u(x, u).all(|x2| q.post(qs).iter().any(|&(_, q2)| win.contains(&(x2, q2)))))
        .collect()
}

/// The maximal controller over `model` for the lifted spec `q`.
///
/// Solved as a safety game on pairs `(x*, q)` with outputs within `mu_x`: a
/// pair survives while some enabled input sends every successor of `x*` to a
/// surviving pair whose spec component follows `q`. The controller keeps the
/// surviving pairs reachable from initial pairs, with every safe transition.
pub fn synthesize_naive(model: &FiniteSystem, q: &FiniteSystem, mu_x: f64) -> NaiveOutcome {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for x in 0..model.state_count() {
        for s in 0..q.state_count() {
            if chain_distance(model.output(x), q.output(s)) <= mu_x {
                pairs.push((x, s));
            }
        }
    }
    let mut win: HashSet<(usize, usize)> = pairs.iter().copied().collect();
    loop {
        let before = pairs.len();
        pairs.retain(|&(x, s)| {
            let keep = !safe_inputs(model, q, &win, x, s).is_empty();
            if !keep {
                win.remove(&(x, s));
            }
            keep
        });
        if pairs.len() == before {
            break;
        }
    }
    let init_q: HashSet<usize> = q.initials().iter().copied().collect();
    let init_m: HashSet<usize> = model.initials().iter().copied().collect();
    let idx = |p: (usize, usize), pairs: &[(usize, usize)]| pairs.binary_search(&p).ok();
    let initials: Vec<usize> = pairs.iter().enumerate().filter(|(_, (x, s))| init_m.contains(x) && init_q.contains(s)).map(|(i, _)| i).collect();
    let mut trans = Vec::new();
    for (i, &(x, s)) in pairs.iter().enumerate() {
        for u in safe_inputs(model, q, &win, x, s) {
            for x2 in model.post_u(x, u) {
                for &(_, s2) in q.post(s) {
                    if let Some(j) = idx((x2, s2), &pairs) {
                        trans.push((i, u, j));
                    }
                }
            }
        }
    }
    let outputs = pairs.iter().map(|&(x, _)| model.output(x).clone()).collect();
    let full = FiniteSystem::new(outputs, initials, model.input_count(), trans).expect("valid product");
    let keep = {
        let mut r = full.reachable();
        r.sort_unstable();
        r
    };
    let controller = full.restrict(&keep);
    let pairs = keep.iter().map(|&i| pairs[i]).collect();
    NaiveOutcome { controller, pairs, model_states: model.state_count() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(a: f64) -> ControlSystem {
        let x = Rect::new(vec![-1.0], vec![1.0]).unwrap();
        let u = Rect::new(vec![-1.0], vec![1.0]).unwrap();
        ControlSystem::scalar_linear(a, x, u).unwrap().with_init_box(Rect::new(vec![-0.05], vec![0.05]).unwrap()).unwrap()
    }

    fn params() -> SynthesisParams {
        SynthesisParams { eps: 0.3, theta: 0.15, mu_x: 0.1, mu_u: 0.5, eta: 0.15, tau: 0.1 }
    }

    fn unicycle_box() -> Rect {
        use std::f64::consts::PI;
        Rect::new(vec![-1.0, -1.0, -PI], vec![1.0, 1.0, PI]).unwrap()
    }

    #[test]
    fn params_examples() {
        let cert = FcCertificate::unicycle();
        let ok = SynthesisParams { eps: 0.15, theta: 0.12, mu_x: 0.02, mu_u: 0.25, eta: 0.12, tau: 0.2 };
        assert!(check_synthesis_params(&ok, &cert, &unicycle_box()));
        let tight = SynthesisParams { theta: 0.15, eta: 0.15, ..ok };
        assert_eq!(violated_inequality(&tight, &cert, &unicycle_box()), Some("μx + θ ≤ ε"));
        let coarse = SynthesisParams { mu_x: 0.08, eps: 0.3, ..ok };
        assert_eq!(violated_inequality(&coarse, &cert, &unicycle_box()), Some("μx ≤ min{μ̂_X, ᾱ⁻¹(α̲(θ))}"));
        let loose = SynthesisParams { eta: 0.1, ..ok };
        assert_eq!(violated_inequality(&loose, &cert, &unicycle_box()), Some("θ ≤ η"));
    }

    #[test]
    fn self_loop_needs_no_recursion() {
        let plant = scalar(1.0);
        let spec = SpecGraph::new(vec![vec![0.0]], vec![(0, 0)], vec![0], vec![0]).unwrap();
        let out = synthesize_integrated(&plant, &spec, (1, 1), &params(), IntegratedOptions::default()).unwrap();
        assert!(out.found);
        assert_eq!(out.controller.len(), 1);
        // the first input, in index order, keeping the origin within θ of the node
        let first_ok = (0..out.controller.input_grid().len())
            .find(|&u| {
                let x = plant.flow_unchecked(&[0.0], &out.controller.input_point(u), 0.1).reached().unwrap();
                x[0].abs() <= 0.15
            })
            .unwrap();
        assert_eq!(out.controller.get(out.targets[0]), Some(first_ok));
        assert_eq!(out.diagnostics.visits, 1);
        assert_eq!(out.diagnostics.revisits, 0);
    }

    #[test]
    fn unreachable_spec_gives_empty_controller() {
        let plant = scalar(1.0);
        // a dead end: the successor of the initial node is far away and has no successors
        let spec = SpecGraph::new(vec![vec![0.0], vec![0.9]], vec![(0, 1)], vec![0], vec![0]).unwrap();
        let out = synthesize_integrated(&plant, &spec, (1, 2), &params(), IntegratedOptions::default()).unwrap();
        assert!(!out.found);
        assert!(out.controller.is_empty());
        assert!(out.controller.bad().contains(&out.targets[0]) || out.controller.bad().is_empty());
    }

    #[test]
    fn dead_end_marks_targets_bad_in_strict_mode() {
        let plant = scalar(1.0);
        let spec = SpecGraph::new(vec![vec![0.0], vec![0.0]], vec![(0, 1)], vec![0], vec![0]).unwrap();
        let opts = IntegratedOptions { strict_pseudocode: true, ..Default::default() };
        let out = synthesize_integrated(&plant, &spec, (1, 1), &params(), opts).unwrap();
        assert!(!out.found);
        assert!(out.controller.is_empty());
    }

    fn hold_spec() -> SpecGraph {
        // drift from 0 toward 0.5 and hold there
        let nodes: Vec<Vec<f64>> = (0..=5).map(|i| vec![0.1 * i as f64]).collect();
        let mut edges: Vec<(usize, usize)> = (0..5).flat_map(|i| [(i, i), (i, i + 1)]).collect();
        edges.push((5, 5));
        SpecGraph::new(nodes, edges, vec![0], vec![0]).unwrap()
    }

    #[test]
    fn reach_and_hold_is_found_without_revisits() {
        let plant = scalar(1.0);
        let out = synthesize_integrated(&plant, &hold_spec(), (1, 2), &params(), IntegratedOptions::default()).unwrap();
        assert!(out.found);
        assert_eq!(out.diagnostics.revisits, 0);
        let c = out.complexity();
        assert!(c.controller_entries + c.bad_entries <= out.controller.state_grid().len());
        assert!(out.controller.table().keys().all(|k| !out.controller.bad().contains(k)));
    }

    #[test]
    fn integrated_is_deterministic_and_round_trips() {
        let plant = scalar(1.0);
        let a = synthesize_integrated(&plant, &hold_spec(), (1, 2), &params(), IntegratedOptions::default()).unwrap();
        let b = synthesize_integrated(&plant, &hold_spec(), (1, 2), &params(), IntegratedOptions::default()).unwrap();
        let text = a.controller.to_text();
        assert_eq!(text, b.controller.to_text());
        let back = Controller::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.param("n_max"), Some("2"));
        assert_eq!(back.table(), a.controller.table());
        assert_eq!(back.bad(), a.controller.bad());
    }

    #[test]
    fn budget_is_enforced() {
        let plant = scalar(1.0);
        let opts = IntegratedOptions { limits: Limits { max_visits: 0, max_depth: 100 }, ..Default::default() };
        let err = synthesize_integrated(&plant, &hold_spec(), (1, 2), &params(), opts).unwrap_err();
        assert!(matches!(err, Error::Budget(_)));
    }

    #[test]
    fn invalid_bounds_rejected() {
        let plant = scalar(1.0);
        assert!(synthesize_integrated(&plant, &hold_spec(), (0, 1), &params(), IntegratedOptions::default()).is_err());
        assert!(synthesize_integrated(&plant, &hold_spec(), (2, 1), &params(), IntegratedOptions::default()).is_err());
    }

    #[test]
    fn controller_rejects_overlap() {
        let sg = Grid::new(Rect::new(vec![-1.0], vec![1.0]).unwrap(), 0.5).unwrap();
        let ig = Grid::new(Rect::new(vec![-1.0], vec![1.0]).unwrap(), 0.5).unwrap();
        let table: BTreeMap<usize, usize> = [(1, 0)].into_iter().collect();
        let bad: BTreeSet<usize> = [1].into_iter().collect();
        assert!(Controller::from_parts(sg, ig, table, bad).is_err());
    }

    #[test]
    fn lookup_prefers_own_entry_then_nearest() {
        let sg = Grid::new(Rect::new(vec![-1.0], vec![1.0]).unwrap(), 0.5).unwrap();
        let ig = Grid::new(Rect::new(vec![-1.0], vec![1.0]).unwrap(), 0.5).unwrap();
        // grid points -1, -0.5, 0, 0.5
        let table: BTreeMap<usize, usize> = [(1, 3), (3, 0)].into_iter().collect();
        let c = Controller::from_parts(sg, ig, table, BTreeSet::new()).unwrap();
        assert_eq!(c.lookup(1, 0.6), Some((1, 3)));
        assert_eq!(c.lookup(2, 0.6), Some((1, 3)));
        assert_eq!(c.lookup(0, 0.6), Some((1, 3)));
        assert_eq!(c.lookup(0, 0.4), None);
    }

    #[test]
    fn naive_keeps_a_model_that_already_satisfies() {
        // two states alternating, spec identical
        let outs = vec![vec![vec![0.0]], vec![vec![1.0]]];
        let m = FiniteSystem::new(outs.clone(), vec![0], 1, vec![(0, 0, 1), (1, 0, 0)]).unwrap();
        let out = synthesize_naive(&m, &m, 0.0);
        assert!(out.found());
        assert_eq!(out.controller.state_count(), 2);
        assert_eq!(out.controller.transition_count(), 2);
    }

    #[test]
    fn naive_without_initial_match_is_empty() {
        let m = FiniteSystem::new(vec![vec![vec![0.0]]], vec![0], 1, vec![(0, 0, 0)]).unwrap();
        let q = FiniteSystem::new(vec![vec![vec![5.0]]], vec![0], 1, vec![(0, 0, 0)]).unwrap();
        let out = synthesize_naive(&m, &q, 0.1);
        assert!(!out.found());
        assert_eq!(out.controller.state_count(), 0);
    }

    /// Largest set of pairs closed under "some input keeps every successor
    /// inside", by enumeration over all subsets.
    fn brute_winning(m: &FiniteSystem, q: &FiniteSystem, mu: f64) -> BTreeSet<(usize, usize)> {
        let cand: Vec<(usize, usize)> = (0..m.state_count())
            .flat_map(|x| (0..q.state_count()).map(move |s| (x, s)))
            .filter(|&(x, s)| chain_distance(m.output(x), q.output(s)) <= mu)
            .collect();
        let mut best = BTreeSet::new();
        for mask in 0u32..(1 << cand.len()) {
            let set: HashSet<(usize, usize)> = (0..cand.len()).filter(|i| mask >> i & 1 == 1).map(|i| cand[i]).collect();
            let closed = set.iter().all(|&(x, s)| !safe_inputs(m, q, &set, x, s).is_empty());
            if closed {
                best.extend(set);
            }
        }
        best
    }

    fn reach_from_initials(m: &FiniteSystem, q: &FiniteSystem, win: &BTreeSet<(usize, usize)>) -> BTreeSet<(usize, usize)> {
        let w: HashSet<(usize, usize)> = win.iter().copied().collect();
        let mut seen: BTreeSet<(usize, usize)> = win.iter().copied().filter(|(x, s)| m.initials().contains(x) && q.initials().contains(s)).collect();
        let mut stack: Vec<(usize, usize)> = seen.iter().copied().collect();
        while let Some((x, s)) = stack.pop() {
            for u in safe_inputs(m, q, &w, x, s) {
                for x2 in m.post_u(x, u) {
                    for &(_, s2) in q.post(s) {
                        if w.contains(&(x2, s2)) && seen.insert((x2, s2)) {
                            stack.push((x2, s2));
                        }
                    }
                }
            }
        }
        seen
    }

    fn tiny_system(max_states: usize, inputs: usize) -> impl Strategy<Value = FiniteSystem> {
        (1..=max_states).prop_flat_map(move |n| {
            let outs = proptest::collection::vec(0..3u8, n);
            let trans = proptest::collection::vec((0..n, 0..inputs, 0..n), 0..(3 * n));
            (outs, trans).prop_map(move |(o, t)| {
                let outputs = o.iter().map(|&v| vec![vec![v as f64]]).collect();
                FiniteSystem::new(outputs, vec![0], inputs, t).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn naive_matches_subset_enumeration(m in tiny_system(4, 2), q in tiny_system(3, 1)) {
            let out = synthesize_naive(&m, &q, 0.5);
            let win = brute_winning(&m, &q, 0.5);
            let expected = reach_from_initials(&m, &q, &win);
            let got: BTreeSet<(usize, usize)> = out.pairs.iter().copied().collect();
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn naive_on_a_scalar_grid_matches_enumeration() {
        // five grid points, input pushes left, holds or pushes right
        let outs: Vec<Vec<Vec<f64>>> = (0..5).map(|i| vec![vec![0.1 * i as f64]]).collect();
        let mut t = Vec::new();
        for x in 0..5usize {
            t.push((x, 1, x));
            if x > 0 {
                t.push((x, 0, x - 1));
            }
            if x < 4 {
                t.push((x, 2, x + 1));
                // the unstable drift makes pushing right nondeterministic
                if x < 3 {
                    t.push((x, 2, x + 2));
                }
            }
        }
        let m = FiniteSystem::new(outs, vec![0], 3, t).unwrap();
        let q = FiniteSystem::new(
            (0..3).map(|i| vec![vec![0.1 * i as f64 + 0.2]]).collect(),
            vec![0],
            1,
            vec![(0, 0, 1), (1, 0, 2), (2, 0, 2), (0, 0, 0), (1, 0, 1)],
        )
        .unwrap();
        let out = synthesize_naive(&m, &q, 0.25);
        let win = brute_winning(&m, &q, 0.25);
        let got: BTreeSet<(usize, usize)> = out.pairs.iter().copied().collect();
        assert_eq!(got, reach_from_initials(&m, &q, &win));
        assert!(out.found());
    }
}
