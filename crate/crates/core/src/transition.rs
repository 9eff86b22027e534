//! Explicit finite systems with chain-valued outputs, greatest-fixed-point
//! computation of (alternating) approximate simulation relations, and
//! approximate feedback composition.
//!
//! Every output is a chain of points; the output metric is the largest
//! per-index infinity-norm distance, and `+∞` between chains of different
//! lengths.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quantization::linf;

pub type Chain = Vec<Vec<f64>>;

pub fn chain_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(p, q)| linf(p, q)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSystem {
    outputs: Vec<Chain>,
    initials: Vec<usize>,
    input_count: usize,
    /// `post[x]` holds `(u, x')`, sorted and deduplicated.
    post: Vec<Vec<(usize, usize)>>,
}

impl FiniteSystem {
    pub fn new(
        outputs: Vec<Chain>,
        initials: Vec<usize>,
        input_count: usize,
        transitions: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<Self> {
        let n = outputs.len();
        let mut post = vec![Vec::new(); n];
        for (s, u, t) in transitions {
            if s >= n || t >= n || u >= input_count {
                return Err(Error::InvalidSystem(format!("transition ({s}, {u}, {t}) out of range")));
            }
            post[s].push((u, t));
        }
        for p in &mut post {
            p.sort_unstable();
            p.dedup();
        }
        let mut initials = initials;
        initials.sort_unstable();
        initials.dedup();
        if initials.iter().any(|&i| i >= n) {
            return Err(Error::InvalidSystem("initial state out of range".into()));
        }
        Ok(Self { outputs, initials, input_count, post })
    }

    pub fn empty(input_count: usize) -> Self {
        Self { outputs: Vec::new(), initials: Vec::new(), input_count, post: Vec::new() }
    }

    pub fn state_count(&self) -> usize {
        self.outputs.len()
    }
    pub fn input_count(&self) -> usize {
        self.input_count
    }
    pub fn initials(&self) -> &[usize] {
        &self.initials
    }
    pub fn output(&self, x: usize) -> &Chain {
        &self.outputs[x]
    }
    pub fn outputs(&self) -> &[Chain] {
        &self.outputs
    }
    pub fn post(&self, x: usize) -> &[(usize, usize)] {
        &self.post[x]
    }
    pub fn transition_count(&self) -> usize {
        self.post.iter().map(Vec::len).sum()
    }
    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.post.iter().enumerate().flat_map(|(s, p)| p.iter().map(move |&(u, t)| (s, u, t)))
    }

    /// `u`-successors of `x`.
    pub fn post_u(&self, x: usize, u: usize) -> impl Iterator<Item = usize> + '_ {
        let p = &self.post[x];
        let start = p.partition_point(|&(v, _)| v < u);
        p[start..].iter().take_while(move |&&(v, _)| v == u).map(|&(_, t)| t)
    }

    /// Inputs with at least one successor at `x`, ascending.
    pub fn enabled(&self, x: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.post[x].iter().map(|&(u, _)| u).collect();
        v.dedup();
        v
    }

    pub fn is_deterministic(&self) -> bool {
        self.post.iter().all(|p| p.windows(2).all(|w| w[0].0 != w[1].0))
    }

    pub fn is_nonblocking(&self) -> bool {
        self.post.iter().all(|p| !p.is_empty())
    }

    /// Reachable states from the initial set, in order of first discovery
    /// (breadth first, initials ascending).
    pub fn reachable(&self) -> Vec<usize> {
        let mut seen = vec![false; self.state_count()];
        let mut order = Vec::new();
        for &i in &self.initials {
            if !seen[i] {
                seen[i] = true;
                order.push(i);
            }
        }
        let mut head = 0;
        while head < order.len() {
            let x = order[head];
            head += 1;
            for &(_, t) in &self.post[x] {
                if !seen[t] {
                    seen[t] = true;
                    order.push(t);
                }
            }
        }
        order
    }

    /// The maximal accessible sub-system; states keep their relative order.
    pub fn accessible_part(&self) -> FiniteSystem {
        let mut keep = self.reachable();
        keep.sort_unstable();
        self.restrict(&keep)
    }

    /// Sub-system induced by `keep` (sorted), renumbered densely.
    pub fn restrict(&self, keep: &[usize]) -> FiniteSystem {
        let mut map = vec![usize::MAX; self.state_count()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let outputs = keep.iter().map(|&x| self.outputs[x].clone()).collect();
        let initials = self.initials.iter().filter(|&&i| map[i] != usize::MAX).map(|&i| map[i]).collect();
        let trans = keep.iter().flat_map(|&s| {
            let map = &map;
            self.post[s].iter().filter(move |&&(_, t)| map[t] != usize::MAX).map(move |&(u, t)| (map[s], u, map[t]))
        });
        FiniteSystem::new(outputs, initials, self.input_count, trans.collect::<Vec<_>>()).expect("restriction of a valid system")
    }

    /// Line-oriented dump: header lines, then one `src input dst` line per
    /// transition.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "states {}", self.state_count());
        let _ = writeln!(s, "inputs {}", self.input_count);
        let init: Vec<String> = self.initials.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "init {}", init.join(" "));
        for (i, out) in self.outputs.iter().enumerate() {
            let pts: Vec<String> = out.iter().map(|p| p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")).collect();
            let _ = writeln!(s, "out {i} {}", pts.join(";"));
        }
        for (a, u, b) in self.transitions() {
            let _ = writeln!(s, "{a} {u} {b}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut states = None;
        let mut inputs = None;
        let mut init = Vec::new();
        let mut outputs: Vec<Option<Chain>> = Vec::new();
        let mut trans = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: &str| Error::Parse { line: no + 1, msg: msg.to_string() };
            let mut it = line.split_whitespace();
            let head = it.next().unwrap_or_default();
            match head {
                "states" => {
                    let n: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| perr("bad state count"))?;
                    states = Some(n);
                    outputs = vec![None; n];
                }
                "inputs" => inputs = Some(it.next().and_then(|v| v.parse().ok()).ok_or_else(|| perr("bad input count"))?),
                "init" => {
                    for v in it {
                        init.push(v.parse().map_err(|_| perr("bad initial index"))?);
                    }
                }
                "out" => {
                    let i: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| perr("bad output index"))?;
                    let body = it.next().unwrap_or("");
                    let chain = body
                        .split(';')
                        .filter(|p| !p.is_empty())
                        .map(|p| p.split(',').map(|v| v.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| perr("bad output coordinates"))?;
                    *outputs.get_mut(i).ok_or_else(|| perr("output index out of range"))? = Some(chain);
                }
                _ => {
                    let nums: Vec<usize> = line.split_whitespace().map(|v| v.parse()).collect::<std::result::Result<_, _>>().map_err(|_| perr("expected `src input dst`"))?;
                    if nums.len() != 3 {
                        return Err(perr("expected `src input dst`"));
                    }
                    trans.push((nums[0], nums[1], nums[2]));
                }
            }
        }
        let n = states.ok_or(Error::Parse { line: 0, msg: "missing `states`".into() })?;
        let outputs = outputs.into_iter().map(Option::unwrap_or_default).collect::<Vec<_>>();
        debug_assert_eq!(outputs.len(), n);
        FiniteSystem::new(outputs, init, inputs.ok_or(Error::Parse { line: 0, msg: "missing `inputs`".into() })?, trans)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    Plain,
    Alternating,
}

/// A simulation relation from `S₁` to `S₂` as sorted `(x₁, x₂)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRelation {
    pub pairs: Vec<(usize, usize)>,
    pub epsilon: f64,
    pub kind: RelationKind,
}

impl SimRelation {
    pub fn contains(&self, x1: usize, x2: usize) -> bool {
        self.pairs.binary_search(&(x1, x2)).is_ok()
    }

    pub fn inverse_pairs(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = self.pairs.iter().map(|&(a, b)| (b, a)).collect();
        v.sort_unstable();
        v
    }
}

type PairSet = HashSet<(u32, u32)>;

fn plain_step_ok(s1: &FiniteSystem, s2: &FiniteSystem, rel: &PairSet, x1: usize, x2: usize) -> bool {
    s1.post(x1).iter().all(|&(_, y1)| s2.post(x2).iter().any(|&(_, y2)| rel.contains(&(y1 as u32, y2 as u32))))
}

/// `u₁` ranges over the inputs enabled at `x₁` and the answering `u₂` must be
/// enabled at `x₂`.
fn alt_step_ok(s1: &FiniteSystem, s2: &FiniteSystem, rel: &PairSet, x1: usize, x2: usize) -> bool {
    alt_witness(s1, s2, x1, x2, rel, |a, b| rel.contains(&(a as u32, b as u32))).len() == s1.enabled(x1).len()
}

/// For each input `u₁` enabled at `x₁` that has a witness, `(u₁, u₂)` with the
/// smallest witnessing `u₂`.
fn alt_witness(
    s1: &FiniteSystem,
    s2: &FiniteSystem,
    x1: usize,
    x2: usize,
    _rel: &PairSet,
    related: impl Fn(usize, usize) -> bool,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for u1 in s1.enabled(x1) {
        let succ1: Vec<usize> = s1.post_u(x1, u1).collect();
        let w = s2.enabled(x2).into_iter().find(|&u2| s2.post_u(x2, u2).all(|y2| succ1.iter().any(|&y1| related(y1, y2))));
        if let Some(u2) = w {
            out.push((u1, u2));
        }
    }
    out
}

fn predecessors(s: &FiniteSystem) -> Vec<Vec<u32>> {
    let mut pre = vec![Vec::new(); s.state_count()];
    for (x, _, y) in s.transitions() {
        pre[y].push(x as u32);
    }
    for p in &mut pre {
        p.sort_unstable();
        p.dedup();
    }
    pre
}

/// Largest subset of the `eps`-close pairs on which `step_ok` holds. A pair is
/// rechecked only after one of its successor pairs has been removed.
fn greatest_fixed_point(
    s1: &FiniteSystem,
    s2: &FiniteSystem,
    eps: f64,
    step_ok: impl Fn(&FiniteSystem, &FiniteSystem, &PairSet, usize, usize) -> bool,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for x1 in 0..s1.state_count() {
        for x2 in 0..s2.state_count() {
            if chain_distance(s1.output(x1), s2.output(x2)) <= eps {
                pairs.push((x1, x2));
            }
        }
    }
    let mut rel: PairSet = pairs.iter().map(|&(a, b)| (a as u32, b as u32)).collect();
    let (pre1, pre2) = (predecessors(s1), predecessors(s2));
    let mut work: Vec<(u32, u32)> = pairs.iter().rev().map(|&(a, b)| (a as u32, b as u32)).collect();
    let mut queued: PairSet = rel.clone();
    while let Some((x1, x2)) = work.pop() {
        queued.remove(&(x1, x2));
        if !rel.contains(&(x1, x2)) || step_ok(s1, s2, &rel, x1 as usize, x2 as usize) {
            continue;
        }
        rel.remove(&(x1, x2));
        for &p1 in &pre1[x1 as usize] {
            for &p2 in &pre2[x2 as usize] {
                if rel.contains(&(p1, p2)) && queued.insert((p1, p2)) {
                    work.push((p1, p2));
                }
            }
        }
    }
    pairs.retain(|&(a, b)| rel.contains(&(a as u32, b as u32)));
    pairs
}

fn covers_initials(s1: &FiniteSystem, s2: &FiniteSystem, pairs: &[(usize, usize)]) -> bool {
    let init2: HashSet<usize> = s2.initials().iter().copied().collect();
    s1.initials().iter().all(|&i| pairs.iter().any(|&(a, b)| a == i && init2.contains(&b)))
}

/// Maximal `ε`-approximate simulation relation from `s1` to `s2`, or `None`
/// when it leaves some initial state of `s1` unmatched.
pub fn check_approx_simulation(s1: &FiniteSystem, s2: &FiniteSystem, eps: f64) -> Option<SimRelation> {
    let pairs = greatest_fixed_point(s1, s2, eps, plain_step_ok);
    covers_initials(s1, s2, &pairs).then_some(SimRelation { pairs, epsilon: eps, kind: RelationKind::Plain })
}

/// Maximal alternating `ε`-approximate simulation relation from `s1` to `s2`.
pub fn check_alt_simulation(s1: &FiniteSystem, s2: &FiniteSystem, eps: f64) -> Option<SimRelation> {
    let pairs = greatest_fixed_point(s1, s2, eps, alt_step_ok);
    covers_initials(s1, s2, &pairs).then_some(SimRelation { pairs, epsilon: eps, kind: RelationKind::Alternating })
}

/// Alternating check against a finite prefix of a larger system: states of
/// `s2` flagged in `truncated` had their futures cut off, so pairs with such
/// a state are exempt from the step condition.
pub fn check_alt_simulation_truncated(s1: &FiniteSystem, s2: &FiniteSystem, eps: f64, truncated: &[bool]) -> Option<SimRelation> {
    let pairs = greatest_fixed_point(s1, s2, eps, |a, b, rel, x1, x2| truncated[x2] || alt_step_ok(a, b, rel, x1, x2));
    covers_initials(s1, s2, &pairs).then_some(SimRelation { pairs, epsilon: eps, kind: RelationKind::Alternating })
}

/// Independent re-check of conditions (i), (ii) and the step condition for a
/// given relation by direct enumeration.
pub fn verify_relation(s1: &FiniteSystem, s2: &FiniteSystem, rel: &SimRelation) -> bool {
    let set: HashSet<(usize, usize)> = rel.pairs.iter().copied().collect();
    let has = |a: usize, b: usize| set.contains(&(a, b));
    let init = s1.initials().iter().all(|&i| s2.initials().iter().any(|&j| has(i, j)));
    let metric = rel.pairs.iter().all(|&(a, b)| chain_distance(s1.output(a), s2.output(b)) <= rel.epsilon);
    let step = rel.pairs.iter().all(|&(a, b)| match rel.kind {
        RelationKind::Plain => s1.post(a).iter().all(|&(_, a2)| s2.post(b).iter().any(|&(_, b2)| has(a2, b2))),
        RelationKind::Alternating => s1.enabled(a).into_iter().all(|u1| {
            s2.enabled(b).into_iter().any(|u2| {
                s2.post(b).iter().filter(|t| t.0 == u2).all(|&(_, b2)| s1.post(a).iter().any(|&(v, a2)| v == u1 && has(a2, b2)))
            })
        }),
    });
    init && metric && step
}

/// `S₁ ×θ S₂` along an alternating relation `rel` from `s2` to `s1`.
///
/// A composed state `(x₁, x₂)` moves with every plant input `u₁` that is the
/// smallest witness of some controller input `u₂` enabled at `x₂`.
pub fn feedback_compose(s1: &FiniteSystem, s2: &FiniteSystem, rel: &SimRelation) -> Result<(FiniteSystem, Vec<(usize, usize)>)> {
    if rel.kind != RelationKind::Alternating {
        return Err(Error::InvalidParameter("feedback composition needs an alternating relation".into()));
    }
    // states are R⁻¹: (x₁, x₂) with (x₂, x₁) ∈ R
    let states = rel.inverse_pairs();
    let index = |a: usize, b: usize| states.binary_search(&(a, b)).ok();
    let relset: PairSet = rel.pairs.iter().map(|&(a, b)| (a as u32, b as u32)).collect();
    let init1: HashSet<usize> = s1.initials().iter().copied().collect();
    let init2: HashSet<usize> = s2.initials().iter().copied().collect();
    let initials = states.iter().enumerate().filter(|(_, (a, b))| init1.contains(a) && init2.contains(b)).map(|(i, _)| i).collect();
    let mut trans = Vec::new();
    for (i, &(x1, x2)) in states.iter().enumerate() {
        for (u2, u1) in alt_witness(s2, s1, x2, x1, &relset, |c, p| relset.contains(&(c as u32, p as u32))) {
            for y2 in s2.post_u(x2, u2) {
                for y1 in s1.post_u(x1, u1) {
                    if let Some(j) = index(y1, y2) {
                        trans.push((i, u1, j));
                    }
                }
            }
        }
    }
    let outputs = states.iter().map(|&(a, _)| s1.output(a).clone()).collect();
    Ok((FiniteSystem::new(outputs, initials, s1.input_count(), trans)?, states))
}
