//! The controller in the loop with the continuous plant through the network
//! pipeline: sample, quantize, send, compute, send, refresh the hold.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{sample_iteration, DelayEnvelope, DelayRecord, NetworkConfig};
use crate::plant::{ControlSystem, Flow};
use crate::spec::SpecGraph;
use crate::synthesis::Controller;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationEvent {
    pub k: usize,
    /// Refresh index `A_k` at which the iteration starts.
    pub a_k: u64,
    pub t_send_sc: f64,
    pub t_send_ca: f64,
    pub a_next: u64,
    pub hold: usize,
    /// Quantized measurement as a state-grid flat index.
    pub y: usize,
    /// Domain state whose entry was used (differs from `y` on a θ-near hit).
    pub used: usize,
    pub u_next: usize,
    pub delays: DelayRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    /// Measurement with no domain entry within θ.
    Blocked { k: usize, y: Option<usize> },
    Excursion { sample: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub tau: f64,
    /// `x(jτ)` for `j = 0, 1, …`.
    pub states: Vec<Vec<f64>>,
    /// Input held on `[jτ, (j+1)τ[`; one fewer than `states`.
    pub inputs: Vec<Vec<f64>>,
    pub events: Vec<IterationEvent>,
    pub termination: Termination,
}

impl ClosedLoopTrace {
    pub fn blocked(&self) -> bool {
        matches!(self.termination, Termination::Blocked { .. })
    }

    /// One row per sample: `k,t,x…,u…,N_k,y…`; the input is the one held from
    /// that sample on, and `N_k`, `y` are filled on rows where an iteration
    /// starts.
    pub fn to_csv(&self, grid: &crate::quantization::Grid) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.inputs.first().map_or(0, Vec::len);
        let mut s = String::from("k,t");
        for i in 1..=n {
            let _ = write!(s, ",x{i}");
        }
        for i in 1..=m {
            let _ = write!(s, ",u{i}");
        }
        s.push_str(",N_k");
        for i in 1..=n {
            let _ = write!(s, ",y{i}");
        }
        s.push('\n');
        let mut ev = self.events.iter().peekable();
        for (j, x) in self.states.iter().enumerate() {
            let _ = write!(s, "{j},{:?}", j as f64 * self.tau);
            for v in x {
                let _ = write!(s, ",{v:?}");
            }
            match self.inputs.get(j) {
                Some(u) => u.iter().for_each(|v| {
                    let _ = write!(s, ",{v:?}");
                }),
                None => (0..m).for_each(|_| s.push(',')),
            }
            match ev.next_if(|e| e.a_k == j as u64) {
                Some(e) => {
                    let _ = write!(s, ",{}", e.hold);
                    for k in grid.multi_of(e.y) {
                        let _ = write!(s, ",{k}");
                    }
                }
                None => (0..=n).for_each(|_| s.push(',')),
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOptions {
    /// Radius of the θ-near domain lookup.
    pub theta: f64,
    /// Input held before the first refresh.
    pub initial_input: Vec<f64>,
}

/// Advances `x` by whole samples under `u`, appending to the trace; returns
/// `false` on an excursion.
fn hold(plant: &ControlSystem, tau: f64, u: &[f64], samples: u64, trace: &mut ClosedLoopTrace) -> bool {
    for _ in 0..samples {
        let x = trace.states.last().unwrap();
        match plant.flow_unchecked(x, u, tau) {
            Flow::Reached(next) => {
                trace.inputs.push(u.to_vec());
                trace.states.push(next);
            }
            Flow::Excursion { .. } => {
                trace.termination = Termination::Excursion { sample: trace.states.len() - 1 };
                return false;
            }
        }
    }
    true
}

/// Simulates `iterations` loop iterations with delays drawn from `rng`.
pub fn run_closed_loop<R: Rng + ?Sized>(
    plant: &ControlSystem,
    ctrl: &Controller,
    net: &NetworkConfig,
    env: &DelayEnvelope,
    x0: &[f64],
    iterations: usize,
    opts: &LoopOptions,
    rng: &mut R,
) -> Result<ClosedLoopTrace> {
    run_with(plant, ctrl, net, env, x0, iterations, opts, |cfg, env, a| sample_iteration(cfg, env, a, rng))
}

/// Same loop with the delays of each iteration supplied by `delays`.
#[allow(clippy::too_many_arguments)]
pub fn run_with(
    plant: &ControlSystem,
    ctrl: &Controller,
    net: &NetworkConfig,
    env: &DelayEnvelope,
    x0: &[f64],
    iterations: usize,
    opts: &LoopOptions,
    mut delays: impl FnMut(&NetworkConfig, &DelayEnvelope, u64) -> (DelayRecord, crate::network::IterationTiming),
) -> Result<ClosedLoopTrace> {
    if ctrl.is_empty() {
        return Err(Error::InvalidParameter("cannot simulate an empty controller".into()));
    }
    if !plant.init_box().contains(x0) {
        return Err(Error::OutOfDomain { what: "initial state", value: x0.to_vec() });
    }
    let tau = net.tau;
    let mut trace = ClosedLoopTrace { tau, states: vec![x0.to_vec()], inputs: Vec::new(), events: Vec::new(), termination: Termination::Completed };
    let mut held = opts.initial_input.clone();
    let mut a_k: u64 = 0;
    for k in 0..iterations {
        let (d, timing) = delays(net, env, a_k);
        // the sensor output is the sample taken at the last multiple of τ
        let sample_idx = ((timing.t_send_sc / tau + 1e-9).floor() as u64).max(a_k);
        if !hold(plant, tau, &held, sample_idx - a_k, &mut trace) {
            return Ok(trace);
        }
        let y = ctrl.state_grid().quantize(&trace.states[sample_idx as usize]);
        let hit = y.and_then(|y| ctrl.lookup(y, opts.theta));
        let Some((used, u_next)) = hit else {
            trace.termination = Termination::Blocked { k, y };
            return Ok(trace);
        };
        if !hold(plant, tau, &held, timing.refresh_index - sample_idx, &mut trace) {
            return Ok(trace);
        }
        trace.events.push(IterationEvent {
            k,
            a_k,
            t_send_sc: timing.t_send_sc,
            t_send_ca: timing.t_send_ca,
            a_next: timing.refresh_index,
            hold: timing.hold,
            y: y.unwrap(),
            used,
            u_next,
            delays: d,
        });
        held = ctrl.input_point(u_next);
        a_k = timing.refresh_index;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub satisfied: bool,
    pub witness_path: Vec<usize>,
}

/// Whether the sampled states embed within `eps` into a spec path from an
/// initial node; a blocked or truncated trace is never satisfied.
pub fn verify_run(trace: &ClosedLoopTrace, spec: &SpecGraph, eps: f64) -> Verdict {
    match spec.embed(&trace.states, eps) {
        Some(path) if trace.termination == Termination::Completed => Verdict { satisfied: true, witness_path: path },
        Some(path) => Verdict { satisfied: false, witness_path: path },
        None => Verdict { satisfied: false, witness_path: Vec::new() },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReplayReport {
    pub sequences: u64,
    pub blocked: u64,
    pub excursions: u64,
    pub violations: u64,
}

impl ReplayReport {
    pub fn all_good(&self) -> bool {
        self.sequences > 0 && self.blocked == 0 && self.excursions == 0 && self.violations == 0
    }
}

/// Every hold-length sequence in `[N_min, N_max]^iterations`, with the
/// sensor sampling at each refresh instant.
pub fn replay_all_sequences(
    plant: &ControlSystem,
    ctrl: &Controller,
    spec: &SpecGraph,
    n_bounds: (usize, usize),
    tau: f64,
    x0: &[f64],
    iterations: usize,
    opts: &LoopOptions,
    eps: f64,
) -> ReplayReport {
    let mut report = ReplayReport::default();
    let mut stack: Vec<(ClosedLoopTrace, Vec<f64>, usize)> = Vec::new();
    let start = ClosedLoopTrace { tau, states: vec![x0.to_vec()], inputs: Vec::new(), events: Vec::new(), termination: Termination::Completed };
    stack.push((start, opts.initial_input.clone(), 0));
    while let Some((trace, held, k)) = stack.pop() {
        if k == iterations {
            report.sequences += 1;
            if !verify_run(&trace, spec, eps).satisfied {
                report.violations += 1;
            }
            continue;
        }
        let y = ctrl.state_grid().quantize(trace.states.last().unwrap());
        let Some((_, u_next)) = y.and_then(|y| ctrl.lookup(y, opts.theta)) else {
            report.sequences += 1;
            report.blocked += 1;
            continue;
        };
        for n in n_bounds.0..=n_bounds.1 {
            let mut t = trace.clone();
            if !hold(plant, tau, &held, n as u64, &mut t) {
                report.sequences += 1;
                report.excursions += 1;
                continue;
            }
            stack.push((t, ctrl.input_point(u_next), k + 1));
        }
    }
    report
}
