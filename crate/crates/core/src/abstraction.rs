//! The symbolic model `S*(Σ)`: quantized extended states (chains of grid
//! points labelled with the previous and current held input) whose links
//! satisfy the certificate's V-inequality.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::network::DelayEnvelope;
use crate::plant::{ControlSystem, FcCertificate, Flow};
use crate::quantization::{Grid, Rect};
use crate::transition::FiniteSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbstractionParams {
    pub eps: f64,
    pub eta: f64,
    pub mu_x: f64,
    pub mu_u: f64,
    pub tau: f64,
}

/// Chain of state-grid flat indices with input-grid labels `u⁻`, `u⁺`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtendedState {
    pub chain: Vec<usize>,
    pub u_minus: usize,
    pub u_plus: usize,
}

/// `μx ≤ min{μ̂_X, ᾱ⁻¹(α̲(ε))} ≤ η`.
pub fn check_abstraction_params(p: &AbstractionParams, cert: &FcCertificate, state_box: &Rect) -> bool {
    if !(p.eps > 0.0 && p.eta > 0.0 && p.mu_x > 0.0 && p.mu_u > 0.0 && p.tau > 0.0) {
        return false;
    }
    let m = state_box.min_span().min(cert.alpha_hi.inverse(cert.alpha_lo.eval(p.eps)));
    p.mu_x <= m && m <= p.eta
}

/// `e^{λτ} α̲(η) + γ(μx)`.
pub fn link_bound(cert: &FcCertificate, eta: f64, mu_x: f64, tau: f64) -> f64 {
    (cert.lambda * tau).exp() * cert.alpha_lo.eval(eta) + cert.gamma.eval(mu_x)
}

/// `α̲⁻¹(e^{λτ} α̲(η) + γ(μx))`: every point satisfying a link inequality
/// against a nominal point lies within this distance of it.
pub fn successor_ball_radius(cert: &FcCertificate, eta: f64, mu_x: f64, tau: f64) -> f64 {
    cert.alpha_lo.inverse(link_bound(cert, eta, mu_x, tau))
}

/// Shared machinery for successor enumeration with a per-(point, input)
/// cache of admissible next grid points.
pub struct Abstraction<'a> {
    plant: &'a ControlSystem,
    cert: &'a FcCertificate,
    params: AbstractionParams,
    n_min: usize,
    n_max: usize,
    state_grid: Grid,
    input_grid: Grid,
    bound: f64,
    radius: f64,
    cache: HashMap<(usize, usize), Vec<usize>>,
    u_init: usize,
}

impl<'a> Abstraction<'a> {
    pub fn new(plant: &'a ControlSystem, cert: &'a FcCertificate, env: &DelayEnvelope, params: AbstractionParams) -> Result<Self> {
        let state_grid = Grid::new(plant.state_box().clone(), params.mu_x)?;
        let input_grid = Grid::new(plant.input_box().clone(), params.mu_u)?;
        let zero = vec![0.0; plant.input_dim()];
        let u_init = input_grid
            .quantize(&zero)
            .ok_or_else(|| Error::InvalidParameter("the zero input is not on the input grid".into()))?;
        Ok(Self {
            plant,
            cert,
            params,
            n_min: env.n_min,
            n_max: env.n_max,
            state_grid,
            input_grid,
            bound: link_bound(cert, params.eta, params.mu_x, params.tau),
            radius: successor_ball_radius(cert, params.eta, params.mu_x, params.tau),
            cache: HashMap::new(),
            u_init,
        })
    }

    pub fn state_grid(&self) -> &Grid {
        &self.state_grid
    }
    pub fn input_grid(&self) -> &Grid {
        &self.input_grid
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn initial_input(&self) -> usize {
        self.u_init
    }

    /// Grid points `x′` with `V(x(τ, p, u), x′) ≤ bound`; empty when the
    /// nominal flow leaves the state box.
    pub fn link_targets(&mut self, p: usize, u: usize) -> &[usize] {
        if !self.cache.contains_key(&(p, u)) {
            let targets = self.compute_targets(p, u);
            self.cache.insert((p, u), targets);
        }
        &self.cache[&(p, u)]
    }

    fn compute_targets(&self, p: usize, u: usize) -> Vec<usize> {
        let x = self.state_grid.point(p);
        let uv = self.input_grid.point(u);
        let z = match self.plant.flow_unchecked(&x, &uv, self.params.tau) {
            Flow::Reached(z) => z,
            Flow::Excursion { .. } => return Vec::new(),
        };
        self.state_grid
            .ball(&z, self.radius)
            .into_iter()
            .filter(|&c| self.cert.v.eval(&z, &self.state_grid.point(c)) <= self.bound)
            .collect()
    }

    /// Bare initial states `[X0]_μx`, labelled `u⁻ = u⁺ = 0`.
    pub fn initial_states(&self) -> Vec<ExtendedState> {
        let init = self.plant.init_box();
        (0..self.state_grid.len())
            .filter(|&i| init.contains(&self.state_grid.point(i)))
            .map(|i| ExtendedState { chain: vec![i], u_minus: self.u_init, u_plus: self.u_init })
            .collect()
    }

    /// All `u*`-successors of `x`, sorted.
    pub fn enumerate_successors(&mut self, x: &ExtendedState, u_star: usize) -> Vec<ExtendedState> {
        let last = *x.chain.last().expect("nonempty chain");
        let (um, up) = (x.u_plus, u_star);
        let mut out = Vec::new();
        let firsts = self.link_targets(last, x.u_plus).to_vec();
        for n in self.n_min..=self.n_max {
            let mut stack: Vec<Vec<usize>> = firsts.iter().map(|&f| vec![f]).collect();
            while let Some(chain) = stack.pop() {
                if chain.len() == n {
                    out.push(ExtendedState { chain, u_minus: um, u_plus: up });
                    continue;
                }
                // link i → i+1 uses u⁻ except for the final link of the chain
                let u = if chain.len() + 1 == n { up } else { um };
                let tail = *chain.last().unwrap();
                for &c in self.link_targets(tail, u).to_vec().iter() {
                    let mut next = chain.clone();
                    next.push(c);
                    stack.push(next);
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn output_of(&self, x: &ExtendedState) -> Vec<Vec<f64>> {
        x.chain.iter().map(|&c| self.state_grid.point(c)).collect()
    }
}

/// The explicit accessible part of `S*(Σ)`, with its states indexed as in
/// the returned system.
#[derive(Debug, Clone)]
pub struct SymbolicModel {
    pub system: FiniteSystem,
    pub states: Vec<ExtendedState>,
    pub state_grid: Grid,
    pub input_grid: Grid,
}

/// Transition budget of an explicit model; extended states of a very
/// nondeterministic model can have thousands of successors each.
pub const MAX_TRANSITIONS: usize = 1 << 25;

pub fn build_symbolic_model(
    plant: &ControlSystem,
    cert: &FcCertificate,
    env: &DelayEnvelope,
    params: AbstractionParams,
    state_ceiling: usize,
) -> Result<SymbolicModel> {
    let mut abs = Abstraction::new(plant, cert, env, params)?;
    let init = abs.initial_states();
    if init.is_empty() {
        return Err(Error::EmptyGrid { mu: params.mu_x, bounds: plant.init_box().to_string() });
    }
    let mut index: HashMap<ExtendedState, usize> = HashMap::new();
    let mut states: Vec<ExtendedState> = Vec::new();
    for s in init.iter() {
        index.insert(s.clone(), states.len());
        states.push(s.clone());
    }
    let initials: Vec<usize> = (0..states.len()).collect();
    let inputs = abs.input_grid().len();
    let mut trans = Vec::new();
    let mut head = 0;
    while head < states.len() {
        let x = states[head].clone();
        for u in 0..inputs {
            for succ in abs.enumerate_successors(&x, u) {
                let id = match index.get(&succ) {
                    Some(&id) => id,
                    None => {
                        if states.len() >= state_ceiling {
                            return Err(Error::Budget(format!(
                                "symbolic model exceeds {state_ceiling} states ({} expanded so far)",
                                head
                            )));
                        }
                        index.insert(succ.clone(), states.len());
                        states.push(succ);
                        states.len() - 1
                    }
                };
                trans.push((head, u, id));
                if trans.len() > MAX_TRANSITIONS {
                    return Err(Error::Budget(format!(
                        "symbolic model exceeds {MAX_TRANSITIONS} transitions ({head} states expanded so far)"
                    )));
                }
            }
        }
        head += 1;
    }
    let outputs = states.iter().map(|s| abs.output_of(s)).collect();
    let system = FiniteSystem::new(outputs, initials, inputs, trans)?;
    Ok(SymbolicModel { system, states, state_grid: abs.state_grid, input_grid: abs.input_grid })
}
