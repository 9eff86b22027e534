//! Continuous plants `ẋ = f(x, u)`, fixed-step RK4 flows under constant inputs,
//! and numerical validation of incremental forward-completeness certificates.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantization::{linf, Rect};

pub const DEFAULT_H_MAX: f64 = 0.01;
/// Central finite-difference step for derivatives of `V`.
pub const FD_STEP: f64 = 1e-6;
const CERT_TOL: f64 = 1e-6;

/// Right-hand side of the plant ODE.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
    /// Componentwise bound on `|x(t, a, u) − x(t, b, u)|` given
    /// `|a − b| ≤ r0` componentwise, when one is known in closed form.
    fn growth_bound(&self, _r0: &[f64], _u: &[f64], _t: f64) -> Option<Vec<f64>> {
        None
    }
}

/// Kinematic unicycle: position `(x₁, x₂)`, heading `x₃`, inputs forward and
/// angular velocity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unicycle;

impl Dynamics for Unicycle {
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = u[0] * x[2].cos();
        dx[1] = u[0] * x[2].sin();
        dx[2] = u[1];
    }
    fn growth_bound(&self, r0: &[f64], u: &[f64], t: f64) -> Option<Vec<f64>> {
        // the heading error is constant and leaks into position at rate |u₁|
        let lean = u[0].abs() * t * r0[2];
        Some(vec![r0[0] + lean, r0[1] + lean, r0[2]])
    }
}

/// Scalar linear plant `ẋ = a·x + u`; unstable for `a > 0`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarLinear {
    pub a: f64,
}

impl Dynamics for ScalarLinear {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = self.a * x[0] + u[0];
    }
    fn growth_bound(&self, r0: &[f64], _u: &[f64], t: f64) -> Option<Vec<f64>> {
        Some(vec![(self.a * t).exp() * r0[0]])
    }
}

/// Result of integrating a flow that must stay inside the state box.
#[derive(Debug, Clone, PartialEq)]
pub enum Flow {
    Reached(Vec<f64>),
    /// The trajectory left the state box; `state` is the first integration
    /// node outside it and `time` its time stamp.
    Excursion { state: Vec<f64>, time: f64 },
}

impl Flow {
    pub fn reached(self) -> Option<Vec<f64>> {
        match self {
            Flow::Reached(x) => Some(x),
            Flow::Excursion { .. } => None,
        }
    }
}

#[derive(Clone)]
pub struct ControlSystem {
    name: String,
    dynamics: Arc<dyn Dynamics>,
    state_box: Rect,
    init_box: Rect,
    input_box: Rect,
    h_max: f64,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("name", &self.name)
            .field("state_box", &self.state_box)
            .field("init_box", &self.init_box)
            .field("input_box", &self.input_box)
            .field("h_max", &self.h_max)
            .finish()
    }
}

impl ControlSystem {
    pub fn new(
        name: impl Into<String>,
        dynamics: Arc<dyn Dynamics>,
        state_box: Rect,
        init_box: Rect,
        input_box: Rect,
    ) -> Result<Self> {
        let n = dynamics.state_dim();
        let m = dynamics.input_dim();
        for (b, d) in [(&state_box, n), (&init_box, n), (&input_box, m)] {
            if b.dim() != d {
                return Err(Error::Dimension { expected: d, got: b.dim() });
            }
        }
        if !init_box.is_subset_of(&state_box) {
            return Err(Error::InvalidSystem("initial set is not contained in the state set".into()));
        }
        let mut dx = vec![0.0; n];
        dynamics.eval(&vec![0.0; n], &vec![0.0; m], &mut dx);
        if dx.iter().any(|v| v.abs() > 1e-12) {
            return Err(Error::InvalidSystem(format!("f(0, 0) = {dx:?}, expected the origin")));
        }
        Ok(Self { name: name.into(), dynamics, state_box, init_box, input_box, h_max: DEFAULT_H_MAX })
    }

    pub fn unicycle() -> Self {
        use std::f64::consts::PI;
        let x = Rect::new(vec![-1.0, -1.0, -PI], vec![1.0, 1.0, PI]).expect("static box");
        let u = Rect::new(vec![-1.0, -1.0], vec![1.0, 1.0]).expect("static box");
        Self::new("unicycle", Arc::new(Unicycle), x.clone(), x, u).expect("static plant")
    }

    pub fn scalar_linear(a: f64, state_box: Rect, input_box: Rect) -> Result<Self> {
        Self::new("scalar_linear", Arc::new(ScalarLinear { a }), state_box.clone(), state_box, input_box)
    }

    pub fn with_step(mut self, h_max: f64) -> Result<Self> {
        if !(h_max.is_finite() && h_max > 0.0) {
            return Err(Error::InvalidParameter(format!("h_max must be positive, got {h_max}")));
        }
        self.h_max = h_max;
        Ok(self)
    }

    /// Replaces the state and input boxes; the initial set becomes the new
    /// state box.
    pub fn with_boxes(self, state_box: Rect, input_box: Rect) -> Result<Self> {
        let h_max = self.h_max;
        Self::new(self.name, self.dynamics, state_box.clone(), state_box, input_box)?.with_step(h_max)
    }

    pub fn with_init_box(mut self, init_box: Rect) -> Result<Self> {
        if !init_box.is_subset_of(&self.state_box) {
            return Err(Error::InvalidSystem("initial set is not contained in the state set".into()));
        }
        self.init_box = init_box;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }
    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }
    pub fn state_box(&self) -> &Rect {
        &self.state_box
    }
    pub fn init_box(&self) -> &Rect {
        &self.init_box
    }
    pub fn input_box(&self) -> &Rect {
        &self.input_box
    }
    pub fn growth_bound(&self, r0: &[f64], u: &[f64], t: f64) -> Option<Vec<f64>> {
        self.dynamics.growth_bound(r0, u, t)
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// `f(x, u)` without domain checks.
    pub fn field_unchecked(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        self.dynamics.eval(x, u, dx);
    }

    pub fn eval_field(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, u)?;
        let mut dx = vec![0.0; self.state_dim()];
        self.dynamics.eval(x, u, &mut dx);
        Ok(dx)
    }

    fn check_point(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension { expected: self.state_dim(), got: x.len() });
        }
        if u.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: u.len() });
        }
        if !self.state_box.contains(x) {
            return Err(Error::OutOfDomain { what: "state", value: x.to_vec() });
        }
        if !self.input_box.contains_closed(u) {
            return Err(Error::OutOfDomain { what: "input", value: u.to_vec() });
        }
        Ok(())
    }

    /// `x(t, x0, u)` by classical RK4 with `h = t / ⌈t / h_max⌉`.
    pub fn integrate(&self, x0: &[f64], u: &[f64], t: f64) -> Result<Flow> {
        self.check_point(x0, u)?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("integration time must be nonnegative, got {t}")));
        }
        Ok(self.flow_unchecked(x0, u, t))
    }

    /// Same as [`integrate`](Self::integrate) without precondition checks on
    /// `x0` and `u`; excursions are still reported.
    pub fn flow_unchecked(&self, x0: &[f64], u: &[f64], t: f64) -> Flow {
        let n = self.state_dim();
        let steps = (t / self.h_max - 1e-9).ceil().max(0.0) as usize;
        let mut x = x0.to_vec();
        if steps == 0 {
            return Flow::Reached(x);
        }
        let h = t / steps as f64;
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for s in 0..steps {
            self.dynamics.eval(&x, u, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            self.dynamics.eval(&tmp, u, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            self.dynamics.eval(&tmp, u, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            self.dynamics.eval(&tmp, u, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if !self.state_box.contains(&x) {
                return Flow::Excursion { state: x, time: h * (s + 1) as f64 };
            }
        }
        Flow::Reached(x)
    }

    /// `(x(τ), x(2τ), …, x(Nτ))` under a constant input. Stops at the first
    /// excursion and reports it.
    pub fn sample_trajectory(&self, x0: &[f64], u: &[f64], tau: f64, count: usize) -> Result<Result<Vec<Vec<f64>>, Flow>> {
        self.check_point(x0, u)?;
        if count == 0 || !(tau > 0.0) {
            return Err(Error::InvalidParameter("need N ≥ 1 samples and τ > 0".into()));
        }
        Ok(self.samples_unchecked(x0, u, tau, count))
    }

    pub(crate) fn samples_unchecked(&self, x0: &[f64], u: &[f64], tau: f64, count: usize) -> Result<Vec<Vec<f64>>, Flow> {
        let mut out = Vec::with_capacity(count);
        let mut x = x0.to_vec();
        for _ in 0..count {
            match self.flow_unchecked(&x, u, tau) {
                Flow::Reached(next) => {
                    out.push(next.clone());
                    x = next;
                }
                exc @ Flow::Excursion { .. } => return Err(exc),
            }
        }
        Ok(out)
    }
}

/// Continuous, strictly increasing function with `κ(0) = 0`, stored by name
/// with an analytic inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KinfFn {
    /// `c·r`
    Linear { c: f64 },
    /// `c·r²`
    Quadratic { c: f64 },
    /// `c·r^p`
    Power { c: f64, p: f64 },
}

impl KinfFn {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            KinfFn::Linear { c } => c * r,
            KinfFn::Quadratic { c } => c * r * r,
            KinfFn::Power { c, p } => c * r.powf(p),
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        match *self {
            KinfFn::Linear { c } => v / c,
            KinfFn::Quadratic { c } => (v / c).sqrt(),
            KinfFn::Power { c, p } => (v / c).powf(1.0 / p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KinfFn::Linear { c } | KinfFn::Quadratic { c } => c > 0.0 && c.is_finite(),
            KinfFn::Power { c, p } => c > 0.0 && p > 0.0 && c.is_finite() && p.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?} is not a K-infinity function")))
        }
    }
}

/// Incremental Lyapunov candidate `V(x₁, x₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementalLyapunov {
    /// `c·‖x₁ − x₂‖₂²`
    Quadratic { c: f64 },
}

impl IncrementalLyapunov {
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> f64 {
        match *self {
            IncrementalLyapunov::Quadratic { c } => c * x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        }
    }
}

/// δ-FC Lyapunov data: `V`, the rate `λ`, sandwich bounds `α̲ ≤ V ≤ ᾱ` (in the
/// infinity norm) and the `γ` of the triangle-like inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcCertificate {
    pub v: IncrementalLyapunov,
    pub lambda: f64,
    pub alpha_lo: KinfFn,
    pub alpha_hi: KinfFn,
    pub gamma: KinfFn,
}

impl FcCertificate {
    /// `V = c‖·‖₂²` on `ℝⁿ`, whose tight infinity-norm bounds are `c·r²` and
    /// `c·n·r²`.
    pub fn quadratic(n: usize, c: f64, lambda: f64, gamma: KinfFn) -> Self {
        Self {
            v: IncrementalLyapunov::Quadratic { c },
            lambda,
            alpha_lo: KinfFn::Quadratic { c },
            alpha_hi: KinfFn::Quadratic { c: c * n as f64 },
            gamma,
        }
    }

    /// Certificate for the unicycle, `λ = 2·u₁,max`, `γ(r) = 2πr`.
    pub fn unicycle() -> Self {
        Self::quadratic(3, 0.5, 2.0, KinfFn::Linear { c: 2.0 * std::f64::consts::PI })
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha_lo.validate()?;
        self.alpha_hi.validate()?;
        self.gamma.validate()?;
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("λ must be finite".into()));
        }
        Ok(())
    }

    /// `V̇` along `(f(x₁,u), f(x₂,u))` by a central difference of `V`.
    pub fn derivative(&self, sys: &ControlSystem, x1: &[f64], x2: &[f64], u: &[f64]) -> f64 {
        let n = x1.len();
        let mut f1 = vec![0.0; n];
        let mut f2 = vec![0.0; n];
        sys.field_unchecked(x1, u, &mut f1);
        sys.field_unchecked(x2, u, &mut f2);
        let shift = |x: &[f64], f: &[f64], h: f64| x.iter().zip(f).map(|(a, b)| a + h * b).collect::<Vec<_>>();
        let plus = self.v.eval(&shift(x1, &f1, FD_STEP), &shift(x2, &f2, FD_STEP));
        let minus = self.v.eval(&shift(x1, &f1, -FD_STEP), &shift(x2, &f2, -FD_STEP));
        (plus - minus) / (2.0 * FD_STEP)
    }
}

/// One sample of the certificate check: `V̇` is evaluated at `(x1, x2, u)`
/// and the `γ` inequality at `(x1; x2, x3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertSample {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CertReport {
    pub samples: usize,
    /// Largest `lhs − rhs` over all three conditions.
    pub max_violation: f64,
    pub decay_violation: f64,
    pub sandwich_violation: f64,
    pub gamma_violation: f64,
    /// Samples whose violation exceeded the tolerance.
    pub failures: usize,
    pub decay_failures: usize,
    pub sandwich_failures: usize,
    pub gamma_failures: usize,
    pub worst: Option<CertSample>,
    pub pass: bool,
}

/// Seeded random check of the certificate on `sample_count` draws.
pub fn certify_fc(sys: &ControlSystem, cert: &FcCertificate, sample_count: usize, seed: u64) -> CertReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<CertSample> = (0..sample_count.max(1))
        .map(|_| CertSample {
            x1: sys.state_box().sample(&mut rng),
            x2: sys.state_box().sample(&mut rng),
            x3: sys.state_box().sample(&mut rng),
            u: sys.input_box().sample(&mut rng),
        })
        .collect();
    certify_fc_on(sys, cert, &samples)
}

/// Certificate check on caller-provided samples.
pub fn certify_fc_on(sys: &ControlSystem, cert: &FcCertificate, samples: &[CertSample]) -> CertReport {
    let mut rep = CertReport { samples: samples.len(), ..Default::default() };
    let mut worst = f64::NEG_INFINITY;
    for s in samples {
        let v12 = cert.v.eval(&s.x1, &s.x2);
        let tol = CERT_TOL * (1.0 + cert.lambda.abs() * v12);

        let decay = cert.derivative(sys, &s.x1, &s.x2, &s.u) - cert.lambda * v12;
        let d12 = linf(&s.x1, &s.x2);
        let sandwich = (cert.alpha_lo.eval(d12) - v12).max(v12 - cert.alpha_hi.eval(d12));
        let gamma = v12 - cert.v.eval(&s.x1, &s.x3) - cert.gamma.eval(linf(&s.x2, &s.x3));

        rep.decay_violation = rep.decay_violation.max(decay);
        rep.sandwich_violation = rep.sandwich_violation.max(sandwich);
        rep.gamma_violation = rep.gamma_violation.max(gamma);
        rep.decay_failures += (decay > tol) as usize;
        rep.sandwich_failures += (sandwich > tol) as usize;
        rep.gamma_failures += (gamma > tol) as usize;
        let sample_worst = decay.max(sandwich).max(gamma);
        if decay > tol || sandwich > tol || gamma > tol {
            rep.failures += 1;
        }
        if sample_worst > worst {
            worst = sample_worst;
            rep.worst = Some(s.clone());
        }
    }
    rep.max_violation = rep.decay_violation.max(rep.sandwich_violation).max(rep.gamma_violation);
    rep.pass = rep.failures == 0;
    rep
}
