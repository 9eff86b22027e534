//! TOML run configuration: plant, certificate, network, spec and solver
//! parameters in one file.

use serde::Deserialize;

use crate::abstraction::AbstractionParams;
use crate::closed_loop::LoopOptions;
use crate::error::{Error, Result};
use crate::network::{envelope, DelayEnvelope, NetworkConfig};
use crate::plant::{ControlSystem, FcCertificate};
use crate::quantization::{encode_bits, grid_count, Rect};
use crate::spec::SpecGraph;
use crate::synthesis::{IntegratedOptions, Limits, ReusePolicy, SynthesisParams};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSection {
    fn rect(&self, field: &str) -> Result<Rect> {
        Rect::new(self.lower.clone(), self.upper.clone()).map_err(|e| Error::Config(format!("{field}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// `unicycle` or `scalar_linear` (`ẋ = a·x + u`, needs `a`).
    pub name: String,
    pub a: Option<f64>,
    pub state_box: Option<BoxSection>,
    pub input_box: Option<BoxSection>,
    pub init_box: Option<BoxSection>,
    pub h_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSection {
    pub waypoints: Vec<Vec<f64>>,
    pub spacing: f64,
    #[serde(default)]
    pub dwell: usize,
    #[serde(default = "one")]
    pub lookahead: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecSection {
    pub axes: Vec<usize>,
    pub route: Option<RouteSection>,
    pub nodes: Option<Vec<Vec<f64>>>,
    pub edges: Option<Vec<(usize, usize)>>,
    pub initials: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reuse {
    Literal,
    #[default]
    Anchored,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub eps: f64,
    pub theta: f64,
    pub mu_x: f64,
    pub mu_u: f64,
    pub eta: f64,
    pub seed: u64,
    #[serde(default = "default_visits")]
    pub max_visits: u64,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default)]
    pub reuse: Reuse,
    /// Hold input before the first refresh; zero when absent.
    pub initial_input: Option<Vec<f64>>,
    /// Start of every simulated realization; the origin when absent.
    pub initial_state: Option<Vec<f64>>,
    /// Loop iterations per simulated realization.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_cert_samples")]
    pub cert_samples: usize,
    /// Cap on extended states for the naive path.
    #[serde(default = "default_ceiling")]
    pub state_ceiling: usize,
}

fn default_visits() -> u64 {
    Limits::default().max_visits
}
fn default_depth() -> usize {
    Limits::default().max_depth
}
fn default_iterations() -> usize {
    100
}
fn default_cert_samples() -> usize {
    10_000
}
fn default_ceiling() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSection,
    pub certificate: Option<FcCertificate>,
    pub network: NetworkConfig,
    pub spec: SpecSection,
    pub params: ParamsSection,
}

impl RunConfig {
    /// Parses and validates every section.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        let plant = self.plant()?;
        if let Some(c) = &self.certificate {
            c.validate().map_err(|e| Error::Config(format!("certificate: {e}")))?;
        }
        self.network.validate().map_err(|e| Error::Config(format!("network: {e}")))?;
        let spec = self.spec_graph()?;
        if spec.axes.iter().any(|&a| a >= plant.state_dim()) {
            return Err(Error::Config(format!("spec.axes: {:?} exceeds the state dimension {}", spec.axes, plant.state_dim())));
        }
        let p = &self.params;
        for (name, v) in [("eps", p.eps), ("theta", p.theta), ("mu_x", p.mu_x), ("mu_u", p.mu_u), ("eta", p.eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("params.{name}: must be positive, got {v}")));
            }
        }
        if let Some(u) = &p.initial_input {
            if u.len() != plant.input_dim() {
                return Err(Error::Config(format!("params.initial_input: expected {} components", plant.input_dim())));
            }
        }
        if let Some(x) = &p.initial_state {
            if x.len() != plant.state_dim() || !plant.init_box().contains(x) {
                return Err(Error::Config(format!("params.initial_state: {x:?} is not in the initial set")));
            }
        }
        grid_count(plant.state_box(), p.mu_x).map_err(|e| Error::Config(format!("params.mu_x: {e}")))?;
        grid_count(plant.input_box(), p.mu_u).map_err(|e| Error::Config(format!("params.mu_u: {e}")))?;
        Ok(())
    }

    pub fn plant(&self) -> Result<ControlSystem> {
        let s = &self.plant;
        let mut sys = match (s.name.as_str(), s.a) {
            ("unicycle", None) => ControlSystem::unicycle(),
            ("scalar_linear", Some(a)) => {
                let x = Rect::new(vec![-1.0], vec![1.0])?;
                ControlSystem::scalar_linear(a, x.clone(), x)?
            }
            ("unicycle", Some(_)) => return Err(Error::Config("plant.a: only scalar_linear takes a coefficient".into())),
            ("scalar_linear", None) => return Err(Error::Config("plant.a: required for scalar_linear".into())),
            (other, _) => return Err(Error::Config(format!("plant.name: unknown plant `{other}`"))),
        };
        if s.state_box.is_some() || s.input_box.is_some() {
            let sb = match &s.state_box {
                Some(b) => b.rect("plant.state_box")?,
                None => sys.state_box().clone(),
            };
            let ib = match &s.input_box {
                Some(b) => b.rect("plant.input_box")?,
                None => sys.input_box().clone(),
            };
            sys = sys.with_boxes(sb, ib).map_err(|e| Error::Config(format!("plant: {e}")))?;
        }
        if let Some(b) = &s.init_box {
            sys = sys.with_init_box(b.rect("plant.init_box")?).map_err(|e| Error::Config(format!("plant.init_box: {e}")))?;
        }
        if let Some(h) = s.h_max {
            sys = sys.with_step(h).map_err(|e| Error::Config(format!("plant.h_max: {e}")))?;
        }
        Ok(sys)
    }

    pub fn certificate(&self) -> Result<FcCertificate> {
        self.certificate.clone().ok_or_else(|| Error::Config("missing [certificate] section".into()))
    }

    pub fn spec_graph(&self) -> Result<SpecGraph> {
        let s = &self.spec;
        let g = match (&s.route, &s.nodes) {
            (Some(r), None) => SpecGraph::route(&r.waypoints, r.spacing, r.dwell, r.lookahead, s.axes.clone()),
            (None, Some(nodes)) => {
                let edges = s.edges.clone().ok_or_else(|| Error::Config("spec.edges: required with spec.nodes".into()))?;
                let initials = s.initials.clone().ok_or_else(|| Error::Config("spec.initials: required with spec.nodes".into()))?;
                SpecGraph::new(nodes.clone(), edges, initials, s.axes.clone())
            }
            _ => return Err(Error::Config("spec: give exactly one of spec.route or spec.nodes".into())),
        };
        g.map_err(|e| Error::Config(format!("spec: {e}")))
    }

    pub fn synthesis_params(&self) -> SynthesisParams {
        let p = &self.params;
        SynthesisParams { eps: p.eps, theta: p.theta, mu_x: p.mu_x, mu_u: p.mu_u, eta: p.eta, tau: self.network.tau }
    }

    pub fn abstraction_params(&self) -> AbstractionParams {
        let p = &self.params;
        AbstractionParams { eps: p.eps, eta: p.eta, mu_x: p.mu_x, mu_u: p.mu_u, tau: self.network.tau }
    }

    /// Encoding lengths of a quantized state and a quantized input.
    pub fn bits(&self) -> Result<(u32, u32)> {
        let plant = self.plant()?;
        Ok((encode_bits(grid_count(plant.state_box(), self.params.mu_x)?), encode_bits(grid_count(plant.input_box(), self.params.mu_u)?)))
    }

    pub fn envelope(&self) -> Result<DelayEnvelope> {
        let (bx, bu) = self.bits()?;
        Ok(envelope(&self.network, bx, bu))
    }

    pub fn limits(&self) -> Limits {
        Limits { max_visits: self.params.max_visits, max_depth: self.params.max_depth }
    }

    pub fn integrated_options(&self, strict_pseudocode: bool) -> IntegratedOptions {
        let reuse = match self.params.reuse {
            Reuse::Literal => ReusePolicy::Literal,
            Reuse::Anchored => ReusePolicy::Anchored,
        };
        IntegratedOptions { limits: self.limits(), reuse, strict_pseudocode }
    }

    pub fn initial_input(&self) -> Result<Vec<f64>> {
        Ok(match &self.params.initial_input {
            Some(u) => u.clone(),
            None => vec![0.0; self.plant()?.input_dim()],
        })
    }

    pub fn initial_state(&self) -> Result<Vec<f64>> {
        Ok(match &self.params.initial_state {
            Some(x) => x.clone(),
            None => vec![0.0; self.plant()?.state_dim()],
        })
    }

    pub fn loop_options(&self) -> Result<LoopOptions> {
        Ok(LoopOptions { theta: self.params.theta, initial_input: self.initial_input()? })
    }
}
