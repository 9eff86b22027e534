//! Python module `symctl`: certificate checks, controller synthesis and
//! seeded closed-loop runs, all driven by TOML config text.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use symctl::closed_loop::{run_closed_loop, verify_run};
use symctl::config::RunConfig;
use symctl::plant::certify_fc;
use symctl::quantization::Grid;
use symctl::robust::{synthesize_robust, RobustOptions};
use symctl::synthesis::{synthesize_integrated, violated_inequality, Controller};
use symctl::{Error, Result};

/// Grid sizes, address widths and the iteration bounds of a config.
pub fn report(config: &str) -> Result<BTreeMap<String, f64>> {
    let cfg = RunConfig::parse(config)?;
    let plant = cfg.plant()?;
    let (bx, bu) = cfg.bits()?;
    let env = cfg.envelope()?;
    let sg = Grid::new(plant.state_box().clone(), cfg.params.mu_x)?;
    let ig = Grid::new(plant.input_box().clone(), cfg.params.mu_u)?;
    Ok(BTreeMap::from([
        ("state_points".into(), sg.len() as f64),
        ("input_points".into(), ig.len() as f64),
        ("state_bits".into(), bx as f64),
        ("input_bits".into(), bu as f64),
        ("delta_min".into(), env.delta_min),
        ("delta_max".into(), env.delta_max),
        ("n_min".into(), env.n_min as f64),
        ("n_max".into(), env.n_max as f64),
    ]))
}

/// Samples the certificate; returns the verdict and violation figures.
pub fn certify(config: &str) -> Result<(bool, BTreeMap<String, f64>)> {
    let cfg = RunConfig::parse(config)?;
    let rep = certify_fc(&cfg.plant()?, &cfg.certificate()?, cfg.params.cert_samples, cfg.params.seed);
    let figures = BTreeMap::from([
        ("samples".into(), rep.samples as f64),
        ("failures".into(), rep.failures as f64),
        ("max_violation".into(), rep.max_violation),
        ("decay_violation".into(), rep.decay_violation),
        ("sandwich_violation".into(), rep.sandwich_violation),
        ("gamma_violation".into(), rep.gamma_violation),
    ]);
    Ok((rep.pass, figures))
}

/// Runs `integrated` or `robust` synthesis; returns whether a controller
/// was found, its text form and the search counters.
pub fn synthesize(config: &str, mode: &str) -> Result<(bool, String, BTreeMap<String, u64>)> {
    let cfg = RunConfig::parse(config)?;
    let plant = cfg.plant()?;
    let cert = cfg.certificate()?;
    let spec = cfg.spec_graph()?;
    let env = cfg.envelope()?;
    let p = cfg.synthesis_params();
    if let Some(ineq) = violated_inequality(&p, &cert, plant.state_box()) {
        return Err(Error::Config(format!("parameters violate {ineq}")));
    }
    let nb = (env.n_min, env.n_max);
    let (found, ctrl, d) = match mode {
        "integrated" => {
            let o = synthesize_integrated(&plant, &spec, nb, &p, cfg.integrated_options(false))?;
            (o.found, o.controller, o.diagnostics)
        }
        "robust" => {
            let opts = RobustOptions { limits: cfg.limits(), initial_input: cfg.initial_input()? };
            let o = synthesize_robust(&plant, &cert, &spec, nb, &p, &opts)?;
            (o.found, o.controller, o.diagnostics)
        }
        other => return Err(Error::InvalidParameter(format!("unknown mode {other:?}; expected integrated or robust"))),
    };
    let counters = BTreeMap::from([
        ("controller_entries".into(), ctrl.len() as u64),
        ("bad_entries".into(), ctrl.bad().len() as u64),
        ("visits".into(), d.visits),
        ("rollbacks".into(), d.rollbacks),
    ]);
    Ok((found, ctrl.to_text(), counters))
}

/// One seeded closed-loop realization; returns whether the run satisfies
/// the spec and the trace as CSV.
pub fn simulate(config: &str, controller: &str, seed: u64) -> Result<(bool, String)> {
    let cfg = RunConfig::parse(config)?;
    let ctrl = Controller::from_text(controller)?;
    if ctrl.is_empty() {
        return Err(Error::Config("the controller is empty".into()));
    }
    let plant = cfg.plant()?;
    let env = cfg.envelope()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trace = run_closed_loop(&plant, &ctrl, &cfg.network, &env, &cfg.initial_state()?, cfg.params.iterations, &cfg.loop_options()?, &mut rng)?;
    let v = verify_run(&trace, &cfg.spec_graph()?, cfg.params.eps);
    Ok((v.satisfied, trace.to_csv(ctrl.state_grid())))
}

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Budget(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyfunction(name = "report")]
fn py_report(config: &str) -> PyResult<BTreeMap<String, f64>> {
    report(config).map_err(to_py)
}

#[pyfunction(name = "certify")]
fn py_certify(config: &str) -> PyResult<(bool, BTreeMap<String, f64>)> {
    certify(config).map_err(to_py)
}

#[pyfunction(name = "synthesize")]
#[pyo3(signature = (config, mode = "integrated"))]
fn py_synthesize(py: Python<'_>, config: &str, mode: &str) -> PyResult<(bool, String, BTreeMap<String, u64>)> {
    py.detach(|| synthesize(config, mode)).map_err(to_py)
}

#[pyfunction(name = "simulate")]
#[pyo3(signature = (config, controller, seed = 0))]
fn py_simulate(py: Python<'_>, config: &str, controller: &str, seed: u64) -> PyResult<(bool, String)> {
    py.detach(|| simulate(config, controller, seed)).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "symctl")]
fn symctl_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(py_report, m)?)?;
    m.add_function(wrap_pyfunction!(py_certify, m)?)?;
    m.add_function(wrap_pyfunction!(py_synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(py_simulate, m)?)?;
    Ok(())
}
