use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use symctl::abstraction::{build_symbolic_model, check_abstraction_params, successor_ball_radius, AbstractionParams};
use symctl::closed_loop::{run_closed_loop, verify_run, Termination};
use symctl::config::RunConfig;
use symctl::plant::certify_fc;
use symctl::quantization::Grid;
use symctl::robust::{synthesize_robust, RobustOptions};
use symctl::spec::lift_spec;
use symctl::synthesis::{
    project_outputs, synthesize_integrated, synthesize_naive, violated_inequality, ComplexityReport, Controller, Diagnostics,
};
use symctl::Error;

#[derive(Parser)]
#[command(name = "symctl", version, about = "Symbolic controllers for plants closed over non-ideal networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Recursive search over grid states.
    Integrated,
    /// Maximal controller over the full symbolic model.
    Naive,
    /// Lag-aware search over whole cells.
    Robust,
}

#[derive(Subcommand)]
enum Command {
    /// Check the δ-FC certificate on seeded random samples.
    Certify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a controller and write it as text.
    Synthesize {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Integrated)]
        mode: Mode,
        /// Clear the controller before each top-level candidate, as the
        /// pseudocode does.
        #[arg(long)]
        strict_pseudocode: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run seeded closed-loop realizations and write one CSV per run.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long, default_value_t = 1)]
        realizations: usize,
        /// Overrides `params.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print grid sizes, timing bounds and parameter checks.
    Report {
        config: PathBuf,
        #[arg(long)]
        controller: Option<PathBuf>,
    },
}

/// Exit codes: 0 success, 1 infeasible or unsatisfied, 2 config error,
/// 3 budget exceeded.
enum Outcome {
    Success,
    Failure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Failure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let budget = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Budget(_))));
            ExitCode::from(if budget { 3 } else { 2 })
        }
    }
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Certify { config, out } => certify(&load(&config)?, out.as_deref()),
        Command::Synthesize { config, mode, strict_pseudocode, out } => synthesize(&load(&config)?, mode, strict_pseudocode, &out),
        Command::Simulate { config, controller, realizations, seed, out_dir } => {
            let cfg = load(&config)?;
            let seed = seed.unwrap_or(cfg.params.seed);
            simulate(&cfg, &controller, realizations, seed, &out_dir)
        }
        Command::Report { config, controller } => report(&load(&config)?, controller.as_deref()),
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(v) = env_override("SYMCTL_MAX_VISITS")? {
        cfg.params.max_visits = v;
    }
    if let Some(v) = env_override("SYMCTL_MAX_DEPTH")? {
        cfg.params.max_depth = v as usize;
    }
    Ok(cfg)
}

fn env_override(key: &str) -> Result<Option<u64>> {
    match std::env::var(key) {
        Ok(v) => Ok(Some(v.trim().parse().map_err(|_| Error::Config(format!("{key}: not a count: {v}")))?)),
        Err(_) => Ok(None),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn certify(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let plant = cfg.plant()?;
    let cert = cfg.certificate()?;
    let rep = certify_fc(&plant, &cert, cfg.params.cert_samples, cfg.params.seed);
    let mut s = String::new();
    writeln!(s, "samples {}", rep.samples)?;
    writeln!(s, "seed {}", cfg.params.seed)?;
    writeln!(s, "decay_violation {:e} failures {}", rep.decay_violation, rep.decay_failures)?;
    writeln!(s, "sandwich_violation {:e} failures {}", rep.sandwich_violation, rep.sandwich_failures)?;
    writeln!(s, "gamma_violation {:e} failures {}", rep.gamma_violation, rep.gamma_failures)?;
    writeln!(s, "max_violation {:e}", rep.max_violation)?;
    if let (false, Some(w)) = (rep.pass, &rep.worst) {
        writeln!(s, "worst x1 {:?} x2 {:?} x3 {:?} u {:?}", w.x1, w.x2, w.x3, w.u)?;
    }
    writeln!(s, "result {}", if rep.pass { "pass" } else { "fail" })?;
    print!("{s}");
    if let Some(path) = out {
        write(path, &s)?;
    }
    Ok(if rep.pass { Outcome::Success } else { Outcome::Failure })
}

fn complexity_table(c: &ComplexityReport, d: Option<&Diagnostics>) -> String {
    let mut s = String::from("quantity               value\n");
    let mut row = |k: &str, v: String| {
        let _ = writeln!(s, "{k:<22} {v}");
    };
    row("controller_entries", c.controller_entries.to_string());
    row("bad_entries", c.bad_entries.to_string());
    row("peak_extended_states", c.peak_extended_states.to_string());
    row("integers", c.integers().to_string());
    if let Some(d) = d {
        row("visits", d.visits.to_string());
        row("revisits", d.revisits.to_string());
        row("reuse_events", d.reuse_events.to_string());
        row("candidates", d.candidates.to_string());
        row("rollbacks", d.rollbacks.to_string());
        row("peak_depth", d.peak_depth.to_string());
    }
    s
}

fn synthesize(cfg: &RunConfig, mode: Mode, strict: bool, out: &Path) -> Result<Outcome> {
    let plant = cfg.plant()?;
    let cert = cfg.certificate()?;
    let rep = certify_fc(&plant, &cert, cfg.params.cert_samples, cfg.params.seed);
    if !rep.pass {
        bail!(Error::Config(format!("certificate fails on {} of {} samples (max violation {:e})", rep.failures, rep.samples, rep.max_violation)));
    }
    let spec = cfg.spec_graph()?;
    let env = cfg.envelope()?;
    let nb = (env.n_min, env.n_max);
    let p = cfg.synthesis_params();
    println!("N_min {} N_max {}", env.n_min, env.n_max);
    let (found, text, table) = match mode {
        Mode::Integrated | Mode::Robust => {
            if let Some(ineq) = violated_inequality(&p, &cert, plant.state_box()) {
                bail!(Error::Config(format!("parameters violate {ineq}")));
            }
            if mode == Mode::Integrated {
                let o = synthesize_integrated(&plant, &spec, nb, &p, cfg.integrated_options(strict))?;
                (o.found, o.controller.to_text(), complexity_table(&o.complexity(), Some(&o.diagnostics)))
            } else {
                let opts = RobustOptions { limits: cfg.limits(), initial_input: cfg.initial_input()? };
                let o = synthesize_robust(&plant, &cert, &spec, nb, &p, &opts)?;
                let c = ComplexityReport { controller_entries: o.controller.len(), bad_entries: o.controller.bad().len(), peak_extended_states: 0 };
                (o.found, o.controller.to_text(), complexity_table(&c, Some(&o.diagnostics)))
            }
        }
        Mode::Naive => {
            // the symbolic model approximates the plant within θ
            let ap = AbstractionParams { eps: p.theta, ..cfg.abstraction_params() };
            if !check_abstraction_params(&ap, &cert, plant.state_box()) {
                bail!(Error::Config("parameters violate μx ≤ min{μ̂_X, ᾱ⁻¹(α̲(θ))} ≤ η".into()));
            }
            if p.mu_x + p.theta > p.eps {
                bail!(Error::Config("parameters violate μx + θ ≤ ε".into()));
            }
            let model = build_symbolic_model(&plant, &cert, &env, ap, cfg.params.state_ceiling)?;
            let (q, _) = lift_spec(&spec, nb.0, nb.1, cfg.params.state_ceiling)?;
            let o = synthesize_naive(&project_outputs(&model.system, &spec.axes), &q, p.mu_x);
            (o.found(), format!("{NAIVE_HEADER}\n{}", o.controller.to_text()), complexity_table(&o.complexity(), None))
        }
    };
    write(out, &text)?;
    print!("{table}");
    println!("found {found}");
    Ok(if found { Outcome::Success } else { Outcome::Failure })
}

/// First line of a naive-mode controller file: a finite system over
/// extended states, which the sampled loop cannot execute.
const NAIVE_HEADER: &str = "symctl-naive-controller 1";

fn read_controller(path: &Path) -> Result<Controller> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.starts_with(NAIVE_HEADER) {
        bail!(Error::Config(format!("{} is a naive-mode controller over extended states; use an integrated or robust controller", path.display())));
    }
    Ok(Controller::from_text(&text).context("parsing the controller file")?)
}

fn termination_label(t: &Termination) -> String {
    match t {
        Termination::Completed => "completed".into(),
        Termination::Blocked { k, .. } => format!("blocked@{k}"),
        Termination::Excursion { sample } => format!("excursion@{sample}"),
    }
}

fn simulate(cfg: &RunConfig, controller: &Path, realizations: usize, seed: u64, out_dir: &Path) -> Result<Outcome> {
    let ctrl = read_controller(controller)?;
    let plant = cfg.plant()?;
    let sg = Grid::new(plant.state_box().clone(), cfg.params.mu_x)?;
    let ig = Grid::new(plant.input_box().clone(), cfg.params.mu_u)?;
    if ctrl.state_grid() != &sg || ctrl.input_grid() != &ig {
        bail!(Error::Config("controller grids do not match the config".into()));
    }
    if ctrl.is_empty() {
        bail!(Error::Config("the controller is empty".into()));
    }
    let spec = cfg.spec_graph()?;
    let env = cfg.envelope()?;
    let opts = cfg.loop_options()?;
    let x0 = cfg.initial_state()?;
    let mut summary = String::from("run,seed,termination,satisfied,samples\n");
    let mut ok = 0;
    for i in 0..realizations {
        let s = seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let trace = run_closed_loop(&plant, &ctrl, &cfg.network, &env, &x0, cfg.params.iterations, &opts, &mut rng)?;
        let v = verify_run(&trace, &spec, cfg.params.eps);
        ok += v.satisfied as usize;
        write(&out_dir.join(format!("trace_{i:04}.csv")), &trace.to_csv(ctrl.state_grid()))?;
        writeln!(summary, "{i},{s},{},{},{}", termination_label(&trace.termination), v.satisfied, trace.states.len())?;
    }
    write(&out_dir.join("summary.csv"), &summary)?;
    println!("satisfied {ok}/{realizations}");
    Ok(if ok == realizations { Outcome::Success } else { Outcome::Failure })
}

fn report(cfg: &RunConfig, controller: Option<&Path>) -> Result<Outcome> {
    let plant = cfg.plant()?;
    let (bx, bu) = cfg.bits()?;
    let env = cfg.envelope()?;
    let p = cfg.synthesis_params();
    let sg = Grid::new(plant.state_box().clone(), p.mu_x)?;
    let ig = Grid::new(plant.input_box().clone(), p.mu_u)?;
    println!("plant {}", plant.name());
    println!("state_grid {} points, {bx} bits", sg.len());
    println!("input_grid {} points, {bu} bits", ig.len());
    println!("delta_min {:.6} s", env.delta_min);
    println!("delta_max {:.6} s", env.delta_max);
    println!("N_min {} N_max {}", env.n_min, env.n_max);
    let spec = cfg.spec_graph()?;
    println!("spec_nodes {}", spec.nodes.len());
    if let Some(cert) = &cfg.certificate {
        let ap = cfg.abstraction_params();
        let label = |ok: bool| if ok { "ok" } else { "violated" };
        println!("abstraction_params {}", label(check_abstraction_params(&ap, cert, plant.state_box())));
        let naive = AbstractionParams { eps: p.theta, ..ap };
        println!("naive_abstraction_params {}", label(check_abstraction_params(&naive, cert, plant.state_box())));
        println!("successor_radius {:.6}", successor_ball_radius(cert, p.eta, p.mu_x, p.tau));
        match violated_inequality(&p, cert, plant.state_box()) {
            None => println!("synthesis_params ok"),
            Some(ineq) => println!("synthesis_params violated: {ineq}"),
        }
    }
    if let Some(path) = controller {
        let ctrl = read_controller(path)?;
        println!("controller_entries {}", ctrl.len());
        println!("bad_entries {}", ctrl.bad().len());
        if let Some(mode) = ctrl.param("mode") {
            println!("controller_mode {mode}");
        }
    }
    Ok(Outcome::Success)
}
