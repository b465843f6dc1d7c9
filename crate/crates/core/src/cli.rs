//! Command-line front end: `tnet <command> --spec <file> [--n N] [--reps R]
//! [--seed S] [--grid-h H] [--out DIR]`.
//!
//! Outputs are staged in a temporary directory inside `--out` and moved into
//! place only when the whole command succeeds, together with a run manifest.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bottleneck::{bottleneck_timeline, coarse_phases, BottleneckReport};
use crate::diffusion::{DiffusionModel, DiscontinuityKind, TandemDiffusion};
use crate::error::{argument, Error, Result};
use crate::fluid::{crossing_times, fluid_solve, FluidSolution};
use crate::model::{validate_spec, NetworkSpec};
use crate::parallel::{par_try_map, thread_cap};
use crate::paths::{fmt_sig12, VectorPath};
use crate::scenarios;
use crate::simulator::{fluid_scale, simulate, Trajectory};
use crate::stochastic::{tag, RngStream};
use crate::verify::{check_fclt_queue, check_fslln_arrivals, check_service_routing, ConvergenceResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Simulate,
    Fluid,
    Diffuse,
    Bottlenecks,
    Verify,
    Reproduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyCheck {
    Fslln,
    Fclt,
    ServiceRouting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Example1,
    Example2,
    TandemUniform,
}

/// Everything a run depends on.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    /// Spec file, or the name of a shipped scenario.
    pub spec: Option<PathBuf>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub seed: u64,
    pub grid_h: Option<f64>,
    pub out: PathBuf,
    pub check: Option<VerifyCheck>,
    pub t: Option<f64>,
    pub n_list: Option<Vec<usize>>,
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Network spec JSON, or a shipped scenario name.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Population size.
    #[arg(long)]
    n: Option<usize>,
    /// Replications.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override the spec's grid step.
    #[arg(long = "grid-h")]
    grid_h: Option<f64>,
    #[arg(long, default_value = "tnet-out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Discrete-event simulation of one or more trajectories.
    Simulate(Common),
    /// Fluid limit: netput, reflection, busy time, crossing times.
    Fluid(Common),
    /// Diffusion limit sample paths and moments.
    Diffuse(Common),
    /// Monte Carlo bottleneck timeline.
    Bottlenecks(Common),
    /// Convergence checks.
    Verify {
        check: VerifyCheck,
        /// Time of the pointwise FCLT check.
        #[arg(long)]
        t: Option<f64>,
        /// Comma-separated population sizes for slope fits.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// End-to-end runs of the shipped scenarios.
    Reproduce {
        scenario: Scenario,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Parser)]
#[command(name = "tnet", version, about = "Transitory queueing networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

impl ExperimentConfig {
    fn from_cli(cli: Cli) -> Self {
        let base = |command, c: Common| ExperimentConfig {
            command,
            spec: c.spec,
            n: c.n,
            reps: c.reps,
            seed: c.seed,
            grid_h: c.grid_h,
            out: c.out,
            check: None,
            t: None,
            n_list: None,
            scenario: None,
        };
        match cli.cmd {
            Cmd::Simulate(c) => base(CommandKind::Simulate, c),
            Cmd::Fluid(c) => base(CommandKind::Fluid, c),
            Cmd::Diffuse(c) => base(CommandKind::Diffuse, c),
            Cmd::Bottlenecks(c) => base(CommandKind::Bottlenecks, c),
            Cmd::Verify {
                check,
                t,
                n_list,
                common,
            } => ExperimentConfig {
                check: Some(check),
                t,
                n_list,
                ..base(CommandKind::Verify, common)
            },
            Cmd::Reproduce { scenario, common } => ExperimentConfig {
                scenario: Some(scenario),
                ..base(CommandKind::Reproduce, common)
            },
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output files collected in a staging directory.
struct Staging {
    dir: tempfile::TempDir,
    files: Vec<(String, String)>,
}

impl Staging {
    fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        let dir = tempfile::Builder::new().prefix(".tnet-partial-").tempdir_in(out)?;
        Ok(Staging { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.path().join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn csv(&mut self, name: &str, path: &VectorPath) -> Result<()> {
        self.write(name, path.to_csv_string().as_bytes())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Moves every staged entry into `out`, replacing older outputs.
    fn commit(self, out: &Path) -> Result<Vec<(String, String)>> {
        for entry in fs::read_dir(self.dir.path())? {
            let entry = entry?;
            let target = out.join(entry.file_name());
            if target.is_dir() {
                fs::remove_dir_all(&target)?;
            } else if target.exists() {
                fs::remove_file(&target)?;
            }
            fs::rename(entry.path(), target)?;
        }
        Ok(self.files)
    }
}

/// Spec from a file, or a shipped scenario name, with its JSON text.
fn load_spec(spec: &Path, grid_h: Option<f64>) -> Result<(NetworkSpec, String, String)> {
    let (text, label) = if spec.exists() {
        (fs::read_to_string(spec)?, spec.display().to_string())
    } else if let Some(name) = spec.to_str().filter(|s| scenarios::names().any(|n| n == *s)) {
        (scenarios::json(name)?.to_string(), format!("scenario:{name}"))
    } else {
        return Err(argument(format!(
            "spec {} not found (and not a shipped scenario: {})",
            spec.display(),
            scenarios::names().collect::<Vec<_>>().join(", ")
        )));
    };
    let mut parsed = NetworkSpec::from_json_str(&text)?;
    if let Some(h) = grid_h {
        parsed = parsed.with_grid_step(h)?;
    }
    let report = validate_spec(&parsed);
    if !report.is_valid() {
        return Err(Error::Validation(report.to_string()));
    }
    Ok((parsed, text, label))
}

fn require_spec(config: &ExperimentConfig) -> Result<(NetworkSpec, String, String)> {
    let path = config
        .spec
        .as_ref()
        .ok_or_else(|| argument(format!("{:?} needs --spec", config.command)))?;
    load_spec(path, config.grid_h)
}

fn fluid_outputs(st: &mut Staging, prefix: &str, spec: &NetworkSpec, fluid: &FluidSolution) -> Result<Value> {
    st.csv(&format!("{prefix}fluid_netput.csv"), &fluid.netput)?;
    st.csv(&format!("{prefix}fluid_queue.csv"), fluid.queue())?;
    st.csv(&format!("{prefix}fluid_regulator.csv"), fluid.regulator())?;
    st.csv(&format!("{prefix}fluid_busy.csv"), &fluid.busy)?;
    st.csv(&format!("{prefix}fluid_departures.csv"), &fluid.departures(spec))?;
    if let Some(w) = &fluid.workload {
        st.csv(&format!("{prefix}fluid_workload.csv"), w)?;
    }
    let crossings = if spec.arrivals.len() == 1 {
        Some(crossing_times(spec)?)
    } else {
        None
    };
    Ok(json!({
        "tol": fluid.tol,
        "iterations": fluid.reflection.iterations,
        "residual": fluid.reflection.residual,
        "busy_form": fluid.busy_form,
        "crossings": crossings,
    }))
}

fn sim_summary(traj: &Trajectory, fluid: &FluidSolution) -> Result<Value> {
    traj.check_all()?;
    let sup = fluid_scale(traj).sup_distance(fluid.queue())?;
    Ok(json!({
        "n": traj.n,
        "exits": traj.exits,
        "truncation": traj.truncation,
        "conservation": "ok",
        "sup_fluid_queue_distance": sup,
    }))
}

fn write_trajectory(st: &mut Staging, prefix: &str, traj: &Trajectory) -> Result<()> {
    st.csv(&format!("{prefix}queue.csv"), &traj.queue)?;
    st.csv(&format!("{prefix}queue_fluid_scaled.csv"), &fluid_scale(traj))?;
    st.csv(&format!("{prefix}inflow.csv"), &traj.inflow)?;
    st.csv(&format!("{prefix}departures.csv"), &traj.departures)?;
    st.csv(&format!("{prefix}busy.csv"), &traj.busy)?;
    st.csv(&format!("{prefix}idle.csv"), &traj.idle)?;
    let mut log = Vec::new();
    traj.write_event_log(&mut log)?;
    st.write(&format!("{prefix}events.csv"), &log)
}

fn cmd_simulate(st: &mut Staging, spec: &NetworkSpec, n: usize, reps: usize, seed: u64) -> Result<Value> {
    let fluid = fluid_solve(spec)?;
    let root = RngStream::new(seed).child(tag::SIMULATION);
    let trajs = par_try_map(reps, |r| simulate(spec, n, &root.child(r as u64)))?;
    write_trajectory(st, "", &trajs[0])?;
    let runs = trajs.iter().map(|t| sim_summary(t, &fluid)).collect::<Result<Vec<_>>>()?;
    Ok(json!({ "replications": runs }))
}

/// Per-node mean and standard deviation at each grid time, as a CSV with
/// columns `t, mean_1, sd_1, …`.
fn moments_csv(paths: &[VectorPath]) -> String {
    let grid = *paths[0].grid();
    let k = paths[0].dim();
    let r = paths.len() as f64;
    let mut s = String::from("t");
    for n in 1..=k {
        s.push_str(&format!(",mean_{n},sd_{n}"));
    }
    s.push('\n');
    for i in 0..grid.len() {
        s.push_str(&fmt_sig12(grid.time(i)));
        for n in 0..k {
            let mean = paths.iter().map(|p| p.at(n, i)).sum::<f64>() / r;
            let var = paths.iter().map(|p| (p.at(n, i) - mean).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
            s.push_str(&format!(",{},{}", fmt_sig12(mean), fmt_sig12(var.sqrt())));
        }
        s.push('\n');
    }
    s
}

fn tandem_outputs(st: &mut Staging, prefix: &str, spec: &NetworkSpec, reps: usize, seed: u64) -> Result<Value> {
    let td = TandemDiffusion::new(spec)?;
    let root = RngStream::new(seed).child(tag::LIMIT);
    let paths = par_try_map(reps, |r| Ok(td.sample(&root.child(r as u64))))?;
    st.csv(
        &format!("{prefix}tandem_queue_rep0.csv"),
        paths[0].sample.queue.as_ref().expect("closed form sets the queue"),
    )?;
    let records: Vec<_> = paths.iter().map(|p| &p.discontinuities).collect();
    st.json(&format!("{prefix}tandem_discontinuities.json"), &records)?;
    // Node-1 typing at τ₁ against the sign of X̂₁(τ₁).
    let mut agree = 0;
    for p in &paths {
        let d = &p.discontinuities[0];
        let expected = if d.netput >= 0.0 {
            DiscontinuityKind::Right
        } else {
            DiscontinuityKind::Left
        };
        agree += usize::from(d.kind == expected);
    }
    Ok(json!({
        "case": format!("{:?}", td.case()),
        "tau1_index": td.tau1_index(),
        "tau2_index": td.tau2_index(),
        "reps": reps,
        "node1_typing_agreements": agree,
    }))
}

fn cmd_diffuse(st: &mut Staging, spec: &NetworkSpec, reps: usize, seed: u64) -> Result<Value> {
    let model = DiffusionModel::new(spec)?;
    let root = RngStream::new(seed).child(tag::LIMIT);
    let samples = par_try_map(reps, |r| model.sample(&root.child(r as u64)))?;
    st.csv("diffusion_netput_rep0.csv", &samples[0].netput)?;
    st.csv("diffusion_queue_rep0.csv", samples[0].queue.as_ref().expect("queue"))?;
    if let Some(w) = &samples[0].workload {
        st.csv("diffusion_workload_rep0.csv", w)?;
    }
    let queues: Vec<VectorPath> = samples.into_iter().map(|s| s.queue.expect("queue")).collect();
    st.write("diffusion_queue_moments.csv", moments_csv(&queues).as_bytes())?;
    let tandem = if spec.k == 2 && spec.is_tandem() && TandemDiffusion::new(spec).is_ok() {
        Some(tandem_outputs(st, "", spec, reps, seed)?)
    } else {
        None
    };
    Ok(json!({ "reps": reps, "tandem": tandem }))
}

fn timeline_summary(rep: &BottleneckReport) -> Value {
    let h = rep.params.h;
    let coarse: Vec<Value> = coarse_phases(&rep.phases, 5.0 * h)
        .iter()
        .map(|p| json!({ "start": p.start, "end": p.end, "nodes": p.nodes }))
        .collect();
    json!({ "phases": coarse, "raw_phase_count": rep.phases.len() })
}

fn cmd_bottlenecks(st: &mut Staging, prefix: &str, spec: &NetworkSpec, reps: usize, seed: u64) -> Result<Value> {
    let rep = bottleneck_timeline(spec, reps, &RngStream::new(seed).child(tag::LIMIT))?;
    let summary = timeline_summary(&rep);
    let mut value = serde_json::to_value(&rep)?;
    // Phases shorter than five grid steps folded into their predecessor.
    value["coarse_phases"] = summary["phases"].clone();
    st.json(&format!("{prefix}bottlenecks.json"), &value)?;
    Ok(summary)
}

fn cmd_verify(st: &mut Staging, spec: &NetworkSpec, config: &ExperimentConfig) -> Result<(Value, bool)> {
    let rng = RngStream::new(config.seed);
    let n_list = config.n_list.clone().unwrap_or_else(|| vec![100, 1000, 10_000]);
    let check = config.check.ok_or_else(|| argument("verify needs a check name"))?;
    let result: ConvergenceResult = match check {
        VerifyCheck::Fslln => check_fslln_arrivals(spec, &n_list, config.reps.unwrap_or(50), &rng)?,
        VerifyCheck::Fclt => {
            let t = config.t.ok_or_else(|| argument("verify fclt needs --t"))?;
            check_fclt_queue(spec, t, config.n.unwrap_or(10_000), config.reps.unwrap_or(500), &rng)?
        }
        VerifyCheck::ServiceRouting => check_service_routing(spec, &n_list, config.reps.unwrap_or(200), &rng)?,
    };
    let name = match check {
        VerifyCheck::Fslln => "verify_fslln.json",
        VerifyCheck::Fclt => "verify_fclt.json",
        VerifyCheck::ServiceRouting => "verify_service_routing.json",
    };
    st.write(name, (result.to_json() + "\n").as_bytes())?;
    Ok((json!({ "check": result.check, "pass": result.pass }), result.pass))
}

fn cmd_reproduce(st: &mut Staging, config: &ExperimentConfig) -> Result<Value> {
    let scenario = config.scenario.ok_or_else(|| argument("reproduce needs a scenario"))?;
    let seed = config.seed;
    let mut out = serde_json::Map::new();
    let names: &[&str] = match scenario {
        Scenario::Example1 => &["example1", "example1-fast"],
        Scenario::Example2 => &["example2", "example2-alt"],
        Scenario::TandemUniform => &["tandem-slower-first", "tandem-faster-first", "tandem-equal"],
    };
    for name in names {
        let mut spec = scenarios::load(name)?;
        if let Some(h) = config.grid_h {
            spec = spec.with_grid_step(h)?;
        }
        let prefix = format!("{name}/");
        let fluid = fluid_solve(&spec)?;
        let mut entry = serde_json::Map::new();
        entry.insert("fluid".into(), fluid_outputs(st, &prefix, &spec, &fluid)?);
        match scenario {
            Scenario::TandemUniform => {
                let reps = config.reps.unwrap_or(200);
                entry.insert("diffusion".into(), tandem_outputs(st, &prefix, &spec, reps, seed)?);
            }
            _ => {
                let n = config.n.unwrap_or(100_000);
                let traj = simulate(&spec, n, &RngStream::new(seed).child(tag::SIMULATION))?;
                st.csv(&format!("{prefix}sim_queue_fluid_scaled.csv"), &fluid_scale(&traj))?;
                entry.insert("simulation".into(), sim_summary(&traj, &fluid)?);
                let reps = config.reps.unwrap_or(500);
                entry.insert("bottlenecks".into(), cmd_bottlenecks(st, &prefix, &spec, reps, seed)?);
            }
        }
        out.insert(name.to_string(), Value::Object(entry));
    }
    Ok(Value::Object(out))
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out: PathBuf,
    /// `(relative path, sha256)` of every file written, manifest excluded.
    pub files: Vec<(String, String)>,
    pub summary: Value,
    /// False when a verification check ran but did not pass.
    pub pass: bool,
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let mut st = Staging::new(&config.out)?;
    let mut spec_info = Value::Null;
    let mut pass = true;
    let mut spec_for = |config: &ExperimentConfig| -> Result<NetworkSpec> {
        let (spec, text, label) = require_spec(config)?;
        spec_info = json!({
            "source": label,
            "sha256": sha256_hex(text.as_bytes()),
            "grid": { "t0": spec.horizon.t0(), "t1": spec.horizon.t1(), "h": spec.horizon.h() },
        });
        Ok(spec)
    };
    let summary = match config.command {
        CommandKind::Simulate => {
            let spec = spec_for(config)?;
            cmd_simulate(&mut st, &spec, config.n.unwrap_or(1000), config.reps.unwrap_or(1).max(1), config.seed)?
        }
        CommandKind::Fluid => {
            let spec = spec_for(config)?;
            let fluid = fluid_solve(&spec)?;
            fluid_outputs(&mut st, "", &spec, &fluid)?
        }
        CommandKind::Diffuse => {
            let spec = spec_for(config)?;
            cmd_diffuse(&mut st, &spec, config.reps.unwrap_or(100).max(2), config.seed)?
        }
        CommandKind::Bottlenecks => {
            let spec = spec_for(config)?;
            cmd_bottlenecks(&mut st, "", &spec, config.reps.unwrap_or(500), config.seed)?
        }
        CommandKind::Verify => {
            let spec = spec_for(config)?;
            let (s, ok) = cmd_verify(&mut st, &spec, config)?;
            pass = ok;
            s
        }
        CommandKind::Reproduce => cmd_reproduce(&mut st, config)?,
    };
    st.json("summary.json", &summary)?;
    let files: Vec<Value> = st
        .files
        .iter()
        .map(|(name, sha)| json!({ "path": name, "sha256": sha }))
        .collect();
    let manifest = json!({
        "tnet_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "spec": spec_info,
        "threads": thread_cap(),
        "files": files,
    });
    st.json("manifest.json", &manifest)?;
    let files = st.commit(&config.out)?;
    Ok(RunOutcome {
        out: config.out.clone(),
        files,
        summary,
        pass,
    })
}

/// Exit codes: 0 success, 1 runtime failure, 2 usage or spec validation
/// error, 3 a verification check did not pass.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let config = ExperimentConfig::from_cli(cli);
    match run(&config) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            for (name, _) in &outcome.files {
                let _ = writeln!(stdout, "wrote {}", outcome.out.join(name).display());
            }
            if config.command == CommandKind::Verify {
                let _ = writeln!(stdout, "{}", if outcome.pass { "PASS" } else { "FAIL" });
            }
            if outcome.pass {
                0
            } else {
                3
            }
        }
        Err(e) => {
            eprintln!("tnet: {e}");
            match e {
                Error::Validation(_) | Error::Argument(_) | Error::Refused(_) => 2,
                _ => 1,
            }
        }
    }
}
