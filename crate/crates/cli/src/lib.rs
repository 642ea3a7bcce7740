//! Experiment driver behind the `mvlab` binary: reads a TOML experiment
//! document, runs one task and writes `report.json` plus CSV curves.
//!
//! Exit codes: 0 pass or converged, 1 fail or not converged, 2 refusal or
//! blow-up, 3 configuration, I/O and other errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use config::{BihariTask, CertifyTask, InitialFlow, PicardTask, Resolved, SimulateTask, TaskConfig, VerifyMomentTask, VerifyPathwiseTask};
use mvlab_core::bihari::{osgood_divergence, second_moment_bound, BoundInputs, Divergence, Endpoint};
use mvlab_core::coefficients::{check_envelope, gamma_pq, lyapunov_from_envelope, sample_curve, EnvelopeCheck, LipschitzProfile};
use mvlab_core::engine::{mean_stats, moment_stats, simulate, simulate_coupled, write_curves_csv, write_ensemble_csv, EngineError};
use mvlab_core::models::{growth_profile_of, lipschitz_profile_of};
use mvlab_core::picard::{picard_solve, PicardError, PicardOptions, PicardSummary};
use mvlab_core::verify::{
    certify_pathwise, check_exponential_stability, check_growth, check_moment_comparison, BoundReport, CheckOptions, ComparisonProfile,
    PathwiseOptions, VerifyError,
};
use mvlab_core::{MeasureFlow, ModelSpec, ParticleCloud};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub use config::{parse_config, resolve, to_document, ConfigError, ExperimentConfig};

/// The JSON Schema every `report.json` conforms to.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Task(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        3
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn task_err(e: impl std::fmt::Display) -> RunError {
    RunError::Task(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Converged,
    NotConverged,
    Refused,
    BlowUp,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Pass | Self::Converged => 0,
            Self::Fail | Self::NotConverged => 1,
            Self::Refused | Self::BlowUp => 2,
        }
    }

    fn of(pass: bool) -> Self {
        if pass {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub task: String,
    pub status: Status,
    pub exit_code: i32,
    pub summary: String,
    pub seed: u64,
    pub n_particles: usize,
    /// Absent when the run stopped early (blow-up, refusal before any result).
    pub result: Option<TaskResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskResult {
    Simulate {
        p: f64,
        terminal_moment: f64,
        terminal_mc_sigma: f64,
        growth: Option<BoundReport>,
    },
    Picard {
        p: f64,
        picard: PicardSummary,
    },
    Certify {
        p: f64,
        q: f64,
        order_pq: f64,
        /// `λ̂_l/(pq)`.
        exponent: f64,
        /// `α_l`.
        time_order: f64,
        envelope_check: EnvelopeCheck,
    },
    VerifyMoment {
        comparison: BoundReport,
        stability: Option<BoundReport>,
    },
    VerifyPathwise {
        pathwise: BoundReport,
    },
    Bihari {
        osgood_at_zero: String,
        /// First grid time outside the domain; `null` when the bound stays finite.
        t0_plus: Option<f64>,
        terminal_bound: Option<f64>,
    },
}

/// What a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: RunReport,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }

    /// The one-line verdict printed on stdout.
    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} ({})",
            self.report.task,
            status_word(self.report.status),
            self.report.summary
        )
    }
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Converged => "CONVERGED",
        Status::NotConverged => "NOT CONVERGED",
        Status::Refused => "REFUSED",
        Status::BlowUp => "BLOW-UP",
    }
}

/// Reads, validates and runs a configuration file. `seed` overrides the
/// document; `output_dir` overrides `output.dir`.
pub fn run_file(path: &Path, output_dir: Option<&Path>, seed: Option<u64>) -> Result<Outcome, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut config = parse_config(&text)?;
    if let Some(s) = seed {
        config.sim.seed = s;
    }
    let dir = match (output_dir, &config.output.dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("."),
    };
    run(&config, &dir)
}

/// Runs one task and writes its files into `dir` (created if missing).
pub fn run(config: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let resolved = resolve(config)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut out = Output {
        dir: dir.to_path_buf(),
        files: Vec::new(),
    };
    let (status, summary, result) = match &config.task {
        TaskConfig::Simulate(t) => run_simulate(&resolved, t, &mut out)?,
        TaskConfig::Picard(t) => run_picard(&resolved, t, &mut out)?,
        TaskConfig::Certify(t) => run_certify(&resolved, t)?,
        TaskConfig::VerifyMoment(t) => run_verify_moment(&resolved, t, &mut out)?,
        TaskConfig::VerifyPathwise(t) => run_verify_pathwise(&resolved, t, &mut out)?,
        TaskConfig::Bihari(t) => run_bihari(&resolved, t, &mut out)?,
    };
    let report = RunReport {
        schema_version: config::SCHEMA_VERSION,
        task: config.task.name().to_string(),
        status,
        exit_code: status.exit_code(),
        summary,
        seed: resolved.sim.seed,
        n_particles: resolved.sim.n_particles,
        result,
    };
    let json = serde_json::to_string_pretty(&report).map_err(task_err)? + "\n";
    out.write("report.json", |w| w.write_all(json.as_bytes()).map_err(|e| e.to_string()))?;
    Ok(Outcome { report, files: out.files })
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn write<F>(&mut self, name: &str, body: F) -> Result<(), RunError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), String>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| RunError::Io {
            path: path.clone(),
            source: std::io::Error::other(e),
        })?;
        w.flush().map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }

    fn curves(&mut self, name: &str, t: &[f64], cols: &[(&str, &[f64])]) -> Result<(), RunError> {
        self.write(name, |w| write_curves_csv(t, cols, w).map_err(|e| e.to_string()))
    }
}

type TaskOutput = (Status, String, Option<TaskResult>);

fn blow_up(e: &EngineError) -> Option<TaskOutput> {
    match e {
        EngineError::BlowUp { t, .. } => Some((Status::BlowUp, format!("state became non-finite at t = {t}"), None)),
        _ => None,
    }
}

fn profile_or_derived(explicit: &Option<LipschitzProfile>, model: &ModelSpec, p: f64) -> Result<LipschitzProfile, RunError> {
    match explicit {
        Some(pr) => Ok(pr.clone()),
        None => lipschitz_profile_of(model, p).map_err(|e| task_err(format!("no profile given and none derivable: {e}"))),
    }
}

fn run_simulate(r: &Resolved, t: &SimulateTask, out: &mut Output) -> Result<TaskOutput, RunError> {
    let ens = match simulate(&r.model, &r.init, &r.sim, None) {
        Ok(e) => e,
        Err(e) => return blow_up(&e).ok_or_else(|| task_err(e)),
    };
    let flow = ens.flow();
    let times = flow.grid().times();
    let stats = moment_stats(flow, t.p).map_err(task_err)?;
    let dim = flow.dim();
    let means: Vec<Vec<f64>> = (0..dim).map(|j| flow.clouds().iter().map(|c| c.mean()[j]).collect()).collect();
    let names: Vec<String> = (1..=dim).map(|j| format!("mean_{j}")).collect();
    let mut cols: Vec<(&str, &[f64])> = names.iter().zip(&means).map(|(n, m)| (n.as_str(), m.as_slice())).collect();
    cols.push(("moment_p", &stats.value));
    cols.push(("mc_sigma", &stats.mc_sigma));
    out.curves("moments.csv", &times, &cols)?;
    if t.write_ensemble {
        out.write("ensemble.csv", |w| write_ensemble_csv(flow, w).map_err(|e| e.to_string()))?;
    }

    let growth = if t.check_growth {
        let profile = growth_profile_of(&r.model, t.p).map_err(task_err)?;
        let rep = check_growth(&ens, &profile, t.p, &CheckOptions::with_tolerance(t.tolerance)).map_err(task_err)?;
        out.curves(
            "growth.csv",
            &rep.t,
            &[("bound", &rep.bound), ("empirical", &rep.empirical), ("mc_sigma", &rep.mc_sigma)],
        )?;
        Some(rep)
    } else {
        None
    };
    let terminal = *stats.value.last().expect("grid has points");
    let sigma = *stats.mc_sigma.last().expect("grid has points");
    let (status, summary) = match &growth {
        Some(g) if !g.passed() => (
            Status::Fail,
            format!("growth bound exceeded at t = {}", g.t_star.unwrap_or(f64::NAN)),
        ),
        Some(_) => (Status::Pass, format!("E|X_T|^{} = {terminal} within the growth bound", t.p)),
        None => (Status::Pass, format!("E|X_T|^{} = {terminal} +/- {sigma}", t.p)),
    };
    Ok((
        status,
        summary,
        Some(TaskResult::Simulate {
            p: t.p,
            terminal_moment: terminal,
            terminal_mc_sigma: sigma,
            growth,
        }),
    ))
}

fn run_picard(r: &Resolved, t: &PicardTask, out: &mut Output) -> Result<TaskOutput, RunError> {
    let mu0 = match t.mu0 {
        InitialFlow::InitialLaw => None,
        InitialFlow::DiracZero => {
            let cloud = ParticleCloud::dirac_zero(r.model.dim_state, r.sim.n_particles).map_err(task_err)?;
            Some(MeasureFlow::constant(r.sim.grid, cloud))
        }
    };
    let mut opts = PicardOptions::new(t.n_max, t.tol, t.p);
    opts.profile = match &t.profile {
        Some(p) => Some(p.clone()),
        None => lipschitz_profile_of(&r.model, t.p).ok(),
    };
    let state = match picard_solve(&r.model, &r.init, &r.sim, mu0, &opts) {
        Ok(s) => s,
        Err(PicardError::Iterate { iteration, source }) => {
            return match blow_up(&source) {
                Some((s, msg, res)) => Ok((s, format!("iterate {iteration}: {msg}"), res)),
                None => Err(task_err(source)),
            }
        }
        Err(PicardError::Engine(e)) => return blow_up(&e).ok_or_else(|| task_err(e)),
        Err(e) => return Err(task_err(e)),
    };
    let last = state.last();
    let times = last.grid().times();
    let mean = mean_stats(last).map_err(task_err)?;
    let stats = moment_stats(last, t.p).map_err(task_err)?;
    out.curves(
        "curves.csv",
        &times,
        &[("mean", &mean.value), ("moment_p", &stats.value), ("mc_sigma", &stats.mc_sigma)],
    )?;
    let summary = state.summary();
    let n = summary.distances.len();
    let bounds = if summary.bounds.len() == n {
        summary.bounds.clone()
    } else {
        vec![f64::NAN; n]
    };
    out.write("iterations.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["iteration", "distance", "bound"]).map_err(|e| e.to_string())?;
        for (k, (d, b)) in summary.distances.iter().zip(&bounds).enumerate() {
            c.write_record([k.to_string(), fmt(*d), fmt(*b)]).map_err(|e| e.to_string())?;
        }
        c.flush().map_err(|e| e.to_string())
    })?;
    let status = if state.converged { Status::Converged } else { Status::NotConverged };
    let last_d = summary.distances.last().copied().unwrap_or(f64::NAN);
    let line = format!("{} iterations, last sup-distance {last_d}", summary.iterations);
    Ok((status, line, Some(TaskResult::Picard { p: t.p, picard: summary })))
}

fn fmt(v: f64) -> String {
    mvlab_core::engine::fmt_f64(v)
}

fn run_certify(r: &Resolved, t: &CertifyTask) -> Result<TaskOutput, RunError> {
    let profile = profile_or_derived(&t.profile, &r.model, t.p)?;
    let grid = r.sim.grid;
    let gamma = sample_curve(&grid, |s| gamma_pq(&profile, t.q, s)).map_err(task_err)?;
    let check = check_envelope(&gamma, &grid, &t.envelope).map_err(task_err)?;
    let (exponent, time_order) = lyapunov_from_envelope(&t.envelope, t.p * t.q).map_err(task_err)?;
    let (status, summary) = match check {
        EnvelopeCheck::Holds => (Status::Pass, format!("pathwise exponent {exponent} at time order {time_order}")),
        EnvelopeCheck::Violated { t, gamma, envelope } => (
            Status::Refused,
            format!("gamma_pq = {gamma} exceeds the envelope {envelope} at t = {t}"),
        ),
    };
    let res = TaskResult::Certify {
        p: t.p,
        q: t.q,
        order_pq: t.p * t.q,
        exponent,
        time_order,
        envelope_check: check,
    };
    Ok((status, summary, Some(res)))
}

fn coupled(r: &Resolved) -> Result<Result<(mvlab_core::PathEnsemble, mvlab_core::PathEnsemble), TaskOutput>, RunError> {
    match simulate_coupled(&r.model, &r.model_b, &r.init, &r.init_b, &r.sim) {
        Ok(pair) => Ok(Ok(pair)),
        Err(e) => blow_up(&e).map(Err).ok_or_else(|| task_err(e)),
    }
}

fn run_verify_moment(r: &Resolved, t: &VerifyMomentTask, out: &mut Output) -> Result<TaskOutput, RunError> {
    let profile = match &t.profile {
        Some(p) => p.clone(),
        None => ComparisonProfile::Lipschitz(profile_or_derived(&None, &r.model, t.p)?),
    };
    let (a, b) = match coupled(r)? {
        Ok(pair) => pair,
        Err(stop) => return Ok(stop),
    };
    let opts = CheckOptions::with_tolerance(t.tolerance);
    let comparison = check_moment_comparison(&a, &b, &profile, t.p, &opts).map_err(task_err)?;
    let stability = match &t.stability {
        Some(s) => Some(check_exponential_stability(&a, &b, s.lambda, s.alpha, s.c, t.p, &opts).map_err(task_err)?),
        None => None,
    };
    let mut cols: Vec<(&str, &[f64])> = vec![
        ("bound", &comparison.bound),
        ("empirical", &comparison.empirical),
        ("mc_sigma", &comparison.mc_sigma),
    ];
    if let Some(s) = &stability {
        cols.push(("stability_bound", &s.bound));
    }
    out.curves("curves.csv", &comparison.t, &cols)?;
    let pass = comparison.passed() && stability.as_ref().is_none_or(|s| s.passed());
    let summary = match (&comparison.t_star, stability.as_ref().and_then(|s| s.t_star)) {
        (Some(ts), _) => format!("comparison bound exceeded at t = {ts}"),
        (None, Some(ts)) => format!("stability bound exceeded at t = {ts}"),
        (None, None) => {
            let end = comparison.empirical.last().copied().unwrap_or(f64::NAN);
            format!(
                "E|Y_T|^{} = {end} within the bound {}",
                t.p,
                comparison.bound.last().copied().unwrap_or(f64::NAN)
            )
        }
    };
    Ok((Status::of(pass), summary, Some(TaskResult::VerifyMoment { comparison, stability })))
}

fn run_verify_pathwise(r: &Resolved, t: &VerifyPathwiseTask, out: &mut Output) -> Result<TaskOutput, RunError> {
    let profile = profile_or_derived(&t.profile, &r.model, t.p)?;
    let (a, b) = match coupled(r)? {
        Ok(pair) => pair,
        Err(stop) => return Ok(stop),
    };
    let opts = PathwiseOptions {
        window: t.window.map(|[lo, hi]| (lo, hi)),
    };
    let rep = match certify_pathwise(&a, &b, &profile, t.p, t.q, &t.envelope, &opts) {
        Ok(rep) => rep,
        Err(VerifyError::Refused { t, gamma, envelope }) => {
            let msg = format!("gamma_pq = {gamma} exceeds the envelope {envelope} at t = {t}");
            return Ok((Status::Refused, msg, None));
        }
        Err(e) => return Err(task_err(e)),
    };
    out.curves(
        "curves.csv",
        &rep.t,
        &[
            ("certified", &rep.bound),
            ("empirical", &rep.empirical),
            ("mc_sigma", &rep.mc_sigma),
        ],
    )?;
    let summary = format!(
        "empirical exponent {} vs certified {}",
        rep.details["empirical_exponent"], rep.details["certified_exponent"]
    );
    Ok((
        Status::of(rep.passed()),
        summary,
        Some(TaskResult::VerifyPathwise { pathwise: rep }),
    ))
}

fn run_bihari(r: &Resolved, t: &BihariTask, out: &mut Output) -> Result<TaskOutput, RunError> {
    let rho = t.modulus.build()?;
    let grid = r.sim.grid;
    let inputs = BoundInputs {
        initial: t.initial,
        additive: t.additive.clone(),
        gain: t.gain.clone(),
        rho0: rho.clone(),
    };
    let bound = second_moment_bound(&inputs, &grid).map_err(task_err)?;
    out.curves("curves.csv", &grid.times(), &[("bound", &bound.bound)])?;
    let osgood = osgood_divergence(&rho, Endpoint::Zero);
    let word = match osgood {
        Divergence::Divergent => "divergent",
        Divergence::Convergent => "convergent",
        Divergence::Inconclusive => "inconclusive",
    };
    let finite = bound.t0_plus.is_infinite();
    let status = match osgood {
        Divergence::Inconclusive => Status::Refused,
        Divergence::Divergent if finite => Status::Pass,
        _ => Status::Fail,
    };
    let summary = if finite {
        format!("Osgood integral at 0 {word}, bound finite on the grid")
    } else {
        format!("Osgood integral at 0 {word}, bound leaves the domain at t = {}", bound.t0_plus)
    };
    let res = TaskResult::Bihari {
        osgood_at_zero: word.to_string(),
        t0_plus: (!finite).then_some(bound.t0_plus),
        terminal_bound: bound.bound.last().copied().filter(|v| v.is_finite()),
    };
    Ok((status, summary, Some(res)))
}
