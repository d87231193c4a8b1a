//! Command-line front end.
//!
//! Exit codes: 0 success, 1 config validation failure, 2 runtime simulation
//! error, 3 verification or condition-check failure. Every failure is also
//! emitted as a JSON object on stderr. Outputs are byte-reproducible for a
//! fixed config and seed; wall-clock timings stay out of the files unless
//! `--timing` asks for them.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use conewalk_core::conditions::{self, ConditionReport, GcirVariant, SamplePlan, Verdict};
use conewalk_core::exec::{self, ExecMode};
use conewalk_core::mc;
use conewalk_core::model::{
    FamilySpec, GcirParams, GeneralParams, ModelSpec, OuParams, WishartParams,
};
use conewalk_core::psd::{format_matrix, SymMatrix};
use conewalk_core::sim;
use conewalk_core::verify::{self, HForm};

use config::{ConfigError, Overrides, RunConfig};

/// Simulation and verification for jump diffusions on the positive definite
/// cone.
#[derive(Parser)]
#[command(name = "conewalk", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one path and write the trajectory
    Simulate(Common),
    /// Run the drift-condition checks
    Check(Common),
    /// Verify the log-det decomposition on a path ensemble
    Verify(VerifyArgs),
    /// Boundary-hit Monte Carlo statistics
    Mc(Common),
    /// Sweep the Wishart drift strength
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed (overrides the config key)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config key)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, 0 = auto; CONEWALK_THREADS is the fallback
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock timings in outputs (breaks byte reproducibility)
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Decompose against a drift-corrupted model (negative control)
    #[arg(long, hide = true)]
    corrupt_p: bool,
}

enum Failure {
    Validation(Vec<ConfigError>),
    Runtime(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> ExitCode {
        match self {
            Failure::Validation(_) => ExitCode::from(1),
            Failure::Runtime(_) => ExitCode::from(2),
            Failure::Check(_) => ExitCode::from(3),
        }
    }

    fn render(&self) -> String {
        let doc = match self {
            Failure::Validation(errs) => serde_json::json!({
                "error": "validation",
                "details": errs,
            }),
            Failure::Runtime(msg) => serde_json::json!({
                "error": "runtime",
                "message": msg,
            }),
            Failure::Check(msg) => serde_json::json!({
                "error": "check_failed",
                "message": msg,
            }),
        };
        serde_json::to_string(&doc).expect("error document serializes")
    }
}

fn runtime(e: conewalk_core::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.render());
            f.code()
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, common, corrupt) = match &cli.cmd {
        Cmd::Simulate(c) => ("simulate", c, false),
        Cmd::Check(c) => ("check", c, false),
        Cmd::Verify(v) => ("verify", &v.common, v.corrupt_p),
        Cmd::Mc(c) => ("mc", c, false),
        Cmd::Sweep(c) => ("sweep", c, false),
    };
    exec::configure_threads(resolve_threads(common)?)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let text = fs::read_to_string(&common.config).map_err(|e| {
        Failure::Validation(vec![ConfigError {
            path: "<config>".into(),
            message: format!("{}: {e}", common.config.display()),
        }])
    })?;
    let ov = Overrides { seed: common.seed, out: common.out.clone() };
    let cfg = config::parse_config(&text, name, &ov).map_err(Failure::Validation)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        Failure::Validation(vec![ConfigError {
            path: "output.dir".into(),
            message: format!("{}: {e}", cfg.out_dir.display()),
        }])
    })?;
    write_text(&cfg.out_dir.join("effective_config.toml"), &config::effective_toml(&cfg))?;
    match name {
        "simulate" => cmd_simulate(&cfg, common.timing),
        "check" => cmd_check(&cfg),
        "verify" => cmd_verify(&cfg, corrupt, common.timing),
        "mc" => cmd_mc(&cfg, common.timing),
        "sweep" => cmd_sweep(&cfg, common.timing),
        _ => unreachable!(),
    }
}

fn resolve_threads(common: &Common) -> Result<usize, Failure> {
    if let Some(n) = common.threads {
        return Ok(n);
    }
    match std::env::var("CONEWALK_THREADS") {
        Ok(s) => s.trim().parse().map_err(|_| {
            Failure::Validation(vec![ConfigError {
                path: "CONEWALK_THREADS".into(),
                message: format!("not a thread count: {s:?}"),
            }])
        }),
        Err(_) => Ok(0),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn gate(timing: bool, seconds: f64) -> Option<f64> {
    timing.then_some(seconds)
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct BoundaryEventJson {
    time: f64,
    lambda_min: f64,
    action: &'static str,
}

#[derive(Serialize)]
struct SimulateReport {
    config: config::RawConfig,
    n_rows: usize,
    terminal_time: f64,
    terminal_det: f64,
    min_lambda_overall: f64,
    jump_count: usize,
    boundary_event: Option<BoundaryEventJson>,
    runtime_seconds: Option<f64>,
}

fn cmd_simulate(cfg: &RunConfig, timing: bool) -> Result<(), Failure> {
    let started = Instant::now();
    let path = sim::simulate_path(&cfg.model, &cfg.x0, &cfg.sim).map_err(runtime)?;
    let d = cfg.model.dim();

    let mut csv = format!(
        "# d={} seed={} dt={} policy={}\n",
        d,
        cfg.seed,
        cfg.sim.dt,
        cfg.sim.policy.as_str()
    );
    csv.push_str("t,det,lambda_min,trace,jump_flag");
    for i in 1..=d {
        for j in i..=d {
            csv.push_str(&format!(",X_{i}{j}"));
        }
    }
    csv.push('\n');
    for r in 0..path.len() {
        csv.push_str(&format!(
            "{},{},{},{},{}",
            path.times[r],
            path.det[r],
            path.lambda_min[r],
            path.trace[r],
            u8::from(path.jump_flags[r])
        ));
        let x = &path.states[r];
        for i in 0..d {
            for j in i..d {
                csv.push_str(&format!(",{}", x.entry(i, j)));
            }
        }
        csv.push('\n');
    }
    write_text(&cfg.out_dir.join("simulate.csv"), &csv)?;

    let report = SimulateReport {
        config: config::to_raw(cfg),
        n_rows: path.len(),
        terminal_time: path.terminal_time(),
        terminal_det: *path.det.last().expect("paths are non-empty"),
        min_lambda_overall: path.min_lambda_overall,
        jump_count: path.jump_events.len(),
        boundary_event: path.boundary_event.as_ref().map(|ev| BoundaryEventJson {
            time: ev.time,
            lambda_min: ev.lambda_min,
            action: ev.action.as_str(),
        }),
        runtime_seconds: gate(timing, started.elapsed().as_secs_f64()),
    };
    write_text(&cfg.out_dir.join("simulate.json"), &to_pretty(&report))
}

// ---------------------------------------------------------------------------
// check

#[derive(Serialize)]
struct CheckRow {
    condition: &'static str,
    verdict: &'static str,
    exact: bool,
    samples_used: usize,
    seed: Option<u64>,
    sampling_law: Option<&'static str>,
    witness_value: Option<f64>,
    witness_state: Option<String>,
    floor_estimate: Option<f64>,
}

impl From<&ConditionReport> for CheckRow {
    fn from(r: &ConditionReport) -> Self {
        CheckRow {
            condition: r.condition_id.as_str(),
            verdict: r.verdict.as_str(),
            exact: r.exact,
            samples_used: r.samples_used,
            seed: r.seed,
            sampling_law: r.sampling_law,
            witness_value: r.witness.as_ref().map(|w| w.value),
            witness_state: r
                .witness
                .as_ref()
                .and_then(|w| w.x.as_ref())
                .map(|x| format_matrix(x.as_matrix())),
            floor_estimate: r.floor_estimate,
        }
    }
}

#[derive(Serialize)]
struct CheckReport {
    overall: &'static str,
    claimed_floor: f64,
    conditions: Vec<CheckRow>,
}

fn cmd_check(cfg: &RunConfig) -> Result<(), Failure> {
    let plan = SamplePlan::new(cfg.experiment.samples, cfg.seed);
    let mut reports: Vec<ConditionReport> = Vec::new();
    match cfg.model.family() {
        FamilySpec::Wishart(p) => {
            reports.push(
                conditions::check_wishart_drift(&p.b, &p.q, cfg.model.dim()).map_err(runtime)?,
            );
        }
        FamilySpec::Gcir(p) => {
            if cfg.experiment.variants.is_empty() {
                reports
                    .push(conditions::check_gcir_pointwise_sampled(p, &plan).map_err(runtime)?);
            } else {
                for v in &cfg.experiment.variants {
                    let variant = GcirVariant::parse(v).map_err(runtime)?;
                    reports
                        .push(conditions::check_gcir_sufficient(variant, p, &plan)
                            .map_err(runtime)?);
                }
            }
        }
        FamilySpec::Ou(_) | FamilySpec::General(_) => {}
    }
    let claimed = cfg.experiment.claimed_floor.unwrap_or_else(|| cfg.model.drift_floor());
    reports.push(conditions::check_theorem_floor(&cfg.model, &plan, claimed).map_err(runtime)?);

    let rows: Vec<CheckRow> = reports.iter().map(CheckRow::from).collect();
    let overall = if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        "fail"
    } else if reports.iter().any(|r| r.verdict == Verdict::Indeterminate) {
        "indeterminate"
    } else {
        "pass"
    };
    let doc = CheckReport { overall, claimed_floor: claimed, conditions: rows };
    write_text(&cfg.out_dir.join("check.json"), &to_pretty(&doc))?;
    if overall == "fail" {
        let failed: Vec<&str> = reports
            .iter()
            .filter(|r| r.verdict == Verdict::Fail)
            .map(|r| r.condition_id.as_str())
            .collect();
        return Err(Failure::Check(format!("conditions failed: {}", failed.join(", "))));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

#[derive(Serialize)]
struct TraceJson {
    h: String,
    qv_mean: f64,
    qv_se: f64,
    horizon: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    corrupt_p: bool,
    pass: bool,
    checkpoints: Vec<f64>,
    m_mean: Vec<f64>,
    m_se: Vec<f64>,
    mean_zero_pass: Vec<bool>,
    qv_realized: Vec<f64>,
    qv_predicted: Vec<f64>,
    qv_se: Vec<f64>,
    qv_pass: Vec<bool>,
    floor_violations: usize,
    n_records: usize,
    n_stopped: usize,
    trace: Vec<TraceJson>,
    runtime_seconds: Option<f64>,
}

fn bumped(b: &SymMatrix) -> SymMatrix {
    let c = 3.0 * (1.0 + b.frobenius());
    b.add(&SymMatrix::identity(b.dim()).scale(c))
}

fn bump_family(f: &FamilySpec) -> FamilySpec {
    match f {
        FamilySpec::Wishart(p) => {
            FamilySpec::Wishart(WishartParams { b: bumped(&p.b), ..p.clone() })
        }
        FamilySpec::Gcir(p) => FamilySpec::Gcir(GcirParams { b: bumped(&p.b), ..p.clone() }),
        FamilySpec::Ou(p) => FamilySpec::Ou(OuParams { b: bumped(&p.b), ..p.clone() }),
        FamilySpec::General(p) => FamilySpec::General(GeneralParams {
            base: Box::new(bump_family(&p.base)),
            ..p.clone()
        }),
    }
}

/// The corrupted twin used by `--corrupt-p`: same diffusion, drift term `b`
/// inflated far past the statistical bands, everything else preserved.
fn corrupted(model: &ModelSpec) -> conewalk_core::Result<ModelSpec> {
    ModelSpec::new(
        model.dim(),
        bump_family(model.family()),
        model.jump().clone(),
        model.k_op().clone(),
    )?
    .with_floor(model.drift_floor())
}

fn cmd_verify(cfg: &RunConfig, corrupt: bool, timing: bool) -> Result<(), Failure> {
    let started = Instant::now();
    let h_forms: Vec<HForm> = cfg
        .experiment
        .h_forms
        .iter()
        .map(|name| config::parse_h_form(name, cfg.model.dim()).expect("validated"))
        .collect();
    let decomp = if corrupt { corrupted(&cfg.model).map_err(runtime)? } else { cfg.model.clone() };
    let report = verify::verify_ensemble_with(
        &cfg.model,
        &decomp,
        &cfg.x0,
        &cfg.sim,
        cfg.experiment.n_paths,
        &cfg.experiment.checkpoints,
        &h_forms,
        ExecMode::default(),
    )
    .map_err(runtime)?;

    let mart = &report.martingale;
    let mut failures: Vec<String> = Vec::new();
    for (k, cp) in mart.checkpoints.iter().enumerate() {
        if !mart.mean_zero_pass[k] {
            failures.push(format!("mean_zero at t={cp}"));
        }
        if !mart.qv_pass[k] {
            failures.push(format!("qv at t={cp}"));
        }
    }
    if mart.floor_violations > 0 {
        failures.push(format!("{} floor violations", mart.floor_violations));
    }
    let mut traces = Vec::new();
    for t in &report.trace {
        let pass = (t.qv_mean - t.horizon).abs() <= 3.0 * t.qv_se;
        if !pass {
            failures.push(format!("trace qv for h = {}", t.h_name));
        }
        traces.push(TraceJson {
            h: t.h_name.clone(),
            qv_mean: t.qv_mean,
            qv_se: t.qv_se,
            horizon: t.horizon,
            pass,
        });
    }
    let doc = VerifyReport {
        corrupt_p: corrupt,
        pass: failures.is_empty(),
        checkpoints: mart.checkpoints.clone(),
        m_mean: mart.m_mean.clone(),
        m_se: mart.m_se.clone(),
        mean_zero_pass: mart.mean_zero_pass.clone(),
        qv_realized: mart.qv_realized.clone(),
        qv_predicted: mart.qv_predicted.clone(),
        qv_se: mart.qv_se.clone(),
        qv_pass: mart.qv_pass.clone(),
        floor_violations: mart.floor_violations,
        n_records: mart.n_records,
        n_stopped: mart.n_stopped,
        trace: traces,
        runtime_seconds: gate(timing, started.elapsed().as_secs_f64()),
    };
    write_text(&cfg.out_dir.join("verify.json"), &to_pretty(&doc))?;
    if !doc.pass {
        return Err(Failure::Check(format!("identity checks failed: {}", failures.join("; "))));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mc and sweep

#[derive(Serialize)]
struct EnsembleJson {
    model: String,
    n_paths: usize,
    n_errors: usize,
    hit_fraction: f64,
    min_lambda_quantiles: [f64; 3],
    mean_first_proximity_time: Option<f64>,
    master_seed: u64,
    runtime_seconds: Option<f64>,
}

fn ensemble_json(r: &mc::EnsembleResult, timing: bool) -> EnsembleJson {
    EnsembleJson {
        model: r.model.clone(),
        n_paths: r.n_paths,
        n_errors: r.n_errors,
        hit_fraction: r.hit_fraction,
        min_lambda_quantiles: r.min_lambda_quantiles,
        mean_first_proximity_time: r.mean_first_proximity_time,
        master_seed: r.master_seed,
        runtime_seconds: gate(timing, r.runtime_seconds),
    }
}

fn cmd_mc(cfg: &RunConfig, timing: bool) -> Result<(), Failure> {
    let (result, rows) = mc::boundary_stats_detailed(
        &cfg.model,
        &cfg.x0,
        &cfg.sim,
        cfg.experiment.n_paths,
        ExecMode::default(),
    )
    .map_err(runtime)?;
    write_text(&cfg.out_dir.join("mc.json"), &to_pretty(&ensemble_json(&result, timing)))?;
    if cfg.experiment.paths_csv {
        let mut csv = String::from("seed,hit,first_proximity_time,min_lambda\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                r.seed,
                u8::from(r.hit),
                r.first_proximity_time.map(|t| t.to_string()).unwrap_or_default(),
                r.min_lambda,
            ));
        }
        write_text(&cfg.out_dir.join("mc_paths.csv"), &csv)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepCellJson {
    delta: f64,
    result: Option<EnsembleJson>,
    error: Option<String>,
}

fn cmd_sweep(cfg: &RunConfig, timing: bool) -> Result<(), Failure> {
    let cells = mc::regime_sweep(
        &cfg.model,
        &cfg.experiment.axis,
        &cfg.x0,
        &cfg.sim,
        cfg.experiment.n_paths,
        ExecMode::default(),
    )
    .map_err(runtime)?;
    let rows: Vec<SweepCellJson> = cells
        .iter()
        .map(|c| SweepCellJson {
            delta: c.axis_value,
            result: c.result.as_ref().map(|r| ensemble_json(r, timing)),
            error: c.error.clone(),
        })
        .collect();
    write_text(&cfg.out_dir.join("sweep.json"), &to_pretty(&rows))?;

    let mut csv = String::from(
        "delta,hit_fraction,n_errors,min_lambda_q05,min_lambda_q50,min_lambda_q95,mean_first_proximity_time\n",
    );
    for c in &cells {
        match &c.result {
            Some(r) => csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.axis_value,
                r.hit_fraction,
                r.n_errors,
                r.min_lambda_quantiles[0],
                r.min_lambda_quantiles[1],
                r.min_lambda_quantiles[2],
                r.mean_first_proximity_time.map(|t| t.to_string()).unwrap_or_default(),
            )),
            None => csv.push_str(&format!("{},,,,,,\n", c.axis_value)),
        }
    }
    write_text(&cfg.out_dir.join("sweep.csv"), &csv)
}
