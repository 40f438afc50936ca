//! Command-line entry point: fit models from trial logs, simulate sessions,
//! sweep the policy map, compare policies, and demo the particle filter.
//!
//! Exit codes: 0 success, 1 input error, 2 identifiability warning.

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dualtask::domain::{
    c1_code, c2_code, classify_engagement_event, classify_trust_event, experience_of,
    CollectionComplexity, EnvironmentParams, Outcome, RobotAction, TrackingComplexity,
    LOG_HEADER,
};
use dualtask::dynamics::{EngagementParams, TrustParams};
use dualtask::estimation::{
    em_fit_lds, fit_action_model, pf_estimate, pf_step, sequences_from_records, ActionFitConfig,
    EmConfig, EmReport, EstimationError, ParticleBelief, Sequence, TrialEvents, TrialObservations,
};
use dualtask::log_io::read_trial_log_file;
use dualtask::params_io::{load_params, save_params, ModelParams};
use dualtask::policy::{policy_map, KnownContext, MPCConfig};
use dualtask::simulation::{
    child_seed, generate_synthetic_logs, run_session, ComplexitySchedule, EvaluationConfig,
    EvaluationReport, InitialStateDist, PfConfig, PolicyKind, SessionConfig, SessionResult,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "dualtask", version, about = "Assistance-seeking policy toolkit for a dual-task supervised robot")]
struct Cli {
    /// Thread-pool size for parallel work (default: all cores). Results do
    /// not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the trust/engagement dynamics (EM) and the reliance model
    /// (Monte-Carlo MLE) from a trial-log CSV.
    Fit(FitArgs),
    /// Run one closed-loop session under a policy and write per-trial rows.
    Simulate(SimulateArgs),
    /// Sweep the first-step MPC action over a (T, G) grid.
    PolicyMap(PolicyMapArgs),
    /// Paired Monte-Carlo comparison of two policies.
    Evaluate(EvaluateArgs),
    /// Run the particle filter against a simulated session's ground truth.
    FilterDemo(FilterDemoArgs),
    /// Generate synthetic data-collection logs under the randomized policy.
    GenLogs(GenLogsArgs),
    /// Re-execute a run from its manifest; outputs are reproduced bitwise.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    /// Trial-log CSV in the domain format.
    #[arg(long)]
    log: PathBuf,
    /// Output parameter document (TOML). EM diagnostics are written next to
    /// it as `<out>_trust.csv` and `<out>_engagement.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Master seed for the Monte-Carlo action-model fit.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    em_max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    em_tol: f64,
    /// Posterior trajectory draws per participant for the action-model fit.
    #[arg(long, default_value_t = 50)]
    mc_samples: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Parameter document (TOML); defaults to the shipped estimates.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Per-trial CSV output; a summary is written as `<out>.summary.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Balanced)]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    #[arg(long, default_value_t = 2000)]
    particles: usize,
    /// Mean initial trust of the synthetic supervisor.
    #[arg(long, default_value_t = 7.0)]
    init_trust: f64,
    /// Mean initial engagement of the synthetic supervisor.
    #[arg(long, default_value_t = 7.0)]
    init_engagement: f64,
    /// Standard deviation of both initial-state coordinates.
    #[arg(long, default_value_t = 0.5)]
    init_std: f64,
}

#[derive(Args, Debug, Serialize)]
struct PolicyMapArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum)]
    c1: C1Arg,
    #[arg(long, value_enum, default_value_t = C2Arg::Slow)]
    c2: C2Arg,
    #[arg(long, value_enum, default_value_t = ExperienceArg::Succ)]
    prev_experience: ExperienceArg,
    #[arg(long, default_value_t = 0.0)]
    t_min: f64,
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.5)]
    t_step: f64,
    #[arg(long, default_value_t = 0.0)]
    g_min: f64,
    #[arg(long, default_value_t = 10.0)]
    g_max: f64,
    #[arg(long, default_value_t = 0.5)]
    g_step: f64,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum)]
    first: PolicyArg,
    #[arg(long, value_enum)]
    second: PolicyArg,
    #[arg(long, default_value_t = 100)]
    sessions: usize,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Report text output; per-session scores go to `<out>_sessions.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Mean initial trust of the synthetic supervisor.
    #[arg(long, default_value_t = 7.0)]
    init_trust: f64,
    /// Mean initial engagement of the synthetic supervisor.
    #[arg(long, default_value_t = 7.0)]
    init_engagement: f64,
    /// Standard deviation of both initial-state coordinates.
    #[arg(long, default_value_t = 0.5)]
    init_std: f64,
    #[arg(long, default_value_t = 2000)]
    particles: usize,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
}

#[derive(Args, Debug, Serialize)]
struct FilterDemoArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Random)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    particles: usize,
    /// Per-trial CSV of estimated vs ground-truth latent states.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GenLogsArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 11)]
    participants: usize,
    #[arg(long, default_value_t = 60)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct RerunArgs {
    /// Manifest JSON written by a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum PolicyArg {
    Mpc,
    Greedy,
    Random,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Mpc => PolicyKind::Mpc,
            PolicyArg::Greedy => PolicyKind::Greedy,
            PolicyArg::Random => PolicyKind::Random,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum ScheduleArg {
    Balanced,
    Iid,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum C1Arg {
    Low,
    High,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum C2Arg {
    Slow,
    Norm,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum ExperienceArg {
    Succ,
    Fail,
}

/// Provenance record written next to every output.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    artifacts: Vec<String>,
    version: String,
    /// The argument vector (after the program name) that produced the run.
    argv: Vec<String>,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest(
    command: &str,
    config: impl Serialize,
    seed: Option<u64>,
    artifacts: &[&Path],
    argv: &[String],
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config: serde_json::to_value(config)?,
        seed,
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
        version: dualtask::VERSION.to_string(),
        argv: argv.to_vec(),
    };
    let path = manifest_path(artifacts[0]);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_or_default_params(path: &Option<PathBuf>) -> Result<ModelParams> {
    let params = match path {
        Some(p) => load_params(p)?,
        None => ModelParams::paper_defaults(),
    };
    params.validate().map_err(|e| anyhow::anyhow!("invalid parameters: {e}"))?;
    Ok(params)
}

fn experience_from_arg(e: ExperienceArg) -> Outcome {
    match e {
        ExperienceArg::Succ => Outcome::Success,
        ExperienceArg::Fail => Outcome::Failure,
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("warning: thread pool already initialized; --threads ignored");
        }
    }
    match dispatch(cli.command, &argv) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command, argv: &[String]) -> Result<u8> {
    match command {
        Command::Fit(args) => cmd_fit(args, argv),
        Command::Simulate(args) => cmd_simulate(args, argv),
        Command::PolicyMap(args) => cmd_policy_map(args, argv),
        Command::Evaluate(args) => cmd_evaluate(args, argv),
        Command::FilterDemo(args) => cmd_filter_demo(args, argv),
        Command::GenLogs(args) => cmd_gen_logs(args, argv),
        Command::Rerun(args) => cmd_rerun(args),
    }
}

fn write_em_diagnostics(path: &Path, report: &EmReport) -> Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    writeln!(f, "iter,loglik")?;
    for (i, ll) in report.loglik_trace.iter().enumerate() {
        writeln!(f, "{},{}", i + 1, ll)?;
    }
    Ok(())
}

fn diag_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn cmd_fit(args: FitArgs, argv: &[String]) -> Result<u8> {
    let logs = read_trial_log_file(&args.log)?;
    let mut trust_seqs: Vec<Sequence> = Vec::new();
    let mut eng_seqs: Vec<Sequence> = Vec::new();
    for records in &logs {
        let (t, g) = sequences_from_records(records)?;
        trust_seqs.push(t);
        eng_seqs.push(g);
    }

    let trust_cfg =
        EmConfig { max_iters: args.em_max_iters, tol: args.em_tol, ..EmConfig::trust_default() };
    let eng_cfg = EmConfig {
        max_iters: args.em_max_iters,
        tol: args.em_tol,
        ..EmConfig::engagement_default()
    };
    let trust_report = em_fit_lds(&trust_seqs, 7, &trust_cfg)?;
    let eng_report = em_fit_lds(&eng_seqs, 8, &eng_cfg)?;

    let trust_diag = diag_path(&args.out, "trust");
    let eng_diag = diag_path(&args.out, "engagement");
    write_em_diagnostics(&trust_diag, &trust_report)?;
    write_em_diagnostics(&eng_diag, &eng_report)?;

    let trust = TrustParams {
        a: trust_report.model.a,
        b: trust_report.model.b.clone().try_into().expect("7 trust events"),
        c: trust_report.model.c,
        q_process: trust_report.model.q,
        r_measure: trust_report.model.r,
    };
    let engagement = EngagementParams {
        a: eng_report.model.a,
        b: eng_report.model.b.clone().try_into().expect("8 engagement events"),
        c: eng_report.model.c,
        q_process: eng_report.model.q,
        r_measure: eng_report.model.r,
    };

    let mut warnings: Vec<String> = Vec::new();
    for (name, report) in [("trust", &trust_report), ("engagement", &eng_report)] {
        if !report.unidentified_events.is_empty() {
            let shown: Vec<usize> = report.unidentified_events.iter().map(|i| i + 1).collect();
            warnings.push(format!("{name} events never observed: {shown:?}"));
        }
        if !report.converged {
            warnings.push(format!("{name} EM hit the iteration cap without converging"));
        }
    }

    let fit_cfg = ActionFitConfig {
        mc_samples: args.mc_samples,
        restarts: args.restarts,
        ..ActionFitConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let action_report = match fit_action_model(&logs, &trust, &engagement, &fit_cfg, &mut rng) {
        Ok(r) => r,
        Err(EstimationError::Unidentifiable(msg)) => {
            eprintln!("unidentifiable action model: {msg}");
            return Ok(2);
        }
        Err(e) => return Err(e.into()),
    };
    if action_report.separation.0 {
        warnings.push("low-complexity reliance data is perfectly separated".into());
    }
    if action_report.separation.1 {
        warnings.push("high-complexity reliance data is perfectly separated".into());
    }

    let params = ModelParams {
        trust,
        engagement,
        action: action_report.params,
        env: EnvironmentParams::default_rates(),
    };
    save_params(&params, &args.out)?;
    write_manifest(
        "fit",
        &args,
        Some(args.seed),
        &[&args.out, &trust_diag, &eng_diag],
        argv,
    )?;

    println!(
        "fit: trust EM {} iters, engagement EM {} iters, action fit on {}/{} low/high observations",
        trust_report.iterations, eng_report.iterations, action_report.n_obs.0, action_report.n_obs.1
    );
    if warnings.is_empty() {
        Ok(0)
    } else {
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        Ok(2)
    }
}

const SIMULATE_EXTRA_COLUMNS: [&str; 7] =
    ["true_T", "true_G", "est_T", "est_G", "q1", "r_coll", "r_track"];

fn write_session_csv(path: &Path, result: &SessionResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let header: Vec<&str> = LOG_HEADER.iter().chain(SIMULATE_EXTRA_COLUMNS.iter()).copied().collect();
    w.write_record(&header)?;
    for t in &result.trials {
        let mut row: Vec<String> = t.record.to_csv_row().to_vec();
        row.push(t.latent.trust.to_string());
        row.push(t.latent.engagement.to_string());
        row.push(t.estimate.map(|e| e.trust.to_string()).unwrap_or_default());
        row.push(t.estimate.map(|e| e.engagement.to_string()).unwrap_or_default());
        row.push(t.q1.map(|q| q.to_string()).unwrap_or_default());
        row.push(t.reward_collection.to_string());
        row.push(t.reward_tracking.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, argv: &[String]) -> Result<u8> {
    let params = load_or_default_params(&args.params)?;
    let mut config = SessionConfig::new(args.policy.into(), args.trials, args.seed);
    config.schedule = match args.schedule {
        ScheduleArg::Balanced => ComplexitySchedule::BalancedPermuted,
        ScheduleArg::Iid => ComplexitySchedule::Iid,
    };
    config.mpc.horizon = args.horizon;
    config.pf.particles = args.particles;
    config.init = InitialStateDist {
        trust_mean: args.init_trust,
        trust_std: args.init_std,
        engagement_mean: args.init_engagement,
        engagement_std: args.init_std,
    };
    config.pf.trust_prior_mean = args.init_trust;
    config.pf.engagement_prior_mean = args.init_engagement;
    config.pf.trust_prior_var = (args.init_std * args.init_std).max(0.25);
    config.pf.engagement_prior_var = (args.init_std * args.init_std).max(0.25);
    let result = run_session(&config, &params, "sim")?;

    write_session_csv(&args.out, &result)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        policy: PolicyKind,
        n_trials: usize,
        total_collection: f64,
        total_tracking: f64,
        total_score: f64,
        interruptions: usize,
        assists: usize,
        config: &'a SessionConfig,
    }
    let summary = Summary {
        policy: config.policy,
        n_trials: config.n_trials,
        total_collection: result.total_collection,
        total_tracking: result.total_tracking,
        total_score: result.total_score,
        interruptions: result.interruptions,
        assists: result.assists,
        config: &config,
    };
    let mut summary_name = args.out.file_name().unwrap_or_default().to_os_string();
    summary_name.push(".summary.json");
    let summary_path = args.out.with_file_name(summary_name);
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    write_manifest("simulate", &args, Some(args.seed), &[&args.out, &summary_path], argv)?;
    println!(
        "simulate: total score {} ({} collection + {} tracking), {} interruptions, {} assists",
        result.total_score,
        result.total_collection,
        result.total_tracking,
        result.interruptions,
        result.assists
    );
    Ok(0)
}

fn grid_values(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite()) || step <= 0.0 || max < min {
        bail!("bad grid bounds: min {min}, max {max}, step {step}");
    }
    let n = ((max - min) / step).round() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).filter(|&v| v <= max + 1e-9).collect())
}

fn cmd_policy_map(args: PolicyMapArgs, argv: &[String]) -> Result<u8> {
    let params = load_or_default_params(&args.params)?;
    let t_values = grid_values(args.t_min, args.t_max, args.t_step)?;
    let g_values = grid_values(args.g_min, args.g_max, args.g_step)?;
    let known = KnownContext {
        c1: match args.c1 {
            C1Arg::Low => CollectionComplexity::Low,
            C1Arg::High => CollectionComplexity::High,
        },
        c2: match args.c2 {
            C2Arg::Slow => TrackingComplexity::Slow,
            C2Arg::Norm => TrackingComplexity::Normal,
        },
        prev_experience: experience_from_arg(args.prev_experience),
    };
    let config = MPCConfig { horizon: args.horizon, ..MPCConfig::default() };
    let cells = policy_map(
        &t_values,
        &g_values,
        &known,
        &config,
        &params.trust,
        &params.engagement,
        &params.action,
    )?;

    let mut w = csv::Writer::from_path(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    w.write_record(["T", "G", "c1", "c2", "prev_experience", "q1", "action"])?;
    for cell in &cells {
        w.write_record([
            cell.t.to_string(),
            cell.g.to_string(),
            c1_code(cell.c1).to_string(),
            c2_code(cell.c2).to_string(),
            match cell.prev_experience {
                Outcome::Success => "succ",
                Outcome::Failure => "fail",
            }
            .to_string(),
            cell.q1.to_string(),
            match cell.action {
                RobotAction::AttemptAutonomous => "collect",
                RobotAction::SeekAssistance => "assist",
            }
            .to_string(),
        ])?;
    }
    w.flush()?;
    write_manifest("policy-map", &args, None, &[&args.out], argv)?;
    println!("policy-map: {} cells", cells.len());
    Ok(0)
}

fn write_evaluation_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    writeln!(f, "paired policy evaluation")?;
    writeln!(f, "sessions: {}  trials per session: {}", report.n_sessions, report.n_trials)?;
    writeln!(f)?;
    writeln!(
        f,
        "{:<10} {:>10} {:>10} {:>24} {:>14} {:>10}",
        "policy", "mean", "median", "mean 95% CI", "interruptions", "assists"
    )?;
    for s in [&report.first, &report.second] {
        writeln!(
            f,
            "{:<10} {:>10.4} {:>10.4} {:>24} {:>14} {:>10}",
            format!("{:?}", s.policy).to_lowercase(),
            s.mean_score,
            s.median_score,
            format!("[{:.4}, {:.4}]", s.mean_ci.0, s.mean_ci.1),
            s.total_interruptions,
            s.total_assists
        )?;
    }
    writeln!(f)?;
    writeln!(
        f,
        "mean score difference (first - second): {:.4}, 95% CI [{:.4}, {:.4}]",
        report.mean_diff, report.diff_ci.0, report.diff_ci.1
    )?;
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, argv: &[String]) -> Result<u8> {
    let params = load_or_default_params(&args.params)?;
    let mut config = EvaluationConfig::new(
        args.first.into(),
        args.second.into(),
        args.sessions,
        args.trials,
        args.seed,
    );
    config.init = InitialStateDist {
        trust_mean: args.init_trust,
        trust_std: args.init_std,
        engagement_mean: args.init_engagement,
        engagement_std: args.init_std,
    };
    // the estimator's prior tracks the population the supervisor is drawn from
    config.pf = PfConfig {
        particles: args.particles,
        trust_prior_mean: args.init_trust,
        trust_prior_var: (args.init_std * args.init_std).max(0.25),
        engagement_prior_mean: args.init_engagement,
        engagement_prior_var: (args.init_std * args.init_std).max(0.25),
    };
    config.mpc.horizon = args.horizon;
    let report = dualtask::simulation::evaluate_policies(&config, &params)?;

    write_evaluation_report(&args.out, &report)?;
    let sessions_path = diag_path(&args.out, "sessions");
    let mut w = csv::Writer::from_path(&sessions_path)
        .with_context(|| format!("writing {}", sessions_path.display()))?;
    w.write_record(["session", "first_score", "second_score", "difference"])?;
    for (i, (a, b)) in report.first.scores.iter().zip(&report.second.scores).enumerate() {
        w.write_record([(i + 1).to_string(), a.to_string(), b.to_string(), (a - b).to_string()])?;
    }
    w.flush()?;
    write_manifest("evaluate", &args, Some(args.seed), &[&args.out, &sessions_path], argv)?;
    println!(
        "evaluate: mean difference {:.4}, 95% CI [{:.4}, {:.4}]",
        report.mean_diff, report.diff_ci.0, report.diff_ci.1
    );
    Ok(0)
}

fn cmd_filter_demo(args: FilterDemoArgs, argv: &[String]) -> Result<u8> {
    let params = load_or_default_params(&args.params)?;
    let mut config = SessionConfig::new(args.policy.into(), args.trials, args.seed);
    config.pf.particles = args.particles;
    let result = run_session(&config, &params, "demo")?;

    // replay the session through a fresh particle filter, exactly as an
    // online estimator would see it: actions and tracking scores only
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(args.seed, 1000));
    let mut belief = ParticleBelief::from_prior(
        config.pf.particles,
        config.pf.trust_prior_mean,
        config.pf.trust_prior_var,
        config.pf.engagement_prior_mean,
        config.pf.engagement_prior_var,
        &mut rng,
    );
    let mut prev_experience = Outcome::Success;

    let mut w = csv::Writer::from_path(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    w.write_record(["trial", "true_T", "true_G", "est_T", "est_G"])?;
    for t in &result.trials {
        let est = pf_estimate(&belief);
        w.write_record([
            t.record.trial_index.to_string(),
            t.latent.trust.to_string(),
            t.latent.engagement.to_string(),
            est.trust.to_string(),
            est.engagement.to_string(),
        ])?;
        let rec = &t.record;
        let events = TrialEvents {
            trust: classify_trust_event(rec.c1, rec.robot_action, rec.human_action, rec.outcome)?,
            engagement: classify_engagement_event(rec.c2, rec.robot_action, prev_experience),
        };
        let observations = TrialObservations {
            human_action: rec.human_action.map(|a| (a, rec.c1)),
            tracking_score: Some(rec.tracking_score),
            trust_report: None,
        };
        belief = pf_step(
            &belief,
            &params.trust,
            &params.engagement,
            &params.action,
            events,
            &observations,
            &mut rng,
        )?;
        prev_experience = experience_of(rec.robot_action, rec.human_action, rec.outcome);
    }
    w.flush()?;
    write_manifest("filter-demo", &args, Some(args.seed), &[&args.out], argv)?;
    println!("filter-demo: {} trials", result.trials.len());
    Ok(0)
}

fn cmd_gen_logs(args: GenLogsArgs, argv: &[String]) -> Result<u8> {
    let params = load_or_default_params(&args.params)?;
    let logs = generate_synthetic_logs(args.participants, args.trials, &params, args.seed)?;
    dualtask::log_io::write_trial_log_file(&args.out, &logs)?;
    write_manifest("gen-logs", &args, Some(args.seed), &[&args.out], argv)?;
    println!("gen-logs: {} participants x {} trials", args.participants, args.trials);
    Ok(0)
}

fn cmd_rerun(args: RerunArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    if manifest.command == "rerun" {
        bail!("manifest describes a rerun; refusing to recurse");
    }
    let mut full = vec!["dualtask".to_string()];
    full.extend(manifest.argv.iter().cloned());
    let cli = Cli::try_parse_from(&full)
        .map_err(|e| anyhow::anyhow!("manifest argv no longer parses: {e}"))?;
    dispatch(cli.command, &manifest.argv)
}
