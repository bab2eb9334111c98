mod config;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use seqvote::bench::{
    self, BenchOptions, BenchmarkDataset, ResultsHeader, ResultsWriter, TokenConvention,
};
use seqvote::simulator::{self, SyntheticDistribution};
use seqvote::solvers::{
    load_pools, AnySolver, CategoricalDist, CostModel, EndpointConfig, LlmSolver, MockSolver,
    ReplayMode, ReplaySolver, SamplePool,
};
use seqvote::stopping::{CompiledPolicy, PolicyFamily, StoppingPolicy};
use seqvote::tally::AnswerKey;

use config::{layer, FileConfig};

#[derive(Parser)]
#[command(
    name = "seqvote",
    version,
    about = "Early-stopping majority voting over sampled answers"
)]
struct Cli {
    /// Flat TOML file supplying values for any flag not given on the command line.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a stopping policy over a dataset, appending results to a JSONL file.
    Run(Box<RunArgs>),
    /// Simulate a policy against distributions estimated from sample pools.
    Simulate(SimulateArgs),
    /// Sweep a policy family's parameter and write an average-runs/consistency CSV.
    Sweep(SweepArgs),
    /// Summarize results files into report tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct PolicyArgs {
    /// Policy family: sc, pvalue, adacons, sprt or msprt [default: msprt].
    #[arg(long)]
    policy: Option<String>,
    /// The family's parameter: sample size (sc), significance (pvalue),
    /// confidence (adacons) or β (sprt, msprt). Defaults to the calibrated value.
    #[arg(long)]
    param: Option<f64>,
    /// Sample cap per question [default: 40 for sc/pvalue/adacons, 256 for sprt/msprt].
    #[arg(long)]
    max_samples: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    /// Dataset JSONL with `id`, `question` and `answer` fields.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Answer source: mock, replay or llm [default: mock].
    #[arg(long)]
    solver: Option<String>,
    /// Sample pools JSONL; required for replay, optional for mock.
    #[arg(long)]
    pools: Option<PathBuf>,
    /// Replay order: with_replacement or sequential [default: with_replacement].
    #[arg(long)]
    replay_mode: Option<String>,
    /// Results JSONL; an existing file with the same configuration is resumed [default: results.jsonl].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Questions processed concurrently [default: 4].
    #[arg(long)]
    parallel_questions: Option<usize>,
    /// Queries in flight at once [default: 64].
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Mock solver without pools: probability of answering the gold answer [default: 0.6].
    #[arg(long)]
    mock_gold_prob: Option<f64>,
    /// Mock solver prompt tokens per query [default: 100].
    #[arg(long)]
    mock_prompt_tokens: Option<u64>,
    /// Mock solver completion tokens per query [default: 1000].
    #[arg(long)]
    mock_completion_tokens: Option<u64>,
    #[arg(long)]
    base_url: Option<String>,
    /// Request path appended to the base URL.
    #[arg(long)]
    api_path: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Reasoning effort value sent to the endpoint, e.g. low, medium, high.
    #[arg(long)]
    reasoning_effort: Option<String>,
    /// Request field name carrying the reasoning effort.
    #[arg(long)]
    reasoning_effort_field: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_attempts: Option<u32>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    /// Sample pools JSONL.
    #[arg(long)]
    pools: Option<PathBuf>,
    /// Trials per question [default: 1000].
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Policy family to sweep [default: msprt].
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated values, or `default` for the built-in grid [default: default].
    #[arg(long)]
    grid: Option<String>,
    /// Sample pools JSONL; a synthetic suite is used when absent.
    #[arg(long)]
    pools: Option<PathBuf>,
    /// Size of the synthetic suite [default: 100].
    #[arg(long)]
    synthetic_pools: Option<usize>,
    /// Trials per question and grid value [default: 1000].
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV [default: sweep.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results JSONL files to summarize.
    #[arg(long = "results", required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    /// Policy label of the token-reduction baseline [default: sc@40].
    #[arg(long)]
    baseline: Option<String>,
    /// Count completion tokens only.
    #[arg(long)]
    completion_only: bool,
    /// Output directory [default: report].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SolverKind {
    Mock,
    Replay,
    Llm,
}

#[derive(Debug, Clone, Serialize)]
struct MockSettings {
    gold_prob: f64,
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    command: &'static str,
    dataset: PathBuf,
    policy: StoppingPolicy,
    solver: SolverKind,
    pools: Option<PathBuf>,
    replay_mode: ReplayMode,
    seed: u64,
    parallel_questions: usize,
    max_in_flight: usize,
    mock: MockSettings,
    endpoint: EndpointConfig,
    /// The results file itself; not part of the embedded configuration.
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct SimulateConfig {
    command: &'static str,
    pools: PathBuf,
    policy: StoppingPolicy,
    trials: u64,
    seed: u64,
}

#[derive(Debug, Clone, Serialize)]
struct SweepConfig {
    command: &'static str,
    family: PolicyFamily,
    grid: Vec<f64>,
    pools: Option<PathBuf>,
    synthetic_pools: Option<usize>,
    trials: u64,
    seed: u64,
    #[serde(skip)]
    out: PathBuf,
}

fn parse_enum<T: DeserializeOwned>(what: &str, value: &str, expected: &str) -> Result<T> {
    serde_json::from_value(json!(value))
        .map_err(|_| anyhow::anyhow!("unknown {what} '{value}' (expected {expected})"))
}

fn resolve_policy(args: &PolicyArgs, file: &FileConfig) -> Result<StoppingPolicy> {
    let name = layer(args.policy.clone(), file.policy.clone(), "msprt".into());
    let family = PolicyFamily::parse(&name)?;
    let mut policy = match args.param.or(file.param) {
        Some(v) => family.with_param(v)?,
        None => family.default_policy(),
    };
    if let Some(cap) = args.max_samples.or(file.max_samples) {
        policy = policy.with_max_samples(cap);
        policy.validate()?;
    }
    Ok(policy)
}

fn resolve_run(args: RunArgs, file: &FileConfig) -> Result<RunConfig> {
    let dataset = args
        .dataset
        .or_else(|| file.dataset.clone())
        .context("no dataset given; pass --dataset or set `dataset` in the config file")?;
    let solver: SolverKind = parse_enum(
        "solver",
        &layer(args.solver, file.solver.clone(), "mock".into()),
        "mock, replay or llm",
    )?;
    let replay_mode: ReplayMode = parse_enum(
        "replay mode",
        &layer(
            args.replay_mode,
            file.replay_mode.clone(),
            "with_replacement".into(),
        ),
        "with_replacement or sequential",
    )?;
    let defaults = EndpointConfig::default();
    let max_in_flight = layer(
        args.max_in_flight,
        file.max_in_flight,
        defaults.max_in_flight,
    );
    let endpoint = EndpointConfig {
        base_url: layer(args.base_url, file.base_url.clone(), defaults.base_url),
        path: layer(args.api_path, file.api_path.clone(), defaults.path),
        model: layer(args.model, file.model.clone(), defaults.model),
        reasoning_effort_field: layer(
            args.reasoning_effort_field,
            file.reasoning_effort_field.clone(),
            defaults.reasoning_effort_field,
        ),
        reasoning_effort: args
            .reasoning_effort
            .or_else(|| file.reasoning_effort.clone()),
        temperature: args.temperature.or(file.temperature),
        api_key_env: layer(
            args.api_key_env,
            file.api_key_env.clone(),
            defaults.api_key_env,
        ),
        timeout_secs: layer(args.timeout_secs, file.timeout_secs, defaults.timeout_secs),
        max_attempts: layer(args.max_attempts, file.max_attempts, defaults.max_attempts),
        backoff_base_ms: defaults.backoff_base_ms,
        max_in_flight,
    };
    let gold_prob = layer(args.mock_gold_prob, file.mock_gold_prob, 0.6);
    if !(0.0..=1.0).contains(&gold_prob) {
        bail!("mock_gold_prob must lie in [0, 1], got {gold_prob}");
    }
    let pools = args.pools.or_else(|| file.pools.clone());
    if solver == SolverKind::Replay && pools.is_none() {
        bail!("the replay solver needs --pools");
    }
    Ok(RunConfig {
        command: "run",
        dataset,
        policy: resolve_policy(&args.policy, file)?,
        solver,
        pools,
        replay_mode,
        seed: layer(args.seed, file.seed, 0),
        parallel_questions: layer(args.parallel_questions, file.parallel_questions, 4).max(1),
        max_in_flight: max_in_flight.max(1),
        mock: MockSettings {
            gold_prob,
            prompt_tokens: layer(args.mock_prompt_tokens, file.mock_prompt_tokens, 100),
            completion_tokens: layer(
                args.mock_completion_tokens,
                file.mock_completion_tokens,
                1000,
            ),
        },
        endpoint,
        out: layer(args.out, file.out.clone(), PathBuf::from("results.jsonl")),
    })
}

/// Gold answer with probability `gold_prob`, the rest split over three distractors.
fn gold_mixture(gold: Option<&AnswerKey>, gold_prob: f64) -> CategoricalDist {
    let gold = gold
        .cloned()
        .unwrap_or_else(|| AnswerKey::from_canonical("unknown"));
    if gold_prob >= 1.0 {
        return CategoricalDist::degenerate(gold);
    }
    let mut entries = vec![(gold, gold_prob)];
    for i in 1..=3 {
        entries.push((
            AnswerKey::from_canonical(format!("distractor-{i}")),
            (1.0 - gold_prob) / 3.0,
        ));
    }
    CategoricalDist::new(entries).expect("mixture is a distribution")
}

fn build_solver(cfg: &RunConfig, dataset: &BenchmarkDataset) -> Result<AnySolver> {
    let pools: Vec<SamplePool> = match &cfg.pools {
        Some(path) => load_pools(path)?,
        None => Vec::new(),
    };
    Ok(match cfg.solver {
        SolverKind::Mock => {
            let mut by_question: HashMap<String, CategoricalDist> = dataset
                .problems
                .iter()
                .map(|p| {
                    (
                        p.id.clone(),
                        gold_mixture(p.gold_answer.as_ref(), cfg.mock.gold_prob),
                    )
                })
                .collect();
            for pool in &pools {
                by_question.insert(
                    pool.question_id.clone(),
                    simulator::estimate_distribution(pool)?.dist,
                );
            }
            let cost = CostModel::constant(cfg.mock.prompt_tokens, cfg.mock.completion_tokens);
            AnySolver::Mock(MockSolver::per_question(by_question, cost))
        }
        SolverKind::Replay => AnySolver::Replay(ReplaySolver::new(pools, cfg.replay_mode)?),
        SolverKind::Llm => AnySolver::Llm(LlmSolver::from_env(cfg.endpoint.clone())?),
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create directory {}", parent.display()))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs, file: &FileConfig) -> Result<()> {
    let cfg = resolve_run(args, file)?;
    let dataset = bench::load_dataset(&cfg.dataset)?;
    let compiled = CompiledPolicy::new(cfg.policy)?;
    let solver = build_solver(&cfg, &dataset)?;
    let header = ResultsHeader::new(serde_json::to_value(&cfg)?);
    ensure_parent(&cfg.out)?;
    let mut writer = ResultsWriter::open(&cfg.out, &header)?;
    let options = BenchOptions {
        master_seed: cfg.seed,
        parallel_questions: cfg.parallel_questions,
        max_in_flight: cfg.max_in_flight,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    let results = runtime.block_on(bench::run_benchmark(
        &dataset,
        &compiled,
        &solver,
        options,
        Some(&mut writer),
    ))?;
    let n = results.len().max(1) as f64;
    let avg_runs = results.iter().map(|r| r.n_samples).sum::<u64>() as f64 / n;
    eprintln!(
        "{}: {} new results ({} total) for {} on {}, avg samples {:.2} -> {}",
        compiled.policy().label(),
        results.len(),
        writer.len(),
        dataset.name,
        cfg.dataset.display(),
        avg_runs,
        cfg.out.display()
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, file: &FileConfig) -> Result<()> {
    let pools_path = args
        .pools
        .or_else(|| file.pools.clone())
        .context("no sample pools given; pass --pools or set `pools` in the config file")?;
    let cfg = SimulateConfig {
        command: "simulate",
        policy: resolve_policy(&args.policy, file)?,
        trials: layer(args.trials, file.trials, 1000),
        seed: layer(args.seed, file.seed, 0),
        pools: pools_path,
    };
    let pools = load_pools(&cfg.pools)?;
    let compiled = CompiledPolicy::new(cfg.policy)?;
    let label = compiled.policy().label();
    let out = args.out.or_else(|| file.out.clone());

    let sink: Box<dyn std::io::Write> = match &out {
        Some(path) => {
            ensure_parent(path)?;
            Box::new(
                fs::File::create(path)
                    .with_context(|| format!("cannot create {}", path.display()))?,
            )
        }
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["question", "policy", "avg_runs", "consistency", "hit_gold"])?;
    for pool in &pools {
        let dist: SyntheticDistribution = simulator::estimate_distribution(pool)?;
        let o = simulator::simulate_question(&dist, &compiled, cfg.trials, cfg.seed)?;
        w.write_record([
            pool.question_id.clone(),
            label.clone(),
            format!("{:.6}", o.avg_runs),
            format!("{:.6}", o.consistency),
            o.hit_gold.map(|h| format!("{h:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    if let Some(path) = out {
        bench::write_meta_sidecar(&path, &serde_json::to_value(&cfg)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_grid(spec: &str, family: PolicyFamily) -> Result<Vec<f64>> {
    if spec.trim() == "default" {
        return Ok(simulator::default_grid(family));
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("grid value '{}' is not a number", s.trim()))
        })
        .collect()
}

fn cmd_sweep(args: SweepArgs, file: &FileConfig) -> Result<()> {
    let family = PolicyFamily::parse(&layer(args.family, file.family.clone(), "msprt".into()))?;
    let grid = parse_grid(
        &layer(args.grid, file.grid.clone(), "default".into()),
        family,
    )?;
    let pools_path = args.pools.or_else(|| file.pools.clone());
    let synthetic = match pools_path {
        Some(_) => None,
        None => Some(layer(args.synthetic_pools, file.synthetic_pools, 100)),
    };
    let cfg = SweepConfig {
        command: "sweep",
        family,
        grid,
        pools: pools_path,
        synthetic_pools: synthetic,
        trials: layer(args.trials, file.trials, 1000),
        seed: layer(args.seed, file.seed, 0),
        out: layer(args.out, file.out.clone(), PathBuf::from("sweep.csv")),
    };
    let pools = match (&cfg.pools, cfg.synthetic_pools) {
        (Some(path), _) => load_pools(path)?,
        (None, Some(n)) => simulator::synthetic_suite(n, cfg.seed),
        (None, None) => unreachable!("one pool source is always set"),
    };
    let points = simulator::sweep(&pools, cfg.family, &cfg.grid, cfg.trials, cfg.seed)?;
    ensure_parent(&cfg.out)?;
    simulator::write_sweep_csv(&cfg.out, &points)?;
    bench::write_meta_sidecar(&cfg.out, &serde_json::to_value(&cfg)?)?;
    eprintln!("{} grid points -> {}", points.len(), cfg.out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs, file: &FileConfig) -> Result<()> {
    let baseline = layer(args.baseline, file.baseline.clone(), "sc@40".into());
    let completion_only = args.completion_only || file.completion_only.unwrap_or(false);
    let convention = if completion_only {
        TokenConvention::CompletionOnly
    } else {
        TokenConvention::PromptPlusCompletion
    };
    let out_dir = layer(args.out_dir, file.out_dir.clone(), PathBuf::from("report"));
    let mut all = Vec::new();
    let mut inputs = Vec::new();
    for path in &args.results {
        let (header, results) = bench::load_results(path)?;
        inputs.push(json!({"path": path, "header": header}));
        all.extend(results);
    }
    let config = json!({
        "command": "report",
        "baseline": baseline,
        "token_convention": convention,
        "inputs": inputs,
    });
    let files = bench::emit_report(&all, &baseline, convention, &out_dir, &config)?;
    print!("{}", fs::read_to_string(&files.summary_txt)?);
    eprintln!("report written to {}", out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = (|| {
        let file = match &cli.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        match cli.command {
            Command::Run(a) => cmd_run(*a, &file),
            Command::Simulate(a) => cmd_simulate(a, &file),
            Command::Sweep(a) => cmd_sweep(a, &file),
            Command::Report(a) => cmd_report(a, &file),
        }
    })();
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
