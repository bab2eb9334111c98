//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with a custom harness so the report prints regardless of output
//! capture. Exits nonzero if any criterion fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use seqvote::bench::{self, BenchOptions, BenchmarkDataset, TokenConvention};
use seqvote::fixtures;
use seqvote::numerics::binom_sf;
use seqvote::scheduler::{sequential_testing_blocking, RunOptions};
use seqvote::simulator::{self, SyntheticDistribution};
use seqvote::solvers::{
    CategoricalDist, CostModel, MockSolver, ProblemSpec, ReplayMode, ReplaySolver,
};
use seqvote::stopping::{
    adacons_posterior, hoeffding_sample_size, msprt_decide, msprt_log_lr, sprt_decide,
    sprt_thresholds, CompiledPolicy, Decision, PolicyFamily, StoppingPolicy, CALIBRATED_MSPRT_BETA,
    CALIBRATED_MSPRT_PRIOR, CALIBRATED_SPRT_BETA, CALIBRATED_SPRT_P1, DEFAULT_ALPHA,
};
use seqvote::tally::{AnswerKey, VoteTally};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn key(s: &str) -> AnswerKey {
    AnswerKey::from_canonical(s)
}

fn constant_mock(answer: &str, prompt: u64, completion: u64) -> MockSolver {
    MockSolver::single(
        CategoricalDist::degenerate(key(answer)),
        CostModel::constant(prompt, completion),
    )
}

fn first_stop_end_to_end(policy: StoppingPolicy) -> u64 {
    let compiled = CompiledPolicy::new(policy).unwrap();
    let trace = sequential_testing_blocking(
        &ProblemSpec::new("q", "?"),
        &compiled,
        &constant_mock("a", 1, 1),
        RunOptions::default(),
    )
    .unwrap();
    trace.n_samples()
}

fn c1_worked_example() -> Verdict {
    let t = sprt_thresholds(0.05, 0.10).map_err(|e| e.to_string())?;
    let a = t.upper.to_linear();
    let b = t.lower.to_linear();
    ensure(
        (a - 18.0).abs() <= 4.0 * f64::EPSILON * 18.0,
        format!("A = {a:.17}"),
    )?;
    ensure((b - 0.1053).abs() <= 1e-4, format!("B = {b}"))?;
    Ok(format!("A = {a}, B = {b:.6}"))
}

fn c2_calibrated_sprt_boundary() -> Verdict {
    let t = sprt_thresholds(DEFAULT_ALPHA, CALIBRATED_SPRT_BETA).map_err(|e| e.to_string())?;
    let ln_a = ((1.0 - CALIBRATED_SPRT_BETA) / DEFAULT_ALPHA).ln();
    let mut checked = 0;
    for n1 in 0..=256u64 {
        for n2 in 0..=n1.min(256 - n1) {
            let lead3 = n1 - n2 >= 3;
            let direct = oracle::sprt_log_lr_direct(n1, n2, CALIBRATED_SPRT_P1) >= ln_a;
            let decided = sprt_decide(n1, n2, CALIBRATED_SPRT_P1, &t).map_err(|e| e.to_string())?
                == Decision::StopDominant;
            ensure(
                decided == lead3 && direct == lead3,
                format!("({n1},{n2}): decide {decided}, direct {direct}, lead>=3 {lead3}"),
            )?;
            checked += 1;
        }
    }
    Ok(format!("{checked} count pairs, stop iff lead >= 3"))
}

fn c3_unanimous_first_stops() -> Verdict {
    let sf5 = binom_sf(5, 5, 0.5).map_err(|e| e.to_string())?;
    let sf4 = binom_sf(4, 4, 0.5).map_err(|e| e.to_string())?;
    ensure(
        sf5 == 1.0 / 32.0 && sf5 < 0.05 && sf4 >= 0.05,
        format!("binom_sf {sf5} {sf4}"),
    )?;
    let post4 = adacons_posterior(4, 0).map_err(|e| e.to_string())?;
    let post3 = adacons_posterior(3, 0).map_err(|e| e.to_string())?;
    ensure(
        (post4 - 0.96875).abs() < 1e-15 && post3 < 0.95,
        format!("posterior {post4} {post3}"),
    )?;

    let st = sprt_thresholds(DEFAULT_ALPHA, CALIBRATED_SPRT_BETA).unwrap();
    let sprt = |n| sprt_decide(n, 0, CALIBRATED_SPRT_P1, &st).unwrap();
    ensure(
        sprt(3) == Decision::StopDominant && sprt(2) == Decision::Continue,
        "sprt crossing",
    )?;
    let mt = sprt_thresholds(DEFAULT_ALPHA, CALIBRATED_MSPRT_BETA).unwrap();
    let msprt =
        |n| msprt_decide(n, 0, CALIBRATED_MSPRT_PRIOR, CALIBRATED_MSPRT_PRIOR, &mt).unwrap();
    ensure(
        msprt(3) == Decision::StopDominant && msprt(2) == Decision::Continue,
        "msprt crossing",
    )?;

    let runs = [
        (
            "pvalue",
            first_stop_end_to_end(StoppingPolicy::pvalue(0.05)),
            5,
        ),
        (
            "adacons",
            first_stop_end_to_end(StoppingPolicy::adacons(0.95)),
            4,
        ),
        (
            "sprt",
            first_stop_end_to_end(StoppingPolicy::sprt_calibrated()),
            3,
        ),
        (
            "msprt",
            first_stop_end_to_end(StoppingPolicy::msprt_calibrated()),
            3,
        ),
    ];
    for (name, got, want) in runs {
        ensure(
            got == want,
            format!("{name} stopped after {got}, expected {want}"),
        )?;
    }
    Ok("pvalue 5, adacons 4, sprt 3, msprt 3 (analytic and end-to-end)".into())
}

fn c4_msprt_vs_quadrature() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut n_points = 0;
    for prior in [1.0, 1e3, 1e6] {
        for n2 in [0u64, 1, 2, 5, 13, 40, 90, 149] {
            for lead in [0u64, 1, 2, 3, 4, 7, 15, 33, 80, 150, 300] {
                let n1 = n2 + lead;
                if n1 + n2 > 300 {
                    continue;
                }
                let want = oracle::msprt_log_lr_quadrature(n1, n2, prior, prior);
                let got = msprt_log_lr(n1, n2, prior, prior).map_err(|e| e.to_string())?;
                let d = oracle::rel_diff(got, want);
                ensure(
                    d <= 1e-6,
                    format!("prior {prior} ({n1},{n2}): {got} vs {want}"),
                )?;
                worst = worst.max(d);
                n_points += 1;
            }
        }
    }
    Ok(format!(
        "{n_points} points, worst relative error {worst:.2e}"
    ))
}

fn c5_hoeffding() -> Verdict {
    let n = hoeffding_sample_size(4, 0.25, 0.05).map_err(|e| e.to_string())?;
    ensure(n == 41, format!("got {n}"))?;
    Ok("n = 41".into())
}

fn c6_torus_fixture() -> Verdict {
    let pool = fixtures::torus_pool();
    let n = pool.len() as u64;
    let solver =
        ReplaySolver::new(vec![pool], ReplayMode::Sequential).map_err(|e| e.to_string())?;
    let problem = fixtures::torus_problem();
    let compiled = CompiledPolicy::new(StoppingPolicy::self_consistency(n)).unwrap();
    let trace = sequential_testing_blocking(&problem, &compiled, &solver, RunOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(trace.n_errors() == 0, "replay errors")?;
    let tally: VoteTally = trace.tally();
    let expected: [(&str, u64); 7] = [
        ("127", 9),
        ("19", 6),
        ("55", 6),
        ("13", 6),
        ("23", 5),
        ("17", 5),
        ("31", 4),
    ];
    for (answer, count) in expected {
        ensure(
            tally.count(&key(answer)) == count,
            format!("count of {answer}"),
        )?;
    }
    for (answer, count) in [("29", 3), ("61", 3), ("7", 2), ("24", 2)] {
        ensure(
            tally.count(&key(answer)) == count,
            format!("count of {answer}"),
        )?;
    }
    let singletons = tally.entries().iter().filter(|e| e.count == 1).count();
    ensure(singletons == 10, format!("{singletons} singletons"))?;
    let stats = tally.distribution_stats().map_err(|e| e.to_string())?;
    ensure((stats.n_first, stats.n_second) == (9, 6), "top-two counts")?;
    ensure(trace.final_answer == Some(key("127")), "mode")?;
    Ok(format!(
        "{n} samples, n_first = 9, n_second = 6, three answers at 6"
    ))
}

fn c7_operating_characteristics() -> Verdict {
    let dist = SyntheticDistribution::new("ab", vec![(key("A"), 0.9), (key("B"), 0.1)], None)
        .map_err(|e| e.to_string())?;
    let compiled = CompiledPolicy::new(StoppingPolicy::sprt_calibrated()).unwrap();
    let o = simulator::simulate_question(&dist, &compiled, 10_000, 7).map_err(|e| e.to_string())?;
    ensure(
        o.consistency >= 0.99,
        format!("consistency {}", o.consistency),
    )?;
    ensure(
        (3.0..=5.0).contains(&o.avg_runs),
        format!("avg_runs {}", o.avg_runs),
    )?;
    Ok(format!(
        "consistency {:.4}, avg_runs {:.3}",
        o.consistency, o.avg_runs
    ))
}

fn c8_sweep_shape() -> Verdict {
    const SEED: u64 = 2024;
    let suite = simulator::synthetic_suite(120, SEED);

    let sc_grid = simulator::default_grid(PolicyFamily::SelfConsistency);
    let sc = simulator::sweep(&suite, PolicyFamily::SelfConsistency, &sc_grid, 20, SEED)
        .map_err(|e| e.to_string())?;
    for p in &sc {
        ensure(
            p.avg_runs == p.param_value,
            format!("sc@{} used {}", p.param_value, p.avg_runs),
        )?;
    }

    let trials = 1000;
    let msprt = simulator::sweep(
        &suite,
        PolicyFamily::Msprt,
        &simulator::default_grid(PolicyFamily::Msprt),
        trials,
        SEED,
    )
    .map_err(|e| e.to_string())?;
    let ada = simulator::sweep(
        &suite,
        PolicyFamily::AdaCons,
        &simulator::default_grid(PolicyFamily::AdaCons),
        trials,
        SEED,
    )
    .map_err(|e| e.to_string())?;
    let mut matched = 0;
    for m in &msprt {
        for a in ada
            .iter()
            .filter(|a| (a.avg_runs - m.avg_runs).abs() <= 0.5)
        {
            matched += 1;
            ensure(
                m.consistency >= a.consistency,
                format!(
                    "msprt β={} ({:.2} runs, {:.4}) below adacons {} ({:.2} runs, {:.4})",
                    m.param_value,
                    m.avg_runs,
                    m.consistency,
                    a.param_value,
                    a.avg_runs,
                    a.consistency
                ),
            )?;
        }
    }
    ensure(
        matched > 0,
        "no mSPRT/AdaCons points within 0.5 average runs",
    )?;

    let mut near_tied: Vec<_> = suite
        .into_iter()
        .filter(|p| simulator::top_two_gap(p) <= 3)
        .collect();
    near_tied.push(fixtures::torus_pool());
    let lowest_beta = simulator::default_grid(PolicyFamily::Msprt)[0];
    let msprt_policy =
        CompiledPolicy::new(PolicyFamily::Msprt.with_param(lowest_beta).unwrap()).unwrap();
    let sc40 = CompiledPolicy::new(StoppingPolicy::self_consistency(40)).unwrap();
    let (mut m_cons, mut s_cons) = (0.0, 0.0);
    for pool in &near_tied {
        let d = simulator::estimate_distribution(pool).map_err(|e| e.to_string())?;
        m_cons += simulator::simulate_question(&d, &msprt_policy, 2000, SEED)
            .map_err(|e| e.to_string())?
            .consistency;
        s_cons += simulator::simulate_question(&d, &sc40, 2000, SEED)
            .map_err(|e| e.to_string())?
            .consistency;
    }
    let k = near_tied.len() as f64;
    let gain = 100.0 * (m_cons - s_cons) / k;
    ensure(gain >= 2.0, format!("near-tied gain {gain:.2} points"))?;
    Ok(format!(
        "sc exact; {matched} matched pairs with mSPRT >= AdaCons; near-tied subset of {} pools: mSPRT(β={lowest_beta}) {:.4} vs sc@40 {:.4} (+{gain:.1} points)",
        near_tied.len(),
        m_cons / k,
        s_cons / k
    ))
}

fn c9_token_reduction() -> Verdict {
    let problems = (0..10)
        .map(|i| ProblemSpec::new(format!("q{i}"), "?").with_gold(key("a")))
        .collect();
    let dataset = BenchmarkDataset::new("unanimous", problems).unwrap();
    let solver = constant_mock("a", 30, 270);
    let runtime = tokio::runtime::Builder::new_current_thread()
        .build()
        .unwrap();
    let run = |policy: StoppingPolicy| {
        let compiled = CompiledPolicy::new(policy).unwrap();
        runtime
            .block_on(bench::run_benchmark(
                &dataset,
                &compiled,
                &solver,
                BenchOptions::default(),
                None,
            ))
            .unwrap()
    };
    let sprt = run(StoppingPolicy::sprt_calibrated());
    let sc = run(StoppingPolicy::self_consistency(40));
    let conv = TokenConvention::PromptPlusCompletion;
    let t_sc = bench::total_tokens(&sc, conv);
    let t_sprt = bench::total_tokens(&sprt, conv);
    let self_red = bench::token_reduction(t_sc, t_sc).map_err(|e| e.to_string())?;
    let red = bench::token_reduction(t_sprt, t_sc).map_err(|e| e.to_string())?;
    ensure(self_red == 0.0, format!("baseline vs itself {self_red}"))?;
    ensure((red - 92.5).abs() < 1e-9, format!("reduction {red}"))?;
    Ok(format!("baseline 0.0%, sprt {red:.1}%"))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seqvote"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!(
            "seqvote {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ),
    )
}

fn c10_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lines = vec![fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/aime2024_ii_8_dataset.jsonl"),
    )
    .map_err(|e| e.to_string())?
    .trim_end()
    .to_string()];
    for i in 0..12 {
        lines.push(format!(
            "{{\"id\":\"toy-{i}\",\"question\":\"q{i}\",\"answer\":\"{i}\"}}"
        ));
    }
    fs::write(dir.path().join("d.jsonl"), lines.join("\n") + "\n").map_err(|e| e.to_string())?;
    for sub in ["a", "b"] {
        run_cli(
            dir.path(),
            &[
                "run",
                "--solver",
                "mock",
                "--policy",
                "sprt",
                "--dataset",
                "d.jsonl",
                "--seed",
                "7",
                "--out",
                &format!("{sub}/results.jsonl"),
            ],
        )?;
        run_cli(
            dir.path(),
            &[
                "sweep",
                "--family",
                "adacons",
                "--grid",
                "0.8,0.95,0.99",
                "--synthetic-pools",
                "12",
                "--trials",
                "200",
                "--seed",
                "7",
                "--out",
                &format!("{sub}/sweep.csv"),
            ],
        )?;
    }
    for file in ["results.jsonl", "sweep.csv", "sweep.csv.meta.json"] {
        let a = fs::read(dir.path().join("a").join(file)).map_err(|e| e.to_string())?;
        let b = fs::read(dir.path().join("b").join(file)).map_err(|e| e.to_string())?;
        ensure(
            !a.is_empty() && a == b,
            format!("{file} differs between runs"),
        )?;
    }
    Ok("results.jsonl, sweep.csv and its metadata byte-identical".into())
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("SPRT thresholds worked example", c1_worked_example),
        (
            "calibrated SPRT boundary is lead >= 3",
            c2_calibrated_sprt_boundary,
        ),
        ("unanimous first-stop indices", c3_unanimous_first_stops),
        ("mSPRT closed form vs quadrature", c4_msprt_vs_quadrature),
        ("Hoeffding sample size", c5_hoeffding),
        ("torus fixture counts", c6_torus_fixture),
        (
            "simulator operating characteristics",
            c7_operating_characteristics,
        ),
        ("sweep curves on synthetic suite", c8_sweep_shape),
        ("token reduction identities", c9_token_reduction),
        ("CLI determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {:>2} {title}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {title}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
