//! `gen`, `run` and `report`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fcul_core::coordinator::events::write_events;
use fcul_core::sim::{
    build_scenario, gen_synthetic, read_metrics_csv, run_scenario, write_metrics_csv, FeatureSet, Lane,
    MetricsRecord, PartitionSpec, Scenario, SchedulePlan, Summary,
};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::{GenArgs, PlanArg, ReportArgs, RunArgs};

pub const FEATURES_FILE: &str = "features.bin";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EVENTS_FILE: &str = "events.jsonl";

const DEFAULT_SEED: u64 = 7;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    finish(w, path)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::io(path, e))
}

fn check_gen(args: &GenArgs) -> CliResult<()> {
    if args.clients == 0 {
        return Err(usage("--clients must be at least 1"));
    }
    if args.n < 2 || args.d == 0 || args.c == 0 {
        return Err(usage("--n must be at least 2 and --d, --c at least 1"));
    }
    if !(args.alpha > 0.0 && args.alpha.is_finite()) {
        return Err(usage(format!("--alpha must be positive, got {}", args.alpha)));
    }
    if args.groups == Some(0) {
        return Err(usage("--groups must be at least 1"));
    }
    if !(args.separation >= 0.0 && args.separation.is_finite()) {
        return Err(usage(format!("--separation must be non-negative, got {}", args.separation)));
    }
    match args.plan {
        PlanArg::Chunked if !(args.fraction > 0.0 && args.fraction <= 1.0) => {
            Err(usage(format!("--fraction must lie in (0, 1], got {}", args.fraction)))
        }
        PlanArg::Chunked | PlanArg::Targeted if args.steps == 0 => Err(usage("--steps must be at least 1")),
        PlanArg::Targeted if args.class >= args.c => Err(usage(format!("--class must be below --c = {}", args.c))),
        _ => Ok(()),
    }
}

pub fn gen(args: &GenArgs, file: Config) -> CliResult<()> {
    check_gen(args)?;
    let cfg = file.overlay(Config {
        gamma: args.gamma,
        precision: args.precision.map(Into::into),
        variant: args.variant.map(Into::into),
        seed: args.seed,
        out: args.out_dir.clone(),
        ..Config::default()
    });
    cfg.validate()?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let partition = match args.groups {
        Some(groups) => PartitionSpec::Groups { groups },
        None => PartitionSpec::Dirichlet { alpha: args.alpha },
    };
    let plan = match args.plan {
        PlanArg::None => SchedulePlan::None,
        PlanArg::Chunked => SchedulePlan::Chunked {
            fraction: args.fraction,
            steps: args.steps,
        },
        PlanArg::Targeted => SchedulePlan::Targeted {
            class: args.class,
            steps: args.steps,
        },
        PlanArg::Burst => SchedulePlan::Burst {
            count: args.count,
            addback: args.addback,
        },
    };

    let data = gen_synthetic(seed, args.n, args.d, args.c, args.separation);
    let mut scenario = build_scenario(
        seed,
        &data,
        args.clients,
        partition,
        &plan,
        cfg.variant.unwrap_or_default(),
        cfg.precision.unwrap_or_default(),
        cfg.gamma.unwrap_or(1.0),
    )?;
    scenario.features = Some(PathBuf::from(FEATURES_FILE));

    let dir = cfg.out.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let features_path = dir.join(FEATURES_FILE);
    let mut w = create(&features_path)?;
    data.set.write_to(&mut w).map_err(|e| CliError::io(&features_path, e))?;
    finish(w, &features_path)?;
    let scenario_path = dir.join(SCENARIO_FILE);
    write_json(&scenario_path, &scenario)?;

    println!(
        "gen: {} samples (d={}, c={}), {} clients, {} rounds -> {}, {}",
        args.n,
        args.d,
        args.c,
        args.clients,
        scenario.rounds(),
        features_path.display(),
        scenario_path.display()
    );
    Ok(())
}

/// Resolves the feature file: flag or config first, then the scenario's own
/// entry relative to the scenario file.
fn features_path(cfg: &Config, scenario: &Scenario, scenario_path: &Path) -> CliResult<PathBuf> {
    if let Some(p) = &cfg.features {
        return Ok(p.clone());
    }
    let named = scenario
        .features
        .as_ref()
        .ok_or_else(|| usage("scenario names no feature file; pass --features"))?;
    if named.is_absolute() {
        return Ok(named.clone());
    }
    Ok(scenario_path.parent().unwrap_or(Path::new(".")).join(named))
}

pub fn run(args: &RunArgs, file: Config) -> CliResult<()> {
    let cfg = file.overlay(Config {
        gamma: args.gamma,
        sigma2: args.sigma2,
        precision: args.precision.map(Into::into),
        variant: args.variant.map(Into::into),
        rank: args.rank,
        reset_every: args.reset_every,
        drift_threshold: args.drift_threshold,
        condition_threshold: args.condition_threshold,
        audit_every: args.audit_every,
        scenario: args.scenario.clone(),
        features: args.features.clone(),
        out: args.out.clone(),
        seed: None,
    });
    cfg.validate()?;
    let scenario_path = cfg.scenario.clone().ok_or_else(|| usage("--scenario is required"))?;
    let mut scenario: Scenario = read_json(&scenario_path)?;
    if let Some(v) = cfg.variant {
        scenario.variant = v;
    }
    if let Some(p) = cfg.precision {
        scenario.precision = p;
    }
    if let Some(g) = cfg.gamma {
        scenario.gamma = g;
    }
    let features = features_path(&cfg, &scenario, &scenario_path)?;
    let set = File::open(&features)
        .map_err(|e| CliError::io(&features, e))
        .and_then(|f| FeatureSet::read_from(BufReader::new(f)).map_err(|e| CliError::io(&features, e)))?;

    if set.d() != scenario.d || set.c() != scenario.c || set.n() < scenario.n {
        return Err(usage(format!(
            "{} holds n={}, d={}, c={} but the scenario needs n≥{}, d={}, c={}",
            features.display(),
            set.n(),
            set.d(),
            set.c(),
            scenario.n,
            scenario.d,
            scenario.c
        )));
    }
    let mut opts = cfg.run_options();
    opts.certificates = !args.no_certificates;
    let out = run_scenario(&scenario, &set, &opts)?;

    let dir = cfg
        .out
        .unwrap_or_else(|| scenario_path.parent().unwrap_or(Path::new(".")).join("run"));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let metrics = dir.join(METRICS_FILE);
    let mut w = create(&metrics)?;
    write_metrics_csv(&mut w, &out.records).map_err(|e| CliError::io(&metrics, e))?;
    finish(w, &metrics)?;
    let events = dir.join(EVENTS_FILE);
    let mut w = create(&events)?;
    write_events(&mut w, &out.events).map_err(|e| CliError::io(&events, e))?;
    finish(w, &events)?;
    write_json(&dir.join(SUMMARY_FILE), &out.summary)?;

    println!("run: {} rounds at {}; {}", out.summary.rounds, scenario.precision, headline(&out.summary));
    println!("run: wrote {}", dir.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3e}"))
}

fn headline(s: &Summary) -> String {
    let mut parts = Vec::new();
    if s.final_dev_a.is_some() {
        parts.push(format!("final_dev_A {}", fmt_opt(s.final_dev_a)));
    }
    if s.final_dev_b.is_some() {
        parts.push(format!("final_dev_B {}", fmt_opt(s.final_dev_b)));
    }
    if s.final_dev_approx.is_some() {
        parts.push(format!(
            "final_dev_approx {}, max bound {}, resets {}, assumption violations {}",
            fmt_opt(s.final_dev_approx),
            fmt_opt(s.max_bound),
            s.resets,
            s.assumption_violations
        ));
    }
    parts.push(format!("retained {}", s.final_retained));
    parts.join(", ")
}

struct LaneStats {
    rounds: usize,
    max_dev: f64,
    final_dev: f64,
    bytes: usize,
    resets: usize,
    max_kl: Option<f64>,
}

fn lane_stats(records: &[MetricsRecord], lane: Lane) -> Option<LaneStats> {
    let rows: Vec<&MetricsRecord> = records.iter().filter(|r| r.variant == lane.tag()).collect();
    let last = rows.last()?;
    Some(LaneStats {
        rounds: rows.len(),
        max_dev: rows.iter().map(|r| r.rel_dev_vs_oracle).fold(0.0, f64::max),
        final_dev: last.rel_dev_vs_oracle,
        bytes: rows.iter().map(|r| r.bytes_sent).sum(),
        resets: rows.iter().filter(|r| r.reset_flag == 1).count(),
        max_kl: rows.iter().filter_map(|r| r.kl).reduce(f64::max),
    })
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    let summary: Summary = read_json(&args.dir.join(SUMMARY_FILE))?;
    let metrics = args.dir.join(METRICS_FILE);
    let records = File::open(&metrics)
        .map_err(|e| CliError::io(&metrics, e))
        .and_then(|f| read_metrics_csv(BufReader::new(f)).map_err(|e| CliError::io(&metrics, e)))?;

    println!(
        "schema v{}, {} rounds, precision {}, {} retained at the end",
        summary.schema_version, summary.rounds, summary.precision, summary.final_retained
    );
    println!(
        "{:<8} {:>7} {:>11} {:>11} {:>11} {:>13} {:>7}",
        "lane", "rounds", "max dev", "final dev", "max KL", "bytes", "resets"
    );
    for lane in [Lane::A, Lane::B, Lane::Approx] {
        if let Some(s) = lane_stats(&records, lane) {
            println!(
                "{:<8} {:>7} {:>11.3e} {:>11.3e} {:>11} {:>13} {:>7}",
                lane.tag(),
                s.rounds,
                s.max_dev,
                s.final_dev,
                fmt_opt(s.max_kl),
                s.bytes,
                s.resets
            );
        }
    }
    if let (Some(a), Some(b)) = (summary.total_bytes_a, summary.total_bytes_b) {
        println!("bytes B/A: {:.4}", b as f64 / a as f64);
    }
    if summary.max_bound.is_some() || summary.assumption_violations > 0 {
        println!(
            "approximate rounds: max bound {}, assumption violations {}",
            fmt_opt(summary.max_bound),
            summary.assumption_violations
        );
    }
    println!(
        "final accuracy {}, PSD violations {}",
        summary.final_accuracy.map_or_else(|| "-".into(), |a| format!("{a:.4}")),
        summary.psd_violations
    );
    Ok(())
}
