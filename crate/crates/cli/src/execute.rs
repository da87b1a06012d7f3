//! Command execution: resolve configuration, run the requested experiment,
//! and write the report.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use stqkd::engine::{
    chsh_statistic, write_round_log_csv, EstimateMode, Mode, Partition, RngSpec, RoundRecord,
    Simulator,
};
use stqkd::lhv::{lhv_exhaustive_report, lhv_expectation, IcVariant, LhvPreparation};
use stqkd::observables::{
    correct_context_chsh, spatial_chsh, wrong_context_chsh, ALL_SUBENSEMBLES,
};
use stqkd::qkd::{run_protocol, write_transcript_jsonl, QkdConfig, DEFAULT_EPSILON, DEFAULT_TAU2};

use crate::config::{
    map_engine_error, map_qkd_error, pick, pick_opt, resolve_seed, AppError, EveArg, FileConfig,
    OutputFormat,
};
use crate::{Command, OutputArgs, QkdArgs, RunArgs};

const DEFAULT_SIM_ROUNDS: u64 = 100_000;
const DEFAULT_QKD_ROUNDS: u64 = 10_000;
const DEFAULT_EVE_FRACTION: f64 = 1.0;

pub fn run(command: Command) -> Result<(), AppError> {
    match command {
        Command::Spatial(args) => run_simulation(Mode::Spatial, "spatial", args),
        Command::Spacetime(args) => run_simulation(Mode::Spacetime, "spacetime", args),
        Command::Lhv(args) => run_lhv(args),
        Command::Qkd(args) => run_qkd(args),
    }
}

fn now_unix_ms() -> u128 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Envelope around every JSON report. `generated_unix_ms` is the one field
/// excluded from reproducibility comparisons.
fn envelope(command: &str, config: Value, results: Value) -> Value {
    json!({
        "command": command,
        "generated_unix_ms": now_unix_ms(),
        "config": config,
        "results": results,
    })
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), AppError> {
    match out {
        None => {
            println!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text.as_bytes())
            .map_err(|e| AppError::Io(format!("cannot write {}: {e}", path.display()))),
    }
}

fn write_json(out: Option<&Path>, value: &Value) -> Result<(), AppError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| AppError::Internal(e.to_string()))?;
    write_text(out, &text)
}

fn write_csv_rounds(out: Option<&Path>, rounds: &[RoundRecord]) -> Result<(), AppError> {
    match out {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_round_log_csv(&mut lock, rounds).map_err(map_engine_error)?;
            lock.flush()
                .map_err(|e| AppError::Io(format!("stdout: {e}")))
        }
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| AppError::Io(format!("cannot write {}: {e}", path.display())))?;
            write_round_log_csv(file, rounds).map_err(map_engine_error)
        }
    }
}

struct CommonResolved {
    rounds: u64,
    seed: u64,
    format: OutputFormat,
    out: Option<PathBuf>,
}

fn resolve_common(
    output: &OutputArgs,
    rounds: Option<u64>,
    seed: Option<u64>,
    default_rounds: u64,
) -> Result<(CommonResolved, FileConfig), AppError> {
    let file = FileConfig::load(output.config.as_deref())?;
    let resolved = CommonResolved {
        rounds: pick(rounds, file.rounds, default_rounds),
        seed: resolve_seed(seed, file.seed),
        format: pick(output.format, file.format, OutputFormat::Json),
        out: pick_opt(output.out.clone(), file.out.clone()),
    };
    Ok((resolved, file))
}

fn run_simulation(mode: Mode, name: &str, args: RunArgs) -> Result<(), AppError> {
    let (common, _file) = resolve_common(&args.output, args.rounds, args.seed, DEFAULT_SIM_ROUNDS)?;
    if common.rounds == 0 {
        return Err(AppError::Config("rounds must be positive".to_string()));
    }
    let sim = Simulator::new(mode, RngSpec::new(common.seed));
    let rounds = sim
        .simulate_rounds(common.rounds)
        .map_err(map_engine_error)?;

    if common.format == OutputFormat::Csv {
        return write_csv_rounds(common.out.as_deref(), &rounds);
    }

    let config_echo = json!({
        "rounds": common.rounds,
        "seed": common.seed,
        "format": common.format,
        "out": common.out,
    });
    let results = match mode {
        Mode::Spatial => {
            let estimate =
                chsh_statistic(&rounds, EstimateMode::Spatial).map_err(map_engine_error)?;
            json!({
                "analytic": spatial_chsh(sim.apparatus()),
                "estimate": estimate,
            })
        }
        Mode::Spacetime => {
            let correct = chsh_statistic(&rounds, EstimateMode::SpacetimeCorrect)
                .map_err(map_engine_error)?;
            let wrong = chsh_statistic(&rounds, EstimateMode::SpacetimeWrong)
                .map_err(map_engine_error)?;
            let partition = Partition::from_rounds(&rounds).map_err(map_engine_error)?;
            let counts: serde_json::Map<String, Value> = ALL_SUBENSEMBLES
                .iter()
                .map(|l| (l.to_string(), json!(partition.bucket(*l).len())))
                .collect();
            json!({
                "analytic": {
                    "correct": correct_context_chsh(sim.apparatus()),
                    "wrong": wrong_context_chsh(sim.apparatus()),
                },
                "estimates": { "correct": correct, "wrong": wrong },
                "subensemble_counts": counts,
            })
        }
    };
    write_json(
        common.out.as_deref(),
        &envelope(name, config_echo, results),
    )
}

fn run_lhv(args: OutputArgs) -> Result<(), AppError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let format = pick(args.format, file.format, OutputFormat::Json);
    if format == OutputFormat::Csv {
        return Err(AppError::Config(
            "csv output applies only to spatial/spacetime round logs".to_string(),
        ));
    }
    let out = pick_opt(args.out, file.out);
    let symmetric = LhvPreparation::symmetric(1, 1, 1, -1)
        .map_err(|e| AppError::Internal(e.to_string()))?;
    let results = json!({
        "exhaustive": lhv_exhaustive_report(),
        "symmetric_postselected_expectation":
            lhv_expectation(&symmetric, IcVariant::Postselected),
    });
    let config_echo = json!({ "format": format, "out": out });
    write_json(out.as_deref(), &envelope("lhv", config_echo, results))
}

fn run_qkd(args: QkdArgs) -> Result<(), AppError> {
    let (common, file) = resolve_common(&args.output, args.rounds, args.seed, DEFAULT_QKD_ROUNDS)?;
    if common.format == OutputFormat::Csv {
        return Err(AppError::Config(
            "csv output applies only to spatial/spacetime round logs".to_string(),
        ));
    }
    let eve_arg = pick(args.eve, file.eve, EveArg::None);
    let eve_fraction = pick(args.eve_fraction, file.eve_fraction, DEFAULT_EVE_FRACTION);
    let noise = pick(args.noise, file.noise, 0.0);
    let epsilon = pick(args.epsilon, file.epsilon, DEFAULT_EPSILON);
    let tau1 = pick_opt(args.tau1, file.tau1);
    let tau2 = pick(args.tau2, file.tau2, DEFAULT_TAU2);
    let transcript_path = pick_opt(args.transcript, file.transcript);

    let eve = eve_arg.to_model(eve_fraction)?;
    let cfg = QkdConfig {
        n_rounds: common.rounds,
        sacrifice_fraction: epsilon,
        step1_threshold: tau1,
        step2_max_error_rate: tau2,
        noise_p: noise,
        rng: RngSpec::new(common.seed),
    };
    let report = run_protocol(&cfg, &eve).map_err(map_qkd_error)?;

    if let Some(path) = &transcript_path {
        let file = std::fs::File::create(path)
            .map_err(|e| AppError::Io(format!("cannot write {}: {e}", path.display())))?;
        write_transcript_jsonl(file, &report.transcript)
            .map_err(|e| AppError::Io(format!("transcript {}: {e}", path.display())))?;
    }

    let config_echo = json!({
        "rounds": common.rounds,
        "seed": common.seed,
        "eve": eve_arg,
        "eve-fraction": eve_fraction,
        "noise": noise,
        "epsilon": epsilon,
        "tau1": tau1,
        "tau2": tau2,
        "format": common.format,
        "out": common.out,
        "transcript": transcript_path,
    });
    let results = serde_json::to_value(&report).map_err(|e| AppError::Internal(e.to_string()))?;
    write_json(
        common.out.as_deref(),
        &envelope("qkd", config_echo, results),
    )
}
