//! Config-file handling and flag/file/default resolution.
//!
//! The config file is JSON whose keys equal the long flag names. Explicit
//! flags win over file values, file values win over built-in defaults, and
//! the fully resolved configuration is echoed into every report.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use stqkd::qkd::{EveKind, EveModel};

/// Errors surfaced to the user, each with its own exit code family:
/// configuration problems (2), statistically insufficient input (3), and
/// filesystem trouble (4). Anything else is an internal fault (1).
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Insufficient(String),
    Io(String),
    Internal(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Internal(_) => 1,
            AppError::Config(_) => 2,
            AppError::Insufficient(_) => 3,
            AppError::Io(_) => 4,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "invalid configuration: {m}"),
            AppError::Insufficient(m) => write!(f, "insufficient data: {m}"),
            AppError::Io(m) => write!(f, "i/o failure: {m}"),
            AppError::Internal(m) => write!(f, "internal fault: {m}"),
        }
    }
}

pub fn map_qkd_error(e: stqkd::qkd::QkdError) -> AppError {
    use stqkd::engine::EngineError;
    use stqkd::qkd::QkdError;
    match e {
        QkdError::InvalidConfig(m) => AppError::Config(m),
        QkdError::InsufficientRounds(m) => AppError::Insufficient(m),
        QkdError::Engine(EngineError::EmptySubensemble(l)) => {
            AppError::Insufficient(format!("subensemble {l} is empty"))
        }
        other => AppError::Internal(other.to_string()),
    }
}

pub fn map_engine_error(e: stqkd::engine::EngineError) -> AppError {
    use stqkd::engine::EngineError;
    match e {
        EngineError::EmptySubensemble(l) => {
            AppError::Insufficient(format!("subensemble {l} is empty"))
        }
        EngineError::Csv(e) => AppError::Io(e.to_string()),
        other => AppError::Internal(other.to_string()),
    }
}

/// Report/round-log output format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Eavesdropper selector with the flag-level names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveArg {
    None,
    InterceptZ,
    InterceptRandom,
    Break,
}

impl EveArg {
    pub fn to_model(self, fraction: f64) -> Result<EveModel, AppError> {
        let kind = match self {
            EveArg::None => EveKind::None,
            EveArg::InterceptZ => EveKind::InterceptResendZ,
            EveArg::InterceptRandom => EveKind::InterceptResendRandom,
            EveArg::Break => EveKind::BreakEntanglement,
        };
        EveModel::new(kind, if kind == EveKind::None { 0.0 } else { fraction }).map_err(|_| {
            AppError::Config(format!("eve fraction must lie in [0, 1], got {fraction}"))
        })
    }
}

/// Raw config file contents; keys match the long flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub rounds: Option<u64>,
    pub seed: Option<u64>,
    pub eve: Option<EveArg>,
    pub eve_fraction: Option<f64>,
    pub noise: Option<f64>,
    pub epsilon: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub transcript: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, AppError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("config {}: {e}", path.display())))
    }
}

/// Flag value if given, else file value, else the built-in default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] but with no default; stays optional.
pub fn pick_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// Seed from flags/file, else derived from the wall clock and echoed in the
/// report so the run stays replayable.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> u64 {
    pick_opt(flag, file).unwrap_or_else(|| {
        use std::time::{SystemTime, UNIX_EPOCH};
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        // fold in the pid so two processes started in the same tick differ
        nanos ^ (u64::from(std::process::id()) << 32)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_flag_file_default() {
        assert_eq!(pick(Some(1u64), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2u64), 3), 2);
        assert_eq!(pick::<u64>(None, None, 3), 3);
    }

    #[test]
    fn file_config_parses_kebab_keys() {
        let text = r#"{"rounds": 64, "eve": "intercept-z", "eve-fraction": 0.5, "tau2": 0.1}"#;
        let cfg: FileConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.rounds, Some(64));
        assert_eq!(cfg.eve, Some(EveArg::InterceptZ));
        assert_eq!(cfg.eve_fraction, Some(0.5));
        assert_eq!(cfg.tau2, Some(0.1));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<FileConfig>(r#"{"round": 64}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn eve_arg_none_zeroes_the_fraction() {
        let model = EveArg::None.to_model(0.7).unwrap();
        assert_eq!(model.kind, EveKind::None);
        assert_eq!(model.attack_fraction, 0.0);
        let attack = EveArg::Break.to_model(0.7).unwrap();
        assert_eq!(attack.kind, EveKind::BreakEntanglement);
        assert_eq!(attack.attack_fraction, 0.7);
    }

    #[test]
    fn out_of_range_fraction_is_a_config_error() {
        let err = EveArg::Break.to_model(1.5).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
