//! Experiment configuration files.
//!
//! A config is one JSON object `{"command": …, "seed": …, "params": {…}}`.
//! `params` is parsed strictly by the command it belongs to; relative file
//! paths inside it are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("invalid config: {0}")]
    Schema(String),
    #[error(transparent)]
    Library(#[from] dycalc::Error),
    #[error("cannot write {path}: {msg}")]
    Write { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Write { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    HaarRoundtrip,
    Decompose,
    VerifyRepresentation,
    T1Independence,
    SparseStopping,
    SparseForm,
    RmMaximal,
    RadNorm,
    RBound,
    RhatBound,
    MultiparamCheck,
    LiftCheck,
    BadProbability,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    #[serde(default)]
    pub params: Value,
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<Ctx> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Schema(e.to_string()))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Ctx { config, base })
}

impl Ctx {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Parses `params`; a missing block means every field takes its default.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        let v = match &self.config.params {
            Value::Null => Value::Object(Default::default()),
            v => v.clone(),
        };
        serde_json::from_value(v).map_err(|e| CliError::Schema(format!("params: {e}")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn read_json<T: DeserializeOwned>(&self, p: &Path) -> Result<T> {
        let path = self.resolve(p);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Read {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }
}

pub fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}
