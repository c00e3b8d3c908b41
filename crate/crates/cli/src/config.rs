use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Interp,
    Multijet,
    Perturb,
    Cycles,
    Rolle,
    Strata,
    Abel,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Interp => "interp",
            Subcommand::Multijet => "multijet",
            Subcommand::Perturb => "perturb",
            Subcommand::Cycles => "cycles",
            Subcommand::Rolle => "rolle",
            Subcommand::Strata => "strata",
            Subcommand::Abel => "abel",
        }
    }

    /// Tolerance names accepted in `tolerances`.
    pub fn tolerance_keys(self) -> &'static [&'static str] {
        match self {
            Subcommand::Interp | Subcommand::Multijet | Subcommand::Perturb => &[],
            Subcommand::Cycles => &["regular_tol"],
            Subcommand::Rolle => &["step_fraction", "max_angle"],
            Subcommand::Strata => &["window"],
            Subcommand::Abel => &["step"],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    #[serde(default)]
    pub parameters: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("{0}")]
    Domain(#[from] polylab_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }

    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Schema { path: path.into(), message: message.into() }
    }

    /// Machine-readable payload for stderr.
    pub fn payload(&self) -> Value {
        match self {
            CliError::Schema { path, message } => {
                serde_json::json!({"error": "schema", "path": path, "message": message})
            }
            CliError::Domain(e) => serde_json::json!({
                "error": "domain",
                "message": e.to_string(),
                "payload": serde_json::to_value(e).unwrap_or(Value::Null),
            }),
            CliError::Io(m) => serde_json::json!({"error": "io", "message": m}),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn with_prefix(prefix: &str, path: String) -> String {
    match (prefix.is_empty(), path.as_str()) {
        (true, _) => path,
        (false, ".") => prefix.to_string(),
        (false, _) => format!("{prefix}.{path}"),
    }
}

/// Deserializes `value`, reporting failures with the dotted path to the
/// offending field.
pub fn from_value<T: DeserializeOwned>(prefix: &str, value: Value) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = with_prefix(prefix, e.path().to_string());
        CliError::schema(path, e.into_inner().to_string())
    })
}

pub fn parse_config_str(text: &str) -> CliResult<ExperimentConfig> {
    if text.trim().is_empty() {
        return Err(CliError::schema(".", "empty config"));
    }
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::schema(".", e.to_string()))?;
    parse_config_value(value)
}

pub fn parse_config_value(value: Value) -> CliResult<ExperimentConfig> {
    let cfg: ExperimentConfig = from_value("", value)?;
    let allowed = cfg.subcommand.tolerance_keys();
    for (k, v) in &cfg.tolerances {
        if !allowed.contains(&k.as_str()) {
            return Err(CliError::schema(
                format!("tolerances.{k}"),
                format!("unknown tolerance for {}; expected one of {allowed:?}", cfg.subcommand.name()),
            ));
        }
        if !(v.is_finite() && *v > 0.0) {
            return Err(CliError::schema(format!("tolerances.{k}"), "must be positive and finite"));
        }
    }
    Ok(cfg)
}

impl ExperimentConfig {
    /// Subcommand parameters; a missing block reads as `{}`.
    pub fn params<T: DeserializeOwned>(&self) -> CliResult<T> {
        let v = match &self.parameters {
            Value::Null => Value::Object(Default::default()),
            v => v.clone(),
        };
        from_value("parameters", v)
    }

    pub fn tolerance(&self, key: &str) -> Option<f64> {
        self.tolerances.get(key).copied()
    }

    /// Independent seed for one consumer, drawn from its own ChaCha8 stream
    /// keyed by the config seed.
    pub fn stream_seed(&self, stream: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_unknown_fields_are_schema_errors() {
        assert!(matches!(parse_config_str(""), Err(CliError::Schema { .. })));
        assert!(matches!(parse_config_str("{}"), Err(CliError::Schema { .. })));
        let e = parse_config_str(r#"{"subcommand":"abel","colour":1}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn tolerance_paths() {
        let e = parse_config_str(r#"{"subcommand":"abel","tolerances":{"bogus":1.0}}"#).unwrap_err();
        match e {
            CliError::Schema { path, .. } => assert_eq!(path, "tolerances.bogus"),
            other => panic!("{other:?}"),
        }
        let c = parse_config_str(r#"{"subcommand":"abel","tolerances":{"step":0.002}}"#).unwrap();
        assert_eq!(c.tolerance("step"), Some(0.002));
    }

    #[test]
    fn parameter_paths_are_prefixed() {
        #[derive(Debug, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct P {
            #[allow(dead_code)]
            inner: Inner,
        }
        #[derive(Debug, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Inner {
            #[allow(dead_code)]
            n: usize,
        }
        let c = parse_config_str(r#"{"subcommand":"interp","parameters":{"inner":{"n":"x"}}}"#).unwrap();
        match c.params::<P>().unwrap_err() {
            CliError::Schema { path, .. } => assert_eq!(path, "parameters.inner.n"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stream_seeds_are_stable_and_distinct() {
        let c = parse_config_str(r#"{"subcommand":"strata","seed":7}"#).unwrap();
        assert_eq!(c.stream_seed(1), c.stream_seed(1));
        assert_ne!(c.stream_seed(1), c.stream_seed(2));
    }
}
