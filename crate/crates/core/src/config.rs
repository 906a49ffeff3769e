//! Run configuration, canonical hashing and RNG stream derivation.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rate_model::{ModelSpec, RateError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unknown model family `{0}`")]
    UnknownModelFamily(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<RateError> for ConfigError {
    fn from(e: RateError) -> Self {
        match e {
            RateError::UnknownFamily(name) => ConfigError::UnknownModelFamily(name),
            RateError::Invalid(message) => {
                let head = message.split([':', ' ']).next().unwrap_or_default();
                let path = if head.starts_with("model") { head.to_string() } else { format!("model.{head}") };
                ConfigError::Schema { path, message }
            }
            other => ConfigError::Schema { path: "model".into(), message: other.to_string() },
        }
    }
}

/// Replica stream `index` of master seed `seed`: ChaCha8 keyed by the seed,
/// with the replica index as its 64-bit stream id.
pub fn derive_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                Value::Object(keys.into_iter().map(|k| (k.clone(), sort(&m[k]))).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sort(value)).expect("JSON values serialise")
}

/// Hex SHA-256 of the canonical JSON.
pub fn config_hash(value: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Discrete,
    Ctbp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckpointSpec {
    List(Vec<u64>),
    Geometric { base: u64, ratio: f64 },
}

impl CheckpointSpec {
    /// Checkpoint values up to `last`, always ending with `last`.
    pub fn resolve(&self, last: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            CheckpointSpec::List(v) => v.iter().copied().filter(|&n| n >= 1 && n <= last).collect(),
            CheckpointSpec::Geometric { base, ratio } => {
                let mut v = Vec::new();
                let mut x = (*base).max(1) as f64;
                while x <= last as f64 {
                    v.push(x.round() as u64);
                    x *= ratio;
                }
                v
            }
        };
        out.push(last);
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn default_steps() -> u64 {
    10_000
}
fn default_replicas() -> u64 {
    100
}
fn default_hubs() -> usize {
    3
}
fn default_checkpoints() -> CheckpointSpec {
    CheckpointSpec::Geometric { base: 10, ratio: 10.0 }
}
fn default_engine() -> Engine {
    Engine::Discrete
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElderParams {
    #[serde(default = "ElderParams::steps")]
    pub steps: u64,
    #[serde(default = "ElderParams::surviving")]
    pub surviving: u64,
}
impl ElderParams {
    fn steps() -> u64 {
        100_000
    }
    fn surviving() -> u64 {
        2000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersistenceParams {
    #[serde(default = "PersistenceParams::steps")]
    pub steps: u64,
    #[serde(default = "default_hubs")]
    pub hubs: usize,
    #[serde(default = "PersistenceParams::surviving")]
    pub surviving: u64,
    #[serde(default)]
    pub n0_grid: Option<Vec<u64>>,
}
impl PersistenceParams {
    fn steps() -> u64 {
        100_000
    }
    fn surviving() -> u64 {
        500
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TightnessParams {
    #[serde(default = "TightnessParams::n_grid")]
    pub n_grid: Vec<u64>,
    #[serde(default = "TightnessParams::surviving")]
    pub surviving: u64,
}
impl TightnessParams {
    fn n_grid() -> Vec<u64> {
        vec![1000, 10_000, 100_000]
    }
    fn surviving() -> u64 {
        500
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingParams {
    #[serde(default = "EmbeddingParams::n_max")]
    pub n_max: usize,
    #[serde(default = "EmbeddingParams::replicas")]
    pub replicas: u64,
}
impl EmbeddingParams {
    fn n_max() -> usize {
        4
    }
    fn replicas() -> u64 {
        1_000_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeParams {
    #[serde(default = "LifetimeParams::t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "LifetimeParams::samples")]
    pub samples: u64,
}
impl LifetimeParams {
    fn t_grid() -> Vec<f64> {
        (1..=8).map(f64::from).collect()
    }
    fn samples() -> u64 {
        10_000_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthParams {
    #[serde(default = "GrowthParams::horizon")]
    pub horizon: f64,
    #[serde(default = "GrowthParams::surviving")]
    pub surviving: u64,
    #[serde(default = "GrowthParams::grid_points")]
    pub grid_points: usize,
}
impl GrowthParams {
    fn horizon() -> f64 {
        10.0
    }
    fn surviving() -> u64 {
        200
    }
    fn grid_points() -> usize {
        201
    }
}

macro_rules! default_block {
    ($($t:ident),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                serde_json::from_value(json!({})).expect("all fields have defaults")
            }
        }
    )*};
}
default_block!(ElderParams, PersistenceParams, TightnessParams, EmbeddingParams, LifetimeParams, GrowthParams);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlocks {
    #[serde(default)]
    pub elder: ElderParams,
    #[serde(default)]
    pub persistence: PersistenceParams,
    #[serde(default)]
    pub tightness: TightnessParams,
    #[serde(default)]
    pub embedding: EmbeddingParams,
    #[serde(default)]
    pub lifetime: LifetimeParams,
    #[serde(default)]
    pub growth: GrowthParams,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Value,
    #[serde(default = "default_engine")]
    engine: Engine,
    #[serde(default = "default_steps")]
    steps: u64,
    #[serde(default)]
    until_time: Option<f64>,
    #[serde(default = "default_replicas")]
    replicas: u64,
    #[serde(default = "default_checkpoints")]
    checkpoints: CheckpointSpec,
    #[serde(default = "default_hubs")]
    hubs: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    out: Option<String>,
    #[serde(default)]
    csv: Option<String>,
    #[serde(default)]
    experiment: ExperimentBlocks,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub engine: Engine,
    pub steps: u64,
    pub until_time: Option<f64>,
    pub replicas: u64,
    pub checkpoints: CheckpointSpec,
    pub hubs: usize,
    pub seed: u64,
    pub out: Option<String>,
    pub csv: Option<String>,
    pub experiment: ExperimentBlocks,
}

impl RunConfig {
    /// Parse a config object. A bare model spec (an object with `family` or
    /// rate tables at the top level) is accepted as `{"model": …}`.
    pub fn from_value(value: &Value) -> Result<RunConfig, ConfigError> {
        let is_bare_model = value
            .as_object()
            .is_some_and(|m| ["family", "b_table", "b_tail", "d_table", "d_tail"].iter().any(|k| m.contains_key(*k)));
        let wrapped;
        let value = if is_bare_model {
            wrapped = json!({ "model": value });
            &wrapped
        } else {
            value
        };
        let raw: RawConfig = serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let model = ModelSpec::from_json(&raw.model, "model")?;
        let positive = |path: &str, ok: bool| -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Schema { path: path.into(), message: "must be positive".into() })
            }
        };
        positive("steps", raw.steps >= 1)?;
        positive("replicas", raw.replicas >= 1)?;
        positive("hubs", raw.hubs >= 1)?;
        positive("until_time", raw.until_time.is_none_or(|t| t > 0.0 && t.is_finite()))?;
        if let CheckpointSpec::Geometric { ratio, .. } = raw.checkpoints {
            positive("checkpoints.geometric.ratio", ratio > 1.0)?;
        }
        Ok(RunConfig {
            model,
            engine: raw.engine,
            steps: raw.steps,
            until_time: raw.until_time,
            replicas: raw.replicas,
            checkpoints: raw.checkpoints,
            hubs: raw.hubs,
            seed: raw.seed,
            out: raw.out,
            csv: raw.csv,
            experiment: raw.experiment,
        })
    }

    pub fn from_json_str(text: &str) -> Result<RunConfig, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Schema {
            path: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        RunConfig::from_value(&value)
    }

    /// Canonical resolved form; output paths are not part of it.
    pub fn canonical(&self) -> Value {
        json!({
            "model": self.model.to_json(),
            "engine": self.engine,
            "steps": self.steps,
            "until_time": self.until_time,
            "replicas": self.replicas,
            "checkpoints": self.checkpoints,
            "hubs": self.hubs,
            "seed": self.seed,
            "experiment": self.experiment,
        })
    }

    pub fn hash(&self) -> String {
        config_hash(&self.canonical())
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    RunConfig::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_model::{Family, RateModel};
    use rand::Rng;

    #[test]
    fn family_shorthand_resolves() {
        let cfg = RunConfig::from_json_str(r#"{"family":"pa_unit_death"}"#).unwrap();
        let model = RateModel::from_spec(cfg.model.clone()).unwrap();
        assert_eq!(model.eval_rates(0), (1.0, 1.0));
        assert_eq!(model.eval_rates(7), (8.0, 1.0));
        assert_eq!(model.d_star().unwrap(), 1.0);
        assert_eq!(cfg.steps, 10_000);
        assert_eq!(cfg.experiment.elder.surviving, 2000);
    }

    #[test]
    fn rao_table_preset() {
        let cfg = RunConfig::from_json_str(
            r#"{"model":{"b_table":[1,2,3],"b_tail":{"kind":"affine","slope":1,"intercept":1},
                "d_table":[1,2],"d_tail":{"kind":"constant","value":1.5},"d_star":1.5}}"#,
        )
        .unwrap();
        let table = RateModel::from_spec(cfg.model).unwrap();
        let rao = RateModel::builtin(Family::Rao);
        for i in 0..50 {
            assert_eq!(table.eval_rates(i), rao.eval_rates(i));
        }
    }

    #[test]
    fn schema_errors_carry_paths() {
        let err = RunConfig::from_json_str(
            r#"{"model":{"d_table":[-0.1],"d_tail":{"kind":"constant","value":1},"b_tail":{"kind":"constant","value":1}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Schema { .. }), "{err}");
        assert!(err.to_string().contains("d_table[0]"), "{err}");

        let err = RunConfig::from_json_str(r#"{"model":{"family":"pa_pure"},"stpes":10}"#).unwrap_err();
        assert!(err.to_string().contains("stpes"), "{err}");
        let err = RunConfig::from_json_str(r#"{"model":{"family":"pa_pure"},"experiment":{"elder":{"steps":"x"}}}"#)
            .unwrap_err();
        match err {
            ConfigError::Schema { path, .. } => assert_eq!(path, "experiment.elder.steps"),
            other => panic!("{other}"),
        }
        assert!(matches!(
            RunConfig::from_json_str(r#"{"family":"nope"}"#).unwrap_err(),
            ConfigError::UnknownModelFamily(_)
        ));
    }

    #[test]
    fn hash_tracks_resolved_parameters() {
        let a = RunConfig::from_json_str(r#"{"model":{"family":"pa_pure"}}"#).unwrap();
        let b = RunConfig::from_json_str(r#"{"model":{"family":"pa_pure"},"steps":10000,"out":"x.csv"}"#).unwrap();
        let c = RunConfig::from_json_str(r#"{"model":{"family":"pa_pure"},"steps":10001}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(canonical_json(&json!({"b":1,"a":{"d":2,"c":3}})), r#"{"a":{"c":3,"d":2},"b":1}"#);
    }

    #[test]
    fn checkpoint_grids() {
        assert_eq!(CheckpointSpec::Geometric { base: 10, ratio: 10.0 }.resolve(5000), vec![10, 100, 1000, 5000]);
        assert_eq!(CheckpointSpec::List(vec![5, 0, 3, 99]).resolve(50), vec![3, 5, 50]);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draws = |seed, idx| -> Vec<u64> {
            let mut r = derive_stream(seed, idx);
            (0..10_000).map(|_| r.random()).collect()
        };
        assert_eq!(draws(42, 7), draws(42, 7));
        assert_ne!(draws(42, 0)[0], draws(42, 1)[0]);
        assert_ne!(draws(43, 0)[0], draws(42, 0)[0]);
        // lag-1 serial correlation of uniforms is O(1/sqrt(n))
        let mut r = derive_stream(42, 0);
        let u: Vec<f64> = (0..10_000).map(|_| r.random()).collect();
        let m = u.iter().sum::<f64>() / u.len() as f64;
        let num: f64 = u.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let den: f64 = u.iter().map(|x| (x - m) * (x - m)).sum();
        assert!((num / den).abs() < 0.04);
    }
}
