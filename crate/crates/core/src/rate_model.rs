//! Birth and death rate sequences and the prefix sums derived from them.
//!
//! A [`RateModel`] pairs a birth sequence `b` with a death sequence `d`. Each
//! sequence is a finite head table followed by a closed-form tail, which is
//! enough to express every builtin preset and keeps the infimum of `b + d` and
//! the limit of `d` exact.
//!
//! The prefix sums `phi1`, `phi2`, `rho1`, `rho2` and `alpha` are memoised in
//! a shared cache. Extension is extend-then-publish: a writer builds a longer
//! table from the published one and swaps the `Arc`, so readers never observe
//! a partially written table. Values past the cache limit are streamed with
//! the same summation order, so every index returns the same bits whether or
//! not it was cached.

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Entries kept in the prefix cache. Larger indices are streamed.
const CACHE_LIMIT: usize = 1 << 21;

/// Hard bound on streamed prefix evaluation (explosive models never reach `y`).
const STREAM_LIMIT: u64 = 1 << 28;

/// Agreement tolerance for the numerical `d*` estimate.
const D_STAR_AGREEMENT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("no limit d* is available for this death sequence")]
    MissingDStar,
    #[error("phi1 is bounded below {limit_hint}; cannot invert at {y}")]
    OutOfRange { y: f64, limit_hint: f64 },
    #[error("r(t) iteration left [0, t] at iterate {iteration} (value {value})")]
    NonFinite { iteration: usize, value: f64 },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
}

/// Closed-form continuation of a rate table, indexed by the absolute index `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tail {
    /// `value` for every `i`.
    Constant { value: f64 },
    /// `slope * i + intercept`.
    Affine { slope: f64, intercept: f64 },
    /// `scale * ratio^i`.
    Geometric { scale: f64, ratio: f64 },
}

impl Tail {
    fn at(&self, i: u64) -> f64 {
        match *self {
            Tail::Constant { value } => value,
            Tail::Affine { slope, intercept } => slope * i as f64 + intercept,
            Tail::Geometric { scale, ratio } => scale * ratio.powf(i as f64),
        }
    }

    /// Limit as `i -> inf`; `None` when the tail diverges.
    fn limit(&self) -> Option<f64> {
        match *self {
            Tail::Constant { value } => Some(value),
            Tail::Affine { slope: 0.0, intercept } => Some(intercept),
            Tail::Affine { .. } => None,
            Tail::Geometric { scale: 0.0, .. } => Some(0.0),
            Tail::Geometric { ratio, .. } if ratio < 1.0 => Some(0.0),
            Tail::Geometric { scale, ratio: 1.0 } => Some(scale),
            Tail::Geometric { .. } => None,
        }
    }

    fn nondecreasing(&self) -> bool {
        match *self {
            Tail::Constant { .. } => true,
            Tail::Affine { slope, .. } => slope >= 0.0,
            Tail::Geometric { scale, ratio } => scale == 0.0 || ratio >= 1.0,
        }
    }

    fn nonincreasing(&self) -> bool {
        match *self {
            Tail::Constant { .. } => true,
            Tail::Affine { slope, .. } => slope <= 0.0,
            Tail::Geometric { scale, ratio } => scale == 0.0 || ratio <= 1.0,
        }
    }

    /// `inf_{i >= from} tail(i)`, given that the tail is monotone.
    fn infimum_from(&self, from: u64) -> f64 {
        if self.nondecreasing() {
            self.at(from)
        } else {
            self.limit().unwrap_or(f64::NEG_INFINITY)
        }
    }
}

/// A rate sequence: explicit head entries, then a closed-form tail.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeq {
    pub head: Vec<f64>,
    pub tail: Tail,
}

impl RateSeq {
    pub fn new(head: Vec<f64>, tail: Tail) -> Self {
        Self { head, tail }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(Vec::new(), Tail::Constant { value })
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        Self::new(Vec::new(), Tail::Affine { slope, intercept })
    }

    #[inline]
    pub fn at(&self, i: u64) -> f64 {
        self.head.get(i as usize).copied().unwrap_or_else(|| self.tail.at(i))
    }

    pub fn limit(&self) -> Option<f64> {
        self.tail.limit()
    }

    fn validate(&self, name: &str, strictly_positive: bool) -> Result<(), RateError> {
        let ok = |v: f64| v.is_finite() && if strictly_positive { v > 0.0 } else { v >= 0.0 };
        let bound = if strictly_positive { "> 0" } else { ">= 0" };
        for (i, &v) in self.head.iter().enumerate() {
            if !ok(v) {
                return Err(RateError::Invalid(format!("{name}_table[{i}] = {v} must be {bound}")));
            }
        }
        let start = self.head.len() as u64;
        let tail_ok = match self.tail {
            Tail::Constant { value } => ok(value),
            Tail::Affine { slope, intercept } => {
                slope.is_finite() && intercept.is_finite() && slope >= 0.0 && ok(self.tail.at(start))
            }
            Tail::Geometric { scale, ratio } => {
                scale.is_finite()
                    && ratio.is_finite()
                    && ratio > 0.0
                    && ok(scale)
                    // a decaying birth rate underflows to zero
                    && (!strictly_positive || ratio >= 1.0)
            }
        };
        if tail_ok {
            Ok(())
        } else {
            Err(RateError::Invalid(format!("{name}_tail {:?} must stay {bound}", self.tail)))
        }
    }
}

/// The builtin presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PaPure,
    UaPure,
    PaUnitDeath,
    UaUnitDeath,
    Rao,
    Rdy1,
    Rdy2,
    UaGeomDeath,
    PaGeomDeath,
    /// `b(i) = b_slope * i + b_intercept`, `d(i) = d`.
    Affine,
    /// `b(i) = b`, `d(i) = d`.
    Constant,
}

impl Family {
    pub const BUILTIN: [Family; 9] = [
        Family::PaPure,
        Family::UaPure,
        Family::PaUnitDeath,
        Family::UaUnitDeath,
        Family::Rao,
        Family::Rdy1,
        Family::Rdy2,
        Family::UaGeomDeath,
        Family::PaGeomDeath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::PaPure => "pa_pure",
            Family::UaPure => "ua_pure",
            Family::PaUnitDeath => "pa_unit_death",
            Family::UaUnitDeath => "ua_unit_death",
            Family::Rao => "rao",
            Family::Rdy1 => "rdy1",
            Family::Rdy2 => "rdy2",
            Family::UaGeomDeath => "ua_geom_death",
            Family::PaGeomDeath => "pa_geom_death",
            Family::Affine => "affine",
            Family::Constant => "constant",
        }
    }

    pub fn from_name(name: &str) -> Result<Family, RateError> {
        Family::BUILTIN
            .iter()
            .chain([Family::Affine, Family::Constant].iter())
            .copied()
            .find(|f| f.name() == name)
            .ok_or_else(|| RateError::UnknownFamily(name.to_string()))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a model was specified. Kept verbatim for canonical serialisation.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Family { family: Family, params: Map<String, Value> },
    Table {
        b: RateSeq,
        d: RateSeq,
        d_star: Option<f64>,
    },
}

impl ModelSpec {
    /// Canonical JSON form (sorted keys, every parameter explicit).
    pub fn to_json(&self) -> Value {
        match self {
            ModelSpec::Family { family, params } => {
                json!({ "family": family.name(), "params": Value::Object(params.clone()) })
            }
            ModelSpec::Table { b, d, d_star } => json!({
                "b_table": b.head,
                "d_table": d.head,
                "b_tail": b.tail,
                "d_tail": d.tail,
                "d_star": d_star,
            }),
        }
    }

    /// Parse `{"family", "params"}` or the table form. `path` prefixes error messages.
    pub fn from_json(value: &Value, path: &str) -> Result<ModelSpec, RateError> {
        let obj = value
            .as_object()
            .ok_or_else(|| RateError::Invalid(format!("{path}: expected an object")))?;
        if let Some(family) = obj.get("family") {
            for key in obj.keys() {
                if key != "family" && key != "params" {
                    return Err(RateError::Invalid(format!("{path}.{key}: unknown field")));
                }
            }
            let name = family
                .as_str()
                .ok_or_else(|| RateError::Invalid(format!("{path}.family: expected a string")))?;
            let family = Family::from_name(name)?;
            let params = match obj.get("params") {
                None | Some(Value::Null) => Map::new(),
                Some(Value::Object(m)) => m.clone(),
                Some(_) => {
                    return Err(RateError::Invalid(format!("{path}.params: expected an object")))
                }
            };
            let spec = ModelSpec::Family { family, params };
            // resolve now so parameter errors surface at parse time
            spec.resolve_sequences(path)?;
            return Ok(spec.with_default_params());
        }

        const KNOWN: [&str; 5] = ["b_table", "d_table", "b_tail", "d_tail", "d_star"];
        for key in obj.keys() {
            if !KNOWN.contains(&key.as_str()) {
                return Err(RateError::Invalid(format!("{path}.{key}: unknown field")));
            }
        }
        let table = |key: &str| -> Result<Vec<f64>, RateError> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(Vec::new()),
                Some(Value::Array(items)) => items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v.as_f64().ok_or_else(|| {
                            RateError::Invalid(format!("{path}.{key}[{i}]: expected a number"))
                        })
                    })
                    .collect(),
                Some(_) => Err(RateError::Invalid(format!("{path}.{key}: expected an array"))),
            }
        };
        let tail = |key: &str| -> Result<Tail, RateError> {
            let v = obj
                .get(key)
                .ok_or_else(|| RateError::Invalid(format!("{path}.{key}: missing tail rule")))?;
            serde_json::from_value(v.clone())
                .map_err(|e| RateError::Invalid(format!("{path}.{key}: {e}")))
        };
        let b = RateSeq::new(table("b_table")?, tail("b_tail")?);
        let d = RateSeq::new(table("d_table")?, tail("d_tail")?);
        b.validate(&format!("{path}.b"), true)?;
        d.validate(&format!("{path}.d"), false)?;
        let d_star = match obj.get("d_star") {
            None | Some(Value::Null) => None,
            Some(v) => {
                let x = v.as_f64().filter(|x| x.is_finite() && *x >= 0.0).ok_or_else(|| {
                    RateError::Invalid(format!("{path}.d_star: expected a nonnegative number"))
                })?;
                Some(x)
            }
        };
        Ok(ModelSpec::Table { b, d, d_star })
    }

    fn with_default_params(self) -> ModelSpec {
        match self {
            ModelSpec::Family { family, mut params } => {
                let defaults: &[(&str, f64)] = match family {
                    Family::Affine => &[("b_slope", 1.0), ("b_intercept", 1.0), ("d", 0.0)],
                    Family::Constant => &[("b", 1.0), ("d", 0.0)],
                    _ => &[],
                };
                for (k, v) in defaults {
                    params.entry(k.to_string()).or_insert(json!(v));
                }
                ModelSpec::Family { family, params }
            }
            other => other,
        }
    }

    fn resolve_sequences(&self, path: &str) -> Result<(RateSeq, RateSeq, Option<f64>), RateError> {
        match self {
            ModelSpec::Table { b, d, d_star } => Ok((b.clone(), d.clone(), *d_star)),
            ModelSpec::Family { family, params } => {
                let allowed: &[&str] = match family {
                    Family::Affine => &["b_slope", "b_intercept", "d"],
                    Family::Constant => &["b", "d"],
                    _ => &[],
                };
                for key in params.keys() {
                    if !allowed.contains(&key.as_str()) {
                        return Err(RateError::Invalid(format!(
                            "{path}.params.{key}: not a parameter of `{family}`"
                        )));
                    }
                }
                let param = |key: &str, default: f64| -> Result<f64, RateError> {
                    match params.get(key) {
                        None => Ok(default),
                        Some(v) => v.as_f64().ok_or_else(|| {
                            RateError::Invalid(format!("{path}.params.{key}: expected a number"))
                        }),
                    }
                };
                let half_geometric = Tail::Geometric { scale: 0.5, ratio: 0.5 };
                let (b, d) = match family {
                    Family::PaPure => (RateSeq::affine(1.0, 1.0), RateSeq::constant(0.0)),
                    Family::UaPure => (RateSeq::constant(1.0), RateSeq::constant(0.0)),
                    Family::PaUnitDeath => (RateSeq::affine(1.0, 1.0), RateSeq::constant(1.0)),
                    Family::UaUnitDeath => (RateSeq::constant(1.0), RateSeq::constant(1.0)),
                    Family::Rao => (
                        RateSeq::affine(1.0, 1.0),
                        RateSeq::new(vec![1.0, 2.0], Tail::Constant { value: 1.5 }),
                    ),
                    Family::Rdy1 => (
                        RateSeq::affine(1.0, 1.0),
                        RateSeq::new(vec![0.25, 2.0], Tail::Constant { value: 1.5 }),
                    ),
                    Family::Rdy2 => (
                        RateSeq::new(vec![0.25], Tail::Affine { slope: 1.0, intercept: 1.0 }),
                        RateSeq::new(vec![1.0, 2.0], Tail::Constant { value: 1.5 }),
                    ),
                    Family::UaGeomDeath => {
                        (RateSeq::constant(1.0), RateSeq::new(Vec::new(), half_geometric))
                    }
                    Family::PaGeomDeath => {
                        (RateSeq::affine(1.0, 1.0), RateSeq::new(Vec::new(), half_geometric))
                    }
                    Family::Affine => (
                        RateSeq::affine(param("b_slope", 1.0)?, param("b_intercept", 1.0)?),
                        RateSeq::constant(param("d", 0.0)?),
                    ),
                    Family::Constant => {
                        (RateSeq::constant(param("b", 1.0)?), RateSeq::constant(param("d", 0.0)?))
                    }
                };
                b.validate(&format!("{path}.b"), true)?;
                d.validate(&format!("{path}.d"), false)?;
                Ok((b, d, None))
            }
        }
    }
}

/// Which prefix sum to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqKind {
    Phi1,
    Phi2,
    Rho1,
    Rho2,
    Alpha,
}

/// Result of [`RateModel::r_inf`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RInf {
    pub value: f64,
    /// False when the tail rule cannot bound the infimum; `value` is then the
    /// scanned minimum and `tail_lower_bound` the best available bound.
    pub exact: bool,
    pub tail_lower_bound: f64,
}

/// Where a `d*` value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DStarSource {
    Declared,
    ClosedForm,
    Estimated,
}

#[derive(Debug, Default)]
struct Prefix {
    // index k holds the sum over i < k; index 0 is 0
    phi1: Vec<f64>,
    phi2: Vec<f64>,
    rho1: Vec<f64>,
    rho2: Vec<f64>,
    alpha: Vec<f64>,
}

impl Prefix {
    fn len(&self) -> usize {
        self.phi1.len()
    }
}

/// Rate sequences `b`, `d` with cached prefix sums.
#[derive(Debug)]
pub struct RateModel {
    spec: ModelSpec,
    b: RateSeq,
    d: RateSeq,
    d_star: Option<(f64, DStarSource)>,
    cache: RwLock<Arc<Prefix>>,
}

impl Clone for RateModel {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            b: self.b.clone(),
            d: self.d.clone(),
            d_star: self.d_star,
            cache: RwLock::new(self.snapshot()),
        }
    }
}

impl RateModel {
    pub fn from_spec(spec: ModelSpec) -> Result<Self, RateError> {
        let (b, d, declared) = spec.resolve_sequences("model")?;
        let d_star = match declared {
            Some(x) => Some((x, DStarSource::Declared)),
            None => match d.limit() {
                Some(x) => Some((x, DStarSource::ClosedForm)),
                None => estimate_limit(&d, 1000).map(|x| (x, DStarSource::Estimated)),
            },
        };
        let model = Self { spec, b, d, d_star, cache: RwLock::new(Arc::new(Prefix::default())) };
        model.ensure(64);
        Ok(model)
    }

    pub fn builtin(family: Family) -> Self {
        Self::from_spec(ModelSpec::Family { family, params: Map::new() }.with_default_params())
            .expect("builtin presets are valid")
    }

    /// `b ≡ b_const`, `d ≡ d_const`.
    pub fn constant(b: f64, d: f64) -> Result<Self, RateError> {
        let mut params = Map::new();
        params.insert("b".into(), json!(b));
        params.insert("d".into(), json!(d));
        Self::from_spec(ModelSpec::Family { family: Family::Constant, params })
    }

    pub fn from_tables(b: RateSeq, d: RateSeq, d_star: Option<f64>) -> Result<Self, RateError> {
        b.validate("b", true)?;
        d.validate("d", false)?;
        Self::from_spec(ModelSpec::Table { b, d, d_star })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn birth_seq(&self) -> &RateSeq {
        &self.b
    }

    pub fn death_seq(&self) -> &RateSeq {
        &self.d
    }

    /// `(b(i), d(i))`.
    #[inline]
    pub fn eval_rates(&self, i: u64) -> (f64, f64) {
        (self.b.at(i), self.d.at(i))
    }

    pub fn d_star(&self) -> Result<f64, RateError> {
        self.d_star.map(|(x, _)| x).ok_or(RateError::MissingDStar)
    }

    pub fn d_star_source(&self) -> Option<DStarSource> {
        self.d_star.map(|(_, s)| s)
    }

    /// Numerical `d*` estimate over `i ∈ [cutoff, 2·cutoff]`; `None` when the
    /// values there disagree by more than the agreement tolerance.
    pub fn estimate_d_star(&self, cutoff: u64) -> Option<f64> {
        estimate_limit(&self.d, cutoff)
    }

    /// True when `d(i) = d*` for every `i`, so `alpha` vanishes identically.
    pub fn alpha_vanishes(&self) -> bool {
        match self.d_star {
            Some((ds, _)) => {
                self.d.head.iter().all(|&v| v == ds)
                    && matches!(self.d.tail, Tail::Constant { value } if value == ds)
            }
            None => false,
        }
    }

    fn snapshot(&self) -> Arc<Prefix> {
        self.cache.read().expect("prefix cache poisoned").clone()
    }

    fn term(&self, which: SeqKind, i: u64) -> f64 {
        let (b, d) = self.eval_rates(i);
        let w = b + d;
        match which {
            SeqKind::Phi1 => 1.0 / w,
            SeqKind::Phi2 => {
                let x = 1.0 / w;
                x * x
            }
            SeqKind::Rho1 => d / w,
            SeqKind::Rho2 => {
                let x = d / w;
                x * x
            }
            SeqKind::Alpha => match self.d_star {
                Some((ds, _)) => (d - ds) / w,
                None => f64::NAN,
            },
        }
    }

    /// Make the cache hold at least `len` entries (indices `0..len`), up to the limit.
    fn ensure(&self, len: usize) -> Arc<Prefix> {
        let len = len.min(CACHE_LIMIT);
        let current = self.snapshot();
        if current.len() >= len {
            return current;
        }
        let mut guard = self.cache.write().expect("prefix cache poisoned");
        if guard.len() >= len {
            return guard.clone();
        }
        let target = len.max(2 * guard.len()).min(CACHE_LIMIT);
        let mut next = Prefix {
            phi1: guard.phi1.clone(),
            phi2: guard.phi2.clone(),
            rho1: guard.rho1.clone(),
            rho2: guard.rho2.clone(),
            alpha: guard.alpha.clone(),
        };
        if next.phi1.is_empty() {
            next.phi1.push(0.0);
            next.phi2.push(0.0);
            next.rho1.push(0.0);
            next.rho2.push(0.0);
            next.alpha.push(0.0);
        }
        for k in next.len()..target {
            let i = (k - 1) as u64;
            next.phi1.push(next.phi1[k - 1] + self.term(SeqKind::Phi1, i));
            next.phi2.push(next.phi2[k - 1] + self.term(SeqKind::Phi2, i));
            next.rho1.push(next.rho1[k - 1] + self.term(SeqKind::Rho1, i));
            next.rho2.push(next.rho2[k - 1] + self.term(SeqKind::Rho2, i));
            next.alpha.push(next.alpha[k - 1] + self.term(SeqKind::Alpha, i));
        }
        let next = Arc::new(next);
        *guard = next.clone();
        next
    }

    fn column(prefix: &Prefix, which: SeqKind) -> &[f64] {
        match which {
            SeqKind::Phi1 => &prefix.phi1,
            SeqKind::Phi2 => &prefix.phi2,
            SeqKind::Rho1 => &prefix.rho1,
            SeqKind::Rho2 => &prefix.rho2,
            SeqKind::Alpha => &prefix.alpha,
        }
    }

    /// Prefix sum at an integer index.
    pub fn seq_at(&self, which: SeqKind, k: u64) -> Result<f64, RateError> {
        if which == SeqKind::Alpha && self.d_star.is_none() {
            return Err(RateError::MissingDStar);
        }
        let prefix = self.ensure(k as usize + 1);
        let col = Self::column(&prefix, which);
        if (k as usize) < col.len() {
            return Ok(col[k as usize]);
        }
        let mut s = *col.last().expect("cache is never empty");
        for i in (col.len() as u64 - 1)..k {
            s += self.term(which, i);
        }
        Ok(s)
    }

    /// Prefix sum extended to `t >= 0` by linear interpolation between integers.
    pub fn seq(&self, which: SeqKind, t: f64) -> Result<f64, RateError> {
        assert!(t >= 0.0 && t.is_finite(), "seq evaluated at t = {t}");
        let k = t.floor();
        let frac = t - k;
        let base = self.seq_at(which, k as u64)?;
        if frac == 0.0 {
            Ok(base)
        } else {
            Ok(base + frac * self.term(which, k as u64))
        }
    }

    /// Inverse of the interpolated `phi1`.
    pub fn phi1_inv(&self, y: f64) -> Result<f64, RateError> {
        assert!(y >= 0.0 && !y.is_nan(), "phi1_inv evaluated at y = {y}");
        if y == 0.0 {
            return Ok(0.0);
        }
        // doubling bracket over the cached table
        let mut len = 64usize;
        let mut prefix = self.ensure(len);
        while *prefix.phi1.last().unwrap() <= y && prefix.len() < CACHE_LIMIT {
            len = (len * 2).min(CACHE_LIMIT);
            prefix = self.ensure(len);
        }
        let phi1 = &prefix.phi1;
        let (k, base) = if *phi1.last().unwrap() > y {
            // largest k with phi1[k] <= y
            let k = phi1.partition_point(|&v| v <= y) - 1;
            (k as u64, phi1[k])
        } else {
            let mut k = phi1.len() as u64 - 1;
            let mut s = phi1[k as usize];
            loop {
                let next = s + self.term(SeqKind::Phi1, k);
                if next > y {
                    break (k, s);
                }
                if k >= STREAM_LIMIT {
                    return Err(RateError::OutOfRange { y, limit_hint: s });
                }
                s = next;
                k += 1;
            }
        };
        let w = self.term(SeqKind::Phi1, k);
        Ok(k as f64 + ((y - base) / w).min(1.0))
    }

    /// `alpha(phi1^{-1}(t))`.
    pub fn k_alpha(&self, t: f64) -> Result<f64, RateError> {
        if self.d_star.is_none() {
            return Err(RateError::MissingDStar);
        }
        if self.alpha_vanishes() {
            return Ok(0.0);
        }
        let s = self.phi1_inv(t)?;
        self.seq(SeqKind::Alpha, s)
    }

    /// The recentring function `r(t) = c·t − x_k(t)` with `c = λ*/(λ*+d*)` and
    /// the fixed-point iterates `x_1 = K(c t)/(λ*+d*)`, `x_i = K(c t − x_{i−1})/(λ*+d*)`.
    pub fn r_of_t(
        &self,
        t: f64,
        lambda_star: f64,
        d_star: f64,
        iterations: usize,
    ) -> Result<f64, RateError> {
        assert!(iterations >= 1, "r_of_t needs at least one iteration");
        let scale = lambda_star + d_star;
        let c = lambda_star / scale;
        let mut x = 0.0;
        for iteration in 1..=iterations {
            let arg = c * t - x;
            if !arg.is_finite() || arg < 0.0 || arg > t {
                return Err(RateError::NonFinite { iteration, value: arg });
            }
            x = self.k_alpha(arg)? / scale;
        }
        let r = c * t - x;
        if !r.is_finite() || r < 0.0 || r > t {
            return Err(RateError::NonFinite { iteration: iterations, value: r });
        }
        Ok(r)
    }

    /// `inf_i (b(i) + d(i))`: exact scan below `max(scan_cutoff, head lengths)`,
    /// closed-form bound on the tail.
    pub fn r_inf(&self, scan_cutoff: u64) -> RInf {
        let n = scan_cutoff.max(self.b.head.len() as u64).max(self.d.head.len() as u64).max(1);
        let scanned = (0..n)
            .map(|i| {
                let (b, d) = self.eval_rates(i);
                b + d
            })
            .fold(f64::INFINITY, f64::min);
        let (bt, dt) = (self.b.tail, self.d.tail);
        let both_up = bt.nondecreasing() && dt.nondecreasing();
        let both_down = bt.nonincreasing() && dt.nonincreasing();
        let bound = bt.infimum_from(n) + dt.infimum_from(n);
        if both_up || both_down || bound >= scanned {
            RInf { value: scanned.min(bound), exact: true, tail_lower_bound: bound }
        } else {
            RInf { value: scanned, exact: false, tail_lower_bound: bound }
        }
    }
}

fn estimate_limit(seq: &RateSeq, cutoff: u64) -> Option<f64> {
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for i in cutoff..=2 * cutoff {
        let v = seq.at(i);
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    (hi - lo <= D_STAR_AGREEMENT).then(|| sum / (cutoff + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(f: Family) -> RateModel {
        RateModel::builtin(f)
    }

    #[test]
    fn eval_rates_presets() {
        assert_eq!(model(Family::PaPure).eval_rates(4), (5.0, 0.0));
        assert_eq!(model(Family::Rao).eval_rates(2), (3.0, 1.5));
        assert_eq!(model(Family::Rdy2).eval_rates(0), (0.25, 1.0));
        let rao = model(Family::Rao);
        let b: Vec<f64> = (0..5).map(|i| rao.eval_rates(i).0).collect();
        let d: Vec<f64> = (0..5).map(|i| rao.eval_rates(i).1).collect();
        assert_eq!(b, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(d, vec![1.0, 2.0, 1.5, 1.5, 1.5]);
        let rdy1 = model(Family::Rdy1);
        assert_eq!(rdy1.eval_rates(0), (1.0, 0.25));
        assert_eq!(rdy1.eval_rates(1), (2.0, 2.0));
        let geom = model(Family::UaGeomDeath);
        assert_eq!(geom.eval_rates(0), (1.0, 0.5));
        assert_eq!(geom.eval_rates(3), (1.0, 1.0 / 16.0));
    }

    #[test]
    fn prefix_sums() {
        assert_eq!(model(Family::UaPure).seq(SeqKind::Phi1, 7.0).unwrap(), 7.0);
        let pud = model(Family::PaUnitDeath);
        assert!((pud.seq(SeqKind::Phi1, 2.0).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(model(Family::UaUnitDeath).seq(SeqKind::Rho1, 6.0).unwrap(), 3.0);
        assert_eq!(pud.seq(SeqKind::Alpha, 10.0).unwrap(), 0.0);
        for f in Family::BUILTIN {
            for kind in [SeqKind::Phi1, SeqKind::Phi2, SeqKind::Rho1, SeqKind::Rho2] {
                assert_eq!(model(f).seq(kind, 0.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn interpolation_is_linear_between_integers() {
        let m = model(Family::PaPure);
        let a = m.seq(SeqKind::Phi1, 3.0).unwrap();
        let b = m.seq(SeqKind::Phi1, 4.0).unwrap();
        let mid = m.seq(SeqKind::Phi1, 3.25).unwrap();
        assert!((mid - (a + 0.25 * (b - a))).abs() < 1e-15);
    }

    #[test]
    fn alpha_needs_d_star() {
        let m = RateModel::from_tables(
            RateSeq::constant(1.0),
            RateSeq::new(Vec::new(), Tail::Affine { slope: 1.0, intercept: 0.0 }),
            None,
        )
        .unwrap();
        assert_eq!(m.d_star(), Err(RateError::MissingDStar));
        assert_eq!(m.seq(SeqKind::Alpha, 3.0), Err(RateError::MissingDStar));
        assert!(m.seq(SeqKind::Rho1, 3.0).is_ok());
    }

    #[test]
    fn phi1_inverse() {
        assert_eq!(model(Family::UaPure).phi1_inv(3.5).unwrap(), 3.5);
        assert!((model(Family::UaUnitDeath).phi1_inv(2.0).unwrap() - 4.0).abs() < 1e-12);
        // 1 + 1/2 + 1/3 = 11/6
        let t = model(Family::PaPure).phi1_inv(11.0 / 6.0).unwrap();
        assert!((t - 3.0).abs() < 1e-9, "{t}");
    }

    #[test]
    fn phi1_inverse_past_the_cache_streams() {
        let m = model(Family::UaPure);
        let y = CACHE_LIMIT as f64 + 10.5;
        assert!((m.phi1_inv(y).unwrap() - y).abs() < 1e-6);
    }

    #[test]
    fn phi1_inverse_of_explosive_model_is_out_of_range() {
        // b(i) = 4^i: phi1 converges to 4/3
        let m = RateModel::from_tables(
            RateSeq::new(Vec::new(), Tail::Geometric { scale: 1.0, ratio: 4.0 }),
            RateSeq::constant(0.0),
            None,
        )
        .unwrap();
        assert!(matches!(m.phi1_inv(2.0), Err(RateError::OutOfRange { .. })));
        assert!(m.phi1_inv(1.0).is_ok());
    }

    #[test]
    fn k_alpha_values() {
        assert_eq!(model(Family::PaUnitDeath).k_alpha(3.7).unwrap(), 0.0);
        assert_eq!(model(Family::UaPure).k_alpha(12.0).unwrap(), 0.0);
        let rao = model(Family::Rao);
        let t = rao.seq(SeqKind::Phi1, 4.0).unwrap();
        let k = rao.k_alpha(t).unwrap();
        assert!((k + 0.125).abs() < 1e-12, "{k}");
    }

    #[test]
    fn r_of_t_trivial_cases() {
        assert_eq!(model(Family::PaUnitDeath).r_of_t(10.0, 1.0, 1.0, 3).unwrap(), 5.0);
        for k in [1, 2, 7] {
            assert_eq!(model(Family::UaPure).r_of_t(7.0, 1.0, 0.0, k).unwrap(), 7.0);
        }
    }

    #[test]
    fn r_inf_values() {
        assert_eq!(model(Family::Rao).r_inf(100).value, 2.0);
        assert_eq!(model(Family::Rdy1).r_inf(100).value, 1.25);
        assert_eq!(model(Family::Rdy2).r_inf(100).value, 1.25);
        assert_eq!(model(Family::UaUnitDeath).r_inf(1).value, 2.0);
        // 1 + 2^-(i+1) decreases to 1 without reaching it
        let g = model(Family::UaGeomDeath).r_inf(50);
        assert!(g.exact);
        assert_eq!(g.value, 1.0);
    }

    #[test]
    fn d_star_resolution() {
        assert_eq!(model(Family::Rao).d_star().unwrap(), 1.5);
        assert_eq!(model(Family::Rao).d_star_source(), Some(DStarSource::ClosedForm));
        assert_eq!(model(Family::PaGeomDeath).d_star().unwrap(), 0.0);
        let declared = RateModel::from_tables(
            RateSeq::constant(1.0),
            RateSeq::constant(1.0),
            Some(0.75),
        )
        .unwrap();
        assert_eq!(declared.d_star().unwrap(), 0.75);
        assert_eq!(declared.d_star_source(), Some(DStarSource::Declared));
        assert_eq!(model(Family::PaPure).estimate_d_star(1000), Some(0.0));
    }

    #[test]
    fn spec_parsing_errors() {
        let bad = json!({"b_table": [1.0], "d_table": [-0.1], "b_tail": {"kind": "constant", "value": 1.0}, "d_tail": {"kind": "constant", "value": 0.0}});
        let err = ModelSpec::from_json(&bad, "model").unwrap_err();
        assert!(err.to_string().contains("d_table[0]"), "{err}");
        let unknown = json!({"family": "nope"});
        assert_eq!(
            ModelSpec::from_json(&unknown, "model").unwrap_err(),
            RateError::UnknownFamily("nope".into())
        );
        let extra = json!({"family": "rao", "params": {"x": 1}});
        assert!(ModelSpec::from_json(&extra, "model").is_err());
    }

    #[test]
    fn table_form_matches_preset() {
        let v = json!({
            "b_table": [], "b_tail": {"kind": "affine", "slope": 1.0, "intercept": 1.0},
            "d_table": [1.0, 2.0], "d_tail": {"kind": "constant", "value": 1.5},
            "d_star": null
        });
        let m = RateModel::from_spec(ModelSpec::from_json(&v, "model").unwrap()).unwrap();
        let rao = model(Family::Rao);
        for i in 0..50 {
            assert_eq!(m.eval_rates(i), rao.eval_rates(i));
        }
        assert_eq!(m.d_star().unwrap(), 1.5);
    }

    #[test]
    fn cache_extension_is_bit_identical() {
        let m = model(Family::PaGeomDeath);
        let early: Vec<f64> = (0..60).map(|k| m.seq_at(SeqKind::Rho1, k).unwrap()).collect();
        m.ensure(100_000);
        let late: Vec<f64> = (0..60).map(|k| m.seq_at(SeqKind::Rho1, k).unwrap()).collect();
        assert_eq!(early, late);
        // streamed and cached evaluations agree
        let fresh = model(Family::PaGeomDeath);
        assert_eq!(
            fresh.seq_at(SeqKind::Phi1, 5000).unwrap(),
            m.seq_at(SeqKind::Phi1, 5000).unwrap()
        );
    }
}
