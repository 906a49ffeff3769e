//! Monte Carlo experiments. Each one is a deterministic function of the
//! model, its parameters and the master seed: replica `i` always uses stream
//! `i`, results are collected in replica order, and surviving replicas are
//! taken in index order.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, MalthusResult, Regime, Status};
use crate::config::{config_hash, derive_stream, Engine, RunConfig};
use crate::ctbp_sim::{self, BPState, ClockOracle, Until, LIFELINE_CAP};
use crate::discrete_sim::{self, TreeState};
use crate::exact;
use crate::kernel::Event;
use crate::rate_model::{RateModel, SeqKind};
use crate::stats::{self, TestOutcome};

pub const SCHEMA_VERSION: u32 = 1;
/// Give up on collecting survivors after this many replicas per target.
const MAX_ATTEMPTS_PER_SURVIVOR: u64 = 200;
/// Persistence: stabilisation frequency expected under a finite `phi2`.
pub const PERSISTENCE_THRESHOLD: f64 = 0.9;
/// Tightness: largest allowed IQR growth across the grid.
pub const IQR_GROWTH_LIMIT: f64 = 2.0;
/// Lifetime: allowed residual slope and residual magnitude.
pub const RESIDUAL_SLOPE_LIMIT: f64 = 0.05;
pub const RESIDUAL_BOUND: f64 = 3.0;
/// Lifetime: grid points with fewer exceedances are dropped.
pub const MIN_EXCEEDANCES: u64 = 100;
/// Embedding: largest allowed total-variation distance.
pub const TV_LIMIT: f64 = 0.005;
pub const ALPHA: f64 = 0.01;
/// Growth: largest allowed median relative fluctuation.
pub const FLUCTUATION_LIMIT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("wrong regime: {0}")]
    WrongRegime(String),
    #[error("no Malthusian parameter: {0}")]
    Malthus(AnalyticsError),
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplicaCounts {
    pub total: u64,
    pub surviving: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedTest {
    pub name: String,
    #[serde(flatten)]
    pub outcome: TestOutcome,
}

/// Non-reproducible fields, kept under one key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub build: String,
    pub timestamp: String,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub config: Value,
    pub seed: u64,
    pub replicas: ReplicaCounts,
    pub statistics: Value,
    pub tests: Vec<NamedTest>,
    pub verdict: Verdict,
    pub evidence: String,
    pub run_metadata: RunMetadata,
}

impl ExperimentReport {
    /// The report without `run_metadata`: identical across reruns.
    pub fn reproducible_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serialises");
        v.as_object_mut().expect("object").remove("run_metadata");
        v
    }
}

/// Per-replica raw values for CSV export.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub raw: Table,
}

pub fn build_id() -> String {
    option_env!("PAVD_BUILD_ID").map_or_else(|| format!("pavd-{}", env!("CARGO_PKG_VERSION")), str::to_string)
}

struct ReportBuilder {
    experiment: &'static str,
    config: Value,
    seed: u64,
    started: Instant,
}

impl ReportBuilder {
    fn new(experiment: &'static str, model: &RateModel, params: Value, seed: u64) -> Self {
        let config = json!({ "experiment": experiment, "model": model.spec().to_json(), "parameters": params, "seed": seed });
        ReportBuilder { experiment, config, seed, started: Instant::now() }
    }

    fn finish(
        self,
        replicas: ReplicaCounts,
        statistics: Value,
        tests: Vec<NamedTest>,
        verdict: Verdict,
        evidence: String,
    ) -> ExperimentReport {
        assert!(replicas.surviving <= replicas.total);
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment: self.experiment.to_string(),
            config_hash: config_hash(&self.config),
            config: self.config,
            seed: self.seed,
            replicas,
            statistics,
            tests,
            verdict,
            evidence,
            run_metadata: RunMetadata {
                build: build_id(),
                timestamp: chrono::Utc::now().to_rfc3339(),
                elapsed_seconds: self.started.elapsed().as_secs_f64(),
                threads: rayon::current_num_threads(),
            },
        }
    }
}

fn test(name: &str, outcome: TestOutcome) -> NamedTest {
    NamedTest { name: name.to_string(), outcome }
}

/// Run replicas `0..` until `target` of them satisfy the survival flag; keep
/// the first `target` survivors in index order. Returns the survivors and the
/// number of replicas consumed.
pub fn collect_survivors<T, F>(seed: u64, target: u64, f: F) -> (Vec<T>, u64)
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Option<T> + Sync,
{
    let max_total = target.saturating_mul(MAX_ATTEMPTS_PER_SURVIVOR).max(1000);
    let mut kept = Vec::with_capacity(target as usize);
    let mut next = 0u64;
    let mut consumed = 0u64;
    while (kept.len() as u64) < target && next < max_total {
        let missing = target - kept.len() as u64;
        let rate = if next == 0 { 0.5 } else { (kept.len() as f64 / next as f64).max(0.01) };
        let batch = ((missing as f64 / rate) * 1.1).ceil() as u64 + 8;
        let end = (next + batch).min(max_total);
        let results: Vec<Option<T>> =
            (next..end).into_par_iter().map(|i| f(&mut derive_stream(seed, i))).collect();
        for (offset, r) in results.into_iter().enumerate() {
            if kept.len() as u64 == target {
                break;
            }
            consumed = next + offset as u64 + 1;
            if let Some(t) = r {
                kept.push(t);
            }
        }
        next = end;
    }
    (kept, consumed)
}

/// Survival estimate with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub p_hat: f64,
    pub ci95: (f64, f64),
    pub survived: u64,
    pub total: u64,
}

/// Fraction of replicas whose alive set is nonempty at `T_steps`, i.e. after
/// `steps − 1` events; the continuous engine counts the same events.
pub fn survival_probability(model: &RateModel, engine: Engine, steps: u64, replicas: u64, seed: u64) -> SurvivalEstimate {
    assert!(replicas >= 1 && steps >= 1);
    let events = steps - 1;
    let survived: u64 = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(seed, i);
            let alive = match engine {
                Engine::Discrete => {
                    let mut s = TreeState::init(model);
                    while s.n() < steps {
                        if let Ok(Event::Halted { .. }) = s.step(&mut rng) {
                            break;
                        }
                    }
                    !s.died()
                }
                Engine::Ctbp => {
                    let mut s = BPState::new(model);
                    while s.events() < events && s.gillespie_step(&mut rng).is_ok() {}
                    s.z_alive() > 0
                }
            };
            alive as u64
        })
        .sum();
    SurvivalEstimate {
        p_hat: survived as f64 / replicas as f64,
        ci95: stats::wilson(survived, replicas, 1.959_963_984_540_054),
        survived,
        total: replicas,
    }
}

fn geometric_probs(p: f64, support_start: u64, kmax: u64) -> Vec<f64> {
    (1..=kmax).map(|k| if k < support_start { 0.0 } else { p * (1.0 - p).powi((k - support_start) as i32) }).collect()
}

fn counts_from(values: &[u64], kmax: u64) -> Vec<u64> {
    let mut c = vec![0u64; kmax as usize];
    for &v in values {
        c[v as usize - 1] += 1;
    }
    c
}

/// Geometric law of the limiting elder.
pub fn elder_limit_test(model: &RateModel, steps: u64, surviving: u64, seed: u64) -> Result<ExperimentOutput, ExperimentError> {
    if steps < 100 || surviving < 1 {
        return Err(ExperimentError::Invalid("elder test needs steps >= 100 and surviving >= 1".into()));
    }
    let (assumptions, _) = analytics::check_assumptions(model, 1000);
    match assumptions.finite_degree.status {
        Status::Violated => {}
        Status::Satisfied => return Err(ExperimentError::WrongRegime("Finite-Degree holds; lifetimes are finite".into())),
        Status::Inconclusive => {
            return Err(ExperimentError::WrongRegime("Finite-Degree diagnosis is inconclusive".into()))
        }
    }
    let p = analytics::p_d_infinite(model, 1e-12)?;
    let builder = ReportBuilder::new("elder", model, json!({ "steps": steps, "surviving": surviving }), seed);

    let grid: Vec<u64> = (0..=20).map(|j| ((steps as f64) * 10f64.powf(-2.0 + 0.1 * j as f64)).round() as u64).collect();
    let half = grid.len() / 2;
    let (runs, total) = collect_survivors(seed, surviving, |rng| {
        let t = discrete_sim::run(model, steps, &grid, 1, rng);
        t.survived.then(|| {
            let last = t.checkpoints.last().expect("final checkpoint recorded");
            let tail = &t.checkpoints[half..];
            let stable = tail.iter().all(|c| c.oldest == last.oldest);
            (last.oldest.expect("alive"), last.oldest_rank.expect("alive"), stable)
        })
    });
    let n = runs.len() as u64;
    let counts = ReplicaCounts { total, surviving: n };
    let labels: Vec<u64> = runs.iter().map(|r| r.0).collect();
    let ranks: Vec<u64> = runs.iter().map(|r| r.1).collect();
    let stable = runs.iter().filter(|r| r.2).count() as f64 / n.max(1) as f64;

    let kmax = labels.iter().chain(&ranks).copied().max().unwrap_or(1);
    let label_fit = stats::chi_square_gof(&counts_from(&labels, kmax), &geometric_probs(p, 1, kmax));
    let rank_fit = stats::chi_square_gof(&counts_from(&ranks, kmax), &geometric_probs(p, 1, kmax));
    // support {0, 1, …}: P(O = k) = p(1 − p)^k
    let shifted: Vec<f64> = (1..=kmax).map(|k| p * (1.0 - p).powi(k as i32)).collect();
    let shifted_fit = stats::chi_square_gof(&counts_from(&labels, kmax), &shifted);
    let survival = n as f64 / total.max(1) as f64;
    let frac_one = labels.iter().filter(|&&o| o == 1).count() as f64 / n.max(1) as f64;
    let fits = [("label, support {1,2,...}", label_fit.p_value), ("birth rank, support {1,2,...}", rank_fit.p_value), ("label, support {0,1,...}", shifted_fit.p_value)];
    let best = fits.iter().max_by(|a, b| a.1.total_cmp(&b.1)).expect("three fits");

    let empirical: BTreeMap<String, u64> = (1..=kmax.min(30))
        .map(|k| (k.to_string(), labels.iter().filter(|&&o| o == k).count() as u64))
        .collect();
    let statistics = json!({
        "p_d_infinite": p,
        "survival_fraction": survival,
        "stable_fraction": stable,
        "empirical_p_o_equals_1": frac_one,
        "conditional_prediction_p_over_survival": p / survival,
        "final_oldest_counts": empirical,
        "mean_oldest_label": labels.iter().sum::<u64>() as f64 / n.max(1) as f64,
        "mean_oldest_rank": ranks.iter().sum::<u64>() as f64 / n.max(1) as f64,
        "best_fitting_convention": best.0,
        "checkpoints": grid,
    });
    let tests = vec![
        test("chi_square_label_support_1", label_fit),
        test("chi_square_birth_rank_support_1", rank_fit),
        test("chi_square_label_support_0", shifted_fit),
    ];
    let (verdict, evidence) = if n < surviving {
        (Verdict::Inconclusive, format!("only {n} of {surviving} surviving replicas collected"))
    } else if stable < 0.99 {
        (Verdict::Inconclusive, format!("O_n stable over the last half of checkpoints in only {:.4} of replicas", stable))
    } else if label_fit.p_value > ALPHA {
        (Verdict::Consistent, format!("final O_n fits Geometric({p:.6}) on {{1,2,...}}: p-value {:.4}", label_fit.p_value))
    } else {
        (
            Verdict::Inconsistent,
            format!(
                "final O_n rejects Geometric({p:.6}) on {{1,2,...}}: p-value {:.3e}; best fit: {} (p-value {:.3e})",
                label_fit.p_value, best.0, best.1
            ),
        )
    };
    let raw = Table {
        columns: vec!["replica_rank".into(), "oldest_label".into(), "oldest_birth_rank".into(), "stable".into()],
        rows: runs.iter().enumerate().map(|(i, r)| vec![i as f64, r.0 as f64, r.1 as f64, r.2 as u8 as f64]).collect(),
    };
    Ok(ExperimentOutput { report: builder.finish(counts, statistics, tests, verdict, evidence), raw })
}

/// Stabilisation of the hub ranks and distinctness of their degrees.
pub fn hub_persistence_scan(
    model: &RateModel,
    steps: u64,
    m: usize,
    surviving: u64,
    n0_grid: Option<&[u64]>,
    seed: u64,
) -> Result<ExperimentOutput, ExperimentError> {
    if m < 1 || steps < 10 {
        return Err(ExperimentError::Invalid("persistence scan needs M >= 1 and steps >= 10".into()));
    }
    let mut grid: Vec<u64> = match n0_grid {
        Some(g) => g.to_vec(),
        None => {
            let mut g: Vec<u64> = [100, 1000, 10_000, 20_000].into_iter().collect();
            g.extend([steps / 5, steps / 2]);
            g
        }
    };
    grid.retain(|&n| n >= 1 && n <= steps);
    grid.sort_unstable();
    grid.dedup();
    let builder = ReportBuilder::new(
        "persistence",
        model,
        json!({ "steps": steps, "hubs": m, "surviving": surviving, "n0_grid": grid }),
        seed,
    );
    let (assumptions, _) = analytics::check_assumptions(model, 1000);
    let cv = assumptions.converging_variance.status;

    let (runs, total) = collect_survivors(seed, surviving, |rng| {
        let t = discrete_sim::run(model, steps, &[steps], m, rng);
        t.survived.then(|| {
            let last = (1..=m).map(|k| t.last_hub_change(k)).collect::<Vec<_>>();
            let degrees = t.checkpoints.last().expect("final checkpoint").hub_degrees.clone();
            (last, degrees)
        })
    });
    let n = runs.len() as u64;
    let denom = n.max(1) as f64;

    let mut freq = Map::new();
    let mut last_change_quantiles = Map::new();
    for k in 1..=m {
        let lasts: Vec<f64> = runs.iter().map(|r| r.0[k - 1] as f64).collect();
        let f: Vec<Value> = grid
            .iter()
            .map(|&n0| json!({ "n0": n0, "f": runs.iter().filter(|r| r.0[k - 1] <= n0).count() as f64 / denom }))
            .collect();
        freq.insert(format!("m{k}"), Value::Array(f));
        if !lasts.is_empty() {
            last_change_quantiles.insert(
                format!("m{k}"),
                json!({
                    "q10": stats::quantile(&lasts, 0.1),
                    "q50": stats::quantile(&lasts, 0.5),
                    "q90": stats::quantile(&lasts, 0.9),
                }),
            );
        }
    }
    let mut distinct = Map::new();
    for k in 2..=m {
        let hits = runs
            .iter()
            .filter(|r| {
                let d = &r.1[..k];
                d.iter().all(Option::is_some) && d.windows(2).all(|w| w[0] > w[1])
            })
            .count();
        distinct.insert(format!("m{k}"), json!(hits as f64 / denom));
    }
    let f1 = |n0: u64| runs.iter().filter(|r| r.0[0] <= n0).count() as f64 / denom;
    let f1_series: Vec<f64> = grid.iter().map(|&g| f1(g)).collect();
    let nondecreasing = f1_series.windows(2).all(|w| w[1] >= w[0]);
    let f1_at = f1(steps / 5);

    let statistics = json!({
        "stabilisation_frequency": freq,
        "last_change_quantiles": last_change_quantiles,
        "distinct_degree_frequency": distinct,
        "f1_at_steps_over_5": f1_at,
        "converging_variance": cv,
        "persistence_threshold": PERSISTENCE_THRESHOLD,
    });
    let (verdict, evidence) = if n < surviving {
        (Verdict::Inconclusive, format!("only {n} of {surviving} surviving replicas collected"))
    } else {
        match cv {
            Status::Satisfied if nondecreasing && f1_at >= PERSISTENCE_THRESHOLD => {
                (Verdict::Consistent, format!("phi2 finite; f_1 nondecreasing, f_1(steps/5) = {f1_at:.4}"))
            }
            Status::Satisfied => (
                Verdict::Inconsistent,
                format!("phi2 finite but f_1(steps/5) = {f1_at:.4}, nondecreasing = {nondecreasing}"),
            ),
            Status::Violated if f1_at < PERSISTENCE_THRESHOLD => {
                (Verdict::Consistent, format!("phi2 infinite; f_1(steps/5) = {f1_at:.4} stays below the threshold"))
            }
            Status::Violated => {
                (Verdict::Inconsistent, format!("phi2 infinite yet f_1(steps/5) = {f1_at:.4}"))
            }
            Status::Inconclusive => (Verdict::Inconclusive, "phi2 convergence is inconclusive".into()),
        }
    };
    let mut columns = vec!["replica_rank".to_string()];
    columns.extend((1..=m).map(|k| format!("last_change_m{k}")));
    columns.extend((1..=m).map(|k| format!("final_degree_m{k}")));
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![i as f64];
            row.extend(r.0.iter().map(|&x| x as f64));
            row.extend(r.1.iter().map(|d| d.map_or(f64::NAN, |x| x as f64)));
            row
        })
        .collect();
    let report = builder.finish(ReplicaCounts { total, surviving: n }, statistics, Vec::new(), verdict, evidence);
    Ok(ExperimentOutput { report, raw: Table { columns, rows } })
}

fn require_rich_are_old(model: &RateModel) -> Result<(MalthusResult, f64), ExperimentError> {
    let regime = analytics::classify_regime(model, 1000);
    if regime.regime != Regime::FiniteRichAreOld {
        return Err(ExperimentError::WrongRegime(format!("regime is {:?}, not FiniteRichAreOld", regime.regime)));
    }
    let mr = match (regime.malthus, analytics::malthusian(model, analytics::LAMBDA_TOL)) {
        (Some(mr), _) => mr,
        (None, Err(e)) => {
            return Err(ExperimentError::WrongRegime(format!("Malthusian assumption fails: {e}")))
        }
        (None, Ok(mr)) => mr,
    };
    let d_star = model.d_star().map_err(|e| ExperimentError::Analytics(e.into()))?;
    Ok((mr, d_star))
}

const TIGHT_STATS: [&str; 4] = ["log_o_centred", "log_i_centred", "phi1_maxdeg_centred", "log_i_over_o"];

/// Scale-stability of the recentred elder, hub and maximum degree.
pub fn tightness_scan(model: &RateModel, n_grid: &[u64], surviving: u64, seed: u64) -> Result<ExperimentOutput, ExperimentError> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 2 || grid[0] < 2 {
        return Err(ExperimentError::Invalid("tightness scan needs at least two grid values >= 2".into()));
    }
    let (mr, d_star) = require_rich_are_old(model)?;
    let builder = ReportBuilder::new("tightness", model, json!({ "n_grid": grid, "surviving": surviving }), seed);
    let last = *grid.last().expect("nonempty grid");
    let centres = grid
        .iter()
        .map(|&n| analytics::predicted_centerings(model, n as f64, &mr, d_star))
        .collect::<Result<Vec<_>, _>>()?;

    let (runs, total) = collect_survivors(seed, surviving, |rng| {
        let t = discrete_sim::run(model, last, &grid, 1, rng);
        t.survived.then(|| {
            t.checkpoints
                .iter()
                .map(|c| (c.oldest.expect("alive"), c.hubs[0].expect("alive"), c.max_degree.expect("alive")))
                .collect::<Vec<_>>()
        })
    });
    let n = runs.len() as u64;

    // values[stat][grid index][replica]
    let mut values = vec![vec![Vec::with_capacity(runs.len()); grid.len()]; 4];
    let mut maxdeg = vec![Vec::with_capacity(runs.len()); grid.len()];
    for run in &runs {
        for (g, &(o, i, md)) in run.iter().enumerate() {
            let c = centres[g];
            let phi = model.seq_at(SeqKind::Phi1, md).unwrap_or(f64::NAN);
            let (lo, li) = ((o as f64).ln(), (i as f64).ln());
            values[0][g].push(lo - c.c_o);
            values[1][g].push(li - c.c_i);
            values[2][g].push(phi - c.c_deg);
            values[3][g].push(li - lo);
            maxdeg[g].push(md as f64);
        }
    }
    let mut per_stat = Map::new();
    let mut tests = Vec::new();
    let mut worst_growth: f64 = 1.0;
    let mut diverging = Vec::new();
    for (s, name) in TIGHT_STATS.iter().enumerate() {
        let mut rows = Vec::new();
        let mut iqrs = Vec::new();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (g, &ng) in grid.iter().enumerate() {
            let v = &values[s][g];
            if v.is_empty() {
                continue;
            }
            let (q10, q50, q90) = (stats::quantile(v, 0.1), stats::quantile(v, 0.5), stats::quantile(v, 0.9));
            iqrs.push(q90 - q10);
            rows.push(json!({ "n": ng, "q10": q10, "q50": q50, "q90": q90, "iqr": q90 - q10 }));
            for &x in v {
                xs.push((ng as f64).ln());
                ys.push((x - q50).abs());
            }
        }
        let growth = if iqrs.is_empty() {
            f64::NAN
        } else {
            let lo = iqrs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = iqrs.iter().copied().fold(0.0, f64::max);
            hi / lo
        };
        let trend = if xs.len() >= 3 { stats::spearman(&xs, &ys) } else { TestOutcome { statistic: f64::NAN, dof: 0.0, p_value: f64::NAN } };
        if growth >= IQR_GROWTH_LIMIT && trend.statistic > 0.0 && trend.p_value < ALPHA {
            diverging.push(*name);
        }
        worst_growth = worst_growth.max(growth);
        per_stat.insert(name.to_string(), json!({ "quantiles": rows, "iqr_growth": growth }));
        tests.push(test(&format!("spread_trend_{name}"), trend));
    }
    let medians: Vec<f64> = maxdeg.iter().map(|v| if v.is_empty() { f64::NAN } else { stats::median(v).ln() }).collect();
    let logn: Vec<f64> = grid.iter().map(|&g| (g as f64).ln()).collect();
    let fit = stats::ols(&logn, &medians);
    let centre_rows: Vec<Value> = grid
        .iter()
        .zip(&centres)
        .map(|(&g, c)| json!({ "n": g, "c_o": c.c_o, "c_i": c.c_i, "c_deg": c.c_deg }))
        .collect();
    let decades = (last as f64 / grid[0] as f64).log10();
    let statistics = json!({
        "lambda_star": mr.lambda_star,
        "d_star": d_star,
        "centerings": centre_rows,
        "statistics": per_stat,
        "worst_iqr_growth": worst_growth,
        "iqr_growth_limit": IQR_GROWTH_LIMIT,
        "grid_decades": decades,
        "log_maxdeg_median_slope": fit.slope,
        "log_maxdeg_median_slope_se": fit.slope_se,
    });
    let (verdict, evidence) = if n < surviving {
        (Verdict::Inconclusive, format!("only {n} of {surviving} surviving replicas collected"))
    } else if !diverging.is_empty() {
        (Verdict::Inconsistent, format!("diverging spread: {}", diverging.join(", ")))
    } else if worst_growth < IQR_GROWTH_LIMIT && decades >= 2.0 - 1e-9 {
        (Verdict::Consistent, format!("tight: worst IQR growth {worst_growth:.3} over {decades:.1} decades"))
    } else {
        (Verdict::Inconclusive, format!("worst IQR growth {worst_growth:.3} over {decades:.1} decades without a significant trend"))
    };
    let mut columns = vec!["replica_rank".to_string(), "n".to_string()];
    columns.extend(TIGHT_STATS.iter().map(|s| s.to_string()));
    columns.push("max_degree".into());
    let mut rows = Vec::new();
    for r in 0..runs.len() {
        for (g, &ng) in grid.iter().enumerate() {
            let mut row = vec![r as f64, ng as f64];
            row.extend((0..4).map(|s| values[s][g][r]));
            row.push(maxdeg[g][r]);
            rows.push(row);
        }
    }
    let report = builder.finish(ReplicaCounts { total, surviving: n }, statistics, tests, verdict, evidence);
    Ok(ExperimentOutput { report, raw: Table { columns, rows } })
}

type OutcomeCounts = Vec<HashMap<Vec<i32>, u64>>;

fn merge_counts(mut a: OutcomeCounts, b: OutcomeCounts) -> OutcomeCounts {
    for (ma, mb) in a.iter_mut().zip(b) {
        for (k, v) in mb {
            *ma.entry(k).or_insert(0) += v;
        }
    }
    a
}

/// Exact law of the discrete chain against the continuous process observed
/// at its event times.
pub fn embedding_equivalence(model: &RateModel, n_max: usize, replicas: u64, seed: u64) -> Result<ExperimentOutput, ExperimentError> {
    if !(1..=6).contains(&n_max) || replicas < 1 {
        return Err(ExperimentError::Invalid("embedding needs 1 <= n_max <= 6 and replicas >= 1".into()));
    }
    let builder = ReportBuilder::new("embedding", model, json!({ "n_max": n_max, "replicas": replicas }), seed);
    let laws = exact::discrete_laws(model, n_max);
    let counts: OutcomeCounts = (0..replicas)
        .into_par_iter()
        .fold(
            || vec![HashMap::new(); n_max + 1],
            |mut acc, i| {
                let mut rng = derive_stream(seed, i);
                let mut state = BPState::new(model);
                for (k, slot) in acc.iter_mut().enumerate().skip(1) {
                    if state.z_alive() > 0 {
                        state.gillespie_step(&mut rng).expect("alive");
                    }
                    *slot.entry(state.population().outcome_key(k + 1)).or_insert(0) += 1;
                }
                acc
            },
        )
        .reduce(|| vec![HashMap::new(); n_max + 1], merge_counts);

    let mut per_n = Vec::new();
    let mut tests = Vec::new();
    let mut ok = true;
    let mut worst_tv: f64 = 0.0;
    let mut worst_p: f64 = 1.0;
    for k in 1..=n_max {
        let law = &laws[k];
        let mut outcomes: Vec<(&Vec<i32>, f64)> = law.iter().map(|(key, &p)| (key, p)).collect();
        outcomes.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let observed: Vec<u64> = outcomes.iter().map(|(key, _)| counts[k].get(*key).copied().unwrap_or(0)).collect();
        let probs: Vec<f64> = outcomes.iter().map(|(_, p)| *p).collect();
        let unexpected: u64 = counts[k].iter().filter(|(key, _)| !law.contains_key(*key)).map(|(_, &c)| c).sum();
        let total = replicas as f64;
        let emp: Vec<f64> = observed.iter().map(|&c| c as f64 / total).collect();
        let tv = stats::tv_distance(&emp, &probs) + 0.5 * unexpected as f64 / total;
        let mut obs = observed.clone();
        let mut pr = probs.clone();
        if unexpected > 0 {
            obs.push(unexpected);
            pr.push(0.0);
        }
        let gof = stats::chi_square_gof(&obs, &pr);
        let exact_death = law.iter().filter(|(key, _)| key[k + 1..].iter().all(|&a| a == 0)).map(|(_, p)| p).sum::<f64>();
        per_n.push(json!({
            "n": k,
            "outcomes": law.len(),
            "tv_distance": tv,
            "unexpected_outcomes": unexpected,
            "exact_p_extinct": exact_death,
            "exact_probability_sum": probs.iter().sum::<f64>(),
        }));
        worst_tv = worst_tv.max(tv);
        worst_p = worst_p.min(gof.p_value);
        ok &= tv < TV_LIMIT && gof.p_value > ALPHA;
        tests.push(test(&format!("chi_square_n{k}"), gof));
    }
    let statistics = json!({ "per_n": per_n, "tv_limit": TV_LIMIT, "worst_tv": worst_tv });
    let (verdict, evidence) = if ok {
        (Verdict::Consistent, format!("worst TV {worst_tv:.5}, smallest p-value {worst_p:.4}"))
    } else {
        (Verdict::Inconsistent, format!("worst TV {worst_tv:.5}, smallest p-value {worst_p:.3e}"))
    };
    let report = builder.finish(ReplicaCounts { total: replicas, surviving: replicas }, statistics, tests, verdict, evidence);
    Ok(ExperimentOutput { report, raw: Table::default() })
}

const LIFETIME_CHUNK: u64 = 1 << 16;

/// Empirical lifetime tail against `−d*·t − K_alpha(t)`.
pub fn lifetime_tail_experiment(model: &RateModel, t_grid: &[f64], samples: u64, seed: u64) -> Result<ExperimentOutput, ExperimentError> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t >= 0.0 && t.is_finite())) || samples < 1 {
        return Err(ExperimentError::Invalid("lifetime experiment needs a finite nonnegative t grid".into()));
    }
    let d_star = model.d_star().map_err(|e| ExperimentError::Analytics(e.into()))?;
    let r = model.r_inf(1000);
    if !(r.exact && d_star < r.value) {
        return Err(ExperimentError::WrongRegime(format!("needs d* < R; d* = {d_star}, R = {} (exact: {})", r.value, r.exact)));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let builder = ReportBuilder::new("lifetime", model, json!({ "t_grid": grid, "samples": samples }), seed);
    let chunks = samples.div_ceil(LIFETIME_CHUNK);
    let exceed: Vec<u64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_stream(seed, c);
            let n = LIFETIME_CHUNK.min(samples - c * LIFETIME_CHUNK);
            let mut counts = vec![0u64; grid.len()];
            for _ in 0..n {
                let (_, l, _) = ctbp_sim::sample_lifetime(model, &mut rng, LIFELINE_CAP);
                let k = grid.partition_point(|&t| t < l);
                for x in &mut counts[..k] {
                    *x += 1;
                }
            }
            counts
        })
        .reduce(|| vec![0u64; grid.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());

    let mut rows = Vec::new();
    let (mut ts, mut logs, mut resid) = (Vec::new(), Vec::new(), Vec::new());
    for (&t, &c) in grid.iter().zip(&exceed) {
        let pred = analytics::lifetime_logsf_prediction(model, t, d_star)?;
        let log_sf = (c as f64 / samples as f64).ln();
        let kept = c >= MIN_EXCEEDANCES;
        rows.push(json!({ "t": t, "exceedances": c, "log_sf": log_sf, "prediction": pred, "residual": log_sf - pred, "kept": kept }));
        if kept {
            ts.push(t);
            logs.push(log_sf);
            resid.push(log_sf - pred);
        }
    }
    let mut tests = Vec::new();
    let (verdict, evidence, extra) = if ts.len() < 3 {
        (Verdict::Inconclusive, format!("only {} grid points with at least {MIN_EXCEEDANCES} exceedances", ts.len()), json!({}))
    } else {
        let tail = stats::ols(&ts, &logs);
        let rfit = stats::ols(&ts, &resid);
        let trend = stats::spearman(&ts, &resid);
        tests.push(test("residual_rank_trend", trend));
        let max_abs = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let ok = rfit.slope.abs() <= RESIDUAL_SLOPE_LIMIT && max_abs <= RESIDUAL_BOUND;
        let evidence = format!("residual slope {:.4}, max |r| {:.4}, log-tail slope {:.4}", rfit.slope, max_abs, tail.slope);
        (
            if ok { Verdict::Consistent } else { Verdict::Inconsistent },
            evidence,
            json!({
                "log_sf_slope": tail.slope,
                "log_sf_slope_se": tail.slope_se,
                "residual_slope": rfit.slope,
                "residual_max_abs": max_abs,
                "residual_bound": RESIDUAL_BOUND,
                "residual_slope_limit": RESIDUAL_SLOPE_LIMIT,
            }),
        )
    };
    let mut statistics = json!({ "d_star": d_star, "r_inf": r.value, "grid": rows });
    statistics.as_object_mut().expect("object").extend(extra.as_object().expect("object").clone());
    let report = builder.finish(ReplicaCounts { total: samples, surviving: samples }, statistics, tests, verdict, evidence);
    let raw = Table {
        columns: vec!["t".into(), "exceedances".into()],
        rows: grid.iter().zip(&exceed).map(|(&t, &c)| vec![t, c as f64]).collect(),
    };
    Ok(ExperimentOutput { report, raw })
}

/// `N`, `Z^a`, `Z^b` scaled by `e^{−λ* t}` on the grid, and the final event count.
type ScaledPaths = (Vec<f64>, Vec<f64>, Vec<f64>, u64);

/// Largest relative deviation of `x(t)` from the endpoint `x(T)`.
pub fn relative_fluctuation(path: &[f64]) -> f64 {
    let end = *path.last().expect("nonempty path");
    path.iter().map(|x| (x / end - 1.0).abs()).fold(0.0, f64::max)
}

/// Stabilisation of `N(t)e^{−λ* t}`, `Z^a_t e^{−λ* t}` and `Z^b_t e^{−λ* t}`.
pub fn growth_rate_experiment(
    model: &RateModel,
    horizon: f64,
    surviving: u64,
    grid_points: usize,
    seed: u64,
) -> Result<ExperimentOutput, ExperimentError> {
    if !(horizon > 0.0 && horizon.is_finite()) || grid_points < 2 {
        return Err(ExperimentError::Invalid("growth experiment needs T > 0 and at least two grid points".into()));
    }
    let mr = analytics::malthusian(model, analytics::LAMBDA_TOL).map_err(ExperimentError::Malthus)?;
    let ls = mr.lambda_star;
    let builder = ReportBuilder::new(
        "growth",
        model,
        json!({ "horizon": horizon, "surviving": surviving, "grid_points": grid_points }),
        seed,
    );
    let times: Vec<f64> =
        (0..grid_points).map(|j| horizon * (0.5 + 0.5 * j as f64 / (grid_points - 1) as f64)).collect();
    let (runs, total) = collect_survivors(seed, surviving, |rng| {
        let t = ctbp_sim::run_ctbp(model, Until::Time(horizon), &times, &[], 1, Some(ls), rng);
        (!t.extinct).then(|| {
            let scale = |x: u64, t: f64| x as f64 * (-ls * t).exp();
            let n: Vec<f64> = t.rows.iter().map(|r| scale(2 * r.z_born - r.z_alive, r.t)).collect();
            let a: Vec<f64> = t.rows.iter().map(|r| scale(r.z_alive, r.t)).collect();
            let b: Vec<f64> = t.rows.iter().map(|r| scale(r.z_born, r.t)).collect();
            (n, a, b, t.final_events)
        })
    });
    let n = runs.len() as u64;
    let fluct: Vec<f64> = runs.iter().map(|r| relative_fluctuation(&r.0)).collect();
    let endpoint = |f: fn(&ScaledPaths) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
    let w_n = endpoint(|r| *r.0.last().expect("grid"));
    let w_a = endpoint(|r| *r.1.last().expect("grid"));
    let w_b = endpoint(|r| *r.2.last().expect("grid"));
    let sup_b: Vec<f64> = runs.iter().map(|r| r.2.iter().copied().fold(0.0, f64::max)).collect();
    let inf_b: Vec<f64> = runs.iter().map(|r| r.2.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let sup_a: Vec<f64> = runs.iter().map(|r| r.1.iter().copied().fold(0.0, f64::max)).collect();
    let inf_a: Vec<f64> = runs.iter().map(|r| r.1.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let events: Vec<f64> = runs.iter().map(|r| r.3 as f64).collect();
    let q = |v: &[f64]| {
        if v.is_empty() {
            json!(null)
        } else {
            json!({ "q10": stats::quantile(v, 0.1), "q50": stats::quantile(v, 0.5), "q90": stats::quantile(v, 0.9) })
        }
    };
    let below = |m: f64| w_b.iter().filter(|&&w| w < 1.0 / m).count() as f64 / n.max(1) as f64;
    let median_fluct = if fluct.is_empty() { f64::NAN } else { stats::median(&fluct) };
    let statistics = json!({
        "lambda_star": ls,
        "median_relative_fluctuation": median_fluct,
        "fluctuation_limit": FLUCTUATION_LIMIT,
        "relative_fluctuation": q(&fluct),
        "endpoint_n_scaled": q(&w_n),
        "endpoint_alive_scaled": q(&w_a),
        "endpoint_born_scaled": q(&w_b),
        "window_sup_alive_scaled": q(&sup_a),
        "window_inf_alive_scaled": q(&inf_a),
        "window_sup_born_scaled": q(&sup_b),
        "window_inf_born_scaled": q(&inf_b),
        "final_events": q(&events),
        "fraction_born_endpoint_below": { "1/10": below(10.0), "1/100": below(100.0) },
    });
    let (verdict, evidence) = if n < surviving {
        (Verdict::Inconclusive, format!("only {n} of {surviving} surviving replicas collected"))
    } else if median_fluct < FLUCTUATION_LIMIT {
        (Verdict::Consistent, format!("median relative fluctuation {median_fluct:.4} over [T/2, T]"))
    } else {
        (Verdict::Inconsistent, format!("median relative fluctuation {median_fluct:.4} over [T/2, T]"))
    };
    let raw = Table {
        columns: vec!["replica_rank".into(), "w_n".into(), "w_alive".into(), "w_born".into(), "fluctuation".into(), "events".into()],
        rows: (0..runs.len()).map(|i| vec![i as f64, w_n[i], w_a[i], w_b[i], fluct[i], events[i]]).collect(),
    };
    let report = builder.finish(ReplicaCounts { total, surviving: n }, statistics, Vec::new(), verdict, evidence);
    Ok(ExperimentOutput { report, raw })
}

/// Primary and oracle engines compared on `(τ_k, alive count at τ_k)`.
/// Extinction before the `k`-th event is its own category.
pub fn engine_agreement(model: &RateModel, k: u64, replicas: u64, seed: u64) -> TestOutcome {
    assert!(k >= 1 && replicas >= 100);
    let sample = |oracle: bool| -> Vec<Option<(f64, u64)>> {
        (0..replicas)
            .into_par_iter()
            .map(|i| {
                let mut rng = derive_stream(seed ^ ((oracle as u64) << 63), i);
                if oracle {
                    let mut o = ClockOracle::new(model, &mut rng);
                    while o.events() < k {
                        o.step(&mut rng).ok()?;
                    }
                    Some((o.clock(), o.alive_count()))
                } else {
                    let mut s = BPState::new(model);
                    while s.events() < k {
                        s.gillespie_step(&mut rng).ok()?;
                    }
                    Some((s.clock(), s.z_alive()))
                }
            })
            .collect()
    };
    let (a, b) = (sample(false), sample(true));
    let mut times: Vec<f64> = a.iter().chain(&b).flatten().map(|x| x.0).collect();
    times.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..10).map(|j| stats::quantile_sorted(&times, j as f64 / 10.0)).collect();
    let alive_max = a.iter().chain(&b).flatten().map(|x| x.1).max().unwrap_or(0) as usize;
    let cell = |x: &Option<(f64, u64)>| -> usize {
        match x {
            None => 0,
            Some((t, z)) => 1 + edges.partition_point(|e| e < t) * (alive_max + 1) + *z as usize,
        }
    };
    let cells = 1 + 10 * (alive_max + 1);
    let mut table = vec![vec![0u64; cells]; 2];
    for x in &a {
        table[0][cell(x)] += 1;
    }
    for x in &b {
        table[1][cell(x)] += 1;
    }
    // merge adjacent sparse columns; equal row totals keep expected counts >= MIN_EXPECTED
    let (mut m0, mut m1) = (Vec::new(), Vec::new());
    let (mut c0, mut c1) = (0, 0);
    for (x, y) in table[0].iter().zip(&table[1]) {
        c0 += x;
        c1 += y;
        if (c0 + c1) as f64 >= 2.0 * stats::MIN_EXPECTED {
            m0.push(c0);
            m1.push(c1);
            (c0, c1) = (0, 0);
        }
    }
    match (m0.last_mut(), m1.last_mut()) {
        (Some(x), Some(y)) => {
            *x += c0;
            *y += c1;
        }
        _ => {
            m0.push(c0);
            m1.push(c1);
        }
    }
    let merged = [m0, m1];
    stats::chi_square_homogeneity(&merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Elder,
    Persistence,
    Tightness,
    Embedding,
    Lifetime,
    Growth,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Elder,
        ExperimentKind::Persistence,
        ExperimentKind::Tightness,
        ExperimentKind::Embedding,
        ExperimentKind::Lifetime,
        ExperimentKind::Growth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Elder => "elder",
            ExperimentKind::Persistence => "persistence",
            ExperimentKind::Tightness => "tightness",
            ExperimentKind::Embedding => "embedding",
            ExperimentKind::Lifetime => "lifetime",
            ExperimentKind::Growth => "growth",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// Override the replica count of one experiment block.
pub fn set_replicas(cfg: &mut RunConfig, kind: ExperimentKind, replicas: u64) {
    let e = &mut cfg.experiment;
    match kind {
        ExperimentKind::Elder => e.elder.surviving = replicas,
        ExperimentKind::Persistence => e.persistence.surviving = replicas,
        ExperimentKind::Tightness => e.tightness.surviving = replicas,
        ExperimentKind::Embedding => e.embedding.replicas = replicas,
        ExperimentKind::Lifetime => e.lifetime.samples = replicas,
        ExperimentKind::Growth => e.growth.surviving = replicas,
    }
}

/// Run one experiment from a resolved configuration. The report carries the
/// whole configuration and its hash.
pub fn run_configured(kind: ExperimentKind, cfg: &RunConfig) -> Result<ExperimentOutput, ExperimentError> {
    let model = RateModel::from_spec(cfg.model.clone()).map_err(|e| ExperimentError::Analytics(e.into()))?;
    let e = &cfg.experiment;
    let seed = cfg.seed;
    let mut out = match kind {
        ExperimentKind::Elder => elder_limit_test(&model, e.elder.steps, e.elder.surviving, seed),
        ExperimentKind::Persistence => {
            let p = &e.persistence;
            hub_persistence_scan(&model, p.steps, p.hubs, p.surviving, p.n0_grid.as_deref(), seed)
        }
        ExperimentKind::Tightness => tightness_scan(&model, &e.tightness.n_grid, e.tightness.surviving, seed),
        ExperimentKind::Embedding => embedding_equivalence(&model, e.embedding.n_max, e.embedding.replicas, seed),
        ExperimentKind::Lifetime => lifetime_tail_experiment(&model, &e.lifetime.t_grid, e.lifetime.samples, seed),
        ExperimentKind::Growth => {
            let g = &e.growth;
            growth_rate_experiment(&model, g.horizon, g.surviving, g.grid_points, seed)
        }
    }?;
    out.report.config = cfg.canonical();
    out.report.config_hash = cfg.hash();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_model::{Family, RateSeq, Tail};

    #[test]
    fn survival_of_pure_birth_and_heavy_first_death() {
        let pa = RateModel::builtin(Family::PaPure);
        let est = survival_probability(&pa, Engine::Discrete, 200, 200, 1);
        assert_eq!(est.p_hat, 1.0);
        // b ≡ 1, d = (100, 0, 0, …): only the first step can kill
        let model = RateModel::from_tables(
            RateSeq::constant(1.0),
            RateSeq::new(vec![100.0], Tail::Constant { value: 0.0 }),
            Some(0.0),
        )
        .unwrap();
        for engine in [Engine::Discrete, Engine::Ctbp] {
            let est = survival_probability(&model, engine, 50, 20_000, 2);
            // after the first birth the root has degree 1 and d = 0, so only step 1 kills
            assert!(est.ci95.0 <= 1.0 / 101.0 && 1.0 / 101.0 <= est.ci95.1, "{engine:?} {est:?}");
        }
    }

    #[test]
    fn survivors_are_deterministic() {
        let ua = RateModel::builtin(Family::UaUnitDeath);
        let f = |rng: &mut ChaCha8Rng| {
            let t = discrete_sim::run(&ua, 50, &[50], 1, rng);
            t.survived.then(|| t.checkpoints[0].alive)
        };
        let (a, ta) = collect_survivors(3, 40, f);
        let (b, tb) = collect_survivors(3, 40, f);
        assert_eq!((a.len(), ta), (40, tb));
        assert_eq!(a, b);
    }

    #[test]
    fn embedding_small_cases() {
        let ua = RateModel::builtin(Family::UaUnitDeath);
        let out = embedding_equivalence(&ua, 2, 50_000, 4).unwrap();
        let per_n = &out.report.statistics["per_n"];
        assert_eq!(per_n[0]["exact_p_extinct"], json!(0.5));
        assert!(out.report.tests.iter().all(|t| t.outcome.p_value > 1e-4));
        let pa = RateModel::builtin(Family::PaPure);
        let out = embedding_equivalence(&pa, 3, 10_000, 5).unwrap();
        // 10^4 replicas are too few for the TV limit, so only the GOF is checked
        assert!(out.report.tests.iter().all(|t| t.outcome.p_value > 1e-4));
        assert_eq!(out.report.statistics["per_n"][2]["outcomes"], json!(6));
    }

    #[test]
    fn regime_guards() {
        let ua = RateModel::builtin(Family::UaUnitDeath);
        assert!(matches!(tightness_scan(&ua, &[100, 1000], 10, 1), Err(ExperimentError::WrongRegime(_))));
        assert!(matches!(growth_rate_experiment(&ua, 2.0, 5, 10, 1), Err(ExperimentError::Malthus(_))));
        assert!(matches!(elder_limit_test(&ua, 1000, 10, 1), Err(ExperimentError::WrongRegime(_))));
        let rdy = RateModel::builtin(Family::Rdy1);
        assert!(matches!(lifetime_tail_experiment(&rdy, &[1.0], 100, 1), Err(ExperimentError::WrongRegime(_))));
    }

    #[test]
    fn lifetime_residual_vanishes_at_zero() {
        let pud = RateModel::builtin(Family::PaUnitDeath);
        let out = lifetime_tail_experiment(&pud, &[0.0, 0.5, 1.0, 1.5], 20_000, 6).unwrap();
        let g = &out.report.statistics["grid"][0];
        assert_eq!(g["residual"], json!(0.0));
        assert_eq!(g["exceedances"], json!(20_000));
    }

    #[test]
    fn pure_birth_elder_is_the_root() {
        let pa = RateModel::builtin(Family::PaPure);
        let out = elder_limit_test(&pa, 500, 30, 7).unwrap();
        assert!(out.raw.rows.iter().all(|r| r[1] == 1.0));
        assert_eq!(out.report.statistics["p_d_infinite"], json!(1.0));
    }

    #[test]
    fn reports_are_reproducible() {
        let pud = RateModel::builtin(Family::PaUnitDeath);
        let a = growth_rate_experiment(&pud, 4.0, 20, 11, 9).unwrap();
        let b = growth_rate_experiment(&pud, 4.0, 20, 11, 9).unwrap();
        assert_eq!(a.report.reproducible_json(), b.report.reproducible_json());
        assert_eq!(a.raw, b.raw);
    }

    #[test]
    fn fluctuation_definition() {
        assert_eq!(relative_fluctuation(&[1.0, 1.0]), 0.0);
        assert!((relative_fluctuation(&[0.9, 1.2, 1.0]) - 0.2).abs() < 1e-12);
    }
}
