//! Laplace transform of the reproduction measure, the Malthusian parameter,
//! the offspring law and the regime classification.
//!
//! The transform is the product series
//! `mu_hat(λ) = Σ_{k≥1} Π_{i<k} b(i) / (b(i) + d(i) + λ)`.
//! Its tail is extrapolated by fitting the factors locally to the form
//! `(i + a) / (i + c)`: for that form the tail sums in closed form, so affine
//! birth rates with constant death rates (and constant birth rates, where the
//! fit degenerates to a geometric tail) are summed to rounding error after a
//! few dozen terms.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::rate_model::{RInf, RateError, RateModel, SeqKind};
use crate::series::{self, SeriesEvidence, SeriesVerdict};

/// Default term cap for `mu_hat`.
pub const MU_HAT_TERM_CAP: u64 = 1_000_000;
/// Default absolute tolerance on `λ*`.
pub const LAMBDA_TOL: f64 = 1e-9;
/// Default iteration depth for `r(t)`.
pub const R_ITERATIONS: usize = 8;

const FIRST_CHECK: u64 = 64;
const BRACKET_CAP: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("series terms decay but the tail bound was not reached within {terms} terms (partial sum {partial})")]
    SlowConvergence { terms: u64, partial: f64 },
    #[error("mu_hat < 1 wherever it is finite (value {value} at λ = {lambda}); no Malthusian root")]
    NoRoot { lambda: f64, value: f64 },
    #[error("mu_hat > 1 at every test point up to λ = {lambda}")]
    NotBracketed { lambda: f64 },
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// A converged product-series value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms_used: u64,
    /// Extrapolated tail already included in `value`.
    pub tail: f64,
    pub error_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MuHat {
    Finite(SeriesValue),
    /// The series diverges; `decay_exponent` is the fitted power-law decay of
    /// the terms (at most 1 for a divergent power law).
    Divergent { terms_used: u64, decay_exponent: f64 },
}

impl MuHat {
    pub fn value(&self) -> Option<f64> {
        match self {
            MuHat::Finite(v) => Some(v.value),
            MuHat::Divergent { .. } => None,
        }
    }

    pub fn terms_used(&self) -> u64 {
        match self {
            MuHat::Finite(v) => v.terms_used,
            MuHat::Divergent { terms_used, .. } => *terms_used,
        }
    }
}

/// `Σ_{k≥1} Π_{i<k} b(i)/(b(i)+d(i)+λ)` for `λ ≥ 0`.
pub fn product_series(model: &RateModel, lambda: f64, tol: f64, cap: u64) -> Result<MuHat, AnalyticsError> {
    assert!(lambda >= 0.0 && tol > 0.0 && cap >= 1);
    let factor = |i: u64| {
        let (b, d) = model.eval_rates(i);
        b / (b + d + lambda)
    };
    // h(i) = b/(d+λ); for factors (i+a)/(i+c) this is (i+a)/(c−a), affine in i
    let h = |i: u64| {
        let (b, d) = model.eval_rates(i);
        b / (d + lambda)
    };
    let slope = |i1: u64, i2: u64| (h(i2) - h(i1)) / (i2 - i1) as f64;

    let head = model.birth_seq().head.len().max(model.death_seq().head.len()) as u64;
    let mut next_check = FIRST_CHECK.max((4 * head).next_power_of_two());
    let decade_start = (cap / 10).max(1);
    let (mut term_at_decade, mut partial_at_decade) = (f64::NAN, f64::NAN);
    let mut divergent_hits = 0;
    let mut last_slope = f64::NAN;

    let mut term = 1.0;
    let mut partial = 0.0;
    let mut k = 0u64;
    while k < cap {
        term *= factor(k);
        k += 1;
        partial += term;
        if k == decade_start {
            term_at_decade = term;
            partial_at_decade = partial;
        }
        if term == 0.0 {
            return Ok(MuHat::Finite(SeriesValue { value: partial, terms_used: k, tail: 0.0, error_estimate: 0.0 }));
        }
        if k != next_check {
            continue;
        }
        next_check *= 2;
        let (near, far) = (slope(k / 2, k), slope(k / 4, k / 2));
        last_slope = near;
        if !(near.is_finite() && far.is_finite()) {
            continue;
        }
        if near >= 1.0 && far >= 1.0 {
            divergent_hits += 1;
            if divergent_hits >= 2 && k >= 1024 {
                return Ok(MuHat::Divergent { terms_used: k, decay_exponent: 1.0 / near });
            }
            continue;
        }
        divergent_hits = 0;
        if near < 1.0 && far < 1.0 {
            let next = term * factor(k);
            let lead = next * (h(k) + 1.0);
            let (tail_near, tail_far) = (lead / (1.0 - near), lead / (1.0 - far));
            let value = partial + tail_near;
            let err = (tail_near - tail_far).abs();
            if value.is_finite() && err <= tol * value.max(1.0) {
                return Ok(MuHat::Finite(SeriesValue { value, terms_used: k, tail: tail_near, error_estimate: err }));
            }
        }
    }
    let increment = partial - partial_at_decade;
    let nondecreasing = term >= term_at_decade;
    if (nondecreasing && increment > tol) || (last_slope.is_finite() && last_slope >= 1.0) {
        let decay_exponent = if last_slope.is_finite() { 1.0 / last_slope } else { 0.0 };
        return Ok(MuHat::Divergent { terms_used: k, decay_exponent });
    }
    Err(AnalyticsError::SlowConvergence { terms: k, partial })
}

/// Laplace transform of the reproduction intensity at `λ > 0`.
pub fn mu_hat(model: &RateModel, lambda: f64, tol: f64) -> Result<MuHat, AnalyticsError> {
    assert!(lambda > 0.0, "mu_hat needs λ > 0");
    product_series(model, lambda, tol, MU_HAT_TERM_CAP)
}

fn is_finite_at(model: &RateModel, lambda: f64) -> bool {
    matches!(mu_hat(model, lambda, 1e-10), Ok(MuHat::Finite(_)))
}

/// `inf{λ > 0 : mu_hat(λ) < ∞}`, located by bisection to width `tol`.
pub fn underline_lambda(model: &RateModel, tol: f64) -> Result<f64, AnalyticsError> {
    assert!(tol > 0.0);
    if is_finite_at(model, tol) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (tol, 1.0);
    while !is_finite_at(model, hi) {
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Err(AnalyticsError::Inconclusive(format!("mu_hat not finite for any λ ≤ {BRACKET_CAP}")));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if is_finite_at(model, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // the finite set must be an up-ray
    let consistent = is_finite_at(model, hi + 0.5 * hi.max(1.0))
        && is_finite_at(model, 2.0 * hi + 1.0)
        && (lo <= tol || !is_finite_at(model, 0.5 * lo));
    if !consistent {
        return Err(AnalyticsError::Inconclusive(format!(
            "finiteness of mu_hat is not monotone around λ ≈ {hi}"
        )));
    }
    Ok(hi)
}

/// The Malthusian parameter and the evidence behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MalthusResult {
    pub lambda_star: f64,
    pub underline_lambda: f64,
    pub mu_hat_truncation: u64,
    pub residual: f64,
}

/// Solve `mu_hat(λ*) = 1` on `(underline λ, ∞)` by bracketing and bisection.
pub fn malthusian(model: &RateModel, tol: f64) -> Result<MalthusResult, AnalyticsError> {
    assert!(tol > 0.0);
    let series_tol = (tol * 1e-3).max(1e-14);
    let ul = underline_lambda(model, tol.min(1e-6))?;
    // > 0 means mu_hat(λ) > 1 (divergence counts as above)
    let excess = |lambda: f64| -> Result<(f64, u64), AnalyticsError> {
        match mu_hat(model, lambda, series_tol) {
            Ok(MuHat::Finite(v)) => Ok((v.value - 1.0, v.terms_used)),
            Ok(MuHat::Divergent { terms_used, .. }) => Ok((f64::INFINITY, terms_used)),
            Err(AnalyticsError::SlowConvergence { terms, .. }) => Ok((f64::INFINITY, terms)),
            Err(e) => Err(e),
        }
    };
    let mut lo = ul + 1e-6;
    let (at_lo, _) = excess(lo)?;
    if at_lo < 0.0 {
        return Err(AnalyticsError::NoRoot { lambda: lo, value: at_lo + 1.0 });
    }
    let mut hi = lo.max(1.0);
    loop {
        let (e, _) = excess(hi)?;
        if e < 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Err(AnalyticsError::NotBracketed { lambda: hi });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if excess(mid)?.0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda_star = 0.5 * (lo + hi);
    let (e, terms) = excess(lambda_star)?;
    if lambda_star.partial_cmp(&ul) != Some(std::cmp::Ordering::Greater) {
        return Err(AnalyticsError::Inconclusive(format!("root {lambda_star} does not exceed underline λ {ul}")));
    }
    Ok(MalthusResult { lambda_star, underline_lambda: ul, mu_hat_truncation: terms, residual: e.abs() })
}

/// `P(D ≥ k) = Π_{i<k} b(i)/(b(i)+d(i))`.
pub fn offspring_sf(model: &RateModel, k: u64) -> f64 {
    (0..k)
        .map(|i| {
            let (b, d) = model.eval_rates(i);
            b / (b + d)
        })
        .product()
}

/// `P(D ≥ k)` for `k = 0..=kmax`.
pub fn offspring_sf_table(model: &RateModel, kmax: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax as usize + 1);
    let mut p = 1.0;
    out.push(p);
    for i in 0..kmax {
        let (b, d) = model.eval_rates(i);
        p *= b / (b + d);
        out.push(p);
    }
    out
}

/// Upper bound `exp(−rho1(k) − rho2(k)/2)` on `P(D ≥ k)`.
pub fn offspring_sf_bound(model: &RateModel, k: u64) -> f64 {
    let rho1 = model.seq_at(SeqKind::Rho1, k).expect("rho1 needs no d*");
    let rho2 = model.seq_at(SeqKind::Rho2, k).expect("rho2 needs no d*");
    (-rho1 - 0.5 * rho2).exp()
}

/// `P(D = ∞) = lim_k P(D ≥ k)`.
pub fn p_d_infinite(model: &RateModel, tol: f64) -> Result<f64, AnalyticsError> {
    assert!(tol > 0.0);
    let fd = finite_degree(model, 1000);
    match fd.verdict {
        SeriesVerdict::Divergent => return Ok(0.0),
        SeriesVerdict::Inconclusive => {
            return Err(AnalyticsError::Inconclusive("Finite-Degree diagnosis is inconclusive".into()))
        }
        SeriesVerdict::Convergent => {}
    }
    // Π_{i≥k} (1 − x_i) = exp(−Σ log(1 + d/b)) ∈ [exp(−Σ_{i≥k} d/b), 1]
    let ratio = |i: u64| {
        let (b, d) = model.eval_rates(i);
        d / b
    };
    let cap = 1u64 << 26;
    let mut p = 1.0;
    let mut i = 0u64;
    let mut check = 16u64;
    while i < cap {
        let (b, d) = model.eval_rates(i);
        p *= b / (b + d);
        i += 1;
        if i == check {
            check *= 2;
            if let Some(rest) = series::tail_estimate(ratio, i) {
                if p * rest <= tol {
                    return Ok(p * (-rest).exp());
                }
            }
        }
    }
    Err(AnalyticsError::SlowConvergence { terms: cap, partial: p })
}

/// `E[D]` or a divergence flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum ExpectedOffspring {
    Finite(f64),
    Infinite,
    Unresolved(f64),
}

/// `E[D] = Σ_{k≥1} P(D ≥ k)`, i.e. the product series at `λ = 0`.
pub fn expected_offspring(model: &RateModel, cap: u64) -> ExpectedOffspring {
    match product_series(model, 0.0, 1e-12, cap.max(1)) {
        Ok(MuHat::Finite(v)) => ExpectedOffspring::Finite(v.value),
        Ok(MuHat::Divergent { .. }) => ExpectedOffspring::Infinite,
        Err(AnalyticsError::SlowConvergence { partial, .. }) => ExpectedOffspring::Unresolved(partial),
        Err(_) => ExpectedOffspring::Unresolved(f64::NAN),
    }
}

/// Offspring law summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringLaw {
    /// `P(D ≥ k)` for `k = 0..sf.len()`.
    pub sf: Vec<f64>,
    pub p_infinity: Option<f64>,
    pub mean: ExpectedOffspring,
}

pub fn offspring_law(model: &RateModel, kmax: u64) -> OffspringLaw {
    OffspringLaw {
        sf: offspring_sf_table(model, kmax),
        p_infinity: p_d_infinite(model, 1e-12).ok(),
        mean: expected_offspring(model, MU_HAT_TERM_CAP),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Satisfied,
    Violated,
    Inconclusive,
}

/// One assumption flag with the numbers that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assessment {
    pub status: Status,
    pub evidence: BTreeMap<String, f64>,
    pub note: String,
}

impl Assessment {
    fn from_series(ev: SeriesEvidence, satisfied_when: SeriesVerdict, partial: f64, note: &str) -> Self {
        let status = match ev.verdict {
            SeriesVerdict::Inconclusive => Status::Inconclusive,
            v if v == satisfied_when => Status::Satisfied,
            _ => Status::Violated,
        };
        let mut evidence = BTreeMap::new();
        evidence.insert("cutoff".into(), ev.cutoff as f64);
        evidence.insert("partial_sum_at_cutoff".into(), partial);
        evidence.insert("decay_exponent_near".into(), ev.exponents[0]);
        evidence.insert("decay_exponent_far".into(), ev.exponents[1]);
        evidence.insert("term_at_cutoff".into(), ev.terms[0]);
        Assessment { status, evidence, note: note.to_string() }
    }
}

fn term_of(model: &RateModel, kind: SeqKind) -> impl Fn(u64) -> f64 + '_ {
    move |i| {
        let (b, d) = model.eval_rates(i);
        let w = b + d;
        match kind {
            SeqKind::Phi1 => 1.0 / w,
            SeqKind::Phi2 => 1.0 / (w * w),
            SeqKind::Rho1 => d / w,
            SeqKind::Rho2 => (d / w) * (d / w),
            SeqKind::Alpha => f64::NAN,
        }
    }
}

fn finite_degree(model: &RateModel, cutoff: u64) -> SeriesEvidence {
    series::classify(term_of(model, SeqKind::Rho1), cutoff)
}

/// Flags for the five standing assumptions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumptions {
    pub non_explosion: Assessment,
    pub converging_variance: Assessment,
    pub finite_degree: Assessment,
    pub finite_laplace: Assessment,
    pub malthusian: Assessment,
}

/// Diagnose the assumptions from finite evidence at `cutoff`.
pub fn check_assumptions(model: &RateModel, cutoff: u64) -> (Assumptions, Option<MalthusResult>) {
    assert!(cutoff >= 100, "cutoff must be at least 100");
    let partial = |kind| model.seq_at(kind, cutoff).unwrap_or(f64::NAN);
    let non_explosion = Assessment::from_series(
        series::classify(term_of(model, SeqKind::Phi1), cutoff),
        SeriesVerdict::Divergent,
        partial(SeqKind::Phi1),
        "phi1 must diverge",
    );
    let converging_variance = Assessment::from_series(
        series::classify(term_of(model, SeqKind::Phi2), cutoff),
        SeriesVerdict::Convergent,
        partial(SeqKind::Phi2),
        "phi2 must converge",
    );
    let finite_degree = Assessment::from_series(
        finite_degree(model, cutoff),
        SeriesVerdict::Divergent,
        partial(SeqKind::Rho1),
        "rho1 must diverge",
    );

    let mut probes = BTreeMap::new();
    let mut any_finite = false;
    let mut any_unresolved = false;
    for j in -10..=10 {
        let lambda = 2f64.powi(j);
        match mu_hat(model, lambda, 1e-8) {
            Ok(MuHat::Finite(v)) => {
                any_finite = true;
                probes.insert(format!("mu_hat({lambda})"), v.value);
            }
            Ok(MuHat::Divergent { .. }) => {
                probes.insert(format!("mu_hat({lambda})"), f64::INFINITY);
            }
            Err(_) => any_unresolved = true,
        }
        if any_finite {
            break;
        }
    }
    let finite_laplace = Assessment {
        status: if any_finite {
            Status::Satisfied
        } else if any_unresolved {
            Status::Inconclusive
        } else {
            Status::Violated
        },
        evidence: probes,
        note: "some λ > 0 on the probe grid 2^-10..2^10 with finite mu_hat".into(),
    };

    let (malthusian_flag, mr) = match malthusian(model, LAMBDA_TOL) {
        Ok(mr) => {
            let mut ev = BTreeMap::new();
            ev.insert("lambda_star".into(), mr.lambda_star);
            ev.insert("underline_lambda".into(), mr.underline_lambda);
            ev.insert("residual".into(), mr.residual);
            (Assessment { status: Status::Satisfied, evidence: ev, note: "mu_hat(λ*) = 1 with λ* > underline λ".into() }, Some(mr))
        }
        Err(e @ (AnalyticsError::NoRoot { .. } | AnalyticsError::NotBracketed { .. })) => (
            Assessment { status: Status::Violated, evidence: BTreeMap::new(), note: e.to_string() },
            None,
        ),
        Err(e) => (
            Assessment { status: Status::Inconclusive, evidence: BTreeMap::new(), note: e.to_string() },
            None,
        ),
    };
    (
        Assumptions { non_explosion, converging_variance, finite_degree, finite_laplace, malthusian: malthusian_flag },
        mr,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    InfiniteLifetime,
    FiniteRichAreOld,
    FiniteRichDieYoung,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub r_inf: RInf,
    pub d_star: Option<f64>,
    pub assumptions: Assumptions,
    pub malthus: Option<MalthusResult>,
}

/// Infinite lifetime when Finite-Degree fails; otherwise compare `d*` with `R`.
pub fn classify_regime(model: &RateModel, cutoff: u64) -> RegimeReport {
    let (assumptions, malthus) = check_assumptions(model, cutoff);
    let r_inf = model.r_inf(cutoff);
    let d_star = model.d_star().ok();
    let regime = match assumptions.finite_degree.status {
        Status::Violated => Regime::InfiniteLifetime,
        Status::Inconclusive => Regime::Inconclusive,
        Status::Satisfied => match d_star {
            Some(ds) if r_inf.exact && ds < r_inf.value => Regime::FiniteRichAreOld,
            Some(ds) if r_inf.exact && ds > r_inf.value => Regime::FiniteRichDieYoung,
            _ => Regime::Inconclusive,
        },
    };
    RegimeReport { regime, r_inf, d_star, assumptions, malthus }
}

/// Centring sequences for `log O_n`, `log I_n` and `phi1(max degree)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Centerings {
    pub c_o: f64,
    pub c_i: f64,
    pub c_deg: f64,
}

pub fn predicted_centerings(
    model: &RateModel,
    n: f64,
    mr: &MalthusResult,
    d_star: f64,
) -> Result<Centerings, AnalyticsError> {
    assert!(n >= 2.0);
    let (ls, log_n) = (mr.lambda_star, n.ln());
    let scale = ls + d_star;
    let r = model.r_of_t(log_n / ls, ls, d_star, R_ITERATIONS)?;
    let k = model.k_alpha(r)?;
    let c_o = d_star / scale * log_n + ls / scale * k;
    Ok(Centerings { c_o, c_i: c_o, c_deg: log_n / scale - k / scale })
}

/// Predicted `log P(L > t)` up to a bounded error: `−d*·t − K_alpha(t)`.
pub fn lifetime_logsf_prediction(model: &RateModel, t: f64, d_star: f64) -> Result<f64, AnalyticsError> {
    assert!(t >= 0.0);
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(-d_star * t - model.k_alpha(t)?)
}

/// Residual of the K_alpha condition for the iterated `r(t)` on a grid of `t`.
/// Reported as evidence only; boundedness cannot be decided numerically.
pub fn k_alpha_residuals(
    model: &RateModel,
    mr: &MalthusResult,
    d_star: f64,
    grid: &[f64],
) -> Vec<(f64, Option<f64>)> {
    let (ls, scale) = (mr.lambda_star, mr.lambda_star + d_star);
    grid.iter()
        .map(|&t| {
            let res = (|| -> Result<f64, RateError> {
                let r = model.r_of_t(t, ls, d_star, R_ITERATIONS)?;
                let kr = model.k_alpha(r)?;
                let arg = (ls / scale * t - kr / scale).max(0.0);
                Ok(model.k_alpha(arg)? - kr)
            })();
            (t, res.ok())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_model::Family;

    fn m(f: Family) -> RateModel {
        RateModel::builtin(f)
    }

    // Oracles: closed forms derived by hand.
    // b ≡ c, d ≡ 0: Σ (c/(c+λ))^k = c/λ.
    // PA with d ≡ 0 at λ = 2 and with d ≡ 1 at λ = 1: terms 2/((k+1)(k+2)), sum 1.

    #[test]
    fn mu_hat_closed_forms() {
        let tol = 1e-12;
        let c3 = RateModel::constant(3.0, 0.0).unwrap();
        assert!((mu_hat(&c3, 6.0, tol).unwrap().value().unwrap() - 0.5).abs() <= tol);
        let ua = m(Family::UaUnitDeath);
        assert!((mu_hat(&ua, 1.0, tol).unwrap().value().unwrap() - 0.5).abs() <= tol);
        let pa = m(Family::PaPure);
        assert!((mu_hat(&pa, 2.0, tol).unwrap().value().unwrap() - 1.0).abs() <= 1e-10);
        let pud = m(Family::PaUnitDeath);
        assert!((mu_hat(&pud, 1.0, tol).unwrap().value().unwrap() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn mu_hat_against_brute_force_sum() {
        // PA_pure at λ = 3: terms ~ k^-3, a direct sum to 2e6 is exact to ~1e-13
        let pa = m(Family::PaPure);
        let mut t = 1.0;
        let mut direct = 0.0;
        for i in 0..2_000_000u64 {
            t *= (i + 1) as f64 / (i as f64 + 4.0);
            direct += t;
        }
        let v = mu_hat(&pa, 3.0, 1e-12).unwrap().value().unwrap();
        assert!((v - direct).abs() < 1e-9, "{v} vs {direct}");
        // closed form Σ Γ(k+1)Γ(4)/Γ(k+4) = 3!/(2·1·…) = 1/2
        assert!((v - 0.5).abs() < 1e-10);
    }

    #[test]
    fn mu_hat_divergence() {
        let pa = m(Family::PaPure);
        assert!(matches!(mu_hat(&pa, 0.5, 1e-10).unwrap(), MuHat::Divergent { .. }));
        assert!(matches!(mu_hat(&pa, 1.0, 1e-10).unwrap(), MuHat::Divergent { .. }));
        assert!(matches!(mu_hat(&pa, 1.01, 1e-10).unwrap(), MuHat::Finite(_)));
    }

    #[test]
    fn underline_lambda_values() {
        assert_eq!(underline_lambda(&m(Family::UaUnitDeath), 1e-6).unwrap(), 0.0);
        assert_eq!(underline_lambda(&RateModel::constant(2.0, 1.0).unwrap(), 1e-6).unwrap(), 0.0);
        // terms ~ k^-(1+λ) converge for every λ > 0
        assert_eq!(underline_lambda(&m(Family::PaUnitDeath), 1e-6).unwrap(), 0.0);
        // terms ~ k^-λ converge iff λ > 1
        let ul = underline_lambda(&m(Family::PaPure), 1e-6).unwrap();
        assert!((ul - 1.0).abs() <= 2e-6, "{ul}");
    }

    #[test]
    fn malthusian_roots() {
        let check = |model: &RateModel, expected: f64| {
            let r = malthusian(model, 1e-10).unwrap();
            assert!((r.lambda_star - expected).abs() < 1e-8, "{} vs {expected}", r.lambda_star);
            assert!(r.lambda_star > r.underline_lambda);
            assert!(r.residual < 1e-8);
        };
        check(&m(Family::PaPure), 2.0);
        check(&m(Family::PaUnitDeath), 1.0);
        check(&RateModel::constant(2.0, 1.0).unwrap(), 1.0);
        assert!(matches!(malthusian(&m(Family::UaUnitDeath), 1e-9), Err(AnalyticsError::NoRoot { .. })));
    }

    #[test]
    fn offspring_sf_values() {
        assert_eq!(offspring_sf(&m(Family::UaUnitDeath), 5), 0.03125);
        assert!((offspring_sf(&m(Family::PaUnitDeath), 9) - 0.1).abs() < 1e-15);
        for f in Family::BUILTIN {
            assert_eq!(offspring_sf(&m(f), 0), 1.0);
            assert_eq!(offspring_sf_bound(&m(f), 0), 1.0);
        }
        let b = offspring_sf_bound(&m(Family::UaUnitDeath), 4);
        assert!((b - (-2.5f64).exp()).abs() < 1e-15);
        assert!(offspring_sf(&m(Family::UaUnitDeath), 4) <= b);
        let b1 = offspring_sf_bound(&m(Family::PaUnitDeath), 1);
        assert!((b1 - (-0.625f64).exp()).abs() < 1e-15 && b1 >= 0.5);
    }

    #[test]
    fn p_d_infinite_values() {
        assert_eq!(p_d_infinite(&m(Family::UaUnitDeath), 1e-12).unwrap(), 0.0);
        // direct product; factors are 1 to double precision past i ≈ 60
        let oracle: f64 = (0..200).map(|i| 1.0 / (1.0 + 0.5f64.powi(i + 1))).product();
        let p = p_d_infinite(&m(Family::UaGeomDeath), 1e-13).unwrap();
        assert!((p - oracle).abs() < 1e-12, "{p} vs {oracle}");
        let pg = p_d_infinite(&m(Family::PaGeomDeath), 1e-13).unwrap();
        let oracle: f64 = (0..200).map(|i| (i + 1) as f64 / ((i + 1) as f64 + 0.5f64.powi(i + 1))).product();
        assert!(pg > 0.0 && pg < 1.0);
        assert!((pg - oracle).abs() < 1e-12);
        assert_eq!(p_d_infinite(&m(Family::PaPure), 1e-12).unwrap(), 1.0);
    }

    #[test]
    fn expected_offspring_values() {
        match expected_offspring(&m(Family::UaUnitDeath), 1_000_000) {
            ExpectedOffspring::Finite(v) => assert!((v - 1.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        match expected_offspring(&RateModel::constant(2.0, 1.0).unwrap(), 1_000_000) {
            ExpectedOffspring::Finite(v) => assert!((v - 2.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert_eq!(expected_offspring(&m(Family::PaUnitDeath), 1_000_000), ExpectedOffspring::Infinite);
        assert_eq!(expected_offspring(&m(Family::PaGeomDeath), 100_000), ExpectedOffspring::Infinite);
    }

    #[test]
    fn assumption_flags() {
        let (a, mr) = check_assumptions(&m(Family::PaPure), 1000);
        assert_eq!(a.non_explosion.status, Status::Satisfied);
        assert_eq!(a.converging_variance.status, Status::Satisfied);
        assert_eq!(a.finite_degree.status, Status::Violated);
        assert_eq!(a.finite_laplace.status, Status::Satisfied);
        assert_eq!(a.malthusian.status, Status::Satisfied);
        assert!((mr.unwrap().lambda_star - 2.0).abs() < 1e-8);

        let (a, _) = check_assumptions(&m(Family::UaPure), 1000);
        assert_eq!(a.converging_variance.status, Status::Violated);

        let (a, _) = check_assumptions(&m(Family::PaUnitDeath), 1000);
        for flag in [&a.non_explosion, &a.converging_variance, &a.finite_degree, &a.finite_laplace, &a.malthusian] {
            assert_eq!(flag.status, Status::Satisfied, "{flag:?}");
        }
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(&m(Family::Rao), 1000).regime, Regime::FiniteRichAreOld);
        assert_eq!(classify_regime(&m(Family::Rdy1), 1000).regime, Regime::FiniteRichDieYoung);
        assert_eq!(classify_regime(&m(Family::Rdy2), 1000).regime, Regime::FiniteRichDieYoung);
        assert_eq!(classify_regime(&m(Family::PaGeomDeath), 1000).regime, Regime::InfiniteLifetime);
        assert_eq!(classify_regime(&m(Family::PaPure), 1000).regime, Regime::InfiniteLifetime);
        assert_eq!(classify_regime(&m(Family::PaUnitDeath), 1000).regime, Regime::FiniteRichAreOld);
    }

    #[test]
    fn centerings() {
        let pud = m(Family::PaUnitDeath);
        let mr = malthusian(&pud, 1e-10).unwrap();
        let mr1 = MalthusResult { lambda_star: 1.0, ..mr };
        let c = predicted_centerings(&pud, 10f64.exp(), &mr1, 1.0).unwrap();
        assert!((c.c_o - 5.0).abs() < 1e-12 && (c.c_deg - 5.0).abs() < 1e-12);
        let pa = m(Family::PaPure);
        let mr2 = MalthusResult { lambda_star: 2.0, ..mr };
        let c = predicted_centerings(&pa, 10f64.exp(), &mr2, 0.0).unwrap();
        assert!(c.c_o.abs() < 1e-12 && (c.c_deg - 5.0).abs() < 1e-12);

        let rao = m(Family::Rao);
        let mr = malthusian(&rao, 1e-10).unwrap();
        let c = predicted_centerings(&rao, 1e4, &mr, 1.5).unwrap();
        assert!(c.c_o.is_finite() && c.c_deg.is_finite());
    }

    #[test]
    fn r_of_t_converges_for_rao() {
        let rao = m(Family::Rao);
        let mr = malthusian(&rao, 1e-10).unwrap();
        let r4 = rao.r_of_t(20.0, mr.lambda_star, 1.5, 4).unwrap();
        let r8 = rao.r_of_t(20.0, mr.lambda_star, 1.5, 8).unwrap();
        assert!((r4 - r8).abs() < 1e-6, "{r4} vs {r8}");
    }

    #[test]
    fn lifetime_prediction() {
        assert_eq!(lifetime_logsf_prediction(&m(Family::PaUnitDeath), 3.0, 1.0).unwrap(), -3.0);
        let g = m(Family::UaGeomDeath);
        let v = lifetime_logsf_prediction(&g, 5.0, 0.0).unwrap();
        assert_eq!(v, -g.k_alpha(5.0).unwrap());
        assert!(v < 0.0);
        for f in Family::BUILTIN {
            let model = m(f);
            assert_eq!(lifetime_logsf_prediction(&model, 0.0, model.d_star().unwrap()).unwrap(), 0.0);
        }
    }
}
