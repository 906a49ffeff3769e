//! Convergence diagnostics for positive series given by a term function.

use serde::Serialize;

/// Outcome of a finite-evidence convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesVerdict {
    Convergent,
    Divergent,
    Inconclusive,
}

/// Evidence behind a [`SeriesVerdict`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesEvidence {
    pub verdict: SeriesVerdict,
    pub cutoff: u64,
    /// Local power-law decay exponents of the terms over `[c, 2c]` and `[2c, 4c]`.
    pub exponents: [f64; 2],
    pub terms: [f64; 3],
}

/// Decay exponent above which a series counts as convergent.
const CONVERGENT_EXPONENT: f64 = 1.1;
/// Decay exponent below which a series counts as divergent (harmonic sits just under 1).
const DIVERGENT_EXPONENT: f64 = 1.01;

/// Classify `sum_i term(i)` from the local decay of its terms at `cutoff`,
/// `2·cutoff` and `4·cutoff`.
pub fn classify(term: impl Fn(u64) -> f64, cutoff: u64) -> SeriesEvidence {
    let c = cutoff.max(1);
    let terms = [term(c), term(2 * c), term(4 * c)];
    let exponent = |a: f64, b: f64| -> f64 {
        if b == 0.0 {
            f64::INFINITY
        } else {
            (a / b).log2()
        }
    };
    let exponents = [exponent(terms[0], terms[1]), exponent(terms[1], terms[2])];
    let vanished = terms[1] == 0.0 && terms[2] == 0.0;
    let verdict = if vanished || exponents.iter().all(|&p| p >= CONVERGENT_EXPONENT) {
        SeriesVerdict::Convergent
    } else if exponents.iter().all(|&p| p <= DIVERGENT_EXPONENT) {
        SeriesVerdict::Divergent
    } else {
        SeriesVerdict::Inconclusive
    };
    SeriesEvidence { verdict, cutoff: c, exponents, terms }
}

/// Estimate `sum_{i >= k} term(i)` by geometric or power-law extrapolation.
/// `None` when the terms do not decay fast enough to extrapolate.
pub fn tail_estimate(term: impl Fn(u64) -> f64, k: u64) -> Option<f64> {
    assert!(k >= 4);
    let a = term(k);
    if a == 0.0 {
        return (1..=8).all(|j| term(k + j) == 0.0).then_some(0.0);
    }
    let (a1, a2) = (term(k - 1), term(k - 2));
    let (q1, q2) = (a / a1, a1 / a2);
    if q1 < 0.99 && q2 < 0.99 && (q1 - q2).abs() <= 0.05 * q1.max(q2) {
        let q = q1.max(q2);
        return Some(a / (1.0 - q));
    }
    let p = (term(k / 2) / a).log2();
    (p > 1.0).then(|| a * (k as f64 / (p - 1.0) + 0.5))
}
