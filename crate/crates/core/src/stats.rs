//! Test statistics used by the experiments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Minimum expected count per bin after pooling.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

fn chi2_sf(x: f64, dof: f64) -> f64 {
    if dof <= 0.0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    ChiSquared::new(dof).expect("dof > 0").sf(x)
}

/// Merge consecutive bins, in the given order, until each has expected
/// count at least [`MIN_EXPECTED`]; a short remainder joins the last bin.
pub fn pool_bins(observed: &[u64], expected: &[f64]) -> (Vec<u64>, Vec<f64>) {
    assert_eq!(observed.len(), expected.len());
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let (mut o, mut e) = (0u64, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= MIN_EXPECTED {
            obs.push(o);
            exp.push(e);
            o = 0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(lo), Some(le)) => {
                *lo += o;
                *le += e;
            }
            _ => {
                obs.push(o);
                exp.push(e);
            }
        }
    }
    (obs, exp)
}

/// Pearson goodness of fit against `probs` (which should sum to 1 over the
/// support; any missing mass is treated as a final overflow bin).
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> TestOutcome {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut obs = observed.to_vec();
    let mut exp: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let missing = 1.0 - probs.iter().sum::<f64>();
    if missing > 1e-12 {
        obs.push(0);
        exp.push(missing * n as f64);
    }
    let (obs, exp) = pool_bins(&obs, &exp);
    let statistic: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| {
            let diff = o as f64 - e;
            if e > 0.0 {
                diff * diff / e
            } else if o > 0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let dof = obs.len() as f64 - 1.0;
    TestOutcome { statistic, dof, p_value: chi2_sf(statistic, dof) }
}

/// Chi-square test of homogeneity for a `rows × cols` contingency table.
/// Columns with zero total are dropped.
pub fn chi_square_homogeneity(table: &[Vec<u64>]) -> TestOutcome {
    assert!(table.len() >= 2);
    let cols = table[0].len();
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_tot: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let n: f64 = row_tot.iter().sum();
    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for j in 0..cols {
            if col_tot[j] == 0.0 {
                continue;
            }
            let e = row_tot[i] * col_tot[j] / n;
            let diff = row[j] as f64 - e;
            statistic += diff * diff / e;
        }
    }
    let used = col_tot.iter().filter(|&&c| c > 0.0).count();
    let dof = ((table.len() - 1) * used.saturating_sub(1)) as f64;
    TestOutcome { statistic, dof, p_value: chi2_sf(statistic, dof) }
}

/// Wilson score interval.
pub fn wilson(successes: u64, n: u64, z: f64) -> (f64, f64) {
    assert!(n > 0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided z-test that two proportions are equal.
pub fn two_proportion(s1: u64, n1: u64, s2: u64, n2: u64) -> TestOutcome {
    let (p1, p2) = (s1 as f64 / n1 as f64, s2 as f64 / n2 as f64);
    let pooled = (s1 + s2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = if se > 0.0 { (p1 - p2) / se } else { 0.0 };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    TestOutcome { statistic: z, dof: 0.0, p_value: 2.0 * normal.sf(z.abs()) }
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Spearman rank correlation with a two-sided p-value from the t
/// approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> TestOutcome {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 3);
    let rho = pearson(&ranks(x), &ranks(y));
    let dof = x.len() as f64 - 2.0;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (dof / (1.0 - rho * rho)).sqrt();
        2.0 * StudentsT::new(0.0, 1.0, dof).expect("dof > 0").sf(t.abs())
    };
    TestOutcome { statistic: rho, dof, p_value }
}

/// Linearly interpolated sample quantile (R type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(data: &[f64], q: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn median(data: &[f64]) -> f64 {
    quantile(data, 0.5)
}

/// Total-variation distance between two (sub)probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Least-squares line `y = intercept + slope·x` with the slope's standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LineFit { slope, intercept, slope_se }
}
