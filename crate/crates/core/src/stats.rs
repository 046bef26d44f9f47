//! Test statistics used by the verification harnesses.
//!
//! Chi-square tests pool sparse cells so that every expected count is at least
//! five. Kolmogorov-Smirnov p-values are exact for one-sample tests with at most
//! [`KS_EXACT_MAX_N`] observations and asymptotic otherwise.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Smallest expected count kept as its own chi-square cell.
pub const MIN_EXPECTED: f64 = 5.0;

/// Largest sample size for the exact one-sample KS distribution.
pub const KS_EXACT_MAX_N: usize = 1000;

/// Outcome of a hypothesis test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Test statistic.
    pub statistic: f64,
    /// Degrees of freedom (0 for KS tests).
    pub dof: usize,
    /// p-value.
    pub p_value: f64,
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    if !x.is_finite() {
        return 0.0;
    }
    if x <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    d.sf(x)
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Chi-square goodness of fit of observed counts against expected counts.
///
/// Cells with expected count below [`MIN_EXPECTED`] are pooled; a pooled cell
/// that is still too small is merged into the smallest remaining cell.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<TestResult> {
    if observed.len() != expected.len() {
        return Err(Error::InvalidArgument("observed and expected differ in length".into()));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut po, mut pe) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            if o > 0.0 {
                return Ok(TestResult { statistic: f64::INFINITY, dof: 1, p_value: 0.0 });
            }
            continue;
        }
        if e >= MIN_EXPECTED {
            cells.push((o, e));
        } else {
            po += o;
            pe += e;
        }
    }
    if pe > 0.0 {
        if pe >= MIN_EXPECTED || cells.is_empty() {
            cells.push((po, pe));
        } else {
            let i = (0..cells.len()).min_by(|&a, &b| cells[a].1.total_cmp(&cells[b].1)).unwrap();
            cells[i].0 += po;
            cells[i].1 += pe;
        }
    }
    if cells.len() < 2 {
        return Err(Error::DegenerateTable(format!("{} cell(s) after pooling", cells.len())));
    }
    let stat: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    Ok(TestResult { statistic: stat, dof, p_value: chi2_sf(stat, dof) })
}

/// Pearson chi-square test of independence on a contingency table.
///
/// Empty rows and columns are dropped.
pub fn chi_square_independence(table: &[Vec<f64>]) -> Result<TestResult> {
    let nc = table.first().map_or(0, |r| r.len());
    let rows: Vec<&Vec<f64>> = table.iter().filter(|r| r.iter().sum::<f64>() > 0.0).collect();
    let cols: Vec<usize> = (0..nc).filter(|&j| rows.iter().map(|r| r[j]).sum::<f64>() > 0.0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Err(Error::DegenerateTable(format!("{}x{} nonempty table", rows.len(), cols.len())));
    }
    let rs: Vec<f64> = rows.iter().map(|r| cols.iter().map(|&j| r[j]).sum()).collect();
    let cs: Vec<f64> = cols.iter().map(|&j| rows.iter().map(|r| r[j]).sum()).collect();
    let n: f64 = rs.iter().sum();
    let mut stat = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (jj, &j) in cols.iter().enumerate() {
            let e = rs[i] * cs[jj] / n;
            stat += (r[j] - e) * (r[j] - e) / e;
        }
    }
    let dof = (rows.len() - 1) * (cols.len() - 1);
    Ok(TestResult { statistic: stat, dof, p_value: chi2_sf(stat, dof) })
}

/// Category labels after pooling: frequent labels keep their own index, the
/// rest share the last index.
fn pooled_index<K: Hash + Eq + Clone + Ord>(counts: &HashMap<K, f64>, threshold: f64) -> (HashMap<K, usize>, usize) {
    let mut keys: Vec<(&K, f64)> = counts.iter().map(|(k, &c)| (k, c)).collect();
    keys.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let kept: Vec<&K> = keys.iter().filter(|(_, c)| *c >= threshold).map(|(k, _)| *k).collect();
    let rest: f64 = keys.iter().filter(|(_, c)| *c < threshold).map(|(_, c)| c).sum();
    let mut idx = HashMap::new();
    for (i, k) in kept.iter().enumerate() {
        idx.insert((*k).clone(), i);
    }
    let mut n = kept.len();
    let other = if rest >= threshold || kept.is_empty() {
        n += 1;
        kept.len()
    } else {
        // Too thin to stand alone: merge into the least frequent kept label.
        kept.len() - 1
    };
    for (k, c) in keys {
        if c < threshold {
            idx.insert(k.clone(), other);
        }
    }
    (idx, n)
}

/// Independence test between two categorical variables observed jointly.
///
/// Labels whose marginal count is below `sqrt(5N)` are pooled, which keeps
/// every expected cell count at least five.
pub fn independence_test<A, B>(pairs: &[(A, B)]) -> Result<TestResult>
where
    A: Hash + Eq + Clone + Ord,
    B: Hash + Eq + Clone + Ord,
{
    let n = pairs.len() as f64;
    let threshold = (MIN_EXPECTED * n).sqrt();
    let mut ca: HashMap<A, f64> = HashMap::new();
    let mut cb: HashMap<B, f64> = HashMap::new();
    for (a, b) in pairs {
        *ca.entry(a.clone()).or_default() += 1.0;
        *cb.entry(b.clone()).or_default() += 1.0;
    }
    let (ia, na) = pooled_index(&ca, threshold);
    let (ib, nb) = pooled_index(&cb, threshold);
    let mut table = vec![vec![0.0; nb]; na];
    for (a, b) in pairs {
        table[ia[a]][ib[b]] += 1.0;
    }
    chi_square_independence(&table)
}

/// Two-sample chi-square test of equal categorical laws.
pub fn two_sample_chi_square<K: Hash + Eq + Clone + Ord>(a: &[K], b: &[K]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::DegenerateTable("empty sample".into()));
    }
    let n = (a.len() + b.len()) as f64;
    let small = a.len().min(b.len()) as f64;
    let threshold = MIN_EXPECTED * n / small;
    let mut c: HashMap<K, f64> = HashMap::new();
    for k in a.iter().chain(b) {
        *c.entry(k.clone()).or_default() += 1.0;
    }
    let (idx, nk) = pooled_index(&c, threshold);
    let mut table = vec![vec![0.0; nk]; 2];
    for k in a {
        table[0][idx[k]] += 1.0;
    }
    for k in b {
        table[1][idx[k]] += 1.0;
    }
    chi_square_independence(&table)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Exact `P(D_n < d)` for the one-sample KS statistic.
fn ks_exact_cdf(n: usize, d: f64) -> f64 {
    let nd = n as f64 * d;
    let k = nd.floor() as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nd;
    let mut hm = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                hm[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[i * m + j] /= g as f64;
                }
            }
        }
    }
    let (q, mut eq) = mat_pow(&hm, m, n);
    let mut s = q[(k - 1) * m + (k - 1)];
    for i in 1..=n {
        s = s * i as f64 / n as f64;
        if s < 1e-140 {
            s *= 1e140;
            eq -= 140;
        }
    }
    s * 10f64.powi(eq)
}

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    c
}

/// Matrix power with a decimal exponent kept separately to avoid overflow.
fn mat_pow(a: &[f64], m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), 0);
    }
    let (half, e) = mat_pow(a, m, n / 2);
    let mut v = mat_mul(&half, &half, m);
    let mut ev = 2 * e;
    if n % 2 == 1 {
        v = mat_mul(a, &v, m);
    }
    if v[(m / 2) * m + m / 2] > 1e140 {
        for x in v.iter_mut() {
            *x *= 1e-140;
        }
        ev += 140;
    }
    (v, ev)
}

/// One-sample Kolmogorov-Smirnov test against a continuous distribution function.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if xs.is_empty() {
        return Err(Error::DegenerateTable("empty sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let p = if n <= KS_EXACT_MAX_N {
        (1.0 - ks_exact_cdf(n, d)).clamp(0.0, 1.0)
    } else {
        let en = nf.sqrt();
        kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
    };
    Ok(TestResult { statistic: d, dof: 0, p_value: p })
}

/// KS test of p-values (or any sample) against the uniform law on `[0, 1]`.
pub fn ks_uniform(ps: &[f64]) -> Result<TestResult> {
    ks_one_sample(ps, |x| x.clamp(0.0, 1.0))
}

/// Two-sample Kolmogorov-Smirnov test (asymptotic law with small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::DegenerateTable("empty sample".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    Ok(TestResult { statistic: d, dof: 0, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) })
}

/// Ordinary least squares fit `y = intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    /// Slope.
    pub slope: f64,
    /// Intercept.
    pub intercept: f64,
    /// Coefficient of determination.
    pub r2: f64,
    /// Standard error of the slope from the residuals.
    pub se_slope: f64,
    /// Standard error of the intercept from the residuals.
    pub se_intercept: f64,
}

/// Least squares line through the points.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<Regression> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::InvalidArgument("regression needs at least three paired points".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("regression abscissae are constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let s2 = sse / (nf - 2.0);
    Ok(Regression {
        slope,
        intercept,
        r2,
        se_slope: (s2 / sxx).sqrt(),
        se_intercept: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
    })
}

/// Mean of a sample.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Median of a sample.
pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Empirical quantile with linear interpolation.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Effective sample size of a correlated series, using the initial positive
/// sequence estimator on pairs of sample autocorrelations.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let rho = |k: usize| -> f64 {
        (0..n - k).map(|i| (xs[i] - m) * (xs[i + k] - m)).sum::<f64>() / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    (n as f64 / tau.max(1e-12)).min(n as f64)
}
