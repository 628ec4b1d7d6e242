//! Kolmogorov–Smirnov and chi-square tests used to compare simulated
//! ensembles.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Minimum expected count per category before neighbouring categories are merged.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    // the series converges slowly here and the value is 1 to double precision
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn kolmogorov_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("sample contains NaN".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample KS test with the asymptotic p-value. Ties are handled by
/// comparing the empirical distribution functions only between distinct
/// values, which makes the test conservative for discrete data.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("KS test needs two non-empty samples".into()));
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_p(d, n * m / (n + m)),
    })
}

/// One-sample KS test against a continuous distribution function.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("KS test needs a non-empty sample".into()));
    }
    let xs = sorted(xs)?;
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_p(d, n),
    })
}

/// Chi-square test that two samples of non-negative integers come from the
/// same distribution. Categories are merged from the top down until every
/// expected count reaches [`MIN_EXPECTED`].
pub fn chi_square_homogeneity(a: &[usize], b: &[usize]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput(
            "chi-square test needs two non-empty samples".into(),
        ));
    }
    let top = a.iter().chain(b).copied().max().unwrap_or(0);
    let mut ca = vec![0.0; top + 1];
    let mut cb = vec![0.0; top + 1];
    a.iter().for_each(|&x| ca[x] += 1.0);
    b.iter().for_each(|&x| cb[x] += 1.0);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let min_share = na.min(nb) / total;
    // merge upward-tail categories into their lower neighbour
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for k in (0..=top).rev() {
        acc.0 += ca[k];
        acc.1 += cb[k];
        if (acc.0 + acc.1) * min_share >= MIN_EXPECTED {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let stat: f64 = bins
        .iter()
        .map(|&(oa, ob)| {
            let col = oa + ob;
            let ea = col * na / total;
            let eb = col * nb / total;
            (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb
        })
        .sum();
    let dist = ChiSquared::new((bins.len() - 1) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(TestResult {
        statistic: stat,
        p_value: dist.sf(stat).clamp(0.0, 1.0),
    })
}

/// Bonferroni-adjusted p-value.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m.max(1) as f64).min(1.0)
}
