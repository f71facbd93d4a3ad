//! Goodness-of-fit statistics used by the empirical checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a chi-square test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

fn chi_square_tail(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    dist.sf(statistic)
}

/// Pearson goodness of fit of `observed` counts against `probs`.
///
/// Categories with probability zero must be empty; a count there yields
/// `p = 0`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p == 0.0 {
            if o > 0 {
                return ChiSquare { statistic: f64::INFINITY, df: 0, p_value: 0.0 };
            }
            continue;
        }
        let e = p * total as f64;
        statistic += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let df = cells.saturating_sub(1);
    ChiSquare { statistic, df, p_value: chi_square_tail(statistic, df) }
}

/// Pearson test of independence on a contingency table of counts.
pub fn chi_square_independence(table: &[Vec<u64>]) -> ChiSquare {
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let width = table.first().map_or(0, Vec::len);
    let cols: Vec<u64> = (0..width).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let total: u64 = rows.iter().sum();
    let live_rows: Vec<usize> = (0..rows.len()).filter(|&r| rows[r] > 0).collect();
    let live_cols: Vec<usize> = (0..width).filter(|&c| cols[c] > 0).collect();
    let mut statistic = 0.0;
    for &r in &live_rows {
        for &c in &live_cols {
            let e = rows[r] as f64 * cols[c] as f64 / total as f64;
            statistic += (table[r][c] as f64 - e).powi(2) / e;
        }
    }
    let df = live_rows.len().saturating_sub(1) * live_cols.len().saturating_sub(1);
    ChiSquare { statistic, df, p_value: chi_square_tail(statistic, df) }
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KolmogorovSmirnov {
    pub statistic: f64,
    pub n: usize,
    pub p_value: f64,
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KolmogorovSmirnov {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    KolmogorovSmirnov { statistic, n, p_value: kolmogorov_tail(statistic, n) }
}

/// Asymptotic `P(D_n > d)` with the Stephens small-sample correction.
pub fn kolmogorov_tail(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for i in 1..=200 {
        let i = i as f64;
        let term = (-2.0 * i * i * lambda * lambda).exp();
        sum += if i as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_has_p_one() {
        let r = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.df, 3);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn known_chi_square_tail() {
        // P(χ²₁ > 3.841459) = 0.05.
        let r = chi_square_gof(&[60, 40], &[0.5, 0.5]);
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.0455).abs() < 1e-3);
    }

    #[test]
    fn impossible_category_fails() {
        assert_eq!(chi_square_gof(&[1, 9], &[0.0, 1.0]).p_value, 0.0);
    }

    #[test]
    fn independence_of_a_product_table() {
        let r = chi_square_independence(&[vec![10, 20], vec![30, 60]]);
        assert!(r.statistic.abs() < 1e-12);
        assert_eq!(r.df, 1);
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Q(λ) at λ = 1.358 is about 0.05.
        let d = 1.358 / ((10_000f64).sqrt() + 0.12 + 0.11 / 100.0);
        assert!((kolmogorov_tail(d, 10_000) - 0.05).abs() < 1e-3);
        assert_eq!(kolmogorov_tail(0.0, 10), 1.0);
    }
}
