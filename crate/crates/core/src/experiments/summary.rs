//! Summary statistics over metrics rows.

use super::metrics::MetricsRow;

/// Fraction of rows with `reject == Some(true)` among rows that carry a
/// decision. `None` when no row does.
pub fn rejection_rate<'a>(rows: impl IntoIterator<Item = &'a MetricsRow>) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for r in rows {
        if let Some(rej) = r.reject {
            total += 1;
            hits += rej as usize;
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `values` and U[0, 1].
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |m, (i, &x)| {
        let x = x.clamp(0.0, 1.0);
        m.max((i as f64 + 1.0) / n - x).max(x - i as f64 / n)
    })
}

/// One-sample KS critical value at level 0.01 for sample size `n`
/// (Stephens' finite-sample form).
pub fn ks_critical_01(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    1.628 / (s + 0.12 + 0.11 / s)
}

/// Standard deviation of the difference of two independent binomial
/// proportions estimated from `n1` and `n2` trials.
pub fn sd_prop_diff(p1: f64, n1: usize, p2: f64, n2: usize) -> f64 {
    (p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64).sqrt()
}

/// Standard deviation of one binomial proportion.
pub fn sd_prop(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
