//! Chi-square machinery shared by the trace tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Bins with expected count below this are pooled with their neighbours.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .sf(statistic)
}

/// Goodness of fit of `observed` counts against `probs` (which should sum to
/// at most 1; any missing mass is treated as an extra tail bin). Adjacent bins
/// are pooled left to right until each expected count reaches
/// [`MIN_EXPECTED`].
pub fn goodness_of_fit(observed: &[u64], probs: &[f64]) -> ChiSquare {
    let total: u64 = observed.iter().sum();
    let t = total as f64;
    let mut obs: Vec<f64> = observed.iter().map(|&o| o as f64).collect();
    let mut exp: Vec<f64> = (0..obs.len().max(probs.len()))
        .map(|k| probs.get(k).copied().unwrap_or(0.0) * t)
        .collect();
    obs.resize(exp.len(), 0.0);
    let tail = t - exp.iter().sum::<f64>();
    if tail > 1e-9 * t.max(1.0) {
        exp.push(tail);
        obs.push(0.0);
    }

    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, e) in obs.into_iter().zip(exp) {
        o_acc += o;
        e_acc += e;
        if e_acc >= MIN_EXPECTED {
            pooled.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => pooled.push((o_acc, e_acc)),
        }
    }
    let statistic = pooled
        .iter()
        .map(|&(o, e)| {
            if e > 0.0 {
                (o - e).powi(2) / e
            } else if o > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let dof = pooled.len().saturating_sub(1);
    ChiSquare {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

/// Pearson independence test on an r×c contingency table. Empty rows and
/// columns are dropped.
pub fn independence(table: &[Vec<u64>]) -> ChiSquare {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().any(|&x| x > 0)).collect();
    let cols = rows.first().map_or(0, |r| r.len());
    let keep: Vec<usize> = (0..cols)
        .filter(|&j| rows.iter().any(|r| r[j] > 0))
        .collect();
    let total: f64 = rows.iter().flat_map(|r| r.iter()).sum::<u64>() as f64;
    let row_sums: Vec<f64> = rows.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = keep
        .iter()
        .map(|&j| rows.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let mut statistic = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (k, &j) in keep.iter().enumerate() {
            let e = row_sums[i] * col_sums[k] / total;
            statistic += (r[j] as f64 - e).powi(2) / e;
        }
    }
    let dof = rows.len().saturating_sub(1) * keep.len().saturating_sub(1);
    ChiSquare {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

/// Two-sample homogeneity test on histograms over the same bins. Bins whose
/// pooled expected count is small are merged left to right.
pub fn two_sample(a: &[u64], b: &[u64]) -> ChiSquare {
    let len = a.len().max(b.len());
    let get = |v: &[u64], k: usize| v.get(k).copied().unwrap_or(0);
    let (ta, tb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let min_share = ta.min(tb) / (ta + tb).max(1.0);
    let mut merged: Vec<Vec<u64>> = vec![Vec::new(), Vec::new()];
    let (mut acc_a, mut acc_b) = (0u64, 0u64);
    for k in 0..len {
        acc_a += get(a, k);
        acc_b += get(b, k);
        if (acc_a + acc_b) as f64 * min_share >= MIN_EXPECTED {
            merged[0].push(acc_a);
            merged[1].push(acc_b);
            acc_a = 0;
            acc_b = 0;
        }
    }
    if acc_a + acc_b > 0 {
        if merged[0].is_empty() {
            merged[0].push(acc_a);
            merged[1].push(acc_b);
        } else {
            *merged[0].last_mut().unwrap() += acc_a;
            *merged[1].last_mut().unwrap() += acc_b;
        }
    }
    independence(&merged)
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.959963984540054;

/// Total variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let get = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    0.5 * (0..len).map(|k| (get(p, k) - get(q, k)).abs()).sum::<f64>()
}
