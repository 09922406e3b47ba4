use std::collections::BTreeMap;

use serde::Serialize;

use super::{horseshoe_lower_bound, EntropyError, EntropyEstimate, EntropyMethod};
use crate::map::PLMap;
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LapCounts {
    /// `counts[k - 1] = lap(f^k)`.
    pub counts: Vec<u128>,
    pub complete: bool,
}

/// `lap(f^k)` for `k = 1..=n_max` without building the iterates.
///
/// The laps of `f^k` restricted to a lap `L` of `f^(k-1)` are the pieces of
/// `f^(k-1)(L)` cut at interior critical points of `f`, so it is enough to
/// track the multiset of lap images. `budget` bounds the number of distinct
/// images held at once; past it the computed prefix is returned.
pub fn lap_counts(f: &PLMap, n_max: usize, budget: usize) -> Result<LapCounts, EntropyError> {
    let crit = f.interior_critical_points()?;
    let mut images: BTreeMap<(Rational, Rational), u128> = BTreeMap::new();
    images.insert((crate::rational::zero(), crate::rational::one()), 1);
    let mut counts = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let mut total: u128 = 0;
        let mut next: BTreeMap<(Rational, Rational), u128> = BTreeMap::new();
        for ((lo, hi), m) in &images {
            let start = crit.partition_point(|c| c <= lo);
            let end = crit.partition_point(|c| c < hi);
            let pieces = (end - start + 1) as u128;
            total = match pieces.checked_mul(*m).and_then(|p| total.checked_add(p)) {
                Some(t) => t,
                None => return Ok(LapCounts { counts, complete: false }),
            };
            let mut cuts = Vec::with_capacity(end - start + 2);
            cuts.push(lo.clone());
            cuts.extend(crit[start..end].iter().cloned());
            cuts.push(hi.clone());
            for w in cuts.windows(2) {
                let a = f.eval(&w[0])?;
                let b = f.eval(&w[1])?;
                let key = if a <= b { (a, b) } else { (b, a) };
                *next.entry(key).or_insert(0) += m;
            }
        }
        counts.push(total);
        if next.len() > budget {
            return Ok(LapCounts { counts, complete: false });
        }
        images = next;
    }
    Ok(LapCounts { counts, complete: true })
}

/// Least-squares slope of `ys` against `1..=len` offset by `first`.
fn fit_slope(first: usize, ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xs: Vec<f64> = (0..ys.len()).map(|i| (first + i) as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Entropy from lap growth of the first `n` iterates.
///
/// The upper bound `(1/n) log lap(f^n)` is rigorous by submultiplicativity;
/// the value is the growth rate fitted over the trailing half of the sequence;
/// the lower bound comes from horseshoes of `f` and `f^2`.
pub fn entropy_lap(f: &PLMap, n: usize, budget: usize) -> Result<EntropyEstimate, EntropyError> {
    assert!(n >= 1, "entropy_lap needs n >= 1");
    let laps = lap_counts(f, n, budget)?;
    if !laps.complete {
        return Err(EntropyError::LapBudget { prefix: laps.counts });
    }
    let logs: Vec<f64> = laps.counts.iter().map(|&c| (c as f64).ln()).collect();
    let upper = logs[n - 1] / n as f64;
    let raw = if n == 1 {
        upper
    } else {
        let window = (n / 2).max(2);
        fit_slope(n - window + 1, &logs[n - window..])
    };
    let (lower, _) = horseshoe_lower_bound(f, n.min(2))?;
    let lower = lower.min(upper);
    Ok(EntropyEstimate {
        value: raw.clamp(lower, upper),
        lower_bound: lower,
        upper_bound: upper,
        method: EntropyMethod::LapCount,
        depth: n,
        converged: true,
        lambda_bracket: None,
    })
}
