use super::{EntropyError, EntropyEstimate, EntropyMethod};
use crate::map::PLMap;
use crate::rational::to_f64;

/// Consecutive sub-tolerance steps required before declaring convergence.
const STABLE_STEPS: usize = 5;

/// Entropy as the log of the normalization factor of the pullback operator
/// iterated on a fixed grid.
///
/// The grid is `grid_size + 1` uniform nodes plus the breakpoints of `f`;
/// the distribution function lives on it as a piecewise-linear interpolant.
/// The reported bracket is the last step's drift around the value.
pub fn entropy_transfer(f: &PLMap, grid_size: usize, max_iter: usize, tol: f64) -> Result<EntropyEstimate, EntropyError> {
    let laps = f.laps()?;
    let mut nodes: Vec<f64> = (0..=grid_size).map(|i| i as f64 / grid_size as f64).collect();
    nodes.extend(f.float_dots().iter().map(|(x, _)| *x));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let n = nodes.len();

    // Where each node lands, as an index into the grid plus a weight.
    let locate = |z: f64| -> (usize, f64) {
        let i = nodes.partition_point(|&x| x <= z).clamp(1, n - 1) - 1;
        let w = (z - nodes[i]) / (nodes[i + 1] - nodes[i]);
        (i, w.clamp(0.0, 1.0))
    };
    let images: Vec<(usize, f64)> = nodes.iter().map(|&y| locate(f.eval_f64(y))).collect();
    let lap_ends: Vec<((usize, f64), (usize, f64))> = laps
        .iter()
        .map(|l| (locate(f.eval_f64(to_f64(&l.lo))), locate(f.eval_f64(to_f64(&l.hi)))))
        .collect();
    let lap_bounds: Vec<f64> = laps.iter().map(|l| to_f64(&l.hi)).collect();
    let lap_of: Vec<usize> = nodes
        .iter()
        .map(|&y| lap_bounds.partition_point(|&b| b < y).min(laps.len() - 1))
        .collect();

    let mut values: Vec<f64> = nodes.clone();
    let mut next = vec![0.0; n];
    let interp = |v: &[f64], (i, w): (usize, f64)| v[i] + w * (v[i + 1] - v[i]);
    let mut norm = f64::NAN;
    let mut prev_log = f64::NAN;
    let mut drift = f64::INFINITY;
    let mut stable = 0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut offsets = Vec::with_capacity(laps.len());
        let mut bases = Vec::with_capacity(laps.len());
        let mut acc = 0.0;
        for (start, end) in &lap_ends {
            let base = interp(&values, *start);
            offsets.push(acc);
            bases.push(base);
            acc += (interp(&values, *end) - base).abs();
        }
        norm = acc;
        for k in 0..n {
            let j = lap_of[k];
            next[k] = (offsets[j] + (interp(&values, images[k]) - bases[j]).abs()) / norm;
        }
        next[0] = 0.0;
        next[n - 1] = 1.0;
        drift = values.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut values, &mut next);
        let log = norm.ln();
        let step = (log - prev_log).abs();
        prev_log = log;
        if drift < tol && step < tol {
            stable += 1;
            if stable >= STABLE_STEPS {
                break;
            }
        } else {
            stable = 0;
        }
    }
    let value = norm.ln().max(0.0);
    let width = drift.max(0.0);
    Ok(EntropyEstimate {
        value,
        lower_bound: (value - width).max(0.0),
        upper_bound: value + width,
        method: EntropyMethod::Transfer,
        depth: iterations,
        converged: stable >= STABLE_STEPS,
        lambda_bracket: None,
    })
}
