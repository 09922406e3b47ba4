use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use super::{apply_report, verify_conjugacy, CSModel, MonotoneCDF, ParryError, Route};
use crate::entropy::{markov_detect, perron_root, MarkovData};
use crate::map::PLMap;
use crate::rational::{self, from_f64, to_f64, Rational};

const MAX_NODES: usize = 1 << 20;

fn irreducible(m: &[Vec<u32>]) -> bool {
    let n = m.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let edge = if forward { m[i][j] } else { m[j][i] };
                if edge > 0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Solves `(λI - M) ℓ = 0` with `ℓ_k = 1`, dropping row `k`.
fn eigenvector(m: &[Vec<u32>], lambda: &Rational, k: usize) -> Option<Vec<Rational>> {
    let n = m.len();
    let idx: Vec<usize> = (0..n).filter(|&j| j != k).collect();
    let mut a: Vec<Vec<Rational>> = idx
        .iter()
        .map(|&i| {
            let mut row: Vec<Rational> = idx
                .iter()
                .map(|&j| {
                    let d = if i == j { lambda.clone() } else { rational::zero() };
                    d - rational::int(m[i][j] as i64)
                })
                .collect();
            row.push(rational::int(m[i][k] as i64));
            row
        })
        .collect();
    let r = idx.len();
    for c in 0..r {
        let p = (c..r).find(|&i| !a[i][c].is_zero())?;
        a.swap(c, p);
        let pivot = a[c][c].clone();
        for v in a[c].iter_mut() {
            *v /= &pivot;
        }
        for i in 0..r {
            if i != c && !a[i][c].is_zero() {
                let factor = a[i][c].clone();
                for j in c..=r {
                    let delta = &factor * &a[c][j];
                    a[i][j] -= delta;
                }
            }
        }
    }
    let mut out = vec![rational::zero(); n];
    out[k] = rational::one();
    for (row, &j) in a.iter().zip(&idx) {
        out[j] = row[r].clone();
    }
    out.iter().all(|v| v.is_positive()).then_some(out)
}

/// Inverse of `f` restricted to the monotone cell `[a, b]`, in floats.
struct CellInverse {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl CellInverse {
    fn new(f: &PLMap, a: &Rational, b: &Rational) -> Self {
        let mut xs = vec![to_f64(a)];
        let mut ys = vec![f.eval_f64(xs[0])];
        for (x, y) in f.dots().iter().zip(f.float_dots()) {
            if x.0 > *a && x.0 < *b {
                xs.push(y.0);
                ys.push(y.1);
            }
        }
        xs.push(to_f64(b));
        ys.push(f.eval_f64(*xs.last().unwrap()));
        if ys[0] > ys[ys.len() - 1] {
            xs.reverse();
            ys.reverse();
        }
        Self { xs, ys }
    }

    fn eval(&self, y: f64) -> f64 {
        let n = self.ys.len();
        let i = self.ys.partition_point(|&v| v <= y).clamp(1, n - 1);
        let (y0, y1) = (self.ys[i - 1], self.ys[i]);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        if y1 <= y0 {
            return x1;
        }
        x0 + (x1 - x0) * (y - y0) / (y1 - y0)
    }
}

fn interp(nodes: &BTreeMap<u64, f64>, u: f64) -> f64 {
    let key = u.to_bits();
    let below = nodes.range(..=key).next_back();
    let above = nodes.range(key..).next();
    match (below, above) {
        (Some((&k0, &x0)), Some((&k1, &x1))) if k1 > k0 => {
            let (u0, u1) = (f64::from_bits(k0), f64::from_bits(k1));
            x0 + (x1 - x0) * (u - u0) / (u1 - u0)
        }
        (Some((_, &x)), _) | (_, Some((_, &x))) => x,
        _ => u,
    }
}

/// Constant slope model of a map with a finite Markov partition.
///
/// Cell lengths come from the Perron eigenvector of the cover matrix (exact
/// when the Perron root is an integer, rounded to doubles otherwise). The
/// conjugacy is built on level sets: each round pulls the known nodes back
/// through every branch of the model and of `f`, until the largest change at
/// a new node falls below `tol` or the node cap is reached.
pub fn markov_constant_slope(f: &PLMap, max_steps: usize, tol: f64) -> Result<Option<CSModel>, ParryError> {
    let Some(md) = markov_detect(f, max_steps) else {
        return Ok(None);
    };
    build(f, &md, tol).map(Some)
}

fn build(f: &PLMap, md: &MarkovData, tol: f64) -> Result<CSModel, ParryError> {
    let m = &md.matrix;
    if !irreducible(m) {
        return Err(ParryError::Reducible);
    }
    let estimate = perron_root(m, &Rational::new(1.into(), num_bigint::BigInt::from(1u64) << 60))?;
    let (lo, hi) = estimate.lambda_bracket.clone().expect("markov bracket");
    let exact = lo == hi;
    let mid = (&lo + &hi) / rational::int(2);
    let lengths = (0..m.len())
        .find_map(|k| eigenvector(m, &mid, k))
        .ok_or(ParryError::Reducible)?;
    let lengths: Vec<Rational> = if exact { lengths } else { lengths.iter().map(|v| from_f64(to_f64(v))).collect() };
    let total: Rational = lengths.iter().sum();
    let mut q = vec![rational::zero()];
    for l in &lengths {
        let next = q.last().unwrap() + l / &total;
        q.push(next);
    }
    *q.last_mut().unwrap() = rational::one();
    let p = &md.partition;
    let mut dots = Vec::with_capacity(p.len());
    for (i, x) in p.iter().enumerate() {
        let y = f.eval(x)?;
        let j = p.binary_search(&y).expect("partition is forward invariant");
        dots.push((q[i].clone(), q[j].clone()));
    }
    let model = PLMap::connect_the_dots(dots.clone())?;

    let qf: Vec<f64> = q.iter().map(to_f64).collect();
    let vf: Vec<f64> = dots.iter().map(|d| to_f64(&d.1)).collect();
    let inverses: Vec<CellInverse> = p.windows(2).map(|w| CellInverse::new(f, &w[0], &w[1])).collect();
    let mut nodes: BTreeMap<u64, f64> = q.iter().zip(p).map(|(u, x)| (to_f64(u).to_bits(), to_f64(x))).collect();
    let mut rounds = 0;
    let mut converged = false;
    while nodes.len() < MAX_NODES {
        rounds += 1;
        let mut fresh: Vec<(f64, f64)> = Vec::new();
        for i in 0..qf.len() - 1 {
            let (v0, v1) = (vf[i], vf[i + 1]);
            let (lo, hi) = if v0 < v1 { (v0, v1) } else { (v1, v0) };
            for (&k, &x) in nodes.range(lo.to_bits()..=hi.to_bits()) {
                let u = f64::from_bits(k);
                let t = (u - v0) / (v1 - v0);
                let u_new = qf[i] + t * (qf[i + 1] - qf[i]);
                fresh.push((u_new, inverses[i].eval(x)));
            }
        }
        let mut change: f64 = 0.0;
        let mut added = 0;
        for (u, x) in &fresh {
            if !nodes.contains_key(&u.to_bits()) {
                change = change.max((interp(&nodes, *u) - x).abs());
                added += 1;
            }
        }
        for (u, x) in fresh {
            nodes.entry(u.to_bits()).or_insert(x);
        }
        if added == 0 || change < tol {
            converged = true;
            break;
        }
    }
    let mut xs = Vec::with_capacity(nodes.len());
    let mut ys = Vec::with_capacity(nodes.len());
    let mut top: f64 = 0.0;
    for (k, x) in nodes {
        top = top.max(x.clamp(0.0, 1.0));
        xs.push(f64::from_bits(k));
        ys.push(top);
    }
    ys[0] = 0.0;
    *ys.last_mut().unwrap() = 1.0;
    let psi = MonotoneCDF::from_floats(xs, ys)?;
    let mut cs = CSModel {
        model,
        psi,
        lambda: estimate,
        conjugacy_residual: 0.0,
        slope_residual: 0.0,
        min_psi_slope: 0.0,
        route: Route::Markov,
        iterations: rounds,
        decimation_error: 0.0,
        converged,
        transitivity_verified: false,
    };
    let report = verify_conjugacy(f, &cs);
    apply_report(&mut cs, &report);
    Ok(cs)
}
