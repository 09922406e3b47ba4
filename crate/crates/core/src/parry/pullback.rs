use num_traits::Signed;

use crate::map::{MapError, PLMap};
use crate::rational::{self, Rational};

use super::cdf::MonotoneCDF;

/// Float geometry of one lap: its linear pieces `(x0, y0, x1, y1)`.
#[derive(Debug, Clone)]
pub(crate) struct LapGeometry {
    pieces: Vec<(f64, f64, f64, f64)>,
}

pub(crate) fn lap_geometry(f: &PLMap) -> Result<Vec<LapGeometry>, MapError> {
    let laps = f.laps()?;
    let dots = f.float_dots();
    let xs: Vec<&Rational> = f.breakpoints().collect();
    Ok(laps
        .iter()
        .map(|lap| {
            let start = xs.partition_point(|x| *x < &lap.lo);
            let end = xs.partition_point(|x| *x <= &lap.hi);
            let pieces = dots[start..end]
                .windows(2)
                .map(|w| (w[0].0, w[0].1, w[1].0, w[1].1))
                .collect();
            LapGeometry { pieces }
        })
        .collect())
}

/// Appends a dot, keeping `x` strictly and `y` weakly increasing.
fn push(xs: &mut Vec<f64>, ys: &mut Vec<f64>, x: f64, y: f64) {
    match xs.last() {
        Some(&last) if x <= last => {
            let top = ys.last_mut().unwrap();
            *top = top.max(y);
        }
        _ => {
            let y = ys.last().map_or(y, |&p| y.max(p));
            xs.push(x);
            ys.push(y);
        }
    }
}

/// Unnormalized pullback in floats: dots of `T F` and the norm `(T F)(1)`.
///
/// The dots sit at the breakpoints of `f` and at the lap-wise preimages of the
/// breakpoints of `F`, where `T F` is linear in between.
pub(crate) fn pullback_float(laps: &[LapGeometry], cdf: &MonotoneCDF) -> (Vec<f64>, Vec<f64>, f64) {
    let fx = cdf.xs();
    let fy = cdf.ys();
    let cap = laps.iter().map(|l| l.pieces.len()).sum::<usize>() + laps.len() * fx.len() + 1;
    let mut xs = Vec::with_capacity(cap);
    let mut ys = Vec::with_capacity(cap);
    let mut acc = 0.0;
    for lap in laps {
        let first = lap.pieces[0];
        let last = lap.pieces[lap.pieces.len() - 1];
        let base = cdf.eval(first.1);
        for &(x0, y0, x1, y1) in &lap.pieces {
            push(&mut xs, &mut ys, x0, acc + (cdf.eval(y0) - base).abs());
            let scale = (x1 - x0) / (y1 - y0);
            if y1 > y0 {
                let a = fx.partition_point(|&v| v <= y0);
                let b = fx.partition_point(|&v| v < y1);
                for k in a..b {
                    push(&mut xs, &mut ys, x0 + (fx[k] - y0) * scale, acc + (fy[k] - base).abs());
                }
            } else {
                let a = fx.partition_point(|&v| v <= y1);
                let b = fx.partition_point(|&v| v < y0);
                for k in (a..b).rev() {
                    push(&mut xs, &mut ys, x0 + (fx[k] - y0) * scale, acc + (fy[k] - base).abs());
                }
            }
        }
        acc += (cdf.eval(last.3) - base).abs();
    }
    push(&mut xs, &mut ys, 1.0, acc);
    (xs, ys, acc)
}

/// Exact pullback of an exact distribution function; returns dots and norm.
pub fn pullback_exact(f: &PLMap, cdf: &MonotoneCDF) -> Result<(Vec<(Rational, Rational)>, Rational), MapError> {
    let dots = cdf.exact_dots().expect("exact distribution function");
    let eval = |y: &Rational| cdf.eval_exact(y).unwrap();
    let fdots = f.dots();
    let mut out: Vec<(Rational, Rational)> = Vec::new();
    let mut push = |x: Rational, y: Rational| {
        if out.last().is_none_or(|(lx, _)| &x > lx) {
            out.push((x, y));
        }
    };
    let mut acc = rational::zero();
    let mut i = 0;
    for lap in f.laps()? {
        let base = eval(&f.eval(&lap.lo)?);
        while i + 1 < fdots.len() && fdots[i].0 < lap.hi {
            let (x0, y0) = &fdots[i];
            let (x1, y1) = &fdots[i + 1];
            push(x0.clone(), &acc + (eval(y0) - &base).abs());
            let mut inner: Vec<&(Rational, Rational)> =
                dots.iter().filter(|(v, _)| (v > y0 && v < y1) || (v > y1 && v < y0)).collect();
            if y1 < y0 {
                inner.reverse();
            }
            for (v, w) in inner {
                let x = x0 + (v - y0) * (x1 - x0) / (y1 - y0);
                push(x, &acc + (w - &base).abs());
            }
            i += 1;
        }
        acc += (eval(&f.eval(&lap.hi)?) - &base).abs();
    }
    push(rational::one(), acc.clone());
    let scaled = out.into_iter().map(|(x, y)| (x, y / &acc)).collect();
    Ok((scaled, acc))
}
