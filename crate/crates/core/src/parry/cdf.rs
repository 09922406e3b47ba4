use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::map::PLMap;
use crate::rational::{self, format_f64, format_rational, from_f64, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CdfError {
    #[error("a distribution function needs at least two dots")]
    TooFewDots,
    #[error("dots must start at (0, 0) and end at (1, 1)")]
    Endpoints,
    #[error("dot {0} decreases")]
    NotMonotone(usize),
}

/// A nondecreasing piecewise-linear surjection of `[0, 1]` onto itself.
///
/// Float dots are always present; exact rational dots are kept alongside when
/// the function was built exactly. Dots may repeat an `x` (a jump) or a `y`
/// (a flat spot); either one rules out being a homeomorphism.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCDF {
    xs: Vec<f64>,
    ys: Vec<f64>,
    exact: Option<Vec<(Rational, Rational)>>,
}

impl MonotoneCDF {
    pub fn identity() -> Self {
        Self::from_exact(vec![(rational::zero(), rational::zero()), (rational::one(), rational::one())]).unwrap()
    }

    fn check<T: PartialOrd>(xs: &[T], ys: &[T], zero: &T, one: &T) -> Result<(), CdfError> {
        if xs.len() < 2 {
            return Err(CdfError::TooFewDots);
        }
        let last = xs.len() - 1;
        if xs[0] != *zero || ys[0] != *zero || xs[last] != *one || ys[last] != *one {
            return Err(CdfError::Endpoints);
        }
        for i in 1..xs.len() {
            if xs[i] < xs[i - 1] || ys[i] < ys[i - 1] {
                return Err(CdfError::NotMonotone(i));
            }
        }
        Ok(())
    }

    pub fn from_exact(dots: Vec<(Rational, Rational)>) -> Result<Self, CdfError> {
        let xs: Vec<Rational> = dots.iter().map(|d| d.0.clone()).collect();
        let ys: Vec<Rational> = dots.iter().map(|d| d.1.clone()).collect();
        Self::check(&xs, &ys, &rational::zero(), &rational::one())?;
        Ok(Self {
            xs: xs.iter().map(to_f64).collect(),
            ys: ys.iter().map(to_f64).collect(),
            exact: Some(dots),
        })
    }

    pub fn from_floats(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, CdfError> {
        if xs.len() != ys.len() {
            return Err(CdfError::TooFewDots);
        }
        Self::check(&xs, &ys, &0.0, &1.0)?;
        Ok(Self { xs, ys, exact: None })
    }

    /// An increasing homeomorphism given as a [`PLMap`].
    pub fn from_plmap(f: &PLMap) -> Result<Self, CdfError> {
        Self::from_exact(f.dots().to_vec())
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn exact_dots(&self) -> Option<&[(Rational, Rational)]> {
        self.exact.as_deref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let n = self.xs.len();
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (y0, y1) = (self.ys[i - 1], self.ys[i]);
        if x1 <= x0 {
            return y1;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn eval_exact(&self, x: &Rational) -> Option<Rational> {
        let dots = self.exact.as_ref()?;
        let n = dots.len();
        let i = dots.partition_point(|(v, _)| v <= x).clamp(1, n - 1);
        let (x0, y0) = &dots[i - 1];
        let (x1, y1) = &dots[i];
        if x1 <= x0 {
            return Some(y1.clone());
        }
        Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }

    /// Pointwise mean on the union of the dots.
    pub fn average(&self, other: &Self) -> Self {
        let mut xs: Vec<f64> = self.xs.iter().chain(&other.xs).copied().collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let ys = xs.iter().map(|&x| 0.5 * (self.eval(x) + other.eval(x))).collect();
        Self { xs, ys, exact: None }
    }

    /// Reflection in the diagonal; the inverse when this is a homeomorphism.
    pub fn inverse(&self) -> Self {
        Self {
            xs: self.ys.clone(),
            ys: self.xs.clone(),
            exact: self.exact.as_ref().map(|d| d.iter().map(|(x, y)| (y.clone(), x.clone())).collect()),
        }
    }

    /// Smallest slope over segments of positive width (0 for a flat spot).
    pub fn min_slope(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .filter(|(x, _)| x[1] > x[0])
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn has_jump(&self) -> bool {
        self.xs.windows(2).zip(self.ys.windows(2)).any(|(x, y)| x[1] == x[0] && y[1] > y[0])
    }

    pub fn is_homeomorphism(&self) -> bool {
        self.min_slope() > 0.0 && !self.has_jump()
    }

    /// `max |F - G|`, attained at a breakpoint of one of them.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let a = self.xs.iter().map(|&x| (self.eval(x) - other.eval(x)).abs());
        let b = other.xs.iter().map(|&x| (self.eval(x) - other.eval(x)).abs());
        a.chain(b).fold(0.0, f64::max)
    }

    /// Exact form as a [`PLMap`], when exact and strictly increasing in `x`.
    pub fn to_plmap(&self) -> Option<PLMap> {
        let dots = self.exact.as_ref()?;
        PLMap::connect_the_dots(dots.clone()).ok()
    }

    /// Rational dots, from the exact form or converted from the floats.
    pub fn rational_dots(&self) -> Vec<(Rational, Rational)> {
        match &self.exact {
            Some(d) => d.clone(),
            None => self.xs.iter().zip(&self.ys).map(|(&x, &y)| (from_f64(x), from_f64(y))).collect(),
        }
    }
}

impl Serialize for MonotoneCDF {
    /// Exact dots as `"p/q"` strings, float dots as 17-digit decimal strings.
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.xs.len()))?;
        match &self.exact {
            Some(dots) => {
                for (x, y) in dots {
                    seq.serialize_element(&[format_rational(x), format_rational(y)])?;
                }
            }
            None => {
                for (x, y) in self.xs.iter().zip(&self.ys) {
                    seq.serialize_element(&[format_f64(*x), format_f64(*y)])?;
                }
            }
        }
        seq.end()
    }
}

/// Greedy decimation keeping every dropped dot within `eps` of the result.
///
/// For each anchor the admissible slopes form a cone narrowed by the
/// `±eps` band of every skipped dot; a dot is kept when the next one falls
/// outside the cone. `xs` must be strictly increasing.
pub fn decimate(xs: &[f64], ys: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len();
    if n <= 2 {
        return (xs.to_vec(), ys.to_vec());
    }
    let mut keep = vec![0usize];
    let mut anchor = 0;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 1..n {
        let s = (ys[k] - ys[anchor]) / (xs[k] - xs[anchor]);
        if s < lo || s > hi {
            anchor = k - 1;
            keep.push(anchor);
            lo = f64::NEG_INFINITY;
            hi = f64::INFINITY;
        }
        let dx = xs[k] - xs[anchor];
        lo = lo.max((ys[k] - eps - ys[anchor]) / dx);
        hi = hi.min((ys[k] + eps - ys[anchor]) / dx);
    }
    keep.push(n - 1);
    keep.dedup();
    (keep.iter().map(|&i| xs[i]).collect(), keep.iter().map(|&i| ys[i]).collect())
}

/// One row of a flatness table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlatnessRow {
    pub epsilon: f64,
    pub delta: f64,
}

/// `δ(ε) = min_{x} F(x + ε) - F(x)` over `x ∈ [0, 1 - ε]`.
///
/// The difference is piecewise linear in `x` with breaks where `x` or `x + ε`
/// is a breakpoint, so the minimum is taken over those points. Exact
/// arithmetic is used when `F` is exact. `δ(ε) = 0` iff `F` is constant on some
/// interval of length `ε`.
pub fn flatness_diagnostics(cdf: &MonotoneCDF, eps_list: &[f64]) -> Vec<FlatnessRow> {
    eps_list
        .iter()
        .map(|&epsilon| {
            let delta = if epsilon > 1.0 {
                f64::INFINITY
            } else if let Some(dots) = cdf.exact_dots() {
                let e = from_f64(epsilon);
                let top = rational::one() - &e;
                dots.iter()
                    .flat_map(|(x, _)| [x.clone(), x - &e])
                    .filter(|x| x >= &rational::zero() && x <= &top)
                    .map(|x| cdf.eval_exact(&(&x + &e)).unwrap() - cdf.eval_exact(&x).unwrap())
                    .min()
                    .map(|d| to_f64(&d))
                    .unwrap_or(f64::INFINITY)
            } else {
                let top = 1.0 - epsilon;
                cdf.xs()
                    .iter()
                    .flat_map(|&x| [x, x - epsilon])
                    .filter(|&x| (0.0..=top).contains(&x))
                    .map(|x| (cdf.eval(x + epsilon) - cdf.eval(x)).max(0.0))
                    .fold(f64::INFINITY, f64::min)
            };
            FlatnessRow { epsilon, delta }
        })
        .collect()
}
