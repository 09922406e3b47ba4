//! Exact piecewise-linear maps of `[0, 1]` into itself.
//!
//! A [`PLMap`] is given by its "dots": the graph is the polygon through the
//! dots, so the map is continuous by construction. Dots are kept in canonical
//! form (no three consecutive dots collinear), which makes laps and critical
//! points well defined without any tolerance.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::RationalInterval;
use crate::rational::{self, format_rational, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("a map needs at least two dots, got {0}")]
    TooFewDots(usize),
    #[error("dot {index}: x = {x} does not increase strictly")]
    NotIncreasing { index: usize, x: String },
    #[error("dots must span the domain [{lo}, {hi}]; got first x = {first}, last x = {last}")]
    DomainMismatch { lo: String, hi: String, first: String, last: String },
    #[error("dot {index} ({x}, {y}): y lies outside the domain")]
    ValueOutOfRange { index: usize, x: String, y: String },
    #[error("x = {0} lies outside [0, 1]")]
    OutOfDomain(String),
    #[error("not piecewise strictly monotone: zero slope on [{lo}, {hi}]")]
    ZeroSlope { lo: String, hi: String },
    #[error("lap budget {budget} exceeded at iterate {iterate} ({laps} laps)")]
    LapBudget { budget: usize, iterate: usize, laps: usize },
    #[error("segment of fixed points on [{lo}, {hi}]")]
    DiagonalSegment { lo: String, hi: String },
    #[error("critical values have total variation {sum}, but the slope is {lambda}")]
    SlopeSumMismatch { sum: String, lambda: String },
    #[error("critical values do not alternate at index {0}")]
    Alternation(usize),
    #[error("slope must be positive, got {0}")]
    NonPositiveSlope(String),
    #[error("map is not an increasing homeomorphism")]
    NotHomeomorphism,
}

/// A maximal interval of monotonicity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lap {
    pub lo: Rational,
    pub hi: Rational,
    pub increasing: bool,
}

impl Lap {
    pub fn interval(&self) -> RationalInterval {
        RationalInterval::closed(self.lo.clone(), self.hi.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalData {
    /// `0`, the turning points, and `1`, in increasing order.
    #[serde(with = "rational::serde_rationals")]
    pub points: Vec<Rational>,
    pub modality: usize,
}

/// Result of breadth-first preimage expansion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreimageCounts {
    /// `counts[k] = #f^{-k}(y)`.
    pub counts: Vec<usize>,
    /// False when the node budget stopped the expansion early.
    pub complete: bool,
}

#[derive(Clone)]
pub struct PLMap {
    dots: Vec<(Rational, Rational)>,
    fdots: Vec<(f64, f64)>,
    /// Length of the original domain when the map was rescaled from `[0, L]`.
    scale: Rational,
}

impl PartialEq for PLMap {
    fn eq(&self, other: &Self) -> bool {
        self.dots == other.dots
    }
}

impl Eq for PLMap {}

impl fmt::Debug for PLMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PLMap[")?;
        for (i, (x, y)) in self.dots.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {})", format_rational(x), format_rational(y))?;
        }
        write!(f, "]")
    }
}

fn collinear(a: &(Rational, Rational), b: &(Rational, Rational), c: &(Rational, Rational)) -> bool {
    (&b.0 - &a.0) * (&c.1 - &a.1) == (&c.0 - &a.0) * (&b.1 - &a.1)
}

fn canonicalize(dots: Vec<(Rational, Rational)>) -> Vec<(Rational, Rational)> {
    let mut out: Vec<(Rational, Rational)> = Vec::with_capacity(dots.len());
    for d in dots {
        while out.len() >= 2 && collinear(&out[out.len() - 2], &out[out.len() - 1], &d) {
            out.pop();
        }
        out.push(d);
    }
    out
}

fn lerp(x0: &Rational, y0: &Rational, x1: &Rational, y1: &Rational, x: &Rational) -> Rational {
    if x == x0 {
        return y0.clone();
    }
    if x == x1 {
        return y1.clone();
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

impl PLMap {
    /// Builds the map through `dots` on `[0, 1]`.
    pub fn connect_the_dots(dots: Vec<(Rational, Rational)>) -> Result<Self, MapError> {
        Self::from_domain(dots, rational::zero(), rational::one())
    }

    /// Builds a map given on `[lo, hi]` (both coordinates) and rescales it affinely to `[0, 1]`.
    pub fn from_domain(dots: Vec<(Rational, Rational)>, lo: Rational, hi: Rational) -> Result<Self, MapError> {
        if dots.len() < 2 {
            return Err(MapError::TooFewDots(dots.len()));
        }
        for i in 1..dots.len() {
            if dots[i].0 <= dots[i - 1].0 {
                return Err(MapError::NotIncreasing { index: i, x: format_rational(&dots[i].0) });
            }
        }
        let first = &dots[0].0;
        let last = &dots[dots.len() - 1].0;
        if first != &lo || last != &hi {
            return Err(MapError::DomainMismatch {
                lo: format_rational(&lo),
                hi: format_rational(&hi),
                first: format_rational(first),
                last: format_rational(last),
            });
        }
        for (i, (x, y)) in dots.iter().enumerate() {
            if y < &lo || y > &hi {
                return Err(MapError::ValueOutOfRange {
                    index: i,
                    x: format_rational(x),
                    y: format_rational(y),
                });
            }
        }
        let width = &hi - &lo;
        let scaled = dots
            .into_iter()
            .map(|(x, y)| ((x - &lo) / &width, (y - &lo) / &width))
            .collect();
        let mut map = Self::from_canonical(canonicalize(scaled));
        map.scale = width;
        Ok(map)
    }

    fn from_canonical(dots: Vec<(Rational, Rational)>) -> Self {
        let fdots = dots.iter().map(|(x, y)| (to_f64(x), to_f64(y))).collect();
        Self { dots, fdots, scale: rational::one() }
    }

    pub fn identity() -> Self {
        Self::from_canonical(vec![(rational::zero(), rational::zero()), (rational::one(), rational::one())])
    }

    pub fn dots(&self) -> &[(Rational, Rational)] {
        &self.dots
    }

    pub fn float_dots(&self) -> &[(f64, f64)] {
        &self.fdots
    }

    /// Original domain length (1 unless built with [`PLMap::from_domain`]).
    pub fn scale(&self) -> &Rational {
        &self.scale
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = &Rational> {
        self.dots.iter().map(|(x, _)| x)
    }

    /// Index of the linear piece `[dots[i], dots[i+1]]` containing `x` (the left one at a dot).
    fn piece_index(&self, x: &Rational) -> usize {
        let i = self.dots.partition_point(|(dx, _)| dx <= x);
        i.saturating_sub(1).min(self.dots.len() - 2)
    }

    fn value(&self, x: &Rational) -> Rational {
        let i = self.piece_index(x);
        let (x0, y0) = &self.dots[i];
        let (x1, y1) = &self.dots[i + 1];
        lerp(x0, y0, x1, y1, x)
    }

    pub fn eval(&self, x: &Rational) -> Result<Rational, MapError> {
        if x < &rational::zero() || x > &rational::one() {
            return Err(MapError::OutOfDomain(format_rational(x)));
        }
        Ok(self.value(x))
    }

    /// Float evaluation; `x` is clamped to `[0, 1]`.
    pub fn eval_f64(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let d = &self.fdots;
        let i = d.partition_point(|(dx, _)| *dx <= x).saturating_sub(1).min(d.len() - 2);
        let (x0, y0) = d[i];
        let (x1, y1) = d[i + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn slopes(&self) -> Vec<Rational> {
        self.dots
            .windows(2)
            .map(|w| (&w[1].1 - &w[0].1) / (&w[1].0 - &w[0].0))
            .collect()
    }

    /// Maximal laps of monotonicity.
    pub fn laps(&self) -> Result<Vec<Lap>, MapError> {
        let mut laps: Vec<Lap> = Vec::new();
        for w in self.dots.windows(2) {
            let (x0, y0) = &w[0];
            let (x1, y1) = &w[1];
            if y0 == y1 {
                return Err(MapError::ZeroSlope { lo: format_rational(x0), hi: format_rational(x1) });
            }
            let increasing = y1 > y0;
            match laps.last_mut() {
                Some(lap) if lap.increasing == increasing => lap.hi = x1.clone(),
                _ => laps.push(Lap { lo: x0.clone(), hi: x1.clone(), increasing }),
            }
        }
        Ok(laps)
    }

    pub fn lap_count(&self) -> Result<usize, MapError> {
        Ok(self.laps()?.len())
    }

    pub fn critical_data(&self) -> Result<CriticalData, MapError> {
        let laps = self.laps()?;
        let mut points = vec![rational::zero()];
        points.extend(laps.iter().skip(1).map(|l| l.lo.clone()));
        points.push(rational::one());
        let modality = points.len() - 2;
        Ok(CriticalData { points, modality })
    }

    pub fn modality(&self) -> Result<usize, MapError> {
        Ok(self.critical_data()?.modality)
    }

    /// Interior turning points.
    pub fn interior_critical_points(&self) -> Result<Vec<Rational>, MapError> {
        let mut pts = self.critical_data()?.points;
        pts.pop();
        pts.remove(0);
        Ok(pts)
    }

    /// The composition `self ∘ inner`.
    pub fn compose(&self, inner: &PLMap) -> PLMap {
        let mut xs: BTreeSet<Rational> = inner.breakpoints().cloned().collect();
        for w in inner.dots.windows(2) {
            let (x0, y0) = &w[0];
            let (x1, y1) = &w[1];
            if y0 == y1 {
                continue;
            }
            let (lo, hi) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
            for b in self.breakpoints() {
                if b > lo && b < hi {
                    xs.insert(x0 + (b - y0) * (x1 - x0) / (y1 - y0));
                }
            }
        }
        let dots = xs
            .into_iter()
            .map(|x| {
                let y = self.value(&inner.value(&x));
                (x, y)
            })
            .collect();
        PLMap::from_canonical(canonicalize(dots))
    }

    /// `f^n`, refusing to build an iterate with more than `lap_budget` laps.
    pub fn iterate(&self, n: usize, lap_budget: usize) -> Result<PLMap, MapError> {
        assert!(n >= 1, "iterate needs n >= 1");
        let mut acc = self.clone();
        for k in 2..=n {
            acc = self.compose(&acc);
            let laps = acc.count_laps_lenient();
            if laps > lap_budget {
                return Err(MapError::LapBudget { budget: lap_budget, iterate: k, laps });
            }
        }
        Ok(acc)
    }

    /// Lap count that treats flat pieces as their own laps instead of failing.
    fn count_laps_lenient(&self) -> usize {
        let mut count = 0;
        let mut last = None;
        for w in self.dots.windows(2) {
            let dir = w[1].1.cmp(&w[0].1);
            if last != Some(dir) {
                count += 1;
                last = Some(dir);
            }
        }
        count
    }

    /// Exact image of an interval, with open ends propagated.
    ///
    /// An image endpoint is open iff it is attained only at open ends of `interval`.
    pub fn image_interval(&self, interval: &RationalInterval) -> RationalInterval {
        if interval.is_empty() {
            return RationalInterval::empty();
        }
        let mut candidates: Vec<(Rational, bool)> = vec![
            (self.value(&interval.lo), interval.lo_open),
            (self.value(&interval.hi), interval.hi_open),
        ];
        if interval.lo < interval.hi {
            candidates.push((self.value(&interval.midpoint()), false));
            for x in self.breakpoints() {
                if interval.interior_contains(x) {
                    candidates.push((self.value(x), false));
                }
            }
        }
        let lo = candidates.iter().map(|(v, _)| v).min().unwrap().clone();
        let hi = candidates.iter().map(|(v, _)| v).max().unwrap().clone();
        let lo_open = !candidates.iter().any(|(v, open)| v == &lo && !open);
        let hi_open = !candidates.iter().any(|(v, open)| v == &hi && !open);
        RationalInterval::new(lo, hi, lo_open, hi_open)
    }

    /// Image of the preimage under the branch of `self` on `lap`:
    /// the points of `lap` mapped into `target`. `lap` must lie within one lap.
    pub fn branch_preimage(&self, lap: &RationalInterval, target: &RationalInterval) -> RationalInterval {
        if lap.is_empty() || target.is_empty() {
            return RationalInterval::empty();
        }
        let a = &lap.lo;
        let b = &lap.hi;
        let fa = self.value(a);
        let fb = self.value(b);
        if fa == fb {
            return if target.contains(&fa) { lap.clone() } else { RationalInterval::empty() };
        }
        let increasing = fb > fa;
        let inv = |y: &Rational| -> Rational { self.branch_inverse(a, b, y) };
        // Image of the branch, with flags inherited from the lap ends.
        let image = if increasing {
            RationalInterval::new(fa.clone(), fb.clone(), lap.lo_open, lap.hi_open)
        } else {
            RationalInterval::new(fb.clone(), fa.clone(), lap.hi_open, lap.lo_open)
        };
        let hit = image.intersect(target);
        if hit.is_empty() {
            return RationalInterval::empty();
        }
        if increasing {
            RationalInterval::new(inv(&hit.lo), inv(&hit.hi), hit.lo_open, hit.hi_open)
        } else {
            RationalInterval::new(inv(&hit.hi), inv(&hit.lo), hit.hi_open, hit.lo_open)
        }
    }

    /// Solves `self(x) = y` for `x` in `[a, b]`, assuming `self` is strictly monotone there
    /// and `y` lies between `self(a)` and `self(b)`.
    pub fn branch_inverse(&self, a: &Rational, b: &Rational, y: &Rational) -> Rational {
        let i0 = self.piece_index(a);
        let mut i = i0;
        loop {
            let (x0, y0) = &self.dots[i];
            let (x1, y1) = &self.dots[i + 1];
            let (lo, hi) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
            if y >= lo && y <= hi && x1 > a {
                if y0 == y1 {
                    return rational::max(x0, a);
                }
                return x0 + (y - y0) * (x1 - x0) / (y1 - y0);
            }
            i += 1;
            if i + 1 >= self.dots.len() || &self.dots[i].0 >= b {
                // Out of range: clamp to the nearer end.
                let fa = self.value(a);
                return if (y - &fa).abs() <= (y - self.value(b)).abs() { a.clone() } else { b.clone() };
            }
        }
    }

    /// All exact solutions of `self(x) = y`, sorted and deduplicated.
    ///
    /// A flat piece at height `y` contributes only its two endpoints.
    pub fn preimage_point(&self, y: &Rational) -> Vec<Rational> {
        let mut out: Vec<Rational> = Vec::new();
        for w in self.dots.windows(2) {
            let (x0, y0) = &w[0];
            let (x1, y1) = &w[1];
            let (lo, hi) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
            if y < lo || y > hi {
                continue;
            }
            let candidates: Vec<Rational> = if y0 == y1 {
                vec![x0.clone(), x1.clone()]
            } else {
                vec![x0 + (y - y0) * (x1 - x0) / (y1 - y0)]
            };
            for x in candidates {
                if out.last() != Some(&x) {
                    out.push(x);
                }
            }
        }
        out
    }

    /// `#f^{-k}(y)` for `k = 0..=n_max`, by breadth-first exact expansion.
    pub fn preimage_counts(&self, y: &Rational, n_max: usize, node_budget: usize) -> Result<PreimageCounts, MapError> {
        if y < &rational::zero() || y > &rational::one() {
            return Err(MapError::OutOfDomain(format_rational(y)));
        }
        let mut level = vec![y.clone()];
        let mut counts = vec![1];
        for _ in 0..n_max {
            let mut next = Vec::new();
            for p in &level {
                next.extend(self.preimage_point(p));
                if next.len() > node_budget {
                    return Ok(PreimageCounts { counts, complete: false });
                }
            }
            // Preimages of distinct points are disjoint; only within-point duplicates exist,
            // and preimage_point already removed those.
            counts.push(next.len());
            level = next;
        }
        Ok(PreimageCounts { counts, complete: true })
    }

    /// Exact `C^0` distance `max |f - g|`.
    pub fn sup_distance(&self, other: &PLMap) -> Rational {
        let xs: BTreeSet<&Rational> = self.breakpoints().chain(other.breakpoints()).collect();
        xs.into_iter()
            .map(|x| (self.value(x) - other.value(x)).abs())
            .max()
            .unwrap_or_else(rational::zero)
    }

    /// Exact fixed points; a piece lying on the diagonal is an error.
    pub fn fixed_points(&self) -> Result<Vec<Rational>, MapError> {
        let mut out: Vec<Rational> = Vec::new();
        for w in self.dots.windows(2) {
            let (x0, y0) = &w[0];
            let (x1, y1) = &w[1];
            let g0 = y0 - x0;
            let g1 = y1 - x1;
            if g0.is_zero() && g1.is_zero() {
                return Err(MapError::DiagonalSegment { lo: format_rational(x0), hi: format_rational(x1) });
            }
            if (g0.is_negative() && g1.is_negative()) || (g0.is_positive() && g1.is_positive()) {
                continue;
            }
            // g is linear and changes sign (or vanishes at an end) on [x0, x1].
            let x = x0 + &g0 * (x1 - x0) / (&g0 - &g1);
            if out.last() != Some(&x) {
                out.push(x);
            }
        }
        Ok(out)
    }

    /// Common absolute slope, if every piece's `|slope|` is within `tol` of the first.
    pub fn is_constant_slope(&self, tol: &Rational) -> Option<Rational> {
        let slopes: Vec<Rational> = self.slopes().into_iter().map(|s| s.abs()).collect();
        let first = slopes[0].clone();
        if first.is_zero() {
            return None;
        }
        slopes.iter().all(|s| (s - &first).abs() <= *tol).then_some(first)
    }

    /// The map with constant slope `lambda` whose critical values are `values`.
    pub fn constant_slope_from_critical_values(lambda: &Rational, values: &[Rational]) -> Result<PLMap, MapError> {
        if !lambda.is_positive() {
            return Err(MapError::NonPositiveSlope(format_rational(lambda)));
        }
        if values.len() < 2 {
            return Err(MapError::TooFewDots(values.len()));
        }
        for (i, v) in values.iter().enumerate() {
            if v < &rational::zero() || v > &rational::one() {
                return Err(MapError::ValueOutOfRange {
                    index: i,
                    x: "?".into(),
                    y: format_rational(v),
                });
            }
        }
        for i in 0..values.len() - 1 {
            if values[i] == values[i + 1] {
                return Err(MapError::Alternation(i + 1));
            }
        }
        for i in 1..values.len() - 1 {
            let left = &values[i] - &values[i - 1];
            let right = &values[i + 1] - &values[i];
            if left.is_positive() == right.is_positive() {
                return Err(MapError::Alternation(i));
            }
        }
        let sum: Rational = values.windows(2).map(|w| (&w[1] - &w[0]).abs()).sum();
        if &sum != lambda {
            return Err(MapError::SlopeSumMismatch { sum: format_rational(&sum), lambda: format_rational(lambda) });
        }
        let mut x = rational::zero();
        let mut dots = vec![(x.clone(), values[0].clone())];
        for w in values.windows(2) {
            x += (&w[1] - &w[0]).abs() / lambda;
            dots.push((x.clone(), w[1].clone()));
        }
        debug_assert_eq!(x, rational::one());
        Ok(PLMap::from_canonical(dots))
    }

    pub fn is_increasing_homeomorphism(&self) -> bool {
        self.dots[0].1.is_zero()
            && self.dots[self.dots.len() - 1].1 == rational::one()
            && self.dots.windows(2).all(|w| w[1].1 > w[0].1)
    }

    /// Inverse of an increasing homeomorphism.
    pub fn inverse(&self) -> Result<PLMap, MapError> {
        if !self.is_increasing_homeomorphism() {
            return Err(MapError::NotHomeomorphism);
        }
        Ok(PLMap::from_canonical(self.dots.iter().map(|(x, y)| (y.clone(), x.clone())).collect()))
    }
}
