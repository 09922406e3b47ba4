use std::collections::BTreeSet;

use serde::Serialize;

use super::EntropyError;
use crate::interval::RationalInterval;
use crate::map::{Lap, PLMap};
use crate::rational::{self, Rational};

/// Lap budget for the iterate a horseshoe is searched in.
const ITERATE_LAP_BUDGET: usize = 1 << 16;
/// Largest candidate endpoint set scanned per refinement depth.
const MAX_CANDIDATES: usize = 160;
const MAX_DEPTH: usize = 4;

/// `k` closed intervals with disjoint interiors, each mapped by `f^power`
/// over their convex hull.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Horseshoe {
    pub power: usize,
    pub intervals: Vec<RationalInterval>,
    /// True when the closed intervals are pairwise disjoint, not merely
    /// interior-disjoint.
    pub strictly_disjoint: bool,
}

impl Horseshoe {
    /// The certified bound `h(f) >= log(k) / power`.
    pub fn entropy_bound(&self) -> f64 {
        (self.intervals.len() as f64).ln() / self.power as f64
    }

    /// Exact re-check of the covering property against `f^power`.
    pub fn verify(&self, f_power: &PLMap) -> bool {
        let hull = self.intervals.iter().fold(RationalInterval::empty(), |h, j| h.hull(j));
        let ordered = self.intervals.windows(2).all(|w| w[0].hi <= w[1].lo);
        ordered && self.intervals.iter().all(|j| hull.is_subset(&f_power.image_interval(j)))
    }
}

fn candidates(f: &PLMap) -> Vec<Rational> {
    let mut pts: BTreeSet<Rational> = f.breakpoints().cloned().collect();
    pts.extend(f.dots().iter().map(|(_, y)| y.clone()));
    pts.into_iter().collect()
}

fn refine(points: &[Rational]) -> Vec<Rational> {
    let mut out = Vec::with_capacity(points.len() * 2);
    for w in points.windows(2) {
        out.push(w[0].clone());
        out.push((&w[0] + &w[1]) / rational::int(2));
    }
    out.extend(points.last().cloned());
    out
}

/// Closed preimages inside `hull` of the laps that cover it.
fn pullbacks(f: &PLMap, laps: &[Lap], p: &Rational, q: &Rational) -> Vec<RationalInterval> {
    let mut out = Vec::new();
    for lap in laps {
        let a = f.eval(&lap.lo).unwrap();
        let b = f.eval(&lap.hi).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if &lo > p || &hi < q {
            continue;
        }
        let u = f.branch_inverse(&lap.lo, &lap.hi, p);
        let v = f.branch_inverse(&lap.lo, &lap.hi, q);
        let (u, v) = if u <= v { (u, v) } else { (v, u) };
        if &u >= p && &v <= q {
            out.push(RationalInterval::closed(u, v));
        }
    }
    out
}

/// Greedy left-to-right choice of pairwise disjoint intervals.
fn disjoint_subset(js: &[RationalInterval], k: usize) -> Option<Vec<RationalInterval>> {
    let mut chosen: Vec<RationalInterval> = Vec::new();
    for j in js {
        if chosen.last().is_none_or(|c| c.hi < j.lo) {
            chosen.push(j.clone());
            if chosen.len() == k {
                return Some(chosen);
            }
        }
    }
    None
}

/// Tries to pull a shared endpoint apart by shrinking the hull slightly.
fn strict_nearby(f: &PLMap, laps: &[Lap], p: &Rational, q: &Rational, k: usize) -> Option<Vec<RationalInterval>> {
    for s in (4..=24).step_by(4) {
        let delta = (q - p) / Rational::from_integer(num_bigint::BigInt::from(1u64) << s);
        let zero = rational::zero();
        for (dl, dr) in [(&delta, &delta), (&delta, &zero), (&zero, &delta)] {
            let js = pullbacks(f, laps, &(p + dl), &(q - dr));
            if let Some(chosen) = disjoint_subset(&js, k) {
                return Some(chosen);
            }
        }
    }
    None
}

fn search_iterate(f: &PLMap, power: usize, k: usize) -> Option<Horseshoe> {
    let laps = f.laps().ok()?;
    if laps.len() < k {
        return None;
    }
    let mut points = candidates(f);
    let mut fallback: Option<Horseshoe> = None;
    for depth in 0..=MAX_DEPTH {
        if depth > 0 {
            let refined = refine(&points);
            if refined.len() > MAX_CANDIDATES {
                break;
            }
            points = refined;
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let (p, q) = (&points[i], &points[j]);
                let js = pullbacks(f, &laps, p, q);
                if js.len() < k {
                    continue;
                }
                let strict = disjoint_subset(&js, k).or_else(|| strict_nearby(f, &laps, p, q, k));
                if let Some(intervals) = strict {
                    let hs = Horseshoe { power, intervals, strictly_disjoint: true };
                    if hs.verify(f) {
                        return Some(hs);
                    }
                }
                if fallback.is_none() {
                    let hs = Horseshoe { power, intervals: js[..k].to_vec(), strictly_disjoint: false };
                    if hs.verify(f) {
                        fallback = Some(hs);
                    }
                }
            }
        }
    }
    fallback
}

/// Searches for a `k`-horseshoe of `f^power`, verified exactly.
///
/// Hull endpoints are drawn from breakpoints and breakpoint values of the
/// iterate, refined by midpoints. Pairwise disjoint intervals are preferred;
/// when the dynamics force neighbours to share an endpoint (as for the full
/// 3-horseshoe) interior-disjoint intervals are returned instead.
pub fn horseshoe_search(f: &PLMap, power: usize, k: usize) -> Result<Option<Horseshoe>, EntropyError> {
    assert!(power >= 1 && k >= 2, "horseshoe_search needs power >= 1 and k >= 2");
    let fp = match f.iterate(power, ITERATE_LAP_BUDGET) {
        Ok(g) => g,
        Err(crate::map::MapError::LapBudget { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    Ok(search_iterate(&fp, power, k))
}

/// Best horseshoe bound `max log(k)/p` over powers `p <= max_power`, scanning
/// unrefined candidate hulls only.
pub fn horseshoe_lower_bound(f: &PLMap, max_power: usize) -> Result<(f64, Option<Horseshoe>), EntropyError> {
    let mut best: (f64, Option<Horseshoe>) = (0.0, None);
    let mut fp = f.clone();
    for power in 1..=max_power {
        if power > 1 {
            fp = f.compose(&fp);
        }
        let laps = fp.laps()?;
        let points = candidates(&fp);
        let mut top: Vec<RationalInterval> = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let js = pullbacks(&fp, &laps, &points[i], &points[j]);
                if js.len() > top.len() {
                    top = js;
                }
            }
        }
        if top.len() >= 2 {
            let bound = (top.len() as f64).ln() / power as f64;
            if bound > best.0 {
                let strictly_disjoint = top.windows(2).all(|w| w[0].hi < w[1].lo);
                best = (bound, Some(Horseshoe { power, intervals: top, strictly_disjoint }));
            }
        }
    }
    Ok(best)
}
