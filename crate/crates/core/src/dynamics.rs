//! Exact transitivity verdicts, locally-eventually-onto constants and
//! perturbation-stability checks.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::interval::RationalInterval;
use crate::map::{MapError, PLMap};
use crate::parry::{flatness_diagnostics, FlatnessRow, MonotoneCDF};
use crate::rational::{self, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("epsilon must be positive")]
    BadEpsilon,
    #[error("map does not interchange [0, e] and [e, 1] about a unique fixed point")]
    NotDecomposed,
    #[error("sample {index} lies at distance {distance} from the base map, outside every grid radius")]
    SampleTooFar { index: usize, distance: String },
    #[error("empty family")]
    EmptyFamily,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&rational::format_rational(r))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// Every grid window of length `epsilon / 2` is mapped onto `[0, 1]` by `f^k`.
    Leo {
        k: usize,
        #[serde(serialize_with = "ser_rational")]
        epsilon: Rational,
    },
    /// `f` swaps `[0, e]` and `[e, 1]`; grid windows reach `[0, e]` under `f^{2k}` or `f^{2k+1}`.
    Interchange {
        #[serde(serialize_with = "ser_rational")]
        e: Rational,
        k: usize,
        #[serde(serialize_with = "ser_rational")]
        epsilon: Rational,
    },
    /// A cycle of closed intervals whose union is invariant and not `[0, 1]`.
    InvariantSet { intervals: Vec<RationalInterval> },
    Monotone,
    Diagnostics { note: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TransitivityStatus {
    TransitiveLEO,
    TransitiveDecomposed,
    NotTransitive,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitivityVerdict {
    pub status: TransitivityStatus,
    pub evidence: Evidence,
}

impl TransitivityVerdict {
    pub fn is_transitive(&self) -> bool {
        matches!(self.status, TransitivityStatus::TransitiveLEO | TransitivityStatus::TransitiveDecomposed)
    }
}

fn grid_windows(epsilon: &Rational) -> Vec<RationalInterval> {
    let h = epsilon / rational::int(2);
    let mut out = Vec::new();
    let mut lo = rational::zero();
    loop {
        let hi = &lo + &h;
        if hi > rational::one() {
            break;
        }
        out.push(RationalInterval::closed(lo, hi.clone()));
        lo = hi;
    }
    out
}

/// Smallest `k ≤ k_max` with `f^k(J) = [0, 1]` for every window `J` of the
/// `ε/2` grid. Any interval longer than `ε` contains such a window.
pub fn leo_constant(f: &PLMap, epsilon: &Rational, k_max: usize) -> Result<Option<usize>, DynamicsError> {
    if epsilon <= &rational::zero() {
        return Err(DynamicsError::BadEpsilon);
    }
    let unit = RationalInterval::unit();
    let mut images = grid_windows(epsilon);
    if images.is_empty() {
        return Ok(None);
    }
    for k in 0..=k_max {
        if images.iter().all(|j| j.same_set(&unit)) {
            return Ok(Some(k));
        }
        let next: Vec<RationalInterval> = images.iter().map(|j| f.image_interval(j)).collect();
        if next == images {
            return Ok(None);
        }
        images = next;
    }
    Ok(None)
}

/// The fixed point when there is exactly one.
pub fn unique_fixed_point(f: &PLMap) -> Result<Option<Rational>, MapError> {
    let fx = f.fixed_points()?;
    Ok(if fx.len() == 1 { fx.into_iter().next() } else { None })
}

/// `e` when `f` has the unique fixed point `e` and swaps `[0, e]` with `[e, 1]` exactly.
pub fn interchange_point(f: &PLMap) -> Result<Option<Rational>, MapError> {
    let Some(e) = unique_fixed_point(f)? else {
        return Ok(None);
    };
    if e <= rational::zero() || e >= rational::one() {
        return Ok(None);
    }
    let left = RationalInterval::closed(rational::zero(), e.clone());
    let right = RationalInterval::closed(e.clone(), rational::one());
    let swaps = f.image_interval(&left) == right && f.image_interval(&right) == left;
    Ok(swaps.then_some(e))
}

/// Smallest `k` such that every `ε/2` grid window `J` has `f^{2k}(J) ⊇ [0, e]`
/// or `f^{2k+1}(J) ⊇ [0, e]`.
pub fn decomposed_leo_constant(
    f: &PLMap,
    epsilon: &Rational,
    k_max: usize,
) -> Result<Option<(usize, Rational)>, DynamicsError> {
    if epsilon <= &rational::zero() {
        return Err(DynamicsError::BadEpsilon);
    }
    let e = interchange_point(f)?.ok_or(DynamicsError::NotDecomposed)?;
    let half = RationalInterval::closed(rational::zero(), e.clone());
    let mut even = grid_windows(epsilon);
    if even.is_empty() {
        return Ok(None);
    }
    for k in 0..=k_max {
        let odd: Vec<RationalInterval> = even.iter().map(|j| f.image_interval(j)).collect();
        if even.iter().zip(&odd).all(|(a, b)| half.is_subset(a) || half.is_subset(b)) {
            return Ok(Some((k, e)));
        }
        let next: Vec<RationalInterval> = odd.iter().map(|j| f.image_interval(j)).collect();
        if next == even {
            return Ok(None);
        }
        even = next;
    }
    Ok(None)
}

fn orbit_candidates(f: &PLMap, depth: usize, cap: usize) -> Result<Vec<Rational>, MapError> {
    let mut points: BTreeSet<Rational> = f.critical_data()?.points.into_iter().collect();
    points.extend(f.fixed_points()?);
    let mut frontier: Vec<Rational> = points.iter().cloned().collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for x in &frontier {
            let y = f.eval(x)?;
            if points.insert(y.clone()) {
                next.push(y);
            }
        }
        if next.is_empty() || points.len() > cap {
            break;
        }
        frontier = next;
    }
    Ok(points.into_iter().collect())
}

fn union_is_unit(intervals: &[RationalInterval]) -> bool {
    let mut sorted: Vec<&RationalInterval> = intervals.iter().collect();
    sorted.sort_by(|a, b| a.lo.cmp(&b.lo));
    let mut reach = rational::zero();
    if sorted[0].lo > reach {
        return false;
    }
    for j in sorted {
        if j.lo > reach {
            return false;
        }
        if j.hi > reach {
            reach = j.hi.clone();
        }
    }
    reach == rational::one()
}

/// Searches closed intervals `J` with endpoints in the truncated forward
/// orbit of the critical and fixed points such that `f^p(J) ⊆ J` for some
/// `p ≤ max_period` while `J ∪ f(J) ∪ … ∪ f^{p-1}(J) ≠ [0, 1]`.
pub fn invariant_subinterval(
    f: &PLMap,
    depth: usize,
    cap: usize,
    max_period: usize,
) -> Result<Option<Vec<RationalInterval>>, MapError> {
    let pts = orbit_candidates(f, depth, cap)?;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let start = RationalInterval::closed(pts[i].clone(), pts[j].clone());
            if start == RationalInterval::unit() {
                continue;
            }
            let mut cycle = vec![start.clone()];
            for _ in 0..max_period {
                let image = f.image_interval(cycle.last().unwrap());
                if image.is_subset(&start) {
                    if !union_is_unit(&cycle) {
                        return Ok(Some(cycle));
                    }
                    break;
                }
                cycle.push(image);
            }
        }
    }
    Ok(None)
}

/// Limits for [`transitivity_check`].
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub epsilon_floor: Rational,
    pub k_max: usize,
    pub orbit_depth: usize,
    pub orbit_cap: usize,
    pub max_period: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { epsilon_floor: rational::rat(1, 16), k_max: 60, orbit_depth: 12, orbit_cap: 120, max_period: 4 }
    }
}

/// Exact verdict. LEO is tried at `ε = 1/2, 1/4, …` down to the floor, then
/// the interchange decomposition, then the invariant-set search; a map that
/// passes none of them is `Unknown`.
pub fn transitivity_check(f: &PLMap, cfg: &CheckConfig) -> Result<TransitivityVerdict, DynamicsError> {
    let laps = f.laps()?;
    if laps.len() == 1 {
        let half = rational::half();
        let fh = f.eval(&half)?;
        let evidence = if !laps[0].increasing {
            Evidence::Monotone
        } else if fh <= half {
            Evidence::InvariantSet { intervals: vec![RationalInterval::closed(rational::zero(), half)] }
        } else {
            Evidence::InvariantSet { intervals: vec![RationalInterval::closed(half, rational::one())] }
        };
        return Ok(TransitivityVerdict { status: TransitivityStatus::NotTransitive, evidence });
    }
    let mut epsilon = rational::half();
    while epsilon >= cfg.epsilon_floor {
        if let Some(k) = leo_constant(f, &epsilon, cfg.k_max)? {
            return Ok(TransitivityVerdict {
                status: TransitivityStatus::TransitiveLEO,
                evidence: Evidence::Leo { k, epsilon },
            });
        }
        epsilon /= rational::int(2);
    }
    if interchange_point(f)?.is_some() {
        let mut epsilon = rational::half();
        while epsilon >= cfg.epsilon_floor {
            if let Some((k, e)) = decomposed_leo_constant(f, &epsilon, cfg.k_max)? {
                return Ok(TransitivityVerdict {
                    status: TransitivityStatus::TransitiveDecomposed,
                    evidence: Evidence::Interchange { e, k, epsilon },
                });
            }
            epsilon /= rational::int(2);
        }
    }
    if let Some(intervals) = invariant_subinterval(f, cfg.orbit_depth, cfg.orbit_cap, cfg.max_period)? {
        return Ok(TransitivityVerdict {
            status: TransitivityStatus::NotTransitive,
            evidence: Evidence::InvariantSet { intervals },
        });
    }
    Ok(TransitivityVerdict {
        status: TransitivityStatus::Unknown,
        evidence: Evidence::Diagnostics {
            note: format!(
                "no LEO constant down to epsilon {} within {} steps; no invariant set found",
                rational::format_rational(&cfg.epsilon_floor),
                cfg.k_max
            ),
        },
    })
}

/// Interior points `x`, `y` with `f²(x) = 0` and `f²(y) = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndpointWitness {
    #[serde(serialize_with = "ser_rational")]
    pub x: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub y: Rational,
}

fn smallest_interior_preimage2(f: &PLMap, target: &Rational) -> Option<Rational> {
    let zero = rational::zero();
    let one = rational::one();
    f.preimage_point(target)
        .iter()
        .flat_map(|z| f.preimage_point(z))
        .filter(|x| x > &zero && x < &one)
        .min()
}

/// Smallest interior witnesses of endpoint accessibility, if any exist.
pub fn endpoint_accessibility(f: &PLMap) -> Option<EndpointWitness> {
    let x = smallest_interior_preimage2(f, &rational::zero())?;
    let y = smallest_interior_preimage2(f, &rational::one())?;
    Some(EndpointWitness { x, y })
}

fn image_n(f: &PLMap, j: &RationalInterval, n: usize) -> RationalInterval {
    (0..n).fold(j.clone(), |acc, _| f.image_interval(&acc))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRow {
    pub index: usize,
    pub distance: f64,
    pub covers: bool,
}

/// Result of [`equi_accessibility_constants`]. Conclusions hold for the
/// supplied samples only, not for every map in the neighbourhood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccessibilityReport {
    #[serde(serialize_with = "ser_opt_rational")]
    pub rho: Option<Rational>,
    #[serde(serialize_with = "ser_rational")]
    pub zeta: Rational,
    /// For decomposed maps the check is `g⁴(K) ∪ g⁵(K) = [0, 1]` with
    /// `K = [ρ, e − ρ]`; otherwise `g²([ρ, 1 − ρ]) = [0, 1]`.
    #[serde(serialize_with = "ser_opt_rational")]
    pub interchange_point: Option<Rational>,
    pub rows: Vec<SampleRow>,
    pub scope: &'static str,
}

fn ser_opt_rational<S: serde::Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => ser_rational(r, s),
        None => s.serialize_none(),
    }
}

fn covers_at(g: &PLMap, rho: &Rational, e: Option<&Rational>) -> bool {
    match e {
        Some(e) => {
            let hi = e - rho;
            if &hi < rho {
                return false;
            }
            let k = RationalInterval::closed(rho.clone(), hi);
            let g4 = image_n(g, &k, 4);
            let g5 = g.image_interval(&g4);
            union_is_unit(&[g4, g5])
        }
        None => {
            let hi = rational::one() - rho;
            if &hi < rho {
                return false;
            }
            let k = RationalInterval::closed(rho.clone(), hi);
            image_n(g, &k, 2).same_set(&RationalInterval::unit())
        }
    }
}

/// `ζ` is the smallest grid radius whose open neighbourhood of `f` contains
/// every sample; `ρ` is the largest grid value at which every sample passes
/// the covering check.
pub fn equi_accessibility_constants(
    f: &PLMap,
    rho_grid: &[Rational],
    zeta_grid: &[Rational],
    samples: &[PLMap],
) -> Result<AccessibilityReport, DynamicsError> {
    let distances: Vec<Rational> = samples.iter().map(|g| f.sup_distance(g)).collect();
    let mut zetas = zeta_grid.to_vec();
    zetas.sort();
    let worst = distances.iter().max().cloned().unwrap_or_else(rational::zero);
    let zeta = zetas.into_iter().find(|z| z > &worst).ok_or_else(|| {
        let index = distances.iter().position(|d| d == &worst).unwrap_or(0);
        DynamicsError::SampleTooFar { index, distance: rational::format_rational(&worst) }
    })?;
    let e = interchange_point(f)?;
    let mut rhos = rho_grid.to_vec();
    rhos.sort();
    let rho = rhos.iter().rev().find(|r| samples.iter().all(|g| covers_at(g, r, e.as_ref()))).cloned();
    let rows = samples
        .iter()
        .zip(&distances)
        .enumerate()
        .map(|(index, (g, d))| SampleRow {
            index,
            distance: to_f64(d),
            covers: rho.as_ref().is_some_and(|r| covers_at(g, r, e.as_ref())),
        })
        .collect();
    Ok(AccessibilityReport { rho, zeta, interchange_point: e, rows, scope: "verified on supplied samples only" })
}

/// `δ(ε)` minimized over a family of distribution functions.
pub fn equicontinuity_modulus(family: &[MonotoneCDF], eps_list: &[f64]) -> Result<Vec<FlatnessRow>, DynamicsError> {
    if family.is_empty() {
        return Err(DynamicsError::EmptyFamily);
    }
    let mut out: Vec<FlatnessRow> = eps_list.iter().map(|&epsilon| FlatnessRow { epsilon, delta: f64::INFINITY }).collect();
    for cdf in family {
        for (row, r) in out.iter_mut().zip(flatness_diagnostics(cdf, eps_list)) {
            row.delta = row.delta.min(r.delta);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn map(pairs: &[(i64, i64, i64, i64)]) -> PLMap {
        PLMap::connect_the_dots(pairs.iter().map(|&(a, b, c, d)| (rat(a, b), rat(c, d))).collect()).unwrap()
    }

    fn horseshoe() -> PLMap {
        map(&[(0, 1, 0, 1), (1, 3, 1, 1), (2, 3, 0, 1), (1, 1, 1, 1)])
    }

    fn tent() -> PLMap {
        map(&[(0, 1, 0, 1), (1, 2, 1, 1), (1, 1, 0, 1)])
    }

    fn interchange() -> PLMap {
        map(&[(0, 1, 1, 1), (1, 2, 1, 2), (3, 4, 0, 1), (1, 1, 1, 2)])
    }

    /// Brute force: smallest k with every window mapped onto `[0, 1]`.
    fn leo_oracle(f: &PLMap, epsilon: &Rational, k_max: usize) -> Option<usize> {
        let h = epsilon / int(2);
        let windows: Vec<(Rational, Rational)> = (0..)
            .map(|i| (&h * int(i), &h * int(i + 1)))
            .take_while(|(_, b)| b <= &int(1))
            .collect();
        (0..=k_max).find(|&k| {
            let g = if k == 0 { PLMap::identity() } else { f.iterate(k, 1 << 20).unwrap() };
            windows.iter().all(|(a, b)| {
                let mut vals: Vec<Rational> = vec![g.eval(a).unwrap(), g.eval(b).unwrap()];
                vals.extend(g.breakpoints().filter(|x| *x > a && *x < b).map(|x| g.eval(x).unwrap()));
                vals.iter().min() == Some(&int(0)) && vals.iter().max() == Some(&int(1))
            })
        })
    }

    #[test]
    fn leo_examples() {
        let h = horseshoe();
        for eps in [rat(1, 3), rat(1, 2), rat(1, 5)] {
            assert_eq!(leo_constant(&h, &eps, 10).unwrap(), leo_oracle(&h, &eps, 6));
        }
        assert_eq!(leo_constant(&h, &rat(1, 3), 10).unwrap(), Some(2));
        assert!(leo_constant(&tent(), &rat(1, 2), 10).unwrap().unwrap() <= 2);
        assert_eq!(leo_constant(&PLMap::identity(), &rat(1, 2), 10).unwrap(), None);
        assert_eq!(leo_constant(&h, &int(0), 10), Err(DynamicsError::BadEpsilon));
    }

    #[test]
    fn leo_monotone_in_epsilon() {
        let t = tent();
        let ks: Vec<usize> = [rat(1, 2), rat(1, 4), rat(1, 8), rat(1, 16)]
            .iter()
            .map(|e| leo_constant(&t, e, 20).unwrap().unwrap())
            .collect();
        assert!(ks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn verdicts() {
        let cfg = CheckConfig::default();
        assert_eq!(transitivity_check(&horseshoe(), &cfg).unwrap().status, TransitivityStatus::TransitiveLEO);
        let v = transitivity_check(&interchange(), &cfg).unwrap();
        assert_eq!(v.status, TransitivityStatus::TransitiveDecomposed);
        let Evidence::Interchange { e, .. } = v.evidence else { panic!() };
        assert_eq!(e, rat(1, 2));
        let v = transitivity_check(&PLMap::identity(), &cfg).unwrap();
        assert_eq!(v.status, TransitivityStatus::NotTransitive);
        // Two full tents on the halves: [0, 1/2] is invariant.
        let split = map(&[(0, 1, 0, 1), (1, 4, 1, 2), (1, 2, 0, 1), (3, 4, 1, 1), (1, 1, 1, 2)]);
        let v = transitivity_check(&split, &cfg).unwrap();
        assert_eq!(v.status, TransitivityStatus::NotTransitive);
        let Evidence::InvariantSet { intervals } = v.evidence else { panic!() };
        let j = &intervals[0];
        assert!(split.image_interval(j).is_subset(j) || intervals.len() > 1);
    }

    #[test]
    fn decomposition_facts() {
        let f = interchange();
        assert_eq!(unique_fixed_point(&f).unwrap(), Some(rat(1, 2)));
        assert_eq!(unique_fixed_point(&horseshoe()).unwrap(), None);
        assert_eq!(unique_fixed_point(&tent()).unwrap(), None);
        let left = RationalInterval::closed(int(0), rat(1, 2));
        assert!(RationalInterval::closed(rat(1, 2), int(1)).is_subset(&f.image_interval(&left)));
        let half_open = RationalInterval::new(int(0), rat(1, 2), false, true);
        assert!(left.is_subset(&image_n(&f, &half_open, 2)));
        assert!(decomposed_leo_constant(&f, &rat(1, 4), 20).unwrap().is_some());
        assert_eq!(decomposed_leo_constant(&f, &int(1), 20).unwrap(), Some((0, rat(1, 2))));
        assert_eq!(decomposed_leo_constant(&horseshoe(), &rat(1, 4), 20), Err(DynamicsError::NotDecomposed));
    }

    #[test]
    fn endpoint_witnesses() {
        let w = endpoint_accessibility(&horseshoe()).unwrap();
        assert_eq!(w.x, rat(2, 9));
        let h = horseshoe();
        assert_eq!(h.eval(&h.eval(&w.y).unwrap()).unwrap(), int(1));
        let w = endpoint_accessibility(&tent()).unwrap();
        assert_eq!(w.y, rat(1, 4));
        assert_eq!(endpoint_accessibility(&PLMap::identity()), None);
    }

    #[test]
    fn accessibility_constants() {
        let h = horseshoe();
        let grid: Vec<Rational> = (1..=8).map(|k| rat(k, 48)).collect();
        let r = equi_accessibility_constants(&h, &grid, &[rat(1, 100)], std::slice::from_ref(&h)).unwrap();
        let rho = r.rho.unwrap();
        assert!(covers_at(&h, &rho, None));
        assert!(grid.iter().filter(|g| **g > rho).all(|g| !covers_at(&h, g, None)));
        let far = tent();
        assert!(matches!(
            equi_accessibility_constants(&h, &grid, &[rat(1, 100)], &[far]),
            Err(DynamicsError::SampleTooFar { .. })
        ));
    }

    #[test]
    fn modulus() {
        let rows = equicontinuity_modulus(&[MonotoneCDF::identity()], &[0.2, 0.1]).unwrap();
        assert_eq!(rows[0].delta, 0.2);
        assert_eq!(rows[1].delta, 0.1);
        let flat = MonotoneCDF::from_floats(vec![0.0, 0.4, 0.5, 1.0], vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        let rows = equicontinuity_modulus(&[MonotoneCDF::identity(), flat], &[0.05]).unwrap();
        assert_eq!(rows[0].delta, 0.0);
    }
}
