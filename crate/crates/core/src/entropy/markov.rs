use std::collections::BTreeSet;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use super::{EntropyError, EntropyEstimate, EntropyMethod};
use crate::map::PLMap;
use crate::rational::{self, Rational};

/// A Markov partition and its cover matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkovData {
    #[serde(with = "rational::serde_rationals")]
    pub partition: Vec<Rational>,
    /// `matrix[i][j] = 1` iff cell `j` lies in the image of cell `i`.
    pub matrix: Vec<Vec<u32>>,
}

impl MarkovData {
    pub fn cells(&self) -> usize {
        self.partition.len() - 1
    }
}

/// Follows every critical orbit exactly; if their union closes up within
/// `max_steps`, returns the partition it cuts and the cover matrix.
pub fn markov_detect(f: &PLMap, max_steps: usize) -> Option<MarkovData> {
    let crit = f.critical_data().ok()?.points;
    let mut points: BTreeSet<Rational> = crit.iter().cloned().collect();
    let mut frontier: Vec<Rational> = crit;
    let mut steps = 0;
    while !frontier.is_empty() {
        if steps == max_steps {
            return None;
        }
        steps += 1;
        let mut next = Vec::new();
        for x in &frontier {
            let y = f.eval(x).ok()?;
            if points.insert(y.clone()) {
                next.push(y);
            }
        }
        frontier = next;
    }
    let partition: Vec<Rational> = points.into_iter().collect();
    let n = partition.len() - 1;
    let mut matrix = vec![vec![0u32; n]; n];
    for (i, row) in matrix.iter_mut().enumerate() {
        let a = f.eval(&partition[i]).ok()?;
        let b = f.eval(&partition[i + 1]).ok()?;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for (j, cell) in row.iter_mut().enumerate() {
            if partition[j] >= lo && partition[j + 1] <= hi {
                *cell = 1;
            }
        }
    }
    Some(MarkovData { partition, matrix })
}

fn to_rational_matrix(m: &[Vec<u32>]) -> Vec<Vec<Rational>> {
    m.iter()
        .map(|row| row.iter().map(|&v| rational::int(v as i64)).collect())
        .collect()
}

/// True iff `x > ρ(M)`: `xI - M` is a Z-matrix, and it is a nonsingular
/// M-matrix exactly when every pivot of Gaussian elimination without
/// pivoting is positive.
pub(crate) fn exceeds_spectral_radius(m: &[Vec<Rational>], x: &Rational) -> bool {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { x - &m[i][j] } else { -m[i][j].clone() })
                .collect()
        })
        .collect();
    for k in 0..n {
        if !a[k][k].is_positive() {
            return false;
        }
        for i in k + 1..n {
            if a[i][k].is_zero() {
                continue;
            }
            let factor = &a[i][k] / &a[k][k];
            for j in k..n {
                let delta = &factor * &a[k][j];
                a[i][j] -= delta;
            }
        }
    }
    true
}

/// Nullspace vector of `A` when the nullspace is one-dimensional.
pub(crate) fn kernel_vector(a: &[Vec<Rational>]) -> Option<Vec<Rational>> {
    let n = a.len();
    let mut m: Vec<Vec<Rational>> = a.to_vec();
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(row, p);
        let inv = Rational::one() / &m[row][col];
        for j in 0..n {
            m[row][j] = &m[row][j] * &inv;
        }
        for r in 0..n {
            if r != row && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for j in 0..n {
                    let delta = &factor * &m[row][j];
                    m[r][j] -= delta;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    if pivot_cols.len() + 1 != n {
        return None;
    }
    let free = (0..n).find(|c| !pivot_cols.contains(c))?;
    let mut v = vec![Rational::zero(); n];
    v[free] = Rational::one();
    for (r, &c) in pivot_cols.iter().enumerate() {
        v[c] = -m[r][free].clone();
    }
    Some(v)
}

/// `ρ(M) = k` is certified when `kI - M` has a strictly positive kernel vector
/// (Collatz–Wielandt with equal bounds).
fn is_exact_root(m: &[Vec<Rational>], k: &Rational) -> bool {
    let n = m.len();
    let a: Vec<Vec<Rational>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { k - &m[i][j] } else { -m[i][j].clone() }).collect())
        .collect();
    match kernel_vector(&a) {
        Some(v) => v.iter().all(|x| x.is_positive()) || v.iter().all(|x| x.is_negative()),
        None => false,
    }
}

fn ln_rational(r: &Rational) -> f64 {
    rational::to_f64(r).ln()
}

/// Exact bracket `[lo, hi]` of the spectral radius with `hi - lo <= tol`.
pub(crate) fn perron_bracket(m: &[Vec<u32>], tol: &Rational) -> Result<(Rational, Rational), EntropyError> {
    let n = m.len();
    if n == 0 || m.iter().any(|r| r.len() != n) {
        return Err(EntropyError::BadMatrix);
    }
    let mr = to_rational_matrix(m);
    let sums: Vec<u64> = m.iter().map(|r| r.iter().map(|&v| v as u64).sum()).collect();
    let mut lo = rational::int(*sums.iter().min().unwrap() as i64);
    let mut hi = rational::int(*sums.iter().max().unwrap() as i64);
    if lo == hi {
        return Ok((lo, hi));
    }
    let mut snapped = false;
    while &hi - &lo > *tol {
        if !snapped && &hi - &lo < rational::one() {
            snapped = true;
            let k = rational::Rational::from_integer(hi.floor().to_integer());
            if k >= lo && is_exact_root(&mr, &k) {
                return Ok((k.clone(), k));
            }
            let k = rational::Rational::from_integer(lo.ceil().to_integer());
            if k <= hi && is_exact_root(&mr, &k) {
                return Ok((k.clone(), k));
            }
        }
        let mid = (&lo + &hi) / rational::int(2);
        if exceeds_spectral_radius(&mr, &mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Spectral radius of a nonnegative integer matrix, bracketed exactly to
/// width `tol`, reported as entropy `max(0, log λ)`.
pub fn perron_root(m: &[Vec<u32>], tol: &Rational) -> Result<EntropyEstimate, EntropyError> {
    let (lo, hi) = perron_bracket(m, tol)?;
    let log_pos = |r: &Rational| if r.is_positive() { ln_rational(r).max(0.0) } else { 0.0 };
    let lower = log_pos(&lo);
    let upper = log_pos(&hi);
    let mid = (&lo + &hi) / rational::int(2);
    let value = log_pos(&mid).clamp(lower, upper);
    let depth = if lo == hi { 0 } else { (&hi - &lo).recip().to_f64().map_or(0, |w| w.log2().max(0.0) as usize) };
    Ok(EntropyEstimate {
        value,
        lower_bound: lower,
        upper_bound: upper,
        method: EntropyMethod::MarkovExact,
        depth,
        converged: true,
        lambda_bracket: Some((lo, hi)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn map(pairs: &[(i64, i64, i64, i64)]) -> PLMap {
        PLMap::connect_the_dots(pairs.iter().map(|&(a, b, c, d)| (rat(a, b), rat(c, d))).collect()).unwrap()
    }

    #[test]
    fn detects_full_shifts() {
        let h = map(&[(0, 1, 0, 1), (1, 3, 1, 1), (2, 3, 0, 1), (1, 1, 1, 1)]);
        let md = markov_detect(&h, 10).unwrap();
        assert_eq!(md.partition, vec![int(0), rat(1, 3), rat(2, 3), int(1)]);
        assert_eq!(md.matrix, vec![vec![1; 3]; 3]);
        let t = map(&[(0, 1, 0, 1), (1, 2, 1, 1), (1, 1, 0, 1)]);
        let md = markov_detect(&t, 10).unwrap();
        assert_eq!(md.partition, vec![int(0), rat(1, 2), int(1)]);
        assert_eq!(md.matrix, vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn golden_mean_map() {
        let g = map(&[(0, 1, 1, 2), (1, 2, 1, 1), (1, 1, 0, 1)]);
        let md = markov_detect(&g, 10).unwrap();
        assert_eq!(md.matrix, vec![vec![0, 1], vec![1, 1]]);
    }

    #[test]
    fn non_closing_orbit() {
        // Slope-3/2 tent map: the critical orbit 1/2 -> 3/4 -> 3/8 -> ... never repeats.
        let t = map(&[(0, 1, 0, 1), (1, 2, 3, 4), (1, 1, 0, 1)]);
        assert!(markov_detect(&t, 100).is_none());
    }

    #[test]
    fn perron_examples() {
        let tol = rat(1, 1_000_000_000_000);
        let e = perron_root(&vec![vec![1; 3]; 3], &tol).unwrap();
        assert_eq!(e.lambda_bracket, Some((int(3), int(3))));
        assert_eq!(e.value, 3f64.ln());
        let e = perron_root(&[vec![1, 1], vec![1, 1]], &tol).unwrap();
        assert_eq!(e.lambda_bracket, Some((int(2), int(2))));
        let e = perron_root(&[vec![1, 1], vec![1, 0]], &tol).unwrap();
        let (lo, hi) = e.lambda_bracket.clone().unwrap();
        assert!(&hi - &lo <= tol);
        // x^2 - x - 1 changes sign across the bracket.
        let p = |x: &Rational| x * x - x - int(1);
        assert!(p(&lo) <= int(0) && p(&hi) >= int(0));
        assert!((e.value - 0.48121182505960347).abs() < 1e-11);
        assert!(e.upper_bound - e.lower_bound <= 1e-12);
    }

    #[test]
    fn reducible_and_nilpotent() {
        let tol = rat(1, 1_000_000);
        let e = perron_root(&[vec![0, 1], vec![0, 0]], &tol).unwrap();
        assert_eq!(e.value, 0.0);
        // Reducible: the Perron vector (1, 0) is not positive, so no snapping.
        let e = perron_root(&[vec![2, 1], vec![0, 1]], &tol).unwrap();
        let (lo, hi) = e.lambda_bracket.unwrap();
        assert!(lo <= int(2) && int(2) <= hi && &hi - &lo <= tol);
        let e = perron_root(&[vec![0, 0], vec![0, 0]], &tol).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn integer_root_with_unequal_row_sums() {
        // Eigenvalues 4 and -1; the kernel of 4I - M is spanned by (1, 2).
        let m = vec![vec![0, 2], vec![2, 3]];
        let e = perron_root(&m, &rat(1, 1_000_000_000)).unwrap();
        assert_eq!(e.lambda_bracket, Some((int(4), int(4))));
    }
}
