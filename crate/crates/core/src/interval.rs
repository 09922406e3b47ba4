//! Intervals with exact rational endpoints and per-end open/closed flags.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rational::{self, format_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalInterval {
    #[serde(with = "rational::serde_rational")]
    pub lo: Rational,
    #[serde(with = "rational::serde_rational")]
    pub hi: Rational,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl RationalInterval {
    pub fn new(lo: Rational, hi: Rational, lo_open: bool, hi_open: bool) -> Self {
        Self { lo, hi, lo_open, hi_open }
    }

    pub fn closed(lo: Rational, hi: Rational) -> Self {
        Self::new(lo, hi, false, false)
    }

    pub fn open(lo: Rational, hi: Rational) -> Self {
        Self::new(lo, hi, true, true)
    }

    pub fn point(x: Rational) -> Self {
        Self::closed(x.clone(), x)
    }

    pub fn unit() -> Self {
        Self::closed(rational::zero(), rational::one())
    }

    /// The canonical empty interval `(0, 0)`.
    pub fn empty() -> Self {
        Self::open(rational::zero(), rational::zero())
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn is_degenerate(&self) -> bool {
        !self.is_empty() && self.lo == self.hi
    }

    pub fn length(&self) -> Rational {
        if self.is_empty() {
            rational::zero()
        } else {
            &self.hi - &self.lo
        }
    }

    pub fn contains(&self, x: &Rational) -> bool {
        let above = if self.lo_open { x > &self.lo } else { x >= &self.lo };
        let below = if self.hi_open { x < &self.hi } else { x <= &self.hi };
        above && below
    }

    /// Strict interior membership, `lo < x < hi`.
    pub fn interior_contains(&self, x: &Rational) -> bool {
        x > &self.lo && x < &self.hi
    }

    pub fn intersect(&self, other: &Self) -> Self {
        if self.is_empty() || other.is_empty() {
            return Self::empty();
        }
        let (lo, lo_open) = match self.lo.cmp(&other.lo) {
            std::cmp::Ordering::Greater => (self.lo.clone(), self.lo_open),
            std::cmp::Ordering::Less => (other.lo.clone(), other.lo_open),
            std::cmp::Ordering::Equal => (self.lo.clone(), self.lo_open || other.lo_open),
        };
        let (hi, hi_open) = match self.hi.cmp(&other.hi) {
            std::cmp::Ordering::Less => (self.hi.clone(), self.hi_open),
            std::cmp::Ordering::Greater => (other.hi.clone(), other.hi_open),
            std::cmp::Ordering::Equal => (self.hi.clone(), self.hi_open || other.hi_open),
        };
        let out = Self::new(lo, hi, lo_open, hi_open);
        if out.is_empty() {
            Self::empty()
        } else {
            out
        }
    }

    /// `self ⊆ other`, taking open ends into account. The empty set is a subset of everything.
    pub fn is_subset(&self, other: &Self) -> bool {
        if self.is_empty() {
            return true;
        }
        if other.is_empty() {
            return false;
        }
        let lo_ok = match self.lo.cmp(&other.lo) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => self.lo_open || !other.lo_open,
        };
        let hi_ok = match self.hi.cmp(&other.hi) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.hi_open || !other.hi_open,
        };
        lo_ok && hi_ok
    }

    /// Same point set. All empty intervals compare equal here.
    pub fn same_set(&self, other: &Self) -> bool {
        (self.is_empty() && other.is_empty()) || (self.is_subset(other) && other.is_subset(self))
    }

    /// Disjoint as point sets.
    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.intersect(other).is_empty()
    }

    /// Interiors are disjoint (the closures may share one endpoint).
    pub fn interiors_disjoint(&self, other: &Self) -> bool {
        self.hi <= other.lo || other.hi <= self.lo
    }

    /// Smallest closed interval containing both.
    pub fn hull(&self, other: &Self) -> Self {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        Self::closed(rational::min(&self.lo, &other.lo), rational::max(&self.hi, &other.hi))
    }

    pub fn closure(&self) -> Self {
        if self.is_empty() {
            return Self::empty();
        }
        Self::closed(self.lo.clone(), self.hi.clone())
    }

    pub fn midpoint(&self) -> Rational {
        (&self.lo + &self.hi) / rational::int(2)
    }
}

impl fmt::Display for RationalInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "∅");
        }
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { '(' } else { '[' },
            format_rational(&self.lo),
            format_rational(&self.hi),
            if self.hi_open { ')' } else { ']' }
        )
    }
}
