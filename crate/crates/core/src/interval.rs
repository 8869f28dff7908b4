//! Open intervals on the real line.
//!
//! Domains and boxes of induced maps are open intervals. They are stored
//! as endpoint pairs; endpoint membership is decided by exact
//! comparisons, so a point equal to an endpoint is *outside* the open
//! interval.

use serde::{Deserialize, Serialize};

/// An open interval `(lo, hi)` with `lo < hi`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl std::fmt::Debug for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo < hi, "interval endpoints out of order: ({lo}, {hi})");
        Self { lo, hi }
    }

    /// Symmetric interval `(-s, s)`.
    pub fn symmetric(s: f64) -> Self {
        debug_assert!(s > 0.0);
        Self { lo: -s, hi: s }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Open membership: endpoints excluded.
    pub fn contains(&self, y: f64) -> bool {
        self.lo < y && y < self.hi
    }

    /// Closed membership: endpoints included.
    pub fn contains_closed(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    /// `other` is a subset of `self` (closures may touch).
    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// The closure of `other` lies in the open interior of `self`.
    pub fn compactly_contains(&self, other: &Interval) -> bool {
        self.lo < other.lo && other.hi < self.hi
    }

    /// Open intervals intersect.
    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo < hi {
            Some(Interval::new(lo, hi))
        } else {
            None
        }
    }

    /// Distance from the interval to a point (0 inside the closure).
    pub fn dist_to_point(&self, y: f64) -> f64 {
        if y < self.lo {
            self.lo - y
        } else if y > self.hi {
            y - self.hi
        } else {
            0.0
        }
    }

    /// Is the interval symmetric about 0 to within `tol`?
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.lo + self.hi).abs() <= tol * self.len().max(1.0)
    }

    /// Smallest symmetric interval containing `self`.
    pub fn symmetric_hull(&self) -> Interval {
        let s = self.lo.abs().max(self.hi.abs());
        Interval::symmetric(s)
    }

    /// Hausdorff distance between nested intervals (max endpoint gap).
    pub fn hausdorff(&self, inner: &Interval) -> f64 {
        (inner.lo - self.lo).abs().max((self.hi - inner.hi).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_membership_excludes_endpoints() {
        let i = Interval::new(-1.0, 1.0);
        assert!(i.contains(0.0));
        assert!(!i.contains(1.0));
        assert!(!i.contains(-1.0));
        assert!(i.contains_closed(1.0));
    }

    #[test]
    fn hulls_and_containment() {
        let i = Interval::new(0.1, 0.3);
        assert_eq!(i.symmetric_hull(), Interval::new(-0.3, 0.3));
        assert!(Interval::new(-1.0, 1.0).compactly_contains(&i));
        assert!(!i.compactly_contains(&i));
        assert!(i.contains_interval(&i));
    }
}
