//! The normalized real quadratic family in critical-point-centered
//! coordinates, with kneading theory, periodic-point solvers,
//! fundamental inducing domains and restrictive-interval detection.
//!
//! The family is `F_a(y) = a(1/4 - y^2) - 1/2` on roughly `[-1/2, 1/2]`,
//! obtained from `f_a(x) = a x (1 - x)` by the shift `y = x - 1/2`. The
//! critical point sits at 0 and the map is exactly even, which the box
//! machinery relies on.

use crate::dd::Dd;
use crate::interval::Interval;
use crate::tol;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealMapError {
    #[error("parameter a={a} outside the admissible range")]
    DomainNotAdmissible { a: f64 },
    #[error("requested periodic point does not exist on the negative side")]
    NoSuchPoint,
    #[error("critical orbit did not return within horizon {horizon}")]
    NoReturn { horizon: u32 },
    #[error("orbit point at step {step} is within tolerance of the critical point but not resolvable")]
    AmbiguousItinerary { step: usize },
}

/// One member of the quadratic family, `F_a(y) = a(1/4 - y^2) - 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticMap {
    a: f64,
}

impl QuadraticMap {
    /// Accepts any `a` in `(0, 4]`; most operations further require
    /// `a > 2` (so the orientation-reversing fixed point is positive).
    pub fn new(a: f64) -> Result<Self, RealMapError> {
        if !(a > 0.0 && a <= 4.0) {
            return Err(RealMapError::DomainNotAdmissible { a });
        }
        Ok(Self { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `F_a(y)`. The square is computed first so evenness is exact.
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        let y2 = y * y;
        self.a * (0.25 - y2) - 0.5
    }

    /// j-fold iterate.
    pub fn eval_n(&self, y: f64, j: u32) -> f64 {
        let mut v = y;
        for _ in 0..j {
            v = self.eval(v);
        }
        v
    }

    #[inline]
    pub fn eval_dd(&self, y: Dd) -> Dd {
        let y2 = y.sqr();
        Dd::from(0.25).sub(y2).mul_f64(self.a).sub(Dd::from(0.5))
    }

    /// Derivative `F_a'(y) = -2 a y`.
    #[inline]
    pub fn deriv(&self, y: f64) -> f64 {
        -2.0 * self.a * y
    }

    /// Value and first derivative of `F^j` at `y` (first-order jet).
    pub fn jet1(&self, y: f64, j: u32) -> (f64, f64) {
        let mut v = y;
        let mut d = 1.0;
        for _ in 0..j {
            d *= -2.0 * self.a * v;
            v = self.eval(v);
        }
        (v, d)
    }

    /// The positive fixed point `q = (a-2)/(2a)` (shifted coordinates).
    pub fn fixed_point(&self) -> Result<f64, RealMapError> {
        if self.a <= 2.0 {
            return Err(RealMapError::DomainNotAdmissible { a: self.a });
        }
        let q = (self.a - 2.0) / (2.0 * self.a);
        debug_assert!((self.eval(q) - q).abs() <= 1e-14);
        Ok(q)
    }

    /// The negative period-two point `q' < 0`, when it exists.
    ///
    /// In unshifted coordinates the smaller period-two point is
    /// `[(a+1) - sqrt((a+1)(a-3))]/(2a)`; it crosses 1/2 only past the
    /// flip bifurcation at `a = 3`.
    pub fn period_two_point(&self) -> Result<f64, RealMapError> {
        let a = self.a;
        if a <= 3.0 {
            return Err(RealMapError::NoSuchPoint);
        }
        let disc = (a + 1.0) * (a - 3.0);
        let x_small = ((a + 1.0) - disc.sqrt()) / (2.0 * a);
        let qp = x_small - 0.5;
        if qp >= 0.0 {
            return Err(RealMapError::NoSuchPoint);
        }
        debug_assert!((self.eval_n(qp, 2) - qp).abs() <= 1e-10);
        Ok(qp)
    }

    /// First return time of the critical point to `(-q, q)`.
    pub fn critical_return_time(&self, horizon: u32) -> Result<u32, RealMapError> {
        let q = self.fixed_point()?;
        let mut y = self.eval(0.0);
        for t in 1..=horizon {
            if y.abs() < q {
                return Ok(t);
            }
            y = self.eval(y);
        }
        Err(RealMapError::NoReturn { horizon })
    }

    /// Does the map have a (real) period-three orbit? Detected by sign
    /// changes of `F^3 - id` beyond the two fixed points.
    pub fn has_period_three_orbit(&self) -> bool {
        let n = 8192;
        let mut count = 0usize;
        let mut prev = self.eval_n(-0.5, 3) - (-0.5);
        for i in 1..=n {
            let y = -0.5 + (i as f64) / (n as f64);
            let g = self.eval_n(y, 3) - y;
            if prev == 0.0 || g == 0.0 || (prev < 0.0) != (g < 0.0) {
                count += 1;
            }
            prev = g;
        }
        // Two sign changes belong to the fixed points of F.
        count > 2
    }

    /// The fundamental inducing domain: `(-q, q)` unless the first
    /// return time is 3 without a period-three orbit, in which case
    /// `(q', -q')`.
    pub fn fundamental_inducing_domain(&self, horizon: u32) -> Result<Fid, RealMapError> {
        let q = self.fixed_point()?;
        let rt = self.critical_return_time(horizon)?;
        if rt == 3 && !self.has_period_three_orbit() {
            let qp = self.period_two_point()?;
            Ok(Fid {
                interval: Interval::new(qp, -qp),
                return_time: rt,
                period_two_based: true,
            })
        } else {
            Ok(Fid {
                interval: Interval::new(-q, q),
                return_time: rt,
                period_two_based: false,
            })
        }
    }

    /// Itinerary of the critical orbit `F(0), F^2(0), ...` relative to 0.
    ///
    /// A point that is exactly 0 truncates the sequence with `C`. A point
    /// within [`tol::C_SYMBOL`] of 0 but nonzero is re-resolved in
    /// double-double arithmetic; if still inside the band the itinerary
    /// is ambiguous at this precision.
    pub fn kneading(&self, n: usize) -> Result<KneadingSequence, RealMapError> {
        assert!(n >= 1);
        let mut symbols = Vec::with_capacity(n);
        let mut y = self.eval(0.0);
        let mut dd_orbit: Option<Vec<Dd>> = None;
        for step in 0..n {
            if y == 0.0 {
                symbols.push(Symbol::C);
                break;
            }
            if y.abs() <= tol::C_SYMBOL {
                let orbit = dd_orbit.get_or_insert_with(|| {
                    let mut v = Vec::with_capacity(n);
                    let mut z = self.eval_dd(Dd::ZERO);
                    for _ in 0..n {
                        v.push(z);
                        z = self.eval_dd(z);
                    }
                    v
                });
                let z = orbit[step];
                if z.is_zero() {
                    symbols.push(Symbol::C);
                    break;
                }
                if z.abs().to_f64() <= tol::C_SYMBOL {
                    return Err(RealMapError::AmbiguousItinerary { step });
                }
                symbols.push(if z.signum() > 0 { Symbol::R } else { Symbol::L });
            } else {
                symbols.push(if y > 0.0 { Symbol::R } else { Symbol::L });
            }
            y = self.eval(y);
        }
        Ok(KneadingSequence { symbols })
    }

    /// Value and first three derivatives of `F^j` at `y`, by third-order
    /// jet arithmetic.
    pub fn jet3(&self, y: f64, j: u32) -> Jet3 {
        let mut jet = Jet3 {
            v: y,
            d1: 1.0,
            d2: 0.0,
            d3: 0.0,
        };
        for _ in 0..j {
            jet = self.jet_step(jet);
        }
        jet
    }

    fn jet_step(&self, p: Jet3) -> Jet3 {
        // F' = -2au, F'' = -2a, F''' = 0.
        let fp = -2.0 * self.a * p.v;
        let fpp = -2.0 * self.a;
        Jet3 {
            v: self.eval(p.v),
            d1: fp * p.d1,
            d2: fpp * p.d1 * p.d1 + fp * p.d2,
            d3: 3.0 * fpp * p.d1 * p.d2 + fp * p.d3,
        }
    }

    /// Class-membership evidence: mean Lyapunov sum along the critical
    /// orbit and the closest recurrence of the critical orbit to 0 within
    /// the horizon. Membership in the paper's class is semi-decidable;
    /// this is reported, not certified.
    pub fn class_evidence(&self, horizon: u32) -> ClassEvidence {
        let burn = 64.min(horizon / 4);
        let mut y = self.eval(0.0);
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut best = f64::INFINITY;
        let mut best_t = 0u32;
        for t in 1..=horizon {
            if y.abs() < best && t > 1 {
                best = y.abs();
                best_t = t;
            }
            if t > burn {
                let d = self.deriv(y).abs().max(1e-300);
                sum += d.ln();
                count += 1;
            }
            y = self.eval(y);
        }
        ClassEvidence {
            lyapunov_mean: if count > 0 { sum / count as f64 } else { 0.0 },
            min_critical_distance: best,
            min_critical_time: best_t,
        }
    }
}

/// Fundamental inducing domain with the critical return time that chose it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Fid {
    pub interval: Interval,
    pub return_time: u32,
    /// True when the domain is `(q', -q')` rather than `(-q, q)`.
    pub period_two_based: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symbol {
    L,
    C,
    R,
}

/// Itinerary of the critical value relative to the critical point.
/// `C` may appear only as the final symbol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KneadingSequence {
    pub symbols: Vec<Symbol>,
}

impl KneadingSequence {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Milnor-Thurston signed-lexicographic order of kneading sequences.
///
/// At the first discrepancy the base order `L < C < R` is flipped when
/// the common prefix contains an odd number of `R` symbols. If one
/// sequence is a prefix of the other (after dropping a trailing `C`)
/// the two are indistinguishable at this depth and compare `Equal`.
pub fn mt_compare(k1: &KneadingSequence, k2: &KneadingSequence) -> Ordering {
    assert!(!k1.is_empty() && !k2.is_empty());
    let mut flip = false;
    let common = k1.len().min(k2.len());
    for i in 0..common {
        let (s1, s2) = (k1.symbols[i], k2.symbols[i]);
        if s1 != s2 {
            let base = rank(s1).cmp(&rank(s2));
            return if flip { base.reverse() } else { base };
        }
        if s1 == Symbol::R {
            flip = !flip;
        }
    }
    Ordering::Equal
}

fn rank(s: Symbol) -> u8 {
    match s {
        Symbol::L => 0,
        Symbol::C => 1,
        Symbol::R => 2,
    }
}

/// Evidence for class membership (reported, not asserted).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ClassEvidence {
    pub lyapunov_mean: f64,
    pub min_critical_distance: f64,
    pub min_critical_time: u32,
}

/// A restrictive (renormalization) interval `(-s, s)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RestrictiveInterval {
    pub half_width: f64,
    pub period: u32,
}

/// Smallest-period maximal restrictive interval with period at most
/// `n_max`, if any.
///
/// For each period the boundary candidates solve `F^n(s) = ±s` (the
/// boundary of a locally maximal restrictive interval maps into itself);
/// the largest candidate passing the invariance and disjointness checks
/// wins.
pub fn find_restrictive_interval(map: &QuadraticMap, n_max: u32) -> Option<RestrictiveInterval> {
    assert!(n_max >= 2);
    let q = map.fixed_point().ok()?;
    find_restrictive_for_iterate(map, 1, q, n_max)
}

/// Generic version used by renormalization levels: searches restrictive
/// intervals of the unimodal piece `G = F^base_iter` restricted to the
/// symmetric window `(-cap, cap)`.
pub fn find_restrictive_for_iterate(
    map: &QuadraticMap,
    base_iter: u32,
    cap: f64,
    n_max: u32,
) -> Option<RestrictiveInterval> {
    for n in 2..=n_max {
        let total = base_iter * n;
        let mut candidates = boundary_candidates(map, total, cap);
        candidates.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for &s in &candidates {
            if restrictive_checks(map, base_iter, n, s) {
                return Some(RestrictiveInterval {
                    half_width: s,
                    period: n,
                });
            }
        }
    }
    None
}

/// Roots of `F^total(s) - s` and `F^total(s) + s` on `(0, cap]`.
///
/// The scan overshoots the cap slightly: the maximal restrictive
/// interval of period 2 has its boundary exactly at the fixed point,
/// i.e. at the cap itself.
fn boundary_candidates(map: &QuadraticMap, total: u32, cap: f64) -> Vec<f64> {
    let grid = 4096;
    let lo_end = cap * 1e-6;
    let hi_end = cap * (1.0 + 1e-6);
    let mut out = Vec::new();
    for sign in [1.0f64, -1.0] {
        let g = |s: f64| map.eval_n(s, total) - sign * s;
        let mut prev_s = lo_end;
        let mut prev = g(prev_s);
        for i in 1..=grid {
            let s = lo_end + (hi_end - lo_end) * (i as f64) / (grid as f64);
            let v = g(s);
            if prev == 0.0 {
                out.push(prev_s);
            } else if (prev < 0.0) != (v < 0.0) {
                out.push(bisect(&g, prev_s, s).min(cap));
            }
            prev_s = s;
            prev = v;
        }
    }
    out
}

fn bisect(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol::INVERT {
            return mid;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (glo < 0.0) == (gm < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Invariance `G^n([-s,s]) ⊆ [-s,s]` plus pairwise disjointness of the
/// intermediate images, all by dense sampling.
fn restrictive_checks(map: &QuadraticMap, base_iter: u32, n: u32, s: f64) -> bool {
    if !(s > 10.0 * tol::EPS_LEN) {
        return false;
    }
    let samples = 1024;
    let slack = 1e-10 * s.max(1e-3) + 1e-14;
    // Track the orbit of the sample set through n blocks of base_iter
    // steps, recording the enclosure of each intermediate image.
    let mut pts: Vec<f64> = (0..=samples)
        .map(|i| -s + 2.0 * s * (i as f64) / (samples as f64))
        .collect();
    let mut encl = Vec::with_capacity(n as usize);
    encl.push((-s, s));
    for _block in 0..n {
        for p in pts.iter_mut() {
            *p = map.eval_n(*p, base_iter);
        }
        let lo = pts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        encl.push((lo, hi));
    }
    // Invariance of the final image.
    let (flo, fhi) = encl[n as usize];
    if flo < -s - slack || fhi > s + slack {
        return false;
    }
    // Disjointness of J, G(J), ..., G^{n-1}(J) as open intervals.
    let mut spans: Vec<(f64, f64)> = encl[..n as usize].to_vec();
    spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 - slack {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let m4 = QuadraticMap::new(4.0).unwrap();
        assert_eq!(m4.eval(0.0), 0.5);
        assert_eq!(m4.eval(0.5), -0.5);
        let m2 = QuadraticMap::new(2.0).unwrap();
        assert_eq!(m2.eval(0.0), 0.0);
    }

    #[test]
    fn evenness_is_exact() {
        let m = QuadraticMap::new(3.7).unwrap();
        for i in 0..500 {
            let y = -0.5 + (i as f64) * 0.002;
            assert_eq!(m.eval(y), m.eval(-y));
        }
    }

    #[test]
    fn fixed_point_examples() {
        assert_eq!(QuadraticMap::new(4.0).unwrap().fixed_point().unwrap(), 0.25);
        let q3 = QuadraticMap::new(3.0).unwrap().fixed_point().unwrap();
        assert!((q3 - 1.0 / 6.0).abs() < 1e-15);
        assert!(matches!(
            QuadraticMap::new(2.0).unwrap().fixed_point(),
            Err(RealMapError::DomainNotAdmissible { .. })
        ));
    }

    #[test]
    fn fixed_point_residual_on_grid() {
        for i in 0..400 {
            let a = 2.0 + 2.0 * (i as f64 + 0.5) / 400.0;
            let m = QuadraticMap::new(a).unwrap();
            let q = m.fixed_point().unwrap();
            assert!((m.eval(q) - q).abs() <= 1e-14, "a={a}");
        }
    }

    #[test]
    fn period_two_examples() {
        let m = QuadraticMap::new(3.5).unwrap();
        let qp = m.period_two_point().unwrap();
        assert!((qp - (3.0 / 7.0 - 0.5)).abs() < 1e-12);
        assert!(matches!(
            QuadraticMap::new(3.1).unwrap().period_two_point(),
            Err(RealMapError::NoSuchPoint)
        ));
    }

    /// Oracle: bisection on F^2 - id, independent of the closed form.
    #[test]
    fn period_two_matches_bisection_oracle() {
        let m = QuadraticMap::new(3.9).unwrap();
        let qp = m.period_two_point().unwrap();
        assert!(qp < 0.0);
        let g = |y: f64| m.eval_n(y, 2) - y;
        // Bracket the root near qp and bisect independently.
        let mut lo = qp - 1e-3;
        let mut hi = qp + 1e-3;
        assert!((g(lo) < 0.0) != (g(hi) < 0.0));
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if (g(lo) < 0.0) == (g(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * (lo + hi) - qp).abs() < 1e-12);
    }

    #[test]
    fn fid_examples() {
        // a = 3.5: first return time 2, domain (-q, q).
        let m = QuadraticMap::new(3.5).unwrap();
        let fid = m.fundamental_inducing_domain(100).unwrap();
        assert_eq!(fid.return_time, 2);
        let q = m.fixed_point().unwrap();
        assert!((fid.interval.hi - q).abs() < 1e-15);
        assert!((q - 0.2142857142857143).abs() < 1e-12);

        // a = 4: the critical orbit lands on the fixed point -q.
        let m4 = QuadraticMap::new(4.0).unwrap();
        assert!(matches!(
            m4.fundamental_inducing_domain(1000),
            Err(RealMapError::NoReturn { .. })
        ));
    }

    /// Superstable period-3 parameter located by bisection; there the
    /// first return time is 3 and a period-3 orbit exists, so the domain
    /// stays `(-q, q)`.
    #[test]
    fn fid_at_superstable_period_three() {
        let g = |a: f64| QuadraticMap::new(a).unwrap().eval_n(0.0, 3);
        let mut lo = 3.8;
        let mut hi = 3.9;
        assert!((g(lo) < 0.0) != (g(hi) < 0.0));
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if (g(lo) < 0.0) == (g(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a_star = 0.5 * (lo + hi);
        let m = QuadraticMap::new(a_star).unwrap();
        assert!(m.has_period_three_orbit());
        let fid = m.fundamental_inducing_domain(100).unwrap();
        assert!(!fid.period_two_based);
        assert_eq!(fid.return_time, 3);
    }

    #[test]
    fn kneading_examples() {
        let m4 = QuadraticMap::new(4.0).unwrap();
        let k = m4.kneading(4).unwrap();
        assert_eq!(
            k.symbols,
            vec![Symbol::R, Symbol::L, Symbol::L, Symbol::L]
        );
        let m2 = QuadraticMap::new(2.0).unwrap();
        let k2 = m2.kneading(1).unwrap();
        assert_eq!(k2.symbols, vec![Symbol::C]);
    }

    /// Oracle: independent brute-force itinerary at doubled precision.
    #[test]
    fn kneading_matches_double_double_oracle() {
        let m = QuadraticMap::new(3.9).unwrap();
        let k = m.kneading(64).unwrap();
        let mut z = m.eval_dd(Dd::ZERO);
        for i in 0..64 {
            let expect = if z.signum() > 0 { Symbol::R } else { Symbol::L };
            assert_eq!(k.symbols[i], expect, "symbol {i}");
            z = m.eval_dd(z);
        }
    }

    #[test]
    fn kneading_prefix_stability() {
        let m = QuadraticMap::new(3.77).unwrap();
        let short = m.kneading(20).unwrap();
        let long = m.kneading(50).unwrap();
        assert_eq!(&long.symbols[..20], &short.symbols[..]);
    }

    /// Oracle for the MT order: reverse-lexicographic comparison of the
    /// cumulative-sign (theta) sequences.
    fn theta_compare(k1: &KneadingSequence, k2: &KneadingSequence) -> Ordering {
        let sig = |k: &KneadingSequence| -> Vec<i32> {
            let mut eps = 1i32;
            k.symbols
                .iter()
                .map(|s| {
                    eps *= match s {
                        Symbol::L => 1,
                        Symbol::C => 0,
                        Symbol::R => -1,
                    };
                    eps
                })
                .collect()
        };
        let (e1, e2) = (sig(k1), sig(k2));
        for i in 0..e1.len().min(e2.len()) {
            if e1[i] != e2[i] {
                // Smaller cumulative sign means larger kneading invariant.
                return e2[i].cmp(&e1[i]);
            }
        }
        Ordering::Equal
    }

    #[test]
    fn mt_compare_examples() {
        let m = QuadraticMap::new(3.9).unwrap();
        let k = m.kneading(32).unwrap();
        assert_eq!(mt_compare(&k, &k), Ordering::Equal);

        let rll = KneadingSequence {
            symbols: vec![Symbol::R, Symbol::L, Symbol::L],
        };
        let rlr = KneadingSequence {
            symbols: vec![Symbol::R, Symbol::L, Symbol::R],
        };
        assert_eq!(mt_compare(&rll, &rlr), theta_compare(&rll, &rlr));
        // One R in the common prefix flips the base order.
        assert_eq!(mt_compare(&rll, &rlr), Ordering::Greater);
    }

    #[test]
    fn mt_compare_agrees_with_theta_oracle_on_grid() {
        let mut prev: Option<KneadingSequence> = None;
        for i in 0..60 {
            let a = 3.6 + 0.4 * (i as f64) / 59.0;
            let k = QuadraticMap::new(a).unwrap().kneading(40).unwrap();
            if let Some(p) = &prev {
                assert_eq!(mt_compare(p, &k), theta_compare(p, &k), "a={a}");
            }
            prev = Some(k);
        }
    }

    #[test]
    fn mt_monotone_on_small_grid() {
        let mut prev: Option<KneadingSequence> = None;
        for i in 0..=100 {
            let a = 3.6 + 0.4 * (i as f64) / 100.0;
            let k = QuadraticMap::new(a).unwrap().kneading(48).unwrap();
            if let Some(p) = &prev {
                assert_ne!(mt_compare(p, &k), Ordering::Greater, "a={a}");
            }
            prev = Some(k);
        }
    }

    #[test]
    fn jet_examples() {
        let m = QuadraticMap::new(4.0).unwrap();
        let j = m.jet3(0.0, 1);
        assert_eq!((j.v, j.d1, j.d2, j.d3), (0.5, 0.0, -8.0, 0.0));
        // Schwarzian of a single F_a off the critical point is negative.
        let m37 = QuadraticMap::new(3.7).unwrap();
        for i in 1..50 {
            let y = 0.01 * i as f64;
            assert!(m37.jet3(y, 1).schwarzian() < 0.0);
        }
    }

    /// Oracle: central finite differences of F^j.
    #[test]
    fn jets_match_finite_differences() {
        let m = QuadraticMap::new(3.61).unwrap();
        for (y, j) in [(0.11, 2u32), (-0.23, 5), (0.04, 10), (0.3, 3)] {
            let jet = m.jet3(y, j);
            let h = 1e-5;
            let f = |x: f64| m.eval_n(x, j);
            let d1 = (f(y + h) - f(y - h)) / (2.0 * h);
            let d2 = (f(y + h) - 2.0 * f(y) + f(y - h)) / (h * h);
            let scale1 = jet.d1.abs().max(1.0);
            let scale2 = jet.d2.abs().max(1.0);
            assert!((jet.d1 - d1).abs() / scale1 < 1e-6, "d1 at y={y}, j={j}");
            assert!((jet.d2 - d2).abs() / scale2 < 1e-4, "d2 at y={y}, j={j}");
        }
    }

    #[test]
    fn restrictive_interval_examples() {
        // Just past the flip bifurcation: period-2 restrictive interval
        // bounded by the fixed point.
        let m = QuadraticMap::new(3.05).unwrap();
        let r = find_restrictive_interval(&m, 6).unwrap();
        assert_eq!(r.period, 2);
        let q = m.fixed_point().unwrap();
        assert!((r.half_width - q).abs() < 1e-9);

        // a = 4 is not renormalizable.
        let m4 = QuadraticMap::new(4.0).unwrap();
        assert!(find_restrictive_interval(&m4, 8).is_none());
    }

    /// Direct check that F^2 maps the detected interval into itself and
    /// that J and F(J) are disjoint (the [DERIVED] oracle).
    #[test]
    fn restrictive_interval_direct_check() {
        let m = QuadraticMap::new(3.05).unwrap();
        let r = find_restrictive_interval(&m, 4).unwrap();
        let s = r.half_width;
        let mut max2 = 0.0f64;
        let mut min1 = f64::INFINITY;
        let mut max1 = f64::NEG_INFINITY;
        for i in 0..=2000 {
            let y = -s + 2.0 * s * (i as f64) / 2000.0;
            let v1 = m.eval(y);
            min1 = min1.min(v1);
            max1 = max1.max(v1);
            max2 = max2.max(m.eval(v1).abs());
        }
        assert!(max2 <= s + 1e-9);
        assert!(min1 >= s - 1e-9 || max1 <= -s + 1e-9, "J and F(J) overlap");
    }

    #[test]
    fn restrictive_interval_at_superstable_period_three() {
        let g = |a: f64| QuadraticMap::new(a).unwrap().eval_n(0.0, 3);
        let (mut lo, mut hi) = (3.8, 3.9);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if (g(lo) < 0.0) == (g(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let m = QuadraticMap::new(0.5 * (lo + hi)).unwrap();
        let r = find_restrictive_interval(&m, 5).unwrap();
        assert_eq!(r.period, 3);
        assert!(r.half_width > 0.0);
        // The interval contains the critical point by construction and
        // F^3 maps it into itself.
        assert!(m.eval_n(0.0, 3).abs() < r.half_width);
    }
}

/// Third-order jet of an iterate: value and first three derivatives.
#[derive(Clone, Copy, Debug)]
pub struct Jet3 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Jet3 {
    /// Nonlinearity `f''/f'`.
    pub fn nonlinearity(&self) -> f64 {
        self.d2 / self.d1
    }

    /// Schwarzian derivative `f'''/f' - 3/2 (f''/f')^2`.
    pub fn schwarzian(&self) -> f64 {
        self.d3 / self.d1 - 1.5 * (self.d2 / self.d1).powi(2)
    }
}
