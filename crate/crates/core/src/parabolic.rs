//! Quantitative analysis of almost parabolic maps: backward orbits,
//! exit times, flow-approximation passage bounds, the delta ~ T^-2
//! scaling law, and the piecewise-affine comparison map `u`.
//!
//! An almost parabolic map lives on `[0, a)` with `a < 1`, satisfies
//! `phi(a) = 1` and `phi(x) > x`, and has a single near-neutral
//! bottleneck of gap `delta = min(phi(x) - x)`. On a central window `W`
//! the displacement is squeezed between two quadratics,
//! `B(x-z)^2 + delta <= phi(x) - x <= A(x-z)^2 + delta`, which yields
//! arctan passage-time bounds through the time-one flow comparison.

use crate::boxmap::BranchwiseMap;
use crate::interval::Interval;
use crate::qsmetrics::{self, GridSpec};
use crate::realmap::QuadraticMap;
use crate::tol;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParabolicError {
    #[error("backward orbit exceeded the cap of {0} points")]
    HorizonExceeded(usize),
    #[error("point {0} outside the domain")]
    OutOfDomain(f64),
    #[error("phi(x) - x attains a non-positive minimum {0} (parabolic or attracting)")]
    NonPositiveDelta(f64),
    #[error("points outside the central window of applicability")]
    OutsideWindow,
    #[error("need at least 4 models spanning two decades of delta")]
    InsufficientSpan,
    #[error("backward orbits have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("evaluator is not increasing / not above the diagonal")]
    NotAlmostParabolic,
}

/// Evaluator of an almost parabolic map on `[0, a)`.
pub type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Central window data: index `m`, the window, and the fitted quadratic
/// coefficients valid on it.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WindowData {
    pub m: usize,
    pub window: Interval,
    pub a_upper: f64,
    pub b_lower: f64,
    /// Passage count through the window: `l - 2m`.
    pub passages: usize,
}

/// An almost parabolic map with its precomputed backward orbit,
/// minimizer, gap and central window.
#[derive(Clone)]
pub struct AlmostParabolicModel {
    eval: Evaluator,
    pub a: f64,
    /// `orbit[i] = a_i`, `a_0 = a`, `phi(a_i) = a_{i-1}`; decreasing.
    pub orbit: Vec<f64>,
    pub z: f64,
    pub delta: f64,
    pub window: Option<WindowData>,
    /// Sampled lower bound: `S phi >= -k_schwarzian` away from 0.
    pub k_schwarzian: f64,
}

impl std::fmt::Debug for AlmostParabolicModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlmostParabolicModel")
            .field("a", &self.a)
            .field("l", &self.l())
            .field("z", &self.z)
            .field("delta", &self.delta)
            .field("window", &self.window)
            .finish()
    }
}

impl AlmostParabolicModel {
    /// Build a model from an evaluator on `[0, a)` with `phi(a) = 1`.
    pub fn build(eval: Evaluator, a: f64) -> Result<Self, ParabolicError> {
        assert!(a > 0.0 && a < 1.0, "domain endpoint must be in (0,1)");
        if ((eval)(a) - 1.0).abs() > 1e-9 {
            return Err(ParabolicError::NotAlmostParabolic);
        }
        // Sanity: increasing and above the diagonal.
        let mut prev = (eval)(0.0);
        if prev <= 0.0 {
            return Err(ParabolicError::NotAlmostParabolic);
        }
        for i in 1..=512 {
            let x = a * (i as f64) / 512.0;
            let v = (eval)(x);
            if v <= prev || v <= x {
                return Err(ParabolicError::NotAlmostParabolic);
            }
            prev = v;
        }
        // Backward orbit by bisection.
        let mut orbit = vec![a];
        loop {
            let target = *orbit.last().unwrap();
            if (eval)(0.0) > target {
                break;
            }
            let mut lo = 0.0f64;
            let mut hi = target;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if (eval)(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // Bias to the upper bracket endpoint: phi(a_i) >= a_{i-1}
            // guarantees the forward orbit of a_k exits in exactly k
            // steps.
            orbit.push(hi);
            if orbit.len() > tol::ORBIT_CAP {
                return Err(ParabolicError::HorizonExceeded(tol::ORBIT_CAP));
            }
        }
        // Minimizer of phi(x) - x by golden section.
        let g = |x: f64| (eval)(x) - x;
        let (z, delta) = golden_min(&g, 0.0, a, tol::Z_MIN);
        if delta <= 0.0 {
            return Err(ParabolicError::NonPositiveDelta(delta));
        }
        let l = orbit.len() - 1;
        // Window: first index where the displacement drops under K1
        // (the second-derivative regime), then extended outward while
        // the quadratic pinching certifies itself on the samples (the
        // fitted A/B ratio stays within twice its value at the K1 cut).
        // For an exactly quadratic displacement the window is the whole
        // orbit.
        let k1 = 0.05 * a;
        let fit = |m: usize| -> Option<(f64, f64)> {
            let w = Interval::new(orbit[l - m], orbit[m]);
            let guard = 1e-6 * w.len();
            let mut a_up = f64::NEG_INFINITY;
            let mut b_lo = f64::INFINITY;
            for i in 0..=tol::FIT_SAMPLES {
                let x = w.lo + w.len() * (i as f64) / (tol::FIT_SAMPLES as f64);
                if (x - z).abs() < guard {
                    continue;
                }
                let r = (g(x) - delta) / ((x - z) * (x - z));
                a_up = a_up.max(r);
                b_lo = b_lo.min(r);
            }
            if b_lo > 0.0 && a_up.is_finite() {
                Some((a_up, b_lo))
            } else {
                None
            }
        };
        let m_cut = orbit
            .iter()
            .position(|&x| g(x) < k1)
            .filter(|&m| m > 0 && 2 * m + 2 <= l);
        let window = m_cut.and_then(|m_cut| {
            let (a0, b0) = fit(m_cut)?;
            let ratio_cap = 2.0 * (a0 / b0);
            let mut m = m_cut;
            let mut ab = (a0, b0);
            for m_try in (0..m_cut).rev() {
                match fit(m_try) {
                    Some((au, bl)) if au / bl <= ratio_cap => {
                        m = m_try;
                        ab = (au, bl);
                    }
                    _ => break,
                }
            }
            Some(WindowData {
                m,
                window: Interval::new(orbit[l - m], orbit[m]),
                a_upper: ab.0,
                b_lower: ab.1,
                passages: l - 2 * m,
            })
        });
        // Sampled Schwarzian lower bound away from the fold.
        let mut k_s = 0.0f64;
        for i in 1..128 {
            let x = a * (i as f64) / 128.0;
            let h = a * 1e-4;
            if x < 2.0 * h || x > a - 2.0 * h {
                continue;
            }
            let f = |t: f64| (eval)(t);
            let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            let d3 = (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h))
                / (2.0 * h * h * h);
            if d1.abs() > 1e-12 {
                let s = d3 / d1 - 1.5 * (d2 / d1) * (d2 / d1);
                k_s = k_s.max(-s);
            }
        }
        Ok(AlmostParabolicModel {
            eval,
            a,
            orbit,
            z,
            delta,
            window,
            k_schwarzian: k_s,
        })
    }

    /// Synthetic family `phi(x) = x + c (x - z)^2 + delta` with the
    /// right endpoint `a` solving `phi(a) = 1`.
    pub fn synthetic(c: f64, z: f64, delta: f64) -> Result<Self, ParabolicError> {
        assert!(c > 0.0 && delta > 0.0);
        // c a^2 + (1 - 2 c z) a + (c z^2 + delta - 1) = 0, root above z.
        let b = 1.0 - 2.0 * c * z;
        let cc = c * z * z + delta - 1.0;
        let disc = b * b - 4.0 * c * cc;
        if disc <= 0.0 {
            return Err(ParabolicError::NotAlmostParabolic);
        }
        let a = (-b + disc.sqrt()) / (2.0 * c);
        if !(a > z && a < 1.0) {
            return Err(ParabolicError::NotAlmostParabolic);
        }
        let eval: Evaluator = Arc::new(move |x| x + c * (x - z) * (x - z) + delta);
        Self::build(eval, a)
    }

    /// Harvest from the quadratic family: the iterate `F^j` restricted
    /// to `[dom.lo, dom.hi]`, affinely conjugated so the domain becomes
    /// `[0, a)` with the image of the right endpoint at 1.
    pub fn harvested(
        map: QuadraticMap,
        iterate: u32,
        dom: Interval,
    ) -> Result<Self, ParabolicError> {
        let exit = map.eval_n(dom.hi, iterate);
        if exit <= dom.hi {
            return Err(ParabolicError::NotAlmostParabolic);
        }
        let lo = dom.lo;
        let scale = exit - lo;
        let a = (dom.hi - lo) / scale;
        let eval: Evaluator =
            Arc::new(move |x| (map.eval_n(lo + x * scale, iterate) - lo) / scale);
        Self::build(eval, a)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// Orbit length `l`: the last index of the backward orbit.
    pub fn l(&self) -> usize {
        self.orbit.len() - 1
    }

    /// Smallest `j` with `phi^j(x)` outside `[0, a)`.
    pub fn exit_time(&self, x: f64) -> Result<usize, ParabolicError> {
        if !(0.0..self.a).contains(&x) {
            return Err(ParabolicError::OutOfDomain(x));
        }
        let mut v = x;
        for j in 1..=tol::ORBIT_CAP {
            v = (self.eval)(v);
            if v >= self.a {
                return Ok(j);
            }
        }
        Err(ParabolicError::HorizonExceeded(tol::ORBIT_CAP))
    }

    /// Iterations needed to travel from `x1` to at least `x2`.
    pub fn true_passage_count(&self, x1: f64, x2: f64) -> usize {
        let mut v = x1;
        let mut t = 0usize;
        while v < x2 && t < tol::ORBIT_CAP {
            v = (self.eval)(v);
            t += 1;
        }
        t
    }

    /// The arctan sandwich of the passage time from `x1` to `x2`
    /// (both in the central window).
    pub fn passage_bounds(&self, x1: f64, x2: f64) -> Result<(f64, f64), ParabolicError> {
        let w = self.window.ok_or(ParabolicError::OutsideWindow)?;
        let pad = 1e-9 * w.window.len();
        for x in [x1, x2] {
            if x < w.window.lo - pad || x > w.window.hi + pad {
                return Err(ParabolicError::OutsideWindow);
            }
        }
        if x2 < x1 {
            return Err(ParabolicError::OutsideWindow);
        }
        let (aa, bb, d, z) = (w.a_upper, w.b_lower, self.delta, self.z);
        let at = |q: f64, x: f64| ((q / d).sqrt() * (x - z)).atan();
        let lower = (1.0 / (4.0 * aa * d)).sqrt() * (at(aa, x2) - at(aa, x1)) - 1.0;
        let upper = (4.0 / (bb * d)).sqrt() * (at(bb, x2) - at(bb, x1)) + 1.0;
        Ok((lower, upper))
    }

    /// Far-field constants: over backward-orbit points with
    /// `b sqrt(delta) < |a_p - z| < edge/2`, the product of the step
    /// count to the window edge on the point's side with `|z - a_p|`
    /// (the `t ~ C/|z-x|` regime). The outer half of the window is
    /// excluded: there the finite window edge contaminates the
    /// reciprocal law. Returns `(min, max)` of the product.
    pub fn far_field_constants(&self, b: f64) -> Option<(f64, f64)> {
        let w = self.window?;
        let (l, m) = (self.l(), w.m);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in m..=(l - m) {
            let x = self.orbit[p];
            let dist = (x - self.z).abs();
            let edge = if x > self.z {
                w.window.hi - self.z
            } else {
                self.z - w.window.lo
            };
            if dist <= b * self.delta.sqrt() || dist >= 0.5 * edge {
                continue;
            }
            let t = if x > self.z { p - m } else { l - m - p };
            if t == 0 {
                continue;
            }
            let prod = t as f64 * dist;
            lo = lo.min(prod);
            hi = hi.max(prod);
        }
        if lo.is_finite() {
            Some((lo, hi))
        } else {
            None
        }
    }

    /// Deep-passage witness: the largest `|a_p - z| / sqrt(delta)` over
    /// orbit points whose side-passage fraction `t/T` is at least `beta`.
    pub fn near_field_ratio(&self, beta: f64) -> Option<f64> {
        let w = self.window?;
        let (l, m, big_t) = (self.l(), w.m, w.passages);
        let mut q = 0.0f64;
        for p in m..=(l - m) {
            let x = self.orbit[p];
            let t = if x > self.z { p - m } else { l - m - p };
            if (t as f64) / (big_t as f64) >= beta {
                q = q.max((x - self.z).abs() / self.delta.sqrt());
            }
        }
        if q > 0.0 {
            Some(q)
        } else {
            None
        }
    }
}

fn golden_min(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut gc = g(c);
    let mut gd = g(d);
    while hi - lo > tol {
        if gc < gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - phi * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + phi * (hi - lo);
            gd = g(d);
        }
    }
    let z = 0.5 * (lo + hi);
    (z, g(z))
}

/// Log-log regression of `delta` against the window passage count `T`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% half-width of the slope.
    pub ci95: f64,
    pub points: usize,
}

/// `delta ~ T^-2`: fit `log10 delta = slope * log10 T + b` over a family
/// of models. Requires at least 4 models spanning two decades of delta.
pub fn delta_t_scaling(models: &[AlmostParabolicModel]) -> Result<ScalingFit, ParabolicError> {
    let pts: Vec<(f64, f64)> = models
        .iter()
        .filter_map(|m| {
            m.window
                .map(|w| ((w.passages as f64).log10(), m.delta.log10()))
        })
        .collect();
    if pts.len() < 4 {
        return Err(ParabolicError::InsufficientSpan);
    }
    let dmin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let dmax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if dmax - dmin < 2.0 {
        return Err(ParabolicError::InsufficientSpan);
    }
    Ok(linear_fit(&pts))
}

fn linear_fit(pts: &[(f64, f64)]) -> ScalingFit {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let ybar = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - ybar) * (p.1 - ybar)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - slope * p.0 - intercept;
            e * e
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let dof = (pts.len().max(3) - 2) as f64;
    let sxx_c = sxx - sx * sx / n;
    let se = (ss_res / dof / sxx_c).sqrt();
    ScalingFit {
        slope,
        intercept,
        r2,
        ci95: 1.96 * se,
        points: pts.len(),
    }
}

/// The piecewise-affine homeomorphism `u` of `(a_l, a)` onto
/// `(a'_l, a')` sending each `a_i` to `a'_i`.
pub fn build_u(
    m1: &AlmostParabolicModel,
    m2: &AlmostParabolicModel,
) -> Result<BranchwiseMap, ParabolicError> {
    if m1.l() != m2.l() {
        return Err(ParabolicError::LengthMismatch(m1.l(), m2.l()));
    }
    let nodes: Vec<(f64, f64)> = m1
        .orbit
        .iter()
        .rev()
        .zip(m2.orbit.iter().rev())
        .map(|(&x, &y)| (x, y))
        .collect();
    BranchwiseMap::from_nodes(nodes).ok_or(ParabolicError::NotAlmostParabolic)
}

/// Quasi-isometry measurements of `u`: adjacent-slope ratio, normalized
/// global slope bounds, and the quasisymmetric norm estimate (the
/// primary quantity).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuasiIsometryReport {
    pub adjacent_ratio: f64,
    pub slope_min: f64,
    pub slope_max: f64,
    /// `max(normalized slope_max, 1/normalized slope_min)`.
    pub bilip_constant: f64,
    pub qs_norm: f64,
}

pub fn quasi_isometry_report(u: &BranchwiseMap) -> QuasiIsometryReport {
    let slopes = u.slopes();
    let mut adj: f64 = 1.0;
    for w in slopes.windows(2) {
        let r = w[1] / w[0];
        adj = adj.max(r.max(1.0 / r));
    }
    let smin = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = u.range().len() / u.domain().len();
    let bilip = (smax / mean).max(mean / smin);
    let qs = qsmetrics::qs_norm(
        &|x| u.eval(x),
        u.domain(),
        GridSpec {
            scales: 24,
            base_points: 128,
        },
    )
    .map(|e| e.value)
    .unwrap_or(f64::NAN);
    QuasiIsometryReport {
        adjacent_ratio: adj,
        slope_min: smin,
        slope_max: smax,
        bilip_constant: bilip,
        qs_norm: qs,
    }
}

/// Tune the quadratic coefficient of the synthetic family so the
/// backward orbit has exactly `target_l` points (used to build
/// matched-length pairs across different deltas).
pub fn synthetic_with_length(
    z: f64,
    delta: f64,
    target_l: usize,
) -> Result<AlmostParabolicModel, ParabolicError> {
    let l_of = |c: f64| -> Option<usize> {
        AlmostParabolicModel::synthetic(c, z, delta).ok().map(|m| m.l())
    };
    // l decreases as c grows (bigger steps). Bracket then bisect.
    let mut lo = 1e-3;
    let mut hi = 64.0;
    for _ in 0..60 {
        if l_of(lo).map(|l| l >= target_l) == Some(true) {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..60 {
        if l_of(hi).map(|l| l <= target_l) == Some(true) {
            break;
        }
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match l_of(mid) {
            Some(l) if l == target_l => return AlmostParabolicModel::synthetic(mid, z, delta),
            Some(l) if l > target_l => lo = mid,
            Some(_) => hi = mid,
            None => hi = mid,
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    // Accept an off-by-zero match only.
    let m = AlmostParabolicModel::synthetic(0.5 * (lo + hi), z, delta)?;
    if m.l() == target_l {
        Ok(m)
    } else {
        Err(ParabolicError::LengthMismatch(m.l(), target_l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_endpoint_solves_quadratic() {
        // phi(x) = x + x^2 + 0.01: a solves a + a^2 + 0.01 = 1.
        let m = AlmostParabolicModel::synthetic(1.0, 0.0, 0.01).unwrap();
        let expected = (-1.0 + 4.96f64.sqrt()) / 2.0;
        assert!((m.a - expected).abs() < 1e-12);
        assert!((m.eval(m.a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_orbit_round_trip() {
        let m = AlmostParabolicModel::synthetic(1.0, 0.3, 0.005).unwrap();
        // Forward iteration from a_l reaches a_0 in exactly l steps.
        let l = m.l();
        let mut v = m.orbit[l];
        for _ in 0..l {
            v = m.eval(v);
        }
        assert!((v - m.a).abs() < 1e-9);
        // phi(a_i) = a_{i-1} within tolerance.
        for i in 1..=l {
            assert!((m.eval(m.orbit[i]) - m.orbit[i - 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn orbit_length_near_pi_over_sqrt_delta() {
        let delta = 1e-4;
        let m = AlmostParabolicModel::synthetic(1.0, 0.3, delta).unwrap();
        let predicted = std::f64::consts::PI / delta.sqrt();
        let ratio = m.l() as f64 / predicted;
        assert!(ratio > 1.0 / 1.2 && ratio < 1.2, "l={} vs {}", m.l(), predicted);
    }

    #[test]
    fn find_z_delta_closed_forms() {
        let m = AlmostParabolicModel::synthetic(1.0, 0.0, 0.02).unwrap();
        assert!(m.z.abs() < 1e-6);
        assert!((m.delta - 0.02).abs() < 1e-10);
        let m2 = AlmostParabolicModel::synthetic(1.0, 0.3, 0.02).unwrap();
        assert!((m2.z - 0.3).abs() < 1e-6);
    }

    #[test]
    fn exit_time_examples() {
        let m = AlmostParabolicModel::synthetic(1.0, 0.3, 0.01).unwrap();
        // Just below a_0 exits in one step.
        assert_eq!(m.exit_time(0.5 * (m.orbit[0] + m.orbit[1]) + 0.2 * (m.orbit[0] - m.orbit[1])).unwrap(), 1);
        // x = a_k exits in exactly k steps.
        for k in [1usize, 3, m.l() / 2, m.l()] {
            assert_eq!(m.exit_time(m.orbit[k]).unwrap(), k, "k={k}");
        }
        assert!(m.exit_time(m.a).is_err());
        // Random points match direct iteration (the definition).
        for i in 0..20 {
            let x = m.orbit[m.l()] + (m.a - m.orbit[m.l()] - 1e-9) * (i as f64) / 20.0;
            let e = m.exit_time(x).unwrap();
            let mut v = x;
            let mut t = 0;
            while v < m.a {
                v = m.eval(v);
                t += 1;
            }
            assert_eq!(e, t);
        }
    }

    #[test]
    fn exit_time_monotone_in_distance_from_z() {
        let m = AlmostParabolicModel::synthetic(1.0, 0.3, 0.001).unwrap();
        // On the right of z exit times decrease as x grows.
        let mut prev = usize::MAX;
        for i in 0..40 {
            let x = m.z + (m.a - m.z - 1e-9) * (i as f64 + 0.5) / 40.0;
            let e = m.exit_time(x).unwrap();
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn passage_bounds_bracket_direct_iteration() {
        for delta in [1e-2, 1e-3, 1e-4] {
            let m = AlmostParabolicModel::synthetic(1.0, 0.3, delta).unwrap();
            let w = m.window.expect("window exists");
            // Symmetric pair around z, plus asymmetric pairs.
            let pairs = [
                (w.window.lo, w.window.hi),
                (w.window.lo, m.z),
                (m.z, w.window.hi),
                (
                    w.window.lo + 0.1 * w.window.len(),
                    w.window.hi - 0.2 * w.window.len(),
                ),
            ];
            for (x1, x2) in pairs {
                let t = m.true_passage_count(x1, x2) as f64;
                let (lo, hi) = m.passage_bounds(x1, x2).unwrap();
                assert!(
                    lo - 1.0 <= t && t <= hi + 1.0,
                    "delta={delta}: t={t} not in [{lo}, {hi}]"
                );
            }
        }
    }

    #[test]
    fn equal_endpoints_bracket_zero() {
        let m = AlmostParabolicModel::synthetic(1.0, 0.3, 1e-3).unwrap();
        let (lo, hi) = m.passage_bounds(m.z, m.z).unwrap();
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_window_passage_near_pi_over_sqrt_delta() {
        let delta = 1e-4;
        let m = AlmostParabolicModel::synthetic(1.0, 0.3, delta).unwrap();
        let w = m.window.unwrap();
        let (lo, hi) = m.passage_bounds(w.window.lo, w.window.hi).unwrap();
        let flow = std::f64::consts::PI / delta.sqrt();
        assert!(lo > flow / 1.5 / 2.0, "lower bound too small: {lo} vs {flow}");
        assert!(hi < flow * 1.5 * 2.0, "upper bound too large: {hi} vs {flow}");
    }

    #[test]
    fn scaling_slope_is_minus_two() {
        let models: Vec<_> = [1e-2, 1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&d| AlmostParabolicModel::synthetic(1.0, 0.3, d).unwrap())
            .collect();
        let fit = delta_t_scaling(&models).unwrap();
        assert!(
            (fit.slope + 2.0).abs() <= 0.15,
            "slope {} not within -2 ± 0.15",
            fit.slope
        );
        // Two points spanning one decade: insufficient.
        let small: Vec<_> = [1e-2, 5e-2]
            .iter()
            .map(|&d| AlmostParabolicModel::synthetic(1.0, 0.3, d).unwrap())
            .collect();
        assert!(matches!(
            delta_t_scaling(&small),
            Err(ParabolicError::InsufficientSpan)
        ));
    }

    #[test]
    fn u_identity_and_affine_cases() {
        let m = AlmostParabolicModel::synthetic(1.0, 0.3, 1e-3).unwrap();
        let u = build_u(&m, &m).unwrap();
        for &(x, y) in u.nodes() {
            assert_eq!(x, y);
        }
        let rep = quasi_isometry_report(&u);
        assert!((rep.bilip_constant - 1.0).abs() < 1e-9);
        assert!((rep.qs_norm - 1.0).abs() < 1e-6);
        assert!((rep.adjacent_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let m1 = AlmostParabolicModel::synthetic(1.0, 0.3, 1e-3).unwrap();
        let m2 = AlmostParabolicModel::synthetic(1.0, 0.3, 4e-3).unwrap();
        if m1.l() != m2.l() {
            assert!(matches!(
                build_u(&m1, &m2),
                Err(ParabolicError::LengthMismatch(_, _))
            ));
        }
    }

    #[test]
    fn matched_length_pair_has_bounded_constants() {
        let m1 = AlmostParabolicModel::synthetic(1.0, 0.3, 1e-3).unwrap();
        let m2 = synthetic_with_length(0.3, 4e-3, m1.l()).unwrap();
        assert_eq!(m1.l(), m2.l());
        let u = build_u(&m1, &m2).unwrap();
        // Nodes match the independently recomputed orbits.
        let nodes = u.nodes();
        for (i, &(x, y)) in nodes.iter().enumerate() {
            let k = m1.l() - i;
            assert!((x - m1.orbit[k]).abs() < 1e-10);
            assert!((y - m2.orbit[k]).abs() < 1e-10);
        }
        let rep = quasi_isometry_report(&u);
        assert!(rep.bilip_constant.is_finite() && rep.bilip_constant >= 1.0);
        assert!(rep.qs_norm.is_finite());
    }

    #[test]
    fn harvested_near_saddle_node() {
        // Just below the period-3 saddle node at a = 1 + 2 sqrt(2) the
        // third iterate is almost parabolic near the ghost orbit; delta
        // shrinks as the parameter approaches the tangency.
        let a_sn = 1.0 + 2.0 * 2.0f64.sqrt();
        let mut prev_delta = f64::INFINITY;
        for eps in [3e-3, 1e-3, 3e-4] {
            let q = QuadraticMap::new(a_sn - eps).unwrap();
            // Ghost bottleneck near x = -0.34.
            let g = |x: f64| q.eval_n(x, 3) - x;
            let (zz, gz) = golden_min(&g, -0.37, -0.31, 1e-13);
            assert!(gz > 0.0);
            // Widen around the bottleneck while F^3 stays safely
            // increasing.
            let d1 = |x: f64| q.jet3(x, 3).d1;
            let mut wlo = zz;
            let mut whi = zz;
            while d1(wlo - 1e-3) > 0.1 && zz - wlo < 0.1 {
                wlo -= 1e-3;
            }
            while d1(whi + 1e-3) > 0.1 && whi - zz < 0.1 {
                whi += 1e-3;
            }
            let m = AlmostParabolicModel::harvested(q, 3, Interval::new(wlo, whi)).unwrap();
            assert!(m.delta > 0.0 && m.delta < prev_delta, "eps={eps}");
            prev_delta = m.delta;
        }
    }

    #[test]
    fn far_field_constants_are_stable() {
        let m = AlmostParabolicModel::synthetic(1.0, 0.3, 1e-5).unwrap();
        let (lo, hi) = m.far_field_constants(10.0).unwrap();
        assert!(hi / lo <= 4.0, "far-field spread {} too wide", hi / lo);
        // Near-field: deep passages sit within q*sqrt(delta) of z.
        let q = m.near_field_ratio(0.2).unwrap();
        assert!(q.is_finite() && q > 0.0);
    }
}
