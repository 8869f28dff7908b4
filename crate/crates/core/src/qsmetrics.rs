//! Quantitative distortion metrics: quasisymmetric norm estimation on
//! grids, cross-ratios and Poincare length, replacement-condition
//! distortion, and Koebe-bound verification on harvested branches.
//!
//! The quasisymmetric norm is measured as a grid supremum and is
//! therefore a lower bound of the true norm; every assertion made on it
//! is phrased as a bound on this estimate with a declared grid.

use crate::boxmap::{extendibility_of_branch, BoxMap, Branch};
use crate::interval::Interval;
use crate::tol;
use serde::Serialize;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsError {
    #[error("map is not increasing on the sampled grid near x = {0}")]
    NotIncreasing(f64),
    #[error("arguments must satisfy a < b < c < d")]
    BadOrdering,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridSpec {
    pub scales: usize,
    pub base_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            scales: tol::QS_SCALES,
            base_points: tol::QS_BASE_POINTS,
        }
    }
}

/// Grid estimate of a quasisymmetric norm: a lower bound of the truth.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QsEstimate {
    pub value: f64,
    pub grid: GridSpec,
    /// Worst witness (base point, scale).
    pub witness: (f64, f64),
}

/// Sup over the grid of `max(r, 1/r)` with
/// `r = |h(x+t)-h(x)| / |h(x)-h(x-t)|`, over dyadic scales `t`.
pub fn qs_norm(
    h: &dyn Fn(f64) -> f64,
    interval: Interval,
    grid: GridSpec,
) -> Result<QsEstimate, QsError> {
    // Monotonicity check on the base grid.
    let n = grid.base_points.max(2);
    let mut prev = h(interval.lo);
    for i in 1..=n {
        let x = interval.lo + interval.len() * (i as f64) / (n as f64);
        let v = h(x);
        if v <= prev {
            return Err(QsError::NotIncreasing(x));
        }
        prev = v;
    }
    let mut best = 1.0f64;
    let mut witness = (interval.mid(), interval.len() * 0.5);
    let resolution = 1e-13 * interval.lo.abs().max(interval.hi.abs()).max(1.0);
    for k in 1..=grid.scales {
        let t = interval.len() / (2.0f64).powi(k as i32 + 1);
        if t < resolution {
            // Scales below the binary64 resolution of the interval carry
            // no information.
            break;
        }
        // Base points on a nested grid: doubling `base_points` refines
        // to a superset, so the estimate is monotone under refinement.
        for i in 0..=n {
            let x = interval.lo + t + (interval.len() - 2.0 * t) * (i as f64) / (n as f64);
            let num = h(x + t) - h(x);
            let den = h(x) - h(x - t);
            if num < 0.0 || den < 0.0 {
                return Err(QsError::NotIncreasing(x));
            }
            if num == 0.0 || den == 0.0 {
                continue;
            }
            let r = num / den;
            let v = r.max(1.0 / r);
            if v > best {
                best = v;
                witness = (x, t);
            }
        }
    }
    Ok(QsEstimate {
        value: best,
        grid,
        witness,
    })
}

/// `(|a-b||d-c|) / (|c-a||d-b|)` for `a < b < c < d`.
pub fn cross_ratio(a: f64, b: f64, c: f64, d: f64) -> Result<f64, QsError> {
    if !(a < b && b < c && c < d) {
        return Err(QsError::BadOrdering);
    }
    Ok(((b - a) * (d - c)) / ((c - a) * (d - b)))
}

/// Poincare length of `inner` inside `outer`: `-log` of the cross-ratio.
/// Infinite (flagged by the caller via `is_infinite`) when the intervals
/// share an endpoint.
pub fn poincare_length(inner: Interval, outer: Interval) -> Result<f64, QsError> {
    if !outer.contains_interval(&inner) {
        return Err(QsError::BadOrdering);
    }
    if outer.lo == inner.lo || outer.hi == inner.hi {
        return Ok(f64::INFINITY);
    }
    let eps = cross_ratio(outer.lo, inner.lo, inner.hi, outer.hi)?;
    Ok(-eps.ln())
}

/// Distortion of replacing `v1` by `v2` on `(a, b)`: the glued map
/// equals `v1` outside and `A' ∘ v2 ∘ A^{-1}` inside, where `A` carries
/// `v2`'s domain onto `[a, b]` and `A'` carries `v2`'s range onto
/// `v1([a, b])`. Returns the qs-norm of the glued map measured on the
/// tripled interval.
pub fn replacement_distortion(
    v1: &dyn Fn(f64) -> f64,
    v2: &dyn Fn(f64) -> f64,
    v2_domain: Interval,
    gap: Interval,
    grid: GridSpec,
) -> Result<QsEstimate, QsError> {
    let (a, b) = (gap.lo, gap.hi);
    let scale_in = v2_domain.len() / (b - a);
    let va = v1(a);
    let vb = v1(b);
    let w_lo = v2(v2_domain.lo);
    let w_hi = v2(v2_domain.hi);
    let scale_out = (vb - va) / (w_hi - w_lo);
    let glued = move |x: f64| -> f64 {
        if x < a || x > b {
            v1(x)
        } else {
            let t = v2_domain.lo + (x - a) * scale_in;
            va + (v2(t) - w_lo) * scale_out
        }
    };
    let wide = Interval::new(a - (b - a), b + (b - a));
    qs_norm(&glued, wide, grid)
}

/// Koebe verification for one monotone branch.
#[derive(Clone, Debug, Serialize)]
pub struct KoebeBranchReport {
    pub eps: f64,
    /// `max |Nh| * |I|` along the branch domain.
    pub nl_times_len: f64,
    /// Pointwise normalized bound `|NH| <= 2|H'|/dist({0,1}, H)` held at
    /// every sample (tolerance 1e-8 in normalized units).
    pub pointwise_ok: bool,
    pub worst_pointwise_gap: f64,
    /// `nl_times_len` within the frozen Moebius envelope at this eps.
    pub within_envelope: bool,
}

/// Check the Real Koebe inequalities on a harvested branch: the
/// nonlinearity-length product against the extendibility envelope, and
/// the pointwise normalized bound after mapping collar -> [0,1] and
/// margin -> [0,1] affinely.
pub fn koebe_check(map: &BoxMap, branch: &Branch) -> Option<KoebeBranchReport> {
    let q = match &map.base {
        crate::boxmap::Dynamics::Quadratic(q) => *q,
        crate::boxmap::Dynamics::Artificial => return None,
    };
    let j = match &branch.map {
        crate::boxmap::BranchMap::Iterate(j) => *j,
        crate::boxmap::BranchMap::Chain(_) => return None,
    };
    if !branch.kind.is_monotone() {
        return None;
    }
    let margin = branch.margin?;
    let collar = branch.collar?;
    let eps = extendibility_of_branch(map, branch).ok()?.eps;

    let dom = branch.domain;
    let mut max_nl = 0.0f64;
    let mut worst_gap = f64::NEG_INFINITY;
    let n = 128;
    for i in 0..=n {
        let x = dom.lo + dom.len() * (i as f64 + 0.5) / (n as f64 + 1.0);
        let jet = q.jet3(x, j);
        let nl = jet.nonlinearity().abs();
        max_nl = max_nl.max(nl);
        // Normalized coordinates: H = beta ∘ F^j ∘ alpha on [0,1].
        let nh = nl * collar.len();
        let hp = jet.d1.abs() * collar.len() / margin.len();
        let hval = (jet.v - margin.lo) / margin.len();
        let dist = hval.min(1.0 - hval).max(0.0);
        if dist > 0.0 {
            let gap = nh - 2.0 * hp / dist;
            worst_gap = worst_gap.max(gap);
        }
    }
    let nl_times_len = max_nl * dom.len();
    let envelope = koebe_envelope(eps);
    Some(KoebeBranchReport {
        eps,
        nl_times_len,
        pointwise_ok: worst_gap <= 1e-8,
        worst_pointwise_gap: worst_gap,
        within_envelope: nl_times_len <= envelope * (1.0 + 1e-6) + 1e-12,
    })
}

/// Frozen envelope `C(eps)`: worst `|Nh| * |I|` over the Moebius family
/// of epsilon-extendible maps (the zero-Schwarzian extremals; negative
/// Schwarzian only improves the bound). Computed once on a fixed grid
/// and interpolated monotonically.
pub fn koebe_envelope(eps: f64) -> f64 {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::new();
        for k in 1..100 {
            let e = k as f64 / 100.0;
            t.push((e, moebius_worst(e)));
        }
        // Enforce a nonincreasing envelope.
        for i in (0..t.len() - 1).rev() {
            t[i].1 = t[i].1.max(t[i + 1].1);
        }
        t
    });
    let e = eps.clamp(table[0].0, table[table.len() - 1].0);
    let idx = ((e * 100.0).floor() as usize).clamp(1, table.len()) - 1;
    let (e0, v0) = table[idx.min(table.len() - 1)];
    if idx + 1 >= table.len() {
        return v0;
    }
    let (e1, v1) = table[idx + 1];
    v0 + (v1 - v0) * (e - e0) / (e1 - e0)
}

/// Worst nonlinearity-length product over Moebius maps `x/(s+(1-s)x)`
/// of `[0,1]` restricted to inner intervals of cross-ratio `eps`.
fn moebius_worst(eps: f64) -> f64 {
    let mut worst = 0.0f64;
    for is in 1..=60 {
        let s = (is as f64 / 20.0).exp() / 5.0; // s in ~(0.2, 4e0)
        let hinv = |y: f64| s * y / (1.0 - (1.0 - s) * y);
        for ib in 1..60 {
            let b = ib as f64 / 60.0;
            // c solves cr((0,1),(b,c)) = eps.
            let c = b / (eps * (1.0 - b) + b);
            if !(c > b && c < 1.0) {
                continue;
            }
            let (x0, x1) = (hinv(b), hinv(c));
            if !(x1 > x0) {
                continue;
            }
            // |N| of the Moebius map is monotone; check both ends.
            let nl = |x: f64| (2.0 * (1.0 - s) / (s + (1.0 - s) * x)).abs();
            let v = nl(x0).max(nl(x1)) * (x1 - x0);
            worst = worst.max(v);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_map_has_norm_one() {
        let h = |x: f64| 3.0 * x - 1.0;
        let est = qs_norm(&h, Interval::new(0.0, 1.0), GridSpec::default()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    /// Grid-refinement oracle: a 10x finer grid changes the estimate of
    /// x^2 on [1,2] by less than 5%.
    #[test]
    fn square_map_stable_under_refinement() {
        let h = |x: f64| x * x;
        let coarse = qs_norm(
            &h,
            Interval::new(1.0, 2.0),
            GridSpec {
                scales: 24,
                base_points: 128,
            },
        )
        .unwrap();
        let fine = qs_norm(
            &h,
            Interval::new(1.0, 2.0),
            GridSpec {
                scales: 24,
                base_points: 1280,
            },
        )
        .unwrap();
        assert!(coarse.value >= 1.0 && fine.value >= coarse.value - 1e-12);
        assert!((fine.value - coarse.value) / coarse.value < 0.05);
    }

    #[test]
    fn decreasing_map_rejected() {
        let h = |x: f64| -x;
        assert!(matches!(
            qs_norm(&h, Interval::new(0.0, 1.0), GridSpec::default()),
            Err(QsError::NotIncreasing(_))
        ));
    }

    #[test]
    fn refining_grid_never_decreases_value() {
        let h = |x: f64| x + 0.2 * (3.0 * x).sin();
        let iv = Interval::new(0.0, 1.0);
        let mut prev = 1.0;
        for bp in [32, 64, 128, 256] {
            let est = qs_norm(
                &h,
                iv,
                GridSpec {
                    scales: 16,
                    base_points: bp,
                },
            )
            .unwrap();
            // Dyadic scales are shared; adding base points only adds
            // candidates at the same scales.
            assert!(est.value >= prev - 1e-9);
            prev = est.value;
        }
    }

    #[test]
    fn cross_ratio_and_poincare() {
        assert!((cross_ratio(-1.0, 0.0, 1.0, 2.0).unwrap() - 0.25).abs() < 1e-15);
        let len = poincare_length(Interval::new(0.0, 1.0), Interval::new(-1.0, 2.0)).unwrap();
        assert!((len - 4.0f64.ln()).abs() < 1e-12);
        let degenerate =
            poincare_length(Interval::new(0.0, 1.0), Interval::new(0.0, 2.0)).unwrap();
        assert!(degenerate.is_infinite());
        assert!(cross_ratio(0.0, 0.0, 1.0, 2.0).is_err());
    }

    /// Moebius invariance of the cross-ratio, sampled over random
    /// coefficient draws that preserve the ordering.
    #[test]
    fn cross_ratio_moebius_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts = [-0.7, 0.1, 0.9, 2.3];
        let base = cross_ratio(pts[0], pts[1], pts[2], pts[3]).unwrap();
        let mut tested = 0;
        while tested < 50 {
            let p: f64 = rng.gen_range(0.5..2.0);
            let q: f64 = rng.gen_range(-1.0..1.0);
            let r: f64 = rng.gen_range(-0.2..0.2);
            let s: f64 = rng.gen_range(1.0..2.0);
            let m = |x: f64| (p * x + q) / (r * x + s);
            // Skip draws whose pole lands inside the configuration.
            let mapped: Vec<f64> = pts.iter().map(|&x| m(x)).collect();
            if !(mapped[0] < mapped[1] && mapped[1] < mapped[2] && mapped[2] < mapped[3]) {
                continue;
            }
            let v = cross_ratio(mapped[0], mapped[1], mapped[2], mapped[3]).unwrap();
            assert!((v - base).abs() < 1e-12, "moebius changed cross ratio");
            tested += 1;
        }
    }

    #[test]
    fn qs_norm_affine_invariance() {
        let h = |x: f64| x * x * x + x;
        let iv = Interval::new(0.5, 1.5);
        let grid = GridSpec {
            scales: 20,
            base_points: 200,
        };
        let direct = qs_norm(&h, iv, grid).unwrap().value;
        // Pre-compose with an affine map and measure on the pulled-back
        // interval: same adjacent-ratio data.
        let ha = |x: f64| h(2.0 * x - 1.0);
        let iva = Interval::new((iv.lo + 1.0) / 2.0, (iv.hi + 1.0) / 2.0);
        let pulled = qs_norm(&ha, iva, grid).unwrap().value;
        assert!((direct - pulled).abs() / direct < 1e-9);
    }

    #[test]
    fn replacement_identity_cases() {
        let id = |x: f64| x;
        let grid = GridSpec {
            scales: 16,
            base_points: 64,
        };
        // v1 affine, v2 affine: distortion exactly 1.
        let v2 = |x: f64| 2.0 * x + 5.0;
        let est = replacement_distortion(
            &id,
            &v2,
            Interval::new(0.0, 1.0),
            Interval::new(-0.5, 0.5),
            grid,
        )
        .unwrap();
        assert!((est.value - 1.0).abs() < 1e-9);

        // v2 = affinely rescaled restriction of v1: gluing reproduces v1.
        let v1 = |x: f64| x * x * x + 2.0 * x;
        let gap = Interval::new(0.25, 0.75);
        let v2r = |t: f64| v1(0.25 + 0.5 * t);
        let glued = replacement_distortion(&v1, &v2r, Interval::new(0.0, 1.0), gap, grid)
            .unwrap()
            .value;
        let direct = qs_norm(&v1, Interval::new(-0.25, 1.25), grid).unwrap().value;
        assert!((glued - direct).abs() / direct < 0.02);
    }

    #[test]
    fn koebe_envelope_monotone() {
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let e = k as f64 / 20.0;
            let v = koebe_envelope(e);
            assert!(v <= prev + 1e-12);
            assert!(v.is_finite() && v >= 0.0);
            prev = v;
        }
        // Affine branches have zero nonlinearity: 0 <= C(eps) trivially.
        assert!(koebe_envelope(0.5) > 0.0);
    }
}
