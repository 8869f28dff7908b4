//! Saturated maps: the first-entry partition to the next
//! renormalization level's fundamental inducing domain, with the outer
//! and inner staircase structure flanking the restrictive interval.

use super::initial::{descend_renormalizations, level_fid, RenormLevel};
use super::InducingError;
use crate::boxmap::{BoxMap, Branch, BranchKind, BranchMap, Dynamics};
use crate::interval::Interval;
use crate::realmap::{find_restrictive_for_iterate, QuadraticMap};
use crate::tol;
use serde::Serialize;

/// Staircase measurements around the restrictive interval.
#[derive(Clone, Debug, Serialize)]
pub struct SaturatedReport {
    /// The restrictive interval of the level.
    pub restrictive: Interval,
    /// The next level's fundamental inducing domain (the identity cell).
    pub target: Interval,
    /// Escape-time cell lengths of the level map just outside the
    /// restrictive interval (right side, ordered inward).
    pub outer_step_lengths: Vec<f64>,
    /// First-entry cell lengths inside the restrictive interval (right
    /// side, ordered toward the target).
    pub inner_step_lengths: Vec<f64>,
    /// Derivative of the level map at the restrictive boundary.
    pub boundary_multiplier: f64,
}

/// Build the saturated map at `renorm_level`: branches are first
/// entries into the next level's fundamental inducing domain, truncated
/// at the horizon.
pub fn saturated_map(
    map: &QuadraticMap,
    renorm_level: u32,
    horizon: u32,
) -> Result<(BoxMap, SaturatedReport), InducingError> {
    assert!(renorm_level >= 1);
    // Walk down to the requested level.
    let mut lvl = RenormLevel::top(map)?;
    for _ in 0..renorm_level {
        match find_restrictive_for_iterate(map, lvl.iter, lvl.window.hi, 12) {
            Some(r) => {
                lvl = RenormLevel {
                    iter: lvl.iter * r.period,
                    window: Interval::symmetric(r.half_width),
                    depth: lvl.depth + 1,
                };
            }
            None => return Err(InducingError::NotRenormalizable),
        }
    }
    // The map one level up, whose fundamental inducing domain hosts the
    // saturated map.
    let up = descend_to(map, renorm_level - 1)?;
    let j0 = level_fid(map, &up)?;
    let target = level_fid(map, &lvl)?;

    // First-entry scan on J0 in up-level steps.
    let entry_time = |y: f64| -> Option<u32> {
        let mut v = y;
        for t in 1..=horizon {
            v = map.eval_n(v, up.iter);
            if target.contains(v) {
                return Some(t);
            }
            if v.abs() > 1.0 {
                return None;
            }
        }
        None
    };
    let n = 1usize << 14;
    let sample = |i: usize| j0.lo + j0.len() * (i as f64 + 0.5) / (n as f64);
    let codes: Vec<Option<u32>> = (0..n)
        .map(|i| {
            let y = sample(i);
            if target.contains(y) {
                Some(0)
            } else {
                entry_time(y)
            }
        })
        .collect();
    let refine = |lo: f64, hi: f64, left: Option<u32>| -> f64 {
        let mut a = lo;
        let mut b = hi;
        let code = |y: f64| {
            if target.contains(y) {
                Some(0)
            } else {
                entry_time(y)
            }
        };
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if code(mid) == left {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };

    let mut branches = Vec::new();
    let mut unresolved = 0.0f64;
    let mut block_start = 0usize;
    let mut block_lo = j0.lo;
    let mut i = 1usize;
    while block_start < n {
        while i < n && codes[i] == codes[block_start] {
            i += 1;
        }
        let code = codes[block_start];
        let hi = if i < n {
            refine(sample(i - 1), sample(i), code)
        } else {
            j0.hi
        };
        if hi > block_lo + tol::EPS_LEN {
            let d = Interval::new(block_lo, hi);
            match code {
                Some(0) | None => {
                    if code.is_none() {
                        unresolved += d.len();
                    }
                }
                Some(j) => {
                    let total = j * up.iter;
                    let v_lo = map.eval_n(d.lo, total);
                    let v_hi = map.eval_n(d.hi, total);
                    let kind = if v_lo < v_hi {
                        BranchKind::MonotoneIncreasing
                    } else {
                        BranchKind::MonotoneDecreasing
                    };
                    branches.push(Branch {
                        domain: d,
                        iterate: total,
                        map: BranchMap::Iterate(total),
                        kind,
                        range_box: 1,
                        margin: None,
                        collar: None,
                    });
                }
            }
        }
        block_lo = hi;
        block_start = i;
    }

    branches.sort_by(|a, b| a.domain.lo.partial_cmp(&b.domain.lo).unwrap());
    let mut out = BoxMap {
        base: Dynamics::Quadratic(*map),
        boxes: vec![j0, target],
        branches,
        rank: 0,
        unresolved_measure: unresolved,
        extendibility: None,
    };
    crate::boxmap::assign_margins(&mut out);

    // Staircases. Outer: escape-time cells of G = F^{up.iter * period}
    // just outside the restrictive interval. Inner: first-entry cells
    // inside it.
    let w = lvl.window; // restrictive interval of the up-level map
    let g_iter = lvl.iter;
    let g = |y: f64| map.eval_n(y, g_iter);
    let escape_time = |y: f64| -> u32 {
        let mut v = y;
        for t in 1..=4096u32 {
            v = g(v);
            if !w.contains(v) && !Interval::new(w.hi, j0.hi.max(w.hi * 2.0)).contains(v) {
                return t;
            }
            if v.abs() > w.hi * 8.0 {
                return t;
            }
        }
        4096
    };
    let mut outer = Vec::new();
    {
        // Walk outward from the restrictive boundary on the right.
        let mut prev = w.hi;
        let mut t_prev = escape_time(w.hi * (1.0 + 1e-9));
        let reach = w.hi * 0.2;
        let probes = 4096;
        for k in 1..=probes {
            let y = w.hi + reach * (k as f64) / (probes as f64);
            let t = escape_time(y);
            if t != t_prev {
                outer.push(y - prev);
                prev = y;
                t_prev = t;
                if outer.len() >= 12 {
                    break;
                }
            }
        }
    }
    let mut inner = Vec::new();
    {
        let inner_entry = |y: f64| -> u32 {
            let mut v = y;
            for t in 1..=4096u32 {
                v = g(v);
                if target.contains(v) {
                    return t;
                }
            }
            4096
        };
        let mut prev = target.hi;
        let mut t_prev = inner_entry(target.hi * (1.0 + 1e-9));
        let probes = 4096;
        for k in 1..=probes {
            let y = target.hi + (w.hi - target.hi) * (k as f64) / (probes as f64);
            let t = inner_entry(y);
            if t != t_prev {
                inner.push(y - prev);
                prev = y;
                t_prev = t;
                if inner.len() >= 12 {
                    break;
                }
            }
        }
    }
    let report = SaturatedReport {
        restrictive: w,
        target,
        outer_step_lengths: outer,
        inner_step_lengths: inner,
        boundary_multiplier: map.jet3(w.hi, g_iter).d1.abs(),
    };
    Ok((out, report))
}

fn descend_to(map: &QuadraticMap, levels: u32) -> Result<RenormLevel, InducingError> {
    let mut lvl = RenormLevel::top(map)?;
    for _ in 0..levels {
        match find_restrictive_for_iterate(map, lvl.iter, lvl.window.hi, 12) {
            Some(r) => {
                lvl = RenormLevel {
                    iter: lvl.iter * r.period,
                    window: Interval::symmetric(r.half_width),
                    depth: lvl.depth + 1,
                };
            }
            None => return Err(InducingError::NotRenormalizable),
        }
    }
    let _ = descend_renormalizations; // shared helper used by cascades
    Ok(lvl)
}
