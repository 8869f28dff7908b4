//! The initial induced map: a first-return-style box mapping on the
//! fundamental inducing domain with monotone branches onto `J` and one
//! folding central branch.

use super::InducingError;
use crate::boxmap::{BoxMap, Branch, BranchKind, BranchMap, Dynamics};
use crate::interval::Interval;
use crate::realmap::QuadraticMap;
use crate::tol;

/// A renormalization level: the unimodal piece `G = F^iter` restricted
/// to the symmetric `window`.
#[derive(Clone, Copy, Debug)]
pub struct RenormLevel {
    pub iter: u32,
    pub window: Interval,
    pub depth: u32,
}

impl RenormLevel {
    pub fn top(map: &QuadraticMap) -> Result<Self, InducingError> {
        let q = map.fixed_point()?;
        // The dynamical window at the top level: slightly beyond (-q, q)
        // so the fundamental-domain boundary is interior.
        let w = (2.0 * q).min(0.5);
        Ok(RenormLevel {
            iter: 1,
            window: Interval::symmetric(w),
            depth: 0,
        })
    }
}

/// Descend the renormalization sequence while restrictive intervals
/// exist (at most `max_levels` times, periods up to `n_max`).
pub fn descend_renormalizations(
    map: &QuadraticMap,
    max_levels: u32,
    n_max: u32,
) -> Result<RenormLevel, InducingError> {
    let mut lvl = RenormLevel::top(map)?;
    for _ in 0..max_levels {
        if lvl.window.hi < 1e-6 {
            break; // binary64 precision floor for nested windows
        }
        match crate::realmap::find_restrictive_for_iterate(map, lvl.iter, lvl.window.hi, n_max) {
            Some(r) => {
                lvl = RenormLevel {
                    iter: lvl.iter * r.period,
                    window: Interval::symmetric(r.half_width),
                    depth: lvl.depth + 1,
                };
            }
            None => break,
        }
    }
    Ok(lvl)
}

/// Fundamental inducing domain of the level map `G = F^iter` on its
/// window: the symmetric interval at the orientation-reversing fixed
/// point, with the first-return-time-3 adjustment.
pub fn level_fid(map: &QuadraticMap, lvl: &RenormLevel) -> Result<Interval, InducingError> {
    let g = |y: f64| map.eval_n(y, lvl.iter);
    let w = lvl.window.hi;
    // Orientation-reversing fixed points of G strictly inside the
    // window; take the one of largest magnitude.
    let mut best: Option<f64> = None;
    let n = 8192;
    let mut prev_y = -w * (1.0 - 1e-9);
    let mut prev = g(prev_y) - prev_y;
    for i in 1..=n {
        let y = -w * (1.0 - 1e-9) + 2.0 * w * (1.0 - 1e-9) * (i as f64) / (n as f64);
        let cur = g(y) - y;
        if prev != 0.0 && (prev < 0.0) != (cur < 0.0) {
            let root = bisect_root(&|t| g(t) - t, prev_y, y);
            let d = map.jet3(root, lvl.iter).d1;
            if d < 0.0 && root.abs() > 1e-9 {
                if best.map(|b: f64| root.abs() > b.abs()).unwrap_or(true) {
                    best = Some(root);
                }
            }
        }
        prev_y = y;
        prev = cur;
    }
    let q_star = best.ok_or(InducingError::NoReturn)?;
    let fid = Interval::symmetric(q_star.abs());

    // First return time of the critical point to the candidate domain.
    let mut v = g(0.0);
    let mut rt = 0u32;
    for t in 1..=256u32 {
        if fid.contains(v) {
            rt = t;
            break;
        }
        v = g(v);
        if v.abs() > 10.0 {
            break;
        }
    }
    if rt == 0 {
        return Err(InducingError::NoReturn);
    }
    if rt != 3 {
        return Ok(fid);
    }
    // Return time 3: keep the domain if a G-period-3 orbit exists,
    // otherwise shrink to the period-2 point of G inside.
    let count_roots = |f: &dyn Fn(f64) -> f64| -> usize {
        let mut c = 0;
        let mut pv = f(-w * (1.0 - 1e-9));
        for i in 1..=n {
            let y = -w * (1.0 - 1e-9) + 2.0 * w * (1.0 - 1e-9) * (i as f64) / (n as f64);
            let cv = f(y);
            if pv == 0.0 || (pv < 0.0) != (cv < 0.0) {
                c += 1;
            }
            pv = cv;
        }
        c
    };
    let fixed = count_roots(&|y| g(y) - y);
    let period3 = count_roots(&|y| map.eval_n(y, lvl.iter * 3) - y);
    if period3 > fixed {
        return Ok(fid);
    }
    // Period-2 point of G of largest magnitude inside the fid.
    let g2 = |y: f64| map.eval_n(y, lvl.iter * 2);
    let mut qp: Option<f64> = None;
    let mut py = -fid.hi * (1.0 - 1e-9);
    let mut pv = g2(py) - py;
    for i in 1..=n {
        let y = -fid.hi * (1.0 - 1e-9) + 2.0 * fid.hi * (1.0 - 1e-9) * (i as f64) / (n as f64);
        let cv = g2(y) - y;
        if pv != 0.0 && (pv < 0.0) != (cv < 0.0) {
            let root = bisect_root(&|t| g2(t) - t, py, y);
            if (g(root) - root).abs() > 1e-8 && root.abs() > 1e-9 {
                if qp.map(|b: f64| root.abs() > b.abs()).unwrap_or(true) {
                    qp = Some(root);
                }
            }
        }
        py = y;
        pv = cv;
    }
    match qp {
        Some(p) => Ok(Interval::symmetric(p.abs())),
        None => Ok(fid),
    }
}

fn bisect_root(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// First return time of `y` to the open interval `j_iv` under the level
/// map, in level steps, up to `horizon`.
fn return_time(
    map: &QuadraticMap,
    lvl_iter: u32,
    j_iv: Interval,
    y: f64,
    horizon: u32,
) -> Option<u32> {
    let mut v = map.eval_n(y, lvl_iter);
    for t in 1..=horizon {
        if j_iv.contains(v) {
            return Some(t);
        }
        v = map.eval_n(v, lvl_iter);
    }
    None
}

/// Build the first-return induced map on the fundamental inducing
/// domain. Monotone branches are full (onto `J`); the central branch is
/// folding with iterate equal to the first return time of the critical
/// point. Unresolved mass (return time beyond the horizon, or domains
/// below the length cutoff) is reported; a covered fraction below
/// [`tol::MIN_COVERED`] raises `HorizonExceeded`.
pub fn initial_box_map(map: &QuadraticMap, horizon: u32) -> Result<BoxMap, InducingError> {
    let lvl = RenormLevel::top(map)?;
    // The top-level fundamental inducing domain (the classical one).
    let fid = map.fundamental_inducing_domain(horizon)?;
    initial_box_map_on(map, &lvl, fid.interval, horizon)
}

/// Initial induced map of a renormalization level.
pub fn initial_box_map_at(
    map: &QuadraticMap,
    lvl: &RenormLevel,
    horizon: u32,
) -> Result<BoxMap, InducingError> {
    let fid = level_fid(map, lvl)?;
    initial_box_map_on(map, lvl, fid, horizon)
}

fn initial_box_map_on(
    map: &QuadraticMap,
    lvl: &RenormLevel,
    j_iv: Interval,
    horizon: u32,
) -> Result<BoxMap, InducingError> {
    // Constant-return-time blocks in a region, boundaries refined by
    // bisection on the return-time predicate.
    let rt = |y: f64| return_time(map, lvl.iter, j_iv, y, horizon);
    let blocks_in = |region: Interval, n: usize| -> Vec<(Interval, Option<u32>)> {
        let sample = |i: usize| region.lo + region.len() * (i as f64 + 0.5) / (n as f64);
        let samples: Vec<Option<u32>> = (0..n).map(|i| rt(sample(i))).collect();
        let refine = |lo: f64, hi: f64, left: Option<u32>| -> f64 {
            let mut a = lo;
            let mut b = hi;
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if rt(mid) == left {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        };
        let mut out = Vec::new();
        let mut block_start = 0usize;
        let mut block_lo = region.lo;
        let mut i = 1usize;
        while block_start < n {
            while i < n && samples[i] == samples[block_start] {
                i += 1;
            }
            let hi = if i < n {
                refine(sample(i - 1), sample(i), samples[block_start])
            } else {
                region.hi
            };
            if hi > block_lo + tol::EPS_LEN {
                out.push((Interval::new(block_lo, hi), samples[block_start]));
            }
            block_lo = hi;
            block_start = i;
        }
        out
    };

    let mut branches: Vec<Branch> = Vec::new();
    let mut unresolved = 0.0f64;
    let mut central: Option<(Interval, u32)> = None;

    // Adaptive scan: blocks failing the onto-J verification are
    // rescanned at finer resolution (they hide sub-sample branches);
    // residue falls into the unresolved mass.
    let mut queue: Vec<(Interval, usize, u32)> = vec![(j_iv, 1usize << 14, 0u32)];
    while let Some((region, n, depth)) = queue.pop() {
        for (d, code) in blocks_in(region, n) {
            match code {
                None => unresolved += d.len(),
                Some(j) if d.contains(0.0) => {
                    let sym = (-d.lo).min(d.hi);
                    unresolved += d.len() - 2.0 * sym;
                    central = Some((Interval::symmetric(sym), j));
                }
                Some(j) => {
                    let total = j * lvl.iter;
                    let v_lo = map.eval_n(d.lo, total);
                    let v_hi = map.eval_n(d.hi, total);
                    let defect = (v_lo.abs() - j_iv.hi)
                        .abs()
                        .max((v_hi.abs() - j_iv.hi).abs());
                    // Derivative sign must be constant: a sign flip means
                    // the block merged branches across a hidden thin
                    // block, as does an onto defect.
                    let mut flips = false;
                    let mut sign = 0.0f64;
                    for k in 0..=64 {
                        let y = d.lo + d.len() * (k as f64 + 0.5) / 65.0;
                        let dv = map.jet3(y, total).d1;
                        if dv != 0.0 {
                            if sign != 0.0 && dv.signum() != sign {
                                flips = true;
                                break;
                            }
                            sign = dv.signum();
                        }
                    }
                    if defect > 1e-6 * j_iv.len() || flips {
                        if depth < 6 && d.len() > 64.0 * tol::EPS_LEN {
                            queue.push((d, 512, depth + 1));
                        } else {
                            unresolved += d.len();
                        }
                        continue;
                    }
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
                        range_box: 0,
                        margin: None,
                        collar: None,
                    });
                }
            }
        }
    }

    let covered = 1.0 - unresolved / j_iv.len();
    if covered < tol::MIN_COVERED {
        return Err(InducingError::HorizonExceeded { covered });
    }
    let (central_dom, central_j) = central.ok_or(InducingError::NoReturn)?;

    let central_total = central_j * lvl.iter;
    branches.push(Branch {
        domain: central_dom,
        iterate: central_total,
        map: BranchMap::Iterate(central_total),
        kind: BranchKind::Folding,
        range_box: usize::MAX, // fixed below
        margin: None,
        collar: None,
    });
    branches.sort_by(|a, b| a.domain.lo.partial_cmp(&b.domain.lo).unwrap());

    // Box structure: J plus the central domain; the central branch
    // ranges through J (its boundary maps to the boundary of J).
    let boxes = if (central_dom.hi - j_iv.hi).abs() < 1e-9 * j_iv.len() {
        // Degenerate: one folding branch fills J (superstable-type
        // parameter). Keep a single box.
        vec![j_iv]
    } else {
        vec![j_iv, central_dom]
    };
    for b in branches.iter_mut() {
        if b.range_box == usize::MAX {
            b.range_box = 0;
        }
    }
    let mut out = BoxMap {
        base: Dynamics::Quadratic(*map),
        boxes,
        branches,
        rank: 0,
        unresolved_measure: unresolved,
        extendibility: None,
    };
    crate::boxmap::assign_margins(&mut out);
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxmap::{classify, TypeTag};

    #[test]
    fn initial_map_at_3_6_verifies_against_orbits() {
        let q = QuadraticMap::new(3.6).unwrap();
        let m = initial_box_map(&q, 512).unwrap();
        let j_iv = m.j();
        assert_eq!(classify(&m).unwrap(), TypeTag::Full);
        // Every branch satisfies F^j(D) ⊆ J; monotone branches are onto
        // J up to a small endpoint defect.
        for b in &m.branches {
            let n = 64;
            for k in 0..=n {
                let y = b.domain.lo + b.domain.len() * (k as f64) / (n as f64);
                let v = q.eval_n(y, b.iterate);
                assert!(
                    v >= j_iv.lo - 1e-9 && v <= j_iv.hi + 1e-9,
                    "branch escapes J at {y}"
                );
                // No earlier return (first-return property).
                if k > 0 && k < n {
                    let mut w = q.eval(y);
                    for _ in 1..b.iterate {
                        assert!(!j_iv.contains(w), "premature return inside branch");
                        w = q.eval(w);
                    }
                }
            }
            if b.kind.is_monotone() {
                let img = m.branch_image(b);
                assert!((img.lo - j_iv.lo).abs() < 1e-9 && (img.hi - j_iv.hi).abs() < 1e-9);
            }
        }
        // External branches present at both endpoints.
        let first = &m.branches[0];
        let last = m.branches.last().unwrap();
        assert!((first.domain.lo - j_iv.lo).abs() < 1e-9);
        assert!((last.domain.hi - j_iv.hi).abs() < 1e-9);
        assert!(m.unresolved_measure < 0.001 * j_iv.len());
    }

    #[test]
    fn central_iterate_equals_first_return_time() {
        let q = QuadraticMap::new(3.5).unwrap();
        let m = initial_box_map(&q, 256).unwrap();
        let fid = q.fundamental_inducing_domain(256).unwrap();
        assert_eq!(fid.return_time, 2);
        assert_eq!(m.central().unwrap().iterate, 2);
    }

    #[test]
    fn tampered_horizon_reports_coverage() {
        let q = QuadraticMap::new(3.6).unwrap();
        match initial_box_map(&q, 1) {
            Err(InducingError::HorizonExceeded { covered }) => {
                assert!(covered < 1.0);
            }
            other => panic!("expected HorizonExceeded, got {other:?}"),
        }
    }
}
