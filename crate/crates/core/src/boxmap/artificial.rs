//! Artificial box maps: identical combinatorics with all monotone
//! branches affine and a quadratic central branch, the critical value
//! positioned by bisection so the itineraries agree with the source.

use super::extend::assign_margins;
use super::{classify, BoxMap, BoxMapError, Branch, BranchKind, BranchMap, Dynamics, Seg, TypeTag};
use crate::interval::Interval;
use crate::tol;

/// One step of a critical-value itinerary: the positional index of the
/// branch containing the point, or a gap between domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Br(usize),
    Gap,
}

/// Itinerary of the map's own critical value through its branch domains.
pub(crate) fn critical_address(map: &BoxMap, depth: usize) -> Vec<Tok> {
    let central = match map.central() {
        Some(b) => b,
        None => return vec![],
    };
    let mut v = map.eval_map(&central.map, 0.0);
    let mut addr = Vec::with_capacity(depth);
    for _ in 0..depth {
        match map.locate(v) {
            Some(i) => {
                addr.push(Tok::Br(i));
                v = map.eval_map(&map.branches[i].map, v);
            }
            None => {
                addr.push(Tok::Gap);
                break;
            }
        }
    }
    addr
}

/// Build the affine/quadratic skeleton with the central domain scaled by
/// `squeeze` and the critical value `c` (the quadratic coefficient is
/// slaved to `c` by the boundary condition).
fn skeleton(source: &BoxMap, squeeze: f64, c: f64) -> BoxMap {
    let central_src = source.central().expect("artificial source needs a central branch");
    let s_new = central_src.domain.hi * squeeze;
    let range = source.boxes[central_src.range_box];
    // Which endpoint of the range box does the source boundary map to?
    let vb = source.eval_map(&central_src.map, central_src.domain.hi);
    let e = if (vb - range.lo).abs() <= (vb - range.hi).abs() {
        range.lo
    } else {
        range.hi
    };
    let k = (c - e) / (s_new * s_new);
    let mut boxes = source.boxes.clone();
    let last = boxes.len() - 1;
    boxes[last] = Interval::symmetric(s_new);
    let branches = source
        .branches
        .iter()
        .map(|b| {
            if b.kind == BranchKind::Folding {
                Branch {
                    domain: Interval::symmetric(s_new),
                    iterate: 1,
                    map: BranchMap::Chain(vec![Seg::Quad { v: c, k }]),
                    kind: BranchKind::Folding,
                    range_box: b.range_box,
                    margin: None,
                    collar: None,
                }
            } else {
                let r = source.boxes[b.range_box];
                let (a, off) = match b.kind {
                    BranchKind::MonotoneIncreasing => {
                        let a = r.len() / b.domain.len();
                        (a, r.lo - a * b.domain.lo)
                    }
                    _ => {
                        let a = -r.len() / b.domain.len();
                        (a, r.hi - a * b.domain.lo)
                    }
                };
                Branch {
                    domain: b.domain,
                    iterate: 1,
                    map: BranchMap::Chain(vec![Seg::Affine { a, b: off }]),
                    kind: b.kind,
                    range_box: b.range_box,
                    margin: None,
                    collar: None,
                }
            }
        })
        .collect();
    BoxMap {
        base: Dynamics::Artificial,
        boxes,
        branches,
        rank: source.rank,
        unresolved_measure: 0.0,
        extendibility: None,
    }
}

/// Orbit of the critical value with the sensitivity `dy/dc` propagated
/// alongside (the quadratic coefficient depends on `c` through the
/// boundary condition, all other branches are independent of `c`).
fn addr_with_sensitivity(map: &BoxMap, c: f64, depth: usize) -> (Vec<Tok>, Vec<f64>, Vec<f64>) {
    let s_new = map.central_domain().unwrap().hi;
    let mut y = c;
    let mut s = 1.0f64;
    let mut addr = Vec::new();
    let mut ys = Vec::new();
    let mut sens = Vec::new();
    for _ in 0..depth {
        ys.push(y);
        sens.push(s);
        match map.locate(y) {
            Some(i) => {
                addr.push(Tok::Br(i));
                let b = &map.branches[i];
                match &b.map {
                    BranchMap::Chain(segs) => match segs[0] {
                        Seg::Affine { a, b: off } => {
                            y = a * y + off;
                            s *= a;
                        }
                        Seg::Quad { v: _, k } => {
                            let dy = -2.0 * k * y;
                            let dc = 1.0 - (y * y) / (s_new * s_new);
                            y = map.eval_map(&b.map, y);
                            s = dy * s + dc;
                        }
                    },
                    BranchMap::Iterate(_) => unreachable!("artificial skeleton"),
                }
            }
            None => {
                addr.push(Tok::Gap);
                break;
            }
        }
    }
    (addr, ys, sens)
}

/// Position target for a mismatched token: the midpoint of the expected
/// domain, or the nearest gap for `Gap`.
fn token_target(map: &BoxMap, tok: Tok, y: f64) -> f64 {
    match tok {
        Tok::Br(i) => map.branches[i].domain.mid(),
        Tok::Gap => y, // no pressure
    }
}

/// Bisection for a critical value whose itinerary matches `target` to
/// `target.len()` steps.
pub(crate) fn match_critical_value(
    source: &BoxMap,
    squeeze: f64,
    target: &[Tok],
) -> Result<BoxMap, BoxMapError> {
    let central_src = source.central().ok_or_else(|| {
        BoxMapError::InvalidStructure("artificial source needs a central branch".into())
    })?;
    let range = source.boxes[central_src.range_box];
    let pad = 1e-12 * range.len();
    let (mut lo, mut hi) = (range.lo + pad, range.hi - pad);
    let max_iter = tol::ARTIFICIAL_BISECT_DEPTH as usize * target.len().max(1) * 4;
    for _ in 0..max_iter {
        let c = 0.5 * (lo + hi);
        let map = skeleton(source, squeeze, c);
        let (addr, ys, sens) = addr_with_sensitivity(&map, c, target.len());
        let mismatch = (0..target.len()).find(|&t| addr.get(t) != Some(&target[t]));
        let t = match mismatch {
            None => {
                // Matched; tighten the cylinder a little for stability and
                // return the final map.
                return Ok(refine_match(source, squeeze, target, lo, hi));
            }
            Some(t) => t,
        };
        if t >= ys.len() {
            // Orbit left the domain early; push toward the last target.
            hi = c;
            continue;
        }
        let want = token_target(&map, target[t], ys[t]);
        let err = want - ys[t];
        let dir = if sens[t] != 0.0 {
            (err / sens[t]).signum()
        } else {
            1.0
        };
        if dir > 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        if hi - lo < 1e-15 * range.len() {
            break;
        }
    }
    Err(BoxMapError::ItineraryMismatch)
}

/// Narrow the matching bracket by extending the matched depth while the
/// source address stays defined; returns the midpoint map.
fn refine_match(source: &BoxMap, squeeze: f64, target: &[Tok], lo0: f64, hi0: f64) -> BoxMap {
    let deep = critical_address(source, 48);
    let (mut lo, mut hi) = (lo0, hi0);
    let matches = |c: f64, depth: usize| -> bool {
        let map = skeleton(source, squeeze, c);
        let (addr, _, _) = addr_with_sensitivity(&map, c, depth);
        (0..depth.min(deep.len())).all(|t| addr.get(t) == Some(&deep[t]))
    };
    let mut c = 0.5 * (lo + hi);
    for depth in (target.len()..=deep.len()).step_by(4) {
        if depth == 0 {
            break;
        }
        // Shrink the bracket onto the set matching this depth by probing.
        let probes = 32;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..=probes {
            let x = lo + (hi - lo) * (i as f64) / (probes as f64);
            if matches(x, depth) {
                best = Some(match best {
                    None => (x, x),
                    Some((a, b)) => (a.min(x), b.max(x)),
                });
            }
        }
        match best {
            Some((a, b)) => {
                lo = a;
                hi = b;
                c = 0.5 * (lo + hi);
                if hi - lo < 1e-13 {
                    break;
                }
            }
            None => break,
        }
    }
    skeleton(source, squeeze, c)
}

/// Build an artificial map conjugate to `source` at itinerary depth
/// [`tol::ARTIFICIAL_ITIN_DEPTH`]: identical combinatorics, affine
/// monotone branches, quadratic central branch with the central domain
/// scaled by `squeeze`.
pub fn build_artificial(source: &BoxMap, squeeze: f64) -> Result<BoxMap, BoxMapError> {
    assert!(squeeze > 0.0 && squeeze <= 1.0);
    let tag = classify(source)?;
    if !matches!(tag, TypeTag::TypeI | TypeTag::TypeII) {
        return Err(BoxMapError::WrongType(tag));
    }
    let target = critical_address(source, tol::ARTIFICIAL_ITIN_DEPTH);
    if target.is_empty() {
        return Err(BoxMapError::InvalidStructure(
            "source has no critical itinerary".into(),
        ));
    }
    let mut out = match_critical_value(source, squeeze, &target)?;
    assign_margins(&mut out);
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A hand-built artificial type II map with two short branches, two
    /// long external branches and a quadratic central branch.
    pub(crate) fn toy_type_ii(c: f64) -> BoxMap {
        let j = Interval::new(-1.0, 1.0);
        let bp = Interval::new(-0.5, 0.5);
        let b = Interval::new(-0.05, 0.05);
        let s2 = 0.05 * 0.05;
        let mut m = BoxMap {
            base: Dynamics::Artificial,
            boxes: vec![j, bp, b],
            branches: vec![
                Branch {
                    domain: Interval::new(-1.0, -0.5),
                    iterate: 1,
                    map: BranchMap::Chain(vec![Seg::Affine { a: 4.0, b: 3.0 }]),
                    kind: BranchKind::MonotoneIncreasing,
                    range_box: 0,
                    margin: None,
                    collar: None,
                },
                Branch {
                    domain: Interval::new(-0.2, -0.1),
                    iterate: 1,
                    // decreasing onto B' = (-0.5, 0.5)
                    map: BranchMap::Chain(vec![Seg::Affine { a: -10.0, b: -1.5 }]),
                    kind: BranchKind::MonotoneDecreasing,
                    range_box: 1,
                    margin: None,
                    collar: None,
                },
                Branch {
                    domain: b,
                    iterate: 1,
                    map: BranchMap::Chain(vec![Seg::Quad {
                        v: c,
                        k: (c + 0.5) / s2,
                    }]),
                    kind: BranchKind::Folding,
                    range_box: 1,
                    margin: None,
                    collar: None,
                },
                Branch {
                    domain: Interval::new(0.1, 0.2),
                    iterate: 1,
                    // increasing onto B'
                    map: BranchMap::Chain(vec![Seg::Affine { a: 10.0, b: -1.5 }]),
                    kind: BranchKind::MonotoneIncreasing,
                    range_box: 1,
                    margin: None,
                    collar: None,
                },
                Branch {
                    domain: Interval::new(0.5, 1.0),
                    iterate: 1,
                    map: BranchMap::Chain(vec![Seg::Affine { a: -4.0, b: 3.0 }]),
                    kind: BranchKind::MonotoneDecreasing,
                    range_box: 0,
                    margin: None,
                    collar: None,
                },
            ],
            rank: 1,
            unresolved_measure: 0.0,
            extendibility: None,
        };
        assign_margins(&mut m);
        m
    }

    #[test]
    fn toy_is_type_ii() {
        let m = toy_type_ii(-1.0 / 6.0);
        assert_eq!(classify(&m).unwrap(), TypeTag::TypeII);
    }

    #[test]
    fn fixed_point_of_construction() {
        // A source that is already affine/quadratic with squeeze = 1:
        // the rebuilt map must agree with the source.
        let src = toy_type_ii(-1.0 / 6.0);
        let out = build_artificial(&src, 1.0).unwrap();
        assert_eq!(out.branches.len(), src.branches.len());
        let c_src = src.eval_map(&src.central().unwrap().map, 0.0);
        let c_out = out.eval_map(&out.central().unwrap().map, 0.0);
        assert!(
            (c_src - c_out).abs() < 1e-6,
            "critical value drifted: {c_src} vs {c_out}"
        );
        for (a, b) in src.branches.iter().zip(out.branches.iter()) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.range_box, b.range_box);
        }
    }

    #[test]
    fn squeeze_preserves_type_and_itinerary() {
        let src = toy_type_ii(-1.0 / 6.0);
        let out = build_artificial(&src, 0.8).unwrap();
        assert_eq!(classify(&out).unwrap(), TypeTag::TypeII);
        let depth = tol::ARTIFICIAL_ITIN_DEPTH;
        assert_eq!(
            critical_address(&src, depth),
            critical_address(&out, depth)
        );
        // Central domain scaled by the squeeze factor.
        let s_src = src.central_domain().unwrap().hi;
        let s_out = out.central_domain().unwrap().hi;
        assert!((s_out - 0.8 * s_src).abs() < 1e-12);
    }

    #[test]
    fn impossible_itinerary_is_rejected() {
        let src = toy_type_ii(-1.0 / 6.0);
        // Branch 0 maps (-1,-0.5) onto J; demanding the critical value
        // orbit visit branch 0 first is impossible since the critical
        // value lies in B' = (-0.5, 0.5).
        let bogus = vec![Tok::Br(0), Tok::Br(0), Tok::Br(0)];
        assert!(matches!(
            match_critical_value(&src, 1.0, &bogus),
            Err(BoxMapError::ItineraryMismatch)
        ));
    }
}
