//! The five inducing operations, boundary refinement and suitable-map
//! detection.
//!
//! All operations share one pullback engine: a branch is composed with
//! the branches of a second map by partitioning its domain into
//! preimages of the target domains. Pieces that only partially cover a
//! target (clipped pieces) arise where a folding image ends inside a
//! domain; depending on the operation they are kept, recursed, or become
//! the new central branch. Every truncated limit reports the measure it
//! dropped.

use super::step::TraceParent;
use super::InducingError;
use crate::boxmap::{BoxMap, Branch, BranchKind, BranchMap, Dynamics};
use crate::interval::Interval;
use crate::tol;

/// Sentinel range id for pieces mapping onto the new central domain.
pub(crate) const NEW_CENTRAL: usize = usize::MAX;

/// A pullback target: a branch-like entry or an identity region.
#[derive(Clone, Debug)]
pub(crate) struct Target {
    pub dom: Interval,
    /// `None` is the identity.
    pub map: Option<(BranchMap, u32)>,
    pub range: usize,
    pub parent: TraceParent,
    /// The target is a folding branch: a composite through it folds
    /// wherever the incoming image covers 0.
    pub folds: bool,
}

/// A produced piece, prior to kind/box resolution.
#[derive(Clone, Debug)]
pub(crate) struct Piece {
    pub domain: Interval,
    pub map: BranchMap,
    pub iterate: u32,
    pub range: usize,
    /// The through-image covered only part of the target domain.
    pub clipped: bool,
    pub parent: TraceParent,
    pub folding: bool,
    /// Composition depth in the current truncated limit.
    pub depth: u32,
}

impl Piece {
    fn into_branch(self, map: &BoxMap) -> Branch {
        let kind = if self.folding {
            BranchKind::Folding
        } else {
            let mid = self.domain.mid();
            let quarter = self.domain.len() * 0.25;
            let d = map.deriv_map(&self.map, mid + quarter) + map.deriv_map(&self.map, mid);
            if d >= 0.0 {
                BranchKind::MonotoneIncreasing
            } else {
                BranchKind::MonotoneDecreasing
            }
        };
        Branch {
            domain: self.domain,
            iterate: self.iterate,
            map: self.map,
            kind,
            range_box: self.range,
            margin: None,
            collar: None,
        }
    }
}

/// Targets of `src`: its branches, with the central branch optionally
/// replaced by the identity on its domain.
pub(crate) fn targets_of(src: &BoxMap, identity_central: bool) -> Vec<Target> {
    let mut out = Vec::with_capacity(src.branches.len());
    for (i, b) in src.branches.iter().enumerate() {
        if identity_central && b.kind == BranchKind::Folding {
            out.push(Target {
                dom: b.domain,
                map: None,
                range: b.range_box,
                parent: TraceParent::Identity,
                folds: false,
            });
        } else {
            out.push(Target {
                dom: b.domain,
                map: Some((b.map.clone(), b.iterate)),
                range: b.range_box,
                parent: TraceParent::Source(i),
                folds: b.kind == BranchKind::Folding,
            });
        }
    }
    out
}

fn compose(through: &BranchMap, through_iter: u32, target: &Option<(BranchMap, u32)>) -> (BranchMap, u32) {
    match target {
        None => (through.clone(), through_iter),
        Some((m, j)) => (through.then(m), through_iter + j),
    }
}

/// Pull a monotone map on `dom` back through the targets.
pub(crate) fn pull_monotone_through(
    map: &BoxMap,
    through: &BranchMap,
    through_iter: u32,
    dom: Interval,
    targets: &[Target],
) -> (Vec<Piece>, f64) {
    let flo = map.eval_map(through, dom.lo);
    let fhi = map.eval_map(through, dom.hi);
    if !(flo.max(fhi) > flo.min(fhi)) {
        return (Vec::new(), dom.len());
    }
    let img = Interval::new(flo.min(fhi), flo.max(fhi));
    let mut pieces = Vec::new();
    let mut covered = 0.0f64;
    for t in targets {
        let hit = match img.intersect(&t.dom) {
            Some(h) => h,
            None => continue,
        };
        if hit.len() < tol::EPS_LEN {
            continue;
        }
        if let Some(piece_dom) = map.preimage_interval(through, dom, t.dom) {
            let (m, j) = compose(through, through_iter, &t.map);
            let clipped = hit.len() < t.dom.len() - tol::EPS_LEN;
            covered += piece_dom.len();
            pieces.push(Piece {
                domain: piece_dom,
                map: m,
                iterate: j,
                range: t.range,
                clipped,
                parent: t.parent,
                folding: t.folds && hit.contains(0.0),
                depth: 0,
            });
        }
    }
    let dropped = (dom.len() - covered).max(0.0);
    (pieces, dropped)
}

/// Result of pulling a folding branch back through targets.
pub(crate) struct FoldPull {
    /// The symmetric piece around 0 (present when the critical value
    /// lies inside a target domain), already composed.
    pub center: Option<(Piece, TraceParent)>,
    pub sides: Vec<Piece>,
    pub dropped: f64,
}

/// Pull the folding branch `psi` back through the targets. Side pieces
/// come in mirror pairs; the center piece is folding and symmetric.
pub(crate) fn pull_folding_through(
    map: &BoxMap,
    psi: &Branch,
    targets: &[Target],
) -> FoldPull {
    let s = psi.domain.hi;
    let v0 = map.eval_map(&psi.map, 0.0);
    let vs = map.eval_map(&psi.map, s);
    let half = Interval::new(0.0, s);
    let mut center = None;
    let mut sides = Vec::new();
    let mut covered = 0.0f64;
    for t in targets {
        if t.dom.contains(v0) {
            // Central piece: from 0 out to where psi exits the target.
            let e_hit = if vs > v0 { t.dom.hi.min(vs) } else { t.dom.lo.max(vs) };
            let tstar = map
                .invert_on(&psi.map, half, e_hit)
                .unwrap_or(s)
                .clamp(0.0, s);
            if tstar > tol::EPS_LEN {
                let (m, j) = compose(&psi.map, psi.iterate, &t.map);
                covered += 2.0 * tstar;
                center = Some((
                    Piece {
                        domain: Interval::symmetric(tstar),
                        map: m,
                        iterate: j,
                        range: t.range,
                        clipped: true,
                        parent: t.parent,
                        folding: true,
                        depth: 0,
                    },
                    t.parent,
                ));
            }
            continue;
        }
        // Side pieces: monotone preimages on the right half, mirrored.
        if let Some(piece_r) = map.preimage_interval(&psi.map, half, t.dom) {
            if piece_r.len() >= tol::EPS_LEN && piece_r.lo > 0.0 {
                let (m, j) = compose(&psi.map, psi.iterate, &t.map);
                let ia = map.eval_map(&psi.map, piece_r.lo);
                let ib = map.eval_map(&psi.map, piece_r.hi);
                if !(ia.max(ib) > ia.min(ib)) {
                    continue;
                }
                let img = Interval::new(ia.min(ib), ia.max(ib));
                let clipped = img.len() < t.dom.len() - tol::EPS_LEN;
                let piece_folds =
                    t.folds && img.intersect(&t.dom).map(|h| h.contains(0.0)).unwrap_or(false);
                covered += 2.0 * piece_r.len();
                sides.push(Piece {
                    domain: piece_r,
                    map: m.clone(),
                    iterate: j,
                    range: t.range,
                    clipped,
                    parent: t.parent,
                    folding: piece_folds,
                    depth: 0,
                });
                sides.push(Piece {
                    domain: Interval::new(-piece_r.hi, -piece_r.lo),
                    map: m,
                    iterate: j,
                    range: t.range,
                    clipped,
                    parent: t.parent,
                    folding: piece_folds,
                    depth: 0,
                });
            }
        }
    }
    FoldPull {
        center,
        sides,
        dropped: (psi.domain.len() - covered).max(0.0),
    }
}

/// Assemble a box map from pieces carrying old box ids (plus the
/// `NEW_CENTRAL` sentinel): the new box list keeps the old boxes still
/// ranged through and appends the central domain as the innermost box.
pub(crate) fn rebuild(
    base: Dynamics,
    old_boxes: &[Interval],
    mut branches: Vec<Branch>,
    rank: u32,
    mut unresolved: f64,
) -> Result<BoxMap, InducingError> {
    // Branch budget: keep the longest domains (and always the folding
    // branch); everything else is truncated into the unresolved mass.
    if branches.len() > tol::MAX_BRANCHES {
        let mut order: Vec<usize> = (0..branches.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = branches[a].kind == BranchKind::Folding;
            let fb = branches[b].kind == BranchKind::Folding;
            fb.cmp(&fa)
                .then(branches[b].domain.len().partial_cmp(&branches[a].domain.len()).unwrap())
        });
        let keep: std::collections::BTreeSet<usize> =
            order[..tol::MAX_BRANCHES].iter().cloned().collect();
        let mut kept = Vec::with_capacity(tol::MAX_BRANCHES);
        for (i, b) in branches.into_iter().enumerate() {
            if keep.contains(&i) {
                kept.push(b);
            } else {
                unresolved += b.domain.len();
            }
        }
        branches = kept;
    }
    branches.sort_by(|a, b| a.domain.lo.partial_cmp(&b.domain.lo).unwrap());
    // Overlap normalization: endpoint inversion through deep
    // compositions is ill-conditioned, so adjacent pieces can
    // double-cover a sliver. Trim when the overlap is a small fraction
    // of the pieces; drop the smaller piece into the unresolved mass
    // when it is not.
    let mut dropped_idx: Vec<usize> = Vec::new();
    let mut last_kept = 0usize;
    for i in 1..branches.len() {
        if dropped_idx.last() == Some(&(i - 1)) {
        } else {
            last_kept = i - 1;
        }
        let prev_hi = branches[last_kept].domain.hi;
        let d = branches[i].domain;
        if d.lo < prev_hi {
            let overlap = prev_hi - d.lo;
            let small = d.len().min(branches[last_kept].domain.len());
            if overlap <= 0.5 * small && prev_hi < d.hi {
                branches[i].domain = Interval::new(prev_hi, d.hi);
            } else if d.len() <= branches[last_kept].domain.len() {
                unresolved += d.len();
                dropped_idx.push(i);
            } else {
                unresolved += branches[last_kept].domain.len();
                dropped_idx.push(last_kept);
                last_kept = i;
            }
        }
    }
    for (n, i) in dropped_idx.into_iter().enumerate() {
        branches.remove(i - n);
    }
    branches.retain(|b| b.domain.len() > tol::EPS_LEN);
    let central_dom = branches
        .iter()
        .find(|b| b.kind == BranchKind::Folding)
        .map(|b| b.domain);
    // Which old boxes stay in use?
    let mut used: Vec<bool> = vec![false; old_boxes.len()];
    used[0] = true;
    for b in &branches {
        if b.range_box != NEW_CENTRAL {
            used[b.range_box] = true;
        }
    }
    let mut boxes: Vec<Interval> = Vec::new();
    let mut old_to_new: Vec<usize> = vec![usize::MAX; old_boxes.len()];
    for (i, bx) in old_boxes.iter().enumerate() {
        if used[i] {
            // Skip old boxes that coincide with the new central domain.
            if let Some(cd) = central_dom {
                if (bx.lo - cd.lo).abs() < 1e-12 && (bx.hi - cd.hi).abs() < 1e-12 {
                    old_to_new[i] = NEW_CENTRAL;
                    continue;
                }
            }
            old_to_new[i] = boxes.len();
            boxes.push(*bx);
        }
    }
    let new_central_id = if let Some(cd) = central_dom {
        boxes.push(cd);
        boxes.len() - 1
    } else {
        boxes.len().saturating_sub(1)
    };
    for b in branches.iter_mut() {
        b.range_box = if b.range_box == NEW_CENTRAL {
            new_central_id
        } else {
            let id = old_to_new[b.range_box];
            if id == NEW_CENTRAL {
                new_central_id
            } else {
                id
            }
        };
    }
    let out = BoxMap {
        base,
        boxes,
        branches,
        rank,
        unresolved_measure: unresolved,
        extendibility: None,
    };
    out.validate()?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// The external branch index on a side, if its domain touches the
/// endpoint of `J`.
fn external_branch(map: &BoxMap, side: Side) -> Option<usize> {
    let j = map.j();
    let pad = 1e-9 * j.len();
    match side {
        Side::Left => {
            let b = map.branches.first()?;
            ((b.domain.lo - j.lo).abs() < pad).then_some(0)
        }
        Side::Right => {
            let i = map.branches.len().checked_sub(1)?;
            let b = &map.branches[i];
            ((b.domain.hi - j.hi).abs() < pad).then_some(i)
        }
    }
}

/// Refinement at a boundary: repeatedly pull the current map (with the
/// central branch treated as the identity) back through the external
/// branch. The right external branch fixes the endpoint `q`; the left
/// external maps its endpoint to `q`, so its refinement composes with
/// the right-refined map.
pub fn refine_at_boundary(
    map: &BoxMap,
    side: Side,
    depth: u32,
) -> Result<BoxMap, InducingError> {
    if depth == 0 {
        return Ok(map.clone());
    }
    let bi = external_branch(map, side).ok_or(InducingError::NoExternalBranch)?;
    let b = &map.branches[bi];
    if b.range_box != 0 || !b.kind.is_monotone() {
        return Err(InducingError::BranchNotOntoJ);
    }
    match side {
        Side::Right => {
            // Endpoint must be a repelling fixed point of the branch.
            let e = map.j().hi;
            let fe = map.eval_map(&b.map, e);
            let de = map.deriv_map(&b.map, e);
            if (fe - e).abs() > 1e-7 * map.j().len() || de.abs() <= 1.0 {
                return Err(InducingError::NotRepelling);
            }
            let mut cur = map.clone();
            for _ in 0..depth {
                let idx = external_branch(&cur, Side::Right).ok_or(InducingError::NoExternalBranch)?;
                cur = pull_selected(&cur, &[idx], &cur.clone())?;
            }
            Ok(cur)
        }
        Side::Left => {
            // Compose the left external with the right-refined version.
            let refined = refine_at_boundary(map, Side::Right, depth.saturating_sub(1).max(1))?;
            let idx = external_branch(map, Side::Left).ok_or(InducingError::NoExternalBranch)?;
            pull_selected(map, &[idx], &refined)
        }
    }
}

/// Shared body of simultaneous monotone pull-back.
fn pull_selected(
    map: &BoxMap,
    branch_ids: &[usize],
    refined: &BoxMap,
) -> Result<BoxMap, InducingError> {
    for &i in branch_ids {
        if map.branches[i].range_box != 0 || !map.branches[i].kind.is_monotone() {
            return Err(InducingError::BranchNotOntoJ);
        }
    }
    let targets = targets_of(refined, true);
    let mut branches = Vec::new();
    let mut unresolved = map.unresolved_measure;
    for (i, b) in map.branches.iter().enumerate() {
        if branch_ids.contains(&i) {
            let (pieces, dropped) =
                pull_monotone_through(map, &b.map, b.iterate, b.domain, &targets);
            unresolved += dropped;
            for p in pieces {
                branches.push(p.into_branch(map));
            }
        } else {
            branches.push(b.clone());
        }
    }
    rebuild(map.base.clone(), &map.boxes, branches, map.rank, unresolved)
}

/// Simultaneous monotone pull-back: on each selected branch (which must
/// range through `J`), the new map is (refined with its central branch
/// replaced by the identity) composed with the branch. Box and
/// extendibility structures are unchanged.
pub fn simultaneous_monotone_pullback(
    map: &BoxMap,
    branch_ids: &[usize],
    refined: &BoxMap,
) -> Result<BoxMap, InducingError> {
    if branch_ids.is_empty() {
        return Ok(map.clone());
    }
    pull_selected(map, branch_ids, refined)
}

/// Filling-in: eliminate the box `box_id` (strictly between `B0` and the
/// central domain) by repeatedly composing branches mapping onto it with
/// the source (central branch as identity). Truncated at
/// [`tol::EPS_LEN`]; the dropped measure is reported.
pub fn filling_in(
    map: &BoxMap,
    source: &BoxMap,
    box_id: usize,
) -> Result<BoxMap, InducingError> {
    if box_id == 0 || box_id + 1 >= map.boxes.len() {
        return Err(InducingError::BadBox);
    }
    let targets = targets_of(source, true);
    let mut final_branches: Vec<Branch> = Vec::new();
    let mut work: Vec<Piece> = Vec::new();
    let mut unresolved = map.unresolved_measure;
    for b in &map.branches {
        if b.kind.is_monotone() && b.range_box == box_id {
            work.push(Piece {
                domain: b.domain,
                map: b.map.clone(),
                iterate: b.iterate,
                range: b.range_box,
                clipped: false,
                parent: TraceParent::Identity,
                folding: false,
                depth: 0,
            });
        } else {
            final_branches.push(b.clone());
        }
    }
    let mut pops = 0usize;
    while let Some(p) = work.pop() {
        pops += 1;
        if pops > 50_000 || p.depth >= tol::LIMIT_DEPTH {
            unresolved += p.domain.len();
            if pops > 50_000 {
                unresolved += work.iter().map(|w| w.domain.len()).sum::<f64>();
                break;
            }
            continue;
        }
        let (pieces, dropped) =
            pull_monotone_through(map, &p.map, p.iterate, p.domain, &targets);
        unresolved += dropped;
        for mut q in pieces {
            q.depth = p.depth + 1;
            if q.domain.len() < tol::EPS_LEN {
                unresolved += q.domain.len();
            } else if q.range == box_id && !q.folding {
                work.push(q);
            } else {
                final_branches.push(q.into_branch(map));
            }
        }
    }
    rebuild(
        map.base.clone(),
        &map.boxes,
        final_branches,
        map.rank,
        unresolved,
    )
}

/// Simple critical pull-back: replace the central branch by (source
/// with central branch as identity) composed with it.
pub fn simple_critical_pullback(
    map: &BoxMap,
    source: &BoxMap,
) -> Result<BoxMap, InducingError> {
    let psi = map.central().ok_or(InducingError::WrongInputType)?.clone();
    require_not_refined(source)?;
    let targets = targets_of(source, true);
    let pull = pull_folding_through(map, &psi, &targets);
    let (center, _) = pull
        .center
        .ok_or_else(|| InducingError::ConstructionDefect("critical value in an unresolved gap".into()))?;
    let mut branches: Vec<Branch> = map
        .branches
        .iter()
        .filter(|b| b.kind != BranchKind::Folding)
        .cloned()
        .collect();
    branches.push(center.into_branch(map));
    let mut unresolved = map.unresolved_measure + pull.dropped;
    for p in pull.sides {
        if p.domain.len() < tol::EPS_LEN {
            unresolved += p.domain.len();
        } else {
            branches.push(p.into_branch(map));
        }
    }
    rebuild(map.base.clone(), &map.boxes, branches, map.rank, unresolved)
}

fn require_not_refined(source: &BoxMap) -> Result<(), InducingError> {
    for side in [Side::Left, Side::Right] {
        if external_branch(source, side).is_none() {
            return Err(InducingError::SourceRefinedAtBoundary);
        }
    }
    Ok(())
}

/// Almost parabolic critical pull-back. Requires a low close return:
/// the critical value lies in the central domain and 0 is not in the
/// central range. Points with exit time `e(x) < l` are recomposed with
/// the source after `e(x)` central iterations; the exit-time-`l` core
/// around 0 keeps the original central branch.
pub fn almost_parabolic_pullback(
    map: &BoxMap,
    source: &BoxMap,
) -> Result<BoxMap, InducingError> {
    let psi = map.central().ok_or(InducingError::WrongInputType)?.clone();
    let b_dom = psi.domain;
    let v0 = map.eval_map(&psi.map, 0.0);
    if !b_dom.contains(v0) {
        return Err(InducingError::NotCloseReturn);
    }
    let img = map.branch_image(&psi);
    if img.contains(0.0) {
        return Err(InducingError::ConstructionDefect(
            "almost parabolic pull-back requires a low return".into(),
        ));
    }
    // Escape index of the critical value.
    let cap = 4096usize;
    let mut v = v0;
    let mut l = 1usize;
    loop {
        if !b_dom.contains(v) {
            break;
        }
        v = map.eval_map(&psi.map, v);
        l += 1;
        if l > cap {
            return Err(InducingError::NoEscape);
        }
    }
    if l < 2 {
        return Err(InducingError::NotCloseReturn);
    }

    // Exit-time thresholds on the positive side: x_j = boundary between
    // e > j and e <= j, with e decreasing in |x|.
    let s = b_dom.hi;
    let exit_time = |x: f64| -> usize {
        let mut w = x;
        for e in 1..=l {
            w = map.eval_map(&psi.map, w);
            if !b_dom.contains(w) {
                return e;
            }
        }
        l
    };
    let mut thresholds = vec![s]; // x_0 = s
    for j in 1..l {
        let mut lo = 0.0f64;
        let mut hi = thresholds[j - 1];
        // e(hi) <= j, find the sup of e > j.
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if exit_time(mid) > j {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        thresholds.push(0.5 * (lo + hi));
    }

    let targets = targets_of(source, false);
    let mut branches: Vec<Branch> = map
        .branches
        .iter()
        .filter(|b| b.kind != BranchKind::Folding)
        .cloned()
        .collect();
    let mut unresolved = map.unresolved_measure;

    // Side cells with exit time j < l, recomposed through the source.
    for j in 1..l {
        let cell = Interval::new(thresholds[j], thresholds[j - 1]);
        if cell.len() < tol::EPS_LEN {
            continue;
        }
        // psi^j restricted to the cell: build the composed map.
        let mut m = psi.map.clone();
        for _ in 1..j {
            m = m.then(&psi.map);
        }
        let iter_j = psi.iterate * j as u32;
        let (pieces, dropped) = pull_monotone_through(map, &m, iter_j, cell, &targets);
        unresolved += dropped;
        for p in pieces.into_iter() {
            if p.domain.len() < tol::EPS_LEN {
                unresolved += p.domain.len();
                continue;
            }
            let mirrored = Piece {
                domain: Interval::new(-p.domain.hi, -p.domain.lo),
                ..p.clone()
            };
            let mut q = p;
            if q.clipped {
                q.range = snap_range(&map.boxes, imag_hull(map, &q));
            }
            let mut qm = mirrored;
            if qm.clipped {
                qm.range = q.range;
            }
            branches.push(q.into_branch(map));
            branches.push(qm.into_branch(map));
        }
    }

    // The exit-time-l core keeps the central branch unchanged; it now
    // ranges through the old central domain.
    let core = Interval::symmetric(thresholds[l - 1].max(tol::EPS_LEN));
    let old_central_box = map.boxes.len() - 1;
    branches.push(Branch {
        domain: core,
        iterate: psi.iterate,
        map: psi.map.clone(),
        kind: BranchKind::Folding,
        range_box: old_central_box,
        margin: None,
        collar: None,
    });
    rebuild(map.base.clone(), &map.boxes, branches, map.rank, unresolved)
}

fn imag_hull(map: &BoxMap, p: &Piece) -> Interval {
    let a = map.eval_map(&p.map, p.domain.lo);
    let b = map.eval_map(&p.map, p.domain.hi);
    let s = a.abs().max(b.abs()).max(1e-300);
    Interval::symmetric(s)
}

/// Smallest old box containing the hull.
fn snap_range(boxes: &[Interval], hull: Interval) -> usize {
    let mut best = 0usize;
    for (i, b) in boxes.iter().enumerate() {
        if b.contains_interval(&hull) && b.len() <= boxes[best].len() {
            best = i;
        }
    }
    best
}

/// Critical pull-back with filling-in: the truncated limit of the
/// paper's double sequence. The outcome is `Full` when the critical
/// value lies in a long monotone domain of the source, `TypeI` when in
/// a short monotone or the central domain, and Markov (represented as
/// `Full` without a folding branch) when outside the source's domain.
pub fn critical_pullback_filling(
    map: &BoxMap,
    source: &BoxMap,
) -> Result<(BoxMap, crate::boxmap::TypeTag), InducingError> {
    use crate::boxmap::TypeTag;
    let tag_in = crate::boxmap::classify(map)?;
    if !matches!(tag_in, TypeTag::Full | TypeTag::TypeI) {
        return Err(InducingError::WrongInputType);
    }
    let psi = map.central().ok_or(InducingError::WrongInputType)?.clone();
    let v0 = map.eval_map(&psi.map, 0.0);

    // Locate the critical value inside the source.
    let d_star = source.locate(v0);
    let src_central_idx = source.central_idx();
    let claimed_tag = match d_star {
        None => TypeTag::Full, // Markov
        Some(i) if Some(i) == src_central_idx => TypeTag::TypeI,
        Some(i) => {
            if source.branches[i].range_box == 0 {
                TypeTag::Full
            } else {
                TypeTag::TypeI
            }
        }
    };

    // The new central domain P: the folding piece of psi over the
    // domain containing the critical value (the source central domain
    // itself for a close return).
    let d_star_target = match d_star {
        None => None,
        Some(i) if Some(i) == src_central_idx => Some(Target {
            dom: source.branches[i].domain,
            map: None,
            range: source.branches[i].range_box,
            parent: TraceParent::Identity,
            folds: false,
        }),
        Some(i) => Some(Target {
            dom: source.branches[i].domain,
            map: Some((source.branches[i].map.clone(), source.branches[i].iterate)),
            range: source.branches[i].range_box,
            parent: TraceParent::Source(i),
            folds: false,
        }),
    };
    let mut unresolved = map.unresolved_measure;
    let new_central_dom = match &d_star_target {
        Some(t) => pull_folding_through(map, &psi, std::slice::from_ref(t))
            .center
            .map(|(p, _)| p.domain),
        None => None,
    };

    // Targets for the recursion: source monotone branches, the two
    // monotone sides of the central branch outside the new central
    // domain, and the identity on the new central domain (pieces
    // reaching it become the short branches of the outcome).
    let mut rec_targets: Vec<Target> = targets_of(source, false)
        .into_iter()
        .filter(|t| !t.folds)
        .collect();
    let src_central = source.central().ok_or(InducingError::WrongInputType)?.clone();
    let src_b = src_central.domain;
    match new_central_dom {
        Some(cd) => {
            for side in [
                Interval::new(src_b.lo, cd.lo.max(src_b.lo + tol::EPS_LEN)),
                Interval::new(cd.hi.min(src_b.hi - tol::EPS_LEN), src_b.hi),
            ] {
                if side.len() > tol::EPS_LEN {
                    rec_targets.push(Target {
                        dom: side,
                        map: Some((src_central.map.clone(), src_central.iterate)),
                        range: src_central.range_box,
                        parent: TraceParent::Identity,
                        folds: false,
                    });
                }
            }
            rec_targets.push(Target {
                dom: cd,
                map: None,
                range: NEW_CENTRAL,
                parent: TraceParent::Identity,
                folds: false,
            });
        }
        None => {
            // Markov case: the central region recurses through the fold.
            rec_targets.push(Target {
                dom: src_b,
                map: Some((src_central.map.clone(), src_central.iterate)),
                range: src_central.range_box,
                parent: TraceParent::Identity,
                folds: true,
            });
        }
    }

    // Seed: the central pullback through the recursion targets (its
    // center piece is the new central branch) plus every short branch
    // composed with psi.
    let first = pull_folding_through(map, &psi, &rec_targets);
    unresolved += first.dropped;
    let central_piece = first.center.clone().map(|(p, _)| p);

    let central_box_idx = map.boxes.len() - 1;
    let mut final_branches: Vec<Branch> = Vec::new();
    let mut b_finals: Vec<Piece> = Vec::new();
    let mut work: Vec<Piece> = Vec::new();
    for p in first.sides {
        work.push(p);
    }

    // Phase 1: resolve the central pullback inside B. A clipped piece is
    // recomposed through the targets; an unclipped piece is final.
    // Folding worklist pieces split at their interior fold.
    let mut pops = 0usize;
    while let Some(p) = work.pop() {
        pops += 1;
        if pops > 50_000 || p.depth >= tol::LIMIT_DEPTH {
            unresolved += p.domain.len();
            if pops > 50_000 {
                unresolved += work.iter().map(|w| w.domain.len()).sum::<f64>();
                break;
            }
            continue;
        }
        if p.domain.len() < tol::EPS_LEN {
            unresolved += p.domain.len();
            continue;
        }
        if p.folding && !p.domain.contains(0.0) {
            if let Some((left, right)) = split_at_fold(map, &p) {
                work.push(left);
                work.push(right);
            } else {
                unresolved += p.domain.len();
            }
            continue;
        }
        if p.folding {
            // A centered fold re-enters the pull (Markov recursion).
            let (pieces, dropped) = fold_recurse(map, &p, &rec_targets);
            unresolved += dropped;
            for mut q in pieces {
                q.depth = p.depth + 1;
                work.push(q);
            }
            continue;
        }
        if !p.clipped {
            b_finals.push(p);
            continue;
        }
        let (pieces, dropped) =
            pull_monotone_through(map, &p.map, p.iterate, p.domain, &rec_targets);
        unresolved += dropped;
        if pieces.is_empty() {
            unresolved += p.domain.len();
            continue;
        }
        for mut q in pieces {
            q.depth = p.depth + 1;
            work.push(q);
        }
    }

    // Phase 2: short branches receive the transformed copy of the
    // resolved structure inside B (one shallow inversion per piece), and
    // a folding remainder over the preimage of the new central domain
    // that is split and recursed.
    for b in &map.branches {
        if b.kind == BranchKind::Folding {
            continue;
        }
        let short = b.range_box == central_box_idx;
        if !short {
            final_branches.push(b.clone());
            continue;
        }
        let mut covered = 0.0f64;
        for (dom, bp) in partition_transform(map, b, &b_finals) {
            if dom.len() < tol::EPS_LEN {
                unresolved += dom.len();
                continue;
            }
            covered += dom.len();
            final_branches.push(
                Piece {
                    domain: dom,
                    map: b.map.then(&bp.map),
                    iterate: b.iterate + bp.iterate,
                    range: bp.range,
                    clipped: bp.clipped,
                    parent: bp.parent,
                    folding: false,
                    depth: 0,
                }
                .into_branch(map),
            );
        }
        // The preimage of the new central branch's domain: a folding
        // composite split at the fold and recursed.
        if let Some(cp) = &central_piece {
            if let Some(dom) = map.preimage_interval(&b.map, b.domain, cp.domain) {
                if dom.len() >= tol::EPS_LEN {
                    covered += dom.len();
                    let mut mini: Vec<Piece> = vec![Piece {
                        domain: dom,
                        map: b.map.then(&cp.map),
                        iterate: b.iterate + cp.iterate,
                        range: cp.range,
                        clipped: true,
                        parent: cp.parent,
                        folding: true,
                        depth: 0,
                    }];
                    let mut mini_pops = 0usize;
                    while let Some(p) = mini.pop() {
                        mini_pops += 1;
                        if mini_pops > 2_000 || p.depth >= tol::LIMIT_DEPTH {
                            unresolved += p.domain.len();
                            continue;
                        }
                        if p.domain.len() < tol::EPS_LEN {
                            unresolved += p.domain.len();
                            continue;
                        }
                        if p.folding {
                            if let Some((l, r)) = split_at_fold(map, &p) {
                                mini.push(l);
                                mini.push(r);
                            } else {
                                unresolved += p.domain.len();
                            }
                            continue;
                        }
                        if !p.clipped {
                            final_branches.push(p.into_branch(map));
                            continue;
                        }
                        let (pieces, dropped) =
                            pull_monotone_through(map, &p.map, p.iterate, p.domain, &rec_targets);
                        unresolved += dropped;
                        if pieces.is_empty() {
                            unresolved += p.domain.len();
                            continue;
                        }
                        for mut q in pieces {
                            q.depth = p.depth + 1;
                            mini.push(q);
                        }
                    }
                }
            }
        }
        unresolved += (b.domain.len() - covered).max(0.0);
    }
    for bp in b_finals {
        final_branches.push(bp.into_branch(map));
    }

    // Attach the new central branch.
    if let Some(cp) = central_piece {
        final_branches.push(cp.into_branch(map));
    }
    if std::env::var("BOXLAB_DBG_CPF").is_ok() {
        let mut sorted: Vec<&Branch> = final_branches.iter().collect();
        sorted.sort_by(|a, b| a.domain.lo.partial_cmp(&b.domain.lo).unwrap());
        for w in sorted.windows(2) {
            if w[1].domain.lo < w[0].domain.hi - 1e-15 {
                eprintln!(
                    "CPF OVERLAP: {:?} j={} {:?} || {:?} j={} {:?}",
                    w[0].domain, w[0].iterate, w[0].kind, w[1].domain, w[1].iterate, w[1].kind
                );
            }
        }
    }
    let mut out = rebuild(
        map.base.clone(),
        &map.boxes,
        final_branches,
        map.rank,
        unresolved,
    )?;
    out.unresolved_measure = out.unresolved_measure.max(unresolved);
    Ok((out, claimed_tag))
}

/// Pull a sorted partition (the resolved pieces inside the central
/// domain) back through one monotone branch in a single sweep: each
/// boundary is inverted once, warm-bracketed by the previous preimage.
fn partition_transform<'a>(
    map: &BoxMap,
    b: &Branch,
    pieces: &'a [Piece],
) -> Vec<(Interval, &'a Piece)> {
    let mut sorted: Vec<&Piece> = pieces.iter().collect();
    sorted.sort_by(|x, y| x.domain.lo.partial_cmp(&y.domain.lo).unwrap());
    let flo = map.eval_map(&b.map, b.domain.lo);
    let fhi = map.eval_map(&b.map, b.domain.hi);
    if !(flo.max(fhi) > flo.min(fhi)) {
        return Vec::new();
    }
    let (img_lo, img_hi) = (flo.min(fhi), flo.max(fhi));
    // Walk the partition in image order; the preimage of each boundary
    // brackets the next inversion.
    let increasing = flo <= fhi;
    let mut cursor = if increasing { b.domain.lo } else { b.domain.hi };
    let far_end = if increasing { b.domain.hi } else { b.domain.lo };
    let mut out = Vec::with_capacity(sorted.len());
    for bp in sorted.into_iter() {
        let t_lo = bp.domain.lo.max(img_lo);
        let t_hi = bp.domain.hi.min(img_hi);
        if !(t_hi - t_lo >= tol::EPS_LEN) {
            continue;
        }
        let x1 = map.invert_bracketed(&b.map, cursor, far_end, t_lo);
        let x2 = map.invert_bracketed(&b.map, x1, far_end, t_hi);
        cursor = x2;
        let (a, c) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        if c - a >= tol::EPS_LEN {
            out.push((Interval::new(a, c), bp));
        }
    }
    out
}

/// Split a folding piece (fold strictly inside the domain) into its two
/// monotone halves at the critical point, found by bisection on the
/// derivative sign.
fn split_at_fold(map: &BoxMap, p: &Piece) -> Option<(Piece, Piece)> {
    let d = p.domain;
    let sgn = |y: f64| map.deriv_map(&p.map, y).signum();
    let (mut lo, mut hi) = (d.lo + 1e-3 * d.len(), d.hi - 1e-3 * d.len());
    let s_lo = sgn(lo);
    if s_lo == sgn(hi) {
        return None;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if sgn(mid) == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    if c - d.lo < tol::EPS_LEN || d.hi - c < tol::EPS_LEN {
        return None;
    }
    let mk = |dom: Interval| Piece {
        domain: dom,
        map: p.map.clone(),
        iterate: p.iterate,
        range: p.range,
        clipped: true,
        parent: p.parent,
        folding: false,
        depth: p.depth,
    };
    Some((mk(Interval::new(d.lo, c)), mk(Interval::new(c, d.hi))))
}

/// Recurse a centered folding seed (a short branch composed with psi)
/// through the targets.
fn fold_recurse(map: &BoxMap, p: &Piece, targets: &[Target]) -> (Vec<Piece>, f64) {
    // The piece is symmetric-in-image only through its own fold; treat
    // each monotone half separately by splitting at the fold point.
    let fake = Branch {
        domain: p.domain,
        iterate: p.iterate,
        map: p.map.clone(),
        kind: BranchKind::Folding,
        range_box: p.range.min(usize::MAX - 1),
        margin: None,
        collar: None,
    };
    if p.domain.contains(0.0) {
        let pull = pull_folding_through(map, &fake, targets);
        let mut pieces = pull.sides;
        if let Some((c, _)) = pull.center {
            pieces.push(c);
        }
        (pieces, pull.dropped)
    } else if let Some((l, r)) = split_at_fold(map, p) {
        (vec![l, r], 0.0)
    } else {
        (vec![], p.domain.len())
    }
}

/// Boundary refinement: simultaneous monotone pull-back on the bad
/// branches. A branch is bad when it ranges through `J`, its domain
/// lies in the range of the central branch, and its collar of standard
/// extendibility contains the critical value (for the almost-parabolic
/// step, branches containing an escape image of the critical value are
/// also bad).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Refine only as deep as needed to clear the bad set.
    Minimal,
    /// Refine to the depth cap.
    Infinite,
}

pub fn boundary_refinement(
    map: &BoxMap,
    mode: BoundaryMode,
    depth_cap: u32,
    escape_points: &[f64],
) -> Result<BoxMap, InducingError> {
    let psi = match map.central() {
        Some(b) => b.clone(),
        None => return Ok(map.clone()),
    };
    let v0 = map.eval_map(&psi.map, 0.0);
    let psi_img = map.branch_image(&psi);
    let bad_of = |m: &BoxMap| -> Vec<usize> {
        m.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| {
                if !(b.kind.is_monotone() && b.range_box == 0 && psi_img.contains_interval(&b.domain))
                {
                    return false;
                }
                if escape_points.iter().any(|&p| b.domain.contains(p)) {
                    return true;
                }
                // Collar computed on demand (intermediate maps carry no
                // precomputed extensions).
                let collar = match b.collar {
                    Some(c) => Some(c),
                    None => {
                        let m_ref = m;
                        let outer = m_ref
                            .extendibility
                            .as_ref()
                            .and_then(|e| e.margins[0])
                            .unwrap_or(m_ref.j());
                        crate::boxmap::canonical_extension(m_ref, b, outer)
                    }
                };
                collar.map(|c| c.contains(v0)).unwrap_or(false)
            })
            .map(|(i, _)| i)
            .collect()
    };
    let depth_limit = match mode {
        BoundaryMode::Minimal => depth_cap.min(tol::REFINE_DEPTH_CAP),
        BoundaryMode::Infinite => depth_cap,
    };
    let side = if v0 >= 0.0 { Side::Right } else { Side::Left };
    let mut cur = map.clone();
    for _depth in 1..=depth_limit {
        let bad = bad_of(&cur);
        if bad.is_empty() {
            return Ok(cur);
        }
        let refined = match refine_at_boundary(&cur, side, 1) {
            Ok(r) => r,
            Err(InducingError::NotRepelling) | Err(InducingError::NoExternalBranch) => {
                // Cannot refine further; return what we have.
                return Ok(cur);
            }
            Err(e) => return Err(e),
        };
        cur = simultaneous_monotone_pullback(&cur, &bad, &refined)?;
    }
    Ok(cur)
}

/// Detect an invariant symmetric interval for the central branch: the
/// largest `s` with `max(|psi(0)|, |psi(s)|) <= s`, found by a
/// log-spaced scan plus bisection at the upper boundary. Presence means
/// the map is suitable (renormalizable).
pub fn detect_suitable(map: &BoxMap) -> Option<Interval> {
    let psi = map.central()?;
    let s_max = psi.domain.hi;
    let m = |s: f64| -> f64 {
        let v0 = map.eval_map(&psi.map, 0.0).abs();
        let vs = map.eval_map(&psi.map, s).abs();
        v0.max(vs)
    };
    let ok = |s: f64| m(s) <= s;
    // Scan from the largest scale down.
    let mut found: Option<f64> = None;
    for k in 0..48 {
        let s = s_max * (2.0f64).powi(-k);
        if s < tol::SUITABLE {
            break;
        }
        if ok(s) {
            found = Some(s);
            break;
        }
    }
    let s0 = found?;
    // Bisect upward to the largest invariant s.
    let mut lo = s0;
    let mut hi = s_max;
    if ok(s_max) {
        return Some(Interval::symmetric(s_max));
    }
    while hi - lo > tol::SUITABLE {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(Interval::symmetric(lo))
}
