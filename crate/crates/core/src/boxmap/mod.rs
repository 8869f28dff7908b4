//! Real box mappings: boxes, branches as restricted iterates, type
//! classification, fineness and extendibility measurements, and
//! artificial-map construction.
//!
//! A branch is the restriction of an iterate of the base dynamics to an
//! open interval. For maps harvested from the quadratic family the
//! branch map is just the iterate count; artificial maps carry explicit
//! affine/quadratic composition chains instead (they are not iterates of
//! any quadratic map).

mod artificial;
mod equiv;
mod extend;

pub use artificial::build_artificial;
pub use equiv::BranchwiseMap;
pub use extend::{
    assign_margins, canonical_extension, extendibility_of_branch, standard_extendibility,
    EpsReport, ExtendReport,
};

use crate::interval::Interval;
use crate::realmap::QuadraticMap;
use crate::tol;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoxMapError {
    #[error("invalid box-map structure: {0}")]
    InvalidStructure(String),
    #[error("point {0} outside the branch domain or target outside the range")]
    OutOfDomain(f64),
    #[error("operation requires a monotone branch")]
    NotMonotone,
    #[error("box {0} lacks an assigned margin interval")]
    MissingMargin(usize),
    #[error("bisection could not match the itinerary at the configured depth")]
    ItineraryMismatch,
    #[error("artificial construction requires a type I or type II map, got {0:?}")]
    WrongType(TypeTag),
}

/// Identifier of a box: index into `BoxMap::boxes` (0 is the outermost
/// box `B0 = J`, the last entry is the central domain).
pub type BoxId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    MonotoneIncreasing,
    MonotoneDecreasing,
    Folding,
}

impl BranchKind {
    pub fn is_monotone(&self) -> bool {
        !matches!(self, BranchKind::Folding)
    }

    pub fn orientation(&self) -> f64 {
        match self {
            BranchKind::MonotoneIncreasing => 1.0,
            BranchKind::MonotoneDecreasing => -1.0,
            BranchKind::Folding => 0.0,
        }
    }
}

/// One closed-form segment of an artificial branch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum Seg {
    /// `y -> a y + b`
    Affine { a: f64, b: f64 },
    /// `y -> v - k y^2`
    Quad { v: f64, k: f64 },
}

impl Seg {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Seg::Affine { a, b } => a * y + b,
            Seg::Quad { v, k } => v - k * (y * y),
        }
    }

    pub fn deriv(&self, y: f64) -> f64 {
        match *self {
            Seg::Affine { a, .. } => a,
            Seg::Quad { k, .. } => -2.0 * k * y,
        }
    }
}

/// The map carried by a branch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum BranchMap {
    /// `F^j` of the base quadratic map.
    Iterate(u32),
    /// Composition chain, applied left to right.
    Chain(Vec<Seg>),
}

impl BranchMap {
    /// Steps of the base dynamics this branch represents.
    pub fn step_count(&self) -> u32 {
        match self {
            BranchMap::Iterate(j) => *j,
            BranchMap::Chain(segs) => segs.len() as u32,
        }
    }

    /// Concatenation: `self` followed by `after`.
    pub fn then(&self, after: &BranchMap) -> BranchMap {
        match (self, after) {
            (BranchMap::Iterate(a), BranchMap::Iterate(b)) => BranchMap::Iterate(a + b),
            (BranchMap::Chain(x), BranchMap::Chain(y)) => {
                let mut segs = x.clone();
                segs.extend(y.iter().cloned());
                BranchMap::Chain(segs)
            }
            _ => panic!("cannot compose iterate and chain branches"),
        }
    }
}

/// The base dynamics of a box map: a member of the quadratic family, or
/// none (artificial maps, whose branches carry their own closed forms).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Dynamics {
    Quadratic(QuadraticMap),
    Artificial,
}

/// A branch: an iterate restricted to an open interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub domain: Interval,
    /// Total base-step count (the branch is morally `F^iterate`).
    pub iterate: u32,
    pub map: BranchMap,
    pub kind: BranchKind,
    pub range_box: BoxId,
    /// Margin of extendibility: interval onto which the branch extends
    /// as a diffeomorphism.
    pub margin: Option<Interval>,
    /// Collar of extendibility: the preimage of the margin.
    pub collar: Option<Interval>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeTag {
    Full,
    TypeI,
    TypeII,
    General,
}

/// Margins assigned per box (the extendibility structure).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtendStructure {
    /// `margins[i]` is the margin interval for branches ranging through
    /// `boxes[i]`; entry 0 is the outer margin `I` of `J`.
    pub margins: Vec<Option<Interval>>,
}

/// A real box mapping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxMap {
    pub base: Dynamics,
    /// Nested symmetric intervals, outermost first; the last one is the
    /// central domain whenever a folding branch exists.
    pub boxes: Vec<Interval>,
    /// Branches sorted by domain position; domains pairwise disjoint.
    pub branches: Vec<Branch>,
    pub rank: u32,
    /// Total measure of domains dropped by truncation.
    pub unresolved_measure: f64,
    pub extendibility: Option<ExtendStructure>,
}

impl BoxMap {
    pub fn j(&self) -> Interval {
        self.boxes[0]
    }

    pub fn central_idx(&self) -> Option<usize> {
        self.branches
            .iter()
            .position(|b| b.kind == BranchKind::Folding)
    }

    pub fn central(&self) -> Option<&Branch> {
        self.branches.iter().find(|b| b.kind == BranchKind::Folding)
    }

    pub fn central_domain(&self) -> Option<Interval> {
        self.central().map(|b| b.domain)
    }

    /// Markov representation: all branches monotone onto `J`.
    pub fn is_markov(&self) -> bool {
        self.central().is_none()
            && self
                .branches
                .iter()
                .all(|b| b.kind.is_monotone() && b.range_box == 0)
    }

    pub fn eval_map(&self, map: &BranchMap, y: f64) -> f64 {
        match map {
            BranchMap::Iterate(j) => match &self.base {
                Dynamics::Quadratic(q) => q.eval_n(y, *j),
                Dynamics::Artificial => panic!("iterate branch on an artificial base"),
            },
            BranchMap::Chain(segs) => segs.iter().fold(y, |v, s| s.eval(v)),
        }
    }

    pub fn deriv_map(&self, map: &BranchMap, y: f64) -> f64 {
        match map {
            BranchMap::Iterate(j) => match &self.base {
                Dynamics::Quadratic(q) => q.jet1(y, *j).1,
                Dynamics::Artificial => panic!("iterate branch on an artificial base"),
            },
            BranchMap::Chain(segs) => {
                let mut v = y;
                let mut d = 1.0;
                for s in segs {
                    d *= s.deriv(v);
                    v = s.eval(v);
                }
                d
            }
        }
    }

    /// Evaluate branch `bi` at `y`; `y` must lie in the closed domain.
    pub fn eval_branch(&self, bi: usize, y: f64) -> Result<f64, BoxMapError> {
        let b = &self.branches[bi];
        if !b.domain.contains_closed(y) {
            return Err(BoxMapError::OutOfDomain(y));
        }
        Ok(self.eval_map(&b.map, y))
    }

    /// Invert a monotone branch by bisection to [`tol::INVERT`].
    pub fn invert_branch(&self, bi: usize, target: f64) -> Result<f64, BoxMapError> {
        let b = &self.branches[bi];
        if !b.kind.is_monotone() {
            return Err(BoxMapError::NotMonotone);
        }
        self.invert_on(&b.map, b.domain, target)
    }

    /// Invert `map` restricted to `dom` (monotone there) at `target`.
    pub(crate) fn invert_on(
        &self,
        map: &BranchMap,
        dom: Interval,
        target: f64,
    ) -> Result<f64, BoxMapError> {
        let flo = self.eval_map(map, dom.lo);
        let fhi = self.eval_map(map, dom.hi);
        let (mut lo, mut hi, vlo, vhi) = if flo <= fhi {
            (dom.lo, dom.hi, flo, fhi)
        } else {
            (dom.hi, dom.lo, fhi, flo)
        };
        let pad = tol::INVERT * (1.0 + vlo.abs().max(vhi.abs()));
        if target < vlo - pad || target > vhi + pad {
            return Err(BoxMapError::OutOfDomain(target));
        }
        if target <= vlo {
            return Ok(lo);
        }
        if target >= vhi {
            return Ok(hi);
        }
        // Newton with a bisection safeguard. `lo`/`hi` keep the
        // invariant eval(lo) < target < eval(hi); they may be in either
        // physical order for decreasing branches.
        let mut x = 0.5 * (lo + hi);
        for _ in 0..80 {
            let v = self.eval_map(map, x);
            if v < target {
                lo = x;
            } else {
                hi = x;
            }
            if (hi - lo).abs() <= tol::INVERT {
                return Ok(0.5 * (lo + hi));
            }
            let d = self.deriv_map(map, x);
            let cand = if d != 0.0 {
                x + (target - v) / d
            } else {
                f64::NAN
            };
            let (plo, phi) = (lo.min(hi), lo.max(hi));
            let next = if cand.is_finite() && cand > plo && cand < phi {
                cand
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 0.5 * tol::INVERT {
                return Ok(next);
            }
            x = next;
        }
        Ok(0.5 * (lo + hi))
    }

    /// Newton/bisection on an explicit bracket `[lo, hi]` already
    /// satisfying `eval(lo) <= target <= eval(hi)` (either physical
    /// order).
    pub(crate) fn invert_bracketed(
        &self,
        map: &BranchMap,
        mut lo: f64,
        mut hi: f64,
        target: f64,
    ) -> f64 {
        let mut x = 0.5 * (lo + hi);
        for _ in 0..80 {
            let v = self.eval_map(map, x);
            if v < target {
                lo = x;
            } else {
                hi = x;
            }
            if (hi - lo).abs() <= tol::INVERT {
                return 0.5 * (lo + hi);
            }
            let d = self.deriv_map(map, x);
            let cand = if d != 0.0 { x + (target - v) / d } else { f64::NAN };
            let (plo, phi) = (lo.min(hi), lo.max(hi));
            let next = if cand.is_finite() && cand > plo && cand < phi {
                cand
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 0.5 * tol::INVERT {
                return next;
            }
            x = next;
        }
        0.5 * (lo + hi)
    }

    /// Preimage of `target` under `map` restricted to `dom`, assuming
    /// monotonicity there; endpoints are clipped to the domain.
    pub(crate) fn preimage_interval(
        &self,
        map: &BranchMap,
        dom: Interval,
        target: Interval,
    ) -> Option<Interval> {
        let flo = self.eval_map(map, dom.lo);
        let fhi = self.eval_map(map, dom.hi);
        let (img_lo, img_hi) = if flo <= fhi { (flo, fhi) } else { (fhi, flo) };
        let cl = target.lo.max(img_lo);
        let ch = target.hi.min(img_hi);
        if cl >= ch {
            return None;
        }
        let a = self.invert_on(map, dom, cl).ok()?;
        let b = self.invert_on(map, dom, ch).ok()?;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if hi - lo < tol::EPS_LEN {
            return None;
        }
        Some(Interval::new(lo, hi))
    }

    /// Image interval of a branch (sorted endpoint images for monotone
    /// branches, extremum-aware for folding ones).
    pub fn branch_image(&self, b: &Branch) -> Interval {
        let flo = self.eval_map(&b.map, b.domain.lo);
        let fhi = self.eval_map(&b.map, b.domain.hi);
        if b.kind.is_monotone() {
            let (lo, hi) = if flo <= fhi { (flo, fhi) } else { (fhi, flo) };
            Interval::new(lo, hi.max(lo + f64::MIN_POSITIVE))
        } else {
            let fc = self.eval_map(&b.map, 0.0);
            let lo = flo.min(fhi).min(fc);
            let hi = flo.max(fhi).max(fc);
            Interval::new(lo, hi)
        }
    }

    /// The branch whose domain contains `y`, if any.
    pub fn locate(&self, y: f64) -> Option<usize> {
        // Domains are sorted; binary search on lo.
        let mut lo = 0usize;
        let mut hi = self.branches.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.branches[mid].domain.hi <= y {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo < self.branches.len() && self.branches[lo].domain.contains(y) {
            Some(lo)
        } else {
            None
        }
    }

    /// Distance from `y` to the nearest branch-domain boundary.
    pub fn boundary_distance(&self, y: f64) -> f64 {
        let mut best = f64::INFINITY;
        for b in &self.branches {
            best = best.min((y - b.domain.lo).abs()).min((y - b.domain.hi).abs());
        }
        best
    }

    /// Structural validation shared by all constructors: sorted disjoint
    /// domains inside `J`, nested symmetric boxes with endpoints outside
    /// every domain, at most one folding branch, kinds consistent with
    /// sampled derivatives, and images inside the assigned range boxes.
    pub fn validate(&self) -> Result<(), BoxMapError> {
        let fail = |m: String| Err(BoxMapError::InvalidStructure(m));
        if self.boxes.is_empty() {
            return fail("no boxes".into());
        }
        let j = self.j();
        for w in self.boxes.windows(2) {
            if !w[0].contains_interval(&w[1]) {
                return fail(format!("boxes not nested: {:?} !⊇ {:?}", w[0], w[1]));
            }
        }
        for b in &self.boxes {
            if !b.is_symmetric(1e-9) {
                return fail(format!("box {b:?} not symmetric about 0"));
            }
        }
        let mut folding = 0usize;
        for (i, b) in self.branches.iter().enumerate() {
            if !j.contains_interval(&b.domain) {
                return fail(format!("domain {:?} escapes J {:?}", b.domain, j));
            }
            if b.range_box >= self.boxes.len() {
                return fail(format!("branch {i} has range box {}", b.range_box));
            }
            if i + 1 < self.branches.len() && b.domain.hi > self.branches[i + 1].domain.lo {
                let o = &self.branches[i + 1];
                return fail(format!(
                    "domains overlap or are unsorted at index {i}: {:?} (j={}, range={}, {:?}) vs {:?} (j={}, range={}, {:?})",
                    b.domain, b.iterate, b.range_box, b.kind, o.domain, o.iterate, o.range_box, o.kind
                ));
            }
            if b.kind == BranchKind::Folding {
                folding += 1;
                if !b.domain.contains(0.0) {
                    return fail("folding branch does not contain 0".into());
                }
                if !b.domain.is_symmetric(1e-9) {
                    return fail("folding domain not symmetric".into());
                }
            }
            self.check_kind(b, i)?;
            let img = self.branch_image(b);
            let range = self.boxes[b.range_box];
            // Pullback endpoints carry bisection slop amplified by the
            // branch derivative.
            let dmax = self
                .deriv_map(&b.map, b.domain.lo)
                .abs()
                .max(self.deriv_map(&b.map, b.domain.hi).abs());
            let slack = 1e-9 * range.len().max(1e-6) + 64.0 * crate::tol::INVERT * dmax.max(1.0);
            if img.lo < range.lo - slack || img.hi > range.hi + slack {
                return fail(format!(
                    "branch {i} image {img:?} escapes range box {range:?}"
                ));
            }
        }
        if folding > 1 {
            return fail(format!("{folding} folding branches"));
        }
        // Box endpoints must not lie inside any domain.
        for bx in &self.boxes {
            for e in [bx.lo, bx.hi] {
                if let Some(bi) = self.locate(e) {
                    if self.branches[bi].domain.contains(e) {
                        return fail(format!("box endpoint {e} inside domain {bi}"));
                    }
                }
            }
        }
        // Central domain coincides with the innermost box.
        if let Some(cd) = self.central_domain() {
            let inner = *self.boxes.last().unwrap();
            let tolr = 1e-7 * inner.len().max(1e-9);
            if (cd.lo - inner.lo).abs() > tolr || (cd.hi - inner.hi).abs() > tolr {
                return fail(format!(
                    "central domain {cd:?} differs from innermost box {inner:?}"
                ));
            }
        }
        Ok(())
    }

    fn check_kind(&self, b: &Branch, i: usize) -> Result<(), BoxMapError> {
        let n = 32;
        let mut sign = 0.0f64;
        let mut flips = 0usize;
        for k in 0..=n {
            let y = b.domain.lo + b.domain.len() * (k as f64 + 0.5) / (n as f64 + 1.0);
            let d = self.deriv_map(&b.map, y);
            if d == 0.0 {
                continue;
            }
            let s = d.signum();
            if sign != 0.0 && s != sign {
                flips += 1;
            }
            sign = s;
        }
        match b.kind {
            BranchKind::Folding => {
                if flips != 1 {
                    return Err(BoxMapError::InvalidStructure(format!(
                        "folding branch {i} has {flips} derivative sign changes"
                    )));
                }
            }
            _ => {
                if flips != 0 {
                    return Err(BoxMapError::InvalidStructure(format!(
                        "monotone branch {i} has a critical point inside"
                    )));
                }
                let want = b.kind.orientation();
                if sign != 0.0 && sign != want {
                    return Err(BoxMapError::InvalidStructure(format!(
                        "branch {i} orientation mismatch"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Classify a box map against the type definitions.
///
/// `Full`: two boxes, folding central branch ranging through `B0`, all
/// monotone branches onto `B0` (the Markov representation, all-monotone
/// onto `J`, also reports `Full`). `TypeI`: three boxes, short monotone
/// branches onto the central domain `B`, long onto `B0`, central ranging
/// through `B'`. `TypeII`: as type I but short branches range through
/// `B'`. A three-box map without short branches is reported as `TypeI`
/// (the filling-in outcome). Anything else is `General`.
pub fn classify(map: &BoxMap) -> Result<TypeTag, BoxMapError> {
    map.validate()?;
    let nb = map.boxes.len();
    let monotone_targets: Vec<BoxId> = map
        .branches
        .iter()
        .filter(|b| b.kind.is_monotone())
        .map(|b| b.range_box)
        .collect();
    let has_onto_j = monotone_targets.iter().any(|&t| t == 0);
    let central_range = map.central().map(|b| b.range_box);

    if map.is_markov() && nb <= 2 {
        return Ok(TypeTag::Full);
    }
    match (nb, central_range) {
        // Full: two boxes and a folding central branch ranging through
        // B0. Monotone branches may map onto either box (branches onto
        // the central domain are legal).
        (2, Some(0)) if has_onto_j => Ok(TypeTag::Full),
        (3, Some(1)) if has_onto_j && monotone_targets.iter().all(|&t| t == 0 || t == 2) => {
            check_short_clauses(map, 2)?;
            Ok(TypeTag::TypeI)
        }
        (3, Some(1)) if has_onto_j && monotone_targets.iter().all(|&t| t == 0 || t == 1) => {
            if monotone_targets.iter().any(|&t| t == 1) {
                check_short_clauses(map, 1)?;
                Ok(TypeTag::TypeII)
            } else {
                Ok(TypeTag::TypeI)
            }
        }
        _ => Ok(TypeTag::General),
    }
}

/// Shared type I/II clauses: closures of short-monotone domains stay off
/// the boundary of `B'`, and adjacent domains include a long one.
fn check_short_clauses(map: &BoxMap, short_target: BoxId) -> Result<(), BoxMapError> {
    let bp = map.boxes[1];
    for (i, b) in map.branches.iter().enumerate() {
        if b.kind.is_monotone() && b.range_box == short_target {
            for e in [bp.lo, bp.hi] {
                if b.domain.contains_closed(e) {
                    return Err(BoxMapError::InvalidStructure(format!(
                        "short domain {i} touches the boundary of B'"
                    )));
                }
            }
        }
    }
    for w in map.branches.windows(2) {
        if w[0].domain.hi == w[1].domain.lo {
            let long0 = w[0].kind.is_monotone() && w[0].range_box == 0;
            let long1 = w[1].kind.is_monotone() && w[1].range_box == 0;
            if !long0 && !long1 {
                return Err(BoxMapError::InvalidStructure(
                    "adjacent domains are both short/folding".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Supremum of `|D| / dist(D, ∂B)` over domain-box pairs where the
/// closure of `D` is not compactly inside `B`.
///
/// When the closure touches one boundary component the distance is taken
/// to the other component (the only nondegenerate reading); pairs with
/// `D` compactly inside are excluded by definition, and a domain equal to
/// the whole box is skipped.
pub fn alpha_fineness(map: &BoxMap) -> f64 {
    let mut sup: f64 = 0.0;
    for b in &map.branches {
        let d = b.domain;
        for bx in &map.boxes {
            if !bx.contains_interval(&d) {
                continue;
            }
            let gap_lo = d.lo - bx.lo;
            let gap_hi = bx.hi - d.hi;
            if gap_lo > 0.0 && gap_hi > 0.0 {
                continue; // compactly contained
            }
            let dist = if gap_lo <= 0.0 && gap_hi <= 0.0 {
                continue; // domain equals the box
            } else if gap_lo <= 0.0 {
                gap_hi
            } else {
                gap_lo
            };
            if dist > 0.0 {
                sup = sup.max(d.len() / dist);
            }
        }
    }
    sup
}

#[derive(Serialize)]
struct BranchJson {
    domain: [String; 2],
    iterate: u32,
    kind: BranchKind,
    range_box: usize,
    margin: Option<[String; 2]>,
    collar: Option<[String; 2]>,
}

#[derive(Serialize)]
struct BoxMapJson {
    tag: TypeTag,
    rank: u32,
    boxes: Vec<[String; 2]>,
    branches: Vec<BranchJson>,
    unresolved_measure: String,
}

/// JSON export with endpoints as shortest-round-trip decimal strings.
pub fn to_json(map: &BoxMap) -> serde_json::Value {
    let s = |x: f64| format!("{x}");
    let iv = |i: &Interval| [s(i.lo), s(i.hi)];
    let doc = BoxMapJson {
        tag: classify(map).unwrap_or(TypeTag::General),
        rank: map.rank,
        boxes: map.boxes.iter().map(iv).collect(),
        branches: map
            .branches
            .iter()
            .map(|b| BranchJson {
                domain: iv(&b.domain),
                iterate: b.iterate,
                kind: b.kind,
                range_box: b.range_box,
                margin: b.margin.as_ref().map(iv),
                collar: b.collar.as_ref().map(iv),
            })
            .collect(),
        unresolved_measure: s(map.unresolved_measure),
    };
    serde_json::to_value(doc).expect("box map serialization")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built full map over an affine skeleton: two external monotone
    /// branches onto J plus a central folding branch.
    pub(crate) fn toy_full_map() -> BoxMap {
        let j = Interval::new(-1.0, 1.0);
        let b = Interval::new(-0.25, 0.25);
        BoxMap {
            base: Dynamics::Artificial,
            boxes: vec![j, b],
            branches: vec![
                Branch {
                    domain: Interval::new(-1.0, -0.25),
                    iterate: 1,
                    map: BranchMap::Chain(vec![Seg::Affine {
                        a: 8.0 / 3.0,
                        b: 5.0 / 3.0,
                    }]),
                    kind: BranchKind::MonotoneIncreasing,
                    range_box: 0,
                    margin: None,
                    collar: None,
                },
                Branch {
                    domain: b,
                    iterate: 1,
                    map: BranchMap::Chain(vec![Seg::Quad { v: 1.0, k: 32.0 }]),
                    kind: BranchKind::Folding,
                    range_box: 0,
                    margin: None,
                    collar: None,
                },
                Branch {
                    domain: Interval::new(0.25, 1.0),
                    iterate: 1,
                    map: BranchMap::Chain(vec![Seg::Affine {
                        a: -8.0 / 3.0,
                        b: 5.0 / 3.0,
                    }]),
                    kind: BranchKind::MonotoneDecreasing,
                    range_box: 0,
                    margin: None,
                    collar: None,
                },
            ],
            rank: 0,
            unresolved_measure: 0.0,
            extendibility: None,
        }
    }

    #[test]
    fn classify_full() {
        let m = toy_full_map();
        assert_eq!(classify(&m).unwrap(), TypeTag::Full);
    }

    #[test]
    fn classify_type_i_and_ii() {
        // Three boxes; vary the short-branch target.
        let j = Interval::new(-1.0, 1.0);
        let bp = Interval::new(-0.5, 0.5);
        let b = Interval::new(-0.1, 0.1);
        let mk = |short_target: BoxId| {
            let short_img = if short_target == 1 { bp } else { b };
            BoxMap {
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
                        domain: Interval::new(-0.35, -0.2),
                        iterate: 1,
                        map: BranchMap::Chain(vec![Seg::Affine {
                            a: short_img.len() / 0.15,
                            b: short_img.lo + 0.35 * short_img.len() / 0.15,
                        }]),
                        kind: BranchKind::MonotoneIncreasing,
                        range_box: short_target,
                        margin: None,
                        collar: None,
                    },
                    Branch {
                        domain: b,
                        iterate: 1,
                        map: BranchMap::Chain(vec![Seg::Quad { v: 0.5, k: 100.0 }]),
                        kind: BranchKind::Folding,
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
            }
        };
        assert_eq!(classify(&mk(2)).unwrap(), TypeTag::TypeI);
        assert_eq!(classify(&mk(1)).unwrap(), TypeTag::TypeII);
    }

    #[test]
    fn fineness_examples() {
        // Compactly contained domain contributes nothing.
        let mut m = toy_full_map();
        m.branches = vec![Branch {
            domain: Interval::new(-0.1, 0.1),
            iterate: 1,
            map: BranchMap::Chain(vec![Seg::Affine { a: 10.0, b: 0.0 }]),
            kind: BranchKind::MonotoneIncreasing,
            range_box: 0,
            margin: None,
            collar: None,
        }];
        m.boxes = vec![Interval::new(-1.0, 1.0)];
        assert_eq!(alpha_fineness(&m), 0.0);

        // Domain sharing an endpoint: distance to the other component.
        m.branches[0].domain = Interval::new(0.8, 1.0);
        let got = alpha_fineness(&m);
        assert!((got - 0.2 / 1.8).abs() < 1e-15);

        // Empty branch list.
        m.branches.clear();
        assert_eq!(alpha_fineness(&m), 0.0);
    }

    #[test]
    fn eval_invert_round_trip() {
        let m = toy_full_map();
        for y in [-0.9, -0.5, -0.3] {
            let v = m.eval_branch(0, y).unwrap();
            let back = m.invert_branch(0, v).unwrap();
            assert!((back - y).abs() < 1e-12);
        }
        // Folding branch refuses inversion.
        assert!(matches!(m.invert_branch(1, 0.5), Err(BoxMapError::NotMonotone)));
        // Target outside range.
        assert!(matches!(m.invert_branch(0, 5.0), Err(BoxMapError::OutOfDomain(_))));
    }

    #[test]
    fn harvested_branch_identity() {
        // An Iterate branch agrees with j-fold composition of the base map.
        let q = QuadraticMap::new(3.6).unwrap();
        let m = BoxMap {
            base: Dynamics::Quadratic(q),
            boxes: vec![Interval::new(-0.5, 0.5)],
            branches: vec![],
            rank: 0,
            unresolved_measure: 0.0,
            extendibility: None,
        };
        let bm = BranchMap::Iterate(5);
        for i in 0..64 {
            let y = -0.4 + 0.8 * (i as f64) / 63.0;
            let direct = (0..5).fold(y, |v, _| q.eval(v));
            assert!((m.eval_map(&bm, y) - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn json_has_string_endpoints() {
        let m = toy_full_map();
        let v = to_json(&m);
        assert_eq!(v["boxes"][0][0], "-1");
        assert_eq!(v["branches"][0]["domain"][1], "-0.25");
        // Round-trip exactness of a non-terminating binary fraction.
        let x: f64 = v["branches"][0]["domain"][1].as_str().unwrap().parse().unwrap();
        assert_eq!(x, -0.25);
    }
}
