//! The general inducing step: case classification (close/non-close,
//! box/basic, high/low) and the dispatch into the five operations.

use super::ops::{
    almost_parabolic_pullback, boundary_refinement, critical_pullback_filling, detect_suitable,
    filling_in, simple_critical_pullback, BoundaryMode,
};
use super::InducingError;
use crate::boxmap::{classify, BoxMap, TypeTag};
use crate::tol;
use serde::Serialize;

/// Where a new branch came from, for the separation-ledger attachment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TraceParent {
    /// Pulled through the identity on a central region.
    Identity,
    /// Pulled through the source branch with this index.
    Source(usize),
}

/// Case classification of one general inducing step.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CaseReport {
    pub close: bool,
    /// Iterations of the central branch needed to push the critical
    /// value out of the central domain (0 for non-close returns).
    pub depth: u32,
    pub basic: bool,
    pub high: bool,
    /// The tag claimed by the case table.
    pub resulting_type: TypeTag,
    /// The tag measured by `classify` on the output.
    pub measured_type: TypeTag,
}

/// Construction trace handed to the ledger bridge: the refined source
/// the step composed with, and the critical value's first exit.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub close: bool,
    pub source: BoxMap,
    /// First image of the critical value outside the central domain.
    pub v_exit: f64,
}

/// One general inducing step. Errors with `SuitableMap` when an
/// invariant central interval exists, and `AmbiguousItinerary` when the
/// critical value sits within tolerance of a domain boundary.
pub fn general_inducing_step(
    map: &BoxMap,
) -> Result<(BoxMap, CaseReport, StepTrace), InducingError> {
    let tag = classify(map)?;
    if !matches!(tag, TypeTag::Full | TypeTag::TypeI | TypeTag::TypeII) {
        return Err(InducingError::WrongInputType);
    }
    let psi = map.central().ok_or(InducingError::WrongInputType)?.clone();
    if let Some(iv) = detect_suitable(map) {
        return Err(InducingError::SuitableMap {
            interval: iv,
            period: psi.iterate,
        });
    }
    let b_dom = psi.domain;
    let v0 = map.eval_map(&psi.map, 0.0);
    if b_dom.dist_to_point(v0) < tol::CASE_MARGIN
        || (b_dom.contains(v0) && (b_dom.hi - v0.abs()) < tol::CASE_MARGIN)
    {
        return Err(InducingError::AmbiguousItinerary);
    }

    // Close / non-close, with the escape depth and exit position.
    let close = b_dom.contains(v0);
    let mut depth = 0u32;
    let mut v_exit = v0;
    let mut escapes: Vec<f64> = Vec::new();
    if close {
        let mut v = v0;
        loop {
            v = map.eval_map(&psi.map, v);
            depth += 1;
            escapes.push(v);
            if !b_dom.contains(v) {
                v_exit = v;
                break;
            }
            if depth > 4096 {
                return Err(InducingError::NoEscape);
            }
        }
    }
    if map.boundary_distance(v_exit) < tol::CASE_MARGIN {
        return Err(InducingError::AmbiguousItinerary);
    }

    // Basic / box: where does the first exit land?
    let exit_branch = map.locate(v_exit).ok_or(InducingError::AmbiguousItinerary)?;
    let basic = map.branches[exit_branch].kind.is_monotone()
        && map.branches[exit_branch].range_box == 0;

    // High / low.
    let high = map.branch_image(&psi).contains(0.0);

    // Minimal boundary refinement; almost-parabolic steps widen the
    // bad-branch criterion by the escape images of the critical value.
    let source = boundary_refinement(
        map,
        BoundaryMode::Minimal,
        tol::REFINE_DEPTH_CAP,
        if close && !high { &escapes } else { &[] },
    )?;

    // Dispatch.
    let (out, claimed) = dispatch(map, &source, tag, close, basic, high)?;
    let mut out = out;
    crate::boxmap::assign_margins(&mut out);
    out.rank = if basic { 0 } else { map.rank + 1 };
    let measured = classify(&out).unwrap_or(TypeTag::General);
    let report = CaseReport {
        close,
        depth,
        basic,
        high,
        resulting_type: claimed,
        measured_type: measured,
    };
    Ok((
        out,
        report,
        StepTrace {
            close,
            source,
            v_exit,
        },
    ))
}

fn dispatch(
    map: &BoxMap,
    source: &BoxMap,
    tag: TypeTag,
    close: bool,
    basic: bool,
    high: bool,
) -> Result<(BoxMap, TypeTag), InducingError> {
    if high {
        // High return: type II fills in B' first, then critical
        // pull-back with filling-in. Type I in the box case, full in
        // the basic case.
        let (m, s) = if tag == TypeTag::TypeII {
            let filled = filling_in(map, source, 1)?;
            let s = filled.clone();
            (filled, s)
        } else {
            (map.clone(), source.clone())
        };
        let (out, t) = critical_pullback_filling(&m, &s)?;
        return Ok((out, t));
    }
    if close {
        let ap = almost_parabolic_pullback(map, source)?;
        if basic {
            // Fill every intermediate box that still has monotone
            // branches onto it, then critical pull-back: a full map.
            let mut cur = ap;
            loop {
                let target = (1..cur.boxes.len().saturating_sub(1)).find(|&bi| {
                    cur.branches
                        .iter()
                        .any(|b| b.kind.is_monotone() && b.range_box == bi)
                });
                match target {
                    Some(bi) => {
                        let src = cur.clone();
                        cur = filling_in(&cur, &src, bi)?;
                    }
                    None => break,
                }
            }
            let src = cur.clone();
            let (out, t) = critical_pullback_filling(&cur, &src)?;
            Ok((out, t))
        } else {
            let src = ap.clone();
            let out = simple_critical_pullback(&ap, &src)?;
            Ok((out, TypeTag::TypeII))
        }
    } else if basic {
        let (m, s) = if tag == TypeTag::TypeII {
            let filled = filling_in(map, source, 1)?;
            let s = filled.clone();
            (filled, s)
        } else {
            (map.clone(), source.clone())
        };
        let (out, t) = critical_pullback_filling(&m, &s)?;
        Ok((out, t))
    } else {
        // Low box return.
        let out = simple_critical_pullback(map, source)?;
        Ok((out, TypeTag::TypeII))
    }
}
