//! Cascade driver: iterate the general inducing step, recording
//! per-step metrics and feeding the separation ledger from the
//! construction trace.

use super::initial::{descend_renormalizations, initial_box_map, initial_box_map_at};
use super::ops::detect_suitable;
use super::step::{general_inducing_step, CaseReport, StepTrace};
use super::InducingError;
use crate::boxmap::{
    alpha_fineness, canonical_extension, classify, standard_extendibility, BoxMap, BranchKind,
    TypeTag,
};
use crate::interval::Interval;
use crate::realmap::QuadraticMap;
use crate::separation::{
    BranchKey, CaseAssign, Rat, SeparationLedger, StepDescription,
};
use crate::tol;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Run until a suitable map (or the step cap).
    Suitable,
    /// Run until the alpha-fineness drops to the target.
    Fine(f64),
    /// Run exactly this many steps.
    Steps(u32),
}

#[derive(Clone, Debug, Serialize)]
pub enum Termination {
    Suitable { interval: Interval, period: u32 },
    Fine,
    StepCap,
    Markov,
    Error(String),
}

/// One row of the cascade log.
#[derive(Clone, Debug, Serialize)]
pub struct CascadeRecord {
    pub step: u32,
    pub case: Option<CaseReport>,
    pub tag: TypeTag,
    pub box_lengths: Vec<f64>,
    /// `|B_n| / |B_n'|`: central domain over the box its branch ranges
    /// through.
    pub ratio: Option<f64>,
    pub alpha_fineness: f64,
    pub min_extendibility: f64,
    pub ledger_beta: Option<Rat>,
    pub v_bound_trend: Option<Rat>,
    pub suitable: bool,
    pub unresolved_measure: f64,
    pub branch_count: usize,
}

#[derive(Clone, Debug)]
pub struct CascadeOutcome {
    pub records: Vec<CascadeRecord>,
    pub termination: Termination,
    pub final_map: BoxMap,
    pub ledger: Option<SeparationLedger>,
    pub ledger_abort: Option<String>,
    /// Renormalization levels descended before inducing started.
    pub levels_descended: u32,
}

#[derive(Clone, Debug)]
pub struct CascadeConfig {
    pub horizon: u32,
    pub max_steps: u32,
    pub stop: StopRule,
    /// Descend the renormalization sequence before inducing.
    pub descend: bool,
    pub attach_ledger: bool,
    pub ledger_beta: Rat,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            horizon: tol::DEFAULT_HORIZON,
            max_steps: 16,
            stop: StopRule::Suitable,
            descend: true,
            attach_ledger: true,
            ledger_beta: Rat::ONE,
        }
    }
}

/// Run a cascade for one quadratic map.
pub fn run_cascade(
    map: &QuadraticMap,
    cfg: &CascadeConfig,
) -> Result<CascadeOutcome, InducingError> {
    let (initial, levels) = if cfg.descend {
        let lvl = descend_renormalizations(map, 16, 12)?;
        if lvl.depth == 0 {
            (initial_box_map(map, cfg.horizon)?, 0)
        } else {
            (initial_box_map_at(map, &lvl, cfg.horizon)?, lvl.depth)
        }
    } else {
        (initial_box_map(map, cfg.horizon)?, 0)
    };
    let mut out = run_cascade_from(initial, cfg);
    out.levels_descended = levels;
    Ok(out)
}

/// Run a cascade from an explicit initial box map (harvested or
/// artificial).
pub fn run_cascade_from(initial: BoxMap, cfg: &CascadeConfig) -> CascadeOutcome {
    let mut records = Vec::new();
    let mut ledger = if cfg.attach_ledger {
        Some(SeparationLedger::all_zero(
            cfg.ledger_beta,
            &short_keys(&initial),
        ))
    } else {
        None
    };
    let mut ledger_abort: Option<String> = None;
    let mut cur = initial;
    records.push(record_of(0, None, &cur, ledger.as_ref()));

    let mut termination = Termination::StepCap;
    let mut step_no = 0u32;
    let step_cap = match cfg.stop {
        StopRule::Steps(n) => n.min(cfg.max_steps),
        _ => cfg.max_steps,
    };
    while step_no < step_cap {
        if cur.is_markov() || cur.central().is_none() {
            termination = Termination::Markov;
            break;
        }
        match general_inducing_step(&cur) {
            Ok((next, case, trace)) => {
                step_no += 1;
                // Ledger bridge.
                if let Some(led) = ledger.take() {
                    match bridge_step(&cur, &trace, &next, &case, &led) {
                        Ok(new_led) => ledger = Some(new_led),
                        Err(reason) => {
                            ledger_abort = Some(reason);
                            ledger = None;
                        }
                    }
                }
                cur = next;
                records.push(record_of(step_no, Some(case), &cur, ledger.as_ref()));
                if let StopRule::Fine(alpha) = cfg.stop {
                    if alpha_fineness(&cur) <= alpha {
                        termination = Termination::Fine;
                        break;
                    }
                }
            }
            Err(InducingError::SuitableMap { interval, period }) => {
                termination = Termination::Suitable { interval, period };
                if let Some(last) = records.last_mut() {
                    last.suitable = true;
                }
                break;
            }
            Err(e) => {
                termination = Termination::Error(e.to_string());
                break;
            }
        }
    }
    CascadeOutcome {
        records,
        termination,
        final_map: cur,
        ledger,
        ledger_abort,
        levels_descended: 0,
    }
}

fn record_of(
    step: u32,
    case: Option<CaseReport>,
    map: &BoxMap,
    ledger: Option<&SeparationLedger>,
) -> CascadeRecord {
    let tag = classify(map).unwrap_or(TypeTag::General);
    let ratio = map.central().map(|c| {
        let through = map.boxes[c.range_box];
        c.domain.len() / through.len()
    });
    let eps = standard_extendibility(map)
        .map(|r| r.overall_eps)
        .unwrap_or(0.0);
    CascadeRecord {
        step,
        case,
        tag,
        box_lengths: map.boxes.iter().map(|b| b.len()).collect(),
        ratio,
        alpha_fineness: alpha_fineness(map),
        min_extendibility: eps,
        ledger_beta: ledger.map(|l| l.beta()),
        v_bound_trend: ledger.and_then(|l| l.v_lower_bound().ok()).map(|v| v.trend),
        suitable: detect_suitable(map).is_some(),
        unresolved_measure: map.unresolved_measure,
        branch_count: map.branches.len(),
    }
}

/// Short univalent branches of a map: monotone branches not ranging
/// through `J`.
fn shorts(map: &BoxMap) -> Vec<usize> {
    map.branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind.is_monotone() && b.range_box != 0)
        .map(|(i, _)| i)
        .collect()
}

fn short_keys(map: &BoxMap) -> Vec<BranchKey> {
    (0..shorts(map).len() as u32).collect()
}

fn domain_key(d: Interval) -> (u64, u64) {
    (d.lo.to_bits(), d.hi.to_bits())
}

/// Derive the ledger step description from the construction trace.
///
/// Case assignment follows the construction: a new short branch whose
/// first hop through the central branch stays in the central domain is
/// immediate; otherwise the branch it exits into is the pre-composition
/// parent `P'`, and nesting of canonical extension domains decides
/// independent versus subordinate. Basic returns restart the ledger at
/// the all-zero symbols (the appendix's calculus tracks box chains).
/// Any ambiguity aborts the attachment.
fn bridge_step(
    input: &BoxMap,
    trace: &StepTrace,
    output: &BoxMap,
    case: &CaseReport,
    ledger: &SeparationLedger,
) -> Result<SeparationLedger, String> {
    let out_shorts = shorts(output);
    // Basic return: fresh all-zero symbols, history advanced.
    if case.basic && !case.close {
        let keys: Vec<BranchKey> = (0..out_shorts.len() as u32).collect();
        let mut fresh = SeparationLedger::all_zero(ledger.beta(), &keys);
        fresh = replay_history(ledger, fresh);
        return fresh
            .step(&StepDescription {
                close: false,
                assignments: vec![],
            })
            .map_err(|e| e.to_string());
    }

    let source = &trace.source;
    // Keys of the previous step's shorts, by domain identity in the
    // source (boundary refinement preserves short branches).
    let src_shorts = shorts(source);
    let mut src_key: BTreeMap<(u64, u64), BranchKey> = BTreeMap::new();
    for (k, &bi) in src_shorts.iter().enumerate() {
        src_key.insert(domain_key(source.branches[bi].domain), k as u32);
    }
    // Sanity: the previous ledger keyed the input's shorts the same way.
    if src_shorts.len() != ledger.symbols().len() {
        return Err(format!(
            "short count changed under refinement: {} vs ledger {}",
            src_shorts.len(),
            ledger.symbols().len()
        ));
    }

    let psi = input.central().ok_or("no central branch")?.clone();
    let b_dom = psi.domain;
    let bprime = input.boxes[psi.range_box];

    // P: the source branch containing the critical value's exit.
    let p_idx = source
        .locate(trace.v_exit)
        .ok_or("critical exit in a gap")?;
    let p_key = src_key
        .get(&domain_key(source.branches[p_idx].domain))
        .cloned();

    let ext_of = |bi: usize| -> Option<Interval> {
        canonical_extension(source, &source.branches[bi], bprime)
    };
    let delta = ledger.delta_glob().ok_or("empty ledger")?;

    let mut assignments: Vec<(BranchKey, CaseAssign)> = Vec::new();
    for (new_key, &obi) in out_shorts.iter().enumerate() {
        let nb = &output.branches[obi];
        let key = new_key as u32;
        // Persisting branch: same domain as a source short.
        if let Some(&old) = src_key.get(&domain_key(nb.domain)) {
            assignments.push((key, CaseAssign::Inherit { maximal: old }));
            continue;
        }
        // Thread the branch midpoint through the input map to find the
        // pre-composition parent.
        let mut y = nb.domain.mid();
        let mut central_applied = false;
        let mut exited = None;
        for _ in 0..4096 {
            if central_applied && !b_dom.contains(y) {
                exited = Some(y);
                break;
            }
            let bi = match input.locate(y) {
                Some(bi) => bi,
                None => break,
            };
            let is_central = input.branches[bi].kind == BranchKind::Folding;
            y = input.eval_map(&input.branches[bi].map, y);
            if is_central {
                central_applied = true;
                if b_dom.contains(y) && !case.close {
                    // Identity piece: immediate parent.
                    break;
                }
            }
        }
        if case.close {
            let u = exited.ok_or("close-return thread did not exit")?;
            let pp_idx = source.locate(u).ok_or("close exit in a gap")?;
            let pp_key = src_key
                .get(&domain_key(source.branches[pp_idx].domain))
                .ok_or("close parent is not a short branch")?;
            assignments.push((key, CaseAssign::CloseReturn { p_prime: *pp_key }));
            continue;
        }
        match exited {
            None => {
                // Immediate.
                let pk = p_key.ok_or("immediate case with a long critical branch")?;
                assignments.push((key, CaseAssign::Immediate { p: pk }));
            }
            Some(u) => {
                let pp_idx = source.locate(u).ok_or("exit in a gap")?;
                let pp_dom = source.branches[pp_idx].domain;
                let pp_key = match src_key.get(&domain_key(pp_dom)) {
                    Some(k) => *k,
                    None => {
                        // Exited into a long branch: outside the
                        // appendix's calculus; keep a fresh zero symbol
                        // via inheritance from the maximal... abort.
                        return Err("pre-composition parent is not short".into());
                    }
                };
                let pk = p_key.ok_or("box return with long critical branch")?;
                let (ep, epp) = match (ext_of(p_idx), ext_of(pp_idx)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err("canonical extension unavailable".into()),
                };
                let sep_lo = (ep.lo - epp.lo).abs();
                let sep_hi = (ep.hi - epp.hi).abs();
                if sep_lo < 1e-12 && sep_hi < 1e-12 && p_idx != pp_idx {
                    return Err("ambiguous extension nesting".into());
                }
                let assign = if !ep.intersects(&epp) {
                    CaseAssign::Independent {
                        p: pk,
                        p_prime: pp_key,
                        delta,
                    }
                } else if ep.contains_interval(&epp) && p_idx != pp_idx {
                    // P' subordinate to P: the canonical extension of P
                    // carries P' onto some P''.
                    let ext_map = &source.branches[p_idx];
                    let img = source.eval_map(&ext_map.map, pp_dom.mid());
                    let ppp_idx = source
                        .locate(img)
                        .ok_or("subordinate image in a gap")?;
                    let ppp_key = src_key
                        .get(&domain_key(source.branches[ppp_idx].domain))
                        .ok_or("subordinate image is not short")?;
                    CaseAssign::Subordinate {
                        p_double_prime: *ppp_key,
                    }
                } else if epp.contains_interval(&ep) && p_idx != pp_idx {
                    // P subordinate to P': analogous to the immediate
                    // case.
                    CaseAssign::Immediate { p: pk }
                } else if p_idx == pp_idx {
                    CaseAssign::Immediate { p: pk }
                } else {
                    CaseAssign::Independent {
                        p: pk,
                        p_prime: pp_key,
                        delta,
                    }
                };
                assignments.push((key, assign));
            }
        }
    }
    ledger
        .step(&StepDescription {
            close: case.close,
            assignments,
        })
        .map_err(|e| e.to_string())
}

/// Rebuild a fresh ledger carrying over the old history.
fn replay_history(old: &SeparationLedger, fresh: SeparationLedger) -> SeparationLedger {
    let mut led = fresh;
    for rec in old.history() {
        led = led
            .step(&StepDescription {
                close: rec.close,
                assignments: vec![],
            })
            .expect("empty replay step cannot fail");
    }
    led
}
