//! Separation-symbol calculus in exact rational arithmetic.
//!
//! A normalized symbol is a quadruple of annulus-modulus lower bounds
//! `s1..s4` tied to a norm `beta` and corrections `lambda1, lambda2` by
//!
//! ```text
//! s1 = alpha + lambda1    s2 = alpha - lambda2
//! s3 = beta  - lambda1    s4 = beta  + lambda2      (alpha = beta/2)
//! ```
//!
//! subject to `alpha >= lambda1, lambda2 >= -alpha` and
//! `lambda1 + lambda2 >= 0`. The four update rules transport symbols
//! through one box inducing step; a ledger carries one symbol per short
//! univalent branch plus the per-step `v` lower bound `beta/4`.
//!
//! All arithmetic is exact. Values stay tiny (denominators are powers of
//! two times the denominator of beta), so rationals are reduced
//! `i128` fractions with checked arithmetic; any overflow aborts loudly
//! instead of rounding.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeparationError {
    #[error("symbol violates normalization constraints: {0}")]
    InvalidSymbol(String),
    #[error("caller-supplied delta {supplied} differs from ledger supremum {actual}")]
    DeltaMismatch { supplied: Rat, actual: Rat },
    #[error("invalid case assignment: {0}")]
    InvalidCaseAssignment(String),
    #[error("ledger history is empty")]
    EmptyHistory,
}

// ---------------------------------------------------------------------
// Exact rationals.
// ---------------------------------------------------------------------

/// Reduced exact rational with positive denominator.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rat {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

impl Rat {
    pub const ZERO: Rat = Rat { num: 0, den: 1 };
    pub const ONE: Rat = Rat { num: 1, den: 1 };

    pub fn new(num: i128, den: i128) -> Rat {
        assert!(den != 0, "zero denominator");
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den).max(1);
        Rat {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn from_int(n: i64) -> Rat {
        Rat {
            num: n as i128,
            den: 1,
        }
    }

    pub fn numer(&self) -> i128 {
        self.num
    }

    pub fn denom(&self) -> i128 {
        self.den
    }

    pub fn is_negative(&self) -> bool {
        self.num < 0
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    fn checked(num: Option<i128>, den: Option<i128>) -> Rat {
        let (n, d) = (
            num.expect("ledger rational overflow"),
            den.expect("ledger rational overflow"),
        );
        Rat::new(n, d)
    }

    pub fn add(&self, o: &Rat) -> Rat {
        Rat::checked(
            self.num
                .checked_mul(o.den)
                .and_then(|x| o.num.checked_mul(self.den).and_then(|y| x.checked_add(y))),
            self.den.checked_mul(o.den),
        )
    }

    pub fn sub(&self, o: &Rat) -> Rat {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Rat {
        Rat {
            num: -self.num,
            den: self.den,
        }
    }

    pub fn mul(&self, o: &Rat) -> Rat {
        Rat::checked(self.num.checked_mul(o.num), self.den.checked_mul(o.den))
    }

    pub fn div_int(&self, k: i128) -> Rat {
        assert!(k != 0);
        Rat::checked(Some(self.num), self.den.checked_mul(k))
    }

    pub fn half(&self) -> Rat {
        self.div_int(2)
    }

    /// Parse from "p/q" or integer form.
    pub fn parse(s: &str) -> Option<Rat> {
        if let Some((p, q)) = s.split_once('/') {
            let p: i128 = p.trim().parse().ok()?;
            let q: i128 = q.trim().parse().ok()?;
            if q == 0 {
                return None;
            }
            Some(Rat::new(p, q))
        } else {
            let p: i128 = s.trim().parse().ok()?;
            Some(Rat::from_int(p as i64))
        }
    }
}

impl PartialOrd for Rat {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rat {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let lhs = self.num.checked_mul(other.den).expect("ledger rational overflow");
        let rhs = other.num.checked_mul(self.den).expect("ledger rational overflow");
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Rat::parse(&s).ok_or_else(|| serde::de::Error::custom("bad rational"))
    }
}

// ---------------------------------------------------------------------
// Normalized symbols and the four update cases.
// ---------------------------------------------------------------------

/// A normalized separation symbol `(beta; lambda1, lambda2)`.
#[derive(Clone, PartialEq, Eq)]
pub struct NormalizedSymbol {
    beta: Rat,
    lambda1: Rat,
    lambda2: Rat,
}

impl fmt::Debug for NormalizedSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Sym(beta={}, l1={}, l2={})",
            self.beta, self.lambda1, self.lambda2
        )
    }
}

impl Serialize for NormalizedSymbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("NormalizedSymbol", 3)?;
        st.serialize_field("beta", &self.beta)?;
        st.serialize_field("lambda1", &self.lambda1)?;
        st.serialize_field("lambda2", &self.lambda2)?;
        st.end()
    }
}

impl NormalizedSymbol {
    pub fn new(beta: Rat, lambda1: Rat, lambda2: Rat) -> Result<Self, SeparationError> {
        let s = NormalizedSymbol {
            beta,
            lambda1,
            lambda2,
        };
        s.validate()?;
        Ok(s)
    }

    /// The all-zero symbol of norm `beta`.
    pub fn zero(beta: Rat) -> Self {
        NormalizedSymbol {
            beta,
            lambda1: Rat::ZERO,
            lambda2: Rat::ZERO,
        }
    }

    pub fn beta(&self) -> Rat {
        self.beta
    }

    pub fn lambda1(&self) -> Rat {
        self.lambda1
    }

    pub fn lambda2(&self) -> Rat {
        self.lambda2
    }

    pub fn alpha(&self) -> Rat {
        self.beta.half()
    }

    pub fn s1(&self) -> Rat {
        self.alpha().add(&self.lambda1)
    }

    pub fn s2(&self) -> Rat {
        self.alpha().sub(&self.lambda2)
    }

    pub fn s3(&self) -> Rat {
        self.beta.sub(&self.lambda1)
    }

    pub fn s4(&self) -> Rat {
        self.beta.add(&self.lambda2)
    }

    pub fn validate(&self) -> Result<(), SeparationError> {
        if self.beta.is_negative() {
            return Err(SeparationError::InvalidSymbol(format!(
                "beta = {} < 0",
                self.beta
            )));
        }
        let a = self.alpha();
        let na = a.neg();
        if self.lambda1 > a || self.lambda1 < na {
            return Err(SeparationError::InvalidSymbol(format!(
                "lambda1 = {} outside [-{a}, {a}]",
                self.lambda1
            )));
        }
        if self.lambda2 > a || self.lambda2 < na {
            return Err(SeparationError::InvalidSymbol(format!(
                "lambda2 = {} outside [-{a}, {a}]",
                self.lambda2
            )));
        }
        if self.lambda1.add(&self.lambda2).is_negative() {
            return Err(SeparationError::InvalidSymbol(format!(
                "lambda1 + lambda2 = {} < 0",
                self.lambda1.add(&self.lambda2)
            )));
        }
        Ok(())
    }
}

/// Result of one update: the new symbol plus the raw annulus bounds the
/// case formulas produced (before any decrease to normalized values).
#[derive(Clone, Debug)]
pub struct SymbolUpdate {
    pub symbol: NormalizedSymbol,
    pub raw: [Rat; 4],
}

/// Immediate parent branch: the new branch is a restriction of the
/// central branch to the preimage of the central domain.
///
/// New corrections are `l1 = lambda2(P)/2`, `l2 = lambda1(P)/2`; the raw
/// bounds coincide with the normalized values.
pub fn update_immediate(p: &NormalizedSymbol) -> Result<SymbolUpdate, SeparationError> {
    p.validate()?;
    let symbol = NormalizedSymbol::new(p.beta, p.lambda2.half(), p.lambda1.half())?;
    let raw = [symbol.s1(), symbol.s2(), symbol.s3(), symbol.s4()];
    Ok(SymbolUpdate { symbol, raw })
}

/// Non-immediate independent parents `P` (contains the critical value)
/// and `P'` (pre-composition branch), with `delta_glob` the supremum of
/// `-lambda2` over the ledger.
///
/// Raw bounds: `s1 = (beta + lambda2(P))/2`, `s2 = (alpha + delta)/2`,
/// `s3 = s1 + alpha + delta`, `s4 = s3 + (beta + lambda2(P') - alpha -
/// delta)/2`. The normalization inequalities `s3 + l1 >= beta` and
/// `s4 - l2 >= beta` are verified, then the symbol is stored with
/// `l1 = lambda2(P)/2`, `l2 = (alpha - delta)/2`.
pub fn update_independent(
    p: &NormalizedSymbol,
    p_prime: &NormalizedSymbol,
    delta_glob: &Rat,
) -> Result<SymbolUpdate, SeparationError> {
    p.validate()?;
    p_prime.validate()?;
    if p.beta != p_prime.beta {
        return Err(SeparationError::InvalidSymbol(format!(
            "mixed norms {} and {}",
            p.beta, p_prime.beta
        )));
    }
    let beta = p.beta;
    let alpha = beta.half();
    let l1 = p.lambda2.half();
    let l2 = alpha.sub(delta_glob).half();
    let s1 = beta.add(&p.lambda2).half();
    let s2 = alpha.add(delta_glob).half();
    let s3 = s1.add(&alpha).add(delta_glob);
    let s4 = s3.add(&beta.add(&p_prime.lambda2).sub(&alpha).sub(delta_glob).half());
    if s3.add(&l1) < beta {
        return Err(SeparationError::InvalidSymbol(format!(
            "independent-case check failed: s3 + l1 = {} < beta = {}",
            s3.add(&l1),
            beta
        )));
    }
    if s4.sub(&l2) < beta {
        return Err(SeparationError::InvalidSymbol(format!(
            "independent-case check failed: s4 - l2 = {} < beta = {}",
            s4.sub(&l2),
            beta
        )));
    }
    let symbol = NormalizedSymbol::new(beta, l1, l2)?;
    Ok(SymbolUpdate {
        symbol,
        raw: [s1, s2, s3, s4],
    })
}

/// `P'` subordinate to `P`: a univalent map onto the middle box carries
/// `P` onto the central domain and `P'` onto some branch `P''`.
///
/// New corrections `l1 = (-alpha + lambda1(P''))/2`,
/// `l2 = (alpha + lambda2(P''))/2`; raw bounds equal normalized values.
pub fn update_subordinate(ppp: &NormalizedSymbol) -> Result<SymbolUpdate, SeparationError> {
    ppp.validate()?;
    let alpha = ppp.alpha();
    let l1 = alpha.neg().add(&ppp.lambda1).half();
    let l2 = alpha.add(&ppp.lambda2).half();
    let symbol = NormalizedSymbol::new(ppp.beta, l1, l2)?;
    let raw = [symbol.s1(), symbol.s2(), symbol.s3(), symbol.s4()];
    Ok(SymbolUpdate { symbol, raw })
}

/// Close return: no immediate parent branches exist and every new branch
/// updates with the same estimates as the subordinate case, with `P'` in
/// the role of `P''`.
pub fn update_close(p_prime: &NormalizedSymbol) -> Result<SymbolUpdate, SeparationError> {
    update_subordinate(p_prime)
}

/// Subordinate branches adopt the symbol of their maximal branch.
pub fn subordinate_inherits(maximal: &NormalizedSymbol) -> NormalizedSymbol {
    maximal.clone()
}

// ---------------------------------------------------------------------
// The ledger.
// ---------------------------------------------------------------------

pub type BranchKey = u32;

/// Case assignment for one new short univalent branch.
#[derive(Clone, Debug, Serialize)]
pub enum CaseAssign {
    /// Parent branch is immediate; `p` is the branch holding the
    /// critical value.
    Immediate { p: BranchKey },
    /// Independent parents; `delta` must equal the ledger supremum of
    /// `-lambda2`.
    Independent {
        p: BranchKey,
        p_prime: BranchKey,
        delta: Rat,
    },
    /// `P'` subordinate to `P`; the update reads the symbol of `P''`.
    Subordinate { p_double_prime: BranchKey },
    /// Close-return update from the parent `P'`.
    CloseReturn { p_prime: BranchKey },
    /// Subordinate branch adopting its maximal branch's symbol verbatim.
    Inherit { maximal: BranchKey },
}

/// One inducing step as seen by the ledger.
#[derive(Clone, Debug, Serialize)]
pub struct StepDescription {
    pub close: bool,
    /// New branch key, case. Empty means the step did not touch the
    /// short branches and the ledger is carried over unchanged.
    pub assignments: Vec<(BranchKey, CaseAssign)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub close: bool,
    /// `beta/4` when refreshed by a non-close step, absent otherwise.
    pub v_bound: Option<Rat>,
}

/// Per-branch symbols plus the per-step history of `v` lower bounds.
#[derive(Clone, Debug, Serialize)]
pub struct SeparationLedger {
    beta: Rat,
    symbols: BTreeMap<BranchKey, NormalizedSymbol>,
    history: Vec<StepRecord>,
}

/// Current `v` lower bound and the linear-trend certificate.
#[derive(Clone, Debug, Serialize)]
pub struct VBound {
    /// `beta/4`, valid after the most recent non-close step.
    pub per_step: Rat,
    /// False when the last step was close (bound retained, not refreshed).
    pub refreshed: bool,
    pub non_close_steps: usize,
    /// `non_close_steps * beta/4`.
    pub trend: Rat,
}

impl SeparationLedger {
    /// Fresh ledger: all listed branches carry the zero symbol of norm
    /// `beta`.
    pub fn all_zero(beta: Rat, branches: &[BranchKey]) -> Self {
        let symbols = branches
            .iter()
            .map(|&k| (k, NormalizedSymbol::zero(beta)))
            .collect();
        SeparationLedger {
            beta,
            symbols,
            history: Vec::new(),
        }
    }

    pub fn beta(&self) -> Rat {
        self.beta
    }

    pub fn symbols(&self) -> &BTreeMap<BranchKey, NormalizedSymbol> {
        &self.symbols
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    /// Supremum of `-lambda2` over all symbols.
    pub fn delta_glob(&self) -> Option<Rat> {
        self.symbols.values().map(|s| s.lambda2.neg()).max()
    }

    fn symbol(&self, key: BranchKey) -> Result<&NormalizedSymbol, SeparationError> {
        self.symbols.get(&key).ok_or_else(|| {
            SeparationError::InvalidCaseAssignment(format!("unknown parent branch {key}"))
        })
    }

    /// Apply one step. The new symbol set replaces the old one when the
    /// step carries assignments; an empty step leaves the ledger
    /// unchanged except for the history entry... and an entirely empty
    /// description (no assignments, non-close) still refreshes the bound.
    pub fn step(&self, step: &StepDescription) -> Result<SeparationLedger, SeparationError> {
        let mut new_symbols = BTreeMap::new();
        if step.assignments.is_empty() {
            new_symbols = self.symbols.clone();
        }
        let delta_actual = self.delta_glob();
        for (key, assign) in &step.assignments {
            if step.close && !matches!(assign, CaseAssign::CloseReturn { .. } | CaseAssign::Inherit { .. }) {
                return Err(SeparationError::InvalidCaseAssignment(format!(
                    "close step carries a non-close case for branch {key}"
                )));
            }
            let symbol = match assign {
                CaseAssign::Immediate { p } => update_immediate(self.symbol(*p)?)?.symbol,
                CaseAssign::Independent { p, p_prime, delta } => {
                    let actual = delta_actual.ok_or_else(|| {
                        SeparationError::InvalidCaseAssignment(
                            "independent case on an empty ledger".into(),
                        )
                    })?;
                    if *delta != actual {
                        return Err(SeparationError::DeltaMismatch {
                            supplied: *delta,
                            actual,
                        });
                    }
                    update_independent(self.symbol(*p)?, self.symbol(*p_prime)?, delta)?.symbol
                }
                CaseAssign::Subordinate { p_double_prime } => {
                    update_subordinate(self.symbol(*p_double_prime)?)?.symbol
                }
                CaseAssign::CloseReturn { p_prime } => update_close(self.symbol(*p_prime)?)?.symbol,
                CaseAssign::Inherit { maximal } => subordinate_inherits(self.symbol(*maximal)?),
            };
            if symbol.beta() != self.beta {
                return Err(SeparationError::InvalidSymbol(
                    "update changed the ledger norm".into(),
                ));
            }
            symbol.validate()?;
            new_symbols.insert(*key, symbol);
        }
        let mut history = self.history.clone();
        history.push(StepRecord {
            close: step.close,
            v_bound: if step.close {
                None
            } else {
                Some(self.beta.div_int(4))
            },
        });
        Ok(SeparationLedger {
            beta: self.beta,
            symbols: new_symbols,
            history,
        })
    }

    pub fn v_lower_bound(&self) -> Result<VBound, SeparationError> {
        if self.history.is_empty() {
            return Err(SeparationError::EmptyHistory);
        }
        let non_close = self.history.iter().filter(|r| !r.close).count();
        let per_step = self.beta.div_int(4);
        let trend = per_step.mul(&Rat::from_int(non_close as i64));
        Ok(VBound {
            per_step,
            refreshed: !self.history.last().unwrap().close,
            non_close_steps: non_close,
            trend,
        })
    }
}

// ---------------------------------------------------------------------
// Seeded random-case simulation (the soundness harness).
// ---------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SimReport {
    pub trials: u64,
    pub total_updates: u64,
    pub violations: u64,
    pub beta_changes: u64,
    pub max_sequence_len: usize,
}

/// Run `trials` independent random case sequences from the all-zero
/// start and count constraint violations (expected: none). Sequences
/// mix close and non-close steps; parents are drawn uniformly from the
/// live ledger and `delta` is supplied correctly, mirroring a real
/// attachment.
pub fn simulate_random_cascades(trials: u64, seed: u64) -> SimReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let beta = Rat::ONE;
    let mut total_updates = 0u64;
    let mut violations = 0u64;
    let mut beta_changes = 0u64;
    let mut max_len = 0usize;
    for _ in 0..trials {
        let n_branches = rng.gen_range(1..=4u32);
        let keys: Vec<BranchKey> = (0..n_branches).collect();
        let mut ledger = SeparationLedger::all_zero(beta, &keys);
        let len = rng.gen_range(4..=16usize);
        max_len = max_len.max(len);
        for _ in 0..len {
            let close = rng.gen_bool(0.25);
            let parents: Vec<BranchKey> = ledger.symbols().keys().cloned().collect();
            let pick = |rng: &mut rand_chacha::ChaCha8Rng| parents[rng.gen_range(0..parents.len())];
            let n_new = rng.gen_range(1..=4u32);
            let delta = ledger.delta_glob().unwrap();
            let mut assignments = Vec::with_capacity(n_new as usize);
            for key in 0..n_new {
                let assign = if close {
                    if rng.gen_bool(0.2) {
                        CaseAssign::Inherit { maximal: pick(&mut rng) }
                    } else {
                        CaseAssign::CloseReturn { p_prime: pick(&mut rng) }
                    }
                } else {
                    match rng.gen_range(0..4u8) {
                        0 => CaseAssign::Immediate { p: pick(&mut rng) },
                        1 => CaseAssign::Independent {
                            p: pick(&mut rng),
                            p_prime: pick(&mut rng),
                            delta,
                        },
                        2 => CaseAssign::Subordinate { p_double_prime: pick(&mut rng) },
                        _ => CaseAssign::Inherit { maximal: pick(&mut rng) },
                    }
                };
                assignments.push((key, assign));
            }
            total_updates += assignments.len() as u64;
            match ledger.step(&StepDescription { close, assignments }) {
                Ok(next) => {
                    if next.beta() != beta {
                        beta_changes += 1;
                    }
                    for s in next.symbols().values() {
                        if s.validate().is_err() {
                            violations += 1;
                        }
                    }
                    ledger = next;
                }
                Err(_) => violations += 1,
            }
        }
    }
    SimReport {
        trials,
        total_updates,
        violations,
        beta_changes,
        max_sequence_len: max_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i128, d: i128) -> Rat {
        Rat::new(n, d)
    }

    fn sym(beta: Rat, l1: Rat, l2: Rat) -> NormalizedSymbol {
        NormalizedSymbol::new(beta, l1, l2).unwrap()
    }

    #[test]
    fn rat_basics() {
        assert_eq!(r(2, 4), r(1, 2));
        assert_eq!(r(1, 3).add(&r(1, 6)), r(1, 2));
        assert_eq!(r(-1, 2).half(), r(-1, 4));
        assert_eq!(r(3, 4).to_string(), "3/4");
        assert_eq!(Rat::parse("3/4"), Some(r(3, 4)));
        assert_eq!(Rat::parse("-5"), Some(r(-5, 1)));
        assert!(r(1, 3) < r(1, 2));
    }

    #[test]
    fn immediate_case_exact_values() {
        // beta=1, lambda=0: new symbol stays zero, s = (1/2, 1/2, 1, 1).
        let p = NormalizedSymbol::zero(Rat::ONE);
        let up = update_immediate(&p).unwrap();
        assert_eq!(up.symbol.lambda1(), Rat::ZERO);
        assert_eq!(up.symbol.lambda2(), Rat::ZERO);
        assert_eq!(up.raw, [r(1, 2), r(1, 2), Rat::ONE, Rat::ONE]);

        // beta=1, l1=1/2, l2=-1/4 -> l1' = -1/8, l2' = 1/4.
        let p = sym(Rat::ONE, r(1, 2), r(-1, 4));
        let up = update_immediate(&p).unwrap();
        assert_eq!(up.symbol.lambda1(), r(-1, 8));
        assert_eq!(up.symbol.lambda2(), r(1, 4));
        up.symbol.validate().unwrap();
    }

    #[test]
    fn immediate_rejects_invalid() {
        // lambda1 = 0.6 > alpha = 1/2.
        assert!(NormalizedSymbol::new(Rat::ONE, r(3, 5), Rat::ZERO).is_err());
    }

    #[test]
    fn independent_case_exact_values() {
        // beta=1, lambda2(P)=1/5, delta=1/10, lambda2(P')=-1/10.
        let p = sym(Rat::ONE, Rat::ZERO, r(1, 5));
        let pp = sym(Rat::ONE, r(1, 10), r(-1, 10));
        let up = update_independent(&p, &pp, &r(1, 10)).unwrap();
        assert_eq!(up.symbol.lambda1(), r(1, 10));
        assert_eq!(up.symbol.lambda2(), r(1, 5));
        assert_eq!(up.raw, [r(3, 5), r(3, 10), r(6, 5), r(27, 20)]);

        // All-zero ledger: delta = 0.
        let z = NormalizedSymbol::zero(Rat::ONE);
        let up = update_independent(&z, &z, &Rat::ZERO).unwrap();
        assert_eq!(up.symbol.lambda1(), Rat::ZERO);
        assert_eq!(up.symbol.lambda2(), r(1, 4));
    }

    #[test]
    fn subordinate_case_exact_values() {
        // beta=1, l1(P'')=1/10, l2(P'')=0.
        let ppp = sym(Rat::ONE, r(1, 10), Rat::ZERO);
        let up = update_subordinate(&ppp).unwrap();
        assert_eq!(up.symbol.lambda1(), r(-1, 5));
        assert_eq!(up.symbol.lambda2(), r(1, 4));
        assert!(!up.symbol.lambda1().add(&up.symbol.lambda2()).is_negative());

        // Zero symbol: boundary of validity, sum exactly 0.
        let up = update_subordinate(&NormalizedSymbol::zero(Rat::ONE)).unwrap();
        assert_eq!(up.symbol.lambda1(), r(-1, 4));
        assert_eq!(up.symbol.lambda2(), r(1, 4));
        assert_eq!(up.symbol.lambda1().add(&up.symbol.lambda2()), Rat::ZERO);
    }

    #[test]
    fn close_equals_subordinate() {
        for (l1, l2) in [(Rat::ZERO, Rat::ZERO), (r(1, 8), r(1, 8)), (r(-1, 4), r(1, 2))] {
            let s = sym(Rat::ONE, l1, l2);
            let a = update_close(&s).unwrap();
            let b = update_subordinate(&s).unwrap();
            assert_eq!(a.symbol, b.symbol);
            assert_eq!(a.raw, b.raw);
        }
    }

    #[test]
    fn inherits_identically() {
        let s = sym(r(3, 2), r(1, 4), r(1, 8));
        assert_eq!(subordinate_inherits(&s), s);
    }

    #[test]
    fn ledger_steps_and_v_bound() {
        let ledger = SeparationLedger::all_zero(Rat::ONE, &[0, 1]);
        // Empty step: symbols unchanged, bound refreshed.
        let l1 = ledger
            .step(&StepDescription {
                close: false,
                assignments: vec![],
            })
            .unwrap();
        assert_eq!(l1.symbols(), ledger.symbols());
        let v = l1.v_lower_bound().unwrap();
        assert_eq!(v.per_step, r(1, 4));
        assert!(v.refreshed);
        assert_eq!(v.non_close_steps, 1);

        // Close step: bound retained, flagged not refreshed.
        let l2 = l1
            .step(&StepDescription {
                close: true,
                assignments: vec![(0, CaseAssign::CloseReturn { p_prime: 0 })],
            })
            .unwrap();
        let v2 = l2.v_lower_bound().unwrap();
        assert!(!v2.refreshed);
        assert_eq!(v2.non_close_steps, 1);
        assert_eq!(v2.trend, r(1, 4));

        assert!(matches!(
            SeparationLedger::all_zero(Rat::ONE, &[0]).v_lower_bound(),
            Err(SeparationError::EmptyHistory)
        ));
    }

    #[test]
    fn delta_mismatch_detected() {
        let ledger = SeparationLedger::all_zero(Rat::ONE, &[0]);
        let err = ledger
            .step(&StepDescription {
                close: false,
                assignments: vec![(
                    0,
                    CaseAssign::Independent {
                        p: 0,
                        p_prime: 0,
                        delta: r(1, 3),
                    },
                )],
            })
            .unwrap_err();
        assert!(matches!(err, SeparationError::DeltaMismatch { .. }));
    }

    /// Exhaustive check of the independent-case inequalities over the
    /// rational grid with denominator 16.
    #[test]
    fn independent_inequalities_exhaustive_grid() {
        let beta = Rat::ONE;
        let alpha = beta.half();
        let mut checked = 0u64;
        for l2p in -8..=8i128 {
            for l2pp in -8..=8i128 {
                for d in -8..=8i128 {
                    let l2p = r(l2p, 16);
                    let l2pp = r(l2pp, 16);
                    let delta = r(d, 16);
                    // Ledger supremum constraints: delta dominates -lambda2
                    // of every branch and cannot exceed alpha.
                    if delta < l2p.neg() || delta < l2pp.neg() || delta > alpha {
                        continue;
                    }
                    // lambda1 = alpha is always an admissible completion.
                    let p = sym(beta, alpha, l2p);
                    let pp = sym(beta, alpha, l2pp);
                    match update_independent(&p, &pp, &delta) {
                        Ok(up) => {
                            assert!(up.raw[2].add(&up.symbol.lambda1()) >= beta);
                            assert!(up.raw[3].sub(&up.symbol.lambda2()) >= beta);
                            up.symbol.validate().unwrap();
                            checked += 1;
                        }
                        Err(SeparationError::InvalidSymbol(_)) => {
                            // Side condition failed (lambda sum negative);
                            // surfaced, not clamped. Requires delta > alpha/2.
                            assert!(delta > alpha.half());
                        }
                        Err(e) => panic!("unexpected error {e:?}"),
                    }
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn random_simulation_is_sound_and_deterministic() {
        let rep = simulate_random_cascades(2000, 7);
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.beta_changes, 0);
        let rep2 = simulate_random_cascades(2000, 7);
        assert_eq!(rep.total_updates, rep2.total_updates);
    }

    #[test]
    fn serialization_uses_rational_strings() {
        let s = sym(Rat::ONE, r(1, 4), r(-1, 8));
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"beta":"1","lambda1":"1/4","lambda2":"-1/8"}"#);
    }
}
