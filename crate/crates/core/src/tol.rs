//! Central tolerances and truncation thresholds.
//!
//! Every cutoff used by the numerical machinery is defined here, once,
//! with its origin. Nothing else in the crate hard-codes a magic epsilon.

/// Orbit points closer to the critical point than this trigger the
/// C-symbol / ambiguity path in itineraries. Binary64 noise floor with
/// headroom: a single evaluation of the map loses at most a few ulps at
/// unit scale.
pub const C_SYMBOL: f64 = 1e-12;

/// Domains shorter than this are dropped from induced maps and their
/// total measure reported. Finite truncation of the dense-domain
/// idealization.
pub const EPS_LEN: f64 = 1e-12;

/// Bisection tolerance for branch inversion and root finding.
pub const INVERT: f64 = 1e-14;

/// Resolution of the binary search for an invariant symmetric interval
/// in suitable-map detection.
pub const SUITABLE: f64 = 1e-13;

/// Relative agreement required between an induced branch and the direct
/// iterate of the base map (semantic preservation checks).
pub const SEMANTIC_REL: f64 = 1e-9;

/// Critical values closer than this to a domain boundary abort a case
/// dispatch instead of guessing.
pub const CASE_MARGIN: f64 = 1e-12;

/// Golden-section tolerance for the minimum of `phi(x) - x` in the
/// almost-parabolic analysis.
pub const Z_MIN: f64 = 1e-13;

/// Default horizon for first-return / first-entry scans.
pub const DEFAULT_HORIZON: u32 = 4096;

/// Default cap on backward-orbit length in the parabolic module.
pub const ORBIT_CAP: usize = 1_000_000;

/// Iteration cap for truncated L-infinity limits (filling-in and the
/// critical pull-back double sequence).
pub const LIMIT_ROUNDS: usize = 64;

/// Depth cap for minimal boundary refinement search.
pub const REFINE_DEPTH_CAP: u32 = 64;

/// Default bisection depth for placing the critical value of an
/// artificial map.
pub const ARTIFICIAL_BISECT_DEPTH: u32 = 48;

/// Default itinerary depth matched by the artificial-map construction.
pub const ARTIFICIAL_ITIN_DEPTH: usize = 8;

/// Fraction of the domain of an induced map that must be covered by
/// resolved branches; less than this raises `HorizonExceeded`.
pub const MIN_COVERED: f64 = 0.999;

/// Per-map branch budget: beyond this, the shortest domains are
/// truncated into the unresolved mass (reported, never hidden).
pub const MAX_BRANCHES: usize = 1024;

/// Composition-depth cap in truncated limits; deeper chains are
/// truncated into the unresolved mass.
pub const LIMIT_DEPTH: u32 = 24;

/// Default sample counts.
pub const CURVE_SAMPLES: usize = 256;
pub const QS_SCALES: usize = 64;
pub const QS_BASE_POINTS: usize = 256;
pub const FIT_SAMPLES: usize = 512;
