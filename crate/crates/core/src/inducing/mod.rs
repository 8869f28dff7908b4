//! The inducing engine: initial induced map, the five inducing
//! operations, boundary refinement, the general inducing step with its
//! case dispatch, suitable-map detection, cascades and saturated maps.

mod cascade;
mod initial;
mod ops;
mod saturated;
mod step;

pub use cascade::{
    run_cascade, run_cascade_from, CascadeConfig, CascadeOutcome, CascadeRecord, StopRule,
    Termination,
};
pub use initial::{
    descend_renormalizations, initial_box_map, initial_box_map_at, level_fid, RenormLevel,
};
pub use ops::{
    almost_parabolic_pullback, boundary_refinement, critical_pullback_filling, detect_suitable,
    filling_in, refine_at_boundary, simple_critical_pullback, simultaneous_monotone_pullback,
    BoundaryMode, Side,
};
pub use saturated::{saturated_map, SaturatedReport};
pub use step::{general_inducing_step, CaseReport, StepTrace, TraceParent};

use crate::boxmap::BoxMapError;
use crate::interval::Interval;
use crate::realmap::RealMapError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InducingError {
    #[error("critical orbit does not return within the horizon")]
    NoReturn,
    #[error("horizon exceeded; covered fraction {covered}")]
    HorizonExceeded { covered: f64 },
    #[error("no external branch at this side")]
    NoExternalBranch,
    #[error("external branch endpoint is not a repelling fixed point")]
    NotRepelling,
    #[error("selected branch does not range through J")]
    BranchNotOntoJ,
    #[error("box must lie strictly between B0 and the central domain")]
    BadBox,
    #[error("source map is refined at a boundary")]
    SourceRefinedAtBoundary,
    #[error("central orbit does not escape the central domain within the horizon")]
    NoEscape,
    #[error("operation requires a close return")]
    NotCloseReturn,
    #[error("operation requires a full or type I map")]
    WrongInputType,
    #[error("map is suitable; restrictive interval ({}, {})", .interval.lo, .interval.hi)]
    SuitableMap { interval: Interval, period: u32 },
    #[error("critical value within tolerance of a domain boundary; case dispatch aborted")]
    AmbiguousItinerary,
    #[error("map is not renormalizable at the requested level")]
    NotRenormalizable,
    #[error("construction defect: {0}")]
    ConstructionDefect(String),
    #[error(transparent)]
    BoxMap(#[from] BoxMapError),
    #[error(transparent)]
    RealMap(#[from] RealMapError),
}
