//! Numerical laboratory for induced box mappings of the real quadratic family.
//!
//! The crate models one member of the normalized quadratic family in
//! critical-point-centered coordinates and builds the whole inducing
//! tool chain on top of it: first-return box mappings, the five inducing
//! operations with their case dispatch, almost-parabolic passage-time
//! analysis, the separation-symbol ledger in exact rational arithmetic,
//! planar hole-structure geometry, and quasisymmetric distortion
//! metrics. Everything is measured at desk scale in binary64 (with a
//! double-double fallback for deep itineraries); limits are truncated
//! explicitly and the truncated mass is reported, never hidden.

pub mod tol;

pub mod dd;
pub mod interval;

pub mod boxmap;
pub mod complexgeom;
pub mod inducing;
pub mod parabolic;
pub mod qsmetrics;
pub mod realmap;
pub mod separation;

pub mod acceptance;

pub use interval::Interval;
pub use realmap::QuadraticMap;
