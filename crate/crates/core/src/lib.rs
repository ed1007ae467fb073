//! Guidance and control simulation toolkit for underwater vehicles.
//!
//! The crate wires together a two-layer motion controller around a
//! reduced-order AUV surrogate plant:
//!
//! * an outer geometric path-following loop that steers the vehicle onto a
//!   3D Bernstein-polynomial path via a virtual target and a parallel
//!   transport frame ([`path`], [`pf`]),
//! * an inner sampled-data L1 adaptive loop that augments a classical PI
//!   autopilot with a piecewise-constant uncertainty estimate ([`l1`]),
//! * the surrogate vehicle with x-configured stern planes and a near-surface
//!   suction disturbance ([`plant`]),
//! * and a deterministic scenario runner with CSV/JSON telemetry and
//!   stability-bound monitors ([`sim`]).

pub mod l1;
pub mod lti;
pub mod path;
pub mod pf;
pub mod plant;
pub mod se3;
pub mod sim;
