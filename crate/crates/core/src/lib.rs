//! Optimistic posterior sampling for episodic interactive decision making.
//!
//! The crate is organised bottom-up:
//!
//! - [`decision`]: tabular MDP/POMDP environments, trajectories, history policies and
//!   seeded episode sampling.
//! - [`psr`]: observable-operator predictive state representations, their construction
//!   from POMDP families and regularity / rank certificates.
//! - [`divergence`]: total variation, KL and squared Hellinger distance.
//! - [`hypothesis`]: finite hypothesis classes, planning oracles and link functions.
//! - [`agents`]: the posterior-sampling agents (model-free, model-based, PSR, PO-bilinear).
//! - [`complexity`]: information gain, elliptical potential, the l2 eluder bound, empirical
//!   GEC certificates and brute-force DE/BE dimension.
//! - [`io`]: file formats for environments, PSRs, hypothesis classes and traces.

pub mod agents;
pub mod complexity;
pub mod decision;
pub mod divergence;
pub mod error;
pub mod hypothesis;
pub mod io;
pub mod linalg;
pub mod psr;
pub mod rng;

pub use error::{GecError, Result};
