//! Complexity measures: information gain, elliptical potential, the l2 eluder bound,
//! empirical GEC certificates and brute-force DE/BE dimension.

mod dimension;
mod eluder;
mod gec;
mod info;

pub use dimension::{be_dimension, de_dimension, BeType, DIMENSION_CAP};
pub use eluder::{l2_eluder_check, EluderInstance};
pub use gec::{gec_certificate, gec_slack, BurnIn, DiscrepancyKind, GecCertificate, GecTrace};
pub use info::{elliptical_potential_check, information_gain, BoundCheck};
