//! Perturbation-based attribution maps (FAME), CAM and perturbation baselines,
//! and removal-based evaluation metrics for small CNNs trained in-crate.

pub mod attribution;
pub mod evaluation;
pub mod io;
pub mod netcore;
pub mod seeds;
pub mod training;
