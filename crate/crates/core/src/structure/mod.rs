//! Multiscale structure of point families: uniformization, branching
//! functions, the slope-merging decomposition and non-concentrated subsets.

mod nonconc;
mod rational;
mod slopes;
mod uniform;

pub(crate) use nonconc::locate;
pub use nonconc::{
    choose_eta0_log2, extract_nonconcentrated, rescaled_set_check, verify_certificate, CertificateCheck, Eta,
    NonConcentrationCertificate, RescaledReport, DIMENSION_CONSTANT, REL_TOL,
};
pub use rational::{q_to_f64, q_to_string, Rational};
pub use slopes::{merge_slopes, superlinearity_check, BranchingProfile, PiecewiseAffine, SlopeDecomposition};
pub use uniform::{
    choose_block, decompose_uniform, is_uniform, uniformize, DecomposeStop, Decomposition, UniformFamily,
};
