//! Tail estimators, controlled skeletons and rate-function bounds.

pub mod rate;
pub mod skeleton;
pub mod stats;
pub mod tail;

pub use rate::{estimate_rate, RateConfig, RateEstimate, RateStatus, RateTarget};
pub use skeleton::{energy, skeleton_solve, ControlPath};
pub use stats::{clopper_pearson, CONFIDENCE};
pub use tail::{
    equiv_curve, equiv_curve_with, estimate_tail, estimate_tail_with, exit_curve, hv_energy, path_outcome,
    sup_h_distance, threshold_curve_with, CurveRow, Ensemble, EquivCurve, EquivCurveSpec, PathOutcome, Sequential,
    Statistic, TailEstimate, TailExperiment,
};
