//! Verification experiments for the three headline claims: single-spike
//! robustness, the conditional variance gap, and the sign-collapse
//! separation on a noiseless-sign quadratic.

mod separation;
mod spike;
mod vgap;

pub use separation::{
    adversarial_init, run_separation_laprop, run_separation_mvn, run_separation_mvn_unpinned,
    SeparationResult, LAPROP_FLOOR_TOL, POTENTIAL_MONOTONE_TOL, TELESCOPE_TOL,
    TRAJECTORY_MATCH_TOL,
};
pub use spike::{
    run_spike, spike_closed_form_moments, t_star, SpikeRunResult, SpikeSample, BOUND_REL_SLACK,
    MOMENT_CHECK_REL_TOL,
};
pub use vgap::{vgap_closed_form, vgap_monte_carlo, VGapResult, MIN_INNER_SAMPLES};
