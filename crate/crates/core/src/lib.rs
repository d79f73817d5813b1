//! Stability certificates for feedback interconnections of a discrete-time LTI
//! system with a sector-bounded nonlinearity, on finite horizons and with
//! exponential weights.

pub mod certify;
pub mod error;
pub mod linalg;
pub mod lti;
pub mod sector;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
pub use lti::{Complex64, StateSpace};
pub use sector::{
    catalog, compatibility, flip_sign, indefinite, nested, preset, sector_interval_to_m, Compatibility, Feedback,
    Preset, PresetName, QuadSpec, Sector, SectorPair, SectorSpec, Side,
};
pub use signal::{pair_seminorm, quad_form, seminorm, sip, truncate, Signal, SipConfig, Weight};
pub use certify::{
    best_rate, certify, certify_with, check_frequency_condition, check_hard_condition, check_hard_condition_dense,
    find_violation, gamma_bound, gradient_method_lure, rate_grid, slemma_min_tau, Certificate, CertifyOptions,
    CertifyOutcome, GainBound, HardCheck, HardFailure, ViolationWitness,
};
pub use sim::{
    check_pointwise_sector, empirical_gain, interconnect, random_sector_nonlinearity, simulate_loop,
    verify_exponential_decay, DecayReport, LoopOptions, LoopSignals, Nonlinearity, StaticMap, StepGain,
};
