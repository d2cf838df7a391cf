//! Scaling condition, moment bounds and the martingale random-walk simulator.

pub mod scaling;
pub mod sequence;
pub mod sim;

pub use scaling::{
    choose_rho, derived_bounds, fit_constants, log_partial_sum_bound, moment_lower_bounds, moments,
    random_scaling_pair, summation_by_parts_check, validate_scaling, ScalingConstants, SequencePair, SumEnd,
};
pub use sequence::{Sequence, Tail};
pub use sim::{
    simulate_walk, simulate_walk_with, Dyadic, EnsembleReport, IncrementLaw, LawSource, StateLaws, WalkConfig,
    WalkTrace,
};
