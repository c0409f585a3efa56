//! Synthetic data, measure discretization and grid-refinement studies.

mod ladder;
mod measure;
mod simulate;

pub use ladder::{
    dyadic_ladder, run_gamma_ladder, ConvergenceReport, LadderOptions, LadderProblem, Rung,
    RungReport, RungStatus, MIN_PROBE_POINTS,
};
pub use measure::{
    density_tv_norm, discretize_density, discretize_measure, seasonal_innovation, trend_innovation,
    Atom, AtomicMeasure, Domain,
};
pub use simulate::{simulate, Dataset, GroundTruth, SyntheticModel};
