//! The reduction iteration on Fourier truncations.

mod assemble;
mod iterate;
mod measure;
mod schedule;

pub use assemble::{assemble_problem, beta_exponent, Assembly, DiophantineCheck, PerturbationSpec, Problem, Trig, TrigTerm};
pub use iterate::{
    contraction_ratios, kam_step, reducibility_residual, rounding_floor, run_iteration, KamState, LevelRecord, MelnikovScreen, RunOptions, RunResult,
    StepOptions, StepReport, StopReason, STEP_ROUNDING,
};
pub use measure::{midpoint_grid, resonance_filter, FilterParams, MeasureReport};
pub use schedule::{a3_exponent, gap_constant, IterationSchedule, LevelConstants, LevelPlan};
