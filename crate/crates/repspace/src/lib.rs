//! Parameter-space design of robust repetitive controllers.
//!
//! A repetitive controller embeds a period-long delay in a positive feedback
//! loop so the loop gain becomes very large at the fundamental frequency of a
//! periodic reference (or disturbance) and at its harmonics. This crate maps
//! frequency-domain robust-performance bounds of such loops into 2-D regions
//! of two chosen controller coefficients, intersects the per-frequency
//! regions into an overall solution region, verifies candidate designs
//! against the same bounds, and simulates the closed loop in the time domain
//! with exact integer-sample delay lines.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`freqresp`]: rational transfer functions with pure delays, exact
//!   frequency response, Bode grids, and the standard controller biquads
//!   (P/PD/PI/PID/lag/lead/filters).
//! - [`repcon`]: repetitive-control loop algebra — loop gain, sensitivity,
//!   complementary sensitivity, the regeneration spectrum `R(ω)` and the
//!   robust-performance functional `|W_S·S| + |W_T·T|`.
//! - [`pointcond`]: the per-frequency point-condition solver. Sweeps the
//!   loop-gain phase, solves the cosine-rule quadratic for admissible `|L|`,
//!   back-solves the filter targets, and resolves the two free controller
//!   coefficients, producing a closed boundary curve in the parameter plane.
//! - [`regions`]: boolean rasters of the strict inequalities over a parameter
//!   box, curve-side classification, region intersection, point picking, the
//!   independent membership oracle, and JSON/CSV/SVG export.
//! - [`sim`]: state-space realization, delay lines, fixed-step 4th-order
//!   closed-loop simulation, and per-period tracking-error metrics.
//! - [`cli`]: JSON design configs and the `map`/`check`/`bode`/`regen`/
//!   `simulate` command drivers used by the `repspace` binary.
//!
//! Start with the runnable examples (`cargo run --example map_solution_region`
//! and friends) for end-to-end usage on the bundled high-speed scanner
//! fixture.

pub mod cli;
pub mod freqresp;
pub mod pointcond;
pub mod regions;
pub mod repcon;
pub mod sim;

mod svg;

#[cfg(test)]
pub(crate) mod testutil;

pub use num_complex::Complex64;

pub use freqresp::{bode_grid, eval_tf, make_controller_tf, BodePoint, TransferFunction};
pub use pointcond::{
    active_theta_intervals, discriminant, solve_loop_magnitude, trace_point_condition_curve,
    AxisRange, ParamBox, ParameterSelection, TargetFilter, TracedCurve,
};
pub use regions::{
    classify_region, intersect_regions, membership_oracle, pick_point, OverallRegion, PickStrategy,
    RasterGrid, SolutionRegion,
};
pub use repcon::{
    comp_sensitivity, loop_gain, regen_stability_check, regeneration_spectrum, robust_perf_value,
    sensitivity, Band, BiquadSection, RepetitiveController, Slot, WeightEntry, WeightSchedule,
};
pub use sim::{
    per_period_error_metrics, realize, simulate, triangular_wave, Reference, SimulationTrace,
    StateSpaceBlock,
};
