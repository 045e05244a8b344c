//! Shared fixtures for unit tests: the high-speed AFM scanner example.

use crate::freqresp::TransferFunction;
use crate::pointcond::{AxisRange, ParamBox, ParameterSelection, TargetFilter, Tie};
use crate::repcon::{Band, BiquadSection, RepetitiveController, Slot, WeightSchedule};

pub const AFM_TAU_D: f64 = 5e-4;
pub const AFM_TAU_Q: f64 = 7.5e-6;
pub const AFM_TAU_B: f64 = 3e-6;

/// Fourth-order scanner plant: K = 1e12, anti-resonance 41.6 kHz, resonances
/// 40.9 kHz (ζ = 0.016) and 120 kHz (ζ = 0.17).
pub fn afm_plant() -> TransferFunction {
    TransferFunction::from_resonant_modes(
        1e12,
        &[(41600.0, 0.016)],
        &[(40900.0, 0.016), (120000.0, 0.17)],
        0.0,
    )
    .unwrap()
}

/// Controller template: q_p = a0/(s² + a1·s + a0) with a 7.5 µs advance,
/// b = pure 3 µs advance.
pub fn afm_controller(a0: f64, a1: f64) -> RepetitiveController {
    RepetitiveController::new(
        AFM_TAU_D,
        AFM_TAU_Q,
        AFM_TAU_B,
        vec![BiquadSection::new(0.0, 0.0, a0, 1.0, a1, a0)],
        vec![],
    )
    .unwrap()
}

/// The two tuned coefficients are (a0, a1) of the unity-dc-gain low-pass
/// structure: n0 carries a0 (mirrored into d0), d1 carries a1.
pub fn afm_selection() -> ParameterSelection {
    ParameterSelection {
        target: TargetFilter::Qp,
        section_index: 0,
        free: (Slot::N0, Slot::D1),
        tie: Some(Tie {
            mirror: Slot::D0,
            source: Slot::N0,
        }),
        bounds: ParamBox {
            x: AxisRange {
                lo: 1e8,
                hi: 1e12,
                log: true,
            },
            y: AxisRange {
                lo: 1e3,
                hi: 1e7,
                log: true,
            },
        },
    }
}

/// Full 12-row weight table of the scanner design study.
pub fn afm_schedule() -> WeightSchedule {
    WeightSchedule::new(
        AFM_TAU_D,
        0.05,
        &[
            (1, 500.0, 0.0, Band::NP),
            (2, 225.0, 0.0, Band::NP),
            (3, 115.0, 0.0, Band::NP),
            (4, 75.0, 0.0, Band::NP),
            (40, 3.3, 0.001, Band::RP),
            (50, 4.5, 0.045, Band::RP),
            (55, 4.5, 0.001, Band::RP),
            (60, 1.5, 0.005, Band::RP),
            (70, 1.5, 0.01, Band::RP),
            (80, 0.0, 0.05, Band::RS),
            (90, 0.0, 0.05, Band::RS),
            (100, 0.0, 0.05, Band::RS),
        ],
    )
    .unwrap()
}

/// A point well inside the solution region of the scanner design.
pub fn afm_interior_point() -> (f64, f64) {
    (3.5e10, 2.6e5)
}
