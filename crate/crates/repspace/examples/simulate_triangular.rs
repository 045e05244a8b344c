//! Closed-loop triangular-wave tracking with and without the repetitive
//! loop: the per-period peak error collapses once the period delay fills.
//!
//! ```bash
//! cargo run --release --example simulate_triangular
//! ```

use std::path::Path;

use repspace::cli::load_config;
use repspace::repcon::{BiquadSection, RepetitiveController};
use repspace::sim::{per_period_error_metrics, simulate, Reference};

fn main() {
    let fixture = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/afm.json"));
    let design = load_config(fixture).expect("bundled fixture");
    let tau_d = design.controller.tau_d;
    let reference = Reference::Triangle {
        amplitude: 100.0,
        period: tau_d,
    };
    let duration = 20.0 * tau_d;
    let point = (3.5e10, 2.6e5);

    let ctrl_on = design
        .selection
        .instantiate(&design.controller, point.0, point.1);
    let ctrl_off = RepetitiveController::new(
        design.controller.tau_d,
        design.controller.tau_q,
        design.controller.tau_b,
        vec![BiquadSection::zero()],
        vec![],
    )
    .unwrap();

    let on = simulate(&design.plant, &ctrl_on, &reference, duration, 1e-7).unwrap();
    let off = simulate(&design.plant, &ctrl_off, &reference, duration, 1e-7).unwrap();
    let mon = per_period_error_metrics(&on, tau_d).unwrap();
    let moff = per_period_error_metrics(&off, tau_d).unwrap();

    println!(
        "triangular tracking at 2 kHz, amplitude 100 (a0 = {:.2e}, a1 = {:.2e})\n",
        point.0, point.1
    );
    println!(
        "{:>7} {:>16} {:>16}",
        "period", "peak err (loop)", "peak err (plain)"
    );
    for (a, b) in mon.iter().zip(moff.iter()) {
        println!(
            "{:>7} {:>16.4} {:>16.4}",
            a.index, a.peak_error, b.peak_error
        );
    }
    let ratio = moff.last().unwrap().peak_error / mon.last().unwrap().peak_error;
    println!("\nfinal-period improvement: x{ratio:.1}");
}
