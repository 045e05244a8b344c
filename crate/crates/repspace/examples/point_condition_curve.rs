//! Trace the point-condition boundary curve of one weight-table row.
//!
//! At the fundamental frequency the nominal-performance bound |W_S·S| < 1
//! becomes an equality curve in the (a0, a1) plane of the low-pass filter
//! q_p = a0/(s² + a1·s + a0); every traced point puts the loop gain exactly
//! on that boundary.
//!
//! ```bash
//! cargo run --example point_condition_curve
//! ```

use std::path::Path;

use repspace::cli::load_config;
use repspace::repcon::robust_perf_value;
use repspace::{active_theta_intervals, trace_point_condition_curve};

fn main() {
    let fixture = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/afm.json"));
    let design = load_config(fixture).expect("bundled fixture");
    let row = design.schedule.entries[0];
    println!(
        "row k = {} ({}): f = {:.0} Hz, ws = {}, wt = {}",
        row.k,
        row.band,
        row.omega / (2.0 * std::f64::consts::PI),
        row.ws,
        row.wt
    );

    let intervals = active_theta_intervals(row.ws, row.wt, 2048);
    println!("active phase arcs (theta ranges where real |L| solutions exist):");
    for itv in &intervals {
        println!("  [{:.6}, {:.6}] rad", itv.lo, itv.hi);
    }

    let curve = trace_point_condition_curve(
        &design.plant,
        &design.controller,
        &design.selection,
        row.ws,
        row.wt,
        row.omega,
        2048,
    )
    .expect("this row has a boundary curve");
    println!(
        "\ntraced {} points ({} skipped), {} closed ring(s)",
        curve.points.len(),
        curve.skipped,
        curve.rings.len()
    );

    println!("\nsampled boundary points (a0, a1) and their constraint value:");
    for point in curve.points.iter().step_by(curve.points.len() / 8) {
        let ctrl = design
            .selection
            .instantiate(&design.controller, point.p1, point.p2);
        let value = robust_perf_value(&design.plant, &ctrl, row.ws, row.wt, row.omega).unwrap();
        println!(
            "  theta = {:>8.4}  |L| = {:>10.1}  a0 = {:>12.5e}  a1 = {:>12.5e}  ws|S|+wt|T| = {:.9}",
            point.theta,
            point.loop_gain.norm(),
            point.p1,
            point.p2,
            value
        );
    }
}
