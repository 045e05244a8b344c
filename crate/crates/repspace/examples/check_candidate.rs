//! Verify a candidate parameter point against every design constraint with
//! the membership oracle: per-frequency robust-performance rows plus the
//! regeneration-spectrum stability condition.
//!
//! ```bash
//! cargo run --example check_candidate [A0 A1]
//! ```

use std::path::Path;

use repspace::cli::load_config;
use repspace::regions::membership_oracle;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let point = if args.len() >= 3 {
        (
            args[1].parse().expect("A0 must be a number"),
            args[2].parse().expect("A1 must be a number"),
        )
    } else {
        (3.5e10, 2.6e5)
    };

    let fixture = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/afm.json"));
    let design = load_config(fixture).expect("bundled fixture");
    let report = membership_oracle(
        point,
        &design.plant,
        &design.controller,
        &design.selection,
        &design.schedule,
        design.stab.as_ref(),
    );

    println!("candidate (a0, a1) = ({:.5e}, {:.5e})\n", point.0, point.1);
    println!(
        "{:<5} {:<5} {:>10} {:>8} {:>8}   ws|S|+wt|T|",
        "k", "band", "f (Hz)", "ws", "wt"
    );
    for row in &report.rows {
        println!(
            "{:<5} {:<5} {:>10.0} {:>8.1} {:>8.3}   {} {}",
            row.k,
            row.band.name(),
            row.omega / (2.0 * std::f64::consts::PI),
            row.ws,
            row.wt,
            row.value
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "n/a".into()),
            if row.pass { "" } else { "  <-- FAIL" }
        );
    }
    if let Some(regen) = &report.regen {
        println!(
            "\nregeneration spectrum: worst R = {:.4} at {:.3e} rad/s (limit {:.2}) -> {}",
            regen.worst_value.unwrap_or(f64::NAN),
            regen.worst_omega.unwrap_or(f64::NAN),
            1.0 - regen.epsilon,
            if regen.pass { "pass" } else { "FAIL" }
        );
    }
    println!(
        "\nverdict: the candidate {} the design region",
        if report.verdict {
            "belongs to"
        } else {
            "is OUTSIDE"
        }
    );
}
