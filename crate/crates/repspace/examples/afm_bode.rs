//! Frequency response of the bundled high-speed scanner plant: dc gain,
//! resonance peaks, and the design frequencies of the weight table.
//!
//! ```bash
//! cargo run --example afm_bode
//! ```

use std::f64::consts::PI;
use std::path::Path;

use repspace::cli::load_config;
use repspace::{bode_grid, eval_tf};

fn main() {
    let fixture = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/afm.json"));
    let design = load_config(fixture).expect("bundled fixture");
    let plant = &design.plant;

    let dc = eval_tf(plant, 0.0).unwrap();
    println!("dc gain: {:.4}", dc.re);

    let n = 400;
    let (lo, hi) = (1e3, 200e3);
    let omegas: Vec<f64> = (0..n)
        .map(|i| 2.0 * PI * lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect();
    let points = bode_grid(plant, &omegas).unwrap();

    println!("\nlocal magnitude maxima (resonances):");
    for i in 1..n - 1 {
        if points[i].magnitude > points[i - 1].magnitude
            && points[i].magnitude > points[i + 1].magnitude
        {
            println!(
                "  f = {:>9.1} Hz  |G| = {:>8.3}  phase = {:>7.3} rad",
                points[i].omega / (2.0 * PI),
                points[i].magnitude,
                points[i].phase
            );
        }
    }

    println!("\nplant response at the design frequencies:");
    for entry in &design.schedule.entries {
        let g = eval_tf(plant, entry.omega).unwrap();
        println!(
            "  k = {:>3} ({}) f = {:>6.0} Hz  |G| = {:>7.3}  ws = {:>6.1}  wt = {:>6.3}",
            entry.k,
            entry.band,
            entry.omega / (2.0 * PI),
            g.norm(),
            entry.ws,
            entry.wt
        );
    }
}
