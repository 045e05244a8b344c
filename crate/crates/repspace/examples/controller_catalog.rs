//! Build the standard controller types as biquad sections and evaluate them.
//!
//! ```bash
//! cargo run --example controller_catalog
//! ```

use std::collections::BTreeMap;

use repspace::make_controller_tf;

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn main() {
    let catalog: Vec<(&str, BTreeMap<String, f64>)> = vec![
        ("P", params(&[("K", 3.0)])),
        ("PD", params(&[("K", 2.0), ("Td", 0.5)])),
        ("PI", params(&[("K", 2.0), ("Ti", 4.0)])),
        ("PID", params(&[("K", 2.0), ("Td", 0.5), ("Ti", 4.0)])),
        ("Lag", params(&[("K", 1.0), ("T", 0.2), ("beta", 3.0)])),
        ("Lead", params(&[("K", 1.0), ("T", 0.2), ("alpha", 0.2)])),
        ("FirstOrderFilter", params(&[("K", 1.0), ("tau", 0.01)])),
        (
            "SecondOrderFilter",
            params(&[("K", 1.0), ("zeta", 0.7), ("omega", 100.0)]),
        ),
    ];

    println!(
        "{:<18} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}   value at 1 rad/s",
        "kind", "n2", "n1", "n0", "d2", "d1", "d0"
    );
    for (kind, p) in catalog {
        let s = make_controller_tf(kind, &p).expect("catalog row");
        let v = s.eval(1.0);
        println!(
            "{kind:<18} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}   {:.4} {:+.4}j",
            s.n2, s.n1, s.n0, s.d2, s.d1, s.d0, v.re, v.im
        );
    }

    // Out-of-range parameters are rejected.
    let err = make_controller_tf("Lead", &params(&[("K", 1.0), ("T", 1.0), ("alpha", 2.0)]));
    println!("\nLead with alpha = 2 -> {err:?}");
}
