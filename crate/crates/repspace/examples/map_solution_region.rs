//! Full mapping run: one solution region per weight-table row plus the
//! regeneration condition, intersected into the overall design region, with
//! JSON/CSV/SVG artifacts.
//!
//! ```bash
//! cargo run --release --example map_solution_region [OUT_DIR]
//! ```
//!
//! Uses a reduced 160x160 raster so the demo finishes in a couple of
//! seconds; the bundled config defaults to 512x512.

use std::path::{Path, PathBuf};

use repspace::cli::{cmd_map, load_config};
use repspace::regions::RasterGrid;

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| "out/map_example".into());
    let fixture = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/afm.json"));
    let mut design = load_config(fixture).expect("bundled fixture");
    design.grid = RasterGrid::new(design.selection.bounds, 160, 160).unwrap();

    let (status, summary, outcome) = cmd_map(&design, &out, None).expect("mapping run");

    println!("per-frequency point-condition regions:");
    for e in &summary.entries {
        println!(
            "  k = {:>4?} {:<4} curve points {:>5}  member cells {:>6}  side {:?}",
            e.k, e.band, e.curve_points, e.raster_true, e.side
        );
    }
    println!(
        "\noverall region: {} member cells ({})",
        summary.true_cells,
        if summary.nonempty {
            "nonempty"
        } else {
            "EMPTY"
        }
    );
    if let Some((a0, a1)) = summary.pick_max_clearance {
        println!("max-clearance pick: a0 = {a0:.5e}, a1 = {a1:.5e}");
    }
    if let Some((a0, a1)) = summary.pick_centroid {
        println!("centroid pick:      a0 = {a0:.5e}, a1 = {a1:.5e}");
    }
    println!(
        "\n{} contributing regions intersected; artifacts in {}",
        outcome.entries.len() + outcome.stab.iter().count(),
        out.display()
    );
    std::process::exit(status.exit_code());
}
