//! End-to-end checks of the config and command layer on temp directories.

use std::path::Path;

use repspace::cli::{
    cmd_bode, cmd_check, cmd_map, cmd_regen, cmd_simulate, load_config, CmdStatus, DesignConfig,
};

fn fixture_path() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/afm.json"))
}

#[test]
fn fixture_loads_and_expands_to_fourth_order_plant() {
    let design = load_config(fixture_path()).unwrap();
    assert_eq!(design.plant.den_degree(), 4);
    assert_eq!(design.plant.num_degree(), 2);
    assert_eq!(design.schedule.entries.len(), 12);
    assert_eq!(design.stab.as_ref().unwrap().omegas.len(), 400);
    assert_eq!(design.grid.nx, 512);
    // dc gain of the expanded polynomial form.
    let dc = repspace::eval_tf(&design.plant, 0.0).unwrap();
    assert!((dc.re - 1.8198).abs() < 1e-3);
}

#[test]
fn fixture_round_trips_with_stable_hash() {
    let bytes = std::fs::read(fixture_path()).unwrap();
    let config: DesignConfig = serde_json::from_slice(&bytes).unwrap();
    let reserialized = serde_json::to_string(&config).unwrap();
    let reparsed: DesignConfig = serde_json::from_str(&reserialized).unwrap();
    assert_eq!(config, reparsed);
    let h1 = config.compile().unwrap().hash;
    let h2 = reparsed.compile().unwrap().hash;
    assert_eq!(h1, h2);
    assert_eq!(h1.len(), 64);
}

fn write_config(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

fn constant_plant_config() -> serde_json::Value {
    serde_json::json!({
        "version": 1,
        "plant": { "coeffs": { "num": [1.0], "den": [1.0] } },
        "controller": {
            "tau_d": 1e-3,
            "tau_q": 0.0,
            "tau_b": 0.0,
            "qp_sections": [ {"n2": 0.0, "n1": 0.0, "n0": 0.2, "d2": 0.0, "d1": 0.0, "d0": 1.0} ]
        },
        "selection": {
            "target_filter": "qp",
            "free_slots": ["n0", "d0"],
            "box": { "x": {"lo": 0.0, "hi": 0.4}, "y": {"lo": 1.0, "hi": 2.0} }
        },
        "schedule": { "rows": [] },
        "raster": { "nx": 12, "ny": 12 },
        "theta_resolution": 128
    })
}

#[test]
fn empty_schedule_yields_full_box_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &constant_plant_config());
    let design = load_config(&path).unwrap();
    let (status, summary, outcome) = cmd_map(&design, dir.path(), None).unwrap();
    assert_eq!(status, CmdStatus::Ok);
    assert!(summary.nonempty);
    assert_eq!(outcome.overall.raster.true_count(), 12 * 12);
}

#[test]
fn unsatisfiable_schedule_exits_two_and_names_the_frequency() {
    // |q_p| <= 0.4 on this box keeps the loop gain of the unit plant small,
    // so a 1e9 sensitivity bound at the fundamental is hopeless.
    let mut cfg = constant_plant_config();
    cfg["schedule"]["rows"] = serde_json::json!([
        { "k": 1, "ws": 1e9, "wt": 0.0, "band": "NP" }
    ]);
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &cfg);
    let design = load_config(&path).unwrap();
    let (status, summary, _) = cmd_map(&design, dir.path(), None).unwrap();
    assert_eq!(status, CmdStatus::NoSolution);
    assert_eq!(status.exit_code(), 2);
    assert!(!summary.nonempty);
    assert_eq!(summary.empty_rows, vec![1]);
    // The summary artifact carries the same verdict.
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(doc["nonempty"], false);
    assert_eq!(doc["empty_rows"][0], 1);
}

#[test]
fn check_rejects_points_outside_the_box() {
    let design = load_config(fixture_path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_check(&design, (1.0, 1.0), dir.path()).unwrap_err();
    assert!(err.to_string().contains("outside the selection box"));
}

#[test]
fn check_reports_failing_rows_for_disabled_filter() {
    let design = load_config(fixture_path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    // p1 = 0 zeroes the low-pass numerator: bare plant loop.
    let (status, summary) = cmd_check(&design, (1e8, 1e4), dir.path()).unwrap();
    assert_eq!(status, CmdStatus::NoSolution);
    assert!(!summary.verdict);
    assert!(dir.path().join("check.json").exists());
    assert!(dir.path().join("envelopes.csv").exists());
    let envelopes = std::fs::read_to_string(dir.path().join("envelopes.csv")).unwrap();
    assert!(envelopes.starts_with("# config_hash "));
    assert_eq!(envelopes.lines().count(), 2 + 400);
}

#[test]
fn check_passes_at_the_template_point() {
    let design = load_config(fixture_path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (status, summary) = cmd_check(&design, (3.5e10, 2.6e5), dir.path()).unwrap();
    assert_eq!(status, CmdStatus::Ok);
    assert!(summary.verdict);
    // |S| at the fundamental is below the 1/500 bound when the k=1 row holds.
    let row = &summary.rows[0];
    assert!(row.pass && row.value.unwrap() < 1.0);
}

#[test]
fn constant_plant_bode_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &constant_plant_config());
    let design = load_config(&path).unwrap();
    cmd_bode(&design, dir.path(), None).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("bode.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let mag: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((mag - 1.0).abs() < 1e-12, "flat plant must stay at |G| = 1");
    }
}

#[test]
fn bode_and_regen_artifacts() {
    let design = load_config(fixture_path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cmd_bode(&design, dir.path(), None).unwrap(), CmdStatus::Ok);
    let csv = std::fs::read_to_string(dir.path().join("bode.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 2000);
    let svg = std::fs::read_to_string(dir.path().join("bode.svg")).unwrap();
    assert!(svg.contains(&design.hash));

    let status = cmd_regen(&design, Some((3.5e10, 2.6e5)), dir.path(), None).unwrap();
    assert_eq!(status, CmdStatus::Ok);
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("regen.json")).unwrap()).unwrap();
    assert_eq!(doc["pass"], true);
    assert!(doc["worst_value"].as_f64().unwrap() < 0.95);
}

#[test]
fn simulate_writes_trace_and_metrics() {
    let mut cfg: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fixture_path()).unwrap()).unwrap();
    // Shorten the run: three periods is enough for artifact checks.
    cfg["sim"]["duration"] = serde_json::json!(1.5e-3);
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &cfg);
    let design = load_config(&path).unwrap();
    let (status, summary) = cmd_simulate(&design, (3.5e10, 2.6e5), dir.path(), None, None).unwrap();
    assert_eq!(status, CmdStatus::Ok);
    assert_eq!(summary.periods.len(), 3);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("# config_hash "));
    assert_eq!(trace.lines().count(), 2 + summary.samples);
    assert!(dir.path().join("metrics.json").exists());
    assert!(dir.path().join("sim.svg").exists());
}
