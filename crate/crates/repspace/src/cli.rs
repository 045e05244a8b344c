//! Design configs and command drivers.
//!
//! A design is one JSON document: plant, repetitive controller template,
//! parameter selection, weight schedule, raster/θ resolutions and simulation
//! settings. Commands consume a loaded config and write deterministic
//! artifacts (JSON/CSV/SVG) that all embed the config content hash, so a
//! rerun with an unchanged config reproduces the JSON and CSV artifacts
//! byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::freqresp::{bode_grid, make_controller_tf, FreqError, TransferFunction};
use crate::pointcond::{ParamBox, ParameterSelection, PointCondError, TargetFilter, Tie};
use crate::regions::{
    export_overall, export_region, membership_oracle, pick_point, ExportFormat, MapOutcome,
    PickStrategy, RasterGrid, RegionError, StabGrid,
};
use crate::repcon::{
    comp_sensitivity, regen_stability_check, regeneration_spectrum, sensitivity, Band,
    BiquadSection, RepconError, RepetitiveController, Slot, WeightSchedule,
};
use crate::sim::{per_period_error_metrics, simulate, Reference, SimError};
use crate::svg::{Axis, Figure};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in `{path}`: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("bad flag value: {0}")]
    BadFlag(String),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error(transparent)]
    Loop(#[from] RepconError),
    #[error(transparent)]
    PointCond(#[from] PointCondError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Command outcome mapped to the process exit code: 0 for success with a
/// nonempty result, 2 for the "no solution" outcome, 1 (via `Err`) for
/// errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmdStatus {
    Ok,
    NoSolution,
}

impl CmdStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            CmdStatus::Ok => 0,
            CmdStatus::NoSolution => 2,
        }
    }
}

// ---------------------------------------------------------------------------
// Config schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub freq_hz: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantSpec {
    /// Polynomial coefficients in ascending powers of s.
    Coeffs {
        num: Vec<f64>,
        den: Vec<f64>,
        #[serde(default)]
        delay: f64,
    },
    /// Factored resonant form: gain · Π(s²+2ζωs+ω²) over zero modes divided
    /// by the product over pole modes.
    Factored {
        gain: f64,
        #[serde(default)]
        zero_modes: Vec<Mode>,
        pole_modes: Vec<Mode>,
        #[serde(default)]
        delay: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SectionSpec {
    Catalog {
        kind: String,
        params: BTreeMap<String, f64>,
    },
    Raw(BiquadSection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub tau_d: f64,
    pub tau_q: f64,
    pub tau_b: f64,
    pub qp_sections: Vec<SectionSpec>,
    #[serde(default)]
    pub bp_sections: Vec<SectionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieSpec {
    pub mirror: Slot,
    pub source: Slot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub target_filter: TargetFilter,
    #[serde(default)]
    pub section_index: usize,
    pub free_slots: [Slot; 2],
    #[serde(default)]
    pub tie: Option<TieSpec>,
    #[serde(rename = "box")]
    pub bounds: ParamBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub k: u32,
    pub ws: f64,
    pub wt: f64,
    pub band: Band,
}

fn default_epsilon() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub rows: Vec<RowSpec>,
}

fn default_stab_points() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabSpec {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_stab_points")]
    pub points: usize,
    #[serde(default)]
    pub omega_lo: Option<f64>,
    #[serde(default)]
    pub omega_hi: Option<f64>,
}

impl Default for StabSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            points: default_stab_points(),
            omega_lo: None,
            omega_hi: None,
        }
    }
}

fn default_raster_n() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    #[serde(default = "default_raster_n")]
    pub nx: usize,
    #[serde(default = "default_raster_n")]
    pub ny: usize,
}

impl Default for RasterSpec {
    fn default() -> Self {
        Self { nx: 512, ny: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ReferenceSpec {
    Zero,
    Sine { amplitude: f64, freq_hz: f64 },
    Triangle { amplitude: f64, period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimSpec {
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
}

fn default_theta_resolution() -> usize {
    2048
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub version: u32,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    pub selection: SelectionSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub stab: StabSpec,
    #[serde(default)]
    pub raster: RasterSpec,
    #[serde(default = "default_theta_resolution")]
    pub theta_resolution: usize,
    #[serde(default)]
    pub sim: SimSpec,
}

/// Validated design: domain objects compiled from a [`DesignConfig`], plus
/// the config content hash embedded into every artifact.
#[derive(Debug, Clone)]
pub struct CompiledDesign {
    pub config: DesignConfig,
    pub plant: TransferFunction,
    pub controller: RepetitiveController,
    pub selection: ParameterSelection,
    pub schedule: WeightSchedule,
    pub stab: Option<StabGrid>,
    pub grid: RasterGrid,
    pub theta_resolution: usize,
    pub sim_dt: f64,
    pub sim_duration: f64,
    pub sim_reference: Reference,
    pub hash: String,
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Validation {
        path: path.to_string(),
        message: message.into(),
    }
}

fn compile_sections(specs: &[SectionSpec], path: &str) -> Result<Vec<BiquadSection>, CliError> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| match spec {
            SectionSpec::Raw(section) => Ok(*section),
            SectionSpec::Catalog { kind, params } => make_controller_tf(kind, params)
                .map_err(|e| invalid(&format!("{path}[{i}]"), e.to_string())),
        })
        .collect()
}

impl DesignConfig {
    /// Validate and expand into domain objects. The content hash is the
    /// SHA-256 of the canonical serialization of the validated config.
    pub fn compile(self) -> Result<CompiledDesign, CliError> {
        if self.version != 1 {
            return Err(invalid(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        let plant = match &self.plant {
            PlantSpec::Coeffs { num, den, delay } => {
                TransferFunction::new(num.clone(), den.clone(), *delay)
                    .map_err(|e| invalid("plant.coeffs", e.to_string()))?
            }
            PlantSpec::Factored {
                gain,
                zero_modes,
                pole_modes,
                delay,
            } => {
                let zeros: Vec<(f64, f64)> =
                    zero_modes.iter().map(|m| (m.freq_hz, m.zeta)).collect();
                let poles: Vec<(f64, f64)> =
                    pole_modes.iter().map(|m| (m.freq_hz, m.zeta)).collect();
                if poles.is_empty() {
                    return Err(invalid(
                        "plant.factored.pole_modes",
                        "at least one pole mode",
                    ));
                }
                TransferFunction::from_resonant_modes(*gain, &zeros, &poles, *delay)
                    .map_err(|e| invalid("plant.factored", e.to_string()))?
            }
        };

        let qp = compile_sections(&self.controller.qp_sections, "controller.qp_sections")?;
        let bp = compile_sections(&self.controller.bp_sections, "controller.bp_sections")?;
        let controller = RepetitiveController::new(
            self.controller.tau_d,
            self.controller.tau_q,
            self.controller.tau_b,
            qp,
            bp,
        )
        .map_err(|e| invalid("controller", e.to_string()))?;

        let selection = ParameterSelection {
            target: self.selection.target_filter,
            section_index: self.selection.section_index,
            free: (self.selection.free_slots[0], self.selection.free_slots[1]),
            tie: self.selection.tie.as_ref().map(|t| Tie {
                mirror: t.mirror,
                source: t.source,
            }),
            bounds: self.selection.bounds,
        };
        selection
            .validate(&controller)
            .map_err(|e| invalid("selection", e.to_string()))?;

        let rows: Vec<(u32, f64, f64, Band)> = self
            .schedule
            .rows
            .iter()
            .map(|r| (r.k, r.ws, r.wt, r.band))
            .collect();
        let schedule = WeightSchedule::new(self.controller.tau_d, self.schedule.epsilon, &rows)
            .map_err(|e| invalid("schedule", e.to_string()))?;

        let stab = self.stab.enabled.then(|| {
            StabGrid::from_schedule(
                self.controller.tau_d,
                &schedule,
                self.stab.points,
                self.stab.omega_lo,
                self.stab.omega_hi,
            )
        });

        let grid = RasterGrid::new(selection.bounds, self.raster.nx, self.raster.ny)
            .map_err(|e| invalid("raster", e.to_string()))?;

        let sim_dt = self.sim.dt.unwrap_or(self.controller.tau_d / 5000.0);
        if !(sim_dt > 0.0) {
            return Err(invalid("sim.dt", "dt must be positive"));
        }
        let sim_duration = self.sim.duration.unwrap_or(20.0 * self.controller.tau_d);
        if sim_duration < 2.0 * self.controller.tau_d {
            return Err(invalid("sim.duration", "duration must cover two periods"));
        }
        let sim_reference = match &self.sim.reference {
            None => Reference::Triangle {
                amplitude: 100.0,
                period: self.controller.tau_d,
            },
            Some(ReferenceSpec::Zero) => Reference::Zero,
            Some(ReferenceSpec::Sine { amplitude, freq_hz }) => Reference::Sine {
                amplitude: *amplitude,
                omega: 2.0 * std::f64::consts::PI * freq_hz,
            },
            Some(ReferenceSpec::Triangle { amplitude, period }) => Reference::Triangle {
                amplitude: *amplitude,
                period: *period,
            },
        };

        let hash = {
            let bytes = serde_json::to_vec(&self).expect("config serialization cannot fail");
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            hex_string(&hasher.finalize())
        };

        Ok(CompiledDesign {
            theta_resolution: self.theta_resolution.max(16),
            config: self,
            plant,
            controller,
            selection,
            schedule,
            stab,
            grid,
            sim_dt,
            sim_duration,
            sim_reference,
            hash,
        })
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Read, parse and validate a design config file.
pub fn load_config(path: &Path) -> Result<CompiledDesign, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config: DesignConfig = serde_json::from_slice(&bytes).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    config.compile()
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    let mut file = fs::File::create(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    file.write_all(bytes)
        .map_err(|source| CliError::Io { path, source })
}

// ---------------------------------------------------------------------------
// map

#[derive(Debug, Clone, Serialize)]
pub struct MapEntrySummary {
    pub k: Option<u32>,
    pub band: String,
    pub omega: Option<f64>,
    pub curve_points: usize,
    pub skipped_points: usize,
    pub raster_true: usize,
    pub side: Option<String>,
    pub trace_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapSummary {
    pub config_hash: String,
    pub nonempty: bool,
    pub true_cells: usize,
    pub entries: Vec<MapEntrySummary>,
    /// Schedule rows whose own region is already empty (named culprits of an
    /// empty overall region).
    pub empty_rows: Vec<u32>,
    pub pick_centroid: Option<(f64, f64)>,
    pub pick_max_clearance: Option<(f64, f64)>,
}

/// Which artifact formats to emit (`None` = all).
pub type FormatFilter = Option<ExportFormat>;

fn want(filter: FormatFilter, format: ExportFormat) -> bool {
    filter.map(|f| f == format).unwrap_or(true)
}

/// Run the full mapping procedure and write per-frequency and overall
/// artifacts plus `summary.json`. Returns `NoSolution` when the overall
/// region is empty.
pub fn cmd_map(
    design: &CompiledDesign,
    out_dir: &Path,
    format: FormatFilter,
) -> Result<(CmdStatus, MapSummary, MapOutcome), CliError> {
    let outcome = crate::regions::map_regions(
        &design.plant,
        &design.controller,
        &design.selection,
        &design.schedule,
        design.stab.as_ref(),
        &design.grid,
        design.theta_resolution,
    )?;

    let mut entries = Vec::new();
    for e in &outcome.entries {
        entries.push(MapEntrySummary {
            k: Some(e.entry.k),
            band: e.entry.band.name().to_string(),
            omega: Some(e.entry.omega),
            curve_points: e.stats.points,
            skipped_points: e.stats.skipped,
            raster_true: e.region.raster.true_count(),
            side: e.region.side.map(|s| format!("{s:?}").to_lowercase()),
            trace_error: e.stats.error.clone(),
        });
        let stem = format!("region_k{:04}_{}", e.entry.k, e.entry.band.name());
        if want(format, ExportFormat::Json) {
            let bytes = export_region(&e.region, ExportFormat::Json, &design.hash)?;
            write_artifact(out_dir, &format!("{stem}.json"), &bytes)?;
        }
        if want(format, ExportFormat::Svg) {
            let bytes = export_region(&e.region, ExportFormat::Svg, &design.hash)?;
            write_artifact(out_dir, &format!("{stem}.svg"), &bytes)?;
        }
        if format == Some(ExportFormat::Csv) {
            let bytes = export_region(&e.region, ExportFormat::Csv, &design.hash)?;
            write_artifact(out_dir, &format!("{stem}.csv"), &bytes)?;
        }
    }
    if let Some(stab_region) = &outcome.stab {
        entries.push(MapEntrySummary {
            k: None,
            band: Band::STAB.name().to_string(),
            omega: None,
            curve_points: 0,
            skipped_points: 0,
            raster_true: stab_region.raster.true_count(),
            side: None,
            trace_error: None,
        });
        if want(format, ExportFormat::Json) {
            let bytes = export_region(stab_region, ExportFormat::Json, &design.hash)?;
            write_artifact(out_dir, "region_stab.json", &bytes)?;
        }
        if want(format, ExportFormat::Svg) {
            let bytes = export_region(stab_region, ExportFormat::Svg, &design.hash)?;
            write_artifact(out_dir, "region_stab.svg", &bytes)?;
        }
    }

    let per_band: Vec<&crate::regions::SolutionRegion> = outcome
        .entries
        .iter()
        .map(|e| &e.region)
        .chain(outcome.stab.as_ref())
        .collect();
    let mark = pick_point(&outcome.overall, PickStrategy::MaxClearance).ok();
    if want(format, ExportFormat::Json) {
        let bytes = export_overall(
            &outcome.overall,
            &per_band,
            mark,
            ExportFormat::Json,
            &design.hash,
        )?;
        write_artifact(out_dir, "overall.json", &bytes)?;
    }
    if want(format, ExportFormat::Csv) {
        let bytes = export_overall(
            &outcome.overall,
            &per_band,
            mark,
            ExportFormat::Csv,
            &design.hash,
        )?;
        write_artifact(out_dir, "overall.csv", &bytes)?;
    }
    if want(format, ExportFormat::Svg) {
        let bytes = export_overall(
            &outcome.overall,
            &per_band,
            mark,
            ExportFormat::Svg,
            &design.hash,
        )?;
        write_artifact(out_dir, "overall.svg", &bytes)?;
    }

    let nonempty = outcome.overall.nonempty;
    let summary = MapSummary {
        config_hash: design.hash.clone(),
        nonempty,
        true_cells: outcome.overall.raster.true_count(),
        entries,
        empty_rows: outcome
            .entries
            .iter()
            .filter(|e| e.region.raster.true_count() == 0)
            .map(|e| e.entry.k)
            .collect(),
        pick_centroid: pick_point(&outcome.overall, PickStrategy::Centroid).ok(),
        pick_max_clearance: pick_point(&outcome.overall, PickStrategy::MaxClearance).ok(),
    };
    let bytes = serde_json::to_vec_pretty(&summary).expect("summary serialization cannot fail");
    write_artifact(out_dir, "summary.json", &bytes)?;

    let status = if nonempty {
        CmdStatus::Ok
    } else {
        CmdStatus::NoSolution
    };
    Ok((status, summary, outcome))
}

// ---------------------------------------------------------------------------
// check

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub config_hash: String,
    pub point: (f64, f64),
    pub verdict: bool,
    pub rows: Vec<crate::regions::RowCheck>,
    pub regen: Option<crate::regions::RegenRow>,
}

/// Evaluate one candidate point: membership verdict per schedule row, the
/// regeneration check, and dense |S|/|T|/R envelopes as CSV.
pub fn cmd_check(
    design: &CompiledDesign,
    point: (f64, f64),
    out_dir: &Path,
) -> Result<(CmdStatus, CheckSummary), CliError> {
    if !design.selection.bounds.contains(point.0, point.1) {
        return Err(CliError::BadFlag(format!(
            "point ({}, {}) lies outside the selection box",
            point.0, point.1
        )));
    }
    let stab = design.stab.clone().unwrap_or_else(|| {
        StabGrid::from_schedule(
            design.controller.tau_d,
            &design.schedule,
            design.config.stab.points,
            design.config.stab.omega_lo,
            design.config.stab.omega_hi,
        )
    });
    let report = membership_oracle(
        point,
        &design.plant,
        &design.controller,
        &design.selection,
        &design.schedule,
        Some(&stab),
    );

    // Dense sensitivity/complementary-sensitivity/regeneration envelopes.
    let ctrl = design
        .selection
        .instantiate(&design.controller, point.0, point.1);
    let mut csv = String::new();
    csv.push_str(&format!("# config_hash {}\n", design.hash));
    csv.push_str("omega,mag_s,mag_t,regen\n");
    for &omega in &stab.omegas {
        let s = sensitivity(&design.plant, &ctrl, omega).map(|v| v.norm());
        let t = comp_sensitivity(&design.plant, &ctrl, omega).map(|v| v.norm());
        let r = regeneration_spectrum(&design.plant, &ctrl, omega);
        csv.push_str(&format!(
            "{:.16e},{},{},{}\n",
            omega,
            s.map(|v| format!("{v:.16e}"))
                .unwrap_or_else(|_| "nan".to_string()),
            t.map(|v| format!("{v:.16e}"))
                .unwrap_or_else(|_| "nan".to_string()),
            r.map(|v| format!("{v:.16e}"))
                .unwrap_or_else(|_| "nan".to_string()),
        ));
    }
    write_artifact(out_dir, "envelopes.csv", csv.as_bytes())?;

    let summary = CheckSummary {
        config_hash: design.hash.clone(),
        point,
        verdict: report.verdict,
        rows: report.rows,
        regen: report.regen,
    };
    let bytes = serde_json::to_vec_pretty(&summary).expect("summary serialization cannot fail");
    write_artifact(out_dir, "check.json", &bytes)?;
    let status = if summary.verdict {
        CmdStatus::Ok
    } else {
        CmdStatus::NoSolution
    };
    Ok((status, summary))
}

// ---------------------------------------------------------------------------
// bode / regen

/// Log-spaced frequency grid spanning the schedule with margin, for plots.
fn plot_grid(design: &CompiledDesign, points: usize) -> Vec<f64> {
    let fundamental = 2.0 * std::f64::consts::PI / design.controller.tau_d;
    let top = design
        .schedule
        .entries
        .last()
        .map(|e| e.omega)
        .unwrap_or(100.0 * fundamental);
    let (lo, hi) = (fundamental / 10.0, 4.0 * top);
    (0..points)
        .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
        .collect()
}

/// Plant Bode magnitude artifact with the design frequencies marked.
pub fn cmd_bode(
    design: &CompiledDesign,
    out_dir: &Path,
    format: FormatFilter,
) -> Result<CmdStatus, CliError> {
    let omegas = plot_grid(design, 2000);
    let points = bode_grid(&design.plant, &omegas)?;
    if want(format, ExportFormat::Csv) {
        let mut csv = String::new();
        csv.push_str(&format!("# config_hash {}\n", design.hash));
        csv.push_str("omega,magnitude,phase\n");
        for p in &points {
            csv.push_str(&format!(
                "{:.16e},{:.16e},{:.16e}\n",
                p.omega, p.magnitude, p.phase
            ));
        }
        write_artifact(out_dir, "bode.csv", csv.as_bytes())?;
    }
    if want(format, ExportFormat::Svg) {
        let mags: Vec<f64> = points.iter().map(|p| p.magnitude).collect();
        let lo = mags
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
            .max(1e-12);
        let hi = mags.iter().cloned().fold(0.0f64, f64::max).max(lo * 10.0);
        let mut fig = Figure::new(
            "plant magnitude response",
            Axis::new(omegas[0], *omegas.last().unwrap(), true, "omega (rad/s)"),
            Axis::new(lo / 2.0, hi * 2.0, true, "|G|"),
        );
        let line: Vec<(f64, f64)> = points.iter().map(|p| (p.omega, p.magnitude)).collect();
        fig.polyline(&line, "#1f77b4", 1.5);
        for e in &design.schedule.entries {
            // Magnitude at the design frequency, marked with a band dot.
            if let Ok(v) = crate::freqresp::eval_tf(&design.plant, e.omega) {
                fig.circle(
                    e.omega,
                    v.norm(),
                    4.0,
                    match e.band {
                        Band::NP => "#2ca02c",
                        Band::RP => "#d62728",
                        Band::RS => "#9467bd",
                        Band::STAB => "#8c564b",
                    },
                );
            }
        }
        fig.legend("#1f77b4", "|G(jw)|");
        fig.legend("#2ca02c", "NP rows");
        fig.legend("#d62728", "RP rows");
        fig.legend("#9467bd", "RS rows");
        write_artifact(out_dir, "bode.svg", fig.render(&design.hash).as_bytes())?;
    }
    Ok(CmdStatus::Ok)
}

/// Regeneration spectrum artifact; the controller template's own
/// coefficients are used unless a point override is given.
pub fn cmd_regen(
    design: &CompiledDesign,
    point: Option<(f64, f64)>,
    out_dir: &Path,
    format: FormatFilter,
) -> Result<CmdStatus, CliError> {
    let ctrl = match point {
        Some((p1, p2)) => design.selection.instantiate(&design.controller, p1, p2),
        None => design.controller.clone(),
    };
    let omegas = plot_grid(design, 2000);
    let mut values = Vec::with_capacity(omegas.len());
    for &omega in &omegas {
        values.push(regeneration_spectrum(&design.plant, &ctrl, omega).ok());
    }
    if want(format, ExportFormat::Csv) {
        let mut csv = String::new();
        csv.push_str(&format!("# config_hash {}\n", design.hash));
        csv.push_str("omega,regen\n");
        for (&omega, v) in omegas.iter().zip(values.iter()) {
            csv.push_str(&format!(
                "{:.16e},{}\n",
                omega,
                v.map(|r| format!("{r:.16e}"))
                    .unwrap_or_else(|| "nan".to_string())
            ));
        }
        write_artifact(out_dir, "regen.csv", csv.as_bytes())?;
    }
    if want(format, ExportFormat::Svg) {
        let mut fig = Figure::new(
            "regeneration spectrum",
            Axis::new(omegas[0], *omegas.last().unwrap(), true, "omega (rad/s)"),
            Axis::new(0.0, 1.5, false, "R"),
        );
        let line: Vec<(f64, f64)> = omegas
            .iter()
            .zip(values.iter())
            .filter_map(|(&w, v)| v.map(|r| (w, r)))
            .collect();
        fig.polyline(&line, "#d62728", 1.5);
        fig.hline(1.0 - design.schedule.epsilon, "#000000");
        fig.legend("#d62728", "R(w)");
        fig.legend("#000000", "1 - epsilon");
        write_artifact(out_dir, "regen.svg", fig.render(&design.hash).as_bytes())?;
    }
    // Also report the check verdict on the stdout-facing summary.
    let grid = plot_grid(design, design.config.stab.points.max(2));
    let check = regen_stability_check(&design.plant, &ctrl, &grid, design.schedule.epsilon)?;
    let doc = serde_json::json!({
        "config_hash": design.hash,
        "pass": check.pass,
        "worst_omega": check.worst_omega,
        "worst_value": check.worst_value,
        "epsilon": check.epsilon,
    });
    write_artifact(
        out_dir,
        "regen.json",
        &serde_json::to_vec_pretty(&doc).unwrap(),
    )?;
    Ok(if check.pass {
        CmdStatus::Ok
    } else {
        CmdStatus::NoSolution
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub config_hash: String,
    pub point: (f64, f64),
    pub dt: f64,
    pub samples: usize,
    pub periods: Vec<crate::sim::PeriodMetrics>,
}

/// Closed-loop simulation at a candidate point: trace CSV, per-period error
/// metrics JSON, and an output/reference SVG.
pub fn cmd_simulate(
    design: &CompiledDesign,
    point: (f64, f64),
    out_dir: &Path,
    dt_override: Option<f64>,
    format: FormatFilter,
) -> Result<(CmdStatus, SimulateSummary), CliError> {
    let ctrl = design
        .selection
        .instantiate(&design.controller, point.0, point.1);
    let dt = dt_override.unwrap_or(design.sim_dt);
    let trace = simulate(
        &design.plant,
        &ctrl,
        &design.sim_reference,
        design.sim_duration,
        dt,
    )?;
    let period = match design.sim_reference {
        Reference::Triangle { period, .. } => period,
        Reference::Sine { omega, .. } => 2.0 * std::f64::consts::PI / omega,
        Reference::Zero => design.controller.tau_d,
    };
    let periods = per_period_error_metrics(&trace, period)?;

    if want(format, ExportFormat::Csv) {
        write_artifact(out_dir, "trace.csv", trace.to_csv(&design.hash).as_bytes())?;
    }
    let summary = SimulateSummary {
        config_hash: design.hash.clone(),
        point,
        dt: trace.dt,
        samples: trace.len(),
        periods,
    };
    let bytes = serde_json::to_vec_pretty(&summary).expect("summary serialization cannot fail");
    write_artifact(out_dir, "metrics.json", &bytes)?;

    if want(format, ExportFormat::Svg) {
        let t_end = trace.len() as f64 * trace.dt;
        let amp = design.sim_reference.amplitude().max(1e-12);
        let mut fig = Figure::new(
            "closed-loop tracking",
            Axis::new(0.0, t_end, false, "t (s)"),
            Axis::new(-1.3 * amp, 1.3 * amp, false, "signal"),
        );
        // Thin the polylines to keep the figure small.
        let stride = (trace.len() / 4000).max(1);
        let pick = |v: &Vec<f64>| -> Vec<(f64, f64)> {
            v.iter()
                .enumerate()
                .step_by(stride)
                .map(|(k, &y)| (k as f64 * trace.dt, y))
                .collect()
        };
        fig.polyline(&pick(&trace.reference), "#7f7f7f", 1.0);
        fig.polyline(&pick(&trace.output), "#1f77b4", 1.0);
        fig.polyline(&pick(&trace.error), "#d62728", 1.0);
        fig.legend("#7f7f7f", "reference");
        fig.legend("#1f77b4", "output");
        fig.legend("#d62728", "error");
        write_artifact(out_dir, "sim.svg", fig.render(&design.hash).as_bytes())?;
    }
    Ok((CmdStatus::Ok, summary))
}

/// Parse a `--point P1,P2` flag.
pub fn parse_point(s: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::BadFlag(format!("expected P1,P2 but got `{s}`")));
    }
    let p1: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::BadFlag(format!("bad number `{}`", parts[0])))?;
    let p2: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::BadFlag(format!("bad number `{}`", parts[1])))?;
    Ok((p1, p2))
}

/// Parse a `--raster NX,NY` flag.
pub fn parse_raster(s: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::BadFlag(format!("expected NX,NY but got `{s}`")));
    }
    let nx: usize = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::BadFlag(format!("bad count `{}`", parts[0])))?;
    let ny: usize = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::BadFlag(format!("bad count `{}`", parts[1])))?;
    Ok((nx, ny))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn minimal_config_json() -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "plant": { "coeffs": { "num": [1.0], "den": [1.0] } },
            "controller": {
                "tau_d": 1e-3,
                "tau_q": 0.0,
                "tau_b": 0.0,
                "qp_sections": [ {"n2": 0.0, "n1": 0.0, "n0": 0.5, "d2": 0.0, "d1": 0.0, "d0": 1.0} ]
            },
            "selection": {
                "target_filter": "qp",
                "free_slots": ["n0", "d0"],
                "box": { "x": {"lo": 0.0, "hi": 1.0}, "y": {"lo": 0.5, "hi": 2.0} }
            },
            "schedule": { "rows": [ {"k": 1, "ws": 0.5, "wt": 0.0, "band": "NP"} ] },
            "raster": { "nx": 16, "ny": 16 },
            "theta_resolution": 128
        })
    }

    #[test]
    fn minimal_config_loads_and_maps() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("min.json");
        std::fs::write(&path, serde_json::to_vec(&minimal_config_json()).unwrap()).unwrap();
        let design = load_config(&path).unwrap();
        assert_eq!(design.schedule.entries.len(), 1);
        let (status, summary, _) = cmd_map(&design, dir.path(), None).unwrap();
        // ws = 0.5 on a constant unit plant: satisfiable everywhere the
        // repetitive peak does not destroy it; just exercise the plumbing.
        assert_eq!(summary.entries.len(), 1);
        assert!(matches!(status, CmdStatus::Ok | CmdStatus::NoSolution));
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join("overall.json").exists());
    }

    #[test]
    fn realizability_violation_is_a_validation_error() {
        let mut cfg = minimal_config_json();
        cfg["controller"]["tau_q"] = serde_json::json!(6e-4);
        cfg["controller"]["tau_b"] = serde_json::json!(5e-4);
        let config: DesignConfig = serde_json::from_value(cfg).unwrap();
        let err = config.compile().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("tau_d > tau_q + tau_b"), "unexpected: {msg}");
    }

    #[test]
    fn schedule_band_violation_is_rejected_with_path() {
        let mut cfg = minimal_config_json();
        cfg["schedule"]["rows"][0]["wt"] = serde_json::json!(0.5);
        let config: DesignConfig = serde_json::from_value(cfg).unwrap();
        let err = config.compile().unwrap_err();
        assert!(err.to_string().contains("schedule"));
    }

    #[test]
    fn config_round_trip_is_identity() {
        let config: DesignConfig = serde_json::from_value(minimal_config_json()).unwrap();
        let ser = serde_json::to_string(&config).unwrap();
        let re: DesignConfig = serde_json::from_str(&ser).unwrap();
        assert_eq!(config, re);
        // Content hash is stable across the round trip.
        let h1 = config.clone().compile().unwrap().hash;
        let h2 = re.compile().unwrap().hash;
        assert_eq!(h1, h2);
    }

    #[test]
    fn catalog_sections_expand_via_the_coefficient_table() {
        let mut cfg = minimal_config_json();
        cfg["controller"]["qp_sections"] = serde_json::json!([
            {"kind": "SecondOrderFilter", "params": {"K": 1.0, "zeta": 0.7, "omega": 100.0}}
        ]);
        let config: DesignConfig = serde_json::from_value(cfg).unwrap();
        let design = config.compile().unwrap();
        let s = design.controller.qp_sections[0];
        assert_eq!((s.n0, s.d2, s.d1, s.d0), (1e4, 1.0, 140.0, 1e4));
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_point("3.5e10,2.6e5").unwrap(), (3.5e10, 2.6e5));
        assert!(parse_point("1.0").is_err());
        assert_eq!(parse_raster("64,128").unwrap(), (64, 128));
        assert!(parse_raster("64").is_err());
    }
}
