//! Solution regions in the parameter plane.
//!
//! A region is raster-primary: a boolean grid over the selection box where
//! each cell records whether the strict design inequality holds at the cell
//! center, evaluated directly through the loop equations. Traced boundary
//! curves are kept for plotting and for the curve-side cross-check, never as
//! the source of truth, because traced curves may be open or branch-split
//! while direct evaluation is always well defined.
//!
//! Every predicate here is a pure function of its inputs, so per-frequency
//! sweeps and raster fills are independent work items; they run sequentially
//! so that artifact bytes stay reproducible run to run.

use num_complex::Complex64;
use serde::Serialize;
use std::str::FromStr;
use thiserror::Error;

use crate::freqresp::TransferFunction;
use crate::pointcond::{
    trace_point_condition_curve, ParamBox, ParameterSelection, PointCondError, TargetFilter,
};
use crate::repcon::{
    filter_chain_value, regen_stability_check, robust_perf_value, Band, FreqContext,
    RepetitiveController, WeightEntry, WeightSchedule,
};
use crate::svg::{Axis, Figure};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("rasters must share the same box and resolution")]
    MismatchedGrids,
    #[error("region is empty")]
    EmptyRegion,
    #[error("at least one region is required")]
    NoRegions,
    #[error("unsupported export format `{name}` (expected json, csv or svg)")]
    UnsupportedFormat { name: String },
    #[error("raster grid must have positive resolution and a positive-area box")]
    InvalidGrid,
}

/// Rectangular evaluation grid over the parameter box. Cells are addressed
/// `(ix, iy)` with `ix` along the first (x) parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RasterGrid {
    pub bounds: ParamBox,
    pub nx: usize,
    pub ny: usize,
}

fn axis_center(lo: f64, hi: f64, log: bool, i: usize, n: usize) -> f64 {
    let frac = (i as f64 + 0.5) / n as f64;
    if log {
        lo * (hi / lo).powf(frac)
    } else {
        lo + frac * (hi - lo)
    }
}

fn axis_edge(lo: f64, hi: f64, log: bool, i: usize, n: usize) -> f64 {
    let frac = i as f64 / n as f64;
    if log {
        lo * (hi / lo).powf(frac)
    } else {
        lo + frac * (hi - lo)
    }
}

impl RasterGrid {
    pub fn new(bounds: ParamBox, nx: usize, ny: usize) -> Result<Self, RegionError> {
        let ok_area = bounds.x.lo < bounds.x.hi && bounds.y.lo < bounds.y.hi;
        let ok_log = (!bounds.x.log || bounds.x.lo > 0.0) && (!bounds.y.log || bounds.y.lo > 0.0);
        if nx == 0 || ny == 0 || !ok_area || !ok_log {
            return Err(RegionError::InvalidGrid);
        }
        Ok(Self { bounds, nx, ny })
    }

    pub fn x_centers(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|i| {
                axis_center(
                    self.bounds.x.lo,
                    self.bounds.x.hi,
                    self.bounds.x.log,
                    i,
                    self.nx,
                )
            })
            .collect()
    }

    pub fn y_centers(&self) -> Vec<f64> {
        (0..self.ny)
            .map(|i| {
                axis_center(
                    self.bounds.y.lo,
                    self.bounds.y.hi,
                    self.bounds.y.log,
                    i,
                    self.ny,
                )
            })
            .collect()
    }

    pub fn x_edge(&self, i: usize) -> f64 {
        axis_edge(
            self.bounds.x.lo,
            self.bounds.x.hi,
            self.bounds.x.log,
            i,
            self.nx,
        )
    }

    pub fn y_edge(&self, i: usize) -> f64 {
        axis_edge(
            self.bounds.y.lo,
            self.bounds.y.hi,
            self.bounds.y.log,
            i,
            self.ny,
        )
    }
}

/// Boolean grid of strict-inequality outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub grid: RasterGrid,
    /// Row-major, `iy * nx + ix`.
    pub cells: Vec<bool>,
}

impl Raster {
    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.grid.nx + ix]
    }

    pub fn true_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Run-length encoding per row, alternating false/true counts starting
    /// with false; each row sums to `nx`.
    pub fn rle_rows(&self) -> Vec<Vec<u32>> {
        let mut rows = Vec::with_capacity(self.grid.ny);
        for iy in 0..self.grid.ny {
            let mut row = Vec::new();
            let mut current = false;
            let mut run = 0u32;
            for ix in 0..self.grid.nx {
                let v = self.get(ix, iy);
                if v == current {
                    run += 1;
                } else {
                    row.push(run);
                    current = v;
                    run = 1;
                }
            }
            row.push(run);
            rows.push(row);
        }
        rows
    }
}

/// Which side of the traced curve satisfies the inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Inside,
    Outside,
}

/// Point-condition solution region at one frequency (or the regeneration
/// stability region when `band` is `STAB`).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRegion {
    /// Design frequency; `None` for the STAB region, which spans a grid.
    pub omega: Option<f64>,
    pub band: Band,
    /// Closed boundary polylines in the parameter plane (may be empty).
    pub rings: Vec<Vec<[f64; 2]>>,
    /// Set when a curve exists; `None` for raster-only regions.
    pub side: Option<Side>,
    pub raster: Raster,
}

/// Intersection of per-frequency solution regions.
#[derive(Debug, Clone, PartialEq)]
pub struct OverallRegion {
    pub raster: Raster,
    pub contributing: Vec<(Option<f64>, Band)>,
    pub nonempty: bool,
}

/// Winding numbers of every x-center along one horizontal scanline.
fn winding_row(rings: &[Vec<[f64; 2]>], y: f64, xs: &[f64]) -> Vec<i32> {
    // Crossing events of the upward ray convention: edge contributes +1 when
    // it crosses the scanline upward right of the probe, -1 downward.
    let mut events: Vec<(f64, i32)> = Vec::new();
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let p = ring[i];
            let q = ring[(i + 1) % n];
            let (py, qy) = (p[1], q[1]);
            if py <= y && qy > y {
                let x = p[0] + (y - py) * (q[0] - p[0]) / (qy - py);
                events.push((x, 1));
            } else if qy <= y && py > y {
                let x = p[0] + (y - py) * (q[0] - p[0]) / (qy - py);
                events.push((x, -1));
            }
        }
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: i32 = events.iter().map(|e| e.1).sum();
    let mut out = Vec::with_capacity(xs.len());
    let mut prefix = 0i32;
    let mut idx = 0usize;
    for &xc in xs {
        while idx < events.len() && events[idx].0 <= xc {
            prefix += events[idx].1;
            idx += 1;
        }
        out.push(total - prefix);
    }
    out
}

/// Cell mask of centers with nonzero winding number with respect to any of
/// the rings (row-major like [`Raster::cells`]).
pub fn curve_inside_mask(rings: &[Vec<[f64; 2]>], grid: &RasterGrid) -> Vec<bool> {
    let xs = grid.x_centers();
    let ys = grid.y_centers();
    let mut mask = vec![false; grid.nx * grid.ny];
    for (iy, &y) in ys.iter().enumerate() {
        let wn = winding_row(rings, y, &xs);
        for (ix, &w) in wn.iter().enumerate() {
            mask[iy * grid.nx + ix] = w != 0;
        }
    }
    mask
}

/// Rasterize a strict-inequality predicate over the box and classify which
/// side of the traced curve it lives on.
///
/// The raster is filled by direct predicate evaluation at every cell center;
/// the side flag is chosen by comparing the predicate's truth fraction inside
/// the curve polygon (winding-number test) against the fraction outside.
pub fn classify_region<P: Fn(f64, f64) -> bool>(
    omega: Option<f64>,
    band: Band,
    rings: Vec<Vec<[f64; 2]>>,
    predicate: P,
    grid: &RasterGrid,
) -> SolutionRegion {
    let xs = grid.x_centers();
    let ys = grid.y_centers();
    let mut cells = vec![false; grid.nx * grid.ny];
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            cells[iy * grid.nx + ix] = predicate(x, y);
        }
    }
    let raster = Raster { grid: *grid, cells };

    let side = if rings.is_empty() {
        None
    } else {
        let mask = curve_inside_mask(&rings, grid);
        let mut in_n = 0usize;
        let mut in_true = 0usize;
        let mut out_n = 0usize;
        let mut out_true = 0usize;
        for (i, &inside) in mask.iter().enumerate() {
            if inside {
                in_n += 1;
                in_true += raster.cells[i] as usize;
            } else {
                out_n += 1;
                out_true += raster.cells[i] as usize;
            }
        }
        if in_n == 0 {
            Some(Side::Outside)
        } else if out_n == 0 {
            Some(Side::Inside)
        } else {
            let f_in = in_true as f64 / in_n as f64;
            let f_out = out_true as f64 / out_n as f64;
            Some(if f_in >= f_out {
                Side::Inside
            } else {
                Side::Outside
            })
        }
    };

    SolutionRegion {
        omega,
        band,
        rings,
        side,
        raster,
    }
}

/// Auxiliary frequency grid for the regeneration-spectrum condition.
///
/// The sufficient condition is for all frequencies, not just the design set,
/// so it is checked on a dense log grid from a decade below the fundamental
/// to four times the highest design frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct StabGrid {
    pub epsilon: f64,
    pub omegas: Vec<f64>,
}

impl StabGrid {
    pub fn from_schedule(
        tau_d: f64,
        schedule: &WeightSchedule,
        points: usize,
        lo_override: Option<f64>,
        hi_override: Option<f64>,
    ) -> Self {
        let fundamental = 2.0 * std::f64::consts::PI / tau_d;
        let top = schedule
            .entries
            .last()
            .map(|e| e.omega)
            .unwrap_or(100.0 * fundamental);
        let lo = lo_override.unwrap_or(fundamental / 10.0);
        let hi = hi_override.unwrap_or(4.0 * top);
        let n = points.max(2);
        let omegas = (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect();
        Self {
            epsilon: schedule.epsilon,
            omegas,
        }
    }
}

/// Per-row outcome of a membership check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCheck {
    pub k: u32,
    pub omega: f64,
    pub band: Band,
    pub ws: f64,
    pub wt: f64,
    /// `|W_S·S| + |W_T·T|`; absent when evaluation failed.
    pub value: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

/// Regeneration-condition outcome of a membership check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenRow {
    pub pass: bool,
    pub worst_omega: Option<f64>,
    pub worst_value: Option<f64>,
    pub epsilon: f64,
    pub error: Option<String>,
}

/// Verdict of direct constraint evaluation at one candidate point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub point: (f64, f64),
    pub verdict: bool,
    pub rows: Vec<RowCheck>,
    pub regen: Option<RegenRow>,
}

/// Evaluate every design inequality directly at a candidate parameter point.
///
/// This is the ground truth the curve-tracing construction is checked
/// against: it instantiates the controller at the point and walks the weight
/// schedule (plus the regeneration grid when given) through the public loop
/// equations. Evaluation errors at any frequency count as violations.
pub fn membership_oracle(
    point: (f64, f64),
    plant: &TransferFunction,
    ctrl_template: &RepetitiveController,
    selection: &ParameterSelection,
    schedule: &WeightSchedule,
    stab: Option<&StabGrid>,
) -> MembershipReport {
    let ctrl = selection.instantiate(ctrl_template, point.0, point.1);
    let mut rows = Vec::with_capacity(schedule.entries.len());
    let mut verdict = true;
    for entry in &schedule.entries {
        let row = match robust_perf_value(plant, &ctrl, entry.ws, entry.wt, entry.omega) {
            Ok(v) => RowCheck {
                k: entry.k,
                omega: entry.omega,
                band: entry.band,
                ws: entry.ws,
                wt: entry.wt,
                value: Some(v),
                pass: v < 1.0,
                error: None,
            },
            Err(e) => RowCheck {
                k: entry.k,
                omega: entry.omega,
                band: entry.band,
                ws: entry.ws,
                wt: entry.wt,
                value: None,
                pass: false,
                error: Some(e.to_string()),
            },
        };
        verdict &= row.pass;
        rows.push(row);
    }
    let regen = stab.map(
        |sg| match regen_stability_check(plant, &ctrl, &sg.omegas, sg.epsilon) {
            Ok(check) => RegenRow {
                pass: check.pass,
                worst_omega: Some(check.worst_omega),
                worst_value: Some(check.worst_value),
                epsilon: sg.epsilon,
                error: None,
            },
            Err(e) => RegenRow {
                pass: false,
                worst_omega: None,
                worst_value: None,
                epsilon: sg.epsilon,
                error: Some(e.to_string()),
            },
        },
    );
    if let Some(r) = &regen {
        verdict &= r.pass;
    }
    MembershipReport {
        point,
        verdict,
        rows,
        regen,
    }
}

/// Cellwise AND of per-frequency solution regions.
pub fn intersect_regions(regions: &[&SolutionRegion]) -> Result<OverallRegion, RegionError> {
    let first = regions.first().ok_or(RegionError::NoRegions)?;
    let grid = first.raster.grid;
    let mut cells = vec![true; grid.nx * grid.ny];
    let mut contributing = Vec::with_capacity(regions.len());
    for region in regions {
        if region.raster.grid != grid {
            return Err(RegionError::MismatchedGrids);
        }
        for (acc, &c) in cells.iter_mut().zip(region.raster.cells.iter()) {
            *acc &= c;
        }
        contributing.push((region.omega, region.band));
    }
    let raster = Raster { grid, cells };
    let nonempty = raster.true_count() > 0;
    Ok(OverallRegion {
        raster,
        contributing,
        nonempty,
    })
}

impl OverallRegion {
    /// Trivially-true region over a grid (empty constraint set).
    pub fn full(grid: &RasterGrid) -> Self {
        Self {
            raster: Raster {
                grid: *grid,
                cells: vec![true; grid.nx * grid.ny],
            },
            contributing: Vec::new(),
            nonempty: grid.nx * grid.ny > 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PickStrategy {
    /// Member cell nearest the centroid of all member cells.
    Centroid,
    /// Cell maximizing Chebyshev distance to the region boundary
    /// (morphological erosion depth).
    MaxClearance,
}

/// Chebyshev distance-to-boundary transform of the member set; out-of-grid
/// counts as boundary.
pub(crate) fn clearance_map(raster: &Raster) -> Vec<u32> {
    let (nx, ny) = (raster.grid.nx, raster.grid.ny);
    let mut dist = vec![0u32; nx * ny];
    let mut queue = std::collections::VecDeque::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            if !raster.cells[i] {
                continue;
            }
            let mut boundary = ix == 0 || iy == 0 || ix == nx - 1 || iy == ny - 1;
            if !boundary {
                'n: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                        if !raster.cells[jy as usize * nx + jx as usize] {
                            boundary = true;
                            break 'n;
                        }
                    }
                }
            }
            if boundary {
                dist[i] = 1;
                queue.push_back((ix, iy));
            } else {
                dist[i] = u32::MAX;
            }
        }
    }
    while let Some((ix, iy)) = queue.pop_front() {
        let d = dist[iy * nx + ix];
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                    continue;
                }
                let j = jy as usize * nx + jx as usize;
                if raster.cells[j] && dist[j] > d + 1 {
                    dist[j] = d + 1;
                    queue.push_back((jx as usize, jy as usize));
                }
            }
        }
    }
    dist
}

/// Pick a representative member cell center of the overall region.
pub fn pick_point(
    overall: &OverallRegion,
    strategy: PickStrategy,
) -> Result<(f64, f64), RegionError> {
    if !overall.nonempty {
        return Err(RegionError::EmptyRegion);
    }
    let raster = &overall.raster;
    let (nx, ny) = (raster.grid.nx, raster.grid.ny);
    let (best_ix, best_iy) = match strategy {
        PickStrategy::Centroid => {
            let mut sum_x = 0.0f64;
            let mut sum_y = 0.0f64;
            let mut count = 0usize;
            for iy in 0..ny {
                for ix in 0..nx {
                    if raster.get(ix, iy) {
                        sum_x += ix as f64;
                        sum_y += iy as f64;
                        count += 1;
                    }
                }
            }
            let (cx, cy) = (sum_x / count as f64, sum_y / count as f64);
            let mut best = (0usize, 0usize);
            let mut best_d = f64::INFINITY;
            for iy in 0..ny {
                for ix in 0..nx {
                    if raster.get(ix, iy) {
                        let d = (ix as f64 - cx).powi(2) + (iy as f64 - cy).powi(2);
                        if d < best_d {
                            best_d = d;
                            best = (ix, iy);
                        }
                    }
                }
            }
            best
        }
        PickStrategy::MaxClearance => {
            let dist = clearance_map(raster);
            let mut best = (0usize, 0usize);
            let mut best_d = 0u32;
            for iy in 0..ny {
                for ix in 0..nx {
                    let d = dist[iy * nx + ix];
                    if raster.get(ix, iy) && d > best_d {
                        best_d = d;
                        best = (ix, iy);
                    }
                }
            }
            best
        }
    };
    let xs = raster.grid.x_centers();
    let ys = raster.grid.y_centers();
    Ok((xs[best_ix], ys[best_iy]))
}

/// Artifact format for region export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
    Svg,
}

impl FromStr for ExportFormat {
    type Err = RegionError;

    fn from_str(s: &str) -> Result<Self, RegionError> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            "svg" => Ok(ExportFormat::Svg),
            other => Err(RegionError::UnsupportedFormat {
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Serialize)]
struct RegionJson<'a> {
    config_hash: &'a str,
    band: &'a str,
    omega: Option<f64>,
    side: Option<Side>,
    bounds: &'a ParamBox,
    nx: usize,
    ny: usize,
    true_cells: usize,
    /// Per-row run lengths, alternating false/true and starting with false.
    raster_rle: Vec<Vec<u32>>,
    curve_rings: &'a [Vec<[f64; 2]>],
}

#[derive(Serialize)]
struct OverallJson<'a> {
    config_hash: &'a str,
    nonempty: bool,
    true_cells: usize,
    contributing: Vec<(Option<f64>, String)>,
    bounds: &'a ParamBox,
    nx: usize,
    ny: usize,
    raster_rle: Vec<Vec<u32>>,
}

fn raster_csv(raster: &Raster, config_hash: &str) -> Vec<u8> {
    let xs = raster.grid.x_centers();
    let ys = raster.grid.y_centers();
    let mut out = String::new();
    out.push_str(&format!("# config_hash {config_hash}\n"));
    out.push_str("p1,p2\n");
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            if raster.get(ix, iy) {
                out.push_str(&format!("{:.16e},{:.16e}\n", x, y));
            }
        }
    }
    out.into_bytes()
}

fn band_color(band: Band) -> &'static str {
    match band {
        Band::NP => "#1f77b4",
        Band::RP => "#d62728",
        Band::RS => "#9467bd",
        Band::STAB => "#8c564b",
    }
}

fn raster_heatmap(fig: &mut Figure, raster: &Raster, color: &str, opacity: f64) {
    let grid = &raster.grid;
    for iy in 0..grid.ny {
        let y0 = grid.y_edge(iy);
        let y1 = grid.y_edge(iy + 1);
        let mut ix = 0;
        while ix < grid.nx {
            if raster.get(ix, iy) {
                let start = ix;
                while ix < grid.nx && raster.get(ix, iy) {
                    ix += 1;
                }
                fig.cell_rect(grid.x_edge(start), grid.x_edge(ix), y0, y1, color, opacity);
            } else {
                ix += 1;
            }
        }
    }
}

fn region_figure(region: &SolutionRegion, config_hash: &str) -> String {
    let b = &region.raster.grid.bounds;
    let title = match region.omega {
        Some(w) => format!("{} point condition at {:.6e} rad/s", region.band, w),
        None => format!("{} region", region.band),
    };
    let mut fig = Figure::new(
        &title,
        Axis::new(b.x.lo, b.x.hi, b.x.log, "p1"),
        Axis::new(b.y.lo, b.y.hi, b.y.log, "p2"),
    );
    raster_heatmap(&mut fig, &region.raster, band_color(region.band), 0.45);
    for ring in &region.rings {
        let pts: Vec<(f64, f64)> = ring.iter().map(|p| (p[0], p[1])).collect();
        fig.polyline(&pts, "#000000", 1.2);
    }
    fig.legend(band_color(region.band), &format!("{} cells", region.band));
    fig.render(config_hash)
}

/// Serialize a per-frequency region.
pub fn export_region(
    region: &SolutionRegion,
    format: ExportFormat,
    config_hash: &str,
) -> Result<Vec<u8>, RegionError> {
    Ok(match format {
        ExportFormat::Json => {
            let doc = RegionJson {
                config_hash,
                band: region.band.name(),
                omega: region.omega,
                side: region.side,
                bounds: &region.raster.grid.bounds,
                nx: region.raster.grid.nx,
                ny: region.raster.grid.ny,
                true_cells: region.raster.true_count(),
                raster_rle: region.raster.rle_rows(),
                curve_rings: &region.rings,
            };
            serde_json::to_vec_pretty(&doc).expect("region serialization cannot fail")
        }
        ExportFormat::Csv => raster_csv(&region.raster, config_hash),
        ExportFormat::Svg => region_figure(region, config_hash).into_bytes(),
    })
}

/// Serialize the overall region; the SVG form layers every contributing
/// band's boundary rings over the intersection raster and marks the picked
/// tuning point with a cross when one exists.
pub fn export_overall(
    overall: &OverallRegion,
    per_band: &[&SolutionRegion],
    mark: Option<(f64, f64)>,
    format: ExportFormat,
    config_hash: &str,
) -> Result<Vec<u8>, RegionError> {
    Ok(match format {
        ExportFormat::Json => {
            let doc = OverallJson {
                config_hash,
                nonempty: overall.nonempty,
                true_cells: overall.raster.true_count(),
                contributing: overall
                    .contributing
                    .iter()
                    .map(|&(w, b)| (w, b.name().to_string()))
                    .collect(),
                bounds: &overall.raster.grid.bounds,
                nx: overall.raster.grid.nx,
                ny: overall.raster.grid.ny,
                raster_rle: overall.raster.rle_rows(),
            };
            serde_json::to_vec_pretty(&doc).expect("region serialization cannot fail")
        }
        ExportFormat::Csv => raster_csv(&overall.raster, config_hash),
        ExportFormat::Svg => {
            let b = &overall.raster.grid.bounds;
            let mut fig = Figure::new(
                "overall solution region",
                Axis::new(b.x.lo, b.x.hi, b.x.log, "p1"),
                Axis::new(b.y.lo, b.y.hi, b.y.log, "p2"),
            );
            raster_heatmap(&mut fig, &overall.raster, "#2ca02c", 0.75);
            let mut seen = Vec::new();
            for region in per_band {
                for ring in &region.rings {
                    let pts: Vec<(f64, f64)> = ring.iter().map(|p| (p[0], p[1])).collect();
                    fig.polyline(&pts, band_color(region.band), 0.8);
                }
                if !seen.contains(&region.band) {
                    seen.push(region.band);
                }
            }
            if let Some((px, py)) = mark {
                fig.cross(px, py, 6.0, "#000000");
            }
            fig.legend("#2ca02c", "intersection");
            for band in seen {
                fig.legend(band_color(band), band.name());
            }
            fig.render(config_hash).into_bytes()
        }
    })
}

/// Curve statistics of one mapped frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveStats {
    pub points: usize,
    pub skipped: usize,
    pub error: Option<String>,
}

/// One mapped schedule row.
#[derive(Debug, Clone)]
pub struct MapEntry {
    pub entry: WeightEntry,
    pub region: SolutionRegion,
    pub stats: CurveStats,
}

/// Result of the full mapping procedure over a weight schedule.
#[derive(Debug, Clone)]
pub struct MapOutcome {
    pub entries: Vec<MapEntry>,
    pub stab: Option<SolutionRegion>,
    pub overall: OverallRegion,
}

/// Per-cell evaluation kernel for one design frequency: holds the plant
/// response and rotations fixed and substitutes the candidate coefficients
/// into the selected section in place, so it follows the exact float path of
/// [`membership_oracle`].
struct CellKernel<'a> {
    ctx: FreqContext,
    ctrl: &'a RepetitiveController,
    selection: &'a ParameterSelection,
    base: crate::repcon::BiquadSection,
}

impl<'a> CellKernel<'a> {
    fn new(
        plant: &TransferFunction,
        ctrl: &'a RepetitiveController,
        selection: &'a ParameterSelection,
        omega: f64,
    ) -> Result<Self, crate::repcon::RepconError> {
        let ctx = FreqContext::new(plant, ctrl, omega)?;
        let base = selection.sections_of(ctrl)[selection.section_index];
        Ok(Self {
            ctx,
            ctrl,
            selection,
            base,
        })
    }

    fn filters(&self, p1: f64, p2: f64) -> (Complex64, Complex64) {
        let modified = self.selection.apply_to_section(&self.base, p1, p2);
        let sub = Some((self.selection.section_index, &modified));
        let omega = self.ctx.omega;
        match self.selection.target {
            TargetFilter::Qp => (
                filter_chain_value(&self.ctrl.qp_sections, sub, omega),
                filter_chain_value(&self.ctrl.bp_sections, None, omega),
            ),
            TargetFilter::Bp => (
                filter_chain_value(&self.ctrl.qp_sections, None, omega),
                filter_chain_value(&self.ctrl.bp_sections, sub, omega),
            ),
        }
    }

    fn robust_perf_ok(&self, p1: f64, p2: f64, ws: f64, wt: f64) -> bool {
        let (qp, bp) = self.filters(p1, p2);
        self.ctx
            .robust_perf(qp, bp, ws, wt)
            .map(|v| v < 1.0)
            .unwrap_or(false)
    }

    fn regen_ok(&self, p1: f64, p2: f64, limit: f64) -> bool {
        let (qp, bp) = self.filters(p1, p2);
        self.ctx.regen(qp, bp).map(|r| r < limit).unwrap_or(false)
    }
}

/// Map one weight-table row into its point-condition solution region: trace
/// the boundary curve, rasterize the strict inequality, classify the side.
pub fn map_single_entry(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    selection: &ParameterSelection,
    entry: &WeightEntry,
    grid: &RasterGrid,
    theta_resolution: usize,
) -> MapEntry {
    let trace = trace_point_condition_curve(
        plant,
        ctrl,
        selection,
        entry.ws,
        entry.wt,
        entry.omega,
        theta_resolution,
    );
    let (rings, stats) = match trace {
        Ok(t) => (
            t.rings,
            CurveStats {
                points: t.points.len(),
                skipped: t.skipped,
                error: None,
            },
        ),
        Err(PointCondError::EmptyCurve { .. }) => (
            Vec::new(),
            CurveStats {
                points: 0,
                skipped: 0,
                error: Some("empty curve: no boundary solutions in this configuration".to_string()),
            },
        ),
        Err(e) => (
            Vec::new(),
            CurveStats {
                points: 0,
                skipped: 0,
                error: Some(e.to_string()),
            },
        ),
    };

    let region = match CellKernel::new(plant, ctrl, selection, entry.omega) {
        Ok(kernel) => classify_region(
            Some(entry.omega),
            entry.band,
            rings,
            |p1, p2| kernel.robust_perf_ok(p1, p2, entry.ws, entry.wt),
            grid,
        ),
        // Plant pole exactly on the design frequency: nothing satisfiable.
        Err(_) => classify_region(Some(entry.omega), entry.band, rings, |_, _| false, grid),
    };
    MapEntry {
        entry: *entry,
        region,
        stats,
    }
}

/// Rasterize the regeneration stability condition `R(ω) < 1-ε` over the
/// auxiliary grid.
pub fn map_stab_region(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    selection: &ParameterSelection,
    stab: &StabGrid,
    grid: &RasterGrid,
) -> SolutionRegion {
    let kernels: Result<Vec<CellKernel>, _> = stab
        .omegas
        .iter()
        .map(|&w| CellKernel::new(plant, ctrl, selection, w))
        .collect();
    let limit = 1.0 - stab.epsilon;
    match kernels {
        Ok(kernels) => classify_region(
            None,
            Band::STAB,
            Vec::new(),
            |p1, p2| kernels.iter().all(|k| k.regen_ok(p1, p2, limit)),
            grid,
        ),
        Err(_) => classify_region(None, Band::STAB, Vec::new(), |_, _| false, grid),
    }
}

/// Run the whole mapping procedure: one region per schedule row, optionally
/// the regeneration region, and their intersection.
pub fn map_regions(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    selection: &ParameterSelection,
    schedule: &WeightSchedule,
    stab: Option<&StabGrid>,
    grid: &RasterGrid,
    theta_resolution: usize,
) -> Result<MapOutcome, PointCondError> {
    selection.validate(ctrl)?;
    let entries: Vec<MapEntry> = schedule
        .entries
        .iter()
        .map(|entry| map_single_entry(plant, ctrl, selection, entry, grid, theta_resolution))
        .collect();
    let stab_region = stab.map(|sg| map_stab_region(plant, ctrl, selection, sg, grid));

    let mut all: Vec<&SolutionRegion> = entries.iter().map(|e| &e.region).collect();
    if let Some(sr) = &stab_region {
        all.push(sr);
    }
    let overall = if all.is_empty() {
        OverallRegion::full(grid)
    } else {
        intersect_regions(&all).expect("grids are shared by construction")
    };
    Ok(MapOutcome {
        entries,
        stab: stab_region,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcond::{AxisRange, ParamBox};
    use crate::testutil::{
        afm_controller, afm_interior_point, afm_plant, afm_schedule, afm_selection, AFM_TAU_D,
    };
    use approx::assert_relative_eq;

    fn unit_grid(nx: usize, ny: usize) -> RasterGrid {
        RasterGrid::new(
            ParamBox {
                x: AxisRange {
                    lo: 0.0,
                    hi: 1.0,
                    log: false,
                },
                y: AxisRange {
                    lo: 0.0,
                    hi: 1.0,
                    log: false,
                },
            },
            nx,
            ny,
        )
        .unwrap()
    }

    #[test]
    fn constant_predicates_fill_or_empty() {
        let grid = unit_grid(8, 8);
        let full = classify_region(None, Band::NP, Vec::new(), |_, _| true, &grid);
        assert_eq!(full.raster.true_count(), 64);
        assert_eq!(full.side, None);
        let empty = classify_region(None, Band::NP, Vec::new(), |_, _| false, &grid);
        assert_eq!(empty.raster.true_count(), 0);
    }

    #[test]
    fn winding_classification_matches_square() {
        let grid = unit_grid(20, 20);
        let square = vec![vec![[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75]]];
        // Predicate true exactly inside the square.
        let region = classify_region(
            None,
            Band::RP,
            square.clone(),
            |x, y| (0.25..0.75).contains(&x) && (0.25..0.75).contains(&y),
            &grid,
        );
        assert_eq!(region.side, Some(Side::Inside));
        // Complement classifies as outside.
        let region = classify_region(
            None,
            Band::RP,
            square,
            |x, y| !((0.25..0.75).contains(&x) && (0.25..0.75).contains(&y)),
            &grid,
        );
        assert_eq!(region.side, Some(Side::Outside));
    }

    #[test]
    fn intersection_examples() {
        let grid = unit_grid(10, 10);
        let a = classify_region(Some(1.0), Band::NP, Vec::new(), |x, _| x < 0.5, &grid);
        let only = intersect_regions(&[&a]).unwrap();
        assert_eq!(only.raster.cells, a.raster.cells);
        assert!(only.nonempty);

        let complement = classify_region(Some(2.0), Band::RS, Vec::new(), |x, _| x >= 0.5, &grid);
        let both = intersect_regions(&[&a, &complement]).unwrap();
        assert!(!both.nonempty);
        assert_eq!(both.raster.true_count(), 0);
        assert_eq!(both.contributing.len(), 2);

        let other_grid = unit_grid(11, 10);
        let b = classify_region(Some(1.0), Band::NP, Vec::new(), |_, _| true, &other_grid);
        assert!(matches!(
            intersect_regions(&[&a, &b]),
            Err(RegionError::MismatchedGrids)
        ));
        assert!(matches!(
            intersect_regions(&[]),
            Err(RegionError::NoRegions)
        ));
    }

    #[test]
    fn intersection_is_monotone_decreasing() {
        let grid = unit_grid(16, 16);
        let a = classify_region(Some(1.0), Band::NP, Vec::new(), |x, y| x + y < 1.2, &grid);
        let b = classify_region(Some(2.0), Band::RP, Vec::new(), |x, _| x > 0.2, &grid);
        let ab = intersect_regions(&[&a, &b]).unwrap();
        let c = classify_region(Some(3.0), Band::RS, Vec::new(), |_, y| y > 0.3, &grid);
        let abc = intersect_regions(&[&a, &b, &c]).unwrap();
        assert!(abc.raster.true_count() <= ab.raster.true_count());
        for (x, y) in abc.raster.cells.iter().zip(ab.raster.cells.iter()) {
            assert!(!*x || *y, "adding a region must never grow the raster");
        }
    }

    #[test]
    fn pick_point_full_box_and_single_cell() {
        let grid = unit_grid(9, 9);
        let full = OverallRegion::full(&grid);
        let (cx, cy) = pick_point(&full, PickStrategy::Centroid).unwrap();
        assert_relative_eq!(cx, 0.5, max_relative = 1e-12);
        assert_relative_eq!(cy, 0.5, max_relative = 1e-12);
        let (mx, my) = pick_point(&full, PickStrategy::MaxClearance).unwrap();
        assert_relative_eq!(mx, 0.5, max_relative = 1e-12);
        assert_relative_eq!(my, 0.5, max_relative = 1e-12);

        let single = classify_region(
            None,
            Band::NP,
            Vec::new(),
            |x, y| (x - 0.72).abs() < 0.05 && (y - 0.28).abs() < 0.05,
            &grid,
        );
        assert_eq!(single.raster.true_count(), 1);
        let overall = intersect_regions(&[&single]).unwrap();
        let c = pick_point(&overall, PickStrategy::Centroid).unwrap();
        let m = pick_point(&overall, PickStrategy::MaxClearance).unwrap();
        assert_eq!(c, m);

        let empty = classify_region(None, Band::NP, Vec::new(), |_, _| false, &grid);
        let overall = intersect_regions(&[&empty]).unwrap();
        assert!(matches!(
            pick_point(&overall, PickStrategy::Centroid),
            Err(RegionError::EmptyRegion)
        ));
    }

    #[test]
    fn export_round_trips_cell_counts() {
        let grid = unit_grid(12, 7);
        let region = classify_region(Some(3.0), Band::RP, Vec::new(), |x, y| x * y > 0.25, &grid);
        let json = export_region(&region, ExportFormat::Json, "deadbeef").unwrap();
        let doc: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(doc["config_hash"], "deadbeef");
        let mut decoded = 0u64;
        for row in doc["raster_rle"].as_array().unwrap() {
            let runs: Vec<u64> = row
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap())
                .collect();
            assert_eq!(runs.iter().sum::<u64>(), 12);
            for (i, r) in runs.iter().enumerate() {
                if i % 2 == 1 {
                    decoded += r;
                }
            }
        }
        assert_eq!(decoded as usize, region.raster.true_count());

        let csv = export_region(&region, ExportFormat::Csv, "deadbeef").unwrap();
        let lines = String::from_utf8(csv).unwrap();
        assert_eq!(lines.lines().count(), 2 + region.raster.true_count());

        // Empty region still yields a valid artifact.
        let empty = classify_region(None, Band::NP, Vec::new(), |_, _| false, &grid);
        let json = export_region(&empty, ExportFormat::Json, "deadbeef").unwrap();
        let doc: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(doc["true_cells"], 0);
        assert!(matches!(
            ExportFormat::from_str("png"),
            Err(RegionError::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn overall_svg_layers_bands_and_intersection() {
        let grid = unit_grid(6, 6);
        let ring = vec![vec![[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8]]];
        let a = classify_region(Some(1.0), Band::NP, ring, |x, _| x < 0.5, &grid);
        let b = classify_region(Some(2.0), Band::RS, Vec::new(), |_, y| y < 0.9, &grid);
        let overall = intersect_regions(&[&a, &b]).unwrap();
        let svg = export_overall(
            &overall,
            &[&a, &b],
            Some((0.4, 0.4)),
            ExportFormat::Svg,
            "cafe",
        )
        .unwrap();
        let text = String::from_utf8(svg).unwrap();
        assert!(text.contains("config_hash cafe"));
        assert!(text.contains("intersection"));
        assert!(text.contains(">NP<"));
        assert!(text.contains(">RS<"));
        assert!(text.contains("<polyline"));
    }

    #[test]
    fn oracle_on_trivial_schedule_and_boundary_points() {
        let plant = afm_plant();
        let ctrl = afm_controller(3.5e10, 2.6e5);
        let sel = afm_selection();
        // Empty schedule: every point is a member.
        let empty = WeightSchedule::new(AFM_TAU_D, 0.05, &[]).unwrap();
        let report = membership_oracle((1e9, 1e4), &plant, &ctrl, &sel, &empty, None);
        assert!(report.verdict);

        // q_p = 0 cannot reach |S| < 1/500 at the fundamental.
        let schedule = afm_schedule();
        let report = membership_oracle((0.0, 1e4), &plant, &ctrl, &sel, &schedule, None);
        assert!(!report.verdict);
        assert!(!report.rows[0].pass);
        let v = report.rows[0].value.unwrap();
        assert!(
            v > 1.0,
            "500·|S| with the bare plant loop is {v}, expected > 1"
        );

        // A traced boundary point fails the strict inequality at its own
        // frequency (value = 1 up to tracing tolerance, never < 1 robustly).
        let omega = schedule.entries[0].omega;
        let curve =
            trace_point_condition_curve(&plant, &ctrl, &sel, 500.0, 0.0, omega, 256).unwrap();
        let p = curve.points[curve.points.len() / 2];
        let inst = sel.instantiate(&ctrl, p.p1, p.p2);
        let v = robust_perf_value(&plant, &inst, 500.0, 0.0, omega).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn interior_point_passes_full_oracle() {
        let plant = afm_plant();
        let ctrl = afm_controller(3.5e10, 2.6e5);
        let sel = afm_selection();
        let schedule = afm_schedule();
        let stab = StabGrid::from_schedule(AFM_TAU_D, &schedule, 400, None, None);
        let (a0, a1) = afm_interior_point();
        let report = membership_oracle((a0, a1), &plant, &ctrl, &sel, &schedule, Some(&stab));
        assert!(report.verdict, "known interior point must pass: {report:?}");
        let regen = report.regen.unwrap();
        assert!(regen.pass);
        assert!(regen.worst_value.unwrap() < 0.5);
    }

    /// Raster cells and the membership oracle restricted to the same single
    /// frequency agree exactly (they follow the same float path).
    #[test]
    fn raster_equals_single_frequency_oracle() {
        let plant = afm_plant();
        let ctrl = afm_controller(3.5e10, 2.6e5);
        let sel = afm_selection();
        let grid = RasterGrid::new(sel.bounds, 28, 28).unwrap();
        let entry = WeightEntry {
            k: 40,
            omega: 2.0 * std::f64::consts::PI * 40.0 / AFM_TAU_D,
            ws: 3.3,
            wt: 0.001,
            band: Band::RP,
        };
        let mapped = map_single_entry(&plant, &ctrl, &sel, &entry, &grid, 256);
        let single_row = WeightSchedule::new(AFM_TAU_D, 0.05, &[(40, 3.3, 0.001, Band::RP)]).unwrap();
        let xs = grid.x_centers();
        let ys = grid.y_centers();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let verdict =
                    membership_oracle((xs[ix], ys[iy]), &plant, &ctrl, &sel, &single_row, None)
                        .verdict;
                assert_eq!(
                    mapped.region.raster.get(ix, iy),
                    verdict,
                    "raster and oracle disagree at cell ({ix}, {iy})"
                );
            }
        }
    }

    /// Same agreement when the designed section sits inside a multi-section
    /// chain (in-place substitution must preserve the multiplication order).
    #[test]
    fn raster_equals_oracle_for_multi_section_chains() {
        let plant = afm_plant();
        let extra = crate::repcon::BiquadSection::new(0.0, 1e-6, 1.1, 0.0, 2e-6, 1.0);
        let ctrl = RepetitiveController::new(
            AFM_TAU_D,
            7.5e-6,
            3e-6,
            vec![extra, crate::repcon::BiquadSection::new(0.0, 0.0, 3.5e10, 1.0, 2.6e5, 3.5e10)],
            vec![],
        )
        .unwrap();
        let mut sel = afm_selection();
        sel.section_index = 1;
        let grid = RasterGrid::new(sel.bounds, 16, 16).unwrap();
        let entry = WeightEntry {
            k: 2,
            omega: 2.0 * std::f64::consts::PI * 2.0 / AFM_TAU_D,
            ws: 225.0,
            wt: 0.0,
            band: Band::NP,
        };
        let mapped = map_single_entry(&plant, &ctrl, &sel, &entry, &grid, 128);
        let single_row = WeightSchedule::new(AFM_TAU_D, 0.05, &[(2, 225.0, 0.0, Band::NP)]).unwrap();
        let xs = grid.x_centers();
        let ys = grid.y_centers();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let verdict =
                    membership_oracle((xs[ix], ys[iy]), &plant, &ctrl, &sel, &single_row, None)
                        .verdict;
                assert_eq!(mapped.region.raster.get(ix, iy), verdict);
            }
        }
    }

    /// Setting wt = 0 (or ws = 0) in the RP machinery reproduces the
    /// dedicated single-weight region cell-exactly.
    #[test]
    fn single_weight_reductions_are_cell_exact() {
        let plant = afm_plant();
        let ctrl = afm_controller(3.5e10, 2.6e5);
        let sel = afm_selection();
        let grid = RasterGrid::new(sel.bounds, 24, 24).unwrap();
        let entry_rp_as_np = WeightEntry {
            k: 1,
            omega: 2.0 * std::f64::consts::PI / AFM_TAU_D,
            ws: 500.0,
            wt: 0.0,
            band: Band::RP,
        };
        let np = WeightEntry {
            band: Band::NP,
            ..entry_rp_as_np
        };
        let a = map_single_entry(&plant, &ctrl, &sel, &entry_rp_as_np, &grid, 256);
        let b = map_single_entry(&plant, &ctrl, &sel, &np, &grid, 256);
        assert_eq!(a.region.raster.cells, b.region.raster.cells);
    }

    proptest::proptest! {
        /// RLE rows always sum to the row width and decode to the true-cell
        /// count.
        #[test]
        fn rle_encoding_is_consistent(cells in proptest::collection::vec(proptest::bool::ANY, 35)) {
            let grid = unit_grid(7, 5);
            let raster = Raster { grid, cells };
            let rows = raster.rle_rows();
            let mut decoded = 0u32;
            for row in &rows {
                proptest::prop_assert_eq!(row.iter().sum::<u32>(), 7);
                for (i, run) in row.iter().enumerate() {
                    if i % 2 == 1 {
                        decoded += run;
                    }
                }
            }
            proptest::prop_assert_eq!(decoded as usize, raster.true_count());
        }
    }

    #[test]
    fn clearance_map_erodes_from_the_border() {
        let grid = unit_grid(7, 5);
        let full = OverallRegion::full(&grid);
        let dist = clearance_map(&full.raster);
        // Border cells are depth 1, center of the short axis is depth 3.
        assert_eq!(dist[0], 1);
        assert_eq!(dist[2 * 7 + 3], 3);
    }
}
