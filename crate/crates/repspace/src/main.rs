use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use repspace::cli::{
    self, cmd_bode, cmd_check, cmd_map, cmd_regen, cmd_simulate, load_config, CompiledDesign,
};
use repspace::regions::ExportFormat;

/// Parameter-space design of robust repetitive controllers.
#[derive(Parser)]
#[command(name = "repspace", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Map the weight schedule into per-frequency solution regions and their
    /// intersection (exit 0 when nonempty, 2 when empty).
    Map {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Raster resolution override, NX,NY.
        #[arg(long)]
        raster: Option<String>,
        /// Phase-sweep sample count override.
        #[arg(long = "theta-res")]
        theta_res: Option<usize>,
        /// Restrict artifacts to one format (json|csv|svg).
        #[arg(long)]
        format: Option<String>,
    },
    /// Verify one candidate point against every design constraint.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Candidate parameters, P1,P2.
        #[arg(long)]
        point: String,
    },
    /// Plant Bode-magnitude artifacts with the design frequencies marked.
    Bode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Regeneration-spectrum artifacts and stability verdict.
    Regen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional candidate parameters, P1,P2 (defaults to the template).
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        format: Option<String>,
    },
    /// Closed-loop time-domain simulation at a candidate point.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Candidate parameters, P1,P2.
        #[arg(long)]
        point: String,
        /// Fixed-step override in seconds.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        format: Option<String>,
    },
}

fn parse_format(s: Option<String>) -> Result<Option<ExportFormat>, cli::CliError> {
    s.map(|v| ExportFormat::from_str(&v).map_err(cli::CliError::Region))
        .transpose()
}

fn load(config: &std::path::Path) -> Result<CompiledDesign, cli::CliError> {
    load_config(config)
}

fn run() -> Result<i32, cli::CliError> {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Map {
            config,
            out,
            raster,
            theta_res,
            format,
        } => {
            let mut design = load(&config)?;
            if let Some(r) = raster {
                let (nx, ny) = cli::parse_raster(&r)?;
                design.grid = repspace::regions::RasterGrid::new(design.selection.bounds, nx, ny)?;
            }
            if let Some(n) = theta_res {
                design.theta_resolution = n.max(16);
            }
            let format = parse_format(format)?;
            let (status, summary, _) = cmd_map(&design, &out, format)?;
            println!(
                "overall region: {} ({} cells); picks: centroid {:?}, max-clearance {:?}",
                if summary.nonempty {
                    "nonempty"
                } else {
                    "EMPTY"
                },
                summary.true_cells,
                summary.pick_centroid,
                summary.pick_max_clearance,
            );
            if !summary.empty_rows.is_empty() {
                println!(
                    "rows with empty point-condition regions: k = {:?}",
                    summary.empty_rows
                );
            }
            Ok(status.exit_code())
        }
        Cmd::Check { config, out, point } => {
            let design = load(&config)?;
            let point = cli::parse_point(&point)?;
            let (status, summary) = cmd_check(&design, point, &out)?;
            for row in &summary.rows {
                println!(
                    "k={:<4} {:<4} value {} -> {}",
                    row.k,
                    row.band.name(),
                    row.value
                        .map(|v| format!("{v:.6}"))
                        .unwrap_or_else(|| "n/a".to_string()),
                    if row.pass { "pass" } else { "FAIL" }
                );
            }
            if let Some(regen) = &summary.regen {
                println!(
                    "regen: worst R = {} at {} rad/s -> {}",
                    regen
                        .worst_value
                        .map(|v| format!("{v:.6}"))
                        .unwrap_or_else(|| "n/a".to_string()),
                    regen
                        .worst_omega
                        .map(|v| format!("{v:.3e}"))
                        .unwrap_or_else(|| "n/a".to_string()),
                    if regen.pass { "pass" } else { "FAIL" }
                );
            }
            println!(
                "verdict: {}",
                if summary.verdict {
                    "member"
                } else {
                    "not a member"
                }
            );
            Ok(status.exit_code())
        }
        Cmd::Bode {
            config,
            out,
            format,
        } => {
            let design = load(&config)?;
            let format = parse_format(format)?;
            let status = cmd_bode(&design, &out, format)?;
            Ok(status.exit_code())
        }
        Cmd::Regen {
            config,
            out,
            point,
            format,
        } => {
            let design = load(&config)?;
            let point = point.map(|p| cli::parse_point(&p)).transpose()?;
            let format = parse_format(format)?;
            let status = cmd_regen(&design, point, &out, format)?;
            Ok(status.exit_code())
        }
        Cmd::Simulate {
            config,
            out,
            point,
            dt,
            format,
        } => {
            let design = load(&config)?;
            let point = cli::parse_point(&point)?;
            let format = parse_format(format)?;
            let (status, summary) = cmd_simulate(&design, point, &out, dt, format)?;
            if let (Some(first), Some(last)) = (summary.periods.first(), summary.periods.last()) {
                println!(
                    "per-period peak error: {:.6e} (first) -> {:.6e} (last) over {} periods",
                    first.peak_error,
                    last.peak_error,
                    summary.periods.len()
                );
            }
            Ok(status.exit_code())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
