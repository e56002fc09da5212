mod commands;
mod error;
mod output;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use mstwin_core::asset::{Modality, Scale};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "mstwin", version, about = "Musculoskeletal digital-twin engines and patient service")]
pub struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; commands without a tabular form only accept json.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Patient store root.
    #[arg(long, global = true, env = "MSTWIN_STORE", default_value = "mstwin-store")]
    store: PathBuf,
    /// Increase log detail on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an asset and print its summary, or upload it with --patient.
    Ingest(IngestArgs),
    /// Check an asset against its format; exit 1 when invalid.
    Validate(ValidateArgs),
    /// Rigidly align a source point set onto a target.
    Register(RegisterArgs),
    /// ICP robustness under perturbed initial poses.
    Sweep(SweepArgs),
    /// Sample volume intensities onto mesh vertices.
    Texture(TextureArgs),
    /// Intensity statistics inside a sphere.
    SphereStats(SphereArgs),
    /// Cobb angles, disc metrics and alignment from vertebra meshes.
    Spine(SpineArgs),
    /// Windowed sEMG amplitude, spectral and fatigue features.
    Semg(SemgArgs),
    /// Per-frame motion descriptors and region classification.
    Motion(MotionArgs),
    /// Surgical-risk score for a feature vector or twin.
    Risk(InferenceArgs),
    /// Modality-feature-outcome graph for a feature vector or twin.
    Graph(InferenceArgs),
    /// Re-score with overridden feature values.
    WhatIf(WhatIfArgs),
    /// Print a stored twin.
    ExportTwin(ExportArgs),
    /// Run the HTTP/JSON service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_parser = parse_modality)]
    pub modality: Modality,
    /// Asset file; for motion, a bundle file or a directory of frame_NNNNNN.xyz files.
    #[arg(long)]
    pub input: PathBuf,
    /// JSON header for volume, semg, imu and motion-directory inputs.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, value_parser = parse_scale)]
    pub scale: Option<Scale>,
    #[arg(long)]
    pub acquired_at: Option<String>,
    /// Upload into this patient's twin (created if missing).
    #[arg(long)]
    pub patient: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_parser = parse_modality)]
    pub modality: Modality,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct IcpArgs {
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Stop when RMS improves by less than this (mm).
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Fraction of worst correspondences dropped per iteration.
    #[arg(long, default_value_t = 0.1)]
    pub trim: f64,
    /// Isosurface threshold (HU) for volume inputs.
    #[arg(long, default_value_t = 200)]
    pub threshold: i16,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    /// Source points: .obj mesh, .xyz list, or raw volume with --source-meta.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub source_meta: Option<PathBuf>,
    /// Target points: .obj mesh, .xyz list, or raw volume with --target-meta.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub target_meta: Option<PathBuf>,
    #[command(flatten)]
    pub icp: IcpArgs,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[command(flatten)]
    pub points: PointArgs,
    /// Initial transform JSON ({rotation, translation_mm}).
    #[arg(long, conflicts_with_all = ["source_landmarks", "target_landmarks"])]
    pub init: Option<PathBuf>,
    /// Landmarks for a coarse initial alignment (requires --target-landmarks).
    #[arg(long, requires = "target_landmarks")]
    pub source_landmarks: Option<PathBuf>,
    #[arg(long, requires = "source_landmarks")]
    pub target_landmarks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub points: PointArgs,
    #[arg(long)]
    pub source_landmarks: PathBuf,
    #[arg(long)]
    pub target_landmarks: PathBuf,
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Camera distance offsets (mm), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub distance: Vec<f64>,
    /// Camera tilt angles (deg), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tilt: Vec<f64>,
    /// Landmark displacements (mm), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub displace: Vec<f64>,
    #[arg(long, value_parser = parse_triple, default_value = "0,0,1")]
    pub view_axis: [f64; 3],
    #[arg(long, value_parser = parse_triple, default_value = "1,0,0")]
    pub tilt_axis: [f64; 3],
}

#[derive(Debug, Args)]
pub struct VolumeArgs {
    /// Raw little-endian int16 voxels.
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub volume_meta: PathBuf,
}

#[derive(Debug, Args)]
pub struct TextureArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[command(flatten)]
    pub volume: VolumeArgs,
    #[arg(long, default_value_t = mstwin_core::mapping::DEFAULT_DEPTH_MM)]
    pub depth: f64,
    #[arg(long, default_value_t = mstwin_core::mapping::DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Identifier written into the texture export (defaults to the mesh file stem).
    #[arg(long)]
    pub mesh_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct SphereArgs {
    #[command(flatten)]
    pub volume: VolumeArgs,
    /// Sphere centre in mm as x,y,z.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    pub center: [f64; 3],
    #[arg(long, allow_hyphen_values = true)]
    pub radius: f64,
    #[arg(long, default_value_t = mstwin_core::mapping::DEFAULT_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct SpineArgs {
    /// Vertebra meshes (.obj), one per level; labels come from file stems.
    #[arg(long = "mesh", required = true, num_args = 1..)]
    pub meshes: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SemgArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    /// Band-pass corner frequencies in Hz as lo,hi.
    #[arg(long, value_parser = parse_pair, conflicts_with = "no_filter")]
    pub band: Option<(f64, f64)>,
    /// Skip band-pass filtering.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long, default_value_t = mstwin_core::semg::DEFAULT_WINDOW_S)]
    pub window: f64,
    #[arg(long, default_value_t = mstwin_core::semg::DEFAULT_HOP_S)]
    pub hop: f64,
}

#[derive(Debug, Args)]
pub struct MotionArgs {
    /// Motion bundle JSON.
    #[arg(long, required_unless_present = "frames", conflicts_with = "frames")]
    pub input: Option<PathBuf>,
    /// Directory of frame_NNNNNN.xyz files (requires --meta).
    #[arg(long, requires = "meta")]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, default_value_t = mstwin_core::kinematics::DEFAULT_VOXEL_MM)]
    pub voxel: f64,
    /// Speed above which a voxel counts as dynamic (mm/s).
    #[arg(long, default_value_t = mstwin_core::kinematics::DEFAULT_SPEED_THRESHOLD_MM_S)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    /// Feature vector JSON, or a twin JSON whose features are used.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WhatIfArgs {
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Override as name=value; repeatable.
    #[arg(long = "set", value_parser = parse_override, required = true)]
    pub overrides: Vec<(String, f64)>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub patient: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Route prefix such as /api/v1.
    #[arg(long, default_value = "")]
    pub prefix: String,
}

fn parse_modality(s: &str) -> Result<Modality, String> {
    s.parse()
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    s.parse()
}

fn parse_numbers(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(v)
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v = parse_numbers(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_numbers(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected name=value")?;
    let value: f64 = value.trim().parse().map_err(|e| format!("{value:?}: {e}"))?;
    if name.trim().is_empty() || !value.is_finite() {
        return Err("expected name=<finite number>".into());
    }
    Ok((name.trim().to_string(), value))
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| level.into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let name = commands::name(&cli.command);
            let sub = cmd.find_subcommand_mut(name).expect("subcommand exists");
            let usage = sub.render_usage();
            eprintln!("error: {msg}\n\n{usage}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
