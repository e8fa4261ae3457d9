use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod offline;
mod stream;

/// Volumetric depth images: generate, render, compare and stream.
#[derive(Debug, Parser)]
#[command(name = "vdi", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a deterministic synthetic volume (raw brick + JSON sidecar).
    Synth(SynthArgs),
    /// Generate a VDI from a volume and a camera.
    Generate(GenerateArgs),
    /// Render a VDI from a (novel) camera.
    Render(RenderArgs),
    /// Ground-truth direct volume rendering.
    Dvr(DvrArgs),
    /// Replay a camera path and compare VDI rendering against DVR.
    Bench(BenchArgs),
    /// Generation server for remote visualization.
    Serve(ServeArgs),
    /// Rendering client: headless frame dumps or a browser viewer bridge.
    Client(ClientArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Sphere,
    Bands,
    Engineoid,
}

impl From<PresetArg> for vdi::synth::Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Sphere => Self::Sphere,
            PresetArg::Bands => Self::Bands,
            PresetArg::Engineoid => Self::Engineoid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

fn parse_viewport(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h: u32 = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("viewport must be non-empty".into());
    }
    Ok((w, h))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub preset: PresetArg,
    /// Voxels per axis.
    #[arg(long, default_value_t = 128)]
    pub dims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Raw brick path; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the preset's transfer function here.
    #[arg(long)]
    pub tf_out: Option<PathBuf>,
}

/// Volume, transfer function and camera shared by the volume-reading commands.
#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Volume sidecar JSON.
    #[arg(long)]
    pub volume: PathBuf,
    /// Transfer function JSON.
    #[arg(long)]
    pub tf: PathBuf,
    /// Camera JSON; defaults to framing the volume from +z.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Overrides the camera's viewport, e.g. 512x512.
    #[arg(long, value_parser = parse_viewport)]
    pub viewport: Option<(u32, u32)>,
    /// World-space sampling step (default: half the smallest voxel spacing).
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 20)]
    pub n_sg: u32,
    /// Accepted shortfall below n_sg (default: 15% of n_sg).
    #[arg(long)]
    pub delta: Option<u32>,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-list pass counts and thresholds as CSV.
    #[arg(long)]
    pub passes_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub vdi: PathBuf,
    /// Novel camera JSON; defaults to the generation camera.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, value_parser = parse_viewport)]
    pub viewport: Option<(u32, u32)>,
    #[arg(long, value_enum, default_value = "on")]
    pub ess: OnOff,
    /// Fixed image-space factor; selects preview rendering and disables the controller.
    #[arg(long)]
    pub d_i: Option<f64>,
    /// Ray sampling factor for preview rendering (default 0.05).
    #[arg(long)]
    pub d_r: Option<f64>,
    /// Runs the frame-rate controller on preview frames (unless --d-i is given).
    #[arg(long)]
    pub target_fps: Option<f64>,
    /// Frames to render; each adds one row to the stats CSV.
    #[arg(long, default_value_t = 1)]
    pub frames: u32,
    #[arg(long, default_value_t = 0.999)]
    pub early_term: f32,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DvrArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Camera path JSON (array of camera records). Without it the base camera
    /// is orbited about the volume center by --angles.
    #[arg(long)]
    pub path: Option<PathBuf>,
    /// Orbit angles in degrees.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30,35,40")]
    pub angles: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub n_sg: u32,
    #[arg(long, value_enum, default_value = "on")]
    pub ess: OnOff,
    /// Preview factors to add to each frame, e.g. --d-i 1,0.5 --d-r 1,0.5.
    #[arg(long, value_delimiter = ',')]
    pub d_i: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub d_r: Vec<f64>,
    /// Timed repetitions per frame; the median is reported.
    #[arg(long, default_value_t = 1)]
    pub repeat: u32,
    /// Write the rendered VDI frames as PNG into this directory.
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7070")]
    pub listen: String,
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub tf: PathBuf,
    /// Used when a client does not send a handshake.
    #[arg(long, value_parser = parse_viewport, default_value = "512x512")]
    pub viewport: (u32, u32),
    /// Used when a client does not send a handshake.
    #[arg(long, default_value_t = 20)]
    pub n_sg: u32,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClientArgs {
    #[arg(long)]
    pub connect: String,
    /// Base camera; defaults to framing a unit box from +z.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, value_parser = parse_viewport, default_value = "512x512")]
    pub viewport: (u32, u32),
    #[arg(long, default_value_t = 20)]
    pub n_sg: u32,
    #[arg(long, default_value_t = 30.0)]
    pub target_fps: f64,
    #[arg(long, default_value_t = offline::DEFAULT_D_R)]
    pub d_r: f64,
    /// Orbit the base camera and write every frame to --out-dir.
    #[arg(long, conflicts_with = "viewer_port")]
    pub headless: bool,
    #[arg(long, default_value_t = 10)]
    pub frames: u32,
    /// Orbit step per headless frame, degrees.
    #[arg(long, default_value_t = 5.0)]
    pub orbit_step: f64,
    #[arg(long, default_value = "frames")]
    pub out_dir: PathBuf,
    /// Serve the browser viewer on this port.
    #[arg(long)]
    pub viewer_port: Option<u16>,
    /// Stop the viewer loop after this many seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Seconds to wait for each VDI.
    #[arg(long, default_value_t = 120.0)]
    pub timeout: f64,
}

/// Bad flag combinations detected after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Violated data invariant found outside the file decoder.
#[derive(Debug)]
pub struct Invariant(pub String);

impl std::fmt::Display for Invariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant violation: {}", self.0)
    }
}

impl std::error::Error for Invariant {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if cause.is::<Invariant>() {
            return 4;
        }
        if let Some(vdi::FormatError::InvariantViolation(_)) = cause.downcast_ref() {
            return 4;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.cmd {
        Command::Synth(a) => offline::synth(a),
        Command::Generate(a) => offline::generate(a),
        Command::Render(a) => offline::render(a),
        Command::Dvr(a) => offline::dvr(a),
        Command::Bench(a) => offline::bench(a),
        Command::Serve(a) => stream::serve(a),
        Command::Client(a) => stream::client(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
