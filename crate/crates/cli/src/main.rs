//! `vcodec`: synthesize, encode, decode, score and inspect field files.

mod args;
mod commands;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{DecodeArgs, EncodeArgs, SynthArgs};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "vcodec", version, about = "Centroid field codec for multi-person pose and instance masks")]
#[command(after_help = "Set VC_THREADS to cap the worker pool size.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic annotated scenes.
    #[command(allow_negative_numbers = true)]
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        /// Number of scenes; more than one writes a directory.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Generate the entangled-centroid occlusion suite instead.
        #[arg(long)]
        occlusion_suite: bool,
        /// Also write encoded fields here.
        #[arg(long)]
        fields: Option<PathBuf>,
        #[command(flatten)]
        encode: EncodeArgs,
        /// Scene JSON file, or a directory when --count > 1.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encode annotation JSON (a file or a directory of files) into field files.
    #[command(allow_negative_numbers = true)]
    Encode {
        input: PathBuf,
        #[command(flatten)]
        encode: EncodeArgs,
        /// Field directory; one subdirectory per scene for directory input.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a field directory (or a directory of them) into detections JSON.
    #[command(allow_negative_numbers = true)]
    Decode {
        input: PathBuf,
        #[command(flatten)]
        decode: DecodeArgs,
        /// Detections JSON file, or a directory for directory input.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score predicted fields against targets encoded from annotations.
    #[command(allow_negative_numbers = true)]
    Loss {
        /// Directory with predicted heatmaps.vcf, keycentroid.vcf and maskcentroid.vcf.
        #[arg(long)]
        pred: PathBuf,
        /// Annotation JSON the targets are built from.
        #[arg(long)]
        scene: PathBuf,
        /// Directory of target field files; encoded from --scene when omitted.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Term weights: heatmap,keycentroid,maskcentroid.
        #[arg(long, value_delimiter = ',', default_values_t = [4.0, 1.0, 1.0])]
        weights: Vec<f64>,
        #[command(flatten)]
        encode: EncodeArgs,
        /// LossReport JSON; printed to stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Keypoint (OKS) and mask AP of detections against annotations.
    #[command(allow_negative_numbers = true)]
    Eval {
        /// Detections JSON, or a directory of them.
        detections: PathBuf,
        /// Annotation JSON, or a directory matched to detections by file stem.
        annotations: PathBuf,
        /// EvalResult JSON; printed to stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write precision/recall points as CSV.
        #[arg(long)]
        pr_csv: Option<PathBuf>,
    },
    /// Time the decoder on a synthetic scene.
    #[command(allow_negative_numbers = true)]
    Bench {
        /// Synthetic scene seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 401)]
        width: usize,
        #[arg(long, default_value_t = 401)]
        height: usize,
        /// Persons in the scene.
        #[arg(long, default_value_t = 5)]
        instances: usize,
        #[command(flatten)]
        decode: DecodeArgs,
        /// Timed runs after warmup.
        #[arg(long, default_value_t = 50)]
        runs: usize,
        /// Also write per-run stage times as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// BenchReport JSON; printed to stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the voting and centroid-mode studies.
    #[command(allow_negative_numbers = true)]
    Ablate {
        /// Scenes in the voting study.
        #[arg(long, default_value_t = 100)]
        scenes: usize,
        /// Scenes in the centroid-mode study.
        #[arg(long, default_value_t = 100)]
        suite_scenes: usize,
        /// Corpus seed for the voting study.
        #[arg(long, default_value_t = 1)]
        corpus_seed: u64,
        /// Occlusion suite seed for the centroid-mode study.
        #[arg(long, default_value_t = 2)]
        suite_seed: u64,
        /// Standard deviation of the field noise in the voting study.
        #[arg(long, default_value_t = 0.05)]
        noise_sigma: f64,
        /// Noise seed for scene 0; scene i uses noise_seed + i.
        #[arg(long, default_value_t = 500)]
        noise_seed: u64,
        /// Ablation JSON; printed to stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw masks, skeletons, keypoints and anchors of a scene or detections file as PNG.
    #[command(allow_negative_numbers = true)]
    Render {
        /// Annotation JSON or detections JSON.
        input: PathBuf,
        /// Canvas width; defaults to the input's.
        #[arg(long)]
        width: Option<usize>,
        /// Canvas height; defaults to the input's.
        #[arg(long)]
        height: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<vcodec::Error> for CliError {
    fn from(e: vcodec::Error) -> Self {
        match e {
            vcodec::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("i/o error: {e}"))
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("VC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("VC_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Synth {
            synth,
            count,
            occlusion_suite,
            fields,
            encode,
            output,
        } => commands::synth(&synth, count, occlusion_suite, fields.as_deref(), &encode, &output),
        Command::Encode { input, encode, output } => commands::encode(&input, &encode, &output),
        Command::Decode { input, decode, output } => commands::decode(&input, &decode, &output),
        Command::Loss {
            pred,
            scene,
            target,
            weights,
            encode,
            output,
        } => commands::loss(&pred, &scene, target.as_deref(), &weights, &encode, output.as_deref()),
        Command::Eval {
            detections,
            annotations,
            output,
            pr_csv,
        } => commands::eval(&detections, &annotations, output.as_deref(), pr_csv.as_deref()),
        Command::Bench {
            seed,
            width,
            height,
            instances,
            decode,
            runs,
            csv,
            output,
        } => {
            let scene = vcodec::synth::SynthConfig {
                width,
                height,
                person_count: (instances, instances),
                disk_radius: decode.disk_radius,
                rng_seed: seed,
                ..Default::default()
            };
            commands::bench(&scene, &decode, runs, csv.as_deref(), output.as_deref())
        }
        Command::Ablate {
            scenes,
            suite_scenes,
            corpus_seed,
            suite_seed,
            noise_sigma,
            noise_seed,
            output,
        } => commands::ablate(
            commands::AblateArgs {
                scenes,
                suite_scenes,
                corpus_seed,
                suite_seed,
                noise_sigma,
                noise_seed,
            },
            output.as_deref(),
        ),
        Command::Render {
            input,
            width,
            height,
            output,
        } => commands::render(&input, width, height, &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
