use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use sparsepose::eval::{evaluate, sha256_hex, write_frame_csv, write_report};
use sparsepose::features::{manifest_path, read_recording, Dataset, TrackerFrame};
use sparsepose::motion::{
    bvh_info, parse_bvh, resample, retarget_scale, transfer_to, BvhOptions, Category, MotionClip, Skeleton,
    TARGET_FPS,
};
use sparsepose::net::{file_digest, load_params, NetError, NetworkParams};
use sparsepose::runtime::{
    calibrate_recording, rest_pelvis_height, serve, write_replay_bvh, write_replay_jsonl, AppConfig, Calibration,
    FramePacer, StreamSession,
};
use sparsepose::synth::synthetic_corpus;
use sparsepose::train::{check_training_gradients, train, GradCheckConfig, TrainError};

/// Lower-body pose and foot contacts from head and hand trackers.
#[derive(Parser)]
#[command(name = "sparsepose", version)]
struct Cli {
    /// TOML config; defaults to $SPARSEPOSE_CONFIG, then ./sparsepose.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training dataset from BVH files or synthetic walks.
    Prepare {
        /// Directory of .bvh files; a file's parent directory name may be a
        /// category (locomotion, sit-stand, upper-body, other).
        #[arg(long, conflicts_with = "synthetic")]
        bvh: Option<PathBuf>,
        /// Number of synthetic clips instead of BVH input.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 900)]
        frames: usize,
        /// Metres per BVH unit; 0.01 for centimetre files.
        #[arg(long, default_value_t = 0.01)]
        unit_scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and write checkpoints and a loss curve.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-frame errors as CSV.
        #[arg(long)]
        frames_csv: Option<PathBuf>,
    },
    /// Run a tracker recording offline.
    Replay {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bvh: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Step at the configured frame rate instead of as fast as possible.
        #[arg(long)]
        paced: bool,
    },
    /// Serve predictions over TCP, one client at a time.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        address: Option<String>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Compute tracker offsets and height scale from a T-pose recording.
    Calibrate {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on a small net.
    Gradcheck {
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 8)]
        latent: usize,
        #[arg(long, default_value_t = 8)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Print a summary of a BVH file.
    BvhInfo {
        file: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        unit_scale: f64,
    },
}

/// Failure carrying its exit code: 3 for bad data, 4 for numeric failure.
struct Failure(u8, anyhow::Error);

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure(exit_code(&e), e)
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        let numeric = matches!(
            cause.downcast_ref::<TrainError>(),
            Some(TrainError::NonFinite { .. } | TrainError::NonFiniteLoss(_))
        ) || matches!(cause.downcast_ref::<NetError>(), Some(NetError::NonFiniteParam(_)))
            || cause.downcast_ref::<NumericFailure>().is_some();
        if numeric {
            return 4;
        }
    }
    3
}

#[derive(Debug)]
struct NumericFailure(String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<Arc<NetworkParams>> {
    Ok(Arc::new(load_params(path, None).with_context(|| format!("loading {}", path.display()))?))
}

fn load_calibration(path: Option<&Path>) -> Result<Calibration> {
    match path {
        None => Ok(Calibration::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(Calibration::from_json(&text)?)
        }
    }
}

fn read_frames(path: &Path) -> Result<Vec<TrackerFrame>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_recording(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = AppConfig::load_resolved(cli.config.as_deref()).map_err(anyhow::Error::from)?;
    match cli.command {
        Command::Prepare {
            bvh,
            synthetic,
            frames,
            unit_scale,
            out,
        } => {
            let clips = match (bvh, synthetic) {
                (Some(dir), _) => load_bvh_corpus(&dir, unit_scale)?,
                (None, Some(n)) => synthetic_corpus(n, frames, cfg.dataset.seed),
                (None, None) => return Err(Failure(2, anyhow::anyhow!("pass --bvh <dir> or --synthetic <count>"))),
            };
            let ds = Dataset::build(&clips, &cfg.dataset).map_err(anyhow::Error::from)?;
            ds.write(&out).map_err(anyhow::Error::from)?;
            for (c, n) in &ds.manifest.category_frames {
                info!("{c}: {n} frames ({:.1}%)", 100.0 * ds.manifest.category_ratio[c]);
            }
            println!("{} clips, {} frames -> {}", ds.clips.len(), ds.total_frames(), out.display());
        }
        Command::Train { data, out, epochs } => {
            let ds = Dataset::load(&data).map_err(anyhow::Error::from)?;
            let mut tc = cfg.train.clone();
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            let outcome = train(&ds, tc, Some(&out)).map_err(anyhow::Error::from)?;
            if let Some(last) = outcome.curve.last() {
                println!("epoch {} total loss {:.6}", last.epoch, last.total);
            }
        }
        Command::Eval {
            data,
            checkpoint,
            out,
            frames_csv,
        } => {
            let ds = Dataset::load(&data).map_err(anyhow::Error::from)?;
            let params = load_checkpoint(&checkpoint)?;
            let config_hash = sha256_hex(serde_json::to_string(&cfg.eval).context("config")?.as_bytes());
            let ckpt = file_digest(&checkpoint).map_err(anyhow::Error::from)?;
            let manifest = fs::read(manifest_path(&data)).context("reading manifest")?;
            let (report, records) = evaluate(&ds, &params, &cfg.eval, (&config_hash, &ckpt, &sha256_hex(&manifest)))
                .map_err(anyhow::Error::from)?;
            write_report(&report, &out).map_err(anyhow::Error::from)?;
            if let Some(p) = frames_csv {
                write_frame_csv(&records, &p).map_err(anyhow::Error::from)?;
            }
            let t = &report.total;
            println!(
                "contact {:.2}%  rotation {:.2} deg  position {:.2} cm  ({} frames)",
                100.0 * t.contact_accuracy,
                t.rotational_error_deg,
                t.positional_error_cm,
                t.frames
            );
        }
        Command::Replay {
            recording,
            checkpoint,
            out,
            bvh,
            calibration,
            paced,
        } => {
            let frames = read_frames(&recording)?;
            let params = load_checkpoint(&checkpoint)?;
            let skeleton = Arc::new(Skeleton::standard());
            let cal = load_calibration(calibration.as_deref())?;
            let mut session = StreamSession::new(params, skeleton.clone(), cal, cfg.runtime.session)
                .map_err(anyhow::Error::from)?;
            let lines = if paced {
                let mut pacer = FramePacer::new(cfg.runtime.fps);
                let mut lines = Vec::new();
                for (i, f) in frames.iter().enumerate() {
                    pacer.wait();
                    let mut one = sparsepose::runtime::replay(std::slice::from_ref(f), &mut session)
                        .map_err(anyhow::Error::from)?;
                    for l in &mut one {
                        l.frame = i;
                    }
                    lines.extend(one);
                }
                lines
            } else {
                sparsepose::runtime::replay(&frames, &mut session).map_err(anyhow::Error::from)?
            };
            let w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            write_replay_jsonl(w, &lines).map_err(anyhow::Error::from)?;
            if let Some(p) = bvh {
                let text = write_replay_bvh(&lines, skeleton, cfg.runtime.fps).map_err(anyhow::Error::from)?;
                fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
            }
            println!("{} frames in, {} poses out", frames.len(), lines.len());
        }
        Command::Serve {
            checkpoint,
            address,
            calibration,
        } => {
            let params = load_checkpoint(&checkpoint)?;
            let cal = load_calibration(calibration.as_deref())?;
            let skeleton = Arc::new(Skeleton::standard());
            let addr = address.unwrap_or(cfg.runtime.address.clone());
            let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            info!("listening on {}", listener.local_addr().context("local address")?);
            let session_cfg = cfg.runtime.session;
            serve(
                listener,
                || StreamSession::new(params.clone(), skeleton.clone(), cal, session_cfg),
                cfg.runtime.max_connections,
            )
            .map_err(anyhow::Error::from)?;
        }
        Command::Calibrate { recording, out } => {
            let frames = read_frames(&recording)?;
            let cal = calibrate_recording(&frames, &Skeleton::standard()).map_err(anyhow::Error::from)?;
            fs::write(&out, cal.to_json()).with_context(|| format!("writing {}", out.display()))?;
            println!("height scale {:.4}", cal.height_scale);
        }
        Command::Gradcheck {
            hidden,
            latent,
            window,
            seed,
            tolerance,
        } => {
            let gc = GradCheckConfig {
                network: sparsepose::net::NetDims { hidden, latent },
                window,
                seed,
                tolerance,
                ..Default::default()
            };
            let report = check_training_gradients(&gc).map_err(anyhow::Error::from)?;
            println!("{}", serde_json::to_string_pretty(&report).context("report")?);
            if !report.passed {
                let e = anyhow::Error::new(NumericFailure(format!(
                    "max relative error {:.3e} exceeds {tolerance:.1e}",
                    report.max_relative_error
                )));
                return Err(Failure(4, e));
            }
        }
        Command::BvhInfo { file, unit_scale } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let opts = BvhOptions {
                unit_scale,
                name: file.display().to_string(),
                ..Default::default()
            };
            let clip = parse_bvh(&text, &opts).map_err(anyhow::Error::from)?;
            println!("{}", serde_json::to_string_pretty(&bvh_info(&clip)).context("info")?);
        }
    }
    Ok(())
}

fn load_bvh_corpus(dir: &Path, unit_scale: f64) -> Result<Vec<MotionClip>> {
    let standard = Arc::new(Skeleton::standard());
    let target_height = rest_pelvis_height(&standard)?;
    let mut files: Vec<PathBuf> = Vec::new();
    collect_bvh(dir, &mut files)?;
    files.sort();
    if files.is_empty() {
        bail!("no .bvh files under {}", dir.display());
    }
    let mut clips = Vec::with_capacity(files.len());
    for f in files {
        let category = f
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse::<Category>().ok())
            .unwrap_or(Category::Locomotion);
        let text = fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        let opts = BvhOptions {
            unit_scale,
            name: f.display().to_string(),
            category,
            ..Default::default()
        };
        let clip = parse_bvh(&text, &opts).with_context(|| format!("parsing {}", f.display()))?;
        let clip = resample(&clip, TARGET_FPS)?;
        let scale = target_height / rest_pelvis_height(&clip.skeleton)?;
        let clip = transfer_to(&retarget_scale(&clip, scale, 0.0)?, standard.clone())?;
        clips.push(clip);
    }
    Ok(clips)
}

fn collect_bvh(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = entry?.path();
        if p.is_dir() {
            collect_bvh(&p, out)?;
        } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("bvh")) {
            out.push(p);
        }
    }
    Ok(())
}
