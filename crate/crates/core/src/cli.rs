//! Command-line front end. Every subcommand is also a plain function so the
//! whole pipeline can be driven from code.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
//! 3 I/O or malformed file, 4 non-finite loss, 5 checkpoint/architecture
//! mismatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::datagen::{build_patch_sequences, desk_corpus, make_scene, DatasetConfig, FlowConfig};
use crate::error::{Error, Result};
use crate::evaluation::{derivative_errors, latent_frequency_score, latent_series, nn_track, DerivativeErrors};
use crate::io::{self, Checkpoint, DatasetHeader};
use crate::patchpipe::{centers_at, track_centers, upsample_frame, PatchLayout};
use crate::rng::RngStream;
use crate::trainer::{evaluate, train_from, LossVariant, MetricsRecord, TrainState};
use crate::PointCloud;

/// Maps an error to the documented process exit code.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InsufficientFrames(_) | Error::UnknownField(_) | Error::InvalidDimension(_) => 2,
        Error::Io(_) | Error::Format(_) => 3,
        Error::NonFiniteLoss { .. } => 4,
        Error::ArchMismatch(_) | Error::TraceMismatch(_) => 5,
        _ => 1,
    }
}

#[derive(Debug, Parser)]
#[command(name = "tranquil", about = "Temporally coherent point cloud upsampling")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run configuration (key = value); desk defaults otherwise.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured loss variant.
    #[arg(long, global = true)]
    pub variant: Option<LossVariant>,
    /// Primary output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured width multiplier.
    #[arg(long = "width-mult", global = true)]
    pub width_mult: Option<f64>,
    /// Where to write the CSV report (stdout if absent).
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the synthetic corpus and write a triplet dataset.
    Gen,
    /// Simulate one flow and write high- and low-resolution sequences.
    Simulate {
        #[arg(long, default_value = "taylor-green-vortex")]
        field: String,
        /// Low-resolution sequence output.
        #[arg(long)]
        low: PathBuf,
    },
    /// Train on a dataset and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Upsample a low-resolution sequence.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Held-out metrics for one or more checkpoints.
    Eval {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Low-resolution sequence for tracking metrics (needs --reference).
        #[arg(long, requires = "reference")]
        input: Option<PathBuf>,
        /// Index-corresponded high-resolution reference sequence.
        #[arg(long, requires = "input")]
        reference: Option<PathBuf>,
    },
    /// Temporal frequency score of the latent space.
    LatentFreq {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        sequences: usize,
        #[arg(long, default_value_t = 32)]
        steps: usize,
        /// Also score randomly reordered frames.
        #[arg(long)]
        shuffled: bool,
    },
    /// Export one frame of a sequence as ASCII PLY.
    Ply {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::parse(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    if let Some(v) = common.variant {
        cfg.train.loss_variant = v;
    }
    if let Some(w) = common.width_mult {
        cfg.train.width_mult = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("--out is required for {what}")))
}

/// Generates the corpus; returns the `kind,value,count` histogram CSV.
pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<String> {
    let c = &cfg.corpus;
    let (_, triplets) = desk_corpus(
        cfg.train.dim,
        &cfg.layout,
        c.n_points,
        c.frames,
        c.scenes_per_field,
        c.triplets,
        &mut RngStream::new(cfg.train.seed, 0),
    )?;
    let header = DatasetHeader {
        dim: cfg.train.dim,
        r: cfg.layout.r,
        k_max: cfg.layout.k_max,
        n_max: cfg.layout.n_max,
    };
    io::save_dataset(out, header, &triplets)?;
    let mut k_hist = std::collections::BTreeMap::new();
    let mut n_hist = std::collections::BTreeMap::new();
    for t in &triplets {
        *k_hist.entry(t.k()).or_insert(0usize) += 1;
        *n_hist.entry(t.n()).or_insert(0usize) += 1;
    }
    let mut csv = String::from("kind,value,count\n");
    for (kind, h) in [("k", &k_hist), ("n", &n_hist)] {
        for (v, count) in h {
            let _ = writeln!(csv, "{kind},{v},{count}");
        }
    }
    Ok(csv)
}

/// Simulates one flow; writes both resolutions.
pub fn cmd_simulate(cfg: &RunConfig, field: &str, high: &Path, low: &Path) -> Result<String> {
    let mut flow = FlowConfig::new(field.parse()?, cfg.corpus.n_points, cfg.corpus.frames);
    flow.dim = cfg.train.dim;
    let data = DatasetConfig::for_layout(&cfg.layout, cfg.train.dim, 0);
    let scene = make_scene(&flow, &data, &mut RngStream::new(cfg.train.seed, 0))?;
    io::save_sequence(high, cfg.train.dim, &scene.high)?;
    io::save_sequence(low, cfg.train.dim, &scene.low.frames)?;
    let mut csv = String::from("frame,high_points,low_points\n");
    for (f, (h, l)) in scene.high.iter().zip(&scene.low.frames).enumerate() {
        let _ = writeln!(csv, "{f},{},{}", h.len(), l.len());
    }
    Ok(csv)
}

/// Splits a dataset into training and held-out parts.
fn split<T>(items: &[T], held_out: usize) -> (&[T], &[T]) {
    items.split_at(items.len().saturating_sub(held_out))
}

/// Trains (or resumes) and writes the checkpoint; returns the step CSV with
/// the held-out metrics appended after a blank line.
pub fn cmd_train(cfg: &RunConfig, data: &Path, resume: Option<&Path>, out: &Path) -> Result<String> {
    let (_, triplets) = io::load_dataset(data)?;
    let (train_set, held) = split(&triplets, cfg.corpus.held_out);
    let mut state = match resume {
        Some(p) => {
            let state = io::load_checkpoint(p)?.into_state();
            io::check_arch(&state.params, &cfg.train.arch()?)?;
            state
        }
        None => TrainState::new(&cfg.train)?,
    };
    let remaining = cfg.train.epochs.saturating_sub(state.epoch);
    let held = (!held.is_empty()).then_some(held);
    let report = train_from(&mut state, train_set, held, &cfg.train, remaining)?;
    io::save_checkpoint(out, &Checkpoint::from_state(&state))?;
    let mut csv = report.to_csv();
    if let Some(m) = &report.final_metrics {
        let _ = write!(csv, "\n{}\n{}\n", MetricsRecord::CSV_HEADER, m.csv_row());
    }
    Ok(csv)
}

fn layout_for(cfg: &RunConfig, ck: &Checkpoint) -> Result<PatchLayout> {
    let a = ck.params.arch();
    PatchLayout::new(cfg.layout.low_radius, cfg.layout.high_radius, a.k_max, a.r)
}

/// Upsamples every frame; empty frames stay empty and centers are tracked
/// anew after each gap.
pub fn upsample_sequence(
    params: &crate::network::ModelParams,
    frames: &[PointCloud],
    layout: &PatchLayout,
    band_width: f64,
    rng: &mut RngStream,
) -> Result<Vec<PointCloud>> {
    let dim = params.arch().dim;
    let mut out = Vec::with_capacity(frames.len());
    let mut start = 0;
    while start < frames.len() {
        if frames[start].is_empty() {
            out.push(PointCloud::empty(dim)?.with_frame(frames[start].frame));
            start += 1;
            continue;
        }
        let end = (start..frames.len()).find(|&i| frames[i].is_empty()).unwrap_or(frames.len());
        let run = &frames[start..end];
        let centers = track_centers(run, layout, band_width, rng)?;
        for (i, f) in run.iter().enumerate() {
            out.push(upsample_frame(params, f, &centers_at(&centers, i), layout)?.with_frame(f.frame));
        }
        start = end;
    }
    Ok(out)
}

/// Runs inference; returns `frame,input_points,output_points,factor`.
pub fn cmd_infer(cfg: &RunConfig, model: &Path, input: &Path, out: &Path) -> Result<String> {
    let ck = io::load_checkpoint(model)?;
    let (dim, frames) = io::load_sequence(input)?;
    if dim != ck.params.arch().dim {
        return Err(Error::ArchMismatch(format!(
            "sequence is {dim}D, checkpoint is {}D",
            ck.params.arch().dim
        )));
    }
    let layout = layout_for(cfg, &ck)?;
    let band = DatasetConfig::for_layout(&layout, dim, 0).low_spacing;
    let gen = upsample_sequence(&ck.params, &frames, &layout, band, &mut RngStream::new(cfg.train.seed, 11))?;
    io::save_sequence(out, dim, &gen)?;
    let mut csv = String::from("frame,input_points,output_points,factor\n");
    for (f, (a, b)) in frames.iter().zip(&gen).enumerate() {
        let factor = if a.is_empty() { 0.0 } else { b.len() as f64 / a.len() as f64 };
        let _ = writeln!(csv, "{f},{},{},{factor:.6}", a.len(), b.len());
    }
    Ok(csv)
}

fn model_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Long-format `model,metric,value` rows for each checkpoint.
pub fn cmd_eval(
    cfg: &RunConfig,
    models: &[PathBuf],
    data: Option<&Path>,
    tracking: Option<(&Path, &Path)>,
) -> Result<String> {
    if data.is_none() && tracking.is_none() {
        return Err(Error::Config("eval needs --data or --input with --reference".into()));
    }
    let triplets = data.map(io::load_dataset).transpose()?.map(|(_, t)| t);
    let seqs = tracking
        .map(|(low, high)| Ok::<_, Error>((io::load_sequence(low)?.1, io::load_sequence(high)?.1)))
        .transpose()?;
    let mut csv = String::from("model,metric,value\n");
    for path in models {
        let ck = io::load_checkpoint(path)?;
        let label = model_label(path);
        if let Some(t) = &triplets {
            let (_, held) = split(t, cfg.corpus.held_out.min(t.len()));
            let held = if held.is_empty() { &t[..] } else { held };
            let m = evaluate(&ck.params, held)?;
            for (name, v) in [
                ("L_S", m.ls),
                ("L_N", m.ln),
                ("L_M", m.lm),
                ("L_2V", m.l2v),
                ("L_2A", m.l2a),
                ("L_EV", m.lev),
                ("L_EA", m.lea),
            ] {
                let _ = writeln!(csv, "{label},{name},{v:.9e}");
            }
        }
        if let Some((low, high)) = &seqs {
            let layout = layout_for(cfg, &ck)?;
            let band = DatasetConfig::for_layout(&layout, cfg.train.dim, 0).low_spacing;
            let gen = upsample_sequence(&ck.params, low, &layout, band, &mut RngStream::new(cfg.train.seed, 11))?;
            let e: DerivativeErrors = derivative_errors(&nn_track(&gen, high)?, high)?;
            for (name, v) in [
                ("velocity_error", e.velocity_error),
                ("acceleration_error", e.acceleration_error),
                ("density_d1_variance", e.density_d1_variance),
                ("density_d2_variance", e.density_d2_variance),
                ("undefined", e.undefined as f64),
            ] {
                let _ = writeln!(csv, "{label},{name},{v:.9e}");
            }
        }
    }
    Ok(csv)
}

/// `model,order,score` rows; with `spectrum_out`, also writes the spectra.
pub fn cmd_latent_freq(
    cfg: &RunConfig,
    models: &[PathBuf],
    input: &Path,
    sequences: usize,
    steps: usize,
    shuffled: bool,
    spectrum_out: Option<&Path>,
) -> Result<String> {
    let (_, frames) = io::load_sequence(input)?;
    let mut csv = String::from("model,order,score\n");
    let mut spectra = String::from("model,order,frequency,amplitude\n");
    for path in models {
        let ck = io::load_checkpoint(path)?;
        let layout = layout_for(cfg, &ck)?;
        let seqs = build_patch_sequences(&frames, &layout, sequences, steps, &mut RngStream::new(cfg.train.seed, 5))?;
        let label = model_label(path);
        let mut runs = vec![("ordered", latent_series(&ck.params, &seqs, None)?)];
        if shuffled {
            let mut rng = RngStream::new(cfg.train.seed, 6);
            runs.push(("shuffled", latent_series(&ck.params, &seqs, Some(&mut rng))?));
        }
        for (order, series) in runs {
            let res = latent_frequency_score(&series)?;
            let _ = writeln!(csv, "{label},{order},{:.9e}", res.score);
            for (f, a) in &res.spectrum {
                let _ = writeln!(spectra, "{label},{order},{f},{a:.9e}");
            }
        }
    }
    if let Some(p) = spectrum_out {
        std::fs::write(p, spectra)?;
    }
    Ok(csv)
}

/// Writes one frame as PLY.
pub fn cmd_ply(input: &Path, frame: usize, out: &Path) -> Result<String> {
    let (_, frames) = io::load_sequence(input)?;
    let cloud = frames
        .get(frame)
        .ok_or_else(|| Error::Config(format!("frame {frame} out of range ({} frames)", frames.len())))?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    io::write_ply(&mut w, cloud)?;
    std::io::Write::flush(&mut w)?;
    Ok(format!("frame,points\n{frame},{}\n", cloud.len()))
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    let cfg = resolve_config(c)?;
    let csv = match &cli.command {
        Command::Gen => cmd_gen(&cfg, required(&c.out, "gen")?)?,
        Command::Simulate { field, low } => cmd_simulate(&cfg, field, required(&c.out, "simulate")?, low)?,
        Command::Train { data, resume } => cmd_train(&cfg, data, resume.as_deref(), required(&c.out, "train")?)?,
        Command::Infer { model, input } => cmd_infer(&cfg, model, input, required(&c.out, "infer")?)?,
        Command::Eval {
            models,
            data,
            input,
            reference,
        } => {
            let tracking = input.as_deref().zip(reference.as_deref());
            cmd_eval(&cfg, models, data.as_deref(), tracking)?
        }
        Command::LatentFreq {
            models,
            input,
            sequences,
            steps,
            shuffled,
        } => cmd_latent_freq(&cfg, models, input, *sequences, *steps, *shuffled, c.out.as_deref())?,
        Command::Ply { input, frame } => cmd_ply(input, *frame, required(&c.out, "ply")?)?,
    };
    match &c.csv {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
