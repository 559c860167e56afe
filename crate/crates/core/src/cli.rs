//! Command-line front end: `synth`, `fit`, `track`, `eval` and `sweep`.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or configuration,
//! 3 data format, 4 semantic mismatch.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{self, Alignment, KMeansConfig};
use crate::fitting::{FitConfig, FitResult, Fitter};
use crate::io::{self, frame_file, read_config, read_json, write_json, Sequence, SequenceConfig};
use crate::model::BodyModel;
use crate::skeleton::ModelParams;
use crate::tracking::{
    self, FileFlow, FlowProvider, IdentityFlow, OracleFlow, RefinedFrame, TrackConfig, TrackFrame,
};

#[derive(Debug, Parser)]
#[command(
    name = "pofcap",
    version,
    about = "Monocular articulated pose capture from part orientation fields"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "POFCAP_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sequence directory.
    Synth {
        /// Sequence configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit every frame of a sequence.
    Fit {
        /// Sequence directory written by `synth`.
        #[arg(long)]
        seq: PathBuf,
        /// Fitting configuration; the model and camera always come from the sequence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine per-frame fits over time.
    Track {
        /// Sequence directory written by `synth`.
        #[arg(long)]
        seq: PathBuf,
        /// Output directory of `fit`.
        #[arg(long)]
        fit: PathBuf,
        /// Source of per-frame flow targets.
        #[arg(long, value_enum, default_value_t = ProviderKind::Oracle)]
        provider: ProviderKind,
        /// Directory of flow target files for `--provider file` (defaults to the sequence's).
        #[arg(long)]
        flow: Option<PathBuf>,
        /// Tracking configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score fitted or refined parameters against ground truth.
    Eval {
        /// Output directory of `fit` or `track`.
        #[arg(long)]
        pred: PathBuf,
        /// Sequence directory holding the ground truth.
        #[arg(long)]
        gt: PathBuf,
        /// Alignment applied before measuring errors.
        #[arg(long, value_enum, default_value_t = AlignArg::Root)]
        align: AlignArg,
        /// Clustering configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize and fit one sequence per camera view and report the error grid.
    Sweep {
        /// Sequence configuration shared by every cell (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated camera azimuths (degrees).
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        azimuth: Vec<f64>,
        /// Comma-separated camera elevations (degrees).
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        elevation: Vec<f64>,
        /// Fitting configuration applied to every cell.
        #[arg(long)]
        fit_config: Option<PathBuf>,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Identity,
    Oracle,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    Root,
    None,
}

/// Written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub warnings: usize,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io(_) | Error::NotEnoughSamples { .. } | Error::Flow(_) => 2,
        Error::Container(_) | Error::Json(_) | Error::InvalidSkeleton(_) => 3,
        Error::JointSetMismatch(_) | Error::Dimension(_) => 4,
        _ => 1,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth { config, seed, out } => cmd_synth(config, *seed, out),
        Command::Fit { seq, config, out } => cmd_fit(seq, config.as_deref(), out),
        Command::Track {
            seq,
            fit,
            provider,
            flow,
            config,
            out,
        } => cmd_track(seq, fit, *provider, flow.as_deref(), config.as_deref(), out),
        Command::Eval {
            pred,
            gt,
            align,
            config,
            out,
        } => cmd_eval(pred, gt, *align, config.as_deref(), out),
        Command::Sweep {
            config,
            azimuth,
            elevation,
            fit_config,
            seed,
            out,
        } => cmd_sweep(
            config,
            azimuth,
            elevation,
            fit_config.as_deref(),
            *seed,
            out,
        ),
    })
}

fn hash_of<T: Serialize>(value: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

struct Timer {
    start: Instant,
    timings: BTreeMap<String, f64>,
}

impl Timer {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            timings: BTreeMap::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.timings
            .insert(name.to_string(), (now - self.start).as_secs_f64());
        self.start = now;
    }
}

fn finish(
    out: &Path,
    command: &str,
    config_hash: String,
    seed: Option<u64>,
    timer: Timer,
    outputs: Vec<String>,
    warnings: usize,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        seed,
        timings: timer.timings,
        outputs,
        warnings,
    };
    write_json(&out.join("run_manifest.json"), &manifest)
}

fn load_sequence_config(path: &Path, seed: Option<u64>) -> Result<SequenceConfig> {
    let mut config: SequenceConfig = read_config(path)?;
    if let Some(s) = seed {
        config.scene.seed = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn cmd_synth(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let config = load_sequence_config(config, seed)?;
    let mut timer = Timer::new();
    let manifest = io::write_sequence(out, &config)?;
    timer.lap("synth");
    let mut outputs = vec!["manifest.json".to_string(), manifest.gt.clone()];
    outputs.extend(manifest.observations.iter().cloned());
    outputs.extend(manifest.flow.iter().cloned());
    outputs.extend(manifest.fields.iter().flatten().cloned());
    outputs.extend(manifest.priors.iter().cloned());
    finish(
        out,
        "synth",
        hash_of(&config)?,
        Some(config.scene.seed),
        timer,
        outputs,
        0,
    )
}

/// One frame of `fit` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFit {
    pub index: usize,
    pub result: Option<FitResult>,
    /// Why the frame could not be fitted, if it could not.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub frames: usize,
    pub converged: usize,
    pub flagged: Vec<usize>,
}

fn fit_config_for(seq: &Sequence, path: Option<&Path>) -> Result<FitConfig> {
    let mut config: FitConfig = match path {
        Some(p) => read_config(p)?,
        None => FitConfig::default(),
    };
    config.model = seq.manifest.config.scene.model.clone();
    config.camera = seq.manifest.config.scene.camera;
    Ok(config)
}

/// Fit frames in parallel; frames without usable constraints are flagged.
fn fit_frames(seq: &Sequence, fitter: &Fitter) -> Result<Vec<FrameFit>> {
    (0..seq.len())
        .into_par_iter()
        .map(|i| {
            let obs = seq.observation(i)?;
            Ok(match fitter.fit_frame(&obs, None) {
                Ok(r) => FrameFit {
                    index: i,
                    result: Some(r),
                    flag: None,
                },
                Err(e @ (Error::NoConstraints | Error::NonFiniteResidual | Error::Singular(_))) => {
                    FrameFit {
                        index: i,
                        result: None,
                        flag: Some(e.to_string()),
                    }
                }
                Err(e) => return Err(e),
            })
        })
        .collect()
}

pub fn cmd_fit(seq_dir: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let seq = Sequence::open(seq_dir)?;
    let config = fit_config_for(&seq, config)?;
    let mut timer = Timer::new();
    let fitter = Fitter::new(config.clone(), seq.priors()?)?;
    timer.lap("load");
    let fits = fit_frames(&seq, &fitter)?;
    timer.lap("fit");
    fs::create_dir_all(out)?;
    let mut outputs = Vec::with_capacity(fits.len() + 1);
    for f in &fits {
        let name = frame_file(f.index, "json");
        write_json(&out.join(&name), f)?;
        outputs.push(name);
    }
    let summary = FitSummary {
        frames: fits.len(),
        converged: fits
            .iter()
            .filter(|f| f.result.as_ref().is_some_and(|r| r.converged))
            .count(),
        flagged: fits
            .iter()
            .filter(|f| f.flag.is_some())
            .map(|f| f.index)
            .collect(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    outputs.push("summary.json".into());
    let warnings = summary.flagged.len();
    if warnings > 0 {
        eprintln!(
            "warning: {warnings} frame(s) flagged: {:?}",
            summary.flagged
        );
    }
    timer.lap("write");
    finish(
        out,
        "fit",
        hash_of(&config)?,
        None,
        timer,
        outputs,
        warnings,
    )
}

/// Parameters stored in a `fit` or `track` frame file, if any.
pub fn params_from_json(value: &serde_json::Value) -> Result<Option<ModelParams>> {
    let node = if let Some(p) = value.get("params") {
        p
    } else if let Some(r) = value.get("result") {
        match r.get("params") {
            Some(p) => p,
            None if r.is_null() => return Ok(None),
            None => return Err(Error::Container("result without params".into())),
        }
    } else {
        return Err(Error::Container(
            "frame file has neither params nor result".into(),
        ));
    };
    serde_json::from_value(node.clone())
        .map(Some)
        .map_err(|e| Error::Container(format!("bad params: {e}")))
}

fn read_frame_params(dir: &Path, frames: usize) -> Result<Vec<Option<ModelParams>>> {
    (0..frames)
        .map(|i| {
            let path = dir.join(frame_file(i, "json"));
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "missing frame file {}",
                    path.display()
                )));
            }
            let v: serde_json::Value = read_json(&path)?;
            params_from_json(&v).map_err(|e| Error::Container(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub frames: usize,
    pub refined: usize,
    pub flagged: Vec<usize>,
    /// Frames without a per-frame fit that borrowed a neighbour's parameters.
    pub substituted: Vec<usize>,
    pub jitter_before: f64,
    pub jitter_after: f64,
}

pub fn cmd_track(
    seq_dir: &Path,
    fit_dir: &Path,
    provider: ProviderKind,
    flow: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let seq = Sequence::open(seq_dir)?;
    let config: TrackConfig = match config {
        Some(p) => read_config(p)?,
        None => TrackConfig::default(),
    };
    config.validate()?;
    let mut timer = Timer::new();
    let model = &seq.model;
    let priors = seq.priors()?;
    let fitted = read_frame_params(fit_dir, seq.len())?;
    let Some(first) = fitted.iter().position(Option::is_some) else {
        return Err(Error::Config("no fitted frame to refine".into()));
    };
    let mut substituted = Vec::new();
    let mut frames = Vec::with_capacity(seq.len());
    let mut last = fitted[first].clone().expect("present");
    for (i, p) in fitted.iter().enumerate() {
        let params = match p {
            Some(p) => {
                last = p.clone();
                p.clone()
            }
            None => {
                substituted.push(i);
                last.clone()
            }
        };
        model.check_params(&params)?;
        frames.push(TrackFrame {
            observation: seq.observation(i)?,
            params,
        });
    }
    let scene = &seq.manifest.config.scene;
    let camera = scene.camera;
    let gt;
    let identity;
    let oracle;
    let file;
    let provider: &dyn FlowProvider = match provider {
        ProviderKind::Identity => {
            identity = IdentityFlow { model, camera };
            &identity
        }
        ProviderKind::Oracle => {
            gt = seq.ground_truth()?;
            oracle = OracleFlow {
                model,
                camera,
                frames: &gt,
                sigma: seq.manifest.config.flow_sigma,
                seed: scene.seed,
            };
            &oracle
        }
        ProviderKind::File => {
            file = FileFlow {
                dir: flow.map_or_else(|| seq.flow_dir(), Path::to_path_buf),
                markers: model.skeleton.marker_count(),
            };
            for i in 1..seq.len() {
                if !file.path(i).is_file() {
                    return Err(Error::Config(format!(
                        "missing flow file {}",
                        file.path(i).display()
                    )));
                }
            }
            &file
        }
    };
    timer.lap("load");
    let refined = tracking::refine_sequence(
        model,
        &priors,
        &camera,
        &frames,
        provider,
        &config,
        &FitConfig::default().solver,
    )?;
    timer.lap("track");
    let before: Vec<ModelParams> = frames.iter().map(|f| f.params.clone()).collect();
    let after: Vec<ModelParams> = refined.iter().map(|r| r.params.clone()).collect();
    let jb = tracking::jitter(&tracking::joint_tracks(model, &before)?);
    let ja = tracking::jitter(&tracking::joint_tracks(model, &after)?);
    fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    for (i, r) in refined.iter().enumerate() {
        let name = frame_file(i, "json");
        write_json(&out.join(&name), r)?;
        outputs.push(name);
    }
    fs::write(
        out.join("jitter.csv"),
        format!("series,jitter_cm\nbefore,{jb}\nafter,{ja}\n"),
    )?;
    let summary = TrackSummary {
        frames: refined.len(),
        refined: refined.iter().filter(|r| r.refined).count(),
        flagged: flagged(&refined),
        substituted,
        jitter_before: jb,
        jitter_after: ja,
    };
    write_json(&out.join("summary.json"), &summary)?;
    outputs.extend(["jitter.csv".to_string(), "summary.json".to_string()]);
    println!("jitter before {jb:.6} cm, after {ja:.6} cm");
    let warnings = summary.flagged.len() + summary.substituted.len();
    if warnings > 0 {
        eprintln!(
            "warning: {} frame(s) passed through, {} without a fit",
            summary.flagged.len(),
            summary.substituted.len()
        );
    }
    timer.lap("write");
    finish(
        out,
        "track",
        hash_of(&config)?,
        None,
        timer,
        outputs,
        warnings,
    )
}

fn flagged(refined: &[RefinedFrame]) -> Vec<usize> {
    refined
        .iter()
        .enumerate()
        .filter(|(_, r)| r.flag.is_some())
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub frames: usize,
    pub evaluated: usize,
    pub missing: Vec<usize>,
    pub alignment: Alignment,
    pub mpjpe_cm: Option<f64>,
    /// Area under the PCK curve over 20-50 mm.
    pub pck_auc: Option<f64>,
    pub clusters: Option<usize>,
}

/// Joint positions in a frame file: explicit `joints` or posed `params`.
fn predicted_joints(
    model: &BodyModel,
    value: &serde_json::Value,
) -> Result<Option<Vec<Vector3<f64>>>> {
    if let Some(j) = value.get("joints") {
        return serde_json::from_value(j.clone())
            .map(Some)
            .map_err(|e| Error::Container(format!("bad joints: {e}")));
    }
    match params_from_json(value)? {
        Some(p) => {
            model
                .check_params(&p)
                .map_err(|e| Error::JointSetMismatch(e.to_string()))?;
            Ok(Some(model.pose(&p)?.positions))
        }
        None => Ok(None),
    }
}

pub fn cmd_eval(
    pred: &Path,
    gt_dir: &Path,
    align: AlignArg,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let seq = Sequence::open(gt_dir)?;
    let kconf: KMeansConfig = match config {
        Some(p) => read_config(p)?,
        None => KMeansConfig::default(),
    };
    let mut timer = Timer::new();
    let gt = seq.ground_truth()?;
    let alignment = match align {
        AlignArg::Root => Alignment::Root,
        AlignArg::None => Alignment::None,
    };
    let root = seq.model.skeleton.root();
    let mut per_frame: Vec<Option<f64>> = Vec::with_capacity(gt.len());
    let mut all_errors_mm = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        let path = pred.join(frame_file(i, "json"));
        if !path.is_file() {
            return Err(Error::Config(format!(
                "missing prediction {}",
                path.display()
            )));
        }
        let v: serde_json::Value = read_json(&path)?;
        match predicted_joints(&seq.model, &v)? {
            Some(j) => {
                let e = eval::joint_errors(&j, &g.joints, alignment, root)?;
                all_errors_mm.extend(e.iter().map(|x| 10.0 * x));
                per_frame.push(Some(e.iter().sum::<f64>() / e.len() as f64));
            }
            None => per_frame.push(None),
        }
    }
    timer.lap("score");
    fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    let mut csv = String::from("frame,mpjpe_cm\n");
    for (i, e) in per_frame.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{}",
            e.map_or_else(|| "NA".to_string(), |x| x.to_string())
        );
    }
    fs::write(out.join("per_frame.csv"), csv)?;
    outputs.push("per_frame.csv".to_string());
    let scored: Vec<(usize, f64)> = per_frame
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|e| (i, e)))
        .collect();
    let pck = if all_errors_mm.is_empty() {
        None
    } else {
        let c = eval::pck_auc(&all_errors_mm, 20.0, 50.0, 31)?;
        fs::write(out.join("pck.csv"), c.to_csv())?;
        outputs.push("pck.csv".to_string());
        Some(c.auc)
    };
    let clusters = if scored.len() >= kconf.k && kconf.k > 0 {
        let poses: Vec<Vec<Vector3<f64>>> =
            scored.iter().map(|&(i, _)| gt[i].joints.clone()).collect();
        let c = eval::pose_clusters(&poses, root, &kconf, seq.manifest.config.scene.seed)?;
        let errs: Vec<f64> = scored.iter().map(|s| s.1).collect();
        let means = c.mean_errors(&errs)?;
        let mut csv = String::from("cluster,count,mean_mpjpe_cm\n");
        for (k, m) in means.iter().enumerate() {
            let n = c.assignments.iter().filter(|&&a| a == k).count();
            let _ = writeln!(
                csv,
                "{k},{n},{}",
                m.map_or_else(|| "NA".to_string(), |x| x.to_string())
            );
        }
        fs::write(out.join("clusters.csv"), csv)?;
        outputs.push("clusters.csv".to_string());
        Some(kconf.k)
    } else {
        None
    };
    let summary = EvalSummary {
        frames: gt.len(),
        evaluated: scored.len(),
        missing: per_frame
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_none())
            .map(|(i, _)| i)
            .collect(),
        alignment,
        mpjpe_cm: (!scored.is_empty())
            .then(|| scored.iter().map(|s| s.1).sum::<f64>() / scored.len() as f64),
        pck_auc: pck,
        clusters,
    };
    write_json(&out.join("summary.json"), &summary)?;
    outputs.push("summary.json".to_string());
    if let Some(m) = summary.mpjpe_cm {
        println!("mpjpe {m:.6} cm over {} frame(s)", summary.evaluated);
    }
    timer.lap("write");
    finish(
        out,
        "eval",
        hash_of(&(alignment, kconf))?,
        None,
        timer,
        outputs,
        summary.missing.len(),
    )
}

/// Result of one sweep cell, written when the cell completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub azimuth: f64,
    pub elevation: f64,
    /// Root-aligned MPJPE of every fitted frame (cm).
    pub errors: Vec<f64>,
    pub flagged: usize,
}

pub fn cell_dir_name(azimuth: f64, elevation: f64) -> String {
    format!("az{azimuth}_el{elevation}")
}

fn run_cell(
    base: &SequenceConfig,
    fit: Option<&Path>,
    az: f64,
    el: f64,
    dir: &Path,
) -> Result<CellResult> {
    let result_path = dir.join("result.json");
    if result_path.is_file() {
        return read_json(&result_path);
    }
    let mut config = base.clone();
    config.scene.azimuth = az;
    config.scene.elevation = el;
    let seq_dir = dir.join("seq");
    io::write_sequence(&seq_dir, &config)?;
    let seq = Sequence::open(&seq_dir)?;
    let fitter = Fitter::new(fit_config_for(&seq, fit)?, seq.priors()?)?;
    let gt = seq.ground_truth()?;
    let root = seq.model.skeleton.root();
    let mut errors = Vec::new();
    let mut flagged = 0;
    for (i, g) in gt.iter().enumerate() {
        match fitter.fit_frame(&seq.observation(i)?, None) {
            Ok(r) => {
                let j = seq.model.pose(&r.params)?.positions;
                errors.push(eval::mpjpe(&j, &g.joints, Alignment::Root, root)?);
            }
            Err(Error::NoConstraints | Error::NonFiniteResidual | Error::Singular(_)) => {
                flagged += 1
            }
            Err(e) => return Err(e),
        }
    }
    let result = CellResult {
        azimuth: az,
        elevation: el,
        errors,
        flagged,
    };
    // written last: its presence marks the cell complete
    write_json(&result_path, &result)?;
    Ok(result)
}

pub fn cmd_sweep(
    config: &Path,
    azimuths: &[f64],
    elevations: &[f64],
    fit: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let base = load_sequence_config(config, seed)?;
    if let Some(p) = fit {
        let _: FitConfig = read_config(p)?;
    }
    if azimuths.iter().chain(elevations).any(|v| !v.is_finite()) {
        return Err(Error::Config("view angles must be finite".into()));
    }
    let mut timer = Timer::new();
    let cells: Vec<(f64, f64)> = azimuths
        .iter()
        .flat_map(|&a| elevations.iter().map(move |&e| (a, e)))
        .collect();
    fs::create_dir_all(out.join("cells"))?;
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(a, e)| {
            run_cell(
                &base,
                fit,
                a,
                e,
                &out.join("cells").join(cell_dir_name(a, e)),
            )
        })
        .collect::<Result<_>>()?;
    timer.lap("cells");
    let flat: Vec<(f64, f64, f64)> = results
        .iter()
        .flat_map(|r| r.errors.iter().map(move |&e| (r.azimuth, r.elevation, e)))
        .collect();
    let grid = eval::view_sweep_report(&flat, azimuths, elevations);
    fs::write(out.join("grid.csv"), grid.to_csv())?;
    write_json(&out.join("grid.json"), &grid)?;
    let mut outputs = vec!["grid.csv".to_string(), "grid.json".to_string()];
    outputs.extend(
        cells
            .iter()
            .map(|&(a, e)| format!("cells/{}/result.json", cell_dir_name(a, e))),
    );
    let warnings = results.iter().map(|r| r.flagged).sum();
    timer.lap("report");
    finish(
        out,
        "sweep",
        hash_of(&(&base, azimuths, elevations))?,
        Some(base.scene.seed),
        timer,
        outputs,
        warnings,
    )
}
