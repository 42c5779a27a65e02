//! The `phaco` subcommands. Every file is written atomically; a failure
//! leaves earlier outputs untouched.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use phaco_core::io::{read_features, read_gray, write_atomic, write_features, write_gray, write_mask, FeatureMatrix};
use phaco_core::metrics::{default_phase_palette, mean_sd, ribbon_export, ConfusionMatrix, MeanSd};
use phaco_core::par::Exec;
use phaco_core::synth::{features_for_labels, gen_features, gen_scene, FeatureGenSpec, SceneSpec};
use phaco_lssat::{train_toy, LabeledSequence, LsSatConfig, TrainReport};

use crate::config::Config;
use crate::manifest::{FrameEntry, Manifest, SessionMeta};
use crate::pipeline::{run_session, FrameResult, SessionState};
use crate::render::{rasterize, svg_overlay};
use crate::PhacoError;

#[derive(Debug, Parser)]
#[command(name = "phaco", version, about = "Phase-specific AR guidance for cataract surgery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session or a feature training set.
    Synth(SynthArgs),
    /// Run the guidance pipeline over a manifest.
    Run(RunArgs),
    /// Train the phase recognizer on a feature dataset.
    Train(TrainArgs),
    /// Score results against the manifest's ground truth.
    Eval(EvalArgs),
    /// Draw cue overlays from a results file.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frames in a scene session.
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Scene session with masks, gray frames and a manifest (default).
    #[arg(long, conflicts_with = "features")]
    pub scene: bool,
    /// Feature sequences with labels, for training.
    #[arg(long)]
    pub features: bool,
    /// Attach one feature vector per scene frame.
    #[arg(long)]
    pub with_features: bool,
    #[arg(long, default_value_t = 10)]
    pub phases: usize,
    /// Sequences in a feature dataset.
    #[arg(long, default_value_t = 8)]
    pub sequences: usize,
    #[arg(long, default_value_t = 2048)]
    pub dim: usize,
    /// Intra-class feature spread.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub center_scale: f64,
    /// Noise multiplier near phase transitions.
    #[arg(long, default_value_t = 4.0)]
    pub boundary_scale: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Take phases from the manifest instead of the recognizer.
    #[arg(long)]
    pub geometry_only: bool,
    /// Also write one SVG overlay per frame.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `dataset.json` written by `synth --features`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RenderFormat {
    Svg,
    Png,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = RenderFormat::Svg)]
    pub format: RenderFormat,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<(), PhacoError> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Run(a) => run(&a).map(|_| ()),
        Command::Train(a) => train(&a).map(|_| ()),
        Command::Eval(a) => eval(&a).map(|_| ()),
        Command::Render(a) => render(&a),
    }
}

fn create_dir(path: &Path) -> Result<(), PhacoError> {
    std::fs::create_dir_all(path).map_err(|e| PhacoError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PhacoError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Labels and feature file of one training sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub features: PathBuf,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub dim: usize,
    pub phases: usize,
    pub seed: u64,
    pub sequences: Vec<DatasetEntry>,
}

fn feature_spec(a: &SynthArgs) -> FeatureGenSpec {
    FeatureGenSpec {
        phases: a.phases,
        dim: a.dim,
        seed: a.seed,
        center_scale: a.center_scale,
        sigma: a.sigma,
        boundary_sigma_scale: a.boundary_scale,
        ..FeatureGenSpec::default()
    }
}

pub fn synth(a: &SynthArgs) -> Result<(), PhacoError> {
    let invalid = |msg: String| PhacoError::Invalid { path: a.out.clone(), msg };
    if a.phases == 0 {
        return Err(PhacoError::Usage("--phases must be positive".into()));
    }
    create_dir(&a.out)?;
    if a.features {
        let spec = feature_spec(a);
        let seqs = gen_features(&spec, a.sequences).map_err(|e| invalid(e.to_string()))?;
        let mut entries = Vec::new();
        for (i, s) in seqs.iter().enumerate() {
            let rel = PathBuf::from(format!("seq_{i:03}.feat"));
            let m = FeatureMatrix { frames: s.frames(), dim: s.dim, data: s.data.clone() };
            write_features(&a.out.join(&rel), &m)?;
            entries.push(DatasetEntry { features: rel, labels: s.labels.clone() });
        }
        let ds = Dataset { dim: a.dim, phases: a.phases, seed: a.seed, sequences: entries };
        return write_json(&a.out.join("dataset.json"), &ds);
    }

    let spec = SceneSpec::scripted(a.seed, a.frames, a.phases);
    let frames = gen_scene(&spec, a.frames, Exec::default()).map_err(|e| invalid(e.to_string()))?;
    let features = if a.with_features {
        Some(features_for_labels(&feature_spec(a), &spec.phases, 0).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };
    for d in ["masks", "gray", "features"] {
        if d != "features" || features.is_some() {
            create_dir(&a.out.join(d))?;
        }
    }
    let mut entries = Vec::with_capacity(frames.len());
    for f in &frames {
        let mask = PathBuf::from(format!("masks/{:06}.pgm", f.index));
        let gray = PathBuf::from(format!("gray/{:06}.pgm", f.index));
        write_mask(&a.out.join(&mask), &f.mask)?;
        write_gray(&a.out.join(&gray), &f.gray)?;
        let feature = match &features {
            Some(fs) => {
                let rel = PathBuf::from(format!("features/{:06}.feat", f.index));
                let m = FeatureMatrix { frames: 1, dim: fs.dim, data: fs.row(f.index).to_vec() };
                write_features(&a.out.join(&rel), &m)?;
                Some(rel)
            }
            None => None,
        };
        entries.push(FrameEntry {
            index: f.index,
            mask,
            gray,
            feature,
            gt_phase: Some(f.truth.phase),
            gt_theta: Some(f.truth.theta_deg),
        });
    }
    let manifest = Manifest {
        meta: SessionMeta { phases: a.phases, width: spec.width, height: spec.height, seed: a.seed },
        frames: entries,
        root: PathBuf::new(),
    };
    manifest.save(&a.out.join("manifest.json"))
}

fn load_config(path: Option<&Path>) -> Result<Option<Config>, PhacoError> {
    path.map(Config::load).transpose()
}

/// Streams lines into a temp file beside `path`; `finish` renames it.
struct AtomicLines {
    path: PathBuf,
    out: BufWriter<tempfile::NamedTempFile>,
}

impl AtomicLines {
    fn create(path: PathBuf) -> Result<Self, PhacoError> {
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
        let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| PhacoError::io(&dir, e))?;
        Ok(Self { path, out: BufWriter::new(tmp) })
    }

    fn line(&mut self, s: &str) -> Result<(), PhacoError> {
        writeln!(self.out, "{s}").map_err(|e| PhacoError::io(&self.path, e))
    }

    fn finish(self) -> Result<(), PhacoError> {
        let path = self.path;
        let tmp = self.out.into_inner().map_err(|e| PhacoError::io(&path, e.into_error()))?;
        tmp.persist(&path).map_err(|e| PhacoError::io(&path, e.error))?;
        Ok(())
    }
}

pub fn run(a: &RunArgs) -> Result<crate::SessionSummary, PhacoError> {
    let manifest = Manifest::load(&a.manifest)?;
    let mut cfg = match load_config(a.config.as_deref())? {
        Some(c) => {
            if c.phases != manifest.meta.phases {
                return Err(PhacoError::Invalid {
                    path: a.config.clone().expect("config given"),
                    msg: format!("phases = {} but the manifest has {}", c.phases, manifest.meta.phases),
                });
            }
            c
        }
        None => Config::with_phases(manifest.meta.phases),
    };
    cfg.exec = Exec::Sequential;
    let model = match (&a.weights, a.geometry_only) {
        (_, true) => None,
        (Some(w), false) => {
            let m = phaco_lssat::weights::load(w)?;
            if m.config().phases != cfg.phases {
                return Err(PhacoError::Invalid {
                    path: w.clone(),
                    msg: format!("model predicts {} phases, session has {}", m.config().phases, cfg.phases),
                });
            }
            Some(m)
        }
        (None, false) => return Err(PhacoError::Usage("run needs --weights or --geometry-only".into())),
    };
    create_dir(&a.out)?;
    if a.svg {
        create_dir(&a.out.join("overlays"))?;
    }
    let mut state = match &model {
        Some(m) => SessionState::with_model(m),
        None => SessionState::geometry_only(),
    };
    let mut results = AtomicLines::create(a.out.join("results.jsonl"))?;
    let mut timings = AtomicLines::create(a.out.join("timings.jsonl"))?;
    let bundles = (0..manifest.frames.len()).map(|i| manifest.bundle(i, a.geometry_only));
    let summary = run_session(&mut state, bundles, &cfg, |r| {
        results.line(&serde_json::to_string(r).expect("serializable"))?;
        let t = serde_json::json!({ "index": r.index, "ms": r.timings });
        timings.line(&t.to_string())?;
        if a.svg {
            let doc = svg_overlay(manifest.meta.width, manifest.meta.height, &r.cues, &cfg.palette, None);
            write_atomic(&a.out.join(format!("overlays/{:06}.svg", r.index)), doc.as_bytes())?;
        }
        Ok(())
    })?;
    results.finish()?;
    timings.finish()?;
    write_json(&a.out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn load_dataset(path: &Path) -> Result<(Dataset, Vec<LabeledSequence>), PhacoError> {
    let text = std::fs::read_to_string(path).map_err(|e| PhacoError::io(path, e))?;
    let ds: Dataset =
        serde_json::from_str(&text).map_err(|e| PhacoError::Invalid { path: path.to_path_buf(), msg: e.to_string() })?;
    let root = path.parent().unwrap_or(Path::new(""));
    let mut seqs = Vec::with_capacity(ds.sequences.len());
    for e in &ds.sequences {
        let fp = root.join(&e.features);
        let m = read_features(&fp)?;
        if m.dim != ds.dim || m.frames != e.labels.len() {
            return Err(PhacoError::Invalid {
                path: fp,
                msg: format!("{}x{} features for {} labels of dim {}", m.frames, m.dim, e.labels.len(), ds.dim),
            });
        }
        let features = Array2::from_shape_vec((m.frames, m.dim), m.data.iter().map(|v| *v as f64).collect())
            .expect("length checked by the reader");
        seqs.push(LabeledSequence { features, labels: e.labels.clone() });
    }
    Ok((ds, seqs))
}

pub fn train(a: &TrainArgs) -> Result<TrainReport, PhacoError> {
    let (ds, seqs) = load_dataset(&a.dataset)?;
    let mut cfg = match load_config(a.config.as_deref())? {
        Some(c) => c,
        None => {
            let d = Config::with_phases(ds.phases);
            Config { model: LsSatConfig { raw_dim: ds.dim, ..d.model }, ..d }
        }
    };
    if cfg.model.raw_dim != ds.dim || cfg.phases != ds.phases {
        let msg = format!(
            "config expects dim {} with {} phases, dataset has dim {} with {} phases",
            cfg.model.raw_dim, cfg.phases, ds.dim, ds.phases
        );
        return Err(PhacoError::Invalid { path: a.dataset.clone(), msg });
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let (model, report) = train_toy(&cfg.model, &seqs, &cfg.train)?;
    phaco_lssat::weights::save(&model, &a.out)?;
    let mut report_path = a.out.clone().into_os_string();
    report_path.push(".report.json");
    write_json(Path::new(&report_path), &report)?;
    Ok(report)
}

pub fn read_results(path: &Path) -> Result<Vec<FrameResult>, PhacoError> {
    let file = std::fs::File::open(path).map_err(|e| PhacoError::io(path, e))?;
    let mut out = Vec::new();
    for (no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PhacoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: FrameResult = serde_json::from_str(&line)
            .map_err(|e| PhacoError::Invalid { path: path.to_path_buf(), msg: format!("line {}: {e}", no + 1) })?;
        if r.v != crate::pipeline::RESULT_SCHEMA {
            let msg = format!("line {}: unsupported schema version {}", no + 1, r.v);
            return Err(PhacoError::Invalid { path: path.to_path_buf(), msg });
        }
        out.push(r);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub phase: Option<phaco_core::metrics::PhaseMetrics>,
    /// Error of the reference-relative rotation, degrees.
    pub rotation: Option<MeanSd>,
    pub flags: BTreeMap<String, usize>,
}

pub fn eval(a: &EvalArgs) -> Result<EvalReport, PhacoError> {
    let manifest = Manifest::load(&a.manifest)?;
    let results = read_results(&a.results)?;
    let by_index: BTreeMap<usize, &FrameEntry> = manifest.frames.iter().map(|f| (f.index, f)).collect();
    let (mut pred, mut gt) = (Vec::new(), Vec::new());
    let (mut theta, mut theta_gt) = (Vec::new(), Vec::new());
    let mut flags = BTreeMap::from([
        ("fallback_ellipse".to_string(), 0),
        ("low_confidence_rotation".to_string(), 0),
        ("no_cues".to_string(), 0),
    ]);
    for r in &results {
        let entry = by_index.get(&r.index).ok_or_else(|| PhacoError::Invalid {
            path: a.results.clone(),
            msg: format!("frame {} is not in the manifest", r.index),
        })?;
        *flags.get_mut("fallback_ellipse").expect("key") += usize::from(r.flags.fallback_ellipse);
        *flags.get_mut("low_confidence_rotation").expect("key") += usize::from(r.flags.low_confidence_rotation);
        *flags.get_mut("no_cues").expect("key") += usize::from(r.flags.no_cues);
        if let Some(g) = entry.gt_phase {
            pred.push(r.phase);
            gt.push(g);
        }
        let reference = r.reference_index.and_then(|i| by_index.get(&i)).and_then(|f| f.gt_theta);
        if let (Some(t), Some(g), Some(g0)) = (r.theta_deg, entry.gt_theta, reference) {
            theta.push(t);
            theta_gt.push(g - g0);
        }
    }
    let metrics_err = |e: phaco_core::metrics::MetricsError| PhacoError::Invalid { path: a.results.clone(), msg: e.to_string() };
    create_dir(&a.out)?;
    let phase = if gt.is_empty() {
        None
    } else {
        let classes = manifest.meta.phases.max(pred.iter().max().map_or(0, |m| m + 1));
        let cm = ConfusionMatrix::from_labels(&pred, &gt, classes).map_err(metrics_err)?;
        write_atomic(&a.out.join("confusion.csv"), cm.to_csv().as_bytes())?;
        let (svg, csv) = ribbon_export(&pred, &gt, &default_phase_palette(classes)).map_err(metrics_err)?;
        write_atomic(&a.out.join("ribbons.svg"), svg.as_bytes())?;
        write_atomic(&a.out.join("ribbons.csv"), csv.as_bytes())?;
        Some(cm.metrics())
    };
    let rotation = if theta.is_empty() {
        None
    } else {
        let errs: Vec<f64> =
            theta.iter().zip(&theta_gt).map(|(p, g)| phaco_core::metrics::angular_error_deg(*p, *g)).collect();
        Some(mean_sd(&errs))
    };
    let report = EvalReport { frames: results.len(), phase, rotation, flags };
    write_json(&a.out.join("metrics.json"), &report)?;
    Ok(report)
}

pub fn render(a: &RenderArgs) -> Result<(), PhacoError> {
    let manifest = Manifest::load(&a.manifest)?;
    let cfg = load_config(a.config.as_deref())?.unwrap_or_default();
    let results = read_results(&a.results)?;
    let by_index: BTreeMap<usize, &FrameEntry> = manifest.frames.iter().map(|f| (f.index, f)).collect();
    create_dir(&a.out)?;
    for r in &results {
        match a.format {
            RenderFormat::Svg => {
                let doc = svg_overlay(manifest.meta.width, manifest.meta.height, &r.cues, &cfg.palette, None);
                write_atomic(&a.out.join(format!("{:06}.svg", r.index)), doc.as_bytes())?;
            }
            RenderFormat::Png => {
                let entry = by_index.get(&r.index).ok_or_else(|| PhacoError::Invalid {
                    path: a.results.clone(),
                    msg: format!("frame {} is not in the manifest", r.index),
                })?;
                let gray = read_gray(&manifest.resolve(&entry.gray))?;
                let img = rasterize(&gray, &r.cues, &cfg.palette);
                let path = a.out.join(format!("{:06}.png", r.index));
                let mut bytes = Vec::new();
                img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
                    .map_err(|e| PhacoError::Invalid { path: path.clone(), msg: e.to_string() })?;
                write_atomic(&path, &bytes)?;
            }
        }
    }
    Ok(())
}
