//! Domain- and signal-expansion experiments over a set of architectures and
//! strategies, plus the stability/plasticity scatter.

mod plot;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use plot::{render_scatter, scatter_svg, ScatterMetric};

use crate::continual::{continual_fit_with, DistillConfig, Strategy, Task};
use crate::datagen::{make_grid, normalize_sequence, phantom, save_volume, GridSpec, Volume};
use crate::error::{Error, Result};
use crate::fieldmodels::{build_model_on, save_checkpoint, Arch, FieldModel, ModelConfig};
use crate::metrics::{argmax_labels, dice, psnr, save_metrics, ssim, MetricsRow};
use crate::seeds::derive_seed;
use crate::training::{fit_task, AdamState, FitTrace, TrainConfig};

const STREAM_CASE: u64 = 0xCA5E;
const STREAM_MODEL: u64 = 0x30DE;

/// Label classes fitted in the signal experiment, background included.
pub const SEGMENT_CLASSES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Domain,
    Signal,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Domain => "domain",
            Experiment::Signal => "signal",
        })
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "domain" | "domain-expansion" => Ok(Experiment::Domain),
            "signal" | "signal-expansion" => Ok(Experiment::Signal),
            _ => Err(Error::Config(format!("unknown experiment {s:?} (domain|signal)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dims: [usize; 3],
    /// Time frames in the domain experiment, spread evenly over [-1, 1].
    pub frames: usize,
    pub cases: usize,
    pub seed: u64,
    pub models: Vec<Arch>,
    pub strategies: Vec<Strategy>,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub iterations: usize,
    pub batch_coords: usize,
    /// Overrides every architecture's default learning rate.
    pub lr: Option<f64>,
    pub huber_delta: f64,
    pub lambda: f64,
    pub n_distil: Option<usize>,
    pub workers: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Domain,
            dims: [32, 32, 8],
            frames: 4,
            cases: 8,
            seed: 0,
            models: Arch::ALL.to_vec(),
            strategies: Strategy::ALL.to_vec(),
            hidden_layers: 3,
            hidden_width: 64,
            iterations: 300,
            batch_coords: 1024,
            lr: None,
            huber_delta: 1.0,
            lambda: 1.0,
            n_distil: None,
            workers: 1,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config("at least one model and one strategy are required".into()));
        }
        if self.cases == 0 {
            return Err(Error::Config("cases must be at least 1".into()));
        }
        if self.experiment == Experiment::Domain && self.frames == 0 {
            return Err(Error::Config("frames must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        GridSpec::spatial(&self.dims).validate()?;
        self.train_config(Arch::Siren, 0).validate()
    }

    pub fn train_config(&self, arch: Arch, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            lr: self.lr.unwrap_or(arch.default_lr()),
            batch_coords: self.batch_coords,
            huber_delta: self.huber_delta,
            seed,
        }
    }

    fn model_config(&self, arch: Arch, in_dim: usize, seed: u64) -> ModelConfig {
        ModelConfig::new(arch, in_dim, 1)
            .with_hidden(self.hidden_layers, self.hidden_width)
            .with_seed(seed)
    }

    /// Time of frame `f` (0-based).
    pub fn frame_time(&self, f: usize) -> f64 {
        if self.frames == 1 {
            -1.0
        } else {
            -1.0 + 2.0 * f as f64 / (self.frames - 1) as f64
        }
    }
}

/// Phantom seed of case `case` under base seed `seed`.
pub fn case_seed(seed: u64, case: usize) -> u64 {
    derive_seed(seed, &[STREAM_CASE, case as u64])
}

/// Normalized intensity frames and labels of one case, one per time point.
pub fn case_frames(cfg: &ExperimentConfig, case: usize) -> Result<Vec<(Volume, Volume)>> {
    let [nx, ny, nz] = cfg.dims;
    let seed = case_seed(cfg.seed, case);
    let (mut images, labels): (Vec<Volume>, Vec<Volume>) = (0..cfg.frames)
        .map(|f| phantom(nx, ny, nz, cfg.frame_time(f), seed))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    normalize_sequence(&mut images)?;
    Ok(images.into_iter().zip(labels).collect())
}

/// Writes every case's frames as `case{c}_frame{f}_image.nfv` and
/// `case{c}_frame{f}_labels.nfv` (1-based frame numbers).
pub fn write_phantoms(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::from(e).with_path(out))?;
    let mut written = Vec::new();
    for case in 0..cfg.cases {
        for (f, (img, lab)) in case_frames(cfg, case)?.into_iter().enumerate() {
            for (kind, v) in [("image", &img), ("labels", &lab)] {
                let p = out.join(format!("case{case}_frame{}_{kind}.nfv", f + 1));
                save_volume(v, &p)?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

struct RunKey {
    case: usize,
    arch: Arch,
    strategy: Strategy,
}

impl RunKey {
    fn row(&self, task: usize, target: String) -> MetricsRow {
        MetricsRow {
            case_id: self.case as u64,
            model: self.arch.name().into(),
            strategy: self.strategy.name().into(),
            trained_through_task: task,
            eval_target: target,
            psnr: None,
            ssim: None,
            dice_c1: None,
            dice_c2: None,
            dice_c3: None,
        }
    }

    fn dir(&self, out: &Path) -> PathBuf {
        out.join(format!("case{}", self.case)).join(self.arch.name()).join(self.strategy.name())
    }

    fn wrap(&self, e: Error) -> Error {
        Error::Run {
            case: self.case as u64,
            model: self.arch.name().into(),
            strategy: self.strategy.name().into(),
            source: Box::new(e),
        }
    }
}

fn predict_image(model: &FieldModel<f32>, grid: &GridSpec, dims: &[usize]) -> Result<Volume> {
    let y = model.forward(&make_grid(grid)?.cast())?;
    let data = (0..y.rows()).map(|r| y.row(r)[0]).collect();
    Volume::intensity(dims.to_vec(), data)
}

fn image_scores(model: &FieldModel<f32>, grid: &GridSpec, truth: &Volume, row: &mut MetricsRow) -> Result<()> {
    let pred = predict_image(model, grid, truth.dims())?;
    row.psnr = Some(psnr(&pred, truth, 1.0)?);
    row.ssim = Some(ssim(&pred, truth)?);
    Ok(())
}

fn label_scores(model: &FieldModel<f32>, grid: &GridSpec, truth: &Volume, row: &mut MetricsRow) -> Result<()> {
    let y = model.forward(&make_grid(grid)?.cast())?;
    let classes = model.config().class_channels();
    let pred = argmax_labels(&y.slice_cols(classes.start, classes.end)?, truth.dims())?;
    row.dice_c1 = Some(dice(&pred, truth, 1)?);
    row.dice_c2 = Some(dice(&pred, truth, 2)?);
    row.dice_c3 = Some(dice(&pred, truth, 3)?);
    Ok(())
}

fn save_artifacts(dir: Option<&Path>, task: usize, model: &FieldModel<f32>, trace: &FitTrace) -> Result<()> {
    if let Some(dir) = dir {
        save_checkpoint(model, dir.join(format!("ckpt_task{task}.bin")))?;
        trace.save_csv(dir.join(format!("trace_task{task}.csv")))?;
    }
    Ok(())
}

fn run_once(cfg: &ExperimentConfig, key: &RunKey, frames: &[(Volume, Volume)]) -> Result<Vec<MetricsRow>> {
    let model_seed = derive_seed(cfg.seed, &[STREAM_MODEL, key.case as u64, key.arch as u64]);
    let train = cfg.train_config(key.arch, model_seed);
    let dcfg = DistillConfig {
        lambda: cfg.lambda,
        n_distil: cfg.n_distil,
        rng_stream: derive_seed(model_seed, &[key.strategy as u64]),
    };
    let dir = match &cfg.out_dir {
        Some(out) => {
            let d = key.dir(out);
            std::fs::create_dir_all(&d).map_err(|e| Error::from(e).with_path(&d))?;
            Some(d)
        }
        None => None,
    };
    let mut rows = Vec::new();

    match cfg.experiment {
        Experiment::Domain => {
            let tasks: Vec<Task> = frames
                .iter()
                .enumerate()
                .map(|(f, (img, _))| {
                    Task::domain_frame(f + 1, GridSpec::with_time(&cfg.dims, cfg.frame_time(f)), img.clone())
                })
                .collect();
            let first = tasks[0].coords()?;
            let mut model = build_model_on(&cfg.model_config(key.arch, 4, model_seed), Some(&first))?;
            continual_fit_with(&mut model, &tasks, key.strategy, &train, &dcfg, |task, model, trace| {
                save_artifacts(dir.as_deref(), task.id, model, trace)?;
                for seen in &tasks[..task.id] {
                    let mut row = key.row(task.id, format!("frame{}", seen.id));
                    image_scores(model, &seen.grid, &seen.target, &mut row)?;
                    rows.push(row);
                }
                Ok(())
            })?;
        }
        Experiment::Signal => {
            let (img, lab) = &frames[0];
            let grid = GridSpec::spatial(&cfg.dims);
            let tasks = [
                Task::image(1, grid.clone(), img.clone()),
                Task::labels(2, grid.clone(), lab.clone(), 1, SEGMENT_CLASSES),
            ];
            let coords = make_grid(&grid)?;
            let mut model = build_model_on(&cfg.model_config(key.arch, 3, model_seed), Some(&coords))?;
            continual_fit_with(&mut model, &tasks, key.strategy, &train, &dcfg, |task, model, trace| {
                save_artifacts(dir.as_deref(), task.id, model, trace)?;
                let mut row = key.row(task.id, "image".into());
                image_scores(model, &grid, img, &mut row)?;
                rows.push(row);
                if task.id == 2 {
                    let mut row = key.row(task.id, "labels".into());
                    label_scores(model, &grid, lab, &mut row)?;
                    rows.push(row);
                }
                Ok(())
            })?;
        }
    }
    Ok(rows)
}

fn sort_key(r: &MetricsRow) -> (u64, usize, usize, usize, usize, String) {
    let arch = Arch::ALL.iter().position(|a| a.name() == r.model).unwrap_or(usize::MAX);
    let strategy = Strategy::ALL.iter().position(|s| s.name() == r.strategy).unwrap_or(usize::MAX);
    let frame = r.eval_target.strip_prefix("frame").and_then(|n| n.parse().ok()).unwrap_or(0);
    (r.case_id, arch, strategy, r.trained_through_task, frame, r.eval_target.clone())
}

fn run_case(cfg: &ExperimentConfig, case: usize) -> Result<Vec<MetricsRow>> {
    let mut frames_cfg = cfg.clone();
    if cfg.experiment == Experiment::Signal {
        frames_cfg.frames = 1;
    }
    let frames = case_frames(&frames_cfg, case)?;
    let mut rows = Vec::new();
    for &arch in &cfg.models {
        for &strategy in &cfg.strategies {
            let key = RunKey { case, arch, strategy };
            rows.extend(run_once(cfg, &key, &frames).map_err(|e| key.wrap(e))?);
        }
    }
    Ok(rows)
}

/// Runs every (case, model, strategy) combination. Rows come back in a
/// fixed order regardless of `workers`; with an output directory, the
/// rows are also written to `metrics.csv` there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let per_case: Vec<Result<Vec<MetricsRow>>> = if cfg.workers == 1 {
        (0..cfg.cases).map(|c| run_case(cfg, c)).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| (0..cfg.cases).into_par_iter().map(|c| run_case(cfg, c)).collect())
    };
    let mut rows = Vec::new();
    for r in per_case {
        rows.extend(r?);
    }
    rows.sort_by_key(sort_key);
    if let Some(out) = &cfg.out_dir {
        save_metrics(&rows, out.join("metrics.csv"))?;
    }
    Ok(rows)
}

pub fn run_domain_expansion(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    run_experiment(&ExperimentConfig {
        experiment: Experiment::Domain,
        ..cfg.clone()
    })
}

pub fn run_signal_expansion(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    run_experiment(&ExperimentConfig {
        experiment: Experiment::Signal,
        ..cfg.clone()
    })
}

/// Fits a fresh model to a single intensity volume on its spatial grid.
pub fn fit_volume(
    arch: Arch,
    volume: &Volume,
    model_cfg: Option<ModelConfig>,
    train: &TrainConfig,
) -> Result<(FieldModel<f32>, FitTrace)> {
    let grid = GridSpec::spatial(volume.dims());
    let coords = make_grid(&grid)?;
    let cfg = model_cfg.unwrap_or_else(|| ModelConfig::new(arch, grid.coord_dim(), 1).with_seed(train.seed));
    let mut model = build_model_on(&cfg, Some(&coords))?;
    let mut adam = AdamState::new(model.params());
    let trace = fit_task(&mut model, &Task::image(1, grid, volume.clone()), train, &mut adam, None)?;
    Ok((model, trace))
}

/// PSNR of `model` against `volume` on its spatial grid.
pub fn volume_psnr(model: &FieldModel<f32>, volume: &Volume) -> Result<f64> {
    let pred = predict_image(model, &GridSpec::spatial(volume.dims()), volume.dims())?;
    psnr(&pred, volume, 1.0)
}
