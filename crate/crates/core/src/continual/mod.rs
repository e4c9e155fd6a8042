//! Continual fitting with optional self-distillation from a frozen copy of
//! the model taken at each task boundary.

mod task;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use task::{LossKind, Task, TaskKind};

use crate::diffcore::{Graph, Real, Tensor};
use crate::error::{Error, Result};
use crate::fieldmodels::{keys_of, Arch, ChannelKind, FieldModel, ModelInput};
use crate::seeds::{derive_seed, STREAM_DISTILL, STREAM_TABLE};
use crate::training::{channel_loss, fit_task, AdamState, ExtraLoss, FitTrace, LossHook, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Baseline,
    Distillation,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Baseline, Strategy::Distillation];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Distillation => "distillation",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Strategy::Baseline),
            "distillation" | "distill" => Ok(Strategy::Distillation),
            _ => Err(Error::Config(format!("unknown strategy {s:?} (baseline|distillation)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    /// Weight of the distillation term.
    pub lambda: f64,
    /// Distillation coordinates per iteration; `None` uses the fitting batch size.
    pub n_distil: Option<usize>,
    /// Seed of the distillation sampling stream, kept apart from the fitting stream.
    pub rng_stream: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            n_distil: None,
            rng_stream: 1,
        }
    }
}

/// Frozen copy of the model as it was after the previous task.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherSnapshot<T: Real> {
    model: FieldModel<T>,
}

impl<T: Real> TeacherSnapshot<T> {
    pub fn model(&self) -> &FieldModel<T> {
        &self.model
    }
}

pub fn snapshot_teacher<T: Real>(model: &FieldModel<T>) -> TeacherSnapshot<T> {
    TeacherSnapshot { model: model.clone() }
}

/// Teacher outputs at `coords` over the channels it had when frozen.
pub fn distill_targets<T: Real>(teacher: &TeacherSnapshot<T>, coords: &Tensor<T>) -> Result<Tensor<T>> {
    teacher.model.forward(coords)
}

/// Deduplicated union of the grids of `tasks`, in task order.
pub fn prior_domain(tasks: &[&Task]) -> Result<Tensor<f64>> {
    if tasks.is_empty() {
        return Err(Error::Contract("distillation needs at least one prior task".into()));
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    let mut cols = 0;
    for t in tasks {
        let c = t.coords()?;
        cols = c.cols();
        for (r, k) in keys_of(&c)?.into_iter().enumerate() {
            if seen.insert(k) {
                rows.extend_from_slice(c.row(r));
            }
        }
    }
    Tensor::matrix(rows.len() / cols.max(1), cols, rows)
}

/// `n` distinct indices drawn uniformly from `0..len`; all of them when `n ≥ len`.
pub(crate) fn sample_indices(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    rand::seq::index::sample(rng, len, n).into_vec()
}

/// Uniform grid-aligned sample of `n` coordinates from the union of the
/// prior task domains, without replacement.
pub fn sample_distill_coords(prior: &[&Task], n: usize, rng: &mut ChaCha8Rng) -> Result<Tensor<f64>> {
    let domain = prior_domain(prior)?;
    Ok(domain.select_rows(&sample_indices(domain.rows(), n, rng)))
}

/// Adds `λ·L_distil` on freshly sampled prior coordinates each iteration.
struct DistillHook<T: Real> {
    student_input: ModelInput<T>,
    /// Teacher outputs over the whole prior domain. The teacher is frozen,
    /// so these equal per-iteration teacher evaluations.
    targets: Tensor<T>,
    linear: std::ops::Range<usize>,
    classes: std::ops::Range<usize>,
    lambda: f64,
    n: usize,
    delta: f64,
    rng: ChaCha8Rng,
}

impl<T: Real> DistillHook<T> {
    fn new(
        teacher: &TeacherSnapshot<T>,
        student: &FieldModel<T>,
        prior: &[&Task],
        task_id: usize,
        cfg: &TrainConfig,
        dcfg: &DistillConfig,
    ) -> Result<Self> {
        let domain = prior_domain(prior)?.cast::<T>();
        Ok(Self {
            student_input: student.prepare(&domain)?,
            targets: distill_targets(teacher, &domain)?,
            linear: teacher.model.config().linear_channels(),
            classes: teacher.model.config().class_channels(),
            lambda: dcfg.lambda,
            n: dcfg.n_distil.unwrap_or(cfg.batch_coords),
            delta: cfg.huber_delta,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(dcfg.rng_stream, &[STREAM_DISTILL, task_id as u64])),
        })
    }
}

impl<T: Real> LossHook<T> for DistillHook<T> {
    fn extra_loss(&mut self, g: &mut Graph<'_, T>, model: &FieldModel<T>, _iteration: usize) -> Result<Option<ExtraLoss>> {
        let idx = sample_indices(self.targets.rows(), self.n, &mut self.rng);
        let out = model.logits(g, self.student_input.select(&idx))?;
        let teacher = self.targets.select_rows(&idx);
        let mut terms = Vec::with_capacity(2);
        for (range, kind) in [
            (self.linear.clone(), LossKind::Huber),
            (self.classes.clone(), LossKind::CrossEntropy),
        ] {
            if !range.is_empty() {
                let target = teacher.slice_cols(range.start, range.end)?;
                terms.push(channel_loss(g, out, range, kind, target, self.delta)?);
            }
        }
        let mut loss = terms[0];
        for &t in &terms[1..] {
            loss = g.add(loss, t)?;
        }
        Ok(Some(ExtraLoss {
            loss,
            weight: self.lambda,
        }))
    }
}

/// Grows the model so it can represent `task`: output channels for a new
/// signal, hash-table rows for new DINER coordinates.
fn prepare_model_for<T: Real>(model: &mut FieldModel<T>, task: &Task) -> Result<()> {
    if task.channels.end > model.out_channels() {
        if task.kind != TaskKind::SignalLayer {
            return Err(Error::Config(format!(
                "task {} needs channels {:?}; only signal tasks may add outputs",
                task.id, task.channels
            )));
        }
        let kind = match task.loss_kind {
            LossKind::Huber => ChannelKind::Linear,
            LossKind::CrossEntropy => ChannelKind::Classes,
        };
        model.expand_output_head(task.channels.end - model.out_channels(), kind)?;
    }
    if task.kind == TaskKind::DomainFrame && model.config().arch == Arch::Diner {
        let coords = task.coords()?;
        let map = model.coord_map().expect("DINER has a coordinate map");
        let fresh: Vec<usize> = keys_of(&coords)?
            .into_iter()
            .enumerate()
            .filter(|(_, k)| !map.contains(*k))
            .map(|(i, _)| i)
            .collect();
        if !fresh.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                model.config().seed,
                &[STREAM_TABLE, task.id as u64],
            ));
            model.expand_hash_table(&coords.select_rows(&fresh), &mut rng)?;
        }
    }
    Ok(())
}

/// Trains on `tasks` in order, calling `on_task_end` after each one.
/// Optimizer state carries over between tasks.
pub fn continual_fit_with<T: Real>(
    model: &mut FieldModel<T>,
    tasks: &[Task],
    strategy: Strategy,
    cfg: &TrainConfig,
    dcfg: &DistillConfig,
    mut on_task_end: impl FnMut(&Task, &FieldModel<T>, &FitTrace) -> Result<()>,
) -> Result<Vec<FitTrace>> {
    if !(dcfg.lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be non-negative, got {}", dcfg.lambda)));
    }
    let mut adam = AdamState::new(model.params());
    let mut traces = Vec::with_capacity(tasks.len());
    for (s, task) in tasks.iter().enumerate() {
        let wrap = |e: Error| Error::Task {
            task: task.id,
            source: Box::new(e),
        };
        let teacher = (strategy == Strategy::Distillation && s > 0).then(|| snapshot_teacher(model));
        prepare_model_for(model, task).map_err(wrap)?;
        let mut hook = match &teacher {
            Some(t) => {
                let prior: Vec<&Task> = tasks[..s].iter().collect();
                Some(DistillHook::new(t, model, &prior, task.id, cfg, dcfg).map_err(wrap)?)
            }
            None => None,
        };
        let trace = fit_task(
            model,
            task,
            cfg,
            &mut adam,
            hook.as_mut().map(|h| h as &mut dyn LossHook<T>),
        )
        .map_err(wrap)?;
        on_task_end(task, model, &trace).map_err(wrap)?;
        traces.push(trace);
    }
    Ok(traces)
}

pub fn continual_fit<T: Real>(
    model: &mut FieldModel<T>,
    tasks: &[Task],
    strategy: Strategy,
    cfg: &TrainConfig,
    dcfg: &DistillConfig,
) -> Result<Vec<FitTrace>> {
    continual_fit_with(model, tasks, strategy, cfg, dcfg, |_, _, _| Ok(()))
}
