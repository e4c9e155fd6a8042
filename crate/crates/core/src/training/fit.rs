use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamState};
use crate::continual::{LossKind, Task};
use crate::diffcore::{Graph, NodeId, Real, Tensor};
use crate::error::{Error, Result};
use crate::fieldmodels::{Arch, FieldModel};
use crate::seeds::{derive_seed, STREAM_BATCHES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub batch_coords: usize,
    pub huber_delta: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// 500 iterations at the architecture's learning rate, 4096 coordinates
    /// per step, δ = 1.
    pub fn for_arch(arch: Arch) -> Self {
        Self {
            iterations: 500,
            lr: arch.default_lr(),
            batch_coords: 4096,
            huber_delta: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_coords == 0 || !(self.huber_delta > 0.0) {
            return Err(Error::Config(format!(
                "need lr > 0, batch_coords ≥ 1 and huber_delta > 0 (got {}, {}, {})",
                self.lr, self.batch_coords, self.huber_delta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss_fit: f64,
    pub loss_distil: f64,
    pub loss_total: f64,
}

/// Per-iteration losses of one task.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitTrace {
    pub task: usize,
    pub records: Vec<TraceRecord>,
}

impl FitTrace {
    pub fn final_fit_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss_fit)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["iteration", "loss_fit", "loss_distil", "loss_total"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::from(e).with_path(path))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Additional loss term contributed per iteration, e.g. distillation.
pub struct ExtraLoss {
    pub loss: NodeId,
    pub weight: f64,
}

pub trait LossHook<T: Real> {
    fn extra_loss(
        &mut self,
        graph: &mut Graph<'_, T>,
        model: &FieldModel<T>,
        iteration: usize,
    ) -> Result<Option<ExtraLoss>>;
}

/// Epoch-shuffled minibatches whose content depends only on
/// `(seed, iteration)`. Each epoch is one permutation of the grid cut into
/// `n / batch` disjoint batches; the remainder is skipped for that epoch.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    n: usize,
    batch: usize,
    seed: u64,
    cached: Option<(usize, Vec<usize>)>,
}

impl BatchSampler {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        Self {
            n,
            batch,
            seed,
            cached: None,
        }
    }

    pub fn batch(&mut self, iteration: usize) -> Vec<usize> {
        if self.batch >= self.n {
            return (0..self.n).collect();
        }
        let per_epoch = self.n / self.batch;
        let epoch = iteration / per_epoch;
        let slot = iteration % per_epoch;
        if self.cached.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[epoch as u64]));
            perm.shuffle(&mut rng);
            self.cached = Some((epoch, perm));
        }
        let perm = &self.cached.as_ref().expect("filled").1;
        perm[slot * self.batch..(slot + 1) * self.batch].to_vec()
    }
}

/// Loss of `channels` of `logits` against `target` under `kind`.
pub(crate) fn channel_loss<T: Real>(
    g: &mut Graph<'_, T>,
    logits: NodeId,
    channels: Range<usize>,
    kind: LossKind,
    target: Tensor<T>,
    delta: f64,
) -> Result<NodeId> {
    let out = if channels.start == 0 && channels.end == g.value(logits).cols() {
        logits
    } else {
        g.slice_cols(logits, channels.start, channels.end)?
    };
    match kind {
        LossKind::Huber => g.huber(out, target, T::lit(delta)),
        LossKind::CrossEntropy => g.softmax_cross_entropy(out, target),
    }
}

/// Fits `model` to one task. Optimizer state is supplied by the caller so
/// it can persist across tasks.
pub fn fit_task<T: Real>(
    model: &mut FieldModel<T>,
    task: &Task,
    cfg: &TrainConfig,
    adam: &mut AdamState<T>,
    mut hook: Option<&mut dyn LossHook<T>>,
) -> Result<FitTrace> {
    let mut trace = FitTrace {
        task: task.id,
        records: Vec::with_capacity(cfg.iterations),
    };
    if cfg.iterations == 0 {
        return Ok(trace);
    }
    cfg.validate()?;
    task.validate()?;
    if task.channels.end > model.out_channels() {
        return Err(Error::Config(format!(
            "task {} supervises channels {:?} but the model has {}",
            task.id,
            task.channels,
            model.out_channels()
        )));
    }
    if task.loss_kind == LossKind::CrossEntropy && model.config().class_channels() != task.channels {
        return Err(Error::Config(format!(
            "task {} needs softmax channels {:?}, model head has {:?}",
            task.id,
            task.channels,
            model.config().class_channels()
        )));
    }
    let coords = task.coords()?.cast::<T>();
    let input = model.prepare(&coords)?;
    let target = task.target_matrix::<T>()?;
    let mut sampler = BatchSampler::new(
        coords.rows(),
        cfg.batch_coords,
        derive_seed(cfg.seed, &[STREAM_BATCHES, task.id as u64]),
    );
    adam.conform(model.params())?;

    for it in 0..cfg.iterations {
        let idx = sampler.batch(it);
        let (grads, record) = {
            let mut g = Graph::new(model.params());
            let out = model.logits(&mut g, input.select(&idx))?;
            let fit = channel_loss(
                &mut g,
                out,
                task.channels.clone(),
                task.loss_kind,
                target.select_rows(&idx),
                cfg.huber_delta,
            )?;
            let extra = match hook.as_deref_mut() {
                Some(h) => h.extra_loss(&mut g, model, it)?,
                None => None,
            };
            let (total, distil) = match extra {
                Some(ExtraLoss { loss, weight }) => {
                    let weighted = g.scale(loss, T::lit(weight));
                    (g.add(fit, weighted)?, g.value(loss).item().as_f64())
                }
                None => (fit, 0.0),
            };
            let record = TraceRecord {
                iteration: it,
                loss_fit: g.value(fit).item().as_f64(),
                loss_distil: distil,
                loss_total: g.value(total).item().as_f64(),
            };
            if !record.loss_total.is_finite() {
                return Err(Error::Diverged {
                    iteration: it,
                    loss: record.loss_total,
                });
            }
            (g.backward(total)?, record)
        };
        adam_step(model.params_mut(), &grads, adam, cfg.lr)?;
        trace.records.push(record);
    }
    Ok(trace)
}
