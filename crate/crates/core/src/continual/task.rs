use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::datagen::{make_grid, GridSpec, Volume, VolumeKind};
use crate::diffcore::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    /// A new time frame on the same spatial grid.
    DomainFrame,
    /// A new signal on an already seen domain.
    SignalLayer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Huber,
    CrossEntropy,
}

/// One step of a continual sequence: where to fit, what to fit, and which
/// output channels carry it.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: usize,
    pub kind: TaskKind,
    pub grid: GridSpec,
    pub target: Volume,
    pub loss_kind: LossKind,
    pub channels: Range<usize>,
}

impl Task {
    pub fn domain_frame(id: usize, grid: GridSpec, image: Volume) -> Self {
        Self {
            id,
            kind: TaskKind::DomainFrame,
            grid,
            target: image,
            loss_kind: LossKind::Huber,
            channels: 0..1,
        }
    }

    /// Intensity fit on channel 0.
    pub fn image(id: usize, grid: GridSpec, image: Volume) -> Self {
        Self {
            kind: TaskKind::SignalLayer,
            ..Self::domain_frame(id, grid, image)
        }
    }

    /// Label fit on `classes` softmax channels starting at `first_channel`.
    pub fn labels(id: usize, grid: GridSpec, labels: Volume, first_channel: usize, classes: usize) -> Self {
        Self {
            id,
            kind: TaskKind::SignalLayer,
            grid,
            target: labels,
            loss_kind: LossKind::CrossEntropy,
            channels: first_channel..first_channel + classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.grid.num_points() != self.target.num_voxels() {
            return Err(Error::dim(
                "task",
                format!(
                    "grid has {} points, target has {} voxels",
                    self.grid.num_points(),
                    self.target.num_voxels()
                ),
            ));
        }
        if self.channels.is_empty() {
            return Err(Error::Config(format!("task {} supervises no channels", self.id)));
        }
        match (self.loss_kind, self.target.kind()) {
            (LossKind::Huber, VolumeKind::Intensity) if self.target.channels() == self.channels.len() => Ok(()),
            (LossKind::CrossEntropy, VolumeKind::Labels) if self.target.channels() == 1 => Ok(()),
            _ => Err(Error::Config(format!(
                "task {}: {:?} loss incompatible with a {:?} target of {} channels over {} outputs",
                self.id,
                self.loss_kind,
                self.target.kind(),
                self.target.channels(),
                self.channels.len()
            ))),
        }
    }

    pub fn coords(&self) -> Result<Tensor<f64>> {
        make_grid(&self.grid)
    }

    /// Supervision matrix, one row per grid point: intensities, or one-hot
    /// rows for labels.
    pub fn target_matrix<T: Real>(&self) -> Result<Tensor<T>> {
        self.validate()?;
        let n = self.target.num_voxels();
        let c = self.channels.len();
        match self.loss_kind {
            LossKind::Huber => {
                let data = self.target.as_intensity()?.iter().map(|&v| T::lit(v as f64)).collect();
                Tensor::matrix(n, c, data)
            }
            LossKind::CrossEntropy => {
                let mut t = Tensor::zeros(vec![n, c]);
                for (i, &l) in self.target.as_labels()?.iter().enumerate() {
                    if l as usize >= c {
                        return Err(Error::Config(format!(
                            "label {l} outside the {c} classes of task {}",
                            self.id
                        )));
                    }
                    t.data_mut()[i * c + l as usize] = T::one();
                }
                Ok(t)
            }
        }
    }
}
