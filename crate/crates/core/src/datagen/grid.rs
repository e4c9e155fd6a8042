use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Evenly spaced grid over `[-1, 1]` per spatial axis, endpoints included,
/// with an optional fixed time coordinate appended to every point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub time: Option<f64>,
}

impl GridSpec {
    pub fn spatial(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            time: None,
        }
    }

    pub fn with_time(dims: &[usize], t: f64) -> Self {
        Self {
            dims: dims.to_vec(),
            time: Some(t),
        }
    }

    pub fn num_points(&self) -> usize {
        self.dims.iter().product()
    }

    /// Coordinate columns per point.
    pub fn coord_dim(&self) -> usize {
        self.dims.len() + usize::from(self.time.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("grid needs at least one axis".into()));
        }
        if let Some(&n) = self.dims.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("grid axis extent {n} < 2")));
        }
        if let Some(t) = self.time {
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("time {t} outside [-1, 1]")));
            }
        }
        Ok(())
    }
}

pub(crate) fn axis_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    -1.0 + 2.0 * i as f64 / (n - 1) as f64
}

/// One row per voxel in C order (last axis fastest); columns are the axis
/// coordinates followed by the time value when present.
pub fn make_grid(spec: &GridSpec) -> Result<Tensor<f64>> {
    spec.validate()?;
    let n = spec.num_points();
    let d = spec.coord_dim();
    let mut data = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; spec.dims.len()];
    for _ in 0..n {
        for (&i, &extent) in idx.iter().zip(&spec.dims) {
            data.push(axis_coord(i, extent));
        }
        if let Some(t) = spec.time {
            data.push(t);
        }
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < spec.dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    Tensor::matrix(n, d, data)
}
