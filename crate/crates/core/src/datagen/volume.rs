use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VolumeKind {
    Intensity,
    Labels,
}

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeData {
    Intensity(Vec<f32>),
    Labels(Vec<u8>),
}

/// Dense grid signal in C order, channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: Vec<usize>,
    channels: usize,
    data: VolumeData,
}

impl Volume {
    pub fn new(dims: Vec<usize>, channels: usize, data: VolumeData) -> Result<Self> {
        let expected = dims.iter().product::<usize>() * channels;
        let got = match &data {
            VolumeData::Intensity(v) => v.len(),
            VolumeData::Labels(v) => v.len(),
        };
        if expected != got {
            return Err(Error::dim(
                "volume",
                format!("dims {dims:?} × {channels} channels need {expected} values, got {got}"),
            ));
        }
        Ok(Self {
            dims,
            channels,
            data,
        })
    }

    pub fn intensity(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, 1, VolumeData::Intensity(data))
    }

    pub fn labels(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        Self::new(dims, 1, VolumeData::Labels(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn kind(&self) -> VolumeKind {
        match self.data {
            VolumeData::Intensity(_) => VolumeKind::Intensity,
            VolumeData::Labels(_) => VolumeKind::Labels,
        }
    }

    pub fn data(&self) -> &VolumeData {
        &self.data
    }

    pub fn as_intensity(&self) -> Result<&[f32]> {
        match &self.data {
            VolumeData::Intensity(v) => Ok(v),
            VolumeData::Labels(_) => Err(Error::Contract("expected an intensity volume".into())),
        }
    }

    pub fn as_labels(&self) -> Result<&[u8]> {
        match &self.data {
            VolumeData::Labels(v) => Ok(v),
            VolumeData::Intensity(_) => Err(Error::Contract("expected a label volume".into())),
        }
    }
}

/// Rescales one volume to `[0, 1]` by its own min and max.
pub fn normalize_intensity(v: &Volume) -> Result<Volume> {
    let mut out = vec![v.clone()];
    normalize_sequence(&mut out)?;
    Ok(out.pop().expect("one volume"))
}

/// Rescales a whole sequence (e.g. all frames of one case) with a single
/// shared min and max.
pub fn normalize_sequence(frames: &mut [Volume]) -> Result<()> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for f in frames.iter() {
        for &x in f.as_intensity()? {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if !(hi > lo) {
        return Err(Error::Degenerate(format!(
            "cannot normalize constant intensities (min = max = {lo})"
        )));
    }
    let range = hi - lo;
    for f in frames.iter_mut() {
        if let VolumeData::Intensity(v) = &mut f.data {
            for x in v.iter_mut() {
                *x = (*x - lo) / range;
            }
        }
    }
    Ok(())
}
