//! Shared fixtures for the benchmarks.

use nfield::continual::Task;
use nfield::datagen::{normalize_intensity, phantom, GridSpec};
use nfield::fieldmodels::{build_model_on, Arch, FieldModel, ModelConfig};

pub const DIMS: [usize; 3] = [32, 32, 8];

/// Intensity task for one phantom frame at `DIMS`.
pub fn frame_task() -> Task {
    let (img, _) = phantom(DIMS[0], DIMS[1], DIMS[2], -1.0, 0).expect("phantom");
    Task::image(1, GridSpec::spatial(&DIMS), normalize_intensity(&img).expect("normalize"))
}

pub fn model_for(task: &Task, arch: Arch, width: usize) -> FieldModel<f32> {
    let cfg = ModelConfig::new(arch, 3, 1).with_hidden(3, width);
    build_model_on(&cfg, Some(&task.coords().expect("grid"))).expect("model")
}
