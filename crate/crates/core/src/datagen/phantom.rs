use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::axis_coord;
use super::Volume;
use crate::error::Result;

pub const LABEL_RV: u8 = 1;
pub const LABEL_MYO: u8 = 2;
pub const LABEL_LV: u8 = 3;

const LV_CENTER: [f64; 3] = [-0.2, 0.0, 0.0];
const RV_CENTER: [f64; 3] = [0.35, 0.0, 0.0];
const MYO_SCALE: f64 = 1.4;
const JITTER: f64 = 0.05;

/// Contraction factor over the cycle: 1.0 at `t = -1`, 0.7 at `t = 1`,
/// decreasing monotonically in between.
pub fn contraction(t: f64) -> f64 {
    0.85 + 0.15 * (std::f64::consts::FRAC_PI_2 * (t + 1.0)).cos()
}

/// Per-case placement of the two ventricles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomGeometry {
    pub lv_center: [f64; 3],
    pub rv_center: [f64; 3],
}

impl PhantomGeometry {
    pub fn centered() -> Self {
        Self {
            lv_center: LV_CENTER,
            rv_center: RV_CENTER,
        }
    }

    /// Centers jittered by `U(-0.05, 0.05)` per axis, seeded by the case.
    pub fn for_case(case_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
        let mut g = Self::centered();
        for c in g.lv_center.iter_mut().chain(g.rv_center.iter_mut()) {
            *c += rng.gen_range(-JITTER..JITTER);
        }
        g
    }
}

fn inside(p: [f64; 3], center: [f64; 3], radii: [f64; 3]) -> bool {
    p.iter()
        .zip(center)
        .zip(radii)
        .map(|((&x, c), r)| ((x - c) / r).powi(2))
        .sum::<f64>()
        <= 1.0
}

fn label_at(p: [f64; 3], s: f64, g: &PhantomGeometry) -> u8 {
    let lv_r = [0.30 * s, 0.30 * s, 0.45];
    let myo_r = lv_r.map(|r| r * MYO_SCALE);
    let rv_r = [0.25 * s, 0.35 * s, 0.40];
    if inside(p, g.lv_center, lv_r) {
        LABEL_LV
    } else if inside(p, g.lv_center, myo_r) {
        LABEL_MYO
    } else if inside(p, g.rv_center, rv_r) {
        LABEL_RV
    } else {
        0
    }
}

fn intensity_at(p: [f64; 3], label: u8) -> f64 {
    let base = match label {
        LABEL_LV | LABEL_RV => 0.8,
        LABEL_MYO => 0.5,
        _ => 0.2 + 0.1 * p[0],
    };
    let pi4 = 4.0 * std::f64::consts::PI;
    let texture = 0.05 * (pi4 * p[0]).sin() * (pi4 * p[1]).sin();
    (base + texture).clamp(0.0, 1.0)
}

/// Phantom frame at time `t` for explicit geometry.
pub fn phantom_with(dims: [usize; 3], t: f64, geometry: &PhantomGeometry) -> Result<(Volume, Volume)> {
    let s = contraction(t);
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    let mut intensity = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let p = [axis_coord(ix, nx), axis_coord(iy, ny), axis_coord(iz, nz)];
                let l = label_at(p, s, geometry);
                labels.push(l);
                intensity.push(intensity_at(p, l) as f32);
            }
        }
    }
    Ok((
        Volume::intensity(dims.to_vec(), intensity)?,
        Volume::labels(dims.to_vec(), labels)?,
    ))
}

/// Deterministic beating two-ventricle phantom: intensity frame and its
/// aligned labels (0 background, 1 RV, 2 myocardium, 3 LV).
pub fn phantom(nx: usize, ny: usize, nz: usize, t: f64, case_seed: u64) -> Result<(Volume, Volume)> {
    phantom_with([nx, ny, nz], t, &PhantomGeometry::for_case(case_seed))
}
