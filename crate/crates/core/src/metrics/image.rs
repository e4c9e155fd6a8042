use crate::datagen::Volume;
use crate::diffcore::{Real, Tensor};
use crate::error::{Error, Result};

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 7;

const MSE_FLOOR: f64 = 1e-10;

fn same_shape(op: &'static str, a: &Volume, b: &Volume) -> Result<()> {
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(Error::dim(
            op,
            format!(
                "{:?}x{} vs {:?}x{}",
                a.dims(),
                a.channels(),
                b.dims(),
                b.channels()
            ),
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP`].
pub fn psnr(pred: &Volume, reference: &Volume, data_range: f64) -> Result<f64> {
    same_shape("psnr", pred, reference)?;
    if !(data_range > 0.0) {
        return Err(Error::Contract(format!("data range must be positive, got {data_range}")));
    }
    let (a, b) = (pred.as_intensity()?, reference.as_intensity()?);
    if a.is_empty() {
        return Err(Error::Contract("psnr of an empty volume".into()));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse < MSE_FLOOR {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (data_range * data_range / mse).log10()).min(PSNR_CAP))
}

/// Mean 2D SSIM over the axial (last-axis) slices of single-channel 3D
/// volumes, using a 7×7 uniform window over fully contained windows and a
/// data range of 1.
pub fn ssim(pred: &Volume, reference: &Volume) -> Result<f64> {
    same_shape("ssim", pred, reference)?;
    let dims = pred.dims();
    if dims.len() != 3 || pred.channels() != 1 {
        return Err(Error::Contract(format!(
            "ssim expects a single-channel 3D volume, got {:?}x{}",
            dims,
            pred.channels()
        )));
    }
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    if nx < SSIM_WINDOW || ny < SSIM_WINDOW {
        return Err(Error::Contract(format!(
            "ssim needs at least {SSIM_WINDOW} voxels per in-plane axis, slice is {nx}x{ny}"
        )));
    }
    let (a, b) = (pred.as_intensity()?, reference.as_intensity()?);
    let mut x = vec![0.0; nx * ny];
    let mut y = vec![0.0; nx * ny];
    let mut total = 0.0;
    for z in 0..nz {
        for i in 0..nx * ny {
            x[i] = a[i * nz + z] as f64;
            y[i] = b[i * nz + z] as f64;
        }
        total += ssim_plane(&x, &y, nx, ny);
    }
    Ok(total / nz as f64)
}

fn ssim_plane(x: &[f64], y: &[f64], nx: usize, ny: usize) -> f64 {
    const C1: f64 = 0.01 * 0.01;
    const C2: f64 = 0.03 * 0.03;
    let w = SSIM_WINDOW;
    let np = (w * w) as f64;
    let cov_norm = np / (np - 1.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i0 in 0..=nx - w {
        for j0 in 0..=ny - w {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in i0..i0 + w {
                for j in j0..j0 + w {
                    let (p, q) = (x[i * ny + j], y[i * ny + j]);
                    sx += p;
                    sy += q;
                    sxx += p * p;
                    syy += q * q;
                    sxy += p * q;
                }
            }
            let (ux, uy) = (sx / np, sy / np);
            let vx = cov_norm * (sxx / np - ux * ux);
            let vy = cov_norm * (syy / np - uy * uy);
            let vxy = cov_norm * (sxy / np - ux * uy);
            let num = (2.0 * ux * uy + C1) * (2.0 * vxy + C2);
            let den = (ux * ux + uy * uy + C1) * (vx + vy + C2);
            sum += num / den;
            count += 1;
        }
    }
    sum / count as f64
}

/// Dice overlap of `class` between two label volumes; 1 when neither
/// contains it.
pub fn dice(pred: &Volume, truth: &Volume, class: u8) -> Result<f64> {
    same_shape("dice", pred, truth)?;
    let (p, g) = (pred.as_labels()?, truth.as_labels()?);
    let (mut np, mut ng, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in p.iter().zip(g) {
        let (ia, ib) = (a == class, b == class);
        np += ia as usize;
        ng += ib as usize;
        both += (ia && ib) as usize;
    }
    if np + ng == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (np + ng) as f64)
}

/// Per-row argmax of class scores as a label volume; ties go to the lowest
/// class index.
pub fn argmax_labels<T: Real>(scores: &Tensor<T>, dims: &[usize]) -> Result<Volume> {
    let classes = scores.cols();
    if classes == 0 || classes > 256 {
        return Err(Error::dim("argmax_labels", format!("{classes} classes")));
    }
    let labels = (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    Volume::labels(dims.to_vec(), labels)
}
