//! Reconstruction and segmentation quality: PSNR, SSIM, Dice, and the
//! per-evaluation rows written to `metrics.csv`.

mod image;
mod rows;

pub use image::{argmax_labels, dice, psnr, ssim, PSNR_CAP, SSIM_WINDOW};
pub use rows::{aggregate, load_metrics, read_metrics, save_metrics, write_metrics, MetricsRow, SummaryRow};

#[cfg(test)]
mod tests;
