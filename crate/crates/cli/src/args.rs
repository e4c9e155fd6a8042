use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nfield::continual::Strategy;
use nfield::fieldmodels::Arch;
use nfield::harness::{Experiment, ScatterMetric};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "nfield", version, about = "Continual learning for neural fields on a synthetic cardiac phantom")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write phantom image and label volumes for every case and frame.
    Phantom(PhantomArgs),
    /// Fit one architecture to one intensity volume.
    Fit(FitArgs),
    /// Run the domain- or signal-expansion experiment.
    Continual(ContinualArgs),
    /// Compare two volumes: PSNR and SSIM, or Dice with --labels.
    Eval(EvalArgs),
    /// Render the first-frame vs last-frame scatter from a metrics CSV.
    Report(ReportArgs),
}

/// Flags are `Option`s so values from `--config` fill whatever was not given
/// on the command line.
pub trait Configurable: Serialize + DeserializeOwned + Sized {
    fn config_path(&self) -> Option<&Path>;

    fn resolve(self) -> Result<Self, CliError> {
        let Some(path) = self.config_path().map(Path::to_path_buf) else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let file: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let serde_json::Value::Object(mut merged) = file else {
            return Err(CliError::Usage(format!("{}: expected a JSON object", path.display())));
        };
        let serde_json::Value::Object(flags) = serde_json::to_value(&self).expect("flags serialize") else {
            unreachable!("flag structs serialize to objects")
        };
        merged.extend(flags);
        serde_json::from_value(serde_json::Value::Object(merged))
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

macro_rules! configurable {
    ($t:ty) => {
        impl Configurable for $t {
            fn config_path(&self) -> Option<&Path> {
                self.config.as_deref()
            }
        }
    };
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PhantomArgs {
    /// Grid size as XxYxZ [default: 32x32x8]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<String>,
    /// Time frames spread over [-1, 1] [default: 4]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    /// Number of cases [default: 8]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cases: Option<usize>,
    /// Base seed [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// JSON file with defaults for any of these flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
configurable!(PhantomArgs);

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<Arch>,
    /// Intensity volume (NFV)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<PathBuf>,
    /// [default: 500]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// [default: 0.001]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// [default: 4096]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// [default: 3]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_layers: Option<usize>,
    /// [default: 256]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_width: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Checkpoint to write
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Also write the loss trace as CSV
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
configurable!(FitArgs);

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ContinualArgs {
    /// domain or signal
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    /// Comma-separated architectures [default: all four]
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<Arch>>,
    /// Comma-separated strategies [default: baseline,distillation]
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<Strategy>>,
    /// Distillation weight [default: 1.0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// [default: 8]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cases: Option<usize>,
    /// [default: 32x32x8]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<String>,
    /// [default: 4]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Iterations per task [default: 300]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// Overrides the per-architecture learning rate
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// Coordinates per iteration [default: 1024]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// Distillation coordinates per iteration [default: --batch]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_distil: Option<usize>,
    /// [default: 3]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_layers: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_width: Option<usize>,
    /// Cases trained in parallel [default: 1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
configurable!(ContinualArgs);

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred: Option<PathBuf>,
    #[arg(long = "ref")]
    #[serde(rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    /// Treat both files as label volumes and report Dice per class
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub labels: bool,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
configurable!(EvalArgs);

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ReportArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PathBuf>,
    /// psnr or ssim [default: psnr]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<ScatterMetric>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
configurable!(ReportArgs);

pub fn parse_dims(s: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let bad = || CliError::Usage(format!("dims must look like 32x32x8, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut dims = [0; 3];
    for (d, p) in dims.iter_mut().zip(parts) {
        *d = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(dims)
}

pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}
