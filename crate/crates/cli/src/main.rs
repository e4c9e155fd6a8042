mod args;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;
use nfield::datagen::{load_volume, VolumeKind};
use nfield::fieldmodels::{save_checkpoint, Arch, ModelConfig};
use nfield::harness::{fit_volume, render_scatter, run_experiment, volume_psnr, write_phantoms, ExperimentConfig, ScatterMetric};
use nfield::metrics::{dice, load_metrics, psnr, ssim};
use nfield::training::TrainConfig;
use nfield::Error;

use args::{parse_dims, required, Cli, Command, Configurable, ContinualArgs, EvalArgs, FitArgs, PhantomArgs, ReportArgs};

pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(e) => match e.root() {
                Error::Diverged { .. } => 3,
                Error::Config(_) => 1,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

fn phantom(a: PhantomArgs) -> Result<(), CliError> {
    let a = a.resolve()?;
    let mut cfg = ExperimentConfig::default();
    if let Some(d) = &a.dims {
        cfg.dims = parse_dims(d)?;
    }
    cfg.frames = a.frames.unwrap_or(cfg.frames);
    cfg.cases = a.cases.unwrap_or(cfg.cases);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let out = required(a.out, "out")?;
    let files = write_phantoms(&cfg, &out)?;
    println!("wrote {} volumes to {}", files.len(), out.display());
    Ok(())
}

fn fit(a: FitArgs) -> Result<(), CliError> {
    let a = a.resolve()?;
    let arch: Arch = required(a.model, "model")?;
    let volume = required(a.volume, "volume")?;
    let out = required(a.out, "out")?;
    let volume = load_volume(volume)?;
    let defaults = TrainConfig::for_arch(arch);
    let train = TrainConfig {
        iterations: a.iters.unwrap_or(defaults.iterations),
        lr: a.lr.unwrap_or(defaults.lr),
        batch_coords: a.batch.unwrap_or(defaults.batch_coords),
        seed: a.seed.unwrap_or(0),
        ..defaults
    };
    let base = ModelConfig::new(arch, volume.dims().len(), 1);
    let model_cfg = base
        .clone()
        .with_hidden(a.hidden_layers.unwrap_or(base.hidden_layers), a.hidden_width.unwrap_or(base.hidden_width))
        .with_seed(train.seed);
    let (model, trace) = fit_volume(arch, &volume, Some(model_cfg), &train)?;
    save_checkpoint(&model, &out)?;
    if let Some(t) = a.trace {
        trace.save_csv(t)?;
    }
    println!("psnr={:.4}", volume_psnr(&model, &volume)?);
    if let Some(l) = trace.final_fit_loss() {
        println!("loss_fit={l:.6e}");
    }
    Ok(())
}

fn continual(a: ContinualArgs) -> Result<(), CliError> {
    let a = a.resolve()?;
    let d = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        experiment: required(a.experiment, "experiment")?,
        dims: match &a.dims {
            Some(s) => parse_dims(s)?,
            None => d.dims,
        },
        frames: a.frames.unwrap_or(d.frames),
        cases: a.cases.unwrap_or(d.cases),
        seed: a.seed.unwrap_or(d.seed),
        models: a.models.unwrap_or(d.models),
        strategies: a.strategies.unwrap_or(d.strategies),
        hidden_layers: a.hidden_layers.unwrap_or(d.hidden_layers),
        hidden_width: a.hidden_width.unwrap_or(d.hidden_width),
        iterations: a.iters.unwrap_or(d.iterations),
        batch_coords: a.batch.unwrap_or(d.batch_coords),
        lr: a.lr.or(d.lr),
        huber_delta: d.huber_delta,
        lambda: a.lambda.unwrap_or(d.lambda),
        n_distil: a.n_distil.or(d.n_distil),
        workers: a.workers.unwrap_or(d.workers),
        out_dir: Some(required(a.out, "out")?),
    };
    let rows = run_experiment(&cfg)?;
    let out = cfg.out_dir.as_ref().expect("set above");
    println!("wrote {} rows to {}", rows.len(), out.join("metrics.csv").display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let a = a.resolve()?;
    let (pred, reference) = (required(a.pred, "pred")?, required(a.reference, "ref")?);
    let (pred, reference) = (load_volume(pred)?, load_volume(reference)?);
    if a.labels {
        for c in 1..=3u8 {
            println!("dice_c{c}={:.6}", dice(&pred, &reference, c)?);
        }
    } else {
        if pred.kind() != VolumeKind::Intensity {
            return Err(CliError::Usage("label volumes need --labels".into()));
        }
        println!("psnr={:.6}", psnr(&pred, &reference, 1.0)?);
        println!("ssim={:.6}", ssim(&pred, &reference)?);
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let a = a.resolve()?;
    let metrics = required(a.metrics, "metrics")?;
    let out = required(a.out, "out")?;
    let rows = load_metrics(metrics)?;
    render_scatter(&rows, a.metric.unwrap_or(ScatterMetric::Psnr), &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Phantom(a) => phantom(a),
        Command::Fit(a) => fit(a),
        Command::Continual(a) => continual(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
