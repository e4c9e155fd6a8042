use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation of one target after training through a given task.
/// Metrics that do not apply to the target are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub case_id: u64,
    pub model: String,
    pub strategy: String,
    pub trained_through_task: usize,
    pub eval_target: String,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub dice_c1: Option<f64>,
    pub dice_c2: Option<f64>,
    pub dice_c3: Option<f64>,
}

impl MetricsRow {
    pub fn dice(&self) -> [Option<f64>; 3] {
        [self.dice_c1, self.dice_c2, self.dice_c3]
    }

    pub fn mean_dice(&self) -> Option<f64> {
        let d: Vec<f64> = self.dice().into_iter().flatten().collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    }
}

/// Mean metrics of one (model, strategy, trained_through_task, eval_target) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub strategy: String,
    pub trained_through_task: usize,
    pub eval_target: String,
    pub count: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub dice_c1: Option<f64>,
    pub dice_c2: Option<f64>,
    pub dice_c3: Option<f64>,
}

#[derive(Default)]
struct Acc {
    count: usize,
    sums: [(f64, usize); 5],
}

impl Acc {
    fn mean(&self, k: usize) -> Option<f64> {
        let (s, n) = self.sums[k];
        (n > 0).then(|| s / n as f64)
    }
}

pub fn aggregate(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::Contract("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<(String, String, usize, String), Acc> = BTreeMap::new();
    for r in rows {
        let acc = groups
            .entry((r.model.clone(), r.strategy.clone(), r.trained_through_task, r.eval_target.clone()))
            .or_default();
        acc.count += 1;
        for (slot, v) in acc
            .sums
            .iter_mut()
            .zip([r.psnr, r.ssim, r.dice_c1, r.dice_c2, r.dice_c3])
        {
            if let Some(v) = v {
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|((model, strategy, trained_through_task, eval_target), acc)| SummaryRow {
            model,
            strategy,
            trained_through_task,
            eval_target,
            count: acc.count,
            psnr: acc.mean(0),
            ssim: acc.mean(1),
            dice_c1: acc.mean(2),
            dice_c2: acc.mean(3),
            dice_c3: acc.mean(4),
        })
        .collect())
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "case_id",
        "model",
        "strategy",
        "trained_through_task",
        "eval_target",
        "psnr",
        "ssim",
        "dice_c1",
        "dice_c2",
        "dice_c3",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

pub fn save_metrics(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::from(e).with_path(path))?;
    write_metrics(rows, std::io::BufWriter::new(file)).map_err(|e| e.with_path(path))
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).with_path(path))?;
    read_metrics(std::io::BufReader::new(file)).map_err(|e| e.with_path(path))
}
