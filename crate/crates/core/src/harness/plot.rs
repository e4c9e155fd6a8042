use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::continual::Strategy;
use crate::error::{Error, Result};
use crate::fieldmodels::Arch;
use crate::metrics::MetricsRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScatterMetric {
    Psnr,
    Ssim,
}

impl ScatterMetric {
    fn pick(self, r: &MetricsRow) -> Option<f64> {
        match self {
            ScatterMetric::Psnr => r.psnr,
            ScatterMetric::Ssim => r.ssim,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ScatterMetric::Psnr => "PSNR (dB)",
            ScatterMetric::Ssim => "SSIM",
        }
    }
}

impl FromStr for ScatterMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psnr" => Ok(ScatterMetric::Psnr),
            "ssim" => Ok(ScatterMetric::Ssim),
            _ => Err(Error::Config(format!("unknown metric {s:?} (psnr|ssim)"))),
        }
    }
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn frame_number(target: &str) -> Option<usize> {
    target.strip_prefix("frame")?.parse().ok()
}

struct Point {
    model: String,
    strategy: String,
    first: f64,
    last: f64,
}

/// Case-averaged first-frame and last-frame metric after the final task,
/// one point per (model, strategy).
fn points(rows: &[MetricsRow], metric: ScatterMetric) -> Result<(Vec<Point>, usize)> {
    let final_task = rows
        .iter()
        .map(|r| r.trained_through_task)
        .max()
        .ok_or_else(|| Error::Contract("no rows to plot".into()))?;
    let mut acc: BTreeMap<(usize, usize, String, String), [(f64, usize); 2]> = BTreeMap::new();
    for r in rows {
        let rank = |names: &[&str], n: &str| names.iter().position(|x| *x == n).unwrap_or(usize::MAX);
        let key = (
            rank(&Arch::ALL.map(|a| a.name()), &r.model),
            rank(&Strategy::ALL.map(|s| s.name()), &r.strategy),
            r.model.clone(),
            r.strategy.clone(),
        );
        let slot = acc.entry(key).or_insert([(0.0, 0); 2]);
        if r.trained_through_task != final_task {
            continue;
        }
        let which = match frame_number(&r.eval_target) {
            Some(1) => 0,
            Some(f) if f == final_task => 1,
            _ => continue,
        };
        if let Some(v) = metric.pick(r) {
            slot[which].0 += v;
            slot[which].1 += 1;
        }
    }
    let mut missing = Vec::new();
    let mut pts = Vec::new();
    for ((_, _, model, strategy), [first, last]) in acc {
        for (name, (_, n)) in [("frame1".to_string(), first), (format!("frame{final_task}"), last)] {
            if n == 0 {
                missing.push(format!("{model}/{strategy}/{name}"));
            }
        }
        if first.1 > 0 && last.1 > 0 {
            pts.push(Point {
                model,
                strategy,
                first: first.0 / first.1 as f64,
                last: last.0 / last.1 as f64,
            });
        }
    }
    if !missing.is_empty() {
        return Err(Error::Contract(format!(
            "missing {} after task {final_task} for: {}",
            metric.label(),
            missing.join(", ")
        )));
    }
    Ok((pts, final_task))
}

fn nice_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.08 * (hi - lo);
    (lo - pad, hi + pad)
}

fn marker(out: &mut String, strategy: &str, x: f64, y: f64, color: &str) {
    match strategy {
        "baseline" => {
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="6" fill="{color}" stroke="black"/>"#);
        }
        "distillation" => {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{color}" stroke="black"/>"#,
                x - 6.0,
                y - 6.0
            );
        }
        _ => {
            let _ = writeln!(
                out,
                r#"<polygon points="{x:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}" stroke="black"/>"#,
                y - 7.0,
                x + 7.0,
                y + 6.0,
                x - 7.0,
                y + 6.0
            );
        }
    }
}

/// Stability (first frame) against plasticity (last frame) as SVG text.
pub fn scatter_svg(rows: &[MetricsRow], metric: ScatterMetric) -> Result<String> {
    let (pts, final_task) = points(rows, metric)?;
    let (x0, x1) = nice_range(pts.iter().map(|p| p.first));
    let (y0, y1) = nice_range(pts.iter().map(|p| p.last));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
    let sy = |v: f64| TOP + ph - (v - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.2}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.2}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">First frame {}</text>"#,
        LEFT + pw / 2.0,
        H - 15.0,
        metric.label()
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">Frame {final_task} {}</text>"#,
        TOP + ph / 2.0,
        metric.label()
    );

    let mut models: Vec<&str> = Vec::new();
    let mut strategies: Vec<&str> = Vec::new();
    for p in &pts {
        if !models.contains(&p.model.as_str()) {
            models.push(&p.model);
        }
        if !strategies.contains(&p.strategy.as_str()) {
            strategies.push(&p.strategy);
        }
    }
    let color = |m: &str| COLORS[models.iter().position(|x| *x == m).unwrap_or(0) % COLORS.len()];
    for p in &pts {
        marker(&mut s, &p.strategy, sx(p.first), sy(p.last), color(&p.model));
    }

    let lx = W - RIGHT + 20.0;
    let mut ly = TOP + 10.0;
    for m in &models {
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{:.2}" width="12" height="12" fill="{}"/><text x="{:.2}" y="{:.2}">{m}</text>"#,
            ly - 6.0,
            color(m),
            lx + 20.0,
            ly + 4.0
        );
        ly += 20.0;
    }
    ly += 10.0;
    for st in &strategies {
        marker(&mut s, st, lx + 6.0, ly, "white");
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{st}</text>"#, lx + 20.0, ly + 4.0);
        ly += 20.0;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_scatter(rows: &[MetricsRow], metric: ScatterMetric, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = scatter_svg(rows, metric)?;
    std::fs::write(path, svg).map_err(|e| Error::from(e).with_path(path))
}
