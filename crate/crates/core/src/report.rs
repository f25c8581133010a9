//! Result documents: the per-cell CSV, the JSON document with raw scores,
//! and SVG score-versus-k plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::OutcomeKind;
use crate::error::{Error, Result};
use crate::eval::BootstrapResult;
use crate::fkp::{build_fkp_table, FkpReport, SweepGrid};
use crate::fsutil;

pub const RESULTS_CSV_HEADER: &str = "task,method,k,n_ta,mean,std_error,ci_low,ci_high,seed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub name: String,
    pub family: String,
    pub kind: OutcomeKind,
    /// Width of the unreduced features.
    pub full_dims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub config_hash: String,
    pub seed: u64,
    /// The fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub tasks: Vec<TaskInfo>,
    pub cells: Vec<BootstrapResult>,
}

impl ResultsDocument {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsutil::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("results serialize");
        v.push(b'\n');
        v
    }

    pub fn task(&self, name: &str) -> Result<&TaskInfo> {
        self.tasks
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::data(format!("cell refers to unknown task {name:?}")))
    }

    pub fn to_csv(&self) -> String {
        results_csv(&self.cells)
    }

    pub fn grid(&self) -> Result<SweepGrid> {
        let mut ks = Vec::new();
        let mut n_tas = Vec::new();
        for c in &self.cells {
            self.task(&c.task_name)?;
            ks.push(c.k);
            n_tas.push(c.n_ta);
        }
        let mut grid = SweepGrid::new(ks, n_tas);
        for c in &self.cells {
            grid.insert(c.clone());
        }
        Ok(grid)
    }

    pub fn fkp_report(&self) -> Result<FkpReport> {
        let families: IndexMap<String, String> =
            self.tasks.iter().map(|t| (t.name.clone(), t.family.clone())).collect();
        let mut report = build_fkp_table(&self.grid()?, &families)?;
        report.metadata.insert("seed".into(), serde_json::json!(self.seed));
        report.metadata.insert("config_hash".into(), serde_json::json!(self.config_hash));
        Ok(report)
    }
}

pub fn results_csv(cells: &[BootstrapResult]) -> String {
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.task_name, c.method, c.k, c.n_ta, c.mean, c.std_error, c.ci_low, c.ci_high, c.seed
        )
        .unwrap();
    }
    out
}

pub fn fkp_json(report: &FkpReport) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(report).expect("report serializes");
    v.push(b'\n');
    v
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 120.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Score-versus-k figure for one task and method: one line per `n_ta` with
/// a shaded interval band, and a dashed line at the unreduced score.
pub fn plot_svg(task: &str, method: &str, cells: &[&BootstrapResult], full_dims: usize) -> String {
    let mut by_n: BTreeMap<usize, Vec<&BootstrapResult>> = BTreeMap::new();
    let mut reference: BTreeMap<usize, f64> = BTreeMap::new();
    for &c in cells {
        if c.k == full_dims {
            reference.insert(c.n_ta, c.mean);
        } else {
            by_n.entry(c.n_ta).or_default().push(c);
        }
    }
    for line in by_n.values_mut() {
        line.sort_by_key(|c| c.k);
    }
    let mut ks: Vec<usize> = by_n.values().flatten().map(|c| c.k).collect();
    ks.sort_unstable();
    ks.dedup();

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in by_n.values().flatten() {
        lo = lo.min(c.ci_low);
        hi = hi.max(c.ci_high);
    }
    for &v in reference.values() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let (x0, x1) = (ks[0] as f64, ks[ks.len() - 1] as f64);
    let px = |k: usize| {
        if x1 > x0 {
            LEFT + ((k as f64).log2() - x0.log2()) / (x1.log2() - x0.log2()) * (W - LEFT - RIGHT)
        } else {
            LEFT + 0.5 * (W - LEFT - RIGHT)
        }
    };
    let py = |v: f64| TOP + (hi - v) / (hi - lo) * (H - TOP - BOTTOM);

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{} ({})</text>"#,
        LEFT + 0.5 * (W - LEFT - RIGHT),
        escape(task),
        escape(method)
    )
    .unwrap();
    let (bx, by) = (H - BOTTOM, W - RIGHT);
    writeln!(s, r#"<line x1="{LEFT}" y1="{bx}" x2="{by}" y2="{bx}" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bx}" stroke="black"/>"#).unwrap();
    for &k in &ks {
        let x = px(k);
        writeln!(s, r#"<line x1="{x:.2}" y1="{bx}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, bx + 5.0).unwrap();
        writeln!(s, r#"<text class="xtick" x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{k}</text>"#, bx + 18.0)
            .unwrap();
    }
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = py(v);
        writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{v:.3}</text>"#, LEFT - 8.0, y + 4.0)
            .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">k (log scale)</text>"#,
        LEFT + 0.5 * (W - LEFT - RIGHT),
        H - 14.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.1})">mean score</text>"#,
        TOP + 0.5 * (H - TOP - BOTTOM),
        TOP + 0.5 * (H - TOP - BOTTOM)
    )
    .unwrap();

    for (i, (n_ta, line)) in by_n.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = line.iter().map(|c| format!("{:.2},{:.2}", px(c.k), py(c.ci_high))).collect();
        let lower: Vec<String> = line.iter().rev().map(|c| format!("{:.2},{:.2}", px(c.k), py(c.ci_low))).collect();
        writeln!(
            s,
            r#"<polygon class="ci" points="{} {}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        )
        .unwrap();
        let pts: Vec<String> = line.iter().map(|c| format!("{:.2},{:.2}", px(c.k), py(c.mean))).collect();
        writeln!(
            s,
            r#"<polyline data-n-ta="{n_ta}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        )
        .unwrap();
        if let Some(&r) = reference.get(n_ta) {
            let y = py(r);
            writeln!(
                s,
                r#"<line class="reference" x1="{LEFT}" y1="{y:.2}" x2="{by}" y2="{y:.2}" stroke="{color}" stroke-dasharray="6 4"/>"#
            )
            .unwrap();
        }
        let ly = TOP + 18.0 * i as f64;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">N_ta = {n_ta}</text>"#,
            W - RIGHT + 12.0,
            ly + 4.0
        )
        .unwrap();
    }
    if !reference.is_empty() {
        let ly = TOP + 18.0 * by_n.len() as f64;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11">dashed: k = {full_dims}</text>"#,
            W - RIGHT + 12.0,
            ly + 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Write one SVG per (task, method) into `dir`. Groups holding only the
/// unreduced column produce no file.
pub fn write_plots(doc: &ResultsDocument, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&BootstrapResult>> = BTreeMap::new();
    for c in &doc.cells {
        doc.task(&c.task_name)?;
        groups.entry((&c.task_name, &c.method)).or_default().push(c);
    }
    let mut written = Vec::new();
    for ((task, method), cells) in groups {
        let full = doc.task(task)?.full_dims;
        if cells.iter().all(|c| c.k == full) {
            log::warn!("{task}/{method}: only the unreduced column, no plot written");
            continue;
        }
        let path = dir.join(format!("{}_{}.svg", file_stem(task), file_stem(method)));
        fsutil::write_atomic(&path, plot_svg(task, method, &cells, full).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
