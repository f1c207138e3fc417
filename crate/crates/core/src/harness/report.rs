//! Result types and their table, plot-data, and JSON renderings.
//!
//! Plot data is comma-separated with `#` comment lines carrying the
//! configuration echo. Accuracies are written with 17 significant digits, so
//! [`parse_plotdata`] recovers them exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Direction, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAccuracy {
    pub site: String,
    pub n_test: usize,
    pub accuracy: f64,
}

/// One full LOSO run under a single seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub per_site: Vec<SiteAccuracy>,
    pub mean_accuracy: f64,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

impl SeedResult {
    pub fn new(seed: u64, per_site: Vec<SiteAccuracy>) -> Self {
        let mean_accuracy = mean(per_site.iter().map(|s| s.accuracy));
        SeedResult {
            seed,
            per_site,
            mean_accuracy,
        }
    }
}

/// LOSO accuracy of one configuration on one ROI subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Configuration echo; `seed` is the first seed run.
    pub config: TrainConfig,
    /// ROI indices in the order they were fed to the model.
    pub roi_subset: Vec<usize>,
    pub param_count: usize,
    /// Per-site accuracy averaged over seeds, in site order.
    pub per_site_accuracy: Vec<SiteAccuracy>,
    /// Unweighted mean of `per_site_accuracy`.
    pub mean_accuracy: f64,
    pub seeds: Vec<SeedResult>,
}

impl EvalReport {
    pub(crate) fn from_seeds(config: TrainConfig, roi_subset: Vec<usize>, param_count: usize, seeds: Vec<SeedResult>) -> Self {
        let per_site_accuracy: Vec<SiteAccuracy> = seeds[0]
            .per_site
            .iter()
            .enumerate()
            .map(|(i, s)| SiteAccuracy {
                site: s.site.clone(),
                n_test: s.n_test,
                accuracy: mean(seeds.iter().map(|r| r.per_site[i].accuracy)),
            })
            .collect();
        let mean_accuracy = mean(per_site_accuracy.iter().map(|s| s.accuracy));
        EvalReport {
            config,
            roi_subset,
            param_count,
            per_site_accuracy,
            mean_accuracy,
            seeds,
        }
    }

    pub fn site_accuracy(&self, site: &str) -> Option<f64> {
        self.per_site_accuracy.iter().find(|s| s.site == site).map(|s| s.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiAccuracy {
    pub roi: usize,
    pub report: EvalReport,
}

/// Single-ROI LOSO accuracies and the ROI order they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub config: TrainConfig,
    /// One entry per candidate ROI, ascending by ROI index.
    pub per_roi: Vec<RoiAccuracy>,
    /// Candidate ROIs by mean accuracy, best first; ties go to the lower index.
    pub rank_order: Vec<usize>,
}

impl RankingResult {
    pub fn new(config: TrainConfig, mut per_roi: Vec<RoiAccuracy>) -> Self {
        per_roi.sort_by_key(|r| r.roi);
        let mut order: Vec<&RoiAccuracy> = per_roi.iter().collect();
        order.sort_by(|a, b| {
            b.report
                .mean_accuracy
                .total_cmp(&a.report.mean_accuracy)
                .then(a.roi.cmp(&b.roi))
        });
        let rank_order = order.iter().map(|r| r.roi).collect();
        RankingResult {
            config,
            per_roi,
            rank_order,
        }
    }

    /// `(roi, mean accuracy)` pairs ascending by ROI index.
    pub fn per_roi_accuracy(&self) -> Vec<(usize, f64)> {
        self.per_roi.iter().map(|r| (r.roi, r.report.mean_accuracy)).collect()
    }

    pub fn accuracy_of(&self, roi: usize) -> Option<f64> {
        self.per_roi.iter().find(|r| r.roi == roi).map(|r| r.report.mean_accuracy)
    }

    /// 1-based rank of `roi`.
    pub fn rank_of(&self, roi: usize) -> Option<usize> {
        self.rank_order.iter().position(|&r| r == roi).map(|p| p + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub direction: Direction,
    pub config: TrainConfig,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.k == k).map(|p| p.report.mean_accuracy)
    }

    /// Highest mean accuracy and its k; the smallest k wins ties.
    pub fn best(&self) -> (usize, f64) {
        let mut best = (self.points[0].k, self.points[0].report.mean_accuracy);
        for p in &self.points[1..] {
            if p.report.mean_accuracy > best.1 {
                best = (p.k, p.report.mean_accuracy);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub model: ModelConfig,
    pub best_k: usize,
    pub best_accuracy: f64,
    pub sweep: SweepResult,
}

impl ComparisonEntry {
    pub fn new(sweep: SweepResult) -> Self {
        let (best_k, best_accuracy) = sweep.best();
        ComparisonEntry {
            model: sweep.config.model.clone(),
            best_k,
            best_accuracy,
            sweep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub entries: Vec<ComparisonEntry>,
}

/// Published ADHD-200 results per variant: best mean LOSO accuracy (%) with
/// its ROI count, and the accuracy using all 116 ROIs. Shown next to measured
/// numbers in comparison tables; nothing is tested against them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTarget {
    pub variant: Variant,
    pub best_accuracy_pct: f64,
    pub best_k: usize,
    pub all_roi_accuracy_pct: f64,
}

pub const ADHD200_REFERENCE: [ReferenceTarget; 4] = [
    ReferenceTarget { variant: Variant::SccnnRnn, best_accuracy_pct: 70.6, best_k: 15, all_roi_accuracy_pct: 63.6 },
    ReferenceTarget { variant: Variant::Ascrnn, best_accuracy_pct: 69.97, best_k: 20, all_roi_accuracy_pct: 65.2 },
    ReferenceTarget { variant: Variant::Asdrnn, best_accuracy_pct: 68.05, best_k: 17, all_roi_accuracy_pct: 68.4 },
    ReferenceTarget { variant: Variant::Assrnn, best_accuracy_pct: 70.46, best_k: 13, all_roi_accuracy_pct: 66.86 },
];

pub fn reference_for(variant: Variant) -> &'static ReferenceTarget {
    ADHD200_REFERENCE.iter().find(|r| r.variant == variant).expect("every variant has a reference")
}

/// Short label distinguishing model configurations, e.g. `ASSRNN(l=8,w=4)`.
pub fn model_label(m: &ModelConfig) -> String {
    match (m.dilation, m.slicing) {
        (_, Some(s)) => format!("{}(l={},w={})", m.variant, s.length, s.stride),
        (Some(d), None) if d != crate::model::DEFAULT_DILATION => format!("{}(d={d})", m.variant),
        _ => m.variant.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Table,
    Plotdata,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table" => Ok(ReportFormat::Table),
            "plotdata" => Ok(ReportFormat::Plotdata),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Report(format!(
                "unknown format {other:?} (expected table, plotdata or json)"
            ))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Table => "txt",
            ReportFormat::Plotdata => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// Any result that can be written as a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Report {
    Eval(EvalReport),
    Ranking(RankingResult),
    Sweep(SweepResult),
    Comparison(ComparisonResult),
}

impl From<EvalReport> for Report {
    fn from(r: EvalReport) -> Self {
        Report::Eval(r)
    }
}

impl From<RankingResult> for Report {
    fn from(r: RankingResult) -> Self {
        Report::Ranking(r)
    }
}

impl From<SweepResult> for Report {
    fn from(r: SweepResult) -> Self {
        Report::Sweep(r)
    }
}

impl From<ComparisonResult> for Report {
    fn from(r: ComparisonResult) -> Self {
        Report::Comparison(r)
    }
}

/// Exact decimal form used in plot data.
fn exact(v: f64) -> String {
    format!("{v:.16e}")
}

fn pct(v: f64) -> String {
    format!("{:6.2}%", 100.0 * v)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn echo(out: &mut String, kind: &str, config: &TrainConfig, seeds: &[u64]) {
    let _ = writeln!(out, "# roiranknet {kind}");
    let _ = writeln!(out, "# seeds: {}", join(seeds));
    for line in config.to_kv_string().lines() {
        let _ = writeln!(out, "# {line}");
    }
}

fn report_seeds(r: &EvalReport) -> Vec<u64> {
    r.seeds.iter().map(|s| s.seed).collect()
}

fn eval_table(out: &mut String, r: &EvalReport) {
    let _ = writeln!(out, "ROIs: [{}]", join(&r.roi_subset));
    let _ = writeln!(out, "trainable parameters: {}", r.param_count);
    let _ = writeln!(out, "{:<16} {:>7} {:>9}", "site", "n_test", "accuracy");
    for s in &r.per_site_accuracy {
        let _ = writeln!(out, "{:<16} {:>7} {:>9}", s.site, s.n_test, pct(s.accuracy));
    }
    let _ = writeln!(out, "{:<16} {:>7} {:>9}", "mean", "", pct(r.mean_accuracy));
    if r.seeds.len() > 1 {
        for s in &r.seeds {
            let _ = writeln!(out, "  seed {:<10} mean {}", s.seed, pct(s.mean_accuracy));
        }
    }
}

fn model_line(out: &mut String, config: &TrainConfig) {
    let _ = writeln!(
        out,
        "model {}, {} epochs, batch {}, learning rate {}, l2 {}",
        model_label(&config.model),
        config.epochs,
        config.batch_size,
        config.learning_rate,
        config.l2_factor
    );
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::Eval(_) => "eval",
            Report::Ranking(_) => "ranking",
            Report::Sweep(_) => "sweep",
            Report::Comparison(_) => "comparison",
        }
    }

    fn config(&self) -> &TrainConfig {
        match self {
            Report::Eval(r) => &r.config,
            Report::Ranking(r) => &r.config,
            Report::Sweep(r) => &r.config,
            Report::Comparison(r) => &r.entries[0].sweep.config,
        }
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Table => Ok(self.table()),
            ReportFormat::Plotdata => Ok(self.plotdata()),
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let config = self.config();
        match self {
            Report::Eval(r) => {
                let _ = writeln!(out, "Leave-one-site-out evaluation");
                model_line(&mut out, config);
                let _ = writeln!(out, "seeds: {}", join(&report_seeds(r)));
                eval_table(&mut out, r);
            }
            Report::Ranking(r) => {
                let _ = writeln!(out, "Single-ROI ranking over {} candidate ROIs", r.per_roi.len());
                model_line(&mut out, config);
                let _ = writeln!(out, "seed: {}", config.seed);
                let _ = writeln!(out, "{:>5} {:>5} {:>9}  per-site", "rank", "roi", "mean");
                for (i, &roi) in r.rank_order.iter().enumerate() {
                    let rep = &r.per_roi.iter().find(|x| x.roi == roi).expect("ranked ROI has a report").report;
                    let sites: Vec<String> = rep.per_site_accuracy.iter().map(|s| format!("{}={}", s.site, pct(s.accuracy).trim())).collect();
                    let _ = writeln!(out, "{:>5} {:>5} {:>9}  {}", i + 1, roi, pct(rep.mean_accuracy), sites.join(" "));
                }
            }
            Report::Sweep(r) => {
                let _ = writeln!(out, "ROI-count sweep ({} direction)", r.direction);
                model_line(&mut out, config);
                let _ = writeln!(out, "seed: {}", config.seed);
                let _ = writeln!(out, "{:>4} {:>9}  added ROI", "k", "mean");
                for p in &r.points {
                    let added = p.report.roi_subset.last().copied().unwrap_or_default();
                    let _ = writeln!(out, "{:>4} {:>9}  {}", p.k, pct(p.report.mean_accuracy), added);
                }
                let (k, acc) = r.best();
                let _ = writeln!(out, "best: {} at k = {k}", pct(acc).trim());
            }
            Report::Comparison(r) => {
                let _ = writeln!(out, "Model comparison over top-ranked ROI subsets");
                let _ = writeln!(out, "seed: {}", config.seed);
                let _ = writeln!(
                    out,
                    "{:<20} {:>14} {:>14} {:>16}",
                    "model", "best (k)", "params", "ADHD-200 ref (k)"
                );
                for e in &r.entries {
                    let refr = reference_for(e.model.variant);
                    let params = e.sweep.points[0].report.param_count;
                    let _ = writeln!(
                        out,
                        "{:<20} {:>14} {:>14} {:>16}",
                        model_label(&e.model),
                        format!("{}({})", pct(e.best_accuracy).trim(), e.best_k),
                        params,
                        format!("{:.2}%({})", refr.best_accuracy_pct, refr.best_k)
                    );
                }
            }
        }
        out
    }

    pub fn plotdata(&self) -> String {
        let mut out = String::new();
        let config = self.config();
        match self {
            Report::Eval(r) => {
                echo(&mut out, "eval", config, &report_seeds(r));
                let _ = writeln!(out, "# rois: {}", join(&r.roi_subset));
                out.push_str("site,accuracy\n");
                for s in &r.per_site_accuracy {
                    let _ = writeln!(out, "{},{}", s.site, exact(s.accuracy));
                }
            }
            Report::Ranking(r) => {
                echo(&mut out, "ranking", config, &[config.seed]);
                let _ = writeln!(out, "# rank_order: {}", join(&r.rank_order));
                out.push_str("roi,accuracy\n");
                for (roi, acc) in r.per_roi_accuracy() {
                    let _ = writeln!(out, "{roi},{}", exact(acc));
                }
            }
            Report::Sweep(r) => {
                echo(&mut out, "sweep", config, &[config.seed]);
                let _ = writeln!(out, "# direction: {}", r.direction);
                out.push_str("k,accuracy\n");
                for p in &r.points {
                    let _ = writeln!(out, "{},{}", p.k, exact(p.report.mean_accuracy));
                }
            }
            Report::Comparison(r) => {
                echo(&mut out, "comparison", config, &[config.seed]);
                let labels: Vec<String> = r.entries.iter().map(|e| model_label(&e.model)).collect();
                let _ = writeln!(out, "k,{}", labels.join(","));
                for (i, p) in r.entries[0].sweep.points.iter().enumerate() {
                    let row: Vec<String> = r
                        .entries
                        .iter()
                        .map(|e| exact(e.sweep.points[i].report.mean_accuracy))
                        .collect();
                    let _ = writeln!(out, "{},{}", p.k, row.join(","));
                }
            }
        }
        out
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::load(path, e.to_string()))
    }
}

/// Writes `report` to `path` in `format`.
pub fn export_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    let body = report.render(format)?;
    fs::write(path, body).map_err(|e| Error::Report(format!("cannot write {}: {e}", path.display())))
}

/// Parsed plot-data file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// Comment lines without the leading `#`.
    pub comments: Vec<String>,
    pub header: Vec<String>,
    /// First column as text (ROI index, k, or site), then the numeric columns.
    pub rows: Vec<(String, Vec<f64>)>,
}

impl PlotData {
    /// The numeric column named `name`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().skip(1).position(|h| h == name)?;
        Some(self.rows.iter().map(|(_, v)| v[i]).collect())
    }
}

pub fn parse_plotdata(text: &str) -> Result<PlotData> {
    let comments = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .collect();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Report(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Report(e.to_string()))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| Error::Report(format!("bad number {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((rec[0].to_string(), values));
    }
    Ok(PlotData { comments, header, rows })
}
