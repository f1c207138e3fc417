//! Leave-one-site-out evaluation and the ROI ranking, sweep, and comparison
//! protocols built on it.
//!
//! Every (configuration, fold) pair is an independent unit of work seeded
//! from the configuration seed and the held-out site name, so the units run
//! on the current rayon pool in any order without changing results.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{
    ComparisonEntry, ComparisonResult, EvalReport, RankingResult, RoiAccuracy, SeedResult, SiteAccuracy,
    SweepPoint, SweepResult,
};
use super::train::{evaluate_fold, train};
use super::TrainConfig;
use crate::autodiff::Tensor;
use crate::data::{loso_split, Fold, Label, Manifest, SubjectRecord};
use crate::error::{Error, Result};
use crate::model::{build_model, ModelConfig};
use crate::seed;

/// Which end of the ranking a sweep grows from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Best-ranked ROIs first.
    Top,
    /// Worst-ranked ROIs first.
    Reverse,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Top => "top",
            Direction::Reverse => "reverse",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "top" => Ok(Direction::Top),
            "reverse" => Ok(Direction::Reverse),
            other => Err(Error::ExperimentConfig(format!(
                "unknown direction {other:?} (expected top or reverse)"
            ))),
        }
    }
}

/// `size` candidate ROIs spread evenly over `0..n_rois`.
pub fn evenly_spaced_rois(n_rois: usize, size: usize) -> Result<Vec<usize>> {
    if size == 0 || size > n_rois {
        return Err(Error::ExperimentConfig(format!(
            "atlas size must be in 1..={n_rois}, got {size}"
        )));
    }
    Ok((0..size).map(|i| i * n_rois / size).collect())
}

/// The fold seed depends on the configured seed and the held-out site only.
pub fn fold_seed(config_seed: u64, test_site: &str) -> u64 {
    seed::derive(config_seed, test_site)
}

struct Job {
    subset: Vec<usize>,
    config: TrainConfig,
}

struct FoldOutcome {
    accuracy: f64,
    n_test: usize,
    param_count: usize,
}

/// Truncates every record to the dataset's shortest series when lengths differ.
fn uniform_length(manifest: &Manifest) -> Result<Cow<'_, Manifest>> {
    let t = manifest.min_time_len();
    if manifest.records().iter().all(|r| r.time_len() == t) {
        return Ok(Cow::Borrowed(manifest));
    }
    let records = manifest
        .records()
        .iter()
        .map(|r| {
            let (n, full) = (r.n_rois(), r.time_len());
            let data = r.series.data().chunks(full).flat_map(|row| row[..t].iter().copied()).collect();
            Ok(SubjectRecord {
                series: Tensor::new(&[n, t], data)?,
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Cow::Owned(Manifest::new(records)?))
}

fn check_subset(manifest: &Manifest, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::ExperimentConfig("ROI subset is empty".into()));
    }
    let n = manifest.records().iter().map(SubjectRecord::n_rois).min().unwrap_or(0);
    if let Some(&bad) = subset.iter().find(|&&r| r >= n) {
        return Err(Error::ExperimentConfig(format!("ROI {bad} out of range for {n} ROIs")));
    }
    Ok(())
}

fn run_fold(manifest: &Manifest, fold: &Fold, job: &Job) -> Result<FoldOutcome> {
    let recs = manifest.records();
    let train_set: Vec<&SubjectRecord> = fold.train.iter().map(|&i| &recs[i]).collect();
    let test_set: Vec<&SubjectRecord> = fold.test.iter().map(|&i| &recs[i]).collect();
    for label in [Label::Adhd, Label::Hc] {
        if !train_set.iter().any(|r| r.label == label) {
            return Err(Error::ClassAbsent(format!(
                "training pool for held-out site {} has no {label} subjects",
                fold.test_site
            )));
        }
    }
    let fs = fold_seed(job.config.seed, &fold.test_site);
    let model = build_model(&job.config.model, &mut ChaCha8Rng::seed_from_u64(seed::derive(fs, "init")))?;
    let param_count = model.param_count();
    let config = TrainConfig {
        seed: fs,
        ..job.config.clone()
    };
    let (model, _) = train(model, &train_set, &job.subset, &config)?;
    Ok(FoldOutcome {
        accuracy: evaluate_fold(&model, &test_set, &job.subset)?,
        n_test: test_set.len(),
        param_count,
    })
}

/// Runs every job under LOSO, all (job, fold) units in one parallel pass.
/// Returns one seed result per job plus the model size it trained.
fn run_jobs(manifest: &Manifest, jobs: &[Job]) -> Result<Vec<(SeedResult, usize)>> {
    for job in jobs {
        job.config.validate()?;
        check_subset(manifest, &job.subset)?;
    }
    let manifest = uniform_length(manifest)?;
    let folds = loso_split(&manifest)?;
    let units: Vec<(usize, usize)> = (0..jobs.len())
        .flat_map(|j| (0..folds.len()).map(move |f| (j, f)))
        .collect();
    let outcomes: Vec<Result<FoldOutcome>> = units
        .par_iter()
        .map(|&(j, f)| run_fold(&manifest, &folds[f], &jobs[j]))
        .collect();
    let mut outcomes = outcomes.into_iter();
    let mut results = Vec::with_capacity(jobs.len());
    for job in jobs {
        let mut per_site = Vec::with_capacity(folds.len());
        let mut params = 0;
        for fold in &folds {
            let o = outcomes.next().expect("one outcome per unit")?;
            params = o.param_count;
            per_site.push(SiteAccuracy {
                site: fold.test_site.clone(),
                n_test: o.n_test,
                accuracy: o.accuracy,
            });
        }
        results.push((SeedResult::new(job.config.seed, per_site), params));
    }
    Ok(results)
}

/// LOSO accuracy of one configuration repeated over `seeds`; `config.seed`
/// is replaced by each seed in turn.
pub fn loso_accuracy_repeated(
    manifest: &Manifest,
    roi_subset: &[usize],
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::ExperimentConfig("at least one seed is required".into()));
    }
    let jobs: Vec<Job> = seeds
        .iter()
        .map(|&s| Job {
            subset: roi_subset.to_vec(),
            config: TrainConfig { seed: s, ..config.clone() },
        })
        .collect();
    let results = run_jobs(manifest, &jobs)?;
    let param_count = results[0].1;
    Ok(EvalReport::from_seeds(
        config.clone(),
        roi_subset.to_vec(),
        param_count,
        results.into_iter().map(|(s, _)| s).collect(),
    ))
}

/// LOSO accuracy of one configuration with `config.seed`.
pub fn loso_accuracy(manifest: &Manifest, roi_subset: &[usize], config: &TrainConfig) -> Result<EvalReport> {
    loso_accuracy_repeated(manifest, roi_subset, config, &[config.seed])
}

fn single_reports(manifest: &Manifest, jobs: Vec<Job>) -> Result<Vec<EvalReport>> {
    let results = run_jobs(manifest, &jobs)?;
    Ok(jobs
        .into_iter()
        .zip(results)
        .map(|(job, (seed_result, params))| EvalReport::from_seeds(job.config, job.subset, params, vec![seed_result]))
        .collect())
}

/// Trains one single-ROI model per candidate under LOSO and orders the
/// candidates by mean accuracy, best first, ties to the lower ROI index.
pub fn rank_single_roi(manifest: &Manifest, config: &TrainConfig, candidates: &[usize]) -> Result<RankingResult> {
    if candidates.is_empty() {
        return Err(Error::ExperimentConfig("no candidate ROIs".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::ExperimentConfig("duplicate candidate ROI".into()));
    }
    let jobs = sorted
        .iter()
        .map(|&r| Job {
            subset: vec![r],
            config: config.clone(),
        })
        .collect();
    let reports = single_reports(manifest, jobs)?;
    let per_roi: Vec<RoiAccuracy> = sorted
        .iter()
        .zip(reports)
        .map(|(&roi, report)| RoiAccuracy { roi, report })
        .collect();
    Ok(RankingResult::new(config.clone(), per_roi))
}

fn sweep_order(ranking: &RankingResult, k_max: usize, direction: Direction) -> Result<Vec<usize>> {
    let n = ranking.rank_order.len();
    if k_max == 0 || k_max > n {
        return Err(Error::ExperimentConfig(format!("k_max must be in 1..={n}, got {k_max}")));
    }
    let mut order = ranking.rank_order.clone();
    if direction == Direction::Reverse {
        order.reverse();
    }
    order.truncate(k_max);
    Ok(order)
}

fn sweep_jobs(order: &[usize], config: &TrainConfig) -> Vec<Job> {
    (1..=order.len())
        .map(|k| Job {
            subset: order[..k].to_vec(),
            config: config.clone(),
        })
        .collect()
}

fn assemble_sweep(direction: Direction, config: &TrainConfig, reports: Vec<EvalReport>) -> SweepResult {
    SweepResult {
        direction,
        config: config.clone(),
        points: reports
            .into_iter()
            .enumerate()
            .map(|(i, report)| SweepPoint { k: i + 1, report })
            .collect(),
    }
}

/// For k = 1..=k_max, LOSO accuracy on the first k ROIs of the ranking (or
/// of its reverse), fed in selection order.
pub fn topk_sweep(
    manifest: &Manifest,
    ranking: &RankingResult,
    k_max: usize,
    config: &TrainConfig,
    direction: Direction,
) -> Result<SweepResult> {
    let order = sweep_order(ranking, k_max, direction)?;
    let reports = single_reports(manifest, sweep_jobs(&order, config))?;
    Ok(assemble_sweep(direction, config, reports))
}

/// Top-direction sweeps for each model configuration, sharing the other
/// training settings of `config`.
pub fn model_comparison(
    manifest: &Manifest,
    ranking: &RankingResult,
    variants: &[ModelConfig],
    k_max: usize,
    config: &TrainConfig,
) -> Result<ComparisonResult> {
    if variants.is_empty() {
        return Err(Error::ExperimentConfig("no variants to compare".into()));
    }
    let order = sweep_order(ranking, k_max, Direction::Top)?;
    let configs: Vec<TrainConfig> = variants
        .iter()
        .map(|m| TrainConfig {
            model: m.clone(),
            ..config.clone()
        })
        .collect();
    let jobs: Vec<Job> = configs.iter().flat_map(|c| sweep_jobs(&order, c)).collect();
    let mut reports = single_reports(manifest, jobs)?.into_iter();
    let entries = configs
        .iter()
        .map(|c| {
            let sweep = assemble_sweep(Direction::Top, c, reports.by_ref().take(order.len()).collect());
            ComparisonEntry::new(sweep)
        })
        .collect();
    Ok(ComparisonResult { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evenly_spaced_candidates() {
        assert_eq!(evenly_spaced_rois(116, 4).unwrap(), vec![0, 29, 58, 87]);
        assert_eq!(evenly_spaced_rois(5, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(evenly_spaced_rois(5, 6).is_err());
        assert!(evenly_spaced_rois(5, 0).is_err());
    }

    #[test]
    fn direction_parses() {
        assert_eq!("TOP".parse::<Direction>().unwrap(), Direction::Top);
        assert_eq!("reverse".parse::<Direction>().unwrap(), Direction::Reverse);
        assert!("bottom".parse::<Direction>().is_err());
    }
}
