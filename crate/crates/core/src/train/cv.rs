use serde::{Deserialize, Serialize};

use super::metrics::{mean_std, EvalReport};
use super::seed::{derive_seed, Stream};
use super::split::monte_carlo_split;
use super::trainer::{evaluate, train_one, EpochRecord, Monitor, TrainConfig};
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::model::{build_model, FcnConfig, FcnModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub test: EvalReport,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub param_count: usize,
    pub standardized: bool,
    /// Sample ids of the held-out split.
    pub test_ids: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: usize,
    pub mean_train_accuracy: f64,
    pub std_train_accuracy: f64,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub summary: CvSummary,
}

impl CvSummary {
    pub fn from_folds(folds: &[FoldReport]) -> Self {
        let train: Vec<f64> = folds.iter().map(|f| f.train_accuracy).collect();
        let test: Vec<f64> = folds.iter().map(|f| f.test_accuracy).collect();
        let (mean_train_accuracy, std_train_accuracy) = mean_std(&train);
        let (mean_test_accuracy, std_test_accuracy) = mean_std(&test);
        Self {
            folds: folds.len(),
            mean_train_accuracy,
            std_train_accuracy,
            mean_test_accuracy,
            std_test_accuracy,
        }
    }
}

impl CvReport {
    /// Per-fold accuracies followed by mean and standard deviation.
    pub fn table(&self) -> String {
        let mut s = String::from("fold  train_acc  test_acc  stopped\n");
        for f in &self.folds {
            s += &format!(
                "{:>4}  {:>9.2}  {:>8.2}  {:>7}\n",
                f.fold + 1,
                100.0 * f.train_accuracy,
                100.0 * f.test_accuracy,
                f.stopped_epoch
            );
        }
        let m = &self.summary;
        s += &format!(
            "mean  {:>9.2}  {:>8.2}\n std  {:>9.2}  {:>8.2}\n",
            100.0 * m.mean_train_accuracy,
            100.0 * m.mean_test_accuracy,
            100.0 * m.std_train_accuracy,
            100.0 * m.std_test_accuracy
        );
        s
    }
}

/// Everything a fold produces, including the trained model and the
/// prepared (standardized, unpadded) held-out samples.
pub struct FoldRun {
    pub model: FcnModel,
    pub report: FoldReport,
    pub test: Vec<Sample>,
    pub standardizer: Option<Standardizer>,
}

fn transform(samples: &[&Sample], st: Option<&Standardizer>) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| {
            let features = match st {
                Some(st) => st.apply(&s.features)?,
                None => s.features.clone(),
            };
            Ok(Sample {
                id: s.id.clone(),
                label: s.label,
                features,
            })
        })
        .collect()
}

/// One Monte Carlo fold: split, fit the standardizer on the training
/// side, pad training matrices to the longest one, train a fresh model
/// and evaluate it on unpadded held-out clips.
pub fn run_fold(dataset: &Dataset, config: &FcnConfig, tc: &TrainConfig, master_seed: u64, fold: usize) -> Result<FoldRun> {
    tc.validate()?;
    if config.n_classes != dataset.n_classes() || config.bands != dataset.bands() {
        return Err(Error::Config(format!(
            "model expects {} classes x {} bands, dataset has {} x {}",
            config.n_classes,
            config.bands,
            dataset.n_classes(),
            dataset.bands()
        )));
    }
    let labels = dataset.label_indices();
    let split = monte_carlo_split(&labels, tc.train_fraction, derive_seed(master_seed, Stream::Split, &[fold as u64]))?;
    let (fit_idx, val_idx) = match tc.monitor {
        Monitor::Test => (split.train.clone(), split.test.clone()),
        Monitor::Validation if tc.validation_fraction > 0.0 => {
            let sub: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
            let inner = monte_carlo_split(
                &sub,
                1.0 - tc.validation_fraction,
                derive_seed(master_seed, Stream::Validation, &[fold as u64]),
            )?;
            (
                inner.train.iter().map(|&j| split.train[j]).collect(),
                inner.test.iter().map(|&j| split.train[j]).collect(),
            )
        }
        Monitor::Validation => (split.train.clone(), Vec::new()),
    };

    let fit_raw = dataset.select(&fit_idx);
    let standardizer = if tc.standardize {
        Some(Standardizer::fit(fit_raw.iter().map(|s| &s.features))?)
    } else {
        None
    };
    let st = standardizer.as_ref();
    let max_frames = fit_raw.iter().map(|s| s.features.frames).max().unwrap_or(0);
    let padded: Vec<Sample> = fit_raw
        .iter()
        .map(|s| {
            let fm = dataset.pad(&s.features, max_frames)?;
            let features = match st {
                Some(st) => st.apply(&fm)?,
                None => fm,
            };
            Ok(Sample {
                id: s.id.clone(),
                label: s.label,
                features,
            })
        })
        .collect::<Result<_>>()?;
    let fit_unpadded = transform(&fit_raw, st)?;
    let val = transform(&dataset.select(&val_idx), st)?;
    let test = transform(&dataset.select(&split.test), st)?;

    let mut model = build_model(
        config.clone(),
        dataset.labels.clone(),
        derive_seed(master_seed, Stream::Init, &[fold as u64]),
    )?;
    let train_refs: Vec<&Sample> = padded.iter().collect();
    let val_refs: Vec<&Sample> = val.iter().collect();
    let outcome = train_one(&mut model, &train_refs, &val_refs, tc, derive_seed(master_seed, Stream::Shuffle, &[fold as u64]))?;

    let train_eval = evaluate(&model, &fit_unpadded.iter().collect::<Vec<_>>())?;
    let test_refs: Vec<&Sample> = test.iter().collect();
    let test_eval = evaluate(&model, &test_refs)?;
    let report = FoldReport {
        fold,
        train_accuracy: train_eval.accuracy,
        test_accuracy: test_eval.accuracy,
        test: test_eval,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        stopped_epoch: outcome.stopped_epoch,
        param_count: model.param_count(),
        standardized: tc.standardize,
        test_ids: test.iter().map(|s| s.id.clone()).collect(),
    };
    Ok(FoldRun {
        model,
        report,
        test,
        standardizer,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// `n_folds` independent Monte Carlo folds with a fresh model each, on a
/// pool of `tc.jobs` threads.
pub fn cross_validate(dataset: &Dataset, config: &FcnConfig, tc: &TrainConfig, n_folds: usize, master_seed: u64) -> Result<CvReport> {
    cross_validate_runs(dataset, config, tc, n_folds, master_seed).map(|(report, _)| report)
}

/// [`cross_validate`], also returning each fold's trained model.
pub fn cross_validate_runs(
    dataset: &Dataset,
    config: &FcnConfig,
    tc: &TrainConfig,
    n_folds: usize,
    master_seed: u64,
) -> Result<(CvReport, Vec<FoldRun>)> {
    if n_folds == 0 {
        return Err(Error::Parameter("at least one fold is required".into()));
    }
    use rayon::prelude::*;
    let run = |fold: usize| run_fold(dataset, config, tc, master_seed, fold);
    let runs: Vec<FoldRun> = pool(tc.jobs)?.install(|| (0..n_folds).into_par_iter().map(run).collect::<Result<_>>())?;
    let folds: Vec<FoldReport> = runs.iter().map(|r| r.report.clone()).collect();
    let summary = CvSummary::from_folds(&folds);
    Ok((CvReport { folds, summary }, runs))
}
