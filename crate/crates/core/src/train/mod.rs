//! Cross-validated training, evaluation metrics, the architecture grid
//! search, the clip-length study and a nearest-neighbour baseline.

mod cv;
mod duration;
mod grid;
mod knn;
mod metrics;
mod seed;
mod split;
mod trainer;

pub use cv::{cross_validate, cross_validate_runs, run_fold, CvReport, CvSummary, FoldReport, FoldRun};
pub use duration::{duration_study, DurationPoint, STUDY_DURATIONS};
pub use grid::{grid_search, select_best, CellKey, GridCell, GridResult, GridSpec};
pub use knn::{clip_vectors, knn_baseline, knn_predict};
pub use metrics::{mean_std, metrics_from_predictions, write_matrix_csv, Averages, ClassMetrics, EvalReport};
pub use seed::{derive_seed, Stream};
pub use split::{monte_carlo_split, Split};
pub use trainer::{
    evaluate, loss_and_accuracy, predict_all, train_one, EarlyStopping, EpochRecord, Monitor, TrainConfig,
    TrainOutcome, Verdict,
};
