use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cv::cross_validate;
use super::trainer::TrainConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::model::{build_model, Activation, FcnConfig, GRID_DEPTHS, GRID_WIDTHS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub descriptor: FeatureKind,
}

impl CellKey {
    pub fn file_name(&self) -> String {
        format!(
            "cell-{}-d{}-w{}-{}.json",
            self.descriptor.as_str(),
            self.depth,
            self.width,
            self.activation
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub descriptors: Vec<FeatureKind>,
}

impl Default for GridSpec {
    /// The full 3 x 3 x 3 x 2 grid.
    fn default() -> Self {
        Self {
            depths: GRID_DEPTHS.to_vec(),
            widths: GRID_WIDTHS.to_vec(),
            activations: Activation::ALL.to_vec(),
            descriptors: vec![FeatureKind::MelDb, FeatureKind::Mfcc],
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &descriptor in &self.descriptors {
            for &depth in &self.depths {
                for &width in &self.widths {
                    for &activation in &self.activations {
                        out.push(CellKey {
                            depth,
                            width,
                            activation,
                            descriptor,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub key: CellKey,
    pub param_count: usize,
    pub folds: usize,
    pub mean_train_accuracy: f64,
    pub std_train_accuracy: f64,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub standardized: bool,
    /// Set when the cell failed; the other fields are then meaningless.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub best: Option<CellKey>,
    /// Cells trained in this run (the rest came from checkpoints).
    pub trained_cells: usize,
}

/// Highest mean test accuracy; ties go to the smaller model, then to the
/// earlier cell.
pub fn select_best(cells: &[GridCell]) -> Option<CellKey> {
    let mut best: Option<&GridCell> = None;
    for c in cells.iter().filter(|c| c.error.is_none()) {
        best = match best {
            None => Some(c),
            Some(b) if c.mean_test_accuracy > b.mean_test_accuracy => Some(c),
            Some(b) if c.mean_test_accuracy == b.mean_test_accuracy && c.param_count < b.param_count => Some(c),
            keep => keep,
        };
    }
    best.map(|c| c.key)
}

fn run_cell(key: CellKey, dataset: &Dataset, tc: &TrainConfig, folds: usize, seed: u64) -> Result<GridCell> {
    let config = FcnConfig::grid(key.depth, key.width, key.activation, dataset.n_classes(), dataset.bands())?;
    let param_count = build_model(config.clone(), dataset.labels.clone(), 0)?.param_count();
    let report = cross_validate(dataset, &config, tc, folds, seed)?;
    let s = report.summary;
    Ok(GridCell {
        key,
        param_count,
        folds,
        mean_train_accuracy: s.mean_train_accuracy,
        std_train_accuracy: s.std_train_accuracy,
        mean_test_accuracy: s.mean_test_accuracy,
        std_test_accuracy: s.std_test_accuracy,
        standardized: tc.standardize,
        error: None,
    })
}

/// Cross-validates every grid cell.
///
/// `datasets` supplies one dataset per descriptor. With a checkpoint
/// directory each finished cell is written there as it completes, and
/// cells already present are loaded instead of retrained. A failing cell
/// is recorded with its error and the sweep continues.
pub fn grid_search(
    datasets: &[(FeatureKind, &Dataset)],
    spec: &GridSpec,
    tc: &TrainConfig,
    folds: usize,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<GridResult> {
    if let Some(dir) = checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut cells = Vec::new();
    let mut trained = 0;
    for key in spec.cells() {
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(key.file_name());
            if let Ok(bytes) = fs::read(&path) {
                match serde_json::from_slice::<GridCell>(&bytes) {
                    Ok(cell) if cell.key == key => {
                        cells.push(cell);
                        continue;
                    }
                    _ => log::warn!("ignoring unreadable checkpoint {}", path.display()),
                }
            }
        }
        let Some(&(_, dataset)) = datasets.iter().find(|(k, _)| *k == key.descriptor) else {
            return Err(Error::Config(format!("no dataset for descriptor {}", key.descriptor.as_str())));
        };
        trained += 1;
        let cell = run_cell(key, dataset, tc, folds, seed).unwrap_or_else(|e| {
            log::error!("grid cell {key:?} failed: {e}");
            GridCell {
                key,
                param_count: 0,
                folds,
                mean_train_accuracy: f64::NAN,
                std_train_accuracy: f64::NAN,
                mean_test_accuracy: f64::NAN,
                std_test_accuracy: f64::NAN,
                standardized: tc.standardize,
                error: Some(e.to_string()),
            }
        });
        if let (Some(dir), None) = (checkpoint_dir, &cell.error) {
            let path = dir.join(key.file_name());
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, serde_json::to_vec_pretty(&cell).expect("cell serializes")).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        cells.push(cell);
    }
    let best = select_best(&cells);
    Ok(GridResult {
        cells,
        best,
        trained_cells: trained,
    })
}
