use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Classification metrics over a labelled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub total: usize,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics for predicted against true class indices. A class that is never
/// predicted has precision 0, and a zero precision+recall gives F1 0.
pub fn metrics_from_predictions(labels: &[String], truth: &[usize], predicted: &[usize]) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::Parameter("cannot evaluate on an empty set".into()));
    }
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let n = labels.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n || p >= n {
            return Err(Error::Index(format!("class index {} out of {n}", t.max(p))));
        }
        confusion[t][p] += 1;
    }
    let total = truth.len();
    let trace: usize = (0..n).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted_c: usize = (0..n).map(|r| confusion[r][c]).sum();
            let precision = ratio(tp, predicted_c);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label: labels[c].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let nf = n as f64;
    let macro_avg = Averages {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / nf,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / nf,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / nf,
    };
    let tf = total as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / tf;
    let weighted_avg = Averages {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
    };
    Ok(EvalReport {
        accuracy: trace as f64 / tf,
        total,
        confusion,
        per_class,
        macro_avg,
        weighted_avg,
    })
}

impl EvalReport {
    pub fn trace(&self) -> usize {
        (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum()
    }

    /// Per-class table in the familiar precision/recall/f1/support layout.
    pub fn table(&self) -> String {
        let width = self.per_class.iter().map(|m| m.label.chars().count()).max().unwrap_or(0).max(12);
        let mut s = format!("{:>width$}  precision  recall  f1-score  support\n", "");
        for m in &self.per_class {
            s += &format!(
                "{:>width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}\n",
                m.label, m.precision, m.recall, m.f1, m.support
            );
        }
        s += &format!("\n{:>width$}  {:>9}  {:>6}  {:>8.2}  {:>7}\n", "accuracy", "", "", self.accuracy, self.total);
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            s += &format!(
                "{:>width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}\n",
                name, a.precision, a.recall, a.f1, self.total
            );
        }
        s
    }
}

/// Writes a square count matrix as CSV with label headers on both axes.
pub fn write_matrix_csv<W: Write>(out: W, labels: &[String], matrix: &[Vec<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (label, row) in labels.iter().zip(matrix) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictor() {
        let y = [0, 1, 2, 2, 1, 0, 0];
        let r = metrics_from_predictions(&names(3), &y, &y).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert!(i == j || c == 0);
            }
        }
        assert_eq!(r.macro_avg.f1, 1.0);
    }

    #[test]
    fn unpredicted_support_one_class_scores_zero() {
        // class 2 has one sample and is never predicted
        let truth = [0, 0, 1, 1, 2];
        let pred = [0, 0, 1, 0, 1];
        let r = metrics_from_predictions(&names(3), &truth, &pred).unwrap();
        let c = &r.per_class[2];
        assert_eq!((c.precision, c.recall, c.f1, c.support), (0.0, 0.0, 0.0, 1));
        assert_eq!(r.accuracy, r.trace() as f64 / r.total as f64);
    }

    #[test]
    fn hand_computed_values() {
        let truth = [0, 0, 0, 1, 1, 2];
        let pred = [0, 0, 1, 1, 2, 2];
        let r = metrics_from_predictions(&names(3), &truth, &pred).unwrap();
        assert_eq!(r.confusion, vec![vec![2, 1, 0], vec![0, 1, 1], vec![0, 0, 1]]);
        let p = [1.0, 0.5, 0.5];
        let rc = [2.0 / 3.0, 0.5, 1.0];
        for c in 0..3 {
            assert!((r.per_class[c].precision - p[c]).abs() < 1e-15);
            assert!((r.per_class[c].recall - rc[c]).abs() < 1e-15);
            let f = 2.0 * p[c] * rc[c] / (p[c] + rc[c]);
            assert!((r.per_class[c].f1 - f).abs() < 1e-15);
        }
        let macro_f1 = r.per_class.iter().map(|m| m.f1).sum::<f64>() / 3.0;
        assert!((r.macro_avg.f1 - macro_f1).abs() < 1e-9);
        let wf1 = (3.0 * r.per_class[0].f1 + 2.0 * r.per_class[1].f1 + r.per_class[2].f1) / 6.0;
        assert!((r.weighted_avg.f1 - wf1).abs() < 1e-9);
        assert_eq!(r.accuracy, 4.0 / 6.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(metrics_from_predictions(&names(2), &[], &[]), Err(Error::Parameter(_))));
        assert!(matches!(metrics_from_predictions(&names(2), &[0], &[0, 1]), Err(Error::Shape(_))));
        assert!(matches!(metrics_from_predictions(&names(2), &[0], &[2]), Err(Error::Index(_))));
    }

    #[test]
    fn table_mean_of_mel_folds() {
        let folds = [86.45, 87.75, 82.85, 83.00, 85.56, 88.09, 86.12, 82.31, 87.27, 87.65];
        let (mean, _) = mean_std(&folds);
        assert!((mean - 85.705).abs() < 1e-9);
        assert!((mean - 85.71).abs() < 0.01);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!((m, s), (5.0, 2.0));
    }

    #[test]
    fn confusion_csv_layout() {
        let mut out = Vec::new();
        write_matrix_csv(&mut out, &["Ansar".into(), "Cigüeña".into()], &[vec![3, 1], vec![0, 2]]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), ",Ansar,Cigüeña\nAnsar,3,1\nCigüeña,0,2\n");
    }
}
