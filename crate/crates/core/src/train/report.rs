use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub sample_id: String,
    pub label: usize,
    pub predicted: usize,
}

/// Classification metrics. `confusion[t][p]` counts samples of true class
/// `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` for classes without support.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
    pub n_samples: usize,
    pub class_names: Vec<String>,
    pub predictions: Vec<SamplePrediction>,
}

impl EvalReport {
    pub fn from_predictions(
        labels: &[usize],
        predicted: &[usize],
        class_names: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let c = class_names.len();
        if labels.len() != predicted.len() || labels.len() != sample_ids.len() {
            return Err(Error::Shape("labels, predictions and ids differ in length".into()));
        }
        if labels.is_empty() {
            return Err(Error::Empty("no samples to evaluate".into()));
        }
        if let Some(&bad) = labels.iter().chain(predicted).find(|&&y| y >= c) {
            return Err(Error::Shape(format!("class {bad} outside {c} classes")));
        }
        let mut confusion = vec![vec![0usize; c]; c];
        for (&t, &p) in labels.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let n = labels.len();
        let trace: usize = (0..c).map(|k| confusion[k][k]).sum();
        let per_class_accuracy = (0..c)
            .map(|k| {
                let support: usize = confusion[k].iter().sum();
                (support > 0).then(|| confusion[k][k] as f64 / support as f64)
            })
            .collect();
        // Classes absent from both labels and predictions do not count.
        let mut f1 = Vec::new();
        for k in 0..c {
            let tp = confusion[k][k];
            let fn_: usize = confusion[k].iter().sum::<usize>() - tp;
            let fp: usize = (0..c).map(|t| confusion[t][k]).sum::<usize>() - tp;
            if tp + fp + fn_ > 0 {
                f1.push(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
            }
        }
        let predictions = sample_ids
            .into_iter()
            .zip(labels.iter().zip(predicted))
            .map(|(sample_id, (&label, &predicted))| SamplePrediction { sample_id, label, predicted })
            .collect();
        Ok(EvalReport {
            accuracy: trace as f64 / n as f64,
            per_class_accuracy,
            macro_f1: f1.iter().sum::<f64>() / f1.len() as f64,
            confusion,
            n_samples: n,
            class_names,
            predictions,
        })
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Accuracy grid over repeated runs. Cells render as percentages,
/// `mean_{std}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccuracyTable {
    rows: Vec<String>,
    cols: Vec<String>,
    cells: BTreeMap<(usize, usize), Vec<f64>>,
}

impl AccuracyTable {
    pub fn new() -> Self {
        AccuracyTable::default()
    }

    fn slot(list: &mut Vec<String>, name: &str) -> usize {
        list.iter().position(|r| r == name).unwrap_or_else(|| {
            list.push(name.to_string());
            list.len() - 1
        })
    }

    /// Adds one run's accuracy in `[0, 1]`.
    pub fn add(&mut self, row: &str, col: &str, accuracy: f64) {
        let r = Self::slot(&mut self.rows, row);
        let c = Self::slot(&mut self.cols, col);
        self.cells.entry((r, c)).or_default().push(accuracy);
    }

    pub fn cell(&self, row: &str, col: &str) -> Option<(f64, f64)> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.cols.iter().position(|x| x == col)?;
        self.cells.get(&(r, c)).map(|v| mean_std(v))
    }

    pub fn render(&self) -> String {
        let mut grid: Vec<Vec<String>> =
            vec![std::iter::once(String::new()).chain(self.cols.iter().cloned()).collect()];
        for (r, name) in self.rows.iter().enumerate() {
            let mut line = vec![name.clone()];
            for c in 0..self.cols.len() {
                line.push(match self.cells.get(&(r, c)) {
                    Some(v) => {
                        let (m, s) = mean_std(v);
                        format!("{:.1}_{{{:.1}}}", 100.0 * m, 100.0 * s)
                    }
                    None => "-".to_string(),
                });
            }
            grid.push(line);
        }
        let widths: Vec<usize> =
            (0..=self.cols.len()).map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, line) in grid.iter().enumerate() {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("c{i}")).collect()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1];
        let r = EvalReport::from_predictions(&y, &y, names(3), ids(4)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn confusion_rows_are_support() {
        let y = [0, 0, 1, 2, 2, 2];
        let p = [0, 1, 1, 0, 2, 2];
        let r = EvalReport::from_predictions(&y, &p, names(4), ids(6)).unwrap();
        let support: Vec<usize> = r.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(support, vec![2, 1, 3, 0]);
        assert_eq!(r.per_class_accuracy[3], None);
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-15);
        // F1: c0 = 2/4, c1 = 2/3, c2 = 4/5.
        assert!((r.macro_f1 - (0.5 + 2.0 / 3.0 + 0.8) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn table_cells_show_mean_and_std() {
        let mut t = AccuracyTable::new();
        for a in [0.80, 0.90, 0.85] {
            t.add("GIN", "Tiny", a);
        }
        t.add("GIN", "Common", 0.5);
        let (m, s) = t.cell("GIN", "Tiny").unwrap();
        assert!((m - 0.85).abs() < 1e-12);
        assert!((s - (0.005f64 / 3.0).sqrt()).abs() < 1e-12);
        let text = t.render();
        assert!(text.contains("85.0_{4.1}"), "{text}");
        assert!(text.contains("50.0_{0.0}"));
    }
}
