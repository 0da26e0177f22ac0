//! Classification metrics.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Fraction of correct predictions.
    pub accuracy: f64,
    /// Recall of each class; `None` for classes absent from the split.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub size_kb: f64,
    pub wall_seconds: f64,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
}

impl MetricsReport {
    pub fn new(labels: Vec<usize>, predictions: Vec<usize>, classes: usize, size_kb: f64, wall_seconds: f64) -> Self {
        assert_eq!(labels.len(), predictions.len());
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&y, &p) in labels.iter().zip(&predictions) {
            confusion[y][p] += 1;
        }
        let correct: usize = (0..classes).map(|k| confusion[k][k]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[k] as f64 / n as f64)
            })
            .collect();
        Self {
            accuracy: correct as f64 / labels.len().max(1) as f64,
            per_class,
            confusion,
            size_kb,
            wall_seconds,
            labels,
            predictions,
        }
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    /// `metric  value` rows.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\n");
        out.push_str(&format!("accuracy\t{:.6}\n", self.accuracy));
        out.push_str(&format!("samples\t{}\n", self.samples()));
        out.push_str(&format!("size_kb\t{}\n", self.size_kb));
        out.push_str(&format!("wall_seconds\t{:.3}\n", self.wall_seconds));
        for (k, acc) in self.per_class.iter().enumerate() {
            match acc {
                Some(a) => out.push_str(&format!("class_{k}_accuracy\t{a:.6}\n")),
                None => out.push_str(&format!("class_{k}_accuracy\tNA\n")),
            }
        }
        out
    }

    /// Rows are true classes, columns predicted classes.
    pub fn confusion_tsv(&self) -> String {
        let k = self.confusion.len();
        let mut out = String::from("true");
        for j in 0..k {
            out.push_str(&format!("\tpred_{j}"));
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&i.to_string());
            for c in row {
                out.push_str(&format!("\t{c}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn predictions_tsv(&self) -> String {
        let mut out = String::from("index\tlabel\tprediction\n");
        for (i, (y, p)) in self.labels.iter().zip(&self.predictions).enumerate() {
            out.push_str(&format!("{i}\t{y}\t{p}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_is_confusion_trace_over_total() {
        let m = MetricsReport::new(vec![0, 0, 1, 1, 2, 2], vec![0, 1, 1, 1, 0, 2], 4, 1.0, 0.0);
        assert_eq!(m.accuracy, 4.0 / 6.0);
        let trace: usize = (0..4).map(|k| m.confusion[k][k]).sum();
        assert_eq!(trace as f64 / m.samples() as f64, m.accuracy);
        assert_eq!(m.per_class, vec![Some(0.5), Some(1.0), Some(0.5), None]);
        assert_eq!(m.confusion[2][0], 1);
        assert!(m.summary_tsv().contains("class_3_accuracy\tNA"));
        assert_eq!(m.predictions_tsv().lines().count(), 7);
        assert_eq!(m.confusion_tsv().lines().next().unwrap(), "true\tpred_0\tpred_1\tpred_2\tpred_3");
    }
}
