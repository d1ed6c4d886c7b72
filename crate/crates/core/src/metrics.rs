//! Multi-label evaluation: pooled micro-F1, rank-based ROC AUC per label with
//! macro averaging, and threshold sweeps.

use serde::Serialize;

use crate::error::{Error, Result};

/// Binary instance-by-label matrix (gold or predicted), columns in taxonomy order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    cols: usize,
    cells: Vec<bool>,
}

impl LabelMatrix {
    pub fn new(rows: Vec<Vec<bool>>, cols: usize) -> Result<Self> {
        let mut cells = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            cells.extend(row);
        }
        Ok(Self { cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.cells.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<bool> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }
}

/// Real-valued instance-by-label matrix of confidences in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    cols: usize,
    cells: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>, cols: usize) -> Result<Self> {
        let mut cells = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::validation("score matrix", format!("row {i} holds {bad}")));
            }
            cells.extend(row);
        }
        Ok(Self { cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.cells.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }

    /// Predictions `score >= threshold`.
    pub fn threshold(&self, threshold: f64) -> LabelMatrix {
        LabelMatrix {
            cols: self.cols,
            cells: self.cells.iter().map(|&s| s >= threshold).collect(),
        }
    }
}

fn check_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} against {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// F1 over true/false positives and false negatives pooled across every cell.
pub fn micro_f1(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<f64> {
    check_shape((gold.rows(), gold.cols()), (pred.rows(), pred.cols()))?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&g, &p) in gold.cells().iter().zip(pred.cells()) {
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Mann-Whitney ROC AUC: the fraction of positive/negative pairs ranked
/// correctly, ties counting one half. Tied scores share their average rank.
pub fn auc_roc(scores: &[f64], truths: &[bool]) -> Result<f64> {
    if scores.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} truths",
            scores.len(),
            truths.len()
        )));
    }
    let positives = truths.iter().filter(|&&t| t).count();
    let negatives = truths.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabel {
            all_positive: negatives == 0 && positives > 0,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based average ranks of the positives.
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let average_rank = (start + 1 + end) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| truths[i]).count();
        positive_rank_sum += average_rank * tied_positives as f64;
        start = end;
    }
    let (p, n) = (positives as f64, negatives as f64);
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelAuc {
    pub label: String,
    /// `None` when the label has no positives or no negatives.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroAuc {
    pub mean: f64,
    pub per_label: Vec<LabelAuc>,
}

impl MacroAuc {
    pub fn skipped(&self) -> impl Iterator<Item = &str> {
        self.per_label
            .iter()
            .filter(|l| l.auc.is_none())
            .map(|l| l.label.as_str())
    }
}

/// Mean per-label AUC over labels that have both classes; the rest are reported as skipped.
pub fn macro_auc(scores: &ScoreMatrix, gold: &LabelMatrix, labels: &[&str]) -> Result<MacroAuc> {
    check_shape((scores.rows(), scores.cols()), (gold.rows(), gold.cols()))?;
    if labels.len() != gold.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} label names for {} columns",
            labels.len(),
            gold.cols()
        )));
    }
    let mut per_label = Vec::with_capacity(labels.len());
    let mut defined = Vec::new();
    for (col, name) in labels.iter().enumerate() {
        let auc = match auc_roc(&scores.column(col), &gold.column(col)) {
            Ok(v) => Some(v),
            Err(Error::DegenerateLabel { .. }) => None,
            Err(e) => return Err(e),
        };
        defined.extend(auc);
        per_label.push(LabelAuc {
            label: (*name).to_owned(),
            auc,
        });
    }
    if defined.is_empty() {
        return Err(Error::AllLabelsDegenerate);
    }
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(MacroAuc { mean, per_label })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    /// Highest F1; ties go to the smallest threshold.
    pub best: SweepPoint,
}

pub fn threshold_sweep(scores: &ScoreMatrix, gold: &LabelMatrix, grid: &[f64]) -> Result<Sweep> {
    check_shape((scores.rows(), scores.cols()), (gold.rows(), gold.cols()))?;
    if grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("threshold {bad} outside [0, 1]")));
    }
    let points = grid
        .iter()
        .map(|&threshold| {
            Ok(SweepPoint {
                threshold,
                micro_f1: micro_f1(gold, &scores.threshold(threshold))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = *points
        .iter()
        .reduce(|best, p| {
            if p.micro_f1 > best.micro_f1
                || (p.micro_f1 == best.micro_f1 && p.threshold < best.threshold)
            {
                p
            } else {
                best
            }
        })
        .expect("grid is non-empty");
    Ok(Sweep { points, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(rows: &[&[u8]]) -> LabelMatrix {
        let cols = rows[0].len();
        LabelMatrix::new(rows.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect(), cols).unwrap()
    }

    #[test]
    fn f1_perfect_and_empty() {
        let g = labels(&[&[1, 0], &[0, 1]]);
        assert_eq!(micro_f1(&g, &g).unwrap(), 1.0);
        let zero = labels(&[&[0, 0], &[0, 0]]);
        assert_eq!(micro_f1(&g, &zero).unwrap(), 0.0);
    }

    #[test]
    fn f1_pooled_counts() {
        // TP=2, FP=1, FN=1.
        let g = labels(&[&[1, 1, 0], &[1, 0, 0]]);
        let p = labels(&[&[1, 0, 1], &[1, 0, 0]]);
        assert!((micro_f1(&g, &p).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f1_shape_mismatch() {
        let g = labels(&[&[1, 1]]);
        let p = labels(&[&[1, 1], &[0, 0]]);
        assert!(matches!(micro_f1(&g, &p), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
        // Positives {0.2, 0.5} against negatives {0.9, 0.4}: only 0.5 > 0.4 is ordered.
        assert_eq!(
            auc_roc(&[0.2, 0.9, 0.5, 0.4], &[true, false, true, false]).unwrap(),
            0.25
        );
    }

    #[test]
    fn auc_degenerate() {
        assert!(matches!(
            auc_roc(&[0.1, 0.2], &[true, true]),
            Err(Error::DegenerateLabel { all_positive: true })
        ));
        assert!(matches!(
            auc_roc(&[0.1, 0.2], &[false, false]),
            Err(Error::DegenerateLabel { all_positive: false })
        ));
    }

    #[test]
    fn macro_auc_averages_and_skips() {
        let g = labels(&[&[1, 1, 0], &[0, 0, 0], &[1, 0, 0], &[0, 1, 0]]);
        let s = ScoreMatrix::new(
            vec![
                vec![0.9, 0.9, 0.1],
                vec![0.1, 0.5, 0.2],
                vec![0.8, 0.5, 0.3],
                vec![0.2, 0.5, 0.4],
            ],
            3,
        )
        .unwrap();
        let m = macro_auc(&s, &g, &["A", "B", "C"]).unwrap();
        // A is perfectly ranked; B: pairs (0.9 vs 0.5, 0.9 vs 0.5, 0.5 vs 0.5, 0.5 vs 0.5) = 3/4.
        assert_eq!(m.per_label[0].auc, Some(1.0));
        assert_eq!(m.per_label[1].auc, Some(0.75));
        assert_eq!(m.per_label[2].auc, None);
        assert_eq!(m.skipped().collect::<Vec<_>>(), ["C"]);
        assert!((m.mean - 0.875).abs() < 1e-15);
    }

    #[test]
    fn macro_auc_all_degenerate() {
        let g = labels(&[&[0, 1], &[0, 1]]);
        let s = ScoreMatrix::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]], 2).unwrap();
        assert!(matches!(macro_auc(&s, &g, &["A", "B"]), Err(Error::AllLabelsDegenerate)));
    }

    #[test]
    fn sweep_examples() {
        let g = labels(&[&[1], &[0]]);
        let s = ScoreMatrix::new(vec![vec![0.9], vec![0.1]], 1).unwrap();
        let sweep = threshold_sweep(&s, &g, &[0.5]).unwrap();
        assert_eq!(sweep.best, SweepPoint { threshold: 0.5, micro_f1: 1.0 });

        // Threshold 0 predicts everything: P = 1/2, R = 1.
        let sweep = threshold_sweep(&s, &g, &[0.0]).unwrap();
        assert!((sweep.points[0].micro_f1 - 2.0 / 3.0).abs() < 1e-15);

        let sweep = threshold_sweep(&s, &g, &[0.3, 0.2, 0.95]).unwrap();
        assert_eq!(sweep.best.threshold, 0.2);
        assert!(threshold_sweep(&s, &g, &[1.5]).is_err());
    }
}
