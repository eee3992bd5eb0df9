//! Clustering and segmentation scores.

mod hungarian;

pub use hungarian::{hungarian, Matching};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Label id treated as background by [`fg_ari`] helpers.
pub const BACKGROUND: usize = 0;

/// Co-occurrence counts of predicted clusters (rows) and true clusters
/// (columns), over the distinct labels of each side in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub pred_labels: Vec<usize>,
    pub true_labels: Vec<usize>,
    pub total: usize,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::invalid(format!(
                "label lengths differ: {} predicted, {} true",
                pred.len(),
                truth.len()
            )));
        }
        let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
            let mut m = BTreeMap::new();
            for &l in labels {
                m.entry(l).or_insert(0);
            }
            for (i, v) in m.values_mut().enumerate() {
                *v = i;
            }
            m
        };
        let (pi, ti) = (index(pred), index(truth));
        let mut counts = vec![vec![0; ti.len()]; pi.len()];
        for (p, t) in pred.iter().zip(truth) {
            counts[pi[p]][ti[t]] += 1;
        }
        Ok(ContingencyTable {
            counts,
            pred_labels: pi.into_keys().collect(),
            true_labels: ti.into_keys().collect(),
            total: pred.len(),
        })
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let mut s = vec![0; self.true_labels.len()];
        for r in &self.counts {
            for (o, c) in s.iter_mut().zip(r) {
                *o += c;
            }
        }
        s
    }
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index. Returns 0 when the adjustment denominator vanishes,
/// which happens when both sides are a single cluster or both are all
/// singletons.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.total < 2 {
        return Err(Error::invalid("ARI needs at least two elements"));
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let sa: f64 = table.row_sums().into_iter().map(pairs).sum();
    let sb: f64 = table.col_sums().into_iter().map(pairs).sum();
    let expected = sa * sb / pairs(table.total);
    let max = 0.5 * (sa + sb);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((index - expected) / denom)
}

/// ARI over the elements where `foreground` is true.
pub fn fg_ari(pred: &[usize], truth: &[usize], foreground: &[bool]) -> Result<f64> {
    if foreground.len() != truth.len() || pred.len() != truth.len() {
        return Err(Error::invalid(
            "prediction, truth and foreground mask lengths differ",
        ));
    }
    let (p, t): (Vec<usize>, Vec<usize>) = pred
        .iter()
        .zip(truth)
        .zip(foreground)
        .filter(|(_, &f)| f)
        .map(|((&p, &t), _)| (p, t))
        .unzip();
    if p.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "foreground ARI needs at least 2 foreground elements, got {}",
            p.len()
        )));
    }
    ari(&p, &t)
}

/// Elements whose true label is not `background`.
pub fn foreground(truth: &[usize], background: usize) -> Vec<bool> {
    truth.iter().map(|&l| l != background).collect()
}

/// One boolean mask per distinct label, in ascending label order.
pub fn label_masks(labels: &[usize]) -> Vec<Vec<bool>> {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.iter()
        .map(|&id| labels.iter().map(|&l| l == id).collect())
        .collect()
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean IoU over the true masks after Hungarian matching on negative IoU.
/// True masks left unmatched contribute 0. Two empty masks have IoU 1.
pub fn jaccard_matched(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("no true masks to match".into()));
    }
    let len = truth[0].len();
    if pred.iter().chain(truth).any(|m| m.len() != len) {
        return Err(Error::invalid("masks have different sizes"));
    }
    let ious = Matrix::from_fn(pred.len(), truth.len(), |i, j| iou(&pred[i], &truth[j]));
    let m = hungarian(&ious.map(|v| -v));
    let total: f64 = m
        .rows
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| ious[(i, c)]))
        .sum();
    Ok(total / truth.len() as f64)
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub ari: f64,
    /// `None` when fewer than two foreground elements exist.
    pub fg_ari: Option<f64>,
    pub jaccard: f64,
    pub k_pred: usize,
    pub k_true: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "ari,fg_ari,jaccard,k_pred,k_true";

    /// One CSV row without a trailing newline; an undefined FG-ARI is empty.
    pub fn csv_row(&self) -> String {
        let fg = self.fg_ari.map(crate::files::sig9).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            crate::files::sig9(self.ari),
            fg,
            crate::files::sig9(self.jaccard),
            self.k_pred,
            self.k_true
        )
    }
}

/// All scores for one labeling against ground truth with label
/// `background` as background.
pub fn evaluate(pred: &[usize], truth: &[usize], background: usize) -> Result<MetricReport> {
    let table = ContingencyTable::new(pred, truth)?;
    let fg = match fg_ari(pred, truth, &foreground(truth, background)) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        ari: ari(pred, truth)?,
        fg_ari: fg,
        jaccard: jaccard_matched(&label_masks(pred), &label_masks(truth))?,
        k_pred: table.pred_labels.len(),
        k_true: table.true_labels.len(),
    })
}

/// Per-frame reports averaged field by field. FG-ARI is averaged over the
/// frames where it is defined.
pub fn evaluate_frames(
    frames: &[(Vec<usize>, Vec<usize>)],
    background: usize,
) -> Result<MetricReport> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to evaluate"));
    }
    let reports = frames
        .iter()
        .map(|(p, t)| evaluate(p, t, background))
        .collect::<Result<Vec<_>>>()?;
    let n = reports.len() as f64;
    let fg: Vec<f64> = reports.iter().filter_map(|r| r.fg_ari).collect();
    Ok(MetricReport {
        ari: reports.iter().map(|r| r.ari).sum::<f64>() / n,
        fg_ari: (!fg.is_empty()).then(|| fg.iter().sum::<f64>() / fg.len() as f64),
        jaccard: reports.iter().map(|r| r.jaccard).sum::<f64>() / n,
        k_pred: reports.iter().map(|r| r.k_pred).max().unwrap_or(0),
        k_true: reports.iter().map(|r| r.k_true).max().unwrap_or(0),
    })
}
