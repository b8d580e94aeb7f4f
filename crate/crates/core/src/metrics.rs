//! Classification scores and between/within-class variance of a representation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::Matrix;

/// One-vs-rest counts for every class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_classes: usize,
    /// `matrix[t][p]` counts samples of true class `t` predicted as `p`.
    pub matrix: Vec<Vec<usize>>,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub tn: Vec<usize>,
    pub fn_: Vec<usize>,
}

impl ConfusionCounts {
    pub fn new(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<Self> {
        check_pair(truth, pred)?;
        let k = truth
            .iter()
            .chain(pred)
            .map(|&c| c + 1)
            .max()
            .unwrap_or(0)
            .max(n_classes);
        let mut matrix = vec![vec![0; k]; k];
        for (&t, &p) in truth.iter().zip(pred) {
            matrix[t][p] += 1;
        }
        let n = truth.len();
        let mut tp = vec![0; k];
        let mut fp = vec![0; k];
        let mut fn_ = vec![0; k];
        for c in 0..k {
            tp[c] = matrix[c][c];
            fp[c] = (0..k).map(|t| matrix[t][c]).sum::<usize>() - tp[c];
            fn_[c] = matrix[c].iter().sum::<usize>() - tp[c];
        }
        let tn = (0..k).map(|c| n - tp[c] - fp[c] - fn_[c]).collect();
        Ok(Self {
            n_classes: k,
            matrix,
            tp,
            fp,
            tn,
            fn_,
        })
    }

    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }
}

fn check_pair(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(invalid(format!(
            "{} true labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(invalid("cannot score an empty prediction set"));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_pair(truth, pred)?;
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Averaging {
    /// Unweighted mean of per-class scores over classes seen in either vector.
    Macro,
    /// Scores of the single `positive` class.
    Binary { positive: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_prf(cc: &ConfusionCounts, c: usize) -> Prf {
    let p = ratio(cc.tp[c], cc.tp[c] + cc.fp[c]);
    let r = ratio(cc.tp[c], cc.tp[c] + cc.fn_[c]);
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Prf {
        precision: p,
        recall: r,
        fscore: f,
    }
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)` and their harmonic mean.
/// Any zero denominator scores 0.
pub fn precision_recall_fscore(truth: &[usize], pred: &[usize], averaging: Averaging) -> Result<Prf> {
    let cc = ConfusionCounts::new(truth, pred, 0)?;
    match averaging {
        Averaging::Binary { positive } => {
            if positive >= cc.n_classes {
                return Ok(Prf {
                    precision: 0.0,
                    recall: 0.0,
                    fscore: 0.0,
                });
            }
            Ok(class_prf(&cc, positive))
        }
        Averaging::Macro => {
            let present: Vec<usize> = (0..cc.n_classes)
                .filter(|&c| cc.tp[c] + cc.fp[c] + cc.fn_[c] > 0)
                .collect();
            let k = present.len() as f64;
            let mut sum = Prf {
                precision: 0.0,
                recall: 0.0,
                fscore: 0.0,
            };
            for &c in &present {
                let s = class_prf(&cc, c);
                sum.precision += s.precision;
                sum.recall += s.recall;
                sum.fscore += s.fscore;
            }
            Ok(Prf {
                precision: sum.precision / k,
                recall: sum.recall / k,
                fscore: sum.fscore / k,
            })
        }
    }
}

/// Between-class (`B`, `d_bet`) and within-class (`T`, `d_wit`) variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub between: Vec<f64>,
    pub d_bet: f64,
    pub within: Vec<f64>,
    pub d_wit: f64,
}

/// `B = ½ Σ_c Σ_c' (μ_c − μ_c')²` over ordered class pairs and
/// `T = (1/n) Σ_i (x_i − μ_{c_i})²`, both component-wise; `d_bet`/`d_wit` are
/// their component means.
pub fn separability(points: &Matrix, labels: &[usize], n_classes: usize) -> Result<SeparabilityReport> {
    if labels.len() != points.rows() {
        return Err(invalid(format!(
            "{} labels for {} points",
            labels.len(),
            points.rows()
        )));
    }
    let d = points.cols();
    if d == 0 {
        return Err(invalid("separability needs at least one dimension"));
    }
    let mut sums = vec![vec![0.0; d]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (row, &c) in points.iter_rows().zip(labels) {
        if c >= n_classes {
            return Err(invalid(format!("label {c} outside [0, {n_classes})")));
        }
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(invalid(format!("class {c} has no samples")));
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();

    let mut between = vec![0.0; d];
    for a in &means {
        for b in &means {
            for k in 0..d {
                between[k] += 0.5 * (a[k] - b[k]).powi(2);
            }
        }
    }
    let mut within = vec![0.0; d];
    for (row, &c) in points.iter_rows().zip(labels) {
        for k in 0..d {
            within[k] += (row[k] - means[c][k]).powi(2);
        }
    }
    let n = points.rows() as f64;
    within.iter_mut().for_each(|v| *v /= n);
    let d_bet = between.iter().sum::<f64>() / d as f64;
    let d_wit = within.iter().sum::<f64>() / d as f64;
    Ok(SeparabilityReport {
        between,
        d_bet,
        within,
        d_wit,
    })
}

/// Scores for one (representation, classifier) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub n_test: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub averaging: Averaging,
    /// Separability of the test representation.
    pub d_bet: f64,
    pub d_wit: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn score(
        name: impl Into<String>,
        truth: &[usize],
        pred: &[usize],
        averaging: Averaging,
        points: &Matrix,
        n_classes: usize,
    ) -> Result<Self> {
        let prf = precision_recall_fscore(truth, pred, averaging)?;
        let sep = separability(points, truth, n_classes)?;
        let cc = ConfusionCounts::new(truth, pred, n_classes)?;
        Ok(Self {
            name: name.into(),
            n_test: truth.len(),
            accuracy: accuracy(truth, pred)?,
            precision: prf.precision,
            recall: prf.recall,
            fscore: prf.fscore,
            averaging,
            d_bet: sep.d_bet,
            d_wit: sep.d_wit,
            confusion: cc.matrix,
        })
    }
}
