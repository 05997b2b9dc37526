//! Self-labeling from normalized directional embeddings: a mutual
//! information score over consecutive columns, and a budgeted pick of the
//! lowest-scoring frames as positives and the highest as negatives.
//!
//! Background columns stay near-uniform from frame to frame, so a pair of
//! them lands in few histogram cells and keeps marginal entropy high:
//! large MI. Vocalization columns are peaked and change fast: small MI.
//! Only the ordering of the scores is consumed downstream.

use std::io::Write;

use ndarray::ArrayView1;
use thiserror::Error;

use crate::embedding::NormalizedDE;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("not a distribution: {0}")]
    NotADistribution(String),
    #[error("distribution lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least 2 columns, got {k}")]
    TooFewColumns { k: usize },
    #[error("budget {q} does not fit {k} frames (need 2q <= k, q >= 1)")]
    BudgetTooLarge { q: usize, k: usize },
    #[error("score curve carries no contrast to rank frames by")]
    DegenerateCurve,
}

/// Tolerance on a probability column's total mass.
const DISTRIBUTION_MASS_TOL: f64 = 1e-6;

/// MI scores below this spread cannot order frames meaningfully.
const CURVE_CONTRAST_FLOOR: f64 = 1e-9;

/// Per-frame mutual information scores. `values[k]` scores the pair of
/// columns (k-1, k); index 0 copies index 1 so the curve aligns one to one
/// with frames.
#[derive(Debug, Clone)]
pub struct MiCurve {
    pub values: Vec<f64>,
    pub bins: usize,
}

impl MiCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Frame indices picked for classifier training: `positive` holds the
/// budget-many lowest-MI frames (vocalization candidates), `negative` the
/// highest (background candidates). Both are sorted ascending and
/// disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AutoLabels {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub q: usize,
}

fn validate_distribution(p: ArrayView1<f64>) -> Result<(), LabelingError> {
    let mut sum = 0.0;
    for &v in p {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(LabelingError::NotADistribution(format!(
                "entry {v} is negative or non-finite"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > DISTRIBUTION_MASS_TOL {
        return Err(LabelingError::NotADistribution(format!(
            "mass {sum} is not 1"
        )));
    }
    Ok(())
}

/// Shannon entropy of a categorical distribution, in bits.
pub fn entropy(p: ArrayView1<f64>) -> Result<f64, LabelingError> {
    validate_distribution(p)?;
    Ok(entropy_bits(p))
}

fn entropy_bits(p: ArrayView1<f64>) -> f64 {
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.log2())
        .sum()
}

/// Uniform bin over [0, 1]; the top edge folds into the last bin.
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor() as usize).min(bins - 1)
}

/// Joint entropy (bits) of two equal-length probability columns under a
/// quantize-and-count estimator: each coordinate pair (a_j, b_j) is binned
/// on a bins x bins grid over [0, 1]^2 and the histogram of the Z pairs,
/// normalized by Z, is the joint distribution.
pub fn joint_entropy(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    bins: usize,
) -> Result<f64, LabelingError> {
    assert!(bins >= 2, "need at least 2 bins");
    if a.len() != b.len() {
        return Err(LabelingError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    validate_distribution(a)?;
    validate_distribution(b)?;
    Ok(joint_entropy_bits(a, b, bins))
}

fn joint_entropy_bits(a: ArrayView1<f64>, b: ArrayView1<f64>, bins: usize) -> f64 {
    let z = a.len() as f64;
    let mut counts = vec![0u32; bins * bins];
    for (&x, &y) in a.iter().zip(b.iter()) {
        counts[bin_of(x, bins) * bins + bin_of(y, bins)] += 1;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / z;
            -p * p.log2()
        })
        .sum()
}

/// MI score for every frame: values[k] = H(col k) + H(col k-1) minus the
/// binned joint entropy of the pair, with values[0] copying values[1].
/// Marginal entropies are computed once per column.
pub fn mi_curve(nde: &NormalizedDE, bins: usize) -> Result<MiCurve, LabelingError> {
    assert!(bins >= 2, "need at least 2 bins");
    let k = nde.probs.ncols();
    if k < 2 {
        return Err(LabelingError::TooFewColumns { k });
    }
    let marginals: Vec<f64> = nde
        .probs
        .columns()
        .into_iter()
        .map(entropy_bits)
        .collect();
    let mut values = vec![0.0; k];
    for i in 1..k {
        let joint = joint_entropy_bits(nde.probs.column(i), nde.probs.column(i - 1), bins);
        values[i] = marginals[i] + marginals[i - 1] - joint;
    }
    values[0] = values[1];
    Ok(MiCurve { values, bins })
}

/// Picks the `q` lowest-MI frames as positives and the `q` highest as
/// negatives, ties broken toward the lower frame index. The curve must
/// carry enough contrast for the two sets to be disjoint.
pub fn auto_label(mi: &MiCurve, q: usize) -> Result<AutoLabels, LabelingError> {
    let k = mi.len();
    if q == 0 || 2 * q > k {
        return Err(LabelingError::BudgetTooLarge { q, k });
    }
    let (min, max) = mi
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if max - min < CURVE_CONTRAST_FLOOR {
        return Err(LabelingError::DegenerateCurve);
    }

    let mut by_value: Vec<usize> = (0..k).collect();
    by_value.sort_by(|&a, &b| mi.values[a].total_cmp(&mi.values[b]).then(a.cmp(&b)));
    let mut positive: Vec<usize> = by_value[..q].to_vec();

    let mut by_value_desc: Vec<usize> = (0..k).collect();
    by_value_desc.sort_by(|&a, &b| mi.values[b].total_cmp(&mi.values[a]).then(a.cmp(&b)));
    let mut negative: Vec<usize> = by_value_desc[..q].to_vec();

    positive.sort_unstable();
    negative.sort_unstable();
    // Heavy ties can pull the same frame into both ends of the ranking;
    // such a curve cannot self-label.
    let mut i = 0;
    let mut j = 0;
    while i < positive.len() && j < negative.len() {
        match positive[i].cmp(&negative[j]) {
            std::cmp::Ordering::Equal => return Err(LabelingError::DegenerateCurve),
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }

    Ok(AutoLabels {
        positive,
        negative,
        q,
    })
}

/// Writes the curve as `frame_index,mi_value` rows for plotting.
pub fn write_mi_csv<W: Write>(mi: &MiCurve, mut out: W) -> std::io::Result<()> {
    writeln!(out, "frame_index,mi_value")?;
    for (i, v) in mi.values.iter().enumerate() {
        writeln!(out, "{i},{v}")?;
    }
    Ok(())
}
