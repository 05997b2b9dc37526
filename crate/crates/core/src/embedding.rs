//! Directional embeddings: inner products of unit super-frames against the
//! atoms of a direction dictionary, and softmax normalization of the
//! resulting columns.
//!
//! Super-frames aligned with a learned direction produce a large
//! coefficient on that atom; background frames, pointing nowhere in
//! particular, produce uniformly small coefficients. The normalized form
//! turns each column into a categorical distribution for the mutual
//! information stage.

use ndarray::Array2;
use thiserror::Error;

use crate::movmf::{DictProvenance, DirectionDictionary};
use crate::spectral::SuperFrameMatrix;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("super-frame dimension {sf} does not match dictionary dimension {dict}")]
    DimensionMismatch { sf: usize, dict: usize },
}

/// Projection coefficients, one dictionary-atom row per super-frame
/// column. Entries lie in [-1, 1] whenever the projected columns are unit
/// length; flagged-off (zeroed) super-frame columns come through as
/// all-zero columns.
#[derive(Debug, Clone)]
pub struct DEMatrix {
    pub coeffs: Array2<f64>,
    pub provenance: DictProvenance,
}

impl DEMatrix {
    pub fn n_atoms(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.coeffs.ncols()
    }
}

/// Column-wise softmax of a projection: every column is strictly positive
/// and sums to 1.
#[derive(Debug, Clone)]
pub struct NormalizedDE {
    pub probs: Array2<f64>,
}

/// Projects super-frame columns onto the dictionary atoms: coeffs = M'P.
///
/// The feature dimension must match exactly. A dictionary whose recorded
/// stacking (w, d) differs from the super-frame matrix while the product
/// agrees is suspicious but usable, so it only warns.
pub fn project(
    dict: &DirectionDictionary,
    sf: &SuperFrameMatrix,
) -> Result<DEMatrix, EmbeddingError> {
    if sf.data.nrows() != dict.wd() {
        return Err(EmbeddingError::DimensionMismatch {
            sf: sf.data.nrows(),
            dict: dict.wd(),
        });
    }
    if dict.provenance.w != sf.w || dict.provenance.d != sf.d {
        log::warn!(
            "dictionary stacking ({}, {}) differs from super-frames ({}, {})",
            dict.provenance.w,
            dict.provenance.d,
            sf.w,
            sf.d
        );
    }
    Ok(DEMatrix {
        coeffs: dict.atoms.t().dot(&sf.data),
        provenance: dict.provenance.clone(),
    })
}

/// Column-wise softmax with max-subtraction, so arbitrarily large or small
/// coefficients stay in range. An all-zero column (a flagged-off silent
/// super-frame) maps to the uniform distribution.
pub fn softmax_normalize(de: &DEMatrix) -> NormalizedDE {
    let mut probs = de.coeffs.clone();
    for mut col in probs.columns_mut() {
        let max = col.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        col.mapv_inplace(|v| (v - max).exp());
        let sum = col.sum();
        col.mapv_inplace(|v| v / sum);
    }
    NormalizedDE { probs }
}
