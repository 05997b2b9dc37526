//! End-to-end segmentation of one recording.
//!
//! The driver runs two passes over the same feature stream: an unsupervised
//! pass that scores every frame by the mutual information of its normalized
//! directional embedding and picks the most confident extremes as training
//! frames, and a supervised pass that trains a per-recording classifier on
//! those frames and scores everything. Decision smoothing and run-length
//! conversion turn the frame train into time segments.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::classifier::{self, ClassifierError, KernelSpec, SvmConfig};
use crate::evalkit::GroundTruth;
use crate::embedding::{self, EmbeddingError};
use crate::labeling::{self, AutoLabels, LabelingError, MiCurve};
use crate::movmf::{self, DictProvenance, DirectionDictionary, EmConfig, MovmfError};
use crate::spectral::{self, SpectralError, StftParams};
use crate::types::FrameLabel;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("recording yields {frames} analysis frames, need at least {needed}")]
    ClipTooShort { frames: usize, needed: usize },
    #[error("dictionary dimension {dict} does not match super-frame dimension {sf}")]
    DimensionMismatch { dict: usize, sf: usize },
    #[error("median window length must be odd, got {0}")]
    EvenMedianLength(usize),
    #[error("training labels cover no vocalization super-frames")]
    NoVocalizationFrames,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Mixture(#[from] MovmfError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Which per-frame feature the classifier sees: the raw projection
/// coefficients or their column softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvmFeature {
    Raw,
    Softmax,
}

/// Classifier knobs exposed at the pipeline level.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel: KernelSpec::default(),
            tol: 1e-3,
        }
    }
}

/// Everything [`segment_recording`] needs besides the clip and the
/// dictionary. `q` is the per-side label budget before the one-tenth cap;
/// `smoothing_len` must be odd.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub stft: StftParams,
    pub w: usize,
    pub q: usize,
    pub mi_bins: usize,
    pub svm: SvmParams,
    pub smoothing_len: usize,
    pub min_segment_ms: f64,
    pub merge_gap_ms: f64,
    pub feature_for_svm: SvmFeature,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            stft: StftParams::default(),
            w: 5,
            q: 2000,
            mi_bins: 16,
            svm: SvmParams::default(),
            smoothing_len: 5,
            min_segment_ms: 30.0,
            merge_gap_ms: 20.0,
            feature_for_svm: SvmFeature::Raw,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// Settings for [`train_dictionary`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DictTrainParams {
    pub stft: StftParams,
    pub w: usize,
    pub em: EmConfig,
    /// Number of most-concentrated mixture components kept as atoms.
    pub keep: usize,
}

impl Default for DictTrainParams {
    fn default() -> Self {
        DictTrainParams {
            stft: StftParams::default(),
            w: 5,
            em: EmConfig::default(),
            keep: 10,
        }
    }
}

/// Run metadata a caller can inspect or log alongside the segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Per-side label budget actually used after the one-tenth cap.
    pub effective_q: usize,
    /// True when the score curve was flat and the run fell back to
    /// reporting no vocalizations at all.
    pub degenerate_fallback: bool,
    /// `None` when no classifier was trained (fallback path).
    pub svm_converged: Option<bool>,
    /// Gain applied by an upstream mixing step, when the caller did one.
    pub peak_rescale: Option<f64>,
}

/// Everything the segmentation run produced, intermediate curves included.
#[derive(Debug, Clone)]
pub struct SegmentationResult {
    /// Post-smoothing decision per analysis frame.
    pub frame_decisions: Vec<FrameLabel>,
    /// Sorted, disjoint `(onset_s, offset_s)` pairs.
    pub segments: Vec<(f64, f64)>,
    pub mi: MiCurve,
    /// Frames the classifier was trained on; `None` on the fallback path.
    pub auto_labels: Option<AutoLabels>,
    pub diagnostics: Diagnostics,
}

/// Fits the direction dictionary on unit-normalized super-frames pooled
/// from the labeled vocalization regions of the training clips; background
/// super-frames are discarded so the atoms model vocalizations only. A
/// super-frame belongs to a vocalization when its center frame does.
pub fn train_dictionary(
    clips: &[(AudioClip, GroundTruth)],
    params: &DictTrainParams,
) -> Result<DirectionDictionary, PipelineError> {
    if clips.is_empty() {
        return Err(PipelineError::NoVocalizationFrames);
    }
    let sample_rate = clips[0].0.sample_rate;
    let mut pooled: Vec<Array2<f64>> = Vec::with_capacity(clips.len());
    let mut d = 0;
    for (clip, gt) in clips {
        if clip.sample_rate != sample_rate {
            log::warn!(
                "training clip at {} Hz pooled with {} Hz material",
                clip.sample_rate,
                sample_rate
            );
        }
        let sgram = spectral::stft_magnitude(clip, &params.stft)?;
        d = sgram.n_bins();
        let mut sf = spectral::superframes(&sgram, params.w)?;
        let eps = spectral::relative_unit_eps(&sf);
        spectral::unit_normalize(&mut sf, eps)?;
        let frame_s = params.stft.frame_ms / 1000.0;
        let hop_s = frame_s * (1.0 - params.stft.overlap);
        let labels = crate::evalkit::intervals_to_frame_labels(gt, sf.n_cols(), hop_s, frame_s);
        let keep: Vec<usize> = (0..sf.n_cols())
            .filter(|&k| sf.unit_flags[k] && labels[k].is_bird())
            .collect();
        if keep.is_empty() {
            continue;
        }
        let mut block = Array2::<f64>::zeros((sf.wd(), keep.len()));
        for (j, &k) in keep.iter().enumerate() {
            block.column_mut(j).assign(&sf.data.column(k));
        }
        pooled.push(block);
    }
    let total: usize = pooled.iter().map(|m| m.ncols()).sum();
    if total == 0 {
        return Err(PipelineError::NoVocalizationFrames);
    }
    let mut data = Array2::<f64>::zeros((params.w * d, total));
    let mut at = 0;
    for block in &pooled {
        data.slice_mut(ndarray::s![.., at..at + block.ncols()])
            .assign(block);
        at += block.ncols();
    }
    let fit = movmf::fit(data.view(), &params.em)?;
    let dict = movmf::build_dictionary(
        &fit.mixture,
        params.keep,
        DictProvenance {
            stft: params.stft,
            w: params.w,
            d,
            sample_rate,
        },
    )?;
    Ok(dict)
}

/// Segments one recording against a previously trained dictionary.
///
/// Flow: spectrogram, super-frames, unit normalization, projection onto
/// the dictionary, column softmax, per-frame mutual information, automatic
/// selection of the `q` lowest- and highest-scoring frames, classifier
/// training on those frames, classification of every frame, median
/// smoothing, run-to-segment conversion.
///
/// The per-side budget is capped at one tenth of the frame count; a cap
/// that bites is logged. A flat score curve cannot rank frames, so that
/// case returns an all-background result with
/// `diagnostics.degenerate_fallback` set instead of failing.
pub fn segment_recording(
    clip: &AudioClip,
    dict: &DirectionDictionary,
    params: &PipelineParams,
) -> Result<SegmentationResult, PipelineError> {
    let sgram = spectral::stft_magnitude(clip, &params.stft)?;
    let mut sf = spectral::superframes(&sgram, params.w)?;
    let n = sf.n_cols();
    if n < params.w {
        return Err(PipelineError::ClipTooShort {
            frames: n,
            needed: params.w,
        });
    }
    if dict.wd() != sf.wd() {
        return Err(PipelineError::DimensionMismatch {
            dict: dict.wd(),
            sf: sf.wd(),
        });
    }
    if dict.provenance.stft != params.stft || dict.provenance.sample_rate != clip.sample_rate {
        log::warn!(
            "dictionary was built under different analysis settings; projection dimensions \
             agree but the embeddings may not be comparable"
        );
    }
    let eps = spectral::relative_unit_eps(&sf);
    spectral::unit_normalize(&mut sf, eps)?;
    let de = embedding::project(dict, &sf)?;
    let nde = embedding::softmax_normalize(&de);
    let mi = labeling::mi_curve(&nde, params.mi_bins)?;

    let effective_q = params.q.min(n / 10);
    if effective_q < params.q {
        log::warn!(
            "label budget reduced from {} to {} ({} frames available)",
            params.q,
            effective_q,
            n
        );
    }
    let auto = match labeling::auto_label(&mi, effective_q) {
        Ok(a) => a,
        Err(LabelingError::DegenerateCurve) => {
            return Ok(SegmentationResult {
                frame_decisions: vec![FrameLabel::Background; n],
                segments: Vec::new(),
                mi,
                auto_labels: None,
                diagnostics: Diagnostics {
                    effective_q,
                    degenerate_fallback: true,
                    svm_converged: None,
                    peak_rescale: None,
                },
            });
        }
        Err(e) => return Err(e.into()),
    };

    let source: ArrayView2<f64> = match params.feature_for_svm {
        SvmFeature::Raw => de.coeffs.view(),
        SvmFeature::Softmax => nde.probs.view(),
    };
    let q = auto.q;
    let mut train_rows = Array2::<f64>::zeros((2 * q, source.nrows()));
    let mut train_labels = Vec::with_capacity(2 * q);
    for (r, &k) in auto.positive.iter().chain(auto.negative.iter()).enumerate() {
        train_rows.row_mut(r).assign(&source.column(k));
        train_labels.push(if r < q {
            FrameLabel::Bird
        } else {
            FrameLabel::Background
        });
    }
    let svm_cfg = SvmConfig {
        c: params.svm.c,
        kernel: params.svm.kernel,
        tol: params.svm.tol,
        max_passes: None,
        seed: params.seed,
    };
    let model = classifier::train_svm(train_rows.view(), &train_labels, &svm_cfg)?;
    let raw_decisions = classifier::predict(&model, source.t())?;
    let frame_decisions = smooth_decisions(&raw_decisions, params.smoothing_len)?;
    let segments = frames_to_segments(
        &frame_decisions,
        sgram.hop_s(),
        sgram.frame_s(),
        params.min_segment_ms,
        params.merge_gap_ms,
    );
    Ok(SegmentationResult {
        frame_decisions,
        segments,
        mi,
        auto_labels: Some(auto),
        diagnostics: Diagnostics {
            effective_q,
            degenerate_fallback: false,
            svm_converged: Some(model.converged),
            peak_rescale: None,
        },
    })
}

/// Sliding median over the decision train, edges replicated. A median of
/// zeros and ones is the window majority. `median_len` must be odd so the
/// majority is never tied; 1 disables smoothing.
pub fn smooth_decisions(
    decisions: &[FrameLabel],
    median_len: usize,
) -> Result<Vec<FrameLabel>, PipelineError> {
    if median_len == 0 || median_len % 2 == 0 {
        return Err(PipelineError::EvenMedianLength(median_len));
    }
    if median_len == 1 || decisions.is_empty() {
        return Ok(decisions.to_vec());
    }
    let n = decisions.len() as isize;
    let h = (median_len as isize - 1) / 2;
    let out = (0..n)
        .map(|k| {
            let birds = (-h..=h)
                .filter(|&j| decisions[(k + j).clamp(0, n - 1) as usize].is_bird())
                .count();
            if 2 * birds > median_len {
                FrameLabel::Bird
            } else {
                FrameLabel::Background
            }
        })
        .collect();
    Ok(out)
}

/// Converts a decision train into time segments.
///
/// A run of positive frames `k_start..=k_end` spans
/// `[k_start * hop, k_end * hop + frame]`, so a run keeps the full span of
/// its last frame. Segments whose silent gap is shorter than
/// `merge_gap_ms` are merged first; only then are segments shorter than
/// `min_segment_ms` dropped, so two short calls separated by a breath
/// survive as one segment. The output is sorted and disjoint.
pub fn frames_to_segments(
    decisions: &[FrameLabel],
    hop_s: f64,
    frame_s: f64,
    min_segment_ms: f64,
    merge_gap_ms: f64,
) -> Vec<(f64, f64)> {
    let mut runs: Vec<(f64, f64)> = Vec::new();
    let mut k = 0;
    while k < decisions.len() {
        if decisions[k].is_bird() {
            let start = k;
            while k + 1 < decisions.len() && decisions[k + 1].is_bird() {
                k += 1;
            }
            runs.push((start as f64 * hop_s, k as f64 * hop_s + frame_s));
        }
        k += 1;
    }
    let merge_gap_s = merge_gap_ms / 1000.0;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for seg in runs {
        match merged.last_mut() {
            // Overlapping frames can make the gap non-positive; that case
            // always merges.
            Some(last) if seg.0 - last.1 < merge_gap_s => last.1 = seg.1,
            _ => merged.push(seg),
        }
    }
    let min_s = min_segment_ms / 1000.0;
    merged.retain(|&(a, b)| b - a >= min_s);
    merged
}

/// Writes segments as `onset_s,offset_s` rows with six-decimal fixed
/// precision.
pub fn write_segments_csv<W: Write>(segments: &[(f64, f64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "onset_s,offset_s")?;
    for &(a, b) in segments {
        writeln!(out, "{a:.6},{b:.6}")?;
    }
    Ok(())
}
