//! Ground-truth intervals, frame-level scoring, and the energy-threshold
//! baseline segmenter.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::audio::{mix_at_snr, AudioClip};
use crate::movmf::DirectionDictionary;
use crate::pipeline::{segment_recording, PipelineParams};
use crate::spectral::{stft_magnitude, Spectrogram};
use crate::types::FrameLabel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("malformed label row at line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },
    #[error("non-positive duration in label row at line {line}")]
    NegativeDuration { line: u64 },
    #[error("decision trains differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("quantile {0} outside [0, 1]")]
    BadQuantile(f64),
    #[error("sweep needs a non-empty corpus, noise list, and snr list")]
    EmptySweep,
    #[error("label io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Pipeline(#[from] Box<crate::pipeline::PipelineError>),
}

impl From<crate::pipeline::PipelineError> for EvalError {
    fn from(e: crate::pipeline::PipelineError) -> EvalError {
        EvalError::Pipeline(Box::new(e))
    }
}

/// Annotated vocalization intervals in seconds, sorted by onset and
/// pairwise disjoint. Overlapping input intervals are merged on load.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    intervals: Vec<(f64, f64)>,
}

impl GroundTruth {
    /// Builds from raw intervals: rejects non-positive durations, sorts,
    /// and merges overlaps (merging is logged, it usually means sloppy
    /// annotations).
    pub fn from_intervals(mut intervals: Vec<(f64, f64)>) -> Result<GroundTruth, EvalError> {
        for &(onset, offset) in &intervals {
            if !(offset > onset) || !onset.is_finite() || !offset.is_finite() || onset < 0.0 {
                return Err(EvalError::NegativeDuration { line: 0 });
            }
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        let mut merges = 0usize;
        for (onset, offset) in intervals {
            match merged.last_mut() {
                Some(last) if onset < last.1 => {
                    last.1 = last.1.max(offset);
                    merges += 1;
                }
                _ => merged.push((onset, offset)),
            }
        }
        if merges > 0 {
            log::warn!("merged {merges} overlapping ground-truth interval(s)");
        }
        Ok(GroundTruth { intervals: merged })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

/// Reads a label CSV: header `onset_s,offset_s` with an optional third
/// `type` column that is ignored. Row errors carry 1-based line numbers.
pub fn parse_labels<R: Read>(reader: R) -> Result<GroundTruth, EvalError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    {
        let headers = csv.headers().map_err(|e| EvalError::MalformedRow {
            line: 1,
            msg: e.to_string(),
        })?;
        if headers.len() < 2
            || headers.get(0) != Some("onset_s")
            || headers.get(1) != Some("offset_s")
        {
            return Err(EvalError::MalformedRow {
                line: 1,
                msg: format!("expected header onset_s,offset_s, got {headers:?}"),
            });
        }
    }
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| EvalError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() < 2 {
            return Err(EvalError::MalformedRow {
                line,
                msg: "need onset and offset".into(),
            });
        }
        let onset: f64 = record[0].trim().parse().map_err(|e| EvalError::MalformedRow {
            line,
            msg: format!("bad onset: {e}"),
        })?;
        let offset: f64 = record[1].trim().parse().map_err(|e| EvalError::MalformedRow {
            line,
            msg: format!("bad offset: {e}"),
        })?;
        if !(offset > onset) || onset < 0.0 {
            return Err(EvalError::NegativeDuration { line });
        }
        rows.push((onset, offset));
    }
    GroundTruth::from_intervals(rows)
}

pub fn parse_labels_file(path: &Path) -> Result<GroundTruth, EvalError> {
    parse_labels(std::fs::File::open(path)?)
}

/// Writes the label CSV format read by [`parse_labels`].
pub fn write_labels<W: Write>(gt: &GroundTruth, mut out: W) -> Result<(), EvalError> {
    writeln!(out, "onset_s,offset_s")?;
    for &(onset, offset) in gt.intervals() {
        writeln!(out, "{onset},{offset}")?;
    }
    Ok(())
}

/// Rasterizes intervals onto the frame grid: frame k spans
/// [k hop_s, k hop_s + frame_s) and is Bird when at least half of that
/// span lies inside a single interval.
pub fn intervals_to_frame_labels(
    gt: &GroundTruth,
    n_frames: usize,
    hop_s: f64,
    frame_s: f64,
) -> Vec<FrameLabel> {
    // Slack of a few ulps so an interval ending exactly at a frame
    // midpoint still counts as half covered despite rounding in the
    // overlap subtraction.
    let half = 0.5 * frame_s - 1e-9 * frame_s;
    (0..n_frames)
        .map(|k| {
            let start = k as f64 * hop_s;
            let end = start + frame_s;
            let covered = gt
                .intervals
                .iter()
                .map(|&(a, b)| (b.min(end) - a.max(start)).max(0.0))
                .fold(0.0_f64, f64::max);
            if covered >= half {
                FrameLabel::Bird
            } else {
                FrameLabel::Background
            }
        })
        .collect()
}

/// Frame-level confusion counts with derived precision, recall, and F1.
/// All three ratios define 0/0 as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub false_negatives: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, false_negatives: usize, tn: usize) -> EvalReport {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + false_negatives);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            tp,
            fp,
            false_negatives,
            tn,
            precision,
            recall,
            f1,
        }
    }
}

/// Scores predicted frame decisions against reference decisions.
pub fn frame_f1(pred: &[FrameLabel], truth: &[FrameLabel]) -> Result<EvalReport, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            a: pred.len(),
            b: truth.len(),
        });
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p.is_bird(), t.is_bird()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(EvalReport::from_counts(tp, fp, fn_, tn))
}

/// Linearly interpolated quantile of a sorted slice (the convention used
/// by most numeric packages).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Energy-threshold segmenter: frames whose log column energy lies
/// strictly above the recording's `threshold_quantile` energy quantile are
/// labeled Bird. A blunt baseline, sensitive to broadband noise on
/// purpose.
pub fn baseline_energy(
    sgram: &Spectrogram,
    threshold_quantile: f64,
) -> Result<Vec<FrameLabel>, EvalError> {
    if !(0.0..=1.0).contains(&threshold_quantile) {
        return Err(EvalError::BadQuantile(threshold_quantile));
    }
    let energies: Vec<f64> = sgram
        .mags
        .columns()
        .into_iter()
        .map(|c| (c.dot(&c)).max(1e-300).ln())
        .collect();
    let mut sorted = energies.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let threshold = quantile_sorted(&sorted, threshold_quantile);
    Ok(energies
        .iter()
        .map(|&e| {
            if e > threshold {
                FrameLabel::Bird
            } else {
                FrameLabel::Background
            }
        })
        .collect())
}

/// One pooled measurement of the noise-robustness sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub noise: String,
    pub snr_db: f64,
    pub method: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Runs the noise-robustness experiment.
///
/// Every recording is mixed with every noise at every SNR, segmented both
/// by the two-pass pipeline and by the energy baseline, and scored against
/// the rasterized ground truth on the pipeline's frame grid. Confusion
/// counts are pooled over the corpus (micro-average) before computing the
/// per-cell precision, recall, and F1. Cells are independent and run in
/// parallel; the output order is fixed: noise-major, then SNR, with the
/// `pipeline` row before the `energy` row.
pub fn snr_sweep(
    corpus: &[(AudioClip, GroundTruth)],
    noises: &[(String, AudioClip)],
    snrs_db: &[f64],
    dict: &DirectionDictionary,
    params: &PipelineParams,
    baseline_quantile: f64,
) -> Result<Vec<SweepRow>, EvalError> {
    if corpus.is_empty() || noises.is_empty() || snrs_db.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    let mut cells = Vec::with_capacity(noises.len() * snrs_db.len() * corpus.len());
    for ni in 0..noises.len() {
        for si in 0..snrs_db.len() {
            for ci in 0..corpus.len() {
                cells.push((ni, si, ci));
            }
        }
    }
    let per_cell: Vec<[EvalReport; 2]> = cells
        .par_iter()
        .map(|&(ni, si, ci)| -> Result<[EvalReport; 2], EvalError> {
            let (clip, gt) = &corpus[ci];
            let mixed = mix_at_snr(clip, &noises[ni].1, snrs_db[si])?;
            let sgram = stft_magnitude(&mixed.clip, &params.stft)?;
            let truth =
                intervals_to_frame_labels(gt, sgram.n_frames(), sgram.hop_s(), sgram.frame_s());
            let pipe = segment_recording(&mixed.clip, dict, params)?;
            let energy = baseline_energy(&sgram, baseline_quantile)?;
            Ok([
                frame_f1(&pipe.frame_decisions, &truth)?,
                frame_f1(&energy, &truth)?,
            ])
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(noises.len() * snrs_db.len() * 2);
    for ni in 0..noises.len() {
        for si in 0..snrs_db.len() {
            let base = (ni * snrs_db.len() + si) * corpus.len();
            let mut pooled = [[0usize; 4]; 2];
            for ci in 0..corpus.len() {
                for (m, rep) in per_cell[base + ci].iter().enumerate() {
                    pooled[m][0] += rep.tp;
                    pooled[m][1] += rep.fp;
                    pooled[m][2] += rep.false_negatives;
                    pooled[m][3] += rep.tn;
                }
            }
            for (m, method) in ["pipeline", "energy"].iter().enumerate() {
                let rep =
                    EvalReport::from_counts(pooled[m][0], pooled[m][1], pooled[m][2], pooled[m][3]);
                rows.push(SweepRow {
                    noise: noises[ni].0.clone(),
                    snr_db: snrs_db[si],
                    method: method.to_string(),
                    precision: rep.precision,
                    recall: rep.recall,
                    f1: rep.f1,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes sweep rows as `noise,snr_db,method,precision,recall,f1`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<(), EvalError> {
    writeln!(out, "noise,snr_db,method,precision,recall,f1")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6}",
            r.noise, r.snr_db, r.method, r.precision, r.recall, r.f1
        )?;
    }
    Ok(())
}
