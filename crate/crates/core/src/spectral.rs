//! Magnitude spectrograms and unit-normalized super-frames.
//!
//! A super-frame stacks `w` consecutive spectrogram frames into one column,
//! replicating edge frames so the column count never changes, then projects
//! each column onto the unit hypersphere. Normalization erases per-frame
//! gain, which is what makes the downstream embedding amplitude-invariant.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("clip too short: {len} samples, need at least {frame_len}")]
    ClipTooShort { len: usize, frame_len: usize },
    #[error("invalid stft parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

/// Short-time transform parameters. The frame length in samples is derived
/// from `frame_ms` and the clip's rate; frames shorter than `fft_size` are
/// zero-padded, longer ones are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftParams {
    pub frame_ms: f64,
    pub overlap: f64,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams {
            frame_ms: 20.0,
            overlap: 0.5,
            fft_size: 1024,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_ms / 1000.0 * sample_rate as f64).round() as usize
    }

    pub fn hop(&self, sample_rate: u32) -> usize {
        (self.frame_len(sample_rate) as f64 * (1.0 - self.overlap)).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn validate(&self, sample_rate: u32) -> Result<(), SpectralError> {
        if !(self.frame_ms > 0.0 && self.frame_ms.is_finite()) {
            return Err(SpectralError::InvalidParams("frame_ms must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(SpectralError::InvalidParams(
                "overlap must be in [0, 1)".into(),
            ));
        }
        if self.fft_size == 0 {
            return Err(SpectralError::InvalidParams("fft_size must be > 0".into()));
        }
        let frame_len = self.frame_len(sample_rate);
        if frame_len == 0 || self.hop(sample_rate) == 0 {
            return Err(SpectralError::InvalidParams(
                "frame or hop rounds to zero samples".into(),
            ));
        }
        if frame_len > self.fft_size {
            return Err(SpectralError::InvalidParams(format!(
                "frame of {frame_len} samples exceeds fft_size {}",
                self.fft_size
            )));
        }
        Ok(())
    }
}

/// Magnitude spectrogram, one column per frame, `fft_size/2 + 1` bins.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub mags: Array2<f64>,
    pub params: StftParams,
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.mags.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.mags.ncols()
    }

    /// Frame span in seconds.
    pub fn frame_s(&self) -> f64 {
        self.frame_len as f64 / self.sample_rate as f64
    }

    /// Hop between frame onsets in seconds.
    pub fn hop_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    /// Debug dump, one frame per line, bins comma-separated.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for col in self.mags.columns() {
            let line: Vec<String> = col.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn window_values(kind: WindowKind, len: usize) -> Vec<f64> {
    match kind {
        WindowKind::Rectangular => vec![1.0; len],
        WindowKind::Hann => (0..len)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / len as f64).cos())
            .collect(),
    }
}

/// Frames the clip, windows each frame, zero-pads to `fft_size`, and takes
/// the FFT magnitude of the non-negative frequency bins.
///
/// Frame count is floor((len - frame_len)/hop) + 1; trailing samples that
/// do not fill a frame are dropped.
pub fn stft_magnitude(clip: &AudioClip, params: &StftParams) -> Result<Spectrogram, SpectralError> {
    params.validate(clip.sample_rate)?;
    let frame_len = params.frame_len(clip.sample_rate);
    let hop = params.hop(clip.sample_rate);
    if clip.samples.len() < frame_len {
        return Err(SpectralError::ClipTooShort {
            len: clip.samples.len(),
            frame_len,
        });
    }
    let n = (clip.samples.len() - frame_len) / hop + 1;
    let d = params.n_bins();
    let window = window_values(params.window, frame_len);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(params.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); params.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let mut mags = Array2::<f64>::zeros((d, n));
    for k in 0..n {
        let start = k * hop;
        for (i, c) in buf.iter_mut().enumerate() {
            let s = if i < frame_len {
                clip.samples[start + i] * window[i]
            } else {
                0.0
            };
            *c = Complex::new(s, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (b, m) in mags.column_mut(k).iter_mut().enumerate() {
            *m = buf[b].norm();
        }
    }

    Ok(Spectrogram {
        mags,
        params: *params,
        sample_rate: clip.sample_rate,
        frame_len,
        hop,
    })
}

/// Super-frame matrix: `w * d` rows by one column per spectrogram frame.
/// `unit_flags[k]` stays true while column k is usable; [`unit_normalize`]
/// clears it for columns too small to normalize (those are zeroed).
#[derive(Debug, Clone)]
pub struct SuperFrameMatrix {
    pub data: Array2<f64>,
    pub w: usize,
    pub d: usize,
    pub unit_flags: Vec<bool>,
}

impl SuperFrameMatrix {
    pub fn wd(&self) -> usize {
        self.w * self.d
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }
}

/// Stacks `w` consecutive frames (centered, edges replicated) per column.
/// `w` must be odd so each column has a well-defined center frame.
pub fn superframes(sgram: &Spectrogram, w: usize) -> Result<SuperFrameMatrix, SpectralError> {
    if w == 0 || w % 2 == 0 {
        return Err(SpectralError::InvalidParams(format!(
            "context width must be odd, got {w}"
        )));
    }
    let d = sgram.n_bins();
    let n = sgram.n_frames();
    let h = (w as isize - 1) / 2;
    let mut data = Array2::<f64>::zeros((w * d, n));
    for k in 0..n {
        let mut col = data.column_mut(k);
        for j in 0..w {
            let src = (k as isize + j as isize - h).clamp(0, n as isize - 1) as usize;
            col.slice_mut(ndarray::s![j * d..(j + 1) * d])
                .assign(&sgram.mags.column(src));
        }
    }
    Ok(SuperFrameMatrix {
        data,
        w,
        d,
        unit_flags: vec![true; n],
    })
}

/// Relative floor used to derive the normalization epsilon: columns whose
/// norm is at or below 1e-12 of the largest column norm are zeroed.
pub const UNIT_EPS_REL: f64 = 1e-12;

/// Epsilon for [`unit_normalize`] scaled to the data: `UNIT_EPS_REL` times
/// the largest column norm. Zero when the matrix is all zero.
pub fn relative_unit_eps(sf: &SuperFrameMatrix) -> f64 {
    let max_norm = sf
        .data
        .columns()
        .into_iter()
        .map(|c| c.dot(&c).sqrt())
        .fold(0.0_f64, f64::max);
    UNIT_EPS_REL * max_norm
}

/// Scales every column to unit Euclidean norm. Columns with norm <= `eps`
/// cannot be meaningfully normalized: they are zeroed and flagged false.
pub fn unit_normalize(sf: &mut SuperFrameMatrix, eps: f64) -> Result<(), SpectralError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(SpectralError::InvalidParams(
            "eps must be finite and non-negative".into(),
        ));
    }
    for (k, mut col) in sf.data.columns_mut().into_iter().enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm > eps {
            col.mapv_inplace(|v| v / norm);
        } else {
            col.fill(0.0);
            sf.unit_flags[k] = false;
        }
    }
    Ok(())
}

/// Columns of `sf` that are still flagged usable, as an owned matrix,
/// together with their original column indices.
pub fn live_columns(sf: &SuperFrameMatrix) -> (Array2<f64>, Vec<usize>) {
    let keep: Vec<usize> = (0..sf.n_cols()).filter(|&k| sf.unit_flags[k]).collect();
    let mut out = Array2::<f64>::zeros((sf.data.nrows(), keep.len()));
    for (j, &k) in keep.iter().enumerate() {
        out.column_mut(j).assign(&sf.data.column(k));
    }
    (out, keep)
}
