//! WAV input/output, SNR-controlled noise mixing, and synthetic corpus
//! generation for controlled experiments.
//!
//! Amplitudes are mapped PCM <-> float as s/32768, so 16384 reads back as
//! exactly 0.5. Writing saturates at 32767, so a full-scale 1.0 sample
//! round-trips to 32767/32768.

use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::evalkit::GroundTruth;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported wav format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt wav header: {0}")]
    CorruptHeader(String),
    #[error("audio io failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("sample rate mismatch: {0} vs {1}")]
    SampleRateMismatch(u32, u32),
    #[error("cannot mix against silent input")]
    SilentInput,
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
}

/// Mono recording as float samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude over the whole clip; 0.0 when empty.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

fn map_hound_err(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) => AudioError::IoFailure(io),
        hound::Error::FormatError(msg) => AudioError::CorruptHeader(msg.to_string()),
        hound::Error::Unsupported => {
            AudioError::UnsupportedFormat("encoding not supported".into())
        }
        other => AudioError::CorruptHeader(other.to_string()),
    }
}

/// Reads a 16-bit PCM mono RIFF WAV file. Anything else is rejected.
pub fn read_wav(path: &Path) -> Result<AudioClip, AudioError> {
    let mut reader = hound::WavReader::open(path).map_err(map_hound_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{:?} {}-bit, expected 16-bit integer PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples: Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(map_hound_err)?;
    Ok(AudioClip {
        samples: samples.iter().map(|&s| s as f64 / 32768.0).collect(),
        sample_rate: spec.sample_rate,
    })
}

/// Writes 16-bit PCM mono. Samples are clamped to [-1, 1] and rounded;
/// +1.0 saturates to 32767.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_hound_err)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round();
        writer
            .write_sample(v.clamp(-32768.0, 32767.0) as i16)
            .map_err(map_hound_err)?;
    }
    writer.finalize().map_err(map_hound_err)?;
    Ok(())
}

/// Result of [`mix_at_snr`]. `noise_gain` is the factor applied to the
/// (tiled) noise; `peak_rescale` is the whole-mix factor applied when the
/// sum left [-1, 1], or `None` when no rescale was needed.
#[derive(Debug, Clone)]
pub struct MixOutput {
    pub clip: AudioClip,
    pub noise_gain: f64,
    pub peak_rescale: Option<f64>,
}

/// Adds `noise` to `signal` scaled so that 10 log10(P_signal / P_noise)
/// equals `snr_db`, where P is mean squared amplitude over the full clip.
/// Noise shorter than the signal is looped; longer noise is truncated.
pub fn mix_at_snr(signal: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<MixOutput, AudioError> {
    if signal.sample_rate != noise.sample_rate {
        return Err(AudioError::SampleRateMismatch(
            signal.sample_rate,
            noise.sample_rate,
        ));
    }
    if noise.samples.is_empty() {
        return Err(AudioError::SilentInput);
    }
    let tiled: Vec<f64> = noise
        .samples
        .iter()
        .cycle()
        .take(signal.samples.len())
        .copied()
        .collect();
    let p_sig = signal.mean_power();
    let p_noise = if tiled.is_empty() {
        0.0
    } else {
        tiled.iter().map(|s| s * s).sum::<f64>() / tiled.len() as f64
    };
    if p_sig == 0.0 || p_noise == 0.0 {
        return Err(AudioError::SilentInput);
    }
    let gain = (p_sig / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut samples: Vec<f64> = signal
        .samples
        .iter()
        .zip(&tiled)
        .map(|(s, n)| s + gain * n)
        .collect();
    let peak = samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let peak_rescale = if peak > 1.0 {
        let f = 1.0 / peak;
        for s in &mut samples {
            *s *= f;
        }
        Some(f)
    } else {
        None
    };
    Ok(MixOutput {
        clip: AudioClip {
            samples,
            sample_rate: signal.sample_rate,
        },
        noise_gain: gain,
        peak_rescale,
    })
}

/// Noise floor used by the synthesizer and the sweep harness.
#[derive(Debug, Clone)]
pub enum NoiseKind {
    White,
    Pink,
    /// Pink noise under a slow amplitude modulation; stands in for
    /// recorded environmental texture.
    Texture,
    /// Caller-provided recording, tiled or truncated to length.
    Clip(AudioClip),
}

/// Generates `duration_s` seconds of unit-RMS noise of the given kind.
pub fn noise_clip(kind: &NoiseKind, duration_s: f64, sample_rate: u32, seed: u64) -> AudioClip {
    let n = (duration_s * sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = match kind {
        NoiseKind::White => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        NoiseKind::Pink => pink_noise(n, &mut rng),
        NoiseKind::Texture => {
            let mut s = pink_noise(n, &mut rng);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let rate = rng.gen_range(0.25..0.7);
            for (i, v) in s.iter_mut().enumerate() {
                let t = i as f64 / sample_rate as f64;
                *v *= 1.0 + 0.5 * (std::f64::consts::TAU * rate * t + phase).sin();
            }
            s
        }
        NoiseKind::Clip(c) => c.samples.iter().cycle().take(n).copied().collect(),
    };
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        for s in &mut samples {
            *s /= rms;
        }
    }
    AudioClip {
        samples,
        sample_rate,
    }
}

/// Paul Kellet's pink noise filter over uniform white input.
fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut b = [0.0_f64; 7];
    (0..n)
        .map(|_| {
            let white: f64 = rng.gen_range(-1.0..1.0);
            b[0] = 0.99886 * b[0] + white * 0.0555179;
            b[1] = 0.99332 * b[1] + white * 0.0750759;
            b[2] = 0.96900 * b[2] + white * 0.1538520;
            b[3] = 0.86650 * b[3] + white * 0.3104856;
            b[4] = 0.55000 * b[4] + white * 0.5329522;
            b[5] = -0.7616 * b[5] - white * 0.0168980;
            let out = b.iter().take(6).sum::<f64>() + b[6] + white * 0.5362;
            b[6] = white * 0.115926;
            out * 0.11
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    LinearChirp,
    ToneBurst,
    HarmonicStack,
}

/// Recipe for a deterministic synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub clip_count: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub event_count: usize,
    pub event_kind: EventKind,
    pub freq_range_hz: (f64, f64),
    pub event_duration_range_ms: (f64, f64),
    pub amplitude_range: (f64, f64),
    pub noise_kind: NoiseKind,
    /// RMS of the noise floor baked into each clip.
    pub noise_rms: f64,
    /// Size of the corpus-wide bank of event prototypes. Real species
    /// reuse a stereotyped set of syllables across recordings, so every
    /// clip draws its events from this shared bank, cycling through it in
    /// shuffled passes the way a songbird rotates its repertoire; 0 draws
    /// each event's parameters fresh instead.
    pub syllable_types: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            clip_count: 1,
            duration_s: 10.0,
            sample_rate: 44100,
            event_count: 8,
            event_kind: EventKind::LinearChirp,
            freq_range_hz: (2000.0, 8000.0),
            event_duration_range_ms: (200.0, 500.0),
            amplitude_range: (0.35, 0.6),
            noise_kind: NoiseKind::White,
            noise_rms: 1e-3,
            syllable_types: 0,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// Minimum silence kept between consecutive events, seconds.
const EVENT_GUARD_S: f64 = 0.05;

/// One reusable event prototype: its spectral components and duration.
struct Syllable {
    parts: Vec<(f64, f64, f64)>,
    dur_s: f64,
}

/// Generates `clip_count` clips of noise plus non-overlapping events, with
/// exact event intervals as ground truth. Identical spec (including seed)
/// reproduces identical output bit for bit.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Vec<(AudioClip, GroundTruth)>, AudioError> {
    validate_spec(spec)?;
    let bank = syllable_bank(spec);
    (0..spec.clip_count)
        .map(|idx| synth_clip(spec, idx, bank.as_deref()))
        .collect()
}

/// The shared prototype bank, drawn from a stream independent of any
/// clip's so adding clips never changes the bank.
fn syllable_bank(spec: &SynthSpec) -> Option<Vec<Syllable>> {
    if spec.syllable_types == 0 {
        return None;
    }
    let seed = spec.seed.wrapping_mul(0xA24BAED4963EE407).wrapping_add(17);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dlo, dhi) = spec.event_duration_range_ms;
    Some(
        (0..spec.syllable_types)
            .map(|_| {
                let dur_s = rng.gen_range(dlo..=dhi) / 1000.0;
                Syllable {
                    parts: draw_parts(spec, &mut rng, dur_s),
                    dur_s,
                }
            })
            .collect(),
    )
}

fn validate_spec(spec: &SynthSpec) -> Result<(), AudioError> {
    let nyquist = spec.sample_rate as f64 / 2.0;
    if spec.duration_s <= 0.0 || spec.sample_rate == 0 {
        return Err(AudioError::InvalidSpec("empty clip".into()));
    }
    if !(0.0 < spec.freq_range_hz.0 && spec.freq_range_hz.0 <= spec.freq_range_hz.1) {
        return Err(AudioError::InvalidSpec("bad frequency range".into()));
    }
    if spec.freq_range_hz.1 >= nyquist {
        return Err(AudioError::InvalidSpec(format!(
            "frequency range exceeds Nyquist ({nyquist} Hz)"
        )));
    }
    let (dlo, dhi) = spec.event_duration_range_ms;
    if !(0.0 < dlo && dlo <= dhi) {
        return Err(AudioError::InvalidSpec("bad event duration range".into()));
    }
    let (alo, ahi) = spec.amplitude_range;
    if !(0.0 < alo && alo <= ahi && ahi <= 1.0) {
        return Err(AudioError::InvalidSpec("bad amplitude range".into()));
    }
    if spec.noise_rms < 0.0 {
        return Err(AudioError::InvalidSpec("negative noise rms".into()));
    }
    let worst = spec.event_count as f64 * (dhi / 1000.0 + EVENT_GUARD_S);
    if worst > 0.8 * spec.duration_s {
        return Err(AudioError::InvalidSpec(format!(
            "{} events of up to {dhi} ms cannot fit in {} s",
            spec.event_count, spec.duration_s
        )));
    }
    Ok(())
}

fn synth_clip(
    spec: &SynthSpec,
    idx: usize,
    bank: Option<&[Syllable]>,
) -> Result<(AudioClip, GroundTruth), AudioError> {
    let seed = spec
        .seed
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(idx as u64 + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (spec.duration_s * spec.sample_rate as f64).round() as usize;

    let placed = place_events(spec, &mut rng, bank)?;
    let mut samples = vec![0.0_f64; n];
    for &(onset, offset, type_idx) in &placed {
        let parts = type_idx.map(|t| bank.expect("typed event implies a bank")[t].parts.clone());
        render_event(spec, &mut rng, onset, offset, parts, &mut samples);
    }
    let intervals: Vec<(f64, f64)> = placed.iter().map(|&(a, b, _)| (a, b)).collect();

    if spec.noise_rms > 0.0 {
        let bed = noise_clip(
            &spec.noise_kind,
            spec.duration_s,
            spec.sample_rate,
            rng.gen(),
        );
        for (s, b) in samples.iter_mut().zip(&bed.samples) {
            *s += spec.noise_rms * b;
        }
    }

    let gt = GroundTruth::from_intervals(intervals).expect("placed events are sorted and disjoint");
    Ok((
        AudioClip {
            samples,
            sample_rate: spec.sample_rate,
        },
        gt,
    ))
}

fn place_events(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    bank: Option<&[Syllable]>,
) -> Result<Vec<(f64, f64, Option<usize>)>, AudioError> {
    let (dlo, dhi) = spec.event_duration_range_ms;
    'layout: for _attempt in 0..200 {
        // A clip cycles through the bank in shuffled passes the way a
        // songbird rotates its repertoire, so every prototype recurs at a
        // similar rate instead of some never appearing in a small corpus.
        let type_order: Option<Vec<usize>> = bank.map(|bank| {
            let t = bank.len();
            let mut seq: Vec<usize> = Vec::with_capacity(spec.event_count + t);
            while seq.len() < spec.event_count {
                let mut cycle: Vec<usize> = (0..t).collect();
                for i in (1..t).rev() {
                    let j = rng.gen_range(0..=i);
                    cycle.swap(i, j);
                }
                seq.extend(cycle);
            }
            seq.truncate(spec.event_count);
            seq
        });
        let mut placed: Vec<(f64, f64, Option<usize>)> = Vec::with_capacity(spec.event_count);
        for ev in 0..spec.event_count {
            let (dur, type_idx) = match (bank, &type_order) {
                (Some(bank), Some(order)) => (bank[order[ev]].dur_s, Some(order[ev])),
                _ => (rng.gen_range(dlo..=dhi) / 1000.0, None),
            };
            let mut ok = false;
            for _try in 0..1000 {
                let onset = rng.gen_range(0.0..spec.duration_s - dur);
                let offset = onset + dur;
                if placed
                    .iter()
                    .all(|&(o, f, _)| offset + EVENT_GUARD_S <= o || onset >= f + EVENT_GUARD_S)
                {
                    placed.push((onset, offset, type_idx));
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue 'layout;
            }
        }
        placed.sort_by(|a, b| a.0.total_cmp(&b.0));
        return Ok(placed);
    }
    Err(AudioError::InvalidSpec(
        "could not place events without overlap".into(),
    ))
}

/// Component frequencies for one event: (hz at start, hz at end, gain).
fn draw_parts(spec: &SynthSpec, rng: &mut ChaCha8Rng, dur_s: f64) -> Vec<(f64, f64, f64)> {
    let sr = spec.sample_rate as f64;
    let (flo, fhi) = spec.freq_range_hz;
    match spec.event_kind {
        EventKind::LinearChirp => {
            // Narrow FM sweep around a centre drawn across the band, the
            // shape of a tonal syllable. The sweep rate is the same order
            // for every event regardless of its length, and slow enough
            // that the instantaneous frequency drifts well under one
            // analysis bin per frame hop; faster sweeps smear one event
            // across the spectrum and it stops reading as a single voice.
            let rate = (fhi - flo) * rng.gen_range(0.03..0.06);
            let span = (rate * dur_s).min(0.8 * (fhi - flo));
            let center = rng.gen_range((flo + span / 2.0)..=(fhi - span / 2.0));
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            vec![(center - sign * span / 2.0, center + sign * span / 2.0, 1.0)]
        }
        EventKind::ToneBurst => {
            let f = rng.gen_range(flo..=fhi);
            vec![(f, f, 1.0)]
        }
        EventKind::HarmonicStack => {
            let f0 = rng.gen_range(flo..=(flo.max(fhi / 3.0)));
            (1..=3)
                .map(|h| {
                    let f = f0 * h as f64;
                    (f, f, 0.5_f64.powi(h as i32 - 1))
                })
                .filter(|&(f, _, _)| f < sr / 2.0)
                .collect()
        }
    }
}

fn render_event(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    onset: f64,
    offset: f64,
    parts: Option<Vec<(f64, f64, f64)>>,
    samples: &mut [f64],
) {
    let sr = spec.sample_rate as f64;
    let amp = rng.gen_range(spec.amplitude_range.0..=spec.amplitude_range.1);
    let start = (onset * sr).round() as usize;
    let end = ((offset * sr).round() as usize).min(samples.len());
    let len = end.saturating_sub(start);
    if len == 0 {
        return;
    }

    let parts = parts.unwrap_or_else(|| draw_parts(spec, rng, offset - onset));
    let gain_norm: f64 = parts.iter().map(|p| p.2).sum();

    // 5 ms raised-cosine fades against clicks, at most half the event.
    // Longer proportional fades would leave the labeled interval ramping
    // to silence at both ends, energy no segmenter can recover.
    let fade = ((0.005 * sr) as usize).min(len / 2);
    let mut phases = vec![0.0_f64; parts.len()];
    for i in 0..len {
        let frac = i as f64 / len as f64;
        let mut v = 0.0;
        for (p, &(f0, f1, g)) in parts.iter().enumerate() {
            let f = f0 + (f1 - f0) * frac;
            phases[p] += std::f64::consts::TAU * f / sr;
            v += g * phases[p].sin();
        }
        v *= amp / gain_norm;
        let env = if i < fade {
            0.5 * (1.0 - (std::f64::consts::PI * i as f64 / fade as f64).cos())
        } else if i + fade >= len {
            let j = len - 1 - i;
            0.5 * (1.0 - (std::f64::consts::PI * j as f64 / fade as f64).cos())
        } else {
            1.0
        };
        samples[start + i] += v * env;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tone(n: usize, sr: u32, freq: f64, amp: f64) -> AudioClip {
        let samples = (0..n)
            .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioClip {
            samples,
            sample_rate: sr,
        }
    }

    #[test]
    fn wav_round_trip_within_quantization_step() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let clip = tone(4410, 44100, 1234.0, 0.8);
        write_wav(&clip, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 44100);
        assert_eq!(back.samples.len(), clip.samples.len());
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn pcm_scale_is_exact_at_half() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("half.wav");
        write_wav(
            &AudioClip {
                samples: vec![0.5],
                sample_rate: 8000,
            },
            &path,
        )
        .unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples[0], 0.5);
    }

    #[test]
    fn full_scale_saturates_not_wraps() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("full.wav");
        write_wav(
            &AudioClip {
                samples: vec![1.0, -1.0, 2.0],
                sample_rate: 8000,
            },
            &path,
        )
        .unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples[0], 32767.0 / 32768.0);
        assert_eq!(back.samples[1], -1.0);
        assert_eq!(back.samples[2], 32767.0 / 32768.0);
    }

    #[test]
    fn empty_clip_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        write_wav(
            &AudioClip {
                samples: vec![],
                sample_rate: 8000,
            },
            &path,
        )
        .unwrap();
        let back = read_wav(&path).unwrap();
        assert!(back.samples.is_empty());
    }

    #[test]
    fn stereo_is_rejected_as_unsupported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(0i16).unwrap();
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        match read_wav(&path) {
            Err(AudioError::UnsupportedFormat(_)) => {}
            other => panic!("expected UnsupportedFormat, got {other:?}"),
        }
    }

    #[test]
    fn garbage_is_rejected_as_corrupt() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("garbage.wav");
        std::fs::write(&path, b"RIFFxxxxNOTAWAVE").unwrap();
        match read_wav(&path) {
            Err(AudioError::CorruptHeader(_)) | Err(AudioError::IoFailure(_)) => {}
            other => panic!("expected corrupt/io error, got {other:?}"),
        }
    }

    #[test]
    fn equal_power_at_zero_db_gives_unit_gain() {
        let sig = tone(44100, 44100, 440.0, 0.5);
        let noise = tone(44100, 44100, 3000.0, 0.5);
        let out = mix_at_snr(&sig, &noise, 0.0).unwrap();
        assert!(
            (out.noise_gain - 1.0).abs() < 1e-9,
            "gain {}",
            out.noise_gain
        );
    }

    #[test]
    fn measured_output_snr_matches_target() {
        let sig = tone(44100, 44100, 440.0, 0.5);
        let noise = noise_clip(&NoiseKind::White, 0.3, 44100, 7);
        for &target in &[-10.0, 0.0, 5.0, 20.0, 37.5] {
            let out = mix_at_snr(&sig, &noise, target).unwrap();
            let tiled: Vec<f64> = noise
                .samples
                .iter()
                .cycle()
                .take(sig.samples.len())
                .map(|&v| v * out.noise_gain)
                .collect();
            let p_n = tiled.iter().map(|s| s * s).sum::<f64>() / tiled.len() as f64;
            let measured = 10.0 * (sig.mean_power() / p_n).log10();
            assert!(
                (measured - target).abs() < 1e-9,
                "target {target}, measured {measured}"
            );
        }
    }

    #[test]
    fn snr_ten_db_down_means_sqrt_tenth_gain() {
        let sig = tone(8000, 8000, 440.0, 0.5);
        let noise = tone(8000, 8000, 1000.0, 0.5);
        let out = mix_at_snr(&sig, &noise, 10.0).unwrap();
        assert!((out.noise_gain - 10f64.powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn hot_mix_is_rescaled_to_unit_peak() {
        let sig = tone(8000, 8000, 440.0, 0.9);
        let noise = tone(8000, 8000, 970.0, 0.9);
        let out = mix_at_snr(&sig, &noise, 0.0).unwrap();
        let peak = out
            .clip
            .samples
            .iter()
            .fold(0.0_f64, |m, s| m.max(s.abs()));
        assert!(out.peak_rescale.is_some());
        assert!(peak <= 1.0 + 1e-12, "peak {peak}");
    }

    #[test]
    fn silent_signal_is_an_error() {
        let sig = AudioClip {
            samples: vec![0.0; 100],
            sample_rate: 8000,
        };
        let noise = tone(100, 8000, 440.0, 0.5);
        assert!(matches!(
            mix_at_snr(&sig, &noise, 0.0),
            Err(AudioError::SilentInput)
        ));
    }

    #[test]
    fn rate_mismatch_is_an_error() {
        let sig = tone(100, 8000, 440.0, 0.5);
        let noise = tone(100, 16000, 440.0, 0.5);
        assert!(matches!(
            mix_at_snr(&sig, &noise, 0.0),
            Err(AudioError::SampleRateMismatch(8000, 16000))
        ));
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        let spec = SynthSpec {
            clip_count: 2,
            duration_s: 3.0,
            event_count: 3,
            ..Default::default()
        };
        let a = synth_corpus(&spec).unwrap();
        let b = synth_corpus(&spec).unwrap();
        for ((ca, ga), (cb, gb)) in a.iter().zip(&b) {
            assert_eq!(ca.samples, cb.samples);
            assert_eq!(ga.intervals(), gb.intervals());
        }
        let other = synth_corpus(&SynthSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a[0].0.samples, other[0].0.samples);
    }

    #[test]
    fn syllable_bank_limits_distinct_event_durations() {
        let spec = SynthSpec {
            clip_count: 4,
            duration_s: 5.0,
            event_count: 6,
            syllable_types: 3,
            ..Default::default()
        };
        let mut durations: Vec<f64> = Vec::new();
        for (_, gt) in synth_corpus(&spec).unwrap() {
            for &(on, off) in gt.intervals() {
                durations.push(off - on);
            }
        }
        durations.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut distinct = 1;
        for w in durations.windows(2) {
            if (w[1] - w[0]).abs() > 1e-9 {
                distinct += 1;
            }
        }
        assert!(
            distinct <= 3,
            "24 events over 4 clips reused {distinct} durations, bank holds 3"
        );
    }

    #[test]
    fn growing_the_corpus_keeps_the_same_bank() {
        let small = SynthSpec {
            clip_count: 2,
            duration_s: 4.0,
            event_count: 4,
            syllable_types: 5,
            ..Default::default()
        };
        let large = SynthSpec {
            clip_count: 6,
            ..small.clone()
        };
        let a = synth_corpus(&small).unwrap();
        let b = synth_corpus(&large).unwrap();
        for ((ca, ga), (cb, gb)) in a.iter().zip(&b) {
            assert_eq!(ca.samples, cb.samples);
            assert_eq!(ga.intervals(), gb.intervals());
        }
    }

    #[test]
    fn events_stay_inside_clip_and_apart() {
        let spec = SynthSpec {
            clip_count: 4,
            duration_s: 5.0,
            event_count: 6,
            ..Default::default()
        };
        for (clip, gt) in synth_corpus(&spec).unwrap() {
            let iv = gt.intervals();
            assert_eq!(iv.len(), 6);
            for w in iv.windows(2) {
                assert!(w[1].0 - w[0].1 >= EVENT_GUARD_S - 1e-12);
            }
            for &(on, off) in iv {
                assert!(on >= 0.0 && off <= clip.duration_s() + 1e-9 && off > on);
            }
        }
    }

    #[test]
    fn zero_events_gives_pure_noise_and_empty_truth() {
        let spec = SynthSpec {
            event_count: 0,
            duration_s: 1.0,
            noise_rms: 0.05,
            ..Default::default()
        };
        let corpus = synth_corpus(&spec).unwrap();
        let (clip, gt) = &corpus[0];
        assert!(gt.intervals().is_empty());
        assert!(clip.mean_power() > 0.0);
        assert!(clip.samples.iter().all(|s| s.abs() < 0.5));
    }

    #[test]
    fn impossible_layout_is_rejected() {
        let spec = SynthSpec {
            duration_s: 1.0,
            event_count: 10,
            event_duration_range_ms: (200.0, 200.0),
            ..Default::default()
        };
        assert!(matches!(
            synth_corpus(&spec),
            Err(AudioError::InvalidSpec(_))
        ));
    }

    #[test]
    fn supersonic_events_are_rejected() {
        let spec = SynthSpec {
            freq_range_hz: (2000.0, 30000.0),
            ..Default::default()
        };
        assert!(matches!(
            synth_corpus(&spec),
            Err(AudioError::InvalidSpec(_))
        ));
    }

    #[test]
    fn noise_kinds_have_unit_rms() {
        for kind in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Texture] {
            let c = noise_clip(&kind, 1.0, 44100, 3);
            let rms = c.mean_power().sqrt();
            assert!((rms - 1.0).abs() < 1e-9, "{kind:?} rms {rms}");
        }
    }
}
