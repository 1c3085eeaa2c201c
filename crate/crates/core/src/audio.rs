//! PCM audio: WAV container I/O, speed and noise perturbation, an
//! energy-threshold voice activity detector and fragment splicing.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::seed;

const PCM_SCALE: f64 = 32768.0;

#[derive(Debug, Error, PartialEq)]
pub enum AudioError {
    #[error("not a RIFF/WAVE container")]
    NotRiff,
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated WAV: {0}")]
    Truncated(String),
    #[error("sample rate must be positive")]
    BadSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("speed factor must be positive and finite, got {0}")]
    BadFactor(f64),
    #[error("signal has zero power; SNR is undefined")]
    SilentSignal,
    #[error("SNR must be finite, got {0}")]
    BadSnr(f64),
    #[error("frame of {0} ms is shorter than one sample")]
    BadFrame(f64),
    #[error("invalid fragment [{start}, {end})")]
    BadFragment { start: f64, end: f64 },
    #[error("fragments must be sorted and non-overlapping (at index {0})")]
    UnsortedFragments(usize),
    #[error("malformed fragment line {line}: {reason}")]
    MalformedFragmentLine { line: usize, reason: String },
}

/// Mono PCM signal with samples nominally in `[-1, 1]`.
///
/// Samples are only clamped when quantized by [`write_wav`]; intermediate
/// operations such as [`add_noise`] may leave the nominal range.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f32>,
    sample_rate_hz: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::BadSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample(i));
        }
        Ok(AudioSignal {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Mean-square amplitude.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    /// Copy of the samples covered by `fragment`.
    pub fn slice(&self, fragment: &Fragment) -> AudioSignal {
        let rate = f64::from(self.sample_rate_hz);
        let lo = ((fragment.start_s * rate).round() as usize).min(self.samples.len());
        let hi = ((fragment.end_s * rate).round() as usize).clamp(lo, self.samples.len());
        AudioSignal {
            samples: self.samples[lo..hi].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

fn mean_square(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|&s| f64::from(s) * f64::from(s))
        .sum::<f64>()
        / samples.len() as f64
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decode a RIFF/WAVE container holding 16-bit mono PCM.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioSignal, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::NotRiff);
    }
    let mut pos = 12;
    let mut sample_rate = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(AudioError::Truncated("fmt chunk".into()));
                }
                let format = read_u16(bytes, body);
                let channels = read_u16(bytes, body + 2);
                let rate = read_u32(bytes, body + 4);
                let bits = read_u16(bytes, body + 14);
                if format != 1 {
                    return Err(AudioError::UnsupportedFormat(format!(
                        "audio format {format} (only PCM=1)"
                    )));
                }
                if channels != 1 {
                    return Err(AudioError::UnsupportedFormat(format!(
                        "{channels} channels (only mono)"
                    )));
                }
                if bits != 16 {
                    return Err(AudioError::UnsupportedFormat(format!(
                        "{bits} bits per sample (only 16)"
                    )));
                }
                if rate == 0 {
                    return Err(AudioError::BadSampleRate);
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let rate = sample_rate.ok_or_else(|| {
                    AudioError::UnsupportedFormat("data chunk before fmt chunk".into())
                })?;
                if body + size > bytes.len() {
                    return Err(AudioError::Truncated(format!(
                        "data chunk declares {size} bytes, {} present",
                        bytes.len() - body
                    )));
                }
                if !size.is_multiple_of(2) {
                    return Err(AudioError::Truncated("odd data chunk length".into()));
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| (f64::from(i16::from_le_bytes([c[0], c[1]])) / PCM_SCALE) as f32)
                    .collect();
                return Ok(AudioSignal {
                    samples,
                    sample_rate_hz: rate,
                });
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    Err(AudioError::Truncated("no data chunk".into()))
}

fn quantize(s: f32) -> i16 {
    let v = (f64::from(s.clamp(-1.0, 1.0)) * PCM_SCALE).round();
    v.clamp(-32768.0, 32767.0) as i16
}

/// Encode as a canonical 44-byte-header 16-bit mono PCM WAV.
pub fn write_wav(signal: &AudioSignal) -> Vec<u8> {
    let data_len = (signal.samples.len() * 2) as u32;
    let rate = signal.sample_rate_hz;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &signal.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

/// Resample by linear interpolation so that playback at the original rate
/// runs `factor` times faster (tempo and pitch both shift).
///
/// Output length is `round(len / factor)`; output sample `i` interpolates the
/// input at position `i * factor`, holding the last sample past the end.
pub fn speed_perturb(signal: &AudioSignal, factor: f64) -> Result<AudioSignal, AudioError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AudioError::BadFactor(factor));
    }
    let input = &signal.samples;
    let out_len = (input.len() as f64 / factor).round() as usize;
    let last = input.len().saturating_sub(1);
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * factor;
            let idx = pos.floor() as usize;
            if idx >= last {
                return input[last];
            }
            let frac = pos - idx as f64;
            let (a, b) = (f64::from(input[idx]), f64::from(input[idx + 1]));
            (a + (b - a) * frac) as f32
        })
        .collect();
    Ok(AudioSignal {
        samples,
        sample_rate_hz: signal.sample_rate_hz,
    })
}

/// Add seeded white Gaussian noise at the requested signal-to-noise ratio.
pub fn add_noise(signal: &AudioSignal, snr_db: f64, seed: u64) -> Result<AudioSignal, AudioError> {
    if !snr_db.is_finite() {
        return Err(AudioError::BadSnr(snr_db));
    }
    let power = signal.power();
    if power <= 0.0 {
        return Err(AudioError::SilentSignal);
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = seed::rng(seed);
    let samples = signal
        .samples
        .iter()
        .map(|&s| {
            let n: f64 = StandardNormal.sample(&mut rng);
            (f64::from(s) + sigma * n) as f32
        })
        .collect();
    Ok(AudioSignal {
        samples,
        sample_rate_hz: signal.sample_rate_hz,
    })
}

/// A time span, in seconds, of a parent signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub start_s: f64,
    pub end_s: f64,
}

impl Fragment {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self, AudioError> {
        if !(start_s.is_finite() && end_s.is_finite() && start_s >= 0.0 && end_s > start_s) {
            return Err(AudioError::BadFragment {
                start: start_s,
                end: end_s,
            });
        }
        Ok(Fragment { start_s, end_s })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}\t{:.3}", self.start_s, self.end_s)
    }
}

/// Energy-threshold VAD.
///
/// The signal is cut into consecutive frames of `frame_ms` (the last frame
/// may be partial). A frame is speech when its mean-square energy exceeds
/// `energy_threshold`. Speech runs separated by fewer than `min_gap_frames`
/// non-speech frames are merged.
pub fn energy_vad(
    signal: &AudioSignal,
    frame_ms: f64,
    energy_threshold: f64,
    min_gap_frames: usize,
) -> Result<Vec<Fragment>, AudioError> {
    let rate = f64::from(signal.sample_rate_hz);
    let frame_len = (frame_ms * rate / 1000.0).round();
    if !(frame_len.is_finite() && frame_len >= 1.0) {
        return Err(AudioError::BadFrame(frame_ms));
    }
    let frame_len = frame_len as usize;
    let speech: Vec<bool> = signal
        .samples
        .chunks(frame_len)
        .map(|frame| mean_square(frame) > energy_threshold)
        .collect();

    // (first frame, one past last frame) of each merged run
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &is_speech) in speech.iter().enumerate() {
        if !is_speech {
            continue;
        }
        match runs.last_mut() {
            Some(run) if run.1 == i || i - run.1 < min_gap_frames => run.1 = i + 1,
            _ => runs.push((i, i + 1)),
        }
    }

    let n = signal.samples.len();
    Ok(runs
        .into_iter()
        .map(|(a, b)| Fragment {
            start_s: (a * frame_len) as f64 / rate,
            end_s: (b * frame_len).min(n) as f64 / rate,
        })
        .collect())
}

/// Greedy left-to-right grouping: a group closes as soon as its summed
/// fragment duration reaches `min_s`. Only the final group may fall short.
pub fn splice_min_duration(fragments: &[Fragment], min_s: f64) -> Vec<Vec<Fragment>> {
    let mut groups = Vec::new();
    let mut current = Vec::new();
    let mut total = 0.0;
    for frag in fragments {
        current.push(*frag);
        total += frag.duration_s();
        if total >= min_s {
            groups.push(std::mem::take(&mut current));
            total = 0.0;
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }
    groups
}

/// Check that fragments are sorted by start and non-overlapping.
pub fn check_fragments(fragments: &[Fragment]) -> Result<(), AudioError> {
    for (i, w) in fragments.windows(2).enumerate() {
        if w[1].start_s < w[0].end_s {
            return Err(AudioError::UnsortedFragments(i + 1));
        }
    }
    Ok(())
}

/// Serialize fragments as `start<TAB>end` lines with millisecond precision.
pub fn format_fragments(fragments: &[Fragment]) -> String {
    fragments.iter().map(|f| format!("{f}\n")).collect()
}

pub fn parse_fragments(text: &str) -> Result<Vec<Fragment>, AudioError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| AudioError::MalformedFragmentLine {
            line: i + 1,
            reason: reason.to_string(),
        };
        let mut fields = line.split('\t');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad("expected start<TAB>end"));
        };
        let start: f64 = a.trim().parse().map_err(|_| bad("start is not a number"))?;
        let end: f64 = b.trim().parse().map_err(|_| bad("end is not a number"))?;
        out.push(Fragment::new(start, end).map_err(|e| bad(&e.to_string()))?);
    }
    check_fragments(&out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_with_data(rate: u32, data: &[i16]) -> Vec<u8> {
        let sig = AudioSignal::new(
            data.iter()
                .map(|&v| (f64::from(v) / PCM_SCALE) as f32)
                .collect(),
            rate,
        )
        .unwrap();
        write_wav(&sig)
    }

    #[test]
    fn parse_scales_by_32768() {
        let bytes = wav_with_data(16000, &[0, 16384, -32768]);
        let sig = parse_wav(&bytes).unwrap();
        assert_eq!(sig.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(sig.sample_rate_hz(), 16000);
    }

    #[test]
    fn rifx_is_rejected() {
        let mut bytes = wav_with_data(16000, &[1, 2]);
        bytes[3] = b'X';
        assert_eq!(parse_wav(&bytes), Err(AudioError::NotRiff));
    }

    #[test]
    fn short_data_chunk_is_truncated() {
        let mut bytes = wav_with_data(16000, &[0; 5]);
        bytes[40..44].copy_from_slice(&100u32.to_le_bytes());
        assert_eq!(bytes.len(), 54);
        assert!(matches!(parse_wav(&bytes), Err(AudioError::Truncated(_))));
    }

    #[test]
    fn non_pcm_and_stereo_are_unsupported() {
        let base = wav_with_data(8000, &[0; 4]);
        let mut float = base.clone();
        float[20..22].copy_from_slice(&3u16.to_le_bytes());
        assert!(matches!(
            parse_wav(&float),
            Err(AudioError::UnsupportedFormat(_))
        ));
        let mut stereo = base.clone();
        stereo[22..24].copy_from_slice(&2u16.to_le_bytes());
        assert!(matches!(
            parse_wav(&stereo),
            Err(AudioError::UnsupportedFormat(_))
        ));
        let mut eight_bit = base;
        eight_bit[34..36].copy_from_slice(&8u16.to_le_bytes());
        assert!(matches!(
            parse_wav(&eight_bit),
            Err(AudioError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn skips_unknown_chunks() {
        let plain = wav_with_data(16000, &[7, -7]);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[36..]);
        let sig = parse_wav(&bytes).unwrap();
        assert_eq!(sig.len(), 2);
    }

    #[test]
    fn write_clamps_out_of_range() {
        let sig = AudioSignal::new(vec![1.5, -3.0], 16000).unwrap();
        let bytes = write_wav(&sig);
        assert_eq!(i16::from_le_bytes([bytes[44], bytes[45]]), i16::MAX);
        assert_eq!(i16::from_le_bytes([bytes[46], bytes[47]]), i16::MIN);
    }

    #[test]
    fn zero_round_trips() {
        let sig = AudioSignal::new(vec![0.0], 16000).unwrap();
        let back = parse_wav(&write_wav(&sig)).unwrap();
        assert_eq!(back, sig);
    }

    #[test]
    fn speed_lengths() {
        let sig = AudioSignal::new(vec![0.1; 16000], 16000).unwrap();
        assert_eq!(speed_perturb(&sig, 0.8).unwrap().len(), 20000);
        assert_eq!(speed_perturb(&sig, 1.2).unwrap().len(), 13333);
        assert_eq!(speed_perturb(&sig, 1.0).unwrap(), sig);
        assert!(matches!(
            speed_perturb(&sig, 0.0),
            Err(AudioError::BadFactor(_))
        ));
        assert!(matches!(
            speed_perturb(&sig, f64::NAN),
            Err(AudioError::BadFactor(_))
        ));
    }

    #[test]
    fn speed_interpolates_linearly() {
        let sig = AudioSignal::new(vec![0.0, 1.0, 0.0], 10).unwrap();
        let slow = speed_perturb(&sig, 0.5).unwrap();
        assert_eq!(slow.samples(), &[0.0, 0.5, 1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn silent_signal_has_no_snr() {
        let sig = AudioSignal::new(vec![0.0; 100], 16000).unwrap();
        assert_eq!(add_noise(&sig, 20.0, 1), Err(AudioError::SilentSignal));
    }

    #[test]
    fn noise_is_seeded() {
        let sig =
            AudioSignal::new((0..1000).map(|i| (i as f32 * 0.01).sin()).collect(), 8000).unwrap();
        assert_eq!(
            add_noise(&sig, 10.0, 5).unwrap(),
            add_noise(&sig, 10.0, 5).unwrap()
        );
        assert_ne!(
            add_noise(&sig, 10.0, 5).unwrap(),
            add_noise(&sig, 10.0, 6).unwrap()
        );
    }

    fn loud_quiet_loud() -> AudioSignal {
        let rate = 16000;
        let mut s = Vec::new();
        for sec in 0..3 {
            for i in 0..rate {
                let t = i as f32 / rate as f32;
                s.push(if sec == 1 {
                    0.0
                } else {
                    0.5 * (2.0 * std::f32::consts::PI * 220.0 * t).sin()
                });
            }
        }
        AudioSignal::new(s, rate as u32).unwrap()
    }

    #[test]
    fn vad_finds_two_bursts() {
        let sig = loud_quiet_loud();
        let frags = energy_vad(&sig, 10.0, 0.01, 1).unwrap();
        assert_eq!(frags.len(), 2);
        assert!((frags[0].start_s - 0.0).abs() < 0.011 && (frags[0].end_s - 1.0).abs() < 0.011);
        assert!((frags[1].start_s - 2.0).abs() < 0.011 && (frags[1].end_s - 3.0).abs() < 0.011);
    }

    #[test]
    fn vad_merges_short_gaps() {
        let sig = loud_quiet_loud();
        let frags = energy_vad(&sig, 10.0, 0.01, 101).unwrap();
        assert_eq!(frags.len(), 1);
        assert!(frags[0].start_s.abs() < 0.011 && (frags[0].end_s - 3.0).abs() < 0.011);
        // a gap of exactly min_gap_frames is not merged
        assert_eq!(energy_vad(&sig, 10.0, 0.01, 100).unwrap().len(), 2);
    }

    #[test]
    fn vad_on_silence_and_bad_frames() {
        let sig = AudioSignal::new(vec![0.0; 1600], 16000).unwrap();
        assert!(energy_vad(&sig, 10.0, 0.0, 1).unwrap().is_empty());
        assert!(matches!(
            energy_vad(&sig, 0.01, 0.0, 1),
            Err(AudioError::BadFrame(_))
        ));
    }

    fn frags(durations: &[f64]) -> Vec<Fragment> {
        let mut t = 0.0;
        durations
            .iter()
            .map(|d| {
                let f = Fragment::new(t, t + d).unwrap();
                t += d + 0.5;
                f
            })
            .collect()
    }

    fn durations(groups: &[Vec<Fragment>]) -> Vec<Vec<f64>> {
        groups
            .iter()
            .map(|g| g.iter().map(|f| f.duration_s()).collect())
            .collect()
    }

    #[test]
    fn splice_examples() {
        let g = splice_min_duration(&frags(&[4.0, 3.0, 5.0, 12.0]), 10.0);
        assert_eq!(durations(&g), vec![vec![4.0, 3.0, 5.0], vec![12.0]]);
        let g = splice_min_duration(&frags(&[4.0, 3.0]), 10.0);
        assert_eq!(durations(&g), vec![vec![4.0, 3.0]]);
        let g = splice_min_duration(&frags(&[11.0, 11.0]), 10.0);
        assert_eq!(durations(&g), vec![vec![11.0], vec![11.0]]);
        assert!(splice_min_duration(&[], 10.0).is_empty());
    }

    #[test]
    fn fragment_text_format() {
        let f = vec![
            Fragment::new(0.0, 1.25).unwrap(),
            Fragment::new(2.0, 3.0004).unwrap(),
        ];
        let text = format_fragments(&f);
        assert_eq!(text, "0.000\t1.250\n2.000\t3.000\n");
        let back = parse_fragments(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert!(parse_fragments("1.0\t0.5\n").is_err());
        assert!(matches!(
            parse_fragments("0\t2\n1\t3\n"),
            Err(AudioError::UnsortedFragments(1))
        ));
    }
}
