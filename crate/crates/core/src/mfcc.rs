//! Mel-frequency cepstral features.
//!
//! Pipeline: pre-emphasis, Hamming-windowed framing, FFT power spectrum,
//! triangular mel filterbank, log, cosine transform to `C` cepstra, then
//! first and second order deltas. Rows are `[m | dm | ddm]`, so the width is
//! `3 C` (36 at the default `C = 12`).

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

/// Width of the feature vectors that get encrypted and compared.
pub const FEATURE_DIM: usize = 36;

/// Filterbank energies are clamped to this before the log.
pub const POWER_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum MfccError {
    #[error("negative frequency {0} Hz")]
    NegativeFrequency(f64),
    #[error("clip has {got} samples, one frame needs {needed}")]
    ClipTooShort { needed: usize, got: usize },
    #[error("invalid filterbank band: {0}")]
    InvalidBand(String),
    #[error("invalid MFCC configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub pre_emphasis: f64,
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub num_filters: usize,
    pub num_ceps: usize,
    pub mel_alpha: f64,
    pub low_freq_hz: f64,
    /// `None` means half the sample rate.
    pub high_freq_hz: Option<f64>,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            pre_emphasis: 0.97,
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            num_filters: 26,
            num_ceps: 12,
            mel_alpha: 2595.0,
            low_freq_hz: 0.0,
            high_freq_hz: None,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), MfccError> {
        let bad = |m: &str| Err(MfccError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return bad("pre_emphasis must be in [0, 1)");
        }
        if !(self.frame_len_ms > 0.0 && self.hop_ms > 0.0) {
            return bad("frame and hop lengths must be positive");
        }
        if self.hop_ms > self.frame_len_ms {
            return bad("hop must not exceed frame length");
        }
        if self.num_filters == 0 || self.num_ceps == 0 || self.num_ceps > self.num_filters {
            return bad("need 0 < num_ceps <= num_filters");
        }
        if !(self.mel_alpha > 0.0) {
            return bad("mel_alpha must be positive");
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        ((self.frame_len_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        ((self.hop_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }

    pub fn nfft(&self, sample_rate: u32) -> usize {
        self.frame_samples(sample_rate).next_power_of_two()
    }

    fn band(&self, sample_rate: u32) -> Result<(f64, f64), MfccError> {
        let nyquist = sample_rate as f64 / 2.0;
        let high = self.high_freq_hz.unwrap_or(nyquist);
        if !(self.low_freq_hz >= 0.0 && self.low_freq_hz < high && high <= nyquist) {
            return Err(MfccError::InvalidBand(format!(
                "need 0 <= low ({}) < high ({high}) <= {nyquist}",
                self.low_freq_hz
            )));
        }
        Ok((self.low_freq_hz, high))
    }
}

pub fn hz_to_mel(f: f64, alpha: f64) -> Result<f64, MfccError> {
    if f < 0.0 {
        return Err(MfccError::NegativeFrequency(f));
    }
    Ok(alpha * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(mel: f64, alpha: f64) -> f64 {
    700.0 * (10f64.powf(mel / alpha) - 1.0)
}

pub fn pre_emphasize(signal: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(signal.len());
    if let Some(&first) = signal.first() {
        out.push(first);
    }
    out.extend(signal.windows(2).map(|w| w[1] - coeff * w[0]));
    out
}

fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Hamming-windowed frames at the configured stride.
pub fn frame_signal(
    signal: &[f64],
    sample_rate: u32,
    config: &MfccConfig,
) -> Result<Vec<Vec<f64>>, MfccError> {
    let frame = config.frame_samples(sample_rate);
    let hop = config.hop_samples(sample_rate);
    if signal.len() < frame {
        return Err(MfccError::ClipTooShort {
            needed: frame,
            got: signal.len(),
        });
    }
    let window = hamming(frame);
    let count = 1 + (signal.len() - frame) / hop;
    Ok((0..count)
        .map(|i| {
            signal[i * hop..i * hop + frame]
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect()
        })
        .collect())
}

/// FFT bin index for each of the `K + 2` mel-spaced band edges.
pub fn filter_edge_bins(
    sample_rate: u32,
    nfft: usize,
    config: &MfccConfig,
) -> Result<Vec<usize>, MfccError> {
    let (low, high) = config.band(sample_rate)?;
    let lo_mel = hz_to_mel(low, config.mel_alpha)?;
    let hi_mel = hz_to_mel(high, config.mel_alpha)?;
    let k = config.num_filters;
    let step = (hi_mel - lo_mel) / (k + 1) as f64;
    Ok((0..k + 2)
        .map(|i| {
            let hz = mel_to_hz(lo_mel + step * i as f64, config.mel_alpha);
            (((nfft + 1) as f64 * hz / sample_rate as f64).floor() as usize).min(nfft / 2)
        })
        .collect())
}

/// `K` triangular filters over `nfft/2 + 1` bins, peak 1 at each center.
pub fn mel_filterbank(
    sample_rate: u32,
    nfft: usize,
    config: &MfccConfig,
) -> Result<Vec<Vec<f64>>, MfccError> {
    config.validate()?;
    if !nfft.is_power_of_two() || nfft < config.frame_samples(sample_rate) {
        return Err(MfccError::InvalidConfig(format!(
            "nfft {nfft} must be a power of two covering one frame"
        )));
    }
    let edges = filter_edge_bins(sample_rate, nfft, config)?;
    let bins = nfft / 2 + 1;
    Ok(edges
        .windows(3)
        .map(|e| {
            let (left, center, right) = (e[0], e[1], e[2]);
            let mut row = vec![0.0; bins];
            for (k, w) in row.iter_mut().enumerate().take(right + 1).skip(left) {
                *w = if k < center {
                    (k - left) as f64 / (center - left) as f64
                } else if k == center {
                    1.0
                } else {
                    (right - k) as f64 / (right - center) as f64
                };
            }
            row
        })
        .collect())
}

/// `c_n = sum_k log(S_k) cos(n (k - 0.5) pi / K)` for `n = 1..=C`.
pub fn cepstral_coeffs(log_energies: &[f64], num_ceps: usize) -> Vec<f64> {
    let k_total = log_energies.len() as f64;
    (1..=num_ceps)
        .map(|n| {
            log_energies
                .iter()
                .enumerate()
                .map(|(k, &e)| e * (n as f64 * (k as f64 + 0.5) * PI / k_total).cos())
                .sum()
        })
        .collect()
}

/// `d[i] = -2 m[i-2] - m[i-1] + m[i+1] + 2 m[i+2]`, out-of-range rows
/// replicated from the nearest edge. Not normalized.
pub fn delta(matrix: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let l = matrix.len() as isize;
    let row = |i: isize| &matrix[i.clamp(0, l - 1) as usize];
    (0..l)
        .map(|i| {
            let (a, b, c, d) = (row(i - 2), row(i - 1), row(i + 1), row(i + 2));
            (0..a.len())
                .map(|j| -2.0 * a[j] - b[j] + c[j] + 2.0 * d[j])
                .collect()
        })
        .collect()
}

/// `l x 3C` feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MfccError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(MfccError::InvalidConfig("feature rows must be non-empty and equal width".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MfccError::InvalidConfig("non-finite feature value".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Debug dump: one line per frame, six decimals, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

/// Column means of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn column_mean(f: &FeatureMatrix) -> FeatureVector {
    let l = f.rows() as f64;
    FeatureVector(
        (0..f.cols())
            .map(|j| (0..f.rows()).map(|i| f.get(i, j)).sum::<f64>() / l)
            .collect(),
    )
}

/// Per-frame natural-log filterbank energies (`l x K`).
pub fn log_filterbank_energies(
    clip: &AudioClip,
    config: &MfccConfig,
) -> Result<Vec<Vec<f64>>, MfccError> {
    config.validate()?;
    let rate = clip.sample_rate();
    let nfft = config.nfft(rate);
    let bank = mel_filterbank(rate, nfft, config)?;
    let emphasized = pre_emphasize(clip.samples(), config.pre_emphasis);
    let frames = frame_signal(&emphasized, rate, config)?;
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    Ok(frames
        .iter()
        .map(|frame| {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (c, &x) in buf.iter_mut().zip(frame) {
                c.re = x;
            }
            fft.process(&mut buf);
            let power: Vec<f64> = buf[..=nfft / 2]
                .iter()
                .map(|c| c.norm_sqr() / nfft as f64)
                .collect();
            bank.iter()
                .map(|filter| {
                    let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                    e.max(POWER_FLOOR).ln()
                })
                .collect()
        })
        .collect())
}

pub fn extract_features(clip: &AudioClip, config: &MfccConfig) -> Result<FeatureMatrix, MfccError> {
    let energies = log_filterbank_energies(clip, config)?;
    let base: Vec<Vec<f64>> = energies
        .iter()
        .map(|e| cepstral_coeffs(e, config.num_ceps))
        .collect();
    let d1 = delta(&base);
    let d2 = delta(&d1);
    let rows: Vec<Vec<f64>> = base
        .into_iter()
        .zip(d1)
        .zip(d2)
        .map(|((m, a), b)| [m, a, b].concat())
        .collect();
    FeatureMatrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, secs: f64, rate: u32) -> AudioClip {
        let n = (secs * rate as f64) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            rate,
        )
        .unwrap()
    }

    #[test]
    fn mel_scale_values() {
        assert_eq!(hz_to_mel(0.0, 2595.0).unwrap(), 0.0);
        let m = hz_to_mel(1000.0, 2595.0).unwrap();
        assert!((m - 999.99).abs() <= 0.01, "{m}");
        assert!((hz_to_mel(700.0, 2595.0).unwrap() - 781.17).abs() < 0.01);
        assert_eq!(hz_to_mel(-1.0, 2595.0), Err(MfccError::NegativeFrequency(-1.0)));
        assert!((mel_to_hz(hz_to_mel(1234.5, 2595.0).unwrap(), 2595.0) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn pre_emphasis_cases() {
        let y = pre_emphasize(&[1.0; 5], 0.97);
        assert_eq!(y[0], 1.0);
        for v in &y[1..] {
            assert!((v - 0.03).abs() < 1e-12);
        }
        let x = [0.1, -0.4, 0.3];
        assert_eq!(pre_emphasize(&x, 0.0), x.to_vec());
        assert_eq!(pre_emphasize(&[0.0; 4], 0.97), vec![0.0; 4]);
    }

    #[test]
    fn frame_counts() {
        let cfg = MfccConfig::default();
        // 25 ms / 10 ms at 16 kHz = 400 / 160 samples
        assert_eq!(frame_signal(&vec![0.1; 400], 16000, &cfg).unwrap().len(), 1);
        assert_eq!(frame_signal(&vec![0.1; 720], 16000, &cfg).unwrap().len(), 3);
        assert_eq!(
            frame_signal(&vec![0.1; 399], 16000, &cfg),
            Err(MfccError::ClipTooShort { needed: 400, got: 399 })
        );
        let f = &frame_signal(&vec![1.0; 400], 16000, &cfg).unwrap()[0];
        assert!((f[0] - 0.08).abs() < 1e-12);
        assert!((f[399] - 0.08).abs() < 1e-12);
    }

    #[test]
    fn filterbank_shape_and_triangles() {
        let cfg = MfccConfig::default();
        let bank = mel_filterbank(16000, 512, &cfg).unwrap();
        assert_eq!(bank.len(), 26);
        let mut centers = vec![];
        for row in &bank {
            assert_eq!(row.len(), 257);
            assert!(row.iter().all(|&w| w >= 0.0));
            let peak = row.iter().cloned().fold(f64::MIN, f64::max);
            let argmax: Vec<_> = (0..row.len()).filter(|&i| row[i] == peak).collect();
            assert_eq!(argmax.len(), 1);
            let c = argmax[0];
            assert!(row[..=c].windows(2).all(|w| w[0] <= w[1]));
            assert!(row[c..].windows(2).all(|w| w[0] >= w[1]));
            centers.push(c);
        }
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        // adjacent filters overlap
        for pair in bank.windows(2) {
            assert!(pair[0].iter().zip(&pair[1]).any(|(a, b)| *a > 0.0 && *b > 0.0));
        }
    }

    #[test]
    fn filterbank_edges_match_independent_computation() {
        // Computed separately: mel(8000) = 2840.0230, step = mel/27,
        // bin = floor(513 * hz / 16000) for each edge.
        let expected = [
            0, 2, 4, 7, 10, 13, 16, 20, 24, 29, 34, 40, 46, 53, 60, 68, 77, 87, 97, 109, 122,
            136, 152, 169, 188, 209, 231, 256,
        ];
        let edges = filter_edge_bins(16000, 512, &MfccConfig::default()).unwrap();
        assert_eq!(edges, expected);
        // filter 1 center
        assert_eq!(edges[1], 2);
    }

    #[test]
    fn invalid_band() {
        let cfg = MfccConfig {
            high_freq_hz: Some(9000.0),
            ..Default::default()
        };
        assert!(matches!(mel_filterbank(16000, 512, &cfg), Err(MfccError::InvalidBand(_))));
        let cfg = MfccConfig {
            low_freq_hz: 5000.0,
            high_freq_hz: Some(4000.0),
            ..Default::default()
        };
        assert!(matches!(mel_filterbank(16000, 512, &cfg), Err(MfccError::InvalidBand(_))));
    }

    #[test]
    fn cepstrum_cases() {
        assert!(cepstral_coeffs(&[3.7; 26], 12).iter().all(|c| c.abs() < 1e-9));
        let c = cepstral_coeffs(&[1.0, 0.0, 0.0, 0.0], 1);
        assert!((c[0] - 0.92388).abs() < 1e-5);
    }

    #[test]
    fn delta_cases() {
        let constant = vec![vec![2.5, -1.0]; 6];
        assert!(delta(&constant).iter().flatten().all(|&v| v == 0.0));
        assert_eq!(delta(&[vec![4.0, 5.0]]), vec![vec![0.0, 0.0]]);
        let ramp: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let d = delta(&ramp);
        for row in &d[2..6] {
            assert_eq!(row[0], 10.0);
        }
        // edge: i = 0 sees rows [0, 0, 1, 2] -> 1 + 4 = 5
        assert_eq!(d[0][0], 5.0);
    }

    #[test]
    fn one_second_shape_and_determinism() {
        let clip = tone(440.0, 1.0, 16000);
        let a = extract_features(&clip, &MfccConfig::default()).unwrap();
        assert_eq!((a.rows(), a.cols()), (98, FEATURE_DIM));
        let b = extract_features(&clip, &MfccConfig::default()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn too_short_clip() {
        let clip = AudioClip::new(vec![0.1; 100], 16000).unwrap();
        assert!(matches!(
            extract_features(&clip, &MfccConfig::default()),
            Err(MfccError::ClipTooShort { .. })
        ));
    }

    #[test]
    fn column_mean_cases() {
        let one = FeatureMatrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        assert_eq!(column_mean(&one).0, vec![1.0, -2.0]);
        let two = FeatureMatrix::from_rows(&[vec![1.0, 4.0], vec![3.0, 8.0]]).unwrap();
        assert_eq!(column_mean(&two).0, vec![2.0, 6.0]);
    }

    #[test]
    fn csv_dump_format() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, -0.25], vec![3.1234567, 0.0]]).unwrap();
        assert_eq!(m.to_csv(), "1.000000,-0.250000\n3.123457,0.000000\n");
    }

    /// Oracle: the filter with the largest weight at the tone's FFT bin.
    fn expected_filter(freq: f64) -> usize {
        let bank = mel_filterbank(16000, 512, &MfccConfig::default()).unwrap();
        let bin = (freq * 512.0 / 16000.0).round() as usize;
        (0..bank.len())
            .max_by(|&a, &b| bank[a][bin].partial_cmp(&bank[b][bin]).unwrap())
            .unwrap()
    }

    #[test]
    fn pure_tone_lands_in_its_band() {
        for freq in [440.0, 880.0, 2000.0] {
            let clip = tone(freq, 1.0, 16000);
            let e = log_filterbank_energies(&clip, &MfccConfig::default()).unwrap();
            let k = e[0].len();
            let means: Vec<f64> = (0..k)
                .map(|j| e.iter().map(|r| r[j]).sum::<f64>() / e.len() as f64)
                .collect();
            let argmax = (0..k)
                .max_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap())
                .unwrap();
            assert_eq!(argmax, expected_filter(freq), "{freq} Hz");
        }
    }

    #[test]
    fn speech_band_features_stay_in_envelope() {
        // harmonic complex plus low-level noise, a rough voiced-speech stand-in
        let rate = 16000;
        let mut state = 12345u64;
        let samples: Vec<f64> = (0..rate)
            .map(|i| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                let noise = ((state >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 0.02;
                let t = i as f64 / rate as f64;
                let v: f64 = (1..8)
                    .map(|h| (0.3 / h as f64) * (2.0 * PI * 150.0 * h as f64 * t).sin())
                    .sum();
                (v + noise).clamp(-0.99, 0.99)
            })
            .collect();
        let clip = AudioClip::new(samples, rate).unwrap();
        let v = column_mean(&extract_features(&clip, &MfccConfig::default()).unwrap());
        assert!(v.0.iter().all(|x| x.abs() <= 64.0), "{v:?}");
    }

    proptest! {
        #[test]
        fn delta_is_linear(a in prop::collection::vec(-10.0f64..10.0, 1..12), k in -3.0f64..3.0) {
            let m: Vec<Vec<f64>> = a.iter().map(|&x| vec![x]).collect();
            let scaled: Vec<Vec<f64>> = a.iter().map(|&x| vec![k * x]).collect();
            let sum: Vec<Vec<f64>> = a.iter().map(|&x| vec![x + x * x]).collect();
            let sq: Vec<Vec<f64>> = a.iter().map(|&x| vec![x * x]).collect();
            let (dm, ds, dsum, dsq) = (delta(&m), delta(&scaled), delta(&sum), delta(&sq));
            for i in 0..a.len() {
                prop_assert!((ds[i][0] - k * dm[i][0]).abs() < 1e-9);
                prop_assert!((dsum[i][0] - dm[i][0] - dsq[i][0]).abs() < 1e-9);
            }
        }

        #[test]
        fn cepstrum_is_linear(a in prop::collection::vec(-20.0f64..20.0, 26), b in prop::collection::vec(-20.0f64..20.0, 26)) {
            let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let (ca, cb, cs) = (cepstral_coeffs(&a, 12), cepstral_coeffs(&b, 12), cepstral_coeffs(&s, 12));
            for n in 0..12 {
                prop_assert!((cs[n] - ca[n] - cb[n]).abs() < 1e-9);
            }
        }

        #[test]
        fn row_count_formula(len in 400usize..4000) {
            let clip = AudioClip::new(vec![0.01; len], 16000).unwrap();
            let f = extract_features(&clip, &MfccConfig::default()).unwrap();
            prop_assert_eq!(f.rows(), 1 + (len - 400) / 160);
            prop_assert_eq!(f.cols(), FEATURE_DIM);
        }
    }
}
