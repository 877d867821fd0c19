//! 16-bit PCM WAV decoding and encoding.
//!
//! Only RIFF/WAVE with a PCM `fmt ` chunk, 16 bits per sample and one or two
//! channels is accepted. Stereo is downmixed by averaging each frame.
//! Samples are not resampled; the rate travels with the clip.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AudioError {
    #[error("malformed WAV container: {0}")]
    MalformedContainer(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid clip: {0}")]
    InvalidClip(String),
}

/// Mono clip with samples in `[-1.0, 1.0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        if let Some(bad) = samples.iter().find(|s| !(-1.0..1.0).contains(*s)) {
            return Err(AudioError::InvalidClip(format!("sample {bad} outside [-1, 1)")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

const PCM: u16 = 1;

struct Format {
    channels: u16,
    sample_rate: u32,
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn read_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let malformed = |m: &str| AudioError::MalformedContainer(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE header"));
    }

    let mut format = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| malformed("chunk extends past end of file"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(malformed("fmt chunk too short"));
                }
                let audio_format = le_u16(&body[0..2]);
                let channels = le_u16(&body[2..4]);
                let sample_rate = le_u32(&body[4..8]);
                let bits = le_u16(&body[14..16]);
                if audio_format != PCM {
                    return Err(AudioError::UnsupportedFormat(format!(
                        "audio format {audio_format} is not PCM"
                    )));
                }
                if bits != 16 {
                    return Err(AudioError::UnsupportedFormat(format!("{bits} bits per sample")));
                }
                if channels == 0 || channels > 2 {
                    return Err(AudioError::UnsupportedFormat(format!("{channels} channels")));
                }
                if sample_rate == 0 {
                    return Err(malformed("zero sample rate"));
                }
                format = Some(Format {
                    channels,
                    sample_rate,
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let format = format.ok_or_else(|| malformed("missing fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("missing data chunk"))?;
    let frame_bytes = 2 * format.channels as usize;
    let samples: Vec<f64> = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f64 = frame
                .chunks_exact(2)
                .map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0)
                .sum();
            sum / format.channels as f64
        })
        .collect();
    if samples.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    AudioClip::new(samples, format.sample_rate)
}

/// Mono 16-bit PCM with the canonical 44-byte header.
pub fn write_wav(clip: &AudioClip) -> Result<Vec<u8>, AudioError> {
    // Re-check invariants for clips built by struct update elsewhere in the crate.
    let clip = AudioClip::new(clip.samples.clone(), clip.sample_rate)?;
    let data_len = 2 * clip.samples.len() as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent encoder: hand-assembled header with explicit byte layout.
    fn stereo_wav(frames: &[(i16, i16)], rate: u32) -> Vec<u8> {
        let data: Vec<u8> = frames
            .iter()
            .flat_map(|(l, r)| l.to_le_bytes().into_iter().chain(r.to_le_bytes()))
            .collect();
        let mut v = b"RIFF".to_vec();
        v.extend((36 + data.len() as u32).to_le_bytes());
        v.extend(b"WAVEfmt ");
        v.extend(16u32.to_le_bytes());
        v.extend(1u16.to_le_bytes());
        v.extend(2u16.to_le_bytes());
        v.extend(rate.to_le_bytes());
        v.extend((rate * 4).to_le_bytes());
        v.extend(4u16.to_le_bytes());
        v.extend(16u16.to_le_bytes());
        v.extend(b"data");
        v.extend((data.len() as u32).to_le_bytes());
        v.extend(data);
        v
    }

    #[test]
    fn silence() {
        let clip = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
        let back = read_wav(&write_wav(&clip).unwrap()).unwrap();
        assert_eq!(back.samples().len(), 16000);
        assert!(back.samples().iter().all(|&s| s == 0.0));
        assert_eq!(back.sample_rate(), 16000);
    }

    #[test]
    fn sine_roundtrip_within_quantization() {
        let rate = 16000;
        let samples: Vec<f64> = (0..rate)
            .map(|i| 0.8 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / rate as f64).sin())
            .collect();
        let clip = AudioClip::new(samples.clone(), rate).unwrap();
        let back = read_wav(&write_wav(&clip).unwrap()).unwrap();
        for (a, b) in samples.iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn stereo_downmix_cancels() {
        let bytes = stereo_wav(&[(16384, -16384); 100], 8000);
        let clip = read_wav(&bytes).unwrap();
        assert_eq!(clip.samples().len(), 100);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
        assert_eq!(clip.sample_rate(), 8000);
    }

    #[test]
    fn one_sample_file_is_46_bytes() {
        let clip = AudioClip::new(vec![0.0], 16000).unwrap();
        let bytes = write_wav(&clip).unwrap();
        assert_eq!(bytes.len(), 46);
        assert_eq!(&bytes[40..44], &2u32.to_le_bytes());
    }

    #[test]
    fn empty_clip_rejected() {
        assert_eq!(AudioClip::new(vec![], 16000), Err(AudioError::EmptyAudio));
        assert!(AudioClip::new(vec![1.0], 16000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn container_errors() {
        assert!(matches!(read_wav(b"not a wav"), Err(AudioError::MalformedContainer(_))));
        let mut truncated = stereo_wav(&[(1, 1); 10], 8000);
        truncated.truncate(50);
        assert!(matches!(read_wav(&truncated), Err(AudioError::MalformedContainer(_))));

        let empty = stereo_wav(&[], 8000);
        assert_eq!(read_wav(&empty), Err(AudioError::EmptyAudio));

        let mut float = stereo_wav(&[(1, 1)], 8000);
        float[20] = 3; // IEEE float
        assert!(matches!(read_wav(&float), Err(AudioError::UnsupportedFormat(_))));

        let mut bits24 = stereo_wav(&[(1, 1)], 8000);
        bits24[34] = 24;
        assert!(matches!(read_wav(&bits24), Err(AudioError::UnsupportedFormat(_))));

        let mut six = stereo_wav(&[(1, 1)], 8000);
        six[22] = 6;
        assert!(matches!(read_wav(&six), Err(AudioError::UnsupportedFormat(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let base = stereo_wav(&[(100, 300)], 8000);
        let mut with_list = base[..36].to_vec();
        with_list.extend(b"LIST");
        with_list.extend(3u32.to_le_bytes());
        with_list.extend([1, 2, 3, 0]); // odd size plus pad byte
        with_list.extend(&base[36..]);
        let clip = read_wav(&with_list).unwrap();
        assert_eq!(clip.samples(), &[200.0 / 32768.0]);
    }

    proptest! {
        #[test]
        fn write_read_identity(samples in prop::collection::vec(-1.0f64..0.99996, 1..500), rate in 1u32..96000) {
            let clip = AudioClip::new(samples, rate).unwrap();
            let bytes = write_wav(&clip).unwrap();
            let back = read_wav(&bytes).unwrap();
            prop_assert_eq!(back.sample_rate(), rate);
            for (a, b) in clip.samples().iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
            // deterministic
            prop_assert_eq!(read_wav(&bytes).unwrap(), back);
        }
    }
}
