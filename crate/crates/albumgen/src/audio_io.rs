//! RIFF/WAVE PCM codec and the conversions between 16-bit integer PCM and
//! real amplitudes. Output is always 16-bit mono; input may be multichannel
//! and is downmixed by the per-frame arithmetic mean.

use std::fs;
use std::io::Write;
use std::path::Path;

pub const PCM_FULL_SCALE: f64 = 32767.0;

/// Mono audio: amplitudes in [-1, 1] at a positive sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioIoError> {
        if sample_rate == 0 {
            return Err(AudioIoError::InvalidSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !(-1.0..=1.0).contains(s)) {
            return Err(AudioIoError::SampleOutOfRange { index: i, value: samples[i] });
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AudioIoError {
    #[error("cannot open {path}: {source}")]
    MissingFile {
        path: String,
        source: std::io::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a RIFF/WAVE file: {reason}")]
    MalformedRiff { reason: String },
    #[error("unsupported WAV format code {code} (only PCM code 1 is supported)")]
    UnsupportedFormatCode { code: u16 },
    #[error("unsupported bit depth {bits} (only 16-bit is supported)")]
    UnsupportedBitDepth { bits: u16 },
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("sample {index} is {value}, outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
}

/// v/32767 clamped to [-1, 1], so -32768 also maps to exactly -1.
pub fn pcm16_to_float(v: i16) -> f64 {
    (f64::from(v) / PCM_FULL_SCALE).clamp(-1.0, 1.0)
}

/// round(clamp(x) * 32767), half away from zero.
pub fn float_to_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * PCM_FULL_SCALE).round() as i16
}

fn read_u16(data: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([data[at], data[at + 1]])
}

fn read_u32(data: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]])
}

struct FmtChunk {
    format_code: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

/// Decode a 16-bit PCM RIFF/WAVE file into a mono clip. Multichannel input
/// is downmixed by the arithmetic mean per frame; unknown chunks are skipped.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioIoError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|source| AudioIoError::MissingFile {
        path: path.display().to_string(),
        source,
    })?;
    decode_wav(&data)
}

pub fn decode_wav(data: &[u8]) -> Result<AudioClip, AudioIoError> {
    let malformed = |reason: &str| AudioIoError::MalformedRiff { reason: reason.to_string() };
    if data.len() < 12 {
        return Err(malformed("shorter than a RIFF header"));
    }
    if &data[0..4] != b"RIFF" {
        return Err(malformed("missing RIFF tag"));
    }
    if &data[8..12] != b"WAVE" {
        return Err(malformed("missing WAVE tag"));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut pcm: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= data.len() {
        let id = &data[pos..pos + 4];
        let size = read_u32(data, pos + 4) as usize;
        let body = pos + 8;
        if body + size > data.len() {
            return Err(malformed("chunk extends past end of file"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes"));
                }
                fmt = Some(FmtChunk {
                    format_code: read_u16(data, body),
                    channels: read_u16(data, body + 2),
                    sample_rate: read_u32(data, body + 4),
                    bits_per_sample: read_u16(data, body + 14),
                });
            }
            b"data" => {
                pcm = Some(&data[body..body + size]);
            }
            _ => {} // metadata chunk, skip
        }
        // chunks are word-aligned; odd sizes carry a pad byte
        pos = body + size + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    let pcm = pcm.ok_or_else(|| malformed("no data chunk"))?;
    if fmt.format_code != 1 {
        return Err(AudioIoError::UnsupportedFormatCode { code: fmt.format_code });
    }
    if fmt.bits_per_sample != 16 {
        return Err(AudioIoError::UnsupportedBitDepth { bits: fmt.bits_per_sample });
    }
    if fmt.channels == 0 {
        return Err(malformed("zero channels"));
    }
    if fmt.sample_rate == 0 {
        return Err(AudioIoError::InvalidSampleRate);
    }

    let channels = fmt.channels as usize;
    let frame_bytes = channels * 2;
    let n_frames = pcm.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0;
        for c in 0..channels {
            let at = f * frame_bytes + c * 2;
            acc += f64::from(i16::from_le_bytes([pcm[at], pcm[at + 1]]));
        }
        let mean = acc / channels as f64;
        samples.push((mean / PCM_FULL_SCALE).clamp(-1.0, 1.0));
    }
    AudioClip::new(samples, fmt.sample_rate)
}

/// Encode a clip as 16-bit mono little-endian PCM.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_size = (clip.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + clip.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in clip.samples() {
        out.extend_from_slice(&float_to_pcm16(s).to_le_bytes());
    }
    out
}

pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioIoError> {
    let path = path.as_ref();
    let bytes = encode_wav(clip);
    let mut file = fs::File::create(path).map_err(|source| AudioIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| AudioIoError::Io {
        path: path.display().to_string(),
        source,
    })
}
