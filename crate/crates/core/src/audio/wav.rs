//! RIFF/WAVE PCM16 mono reader and writer.

use thiserror::Error;

pub const NOMINAL_SAMPLE_RATE: u32 = 16_000;
const PCM_FORMAT: u16 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE file: {0}")]
    Container(&'static str),
    #[error("unsupported {field}: {value} (expected {expected})")]
    Unsupported {
        field: &'static str,
        value: u32,
        expected: &'static str,
    },
    #[error("truncated {chunk} chunk: expected {expected} bytes, found {actual}")]
    Truncated {
        chunk: String,
        expected: usize,
        actual: usize,
    },
    #[error("missing {0} chunk")]
    MissingChunk(&'static str),
    #[error("sample {index} = {value} is not a 16-bit integer value")]
    NotPcm16 { index: usize, value: f32 },
}

/// Audio samples. Freshly parsed files hold raw integer PCM values;
/// [`crate::audio::scale`] maps them into `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedWav {
    pub waveform: Waveform,
    /// Non-fatal issues such as an unexpected sample rate.
    pub warnings: Vec<String>,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Fmt {
    sample_rate: u32,
}

fn parse_fmt(body: &[u8]) -> Result<Fmt, WavError> {
    if body.len() < 16 {
        return Err(WavError::Truncated {
            chunk: "fmt".into(),
            expected: 16,
            actual: body.len(),
        });
    }
    let format = u16_at(body, 0);
    if format != PCM_FORMAT {
        return Err(WavError::Unsupported {
            field: "audio format",
            value: format.into(),
            expected: "1 (PCM)",
        });
    }
    let channels = u16_at(body, 2);
    if channels != 1 {
        return Err(WavError::Unsupported {
            field: "channel count",
            value: channels.into(),
            expected: "1 (mono)",
        });
    }
    let bits = u16_at(body, 14);
    if bits != 16 {
        return Err(WavError::Unsupported {
            field: "bits per sample",
            value: bits.into(),
            expected: "16",
        });
    }
    Ok(Fmt {
        sample_rate: u32_at(body, 4),
    })
}

/// Decodes a PCM16 mono WAV file. Samples are returned unscaled.
/// Unknown chunks are skipped by their declared size.
pub fn parse_wav(bytes: &[u8], source_id: &str) -> Result<ParsedWav, WavError> {
    if bytes.len() < 12 {
        return Err(WavError::Truncated {
            chunk: "RIFF header".into(),
            expected: 12,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(WavError::Container("missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(WavError::Container("missing WAVE tag"));
    }
    let mut fmt = None;
    let mut pos = 12;
    while pos < bytes.len() {
        if bytes.len() - pos < 8 {
            return Err(WavError::Truncated {
                chunk: "chunk header".into(),
                expected: 8,
                actual: bytes.len() - pos,
            });
        }
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let available = bytes.len() - start;
        let name = String::from_utf8_lossy(id).trim_end().to_string();
        if size > available {
            return Err(WavError::Truncated {
                chunk: name,
                expected: size,
                actual: available,
            });
        }
        let body = &bytes[start..start + size];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => {
                let fmt = fmt.ok_or(WavError::MissingChunk("fmt"))?;
                if size % 2 != 0 {
                    return Err(WavError::Truncated {
                        chunk: name,
                        expected: size + 1,
                        actual: size,
                    });
                }
                let samples = body
                    .chunks_exact(2)
                    .map(|c| f32::from(i16::from_le_bytes([c[0], c[1]])))
                    .collect();
                let mut warnings = Vec::new();
                if fmt.sample_rate != NOMINAL_SAMPLE_RATE {
                    warnings.push(format!(
                        "{source_id}: sample rate {} Hz differs from {NOMINAL_SAMPLE_RATE} Hz; processed as-is",
                        fmt.sample_rate
                    ));
                }
                return Ok(ParsedWav {
                    waveform: Waveform::new(samples, fmt.sample_rate, source_id),
                    warnings,
                });
            }
            _ => {}
        }
        // chunks are padded to even length
        pos = start + size + (size & 1);
    }
    Err(WavError::MissingChunk(if fmt.is_some() { "data" } else { "fmt" }))
}

/// Encodes raw PCM16 values. Every sample must be an integer in the
/// 16-bit range.
pub fn serialize_wav(w: &Waveform) -> Result<Vec<u8>, WavError> {
    let mut pcm = Vec::with_capacity(w.samples.len() * 2);
    for (index, &value) in w.samples.iter().enumerate() {
        if value.fract() != 0.0 || !(-32768.0..=32767.0).contains(&value) {
            return Err(WavError::NotPcm16 { index, value });
        }
        pcm.extend_from_slice(&(value as i16).to_le_bytes());
    }
    let data_len = pcm.len() as u32;
    let mut out = Vec::with_capacity(44 + pcm.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    out.extend_from_slice(&pcm);
    Ok(out)
}
