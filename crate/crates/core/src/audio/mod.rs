//! Waveform I/O, preprocessing, trial lists and batching.

mod protocol;
mod synth;
mod wav;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::Tensor;

pub use protocol::{parse_protocol, write_protocol, Label, ProtocolError, Trial, TrialSet};
pub use synth::{synth_dataset, SynthData, CLIP_LEVEL, NOISE_STD, SPOOF_ATTACK};
pub use wav::{parse_wav, serialize_wav, ParsedWav, WavError, Waveform, NOMINAL_SAMPLE_RATE};

pub const PCM_SCALE: f32 = 32768.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{utt_id}: {source}")]
    Wav {
        utt_id: String,
        #[source]
        source: WavError,
    },
    #[error("{0}")]
    Protocol(#[from] ProtocolError),
    #[error("no audio for utterance {0}")]
    Missing(String),
    #[error("utterance {0} has no samples")]
    Empty(String),
    #[error("batch size must be positive")]
    ZeroBatch,
}

/// Cuts to the first `target` samples, or tiles the whole signal and
/// truncates when it is shorter.
pub fn fix_length(w: Waveform, target: usize) -> Result<Waveform, DataError> {
    if w.is_empty() {
        return Err(DataError::Empty(w.source_id));
    }
    let Waveform {
        samples,
        sample_rate,
        source_id,
    } = w;
    let samples = if samples.len() >= target {
        let mut s = samples;
        s.truncate(target);
        s
    } else {
        samples.iter().copied().cycle().take(target).collect()
    };
    Ok(Waveform {
        samples,
        sample_rate,
        source_id,
    })
}

/// Like [`fix_length`] but takes a uniformly random window from signals
/// longer than `target`.
pub fn random_crop(w: Waveform, target: usize, rng: &mut impl Rng) -> Result<Waveform, DataError> {
    if w.len() <= target {
        return fix_length(w, target);
    }
    let start = rng.random_range(0..=w.len() - target);
    Ok(Waveform {
        samples: w.samples[start..start + target].to_vec(),
        sample_rate: w.sample_rate,
        source_id: w.source_id,
    })
}

/// Divides raw PCM values by 32768.
pub fn scale(mut w: Waveform) -> Waveform {
    for v in &mut w.samples {
        *v /= PCM_SCALE;
    }
    w
}

/// Provides raw (unscaled) audio for a trial.
pub trait WaveSource {
    fn load(&self, trial: &Trial) -> Result<Waveform, DataError>;
}

/// Audio held in memory, keyed by utterance id.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    waves: HashMap<String, Waveform>,
}

impl MemorySource {
    pub fn new(waves: impl IntoIterator<Item = Waveform>) -> Self {
        Self {
            waves: waves.into_iter().map(|w| (w.source_id.clone(), w)).collect(),
        }
    }
}

impl From<&SynthData> for MemorySource {
    fn from(d: &SynthData) -> Self {
        Self::new(d.waveforms.iter().cloned())
    }
}

impl WaveSource for MemorySource {
    fn load(&self, trial: &Trial) -> Result<Waveform, DataError> {
        self.waves
            .get(&trial.utt_id)
            .cloned()
            .ok_or_else(|| DataError::Missing(trial.utt_id.clone()))
    }
}

/// Reads `<root>/<utt_id>.wav`.
#[derive(Debug, Clone)]
pub struct DirSource {
    pub root: PathBuf,
}

impl DirSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, utt_id: &str) -> PathBuf {
        self.root.join(format!("{utt_id}.wav"))
    }
}

pub fn read_wav_file(path: &Path, utt_id: &str) -> Result<Waveform, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = parse_wav(&bytes, utt_id).map_err(|source| DataError::Wav {
        utt_id: utt_id.to_string(),
        source,
    })?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed.waveform)
}

impl WaveSource for DirSource {
    fn load(&self, trial: &Trial) -> Result<Waveform, DataError> {
        read_wav_file(&self.path_for(&trial.utt_id), &trial.utt_id)
    }
}

/// Routes each utterance to the source that owns it, so trial sets
/// stored in different places can be pooled.
pub struct UnionSource<'a> {
    sources: Vec<&'a dyn WaveSource>,
    owner: HashMap<String, usize>,
}

impl<'a> UnionSource<'a> {
    pub fn new(parts: &[(&'a TrialSet, &'a dyn WaveSource)]) -> Self {
        let mut owner = HashMap::new();
        for (i, (set, _)) in parts.iter().enumerate() {
            for t in &set.trials {
                owner.entry(t.utt_id.clone()).or_insert(i);
            }
        }
        Self {
            sources: parts.iter().map(|p| p.1).collect(),
            owner,
        }
    }
}

impl WaveSource for UnionSource<'_> {
    fn load(&self, trial: &Trial) -> Result<Waveform, DataError> {
        let i = *self
            .owner
            .get(&trial.utt_id)
            .ok_or_else(|| DataError::Missing(trial.utt_id.clone()))?;
        self.sources[i].load(trial)
    }
}

/// Splits `0..n` into batches, shuffled when a seed is given. The final
/// partial batch is kept.
pub fn batch_indices(n: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Result<Vec<Vec<usize>>, DataError> {
    if batch_size == 0 {
        return Err(DataError::ZeroBatch);
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[B, 1, length]`, scaled to `[-1, 1)`.
    pub waves: Tensor<f32>,
    pub labels: Vec<usize>,
    pub trial_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preprocess {
    pub length: usize,
    /// Seed for random cropping of long signals; `None` takes the head.
    pub crop_seed: Option<u64>,
}

/// Loads, fixes the length of and scales one batch of trials.
pub fn load_batch(
    set: &TrialSet,
    source: &dyn WaveSource,
    indices: &[usize],
    length: usize,
    crop: Option<&mut ChaCha8Rng>,
) -> Result<Batch, DataError> {
    let mut data = Vec::with_capacity(indices.len() * length);
    let mut labels = Vec::with_capacity(indices.len());
    let mut crop = crop;
    for &i in indices {
        let trial = &set.trials[i];
        let raw = source.load(trial)?;
        let fixed = match crop.as_deref_mut() {
            Some(rng) => random_crop(raw, length, rng)?,
            None => fix_length(raw, length)?,
        };
        data.extend(scale(fixed).samples);
        labels.push(trial.label.index());
    }
    let waves = Tensor::from_vec(&[indices.len(), 1, length], data).expect("batch buffer sized to shape");
    Ok(Batch {
        waves,
        labels,
        trial_indices: indices.to_vec(),
    })
}

/// Lazily loaded batches in a seeded order.
pub struct Batches<'a> {
    set: &'a TrialSet,
    source: &'a dyn WaveSource,
    order: std::vec::IntoIter<Vec<usize>>,
    length: usize,
    crop: Option<ChaCha8Rng>,
}

impl Iterator for Batches<'_> {
    type Item = Result<Batch, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        let idx = self.order.next()?;
        Some(load_batch(self.set, self.source, &idx, self.length, self.crop.as_mut()))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.order.size_hint()
    }
}

pub fn make_batches<'a>(
    set: &'a TrialSet,
    source: &'a dyn WaveSource,
    batch_size: usize,
    shuffle_seed: Option<u64>,
    prep: Preprocess,
) -> Result<Batches<'a>, DataError> {
    Ok(Batches {
        set,
        source,
        order: batch_indices(set.len(), batch_size, shuffle_seed)?.into_iter(),
        length: prep.length,
        crop: prep.crop_seed.map(ChaCha8Rng::seed_from_u64),
    })
}
