//! Small two-class dataset for desk-scale runs. Bona fide items are two
//! random-phase sinusoids plus white noise; spoofed items are the same
//! signal hard-clipped and rescaled to its original peak, which adds
//! odd harmonics.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::protocol::{Label, Trial, TrialSet};
use super::wav::{Waveform, NOMINAL_SAMPLE_RATE};

pub const NOISE_STD: f64 = 0.01;
pub const CLIP_LEVEL: f64 = 0.5;
pub const SPOOF_ATTACK: &str = "CLIP";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub trials: TrialSet,
    /// Raw 16-bit PCM values, aligned with `trials`.
    pub waveforms: Vec<Waveform>,
}

fn quantize(x: f64) -> f32 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as f32
}

fn render(rng: &mut ChaCha8Rng, length: usize, label: Label) -> Vec<f32> {
    let sr = f64::from(NOMINAL_SAMPLE_RATE);
    let tones: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(0.25..0.45),
                rng.random_range(100.0..1000.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let noise = Normal::new(0.0, NOISE_STD).expect("valid noise std");
    let mut x: Vec<f64> = (0..length)
        .map(|n| {
            let t = n as f64 / sr;
            tones.iter().map(|&(a, f, p)| a * (2.0 * PI * f * t + p).sin()).sum::<f64>() + noise.sample(rng)
        })
        .collect();
    if label == Label::Spoof {
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let clipped_peak = peak.min(CLIP_LEVEL);
        if clipped_peak > 0.0 {
            let gain = peak / clipped_peak;
            for v in &mut x {
                *v = v.clamp(-CLIP_LEVEL, CLIP_LEVEL) * gain;
            }
        }
    }
    x.into_iter().map(quantize).collect()
}

/// `2 * n_per_class` items alternating bona fide / spoof. Deterministic
/// for a fixed seed.
pub fn synth_dataset(n_per_class: usize, length: usize, seed: u64) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(2 * n_per_class);
    let mut waveforms = Vec::with_capacity(2 * n_per_class);
    for k in 0..2 * n_per_class {
        let label = if k % 2 == 0 { Label::Bonafide } else { Label::Spoof };
        let utt_id = format!("SYN_{k:06}");
        waveforms.push(Waveform::new(render(&mut rng, length, label), NOMINAL_SAMPLE_RATE, utt_id.clone()));
        trials.push(Trial {
            speaker_id: format!("SYN_S{:02}", k / 2 % 10),
            utt_id,
            attack_id: match label {
                Label::Bonafide => "-".into(),
                Label::Spoof => SPOOF_ATTACK.into(),
            },
            label,
        });
    }
    SynthData {
        trials: TrialSet {
            trials,
            root: PathBuf::new(),
        },
        waveforms,
    }
}
