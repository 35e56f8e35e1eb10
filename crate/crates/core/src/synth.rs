//! Synthetic recordings with a planted linear map from AM features to finger
//! trajectories.
//!
//! Every channel carries pink background noise. Planted channels additionally
//! carry bursts gated by the cued finger's movement envelope: a tone at a
//! random frequency inside one band, redrawn every movement
//! (`SynthMode::Band`), or broadband white noise (`SynthMode::Raw`). Each finger's trajectory is a weighted sum of causally
//! smoothed AM series of its planted (channel, band) pairs, computed from the
//! stored recording with the same filters the decoder uses. A tap-delay
//! decoder over the right columns can therefore reproduce the noiseless
//! target exactly.
//!
//! Randomness comes from a single ChaCha8 stream seeded with `seed`, so
//! output is identical across platforms.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::container::save_recording;
use crate::error::{Error, Result};
use crate::features::{band_am, compute_am};
use crate::filterbank::{apply_zero_phase, default_bands, design_bank, BandFilter};
use crate::recording::{samples_per_bin, Finger, Recording, N_FINGERS};

/// Movement and rest durations of one cued trial.
pub const MOVE_S: f64 = 2.0;
pub const REST_S: f64 = 2.0;
/// Length of the causal smoothing kernel applied to planted AM series, in
/// bins. Must not exceed the decoder's tap count.
pub const SMOOTHING_BINS: usize = 20;
const RAMP_S: f64 = 0.3;
const TONES_PER_BURST: usize = 1;
const BACKGROUND_STD: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    /// Information confined to one frequency band per planting.
    Band,
    /// Broadband bursts; raw-channel AM carries the information.
    Raw,
}

impl std::str::FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "band" => Ok(SynthMode::Band),
            "raw" => Ok(SynthMode::Raw),
            _ => Err(Error::Config(format!("unknown synth mode '{s}'"))),
        }
    }
}

/// One informative (finger, channel, band) pairing and its target weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planting {
    pub finger: Finger,
    pub channel: usize,
    /// Band name for band mode; `None` in raw mode.
    pub band: Option<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_channels: usize,
    pub duration_s: u32,
    pub ecog_rate: u32,
    pub glove_rate: u32,
    pub mode: SynthMode,
    pub informative: Vec<Planting>,
    /// Target noise standard deviation relative to the noiseless target's.
    pub noise_std: f64,
    /// Burst power over background power, measured in the planted band (band
    /// mode) or over the whole channel (raw mode).
    pub burst_snr: f64,
    /// Fixed 2 s movement / 2 s rest cycle through the fingers; when off,
    /// each 4 s slot cues a random finger for a random 1–3 s.
    pub trials: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::new(0, 48, SynthMode::Band)
    }
}

impl SynthConfig {
    /// Defaults for the given channel count: 600 s at 1000 Hz, 25 Hz glove,
    /// two plantings per finger.
    pub fn new(seed: u64, n_channels: usize, mode: SynthMode) -> Self {
        Self {
            seed,
            n_channels,
            duration_s: 600,
            ecog_rate: 1000,
            glove_rate: 25,
            mode,
            informative: default_plantings(n_channels, mode),
            noise_std: 0.05,
            burst_snr: 10.0,
            trials: true,
        }
    }

    pub fn subject_id(&self) -> String {
        format!("synth-{}", self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::Config("need at least one channel".into()));
        }
        if self.duration_s == 0 {
            return Err(Error::Config("duration must be positive".into()));
        }
        if self.glove_rate == 0 || 1000 % self.glove_rate != 0 {
            return Err(Error::Config(format!(
                "glove rate {} Hz does not give whole-millisecond bins",
                self.glove_rate
            )));
        }
        samples_per_bin(self.ecog_rate, 1000 / self.glove_rate)?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise_std must be finite and non-negative".into()));
        }
        if !(self.burst_snr >= 0.0 && self.burst_snr.is_finite()) {
            return Err(Error::Config("burst_snr must be finite and non-negative".into()));
        }
        let bands = match self.mode {
            SynthMode::Band => default_bands(self.ecog_rate)?,
            SynthMode::Raw => Vec::new(),
        };
        for p in &self.informative {
            if p.channel >= self.n_channels {
                return Err(Error::Config(format!(
                    "planting on channel {} but only {} channels",
                    p.channel, self.n_channels
                )));
            }
            if !p.weight.is_finite() {
                return Err(Error::Config("planting weights must be finite".into()));
            }
            match (self.mode, &p.band) {
                (SynthMode::Band, Some(name)) if bands.iter().any(|b| &b.name == name) => {}
                (SynthMode::Band, Some(name)) => {
                    return Err(Error::Config(format!("unknown band '{name}' in planting")))
                }
                (SynthMode::Band, None) => {
                    return Err(Error::Config("band-mode plantings need a band".into()))
                }
                (SynthMode::Raw, None) => {}
                (SynthMode::Raw, Some(_)) => {
                    return Err(Error::Config("raw-mode plantings take no band".into()))
                }
            }
        }
        Ok(())
    }
}

/// Two plantings per finger spread across the array: a gamma (weight 1.0)
/// and a fast-gamma (weight 0.6) channel.
pub fn default_plantings(n_channels: usize, mode: SynthMode) -> Vec<Planting> {
    let n = n_channels.max(1);
    let stride = (n / 10).max(1);
    let mut out = Vec::with_capacity(10);
    for f in Finger::ALL {
        for (slot, band, weight) in [(0, "gamma", 1.0), (1, "fast_gamma", 0.6)] {
            out.push(Planting {
                finger: f,
                channel: ((2 * f.index() + slot) * stride) % n,
                band: match mode {
                    SynthMode::Band => Some(band.to_string()),
                    SynthMode::Raw => None,
                },
                weight,
            });
        }
    }
    out
}

/// What the generator planted, for oracle assertions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub mode: SynthMode,
    pub informative: Vec<Planting>,
    pub noise_std: f64,
    pub smoothing_kernel: Vec<f64>,
    /// Noiseless finger trajectories, one per finger, one value per bin.
    pub noiseless_target: Vec<Vec<f64>>,
    /// Mean squared movement gate per bin, one series per finger.
    #[serde(skip)]
    pub envelope: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// Writes `ground_truth.json` plus the noiseless targets as a finger-major
    /// `f32le` sidecar, `ground_truth_target.bin`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            seed: u64,
            mode: SynthMode,
            informative: &'a [Planting],
            noise_std: f64,
            smoothing_kernel: &'a [f64],
            n_bins: usize,
            target_file: &'static str,
            dtype: &'static str,
        }
        let dir = dir.as_ref();
        let n_bins = self.noiseless_target.first().map_or(0, Vec::len);
        let meta = Sidecar {
            seed: self.seed,
            mode: self.mode,
            informative: &self.informative,
            noise_std: self.noise_std,
            smoothing_kernel: &self.smoothing_kernel,
            n_bins,
            target_file: "ground_truth_target.bin",
            dtype: "f32le",
        };
        let path = dir.join("ground_truth.json");
        let mut text = serde_json::to_string_pretty(&meta).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let bin = dir.join("ground_truth_target.bin");
        let bytes: Vec<u8> = self
            .noiseless_target
            .iter()
            .flatten()
            .flat_map(|v| (*v as f32).to_le_bytes())
            .collect();
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))
    }
}

/// Causal raised-cosine kernel over [`SMOOTHING_BINS`] bins, summing to 1.
pub fn smoothing_kernel() -> Vec<f64> {
    let m = SMOOTHING_BINS + 2;
    let w: Vec<f64> = (1..m - 1)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (m - 1) as f64).cos())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn causal_smooth(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .take_while(|(k, _)| *k <= t)
                .map(|(k, w)| w * x[t - k])
                .sum()
        })
        .collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Movement gates at the ECoG rate, one per finger.
fn movement_gates(cfg: &SynthConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let rate = cfg.ecog_rate as f64;
    let slot = ((MOVE_S + REST_S) * rate) as usize;
    let n_slots = n.div_ceil(slot);
    let mut gates = vec![vec![0.0; n]; N_FINGERS];
    for k in 0..n_slots {
        let amp = rng.random_range(0.6..1.4);
        let (finger, onset, dur) = if cfg.trials {
            (k % N_FINGERS, 0.0, MOVE_S)
        } else {
            let f = rng.random_range(0..N_FINGERS);
            let dur = rng.random_range(1.0..3.0);
            let onset = rng.random_range(0.0..(MOVE_S + REST_S - dur));
            (f, onset, dur)
        };
        let start = k * slot + (onset * rate) as usize;
        let len = (dur * rate) as usize;
        for i in 0..len {
            let idx = start + i;
            if idx >= n {
                break;
            }
            let t = i as f64 / rate;
            let ramp = (t / RAMP_S).min((dur - t) / RAMP_S).clamp(0.0, 1.0);
            gates[finger][idx] = amp * (0.5 - 0.5 * (PI * ramp).cos());
        }
    }
    gates
}

/// Unit-variance 1/f noise: white noise through a fixed 4-pole pinking
/// filter, with a discarded warm-up.
fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const B: [f64; 4] = [0.049922035, -0.095993537, 0.050612699, -0.004408786];
    const A: [f64; 4] = [1.0, -2.494956002, 2.017265875, -0.522189400];
    const WARMUP: usize = 2000;
    let mut x_hist = [0.0; 4];
    let mut y_hist = [0.0; 4];
    let mut out = Vec::with_capacity(n);
    for i in 0..n + WARMUP {
        x_hist.rotate_right(1);
        x_hist[0] = normal(rng);
        let mut y = 0.0;
        for k in 0..4 {
            y += B[k] * x_hist[k];
        }
        for k in 1..4 {
            y -= A[k] * y_hist[k - 1];
        }
        y_hist.rotate_right(1);
        y_hist[0] = y;
        if i >= WARMUP {
            out.push(y);
        }
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    out.iter_mut().for_each(|v| *v = (*v - mean) / std);
    out
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Band-limited burst: tones inside the band, redrawn per movement. More
/// than one tone makes the per-bin power beat.
fn tone_burst(
    gate: &[f64],
    band: &BandFilter,
    rate: f64,
    slot: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let (lo, hi) = (band.band.low_hz, band.band.high_hz);
    let margin = 0.1 * (hi - lo);
    let norm = (TONES_PER_BURST as f64 / 2.0).sqrt();
    let mut out = vec![0.0; gate.len()];
    for (k, chunk) in out.chunks_mut(slot).enumerate() {
        let base = k * slot;
        let tones: Vec<(f64, f64)> = (0..TONES_PER_BURST)
            .map(|_| {
                (
                    rng.random_range(lo + margin..hi - margin),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        for (i, v) in chunk.iter_mut().enumerate() {
            let g = gate[base + i];
            if g == 0.0 {
                continue;
            }
            let t = (base + i) as f64 / rate;
            let s: f64 = tones.iter().map(|(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
            *v = g * s / norm;
        }
    }
    out
}

/// Generates a recording and the planted ground truth.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Recording, GroundTruth)> {
    cfg.validate()?;
    let rate = cfg.ecog_rate;
    let n = cfg.duration_s as usize * rate as usize;
    let bin_ms = 1000 / cfg.glove_rate;
    let spb = samples_per_bin(rate, bin_ms)?;
    let n_bins = n / spb;
    let slot = ((MOVE_S + REST_S) * rate as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let gates = movement_gates(cfg, n, &mut rng);
    let mut channels: Vec<Vec<f64>> = (0..cfg.n_channels)
        .map(|_| {
            let mut x = pink_noise(n, &mut rng);
            x.iter_mut().for_each(|v| *v *= BACKGROUND_STD);
            x
        })
        .collect();

    let bank = match cfg.mode {
        SynthMode::Band => design_bank(&default_bands(rate)?, rate)?,
        SynthMode::Raw => Vec::new(),
    };
    let find_band = |name: &str| {
        bank.iter()
            .find(|b| b.band.name == name)
            .expect("planting bands validated against the default bank")
    };

    // Burst power is set against the background alone, before any planting
    // is added, so plantings do not depend on each other's order.
    let backgrounds: Vec<Vec<f64>> = cfg
        .informative
        .iter()
        .map(|p| channels[p.channel].clone())
        .collect();
    for (p, bg) in cfg.informative.iter().zip(&backgrounds) {
        let gate = &gates[p.finger.index()];
        let burst = match (&p.band, cfg.mode) {
            (Some(name), SynthMode::Band) => {
                let bf = find_band(name);
                let in_band = power(&apply_zero_phase(&bf.filter, bg)?);
                let amp = (cfg.burst_snr * in_band).sqrt();
                tone_burst(gate, bf, rate as f64, slot, &mut rng)
                    .into_iter()
                    .map(|v| amp * v)
                    .collect::<Vec<_>>()
            }
            _ => {
                let amp = (cfg.burst_snr * power(bg)).sqrt();
                gate.iter()
                    .map(|g| {
                        let z = normal(&mut rng);
                        if *g == 0.0 {
                            0.0
                        } else {
                            amp * g * z
                        }
                    })
                    .collect()
            }
        };
        for (x, b) in channels[p.channel].iter_mut().zip(burst) {
            *x += b;
        }
    }
    // Stored precision, so targets are computed from exactly what a loaded
    // container holds.
    for ch in &mut channels {
        ch.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }

    let placeholder = vec![vec![0.0; n_bins]; N_FINGERS];
    let recording = Recording::new(
        cfg.subject_id(),
        channels,
        rate,
        placeholder,
        cfg.glove_rate,
        None,
    )?;

    let kernel = smoothing_kernel();
    let mut noiseless = vec![vec![0.0; n_bins]; N_FINGERS];
    for p in &cfg.informative {
        let am = match &p.band {
            Some(name) => band_am(&recording, p.channel, find_band(name), bin_ms)?,
            None => compute_am(recording.channel(p.channel), rate, bin_ms)?,
        };
        let mean = am.iter().sum::<f64>() / am.len() as f64;
        if mean <= 0.0 {
            return Err(Error::Config(format!(
                "planted channel {} has no power",
                p.channel
            )));
        }
        let smooth = causal_smooth(&am[..n_bins], &kernel);
        for (t, s) in noiseless[p.finger.index()].iter_mut().zip(smooth) {
            *t += p.weight * s / mean;
        }
    }

    let mut glove = Vec::with_capacity(N_FINGERS);
    for target in noiseless.iter_mut() {
        let mut g: Vec<f64> = if target.iter().all(|v| *v == 0.0) {
            // Unplanted finger: slow drift unrelated to the ECoG.
            let white: Vec<f64> = (0..n_bins).map(|_| normal(&mut rng)).collect();
            let drift = causal_smooth(&white, &kernel);
            *target = drift.clone();
            drift
        } else {
            target.clone()
        };
        let std = {
            let m = g.iter().sum::<f64>() / n_bins as f64;
            (g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n_bins as f64).sqrt()
        };
        let sigma = cfg.noise_std * std;
        for v in g.iter_mut() {
            let z = normal(&mut rng);
            *v = (*v + sigma * z) as f32 as f64;
        }
        glove.push(g);
    }

    let envelope = gates
        .iter()
        .map(|g| {
            g.chunks_exact(spb)
                .take(n_bins)
                .map(|b| b.iter().map(|v| v * v).sum::<f64>() / spb as f64)
                .collect()
        })
        .collect();

    let recording = Recording::from_matrices(
        recording.subject_id().to_string(),
        recording.ecog().clone(),
        rate,
        nalgebra::DMatrix::from_iterator(n_bins, N_FINGERS, glove.into_iter().flatten()),
        cfg.glove_rate,
        None,
    )?;
    let truth = GroundTruth {
        seed: cfg.seed,
        mode: cfg.mode,
        informative: cfg.informative.clone(),
        noise_std: cfg.noise_std,
        smoothing_kernel: kernel,
        noiseless_target: noiseless,
        envelope,
    };
    Ok((recording, truth))
}

/// Generates and writes a container plus the ground-truth sidecar.
pub fn write_synthetic(cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<(Recording, GroundTruth)> {
    let (recording, truth) = generate_synthetic(cfg)?;
    save_recording(&recording, &dir)?;
    truth.save(&dir)?;
    Ok((recording, truth))
}
