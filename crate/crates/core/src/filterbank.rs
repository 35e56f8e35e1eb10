//! Zero-phase Butterworth bandpass filter bank.
//!
//! Each band is a 4th-order Butterworth bandpass prototype (eight poles after
//! the lowpass-to-bandpass transform) realised as a cascade of second-order
//! sections and run forward then backward over the signal.

use std::f64::consts::PI;

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recording::Recording;

/// Order of the lowpass prototype every band filter is derived from.
pub const BUTTERWORTH_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandDefinition {
    pub fn new(name: impl Into<String>, low_hz: f64, high_hz: f64) -> Self {
        Self {
            name: name.into(),
            low_hz,
            high_hz,
        }
    }

    pub fn validate(&self, rate_hz: u32) -> Result<()> {
        let nyquist = rate_hz as f64 / 2.0;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < nyquist) {
            return Err(Error::Design(format!(
                "band '{}' ({}–{} Hz) must satisfy 0 < low < high < {nyquist} Hz",
                self.name, self.low_hz, self.high_hz
            )));
        }
        Ok(())
    }

    pub fn center_hz(&self) -> f64 {
        (self.low_hz * self.high_hz).sqrt()
    }
}

/// The sub (1–60 Hz), gamma (60–100 Hz) and fast-gamma bands.
///
/// The fast-gamma upper edge is clamped to `min(200, 0.45 × rate)` since the
/// acquisition hardware lowpasses at 200 Hz.
pub fn default_bands(ecog_rate: u32) -> Result<Vec<BandDefinition>> {
    if ecog_rate < 400 {
        return Err(Error::UnsupportedRate(ecog_rate));
    }
    let fast_high = 200.0_f64.min(0.45 * ecog_rate as f64);
    Ok(vec![
        BandDefinition::new("sub", 1.0, 60.0),
        BandDefinition::new("gamma", 60.0, 100.0),
        BandDefinition::new("fast_gamma", 100.0, fast_high),
    ])
}

/// One biquad in transposed direct form II, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderSection {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl SecondOrderSection {
    fn response(&self, z_inv: Complex<f64>) -> Complex<f64> {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = self.a[0] + z_inv * self.a[1] + z2 * self.a[2];
        num / den
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// State reached after an infinitely long unit step.
    fn step_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        [y - self.b[0], self.b[2] - self.a[2] * y]
    }

    fn run(&self, data: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in data.iter_mut() {
            let x = *v;
            let y = b0 * x + state[0];
            state[0] = b1 * x - a1 * y + state[1];
            state[1] = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// Coefficients of a designed IIR filter as a cascade of sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub sections: Vec<SecondOrderSection>,
}

impl FilterSpec {
    /// Number of poles of the composite filter.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Magnitude of the single-pass frequency response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, rate_hz: u32) -> f64 {
        let w = 2.0 * PI * freq_hz / rate_hz as f64;
        let z_inv = Complex::new(w.cos(), -w.sin());
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }

    /// Poles of every section.
    pub fn poles(&self) -> Vec<Complex<f64>> {
        self.sections
            .iter()
            .flat_map(|s| {
                let (a1, a2) = (s.a[1], s.a[2]);
                let disc = Complex::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
                [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
            })
            .collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Causal single pass starting from rest.
    pub fn apply_causal(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = samples.to_vec();
        for s in &self.sections {
            s.run(&mut out, [0.0, 0.0]);
        }
        out
    }

    /// Causal pass whose initial state is the steady state for a constant
    /// input equal to `data[0]`.
    fn run_with_steady_start(&self, data: &mut [f64]) {
        let x0 = data[0];
        let mut scale = x0;
        for s in &self.sections {
            let [z1, z2] = s.step_state();
            s.run(data, [z1 * scale, z2 * scale]);
            scale *= s.dc_gain();
        }
    }
}

/// Designs the bandpass for `band` at `rate_hz` via the bilinear transform.
pub fn design_bandpass(band: &BandDefinition, rate_hz: u32) -> Result<FilterSpec> {
    band.validate(rate_hz)?;
    let fs = rate_hz as f64;
    let n = BUTTERWORTH_ORDER;

    // Prewarped analog edges.
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (w_lo, w_hi) = (warp(band.low_hz), warp(band.high_hz));
    let bw = w_hi - w_lo;
    let wo = (w_lo * w_hi).sqrt();

    let k2 = Complex::new(2.0 * fs, 0.0);
    let mut upper = Vec::with_capacity(n);
    for k in 0..n {
        let theta = PI / 2.0 + PI * (2 * k + 1) as f64 / (2 * n) as f64;
        let proto = Complex::from_polar(1.0, theta);
        let a = proto * (bw / 2.0);
        let d = (a * a - Complex::new(wo * wo, 0.0)).sqrt();
        for s in [a + d, a - d] {
            let z = (k2 + s) / (k2 - s);
            if z.im > 0.0 {
                upper.push(z);
            }
        }
    }
    if upper.len() != n {
        return Err(Error::Design(format!(
            "band '{}' produced {} complex pole pairs, expected {n}",
            band.name,
            upper.len()
        )));
    }
    upper.sort_by(|p, q| p.norm().total_cmp(&q.norm()).then(p.im.total_cmp(&q.im)));

    // Unit gain at the digital image of the analog center frequency, which is
    // where the Butterworth bandpass peaks.
    let wc = 2.0 * (wo / (2.0 * fs)).atan();
    let z_inv = Complex::new(wc.cos(), -wc.sin());
    let mut sections = Vec::with_capacity(n);
    for p in upper {
        if p.norm() >= 1.0 - 1e-12 {
            return Err(Error::Design(format!(
                "band '{}' has a pole on or outside the unit circle (|p| = {})",
                band.name,
                p.norm()
            )));
        }
        let mut s = SecondOrderSection {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        };
        let g = 1.0 / s.response(z_inv).norm();
        if !g.is_finite() {
            return Err(Error::Design(format!(
                "band '{}' has no usable passband at {rate_hz} Hz",
                band.name
            )));
        }
        s.b = [g, 0.0, -g];
        sections.push(s);
    }
    Ok(FilterSpec { sections })
}

/// Forward-backward filtering with odd reflection padding of `3 × order`
/// samples at each end and steady-state initial conditions.
pub fn apply_zero_phase(spec: &FilterSpec, samples: &[f64]) -> Result<Vec<f64>> {
    let pad = 3 * spec.order();
    let n = samples.len();
    if n <= pad {
        return Err(Error::TooShort {
            what: "series for zero-phase filtering",
            needed: pad + 1,
            got: n,
        });
    }
    let (first, last) = (samples[0], samples[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - samples[i]));
    ext.extend_from_slice(samples);
    ext.extend((1..=pad).map(|i| 2.0 * last - samples[n - 1 - i]));

    spec.run_with_steady_start(&mut ext);
    ext.reverse();
    spec.run_with_steady_start(&mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// One channel restricted to one band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSignal {
    pub channel: usize,
    pub band: BandDefinition,
    pub samples: Vec<f64>,
}

/// A band paired with its designed filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFilter {
    pub band: BandDefinition,
    pub filter: FilterSpec,
}

pub fn design_bank(bands: &[BandDefinition], rate_hz: u32) -> Result<Vec<BandFilter>> {
    bands
        .iter()
        .map(|b| {
            Ok(BandFilter {
                band: b.clone(),
                filter: design_bandpass(b, rate_hz)?,
            })
        })
        .collect()
}

/// Splits every channel into every band, channel-major then band order.
///
/// This materialises `n_channels × n_bands` full-rate series; the feature
/// pipeline streams the same computation instead.
pub fn decompose(recording: &Recording, bands: &[BandDefinition]) -> Result<Vec<BandSignal>> {
    let bank = design_bank(bands, recording.ecog_rate())?;
    let per_channel: Vec<Vec<BandSignal>> = (0..recording.n_channels())
        .into_par_iter()
        .map(|c| {
            bank.iter()
                .map(|bf| {
                    Ok(BandSignal {
                        channel: c,
                        band: bf.band.clone(),
                        samples: apply_zero_phase(&bf.filter, recording.channel(c))?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_channel.into_iter().flatten().collect())
}
