//! Oracle time-frequency masks computed from the known components of a
//! simulated mixture.
//!
//! Every mask is a single `T x F` plane evaluated on a reference channel and
//! shared by all microphones. Bins where the denominator falls below
//! `1e-8` times the utterance's largest magnitude are set to zero.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::signal::ComplexSpectrogram;

/// Relative threshold of the silent-bin guard.
pub const MASK_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    /// `|S| / (|S| + |N|)`, bounded to `[0, 1]`.
    Sigmoid,
    /// `|S| / |Y|`, unbounded above.
    Relu,
    /// `S / Y`, unbounded complex.
    Complex,
}

impl MaskKind {
    pub fn is_real(self) -> bool {
        !matches!(self, MaskKind::Complex)
    }
}

/// A `T x F` mask shared across channels. Real kinds keep a zero imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTensor {
    kind: MaskKind,
    frames: usize,
    freq_bins: usize,
    values: Vec<Complex64>,
}

impl MaskTensor {
    pub fn new(kind: MaskKind, frames: usize, freq_bins: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != frames * freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "{} mask values for a {frames}x{freq_bins} grid",
                values.len()
            )));
        }
        for v in &values {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFinite("mask"));
            }
            let ok = match kind {
                MaskKind::Sigmoid => v.im == 0.0 && (0.0..=1.0).contains(&v.re),
                MaskKind::Relu => v.im == 0.0 && v.re >= 0.0,
                MaskKind::Complex => true,
            };
            if !ok {
                return Err(Error::InvalidSignal(format!("value {v} is outside the range of a {kind:?} mask")));
            }
        }
        Ok(Self {
            kind,
            frames,
            freq_bins,
            values,
        })
    }

    pub fn from_real(kind: MaskKind, frames: usize, freq_bins: usize, values: &[f64]) -> Result<Self> {
        if !kind.is_real() {
            return Err(Error::MaskKind {
                found: kind,
                expected: "a real mask kind",
            });
        }
        Self::new(kind, frames, freq_bins, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// An all-ones mask of the given kind.
    pub fn ones(kind: MaskKind, frames: usize, freq_bins: usize) -> Self {
        Self {
            kind,
            frames,
            freq_bins,
            values: vec![Complex64::new(1.0, 0.0); frames * freq_bins],
        }
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.values[t * self.freq_bins + f]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn check_grid(&self, spec: &ComplexSpectrogram) -> Result<()> {
        if self.frames != spec.frames() || self.freq_bins != spec.freq_bins() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} mask for a {}x{} spectrogram",
                self.frames,
                self.freq_bins,
                spec.frames(),
                spec.freq_bins()
            )));
        }
        Ok(())
    }

    /// Multiplies channel `channel` of `spec` by the mask, giving a
    /// single-channel estimate.
    pub fn apply(&self, spec: &ComplexSpectrogram, channel: usize) -> Result<ComplexSpectrogram> {
        self.check_grid(spec)?;
        let single = spec.channel(channel)?;
        Ok(single.map_indexed(|t, f, _| self.get(t, f) * single.get(t, f, 0)))
    }

    /// Writes the mask as a raw tensor: `T x F` reals for real kinds,
    /// interleaved complex for [`MaskKind::Complex`].
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.kind.is_real() {
            let re: Vec<f64> = self.values.iter().map(|v| v.re).collect();
            io::write_real_tensor(path, &re)
        } else {
            io::write_complex_tensor(path, &self.values)
        }
    }

    pub fn read(path: impl AsRef<Path>, kind: MaskKind, frames: usize, freq_bins: usize) -> Result<Self> {
        let path = path.as_ref();
        let values = if kind.is_real() {
            io::read_real_tensor(path)?
                .into_iter()
                .map(|v| Complex64::new(v, 0.0))
                .collect()
        } else {
            io::read_complex_tensor(path)?
        };
        Self::new(kind, frames, freq_bins, values).map_err(|e| Error::format(path, e))
    }
}

fn check_inputs(a: &ComplexSpectrogram, b: &ComplexSpectrogram, ref_channel: usize) -> Result<()> {
    a.check_same_grid(b)?;
    for s in [a, b] {
        if ref_channel >= s.channels() {
            return Err(Error::ChannelOutOfRange {
                index: ref_channel,
                channels: s.channels(),
            });
        }
    }
    Ok(())
}

fn is_silent(mag: f64, eps: f64) -> bool {
    mag < eps || mag == 0.0
}

fn build(
    kind: MaskKind,
    grid: &ComplexSpectrogram,
    mut value: impl FnMut(usize, usize) -> Complex64,
) -> Result<MaskTensor> {
    let (frames, bins) = (grid.frames(), grid.freq_bins());
    let mut values = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        for f in 0..bins {
            values.push(value(t, f));
        }
    }
    MaskTensor::new(kind, frames, bins, values)
}

/// Magnitude ratio `|S| / |Y|` on the reference channel, not clipped.
pub fn relu_mask(target: &ComplexSpectrogram, mixture: &ComplexSpectrogram, ref_channel: usize) -> Result<MaskTensor> {
    check_inputs(target, mixture, ref_channel)?;
    let eps = MASK_EPS * mixture.max_magnitude(ref_channel);
    build(MaskKind::Relu, mixture, |t, f| {
        let y = mixture.get(t, f, ref_channel).norm();
        if is_silent(y, eps) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(target.get(t, f, ref_channel).norm() / y, 0.0)
        }
    })
}

/// Ideal ratio mask `|S| / (|S| + |N|)` on the reference channel.
pub fn sigmoid_mask(target: &ComplexSpectrogram, noise: &ComplexSpectrogram, ref_channel: usize) -> Result<MaskTensor> {
    check_inputs(target, noise, ref_channel)?;
    let eps = MASK_EPS * target.max_magnitude(ref_channel).max(noise.max_magnitude(ref_channel));
    build(MaskKind::Sigmoid, target, |t, f| {
        let s = target.get(t, f, ref_channel).norm();
        let n = noise.get(t, f, ref_channel).norm();
        if is_silent(s, eps) && is_silent(n, eps) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new((s / (s + n)).clamp(0.0, 1.0), 0.0)
        }
    })
}

/// Complex ratio `S / Y` on the reference channel, so that `CM * Y = S`.
pub fn complex_mask(target: &ComplexSpectrogram, mixture: &ComplexSpectrogram, ref_channel: usize) -> Result<MaskTensor> {
    check_inputs(target, mixture, ref_channel)?;
    let eps = MASK_EPS * mixture.max_magnitude(ref_channel);
    build(MaskKind::Complex, mixture, |t, f| {
        let y = mixture.get(t, f, ref_channel);
        if is_silent(y.norm(), eps) {
            Complex64::new(0.0, 0.0)
        } else {
            target.get(t, f, ref_channel) / y
        }
    })
}

/// `1 - mask`; real kinds are floored at zero.
pub fn complement_noise_mask(speech_mask: &MaskTensor) -> MaskTensor {
    let one = Complex64::new(1.0, 0.0);
    let values = speech_mask
        .values
        .iter()
        .map(|&v| {
            if speech_mask.kind.is_real() {
                Complex64::new((1.0 - v.re).max(0.0), 0.0)
            } else {
                one - v
            }
        })
        .collect();
    MaskTensor {
        values,
        ..speech_mask.clone()
    }
}
