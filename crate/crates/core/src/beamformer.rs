//! MVDR and multi-tap MVDR weights, and their application to a mixture.
//!
//! Both solvers use the reference-channel form
//!
//! ```text
//! w(f) = Phi_NN^-1(f) Phi_SS(f) u / trace(Phi_NN^-1(f) Phi_SS(f))
//! ```
//!
//! where `u` selects the reference microphone. For the multi-tap variant the
//! covariances are over stacked frames and `u` is zero-extended across the
//! extra tap blocks, so the filter still reconstructs the reference
//! channel's current frame. When `Phi_SS` has rank one, `Phi_SS = v v^H` with
//! `v[ref] = 1`, this is exactly the minimiser of `w^H Phi_NN w` subject to
//! `w^H v = 1`.

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{stack_taps, CovarianceStack, FrameSource, TapStack};
use crate::error::{Error, Result};
use crate::io;
use crate::signal::ComplexSpectrogram;

/// Numerical knobs of the weight solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Diagonal loading `delta`: `Phi_NN + delta * trace(Phi_NN) / D * I`.
    pub loading: f64,
    /// Above this condition estimate the pseudo-inverse replaces the
    /// Cholesky solve.
    pub condition_limit: f64,
    /// `|trace|` below which a frequency falls back to the pass-through selector.
    pub trace_eps: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            loading: 1e-6,
            condition_limit: 1e12,
            trace_eps: 1e-10,
        }
    }
}

/// Per-frequency filters of length `D = channels * taps`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    weights: Vec<DVector<Complex64>>,
    channels: usize,
    taps: usize,
    ref_channel: usize,
    fallback_bins: Vec<usize>,
}

impl BeamformerWeights {
    pub fn new(weights: Vec<DVector<Complex64>>, channels: usize, taps: usize, ref_channel: usize) -> Result<Self> {
        if taps < 1 {
            return Err(Error::InvalidTaps);
        }
        if ref_channel >= channels {
            return Err(Error::ChannelOutOfRange {
                index: ref_channel,
                channels,
            });
        }
        let d = channels * taps;
        if let Some(bad) = weights.iter().position(|w| w.len() != d) {
            return Err(Error::DimensionMismatch(format!("weight vector {bad} is not of length {d}")));
        }
        Ok(Self {
            weights,
            channels,
            taps,
            ref_channel,
            fallback_bins: Vec::new(),
        })
    }

    /// The pass-through filter at every frequency.
    pub fn pass_through(freq_bins: usize, channels: usize, taps: usize, ref_channel: usize) -> Result<Self> {
        let u = selector(channels, taps, ref_channel)?;
        Self::new(vec![u; freq_bins], channels, taps, ref_channel)
    }

    pub fn freq_bins(&self) -> usize {
        self.weights.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn ref_channel(&self) -> usize {
        self.ref_channel
    }

    pub fn weight(&self, f: usize) -> &DVector<Complex64> {
        &self.weights[f]
    }

    /// The one-hot reference selector (`u`, or `u` zero-padded across taps).
    pub fn selector(&self) -> DVector<Complex64> {
        selector(self.channels, self.taps, self.ref_channel).expect("validated at construction")
    }

    /// Frequencies where the solve degenerated and the selector was used.
    pub fn fallback_bins(&self) -> &[usize] {
        &self.fallback_bins
    }

    /// Writes `F x D` interleaved complex values.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let flat: Vec<Complex64> = self.weights.iter().flat_map(|w| w.iter().copied()).collect();
        io::write_complex_tensor(path, &flat)
    }
}

/// One-hot vector of length `channels * taps` with a one at `ref_channel`.
pub fn selector(channels: usize, taps: usize, ref_channel: usize) -> Result<DVector<Complex64>> {
    if taps < 1 {
        return Err(Error::InvalidTaps);
    }
    if ref_channel >= channels {
        return Err(Error::ChannelOutOfRange {
            index: ref_channel,
            channels,
        });
    }
    let mut u = DVector::zeros(channels * taps);
    u[ref_channel] = Complex64::new(1.0, 0.0);
    Ok(u)
}

/// Single-tap MVDR. Both stacks must have one tap.
pub fn solve_mvdr(
    phi_ss: &CovarianceStack,
    phi_nn: &CovarianceStack,
    ref_channel: usize,
    options: &SolverOptions,
) -> Result<BeamformerWeights> {
    if phi_ss.taps() != 1 || phi_nn.taps() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "single-tap MVDR needs 1-tap covariances, got {} and {}",
            phi_ss.taps(),
            phi_nn.taps()
        )));
    }
    solve_multitap_mvdr(phi_ss, phi_nn, ref_channel, options)
}

/// Multi-tap MVDR over stacked covariances; reduces to [`solve_mvdr`] for one tap.
pub fn solve_multitap_mvdr(
    phi_ss: &CovarianceStack,
    phi_nn: &CovarianceStack,
    ref_channel: usize,
    options: &SolverOptions,
) -> Result<BeamformerWeights> {
    if phi_ss.taps() != phi_nn.taps()
        || phi_ss.channels() != phi_nn.channels()
        || phi_ss.freq_bins() != phi_nn.freq_bins()
    {
        return Err(Error::DimensionMismatch(format!(
            "speech covariance {}x{}ch x{} taps vs noise covariance {}x{}ch x{} taps",
            phi_ss.freq_bins(),
            phi_ss.channels(),
            phi_ss.taps(),
            phi_nn.freq_bins(),
            phi_nn.channels(),
            phi_nn.taps()
        )));
    }
    if !(options.loading >= 0.0) {
        return Err(Error::InvalidConfig(format!("diagonal loading {} must be >= 0", options.loading)));
    }
    let (channels, taps) = (phi_ss.channels(), phi_ss.taps());
    let u = selector(channels, taps, ref_channel)?;

    let solved: Vec<Option<DVector<Complex64>>> = (0..phi_ss.freq_bins())
        .into_par_iter()
        .map(|f| solve_bin(phi_ss.matrix(f), phi_nn.matrix(f), ref_channel, options))
        .collect::<Result<_>>()?;

    let mut fallback_bins = Vec::new();
    let weights = solved
        .into_iter()
        .enumerate()
        .map(|(f, w)| {
            w.unwrap_or_else(|| {
                fallback_bins.push(f);
                u.clone()
            })
        })
        .collect();
    if !fallback_bins.is_empty() {
        log::warn!(
            "{} of {} frequencies had no usable target statistics; passing the reference channel through",
            fallback_bins.len(),
            phi_ss.freq_bins()
        );
    }
    let mut out = BeamformerWeights::new(weights, channels, taps, ref_channel)?;
    out.fallback_bins = fallback_bins;
    Ok(out)
}

/// `None` signals a degenerate trace.
fn solve_bin(
    phi_ss: &DMatrix<Complex64>,
    phi_nn: &DMatrix<Complex64>,
    ref_channel: usize,
    options: &SolverOptions,
) -> Result<Option<DVector<Complex64>>> {
    let finite = |m: &DMatrix<Complex64>| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if !finite(phi_ss) {
        return Err(Error::NonFinite("speech covariance"));
    }
    if !finite(phi_nn) {
        return Err(Error::NonFinite("noise covariance"));
    }
    let d = phi_nn.nrows();
    let load = options.loading * phi_nn.trace().re / d as f64;
    let mut loaded = phi_nn.clone();
    for i in 0..d {
        loaded[(i, i)] += Complex64::new(load, 0.0);
    }
    let x = hermitian_solve(loaded, phi_ss, options.condition_limit);
    let trace = x.trace();
    if !(trace.norm() >= options.trace_eps) || !trace.re.is_finite() {
        return Ok(None);
    }
    Ok(Some(x.column(ref_channel) / trace))
}

/// `A^-1 B` for Hermitian `A`: Cholesky when well conditioned, otherwise
/// the SVD pseudo-inverse.
fn hermitian_solve(a: DMatrix<Complex64>, b: &DMatrix<Complex64>, condition_limit: f64) -> DMatrix<Complex64> {
    if let Some(chol) = a.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .map(|z| z.re.abs())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo > 0.0 && (hi / lo).powi(2) <= condition_limit {
            return chol.solve(b);
        }
    }
    let svd = a.svd(true, true);
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    match svd.pseudo_inverse(top * 1e-12) {
        Ok(pinv) if top > 0.0 => pinv * b,
        _ => DMatrix::zeros(b.nrows(), b.ncols()),
    }
}

/// Filters the mixture: `S_hat(t, f) = w^H(f) y_bar(t, f)`, one output channel.
pub fn apply(weights: &BeamformerWeights, mixture: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if weights.channels() != mixture.channels() || weights.freq_bins() != mixture.freq_bins() {
        return Err(Error::DimensionMismatch(format!(
            "weights for {} channels x {} bins, mixture has {} channels x {} bins",
            weights.channels(),
            weights.freq_bins(),
            mixture.channels(),
            mixture.freq_bins()
        )));
    }
    let stacked = stack_taps(mixture, weights.taps())?;
    let mut out = ComplexSpectrogram::zeros(
        mixture.frames(),
        1,
        *mixture.config(),
        mixture.signal_len(),
        mixture.sample_rate(),
    )?;
    apply_frames(weights, &stacked, 0..mixture.frames(), &mut out);
    Ok(out)
}

/// Writes `w^H y_bar` for the frames in `frames` into channel 0 of `out`.
pub(crate) fn apply_frames(weights: &BeamformerWeights, stacked: &TapStack, frames: Range<usize>, out: &mut ComplexSpectrogram) {
    for t in frames {
        for f in 0..stacked.freq_bins() {
            let w = weights.weight(f);
            let y = stacked.vector(t, f);
            let s: Complex64 = w.iter().zip(y).map(|(wi, yi)| wi.conj() * yi).sum();
            out.set(t, f, 0, s);
        }
    }
}
