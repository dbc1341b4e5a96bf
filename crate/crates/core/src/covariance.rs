//! Mask-weighted spatial and spatio-temporal covariance estimation.
//!
//! For a source with observation vectors `y(t, f)` (the channel vector, or
//! the stack of the current and `L - 1` previous channel vectors) and a mask
//! `g(t, f)` shared across channels, the estimate at frequency `f` is
//!
//! ```text
//! Phi(f) = sum_t (g y)(g y)^H / sum_t |g|^2
//! ```
//!
//! With a real mask this is the squared-mask weighted average of `y y^H`.
//! With a complex mask the phase of `g` cancels in the outer product, and the
//! normalisation makes the estimate invariant to any global rescaling of the
//! mask.

use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::masks::{MaskKind, MaskTensor};
use crate::signal::ComplexSpectrogram;

/// Denominator below which a frequency's covariance is the zero matrix.
pub const DENOMINATOR_EPS: f64 = 1e-10;

/// Anything that yields one observation vector per time-frequency point.
pub trait FrameSource: Sync {
    fn frames(&self) -> usize;
    fn freq_bins(&self) -> usize;
    fn channels(&self) -> usize;
    fn taps(&self) -> usize;
    /// The length-`channels * taps` observation at `(t, f)`.
    fn vector(&self, t: usize, f: usize) -> &[Complex64];

    fn dim(&self) -> usize {
        self.channels() * self.taps()
    }
}

impl FrameSource for ComplexSpectrogram {
    fn frames(&self) -> usize {
        ComplexSpectrogram::frames(self)
    }

    fn freq_bins(&self) -> usize {
        ComplexSpectrogram::freq_bins(self)
    }

    fn channels(&self) -> usize {
        ComplexSpectrogram::channels(self)
    }

    fn taps(&self) -> usize {
        1
    }

    fn vector(&self, t: usize, f: usize) -> &[Complex64] {
        self.bin(t, f)
    }
}

/// A spectrogram with the current and `taps - 1` previous frames stacked
/// per frequency. Entry `l * M + m` of the vector at frame `t` is channel
/// `m` at frame `t - l`, or zero when `t < l`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapStack {
    data: Vec<Complex64>,
    frames: usize,
    freq_bins: usize,
    channels: usize,
    taps: usize,
}

impl TapStack {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

impl FrameSource for TapStack {
    fn frames(&self) -> usize {
        self.frames
    }

    fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn taps(&self) -> usize {
        self.taps
    }

    fn vector(&self, t: usize, f: usize) -> &[Complex64] {
        let d = self.channels * self.taps;
        let o = (t * self.freq_bins + f) * d;
        &self.data[o..o + d]
    }
}

pub fn stack_taps(spec: &ComplexSpectrogram, taps: usize) -> Result<TapStack> {
    if taps < 1 {
        return Err(Error::InvalidTaps);
    }
    let (frames, bins, m) = (spec.frames(), spec.freq_bins(), spec.channels());
    let d = m * taps;
    let mut data = vec![Complex64::new(0.0, 0.0); frames * bins * d];
    for t in 0..frames {
        for f in 0..bins {
            let o = (t * bins + f) * d;
            for l in 0..taps.min(t + 1) {
                data[o + l * m..o + (l + 1) * m].copy_from_slice(spec.bin(t - l, f));
            }
        }
    }
    Ok(TapStack {
        data,
        frames,
        freq_bins: bins,
        channels: m,
        taps,
    })
}

/// How a `T x F` mask is extended to a tap stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskTaps {
    /// Every tap block of frame `t` is weighted by the frame-`t` mask.
    #[default]
    Broadcast,
    /// Tap block `l` is weighted by the mask of frame `t - l`; the
    /// normaliser is the per-frame mean of the tap weights.
    Shifted,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovarianceOptions {
    pub mask_taps: MaskTaps,
    /// Accumulate over these frames only; `None` uses the whole utterance.
    pub frames: Option<Range<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Speech,
    Noise,
}

/// One Hermitian `D x D` matrix per frequency, `D = channels * taps`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceStack {
    matrices: Vec<DMatrix<Complex64>>,
    channels: usize,
    taps: usize,
    role: Role,
}

impl CovarianceStack {
    pub fn new(matrices: Vec<DMatrix<Complex64>>, channels: usize, taps: usize, role: Role) -> Result<Self> {
        if taps < 1 {
            return Err(Error::InvalidTaps);
        }
        let d = channels * taps;
        if d == 0 {
            return Err(Error::DimensionMismatch("covariance needs at least one channel".into()));
        }
        if let Some(bad) = matrices.iter().position(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::DimensionMismatch(format!("matrix {bad} is not {d}x{d}")));
        }
        Ok(Self {
            matrices,
            channels,
            taps,
            role,
        })
    }

    pub fn freq_bins(&self) -> usize {
        self.matrices.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn dim(&self) -> usize {
        self.channels * self.taps
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn matrix(&self, f: usize) -> &DMatrix<Complex64> {
        &self.matrices[f]
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    /// Multiplies every matrix by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            matrices: self.matrices.iter().map(|m| m * Complex64::new(c, 0.0)).collect(),
            ..self.clone()
        }
    }

    /// Writes `F x D x D` interleaved complex values, row-major.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let d = self.dim();
        let mut flat = Vec::with_capacity(self.matrices.len() * d * d);
        for m in &self.matrices {
            for i in 0..d {
                for j in 0..d {
                    flat.push(m[(i, j)]);
                }
            }
        }
        io::write_complex_tensor(path, &flat)
    }
}

/// `(A + A^H) / 2`.
pub fn symmetrize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Squared-real-mask weighted covariance.
pub fn covariance_real_mask<S: FrameSource>(
    source: &S,
    mask: &MaskTensor,
    role: Role,
    options: &CovarianceOptions,
) -> Result<CovarianceStack> {
    if !mask.kind().is_real() {
        return Err(Error::MaskKind {
            found: mask.kind(),
            expected: "a real mask (sigmoid or relu)",
        });
    }
    weighted_covariance(source, mask, role, options)
}

/// Complex-mask weighted covariance with `sum |CM|^2` normalisation.
pub fn covariance_complex_mask<S: FrameSource>(
    source: &S,
    mask: &MaskTensor,
    role: Role,
    options: &CovarianceOptions,
) -> Result<CovarianceStack> {
    if mask.kind() != MaskKind::Complex {
        return Err(Error::MaskKind {
            found: mask.kind(),
            expected: "a complex mask",
        });
    }
    weighted_covariance(source, mask, role, options)
}

/// Dispatches on the mask kind.
pub fn covariance<S: FrameSource>(
    source: &S,
    mask: &MaskTensor,
    role: Role,
    options: &CovarianceOptions,
) -> Result<CovarianceStack> {
    match mask.kind() {
        MaskKind::Complex => covariance_complex_mask(source, mask, role, options),
        _ => covariance_real_mask(source, mask, role, options),
    }
}

fn weighted_covariance<S: FrameSource>(
    source: &S,
    mask: &MaskTensor,
    role: Role,
    options: &CovarianceOptions,
) -> Result<CovarianceStack> {
    if mask.frames() != source.frames() || mask.freq_bins() != source.freq_bins() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} mask for a {}x{} source",
            mask.frames(),
            mask.freq_bins(),
            source.frames(),
            source.freq_bins()
        )));
    }
    let range = options.frames.clone().unwrap_or(0..source.frames());
    if range.end > source.frames() || range.start > range.end {
        return Err(Error::DimensionMismatch(format!(
            "frame range {range:?} outside 0..{}",
            source.frames()
        )));
    }
    let (m, taps, d) = (source.channels(), source.taps(), source.dim());

    let matrices = (0..source.freq_bins())
        .into_par_iter()
        .map(|f| {
            let mut acc = vec![Complex64::new(0.0, 0.0); d * d];
            let mut den = 0.0;
            let mut weights = vec![Complex64::new(0.0, 0.0); taps];
            let mut z = vec![Complex64::new(0.0, 0.0); d];
            for t in range.clone() {
                match options.mask_taps {
                    MaskTaps::Broadcast => {
                        let g = mask.get(t, f);
                        weights.fill(g);
                        den += g.norm_sqr();
                    }
                    MaskTaps::Shifted => {
                        let mut w = 0.0;
                        for (l, g) in weights.iter_mut().enumerate() {
                            *g = if t >= l { mask.get(t - l, f) } else { Complex64::new(0.0, 0.0) };
                            w += g.norm_sqr();
                        }
                        den += w / taps as f64;
                    }
                }
                let y = source.vector(t, f);
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi = weights[i / m] * y[i];
                }
                for i in 0..d {
                    for j in i..d {
                        acc[i * d + j] += z[i] * z[j].conj();
                    }
                }
            }
            if den < DENOMINATOR_EPS {
                return DMatrix::zeros(d, d);
            }
            let phi = DMatrix::from_fn(d, d, |i, j| {
                if i <= j {
                    acc[i * d + j] / den
                } else {
                    acc[j * d + i].conj() / den
                }
            });
            symmetrize(&phi)
        })
        .collect();
    CovarianceStack::new(matrices, m, taps, role)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::StftConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg() -> StftConfig {
        StftConfig {
            fft_size: 4,
            window_len: 4,
            hop: 2,
            ..Default::default()
        }
    }

    fn random_spec(rng: &mut ChaCha8Rng, frames: usize, channels: usize) -> ComplexSpectrogram {
        let n = frames * cfg().freq_bins() * channels;
        let data = (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        ComplexSpectrogram::new(data, frames, channels, cfg(), 8, 16000).unwrap()
    }

    fn random_mask(rng: &mut ChaCha8Rng, kind: MaskKind, frames: usize) -> MaskTensor {
        let bins = cfg().freq_bins();
        let vals = (0..frames * bins)
            .map(|_| match kind {
                MaskKind::Complex => c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
                MaskKind::Relu => c(rng.random_range(0.0..3.0), 0.0),
                MaskKind::Sigmoid => c(rng.random_range(0.0..1.0), 0.0),
            })
            .collect();
        MaskTensor::new(kind, frames, bins, vals).unwrap()
    }

    /// Index-by-index reference: builds each stacked vector straight from the
    /// spectrogram and sums outer products with explicit loops.
    fn naive(spec: &ComplexSpectrogram, mask: &MaskTensor, taps: usize) -> Vec<Vec<Vec<Complex64>>> {
        let m = spec.channels();
        let d = m * taps;
        (0..spec.freq_bins())
            .map(|f| {
                let mut num = vec![vec![c(0.0, 0.0); d]; d];
                let mut den = 0.0;
                for t in 0..spec.frames() {
                    let g = mask.get(t, f);
                    let mut ybar = vec![c(0.0, 0.0); d];
                    for l in 0..taps {
                        for ch in 0..m {
                            if t >= l {
                                ybar[l * m + ch] = spec.get(t - l, f, ch);
                            }
                        }
                    }
                    for i in 0..d {
                        for j in 0..d {
                            num[i][j] += (g * ybar[i]) * (g * ybar[j]).conj();
                        }
                    }
                    den += (g.conj() * g).re;
                }
                num.into_iter().map(|row| row.into_iter().map(|v| v / den).collect()).collect()
            })
            .collect()
    }

    fn max_diff(a: &CovarianceStack, b: &[Vec<Vec<Complex64>>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (f, ref_m) in b.iter().enumerate() {
            for (i, row) in ref_m.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    worst = worst.max((a.matrix(f)[(i, j)] - v).norm());
                }
            }
        }
        worst
    }

    fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
        m.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn stack_with_one_tap_is_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = random_spec(&mut rng, 4, 2);
        let st = stack_taps(&spec, 1).unwrap();
        assert_eq!(st.as_slice(), spec.as_slice());
        assert!(matches!(stack_taps(&spec, 0), Err(Error::InvalidTaps)));
    }

    #[test]
    fn stack_two_taps_single_channel() {
        let mut spec = ComplexSpectrogram::zeros(3, 1, cfg(), 8, 16000).unwrap();
        let ys = [c(1.0, 0.0), c(2.0, 1.0), c(3.0, -1.0)];
        for (t, y) in ys.iter().enumerate() {
            spec.set(t, 0, 0, *y);
        }
        let st = stack_taps(&spec, 2).unwrap();
        assert_eq!(st.vector(0, 0), &[ys[0], c(0.0, 0.0)]);
        assert_eq!(st.vector(1, 0), &[ys[1], ys[0]]);
        assert_eq!(st.vector(2, 0), &[ys[2], ys[1]]);
    }

    #[test]
    fn stack_layout_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = random_spec(&mut rng, 5, 2);
        let st = stack_taps(&spec, 3).unwrap();
        assert_eq!(st.dim(), 6);
        for t in 0..5 {
            for f in 0..spec.freq_bins() {
                let v = st.vector(t, f);
                for l in 0..3 {
                    for ch in 0..2 {
                        let expect = if t >= l { spec.get(t - l, f, ch) } else { c(0.0, 0.0) };
                        assert_eq!(v[l * 2 + ch], expect);
                    }
                }
            }
        }
    }

    #[test]
    fn single_frame_real_mask() {
        let mut spec = ComplexSpectrogram::zeros(1, 1, cfg(), 8, 16000).unwrap();
        spec.set(0, 1, 0, c(3.0, 4.0));
        let mask = MaskTensor::ones(MaskKind::Relu, 1, cfg().freq_bins());
        let phi = covariance_real_mask(&spec, &mask, Role::Speech, &Default::default()).unwrap();
        assert!((phi.matrix(1)[(0, 0)] - c(25.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn real_mask_attends_to_weighted_frames() {
        let mut spec = ComplexSpectrogram::zeros(2, 1, cfg(), 8, 16000).unwrap();
        spec.set(0, 0, 0, c(1.0, 1.0));
        spec.set(1, 0, 0, c(5.0, 0.0));
        let bins = cfg().freq_bins();
        let mut vals = vec![0.0; 2 * bins];
        vals[0] = 1.0;
        let mask = MaskTensor::from_real(MaskKind::Relu, 2, bins, &vals).unwrap();
        let phi = covariance_real_mask(&spec, &mask, Role::Speech, &Default::default()).unwrap();
        assert!((phi.matrix(0)[(0, 0)] - c(2.0, 0.0)).norm() < 1e-12);
        // Bins with an all-zero mask get the zero matrix.
        assert_eq!(phi.matrix(1)[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn complex_mask_magnitude_cancels_for_one_frame() {
        let mut spec = ComplexSpectrogram::zeros(1, 1, cfg(), 8, 16000).unwrap();
        spec.set(0, 0, 0, c(1.0, -2.0));
        let bins = cfg().freq_bins();
        let mut vals = vec![c(0.0, 0.0); bins];
        vals[0] = c(-0.3, 7.0);
        let mask = MaskTensor::new(MaskKind::Complex, 1, bins, vals).unwrap();
        let phi = covariance_complex_mask(&spec, &mask, Role::Speech, &Default::default()).unwrap();
        assert!((phi.matrix(0)[(0, 0)] - c(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn complex_mask_attends_to_weighted_frames() {
        let mut spec = ComplexSpectrogram::zeros(2, 1, cfg(), 8, 16000).unwrap();
        spec.set(0, 0, 0, c(0.0, 2.0));
        spec.set(1, 0, 0, c(9.0, 9.0));
        let bins = cfg().freq_bins();
        let mut vals = vec![c(0.0, 0.0); 2 * bins];
        vals[0] = c(1.0, 0.0);
        let mask = MaskTensor::new(MaskKind::Complex, 2, bins, vals).unwrap();
        let phi = covariance_complex_mask(&spec, &mask, Role::Speech, &Default::default()).unwrap();
        assert!((phi.matrix(0)[(0, 0)] - c(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = random_spec(&mut rng, 8, 3);
        for kind in [MaskKind::Relu, MaskKind::Sigmoid, MaskKind::Complex] {
            let mask = random_mask(&mut rng, kind, 8);
            for taps in 1..=3 {
                let st = stack_taps(&spec, taps).unwrap();
                let phi = covariance(&st, &mask, Role::Speech, &Default::default()).unwrap();
                assert!(max_diff(&phi, &naive(&spec, &mask, taps)) < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_kind_and_shape_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_spec(&mut rng, 4, 2);
        let cm = random_mask(&mut rng, MaskKind::Complex, 4);
        let rm = random_mask(&mut rng, MaskKind::Relu, 4);
        let o = CovarianceOptions::default();
        assert!(matches!(covariance_real_mask(&spec, &cm, Role::Speech, &o), Err(Error::MaskKind { .. })));
        assert!(matches!(covariance_complex_mask(&spec, &rm, Role::Speech, &o), Err(Error::MaskKind { .. })));
        let short = random_mask(&mut rng, MaskKind::Complex, 3);
        assert!(matches!(covariance(&spec, &short, Role::Speech, &o), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn unit_mask_gives_sample_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = random_spec(&mut rng, 6, 2);
        let phi = covariance(&spec, &MaskTensor::ones(MaskKind::Complex, 6, 3), Role::Noise, &Default::default()).unwrap();
        for f in 0..3 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = c(0.0, 0.0);
                    for t in 0..6 {
                        s += spec.get(t, f, i) * spec.get(t, f, j).conj();
                    }
                    assert!((phi.matrix(f)[(i, j)] - s / 6.0).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn frame_range_restricts_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = random_spec(&mut rng, 6, 2);
        let mask = random_mask(&mut rng, MaskKind::Complex, 6);
        let opts = CovarianceOptions {
            frames: Some(2..4),
            ..Default::default()
        };
        let phi = covariance(&spec, &mask, Role::Speech, &opts).unwrap();
        let mut zeroed = mask.values().to_vec();
        for t in (0..2).chain(4..6) {
            for f in 0..3 {
                zeroed[t * 3 + f] = c(0.0, 0.0);
            }
        }
        let reference = MaskTensor::new(MaskKind::Complex, 6, 3, zeroed).unwrap();
        assert!(max_diff(&phi, &naive(&spec, &reference, 1)) < 1e-12);
        let bad = CovarianceOptions {
            frames: Some(4..9),
            ..Default::default()
        };
        assert!(covariance(&spec, &mask, Role::Speech, &bad).is_err());
    }

    #[test]
    fn shifted_mask_weights_each_tap_by_its_own_frame() {
        let mut spec = ComplexSpectrogram::zeros(2, 1, cfg(), 8, 16000).unwrap();
        spec.set(0, 0, 0, c(1.0, 0.0));
        spec.set(1, 0, 0, c(2.0, 0.0));
        let mut vals = vec![c(0.0, 0.0); 6];
        vals[0] = c(3.0, 0.0);
        vals[3] = c(1.0, 0.0);
        let mask = MaskTensor::new(MaskKind::Complex, 2, 3, vals).unwrap();
        let st = stack_taps(&spec, 2).unwrap();
        let opts = CovarianceOptions {
            mask_taps: MaskTaps::Shifted,
            frames: None,
        };
        let phi = covariance(&st, &mask, Role::Speech, &opts).unwrap();
        // t=0: z = [3*1, 0], t=1: z = [1*2, 3*1]; den = 9/2 + (1 + 9)/2 = 9.5
        let den = 9.5;
        assert!((phi.matrix(0)[(0, 0)] - c(13.0 / den, 0.0)).norm() < 1e-12);
        assert!((phi.matrix(0)[(0, 1)] - c(6.0 / den, 0.0)).norm() < 1e-12);
        assert!((phi.matrix(0)[(1, 1)] - c(9.0 / den, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn binary_dump_has_f_d_d_layout() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(2, 2, |i, j| c(i as f64, j as f64));
        let stack = CovarianceStack::new(vec![m.clone(), m], 2, 1, Role::Speech).unwrap();
        let path = dir.path().join("phi.bin");
        stack.write(&path).unwrap();
        let back = io::read_complex_tensor(&path).unwrap();
        assert_eq!(back.len(), 8);
        assert_eq!(back[1], c(0.0, 1.0));
        assert_eq!(back[2], c(1.0, 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn hermitian_and_psd(seed in any::<u64>(), taps in 1usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let spec = random_spec(&mut rng, 7, 2);
                let mask = random_mask(&mut rng, MaskKind::Complex, 7);
                let phi = covariance(&stack_taps(&spec, taps).unwrap(), &mask, Role::Speech, &Default::default()).unwrap();
                for m in phi.matrices() {
                    prop_assert_eq!(m, &m.adjoint());
                    let tr = m.trace().re;
                    prop_assert!(min_eigenvalue(m) >= -1e-8 * tr);
                }
            }

            #[test]
            fn invariant_to_mask_phase_and_scale(seed in any::<u64>(), phase in -3.2f64..3.2, scale in 0.01f64..100.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let spec = random_spec(&mut rng, 7, 3);
                let mask = random_mask(&mut rng, MaskKind::Complex, 7);
                let g = Complex64::from_polar(scale, phase);
                let rotated = MaskTensor::new(MaskKind::Complex, 7, 3, mask.values().iter().map(|v| v * g).collect()).unwrap();
                let st = stack_taps(&spec, 2).unwrap();
                let a = covariance(&st, &mask, Role::Speech, &Default::default()).unwrap();
                let b = covariance(&st, &rotated, Role::Speech, &Default::default()).unwrap();
                for (x, y) in a.matrices().iter().zip(b.matrices()) {
                    prop_assert!((x - y).norm() <= 1e-10 * x.norm().max(1.0));
                }
            }

            #[test]
            fn one_tap_stack_equals_plain(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let spec = random_spec(&mut rng, 5, 3);
                let mask = random_mask(&mut rng, MaskKind::Complex, 5);
                let plain = covariance(&spec, &mask, Role::Speech, &Default::default()).unwrap();
                let stacked = covariance(&stack_taps(&spec, 1).unwrap(), &mask, Role::Speech, &Default::default()).unwrap();
                prop_assert_eq!(plain, stacked);
            }
        }
    }
}
