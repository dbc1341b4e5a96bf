//! Time-domain signals, complex spectrograms and the STFT/iSTFT pair.
//!
//! Frames are centred: the signal is reflection-padded by `window_len / 2`
//! on both sides so that frame `t` is centred on sample `t * hop`. Synthesis
//! overlap-adds the windowed inverse transforms and divides by the summed
//! squared window, which reconstructs the input exactly wherever that sum is
//! non-zero.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multichannel real waveform. All channels share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl TimeSignal {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidSignal("at least one channel is required".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != len) {
            return Err(Error::InvalidSignal(format!(
                "channel {bad} has {} samples, channel 0 has {len}",
                channels[bad].len()
            )));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; num_channels], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// A single-channel copy of channel `index`.
    pub fn select(&self, index: usize) -> Result<TimeSignal> {
        if index >= self.num_channels() {
            return Err(Error::ChannelOutOfRange {
                index,
                channels: self.num_channels(),
            });
        }
        TimeSignal::mono(self.channels[index].clone(), self.sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    #[default]
    Hann,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// Framing parameters. The default is a 512-point transform over a 32 ms
/// Hann window at 16 kHz with 50% overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 512,
            window_len: 512,
            hop: 256,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.window_len == 0 || self.hop == 0 {
            return Err(Error::InvalidConfig("sizes must be positive".into()));
        }
        if self.window_len > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "window length {} exceeds FFT size {}",
                self.window_len, self.fft_size
            )));
        }
        if !self.window_len.is_multiple_of(self.hop) {
            return Err(Error::InvalidConfig(format!(
                "hop {} does not divide window length {}",
                self.hop, self.window_len
            )));
        }
        if !self.fft_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig("FFT size must be even".into()));
        }
        Ok(())
    }

    /// Number of stored (non-negative frequency) bins.
    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames produced for a signal of `len` samples: `1 + ceil(len / hop)`.
    pub fn frame_count(&self, len: usize) -> usize {
        1 + len.div_ceil(self.hop)
    }

    /// Centre frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, bin: usize, sample_rate: u32) -> f64 {
        bin as f64 * sample_rate as f64 / self.fft_size as f64
    }

    fn pad(&self) -> usize {
        self.window_len / 2
    }
}

/// A `T x F x M` complex tensor of STFT coefficients.
///
/// Layout is frame-major with channels innermost, so [`bin`](Self::bin)
/// returns the `M`-vector observed at one time-frequency point.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    frames: usize,
    freq_bins: usize,
    channels: usize,
    config: StftConfig,
    signal_len: usize,
    sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn new(
        data: Vec<Complex64>,
        frames: usize,
        channels: usize,
        config: StftConfig,
        signal_len: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        config.validate()?;
        let freq_bins = config.freq_bins();
        if channels == 0 {
            return Err(Error::DimensionMismatch("spectrogram needs at least one channel".into()));
        }
        if data.len() != frames * freq_bins * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not fill {frames}x{freq_bins}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            frames,
            freq_bins,
            channels,
            config,
            signal_len,
            sample_rate,
        })
    }

    pub fn zeros(
        frames: usize,
        channels: usize,
        config: StftConfig,
        signal_len: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let n = frames * config.freq_bins() * channels;
        Self::new(vec![Complex64::new(0.0, 0.0); n], frames, channels, config, signal_len, sample_rate)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Length in samples of the signal this spectrogram was analysed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn offset(&self, t: usize, f: usize) -> usize {
        (t * self.freq_bins + f) * self.channels
    }

    pub fn get(&self, t: usize, f: usize, m: usize) -> Complex64 {
        self.data[self.offset(t, f) + m]
    }

    pub fn set(&mut self, t: usize, f: usize, m: usize, value: Complex64) {
        let o = self.offset(t, f);
        self.data[o + m] = value;
    }

    /// The channel vector `Y(t, f)`.
    pub fn bin(&self, t: usize, f: usize) -> &[Complex64] {
        let o = self.offset(t, f);
        &self.data[o..o + self.channels]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// A single-channel spectrogram holding channel `m`.
    pub fn channel(&self, m: usize) -> Result<ComplexSpectrogram> {
        if m >= self.channels {
            return Err(Error::ChannelOutOfRange {
                index: m,
                channels: self.channels,
            });
        }
        let data = self.data.iter().skip(m).step_by(self.channels).copied().collect();
        Self::new(data, self.frames, 1, self.config, self.signal_len, self.sample_rate)
    }

    /// Same shape, metadata and channel count as `self`, with values from `f(t, f, m)`.
    pub fn map_indexed(&self, mut func: impl FnMut(usize, usize, usize) -> Complex64) -> Self {
        let mut out = self.clone();
        for t in 0..self.frames {
            for f in 0..self.freq_bins {
                for m in 0..self.channels {
                    out.set(t, f, m, func(t, f, m));
                }
            }
        }
        out
    }

    /// Checks that `other` has the same `T` and `F`.
    pub fn check_same_grid(&self, other: &ComplexSpectrogram) -> Result<()> {
        if self.frames != other.frames || self.freq_bins != other.freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} grid vs {}x{} grid",
                self.frames, self.freq_bins, other.frames, other.freq_bins
            )));
        }
        Ok(())
    }

    /// Largest magnitude on channel `m`.
    pub fn max_magnitude(&self, m: usize) -> f64 {
        self.data
            .iter()
            .skip(m)
            .step_by(self.channels)
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Reflect index `i` into `0..len` without repeating the edge sample.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut r = i.rem_euclid(period);
    if r >= len as isize {
        r = period - r;
    }
    r as usize
}

/// Short-time Fourier transform of every channel.
pub fn stft(signal: &TimeSignal, config: &StftConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let len = signal.len();
    let frames = config.frame_count(len);
    let bins = config.freq_bins();
    let channels = signal.num_channels();
    let window = config.window.coefficients(config.window_len);
    let pad = config.pad() as isize;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(config.fft_size);

    let mut data = vec![Complex64::new(0.0, 0.0); frames * bins * channels];
    let mut buf = vec![Complex64::new(0.0, 0.0); config.fft_size];
    for (m, x) in signal.channels().iter().enumerate() {
        for t in 0..frames {
            buf.fill(Complex64::new(0.0, 0.0));
            let start = (t * config.hop) as isize - pad;
            for (n, w) in window.iter().enumerate() {
                buf[n] = Complex64::new(w * x[reflect(start + n as isize, len)], 0.0);
            }
            fft.process(&mut buf);
            for f in 0..bins {
                data[(t * bins + f) * channels + m] = buf[f];
            }
        }
    }
    ComplexSpectrogram::new(data, frames, channels, *config, len, signal.sample_rate())
}

/// Inverse STFT by weighted overlap-add, trimmed to the analysed length.
pub fn istft(spec: &ComplexSpectrogram) -> Result<TimeSignal> {
    let config = spec.config();
    config.validate()?;
    let n_fft = config.fft_size;
    let pad = config.pad();
    let window = config.window.coefficients(config.window_len);
    let padded_len = (spec.frames().max(1) - 1) * config.hop + config.window_len;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);

    let mut norm = vec![0.0; padded_len];
    for t in 0..spec.frames() {
        for (n, w) in window.iter().enumerate() {
            norm[t * config.hop + n] += w * w;
        }
    }
    let out_len = spec.signal_len();
    let peak = norm.iter().cloned().fold(0.0, f64::max);
    for n in 0..out_len {
        let p = n + pad;
        if p >= padded_len || norm[p] <= 1e-10 * peak {
            return Err(Error::NotInvertible(n));
        }
    }

    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut channels = Vec::with_capacity(spec.channels());
    for m in 0..spec.channels() {
        let mut acc = vec![0.0; padded_len];
        for t in 0..spec.frames() {
            for k in 0..spec.freq_bins() {
                buf[k] = spec.get(t, k, m);
            }
            for k in spec.freq_bins()..n_fft {
                buf[k] = buf[n_fft - k].conj();
            }
            ifft.process(&mut buf);
            let base = t * config.hop;
            for (n, w) in window.iter().enumerate() {
                acc[base + n] += w * buf[n].re / n_fft as f64;
            }
        }
        channels.push((0..out_len).map(|n| acc[n + pad] / norm[n + pad]).collect());
    }
    TimeSignal::new(channels, spec.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> TimeSignal {
        let ch = (0..channels)
            .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        TimeSignal::new(ch, 16000).unwrap()
    }

    fn interior_rel_error(x: &[f64], y: &[f64], margin: usize) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for n in margin..x.len() - margin {
            num += (x[n] - y[n]).powi(2);
            den += x[n] * x[n];
        }
        (num / den).sqrt()
    }

    #[test]
    fn signal_rejects_ragged_channels() {
        assert!(TimeSignal::new(vec![vec![0.0; 3], vec![0.0; 4]], 16000).is_err());
        assert!(TimeSignal::new(vec![vec![0.0; 3]], 0).is_err());
        assert!(TimeSignal::new(vec![], 16000).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = StftConfig {
            fft_size: 256,
            window_len: 512,
            hop: 256,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad_hop = StftConfig {
            hop: 200,
            ..Default::default()
        };
        assert!(bad_hop.validate().is_err());
        assert!(StftConfig::default().validate().is_ok());
    }

    #[test]
    fn empty_signal_is_rejected() {
        let s = TimeSignal::mono(vec![], 16000).unwrap();
        assert!(matches!(stft(&s, &StftConfig::default()), Err(Error::EmptySignal)));
    }

    #[test]
    fn window_longer_than_fft_is_rejected() {
        let s = TimeSignal::mono(vec![0.0; 1000], 16000).unwrap();
        let cfg = StftConfig {
            fft_size: 256,
            window_len: 512,
            hop: 256,
            ..Default::default()
        };
        assert!(stft(&s, &cfg).is_err());
    }

    #[test]
    fn bin_centred_cosine_stays_in_its_bin() {
        let cfg = StftConfig::default();
        let k = 40;
        let x: Vec<f64> = (0..8000)
            .map(|n| (2.0 * PI * k as f64 * n as f64 / cfg.fft_size as f64).cos())
            .collect();
        let spec = stft(&TimeSignal::mono(x, 16000).unwrap(), &cfg).unwrap();
        for t in 2..spec.frames() - 3 {
            let peak = spec.get(t, k, 0).norm();
            let largest = (0..spec.freq_bins())
                .max_by(|&a, &b| spec.get(t, a, 0).norm().total_cmp(&spec.get(t, b, 0).norm()))
                .unwrap();
            assert_eq!(largest, k);
            // A periodic Hann main lobe spans k-1..=k+1; everything else is leakage.
            for f in (0..spec.freq_bins()).filter(|f| f.abs_diff(k) > 1) {
                let rel_db = 20.0 * (spec.get(t, f, 0).norm() / peak).log10();
                assert!(rel_db <= -60.0, "frame {t} bin {f}: {rel_db} dB");
            }
        }
    }

    #[test]
    fn zeros_in_zeros_out() {
        let cfg = StftConfig::default();
        let spec = stft(&TimeSignal::zeros(2, 300, 16000).unwrap(), &cfg).unwrap();
        assert!(spec.frames() >= 1);
        assert!(spec.as_slice().iter().all(|z| z.norm() == 0.0));
        let back = istft(&spec).unwrap();
        assert_eq!(back.len(), 300);
        assert!(back.channels().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_follows_framing_rule() {
        let cfg = StftConfig::default();
        // 16000 / 256 = 62.5 -> 63, plus the frame centred on sample 0.
        assert_eq!(cfg.frame_count(16000), 64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = stft(&random_signal(&mut rng, 1, 16000), &cfg).unwrap();
        assert_eq!(spec.frames(), 64);
        assert_eq!(spec.freq_bins(), 257);
    }

    #[test]
    fn round_trip_interior() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_signal(&mut rng, 1, 16000);
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(interior_rel_error(x.channel(0), y.channel(0), cfg.window_len) < 1e-6);
        // Reflection padding makes the edges exact as well.
        assert!(interior_rel_error(x.channel(0), y.channel(0), 0) < 1e-6);
    }

    #[test]
    fn multichannel_round_trip_matches_per_channel() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_signal(&mut rng, 3, 5000);
        let joint = istft(&stft(&x, &cfg).unwrap()).unwrap();
        for m in 0..3 {
            let single = istft(&stft(&x.select(m).unwrap(), &cfg).unwrap()).unwrap();
            assert_eq!(single.channel(0), joint.channel(m));
        }
    }

    #[test]
    fn non_cola_hop_is_not_invertible() {
        let cfg = StftConfig {
            hop: 512,
            ..Default::default()
        };
        let spec = stft(&TimeSignal::mono(vec![0.1; 2000], 16000).unwrap(), &cfg).unwrap();
        assert!(matches!(istft(&spec), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn short_signals_and_other_configs_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for cfg in [
            StftConfig {
                fft_size: 256,
                window_len: 128,
                hop: 32,
                ..Default::default()
            },
            StftConfig::default(),
        ] {
            for len in [1, 7, 300, 1001] {
                let x = random_signal(&mut rng, 1, len);
                let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
                let err: f64 = x.channel(0).iter().zip(y.channel(0)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-9, "len {len}: {err}");
            }
        }
    }

    #[test]
    fn energy_ratio_is_stable() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ratios: Vec<f64> = (0..8)
            .map(|_| {
                let x = random_signal(&mut rng, 1, 32000);
                let spec = stft(&x, &cfg).unwrap();
                let mut e = 0.0;
                for t in 0..spec.frames() {
                    for f in 0..spec.freq_bins() {
                        let w = if f == 0 || f == cfg.fft_size / 2 { 1.0 } else { 2.0 };
                        e += w * spec.get(t, f, 0).norm_sqr();
                    }
                }
                e / x.channel(0).iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        // N * mean(w^2(n) + w^2(n + N/2)) = 512 * 3/4
        assert!((mean / 384.0 - 1.0).abs() < 0.02, "{mean}");
        for r in &ratios {
            assert!((r / mean - 1.0).abs() < 0.02);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn stft_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let cfg = StftConfig::default();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random_signal(&mut rng, 1, 1500);
                let y = random_signal(&mut rng, 1, 1500);
                let z: Vec<f64> = x.channel(0).iter().zip(y.channel(0)).map(|(p, q)| a * p + b * q).collect();
                let sx = stft(&x, &cfg).unwrap();
                let sy = stft(&y, &cfg).unwrap();
                let sz = stft(&TimeSignal::mono(z, 16000).unwrap(), &cfg).unwrap();
                for i in 0..sz.as_slice().len() {
                    let expect = sx.as_slice()[i] * a + sy.as_slice()[i] * b;
                    prop_assert!((sz.as_slice()[i] - expect).norm() < 1e-9);
                }
            }

            #[test]
            fn round_trip_is_exact(seed in any::<u64>(), len in 600usize..4000) {
                let cfg = StftConfig::default();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random_signal(&mut rng, 2, len);
                let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
                for m in 0..2 {
                    prop_assert!(interior_rel_error(x.channel(m), y.channel(m), 0) < 1e-6);
                }
            }
        }
    }
}
