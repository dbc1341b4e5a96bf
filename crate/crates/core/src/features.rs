//! Array geometry, far-field steering vectors, inter-microphone phase
//! differences and the location-guided directional feature.
//!
//! Directions are azimuths in degrees, measured in the x-y plane from the
//! +x axis. A plane wave arriving from azimuth `theta` reaches microphone `m`
//! with a delay `tau_m = -(p_m - p_ref) . e(theta) / c` relative to the
//! reference microphone, where `e(theta) = (cos theta, sin theta, 0)` points
//! toward the source. The steering entry is `exp(-j 2 pi f tau_m)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ComplexSpectrogram, StftConfig};

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Gaps between neighbouring elements of the default 15-microphone array, in cm.
pub const DEFAULT_SPACINGS_CM: [f64; 14] = [8.0, 6.0, 6.0, 4.0, 4.0, 2.0, 2.0, 2.0, 2.0, 4.0, 4.0, 6.0, 6.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Microphone positions in metres.
    pub positions: Vec<[f64; 3]>,
    /// Metres per second.
    pub sound_speed: f64,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>, sound_speed: f64) -> Result<Self> {
        let g = Self { positions, sound_speed };
        g.validate()?;
        Ok(g)
    }

    /// Microphones on the x axis at the given offsets.
    pub fn linear(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| [x, 0.0, 0.0]).collect(), SPEED_OF_SOUND)
    }

    /// The default non-uniform symmetric 15-element line array, centred on
    /// the origin.
    pub fn default_linear() -> Self {
        let mut xs = vec![0.0];
        for gap in DEFAULT_SPACINGS_CM {
            xs.push(xs.last().unwrap() + gap / 100.0);
        }
        let centre = xs.last().unwrap() / 2.0;
        Self::linear(&xs.iter().map(|x| x - centre).collect::<Vec<_>>()).expect("default geometry is valid")
    }

    /// The same array translated so its origin sits at `centre`.
    pub fn translated(&self, centre: [f64; 3]) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .map(|p| [p[0] + centre[0], p[1] + centre[1], p[2] + centre[2]])
                .collect(),
            sound_speed: self.sound_speed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::InvalidGeometry("no microphones".into()));
        }
        if !(self.sound_speed > 0.0 && self.sound_speed.is_finite()) {
            return Err(Error::InvalidGeometry(format!("sound speed {}", self.sound_speed)));
        }
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite position".into()));
        }
        for (i, a) in self.positions.iter().enumerate() {
            for (j, b) in self.positions.iter().enumerate().skip(i + 1) {
                if distance(a, b) < 1e-9 {
                    return Err(Error::InvalidGeometry(format!("microphones {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn num_mics(&self) -> usize {
        self.positions.len()
    }

    /// True when every microphone lies on a line parallel to the x axis.
    pub fn is_linear(&self) -> bool {
        let p0 = self.positions[0];
        self.positions.iter().all(|p| p[1] == p0[1] && p[2] == p0[2])
    }

    fn check_doa(&self, theta_deg: f64) -> Result<()> {
        let ok = theta_deg.is_finite() && (!self.is_linear() || (0.0..=180.0).contains(&theta_deg));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDoa(theta_deg))
        }
    }

    /// Plane-wave arrival delay of each microphone relative to `ref_channel`, in seconds.
    pub fn relative_delays(&self, theta_deg: f64, ref_channel: usize) -> Result<Vec<f64>> {
        self.check_doa(theta_deg)?;
        if ref_channel >= self.num_mics() {
            return Err(Error::ChannelOutOfRange {
                index: ref_channel,
                channels: self.num_mics(),
            });
        }
        let th = theta_deg.to_radians();
        let dir = [th.cos(), th.sin(), 0.0];
        let r = self.positions[ref_channel];
        Ok(self
            .positions
            .iter()
            .map(|p| -((p[0] - r[0]) * dir[0] + (p[1] - r[1]) * dir[1] + (p[2] - r[2]) * dir[2]) / self.sound_speed)
            .collect())
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Unit-modulus `F x M` plane-wave response, equal to one at the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    values: Vec<Complex64>,
    freq_bins: usize,
    mics: usize,
    doa_deg: f64,
}

impl SteeringVector {
    pub fn get(&self, f: usize, m: usize) -> Complex64 {
        self.values[f * self.mics + m]
    }

    pub fn at(&self, f: usize) -> &[Complex64] {
        &self.values[f * self.mics..(f + 1) * self.mics]
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn mics(&self) -> usize {
        self.mics
    }

    pub fn doa_deg(&self) -> f64 {
        self.doa_deg
    }
}

pub fn steering_vector(
    geom: &ArrayGeometry,
    theta_deg: f64,
    config: &StftConfig,
    sample_rate: u32,
    ref_channel: usize,
) -> Result<SteeringVector> {
    let delays = geom.relative_delays(theta_deg, ref_channel)?;
    let bins = config.freq_bins();
    let mut values = Vec::with_capacity(bins * delays.len());
    for f in 0..bins {
        let hz = config.bin_frequency(f, sample_rate);
        for &tau in &delays {
            values.push(Complex64::from_polar(1.0, -2.0 * PI * hz * tau));
        }
    }
    Ok(SteeringVector {
        values,
        freq_bins: bins,
        mics: delays.len(),
        doa_deg: theta_deg,
    })
}

/// A real `T x F` feature plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub frames: usize,
    pub freq_bins: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.freq_bins + f]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut r = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

fn check_pair(spec: &ComplexSpectrogram, (i, j): (usize, usize)) -> Result<()> {
    for idx in [i, j] {
        if idx >= spec.channels() {
            return Err(Error::ChannelOutOfRange {
                index: idx,
                channels: spec.channels(),
            });
        }
    }
    if i == j {
        return Err(Error::InvalidGeometry(format!("pair ({i}, {j}) uses the same channel twice")));
    }
    Ok(())
}

/// `angle(Y_i conj(Y_j))` in `(-pi, pi]`; zero where either bin is zero.
pub fn ipd(spec: &ComplexSpectrogram, pair: (usize, usize)) -> Result<FeatureMap> {
    check_pair(spec, pair)?;
    let (i, j) = pair;
    let mut values = Vec::with_capacity(spec.frames() * spec.freq_bins());
    for t in 0..spec.frames() {
        for f in 0..spec.freq_bins() {
            let z = spec.get(t, f, i) * spec.get(t, f, j).conj();
            values.push(if z.re == 0.0 && z.im == 0.0 { 0.0 } else { wrap_phase(z.arg()) });
        }
    }
    Ok(FeatureMap {
        frames: spec.frames(),
        freq_bins: spec.freq_bins(),
        values,
    })
}

/// Every `(m, ref_channel)` pair with `m != ref_channel`.
pub fn reference_pairs(mics: usize, ref_channel: usize) -> Vec<(usize, usize)> {
    (0..mics).filter(|&m| m != ref_channel).map(|m| (m, ref_channel)).collect()
}

/// Mean over `pairs` of `cos(IPD - steering phase difference)`, in `[-1, 1]`.
pub fn directional_feature(
    spec: &ComplexSpectrogram,
    geom: &ArrayGeometry,
    theta_deg: f64,
    pairs: &[(usize, usize)],
) -> Result<FeatureMap> {
    if pairs.is_empty() {
        return Err(Error::InvalidGeometry("directional feature needs at least one pair".into()));
    }
    if geom.num_mics() != spec.channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} microphones in the geometry, {} channels in the spectrogram",
            geom.num_mics(),
            spec.channels()
        )));
    }
    let sv = steering_vector(geom, theta_deg, spec.config(), spec.sample_rate(), 0)?;
    let (frames, bins) = (spec.frames(), spec.freq_bins());
    let mut acc = vec![0.0; frames * bins];
    for &pair in pairs {
        let phase = ipd(spec, pair)?;
        let (i, j) = pair;
        for f in 0..bins {
            let expected = (sv.get(f, i) * sv.get(f, j).conj()).arg();
            for t in 0..frames {
                acc[t * bins + f] += (phase.get(t, f) - expected).cos();
            }
        }
    }
    let n = pairs.len() as f64;
    Ok(FeatureMap {
        frames,
        freq_bins: bins,
        values: acc.into_iter().map(|v| (v / n).clamp(-1.0, 1.0)).collect(),
    })
}
