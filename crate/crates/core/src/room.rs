//! Image-source room simulation and mixture construction.
//!
//! Rooms are rectangular boxes `[0, Lx] x [0, Ly] x [0, Lz]`. Each image of
//! a source contributes an impulse of amplitude
//! `prod(beta_wall^hits) / (4 pi d)` at delay `d / c`, where
//! `beta = sqrt(1 - absorption)`. Fractional delays use an 81-tap
//! Hann-windowed sinc kernel normalised to unit DC gain.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::{distance, ArrayGeometry, SPEED_OF_SOUND};
use crate::signal::TimeSignal;

/// Half-width of the fractional-delay kernel; the kernel has `2 * 40 + 1` taps.
pub const KERNEL_HALF_WIDTH: i64 = 40;

/// Angular separation between the target and the other talkers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AngleBucket {
    #[serde(rename = "0-15")]
    UpTo15,
    #[serde(rename = "15-45")]
    UpTo45,
    #[serde(rename = "45-90")]
    UpTo90,
    #[serde(rename = "90-180")]
    UpTo180,
}

impl AngleBucket {
    pub const ALL: [AngleBucket; 4] = [Self::UpTo15, Self::UpTo45, Self::UpTo90, Self::UpTo180];

    /// Half-open separation range in degrees (the last bucket includes 180).
    pub fn range(self) -> (f64, f64) {
        match self {
            Self::UpTo15 => (0.0, 15.0),
            Self::UpTo45 => (15.0, 45.0),
            Self::UpTo90 => (45.0, 90.0),
            Self::UpTo180 => (90.0, 180.0),
        }
    }

    pub fn contains(self, sep: f64) -> bool {
        let (lo, hi) = self.range();
        sep >= lo && (sep < hi || (self == Self::UpTo180 && sep <= hi))
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::UpTo15 => "0-15",
            Self::UpTo45 => "15-45",
            Self::UpTo90 => "45-90",
            Self::UpTo180 => "90-180",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseKind {
    /// Independent white Gaussian noise on every microphone.
    #[default]
    White,
    /// White Gaussian noise radiated from a point in the room.
    Point { position: [f64; 3] },
}

/// Descriptive fields carried along for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SceneMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_bucket: Option<AngleBucket>,
    /// Azimuth of each source seen from the array centre, target first.
    #[serde(default)]
    pub doa_deg: Vec<f64>,
    /// Separation of each interferer from the target.
    #[serde(default)]
    pub separation_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub id: String,
    pub room_dims: [f64; 3],
    /// Target first, then interferers.
    pub source_positions: Vec<[f64; 3]>,
    pub mic_positions: Vec<[f64; 3]>,
    pub reflection_order: usize,
    /// Per-wall absorption in `(0, 1]`: `x = 0, x = Lx, y = 0, y = Ly, z = 0, z = Lz`.
    pub absorption: [f64; 6],
    pub sample_rate: u32,
    #[serde(default = "default_sound_speed")]
    pub sound_speed: f64,
    pub sir_db: f64,
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default)]
    pub ref_channel: usize,
    pub duration_s: f64,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub meta: SceneMeta,
}

fn default_sound_speed() -> f64 {
    SPEED_OF_SOUND
}

impl SceneConfig {
    fn inside(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|i| p[i] > 0.0 && p[i] < self.room_dims[i])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScene(format!("{}: {msg}", self.id)));
        if self.room_dims.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad(format!("room dimensions {:?}", self.room_dims));
        }
        if self.source_positions.is_empty() {
            return bad("no sources".into());
        }
        if self.mic_positions.is_empty() {
            return bad("no microphones".into());
        }
        for (i, p) in self.source_positions.iter().enumerate() {
            if !self.inside(p) {
                return bad(format!("source {i} at {p:?} is outside the room"));
            }
        }
        for (i, p) in self.mic_positions.iter().enumerate() {
            if !self.inside(p) {
                return bad(format!("microphone {i} at {p:?} is outside the room"));
            }
        }
        if let NoiseKind::Point { position } = &self.noise {
            if !self.inside(position) {
                return bad(format!("noise source at {position:?} is outside the room"));
            }
        }
        if self.absorption.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return bad(format!("absorption {:?} outside (0, 1]", self.absorption));
        }
        if self.sample_rate == 0 || !(self.sound_speed > 0.0) {
            return bad("sample rate and sound speed must be positive".into());
        }
        if !self.sir_db.is_finite() || !self.snr_db.is_finite() {
            return bad("SIR and SNR must be finite".into());
        }
        if self.ref_channel >= self.mic_positions.len() {
            return bad(format!("reference channel {} out of range", self.ref_channel));
        }
        if !(self.duration_s > 0.0) {
            return bad("duration must be positive".into());
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    /// Talkers in the scene, target included.
    pub fn speakers(&self) -> usize {
        self.source_positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    /// Product of wall reflection coefficients along the path.
    pub reflection_gain: f64,
    pub order: usize,
}

/// Every image of `source` up to `config.reflection_order` reflections.
pub fn image_sources(config: &SceneConfig, source: &[f64; 3]) -> Vec<ImageSource> {
    let n = config.reflection_order as i64;
    let beta: Vec<f64> = config.absorption.iter().map(|a| (1.0 - a).sqrt()).collect();
    let mut out = Vec::new();
    for mx in -n..=n {
        for my in -n..=n {
            for mz in -n..=n {
                for q in 0..8i64 {
                    let parity = [q & 1, (q >> 1) & 1, (q >> 2) & 1];
                    let m = [mx, my, mz];
                    let order: i64 = (0..3).map(|i| (2 * m[i] - parity[i]).abs()).sum();
                    if order > n {
                        continue;
                    }
                    let mut position = [0.0; 3];
                    let mut gain = 1.0;
                    for i in 0..3 {
                        position[i] = (1 - 2 * parity[i]) as f64 * source[i] + 2.0 * m[i] as f64 * config.room_dims[i];
                        gain *= beta[2 * i].powi((m[i] - parity[i]).abs() as i32) * beta[2 * i + 1].powi(m[i].abs() as i32);
                    }
                    out.push(ImageSource {
                        position,
                        reflection_gain: gain,
                        order: order as usize,
                    });
                }
            }
        }
    }
    out
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Adds `amplitude` delayed by `delay` samples into `out`.
fn add_fractional_impulse(out: &mut [f64], delay: f64, amplitude: f64) {
    let centre = delay.round() as i64;
    let half = KERNEL_HALF_WIDTH;
    let width = (half + 1) as f64;
    let mut taps = [0.0; (2 * KERNEL_HALF_WIDTH + 1) as usize];
    for (k, tap) in (-half..=half).zip(taps.iter_mut()) {
        let x = (centre + k) as f64 - delay;
        *tap = sinc(x) * 0.5 * (1.0 + (PI * x / width).cos());
    }
    let dc: f64 = taps.iter().sum();
    for (k, tap) in (-half..=half).zip(taps.iter()) {
        let idx = centre + k;
        if idx >= 0 && (idx as usize) < out.len() {
            out[idx as usize] += amplitude * tap / dc;
        }
    }
}

fn rir_from(config: &SceneConfig, from: &[f64; 3], mic: &[f64; 3]) -> Vec<f64> {
    let fs = config.sample_rate as f64;
    let images = image_sources(config, from);
    let max_delay = images
        .iter()
        .map(|im| distance(&im.position, mic) * fs / config.sound_speed)
        .fold(0.0, f64::max);
    let mut h = vec![0.0; max_delay.ceil() as usize + KERNEL_HALF_WIDTH as usize + 2];
    for im in &images {
        let d = distance(&im.position, mic);
        add_fractional_impulse(&mut h, d * fs / config.sound_speed, im.reflection_gain / (4.0 * PI * d));
    }
    h
}

/// Impulse response from source `source_index` to microphone `mic_index`.
pub fn simulate_rir(config: &SceneConfig, source_index: usize, mic_index: usize) -> Result<TimeSignal> {
    config.validate()?;
    let src = config
        .source_positions
        .get(source_index)
        .ok_or_else(|| Error::InvalidScene(format!("no source {source_index}")))?;
    let mic = config
        .mic_positions
        .get(mic_index)
        .ok_or_else(|| Error::InvalidScene(format!("no microphone {mic_index}")))?;
    TimeSignal::mono(rir_from(config, src, mic), config.sample_rate)
}

/// Linear convolution of `x` with each filter, truncated to `x.len()`.
fn convolve_many(x: &[f64], filters: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let longest = filters.iter().map(Vec::len).max().unwrap_or(1);
    let n = (x.len() + longest).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    xf.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut xf);
    filters
        .iter()
        .map(|h| {
            let mut hf: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            hf.resize(n, Complex64::new(0.0, 0.0));
            fwd.process(&mut hf);
            for (a, b) in hf.iter_mut().zip(&xf) {
                *a *= b;
            }
            inv.process(&mut hf);
            hf[..x.len()].iter().map(|z| z.re / n as f64).collect()
        })
        .collect()
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

fn scaled(sig: &TimeSignal, gain: f64) -> TimeSignal {
    let ch = sig.channels().iter().map(|c| c.iter().map(|v| v * gain).collect()).collect();
    TimeSignal::new(ch, sig.sample_rate()).expect("same shape")
}

/// A rendered scene with every component kept separately.
#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub mixture: TimeSignal,
    pub target_reverberant: TimeSignal,
    pub interferences_reverberant: Vec<TimeSignal>,
    pub noise: TimeSignal,
    pub config: SceneConfig,
}

impl SimulatedScene {
    /// Everything except the target: interferences plus noise.
    pub fn non_target(&self) -> TimeSignal {
        let mut ch = self.noise.channels().to_vec();
        for interf in &self.interferences_reverberant {
            for (acc, src) in ch.iter_mut().zip(interf.channels()) {
                for (a, s) in acc.iter_mut().zip(src) {
                    *a += s;
                }
            }
        }
        TimeSignal::new(ch, self.noise.sample_rate()).expect("same shape")
    }

    /// Target-to-interference ratio on the reference channel, or `None` with no interferers.
    pub fn achieved_sir_db(&self) -> Option<f64> {
        if self.interferences_reverberant.is_empty() {
            return None;
        }
        let r = self.config.ref_channel;
        let len = self.mixture.len();
        let sum: Vec<f64> = (0..len)
            .map(|n| self.interferences_reverberant.iter().map(|s| s.channel(r)[n]).sum())
            .collect();
        Some(10.0 * (power(self.target_reverberant.channel(r)) / power(&sum)).log10())
    }

    pub fn achieved_snr_db(&self) -> f64 {
        let r = self.config.ref_channel;
        10.0 * (power(self.target_reverberant.channel(r)) / power(self.noise.channel(r))).log10()
    }
}

/// Convolves each dry source with its room responses and mixes at the
/// configured SIR and SNR, both measured on the reference channel against
/// the reverberant target.
pub fn render_scene(config: &SceneConfig, dry_sources: &[Vec<f64>]) -> Result<SimulatedScene> {
    config.validate()?;
    if dry_sources.is_empty() {
        return Err(Error::InvalidScene("at least one dry source is required".into()));
    }
    if dry_sources.len() != config.source_positions.len() {
        return Err(Error::InvalidScene(format!(
            "{} dry sources for {} source positions",
            dry_sources.len(),
            config.source_positions.len()
        )));
    }
    let len = dry_sources[0].len();
    if len == 0 {
        return Err(Error::EmptySignal);
    }
    let fs = config.sample_rate;
    let r = config.ref_channel;
    let reverberant = |from: &[f64; 3], dry: &[f64]| -> Result<TimeSignal> {
        let mut x = dry.to_vec();
        x.resize(len, 0.0);
        let filters: Vec<Vec<f64>> = config.mic_positions.iter().map(|mic| rir_from(config, from, mic)).collect();
        TimeSignal::new(convolve_many(&x, &filters), fs)
    };

    let target = reverberant(&config.source_positions[0], &dry_sources[0])?;
    let target_power = power(target.channel(r));
    if !(target_power > 0.0) {
        return Err(Error::InvalidScene(format!("{}: target is silent at the reference microphone", config.id)));
    }

    let mut interferences = Vec::new();
    for (k, (pos, dry)) in config.source_positions.iter().zip(dry_sources).enumerate().skip(1) {
        let sig = reverberant(pos, dry)?;
        let p = power(sig.channel(r));
        if !(p > 0.0) {
            return Err(Error::InvalidScene(format!("{}: interferer {k} is silent", config.id)));
        }
        interferences.push(scaled(&sig, (target_power / p).sqrt()));
    }
    if !interferences.is_empty() {
        let sum: Vec<f64> = (0..len).map(|n| interferences.iter().map(|s| s.channel(r)[n]).sum()).collect();
        let want = target_power / 10f64.powf(config.sir_db / 10.0);
        let gain = (want / power(&sum)).sqrt();
        interferences = interferences.iter().map(|s| scaled(s, gain)).collect();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6e6f_6973_6521);
    let raw_noise = match &config.noise {
        NoiseKind::White => {
            let ch = (0..config.mic_positions.len())
                .map(|_| (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            TimeSignal::new(ch, fs)?
        }
        NoiseKind::Point { position } => {
            let dry: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            reverberant(position, &dry)?
        }
    };
    let want = target_power / 10f64.powf(config.snr_db / 10.0);
    let noise = scaled(&raw_noise, (want / power(raw_noise.channel(r))).sqrt());

    let mixture_ch = (0..config.mic_positions.len())
        .map(|m| {
            (0..len)
                .map(|n| {
                    target.channel(m)[n]
                        + interferences.iter().map(|s| s.channel(m)[n]).sum::<f64>()
                        + noise.channel(m)[n]
                })
                .collect()
        })
        .collect();
    Ok(SimulatedScene {
        mixture: TimeSignal::new(mixture_ch, fs)?,
        target_reverberant: target,
        interferences_reverberant: interferences,
        noise,
        config: config.clone(),
    })
}

/// A deterministic speech-like test signal: syllable-length bursts of
/// harmonic (voiced) or high-passed noise (unvoiced) excitation shaped by
/// three slowly varying formant resonators, separated by short pauses.
/// Normalised to an RMS of 0.1.
pub fn speech_like_source(seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate as f64;
    let base_f0 = rng.random_range(95.0..230.0);
    let mut out = vec![0.0; len];
    let mut pos = (rng.random_range(0.0..0.15) * fs) as usize;
    let mut phase = 0.0;
    while pos < len {
        let syl = ((rng.random_range(0.12..0.35)) * fs) as usize;
        let end = (pos + syl).min(len);
        let voiced = rng.random_bool(0.8);
        let f0_start = base_f0 * rng.random_range(0.85..1.2);
        let f0_end = f0_start * rng.random_range(0.85..1.15);
        let formants = [
            (rng.random_range(300.0..900.0), rng.random_range(60.0..120.0)),
            (rng.random_range(900.0..2400.0), rng.random_range(80.0..160.0)),
            (rng.random_range(2300.0..3400.0), rng.random_range(100.0..200.0)),
        ];
        let mut exc = Vec::with_capacity(end - pos);
        let mut prev = 0.0;
        for i in 0..end - pos {
            let frac = i as f64 / (end - pos) as f64;
            let noise: f64 = rng.sample(StandardNormal);
            let v = if voiced {
                let f0 = f0_start + (f0_end - f0_start) * frac;
                phase += 2.0 * PI * f0 / fs;
                let harmonics = ((0.45 * fs) / f0) as usize;
                let mut s = 0.0;
                for k in 1..=harmonics.min(40) {
                    s += (k as f64 * phase).sin() / k as f64;
                }
                s + 0.05 * noise
            } else {
                let d = noise - prev;
                prev = noise;
                0.4 * d
            };
            exc.push(v);
        }
        for (freq, bw) in formants {
            let rad = (-PI * bw / fs).exp();
            let a1 = -2.0 * rad * (2.0 * PI * freq / fs).cos();
            let a2 = rad * rad;
            let g = 1.0 - rad;
            let (mut y1, mut y2) = (0.0, 0.0);
            for v in exc.iter_mut() {
                let y = g * *v - a1 * y1 - a2 * y2;
                y2 = y1;
                y1 = y;
                *v = y;
            }
        }
        let n = exc.len();
        for (i, v) in exc.into_iter().enumerate() {
            let env = (PI * i as f64 / n as f64).sin().powf(0.7);
            out[pos + i] += v * env;
        }
        pos = end + (rng.random_range(0.03..0.25) * fs) as usize;
    }
    let rms = power(&out).sqrt();
    if rms > 0.0 {
        for v in &mut out {
            *v *= 0.1 / rms;
        }
    }
    out
}

/// Dry sources for a generated scene, derived from its seed.
pub fn dry_sources_for(config: &SceneConfig) -> Vec<Vec<f64>> {
    let n = config.num_samples();
    (0..config.source_positions.len())
        .map(|k| speech_like_source(config.seed.wrapping_add(k as u64 * 0x9e37_79b9), n, config.sample_rate))
        .collect()
}

/// Sampling policy for [`generate_testset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestsetPolicy {
    pub count: usize,
    pub seed: u64,
    /// Allowed talker counts (target included); drawn uniformly per scene.
    pub speakers: Vec<usize>,
    /// Buckets assigned round-robin to scenes with interferers.
    pub buckets: Vec<AngleBucket>,
    pub sir_db: (f64, f64),
    pub snr_db: (f64, f64),
    pub room_x: (f64, f64),
    pub room_y: (f64, f64),
    pub room_z: (f64, f64),
    pub absorption: (f64, f64),
    pub reflection_order: usize,
    /// Distance from the array centre to each talker, metres.
    pub source_distance: (f64, f64),
    pub duration_s: f64,
    pub sample_rate: u32,
    pub array: ArrayGeometry,
    /// Distance from the array to the `y = 0` wall, and its height.
    pub array_offset: (f64, f64),
    pub ref_channel: usize,
}

impl Default for TestsetPolicy {
    fn default() -> Self {
        Self {
            count: 20,
            seed: 0,
            speakers: vec![2],
            buckets: AngleBucket::ALL.to_vec(),
            sir_db: (-6.0, 6.0),
            snr_db: (18.0, 30.0),
            room_x: (6.0, 9.0),
            room_y: (5.0, 8.0),
            room_z: (2.8, 3.5),
            absorption: (0.35, 0.7),
            reflection_order: 6,
            source_distance: (1.0, 2.5),
            duration_s: 3.0,
            sample_rate: 16000,
            array: ArrayGeometry::default_linear(),
            array_offset: (1.0, 1.5),
            ref_channel: 0,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Deterministic list of scene configurations following `policy`.
pub fn generate_testset(policy: &TestsetPolicy) -> Result<Vec<SceneConfig>> {
    if policy.count < 1 {
        return Err(Error::InvalidScene("scene count must be at least 1".into()));
    }
    if policy.speakers.is_empty() || policy.speakers.iter().any(|&s| s < 1) {
        return Err(Error::InvalidScene("speaker counts must be at least 1".into()));
    }
    if policy.buckets.is_empty() {
        return Err(Error::InvalidScene("at least one angle bucket is required".into()));
    }
    if !policy.array.is_linear() {
        return Err(Error::InvalidScene("the generator places talkers around a linear array".into()));
    }
    policy.array.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut scenes = Vec::with_capacity(policy.count);
    let mut bucket_cursor = 0;
    for index in 0..policy.count {
        let speakers = policy.speakers[rng.random_range(0..policy.speakers.len())];
        let bucket = if speakers > 1 {
            let b = policy.buckets[bucket_cursor % policy.buckets.len()];
            bucket_cursor += 1;
            Some(b)
        } else {
            None
        };
        let room = [draw(&mut rng, policy.room_x), draw(&mut rng, policy.room_y), draw(&mut rng, policy.room_z)];
        let centre = [room[0] / 2.0, policy.array_offset.0, policy.array_offset.1];
        let mics = policy.array.translated(centre).positions;

        let (doas, separations) = place_talkers(&mut rng, speakers, bucket)?;
        let mut sources = Vec::with_capacity(speakers);
        for &doa in &doas {
            let dist = draw(&mut rng, policy.source_distance);
            let th = doa.to_radians();
            sources.push([centre[0] + dist * th.cos(), centre[1] + dist * th.sin(), centre[2]]);
        }
        let absorption = [draw(&mut rng, policy.absorption); 6];
        let config = SceneConfig {
            id: format!("{index:04}"),
            room_dims: room,
            source_positions: sources,
            mic_positions: mics,
            reflection_order: policy.reflection_order,
            absorption,
            sample_rate: policy.sample_rate,
            sound_speed: policy.array.sound_speed,
            sir_db: draw(&mut rng, policy.sir_db),
            snr_db: draw(&mut rng, policy.snr_db),
            seed: rng.next_u64(),
            ref_channel: policy.ref_channel,
            duration_s: policy.duration_s,
            noise: NoiseKind::White,
            meta: SceneMeta {
                angle_bucket: bucket,
                doa_deg: doas,
                separation_deg: separations,
            },
        };
        config
            .validate()
            .map_err(|e| Error::InvalidScene(format!("policy produced an invalid scene ({e}); enlarge the room ranges")))?;
        scenes.push(config);
    }
    Ok(scenes)
}

/// Target azimuth plus interferer azimuths whose separations fall in `bucket`,
/// all inside the array's front half-plane `[0, 180]`.
fn place_talkers(rng: &mut ChaCha8Rng, speakers: usize, bucket: Option<AngleBucket>) -> Result<(Vec<f64>, Vec<f64>)> {
    let Some(bucket) = bucket else {
        return Ok((vec![rng.random_range(0.0..=180.0)], Vec::new()));
    };
    let (lo, hi) = bucket.range();
    'attempt: for _ in 0..1000 {
        let target = rng.random_range(0.0..=180.0);
        let mut doas = vec![target];
        let mut seps = Vec::new();
        for _ in 1..speakers {
            let sep = rng.random_range(lo..hi);
            let candidates = [target + sep, target - sep];
            let first = rng.random_range(0..2);
            let Some(doa) = [candidates[first], candidates[1 - first]]
                .into_iter()
                .find(|d| (0.0..=180.0).contains(d) && doas.iter().all(|o| (o - d).abs() > 2.0))
            else {
                continue 'attempt;
            };
            doas.push(doa);
            seps.push(sep);
        }
        return Ok((doas, seps));
    }
    Err(Error::InvalidScene(format!(
        "cannot place {speakers} talkers with separations in {} degrees",
        bucket.label()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shoebox(order: usize) -> SceneConfig {
        SceneConfig {
            id: "t".into(),
            room_dims: [6.0, 5.0, 3.0],
            source_positions: vec![[1.0, 1.0, 1.5]],
            mic_positions: vec![[4.0, 1.0, 1.5]],
            reflection_order: order,
            absorption: [0.4; 6],
            sample_rate: 16000,
            sound_speed: 343.0,
            sir_db: 0.0,
            snr_db: 20.0,
            seed: 1,
            ref_channel: 0,
            duration_s: 0.5,
            noise: NoiseKind::White,
            meta: Default::default(),
        }
    }

    #[test]
    fn direct_path_pulse() {
        let rir = simulate_rir(&shoebox(0), 0, 0).unwrap();
        let h = rir.channel(0);
        let peak = (0..h.len()).max_by(|&a, &b| h[a].abs().total_cmp(&h[b].abs())).unwrap();
        let expected_delay: f64 = 16000.0 * 3.0 / 343.0;
        assert!((expected_delay - 139.94).abs() < 0.01);
        assert!((peak as f64 - 140.0).abs() <= 1.0);
        let amp = 1.0 / (4.0 * PI * 3.0);
        assert!((h[peak] - amp).abs() / amp < 0.02, "{} vs {amp}", h[peak]);
        let area: f64 = h.iter().sum();
        assert!((area - amp).abs() < 1e-12);
    }

    #[test]
    fn inverse_distance_law() {
        let mut near = shoebox(0);
        near.mic_positions = vec![[2.5, 1.0, 1.5]];
        let mut far = shoebox(0);
        far.mic_positions = vec![[4.0, 1.0, 1.5]];
        let a: f64 = simulate_rir(&near, 0, 0).unwrap().channel(0).iter().sum();
        let b: f64 = simulate_rir(&far, 0, 0).unwrap().channel(0).iter().sum();
        assert!((a / b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn first_order_has_six_images() {
        let cfg = shoebox(1);
        let images = image_sources(&cfg, &cfg.source_positions[0]);
        assert_eq!(images.iter().filter(|i| i.order == 0).count(), 1);
        assert_eq!(images.iter().filter(|i| i.order == 1).count(), 6);
        assert_eq!(images.len(), 7);
        let beta = (1.0f64 - 0.4).sqrt();
        for im in images.iter().filter(|i| i.order == 1) {
            assert!((im.reflection_gain - beta).abs() < 1e-12);
        }
        // The mirror in the x = 0 wall.
        assert!(images.iter().any(|i| i.position == [-1.0, 1.0, 1.5]));
        let direct = simulate_rir(&shoebox(0), 0, 0).unwrap().len();
        assert!(simulate_rir(&cfg, 0, 0).unwrap().len() > direct);
    }

    #[test]
    fn image_count_grows_as_octahedral_numbers() {
        // Lattice points with L1 norm <= n in three dimensions.
        for (n, expected) in [(0, 1), (1, 7), (2, 25), (3, 63), (6, 377)] {
            let cfg = shoebox(n);
            assert_eq!(image_sources(&cfg, &cfg.source_positions[0]).len(), expected);
        }
    }

    #[test]
    fn positions_outside_room_are_rejected() {
        let mut cfg = shoebox(0);
        cfg.mic_positions = vec![[7.0, 1.0, 1.0]];
        assert!(matches!(simulate_rir(&cfg, 0, 0), Err(Error::InvalidScene(_))));
        let mut cfg = shoebox(0);
        cfg.source_positions = vec![[0.0, 1.0, 1.0]];
        assert!(cfg.validate().is_err());
    }

    fn two_talker() -> SceneConfig {
        let mut cfg = shoebox(2);
        cfg.source_positions.push([3.0, 3.5, 1.2]);
        cfg.mic_positions = vec![[4.0, 1.0, 1.5], [4.1, 1.0, 1.5], [4.25, 1.0, 1.5]];
        cfg
    }

    #[test]
    fn equal_power_at_zero_sir_needs_unit_gain() {
        let mut cfg = two_talker();
        cfg.mic_positions = vec![[3.0, 2.0, 1.5]];
        // Mirror-symmetric talkers around the microphone receive identical responses.
        cfg.source_positions = vec![[1.5, 2.0, 1.5], [4.5, 2.0, 1.5]];
        cfg.room_dims = [6.0, 4.0, 3.0];
        let dry = speech_like_source(3, 4000, 16000);
        let scene = render_scene(&cfg, &[dry.clone(), dry]).unwrap();
        let t = scene.target_reverberant.channel(0);
        let i = scene.interferences_reverberant[0].channel(0);
        for (a, b) in t.iter().zip(i) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_level_follows_snr() {
        let cfg = two_talker();
        let dry = dry_sources_for(&cfg);
        let scene = render_scene(&cfg, &dry).unwrap();
        let pt = power(scene.target_reverberant.channel(0));
        let pn = power(scene.noise.channel(0));
        assert!((pn / pt - 0.01).abs() < 1e-12);
        assert!((scene.achieved_snr_db() - 20.0).abs() < 1e-9);
        assert!(scene.achieved_sir_db().unwrap().abs() < 1e-9);
    }

    #[test]
    fn mixture_is_sum_of_components() {
        let mut cfg = two_talker();
        cfg.sir_db = -4.5;
        cfg.snr_db = 27.0;
        cfg.noise = NoiseKind::Point { position: [5.0, 4.0, 2.0] };
        let scene = render_scene(&cfg, &dry_sources_for(&cfg)).unwrap();
        let rest = scene.non_target();
        for m in 0..3 {
            for n in 0..scene.mixture.len() {
                let sum = scene.target_reverberant.channel(m)[n] + rest.channel(m)[n];
                assert!((scene.mixture.channel(m)[n] - sum).abs() < 1e-12);
            }
        }
        assert!((scene.achieved_sir_db().unwrap() + 4.5).abs() < 0.1);
        assert!((scene.achieved_snr_db() - 27.0).abs() < 0.1);
    }

    #[test]
    fn silent_target_is_an_error() {
        let cfg = two_talker();
        let n = cfg.num_samples();
        assert!(render_scene(&cfg, &[vec![0.0; n], vec![0.1; n]]).is_err());
        assert!(render_scene(&cfg, &[]).is_err());
    }

    #[test]
    fn speech_like_source_is_deterministic_and_normalised() {
        let a = speech_like_source(9, 16000, 16000);
        assert_eq!(a, speech_like_source(9, 16000, 16000));
        assert_ne!(a, speech_like_source(10, 16000, 16000));
        assert!((power(&a).sqrt() - 0.1).abs() < 1e-12);
        // Pauses leave some frames silent.
        let silent = a.chunks(256).filter(|c| c.iter().all(|v| v.abs() < 1e-9)).count();
        assert!(silent > 0);
    }

    #[test]
    fn testset_is_deterministic() {
        let p = TestsetPolicy::default();
        assert_eq!(generate_testset(&p).unwrap(), generate_testset(&p).unwrap());
        let other = TestsetPolicy { seed: 1, ..p.clone() };
        assert_ne!(generate_testset(&p).unwrap(), generate_testset(&other).unwrap());
    }

    #[test]
    fn testset_honours_bucket_and_ranges() {
        let p = TestsetPolicy {
            buckets: vec![AngleBucket::UpTo180],
            speakers: vec![3],
            ..Default::default()
        };
        let scenes = generate_testset(&p).unwrap();
        assert_eq!(scenes.len(), 20);
        for s in &scenes {
            s.validate().unwrap();
            assert_eq!(s.speakers(), 3);
            assert_eq!(s.meta.angle_bucket, Some(AngleBucket::UpTo180));
            for sep in &s.meta.separation_deg {
                assert!(AngleBucket::UpTo180.contains(*sep));
            }
            assert!((-6.0..=6.0).contains(&s.sir_db));
            assert!((18.0..=30.0).contains(&s.snr_db));
            assert_eq!(s.reflection_order, 6);
        }
    }

    #[test]
    fn testset_geometry_matches_recorded_doas() {
        let scenes = generate_testset(&TestsetPolicy::default()).unwrap();
        for s in &scenes {
            let n = s.mic_positions.len();
            let c = [
                (s.mic_positions[0][0] + s.mic_positions[n - 1][0]) / 2.0,
                s.mic_positions[0][1],
            ];
            for (p, doa) in s.source_positions.iter().zip(&s.meta.doa_deg) {
                let az = (p[1] - c[1]).atan2(p[0] - c[0]).to_degrees();
                assert!((az - doa).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn impossible_policies_are_errors() {
        let zero = TestsetPolicy { count: 0, ..Default::default() };
        assert!(generate_testset(&zero).is_err());
        let tiny_room = TestsetPolicy {
            room_x: (1.0, 1.2),
            ..Default::default()
        };
        assert!(generate_testset(&tiny_room).is_err());
    }

    #[test]
    fn bucket_labels_round_trip() {
        for b in AngleBucket::ALL {
            assert_eq!(AngleBucket::parse(b.label()), Some(b));
        }
        assert!(AngleBucket::UpTo180.contains(180.0));
        assert!(!AngleBucket::UpTo15.contains(15.0));
    }
}
