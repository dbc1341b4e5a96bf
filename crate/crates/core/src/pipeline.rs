//! End-to-end enhancement: oracle masks, mask-weighted covariances, weight
//! solve and filtering, either over the whole utterance or chunk by chunk.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::beamformer::{apply_frames, solve_multitap_mvdr, BeamformerWeights, SolverOptions};
use crate::covariance::{covariance, stack_taps, CovarianceOptions, MaskTaps, Role};
use crate::error::{Error, Result};
use crate::masks::{complement_noise_mask, complex_mask, relu_mask, sigmoid_mask, MaskKind, MaskTensor};
use crate::signal::{istft, stft, ComplexSpectrogram, StftConfig, TimeSignal};

/// Where the noise mask comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMaskPolicy {
    /// Computed from the true non-target signal, like the speech mask.
    #[default]
    Oracle,
    /// `1 - speech mask`.
    Complement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    pub stft: StftConfig,
    pub mask: MaskKind,
    pub noise_mask: NoiseMaskPolicy,
    /// Frames per filter; 1 is plain MVDR.
    pub taps: usize,
    pub mask_taps: MaskTaps,
    pub solver: SolverOptions,
    pub ref_channel: usize,
    /// Re-estimate the weights every this many frames.
    pub chunk_frames: Option<usize>,
    /// When false the speech mask is applied to the reference channel instead.
    pub beamform: bool,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            mask: MaskKind::Complex,
            noise_mask: NoiseMaskPolicy::Oracle,
            taps: 3,
            mask_taps: MaskTaps::Broadcast,
            solver: SolverOptions::default(),
            ref_channel: 0,
            chunk_frames: None,
            beamform: true,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.taps < 1 {
            return Err(Error::InvalidTaps);
        }
        if self.chunk_frames == Some(0) {
            return Err(Error::InvalidConfig("chunks must hold at least one frame".into()));
        }
        Ok(())
    }
}

/// Frames per chunk for a chunk length in seconds, at least one.
pub fn chunk_frames_for(seconds: f64, sample_rate: u32, config: &StftConfig) -> Result<usize> {
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Error::InvalidConfig(format!("chunk length {seconds} s")));
    }
    Ok(((seconds * sample_rate as f64) / config.hop as f64).ceil().max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub speech: MaskTensor,
    pub noise: MaskTensor,
}

/// Oracle speech and noise masks on the reference channel. `non_target` is
/// everything in the mixture except the target.
pub fn oracle_masks(
    target: &ComplexSpectrogram,
    non_target: &ComplexSpectrogram,
    mixture: &ComplexSpectrogram,
    config: &EnhanceConfig,
) -> Result<MaskPair> {
    let r = config.ref_channel;
    let speech = match config.mask {
        MaskKind::Sigmoid => sigmoid_mask(target, non_target, r)?,
        MaskKind::Relu => relu_mask(target, mixture, r)?,
        MaskKind::Complex => complex_mask(target, mixture, r)?,
    };
    let noise = match config.noise_mask {
        NoiseMaskPolicy::Complement => complement_noise_mask(&speech),
        NoiseMaskPolicy::Oracle => match config.mask {
            MaskKind::Sigmoid => sigmoid_mask(non_target, target, r)?,
            MaskKind::Relu => relu_mask(non_target, mixture, r)?,
            MaskKind::Complex => complex_mask(non_target, mixture, r)?,
        },
    };
    Ok(MaskPair { speech, noise })
}

#[derive(Debug, Clone)]
pub struct Enhanced {
    pub spectrogram: ComplexSpectrogram,
    pub signal: TimeSignal,
    /// Weights and the frames they were estimated on and applied to; empty
    /// when beamforming is off.
    pub weights: Vec<(Range<usize>, BeamformerWeights)>,
}

/// Beamforms `mixture` with the given masks, or masks the reference channel
/// when `config.beamform` is false.
pub fn enhance(mixture: &ComplexSpectrogram, masks: &MaskPair, config: &EnhanceConfig) -> Result<Enhanced> {
    config.validate()?;
    masks.speech.check_grid(mixture)?;
    masks.noise.check_grid(mixture)?;
    if config.ref_channel >= mixture.channels() {
        return Err(Error::ChannelOutOfRange {
            index: config.ref_channel,
            channels: mixture.channels(),
        });
    }
    if !config.beamform {
        let spectrogram = masks.speech.apply(mixture, config.ref_channel)?;
        let signal = istft(&spectrogram)?;
        return Ok(Enhanced {
            spectrogram,
            signal,
            weights: Vec::new(),
        });
    }
    let frames = mixture.frames();
    let stacked = stack_taps(mixture, config.taps)?;
    let step = config.chunk_frames.unwrap_or(frames).max(1);
    let mut out = ComplexSpectrogram::zeros(frames, 1, *mixture.config(), mixture.signal_len(), mixture.sample_rate())?;
    let mut weights = Vec::new();
    for start in (0..frames).step_by(step) {
        let range = start..(start + step).min(frames);
        let opts = CovarianceOptions {
            mask_taps: config.mask_taps,
            frames: Some(range.clone()),
        };
        let phi_ss = covariance(&stacked, &masks.speech, Role::Speech, &opts)?;
        let phi_nn = covariance(&stacked, &masks.noise, Role::Noise, &opts)?;
        let w = solve_multitap_mvdr(&phi_ss, &phi_nn, config.ref_channel, &config.solver)?;
        apply_frames(&w, &stacked, range.clone(), &mut out);
        weights.push((range, w));
    }
    let signal = istft(&out)?;
    Ok(Enhanced {
        spectrogram: out,
        signal,
        weights,
    })
}

/// [`enhance`] with oracle masks derived from the separated components.
pub fn enhance_oracle(
    mixture: &TimeSignal,
    target: &TimeSignal,
    non_target: &TimeSignal,
    config: &EnhanceConfig,
) -> Result<(Enhanced, MaskPair)> {
    let y = stft(mixture, &config.stft)?;
    let s = stft(target, &config.stft)?;
    let n = stft(non_target, &config.stft)?;
    let masks = oracle_masks(&s, &n, &y, config)?;
    Ok((enhance(&y, &masks, config)?, masks))
}
