use std::path::{Path, PathBuf};

use anyhow::{ensure, Context};
use log::{info, warn};
use rayon::prelude::*;

use mtmvdr::covariance::MaskTaps;
use mtmvdr::dataset::{list_scenes, read_manifest, read_scene, scene_dir_name, Role, SceneManifest};
use mtmvdr::io::{read_wav, write_wav, SampleFormat};
use mtmvdr::masks::{complement_noise_mask, MaskTensor};
use mtmvdr::pipeline::{chunk_frames_for, enhance, oracle_masks, MaskPair};
use mtmvdr::{stft, EnhanceConfig, NoiseMaskPolicy, SolverOptions};

use crate::args::{BeamformArgs, MaskArg, MaskTapsArg, NoiseMaskArg};
use crate::{create_dir, Layout};

pub const SPEECH_MASK_SUFFIX: &str = "speech-mask.bin";
pub const NOISE_MASK_SUFFIX: &str = "noise-mask.bin";

/// Everything `beamform` needs after defaults are applied.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: EnhanceConfig,
    /// Overrides the scene's reference channel.
    pub ref_channel: Option<usize>,
    pub chunk_seconds: Option<f64>,
    pub mask_dir: Option<PathBuf>,
    pub dump_mask: bool,
    pub dump_weights: bool,
    pub system_id: String,
}

pub fn default_system_id(mask: MaskArg, config: &EnhanceConfig, chunk_seconds: Option<f64>) -> String {
    let mut id = if config.beamform {
        format!("{}-mvdr-l{}", mask.name(), config.taps)
    } else {
        format!("{}-mask", mask.name())
    };
    if config.noise_mask == NoiseMaskPolicy::Complement && config.beamform {
        id.push_str("-complement");
    }
    if config.mask_taps == MaskTaps::Shifted && config.beamform {
        id.push_str("-shifted");
    }
    if let (Some(s), true) = (chunk_seconds, config.beamform) {
        id.push_str(&format!("-chunk{s}s"));
    }
    id
}

pub fn plan_from(args: &BeamformArgs) -> anyhow::Result<Plan> {
    let mask = args.mask.unwrap_or(MaskArg::Cm);
    let taps = args.taps.unwrap_or(3);
    ensure!(taps >= 1, "--taps must be at least 1");
    let loading = args.loading.unwrap_or(SolverOptions::default().loading);
    ensure!(loading >= 0.0 && loading.is_finite(), "--loading must be a finite value >= 0");
    if let Some(s) = args.chunk_seconds {
        ensure!(s > 0.0 && s.is_finite(), "--chunk-seconds must be positive");
    }
    let config = EnhanceConfig {
        mask: mask.kind(),
        noise_mask: match args.noise_mask.unwrap_or(NoiseMaskArg::Oracle) {
            NoiseMaskArg::Oracle => NoiseMaskPolicy::Oracle,
            NoiseMaskArg::Complement => NoiseMaskPolicy::Complement,
        },
        taps,
        mask_taps: match args.mask_taps.unwrap_or(MaskTapsArg::Broadcast) {
            MaskTapsArg::Broadcast => MaskTaps::Broadcast,
            MaskTapsArg::Shifted => MaskTaps::Shifted,
        },
        solver: SolverOptions {
            loading,
            ..Default::default()
        },
        beamform: !args.no_beamformer,
        ..Default::default()
    };
    let system_id = match &args.system_id {
        Some(id) => id.clone(),
        None => default_system_id(mask, &config, args.chunk_seconds),
    };
    ensure!(
        !system_id.is_empty() && !system_id.contains(['/', '\\', '=']) && system_id != "mixture" && system_id != "reference",
        "system id {system_id:?} is reserved or not a plain name"
    );
    Ok(Plan {
        config,
        ref_channel: args.ref_channel,
        chunk_seconds: args.chunk_seconds,
        mask_dir: args.mask_dir.clone(),
        dump_mask: args.dump_mask,
        dump_weights: args.dump_weights,
        system_id,
    })
}

fn mixture_of(dir: &Path, manifest: &SceneManifest) -> anyhow::Result<mtmvdr::TimeSignal> {
    let entry = manifest
        .files
        .iter()
        .find(|f| f.role == Role::Mixture)
        .with_context(|| format!("{}: no mixture listed", dir.display()))?;
    Ok(read_wav(dir.join(&entry.path))?)
}

fn imported_masks(
    mask_dir: &Path,
    stem: &str,
    spec: &mtmvdr::ComplexSpectrogram,
    config: &EnhanceConfig,
) -> anyhow::Result<MaskPair> {
    let (t, f) = (spec.frames(), spec.freq_bins());
    let speech = MaskTensor::read(mask_dir.join(format!("{stem}.{SPEECH_MASK_SUFFIX}")), config.mask, t, f)?;
    let noise = match config.noise_mask {
        NoiseMaskPolicy::Complement => complement_noise_mask(&speech),
        NoiseMaskPolicy::Oracle => MaskTensor::read(mask_dir.join(format!("{stem}.{NOISE_MASK_SUFFIX}")), config.mask, t, f)?,
    };
    Ok(MaskPair { speech, noise })
}

fn process(dir: &Path, plan: &Plan, out_dir: &Path) -> anyhow::Result<()> {
    let manifest = read_manifest(dir)?;
    let stem = scene_dir_name(&manifest.config.id);
    let mut config = plan.config.clone();
    config.ref_channel = plan.ref_channel.unwrap_or(manifest.config.ref_channel);
    if let Some(s) = plan.chunk_seconds {
        config.chunk_frames = Some(chunk_frames_for(s, manifest.config.sample_rate, &config.stft)?);
    }
    let (y, masks) = match &plan.mask_dir {
        Some(mask_dir) => {
            let y = stft(&mixture_of(dir, &manifest)?, &config.stft)?;
            let masks = imported_masks(mask_dir, &stem, &y, &config)?;
            (y, masks)
        }
        None => {
            let scene = read_scene(dir).with_context(|| format!("oracle masks need the components of {}", dir.display()))?;
            let y = stft(&scene.mixture, &config.stft)?;
            let s = stft(&scene.target, &config.stft)?;
            let n = stft(&scene.non_target(), &config.stft)?;
            let masks = oracle_masks(&s, &n, &y, &config)?;
            (y, masks)
        }
    };
    let out = enhance(&y, &masks, &config).with_context(|| format!("enhancing {}", dir.display()))?;
    write_wav(out_dir.join(format!("{stem}.wav")), &out.signal, SampleFormat::Float32)?;
    if plan.dump_mask {
        masks.speech.write(out_dir.join(format!("{stem}.{SPEECH_MASK_SUFFIX}")))?;
        masks.noise.write(out_dir.join(format!("{stem}.{NOISE_MASK_SUFFIX}")))?;
    }
    if plan.dump_weights {
        let single = out.weights.len() == 1;
        for (k, (_, w)) in out.weights.iter().enumerate() {
            let name = if single { format!("{stem}.weights.bin") } else { format!("{stem}.weights.{k}.bin") };
            w.write(out_dir.join(name))?;
        }
    }
    let fallbacks: usize = out.weights.iter().map(|(_, w)| w.fallback_bins().len()).sum();
    if fallbacks > 0 {
        warn!("{stem}: {fallbacks} frequency bins fell back to the reference channel");
    }
    Ok(())
}

pub fn run(layout: &Layout, args: BeamformArgs) -> anyhow::Result<()> {
    let plan = plan_from(&args)?;
    let scenes_root = layout.scenes_dir(args.scenes.clone());
    let scenes = list_scenes(&scenes_root)?;
    ensure!(!scenes.is_empty(), "no scenes under {}", scenes_root.display());
    let out_dir = layout.systems_dir().join(&plan.system_id);
    create_dir(&out_dir)?;
    let run_path = out_dir.join("run.toml");
    let run_text = toml::to_string(&plan.config)?;
    std::fs::write(&run_path, run_text).with_context(|| format!("writing {}", run_path.display()))?;
    scenes.par_iter().try_for_each(|dir| process(dir, &plan, &out_dir))?;
    info!("{} scenes enhanced into {}", scenes.len(), out_dir.display());
    Ok(())
}
