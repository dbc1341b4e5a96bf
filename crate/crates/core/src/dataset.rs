//! On-disk layout of rendered scenes.
//!
//! Each scene lives in `scene_<id>/` with one WAV per component and a
//! `manifest.toml` holding the scene configuration, the role of every file
//! and the SIR and SNR actually achieved.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_wav, write_wav, SampleFormat};
use crate::metrics::SceneInfo;
use crate::room::{SceneConfig, SimulatedScene};
use crate::signal::TimeSignal;

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Mixture,
    Target,
    Interference,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub role: Role,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_sir_db: Option<f64>,
    pub achieved_snr_db: f64,
    pub files: Vec<FileEntry>,
    pub config: SceneConfig,
}

impl SceneManifest {
    pub fn info(&self) -> SceneInfo {
        SceneInfo {
            id: self.config.id.clone(),
            angle_bucket: self.config.meta.angle_bucket,
            speakers: self.config.speakers(),
        }
    }
}

pub fn scene_dir_name(id: &str) -> String {
    format!("scene_{id}")
}

/// Writes `scene` under `root/scene_<id>/` and returns that directory.
pub fn write_scene(scene: &SimulatedScene, root: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = root.as_ref().join(scene_dir_name(&scene.config.id));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    let mut put = |role: Role, name: String, sig: &TimeSignal| -> Result<()> {
        write_wav(dir.join(&name), sig, SampleFormat::Float32)?;
        files.push(FileEntry { role, path: name });
        Ok(())
    };
    put(Role::Mixture, "mixture.wav".into(), &scene.mixture)?;
    put(Role::Target, "target.wav".into(), &scene.target_reverberant)?;
    for (k, interf) in scene.interferences_reverberant.iter().enumerate() {
        put(Role::Interference, format!("interf_{}.wav", k + 1), interf)?;
    }
    put(Role::Noise, "noise.wav".into(), &scene.noise)?;
    let manifest = SceneManifest {
        achieved_sir_db: scene.achieved_sir_db(),
        achieved_snr_db: scene.achieved_snr_db(),
        files,
        config: scene.config.clone(),
    };
    let path = dir.join(MANIFEST);
    let text = toml::to_string(&manifest).map_err(|e| Error::format(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = dir.as_ref().join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(&path, e))
}

#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub dir: PathBuf,
    pub manifest: SceneManifest,
    pub mixture: TimeSignal,
    pub target: TimeSignal,
    pub interferences: Vec<TimeSignal>,
    pub noise: TimeSignal,
}

impl LoadedScene {
    /// Interferences plus noise.
    pub fn non_target(&self) -> TimeSignal {
        let mut ch = self.noise.channels().to_vec();
        for interf in &self.interferences {
            for (acc, src) in ch.iter_mut().zip(interf.channels()) {
                for (a, s) in acc.iter_mut().zip(src) {
                    *a += s;
                }
            }
        }
        TimeSignal::new(ch, self.noise.sample_rate()).expect("same shape")
    }
}

pub fn read_scene(dir: impl AsRef<Path>) -> Result<LoadedScene> {
    let dir = dir.as_ref().to_path_buf();
    let manifest = read_manifest(&dir)?;
    let mut mixture = None;
    let mut target = None;
    let mut noise = None;
    let mut interferences = Vec::new();
    for entry in &manifest.files {
        let sig = read_wav(dir.join(&entry.path))?;
        match entry.role {
            Role::Mixture => mixture = Some(sig),
            Role::Target => target = Some(sig),
            Role::Interference => interferences.push(sig),
            Role::Noise => noise = Some(sig),
        }
    }
    let missing = |what: &str| Error::format(dir.join(MANIFEST), format!("no {what} file listed"));
    let scene = LoadedScene {
        mixture: mixture.ok_or_else(|| missing("mixture"))?,
        target: target.ok_or_else(|| missing("target"))?,
        noise: noise.ok_or_else(|| missing("noise"))?,
        interferences,
        manifest,
        dir,
    };
    for sig in std::iter::once(&scene.target).chain(&scene.interferences).chain([&scene.noise]) {
        if sig.len() != scene.mixture.len() || sig.num_channels() != scene.mixture.num_channels() {
            return Err(Error::format(&scene.dir, "component shapes differ from the mixture"));
        }
    }
    Ok(scene)
}

/// Scene directories under `root`, sorted by name.
pub fn list_scenes(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        let is_scene = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("scene_"));
        if is_scene && path.join(MANIFEST).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}
