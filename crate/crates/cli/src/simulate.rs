use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use log::info;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use mtmvdr::dataset::write_scene;
use mtmvdr::io::read_wav;
use mtmvdr::room::{dry_sources_for, generate_testset, render_scene, AngleBucket, SceneConfig, TestsetPolicy};

use crate::args::SimulateArgs;
use crate::{create_dir, Layout};

pub fn policy_from(args: &SimulateArgs) -> anyhow::Result<TestsetPolicy> {
    let d = TestsetPolicy::default();
    let buckets = match &args.buckets {
        Some(labels) => labels
            .iter()
            .map(|l| AngleBucket::parse(l).with_context(|| format!("unknown angle bucket {l:?}")))
            .collect::<anyhow::Result<_>>()?,
        None => d.buckets.clone(),
    };
    Ok(TestsetPolicy {
        count: args.count.unwrap_or(d.count),
        seed: args.seed.unwrap_or(d.seed),
        speakers: args.speakers.clone().unwrap_or(d.speakers.clone()),
        buckets,
        sir_db: (args.sir_min.unwrap_or(d.sir_db.0), args.sir_max.unwrap_or(d.sir_db.1)),
        snr_db: (args.snr_min.unwrap_or(d.snr_db.0), args.snr_max.unwrap_or(d.snr_db.1)),
        reflection_order: args.reflection_order.unwrap_or(d.reflection_order),
        duration_s: args.duration.unwrap_or(d.duration_s),
        ..d
    })
}

/// Mono recordings used as dry talkers.
struct DryPool {
    files: Vec<PathBuf>,
}

impl DryPool {
    fn open(dir: &Path) -> anyhow::Result<Self> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                files.push(path);
            }
        }
        ensure!(!files.is_empty(), "no .wav files in {}", dir.display());
        files.sort();
        Ok(Self { files })
    }

    /// One excerpt per talker, chosen from the scene seed so a rerun picks
    /// the same files and offsets.
    fn sources_for(&self, cfg: &SceneConfig) -> anyhow::Result<Vec<Vec<f64>>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        let len = cfg.num_samples();
        (0..cfg.speakers())
            .map(|_| {
                let path = &self.files[rng.random_range(0..self.files.len())];
                let sig = read_wav(path)?;
                if sig.sample_rate() != cfg.sample_rate {
                    bail!(
                        "{} is sampled at {} Hz, scenes use {} Hz",
                        path.display(),
                        sig.sample_rate(),
                        cfg.sample_rate
                    );
                }
                let x = sig.channel(0);
                let start = if x.len() > len { rng.random_range(0..=x.len() - len) } else { 0 };
                let mut out = x[start..x.len().min(start + len)].to_vec();
                out.resize(len, 0.0);
                ensure!(out.iter().any(|v| *v != 0.0), "{} is silent", path.display());
                Ok(out)
            })
            .collect()
    }
}

pub fn run(layout: &Layout, args: SimulateArgs) -> anyhow::Result<()> {
    let policy = policy_from(&args)?;
    let root = layout.scenes_dir(args.scenes.clone());
    let pool = args.dry_dir.as_deref().map(DryPool::open).transpose()?;
    let configs = generate_testset(&policy)?;
    create_dir(&root)?;
    let policy_path = root.join("policy.toml");
    std::fs::write(&policy_path, toml::to_string(&policy)?).with_context(|| format!("writing {}", policy_path.display()))?;
    configs.par_iter().try_for_each(|cfg| -> anyhow::Result<()> {
        let dry = match &pool {
            Some(p) => p.sources_for(cfg)?,
            None => dry_sources_for(cfg),
        };
        let scene = render_scene(cfg, &dry)?;
        let dir = write_scene(&scene, &root)?;
        log::debug!("wrote {}", dir.display());
        Ok(())
    })?;
    info!("{} scenes in {}", configs.len(), root.display());
    Ok(())
}
