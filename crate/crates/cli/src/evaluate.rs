use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use log::info;
use rayon::prelude::*;

use mtmvdr::dataset::{list_scenes, read_scene, scene_dir_name};
use mtmvdr::io::read_wav;
use mtmvdr::metrics::{score_systems_with, ScoredScene, SystemOutputs};

use crate::args::EvaluateArgs;
use crate::{create_dir, Layout};

#[derive(Debug, Clone, PartialEq)]
pub enum SystemSource {
    /// The unprocessed reference channel.
    Mixture,
    /// The clean reference itself; every score is a sentinel.
    Reference,
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub id: String,
    pub source: SystemSource,
}

pub fn parse_system(text: &str, systems_root: &Path) -> anyhow::Result<SystemSpec> {
    let (id, source) = match text.split_once('=') {
        Some((id, dir)) => (id, SystemSource::Dir(PathBuf::from(dir))),
        None => match text {
            "mixture" => (text, SystemSource::Mixture),
            "reference" => (text, SystemSource::Reference),
            name => (name, SystemSource::Dir(systems_root.join(name))),
        },
    };
    ensure!(!id.is_empty(), "empty system name in {text:?}");
    Ok(SystemSpec {
        id: id.to_string(),
        source,
    })
}

/// `mixture` followed by every directory under `root`, sorted.
fn discover(root: &Path) -> anyhow::Result<Vec<SystemSpec>> {
    let mut specs = vec![SystemSpec {
        id: "mixture".into(),
        source: SystemSource::Mixture,
    }];
    if root.is_dir() {
        let mut dirs = Vec::new();
        for entry in std::fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                dirs.push(path);
            }
        }
        dirs.sort();
        for dir in dirs {
            let id = dir.file_name().and_then(|n| n.to_str()).context("non-UTF-8 system directory")?.to_string();
            specs.push(SystemSpec {
                id,
                source: SystemSource::Dir(dir),
            });
        }
    }
    Ok(specs)
}

/// Checks that `dir` holds one output per scene and nothing else.
fn check_outputs(id: &str, dir: &Path, stems: &BTreeSet<String>) -> anyhow::Result<()> {
    let mut found = BTreeSet::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("system {id}: reading {}", dir.display()))? {
        let name = entry?.file_name();
        if let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".wav")) {
            found.insert(stem.to_string());
        }
    }
    let missing: Vec<_> = stems.difference(&found).collect();
    let extra: Vec<_> = found.difference(stems).collect();
    if !missing.is_empty() || !extra.is_empty() {
        bail!("system {id} does not match the scene set: missing {missing:?}, unexpected {extra:?}");
    }
    Ok(())
}

pub fn run(layout: &Layout, args: EvaluateArgs) -> anyhow::Result<()> {
    let scenes_root = layout.scenes_dir(args.scenes.clone());
    let dirs = list_scenes(&scenes_root)?;
    ensure!(!dirs.is_empty(), "no scenes under {}", scenes_root.display());
    let systems_root = layout.systems_dir();
    let specs = match &args.systems {
        Some(list) => list.iter().map(|s| parse_system(s, &systems_root)).collect::<anyhow::Result<Vec<_>>>()?,
        None => discover(&systems_root)?,
    };
    let mut seen = BTreeSet::new();
    for spec in &specs {
        ensure!(seen.insert(&spec.id), "system {} listed twice", spec.id);
    }

    let scenes: Vec<ScoredScene> = dirs
        .par_iter()
        .map(|dir| -> anyhow::Result<ScoredScene> {
            let scene = read_scene(dir)?;
            let r = scene.manifest.config.ref_channel;
            Ok(ScoredScene {
                info: scene.manifest.info(),
                reference: scene.target.channel(r).to_vec(),
                mixture: scene.mixture.channel(r).to_vec(),
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let stems: Vec<String> = scenes.iter().map(|s| scene_dir_name(&s.info.id)).collect();
    let stem_set: BTreeSet<String> = stems.iter().cloned().collect();

    let mut systems = Vec::with_capacity(specs.len());
    for spec in &specs {
        let estimates = match &spec.source {
            SystemSource::Mixture => scenes.iter().map(|s| s.mixture.clone()).collect(),
            SystemSource::Reference => scenes.iter().map(|s| s.reference.clone()).collect(),
            SystemSource::Dir(dir) => {
                check_outputs(&spec.id, dir, &stem_set)?;
                stems
                    .par_iter()
                    .map(|stem| -> anyhow::Result<Vec<f64>> {
                        let sig = read_wav(dir.join(format!("{stem}.wav")))?;
                        ensure!(sig.num_channels() == 1, "system {}: {stem}.wav is not mono", spec.id);
                        Ok(sig.into_channels().swap_remove(0))
                    })
                    .collect::<anyhow::Result<_>>()?
            }
        };
        systems.push(SystemOutputs {
            id: spec.id.clone(),
            estimates,
        });
    }

    let report = score_systems_with(&scenes, &systems, !args.no_mean_removal)?;
    let report_dir = args.report.clone().unwrap_or_else(|| layout.out.join("report"));
    create_dir(&report_dir)?;
    report.write_jsonl(report_dir.join("records.jsonl"))?;
    let table = report.table();
    let summary = report_dir.join("summary.txt");
    std::fs::write(&summary, &table).with_context(|| format!("writing {}", summary.display()))?;
    print!("{table}");
    info!("{} scenes x {} systems scored into {}", scenes.len(), systems.len(), report_dir.display());
    Ok(())
}
