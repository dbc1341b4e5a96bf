//! Scale-invariant SNR, plain SNR and per-condition aggregation.
//!
//! A perfect estimate scores `+inf`. Such rows are kept in the per-scene
//! records but left out of the aggregate means, which report how many rows
//! were excluded.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room::AngleBucket;

/// Residual energy below this fraction of the target energy counts as zero.
pub const PERFECT_RESIDUAL: f64 = 1e-30;

fn check(estimate: &[f64], reference: &[f64]) -> Result<()> {
    if estimate.len() != reference.len() {
        return Err(Error::Metric(format!(
            "estimate has {} samples, reference has {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Metric("empty signals".into()));
    }
    if estimate.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input"));
    }
    Ok(())
}

fn demeaned(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ratio_db(signal: f64, residual: f64) -> f64 {
    if residual <= PERFECT_RESIDUAL * signal {
        f64::INFINITY
    } else {
        10.0 * (signal / residual).log10()
    }
}

/// Scale-invariant SNR in dB with mean removal.
pub fn si_snr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    si_snr_with(estimate, reference, true)
}

/// Scale-invariant SNR in dB; `remove_mean` subtracts each signal's mean first.
pub fn si_snr_with(estimate: &[f64], reference: &[f64], remove_mean: bool) -> Result<f64> {
    check(estimate, reference)?;
    let (est, refr) = if remove_mean {
        (demeaned(estimate), demeaned(reference))
    } else {
        (estimate.to_vec(), reference.to_vec())
    };
    let energy = dot(&refr, &refr);
    if energy <= 0.0 {
        return Err(Error::Metric("reference has zero power".into()));
    }
    let alpha = dot(&est, &refr) / energy;
    let target: Vec<f64> = refr.iter().map(|r| alpha * r).collect();
    let residual: f64 = est.iter().zip(&target).map(|(e, t)| (e - t).powi(2)).sum();
    let signal = dot(&target, &target);
    if signal == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ratio_db(signal, residual))
}

/// Plain SNR `10 log10(|s|^2 / |s_hat - s|^2)` in dB.
pub fn snr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check(estimate, reference)?;
    let energy = dot(reference, reference);
    if energy <= 0.0 {
        return Err(Error::Metric("reference has zero power".into()));
    }
    let residual: f64 = estimate.iter().zip(reference).map(|(e, r)| (e - r).powi(2)).sum();
    Ok(ratio_db(energy, residual))
}

/// Trims or zero-pads `estimate` to `len` samples.
pub fn align_length(estimate: &[f64], len: usize) -> Vec<f64> {
    let mut out = estimate[..estimate.len().min(len)].to_vec();
    out.resize(len, 0.0);
    out
}

mod score_format {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("+inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "+inf" | "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad score {other:?}"))),
            },
        }
    }
}

/// Scene attributes used for grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub id: String,
    pub angle_bucket: Option<AngleBucket>,
    pub speakers: usize,
}

/// A scene to score: its clean reference and the unprocessed reference-channel mixture.
#[derive(Debug, Clone)]
pub struct ScoredScene {
    pub info: SceneInfo,
    pub reference: Vec<f64>,
    pub mixture: Vec<f64>,
}

/// One system's outputs, in the same order as the scenes.
#[derive(Debug, Clone)]
pub struct SystemOutputs {
    pub id: String,
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub scene_id: String,
    pub system_id: String,
    pub angle_bucket: Option<AngleBucket>,
    pub speakers: usize,
    #[serde(with = "score_format")]
    pub si_snr_db: f64,
    #[serde(with = "score_format")]
    pub snr_db: f64,
    #[serde(with = "score_format")]
    pub si_snr_improvement_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub system_id: String,
    /// `all`, an angle bucket label such as `15-45`, or `Nspk`.
    pub group: String,
    pub mean_si_snr_db: Option<f64>,
    pub mean_improvement_db: Option<f64>,
    pub count: usize,
    /// Rows left out because a score was infinite.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreReport {
    pub records: Vec<ScoreRecord>,
    pub aggregates: Vec<Aggregate>,
}

fn groups_of(info: &SceneInfo) -> Vec<String> {
    let mut g = vec!["all".to_string()];
    if let Some(b) = info.angle_bucket {
        g.push(b.label().to_string());
    }
    g.push(format!("{}spk", info.speakers));
    g
}

fn group_order(g: &str) -> (usize, String) {
    if g == "all" {
        (0, String::new())
    } else if let Some(b) = AngleBucket::parse(g) {
        (1, format!("{}", b as usize))
    } else {
        (2, g.to_string())
    }
}

/// Scores every system on every scene. Estimates are trimmed or zero-padded
/// to the reference length first.
pub fn score_systems(scenes: &[ScoredScene], systems: &[SystemOutputs]) -> Result<ScoreReport> {
    score_systems_with(scenes, systems, true)
}

/// [`score_systems`] with a choice of Si-SNR mean removal.
pub fn score_systems_with(scenes: &[ScoredScene], systems: &[SystemOutputs], remove_mean: bool) -> Result<ScoreReport> {
    for sys in systems {
        if sys.estimates.len() != scenes.len() {
            return Err(Error::Metric(format!(
                "system {} has {} outputs for {} scenes",
                sys.id,
                sys.estimates.len(),
                scenes.len()
            )));
        }
    }
    let baselines: Vec<f64> = scenes
        .par_iter()
        .map(|s| si_snr_with(&align_length(&s.mixture, s.reference.len()), &s.reference, remove_mean))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(scenes.len() * systems.len());
    for sys in systems {
        let rows: Vec<ScoreRecord> = scenes
            .par_iter()
            .zip(&sys.estimates)
            .zip(&baselines)
            .map(|((scene, est), base)| {
                let est = align_length(est, scene.reference.len());
                let si = si_snr_with(&est, &scene.reference, remove_mean)?;
                Ok(ScoreRecord {
                    scene_id: scene.info.id.clone(),
                    system_id: sys.id.clone(),
                    angle_bucket: scene.info.angle_bucket,
                    speakers: scene.info.speakers,
                    si_snr_db: si,
                    snr_db: snr(&est, &scene.reference)?,
                    si_snr_improvement_db: si - base,
                })
            })
            .collect::<Result<_>>()?;
        records.extend(rows);
    }
    let mut aggregates = Vec::new();
    for sys in systems {
        let mut by_group: BTreeMap<(usize, String), (String, Vec<&ScoreRecord>)> = BTreeMap::new();
        for (rec, scene) in records.iter().filter(|r| r.system_id == sys.id).zip(scenes) {
            for g in groups_of(&scene.info) {
                by_group.entry(group_order(&g)).or_insert_with(|| (g.clone(), Vec::new())).1.push(rec);
            }
        }
        for (_, (group, rows)) in by_group {
            let finite: Vec<&&ScoreRecord> = rows
                .iter()
                .filter(|r| r.si_snr_db.is_finite() && r.si_snr_improvement_db.is_finite())
                .collect();
            let mean = |f: fn(&ScoreRecord) -> f64| {
                (!finite.is_empty()).then(|| finite.iter().map(|r| f(r)).sum::<f64>() / finite.len() as f64)
            };
            aggregates.push(Aggregate {
                system_id: sys.id.clone(),
                group,
                mean_si_snr_db: mean(|r| r.si_snr_db),
                mean_improvement_db: mean(|r| r.si_snr_improvement_db),
                count: finite.len(),
                excluded: rows.len() - finite.len(),
            });
        }
    }
    Ok(ScoreReport { records, aggregates })
}

impl ScoreReport {
    pub fn aggregate(&self, system_id: &str, group: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.system_id == system_id && a.group == group)
    }

    /// One JSON object per line, one line per (scene, system).
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialise") + "\n")
            .collect()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Mean Si-SNR per system (rows) and group (columns), with the overall
    /// improvement over the mixture in the last column.
    pub fn table(&self) -> String {
        let mut systems: Vec<&str> = Vec::new();
        let mut groups: Vec<(usize, String)> = Vec::new();
        for a in &self.aggregates {
            if !systems.contains(&a.system_id.as_str()) {
                systems.push(&a.system_id);
            }
            let key = group_order(&a.group);
            if !groups.iter().any(|(_, g)| *g == a.group) {
                groups.push((key.0 * 1000 + groups.len(), a.group.clone()));
            }
        }
        groups.sort_by_key(|(k, g)| (group_order(g), *k));
        let width = systems.iter().map(|s| s.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "system");
        for (_, g) in &groups {
            let _ = write!(out, " {:>9}", g);
        }
        let _ = writeln!(out, " {:>9} {:>5}", "dSi-SNR", "excl");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        for s in systems {
            let _ = write!(out, "{:<width$}", s);
            for (_, g) in &groups {
                let _ = write!(out, " {:>9}", fmt(self.aggregate(s, g).and_then(|a| a.mean_si_snr_db)));
            }
            let all = self.aggregate(s, "all");
            let _ = writeln!(
                out,
                " {:>9} {:>5}",
                fmt(all.and_then(|a| a.mean_improvement_db)),
                all.map(|a| a.excluded).unwrap_or(0)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct transcription of the definition with a projection onto the reference.
    fn naive(est: &[f64], r: &[f64]) -> f64 {
        let n = r.len() as f64;
        let me = est.iter().sum::<f64>() / n;
        let mr = r.iter().sum::<f64>() / n;
        let (mut er, mut rr) = (0.0, 0.0);
        for (e, s) in est.iter().zip(r) {
            er += (e - me) * (s - mr);
            rr += (s - mr) * (s - mr);
        }
        let (mut tt, mut ee) = (0.0, 0.0);
        for (e, s) in est.iter().zip(r) {
            let t = er / rr * (s - mr);
            tt += t * t;
            ee += (e - me - t) * (e - me - t);
        }
        10.0 * (tt / ee).log10()
    }

    #[test]
    fn perfect_estimate_is_infinite() {
        let s = noise(0, 1000);
        assert_eq!(si_snr(&s, &s).unwrap(), f64::INFINITY);
        assert_eq!(snr(&s, &s).unwrap(), f64::INFINITY);
        let scaled: Vec<f64> = s.iter().map(|v| v * 2.5).collect();
        assert_eq!(si_snr(&scaled, &s).unwrap(), f64::INFINITY);
    }

    #[test]
    fn orthogonal_noise_at_known_level() {
        // s = +1,-1,... and e = s + 0.1 * (+1,+1,-1,-1,...): orthogonal, zero mean.
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d: Vec<f64> = (0..n).map(|i| if (i / 2) % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let e: Vec<f64> = s.iter().zip(&d).map(|(a, b)| a + b).collect();
        assert!((si_snr(&e, &s).unwrap() - 20.0).abs() < 1e-9);
        assert!((snr(&e, &s).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn snr_is_not_scale_invariant() {
        let s = noise(1, 500);
        let half: Vec<f64> = s.iter().map(|v| v * 0.5).collect();
        assert!((snr(&half, &s).unwrap() - 20.0 * 2f64.log10()).abs() < 1e-9);
        assert_eq!(si_snr(&half, &s).unwrap(), f64::INFINITY);
    }

    #[test]
    fn mean_removal_switch() {
        let s = noise(2, 400);
        let shifted: Vec<f64> = s.iter().map(|v| v + 0.3).collect();
        assert_eq!(si_snr(&shifted, &s).unwrap(), f64::INFINITY);
        assert!(si_snr_with(&shifted, &s, false).unwrap().is_finite());
    }

    #[test]
    fn errors() {
        let s = noise(3, 10);
        assert!(si_snr(&s, &s[..9]).is_err());
        assert!(si_snr(&s, &[0.0; 10]).is_err());
        assert!(snr(&s, &[0.0; 10]).is_err());
        assert!(si_snr(&s, &[2.0; 10]).is_err());
        assert!(si_snr(&[], &[]).is_err());
    }

    #[test]
    fn zero_estimate_is_minus_infinity() {
        let s = noise(4, 100);
        assert_eq!(si_snr(&[0.0; 100], &s).unwrap(), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn matches_naive_and_is_scale_invariant(seed in 0u64..500, gain in 0.01f64..100.0) {
            let s = noise(seed, 300);
            let e: Vec<f64> = noise(seed + 1000, 300).iter().zip(&s).map(|(n, v)| v + 0.5 * n).collect();
            let a = si_snr(&e, &s).unwrap();
            prop_assert!((a - naive(&e, &s)).abs() < 1e-9);
            let scaled: Vec<f64> = e.iter().map(|v| v * gain).collect();
            prop_assert!((si_snr(&scaled, &s).unwrap() - a).abs() < 1e-8);
        }
    }

    fn scene(id: &str, bucket: Option<AngleBucket>, speakers: usize, seed: u64) -> ScoredScene {
        let reference = noise(seed, 800);
        let mixture = reference.iter().zip(noise(seed + 50, 800)).map(|(r, n)| r + n).collect();
        ScoredScene {
            info: SceneInfo {
                id: id.into(),
                angle_bucket: bucket,
                speakers,
            },
            reference,
            mixture,
        }
    }

    #[test]
    fn report_excludes_sentinels_and_groups() {
        let scenes = vec![
            scene("a", Some(AngleBucket::UpTo15), 2, 1),
            scene("b", Some(AngleBucket::UpTo90), 2, 2),
            scene("c", None, 1, 3),
        ];
        let oracle = SystemOutputs {
            id: "reference".into(),
            estimates: scenes.iter().map(|s| s.reference.clone()).collect(),
        };
        let mix = SystemOutputs {
            id: "mixture".into(),
            estimates: scenes.iter().map(|s| s.mixture[..700].to_vec()).collect(),
        };
        let report = score_systems(&scenes, &[mix, oracle]).unwrap();
        assert_eq!(report.records.len(), 6);
        let all = report.aggregate("reference", "all").unwrap();
        assert_eq!((all.count, all.excluded), (0, 3));
        assert_eq!(all.mean_si_snr_db, None);
        let m = report.aggregate("mixture", "0-15").unwrap();
        assert_eq!(m.count, 1);
        assert!(report.aggregate("mixture", "1spk").is_some());
        assert!(report.aggregate("mixture", "45-90").is_some());
        assert!(report.aggregate("mixture", "15-45").is_none());

        let jsonl = report.to_jsonl();
        assert_eq!(jsonl.lines().count(), 6);
        assert!(jsonl.contains("\"+inf\""));
        let back: ScoreRecord = serde_json::from_str(jsonl.lines().last().unwrap()).unwrap();
        assert_eq!(back.si_snr_db, f64::INFINITY);

        let table = report.table();
        assert_eq!(table.lines().count(), 3);
        let header = table.lines().next().unwrap();
        assert!(header.find("0-15").unwrap() < header.find("45-90").unwrap());
        assert!(header.find("45-90").unwrap() < header.find("1spk").unwrap());
    }

    #[test]
    fn output_count_mismatch_is_an_error() {
        let scenes = vec![scene("a", None, 1, 1)];
        let sys = SystemOutputs {
            id: "x".into(),
            estimates: vec![],
        };
        assert!(score_systems(&scenes, &[sys]).is_err());
    }
}
