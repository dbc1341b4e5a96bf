//! Command-line flags and the TOML file that can stand in for them.
//!
//! Every option is optional at parse time so that a value can come from, in
//! order: the flag (or its environment variable), the `--config` file, the
//! built-in default.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "mtmvdr", version, about = "Oracle-mask MVDR and multi-tap MVDR experiments on simulated rooms")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root; scenes go to `<out>/scenes`, systems to `<out>/systems`.
    #[arg(long, global = true, env = "MTMVDR_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "MTMVDR_JOBS")]
    pub jobs: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a reproducible set of simulated scenes.
    Simulate(SimulateArgs),
    /// Enhance every scene with oracle (or imported) masks.
    Beamform(BeamformArgs),
    /// Score system outputs against the scene references.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskArg {
    Sigmoid,
    Relu,
    Cm,
}

impl MaskArg {
    pub fn kind(self) -> mtmvdr::MaskKind {
        match self {
            MaskArg::Sigmoid => mtmvdr::MaskKind::Sigmoid,
            MaskArg::Relu => mtmvdr::MaskKind::Relu,
            MaskArg::Cm => mtmvdr::MaskKind::Complex,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskArg::Sigmoid => "sigmoid",
            MaskArg::Relu => "relu",
            MaskArg::Cm => "cm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMaskArg {
    Oracle,
    Complement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskTapsArg {
    Broadcast,
    Shifted,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Where to write the scene directories [default: <out>/scenes].
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Number of scenes [default: 20].
    #[arg(long)]
    pub count: Option<usize>,
    /// Base seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Allowed talker counts, target included, e.g. `2,3` [default: 2].
    #[arg(long, value_delimiter = ',')]
    pub speakers: Option<Vec<usize>>,
    /// Angle buckets to cycle through: 0-15, 15-45, 45-90, 90-180 [default: all].
    #[arg(long = "bucket", value_delimiter = ',')]
    pub buckets: Option<Vec<String>>,
    /// Scene length in seconds [default: 3].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Image-source reflection order [default: 6].
    #[arg(long)]
    pub reflection_order: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub sir_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sir_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_max: Option<f64>,
    /// Directory of mono WAVs to use as dry talkers instead of the built-in
    /// speech-like generator.
    #[arg(long)]
    pub dry_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BeamformArgs {
    /// Scene root [default: <out>/scenes].
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Mask kind [default: cm].
    #[arg(long, value_enum)]
    pub mask: Option<MaskArg>,
    /// Noise mask source [default: oracle].
    #[arg(long, value_enum)]
    pub noise_mask: Option<NoiseMaskArg>,
    /// Frames per filter; 1 is plain MVDR [default: 3].
    #[arg(long)]
    pub taps: Option<usize>,
    /// How the mask is extended over the taps [default: broadcast].
    #[arg(long, value_enum)]
    pub mask_taps: Option<MaskTapsArg>,
    /// Diagonal loading relative to the mean noise power [default: 1e-6].
    #[arg(long)]
    pub loading: Option<f64>,
    /// Reference microphone [default: the scene's].
    #[arg(long)]
    pub ref_channel: Option<usize>,
    /// Re-estimate the weights every this many seconds; a bare flag means 4.
    #[arg(long, num_args = 0..=1, default_missing_value = "4")]
    pub chunk_seconds: Option<f64>,
    /// Apply the speech mask to the reference channel instead of beamforming.
    #[arg(long)]
    pub no_beamformer: bool,
    /// Read masks from `<dir>/scene_<id>.speech-mask.bin` (and
    /// `.noise-mask.bin` when the noise mask is `oracle`) instead of
    /// computing them from the components.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    /// Also write the speech and noise masks next to each output.
    #[arg(long)]
    pub dump_mask: bool,
    /// Also write the filter weights next to each output.
    #[arg(long)]
    pub dump_weights: bool,
    /// Output name under `<out>/systems` [default: derived from the options].
    #[arg(long)]
    pub system_id: Option<String>,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateArgs {
    /// Scene root [default: <out>/scenes].
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Systems to score: `mixture`, `reference`, a name under
    /// `<out>/systems`, or `name=dir`. Repeatable [default: mixture and
    /// every system under <out>/systems].
    #[arg(long = "system")]
    pub systems: Option<Vec<String>>,
    /// Where to write records.jsonl and summary.txt [default: <out>/report].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Score without subtracting signal means.
    #[arg(long)]
    pub no_mean_removal: bool,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub simulate: SimulateArgs,
    pub beamform: BeamformArgs,
    pub evaluate: EvaluateArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

macro_rules! fill {
    ($a:ident, $b:ident; $($opt:ident),*; $($flag:ident),*) => {{
        $( $a.$opt = $a.$opt.take().or($b.$opt.take()); )*
        $( $a.$flag = $a.$flag || $b.$flag; )*
    }};
}

impl SimulateArgs {
    pub fn fill_from(&mut self, mut file: SimulateArgs) {
        let a = self;
        fill!(a, file; scenes, count, seed, speakers, buckets, duration, reflection_order, sir_min, sir_max, snr_min, snr_max, dry_dir;);
    }
}

impl BeamformArgs {
    pub fn fill_from(&mut self, mut file: BeamformArgs) {
        let a = self;
        fill!(a, file; scenes, mask, noise_mask, taps, mask_taps, loading, ref_channel, chunk_seconds, mask_dir, system_id;
            no_beamformer, dump_mask, dump_weights);
    }
}

impl EvaluateArgs {
    pub fn fill_from(&mut self, mut file: EvaluateArgs) {
        let a = self;
        fill!(a, file; scenes, systems, report; no_mean_removal);
    }
}
