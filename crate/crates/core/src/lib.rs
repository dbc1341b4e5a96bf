//! Oracle-mask-driven multi-tap MVDR beamforming for multi-channel speech
//! separation, together with the simulation and scoring tools needed to
//! run experiments end to end.

pub mod beamformer;
pub mod covariance;
pub mod dataset;
pub mod error;
pub mod features;
pub mod io;
pub mod masks;
pub mod metrics;
pub mod pipeline;
pub mod room;
pub mod signal;

pub use beamformer::{apply, solve_multitap_mvdr, solve_mvdr, BeamformerWeights, SolverOptions};
pub use covariance::{covariance, stack_taps, CovarianceOptions, CovarianceStack, MaskTaps, Role};
pub use error::{Error, Result};
pub use masks::{MaskKind, MaskTensor};
pub use metrics::{si_snr, snr};
pub use pipeline::{enhance, enhance_oracle, EnhanceConfig, NoiseMaskPolicy};
pub use signal::{istft, stft, ComplexSpectrogram, StftConfig, TimeSignal};
