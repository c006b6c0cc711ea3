//! Load and PV profiles, and PV penetration scenarios.

mod scenario;
mod series;
mod synth;

pub use scenario::{
    penetration_from_energy, penetration_of, scale_pv, LcoeParams, PvScenario, PvSystem, SystemSpec,
    DEFAULT_SCALES,
};
pub use series::{TimeSeriesSet, STUDY_YEAR_SECONDS};
pub use synth::{synthesize_profiles, SynthOptions};
