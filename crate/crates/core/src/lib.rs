//! Stochastic simulator of an on-chip heralded single-photon source with
//! switchable orbital-angular-momentum modes.
//!
//! Photon pairs from pulsed spontaneous four-wave mixing in a silicon wire
//! are split by wavelength: one photon is converted into an OAM mode by a
//! thermally tuned micro-ring emitter, its partner heralds it. The crate
//! models the resonator comb, the pair source, the emitter, the lossy
//! detection chain with SPAD clicks, and the TCSPC coincidence analysis.
//!
//! Deterministic math is generic over [`Real`]; the Monte Carlo engine is
//! `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibrate;
pub mod config;
pub mod detection;
pub mod emitter;
pub mod error;
pub mod montecarlo;
pub mod real;
pub mod report;
pub mod resonator;
pub mod rng;
pub mod scenario;
pub mod source;
pub mod spectrum;

pub use analysis::{
    build_histogram, car_stats, expected_counts, extract_acc, extract_cc,
    measure_purity_tomography, CoincidenceModel, CoincidenceReport, PurityEstimate, TcspcHistogram,
    Tomography, WindowGeometry, WindowSpec,
};
pub use calibrate::{calibrate, CalibrationReport};
pub use config::Config;
pub use detection::{
    arm_survival, db_to_fraction, generate_clicks, slm_pass_probability, Arm, ArmPath, ClickRecord,
    ClickStream, LossBudget, Origin, SpadParams,
};
pub use emitter::{purity_of, try_emit, EmitterParams, ModeSpectrum, OamPhoton};
pub use error::{Error, Result};
pub use real::Real;
pub use report::{emit_report, Format};
pub use resonator::{Charge, DriveSetting, Order, ResonatorParams};
pub use scenario::{run_scenario, run_with_workers, RunReport, Scenario, ScenarioKind};
pub use source::{idler_wavelength, raman_band_clear, PairLaw, PairStatistics, PumpConfig};

pub type ResonatorParamsF64 = ResonatorParams<f64>;
pub type ResonatorParamsF32 = ResonatorParams<f32>;
pub type DriveSettingF64 = DriveSetting<f64>;
pub type DriveSettingF32 = DriveSetting<f32>;
pub type EmitterParamsF64 = EmitterParams<f64>;
pub type EmitterParamsF32 = EmitterParams<f32>;
pub type ModeSpectrumF64 = ModeSpectrum<f64>;
pub type ModeSpectrumF32 = ModeSpectrum<f32>;
pub type LossBudgetF64 = LossBudget<f64>;
pub type LossBudgetF32 = LossBudget<f32>;
pub type CoincidenceModelF64 = CoincidenceModel<f64>;
pub type CoincidenceModelF32 = CoincidenceModel<f32>;
pub type PairStatisticsF64 = PairStatistics<f64>;
pub type PairStatisticsF32 = PairStatistics<f32>;
