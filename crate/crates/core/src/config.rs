//! TOML configuration: one section per module, defaults for every field,
//! `section.key=value` overrides and a content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{WindowGeometry, WindowSpec};
use crate::detection::{Arm, LossBudget, SpadParams};
use crate::emitter::EmitterParams;
use crate::error::{Error, Result};
use crate::resonator::ResonatorParams;
use crate::source::{PairLaw, PumpConfig, RamanBand};

/// Heater resistance that puts the charge-4 resonance on 1557.32 nm at
/// 13.97 V.
pub const DEFAULT_HEATER_OHMS: f64 = 929.3376190476594;
/// Mean pairs per pulse of the calibrated profile.
pub const CALIBRATED_MU: f64 = 0.023928406938494337;
/// Dark click probability per period of the calibrated profile.
pub const CALIBRATED_DARK_PROB: f64 = 1.2020202962980614e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpSection {
    pub wavelength_nm: f64,
    pub rep_rate_hz: f64,
    pub duration_s: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        let p = PumpConfig::default();
        Self {
            wavelength_nm: p.lambda_p_nm,
            rep_rate_hz: p.rep_rate_hz,
            duration_s: p.duration_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    /// Short-wavelength photon of the pair.
    pub signal_wavelength_nm: f64,
    /// Mean pairs per pulse.
    pub mu: f64,
    pub law: PairLaw,
    pub raman_shift_thz: f64,
    pub raman_linewidth_thz: f64,
    pub raman_guard: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        let r = RamanBand::<f64>::default();
        Self {
            signal_wavelength_nm: 1547.72,
            mu: CALIBRATED_MU,
            law: PairLaw::Poisson,
            raman_shift_thz: r.shift_thz,
            raman_linewidth_thz: r.linewidth_thz,
            raman_guard: r.guard,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonatorSection {
    pub fsr_nm: f64,
    pub fwhm_nm: f64,
    pub lambda_ref_nm: f64,
    pub order_ref: i64,
    pub dip_depth: f64,
    pub thermo_slope_nm_per_mw: f64,
    pub heater_ohms: f64,
    pub n_waveguides: u32,
    pub charge_offset: u32,
    pub band_min_nm: f64,
    pub band_max_nm: f64,
}

impl Default for ResonatorSection {
    fn default() -> Self {
        Self::from(&ResonatorParams::<f64>::default())
    }
}

impl From<&ResonatorParams<f64>> for ResonatorSection {
    fn from(p: &ResonatorParams<f64>) -> Self {
        Self {
            fsr_nm: p.fsr_nm,
            fwhm_nm: p.fwhm_nm,
            lambda_ref_nm: p.lambda_ref_nm,
            order_ref: p.order_ref,
            dip_depth: p.dip_depth,
            thermo_slope_nm_per_mw: p.thermo_slope_nm_per_mw,
            heater_ohms: p.heater_ohms,
            n_waveguides: p.n_waveguides,
            charge_offset: p.charge_offset,
            band_min_nm: p.band_min_nm,
            band_max_nm: p.band_max_nm,
        }
    }
}

/// One row of a table keyed by |l|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeEntry {
    pub abs_charge: u32,
    pub value: f64,
}

fn table_rows(map: &std::collections::BTreeMap<u32, f64>) -> Vec<ChargeEntry> {
    map.iter()
        .map(|(&abs_charge, &value)| ChargeEntry { abs_charge, value })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterSection {
    pub per_waveguide_coupling: f64,
    pub purity_target: f64,
    pub efficiency: Vec<ChargeEntry>,
}

impl Default for EmitterSection {
    fn default() -> Self {
        let e = EmitterParams::<f64>::default();
        Self {
            per_waveguide_coupling: e.per_waveguide_coupling,
            purity_target: e.purity_target,
            efficiency: table_rows(&e.efficiency),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub coupling_in_db: f64,
    pub sww_db: f64,
    pub idler_arm_db: f64,
    pub objective_coupling: f64,
    /// Signal path loss in dB after emission, objective excluded.
    pub signal_path: Vec<ChargeEntry>,
}

impl Default for DetectionSection {
    fn default() -> Self {
        let b = LossBudget::<f64>::default();
        Self {
            coupling_in_db: b.coupling_in_db,
            sww_db: b.sww_db,
            idler_arm_db: b.idler_arm_db,
            objective_coupling: b.objective_coupling,
            signal_path: table_rows(&b.signal_path_db),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpadSection {
    pub signal: SpadParams,
    pub idler: SpadParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub bin_width_ps: u32,
    pub window_bins: usize,
    pub side_peaks: u32,
    /// Histogram reach on either side of zero delay.
    pub span_ps: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            bin_width_ps: 64,
            window_bins: 5,
            side_peaks: 7,
            span_ps: 187_500.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub seed: u64,
    pub block_pulses: u64,
    /// Replaces `rep_rate_hz · duration_s` when set.
    pub pulses: Option<u64>,
    /// Circular-polarization projections acquired per OAM run.
    pub projections: u32,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            seed: 20_190_701,
            block_pulses: crate::source::PulseBlocks::DEFAULT_BLOCK_PULSES,
            pulses: None,
            projections: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub target_cc: f64,
    pub target_car_min: f64,
    pub target_car_max: f64,
    pub anchor_charge: i32,
    pub anchor_voltage_v: f64,
    pub anchor_wavelength_nm: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            target_cc: 77_900.0,
            target_car_min: 34.09,
            target_car_max: 52.05,
            anchor_charge: 4,
            anchor_voltage_v: 13.97,
            anchor_wavelength_nm: 1557.32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub step_nm: f64,
    pub power_mw: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            start_nm: 1545.0,
            stop_nm: 1560.0,
            step_nm: 0.002,
            power_mw: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographySection {
    /// Photons per mask; zero gives exact intensities.
    pub shots: u64,
    pub throughput: f64,
}

impl Default for TomographySection {
    fn default() -> Self {
        Self {
            shots: 1_000_000,
            throughput: 1.0,
        }
    }
}

/// Every parameter of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pump: PumpSection,
    pub source: SourceSection,
    pub resonator: ResonatorSection,
    pub emitter: EmitterSection,
    pub detection: DetectionSection,
    pub spad: SpadSection,
    pub analysis: AnalysisSection,
    pub simulation: SimulationSection,
    pub calibration: CalibrationSection,
    pub sweep: SweepSection,
    pub tomography: TomographySection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Config {
    /// Parses TOML text; omitted fields take their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::ConfigParse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `section.key=value` assignments. Values are TOML literals;
    /// anything that does not parse as one is taken as a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Table::try_from(self).map_err(|e| Error::ConfigParse {
            line: 0,
            message: e.to_string(),
        })?;
        for raw in overrides {
            let raw = raw.as_ref();
            let bad = |message: String| Error::ConfigParse { line: 0, message };
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| bad(format!("override `{raw}` is not key=value")))?;
            let value = parse_literal(value.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = path.split_last().expect("split yields one item");
            let mut table = &mut root;
            for p in parents {
                table = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| bad(format!("override `{key}`: `{p}` is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        let config: Config = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse {
                line: 0,
                message: format!("override: {}", e.message()),
            })?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical TOML text: every field, fixed order.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.pump().validate()?;
        let s = &self.source;
        if !(s.mu >= 0.0 && s.mu.is_finite()) {
            return Err(Error::Validation("source.mu must be >= 0".into()));
        }
        if !(s.signal_wavelength_nm > 0.0) {
            return Err(Error::Validation(
                "source.signal_wavelength_nm must be > 0".into(),
            ));
        }
        crate::source::idler_wavelength(self.pump.wavelength_nm, s.signal_wavelength_nm)
            .map_err(|e| Error::Validation(format!("source.signal_wavelength_nm: {e}")))?;
        self.resonator().validate()?;
        self.emitter().validate()?;
        self.loss_budget().validate()?;
        self.spad.signal.validate(Arm::Signal)?;
        self.spad.idler.validate(Arm::Idler)?;
        let a = &self.analysis;
        if a.bin_width_ps == 0 {
            return Err(Error::Validation(
                "analysis.bin_width_ps must be > 0".into(),
            ));
        }
        if a.window_bins.is_multiple_of(2) {
            return Err(Error::Validation("analysis.window_bins must be odd".into()));
        }
        let window = self.window_spec();
        let needed = window.required_span_ps(a.bin_width_ps);
        if a.span_ps < needed {
            return Err(Error::Validation(format!(
                "analysis.span_ps must cover the side windows (>= {needed} ps)"
            )));
        }
        if self.simulation.block_pulses == 0 {
            return Err(Error::Validation(
                "simulation.block_pulses must be > 0".into(),
            ));
        }
        if self.simulation.projections == 0 {
            return Err(Error::Validation(
                "simulation.projections must be > 0".into(),
            ));
        }
        if self.simulation.pulses == Some(0) {
            return Err(Error::Validation("simulation.pulses must be > 0".into()));
        }
        let c = &self.calibration;
        if !(c.target_cc > 0.0 && c.target_car_min > 1.0 && c.target_car_max >= c.target_car_min) {
            return Err(Error::Validation(
                "calibration targets need cc > 0 and 1 < car_min <= car_max".into(),
            ));
        }
        if !(c.anchor_voltage_v > 0.0) {
            return Err(Error::Validation(
                "calibration.anchor_voltage_v must be > 0".into(),
            ));
        }
        let w = &self.sweep;
        if !(w.step_nm > 0.0 && w.stop_nm > w.start_nm && w.power_mw >= 0.0) {
            return Err(Error::Validation(
                "sweep needs step_nm > 0, stop_nm > start_nm and power_mw >= 0".into(),
            ));
        }
        if !(self.tomography.throughput > 0.0 && self.tomography.throughput <= 1.0) {
            return Err(Error::Validation(
                "tomography.throughput must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn pump(&self) -> PumpConfig {
        PumpConfig {
            lambda_p_nm: self.pump.wavelength_nm,
            rep_rate_hz: self.pump.rep_rate_hz,
            duration_s: self.pump.duration_s,
        }
    }

    /// Pulses in one acquisition.
    pub fn pulse_count(&self) -> u64 {
        self.simulation
            .pulses
            .unwrap_or_else(|| self.pump().pulse_count())
    }

    pub fn raman_band(&self) -> RamanBand<f64> {
        RamanBand {
            shift_thz: self.source.raman_shift_thz,
            linewidth_thz: self.source.raman_linewidth_thz,
            guard: self.source.raman_guard,
        }
    }

    pub fn resonator(&self) -> ResonatorParams<f64> {
        let r = &self.resonator;
        ResonatorParams {
            fsr_nm: r.fsr_nm,
            fwhm_nm: r.fwhm_nm,
            lambda_ref_nm: r.lambda_ref_nm,
            order_ref: r.order_ref,
            dip_depth: r.dip_depth,
            thermo_slope_nm_per_mw: r.thermo_slope_nm_per_mw,
            heater_ohms: r.heater_ohms,
            n_waveguides: r.n_waveguides,
            charge_offset: r.charge_offset,
            band_min_nm: r.band_min_nm,
            band_max_nm: r.band_max_nm,
        }
    }

    pub fn emitter(&self) -> EmitterParams<f64> {
        let e = &self.emitter;
        EmitterParams {
            per_waveguide_coupling: e.per_waveguide_coupling,
            efficiency: e
                .efficiency
                .iter()
                .map(|r| (r.abs_charge, r.value))
                .collect(),
            purity_target: e.purity_target,
        }
    }

    pub fn loss_budget(&self) -> LossBudget<f64> {
        let d = &self.detection;
        LossBudget {
            coupling_in_db: d.coupling_in_db,
            sww_db: d.sww_db,
            signal_path_db: d
                .signal_path
                .iter()
                .map(|r| (r.abs_charge, r.value))
                .collect(),
            idler_arm_db: d.idler_arm_db,
            objective_coupling: d.objective_coupling,
        }
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            window_bins: self.analysis.window_bins,
            period_ps: self.pump().period_ps(),
            side_peaks: self.analysis.side_peaks,
        }
    }

    pub fn window_geometry(&self) -> WindowGeometry<f64> {
        WindowGeometry::new(
            self.analysis.bin_width_ps,
            self.window_spec(),
            self.spad.signal.jitter_sigma_ps,
            self.spad.idler.jitter_sigma_ps,
        )
    }
}

fn parse_literal(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.pump.wavelength_nm, 1552.5);
        assert_eq!(c.pump.rep_rate_hz, 4.0e7);
        assert_eq!(c.resonator.fsr_nm, 0.5);
        assert_eq!(c.resonator.fwhm_nm, 0.045);
        assert_eq!(c.pulse_count(), 24_000_000_000);
        assert_eq!(c.pump().period_ps(), 25_000.0);
    }

    #[test]
    fn negative_fsr_is_a_validation_error() {
        let err = Config::parse("[resonator]\nfsr_nm = -1\n").unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("fsr_nm")),
            "{err}"
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Config::parse("[pump]\nwavelength_nm = 1552.5\nrep_rate_hz = = 3\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 3, .. }), "{err:?}");
        let err = Config::parse("[pump]\n\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn round_trip_is_lossless() {
        let c = Config::parse(
            "[source]\nmu = 0.01\nlaw = \"thermal\"\n[spad.idler]\ndark_prob_per_gate = 1e-5\n",
        )
        .unwrap();
        assert_eq!(c.source.law, PairLaw::Thermal);
        let back = Config::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let c = Config::default()
            .with_overrides(&[
                "source.mu=0.005",
                "spad.signal.jitter_sigma_ps = 40",
                "simulation.pulses=1000",
            ])
            .unwrap();
        assert_eq!(c.source.mu, 0.005);
        assert_eq!(c.spad.signal.jitter_sigma_ps, 40.0);
        assert_eq!(c.pulse_count(), 1000);
        assert_ne!(c.hash(), Config::default().hash());
        assert!(Config::default()
            .with_overrides(&["resonator.fsr_nm=-1"])
            .is_err());
        assert!(Config::default().with_overrides(&["nonsense"]).is_err());
        assert!(Config::default().with_overrides(&["pump.nope=1"]).is_err());
        let law = Config::default()
            .with_overrides(&["source.law=thermal"])
            .unwrap();
        assert_eq!(law.source.law, PairLaw::Thermal);
    }

    #[test]
    fn span_must_cover_side_windows() {
        assert!(Config::parse("[analysis]\nspan_ps = 100000\n").is_err());
        assert!(Config::parse("[analysis]\nwindow_bins = 4\n").is_err());
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = Config::default().hash();
        assert_eq!(h.len(), 64);
        assert_eq!(h, Config::parse("").unwrap().hash());
    }
}
