//! Experiment scenarios and their reports.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    measure_purity_tomography, CoincidenceModel, CoincidenceReport, PurityEstimate, TcspcHistogram,
    Tomography,
};
use crate::calibrate::{calibrate, CalibrationReport};
use crate::config::Config;
use crate::detection::{
    arm_survival, db_to_fraction, ArmDetector, ArmPath, ClickGenerator, ClickStream,
};
use crate::emitter::{try_emit, OamPhoton};
use crate::error::{Error, Result};
use crate::montecarlo::{acquire, Acquisition};
use crate::resonator::{Charge, DriveSetting, Order};
use crate::source::{idler_wavelength, PulseBlocks};
use crate::spectrum::{comb_summary, find_dips, sweep, Dip, SpectrumPoint};

/// Charges with a known resonant order.
pub const OAM_CHARGES: [i32; 11] = [-6, -5, -4, -3, -2, -1, 2, 3, 4, 5, 6];

pub fn oam_charges() -> impl Iterator<Item = Charge> {
    OAM_CHARGES.into_iter().map(Charge)
}

const SWW_LANE: u64 = 0;
/// OAM lanes are `(charge + 16) << 32 | projection`, disjoint from the
/// SWW lane and from each other.
fn oam_lane(charge: Charge, projection: u32) -> u64 {
    (u64::from((charge.0 + 16) as u32) << 32) | u64::from(projection)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SwwOnly,
    OamRun,
    SpectrumSweep,
    Tomography,
    Calibrate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub charge: Option<Charge>,
    pub seed: u64,
    /// Keep per-projection reports and time tags.
    pub debug: bool,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, charge: Option<Charge>, seed: u64) -> Self {
        Self {
            kind,
            charge,
            seed,
            debug: false,
        }
    }

    fn required_charge(&self) -> Result<Charge> {
        match self.charge {
            Some(c) if OAM_CHARGES.contains(&c.0) => Ok(c),
            Some(c) => Err(Error::InvalidParameter(format!(
                "charge {c} is not one of {OAM_CHARGES:?}"
            ))),
            None => Err(Error::InvalidParameter(
                "this scenario needs a topological charge".into(),
            )),
        }
    }
}

/// Mean-pair and dark parameters of an acquisition with given survivals.
pub fn coincidence_model(
    config: &Config,
    survival_s: f64,
    survival_i: f64,
) -> CoincidenceModel<f64> {
    CoincidenceModel {
        mu: config.source.mu,
        bunching: config.source.law.bunching(),
        survival_s,
        survival_i,
        dark_s: config.spad.signal.dark_prob_per_gate,
        dark_i: config.spad.idler.dark_prob_per_gate,
        n_pulses: config.pulse_count() as f64,
    }
}

/// Both photons leave through the bus: no emitter factor on either arm.
pub fn sww_survivals(config: &Config) -> Result<(f64, f64)> {
    let budget = config.loss_budget();
    let emitter = config.emitter();
    let s = arm_survival(
        &ArmPath::Bus,
        &budget,
        &emitter,
        config.spad.signal.det_efficiency,
    )?;
    let i = arm_survival(
        &ArmPath::Bus,
        &budget,
        &emitter,
        config.spad.idler.det_efficiency,
    )?;
    Ok((s, i))
}

pub fn sww_model(config: &Config) -> Result<CoincidenceModel<f64>> {
    let (s, i) = sww_survivals(config)?;
    Ok(coincidence_model(config, s, i))
}

/// Operating point of an OAM run.
#[derive(Clone, Debug, PartialEq)]
pub struct OamPlan {
    pub charge: Charge,
    /// Wavelength of the photon routed into the emitter.
    pub lambda_emit_nm: f64,
    /// Wavelength of the heralding photon left in the bus.
    pub lambda_herald_nm: f64,
    pub order: Order,
    pub drive: DriveSetting<f64>,
    pub photon: OamPhoton<f64>,
    pub survival_s: f64,
    pub survival_i: f64,
}

/// Positive charges use the long-wavelength photon of the pair, negative
/// charges the short one; the partner heralds.
pub fn oam_plan(config: &Config, charge: Charge) -> Result<OamPlan> {
    let resonator = config.resonator();
    let emitter = config.emitter();
    let short = config.source.signal_wavelength_nm;
    let long = idler_wavelength(config.pump.wavelength_nm, short)?;
    let (lambda_emit_nm, lambda_herald_nm) = if charge.0 > 0 {
        (long, short)
    } else {
        (short, long)
    };
    let order = resonator.order_for_charge(charge, lambda_emit_nm)?;
    let power = resonator.alignment_power(order, lambda_emit_nm)?;
    let drive = resonator.drive_for_power(power)?;
    let photon = try_emit(lambda_emit_nm, &drive, &resonator, &emitter)?.ok_or(
        Error::UnreachableCharge {
            charge: charge.0,
            target_nm: lambda_emit_nm,
        },
    )?;
    if resonator
        .aligned_order(lambda_herald_nm, &drive, resonator.fwhm_nm / 2.0)?
        .is_some()
    {
        log::warn!("heralding photon at {lambda_herald_nm} nm also sits on a resonance");
    }
    let budget = config.loss_budget();
    let path = ArmPath::Emitter {
        charge,
        spectrum: photon.spectrum,
        mask: charge,
    };
    let survival_s = arm_survival(&path, &budget, &emitter, config.spad.signal.det_efficiency)?;
    let survival_i = arm_survival(
        &ArmPath::Bus,
        &budget,
        &emitter,
        config.spad.idler.det_efficiency,
    )?;
    Ok(OamPlan {
        charge,
        lambda_emit_nm,
        lambda_herald_nm,
        order,
        drive,
        photon,
        survival_s,
        survival_i,
    })
}

/// Expected OAM-run coincidences with the signal detection losses after
/// emission (mask projection, path and objective) removed.
pub fn pre_detection_cc(config: &Config, charge: Charge) -> Result<f64> {
    let plan = oam_plan(config, charge)?;
    let budget = config.loss_budget();
    let emitted = db_to_fraction(budget.on_chip_db())
        * config.emitter().emission_efficiency(charge)?
        * config.spad.signal.det_efficiency;
    let model = CoincidenceModel {
        dark_s: 0.0,
        dark_i: 0.0,
        ..coincidence_model(config, emitted, plan.survival_i)
    };
    Ok(model.expected(&config.window_geometry()).cc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedSummary {
    pub cc: f64,
    pub acc_mean: f64,
    pub car_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveEcho {
    pub order: Order,
    pub voltage_v: f64,
    pub power_mw: f64,
    pub lambda_emit_nm: f64,
    pub lambda_herald_nm: f64,
    pub purity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceBody {
    #[serde(flatten)]
    pub report: CoincidenceReport,
    pub survival_signal: f64,
    pub survival_idler: f64,
    pub expected: ExpectedSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_detection_cc: Option<f64>,
    /// One report per circular projection (debug only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projections: Option<Vec<CoincidenceReport>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBody {
    pub power_mw: f64,
    pub voltage_v: f64,
    pub dips: Vec<Dip<f64>>,
    pub mean_spacing_nm: Option<f64>,
    pub mean_fwhm_nm: Option<f64>,
    #[serde(skip)]
    pub points: Vec<SpectrumPoint<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurityBody {
    #[serde(flatten)]
    pub estimate: PurityEstimate,
    pub configured_purity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportBody {
    Coincidence(Box<CoincidenceBody>),
    Spectrum(SpectrumBody),
    Purity(PurityBody),
    Calibration(CalibrationReport),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: ScenarioKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub charge: Option<Charge>,
    pub seed: u64,
    pub config_hash: String,
    pub pulses_simulated: u64,
    pub emitting_pulses: u64,
    #[serde(flatten)]
    pub body: ReportBody,
    #[serde(skip)]
    pub histogram: Option<TcspcHistogram>,
    /// Signal and idler streams of every acquisition (debug only).
    #[serde(skip)]
    pub time_tags: Vec<ClickStream>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn coincidence(&self) -> Option<&CoincidenceBody> {
        match &self.body {
            ReportBody::Coincidence(b) => Some(b),
            _ => None,
        }
    }
}

struct Acquired {
    histogram: TcspcHistogram,
    reports: Vec<CoincidenceReport>,
    pulses: u64,
    emitting: u64,
    tags: Vec<ClickStream>,
}

fn run_lanes(
    config: &Config,
    survival_s: f64,
    survival_i: f64,
    seed: u64,
    lanes: &[u64],
    debug: bool,
) -> Result<Acquired> {
    let spec = config.window_spec();
    let blocks = PulseBlocks::new(config.pulse_count(), config.simulation.block_pulses);
    let mut total: Option<TcspcHistogram> = None;
    let mut acquired = Acquired {
        histogram: TcspcHistogram::new(config.analysis.bin_width_ps, config.analysis.span_ps)?,
        reports: Vec::new(),
        pulses: 0,
        emitting: 0,
        tags: Vec::new(),
    };
    for &lane in lanes {
        let acq = Acquisition {
            mu: config.source.mu,
            law: config.source.law,
            blocks,
            clicks: ClickGenerator {
                signal: ArmDetector {
                    survival: survival_s,
                    spad: config.spad.signal,
                },
                idler: ArmDetector {
                    survival: survival_i,
                    spad: config.spad.idler,
                },
                period_ps: config.pump().period_ps(),
                seed,
                lane,
            },
        };
        let out = acquire(&acq);
        let hist = out.histogram(config.analysis.bin_width_ps, config.analysis.span_ps)?;
        if debug {
            acquired
                .reports
                .push(CoincidenceReport::from_histogram(&hist, &spec)?);
            acquired.tags.push(out.signal);
            acquired.tags.push(out.idler);
        }
        acquired.pulses += out.pulses;
        acquired.emitting += out.emitting_pulses;
        match total.as_mut() {
            Some(t) => t.merge(&hist)?,
            None => total = Some(hist),
        }
    }
    if let Some(t) = total {
        acquired.histogram = t;
    }
    Ok(acquired)
}

fn expected_summary(model: &CoincidenceModel<f64>, config: &Config) -> ExpectedSummary {
    let e = model.expected(&config.window_geometry());
    ExpectedSummary {
        cc: e.cc,
        acc_mean: e.acc_mean(),
        car_mean: e.car_mean(),
    }
}

fn sww_only(scenario: &Scenario, config: &Config) -> Result<(ReportBody, Acquired)> {
    let (s, i) = sww_survivals(config)?;
    let acquired = run_lanes(config, s, i, scenario.seed, &[SWW_LANE], scenario.debug)?;
    let report = CoincidenceReport::from_histogram(&acquired.histogram, &config.window_spec())?;
    let body = CoincidenceBody {
        report,
        survival_signal: s,
        survival_idler: i,
        expected: expected_summary(&coincidence_model(config, s, i), config),
        drive: None,
        pre_detection_cc: None,
        projections: None,
    };
    Ok((ReportBody::Coincidence(Box::new(body)), acquired))
}

fn oam_run(scenario: &Scenario, config: &Config) -> Result<(ReportBody, Acquired)> {
    let charge = scenario.required_charge()?;
    let plan = oam_plan(config, charge)?;
    let n = config.simulation.projections;
    let lanes: Vec<u64> = (0..n).map(|k| oam_lane(charge, k)).collect();
    let mut acquired = run_lanes(
        config,
        plan.survival_s,
        plan.survival_i,
        scenario.seed,
        &lanes,
        scenario.debug,
    )?;
    let report = CoincidenceReport::averaged(&acquired.histogram, &config.window_spec(), n)?;
    let body = CoincidenceBody {
        report,
        survival_signal: plan.survival_s,
        survival_idler: plan.survival_i,
        expected: expected_summary(
            &coincidence_model(config, plan.survival_s, plan.survival_i),
            config,
        ),
        drive: Some(DriveEcho {
            order: plan.order,
            voltage_v: plan.drive.voltage_v,
            power_mw: plan.drive.power_mw,
            lambda_emit_nm: plan.lambda_emit_nm,
            lambda_herald_nm: plan.lambda_herald_nm,
            purity: plan.photon.purity()?,
        }),
        pre_detection_cc: Some(pre_detection_cc(config, charge)?),
        projections: scenario
            .debug
            .then(|| std::mem::take(&mut acquired.reports)),
    };
    Ok((ReportBody::Coincidence(Box::new(body)), acquired))
}

fn spectrum_sweep(config: &Config) -> Result<ReportBody> {
    let r = config.resonator();
    let w = &config.sweep;
    let drive = r.drive_for_power(w.power_mw)?;
    let points = sweep(&r, &drive, w.start_nm, w.stop_nm, w.step_nm)?;
    let dips = find_dips(&r, &drive, &points);
    let summary = comb_summary(&dips);
    Ok(ReportBody::Spectrum(SpectrumBody {
        power_mw: drive.power_mw,
        voltage_v: drive.voltage_v,
        mean_spacing_nm: summary.map(|s| s.0),
        mean_fwhm_nm: summary.map(|s| s.1),
        dips,
        points,
    }))
}

fn tomography(scenario: &Scenario, config: &Config) -> Result<ReportBody> {
    let charge = scenario.required_charge()?;
    let spectrum = config.emitter().default_spectrum(charge)?;
    let shots = config.tomography.shots;
    let estimate = measure_purity_tomography(
        &spectrum,
        charge,
        &Tomography {
            shots: (shots > 0).then_some(shots),
            throughput: config.tomography.throughput,
            seed: scenario.seed,
        },
    )?;
    Ok(ReportBody::Purity(PurityBody {
        estimate,
        configured_purity: crate::emitter::purity_of(&spectrum, charge)?,
    }))
}

/// Runs one scenario on the current rayon pool.
pub fn run_scenario(scenario: &Scenario, config: &Config) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let mut histogram = None;
    let mut time_tags = Vec::new();
    let (mut pulses, mut emitting) = (0, 0);
    let mut take = |acquired: Acquired| {
        pulses = acquired.pulses;
        emitting = acquired.emitting;
        histogram = Some(acquired.histogram);
        time_tags = acquired.tags;
    };
    let body = match scenario.kind {
        ScenarioKind::SwwOnly => {
            let (body, acquired) = sww_only(scenario, config)?;
            take(acquired);
            body
        }
        ScenarioKind::OamRun => {
            let (body, acquired) = oam_run(scenario, config)?;
            take(acquired);
            body
        }
        ScenarioKind::SpectrumSweep => spectrum_sweep(config)?,
        ScenarioKind::Tomography => tomography(scenario, config)?,
        ScenarioKind::Calibrate => ReportBody::Calibration(calibrate(config)?),
    };
    let wall_clock_s = start.elapsed().as_secs_f64();
    log::info!("{:?} finished in {wall_clock_s:.2} s", scenario.kind);
    Ok(RunReport {
        scenario: scenario.kind,
        charge: scenario.charge,
        seed: scenario.seed,
        config_hash: config.hash(),
        pulses_simulated: pulses,
        emitting_pulses: emitting,
        body,
        histogram,
        time_tags,
        wall_clock_s,
    })
}

/// Runs a scenario on a dedicated pool of `workers` threads (0 means one
/// per core). Output does not depend on the worker count.
pub fn run_with_workers(scenario: &Scenario, config: &Config, workers: usize) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    pool.install(|| run_scenario(scenario, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> Config {
        Config::default()
            .with_overrides(&[
                "simulation.pulses=2000000",
                "simulation.block_pulses=262144",
            ])
            .unwrap()
    }

    #[test]
    fn listed_charges_have_plans() {
        let c = Config::default();
        for charge in oam_charges() {
            let plan = oam_plan(&c, charge).unwrap();
            assert_eq!(plan.photon.charge, charge);
            assert_eq!(c.resonator().charge_of_order(plan.order), charge);
            assert!(plan.survival_s < plan.survival_i);
        }
        let four = oam_plan(&c, Charge(4)).unwrap();
        assert_eq!(four.order, Order(284));
    }

    #[test]
    fn oam_scenarios_need_a_valid_charge() {
        let c = quick();
        for charge in [None, Some(Charge(1)), Some(Charge(7))] {
            let s = Scenario::new(ScenarioKind::OamRun, charge, 1);
            assert!(run_scenario(&s, &c).is_err());
        }
    }

    #[test]
    fn sww_ignores_emitter_parameters() {
        let a = quick();
        let b = a
            .with_overrides(&[
                "emitter.purity_target=0.5",
                "emitter.per_waveguide_coupling=0.2",
            ])
            .unwrap();
        let s = Scenario::new(ScenarioKind::SwwOnly, None, 3);
        let ra = run_scenario(&s, &a).unwrap();
        let rb = run_scenario(&s, &b).unwrap();
        assert_eq!(ra.body, rb.body);
        assert_eq!(ra.histogram, rb.histogram);
    }

    #[test]
    fn opposite_charges_draw_independent_samples() {
        let c = quick()
            .with_overrides(&[
                "spad.signal.dark_prob_per_gate=0.01",
                "spad.idler.dark_prob_per_gate=0.01",
            ])
            .unwrap();
        let run =
            |q| run_scenario(&Scenario::new(ScenarioKind::OamRun, Some(Charge(q)), 5), &c).unwrap();
        let (a, b) = (run(3), run(-3));
        assert_eq!(
            a.coincidence().unwrap().survival_signal,
            b.coincidence().unwrap().survival_signal
        );
        assert_ne!(a.histogram, b.histogram);
        assert_ne!(oam_lane(Charge(-6), 1), oam_lane(Charge(6), 1));
        assert_ne!(oam_lane(Charge(2), 0), SWW_LANE);
    }

    #[test]
    fn pulse_accounting() {
        let c = quick()
            .with_overrides(&[
                "spad.signal.dark_prob_per_gate=0.01",
                "spad.idler.dark_prob_per_gate=0.01",
            ])
            .unwrap();
        let r = run_scenario(
            &Scenario::new(ScenarioKind::OamRun, Some(Charge(-3)), 5),
            &c,
        )
        .unwrap();
        assert_eq!(r.pulses_simulated, 2 * 2_000_000);
        assert!(r.emitting_pulses <= r.pulses_simulated);
        assert!(r.emitting_pulses > 0);
    }

    #[test]
    fn sweep_and_tomography_reports() {
        let c = Config::default();
        let r = run_scenario(&Scenario::new(ScenarioKind::SpectrumSweep, None, 1), &c).unwrap();
        let ReportBody::Spectrum(body) = &r.body else {
            panic!()
        };
        assert!((body.mean_spacing_nm.unwrap() - 0.5).abs() < 1e-6);
        let t = c.with_overrides(&["tomography.shots=0"]).unwrap();
        let r = run_scenario(
            &Scenario::new(ScenarioKind::Tomography, Some(Charge(2)), 1),
            &t,
        )
        .unwrap();
        let ReportBody::Purity(body) = &r.body else {
            panic!()
        };
        assert!((body.estimate.purity - 0.85).abs() < 1e-12);
    }
}
