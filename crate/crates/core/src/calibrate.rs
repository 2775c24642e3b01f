//! Inverse problem: pair rate and dark probability from the silicon-wire
//! coincidence targets, heater resistance from the voltage anchor.

use serde::{Deserialize, Serialize};

use crate::analysis::ExpectedCoincidences;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::resonator::Charge;
use crate::scenario::{oam_charges, pre_detection_cc, sww_model};

const BISECTIONS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwwTargets {
    pub cc: f64,
    pub car_mean: f64,
}

impl SwwTargets {
    pub fn from_config(config: &Config) -> Self {
        let c = &config.calibration;
        Self {
            cc: c.target_cc,
            car_mean: (c.target_car_min + c.target_car_max) / 2.0,
        }
    }
}

fn bisect(mut lo: f64, mut hi: f64, above: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Pair rate giving `target_cc` at a fixed dark probability, or `None`
/// when darks alone already exceed it.
fn mu_for_cc(
    model: &impl Fn(f64, f64) -> ExpectedCoincidences<f64>,
    target_cc: f64,
    dark: f64,
) -> Option<f64> {
    if model(0.0, dark).cc >= target_cc {
        return None;
    }
    let mut hi = 1e-3;
    while model(hi, dark).cc < target_cc {
        hi *= 2.0;
        if hi > 1e3 {
            return None;
        }
    }
    Some(bisect(0.0, hi, |mu| model(mu, dark).cc >= target_cc))
}

/// Solves for `(mu, dark)` with equal dark probability on both arms so
/// that the model reproduces the CC and mean CAR targets.
pub fn solve_mu_dark(
    targets: SwwTargets,
    model: impl Fn(f64, f64) -> ExpectedCoincidences<f64>,
) -> Result<(f64, f64)> {
    let car_at =
        |dark: f64| mu_for_cc(&model, targets.cc, dark).map(|mu| (mu, model(mu, dark).car_mean()));
    let (mu0, car0) = car_at(0.0)
        .ok_or_else(|| Error::Infeasible(format!("no pair rate reaches cc = {}", targets.cc)))?;
    if car0 < targets.car_mean {
        return Err(Error::Infeasible(format!(
            "mean CAR without darks is {car0:.3}, already below the target {}",
            targets.car_mean
        )));
    }
    if car0 == targets.car_mean {
        return Ok((mu0, 0.0));
    }
    let below = |dark: f64| car_at(dark).is_none_or(|(_, car)| car <= targets.car_mean);
    let mut hi = 1e-9;
    while !below(hi) {
        hi *= 2.0;
        if hi >= 1.0 {
            return Err(Error::Infeasible(
                "mean CAR target unreachable by darks".into(),
            ));
        }
    }
    let dark = bisect(0.0, hi, below);
    let (mu, _) = car_at(dark)
        .ok_or_else(|| Error::Infeasible("dark solution leaves no room for pairs".into()))?;
    Ok((mu, dark))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeValue {
    pub charge: Charge,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mu: f64,
    pub dark_prob_signal: f64,
    pub dark_prob_idler: f64,
    pub heater_ohms: f64,
    pub target_cc: f64,
    pub target_car_mean: f64,
    pub predicted_cc: f64,
    pub predicted_car_mean: f64,
    pub predicted_car_min: f64,
    pub predicted_car_max: f64,
    pub residual_cc: f64,
    pub residual_car_mean: f64,
    /// Expected OAM-run coincidences before detection losses.
    pub pre_detection_cc: Vec<ChargeValue>,
    /// `section.key=value` assignments that install the fit.
    pub patch: Vec<String>,
}

impl CalibrationReport {
    pub fn apply(&self, config: &Config) -> Result<Config> {
        config.with_overrides(&self.patch)
    }
}

/// Fits `(mu, dark)` to the silicon-wire targets and the heater resistance
/// to the voltage anchor.
pub fn calibrate(config: &Config) -> Result<CalibrationReport> {
    let targets = SwwTargets::from_config(config);
    let geometry = config.window_geometry();
    let model = |mu: f64, dark: f64| {
        let mut c = config.clone();
        c.source.mu = mu;
        c.spad.signal.dark_prob_per_gate = dark;
        c.spad.idler.dark_prob_per_gate = dark;
        sww_model(&c).map(|m| m.expected(&geometry))
    };
    // Surface configuration errors before the solver hides them.
    model(config.source.mu, 0.0)?;
    let (mu, dark) = solve_mu_dark(targets, |mu, dark| {
        model(mu, dark).expect("validated above")
    })?;

    let cal = &config.calibration;
    let resonator = config.resonator();
    let power = resonator.required_power(Charge(cal.anchor_charge), cal.anchor_wavelength_nm)?;
    if !(power > 0.0) {
        return Err(Error::Infeasible(
            "anchor charge is aligned without heating; resistance undetermined".into(),
        ));
    }
    let heater_ohms = 1000.0 * cal.anchor_voltage_v * cal.anchor_voltage_v / power;

    let patch = vec![
        format!("source.mu={mu:?}"),
        format!("spad.signal.dark_prob_per_gate={dark:?}"),
        format!("spad.idler.dark_prob_per_gate={dark:?}"),
        format!("resonator.heater_ohms={heater_ohms:?}"),
    ];
    let fitted = config.with_overrides(&patch)?;
    let expected = model(mu, dark)?;
    let car = expected.car();
    let pre_detection_cc = oam_charges()
        .map(|charge| {
            Ok(ChargeValue {
                charge,
                value: pre_detection_cc(&fitted, charge)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CalibrationReport {
        mu,
        dark_prob_signal: dark,
        dark_prob_idler: dark,
        heater_ohms,
        target_cc: targets.cc,
        target_car_mean: targets.car_mean,
        predicted_cc: expected.cc,
        predicted_car_mean: expected.car_mean(),
        predicted_car_min: car.iter().copied().fold(f64::INFINITY, f64::min),
        predicted_car_max: car.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        residual_cc: expected.cc - targets.cc,
        residual_car_mean: expected.car_mean() - targets.car_mean,
        pre_detection_cc,
        patch,
    })
}
