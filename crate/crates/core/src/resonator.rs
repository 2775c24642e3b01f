//! Micro-ring resonance comb, thermo-optic tuning and the WGM order to
//! OAM charge mapping.
//!
//! The comb is modeled locally: resonances are equally spaced by one FSR
//! around a reference order, and heater power red-shifts the whole comb
//! linearly. Order indices are comb labels, not absolute azimuthal mode
//! numbers.

use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Number of resonances summed on each side of the probe wavelength.
const LORENTZIAN_NEIGHBORS: i64 = 64;

/// Whispering-gallery-mode order label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Order(pub i64);

/// OAM topological charge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Charge(pub i32);

impl Charge {
    pub fn abs(self) -> u32 {
        self.0.unsigned_abs()
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Charge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResonatorParams<T: Real = f64> {
    pub fsr_nm: T,
    pub fwhm_nm: T,
    /// Wavelength of `order_ref` at zero heater power.
    pub lambda_ref_nm: T,
    pub order_ref: i64,
    /// On-resonance extinction fraction in (0, 1].
    pub dip_depth: T,
    pub thermo_slope_nm_per_mw: T,
    pub heater_ohms: T,
    pub n_waveguides: u32,
    pub charge_offset: u32,
    /// Modeled band; only orders whose zero-drive resonance lies inside it
    /// are eligible targets for tuning.
    pub band_min_nm: T,
    pub band_max_nm: T,
}

impl<T: Real> Default for ResonatorParams<T> {
    fn default() -> Self {
        Self {
            fsr_nm: T::lit(0.5),
            fwhm_nm: T::lit(0.045),
            lambda_ref_nm: T::lit(1557.27),
            order_ref: 282,
            dip_depth: T::lit(0.5),
            thermo_slope_nm_per_mw: T::lit(0.005),
            heater_ohms: T::lit(crate::config::DEFAULT_HEATER_OHMS),
            n_waveguides: 32,
            charge_offset: 24,
            band_min_nm: T::lit(1530.0),
            band_max_nm: T::lit(1565.0),
        }
    }
}

/// Heater operating point. Power is always derived from voltage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveSetting<T: Real = f64> {
    pub voltage_v: T,
    pub power_mw: T,
}

impl<T: Real> DriveSetting<T> {
    pub fn zero() -> Self {
        Self {
            voltage_v: T::zero(),
            power_mw: T::zero(),
        }
    }

    /// Power dissipated in a resistive heater: `1000 · V² / R` mW.
    pub fn from_voltage(voltage_v: T, params: &ResonatorParams<T>) -> Result<Self> {
        if !(voltage_v >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "heater voltage must be non-negative, got {voltage_v}"
            )));
        }
        Ok(Self {
            voltage_v,
            power_mw: T::lit(1000.0) * voltage_v * voltage_v / params.heater_ohms,
        })
    }
}

impl<T: Real> ResonatorParams<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        if !(self.fwhm_nm > zero) {
            return Err(Error::Validation("resonator.fwhm_nm must be > 0".into()));
        }
        if !(self.fsr_nm > self.fwhm_nm) {
            return Err(Error::Validation(
                "resonator.fsr_nm must exceed resonator.fwhm_nm".into(),
            ));
        }
        if !(self.thermo_slope_nm_per_mw > zero) {
            return Err(Error::Validation(
                "resonator.thermo_slope_nm_per_mw must be > 0".into(),
            ));
        }
        if !(self.heater_ohms > zero) {
            return Err(Error::Validation(
                "resonator.heater_ohms must be > 0".into(),
            ));
        }
        if !(self.dip_depth > zero && self.dip_depth <= T::one()) {
            return Err(Error::Validation(
                "resonator.dip_depth must be in (0, 1]".into(),
            ));
        }
        if self.n_waveguides != 32 {
            return Err(Error::Validation(
                "resonator.n_waveguides must be 32".into(),
            ));
        }
        if self.charge_offset >= self.n_waveguides {
            return Err(Error::Validation(
                "resonator.charge_offset must be in [0, n_waveguides)".into(),
            ));
        }
        if !(self.band_min_nm < self.band_max_nm) {
            return Err(Error::Validation(
                "resonator.band_min_nm must be below resonator.band_max_nm".into(),
            ));
        }
        Ok(())
    }

    /// Resonance wavelength of `order` under `drive`.
    pub fn resonance_wavelength(&self, order: Order, drive: &DriveSetting<T>) -> T {
        self.lambda_ref_nm - T::from_int(order.0 - self.order_ref) * self.fsr_nm
            + self.thermo_slope_nm_per_mw * drive.power_mw
    }

    /// Order whose resonance is nearest to `lambda_nm` under `drive`.
    pub fn nearest_order(&self, lambda_nm: T, drive: &DriveSetting<T>) -> Order {
        let shifted = self.lambda_ref_nm + self.thermo_slope_nm_per_mw * drive.power_mw;
        let steps = ((shifted - lambda_nm) / self.fsr_nm).round();
        Order(self.order_ref + steps.to_i64().unwrap_or(0))
    }

    /// Bus-waveguide transmission: a comb of Lorentzian dips, clamped to [0, 1].
    pub fn transmission(&self, lambda_nm: T, drive: &DriveSetting<T>) -> T {
        let center = self.nearest_order(lambda_nm, drive).0;
        let half = self.fwhm_nm / T::lit(2.0);
        let mut dips = T::zero();
        for p in (center - LORENTZIAN_NEIGHBORS)..=(center + LORENTZIAN_NEIGHBORS) {
            let x = (lambda_nm - self.resonance_wavelength(Order(p), drive)) / half;
            dips = dips + T::one() / (T::one() + x * x);
        }
        (T::one() - self.dip_depth * dips)
            .max(T::zero())
            .min(T::one())
    }

    /// The unique order within `tol_nm` of `lambda_nm`, if any.
    pub fn aligned_order(
        &self,
        lambda_nm: T,
        drive: &DriveSetting<T>,
        tol_nm: T,
    ) -> Result<Option<Order>> {
        let nearest = self.nearest_order(lambda_nm, drive);
        let within = |p: Order| (self.resonance_wavelength(p, drive) - lambda_nm).abs() <= tol_nm;
        let mut hits = [Order(nearest.0 - 1), nearest, Order(nearest.0 + 1)]
            .into_iter()
            .filter(|&p| within(p));
        let first = hits.next();
        if let (Some(a), Some(b)) = (first, hits.next()) {
            return Err(Error::AmbiguousOrder {
                first: a.0,
                second: b.0,
                lambda_nm: lambda_nm.as_f64(),
                tol_nm: tol_nm.as_f64(),
            });
        }
        Ok(first)
    }

    /// Topological charge emitted when `order` is aligned with the signal:
    /// `(p - offset) mod N`, folded into `(-N/2, N/2]`.
    pub fn charge_of_order(&self, order: Order) -> Charge {
        let n = i64::from(self.n_waveguides);
        let r = (order.0 - i64::from(self.charge_offset)).rem_euclid(n);
        let folded = if r > n / 2 { r - n } else { r };
        Charge(folded as i32)
    }

    /// Orders whose zero-drive resonance lies inside the modeled band, in
    /// increasing order (decreasing wavelength).
    pub fn orders_in_band(&self) -> RangeInclusive<i64> {
        let lo = ((self.lambda_ref_nm - self.band_max_nm) / self.fsr_nm).ceil();
        let hi = ((self.lambda_ref_nm - self.band_min_nm) / self.fsr_nm).floor();
        (self.order_ref + lo.to_i64().unwrap_or(0))..=(self.order_ref + hi.to_i64().unwrap_or(0))
    }

    /// Heater power that red-shifts `order` onto `target_nm`.
    pub fn alignment_power(&self, order: Order, target_nm: T) -> Result<T> {
        let shift = target_nm - self.resonance_wavelength(order, &DriveSetting::zero());
        if shift < T::zero() {
            return Err(Error::BlueShiftRequired {
                order: order.0,
                target_nm: target_nm.as_f64(),
            });
        }
        Ok(shift / self.thermo_slope_nm_per_mw)
    }

    /// Lowest in-band order carrying `charge` that can be red-shifted onto
    /// `target_nm`.
    pub fn order_for_charge(&self, charge: Charge, target_nm: T) -> Result<Order> {
        let zero = DriveSetting::zero();
        self.orders_in_band()
            .map(Order)
            .find(|&p| {
                self.charge_of_order(p) == charge
                    && self.resonance_wavelength(p, &zero) <= target_nm
            })
            .ok_or(Error::UnreachableCharge {
                charge: charge.0,
                target_nm: target_nm.as_f64(),
            })
    }

    /// Minimal heater power that emits `charge` at `target_nm`.
    pub fn required_power(&self, charge: Charge, target_nm: T) -> Result<T> {
        let order = self.order_for_charge(charge, target_nm)?;
        self.alignment_power(order, target_nm)
    }

    /// Inverse of [`DriveSetting::from_voltage`].
    pub fn drive_for_power(&self, power_mw: T) -> Result<DriveSetting<T>> {
        if !(power_mw >= T::zero()) {
            return Err(Error::NegativePower(power_mw.as_f64()));
        }
        Ok(DriveSetting {
            voltage_v: (power_mw * self.heater_ohms / T::lit(1000.0)).sqrt(),
            power_mw,
        })
    }
}
