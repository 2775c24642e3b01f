//! OAM emitter: routing of resonance-aligned signal photons, per-charge
//! emission efficiency and the mode-purity spectrum.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::resonator::{Charge, DriveSetting, ResonatorParams};

/// Charges over which mode purity is normalized.
pub const PURITY_BASIS: RangeInclusive<i32> = -6..=6;
/// Phase-mask charges recorded during tomography.
pub const MASK_CHARGES: RangeInclusive<i32> = -7..=7;
const SUPPORT_LEN: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct EmitterParams<T: Real = f64> {
    /// Fraction of the WGM picked up by each download waveguide.
    pub per_waveguide_coupling: T,
    /// Emission efficiency keyed by |l|.
    pub efficiency: BTreeMap<u32, T>,
    pub purity_target: T,
}

impl<T: Real> Default for EmitterParams<T> {
    fn default() -> Self {
        // Affine between the measured endpoints: 1.97 % at |l| = 1 down to
        // 0.93 % at |l| = 6.
        let efficiency = (1..=6u32)
            .map(|abs| {
                let pct = 1.97 - 0.208 * f64::from(abs - 1);
                (abs, T::lit(pct / 100.0))
            })
            .collect();
        Self {
            per_waveguide_coupling: T::lit(0.01),
            efficiency,
            purity_target: T::lit(0.85),
        }
    }
}

impl<T: Real> EmitterParams<T> {
    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        if self.efficiency.is_empty() {
            return Err(Error::Validation(
                "emitter.efficiency table is empty".into(),
            ));
        }
        if self.efficiency.values().any(|&e| !(e > zero && e < one)) {
            return Err(Error::Validation(
                "emitter.efficiency values must lie in (0, 1)".into(),
            ));
        }
        if !(self.purity_target > zero && self.purity_target <= one) {
            return Err(Error::Validation(
                "emitter.purity_target must lie in (0, 1]".into(),
            ));
        }
        if !(self.per_waveguide_coupling > zero && self.per_waveguide_coupling <= one) {
            return Err(Error::Validation(
                "emitter.per_waveguide_coupling must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn emission_efficiency(&self, charge: Charge) -> Result<T> {
        self.efficiency
            .get(&charge.abs())
            .copied()
            .ok_or(Error::UnknownCharge(charge.0))
    }

    /// Target-heavy spectrum with uniform leakage over the rest of the
    /// purity basis and nothing at ±7.
    pub fn default_spectrum(&self, charge: Charge) -> Result<ModeSpectrum<T>> {
        if !PURITY_BASIS.contains(&charge.0) {
            return Err(Error::UnknownCharge(charge.0));
        }
        let others = T::from_int(PURITY_BASIS.count() as i64 - 1);
        let leak = (T::one() - self.purity_target) / others;
        let mut weights = [T::zero(); SUPPORT_LEN];
        for m in PURITY_BASIS {
            weights[ModeSpectrum::<T>::slot(m)] = if m == charge.0 {
                self.purity_target
            } else {
                leak
            };
        }
        Ok(ModeSpectrum { weights })
    }
}

/// Power distribution over OAM charges −7..7.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeSpectrum<T: Real = f64> {
    weights: [T; SUPPORT_LEN],
}

impl<T: Real> ModeSpectrum<T> {
    fn slot(charge: i32) -> usize {
        (charge - MASK_CHARGES.start()) as usize
    }

    /// All power in `charge`.
    pub fn delta(charge: Charge) -> Result<Self> {
        if !MASK_CHARGES.contains(&charge.0) {
            return Err(Error::UnknownCharge(charge.0));
        }
        let mut weights = [T::zero(); SUPPORT_LEN];
        weights[Self::slot(charge.0)] = T::one();
        Ok(Self { weights })
    }

    /// Normalizes nonnegative weights listed for charges −7..7.
    pub fn from_weights(raw: [T; SUPPORT_LEN]) -> Result<Self> {
        if raw.iter().any(|&w| !(w >= T::zero())) {
            return Err(Error::InvalidParameter(
                "spectrum weights must be >= 0".into(),
            ));
        }
        let total = raw.iter().fold(T::zero(), |a, &b| a + b);
        if !(total > T::zero()) {
            return Err(Error::ZeroBasisMass);
        }
        Ok(Self {
            weights: raw.map(|w| w / total),
        })
    }

    pub fn weight(&self, charge: Charge) -> T {
        if MASK_CHARGES.contains(&charge.0) {
            self.weights[Self::slot(charge.0)]
        } else {
            T::zero()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Charge, T)> + '_ {
        MASK_CHARGES
            .zip(self.weights.iter().copied())
            .map(|(m, w)| (Charge(m), w))
    }

    pub fn total(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// `I_l / Σ_{m=-6..6} I_m`; the ±7 components stay out of the denominator.
pub fn purity_of<T: Real>(spectrum: &ModeSpectrum<T>, charge: Charge) -> Result<T> {
    let basis = PURITY_BASIS.fold(T::zero(), |acc, m| acc + spectrum.weight(Charge(m)));
    if !(basis > T::zero()) {
        return Err(Error::ZeroBasisMass);
    }
    Ok(spectrum.weight(charge) / basis)
}

/// A signal photon after conversion. The azimuthally polarized mode splits
/// evenly into circular components with `l = l_L - 1 = l_R + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct OamPhoton<T: Real = f64> {
    pub charge: Charge,
    pub spectrum: ModeSpectrum<T>,
    pub l_left: i32,
    pub l_right: i32,
}

impl<T: Real> OamPhoton<T> {
    pub fn new(charge: Charge, spectrum: ModeSpectrum<T>) -> Self {
        Self {
            charge,
            spectrum,
            l_left: charge.0 + 1,
            l_right: charge.0 - 1,
        }
    }

    pub fn purity(&self) -> Result<T> {
        purity_of(&self.spectrum, self.charge)
    }
}

/// Converts the signal photon if its wavelength sits on a ring resonance
/// (within half a linewidth); otherwise it stays in the bus waveguide.
pub fn try_emit<T: Real>(
    lambda_s_nm: T,
    drive: &DriveSetting<T>,
    resonator: &ResonatorParams<T>,
    emitter: &EmitterParams<T>,
) -> Result<Option<OamPhoton<T>>> {
    let tol = resonator.fwhm_nm / T::lit(2.0);
    let Some(order) = resonator.aligned_order(lambda_s_nm, drive, tol)? else {
        return Ok(None);
    };
    let charge = resonator.charge_of_order(order);
    let spectrum = emitter.default_spectrum(charge)?;
    Ok(Some(OamPhoton::new(charge, spectrum)))
}
