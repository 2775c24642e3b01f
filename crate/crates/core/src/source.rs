//! Pulsed SFWM pair source in the silicon wire waveguide.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{Real, C_NM_THZ};
use crate::rng::{block_stream, geometric_skip, Purpose};

#[derive(Clone, Debug, PartialEq)]
pub struct PumpConfig {
    pub lambda_p_nm: f64,
    pub rep_rate_hz: f64,
    /// Acquisition time.
    pub duration_s: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            lambda_p_nm: 1552.5,
            rep_rate_hz: 4.0e7,
            duration_s: 600.0,
        }
    }
}

impl PumpConfig {
    pub fn pulse_count(&self) -> u64 {
        (self.rep_rate_hz * self.duration_s).round() as u64
    }

    pub fn period_ps(&self) -> f64 {
        1.0e12 / self.rep_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz > 0.0) {
            return Err(Error::Validation("pump.rep_rate_hz must be > 0".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Validation("pump.duration_s must be > 0".into()));
        }
        if !(self.lambda_p_nm > 0.0) {
            return Err(Error::Validation("pump.lambda_p_nm must be > 0".into()));
        }
        Ok(())
    }
}

pub fn frequency_thz<T: Real>(lambda_nm: T) -> T {
    T::lit(C_NM_THZ) / lambda_nm
}

/// Idler wavelength from `ωs + ωi = 2ωp`, i.e. `1/λi = 2/λp - 1/λs`.
pub fn idler_wavelength<T: Real>(lambda_p_nm: T, lambda_s_nm: T) -> Result<T> {
    let inverse = T::lit(2.0) / lambda_p_nm - T::one() / lambda_s_nm;
    if !(lambda_s_nm > T::zero()) || !(inverse > T::zero()) {
        return Err(Error::Domain(format!(
            "signal {lambda_s_nm} nm has no idler partner for pump {lambda_p_nm} nm"
        )));
    }
    Ok(T::one() / inverse)
}

/// Silicon's narrow Raman line, offset from the pump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RamanBand<T: Real = f64> {
    pub shift_thz: T,
    pub linewidth_thz: T,
    /// Half-widths of margin kept on each side of the Raman line.
    pub guard: T,
}

impl<T: Real> Default for RamanBand<T> {
    fn default() -> Self {
        Self {
            shift_thz: T::lit(15.6),
            linewidth_thz: T::lit(0.103),
            guard: T::lit(3.0),
        }
    }
}

impl<T: Real> RamanBand<T> {
    pub fn with_guard(guard: T) -> Self {
        Self {
            guard,
            ..Self::default()
        }
    }

    /// True when `lambda_x_nm` stays outside the guarded Raman band.
    pub fn clear(&self, lambda_p_nm: T, lambda_x_nm: T) -> bool {
        let offset = (frequency_thz(lambda_x_nm) - frequency_thz(lambda_p_nm)).abs();
        let half = self.linewidth_thz / T::lit(2.0) * self.guard;
        offset < self.shift_thz - half || offset > self.shift_thz + half
    }
}

pub fn raman_band_clear<T: Real>(lambda_p_nm: T, lambda_x_nm: T) -> bool {
    RamanBand::default().clear(lambda_p_nm, lambda_x_nm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairStatistics<T: Real = f64> {
    /// Mean pairs per pulse.
    pub mu: T,
    pub lambda_s_nm: T,
    pub lambda_i_nm: T,
}

impl<T: Real> PairStatistics<T> {
    pub fn new(mu: T, lambda_p_nm: T, lambda_s_nm: T) -> Result<Self> {
        if !(mu >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "mu must be >= 0, got {mu}"
            )));
        }
        Ok(Self {
            mu,
            lambda_s_nm,
            lambda_i_nm: idler_wavelength(lambda_p_nm, lambda_s_nm)?,
        })
    }

    /// `|1/λs + 1/λi - 2/λp|` in nm⁻¹.
    pub fn energy_residual(&self, lambda_p_nm: T) -> T {
        (T::one() / self.lambda_s_nm + T::one() / self.lambda_i_nm - T::lit(2.0) / lambda_p_nm)
            .abs()
    }

    /// Same pair with signal and idler roles swapped.
    pub fn exchanged(&self) -> Self {
        Self {
            mu: self.mu,
            lambda_s_nm: self.lambda_i_nm,
            lambda_i_nm: self.lambda_s_nm,
        }
    }
}

/// Photon-number law of pairs within one pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLaw {
    #[default]
    Poisson,
    Thermal,
}

impl PairLaw {
    /// Probability that a pulse carries at least one pair.
    pub fn emit_probability(self, mu: f64) -> f64 {
        match self {
            PairLaw::Poisson => -(-mu).exp_m1(),
            PairLaw::Thermal => mu / (1.0 + mu),
        }
    }

    /// `ln P(n = 0)`.
    fn log_empty(self, mu: f64) -> f64 {
        match self {
            PairLaw::Poisson => -mu,
            PairLaw::Thermal => -mu.ln_1p(),
        }
    }

    /// `E[n(n-1)] / μ²`: 1 for Poisson, 2 for single-mode thermal.
    pub fn bunching(self) -> f64 {
        match self {
            PairLaw::Poisson => 1.0,
            PairLaw::Thermal => 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairEvent {
    pub pulse_index: u64,
    pub n_pairs: u32,
}

/// Fixed partition of the pulse train into blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PulseBlocks {
    pub n_pulses: u64,
    pub block_pulses: u64,
}

impl PulseBlocks {
    pub const DEFAULT_BLOCK_PULSES: u64 = 1 << 24;

    pub fn new(n_pulses: u64, block_pulses: u64) -> Self {
        Self {
            n_pulses,
            block_pulses: block_pulses.max(1),
        }
    }

    pub fn count(&self) -> u64 {
        self.n_pulses.div_ceil(self.block_pulses)
    }

    pub fn range(&self, block: u64) -> Range<u64> {
        let start = block * self.block_pulses;
        start..(start + self.block_pulses).min(self.n_pulses)
    }

    pub fn block_of(&self, pulse: u64) -> u64 {
        pulse / self.block_pulses
    }
}

/// Emitting pulses of one block, found by geometric gap sampling so that
/// empty pulses cost nothing.
#[derive(Clone, Debug)]
pub struct EmittingPulses {
    rng: ChaCha8Rng,
    next: u64,
    end: u64,
    law: PairLaw,
    mu: f64,
    log_empty: f64,
    /// P(n = 1 | n >= 1)
    p_single: f64,
}

impl EmittingPulses {
    pub fn new(mu: f64, law: PairLaw, pulses: Range<u64>, rng: ChaCha8Rng) -> Self {
        let log_empty = if mu > 0.0 { law.log_empty(mu) } else { 0.0 };
        let p_emit = law.emit_probability(mu);
        let p_single = match law {
            PairLaw::Poisson => mu * (-mu).exp() / p_emit,
            PairLaw::Thermal => 1.0 / (1.0 + mu),
        };
        Self {
            rng,
            next: pulses.start,
            end: pulses.end,
            law,
            mu,
            log_empty,
            p_single,
        }
    }

    fn draw_pairs(&mut self) -> u32 {
        let u: f64 = self.rng.random();
        if u < self.p_single {
            return 1;
        }
        match self.law {
            PairLaw::Poisson => {
                // Continue the zero-truncated inversion from k = 2.
                let mut k = 1u32;
                let mut pk = self.p_single;
                let mut cdf = pk;
                while u >= cdf && k < 10_000 {
                    k += 1;
                    pk *= self.mu / f64::from(k);
                    if pk == 0.0 {
                        break;
                    }
                    cdf += pk;
                }
                k
            }
            PairLaw::Thermal => {
                // Memoryless: given n >= 2, n - 2 is again geometric.
                let ratio = self.mu / (1.0 + self.mu);
                2 + geometric_skip(&mut self.rng, ratio.ln()).min(u64::from(u32::MAX - 1)) as u32
            }
        }
    }
}

impl Iterator for EmittingPulses {
    type Item = PairEvent;

    fn next(&mut self) -> Option<PairEvent> {
        if self.log_empty == 0.0 || self.next >= self.end {
            return None;
        }
        let gap = geometric_skip(&mut self.rng, self.log_empty);
        let pulse = self.next.saturating_add(gap);
        if pulse >= self.end {
            self.next = self.end;
            return None;
        }
        self.next = pulse + 1;
        Some(PairEvent {
            pulse_index: pulse,
            n_pairs: self.draw_pairs(),
        })
    }
}

/// Emitting pulses for one block of an acquisition.
pub fn block_pair_events(
    mu: f64,
    law: PairLaw,
    blocks: &PulseBlocks,
    block: u64,
    seed: u64,
    lane: u64,
) -> EmittingPulses {
    EmittingPulses::new(
        mu,
        law,
        blocks.range(block),
        block_stream(seed, lane, block, Purpose::Pairs),
    )
}

/// Whole-acquisition stream of emitting pulses, block after block.
pub fn sample_pair_events(
    pump: &PumpConfig,
    stats: &PairStatistics<f64>,
    law: PairLaw,
    seed: u64,
) -> impl Iterator<Item = PairEvent> {
    let blocks = PulseBlocks::new(pump.pulse_count(), PulseBlocks::DEFAULT_BLOCK_PULSES);
    let mu = stats.mu;
    if mu > 0.1 {
        log::warn!("mean pairs per pulse {mu} is large; first-order coincidence algebra degrades");
    }
    (0..blocks.count()).flat_map(move |b| block_pair_events(mu, law, &blocks, b, seed, 0))
}
