//! Measurement chain: dB loss budget, SLM projection, and SPAD click
//! generation with efficiency, dark counts and timing jitter.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::emitter::{EmitterParams, ModeSpectrum, MASK_CHARGES};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::resonator::Charge;
use crate::rng::{block_stream, geometric_skip, log_complement, Purpose};
use crate::source::{PairEvent, PulseBlocks};

/// `10^(-db/10)`.
pub fn db_to_fraction<T: Real>(db: T) -> T {
    T::lit(10.0).powf(-db / T::lit(10.0))
}

/// Inverse of [`db_to_fraction`].
pub fn fraction_to_db<T: Real>(fraction: T) -> T {
    -T::lit(10.0) * fraction.log10()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBudget<T: Real = f64> {
    /// Grating coupler loss into the chip.
    pub coupling_in_db: T,
    /// Silicon-wire waveguide loss.
    pub sww_db: T,
    /// Signal detection path after emission, keyed by |l|. Excludes the
    /// objective, which is carried by `objective_coupling`.
    pub signal_path_db: BTreeMap<u32, T>,
    /// Output grating, DWDM and fiber losses of a bus-guided photon.
    pub idler_arm_db: T,
    pub objective_coupling: T,
}

impl<T: Real> Default for LossBudget<T> {
    fn default() -> Self {
        // Aggregate detection loss (objective included) from 18.96 dB at
        // |l| = 1 down to 14.53 dB at |l| = 6.
        let objective = 0.40;
        let objective_db = -10.0 * f64::log10(objective);
        let signal_path_db = (1..=6u32)
            .map(|abs| {
                let aggregate = 18.96 + (14.53 - 18.96) * f64::from(abs - 1) / 5.0;
                (abs, T::lit(aggregate - objective_db))
            })
            .collect();
        Self {
            coupling_in_db: T::lit(7.0),
            sww_db: T::lit(1.0),
            signal_path_db,
            idler_arm_db: T::lit(3.0),
            objective_coupling: T::lit(objective),
        }
    }
}

impl<T: Real> LossBudget<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let named = [
            ("coupling_in_db", self.coupling_in_db),
            ("sww_db", self.sww_db),
            ("idler_arm_db", self.idler_arm_db),
        ];
        for (name, db) in named {
            if !(db >= zero) {
                return Err(Error::Validation(format!("detection.{name} must be >= 0")));
            }
        }
        if self.signal_path_db.values().any(|&db| !(db >= zero)) {
            return Err(Error::Validation(
                "detection.signal_path db values must be >= 0".into(),
            ));
        }
        if !(self.objective_coupling > zero && self.objective_coupling <= T::one()) {
            return Err(Error::Validation(
                "detection.objective_coupling must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn path_db(&self, charge: Charge) -> Result<T> {
        self.signal_path_db
            .get(&charge.abs())
            .copied()
            .ok_or(Error::UnknownCharge(charge.0))
    }

    /// Detection loss after emission including the objective, in dB.
    pub fn aggregate_detection_db(&self, charge: Charge) -> Result<T> {
        Ok(self.path_db(charge)? + fraction_to_db(self.objective_coupling))
    }

    /// Loss shared by both photons before they separate: coupling in plus
    /// the silicon wire.
    pub fn on_chip_db(&self) -> T {
        self.coupling_in_db + self.sww_db
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpadParams {
    pub det_efficiency: f64,
    /// Dark click probability per pulse period.
    pub dark_prob_per_gate: f64,
    pub jitter_sigma_ps: f64,
}

impl Default for SpadParams {
    fn default() -> Self {
        Self {
            det_efficiency: 0.1494,
            dark_prob_per_gate: crate::config::CALIBRATED_DARK_PROB,
            jitter_sigma_ps: 60.0,
        }
    }
}

impl SpadParams {
    pub fn validate(&self, arm: Arm) -> Result<()> {
        let name = arm.name();
        if !(self.det_efficiency > 0.0 && self.det_efficiency <= 1.0) {
            return Err(Error::Validation(format!(
                "spad.{name}.det_efficiency must lie in (0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&self.dark_prob_per_gate) {
            return Err(Error::Validation(format!(
                "spad.{name}.dark_prob_per_gate must lie in [0, 1)"
            )));
        }
        if !(self.jitter_sigma_ps > 0.0 && self.jitter_sigma_ps.is_finite()) {
            return Err(Error::Validation(format!(
                "spad.{name}.jitter_sigma_ps must be > 0"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Signal,
    Idler,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Signal => "signal",
            Arm::Idler => "idler",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Pair,
    Dark,
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::Pair => "pair",
            Origin::Dark => "dark",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClickRecord {
    pub arm: Arm,
    pub time_ps: f64,
    pub origin: Origin,
}

/// Time-sorted clicks of one detector, stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickStream {
    pub arm: Arm,
    pub time_ps: Vec<f64>,
    pub origin: Vec<Origin>,
}

impl ClickStream {
    pub fn new(arm: Arm) -> Self {
        Self {
            arm,
            time_ps: Vec::new(),
            origin: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.time_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_ps.is_empty()
    }

    pub fn push(&mut self, time_ps: f64, origin: Origin) {
        self.time_ps.push(time_ps);
        self.origin.push(origin);
    }

    pub fn records(&self) -> impl Iterator<Item = ClickRecord> + '_ {
        self.time_ps
            .iter()
            .zip(&self.origin)
            .map(|(&time_ps, &origin)| ClickRecord {
                arm: self.arm,
                time_ps,
                origin,
            })
    }

    pub fn is_sorted(&self) -> bool {
        self.time_ps.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.origin.iter().filter(|&&o| o == origin).count()
    }

    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.time_ps[a].total_cmp(&self.time_ps[b]));
        self.time_ps = idx.iter().map(|&i| self.time_ps[i]).collect();
        self.origin = idx.iter().map(|&i| self.origin[i]).collect();
    }

    /// Appends streams in order; falls back to a stable sort only if
    /// jitter pushed a click across a block boundary.
    pub fn concat(arm: Arm, parts: impl IntoIterator<Item = ClickStream>) -> Self {
        let mut out = Self::new(arm);
        for part in parts {
            out.time_ps.extend(part.time_ps);
            out.origin.extend(part.origin);
        }
        if !out.is_sorted() {
            out.sort();
        }
        out
    }
}

/// Optical path of one arm.
#[derive(Clone, Debug, PartialEq)]
pub enum ArmPath<T: Real = f64> {
    /// Stays in the bus waveguide and leaves through the output grating.
    Bus,
    /// Converted by the emitter, projected by the SLM mask, then collected
    /// through the objective.
    Emitter {
        charge: Charge,
        spectrum: ModeSpectrum<T>,
        mask: Charge,
    },
}

/// Probability that the SLM mask converts the photon back to the
/// fundamental mode.
pub fn slm_pass_probability<T: Real>(spectrum: &ModeSpectrum<T>, mask: Charge) -> Result<T> {
    if !MASK_CHARGES.contains(&mask.0) {
        return Err(Error::UnknownCharge(mask.0));
    }
    Ok(spectrum.weight(mask))
}

/// End-to-end click probability of one photon in `path`.
pub fn arm_survival<T: Real>(
    path: &ArmPath<T>,
    budget: &LossBudget<T>,
    emitter: &EmitterParams<T>,
    det_efficiency: T,
) -> Result<T> {
    let det = det_efficiency;
    match path {
        ArmPath::Bus => Ok(db_to_fraction(budget.on_chip_db() + budget.idler_arm_db) * det),
        ArmPath::Emitter {
            charge,
            spectrum,
            mask,
        } => {
            let chip = db_to_fraction(budget.on_chip_db());
            let eta = emitter.emission_efficiency(*charge)?;
            let slm = slm_pass_probability(spectrum, *mask)?;
            let path = db_to_fraction(budget.path_db(*charge)?);
            Ok(chip * eta * slm * path * budget.objective_coupling * det)
        }
    }
}

/// Emission time of pulse `k`: the middle of its period.
pub fn pulse_time_ps(pulse: u64, period_ps: f64) -> f64 {
    (pulse as f64 + 0.5) * period_ps
}

/// Per-arm detection settings of one acquisition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmDetector {
    pub survival: f64,
    pub spad: SpadParams,
}

struct ArmState {
    detect: ChaCha8Rng,
    log_miss: f64,
    /// Pairs left to skip before the next detected one.
    skip: u64,
    jitter: Normal<f64>,
    stream: ClickStream,
}

impl ArmState {
    fn new(arm: Arm, det: &ArmDetector, mut detect: ChaCha8Rng) -> Self {
        let log_miss = log_complement(det.survival.clamp(0.0, 1.0));
        let skip = geometric_skip(&mut detect, log_miss);
        Self {
            detect,
            log_miss,
            skip,
            // Only fails for a non-finite sigma, which validation rejects.
            jitter: Normal::new(0.0, det.spad.jitter_sigma_ps.max(0.0))
                .unwrap_or_else(|_| Normal::new(0.0, 0.0).expect("zero sigma")),
            stream: ClickStream::new(arm),
        }
    }

    fn offer_pairs(&mut self, n: u32, t0: f64) {
        let mut left = u64::from(n);
        while self.skip < left {
            left -= self.skip + 1;
            let t = (t0 + self.jitter.sample(&mut self.detect)).max(0.0);
            self.stream.push(t, Origin::Pair);
            self.skip = geometric_skip(&mut self.detect, self.log_miss);
        }
        self.skip -= left;
    }
}

fn dark_clicks(
    arm: Arm,
    dark_prob: f64,
    pulses: Range<u64>,
    period_ps: f64,
    mut rng: ChaCha8Rng,
) -> ClickStream {
    let mut out = ClickStream::new(arm);
    let log_q = log_complement(dark_prob);
    let mut k = pulses.start;
    loop {
        k = k.saturating_add(geometric_skip(&mut rng, log_q));
        if k >= pulses.end {
            break;
        }
        let u: f64 = rng.random();
        out.push((k as f64 + u) * period_ps, Origin::Dark);
        k += 1;
    }
    out
}

fn merge_sorted(arm: Arm, a: ClickStream, b: ClickStream) -> ClickStream {
    let mut out = ClickStream::new(arm);
    out.time_ps.reserve(a.len() + b.len());
    out.origin.reserve(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a.time_ps[i] <= b.time_ps[j]);
        if take_a {
            out.push(a.time_ps[i], a.origin[i]);
            i += 1;
        } else {
            out.push(b.time_ps[j], b.origin[j]);
            j += 1;
        }
    }
    out
}

/// Clicks of one pulse block on both arms.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockClicks {
    pub signal: ClickStream,
    pub idler: ClickStream,
    pub emitting_pulses: u64,
}

/// Deterministic click generator for one acquisition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClickGenerator {
    pub signal: ArmDetector,
    pub idler: ArmDetector,
    pub period_ps: f64,
    pub seed: u64,
    pub lane: u64,
}

impl ClickGenerator {
    /// Turns the emitting pulses of `block` into two sorted click streams.
    pub fn block(
        &self,
        blocks: &PulseBlocks,
        block: u64,
        events: impl IntoIterator<Item = PairEvent>,
    ) -> BlockClicks {
        let stream = |p| block_stream(self.seed, self.lane, block, p);
        let mut sig = ArmState::new(Arm::Signal, &self.signal, stream(Purpose::SignalDetect));
        let mut idl = ArmState::new(Arm::Idler, &self.idler, stream(Purpose::IdlerDetect));
        let mut emitting = 0;
        for ev in events {
            emitting += 1;
            let t0 = pulse_time_ps(ev.pulse_index, self.period_ps);
            sig.offer_pairs(ev.n_pairs, t0);
            idl.offer_pairs(ev.n_pairs, t0);
        }
        let range = blocks.range(block);
        let finish = |state: ArmState, det: &ArmDetector, purpose| {
            let darks = dark_clicks(
                state.stream.arm,
                det.spad.dark_prob_per_gate,
                range.clone(),
                self.period_ps,
                stream(purpose),
            );
            let mut pairs = state.stream;
            if !pairs.is_sorted() {
                pairs.sort();
            }
            merge_sorted(pairs.arm, pairs, darks)
        };
        BlockClicks {
            signal: finish(sig, &self.signal, Purpose::SignalDark),
            idler: finish(idl, &self.idler, Purpose::IdlerDark),
            emitting_pulses: emitting,
        }
    }
}

/// Serial click generation over a whole acquisition of `blocks`, from
/// pair events sorted by pulse index. Produces exactly the streams of the
/// block-parallel engine.
pub fn generate_clicks(
    pair_events: &[PairEvent],
    blocks: &PulseBlocks,
    generator: &ClickGenerator,
) -> (ClickStream, ClickStream) {
    let mut signal = Vec::new();
    let mut idler = Vec::new();
    for block in 0..blocks.count() {
        let range = blocks.range(block);
        let lo = pair_events.partition_point(|e| e.pulse_index < range.start);
        let hi = pair_events.partition_point(|e| e.pulse_index < range.end);
        let out = generator.block(blocks, block, pair_events[lo..hi].iter().copied());
        signal.push(out.signal);
        idler.push(out.idler);
    }
    (
        ClickStream::concat(Arm::Signal, signal),
        ClickStream::concat(Arm::Idler, idler),
    )
}

/// Writes time tags as CSV, `arm,time_ps` plus `origin` when requested.
pub fn write_time_tags<W: Write>(
    mut out: W,
    streams: &[&ClickStream],
    with_origin: bool,
) -> Result<()> {
    if with_origin {
        writeln!(out, "arm,time_ps,origin")?;
    } else {
        writeln!(out, "arm,time_ps")?;
    }
    for s in streams {
        for r in s.records() {
            if with_origin {
                writeln!(out, "{},{},{}", r.arm.name(), r.time_ps, r.origin.name())?;
            } else {
                writeln!(out, "{},{}", r.arm.name(), r.time_ps)?;
            }
        }
    }
    Ok(())
}
