//! Block-parallel acquisition engine.
//!
//! The pulse train is cut into fixed blocks; each block draws from its own
//! random streams, so the merged output does not depend on how blocks are
//! scheduled onto workers.

use rayon::prelude::*;

use crate::analysis::{build_histogram, TcspcHistogram};
use crate::detection::{Arm, ClickGenerator, ClickStream};
use crate::error::Result;
use crate::source::{block_pair_events, PairLaw, PulseBlocks};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Acquisition {
    pub mu: f64,
    pub law: PairLaw,
    pub blocks: PulseBlocks,
    pub clicks: ClickGenerator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionOutput {
    pub signal: ClickStream,
    pub idler: ClickStream,
    pub pulses: u64,
    /// Sum over blocks of pulses carrying at least one pair.
    pub emitting_pulses: u64,
}

impl AcquisitionOutput {
    pub fn histogram(&self, bin_width_ps: u32, span_ps: f64) -> Result<TcspcHistogram> {
        build_histogram(&self.signal, &self.idler, bin_width_ps, span_ps)
    }
}

/// Runs every block on the current rayon pool and merges in block order.
pub fn acquire(acq: &Acquisition) -> AcquisitionOutput {
    let g = &acq.clicks;
    let parts: Vec<_> = (0..acq.blocks.count())
        .into_par_iter()
        .map(|block| {
            let events = block_pair_events(acq.mu, acq.law, &acq.blocks, block, g.seed, g.lane);
            g.block(&acq.blocks, block, events)
        })
        .collect();
    let emitting_pulses = parts.iter().map(|p| p.emitting_pulses).sum();
    let (signal, idler): (Vec<_>, Vec<_>) = parts.into_iter().map(|p| (p.signal, p.idler)).unzip();
    AcquisitionOutput {
        signal: ClickStream::concat(Arm::Signal, signal),
        idler: ClickStream::concat(Arm::Idler, idler),
        pulses: acq.blocks.n_pulses,
        emitting_pulses,
    }
}
