//! TCSPC delay histogram, CC/ACC/CAR extraction, the closed-form
//! coincidence oracle and the tomography purity estimator.

use std::io::Write;

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{Arm, ClickStream};
use crate::emitter::{ModeSpectrum, MASK_CHARGES, PURITY_BASIS};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::resonator::Charge;
use crate::rng::{block_stream, Purpose};

const IDLER_CHUNK: usize = 1 << 15;

/// Histogram of `t_signal - t_idler`.
///
/// Bin `b` covers `[origin_ps + b·w, origin_ps + (b+1)·w)`. Bins are laid
/// out symmetrically so that the middle bin is centered on zero delay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcspcHistogram {
    pub bin_width_ps: u32,
    pub origin_ps: f64,
    pub counts: Vec<u64>,
}

impl TcspcHistogram {
    /// Empty histogram with `2K + 1` bins reaching at least `span_ps`
    /// either side of zero.
    pub fn new(bin_width_ps: u32, span_ps: f64) -> Result<Self> {
        if bin_width_ps == 0 || !(span_ps > 0.0) {
            return Err(Error::InvalidParameter(
                "histogram needs a positive bin width and span".into(),
            ));
        }
        let w = f64::from(bin_width_ps);
        let half = (span_ps / w - 0.5).ceil().max(0.0) as i64;
        Ok(Self {
            bin_width_ps,
            origin_ps: -((2 * half + 1) as f64) * w / 2.0,
            counts: vec![0; (2 * half + 1) as usize],
        })
    }

    fn origin(&self) -> f64 {
        self.origin_ps
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn zero_bin(&self) -> usize {
        self.counts.len() / 2
    }

    pub fn bin_start_ps(&self, bin: usize) -> f64 {
        self.origin() + bin as f64 * f64::from(self.bin_width_ps)
    }

    pub fn bin_center_ps(&self, bin: usize) -> f64 {
        self.bin_start_ps(bin) + f64::from(self.bin_width_ps) / 2.0
    }

    /// Reach of the histogram on either side of zero delay.
    pub fn span_ps(&self) -> f64 {
        -self.origin()
    }

    /// Adds another histogram with identical geometry.
    pub fn merge(&mut self, other: &TcspcHistogram) -> Result<()> {
        if self.bin_width_ps != other.bin_width_ps || self.counts.len() != other.counts.len() {
            return Err(Error::InvalidParameter(
                "histogram geometries differ".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Maximum bin; ties go to the bin whose center is closest to zero.
    pub fn main_peak(&self) -> Result<usize> {
        self.main_peak_within(f64::INFINITY)
    }

    /// [`Self::main_peak`] restricted to bins centered within `reach_ps`
    /// of zero delay.
    pub fn main_peak_within(&self, reach_ps: f64) -> Result<usize> {
        let zero = self.zero_bin();
        let best = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| self.bin_center_ps(*i).abs() <= reach_ps)
            .max_by(|(i, a), (j, b)| a.cmp(b).then(zero.abs_diff(*j).cmp(&zero.abs_diff(*i))))
            .map(|(i, _)| i);
        match best {
            Some(i) if self.counts[i] > 0 => Ok(i),
            _ => Err(Error::DegenerateHistogram),
        }
    }

    /// Writes `bin_start_ps,count` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_start_ps,count")?;
        for (b, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{}", self.bin_start_ps(b), c)?;
        }
        Ok(())
    }
}

/// Bins every (signal, idler) click pair whose delay falls inside the
/// histogram span.
pub fn build_histogram(
    signal: &ClickStream,
    idler: &ClickStream,
    bin_width_ps: u32,
    span_ps: f64,
) -> Result<TcspcHistogram> {
    if !signal.is_sorted() {
        return Err(Error::UnsortedClicks(Arm::Signal));
    }
    if !idler.is_sorted() {
        return Err(Error::UnsortedClicks(Arm::Idler));
    }
    let empty = TcspcHistogram::new(bin_width_ps, span_ps)?;
    let origin = empty.origin();
    let w = f64::from(bin_width_ps);
    let nbins = empty.counts.len();
    let s = &signal.time_ps;
    let counts = idler
        .time_ps
        .par_chunks(IDLER_CHUNK)
        .map(|chunk| {
            let mut local = vec![0u64; nbins];
            let mut lo = s.partition_point(|&t| t < chunk[0] + origin);
            for &ti in chunk {
                while lo < s.len() && s[lo] < ti + origin {
                    lo += 1;
                }
                for &ts in &s[lo..] {
                    let bin = ((ts - ti - origin) / w).floor();
                    if bin >= nbins as f64 {
                        break;
                    }
                    local[bin.max(0.0) as usize] += 1;
                }
            }
            local
        })
        .reduce(
            || vec![0u64; nbins],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(TcspcHistogram { counts, ..empty })
}

/// Window shape and side-peak layout used for CC and ACC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_bins: usize,
    pub period_ps: f64,
    /// Side peaks evaluated on each side of the main peak.
    pub side_peaks: u32,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_bins: 5,
            period_ps: 25_000.0,
            side_peaks: 7,
        }
    }
}

impl WindowSpec {
    /// Bin offset of side peak `j` from the main peak.
    pub fn offset_bins(&self, j: i32, bin_width_ps: u32) -> i64 {
        (f64::from(j) * self.period_ps / f64::from(bin_width_ps)).round() as i64
    }

    /// Signed side-peak indices in report order: -k..-1 then 1..k.
    pub fn side_indices(&self) -> Vec<i32> {
        let k = self.side_peaks as i32;
        (-k..=-1).chain(1..=k).collect()
    }

    /// Histogram reach needed to evaluate every side window.
    pub fn required_span_ps(&self, bin_width_ps: u32) -> f64 {
        let w = f64::from(bin_width_ps);
        let last = self.offset_bins(self.side_peaks as i32, bin_width_ps) as f64;
        (last + (self.window_bins / 2) as f64 + 0.5) * w
    }
}

fn window_sum(hist: &TcspcHistogram, center: i64, window_bins: usize) -> Result<u64> {
    let half = (window_bins / 2) as i64;
    let (lo, hi) = (center - half, center + half);
    if lo < 0 || hi >= hist.counts.len() as i64 {
        return Err(Error::SpanTooSmall {
            offset_bins: center - hist.zero_bin() as i64,
        });
    }
    Ok(hist.counts[lo as usize..=hi as usize].iter().sum())
}

/// Coincidence counts: the window centered on the main peak.
pub fn extract_cc(hist: &TcspcHistogram, window_bins: usize) -> Result<u64> {
    let peak = hist.main_peak()?;
    window_sum(hist, peak as i64, window_bins)
}

/// Accidentals: the same window at every side-peak offset, in the order
/// of [`WindowSpec::side_indices`].
pub fn extract_acc(hist: &TcspcHistogram, spec: &WindowSpec) -> Result<Vec<u64>> {
    let peak = hist.main_peak_within(spec.period_ps / 2.0)? as i64;
    spec.side_indices()
        .into_iter()
        .map(|j| {
            window_sum(
                hist,
                peak + spec.offset_bins(j, hist.bin_width_ps),
                spec.window_bins,
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarStats {
    /// `cc / acc_j`, with a zero `acc_j` replaced by one.
    pub car: Vec<f64>,
    pub car_min: f64,
    pub car_max: f64,
    pub car_mean: f64,
    /// `cc / mean(acc)`.
    pub car_pooled: f64,
    /// Set when some `acc_j` is zero; the affected ratios are lower bounds.
    pub car_lower_bound: bool,
}

pub fn car_stats(cc: f64, acc: &[f64]) -> CarStats {
    let car: Vec<f64> = acc.iter().map(|&a| cc / a.max(1.0)).collect();
    let n = car.len().max(1) as f64;
    let mean_acc = acc.iter().sum::<f64>() / n;
    CarStats {
        car_min: car.iter().copied().fold(f64::INFINITY, f64::min),
        car_max: car.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        car_mean: car.iter().sum::<f64>() / n,
        car_pooled: cc / mean_acc.max(1.0),
        car_lower_bound: acc.iter().any(|&a| a <= 0.0),
        car,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceReport {
    pub cc: f64,
    pub acc: Vec<f64>,
    #[serde(flatten)]
    pub car: CarStats,
    pub window_ps: f64,
    pub period_ns: f64,
    pub main_peak_delay_ps: f64,
}

impl CoincidenceReport {
    pub fn from_histogram(hist: &TcspcHistogram, spec: &WindowSpec) -> Result<Self> {
        Self::averaged(hist, spec, 1)
    }

    /// Report of a histogram summed over `n` equivalent acquisitions, with
    /// counts divided by `n`. Ratios are unaffected by the division.
    pub fn averaged(hist: &TcspcHistogram, spec: &WindowSpec, n: u32) -> Result<Self> {
        let peak = hist.main_peak_within(spec.period_ps / 2.0)?;
        let scale = f64::from(n.max(1));
        let cc = window_sum(hist, peak as i64, spec.window_bins)? as f64;
        let acc: Vec<f64> = extract_acc(hist, spec)?
            .into_iter()
            .map(|a| a as f64)
            .collect();
        let car = car_stats(cc, &acc);
        Ok(Self {
            cc: cc / scale,
            acc: acc.iter().map(|a| a / scale).collect(),
            car,
            window_ps: spec.window_bins as f64 * f64::from(hist.bin_width_ps),
            period_ns: spec.period_ps / 1000.0,
            main_peak_delay_ps: hist.bin_center_ps(peak),
        })
    }
}

/// First-order coincidence algebra with darks counted as in-window
/// probabilities: returns `(cc, acc)`.
pub fn expected_counts<T: Real>(
    mu: T,
    survival_s: T,
    survival_i: T,
    dark_s: T,
    dark_i: T,
    n_pulses: T,
) -> (T, T) {
    if (mu * survival_s).max(mu * survival_i) >= T::lit(0.01) {
        log::warn!("mu·survival is not small; first-order coincidence algebra is inaccurate");
    }
    let acc = n_pulses * (mu * survival_s + dark_s) * (mu * survival_i + dark_i);
    (n_pulses * mu * survival_s * survival_i + acc, acc)
}

/// Geometry of the coincidence windows relative to the Gaussian delay
/// spread of true pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowGeometry<T: Real = f64> {
    pub bin_width_ps: u32,
    pub spec: WindowSpec,
    /// Standard deviation of `t_s - t_i` for a true pair.
    pub delay_sigma_ps: T,
}

impl<T: Real> WindowGeometry<T> {
    pub fn new(bin_width_ps: u32, spec: WindowSpec, jitter_s_ps: T, jitter_i_ps: T) -> Self {
        Self {
            bin_width_ps,
            spec,
            delay_sigma_ps: jitter_s_ps.hypot(jitter_i_ps),
        }
    }

    pub fn window_ps(&self) -> T {
        T::from_int((self.spec.window_bins as u32 * self.bin_width_ps).into())
    }

    /// Window width over the pulse period.
    pub fn duty(&self) -> T {
        self.window_ps() / T::lit(self.spec.period_ps)
    }

    /// Mass of a delay peak at `j` periods falling inside the window drawn
    /// at the rounded bin offset of side peak `j` (`j = 0` is the main
    /// window).
    pub fn capture(&self, j: i32) -> T {
        let w = T::from_int(self.bin_width_ps.into());
        let offset = T::from_int(self.spec.offset_bins(j, self.bin_width_ps));
        let half = T::lit(self.spec.window_bins as f64 / 2.0);
        let peak = T::from_int(j.into()) * T::lit(self.spec.period_ps);
        let z = |x: T| (x / (self.delay_sigma_ps * T::SQRT_2())).as_f64();
        let hi = statrs::function::erf::erf(z((offset + half) * w - peak));
        let lo = statrs::function::erf::erf(z((offset - half) * w - peak));
        T::lit(0.5 * (hi - lo))
    }
}

/// Window-exact expectation for the simulated detection model: pair clicks
/// at the pulse center with Gaussian jitter, darks uniform over the period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoincidenceModel<T: Real = f64> {
    pub mu: T,
    /// `E[n(n-1)] / μ²` of the pair-number law.
    pub bunching: T,
    pub survival_s: T,
    pub survival_i: T,
    pub dark_s: T,
    pub dark_i: T,
    pub n_pulses: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedCoincidences<T: Real = f64> {
    pub cc: T,
    /// In the order of [`WindowSpec::side_indices`].
    pub acc: Vec<T>,
}

impl<T: Real> ExpectedCoincidences<T> {
    pub fn car(&self) -> Vec<T> {
        self.acc.iter().map(|&a| self.cc / a).collect()
    }

    pub fn car_mean(&self) -> T {
        let n = T::from_int(self.acc.len() as i64);
        self.car().into_iter().fold(T::zero(), |a, b| a + b) / n
    }

    pub fn acc_mean(&self) -> T {
        let n = T::from_int(self.acc.len() as i64);
        self.acc.iter().fold(T::zero(), |a, &b| a + b) / n
    }

    /// `cc / mean(acc)`.
    pub fn car_pooled(&self) -> T {
        self.cc / self.acc_mean()
    }
}

impl<T: Real> CoincidenceModel<T> {
    /// Expected window sums. Multi-pair terms are exact for the configured
    /// bunching; the only approximation is the neglect of acquisition edges.
    pub fn expected(&self, geometry: &WindowGeometry<T>) -> ExpectedCoincidences<T> {
        let n = self.n_pulses;
        let pair_s = self.mu * self.survival_s;
        let pair_i = self.mu * self.survival_i;
        let dark_terms = geometry.duty()
            * (pair_s * self.dark_i + pair_i * self.dark_s + self.dark_s * self.dark_i);
        let cc = n
            * (pair_s
                * self.survival_i
                * (T::one() + self.bunching * self.mu)
                * geometry.capture(0)
                + dark_terms);
        let acc = geometry
            .spec
            .side_indices()
            .into_iter()
            .map(|j| n * (pair_s * pair_i * geometry.capture(j) + dark_terms))
            .collect();
        ExpectedCoincidences { cc, acc }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurityEstimate {
    pub charge: Charge,
    pub purity: f64,
    pub std_error: f64,
    /// Per-mask photon counts for masks -7..7; empty when noiseless.
    pub counts: Vec<u64>,
    pub shots: u64,
}

/// Tomography settings: `shots` photons per mask (none means exact
/// intensities) reaching the camera with probability `throughput`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tomography {
    pub shots: Option<u64>,
    pub throughput: f64,
    pub seed: u64,
}

/// Purity of `target` from 15 mask intensities, `I_l / Σ_{m=-6..6} I_m`,
/// with a delta-method binomial standard error.
pub fn measure_purity_tomography(
    spectrum: &ModeSpectrum<f64>,
    target: Charge,
    setup: &Tomography,
) -> Result<PurityEstimate> {
    if !PURITY_BASIS.contains(&target.0) {
        return Err(Error::UnknownCharge(target.0));
    }
    if !(setup.throughput > 0.0 && setup.throughput <= 1.0) {
        return Err(Error::InvalidParameter(
            "tomography throughput must lie in (0, 1]".into(),
        ));
    }
    let Some(shots) = setup.shots else {
        return Ok(PurityEstimate {
            charge: target,
            purity: crate::emitter::purity_of(spectrum, target)?,
            std_error: 0.0,
            counts: Vec::new(),
            shots: 0,
        });
    };
    let counts: Vec<u64> = MASK_CHARGES
        .map(|m| {
            let mut rng = block_stream(setup.seed, (m + 64) as u64, 0, Purpose::Tomography);
            let p = (spectrum.weight(Charge(m)) * setup.throughput).clamp(0.0, 1.0);
            Binomial::new(shots, p)
                .expect("p in [0, 1]")
                .sample(&mut rng)
        })
        .collect();
    let slot = |m: i32| (m - MASK_CHARGES.start()) as usize;
    let var = |c: u64| {
        let c = c as f64;
        c * (1.0 - c / shots as f64)
    };
    let x = counts[slot(target.0)] as f64;
    let (mut y, mut var_y) = (0.0, 0.0);
    for m in PURITY_BASIS.filter(|&m| m != target.0) {
        y += counts[slot(m)] as f64;
        var_y += var(counts[slot(m)]);
    }
    let s = x + y;
    if s <= 0.0 {
        return Err(Error::ZeroBasisMass);
    }
    let var_p = (y * y * var(counts[slot(target.0)]) + x * x * var_y) / s.powi(4);
    Ok(PurityEstimate {
        charge: target,
        purity: x / s,
        std_error: var_p.sqrt(),
        counts,
        shots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::Origin;
    use crate::emitter::EmitterParams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn stream(arm: Arm, times: &[f64]) -> ClickStream {
        let mut s = ClickStream::new(arm);
        for &t in times {
            s.push(t, Origin::Pair);
        }
        s
    }

    fn hist_with(counts: &[(i64, u64)]) -> TcspcHistogram {
        let mut h = TcspcHistogram::new(64, 187_500.0).unwrap();
        let z = h.zero_bin() as i64;
        for &(off, c) in counts {
            h.counts[(z + off) as usize] = c;
        }
        h
    }

    #[test]
    fn geometry_is_symmetric_about_zero() {
        let h = TcspcHistogram::new(64, 187_500.0).unwrap();
        assert_eq!(h.bin_count() % 2, 1);
        assert_eq!(h.bin_center_ps(h.zero_bin()), 0.0);
        assert!(h.span_ps() >= 187_500.0);
        assert_eq!(h.bin_start_ps(0), h.origin_ps);
        let spec = WindowSpec::default();
        assert!(h.span_ps() >= spec.required_span_ps(64));
    }

    #[test]
    fn empty_and_single_pair() {
        let e = ClickStream::new(Arm::Signal);
        let h = build_histogram(&e, &ClickStream::new(Arm::Idler), 64, 187_500.0).unwrap();
        assert_eq!(h.total(), 0);
        assert!(matches!(extract_cc(&h, 5), Err(Error::DegenerateHistogram)));

        let s = stream(Arm::Signal, &[12_500.0]);
        let i = stream(Arm::Idler, &[12_500.0]);
        let h = build_histogram(&s, &i, 64, 187_500.0).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts[h.zero_bin()], 1);
    }

    #[test]
    fn unsorted_input_rejected() {
        let s = stream(Arm::Signal, &[2.0, 1.0]);
        let i = stream(Arm::Idler, &[1.0]);
        assert!(matches!(
            build_histogram(&s, &i, 64, 1000.0),
            Err(Error::UnsortedClicks(Arm::Signal))
        ));
        assert!(matches!(
            build_histogram(&i, &s, 64, 1000.0),
            Err(Error::UnsortedClicks(Arm::Idler))
        ));
    }

    #[test]
    fn histogram_total_counts_pairs_within_span() {
        let s = stream(Arm::Signal, &[0.0, 100.0, 5_000.0, 90_000.0]);
        let i = stream(Arm::Idler, &[50.0, 4_000.0]);
        let span = 10_000.0;
        let h = build_histogram(&s, &i, 64, span).unwrap();
        let mut brute = 0;
        for &ti in &i.time_ps {
            for &ts in &s.time_ps {
                let d = ts - ti;
                if d >= h.origin_ps as f64 && d < h.span_ps() {
                    brute += 1;
                }
            }
        }
        assert_eq!(h.total(), brute);
    }

    #[test]
    fn cc_window_sums() {
        let h = hist_with(&[(0, 9)]);
        assert_eq!(extract_cc(&h, 5).unwrap(), 9);
        let h = hist_with(&[(-2, 1), (-1, 2), (0, 5), (1, 3), (2, 4), (3, 100_000)]);
        // The peak is at +3 now; the window follows it.
        assert_eq!(extract_cc(&h, 5).unwrap(), 3 + 4 + 100_000);
        let h = hist_with(&[(-2, 1), (-1, 2), (0, 5), (1, 3), (2, 4)]);
        assert_eq!(extract_cc(&h, 5).unwrap(), 15);
    }

    #[test]
    fn main_peak_ties_break_toward_zero() {
        let h = hist_with(&[(-3, 4), (2, 4), (5, 4)]);
        assert_eq!(h.main_peak().unwrap() as i64 - h.zero_bin() as i64, 2);
    }

    #[test]
    fn acc_needs_enough_span() {
        let mut h = TcspcHistogram::new(64, 100_000.0).unwrap();
        let z = h.zero_bin();
        h.counts[z] = 3;
        assert!(matches!(
            extract_acc(&h, &WindowSpec::default()),
            Err(Error::SpanTooSmall { .. })
        ));
    }

    #[test]
    fn uniform_background_gives_equal_acc() {
        let mut h = TcspcHistogram::new(64, 187_500.0).unwrap();
        h.counts.iter_mut().for_each(|c| *c = 10);
        let z = h.zero_bin();
        h.counts[z] = 50;
        let acc = extract_acc(&h, &WindowSpec::default()).unwrap();
        assert_eq!(acc, vec![50; 14]);
    }

    #[test]
    fn window_accounting_has_no_double_counting() {
        let mut h = TcspcHistogram::new(64, 187_500.0).unwrap();
        for (b, c) in h.counts.iter_mut().enumerate() {
            *c = (b as u64 * 7919) % 13;
        }
        let z = h.zero_bin();
        h.counts[z] = 1_000;
        let spec = WindowSpec::default();
        let cc = extract_cc(&h, 5).unwrap();
        let acc: u64 = extract_acc(&h, &spec).unwrap().iter().sum();
        let mut covered = vec![false; h.bin_count()];
        for j in std::iter::once(0).chain(spec.side_indices()) {
            let c = z as i64 + spec.offset_bins(j, 64);
            for b in c - 2..=c + 2 {
                assert!(!covered[b as usize]);
                covered[b as usize] = true;
            }
        }
        let outside: u64 = h
            .counts
            .iter()
            .zip(&covered)
            .filter(|(_, &c)| !c)
            .map(|(&n, _)| n)
            .sum();
        assert_eq!(cc + acc + outside, h.total());
    }

    #[test]
    fn car_fixtures() {
        let s = car_stats(5.0, &[5.0; 14]);
        assert_eq!((s.car_min, s.car_max, s.car_mean), (1.0, 1.0, 1.0));
        let s = car_stats(77_900.0, &[1_800.0; 14]);
        assert_relative_eq!(s.car_mean, 43.277_777_777_777_78, epsilon = 1e-9);
        assert!(!s.car_lower_bound);
        let mut acc = [2.0; 14];
        acc[3] = 0.0;
        let s = car_stats(40.0, &acc);
        assert!(s.car_lower_bound);
        assert_eq!(s.car_max, 40.0);
        assert!(s.car_min <= s.car_mean && s.car_mean <= s.car_max);
    }

    #[test]
    fn expected_counts_identities() {
        assert_eq!(expected_counts(0.0, 0.3, 0.2, 0.0, 0.0, 1e9), (0.0, 0.0));
        let (cc, acc) = expected_counts(1e-3, 0.3, 0.2, 0.0, 0.0, 1e9);
        assert_relative_eq!(cc / acc, 1.0 / 1e-3 + 1.0, max_relative = 1e-12);
        let (cc32, acc32) = expected_counts(1e-3f32, 0.3, 0.2, 0.0, 0.0, 1e9);
        assert!((cc32 / acc32 - 1001.0).abs() < 0.1);
    }

    #[test]
    fn capture_fraction_against_independent_values() {
        let g = WindowGeometry::new(64, WindowSpec::default(), 60.0, 60.0);
        // erf(160 / 120) from tables: 0.9406535.
        assert!((g.capture(0) - 0.940_653_5_f64).abs() < 1e-6);
        for j in g.spec.side_indices() {
            assert_relative_eq!(g.capture(j), g.capture(-j), epsilon = 1e-12);
            assert!(g.capture(j) <= g.capture(0) + 1e-12);
        }
        let mean: f64 = g
            .spec
            .side_indices()
            .iter()
            .map(|&j| g.capture(j))
            .sum::<f64>()
            / 14.0;
        assert!((mean - 0.93352).abs() < 1e-4, "mean side capture {mean}");
        assert_relative_eq!(g.duty(), 320.0 / 25_000.0, epsilon = 1e-15);
    }

    #[test]
    fn model_reduces_to_product_form_in_ideal_geometry() {
        // A window as wide as the period and a jitter far below the bin
        // width make duty and capture both 1.
        let spec = WindowSpec {
            window_bins: 1,
            period_ps: 25_000.0,
            side_peaks: 7,
        };
        let g = WindowGeometry::new(25_000, spec, 1e-3, 1e-3);
        assert_relative_eq!(g.duty(), 1.0);
        let m = CoincidenceModel {
            mu: 1e-3,
            bunching: 1.0,
            survival_s: 0.1,
            survival_i: 0.05,
            dark_s: 1e-5,
            dark_i: 3e-5,
            n_pulses: 1e9,
        };
        let e = m.expected(&g);
        let (cc, acc) = expected_counts(
            m.mu,
            m.survival_s,
            m.survival_i,
            m.dark_s,
            m.dark_i,
            m.n_pulses,
        );
        assert_relative_eq!(e.cc, cc, max_relative = 1e-9);
        for a in e.acc {
            assert_relative_eq!(a, acc, max_relative = 1e-9);
        }
    }

    #[test]
    fn tomography_noiseless_and_delta() {
        let e = EmitterParams::<f64>::default();
        let setup = Tomography {
            shots: None,
            throughput: 1.0,
            seed: 1,
        };
        let est =
            measure_purity_tomography(&e.default_spectrum(Charge(3)).unwrap(), Charge(3), &setup)
                .unwrap();
        assert_relative_eq!(est.purity, 0.85, epsilon = 1e-12);
        let delta = ModeSpectrum::delta(Charge(-2)).unwrap();
        let est = measure_purity_tomography(&delta, Charge(-2), &setup).unwrap();
        assert_eq!(est.purity, 1.0);
        let sampled = measure_purity_tomography(
            &delta,
            Charge(-2),
            &Tomography {
                shots: Some(10_000),
                ..setup
            },
        )
        .unwrap();
        assert_eq!(sampled.purity, 1.0);
        assert!(measure_purity_tomography(&delta, Charge(7), &setup).is_err());
        let pure_seven = ModeSpectrum::delta(Charge(7)).unwrap();
        assert!(matches!(
            measure_purity_tomography(&pure_seven, Charge(1), &setup),
            Err(Error::ZeroBasisMass)
        ));
    }

    #[test]
    fn tomography_estimator_unbiased() {
        let e = EmitterParams::<f64>::default();
        let spec = e.default_spectrum(Charge(4)).unwrap();
        let reps = 100;
        let mut sum = 0.0;
        let mut se = 0.0;
        for seed in 0..reps {
            let est = measure_purity_tomography(
                &spec,
                Charge(4),
                &Tomography {
                    shots: Some(20_000),
                    throughput: 1.0,
                    seed,
                },
            )
            .unwrap();
            sum += est.purity;
            se += est.std_error;
        }
        let mean = sum / reps as f64;
        let se_mean = se / reps as f64 / (reps as f64).sqrt();
        assert!((mean - 0.85).abs() < 3.0 * se_mean, "{mean} ± {se_mean}");
    }

    #[test]
    fn histogram_csv_rows() {
        let h = hist_with(&[(0, 3)]);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + h.bin_count());
        assert!(text.starts_with("bin_start_ps,count\n"));
    }

    proptest! {
        #[test]
        fn car_is_loss_invariant_without_darks(mu in 1e-5f64..1e-2, s in 1e-4f64..1.0, t in 1e-4f64..1.0, alpha in 1e-3f64..=1.0) {
            let (cc, acc) = expected_counts(mu, s, t, 0.0, 0.0, 1e9);
            let (cc2, acc2) = expected_counts(mu, alpha * s, alpha * t, 0.0, 0.0, 1e9);
            prop_assert!((cc / acc - (1.0 + 1.0 / mu)).abs() <= 1e-9 * cc / acc);
            prop_assert!((cc2 / acc2 - cc / acc).abs() <= 1e-9 * cc / acc);
        }

        #[test]
        fn darks_strictly_lower_car(mu in 1e-5f64..1e-2, s in 1e-4f64..1.0, t in 1e-4f64..1.0, d in 1e-9f64..1e-3, extra in 1e-9f64..1e-3) {
            let car = |ds: f64, di: f64| {
                let (cc, acc) = expected_counts(mu, s, t, ds, di, 1e9);
                cc / acc
            };
            prop_assert!(car(d, d) < car(0.0, 0.0));
            prop_assert!(car(d + extra, d) < car(d, d));
            let g = WindowGeometry::new(64, WindowSpec::default(), 60.0, 60.0);
            let model = |dark: f64| CoincidenceModel {
                mu, bunching: 1.0, survival_s: s, survival_i: t, dark_s: dark, dark_i: dark, n_pulses: 1e9,
            }.expected(&g).car_mean();
            prop_assert!(model(d + extra) < model(d));
        }

        #[test]
        fn histogram_merge_is_commutative(a in prop::collection::vec(0u64..100, 11), b in prop::collection::vec(0u64..100, 11)) {
            let mk = |c: Vec<u64>| TcspcHistogram { bin_width_ps: 64, origin_ps: -352.0, counts: c };
            let mut ab = mk(a.clone());
            ab.merge(&mk(b.clone())).unwrap();
            let mut ba = mk(b);
            ba.merge(&mk(a)).unwrap();
            prop_assert_eq!(ab, ba);
        }
    }
}
