//! Bus transmission sweeps and resonance-dip characterization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::resonator::{DriveSetting, ResonatorParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint<T: Real = f64> {
    pub lambda_nm: T,
    pub transmission: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dip<T: Real = f64> {
    pub center_nm: T,
    pub min_transmission: T,
    /// Full width at the level halfway between the dip floor and the
    /// highest transmission between neighbouring dips.
    pub fwhm_nm: T,
}

/// Transmission on an evenly spaced grid from `start` to `stop` inclusive.
pub fn sweep<T: Real>(
    resonator: &ResonatorParams<T>,
    drive: &DriveSetting<T>,
    start_nm: T,
    stop_nm: T,
    step_nm: T,
) -> Result<Vec<SpectrumPoint<T>>> {
    if !(step_nm > T::zero() && stop_nm > start_nm) {
        return Err(Error::InvalidParameter(
            "sweep needs step > 0 and stop > start".into(),
        ));
    }
    let n = ((stop_nm - start_nm) / step_nm)
        .floor()
        .to_usize()
        .unwrap_or(0);
    Ok((0..=n)
        .map(|k| {
            let lambda_nm = start_nm + T::from_int(k as i64) * step_nm;
            SpectrumPoint {
                lambda_nm,
                transmission: resonator.transmission(lambda_nm, drive),
            }
        })
        .collect())
}

fn golden_min<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let tol = T::epsilon().sqrt() * (b - a).abs();
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    (a + b) / T::lit(2.0)
}

/// Point where `f` crosses `level` between `inside` (below) and
/// `outside` (above).
fn crossing<T: Real>(f: impl Fn(T) -> T, level: T, mut inside: T, mut outside: T) -> T {
    for _ in 0..200 {
        let mid = (inside + outside) / T::lit(2.0);
        if mid == inside || mid == outside {
            break;
        }
        if f(mid) < level {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    (inside + outside) / T::lit(2.0)
}

/// Dips of a sweep, refined on the continuous transmission. Dips without a
/// shoulder inside the grid on both sides are dropped.
pub fn find_dips<T: Real>(
    resonator: &ResonatorParams<T>,
    drive: &DriveSetting<T>,
    points: &[SpectrumPoint<T>],
) -> Vec<Dip<T>> {
    let f = |x: T| resonator.transmission(x, drive);
    let ceiling = points
        .iter()
        .map(|p| p.transmission)
        .fold(T::neg_infinity(), T::max);
    let minima: Vec<usize> = (1..points.len().saturating_sub(1))
        .filter(|&i| {
            let t = points[i].transmission;
            t < points[i - 1].transmission && t <= points[i + 1].transmission && t < ceiling
        })
        .collect();
    let mut dips = Vec::new();
    for (n, &i) in minima.iter().enumerate() {
        let center_nm = golden_min(f, points[i - 1].lambda_nm, points[i + 1].lambda_nm);
        let floor = f(center_nm);
        // Highest point towards each neighbour bounds the half level.
        let left_edge = if n == 0 { 0 } else { minima[n - 1] };
        let right_edge = minima.get(n + 1).copied().unwrap_or(points.len() - 1);
        let top = |lo: usize, hi: usize| {
            (lo..=hi)
                .max_by(|&a, &b| {
                    points[a]
                        .transmission
                        .partial_cmp(&points[b].transmission)
                        .expect("finite transmission")
                })
                .expect("non-empty range")
        };
        let (l, r) = (top(left_edge, i), top(i, right_edge));
        // A dip whose shoulder is the grid end is not fully resolved.
        if l == 0 || r == points.len() - 1 {
            continue;
        }
        let (lt, rt) = (points[l], points[r]);
        let level = (floor + lt.transmission.min(rt.transmission)) / T::lit(2.0);
        let lo = crossing(f, level, center_nm, lt.lambda_nm);
        let hi = crossing(f, level, center_nm, rt.lambda_nm);
        dips.push(Dip {
            center_nm,
            min_transmission: floor,
            fwhm_nm: hi - lo,
        });
    }
    dips
}

/// Mean spacing between consecutive dips and mean FWHM.
pub fn comb_summary<T: Real>(dips: &[Dip<T>]) -> Option<(T, T)> {
    if dips.len() < 2 {
        return None;
    }
    let n = T::from_int(dips.len() as i64);
    let spacing = (dips[dips.len() - 1].center_nm - dips[0].center_nm) / (n - T::one());
    let fwhm = dips.iter().fold(T::zero(), |a, d| a + d.fwhm_nm) / n;
    Some((spacing, fwhm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_drive_comb_spacing_and_width() {
        let r = ResonatorParams::<f64>::default();
        let zero = DriveSetting::zero();
        let pts = sweep(&r, &zero, 1550.0, 1555.1, 0.002).unwrap();
        let dips = find_dips(&r, &zero, &pts);
        assert_eq!(dips.len(), 10);
        for d in &dips {
            assert!((d.fwhm_nm - 0.045).abs() < 0.005, "{}", d.fwhm_nm);
            assert!(d.min_transmission < 0.55);
        }
        for w in dips.windows(2) {
            assert!((w[1].center_nm - w[0].center_nm - 0.5).abs() < 1e-6);
        }
        let (spacing, _) = comb_summary(&dips).unwrap();
        assert_relative_eq!(spacing, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn drive_red_shifts_every_dip() {
        let r = ResonatorParams::<f64>::default();
        let zero = DriveSetting::zero();
        let hot = r.drive_for_power(37.0).unwrap();
        let a = find_dips(&r, &zero, &sweep(&r, &zero, 1550.0, 1555.0, 0.002).unwrap());
        let b = find_dips(&r, &hot, &sweep(&r, &hot, 1550.0, 1555.0, 0.002).unwrap());
        let shift = r.thermo_slope_nm_per_mw * 37.0;
        for d in &a {
            let moved = b
                .iter()
                .find(|e| (e.center_nm - d.center_nm - shift).abs() < 0.01)
                .expect("shifted dip present");
            assert!((moved.center_nm - d.center_nm - shift).abs() < 1e-6);
        }
    }

    #[test]
    fn f32_sweep_runs() {
        let r = ResonatorParams::<f32>::default();
        let zero = DriveSetting::zero();
        let pts = sweep(&r, &zero, 1550.0f32, 1552.0, 0.005).unwrap();
        assert!(!find_dips(&r, &zero, &pts).is_empty());
    }

    #[test]
    fn bad_grid_rejected() {
        let r = ResonatorParams::<f64>::default();
        assert!(sweep(&r, &DriveSetting::zero(), 1.0, 0.5, 0.1).is_err());
    }
}
