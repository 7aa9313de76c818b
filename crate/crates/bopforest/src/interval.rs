//! Prediction-interval construction from a univariate sample.
//!
//! All five interval methods operate on a plain sample of reals (a BOP or a
//! residual distribution): the classical symmetric interval (LM), empirical
//! quantiles (Quant), the shortest interval covering a required fraction of
//! the sample (SPI), the highest density region (HDR, possibly several
//! disjoint intervals), and its contiguous hull (CHDR).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// A closed interval `[lower, upper]` in response units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper);
        Interval { lower, upper }
    }

    pub fn len(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && y <= self.upper
    }

    /// Interval shifted by a constant, e.g. residual bounds around a point prediction.
    pub fn shifted(&self, c: f64) -> Interval {
        Interval {
            lower: self.lower + c,
            upper: self.upper + c,
        }
    }
}

/// A highest density region: disjoint intervals sorted by lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdrRegion {
    pub intervals: Vec<Interval>,
    pub density_threshold: f64,
}

impl HdrRegion {
    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(y))
    }

    /// Sum of the component interval lengths.
    pub fn total_len(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    /// Single interval from the minimum lower bound to the maximum upper bound.
    pub fn hull(&self) -> Interval {
        Interval {
            lower: self.intervals.first().expect("non-empty region").lower,
            upper: self
                .intervals
                .iter()
                .map(|iv| iv.upper)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Either a single interval or a multi-interval region, as produced by the PI methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PiBand {
    Single(Interval),
    Multi(HdrRegion),
}

impl PiBand {
    pub fn contains(&self, y: f64) -> bool {
        match self {
            PiBand::Single(iv) => iv.contains(y),
            PiBand::Multi(r) => r.contains(y),
        }
    }

    /// Total length; component lengths are summed for multi-interval regions.
    pub fn total_len(&self) -> f64 {
        match self {
            PiBand::Single(iv) => iv.len(),
            PiBand::Multi(r) => r.total_len(),
        }
    }
}

/// Number of sample points a `(1-alpha)` interval must cover: `ceil((1-alpha)*m)`,
/// clamped to `[1, m]`.
pub fn required_count(m: usize, alpha: f64) -> usize {
    let k = ((1.0 - alpha) * m as f64).ceil() as usize;
    k.clamp(1, m)
}

/// Shortest window of `k` consecutive values in an already-sorted sample.
/// Ties are broken by the smallest starting index; lengths within a rounding
/// margin of the sample spread count as tied, so noise in the low bits of the
/// values cannot reorder mathematically equal windows.
pub(crate) fn shortest_window_sorted(sorted: &[f64], k: usize) -> Interval {
    debug_assert!(k >= 1 && k <= sorted.len());
    let tol = 1e-12 * (sorted[sorted.len() - 1] - sorted[0]);
    let mut best_start = 0;
    let mut best_len = sorted[k - 1] - sorted[0];
    for start in 1..=(sorted.len() - k) {
        let len = sorted[start + k - 1] - sorted[start];
        if len < best_len - tol {
            best_len = len;
            best_start = start;
        }
    }
    Interval::new(sorted[best_start], sorted[best_start + k - 1])
}

/// Shortest interval containing at least `ceil((1-alpha)*m)` of the sample points.
///
/// Panics on an empty sample.
pub fn shortest_interval(sample: &[f64], alpha: f64) -> Interval {
    assert!(!sample.is_empty(), "shortest_interval: empty sample");
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    shortest_window_sorted(&sorted, required_count(sorted.len(), alpha))
}

/// Linear-interpolation empirical quantile of an already-sorted sample.
///
/// Uses the common statistical default: with `h = (m-1)p + 1` (one-based),
/// `q = s_floor(h) + (h - floor(h)) * (s_floor(h)+1 - s_floor(h))`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let m = sorted.len();
    let h = (m as f64 - 1.0) * p + 1.0;
    let lo = (h.floor() as usize).clamp(1, m);
    if lo >= m {
        return sorted[m - 1];
    }
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

/// Central interval `[q(alpha/2), q(1-alpha/2)]` from interpolated empirical quantiles.
pub fn quantile_interval(sample: &[f64], alpha: f64) -> Result<Interval> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "quantile_interval needs at least 2 observations, got {}",
            sample.len()
        )));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(Interval::new(
        quantile_sorted(&sorted, alpha / 2.0),
        quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    ))
}

/// Classical interval from an intercept-only linear model:
/// `mean ± t_{1-alpha/2, m-1} * s * sqrt(1 + 1/m)`.
///
/// A zero-variance sample collapses to the degenerate interval `[mean, mean]`.
pub fn lm_interval(sample: &[f64], alpha: f64) -> Result<Interval> {
    let m = sample.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "lm_interval needs at least 2 observations, got {m}"
        )));
    }
    let mf = m as f64;
    let mean = sample.iter().sum::<f64>() / mf;
    let ss: f64 = sample.iter().map(|y| (y - mean) * (y - mean)).sum();
    let s = (ss / (mf - 1.0)).sqrt();
    if s == 0.0 {
        return Ok(Interval::new(mean, mean));
    }
    let t = StudentsT::new(0.0, 1.0, mf - 1.0)
        .expect("valid t distribution")
        .inverse_cdf(1.0 - alpha / 2.0);
    let half = t * s * (1.0 + 1.0 / mf).sqrt();
    Ok(Interval::new(mean - half, mean + half))
}

/// Silverman's rule-of-thumb bandwidth, floored so degenerate samples stay usable:
/// `0.9 * min(s, IQR/1.34) * m^(-1/5)`, floor `1e-9 * (max - min + 1)`.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    let mf = m as f64;
    let mean = sorted.iter().sum::<f64>() / mf;
    let s = if m > 1 {
        (sorted.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (mf - 1.0)).sqrt()
    } else {
        0.0
    };
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = s.min(iqr / 1.34);
    let floor = 1e-9 * (sorted[m - 1] - sorted[0] + 1.0);
    (0.9 * spread * mf.powf(-0.2)).max(floor)
}

/// Gaussian-kernel density estimate over a sample, evaluated at the distinct
/// sample values. Tied values are collapsed with multiplicity so density
/// evaluation is quadratic in the number of distinct values, not sample size.
pub(crate) struct SampleDensity {
    /// Distinct sorted values with their multiplicities.
    values: Vec<(f64, u32)>,
    densities: Vec<f64>,
    /// Value indices ordered by descending density.
    by_density: Vec<usize>,
    bandwidth: f64,
    m: usize,
}

impl SampleDensity {
    pub(crate) fn new(sample: &[f64], bandwidth: Option<f64>) -> SampleDensity {
        assert!(!sample.is_empty(), "density of empty sample");
        let mut sorted = sample.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let floor = 1e-9 * (sorted[sorted.len() - 1] - sorted[0] + 1.0);
        let h = bandwidth
            .map(|b| b.max(floor))
            .unwrap_or_else(|| silverman_bandwidth(&sorted));

        let mut values: Vec<(f64, u32)> = Vec::new();
        for &v in &sorted {
            match values.last_mut() {
                Some((last, c)) if *last == v => *c += 1,
                _ => values.push((v, 1)),
            }
        }
        let m = sorted.len();
        let norm = 1.0 / (m as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        let densities: Vec<f64> = values
            .iter()
            .map(|&(v, _)| {
                let mut acc = 0.0;
                for &(u, c) in &values {
                    let z = (v - u) / h;
                    acc += c as f64 * (-0.5 * z * z).exp();
                }
                acc * norm
            })
            .collect();
        let mut by_density: Vec<usize> = (0..densities.len()).collect();
        by_density.sort_by(|&a, &b| densities[b].total_cmp(&densities[a]));
        SampleDensity {
            values,
            densities,
            by_density,
            bandwidth: h,
            m,
        }
    }

    fn density_at(&self, x: f64) -> f64 {
        let norm = 1.0 / (self.m as f64 * self.bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        let mut acc = 0.0;
        for &(u, c) in &self.values {
            let z = (x - u) / self.bandwidth;
            acc += c as f64 * (-0.5 * z * z).exp();
        }
        acc * norm
    }

    /// Largest density value whose superlevel set holds at least
    /// `ceil((1-alpha)*m)` sample points (with multiplicity).
    fn threshold(&self, alpha: f64) -> f64 {
        let k = required_count(self.m, alpha);
        let mut covered = 0usize;
        for &j in &self.by_density {
            covered += self.values[j].1 as usize;
            if covered >= k {
                return self.densities[j];
            }
        }
        // Required count equals m; the lowest density selects everything.
        self.densities[*self.by_density.last().expect("non-empty")]
    }

    /// HDR at level `1-alpha`: runs of consecutive selected sample values,
    /// split where the estimated density dips below the threshold between
    /// neighbouring selected values.
    pub(crate) fn region(&self, alpha: f64) -> HdrRegion {
        let fc = self.threshold(alpha);
        let selected: Vec<usize> = (0..self.values.len())
            .filter(|&j| self.densities[j] >= fc)
            .collect();
        let mut intervals = Vec::new();
        let mut run_start = selected[0];
        let mut prev = selected[0];
        for &j in &selected[1..] {
            let contiguous = j == prev + 1 && {
                let mid = 0.5 * (self.values[prev].0 + self.values[j].0);
                self.density_at(mid) >= fc
            };
            if !contiguous {
                intervals.push(Interval::new(self.values[run_start].0, self.values[prev].0));
                run_start = j;
            }
            prev = j;
        }
        intervals.push(Interval::new(self.values[run_start].0, self.values[prev].0));
        HdrRegion {
            intervals,
            density_threshold: fc,
        }
    }
}

/// Highest density region of a sample at level `1-alpha`.
///
/// The density is a Gaussian-kernel estimate evaluated at the sample points
/// (bandwidth defaults to Silverman's rule); the region keeps the highest
/// density points until at least `ceil((1-alpha)*m)` are covered and emits one
/// interval per contiguous run.
///
/// Panics on an empty sample.
pub fn hdr_region(sample: &[f64], alpha: f64, bandwidth: Option<f64>) -> HdrRegion {
    SampleDensity::new(sample, bandwidth).region(alpha)
}

/// Contiguous HDR: the hull spanning the min lower bound to the max upper bound.
pub fn chdr_interval(region: &HdrRegion) -> Interval {
    region.hull()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Brute-force oracle: scan every window of the required size.
    fn shortest_by_enumeration(sample: &[f64], alpha: f64) -> Interval {
        let mut s = sample.to_vec();
        s.sort_unstable_by(f64::total_cmp);
        let k = required_count(s.len(), alpha);
        let mut best: Option<Interval> = None;
        for start in 0..=(s.len() - k) {
            let iv = Interval::new(s[start], s[start + k - 1]);
            if best.as_ref().map_or(true, |b| iv.len() < b.len()) {
                best = Some(iv);
            }
        }
        best.unwrap()
    }

    #[test]
    fn shortest_interval_examples() {
        // 3-of-4 windows have lengths 2 and 8.
        let iv = shortest_interval(&[1.0, 2.0, 3.0, 10.0], 0.25);
        assert_eq!((iv.lower, iv.upper), (1.0, 3.0));

        let iv = shortest_interval(&[5.0, 5.0, 5.0, 5.0], 0.1);
        assert_eq!((iv.lower, iv.upper), (5.0, 5.0));

        // 2-point windows have lengths 1, 1, 7; first tie wins.
        let iv = shortest_interval(&[1.0, 2.0, 3.0, 10.0], 0.5);
        assert_eq!((iv.lower, iv.upper), (1.0, 2.0));
    }

    #[test]
    fn shortest_interval_single_point_has_zero_length() {
        let iv = shortest_interval(&[3.5], 0.25);
        assert_eq!(iv.len(), 0.0);
    }

    #[test]
    fn quantile_interval_examples() {
        let sample: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let iv = quantile_interval(&sample, 0.2).unwrap();
        assert_abs_diff_eq!(iv.lower, 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(iv.upper, 9.1, epsilon = 1e-12);

        // Symmetric sample stays symmetric around zero.
        let sym = vec![-3.0, -1.0, 0.0, 1.0, 3.0];
        let iv = quantile_interval(&sym, 0.3).unwrap();
        assert_abs_diff_eq!(iv.lower, -iv.upper, epsilon = 1e-12);

        // alpha -> 0 reaches the sample extremes.
        let iv = quantile_interval(&sample, 0.0).unwrap();
        assert_eq!((iv.lower, iv.upper), (1.0, 10.0));

        assert!(quantile_interval(&[1.0], 0.1).is_err());
    }

    /// Invert the Student-t CDF by bisection, independent of the quantile routine.
    fn t_quantile_by_bisection(p: f64, df: f64) -> f64 {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dist.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lm_interval_matches_t_formula() {
        let iv = lm_interval(&[-1.0, 0.0, 1.0], 0.05).unwrap();
        assert_abs_diff_eq!(iv.lower, -4.968, epsilon = 1e-3);
        assert_abs_diff_eq!(iv.upper, 4.968, epsilon = 1e-3);

        // Against the closed form with an independently inverted t quantile.
        let sample = [2.0, 3.5, 1.0, 4.0, 2.5, 3.0];
        let m = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / m;
        let s = (sample.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        let t = t_quantile_by_bisection(0.975, m - 1.0);
        let half = t * s * (1.0 + 1.0 / m).sqrt();
        let iv = lm_interval(&sample, 0.05).unwrap();
        assert_abs_diff_eq!(iv.lower, mean - half, epsilon = 1e-9);
        assert_abs_diff_eq!(iv.upper, mean + half, epsilon = 1e-9);
    }

    #[test]
    fn lm_interval_degenerate_and_scaling() {
        let iv = lm_interval(&[4.0, 4.0, 4.0], 0.05).unwrap();
        assert_eq!((iv.lower, iv.upper), (4.0, 4.0));

        let base = [1.0, 2.0, 5.0, 7.0];
        let doubled: Vec<f64> = base.iter().map(|y| 2.0 * y).collect();
        let a = lm_interval(&base, 0.1).unwrap();
        let b = lm_interval(&doubled, 0.1).unwrap();
        assert_abs_diff_eq!(b.len(), 2.0 * a.len(), epsilon = 1e-9);
        assert_abs_diff_eq!(
            (b.lower + b.upper) / 2.0,
            a.lower + a.upper,
            epsilon = 1e-9
        );
    }

    /// Grid oracle for HDR: evaluate the KDE on a dense grid and extract the
    /// superlevel components for the same threshold. The threshold is relaxed
    /// by a hair so boundary sample points (density exactly at the threshold)
    /// stay inside despite the grid never hitting them exactly.
    fn hdr_components_by_grid(sample: &[f64], alpha: f64) -> (Vec<(f64, f64)>, f64) {
        let dens = SampleDensity::new(sample, None);
        let fc = dens.threshold(alpha) * (1.0 - 1e-9);
        let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * dens.bandwidth;
        let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * dens.bandwidth;
        let n_grid = 8000;
        let step = (hi - lo) / n_grid as f64;
        let mut components = Vec::new();
        let mut open: Option<f64> = None;
        for g in 0..=n_grid {
            let x = lo + step * g as f64;
            let above = dens.density_at(x) >= fc;
            match (above, open) {
                (true, None) => open = Some(x),
                (false, Some(start)) => {
                    components.push((start, x));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(start) = open {
            components.push((start, hi));
        }
        (components, step)
    }

    #[test]
    fn hdr_bimodal_splits_into_two_intervals() {
        let sample = [0.0, 0.1, 0.2, 10.0, 10.1, 10.2];
        let region = hdr_region(&sample, 0.3, None);
        assert_eq!(region.intervals.len(), 2);
        let covered = sample.iter().filter(|&&y| region.contains(y)).count();
        assert!(covered >= required_count(sample.len(), 0.3));

        // Grid oracle agrees on the component count and sample membership
        // (membership checked up to one grid step).
        let (components, step) = hdr_components_by_grid(&sample, 0.3);
        assert_eq!(components.len(), 2);
        for &y in &sample {
            let in_grid = components
                .iter()
                .any(|&(a, b)| y >= a - step && y <= b + step);
            assert_eq!(region.contains(y), in_grid);
        }
    }

    #[test]
    fn hdr_degenerate_cases() {
        let region = hdr_region(&[2.0, 2.0, 2.0], 0.1, None);
        assert_eq!(region.intervals.len(), 1);
        assert_eq!(region.intervals[0], Interval::new(2.0, 2.0));

        // alpha ~ 0 must keep every sample point.
        let sample = [1.0, 4.0, 4.5, 9.0];
        let region = hdr_region(&sample, 1e-9, None);
        for &y in &sample {
            assert!(region.contains(y));
        }
    }

    #[test]
    fn chdr_is_hull_of_region() {
        let region = HdrRegion {
            intervals: vec![Interval::new(0.0, 0.2), Interval::new(10.0, 10.2)],
            density_threshold: 0.1,
        };
        assert_eq!(chdr_interval(&region), Interval::new(0.0, 10.2));

        let single = HdrRegion {
            intervals: vec![Interval::new(-1.0, 3.0)],
            density_threshold: 0.2,
        };
        assert_eq!(chdr_interval(&single), Interval::new(-1.0, 3.0));

        let three = HdrRegion {
            intervals: vec![
                Interval::new(0.0, 1.0),
                Interval::new(2.0, 3.0),
                Interval::new(7.0, 8.0),
            ],
            density_threshold: 0.05,
        };
        assert_eq!(chdr_interval(&three), Interval::new(0.0, 8.0));
    }

    proptest! {
        #[test]
        fn shortest_equals_bruteforce(
            sample in prop::collection::vec(-50.0..50.0f64, 1..50),
            alpha in 0.01..0.99f64,
        ) {
            let fast = shortest_interval(&sample, alpha);
            let slow = shortest_by_enumeration(&sample, alpha);
            prop_assert_eq!((fast.lower, fast.upper), (slow.lower, slow.upper));
        }

        #[test]
        fn methods_are_translation_equivariant(
            sample in prop::collection::vec(-20.0..20.0f64, 3..40),
            alpha in 0.05..0.5f64,
            c in -100.0..100.0f64,
        ) {
            let shifted: Vec<f64> = sample.iter().map(|y| y + c).collect();

            let a = shortest_interval(&sample, alpha);
            let b = shortest_interval(&shifted, alpha);
            prop_assert!((b.lower - a.lower - c).abs() < 1e-9);
            prop_assert!((b.upper - a.upper - c).abs() < 1e-9);

            let a = quantile_interval(&sample, alpha).unwrap();
            let b = quantile_interval(&shifted, alpha).unwrap();
            prop_assert!((b.lower - a.lower - c).abs() < 1e-9);
            prop_assert!((b.upper - a.upper - c).abs() < 1e-9);

            let a = lm_interval(&sample, alpha).unwrap();
            let b = lm_interval(&shifted, alpha).unwrap();
            prop_assert!((b.lower - a.lower - c).abs() < 1e-7);
            prop_assert!((b.upper - a.upper - c).abs() < 1e-7);

            // HDR: shift with an explicit bandwidth so the kernel is identical.
            let h = 0.5;
            let ra = hdr_region(&sample, alpha, Some(h));
            let rb = hdr_region(&shifted, alpha, Some(h));
            prop_assert_eq!(ra.intervals.len(), rb.intervals.len());
            for (ia, ib) in ra.intervals.iter().zip(&rb.intervals) {
                prop_assert!((ib.lower - ia.lower - c).abs() < 1e-7);
                prop_assert!((ib.upper - ia.upper - c).abs() < 1e-7);
            }
        }

        #[test]
        fn shortest_and_quantile_scale_equivariant(
            sample in prop::collection::vec(-20.0..20.0f64, 2..40),
            alpha in 0.05..0.5f64,
            scale in 0.1..10.0f64,
        ) {
            let scaled: Vec<f64> = sample.iter().map(|y| y * scale).collect();
            let a = shortest_interval(&sample, alpha);
            let b = shortest_interval(&scaled, alpha);
            prop_assert!((b.lower - a.lower * scale).abs() < 1e-8);
            prop_assert!((b.upper - a.upper * scale).abs() < 1e-8);

            let a = quantile_interval(&sample, alpha).unwrap();
            let b = quantile_interval(&scaled, alpha).unwrap();
            prop_assert!((b.lower - a.lower * scale).abs() < 1e-8);
            prop_assert!((b.upper - a.upper * scale).abs() < 1e-8);
        }

        #[test]
        fn shortest_window_no_longer_than_any_window(
            sample in prop::collection::vec(-50.0..50.0f64, 2..40),
            alpha in 0.05..0.9f64,
        ) {
            let mut sorted = sample.clone();
            sorted.sort_unstable_by(f64::total_cmp);
            let k = required_count(sorted.len(), alpha);
            let best = shortest_interval(&sample, alpha);
            for start in 0..=(sorted.len() - k) {
                prop_assert!(best.len() <= sorted[start + k - 1] - sorted[start] + 1e-12);
            }
        }

        #[test]
        fn hdr_covers_required_mass(
            sample in prop::collection::vec(-50.0..50.0f64, 2..50),
            alpha in 0.01..0.9f64,
        ) {
            let region = hdr_region(&sample, alpha, None);
            let covered = sample.iter().filter(|&&y| region.contains(y)).count();
            prop_assert!(covered >= required_count(sample.len(), alpha));
            // Intervals are sorted and disjoint, and CHDR contains all of them.
            let hull = chdr_interval(&region);
            for w in region.intervals.windows(2) {
                prop_assert!(w[0].upper < w[1].lower);
            }
            for iv in &region.intervals {
                prop_assert!(hull.lower <= iv.lower && iv.upper <= hull.upper);
            }
        }
    }
}
