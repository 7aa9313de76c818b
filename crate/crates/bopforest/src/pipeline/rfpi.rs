//! Single-forest prediction intervals from in-bag BOPs: the LM, Quant, SPI,
//! HDR and CHDR methods on top of any of the three splitting rules, with
//! per-method out-of-bag coverage calibration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::bop::{build_bop, build_oob_bop_training};
use super::calibrate::search_working_level;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, BopFlavor, Forest, ForestConfig};
use crate::interval::{
    chdr_interval, hdr_region, lm_interval, quantile_interval, quantile_sorted, required_count,
    shortest_interval, shortest_window_sorted, PiBand, SampleDensity,
};

/// Interval-construction methods, in the conventional reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum PiMethod {
    Lm,
    Spi,
    Quant,
    Hdr,
    Chdr,
}

impl PiMethod {
    pub const ALL: [PiMethod; 5] = [
        PiMethod::Lm,
        PiMethod::Spi,
        PiMethod::Quant,
        PiMethod::Hdr,
        PiMethod::Chdr,
    ];

    /// Long label used in summary tables.
    pub fn label(&self) -> &'static str {
        match self {
            PiMethod::Lm => "Classical method (LM)",
            PiMethod::Spi => "Shortest prediction interval (SPI)",
            PiMethod::Quant => "Quantile method (Quant)",
            PiMethod::Hdr => "Highest density region (HDR)",
            PiMethod::Chdr => "Contiguous HDR (CHDR)",
        }
    }
}

impl fmt::Display for PiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PiMethod::Lm => write!(f, "LM"),
            PiMethod::Spi => write!(f, "SPI"),
            PiMethod::Quant => write!(f, "Quant"),
            PiMethod::Hdr => write!(f, "HDR"),
            PiMethod::Chdr => write!(f, "CHDR"),
        }
    }
}

impl FromStr for PiMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lm" => Ok(PiMethod::Lm),
            "spi" => Ok(PiMethod::Spi),
            "quant" => Ok(PiMethod::Quant),
            "hdr" => Ok(PiMethod::Hdr),
            "chdr" => Ok(PiMethod::Chdr),
            other => Err(format!(
                "unknown PI method '{other}' (expected lm, quant, spi, hdr or chdr)"
            )),
        }
    }
}

/// Apply one interval method to a raw sample at the given level.
pub fn apply_pi_method(method: PiMethod, sample: &[f64], alpha: f64) -> Result<PiBand> {
    match method {
        PiMethod::Lm => Ok(PiBand::Single(lm_interval(sample, alpha)?)),
        PiMethod::Quant => Ok(PiBand::Single(quantile_interval(sample, alpha)?)),
        PiMethod::Spi => Ok(PiBand::Single(shortest_interval(sample, alpha))),
        PiMethod::Hdr => Ok(PiBand::Multi(hdr_region(sample, alpha, None))),
        PiMethod::Chdr => Ok(PiBand::Single(chdr_interval(&hdr_region(
            sample, alpha, None,
        )))),
    }
}

/// Fitted single-forest state with per-method working levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfpiModel {
    forest: Forest,
    pi_methods: Vec<PiMethod>,
    alpha_target: f64,
    alpha_working: BTreeMap<PiMethod, f64>,
}

/// Point prediction and the requested per-method intervals for one query row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfpiPrediction {
    pub point: f64,
    pub bands: BTreeMap<PiMethod, PiBand>,
}

impl RfpiModel {
    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn pi_methods(&self) -> &[PiMethod] {
        &self.pi_methods
    }

    pub fn alpha_target(&self) -> f64 {
        self.alpha_target
    }

    pub fn alpha_working(&self, method: PiMethod) -> f64 {
        self.alpha_working
            .get(&method)
            .copied()
            .unwrap_or(self.alpha_target)
    }

    /// Point prediction plus every requested method applied to the query's
    /// in-bag BOP at that method's working level.
    pub fn predict_intervals(&self, row: &[f64], train_y: &[f64]) -> Result<RfpiPrediction> {
        let point = self.forest.predict_point(row);
        let bop = build_bop(&self.forest, row, BopFlavor::Inbag);
        let sample = bop.values(train_y);
        let mut bands = BTreeMap::new();
        // HDR and CHDR share the kernel density; build it once.
        let needs_density = self
            .pi_methods
            .iter()
            .any(|m| matches!(m, PiMethod::Hdr | PiMethod::Chdr));
        let density = needs_density.then(|| SampleDensity::new(&sample, None));
        for &method in &self.pi_methods {
            let alpha = self.alpha_working(method);
            let band = match (method, &density) {
                (PiMethod::Hdr, Some(d)) => PiBand::Multi(d.region(alpha)),
                (PiMethod::Chdr, Some(d)) => PiBand::Single(d.region(alpha).hull()),
                _ => apply_pi_method(method, &sample, alpha)?,
            };
            bands.insert(method, band);
        }
        Ok(RfpiPrediction { point, bands })
    }

    /// Predictions for every row of a test set.
    pub fn predict_all(&self, test: &Dataset, train_y: &[f64]) -> Result<Vec<RfpiPrediction>> {
        (0..test.n())
            .into_par_iter()
            .map(|i| self.predict_intervals(test.row(i), train_y))
            .collect()
    }
}

/// Per-row cache for calibration: the OOB-BOP response sample plus the
/// statistics each method needs, reusable across candidate levels.
struct BopCache {
    truth: f64,
    sorted: Vec<f64>,
    mean: f64,
    sd: f64,
    density: Option<SampleDensity>,
}

impl BopCache {
    fn new(truth: f64, mut sample: Vec<f64>, with_density: bool) -> BopCache {
        sample.sort_unstable_by(f64::total_cmp);
        let m = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / m;
        let sd = if sample.len() > 1 {
            (sample.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        let density = with_density.then(|| SampleDensity::new(&sample, None));
        BopCache {
            truth,
            sorted: sample,
            mean,
            sd,
            density,
        }
    }

    fn covered(&self, method: PiMethod, alpha: f64) -> bool {
        match method {
            PiMethod::Lm => {
                if self.sd == 0.0 {
                    return self.truth == self.mean;
                }
                let m = self.sorted.len() as f64;
                let t = StudentsT::new(0.0, 1.0, m - 1.0)
                    .expect("valid t distribution")
                    .inverse_cdf(1.0 - alpha / 2.0);
                let half = t * self.sd * (1.0 + 1.0 / m).sqrt();
                (self.truth - self.mean).abs() <= half
            }
            PiMethod::Quant => {
                let lo = quantile_sorted(&self.sorted, alpha / 2.0);
                let hi = quantile_sorted(&self.sorted, 1.0 - alpha / 2.0);
                self.truth >= lo && self.truth <= hi
            }
            PiMethod::Spi => {
                let k = required_count(self.sorted.len(), alpha);
                shortest_window_sorted(&self.sorted, k).contains(self.truth)
            }
            PiMethod::Hdr => self
                .density
                .as_ref()
                .expect("density cached")
                .region(alpha)
                .contains(self.truth),
            PiMethod::Chdr => self
                .density
                .as_ref()
                .expect("density cached")
                .region(alpha)
                .hull()
                .contains(self.truth),
        }
    }

    fn band_length(&self, method: PiMethod, alpha: f64) -> f64 {
        match method {
            PiMethod::Lm => {
                if self.sd == 0.0 {
                    return 0.0;
                }
                let m = self.sorted.len() as f64;
                let t = StudentsT::new(0.0, 1.0, m - 1.0)
                    .expect("valid t distribution")
                    .inverse_cdf(1.0 - alpha / 2.0);
                2.0 * t * self.sd * (1.0 + 1.0 / m).sqrt()
            }
            PiMethod::Quant => {
                quantile_sorted(&self.sorted, 1.0 - alpha / 2.0)
                    - quantile_sorted(&self.sorted, alpha / 2.0)
            }
            PiMethod::Spi => {
                let k = required_count(self.sorted.len(), alpha);
                shortest_window_sorted(&self.sorted, k).len()
            }
            PiMethod::Hdr => self
                .density
                .as_ref()
                .expect("density cached")
                .region(alpha)
                .total_len(),
            PiMethod::Chdr => self
                .density
                .as_ref()
                .expect("density cached")
                .region(alpha)
                .hull()
                .len(),
        }
    }
}

/// Per-training-row OOB-BOP caches; rows with fewer than two members are
/// unusable and error out when they exceed half the data.
fn oob_bop_caches(
    forest: &Forest,
    train: &Dataset,
    with_density: bool,
) -> Result<Vec<BopCache>> {
    let n = train.n();
    let caches: Vec<Option<BopCache>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bop = build_oob_bop_training(forest, train, i);
            if bop.len() < 2 {
                return None;
            }
            Some(BopCache::new(
                train.y()[i],
                bop.values(train.y()),
                with_density,
            ))
        })
        .collect();
    let unusable = caches.iter().filter(|c| c.is_none()).count();
    if unusable * 2 > n {
        return Err(Error::Calibration(format!(
            "{unusable} of {n} training rows have empty OOB neighborhoods; increase the number of trees"
        )));
    }
    Ok(caches.into_iter().flatten().collect())
}

/// Per-method working levels from the training rows' OOB-BOPs.
pub fn calibrate_oob_rfpi(
    forest: &Forest,
    train: &Dataset,
    alpha: f64,
    pi_methods: &[PiMethod],
    coverage_range: (f64, f64),
) -> Result<BTreeMap<PiMethod, f64>> {
    let with_density = pi_methods
        .iter()
        .any(|m| matches!(m, PiMethod::Hdr | PiMethod::Chdr));
    let caches = oob_bop_caches(forest, train, with_density)?;
    let mut out = BTreeMap::new();
    for &method in pi_methods {
        let aw = search_working_level(alpha, coverage_range, |a| {
            let covered = caches.iter().filter(|c| c.covered(method, a)).count();
            covered as f64 / caches.len() as f64
        });
        out.insert(method, aw);
    }
    Ok(out)
}

/// Mean training-interval length and coverage per method at the final levels
/// (the OOB analogue of the test-set summary).
pub fn rfpi_training_oob_summary(
    model: &RfpiModel,
    train: &Dataset,
) -> Result<BTreeMap<PiMethod, (f64, f64)>> {
    let with_density = model
        .pi_methods
        .iter()
        .any(|m| matches!(m, PiMethod::Hdr | PiMethod::Chdr));
    let caches = oob_bop_caches(&model.forest, train, with_density)?;
    let mut out = BTreeMap::new();
    for &method in &model.pi_methods {
        let alpha = model.alpha_working(method);
        let covered = caches.iter().filter(|c| c.covered(method, alpha)).count();
        let mean_len = caches
            .iter()
            .map(|c| c.band_length(method, alpha))
            .sum::<f64>()
            / caches.len() as f64;
        out.insert(method, (mean_len, covered as f64 / caches.len() as f64));
    }
    Ok(out)
}

/// Fit one forest with the configured splitting rule and, when asked,
/// calibrate every requested method's working level on the OOB-BOPs.
pub fn fit_rfpi(
    train: &Dataset,
    cfg: &ForestConfig,
    alpha: f64,
    pi_methods: &[PiMethod],
    calibrate: bool,
    coverage_range: (f64, f64),
) -> Result<RfpiModel> {
    if pi_methods.is_empty() {
        return Err(Error::InvalidConfig("no PI methods requested".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let mut methods = pi_methods.to_vec();
    methods.sort_unstable();
    methods.dedup();

    let forest = fit_forest(train, cfg)?;
    let alpha_working = if calibrate {
        calibrate_oob_rfpi(&forest, train, alpha, &methods, coverage_range)?
    } else {
        methods.iter().map(|&m| (m, alpha)).collect()
    };
    Ok(RfpiModel {
        forest,
        pi_methods: methods,
        alpha_target: alpha,
        alpha_working,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::SplitRule;
    use approx::assert_abs_diff_eq;

    fn wavy_dataset(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen::<f64>() * 6.0, rng.gen::<f64>()])
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0].sin() * 4.0 + r[1] + 0.1 * (rng.gen::<f64>() - 0.5))
            .collect();
        Dataset::from_numeric(rows, y).unwrap()
    }

    fn small_cfg(rule: SplitRule, seed: u64) -> ForestConfig {
        ForestConfig::new(rule)
            .with_trees(50)
            .with_min_node_size(3)
            .with_seed(seed)
    }

    #[test]
    fn constant_response_gives_degenerate_lm_intervals() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 5) as f64]).collect();
        let ds = Dataset::from_numeric(rows, vec![7.0; 30]).unwrap();
        let m = fit_rfpi(
            &ds,
            &small_cfg(SplitRule::Ls, 1),
            0.05,
            &[PiMethod::Lm],
            false,
            (0.945, 0.955),
        )
        .unwrap();
        let pred = m.predict_intervals(&[2.0], ds.y()).unwrap();
        match &pred.bands[&PiMethod::Lm] {
            PiBand::Single(iv) => {
                assert_abs_diff_eq!(iv.lower, 7.0, epsilon = 1e-9);
                assert_abs_diff_eq!(iv.upper, 7.0, epsilon = 1e-9);
            }
            PiBand::Multi(_) => panic!("LM must be a single interval"),
        }
    }

    #[test]
    fn quantile_band_matches_reference_on_bop() {
        let ds = wavy_dataset(60, 3);
        let m = fit_rfpi(
            &ds,
            &small_cfg(SplitRule::Ls, 4),
            0.2,
            &[PiMethod::Quant],
            false,
            (0.75, 0.85),
        )
        .unwrap();
        let row = ds.row(10);
        let pred = m.predict_intervals(row, ds.y()).unwrap();
        let bop = build_bop(m.forest(), row, BopFlavor::Inbag);
        let expect = quantile_interval(&bop.values(ds.y()), 0.2).unwrap();
        match &pred.bands[&PiMethod::Quant] {
            PiBand::Single(iv) => {
                assert_abs_diff_eq!(iv.lower, expect.lower, epsilon = 1e-12);
                assert_abs_diff_eq!(iv.upper, expect.upper, epsilon = 1e-12);
            }
            PiBand::Multi(_) => panic!("Quant must be a single interval"),
        }
    }

    #[test]
    fn chdr_is_hull_of_hdr_on_same_bop() {
        let ds = wavy_dataset(80, 5);
        let m = fit_rfpi(
            &ds,
            &small_cfg(SplitRule::Ls, 6),
            0.1,
            &[PiMethod::Hdr, PiMethod::Chdr],
            false,
            (0.85, 0.95),
        )
        .unwrap();
        let pred = m.predict_intervals(ds.row(2), ds.y()).unwrap();
        let (hdr, chdr) = (&pred.bands[&PiMethod::Hdr], &pred.bands[&PiMethod::Chdr]);
        match (hdr, chdr) {
            (PiBand::Multi(region), PiBand::Single(hull)) => {
                let expect = region.hull();
                assert_abs_diff_eq!(hull.lower, expect.lower, epsilon = 1e-12);
                assert_abs_diff_eq!(hull.upper, expect.upper, epsilon = 1e-12);
            }
            _ => panic!("HDR must be multi, CHDR single"),
        }
    }

    #[test]
    fn per_method_levels_are_independent() {
        let ds = wavy_dataset(120, 7);
        let m = fit_rfpi(
            &ds,
            &small_cfg(SplitRule::Ls, 8).with_trees(150),
            0.05,
            &[PiMethod::Lm, PiMethod::Quant, PiMethod::Spi],
            true,
            (0.945, 0.955),
        )
        .unwrap();
        // Calibrating each method alone must give the same level as
        // calibrating them jointly.
        for &method in &[PiMethod::Lm, PiMethod::Quant, PiMethod::Spi] {
            let solo = fit_rfpi(
                &ds,
                &small_cfg(SplitRule::Ls, 8).with_trees(150),
                0.05,
                &[method],
                true,
                (0.945, 0.955),
            )
            .unwrap();
            assert_eq!(m.alpha_working(method), solo.alpha_working(method));
        }
    }

    #[test]
    fn calibration_grid_pick_matches_bruteforce() {
        let ds = wavy_dataset(70, 9);
        let forest = fit_forest(&ds, &small_cfg(SplitRule::Ls, 10).with_trees(80)).unwrap();
        let levels =
            calibrate_oob_rfpi(&forest, &ds, 0.05, &[PiMethod::Spi], (0.945, 0.955)).unwrap();
        // Re-derive by brute force over the same grid and caches: inside the
        // range keep alpha; otherwise the acceptable level closest to alpha;
        // otherwise the level with coverage closest to the target.
        let caches = oob_bop_caches(&forest, &ds, false).unwrap();
        let coverage = |a: f64| {
            caches.iter().filter(|c| c.covered(PiMethod::Spi, a)).count() as f64
                / caches.len() as f64
        };
        let at_alpha = coverage(0.05);
        let expect = if (0.945..=0.955).contains(&at_alpha) {
            0.05
        } else {
            let grid = super::super::calibrate::calibration_grid(0.05);
            let mut acceptable: Option<(f64, f64)> = None;
            let mut fallback = (0.05, (at_alpha - 0.95f64).abs());
            for a in grid {
                let cov = coverage(a);
                if (cov - 0.95).abs() <= fallback.1 {
                    fallback = (a, (cov - 0.95).abs());
                }
                if (0.945..=0.955).contains(&cov) {
                    let dist = (a - 0.05f64).abs();
                    if acceptable.is_none_or(|(_, d)| dist <= d) {
                        acceptable = Some((a, dist));
                    }
                }
            }
            acceptable.map(|(a, _)| a).unwrap_or(fallback.0)
        };
        assert_eq!(levels[&PiMethod::Spi], expect);
    }

    #[test]
    fn all_fifteen_variants_are_enumerable() {
        let ds = wavy_dataset(50, 11);
        let mut count = 0;
        for rule in [SplitRule::Ls, SplitRule::L1, SplitRule::Spi] {
            let m = fit_rfpi(
                &ds,
                &small_cfg(rule, 12).with_trees(20),
                0.1,
                &PiMethod::ALL,
                false,
                (0.85, 0.95),
            )
            .unwrap();
            let pred = m.predict_intervals(ds.row(0), ds.y()).unwrap();
            count += pred.bands.len();
        }
        assert_eq!(count, 15);
    }

    #[test]
    fn empty_methods_error() {
        let ds = wavy_dataset(30, 13);
        assert!(fit_rfpi(
            &ds,
            &small_cfg(SplitRule::Ls, 1),
            0.05,
            &[],
            false,
            (0.9, 1.0)
        )
        .is_err());
    }
}
