//! Boosted two-forest prediction intervals.
//!
//! A first forest predicts the response; a second forest, fitted on the
//! first's out-of-bag residuals, both corrects the point prediction and
//! provides out-of-bag neighborhoods whose bias-corrected residuals form the
//! conditional prediction-error distribution. The interval around the
//! corrected prediction is the shortest window of that distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bop::{build_bop, build_oob_bop_training};
use super::calibrate::search_working_level;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{derive_seed, fit_forest, BopFlavor, Forest, ForestConfig, SplitRule};
use crate::interval::{required_count, shortest_window_sorted, Interval};

/// Seed streams so the second forest, the CV folds and the fold forests all
/// draw independent deterministic substreams from one master seed.
const STREAM_FOREST_RESIDUAL: u64 = 0x0b0f_0001;
const STREAM_CV_PERMUTATION: u64 = 0x0b0f_0002;
const STREAM_CV_FOLD_BASE: u64 = 0x0b0f_1000;

/// How the working level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Calibration {
    /// Use the target level directly.
    None,
    /// k-fold cross-validated coverage with grid search.
    Cv { folds: usize },
    /// Out-of-bag BOPs of the training rows with grid search.
    Oob,
}

/// Fitted two-forest state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PibfModel {
    forest_response: Forest,
    forest_residual: Forest,
    /// Raw OOB residuals of the first forest, per training row.
    oob_residuals_raw: Vec<f64>,
    /// Bias-corrected OOB residuals, per training row.
    oob_residuals_corrected: Vec<f64>,
    /// Corrected OOB predictions of the training rows.
    oob_predictions_corrected: Vec<f64>,
    alpha_target: f64,
    alpha_working: f64,
    coverage_range: (f64, f64),
    /// Rows whose OOB prediction fell back to the full-forest prediction
    /// because no tree left them out of bag.
    oob_fallback_rows: usize,
}

/// Point prediction and interval for one query row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PibfPrediction {
    pub point: f64,
    pub interval: Interval,
    /// Set when the query's OOB neighborhood was empty and the pooled
    /// corrected residuals were used instead.
    pub used_pooled_fallback: bool,
}

/// Coverage and error summary of the training rows' own OOB intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingOobSummary {
    pub mean_pi_length: f64,
    pub coverage: f64,
    pub mae: f64,
    pub rmse: f64,
}

impl PibfModel {
    pub fn alpha_working(&self) -> f64 {
        self.alpha_working
    }

    pub fn alpha_target(&self) -> f64 {
        self.alpha_target
    }

    pub fn coverage_range(&self) -> (f64, f64) {
        self.coverage_range
    }

    pub fn forest_response(&self) -> &Forest {
        &self.forest_response
    }

    pub fn forest_residual(&self) -> &Forest {
        &self.forest_residual
    }

    pub fn oob_residuals_raw(&self) -> &[f64] {
        &self.oob_residuals_raw
    }

    pub fn oob_residuals_corrected(&self) -> &[f64] {
        &self.oob_residuals_corrected
    }

    pub fn oob_predictions_corrected(&self) -> &[f64] {
        &self.oob_predictions_corrected
    }

    pub fn oob_fallback_rows(&self) -> usize {
        self.oob_fallback_rows
    }

    /// Corrected point prediction: sum of both forests.
    pub fn predict_point(&self, row: &[f64]) -> f64 {
        self.forest_response.predict_point(row) + self.forest_residual.predict_point(row)
    }

    /// Point prediction and interval for one query row at the working level.
    pub fn predict_interval(&self, row: &[f64]) -> PibfPrediction {
        let point = self.predict_point(row);
        let bop = build_bop(&self.forest_residual, row, BopFlavor::Oob);
        let (mut sample, used_pooled_fallback) = if bop.is_empty() {
            (self.oob_residuals_corrected.clone(), true)
        } else {
            (bop.values(&self.oob_residuals_corrected), false)
        };
        sample.sort_unstable_by(f64::total_cmp);
        let k = required_count(sample.len(), self.alpha_working);
        let interval = shortest_window_sorted(&sample, k).shifted(point);
        PibfPrediction {
            point,
            interval,
            used_pooled_fallback,
        }
    }

    /// Intervals for every row of a test set.
    pub fn predict_intervals(&self, test: &Dataset) -> Vec<PibfPrediction> {
        (0..test.n())
            .into_par_iter()
            .map(|i| self.predict_interval(test.row(i)))
            .collect()
    }

    /// OOB intervals of the training rows at the working level: each row's
    /// interval comes from the in-bag neighbors in the trees where the row
    /// was out of bag, centered on its corrected OOB prediction.
    pub fn training_oob_summary(&self, train: &Dataset) -> Result<TrainingOobSummary> {
        let caches = oob_residual_caches(self, train)?;
        let mut covered = 0usize;
        let mut total_len = 0.0f64;
        for cache in &caches {
            let k = required_count(cache.sample.len(), self.alpha_working);
            let window = shortest_window_sorted(&cache.sample, k);
            if window.contains(cache.residual) {
                covered += 1;
            }
            total_len += window.len();
        }
        let y = train.y();
        let n = train.n() as f64;
        let mae = (0..train.n())
            .map(|i| (y[i] - self.oob_predictions_corrected[i]).abs())
            .sum::<f64>()
            / n;
        let rmse = ((0..train.n())
            .map(|i| (y[i] - self.oob_predictions_corrected[i]).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        Ok(TrainingOobSummary {
            mean_pi_length: total_len / caches.len() as f64,
            coverage: covered as f64 / caches.len() as f64,
            mae,
            rmse,
        })
    }
}

/// OOB predictions with the full-forest prediction substituted for rows that
/// were never out of bag (possible only with very few trees).
fn oob_predictions_with_fallback(forest: &Forest, ds: &Dataset) -> Result<(Vec<f64>, usize)> {
    let oob = forest.oob_predictions();
    let invalid = oob.invalid_count();
    if invalid == ds.n() {
        return Err(Error::Calibration(
            "no training row has an OOB prediction; increase the number of trees".into(),
        ));
    }
    let mut values = oob.values;
    for (i, &valid) in oob.valid.iter().enumerate() {
        if !valid {
            values[i] = forest.predict_point(ds.row(i));
        }
    }
    Ok((values, invalid))
}

fn validate_coverage_range(alpha: f64, coverage_range: (f64, f64)) -> Result<()> {
    let (lo, hi) = coverage_range;
    if !(lo <= hi && lo <= 1.0 - alpha && 1.0 - alpha <= hi) {
        return Err(Error::InvalidConfig(format!(
            "coverage range [{lo}, {hi}] must contain the target coverage {}",
            1.0 - alpha
        )));
    }
    Ok(())
}

/// Steps 1-5: two forests plus raw and corrected OOB residuals.
fn fit_core(train: &Dataset, cfg: &ForestConfig) -> Result<PibfModel> {
    // Both forests split with least squares regardless of the configured rule.
    let mut cfg1 = cfg.clone();
    cfg1.split_rule = SplitRule::Ls;
    let mut cfg2 = cfg1.clone();
    cfg2.seed = derive_seed(cfg.seed, STREAM_FOREST_RESIDUAL);

    let forest_response = fit_forest(train, &cfg1)?;
    let (oob_pred_raw, fallback1) = oob_predictions_with_fallback(&forest_response, train)?;
    let y = train.y();
    let oob_residuals_raw: Vec<f64> = (0..train.n()).map(|i| y[i] - oob_pred_raw[i]).collect();

    let residual_target = train.with_response(oob_residuals_raw.clone())?;
    let forest_residual = fit_forest(&residual_target, &cfg2)?;
    let (oob_resid_pred, fallback2) = oob_predictions_with_fallback(&forest_residual, train)?;

    let oob_predictions_corrected: Vec<f64> = (0..train.n())
        .map(|i| oob_pred_raw[i] + oob_resid_pred[i])
        .collect();
    let oob_residuals_corrected: Vec<f64> = (0..train.n())
        .map(|i| y[i] - oob_predictions_corrected[i])
        .collect();

    Ok(PibfModel {
        forest_response,
        forest_residual,
        oob_residuals_raw,
        oob_residuals_corrected,
        oob_predictions_corrected,
        alpha_target: 0.0, // set by fit_pibf
        alpha_working: 0.0,
        coverage_range: (0.0, 1.0),
        oob_fallback_rows: fallback1.max(fallback2),
    })
}

/// Fit the boosted two-forest model and calibrate its working level.
pub fn fit_pibf(
    train: &Dataset,
    cfg: &ForestConfig,
    alpha: f64,
    calibration: Calibration,
    coverage_range: (f64, f64),
) -> Result<PibfModel> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    validate_coverage_range(alpha, coverage_range)?;
    if let Calibration::Cv { folds } = calibration {
        if folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "cv calibration needs at least 2 folds, got {folds}"
            )));
        }
        if folds > train.n() {
            return Err(Error::InvalidConfig(format!(
                "cv calibration with {folds} folds exceeds n={}",
                train.n()
            )));
        }
    }

    let mut model = fit_core(train, cfg)?;
    model.alpha_target = alpha;
    model.coverage_range = coverage_range;
    model.alpha_working = match calibration {
        Calibration::None => alpha,
        Calibration::Cv { folds } => calibrate_cv(train, cfg, alpha, folds, coverage_range)?,
        Calibration::Oob => calibrate_oob_pibf(&model, train, alpha, coverage_range)?,
    };
    Ok(model)
}

/// One held-out residual sample cached for cheap re-evaluation across levels.
struct ResidualCache {
    /// Truth minus corrected point prediction.
    residual: f64,
    /// Sorted corrected-residual sample of the neighborhood.
    sample: Vec<f64>,
}

fn cache_coverage(caches: &[ResidualCache], alpha_w: f64) -> f64 {
    let covered = caches
        .iter()
        .filter(|c| {
            let k = required_count(c.sample.len(), alpha_w);
            shortest_window_sorted(&c.sample, k).contains(c.residual)
        })
        .count();
    covered as f64 / caches.len() as f64
}

/// CV calibration: per fold, fit the two-forest core on the fold-train part
/// and build each held-out row's residual sample; then search the level on
/// the cached samples.
pub fn calibrate_cv(
    train: &Dataset,
    cfg: &ForestConfig,
    alpha: f64,
    folds: usize,
    coverage_range: (f64, f64),
) -> Result<f64> {
    let n = train.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidConfig(format!(
            "folds={folds} must be in 2..=n ({n})"
        )));
    }
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng =
        rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_CV_PERMUTATION));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let caches: Vec<ResidualCache> = (0..folds)
        .into_par_iter()
        .map(|fold| -> Result<Vec<ResidualCache>> {
            let lo = fold * n / folds;
            let hi = (fold + 1) * n / folds;
            let mut heldout_idx: Vec<usize> = order[lo..hi].to_vec();
            let mut fit_idx: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            heldout_idx.sort_unstable();
            fit_idx.sort_unstable();
            let fold_train = train.subset(&fit_idx);
            let fold_test = train.subset(&heldout_idx);

            let mut fold_cfg = cfg.clone();
            fold_cfg.seed = derive_seed(cfg.seed, STREAM_CV_FOLD_BASE + fold as u64);
            let core = fit_core(&fold_train, &fold_cfg)?;

            let mut out = Vec::with_capacity(fold_test.n());
            for t in 0..fold_test.n() {
                let row = fold_test.row(t);
                let point = core.predict_point(row);
                let bop = build_bop(&core.forest_residual, row, BopFlavor::Oob);
                let mut sample = if bop.is_empty() {
                    core.oob_residuals_corrected.clone()
                } else {
                    bop.values(&core.oob_residuals_corrected)
                };
                sample.sort_unstable_by(f64::total_cmp);
                out.push(ResidualCache {
                    residual: fold_test.y()[t] - point,
                    sample,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    Ok(search_working_level(alpha, coverage_range, |a| {
        cache_coverage(&caches, a)
    }))
}

/// Residual caches for the training rows' own OOB-BOPs (the second forest's
/// neighborhoods over the trees where each row is out of bag).
fn oob_residual_caches(model: &PibfModel, train: &Dataset) -> Result<Vec<ResidualCache>> {
    let n = train.n();
    let caches: Vec<Option<ResidualCache>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bop = build_oob_bop_training(&model.forest_residual, train, i);
            if bop.is_empty() {
                return None;
            }
            let mut sample = bop.values(&model.oob_residuals_corrected);
            sample.sort_unstable_by(f64::total_cmp);
            Some(ResidualCache {
                residual: train.y()[i] - model.oob_predictions_corrected[i],
                sample,
            })
        })
        .collect();
    let empty = caches.iter().filter(|c| c.is_none()).count();
    if empty * 2 > n {
        return Err(Error::Calibration(format!(
            "{empty} of {n} training rows have empty OOB neighborhoods; increase the number of trees"
        )));
    }
    Ok(caches.into_iter().flatten().collect())
}

/// OOB calibration for the boosted model: level search over the training
/// rows' OOB-BOP residual samples.
pub fn calibrate_oob_pibf(
    model: &PibfModel,
    train: &Dataset,
    alpha: f64,
    coverage_range: (f64, f64),
) -> Result<f64> {
    validate_coverage_range(alpha, coverage_range)?;
    let caches = oob_residual_caches(model, train)?;
    Ok(search_working_level(alpha, coverage_range, |a| {
        cache_coverage(&caches, a)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn linear_dataset(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 2.0 * r[1] - r[2]).collect();
        Dataset::from_numeric(rows, y).unwrap()
    }

    fn small_cfg(seed: u64) -> ForestConfig {
        ForestConfig::new(SplitRule::Ls)
            .with_trees(60)
            .with_min_node_size(3)
            .with_seed(seed)
    }

    #[test]
    fn no_calibration_keeps_alpha() {
        let ds = linear_dataset(50, 1);
        let m = fit_pibf(&ds, &small_cfg(2), 0.1, Calibration::None, (0.85, 0.95)).unwrap();
        assert_eq!(m.alpha_working(), 0.1);
        assert_eq!(m.alpha_target(), 0.1);
    }

    #[test]
    fn residual_identities_hold_elementwise() {
        let ds = linear_dataset(60, 3);
        let m = fit_pibf(&ds, &small_cfg(4), 0.05, Calibration::None, (0.9, 1.0)).unwrap();
        let y = ds.y();
        for i in 0..ds.n() {
            assert_abs_diff_eq!(
                m.oob_residuals_corrected()[i],
                y[i] - m.oob_predictions_corrected()[i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn point_prediction_is_sum_of_forests() {
        let ds = linear_dataset(40, 5);
        let m = fit_pibf(&ds, &small_cfg(6), 0.05, Calibration::None, (0.9, 1.0)).unwrap();
        let row = ds.row(7);
        let expect = m.forest_response().predict_point(row) + m.forest_residual().predict_point(row);
        assert_eq!(m.predict_interval(row).point, expect);
    }

    #[test]
    fn interval_reconstructs_from_residual_sample() {
        let ds = linear_dataset(50, 7);
        let m = fit_pibf(&ds, &small_cfg(8), 0.1, Calibration::None, (0.85, 0.95)).unwrap();
        let row = ds.row(3);
        let pred = m.predict_interval(row);
        let bop = build_bop(m.forest_residual(), row, BopFlavor::Oob);
        assert!(!bop.is_empty());
        let sample = bop.values(m.oob_residuals_corrected());
        let window = crate::interval::shortest_interval(&sample, m.alpha_working());
        assert_abs_diff_eq!(pred.interval.lower, pred.point + window.lower, epsilon = 1e-12);
        assert_abs_diff_eq!(pred.interval.upper, pred.point + window.upper, epsilon = 1e-12);
        assert!(!pred.used_pooled_fallback);
    }

    #[test]
    fn interval_arithmetic_micro_example() {
        // Residual sample {-1, 0, 1, 8} at level 0.25 around point 10: the
        // shortest 3-of-4 window is [-1, 1], so the PI is [9, 11].
        let window = crate::interval::shortest_interval(&[-1.0, 0.0, 1.0, 8.0], 0.25);
        let pi = window.shifted(10.0);
        assert_eq!((pi.lower, pi.upper), (9.0, 11.0));
    }

    #[test]
    fn constant_response_gives_degenerate_intervals() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 6) as f64, i as f64]).collect();
        let ds = Dataset::from_numeric(rows, vec![2.5; 30]).unwrap();
        let m = fit_pibf(&ds, &small_cfg(9), 0.05, Calibration::None, (0.9, 1.0)).unwrap();
        let pred = m.predict_interval(&[3.0, 11.0]);
        assert_abs_diff_eq!(pred.point, 2.5, epsilon = 1e-9);
        assert!(pred.interval.len() < 1e-9);
    }

    #[test]
    fn bias_correction_shrinks_oob_residuals_on_smooth_signal() {
        // Mean |corrected| < mean |raw| in most seeds on noiseless data.
        let mut improved = 0;
        let total = 20;
        for seed in 0..total {
            let ds = linear_dataset(120, 100 + seed);
            let m = fit_pibf(
                &ds,
                &small_cfg(200 + seed).with_trees(80),
                0.05,
                Calibration::None,
                (0.9, 1.0),
            )
            .unwrap();
            let mean_raw: f64 = m
                .oob_residuals_raw()
                .iter()
                .map(|r| r.abs())
                .sum::<f64>()
                / ds.n() as f64;
            let mean_cor: f64 = m
                .oob_residuals_corrected()
                .iter()
                .map(|r| r.abs())
                .sum::<f64>()
                / ds.n() as f64;
            if mean_cor < mean_raw {
                improved += 1;
            }
        }
        assert!(
            improved * 2 > total,
            "bias correction improved only {improved}/{total} seeds"
        );
    }

    #[test]
    fn rejects_bad_configuration() {
        let ds = linear_dataset(30, 11);
        // Coverage range not containing the target.
        assert!(fit_pibf(&ds, &small_cfg(1), 0.05, Calibration::None, (0.5, 0.9)).is_err());
        // Too many folds.
        assert!(fit_pibf(
            &ds,
            &small_cfg(1),
            0.05,
            Calibration::Cv { folds: 50 },
            (0.9, 1.0)
        )
        .is_err());
        // Single fold.
        assert!(fit_pibf(
            &ds,
            &small_cfg(1),
            0.05,
            Calibration::Cv { folds: 1 },
            (0.9, 1.0)
        )
        .is_err());
    }

    #[test]
    fn model_survives_json_round_trip() {
        let ds = linear_dataset(30, 13);
        let m = fit_pibf(&ds, &small_cfg(14).with_trees(10), 0.1, Calibration::None, (0.8, 1.0))
            .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: PibfModel = serde_json::from_str(&json).unwrap();
        let row = ds.row(4);
        assert_eq!(m.predict_interval(row), back.predict_interval(row));
    }
}
