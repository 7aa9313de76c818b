//! Simulated regression benchmarks: the Friedman problems, the Peak problem,
//! a heteroscedastic Friedman variant, and two tree-structured generators,
//! plus interval evaluation (coverage, length, MAE, RMSE) and a replication
//! harness for comparing interval methods.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{derive_seed, ForestConfig, SplitRule};
use crate::interval::{required_count, shortest_window_sorted, PiBand};
use crate::pipeline::{
    build_bop, calibrate_cv, calibrate_oob_pibf, fit_pibf, fit_rfpi, Calibration, PiMethod,
};
use crate::forest::BopFlavor;

const STREAM_TRAIN: u64 = 0x51e0_0001;
const STREAM_TEST: u64 = 0x51e0_0002;
const STREAM_FOREST: u64 = 0x51e0_0003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimProblem {
    Friedman1,
    Friedman2,
    Friedman3,
    Peak,
    H2c,
    TreeNormal,
    TreeExp,
}

impl SimProblem {
    pub const ALL: [SimProblem; 7] = [
        SimProblem::Friedman1,
        SimProblem::Friedman2,
        SimProblem::Friedman3,
        SimProblem::Peak,
        SimProblem::H2c,
        SimProblem::TreeNormal,
        SimProblem::TreeExp,
    ];

    pub fn dimension(&self) -> usize {
        match self {
            SimProblem::Friedman1 | SimProblem::H2c => 10,
            SimProblem::Friedman2 | SimProblem::Friedman3 => 4,
            SimProblem::Peak => 20,
            SimProblem::TreeNormal | SimProblem::TreeExp => 7,
        }
    }
}

impl fmt::Display for SimProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SimProblem::Friedman1 => "friedman1",
            SimProblem::Friedman2 => "friedman2",
            SimProblem::Friedman3 => "friedman3",
            SimProblem::Peak => "peak",
            SimProblem::H2c => "h2c",
            SimProblem::TreeNormal => "tree-normal",
            SimProblem::TreeExp => "tree-exp",
        };
        write!(f, "{name}")
    }
}

impl FromStr for SimProblem {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "friedman1" => Ok(SimProblem::Friedman1),
            "friedman2" => Ok(SimProblem::Friedman2),
            "friedman3" => Ok(SimProblem::Friedman3),
            "peak" => Ok(SimProblem::Peak),
            "h2c" => Ok(SimProblem::H2c),
            "tree-normal" | "tree_normal" | "treenormal" => Ok(SimProblem::TreeNormal),
            "tree-exp" | "tree_exp" | "treeexp" => Ok(SimProblem::TreeExp),
            other => Err(format!(
                "unknown problem '{other}' (expected friedman1, friedman2, friedman3, peak, h2c, tree-normal or tree-exp)"
            )),
        }
    }
}

/// One simulated-data request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub problem: SimProblem,
    pub n: usize,
    pub seed: u64,
    /// Noise-scale override; each problem has its conventional default.
    pub noise_sd: Option<f64>,
}

/// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5`.
pub fn friedman1_mean(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5) * (x[2] - 0.5)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

/// `sqrt(x1^2 + (x2 x3 - 1/(x2 x4))^2)`.
pub fn friedman2_mean(x: &[f64]) -> f64 {
    let inner = x[1] * x[2] - 1.0 / (x[1] * x[3]);
    (x[0] * x[0] + inner * inner).sqrt()
}

/// `atan((x2 x3 - 1/(x2 x4)) / x1)`.
pub fn friedman3_mean(x: &[f64]) -> f64 {
    let inner = x[1] * x[2] - 1.0 / (x[1] * x[3]);
    (inner / x[0]).atan()
}

/// `25 exp(-0.5 r^2)` for a point at radius `r`.
pub fn peak_response(r: f64) -> f64 {
    25.0 * (-0.5 * r * r).exp()
}

/// Depth-three tree surface over the sign pattern of seven standard-normal
/// covariates; terminal means 5, 10, ..., 40.
pub fn tree_mean(x: &[f64]) -> f64 {
    if x[0] < 0.0 {
        if x[1] < 0.0 {
            if x[3] < 0.0 {
                5.0
            } else {
                10.0
            }
        } else if x[4] < 0.0 {
            15.0
        } else {
            20.0
        }
    } else if x[2] < 0.0 {
        if x[5] < 0.0 {
            25.0
        } else {
            30.0
        }
    } else if x[6] < 0.0 {
        35.0
    } else {
        40.0
    }
}

fn no_noise_override(spec: &SimSpec) -> Result<()> {
    if spec.noise_sd.is_some() {
        return Err(Error::InvalidConfig(format!(
            "{} does not take a noise_sd override",
            spec.problem
        )));
    }
    Ok(())
}

/// Generate a dataset for the requested problem, deterministically in the seed.
pub fn generate(spec: &SimSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.problem {
        SimProblem::Friedman1 => {
            let sd = spec.noise_sd.unwrap_or(1.0);
            let noise = Normal::new(0.0, sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let mut rows = Vec::with_capacity(spec.n);
            let mut ys = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let x: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
                ys.push(friedman1_mean(&x) + noise.sample(&mut rng));
                rows.push(x);
            }
            Dataset::from_numeric(rows, ys)
        }
        SimProblem::Friedman2 | SimProblem::Friedman3 => {
            let friedman3 = spec.problem == SimProblem::Friedman3;
            let sd = spec.noise_sd.unwrap_or(if friedman3 { 0.01 } else { 125.0 });
            let noise = Normal::new(0.0, sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let mut rows = Vec::with_capacity(spec.n);
            let mut ys = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let x = loop {
                    let x = vec![
                        rng.gen::<f64>() * 100.0,
                        40.0 * std::f64::consts::PI
                            + rng.gen::<f64>() * 520.0 * std::f64::consts::PI,
                        rng.gen::<f64>(),
                        1.0 + rng.gen::<f64>() * 10.0,
                    ];
                    // x1 = 0 has measure zero but breaks the arctan ratio.
                    if !friedman3 || x[0] != 0.0 {
                        break x;
                    }
                };
                let mean = if friedman3 {
                    friedman3_mean(&x)
                } else {
                    friedman2_mean(&x)
                };
                ys.push(mean + noise.sample(&mut rng));
                rows.push(x);
            }
            Dataset::from_numeric(rows, ys)
        }
        SimProblem::Peak => {
            no_noise_override(spec)?;
            let d = 20usize;
            let mut rows = Vec::with_capacity(spec.n);
            let mut ys = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let r = 3.0 * rng.gen::<f64>();
                let direction: Vec<f64> = loop {
                    let g: Vec<f64> = (0..d)
                        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                        .collect();
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        break g.iter().map(|v| v / norm).collect();
                    }
                };
                rows.push(direction.iter().map(|v| v * r).collect());
                ys.push(peak_response(r));
            }
            Dataset::from_numeric(rows, ys)
        }
        SimProblem::H2c => {
            no_noise_override(spec)?;
            if spec.n < 2 {
                return Err(Error::InvalidInput(
                    "h2c needs n >= 2: its scaling uses the sample min and max".into(),
                ));
            }
            let rows: Vec<Vec<f64>> = (0..spec.n)
                .map(|_| (0..10).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let mu: Vec<f64> = rows.iter().map(|r| friedman1_mean(&r[0..5])).collect();
            let sigma: Vec<f64> = rows.iter().map(|r| friedman1_mean(&r[5..10])).collect();
            let scale = |v: &[f64]| -> Result<Vec<f64>> {
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if hi == lo {
                    return Err(Error::InvalidInput(
                        "h2c scaling degenerate: constant surface over the sample".into(),
                    ));
                }
                Ok(v.iter().map(|&u| 3.0 * (u - lo) / (hi - lo) - 1.5).collect())
            };
            let mu_s = scale(&mu)?;
            let sigma_s: Vec<f64> = scale(&sigma)?.iter().map(|&u| u.exp()).collect();
            let ys: Vec<f64> = mu_s
                .iter()
                .zip(&sigma_s)
                .map(|(&m, &s)| {
                    m + s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect();
            Dataset::from_numeric(rows, ys)
        }
        SimProblem::TreeNormal | SimProblem::TreeExp => {
            let scale = spec.noise_sd.unwrap_or(1.0);
            let exponential = spec.problem == SimProblem::TreeExp;
            let exp_noise =
                Exp::new(1.0 / scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let normal_noise =
                Normal::new(0.0, scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let mut rows = Vec::with_capacity(spec.n);
            let mut ys = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let x: Vec<f64> = (0..7)
                    .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect();
                let eps = if exponential {
                    exp_noise.sample(&mut rng)
                } else {
                    normal_noise.sample(&mut rng)
                };
                ys.push(tree_mean(&x) + eps);
                rows.push(x);
            }
            Dataset::from_numeric(rows, ys)
        }
    }
}

/// Coverage, interval length and point-error metrics over one test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub coverage: f64,
    pub mean_pi_length: f64,
    /// `100 * (ml - ml*) / ml*` against a supplied best baseline length.
    pub relative_length_pct: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
    pub wall_time_s: Option<f64>,
}

/// Score intervals against the truth: coverage counts a hit when the truth
/// falls in any component interval, and HDR lengths sum their components.
pub fn evaluate(
    pis: &[PiBand],
    points: &[f64],
    truth: &[f64],
    baseline_mean_length: Option<f64>,
) -> Result<BenchmarkReport> {
    if pis.len() != truth.len() || points.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "evaluate: got {} intervals, {} points, {} truths",
            pis.len(),
            points.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("evaluate: empty test set".into()));
    }
    let n = truth.len() as f64;
    let covered = pis
        .iter()
        .zip(truth)
        .filter(|(band, &y)| band.contains(y))
        .count();
    let mean_pi_length = pis.iter().map(PiBand::total_len).sum::<f64>() / n;
    let mae = points
        .iter()
        .zip(truth)
        .map(|(&p, &y)| (p - y).abs())
        .sum::<f64>()
        / n;
    let rmse = (points
        .iter()
        .zip(truth)
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum::<f64>()
        / n)
        .sqrt();
    let relative_length_pct =
        baseline_mean_length.map(|best| 100.0 * (mean_pi_length - best) / best);
    Ok(BenchmarkReport {
        coverage: covered as f64 / n,
        mean_pi_length,
        relative_length_pct,
        mae,
        rmse,
        wall_time_s: None,
    })
}

/// Shared settings for a replicated simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub problem: SimProblem,
    pub n_train: usize,
    pub n_test: usize,
    pub replications: usize,
    pub alpha: f64,
    pub trees: usize,
    pub min_node_size: usize,
    pub seed: u64,
    pub noise_sd: Option<f64>,
}

impl BenchmarkConfig {
    fn train_spec(&self, rep: usize) -> SimSpec {
        SimSpec {
            problem: self.problem,
            n: self.n_train,
            seed: derive_seed(self.seed, STREAM_TRAIN + 2 * rep as u64),
            noise_sd: self.noise_sd,
        }
    }

    fn test_spec(&self, rep: usize) -> SimSpec {
        SimSpec {
            problem: self.problem,
            n: self.n_test,
            seed: derive_seed(self.seed, STREAM_TEST + 2 * rep as u64),
            noise_sd: self.noise_sd,
        }
    }

    fn forest_config(&self, rep: usize, split_rule: SplitRule) -> ForestConfig {
        ForestConfig::new(split_rule)
            .with_trees(self.trees)
            .with_min_node_size(self.min_node_size)
            .with_split_alpha(self.alpha)
            .with_seed(derive_seed(self.seed, STREAM_FOREST + rep as u64))
    }
}

/// Replication-level metric vectors plus their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub label: String,
    pub coverages: Vec<f64>,
    pub mean_lengths: Vec<f64>,
    pub maes: Vec<f64>,
    pub rmses: Vec<f64>,
    pub mean_coverage: f64,
    pub sd_coverage: f64,
    pub mean_length: f64,
    pub mean_mae: f64,
    pub mean_rmse: f64,
    pub wall_time_s: Option<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

fn summarize(label: String, reports: Vec<BenchmarkReport>, wall_time_s: f64) -> BenchmarkSummary {
    let coverages: Vec<f64> = reports.iter().map(|r| r.coverage).collect();
    let mean_lengths: Vec<f64> = reports.iter().map(|r| r.mean_pi_length).collect();
    let maes: Vec<f64> = reports.iter().map(|r| r.mae).collect();
    let rmses: Vec<f64> = reports.iter().map(|r| r.rmse).collect();
    BenchmarkSummary {
        label,
        mean_coverage: mean(&coverages),
        sd_coverage: if coverages.len() > 1 {
            sample_sd(&coverages)
        } else {
            0.0
        },
        mean_length: mean(&mean_lengths),
        mean_mae: mean(&maes),
        mean_rmse: mean(&rmses),
        coverages,
        mean_lengths,
        maes,
        rmses,
        wall_time_s: Some(wall_time_s),
    }
}

/// Replicated PIBF benchmark: per replication, generate train/test data, fit
/// with the requested calibration, and score the test intervals.
pub fn run_pibf_benchmark(
    cfg: &BenchmarkConfig,
    calibration: Calibration,
    coverage_range: (f64, f64),
) -> Result<BenchmarkSummary> {
    let started = Instant::now();
    let reports: Vec<BenchmarkReport> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<BenchmarkReport> {
            let train = generate(&cfg.train_spec(rep))?;
            let test = generate(&cfg.test_spec(rep))?;
            let fc = cfg.forest_config(rep, SplitRule::Ls);
            let model = fit_pibf(&train, &fc, cfg.alpha, calibration, coverage_range)?;
            let preds = model.predict_intervals(&test);
            let bands: Vec<PiBand> = preds.iter().map(|p| PiBand::Single(p.interval)).collect();
            let points: Vec<f64> = preds.iter().map(|p| p.point).collect();
            evaluate(&bands, &points, test.y(), None)
        })
        .collect::<Result<Vec<_>>>()?;
    let label = match calibration {
        Calibration::None => "PIBF (no calibration)".to_string(),
        Calibration::Cv { folds } => format!("PIBF (cv calibration, {folds} folds)"),
        Calibration::Oob => "PIBF (oob calibration)".to_string(),
    };
    Ok(summarize(label, reports, started.elapsed().as_secs_f64()))
}

/// Replicated single-forest benchmark for one split rule and one PI method.
pub fn run_rfpi_benchmark(
    cfg: &BenchmarkConfig,
    split_rule: SplitRule,
    method: PiMethod,
    calibrate: bool,
    coverage_range: (f64, f64),
) -> Result<BenchmarkSummary> {
    let started = Instant::now();
    let reports: Vec<BenchmarkReport> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<BenchmarkReport> {
            let train = generate(&cfg.train_spec(rep))?;
            let test = generate(&cfg.test_spec(rep))?;
            let fc = cfg.forest_config(rep, split_rule);
            let model = fit_rfpi(
                &train,
                &fc,
                cfg.alpha,
                &[method],
                calibrate,
                coverage_range,
            )?;
            let preds = model.predict_all(&test, train.y())?;
            let bands: Vec<PiBand> = preds.iter().map(|p| p.bands[&method].clone()).collect();
            let points: Vec<f64> = preds.iter().map(|p| p.point).collect();
            evaluate(&bands, &points, test.y(), None)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(
        format!("RFPI {split_rule}-{method}"),
        reports,
        started.elapsed().as_secs_f64(),
    ))
}

/// Per-variant outcome of the calibration comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationComparison {
    pub none: BenchmarkSummary,
    pub cv: BenchmarkSummary,
    pub oob: BenchmarkSummary,
    pub alpha_w_cv: Vec<f64>,
    pub alpha_w_oob: Vec<f64>,
}

/// Run the no-calibration, CV and OOB variants of PIBF on shared fits: the
/// two-forest core is fitted once per replication and only the working level
/// differs, so the three coverage distributions are directly comparable.
pub fn run_pibf_calibration_comparison(
    cfg: &BenchmarkConfig,
    folds: usize,
    coverage_range: (f64, f64),
) -> Result<CalibrationComparison> {
    let started = Instant::now();
    struct RepOutcome {
        reports: [BenchmarkReport; 3],
        alpha_cv: f64,
        alpha_oob: f64,
    }
    let outcomes: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<RepOutcome> {
            let train = generate(&cfg.train_spec(rep))?;
            let test = generate(&cfg.test_spec(rep))?;
            let fc = cfg.forest_config(rep, SplitRule::Ls);
            let model = fit_pibf(&train, &fc, cfg.alpha, Calibration::None, coverage_range)?;
            let alpha_cv = calibrate_cv(&train, &fc, cfg.alpha, folds, coverage_range)?;
            let alpha_oob = calibrate_oob_pibf(&model, &train, cfg.alpha, coverage_range)?;

            let alphas = [cfg.alpha, alpha_cv, alpha_oob];
            let mut bands: [Vec<PiBand>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            let mut points = Vec::with_capacity(test.n());
            for t in 0..test.n() {
                let row = test.row(t);
                let point = model.predict_point(row);
                let bop = build_bop(model.forest_residual(), row, BopFlavor::Oob);
                let mut sample = if bop.is_empty() {
                    model.oob_residuals_corrected().to_vec()
                } else {
                    bop.values(model.oob_residuals_corrected())
                };
                sample.sort_unstable_by(f64::total_cmp);
                for (v, &alpha) in alphas.iter().enumerate() {
                    let k = required_count(sample.len(), alpha);
                    let window = shortest_window_sorted(&sample, k);
                    bands[v].push(PiBand::Single(window.shifted(point)));
                }
                points.push(point);
            }
            let reports = [
                evaluate(&bands[0], &points, test.y(), None)?,
                evaluate(&bands[1], &points, test.y(), None)?,
                evaluate(&bands[2], &points, test.y(), None)?,
            ];
            Ok(RepOutcome {
                reports,
                alpha_cv,
                alpha_oob,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let elapsed = started.elapsed().as_secs_f64();
    let collect = |v: usize, label: &str| {
        summarize(
            label.to_string(),
            outcomes.iter().map(|o| o.reports[v]).collect(),
            elapsed,
        )
    };
    Ok(CalibrationComparison {
        none: collect(0, "PIBF (no calibration)"),
        cv: collect(1, "PIBF (cv calibration)"),
        oob: collect(2, "PIBF (oob calibration)"),
        alpha_w_cv: outcomes.iter().map(|o| o.alpha_cv).collect(),
        alpha_w_oob: outcomes.iter().map(|o| o.alpha_oob).collect(),
    })
}
