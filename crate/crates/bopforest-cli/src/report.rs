//! Report assembly and rendering: the summary tables, JSON documents and
//! per-row interval CSV shared by the fit subcommands.

use serde::Serialize;

use bopforest::interval::PiBand;
use bopforest::pipeline::TrainingOobSummary;

/// One test row's band for one method, flattened to component intervals.
#[derive(Debug, Clone, Serialize)]
pub struct RowBand {
    pub row: usize,
    pub method: String,
    pub point: f64,
    pub intervals: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
}

impl RowBand {
    pub fn new(row: usize, method: &str, point: f64, band: &PiBand, truth: Option<f64>) -> Self {
        let intervals = match band {
            PiBand::Single(iv) => vec![(iv.lower, iv.upper)],
            PiBand::Multi(region) => region
                .intervals
                .iter()
                .map(|iv| (iv.lower, iv.upper))
                .collect(),
        };
        RowBand {
            row,
            method: method.to_owned(),
            point,
            intervals,
            truth,
        }
    }
}

/// Plot-ready CSV: one line per component interval.
pub fn bands_to_csv(bands: &[RowBand]) -> String {
    let mut out = String::from("row,method,point,lower,upper,truth\n");
    for band in bands {
        for &(lower, upper) in &band.intervals {
            let truth = band
                .truth
                .map(|t| format!("{t}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                band.row, band.method, band.point, lower, upper, truth
            ));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct OobBlock {
    pub mean_pi_length: f64,
    pub coverage: f64,
    pub mae: f64,
    pub rmse: f64,
}

impl From<TrainingOobSummary> for OobBlock {
    fn from(s: TrainingOobSummary) -> Self {
        OobBlock {
            mean_pi_length: s.mean_pi_length,
            coverage: s.coverage,
            mae: s.mae,
            rmse: s.rmse,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PibfReport {
    pub alpha: f64,
    pub alpha_w: f64,
    pub calibration: String,
    pub n_train: usize,
    pub n_test: usize,
    pub mean_pi_length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oob: Option<OobBlock>,
    pub pooled_fallback_rows: usize,
    pub bands: Vec<RowBand>,
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn kv_line(label: &str, value: &str) -> String {
    format!("{label:>30}: {value}\n")
}

impl PibfReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if self.calibration != "none" {
            out.push_str(&kv_line("alpha_w", &format!("{:.3}", self.alpha_w)));
        }
        out.push_str(&kv_line(
            "Mean PI length",
            &format!("{:.3}", self.mean_pi_length),
        ));
        if let Some(c) = self.coverage {
            out.push_str(&kv_line("Coverage", &pct(c)));
        }
        if let Some(m) = self.mae {
            out.push_str(&kv_line("MAE of test predictions", &format!("{m:.3}")));
        }
        if let Some(r) = self.rmse {
            out.push_str(&kv_line("RMSE of test predictions", &format!("{r:.3}")));
        }
        if let Some(oob) = &self.oob {
            out.push('\n');
            out.push_str(&kv_line(
                "Mean PI length (OOB PIs)",
                &format!("{:.3}", oob.mean_pi_length),
            ));
            out.push_str(&kv_line("Coverage (OOB PIs)", &pct(oob.coverage)));
            out.push_str(&kv_line(
                "MAE of OOB train predictions",
                &format!("{:.3}", oob.mae),
            ));
            out.push_str(&kv_line(
                "RMSE of OOB train predictions",
                &format!("{:.3}", oob.rmse),
            ));
        }
        if self.pooled_fallback_rows > 0 {
            out.push_str(&kv_line(
                "Pooled-residual fallbacks",
                &self.pooled_fallback_rows.to_string(),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub label: String,
    pub alpha_w: f64,
    pub mean_pi_length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RfpiReport {
    pub split_rule: String,
    pub alpha: f64,
    pub calibrated: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub methods: Vec<MethodSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    pub bands: Vec<RowBand>,
}

impl RfpiReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&kv_line("Split rule", &self.split_rule));
        let rule = "-".repeat(78);
        out.push_str(&rule);
        out.push('\n');
        out.push_str(&format!(
            "{:<38}{:>14}{:>12}{:>12}\n",
            "", "Mean PI length", "Coverage", "alpha_w"
        ));
        for m in &self.methods {
            let coverage = m.coverage.map(pct).unwrap_or_default();
            out.push_str(&format!(
                "{:<38}{:>14.3}{:>12}{:>12.3}\n",
                m.label, m.mean_pi_length, coverage, m.alpha_w
            ));
        }
        out.push_str(&rule);
        out.push('\n');
        if let Some(m) = self.mae {
            out.push_str(&kv_line("MAE of test predictions", &format!("{m:.3}")));
        }
        if let Some(r) = self.rmse {
            out.push_str(&kv_line("RMSE of test predictions", &format!("{r:.3}")));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub source: String,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PiallReport {
    pub alpha: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub methods: Vec<MethodSummary>,
    pub point_predictions: Vec<PointSummary>,
    pub bands: Vec<RowBand>,
}

impl PiallReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rule = "-".repeat(40);
        out.push_str(&rule);
        out.push('\n');
        out.push_str(&format!("{:<10}{:>17}{:>12}\n", "", "Mean PI length", "Coverage"));
        for m in &self.methods {
            let coverage = m.coverage.map(pct).unwrap_or_default();
            out.push_str(&format!(
                "{:<10}{:>17.3}{:>12}\n",
                m.method, m.mean_pi_length, coverage
            ));
        }
        out.push_str(&rule);
        out.push('\n');
        if !self.point_predictions.is_empty() {
            out.push_str(&format!("{:<10}{:>17}{:>12}\n", "", "MAE", "RMSE"));
            for p in &self.point_predictions {
                out.push_str(&format!(
                    "{:<10}{:>17.3}{:>12.3}\n",
                    p.source, p.mae, p.rmse
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkBlock {
    pub label: String,
    pub mean_coverage: f64,
    pub sd_coverage: f64,
    pub mean_pi_length: f64,
    pub mean_mae: f64,
    pub mean_rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub coverages: Vec<f64>,
    pub mean_lengths: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkCliReport {
    pub problem: String,
    pub n_train: usize,
    pub n_test: usize,
    pub replications: usize,
    pub alpha: f64,
    pub trees: usize,
    pub seed: u64,
    pub results: Vec<BenchmarkBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub alpha_w_cv: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub alpha_w_oob: Vec<f64>,
}

impl BenchmarkCliReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} | n_train {} | n_test {} | reps {} | alpha {:.3} | trees {}\n",
            self.problem, self.n_train, self.n_test, self.replications, self.alpha, self.trees
        ));
        out.push_str(&format!(
            "{:<34}{:>12}{:>12}{:>16}{:>10}{:>10}\n",
            "method", "coverage", "sd(cov)", "mean PI length", "MAE", "RMSE"
        ));
        for r in &self.results {
            out.push_str(&format!(
                "{:<34}{:>12.3}{:>12.4}{:>16.3}{:>10.3}{:>10.3}\n",
                r.label, r.mean_coverage, r.sd_coverage, r.mean_pi_length, r.mean_mae, r.mean_rmse
            ));
            if let Some(t) = r.wall_time_s {
                out.push_str(&format!("{:<34}{:>12.1}s\n", "  wall time", t));
            }
        }
        out
    }
}
