//! Command-line interface: fit prediction-interval models on CSV data,
//! generate simulated benchmark datasets, and run replicated benchmarks.

mod report;

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bopforest::data::{encode_consistently, load_csv, load_csv_optional_target, Dataset};
use bopforest::forest::{ForestConfig, SplitRule};
use bopforest::interval::PiBand;
use bopforest::pipeline::{
    fit_pibf, fit_rfpi, save_pibf_model, save_rfpi_model, Calibration, PiMethod,
};
use bopforest::simbench::{
    self, evaluate, generate, BenchmarkConfig, SimProblem, SimSpec,
};

use report::{
    bands_to_csv, BenchmarkBlock, BenchmarkCliReport, MethodSummary, OobBlock, PiallReport,
    PibfReport, PointSummary, RfpiReport, RowBand,
};

#[derive(Parser)]
#[command(
    name = "bopforest",
    version,
    about = "Random-forest prediction intervals: boosted two-forest intervals and \
             fifteen split-rule/interval-method variants with coverage calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boosted two-forest prediction intervals on CSV data
    Pibf(PibfArgs),
    /// Single-forest intervals with a chosen split rule and PI methods
    Rfpi(RfpiArgs),
    /// All sixteen interval methods with default parameters
    Piall(PiallArgs),
    /// Generate a simulated benchmark dataset as CSV
    Simulate(SimulateArgs),
    /// Replicated simulation benchmark of interval methods
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CalibrationMode {
    None,
    Cv,
    Oob,
}

#[derive(Args)]
struct DataArgs {
    /// Training CSV with a header row
    #[arg(long)]
    train: PathBuf,
    /// Test CSV; the target column may be absent (features only)
    #[arg(long)]
    test: PathBuf,
    /// Response column name
    #[arg(long)]
    target: String,
    /// Field delimiter
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Categorical levels seen fewer times than this are grouped
    #[arg(long, default_value_t = 30)]
    rare_min: usize,
}

#[derive(Args)]
struct ForestArgs {
    /// Number of trees per forest
    #[arg(long, default_value_t = 1000)]
    trees: usize,
    /// Candidate features per node [default: max(p/3, 1)]
    #[arg(long)]
    mtry: Option<usize>,
    /// Minimum observations per terminal node
    #[arg(long, default_value_t = 5)]
    min_node: usize,
    /// Master RNG seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PibfArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = CalibrationMode::Cv)]
    calibration: CalibrationMode,
    /// Folds for cv calibration
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Acceptable coverage range "lo,hi"
    #[arg(long, value_parser = parse_range, default_value = "0.945,0.955")]
    coverage_range: (f64, f64),
    #[command(flatten)]
    forest: ForestArgs,
    /// Also report OOB intervals over the training data
    #[arg(long)]
    oob: bool,
    /// Save the fitted model as JSON
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RfpiArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Splitting rule: ls, l1 or spi
    #[arg(long, default_value = "ls", value_parser = parse_split)]
    split: SplitRule,
    /// Comma-separated PI methods (lm, quant, spi, hdr, chdr)
    #[arg(long, default_value = "lm,quant,spi,hdr,chdr", value_parser = parse_methods)]
    pi_methods: std::vec::Vec<PiMethod>,
    /// Calibration: oob or none
    #[arg(long, value_enum, default_value_t = CalibrationMode::Oob)]
    calibration: CalibrationMode,
    #[arg(long, value_parser = parse_range, default_value = "0.945,0.955")]
    coverage_range: (f64, f64),
    #[command(flatten)]
    forest: ForestArgs,
    /// Save the fitted model as JSON
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PiallArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    trees: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_parser = parse_range, default_value = "0.945,0.955")]
    coverage_range: (f64, f64),
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// friedman1, friedman2, friedman3, peak, h2c, tree-normal or tree-exp
    #[arg(long, value_parser = parse_problem)]
    problem: SimProblem,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Noise-scale override where the problem takes one
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchMethod {
    Pibf,
    Rfpi,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_parser = parse_problem)]
    problem: SimProblem,
    #[arg(long)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 2000)]
    trees: usize,
    #[arg(long, default_value_t = 5)]
    min_node: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, value_enum, default_value_t = BenchMethod::Pibf)]
    method: BenchMethod,
    #[arg(long, value_enum, default_value_t = CalibrationMode::Cv)]
    calibration: CalibrationMode,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value = "ls", value_parser = parse_split)]
    split: SplitRule,
    #[arg(long, default_value = "quant", value_parser = parse_methods)]
    pi_methods: std::vec::Vec<PiMethod>,
    #[arg(long, value_parser = parse_range, default_value = "0.945,0.955")]
    coverage_range: (f64, f64),
    /// Run the no-calibration/cv/oob comparison on shared fits
    #[arg(long)]
    compare_calibrations: bool,
    /// Include wall-clock timing in the report (breaks byte-reproducibility)
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected 'lo,hi', got '{s}'"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| format!("bad lower bound '{}'", parts[0]))?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| format!("bad upper bound '{}'", parts[1]))?;
    Ok((lo, hi))
}

fn parse_split(s: &str) -> Result<SplitRule, String> {
    s.parse()
}

fn parse_methods(s: &str) -> Result<Vec<PiMethod>, String> {
    let mut methods = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        methods.push(part.parse::<PiMethod>()?);
    }
    if methods.is_empty() {
        return Err("no PI methods given".into());
    }
    Ok(methods)
}

fn parse_problem(s: &str) -> Result<SimProblem, String> {
    s.parse()
}

fn init_threads() {
    if let Ok(v) = std::env::var("BOPFOREST_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}

fn main() {
    init_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pibf(args) => run_pibf(args),
        Command::Rfpi(args) => run_rfpi(args),
        Command::Piall(args) => run_piall(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Benchmark(args) => run_benchmark(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Load and consistently encode the train/test pair. The bool reports whether
/// the test file carried the target column.
fn load_pair(data: &DataArgs) -> anyhow::Result<(Dataset, Dataset, bool)> {
    let delimiter = data.delimiter as u8;
    let (train, train_report) = load_csv(&data.train, &data.target, delimiter)
        .with_context(|| format!("loading {}", data.train.display()))?;
    if train_report.rows_dropped > 0 {
        eprintln!(
            "note: dropped {} of {} training rows with missing values",
            train_report.rows_dropped, train_report.rows_read
        );
    }
    let (test, test_report, has_truth) =
        load_csv_optional_target(&data.test, &data.target, delimiter)
            .with_context(|| format!("loading {}", data.test.display()))?;
    if test_report.rows_dropped > 0 {
        eprintln!(
            "note: dropped {} of {} test rows with missing values",
            test_report.rows_dropped, test_report.rows_read
        );
    }
    let (train, test) = encode_consistently(&train, &test, data.rare_min)?;
    Ok((train, test, has_truth))
}

fn forest_config(args: &ForestArgs, split: SplitRule, alpha: f64) -> ForestConfig {
    ForestConfig::new(split)
        .with_trees(args.trees)
        .with_mtry(args.mtry)
        .with_min_node_size(args.min_node)
        .with_split_alpha(alpha)
        .with_seed(args.seed)
}

fn emit(output: &OutputArgs, content: &str) -> anyhow::Result<()> {
    match &output.out {
        Some(path) => {
            let mut f = File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            f.write_all(content.as_bytes())?;
        }
        None => {
            print!("{content}");
        }
    }
    Ok(())
}

fn calibration_of(mode: CalibrationMode, folds: usize) -> Calibration {
    match mode {
        CalibrationMode::None => Calibration::None,
        CalibrationMode::Cv => Calibration::Cv { folds },
        CalibrationMode::Oob => Calibration::Oob,
    }
}

fn truth_of(test: &Dataset, has_truth: bool) -> Option<Vec<f64>> {
    has_truth.then(|| test.y().to_vec())
}

fn run_pibf(args: PibfArgs) -> anyhow::Result<()> {
    let (train, test, has_truth) = load_pair(&args.data)?;
    let cfg = forest_config(&args.forest, SplitRule::Ls, args.alpha);
    let calibration = calibration_of(args.calibration, args.folds);
    let model = fit_pibf(&train, &cfg, args.alpha, calibration, args.coverage_range)?;
    if let Some(path) = &args.model_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        save_pibf_model(&model, f)?;
    }

    let preds = model.predict_intervals(&test);
    let truth = truth_of(&test, has_truth);
    let bands: Vec<RowBand> = preds
        .iter()
        .enumerate()
        .map(|(i, p)| {
            RowBand::new(
                i,
                "PIBF",
                p.point,
                &PiBand::Single(p.interval),
                truth.as_ref().map(|t| t[i]),
            )
        })
        .collect();

    let (coverage, mae, rmse) = match &truth {
        Some(t) => {
            let pis: Vec<PiBand> = preds.iter().map(|p| PiBand::Single(p.interval)).collect();
            let points: Vec<f64> = preds.iter().map(|p| p.point).collect();
            let r = evaluate(&pis, &points, t, None)?;
            (Some(r.coverage), Some(r.mae), Some(r.rmse))
        }
        None => (None, None, None),
    };
    let mean_pi_length =
        preds.iter().map(|p| p.interval.len()).sum::<f64>() / preds.len().max(1) as f64;
    let oob = if args.oob {
        Some(OobBlock::from(model.training_oob_summary(&train)?))
    } else {
        None
    };

    let report = PibfReport {
        alpha: args.alpha,
        alpha_w: model.alpha_working(),
        calibration: match args.calibration {
            CalibrationMode::None => "none".into(),
            CalibrationMode::Cv => "cv".into(),
            CalibrationMode::Oob => "oob".into(),
        },
        n_train: train.n(),
        n_test: test.n(),
        mean_pi_length,
        coverage,
        mae,
        rmse,
        oob,
        pooled_fallback_rows: preds.iter().filter(|p| p.used_pooled_fallback).count(),
        bands,
    };
    let content = match args.output.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
        OutputFormat::Csv => bands_to_csv(&report.bands),
    };
    emit(&args.output, &content)
}

fn run_rfpi(args: RfpiArgs) -> anyhow::Result<()> {
    if args.calibration == CalibrationMode::Cv {
        bail!("rfpi supports --calibration oob or none");
    }
    let (train, test, has_truth) = load_pair(&args.data)?;
    let cfg = forest_config(&args.forest, args.split, args.alpha);
    let calibrate = args.calibration == CalibrationMode::Oob;
    let model = fit_rfpi(
        &train,
        &cfg,
        args.alpha,
        &args.pi_methods,
        calibrate,
        args.coverage_range,
    )?;
    if let Some(path) = &args.model_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        save_rfpi_model(&model, f)?;
    }

    let preds = model.predict_all(&test, train.y())?;
    let truth = truth_of(&test, has_truth);
    let points: Vec<f64> = preds.iter().map(|p| p.point).collect();

    let mut bands = Vec::new();
    let mut methods = Vec::new();
    for &method in model.pi_methods() {
        let pis: Vec<PiBand> = preds.iter().map(|p| p.bands[&method].clone()).collect();
        for (i, band) in pis.iter().enumerate() {
            bands.push(RowBand::new(
                i,
                &method.to_string(),
                points[i],
                band,
                truth.as_ref().map(|t| t[i]),
            ));
        }
        let coverage = truth
            .as_ref()
            .map(|t| evaluate(&pis, &points, t, None).map(|r| r.coverage))
            .transpose()?;
        let mean_pi_length =
            pis.iter().map(PiBand::total_len).sum::<f64>() / pis.len().max(1) as f64;
        methods.push(MethodSummary {
            method: method.to_string(),
            label: method.label().to_string(),
            alpha_w: model.alpha_working(method),
            mean_pi_length,
            coverage,
        });
    }
    let (mae, rmse) = match &truth {
        Some(t) => {
            let n = t.len() as f64;
            let mae = points.iter().zip(t).map(|(&p, &y)| (p - y).abs()).sum::<f64>() / n;
            let rmse =
                (points.iter().zip(t).map(|(&p, &y)| (p - y) * (p - y)).sum::<f64>() / n).sqrt();
            (Some(mae), Some(rmse))
        }
        None => (None, None),
    };

    let report = RfpiReport {
        split_rule: args.split.to_string(),
        alpha: args.alpha,
        calibrated: calibrate,
        n_train: train.n(),
        n_test: test.n(),
        methods,
        mae,
        rmse,
        bands,
    };
    let content = match args.output.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
        OutputFormat::Csv => bands_to_csv(&report.bands),
    };
    emit(&args.output, &content)
}

fn run_piall(args: PiallArgs) -> anyhow::Result<()> {
    let (train, test, has_truth) = load_pair(&args.data)?;
    let truth = truth_of(&test, has_truth);
    let mut methods = Vec::new();
    let mut point_rows = Vec::new();
    let mut bands = Vec::new();

    let score = |points: &[f64], truth: &Option<Vec<f64>>| -> (Option<f64>, Option<f64>) {
        match truth {
            Some(t) => {
                let n = t.len() as f64;
                let mae =
                    points.iter().zip(t).map(|(&p, &y)| (p - y).abs()).sum::<f64>() / n;
                let rmse = (points.iter().zip(t).map(|(&p, &y)| (p - y) * (p - y)).sum::<f64>()
                    / n)
                    .sqrt();
                (Some(mae), Some(rmse))
            }
            None => (None, None),
        }
    };

    // PIBF with its default cv calibration.
    let pibf_cfg = ForestConfig::new(SplitRule::Ls)
        .with_trees(args.trees)
        .with_split_alpha(args.alpha)
        .with_seed(args.seed);
    let pibf = fit_pibf(
        &train,
        &pibf_cfg,
        args.alpha,
        Calibration::Cv { folds: args.folds },
        args.coverage_range,
    )?;
    let preds = pibf.predict_intervals(&test);
    let points: Vec<f64> = preds.iter().map(|p| p.point).collect();
    let pis: Vec<PiBand> = preds.iter().map(|p| PiBand::Single(p.interval)).collect();
    for (i, band) in pis.iter().enumerate() {
        bands.push(RowBand::new(i, "PIBF", points[i], band, truth.as_ref().map(|t| t[i])));
    }
    let coverage = truth
        .as_ref()
        .map(|t| evaluate(&pis, &points, t, None).map(|r| r.coverage))
        .transpose()?;
    methods.push(MethodSummary {
        method: "PIBF".into(),
        label: "PIBF".into(),
        alpha_w: pibf.alpha_working(),
        mean_pi_length: pis.iter().map(PiBand::total_len).sum::<f64>() / pis.len().max(1) as f64,
        coverage,
    });
    let (mae, rmse) = score(&points, &truth);
    if let (Some(mae), Some(rmse)) = (mae, rmse) {
        point_rows.push(PointSummary {
            source: "PIBF".into(),
            mae,
            rmse,
        });
    }

    // The fifteen single-forest variants, one forest per split rule.
    for (idx, rule) in [SplitRule::Ls, SplitRule::L1, SplitRule::Spi].iter().enumerate() {
        let cfg = ForestConfig::new(*rule)
            .with_trees(args.trees)
            .with_split_alpha(args.alpha)
            .with_seed(args.seed.wrapping_add(idx as u64 + 1));
        let model = fit_rfpi(
            &train,
            &cfg,
            args.alpha,
            &PiMethod::ALL,
            true,
            args.coverage_range,
        )?;
        let preds = model.predict_all(&test, train.y())?;
        let points: Vec<f64> = preds.iter().map(|p| p.point).collect();
        for &method in model.pi_methods() {
            let name = format!("{rule}-{method}");
            let pis: Vec<PiBand> = preds.iter().map(|p| p.bands[&method].clone()).collect();
            for (i, band) in pis.iter().enumerate() {
                bands.push(RowBand::new(i, &name, points[i], band, truth.as_ref().map(|t| t[i])));
            }
            let coverage = truth
                .as_ref()
                .map(|t| evaluate(&pis, &points, t, None).map(|r| r.coverage))
                .transpose()?;
            methods.push(MethodSummary {
                method: name.clone(),
                label: name,
                alpha_w: model.alpha_working(method),
                mean_pi_length: pis.iter().map(PiBand::total_len).sum::<f64>()
                    / pis.len().max(1) as f64,
                coverage,
            });
        }
        let (mae, rmse) = score(&points, &truth);
        if let (Some(mae), Some(rmse)) = (mae, rmse) {
            point_rows.push(PointSummary {
                source: format!("{rule} split"),
                mae,
                rmse,
            });
        }
    }

    let report = PiallReport {
        alpha: args.alpha,
        n_train: train.n(),
        n_test: test.n(),
        methods,
        point_predictions: point_rows,
        bands,
    };
    let content = match args.output.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
        OutputFormat::Csv => bands_to_csv(&report.bands),
    };
    emit(&args.output, &content)
}

fn run_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let ds = generate(&SimSpec {
        problem: args.problem,
        n: args.n,
        seed: args.seed,
        noise_sd: args.noise_sd,
    })?;
    ds.write_csv(&args.out, args.delimiter as u8)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn run_benchmark(args: BenchmarkArgs) -> anyhow::Result<()> {
    let cfg = BenchmarkConfig {
        problem: args.problem,
        n_train: args.n_train,
        n_test: args.n_test,
        replications: args.replications,
        alpha: args.alpha,
        trees: args.trees,
        min_node_size: args.min_node,
        seed: args.seed,
        noise_sd: args.noise_sd,
    };

    let mut results = Vec::new();
    let mut alpha_w_cv = Vec::new();
    let mut alpha_w_oob = Vec::new();
    if args.compare_calibrations {
        let cmp =
            simbench::run_pibf_calibration_comparison(&cfg, args.folds, args.coverage_range)?;
        for summary in [cmp.none, cmp.cv, cmp.oob] {
            results.push(to_block(summary, args.timing));
        }
        alpha_w_cv = cmp.alpha_w_cv;
        alpha_w_oob = cmp.alpha_w_oob;
    } else {
        match args.method {
            BenchMethod::Pibf => {
                let calibration = calibration_of(args.calibration, args.folds);
                let summary =
                    simbench::run_pibf_benchmark(&cfg, calibration, args.coverage_range)?;
                results.push(to_block(summary, args.timing));
            }
            BenchMethod::Rfpi => {
                let calibrate = match args.calibration {
                    CalibrationMode::Oob => true,
                    CalibrationMode::None => false,
                    CalibrationMode::Cv => bail!("rfpi benchmark supports oob or none calibration"),
                };
                for &method in &args.pi_methods {
                    let summary = simbench::run_rfpi_benchmark(
                        &cfg,
                        args.split,
                        method,
                        calibrate,
                        args.coverage_range,
                    )?;
                    results.push(to_block(summary, args.timing));
                }
            }
        }
    }

    let report = BenchmarkCliReport {
        problem: args.problem.to_string(),
        n_train: args.n_train,
        n_test: args.n_test,
        replications: args.replications,
        alpha: args.alpha,
        trees: args.trees,
        seed: args.seed,
        results,
        alpha_w_cv,
        alpha_w_oob,
    };
    let content = match args.output.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
        OutputFormat::Csv => bail!("benchmark reports support table or json output"),
    };
    emit(&args.output, &content)
}

fn to_block(summary: simbench::BenchmarkSummary, timing: bool) -> BenchmarkBlock {
    BenchmarkBlock {
        label: summary.label,
        mean_coverage: summary.mean_coverage,
        sd_coverage: summary.sd_coverage,
        mean_pi_length: summary.mean_length,
        mean_mae: summary.mean_mae,
        mean_rmse: summary.mean_rmse,
        wall_time_s: if timing { summary.wall_time_s } else { None },
        coverages: summary.coverages,
        mean_lengths: summary.mean_lengths,
    }
}
