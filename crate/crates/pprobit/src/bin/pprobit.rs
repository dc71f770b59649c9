//! Command-line driver: fit p-probit models, build coresets, estimate the
//! complexity lower bound, generate synthetic data, and run accuracy/timing
//! sweeps.

use clap::{Args, Parser, Subcommand};
use pprobit::data::{
    fold_labels, load_csv, load_libsvm, make_synthetic, scale_features_max_abs, write_coreset_csv,
    write_csv, LabelColumn, LabeledDataset, SyntheticSpec,
};
use pprobit::experiment::{
    records_to_jsonl, run_experiment, summaries_to_csv, summarize, ExperimentPlan,
};
use pprobit::objective::{estimate_mu_lower, FoldedDesignMatrix, Weights};
use pprobit::pipeline::{
    online_coreset_stream, two_pass_coreset, uniform_coreset_stream, PipelineOptions,
    ReductionMethod,
};
use pprobit::sampling::l2_leverage_coreset;
use pprobit::solver::{fit, Method, SolverConfig};
use pprobit::stream::{FileFormat, FileRowSource};
use pprobit::{Error, ShapeP};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pprobit",
    about = "p-generalized probit regression with coreset-accelerated fitting",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Input format.
    #[arg(long, default_value = "csv", value_parser = ["csv", "libsvm"])]
    format: String,
    /// CSV: the file starts with a header line.
    #[arg(long)]
    csv_header: bool,
    /// CSV: label column index (0-based); the last column when omitted.
    #[arg(long)]
    label_col: Option<usize>,
    /// Prepend an intercept column before folding.
    #[arg(long)]
    intercept: bool,
    /// Scale every feature column to unit max-abs before folding.
    #[arg(long)]
    scale_features: bool,
}

impl DataArgs {
    fn label_column(&self) -> LabelColumn {
        match self.label_col {
            Some(i) => LabelColumn::Index(i),
            None => LabelColumn::Last,
        }
    }

    fn load(&self) -> Result<LabeledDataset, Error> {
        let mut ds = match self.format.as_str() {
            "csv" => load_csv(&self.data, self.label_column(), self.csv_header)?,
            "libsvm" => load_libsvm(&self.data)?,
            other => return Err(Error::invalid(format!("unknown format {other}"))),
        };
        if self.scale_features {
            scale_features_max_abs(&mut ds);
        }
        Ok(ds)
    }

    fn load_folded(&self) -> Result<FoldedDesignMatrix, Error> {
        fold_labels(&self.load()?, self.intercept)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model on the full dataset by damped Newton-Raphson.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Shape parameter of the link (p >= 1).
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Solve by gradient descent instead of Newton.
        #[arg(long)]
        gradient_descent: bool,
        /// Write the fit result as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a weighted coreset and write it as CSV plus a JSON sidecar.
    Coreset {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Reduction method.
        #[arg(long, default_value = "pprobit",
              value_parser = ["pprobit", "uniform", "l2", "sqrt-l2", "online-l2"])]
        method: String,
        /// Coreset size.
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Round sampling scores to powers of two (costs one extra pass).
        #[arg(long)]
        rounding: bool,
        /// Output CSV path (sidecar written next to it as <out>.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep (p, method, k, trial) and emit approximation ratios + timings.
    Experiment {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated p values.
        #[arg(long, default_value = "1,1.5,2,3,5")]
        p_list: String,
        /// Comma-separated methods.
        #[arg(long, default_value = "pprobit,uniform")]
        methods: String,
        /// Comma-separated coreset sizes; default geometric 5d..n/10.
        #[arg(long)]
        k_grid: Option<String>,
        #[arg(long, default_value_t = 21)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        rounding: bool,
        /// JSON-lines output path (summary CSV written as <out>.summary.csv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Lower-bound the complexity parameter by sampling directions.
    Mu {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Random directions tried beyond the 2d signed axes.
        #[arg(long, default_value_t = 1000)]
        directions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic two-cluster dataset with planted outliers.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        outlier_fraction: f64,
        #[arg(long, default_value_t = 6.0)]
        outlier_scale: f64,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        /// Output CSV path (label last).
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number {tok:?}")))
        })
        .collect()
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, Error> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad count {tok:?}")))
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_fit(
    data: &DataArgs,
    p_value: f64,
    gradient_descent: bool,
    out: Option<&Path>,
) -> Result<(), Error> {
    let p = ShapeP::new(p_value)?;
    let x = data.load_folded()?;
    let method = if gradient_descent {
        Method::GradientDescent
    } else {
        Method::Newton
    };
    let config = SolverConfig::for_problem(x.n(), method);
    let result = fit(&x, Weights::Uniform, &p, &config, None)?;
    println!(
        "n={} d={} p={}: loss {:.6} after {} iterations (converged: {}, |grad| {:.3e})",
        x.n(),
        x.dim(),
        p_value,
        result.final_loss,
        result.iterations,
        result.converged,
        result.gradient_norm
    );
    if result.mle_may_not_exist {
        println!("warning: data looks separable; the MLE may not exist");
    }
    println!("beta_hat: {:?}", result.beta_hat);
    let report = json!({
        "n": x.n(),
        "d": x.dim(),
        "p": p_value,
        "intercept": data.intercept,
        "scale_features": data.scale_features,
        "config": config,
        "result": result,
    });
    if let Some(path) = out {
        write_text(path, &serde_json::to_string_pretty(&report).unwrap())?;
    }
    if !result.converged {
        return Err(Error::numeric("solver did not converge".to_string()));
    }
    Ok(())
}

fn cmd_coreset(
    data: &DataArgs,
    p_value: f64,
    method: &str,
    k: usize,
    seed: u64,
    rounding: bool,
    out: &Path,
) -> Result<(), Error> {
    let p = ShapeP::new(p_value)?;
    let method = ReductionMethod::parse(method)?;
    if method == ReductionMethod::OnlineL2 && p_value != 2.0 {
        return Err(Error::invalid("online-l2 requires --p 2"));
    }
    let options = PipelineOptions {
        seed,
        rounding,
        allow_jl: true,
    };
    let format = match data.format.as_str() {
        "csv" => FileFormat::Csv {
            label: data.label_column(),
            header: data.csv_header,
        },
        "libsvm" => FileFormat::Libsvm,
        other => return Err(Error::invalid(format!("unknown format {other}"))),
    };

    // Streaming paths read the file pass by pass; l2 baselines, scaled
    // features, and libsvm input (whose width needs a scan) use memory.
    let in_memory = matches!(method, ReductionMethod::L2 | ReductionMethod::SqrtL2)
        || data.scale_features
        || matches!(format, FileFormat::Libsvm);
    let (coreset, report) = if in_memory {
        let x = data.load_folded()?;
        let k = clamp_k(k, x.n());
        match method {
            ReductionMethod::L2 => (l2_leverage_coreset(&x, k, seed, false)?, None),
            ReductionMethod::SqrtL2 => (l2_leverage_coreset(&x, k, seed, true)?, None),
            _ => {
                let mut src = pprobit::stream::MatrixSource::new(&x);
                let (c, r) = match method {
                    ReductionMethod::Pprobit => two_pass_coreset(&mut src, &p, k, &options)?,
                    ReductionMethod::Uniform => {
                        uniform_coreset_stream(&mut src, &p, k, &options)?
                    }
                    ReductionMethod::OnlineL2 => {
                        online_coreset_stream(&mut src, &p, k, &options)?
                    }
                    _ => unreachable!(),
                };
                (c, Some(r))
            }
        }
    } else {
        let mut src = FileRowSource::new(&data.data, format, data.intercept);
        let (c, r) = match method {
            ReductionMethod::Pprobit => {
                if p_value > 2.0 {
                    // Bucket sizing for p > 2 needs n up front: one
                    // metadata pass before the two algorithm passes.
                    src.scan_metadata()?;
                }
                two_pass_coreset(&mut src, &p, k, &options)?
            }
            ReductionMethod::Uniform => uniform_coreset_stream(&mut src, &p, k, &options)?,
            ReductionMethod::OnlineL2 => online_coreset_stream(&mut src, &p, k, &options)?,
            _ => unreachable!(),
        };
        if k > r.n {
            eprintln!("warning: k={k} exceeds n={}; duplicate rows are expected", r.n);
        }
        (c, Some(r))
    };

    write_coreset_csv(&coreset, out)?;
    let sidecar_path = out.with_extension("json");
    let sidecar = match report {
        Some(r) => serde_json::to_value(&r).unwrap(),
        None => json!({
            "method": coreset.method_tag,
            "k": coreset.k(),
            "seed": seed,
            "p": p_value,
        }),
    };
    write_text(&sidecar_path, &serde_json::to_string_pretty(&sidecar).unwrap())?;
    println!(
        "wrote {} rows ({}) to {} (sidecar {})",
        coreset.k(),
        coreset.method_tag,
        out.display(),
        sidecar_path.display()
    );
    Ok(())
}

fn clamp_k(k: usize, n: usize) -> usize {
    if k > n {
        eprintln!("warning: k={k} exceeds n={n}; clamped to {n}");
        n
    } else {
        k
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    data: &DataArgs,
    p_list: &str,
    methods: &str,
    k_grid: Option<&str>,
    trials: usize,
    seed: u64,
    rounding: bool,
    out: &Path,
) -> Result<(), Error> {
    let x = data.load_folded()?;
    let p_values = parse_f64_list(p_list)?;
    let methods = methods
        .split(',')
        .map(|tok| ReductionMethod::parse(tok.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let k_grid = match k_grid {
        Some(s) => parse_usize_list(s)?,
        None => pprobit::experiment::geometric_grid(5 * x.dim(), x.n() / 10, 6),
    };
    let plan = ExperimentPlan {
        dataset: data.data.display().to_string(),
        p_values,
        methods,
        k_grid,
        trials,
        master_seed: seed,
        rounding,
    };
    let records = run_experiment(&x, &plan)?;
    write_text(out, &records_to_jsonl(&records)?)?;
    let summary = summarize(&records);
    let summary_path = out.with_extension("summary.csv");
    write_text(&summary_path, &summaries_to_csv(&summary))?;
    println!(
        "{} records -> {} (summary {})",
        records.len(),
        out.display(),
        summary_path.display()
    );
    for row in &summary {
        println!(
            "p={} method={} k={}: median ratio {:.4} (nIQR {:.4})",
            row.p, row.method, row.k, row.median_ratio, row.normalized_iqr
        );
    }
    Ok(())
}

fn cmd_mu(data: &DataArgs, p_value: f64, directions: usize, seed: u64) -> Result<(), Error> {
    let p = ShapeP::new(p_value)?;
    let x = data.load_folded()?;
    let estimate = estimate_mu_lower(&x, &p, directions, seed)?;
    if estimate.mu_lower.is_infinite() {
        let dir = estimate.unbounded_direction.as_ref().unwrap();
        println!("mu lower bound: unbounded along direction {dir:?}");
    } else {
        println!(
            "mu lower bound: {:.6} ({} directions tried, seed {})",
            estimate.mu_lower, estimate.directions_tried, estimate.seed
        );
    }
    Ok(())
}

fn cmd_synth(
    n: usize,
    d: usize,
    seed: u64,
    outlier_fraction: f64,
    outlier_scale: f64,
    separation: f64,
    out: &Path,
) -> Result<(), Error> {
    let spec = SyntheticSpec {
        n,
        d,
        seed,
        outlier_fraction,
        outlier_scale,
        target_separation: separation,
    };
    let ds = make_synthetic(&spec)?;
    write_csv(&ds, out)?;
    println!(
        "wrote {} rows x {} features to {}",
        ds.n(),
        ds.dim(),
        out.display()
    );
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit {
            data,
            p,
            gradient_descent,
            out,
        } => cmd_fit(data, *p, *gradient_descent, out.as_deref()),
        Command::Coreset {
            data,
            p,
            method,
            k,
            seed,
            rounding,
            out,
        } => cmd_coreset(data, *p, method, *k, *seed, *rounding, out),
        Command::Experiment {
            data,
            p_list,
            methods,
            k_grid,
            trials,
            seed,
            rounding,
            out,
        } => cmd_experiment(
            data,
            p_list,
            methods,
            k_grid.as_deref(),
            *trials,
            *seed,
            *rounding,
            out,
        ),
        Command::Mu {
            data,
            p,
            directions,
            seed,
        } => cmd_mu(data, *p, *directions, *seed),
        Command::Synth {
            n,
            d,
            seed,
            outlier_fraction,
            outlier_scale,
            separation,
            out,
        } => cmd_synth(
            *n,
            *d,
            *seed,
            *outlier_fraction,
            *outlier_scale,
            *separation,
            out,
        ),
    }
}

fn main() -> ExitCode {
    // PPROBIT_THREADS caps the worker pool; unset leaves rayon's default.
    if let Ok(threads) = std::env::var("PPROBIT_THREADS") {
        if let Ok(count) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(count.max(1))
                .build_global();
        }
    }
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                // Usage and I/O problems exit 2; numeric failures exit 1.
                Error::Io(_) | Error::Parse { .. } | Error::InvalidArgument(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
