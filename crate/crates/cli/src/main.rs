//! `aot`: generate tasks, train amortized predictors, predict and evaluate
//! transport plans, run sweeps.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use aot_core::amortize::{oa_fit, predict_plan, ra_fit_with_truth, AmortizedModel, TrainingSet};
use aot_core::error::ErrorKind;
use aot_core::eval::{
    bench_sweep, evaluate, evaluate_with_truth, interpolate, sample_coupling, truth_plans, EvalReport,
    Method, Predictor, DEFAULT_MASS_FLOOR,
};
use aot_core::io;
use aot_core::measures::CostFamily;
use aot_core::slicing::{sample_projections, ProjectionSet};
use aot_core::tasks::{generate, generate_split, load_measures};
use aot_core::{AotError, Result};

use config::{parse_list, parse_methods, RunConfig};

#[derive(Parser)]
#[command(name = "aot", version, about = "Amortized entropic optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainMethod {
    Ra,
    Oa,
}

#[derive(Subcommand)]
enum Command {
    /// Write every pair of a task as AOTM files.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write CSV copies of each measure.
        #[arg(long)]
        csv: bool,
    },
    /// Fit an amortized model on the training split.
    Train {
        #[arg(long, value_enum)]
        method: TrainMethod,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "L")]
        l: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Seeds both the projection sample and mini-batch shuffling.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the plan between two measures with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Score a method on the test split against converged Sinkhorn.
    Eval {
        #[arg(long)]
        method: String,
        /// Trained model; RA and OA are trained on the spot when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Sweep projection counts, training sizes and methods.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "L")]
        l_values: Option<String>,
        #[arg(long = "M")]
        m_values: Option<String>,
        #[arg(long)]
        methods: Option<String>,
        /// CSV table; a JSON copy with per-pair records is written alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Displacement interpolation of a plan at time t.
    Interpolate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "sqeuclidean")]
        cost: String,
        #[arg(long, default_value_t = DEFAULT_MASS_FLOOR)]
        mass_floor: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw index pairs from a plan.
    Sample {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| AotError::Malformed(e.to_string()))
}

fn projections(cfg: &RunConfig, train: &TrainingSet) -> Result<ProjectionSet> {
    let dim = train.pairs.first().ok_or(AotError::EmptyMeasure)?.0.dim();
    sample_projections(cfg.projection, cfg.l, dim, cfg.projection_seed)
}

fn train_model(cfg: &RunConfig, method: TrainMethod, train: &TrainingSet) -> Result<AmortizedModel> {
    let pset = projections(cfg, train)?;
    match method {
        TrainMethod::Ra => {
            let start = Instant::now();
            let truth: Vec<_> = truth_plans(train, &cfg.sinkhorn)?
                .into_iter()
                .map(|r| r.map(|r| r.potentials))
                .collect();
            let mut model = ra_fit_with_truth(train, &truth, &pset, cfg.ridge_lambda)?;
            model.train_meta.wall_seconds = start.elapsed().as_secs_f64();
            Ok(model)
        }
        TrainMethod::Oa => oa_fit(train, &pset, &cfg.oa),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { spec, out, csv } => {
            let cfg = RunConfig::load(&spec)?;
            let set = generate(&cfg.spec)?;
            fs::create_dir_all(&out)?;
            for (k, (mu, nu)) in set.pairs.iter().enumerate() {
                for (side, m) in [("mu", mu), ("nu", nu)] {
                    io::write_measure(&out.join(format!("pair_{k:05}_{side}.aotm")), m)?;
                    if csv {
                        let mut w = create(&out.join(format!("pair_{k:05}_{side}.csv")))?;
                        io::measure_to_csv(&mut w, m)?;
                        w.flush()?;
                    }
                }
            }
            write_text(&out.join("spec.json"), &to_json(&cfg.spec)?)?;
            log::info!("wrote {} pairs to {}", set.len(), out.display());
        }
        Command::Train { method, spec, l, lambda, lr, iters, batch, seed, out } => {
            let mut cfg = RunConfig::load(&spec)?;
            cfg.l = l.unwrap_or(cfg.l);
            cfg.ridge_lambda = lambda.unwrap_or(cfg.ridge_lambda);
            cfg.oa.lr = lr.unwrap_or(cfg.oa.lr);
            cfg.oa.iters = iters.unwrap_or(cfg.oa.iters);
            cfg.oa.batch = batch.or(cfg.oa.batch);
            if let Some(s) = seed {
                cfg.projection_seed = s;
                cfg.oa.seed = s;
            }
            cfg.check()?;
            let (train, _) = generate_split(&cfg.spec, cfg.split_ratio)?;
            let model = train_model(&cfg, method, &train)?;
            io::write_model(&out, &model)?;
            log::info!(
                "trained on {} pairs ({} skipped) in {:.2}s",
                model.train_meta.pairs_used,
                model.train_meta.pairs_skipped,
                model.train_meta.wall_seconds
            );
        }
        Command::Predict { model, mu, nu, out, csv, pgm } => {
            let model = io::read_model(&model)?;
            let (mu, nu) = load_measures(&mu, &nu, model.cost)?;
            let plan = predict_plan(&model, &mu, &nu)?;
            io::write_plan(&out, &plan)?;
            if let Some(path) = csv {
                let mut w = create(&path)?;
                io::plan_to_csv(&mut w, &plan)?;
                w.flush()?;
            }
            if let Some(path) = pgm {
                let mut w = create(&path)?;
                io::plan_to_pgm(&mut w, &plan)?;
                w.flush()?;
            }
        }
        Command::Eval { method, model, spec, report } => {
            let cfg = RunConfig::load(&spec)?;
            let method =
                Method::parse(&method).ok_or_else(|| AotError::InvalidConfig(format!("unknown method {method:?}")))?;
            let (train, test) = generate_split(&cfg.spec, cfg.split_ratio)?;
            let mut out: EvalReport = match (method, model) {
                (Method::Ra | Method::Oa, Some(path)) => {
                    let model = io::read_model(&path)?;
                    if model.cost != cfg.spec.cost {
                        return Err(AotError::InvalidConfig("model cost differs from the task cost".into()));
                    }
                    evaluate(&Predictor::Amortized(&model), &test, &cfg.sinkhorn)?
                }
                (Method::Ra | Method::Oa, None) => {
                    let which = if method == Method::Ra { TrainMethod::Ra } else { TrainMethod::Oa };
                    let model = train_model(&cfg, which, &train)?;
                    let truth: Vec<_> =
                        truth_plans(&test, &cfg.sinkhorn)?.into_iter().map(|r| r.map(|r| r.plan)).collect();
                    evaluate_with_truth(&Predictor::Amortized(&model), &test, &truth, model.train_meta.wall_seconds)?
                }
                (Method::MinSwgg, _) => {
                    let pset = projections(&cfg, &train)?;
                    evaluate(&Predictor::MinSwgg { pset: &pset, cost: cfg.spec.cost }, &test, &cfg.sinkhorn)?
                }
                (Method::Sinkhorn, _) => evaluate(&Predictor::Sinkhorn(cfg.sinkhorn), &test, &cfg.sinkhorn)?,
            };
            out.spec = Some(cfg.spec.clone());
            write_text(&report, &to_json(&out)?)?;
            println!("{} rmse {:e} +- {:e} over {} pairs", out.method, out.rmse_mean, out.rmse_std, out.records.len());
        }
        Command::Bench { spec, l_values, m_values, methods, out } => {
            let mut cfg = RunConfig::load(&spec)?;
            if let Some(v) = l_values {
                cfg.l_values = parse_list("L", &v)?;
            }
            if let Some(v) = m_values {
                cfg.m_values = parse_list("M", &v)?;
            }
            if let Some(v) = methods {
                cfg.methods = parse_methods(&v)?;
            }
            cfg.check()?;
            let table = bench_sweep(&cfg.spec, &cfg.l_values, &cfg.m_values, &cfg.methods, &cfg.bench_config())?;
            write_text(&out, &table.to_csv())?;
            write_text(&out.with_extension("json"), &table.to_json()?)?;
        }
        Command::Interpolate { plan, mu, nu, t, cost, mass_floor, out, csv } => {
            let cost = CostFamily::parse(&cost).ok_or_else(|| AotError::InvalidConfig(format!("unknown cost {cost:?}")))?;
            let plan = io::read_plan(&plan)?;
            let (mu, nu) = load_measures(&mu, &nu, cost)?;
            let m = interpolate(&plan, &mu, &nu, cost, t, mass_floor)?;
            io::write_measure(&out, &m)?;
            if let Some(path) = csv {
                let mut w = create(&path)?;
                io::measure_to_csv(&mut w, &m)?;
                w.flush()?;
            }
        }
        Command::Sample { plan, k, seed, out } => {
            let plan = io::read_plan(&plan)?;
            let draws = sample_coupling(&plan, k, seed)?;
            let mut w = create(&out)?;
            writeln!(w, "row,col")?;
            for (i, j) in draws {
                writeln!(w, "{i},{j}")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("AOT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("AOT_THREADS ignored: {e}");
                }
            }
            _ => {
                eprintln!("error: AOT_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
