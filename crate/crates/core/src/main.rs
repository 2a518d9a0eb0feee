use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ssimpute::dataset::{Dataset, Record};
use ssimpute::experiment::{self, ExperimentConfig};
use ssimpute::identify::{self, FitOptions, PredictorModel};
use ssimpute::imputer;
use ssimpute::kernels::{self, KernelSpec};
use ssimpute::{Error, Result};

#[derive(Parser)]
#[command(name = "ssimpute", version, about = "Stable spline imputation and predictor identification")]
struct Cli {
    /// Master seed (overrides `master_seed` from the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with ExperimentConfig fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Complete training record used to score imputations.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a system and write train.csv (masked), truth.csv, test.csv and model.csv.
    Simulate,
    /// Impute the missing outputs of a training CSV.
    Impute { train: PathBuf },
    /// Fit the predictor on a complete (possibly imputed) training CSV.
    Identify {
        train: PathBuf,
        /// Held-out record; writes cod_k.csv when given.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Run the Monte Carlo study and write runs.csv and aggregate.csv.
    Experiment,
    /// Tabulate a kernel on a grid.
    Kernel(KernelArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    Ss,
    RbfCt,
    RbfDt,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(value_enum)]
    kind: KernelKind,
    #[arg(long, default_value_t = 2)]
    q: u32,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Enrichment coefficients (rbf-dt only).
    #[arg(long, requires = "varphi")]
    phi: Option<f64>,
    #[arg(long, requires = "phi")]
    varphi: Option<f64>,
    /// Comma-separated arguments; `ss` pairs them with `--t` or, without it, evaluates at s = t.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    grid: Vec<f64>,
    /// Second argument grid for `ss` (Cartesian product with `--grid`).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    t: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ImputeReport {
    q: u32,
    beta: f64,
    lambda: f64,
    phi: Option<f64>,
    varphi: Option<f64>,
    #[serde(rename = "J")]
    j: f64,
    n_observed: usize,
    n_missing: usize,
    condition_estimate: f64,
    cod_miss: Option<f64>,
}

#[derive(Serialize)]
struct IdentifyReport {
    q: u32,
    beta: f64,
    lambda: f64,
    phi: Option<f64>,
    varphi: Option<f64>,
    noise_variance: f64,
    #[serde(rename = "J")]
    j: f64,
    evaluations: usize,
    n_rows: usize,
    n_imputed: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_toml(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    match &cli.command {
        Command::Kernel(args) => return kernel(args, std::io::stdout().lock()),
        _ => fs::create_dir_all(&cli.out_dir)?,
    }
    match &cli.command {
        Command::Simulate => simulate(&config, &cli.out_dir),
        Command::Impute { train } => impute(&config, train, cli.truth.as_deref(), &cli.out_dir),
        Command::Identify { train, test } => identify(&config, train, test.as_deref(), &cli.out_dir),
        Command::Experiment => run_experiment(&config, &cli.out_dir),
        Command::Kernel(_) => unreachable!(),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_csv(BufReader::new(File::open(path)?))
}

fn simulate(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let sim = experiment::simulate_run(config, config.run_seed(0))?;
    let test = sim.full.test.as_ref().ok_or_else(|| Error::Data("simulation produced no test record".into()))?;
    sim.masked.write_csv(create(out, "train.csv")?)?;
    sim.full.write_csv(create(out, "truth.csv")?)?;
    test.write_csv(create(out, "test.csv")?)?;
    experiment::write_model_csv(&sim.model, create(out, "model.csv")?)?;
    println!(
        "order {} | {} training rows ({} missing) | {} test rows",
        sim.model.order(),
        sim.masked.len(),
        sim.masked.missing_count(),
        test.len()
    );
    Ok(())
}

fn impute(config: &ExperimentConfig, train: &Path, truth: Option<&Path>, out: &Path) -> Result<()> {
    let ds = read_dataset(train)?;
    let mut template = KernelSpec::new(2, 0.5)?.truncated(config.truncation_len)?;
    if config.impute_enriched {
        template = template.enriched(0.0, 0.0)?;
    }
    let result = imputer::stable_spline_imputation(&ds, &template, &config.search)?;
    let completed = result.complete(&ds);
    // observed rows are known exactly
    let mut std = vec![0.0; ds.len()];
    for e in &result.estimates {
        if let Some(i) = ds.index_of(e.time) {
            std[i] = e.variance.max(0.0).sqrt();
        }
    }
    completed.write_csv_with_std(create(out, "completed.csv")?, Some(&std))?;

    let cod_miss = match truth {
        Some(path) => Some(score_imputation(&ds, &result.estimates, &read_dataset(path)?)?),
        None => None,
    };
    let hp = &result.fitted;
    let report = ImputeReport {
        q: hp.order.q(),
        beta: hp.beta,
        lambda: hp.lambda,
        phi: hp.enrichment.map(|e| e.phi()),
        varphi: hp.enrichment.map(|e| e.varphi()),
        j: result.log_objective,
        n_observed: ds.observed_count(),
        n_missing: ds.missing_count(),
        condition_estimate: result.condition_estimate,
        cod_miss,
    };
    write_json(out, "fit.json", &report)?;
    if let Some(c) = cod_miss {
        println!("COD_miss {c:.6}");
    }
    Ok(())
}

fn score_imputation(ds: &Dataset, estimates: &[imputer::Estimate], truth: &Dataset) -> Result<f64> {
    let mut t = Vec::with_capacity(estimates.len());
    for e in estimates {
        let y = truth
            .index_of(e.time)
            .and_then(|i| truth.outputs[i])
            .ok_or_else(|| Error::Data(format!("truth file lacks an output at t = {}", e.time)))?;
        t.push(y);
    }
    if ds.missing_count() == 0 {
        return Err(Error::Data("no missing outputs to score".into()));
    }
    let est: Vec<f64> = estimates.iter().map(|e| e.mean).collect();
    identify::cod_miss(&t, &est)
}

fn identify(config: &ExperimentConfig, train: &Path, test: Option<&Path>, out: &Path) -> Result<()> {
    let ds = read_dataset(train)?;
    let template = KernelSpec::new(2, 0.5)?.truncated(config.predictor_len)?.enriched(0.0, 0.0)?;
    let options = FitOptions { imputed_row_weight: config.imputed_row_weight };
    let fit = identify::fit_predictor(&ds, &template, &config.predictor_search, &options)?;
    fit.model.write_csv(create(out, "predictor.csv")?)?;
    write_json(out, "identify.json", &identify_report(&fit.model, fit.j, fit.evaluations, &ds))?;
    if let Some(path) = test {
        let test = Record::read_csv(BufReader::new(File::open(path)?))?;
        write_cod_curve(&fit.model, &ds, &test, config.k_max, out)?;
    }
    Ok(())
}

fn identify_report(model: &PredictorModel, j: f64, evaluations: usize, ds: &Dataset) -> IdentifyReport {
    let hp = &model.hyperparameters;
    IdentifyReport {
        q: hp.order.q(),
        beta: hp.beta,
        lambda: hp.lambda,
        phi: hp.enrichment.map(|e| e.phi()),
        varphi: hp.enrichment.map(|e| e.varphi()),
        noise_variance: model.noise_variance,
        j,
        evaluations,
        n_rows: ds.len(),
        n_imputed: ds.imputed.iter().filter(|&&b| b).count(),
    }
}

/// Predicts the test record with the training record as its past and writes `k,cod`.
fn write_cod_curve(model: &PredictorModel, train: &Dataset, test: &Record, k_max: usize, out: &Path) -> Result<()> {
    let mut record = train.to_record()?;
    if test.times.first() != Some(&(record.times.last().copied().unwrap_or(-1) + 1)) {
        // not a continuation: score the test record on its own
        record = Record { times: Vec::new(), inputs: vec![Vec::new(); test.num_inputs()], outputs: Vec::new() };
    }
    record.times.extend(&test.times);
    for (u, v) in record.inputs.iter_mut().zip(&test.inputs) {
        u.extend(v);
    }
    record.outputs.extend(&test.outputs);
    let preds = identify::kstep_predict_all(model, &record, k_max)?;
    let mut w = create(out, "cod_k.csv")?;
    writeln!(w, "k,cod")?;
    for (k, p) in preds.iter().enumerate() {
        let cod = identify::cod_k(&test.outputs, &p[p.len() - test.len()..])?;
        writeln!(w, "{},{}", k + 1, cod)?;
    }
    w.flush()?;
    Ok(())
}

fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let report = experiment::run_experiment(config)?;
    let mut w = create(out, "runs.csv")?;
    report.write_runs_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "aggregate.csv")?;
    report.write_aggregate_csv(&mut w)?;
    w.flush()?;
    println!("{} runs, {} failed", config.runs, report.failures());
    report.check_failures()
}

fn kernel<W: Write>(args: &KernelArgs, mut out: W) -> Result<()> {
    let mut spec = KernelSpec::new(args.q, args.beta)?;
    if let (Some(phi), Some(varphi)) = (args.phi, args.varphi) {
        if !matches!(args.kind, KernelKind::RbfDt) {
            return Err(Error::Config("enrichment applies to rbf-dt only".into()));
        }
        spec = spec.enriched(phi, varphi)?;
    }
    match args.kind {
        KernelKind::Ss => {
            writeln!(out, "s,t,value")?;
            match &args.t {
                Some(ts) => {
                    for &s in &args.grid {
                        for &t in ts {
                            writeln!(out, "{s},{t},{}", kernels::stable_spline_k(s, t, &spec)?)?;
                        }
                    }
                }
                None => {
                    for &s in &args.grid {
                        writeln!(out, "{s},{s},{}", kernels::stable_spline_k(s, s, &spec)?)?;
                    }
                }
            }
        }
        KernelKind::RbfCt => {
            writeln!(out, "x,value")?;
            for &x in &args.grid {
                writeln!(out, "{x},{}", kernels::rbf_h_continuous(x, &spec)?)?;
            }
        }
        KernelKind::RbfDt => {
            writeln!(out, "x,value")?;
            for &x in &args.grid {
                if x.fract() != 0.0 || !x.is_finite() {
                    return Err(Error::Domain(format!("discrete lags must be integers, got {x}")));
                }
                writeln!(out, "{},{}", x as i64, kernels::rbf_h_discrete(x as i64, &spec))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
