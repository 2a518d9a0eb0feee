//! Monte Carlo driver: generate a random system, simulate, hide outputs,
//! impute, fit predictors, and score them on a held-out test record.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::armax::{self, ArmaxModel};
use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::identify::{self, FitOptions, PredictorModel};
use crate::imputer::{self, Hyperparameters, SearchConfig};
use crate::kernels::{KernelSpec, DEFAULT_TRUNCATION};

/// Input signal family and pole structure of the generated systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    White,
    Lowpass,
    Resonant,
}

/// Accepted range of `sum_l ||f_l|| / ||f_p||` for generated systems.
pub const NORM_RATIO_RANGE: (f64, f64) = (1.0, 5.0);
/// Resonator pole modulus of the resonant variant.
pub const RESONATOR_MODULUS: f64 = 0.999;
/// Largest tolerated fraction of failed runs.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub num_inputs: usize,
    pub order_range: [usize; 2],
    pub pole_radius: f64,
    pub missing_prob: f64,
    pub variant: Variant,
    pub k_max: usize,
    pub master_seed: u64,
    pub burn_in: usize,
    /// Include the enrichment poles in the imputation kernel.
    pub impute_enriched: bool,
    /// Impulse-response support of the imputation kernel.
    pub truncation_len: usize,
    /// Predictor coefficients per channel.
    pub predictor_len: usize,
    pub imputed_row_weight: f64,
    pub search: SearchConfig,
    pub predictor_search: SearchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            runs: 30,
            train_n: 300,
            test_n: 1000,
            num_inputs: 3,
            order_range: [1, 30],
            pole_radius: 0.95,
            missing_prob: 0.25,
            variant: Variant::White,
            k_max: 20,
            master_seed: 0,
            burn_in: armax::DEFAULT_BURN_IN,
            impute_enriched: true,
            truncation_len: DEFAULT_TRUNCATION,
            predictor_len: identify::DEFAULT_PREDICTOR_LEN,
            imputed_row_weight: 1.0,
            search: experiment_search(),
            predictor_search: SearchConfig::predictor_default(),
        }
    }
}

/// Imputation search used by the driver: coarser than [`SearchConfig::default`],
/// which it matches on typical runs at a quarter of the cost.
pub fn experiment_search() -> SearchConfig {
    SearchConfig { beta_points: 12, enrichment_points: 5, max_evals: 150, ..SearchConfig::default() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.runs == 0 || self.train_n == 0 || self.test_n == 0 || self.k_max == 0 {
            return bad("runs, train_n, test_n and k_max must be positive");
        }
        if self.order_range[0] == 0 || self.order_range[0] > self.order_range[1] {
            return bad("order_range must be [lo, hi] with 1 <= lo <= hi");
        }
        if !(self.pole_radius > 0.0 && self.pole_radius < 1.0) {
            return bad("pole_radius must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.missing_prob) {
            return bad("missing_prob must lie in [0, 1)");
        }
        if self.variant == Variant::Resonant && self.pole_radius != RESONATOR_MODULUS {
            return bad("the resonant variant requires pole_radius = 0.999");
        }
        if self.truncation_len == 0 || self.predictor_len == 0 {
            return bad("truncation lengths must be positive");
        }
        if !(self.imputed_row_weight >= 0.0) {
            return bad("imputed_row_weight must be non-negative");
        }
        self.search.validate()?;
        self.predictor_search.validate()
    }

    /// Seed of run `index`.
    pub fn run_seed(&self, index: usize) -> u64 {
        splitmix64(self.master_seed ^ index as u64)
    }
}

/// SplitMix64 finalizer; a bijective 64-bit mix.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Estimators compared on every run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    /// Stable spline imputation, then the predictor fitted on the completed record.
    ImputedSs,
    /// Predictor fitted on the record without missing samples.
    FullSs,
    /// Predictor of the true system.
    Oracle,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::ImputedSs, Estimator::FullSs, Estimator::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::ImputedSs => "ss-imputation+ss",
            Estimator::FullSs => "ss-full",
            Estimator::Oracle => "true-model-oracle",
        }
    }
}

/// One row per (run, estimator).
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run_index: usize,
    pub seed: u64,
    pub model_order: usize,
    pub estimator: Estimator,
    /// Imputation quality (imputing estimator only).
    pub cod_miss: Option<f64>,
    /// COD of filling the gaps with the observed mean (imputing estimator only).
    pub cod_miss_mean: Option<f64>,
    /// `cod_k[k-1]` for horizons `1..=k_max`.
    pub cod_k: Vec<f64>,
    pub hyperparameters: Option<Hyperparameters>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed(Vec<RunReport>),
    Failed { run_index: usize, seed: u64, message: String, numerical: bool },
}

/// A single simulated run before any estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub model: ArmaxModel,
    /// Samples preceding the training record, back to the zero initial state.
    pub prehistory: Record,
    /// Complete training record with its test continuation.
    pub full: Dataset,
    /// Training record with missing outputs.
    pub masked: Dataset,
}

/// Independent sub-streams of a run seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Generates the system and data of one run.
pub fn simulate_run(config: &ExperimentConfig, seed: u64) -> Result<SimulatedRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0));
    let order = rng.gen_range(config.order_range[0]..=config.order_range[1]);
    let mut model =
        armax::random_armax(order, config.num_inputs, config.pole_radius, NORM_RATIO_RANGE, sub_seed(seed, 1))?;
    if config.variant == Variant::Resonant {
        let a = rng.gen_range(-1.0..=1.0);
        model = armax::add_resonance(&model, RESONATOR_MODULUS, a)?;
    }
    let total = config.burn_in + config.train_n + config.test_n;
    let mut input_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2));
    let inputs: Vec<Vec<f64>> = (0..config.num_inputs)
        .map(|_| {
            let white: Vec<f64> = (0..total).map(|_| StandardNormal.sample(&mut input_rng)).collect();
            match config.variant {
                Variant::Lowpass => {
                    let den = armax::random_stable_polynomial(2, config.pole_radius, &mut input_rng);
                    let num = [0.0, StandardNormal.sample(&mut input_rng), StandardNormal.sample(&mut input_rng)];
                    armax::filter(&num, &den, &white)
                }
                _ => white,
            }
        })
        .collect();
    // simulate from zero state and split off the burn-in ourselves, so the
    // exact past of the training record stays available
    let whole = armax::simulate(&model, &inputs, config.burn_in + config.train_n, 0, sub_seed(seed, 3))?;
    let (prehistory, train) = split_record(whole.to_record()?, config.burn_in);
    let mut full = Dataset::from_record(train);
    full.test = whole.test.map(|mut t| {
        t.times.iter_mut().for_each(|x| *x -= config.burn_in as i64);
        t
    });
    let masked = armax::mask_missing(&full, config.missing_prob, sub_seed(seed, 4))?;
    Ok(SimulatedRun { model, prehistory, full, masked })
}

/// Splits after `at` samples; times of the tail are shifted to start at 0.
fn split_record(mut r: Record, at: usize) -> (Record, Record) {
    let tail = Record {
        times: (0..(r.len() - at) as i64).collect(),
        inputs: r.inputs.iter_mut().map(|u| u.split_off(at)).collect(),
        outputs: r.outputs.split_off(at),
    };
    r.times = (-(at as i64)..0).collect();
    (r, tail)
}

fn imputation_template(config: &ExperimentConfig) -> Result<KernelSpec> {
    let spec = KernelSpec::new(2, 0.5)?.truncated(config.truncation_len)?;
    if config.impute_enriched { spec.enriched(0.0, 0.0) } else { Ok(spec) }
}

fn predictor_template(config: &ExperimentConfig) -> Result<KernelSpec> {
    KernelSpec::new(2, 0.5)?.truncated(config.predictor_len)?.enriched(0.0, 0.0)
}

/// COD per horizon over the last `truth.len()` predicted samples.
fn cod_curve(truth: &[f64], preds: &[Vec<f64>]) -> Result<Vec<f64>> {
    preds.iter().map(|p| identify::cod_k(truth, &p[p.len() - truth.len()..])).collect()
}

/// Everything from the zero initial state through the test record, so that
/// every predictor enters the test record with the exact past.
fn with_history(sim: &SimulatedRun, test: &Record) -> Result<Record> {
    let mut record = sim.prehistory.clone();
    for part in [&sim.full.to_record()?, test] {
        record.times.extend(&part.times);
        for (u, v) in record.inputs.iter_mut().zip(&part.inputs) {
            u.extend(v);
        }
        record.outputs.extend(&part.outputs);
    }
    Ok(record)
}

/// Runs the whole pipeline for one run index.
pub fn run_once(config: &ExperimentConfig, run_index: usize) -> RunOutcome {
    let seed = config.run_seed(run_index);
    match run_inner(config, run_index, seed) {
        Ok(rows) => RunOutcome::Completed(rows),
        Err(e) => RunOutcome::Failed { run_index, seed, numerical: e.is_numerical(), message: e.to_string() },
    }
}

fn run_inner(config: &ExperimentConfig, run_index: usize, seed: u64) -> Result<Vec<RunReport>> {
    let sim = simulate_run(config, seed)?;
    let test = sim.full.test.as_ref().ok_or_else(|| Error::Data("simulation produced no test record".into()))?;
    let history = with_history(&sim, test)?;
    let order = sim.model.order();
    let row = |estimator, cod_k, hp, wall_time| RunReport {
        run_index,
        seed,
        model_order: order,
        estimator,
        cod_miss: None,
        cod_miss_mean: None,
        cod_k,
        hyperparameters: hp,
        wall_time,
    };
    let options = FitOptions { imputed_row_weight: config.imputed_row_weight };
    let mut rows = Vec::with_capacity(3);

    // imputation, then the predictor on the completed record
    let clock = Instant::now();
    let missing = sim.masked.missing_indices();
    let imputed = imputer::stable_spline_imputation(&sim.masked, &imputation_template(config)?, &config.search)?;
    let (cod_miss, cod_miss_mean) = if missing.is_empty() {
        (None, None)
    } else {
        let truth: Vec<f64> = missing.iter().map(|&i| sim.full.outputs[i].expect("complete")).collect();
        let est: Vec<f64> = imputed.estimates.iter().map(|e| e.mean).collect();
        let mean: Vec<f64> = imputer::mean_imputation(&sim.masked)?.iter().map(|e| e.mean).collect();
        (identify::cod_miss(&truth, &est).ok(), identify::cod_miss(&truth, &mean).ok())
    };
    let completed = imputed.complete(&sim.masked);
    let fit = identify::fit_predictor(&completed, &predictor_template(config)?, &config.predictor_search, &options)?;
    let curve = cod_curve(&test.outputs, &identify::kstep_predict_all(&fit.model, &history, config.k_max)?)?;
    let mut r = row(Estimator::ImputedSs, curve, Some(fit.model.hyperparameters), clock.elapsed().as_secs_f64());
    r.cod_miss = cod_miss;
    r.cod_miss_mean = cod_miss_mean;
    rows.push(r);

    let clock = Instant::now();
    let fit = identify::fit_predictor(&sim.full, &predictor_template(config)?, &config.predictor_search, &options)?;
    let curve = cod_curve(&test.outputs, &identify::kstep_predict_all(&fit.model, &history, config.k_max)?)?;
    rows.push(row(Estimator::FullSs, curve, Some(fit.model.hyperparameters), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let curve = cod_curve(&test.outputs, &armax::kstep_predict_true_all(&sim.model, &history, config.k_max)?)?;
    rows.push(row(Estimator::Oracle, curve, None, clock.elapsed().as_secs_f64()));
    Ok(rows)
}

/// Outcomes of all runs, in run-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub outcomes: Vec<RunOutcome>,
}

/// Runs every Monte Carlo run on the current rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let outcomes = (0..config.runs).into_par_iter().map(|i| run_once(config, i)).collect();
    Ok(ExperimentReport { config: config.clone(), outcomes })
}

/// Summary statistics of one metric over runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Summary {
        count: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
    })
}

impl ExperimentReport {
    pub fn rows(&self) -> impl Iterator<Item = &RunReport> {
        self.outcomes.iter().flat_map(|o| match o {
            RunOutcome::Completed(rows) => rows.as_slice(),
            RunOutcome::Failed { .. } => &[],
        })
    }

    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(o, RunOutcome::Failed { .. })).count()
    }

    /// Fails with a numerical error when more than 20% of the runs failed.
    pub fn check_failures(&self) -> Result<()> {
        let failed = self.failures();
        if failed as f64 > MAX_FAILURE_FRACTION * self.outcomes.len() as f64 {
            return Err(Error::OptimizationFailed(format!(
                "{failed} of {} runs failed",
                self.outcomes.len()
            )));
        }
        Ok(())
    }

    /// Values of one metric for one estimator across completed runs.
    pub fn metric(&self, estimator: Estimator, metric: Metric) -> Vec<f64> {
        self.rows()
            .filter(|r| r.estimator == estimator)
            .filter_map(|r| match metric {
                Metric::CodMiss => r.cod_miss,
                Metric::CodMissMean => r.cod_miss_mean,
                Metric::CodK(k) => r.cod_k.get(k - 1).copied(),
            })
            .collect()
    }

    /// Per-run rows; includes failed runs and wall times, so not reproducible byte for byte.
    pub fn write_runs_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let k_max = self.config.k_max;
        write!(out, "run_index,seed,model_order,estimator,status,cod_miss,cod_miss_mean")?;
        for k in 1..=k_max {
            write!(out, ",cod_{k}")?;
        }
        writeln!(out, ",beta,lambda,phi,varphi,wall_time,message")?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for outcome in &self.outcomes {
            match outcome {
                RunOutcome::Completed(rows) => {
                    for r in rows {
                        write!(
                            out,
                            "{},{},{},{},ok,{},{}",
                            r.run_index,
                            r.seed,
                            r.model_order,
                            r.estimator.name(),
                            opt(r.cod_miss),
                            opt(r.cod_miss_mean)
                        )?;
                        for c in &r.cod_k {
                            write!(out, ",{c}")?;
                        }
                        let hp = r.hyperparameters;
                        let e = hp.and_then(|h| h.enrichment);
                        writeln!(
                            out,
                            ",{},{},{},{},{},",
                            opt(hp.map(|h| h.beta)),
                            opt(hp.map(|h| h.lambda)),
                            opt(e.map(|e| e.phi())),
                            opt(e.map(|e| e.varphi())),
                            r.wall_time
                        )?;
                    }
                }
                RunOutcome::Failed { run_index, seed, message, .. } => {
                    write!(out, "{run_index},{seed},,,failed,,")?;
                    for _ in 0..k_max {
                        write!(out, ",")?;
                    }
                    writeln!(out, ",,,,,\"{}\"", message.replace('"', "'"))?;
                }
            }
        }
        Ok(())
    }

    /// Mean, median and quartiles of every metric per estimator; deterministic
    /// for a fixed configuration.
    pub fn write_aggregate_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "estimator,metric,count,mean,median,q1,q3")?;
        for est in Estimator::ALL {
            let mut metrics = Vec::new();
            if est == Estimator::ImputedSs {
                metrics.push(Metric::CodMiss);
                metrics.push(Metric::CodMissMean);
            }
            metrics.extend((1..=self.config.k_max).map(Metric::CodK));
            for m in metrics {
                match summarize(&self.metric(est, m)) {
                    Some(s) => writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        est.name(),
                        m.name(),
                        s.count,
                        s.mean,
                        s.median,
                        s.q1,
                        s.q3
                    )?,
                    None => writeln!(out, "{},{},0,,,,", est.name(), m.name())?,
                }
            }
        }
        writeln!(out, "all,failed_runs,{},,,,", self.failures())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    CodMiss,
    /// COD of the mean-imputation baseline.
    CodMissMean,
    CodK(usize),
}

impl Metric {
    pub fn name(self) -> String {
        match self {
            Metric::CodMiss => "cod_miss".into(),
            Metric::CodMissMean => "cod_miss_mean_imputation".into(),
            Metric::CodK(k) => format!("cod_{k}"),
        }
    }
}

/// Writes the true model as `polynomial,index,coefficient` rows
/// (`polynomial` is `A`, `B1..BM` or `C`) plus a `#` header with the noise
/// level and resonator, if any.
pub fn write_model_csv<W: Write>(model: &ArmaxModel, mut out: W) -> Result<()> {
    writeln!(out, "# noise_std={}", model.noise_std)?;
    if let Some(r) = model.resonance {
        writeln!(out, "# resonance_a={}", r.a)?;
        writeln!(out, "# resonance_b={}", r.b)?;
    }
    writeln!(out, "polynomial,index,coefficient")?;
    let mut poly = |name: &str, p: &[f64]| -> Result<()> {
        for (i, v) in p.iter().enumerate() {
            writeln!(out, "{name},{i},{v}")?;
        }
        Ok(())
    };
    poly("A", &model.a)?;
    for (l, b) in model.b.iter().enumerate() {
        poly(&format!("B{}", l + 1), b)?;
    }
    poly("C", &model.c)
}

/// The true predictor of a model, truncated to the configured predictor length.
pub fn oracle_predictor(model: &ArmaxModel, config: &ExperimentConfig) -> Result<PredictorModel> {
    PredictorModel::from_armax(model, config.predictor_len)
}
