//! Minimum-variance imputation of missing output samples.
//!
//! The output is modelled as the sum of an input-driven part, whose impulse
//! responses have covariance `lambda * K` (stable spline, possibly enriched),
//! and a stationary disturbance with covariance `lambda * R` (the derived RBF
//! kernel). With `P` the output kernel (the prior convolved with the observed
//! inputs on both arguments) the estimate at any instant `t` is
//!
//! ```text
//! y_hat(t) = sum_i c_i (P(t, t_i) + R(t, t_i)),   c = (P + R)^{-1} y_o
//! var(t)   = lambda (P(t, t) + R(t, t) - a_t (P + R)^{-1} a_t^T)
//! ```
//!
//! The shape parameters are chosen by minimizing
//! `J = y_o^T (lambda M)^{-1} y_o + log det(lambda M)`, `M = P + R`, with
//! `lambda` profiled out in closed form.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{self, Enrichment, KernelOrder, KernelSpec};
use crate::linalg::SpdFactor;
use crate::optim::{self, SimplexOptions};

/// Kernel shape plus the common scale factor `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub beta: f64,
    pub lambda: f64,
    pub enrichment: Option<Enrichment>,
    pub order: KernelOrder,
}

impl Hyperparameters {
    pub fn new(order: KernelOrder, beta: f64, lambda: f64, enrichment: Option<Enrichment>) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
        }
        KernelSpec::with_order(order, beta)?;
        Ok(Hyperparameters { beta, lambda, enrichment, order })
    }

    pub fn kernel(&self, truncation_len: usize) -> Result<KernelSpec> {
        Ok(KernelSpec::with_order(self.order, self.beta)?
            .with_enrichment(self.enrichment)
            .truncated(truncation_len)?)
    }

    pub fn from_kernel(spec: &KernelSpec, lambda: f64) -> Self {
        Hyperparameters { beta: spec.beta(), lambda, enrichment: spec.enrichment(), order: spec.order() }
    }
}

/// Grid and simplex settings for marginal-likelihood optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Log-spaced grid points over `[beta_min, beta_max]`.
    pub beta_points: usize,
    /// Points per axis of the `(phi, varphi)` grid; used only for enriched kernels.
    pub enrichment_points: usize,
    /// Distance kept from the edges of the stability triangle.
    pub triangle_margin: f64,
    pub max_evals: usize,
    pub param_tol: f64,
    /// Log-spaced range of prior-to-noise ratios (predictor fits only).
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beta_min: 0.01,
            beta_max: 2.0,
            beta_points: 25,
            enrichment_points: 7,
            triangle_margin: 0.02,
            max_evals: 200,
            param_tol: 1e-4,
            ratio_min: 1e-4,
            ratio_max: 1e8,
        }
    }
}

impl SearchConfig {
    /// Coarser defaults for predictor fits, where one evaluation costs an
    /// eigendecomposition of the regression Gram matrix.
    pub fn predictor_default() -> Self {
        SearchConfig { beta_points: 8, enrichment_points: 4, max_evals: 100, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_max >= self.beta_min) || self.beta_points == 0 {
            return Err(Error::Config("beta search range must be positive and non-empty".into()));
        }
        if !(0.0..0.5).contains(&self.triangle_margin) {
            return Err(Error::Config("triangle margin must lie in [0, 0.5)".into()));
        }
        if !(self.ratio_min > 0.0 && self.ratio_max >= self.ratio_min) {
            return Err(Error::Config("ratio search range must be positive".into()));
        }
        if !(self.param_tol > 0.0) {
            return Err(Error::Config("parameter tolerance must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn beta_grid(&self) -> Vec<f64> {
        log_grid(self.beta_min, self.beta_max, self.beta_points)
    }

    /// Points inside the stability triangle shrunk by `triangle_margin`.
    pub(crate) fn enrichment_grid(&self) -> Vec<(f64, f64)> {
        let g = self.enrichment_points.max(1);
        let m = self.triangle_margin;
        let lin = |lo: f64, hi: f64, i: usize| {
            if g == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (g - 1) as f64 }
        };
        let mut out = Vec::with_capacity(g * g);
        for i in 0..g {
            let varphi = lin(-1.0 + 2.0 * m, 1.0 - m, i);
            let bound = 1.0 + varphi - m;
            for j in 0..g {
                out.push((lin(-bound, bound, j), varphi));
            }
        }
        out
    }

    /// Clamps `(phi, varphi)` into the shrunk triangle.
    pub(crate) fn project_enrichment(&self, phi: &mut f64, varphi: &mut f64) {
        let m = self.triangle_margin;
        *varphi = varphi.clamp(-1.0 + 2.0 * m, 1.0 - m);
        let bound = 1.0 + *varphi - m;
        *phi = phi.clamp(-bound, bound);
    }
}

pub(crate) fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 || lo == hi {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

/// Posterior mean and variance at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub time: i64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    /// `(P + R)^{-1} y_o`, in the order of the observed samples.
    pub coefficients: DVector<f64>,
    pub estimates: Vec<Estimate>,
    pub fitted: Hyperparameters,
    /// Profiled objective `J` at the fitted shape.
    pub log_objective: f64,
    pub condition_estimate: f64,
    pub n_observed: usize,
}

impl ImputationResult {
    pub fn estimate_at(&self, time: i64) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.time == time)
    }

    /// Copy of `dataset` with imputed values written into its missing slots.
    pub fn complete(&self, dataset: &Dataset) -> Dataset {
        let mut out = dataset.clone();
        for e in &self.estimates {
            if let Some(i) = dataset.index_of(e.time) {
                if out.outputs[i].is_none() {
                    out.outputs[i] = Some(e.mean);
                    out.imputed[i] = true;
                }
            }
        }
        out
    }
}

/// Lagged input windows `[u(t-1), u(t-2), ..., u(t-T)]` stored column-wise
/// (one `T`-column per instant), zero before the first input sample.
fn windows(input: &[f64], input_start: i64, times: &[i64], len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(len, times.len(), |a, j| {
        let idx = times[j] - input_start - a as i64 - 1;
        if idx >= 0 && (idx as usize) < input.len() { input[idx as usize] } else { 0.0 }
    })
}

/// Output kernel matrix `P(eval_i, obs_j) = sum_l U_l^{eval_i} K~ (U_l^{obs_j})^T`.
///
/// `inputs[l][k]` is input `l` at time `input_start + k`; samples before
/// `input_start` are taken as zero.
pub fn output_kernel_matrix(
    inputs: &[Vec<f64>],
    input_start: i64,
    obs_times: &[i64],
    eval_times: &[i64],
    spec: &KernelSpec,
) -> DMatrix<f64> {
    let gram = kernels::delayed_impulse_gram(spec);
    output_kernel_with_gram(inputs, input_start, obs_times, eval_times, &gram)
}

fn output_kernel_with_gram(
    inputs: &[Vec<f64>],
    input_start: i64,
    obs_times: &[i64],
    eval_times: &[i64],
    gram: &DMatrix<f64>,
) -> DMatrix<f64> {
    let len = gram.nrows();
    let mut p = DMatrix::zeros(eval_times.len(), obs_times.len());
    for u in inputs {
        let w_obs = windows(u, input_start, obs_times, len);
        let w_eval = windows(u, input_start, eval_times, len);
        let z = gram * &w_obs;
        p.gemm_tr(1.0, &w_eval, &z, 1.0);
    }
    p
}

/// Observed samples and the quantities that do not depend on the kernel shape.
struct Problem {
    obs_times: Vec<i64>,
    y: DVector<f64>,
    /// per input: `T x n_obs` window matrix
    windows: Vec<DMatrix<f64>>,
    truncation_len: usize,
}

impl Problem {
    fn new(inputs: &[Vec<f64>], input_start: i64, obs_times: &[i64], y: &[f64], truncation_len: usize) -> Result<Self> {
        if obs_times.is_empty() {
            return Err(Error::Data("at least one observed output is required".into()));
        }
        if obs_times.len() != y.len() {
            return Err(Error::Data("observed times and values differ in length".into()));
        }
        let windows = inputs.iter().map(|u| windows(u, input_start, obs_times, truncation_len)).collect();
        Ok(Problem {
            obs_times: obs_times.to_vec(),
            y: DVector::from_column_slice(y),
            windows,
            truncation_len,
        })
    }

    fn from_dataset(dataset: &Dataset, truncation_len: usize) -> Result<Self> {
        dataset.validate()?;
        let idx = dataset.observed_indices();
        let times: Vec<i64> = idx.iter().map(|&i| dataset.times[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| dataset.outputs[i].expect("observed")).collect();
        let start = dataset.times.first().copied().unwrap_or(0);
        Self::new(&dataset.inputs, start, &times, &y, truncation_len)
    }

    fn n(&self) -> usize {
        self.obs_times.len()
    }

    /// `P + R` on the observed instants.
    fn covariance(&self, spec: &KernelSpec) -> DMatrix<f64> {
        let gram = kernels::delayed_impulse_gram(spec);
        let mut m = DMatrix::zeros(self.n(), self.n());
        for w in &self.windows {
            let z = &gram * w;
            m.gemm_tr(1.0, w, &z, 1.0);
        }
        let max_lag = lag_span(&self.obs_times);
        let lags = kernels::rbf_lags_discrete(max_lag, spec);
        for j in 0..self.n() {
            for i in 0..self.n() {
                m[(i, j)] += lags[self.obs_times[i].abs_diff(self.obs_times[j]) as usize];
            }
        }
        m.fill_lower_triangle_with_upper_triangle();
        m
    }
}

fn lag_span(times: &[i64]) -> usize {
    let lo = times.iter().copied().min().unwrap_or(0);
    let hi = times.iter().copied().max().unwrap_or(0);
    (hi - lo) as usize
}

/// Profiled marginal likelihood at one kernel shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    /// `n + n log lambda* + log det M`.
    pub j: f64,
    /// `y_o^T M^{-1} y_o / n`.
    pub lambda: f64,
    pub log_det: f64,
    pub condition_estimate: f64,
}

/// Profiled objective for `cov(y) = lambda * m`.
pub fn profiled_objective(m: &DMatrix<f64>, y: &DVector<f64>) -> Result<Likelihood> {
    let factor = SpdFactor::new(m)?;
    Ok(profile_with(&factor, y))
}

fn profile_with(factor: &SpdFactor, y: &DVector<f64>) -> Likelihood {
    let n = y.len() as f64;
    let v = factor.solve_lower(y);
    let lambda = v.norm_squared() / n;
    let log_det = factor.log_det();
    Likelihood {
        j: n + n * lambda.ln() + log_det,
        lambda,
        log_det,
        condition_estimate: factor.condition_estimate(),
    }
}

/// Profiled marginal likelihood of the observed outputs for kernel shape `spec`.
pub fn marginal_likelihood(dataset: &Dataset, spec: &KernelSpec) -> Result<Likelihood> {
    let problem = Problem::from_dataset(dataset, spec.truncation_len())?;
    profiled_objective(&problem.covariance(spec), &problem.y)
}

/// Estimates at `targets` for fixed hyperparameters.
pub fn impute(dataset: &Dataset, targets: &[i64], hp: &Hyperparameters, truncation_len: usize) -> Result<ImputationResult> {
    dataset.validate()?;
    let idx = dataset.observed_indices();
    let obs_times: Vec<i64> = idx.iter().map(|&i| dataset.times[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| dataset.outputs[i].expect("observed")).collect();
    for &t in targets {
        if dataset.index_of(t).is_none() {
            return Err(Error::Data(format!("target time {t} lies outside the record")));
        }
    }
    let start = dataset.times.first().copied().unwrap_or(0);
    impute_at(&dataset.inputs, start, &obs_times, &y, targets, hp, truncation_len)
}

/// Estimates at `targets` from observations listed in any order.
pub fn impute_at(
    inputs: &[Vec<f64>],
    input_start: i64,
    obs_times: &[i64],
    y_obs: &[f64],
    targets: &[i64],
    hp: &Hyperparameters,
    truncation_len: usize,
) -> Result<ImputationResult> {
    let spec = hp.kernel(truncation_len)?;
    let problem = Problem::new(inputs, input_start, obs_times, y_obs, truncation_len)?;
    let m = problem.covariance(&spec);
    let factor = SpdFactor::new(&m)?;
    let likelihood = profile_with(&factor, &problem.y);
    let coefficients = factor.solve(&problem.y);

    let gram = kernels::delayed_impulse_gram(&spec);
    let mut cross = output_kernel_with_gram(inputs, input_start, obs_times, targets, &gram);
    let all: Vec<i64> = obs_times.iter().chain(targets).copied().collect();
    let lags = kernels::rbf_lags_discrete(lag_span(&all), &spec);
    for (a, &t) in targets.iter().enumerate() {
        for (b, &s) in obs_times.iter().enumerate() {
            cross[(a, b)] += lags[t.abs_diff(s) as usize];
        }
    }
    let mut prior = vec![lags[0]; targets.len()];
    for u in inputs {
        let w = windows(u, input_start, targets, problem.truncation_len);
        let z = &gram * &w;
        for (a, p) in prior.iter_mut().enumerate() {
            *p += w.column(a).dot(&z.column(a));
        }
    }

    let estimates = targets
        .iter()
        .enumerate()
        .map(|(a, &time)| {
            let row = cross.row(a).transpose();
            let mean = row.dot(&coefficients);
            let v = factor.solve_lower(&row);
            let variance = (hp.lambda * (prior[a] - v.norm_squared())).max(0.0);
            Estimate { time, mean, variance }
        })
        .collect();

    Ok(ImputationResult {
        coefficients,
        estimates,
        fitted: *hp,
        log_objective: likelihood.j,
        condition_estimate: factor.condition_estimate(),
        n_observed: problem.n(),
    })
}

/// Continuous-time estimates for a pure disturbance record (`P = 0`).
pub fn impute_continuous(
    obs_times: &[f64],
    y_obs: &[f64],
    targets: &[f64],
    hp: &Hyperparameters,
) -> Result<Vec<(f64, f64, f64)>> {
    if obs_times.is_empty() || obs_times.len() != y_obs.len() {
        return Err(Error::Data("need matching, non-empty observed times and values".into()));
    }
    let spec = KernelSpec::with_order(hp.order, hp.beta)?;
    let h = |x: f64| kernels::rbf_h_continuous(x, &spec);
    let n = obs_times.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = h(obs_times[i] - obs_times[j])?;
        }
    }
    let factor = SpdFactor::new(&m)?;
    let c = factor.solve(&DVector::from_column_slice(y_obs));
    let h0 = h(0.0)?;
    targets
        .iter()
        .map(|&t| {
            let row = DVector::from_iterator(n, obs_times.iter().map(|&s| h(t - s).expect("validated spec")));
            let v = factor.solve_lower(&row);
            Ok((t, row.dot(&c), (hp.lambda * (h0 - v.norm_squared())).max(0.0)))
        })
        .collect()
}

/// Fitted shape together with its profiled objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedHyperparameters {
    pub hyperparameters: Hyperparameters,
    pub j: f64,
    pub grid_best_j: f64,
    pub condition_estimate: f64,
    pub evaluations: usize,
}

/// Grid search over `beta` (and `(phi, varphi)` when `template` is enriched)
/// followed by simplex refinement from the best grid point.
pub fn optimize_hyperparameters(dataset: &Dataset, template: &KernelSpec, search: &SearchConfig) -> Result<FittedHyperparameters> {
    search.validate()?;
    let problem = Problem::from_dataset(dataset, template.truncation_len())?;
    let enriched = template.enrichment().is_some();
    let order = template.order();
    let truncation = template.truncation_len();

    let shape = |x: &[f64]| -> Result<KernelSpec> {
        let spec = KernelSpec::with_order(order, x[0].exp())?.truncated(truncation)?;
        if enriched { spec.enriched(x[1], x[2]) } else { Ok(spec) }
    };
    let objective = |x: &[f64]| -> Result<Likelihood> {
        profiled_objective(&problem.covariance(&shape(x)?), &problem.y)
    };

    let mut grid = Vec::new();
    for beta in search.beta_grid() {
        if enriched {
            for (phi, varphi) in search.enrichment_grid() {
                grid.push(vec![beta.ln(), phi, varphi]);
            }
        } else {
            grid.push(vec![beta.ln()]);
        }
    }
    let values: Vec<Option<Likelihood>> = grid.par_iter().map(|x| objective(x).ok()).collect();
    let (best_idx, best) = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .filter(|(_, v)| v.j.is_finite())
        .min_by(|a, b| a.1.j.total_cmp(&b.1.j))
        .ok_or_else(|| Error::OptimizationFailed("every grid point was ill-conditioned".into()))?;

    let log_lo = search.beta_min.ln();
    let log_hi = search.beta_max.ln();
    let beta_step = if search.beta_points > 1 { (log_hi - log_lo) / (search.beta_points - 1) as f64 } else { 0.5 };
    let tri_step = 2.0 / search.enrichment_points.max(2) as f64;
    let steps: Vec<f64> = if enriched { vec![beta_step, tri_step, tri_step] } else { vec![beta_step] };
    let project = |x: &mut [f64]| {
        x[0] = x[0].clamp(log_lo, log_hi);
        if enriched {
            let (mut phi, mut varphi) = (x[1], x[2]);
            search.project_enrichment(&mut phi, &mut varphi);
            x[1] = phi;
            x[2] = varphi;
        }
    };
    let refined = optim::nelder_mead(
        |x| objective(x).map(|l| l.j).unwrap_or(f64::INFINITY),
        &grid[best_idx],
        best.j,
        &steps,
        SimplexOptions { max_evals: search.max_evals, x_tol: search.param_tol },
        project,
    );
    let (x, like) = if refined.value < best.j {
        let like = objective(&refined.x)?;
        (refined.x, like)
    } else {
        (grid[best_idx].clone(), best)
    };
    let spec = shape(&x)?;
    Ok(FittedHyperparameters {
        hyperparameters: Hyperparameters::from_kernel(&spec, like.lambda),
        j: like.j,
        grid_best_j: best.j,
        condition_estimate: like.condition_estimate,
        evaluations: grid.len() + refined.evals,
    })
}

/// Fits the hyperparameters and estimates every missing output.
pub fn stable_spline_imputation(dataset: &Dataset, template: &KernelSpec, search: &SearchConfig) -> Result<ImputationResult> {
    if dataset.observed_count() == 0 {
        return Err(Error::Data("no observed outputs".into()));
    }
    let fitted = optimize_hyperparameters(dataset, template, search)?;
    let targets: Vec<i64> = dataset.missing_indices().iter().map(|&i| dataset.times[i]).collect();
    let mut result = impute(dataset, &targets, &fitted.hyperparameters, template.truncation_len())?;
    result.log_objective = fitted.j;
    Ok(result)
}

/// Replaces missing outputs by the mean of the observed ones.
pub fn mean_imputation(dataset: &Dataset) -> Result<Vec<Estimate>> {
    let observed: Vec<f64> = dataset.outputs.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::Data("no observed outputs".into()));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    Ok(dataset
        .missing_indices()
        .into_iter()
        .map(|i| Estimate { time: dataset.times[i], mean, variance: f64::NAN })
        .collect())
}
