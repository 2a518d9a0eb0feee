//! One-step-ahead predictor estimation on a complete record, k-step
//! prediction, and coefficients of determination.
//!
//! The predictor
//!
//! ```text
//! y(t) = sum_l sum_{j=1}^{T} g_l(j) u_l(t-j) + sum_{j=1}^{T} g_y(j) y(t-j) + e(t)
//! ```
//!
//! is a linear regression in the stacked coefficients `g`. Each channel gets the
//! prior `g_l ~ N(0, lambda K)` with one shared (possibly enriched) stable spline
//! kernel `K`, and `e` is white with variance `sigma2`. Writing `gamma =
//! lambda / sigma2`, the marginal covariance of the targets is
//! `sigma2 (gamma Phi K Phi^T + I)`; `sigma2` is profiled out in closed form and
//! `gamma` is minimized on the spectrum of `Phi K Phi^T`, so every kernel shape
//! costs one symmetric eigendecomposition.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::armax::{self, ArmaxModel};
use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::imputer::{log_grid, Hyperparameters, SearchConfig};
use crate::kernels::{self, KernelSpec};
use crate::linalg::{spectral_projection, SpdFactor};
use crate::optim::{self, SimplexOptions};

/// Default number of predictor coefficients per channel.
pub const DEFAULT_PREDICTOR_LEN: usize = 100;
/// Fewest regression rows accepted by [`fit_predictor`].
pub const MIN_ROWS: usize = 10;

/// Truncated predictor impulse responses; element `j-1` holds lag `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub g_inputs: Vec<Vec<f64>>,
    pub g_output: Vec<f64>,
    pub hyperparameters: Hyperparameters,
    /// Profiled innovation variance.
    pub noise_variance: f64,
}

/// Options of [`fit_predictor`] beyond the kernel and the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Weight of regression rows whose target was imputed (1 keeps them as is, 0 drops them).
    pub imputed_row_weight: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { imputed_row_weight: 1.0 }
    }
}

/// A fitted predictor with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorFit {
    pub model: PredictorModel,
    pub j: f64,
    pub evaluations: usize,
}

impl PredictorModel {
    pub fn len(&self) -> usize {
        self.g_output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_output.is_empty()
    }

    pub fn num_inputs(&self) -> usize {
        self.g_inputs.len()
    }

    /// The exact predictor of an ARMAX model, `g_l = B_l / C` and
    /// `g_y = (C - A) / C`, truncated to `len` lags.
    pub fn from_armax(model: &ArmaxModel, len: usize) -> Result<Self> {
        model.validate()?;
        let radius = model.zero_radius_c();
        if radius >= 1.0 {
            return Err(Error::PredictorUnstable { modulus: radius });
        }
        let mut impulse = vec![0.0; len + 1];
        impulse[0] = 1.0;
        let lags = |num: &[f64]| armax::filter(num, &model.c, &impulse)[1..].to_vec();
        let width = model.a.len().max(model.c.len());
        let c_minus_a: Vec<f64> = (0..width)
            .map(|i| model.c.get(i).copied().unwrap_or(0.0) - model.a.get(i).copied().unwrap_or(0.0))
            .collect();
        Ok(PredictorModel {
            g_inputs: model.b.iter().map(|b| lags(b)).collect(),
            g_output: lags(&c_minus_a),
            hyperparameters: Hyperparameters::new(kernels::KernelOrder::Second, 1.0, 1.0, None)?,
            noise_variance: model.noise_std * model.noise_std,
        })
    }

    /// Writes a `#` header block with the hyperparameters followed by
    /// `channel,lag,coefficient` rows (`channel` is `u1..uM` or `y`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let hp = &self.hyperparameters;
        writeln!(out, "# q={}", hp.order.q())?;
        writeln!(out, "# beta={}", hp.beta)?;
        writeln!(out, "# lambda={}", hp.lambda)?;
        if let Some(e) = hp.enrichment {
            writeln!(out, "# phi={}", e.phi())?;
            writeln!(out, "# varphi={}", e.varphi())?;
        }
        writeln!(out, "# noise_variance={}", self.noise_variance)?;
        writeln!(out, "channel,lag,coefficient")?;
        for (l, g) in self.g_inputs.iter().enumerate() {
            for (j, v) in g.iter().enumerate() {
                writeln!(out, "u{},{},{}", l + 1, j + 1, v)?;
            }
        }
        for (j, v) in self.g_output.iter().enumerate() {
            writeln!(out, "y,{},{}", j + 1, v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut rows: Vec<(String, usize, f64)> = Vec::new();
        let mut seen_columns = false;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i as u64 + 1;
            let bad = |message: String| Error::Parse { line: lineno, message };
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let (k, v) = rest.split_once('=').ok_or_else(|| bad("expected `# key=value`".into()))?;
                let v: f64 = v.trim().parse().map_err(|e| bad(format!("bad header value: {e}")))?;
                header.insert(k.trim().to_string(), v);
                continue;
            }
            if !seen_columns {
                if trimmed != "channel,lag,coefficient" {
                    return Err(bad("expected header `channel,lag,coefficient`".into()));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad("expected three fields".into()));
            }
            let lag: usize = f[1].parse().map_err(|e| bad(format!("bad lag: {e}")))?;
            let v: f64 = f[2].parse().map_err(|e| bad(format!("bad coefficient: {e}")))?;
            if lag == 0 || !v.is_finite() {
                return Err(bad("lags start at 1 and coefficients must be finite".into()));
            }
            rows.push((f[0].to_string(), lag, v));
        }
        let get = |k: &str| header.get(k).copied().ok_or(Error::Parse { line: 0, message: format!("missing header `{k}`") });
        let enrichment = match (header.get("phi"), header.get("varphi")) {
            (Some(&p), Some(&v)) => Some(kernels::Enrichment::new(p, v)?),
            _ => None,
        };
        let hyperparameters =
            Hyperparameters::new(kernels::KernelOrder::from_q(get("q")? as u32)?, get("beta")?, get("lambda")?, enrichment)?;
        let len = rows.iter().map(|r| r.1).max().unwrap_or(0);
        let mut g_output = vec![0.0; len];
        let mut g_inputs: Vec<Vec<f64>> = Vec::new();
        for (ch, lag, v) in rows {
            if ch == "y" {
                g_output[lag - 1] = v;
            } else if let Some(l) = ch.strip_prefix('u').and_then(|s| s.parse::<usize>().ok()).filter(|&l| l >= 1) {
                if g_inputs.len() < l {
                    g_inputs.resize(l, vec![0.0; len]);
                }
                g_inputs[l - 1][lag - 1] = v;
            } else {
                return Err(Error::Parse { line: 0, message: format!("unknown channel `{ch}`") });
            }
        }
        Ok(PredictorModel { g_inputs, g_output, hyperparameters, noise_variance: get("noise_variance")? })
    }
}

/// Regression of `y(t)` on lagged inputs and outputs, one row per sample.
struct Regression {
    /// One `n x T` block per channel (inputs first, then the output).
    blocks: Vec<DMatrix<f64>>,
    y: DVector<f64>,
}

impl Regression {
    fn new(dataset: &Dataset, len: usize, options: &FitOptions) -> Result<Self> {
        dataset.validate()?;
        let y: Vec<f64> = dataset
            .outputs
            .iter()
            .map(|v| v.ok_or_else(|| Error::Data("predictor fit needs a complete record".into())))
            .collect::<Result<_>>()?;
        let w = options.imputed_row_weight;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Config("imputed row weight must be non-negative".into()));
        }
        let rows: Vec<(usize, f64)> = (0..y.len())
            .filter_map(|t| {
                let weight = if dataset.imputed[t] { w } else { 1.0 };
                (weight > 0.0).then(|| (t, weight.sqrt()))
            })
            .collect();
        if rows.len() < MIN_ROWS {
            return Err(Error::InsufficientData(format!(
                "{} regression rows available, at least {MIN_ROWS} required",
                rows.len()
            )));
        }
        let lagged = |x: &[f64]| {
            DMatrix::from_fn(rows.len(), len, |r, j| {
                let (t, s) = rows[r];
                if t > j { s * x[t - j - 1] } else { 0.0 }
            })
        };
        let mut blocks: Vec<DMatrix<f64>> = dataset.inputs.iter().map(|u| lagged(u)).collect();
        blocks.push(lagged(&y));
        let target = DVector::from_iterator(rows.len(), rows.iter().map(|&(t, s)| s * y[t]));
        Ok(Regression { blocks, y: target })
    }

    fn rows(&self) -> usize {
        self.y.len()
    }
}

/// Relative cutoff below which kernel eigenmodes are dropped from the prior.
const PRIOR_RANK_TOL: f64 = 1e-12;

/// Square-root factor `V_r diag(sqrt(d_r))` of a kernel Gram matrix, keeping
/// only eigenmodes above `PRIOR_RANK_TOL` of the largest.
fn gram_root(spec: &KernelSpec) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(kernels::delayed_impulse_gram(spec));
    let top = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&j| eig.eigenvalues[j] > PRIOR_RANK_TOL * top).collect();
    let mut root = DMatrix::zeros(eig.eigenvectors.nrows(), keep.len());
    for (c, &j) in keep.iter().enumerate() {
        root.set_column(c, &(eig.eigenvectors.column(j) * eig.eigenvalues[j].sqrt()));
    }
    root
}

/// Spectral form of `y^T (gamma A A^T + I)^{-1} y` and its log determinant:
/// `resid + sum_i proj_i / (1 + gamma eig_i)` and `sum_i log(1 + gamma eig_i)`.
struct Spectrum {
    eig: Vec<f64>,
    proj: Vec<f64>,
    /// Part of `||y||^2` outside the column space of `A` (zero when `A` is wide).
    resid: f64,
    n: usize,
}

impl Spectrum {
    fn new(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, d) = a.shape();
        let (eig, proj, resid) = if d < n {
            // A = Q R: the residual comes straight from Q^T y, with no cancellation
            let qr = a.clone().qr();
            let mut qy = y.clone();
            qr.q_tr_mul(&mut qy);
            let r = qr.r();
            let (eig, w) = spectral_projection(&r * r.transpose(), &qy.rows(0, d).into_owned())?;
            (eig, w, qy.rows(d, n - d).norm_squared())
        } else {
            let (eig, z) = spectral_projection(a * a.transpose(), y)?;
            (eig, z, 0.0)
        };
        Ok(Spectrum {
            eig: eig.into_iter().map(|v| v.max(0.0)).collect(),
            proj: proj.into_iter().map(|v| v * v).collect(),
            resid,
            n,
        })
    }

    /// Profiled objective and noise variance at ratio `gamma`.
    fn objective(&self, gamma: f64) -> (f64, f64) {
        let mut quad = self.resid;
        let mut log_det = 0.0;
        for (&d, &p) in self.eig.iter().zip(&self.proj) {
            let s = 1.0 + gamma * d;
            log_det += s.ln();
            quad += p / s;
        }
        let n = self.n as f64;
        let sigma2 = quad / n;
        (n + n * sigma2.ln() + log_det, sigma2)
    }

    /// Minimizes over `log gamma` on a grid refined by golden section.
    fn best_ratio(&self, search: &SearchConfig) -> (f64, f64, f64) {
        let grid = log_grid(search.ratio_min, search.ratio_max, 41);
        let (mut best_i, mut best_j) = (0, f64::INFINITY);
        for (i, &g) in grid.iter().enumerate() {
            let j = self.objective(g).0;
            if j < best_j {
                best_i = i;
                best_j = j;
            }
        }
        let lo = grid[best_i.saturating_sub(1)].ln();
        let hi = grid[(best_i + 1).min(grid.len() - 1)].ln();
        let (lg, j) = optim::golden_section(|lg| self.objective(lg.exp()).0, lo, hi, 1e-6);
        let (gamma, j) = if j < best_j { (lg.exp(), j) } else { (grid[best_i], best_j) };
        (gamma, j, self.objective(gamma).1)
    }
}

/// Design matrix in whitened coordinates, `A = [Phi_1 L, ..., Phi_p L]` with `K ~ L L^T`.
fn whitened_design(reg: &Regression, root: &DMatrix<f64>) -> DMatrix<f64> {
    let r = root.ncols();
    let mut a = DMatrix::zeros(reg.rows(), r * reg.blocks.len());
    for (c, block) in reg.blocks.iter().enumerate() {
        a.columns_mut(c * r, r).copy_from(&(block * root));
    }
    a
}

/// Posterior mean of `g` for a fixed ratio `gamma`.
fn coefficients(a: &DMatrix<f64>, root: &DMatrix<f64>, y: &DVector<f64>, gamma: f64, channels: usize) -> Result<Vec<Vec<f64>>> {
    let (n, d) = a.shape();
    let w = if d <= n {
        // (A^T A + I / gamma) w = A^T y
        let mut m = a.tr_mul(a);
        for i in 0..d {
            m[(i, i)] += 1.0 / gamma;
        }
        SpdFactor::new(&m)?.solve(&a.tr_mul(y))
    } else {
        // w = gamma A^T (gamma A A^T + I)^{-1} y
        let mut m = a * a.transpose() * gamma;
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        a.tr_mul(&SpdFactor::new(&m)?.solve(y)) * gamma
    };
    let r = root.ncols();
    Ok((0..channels)
        .map(|c| (root * w.rows(c * r, r)).iter().copied().collect())
        .collect())
}

fn split_channels(mut g: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let output = g.pop().expect("output channel");
    (g, output)
}

/// Fits the predictor for fixed hyperparameters and innovation variance.
pub fn fit_predictor_with(
    dataset: &Dataset,
    hp: &Hyperparameters,
    noise_variance: f64,
    len: usize,
    options: &FitOptions,
) -> Result<PredictorModel> {
    if !(noise_variance > 0.0) {
        return Err(Error::Domain("noise variance must be positive".into()));
    }
    let reg = Regression::new(dataset, len, options)?;
    let spec = hp.kernel(len)?;
    let root = gram_root(&spec);
    let a = whitened_design(&reg, &root);
    let g = coefficients(&a, &root, &reg.y, hp.lambda / noise_variance, reg.blocks.len())?;
    let (g_inputs, g_output) = split_channels(g);
    Ok(PredictorModel { g_inputs, g_output, hyperparameters: *hp, noise_variance })
}

/// Marginal-likelihood fit of the predictor on a complete record.
///
/// The kernel shape (`beta`, and `(phi, varphi)` when `template` is enriched)
/// is searched on a grid and refined by simplex; `lambda / sigma2` is optimized
/// exactly for every shape.
pub fn fit_predictor(
    dataset: &Dataset,
    template: &KernelSpec,
    search: &SearchConfig,
    options: &FitOptions,
) -> Result<PredictorFit> {
    search.validate()?;
    let len = template.truncation_len();
    let reg = Regression::new(dataset, len, options)?;
    let enriched = template.enrichment().is_some();
    let order = template.order();

    let shape = |x: &[f64]| -> Result<KernelSpec> {
        let spec = KernelSpec::with_order(order, x[0].exp())?.truncated(len)?;
        if enriched { spec.enriched(x[1], x[2]) } else { Ok(spec) }
    };
    let objective = |x: &[f64]| -> Result<(f64, f64, f64)> {
        let root = gram_root(&shape(x)?);
        let spectrum = Spectrum::new(&whitened_design(&reg, &root), &reg.y)?;
        Ok(spectrum.best_ratio(search))
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
    let values: Vec<Option<f64>> =
        grid.par_iter().map(|x| objective(x).ok().map(|v| v.1).filter(|j| j.is_finite())).collect();
    let (best_idx, best_j) = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::OptimizationFailed("no grid point gave a finite objective".into()))?;

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
        |x| objective(x).map(|v| v.1).unwrap_or(f64::INFINITY),
        &grid[best_idx],
        best_j,
        &steps,
        SimplexOptions { max_evals: search.max_evals, x_tol: search.param_tol },
        project,
    );
    let x = if refined.value < best_j { refined.x } else { grid[best_idx].clone() };
    let spec = shape(&x)?;
    let (gamma, j, sigma2) = objective(&x)?;
    let root = gram_root(&spec);
    let a = whitened_design(&reg, &root);
    let g = coefficients(&a, &root, &reg.y, gamma, reg.blocks.len())?;
    let (g_inputs, g_output) = split_channels(g);
    Ok(PredictorFit {
        model: PredictorModel {
            g_inputs,
            g_output,
            hyperparameters: Hyperparameters::from_kernel(&spec, gamma * sigma2),
            noise_variance: sigma2,
        },
        j,
        evaluations: grid.len() + refined.evals + 1,
    })
}

/// k-step-ahead predictions of every sample of `record` (zero history before it).
pub fn kstep_predict(model: &PredictorModel, record: &Record, k: usize) -> Result<Vec<f64>> {
    let mut all = kstep_predict_all(model, record, k)?;
    Ok(all.pop().expect("k >= 1"))
}

/// Predictions for every horizon `1..=k_max`; element `k-1` holds horizon `k`.
///
/// From each origin the one-step predictor is iterated, feeding back its own
/// outputs for samples inside the horizon; inputs are known throughout.
pub fn kstep_predict_all(model: &PredictorModel, record: &Record, k_max: usize) -> Result<Vec<Vec<f64>>> {
    if k_max == 0 {
        return Err(Error::Config("prediction horizon must be at least 1".into()));
    }
    if record.num_inputs() != model.num_inputs() {
        return Err(Error::Config("record and predictor disagree on the number of inputs".into()));
    }
    let n = record.len();
    let y = &record.outputs;
    let mut forced = vec![0.0; n];
    for (g, u) in model.g_inputs.iter().zip(&record.inputs) {
        for (t, f) in forced.iter_mut().enumerate() {
            *f += g.iter().take(t).enumerate().map(|(j, gj)| gj * u[t - j - 1]).sum::<f64>();
        }
    }
    let gy = &model.g_output;
    let mut preds = vec![vec![0.0; n]; k_max];
    let mut path = vec![0.0; k_max];
    // origin o: outputs at indices < o are known
    for o in 0..n {
        for step in 0..k_max {
            let t = o + step;
            if t >= n {
                break;
            }
            let mut v = forced[t];
            for (j, gj) in gy.iter().enumerate().take(t) {
                let s = t - j - 1;
                v += gj * if s < o { y[s] } else { path[s - o] };
            }
            path[step] = v;
            preds[step][t] = v;
            if o == 0 {
                // no output is known at origin 0, so longer horizons reaching t coincide
                for p in preds.iter_mut().skip(step + 1) {
                    p[t] = v;
                }
            }
        }
    }
    Ok(preds)
}

/// `1 - ||truth - estimate||^2 / ||truth - mean(truth)||^2`.
pub fn cod(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::Data(format!(
            "COD needs equal non-empty vectors, got {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let den: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if !(den > 0.0) {
        return Err(Error::UndefinedCod);
    }
    let num: f64 = truth.iter().zip(estimate).map(|(y, e)| (y - e).powi(2)).sum();
    Ok(1.0 - num / den)
}

/// COD of imputed against true missing samples.
pub fn cod_miss(true_missing: &[f64], estimates: &[f64]) -> Result<f64> {
    cod(true_missing, estimates)
}

/// COD of k-step predictions on a test record.
pub fn cod_k(test_truth: &[f64], predictions_k: &[f64]) -> Result<f64> {
    cod(test_truth, predictions_k)
}
