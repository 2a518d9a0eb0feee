//! Random stable ARMAX systems, simulation, and true-model prediction.
//!
//! Polynomials are stored as coefficient vectors in the backward-shift
//! variable `q^-1`:
//!
//! ```text
//! A(q) y(t) = sum_l B_l(q) u_l(t) + C(q) e(t)
//! A = [1, a_1, ..., a_n],  B_l = [0, b_1, ..., b_n],  C = [1, c_1, ..., c_n]
//! ```
//!
//! which is the same vector as the monic `z`-domain polynomial `z^n + a_1 z^{n-1} + ...`,
//! so roots of `A` are system poles. `B_l` has a zero constant term (unit delay).

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};

pub const MAX_GENERATION_ATTEMPTS: usize = 10_000;
/// Default number of discarded initial samples.
pub const DEFAULT_BURN_IN: usize = 500;

/// Resonator `z^2 / (z^2 + 2ab z + b^2)` multiplied into every transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub a: f64,
    pub b: f64,
}

impl Resonance {
    pub fn polynomial(&self) -> [f64; 3] {
        [1.0, 2.0 * self.a * self.b, self.b * self.b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaxModel {
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub noise_std: f64,
    /// Set when [`add_resonance`] was applied.
    pub resonance: Option<Resonance>,
}

/// Which transfer function an impulse response refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// `B_l / A` for input `l` (zero based).
    Input(usize),
    /// `C / A`.
    Noise,
}

impl ArmaxModel {
    pub fn order(&self) -> usize {
        self.a.len() - 1
    }

    pub fn num_inputs(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.first() != Some(&1.0) || self.c.first() != Some(&1.0) {
            return Err(Error::Config("A and C must be monic".into()));
        }
        if self.b.iter().any(|b| b.first().is_some_and(|&b0| b0 != 0.0)) {
            return Err(Error::Config("B polynomials must have a zero constant term".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    /// Largest pole modulus (roots of `A`).
    pub fn pole_radius(&self) -> f64 {
        max_modulus(&poly_roots(&self.a))
    }

    /// Largest predictor pole modulus (roots of `C`).
    pub fn zero_radius_c(&self) -> f64 {
        max_modulus(&poly_roots(&self.c))
    }
}

/// Product of two polynomials.
pub fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    if p.is_empty() || q.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &x) in p.iter().enumerate() {
        for (j, &y) in q.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots of `p[0] z^n + p[1] z^{n-1} + ... + p[n]`, sorted by modulus.
pub fn poly_roots(p: &[f64]) -> Vec<Complex<f64>> {
    let mut p = p.to_vec();
    let mut roots = Vec::new();
    while p.len() > 1 && *p.last().unwrap() == 0.0 {
        p.pop();
        roots.push(Complex::new(0.0, 0.0));
    }
    let n = p.len().saturating_sub(1);
    if n > 0 {
        let lead = p[0];
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            companion[(0, j)] = -p[j + 1] / lead;
        }
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        roots.extend(companion.complex_eigenvalues().iter().cloned());
    }
    roots.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    roots
}

fn max_modulus(roots: &[Complex<f64>]) -> f64 {
    roots.iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// `sum b_i x[t-i] - sum_{i>=1} a_i y[t-i]`, zero initial conditions, `a[0] == 1`.
pub fn filter(b: &[f64], a: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for t in 0..x.len() {
        let mut v = 0.0;
        for (i, &bi) in b.iter().enumerate().take(t + 1) {
            v += bi * x[t - i];
        }
        for (i, &ai) in a.iter().enumerate().skip(1).take(t) {
            v -= ai * y[t - i];
        }
        y[t] = v / a[0];
    }
    y
}

/// First `length` samples of the impulse response of a channel.
pub fn impulse_response(model: &ArmaxModel, channel: Channel, length: usize) -> Result<Vec<f64>> {
    let num = match channel {
        Channel::Input(l) => model
            .b
            .get(l)
            .ok_or_else(|| Error::Config(format!("input channel {l} does not exist")))?,
        Channel::Noise => &model.c,
    };
    let mut delta = vec![0.0; length];
    if length > 0 {
        delta[0] = 1.0;
    }
    Ok(filter(num, &model.a, &delta))
}

/// Monic real polynomial whose roots are sampled with moduli uniform on `[0, rho)`
/// and uniform angles, mixing conjugate pairs and real roots.
pub fn random_stable_polynomial<R: Rng + ?Sized>(degree: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    let pairs = rng.gen_range(0..=degree / 2);
    let mut poly = vec![1.0];
    for _ in 0..pairs {
        let r = rho * rng.gen::<f64>();
        let theta = std::f64::consts::PI * rng.gen::<f64>();
        poly = poly_mul(&poly, &[1.0, -2.0 * r * theta.cos(), r * r]);
    }
    for _ in 0..(degree - 2 * pairs) {
        let r = rho * rng.gen::<f64>();
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        poly = poly_mul(&poly, &[1.0, -sign * r]);
    }
    poly
}

/// Samples needed for a response with pole radius `radius` to decay below 1e-10.
fn norm_horizon(radius: f64) -> usize {
    if radius <= 0.0 {
        return 1000;
    }
    let needed = (1e-10f64.ln() / radius.ln()).ceil() as usize;
    // repeated poles decay slower than radius^k; the factor 2 covers that at desk orders
    needed.saturating_mul(2).clamp(1000, 200_000)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Ratio `sum_l ||f_l||_2 / ||f_p||_2` of input to noise impulse-response norms.
pub fn norm_ratio(model: &ArmaxModel) -> f64 {
    let horizon = norm_horizon(model.pole_radius());
    let noise = l2(&filter(&model.c, &model.a, &unit_impulse(horizon)));
    let inputs: f64 =
        model.b.iter().map(|b| l2(&filter(b, &model.a, &unit_impulse(horizon)))).sum();
    inputs / noise
}

fn unit_impulse(len: usize) -> Vec<f64> {
    let mut d = vec![0.0; len];
    d[0] = 1.0;
    d
}

/// Random ARMAX model of the given order with stable `A` and `C` (root moduli
/// below `rho`) and unit-delay `B_l` with standard normal coefficients,
/// resampled until the norm ratio falls inside `ratio_range`.
pub fn random_armax(
    order: usize,
    num_inputs: usize,
    rho: f64,
    ratio_range: (f64, f64),
    seed: u64,
) -> Result<ArmaxModel> {
    if order == 0 {
        return Err(Error::Config("model order must be at least 1".into()));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Config(format!("pole radius must lie in (0, 1), got {rho}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let a = random_stable_polynomial(order, rho, &mut rng);
        let c = random_stable_polynomial(order, rho, &mut rng);
        let b = (0..num_inputs)
            .map(|_| {
                let mut coeffs = vec![0.0];
                coeffs.extend((0..order).map(|_| rng.sample::<f64, _>(StandardNormal)));
                coeffs
            })
            .collect();
        let model = ArmaxModel { a, b, c, noise_std: 1.0, resonance: None };
        let ratio = norm_ratio(&model);
        if ratio >= ratio_range.0 && ratio <= ratio_range.1 {
            return Ok(model);
        }
    }
    Err(Error::GenerationFailed { attempts: MAX_GENERATION_ATTEMPTS })
}

/// Multiplies every transfer function by `z^2 / (z^2 + 2ab z + b^2)`.
pub fn add_resonance(model: &ArmaxModel, b: f64, a: f64) -> Result<ArmaxModel> {
    if !(b.abs() < 1.0) || !(a.abs() <= 1.0) {
        return Err(Error::Config(format!("resonator needs |b| < 1 and |a| <= 1, got b={b}, a={a}")));
    }
    let resonance = Resonance { a, b };
    let mut out = model.clone();
    out.a = poly_mul(&model.a, &resonance.polynomial());
    out.resonance = Some(resonance);
    Ok(out)
}

/// Runs the ARMAX difference equation from zero state over all supplied input
/// samples, discards `burn_in` samples, and splits the rest into `n` training
/// samples followed by a test continuation.
pub fn simulate(
    model: &ArmaxModel,
    inputs: &[Vec<f64>],
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Dataset> {
    model.validate()?;
    if inputs.len() != model.num_inputs() {
        return Err(Error::Config(format!(
            "model has {} inputs, {} supplied",
            model.num_inputs(),
            inputs.len()
        )));
    }
    let total = inputs.first().map_or(burn_in + n, Vec::len);
    if inputs.iter().any(|u| u.len() != total) || total < burn_in + n {
        return Err(Error::Config("input length must cover burn-in and training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = if model.noise_std > 0.0 {
        let dist = Normal::new(0.0, model.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        (0..total).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![0.0; total]
    };
    let y = run_difference_equation(model, inputs, &noise);

    let slice = |range: std::ops::Range<usize>| -> (Vec<i64>, Vec<Vec<f64>>, Vec<f64>) {
        let times = range.clone().map(|t| (t - burn_in) as i64).collect();
        let us = inputs.iter().map(|u| u[range.clone()].to_vec()).collect();
        (times, us, y[range].to_vec())
    };
    let (times, us, ys) = slice(burn_in..burn_in + n);
    let mut ds = Dataset::new(times, us, ys.into_iter().map(Some).collect())?;
    if total > burn_in + n {
        let (times, inputs, outputs) = slice(burn_in + n..total);
        ds.test = Some(Record { times, inputs, outputs });
    }
    Ok(ds)
}

fn run_difference_equation(model: &ArmaxModel, inputs: &[Vec<f64>], noise: &[f64]) -> Vec<f64> {
    let mut y = filter(&model.c, &model.a, noise);
    for (b, u) in model.b.iter().zip(inputs) {
        for (yt, v) in y.iter_mut().zip(filter(b, &model.a, u)) {
            *yt += v;
        }
    }
    y
}

/// Marks each training output missing with probability `prob`, keeping at least one.
pub fn mask_missing(dataset: &Dataset, prob: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::Config(format!("missing probability must lie in [0, 1), got {prob}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dataset.len();
    let mask = loop {
        let mask: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < prob).collect();
        if n == 0 || mask.iter().any(|m| !m) {
            break mask;
        }
    };
    let mut out = dataset.clone();
    for (y, missing) in out.outputs.iter_mut().zip(mask) {
        if missing {
            *y = None;
        }
    }
    Ok(out)
}

/// k-step-ahead predictions of every sample of `record` from the true model.
///
/// Innovations are reconstructed from `C e = A y - sum B u` with zero history
/// before the record; each prediction propagates the model from its origin with
/// future innovations set to zero, which equals iterating the one-step
/// predictor with its own outputs substituted inside the horizon.
pub fn kstep_predict_true(model: &ArmaxModel, record: &Record, k: usize) -> Result<Vec<f64>> {
    let mut all = kstep_predict_true_all(model, record, k)?;
    Ok(all.pop().expect("k >= 1"))
}

/// Predictions for every horizon `1..=k_max`; element `k-1` holds horizon `k`.
pub fn kstep_predict_true_all(model: &ArmaxModel, record: &Record, k_max: usize) -> Result<Vec<Vec<f64>>> {
    if k_max == 0 {
        return Err(Error::Config("prediction horizon must be at least 1".into()));
    }
    if record.num_inputs() != model.num_inputs() {
        return Err(Error::Config("record and model disagree on the number of inputs".into()));
    }
    let radius = model.zero_radius_c();
    if radius >= 1.0 {
        return Err(Error::PredictorUnstable { modulus: radius });
    }
    let n = record.len();
    let y = &record.outputs;
    let u = &record.inputs;
    let order_a = model.a.len();
    let order_c = model.c.len();

    // forced input response sum_l B_l u_l (independent of origin)
    let mut forced = vec![0.0; n];
    for (b, ul) in model.b.iter().zip(u) {
        for t in 0..n {
            let mut v = 0.0;
            for (i, &bi) in b.iter().enumerate().take(t + 1) {
                v += bi * ul[t - i];
            }
            forced[t] += v;
        }
    }
    let mut innov = vec![0.0; n];
    for t in 0..n {
        let mut v = y[t] - forced[t];
        for i in 1..order_a.min(t + 1) {
            v += model.a[i] * y[t - i];
        }
        for i in 1..order_c.min(t + 1) {
            v -= model.c[i] * innov[t - i];
        }
        innov[t] = v;
    }

    let mut preds = vec![vec![0.0; n]; k_max];
    let mut path = vec![0.0; k_max];
    // origin o: data up to index o is known (o = -1 means none)
    for o in -1..(n as i64 - 1) {
        for step in 1..=k_max {
            let t = o + step as i64;
            if t >= n as i64 {
                break;
            }
            let t = t as usize;
            let yv = |s: usize| -> f64 {
                if (s as i64) <= o {
                    y[s]
                } else {
                    path[s - (o + 1) as usize]
                }
            };
            let mut v = forced[t];
            for i in 1..order_a.min(t + 1) {
                v -= model.a[i] * yv(t - i);
            }
            for i in 1..order_c.min(t + 1) {
                let s = t - i;
                if (s as i64) <= o {
                    v += model.c[i] * innov[s];
                }
            }
            path[step - 1] = v;
            preds[step - 1][t] = v;
            if o == -1 {
                // nothing is known yet, so longer horizons reaching t coincide
                for p in preds.iter_mut().skip(step) {
                    p[t] = v;
                }
            }
        }
    }
    // early samples with fewer than k known predecessors: origin -1 covers them
    Ok(preds)
}
