//! Stable spline kernels and the stationary RBF kernels derived from them.
//!
//! A stable spline kernel is the covariance of a `q`-fold integrated white
//! noise on `[0, 1]` evaluated through the time warp `t -> exp(-beta t)`:
//!
//! ```text
//! K(s, t) = W_q(exp(-beta s), exp(-beta t))
//! ```
//!
//! If an impulse response `f` has covariance `K` and is driven by unit white
//! noise, the output `xi = e * f` is stationary with covariance `h(s - t)`,
//! where `h` sums (or integrates) `K` along its diagonals. Both families are
//! available in continuous time (arguments `f64`) and discrete time (integer
//! arguments). Discrete kernels can be enriched with a two-pole filter
//! `H(z) = z^2 / (z^2 + phi z + varphi)` convolved into the prior.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Default length of the impulse-response support used in discrete convolutions.
pub const DEFAULT_TRUNCATION: usize = 100;

/// Order `q` of the underlying spline kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum KernelOrder {
    First,
    Second,
}

impl KernelOrder {
    pub fn from_q(q: u32) -> Result<Self> {
        match q {
            1 => Ok(KernelOrder::First),
            2 => Ok(KernelOrder::Second),
            other => Err(Error::UnsupportedOrder(other)),
        }
    }

    pub fn q(self) -> u32 {
        match self {
            KernelOrder::First => 1,
            KernelOrder::Second => 2,
        }
    }
}

impl TryFrom<u32> for KernelOrder {
    type Error = Error;
    fn try_from(q: u32) -> Result<Self> {
        KernelOrder::from_q(q)
    }
}

impl From<KernelOrder> for u32 {
    fn from(order: KernelOrder) -> u32 {
        order.q()
    }
}

/// Denominator coefficients of `H(z) = z^2 / (z^2 + phi z + varphi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Enrichment {
    phi: f64,
    varphi: f64,
}

impl Enrichment {
    /// Fails unless both roots of `z^2 + phi z + varphi` lie strictly inside the unit circle.
    pub fn new(phi: f64, varphi: f64) -> Result<Self> {
        if !Self::in_stability_triangle(phi, varphi) {
            return Err(Error::Unstable(format!(
                "(phi, varphi) = ({phi}, {varphi}) lies outside the stability triangle"
            )));
        }
        Ok(Enrichment { phi, varphi })
    }

    pub fn in_stability_triangle(phi: f64, varphi: f64) -> bool {
        phi.is_finite() && varphi.is_finite() && varphi.abs() < 1.0 && phi.abs() < 1.0 + varphi
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn varphi(&self) -> f64 {
        self.varphi
    }

    /// First `length` samples of the impulse response of `H`.
    pub fn impulse(&self, length: usize) -> Vec<f64> {
        let mut h = vec![0.0; length];
        for k in 0..length {
            let mut v = if k == 0 { 1.0 } else { 0.0 };
            if k >= 1 {
                v -= self.phi * h[k - 1];
            }
            if k >= 2 {
                v -= self.varphi * h[k - 2];
            }
            h[k] = v;
        }
        h
    }
}

/// Kernel family and shape: order, decay rate, optional enrichment and truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    order: KernelOrder,
    beta: f64,
    enrichment: Option<Enrichment>,
    truncation_len: usize,
}

impl KernelSpec {
    pub fn new(q: u32, beta: f64) -> Result<Self> {
        let order = KernelOrder::from_q(q)?;
        Self::with_order(order, beta)
    }

    pub fn with_order(order: KernelOrder, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(KernelSpec { order, beta, enrichment: None, truncation_len: DEFAULT_TRUNCATION })
    }

    pub fn enriched(mut self, phi: f64, varphi: f64) -> Result<Self> {
        self.enrichment = Some(Enrichment::new(phi, varphi)?);
        Ok(self)
    }

    pub fn with_enrichment(mut self, enrichment: Option<Enrichment>) -> Self {
        self.enrichment = enrichment;
        self
    }

    pub fn truncated(mut self, truncation_len: usize) -> Result<Self> {
        if truncation_len == 0 {
            return Err(Error::Domain("truncation length must be at least 1".into()));
        }
        self.truncation_len = truncation_len;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta must be positive and finite, got {beta}")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn order(&self) -> KernelOrder {
        self.order
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn enrichment(&self) -> Option<Enrichment> {
        self.enrichment
    }

    pub fn truncation_len(&self) -> usize {
        self.truncation_len
    }
}

/// Spline kernel `W_q(s, t)` on `[0, 1]`, closed form for `q` in {1, 2}.
pub fn spline_kernel_w(s: f64, t: f64, q: u32) -> Result<f64> {
    check_unit(s)?;
    check_unit(t)?;
    let order = KernelOrder::from_q(q)?;
    Ok(spline_w(order, s, t))
}

fn check_unit(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("spline kernel argument {x} outside [0, 1]")));
    }
    Ok(())
}

fn spline_w(order: KernelOrder, s: f64, t: f64) -> f64 {
    let lo = s.min(t);
    let hi = s.max(t);
    match order {
        KernelOrder::First => lo,
        KernelOrder::Second => hi * lo * lo / 2.0 - lo * lo * lo / 6.0,
    }
}

/// Reference value of `W_q(s, t)` for any `q >= 1` by adaptive quadrature of
/// `G_q(s, u) G_q(t, u)` with `G_q(r, u) = (r - u)_+^{q-1} / (q-1)!`.
pub fn spline_kernel_quadrature_oracle(s: f64, t: f64, q: u32, tol: f64) -> Result<f64> {
    check_unit(s)?;
    check_unit(t)?;
    if q == 0 {
        return Err(Error::UnsupportedOrder(0));
    }
    let factorial: f64 = (1..q).map(f64::from).product();
    let green = move |r: f64, u: f64| {
        let d = r - u;
        if d < 0.0 {
            0.0
        } else if q == 1 {
            1.0
        } else {
            d.powi(q as i32 - 1) / factorial
        }
    };
    // Integrand vanishes beyond min(s, t); the split keeps the kink on a node.
    let edge = s.min(t);
    let inner = quadrature::integrate(|u| green(s, u) * green(t, u), 0.0, edge, tol)?;
    Ok(inner.value)
}

/// Stable spline kernel at non-negative (continuous or integer-valued) times.
///
/// Any enrichment in `spec` is ignored here; see [`enriched_kernel`].
pub fn stable_spline_k(s: f64, t: f64, spec: &KernelSpec) -> Result<f64> {
    if !(s >= 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!("stable spline kernel needs s, t >= 0, got ({s}, {t})")));
    }
    Ok(ss_value(spec.order, spec.beta, s, t))
}

#[inline]
pub(crate) fn ss_value(order: KernelOrder, beta: f64, s: f64, t: f64) -> f64 {
    let m = s.max(t);
    match order {
        KernelOrder::First => (-beta * m).exp(),
        KernelOrder::Second => {
            (-beta * (s + t)).exp() * (-beta * m).exp() / 2.0 - (-3.0 * beta * m).exp() / 6.0
        }
    }
}

/// Continuous-time RBF kernel `h(x) = int_0^inf K(y, y + |x|) dy`.
pub fn rbf_h_continuous(x: f64, spec: &KernelSpec) -> Result<f64> {
    if spec.enrichment.is_some() {
        return Err(Error::Config("enrichment is only available in discrete time".into()));
    }
    Ok(rbf_continuous_value(spec.order, spec.beta, x))
}

fn rbf_continuous_value(order: KernelOrder, beta: f64, x: f64) -> f64 {
    let a = x.abs();
    match order {
        KernelOrder::First => (-beta * a).exp() / beta,
        KernelOrder::Second => {
            (3.0 * (-2.0 * beta * a).exp() - (-3.0 * beta * a).exp()) / (18.0 * beta)
        }
    }
}

/// `sum_{m >= 0} K(m, m + d)` for `d >= 0`.
fn diagonal_sum_from_zero(order: KernelOrder, beta: f64, d: u64) -> f64 {
    let d = d as f64;
    match order {
        KernelOrder::First => (-beta * d).exp() / -(-beta).exp_m1(),
        KernelOrder::Second => {
            (3.0 * (-2.0 * beta * d).exp() - (-3.0 * beta * d).exp()) / 6.0
                / -(-3.0 * beta).exp_m1()
        }
    }
}

/// Discrete-time RBF kernel `h(x) = sum_{j >= 1} K(j, j + |x|)`.
///
/// With enrichment, `K` is the enriched kernel truncated at `spec.truncation_len()`.
pub fn rbf_h_discrete(x: i64, spec: &KernelSpec) -> f64 {
    let lag = x.unsigned_abs();
    match spec.enrichment {
        None => {
            // D(1, d) = D(0, d) - K(0, d)
            diagonal_sum_from_zero(spec.order, spec.beta, lag)
                - ss_value(spec.order, spec.beta, 0.0, lag as f64)
        }
        Some(_) => EnrichedRbf::new(spec, lag as usize).value(lag as usize),
    }
}

/// `h(0), ..., h(max_lag)` of the discrete RBF kernel.
pub fn rbf_lags_discrete(max_lag: usize, spec: &KernelSpec) -> Vec<f64> {
    match spec.enrichment {
        None => (0..=max_lag).map(|x| rbf_h_discrete(x as i64, spec)).collect(),
        Some(_) => {
            let table = EnrichedRbf::new(spec, max_lag);
            (0..=max_lag).map(|x| table.value(x)).collect()
        }
    }
}

/// Precomputed pieces for the enriched RBF kernel.
///
/// With `w(c) = sum_{a - b = c} h(a) h(b)` over the truncated enrichment
/// response and `D0(d) = sum_{m >= 0} K(m, m + d)`:
///
/// ```text
/// h_enr(x) = sum_c w(c) D0(|x + c|) - sum_{b <= min(x, T-1)} h(b) K(0, x - b)
/// ```
struct EnrichedRbf {
    order: KernelOrder,
    beta: f64,
    response: Vec<f64>,
    autocorr: Vec<f64>,
    d0: Vec<f64>,
}

impl EnrichedRbf {
    fn new(spec: &KernelSpec, max_lag: usize) -> Self {
        let enrichment = spec.enrichment.expect("enriched spec");
        let t = spec.truncation_len;
        let response = enrichment.impulse(t);
        let autocorr: Vec<f64> = (0..t)
            .map(|c| (c..t).map(|a| response[a] * response[a - c]).sum())
            .collect();
        let d0 = (0..=(max_lag + t))
            .map(|d| diagonal_sum_from_zero(spec.order, spec.beta, d as u64))
            .collect();
        EnrichedRbf { order: spec.order, beta: spec.beta, response, autocorr, d0 }
    }

    fn value(&self, x: usize) -> f64 {
        let t = self.response.len();
        let mut acc = self.autocorr[0] * self.d0[x];
        for c in 1..t {
            let below = x.abs_diff(c);
            acc += self.autocorr[c] * (self.d0[x + c] + self.d0[below]);
        }
        let edge = x.min(t - 1);
        for b in 0..=edge {
            acc -= self.response[b] * ss_value(self.order, self.beta, 0.0, (x - b) as f64);
        }
        acc
    }
}

/// Impulse response of `H(z) = z^2 / (z^2 + phi z + varphi)`.
pub fn enrichment_impulse(phi: f64, varphi: f64, length: usize) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::Domain("impulse length must be at least 1".into()));
    }
    Ok(Enrichment::new(phi, varphi)?.impulse(length))
}

/// Enriched discrete kernel
/// `sum_{a,b < T} h(a) h(b) K(s - a, t - b)` with `K = 0` off `N x N`.
pub fn enriched_kernel(s: usize, t: usize, spec: &KernelSpec) -> Result<f64> {
    let enrichment = spec
        .enrichment
        .ok_or_else(|| Error::Config("enriched kernel requested without enrichment".into()))?;
    let h = enrichment.impulse(spec.truncation_len);
    let mut acc = 0.0;
    for (a, &ha) in h.iter().enumerate().take(s + 1) {
        for (b, &hb) in h.iter().enumerate().take(t + 1) {
            acc += ha * hb * ss_value(spec.order, spec.beta, (s - a) as f64, (t - b) as f64);
        }
    }
    Ok(acc)
}

/// `T x T` prior covariance of an impulse response over lags `0..T`
/// (enriched when the spec carries an enrichment).
pub fn impulse_gram(spec: &KernelSpec) -> DMatrix<f64> {
    let t = spec.truncation_len;
    let mut k = DMatrix::from_fn(t, t, |i, j| ss_value(spec.order, spec.beta, i as f64, j as f64));
    if let Some(e) = spec.enrichment {
        // H K H^T with H lower-triangular Toeplitz; applied as the all-pole
        // recursion, exact for indices below T.
        for i in 0..t {
            for j in 0..t {
                let mut v = k[(i, j)];
                if i >= 1 {
                    v -= e.phi * k[(i - 1, j)];
                }
                if i >= 2 {
                    v -= e.varphi * k[(i - 2, j)];
                }
                k[(i, j)] = v;
            }
        }
        for j in 0..t {
            for i in 0..t {
                let mut v = k[(i, j)];
                if j >= 1 {
                    v -= e.phi * k[(i, j - 1)];
                }
                if j >= 2 {
                    v -= e.varphi * k[(i, j - 2)];
                }
                k[(i, j)] = v;
            }
        }
        // restore exact symmetry lost to rounding order
        for i in 0..t {
            for j in (i + 1)..t {
                let avg = 0.5 * (k[(i, j)] + k[(j, i)]);
                k[(i, j)] = avg;
                k[(j, i)] = avg;
            }
        }
    }
    k
}

/// `T x T` prior covariance over lags `1..=T`, i.e. `K(i, j)` for `i, j >= 1`:
/// the support of a response with unit delay (same indexing as the RBF sums).
pub fn delayed_impulse_gram(spec: &KernelSpec) -> DMatrix<f64> {
    let t = spec.truncation_len;
    let wide = KernelSpec { truncation_len: t + 1, ..*spec };
    impulse_gram(&wide).view((1, 1), (t, t)).into_owned()
}

/// Symmetric kernel matrix together with the instants it was built on.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub times: Vec<f64>,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries.diagonal().iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest eigenvalue is at least `-1e-8 * n * max_diagonal`.
    pub fn is_psd(&self) -> bool {
        let n = self.len() as f64;
        self.min_eigenvalue() >= -1e-8 * n * self.max_diagonal()
    }
}

fn check_increasing<T: PartialOrd + Copy + std::fmt::Debug>(times: &[T]) -> Result<()> {
    if let Some(w) = times.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::Domain(format!("times must be strictly increasing: {:?}", w)));
    }
    Ok(())
}

/// RBF kernel matrix `[R]_ij = h(t_i - t_j)` on integer instants.
pub fn gram_matrix_rbf(times: &[i64], spec: &KernelSpec) -> Result<GramMatrix> {
    check_increasing(times)?;
    let max_lag = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (b - a) as usize,
        _ => 0,
    };
    let lags = rbf_lags_discrete(max_lag, spec);
    let n = times.len();
    let entries = DMatrix::from_fn(n, n, |i, j| lags[times[i].abs_diff(times[j]) as usize]);
    Ok(GramMatrix { entries, times: times.iter().map(|&t| t as f64).collect() })
}

/// RBF kernel matrix on real-valued instants using the continuous-time `h`.
pub fn gram_matrix_rbf_continuous(times: &[f64], spec: &KernelSpec) -> Result<GramMatrix> {
    check_increasing(times)?;
    if spec.enrichment.is_some() {
        return Err(Error::Config("enrichment is only available in discrete time".into()));
    }
    let n = times.len();
    let entries = DMatrix::from_fn(n, n, |i, j| {
        rbf_continuous_value(spec.order, spec.beta, times[i] - times[j])
    });
    Ok(GramMatrix { entries, times: times.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn spline_closed_forms() {
        close(spline_kernel_w(0.3, 0.7, 1).unwrap(), 0.3, 0.0);
        close(spline_kernel_w(0.5, 0.5, 2).unwrap(), 0.5 * 0.25 / 2.0 - 0.125 / 6.0, 1e-16);
        for q in [1, 2] {
            assert_eq!(spline_kernel_w(0.4, 0.0, q).unwrap(), 0.0);
        }
    }

    #[test]
    fn spline_rejects_bad_input() {
        assert!(matches!(spline_kernel_w(0.1, 0.2, 3), Err(Error::UnsupportedOrder(3))));
        assert!(matches!(spline_kernel_w(-0.1, 0.2, 1), Err(Error::Domain(_))));
        assert!(matches!(spline_kernel_w(0.1, 1.2, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn quadrature_oracle_values() {
        close(spline_kernel_quadrature_oracle(0.3, 0.7, 1, 1e-10).unwrap(), 0.3, 1e-10);
        close(spline_kernel_quadrature_oracle(1.0, 1.0, 2, 1e-10).unwrap(), 1.0 / 3.0, 1e-10);
        for q in 1..5 {
            assert_eq!(spline_kernel_quadrature_oracle(0.0, 0.6, q, 1e-10).unwrap(), 0.0);
        }
        // q = 3 at s = t = 1: int_0^1 (1-u)^4 / 4 du = 1/20
        close(spline_kernel_quadrature_oracle(1.0, 1.0, 3, 1e-12).unwrap(), 0.05, 1e-12);
        assert!(spline_kernel_quadrature_oracle(0.2, 0.3, 2, 0.0).is_err());
    }

    #[test]
    fn stable_spline_values() {
        let first = KernelSpec::new(1, 1.0).unwrap();
        close(stable_spline_k(2.0, 5.0, &first).unwrap(), (-5.0f64).exp(), 1e-16);
        let second = KernelSpec::new(2, 0.37).unwrap();
        close(stable_spline_k(0.0, 0.0, &second).unwrap(), 1.0 / 3.0, 1e-16);
        assert!(matches!(stable_spline_k(-1.0, 0.0, &second), Err(Error::Domain(_))));
    }

    #[test]
    fn stable_spline_matches_spline_oracle() {
        let spec = KernelSpec::new(2, 0.5).unwrap();
        let oracle =
            spline_kernel_quadrature_oracle((-0.5f64).exp(), (-1.0f64).exp(), 2, 1e-10).unwrap();
        close(stable_spline_k(1.0, 2.0, &spec).unwrap(), oracle, 1e-9);
    }

    #[test]
    fn rbf_closed_forms() {
        let spec = KernelSpec::new(1, 2.0).unwrap();
        close(rbf_h_continuous(0.0, &spec).unwrap(), 0.5, 1e-16);
        let spec = KernelSpec::new(2, 1.0).unwrap();
        close(rbf_h_continuous(0.0, &spec).unwrap(), 2.0 / 18.0, 1e-16);

        let ln2 = std::f64::consts::LN_2;
        let first = KernelSpec::new(1, ln2).unwrap();
        close(rbf_h_discrete(0, &first), 1.0, 1e-15);
        close(rbf_h_discrete(1, &first), 0.5, 1e-15);
        close(rbf_h_discrete(-1, &first), 0.5, 1e-15);
        let second = KernelSpec::new(2, ln2).unwrap();
        close(rbf_h_discrete(0, &second), 1.0 / 21.0, 1e-15);
    }

    #[test]
    fn enrichment_impulse_examples() {
        assert_eq!(enrichment_impulse(0.0, 0.0, 3).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(enrichment_impulse(-1.0, 0.25, 4).unwrap(), vec![1.0, 1.0, 0.75, 0.5]);
        assert_eq!(enrichment_impulse(0.5, 0.9, 2).unwrap(), vec![1.0, -0.5]);
        assert!(matches!(enrichment_impulse(2.5, 0.9, 3), Err(Error::Unstable(_))));
        assert!(matches!(enrichment_impulse(0.0, 1.0, 3), Err(Error::Unstable(_))));
    }

    #[test]
    fn identity_enrichment_reduces_to_stable_spline() {
        let plain = KernelSpec::new(2, 0.3).unwrap().truncated(20).unwrap();
        let spec = plain.enriched(0.0, 0.0).unwrap();
        for s in 0..8 {
            for t in 0..8 {
                let a = enriched_kernel(s, t, &spec).unwrap();
                let b = stable_spline_k(s as f64, t as f64, &plain).unwrap();
                close(a, b, 1e-15);
            }
        }
        for x in 0..10 {
            close(rbf_h_discrete(x, &spec), rbf_h_discrete(x, &plain), 1e-14);
        }
    }

    #[test]
    fn enriched_origin_single_term() {
        let spec = KernelSpec::new(1, 0.8).unwrap().enriched(-0.7, 0.2).unwrap();
        close(enriched_kernel(0, 0, &spec).unwrap(), 1.0, 1e-15);
        let plain = KernelSpec::new(1, 0.8).unwrap();
        assert!(matches!(enriched_kernel(0, 0, &plain), Err(Error::Config(_))));
    }

    #[test]
    fn impulse_gram_matches_scalar_enriched_kernel() {
        let spec = KernelSpec::new(2, 0.2).unwrap().truncated(15).unwrap().enriched(-1.2, 0.5).unwrap();
        let k = impulse_gram(&spec);
        for s in 0..15 {
            for t in 0..15 {
                close(k[(s, t)], enriched_kernel(s, t, &spec).unwrap(), 1e-14);
            }
        }
    }

    #[test]
    fn gram_examples() {
        let ln2 = std::f64::consts::LN_2;
        let spec = KernelSpec::new(1, ln2).unwrap();
        let g = gram_matrix_rbf(&[0, 1, 2], &spec).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert!((g.entries - expected).abs().max() < 1e-15);

        let single = gram_matrix_rbf(&[7], &spec).unwrap();
        assert_eq!(single.entries.shape(), (1, 1));
        close(single.entries[(0, 0)], 1.0, 1e-15);

        assert!(gram_matrix_rbf(&[0, 0], &spec).is_err());
        assert!(gram_matrix_rbf(&[], &spec).unwrap().is_empty());
    }

    #[test]
    fn continuous_gram_rejects_enrichment() {
        let spec = KernelSpec::new(1, 1.0).unwrap().enriched(0.1, 0.1).unwrap();
        assert!(gram_matrix_rbf_continuous(&[0.0, 0.5], &spec).is_err());
        assert!(rbf_h_continuous(0.0, &spec).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::new(3, 1.0).is_err());
        assert!(KernelSpec::new(1, 0.0).is_err());
        assert!(KernelSpec::new(1, f64::NAN).is_err());
        assert!(KernelSpec::new(1, 1.0).unwrap().truncated(0).is_err());
        assert!(KernelSpec::new(1, 1.0).unwrap().enriched(1.3, 0.4).is_ok());
        assert!(KernelSpec::new(1, 1.0).unwrap().enriched(1.5, 0.5).is_err());
    }
}
