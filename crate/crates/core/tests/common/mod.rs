//! Independent reference computations used by the integration tests.
//!
//! Nothing here calls into the library's numerical code: kernels are built
//! from their defining sums and integrals, and the imputation oracle forms
//! the regression matrices explicitly.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Compensated summation.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in terms {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `W(x, y)` on `[0, 1]^2`: the spline covariance of order `q`.
pub fn spline_w(x: f64, y: f64, q: u32) -> f64 {
    let m = x.min(y);
    match q {
        1 => m,
        2 => x * y * m / 2.0 - m.powi(3) / 6.0,
        _ => panic!("order {q}"),
    }
}

/// Stable spline kernel as the spline kernel under `x = exp(-beta t)`.
pub fn ss(s: f64, t: f64, q: u32, beta: f64) -> f64 {
    spline_w((-beta * s).exp(), (-beta * t).exp(), q)
}

/// `sum_{j >= 1} K(j, j + |x|)`, summed until the terms stop mattering.
pub fn rbf_dt(x: i64, q: u32, beta: f64) -> f64 {
    let d = x.unsigned_abs() as f64;
    let mut terms = Vec::new();
    let mut j = 1.0;
    loop {
        let term = ss(j, j + d, q, beta);
        terms.push(term);
        if term < 1e-18 * terms[0] || term == 0.0 {
            break;
        }
        j += 1.0;
    }
    kahan_sum(terms)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `int_0^inf K(y, y + |x|) dy`; the integrand is below `exp(-beta y)`, so the
/// tail past `60 / beta` is under `exp(-60) / beta` and dropped.
pub fn rbf_ct(x: f64, q: u32, beta: f64) -> f64 {
    let d = x.abs();
    let f = |y: f64| ss(y, y + d, q, beta);
    let cut = 60.0 / beta;
    // split where most of the mass sits
    let knee = 5.0 / beta;
    simpson(&f, 0.0, knee, 1e-13) + simpson(&f, knee, cut, 1e-13)
}

/// Impulse response of `z^2 / (z^2 + phi z + varphi)` by long division.
pub fn enrichment_response(phi: f64, varphi: f64, len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len];
    for k in 0..len {
        let mut v = if k == 0 { 1.0 } else { 0.0 };
        if k >= 1 {
            v -= phi * h[k - 1];
        }
        if k >= 2 {
            v -= varphi * h[k - 2];
        }
        h[k] = v;
    }
    h
}

/// `sum_{a <= s, b <= t} h(a) h(b) K(s - a, t - b)` with `h` as given (already truncated).
pub fn enriched_ss(s: usize, t: usize, q: u32, beta: f64, h: &[f64]) -> f64 {
    let mut terms = Vec::new();
    for a in 0..=s.min(h.len() - 1) {
        for b in 0..=t.min(h.len() - 1) {
            terms.push(h[a] * h[b] * ss((s - a) as f64, (t - b) as f64, q, beta));
        }
    }
    kahan_sum(terms)
}

/// `sum_{j >= 1} K_enr(j, j + |x|)` with the enrichment response truncated to `h.len()` taps.
pub fn rbf_dt_enriched(x: i64, q: u32, beta: f64, h: &[f64]) -> f64 {
    let d = x.unsigned_abs() as usize;
    let mut terms = Vec::new();
    let mut j = 1;
    let scale = rbf_dt(0, q, beta);
    loop {
        let term = enriched_ss(j, j + d, q, beta, h);
        terms.push(term);
        // past the filter length the terms decay like the plain kernel
        if j > h.len() && ss(j as f64 - h.len() as f64, (j + d) as f64 - h.len() as f64, q, beta) < 1e-18 * scale {
            break;
        }
        j += 1;
    }
    kahan_sum(terms)
}

/// Prior covariance of a unit-delay impulse response over lags `1..=tf`.
pub fn impulse_covariance(tf: usize, q: u32, beta: f64, enrichment: Option<(f64, f64)>) -> DMatrix<f64> {
    match enrichment {
        None => DMatrix::from_fn(tf, tf, |i, j| ss((i + 1) as f64, (j + 1) as f64, q, beta)),
        Some((phi, varphi)) => {
            let h = enrichment_response(phi, varphi, tf + 1);
            DMatrix::from_fn(tf, tf, |i, j| enriched_ss(i + 1, j + 1, q, beta, &h))
        }
    }
}

/// `u(t)` with zeros before `start` and after the record.
pub fn input_at(u: &[f64], start: i64, t: i64) -> f64 {
    let k = t - start;
    if k >= 0 && (k as usize) < u.len() { u[k as usize] } else { 0.0 }
}

/// Output kernel `P(t, s) = sum_l sum_{i,j} u_l(t - i) K(i, j) u_l(s - j)` by brute force.
pub fn output_kernel(inputs: &[Vec<f64>], start: i64, t: i64, s: i64, k: &DMatrix<f64>) -> f64 {
    let tf = k.nrows();
    let mut terms = Vec::new();
    for u in inputs {
        for i in 1..=tf {
            for j in 1..=tf {
                terms.push(input_at(u, start, t - i as i64) * k[(i - 1, j - 1)] * input_at(u, start, s - j as i64));
            }
        }
    }
    kahan_sum(terms)
}

/// Explicit regression matrix: row `t` holds `u_l(t - 1), ..., u_l(t - tf)` for every input.
pub fn regressor(inputs: &[Vec<f64>], start: i64, times: &[i64], tf: usize) -> DMatrix<f64> {
    let m = inputs.len();
    DMatrix::from_fn(times.len(), m * tf, |r, c| {
        let (l, i) = (c / tf, c % tf + 1);
        input_at(&inputs[l], start, times[r] - i as i64)
    })
}

/// `(Phi_m S Phi_o^T + R_m)(Phi_o S Phi_o^T + R)^{-1} y_o` with `S` block diagonal.
pub fn missing_closed(
    inputs: &[Vec<f64>],
    start: i64,
    obs: &[i64],
    y: &[f64],
    miss: &[i64],
    k: &DMatrix<f64>,
    h: impl Fn(i64) -> f64,
) -> DVector<f64> {
    let tf = k.nrows();
    let m = inputs.len();
    let mut sigma = DMatrix::zeros(m * tf, m * tf);
    for l in 0..m {
        sigma.view_mut((l * tf, l * tf), (tf, tf)).copy_from(k);
    }
    let phi_o = regressor(inputs, start, obs, tf);
    let phi_m = regressor(inputs, start, miss, tf);
    let r_oo = DMatrix::from_fn(obs.len(), obs.len(), |i, j| h(obs[i] - obs[j]));
    let r_mo = DMatrix::from_fn(miss.len(), obs.len(), |i, j| h(miss[i] - obs[j]));
    let cov_oo = &phi_o * &sigma * phi_o.transpose() + r_oo;
    let cov_mo = &phi_m * &sigma * phi_o.transpose() + r_mo;
    let c = cov_oo.lu().solve(&DVector::from_column_slice(y)).expect("nonsingular");
    cov_mo * c
}

/// `y^T A^{-1} y` and `log det A` through LU.
pub fn quad_and_log_det(a: &DMatrix<f64>, y: &DVector<f64>) -> (f64, f64) {
    let lu = a.clone().lu();
    let x = lu.solve(y).expect("nonsingular");
    let u = lu.u();
    let log_det = (0..u.nrows()).map(|i| u[(i, i)].abs().ln()).sum();
    (y.dot(&x), log_det)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Median of a non-empty sample.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}
