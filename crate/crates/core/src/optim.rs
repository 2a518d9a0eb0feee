//! Derivative-free minimizers: Nelder–Mead simplex and golden-section search.

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop once every vertex lies within this (infinity-norm) distance of the best one.
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_evals: 200, x_tol: 1e-4 }
    }
}

/// Nelder–Mead started from `x0` (whose value `f0` is already known).
///
/// `project` maps every trial point into the feasible domain before it is
/// evaluated. Non-finite objective values count as `+inf`. The returned point
/// is the best one evaluated, so its value never exceeds `f0`.
pub fn nelder_mead<F, P>(
    mut f: F,
    x0: &[f64],
    f0: f64,
    steps: &[f64],
    options: SimplexOptions,
    project: P,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let dim = x0.len();
    let sanitize = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let mut evals = 0usize;
    let mut eval = |x: &mut Vec<f64>, evals: &mut usize| {
        project(x);
        *evals += 1;
        sanitize(f(x))
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), sanitize(f0))];
    for i in 0..dim {
        if evals >= options.max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let v = eval(&mut x, &mut evals);
        simplex.push((x, v));
    }
    if simplex.len() < dim + 1 || dim == 0 {
        return best_of(&simplex, evals);
    }

    while evals < options.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].0.clone();
        let spread = simplex
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < options.x_tol {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect()
        };

        let mut reflected = along(1.0);
        let fr = eval(&mut reflected, &mut evals);
        if fr < simplex[0].1 {
            if evals >= options.max_evals {
                simplex[dim] = (reflected, fr);
                break;
            }
            let mut expanded = along(2.0);
            let fe = eval(&mut expanded, &mut evals);
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
            continue;
        }
        if evals >= options.max_evals {
            break;
        }
        let (mut contracted, outside) =
            if fr < worst.1 { (along(0.5), true) } else { (along(-0.5), false) };
        let fc = eval(&mut contracted, &mut evals);
        let accept = if outside { fc <= fr } else { fc < worst.1 };
        if accept {
            simplex[dim] = (contracted, fc);
            continue;
        }
        // shrink toward the best vertex
        for k in 1..=dim {
            if evals >= options.max_evals {
                break;
            }
            let mut x: Vec<f64> =
                best.iter().zip(&simplex[k].0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let v = eval(&mut x, &mut evals);
            simplex[k] = (x, v);
        }
    }
    best_of(&simplex, evals)
}

fn best_of(simplex: &[(Vec<f64>, f64)], evals: usize) -> Minimum {
    let (x, value) = simplex
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("non-empty simplex");
    Minimum { x, value, evals }
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo).abs() > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
