//! Box-bounded Nelder-Mead simplex minimizer.
//!
//! The search runs in the unit cube: every coordinate is mapped affinely from
//! `[lower, upper]` to `[0, 1]` and trial points are projected back into the
//! cube. Non-finite objective values are treated as `+inf`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop when `f_worst - f_best <= ftol * |f_best|` ...
    pub ftol: f64,
    /// ... and every vertex is within `xtol` of the best one (unit-cube units).
    pub xtol: f64,
    pub max_iter: usize,
    /// Edge length of the initial simplex in unit-cube units.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { ftol: 1e-8, xtol: 1e-7, max_iter: 2000, initial_step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub best_history: Vec<f64>,
}

struct Cube<'a> {
    lower: &'a [f64],
    upper: &'a [f64],
}

impl Cube<'_> {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(self.upper))
            .map(|(&u, (&lo, &hi))| lo + u.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    fn to_u(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(self.upper))
            .map(|(&x, (&lo, &hi))| ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// Panics if the slices differ in length or a lower bound is not below its
/// upper bound.
pub fn minimize_bounded(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadOutcome {
    let dim = x0.len();
    assert!(lower.len() == dim && upper.len() == dim);
    assert!(lower.iter().zip(upper).all(|(lo, hi)| lo < hi));
    let cube = Cube { lower, upper };
    let eval = |u: &[f64]| {
        let v = f(&cube.to_x(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let u0 = cube.to_u(x0);
    if dim == 0 {
        return NelderMeadOutcome {
            f: eval(&u0),
            x: Vec::new(),
            iterations: 0,
            converged: true,
            best_history: Vec::new(),
        };
    }

    let mut simplex: Vec<Vec<f64>> = vec![u0.clone()];
    for i in 0..dim {
        let mut v = u0.clone();
        v[i] = if v[i] + opts.initial_step <= 1.0 {
            v[i] + opts.initial_step
        } else {
            v[i] - opts.initial_step
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let project = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|c| c.clamp(0.0, 1.0)).collect() };
    let affine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        // a + t (b - a)
        a.iter().zip(b).map(|(&a, &b)| a + t * (b - a)).collect()
    };

    while iterations < opts.max_iter {
        // order vertices, best first; stable sort keeps ties deterministic
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[dim];
        let spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= opts.ftol * best.abs().max(f64::MIN_POSITIVE) && spread <= opts.xtol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }

        let reflected = project(affine(&centroid, &simplex[dim], -1.0));
        let f_r = eval(&reflected);
        if f_r < values[0] {
            let expanded = project(affine(&centroid, &simplex[dim], -2.0));
            let f_e = eval(&expanded);
            if f_e < f_r {
                simplex[dim] = expanded;
                values[dim] = f_e;
            } else {
                simplex[dim] = reflected;
                values[dim] = f_r;
            }
        } else if f_r < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = f_r;
        } else {
            let (contracted, f_c) = if f_r < values[dim] {
                let c = project(affine(&centroid, &reflected, 0.5));
                let fc = eval(&c);
                (c, fc)
            } else {
                let c = affine(&centroid, &simplex[dim], 0.5);
                let fc = eval(&c);
                (c, fc)
            };
            if f_c < values[dim].min(f_r) {
                simplex[dim] = contracted;
                values[dim] = f_c;
            } else {
                // shrink toward the best vertex
                for i in 1..=dim {
                    simplex[i] = affine(&simplex[0], &simplex[i], 0.5);
                    values[i] = eval(&simplex[i]);
                }
            }
        }
        history.push(values.iter().copied().fold(f64::INFINITY, f64::min));
    }

    let best = (0..=dim)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    NelderMeadOutcome {
        x: cube.to_x(&simplex[best]),
        f: values[best],
        iterations,
        converged,
        best_history: history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let out = minimize_bounded(
            rosenbrock,
            &[-1.2, 1.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &NelderMeadOptions { ftol: 1e-14, xtol: 1e-10, max_iter: 5000, initial_step: 0.05 },
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4, "{:?}", out.x);
    }

    #[test]
    fn respects_active_bound() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let out = minimize_bounded(f, &[0.5, 0.5], &[0.0, 0.0], &[2.0, 1.0], &NelderMeadOptions::default());
        assert!((out.x[0] - 2.0).abs() < 1e-6);
        assert!(out.x[1].abs() < 1e-6);
    }

    #[test]
    fn best_value_never_increases() {
        let out = minimize_bounded(
            rosenbrock,
            &[0.0, 3.0],
            &[-4.0, -4.0],
            &[4.0, 4.0],
            &NelderMeadOptions::default(),
        );
        assert!(out.best_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let out = minimize_bounded(
            rosenbrock,
            &[-1.2, 1.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &NelderMeadOptions { max_iter: 5, ..Default::default() },
        );
        assert!(!out.converged);
        assert_eq!(out.iterations, 5);
    }

    #[test]
    fn nan_objective_is_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let out = minimize_bounded(f, &[0.1], &[-1.0], &[1.0], &NelderMeadOptions::default());
        assert!((out.x[0] - 0.5).abs() < 1e-6);
    }
}
