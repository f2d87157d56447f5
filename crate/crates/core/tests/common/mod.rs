#![allow(dead_code)]

use pnrres_core::{JitterBudget, PerPhotonRule, PnrModel};

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, eps, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Quadrature over consecutive pieces between sorted break points.
pub fn integrate_pieces(f: &impl Fn(f64) -> f64, points: &[f64], eps: f64) -> f64 {
    points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| integrate(f, w[0], w[1], eps))
        .sum()
}

pub fn constant_model(delta_mu: f64, sigma: f64, tau: f64, n_max: usize) -> PnrModel {
    let jitter = JitterBudget { intrinsic: sigma.into(), ..Default::default() };
    PnrModel::new(0.0, delta_mu, jitter, tau.into(), n_max).unwrap()
}

pub fn budget(noise: f64, inst: f64, opt: f64, geom: PerPhotonRule, intrinsic: PerPhotonRule) -> JitterBudget {
    JitterBudget { noise: noise.into(), inst: inst.into(), opt: opt.into(), geom, intrinsic }
}
