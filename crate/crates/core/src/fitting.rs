//! Maximum-likelihood fit of the Poisson-weighted EMG mixture to a histogram.
//!
//! The objective is the multinomial negative log-likelihood of the in-range
//! bin counts, with bin probabilities taken from CDF differences and
//! renormalized to the histogram range. Mixture weights always come from
//! `mean_photon`; there are no free per-component amplitudes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{Mixture, PhotonSource, PnrModel};
use crate::montecarlo::Histogram;
use crate::optim::{minimize_bounded, NelderMeadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParameter {
    DeltaMu,
    T0,
    SigmaInt,
    Tau,
    MeanPhoton,
}

impl FitParameter {
    pub const ALL: [FitParameter; 5] = [
        FitParameter::DeltaMu,
        FitParameter::T0,
        FitParameter::SigmaInt,
        FitParameter::Tau,
        FitParameter::MeanPhoton,
    ];

    /// The canonical free set: intrinsic jitter, tail constant, separation scale.
    pub const THREE: [FitParameter; 3] =
        [FitParameter::SigmaInt, FitParameter::Tau, FitParameter::DeltaMu];

    pub fn name(self) -> &'static str {
        match self {
            FitParameter::DeltaMu => "delta_mu",
            FitParameter::T0 => "t0",
            FitParameter::SigmaInt => "sigma_int",
            FitParameter::Tau => "tau",
            FitParameter::MeanPhoton => "mean_photon",
        }
    }
}

/// Externally measured jitter contributions held fixed during a fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedJitter {
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub inst: f64,
    #[serde(default)]
    pub opt: f64,
    #[serde(default)]
    pub geom: f64,
}

fn default_free() -> Vec<FitParameter> {
    FitParameter::THREE.to_vec()
}

fn default_rel_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    2000
}

fn default_restarts() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_free")]
    pub free_parameters: Vec<FitParameter>,
    /// Overrides noise/inst/opt/geom of the starting model when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_jitter: Option<FixedJitter>,
    #[serde(default)]
    pub bounds: BTreeMap<FitParameter, (f64, f64)>,
    #[serde(default)]
    pub initial: BTreeMap<FitParameter, f64>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            free_parameters: default_free(),
            fixed_jitter: None,
            bounds: BTreeMap::new(),
            initial: BTreeMap::new(),
            rel_tol: default_rel_tol(),
            max_iter: default_max_iter(),
            restarts: default_restarts(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_free(free: &[FitParameter]) -> Self {
        Self { free_parameters: free.to_vec(), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: BTreeMap<FitParameter, f64>,
    /// Multinomial negative log-likelihood at the estimates.
    pub objective: f64,
    /// `1 / sqrt(d^2 NLL / dp^2)` per parameter; `None` where the curvature
    /// is not positive (e.g. on a bound).
    pub uncertainty: BTreeMap<FitParameter, Option<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective reached by each restart, in restart order.
    pub restart_objectives: Vec<f64>,
    pub model: PnrModel,
    pub source: PhotonSource,
}

/// Probability of each histogram bin under `mix`, not renormalized.
pub fn bin_probabilities(mix: &Mixture, edges: &[f64]) -> Vec<f64> {
    let mut probs = vec![0.0; edges.len().saturating_sub(1)];
    for (c, &w) in mix.components.iter().zip(&mix.weights) {
        if w == 0.0 {
            continue;
        }
        // (cdf, sf) at each edge; sf only evaluated where cdf > 1/2
        let tails: Vec<(f64, f64)> = edges
            .iter()
            .map(|&e| {
                let f = c.cdf(e);
                if f > 0.5 {
                    (f, c.sf(e))
                } else {
                    (f, 1.0 - f)
                }
            })
            .collect();
        for (p, t) in probs.iter_mut().zip(tails.windows(2)) {
            let mass = if t[0].0 <= 0.5 { t[1].0 - t[0].0 } else { t[0].1 - t[1].1 };
            *p += w * mass.max(0.0);
        }
    }
    probs
}

/// Multinomial NLL of the counts, conditional on landing inside the range.
pub fn negative_log_likelihood(h: &Histogram, model: &PnrModel, source: &PhotonSource) -> Result<f64> {
    let mix = Mixture::new(model, source)?;
    Ok(nll_from_probs(&h.counts, &bin_probabilities(&mix, &h.bin_edges)))
}

fn nll_from_probs(counts: &[u64], probs: &[f64]) -> f64 {
    let in_range: f64 = probs.iter().sum();
    if !(in_range > 0.0) {
        return f64::INFINITY;
    }
    counts
        .iter()
        .zip(probs)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &p)| -(c as f64) * (p / in_range).max(1e-300).ln())
        .sum()
}

fn current_value(p: FitParameter, m: &PnrModel, s: &PhotonSource) -> Result<f64> {
    let v = match p {
        FitParameter::DeltaMu => Some(m.delta_mu),
        FitParameter::T0 => Some(m.t0),
        FitParameter::SigmaInt => m.jitter.intrinsic.base_value(),
        FitParameter::Tau => m.tau.base_value(),
        FitParameter::MeanPhoton => Some(s.mean_photon),
    };
    v.ok_or_else(|| {
        Error::InvalidConfig(format!("{} is an explicit per-n list and cannot be fitted", p.name()))
    })
}

fn default_bounds(p: FitParameter, v: f64, m: &PnrModel) -> (f64, f64) {
    let width = m.jitter.sigma(1).hypot(m.tau.at(1)).max(1e-3 * m.delta_mu);
    match p {
        FitParameter::DeltaMu => (0.25 * v, 4.0 * v),
        FitParameter::T0 => (v - m.delta_mu, v + m.delta_mu),
        FitParameter::SigmaInt | FitParameter::Tau => (0.0, (4.0 * v).max(4.0 * width)),
        FitParameter::MeanPhoton => (1e-3, (4.0 * v).max(10.0)),
    }
}

fn apply(params: &[FitParameter], x: &[f64], m0: &PnrModel, s0: &PhotonSource) -> (PnrModel, PhotonSource) {
    let mut m = m0.clone();
    let mut s = *s0;
    for (&p, &v) in params.iter().zip(x) {
        match p {
            FitParameter::DeltaMu => m.delta_mu = v,
            FitParameter::T0 => m.t0 = v,
            // base_value was checked up front, so these never see a list
            FitParameter::SigmaInt => m.jitter.intrinsic = m.jitter.intrinsic.with_base_value(v).unwrap(),
            FitParameter::Tau => m.tau = m.tau.with_base_value(v).unwrap(),
            FitParameter::MeanPhoton => s.mean_photon = v,
        }
    }
    (m, s)
}

fn objective(
    h: &Histogram,
    params: &[FitParameter],
    x: &[f64],
    m0: &PnrModel,
    s0: &PhotonSource,
) -> f64 {
    let (m, s) = apply(params, x, m0, s0);
    negative_log_likelihood(h, &m, &s).unwrap_or(f64::INFINITY)
}

/// Fits the free parameters of `cfg` to `h`, starting from `m0` / `s0`.
///
/// Restart 0 starts at the initial guess, further restarts at seeded
/// perturbations of it. Restarts run in parallel; the lowest objective wins,
/// ties going to the lower restart index.
pub fn fit_histogram(
    h: &Histogram,
    m0: &PnrModel,
    s0: &PhotonSource,
    cfg: &FitConfig,
) -> Result<FitResult> {
    if h.total == 0 {
        return Err(Error::IllPosedFit("histogram is empty".into()));
    }
    if h.counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::IllPosedFit("all counts fall in a single bin".into()));
    }
    if m0.n_max < 2 {
        return Err(Error::InvalidConfig("n_max must be ≥ 2".into()));
    }
    if !(cfg.rel_tol > 0.0) {
        return Err(Error::InvalidConfig("rel_tol must be > 0".into()));
    }
    let mut m0 = m0.clone();
    if let Some(j) = cfg.fixed_jitter {
        m0.jitter.noise = j.noise.into();
        m0.jitter.inst = j.inst.into();
        m0.jitter.opt = j.opt.into();
        m0.jitter.geom = j.geom.into();
    }
    m0.validate()?;

    let mut params = cfg.free_parameters.clone();
    params.sort();
    params.dedup();

    let mut x0 = Vec::with_capacity(params.len());
    let mut lower = Vec::with_capacity(params.len());
    let mut upper = Vec::with_capacity(params.len());
    for &p in &params {
        let current = current_value(p, &m0, s0)?;
        let v = cfg.initial.get(&p).copied().unwrap_or(current);
        let (lo, hi) = cfg.bounds.get(&p).copied().unwrap_or_else(|| default_bounds(p, v, &m0));
        if !(lo < hi) {
            return Err(Error::InvalidConfig(format!("{}: lower bound must be < upper", p.name())));
        }
        if !(lo..=hi).contains(&v) {
            return Err(Error::InvalidConfig(format!("{}: initial guess {v} outside [{lo}, {hi}]", p.name())));
        }
        x0.push(v);
        lower.push(lo);
        upper.push(hi);
    }

    if params.is_empty() {
        let objective = negative_log_likelihood(h, &m0, s0)?;
        return Ok(FitResult {
            estimates: BTreeMap::new(),
            objective,
            uncertainty: BTreeMap::new(),
            converged: true,
            iterations: 0,
            restart_objectives: Vec::new(),
            model: m0,
            source: *s0,
        });
    }

    let opts = NelderMeadOptions { ftol: cfg.rel_tol, max_iter: cfg.max_iter, ..Default::default() };
    let starts: Vec<Vec<f64>> = (0..cfg.restarts.max(1))
        .map(|r| {
            if r == 0 {
                return x0.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
            x0.iter()
                .zip(lower.iter().zip(&upper))
                .map(|(&v, (&lo, &hi))| {
                    let z: f64 = rng.sample(StandardNormal);
                    (v + 0.1 * z * (hi - lo)).clamp(lo, hi)
                })
                .collect()
        })
        .collect();

    let runs: Vec<_> = starts
        .par_iter()
        .map(|start| {
            minimize_bounded(|x| objective(h, &params, x, &m0, s0), start, &lower, &upper, &opts)
        })
        .collect();

    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].f.total_cmp(&runs[b].f).then(a.cmp(&b)))
        .unwrap();
    let out = &runs[best];
    let (model, source) = apply(&params, &out.x, &m0, s0);

    let curvature = diagonal_curvature(|x| objective(h, &params, x, &m0, s0), &out.x, &lower, &upper);
    let uncertainty = params
        .iter()
        .zip(curvature)
        .map(|(&p, c)| (p, (c > 0.0).then(|| 1.0 / c.sqrt())))
        .collect();

    Ok(FitResult {
        estimates: params.iter().copied().zip(out.x.iter().copied()).collect(),
        objective: out.f,
        uncertainty,
        converged: out.converged,
        iterations: runs.iter().map(|r| r.iterations).sum(),
        restart_objectives: runs.iter().map(|r| r.f).collect(),
        model,
        source,
    })
}

/// Central second differences of `f` along each axis, clipped to the box.
fn diagonal_curvature(f: impl Fn(&[f64]) -> f64, x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let f0 = f(x);
    (0..x.len())
        .map(|i| {
            let h = 1e-4 * (upper[i] - lower[i]);
            if x[i] - h < lower[i] || x[i] + h > upper[i] {
                return f64::NAN;
            }
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            (f(&xp) - 2.0 * f0 + f(&xm)) / (h * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub chi2: f64,
    pub dof: usize,
    /// Upper-tail chi-square probability of `chi2` at `dof`.
    pub p_proxy: f64,
    pub pooled_bins: usize,
}

impl GoodnessOfFit {
    pub fn reduced(&self) -> f64 {
        self.chi2 / self.dof as f64
    }
}

/// Minimum expected count per pooled bin.
pub const MIN_EXPECTED: f64 = 5.0;

/// Pearson chi-square of the histogram against the model.
///
/// Consecutive bins are pooled until each pool expects at least
/// [`MIN_EXPECTED`] counts; a short remainder joins the last pool.
pub fn goodness_of_fit(
    h: &Histogram,
    model: &PnrModel,
    source: &PhotonSource,
    free_parameters: usize,
) -> Result<GoodnessOfFit> {
    let mix = Mixture::new(model, source)?;
    let probs = bin_probabilities(&mix, &h.bin_edges);
    let in_range: f64 = probs.iter().sum();
    if !(in_range > 0.0) {
        return Err(Error::InsufficientData("model puts no mass in the histogram range".into()));
    }
    let total = h.total as f64;

    let mut pools: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in h.counts.iter().zip(&probs) {
        obs += c as f64;
        exp += total * p / in_range;
        if exp >= MIN_EXPECTED {
            pools.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match pools.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => pools.push((obs, exp)),
        }
    }
    if pools.len() < 3 {
        return Err(Error::InsufficientData(format!("only {} pooled bins", pools.len())));
    }
    let dof = pools.len() as i64 - free_parameters as i64 - 1;
    if dof < 1 {
        return Err(Error::InsufficientData(format!(
            "{} pooled bins leave no degrees of freedom for {free_parameters} parameters",
            pools.len()
        )));
    }
    let chi2: f64 = pools.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InsufficientData(e.to_string()))?;
    Ok(GoodnessOfFit {
        chi2,
        dof: dof as usize,
        p_proxy: 1.0 - dist.cdf(chi2),
        pooled_bins: pools.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JitterBudget;
    use crate::montecarlo::{histogram, simulate_tags};

    fn truth() -> (PnrModel, PhotonSource) {
        let jitter = JitterBudget {
            noise: 2.0.into(),
            inst: 2.0.into(),
            opt: 1.0.into(),
            intrinsic: 4.0.into(),
            ..Default::default()
        };
        (
            PnrModel::new(0.0, 80.0, jitter, 3.0.into(), 6).unwrap(),
            PhotonSource::new(1.5).unwrap(),
        )
    }

    /// Counts equal to the rounded expectations of the model.
    fn expected_histogram(m: &PnrModel, s: &PhotonSource, total: f64) -> Histogram {
        let mut h = Histogram::new(1.0, 0.0, 130.0).unwrap();
        let probs = bin_probabilities(&Mixture::new(m, s).unwrap(), &h.bin_edges);
        let norm: f64 = probs.iter().sum();
        h.counts = probs.iter().map(|p| (total * p / norm).round() as u64).collect();
        h.total = h.counts.iter().sum();
        h
    }

    #[test]
    fn bin_probabilities_sum_to_range_mass() {
        let (m, s) = truth();
        let mix = Mixture::new(&m, &s).unwrap();
        let h = Histogram::new(0.5, -50.0, 300.0).unwrap();
        let p: f64 = bin_probabilities(&mix, &h.bin_edges).iter().sum();
        assert!((p - (mix.cdf(300.0) - mix.cdf(-50.0))).abs() < 1e-12);
    }

    #[test]
    fn empty_free_set_is_a_no_op() {
        let (m, s) = truth();
        let h = expected_histogram(&m, &s, 1e5);
        let r = fit_histogram(&h, &m, &s, &FitConfig::with_free(&[])).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.objective, negative_log_likelihood(&h, &m, &s).unwrap());
    }

    #[test]
    fn exact_counts_give_vanishing_chi2() {
        let (m, s) = truth();
        let h = expected_histogram(&m, &s, 1e6);
        let g = goodness_of_fit(&h, &m, &s, 0).unwrap();
        assert!(g.reduced() < 1e-2, "{g:?}");
    }

    #[test]
    fn degenerate_histograms_are_rejected() {
        let (m, s) = truth();
        let mut h = Histogram::new(1.0, 0.0, 10.0).unwrap();
        assert!(matches!(fit_histogram(&h, &m, &s, &FitConfig::default()), Err(Error::IllPosedFit(_))));
        h.counts[3] = 100;
        h.total = 100;
        assert!(matches!(fit_histogram(&h, &m, &s, &FitConfig::default()), Err(Error::IllPosedFit(_))));
    }

    #[test]
    fn too_few_pooled_bins() {
        let (m, s) = truth();
        let mut h = Histogram::new(50.0, 0.0, 150.0).unwrap();
        h.counts = vec![2, 3, 1];
        h.total = 6;
        assert!(matches!(goodness_of_fit(&h, &m, &s, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn initial_guess_must_be_inside_bounds() {
        let (m, s) = truth();
        let h = expected_histogram(&m, &s, 1e4);
        let mut cfg = FitConfig::default();
        cfg.bounds.insert(FitParameter::Tau, (5.0, 10.0));
        assert!(matches!(fit_histogram(&h, &m, &s, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn list_rules_cannot_be_fitted() {
        let (mut m, s) = truth();
        let h = expected_histogram(&m, &s, 1e4);
        m.tau = crate::model::PerPhotonRule::List(vec![3.0; 6]);
        assert!(matches!(
            fit_histogram(&h, &m, &s, &FitConfig::with_free(&[FitParameter::Tau])),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn recovers_parameters_from_expected_counts() {
        let (m, s) = truth();
        let h = expected_histogram(&m, &s, 1e6);
        let mut start = m.clone();
        start.delta_mu = 70.0;
        start.tau = 5.0.into();
        start.jitter.intrinsic = 2.0.into();
        let r = fit_histogram(&h, &start, &s, &FitConfig::default()).unwrap();
        assert!(r.converged);
        for (p, want) in [(FitParameter::DeltaMu, 80.0), (FitParameter::SigmaInt, 4.0), (FitParameter::Tau, 3.0)] {
            let got = r.estimates[&p];
            assert!((got - want).abs() / want < 5e-3, "{p:?}: {got}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (m, s) = truth();
        let tags = simulate_tags(&m, &s, 50_000, 11).unwrap();
        let h = histogram(&tags, 1.0, (0.0, 130.0)).unwrap();
        let a = fit_histogram(&h, &m, &s, &FitConfig::default()).unwrap();
        let b = fit_histogram(&h, &m, &s, &FitConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{"free_parameters": ["sigma_int", "tau", "delta_mu"],
                       "bounds": {"tau": [0, 20]},
                       "fixed_jitter": {"noise": 2, "inst": 2, "opt": 1}}"#;
        let cfg: FitConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.max_iter, 2000);
        assert_eq!(cfg.rel_tol, 1e-8);
        assert_eq!(cfg.bounds[&FitParameter::Tau], (0.0, 20.0));
        let back: FitConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
