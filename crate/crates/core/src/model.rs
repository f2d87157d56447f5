//! Photon-number-resolved arrival-time model.
//!
//! Component `n` is an EMG centred at `t0 + delta_mu / sqrt(n)`, so higher
//! photon numbers arrive earlier. Its Gaussian width is the quadrature sum of
//! the jitter budget, and its exponential constant follows a per-n rule.
//! Clicks are mixed with click-conditioned Poisson weights; photon numbers
//! above `n_max` share the `n_max` component.

use libm::lgamma as ln_gamma;
use serde::{Deserialize, Serialize};

use crate::emg::EmgParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingLaw {
    Constant,
    InverseSqrtN,
}

/// How a jitter contribution (or `tau`) depends on the photon number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPhotonRule {
    Scalar(f64),
    Law { value: f64, law: ScalingLaw },
    /// Explicit values for n = 1, 2, ...
    List(Vec<f64>),
}

impl Default for PerPhotonRule {
    fn default() -> Self {
        PerPhotonRule::Scalar(0.0)
    }
}

impl From<f64> for PerPhotonRule {
    fn from(v: f64) -> Self {
        PerPhotonRule::Scalar(v)
    }
}

impl PerPhotonRule {
    pub fn constant(value: f64) -> Self {
        PerPhotonRule::Law { value, law: ScalingLaw::Constant }
    }

    pub fn inverse_sqrt_n(value: f64) -> Self {
        PerPhotonRule::Law { value, law: ScalingLaw::InverseSqrtN }
    }

    /// Value of the rule at photon number `n >= 1`.
    pub fn at(&self, n: usize) -> f64 {
        match self {
            PerPhotonRule::Scalar(v) => *v,
            PerPhotonRule::Law { value, law: ScalingLaw::Constant } => *value,
            PerPhotonRule::Law { value, law: ScalingLaw::InverseSqrtN } => value / (n as f64).sqrt(),
            PerPhotonRule::List(vals) => vals[n - 1],
        }
    }

    /// Value at n = 1. For scalar and law rules this is the free parameter.
    pub fn base_value(&self) -> Option<f64> {
        match self {
            PerPhotonRule::Scalar(v) | PerPhotonRule::Law { value: v, .. } => Some(*v),
            PerPhotonRule::List(_) => None,
        }
    }

    /// Same law with a new n = 1 value. Explicit lists cannot be rescaled this way.
    pub fn with_base_value(&self, v: f64) -> Option<Self> {
        match self {
            PerPhotonRule::Scalar(_) => Some(PerPhotonRule::Scalar(v)),
            PerPhotonRule::Law { law, .. } => Some(PerPhotonRule::Law { value: v, law: *law }),
            PerPhotonRule::List(_) => None,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            PerPhotonRule::Scalar(v) => PerPhotonRule::Scalar(v * c),
            PerPhotonRule::Law { value, law } => PerPhotonRule::Law { value: value * c, law: *law },
            PerPhotonRule::List(vals) => PerPhotonRule::List(vals.iter().map(|v| v * c).collect()),
        }
    }

    fn validate(&self, name: &str, n_max: usize) -> Result<()> {
        let check = |v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be ≥ 0")))
            }
        };
        match self {
            PerPhotonRule::Scalar(v) | PerPhotonRule::Law { value: v, .. } => check(*v),
            PerPhotonRule::List(vals) => {
                if vals.len() < n_max {
                    return Err(Error::InvalidConfig(format!(
                        "{name} list has {} entries, need n_max = {n_max}",
                        vals.len()
                    )));
                }
                vals.iter().try_for_each(|&v| check(v))
            }
        }
    }
}

/// Independent Gaussian timing-jitter contributions, combined in quadrature.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JitterBudget {
    #[serde(default)]
    pub noise: PerPhotonRule,
    #[serde(default)]
    pub inst: PerPhotonRule,
    #[serde(default)]
    pub opt: PerPhotonRule,
    #[serde(default)]
    pub geom: PerPhotonRule,
    #[serde(default)]
    pub intrinsic: PerPhotonRule,
}

impl JitterBudget {
    pub fn contributions(&self, n: usize) -> [f64; 5] {
        [
            self.noise.at(n),
            self.inst.at(n),
            self.opt.at(n),
            self.geom.at(n),
            self.intrinsic.at(n),
        ]
    }

    pub fn sigma(&self, n: usize) -> f64 {
        self.contributions(n).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            noise: self.noise.scaled(c),
            inst: self.inst.scaled(c),
            opt: self.opt.scaled(c),
            geom: self.geom.scaled(c),
            intrinsic: self.intrinsic.scaled(c),
        }
    }

    fn validate(&self, n_max: usize) -> Result<()> {
        self.noise.validate("jitter noise", n_max)?;
        self.inst.validate("jitter inst", n_max)?;
        self.opt.validate("jitter opt", n_max)?;
        self.geom.validate("jitter geom", n_max)?;
        self.intrinsic.validate("jitter intrinsic", n_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnrModel {
    pub t0: f64,
    pub delta_mu: f64,
    pub jitter: JitterBudget,
    pub tau: PerPhotonRule,
    pub n_max: usize,
}

impl PnrModel {
    pub fn new(
        t0: f64,
        delta_mu: f64,
        jitter: JitterBudget,
        tau: PerPhotonRule,
        n_max: usize,
    ) -> Result<Self> {
        let m = Self { t0, delta_mu, jitter, tau, n_max };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() {
            return Err(Error::domain("t0 must be finite"));
        }
        if !(self.delta_mu > 0.0) || !self.delta_mu.is_finite() {
            return Err(Error::domain("delta_mu must be > 0"));
        }
        if self.n_max < 2 {
            return Err(Error::InvalidConfig("n_max must be ≥ 2".into()));
        }
        self.jitter.validate(self.n_max)?;
        self.tau.validate("tau", self.n_max)
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_max {
            Err(Error::Range { n, n_max: self.n_max })
        } else {
            Ok(())
        }
    }

    /// Peak-center parameter `t0 + delta_mu / sqrt(n)`.
    pub fn mu_n(&self, n: usize) -> f64 {
        self.t0 + self.delta_mu / (n as f64).sqrt()
    }

    /// `mu_n - mu_{n+1}`.
    pub fn separation(&self, n: usize) -> f64 {
        let a = (n as f64).sqrt();
        let b = ((n + 1) as f64).sqrt();
        // delta_mu (1/a - 1/b), arranged to avoid cancellation at large n
        self.delta_mu * (b - a) / (a * b)
    }

    /// Gaussian width of component `n` from the jitter budget.
    pub fn sigma_n(&self, n: usize) -> Result<f64> {
        self.check_n(n)?;
        Ok(self.jitter.sigma(n))
    }

    pub fn tau_n(&self, n: usize) -> Result<f64> {
        self.check_n(n)?;
        Ok(self.tau.at(n))
    }

    pub fn sigma_tot_n(&self, n: usize) -> Result<f64> {
        Ok(self.component(n)?.sigma_tot())
    }

    pub fn component(&self, n: usize) -> Result<EmgParams> {
        self.check_n(n)?;
        EmgParams::new(self.mu_n(n), self.jitter.sigma(n), self.tau.at(n))
    }

    /// Components for n = 1..=n_max.
    pub fn components(&self) -> Result<Vec<EmgParams>> {
        (1..=self.n_max).map(|n| self.component(n)).collect()
    }

    /// Every time parameter multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            t0: self.t0 * c,
            delta_mu: self.delta_mu * c,
            jitter: self.jitter.scaled(c),
            tau: self.tau.scaled(c),
            n_max: self.n_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonSource {
    pub mean_photon: f64,
}

impl PhotonSource {
    pub fn new(mean_photon: f64) -> Result<Self> {
        if !(mean_photon > 0.0) || !mean_photon.is_finite() {
            return Err(Error::domain("mean_photon must be > 0"));
        }
        Ok(Self { mean_photon })
    }

    /// Probability that a pulse produces a click, `1 - exp(-mean)`.
    pub fn click_probability(&self) -> f64 {
        -(-self.mean_photon).exp_m1()
    }

    /// `P(N = n | N >= 1)` for n = 1..n_max-1, then the overflow mass
    /// `P(N >= n_max | N >= 1)` as the last entry.
    pub fn click_weights(&self, n_max: usize) -> Result<Vec<f64>> {
        if n_max < 1 {
            return Err(Error::InvalidConfig("n_max must be ≥ 1".into()));
        }
        let m = self.mean_photon;
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::domain("mean_photon must be > 0"));
        }
        let ln_norm = self.click_probability().ln();
        let mut weights: Vec<f64> = (1..n_max)
            .map(|n| {
                let n = n as f64;
                (-m + n * m.ln() - ln_gamma(n + 1.0) - ln_norm).exp()
            })
            .collect();
        // Rounding can push the explicit terms a few ulps past 1. Trim the
        // largest one until they fit; summing is monotone in each term.
        let mut head: f64 = weights.iter().sum();
        if head > 1.0 {
            let big = (0..weights.len()).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap_or(0);
            while head > 1.0 {
                weights[big] = weights[big].next_down();
                head = weights.iter().sum();
            }
        }
        // head + fl(1 - head) rounds to exactly 1 for any head in [0, 1]
        weights.push(1.0 - head);
        Ok(weights)
    }
}

/// A model paired with a source: the full click-time distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub components: Vec<EmgParams>,
    pub weights: Vec<f64>,
}

impl Mixture {
    pub fn new(model: &PnrModel, source: &PhotonSource) -> Result<Self> {
        Ok(Self {
            components: model.components()?,
            weights: source.click_weights(model.n_max)?,
        })
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.pdf(t))
            .sum()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.cdf(t))
            .sum()
    }

    pub fn interval_prob(&self, lo: f64, hi: f64) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.interval_prob(lo, hi))
            .sum()
    }
}

/// Density of the click-conditioned mixture at `t`.
pub fn mixture_pdf(model: &PnrModel, source: &PhotonSource, t: f64) -> Result<f64> {
    Ok(Mixture::new(model, source)?.pdf(t))
}

/// Model configuration file.
///
/// ```json
/// { "t0_ps": 0, "delta_mu_ps": 100, "tau_ps": 0,
///   "jitter_ps": { "noise": 3, "intrinsic": { "value": 4, "law": "inverse-sqrt-n" } },
///   "n_max": 6, "mean_photon": 1.5 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub t0_ps: f64,
    pub delta_mu_ps: f64,
    pub tau_ps: PerPhotonRule,
    #[serde(default)]
    pub jitter_ps: JitterBudget,
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_photon: Option<f64>,
}

impl ModelConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn model(&self) -> Result<PnrModel> {
        PnrModel::new(
            self.t0_ps,
            self.delta_mu_ps,
            self.jitter_ps.clone(),
            self.tau_ps.clone(),
            self.n_max,
        )
    }

    pub fn source(&self) -> Result<PhotonSource> {
        let m = self
            .mean_photon
            .ok_or_else(|| Error::InvalidConfig("mean_photon is required".into()))?;
        PhotonSource::new(m)
    }

    pub fn from_parts(model: &PnrModel, source: Option<&PhotonSource>) -> Self {
        Self {
            t0_ps: model.t0,
            delta_mu_ps: model.delta_mu,
            tau_ps: model.tau.clone(),
            jitter_ps: model.jitter.clone(),
            n_max: model.n_max,
            mean_photon: source.map(|s| s.mean_photon),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(noise: f64, inst: f64, opt: f64, geom: PerPhotonRule, intrinsic: PerPhotonRule) -> JitterBudget {
        JitterBudget { noise: noise.into(), inst: inst.into(), opt: opt.into(), geom, intrinsic }
    }

    fn model(delta_mu: f64, jitter: JitterBudget) -> PnrModel {
        PnrModel::new(0.0, delta_mu, jitter, 0.0.into(), 6).unwrap()
    }

    #[test]
    fn sigma_three_four_five() {
        let m = model(100.0, budget(3.0, 4.0, 0.0, 0.0.into(), 0.0.into()));
        for n in 1..=6 {
            assert_eq!(m.sigma_n(n).unwrap(), 5.0);
        }
    }

    #[test]
    fn sigma_single_contribution() {
        let m = model(100.0, budget(0.0, 0.0, 0.0, 0.0.into(), PerPhotonRule::constant(7.0)));
        assert_eq!(m.sigma_n(2).unwrap(), 7.0);
        let m = model(100.0, budget(0.0, 0.0, 0.0, PerPhotonRule::inverse_sqrt_n(6.0), 0.0.into()));
        assert_eq!(m.sigma_n(4).unwrap(), 3.0);
    }

    #[test]
    fn out_of_range_photon_number() {
        let m = model(100.0, budget(1.0, 0.0, 0.0, 0.0.into(), 0.0.into()));
        assert_eq!(m.sigma_n(0), Err(Error::Range { n: 0, n_max: 6 }));
        assert_eq!(m.component(7).unwrap_err(), Error::Range { n: 7, n_max: 6 });
    }

    #[test]
    fn peak_centers() {
        let m = model(100.0, budget(1.0, 0.0, 0.0, 0.0.into(), 0.0.into()));
        assert_eq!(m.component(1).unwrap().mu, 100.0);
        assert_eq!(m.component(4).unwrap().mu, 50.0);
        let d = m.mu_n(1) - m.mu_n(2);
        assert!((d - 100.0 * (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        assert!((d - 29.289_321_881_345_25).abs() < 1e-9);
        assert!((m.separation(1) - d).abs() < 1e-12);
    }

    #[test]
    fn explicit_list_must_cover_n_max() {
        let j = budget(0.0, 0.0, 0.0, 0.0.into(), PerPhotonRule::List(vec![1.0, 2.0]));
        assert!(matches!(
            PnrModel::new(0.0, 10.0, j, 0.0.into(), 3),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn rejects_bad_model_parameters() {
        let j = budget(1.0, 0.0, 0.0, 0.0.into(), 0.0.into());
        assert!(PnrModel::new(0.0, 0.0, j.clone(), 0.0.into(), 4).is_err());
        assert!(PnrModel::new(0.0, 10.0, j.clone(), (-1.0).into(), 4).is_err());
        assert!(PnrModel::new(0.0, 10.0, j, 0.0.into(), 1).is_err());
    }

    #[test]
    fn click_weights_closed_form() {
        let w = PhotonSource::new(1.0).unwrap().click_weights(30).unwrap();
        let e = (-1.0f64).exp();
        assert!((w[0] - e / (1.0 - e)).abs() < 1e-15);
        assert!((w[0] - 0.58198).abs() < 1e-5);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn click_weights_vanishing_mean() {
        let w = PhotonSource::new(1e-9).unwrap().click_weights(4).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-8);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn click_weights_reject_nonpositive_mean() {
        assert!(PhotonSource::new(0.0).is_err());
        assert!(PhotonSource { mean_photon: -1.0 }.click_weights(3).is_err());
    }

    #[test]
    fn overflow_bucket_is_poisson_tail() {
        let mean = 2.5f64;
        let w = PhotonSource::new(mean).unwrap().click_weights(3).unwrap();
        let p0 = (-mean).exp();
        let p1 = p0 * mean;
        let p2 = p1 * mean / 2.0;
        let tail = (1.0 - p0 - p1 - p2) / (1.0 - p0);
        assert!((w[2] - tail).abs() < 1e-14);
    }

    #[test]
    fn equal_weight_mixture_is_hand_sum() {
        // mean chosen so that P(1|click) = 1/2 exactly with n_max = 2
        // e^-m m / (1 - e^-m) = 1/2  <=>  2m = e^m - 1
        let mut lo = 1.0f64;
        let mut hi = 2.0f64;
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if 2.0 * m > m.exp() - 1.0 { lo = m } else { hi = m }
        }
        let s = PhotonSource::new(lo).unwrap();
        let m = PnrModel::new(0.0, 30.0, budget(2.0, 0.0, 0.0, 0.0.into(), 0.0.into()), 1.0.into(), 2).unwrap();
        let c1 = EmgParams { mu: 30.0, sigma: 2.0, tau: 1.0 };
        let c2 = EmgParams { mu: 30.0 / 2f64.sqrt(), sigma: 2.0, tau: 1.0 };
        for t in [15.0, 21.2, 25.0, 30.0, 33.0] {
            let expected = 0.5 * c1.pdf(t) + 0.5 * c2.pdf(t);
            let got = mixture_pdf(&m, &s, t).unwrap();
            assert!((got - expected).abs() < 1e-12 * expected.max(1e-300));
        }
    }

    #[test]
    fn config_accepts_all_rule_shapes() {
        let json = r#"{
            "t0_ps": 1.0, "delta_mu_ps": 80.0,
            "tau_ps": {"value": 3.0, "law": "constant"},
            "jitter_ps": {"noise": 2, "inst": 2, "opt": 1,
                          "geom": [1, 1, 1, 1],
                          "intrinsic": {"value": 4, "law": "inverse-sqrt-n"}},
            "n_max": 4, "mean_photon": 1.5
        }"#;
        let cfg = ModelConfig::from_json(json).unwrap();
        let m = cfg.model().unwrap();
        assert_eq!(m.jitter.intrinsic.at(4), 2.0);
        assert_eq!(m.jitter.geom.at(3), 1.0);
        assert_eq!(m.tau_n(2).unwrap(), 3.0);
        assert_eq!(cfg.source().unwrap().mean_photon, 1.5);
        let back = ModelConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_rejects_unknown_law() {
        let json = r#"{"t0_ps": 0, "delta_mu_ps": 1, "tau_ps": {"value": 1, "law": "cubic"}, "n_max": 3}"#;
        assert!(ModelConfig::from_json(json).is_err());
    }
}
