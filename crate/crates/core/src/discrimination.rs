//! Photon-number classification of arrival times.
//!
//! A [`DecisionRule`] holds `B - 1` strictly decreasing thresholds. Label 1
//! covers the latest times, label `B` everything earlier than the last
//! threshold ("B or more photons"). A time exactly on a threshold gets the
//! later-time, smaller-n label.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emg::{bisect, EmgParams};
use crate::error::{Error, Result};
use crate::model::{PhotonSource, PnrModel};
use crate::montecarlo::TagStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub thresholds: Vec<f64>,
    /// Per threshold: no crossing was bracketed and the midpoint of the two
    /// modes was used instead.
    #[serde(default)]
    pub midpoint_fallback: Vec<bool>,
}

impl DecisionRule {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        let rule = Self { midpoint_fallback: vec![false; thresholds.len()], thresholds };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidConfig("a decision rule needs at least 2 labels".into()));
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("thresholds must be finite".into()));
        }
        if self.thresholds.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig("thresholds must be strictly decreasing".into()));
        }
        Ok(())
    }

    pub fn labels(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// Label in `1..=labels()` for arrival time `t`.
    pub fn label(&self, t: f64) -> usize {
        self.thresholds.partition_point(|&th| th > t) + 1
    }

    /// `[lo, hi)` time interval of `label`.
    pub fn interval(&self, label: usize) -> (f64, f64) {
        let hi = if label == 1 { f64::INFINITY } else { self.thresholds[label - 2] };
        let lo = if label == self.labels() { f64::NEG_INFINITY } else { self.thresholds[label - 1] };
        (lo, hi)
    }
}

fn mode_of(c: &EmgParams) -> Result<f64> {
    if c.is_point_mass() {
        Ok(c.mu)
    } else {
        Ok(c.mode()?.0)
    }
}

/// Maximum-a-posteriori thresholds between adjacent labels.
///
/// Threshold `b` is where `w_b pdf_b` meets the weighted density of label
/// `b + 1`, searched between the two modes. The last label pools every
/// component `n >= B`.
pub fn optimal_thresholds(m: &PnrModel, s: &PhotonSource, labels: usize) -> Result<DecisionRule> {
    if labels < 2 || labels > m.n_max {
        return Err(Error::InvalidConfig(format!("labels must be in 2..={}", m.n_max)));
    }
    let comps = m.components()?;
    let weights = s.click_weights(m.n_max)?;
    let modes: Vec<f64> = comps.iter().map(mode_of).collect::<Result<_>>()?;

    let mut thresholds = Vec::with_capacity(labels - 1);
    let mut fallback = Vec::with_capacity(labels - 1);
    for b in 1..labels {
        let later = &comps[b - 1];
        let w_later = weights[b - 1];
        let earlier: Vec<(EmgParams, f64)> = if b + 1 == labels {
            comps[b..].iter().copied().zip(weights[b..].iter().copied()).collect()
        } else {
            vec![(comps[b], weights[b])]
        };
        let g = |t: f64| {
            let e: f64 = earlier.iter().map(|(c, w)| w * c.pdf(t)).sum();
            w_later * later.pdf(t) - e
        };
        let (lo, hi) = (modes[b], modes[b - 1]);
        let (g_lo, g_hi) = (g(lo), g(hi));
        if lo < hi && g_lo < 0.0 && g_hi > 0.0 {
            let tol = 1e-12 * (hi - lo).max(1e-300);
            thresholds.push(bisect(g, lo, hi, tol));
            fallback.push(false);
        } else {
            thresholds.push(0.5 * (lo + hi));
            fallback.push(true);
        }
    }
    let rule = DecisionRule { thresholds, midpoint_fallback: fallback };
    rule.validate().map_err(|_| Error::NumericalFailure {
        what: "threshold ordering",
        lo: modes[labels - 1],
        hi: modes[0],
    })?;
    Ok(rule)
}

/// `matrix[n - 1][label - 1]`: probability that a click from true photon
/// number `n` receives `label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub matrix: Vec<Vec<f64>>,
    /// Share of clicks with each true photon number.
    pub row_weights: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.len()
    }

    pub fn labels(&self) -> usize {
        self.matrix.first().map_or(0, Vec::len)
    }

    /// The label a perfect classifier would give photon number `n`.
    pub fn correct_label(&self, n: usize) -> usize {
        n.min(self.labels())
    }

    /// Weighted probability that a click is mislabeled.
    pub fn total_error(&self) -> f64 {
        self.matrix
            .iter()
            .zip(&self.row_weights)
            .enumerate()
            .map(|(i, (row, w))| w * (1.0 - row[self.correct_label(i + 1) - 1]))
            .sum()
    }

    /// `P(label 1 | true n >= 2)`: multi-photon clicks passed off as singles.
    pub fn multi_as_single(&self) -> f64 {
        let (num, den) = self
            .matrix
            .iter()
            .zip(&self.row_weights)
            .skip(1)
            .fold((0.0, 0.0), |(num, den), (row, w)| (num + w * row[0], den + w));
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

/// Analytic confusion matrix of `rule` under the model, one row per
/// component `1..=n_max` (the last row stands for every `n >= n_max`).
pub fn confusion(m: &PnrModel, s: &PhotonSource, rule: &DecisionRule) -> Result<ConfusionMatrix> {
    rule.validate()?;
    let comps = m.components()?;
    let matrix = comps
        .par_iter()
        .map(|c| {
            // P(X < t) at each threshold, latest first; labels telescope
            let below: Vec<f64> = rule.thresholds.iter().map(|&t| c.prob_below(t)).collect();
            let mut row = Vec::with_capacity(rule.labels());
            row.push(1.0 - below[0]);
            for w in below.windows(2) {
                row.push(w[0] - w[1]);
            }
            row.push(*below.last().unwrap());
            row
        })
        .collect();
    Ok(ConfusionMatrix { matrix, row_weights: s.click_weights(m.n_max)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub labels: Vec<usize>,
    /// `counts[n - 1][label - 1]`.
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized counts; rows without tags stay zero.
    pub empirical: ConfusionMatrix,
}

/// Labels each tag and tallies the empirical confusion matrix against the
/// recorded photon numbers. The matrix has `max(max true_n, labels)` rows.
pub fn classify_tags(tags: &TagStream, rule: &DecisionRule) -> Result<Classification> {
    rule.validate()?;
    let labels: Vec<usize> = tags.records.iter().map(|r| rule.label(r.arrival)).collect();
    let rows = tags
        .records
        .iter()
        .map(|r| r.true_n)
        .max()
        .unwrap_or(0)
        .max(rule.labels());
    let mut counts = vec![vec![0u64; rule.labels()]; rows];
    for (r, &l) in tags.records.iter().zip(&labels) {
        if r.true_n == 0 {
            return Err(Error::Format(format!("shot {} has true_n = 0", r.shot_index)));
        }
        counts[r.true_n - 1][l - 1] += 1;
    }
    let total = tags.len() as f64;
    let row_totals: Vec<u64> = counts.iter().map(|row| row.iter().sum()).collect();
    let matrix = counts
        .iter()
        .zip(&row_totals)
        .map(|(row, &n)| {
            row.iter()
                .map(|&c| if n > 0 { c as f64 / n as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let row_weights = row_totals
        .iter()
        .map(|&n| if total > 0.0 { n as f64 / total } else { 0.0 })
        .collect();
    Ok(Classification { labels, counts, empirical: ConfusionMatrix { matrix, row_weights } })
}
