//! Maximum resolvable photon number.
//!
//! Photon number `n` is resolved when the distance between its peak center
//! and the next one, `mu_n - mu_{n+1}`, is at least the FWHM of component
//! `n`. The Gaussian-limit variant replaces the FWHM by `k sigma_tot,n` with
//! `k = 2 sqrt(2 ln 2)`, which is only trustworthy while `tau_n << sigma_n`.
//!
//! The reported maximum uses a prefix rule: the largest `n` such that every
//! `m <= n` passes. Per-n flags are kept so gaps in the pass set stay visible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emg::{FwhmResult, GAUSSIAN_FWHM_FACTOR};
use crate::error::{Error, Result};
use crate::model::PnrModel;

/// `tau_n / sigma_n` above which the Gaussian-limit verdict is flagged.
pub const GAUSSIAN_VALIDITY_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvabilityRow {
    pub n: usize,
    pub mu_n: f64,
    pub separation: f64,
    /// `None` when only the Gaussian-limit criterion was evaluated.
    pub fwhm_n: Option<f64>,
    pub sigma_tot_n: f64,
    pub exact_ok: Option<bool>,
    pub gaussian_ok: bool,
    /// `tau_n > 0.1 sigma_n`: the Gaussian limit does not apply.
    pub gaussian_validity_violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvabilityReport {
    pub per_n: Vec<ResolvabilityRow>,
    pub n_resolvable_exact: Option<usize>,
    pub n_resolvable_gaussian: usize,
    pub k_constant: f64,
}

impl ResolvabilityReport {
    /// True if any evaluated n violates the Gaussian-limit precondition.
    pub fn gaussian_validity_violated(&self) -> bool {
        self.per_n.iter().any(|r| r.gaussian_validity_violated)
    }
}

/// Plot-ready row of the separation / FWHM comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub separation: f64,
    pub fwhm: f64,
}

/// `separation >= width`, inclusive at equality.
pub fn criterion_holds(separation: f64, width: f64) -> bool {
    separation >= width
}

fn prefix_count(flags: impl IntoIterator<Item = bool>) -> usize {
    flags.into_iter().take_while(|&ok| ok).count()
}

fn check_n_max(m: &PnrModel) -> Result<()> {
    if m.n_max < 2 {
        return Err(Error::InvalidConfig("n_max must be ≥ 2".into()));
    }
    Ok(())
}

fn gaussian_rows(m: &PnrModel) -> Result<Vec<ResolvabilityRow>> {
    (1..m.n_max)
        .map(|n| {
            let c = m.component(n)?;
            let separation = m.separation(n);
            Ok(ResolvabilityRow {
                n,
                mu_n: c.mu,
                separation,
                fwhm_n: None,
                sigma_tot_n: c.sigma_tot(),
                exact_ok: None,
                gaussian_ok: criterion_holds(separation, GAUSSIAN_FWHM_FACTOR * c.sigma_tot()),
                gaussian_validity_violated: c.tau > GAUSSIAN_VALIDITY_RATIO * c.sigma,
            })
        })
        .collect()
}

/// Gaussian-limit criterion only; no FWHM search is run.
pub fn resolve_gaussian(m: &PnrModel) -> Result<ResolvabilityReport> {
    check_n_max(m)?;
    let per_n = gaussian_rows(m)?;
    let n_resolvable_gaussian = prefix_count(per_n.iter().map(|r| r.gaussian_ok));
    Ok(ResolvabilityReport {
        per_n,
        n_resolvable_exact: None,
        n_resolvable_gaussian,
        k_constant: GAUSSIAN_FWHM_FACTOR,
    })
}

/// FWHM criterion, evaluated for n = 1..n_max-1. The Gaussian-limit columns
/// are filled in as well so both verdicts can be compared.
pub fn resolve_exact(m: &PnrModel) -> Result<ResolvabilityReport> {
    let mut report = resolve_gaussian(m)?;
    let fwhms = component_fwhms(m, m.n_max - 1)?;
    for (row, f) in report.per_n.iter_mut().zip(&fwhms) {
        row.fwhm_n = Some(f.fwhm);
        row.exact_ok = Some(criterion_holds(row.separation, f.fwhm));
    }
    report.n_resolvable_exact = Some(prefix_count(report.per_n.iter().map(|r| r.exact_ok == Some(true))));
    Ok(report)
}

/// FWHM results of components 1..=count, computed in parallel.
pub fn component_fwhms(m: &PnrModel, count: usize) -> Result<Vec<FwhmResult>> {
    (1..=count)
        .into_par_iter()
        .map(|n| m.component(n)?.fwhm())
        .collect()
}

/// Separation and FWHM against n for n = 1..n_max-1.
pub fn figure2_curves(m: &PnrModel) -> Result<Vec<CurvePoint>> {
    check_n_max(m)?;
    let fwhms = component_fwhms(m, m.n_max - 1)?;
    Ok(fwhms
        .iter()
        .enumerate()
        .map(|(i, f)| CurvePoint { n: i + 1, separation: m.separation(i + 1), fwhm: f.fwhm })
        .collect())
}

/// Unit-normalized component densities sampled on a uniform time grid,
/// together with each component's FWHM markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub times: Vec<f64>,
    /// `densities[k][i]` is component `k + 1` at `times[i]`.
    pub densities: Vec<Vec<f64>>,
    pub markers: Vec<FwhmResult>,
}

/// Samples components 1..=n_max on `points` times spanning all peaks.
pub fn component_density_grid(m: &PnrModel, points: usize) -> Result<DensityGrid> {
    if points < 2 {
        return Err(Error::InvalidConfig("density grid needs at least 2 points".into()));
    }
    let comps = m.components()?;
    let lo = comps
        .iter()
        .map(|c| c.bracket().0)
        .fold(f64::INFINITY, f64::min);
    let hi = comps
        .iter()
        .map(|c| c.bracket().1)
        .fold(f64::NEG_INFINITY, f64::max);
    let step = (hi - lo) / (points - 1) as f64;
    let times: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let densities = comps
        .iter()
        .map(|c| times.iter().map(|&t| c.pdf(t)).collect())
        .collect();
    let markers = component_fwhms(m, m.n_max)?;
    Ok(DensityGrid { times, densities, markers })
}
