use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pnrres_core::discrimination::Classification;
use pnrres_core::io::{read_histogram_csv, read_tags_csv, write_curve_csv, write_histogram_csv, write_labeled_csv, write_tags_csv};
use pnrres_core::resolvability::component_density_grid;
use pnrres_core::{
    classify_tags, confusion, figure2_curves, fit_histogram, goodness_of_fit, histogram, optimal_thresholds,
    resolve_exact, simulate_tags, ConfusionMatrix, DecisionRule, EmgParams, FitConfig, FitParameter, GoodnessOfFit,
    Histogram, ModelConfig, PhotonSource, PnrModel, ResolvabilityReport, TagStream,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::files::{self, OutputDir};
use crate::Format;

/// A model config, optionally carrying fit settings next to the model keys.
#[derive(Debug, Deserialize)]
struct RunConfig {
    #[serde(flatten)]
    model: ModelConfig,
    #[serde(default)]
    fit: Option<FitConfig>,
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = files::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| pnrres_core::Error::Format(format!("{}: {e}", path.display())).into())
}

fn load_model(path: &Path) -> Result<(RunConfig, PnrModel)> {
    let cfg = load_config(path)?;
    let m = cfg.model.model()?;
    Ok((cfg, m))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn fwhm(out: &OutputDir, format: Format, mu: f64, sigma: f64, tau: f64, name: Option<&str>) -> Result<()> {
    let p = EmgParams::new(mu, sigma, tau)?;
    let f = p.fwhm()?;
    let mut stdout = std::io::stdout().lock();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut stdout, &f)?;
            writeln!(stdout)?;
        }
        Format::Csv => files::write_fwhm_csv(&mut stdout, &f)?,
    }
    if let Some(name) = name {
        match format {
            Format::Json => out.write_json(name, &f)?,
            Format::Csv => out.write_with(name, |w| files::write_fwhm_csv(w, &f))?,
        };
    }
    Ok(())
}

pub fn resolve(out: &OutputDir, format: Format, config: &Path, name: Option<&str>, grid_points: usize) -> Result<()> {
    let (_, m) = load_model(config)?;
    let report = resolve_exact(&m)?;
    write_report(out, format, &report, name.unwrap_or(match format {
        Format::Json => "resolve_report.json",
        Format::Csv => "resolve_report.csv",
    }))?;

    let curves = figure2_curves(&m)?;
    out.write_with("figure2b_separation.csv", |w| {
        Ok(write_curve_csv(w, "separation_ps", &files::curve_rows(&curves, |c| c.separation))?)
    })?;
    out.write_with("figure2b_fwhm.csv", |w| Ok(write_curve_csv(w, "fwhm_ps", &files::curve_rows(&curves, |c| c.fwhm))?))?;
    let grid = component_density_grid(&m, grid_points)?;
    out.write_with("figure2a_density.csv", |w| files::write_density_csv(w, &grid))?;
    out.write_with("figure2a_fwhm_markers.csv", |w| files::write_markers_csv(w, &grid.markers))?;

    println!(
        "n_resolvable_exact = {}, n_resolvable_gaussian = {}",
        report.n_resolvable_exact.unwrap_or(0),
        report.n_resolvable_gaussian
    );
    if report.gaussian_validity_violated() {
        eprintln!("warning: tau exceeds sigma / 10 for some n; the Gaussian-limit verdicts are approximate");
    }
    Ok(())
}

fn write_report(out: &OutputDir, format: Format, report: &ResolvabilityReport, name: &str) -> Result<()> {
    match format {
        Format::Json => out.write_json(name, report)?,
        Format::Csv => out.write_with(name, |w| files::write_report_csv(w, report))?,
    };
    Ok(())
}

/// `[lo, hi)` spanning every value on a grid of `bin_width` anchored at 0.
fn auto_range(values: impl Iterator<Item = f64>, bin_width: f64) -> Result<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    if !lo.is_finite() {
        bail!(pnrres_core::Error::InsufficientData("no tags to histogram; pass --range-ps".into()));
    }
    Ok(((lo / bin_width).floor() * bin_width, ((hi / bin_width).floor() + 1.0) * bin_width))
}

fn bin_tags(tags: &TagStream, bin_width: Option<f64>, range: Option<(f64, f64)>) -> Result<Histogram> {
    let bw = bin_width.unwrap_or(1.0);
    let range = match range {
        Some(r) => r,
        None => auto_range(tags.arrivals(), bw)?,
    };
    Ok(histogram(tags, bw, range)?)
}

#[derive(Serialize)]
struct SimulateSummary {
    shots: u64,
    seed: u64,
    clicks: usize,
    mean_photon: f64,
    n_max: usize,
    files: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    out: &OutputDir,
    format: Format,
    config: &Path,
    seed: u64,
    shots: u64,
    bin_width: Option<f64>,
    range: Option<(f64, f64)>,
    name: Option<&str>,
) -> Result<()> {
    let (cfg, m) = load_model(config)?;
    let s = cfg.model.source()?;
    let tags = simulate_tags(&m, &s, shots, seed)?;
    let tags_name = name.unwrap_or("tags.csv");
    out.write_with(tags_name, |w| Ok(write_tags_csv(w, &tags)?))?;
    let mut written = vec![tags_name.to_string()];
    if bin_width.is_some() || range.is_some() {
        let h = bin_tags(&tags, bin_width, range)?;
        out.write_with("histogram.csv", |w| Ok(write_histogram_csv(w, &h)?))?;
        written.push("histogram.csv".into());
    }
    let summary = SimulateSummary { shots, seed, clicks: tags.len(), mean_photon: s.mean_photon, n_max: m.n_max, files: written };
    match format {
        Format::Json => print_json(&summary)?,
        Format::Csv => println!("shots,seed,clicks\n{},{},{}", summary.shots, summary.seed, summary.clicks),
    }
    Ok(())
}

/// Histogram files start with a `#` metadata line; anything else is read as
/// a tag stream and binned.
fn load_histogram(path: &Path, bin_width: Option<f64>, range: Option<(f64, f64)>) -> Result<Histogram> {
    let mut r = files::open(path)?;
    let first = {
        let buf = r.fill_buf().with_context(|| format!("cannot read {}", path.display()))?;
        buf.first().copied()
    };
    if first == Some(b'#') {
        if bin_width.is_some() || range.is_some() {
            eprintln!("note: {} is already binned; --bin-width-ps/--range-ps are ignored", path.display());
        }
        Ok(read_histogram_csv(r)?)
    } else {
        let tags = read_tags_csv(r)?;
        bin_tags(&tags, bin_width, range)
    }
}

#[derive(Serialize)]
struct ChiSquareSummary {
    chi2: f64,
    dof: usize,
    reduced: f64,
    p_proxy: f64,
    pooled_bins: usize,
}

impl From<GoodnessOfFit> for ChiSquareSummary {
    fn from(g: GoodnessOfFit) -> Self {
        Self { chi2: g.chi2, dof: g.dof, reduced: g.reduced(), p_proxy: g.p_proxy, pooled_bins: g.pooled_bins }
    }
}

#[derive(Serialize)]
struct HistogramSummary {
    bins: usize,
    bin_width_ps: f64,
    range_ps: (f64, f64),
    total: u64,
    underflow: u64,
    overflow: u64,
}

#[derive(Serialize)]
struct FitOutput {
    free_parameters: Vec<FitParameter>,
    estimates: BTreeMap<FitParameter, f64>,
    uncertainty: BTreeMap<FitParameter, Option<f64>>,
    objective: f64,
    converged: bool,
    iterations: usize,
    restart_objectives: Vec<f64>,
    chi2: Option<ChiSquareSummary>,
    histogram: HistogramSummary,
    /// The fitted model, usable as a config file.
    model: ModelConfig,
}

#[allow(clippy::too_many_arguments)]
pub fn fit(
    out: &OutputDir,
    format: Format,
    config: &Path,
    input: &Path,
    seed: Option<u64>,
    bin_width: Option<f64>,
    range: Option<(f64, f64)>,
    name: Option<&str>,
) -> Result<()> {
    let (cfg, m0) = load_model(config)?;
    let s0 = cfg.model.source()?;
    let mut fit_cfg = cfg.fit.unwrap_or_default();
    if let Some(seed) = seed {
        fit_cfg.seed = seed;
    }
    let h = load_histogram(input, bin_width, range)?;
    let r = fit_histogram(&h, &m0, &s0, &fit_cfg)?;
    if !r.converged {
        eprintln!("warning: fit did not converge within {} iterations", fit_cfg.max_iter);
    }
    let free = r.estimates.len();
    let chi2 = match goodness_of_fit(&h, &r.model, &r.source, free) {
        Ok(g) => Some(g.into()),
        Err(e) => {
            eprintln!("warning: no goodness-of-fit summary: {e}");
            None
        }
    };
    let result = FitOutput {
        free_parameters: r.estimates.keys().copied().collect(),
        estimates: r.estimates.clone(),
        uncertainty: r.uncertainty.clone(),
        objective: r.objective,
        converged: r.converged,
        iterations: r.iterations,
        restart_objectives: r.restart_objectives.clone(),
        chi2,
        histogram: HistogramSummary {
            bins: h.bins(),
            bin_width_ps: h.bin_width(),
            range_ps: (h.lo(), h.hi()),
            total: h.total,
            underflow: h.underflow,
            overflow: h.overflow,
        },
        model: ModelConfig::from_parts(&r.model, Some(&r.source)),
    };
    match format {
        Format::Json => {
            out.write_json(name.unwrap_or("fit_result.json"), &result)?;
        }
        Format::Csv => {
            out.write_with(name.unwrap_or("fit_result.csv"), |w| {
                writeln!(w, "parameter,estimate,uncertainty")?;
                for (p, v) in &result.estimates {
                    let u = result.uncertainty.get(p).copied().flatten();
                    writeln!(w, "{},{},{}", p.name(), v, u.map(|x| x.to_string()).unwrap_or_default())?;
                }
                Ok(())
            })?;
        }
    }
    for (p, v) in &result.estimates {
        println!("{} = {v}", p.name());
    }
    if let Some(c) = &result.chi2 {
        println!("chi2/dof = {} ({} dof)", c.reduced, c.dof);
    }
    Ok(())
}

fn choose_rule(m: &PnrModel, s: &PhotonSource, labels: Option<usize>, rule: Option<&Path>) -> Result<DecisionRule> {
    match rule {
        Some(path) => {
            let rule: DecisionRule = serde_json::from_str(&files::read_to_string(path)?)
                .map_err(|e| pnrres_core::Error::Format(format!("{}: {e}", path.display())))?;
            rule.validate()?;
            if labels.is_some_and(|b| b != rule.labels()) {
                bail!(pnrres_core::Error::InvalidConfig("--labels disagrees with the rule file".into()));
            }
            Ok(rule)
        }
        None => {
            let rule = optimal_thresholds(m, s, labels.unwrap_or(m.n_max))?;
            for (i, fallback) in rule.midpoint_fallback.iter().enumerate() {
                if *fallback {
                    eprintln!("warning: no density crossing for threshold {}; using the midpoint of the modes", i + 1);
                }
            }
            Ok(rule)
        }
    }
}

#[derive(Serialize)]
struct ConfusionOutput<'a> {
    labels: usize,
    analytic: &'a ConfusionMatrix,
    analytic_total_error: f64,
    analytic_multi_as_single: f64,
    empirical: &'a ConfusionMatrix,
    empirical_counts: &'a [Vec<u64>],
    tags: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn classify(
    out: &OutputDir,
    format: Format,
    config: &Path,
    input: &Path,
    labels: Option<usize>,
    rule: Option<&Path>,
    name: Option<&str>,
) -> Result<()> {
    let (cfg, m) = load_model(config)?;
    let s = cfg.model.source()?;
    let tags = read_tags_csv(files::open(input)?)?;
    let rule = choose_rule(&m, &s, labels, rule)?;
    let analytic = confusion(&m, &s, &rule)?;
    let Classification { labels: assigned, counts, empirical } = classify_tags(&tags, &rule)?;

    out.write_json("decision_rule.json", &rule)?;
    out.write_with(name.unwrap_or("labeled.csv"), |w| Ok(write_labeled_csv(w, &tags, &assigned)?))?;
    let summary = ConfusionOutput {
        labels: rule.labels(),
        analytic: &analytic,
        analytic_total_error: analytic.total_error(),
        analytic_multi_as_single: analytic.multi_as_single(),
        empirical: &empirical,
        empirical_counts: &counts,
        tags: tags.len(),
    };
    match format {
        Format::Json => {
            out.write_json("confusion.json", &summary)?;
        }
        Format::Csv => {
            out.write_with("confusion.csv", |w| {
                files::write_matrix_csv(w, "analytic", &analytic.matrix, true)?;
                files::write_matrix_csv(w, "empirical", &empirical.matrix, false)?;
                Ok(())
            })?;
        }
    }
    println!(
        "{} tags, {} labels, analytic assignment error {:.6}",
        tags.len(),
        rule.labels(),
        analytic.total_error()
    );
    Ok(())
}

#[derive(Serialize)]
struct FullReport {
    resolvability: ResolvabilityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    classification: Option<ClassificationReport>,
}

#[derive(Serialize)]
struct ClassificationReport {
    mean_photon: f64,
    click_weights: Vec<f64>,
    rule: DecisionRule,
    confusion: ConfusionMatrix,
    total_error: f64,
    multi_as_single: f64,
}

/// Resolvability plus, when the config has a mean photon number, the
/// analytic performance of the MAP classifier.
pub fn report(out: &OutputDir, format: Format, config: &Path, labels: Option<usize>, name: Option<&str>) -> Result<()> {
    let (cfg, m) = load_model(config)?;
    let resolvability = resolve_exact(&m)?;
    let classification = match cfg.model.mean_photon {
        Some(_) => {
            let s = cfg.model.source()?;
            let rule = choose_rule(&m, &s, labels, None)?;
            let cm = confusion(&m, &s, &rule)?;
            Some(ClassificationReport {
                mean_photon: s.mean_photon,
                click_weights: s.click_weights(m.n_max)?,
                total_error: cm.total_error(),
                multi_as_single: cm.multi_as_single(),
                rule,
                confusion: cm,
            })
        }
        None => None,
    };

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:>3} {:>12} {:>12} {:>12} {:>8} {:>8}", "n", "sep_ps", "fwhm_ps", "k*sig_ps", "exact", "gauss")?;
    for row in &resolvability.per_n {
        writeln!(
            stdout,
            "{:>3} {:>12.4} {:>12.4} {:>12.4} {:>8} {:>8}",
            row.n,
            row.separation,
            row.fwhm_n.unwrap_or(f64::NAN),
            resolvability.k_constant * row.sigma_tot_n,
            row.exact_ok.unwrap_or(false),
            row.gaussian_ok
        )?;
    }
    writeln!(
        stdout,
        "resolvable up to n = {} (FWHM), {} (Gaussian limit)",
        resolvability.n_resolvable_exact.unwrap_or(0),
        resolvability.n_resolvable_gaussian
    )?;
    if let Some(c) = &classification {
        writeln!(stdout, "thresholds_ps = {:?}", c.rule.thresholds)?;
        writeln!(stdout, "assignment error = {:.6}, P(label 1 | n >= 2) = {:.6}", c.total_error, c.multi_as_single)?;
    }

    let full = FullReport { resolvability, classification };
    match format {
        Format::Json => {
            out.write_json(name.unwrap_or("report.json"), &full)?;
        }
        Format::Csv => write_report(out, format, &full.resolvability, name.unwrap_or("report.csv"))?,
    }
    Ok(())
}
