//! Output-directory handling and the CLI-only file formats.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use pnrres_core::resolvability::{CurvePoint, DensityGrid};
use pnrres_core::{FwhmResult, ResolvabilityReport};
use serde::Serialize;

/// Every file a command writes goes through here, so nothing lands outside
/// the output directory.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    /// `name` must be a bare file name: no directories, no `..`.
    pub fn path(&self, name: &str) -> Result<PathBuf> {
        let mut parts = Path::new(name).components();
        match (parts.next(), parts.next()) {
            (Some(Component::Normal(_)), None) => Ok(self.root.join(name)),
            _ => bail!("output name {name:?} must be a plain file name inside --output-dir"),
        }
    }

    pub fn write_with(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
        let path = self.path(name)?;
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report_csv(w: &mut dyn Write, r: &ResolvabilityReport) -> Result<()> {
    writeln!(w, "n,mu_ps,separation_ps,fwhm_ps,sigma_tot_ps,exact_ok,gaussian_ok,gaussian_validity_violated")?;
    for row in &r.per_n {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.n,
            row.mu_n,
            row.separation,
            opt(row.fwhm_n),
            row.sigma_tot_n,
            row.exact_ok.map(|b| b.to_string()).unwrap_or_default(),
            row.gaussian_ok,
            row.gaussian_validity_violated
        )?;
    }
    Ok(())
}

pub fn curve_rows(curves: &[CurvePoint], value: impl Fn(&CurvePoint) -> f64) -> Vec<(usize, f64)> {
    curves.iter().map(|c| (c.n, value(c))).collect()
}

/// One row per time: `t_ps,n1,n2,...`.
pub fn write_density_csv(w: &mut dyn Write, g: &DensityGrid) -> Result<()> {
    write!(w, "t_ps")?;
    for n in 1..=g.densities.len() {
        write!(w, ",n{n}")?;
    }
    writeln!(w)?;
    for (i, t) in g.times.iter().enumerate() {
        write!(w, "{t}")?;
        for col in &g.densities {
            write!(w, ",{}", col[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub const FWHM_HEADER: &str = "n,mode_ps,peak_height_per_ps,left_half_ps,right_half_ps,fwhm_ps";

fn fwhm_row(w: &mut dyn Write, label: &str, f: &FwhmResult) -> Result<()> {
    writeln!(w, "{label},{},{},{},{},{}", f.mode, f.peak_height, f.left_half, f.right_half, f.fwhm)?;
    Ok(())
}

pub fn write_markers_csv(w: &mut dyn Write, markers: &[FwhmResult]) -> Result<()> {
    writeln!(w, "{FWHM_HEADER}")?;
    for (i, f) in markers.iter().enumerate() {
        fwhm_row(w, &(i + 1).to_string(), f)?;
    }
    Ok(())
}

pub fn write_fwhm_csv(w: &mut dyn Write, f: &FwhmResult) -> Result<()> {
    writeln!(w, "mode_ps,peak_height_per_ps,left_half_ps,right_half_ps,fwhm_ps")?;
    writeln!(w, "{},{},{},{},{}", f.mode, f.peak_height, f.left_half, f.right_half, f.fwhm)?;
    Ok(())
}

/// `matrix,true_n,label_1,...` rows of a matrix, optionally with the header.
pub fn write_matrix_csv(w: &mut dyn Write, name: &str, m: &[Vec<f64>], header: bool) -> Result<()> {
    if header {
        let labels = m.first().map_or(0, Vec::len);
        write!(w, "matrix,true_n")?;
        for l in 1..=labels {
            write!(w, ",label_{l}")?;
        }
        writeln!(w)?;
    }
    for (n, row) in m.iter().enumerate() {
        write!(w, "{name},{}", n + 1)?;
        for p in row {
            write!(w, ",{p}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
