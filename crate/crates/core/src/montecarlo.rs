//! Synthetic click streams and arrival-time histograms.
//!
//! Shots are generated in fixed-size chunks. Chunk `c` draws from its own
//! ChaCha stream seeded with `seed + c`, so the output depends only on the
//! seed and the shot count, never on how many worker threads ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emg::EmgParams;
use crate::error::{Error, Result};
use crate::model::{PhotonSource, PnrModel};

/// Shots per independently seeded chunk.
pub const CHUNK_SHOTS: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagRecord {
    pub shot_index: u64,
    /// Detected photon number after clamping to `n_max`.
    pub true_n: usize,
    pub arrival: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagStream {
    pub records: Vec<TagRecord>,
}

impl TagStream {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arrivals(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.arrival)
    }
}

fn simulate_chunk(
    comps: &[EmgParams],
    poisson: &Poisson<f64>,
    first_shot: u64,
    shots: u64,
    seed: u64,
) -> Vec<TagRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_max = comps.len();
    let mut out = Vec::new();
    for shot in first_shot..first_shot + shots {
        let photons = poisson.sample(&mut rng) as usize;
        if photons == 0 {
            continue;
        }
        let n = photons.min(n_max);
        let arrival = comps[n - 1].sample_one(&mut rng);
        out.push(TagRecord { shot_index: shot, true_n: n, arrival });
    }
    out
}

/// Simulates `shots` pulses: draw a Poisson photon number, drop empty
/// pulses, clamp to `n_max` and draw an arrival time from that component.
pub fn simulate_tags(
    model: &PnrModel,
    source: &PhotonSource,
    shots: u64,
    seed: u64,
) -> Result<TagStream> {
    let comps = model.components()?;
    let poisson = Poisson::new(source.mean_photon)
        .map_err(|e| Error::domain(format!("mean_photon: {e}")))?;
    let chunks = shots.div_ceil(CHUNK_SHOTS);
    let parts: Vec<Vec<TagRecord>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let first = c * CHUNK_SHOTS;
            let len = CHUNK_SHOTS.min(shots - first);
            simulate_chunk(&comps, &poisson, first, len, seed.wrapping_add(c))
        })
        .collect();
    Ok(TagStream { records: parts.concat() })
}

/// Uniform-bin histogram with left-closed bins `[edge_i, edge_{i+1})`.
///
/// Values outside `[edges[0], edges[last])` go to `underflow` / `overflow`
/// and are not part of `total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    /// Empty histogram over `[lo, hi)`. If the range is not a whole number of
    /// bins the last edge is extended past `hi`.
    pub fn new(bin_width: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::domain("bin width must be > 0"));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain("histogram range must be nonempty"));
        }
        let bins = ((hi - lo) / bin_width * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self::with_bins(bin_width, lo, bins))
    }

    pub(crate) fn with_bins(bin_width: f64, lo: f64, bins: usize) -> Self {
        Self {
            bin_width,
            bin_edges: (0..=bins).map(|i| lo + bin_width * i as f64).collect(),
            counts: vec![0; bins],
            total: 0,
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn lo(&self) -> f64 {
        self.bin_edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.bin_edges.last().unwrap()
    }

    /// Bin containing `t`, or `None` when out of range.
    pub fn bin_index(&self, t: f64) -> Option<usize> {
        let n = self.bins();
        if !(t >= self.lo()) || t >= self.hi() {
            return None;
        }
        let mut i = (((t - self.lo()) / self.bin_width()).floor() as usize).min(n - 1);
        // floating-point guard: settle onto the exact edges
        while i > 0 && t < self.bin_edges[i] {
            i -= 1;
        }
        while i + 1 < n && t >= self.bin_edges[i + 1] {
            i += 1;
        }
        Some(i)
    }

    pub fn fill(&mut self, t: f64) {
        match self.bin_index(t) {
            Some(i) => {
                self.counts[i] += 1;
                self.total += 1;
            }
            None if t >= self.hi() => self.overflow += 1,
            None => self.underflow += 1,
        }
    }

    /// Mean of the in-range data using bin centers.
    pub fn mean(&self) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let sum: f64 = self
            .counts
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(&c, e)| c as f64 * 0.5 * (e[0] + e[1]))
            .sum();
        Some(sum / self.total as f64)
    }

    /// All time parameters multiplied by `c`, counts unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            bin_width: self.bin_width * c,
            bin_edges: self.bin_edges.iter().map(|e| e * c).collect(),
            ..self.clone()
        }
    }
}

/// Bins the arrival times of a tag stream.
pub fn histogram(tags: &TagStream, bin_width: f64, range: (f64, f64)) -> Result<Histogram> {
    histogram_values(tags.arrivals(), bin_width, range)
}

pub fn histogram_values(
    values: impl IntoIterator<Item = f64>,
    bin_width: f64,
    range: (f64, f64),
) -> Result<Histogram> {
    let mut h = Histogram::new(bin_width, range.0, range.1)?;
    values.into_iter().for_each(|t| h.fill(t));
    Ok(h)
}
