//! Context distributions: what the environment announces each round.
//!
//! Three variants cover the benchmarks and the grouped real-data pattern:
//! point masses, diagonal Gaussians, and weighted finite (empirical)
//! distributions. Empirical distributions can be loaded from CSV files, one
//! support point per row, and a directory of such files yields one
//! distribution per group key.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_distr::StandardNormal;

use crate::error::{BanditError, Result};
use crate::rng::Stream;

/// Tolerance on the empirical weight sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A distribution over context points in `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextDistribution {
    /// Point mass at a single context.
    Dirac(DVector<f64>),
    /// Independent Gaussian coordinates with the given mean and per-coordinate
    /// standard deviation (entries may be zero).
    DiagonalGaussian {
        mean: DVector<f64>,
        stddev: DVector<f64>,
    },
    /// Weighted finite support. Weights are nonnegative and sum to one.
    Empirical {
        points: Vec<DVector<f64>>,
        weights: Vec<f64>,
    },
}

impl ContextDistribution {
    /// Point mass at `point`.
    pub fn dirac(point: DVector<f64>) -> Self {
        ContextDistribution::Dirac(point)
    }

    /// Diagonal Gaussian; stddev entries must be finite and nonnegative.
    pub fn diagonal_gaussian(mean: DVector<f64>, stddev: DVector<f64>) -> Result<Self> {
        if mean.len() != stddev.len() {
            return Err(BanditError::DimensionMismatch {
                expected: mean.len(),
                got: stddev.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(BanditError::NonFinite("gaussian mean"));
        }
        if stddev.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BanditError::invalid(
                "stddev",
                "entries must be finite and nonnegative",
            ));
        }
        Ok(ContextDistribution::DiagonalGaussian { mean, stddev })
    }

    /// Weighted empirical distribution. Weights must be nonnegative and sum
    /// to one within [`WEIGHT_SUM_TOL`]; all points must share one dimension.
    pub fn empirical(points: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(BanditError::Empty("support"));
        }
        if points.len() != weights.len() {
            return Err(BanditError::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(BanditError::invalid(
                "points",
                "support points must share one dimension",
            ));
        }
        if points
            .iter()
            .any(|p| p.iter().any(|v| !v.is_finite()))
        {
            return Err(BanditError::NonFinite("support point"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(BanditError::invalid(
                "weights",
                "weights must be finite and nonnegative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(BanditError::invalid(
                "weights",
                format!("weights sum to {sum}, expected 1"),
            ));
        }
        Ok(ContextDistribution::Empirical { points, weights })
    }

    /// Uniform empirical distribution over `points`.
    pub fn empirical_uniform(points: Vec<DVector<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(BanditError::Empty("support"));
        }
        let w = 1.0 / n as f64;
        ContextDistribution::empirical(points, vec![w; n])
    }

    /// Dimension of the context points.
    pub fn context_dim(&self) -> usize {
        match self {
            ContextDistribution::Dirac(p) => p.len(),
            ContextDistribution::DiagonalGaussian { mean, .. } => mean.len(),
            ContextDistribution::Empirical { points, .. } => points[0].len(),
        }
    }

    /// Draw one context.
    pub fn sample(&self, rng: &mut Stream) -> DVector<f64> {
        match self {
            ContextDistribution::Dirac(p) => p.clone(),
            ContextDistribution::DiagonalGaussian { mean, stddev } => {
                let mut out = mean.clone();
                for i in 0..out.len() {
                    let z: f64 = StandardNormal.sample(rng);
                    out[i] += stddev[i] * z;
                }
                out
            }
            ContextDistribution::Empirical { points, weights } => {
                // Zero-weight atoms are never drawn.
                let idx = WeightedIndex::new(weights.iter().copied())
                    .expect("validated weights")
                    .sample(rng);
                points[idx].clone()
            }
        }
    }

    /// Draw `l` i.i.d. contexts. Identical `(seed, stream)` gives identical
    /// batches.
    pub fn sample_batch(&self, l: usize, rng: &mut Stream) -> Result<Vec<DVector<f64>>> {
        if l == 0 {
            return Err(BanditError::invalid("l", "sample count must be >= 1"));
        }
        // One WeightedIndex per batch; draw order is the batch order.
        match self {
            ContextDistribution::Empirical { points, weights } => {
                let index = WeightedIndex::new(weights.iter().copied()).expect("validated");
                Ok((0..l).map(|_| points[index.sample(rng)].clone()).collect())
            }
            _ => Ok((0..l).map(|_| self.sample(rng)).collect()),
        }
    }

    /// Coordinate-wise mean `E[c]` (exact for every variant).
    pub fn coordinate_mean(&self) -> DVector<f64> {
        match self {
            ContextDistribution::Dirac(p) => p.clone(),
            ContextDistribution::DiagonalGaussian { mean, .. } => mean.clone(),
            ContextDistribution::Empirical { points, weights } => {
                let mut acc = DVector::zeros(points[0].len());
                for (p, w) in points.iter().zip(weights) {
                    acc.axpy(*w, p, 1.0);
                }
                acc
            }
        }
    }

    /// Coordinate-wise second moment `E[c_i^2]` (exact for every variant).
    pub fn coordinate_second_moment(&self) -> DVector<f64> {
        match self {
            ContextDistribution::Dirac(p) => p.map(|v| v * v),
            ContextDistribution::DiagonalGaussian { mean, stddev } => {
                DVector::from_fn(mean.len(), |i, _| {
                    mean[i] * mean[i] + stddev[i] * stddev[i]
                })
            }
            ContextDistribution::Empirical { points, weights } => {
                let mut acc = DVector::zeros(points[0].len());
                for (p, w) in points.iter().zip(weights) {
                    for i in 0..acc.len() {
                        acc[i] += w * p[i] * p[i];
                    }
                }
                acc
            }
        }
    }

    /// Finite weighted support, if the distribution has one. Gaussians return
    /// `None`: callers needing expectations over them must either hold an
    /// analytic rule or sample.
    pub fn weighted_support(&self) -> Option<Vec<(f64, &DVector<f64>)>> {
        match self {
            ContextDistribution::Dirac(p) => Some(vec![(1.0, p)]),
            ContextDistribution::Empirical { points, weights } => Some(
                weights
                    .iter()
                    .copied()
                    .zip(points.iter())
                    .map(|(w, p)| (w, p))
                    .collect(),
            ),
            ContextDistribution::DiagonalGaussian { .. } => None,
        }
    }
}

/// An empirical distribution read from a CSV file, together with its
/// coordinate names (the header row, minus the optional `weight` column).
#[derive(Debug, Clone)]
pub struct CsvDistribution {
    pub coordinates: Vec<String>,
    pub distribution: ContextDistribution,
}

/// Load one empirical distribution from a CSV file.
///
/// The header names the context coordinates; an optional `weight` column
/// carries the atom weights (uniform when absent). One row per support point.
pub fn empirical_from_csv(path: &Path) -> Result<CsvDistribution> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| BanditError::data(&display, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| BanditError::data(&display, e.to_string()))?
        .clone();
    let weight_col = headers.iter().position(|h| h == "weight");
    let coordinates: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != weight_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if coordinates.is_empty() {
        return Err(BanditError::data(&display, "no coordinate columns"));
    }

    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2; // 1-based, after the header
        let record = record.map_err(|e| BanditError::data(&display, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(BanditError::data(
                &display,
                format!("line {line}: expected {} fields", headers.len()),
            ));
        }
        let mut point = Vec::with_capacity(coordinates.len());
        for (i, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                BanditError::data(&display, format!("line {line}: non-numeric cell `{field}`"))
            })?;
            if Some(i) == weight_col {
                weights.push(value);
            } else {
                point.push(value);
            }
        }
        points.push(DVector::from_vec(point));
    }
    if points.is_empty() {
        return Err(BanditError::data(&display, "no support rows"));
    }

    let distribution = if weight_col.is_some() {
        ContextDistribution::empirical(points, weights)
            .map_err(|e| BanditError::data(&display, e.to_string()))?
    } else {
        ContextDistribution::empirical_uniform(points)
            .map_err(|e| BanditError::data(&display, e.to_string()))?
    };
    Ok(CsvDistribution {
        coordinates,
        distribution,
    })
}

/// A set of empirical distributions keyed by group, sharing one coordinate
/// header. Groups are ordered by key so downstream draws are reproducible.
#[derive(Debug, Clone)]
pub struct GroupedDistributions {
    pub coordinates: Vec<String>,
    pub groups: Vec<(String, ContextDistribution)>,
}

impl GroupedDistributions {
    pub fn context_dim(&self) -> usize {
        self.coordinates.len()
    }
}

/// Load a directory of group CSVs (one empirical distribution per file,
/// keyed by filename stem). All files must share the same header.
pub fn load_group_dir(dir: &Path) -> Result<GroupedDistributions> {
    let display = dir.display().to_string();
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(BanditError::data(&display, "no .csv files in directory"));
    }

    let mut coordinates: Option<Vec<String>> = None;
    let mut groups = BTreeMap::new();
    for file in &files {
        let key = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let loaded = empirical_from_csv(file)?;
        match &coordinates {
            None => coordinates = Some(loaded.coordinates.clone()),
            Some(expected) if *expected != loaded.coordinates => {
                return Err(BanditError::data(
                    file.display().to_string(),
                    format!(
                        "header mismatch: expected {:?}, got {:?}",
                        expected, loaded.coordinates
                    ),
                ));
            }
            _ => {}
        }
        groups.insert(key, loaded.distribution);
    }
    Ok(GroupedDistributions {
        coordinates: coordinates.unwrap(),
        groups: groups.into_iter().collect(),
    })
}
