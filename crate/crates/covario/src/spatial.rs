//! Spatial data model, lag-bin construction, and pair enumeration.
//!
//! Every estimator in this crate consumes a [`SpatialSample`] (scattered
//! observations in d dimensions) together with a [`LagBinning`] describing
//! the distance classes at which the covariogram is estimated.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CovarioError, Result};

/// Scattered observations of a scalar field at distinct d-dimensional locations.
#[derive(Debug, Clone)]
pub struct SpatialSample {
    dim: usize,
    /// Row-major coordinates, `n * dim` entries.
    coords: Vec<f64>,
    values: Vec<f64>,
}

impl SpatialSample {
    /// Builds a sample from flat row-major coordinates.
    ///
    /// Rejects empty samples, non-finite coordinates or values, and
    /// duplicate locations (two identical coordinate tuples).
    pub fn new(dim: usize, coords: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(CovarioError::InvalidInput("dimension must be positive".into()));
        }
        if values.is_empty() {
            return Err(CovarioError::EmptySample);
        }
        if coords.len() != values.len() * dim {
            return Err(CovarioError::InvalidInput(format!(
                "coordinate count {} does not match {} values of dimension {}",
                coords.len(),
                values.len(),
                dim
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(CovarioError::InvalidInput("non-finite coordinate".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CovarioError::InvalidInput("non-finite value".into()));
        }
        let sample = Self { dim, coords, values };
        if let Some((i, j)) = sample.find_duplicate_location() {
            return Err(CovarioError::InvalidInput(format!(
                "duplicate locations at rows {i} and {j}"
            )));
        }
        Ok(sample)
    }

    /// Builds a 1-D sample at integer positions 0..n, the regular-series view.
    pub fn from_series(values: &[f64]) -> Result<Self> {
        let coords: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
        Self::new(1, coords, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn location(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.location(i), self.location(j));
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// Separation vector `location(i) - location(j)`.
    pub fn separation(&self, i: usize, j: usize) -> Vec<f64> {
        self.location(i)
            .iter()
            .zip(self.location(j))
            .map(|(a, b)| a - b)
            .collect()
    }

    fn find_duplicate_location(&self) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.location(a)
                .iter()
                .zip(self.location(b))
                .find_map(|(x, y)| {
                    let c = x.partial_cmp(y).expect("finite coords");
                    (c != std::cmp::Ordering::Equal).then_some(c)
                })
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order
            .windows(2)
            .find(|w| self.location(w[0]) == self.location(w[1]))
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }

    /// Reads a sample from CSV with header `x[,y[,z]],value`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let dim = match names.as_slice() {
            ["x", "value"] => 1,
            ["x", "y", "value"] => 2,
            ["x", "y", "z", "value"] => 3,
            _ => {
                return Err(CovarioError::InvalidInput(format!(
                    "expected header x[,y[,z]],value, got {names:?}"
                )))
            }
        };
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != dim + 1 {
                return Err(CovarioError::InvalidInput(format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    dim + 1
                )));
            }
            for field in record.iter().take(dim) {
                coords.push(parse_f64(field)?);
            }
            values.push(parse_f64(&record[dim])?);
        }
        Self::new(dim, coords, values)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Writes the sample as CSV with header `x[,y[,z]],value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let header: Vec<&str> = match self.dim {
            1 => vec!["x", "value"],
            2 => vec!["x", "y", "value"],
            3 => vec!["x", "y", "z", "value"],
            d => {
                return Err(CovarioError::InvalidInput(format!(
                    "CSV export supports dimensions 1-3, got {d}"
                )))
            }
        };
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.location(i).iter().map(|c| c.to_string()).collect();
            row.push(self.values[i].to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| CovarioError::InvalidInput(format!("cannot parse number: {field:?}")))
}

/// Equally spaced distance bins: centers `tau_1..tau_K` with half-width `delta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagBinning {
    pub centers: Vec<f64>,
    #[serde(rename = "half_width")]
    pub half_width: f64,
}

impl LagBinning {
    pub fn new(centers: Vec<f64>, half_width: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(CovarioError::InvalidInput("at least one bin required".into()));
        }
        if half_width <= 0.0 || !half_width.is_finite() {
            return Err(CovarioError::InvalidInput("half-width must be positive".into()));
        }
        if centers[0] <= 0.0 {
            return Err(CovarioError::InvalidInput("bin centers must be positive".into()));
        }
        if centers.len() > 1 {
            let spacing = centers[1] - centers[0];
            if spacing <= 0.0 {
                return Err(CovarioError::InvalidInput(
                    "bin centers must be strictly increasing".into(),
                ));
            }
            let equal = centers
                .windows(2)
                .all(|w| ((w[1] - w[0]) - spacing).abs() <= 1e-9 * spacing.max(1.0));
            if !equal {
                return Err(CovarioError::InvalidInput("bin centers must be equally spaced".into()));
            }
            if half_width > spacing / 2.0 + 1e-12 * spacing {
                return Err(CovarioError::InvalidInput(
                    "half-width exceeds half the bin spacing; bins would overlap".into(),
                ));
            }
        }
        Ok(Self { centers, half_width })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        if self.centers.len() > 1 {
            self.centers[1] - self.centers[0]
        } else {
            2.0 * self.half_width
        }
    }

    /// Index of the bin owning distance `d`, by nearest center. Bins never
    /// overlap, so each distance is assigned at most once.
    pub fn bin_of(&self, d: f64) -> Option<usize> {
        let spacing = self.spacing();
        let raw = (d - self.centers[0]) / spacing;
        let k = raw.round();
        if k < 0.0 || k >= self.centers.len() as f64 {
            return None;
        }
        let k = k as usize;
        ((d - self.centers[k]).abs() <= self.half_width).then_some(k)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let raw: LagBinning = serde_json::from_reader(reader)?;
        Self::new(raw.centers, raw.half_width)
    }
}

/// Ordered index pairs whose separation distance falls in one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub bin_center: f64,
    /// Ordered pairs `(i, j)`, `i != j`, sorted by `(i, j)`.
    pub pairs: Vec<(usize, usize)>,
}

impl PairSet {
    /// Number of ordered pairs, `|N(tau)|`.
    pub fn count(&self) -> usize {
        self.pairs.len()
    }
}

/// Search cone for directional estimation in two dimensions.
#[derive(Debug, Clone, Copy)]
pub struct DirectionSpec {
    /// Cone axis in radians, `[0, pi)`.
    pub azimuth: f64,
    /// Maximum angular deviation from the axis, `(0, pi/2]`.
    pub angle_tolerance: f64,
    /// Maximum perpendicular offset from the axis; may be infinite.
    pub bandwidth: f64,
}

impl DirectionSpec {
    pub fn new(azimuth: f64, angle_tolerance: f64, bandwidth: f64) -> Result<Self> {
        if !(0.0..std::f64::consts::PI).contains(&azimuth) {
            return Err(CovarioError::InvalidInput("azimuth must lie in [0, pi)".into()));
        }
        if !(angle_tolerance > 0.0 && angle_tolerance <= std::f64::consts::FRAC_PI_2) {
            return Err(CovarioError::InvalidInput(
                "angle tolerance must lie in (0, pi/2]".into(),
            ));
        }
        if !(bandwidth > 0.0) {
            return Err(CovarioError::InvalidInput("bandwidth must be positive".into()));
        }
        Ok(Self { azimuth, angle_tolerance, bandwidth })
    }

    /// Whether a separation vector (or its negation) lies inside the cone.
    pub fn admits(&self, separation: &[f64]) -> bool {
        debug_assert_eq!(separation.len(), 2);
        let (dx, dy) = (separation[0], separation[1]);
        let norm = (dx * dx + dy * dy).sqrt();
        if norm == 0.0 {
            return false;
        }
        let (ux, uy) = (self.azimuth.cos(), self.azimuth.sin());
        // Pairs are ordered symmetric, so the cone is a double cone: measure
        // against the axis line via |v . u|.
        let along = (dx * ux + dy * uy).abs();
        let perp = (dx * uy - dy * ux).abs();
        let cos_dev = (along / norm).clamp(0.0, 1.0);
        cos_dev.acos() <= self.angle_tolerance + 1e-12 && perp <= self.bandwidth
    }
}

/// Mean of the observed values.
pub fn sample_mean(sample: &SpatialSample) -> Result<f64> {
    if sample.is_empty() {
        return Err(CovarioError::EmptySample);
    }
    Ok(sample.values().iter().sum::<f64>() / sample.len() as f64)
}

/// Distance-bin scheme: `tau_1` is the mean nearest-neighbour distance,
/// `delta = tau_1 / 2`, and centers step by `tau_1` up to `K` bins.
pub fn build_lag_bins(sample: &SpatialSample, k: usize) -> Result<LagBinning> {
    if sample.len() < 2 {
        return Err(CovarioError::InvalidInput(
            "lag binning needs at least two locations".into(),
        ));
    }
    if k == 0 {
        return Err(CovarioError::InvalidInput("bin count must be positive".into()));
    }
    let tau1 = mean_nearest_neighbor_distance(sample);
    let centers: Vec<f64> = (0..k).map(|i| tau1 * (i as f64 + 1.0)).collect();
    LagBinning::new(centers, tau1 / 2.0)
}

/// Mean over points of the distance to their nearest neighbour.
pub fn mean_nearest_neighbor_distance(sample: &SpatialSample) -> f64 {
    let n = sample.len();
    let nn = if n <= 2048 {
        nearest_neighbor_brute(sample)
    } else {
        nearest_neighbor_grid(sample)
    };
    nn.iter().sum::<f64>() / n as f64
}

fn nearest_neighbor_brute(sample: &SpatialSample) -> Vec<f64> {
    let n = sample.len();
    let mut nn = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sample.distance(i, j);
            if d < nn[i] {
                nn[i] = d;
            }
            if d < nn[j] {
                nn[j] = d;
            }
        }
    }
    nn
}

fn nearest_neighbor_grid(sample: &SpatialSample) -> Vec<f64> {
    let n = sample.len();
    let dim = sample.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for i in 0..n {
        for (a, &c) in sample.location(i).iter().enumerate() {
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
    }
    let extent = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| h - l)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    // Aim for O(1) points per cell on roughly uniform data.
    let cell = extent / (n as f64).powf(1.0 / dim as f64).max(1.0);
    let grid = CellGrid::build(sample, cell);
    (0..n)
        .map(|i| {
            let mut radius = 1i64;
            loop {
                let mut best = f64::INFINITY;
                grid.visit_box(sample.location(i), radius, |j| {
                    if j != i {
                        best = best.min(sample.distance(i, j));
                    }
                });
                // A box of cell radius r is guaranteed to contain every point
                // within Euclidean distance (r-1)*cell, so only then is the
                // candidate confirmed as the true nearest neighbour.
                if best <= (radius - 1) as f64 * cell {
                    return best;
                }
                radius += 1;
            }
        })
        .collect()
}

struct CellGrid {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    dim: usize,
}

impl CellGrid {
    fn build(sample: &SpatialSample, cell: f64) -> Self {
        let dim = sample.dim();
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for i in 0..sample.len() {
            let key = Self::key_of(sample.location(i), cell);
            cells.entry(key).or_default().push(i);
        }
        Self { cell, cells, dim }
    }

    fn key_of(loc: &[f64], cell: f64) -> Vec<i64> {
        loc.iter().map(|&c| (c / cell).floor() as i64).collect()
    }

    /// Visits all points in cells within `radius` cells of `loc`'s cell.
    fn visit_box<F: FnMut(usize)>(&self, loc: &[f64], radius: i64, mut f: F) {
        let center = Self::key_of(loc, self.cell);
        let mut offset = vec![-radius; self.dim];
        loop {
            let key: Vec<i64> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
            if let Some(points) = self.cells.get(&key) {
                for &p in points {
                    f(p);
                }
            }
            // Odometer increment over the offset box.
            let mut axis = 0;
            loop {
                if axis == self.dim {
                    return;
                }
                offset[axis] += 1;
                if offset[axis] <= radius {
                    break;
                }
                offset[axis] = -radius;
                axis += 1;
            }
        }
    }
}

/// All ordered pairs `(i, j)`, `i != j`, with distance in `[tau - delta, tau + delta]`.
pub fn enumerate_pairs(sample: &SpatialSample, tau: f64, delta: f64) -> Result<PairSet> {
    if tau <= 0.0 {
        return Err(CovarioError::InvalidInput("lag must be positive".into()));
    }
    if delta < 0.0 {
        return Err(CovarioError::InvalidInput("half-width must be nonnegative".into()));
    }
    let n = sample.len();
    let mut pairs = Vec::new();
    // Grid acceleration pays off only when cells are coarse enough to prune;
    // results are identical because membership is re-checked per pair.
    let use_grid = n > 2048 && delta > 0.0;
    if use_grid {
        let cell = 2.0 * delta;
        let grid = CellGrid::build(sample, cell);
        let radius = ((tau + delta) / cell).ceil() as i64 + 1;
        if (2 * radius + 1).pow(sample.dim() as u32) < n as i64 {
            for i in 0..n {
                grid.visit_box(sample.location(i), radius, |j| {
                    if j != i {
                        let d = sample.distance(i, j);
                        if (d - tau).abs() <= delta {
                            pairs.push((i, j));
                        }
                    }
                });
            }
            pairs.sort_unstable();
            return Ok(PairSet { bin_center: tau, pairs });
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && (sample.distance(i, j) - tau).abs() <= delta {
                pairs.push((i, j));
            }
        }
    }
    Ok(PairSet { bin_center: tau, pairs })
}

/// Ordered pairs within the bin whose separation also lies in the search cone.
pub fn enumerate_directional_pairs(
    sample: &SpatialSample,
    tau: f64,
    delta: f64,
    dir: &DirectionSpec,
) -> Result<PairSet> {
    if sample.dim() != 2 {
        return Err(CovarioError::UnsupportedDimension { expected: 2, got: sample.dim() });
    }
    let all = enumerate_pairs(sample, tau, delta)?;
    let pairs = all
        .pairs
        .into_iter()
        .filter(|&(i, j)| dir.admits(&sample.separation(i, j)))
        .collect();
    Ok(PairSet { bin_center: tau, pairs })
}

/// Streams every unordered pair `(i, j)`, `i < j`, that falls in some bin,
/// invoking `f(bin_index, i, j)`. Each pair is visited exactly once.
pub fn visit_binned_pairs<F: FnMut(usize, usize, usize)>(
    sample: &SpatialSample,
    bins: &LagBinning,
    mut f: F,
) {
    let n = sample.len();
    let max_dist = bins.centers[bins.len() - 1] + bins.half_width;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sample.distance(i, j);
            if d > max_dist {
                continue;
            }
            if let Some(k) = bins.bin_of(d) {
                f(k, i, j);
            }
        }
    }
}
