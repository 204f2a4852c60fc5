//! Lattice-sampled estimators: the unbiased per-lag estimator and the
//! data-taper variant that damps edge effects.

use std::io::{Read, Write};
use std::path::Path;

use crate::classical::CenterMode;
use crate::covariogram::{CovKind, EmpiricalCovariogram};
use crate::error::{CovarioError, Result};
use crate::spatial::{LagBinning, SpatialSample};

/// Dense scalar field over a rectangular integer lattice, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSample {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl LatticeSample {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&n| n == 0) {
            return Err(CovarioError::InvalidInput("lattice dimensions must be positive".into()));
        }
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(CovarioError::InvalidInput(format!(
                "expected {} values for dims {:?}, got {}",
                expected,
                dims,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CovarioError::InvalidInput("non-finite lattice value".into()));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn strides(&self) -> Vec<usize> {
        let d = self.dims.len();
        let mut s = vec![1; d];
        for axis in (0..d.saturating_sub(1)).rev() {
            s[axis] = s[axis + 1] * self.dims[axis + 1];
        }
        s
    }

    /// Scattered view with locations `origin + index * step` per axis.
    pub fn to_spatial(&self, origin: &[f64], step: f64) -> Result<SpatialSample> {
        let d = self.dims.len();
        if origin.len() != d {
            return Err(CovarioError::InvalidInput("origin dimension mismatch".into()));
        }
        let mut coords = Vec::with_capacity(self.len() * d);
        let mut idx = vec![0usize; d];
        for _ in 0..self.len() {
            for a in 0..d {
                coords.push(origin[a] + idx[a] as f64 * step);
            }
            let mut axis = d;
            while axis > 0 {
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        SpatialSample::new(d, coords, self.values.clone())
    }

    /// CSV with a `dims` header row, then the values of the trailing axis
    /// one lattice row per record.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        let mut header = vec!["dims".to_string()];
        header.extend(self.dims.iter().map(|n| n.to_string()));
        wtr.write_record(&header)?;
        let row_len = *self.dims.last().unwrap();
        for chunk in self.values.chunks(row_len) {
            let row: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| CovarioError::InvalidInput("empty lattice file".into()))??;
        if header.get(0) != Some("dims") {
            return Err(CovarioError::InvalidInput("first row must be dims,n1[,n2...]".into()));
        }
        let dims: Vec<usize> = header
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<usize>()
                    .map_err(|_| CovarioError::InvalidInput(format!("bad dimension {f:?}")))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::new();
        for record in records {
            for field in record?.iter() {
                values.push(field.parse::<f64>().map_err(|_| {
                    CovarioError::InvalidInput(format!("bad lattice value {field:?}"))
                })?);
            }
        }
        Self::new(dims, values)
    }

    const BINARY_MAGIC: &'static [u8; 4] = b"CVLT";

    /// Binary layout: magic, u32 axis count, u64 per-axis sizes, f64 values,
    /// all little-endian, row-major.
    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(Self::BINARY_MAGIC)?;
        writer.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &n in &self.dims {
            writer.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in &self.values {
            writer.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != Self::BINARY_MAGIC {
            return Err(CovarioError::InvalidInput("not a lattice binary file".into()));
        }
        let mut buf4 = [0u8; 4];
        reader.read_exact(&mut buf4)?;
        let d = u32::from_le_bytes(buf4) as usize;
        let mut dims = Vec::with_capacity(d);
        let mut buf8 = [0u8; 8];
        for _ in 0..d {
            reader.read_exact(&mut buf8)?;
            dims.push(u64::from_le_bytes(buf8) as usize);
        }
        let count: usize = dims.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            reader.read_exact(&mut buf8)?;
            values.push(f64::from_le_bytes(buf8));
        }
        Self::new(dims, values)
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(Self::BINARY_MAGIC) {
            Self::read_binary(bytes.as_slice())
        } else {
            Self::read_csv(bytes.as_slice())
        }
    }
}

/// Taper window family; the cosine rise `(1 - cos(pi x)) / 2` satisfies
/// `w(0) = 0`, `w(1) = 1` and rises continuously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaperWindow {
    #[default]
    Tukey,
}

#[derive(Debug, Clone, Copy)]
pub struct TaperConfig {
    pub rho: f64,
    pub window: TaperWindow,
}

impl TaperConfig {
    pub fn new(rho: f64, window: TaperWindow) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(CovarioError::InvalidInput("smoothness must lie in (0, 1]".into()));
        }
        Ok(Self { rho, window })
    }
}

impl Default for TaperConfig {
    fn default() -> Self {
        Self { rho: 0.2, window: TaperWindow::Tukey }
    }
}

fn window_rise(window: TaperWindow, x: f64) -> f64 {
    match window {
        TaperWindow::Tukey => (1.0 - (std::f64::consts::PI * x).cos()) / 2.0,
    }
}

/// Taper weight on `[0, 1]`: rises over `[0, rho/2)`, is flat at 1 through
/// the middle, and mirrors symmetrically on the upper half.
pub fn taper_weight(u: f64, config: &TaperConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(CovarioError::InvalidInput("taper argument must lie in [0, 1]".into()));
    }
    let u = if u > 0.5 { 1.0 - u } else { u };
    Ok(if u < config.rho / 2.0 {
        window_rise(config.window, 2.0 * u / config.rho)
    } else {
        1.0
    })
}

/// `H_{2,n}(0)`: sum of squared taper weights at the midpoint grid
/// `(s - 1/2) / n`, `s = 1..n`.
pub fn h2_normalizer(n: usize, config: &TaperConfig) -> f64 {
    (1..=n)
        .map(|s| {
            let w = taper_weight((s as f64 - 0.5) / n as f64, config).expect("u in [0,1]");
            w * w
        })
        .sum()
}

fn axis_ranges(dims: &[usize], h: &[i64]) -> Option<Vec<(usize, usize)>> {
    dims.iter()
        .zip(h)
        .map(|(&n, &hi)| {
            let lo = (-hi).max(0) as usize;
            let hi_excl = (n as i64).min(n as i64 - hi);
            (hi_excl > lo as i64).then_some((lo, hi_excl as usize))
        })
        .collect()
}

fn for_each_admissible<F: FnMut(usize, usize)>(
    lattice: &LatticeSample,
    h: &[i64],
    mut f: F,
) -> u64 {
    let Some(ranges) = axis_ranges(lattice.dims(), h) else {
        return 0;
    };
    let strides = lattice.strides();
    let offset: i64 = h.iter().zip(&strides).map(|(&hi, &s)| hi * s as i64).sum();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let mut count = 0u64;
    loop {
        let flat: usize = idx.iter().zip(&strides).map(|(&i, &s)| i * s).sum();
        f(flat, (flat as i64 + offset) as usize);
        count += 1;
        let mut axis = idx.len();
        loop {
            if axis == 0 {
                return count;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < ranges[axis].1 {
                break;
            }
            idx[axis] = ranges[axis].0;
        }
    }
}

/// Unbiased lattice estimate at one vector lag: the mean of `X(t) X(t+h)`
/// over all admissible positions. `None` when the lag leaves the lattice.
pub fn guyon_at(lattice: &LatticeSample, h: &[i64], centred: &[f64]) -> Option<(f64, u64)> {
    if h.len() != lattice.dims().len() {
        return None;
    }
    let mut sum = 0.0;
    let count = for_each_admissible(lattice, h, |a, b| {
        sum += centred[a] * centred[b];
    });
    (count > 0).then(|| (sum / count as f64, count))
}

/// Tapered lattice estimate at one vector lag: both endpoints carry the
/// product of per-axis taper weights, normalized by the product of
/// `H_{2,n_i}(0)` irrespective of the lag.
pub fn dahlhaus_at(
    lattice: &LatticeSample,
    h: &[i64],
    centred: &[f64],
    weights: &[Vec<f64>],
    normalizer: f64,
) -> Option<f64> {
    if h.len() != lattice.dims().len() {
        return None;
    }
    let dims = lattice.dims().to_vec();
    let strides = lattice.strides();
    let mut sum = 0.0;
    let count = for_each_admissible(lattice, h, |a, b| {
        let mut wa = 1.0;
        let mut wb = 1.0;
        let (mut ra, mut rb) = (a, b);
        for axis in 0..dims.len() {
            let (ia, ib) = (ra / strides[axis], rb / strides[axis]);
            ra %= strides[axis];
            rb %= strides[axis];
            wa *= weights[axis][ia];
            wb *= weights[axis][ib];
        }
        sum += centred[a] * centred[b] * wa * wb;
    });
    (count > 0).then(|| sum / normalizer)
}

/// Per-axis taper weights at lattice midpoints, plus the joint normalizer.
pub fn taper_tables(lattice: &LatticeSample, config: &TaperConfig) -> (Vec<Vec<f64>>, f64) {
    let weights: Vec<Vec<f64>> = lattice
        .dims()
        .iter()
        .map(|&n| {
            (1..=n)
                .map(|s| taper_weight((s as f64 - 0.5) / n as f64, config).expect("u in [0,1]"))
                .collect()
        })
        .collect();
    let normalizer = lattice.dims().iter().map(|&n| h2_normalizer(n, config)).product();
    (weights, normalizer)
}

fn centred_lattice(lattice: &LatticeSample, mode: CenterMode) -> Vec<f64> {
    match mode {
        CenterMode::ZeroMean => lattice.values().to_vec(),
        CenterMode::Centered => {
            let mean = lattice.values().iter().sum::<f64>() / lattice.len() as f64;
            lattice.values().iter().map(|v| v - mean).collect()
        }
    }
}

/// Lexicographically positive vector lags whose scaled norm falls in a bin,
/// grouped by bin index.
fn representative_lags(dims: &[usize], step: f64, bins: &LagBinning) -> Vec<Vec<Vec<i64>>> {
    let d = dims.len();
    let max_norm = (bins.centers[bins.len() - 1] + bins.half_width) / step;
    let reach: Vec<i64> =
        dims.iter().map(|&n| (n as i64 - 1).min(max_norm.ceil() as i64)).collect();
    let mut grouped: Vec<Vec<Vec<i64>>> = vec![Vec::new(); bins.len()];
    let mut h = vec![0i64; d];
    // Odometer over the box [-reach, reach]^d keeping h > 0 lexicographically.
    fn lex_positive(h: &[i64]) -> bool {
        for &c in h {
            if c > 0 {
                return true;
            }
            if c < 0 {
                return false;
            }
        }
        false
    }
    h.iter_mut().zip(&reach).for_each(|(c, &r)| *c = -r);
    loop {
        if lex_positive(&h) {
            let norm = (h.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt() * step;
            if let Some(bin) = bins.bin_of(norm) {
                grouped[bin].push(h.clone());
            }
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return grouped;
            }
            axis -= 1;
            h[axis] += 1;
            if h[axis] <= reach[axis] {
                break;
            }
            h[axis] = -reach[axis];
        }
    }
}

/// Isotropic profile of the unbiased lattice estimator: vector-lag values
/// averaged with equal weight within each distance bin.
pub fn guyon_covariogram(
    lattice: &LatticeSample,
    step: f64,
    bins: &LagBinning,
    mode: CenterMode,
) -> Result<EmpiricalCovariogram> {
    let centred = centred_lattice(lattice, mode);
    let lag0 = centred.iter().map(|c| c * c).sum::<f64>() / lattice.len() as f64;
    let mut lags = vec![0.0];
    let mut values = vec![lag0];
    let mut counts = vec![lattice.len() as u64];
    let mut any = false;
    for (bin, lag_set) in representative_lags(lattice.dims(), step, bins).iter().enumerate() {
        let mut acc = 0.0;
        let mut pair_count = 0u64;
        let mut lag_count = 0u64;
        for h in lag_set {
            if let Some((v, c)) = guyon_at(lattice, h, &centred) {
                acc += v;
                pair_count += c;
                lag_count += 1;
            }
        }
        if lag_count == 0 {
            continue;
        }
        any = true;
        lags.push(bins.centers[bin]);
        values.push(acc / lag_count as f64);
        // Ordered-pair convention: each representative lag stands for +-h.
        counts.push(2 * pair_count);
    }
    if !any {
        return Err(CovarioError::NoEstimableLags);
    }
    EmpiricalCovariogram::new(CovKind::Covariance, lags, values, counts)
}

/// Isotropic profile of the tapered lattice estimator.
pub fn dahlhaus_covariogram(
    lattice: &LatticeSample,
    step: f64,
    bins: &LagBinning,
    taper: &TaperConfig,
    mode: CenterMode,
) -> Result<EmpiricalCovariogram> {
    let centred = centred_lattice(lattice, mode);
    let (weights, normalizer) = taper_tables(lattice, taper);
    let lag0 = dahlhaus_at(lattice, &vec![0; lattice.dims().len()], &centred, &weights, normalizer)
        .expect("zero lag is always admissible");
    let mut lags = vec![0.0];
    let mut values = vec![lag0];
    let mut counts = vec![lattice.len() as u64];
    let mut any = false;
    for (bin, lag_set) in representative_lags(lattice.dims(), step, bins).iter().enumerate() {
        let mut acc = 0.0;
        let mut lag_count = 0u64;
        for h in lag_set {
            if let Some(v) = dahlhaus_at(lattice, h, &centred, &weights, normalizer) {
                acc += v;
                lag_count += 1;
            }
        }
        if lag_count == 0 {
            continue;
        }
        any = true;
        lags.push(bins.centers[bin]);
        values.push(acc / lag_count as f64);
        counts.push(2 * lag_count);
    }
    if !any {
        return Err(CovarioError::NoEstimableLags);
    }
    EmpiricalCovariogram::new(CovKind::Covariance, lags, values, counts)
}
