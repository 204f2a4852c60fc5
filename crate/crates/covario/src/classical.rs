//! Standard covariogram and semivariogram estimators, their
//! constant-denominator variants, and the identities they satisfy.

use std::collections::HashMap;

use crate::covariogram::{CovKind, EmpiricalCovariogram};
use crate::error::{CovarioError, Result};
use crate::linalg;
use crate::spatial::{
    enumerate_directional_pairs, sample_mean, visit_binned_pairs, DirectionSpec, LagBinning,
    SpatialSample,
};

/// Whether estimators centre observations by the sample mean or take the
/// field as zero-mean. The identities of the appendix-style checks are exact
/// under the zero-mean convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CenterMode {
    #[default]
    Centered,
    ZeroMean,
}

fn centered_values(sample: &SpatialSample, mode: CenterMode) -> Result<Vec<f64>> {
    let mean = match mode {
        CenterMode::Centered => sample_mean(sample)?,
        CenterMode::ZeroMean => 0.0,
    };
    Ok(sample.values().iter().map(|v| v - mean).collect())
}

struct BinSums {
    /// Sum over unordered pairs of products of (centred) values.
    products: Vec<f64>,
    /// Sum over unordered pairs of squared value differences.
    sq_diffs: Vec<f64>,
    /// Sum over unordered pairs of sqrt(|difference|).
    root_diffs: Vec<f64>,
    /// Sum over unordered pairs of the squared first-member value; doubled it
    /// becomes the ordered-pair restricted second moment.
    sq_first: Vec<f64>,
    /// Unordered pair counts.
    counts: Vec<u64>,
}

fn accumulate_bins(sample: &SpatialSample, bins: &LagBinning, centred: &[f64]) -> BinSums {
    let k = bins.len();
    let mut sums = BinSums {
        products: vec![0.0; k],
        sq_diffs: vec![0.0; k],
        root_diffs: vec![0.0; k],
        sq_first: vec![0.0; k],
        counts: vec![0; k],
    };
    visit_binned_pairs(sample, bins, |bin, i, j| {
        let (a, b) = (centred[i], centred[j]);
        sums.products[bin] += a * b;
        sums.sq_diffs[bin] += (a - b) * (a - b);
        sums.root_diffs[bin] += (a - b).abs().sqrt();
        sums.sq_first[bin] += a * a + b * b;
        sums.counts[bin] += 1;
    });
    sums
}

/// Assembles a covariogram from per-bin aggregates, dropping empty bins.
/// `value_of(bin_index, unordered_count)` maps aggregates to the estimate.
fn assemble(
    kind: CovKind,
    lag0_value: f64,
    lag0_count: u64,
    bins: &LagBinning,
    counts: &[u64],
    mut value_of: impl FnMut(usize, u64) -> f64,
) -> Result<EmpiricalCovariogram> {
    let mut lags = vec![0.0];
    let mut values = vec![lag0_value];
    let mut out_counts = vec![lag0_count];
    let mut any = false;
    for (k, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            continue;
        }
        any = true;
        lags.push(bins.centers[k]);
        values.push(value_of(k, cnt));
        // Stored counts are ordered-pair counts |N(tau)|.
        out_counts.push(2 * cnt);
    }
    if !any {
        return Err(CovarioError::NoEstimableLags);
    }
    EmpiricalCovariogram::new(kind, lags, values, out_counts)
}

/// Classical covariogram: per-lag mean of products of centred values over
/// all ordered pairs in the bin. Lag 0 carries the sample variance.
pub fn classical_covariogram(
    sample: &SpatialSample,
    bins: &LagBinning,
    mode: CenterMode,
) -> Result<EmpiricalCovariogram> {
    let centred = centered_values(sample, mode)?;
    let sums = accumulate_bins(sample, bins, &centred);
    let n = sample.len() as f64;
    let lag0 = centred.iter().map(|c| c * c).sum::<f64>() / n;
    assemble(CovKind::Covariance, lag0, sample.len() as u64, bins, &sums.counts, |k, cnt| {
        sums.products[k] / cnt as f64
    })
}

/// Constant-denominator variant: the same ordered-pair sums divided by the
/// total number of locations instead of the per-lag pair count.
pub fn constant_denominator_covariogram(
    sample: &SpatialSample,
    bins: &LagBinning,
    mode: CenterMode,
) -> Result<EmpiricalCovariogram> {
    let centred = centered_values(sample, mode)?;
    let sums = accumulate_bins(sample, bins, &centred);
    let n = sample.len() as f64;
    let lag0 = centred.iter().map(|c| c * c).sum::<f64>() / n;
    assemble(CovKind::Covariance, lag0, sample.len() as u64, bins, &sums.counts, |k, _| {
        2.0 * sums.products[k] / n
    })
}

/// One-dimensional constant-denominator autocovariance over forward pairs,
/// `(1/N) sum_{t=1}^{N-h} (X_t - m)(X_{t+h} - m)`. Always positive-definite
/// as a lag sequence.
pub fn constant_denominator_series(
    series: &[f64],
    max_lag: usize,
    mode: CenterMode,
) -> Result<EmpiricalCovariogram> {
    let n = series.len();
    if n == 0 {
        return Err(CovarioError::EmptySample);
    }
    if max_lag >= n {
        return Err(CovarioError::InvalidInput("max lag must be below the series length".into()));
    }
    let mean = match mode {
        CenterMode::Centered => series.iter().sum::<f64>() / n as f64,
        CenterMode::ZeroMean => 0.0,
    };
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let mut lags = Vec::with_capacity(max_lag + 1);
    let mut values = Vec::with_capacity(max_lag + 1);
    let mut counts = Vec::with_capacity(max_lag + 1);
    for h in 0..=max_lag {
        let sum: f64 = (0..n - h).map(|t| c[t] * c[t + h]).sum();
        lags.push(h as f64);
        values.push(sum / n as f64);
        counts.push((n - h) as u64);
    }
    EmpiricalCovariogram::new(CovKind::Covariance, lags, values, counts)
}

/// Sample autocorrelation of a series: forward-pair sums at each lag over
/// the lag-0 sum of squares.
pub fn autocorrelation_1d(series: &[f64], max_lag: usize) -> Result<EmpiricalCovariogram> {
    let n = series.len();
    if n == 0 {
        return Err(CovarioError::EmptySample);
    }
    if max_lag >= n {
        return Err(CovarioError::InvalidInput("max lag must be below the series length".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(CovarioError::DegenerateVariance);
    }
    let mut lags = Vec::new();
    let mut values = Vec::new();
    let mut counts = Vec::new();
    for h in 0..=max_lag {
        let sum: f64 = (0..n - h).map(|t| c[t] * c[t + h]).sum();
        lags.push(h as f64);
        values.push(sum / denom);
        counts.push((n - h) as u64);
    }
    EmpiricalCovariogram::new(CovKind::Correlation, lags, values, counts)
}

/// Matheron's semivariogram: half the mean squared difference per lag.
pub fn matheron_semivariogram(
    sample: &SpatialSample,
    bins: &LagBinning,
) -> Result<EmpiricalCovariogram> {
    let centred = sample.values().to_vec();
    let sums = accumulate_bins(sample, bins, &centred);
    assemble(CovKind::Semivariogram, 0.0, sample.len() as u64, bins, &sums.counts, |k, cnt| {
        sums.sq_diffs[k] / (2.0 * cnt as f64)
    })
}

/// Robust semivariogram built from fourth powers of mean square-rooted
/// absolute differences, with the small-sample bias denominator
/// `0.457 + 0.494 / |N(h)|` over unordered pair counts.
pub fn cressie_hawkins_semivariogram(
    sample: &SpatialSample,
    bins: &LagBinning,
) -> Result<EmpiricalCovariogram> {
    let centred = sample.values().to_vec();
    let sums = accumulate_bins(sample, bins, &centred);
    let cov = assemble(
        CovKind::Semivariogram,
        0.0,
        sample.len() as u64,
        bins,
        &sums.counts,
        |k, cnt| {
            let mean_root = sums.root_diffs[k] / cnt as f64;
            let two_gamma = mean_root.powi(4) / (0.457 + 0.494 / cnt as f64);
            two_gamma / 2.0
        },
    )?;
    // Counts for this estimator are the plain unordered pair counts.
    let counts: Vec<u64> = cov
        .counts()
        .iter()
        .enumerate()
        .map(|(i, &c)| if i == 0 { c } else { c / 2 })
        .collect();
    EmpiricalCovariogram::new(
        CovKind::Semivariogram,
        cov.lags().to_vec(),
        cov.values().to_vec(),
        counts,
    )
}

/// Covariance from a semivariogram via `C(h) = variance - gamma(h)`.
pub fn variogram_to_covariance(
    vario: &EmpiricalCovariogram,
    variance: f64,
) -> Result<EmpiricalCovariogram> {
    if vario.kind() != CovKind::Semivariogram {
        return Err(CovarioError::InvalidInput("input must be a semivariogram".into()));
    }
    if !(variance >= 0.0) {
        return Err(CovarioError::InvalidInput("variance must be nonnegative".into()));
    }
    vario.map_values(CovKind::Covariance, |_, g| variance - g)
}

/// Classical covariogram restricted to pairs inside a search cone.
pub fn directional_covariogram(
    sample: &SpatialSample,
    bins: &LagBinning,
    dir: &DirectionSpec,
    mode: CenterMode,
) -> Result<EmpiricalCovariogram> {
    if sample.dim() != 2 {
        return Err(CovarioError::UnsupportedDimension { expected: 2, got: sample.dim() });
    }
    let centred = centered_values(sample, mode)?;
    let n = sample.len() as f64;
    let lag0 = centred.iter().map(|c| c * c).sum::<f64>() / n;
    let mut lags = vec![0.0];
    let mut values = vec![lag0];
    let mut counts = vec![sample.len() as u64];
    let mut any = false;
    for &center in &bins.centers {
        let ps = enumerate_directional_pairs(sample, center, bins.half_width, dir)?;
        if ps.count() == 0 {
            continue;
        }
        any = true;
        let sum: f64 = ps.pairs.iter().map(|&(i, j)| centred[i] * centred[j]).sum();
        lags.push(center);
        values.push(sum / ps.count() as f64);
        counts.push(ps.count() as u64);
    }
    if !any {
        return Err(CovarioError::NoEstimableLags);
    }
    EmpiricalCovariogram::new(CovKind::Covariance, lags, values, counts)
}

/// Outcome of the Toeplitz positive-definiteness check.
#[derive(Debug, Clone, Copy)]
pub struct PdCheck {
    pub min_eigenvalue: f64,
    pub is_pd: bool,
}

/// Builds the symmetric Toeplitz matrix of a covariogram on an arithmetic
/// lag grid and reports its minimum eigenvalue. The estimate counts as
/// positive-definite when the minimum eigenvalue is above
/// `-1e-10 * value(0)`.
pub fn check_positive_definite(cov: &EmpiricalCovariogram) -> Result<PdCheck> {
    let t = linalg::toeplitz_from_covariogram(cov)?;
    let min_eigenvalue = linalg::min_eigenvalue(&t);
    let tol = 1e-10 * cov.value_at_lag0().abs();
    Ok(PdCheck { min_eigenvalue, is_pd: min_eigenvalue >= -tol })
}

/// The two spatial summability sums. Both equal -1 for any non-constant
/// sample, regardless of the observed values.
#[derive(Debug, Clone, Copy)]
pub struct SummabilitySums {
    /// Sum over all exact separation vectors of the constant-denominator
    /// correlation estimates.
    pub plain_sum: f64,
    /// Count-weighted sum of the varying-denominator correlation estimates.
    pub weighted_sum: f64,
}

/// Enumerates the exact separation-vector set `H` (every ordered pair,
/// zero tolerance) and evaluates both summability identities.
pub fn summability_check(sample: &SpatialSample) -> Result<SummabilitySums> {
    let n = sample.len();
    if n < 2 {
        return Err(CovarioError::InvalidInput("need at least two locations".into()));
    }
    let centred = centered_values(sample, CenterMode::Centered)?;
    let sum_sq: f64 = centred.iter().map(|c| c * c).sum();
    if sum_sq == 0.0 {
        return Err(CovarioError::DegenerateVariance);
    }
    // Group ordered pairs by the exact separation vector (bit pattern).
    let mut groups: HashMap<Vec<u64>, (f64, u64)> = HashMap::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let key: Vec<u64> = sample.separation(i, j).iter().map(|d| d.to_bits()).collect();
            let entry = groups.entry(key).or_insert((0.0, 0));
            entry.0 += centred[i] * centred[j];
            entry.1 += 1;
        }
    }
    let n = n as f64;
    let variance = sum_sq / n;
    let mut plain_sum = 0.0;
    let mut weighted_sum = 0.0;
    for (sum, count) in groups.values() {
        // Constant-denominator correlation at this separation vector.
        plain_sum += (sum / n) / variance;
        // Varying-denominator correlation, weighted by |N(h)| / N.
        let rho = (sum / *count as f64) / variance;
        weighted_sum += (*count as f64 / n) * rho;
    }
    Ok(SummabilitySums { plain_sum, weighted_sum })
}

/// Per-lag mean of squared centred values over the pairs of each bin: the
/// quantity that `gamma(h) + C(h)` always equals, and that matches `C(0)`
/// only when the bin's mean square agrees with the global one.
pub fn restricted_second_moment(
    sample: &SpatialSample,
    bins: &LagBinning,
    mode: CenterMode,
) -> Result<EmpiricalCovariogram> {
    let centred = centered_values(sample, mode)?;
    let sums = accumulate_bins(sample, bins, &centred);
    let n = sample.len() as f64;
    let lag0 = centred.iter().map(|c| c * c).sum::<f64>() / n;
    assemble(CovKind::Covariance, lag0, sample.len() as u64, bins, &sums.counts, |k, cnt| {
        sums.sq_first[k] / (2.0 * cnt as f64)
    })
}
