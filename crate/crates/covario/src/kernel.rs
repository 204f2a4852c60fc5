//! Kernel-regression covariogram estimation, spectral positivization, and
//! the truncated tail estimator.

use rayon::prelude::*;

use crate::classical::CenterMode;
use crate::covariogram::{CovKind, EmpiricalCovariogram};
use crate::error::{CovarioError, Result};
use crate::spatial::{mean_nearest_neighbor_distance, sample_mean, SpatialSample};

/// Symmetric probability densities usable as regression kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionKernel {
    Gaussian,
    Epanechnikov,
    Triangular,
}

impl RegressionKernel {
    pub fn density(&self, x: f64) -> f64 {
        match self {
            RegressionKernel::Gaussian => {
                (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }
            RegressionKernel::Epanechnikov => {
                if x.abs() < 1.0 {
                    0.75 * (1.0 - x * x)
                } else {
                    0.0
                }
            }
            RegressionKernel::Triangular => (1.0 - x.abs()).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KernelRegressionConfig {
    pub kernel: RegressionKernel,
    pub bandwidth: f64,
}

impl KernelRegressionConfig {
    pub fn new(kernel: RegressionKernel, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(CovarioError::InvalidInput("bandwidth must be positive".into()));
        }
        Ok(Self { kernel, bandwidth })
    }
}

/// Default bandwidth rule: 1.5 times the mean nearest-neighbour distance,
/// which keeps several pairs inside every kernel window on regular grids.
pub fn default_bandwidth(sample: &SpatialSample) -> f64 {
    1.5 * mean_nearest_neighbor_distance(sample)
}

/// Linear truncation window: descend to zero on `(t1, t2]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncationConfig {
    pub t1: f64,
    pub t2: f64,
}

impl TruncationConfig {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1 > 0.0 && t2 > t1) {
            return Err(CovarioError::InvalidInput("need 0 < T1 < T2".into()));
        }
        Ok(Self { t1, t2 })
    }
}

/// Kernel regression estimate plus the evaluation lags that were dropped
/// because every kernel weight vanished there.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub covariogram: EmpiricalCovariogram,
    pub omitted_lags: Vec<f64>,
}

fn validate_eval_lags(eval_lags: &[f64]) -> Result<()> {
    if eval_lags.is_empty() || eval_lags[0] != 0.0 {
        return Err(CovarioError::InvalidInput("evaluation lags must start at 0".into()));
    }
    if !eval_lags.windows(2).all(|w| w[1] > w[0]) {
        return Err(CovarioError::InvalidInput("evaluation lags must be increasing".into()));
    }
    if eval_lags.iter().any(|l| !l.is_finite()) {
        return Err(CovarioError::InvalidInput("evaluation lags must be finite".into()));
    }
    Ok(())
}

/// Centred cross-products and pair distances, diagonal excluded; the
/// diagonal contributes `count` copies of distance 0 with products `c_i^2`.
struct PairTable {
    distances: Vec<f64>,
    products: Vec<f64>,
    diag_product_sum: f64,
    n: usize,
}

fn pair_table(sample: &SpatialSample, mode: CenterMode) -> Result<PairTable> {
    let mean = match mode {
        CenterMode::Centered => sample_mean(sample)?,
        CenterMode::ZeroMean => 0.0,
    };
    let c: Vec<f64> = sample.values().iter().map(|v| v - mean).collect();
    let n = sample.len();
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    let mut products = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            distances.push(sample.distance(i, j));
            products.push(c[i] * c[j]);
        }
    }
    let diag_product_sum = c.iter().map(|v| v * v).sum();
    Ok(PairTable { distances, products, diag_product_sum, n })
}

fn kernel_ratio_at(table: &PairTable, config: &KernelRegressionConfig, t: f64) -> (f64, f64, u64) {
    let t = t.abs();
    let b = config.bandwidth;
    let k0 = config.kernel.density(t / b);
    // Diagonal pairs all sit at distance 0.
    let mut num = k0 * table.diag_product_sum;
    let mut den = k0 * table.n as f64;
    let mut support = if k0 > 0.0 { table.n as u64 } else { 0 };
    for (d, p) in table.distances.iter().zip(&table.products) {
        let w = config.kernel.density((t - d) / b);
        if w > 0.0 {
            // Each unordered pair stands for the two ordered orientations.
            num += 2.0 * w * p;
            den += 2.0 * w;
            support += 2;
        }
    }
    (num, den, support)
}

/// Nadaraya-Watson covariogram: the ratio of kernel-weighted centred
/// cross-products over all ordered pairs, the diagonal included. Evaluation
/// is symmetric in the sign of the lag.
pub fn kernel_covariogram(
    sample: &SpatialSample,
    eval_lags: &[f64],
    config: &KernelRegressionConfig,
    mode: CenterMode,
) -> Result<KernelEstimate> {
    validate_eval_lags(eval_lags)?;
    let table = pair_table(sample, mode)?;
    let evals: Vec<(f64, f64, u64)> = eval_lags
        .par_iter()
        .map(|&t| kernel_ratio_at(&table, config, t))
        .collect();
    let mut lags = Vec::new();
    let mut values = Vec::new();
    let mut counts = Vec::new();
    let mut omitted = Vec::new();
    for (&t, &(num, den, support)) in eval_lags.iter().zip(&evals) {
        if den > 0.0 {
            lags.push(t);
            values.push(num / den);
            counts.push(support);
        } else {
            omitted.push(t);
        }
    }
    if lags.is_empty() || lags[0] != 0.0 {
        return Err(CovarioError::NoEstimableLags);
    }
    Ok(KernelEstimate {
        covariogram: EmpiricalCovariogram::new(CovKind::Covariance, lags, values, counts)?,
        omitted_lags: omitted,
    })
}

/// Clips negative coefficients of the discrete cosine spectrum of the
/// symmetrically extended covariogram and transforms back. The output's
/// Toeplitz matrices are principal submatrices of a positive-semidefinite
/// circulant, hence positive-semidefinite themselves, and the map is
/// idempotent.
pub fn positivize_spectrum(cov: &EmpiricalCovariogram) -> Result<EmpiricalCovariogram> {
    cov.arithmetic_step()?;
    let v = cov.values();
    let l = v.len() - 1;
    if l == 0 {
        let value = v[0].max(0.0);
        return EmpiricalCovariogram::new(
            cov.kind(),
            cov.lags().to_vec(),
            vec![value],
            cov.counts().to_vec(),
        );
    }
    let period = 2 * l;
    let extended: Vec<f64> = (0..period).map(|k| v[k.min(period - k)]).collect();
    let omega = 2.0 * std::f64::consts::PI / period as f64;
    let spectrum: Vec<f64> = (0..period)
        .map(|j| {
            extended
                .iter()
                .enumerate()
                .map(|(k, &x)| x * (omega * (j * k) as f64).cos())
                .sum::<f64>()
        })
        .collect();
    let clipped: Vec<f64> = spectrum.iter().map(|&s| s.max(0.0)).collect();
    let values: Vec<f64> = (0..=l)
        .map(|k| {
            clipped
                .iter()
                .enumerate()
                .map(|(j, &s)| s * (omega * (j * k) as f64).cos())
                .sum::<f64>()
                / period as f64
        })
        .collect();
    EmpiricalCovariogram::new(cov.kind(), cov.lags().to_vec(), values, cov.counts().to_vec())
}

/// Step-one profile of the truncated estimator: the kernel estimate up to
/// `t1`, a linear descent from its `t1` value to zero at `t2`, and zero
/// beyond.
pub fn hall_profile(
    sample: &SpatialSample,
    eval_lags: &[f64],
    config: &KernelRegressionConfig,
    trunc: &TruncationConfig,
    mode: CenterMode,
) -> Result<Vec<f64>> {
    validate_eval_lags(eval_lags)?;
    if *eval_lags.last().unwrap() < trunc.t2 {
        return Err(CovarioError::InvalidInput(
            "evaluation lags must extend to at least T2".into(),
        ));
    }
    let table = pair_table(sample, mode)?;
    let value_at = |t: f64| -> Result<f64> {
        let (num, den, _) = kernel_ratio_at(&table, config, t);
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(CovarioError::InvalidInput(format!(
                "kernel estimate undefined at lag {t}: all weights vanish"
            )))
        }
    };
    let at_t1 = value_at(trunc.t1)?;
    eval_lags
        .iter()
        .map(|&t| {
            if t <= trunc.t1 {
                value_at(t)
            } else if t <= trunc.t2 {
                Ok(at_t1 * (trunc.t2 - t) / (trunc.t2 - trunc.t1))
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

/// Truncated, spectrally positivized kernel covariogram. The profile's
/// cosine transform is clipped past its first strictly negative frequency,
/// then inverted over the retained band.
pub fn hall_truncated_estimator(
    sample: &SpatialSample,
    eval_lags: &[f64],
    config: &KernelRegressionConfig,
    trunc: &TruncationConfig,
    mode: CenterMode,
) -> Result<EmpiricalCovariogram> {
    let profile = hall_profile(sample, eval_lags, config, trunc, mode)?;
    let values = cosine_positivize(eval_lags, &profile)?;
    let counts = vec![0; eval_lags.len()];
    EmpiricalCovariogram::new(CovKind::Covariance, eval_lags.to_vec(), values, counts)
}

/// Cosine transform on the lag grid, clip past the first strictly negative
/// frequency, inverse transform over the retained band. Both transforms use
/// trapezoidal quadrature; the frequency grid oversamples the transform
/// length fourfold.
fn cosine_positivize(lags: &[f64], profile: &[f64]) -> Result<Vec<f64>> {
    let n = lags.len();
    if n < 2 {
        return Ok(profile.to_vec());
    }
    let dt = lags[1] - lags[0];
    let t_max = lags[n - 1];
    let theta_max = std::f64::consts::PI / dt;
    let d_theta = std::f64::consts::PI / (4.0 * t_max);
    let n_freq = (theta_max / d_theta).ceil() as usize + 1;
    let trapezoid_weight = |idx: usize, len: usize| if idx == 0 || idx == len - 1 { 0.5 } else { 1.0 };
    let transform: Vec<f64> = (0..n_freq)
        .into_par_iter()
        .map(|j| {
            let theta = j as f64 * d_theta;
            2.0 * dt
                * profile
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| trapezoid_weight(k, n) * v * (theta * lags[k]).cos())
                    .sum::<f64>()
        })
        .collect();
    let first_negative = transform.iter().position(|&f| f < 0.0);
    let band = match first_negative {
        Some(j) if j <= 1 => return Err(CovarioError::PositivizationFailed),
        Some(j) => j,
        None => n_freq - 1,
    };
    // Retain [0, theta_band]; the transform is treated as zero at the band
    // edge and beyond.
    let values: Vec<f64> = lags
        .par_iter()
        .map(|&t| {
            let mut acc = 0.0;
            for j in 0..=band {
                let f = if j == band { 0.0 } else { transform[j] };
                let w = trapezoid_weight(j, band + 1);
                acc += w * f * (j as f64 * d_theta * t).cos();
            }
            acc * d_theta / std::f64::consts::PI
        })
        .collect();
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{check_positive_definite, classical_covariogram};
    use crate::spatial::build_lag_bins;
    use approx::assert_relative_eq;

    fn gaussian(b: f64) -> KernelRegressionConfig {
        KernelRegressionConfig::new(RegressionKernel::Gaussian, b).unwrap()
    }

    #[test]
    fn single_pair_weights_cancel() {
        let s = SpatialSample::new(1, vec![0.0, 2.5], vec![1.0, -3.0]).unwrap();
        // With a compact kernel the diagonal mass at distance 0 is out of
        // reach at t = 2.5, so the ratio collapses to the cross-product.
        for kernel in [RegressionKernel::Epanechnikov, RegressionKernel::Triangular] {
            let config = KernelRegressionConfig::new(kernel, 0.5).unwrap();
            let est =
                kernel_covariogram(&s, &[0.0, 2.5], &config, CenterMode::ZeroMean).unwrap();
            let idx = est.covariogram.lags().iter().position(|&l| l == 2.5).unwrap();
            assert_relative_eq!(est.covariogram.values()[idx], -3.0, max_relative = 1e-12);
        }
        // The Gaussian kernel never vanishes, so cancellation is only
        // approximate: the diagonal carries weight exp(-12.5) relative.
        let config = gaussian(0.5);
        let est = kernel_covariogram(&s, &[0.0, 2.5], &config, CenterMode::ZeroMean).unwrap();
        assert_relative_eq!(est.covariogram.values()[1], -3.0, epsilon = 1e-3);
    }

    #[test]
    fn small_bandwidth_recovers_classical_on_lattice() {
        let values = [0.7, -0.4, 1.9, 0.2, -1.3, 0.8, 0.1, -0.6];
        let s = SpatialSample::from_series(&values).unwrap();
        let bins = build_lag_bins(&s, 4).unwrap();
        let classical = classical_covariogram(&s, &bins, CenterMode::Centered).unwrap();
        let est = kernel_covariogram(
            &s,
            &[0.0, 1.0, 2.0, 3.0, 4.0],
            &gaussian(1e-3),
            CenterMode::Centered,
        )
        .unwrap();
        for (idx, &lag) in est.covariogram.lags().iter().enumerate().skip(1) {
            let cidx = classical.lags().iter().position(|&l| l == lag).unwrap();
            assert_relative_eq!(
                est.covariogram.values()[idx],
                classical.values()[cidx],
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn evaluation_symmetric_in_lag_sign() {
        let s = SpatialSample::from_series(&[0.3, 1.0, -0.8, 0.4, 1.2]).unwrap();
        let table = pair_table(&s, CenterMode::Centered).unwrap();
        let config = gaussian(0.7);
        for t in [0.4, 1.3, 2.8] {
            let (np, dp, _) = kernel_ratio_at(&table, &config, t);
            let (nm, dm, _) = kernel_ratio_at(&table, &config, -t);
            assert_relative_eq!(np / dp, nm / dm);
        }
    }

    #[test]
    fn compact_kernel_omits_unreachable_lags() {
        let s = SpatialSample::new(1, vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let config = KernelRegressionConfig::new(RegressionKernel::Epanechnikov, 0.2).unwrap();
        let est =
            kernel_covariogram(&s, &[0.0, 0.5, 1.0], &config, CenterMode::ZeroMean).unwrap();
        assert_eq!(est.omitted_lags, vec![0.5]);
        assert_eq!(est.covariogram.lags(), &[0.0, 1.0]);
    }

    #[test]
    fn positivize_fixes_the_counterexample_row() {
        let cov = EmpiricalCovariogram::new(
            CovKind::Covariance,
            vec![0.0, 1.0, 2.0],
            vec![2.0 / 3.0, 0.0, 1.0],
            vec![3, 4, 2],
        )
        .unwrap();
        let fixed = positivize_spectrum(&cov).unwrap();
        let check = check_positive_definite(&fixed).unwrap();
        assert!(check.min_eigenvalue >= -1e-10, "min eig {}", check.min_eigenvalue);
        // Idempotent.
        let again = positivize_spectrum(&fixed).unwrap();
        for (a, b) in fixed.values().iter().zip(again.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn positivize_keeps_zero_and_identity_inputs() {
        let zero = EmpiricalCovariogram::new(
            CovKind::Covariance,
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.0, 0.0],
            vec![1, 1, 1],
        )
        .unwrap();
        let out = positivize_spectrum(&zero).unwrap();
        for v in out.values() {
            assert_relative_eq!(*v, 0.0);
        }
        // A spike at lag 0 has a constant positive spectrum already.
        let spike = EmpiricalCovariogram::new(
            CovKind::Covariance,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1, 1, 1, 1],
        )
        .unwrap();
        let out = positivize_spectrum(&spike).unwrap();
        for (a, b) in spike.values().iter().zip(out.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn profile_is_continuous_at_t1_and_zero_past_t2() {
        let values = [0.9, 0.4, 1.3, -0.2, 0.6, 1.0, -0.5, 0.3, 0.8, -0.1];
        let s = SpatialSample::from_series(&values).unwrap();
        let lags: Vec<f64> = (0..=8).map(|i| i as f64).collect();
        let trunc = TruncationConfig::new(3.0, 5.0).unwrap();
        let config = gaussian(1.0);
        let profile = hall_profile(&s, &lags, &config, &trunc, CenterMode::Centered).unwrap();
        let table = pair_table(&s, CenterMode::Centered).unwrap();
        let (num, den, _) = kernel_ratio_at(&table, &config, 3.0);
        assert_relative_eq!(profile[3], num / den, max_relative = 1e-12);
        assert_relative_eq!(profile[5], 0.0);
        for &v in &profile[6..] {
            assert_relative_eq!(v, 0.0);
        }
    }

    #[test]
    fn zero_field_stays_zero_through_the_pipeline() {
        let s = SpatialSample::from_series(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let lags: Vec<f64> = (0..=5).map(|i| i as f64).collect();
        let trunc = TruncationConfig::new(2.0, 4.0).unwrap();
        let out = hall_truncated_estimator(&s, &lags, &gaussian(1.0), &trunc, CenterMode::ZeroMean)
            .unwrap();
        for v in out.values() {
            assert_relative_eq!(*v, 0.0);
        }
    }
}
