//! Covariogram fits by nonnegative linear combinations of positive-definite
//! basis families: completely monotone B-spline moments, normalized Bessel
//! profiles, and Bernstein-type rational products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariogram::EmpiricalCovariogram;
use crate::error::{CovarioError, Result};
use crate::special::{bessel_j_roots, lambda_profile};

/// Basis family of a fitted covariogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BasisFamily {
    /// Moments of degree-`p` B-splines on `m + 1` equally spaced knots in
    /// [0, 1], evaluated at squared lags: `m + p` completely monotone basis
    /// functions.
    BSpline { m: usize, p: usize },
    /// Normalized Bessel profiles for dimension `dim` at fixed jump points.
    Bessel { dim: usize, jumps: Vec<f64> },
    /// Products `prod_{j=i}^m (1 + tau^2 / j)^{-1}`, `i = 1..m`.
    Bernstein { m: usize },
}

impl BasisFamily {
    pub fn basis_count(&self) -> usize {
        match self {
            BasisFamily::BSpline { m, p } => m + p,
            BasisFamily::Bessel { jumps, .. } => jumps.len(),
            BasisFamily::Bernstein { m } => *m,
        }
    }

    /// Value of basis function `j` (1-based) at lag `tau`.
    pub fn basis_value(&self, j: usize, tau: f64) -> f64 {
        match self {
            BasisFamily::BSpline { m, p } => monotone_basis_eval(j, *p, tau * tau, *m),
            BasisFamily::Bessel { dim, jumps } => bessel_basis_eval(*dim, jumps[j - 1], tau),
            BasisFamily::Bernstein { m } => bernstein_basis_eval(j, *m, tau),
        }
    }
}

/// Weighting of the squared residuals in the fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum WeightsMode {
    /// `w_i = |N(tau_i)| / (1 - C(tau_i))^2`, the denominator floored at
    /// 1e-6 to keep the lag-0 weight finite.
    #[default]
    Choi,
    Uniform,
    Custom(Vec<f64>),
}

/// Nonnegative coefficients over a basis family, evaluable at any lag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedCovariogram {
    #[serde(flatten)]
    pub family: BasisFamily,
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub rank_deficient: bool,
}

impl FittedCovariogram {
    pub fn value(&self, tau: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(idx, &c)| if c != 0.0 { c * self.family.basis_value(idx + 1, tau) } else { 0.0 })
            .sum()
    }

    pub fn write_json<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

// ---------------------------------------------------------------------------
// B-spline basis

/// Clamped knot vector: `p + 1` copies of each end knot around `m - 1`
/// equally spaced interior knots.
fn bspline_knots(m: usize, degree: usize) -> Vec<f64> {
    let mut knots = vec![0.0; degree + 1];
    knots.extend((1..m).map(|i| i as f64 / m as f64));
    knots.extend(std::iter::repeat(1.0).take(degree + 1));
    knots
}

/// Cox-de Boor evaluation of the `j`-th (0-based) degree-`d` B-spline.
fn bspline_value(knots: &[f64], degree: usize, j: usize, t: f64) -> f64 {
    let n_basis = knots.len() - degree - 1;
    if t <= 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    if t >= 1.0 {
        return if j == n_basis - 1 { 1.0 } else { 0.0 };
    }
    // Degree-0 seed over half-open intervals.
    let mut b: Vec<f64> = (0..=degree)
        .map(|r| {
            let idx = j + r;
            if knots[idx] <= t && t < knots[idx + 1] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for d in 1..=degree {
        for r in 0..=(degree - d) {
            let idx = j + r;
            let left_den = knots[idx + d] - knots[idx];
            let right_den = knots[idx + d + 1] - knots[idx + 1];
            let left = if left_den > 0.0 { (t - knots[idx]) / left_den * b[r] } else { 0.0 };
            let right = if right_den > 0.0 {
                (knots[idx + d + 1] - t) / right_den * b[r + 1]
            } else {
                0.0
            };
            b[r] = left + right;
        }
    }
    b[0]
}

/// Gauss-Legendre 10-point nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.1488743389816312,
    0.4333953941292472,
    0.6794095682990244,
    0.8650633666889845,
    0.9739065285171717,
];
const GL_WEIGHTS: [f64; 5] = [
    0.2955242247147529,
    0.2692667193099963,
    0.2190863625159820,
    0.1494513491505806,
    0.0666713443086881,
];

fn gl10<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..5 {
        acc += GL_WEIGHTS[i] * (f(mid - half * GL_NODES[i]) + f(mid + half * GL_NODES[i]));
    }
    acc * half
}

/// Adaptive Gauss-Legendre quadrature to the given absolute tolerance.
fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let whole = gl10(f, a, b);
    let mid = 0.5 * (a + b);
    let split = gl10(f, a, mid) + gl10(f, mid, b);
    if (whole - split).abs() <= tol || depth >= 30 {
        split
    } else {
        integrate_adaptive(f, a, mid, tol / 2.0, depth + 1)
            + integrate_adaptive(f, mid, b, tol / 2.0, depth + 1)
    }
}

/// Completely monotone basis value `(m+1) \int_0^1 t^x B_j(t) dt`, with the
/// degree-`d` B-spline basis indexed `j = 1..m+d`.
pub fn monotone_basis_eval(j: usize, degree: usize, x: f64, m: usize) -> f64 {
    assert!(m >= 1 && degree >= 1, "need m >= 1 and degree >= 1");
    assert!(j >= 1 && j <= m + degree, "basis index out of range");
    assert!(x >= 0.0, "argument must be nonnegative");
    let knots = bspline_knots(m, degree);
    let j0 = j - 1;
    // Integrate only over the spline's support, split at its knots.
    let lo = knots[j0].max(0.0);
    let hi = knots[j0 + degree + 1].min(1.0);
    let f = |t: f64| t.powf(x) * bspline_value(&knots, degree, j0, t);
    let mut acc = 0.0;
    let mut segments = 0usize;
    let mut prev = lo;
    for &k in &knots[j0 + 1..=j0 + degree + 1] {
        let k = k.clamp(lo, hi);
        if k > prev {
            segments += 1;
            acc += integrate_adaptive(&f, prev, k, 1e-10 / (degree + 1) as f64, 0);
            prev = k;
        }
    }
    debug_assert!(segments > 0);
    (m as f64 + 1.0) * acc
}

/// Exact value of the basis at `x = 0` from the B-spline integral identity
/// `int B_j = (k_{j+d+1} - k_j) / (d + 1)`.
pub fn monotone_basis_at_zero(j: usize, degree: usize, m: usize) -> f64 {
    let knots = bspline_knots(m, degree);
    let j0 = j - 1;
    (m as f64 + 1.0) * (knots[j0 + degree + 1] - knots[j0]) / (degree as f64 + 1.0)
}

// ---------------------------------------------------------------------------
// Bessel and Bernstein bases

/// Normalized Bessel profile `Lambda_dim(k tau)`, continuous with value 1
/// at the origin.
pub fn bessel_basis_eval(dim: usize, k: f64, tau: f64) -> f64 {
    assert!(k > 0.0, "jump point must be positive");
    lambda_profile(dim, k * tau)
}

/// Default jump points: the first `count` positive roots of the profile's
/// Bessel order, scaled by `1 / tau_max`.
pub fn default_bessel_jumps(dim: usize, count: usize, tau_max: f64) -> Result<Vec<f64>> {
    if !(tau_max > 0.0) {
        return Err(CovarioError::InvalidInput("tau_max must be positive".into()));
    }
    if dim == 0 {
        return Err(CovarioError::InvalidInput("dimension must be at least 1".into()));
    }
    if dim == 1 {
        // The profile reduces to cos, with roots at (k - 1/2) pi.
        return Ok((1..=count)
            .map(|k| (k as f64 - 0.5) * std::f64::consts::PI / tau_max)
            .collect());
    }
    let nu = (dim as f64 - 2.0) / 2.0;
    Ok(bessel_j_roots(nu, count).into_iter().map(|r| r / tau_max).collect())
}

/// Bernstein-type basis `prod_{j=i}^m (1 + tau^2 / j)^{-1}`.
pub fn bernstein_basis_eval(i: usize, m: usize, tau: f64) -> f64 {
    assert!(i >= 1 && i <= m, "basis index out of range");
    let t2 = tau * tau;
    (i..=m).map(|j| 1.0 / (1.0 + t2 / j as f64)).product()
}

// ---------------------------------------------------------------------------
// Nonnegative least squares

/// Outcome of the nonnegative least-squares solve.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub coefficients: Vec<f64>,
    /// Set when some passive-set subproblem was rank-deficient and the
    /// minimum-norm optimum was taken.
    pub rank_deficient: bool,
}

/// Weighted nonnegative least squares by the active-set method with
/// lowest-index tie-breaking: minimizes `sum_i w_i (target_i - (D x)_i)^2`
/// subject to `x >= 0`.
pub fn nnls_solve(design: &DMatrix<f64>, target: &DVector<f64>, weights: &[f64]) -> Result<NnlsSolution> {
    let (rows, cols) = design.shape();
    if target.len() != rows || weights.len() != rows {
        return Err(CovarioError::InvalidInput("inconsistent NNLS dimensions".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(CovarioError::InvalidInput("weights must be positive".into()));
    }
    let sqrt_w = DVector::from_iterator(rows, weights.iter().map(|w| w.sqrt()));
    let mut a = design.clone();
    for r in 0..rows {
        for c in 0..cols {
            a[(r, c)] *= sqrt_w[r];
        }
    }
    let b = DVector::from_iterator(rows, target.iter().zip(weights).map(|(t, w)| t * w.sqrt()));

    let mut x = DVector::<f64>::zeros(cols);
    let mut passive = vec![false; cols];
    let mut rank_deficient = false;
    let scale = a.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-300)
        * b.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-300);
    let grad_tol = 1e-12 * scale.max(1e-300);

    let solve_passive = |passive: &[bool], rank_flag: &mut bool| -> DVector<f64> {
        let idx: Vec<usize> = (0..cols).filter(|&c| passive[c]).collect();
        let sub = DMatrix::from_fn(rows, idx.len(), |r, c| a[(r, idx[c])]);
        let svd = sub.svd(true, true);
        let max_sv = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
        let eps = 1e-12 * max_sv.max(1e-300);
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        if rank < idx.len() {
            *rank_flag = true;
        }
        let z = svd.solve(&b, eps).expect("SVD solve");
        let mut full = DVector::zeros(cols);
        for (c, &col) in idx.iter().enumerate() {
            full[col] = z[c];
        }
        full
    };

    for _outer in 0..(3 * cols.max(10) * (cols + 1)) {
        let residual = &b - &a * &x;
        let grad = a.transpose() * residual;
        // Most negative KKT violation among the zero coefficients, lowest
        // index first.
        let mut enter: Option<usize> = None;
        let mut best = grad_tol;
        for c in 0..cols {
            if !passive[c] && grad[c] > best {
                best = grad[c];
                enter = Some(c);
            }
        }
        let Some(enter) = enter else {
            return Ok(NnlsSolution { coefficients: x.iter().copied().collect(), rank_deficient });
        };
        passive[enter] = true;
        loop {
            let z = solve_passive(&passive, &mut rank_deficient);
            let feasible = (0..cols).all(|c| !passive[c] || z[c] > 0.0);
            if feasible {
                x = z;
                break;
            }
            // Step toward z until the first passive coefficient hits zero;
            // that blocker leaves the passive set, so the inner loop is
            // finite.
            let mut alpha = 1.0f64;
            let mut blocker = None;
            for c in 0..cols {
                if passive[c] && z[c] <= 0.0 {
                    let denom = x[c] - z[c];
                    let step = if denom > 0.0 { x[c] / denom } else { 0.0 };
                    if step < alpha {
                        alpha = step;
                        blocker = Some(c);
                    }
                }
            }
            for c in 0..cols {
                if passive[c] {
                    x[c] = (x[c] + alpha * (z[c] - x[c])).max(0.0);
                }
            }
            if let Some(bc) = blocker {
                x[bc] = 0.0;
            }
            for c in 0..cols {
                if passive[c] && x[c] <= 0.0 {
                    passive[c] = false;
                    x[c] = 0.0;
                }
            }
        }
    }
    Err(CovarioError::InvalidInput("NNLS failed to converge".into()))
}

// ---------------------------------------------------------------------------
// Fitting

fn fit_weights(emp: &EmpiricalCovariogram, mode: &WeightsMode) -> Result<Vec<f64>> {
    match mode {
        WeightsMode::Uniform => Ok(vec![1.0; emp.len()]),
        WeightsMode::Custom(w) => {
            if w.len() != emp.len() {
                return Err(CovarioError::InvalidInput("custom weight length mismatch".into()));
            }
            Ok(w.clone())
        }
        WeightsMode::Choi => Ok(emp
            .values()
            .iter()
            .zip(emp.counts())
            .map(|(&v, &n)| {
                let denom = ((1.0 - v) * (1.0 - v)).max(1e-6);
                (n.max(1)) as f64 / denom
            })
            .collect()),
    }
}

fn fit_family(
    emp: &EmpiricalCovariogram,
    family: BasisFamily,
    weights_mode: &WeightsMode,
) -> Result<FittedCovariogram> {
    if emp.len() < 2 {
        return Err(CovarioError::InvalidInput("need at least two lags to fit".into()));
    }
    let k = family.basis_count();
    let design = DMatrix::from_fn(emp.len(), k, |r, c| family.basis_value(c + 1, emp.lags()[r]));
    let target = DVector::from_column_slice(emp.values());
    let weights = fit_weights(emp, weights_mode)?;
    let solution = nnls_solve(&design, &target, &weights)?;
    Ok(FittedCovariogram {
        family,
        coefficients: solution.coefficients,
        rank_deficient: solution.rank_deficient,
    })
}

/// Weighted nonnegative fit of the completely monotone B-spline basis at
/// squared lags.
pub fn fit_bspline_covariogram(
    emp: &EmpiricalCovariogram,
    m: usize,
    p: usize,
    weights_mode: &WeightsMode,
) -> Result<FittedCovariogram> {
    if m < 1 || p < 1 {
        return Err(CovarioError::InvalidInput("need m >= 1 and p >= 1".into()));
    }
    fit_family(emp, BasisFamily::BSpline { m, p }, weights_mode)
}

/// Weighted nonnegative fit of normalized Bessel profiles at the given jump
/// points (defaults to scaled Bessel roots when `jumps` is `None`).
pub fn fit_bessel_covariogram(
    emp: &EmpiricalCovariogram,
    dim: usize,
    jumps: Option<Vec<f64>>,
    count: usize,
    weights_mode: &WeightsMode,
) -> Result<FittedCovariogram> {
    let jumps = match jumps {
        Some(j) => {
            if j.is_empty() || j.iter().any(|&k| !(k > 0.0)) {
                return Err(CovarioError::InvalidInput("jump points must be positive".into()));
            }
            let mut s = j;
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s
        }
        None => {
            let tau_max = *emp.lags().last().unwrap();
            default_bessel_jumps(dim, count, tau_max)?
        }
    };
    fit_family(emp, BasisFamily::Bessel { dim, jumps }, weights_mode)
}

/// Weighted nonnegative fit of the Bernstein-type basis.
pub fn fit_bernstein_covariogram(
    emp: &EmpiricalCovariogram,
    m: usize,
    weights_mode: &WeightsMode,
) -> Result<FittedCovariogram> {
    if m < 1 {
        return Err(CovarioError::InvalidInput("need m >= 1".into()));
    }
    fit_family(emp, BasisFamily::Bernstein { m }, weights_mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariogram::CovKind;
    use approx::assert_relative_eq;

    fn emp_from(lags: Vec<f64>, values: Vec<f64>) -> EmpiricalCovariogram {
        let counts = vec![10; lags.len()];
        EmpiricalCovariogram::new(CovKind::Covariance, lags, values, counts).unwrap()
    }

    #[test]
    fn bsplines_partition_unity() {
        for (m, degree) in [(2usize, 3usize), (4, 2), (1, 1)] {
            let knots = bspline_knots(m, degree);
            let n_basis = m + degree;
            for t in [0.0, 0.13, 0.5, 0.77, 0.999, 1.0] {
                let total: f64 =
                    (0..n_basis).map(|j| bspline_value(&knots, degree, j, t)).sum();
                assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn monotone_basis_value_at_zero_matches_closed_form() {
        for (m, p) in [(2usize, 3usize), (3, 2)] {
            for j in 1..=(m + p) {
                assert_relative_eq!(
                    monotone_basis_eval(j, p, 0.0, m),
                    monotone_basis_at_zero(j, p, m),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn monotone_basis_is_monotone_and_nonnegative() {
        let (m, p) = (2usize, 3usize);
        let mut state = 11u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let j = 1 + (next() * (m + p) as f64) as usize;
            let x1 = next() * 20.0;
            let x2 = x1 + next() * 20.0;
            let f1 = monotone_basis_eval(j.min(m + p), p, x1, m);
            let f2 = monotone_basis_eval(j.min(m + p), p, x2, m);
            assert!(f1 >= 0.0 && f2 >= 0.0);
            assert!(f1 >= f2 - 1e-10, "f({x1}) = {f1} < f({x2}) = {f2}");
        }
    }

    #[test]
    fn bessel_basis_normalization_and_reductions() {
        assert_relative_eq!(bessel_basis_eval(2, 1.3, 0.0), 1.0);
        for tau in [0.3, 1.0, 4.2] {
            assert_relative_eq!(bessel_basis_eval(2, 1.0, tau), libm::j0(tau), epsilon = 1e-12);
            assert_relative_eq!(
                bessel_basis_eval(3, 2.0, tau),
                (2.0 * tau).sin() / (2.0 * tau),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn bernstein_values_and_monotonicity() {
        assert_relative_eq!(bernstein_basis_eval(1, 1, 0.0), 1.0);
        assert_relative_eq!(bernstein_basis_eval(1, 1, 1.0), 0.5);
        let m = 5;
        for i in 1..=m {
            let mut prev = f64::INFINITY;
            for step in 0..20 {
                let tau = step as f64 * 0.3;
                let v = bernstein_basis_eval(i, m, tau);
                assert!(v <= prev + 1e-14);
                assert!(v > 0.0 && v <= 1.0);
                prev = v;
            }
        }
        // Increasing in i for fixed tau and m.
        for tau in [0.5, 1.5, 3.0] {
            for i in 1..m {
                assert!(bernstein_basis_eval(i, m, tau) <= bernstein_basis_eval(i + 1, m, tau));
            }
        }
    }

    #[test]
    fn nnls_identity_design() {
        let design = DMatrix::<f64>::identity(2, 2);
        let sol = nnls_solve(&design, &DVector::from_column_slice(&[0.5, 2.0]), &[1.0, 1.0])
            .unwrap();
        assert_relative_eq!(sol.coefficients[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(sol.coefficients[1], 2.0, epsilon = 1e-12);
        let sol = nnls_solve(&design, &DVector::from_column_slice(&[-1.0, 2.0]), &[1.0, 1.0])
            .unwrap();
        assert_relative_eq!(sol.coefficients[0], 0.0);
        assert_relative_eq!(sol.coefficients[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn nnls_dominates_random_candidates() {
        let mut state = 3u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _rep in 0..5 {
            let design = DMatrix::from_fn(10, 4, |_, _| next());
            let target = DVector::from_fn(10, |_, _| next());
            let weights = vec![1.0; 10];
            let sol = nnls_solve(&design, &target, &weights).unwrap();
            let x = DVector::from_column_slice(&sol.coefficients);
            let objective = (&target - &design * &x).norm_squared();
            for _cand in 0..100_000 {
                let cand = DVector::from_fn(4, |_, _| next().abs() * 2.0);
                let obj = (&target - &design * &cand).norm_squared();
                assert!(obj >= objective - 1e-9, "candidate beat NNLS: {obj} < {objective}");
            }
        }
    }

    #[test]
    fn bspline_fit_recovers_single_basis_function() {
        let (m, p) = (2usize, 3usize);
        let family = BasisFamily::BSpline { m, p };
        let lags: Vec<f64> = (0..12).map(|i| i as f64 * 0.4).collect();
        let truth_index = 3usize; // 1-based
        let values: Vec<f64> = lags.iter().map(|&t| family.basis_value(truth_index, t)).collect();
        let emp = emp_from(lags.clone(), values.clone());
        let fit = fit_bspline_covariogram(&emp, m, p, &WeightsMode::Uniform).unwrap();
        let residual: f64 = lags
            .iter()
            .zip(&values)
            .map(|(&t, &v)| (fit.value(t) - v).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(residual < 1e-8, "residual {residual}");
        let (argmax, _) = fit
            .coefficients
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(argmax + 1, truth_index);
        assert_relative_eq!(fit.coefficients[truth_index - 1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn bspline_fit_zero_input_gives_zero_coefficients() {
        let lags: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let emp = emp_from(lags.clone(), vec![0.0; 8]);
        let fit = fit_bspline_covariogram(&emp, 2, 3, &WeightsMode::Uniform).unwrap();
        for c in &fit.coefficients {
            assert_relative_eq!(*c, 0.0);
        }
        // The paper-scale configuration m = 2, p = 3 is accepted.
        assert_eq!(fit.coefficients.len(), 5);
    }

    #[test]
    fn bspline_fit_invariant_to_weight_scaling() {
        let (m, p) = (2usize, 3usize);
        let lags: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let values: Vec<f64> = lags.iter().map(|&t| (-t * t / 2.0).exp()).collect();
        let emp = emp_from(lags, values);
        let w1: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let w2: Vec<f64> = w1.iter().map(|w| w * 37.5).collect();
        let f1 = fit_bspline_covariogram(&emp, m, p, &WeightsMode::Custom(w1)).unwrap();
        let f2 = fit_bspline_covariogram(&emp, m, p, &WeightsMode::Custom(w2)).unwrap();
        for (a, b) in f1.coefficients.iter().zip(&f2.coefficients) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn bessel_fit_recovers_first_jump() {
        let dim = 2;
        let jumps = vec![0.7, 1.9, 3.4];
        let lags: Vec<f64> = (0..15).map(|i| i as f64 * 0.35).collect();
        let values: Vec<f64> =
            lags.iter().map(|&t| bessel_basis_eval(dim, jumps[0], t)).collect();
        let emp = emp_from(lags, values);
        let fit = fit_bessel_covariogram(&emp, dim, Some(jumps), 0, &WeightsMode::Uniform)
            .unwrap();
        assert_relative_eq!(fit.coefficients[0], 1.0, epsilon = 1e-6);
        assert!(fit.coefficients[1].abs() < 1e-6);
        assert!(fit.coefficients[2].abs() < 1e-6);
        // Value at the origin is the coefficient total.
        let total: f64 = fit.coefficients.iter().sum();
        assert_relative_eq!(fit.value(0.0), total, epsilon = 1e-12);
    }

    #[test]
    fn bernstein_fit_synthesize_and_recover() {
        let m = 4usize;
        let family = BasisFamily::Bernstein { m };
        let truth = [0.0, 0.6, 0.0, 0.4];
        let lags: Vec<f64> = (0..14).map(|i| i as f64 * 0.25).collect();
        let values: Vec<f64> = lags
            .iter()
            .map(|&t| {
                truth
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| c * family.basis_value(i + 1, t))
                    .sum()
            })
            .collect();
        let emp = emp_from(lags.clone(), values);
        let fit = fit_bernstein_covariogram(&emp, m, &WeightsMode::Uniform).unwrap();
        for (got, want) in fit.coefficients.iter().zip(&truth) {
            assert_relative_eq!(got, want, epsilon = 1e-6);
        }
        let zero = emp_from(lags, vec![0.0; 14]);
        let fit = fit_bernstein_covariogram(&zero, m, &WeightsMode::Uniform).unwrap();
        assert!(fit.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn fit_residual_never_exceeds_zero_solution() {
        let lags: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let values: Vec<f64> =
            lags.iter().enumerate().map(|(i, &t)| (-t).exp() * if i % 2 == 0 { 1.0 } else { -0.3 }).collect();
        let emp = emp_from(lags.clone(), values.clone());
        let fit = fit_bernstein_covariogram(&emp, 3, &WeightsMode::Uniform).unwrap();
        let res: f64 = lags.iter().zip(&values).map(|(&t, &v)| (fit.value(t) - v).powi(2)).sum();
        let zero_res: f64 = values.iter().map(|v| v * v).sum();
        assert!(res <= zero_res + 1e-12);
    }

    #[test]
    fn fitted_model_json_round_trip() {
        let fit = FittedCovariogram {
            family: BasisFamily::Bessel { dim: 2, jumps: vec![0.5, 1.5] },
            coefficients: vec![0.25, 0.75],
            rank_deficient: false,
        };
        let mut buf = Vec::new();
        fit.write_json(&mut buf).unwrap();
        let back = FittedCovariogram::read_json(buf.as_slice()).unwrap();
        assert_eq!(back.family, fit.family);
        assert_eq!(back.coefficients, fit.coefficients);
    }
}
