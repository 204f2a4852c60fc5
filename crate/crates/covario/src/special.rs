//! Bessel functions of the first kind and the normalized isotropic basis
//! profile built from them.

/// Bessel function of the first kind of real order `nu >= 0`.
///
/// Integer orders dispatch to libm; other orders use the ascending power
/// series, which is accurate to roughly 1e-9 relative for arguments up to
/// about 25 (the ranges used by the covariance models and bases here).
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x >= 0.0, "order and argument must be nonnegative");
    let rounded = nu.round();
    if (nu - rounded).abs() < 1e-12 {
        return libm::jn(rounded as i32, x);
    }
    bessel_j_series(nu, x)
}

fn bessel_j_series(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let half = x / 2.0;
    // Leading coefficient (x/2)^nu / Gamma(nu + 1) through logs to avoid
    // overflow for large orders.
    let log_lead = nu * half.ln() - libm::lgamma(nu + 1.0);
    let lead = log_lead.exp();
    let q = -half * half;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..500 {
        let kf = k as f64;
        term *= q / (kf * (kf + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && k as f64 > half * half {
            break;
        }
    }
    lead * sum
}

/// Normalized isotropic profile `2^v Gamma(v+1) x^{-v} J_v(x)` with
/// `v = (n - 2) / 2`; continuous with value 1 at `x = 0`.
pub fn lambda_profile(n: usize, x: f64) -> f64 {
    assert!(n >= 1, "dimension must be at least 1");
    assert!(x >= 0.0);
    let nu = (n as f64 - 2.0) / 2.0;
    // The normalized series has unit leading term, so it is stable at the
    // origin where the raw quotient is 0/0.
    let q = -x * x / 4.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut converged = false;
    for k in 1..500 {
        let kf = k as f64;
        term *= q / (kf * (kf + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && kf > x / 2.0 {
            converged = true;
            break;
        }
    }
    debug_assert!(converged || x == 0.0);
    sum
}

/// First `m` positive roots of `J_nu`, by scan and bisection.
pub fn bessel_j_roots(nu: f64, m: usize) -> Vec<f64> {
    let mut roots = Vec::with_capacity(m);
    let step = 0.05;
    let mut x = step;
    let mut prev = bessel_j(nu, x);
    while roots.len() < m {
        let next_x = x + step;
        let next = bessel_j(nu, next_x);
        if prev == 0.0 {
            roots.push(x);
        } else if prev.signum() != next.signum() && next != 0.0 {
            let (mut a, mut b) = (x, next_x);
            let (mut fa, _fb) = (prev, next);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = bessel_j(nu, mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa.signum() == fm.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
                if (b - a) <= 1e-13 * b {
                    break;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x = next_x;
        prev = next;
    }
    roots
}
