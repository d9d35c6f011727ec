//! Stein kernels, the integration-by-parts residual tester, and the
//! Ornstein-Uhlenbeck smoothing pipeline on rectangle indicators.

use thiserror::Error;

use crate::models::{Density1d, Family, ModelSpec, SampleBatch, SigmaStats};
use crate::special::{hermite_h, std_normal_cdf, std_normal_pdf};
use crate::suprema::Rectangle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteinError {
    #[error("point {0} is outside the support of the density")]
    OutOfSupport(f64),
    #[error("smoothing time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("model family {0} has no product Stein kernel")]
    NoProductKernel(&'static str),
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth > 48 || (left + right - whole).abs() < 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, left, tol / 2.0, depth + 1) + rec(f, m, b, right, tol / 2.0, depth + 1)
    }
    if a >= b {
        return 0.0;
    }
    // split at a few interior points so narrow features are not missed
    let pieces = 8;
    let mut total = 0.0;
    for i in 0..pieces {
        let lo = a + (b - a) * i as f64 / pieces as f64;
        let hi = a + (b - a) * (i + 1) as f64 / pieces as f64;
        total += rec(f, lo, hi, simpson(f, lo, hi), tol / pieces as f64, 0);
    }
    total
}

/// Stein kernel of the shifted unit exponential, tau(x) = x + 1 on [-1, inf).
pub fn kernel_exponential(x: f64) -> f64 {
    if x < -1.0 {
        0.0
    } else {
        x + 1.0
    }
}

/// Closed-form Stein kernels of the registered densities.
pub fn kernel_closed_form(density: Density1d, x: f64) -> f64 {
    match density {
        Density1d::StdNormal => 1.0,
        Density1d::ShiftedExponential => kernel_exponential(x),
        Density1d::UniformSqrt3 => {
            if x.abs() <= 3f64.sqrt() {
                (3.0 - x * x) / 2.0
            } else {
                0.0
            }
        }
    }
}

/// Generic 1D Stein kernel by quadrature:
/// `tau(x) = (1/p(x)) int_x^inf y p(y) dy`.
pub fn kernel_numeric(density: Density1d, x: f64) -> Result<f64, SteinError> {
    let p = density.pdf(x);
    if p < 1e-300 {
        return Err(SteinError::OutOfSupport(x));
    }
    let upper = match density {
        Density1d::StdNormal => x.max(0.0) + 45.0,
        Density1d::ShiftedExponential => x.max(0.0) + 60.0,
        Density1d::UniformSqrt3 => 3f64.sqrt(),
    };
    let integrand = |y: f64| y * density.pdf(y);
    let integral = adaptive_simpson(&integrand, x, upper, 1e-15);
    Ok(integral / p)
}

/// Version of the fixed test-function dictionary; bump when entries change so
/// residual histories stay comparable.
pub const DICTIONARY_VERSION: u32 = 1;

/// Identifiers of the dictionary entries.
pub const DICTIONARY: [&str; 3] = ["sum-of-squares", "damped-cubic", "square-of-sum"];

/// First partial of a dictionary function.
pub fn dict_grad(f_id: &str, w: &[f64], j: usize) -> f64 {
    match f_id {
        "sum-of-squares" => 2.0 * w[j],
        "damped-cubic" => {
            let x = w[j];
            (3.0 * x * x - x.powi(4)) * (-0.5 * x * x).exp()
        }
        "square-of-sum" => 2.0 * w.iter().sum::<f64>(),
        _ => panic!("unknown dictionary function {f_id}"),
    }
}

/// Second partial of a dictionary function.
pub fn dict_hess(f_id: &str, w: &[f64], j: usize, k: usize) -> f64 {
    match f_id {
        "sum-of-squares" => {
            if j == k {
                2.0
            } else {
                0.0
            }
        }
        "damped-cubic" => {
            if j == k {
                let x = w[j];
                (6.0 * x - 7.0 * x.powi(3) + x.powi(5)) * (-0.5 * x * x).exp()
            } else {
                0.0
            }
        }
        "square-of-sum" => 2.0,
        _ => panic!("unknown dictionary function {f_id}"),
    }
}

/// The shared 1D marginal of a product-type model.
pub fn product_density(spec: &ModelSpec) -> Result<Density1d, SteinError> {
    match &spec.family {
        Family::ProductExponential | Family::NonlinearQuadratic { .. } => {
            Ok(Density1d::ShiftedExponential)
        }
        Family::ProductCustom1d { density } => Ok(*density),
        other => Err(SteinError::NoProductKernel(other.name())),
    }
}

/// Monte-Carlo estimate of `sum_j E[d_j f(W) W_j] - sum_jk E[d_jk f(W) tau_jk]`
/// with its standard error from 30 replication groups.
///
/// For product models the kernel is the refined diagonal average
/// `tau_jj = (1/n) sum_i tau(X_ij)`; for Gaussian affine models tau is the
/// constant matrix Sigma.
pub fn stein_identity_residual(
    spec: &ModelSpec,
    f_id: &str,
    reps: u64,
) -> Result<(f64, f64), SteinError> {
    let gaussian = matches!(spec.family, Family::GaussianAffine { .. });
    let density = if gaussian { None } else { Some(product_density(spec)?) };
    let sigma: SigmaStats<f64> = spec.exact_sigma();
    let groups = 30u64;
    let mut group_means = Vec::with_capacity(groups as usize);
    let mut r = 0u64;
    for g in 0..groups {
        let group_reps = reps / groups + u64::from(g < reps % groups);
        let mut acc = 0.0;
        for _ in 0..group_reps {
            let batch: SampleBatch<f64> = spec.generate(r);
            let w = spec.statistic(&batch);
            let mut lhs = 0.0;
            for j in 0..spec.d {
                lhs += dict_grad(f_id, &w, j) * w[j];
            }
            let mut rhs = 0.0;
            if let Some(density) = density {
                for j in 0..spec.d {
                    let tau_jj: f64 = batch
                        .rows()
                        .map(|row| kernel_closed_form(density, row[j]))
                        .sum::<f64>()
                        / spec.n as f64;
                    rhs += dict_hess(f_id, &w, j, j) * tau_jj;
                }
            } else {
                for j in 0..spec.d {
                    for k in 0..spec.d {
                        rhs += dict_hess(f_id, &w, j, k) * sigma.entry(j, k);
                    }
                }
            }
            acc += lhs - rhs;
            r += 1;
        }
        group_means.push(acc / group_reps as f64);
    }
    let mean = group_means.iter().sum::<f64>() / groups as f64;
    let var = group_means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
        / (groups as f64 - 1.0);
    let se = (var / groups as f64).sqrt();
    Ok((mean, se))
}

fn cdf_ext(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        std_normal_cdf(x)
    }
}

/// Probability that the scaled point `e^{-s} x + beta_s Y` lies in `A` for
/// diagonal covariance, in closed form.
fn shifted_rect_prob_diag(
    a: &Rectangle<f64>,
    x: &[f64],
    decay: f64,
    beta: f64,
    sigma: &SigmaStats<f64>,
) -> f64 {
    let mut p = 1.0;
    for j in 0..a.dim() {
        let s = sigma.entry(j, j).sqrt() * beta;
        let hi = if a.upper[j].is_infinite() {
            if a.upper[j] > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            cdf_ext((a.upper[j] - decay * x[j]) / s)
        };
        let lo = if a.lower[j].is_infinite() {
            if a.lower[j] > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            cdf_ext((a.lower[j] - decay * x[j]) / s)
        };
        p *= hi - lo;
    }
    p
}

fn rect_prob_diag(a: &Rectangle<f64>, sigma: &SigmaStats<f64>) -> f64 {
    shifted_rect_prob_diag(a, &vec![0.0; a.dim()], 0.0, 1.0, sigma)
}

/// `T_s h_tilde(x)` for the centered rectangle indicator
/// `h_tilde = 1_A - P(Y in A)`, diagonal covariance (exact value).
pub fn ou_smooth(
    a: &Rectangle<f64>,
    x: &[f64],
    s: f64,
    sigma: &SigmaStats<f64>,
) -> Result<f64, SteinError> {
    if s <= 0.0 {
        return Err(SteinError::NonPositiveTime(s));
    }
    assert!(sigma.is_diagonal(), "closed-form smoothing needs diagonal covariance");
    let decay = (-s).exp();
    let beta = (-(-2.0 * s).exp_m1()).sqrt();
    Ok(shifted_rect_prob_diag(a, x, decay, beta, sigma) - rect_prob_diag(a, sigma))
}

/// nu-th partial in x_j of the coordinate factor
/// `Phi(u_b) - Phi(u_a)` with `u = (endpoint - e^{-s} x_j)/beta_s`, where
/// `c = -e^{-s}/beta_s` is the chain-rule slope.
fn factor_derivative(a_j: f64, b_j: f64, x_j: f64, decay: f64, beta: f64, nu: usize) -> f64 {
    let u = |endpoint: f64| (endpoint - decay * x_j) / beta;
    let phi_term = |endpoint: f64| {
        if endpoint.is_infinite() {
            0.0
        } else {
            let v = u(endpoint);
            hermite_h(nu - 1, v) * std_normal_pdf(v)
        }
    };
    let c = -decay / beta;
    let sign = if nu % 2 == 0 { -1.0 } else { 1.0 };
    c.powi(nu as i32) * sign * (phi_term(b_j) - phi_term(a_j))
}

fn factor_value(a_j: f64, b_j: f64, x_j: f64, decay: f64, beta: f64) -> f64 {
    let u = |endpoint: f64| {
        if endpoint == f64::INFINITY {
            f64::INFINITY
        } else if endpoint == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            (endpoint - decay * x_j) / beta
        }
    };
    cdf_ext(u(b_j)) - cdf_ext(u(a_j))
}

/// Sums of absolute partial derivatives of
/// `psi_t(x) = -int_t^inf T_s h_tilde(x) ds`
/// of orders 1..3 for identity covariance and small d.
pub fn psi_derivative_sums(
    a: &Rectangle<f64>,
    x: &[f64],
    t: f64,
) -> Result<(f64, f64, f64), SteinError> {
    if t <= 0.0 {
        return Err(SteinError::NonPositiveTime(t));
    }
    let d = a.dim();
    assert!(d <= 5, "psi_derivative_sums is a desk-scale oracle (d <= 5)");
    assert_eq!(x.len(), d);

    // partial of T_s h_tilde for one multiplicity profile (coordinate -> order)
    let tuple_integrand = |mults: &[usize], s: f64| -> f64 {
        let decay = (-s).exp();
        let beta = (-(-2.0 * s).exp_m1()).sqrt();
        let mut v = 1.0;
        for j in 0..d {
            v *= if mults[j] == 0 {
                factor_value(a.lower[j], a.upper[j], x[j], decay, beta)
            } else {
                factor_derivative(a.lower[j], a.upper[j], x[j], decay, beta, mults[j])
            };
        }
        v
    };
    // the s-integral truncates where the integrand has decayed below 1e-17
    let upper = t + 40.0;
    let integral = |mults: &[usize]| -> f64 {
        let f = |s: f64| tuple_integrand(mults, s);
        adaptive_simpson(&f, t, upper, 1e-12).abs()
    };

    let mut s1 = 0.0;
    for j in 0..d {
        let mut mults = vec![0usize; d];
        mults[j] = 1;
        s1 += integral(&mults);
    }
    let mut s2 = 0.0;
    for j in 0..d {
        for k in 0..d {
            let mut mults = vec![0usize; d];
            mults[j] += 1;
            mults[k] += 1;
            s2 += integral(&mults);
        }
    }
    let mut s3 = 0.0;
    for j in 0..d {
        for k in 0..d {
            for l in 0..d {
                let mut mults = vec![0usize; d];
                mults[j] += 1;
                mults[k] += 1;
                mults[l] += 1;
                s3 += integral(&mults);
            }
        }
    }
    Ok((s1, s2, s3))
}
