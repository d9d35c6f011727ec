//! Scalar special functions: Gaussian pdf/cdf/quantile, regularized
//! incomplete gamma, probabilists' Hermite polynomials and the
//! h / h-bar / h-tilde / lambda / Lambda function family built on them.
//!
//! All operations are pure; the only shared state is the immutable table of
//! Hermite maximum roots built once on first use.

mod gamma;
mod hermite;
mod normal;

pub use gamma::{ln_gamma, regularized_gamma_p, regularized_gamma_q};
pub use hermite::{hermite_family, hermite_h, HermiteFamily, MAX_HERMITE_ORDER};
pub use normal::{
    std_normal_cdf, std_normal_isf, std_normal_log_cdf, std_normal_pdf, std_normal_quantile,
    std_normal_sf,
};

use crate::real::Real;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("quantile argument must lie in (0,1), got {0}")]
    QuantileDomain(f64),
    #[error("regularized gamma requires a > 0 and x >= 0, got a={a}, x={x}")]
    GammaDomain { a: f64, x: f64 },
    #[error("lambda/Lambda are defined on u >= 0, got {0}")]
    NegativeShiftArgument(f64),
    #[error("hermite order {0} exceeds the cached maximum {MAX_HERMITE_ORDER}")]
    OrderTooLarge(usize),
}

/// phi_1(u)/Phi_1(u), the Gaussian hazard-type ratio; strictly decreasing on
/// `[0, inf)`.
pub fn phi_bar<T: Real>(u: T) -> T {
    std_normal_pdf(u) / std_normal_cdf(u)
}

/// The eta shift of the shifted-rectangle supremum machinery:
/// `eta = K / sqrt(log d)` for a configured constant `K >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaContext<T: Real> {
    pub eta: T,
    pub d: usize,
}

impl<T: Real> EtaContext<T> {
    /// Builds the context from the constant `K`. Requires `d >= 3` so that
    /// `log d > 1`.
    pub fn new(k: T, d: usize) -> Self {
        assert!(d >= 3, "EtaContext requires d >= 3");
        assert!(k >= T::zero(), "EtaContext requires K >= 0");
        let eta = k / T::from_count(d).ln().sqrt();
        EtaContext { eta, d }
    }

    pub fn zero(d: usize) -> Self {
        Self::new(T::zero(), d)
    }

    /// `2 u eta + 2 eta^2`, the log of `lambda(u)`.
    pub fn log_lambda(&self, u: T) -> Result<T, SpecialError> {
        if u < T::zero() {
            return Err(SpecialError::NegativeShiftArgument(u.to_f64().unwrap_or(f64::NAN)));
        }
        let two = T::c(2.0);
        Ok(two * u * self.eta + two * self.eta * self.eta)
    }

    /// `lambda(u) = phi_1(u)/phi_1(u + 2 eta) = exp(2 u eta + 2 eta^2)`.
    pub fn lambda(&self, u: T) -> Result<T, SpecialError> {
        Ok(self.log_lambda(u)?.exp())
    }

    /// `Lambda(u) = Phi_1(u)/Phi_1(u + 2 eta)`, non-decreasing on `[0, inf)`.
    pub fn big_lambda(&self, u: T) -> Result<T, SpecialError> {
        if u < T::zero() {
            return Err(SpecialError::NegativeShiftArgument(u.to_f64().unwrap_or(f64::NAN)));
        }
        let two = T::c(2.0);
        Ok(std_normal_cdf(u) / std_normal_cdf(u + two * self.eta))
    }
}

/// `h_nu(u) = H_{nu-1}(u) phi_1(u)` for `nu >= 1`.
pub fn h_nu<T: Real>(nu: usize, u: T) -> T {
    assert!(nu >= 1, "h_nu requires nu >= 1");
    hermite_h(nu - 1, u) * std_normal_pdf(u)
}

/// `hbar_nu(u) = h_nu(u)/Phi_1(u)`.
pub fn hbar_nu<T: Real>(nu: usize, u: T) -> T {
    h_nu(nu, u) / std_normal_cdf(u)
}

/// The decreasing majorant `htilde_nu` of `|h_nu|` on `[0, inf)`:
/// `M_nu phi_1(u)` on `[0, u_nu]` and `h_nu(u)` beyond the maximum root.
pub fn htilde_nu<T: Real>(nu: usize, u: T) -> T {
    assert!(u >= T::zero(), "htilde_nu is defined on [0, inf)");
    let fam = hermite_family(nu);
    if u <= T::c(fam.u_nu) {
        T::c(fam.m_nu) * std_normal_pdf(u)
    } else {
        h_nu(nu, u)
    }
}

/// All five members of the appendix function family at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HFamilyValues<T: Real> {
    pub h: T,
    pub hbar: T,
    pub htilde: T,
    pub lambda: T,
    pub big_lambda: T,
}

/// Joint evaluation of `(h_nu, hbar_nu, htilde_nu, lambda, Lambda)`.
/// The shift ratios require `u >= 0`; `htilde` is evaluated at `|u|`.
pub fn h_family<T: Real>(
    nu: usize,
    ctx: &EtaContext<T>,
    u: T,
) -> Result<HFamilyValues<T>, SpecialError> {
    Ok(HFamilyValues {
        h: h_nu(nu, u),
        hbar: hbar_nu(nu, u),
        htilde: htilde_nu(nu, u.abs()),
        lambda: ctx.lambda(u)?,
        big_lambda: ctx.big_lambda(u)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_bar_at_zero_is_sqrt_2_over_pi() {
        let v: f64 = phi_bar(0.0);
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn phi_bar_strictly_decreasing_on_grid() {
        let mut prev = f64::INFINITY;
        let mut u = 0.0;
        while u <= 10.0 {
            let v: f64 = phi_bar(u);
            assert!(v < prev, "phi_bar not decreasing at u={u}");
            prev = v;
            u += 0.05;
        }
    }

    #[test]
    fn lambda_is_one_at_eta_zero() {
        let ctx = EtaContext::<f64>::zero(100);
        for u in [0.0, 0.5, 3.0, 11.0] {
            assert_eq!(ctx.lambda(u).unwrap(), 1.0);
            assert_eq!(ctx.big_lambda(u).unwrap(), 1.0);
        }
    }

    #[test]
    fn lambda_rejects_negative_argument() {
        let ctx = EtaContext::<f64>::new(1.0, 100);
        assert!(ctx.lambda(-0.1).is_err());
        assert!(ctx.big_lambda(-0.1).is_err());
    }

    #[test]
    fn hbar_one_matches_phi_bar() {
        for u in [-2.0, 0.0, 1.3, 4.0] {
            let a: f64 = hbar_nu(1, u);
            let b: f64 = phi_bar(u);
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    // h_2(0) = H_1(0) phi(0) = 0; hbar_1(0) = 2 phi(0) = sqrt(2/pi).
    #[test]
    fn h_family_trivial_values() {
        let ctx = EtaContext::<f64>::zero(3);
        let v = h_family(2, &ctx, 0.0).unwrap();
        assert_eq!(v.h, 0.0);
        let v1 = h_family(1, &ctx, 0.0).unwrap();
        assert!((v1.hbar - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    // M_2 = max_{0<=u<=1}|H_1(u)| = 1, so htilde_2(0.5) = phi(0.5).
    #[test]
    fn htilde_2_matches_grid_maximization_oracle() {
        // independent oracle: dense scan of |H_1| over [0, u_2]
        let mut m2 = 0.0f64;
        let n = 100_000;
        for i in 0..=n {
            let u = i as f64 / n as f64;
            m2 = m2.max(hermite_h(1, u).abs());
        }
        let expect = m2 * std_normal_pdf(0.5);
        let got: f64 = htilde_nu(2, 0.5);
        assert!((got - expect).abs() < 1e-12);
    }

    // eq:deriv-h: h_nu'(u) = -h_{nu+1}(u), central differences at step 1e-5.
    #[test]
    fn h_derivative_identity() {
        let step = 1e-5;
        for nu in 1..=6 {
            let mut u = -5.0;
            while u <= 5.0 {
                let fd = (h_nu::<f64>(nu, u + step) - h_nu::<f64>(nu, u - step)) / (2.0 * step);
                let exact = -h_nu::<f64>(nu + 1, u);
                assert!(
                    (fd - exact).abs() < 1e-8 * exact.abs().max(1.0),
                    "nu={nu} u={u} fd={fd} exact={exact}"
                );
                u += 0.25;
            }
        }
    }

    // eq:deriv-lambda: Lambda'(u) = Lambda(u){phibar(u) - phibar(u+2 eta)};
    // Lambda non-decreasing on [0, inf).
    #[test]
    fn big_lambda_derivative_identity_and_monotone() {
        let ctx = EtaContext::<f64>::new(1.0, 50);
        let step = 1e-6;
        let mut prev = 0.0;
        let mut u = step;
        while u <= 8.0 {
            let lam = ctx.big_lambda(u).unwrap();
            let fd = (ctx.big_lambda(u + step).unwrap() - ctx.big_lambda(u - step).unwrap())
                / (2.0 * step);
            let exact = lam * (phi_bar(u) - phi_bar(u + 2.0 * ctx.eta));
            assert!((fd - exact).abs() < 1e-7, "u={u} fd={fd} exact={exact}");
            assert!(lam >= prev, "Lambda decreased at u={u}");
            prev = lam;
            u += 0.1;
        }
    }

    // htilde_nu non-increasing on [0, inf) and |h_nu(u)| <= htilde_nu(|u|).
    #[test]
    fn htilde_majorizes_and_decreases() {
        for nu in 1..=5 {
            let mut prev = f64::INFINITY;
            let mut u = 0.0;
            while u <= 10.0 {
                let t = htilde_nu::<f64>(nu, u);
                assert!(t <= prev + 1e-14, "htilde_{nu} increased at u={u}");
                prev = t;
                u += 0.01;
            }
            let mut u = -10.0;
            while u <= 10.0 {
                assert!(
                    h_nu::<f64>(nu, u).abs() <= htilde_nu::<f64>(nu, u.abs()) + 1e-14,
                    "majorant violated at nu={nu} u={u}"
                );
                u += 0.01;
            }
        }
    }

    #[test]
    fn generic_core_also_works_at_f32() {
        let v: f32 = phi_bar(0.0f32);
        assert!((v - (2.0f32 / std::f32::consts::PI).sqrt()).abs() < 1e-6);
    }
}
