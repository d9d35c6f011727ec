//! Standard normal density, distribution function, survival function and
//! quantile. The cdf goes through Cody's rational approximations for erfc,
//! accurate to full double precision; the quantile is a rational initial
//! guess polished by Newton steps against the cdf.

use crate::real::Real;

use super::SpecialError;

/// Standard normal density `phi_1(u)`.
#[inline]
pub fn std_normal_pdf<T: Real>(u: T) -> T {
    let inv_sqrt_2pi = T::c(0.398_942_280_401_432_7);
    (-u * u / T::c(2.0)).exp() * inv_sqrt_2pi
}

// Cody's coefficients for erf on |x| <= 0.46875.
const ERF_A: [f64; 5] = [
    3.1611237438705656,
    113.864154151050156,
    377.485237685302021,
    3209.37758913846947,
    0.185777706184603153,
];
const ERF_B: [f64; 4] = [
    23.6012909523441209,
    244.024637934444173,
    1282.61652607737228,
    2844.23683343917062,
];
// erfc on 0.46875 < x <= 4.
const ERF_C: [f64; 9] = [
    0.564188496988670089,
    8.88314979438837594,
    66.1191906371416295,
    298.635138197400131,
    881.95222124176909,
    1712.04761263407058,
    2051.07837782607147,
    1230.33935479799725,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    15.7449261107098347,
    117.693950891312499,
    537.181101862009858,
    1621.38957456669019,
    3290.79923573345963,
    4362.61909014324716,
    3439.36767414372164,
    1230.33935480374942,
];
// erfc asymptotic regime x > 4.
const ERF_P: [f64; 6] = [
    0.305326634961232344,
    0.360344899949804439,
    0.125781726111229246,
    0.0160837851487422766,
    6.58749161529837803e-4,
    0.0163153871373020978,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242,
    1.87295284992346047,
    0.527905102951428412,
    0.0605183413124413191,
    0.00233520497626869185,
];

const ONE_OVER_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Complementary error function, Cody's algorithm.
fn erfc<T: Real>(x: T) -> T {
    let y = x.abs();
    let one = T::one();
    if y <= T::c(0.46875) {
        let z = y * y;
        let mut num = T::c(ERF_A[4]) * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + T::c(ERF_A[i])) * z;
            den = (den + T::c(ERF_B[i])) * z;
        }
        let erf = x * (num + T::c(ERF_A[3])) / (den + T::c(ERF_B[3]));
        return one - erf;
    }
    let res = if y <= T::c(4.0) {
        let mut num = T::c(ERF_C[8]) * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + T::c(ERF_C[i])) * y;
            den = (den + T::c(ERF_D[i])) * y;
        }
        let r = (num + T::c(ERF_C[7])) / (den + T::c(ERF_D[7]));
        exp_neg_sq(y) * r
    } else if y < T::c(26.6) {
        let z = one / (y * y);
        let mut num = T::c(ERF_P[5]) * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + T::c(ERF_P[i])) * z;
            den = (den + T::c(ERF_Q[i])) * z;
        }
        let mut r = z * (num + T::c(ERF_P[4])) / (den + T::c(ERF_Q[4]));
        r = (T::c(ONE_OVER_SQRT_PI) - r) / y;
        exp_neg_sq(y) * r
    } else {
        T::zero()
    };
    if x < T::zero() {
        T::c(2.0) - res
    } else {
        res
    }
}

/// `exp(-y^2)` split to avoid the rounding of `y*y`, as in Cody's original.
#[inline]
fn exp_neg_sq<T: Real>(y: T) -> T {
    let sixteen = T::c(16.0);
    let ytil = (y * sixteen).floor() / sixteen;
    (-ytil * ytil).exp() * (-(y - ytil) * (y + ytil)).exp()
}

/// `Phi_1(u)`, absolute error below 1e-15; monotone on finite reals.
#[inline]
pub fn std_normal_cdf<T: Real>(u: T) -> T {
    let half = T::c(0.5);
    half * erfc(-u / T::SQRT_2())
}

/// Upper tail `1 - Phi_1(u)`, accurate in relative terms far into the tail.
#[inline]
pub fn std_normal_sf<T: Real>(u: T) -> T {
    let half = T::c(0.5);
    half * erfc(u / T::SQRT_2())
}

/// `log Phi_1(u)` without cancellation for large positive `u`.
pub fn std_normal_log_cdf<T: Real>(u: T) -> T {
    if u > T::zero() {
        (-std_normal_sf(u)).ln_1p()
    } else {
        std_normal_cdf(u).ln()
    }
}

// Acklam's rational approximation to the normal quantile (|rel err| < 1.2e-9),
// used only as the Newton starting point.
const ACK_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACK_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACK_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACK_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn quantile_seed(p: f64) -> f64 {
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((ACK_C[0] * q + ACK_C[1]) * q + ACK_C[2]) * q + ACK_C[3]) * q + ACK_C[4]) * q
            + ACK_C[5])
            / ((((ACK_D[0] * q + ACK_D[1]) * q + ACK_D[2]) * q + ACK_D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((ACK_A[0] * r + ACK_A[1]) * r + ACK_A[2]) * r + ACK_A[3]) * r + ACK_A[4]) * r
            + ACK_A[5])
            * q
            / (((((ACK_B[0] * r + ACK_B[1]) * r + ACK_B[2]) * r + ACK_B[3]) * r + ACK_B[4]) * r
                + 1.0)
    } else {
        -quantile_seed(1.0 - p)
    }
}

/// `Phi_1^{-1}(p)` for `p` in `(0,1)`; the result `u` satisfies
/// `|Phi_1(u) - p| <= 1e-14`.
pub fn std_normal_quantile<T: Real>(p: T) -> Result<T, SpecialError> {
    let pf = p.to_f64().unwrap_or(f64::NAN);
    if !(pf > 0.0 && pf < 1.0) {
        return Err(SpecialError::QuantileDomain(pf));
    }
    let mut u = T::c(quantile_seed(pf));
    // Newton against the full-precision cdf; two steps reach the rounding floor.
    for _ in 0..3 {
        let err = std_normal_cdf(u) - p;
        if err == T::zero() {
            break;
        }
        u = u - err / std_normal_pdf(u);
    }
    Ok(u)
}

/// Inverse survival function: `u` with `1 - Phi_1(u) = q`, carried out on the
/// upper tail directly so `q` near 0 keeps full precision.
pub fn std_normal_isf<T: Real>(q: T) -> Result<T, SpecialError> {
    let qf = q.to_f64().unwrap_or(f64::NAN);
    if !(qf > 0.0 && qf < 1.0) {
        return Err(SpecialError::QuantileDomain(qf));
    }
    let mut u = T::c(-quantile_seed(qf));
    for _ in 0..3 {
        let err = std_normal_sf(u) - q;
        if err == T::zero() {
            break;
        }
        u = u + err / std_normal_pdf(u);
    }
    Ok(u)
}
