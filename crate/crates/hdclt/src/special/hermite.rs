//! Probabilists' Hermite polynomials via the three-term recurrence, plus the
//! cached table of maximum roots `u_nu` and majorant constants
//! `M_nu = max_{0<=u<=u_nu} |H_{nu-1}(u)|`.

use std::sync::OnceLock;

use crate::real::Real;

/// Highest order kept in the root/majorant table. The recurrence itself has
/// no such cap, but the appendix machinery only needs low orders.
pub const MAX_HERMITE_ORDER: usize = 8;

/// `H_nu(u)` by the recurrence `H_{nu+1}(u) = u H_nu(u) - nu H_{nu-1}(u)`.
#[inline]
pub fn hermite_h<T: Real>(nu: usize, u: T) -> T {
    match nu {
        0 => T::one(),
        1 => u,
        _ => {
            let mut prev = T::one();
            let mut cur = u;
            for k in 1..nu {
                let next = u * cur - T::from_count(k) * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Maximum root and majorant constant of one Hermite order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteFamily {
    pub nu: usize,
    /// Maximum root of `H_nu` (0 for `nu = 0` by convention; `u_1 = 0`).
    pub u_nu: f64,
    /// `max_{0 <= u <= u_nu} |H_{nu-1}(u)|`.
    pub m_nu: f64,
}

impl HermiteFamily {
    /// Locates `u_nu` by scanning down from above the largest root for a sign
    /// change, then bisecting to 1e-13, and `M_nu` by dense grid scan refined
    /// with golden-section.
    pub fn compute(nu: usize) -> Self {
        if nu == 0 {
            return HermiteFamily { nu, u_nu: 0.0, m_nu: 0.0 };
        }
        // all roots of H_nu lie below sqrt(4 nu + 2)
        let hi = (4.0 * nu as f64 + 6.0).sqrt();
        let step = 1e-2;
        let mut b = hi;
        let mut a = hi - step;
        while a > -step {
            if hermite_h(nu, a) <= 0.0 && hermite_h(nu, b) > 0.0 {
                break;
            }
            b = a;
            a -= step;
        }
        let mut lo = a.max(0.0).min(b);
        let mut up = b;
        if nu == 1 {
            lo = 0.0;
            up = 0.0;
        }
        for _ in 0..60 {
            let m = 0.5 * (lo + up);
            if hermite_h(nu, m) <= 0.0 {
                lo = m;
            } else {
                up = m;
            }
        }
        let u_nu = 0.5 * (lo + up);
        let m_nu = max_abs_on_interval(nu - 1, 0.0, u_nu);
        HermiteFamily { nu, u_nu, m_nu }
    }
}

fn max_abs_on_interval(order: usize, a: f64, b: f64) -> f64 {
    if b <= a {
        return hermite_h(order, a).abs();
    }
    let n = ((b - a) / 1e-4).ceil() as usize;
    let mut best = f64::MIN;
    let mut best_u = a;
    for i in 0..=n {
        let u = a + (b - a) * i as f64 / n as f64;
        let v = hermite_h::<f64>(order, u).abs();
        if v > best {
            best = v;
            best_u = u;
        }
    }
    // golden-section refinement inside the bracketing cells
    let w = (b - a) / n as f64;
    let (mut lo, mut hi) = ((best_u - w).max(a), (best_u + w).min(b));
    let inv_phi = 0.618_033_988_749_894_8;
    let f = |u: f64| hermite_h::<f64>(order, u).abs();
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    best.max(f(0.5 * (lo + hi)))
}

static TABLE: OnceLock<Vec<HermiteFamily>> = OnceLock::new();

/// Cached `(u_nu, M_nu)` for `1 <= nu <= MAX_HERMITE_ORDER`.
pub fn hermite_family(nu: usize) -> &'static HermiteFamily {
    assert!(
        (1..=MAX_HERMITE_ORDER).contains(&nu),
        "hermite_family supports 1..={MAX_HERMITE_ORDER}, got {nu}"
    );
    let table =
        TABLE.get_or_init(|| (0..=MAX_HERMITE_ORDER).map(HermiteFamily::compute).collect());
    &table[nu]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_values() {
        assert_eq!(hermite_h(0, 3.7f64), 1.0);
        assert_eq!(hermite_h(1, -2.5f64), -2.5);
        // H_2(u) = u^2 - 1, H_3(u) = u^3 - 3u
        assert!((hermite_h(2, 1.0f64)).abs() < 1e-15);
        assert!((hermite_h(3, 3.0f64.sqrt())).abs() < 1e-12);
        assert!((hermite_h(4, 2.0f64) - (16.0 - 24.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn known_maximum_roots() {
        assert_eq!(hermite_family(1).u_nu, 0.0);
        assert!((hermite_family(2).u_nu - 1.0).abs() < 1e-12);
        assert!((hermite_family(3).u_nu - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn root_residual_and_positivity_beyond_root() {
        for nu in 1..=MAX_HERMITE_ORDER {
            let fam = hermite_family(nu);
            // the achievable residual is |H_nu'| * ulp(u_nu); that floor
            // crosses 1e-12 around nu = 7
            let tol = if nu <= 6 { 1e-12 } else { 1e-10 };
            assert!(hermite_h::<f64>(nu, fam.u_nu).abs() < tol);
            // strictly positive on a grid beyond u_nu
            let mut u = fam.u_nu + 1e-6;
            while u < fam.u_nu + 6.0 {
                assert!(hermite_h::<f64>(nu, u) > 0.0, "H_{nu}({u}) <= 0");
                u += 0.05;
            }
        }
    }

    #[test]
    fn roots_strictly_increase_with_order() {
        let mut prev = -1.0;
        for nu in 1..=MAX_HERMITE_ORDER {
            let u = hermite_family(nu).u_nu;
            assert!(u > prev, "u_{nu} = {u} not above previous {prev}");
            prev = u;
        }
    }

    #[test]
    fn majorant_constants_nonnegative_and_m2_is_one() {
        for nu in 1..=MAX_HERMITE_ORDER {
            assert!(hermite_family(nu).m_nu >= 0.0);
        }
        // M_2 = max_{0<=u<=1} |H_1(u)| = 1
        assert!((hermite_family(2).m_nu - 1.0).abs() < 1e-10);
    }
}
