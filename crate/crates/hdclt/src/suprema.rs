//! Rectangle sums of Gaussian density derivatives and their suprema.
//!
//! Covers the diagonal-maximizer root solve for r = 1, the exact O(d)
//! evaluator for r in {1, 2}, the monotonicity check behind the stationarity
//! bisections, and the general `sup F_nu^beta G` optimizer whose growth in d
//! carries the (log d)^{beta nu / 2} exponent.

use crate::real::Real;
use crate::special::{
    h_nu, hbar_nu, hermite_family, hermite_h, phi_bar, std_normal_cdf, std_normal_log_cdf,
    EtaContext,
};

/// Product rectangle with extended-real endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectangle<T: Real> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Rectangle<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Self {
        assert_eq!(lower.len(), upper.len(), "endpoint vectors must share a length");
        assert!(!lower.is_empty(), "rectangle needs at least one coordinate");
        for (j, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            assert!(!a.is_nan() && !b.is_nan(), "NaN endpoint at coordinate {j}");
            assert!(a <= b, "lower endpoint exceeds upper at coordinate {j}");
        }
        Rectangle { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// The reflected rectangle `-A` (swap and negate endpoints).
    pub fn negated(&self) -> Self {
        let lower = self.upper.iter().map(|&b| -b).collect();
        let upper = self.lower.iter().map(|&a| -a).collect();
        Rectangle { lower, upper }
    }
}

/// Outcome of a supremum computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupremumResult<T: Real> {
    pub d: usize,
    /// Derivative order r, or the Hermite order nu for the F^beta G problem.
    pub r: usize,
    pub value: T,
    /// Diagonal coordinate of the maximizer.
    pub maximizer_u: T,
    /// Number of active (above-floor) coordinates at the maximizer.
    pub m_star: usize,
}

const BISECT_ITERS: usize = 200;

/// Bisection for `g(lo) <= 0 <= g(hi)`.
fn bisect<T: Real, F: Fn(T) -> T>(g: F, mut lo: T, mut hi: T) -> T {
    for _ in 0..BISECT_ITERS {
        let mid = (lo + hi) * T::c(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * T::c(0.5)
}

/// Root of `g_2(u) = u - (d-1) phibar_1(u)`, the diagonal coordinate of the
/// maximizer of `f(x) = (sum_j phibar_1(x_j)) prod_k Phi_1(x_k)`.
pub fn solve_ustar_r1<T: Real>(d: usize) -> T {
    assert!(d >= 3, "solve_ustar_r1 requires d >= 3");
    let dm1 = T::from_count(d - 1);
    let g = |u: T| u - dm1 * phi_bar(u);
    let hi = (T::c(4.0) * T::from_count(d).ln()).sqrt() + T::c(2.0);
    assert!(
        g(T::zero()) <= T::zero() && g(hi) > T::zero(),
        "bracket failure in solve_ustar_r1 at d = {d}"
    );
    bisect(g, T::zero(), hi)
}

/// `sup_{A} sum_j |int_A d_j phi| = (d/(d-1)) u* Phi_1(u*)^d`.
pub fn sup_f_r1<T: Real>(d: usize) -> SupremumResult<T> {
    let u = solve_ustar_r1::<T>(d);
    let dd = T::from_count(d);
    let value = dd / (dd - T::one()) * u * (dd * std_normal_log_cdf(u)).exp();
    SupremumResult { d, r: 1, value, maximizer_u: u, m_star: d }
}

fn cdf_ext<T: Real>(x: T) -> T {
    if x == T::infinity() {
        T::one()
    } else if x == T::neg_infinity() {
        T::zero()
    } else {
        std_normal_cdf(x)
    }
}

fn h_ext<T: Real>(nu: usize, x: T) -> T {
    if x.is_infinite() {
        T::zero()
    } else {
        h_nu(nu, x)
    }
}

/// Per-coordinate factors of the product factorization, each taken at its
/// worst case over the shift values `{-eta, +eta}` independently.
fn coordinate_factors<T: Real>(a: T, b: T, eta: T) -> (T, T, T) {
    let shifts: [T; 2] = if eta == T::zero() { [T::zero(); 2] } else { [-eta, eta] };
    let mut p = T::zero();
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    for &y in &shifts {
        p = p.max(cdf_ext(b + y) - cdf_ext(a + y));
        s1 = s1.max((h_ext(1, b + y) - h_ext(1, a + y)).abs());
        s2 = s2.max((h_ext(2, b + y) - h_ext(2, a + y)).abs());
    }
    (p, s1, s2)
}

/// Exact value of `sum_{j_1..j_r} sup_y |int_A d_{j_1..j_r} phi(z+y) dz|`
/// for r in {1, 2}, assembled in O(d) by tracking the first coefficients of
/// `prod_j (p_j + t s_j)`.
pub fn rect_sum_exact<T: Real>(a: &Rectangle<T>, r: usize, ctx: &EtaContext<T>) -> T {
    assert!(r == 1 || r == 2, "rect_sum_exact supports r in {{1, 2}}, got {r}");
    // c0 = prod p, c1 = sum_j s_j prod_{k != j} p_k,
    // c2 = sum_{j < k} s_j s_k prod_{l != j,k} p_l
    let mut c0 = T::one();
    let mut c1 = T::zero();
    let mut c2 = T::zero();
    // same passes with s replaced by the order-2 endpoint differences
    let mut c1_h2 = T::zero();
    for (&lo, &up) in a.lower.iter().zip(&a.upper) {
        let (p, s1, s2) = coordinate_factors(lo, up, ctx.eta);
        c2 = c2 * p + c1 * s1;
        c1_h2 = c1_h2 * p + c0 * s2;
        c1 = c1 * p + c0 * s1;
        c0 = c0 * p;
    }
    if r == 1 {
        c1
    } else {
        c1_h2 + T::c(2.0) * c2
    }
}

/// Minimum forward difference of `u -> H_nu(u) lambda(u) + hbar_nu(u)` over
/// `[u_nu, 12]` at step 1e-3. The map is strictly increasing there, so the
/// returned margin must be positive.
pub fn check_lemma_l2_2<T: Real>(nu: usize, ctx: &EtaContext<T>) -> (bool, T) {
    let u_nu = T::c(hermite_family(nu).u_nu);
    let step = T::c(1e-3);
    let g = |u: T| hermite_h(nu, u) * ctx.lambda(u).expect("u >= 0") + hbar_nu(nu, u);
    let mut u = u_nu;
    let mut prev = g(u);
    let mut min_margin = T::infinity();
    while u < T::c(12.0) {
        u += step;
        let cur = g(u);
        min_margin = min_margin.min(cur - prev);
        prev = cur;
    }
    (min_margin > T::zero(), min_margin)
}

/// `sup_{x in [u_nu, inf)^d} F_nu(x)^beta G(x)` with
/// `F_nu(x) = sum_j hbar_nu(x_j) Lambda(x_j)` and
/// `G(x) = prod_k Phi_1(x_k + 2 eta)`.
///
/// The scan follows the stationarity structure: a maximizer has m coordinates
/// at a common level u_m solving
/// `beta {H_nu(u) lambda(u) + hbar_nu(u)} Lambda(u) = m hbar_nu(u) Lambda(u)
///  + (d - m) hbar_nu(u_nu) Lambda(u_nu)`
/// and the rest at the floor u_nu; the m <= beta boundary regime is evaluated
/// separately. All candidates are compared in log space.
pub fn sup_fbeta_g<T: Real>(
    nu: usize,
    beta: T,
    d: usize,
    ctx: &EtaContext<T>,
) -> SupremumResult<T> {
    assert!(d >= 3, "sup_fbeta_g requires d >= 3");
    assert!(beta > T::zero(), "sup_fbeta_g requires beta > 0");
    let u_nu = T::c(hermite_family(nu).u_nu);
    let two_eta = T::c(2.0) * ctx.eta;
    let hl = |u: T| hbar_nu(nu, u) * ctx.big_lambda(u).expect("u >= 0");
    let lhs = |u: T| {
        beta * (hermite_h(nu, u) * ctx.lambda(u).expect("u >= 0") + hbar_nu(nu, u))
            * ctx.big_lambda(u).expect("u >= 0")
    };
    let floor = hl(u_nu);
    let log_phi_floor = std_normal_log_cdf(u_nu + two_eta);
    let log_f = |m: usize, u: T| {
        let f = T::from_count(m) * hl(u) + T::from_count(d - m) * floor;
        beta * f.ln()
            + T::from_count(m) * std_normal_log_cdf(u + two_eta)
            + T::from_count(d - m) * log_phi_floor
    };

    let mut best = (T::neg_infinity(), u_nu, 0usize);
    let consider = |m: usize, u: T, best: &mut (T, T, usize)| {
        let lf = log_f(m, u);
        if lf > best.0 {
            *best = (lf, u, m);
        }
    };

    // Stationary level for one active-coordinate count, or None when the
    // stationarity equation has no sign change in reach.
    let solve_m = |m: usize| -> Option<T> {
        let g = |u: T| lhs(u) - (T::from_count(m) * hl(u) + T::from_count(d - m) * floor);
        if g(u_nu) > T::zero() {
            return None;
        }
        let mut hi = (T::c(4.0) * T::from_count(d).ln()).sqrt() + T::c(4.0);
        let mut tries = 0;
        while g(hi) <= T::zero() {
            hi = hi * T::c(2.0);
            tries += 1;
            if tries > 40 {
                return None;
            }
        }
        Some(bisect(g, u_nu, hi))
    };

    let beta_floor = beta.floor().to_usize().unwrap_or(0).min(d);
    let m_min = (beta_floor + 1).min(d);

    // boundary regime m <= beta: active coordinates sit at the unconstrained
    // maximizer of hbar_nu Lambda
    if beta_floor >= 1 {
        let mut u_best = u_nu;
        let mut v_best = hl(u_nu);
        let mut u = u_nu;
        while u <= u_nu + T::c(16.0) {
            let v = hl(u);
            if v > v_best {
                v_best = v;
                u_best = u;
            }
            u += T::c(0.01);
        }
        for m in 1..=beta_floor {
            consider(m, u_best, &mut best);
        }
    }

    let eval_stationary = |m: usize, best: &mut (T, T, usize)| {
        if let Some(u) = solve_m(m) {
            consider(m, u, best);
        } else {
            consider(m, u_nu, best);
        }
    };

    if d <= 10_000 {
        for m in m_min..=d {
            eval_stationary(m, &mut best);
        }
    } else {
        // geometric subgrid, then zoom around the argmax
        let mut grid: Vec<usize> = Vec::new();
        let mut m = m_min as f64;
        while (m as usize) < d {
            grid.push(m as usize);
            m *= 1.05;
        }
        grid.push(d);
        grid.dedup();
        let mut best_idx = 0;
        let mut best_grid = T::neg_infinity();
        for (i, &mm) in grid.iter().enumerate() {
            let mut local = (T::neg_infinity(), u_nu, 0usize);
            eval_stationary(mm, &mut local);
            if local.0 > best_grid {
                best_grid = local.0;
                best_idx = i;
            }
            if local.0 > best.0 {
                best = local;
            }
        }
        let mut lo = if best_idx == 0 { m_min } else { grid[best_idx - 1] };
        let mut hi = if best_idx + 1 < grid.len() { grid[best_idx + 1] } else { d };
        while hi - lo > 256 {
            let n_pts = 64usize;
            let mut b_m = lo;
            let mut b_v = T::neg_infinity();
            for i in 0..=n_pts {
                let mm = lo + (hi - lo) * i / n_pts;
                let mut local = (T::neg_infinity(), u_nu, 0usize);
                eval_stationary(mm, &mut local);
                if local.0 > b_v {
                    b_v = local.0;
                    b_m = mm;
                }
                if local.0 > best.0 {
                    best = local;
                }
            }
            let w = (hi - lo) / n_pts;
            lo = b_m.saturating_sub(w).max(m_min);
            hi = (b_m + w).min(d);
        }
        for mm in lo..=hi {
            eval_stationary(mm, &mut best);
        }
    }

    SupremumResult { d, r: nu, value: best.0.exp(), maximizer_u: best.1, m_star: best.2 }
}
