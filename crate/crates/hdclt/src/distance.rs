//! Empirical hyperrectangle distances against Gaussian references, the
//! anti-concentration certificate, and the transport-shift utilities.
//!
//! The true supremum over all hyperrectangles is not computable, so every
//! estimate here is the maximum over an explicit finite family and is reported
//! as a lower bound of the full metric. That is the right direction for
//! domination tests: an upper-bound functional must dominate any lower bound.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bounds::{group_mc_multi, Estimate};
use crate::models::SigmaStats;
use crate::rng::{role, substream};
use crate::special::{std_normal_cdf, std_normal_log_cdf, std_normal_quantile};
use crate::suprema::Rectangle;

/// Phi extended to infinite endpoints.
fn cdf_ext(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        std_normal_cdf(x)
    }
}

/// Finite rectangle family kinds. Members are deterministic given the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// Lower orthants with thresholds at reference quantiles of the
    /// max statistic.
    LowerOrthantGrid,
    /// Centered boxes with half-widths at reference quantiles of the
    /// max-absolute statistic.
    SymmetricBoxGrid,
    /// Random finite rectangles with endpoints at reference quantiles.
    RandomRectangles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RectangleFamily {
    pub kind: FamilyKind,
    /// Grid size or rectangle count.
    pub resolution: usize,
    /// Only used by random rectangles.
    pub seed: u64,
}

impl RectangleFamily {
    pub fn lower_orthant_default() -> Self {
        // quantile grid 0.01..0.99 step 0.02
        RectangleFamily { kind: FamilyKind::LowerOrthantGrid, resolution: 50, seed: 0 }
    }

    pub fn symmetric_box_default() -> Self {
        RectangleFamily { kind: FamilyKind::SymmetricBoxGrid, resolution: 50, seed: 0 }
    }

    pub fn random_default(seed: u64) -> Self {
        RectangleFamily { kind: FamilyKind::RandomRectangles, resolution: 1000, seed }
    }

    /// Standardized grid levels for the two grid kinds: the p-quantiles of the
    /// max (resp. max-absolute) statistic of d independent standard normals.
    fn grid_levels(&self, d: usize) -> Vec<f64> {
        let r = self.resolution;
        (0..r)
            .map(|i| {
                let p = (2 * i + 1) as f64 / (2 * r) as f64;
                match self.kind {
                    FamilyKind::LowerOrthantGrid => {
                        // P(max_j Z_j <= x) = Phi(x)^d = p
                        std_normal_quantile(p.powf(1.0 / d as f64)).expect("p in (0,1)")
                    }
                    FamilyKind::SymmetricBoxGrid => {
                        // P(max_j |Z_j| <= x) = (2 Phi(x) - 1)^d = p
                        std_normal_quantile(0.5 * (1.0 + p.powf(1.0 / d as f64)))
                            .expect("p in (0,1)")
                    }
                    FamilyKind::RandomRectangles => unreachable!(),
                }
            })
            .collect()
    }

    /// Member rectangles, scaled per coordinate by sqrt(Sigma_jj).
    pub fn members(&self, sigma: &SigmaStats<f64>) -> Vec<Rectangle<f64>> {
        let d = sigma.d;
        let scale: Vec<f64> = (0..d).map(|j| sigma.entry(j, j).sqrt()).collect();
        match self.kind {
            FamilyKind::LowerOrthantGrid => self
                .grid_levels(d)
                .iter()
                .map(|&x| {
                    Rectangle::new(
                        vec![f64::NEG_INFINITY; d],
                        scale.iter().map(|s| s * x).collect(),
                    )
                })
                .collect(),
            FamilyKind::SymmetricBoxGrid => self
                .grid_levels(d)
                .iter()
                .map(|&x| {
                    Rectangle::new(
                        scale.iter().map(|s| -s * x).collect(),
                        scale.iter().map(|s| s * x).collect(),
                    )
                })
                .collect(),
            FamilyKind::RandomRectangles => (0..self.resolution)
                .map(|i| {
                    let mut rng = substream(self.seed, i as u64, role::AUX);
                    let mut lower = Vec::with_capacity(d);
                    let mut upper = Vec::with_capacity(d);
                    for s in &scale {
                        let q1: f64 =
                            std_normal_quantile(rng.gen_range(0.001..0.999)).expect("interior p");
                        let q2: f64 =
                            std_normal_quantile(rng.gen_range(0.001..0.999)).expect("interior p");
                        lower.push(s * q1.min(q2));
                        upper.push(s * q1.max(q2));
                    }
                    Rectangle::new(lower, upper)
                })
                .collect(),
        }
    }
}

/// Lower orthants at explicit standardized thresholds (diagonal rectangles at
/// arbitrary levels, e.g. sample order statistics).
pub fn lower_orthants_at(thresholds: &[f64], sigma: &SigmaStats<f64>) -> Vec<Rectangle<f64>> {
    let d = sigma.d;
    let scale: Vec<f64> = (0..d).map(|j| sigma.entry(j, j).sqrt()).collect();
    thresholds
        .iter()
        .map(|&x| {
            Rectangle::new(vec![f64::NEG_INFINITY; d], scale.iter().map(|s| s * x).collect())
        })
        .collect()
}

/// Reference probability of one rectangle. Diagonal covariances are exact
/// (zero SE); general covariances fall back to antithetic Monte Carlo.
pub fn gaussian_rect_prob(
    sigma: &SigmaStats<f64>,
    a: &Rectangle<f64>,
    reps: u64,
    seed: u64,
) -> Estimate {
    assert_eq!(a.dim(), sigma.d, "rectangle and covariance dimensions differ");
    if sigma.is_diagonal() {
        let mut p = 1.0;
        for j in 0..sigma.d {
            let s = sigma.entry(j, j).sqrt();
            p *= cdf_ext(a.upper[j] / s) - cdf_ext(a.lower[j] / s);
        }
        Estimate { value: p, se: 0.0 }
    } else {
        gaussian_rect_prob_mc(sigma, std::slice::from_ref(a), reps, seed)
            .into_iter()
            .next()
            .expect("one rectangle in, one estimate out")
    }
}

/// Antithetic Monte Carlo reference probabilities, one shared draw stream for
/// every rectangle in the batch.
pub fn gaussian_rect_prob_mc(
    sigma: &SigmaStats<f64>,
    members: &[Rectangle<f64>],
    reps: u64,
    seed: u64,
) -> Vec<Estimate> {
    let d = sigma.d;
    let m = DMatrix::from_fn(d, d, |r, c| sigma.entry(r, c));
    let chol = m.cholesky().expect("covariance must be positive definite for MC references");
    let l = chol.l();
    group_mc_multi(reps, members.len(), |rep, out| {
        let mut rng = substream(seed, rep, role::REFERENCE);
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut w = vec![0.0; d];
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += l[(r, c)] * z[c];
            }
            w[r] = acc;
        }
        for (slot, rect) in out.iter_mut().zip(members) {
            let hit = |v: &dyn Fn(usize) -> f64| {
                (0..d).all(|j| rect.lower[j] <= v(j) && v(j) <= rect.upper[j])
            };
            let plus = hit(&|j| w[j]) as u64 as f64;
            let minus = hit(&|j| -w[j]) as u64 as f64;
            *slot = 0.5 * (plus + minus);
        }
    })
}

/// Family-restricted distance estimate; a lower bound of the sup over all
/// hyperrectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEstimate {
    pub value: f64,
    /// Index of the maximizing rectangle in the member list.
    pub argmax: usize,
    /// Combined (empirical + reference) SE per rectangle.
    pub per_rect_se: Vec<f64>,
    /// True when a Monte Carlo reference CI exceeded the requested tolerance.
    pub degraded: bool,
}

impl DistanceEstimate {
    pub fn max_se(&self) -> f64 {
        self.per_rect_se.iter().cloned().fold(0.0, f64::max)
    }
}

/// Per-rectangle empirical hit frequencies of a sampler, with group SEs. The
/// grid kinds reduce membership to one scalar statistic per draw.
fn empirical_frequencies<S>(
    sampler: &S,
    members: &[Rectangle<f64>],
    fast: Option<(&RectangleFamily, &[f64])>,
    reps: u64,
) -> Vec<Estimate>
where
    S: Fn(u64) -> Vec<f64> + Sync,
{
    if let Some((family, scale)) = fast {
        let levels = family.grid_levels(scale.len());
        let absolute = family.kind == FamilyKind::SymmetricBoxGrid;
        return group_mc_multi(reps, levels.len(), |rep, out| {
            let w = sampler(rep);
            let mut stat = f64::NEG_INFINITY;
            for (wj, s) in w.iter().zip(scale) {
                let v = if absolute { wj.abs() / s } else { wj / s };
                stat = stat.max(v);
            }
            for (slot, &x) in out.iter_mut().zip(&levels) {
                *slot = (stat <= x) as u64 as f64;
            }
        });
    }
    group_mc_multi(reps, members.len(), |rep, out| {
        let w = sampler(rep);
        for (slot, rect) in out.iter_mut().zip(members) {
            let inside =
                (0..w.len()).all(|j| rect.lower[j] <= w[j] && w[j] <= rect.upper[j]);
            *slot = inside as u64 as f64;
        }
    })
}

/// Max over the family of |empirical frequency - reference probability|.
pub fn empirical_distance<S>(
    sampler: S,
    sigma: &SigmaStats<f64>,
    family: &RectangleFamily,
    reps: u64,
    ref_reps: u64,
    ref_tol: f64,
) -> DistanceEstimate
where
    S: Fn(u64) -> Vec<f64> + Sync,
{
    let members = family.members(sigma);
    empirical_distance_over(sampler, sigma, family, &members, reps, ref_reps, ref_tol)
}

/// Same as `empirical_distance` for an explicit member list (used for families
/// at sample-dependent thresholds and for pathwise monotonicity checks).
pub fn empirical_distance_over<S>(
    sampler: S,
    sigma: &SigmaStats<f64>,
    family: &RectangleFamily,
    members: &[Rectangle<f64>],
    reps: u64,
    ref_reps: u64,
    ref_tol: f64,
) -> DistanceEstimate
where
    S: Fn(u64) -> Vec<f64> + Sync,
{
    let d = sigma.d;
    let scale: Vec<f64> = (0..d).map(|j| sigma.entry(j, j).sqrt()).collect();
    let grid_fast = matches!(
        family.kind,
        FamilyKind::LowerOrthantGrid | FamilyKind::SymmetricBoxGrid
    ) && members.len() == family.resolution;
    let fast = grid_fast.then_some((family, scale.as_slice()));
    let freqs = empirical_frequencies(&sampler, members, fast, reps);
    let refs: Vec<Estimate> = if sigma.is_diagonal() {
        members.iter().map(|a| gaussian_rect_prob(sigma, a, 0, 0)).collect()
    } else {
        gaussian_rect_prob_mc(sigma, members, ref_reps, family.seed ^ 0x9e37_79b9)
    };
    let mut value = -1.0;
    let mut argmax = 0;
    let mut per_rect_se = Vec::with_capacity(members.len());
    let mut degraded = false;
    for (i, (f, r)) in freqs.iter().zip(&refs).enumerate() {
        let gap = (f.value - r.value).abs();
        if gap > value {
            value = gap;
            argmax = i;
        }
        per_rect_se.push((f.se * f.se + r.se * r.se).sqrt());
        if 4.0 * r.se > ref_tol {
            degraded = true;
        }
    }
    DistanceEstimate { value, argmax, per_rect_se, degraded }
}

/// Exact sup over x of |ECDF(max_j W_j) - Phi(x)^d| for a diagonal reference.
/// The sup of |ECDF - continuous CDF| is attained at the jump points, so both
/// one-sided candidates at each order statistic are enough.
pub fn max_kolmogorov(samples: &[f64], d: usize) -> DistanceEstimate {
    assert!(!samples.is_empty(), "need at least one max sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    let n = sorted.len() as f64;
    let mut value = 0.0;
    let mut argmax = 0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = (d as f64 * std_normal_log_cdf(x)).exp();
        let hi = ((i + 1) as f64 / n - f).abs();
        let lo = (i as f64 / n - f).abs();
        let cand = hi.max(lo);
        if cand > value {
            value = cand;
            argmax = i;
        }
    }
    DistanceEstimate { value, argmax, per_rect_se: Vec::new(), degraded: false }
}

/// Right-hand side of the anti-concentration bound, with log d floored at
/// log 3 (the d >= 3 convention).
pub fn anti_concentration_bound(d: usize, sigma_under_sq: f64, eps: f64) -> f64 {
    let log_d = (d.max(3) as f64).ln();
    eps / sigma_under_sq.sqrt() * ((2.0 * log_d).sqrt() + 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntiConcentrationReport {
    /// Cells with empirical difference above bound + 4 SE.
    pub violations: usize,
    /// Min over (y, eps) of bound + 4 SE - difference.
    pub tightest_margin: f64,
}

/// Monte Carlo certification of P(Y <= y + eps) - P(Y <= y) <= bound across
/// random levels y. The difference is estimated pathwise as
/// P(0 < max_j(Y_j - y_j) <= eps). With `diagonal_levels` the y are constant
/// multiples of the coordinate scales, so one max per draw serves every cell;
/// that is the only tractable mode at large d.
pub fn anti_concentration_check(
    sigma: &SigmaStats<f64>,
    epsilons: &[f64],
    n_y: usize,
    reps: u64,
    seed: u64,
    diagonal_levels: bool,
) -> AntiConcentrationReport {
    assert!(sigma.is_diagonal(), "level sampling implemented for diagonal covariances");
    let d = sigma.d;
    let scale: Vec<f64> = (0..d).map(|j| sigma.entry(j, j).sqrt()).collect();
    let equal_scale = scale.iter().all(|&s| s == scale[0]);
    assert!(
        !diagonal_levels || equal_scale,
        "shared-max level evaluation needs equal coordinate scales"
    );
    let levels: Vec<Vec<f64>> = (0..n_y)
        .map(|i| {
            let mut rng = substream(seed, i as u64, role::AUX);
            let shared = std_normal_quantile(rng.gen_range(0.001..0.999)).expect("interior p");
            scale
                .iter()
                .map(|s| {
                    let q = if diagonal_levels {
                        shared
                    } else {
                        std_normal_quantile(rng.gen_range(0.001..0.999)).expect("interior p")
                    };
                    s * q
                })
                .collect()
        })
        .collect();
    let k = n_y * epsilons.len();
    let cells = group_mc_multi(reps, k, |rep, out| {
        let mut rng = substream(seed, rep, role::REFERENCE);
        let y: Vec<f64> = scale
            .iter()
            .map(|s| {
                let z: f64 = StandardNormal.sample(&mut rng);
                s * z
            })
            .collect();
        let mut idx = 0;
        if diagonal_levels {
            // y_j = s q, so max_j(Y_j - y_j) = s(max_j Z_j - q): one max per
            // draw serves every level, which keeps large d tractable
            let mx = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for level in &levels {
                let m = mx - level[0];
                for &eps in epsilons {
                    out[idx] = (m > 0.0 && m <= eps) as u64 as f64;
                    idx += 1;
                }
            }
        } else {
            for level in &levels {
                let mut m = f64::NEG_INFINITY;
                for (yj, lj) in y.iter().zip(level) {
                    m = m.max(yj - lj);
                }
                for &eps in epsilons {
                    out[idx] = (m > 0.0 && m <= eps) as u64 as f64;
                    idx += 1;
                }
            }
        }
    });
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for (i, cell) in cells.iter().enumerate() {
        let eps = epsilons[i % epsilons.len()];
        let bound = anti_concentration_bound(d, sigma.sigma_under_sq, eps);
        let margin = bound + 4.0 * cell.se - cell.value;
        if margin < 0.0 {
            violations += 1;
        }
        tightest = tightest.min(margin);
    }
    AntiConcentrationReport { violations, tightest_margin: tightest }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2ShiftRow {
    pub c: f64,
    pub d: usize,
    /// Exact rectangle distance of Z + c e1 vs Z: Phi(c/2) - Phi(-c/2).
    pub lhs: f64,
    /// (log d)^{1/3} c^{2/3}, i.e. the transport bound with constant 1.
    pub rhs: f64,
    pub pass: bool,
}

/// The deterministic-shift transport check. W2(Z + c e1, Z) = c exactly, and
/// the rectangle distance of the shift pair is attained on half-lines at c/2.
pub fn w2_shift_check(c_grid: &[f64], d_grid: &[usize]) -> Vec<W2ShiftRow> {
    let mut rows = Vec::with_capacity(c_grid.len() * d_grid.len());
    for &c in c_grid {
        assert!(c > 0.0 && c <= 1.0, "shift grid restricted to (0, 1]");
        for &d in d_grid {
            assert!(d >= 3, "log d convention needs d >= 3");
            let lhs = std_normal_cdf(0.5 * c) - std_normal_cdf(-0.5 * c);
            let rhs = (d as f64).ln().cbrt() * c.powf(2.0 / 3.0);
            rows.push(W2ShiftRow { c, d, lhs, rhs, pass: lhs <= rhs });
        }
    }
    rows
}

/// Empirical 1D 2-Wasserstein distance via the sorted-sample coupling.
pub fn w2_1d(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "sorted coupling needs equal sample sizes");
    assert!(!a.is_empty());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("no NaN samples"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("no NaN samples"));
    let ms: f64 = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    ms.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Family, ModelSpec};
    use crate::special::std_normal_isf;

    fn identity(d: usize) -> SigmaStats<f64> {
        let mut s = vec![0.0; d * d];
        for j in 0..d {
            s[j * d + j] = 1.0;
        }
        SigmaStats::from_matrix(d, s)
    }

    fn gauss_sampler(d: usize, seed: u64) -> impl Fn(u64) -> Vec<f64> + Sync {
        move |rep| {
            let mut rng = substream(seed, rep, role::ROWS);
            (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    }

    #[test]
    fn orthant_probability_is_two_to_minus_d() {
        let d = 5;
        let a = Rectangle::new(vec![f64::NEG_INFINITY; d], vec![0.0; d]);
        let est = gaussian_rect_prob(&identity(d), &a, 0, 0);
        assert!((est.value - 2f64.powi(-(d as i32))).abs() < 1e-15);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn symmetric_box_follows_product_rule() {
        let d = 4;
        let a = Rectangle::new(vec![-1.0; d], vec![1.0; d]);
        let est = gaussian_rect_prob(&identity(d), &a, 0, 0);
        let one_dim: f64 = std_normal_cdf(1.0) - std_normal_cdf(-1.0);
        assert!((est.value - one_dim.powi(d as i32)).abs() < 1e-14);
    }

    #[test]
    fn correlated_2d_orthant_matches_arcsine_formula() {
        let sigma = SigmaStats::from_matrix(2, vec![1.0, 0.5, 0.5, 1.0]);
        let a = Rectangle::new(vec![f64::NEG_INFINITY; 2], vec![0.0; 2]);
        let est = gaussian_rect_prob(&sigma, &a, 400_000, 11);
        let exact = 0.25 + (0.5f64).asin() / (2.0 * std::f64::consts::PI);
        assert!((exact - 1.0 / 3.0).abs() < 1e-15);
        assert!(est.se > 0.0);
        assert!((est.value - exact).abs() <= 4.0 * est.se, "mc orthant off: {est:?}");
    }

    #[test]
    fn mc_and_exact_reference_modes_agree_on_diagonal() {
        let d = 3;
        let sigma = identity(d);
        let a = Rectangle::new(vec![-1.0, f64::NEG_INFINITY, -0.5], vec![0.5, 1.0, 2.0]);
        let exact = gaussian_rect_prob(&sigma, &a, 0, 0);
        let mc = gaussian_rect_prob_mc(&sigma, std::slice::from_ref(&a), 200_000, 7)[0];
        assert!((exact.value - mc.value).abs() <= 4.0 * mc.se);
    }

    #[test]
    fn null_case_distance_within_noise() {
        let d = 10;
        let sigma = identity(d);
        let family = RectangleFamily::lower_orthant_default();
        let est = empirical_distance(gauss_sampler(d, 21), &sigma, &family, 40_000, 0, 1.0);
        assert!(!est.degraded);
        assert!(est.value <= 4.0 * est.max_se(), "null distance {} vs {}", est.value, est.max_se());
    }

    #[test]
    fn shift_case_matches_calculus_maximum() {
        // W = Z + c with c = 0.8: sup_x |Phi(x) - Phi(x - c)| = Phi(c/2) - Phi(-c/2),
        // flat to second order at x = c/2, so the quantile grid loses little
        let c = 0.8;
        let sigma = identity(1);
        let family = RectangleFamily::lower_orthant_default();
        let sampler = move |rep: u64| {
            let mut rng = substream(33, rep, role::ROWS);
            let z: f64 = StandardNormal.sample(&mut rng);
            vec![z + c]
        };
        let est = empirical_distance(sampler, &sigma, &family, 400_000, 0, 1.0);
        let exact = std_normal_cdf(0.5 * c) - std_normal_cdf(-0.5 * c);
        assert!(
            (est.value - exact).abs() <= 4.0 * est.max_se() + 2e-3,
            "shift distance {} vs exact {exact}",
            est.value
        );
    }

    #[test]
    fn exponential_model_distance_decreases_in_n() {
        let d = 20;
        let sigma = identity(d);
        let family = RectangleFamily::lower_orthant_default();
        let reps = 100_000;
        let mut values = Vec::new();
        let mut ses = Vec::new();
        for n in [100, 1_000, 10_000] {
            let spec =
                ModelSpec { family: Family::ProductExponential, d, n, seed: 5 };
            let sampler = move |rep: u64| {
                spec.sample_w_gamma_fast::<f64>(rep).expect("exponential fast path")
            };
            let est = empirical_distance(sampler, &sigma, &family, reps, 0, 1.0);
            values.push(est.value);
            ses.push(est.max_se());
        }
        assert!(values[0] > values[2], "no overall decrease: {values:?}");
        for i in 0..2 {
            assert!(
                values[i + 1] <= values[i] + 4.0 * (ses[i] + ses[i + 1]),
                "non-monotone beyond CI: {values:?}"
            );
        }
    }

    #[test]
    fn max_kolmogorov_is_dkw_consistent() {
        // sample the max statistic by inversion: P(max <= x) = Phi(x)^d
        let d = 8;
        let reps = 20_000usize;
        let mut rng = substream(55, 0, role::ROWS);
        let samples: Vec<f64> = (0..reps)
            .map(|_| {
                let u: f64 = rng.gen_range(1e-12..1.0);
                std_normal_quantile(u.powf(1.0 / d as f64)).expect("interior p")
            })
            .collect();
        let est = max_kolmogorov(&samples, d);
        let dkw = ((2.0f64 / 0.001).ln() / (2.0 * reps as f64)).sqrt();
        assert!(est.value <= dkw, "KS {} above DKW bound {dkw}", est.value);
    }

    #[test]
    fn max_kolmogorov_d1_reduces_to_classical_ks() {
        let est = max_kolmogorov(&[0.0], 1);
        assert!((est.value - 0.5).abs() < 1e-15);
        let est = max_kolmogorov(&[-0.5, 0.5], 1);
        let expected: f64 = std_normal_cdf(-0.5f64).max(1.0 - std_normal_cdf(0.5));
        assert!((est.value - expected).abs() < 1e-15);
    }

    #[test]
    fn orthant_family_at_order_statistics_recovers_ks() {
        let d = 4;
        let sigma = identity(d);
        let reps = 2_000u64;
        let sampler = gauss_sampler(d, 77);
        let maxima: Vec<f64> = (0..reps)
            .map(|rep| sampler(rep).into_iter().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let ks = max_kolmogorov(&maxima, d);
        // closed orthants at the order statistics give the right-limit branch;
        // shifting just below each point recovers the left-limit branch
        let mut thresholds = maxima.clone();
        thresholds.extend(maxima.iter().map(|x| x - 1e-9));
        let members = lower_orthants_at(&thresholds, &sigma);
        let family = RectangleFamily::lower_orthant_default();
        let est =
            empirical_distance_over(&sampler, &sigma, &family, &members, reps, 0, 1.0);
        assert!((est.value - ks.value).abs() < 1e-5, "{} vs {}", est.value, ks.value);
    }

    #[test]
    fn family_monotone_under_enlargement() {
        let d = 6;
        let sigma = identity(d);
        let big = RectangleFamily { kind: FamilyKind::RandomRectangles, resolution: 80, seed: 3 };
        let small = RectangleFamily { kind: FamilyKind::RandomRectangles, resolution: 40, seed: 3 };
        let members_big = big.members(&sigma);
        let members_small = small.members(&sigma);
        assert_eq!(&members_big[..40], &members_small[..]);
        let reps = 5_000;
        let v_big = empirical_distance_over(gauss_sampler(d, 9), &sigma, &big, &members_big, reps, 0, 1.0);
        let v_small =
            empirical_distance_over(gauss_sampler(d, 9), &sigma, &small, &members_small, reps, 0, 1.0);
        assert!(v_big.value >= v_small.value - 1e-15);
    }

    #[test]
    fn symmetric_family_is_negation_invariant_pathwise() {
        let d = 5;
        let sigma = identity(d);
        let family = RectangleFamily::symmetric_box_default();
        let plain = empirical_distance(gauss_sampler(d, 13), &sigma, &family, 10_000, 0, 1.0);
        let base = gauss_sampler(d, 13);
        let negated = move |rep: u64| base(rep).into_iter().map(|x| -x).collect::<Vec<f64>>();
        let flipped = empirical_distance(negated, &sigma, &family, 10_000, 0, 1.0);
        assert_eq!(plain.value, flipped.value);
    }

    #[test]
    fn anti_concentration_one_dim_closed_form() {
        // d = 1 embedded in the d >= 3 convention: the slope of Phi is
        // at most phi(0), far below sqrt(2 log 3) + 2
        for &eps in &[0.01, 0.1, 0.5] {
            for i in -30..=30 {
                let y = 0.1 * i as f64;
                let diff = std_normal_cdf(y + eps) - std_normal_cdf(y);
                assert!(diff <= anti_concentration_bound(1, 1.0, eps));
            }
        }
    }

    #[test]
    fn anti_concentration_epsilon_zero_is_exact_zero() {
        let report =
            anti_concentration_check(&identity(4), &[0.0], 5, 2_000, 17, false);
        assert_eq!(report.violations, 0);
        // every pathwise difference indicator is zero at eps = 0
        assert!(report.tightest_margin >= 0.0);
    }

    #[test]
    fn anti_concentration_large_d_no_violation() {
        let report =
            anti_concentration_check(&identity(1000), &[0.05], 20, 100_000, 23, true);
        assert_eq!(report.violations, 0, "margin {}", report.tightest_margin);
    }

    #[test]
    fn w2_shift_inequality_holds_on_grid() {
        let c_grid: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
        let rows = w2_shift_check(&c_grid, &[3, 10, 1_000_000]);
        assert!(rows.iter().all(|r| r.pass));
        let r = rows.iter().find(|r| r.d == 3 && (r.c - 1.0).abs() < 1e-12).unwrap();
        assert!((r.lhs - 0.38292492254802624).abs() < 1e-12);
        assert!((r.rhs - 3f64.ln().cbrt()).abs() < 1e-12);
    }

    #[test]
    fn w2_shift_slack_grows_as_c_vanishes() {
        let rows = w2_shift_check(&[0.2, 0.1, 0.05, 0.025], &[3]);
        let slack: Vec<f64> = rows.iter().map(|r| r.rhs / r.lhs).collect();
        assert!(slack.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn w2_null_coupling_is_small() {
        let n = 20_000;
        let mut rng_a = substream(41, 0, role::ROWS);
        let mut rng_b = substream(41, 1, role::ROWS);
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng_a)).collect();
        let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng_b)).collect();
        let w2 = w2_1d(&a, &b);
        assert!(w2 < 0.05, "null coupling W2 = {w2}");
        assert_eq!(w2_1d(&a, &a), 0.0);
    }

    #[test]
    fn gamma_fast_sampler_matches_exact_marginal() {
        // one coordinate of the fast path against the exact Gamma(n) tail
        let spec = ModelSpec { family: Family::ProductExponential, d: 1, n: 100, seed: 31 };
        let reps = 20_000u64;
        let mut samples: Vec<f64> = (0..reps)
            .map(|rep| spec.sample_w_gamma_fast::<f64>(rep).unwrap()[0])
            .collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = spec.n as f64;
        let mut d_stat = 0.0f64;
        for (i, &x) in samples.iter().enumerate() {
            let f = crate::special::regularized_gamma_p(n, n + x * n.sqrt()).unwrap();
            let hi = ((i + 1) as f64 / reps as f64 - f).abs();
            let lo = (i as f64 / reps as f64 - f).abs();
            d_stat = d_stat.max(hi.max(lo));
        }
        let dkw = ((2.0f64 / 0.001).ln() / (2.0 * reps as f64)).sqrt();
        assert!(d_stat <= dkw, "fast sampler KS {d_stat} above {dkw}");
    }

    #[test]
    fn grid_levels_hit_reference_quantiles() {
        let d = 7;
        let family = RectangleFamily::lower_orthant_default();
        for (i, &x) in family.grid_levels(d).iter().enumerate() {
            let p = (2 * i + 1) as f64 / 100.0;
            assert!(((d as f64 * std_normal_log_cdf(x)).exp() - p).abs() < 1e-10);
        }
        let boxes = RectangleFamily::symmetric_box_default();
        for (i, &x) in boxes.grid_levels(d).iter().enumerate() {
            let p = (2 * i + 1) as f64 / 100.0;
            let q = (2.0 * std_normal_cdf(x) - 1.0).powi(d as i32);
            assert!((q - p).abs() < 1e-10);
        }
        let _ = std_normal_isf::<f64>(0.5).unwrap();
    }
}
