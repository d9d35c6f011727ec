//! Model zoo: every dependence structure exercised by the experiments, with
//! exactly known covariance and deterministic counter-based sampling.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;
use crate::rng::{role, substream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension and sample count must be positive")]
    EmptyShape,
    #[error("mixing matrix must be d x d with d = {expected}, got {rows} x {cols}")]
    MixingShape { expected: usize, rows: usize, cols: usize },
    #[error("moving-average coefficients must be non-empty with sum of squares 1, got {sum_sq}")]
    CoefficientNorm { sum_sq: f64 },
    #[error("chaos rows must be non-empty with 2*sum(lambda^2) = 1, row {row} has {sum_sq}")]
    ChaosRowNorm { row: usize, sum_sq: f64 },
    #[error("family {0} has no sample rows")]
    NoRows(&'static str),
}

/// Mean-zero unit-variance 1D laws available to the product families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density1d {
    StdNormal,
    /// E - 1 for a unit exponential E; support [-1, inf).
    ShiftedExponential,
    /// Uniform on [-sqrt(3), sqrt(3)].
    UniformSqrt3,
}

impl Density1d {
    pub fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            Density1d::StdNormal => StandardNormal.sample(rng),
            Density1d::ShiftedExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            Density1d::UniformSqrt3 => rng.gen_range(-3f64.sqrt()..3f64.sqrt()),
        }
    }

    pub fn pdf(self, x: f64) -> f64 {
        match self {
            Density1d::StdNormal => crate::special::std_normal_pdf(x),
            Density1d::ShiftedExponential => {
                if x >= -1.0 {
                    (-(x + 1.0)).exp()
                } else {
                    0.0
                }
            }
            Density1d::UniformSqrt3 => {
                let s = 3f64.sqrt();
                if (-s..=s).contains(&x) {
                    1.0 / (2.0 * s)
                } else {
                    0.0
                }
            }
        }
    }

    /// E|X| in closed form.
    pub fn abs_mean(self) -> f64 {
        match self {
            Density1d::StdNormal => (2.0 / std::f64::consts::PI).sqrt(),
            // E|E-1| = 2/e for unit exponential E
            Density1d::ShiftedExponential => 2.0 / std::f64::consts::E,
            Density1d::UniformSqrt3 => 3f64.sqrt() / 2.0,
        }
    }

    /// E X^3 in closed form.
    pub fn third_moment(self) -> f64 {
        match self {
            Density1d::StdNormal | Density1d::UniformSqrt3 => 0.0,
            Density1d::ShiftedExponential => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    ProductExponential,
    ProductCustom1d { density: Density1d },
    /// Rows M xi with standard Gaussian xi; mixing stored row-major d x d.
    GaussianAffine { mixing: Vec<Vec<f64>> },
    /// X_{ij} = sum_k c_k zeta_{i+k,j} with iid standard normal innovations.
    MovingAverageMDependent { coeffs: Vec<f64> },
    /// Product-exponential rows with the cyclic quadratic statistic
    /// F_j(X) = n^{-1/2} sum_i X_{ij} + (eps/n) sum_i X_{ij} X_{i+1,j}.
    NonlinearQuadratic { epsilon: f64 },
    /// W_j = sum_k lambda_{jk} (N_k^2 - 1) with shared standard normals N.
    ChaosQ2 { lambda: Vec<Vec<f64>> },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::ProductExponential => "product-exponential",
            Family::ProductCustom1d { .. } => "product-custom-1d",
            Family::GaussianAffine { .. } => "gaussian-affine",
            Family::MovingAverageMDependent { .. } => "moving-average-m-dependent",
            Family::NonlinearQuadratic { .. } => "nonlinear-quadratic",
            Family::ChaosQ2 { .. } => "chaos-q2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
}

/// Row-major n x d sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T: Real> {
    pub n: usize,
    pub d: usize,
    data: Vec<T>,
}

impl<T: Real> SampleBatch<T> {
    pub fn from_rows(n: usize, d: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * d);
        SampleBatch { n, d, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.d)
    }

    /// W = n^{-1/2} sum of rows.
    pub fn normalized_sum(&self) -> Vec<T> {
        let mut w = vec![T::zero(); self.d];
        for row in self.rows() {
            for (wj, &x) in w.iter_mut().zip(row) {
                *wj += x;
            }
        }
        let scale = T::from_count(self.n).sqrt();
        for wj in &mut w {
            *wj /= scale;
        }
        w
    }
}

/// Exact covariance of W together with the scalars entering the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaStats<T: Real> {
    /// Row-major d x d matrix.
    pub sigma: Vec<T>,
    pub d: usize,
    pub sigma_bar_sq: T,
    pub sigma_under_sq: T,
    pub sigma_star_sq: T,
}

impl<T: Real> SigmaStats<T> {
    pub fn from_matrix(d: usize, sigma: Vec<T>) -> Self {
        assert_eq!(sigma.len(), d * d);
        let mut bar = T::neg_infinity();
        let mut under = T::infinity();
        let mut diagonal = true;
        for j in 0..d {
            for k in 0..d {
                let v = sigma[j * d + k];
                if j == k {
                    bar = bar.max(v);
                    under = under.min(v);
                } else if v != T::zero() {
                    diagonal = false;
                }
            }
        }
        let star = if diagonal {
            under
        } else {
            let m = DMatrix::from_fn(d, d, |r, c| sigma[r * d + c].to_f64().unwrap());
            let eig = m.symmetric_eigen();
            T::c(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
        };
        SigmaStats { sigma, d, sigma_bar_sq: bar, sigma_under_sq: under, sigma_star_sq: star }
    }

    #[inline]
    pub fn entry(&self, j: usize, k: usize) -> T {
        self.sigma[j * self.d + k]
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.d)
            .all(|j| (0..self.d).all(|k| j == k || self.sigma[j * self.d + k] == T::zero()))
    }
}

/// Resampling exchangeable pair: one row replaced by a fresh draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCoupling<T: Real> {
    pub w: Vec<T>,
    pub w_prime: Vec<T>,
    pub d_vec: Vec<T>,
    pub resampled_index: usize,
}

/// The perturbation family for nonlinear statistics: W itself,
/// the single replacements W^{i}, and the cumulative replacements W^{1:i}.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedFamily<T: Real> {
    pub w: Vec<T>,
    /// `singles[i - 1] = W^{i}`, i = 1..n.
    pub singles: Vec<Vec<T>>,
    /// `prefixes[i] = W^{1:i}`, i = 0..n (so `prefixes[0] = W`).
    pub prefixes: Vec<Vec<T>>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d == 0 || self.n == 0 {
            return Err(ModelError::EmptyShape);
        }
        match &self.family {
            Family::GaussianAffine { mixing } => {
                if mixing.len() != self.d || mixing.iter().any(|r| r.len() != self.d) {
                    return Err(ModelError::MixingShape {
                        expected: self.d,
                        rows: mixing.len(),
                        cols: mixing.first().map_or(0, |r| r.len()),
                    });
                }
            }
            Family::MovingAverageMDependent { coeffs } => {
                let sum_sq: f64 = coeffs.iter().map(|c| c * c).sum();
                if coeffs.is_empty() || (sum_sq - 1.0).abs() > 1e-12 {
                    return Err(ModelError::CoefficientNorm { sum_sq });
                }
            }
            Family::ChaosQ2 { lambda } => {
                if lambda.len() != self.d {
                    return Err(ModelError::ChaosRowNorm { row: lambda.len(), sum_sq: 0.0 });
                }
                for (row, l) in lambda.iter().enumerate() {
                    let sum_sq: f64 = l.iter().map(|v| 2.0 * v * v).sum();
                    if l.is_empty() || (sum_sq - 1.0).abs() > 1e-12 {
                        return Err(ModelError::ChaosRowNorm { row, sum_sq });
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Window radius of the dependency neighborhoods (0 for iid families).
    pub fn window_m(&self) -> usize {
        match &self.family {
            Family::MovingAverageMDependent { coeffs } => coeffs.len() - 1,
            _ => 0,
        }
    }

    pub fn has_rows(&self) -> bool {
        !matches!(self.family, Family::ChaosQ2 { .. })
    }

    fn sample_row_into<T: Real, R: Rng>(&self, rng: &mut R, out: &mut [T]) {
        match &self.family {
            Family::ProductExponential | Family::NonlinearQuadratic { .. } => {
                for x in out.iter_mut() {
                    *x = T::c(Density1d::ShiftedExponential.sample(rng));
                }
            }
            Family::ProductCustom1d { density } => {
                for x in out.iter_mut() {
                    *x = T::c(density.sample(rng));
                }
            }
            Family::GaussianAffine { mixing } => {
                let xi: Vec<f64> = (0..self.d).map(|_| StandardNormal.sample(rng)).collect();
                for (x, row) in out.iter_mut().zip(mixing) {
                    *x = T::c(row.iter().zip(&xi).map(|(m, z)| m * z).sum());
                }
            }
            Family::MovingAverageMDependent { .. } | Family::ChaosQ2 { .. } => {
                unreachable!("no independent row sampler for {}", self.family.name())
            }
        }
    }

    /// The n sample rows of one replication; deterministic in
    /// `(seed, replication)` and independent of execution order.
    pub fn generate<T: Real>(&self, replication: u64) -> SampleBatch<T> {
        self.validate().expect("invalid model spec");
        assert!(self.has_rows(), "{} has no sample rows", self.family.name());
        let mut rng = substream(self.seed, replication, role::ROWS);
        let mut data = vec![T::zero(); self.n * self.d];
        match &self.family {
            Family::MovingAverageMDependent { coeffs } => {
                let m = coeffs.len() - 1;
                // innovation array (n + m) x d, drawn row-major
                let mut innov = vec![0.0f64; (self.n + m) * self.d];
                for z in innov.iter_mut() {
                    *z = StandardNormal.sample(&mut rng);
                }
                for i in 0..self.n {
                    for j in 0..self.d {
                        let mut v = 0.0;
                        for (k, c) in coeffs.iter().enumerate() {
                            v += c * innov[(i + k) * self.d + j];
                        }
                        data[i * self.d + j] = T::c(v);
                    }
                }
            }
            _ => {
                for i in 0..self.n {
                    let row = &mut data[i * self.d..(i + 1) * self.d];
                    self.sample_row_into(&mut rng, row);
                }
            }
        }
        SampleBatch::from_rows(self.n, self.d, data)
    }

    /// W drawn directly (covers the chaos family, which has no rows).
    pub fn sample_w<T: Real>(&self, replication: u64) -> Vec<T> {
        match &self.family {
            Family::ChaosQ2 { lambda } => {
                self.validate().expect("invalid model spec");
                let mut rng = substream(self.seed, replication, role::ROWS);
                let k = lambda[0].len();
                let q: Vec<f64> = (0..k)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * z - 1.0
                    })
                    .collect();
                lambda
                    .iter()
                    .map(|l| T::c(l.iter().zip(&q).map(|(a, b)| a * b).sum()))
                    .collect()
            }
            Family::NonlinearQuadratic { .. } => {
                let batch = self.generate::<T>(replication);
                self.statistic(&batch)
            }
            _ => self.generate::<T>(replication).normalized_sum(),
        }
    }

    /// Equal-in-law O(d) sampler for the product-exponential W using the
    /// Gamma(n) row-sum representation `W_j = (G_j - n)/sqrt(n)`. Returns
    /// `None` for other families.
    pub fn sample_w_gamma_fast<T: Real>(&self, replication: u64) -> Option<Vec<T>> {
        if !matches!(self.family, Family::ProductExponential) {
            return None;
        }
        let mut rng = substream(self.seed, replication, "fast-w");
        let gamma = rand_distr::Gamma::new(self.n as f64, 1.0).expect("n >= 1");
        let sqrt_n = (self.n as f64).sqrt();
        Some(
            (0..self.d)
                .map(|_| T::c((gamma.sample(&mut rng) - self.n as f64) / sqrt_n))
                .collect(),
        )
    }

    /// The model's statistic F applied to a batch (normalized sum plus the
    /// cyclic quadratic term for the nonlinear family).
    pub fn statistic<T: Real>(&self, batch: &SampleBatch<T>) -> Vec<T> {
        let mut w = batch.normalized_sum();
        if let Family::NonlinearQuadratic { epsilon } = &self.family {
            let scale = T::c(*epsilon) / T::from_count(batch.n);
            for j in 0..batch.d {
                let mut q = T::zero();
                for i in 0..batch.n {
                    q += batch.row(i)[j] * batch.row((i + 1) % batch.n)[j];
                }
                w[j] += scale * q;
            }
        }
        w
    }

    /// Exact Cov(W) from the model algebra.
    pub fn exact_sigma<T: Real>(&self) -> SigmaStats<T> {
        self.validate().expect("invalid model spec");
        let d = self.d;
        let mut sigma = vec![T::zero(); d * d];
        match &self.family {
            Family::ProductExponential
            | Family::ProductCustom1d { .. }
            | Family::NonlinearQuadratic { .. } => {
                for j in 0..d {
                    sigma[j * d + j] = T::one();
                }
            }
            Family::GaussianAffine { mixing } => {
                for j in 0..d {
                    for k in 0..d {
                        let v: f64 =
                            mixing[j].iter().zip(&mixing[k]).map(|(a, b)| a * b).sum();
                        sigma[j * d + k] = T::c(v);
                    }
                }
            }
            Family::MovingAverageMDependent { coeffs } => {
                // Var W_j = r(0) + (2/n) sum_h (n - h) r(h), r(h) = sum_k c_k c_{k+h}
                let m = coeffs.len() - 1;
                let n = self.n as f64;
                let mut v = 0.0;
                for h in 0..=m.min(self.n - 1) {
                    let r: f64 =
                        (0..=m - h).map(|k| coeffs[k] * coeffs[k + h]).sum();
                    if h == 0 {
                        v += r;
                    } else {
                        v += 2.0 * (n - h as f64) / n * r;
                    }
                }
                for j in 0..d {
                    sigma[j * d + j] = T::c(v);
                }
            }
            Family::ChaosQ2 { lambda } => {
                for j in 0..d {
                    for k in 0..d {
                        let v: f64 =
                            lambda[j].iter().zip(&lambda[k]).map(|(a, b)| 2.0 * a * b).sum();
                        sigma[j * d + k] = T::c(v);
                    }
                }
            }
        }
        SigmaStats::from_matrix(d, sigma)
    }

    /// Resampling pair: uniform index I, fresh independent row, and
    /// W' = W - (xi_I - xi'_I)/sqrt(n).
    pub fn exchangeable_pair<T: Real>(
        &self,
        batch: &SampleBatch<T>,
        replication: u64,
    ) -> PairCoupling<T> {
        assert!(self.has_rows(), "{} has no sample rows", self.family.name());
        let mut rng = substream(self.seed, replication, role::PAIR);
        let i = rng.gen_range(0..batch.n);
        let mut fresh = vec![T::zero(); batch.d];
        self.sample_row_into(&mut rng, &mut fresh);
        let w = self.statistic(batch);
        let scale = T::from_count(batch.n).sqrt();
        let mut w_prime = w.clone();
        let mut d_vec = vec![T::zero(); batch.d];
        for j in 0..batch.d {
            let delta = (fresh[j] - batch.row(i)[j]) / scale;
            w_prime[j] += delta;
            d_vec[j] = delta;
        }
        PairCoupling { w, w_prime, d_vec, resampled_index: i }
    }

    /// Rows of the independent copy used by the perturbation family.
    pub fn fresh_rows<T: Real>(&self, replication: u64, count: usize) -> Vec<Vec<T>> {
        let mut rng = substream(self.seed, replication, role::COPY);
        (0..count)
            .map(|_| {
                let mut row = vec![T::zero(); self.d];
                self.sample_row_into(&mut rng, &mut row);
                row
            })
            .collect()
    }

    /// W together with all single and cumulative row replacements against one
    /// independent copy of the batch, maintained incrementally.
    pub fn perturbed_batches<T: Real>(
        &self,
        batch: &SampleBatch<T>,
        replication: u64,
    ) -> PerturbedFamily<T> {
        assert!(self.has_rows(), "{} has no sample rows", self.family.name());
        let n = batch.n;
        let d = batch.d;
        let copy_rows = self.fresh_rows::<T>(replication, n);
        let sqrt_n = T::from_count(n).sqrt();
        let eps_over_n = match &self.family {
            Family::NonlinearQuadratic { epsilon } => T::c(*epsilon) / T::from_count(n),
            _ => T::zero(),
        };
        let w = self.statistic(batch);

        // current mixed matrix for the cumulative family
        let mut mixed: Vec<Vec<T>> = batch.rows().map(|r| r.to_vec()).collect();
        let quad_pair = |rows: &[Vec<T>], i: usize, j: usize| {
            rows[i][j] * rows[(i + 1) % n][j]
        };

        let mut singles = Vec::with_capacity(n);
        for i in 0..n {
            let mut wi = w.clone();
            for j in 0..d {
                let delta = (copy_rows[i][j] - batch.row(i)[j]) / sqrt_n;
                wi[j] += delta;
                if eps_over_n != T::zero() {
                    let prev = (i + n - 1) % n;
                    let next = (i + 1) % n;
                    let old = batch.row(i)[j];
                    let new = copy_rows[i][j];
                    let mut dq = batch.row(prev)[j] * (new - old);
                    if next != prev {
                        dq += (new - old) * batch.row(next)[j];
                    } else {
                        // n = 2: both neighbor products involve the same row
                        dq = batch.row(prev)[j] * (new - old) * T::c(2.0);
                    }
                    if n == 1 {
                        dq = new * new - old * old;
                    }
                    wi[j] += eps_over_n * dq;
                }
            }
            singles.push(wi);
        }

        let mut prefixes = Vec::with_capacity(n + 1);
        prefixes.push(w.clone());
        let mut cur = w.clone();
        for i in 0..n {
            for j in 0..d {
                let old = mixed[i][j];
                let new = copy_rows[i][j];
                cur[j] += (new - old) / sqrt_n;
                if eps_over_n != T::zero() {
                    let prev = (i + n - 1) % n;
                    let next = (i + 1) % n;
                    // remove the two products touching row i, swap, re-add
                    let mut before = quad_pair(&mixed, prev, j);
                    let after;
                    if n == 1 {
                        before = old * old;
                        after = new * new;
                    } else if next == prev {
                        before += quad_pair(&mixed, i, j);
                        mixed[i][j] = new;
                        after = quad_pair(&mixed, prev, j) + quad_pair(&mixed, i, j);
                        mixed[i][j] = old;
                    } else {
                        before += quad_pair(&mixed, i, j);
                        mixed[i][j] = new;
                        after = quad_pair(&mixed, prev, j) + quad_pair(&mixed, i, j);
                        mixed[i][j] = old;
                    }
                    cur[j] += eps_over_n * (after - before);
                }
                mixed[i][j] = new;
            }
            prefixes.push(cur.clone());
        }
        PerturbedFamily { w, singles, prefixes }
    }
}
