//! Student's t, Gaussian and t-mixture densities.
//!
//! A [`StudentT`] is parameterized by its *scale* matrix Σ, not its covariance;
//! the covariance `ν/(ν−2)·Σ` is available through [`StudentT::covariance`].
//! All pdf evaluation happens in log space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, is_symmetric, log_det, mahalanobis_sq, spd_cholesky, symmetrize};

/// Tolerance on `Σ wᵢ = 1` for mixture weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// First two moments of a density.
pub trait Moments {
    fn mean(&self) -> &DVector<f64>;
    fn covariance(&self) -> DMatrix<f64>;

    fn dim(&self) -> usize {
        self.mean().len()
    }
}

fn validate_spd(m: &DMatrix<f64>, n: usize, what: &'static str) -> Result<DMatrix<f64>> {
    check_dim(what, n, m.nrows())?;
    check_dim(what, n, m.ncols())?;
    if !is_symmetric(m) {
        return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
    }
    let sym = symmetrize(m);
    spd_cholesky(&sym, what)?;
    Ok(sym)
}

/// Multivariate Student's t density `S(x; μ, Σ, ν)` with `ν > 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentT {
    mean: DVector<f64>,
    scale: DMatrix<f64>,
    dof: f64,
}

impl StudentT {
    pub fn new(mean: DVector<f64>, scale: DMatrix<f64>, dof: f64) -> Result<Self> {
        if !(dof > 2.0) || dof.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "degrees of freedom must exceed 2, got {dof}"
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mean".into()));
        }
        let scale = validate_spd(&scale, mean.len(), "t scale matrix")?;
        Ok(Self { mean, scale, dof })
    }

    /// Builds the t density whose covariance equals `cov`.
    pub fn from_covariance(mean: DVector<f64>, cov: &DMatrix<f64>, dof: f64) -> Result<Self> {
        if !(dof > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "degrees of freedom must exceed 2, got {dof}"
            )));
        }
        Self::new(mean, cov * ((dof - 2.0) / dof), dof)
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// `ν/(ν−2)`, the factor mapping scale to covariance.
    pub fn covariance_factor(&self) -> f64 {
        self.dof / (self.dof - 2.0)
    }

    /// Moment-matched Gaussian `N(μ, ν/(ν−2)·Σ)`.
    pub fn moment_matched_gaussian(&self) -> Gaussian {
        Gaussian {
            mean: self.mean.clone(),
            cov: self.covariance(),
        }
    }

    pub fn log_density(&self) -> Result<TLogDensity> {
        TLogDensity::new(self)
    }

    pub fn sampler(&self) -> Result<TSampler> {
        let chol = spd_cholesky(&self.scale, "t scale matrix")?;
        Ok(TSampler {
            mean: self.mean.clone(),
            factor: chol.l(),
            chi_square: Gamma::new(self.dof / 2.0, 2.0)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?,
            dof: self.dof,
        })
    }
}

impl Moments for StudentT {
    fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    fn covariance(&self) -> DMatrix<f64> {
        &self.scale * self.covariance_factor()
    }
}

/// Multivariate Gaussian `N(x; μ, P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mean".into()));
        }
        let cov = validate_spd(&cov, mean.len(), "gaussian covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim("gaussian logpdf", self.mean.len(), x.len())?;
        let chol = spd_cholesky(&self.cov, "gaussian covariance")?;
        let n = x.len() as f64;
        let d = x - &self.mean;
        Ok(-0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det(&chol) + mahalanobis_sq(&chol, &d)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<DVector<f64>>> {
        let l = spd_cholesky(&self.cov, "gaussian covariance")?.l();
        let n = self.mean.len();
        Ok((0..count)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                &self.mean + &l * z
            })
            .collect())
    }
}

impl Moments for Gaussian {
    fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    fn covariance(&self) -> DMatrix<f64> {
        self.cov.clone()
    }
}

/// A t log-density with its factorization and normalizer precomputed.
#[derive(Debug, Clone)]
pub struct TLogDensity {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    dof: f64,
    log_norm: f64,
}

impl TLogDensity {
    fn new(d: &StudentT) -> Result<Self> {
        let chol = spd_cholesky(&d.scale, "t scale matrix")?;
        let n = d.mean.len() as f64;
        let nu = d.dof;
        let log_norm = ln_gamma((nu + n) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * log_det(&chol)
            - 0.5 * n * (std::f64::consts::PI * nu).ln();
        Ok(Self {
            mean: d.mean.clone(),
            chol,
            dof: nu,
            log_norm,
        })
    }

    /// Log of the normalizing constant; the density's value at its mean.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim("t logpdf", self.mean.len(), x.len())?;
        let n = x.len() as f64;
        let q = mahalanobis_sq(&self.chol, &(x - &self.mean));
        Ok(self.log_norm - 0.5 * (self.dof + n) * (q / self.dof).ln_1p())
    }
}

/// Draws `x = μ + L·z·√(ν/u)` with `z ~ N(0, I)` and `u ~ χ²(ν)`.
#[derive(Debug, Clone)]
pub struct TSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    chi_square: Gamma<f64>,
    dof: f64,
}

impl TSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.mean.len();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u: f64 = self.chi_square.sample(rng);
        &self.mean + (&self.factor * z) * (self.dof / u).sqrt()
    }
}

/// Log-density of `d` at `x`.
pub fn t_logpdf(d: &StudentT, x: &DVector<f64>) -> Result<f64> {
    d.log_density()?.eval(x)
}

/// Mean and covariance `(μ, ν/(ν−2)·Σ)`.
pub fn t_moments(d: &StudentT) -> (DVector<f64>, DMatrix<f64>) {
    (d.mean.clone(), d.covariance())
}

/// Closed-form `D_KL(p ‖ q)` between Gaussians.
pub fn gaussian_kl(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    check_dim("gaussian kl", p.mean.len(), q.mean.len())?;
    let n = p.mean.len() as f64;
    let cq = spd_cholesky(&q.cov, "gaussian covariance")?;
    let cp = spd_cholesky(&p.cov, "gaussian covariance")?;
    let trace = cq.solve(&p.cov).trace();
    let maha = mahalanobis_sq(&cq, &(&q.mean - &p.mean));
    let kl = 0.5 * (trace + maha - n + log_det(&cq) - log_det(&cp));
    // Round-off can push an exact zero slightly negative.
    Ok(kl.max(0.0))
}

/// Monte Carlo estimate together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `D_KL(p ‖ q)` from `samples` draws of `p`.
pub fn t_kl_mc_estimate(p: &StudentT, q: &StudentT, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    check_dim("t kl", p.dim(), q.dim())?;
    let lp = p.log_density()?;
    let lq = q.log_density()?;
    let sampler = p.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let x = sampler.draw(&mut rng);
        let d = lp.eval(&x)? - lq.eval(&x)?;
        sum += d;
        sum_sq += d * d;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = if samples > 1 {
        ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        value: mean,
        std_error: (var / m).sqrt(),
    })
}

pub fn t_kl_mc(p: &StudentT, q: &StudentT, samples: usize, seed: u64) -> Result<f64> {
    Ok(t_kl_mc_estimate(p, q, samples, seed)?.value)
}

/// `count` independent draws from `d`; identical for identical seeds.
pub fn t_sample(d: &StudentT, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    let sampler = d.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sampler.draw(&mut rng)).collect())
}

/// Weighted mixture of t densities sharing a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTMix {
    components: Vec<StudentT>,
    weights: Vec<f64>,
}

impl WeightedTMix {
    pub fn new(components: Vec<StudentT>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        check_dim("mixture weights", components.len(), weights.len())?;
        let n = components[0].dim();
        for c in &components {
            check_dim("mixture component", n, c.dim())?;
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self { components, weights })
    }

    pub fn components(&self) -> &[StudentT] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }
}

/// Mean and covariance of a weighted mixture of arbitrary densities.
pub(crate) fn weighted_moments<D: Moments>(components: &[D], weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = components[0].dim();
    let mut mean = DVector::zeros(n);
    for (c, w) in components.iter().zip(weights) {
        mean.axpy(*w, c.mean(), 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (c, w) in components.iter().zip(weights) {
        let spread = c.mean() - &mean;
        cov += (c.covariance() + &spread * spread.transpose()) * *w;
    }
    (mean, symmetrize(&cov))
}

/// Mixture mean `Σ wᵢ x̂ᵢ` and covariance `Σ wᵢ (νᵢ/(νᵢ−2)·Pᵢ + x̃ᵢx̃ᵢᵀ)`.
pub fn mix_moments(m: &WeightedTMix) -> (DVector<f64>, DMatrix<f64>) {
    weighted_moments(&m.components, &m.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t1(mean: f64, scale: f64, dof: f64) -> StudentT {
        StudentT::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, scale), dof).unwrap()
    }

    #[test]
    fn logpdf_one_dimensional_hand_value() {
        // Γ(2)/(Γ(1.5)·√(3π)) = 0.3675525969...
        let v = t_logpdf(&t1(0.0, 1.0, 3.0), &DVector::from_element(1, 0.0)).unwrap();
        assert_abs_diff_eq!(v, 0.367_552_596_947_861_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn logpdf_at_mean_is_log_normalizer() {
        let d = StudentT::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            4.5,
        )
        .unwrap();
        let ld = d.log_density().unwrap();
        assert_eq!(ld.eval(d.mean()).unwrap(), ld.log_normalizer());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let m = DVector::zeros(2);
        assert!(StudentT::new(m.clone(), DMatrix::identity(2, 2), 2.0).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            StudentT::new(m.clone(), indefinite, 3.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(StudentT::new(m.clone(), asym, 3.0).is_err());
        let d = StudentT::new(m, DMatrix::identity(2, 2), 3.0).unwrap();
        assert!(matches!(
            t_logpdf(&d, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn moments_examples() {
        let (_, c) = t_moments(&t1(0.0, 1.0, 3.0));
        assert_abs_diff_eq!(c[(0, 0)], 3.0, epsilon = 1e-15);

        let big = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), 1e6).unwrap();
        let (_, c) = t_moments(&big);
        assert!((c - DMatrix::identity(2, 2)).amax() < 1e-5);

        let d = StudentT::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0])),
            4.0,
        )
        .unwrap();
        let (m, c) = t_moments(&d);
        assert_eq!(m, DVector::from_vec(vec![1.0, 2.0]));
        assert_abs_diff_eq!(c, DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 8.0])), epsilon = 1e-14);
    }

    #[test]
    fn gaussian_kl_examples() {
        let p = Gaussian::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let q = Gaussian::new(DVector::from_element(1, 1.0), DMatrix::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(gaussian_kl(&p, &q).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(gaussian_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn sampler_is_deterministic_per_seed() {
        let d = t1(0.5, 2.0, 5.0);
        assert_eq!(t_sample(&d, 10, 42).unwrap(), t_sample(&d, 10, 42).unwrap());
        assert_ne!(t_sample(&d, 10, 42).unwrap(), t_sample(&d, 10, 43).unwrap());
        assert!(t_sample(&d, 0, 1).is_err());
    }

    #[test]
    fn mixture_hand_case() {
        let m = WeightedTMix::new(vec![t1(-1.0, 1.0, 3.0), t1(1.0, 1.0, 3.0)], vec![0.5, 0.5]).unwrap();
        let (mean, cov) = mix_moments(&m);
        assert_abs_diff_eq!(mean[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cov[(0, 0)], 4.0, epsilon = 1e-10);
    }

    #[test]
    fn single_component_mixture_is_component_moments() {
        let d = t1(2.0, 1.5, 4.0);
        let m = WeightedTMix::new(vec![d.clone()], vec![1.0]).unwrap();
        let (mean, cov) = mix_moments(&m);
        assert_eq!(mean[0], 2.0);
        assert_abs_diff_eq!(cov[(0, 0)], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let c = vec![t1(0.0, 1.0, 3.0), t1(1.0, 1.0, 3.0)];
        assert!(WeightedTMix::new(c.clone(), vec![0.5, 0.6]).is_err());
        assert!(WeightedTMix::new(c.clone(), vec![1.0, 0.0]).is_err());
        assert!(WeightedTMix::new(c, vec![1.0]).is_err());
    }
}
