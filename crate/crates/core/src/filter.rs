//! Single-sensor recursions: the Student's t Kalman filter (StKF) and the
//! Gaussian Kalman filter baseline.
//!
//! Both run on user-supplied linearized models. The StKF uses the simple
//! dof rule: prediction takes `ν′ = min(ν, ν_Q)`, the update takes
//! `ν′ = min(ν′, ν_R)` and returns `ν′ + m`. The posterior mean is the usual
//! Kalman-gain update; only the scale is rescaled, by
//! `α = (ν′ + Δzᵀ S⁻¹ Δz) / (ν′ + m)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::densities::{Gaussian, Moments, StudentT};
use crate::error::{Error, Result};
use crate::linalg::{check_dim, is_symmetric, mahalanobis_sq, spd_cholesky, spd_cholesky_jittered};

pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Posterior/prior belief of an StKF.
pub type TBelief = StudentT;
/// Posterior/prior belief of a KF.
pub type GBelief = Gaussian;

fn validate_noise(m: &DMatrix<f64>, dof: f64, what: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if !is_symmetric(m) {
        return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
    }
    spd_cholesky(m, what)?;
    if !(dof > 2.0) {
        return Err(Error::InvalidParameter(format!(
            "{what} dof must exceed 2, got {dof}"
        )));
    }
    Ok(())
}

/// State transition `x ↦ f(x)` with Jacobian `F` and t noise `S(0, Q, ν_Q)`.
#[derive(Clone)]
pub struct ProcessModel {
    f: VectorFn,
    jacobian_f: JacobianFn,
    q_scale: DMatrix<f64>,
    q_dof: f64,
}

impl ProcessModel {
    pub fn new(f: VectorFn, jacobian_f: JacobianFn, q_scale: DMatrix<f64>, q_dof: f64) -> Result<Self> {
        validate_noise(&q_scale, q_dof, "process noise scale")?;
        Ok(Self {
            f,
            jacobian_f,
            q_scale,
            q_dof,
        })
    }

    /// `f(x) = F·x`.
    pub fn linear(transition: DMatrix<f64>, q_scale: DMatrix<f64>, q_dof: f64) -> Result<Self> {
        check_dim("transition matrix", transition.nrows(), transition.ncols())?;
        check_dim("process noise scale", transition.nrows(), q_scale.nrows())?;
        let f_mat = transition.clone();
        let f: VectorFn = Arc::new(move |x| &f_mat * x);
        let jacobian_f: JacobianFn = Arc::new(move |_| transition.clone());
        Self::new(f, jacobian_f, q_scale, q_dof)
    }

    pub fn state_dim(&self) -> usize {
        self.q_scale.nrows()
    }

    pub fn q_scale(&self) -> &DMatrix<f64> {
        &self.q_scale
    }

    pub fn q_dof(&self) -> f64 {
        self.q_dof
    }

    pub fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jacobian_f)(x)
    }

    /// Same dynamics with a different noise description.
    pub fn with_noise(&self, q_scale: DMatrix<f64>, q_dof: f64) -> Result<Self> {
        check_dim("process noise scale", self.state_dim(), q_scale.nrows())?;
        Self::new(self.f.clone(), self.jacobian_f.clone(), q_scale, q_dof)
    }
}

impl fmt::Debug for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessModel")
            .field("q_scale", &self.q_scale)
            .field("q_dof", &self.q_dof)
            .finish_non_exhaustive()
    }
}

/// Measurement `x ↦ h(x)` (length `m`) with Jacobian `H` and t noise `S(0, R, ν_R)`.
#[derive(Clone)]
pub struct MeasurementModel {
    h: VectorFn,
    jacobian_h: JacobianFn,
    r_scale: DMatrix<f64>,
    r_dof: f64,
    state_dim: usize,
}

impl MeasurementModel {
    pub fn new(
        h: VectorFn,
        jacobian_h: JacobianFn,
        r_scale: DMatrix<f64>,
        r_dof: f64,
        state_dim: usize,
    ) -> Result<Self> {
        validate_noise(&r_scale, r_dof, "measurement noise scale")?;
        Ok(Self {
            h,
            jacobian_h,
            r_scale,
            r_dof,
            state_dim,
        })
    }

    /// `h(x) = H·x`.
    pub fn linear(observation: DMatrix<f64>, r_scale: DMatrix<f64>, r_dof: f64) -> Result<Self> {
        check_dim("measurement noise scale", observation.nrows(), r_scale.nrows())?;
        let state_dim = observation.ncols();
        let h_mat = observation.clone();
        let h: VectorFn = Arc::new(move |x| &h_mat * x);
        let jacobian_h: JacobianFn = Arc::new(move |_| observation.clone());
        Self::new(h, jacobian_h, r_scale, r_dof, state_dim)
    }

    /// Measurement dimension `m`.
    pub fn m(&self) -> usize {
        self.r_scale.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn r_scale(&self) -> &DMatrix<f64> {
        &self.r_scale
    }

    pub fn r_dof(&self) -> f64 {
        self.r_dof
    }

    pub fn predict_measurement(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.h)(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jacobian_h)(x)
    }

    pub(crate) fn parts(&self) -> (VectorFn, JacobianFn) {
        (self.h.clone(), self.jacobian_h.clone())
    }
}

impl fmt::Debug for MeasurementModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasurementModel")
            .field("r_scale", &self.r_scale)
            .field("r_dof", &self.r_dof)
            .field("state_dim", &self.state_dim)
            .finish_non_exhaustive()
    }
}

fn predict_moments(
    mean: &DVector<f64>,
    spread: &DMatrix<f64>,
    pm: &ProcessModel,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim("process model", pm.state_dim(), mean.len())?;
    let f = pm.jacobian(mean);
    check_dim("process jacobian", pm.state_dim(), f.nrows())?;
    let x = pm.propagate(mean);
    let p = &f * spread * f.transpose() + &pm.q_scale;
    let (_, p) = spd_cholesky_jittered(&p, "predicted scale")?;
    Ok((x, p))
}

/// Shared Kalman correction. Returns the corrected mean, the Joseph-free
/// `P − K S Kᵀ`, and the innovation's squared Mahalanobis norm `Δzᵀ S⁻¹ Δz`.
fn correct(
    mean: &DVector<f64>,
    spread: &DMatrix<f64>,
    mm: &MeasurementModel,
    z: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    check_dim("measurement model state", mm.state_dim(), mean.len())?;
    check_dim("measurement", mm.m(), z.len())?;
    let h = mm.jacobian(mean);
    check_dim("measurement jacobian", mm.m(), h.nrows())?;
    let innovation = z - mm.predict_measurement(mean);
    let ph_t = spread * h.transpose();
    let s = &h * &ph_t + &mm.r_scale;
    let s_chol = spd_cholesky(&s, "innovation covariance")?;
    // K = P Hᵀ S⁻¹, via Kᵀ = S⁻¹ H P.
    let gain = s_chol.solve(&ph_t.transpose()).transpose();
    let x = mean + &gain * &innovation;
    // K S Kᵀ = P Hᵀ S⁻¹ H P
    let p = spread - &gain * ph_t.transpose();
    let d2 = mahalanobis_sq(&s_chol, &innovation);
    Ok((x, p, d2))
}

/// StKF prediction: `S(f(x̂), F P Fᵀ + Q, min(ν, ν_Q))`.
pub fn stkf_predict(post: &TBelief, pm: &ProcessModel) -> Result<TBelief> {
    let (x, p) = predict_moments(post.mean(), post.scale(), pm)?;
    StudentT::new(x, p, post.dof().min(pm.q_dof))
}

/// StKF update with innovation-dependent scale rescaling and dof `ν′ + m`.
pub fn stkf_update(prior: &TBelief, mm: &MeasurementModel, z: &DVector<f64>) -> Result<TBelief> {
    let nu = prior.dof().min(mm.r_dof);
    let m = mm.m() as f64;
    let (x, p, d2) = correct(prior.mean(), prior.scale(), mm, z)?;
    let alpha = (nu + d2) / (nu + m);
    let (_, p) = spd_cholesky_jittered(&(p * alpha), "posterior scale")?;
    StudentT::new(x, p, nu + m)
}

/// Classical KF prediction.
pub fn kf_predict(post: &GBelief, pm: &ProcessModel) -> Result<GBelief> {
    let (x, p) = predict_moments(post.mean(), post.cov(), pm)?;
    Gaussian::new(x, p)
}

/// Classical KF update.
pub fn kf_update(prior: &GBelief, mm: &MeasurementModel, z: &DVector<f64>) -> Result<GBelief> {
    let (x, p, _) = correct(prior.mean(), prior.cov(), mm, z)?;
    let (_, p) = spd_cholesky_jittered(&p, "posterior covariance")?;
    Gaussian::new(x, p)
}

/// The `α` factor an StKF update would apply for measurement `z`.
pub fn stkf_alpha(prior: &TBelief, mm: &MeasurementModel, z: &DVector<f64>) -> Result<f64> {
    let nu = prior.dof().min(mm.r_dof);
    let (_, _, d2) = correct(prior.mean(), prior.scale(), mm, z)?;
    Ok((nu + d2) / (nu + mm.m() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_t(mean: f64, scale: f64, dof: f64) -> StudentT {
        StudentT::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, scale), dof).unwrap()
    }

    fn scalar_pm(q: f64, dof: f64) -> ProcessModel {
        ProcessModel::linear(DMatrix::identity(1, 1), DMatrix::from_element(1, 1, q), dof).unwrap()
    }

    fn scalar_mm(r: f64, dof: f64) -> MeasurementModel {
        MeasurementModel::linear(DMatrix::identity(1, 1), DMatrix::from_element(1, 1, r), dof).unwrap()
    }

    #[test]
    fn predict_scalar_additive() {
        let out = stkf_predict(&scalar_t(0.7, 1.0, 3.0), &scalar_pm(1.0, 3.0)).unwrap();
        assert_eq!(out.mean()[0], 0.7);
        assert_abs_diff_eq!(out.scale()[(0, 0)], 2.0, epsilon = 1e-15);
        assert_eq!(out.dof(), 3.0);
    }

    #[test]
    fn predict_with_tiny_process_noise_keeps_scale() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
        let prior = StudentT::new(DVector::zeros(2), p.clone(), 4.0).unwrap();
        let pm = ProcessModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 1e-12, 3.0).unwrap();
        let out = stkf_predict(&prior, &pm).unwrap();
        assert!((out.scale() - p).amax() < 1e-10);
        assert_eq!(out.dof(), 3.0);
    }

    #[test]
    fn update_large_innovation_inflates_scale() {
        let prior = scalar_t(0.0, 1.0, 3.0);
        let out = stkf_update(&prior, &scalar_mm(1.0, 3.0), &DVector::from_element(1, 10.0)).unwrap();
        // S = 2, K = 1/2, α = (3 + 100/2)/(3 + 1) = 13.25
        assert_abs_diff_eq!(out.mean()[0], 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(out.scale()[(0, 0)], 6.625, epsilon = 1e-12);
        assert_eq!(out.dof(), 4.0);
    }

    #[test]
    fn update_zero_innovation_shrinks_by_alpha() {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let p = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let r = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.7]);
        let prior = StudentT::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), p.clone(), 3.0).unwrap();
        let mm = MeasurementModel::linear(h.clone(), r.clone(), 3.0).unwrap();
        let z = &h * prior.mean();
        assert_abs_diff_eq!(stkf_alpha(&prior, &mm, &z).unwrap(), 0.6, epsilon = 1e-12);
        let out = stkf_update(&prior, &mm, &z).unwrap();
        assert_eq!(out.dof(), 5.0);

        let s = &h * &p * h.transpose() + &r;
        let k = &p * h.transpose() * s.clone().try_inverse().unwrap();
        let expected = (&p - &k * &s * k.transpose()) * 0.6;
        assert!((out.scale() - expected).amax() < 1e-12);
        assert!((out.mean() - prior.mean()).amax() < 1e-15);
    }

    #[test]
    fn kf_examples() {
        let prior = Gaussian::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let pred = kf_predict(&prior, &scalar_pm(1.0, 3.0)).unwrap();
        assert_abs_diff_eq!(pred.cov()[(0, 0)], 2.0, epsilon = 1e-15);

        let post = kf_update(&prior, &scalar_mm(1.0, 3.0), &DVector::from_element(1, 10.0)).unwrap();
        assert_abs_diff_eq!(post.cov()[(0, 0)], 0.5, epsilon = 1e-15);

        let same = kf_update(&prior, &scalar_mm(1.0, 3.0), &DVector::zeros(1)).unwrap();
        assert_eq!(same.mean()[0], 0.0);
    }

    #[test]
    fn update_rejects_wrong_measurement_length() {
        let prior = scalar_t(0.0, 1.0, 3.0);
        assert!(matches!(
            stkf_update(&prior, &scalar_mm(1.0, 3.0), &DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn noise_models_validated() {
        assert!(ProcessModel::linear(DMatrix::identity(1, 1), DMatrix::from_element(1, 1, -1.0), 3.0).is_err());
        assert!(MeasurementModel::linear(DMatrix::identity(1, 1), DMatrix::identity(1, 1), 2.0).is_err());
    }
}
