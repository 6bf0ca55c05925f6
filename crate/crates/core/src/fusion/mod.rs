//! Multi-sensor posterior fusion.
//!
//! * Arithmetic-average (AA) fusion mixes the local posteriors and collapses
//!   the mixture to a single t density with the same first two moments. The
//!   weights maximize a Gaussian surrogate of `Σ wᵢ D_KL(fᵢ ‖ f_AA)`, or are
//!   uniform.
//! * Covariance intersection (CI) combines moment-matched Gaussians in
//!   information form with weights minimizing the trace of the fused
//!   covariance.
//! * Augmented measurement (AM) stacks every sensor into one joint model.

mod optimize;

pub use optimize::maximize_on_simplex;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::densities::{weighted_moments, Gaussian, Moments, StudentT, WeightedTMix, WEIGHT_SUM_TOL};
use crate::error::{Error, Result};
use crate::filter::{JacobianFn, MeasurementModel, VectorFn};
use crate::linalg::{block_diagonal, check_dim, log_det, spd_cholesky, symmetrize};

/// Lower bound on AA weights during optimization (the AA simplex is open).
pub const AA_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    /// AA with weights from the moment-matched Gaussian surrogate.
    AaSuboptV1,
    /// AA with weights from the scale-as-covariance surrogate.
    AaSuboptV2,
    AaUniform,
    Ci,
    Am,
}

impl FusionKind {
    pub fn is_aa(self) -> bool {
        matches!(self, Self::AaSuboptV1 | Self::AaSuboptV2 | Self::AaUniform)
    }
}

/// Degrees of freedom given to a fused t density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofRule {
    /// Keep the heaviest tail.
    Min,
    #[default]
    Average,
}

impl DofRule {
    pub fn apply(self, dofs: impl IntoIterator<Item = f64>) -> f64 {
        let dofs: Vec<f64> = dofs.into_iter().collect();
        match self {
            Self::Min => dofs.iter().cloned().fold(f64::INFINITY, f64::min),
            Self::Average => dofs.iter().sum::<f64>() / dofs.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FusionMethod {
    pub kind: FusionKind,
    pub dof_rule: DofRule,
}

impl FusionMethod {
    pub fn new(kind: FusionKind, dof_rule: DofRule) -> Self {
        Self { kind, dof_rule }
    }
}

/// Which Gaussian surrogate drives the AA weight objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AaVariant {
    /// Moment-matched Gaussians `N(x̂ᵢ, νᵢ/(νᵢ−2)·Pᵢ)`.
    #[default]
    V1,
    /// Scale matrices treated as covariances.
    V2,
}

/// Fusion weights on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Weights for AA fusion: strictly positive, summing to one.
    pub fn aa(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidParameter(format!("AA weights must be positive: {w:?}")));
        }
        Self::checked_sum(w)
    }

    /// Weights for CI fusion: in `[0, 1]`, summing to one.
    pub fn ci(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidParameter(format!("CI weights must lie in [0, 1]: {w:?}")));
        }
        Self::checked_sum(w)
    }

    fn checked_sum(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Empty("weights"));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(count: usize) -> Self {
        Self(vec![1.0 / count as f64; count])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A fused density and the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused<D> {
    pub density: D,
    pub weights: WeightVector,
}

fn renormalize(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn check_components<D: Moments>(components: &[D]) -> Result<usize> {
    let first = components.first().ok_or(Error::Empty("fusion components"))?;
    let n = first.dim();
    for c in components {
        check_dim("fusion component", n, c.dim())?;
    }
    Ok(n)
}

/// Moment-matched t approximation of a t mixture.
///
/// `ν_AA` follows `dof_rule`; the scale is `(ν_AA−2)/ν_AA` times the
/// mixture covariance, so the result shares the mixture's mean and covariance.
pub fn aa_moment_match(m: &WeightedTMix, dof_rule: DofRule) -> Result<StudentT> {
    let nu = dof_rule.apply(m.components().iter().map(StudentT::dof));
    let (mean, cov) = weighted_moments(m.components(), m.weights());
    StudentT::from_covariance(mean, &cov, nu)
}

/// Per-component terms of the AA weight objective.
struct AaObjective {
    means: Vec<DVector<f64>>,
    /// Component covariances `cᵢPᵢ` with `cᵢ = νᵢ/(νᵢ−2)`, or 1 for Gaussians.
    covs: Vec<DMatrix<f64>>,
    /// `log det` of the matrix each component's log-det term divides by.
    log_dets: Vec<f64>,
    variant: AaVariant,
    /// `ν_AA/(ν_AA−2)` for the scale-as-covariance surrogate.
    fused_factor: f64,
}

impl AaObjective {
    fn new(
        means: Vec<DVector<f64>>,
        scales: Vec<DMatrix<f64>>,
        factors: Vec<f64>,
        variant: AaVariant,
        fused_factor: f64,
    ) -> Result<Self> {
        let log_dets = scales
            .iter()
            .zip(&factors)
            .map(|(p, c)| {
                let m = match variant {
                    AaVariant::V1 => p * *c,
                    AaVariant::V2 => p.clone(),
                };
                spd_cholesky(&m, "component scale").map(|ch| log_det(&ch))
            })
            .collect::<Result<Vec<_>>>()?;
        let covs = scales.iter().zip(&factors).map(|(p, c)| p * *c).collect();
        Ok(Self {
            means,
            covs,
            log_dets,
            variant,
            fused_factor,
        })
    }

    fn from_t(components: &[StudentT], variant: AaVariant, dof_rule: DofRule) -> Result<Self> {
        let nu_aa = dof_rule.apply(components.iter().map(StudentT::dof));
        Self::new(
            components.iter().map(|c| c.mean().clone()).collect(),
            components.iter().map(|c| c.scale().clone()).collect(),
            components.iter().map(StudentT::covariance_factor).collect(),
            variant,
            nu_aa / (nu_aa - 2.0),
        )
    }

    fn from_gaussian(components: &[Gaussian]) -> Result<Self> {
        Self::new(
            components.iter().map(|c| c.mean().clone()).collect(),
            components.iter().map(|c| c.cov().clone()).collect(),
            vec![1.0; components.len()],
            AaVariant::V1,
            1.0,
        )
    }

    /// Mixture mean and covariance for the candidate weights.
    fn mixture(&self, w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.means[0].len();
        let mut mean = DVector::zeros(n);
        for (x, wi) in self.means.iter().zip(w) {
            mean.axpy(*wi, x, 1.0);
        }
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..w.len() {
            let d = &self.means[i] - &mean;
            cov.zip_apply(&self.covs[i], |a, b| *a += w[i] * b);
            cov.ger(w[i], &d, &d, 1.0);
        }
        (mean, symmetrize(&cov))
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        let (mean, cov) = self.mixture(w);
        let chol = spd_cholesky(&cov, "fused covariance")?;
        let fused_log_det = log_det(&chol);
        let inv = chol.inverse();
        let n = mean.len() as f64;
        let mut total = 0.0;
        for i in 0..w.len() {
            // tr(P_f⁻¹ cᵢPᵢ) as a Frobenius product of symmetric matrices.
            let trace = inv.dot(&self.covs[i]);
            let d = &self.means[i] - &mean;
            let maha = (&inv * &d).dot(&d);
            let term = match self.variant {
                AaVariant::V1 => trace + fused_log_det - self.log_dets[i] + maha,
                AaVariant::V2 => {
                    trace + fused_log_det + n * self.fused_factor.ln() - self.log_dets[i]
                        + maha / self.fused_factor
                }
            };
            total += w[i] * term;
        }
        Ok(total)
    }
}

/// Value of the AA weight objective at `w` for t components.
pub fn aa_objective(components: &[StudentT], w: &[f64], variant: AaVariant, dof_rule: DofRule) -> Result<f64> {
    check_components(components)?;
    check_dim("aa weights", components.len(), w.len())?;
    AaObjective::from_t(components, variant, dof_rule)?.value(w)
}

/// Value of the AA weight objective at `w` for Gaussian components.
pub fn aa_objective_gaussian(components: &[Gaussian], w: &[f64]) -> Result<f64> {
    check_components(components)?;
    check_dim("aa weights", components.len(), w.len())?;
    AaObjective::from_gaussian(components)?.value(w)
}

fn optimize_aa(objective: &AaObjective, count: usize) -> Result<WeightVector> {
    let w = maximize_on_simplex(count, AA_WEIGHT_FLOOR, |w| objective.value(w))?;
    WeightVector::aa(renormalize(w))
}

/// Suboptimal AA weights for t components.
pub fn aa_weights(components: &[StudentT], variant: AaVariant, dof_rule: DofRule) -> Result<WeightVector> {
    check_components(components)?;
    if components.len() == 1 {
        return Ok(WeightVector(vec![1.0]));
    }
    optimize_aa(&AaObjective::from_t(components, variant, dof_rule)?, components.len())
}

/// Suboptimal AA weights for Gaussian components (both variants coincide).
pub fn aa_weights_gaussian(components: &[Gaussian]) -> Result<WeightVector> {
    check_components(components)?;
    if components.len() == 1 {
        return Ok(WeightVector(vec![1.0]));
    }
    optimize_aa(&AaObjective::from_gaussian(components)?, components.len())
}

/// AA fusion of t beliefs: weights per `method.kind`, then moment matching.
pub fn aa_fuse(components: &[StudentT], method: FusionMethod) -> Result<Fused<StudentT>> {
    check_components(components)?;
    let weights = match method.kind {
        FusionKind::AaUniform => WeightVector::uniform(components.len()),
        FusionKind::AaSuboptV1 => aa_weights(components, AaVariant::V1, method.dof_rule)?,
        FusionKind::AaSuboptV2 => aa_weights(components, AaVariant::V2, method.dof_rule)?,
        FusionKind::Ci | FusionKind::Am => {
            return Err(Error::InvalidParameter(format!(
                "{:?} is not an arithmetic-average fusion method",
                method.kind
            )))
        }
    };
    let mix = WeightedTMix::new(components.to_vec(), weights.as_slice().to_vec())?;
    Ok(Fused {
        density: aa_moment_match(&mix, method.dof_rule)?,
        weights,
    })
}

/// Single Gaussian with the mixture's mean and covariance.
pub fn gaussian_aa_merge(components: &[Gaussian], weights: &WeightVector) -> Result<Gaussian> {
    check_components(components)?;
    check_dim("merge weights", components.len(), weights.len())?;
    let (mean, cov) = weighted_moments(components, weights.as_slice());
    Gaussian::new(mean, cov)
}

/// AA fusion of Gaussian beliefs.
pub fn gaussian_aa_fuse(components: &[Gaussian], kind: FusionKind) -> Result<Fused<Gaussian>> {
    let weights = match kind {
        FusionKind::AaUniform => WeightVector::uniform(components.len()),
        FusionKind::AaSuboptV1 | FusionKind::AaSuboptV2 => aa_weights_gaussian(components)?,
        FusionKind::Ci | FusionKind::Am => {
            return Err(Error::InvalidParameter(format!(
                "{kind:?} is not an arithmetic-average fusion method"
            )))
        }
    };
    Ok(Fused {
        density: gaussian_aa_merge(components, &weights)?,
        weights,
    })
}

/// Information-form terms `Cᵢ⁻¹` and `Cᵢ⁻¹ x̂ᵢ` of each component's
/// moment-matched Gaussian. For t inputs `Cᵢ⁻¹ = ((νᵢ−2)/νᵢ)·Pᵢ⁻¹`.
fn information_terms<D: Moments>(components: &[D]) -> Result<Vec<(DMatrix<f64>, DVector<f64>)>> {
    components
        .iter()
        .map(|c| {
            let chol = spd_cholesky(&c.covariance(), "component covariance")?;
            let precision = symmetrize(&chol.inverse());
            let info = &precision * c.mean();
            Ok((precision, info))
        })
        .collect()
}

fn ci_combine(terms: &[(DMatrix<f64>, DVector<f64>)], w: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = terms[0].1.len();
    let mut precision = DMatrix::zeros(n, n);
    let mut info = DVector::zeros(n);
    for ((lambda, eta), wi) in terms.iter().zip(w) {
        if *wi == 0.0 {
            continue;
        }
        precision += lambda * *wi;
        info.axpy(*wi, eta, 1.0);
    }
    let chol = spd_cholesky(&precision, "combined CI precision")?;
    let mean = chol.solve(&info);
    Ok((mean, symmetrize(&chol.inverse())))
}

/// CI weights minimizing `tr(P_CI)` over the closed simplex.
pub fn ci_weights<D: Moments>(components: &[D]) -> Result<WeightVector> {
    check_components(components)?;
    if components.len() == 1 {
        return Ok(WeightVector(vec![1.0]));
    }
    let terms = information_terms(components)?;
    let w = maximize_on_simplex(components.len(), 0.0, |w| {
        let n = terms[0].1.len();
        let mut precision = DMatrix::zeros(n, n);
        for ((lambda, _), wi) in terms.iter().zip(w) {
            precision += lambda * *wi;
        }
        // A singular combination sits on the boundary; treat it as worst.
        Ok(match spd_cholesky(&precision, "combined CI precision") {
            Ok(chol) => -chol.inverse().trace(),
            Err(_) => f64::MIN,
        })
    })?;
    WeightVector::ci(renormalize(w))
}

/// CI fusion returning the fused Gaussian `(x̂_CI, P_CI)`.
pub fn ci_fuse<D: Moments>(components: &[D], w: &WeightVector) -> Result<Gaussian> {
    check_components(components)?;
    check_dim("CI weights", components.len(), w.len())?;
    let (mean, cov) = ci_combine(&information_terms(components)?, w.as_slice())?;
    Gaussian::new(mean, cov)
}

/// CI fusion re-wrapped as a t density whose covariance equals `P_CI`.
pub fn ci_fuse_t(components: &[StudentT], w: &WeightVector, dof_rule: DofRule) -> Result<StudentT> {
    let g = ci_fuse(components, w)?;
    let nu = dof_rule.apply(components.iter().map(StudentT::dof));
    StudentT::from_covariance(g.mean().clone(), g.cov(), nu)
}

/// Stacks measurement models into one joint model with block-diagonal noise.
/// The joint dof is the minimum of the components' dofs.
pub fn am_stack(models: &[MeasurementModel]) -> Result<MeasurementModel> {
    let first = models.first().ok_or(Error::Empty("measurement models"))?;
    if models.len() == 1 {
        return Ok(first.clone());
    }
    let n = first.state_dim();
    for m in models {
        check_dim("stacked measurement model", n, m.state_dim())?;
    }
    let parts: Vec<(VectorFn, JacobianFn)> = models.iter().map(MeasurementModel::parts).collect();
    let parts = Arc::new(parts);
    let hs = parts.clone();
    let h: VectorFn = Arc::new(move |x| {
        let pieces: Vec<DVector<f64>> = hs.iter().map(|(h, _)| h(x)).collect();
        let total = pieces.iter().map(|p| p.len()).sum();
        DVector::from_iterator(total, pieces.iter().flat_map(|p| p.iter().cloned()))
    });
    let jacobian_h: JacobianFn = Arc::new(move |x| {
        let blocks: Vec<DMatrix<f64>> = parts.iter().map(|(_, j)| j(x)).collect();
        let rows = blocks.iter().map(|b| b.nrows()).sum();
        let mut out = DMatrix::zeros(rows, n);
        let mut r = 0;
        for b in &blocks {
            out.view_mut((r, 0), (b.nrows(), n)).copy_from(b);
            r += b.nrows();
        }
        out
    });
    let r = block_diagonal(&models.iter().map(|m| m.r_scale().clone()).collect::<Vec<_>>());
    let dof = models.iter().map(MeasurementModel::r_dof).fold(f64::INFINITY, f64::min);
    MeasurementModel::new(h, jacobian_h, r, dof, n)
}

/// Probability that at least one of several independent channels is an outlier.
pub fn am_outlier_prob(probs: &[f64]) -> f64 {
    1.0 - probs.iter().map(|p| 1.0 - p).product::<f64>()
}
