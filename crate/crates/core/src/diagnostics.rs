//! Accuracy checks for the Gaussian surrogates behind the AA weights.
//!
//! Two t densities are pulled apart along a direction. Their Monte Carlo KL
//! divergence is compared with two closed-form Gaussian surrogates. The first
//! uses the moment-matched Gaussians (scale inflated to covariance). The
//! second treats each scale matrix as a covariance. The middle-distribution
//! residual measures how far the optimized weights are from making the fused
//! density KL-equidistant from both inputs.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::densities::{gaussian_kl, t_kl_mc_estimate, Gaussian, Moments, StudentT};
use crate::error::Result;
use crate::fusion::{aa_fuse, AaVariant, DofRule, FusionKind, FusionMethod};
use crate::linalg::check_dim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlCurveRow {
    pub offset: f64,
    pub mc_kl: f64,
    pub mc_std_error: f64,
    /// KL between the moment-matched Gaussians.
    pub moment_gaussian_kl: f64,
    /// KL between Gaussians that take each scale matrix as covariance.
    pub scale_gaussian_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiddleRow {
    pub offset: f64,
    pub weight_first: f64,
    pub kl_first: f64,
    pub kl_second: f64,
    /// `|kl_first − kl_second| / max(kl_first, kl_second)`, zero when both vanish.
    pub residual: f64,
}

/// `q` with its mean moved by `offset · direction`.
pub fn shifted(q: &StudentT, direction: &DVector<f64>, offset: f64) -> Result<StudentT> {
    check_dim("shift direction", q.dim(), direction.len())?;
    StudentT::new(q.mean() + direction * offset, q.scale().clone(), q.dof())
}

fn scale_gaussian(d: &StudentT) -> Result<Gaussian> {
    Gaussian::new(d.mean().clone(), d.scale().clone())
}

/// KL(p ‖ q shifted) and its surrogates at each offset.
///
/// Every offset reuses `seed`, so the Monte Carlo noise is common across the curve.
pub fn kl_curve(
    p: &StudentT,
    q: &StudentT,
    direction: &DVector<f64>,
    offsets: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<KlCurveRow>> {
    offsets
        .iter()
        .map(|&offset| {
            let qs = shifted(q, direction, offset)?;
            let mc = t_kl_mc_estimate(p, &qs, samples, seed)?;
            Ok(KlCurveRow {
                offset,
                mc_kl: mc.value,
                mc_std_error: mc.std_error,
                moment_gaussian_kl: gaussian_kl(&p.moment_matched_gaussian(), &qs.moment_matched_gaussian())?,
                scale_gaussian_kl: gaussian_kl(&scale_gaussian(p)?, &scale_gaussian(&qs)?)?,
            })
        })
        .collect()
}

/// Middle-distribution residual of the optimized AA weights for one pair.
pub fn middle_residual(
    p: &StudentT,
    q: &StudentT,
    variant: AaVariant,
    dof_rule: DofRule,
    samples: usize,
    seed: u64,
) -> Result<MiddleRow> {
    let kind = match variant {
        AaVariant::V1 => FusionKind::AaSuboptV1,
        AaVariant::V2 => FusionKind::AaSuboptV2,
    };
    let fused = aa_fuse(&[p.clone(), q.clone()], FusionMethod::new(kind, dof_rule))?;
    let kl_first = t_kl_mc_estimate(p, &fused.density, samples, seed)?.value;
    let kl_second = t_kl_mc_estimate(q, &fused.density, samples, seed.wrapping_add(1))?.value;
    let max = kl_first.max(kl_second);
    let residual = if max > 0.0 { (kl_first - kl_second).abs() / max } else { 0.0 };
    Ok(MiddleRow {
        offset: 0.0,
        weight_first: fused.weights.as_slice()[0],
        kl_first,
        kl_second,
        residual,
    })
}

/// [`middle_residual`] for `p` against `q` shifted by each offset.
#[allow(clippy::too_many_arguments)]
pub fn middle_curve(
    p: &StudentT,
    q: &StudentT,
    direction: &DVector<f64>,
    offsets: &[f64],
    variant: AaVariant,
    dof_rule: DofRule,
    samples: usize,
    seed: u64,
) -> Result<Vec<MiddleRow>> {
    offsets
        .iter()
        .map(|&offset| {
            let qs = shifted(q, direction, offset)?;
            Ok(MiddleRow {
                offset,
                ..middle_residual(p, &qs, variant, dof_rule, samples, seed)?
            })
        })
        .collect()
}
