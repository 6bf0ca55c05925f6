//! Maximization of a scalar objective over the probability simplex.
//!
//! Two weights reduce to a line search on `w₁ ∈ [lo, 1−lo]`: a coarse scan
//! brackets the best point and golden-section search refines it. More weights
//! use projected gradient ascent with a central-difference gradient.

use crate::error::{Error, Result};

const SCAN_POINTS: usize = 32;
const GOLDEN_TOL: f64 = 1e-10;
const PGA_ITERATIONS: usize = 2000;
const PGA_STEP_TOL: f64 = 1e-10;
/// Relative objective gain below which ascent stops.
const PGA_VALUE_TOL: f64 = 1e-13;
const FD_STEP: f64 = 1e-6;

/// Objective values closer than this (relative) across the scan count as flat.
const FLAT_TOL: f64 = 1e-12;

/// Maximizes `objective` over `{w : Σw = 1, w ≥ lo}`.
///
/// A flat objective (identical components) returns uniform weights.
pub fn maximize_on_simplex<F>(count: usize, lo: f64, objective: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    match count {
        0 => Err(Error::Empty("fusion components")),
        1 => Ok(vec![1.0]),
        2 => maximize_pair(lo, objective),
        _ => maximize_projected(count, lo, objective),
    }
}

fn is_flat(values: &[f64]) -> bool {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min <= FLAT_TOL * (1.0 + max.abs())
}

fn finite_or_fail(value: f64, best: &[f64]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Optimizer {
            message: "objective is not finite".into(),
            best: best.to_vec(),
        })
    }
}

fn maximize_pair<F>(lo: f64, objective: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let (a, b) = (lo, 1.0 - lo);
    let eval = |w: f64| -> Result<f64> {
        let v = objective(&[w, 1.0 - w])?;
        finite_or_fail(v, &[w, 1.0 - w])
    };

    let grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| a + (b - a) * i as f64 / SCAN_POINTS as f64)
        .collect();
    let values = grid.iter().map(|&w| eval(w)).collect::<Result<Vec<_>>>()?;
    if is_flat(&values) {
        return Ok(vec![0.5, 0.5]);
    }
    let best = values
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut lower = grid[best.saturating_sub(1)];
    let mut upper = grid[(best + 1).min(SCAN_POINTS)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = upper - ratio * (upper - lower);
    let mut d = lower + ratio * (upper - lower);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    while upper - lower > GOLDEN_TOL {
        if fc >= fd {
            upper = d;
            d = c;
            fd = fc;
            c = upper - ratio * (upper - lower);
            fc = eval(c)?;
        } else {
            lower = c;
            c = d;
            fc = fd;
            d = lower + ratio * (upper - lower);
            fd = eval(d)?;
        }
    }

    // The interior optimum competes with the scan's best point, which
    // includes both ends of the interval (boundary solutions).
    let mid = 0.5 * (lower + upper);
    let (w, _) = [(mid, eval(mid)?), (grid[best], values[best])]
        .into_iter()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap();
    Ok(vec![w, 1.0 - w])
}

/// Euclidean projection onto `{w : Σw = total, w ≥ 0}`.
pub(crate) fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - total) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn project_bounded(v: &[f64], lo: f64) -> Vec<f64> {
    let k = v.len() as f64;
    let shifted: Vec<f64> = v.iter().map(|x| x - lo).collect();
    project_simplex(&shifted, 1.0 - k * lo)
        .into_iter()
        .map(|x| x + lo)
        .collect()
}

fn maximize_projected<F>(count: usize, lo: f64, objective: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut w = vec![1.0 / count as f64; count];
    let mut value = finite_or_fail(objective(&w)?, &w)?;
    let mut step = 1.0;

    for _ in 0..PGA_ITERATIONS {
        let grad = gradient(&objective, &w, lo)?;
        if grad.iter().all(|g| g.abs() <= FLAT_TOL * (1.0 + value.abs())) {
            return Ok(w);
        }
        // Step halving until the projected step improves the objective.
        let mut accepted = None;
        while step > PGA_STEP_TOL {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(x, g)| x + step * g).collect();
            let trial = project_bounded(&trial, lo);
            let v = objective(&trial)?;
            if v.is_finite() && v > value {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        let Some((next, v)) = accepted else {
            return Ok(w);
        };
        let moved = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let gain = v - value;
        w = next;
        value = v;
        if moved < PGA_STEP_TOL || gain <= PGA_VALUE_TOL * (1.0 + value.abs()) {
            return Ok(w);
        }
        step *= 2.0;
    }
    Err(Error::Optimizer {
        message: format!("projected gradient ascent exhausted {PGA_ITERATIONS} iterations"),
        best: w,
    })
}

/// Central differences along each coordinate, clamped to stay in the domain.
fn gradient<F>(objective: &F, w: &[f64], lo: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let up = (w[i] + FD_STEP).min(1.0);
        let down = (w[i] - FD_STEP).max(lo.max(0.0) * 0.5);
        let mut wp = w.to_vec();
        let mut wm = w.to_vec();
        wp[i] = up;
        wm[i] = down;
        grad.push((objective(&wp)? - objective(&wm)?) / (up - down));
    }
    // Only movement within the simplex's tangent space matters.
    let mean = grad.iter().sum::<f64>() / grad.len() as f64;
    Ok(grad.into_iter().map(|g| g - mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_finds_interior_maximum() {
        let w = maximize_on_simplex(2, 0.0, |w| Ok(-(w[0] - 0.3).powi(2))).unwrap();
        assert!((w[0] - 0.3).abs() < 1e-8);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pair_finds_boundary_maximum() {
        let w = maximize_on_simplex(2, 0.0, |w| Ok(w[1])).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);
    }

    #[test]
    fn flat_objective_returns_uniform() {
        assert_eq!(maximize_on_simplex(2, 1e-6, |_| Ok(3.0)).unwrap(), vec![0.5, 0.5]);
        let w = maximize_on_simplex(4, 1e-6, |_| Ok(3.0)).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn projected_ascent_on_three_weights() {
        let target = [0.2, 0.5, 0.3];
        let w = maximize_on_simplex(3, 0.0, |w| {
            Ok(-w.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        })
        .unwrap();
        for (a, b) in w.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5, "{w:?}");
        }
    }

    #[test]
    fn non_finite_objective_reports_best_iterate() {
        let err = maximize_on_simplex(2, 0.0, |_| Ok(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Optimizer { .. }));
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5], 1.0);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = project_simplex(&[2.0, 0.0], 1.0);
        assert_eq!(p, vec![1.0, 0.0]);
    }
}
