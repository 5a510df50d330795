use nalgebra::{Matrix3, Vector3};

use super::Vec2;
use crate::error::AnalysisError;

/// Least-squares circle through a set of planar points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: Vec2,
    pub radius: f64,
    /// RMS radial error [same units as the points].
    pub residual: f64,
}

const MAX_CONDITION: f64 = 1e10;

/// Geometric circle fit: algebraic (Kasa) start, then Gauss-Newton on
/// `sum (|p_i - c| - r)^2`.
pub fn fit_circle(points: &[Vec2]) -> Result<CircleFit, AnalysisError> {
    let n = points.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints { needed: 3, got: n });
    }
    let mean = points.iter().fold(Vec2::zeros(), |a, p| a + p) / n as f64;
    let scale = (points.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / n as f64).sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(AnalysisError::DegenerateFit {
            condition: f64::INFINITY,
        });
    }
    let u: Vec<Vec2> = points.iter().map(|p| (p - mean) / scale).collect();

    // rows [x, y, 1] . [D, E, F] = -(x^2 + y^2)
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in &u {
        let row = Vector3::new(p.x, p.y, 1.0);
        ata += row * row.transpose();
        atb -= row * p.norm_squared();
    }
    let sv = ata.singular_values();
    let condition = (sv.max() / sv.min()).sqrt();
    if !(condition <= MAX_CONDITION) {
        return Err(AnalysisError::DegenerateFit { condition });
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .ok_or(AnalysisError::DegenerateFit { condition })?;
    let mut c = Vec2::new(-sol.x / 2.0, -sol.y / 2.0);
    let mut r = (c.norm_squared() - sol.z).max(0.0).sqrt();

    for _ in 0..100 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for p in &u {
            let d = p - c;
            let dist = d.norm();
            if dist == 0.0 {
                continue;
            }
            let jac = Vector3::new(-d.x / dist, -d.y / dist, -1.0);
            let res = dist - r;
            jtj += jac * jac.transpose();
            jtr += jac * res;
        }
        let Some(step) = jtj.lu().solve(&(-jtr)) else {
            break;
        };
        c += Vec2::new(step.x, step.y);
        r += step.z;
        if step.norm() <= 1e-14 * (1.0 + r) {
            break;
        }
    }
    let r = r.abs();
    let residual = (u.iter().map(|p| ((p - c).norm() - r).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok(CircleFit {
        center: mean + c * scale,
        radius: r * scale,
        residual: residual * scale,
    })
}
