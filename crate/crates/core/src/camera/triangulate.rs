use nalgebra::{Matrix4x3, SymmetricEigen, Vector4};

use super::{CameraError, WeakPerspectiveCamera};
use crate::{Vec2, Vec3};

/// Forward axes closer than this to parallel (or antiparallel) are rejected.
const MIN_ANGLE_DEG: f64 = 1.0;
const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: Vec3,
    /// RMS of the two reprojection errors, pixels.
    pub residual: f64,
}

/// Least-squares point whose projections best match `u_a` and `u_b`.
pub fn triangulate_two_view(
    cam_a: &WeakPerspectiveCamera,
    u_a: &Vec2,
    cam_b: &WeakPerspectiveCamera,
    u_b: &Vec2,
) -> Result<Triangulation, CameraError> {
    let cos = cam_a.forward().dot(&cam_b.forward()).abs().min(1.0);
    let angle_deg = cos.acos().to_degrees();
    if angle_deg <= MIN_ANGLE_DEG {
        return Err(CameraError::NearParallel { angle_deg });
    }
    let mut a = Matrix4x3::zeros();
    let mut b = Vector4::zeros();
    for (k, (cam, u)) in [(cam_a, u_a), (cam_b, u_b)].into_iter().enumerate() {
        for r in 0..2 {
            a.set_row(2 * k + r, &(cam.rotation().row(r) * cam.scale()));
            b[2 * k + r] = u[r] - cam.offset()[r];
        }
    }
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond < MAX_CONDITION) {
        return Err(CameraError::IllConditioned(cond));
    }
    let point = ata
        .cholesky()
        .ok_or(CameraError::IllConditioned(cond))?
        .solve(&(a.transpose() * b));
    let ea = (cam_a.project(&point) - u_a).norm_squared();
    let eb = (cam_b.project(&point) - u_b).norm_squared();
    Ok(Triangulation { point, residual: ((ea + eb) / 2.0).sqrt() })
}
