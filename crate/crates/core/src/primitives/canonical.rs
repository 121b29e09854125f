//! Shortest-arc rotation taking an object normal to +z, applied to the
//! partner normal and the relative position. Removes the global frame while
//! keeping lengths and angles.

use thiserror::Error;

use crate::{Mat3, Vec3};

/// `n_o · ẑ` below `−1 + ANTIPARALLEL_EPS` uses the fixed half-turn about x.
pub const ANTIPARALLEL_EPS: f64 = 1e-8;
const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
#[error("reference normal has norm {0}, expected 1")]
pub struct NonUnitNormal(pub f64);

/// Rotation `R` with `R n_o = ẑ`:
/// `R v = c v + (v·a) b − (v·b) a + (v·k) k / (1 + c)` for `a = n_o`, `b = ẑ`,
/// `c = a·b`, `k = a × b`. Near `n_o = −ẑ` it is the half-turn about x.
pub fn canonical_rotation(n_o: &Vec3) -> Result<Mat3, NonUnitNormal> {
    let norm = n_o.norm();
    if !((norm - 1.0).abs() <= UNIT_TOL) {
        return Err(NonUnitNormal(norm));
    }
    let a = n_o / norm;
    let c = a.z;
    if c < -1.0 + ANTIPARALLEL_EPS {
        return Ok(Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0));
    }
    let k = a.cross(&Vec3::z());
    let s2 = k.norm_squared();
    // 1/(1+c) equals (1−c)/|k|²; each form is the stable one on its half
    let beta = if c >= 0.0 { 1.0 / (1.0 + c) } else { (1.0 - c) / s2 };
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Ok(Mat3::identity() * c + kx + k * k.transpose() * beta)
}

/// `(R n_h, R p_rel)` with `R = canonical_rotation(n_o)`.
pub fn canonicalize(n_o: &Vec3, n_h: &Vec3, p_rel: &Vec3) -> Result<(Vec3, Vec3), NonUnitNormal> {
    let r = canonical_rotation(n_o)?;
    Ok((r * n_h, r * p_rel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_already_up() {
        let (n, p) = canonicalize(&Vec3::z(), &Vec3::new(0.6, 0.0, 0.8), &Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(n, Vec3::new(0.6, 0.0, 0.8));
        assert_eq!(p, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn source_axis_maps_to_up() {
        let (n, p) = canonicalize(&Vec3::x(), &Vec3::x(), &Vec3::x()).unwrap();
        assert!((n - Vec3::z()).norm() < 1e-15);
        assert!((p - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn rotation_axis_is_fixed() {
        let (n, _) = canonicalize(&Vec3::x(), &Vec3::y(), &Vec3::zeros()).unwrap();
        assert!((n - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn antiparallel_half_turn() {
        let (n, p) = canonicalize(&-Vec3::z(), &Vec3::y(), &Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(n, -Vec3::y());
        assert_eq!(p, Vec3::new(1.0, -2.0, -3.0));
        let r = canonical_rotation(&-Vec3::z()).unwrap();
        assert_eq!(r * -Vec3::z(), Vec3::z());
    }

    #[test]
    fn non_unit_rejected() {
        assert!(canonicalize(&Vec3::new(0.0, 0.0, 2.0), &Vec3::z(), &Vec3::zeros()).is_err());
    }

    #[test]
    fn near_antiparallel_stays_orthonormal() {
        // just outside the half-turn band
        let a = Vec3::new(1e-3, 0.0, -1.0).normalize();
        let r = canonical_rotation(&a).unwrap();
        assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-12);
        let e = (r * a - Vec3::z()).norm();
        assert!(e < 1e-12, "{e}");
    }
}
