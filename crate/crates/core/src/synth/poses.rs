//! Joint-space posing helpers for the capsule skeleton. Every edit rotates a
//! subtree about a joint, so bone lengths are preserved exactly.

use crate::geom::RigidTransform;
use crate::lifting::{joint as J, Skeleton};
use crate::{Mat3, Vec3};

fn rot(axis: Vec3, angle: f64) -> Mat3 {
    *RigidTransform::from_axis_angle(&axis, angle).rotation()
}

/// Rotates `root` and its descendants about joint `pivot`.
pub fn rotate_subtree(joints: &mut [Vec3], skel: &Skeleton, root: usize, pivot: usize, r: &Mat3) {
    let c = joints[pivot];
    for j in skel.subtree(root) {
        joints[j] = c + r * (joints[j] - c);
    }
}

pub fn translate(joints: &mut [Vec3], by: &Vec3) {
    for j in joints.iter_mut() {
        *j += by;
    }
}

/// Forearms raised to horizontal, pointing forward (+x).
pub fn elbows_forward(joints: &mut [Vec3], skel: &Skeleton) {
    let r = rot(Vec3::y(), -std::f64::consts::FRAC_PI_2);
    rotate_subtree(joints, skel, J::L_WRIST, J::L_ELBOW, &r);
    rotate_subtree(joints, skel, J::R_WRIST, J::R_ELBOW, &r);
}

/// Hips and knees flexed 90°: thighs forward along +x, shins vertical.
pub fn seated(rest: &[Vec3], skel: &Skeleton) -> Vec<Vec3> {
    let mut j = rest.to_vec();
    let hip = rot(Vec3::y(), -std::f64::consts::FRAC_PI_2);
    let knee = rot(Vec3::y(), std::f64::consts::FRAC_PI_2);
    for (h, k, a) in [(J::L_HIP, J::L_KNEE, J::L_ANKLE), (J::R_HIP, J::R_KNEE, J::R_ANKLE)] {
        rotate_subtree(&mut j, skel, k, h, &hip);
        rotate_subtree(&mut j, skel, a, k, &knee);
    }
    elbows_forward(&mut j, skel);
    j
}

/// Legs abducted by `alpha` radians on each side.
pub fn straddle(rest: &[Vec3], skel: &Skeleton, alpha: f64) -> Vec<Vec3> {
    let mut j = rest.to_vec();
    rotate_subtree(&mut j, skel, J::L_KNEE, J::L_HIP, &rot(Vec3::x(), alpha));
    rotate_subtree(&mut j, skel, J::R_KNEE, J::R_HIP, &rot(Vec3::x(), -alpha));
    elbows_forward(&mut j, skel);
    j
}

/// Slight crouch used for decoy bodies: knees bent by `angle`.
pub fn crouched(rest: &[Vec3], skel: &Skeleton, angle: f64) -> Vec<Vec3> {
    let mut j = rest.to_vec();
    for (h, k) in [(J::L_HIP, J::L_KNEE), (J::R_HIP, J::R_KNEE)] {
        rotate_subtree(&mut j, skel, k, h, &rot(Vec3::y(), -angle));
    }
    for (k, a) in [(J::L_KNEE, J::L_ANKLE), (J::R_KNEE, J::R_ANKLE)] {
        rotate_subtree(&mut j, skel, a, k, &rot(Vec3::y(), 2.0 * angle));
    }
    j
}

/// Puts one arm's wrist at `wrist` with the hand bone pointing along
/// `hand_dir`. The elbow bends toward `pole`. Returns `false` when the
/// target is out of reach (the pose is left unchanged).
pub fn place_arm(joints: &mut [Vec3], right: bool, wrist: &Vec3, hand_dir: &Vec3, pole: &Vec3) -> bool {
    let (s, e, w, h) = if right {
        (J::R_SHOULDER, J::R_ELBOW, J::R_WRIST, J::R_HAND)
    } else {
        (J::L_SHOULDER, J::L_ELBOW, J::L_WRIST, J::L_HAND)
    };
    let l1 = (joints[e] - joints[s]).norm();
    let l2 = (joints[w] - joints[e]).norm();
    let l3 = (joints[h] - joints[w]).norm();
    let sh = joints[s];
    let d = wrist - sh;
    let dist = d.norm();
    if dist >= l1 + l2 || dist <= (l1 - l2).abs() {
        return false;
    }
    let axis = d / dist;
    // law of cosines: distance from shoulder to the elbow's foot on the axis
    let a = (l1 * l1 - l2 * l2 + dist * dist) / (2.0 * dist);
    let hgt = (l1 * l1 - a * a).max(0.0).sqrt();
    let side = pole - axis * pole.dot(&axis);
    let side = if side.norm() > 1e-9 { side.normalize() } else { crate::geom::mesh::orthonormal_pair(&axis).0 };
    joints[e] = sh + axis * a + side * hgt;
    joints[w] = *wrist;
    joints[h] = wrist + hand_dir.normalize() * l3;
    true
}
