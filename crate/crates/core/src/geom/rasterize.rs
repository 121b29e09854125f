//! Pixel-center silhouette coverage under a weak-perspective camera.

use super::mesh::TriMesh;
use super::raster::Mask;
use crate::camera::WeakPerspectiveCamera;

/// Nearest fragment depth per pixel (`f · x`), `+inf` where uncovered.
pub fn depth_buffer(
    mesh: &TriMesh,
    camera: &WeakPerspectiveCamera,
    width: usize,
    height: usize,
) -> Vec<f64> {
    let mut depth = vec![f64::INFINITY; width * height];
    splat(mesh, camera, width, height, &mut depth);
    depth
}

fn splat(mesh: &TriMesh, camera: &WeakPerspectiveCamera, width: usize, height: usize, depth: &mut [f64]) {
    let uv: Vec<_> = mesh.vertices().iter().map(|v| camera.project(v)).collect();
    let z: Vec<f64> = mesh.vertices().iter().map(|v| camera.depth(v)).collect();
    for f in mesh.faces() {
        let [a, b, c] = f.map(|i| i as usize);
        let (pa, pb, pc) = (uv[a], uv[b], uv[c]);
        let area = (pb - pa).perp(&(pc - pa));
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = pa.x.min(pb.x).min(pc.x);
        let max_x = pa.x.max(pb.x).max(pc.x);
        let min_y = pa.y.min(pb.y).min(pc.y);
        let max_y = pa.y.max(pb.y).max(pc.y);
        // pixel (x, y) has its center at (x + 0.5, y + 0.5)
        let x0 = (min_x - 0.5).ceil().max(0.0);
        let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
        let y0 = (min_y - 0.5).ceil().max(0.0);
        let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let inv = 1.0 / area;
        for py in y0 as usize..=y1 as usize {
            for px in x0 as usize..=x1 as usize {
                let p = crate::Vec2::new(px as f64 + 0.5, py as f64 + 0.5);
                let w0 = (pc - pb).perp(&(p - pb)) * inv;
                let w1 = (pa - pc).perp(&(p - pc)) * inv;
                let w2 = (pb - pa).perp(&(p - pa)) * inv;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let d = w0 * z[a] + w1 * z[b] + w2 * z[c];
                let cell = &mut depth[py * width + px];
                if d < *cell {
                    *cell = d;
                }
            }
        }
    }
}

/// Pixels covered by `mesh`, minus those where any occluder fragment is
/// strictly nearer than the mesh's nearest fragment.
pub fn rasterize_silhouette(
    mesh: &TriMesh,
    camera: &WeakPerspectiveCamera,
    resolution: (usize, usize),
    occluders: &[TriMesh],
) -> Mask {
    let (w, h) = resolution;
    let mut mask = Mask::new(w.max(1), h.max(1)).expect("positive size");
    let own = depth_buffer(mesh, camera, w, h);
    let mut occ = vec![f64::INFINITY; w * h];
    for o in occluders {
        splat(o, camera, w, h, &mut occ);
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            mask.set(x, y, own[i].is_finite() && !(occ[i] < own[i]));
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Mat3, Vec2, Vec3};

    fn front_camera(scale: f64, offset: Vec2) -> WeakPerspectiveCamera {
        WeakPerspectiveCamera::new(Mat3::identity(), scale, offset).unwrap()
    }

    fn square(half: f64, z: f64) -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(-half, -half, z),
                Vec3::new(half, -half, z),
                Vec3::new(half, half, z),
                Vec3::new(-half, half, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn square_covers_half_the_frame() {
        // 1 m square at 100 px/m -> 100x100 px in a 100x200 frame
        let cam = front_camera(100.0, Vec2::new(50.0, 100.0));
        let m = rasterize_silhouette(&square(0.5, 0.0), &cam, (100, 200), &[]);
        let expected = 0.5 * 100.0 * 200.0;
        assert!((m.count() as f64 - expected).abs() <= 0.02 * expected);
    }

    #[test]
    fn occluder_in_front_clears_everything() {
        let cam = front_camera(100.0, Vec2::new(50.0, 50.0));
        let m = rasterize_silhouette(&square(0.2, 1.0), &cam, (100, 100), &[square(2.0, 0.0)]);
        assert!(m.is_empty());
        // behind the mesh the occluder changes nothing
        let free = rasterize_silhouette(&square(0.2, 1.0), &cam, (100, 100), &[]);
        let behind = rasterize_silhouette(&square(0.2, 1.0), &cam, (100, 100), &[square(2.0, 3.0)]);
        assert_eq!(free, behind);
        assert!(!free.is_empty());
    }

    #[test]
    fn out_of_frame_is_empty() {
        let cam = front_camera(100.0, Vec2::new(-500.0, -500.0));
        assert!(rasterize_silhouette(&square(0.5, 0.0), &cam, (64, 64), &[]).is_empty());
    }
}
