//! Blue-noise surface sampling by weighted sample elimination over a
//! stratified oversample.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::{MeshError, TriMesh};
use super::transform::SurfacePointSet;
use crate::Vec3;

const OVERSAMPLE: usize = 5;
const ALPHA: f64 = 8.0;
const BETA: f64 = 0.65;
const GAMMA: f64 = 1.5;

/// Sampled points together with where they came from on the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSurface {
    pub points: SurfacePointSet,
    pub faces: Vec<usize>,
    pub barycentric: Vec<[f64; 3]>,
}

/// `count` blue-noise points on the surface of `mesh`, deterministic in `seed`.
pub fn poisson_disk_sample(mesh: &TriMesh, count: usize, seed: u64) -> Result<SurfacePointSet, MeshError> {
    Ok(sample_surface(mesh, count, seed)?.points)
}

/// Like [`poisson_disk_sample`] but keeps face ids and barycentric weights.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<SampledSurface, MeshError> {
    let area = mesh.area();
    if !(area > 0.0) {
        return Err(MeshError::ZeroArea(area));
    }
    if count == 0 {
        return Err(MeshError::Empty("samples requested"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = count * OVERSAMPLE;
    let mut cdf = Vec::with_capacity(mesh.faces().len());
    let mut acc = 0.0;
    for f in 0..mesh.faces().len() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    let mut faces = Vec::with_capacity(m);
    let mut bary = Vec::with_capacity(m);
    let mut cand = Vec::with_capacity(m);
    for k in 0..m {
        // one draw per equal-area stratum of the cumulative area
        let u = (k as f64 + rng.random::<f64>()) / m as f64 * acc;
        let f = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let w = [1.0 - s, s * (1.0 - r2), s * r2];
        let [a, b, c] = mesh.triangle(f);
        cand.push(a * w[0] + b * w[1] + c * w[2]);
        faces.push(f);
        bary.push(w);
    }
    let keep = eliminate_samples(&cand, count, area);
    let normals = mesh.normals();
    let mut points = Vec::with_capacity(count);
    let mut out_normals = Vec::with_capacity(count);
    for &i in &keep {
        let [a, b, c] = mesh.faces()[faces[i]].map(|v| v as usize);
        let w = bary[i];
        let n = normals[a] * w[0] + normals[b] * w[1] + normals[c] * w[2];
        let n = if n.norm() > 1e-12 {
            n.normalize()
        } else {
            let [p, q, r] = mesh.triangle(faces[i]);
            (q - p).cross(&(r - p)).normalize()
        };
        points.push(cand[i]);
        out_normals.push(n);
    }
    let points = SurfacePointSet::new(points, out_normals, "poisson")
        .map_err(|e| MeshError::parse("sampling", e.to_string()))?;
    Ok(SampledSurface {
        points,
        faces: keep.iter().map(|&i| faces[i]).collect(),
        barycentric: keep.iter().map(|&i| bary[i]).collect(),
    })
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // heavier first, then lower index
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Removes candidates with the densest neighbourhoods until `target` remain,
/// treating the points as samples of a surface of total `area`. Returns the
/// kept indices in ascending order.
pub fn eliminate_samples(candidates: &[Vec3], target: usize, area: f64) -> Vec<usize> {
    let m = candidates.len();
    if target >= m {
        return (0..m).collect();
    }
    let r_max = (area / (2.0 * 3f64.sqrt() * target as f64)).sqrt();
    let d_max = 2.0 * r_max;
    let r_min = r_max * (1.0 - (target as f64 / m as f64).powf(GAMMA)) * BETA;
    let weight = |d: f64| (1.0 - d.max(2.0 * r_min) / d_max).powf(ALPHA);

    let cell = |p: &Vec3| {
        let q = p / d_max;
        (q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in candidates.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (i, p) in candidates.iter().enumerate() {
        let (cx, cy, cz) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in list {
                            if j == i {
                                continue;
                            }
                            let d = (candidates[j] - p).norm();
                            if d < d_max {
                                neighbours[i].push((j, weight(d)));
                            }
                        }
                    }
                }
            }
        }
        neighbours[i].sort_by_key(|&(j, _)| j);
    }
    let mut w: Vec<f64> = neighbours.iter().map(|n| n.iter().map(|&(_, x)| x).sum()).collect();
    let mut alive = vec![true; m];
    let mut heap: BinaryHeap<Entry> = (0..m).map(|i| Entry(w[i], i)).collect();
    let mut remaining = m;
    while remaining > target {
        let Entry(wi, i) = heap.pop().expect("heap holds every live sample");
        if !alive[i] || wi != w[i] {
            continue;
        }
        alive[i] = false;
        remaining -= 1;
        for &(j, x) in &neighbours[i] {
            if alive[j] {
                w[j] -= x;
                heap.push(Entry(w[j], j));
            }
        }
    }
    (0..m).filter(|&i| alive[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_pairwise(p: &[Vec3]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                best = best.min((p[i] - p[j]).norm());
            }
        }
        best
    }

    #[test]
    fn cube_thousand_points() {
        let cube = TriMesh::cuboid(Vec3::zeros(), Vec3::repeat(1.0)).faceted();
        let s = poisson_disk_sample(&cube, 1000, 1).unwrap();
        assert_eq!(s.len(), 1000);
        let r_ideal = (6.0 / (1000.0 * std::f64::consts::PI)).sqrt();
        assert!(min_pairwise(s.points()) >= 0.7 * r_ideal);
    }

    #[test]
    fn sphere_spacing() {
        let sphere = TriMesh::icosphere(1.0, 4);
        let s = poisson_disk_sample(&sphere, 500, 11).unwrap();
        assert_eq!(s.len(), 500);
        let r_ideal = (4.0 * std::f64::consts::PI / (500.0 * std::f64::consts::PI)).sqrt();
        assert!(min_pairwise(s.points()) >= 0.7 * r_ideal);
    }

    #[test]
    fn single_sample_lies_on_a_face() {
        let tri = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]], None).unwrap();
        let s = sample_surface(&tri, 1, 0).unwrap();
        assert_eq!(s.points.len(), 1);
        let p = s.points.points()[0];
        assert!(p.z.abs() < 1e-15 && p.x >= 0.0 && p.y >= 0.0 && p.x + p.y <= 1.0 + 1e-12);
    }

    #[test]
    fn deterministic_and_on_surface() {
        let sphere = TriMesh::icosphere(0.7, 2);
        let a = sample_surface(&sphere, 200, 5).unwrap();
        let b = sample_surface(&sphere, 200, 5).unwrap();
        assert_eq!(a, b);
        for ((p, &f), w) in a.points.points().iter().zip(&a.faces).zip(&a.barycentric) {
            let [x, y, z] = sphere.triangle(f);
            assert!((x * w[0] + y * w[1] + z * w[2] - p).norm() < 1e-9);
            assert!(w.iter().all(|&c| c >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_area_rejected() {
        let flat = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]], None).unwrap();
        assert!(matches!(poisson_disk_sample(&flat, 3, 0), Err(MeshError::ZeroArea(_))));
    }
}
