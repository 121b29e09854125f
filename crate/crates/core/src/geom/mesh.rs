use std::f64::consts::PI;

use thiserror::Error;

use super::transform::RigidTransform;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}: i/o error: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: i64, count: usize },
    #[error("mesh has no {0}")]
    Empty(&'static str),
    #[error("normal count {normals} does not match vertex count {vertices}")]
    NormalCount { normals: usize, vertices: usize },
    #[error("unsupported mesh format: {0}")]
    Unsupported(String),
    #[error("degenerate mesh: total surface area is {0}")]
    ZeroArea(f64),
}

impl MeshError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        MeshError::Parse { location: location.into(), message: message.into() }
    }
}

/// Indexed triangle mesh with unit per-vertex normals.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    normals: Vec<Vec3>,
}

impl TriMesh {
    /// Validates indices; computes area-weighted vertex normals when `normals`
    /// is `None`. Supplied normals are renormalised.
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        normals: Option<Vec<Vec3>>,
    ) -> Result<Self, MeshError> {
        if vertices.is_empty() {
            return Err(MeshError::Empty("vertices"));
        }
        if faces.is_empty() {
            return Err(MeshError::Empty("faces"));
        }
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: idx as i64,
                        count: vertices.len(),
                    });
                }
            }
        }
        let normals = match normals {
            Some(n) if n.len() != vertices.len() => {
                return Err(MeshError::NormalCount { normals: n.len(), vertices: vertices.len() })
            }
            Some(n) => n.into_iter().map(|v| unit_or_z(&v)).collect(),
            None => area_weighted_normals(&vertices, &faces),
        };
        Ok(Self { vertices, faces, normals })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        bounds_of(&self.vertices)
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| t.apply_point(v)).collect(),
            faces: self.faces.clone(),
            normals: self.normals.iter().map(|n| t.apply_vector(n)).collect(),
        }
    }

    pub fn translated(&self, offset: &Vec3) -> TriMesh {
        self.transformed(&RigidTransform::from_translation(*offset))
    }

    /// Concatenates meshes into one (indices rebased).
    pub fn concat(parts: &[TriMesh]) -> Result<TriMesh, MeshError> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut normals = Vec::new();
        for m in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&m.vertices);
            normals.extend_from_slice(&m.normals);
            faces.extend(m.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        TriMesh::new(vertices, faces, Some(normals))
    }

    /// Inside test by ray parity. Requires a watertight mesh.
    pub fn contains(&self, p: &Vec3) -> bool {
        // skewed direction avoids grazing axis-aligned edges of box-like meshes
        let dir = Vec3::new(0.5773, 0.5774, 0.5772).normalize();
        let mut hits = 0usize;
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            if ray_hits_triangle(p, &dir, &a, &b, &c) {
                hits += 1;
            }
        }
        hits % 2 == 1
    }

    /// Nearest surface point to `p`: `(point, face, distance)`.
    pub fn closest_point(&self, p: &Vec3) -> (Vec3, usize, f64) {
        let mut best = (Vec3::zeros(), 0, f64::INFINITY);
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let q = closest_on_triangle(p, &a, &b, &c);
            let d = (q - p).norm();
            if d < best.2 {
                best = (q, f, d);
            }
        }
        best
    }

    /// Unit normal of face `f` from its winding.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        unit_or_z(&(b - a).cross(&(c - a)))
    }

    /// Closed cylinder along z from `z0` to `z1`, with separate rim vertices
    /// for the caps and the side so normals stay sharp at the rims.
    pub fn cylinder(radius: f64, z0: f64, z1: f64, segments: usize) -> TriMesh {
        let segments = segments.max(3);
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        let mut faces = Vec::new();
        let ring = |k: usize| {
            let phi = 2.0 * PI * k as f64 / segments as f64;
            Vec3::new(phi.cos(), phi.sin(), 0.0)
        };
        // side
        for k in 0..segments {
            let r = ring(k);
            vertices.push(r * radius + Vec3::z() * z0);
            vertices.push(r * radius + Vec3::z() * z1);
            normals.push(r);
            normals.push(r);
        }
        for k in 0..segments {
            let k1 = (k + 1) % segments;
            let (a, b, c, d) = ((2 * k) as u32, (2 * k + 1) as u32, (2 * k1) as u32, (2 * k1 + 1) as u32);
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
        // caps
        for (z, up) in [(z0, false), (z1, true)] {
            let centre = vertices.len() as u32;
            vertices.push(Vec3::new(0.0, 0.0, z));
            let n = if up { Vec3::z() } else { -Vec3::z() };
            normals.push(n);
            for k in 0..segments {
                vertices.push(ring(k) * radius + Vec3::z() * z);
                normals.push(n);
            }
            for k in 0..segments {
                let a = centre + 1 + k as u32;
                let b = centre + 1 + ((k + 1) % segments) as u32;
                faces.push(if up { [centre, a, b] } else { [centre, b, a] });
            }
        }
        TriMesh::new(vertices, faces, Some(normals)).expect("cylinder is well-formed")
    }

    /// Copy with unshared vertices per face, so vertex normals equal face
    /// normals (flat shading).
    pub fn faceted(&self) -> TriMesh {
        let mut vertices = Vec::with_capacity(self.faces.len() * 3);
        let mut faces = Vec::with_capacity(self.faces.len());
        for f in 0..self.faces.len() {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&self.triangle(f));
            faces.push([base, base + 1, base + 2]);
        }
        TriMesh::new(vertices, faces, None).expect("faceted copy of a valid mesh")
    }

    /// Axis-aligned box with outward winding (8 vertices, 12 faces).
    pub fn cuboid(min: Vec3, max: Vec3) -> TriMesh {
        let v = |x: usize, y: usize, z: usize| {
            Vec3::new(
                if x == 0 { min.x } else { max.x },
                if y == 0 { min.y } else { max.y },
                if z == 0 { min.z } else { max.z },
            )
        };
        let vertices = vec![
            v(0, 0, 0),
            v(1, 0, 0),
            v(1, 1, 0),
            v(0, 1, 0),
            v(0, 0, 1),
            v(1, 0, 1),
            v(1, 1, 1),
            v(0, 1, 1),
        ];
        let faces = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        TriMesh::new(vertices, faces, None).expect("cuboid is well-formed")
    }

    /// Subdivided icosahedron projected to a sphere of `radius` at the origin.
    pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint = std::collections::HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let normals = verts.clone();
        let vertices = verts.into_iter().map(|v| v * radius).collect();
        TriMesh::new(vertices, faces, Some(normals)).expect("icosphere is well-formed")
    }

    /// Closed capsule around segment `a`–`b`, tessellated with `segments`
    /// around the axis and `rings` per hemisphere.
    pub fn capsule(a: &Vec3, b: &Vec3, radius: f64, segments: usize, rings: usize) -> TriMesh {
        let segments = segments.max(3);
        let rings = rings.max(1);
        let axis = b - a;
        let len = axis.norm();
        let w = if len > 1e-12 { axis / len } else { Vec3::z() };
        let (u, v) = orthonormal_pair(&w);
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        // latitude rows from the `a` pole (-w) to the `b` pole (+w)
        let mut rows: Vec<(f64, Vec3)> = Vec::new();
        for r in 0..=rings {
            let theta = -PI / 2.0 + (r as f64) * (PI / 2.0) / rings as f64;
            rows.push((theta, *a));
        }
        for r in 0..=rings {
            let theta = (r as f64) * (PI / 2.0) / rings as f64;
            rows.push((theta, *b));
        }
        for (theta, centre) in &rows {
            for s in 0..segments {
                let phi = 2.0 * PI * s as f64 / segments as f64;
                let n = (u * phi.cos() + v * phi.sin()) * theta.cos() + w * theta.sin();
                vertices.push(centre + n * radius);
                normals.push(n.normalize());
            }
        }
        let mut faces = Vec::new();
        for r in 0..rows.len() - 1 {
            for s in 0..segments {
                let s1 = (s + 1) % segments;
                let i00 = (r * segments + s) as u32;
                let i01 = (r * segments + s1) as u32;
                let i10 = ((r + 1) * segments + s) as u32;
                let i11 = ((r + 1) * segments + s1) as u32;
                faces.push([i00, i01, i11]);
                faces.push([i00, i11, i10]);
            }
        }
        TriMesh::new(vertices, faces, Some(normals)).expect("capsule is well-formed")
    }
}

fn unit_or_z(v: &Vec3) -> Vec3 {
    let n = v.norm();
    if n > 1e-300 && n.is_finite() {
        v / n
    } else {
        Vec3::z()
    }
}

fn area_weighted_normals(vertices: &[Vec3], faces: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        // |cross| is twice the area, so this is area weighting
        let n = (b - a).cross(&(c - a));
        for &i in f {
            acc[i as usize] += n;
        }
    }
    // unreferenced or cancelling vertices fall back to +z
    acc.iter().map(unit_or_z).collect()
}

pub(crate) fn bounds_of(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

pub(crate) fn orthonormal_pair(w: &Vec3) -> (Vec3, Vec3) {
    let helper = if w.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = w.cross(&helper).normalize();
    let v = w.cross(&u);
    (u, v)
}

/// Closest point on triangle `abc` (Voronoi-region walk).
fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Möller–Trumbore, counting only hits with t > 0.
fn ray_hits_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return false;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&qvec) * inv > 0.0
}
