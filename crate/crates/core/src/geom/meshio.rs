//! OBJ (`v`/`f` only) and PLY (ascii, binary little-endian) readers plus
//! ascii PLY writers for meshes and oriented point sets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::mesh::{MeshError, TriMesh};
use super::transform::SurfacePointSet;
use crate::Vec3;

/// Loads an OBJ or PLY file, dispatching on the leading `ply` magic.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh, MeshError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.starts_with(b"ply") {
        let ply = parse_ply(&bytes)?;
        ply.into_mesh()
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| MeshError::parse(format!("byte {}", e.valid_up_to()), "invalid utf-8"))?;
        parse_obj(text)
    }
}

pub fn parse_obj(text: &str) -> Result<TriMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        let loc = || format!("line {}", lineno + 1);
        match tok.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let t = tok.next().ok_or_else(|| MeshError::parse(loc(), "vertex needs 3 coordinates"))?;
                    *c = t
                        .parse()
                        .map_err(|_| MeshError::parse(loc(), format!("bad coordinate '{t}'")))?;
                }
                vertices.push(Vec3::from(xyz));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| MeshError::parse(loc(), format!("bad face index '{t}'")))?;
                    let resolved = match i {
                        0 => return Err(MeshError::parse(loc(), "face index 0 is invalid in OBJ")),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(MeshError::IndexOutOfRange {
                            face: faces.len(),
                            index: i,
                            count: vertices.len(),
                        });
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(MeshError::parse(loc(), "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Column store of a parsed PLY: scalar properties per element, plus list
/// properties.
#[derive(Debug, Default, Clone)]
pub struct PlyColumns {
    pub scalars: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    pub lists: BTreeMap<String, BTreeMap<String, Vec<Vec<f64>>>>,
    pub counts: BTreeMap<String, usize>,
}

impl PlyColumns {
    fn scalar(&self, element: &str, name: &str) -> Option<&Vec<f64>> {
        self.scalars.get(element)?.get(name)
    }

    fn positions(&self) -> Result<Vec<Vec3>, MeshError> {
        let (x, y, z) = match (
            self.scalar("vertex", "x"),
            self.scalar("vertex", "y"),
            self.scalar("vertex", "z"),
        ) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(MeshError::parse("header", "vertex element needs x, y, z")),
        };
        Ok((0..x.len()).map(|i| Vec3::new(x[i], y[i], z[i])).collect())
    }

    fn vertex_normals(&self) -> Option<Vec<Vec3>> {
        let nx = self.scalar("vertex", "nx")?;
        let ny = self.scalar("vertex", "ny")?;
        let nz = self.scalar("vertex", "nz")?;
        Some((0..nx.len()).map(|i| Vec3::new(nx[i], ny[i], nz[i])).collect())
    }

    pub fn into_mesh(self) -> Result<TriMesh, MeshError> {
        let vertices = self.positions()?;
        let normals = self.vertex_normals();
        let lists = self
            .lists
            .get("face")
            .and_then(|f| f.get("vertex_indices").or_else(|| f.get("vertex_index")))
            .ok_or(MeshError::Empty("faces"))?;
        let mut faces = Vec::new();
        for (fi, poly) in lists.iter().enumerate() {
            if poly.len() < 3 {
                return Err(MeshError::parse(format!("face {fi}"), "face needs at least 3 vertices"));
            }
            for &i in poly {
                if i < 0.0 || i as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: i as i64,
                        count: vertices.len(),
                    });
                }
            }
            for k in 1..poly.len() - 1 {
                faces.push([poly[0] as u32, poly[k] as u32, poly[k + 1] as u32]);
            }
        }
        TriMesh::new(vertices, faces, normals)
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<PlyColumns, MeshError> {
    // header is ascii, terminated by "end_header\n"
    let mut pos = 0usize;
    let mut lineno = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| MeshError::parse(format!("byte {pos}"), "unterminated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| MeshError::parse(format!("line {}", lineno + 1), "non-ascii header"))?
            .trim();
        pos += end + 1;
        lineno += 1;
        let loc = || format!("line {lineno}");
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.first().copied() {
            Some("ply") if lineno == 1 => {}
            _ if lineno == 1 => return Err(MeshError::parse(loc(), "missing 'ply' magic")),
            Some("format") => {
                format = Some(match tok.get(1).copied() {
                    Some("ascii") => false,
                    Some("binary_little_endian") => true,
                    Some(other) => return Err(MeshError::Unsupported(format!("ply format {other}"))),
                    None => return Err(MeshError::parse(loc(), "format needs a value")),
                })
            }
            Some("element") => {
                if tok.len() != 3 {
                    return Err(MeshError::parse(loc(), "element needs name and count"));
                }
                let count = tok[2]
                    .parse()
                    .map_err(|_| MeshError::parse(loc(), "bad element count"))?;
                elements.push(Element { name: tok[1].to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| MeshError::parse(loc(), "property before element"))?;
                let bad = || MeshError::parse(loc(), format!("bad property '{line}'"));
                if tok.get(1) == Some(&"list") {
                    if tok.len() != 5 {
                        return Err(bad());
                    }
                    el.props.push(Property::List {
                        name: tok[4].to_string(),
                        count: Scalar::parse(tok[2]).ok_or_else(bad)?,
                        item: Scalar::parse(tok[3]).ok_or_else(bad)?,
                    });
                } else {
                    if tok.len() != 3 {
                        return Err(bad());
                    }
                    el.props.push(Property::Scalar {
                        name: tok[2].to_string(),
                        ty: Scalar::parse(tok[1]).ok_or_else(bad)?,
                    });
                }
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(MeshError::parse(loc(), format!("unknown header keyword '{other}'"))),
        }
    }
    let binary = format.ok_or_else(|| MeshError::parse("header", "missing format line"))?;
    let mut out = PlyColumns::default();
    for el in &elements {
        out.counts.insert(el.name.clone(), el.count);
        let scalars = out.scalars.entry(el.name.clone()).or_default();
        let lists = out.lists.entry(el.name.clone()).or_default();
        for p in &el.props {
            match p {
                Property::Scalar { name, .. } => {
                    scalars.insert(name.clone(), Vec::with_capacity(el.count));
                }
                Property::List { name, .. } => {
                    lists.insert(name.clone(), Vec::with_capacity(el.count));
                }
            }
        }
    }
    if binary {
        read_binary_body(bytes, pos, &elements, &mut out)?;
    } else {
        read_ascii_body(bytes, pos, lineno, &elements, &mut out)?;
    }
    Ok(out)
}

fn read_binary_body(
    bytes: &[u8],
    mut pos: usize,
    elements: &[Element],
    out: &mut PlyColumns,
) -> Result<(), MeshError> {
    let take = |pos: &mut usize, ty: Scalar| -> Result<f64, MeshError> {
        let n = ty.size();
        if *pos + n > bytes.len() {
            return Err(MeshError::parse(format!("byte {}", *pos), "unexpected end of binary data"));
        }
        let v = ty.read_le(&bytes[*pos..*pos + n]);
        *pos += n;
        Ok(v)
    };
    for el in elements {
        for _ in 0..el.count {
            for p in &el.props {
                match p {
                    Property::Scalar { name, ty } => {
                        let v = take(&mut pos, *ty)?;
                        out.scalars.get_mut(&el.name).unwrap().get_mut(name).unwrap().push(v);
                    }
                    Property::List { name, count, item } => {
                        let at = pos;
                        let n = take(&mut pos, *count)?;
                        if n < 0.0 {
                            return Err(MeshError::parse(format!("byte {at}"), "negative list length"));
                        }
                        let mut items = Vec::with_capacity(n as usize);
                        for _ in 0..n as usize {
                            items.push(take(&mut pos, *item)?);
                        }
                        out.lists.get_mut(&el.name).unwrap().get_mut(name).unwrap().push(items);
                    }
                }
            }
        }
    }
    Ok(())
}

fn read_ascii_body(
    bytes: &[u8],
    pos: usize,
    header_lines: usize,
    elements: &[Element],
    out: &mut PlyColumns,
) -> Result<(), MeshError> {
    let text = std::str::from_utf8(&bytes[pos..])
        .map_err(|e| MeshError::parse(format!("byte {}", pos + e.valid_up_to()), "invalid utf-8"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + header_lines + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    for el in elements {
        for _ in 0..el.count {
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| MeshError::parse("end of file", format!("missing {} record", el.name)))?;
            let loc = || format!("line {lineno}");
            let mut tok = line.split_whitespace();
            let mut next = || -> Result<f64, MeshError> {
                let t = tok.next().ok_or_else(|| MeshError::parse(loc(), "too few values"))?;
                t.parse().map_err(|_| MeshError::parse(loc(), format!("bad number '{t}'")))
            };
            for p in &el.props {
                match p {
                    Property::Scalar { name, .. } => {
                        let v = next()?;
                        out.scalars.get_mut(&el.name).unwrap().get_mut(name).unwrap().push(v);
                    }
                    Property::List { name, .. } => {
                        let n = next()?;
                        if n < 0.0 {
                            return Err(MeshError::parse(loc(), "negative list length"));
                        }
                        let items = (0..n as usize).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
                        out.lists.get_mut(&el.name).unwrap().get_mut(name).unwrap().push(items);
                    }
                }
            }
        }
    }
    Ok(())
}

fn write_file(path: &Path, body: &str) -> Result<(), MeshError> {
    fs::write(path, body).map_err(|source| MeshError::Io { path: path.display().to_string(), source })
}

/// Ascii PLY with positions, normals and triangle faces.
pub fn write_ply_mesh(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<(), MeshError> {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property double nx\nproperty double ny\nproperty double nz\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    );
    for (v, n) in mesh.vertices().iter().zip(mesh.normals()) {
        let _ = writeln!(s, "{} {} {} {} {} {}", v.x, v.y, v.z, n.x, n.y, n.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    write_file(path.as_ref(), &s)
}

/// Ascii PLY point cloud with normals, optional 8-bit colors and an optional
/// per-vertex scalar named `value`.
pub fn write_ply_points(
    path: impl AsRef<Path>,
    points: &SurfacePointSet,
    colors: Option<&[[u8; 3]]>,
    values: Option<&[f64]>,
) -> Result<(), MeshError> {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\ncomment source {}\nelement vertex {}\nproperty double x\nproperty double y\n\
         property double z\nproperty double nx\nproperty double ny\nproperty double nz\n",
        points.source(),
        points.len()
    );
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if values.is_some() {
        s.push_str("property double value\n");
    }
    s.push_str("end_header\n");
    for i in 0..points.len() {
        let (p, n) = points.point(i);
        let _ = write!(s, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z);
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        if let Some(v) = values {
            let _ = write!(s, " {}", v[i]);
        }
        s.push('\n');
    }
    write_file(path.as_ref(), &s)
}

/// Reads a vertex-only PLY with `x y z nx ny nz` into an oriented point set.
pub fn read_ply_points(path: impl AsRef<Path>) -> Result<SurfacePointSet, MeshError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    let ply = parse_ply(&bytes)?;
    let points = ply.positions()?;
    let normals = ply
        .vertex_normals()
        .ok_or_else(|| MeshError::parse("header", "point set needs nx, ny, nz"))?;
    SurfacePointSet::new(points, normals, path.display().to_string())
        .map_err(|e| MeshError::parse("vertex data", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_triangle() {
        let m = parse_obj("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nusemtl x\nf 1/1 2/1 3/1\n").unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.faces().len(), 1);
        for n in m.normals() {
            assert!((n - Vec3::z()).norm() < 1e-15);
        }
    }

    #[test]
    fn obj_out_of_range() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 9, count: 3, .. }));
    }

    #[test]
    fn obj_negative_indices_and_quads() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_parse_error_has_line() {
        let err = parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err();
        match err {
            MeshError::Parse { location, .. } => assert_eq!(location, "line 2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn cube_ascii() -> String {
        let m = TriMesh::cuboid(Vec3::zeros(), Vec3::repeat(1.0));
        let mut s = format!(
            "ply\nformat ascii 1.0\nelement vertex 8\nproperty float x\nproperty float y\nproperty float z\n\
             element face 12\nproperty list uchar int vertex_indices\nend_header\n"
        );
        for v in m.vertices() {
            s += &format!("{} {} {}\n", v.x, v.y, v.z);
        }
        for f in m.faces() {
            s += &format!("3 {} {} {}\n", f[0], f[1], f[2]);
        }
        s
    }

    #[test]
    fn ply_ascii_cube() {
        let m = parse_ply(cube_ascii().as_bytes()).unwrap().into_mesh().unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.faces().len(), 12);
    }

    #[test]
    fn ply_binary_cube_matches_ascii() {
        let m = TriMesh::cuboid(Vec3::zeros(), Vec3::repeat(1.0));
        let mut b = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 8\nproperty float x\n\
                      property float y\nproperty float z\nelement face 12\n\
                      property list uchar int vertex_indices\nend_header\n"
            .to_vec();
        for v in m.vertices() {
            for c in v.iter() {
                b.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        for f in m.faces() {
            b.push(3);
            for &i in f {
                b.extend_from_slice(&(i as i32).to_le_bytes());
            }
        }
        let bin = parse_ply(&b).unwrap().into_mesh().unwrap();
        let asc = parse_ply(cube_ascii().as_bytes()).unwrap().into_mesh().unwrap();
        assert_eq!(bin, asc);
        // truncated body reports a byte offset
        let err = parse_ply(&b[..b.len() - 3]).unwrap_err();
        assert!(matches!(err, MeshError::Parse { ref location, .. } if location.starts_with("byte")));
    }

    #[test]
    fn ply_round_trip_through_writer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.ply");
        let m = TriMesh::cuboid(Vec3::zeros(), Vec3::repeat(1.0));
        write_ply_mesh(&path, &m).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.faces(), m.faces());
    }
}
