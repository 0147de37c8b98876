//! Mesh and label file I/O: OBJ, PLY (ASCII and binary), binary/ASCII STL,
//! and per-vertex label JSON.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::fdi::FdiMap;
use super::{Jaw, LabeledMesh};
use crate::error::{Error, Result};

/// Loads a mesh (format chosen by extension) and, optionally, a label file
/// aligned with its vertices. Labels are FDI codes mapped with the default table.
pub fn load_mesh(path: &Path, labels_path: Option<&Path>) -> Result<LabeledMesh> {
    load_mesh_with(path, labels_path, &FdiMap::default())
}

pub fn load_mesh_with(
    path: &Path,
    labels_path: Option<&Path>,
    fdi: &FdiMap,
) -> Result<LabeledMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let (vertices, faces) = match ext.as_str() {
        "obj" => parse_obj(&bytes)?,
        "ply" => parse_ply(&bytes)?,
        "stl" => parse_stl(&bytes)?,
        other => {
            return Err(Error::Format(format!(
                "unsupported mesh extension {other:?} for {}",
                path.display()
            )))
        }
    };
    let faces = drop_degenerate(faces);
    let mesh = LabeledMesh::new(vertices, faces, None)?;
    match labels_path {
        Some(lp) => {
            let file = load_labels(lp, fdi)?;
            if file.labels.len() != mesh.vertex_count() {
                return Err(Error::Alignment(format!(
                    "{} has {} labels but {} has {} vertices",
                    lp.display(),
                    file.labels.len(),
                    path.display(),
                    mesh.vertex_count()
                )));
            }
            mesh.with_labels(file.labels)
        }
        None => Ok(mesh),
    }
}

fn drop_degenerate(faces: Vec<[u32; 3]>) -> Vec<[u32; 3]> {
    let before = faces.len();
    let kept: Vec<_> = faces
        .into_iter()
        .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
        .collect();
    if kept.len() != before {
        log::warn!("dropped {} degenerate faces", before - kept.len());
    }
    kept
}

/// Writes `.ply` (binary little-endian, double coordinates) or `.obj`.
pub fn save_mesh(path: &Path, mesh: &LabeledMesh) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "ply" => encode_ply(mesh),
        "obj" => encode_obj(mesh),
        other => {
            return Err(Error::Format(format!(
                "cannot write mesh with extension {other:?}"
            )))
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct RawLabelFile {
    labels: Vec<u32>,
    #[serde(default)]
    jaw: Option<Jaw>,
}

/// Per-vertex labels read from a label JSON file, mapped to class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelFile {
    pub labels: Vec<u8>,
    pub jaw: Option<Jaw>,
}

/// Reads `{"labels": [fdi, ...], "jaw": "upper"|"lower"}`; other keys are ignored.
pub fn load_labels(path: &Path, fdi: &FdiMap) -> Result<LabelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawLabelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let labels = raw
        .labels
        .iter()
        .map(|&code| fdi.class_of(code))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelFile {
        labels,
        jaw: raw.jaw,
    })
}

#[derive(Serialize)]
struct LabelFileOut<'a> {
    jaw: Jaw,
    labels: &'a [u32],
}

/// Writes class indices back as FDI codes of the given arch.
pub fn save_labels(path: &Path, labels: &[u8], jaw: Jaw, fdi: &FdiMap) -> Result<()> {
    let codes = labels
        .iter()
        .map(|&c| fdi.fdi_of(c, jaw))
        .collect::<Result<Vec<_>>>()?;
    let json = serde_json::to_string(&LabelFileOut {
        jaw,
        labels: &codes,
    })
    .expect("label file serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

type Geometry = (Vec<Point3<f64>>, Vec<[u32; 3]>);

fn fan(poly: &[u32], faces: &mut Vec<[u32; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
}

fn parse_obj(bytes: &[u8]) -> Result<Geometry> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("OBJ: {e}")))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::Format(format!("OBJ line {}: {what}", lineno + 1));
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    *slot = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad("bad vertex coordinate"))?;
                }
                vertices.push(Point3::from(c));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| bad("bad face index"))?;
                    let n = vertices.len() as i64;
                    let resolved = if i > 0 { i - 1 } else { n + i };
                    if i == 0 || resolved < 0 || resolved >= n {
                        return Err(bad("face index out of range"));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(bad("face with fewer than 3 vertices"));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn encode_obj(mesh: &LabeledMesh) -> Vec<u8> {
    let mut out = Vec::new();
    for p in mesh.vertices() {
        writeln!(out, "v {} {} {}", p.x, p.y, p.z).expect("write to vec");
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("write to vec");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Clone, Copy, Debug)]
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
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct PlyReader<'a> {
    data: &'a [u8],
    pos: usize,
    format: PlyFormat,
    tokens: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> PlyReader<'a> {
    fn read(&mut self, ty: Scalar) -> Result<f64> {
        if self.format == PlyFormat::Ascii {
            let t = self
                .tokens
                .next()
                .ok_or_else(|| Error::Format("PLY: unexpected end of data".into()))?;
            return t
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("PLY: bad value {t:?}")));
        }
        let n = ty.size();
        let raw = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format("PLY: unexpected end of data".into()))?;
        self.pos += n;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(raw);
        if self.format == PlyFormat::BinaryBe {
            buf[..n].reverse();
        }
        Ok(match ty {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        })
    }
}

fn parse_ply(bytes: &[u8]) -> Result<Geometry> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Format("PLY: missing end_header".into()))?;
    let mut body = end + END.len();
    // header line terminator: "\n" or "\r\n"
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::Format("PLY: header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Format("PLY: missing magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLe,
                    "binary_big_endian" => PlyFormat::BinaryBe,
                    other => return Err(Error::Format(format!("PLY: unknown format {other}"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Format(format!("PLY: bad count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", cnt, item, name] => {
                let (c, i) = (Scalar::parse(cnt), Scalar::parse(item));
                let (Some(c), Some(i)) = (c, i) else {
                    return Err(Error::Format(format!("PLY: bad list property {line:?}")));
                };
                elements
                    .last_mut()
                    .ok_or_else(|| Error::Format("PLY: property before element".into()))?
                    .props
                    .push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::Format(format!("PLY: bad property type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::Format("PLY: property before element".into()))?
                    .props
                    .push(Property::Scalar(name.to_string(), ty));
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| Error::Format("PLY: missing format line".into()))?;
    let ascii_body = if format == PlyFormat::Ascii {
        std::str::from_utf8(&bytes[body..])
            .map_err(|_| Error::Format("PLY: ASCII body is not UTF-8".into()))?
    } else {
        ""
    };
    let mut reader = PlyReader {
        data: bytes,
        pos: body,
        format,
        tokens: ascii_body.split_ascii_whitespace(),
    };

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let xyz: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|axis| {
                el.props
                    .iter()
                    .position(|p| matches!(p, Property::Scalar(n, _) if n == axis))
            })
            .collect();
        if el.name == "vertex" && xyz.iter().any(Option::is_none) {
            return Err(Error::Format("PLY: vertex element lacks x/y/z".into()));
        }
        let mut scalars = vec![0.0; el.props.len()];
        let mut poly = Vec::new();
        for _ in 0..el.count {
            for (pi, prop) in el.props.iter().enumerate() {
                match prop {
                    Property::Scalar(_, ty) => scalars[pi] = reader.read(*ty)?,
                    Property::List(name, cnt, item) => {
                        let n = reader.read(*cnt)? as usize;
                        let keep = el.name == "face"
                            && (name == "vertex_indices" || name == "vertex_index");
                        if keep {
                            poly.clear();
                        }
                        for _ in 0..n {
                            let v = reader.read(*item)?;
                            if keep {
                                poly.push(v);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                let c = |i: usize| scalars[xyz[i].unwrap()];
                vertices.push(Point3::new(c(0), c(1), c(2)));
            } else if el.name == "face" {
                if poly.len() < 3 {
                    return Err(Error::Format("PLY: face with fewer than 3 vertices".into()));
                }
                let idx: Vec<u32> = poly
                    .iter()
                    .map(|&v| {
                        if !(0.0..=u32::MAX as f64).contains(&v) || v.fract() != 0.0 {
                            Err(Error::Format(format!("PLY: bad face index {v}")))
                        } else {
                            Ok(v as u32)
                        }
                    })
                    .collect::<Result<_>>()?;
                fan(&idx, &mut faces);
            }
        }
    }
    Ok((vertices, faces))
}

fn encode_ply(mesh: &LabeledMesh) -> Vec<u8> {
    let mut out = Vec::new();
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.face_count()
    )
    .expect("write to vec");
    for p in mesh.vertices() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

fn parse_stl(bytes: &[u8]) -> Result<Geometry> {
    let looks_ascii = bytes.starts_with(b"solid")
        && std::str::from_utf8(bytes)
            .map(|t| t.contains("facet"))
            .unwrap_or(false);
    let mut triangles: Vec<[[f64; 3]; 3]> = Vec::new();
    if looks_ascii {
        let text = std::str::from_utf8(bytes).expect("checked above");
        let mut corner = Vec::with_capacity(3);
        for line in text.lines() {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.first() == Some(&"vertex") && t.len() == 4 {
                let mut c = [0.0; 3];
                for (slot, s) in c.iter_mut().zip(&t[1..]) {
                    *slot = s
                        .parse()
                        .map_err(|_| Error::Format(format!("STL: bad vertex {line:?}")))?;
                }
                corner.push(c);
                if corner.len() == 3 {
                    triangles.push([corner[0], corner[1], corner[2]]);
                    corner.clear();
                }
            }
        }
    } else {
        if bytes.len() < 84 {
            return Err(Error::Format("STL: file too short".into()));
        }
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        if bytes.len() < 84 + n * 50 {
            return Err(Error::Format(format!("STL: truncated, expected {n} triangles")));
        }
        for t in 0..n {
            let rec = &bytes[84 + t * 50..84 + (t + 1) * 50];
            let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64;
            let mut tri = [[0.0; 3]; 3];
            for (k, corner) in tri.iter_mut().enumerate() {
                for (a, c) in corner.iter_mut().enumerate() {
                    *c = f(12 + k * 12 + a * 4);
                }
            }
            triangles.push(tri);
        }
    }
    // STL stores triangle soup; weld bit-identical corners.
    let mut index: HashMap<[u64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::with_capacity(triangles.len());
    for tri in triangles {
        let mut f = [0u32; 3];
        for (slot, c) in f.iter_mut().zip(tri) {
            let key = c.map(f64::to_bits);
            *slot = *index.entry(key).or_insert_with(|| {
                vertices.push(Point3::from(c));
                (vertices.len() - 1) as u32
            });
        }
        faces.push(f);
    }
    Ok((vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    const TETRA_OBJ: &str = "# tetrahedron\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";

    const CUBE_OBJ: &str = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1\n\
f 1 2 4 3\nf 5 7 8 6\nf 1 5 6 2\nf 3 4 8 7\nf 1 3 7 5\nf 2 6 8 4\n";

    #[test]
    fn tetrahedron_obj_without_labels() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.obj");
        fs::write(&p, TETRA_OBJ).unwrap();
        let m = load_mesh(&p, None).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.face_count(), 4);
        assert!(m.labels().is_none());
    }

    #[test]
    fn cube_with_background_labels() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.obj");
        let l = dir.path().join("c.json");
        fs::write(&p, CUBE_OBJ).unwrap();
        fs::write(&l, r#"{"labels":[0,0,0,0,0,0,0,0],"instances":[1,2]}"#).unwrap();
        let m = load_mesh(&p, Some(&l)).unwrap();
        assert_eq!(m.face_count(), 12);
        assert_eq!(m.labels().unwrap(), &[0u8; 8]);
    }

    #[test]
    fn label_count_mismatch_is_alignment_error() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.obj");
        let l = dir.path().join("m.json");
        fs::write(&p, format!("{TETRA_OBJ}v 2 2 2\n")).unwrap();
        fs::write(&l, r#"{"labels":[0,11,12,0]}"#).unwrap();
        assert!(matches!(load_mesh(&p, Some(&l)), Err(Error::Alignment(_))));
    }

    #[test]
    fn bad_inputs() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nf 1 2 3\n").unwrap();
        assert!(matches!(load_mesh(&p, None), Err(Error::Format(_))));
        let l = dir.path().join("l.json");
        fs::write(&p, TETRA_OBJ).unwrap();
        fs::write(&l, r#"{"labels":[0,0,99,0]}"#).unwrap();
        assert!(matches!(load_mesh(&p, Some(&l)), Err(Error::Label(_))));
        assert!(matches!(
            load_mesh(&dir.path().join("missing.obj"), None),
            Err(Error::Io { .. })
        ));
        let q = dir.path().join("m.xyz");
        fs::write(&q, "").unwrap();
        assert!(matches!(load_mesh(&q, None), Err(Error::Format(_))));
    }

    #[test]
    fn ascii_ply_and_stl() {
        let dir = tempdir().unwrap();
        let ply = "ply\nformat ascii 1.0\ncomment x\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 1\n1 0 0 2\n1 1 0 3\n0 1 0 4\n4 0 1 2 3\n";
        let p = dir.path().join("q.ply");
        fs::write(&p, ply).unwrap();
        let m = load_mesh(&p, None).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);

        let stl = "solid t\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\nendloop\nendfacet\n\
facet normal 0 0 1\nouter loop\nvertex 1 0 0\nvertex 1 1 0\nvertex 0 1 0\nendloop\nendfacet\nendsolid t\n";
        let s = dir.path().join("t.stl");
        fs::write(&s, stl).unwrap();
        let m = load_mesh(&s, None).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.face_count(), 2);

        let mut bin = vec![0u8; 80];
        bin.extend_from_slice(&1u32.to_le_bytes());
        for v in [[0.0f32; 3], [0.0; 3], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]] {
            for c in v {
                bin.extend_from_slice(&c.to_le_bytes());
            }
        }
        bin.extend_from_slice(&[0, 0]);
        let b = dir.path().join("b.stl");
        fs::write(&b, bin).unwrap();
        let m = load_mesh(&b, None).unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn labels_round_trip_through_fdi() {
        let dir = tempdir().unwrap();
        let l = dir.path().join("l.json");
        let labels = vec![0u8, 1, 8, 9, 16, 3];
        for jaw in [Jaw::Upper, Jaw::Lower] {
            save_labels(&l, &labels, jaw, &FdiMap::default()).unwrap();
            let back = load_labels(&l, &FdiMap::default()).unwrap();
            assert_eq!(back.labels, labels);
            assert_eq!(back.jaw, Some(jaw));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn binary_ply_round_trips_bit_exactly(
            coords in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 9..60),
        ) {
            let n = coords.len() / 3;
            let vertices: Vec<_> = coords.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
            let faces: Vec<[u32; 3]> = (0..n as u32 - 2).map(|i| [i, i + 1, i + 2]).collect();
            let mesh = LabeledMesh::new(vertices, faces, None).unwrap();
            let dir = tempdir().unwrap();
            let p = dir.path().join("m.ply");
            save_mesh(&p, &mesh).unwrap();
            let once = load_mesh(&p, None).unwrap();
            save_mesh(&p, &once).unwrap();
            let twice = load_mesh(&p, None).unwrap();
            for (a, b) in mesh.vertices().iter().zip(twice.vertices()) {
                prop_assert_eq!(a.coords.map(f64::to_bits), b.coords.map(f64::to_bits));
            }
            prop_assert_eq!(mesh.faces(), twice.faces());
        }
    }
}
