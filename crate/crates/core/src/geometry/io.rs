//! OBJ and PLY readers.
//!
//! OBJ: `v`, `f` (polygons fan-triangulated, `a/b/c` and negative indices
//! accepted), `o`/`g` names. Other records are ignored.
//! PLY: ascii, binary_little_endian and binary_big_endian; `vertex` x/y/z and
//! `face` vertex_indices (or vertex_index) lists, optional integer
//! `material_id` on faces. Unknown elements and properties are skipped.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, LittleEndian, ReadBytesExt};

use super::{GeometryError, LoadReport, TriangleMesh};
use crate::math::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(Self::Obj),
            "ply" => Some(Self::Ply),
            _ => None,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> GeometryError {
    GeometryError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<(TriangleMesh, LoadReport), GeometryError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let (mesh, report) = match format {
        MeshFormat::Obj => parse_obj(path, &bytes)?,
        MeshFormat::Ply => parse_ply(path, &bytes)?,
    };
    if mesh.is_empty() {
        return Err(GeometryError::Empty(path.display().to_string()));
    }
    Ok((mesh, report))
}

/// Sidecar JSON `{ "object name": material_index, ... }`.
pub fn load_material_map(path: &Path) -> Result<HashMap<String, u32>, GeometryError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| GeometryError::MaterialMap {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn load_mesh_with_materials(
    path: &Path,
    format: MeshFormat,
    material_map: Option<&Path>,
) -> Result<(TriangleMesh, LoadReport), GeometryError> {
    let (mut mesh, report) = load_mesh(path, format)?;
    if let Some(m) = material_map {
        mesh.assign_materials(&load_material_map(m)?);
    }
    Ok((mesh, report))
}

fn parse_obj(path: &Path, bytes: &[u8]) -> Result<(TriangleMesh, LoadReport), GeometryError> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let mut objects = vec!["default".to_string()];
    let mut object_of_face = Vec::new();
    let mut current = 0u32;
    for (ln, line) in BufReader::new(bytes).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.split('#').next().unwrap_or("");
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for x in c.iter_mut() {
                    let t = tok.next().ok_or_else(|| parse_err(path, ln + 1, "vertex needs 3 coordinates"))?;
                    *x = t.parse().map_err(|_| parse_err(path, ln + 1, format!("bad coordinate {t:?}")))?;
                }
                verts.push(Vec3::from_array(c));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(path, ln + 1, format!("bad face index {t:?}")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        verts.len() as i64 + i
                    } else {
                        return Err(parse_err(path, ln + 1, "face index 0"));
                    };
                    if resolved < 0 {
                        return Err(parse_err(path, ln + 1, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(parse_err(path, ln + 1, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                    object_of_face.push(current);
                }
            }
            Some("o") | Some("g") => {
                let name = tok.collect::<Vec<_>>().join(" ");
                current = match objects.iter().position(|o| *o == name) {
                    Some(p) => p as u32,
                    None => {
                        objects.push(name);
                        (objects.len() - 1) as u32
                    }
                };
            }
            _ => {}
        }
    }
    let n = faces.len();
    TriangleMesh::with_objects(verts, faces, vec![0; n], object_of_face, objects)
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }
}

#[derive(Debug)]
enum Prop {
    Single(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Prop>,
}

#[derive(Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    Le,
    Be,
}

trait ValueSource {
    fn next(&mut self, ty: Scalar) -> Result<f64, String>;
}

struct AsciiSource<'a> {
    tokens: std::str::SplitWhitespace<'a>,
}

impl ValueSource for AsciiSource<'_> {
    fn next(&mut self, _ty: Scalar) -> Result<f64, String> {
        let t = self.tokens.next().ok_or("unexpected end of data")?;
        t.parse().map_err(|_| format!("bad value {t:?}"))
    }
}

struct BinSource<'a, const BIG: bool> {
    cur: Cursor<&'a [u8]>,
}

impl<const BIG: bool> ValueSource for BinSource<'_, BIG> {
    fn next(&mut self, ty: Scalar) -> Result<f64, String> {
        let c = &mut self.cur;
        let r = if BIG {
            match ty {
                Scalar::I8 => c.read_i8().map(f64::from),
                Scalar::U8 => c.read_u8().map(f64::from),
                Scalar::I16 => c.read_i16::<BigEndian>().map(f64::from),
                Scalar::U16 => c.read_u16::<BigEndian>().map(f64::from),
                Scalar::I32 => c.read_i32::<BigEndian>().map(f64::from),
                Scalar::U32 => c.read_u32::<BigEndian>().map(f64::from),
                Scalar::F32 => c.read_f32::<BigEndian>().map(f64::from),
                Scalar::F64 => c.read_f64::<BigEndian>(),
            }
        } else {
            match ty {
                Scalar::I8 => c.read_i8().map(f64::from),
                Scalar::U8 => c.read_u8().map(f64::from),
                Scalar::I16 => c.read_i16::<LittleEndian>().map(f64::from),
                Scalar::U16 => c.read_u16::<LittleEndian>().map(f64::from),
                Scalar::I32 => c.read_i32::<LittleEndian>().map(f64::from),
                Scalar::U32 => c.read_u32::<LittleEndian>().map(f64::from),
                Scalar::F32 => c.read_f32::<LittleEndian>().map(f64::from),
                Scalar::F64 => c.read_f64::<LittleEndian>(),
            }
        };
        r.map_err(|_| "unexpected end of binary data".to_string())
    }
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<(TriangleMesh, LoadReport), GeometryError> {
    let mut cur = Cursor::new(bytes);
    let mut header_line = |n: usize| -> Result<String, GeometryError> {
        let mut buf = Vec::new();
        loop {
            let mut b = [0u8];
            if cur.read(&mut b).map_err(|e| io_err(path, e))? == 0 {
                return Err(parse_err(path, n, "truncated header"));
            }
            if b[0] == b'\n' {
                break;
            }
            buf.push(b[0]);
        }
        Ok(String::from_utf8_lossy(&buf).trim_end_matches('\r').to_string())
    };
    if header_line(1)?.trim() != "ply" {
        return Err(parse_err(path, 1, "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut ln = 1;
    loop {
        ln += 1;
        let line = header_line(ln)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.first().copied() {
            Some("format") => {
                encoding = Some(match tok.get(1).copied() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::Le,
                    Some("binary_big_endian") => Encoding::Be,
                    other => return Err(parse_err(path, ln, format!("unknown format {other:?}"))),
                })
            }
            Some("element") => {
                let (Some(name), Some(count)) = (tok.get(1), tok.get(2).and_then(|c| c.parse().ok())) else {
                    return Err(parse_err(path, ln, "malformed element line"));
                };
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, ln, "property before element"))?;
                let bad = || parse_err(path, ln, format!("malformed property {line:?}"));
                if tok.get(1) == Some(&"list") {
                    let (Some(ct), Some(it), Some(name)) = (
                        tok.get(2).and_then(|s| Scalar::parse(s)),
                        tok.get(3).and_then(|s| Scalar::parse(s)),
                        tok.get(4),
                    ) else {
                        return Err(bad());
                    };
                    el.props.push(Prop::List(name.to_string(), ct, it));
                } else {
                    let (Some(ty), Some(name)) = (tok.get(1).and_then(|s| Scalar::parse(s)), tok.get(2)) else {
                        return Err(bad());
                    };
                    el.props.push(Prop::Single(name.to_string(), ty));
                }
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(path, ln, "missing format line"))?;
    let body = &bytes[cur.position() as usize..];
    let text;
    let mut src: Box<dyn ValueSource> = match encoding {
        Encoding::Ascii => {
            text = String::from_utf8_lossy(body);
            Box::new(AsciiSource {
                tokens: text.split_whitespace(),
            })
        }
        Encoding::Le => Box::new(BinSource::<false> { cur: Cursor::new(body) }),
        Encoding::Be => Box::new(BinSource::<true> { cur: Cursor::new(body) }),
    };

    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let mut mats = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut poly: Vec<u32> = Vec::new();
            let mut mat = 0u32;
            for p in &el.props {
                match p {
                    Prop::Single(name, ty) => {
                        let v = src.next(*ty).map_err(|m| parse_err(path, ln, m))?;
                        match (el.name.as_str(), name.as_str()) {
                            ("vertex", "x") => xyz[0] = v,
                            ("vertex", "y") => xyz[1] = v,
                            ("vertex", "z") => xyz[2] = v,
                            ("face", "material_id") | ("face", "material_index") => mat = v as u32,
                            _ => {}
                        }
                    }
                    Prop::List(name, ct, it) => {
                        let n = src.next(*ct).map_err(|m| parse_err(path, ln, m))? as usize;
                        let take = el.name == "face" && (name == "vertex_indices" || name == "vertex_index");
                        for _ in 0..n {
                            let v = src.next(*it).map_err(|m| parse_err(path, ln, m))?;
                            if take {
                                poly.push(v as u32);
                            }
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => verts.push(Vec3::from_array(xyz)),
                "face" => {
                    if poly.len() < 3 {
                        return Err(parse_err(path, ln, "face with fewer than 3 vertices"));
                    }
                    for k in 1..poly.len() - 1 {
                        faces.push([poly[0], poly[k], poly[k + 1]]);
                        mats.push(mat);
                    }
                }
                _ => {}
            }
        }
    }
    TriangleMesh::new(verts, faces, mats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use byteorder::WriteBytesExt;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, data: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, data).unwrap();
        p
    }

    const CUBE_OBJ: &str = "\
o cube
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v -0.5 0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v -0.5 0.5 0.5
v 0.5 0.5 0.5
f 1 3 4 2
f 5 6 8 7
f 1 2 6 5
f 3 7 8 4
f 1 5 7 3
f 2 4 8 6
";

    #[test]
    fn obj_cube() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "cube.obj", CUBE_OBJ.as_bytes());
        let (m, r) = load_mesh(&p, MeshFormat::Obj).unwrap();
        assert_eq!(m.num_faces(), 12);
        assert_eq!(r.degenerate_dropped, 0);
        // Every normal is a signed axis and points away from the centre.
        for f in 0..12 {
            let n = m.face_normals[f];
            let [a, b, c] = m.triangle(f);
            let centroid = (a + b + c).scale(1.0 / 3.0);
            assert!((n.norm() - 1.0).abs() < 1e-12);
            assert!(n.dot(centroid) > 0.0);
            assert!((n.x.abs() + n.y.abs() + n.z.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn obj_single_triangle_slash_and_negative_indices() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t.obj", b"v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3//1 -2//1 -1//1\n");
        let (m, _) = load_mesh(&p, MeshFormat::Obj).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert_eq!(m.face_normals[0], Vec3::Z);
    }

    #[test]
    fn obj_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.obj", b"v 0 0 zero\n");
        assert!(matches!(load_mesh(&p, MeshFormat::Obj), Err(GeometryError::Parse { line: 1, .. })));
        let p = write(&dir, "empty.obj", b"v 0 0 0\n");
        assert!(matches!(load_mesh(&p, MeshFormat::Obj), Err(GeometryError::Empty(_))));
        let missing = dir.path().join("nope.obj");
        assert!(matches!(load_mesh(&missing, MeshFormat::Obj), Err(GeometryError::Io { .. })));
    }

    #[test]
    fn obj_groups_drive_material_map() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "g.obj",
            b"v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\ng floor\nf 1 2 3\ng wall\nf 1 2 4\n",
        );
        let map = write(&dir, "g.json", br#"{"wall": 2, "floor": 1}"#);
        let (m, _) = load_mesh_with_materials(&p, MeshFormat::Obj, Some(&map)).unwrap();
        assert_eq!(m.material_id, vec![1, 2]);
    }

    fn square_ply_header(format: &str) -> String {
        format!(
            "ply\nformat {format} 1.0\ncomment test\nelement vertex 4\nproperty float x\nproperty float y\nproperty double z\n\
             property uchar red\nelement face 1\nproperty list uchar int vertex_indices\nproperty int material_id\nend_header\n"
        )
    }

    const SQUARE: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];

    fn check_square(m: &TriangleMesh) {
        assert_eq!(m.num_faces(), 2);
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.material_id, vec![5, 5]);
        assert_eq!(m.vertices[2], Vec3::new(1.0, 1.0, 0.0));
    }

    #[test]
    fn ply_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = square_ply_header("ascii");
        for v in SQUARE {
            s += &format!("{} {} {} 255\n", v[0], v[1], v[2]);
        }
        s += "4 0 1 2 3 5\n";
        let p = write(&dir, "sq.ply", s.as_bytes());
        check_square(&load_mesh(&p, MeshFormat::Ply).unwrap().0);
    }

    #[test]
    fn ply_binary_both_endians() {
        let dir = tempfile::tempdir().unwrap();
        for (fmt, big) in [("binary_little_endian", false), ("binary_big_endian", true)] {
            let mut buf = square_ply_header(fmt).into_bytes();
            for v in SQUARE {
                if big {
                    buf.write_f32::<BigEndian>(v[0] as f32).unwrap();
                    buf.write_f32::<BigEndian>(v[1] as f32).unwrap();
                    buf.write_f64::<BigEndian>(v[2]).unwrap();
                } else {
                    buf.write_f32::<LittleEndian>(v[0] as f32).unwrap();
                    buf.write_f32::<LittleEndian>(v[1] as f32).unwrap();
                    buf.write_f64::<LittleEndian>(v[2]).unwrap();
                }
                buf.write_u8(255).unwrap();
            }
            buf.write_u8(4).unwrap();
            for i in [0i32, 1, 2, 3, 5] {
                if big {
                    buf.write_i32::<BigEndian>(i).unwrap();
                } else {
                    buf.write_i32::<LittleEndian>(i).unwrap();
                }
            }
            let p = write(&dir, &format!("{fmt}.ply"), &buf);
            check_square(&load_mesh(&p, MeshFormat::Ply).unwrap().0);
        }
    }

    #[test]
    fn ply_truncated_binary_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut buf = square_ply_header("binary_little_endian").into_bytes();
        buf.write_all(&[0u8; 10]).unwrap();
        let p = write(&dir, "t.ply", &buf);
        assert!(matches!(load_mesh(&p, MeshFormat::Ply), Err(GeometryError::Parse { .. })));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(MeshFormat::from_path(Path::new("a/b.OBJ")), Some(MeshFormat::Obj));
        assert_eq!(MeshFormat::from_path(Path::new("x.ply")), Some(MeshFormat::Ply));
        assert_eq!(MeshFormat::from_path(Path::new("x.stl")), None);
    }
}
