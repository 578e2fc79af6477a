//! Triangle meshes, mesh I/O, and BVH ray queries.

mod bvh;
mod io;

pub use bvh::{build_accel, Accel, BvhNode};
pub use io::{load_material_map, load_mesh, load_mesh_with_materials, MeshFormat};

use std::collections::HashMap;

use thiserror::Error;

use crate::math::{Mat3, Vec3};

/// Offset applied along the geometric normal when spawning secondary rays.
pub const RAY_EPSILON: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("mesh {0} has no usable faces")]
    Empty(String),
    #[error("face {face} references vertex {index} but only {count} vertices exist")]
    BadIndex { face: usize, index: usize, count: usize },
    #[error("non-finite vertex {0}")]
    NonFinite(usize),
    #[error("invalid material map {path}: {msg}")]
    MaterialMap { path: String, msg: String },
}

/// Indexed triangle mesh with per-face unit normals and material ids.
#[derive(Clone, Debug, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub face_normals: Vec<Vec3>,
    pub material_id: Vec<u32>,
    /// Object/group index per face into `object_names`.
    pub object_id: Vec<u32>,
    pub object_names: Vec<String>,
}

/// Outcome of constructing a mesh from raw data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub faces_read: usize,
    pub degenerate_dropped: usize,
}

impl TriangleMesh {
    /// Build a mesh, computing normals from winding and dropping
    /// zero-area faces. Every face is assigned to a single object.
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        material_id: Vec<u32>,
    ) -> Result<(Self, LoadReport), GeometryError> {
        let n = faces.len();
        Self::with_objects(vertices, faces, material_id, vec![0; n], vec!["default".into()])
    }

    pub fn with_objects(
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        material_id: Vec<u32>,
        object_id: Vec<u32>,
        object_names: Vec<String>,
    ) -> Result<(Self, LoadReport), GeometryError> {
        assert_eq!(faces.len(), material_id.len());
        assert_eq!(faces.len(), object_id.len());
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let mut mesh = TriangleMesh {
            vertices,
            object_names,
            ..Default::default()
        };
        let mut report = LoadReport {
            faces_read: faces.len(),
            ..Default::default()
        };
        let nv = mesh.vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i as usize >= nv {
                    return Err(GeometryError::BadIndex {
                        face: fi,
                        index: i as usize,
                        count: nv,
                    });
                }
            }
            let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
            let cr = (b - a).cross(c - a);
            let len = cr.norm();
            // Relative threshold so sub-millimetre scenes are not discarded.
            let scale = (b - a).norm().max((c - a).norm()).max(1e-300);
            if !(len > 1e-12 * scale * scale) {
                report.degenerate_dropped += 1;
                continue;
            }
            mesh.faces.push(*f);
            mesh.face_normals.push(cr.scale(1.0 / len));
            mesh.material_id.push(material_id[fi]);
            mesh.object_id.push(object_id[fi]);
        }
        Ok((mesh, report))
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    /// Assign material ids by object name; unmapped objects keep their id.
    pub fn assign_materials(&mut self, map: &HashMap<String, u32>) {
        for (f, m) in self.material_id.iter_mut().enumerate() {
            let name = &self.object_names[self.object_id[f] as usize];
            if let Some(&id) = map.get(name) {
                *m = id;
            }
        }
    }

    /// Apply `p -> rot * p + trans` to every vertex.
    pub fn transformed(&self, rot: &Mat3, trans: Vec3) -> Self {
        let mut out = self.clone();
        for v in out.vertices.iter_mut() {
            *v = rot.mul_vec(*v) + trans;
        }
        for n in out.face_normals.iter_mut() {
            *n = rot.mul_vec(*n).normalized();
        }
        out
    }

    /// Concatenate meshes, keeping object names distinct.
    pub fn merged(parts: &[TriangleMesh]) -> Self {
        let mut out = TriangleMesh::default();
        for p in parts {
            let v0 = out.vertices.len() as u32;
            let o0 = out.object_names.len() as u32;
            out.vertices.extend_from_slice(&p.vertices);
            out.faces.extend(p.faces.iter().map(|f| f.map(|i| i + v0)));
            out.face_normals.extend_from_slice(&p.face_normals);
            out.material_id.extend_from_slice(&p.material_id);
            out.object_id.extend(p.object_id.iter().map(|o| o + o0));
            out.object_names.extend(p.object_names.iter().cloned());
        }
        out
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for f in &self.faces {
            for &i in f {
                lo = lo.min_elem(self.vertices[i as usize]);
                hi = hi.max_elem(self.vertices[i as usize]);
            }
        }
        (lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    /// `dir` is normalized here.
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Self {
            origin,
            dir: dir.normalized(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir.scale(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intersection {
    pub point: Vec3,
    /// Unit normal facing the incoming ray.
    pub normal: Vec3,
    pub distance: f64,
    pub face_id: u32,
    pub material_id: u32,
}

impl Intersection {
    /// Origin for a secondary ray leaving on the normal side.
    pub fn spawn_point(&self) -> Vec3 {
        self.point + self.normal.scale(RAY_EPSILON)
    }
}

/// Moller-Trumbore ray parameter of a hit inside `(t_min, t_max)`.
#[inline]
pub fn ray_triangle(ray: &Ray, tri: &[Vec3; 3], t_min: f64, t_max: f64) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > t_min && t < t_max {
        Some(t)
    } else {
        None
    }
}

fn make_hit(mesh: &TriangleMesh, ray: &Ray, face: usize, t: f64) -> Intersection {
    let n = mesh.face_normals[face];
    let normal = if n.dot(ray.dir) > 0.0 { -n } else { n };
    Intersection {
        point: ray.at(t),
        normal,
        distance: t,
        face_id: face as u32,
        material_id: mesh.material_id[face],
    }
}

/// Nearest hit by scanning every face. Ties go to the lower face id.
pub fn intersect_brute_force(mesh: &TriangleMesh, ray: &Ray, t_min: f64, t_max: f64) -> Option<Intersection> {
    let mut best: Option<(f64, usize)> = None;
    for f in 0..mesh.num_faces() {
        let limit = best.map_or(t_max, |b| b.0);
        if let Some(t) = ray_triangle(ray, &mesh.triangle(f), t_min, t_max) {
            if t < limit || best.is_some_and(|b| t == b.0 && f < b.1) {
                best = Some((t, f));
            }
        }
    }
    best.map(|(t, f)| make_hit(mesh, ray, f, t))
}

#[cfg(test)]
pub(crate) mod test_meshes {
    use super::*;

    /// Axis-aligned unit cube centred at the origin, outward winding.
    pub fn unit_cube() -> TriangleMesh {
        let v: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -0.5 } else { 0.5 },
                    if i & 2 == 0 { -0.5 } else { 0.5 },
                    if i & 4 == 0 { -0.5 } else { 0.5 },
                )
            })
            .collect();
        let quads = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let mut faces = Vec::new();
        for q in quads {
            faces.push([q[0], q[1], q[2]]);
            faces.push([q[0], q[2], q[3]]);
        }
        let n = faces.len();
        TriangleMesh::new(v, faces, vec![0; n]).unwrap().0
    }

    /// Axis-aligned square of side `size` in the plane z = `z`.
    pub fn square(center: Vec3, size: f64) -> TriangleMesh {
        let h = size / 2.0;
        let v = vec![
            center + Vec3::new(-h, -h, 0.0),
            center + Vec3::new(h, -h, 0.0),
            center + Vec3::new(h, h, 0.0),
            center + Vec3::new(-h, h, 0.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![0, 0]).unwrap().0
    }
}
