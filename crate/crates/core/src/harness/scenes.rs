use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ArraySpec, EndpointSpec, MaterialSpec, MeshSpec, SceneFile, TraceSpec};
use super::HarnessError;
use crate::calibrate::PoseSpec;
use crate::geometry::TriangleMesh;
use crate::materials::{NamedMaterial, RadioMaterial};
use crate::math::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SceneKind {
    /// Square plate of side `scale` (m) in z = 0, centred at the origin,
    /// with the transmitter and receiver mirrored about the plate normal in
    /// the xz-plane so the specular point is the origin.
    SingleReflector {
        scale: f64,
        #[serde(default = "default_dist")]
        tx_distance: f64,
        #[serde(default = "default_dist")]
        rx_distance: f64,
        #[serde(default = "default_incidence")]
        incidence_deg: f64,
    },
    /// Axis-aligned room from the origin to `size`, walls facing inwards.
    BoxRoom { size: [f64; 3] },
}

fn default_dist() -> f64 {
    25.0
}

fn default_incidence() -> f64 {
    45.0
}

impl SceneKind {
    pub fn single_reflector(scale: f64) -> Self {
        Self::SingleReflector {
            scale,
            tx_distance: default_dist(),
            rx_distance: default_dist(),
            incidence_deg: default_incidence(),
        }
    }
}

pub struct BuiltScene {
    pub mesh: TriangleMesh,
    /// Matching scene description; its mesh entry is the builtin itself.
    pub file: SceneFile,
}

/// Transmitter and receiver positions for the reflector scene.
pub fn reflector_endpoints(tx_distance: f64, rx_distance: f64, incidence_deg: f64) -> (Vec3, Vec3) {
    let (s, c) = incidence_deg.to_radians().sin_cos();
    (
        Vec3::new(-tx_distance * s, 0.0, tx_distance * c),
        Vec3::new(rx_distance * s, 0.0, rx_distance * c),
    )
}

fn quad_mesh(quads: &[[Vec3; 4]], names: Vec<String>) -> TriangleMesh {
    let mut v = Vec::new();
    let mut f = Vec::new();
    let mut obj = Vec::new();
    for (k, q) in quads.iter().enumerate() {
        let b = v.len() as u32;
        v.extend_from_slice(q);
        f.push([b, b + 1, b + 2]);
        f.push([b, b + 2, b + 3]);
        obj.extend([k as u32; 2]);
    }
    let n = f.len();
    TriangleMesh::with_objects(v, f, vec![0; n], obj, names)
        .expect("constructed faces are valid")
        .0
}

fn pose_at(p: Vec3) -> PoseSpec {
    PoseSpec {
        position: p.to_array(),
        target: None,
        boresight: None,
        up: None,
    }
}

fn endpoint(p: Vec3) -> EndpointSpec {
    EndpointSpec {
        pose: pose_at(p),
        pattern: Default::default(),
        array: ArraySpec::Single,
        precoding: Default::default(),
    }
}

pub fn build_scene(kind: &SceneKind) -> Result<BuiltScene, HarnessError> {
    let bad = |m: String| Err(HarnessError::Config(m));
    let (mesh, tx, rx, material, trace) = match *kind {
        SceneKind::SingleReflector {
            scale,
            tx_distance,
            rx_distance,
            incidence_deg,
        } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return bad(format!("reflector scale must be positive, got {scale}"));
            }
            if !(tx_distance > 0.0 && rx_distance > 0.0) {
                return bad("endpoint distances must be positive".into());
            }
            if !(0.0..90.0).contains(&incidence_deg) {
                return bad(format!("incidence {incidence_deg} deg outside [0, 90)"));
            }
            let h = scale / 2.0;
            let plate = [
                Vec3::new(-h, -h, 0.0),
                Vec3::new(h, -h, 0.0),
                Vec3::new(h, h, 0.0),
                Vec3::new(-h, h, 0.0),
            ];
            let (t, r) = reflector_endpoints(tx_distance, rx_distance, incidence_deg);
            let trace = TraceSpec {
                max_depth: 1,
                include_los: false,
                ..Default::default()
            };
            (quad_mesh(&[plate], vec!["reflector".into()]), t, r, RadioMaterial::conductor(120.0), trace)
        }
        SceneKind::BoxRoom { size } => {
            if size.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return bad(format!("room size must be positive, got {size:?}"));
            }
            let [x, y, z] = size;
            let p = |a: f64, b: f64, c: f64| Vec3::new(a, b, c);
            // Listed clockwise from inside, so reversed.
            let quads = [
                [p(0., 0., 0.), p(0., y, 0.), p(x, y, 0.), p(x, 0., 0.)],
                [p(0., 0., z), p(x, 0., z), p(x, y, z), p(0., y, z)],
                [p(0., 0., 0.), p(x, 0., 0.), p(x, 0., z), p(0., 0., z)],
                [p(0., y, 0.), p(0., y, z), p(x, y, z), p(x, y, 0.)],
                [p(0., 0., 0.), p(0., 0., z), p(0., y, z), p(0., y, 0.)],
                [p(x, 0., 0.), p(x, y, 0.), p(x, y, z), p(x, 0., z)],
            ]
            .map(|mut q| {
                q.reverse();
                q
            });
            let names = ["floor", "ceiling", "wall_y0", "wall_y1", "wall_x0", "wall_x1"];
            let concrete = RadioMaterial {
                eps_r: 5.24,
                sigma: 0.626,
                s: 0.2,
                xpd: 0.05,
                alpha_r: 10.0,
            };
            (
                quad_mesh(&quads, names.map(String::from).to_vec()),
                p(0.25 * x, 0.3 * y, 0.5 * z),
                p(0.7 * x, 0.75 * y, 0.4 * z),
                concrete,
                TraceSpec::default(),
            )
        }
    };
    Ok(BuiltScene {
        mesh,
        file: SceneFile {
            mesh: MeshSpec::Builtin(kind.clone()),
            materials: MaterialSpec::Table(vec![NamedMaterial {
                name: "surface".into(),
                material,
            }]),
            freq_hz: 28e9,
            tx: endpoint(tx),
            rx: endpoint(rx),
            trace,
            grid_step_deg: 1.0,
        },
    })
}

/// Plain OBJ with one `o` record per object.
pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in &mesh.vertices {
        writeln!(f, "v {} {} {}", v.x, v.y, v.z)?;
    }
    let mut current = None;
    for (k, face) in mesh.faces.iter().enumerate() {
        let o = mesh.object_id[k];
        if current != Some(o) {
            let name = mesh.object_names.get(o as usize).map_or("object", String::as_str);
            writeln!(f, "o {name}")?;
            current = Some(o);
        }
        writeln!(f, "f {} {} {}", face[0] + 1, face[1] + 1, face[2] + 1)?;
    }
    f.flush()
}
