use super::{make_hit, ray_triangle, Intersection, Ray, TriangleMesh, RAY_EPSILON};
use crate::math::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
pub struct BvhNode {
    pub lo: Vec3,
    pub hi: Vec3,
    /// Leaf: first index into `Accel::order`. Interior: left child.
    pub first: u32,
    /// Leaf face count; 0 marks an interior node.
    pub count: u32,
    /// Interior: right child.
    pub right: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

/// Bounding volume hierarchy owning its mesh.
#[derive(Clone, Debug)]
pub struct Accel {
    mesh: TriangleMesh,
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

/// Median-split BVH over the longest centroid axis.
pub fn build_accel(mesh: TriangleMesh) -> Accel {
    let n = mesh.num_faces();
    let mut accel = Accel {
        nodes: Vec::with_capacity(2 * n.div_ceil(LEAF_SIZE)),
        order: (0..n as u32).collect(),
        mesh,
    };
    if n > 0 {
        let centroids: Vec<Vec3> = (0..n)
            .map(|f| {
                let [a, b, c] = accel.mesh.triangle(f);
                (a + b + c).scale(1.0 / 3.0)
            })
            .collect();
        let mut order = std::mem::take(&mut accel.order);
        accel.build(&mut order, 0, &centroids);
        accel.order = order;
    }
    accel
}

fn tri_bounds(mesh: &TriangleMesh, faces: &[u32]) -> (Vec3, Vec3) {
    let mut lo = Vec3::splat(f64::INFINITY);
    let mut hi = Vec3::splat(f64::NEG_INFINITY);
    for &f in faces {
        for v in mesh.triangle(f as usize) {
            lo = lo.min_elem(v);
            hi = hi.max_elem(v);
        }
    }
    // Pad so rays lying exactly on a box face are not lost to 0 * inf.
    let pad = 1e-9 * (1.0 + (hi - lo).norm());
    (lo - Vec3::splat(pad), hi + Vec3::splat(pad))
}

impl Accel {
    fn build(&mut self, order: &mut [u32], base: usize, centroids: &[Vec3]) -> u32 {
        let (lo, hi) = tri_bounds(&self.mesh, order);
        let idx = self.nodes.len() as u32;
        self.nodes.push(BvhNode {
            lo,
            hi,
            first: base as u32,
            count: order.len() as u32,
            right: 0,
        });
        if order.len() <= LEAF_SIZE {
            return idx;
        }
        let mut clo = Vec3::splat(f64::INFINITY);
        let mut chi = Vec3::splat(f64::NEG_INFINITY);
        for &f in order.iter() {
            clo = clo.min_elem(centroids[f as usize]);
            chi = chi.max_elem(centroids[f as usize]);
        }
        let ext = chi - clo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            let ca = centroids[a as usize].axis(axis);
            let cb = centroids[b as usize].axis(axis);
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        let (left, right) = order.split_at_mut(mid);
        let l = self.build(left, base, centroids);
        let r = self.build(right, base + mid, centroids);
        let node = &mut self.nodes[idx as usize];
        node.first = l;
        node.right = r;
        node.count = 0;
        idx
    }

    pub fn empty() -> Self {
        build_accel(TriangleMesh::default())
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Face indices in leaf order; each face appears exactly once.
    pub fn face_order(&self) -> &[u32] {
        &self.order
    }

    /// Nearest hit with `t_min < t < t_max`; ties go to the lower face id.
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Intersection> {
        self.traverse(ray, t_min, t_max, false)
            .map(|(t, f)| make_hit(&self.mesh, ray, f as usize, t))
    }

    /// True when a surface blocks the open segment between `a` and `b`,
    /// excluding `RAY_EPSILON` at both ends.
    pub fn occluded(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let dist = d.norm();
        if dist <= 2.0 * RAY_EPSILON {
            return false;
        }
        let ray = Ray {
            origin: a,
            dir: d.scale(1.0 / dist),
        };
        self.traverse(&ray, RAY_EPSILON, dist - RAY_EPSILON, true).is_some()
    }

    fn traverse(&self, ray: &Ray, t_min: f64, t_max: f64, any: bool) -> Option<(f64, u32)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<(f64, u32)> = None;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            let limit = best.map_or(t_max, |b| b.0);
            match slab(node, ray, &inv, t_min, limit) {
                Some(_) => {}
                None => continue,
            }
            if node.is_leaf() {
                let s = node.first as usize;
                for &f in &self.order[s..s + node.count as usize] {
                    if let Some(t) = ray_triangle(ray, &self.mesh.triangle(f as usize), t_min, t_max) {
                        let better = match best {
                            None => true,
                            Some((bt, bf)) => t < bt || (t == bt && f < bf),
                        };
                        if better {
                            best = Some((t, f));
                            if any {
                                return best;
                            }
                        }
                    }
                }
            } else {
                let (l, r) = (node.first, node.right);
                let tl = slab(&self.nodes[l as usize], ray, &inv, t_min, limit);
                let tr = slab(&self.nodes[r as usize], ray, &inv, t_min, limit);
                // Push the farther child first so the nearer one pops next.
                let (first, second) = match (tl, tr) {
                    (Some(a), Some(b)) if b < a => (Some(l), Some(r)),
                    (Some(_), Some(_)) => (Some(r), Some(l)),
                    (Some(_), None) => (None, Some(l)),
                    (None, Some(_)) => (None, Some(r)),
                    (None, None) => (None, None),
                };
                for c in [first, second].into_iter().flatten() {
                    stack[sp] = c;
                    sp += 1;
                }
            }
        }
        best
    }
}

#[inline]
fn slab(node: &BvhNode, ray: &Ray, inv: &Vec3, t_min: f64, t_max: f64) -> Option<f64> {
    let mut t0 = t_min;
    let mut t1 = t_max;
    for a in 0..3 {
        let o = ray.origin.axis(a);
        let i = inv.axis(a);
        let mut ta = (node.lo.axis(a) - o) * i;
        let mut tb = (node.hi.axis(a) - o) * i;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        // NaN (0 * inf) leaves the interval unchanged.
        if ta > t0 {
            t0 = ta;
        }
        if tb < t1 {
            t1 = tb;
        }
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}
