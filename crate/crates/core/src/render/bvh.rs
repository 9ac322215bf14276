//! Bounding-volume hierarchy over one mesh's triangles.

use crate::geometry::Ray;
use crate::mesh::TriangleMesh;
use nalgebra::Vector3;

/// Triangles per leaf.
const LEAF_SIZE: usize = 4;
/// Determinant threshold below which a ray is treated as parallel to the
/// triangle plane.
const PARALLEL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Facing {
    Front,
    Back,
}

/// Ray-triangle intersection distance with the side it entered from: front
/// means the ray runs against the geometric normal of the CCW vertex order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub s: f64,
    pub facing: Facing,
}

struct Node {
    min: Vector3<f64>,
    max: Vector3<f64>,
    /// Leaf: range into `order`. Inner: child node indices.
    a: u32,
    b: u32,
    leaf: bool,
}

pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices, partitioned so each leaf owns one contiguous run.
    order: Vec<u32>,
}

fn triangle_bounds(mesh: &TriangleMesh, t: usize) -> (Vector3<f64>, Vector3<f64>) {
    let [p0, p1, p2] = mesh.triangle_vertices(t);
    (p0.inf(&p1).inf(&p2), p0.sup(&p1).sup(&p2))
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.triangles.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let centroids: Vec<Vector3<f64>> = (0..n)
            .map(|t| {
                let [p0, p1, p2] = mesh.triangle_vertices(t);
                (p0 + p1 + p2) / 3.0
            })
            .collect();
        let mut nodes = Vec::new();
        if n > 0 {
            build_node(mesh, &centroids, &mut order, 0, n, &mut nodes);
        }
        Self { nodes, order }
    }

    /// Nearest hit with `s` strictly beyond `min_s`.
    pub fn closest_hit(&self, mesh: &TriangleMesh, ray: &Ray, min_s: f64) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = ray.direction.map(|d| 1.0 / d);
        let mut best: Option<RayHit> = None;
        let mut stack = vec![0usize];
        while let Some(index) = stack.pop() {
            let node = &self.nodes[index];
            let limit = best.map_or(f64::INFINITY, |h| h.s);
            let Some(entry) = slab_entry(node, ray, &inv) else {
                continue;
            };
            if entry > limit {
                continue;
            }
            if node.leaf {
                for &t in &self.order[node.a as usize..node.b as usize] {
                    if let Some(hit) = intersect_triangle(mesh, t as usize, ray, min_s) {
                        if best.is_none_or(|b| hit.s < b.s) {
                            best = Some(hit);
                        }
                    }
                }
            } else {
                stack.push(node.a as usize);
                stack.push(node.b as usize);
            }
        }
        best
    }

    /// Appends every hit beyond `min_s`, unordered.
    pub fn all_hits(&self, mesh: &TriangleMesh, ray: &Ray, min_s: f64, out: &mut Vec<RayHit>) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = ray.direction.map(|d| 1.0 / d);
        let mut stack = vec![0usize];
        while let Some(index) = stack.pop() {
            let node = &self.nodes[index];
            if slab_entry(node, ray, &inv).is_none() {
                continue;
            }
            if node.leaf {
                for &t in &self.order[node.a as usize..node.b as usize] {
                    if let Some(hit) = intersect_triangle(mesh, t as usize, ray, min_s) {
                        out.push(hit);
                    }
                }
            } else {
                stack.push(node.a as usize);
                stack.push(node.b as usize);
            }
        }
    }
}

/// Builds the subtree over `order[start..end]`, returns its node index.
fn build_node(
    mesh: &TriangleMesh,
    centroids: &[Vector3<f64>],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut min = Vector3::repeat(f64::INFINITY);
    let mut max = Vector3::repeat(f64::NEG_INFINITY);
    for &t in &order[start..end] {
        let (lo, hi) = triangle_bounds(mesh, t as usize);
        min = min.inf(&lo);
        max = max.sup(&hi);
    }
    let index = nodes.len();
    nodes.push(Node {
        min,
        max,
        a: start as u32,
        b: end as u32,
        leaf: true,
    });
    if end - start <= LEAF_SIZE {
        return index;
    }

    // Split at the centroid midpoint of the widest axis; fall back to a
    // median split when all centroids land on one side.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &t in &order[start..end] {
        lo = lo.inf(&centroids[t as usize]);
        hi = hi.sup(&centroids[t as usize]);
    }
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let pivot = (lo[axis] + hi[axis]) / 2.0;
    let mut mid = start;
    for i in start..end {
        if centroids[order[i] as usize][axis] < pivot {
            order.swap(i, mid);
            mid += 1;
        }
    }
    if mid == start || mid == end {
        mid = start + (end - start) / 2;
        order[start..end].sort_unstable_by(|&x, &y| {
            centroids[x as usize][axis]
                .partial_cmp(&centroids[y as usize][axis])
                .unwrap()
                .then(x.cmp(&y))
        });
    }
    let left = build_node(mesh, centroids, order, start, mid, nodes);
    let right = build_node(mesh, centroids, order, mid, end, nodes);
    nodes[index].a = left as u32;
    nodes[index].b = right as u32;
    nodes[index].leaf = false;
    index
}

/// Distance at which the ray enters the node's box, or None when it misses.
fn slab_entry(node: &Node, ray: &Ray, inv: &Vector3<f64>) -> Option<f64> {
    let mut t_near = 0.0f64;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        let t0 = (node.min[axis] - ray.origin[axis]) * inv[axis];
        let t1 = (node.max[axis] - ray.origin[axis]) * inv[axis];
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        // NaN from 0 * inf: treat as no constraint on this axis.
        if t0.is_nan() || t1.is_nan() {
            if ray.origin[axis] < node.min[axis] || ray.origin[axis] > node.max[axis] {
                return None;
            }
            continue;
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    Some(t_near)
}

/// Moller-Trumbore with both facings accepted; inclusive barycentric bounds
/// so rays through shared edges register on both neighbors (deduplicated by
/// the caller).
fn intersect_triangle(mesh: &TriangleMesh, t: usize, ray: &Ray, min_s: f64) -> Option<RayHit> {
    let [p0, p1, p2] = mesh.triangle_vertices(t);
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let pvec = ray.direction.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < PARALLEL_EPS {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - p0;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.direction.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let s = e2.dot(&qvec) * inv_det;
    if s <= min_s {
        return None;
    }
    // det = -direction . (e1 x e2): positive det means the ray runs against
    // the geometric normal.
    let facing = if det > 0.0 { Facing::Front } else { Facing::Back };
    Some(RayHit { s, facing })
}
