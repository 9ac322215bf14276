//! Indexed triangle meshes.

use crate::geometry::Pose;
use nalgebra::Vector3;
use std::collections::HashMap;
use thiserror::Error;

/// Triangles with area at or below this are dropped at construction time.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {vertex} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        vertex: u32,
        vertex_count: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub watertight_hint: bool,
    /// Degenerate triangles removed during construction.
    pub dropped_degenerate: usize,
}

impl TriangleMesh {
    /// Validates indices and drops degenerate triangles.
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[u32; 3]>,
        watertight_hint: bool,
    ) -> Result<Self, MeshError> {
        for (i, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: i,
                        vertex: v,
                        vertex_count: vertices.len(),
                    });
                }
            }
        }
        let mut kept = Vec::with_capacity(triangles.len());
        let mut dropped = 0;
        for tri in triangles {
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area > DEGENERATE_AREA {
                kept.push(tri);
            } else {
                dropped += 1;
            }
        }
        Ok(Self {
            vertices,
            triangles: kept,
            watertight_hint,
            dropped_degenerate: dropped,
        })
    }

    pub fn triangle_vertices(&self, index: usize) -> [Vector3<f64>; 3] {
        self.triangles[index].map(|i| self.vertices[i as usize])
    }

    /// Mesh with every vertex mapped through an object-to-world pose.
    pub fn transformed(&self, pose: &Pose) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|v| pose.camera_to_world(v))
                .collect(),
            triangles: self.triangles.clone(),
            watertight_hint: self.watertight_hint,
            dropped_degenerate: self.dropped_degenerate,
        }
    }

    pub fn aabb(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        let mut min = first;
        let mut max = first;
        for v in it {
            min = min.inf(v);
            max = max.sup(v);
        }
        Some((min, max))
    }

    /// Signed volume by the divergence theorem; positive for outward-wound
    /// closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|i| self.vertices[i as usize]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// True when every directed edge is matched by exactly one opposite
    /// directed edge, i.e. the mesh is a closed orientable surface.
    pub fn is_closed_manifold(&self) -> bool {
        let mut directed: HashMap<(u32, u32), i32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                if a == b {
                    return false;
                }
                *directed.entry((a.min(b), a.max(b))).or_insert(0) +=
                    if a < b { 1 } else { -1 };
                let count = directed
                    .get(&(a.min(b), a.max(b)))
                    .copied()
                    .unwrap_or(0);
                if !(-1..=1).contains(&count) {
                    return false;
                }
            }
        }
        // Every undirected edge must have one edge in each direction.
        let mut totals: HashMap<(u32, u32), u32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                *totals.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        directed.values().all(|&net| net == 0) && totals.values().all(|&n| n == 2)
    }
}
