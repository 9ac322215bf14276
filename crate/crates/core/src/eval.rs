//! Ground-truth solid voxelization, 2D thickness metrics, 3D occupancy
//! metrics, per-frame fusion convergence, and blocky surface export.

use crate::frame::FrameBundle;
use crate::fusion::{
    integrate_frame, occupancy_from_grid, FusionConfig, FusionError, GridFrame, TsdfGrid,
};
use crate::geometry::CameraIntrinsics;
use crate::image::{FloatMap, MaskMap};
use crate::mesh::TriangleMesh;
use nalgebra::Vector3;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

/// Pixels whose ground-truth thickness is at or below this (meters) are left
/// out of 2D metrics: relative and log errors degenerate as thickness goes
/// to zero at silhouette borders.
pub const MIN_EVAL_THICKNESS: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("grid frames differ: {a:?} vs {b:?}")]
    GridFrameMismatch { a: GridFrame, b: GridFrame },
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    ImageDimsMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("no valid pixels (need mask != 0 and ground-truth thickness > {MIN_EVAL_THICKNESS})")]
    NoValidPixels,
    #[error("object {object_id} is not watertight: odd crossing count along a voxel row")]
    NonWatertight { object_id: u8 },
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Binary occupancy on the shared grid frame. Comparisons require identical
/// frames.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub frame: GridFrame,
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(frame: GridFrame) -> Self {
        Self {
            occupied: vec![false; frame.voxel_count()],
            frame,
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    fn at(&self, i: i64, j: i64, k: i64) -> bool {
        if i < 0 || j < 0 || k < 0 {
            return false;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= self.frame.nx() || j >= self.frame.ny() || k >= self.frame.nz() {
            return false;
        }
        self.occupied[self.frame.index(i, j, k)]
    }
}

/// A triangle projected onto the (y, z) plane, oriented counter-clockwise,
/// keeping the original x coordinates for crossing interpolation.
struct ProjectedTriangle {
    a: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    x: [f64; 3],
    lo: [f64; 2],
    hi: [f64; 2],
}

fn edge_value(a: [f64; 2], b: [f64; 2], q: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
}

/// Half-open boundary ownership: a point exactly on an edge belongs to the
/// triangle whose edge goes "up" (dv > 0), or left along a horizontal edge.
/// Adjacent triangles sharing an edge therefore count a crossing exactly
/// once.
fn edge_owns_boundary(a: [f64; 2], b: [f64; 2]) -> bool {
    let du = b[0] - a[0];
    let dv = b[1] - a[1];
    dv > 0.0 || (dv == 0.0 && du < 0.0)
}

impl ProjectedTriangle {
    fn new(p0: Vector3<f64>, p1: Vector3<f64>, p2: Vector3<f64>) -> Option<Self> {
        let a = [p0.y, p0.z];
        let mut b = [p1.y, p1.z];
        let mut c = [p2.y, p2.z];
        let mut x = [p0.x, p1.x, p2.x];
        let area2 = edge_value(a, b, c);
        if area2 == 0.0 {
            // Parallel to the ray direction: grazes, never crosses.
            return None;
        }
        if area2 < 0.0 {
            std::mem::swap(&mut b, &mut c);
            x.swap(1, 2);
        }
        let lo = [
            a[0].min(b[0]).min(c[0]),
            a[1].min(b[1]).min(c[1]),
        ];
        let hi = [
            a[0].max(b[0]).max(c[0]),
            a[1].max(b[1]).max(c[1]),
        ];
        Some(Self { a, b, c, x, lo, hi })
    }

    /// X coordinate where the +x ray through q pierces the triangle plane,
    /// or None when q is outside the projected triangle.
    fn crossing(&self, q: [f64; 2]) -> Option<f64> {
        if q[0] < self.lo[0] || q[0] > self.hi[0] || q[1] < self.lo[1] || q[1] > self.hi[1] {
            return None;
        }
        let e0 = edge_value(self.b, self.c, q);
        let e1 = edge_value(self.c, self.a, q);
        let e2 = edge_value(self.a, self.b, q);
        if e0 < 0.0 || e1 < 0.0 || e2 < 0.0 {
            return None;
        }
        if e0 == 0.0 && !edge_owns_boundary(self.b, self.c) {
            return None;
        }
        if e1 == 0.0 && !edge_owns_boundary(self.c, self.a) {
            return None;
        }
        if e2 == 0.0 && !edge_owns_boundary(self.a, self.b) {
            return None;
        }
        let sum = e0 + e1 + e2;
        Some((e0 * self.x[0] + e1 * self.x[1] + e2 * self.x[2]) / sum)
    }
}

/// Marks every voxel whose center lies inside any of the (watertight,
/// world-space) meshes. Inside/outside is decided per (j, k) row by the
/// parity of triangle crossings along the +x ray; a row with an odd
/// crossing count for some object reports that object as non-watertight.
pub fn solid_voxelize(
    objects: &[(u8, &TriangleMesh)],
    frame: GridFrame,
) -> Result<OccupancyGrid, EvalError> {
    let projected: Vec<(u8, Vec<ProjectedTriangle>)> = objects
        .iter()
        .map(|(id, mesh)| {
            let tris = (0..mesh.triangles.len())
                .filter_map(|t| {
                    let [p0, p1, p2] = mesh.triangle_vertices(t);
                    ProjectedTriangle::new(p0, p1, p2)
                })
                .collect();
            (*id, tris)
        })
        .collect();

    let nx = frame.nx();
    let vs = frame.voxel_size as f64;
    let ox = frame.origin[0] as f64;
    let mut occupied = vec![false; frame.voxel_count()];

    occupied
        .par_chunks_mut(nx)
        .enumerate()
        .try_for_each(|(row, out)| {
            let j = row % frame.ny();
            let k = row / frame.ny();
            let q = [
                frame.origin[1] as f64 + j as f64 * vs,
                frame.origin[2] as f64 + k as f64 * vs,
            ];
            let mut crossings = Vec::new();
            for (id, tris) in &projected {
                crossings.clear();
                for tri in tris {
                    if let Some(x) = tri.crossing(q) {
                        crossings.push(x);
                    }
                }
                if crossings.len() % 2 == 1 {
                    return Err(EvalError::NonWatertight { object_id: *id });
                }
                crossings.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                // A center is inside when an odd number of crossings lie
                // strictly in front of it.
                let mut next = 0;
                let mut inside = false;
                for (i, cell) in out.iter_mut().enumerate() {
                    let x = ox + i as f64 * vs;
                    while next < crossings.len() && crossings[next] < x {
                        inside = !inside;
                        next += 1;
                    }
                    *cell |= inside;
                }
            }
            Ok(())
        })?;

    Ok(OccupancyGrid { frame, occupied })
}

/// Per-pixel thickness error statistics over the pixels where ground truth
/// is informative (mask != 0 and gt above [`MIN_EVAL_THICKNESS`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics2D {
    pub abs_rel: f64,
    pub sqr_rel: f64,
    pub rmse_linear: f64,
    pub rmse_log: f64,
    pub n_pixels: usize,
}

pub fn metrics_2d(
    pred: &FloatMap,
    gt: &FloatMap,
    mask: &MaskMap,
) -> Result<Metrics2D, EvalError> {
    let dims = (gt.width(), gt.height());
    if (pred.width(), pred.height()) != dims {
        return Err(EvalError::ImageDimsMismatch {
            a: (pred.width(), pred.height()),
            b: dims,
        });
    }
    if (mask.width(), mask.height()) != dims {
        return Err(EvalError::ImageDimsMismatch {
            a: (mask.width(), mask.height()),
            b: dims,
        });
    }
    let mut n = 0usize;
    let mut sum_abs_rel = 0.0f64;
    let mut sum_sqr_rel = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut sum_log_sq = 0.0f64;
    for v in 0..dims.1 {
        for u in 0..dims.0 {
            if mask.get(u, v) == 0 {
                continue;
            }
            let t = gt.get(u, v) as f64;
            if !(t > MIN_EVAL_THICKNESS) {
                continue;
            }
            let t_hat = pred.get(u, v) as f64;
            let diff = t - t_hat;
            sum_abs_rel += diff.abs() / t;
            sum_sqr_rel += diff * diff / t;
            sum_sq += diff * diff;
            let log_diff = t.ln() - t_hat.max(MIN_EVAL_THICKNESS).ln();
            sum_log_sq += log_diff * log_diff;
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::NoValidPixels);
    }
    let nf = n as f64;
    Ok(Metrics2D {
        abs_rel: sum_abs_rel / nf,
        sqr_rel: sum_sqr_rel / nf,
        rmse_linear: (sum_sq / nf).sqrt(),
        rmse_log: (sum_log_sq / nf).sqrt(),
        n_pixels: n,
    })
}

/// Voxel-level confusion counts and the derived ratios. Degenerate
/// denominators yield 0 (empty reconstruction against nonempty ground truth
/// scores zero precision, not NaN).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics3D {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

pub fn metrics_3d(recon: &OccupancyGrid, gt: &OccupancyGrid) -> Result<Metrics3D, EvalError> {
    if recon.frame != gt.frame {
        return Err(EvalError::GridFrameMismatch {
            a: recon.frame,
            b: gt.frame,
        });
    }
    const CHUNK: usize = 1 << 16;
    let (tp, fp, fnn, tn) = recon
        .occupied
        .par_chunks(CHUNK)
        .zip(gt.occupied.par_chunks(CHUNK))
        .map(|(r, g)| {
            let mut counts = (0u64, 0u64, 0u64, 0u64);
            for (&r, &g) in r.iter().zip(g) {
                match (r, g) {
                    (true, true) => counts.0 += 1,
                    (true, false) => counts.1 += 1,
                    (false, true) => counts.2 += 1,
                    (false, false) => counts.3 += 1,
                }
            }
            counts
        })
        .reduce(
            || (0, 0, 0, 0),
            |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3),
        );
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(Metrics3D {
        iou: ratio(tp, tp + fp + fnn),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fnn),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fnn,
        true_negatives: tn,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub frame_index: usize,
    pub metrics: Metrics3D,
    /// Mean of the per-frame metric over rows up to and including this one.
    pub mean_iou: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

/// Integrates frames in order, scoring the binarized grid against ground
/// truth after each one. Rows carry both the per-frame metric and its
/// running mean, since "averaged over a sequence" can mean either.
pub fn convergence_curves(
    frames: &[FrameBundle],
    intrinsics: &CameraIntrinsics,
    grid: &mut TsdfGrid,
    gt: &OccupancyGrid,
    config: &FusionConfig,
) -> Result<Vec<ConvergenceRow>, EvalError> {
    let mut rows = Vec::with_capacity(frames.len());
    let mut sums = (0.0f64, 0.0f64, 0.0f64);
    for frame in frames {
        integrate_frame(grid, frame, intrinsics, config)?;
        let metrics = metrics_3d(&occupancy_from_grid(grid, config), gt)?;
        sums.0 += metrics.iou;
        sums.1 += metrics.precision;
        sums.2 += metrics.recall;
        let n = (rows.len() + 1) as f64;
        rows.push(ConvergenceRow {
            frame_index: frame.frame_index,
            metrics,
            mean_iou: sums.0 / n,
            mean_precision: sums.1 / n,
            mean_recall: sums.2 / n,
        });
    }
    Ok(rows)
}

/// Corner offsets of each exposed face, wound counter-clockwise seen from
/// outside the voxel.
const FACES: [([i64; 3], [[usize; 3]; 4]); 6] = [
    ([1, 0, 0], [[1, 0, 0], [1, 1, 0], [1, 1, 1], [1, 0, 1]]),
    ([-1, 0, 0], [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 0]]),
    ([0, 1, 0], [[0, 1, 0], [0, 1, 1], [1, 1, 1], [1, 1, 0]]),
    ([0, -1, 0], [[0, 0, 0], [1, 0, 0], [1, 0, 1], [0, 0, 1]]),
    ([0, 0, 1], [[0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]),
    ([0, 0, -1], [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 0, 0]]),
];

/// Emits two triangles per face between an occupied voxel and a free or
/// out-of-grid neighbor. Vertices sit on the voxel corner lattice and are
/// shared; emission order is the linear voxel scan, so output is
/// deterministic.
pub fn extract_blocky_surface(occ: &OccupancyGrid) -> TriangleMesh {
    let frame = &occ.frame;
    let vs = frame.voxel_size as f64;
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut corner_ids: HashMap<(usize, usize, usize), u32> = HashMap::new();

    let mut corner = |key: (usize, usize, usize), vertices: &mut Vec<Vector3<f64>>| -> u32 {
        *corner_ids.entry(key).or_insert_with(|| {
            let id = vertices.len() as u32;
            vertices.push(Vector3::new(
                frame.origin[0] as f64 + (key.0 as f64 - 0.5) * vs,
                frame.origin[1] as f64 + (key.1 as f64 - 0.5) * vs,
                frame.origin[2] as f64 + (key.2 as f64 - 0.5) * vs,
            ));
            id
        })
    };

    for linear in 0..frame.voxel_count() {
        if !occ.occupied[linear] {
            continue;
        }
        let (i, j, k) = frame.unravel(linear);
        for (normal, corners) in &FACES {
            if occ.at(
                i as i64 + normal[0],
                j as i64 + normal[1],
                k as i64 + normal[2],
            ) {
                continue;
            }
            let ids: Vec<u32> = corners
                .iter()
                .map(|c| corner((i + c[0], j + c[1], k + c[2]), &mut vertices))
                .collect();
            triangles.push([ids[0], ids[1], ids[2]]);
            triangles.push([ids[0], ids[2], ids[3]]);
        }
    }

    let mesh = TriangleMesh::new(vertices, triangles, false).expect("indices are built in range");
    let watertight = mesh.is_closed_manifold();
    TriangleMesh {
        watertight_hint: watertight,
        ..mesh
    }
}
