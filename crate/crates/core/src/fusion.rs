//! Thickness-enhanced TSDF, the depth-only baseline, and weighted
//! multi-frame integration into a dense voxel grid.

use crate::frame::{FrameBundle, FrameError};
use crate::geometry::CameraIntrinsics;
use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

/// Voxels processed per work unit. Fixed so results do not depend on the
/// number of workers.
const CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    Enhanced,
    DepthOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct FusionConfig {
    /// Truncation distance in meters.
    pub tau: f64,
    pub mode: FusionMode,
    /// Per-voxel weight cap.
    pub max_weight: u32,
    /// Voxels with weight > 0 and phi below this count as occupied.
    pub occupancy_threshold: f32,
}

impl FusionConfig {
    pub fn new(
        tau: f64,
        mode: FusionMode,
        max_weight: u32,
        occupancy_threshold: f32,
    ) -> Result<Self, FusionError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(FusionError::InvalidConfig(format!(
                "tau must be positive and finite, got {tau}"
            )));
        }
        if max_weight == 0 {
            return Err(FusionError::InvalidConfig(
                "max_weight must be at least 1".into(),
            ));
        }
        if !(occupancy_threshold > -1.0 && occupancy_threshold < 1.0) {
            return Err(FusionError::InvalidConfig(format!(
                "occupancy_threshold must lie in (-1, 1), got {occupancy_threshold}"
            )));
        }
        Ok(Self {
            tau,
            mode,
            max_weight,
            occupancy_threshold,
        })
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau: 0.03,
            mode: FusionMode::Enhanced,
            max_weight: 100,
            occupancy_threshold: 0.0,
        }
    }
}

/// Placement of a voxel lattice in world space. Two grids are comparable
/// only when their frames are identical.
///
/// `origin` is the world position of the center of voxel (0,0,0); linear
/// storage order is x-fastest. Parameters are kept in f32 so grid files
/// round-trip losslessly; arithmetic lifts them to f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFrame {
    pub dims: [u32; 3],
    pub voxel_size: f32,
    pub origin: [f32; 3],
}

impl GridFrame {
    pub fn new(dims: [u32; 3], voxel_size: f32, origin: [f32; 3]) -> Result<Self, FusionError> {
        if dims.contains(&0) {
            return Err(FusionError::InvalidGrid(format!(
                "dims must all be positive, got {dims:?}"
            )));
        }
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(FusionError::InvalidGrid(format!(
                "voxel_size must be positive and finite, got {voxel_size}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(FusionError::InvalidGrid(format!(
                "origin must be finite, got {origin:?}"
            )));
        }
        let count = dims.iter().map(|&d| d as u128).product::<u128>();
        if count > (1 << 31) {
            return Err(FusionError::InvalidGrid(format!(
                "{} voxels exceed the supported size",
                count
            )));
        }
        Ok(Self {
            dims,
            voxel_size,
            origin,
        })
    }

    /// Smallest grid whose voxel centers start at `min` and whose span
    /// covers `max`.
    pub fn covering(
        min: Vector3<f64>,
        max: Vector3<f64>,
        voxel_size: f32,
    ) -> Result<Self, FusionError> {
        if !(voxel_size > 0.0) {
            return Err(FusionError::InvalidGrid(format!(
                "voxel_size must be positive, got {voxel_size}"
            )));
        }
        let vs = voxel_size as f64;
        let mut dims = [0u32; 3];
        for a in 0..3 {
            let extent = max[a] - min[a];
            if !extent.is_finite() || extent < 0.0 {
                return Err(FusionError::InvalidGrid(format!(
                    "bounds are inverted or non-finite on axis {a}: {} .. {}",
                    min[a], max[a]
                )));
            }
            dims[a] = ((extent / vs).ceil() as u32).max(1);
        }
        let half = vs / 2.0;
        Self::new(
            dims,
            voxel_size,
            [
                (min.x + half) as f32,
                (min.y + half) as f32,
                (min.z + half) as f32,
            ],
        )
    }

    pub fn nx(&self) -> usize {
        self.dims[0] as usize
    }

    pub fn ny(&self) -> usize {
        self.dims[1] as usize
    }

    pub fn nz(&self) -> usize {
        self.dims[2] as usize
    }

    pub fn voxel_count(&self) -> usize {
        self.nx() * self.ny() * self.nz()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx() && j < self.ny() && k < self.nz());
        (k * self.ny() + j) * self.nx() + i
    }

    pub fn unravel(&self, linear: usize) -> (usize, usize, usize) {
        let i = linear % self.nx();
        let j = (linear / self.nx()) % self.ny();
        let k = linear / (self.nx() * self.ny());
        (i, j, k)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        let vs = self.voxel_size as f64;
        Vector3::new(
            self.origin[0] as f64 + i as f64 * vs,
            self.origin[1] as f64 + j as f64 * vs,
            self.origin[2] as f64 + k as f64 * vs,
        )
    }
}

/// Dense TSDF volume. Never-updated voxels hold phi = 1 (free-space prior)
/// and weight = 0, which excludes them from occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfGrid {
    pub frame: GridFrame,
    pub phi: Vec<f32>,
    pub weight: Vec<f32>,
}

impl TsdfGrid {
    pub fn new(frame: GridFrame) -> Self {
        let n = frame.voxel_count();
        Self {
            frame,
            phi: vec![1.0; n],
            weight: vec![0.0; n],
        }
    }

    /// Rebuilds a grid from raw storage, validating payload lengths.
    pub fn from_parts(
        frame: GridFrame,
        phi: Vec<f32>,
        weight: Vec<f32>,
    ) -> Result<Self, FusionError> {
        let n = frame.voxel_count();
        if phi.len() != n || weight.len() != n {
            return Err(FusionError::InvalidGrid(format!(
                "expected {n} voxels, got {} phi and {} weight values",
                phi.len(),
                weight.len()
            )));
        }
        Ok(Self { frame, phi, weight })
    }
}

/// Thickness-enhanced TSDF profile along a ray: the max of a front and a
/// back clamped linear field. Piecewise it reproduces the five-case
/// definition (1 ahead of the surface, a linear ramp through the front
/// crossing at z = d, -1 inside, a rising ramp through the back crossing at
/// z = d + t, 1 behind) whenever t >= 2 tau, and stays total and bounded
/// when the two ramps overlap.
pub fn phi_thickness(z: f64, d: f64, t: f64, tau: f64) -> f64 {
    let front = ((d - z) / tau).clamp(-1.0, 1.0);
    let back = ((d + t - z) / (-tau)).clamp(-1.0, 1.0);
    front.max(back)
}

/// Depth-only TSDF: the front ramp alone. Returns None behind the
/// truncation band (z > d + tau) where a depth camera observes nothing;
/// unobserved space is never carved, so fused surfaces stay hollow shells.
pub fn phi_depth_only(z: f64, d: f64, tau: f64) -> Option<f64> {
    if z > d + tau {
        None
    } else {
        Some(((d - z) / tau).clamp(-1.0, 1.0))
    }
}

/// Running weighted average in f32. The first update (old_weight = 0)
/// replaces the stored free-space prior; the weight saturates at
/// `max_weight`.
pub fn fuse_voxel(old_phi: f32, old_weight: f32, new_phi: f32, max_weight: u32) -> (f32, f32) {
    let phi = (old_phi * old_weight + new_phi) / (old_weight + 1.0);
    let weight = (old_weight + 1.0).min(max_weight as f32);
    (phi, weight)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub voxels_updated: usize,
}

/// Projects every voxel center into the frame and folds the per-view TSDF
/// value into the grid. Voxels behind the camera, outside the image, or at
/// pixels with missing depth are skipped. In enhanced mode pixels with zero
/// thickness (background, untracked surfaces) fall back to depth-only.
///
/// Voxels are partitioned into fixed-size chunks; each voxel is written by
/// exactly one worker, so the result does not depend on worker count.
pub fn integrate_frame(
    grid: &mut TsdfGrid,
    frame: &FrameBundle,
    intrinsics: &CameraIntrinsics,
    config: &FusionConfig,
) -> Result<IntegrationStats, FusionError> {
    frame.check_intrinsics(intrinsics)?;
    let gf = grid.frame;
    let width = intrinsics.width as f64;
    let height = intrinsics.height as f64;

    let voxels_updated = grid
        .phi
        .par_chunks_mut(CHUNK)
        .zip(grid.weight.par_chunks_mut(CHUNK))
        .enumerate()
        .map(|(chunk_index, (phis, weights))| {
            let base = chunk_index * CHUNK;
            let mut updated = 0usize;
            for (offset, (phi, weight)) in phis.iter_mut().zip(weights.iter_mut()).enumerate() {
                let (i, j, k) = gf.unravel(base + offset);
                let p_cam = frame.pose.world_to_camera(&gf.voxel_center(i, j, k));
                let Ok(([u_c, v_c], z)) = intrinsics.project(&p_cam) else {
                    continue;
                };
                if u_c < 0.0 || u_c >= width || v_c < 0.0 || v_c >= height {
                    continue;
                }
                let (u, v) = (u_c as usize, v_c as usize);
                let d = frame.depth.get(u, v) as f64;
                if d.is_nan() {
                    continue;
                }
                let t = frame.thickness.get(u, v) as f64;
                let new_phi = if config.mode == FusionMode::Enhanced && t > 0.0 {
                    phi_thickness(z, d, t, config.tau)
                } else {
                    match phi_depth_only(z, d, config.tau) {
                        Some(value) => value,
                        None => continue,
                    }
                };
                let (p, w) = fuse_voxel(*phi, *weight, new_phi as f32, config.max_weight);
                *phi = p;
                *weight = w;
                updated += 1;
            }
            updated
        })
        .sum();

    Ok(IntegrationStats { voxels_updated })
}

/// Binarizes a fused grid: occupied means observed (weight > 0) with phi
/// below the threshold.
pub fn occupancy_from_grid(grid: &TsdfGrid, config: &FusionConfig) -> crate::eval::OccupancyGrid {
    let occupied = grid
        .phi
        .iter()
        .zip(&grid.weight)
        .map(|(&phi, &w)| w > 0.0 && phi < config.occupancy_threshold)
        .collect();
    crate::eval::OccupancyGrid {
        frame: grid.frame,
        occupied,
    }
}
