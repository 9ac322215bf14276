//! Volumetric reconstruction from rendered RGB-D: ray-traced depth and
//! per-object thickness images, fused into a thickness-enhanced TSDF and
//! evaluated against solid-voxelized ground truth.

// Validation checks are written as !(x > 0.0) on purpose: the negation also
// rejects NaN, which x <= 0.0 would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demo;
pub mod eval;
pub mod frame;
pub mod fusion;
pub mod geometry;
pub mod image;
pub mod io;
pub mod mesh;
pub mod providers;
pub mod render;

pub use eval::{
    convergence_curves, extract_blocky_surface, metrics_2d, metrics_3d, solid_voxelize,
    ConvergenceRow, EvalError, Metrics2D, Metrics3D, OccupancyGrid,
};
pub use frame::{FrameBundle, FrameError};
pub use fusion::{
    fuse_voxel, integrate_frame, occupancy_from_grid, phi_depth_only, phi_thickness,
    FusionConfig, FusionError, FusionMode, GridFrame, IntegrationStats, TsdfGrid,
};
pub use geometry::{CameraIntrinsics, GeometryError, Pose, Ray};
pub use image::{FloatMap, ImageError, MaskMap};
pub use mesh::{MeshError, TriangleMesh};
pub use providers::{
    compose_thickness_frame, expand_bbox_4_3, external_provider, extract_object_patches,
    fill_depth_holes, fit_mean_baseline, normalize_depth_patch, oracle_provider, predict_mean,
    MeanThicknessModel, ObjectPatch, PixelRect, ProviderError, ThicknessClaim,
};
pub use render::{render_frame_bundle, render_view, RenderError, RenderedView, Scene};
