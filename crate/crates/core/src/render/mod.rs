//! Ray-traced depth, per-object thickness, and instance masks.
//!
//! Thickness at a pixel is the camera-Z extent between the first front-facing
//! hit of an object and that same object's next hit behind it, which must be
//! back-facing. Anything else (open mesh, inverted winding, camera inside the
//! object) renders as zero thickness and bumps the warning counter instead of
//! failing the frame.

pub mod bvh;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::frame::FrameBundle;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::image::{FloatMap, MaskMap};
use crate::io::{load_mesh, Background, IoError, SceneDescription};
use crate::mesh::TriangleMesh;
use bvh::{Bvh, Facing, RayHit};

/// Hits closer than this along the ray are ignored (self-intersection guard).
const RAY_EPS: f64 = 1e-6;
/// Hits of one object closer together than this with equal facing are the
/// same surface seen through a shared edge or vertex.
const MERGE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("view index {view} out of range, trajectory has {count} poses")]
    ViewOutOfRange { view: usize, count: usize },
    #[error(transparent)]
    Io(#[from] IoError),
}

pub struct Instance {
    pub id: u8,
    /// World-space mesh (object pose already applied).
    pub mesh: TriangleMesh,
    bvh: Bvh,
}

pub struct Scene {
    pub camera: CameraIntrinsics,
    pub background: Option<Background>,
    pub trajectory: Vec<Pose>,
    pub instances: Vec<Instance>,
}

impl Scene {
    /// Builds a scene from already world-space meshes.
    pub fn assemble(
        camera: CameraIntrinsics,
        background: Option<Background>,
        trajectory: Vec<Pose>,
        objects: Vec<(u8, TriangleMesh)>,
    ) -> Self {
        let instances = objects
            .into_iter()
            .map(|(id, mesh)| Instance {
                id,
                bvh: Bvh::build(&mesh),
                mesh,
            })
            .collect();
        Self {
            camera,
            background,
            trajectory,
            instances,
        }
    }

    /// Loads every referenced mesh and applies its object pose.
    pub fn from_description(desc: &SceneDescription) -> Result<Self, IoError> {
        let mut objects = Vec::with_capacity(desc.objects.len());
        for obj in &desc.objects {
            let mesh = load_mesh(&desc.mesh_path(obj))?.transformed(&obj.pose);
            objects.push((obj.id, mesh));
        }
        Ok(Self::assemble(
            desc.camera,
            desc.background,
            desc.trajectory.clone(),
            objects,
        ))
    }

    /// Union AABB of the object meshes (the background plane is unbounded and
    /// excluded). None when the scene has no triangles.
    pub fn object_bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut bounds: Option<(Vector3<f64>, Vector3<f64>)> = None;
        for inst in &self.instances {
            if let Some((lo, hi)) = inst.mesh.aabb() {
                bounds = Some(match bounds {
                    None => (lo, hi),
                    Some((a, b)) => (a.inf(&lo), b.sup(&hi)),
                });
            }
        }
        bounds
    }
}

pub struct RenderedView {
    /// Camera-Z depth of the first surface, NaN where nothing is hit.
    pub depth: FloatMap,
    /// Camera-Z extent of the first-hit object, 0 for background and misses.
    pub thickness: FloatMap,
    /// First-hit object id, 0 for background and misses.
    pub masks: MaskMap,
    /// Pixels where the surface pairing behind the first hit was malformed.
    pub warnings: u64,
}

struct TaggedHit {
    s: f64,
    facing: Facing,
    obj: usize,
}

/// Strict ordering: distance, then front before back, then instance index.
fn hit_rank(h: &TaggedHit) -> (f64, u8, usize) {
    (h.s, (h.facing == Facing::Back) as u8, h.obj)
}

pub fn render_view(scene: &Scene, view: usize) -> Result<RenderedView, RenderError> {
    let pose = scene
        .trajectory
        .get(view)
        .ok_or(RenderError::ViewOutOfRange {
            view,
            count: scene.trajectory.len(),
        })?;
    let (w, h) = (scene.camera.width, scene.camera.height);
    let mut depth = FloatMap::new(w, h, f32::NAN).expect("validated dims");
    let mut thickness = FloatMap::new(w, h, 0.0).expect("validated dims");
    let mut masks = MaskMap::new(w, h).expect("validated dims");

    let warnings = depth
        .data_mut()
        .par_chunks_mut(w)
        .zip(thickness.data_mut().par_chunks_mut(w))
        .zip(masks.data_mut().par_chunks_mut(w))
        .enumerate()
        .map(|(v, ((depth_row, thick_row), mask_row))| {
            let mut row_warnings = 0u64;
            let mut hits: Vec<TaggedHit> = Vec::new();
            let mut buf: Vec<RayHit> = Vec::new();
            for u in 0..w {
                let ray = scene
                    .camera
                    .ray_for_pixel(pose, u, v)
                    .expect("pixel within image");
                hits.clear();
                for (obj, inst) in scene.instances.iter().enumerate() {
                    buf.clear();
                    inst.bvh.all_hits(&inst.mesh, &ray, RAY_EPS, &mut buf);
                    hits.extend(buf.iter().map(|h| TaggedHit {
                        s: h.s,
                        facing: h.facing,
                        obj,
                    }));
                }
                hits.sort_by(|a, b| hit_rank(a).partial_cmp(&hit_rank(b)).unwrap());
                hits.dedup_by(|later, kept| {
                    later.obj == kept.obj
                        && later.facing == kept.facing
                        && later.s - kept.s < MERGE_EPS
                });

                let plane_s = scene.background.and_then(|bg| {
                    if ray.direction.z.abs() < 1e-12 {
                        return None;
                    }
                    let s = (bg.plane_z - ray.origin.z) / ray.direction.z;
                    (s > RAY_EPS).then_some(s)
                });

                // Ties go to the object so contact points keep their mask id.
                let first = hits.first();
                let plane_first = match (plane_s, first) {
                    (Some(ps), Some(h)) => ps < h.s,
                    (Some(_), None) => true,
                    (None, _) => false,
                };

                if plane_first {
                    depth_row[u] = (plane_s.unwrap() * ray.z_scale) as f32;
                    continue;
                }
                let Some(first) = first else { continue };
                depth_row[u] = (first.s * ray.z_scale) as f32;
                mask_row[u] = scene.instances[first.obj].id;
                let exit = hits
                    .iter()
                    .skip(1)
                    .find(|h| h.obj == first.obj);
                match (first.facing, exit) {
                    (Facing::Front, Some(exit)) if exit.facing == Facing::Back => {
                        thick_row[u] = ((exit.s - first.s) * ray.z_scale) as f32;
                    }
                    _ => row_warnings += 1,
                }
            }
            row_warnings
        })
        .sum();

    Ok(RenderedView {
        depth,
        thickness,
        masks,
        warnings,
    })
}

/// Renders a view and packages it with its pose for fusion.
pub fn render_frame_bundle(scene: &Scene, view: usize) -> Result<FrameBundle, RenderError> {
    let rendered = render_view(scene, view)?;
    let pose = scene.trajectory[view];
    Ok(
        FrameBundle::new(rendered.depth, rendered.thickness, rendered.masks, pose, view)
            .expect("rendered maps are consistent"),
    )
}
