//! Thickness sources for fusion: the exact renderer output, a single-scalar
//! mean baseline, and externally predicted patch files, plus the patch
//! preprocessing (4:3 crops, hole filling, per-region mean removal) shared by
//! anything that consumes depth patches.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::frame::FrameBundle;
use crate::image::{FloatMap, MaskMap};
use crate::io::{read_float_map, IoError};
use crate::render::{render_view, RenderError, Scene};

/// Jacobi relaxation stops once no hole pixel moves by more than this.
const FILL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("bounding box {x},{y} {w}x{h} is empty or exceeds the {width}x{height} image")]
    BadBbox {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("depth map has no finite pixels to fill holes from")]
    AllHoles,
    #[error("training frames contain no masked pixels with positive thickness")]
    NoTrainingPixels,
    #[error("patch {path} is {got_w}x{got_h} but its manifest bbox is {want_w}x{want_h}")]
    PatchDimMismatch {
        path: PathBuf,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelRect {
    fn fits(&self, width: usize, height: usize) -> bool {
        self.w > 0
            && self.h > 0
            && self.x + self.w <= width
            && self.y + self.h <= height
    }
}

/// Network-style input crop: normalized depth plus the object silhouette
/// inside an expanded bounding box.
pub struct ObjectPatch {
    pub object_id: u8,
    pub bbox: PixelRect,
    /// The image was too small to reach a 4:3 box and the crop was truncated.
    pub clipped: bool,
    pub depth: FloatMap,
    pub silhouette: MaskMap,
}

/// One instance's bid for pixels of the composed thickness frame.
pub struct ThicknessClaim {
    pub object_id: u8,
    pub bbox: PixelRect,
    /// Predicted thickness, bbox-sized.
    pub thickness: FloatMap,
    /// Nonzero marks pixels the instance claims.
    pub silhouette: MaskMap,
    /// The instance's surface depth, used to rank overlapping claims.
    pub depth: FloatMap,
}

/// Smallest rectangle with a 4:3 aspect (after integer rounding) that
/// contains `tight`, grown symmetrically and pushed back inside the image if
/// the growth crosses a border. Returns the rect and whether it had to be
/// clipped because the image itself is too small.
pub fn expand_bbox_4_3(
    tight: PixelRect,
    width: usize,
    height: usize,
) -> Result<(PixelRect, bool), ProviderError> {
    if !tight.fits(width, height) {
        return Err(ProviderError::BadBbox {
            x: tight.x,
            y: tight.y,
            w: tight.w,
            h: tight.h,
            width,
            height,
        });
    }
    let (mut w, mut h) = (tight.w, tight.h);
    if 3 * w <= 4 * h {
        w = (4 * h).div_ceil(3);
    } else {
        h = (3 * w).div_ceil(4);
    }
    let mut clipped = false;
    let mut place = |tight_pos: usize, tight_len: usize, len: &mut usize, limit: usize| {
        if *len > limit {
            *len = limit;
            clipped = true;
            return 0;
        }
        let shifted = tight_pos.saturating_sub((*len - tight_len) / 2);
        shifted.min(limit - *len)
    };
    let x = place(tight.x, tight.w, &mut w, width);
    let y = place(tight.y, tight.h, &mut h, height);
    Ok((PixelRect { x, y, w, h }, clipped))
}

/// Shifts each of the two silhouette groups to zero mean. A group that is
/// empty is left alone. Means are accumulated in f64.
pub fn normalize_depth_patch(depth: &FloatMap, silhouette: &MaskMap) -> FloatMap {
    assert_eq!(depth.width(), silhouette.width());
    assert_eq!(depth.height(), silhouette.height());
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (d, m) in depth.data().iter().zip(silhouette.data()) {
        let g = (*m != 0) as usize;
        sums[g] += *d as f64;
        counts[g] += 1;
    }
    let means = [0, 1].map(|g| {
        if counts[g] == 0 {
            0.0
        } else {
            sums[g] / counts[g] as f64
        }
    });
    let data = depth
        .data()
        .iter()
        .zip(silhouette.data())
        .map(|(d, m)| (*d as f64 - means[(*m != 0) as usize]) as f32)
        .collect();
    FloatMap::from_data(depth.width(), depth.height(), data).expect("dims preserved")
}

/// Replaces every NaN by relaxing a 4-neighbor average over the hole region
/// until it settles, leaving finite pixels untouched. Output values stay
/// within the finite input's min/max.
pub fn fill_depth_holes(depth: &FloatMap) -> Result<FloatMap, ProviderError> {
    let (w, h) = (depth.width(), depth.height());
    let mut finite_sum = 0.0f64;
    let mut finite_count = 0usize;
    for d in depth.data() {
        if d.is_finite() {
            finite_sum += *d as f64;
            finite_count += 1;
        }
    }
    if finite_count == 0 {
        return Err(ProviderError::AllHoles);
    }
    if finite_count == depth.data().len() {
        return Ok(depth.clone());
    }
    let seed = finite_sum / finite_count as f64;
    let holes: Vec<usize> = depth
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, d)| (!d.is_finite()).then_some(i))
        .collect();
    let mut cur: Vec<f64> = depth
        .data()
        .iter()
        .map(|d| if d.is_finite() { *d as f64 } else { seed })
        .collect();
    let mut next = cur.clone();
    loop {
        let mut max_change = 0.0f64;
        for &i in &holes {
            let (x, y) = (i % w, i / w);
            let mut sum = 0.0;
            let mut n = 0;
            if x > 0 {
                sum += cur[i - 1];
                n += 1;
            }
            if x + 1 < w {
                sum += cur[i + 1];
                n += 1;
            }
            if y > 0 {
                sum += cur[i - w];
                n += 1;
            }
            if y + 1 < h {
                sum += cur[i + w];
                n += 1;
            }
            let v = sum / n as f64;
            max_change = max_change.max((v - cur[i]).abs());
            next[i] = v;
        }
        for &i in &holes {
            cur[i] = next[i];
        }
        if max_change < FILL_TOLERANCE {
            break;
        }
    }
    let data = depth
        .data()
        .iter()
        .zip(&cur)
        .map(|(d, v)| if d.is_finite() { *d } else { *v as f32 })
        .collect();
    Ok(FloatMap::from_data(w, h, data).expect("dims preserved"))
}

fn crop_float(map: &FloatMap, rect: PixelRect) -> FloatMap {
    let mut data = Vec::with_capacity(rect.w * rect.h);
    for v in rect.y..rect.y + rect.h {
        data.extend_from_slice(&map.row(v)[rect.x..rect.x + rect.w]);
    }
    FloatMap::from_data(rect.w, rect.h, data).expect("rect validated")
}

fn crop_mask_to(mask: &MaskMap, rect: PixelRect, id: u8) -> MaskMap {
    let mut out = MaskMap::new(rect.w, rect.h).expect("rect validated");
    for dv in 0..rect.h {
        for du in 0..rect.w {
            if mask.get(rect.x + du, rect.y + dv) == id {
                out.set(du, dv, 1);
            }
        }
    }
    out
}

/// Runs the whole patch pipeline for every instance present in the masks:
/// tight box, 4:3 expansion, hole filling inside the crop, then per-region
/// mean removal.
pub fn extract_object_patches(
    depth: &FloatMap,
    masks: &MaskMap,
) -> Result<Vec<ObjectPatch>, ProviderError> {
    let mut patches = Vec::new();
    for id in masks.instance_ids() {
        let mut lo = (usize::MAX, usize::MAX);
        let mut hi = (0usize, 0usize);
        for v in 0..masks.height() {
            for u in 0..masks.width() {
                if masks.get(u, v) == id {
                    lo = (lo.0.min(u), lo.1.min(v));
                    hi = (hi.0.max(u), hi.1.max(v));
                }
            }
        }
        let tight = PixelRect {
            x: lo.0,
            y: lo.1,
            w: hi.0 - lo.0 + 1,
            h: hi.1 - lo.1 + 1,
        };
        let (bbox, clipped) = expand_bbox_4_3(tight, masks.width(), masks.height())?;
        let silhouette = crop_mask_to(masks, bbox, id);
        let filled = fill_depth_holes(&crop_float(depth, bbox))?;
        patches.push(ObjectPatch {
            object_id: id,
            bbox,
            clipped,
            depth: normalize_depth_patch(&filled, &silhouette),
            silhouette,
        });
    }
    Ok(patches)
}

/// Ground-truth thickness straight from the renderer.
pub fn oracle_provider(scene: &Scene, view: usize) -> Result<FloatMap, RenderError> {
    Ok(render_view(scene, view)?.thickness)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanThicknessModel {
    pub mean_t: f64,
}

/// Single global mean over every masked pixel with positive thickness.
pub fn fit_mean_baseline(frames: &[FrameBundle]) -> Result<MeanThicknessModel, ProviderError> {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for frame in frames {
        for (t, m) in frame.thickness.data().iter().zip(frame.masks.data()) {
            if *m != 0 && *t > 0.0 {
                sum += *t as f64;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(ProviderError::NoTrainingPixels);
    }
    Ok(MeanThicknessModel {
        mean_t: sum / count as f64,
    })
}

/// Constant prediction inside every silhouette, zero outside.
pub fn predict_mean(model: &MeanThicknessModel, masks: &MaskMap) -> FloatMap {
    let t = model.mean_t as f32;
    let data = masks
        .data()
        .iter()
        .map(|m| if *m != 0 { t } else { 0.0 })
        .collect();
    FloatMap::from_data(masks.width(), masks.height(), data).expect("mask dims valid")
}

/// Merges per-instance claims into one frame. A pixel claimed by several
/// instances takes the one with the smallest depth there (the nearer object
/// occludes); depth ties and NaN depths fall back to the smaller object id,
/// so the result does not depend on claim order.
pub fn compose_thickness_frame(
    claims: &[ThicknessClaim],
    width: usize,
    height: usize,
) -> FloatMap {
    let mut out = FloatMap::new(width, height, 0.0).expect("caller dims valid");
    let mut winner_depth = vec![f64::INFINITY; width * height];
    let mut winner_id = vec![0u8; width * height];
    for claim in claims {
        assert!(claim.bbox.fits(width, height), "claim bbox out of bounds");
        assert_eq!(claim.thickness.width(), claim.bbox.w);
        assert_eq!(claim.thickness.height(), claim.bbox.h);
        for dv in 0..claim.bbox.h {
            for du in 0..claim.bbox.w {
                if claim.silhouette.get(du, dv) == 0 {
                    continue;
                }
                let (u, v) = (claim.bbox.x + du, claim.bbox.y + dv);
                let d = claim.depth.get(du, dv) as f64;
                let d = if d.is_nan() { f64::INFINITY } else { d };
                let i = v * width + u;
                let better = winner_id[i] == 0
                    || d < winner_depth[i]
                    || (d == winner_depth[i] && claim.object_id < winner_id[i]);
                if better {
                    winner_depth[i] = d;
                    winner_id[i] = claim.object_id;
                    out.set(u, v, claim.thickness.get(du, dv));
                }
            }
        }
    }
    out
}

#[derive(Deserialize)]
struct ManifestRow {
    frame: usize,
    object_id: u8,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    patch_path: String,
}

/// Reads predicted-thickness patches for one frame from a CSV manifest
/// (header `frame,object_id,x,y,w,h,patch_path`, paths relative to the
/// manifest) and composes them using the frame's masks and depth.
pub fn external_provider(
    manifest: &Path,
    frame_index: usize,
    depth: &FloatMap,
    masks: &MaskMap,
) -> Result<FloatMap, ProviderError> {
    let mut reader = csv::Reader::from_path(manifest)
        .map_err(|e| IoError::format(manifest, e.to_string()))?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut claims = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            IoError::parse(manifest, line, e.to_string())
        })?;
        if row.frame != frame_index {
            continue;
        }
        let bbox = PixelRect {
            x: row.x,
            y: row.y,
            w: row.w,
            h: row.h,
        };
        if !bbox.fits(depth.width(), depth.height()) {
            return Err(ProviderError::BadBbox {
                x: bbox.x,
                y: bbox.y,
                w: bbox.w,
                h: bbox.h,
                width: depth.width(),
                height: depth.height(),
            });
        }
        let path = base.join(&row.patch_path);
        let patch = read_float_map(&path)?;
        if patch.width() != bbox.w || patch.height() != bbox.h {
            return Err(ProviderError::PatchDimMismatch {
                path,
                got_w: patch.width(),
                got_h: patch.height(),
                want_w: bbox.w,
                want_h: bbox.h,
            });
        }
        claims.push(ThicknessClaim {
            object_id: row.object_id,
            bbox,
            thickness: patch,
            silhouette: crop_mask_to(masks, bbox, row.object_id),
            depth: crop_float(depth, bbox),
        });
    }
    Ok(compose_thickness_frame(
        &claims,
        depth.width(),
        depth.height(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{box_mesh, icosphere, write_tabletop_scene};
    use crate::geometry::{CameraIntrinsics, Pose};
    use crate::io::{write_float_map, SceneDescription};
    use crate::render::render_frame_bundle;
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};

    #[test]
    fn already_4_3_bbox_is_unchanged() {
        let tight = PixelRect {
            x: 5,
            y: 7,
            w: 40,
            h: 30,
        };
        let (rect, clipped) = expand_bbox_4_3(tight, 640, 480).unwrap();
        assert_eq!(rect, tight);
        assert!(!clipped);
    }

    #[test]
    fn square_bbox_widens_and_recenters() {
        let tight = PixelRect {
            x: 100,
            y: 100,
            w: 40,
            h: 40,
        };
        let (rect, clipped) = expand_bbox_4_3(tight, 640, 480).unwrap();
        // 40 * 4/3 rounds up to 54; growth of 14 shifts the origin left by 7.
        assert_eq!(
            rect,
            PixelRect {
                x: 93,
                y: 100,
                w: 54,
                h: 40
            }
        );
        assert!(!clipped);
    }

    #[test]
    fn tall_bbox_grows_downward() {
        let tight = PixelRect {
            x: 10,
            y: 10,
            w: 30,
            h: 100,
        };
        let (rect, _) = expand_bbox_4_3(tight, 640, 480).unwrap();
        assert_eq!(rect.h, 100);
        assert_eq!(rect.w, 134); // ceil(400 / 3)
        assert!((3 * rect.w) as i64 - (4 * rect.h) as i64 <= 3);
    }

    #[test]
    fn expansion_respects_image_borders() {
        let tight = PixelRect {
            x: 600,
            y: 440,
            w: 40,
            h: 40,
        };
        let (rect, clipped) = expand_bbox_4_3(tight, 640, 480).unwrap();
        assert!(!clipped);
        assert_eq!(rect.w, 54);
        assert_eq!(rect.x, 640 - 54);
        assert!(rect.y + rect.h <= 480);
        // Still contains the input.
        assert!(rect.x <= tight.x && rect.y <= tight.y);
    }

    #[test]
    fn tiny_image_clips_and_flags() {
        let tight = PixelRect {
            x: 5,
            y: 0,
            w: 40,
            h: 40,
        };
        let (rect, clipped) = expand_bbox_4_3(tight, 50, 40).unwrap();
        assert!(clipped);
        assert_eq!(
            rect,
            PixelRect {
                x: 0,
                y: 0,
                w: 50,
                h: 40
            }
        );
    }

    #[test]
    fn empty_or_outside_bbox_is_an_error() {
        let empty = PixelRect {
            x: 0,
            y: 0,
            w: 0,
            h: 10,
        };
        assert!(matches!(
            expand_bbox_4_3(empty, 100, 100),
            Err(ProviderError::BadBbox { .. })
        ));
        let outside = PixelRect {
            x: 90,
            y: 0,
            w: 20,
            h: 10,
        };
        assert!(matches!(
            expand_bbox_4_3(outside, 100, 100),
            Err(ProviderError::BadBbox { .. })
        ));
    }

    #[test]
    fn normalization_shifts_each_group_to_zero_mean() {
        let depth = FloatMap::from_data(3, 1, vec![2.0, 2.2, 3.0]).unwrap();
        let mut sil = MaskMap::new(3, 1).unwrap();
        sil.set(0, 0, 1);
        sil.set(1, 0, 1);
        let out = normalize_depth_patch(&depth, &sil);
        assert!((out.get(0, 0) - -0.1).abs() < 1e-6);
        assert!((out.get(1, 0) - 0.1).abs() < 1e-6);
        assert!(out.get(2, 0).abs() < 1e-6);
    }

    #[test]
    fn constant_patch_normalizes_to_zeros() {
        let depth = FloatMap::new(4, 4, 1.7).unwrap();
        let sil = MaskMap::new(4, 4).unwrap();
        let out = normalize_depth_patch(&depth, &sil);
        assert!(out.data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn normalized_group_means_vanish() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let depth = FloatMap::from_data(
            32,
            24,
            (0..32 * 24).map(|_| rng.gen_range(0.5..3.0)).collect(),
        )
        .unwrap();
        let mut sil = MaskMap::new(32, 24).unwrap();
        for v in 0..24 {
            for u in 0..32 {
                if rng.gen_bool(0.4) {
                    sil.set(u, v, 1);
                }
            }
        }
        let out = normalize_depth_patch(&depth, &sil);
        for group in [0u8, 1] {
            let vals: Vec<f64> = out
                .data()
                .iter()
                .zip(sil.data())
                .filter(|(_, m)| (**m != 0) == (group == 1))
                .map(|(v, _)| *v as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6, "group {group} mean {mean}");
        }
    }

    #[test]
    fn lone_hole_takes_its_neighborhood_value() {
        let mut depth = FloatMap::new(5, 5, 1.0).unwrap();
        depth.set(2, 2, f32::NAN);
        let out = fill_depth_holes(&depth).unwrap();
        assert_eq!(out.get(2, 2), 1.0);
    }

    #[test]
    fn hole_between_two_levels_lands_between_them() {
        let mut data = vec![1.0f32; 15];
        for v in 0..3 {
            data[v * 5 + 3] = 2.0;
            data[v * 5 + 4] = 2.0;
            data[v * 5 + 2] = f32::NAN;
        }
        let depth = FloatMap::from_data(5, 3, data).unwrap();
        let out = fill_depth_holes(&depth).unwrap();
        for v in 0..3 {
            let f = out.get(2, v);
            assert!(f > 1.0 && f < 2.0, "filled {f}");
        }
    }

    #[test]
    fn hole_free_map_comes_back_identical() {
        let depth = FloatMap::from_data(2, 2, vec![0.5, 1.5, 2.5, 3.5]).unwrap();
        let out = fill_depth_holes(&depth).unwrap();
        assert_eq!(out.data(), depth.data());
    }

    #[test]
    fn filling_respects_input_bounds_and_finite_pixels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut data: Vec<f32> = (0..24 * 18).map(|_| rng.gen_range(0.5..4.0)).collect();
        for px in &mut data {
            if rng.gen_bool(0.35) {
                *px = f32::NAN;
            }
        }
        data[0] = 0.5;
        let depth = FloatMap::from_data(24, 18, data).unwrap();
        let (lo, hi) = depth
            .data()
            .iter()
            .filter(|d| d.is_finite())
            .fold((f32::MAX, f32::MIN), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
        let out = fill_depth_holes(&depth).unwrap();
        for (a, b) in depth.data().iter().zip(out.data()) {
            if a.is_finite() {
                assert_eq!(a.to_bits(), b.to_bits());
            } else {
                assert!(*b >= lo && *b <= hi, "fill {b} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn all_nan_map_is_an_error() {
        let depth = FloatMap::new(4, 4, f32::NAN).unwrap();
        assert!(matches!(
            fill_depth_holes(&depth),
            Err(ProviderError::AllHoles)
        ));
    }

    fn frontal_sphere_scene() -> Scene {
        let camera = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let pose = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 2.0)).unwrap();
        Scene::assemble(
            camera,
            None,
            vec![Pose::identity()],
            vec![(1, icosphere(0.5, 3).transformed(&pose))],
        )
    }

    #[test]
    fn mean_baseline_fits_and_predicts_the_mean() {
        let thickness = FloatMap::from_data(2, 1, vec![1.0, 3.0]).unwrap();
        let depth = FloatMap::from_data(2, 1, vec![1.0, 1.0]).unwrap();
        let masks = MaskMap::from_data(2, 1, vec![1, 1]).unwrap();
        let frame =
            FrameBundle::new(depth, thickness, masks.clone(), Pose::identity(), 0).unwrap();
        let model = fit_mean_baseline(&[frame]).unwrap();
        assert_eq!(model.mean_t, 2.0);
        let pred = predict_mean(&model, &masks);
        assert_eq!(pred.data(), &[2.0, 2.0]);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let depth = FloatMap::new(2, 2, 1.0).unwrap();
        let thickness = FloatMap::new(2, 2, 0.0).unwrap();
        let masks = MaskMap::new(2, 2).unwrap();
        let frame = FrameBundle::new(depth, thickness, masks, Pose::identity(), 0).unwrap();
        assert!(matches!(
            fit_mean_baseline(&[frame]),
            Err(ProviderError::NoTrainingPixels)
        ));
    }

    #[test]
    fn sphere_mean_thickness_is_below_the_diameter() {
        let scene = frontal_sphere_scene();
        let frame = render_frame_bundle(&scene, 0).unwrap();
        let model = fit_mean_baseline(std::slice::from_ref(&frame)).unwrap();
        assert!(
            model.mean_t > 0.5 && model.mean_t < 1.0,
            "mean {}",
            model.mean_t
        );
    }

    #[test]
    fn mean_baseline_errs_more_than_the_oracle_on_a_sphere() {
        let scene = frontal_sphere_scene();
        let frame = render_frame_bundle(&scene, 0).unwrap();
        let model = fit_mean_baseline(std::slice::from_ref(&frame)).unwrap();
        let pred = predict_mean(&model, &frame.masks);
        let oracle = oracle_provider(&scene, 0).unwrap();
        let m_mean = crate::eval::metrics_2d(&pred, &frame.thickness, &frame.masks).unwrap();
        let m_oracle = crate::eval::metrics_2d(&oracle, &frame.thickness, &frame.masks).unwrap();
        assert_eq!(m_oracle.abs_rel, 0.0);
        assert!(m_mean.abs_rel > 0.0);
    }

    fn claim_from(
        object_id: u8,
        bbox: PixelRect,
        thickness: f32,
        depth: f32,
    ) -> ThicknessClaim {
        let mut sil = MaskMap::new(bbox.w, bbox.h).unwrap();
        for v in 0..bbox.h {
            for u in 0..bbox.w {
                sil.set(u, v, 1);
            }
        }
        ThicknessClaim {
            object_id,
            bbox,
            thickness: FloatMap::new(bbox.w, bbox.h, thickness).unwrap(),
            silhouette: sil,
            depth: FloatMap::new(bbox.w, bbox.h, depth).unwrap(),
        }
    }

    #[test]
    fn disjoint_claims_union_and_leave_zeros() {
        let a = claim_from(
            1,
            PixelRect {
                x: 0,
                y: 0,
                w: 2,
                h: 2,
            },
            0.3,
            1.0,
        );
        let b = claim_from(
            2,
            PixelRect {
                x: 4,
                y: 2,
                w: 2,
                h: 2,
            },
            0.7,
            2.0,
        );
        let out = compose_thickness_frame(&[a, b], 8, 6);
        assert_eq!(out.get(1, 1), 0.3);
        assert_eq!(out.get(4, 2), 0.7);
        assert_eq!(out.get(3, 3), 0.0);
    }

    #[test]
    fn no_claims_means_all_zero() {
        let out = compose_thickness_frame(&[], 4, 4);
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nearer_instance_wins_overlap_regardless_of_order() {
        let rect = PixelRect {
            x: 1,
            y: 1,
            w: 3,
            h: 3,
        };
        let near = claim_from(5, rect, 0.111, 1.0);
        let far = claim_from(2, rect, 0.999, 2.0);
        let ab = compose_thickness_frame(&[near, far], 6, 6);
        let near = claim_from(5, rect, 0.111, 1.0);
        let far = claim_from(2, rect, 0.999, 2.0);
        let ba = compose_thickness_frame(&[far, near], 6, 6);
        assert_eq!(ab.data(), ba.data());
        assert_eq!(ab.get(2, 2), 0.111);
    }

    #[test]
    fn composing_oracle_patches_reproduces_the_oracle_frame() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tabletop_scene(dir.path()).unwrap();
        let desc = SceneDescription::load(&path).unwrap();
        let scene = Scene::from_description(&desc).unwrap();
        let view = render_view(&scene, 3).unwrap();
        let mut claims = Vec::new();
        for patch in extract_object_patches(&view.depth, &view.masks).unwrap() {
            claims.push(ThicknessClaim {
                object_id: patch.object_id,
                bbox: patch.bbox,
                thickness: crop_float(&view.thickness, patch.bbox),
                silhouette: patch.silhouette,
                depth: crop_float(&view.depth, patch.bbox),
            });
        }
        assert_eq!(claims.len(), 3);
        let composed =
            compose_thickness_frame(&claims, view.thickness.width(), view.thickness.height());
        let bits = |m: &FloatMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&composed), bits(&view.thickness));
    }

    #[test]
    fn external_full_frame_patch_matches_the_oracle() {
        let scene = frontal_sphere_scene();
        let view = render_view(&scene, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_float_map(&dir.path().join("p0.pfm"), &view.thickness).unwrap();
        let manifest = dir.path().join("patches.csv");
        std::fs::write(
            &manifest,
            "frame,object_id,x,y,w,h,patch_path\n0,1,0,0,640,480,p0.pfm\n7,1,0,0,640,480,missing.pfm\n",
        )
        .unwrap();
        let out = external_provider(&manifest, 0, &view.depth, &view.masks).unwrap();
        let bits = |m: &FloatMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out), bits(&view.thickness));
    }

    #[test]
    fn missing_patch_file_error_names_the_path() {
        let depth = FloatMap::new(8, 6, 1.0).unwrap();
        let masks = MaskMap::new(8, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("patches.csv");
        std::fs::write(
            &manifest,
            "frame,object_id,x,y,w,h,patch_path\n0,1,0,0,4,3,gone.pfm\n",
        )
        .unwrap();
        let err = external_provider(&manifest, 0, &depth, &masks).unwrap_err();
        assert!(err.to_string().contains("gone.pfm"), "{err}");
    }

    #[test]
    fn patch_not_matching_bbox_is_an_error() {
        let depth = FloatMap::new(8, 6, 1.0).unwrap();
        let masks = MaskMap::new(8, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_float_map(
            &dir.path().join("p.pfm"),
            &FloatMap::new(2, 2, 0.5).unwrap(),
        )
        .unwrap();
        let manifest = dir.path().join("patches.csv");
        std::fs::write(
            &manifest,
            "frame,object_id,x,y,w,h,patch_path\n0,1,0,0,4,3,p.pfm\n",
        )
        .unwrap();
        assert!(matches!(
            external_provider(&manifest, 0, &depth, &masks),
            Err(ProviderError::PatchDimMismatch { .. })
        ));
    }

    #[test]
    fn patch_pipeline_produces_consistent_patches() {
        let camera = CameraIntrinsics::new(260.0, 260.0, 160.0, 120.0, 320, 240).unwrap();
        let pose = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.5)).unwrap();
        let scene = Scene::assemble(
            camera,
            None,
            vec![Pose::identity()],
            vec![(4, box_mesh(Vector3::new(0.3, 0.3, 0.2)).transformed(&pose))],
        );
        let view = render_view(&scene, 0).unwrap();
        let patches = extract_object_patches(&view.depth, &view.masks).unwrap();
        assert_eq!(patches.len(), 1);
        let p = &patches[0];
        assert_eq!(p.object_id, 4);
        assert!(!p.clipped);
        // 4:3 within a pixel of rounding.
        let (w, h) = (p.bbox.w as i64, p.bbox.h as i64);
        assert!((3 * w - 4 * h).abs() <= 3, "bbox {w}x{h}");
        // Hole-filled and normalized: finite everywhere, object mean removed.
        assert!(p.depth.data().iter().all(|d| d.is_finite()));
        let mut sum = 0.0f64;
        let mut n = 0;
        for (d, m) in p.depth.data().iter().zip(p.silhouette.data()) {
            if *m != 0 {
                sum += *d as f64;
                n += 1;
            }
        }
        assert!(n > 0);
        assert!((sum / n as f64).abs() < 1e-6);
    }
}
