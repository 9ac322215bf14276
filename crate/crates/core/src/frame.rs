//! A rendered or captured view: depth, per-pixel thickness, instance masks
//! and the camera pose that produced them.

use crate::geometry::{CameraIntrinsics, Pose};
use crate::image::{FloatMap, MaskMap};
use crate::io::{self, IoError};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("image dimensions disagree: depth {depth:?}, thickness {thickness:?}, masks {masks:?}")]
    DimensionMismatch {
        depth: (usize, usize),
        thickness: (usize, usize),
        masks: (usize, usize),
    },
    #[error("frame is {got:?} but intrinsics expect {expected:?}")]
    IntrinsicsMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("negative thickness {value} at pixel ({u}, {v})")]
    NegativeThickness { u: usize, v: usize, value: f32 },
    #[error("thickness {value} at background pixel ({u}, {v})")]
    BackgroundThickness { u: usize, v: usize, value: f32 },
}

/// Depth in meters with NaN for missing readings; thickness in meters with 0
/// meaning "no thickness information"; masks hold instance ids (0 =
/// background). All three share dimensions.
#[derive(Debug, Clone)]
pub struct FrameBundle {
    pub depth: FloatMap,
    pub thickness: FloatMap,
    pub masks: MaskMap,
    /// Camera-to-world.
    pub pose: Pose,
    pub frame_index: usize,
}

impl FrameBundle {
    pub fn new(
        depth: FloatMap,
        thickness: FloatMap,
        masks: MaskMap,
        pose: Pose,
        frame_index: usize,
    ) -> Result<Self, FrameError> {
        let dims = (depth.width(), depth.height());
        if (thickness.width(), thickness.height()) != dims
            || (masks.width(), masks.height()) != dims
        {
            return Err(FrameError::DimensionMismatch {
                depth: dims,
                thickness: (thickness.width(), thickness.height()),
                masks: (masks.width(), masks.height()),
            });
        }
        for v in 0..dims.1 {
            for u in 0..dims.0 {
                let t = thickness.get(u, v);
                if t.is_finite() && t < 0.0 {
                    return Err(FrameError::NegativeThickness { u, v, value: t });
                }
                if masks.get(u, v) == 0 && t != 0.0 {
                    return Err(FrameError::BackgroundThickness { u, v, value: t });
                }
            }
        }
        Ok(Self {
            depth,
            thickness,
            masks,
            pose,
            frame_index,
        })
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn check_intrinsics(&self, intrinsics: &CameraIntrinsics) -> Result<(), FrameError> {
        if (self.width(), self.height()) != (intrinsics.width, intrinsics.height) {
            return Err(FrameError::IntrinsicsMismatch {
                expected: (intrinsics.width, intrinsics.height),
                got: (self.width(), self.height()),
            });
        }
        Ok(())
    }

    pub fn depth_filename(index: usize) -> String {
        format!("frame_{index:05}.depth.pfm")
    }

    pub fn thickness_filename(index: usize) -> String {
        format!("frame_{index:05}.thick.pfm")
    }

    pub fn mask_filename(index: usize) -> String {
        format!("frame_{index:05}.mask.pgm")
    }

    /// Writes the three images under `dir` with index-derived names.
    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        io::write_float_map(&dir.join(Self::depth_filename(self.frame_index)), &self.depth)?;
        io::write_float_map(
            &dir.join(Self::thickness_filename(self.frame_index)),
            &self.thickness,
        )?;
        io::write_mask(&dir.join(Self::mask_filename(self.frame_index)), &self.masks)
    }

    /// Reads the triple written by [`FrameBundle::save`]. The pose is not
    /// stored in the images; it comes from the scene trajectory.
    pub fn load(dir: &Path, index: usize, pose: Pose) -> Result<Self, IoError> {
        let depth = io::read_float_map(&dir.join(Self::depth_filename(index)))?;
        let thickness = io::read_float_map(&dir.join(Self::thickness_filename(index)))?;
        let masks = io::read_mask(&dir.join(Self::mask_filename(index)))?;
        FrameBundle::new(depth, thickness, masks, pose, index).map_err(|e| IoError::Format {
            path: dir.display().to_string(),
            message: e.to_string(),
        })
    }
}
