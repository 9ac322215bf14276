//! Pinhole camera model, rigid poses and pixel rays.
//!
//! Conventions used throughout the crate:
//! - camera frame is right-handed with +Z forward, +X right, +Y down;
//! - depth images store camera-frame Z ("projective depth"), not Euclidean
//!   ray distance;
//! - pixel `(u, v)` samples the ray through its center `(u + 0.5, v + 0.5)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ORTHONORMALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not a proper orthonormal matrix (orthogonality residual {residual:.3e}, det {det})")]
    InvalidRotation { residual: f64, det: f64 },
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("pixel ({u}, {v}) outside a {width}x{height} image")]
    PixelOutOfBounds {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0) || !(fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be positive ({width}x{height})"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Projects a camera-frame point to continuous pixel coordinates and its
    /// projective depth.
    pub fn project(&self, p_cam: &Vector3<f64>) -> Result<([f64; 2], f64), GeometryError> {
        if !(p_cam.z > 0.0) {
            return Err(GeometryError::BehindCamera(p_cam.z));
        }
        let u = self.fx * p_cam.x / p_cam.z + self.cx;
        let v = self.fy * p_cam.y / p_cam.z + self.cy;
        Ok(([u, v], p_cam.z))
    }

    /// Inverse of [`project`](Self::project): camera-frame point at pixel
    /// coordinates `pixel` and projective depth `z`.
    pub fn unproject(&self, pixel: [f64; 2], z: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel[0] - self.cx) / self.fx * z,
            (pixel[1] - self.cy) / self.fy * z,
            z,
        )
    }

    /// World-frame ray through the center of pixel `(u, v)`.
    pub fn ray_for_pixel(&self, pose: &Pose, u: usize, v: usize) -> Result<Ray, GeometryError> {
        if u >= self.width || v >= self.height {
            return Err(GeometryError::PixelOutOfBounds {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        let dir_cam = Vector3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        let norm = dir_cam.norm();
        Ok(Ray {
            origin: pose.translation,
            direction: pose.rotation * (dir_cam / norm),
            z_scale: 1.0 / norm,
        })
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det = rotation.determinant();
        if residual > ORTHONORMALITY_TOL || (det - 1.0).abs() > ORTHONORMALITY_TOL {
            return Err(GeometryError::InvalidRotation { residual, det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera-frame point of a world-frame point: `R^T (p - t)`.
    pub fn world_to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p_world - self.translation)
    }

    /// World-frame point of a camera-frame point: `R p + t`.
    pub fn camera_to_world(&self, p_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_cam + self.translation
    }

    /// Row-major 3x4 matrix `[R | t]`, the serialized form.
    pub fn to_rows_3x4(&self) -> [[f64; 4]; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z],
        ]
    }

    pub fn from_rows_3x4(rows: &[[f64; 4]; 3]) -> Result<Self, GeometryError> {
        let rotation = Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        );
        let translation = Vector3::new(rows[0][3], rows[1][3], rows[2][3]);
        Self::new(rotation, translation)
    }

    /// Camera-to-world pose placing the camera at `eye`, looking at `target`,
    /// with the image-down direction chosen so that `world_up` appears up.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        world_up: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&world_up);
        let right = if right.norm() < 1e-12 {
            // Looking straight along world_up; pick an arbitrary right axis.
            let alt = if forward.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            forward.cross(&alt).normalize()
        } else {
            right.normalize()
        };
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self::new(rotation, eye)
    }
}

/// World-frame ray with the factor converting ray distance to camera-frame Z.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit direction.
    pub direction: Vector3<f64>,
    /// Camera-frame Z displacement per meter travelled along the ray, in (0, 1].
    pub z_scale: f64,
}

impl Ray {
    pub fn point_at(&self, s: f64) -> Vector3<f64> {
        self.origin + self.direction * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vga_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn project_principal_axis() {
        let intr = vga_intrinsics();
        let ([u, v], z) = intr.project(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((u, v, z), (320.0, 240.0, 2.0));
    }

    #[test]
    fn project_off_axis() {
        let intr = vga_intrinsics();
        let ([u, v], z) = intr.project(&Vector3::new(0.4, 0.0, 2.0)).unwrap();
        assert_eq!((u, v, z), (420.0, 240.0, 2.0));
    }

    #[test]
    fn project_behind_camera_errors() {
        let intr = vga_intrinsics();
        assert!(matches!(
            intr.project(&Vector3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::BehindCamera(_))
        ));
    }

    #[test]
    fn project_unproject_roundtrip() {
        let intr = vga_intrinsics();
        for (u, v, z) in [(0.5, 0.5, 0.3), (320.0, 240.0, 2.0), (639.5, 479.5, 7.5)] {
            let p = intr.unproject([u, v], z);
            let ([u2, v2], z2) = intr.project(&p).unwrap();
            assert_relative_eq!(u2, u, epsilon = 1e-9);
            assert_relative_eq!(v2, v, epsilon = 1e-9);
            assert_relative_eq!(z2, z, epsilon = 1e-9);
        }
    }

    #[test]
    fn ray_at_principal_point_is_forward() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.5, 240.5, 640, 480).unwrap();
        let ray = intr.ray_for_pixel(&Pose::identity(), 320, 240).unwrap();
        assert_relative_eq!(ray.direction.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(ray.direction.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(ray.direction.z, 1.0, epsilon = 1e-12);
        assert_eq!(ray.z_scale, 1.0);
    }

    #[test]
    fn corner_pixel_z_scale_matches_analytic() {
        let intr = vga_intrinsics();
        let ray = intr.ray_for_pixel(&Pose::identity(), 0, 0).unwrap();
        // dir before normalization: ((0.5-320)/500, (0.5-240)/500, 1)
        let expected = 1.0 / Vector3::new(-0.639, -0.479, 1.0).norm();
        assert_relative_eq!(ray.z_scale, expected, epsilon = 1e-12);
        assert_relative_eq!(ray.direction.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ray_out_of_bounds_errors() {
        let intr = vga_intrinsics();
        assert!(intr.ray_for_pixel(&Pose::identity(), 640, 0).is_err());
        assert!(intr.ray_for_pixel(&Pose::identity(), 0, 480).is_err());
    }

    #[test]
    fn walking_ray_advances_camera_z_by_z_scale() {
        let intr = vga_intrinsics();
        let pose = Pose::look_at(
            Vector3::new(0.4, -0.8, 0.6),
            Vector3::new(0.0, 0.0, 0.1),
            Vector3::z(),
        )
        .unwrap();
        for (u, v) in [(0, 0), (320, 240), (639, 479), (17, 401)] {
            let ray = intr.ray_for_pixel(&pose, u, v).unwrap();
            for s in [0.25, 1.0, 3.5] {
                let z_cam = pose.world_to_camera(&ray.point_at(s)).z;
                assert_relative_eq!(z_cam, s * ray.z_scale, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn world_to_camera_identity_pose() {
        let pose = Pose::identity();
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(pose.world_to_camera(&p), p);
    }

    #[test]
    fn world_to_camera_pure_translation() {
        let pose = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(
            pose.world_to_camera(&Vector3::new(0.0, 0.0, 3.0)),
            Vector3::new(0.0, 0.0, 2.0)
        );
    }

    #[test]
    fn world_to_camera_rotation_about_y() {
        // 90 degrees about Y: camera x-axis = world -z, camera z-axis = world x.
        let c = 0.0f64;
        let s = 1.0f64;
        let rot = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        let pose = Pose::new(rot, Vector3::zeros()).unwrap();
        let p_cam = pose.world_to_camera(&Vector3::new(1.0, 0.0, 0.0));
        let expected = rot.transpose() * Vector3::new(1.0, 0.0, 0.0);
        assert_relative_eq!((p_cam - expected).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(p_cam.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_roundtrip_is_identity() {
        let pose = Pose::look_at(
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(-0.3, 0.1, 0.0),
            Vector3::z(),
        )
        .unwrap();
        let p = Vector3::new(0.7, -1.1, 2.9);
        let back = pose.world_to_camera(&pose.camera_to_world(&p));
        assert_relative_eq!((back - p).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn pose_rejects_non_orthonormal_rotation() {
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(bad, Vector3::zeros()).is_err());
        // Reflection: orthonormal but det = -1.
        let refl = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(refl, Vector3::zeros()).is_err());
    }

    #[test]
    fn look_at_keeps_world_up_upward_in_image() {
        let pose = Pose::look_at(
            Vector3::new(0.9, 0.0, 0.5),
            Vector3::new(0.0, 0.0, 0.1),
            Vector3::z(),
        )
        .unwrap();
        // Image-down axis (camera +Y) must point away from world up.
        assert!(pose.rotation.column(1).z < 0.0);
        assert_relative_eq!(pose.rotation.determinant(), 1.0, epsilon = 1e-9);
    }
}
