//! Scene descriptions: a single JSON document (`"version": 1`) naming the
//! camera, the posed object meshes, an optional background plane and the
//! camera trajectory. Poses are 3x4 row-major `[R|t]` matrices.

use super::IoError;
use crate::geometry::{CameraIntrinsics, Pose};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Analytic background geometry: a horizontal plane at world height `plane_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub plane_z: f64,
}

#[derive(Debug, Clone)]
pub struct SceneObject {
    /// Instance id as it appears in mask images. Unique, >= 1 (0 is background).
    pub id: u8,
    /// Mesh path as written in the file, relative to the scene file's directory.
    pub mesh: String,
    /// Object-to-world transform.
    pub pose: Pose,
}

#[derive(Debug, Clone)]
pub struct SceneDescription {
    pub camera: CameraIntrinsics,
    pub objects: Vec<SceneObject>,
    pub background: Option<Background>,
    /// Camera-to-world poses, one per rendered view.
    pub trajectory: Vec<Pose>,
    base_dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct RawScene {
    version: u32,
    camera: CameraIntrinsics,
    objects: Vec<RawObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background: Option<Background>,
    trajectory: Vec<[[f64; 4]; 3]>,
}

#[derive(Serialize, Deserialize)]
struct RawObject {
    id: u32,
    mesh: String,
    pose: [[f64; 4]; 3],
}

impl SceneDescription {
    pub fn new(
        camera: CameraIntrinsics,
        objects: Vec<SceneObject>,
        background: Option<Background>,
        trajectory: Vec<Pose>,
        base_dir: PathBuf,
    ) -> Self {
        Self {
            camera,
            objects,
            background,
            trajectory,
            base_dir,
        }
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        let raw: RawScene = serde_json::from_str(&text)
            .map_err(|e| IoError::parse(path, e.line(), e.to_string()))?;
        if raw.version != 1 {
            return Err(IoError::invalid_scene(
                path,
                format!("unsupported version {} (expected 1)", raw.version),
            ));
        }
        CameraIntrinsics::new(
            raw.camera.fx,
            raw.camera.fy,
            raw.camera.cx,
            raw.camera.cy,
            raw.camera.width,
            raw.camera.height,
        )
        .map_err(|e| IoError::invalid_scene(path, e.to_string()))?;

        let mut seen = std::collections::HashSet::new();
        let mut objects = Vec::with_capacity(raw.objects.len());
        for obj in &raw.objects {
            if obj.id < 1 || obj.id > u8::MAX as u32 {
                return Err(IoError::invalid_scene(
                    path,
                    format!("object id {} outside 1..=255", obj.id),
                ));
            }
            if !seen.insert(obj.id) {
                return Err(IoError::invalid_scene(
                    path,
                    format!("duplicate object id {}", obj.id),
                ));
            }
            let pose = Pose::from_rows_3x4(&obj.pose).map_err(|e| {
                IoError::invalid_scene(path, format!("object {} pose: {e}", obj.id))
            })?;
            objects.push(SceneObject {
                id: obj.id as u8,
                mesh: obj.mesh.clone(),
                pose,
            });
        }

        if raw.trajectory.is_empty() {
            return Err(IoError::invalid_scene(path, "trajectory is empty"));
        }
        let mut trajectory = Vec::with_capacity(raw.trajectory.len());
        for (i, rows) in raw.trajectory.iter().enumerate() {
            let pose = Pose::from_rows_3x4(rows)
                .map_err(|e| IoError::invalid_scene(path, format!("trajectory pose {i}: {e}")))?;
            trajectory.push(pose);
        }

        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Self {
            camera: raw.camera,
            objects,
            background: raw.background,
            trajectory,
            base_dir,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let raw = RawScene {
            version: 1,
            camera: self.camera,
            objects: self
                .objects
                .iter()
                .map(|o| RawObject {
                    id: o.id as u32,
                    mesh: o.mesh.clone(),
                    pose: o.pose.to_rows_3x4(),
                })
                .collect(),
            background: self.background,
            trajectory: self.trajectory.iter().map(|p| p.to_rows_3x4()).collect(),
        };
        let mut text = serde_json::to_string_pretty(&raw)
            .map_err(|e| IoError::format(path, e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| IoError::io(path, e))
    }

    /// Mesh path of `object` resolved against the scene file's directory.
    pub fn mesh_path(&self, object: &SceneObject) -> PathBuf {
        self.base_dir.join(&object.mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_json() -> String {
        r#"{
            "version": 1,
            "camera": {"fx": 100.0, "fy": 100.0, "cx": 64.0, "cy": 48.0, "width": 128, "height": 96},
            "objects": [
                {"id": 1, "mesh": "meshes/ball.obj",
                 "pose": [[1,0,0,0.5],[0,1,0,0],[0,0,1,0]]}
            ],
            "background": {"plane_z": 0.0},
            "trajectory": [
                [[1,0,0,0],[0,1,0,0],[0,0,1,-2]]
            ]
        }"#
        .to_string()
    }

    #[test]
    fn load_resolves_mesh_paths() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scene.json");
        std::fs::write(&path, sample_json()).unwrap();
        let scene = SceneDescription::load(&path).unwrap();
        assert_eq!(scene.objects.len(), 1);
        assert_eq!(scene.trajectory.len(), 1);
        assert_eq!(scene.background, Some(Background { plane_z: 0.0 }));
        assert_eq!(
            scene.mesh_path(&scene.objects[0]),
            dir.path().join("meshes/ball.obj")
        );
        assert_eq!(scene.trajectory[0].translation.z, -2.0);
    }

    #[test]
    fn rejects_wrong_version() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scene.json");
        std::fs::write(&path, sample_json().replace("\"version\": 1", "\"version\": 2")).unwrap();
        let err = SceneDescription::load(&path).unwrap_err();
        assert!(err.to_string().contains("version 2"));
    }

    #[test]
    fn rejects_duplicate_ids_and_id_zero() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let dup = sample_json().replace(
            "\"objects\": [",
            r#""objects": [
                {"id": 1, "mesh": "a.obj", "pose": [[1,0,0,0],[0,1,0,0],[0,0,1,0]]},"#,
        );
        std::fs::write(&path, dup).unwrap();
        assert!(SceneDescription::load(&path)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));

        std::fs::write(&path, sample_json().replace("\"id\": 1", "\"id\": 0")).unwrap();
        assert!(SceneDescription::load(&path)
            .unwrap_err()
            .to_string()
            .contains("outside 1..=255"));
    }

    #[test]
    fn rejects_empty_trajectory() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let json = r#"{
            "version": 1,
            "camera": {"fx": 100.0, "fy": 100.0, "cx": 64.0, "cy": 48.0, "width": 128, "height": 96},
            "objects": [],
            "trajectory": []
        }"#;
        std::fs::write(&path, json).unwrap();
        let err = SceneDescription::load(&path).unwrap_err();
        assert!(err.to_string().contains("trajectory is empty"));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scene.json");
        std::fs::write(&path, sample_json()).unwrap();
        let scene = SceneDescription::load(&path).unwrap();
        let path2 = dir.path().join("again.json");
        scene.save(&path2).unwrap();
        let again = SceneDescription::load(&path2).unwrap();
        assert_eq!(again.camera, scene.camera);
        assert_eq!(again.objects[0].pose.translation, scene.objects[0].pose.translation);
        assert_eq!(again.background, scene.background);
    }
}
