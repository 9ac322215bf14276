//! Generated meshes and the bundled demo scenes.
//!
//! Everything here is deterministic: the same call always produces the same
//! vertex order, so the shipped assets can be regenerated byte-for-byte.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{CameraIntrinsics, Pose};
use crate::io::{save_mesh, Background, IoError, SceneDescription, SceneObject};
use crate::mesh::TriangleMesh;

/// Geodesic sphere from a subdivided icosahedron. Subdivision n gives
/// 20*4^n triangles; level 3 is good to ~1e-3 of the true radius at face
/// centers, level 6 to ~2.5e-5.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut split = |a: u32, b: u32, vertices: &mut Vec<Vector3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let ab = split(f[0], f[1], &mut vertices);
            let bc = split(f[1], f[2], &mut vertices);
            let ca = split(f[2], f[0], &mut vertices);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh::new(vertices, faces, true).expect("icosphere construction is valid")
}

/// Axis-aligned box centered at the origin.
pub fn box_mesh(extents: Vector3<f64>) -> TriangleMesh {
    let h = extents / 2.0;
    let vertices = vec![
        Vector3::new(-h.x, -h.y, -h.z),
        Vector3::new(h.x, -h.y, -h.z),
        Vector3::new(h.x, h.y, -h.z),
        Vector3::new(-h.x, h.y, -h.z),
        Vector3::new(-h.x, -h.y, h.z),
        Vector3::new(h.x, -h.y, h.z),
        Vector3::new(h.x, h.y, h.z),
        Vector3::new(-h.x, h.y, h.z),
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriangleMesh::new(vertices, triangles, true).expect("box construction is valid")
}

/// L-shaped prism: an `outer` x `outer` square with the far corner cut away,
/// leaving two arms of width `arm`, extruded to `height` along z. Centered on
/// the square's bounding box, z in [-height/2, height/2].
pub fn lshape_mesh(outer: f64, arm: f64, height: f64) -> TriangleMesh {
    assert!(arm > 0.0 && arm < outer && height > 0.0);
    let c = outer / 2.0;
    // Counter-clockwise footprint; interior is left of each edge.
    let poly = [
        (0.0 - c, 0.0 - c),
        (outer - c, 0.0 - c),
        (outer - c, arm - c),
        (arm - c, arm - c),
        (arm - c, outer - c),
        (0.0 - c, outer - c),
    ];
    let hz = height / 2.0;
    let mut vertices = Vec::with_capacity(12);
    for &(x, y) in &poly {
        vertices.push(Vector3::new(x, y, -hz));
    }
    for &(x, y) in &poly {
        vertices.push(Vector3::new(x, y, hz));
    }
    let mut triangles = Vec::with_capacity(20);
    // Caps split into two convex quads along the reflex-corner diagonal 0-3,
    // so the shared edge matches exactly on both sides.
    let cap_quads = [[0u32, 1, 2, 3], [0, 3, 4, 5]];
    for q in &cap_quads {
        // Top (+z) keeps footprint winding, bottom reverses it.
        triangles.push([q[0] + 6, q[1] + 6, q[2] + 6]);
        triangles.push([q[0] + 6, q[2] + 6, q[3] + 6]);
        triangles.push([q[0], q[2], q[1]]);
        triangles.push([q[0], q[3], q[2]]);
    }
    for i in 0..6u32 {
        let j = (i + 1) % 6;
        triangles.push([i, j, j + 6]);
        triangles.push([i, j + 6, i + 6]);
    }
    TriangleMesh::new(vertices, triangles, true).expect("prism construction is valid")
}

/// Cube of side `outer` with a square blind pocket recessed into its -z face:
/// opening half-width `opening_half`, stopping `back_wall` short of the +z
/// face. Seen down the pocket the nearest solid is only that back wall, which
/// is what distinguishes a correct per-object thickness from a convex-extent
/// one.
pub fn box_with_blind_hole(outer: f64, opening_half: f64, back_wall: f64) -> TriangleMesh {
    let h = outer / 2.0;
    let a = opening_half;
    assert!(a > 0.0 && a < h && back_wall > 0.0 && back_wall < outer);
    let zb = h - back_wall;
    let mut vertices = vec![
        Vector3::new(-h, -h, -h),
        Vector3::new(h, -h, -h),
        Vector3::new(h, h, -h),
        Vector3::new(-h, h, -h),
        Vector3::new(-h, -h, h),
        Vector3::new(h, -h, h),
        Vector3::new(h, h, h),
        Vector3::new(-h, h, h),
    ];
    for &z in &[-h, zb] {
        vertices.push(Vector3::new(-a, -a, z));
        vertices.push(Vector3::new(a, -a, z));
        vertices.push(Vector3::new(a, a, z));
        vertices.push(Vector3::new(-a, a, z));
    }
    let mut triangles = vec![
        // Cube faces except -z.
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    // -z face becomes a ring between the outer square and the opening. Both
    // loops run counter-clockwise as seen from outside (-z side).
    let outer_loop = [0u32, 3, 2, 1];
    let inner_loop = [8u32, 11, 10, 9];
    for k in 0..4 {
        let (o0, o1) = (outer_loop[k], outer_loop[(k + 1) % 4]);
        let (i0, i1) = (inner_loop[k], inner_loop[(k + 1) % 4]);
        triangles.push([o0, o1, i1]);
        triangles.push([o0, i1, i0]);
    }
    // Pocket walls face the cavity; bottom faces the opening.
    for k in 0..4u32 {
        let (i0, i1) = (inner_loop[k as usize], inner_loop[(k as usize + 1) % 4]);
        let (b0, b1) = (i0 + 4, i1 + 4);
        triangles.push([i0, i1, b1]);
        triangles.push([i0, b1, b0]);
    }
    triangles.push([12, 15, 14]);
    triangles.push([12, 14, 13]);
    TriangleMesh::new(vertices, triangles, true).expect("pocket construction is valid")
}

fn demo_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(260.0, 260.0, 160.0, 120.0, 320, 240).expect("valid intrinsics")
}

fn orbit(
    count: usize,
    radius: f64,
    height: f64,
    target: Vector3<f64>,
) -> Vec<Pose> {
    (0..count)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / count as f64;
            let eye = Vector3::new(
                target.x + radius * theta.cos(),
                target.y + radius * theta.sin(),
                height,
            );
            Pose::look_at(eye, target, Vector3::z()).expect("orbit pose is valid")
        })
        .collect()
}

/// Writes the tabletop demo into `dir`: three convex objects resting on an
/// infinite table plane, viewed from a 20-pose circular arc. Returns the
/// scene file path.
pub fn write_tabletop_scene(dir: &Path) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    save_mesh(&dir.join("sphere.obj"), &icosphere(0.15, 3))?;
    save_mesh(&dir.join("box.obj"), &box_mesh(Vector3::new(0.26, 0.28, 0.36)))?;
    let turn = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let objects = vec![
        SceneObject {
            id: 1,
            mesh: "sphere.obj".to_owned(),
            pose: Pose::new(Matrix3::identity(), Vector3::new(0.15, 0.10, 0.15)).unwrap(),
        },
        SceneObject {
            id: 2,
            mesh: "box.obj".to_owned(),
            pose: Pose::new(Matrix3::identity(), Vector3::new(-0.20, 0.06, 0.18)).unwrap(),
        },
        SceneObject {
            id: 3,
            mesh: "box.obj".to_owned(),
            pose: Pose::new(turn, Vector3::new(0.0, -0.24, 0.18)).unwrap(),
        },
    ];
    let trajectory = orbit(20, 1.15, 0.38, Vector3::new(0.0, -0.02, 0.16));
    let scene = SceneDescription::new(
        demo_camera(),
        objects,
        Some(Background { plane_z: 0.0 }),
        trajectory,
        dir.to_path_buf(),
    );
    let path = dir.join("tabletop.json");
    scene.save(&path)?;
    Ok(path)
}

/// Writes the L-shape demo into `dir`: one non-convex prism on the table
/// plane, viewed from an 8-pose arc. Returns the scene file path.
pub fn write_lshape_scene(dir: &Path) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    save_mesh(&dir.join("lshape.obj"), &lshape_mesh(0.30, 0.12, 0.24))?;
    let objects = vec![SceneObject {
        id: 1,
        mesh: "lshape.obj".to_owned(),
        pose: Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 0.12)).unwrap(),
    }];
    let trajectory = orbit(8, 0.85, 0.35, Vector3::new(0.0, 0.0, 0.10));
    let scene = SceneDescription::new(
        demo_camera(),
        objects,
        Some(Background { plane_z: 0.0 }),
        trajectory,
        dir.to_path_buf(),
    );
    let path = dir.join("lshape.json");
    scene.save(&path)?;
    Ok(path)
}
