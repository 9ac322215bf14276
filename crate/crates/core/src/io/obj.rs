//! ASCII OBJ subset: `v` and triangular `f` records, everything else ignored.

use super::IoError;
use crate::mesh::TriangleMesh;
use nalgebra::Vector3;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Loads a mesh. Face indices are validated against the vertex count and
/// degenerate triangles are dropped; `watertight_hint` is set from an edge
/// pairing check on the loaded topology.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let reader = BufReader::new(file);

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IoError::io(path, e))?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for coord in &mut coords {
                    let token = tokens.next().ok_or_else(|| {
                        IoError::parse(path, line_no, "vertex needs 3 coordinates")
                    })?;
                    *coord = token.parse().map_err(|_| {
                        IoError::parse(path, line_no, format!("bad coordinate {token:?}"))
                    })?;
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(IoError::parse(
                        path,
                        line_no,
                        format!("non-triangular face with {} vertices", refs.len()),
                    ));
                }
                let mut tri = [0u32; 3];
                for (slot, token) in tri.iter_mut().zip(&refs) {
                    // `i`, `i/j`, `i//k` and `i/j/k` all start with the
                    // position index.
                    let first = token.split('/').next().unwrap_or("");
                    let index: i64 = first.parse().map_err(|_| {
                        IoError::parse(path, line_no, format!("bad face index {token:?}"))
                    })?;
                    if index < 1 {
                        return Err(IoError::parse(
                            path,
                            line_no,
                            format!("face index {index} must be positive (1-based)"),
                        ));
                    }
                    if index as usize > vertices.len() {
                        return Err(IoError::parse(
                            path,
                            line_no,
                            format!(
                                "face references vertex {index} but only {} are defined",
                                vertices.len()
                            ),
                        ));
                    }
                    *slot = (index - 1) as u32;
                }
                triangles.push(tri);
            }
            _ => {} // comments, normals, texcoords, groups: ignored
        }
    }

    let mesh = TriangleMesh::new(vertices, triangles, false)
        .map_err(|e| IoError::format(path, e.to_string()))?;
    let watertight = mesh.is_closed_manifold();
    Ok(TriangleMesh {
        watertight_hint: watertight,
        ..mesh
    })
}

pub fn save_mesh(path: &Path, mesh: &TriangleMesh) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let put = |res: std::io::Result<()>| res.map_err(|e| IoError::io(path, e));
    for v in &mesh.vertices {
        put(writeln!(w, "v {} {} {}", v.x, v.y, v.z))?;
    }
    for t in &mesh.triangles {
        put(writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1))?;
    }
    put(w.flush())
}
