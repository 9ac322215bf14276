//! Binary TSDF grid dumps. Fixed little-endian layout: 8-byte magic, u32
//! dims, f32 voxel size, 3x f32 origin, then the phi payload and the weight
//! payload, both x-fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::IoError;
use crate::fusion::{GridFrame, TsdfGrid};

const MAGIC: &[u8; 8] = b"XSGRID01";

pub fn save_grid(path: &Path, grid: &TsdfGrid) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| IoError::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    for d in grid.frame.dims {
        w.write_all(&d.to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&grid.frame.voxel_size.to_le_bytes())
        .map_err(io_err)?;
    for o in grid.frame.origin {
        w.write_all(&o.to_le_bytes()).map_err(io_err)?;
    }
    for payload in [&grid.phi, &grid.weight] {
        let mut bytes = Vec::with_capacity(payload.len() * 4);
        for v in payload {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_grid(path: &Path) -> Result<TsdfGrid, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| IoError::io(path, e))?;
    if &magic != MAGIC {
        return Err(IoError::format(
            path,
            format!("bad magic {:?}, expected {:?}", magic, MAGIC),
        ));
    }
    let mut head = [0u8; 28];
    r.read_exact(&mut head).map_err(|e| IoError::io(path, e))?;
    let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    let f32_at = |i: usize| f32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    let dims = [u32_at(0), u32_at(4), u32_at(8)];
    let voxel_size = f32_at(12);
    let origin = [f32_at(16), f32_at(20), f32_at(24)];
    let frame = GridFrame::new(dims, voxel_size, origin)
        .map_err(|e| IoError::format(path, e.to_string()))?;
    let count = frame.voxel_count();
    let mut read_payload = |name: &str| -> Result<Vec<f32>, IoError> {
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes).map_err(|e| {
            IoError::format(path, format!("truncated {name} payload: {e}"))
        })?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let phi = read_payload("phi")?;
    let weight = read_payload("weight")?;
    let mut trailer = [0u8; 1];
    if r.read(&mut trailer).map_err(|e| IoError::io(path, e))? != 0 {
        return Err(IoError::format(path, "trailing bytes after payload"));
    }
    TsdfGrid::from_parts(frame, phi, weight).map_err(|e| IoError::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_voxel_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.grid");
        let frame = GridFrame::new([1, 1, 1], 0.02, [0.5, -0.25, 1.0]).unwrap();
        let grid = TsdfGrid::from_parts(frame, vec![-1.0], vec![3.0]).unwrap();
        save_grid(&path, &grid).unwrap();
        let back = load_grid(&path).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.grid");
        let grid = TsdfGrid::new(GridFrame::new([1, 1, 1], 0.1, [0.0; 3]).unwrap());
        save_grid(&path, &grid).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'Y';
        std::fs::write(&path, bytes).unwrap();
        match load_grid(&path) {
            Err(IoError::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.grid");
        let grid = TsdfGrid::new(GridFrame::new([4, 4, 4], 0.1, [0.0; 3]).unwrap());
        save_grid(&path, &grid).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match load_grid(&path) {
            Err(IoError::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn random_grid_round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let frame = GridFrame::new([64, 64, 64], 0.013, [-0.4, 0.2, 1.7]).unwrap();
        let n = frame.voxel_count();
        let mut phi: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let weight: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        // NaN must survive a round trip too; depth maps use it for holes.
        phi[12345] = f32::NAN;
        let grid = TsdfGrid::from_parts(frame, phi, weight).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("random.grid");
        save_grid(&path, &grid).unwrap();
        let back = load_grid(&path).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.phi), bits(&grid.phi));
        assert_eq!(bits(&back.weight), bits(&grid.weight));
        assert_eq!(back.frame, grid.frame);
    }
}
