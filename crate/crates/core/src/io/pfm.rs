//! Portable Float Map reader/writer.
//!
//! Grayscale only: magic `Pf`, ASCII `width height`, scale `-1.0`
//! (little-endian), rows stored bottom-to-top. Payload bits round-trip
//! exactly, NaNs included.

use super::{read_header_token, IoError};
use crate::image::FloatMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn write_float_map(path: &Path, image: &FloatMap) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let put = |res: std::io::Result<()>| res.map_err(|e| IoError::io(path, e));
    put(write!(
        w,
        "Pf\n{} {}\n-1.0\n",
        image.width(),
        image.height()
    ))?;
    for v in (0..image.height()).rev() {
        for &value in image.row(v) {
            put(w.write_all(&value.to_le_bytes()))?;
        }
    }
    put(w.flush())
}

pub fn read_float_map(path: &Path) -> Result<FloatMap, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut r = BufReader::new(file);

    let magic = read_header_token(&mut r).map_err(|e| IoError::io(path, e))?;
    if magic != "Pf" {
        return Err(IoError::format(
            path,
            format!("bad PFM magic {magic:?}, expected \"Pf\" (grayscale)"),
        ));
    }
    let width: usize = parse_token(path, &mut r, "width")?;
    let height: usize = parse_token(path, &mut r, "height")?;
    let scale: f64 = parse_token(path, &mut r, "scale")?;
    if width == 0 || height == 0 {
        return Err(IoError::format(
            path,
            format!("zero-sized image {width}x{height}"),
        ));
    }
    if scale == 0.0 {
        return Err(IoError::format(path, "scale must be nonzero".to_string()));
    }
    let little_endian = scale < 0.0;

    let mut payload = vec![0u8; width * height * 4];
    r.read_exact(&mut payload).map_err(|_| {
        IoError::format(
            path,
            format!("truncated payload, expected {} bytes", width * height * 4),
        )
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| IoError::io(path, e))? != 0 {
        return Err(IoError::format(path, "trailing bytes after payload"));
    }

    let mut image = FloatMap::new(width, height, 0.0).expect("dims checked above");
    let mut offset = 0;
    for v in (0..height).rev() {
        for u in 0..width {
            let bytes: [u8; 4] = payload[offset..offset + 4].try_into().unwrap();
            let value = if little_endian {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
            image.set(u, v, value);
            offset += 4;
        }
    }
    Ok(image)
}

fn parse_token<T: std::str::FromStr, R: Read>(
    path: &Path,
    reader: &mut R,
    what: &str,
) -> Result<T, IoError> {
    let token = read_header_token(reader).map_err(|e| IoError::io(path, e))?;
    token
        .parse()
        .map_err(|_| IoError::format(path, format!("bad PFM {what}: {token:?}")))
}
