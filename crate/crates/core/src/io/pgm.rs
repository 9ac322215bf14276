//! Binary PGM (P5) instance-mask reader/writer, maxval 255.

use super::{read_header_token, IoError};
use crate::image::MaskMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn write_mask(path: &Path, mask: &MaskMap) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n255\n", mask.width(), mask.height())
        .and_then(|_| w.write_all(mask.data()))
        .and_then(|_| w.flush())
        .map_err(|e| IoError::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<MaskMap, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut r = BufReader::new(file);

    let magic = read_header_token(&mut r).map_err(|e| IoError::io(path, e))?;
    if magic != "P5" {
        return Err(IoError::format(
            path,
            format!("bad PGM magic {magic:?}, expected \"P5\""),
        ));
    }
    let width: usize = parse_token(path, &mut r, "width")?;
    let height: usize = parse_token(path, &mut r, "height")?;
    let maxval: u32 = parse_token(path, &mut r, "maxval")?;
    if width == 0 || height == 0 {
        return Err(IoError::format(
            path,
            format!("zero-sized image {width}x{height}"),
        ));
    }
    if maxval == 0 || maxval > 255 {
        return Err(IoError::format(
            path,
            format!("unsupported PGM maxval {maxval}"),
        ));
    }
    let mut data = vec![0u8; width * height];
    r.read_exact(&mut data).map_err(|_| {
        IoError::format(
            path,
            format!("truncated payload, expected {} bytes", width * height),
        )
    })?;
    MaskMap::from_data(width, height, data)
        .map_err(|e| IoError::format(path, e.to_string()))
}

fn parse_token<T: std::str::FromStr, R: Read>(
    path: &Path,
    reader: &mut R,
    what: &str,
) -> Result<T, IoError> {
    let token = read_header_token(reader).map_err(|e| IoError::io(path, e))?;
    token
        .parse()
        .map_err(|_| IoError::format(path, format!("bad PGM {what}: {token:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mask = MaskMap::from_data(3, 2, vec![0, 1, 2, 0, 255, 7]).unwrap();
        write_mask(&path, &mask).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
    }

    #[test]
    fn rejects_ascii_pgm() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p2.pgm");
        std::fs::write(&path, b"P2\n1 1\n255\n0\n").unwrap();
        assert!(read_mask(&path).is_err());
    }

    #[test]
    fn skips_header_comments() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5\n# a comment\n2 1\n255\n\x05\x09").unwrap();
        let mask = read_mask(&path).unwrap();
        assert_eq!(mask.data(), &[5, 9]);
    }
}
