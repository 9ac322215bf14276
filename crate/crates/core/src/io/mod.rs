//! File formats: PFM float maps, PGM masks, OBJ meshes, TSDF grid dumps,
//! scene descriptions and CSV reports.

mod grid;
mod obj;
mod pfm;
mod pgm;
mod report;
mod scene;

pub use grid::{load_grid, save_grid};
pub use obj::{load_mesh, save_mesh};
pub use pfm::{read_float_map, write_float_map};
pub use pgm::{read_mask, write_mask};
pub use report::{format_sig6, write_csv};
pub use scene::{Background, SceneDescription, SceneObject};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: invalid scene: {message}")]
    InvalidScene { path: String, message: String },
}

impl IoError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(path: &std::path::Path, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.display().to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid_scene(path: &std::path::Path, message: impl Into<String>) -> Self {
        IoError::InvalidScene {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

/// Reads ASCII header tokens from a binary stream, skipping whitespace and
/// `#` comments. Stops right after the token's terminating whitespace byte,
/// leaving the reader positioned at the binary payload.
pub(crate) fn read_header_token<R: std::io::Read>(reader: &mut R) -> std::io::Result<String> {
    let mut token = Vec::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        let n = reader.read(&mut byte)?;
        if n == 0 {
            break;
        }
        let b = byte[0];
        if in_comment {
            if b == b'\n' {
                in_comment = false;
            }
            continue;
        }
        if b == b'#' && token.is_empty() {
            in_comment = true;
            continue;
        }
        if b.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(b);
    }
    Ok(String::from_utf8_lossy(&token).into_owned())
}
