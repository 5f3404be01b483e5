//! Channel file format.
//!
//! A channel file is UTF-8 text: a header line
//!
//! ```text
//! dp-chanest-v1 <M_r> <M_x> <M_y>
//! ```
//!
//! followed by `2M_r * 2M_t` lines of `re im` pairs holding the full
//! four-block channel matrix in column-major order. Float formatting uses
//! the shortest representation that round-trips exactly.

use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};

pub const CHANNEL_MAGIC: &str = "dp-chanest-v1";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn file_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::ChannelFile { path: path.to_path_buf(), msg: msg.into() }
}

/// Writes a `2M_r x 2M_t` channel matrix in the `dp-chanest-v1` format.
pub fn write_channel_file(
    path: &Path,
    h: &Array2<Complex64>,
    geometry: &ArrayGeometry,
) -> Result<()> {
    let (rows, cols) = (2 * geometry.m_r, 2 * geometry.m_t());
    if h.dim() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "channel matrix is {:?}, expected ({rows}, {cols})",
            h.dim()
        )));
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{CHANNEL_MAGIC} {} {} {}\n",
        geometry.m_r, geometry.m_x, geometry.m_y
    ));
    for j in 0..cols {
        for i in 0..rows {
            let z = h[[i, j]];
            out.push_str(&format!("{} {}\n", z.re, z.im));
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Reads a `dp-chanest-v1` channel file.
pub fn read_channel_file(path: &Path) -> Result<(Array2<Complex64>, ArrayGeometry)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| file_err(path, "empty file"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(CHANNEL_MAGIC) {
        return Err(file_err(path, format!("header must start with '{CHANNEL_MAGIC}'")));
    }
    let mut dims = [0usize; 3];
    for (i, name) in ["M_r", "M_x", "M_y"].iter().enumerate() {
        let tok = fields
            .next()
            .ok_or_else(|| file_err(path, format!("header missing {name}")))?;
        dims[i] = tok
            .parse()
            .map_err(|_| file_err(path, format!("bad {name} value '{tok}'")))?;
    }
    if fields.next().is_some() {
        return Err(file_err(path, "trailing tokens in header"));
    }
    let geometry = ArrayGeometry::new(dims[0], dims[1], dims[2])?;
    let (rows, cols) = (2 * geometry.m_r, 2 * geometry.m_t());
    let mut h = Array2::zeros((rows, cols));
    let mut count = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if count >= rows * cols {
            return Err(file_err(path, format!("more than {} entries", rows * cols)));
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>, what: &str| -> Result<f64> {
            let tok = tok.ok_or_else(|| {
                file_err(path, format!("line {}: missing {what}", lineno + 2))
            })?;
            tok.parse().map_err(|_| {
                file_err(path, format!("line {}: bad {what} '{tok}'", lineno + 2))
            })
        };
        let re = parse(parts.next(), "real part")?;
        let im = parse(parts.next(), "imaginary part")?;
        if parts.next().is_some() {
            return Err(file_err(path, format!("line {}: trailing tokens", lineno + 2)));
        }
        // Column-major: first index varies fastest.
        h[[count % rows, count / rows]] = Complex64::new(re, im);
        count += 1;
    }
    if count != rows * cols {
        return Err(file_err(
            path,
            format!("expected {} entries, found {count}", rows * cols),
        ));
    }
    Ok((h, geometry))
}
