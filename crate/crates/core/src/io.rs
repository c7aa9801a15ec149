//! Mask and feature file formats.
//!
//! * Binary PGM (`P5`, maxval ≤ 255): pixel values are category indices.
//! * The `SSFM` container: a 16-byte little-endian header
//!   `b"SSFM", u16 version = 1, u16 reserved = 0, u32 rows, u32 cols`
//!   followed by `rows × cols` values, either `u16` (masks) or `f64`
//!   (feature matrices and global feature vectors). The payload type is
//!   implied by the file length.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::SegmentationMask;
use crate::ssf::{SsfMatrix, SSF_COLUMNS};

pub const CONTAINER_MAGIC: &[u8; 4] = b"SSFM";
pub const CONTAINER_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

/// Payload of an `SSFM` container.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    U16(Vec<u16>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub rows: usize,
    pub cols: usize,
    pub payload: Payload,
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.rows * self.cols * 8);
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        match &self.payload {
            Payload::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Container> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(path, "shorter than the 16-byte header"));
        }
        if &bytes[..4] != CONTAINER_MAGIC {
            return Err(Error::format(path, "bad magic, expected SSFM"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CONTAINER_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
        let body = &bytes[HEADER_LEN..];
        let payload = if n > 0 && body.len() == n * 2 {
            Payload::U16(
                body.chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            )
        } else if body.len() == n * 8 {
            Payload::F64(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        } else {
            return Err(Error::format(
                path,
                format!(
                    "payload of {} bytes matches neither u16 nor f64 for {rows}x{cols}",
                    body.len()
                ),
            ));
        };
        Ok(Container { rows, cols, payload })
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses a binary `P5` PGM. Returns `(height, width, pixels)`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if next_token(bytes).as_deref() != Some("P5") {
        return Err(Error::format(path, "not a binary PGM (missing P5 magic)"));
    }
    let mut field = |name: &str| -> Result<usize> {
        next_token(bytes)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::format(path, format!("bad PGM {name}")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(path, format!("PGM maxval {maxval} not in 1..=255")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let n = width * height;
    if bytes.len() < start + n {
        return Err(Error::format(
            path,
            format!("PGM raster truncated: need {n} bytes, have {}", bytes.len().saturating_sub(start)),
        ));
    }
    let data = bytes[start..start + n].iter().map(|&b| b as u16).collect();
    Ok((height, width, data))
}

pub fn encode_pgm(mask: &SegmentationMask) -> Result<Vec<u8>> {
    if mask.data().iter().any(|&v| v > 255) {
        return Err(Error::InvalidMask("PGM output needs all values <= 255".into()));
    }
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&v| v as u8));
    Ok(out)
}

/// Reads a mask from a PGM or `SSFM` file; the format is detected from the
/// leading magic bytes.
pub fn read_mask(path: &Path, num_categories: usize, void_value: Option<u16>) -> Result<SegmentationMask> {
    let bytes = read_bytes(path)?;
    let (h, w, data) = if bytes.starts_with(b"P5") {
        decode_pgm(&bytes, path)?
    } else if bytes.starts_with(CONTAINER_MAGIC) {
        let c = Container::decode(&bytes, path)?;
        match c.payload {
            Payload::U16(v) => (c.rows, c.cols, v),
            Payload::F64(_) => return Err(Error::format(path, "container holds f64 features, not a mask")),
        }
    } else {
        return Err(Error::format(path, "unrecognized mask format (expected P5 PGM or SSFM)"));
    };
    SegmentationMask::new(h, w, num_categories, void_value, data).map_err(|e| match e {
        Error::InvalidPixel { .. } | Error::InvalidMask(_) | Error::InvalidDimensions(_) => {
            Error::format(path, e.to_string())
        }
        other => other,
    })
}

pub fn write_mask_pgm(path: &Path, mask: &SegmentationMask) -> Result<()> {
    write_bytes(path, &encode_pgm(mask)?)
}

pub fn write_mask_container(path: &Path, mask: &SegmentationMask) -> Result<()> {
    let c = Container {
        rows: mask.height(),
        cols: mask.width(),
        payload: Payload::U16(mask.data().to_vec()),
    };
    write_bytes(path, &c.encode())
}

/// Writes a row-major f64 matrix as an `SSFM` container.
pub fn write_f64_container(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), rows * cols);
    let c = Container {
        rows,
        cols,
        payload: Payload::F64(values.to_vec()),
    };
    write_bytes(path, &c.encode())
}

pub fn read_f64_container(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let c = Container::decode(&read_bytes(path)?, path)?;
    match c.payload {
        Payload::F64(v) => Ok((c.rows, c.cols, v)),
        Payload::U16(_) => Err(Error::format(path, "container holds u16 mask data, expected f64")),
    }
}

pub fn write_ssf_csv(path: &Path, ssf: &SsfMatrix) -> Result<()> {
    write_bytes(path, ssf.to_csv().as_bytes())
}

pub fn write_ssf_container(path: &Path, ssf: &SsfMatrix) -> Result<()> {
    write_f64_container(path, ssf.num_categories(), SSF_COLUMNS, &ssf.to_flat())
}

pub fn read_ssf_container(path: &Path) -> Result<SsfMatrix> {
    let (rows, cols, v) = read_f64_container(path)?;
    if cols != SSF_COLUMNS || rows == 0 {
        return Err(Error::format(path, format!("expected an Lx5 feature matrix, got {rows}x{cols}")));
    }
    SsfMatrix::from_flat(&v)
}

/// Reads a global feature vector stored as a `1 × width` f64 container.
pub fn read_global_vector(path: &Path) -> Result<Vec<f64>> {
    let (rows, cols, v) = read_f64_container(path)?;
    if rows != 1 || cols == 0 {
        return Err(Error::format(path, format!("expected a 1xN vector, got {rows}x{cols}")));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{}: element {i}", path.display())));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssf::extract_ssf;

    #[test]
    fn container_header_layout() {
        let c = Container {
            rows: 2,
            cols: 3,
            payload: Payload::U16(vec![1, 2, 3, 4, 5, 6]),
        };
        let bytes = c.encode();
        assert_eq!(bytes.len(), 16 + 12);
        assert_eq!(&bytes[..4], b"SSFM");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..8], &[0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(&bytes[16..18], &[1, 0]);
        assert_eq!(Container::decode(&bytes, Path::new("x")).unwrap(), c);
    }

    #[test]
    fn f64_container_round_trip() {
        let c = Container {
            rows: 1,
            cols: 2,
            payload: Payload::F64(vec![0.1, -3.5]),
        };
        assert_eq!(Container::decode(&c.encode(), Path::new("x")).unwrap(), c);
    }

    #[test]
    fn decode_rejects_garbage() {
        let p = Path::new("x");
        assert!(Container::decode(b"SSF", p).is_err());
        assert!(Container::decode(b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00", p).is_err());
        let mut bytes = Container {
            rows: 2,
            cols: 2,
            payload: Payload::U16(vec![1; 4]),
        }
        .encode();
        bytes.pop();
        assert!(Container::decode(&bytes, p).is_err());
    }

    #[test]
    fn pgm_parse_with_comments() {
        let mut bytes = b"P5\n# a comment\n3 2\n255\n".to_vec();
        bytes.extend([1u8, 2, 1, 0, 1, 2]);
        let (h, w, d) = decode_pgm(&bytes, Path::new("x")).unwrap();
        assert_eq!((h, w), (2, 3));
        assert_eq!(d, vec![1, 2, 1, 0, 1, 2]);
    }

    #[test]
    fn pgm_rejects_truncated_and_wide() {
        let p = Path::new("x");
        let mut bytes = b"P5 3 2 255\n".to_vec();
        bytes.extend([1u8, 2]);
        assert!(decode_pgm(&bytes, p).is_err());
        assert!(decode_pgm(b"P5 1 1 65535\n\x00\x01", p).is_err());
        assert!(decode_pgm(b"P2 1 1 255\n1", p).is_err());
    }

    #[test]
    fn mask_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = SegmentationMask::from_rows(&[&[1, 2, 0], &[3, 3, 1]], 3, Some(0)).unwrap();
        let pgm = dir.path().join("m.pgm");
        write_mask_pgm(&pgm, &m).unwrap();
        assert_eq!(read_mask(&pgm, 3, Some(0)).unwrap(), m);
        let bin = dir.path().join("m.ssfm");
        write_mask_container(&bin, &m).unwrap();
        assert_eq!(read_mask(&bin, 3, Some(0)).unwrap(), m);
        // value 3 is out of range for L = 2
        assert!(read_mask(&bin, 2, Some(0)).is_err());
    }

    #[test]
    fn ssf_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = SegmentationMask::from_rows(&[&[1, 1], &[2, 1]], 2, None).unwrap();
        let s = extract_ssf(&m);
        let p = dir.path().join("f.ssf");
        write_ssf_container(&p, &s).unwrap();
        assert_eq!(read_ssf_container(&p).unwrap().to_flat(), s.to_flat());
        assert!(read_mask(&p, 2, None).is_err());
    }
}
