//! Binary PGM ("P5") serialization.
//!
//! Probability images are stored as 16-bit big-endian samples with
//! `value = round(p * 65535)`; a JSON sidecar records the clamp policy and
//! provenance. Round-tripping reproduces the quantized probabilities
//! exactly. Binary masks use 8-bit samples (0 background, 255 foreground),
//! and coverage images reuse the 16-bit encoding for fractions in `[0, 1]`.

use crate::field::ProbabilityImage;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed PGM: {0}")]
    Malformed(String),
    #[error("invalid probability data: {0}")]
    InvalidData(String),
}

/// Metadata stored next to a probability image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub delta_max: f64,
    pub provenance: String,
}

pub fn sidecar_path(pgm_path: &Path) -> std::path::PathBuf {
    pgm_path.with_extension("json")
}

pub fn write_probability_image(
    path: &Path,
    img: &ProbabilityImage,
    sidecar: &Sidecar,
) -> Result<(), PgmError> {
    let mut data = Vec::with_capacity(img.samples().len() * 2);
    for &p in img.samples() {
        let v = (p * 65535.0).round() as u16;
        data.extend_from_slice(&v.to_be_bytes());
    }
    write_p5(path, img.width(), img.height(), 65535, &data)?;
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| PgmError::InvalidData(e.to_string()))?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn read_probability_image(path: &Path) -> Result<(ProbabilityImage, Option<Sidecar>), PgmError> {
    let (w, h, maxval, data) = read_p5(path)?;
    if maxval != 65535 {
        return Err(PgmError::Malformed(format!("expected maxval 65535, got {maxval}")));
    }
    let n = (w as usize) * (h as usize);
    if data.len() != 2 * n {
        return Err(PgmError::Malformed(format!("expected {} bytes, got {}", 2 * n, data.len())));
    }
    let p: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
        .collect();
    let img =
        ProbabilityImage::new(w, h, p).map_err(|e| PgmError::InvalidData(e.to_string()))?;
    let sidecar = match fs::read_to_string(sidecar_path(path)) {
        Ok(text) => serde_json::from_str(&text).ok(),
        Err(_) => None,
    };
    Ok((img, sidecar))
}

/// 8-bit mask: 255 foreground, 0 background.
pub fn write_mask(path: &Path, width: u32, height: u32, mask: &[bool]) -> Result<(), PgmError> {
    let data: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_p5(path, width, height, 255, &data)
}

/// Reads an 8-bit mask; samples at or above half of maxval are foreground.
pub fn read_mask(path: &Path) -> Result<(u32, u32, Vec<bool>), PgmError> {
    let (w, h, maxval, data) = read_p5(path)?;
    if maxval > 255 {
        return Err(PgmError::Malformed(format!("expected 8-bit mask, got maxval {maxval}")));
    }
    if data.len() != (w as usize) * (h as usize) {
        return Err(PgmError::Malformed("mask size mismatch".into()));
    }
    let half = (maxval / 2) as u8;
    Ok((w, h, data.iter().map(|&v| v > half).collect()))
}

/// 16-bit coverage-fraction image; values are `round(frac * 65535)`.
pub fn write_coverage(
    path: &Path,
    width: u32,
    height: u32,
    fractions: &[f64],
) -> Result<(), PgmError> {
    let mut data = Vec::with_capacity(fractions.len() * 2);
    for &f in fractions {
        let v = (f.clamp(0.0, 1.0) * 65535.0).round() as u16;
        data.extend_from_slice(&v.to_be_bytes());
    }
    write_p5(path, width, height, 65535, &data)
}

fn write_p5(path: &Path, w: u32, h: u32, maxval: u32, data: &[u8]) -> Result<(), PgmError> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    write!(file, "P5\n{w} {h}\n{maxval}\n")?;
    file.write_all(data)?;
    Ok(())
}

fn read_p5(path: &Path) -> Result<(u32, u32, u32, Vec<u8>), PgmError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(PgmError::Malformed("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // skip whitespace and `#` comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::Malformed("truncated header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| PgmError::Malformed(format!("bad header field: {e}")))?;
    }
    // single whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PgmError::Malformed("missing raster separator".into()));
    }
    pos += 1;
    Ok((fields[0], fields[1], fields[2], bytes[pos..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_round_trip_reproduces_quantized_values() {
        let dir = std::env::temp_dir().join("shapebound_pgm_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("img.pgm");
        let img = ProbabilityImage::new(3, 2, vec![0.0, 0.25, 0.5, 0.7531, 0.98, 1.0]).unwrap();
        let sc = Sidecar { delta_max: 5.0, provenance: "test".into() };
        write_probability_image(&path, &img, &sc).unwrap();
        let (back, sc2) = read_probability_image(&path).unwrap();
        assert_eq!(sc2.unwrap().delta_max, 5.0);
        // a second round trip is the identity on the quantized lattice
        write_probability_image(&path, &back, &sc).unwrap();
        let (back2, _) = read_probability_image(&path).unwrap();
        assert_eq!(back.samples(), back2.samples());
        for (orig, quant) in img.samples().iter().zip(back.samples()) {
            assert_eq!((orig * 65535.0).round(), (quant * 65535.0).round());
        }
    }

    #[test]
    fn mask_round_trip() {
        let dir = std::env::temp_dir().join("shapebound_pgm_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mask.pgm");
        let mask = vec![true, false, false, true, true, false];
        write_mask(&path, 3, 2, &mask).unwrap();
        let (w, h, back) = read_mask(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, mask);
    }

    #[test]
    fn rejects_non_pgm() {
        let dir = std::env::temp_dir().join("shapebound_pgm_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bogus.pgm");
        fs::write(&path, b"P6\n1 1\n255\nxxx").unwrap();
        assert!(matches!(read_p5(&path), Err(PgmError::Malformed(_))));
    }
}
