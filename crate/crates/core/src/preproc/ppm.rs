use std::fs;
use std::path::Path;

use super::{PreprocError, RasterImage};

/// Decodes a binary P6 PPM with maxval 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<RasterImage, PreprocError> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(PreprocError::Format(format!(
            "magic {:?}, expected P6",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = header_number(bytes, &mut pos)?;
    let height = header_number(bytes, &mut pos)?;
    let maxval = header_number(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(PreprocError::Format(format!("maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PreprocError::Format("missing raster separator".into()));
    }
    pos += 1;
    let len = width * height * 3;
    if bytes.len() < pos + len {
        return Err(PreprocError::Format(format!(
            "truncated raster: {} of {len} bytes",
            bytes.len() - pos
        )));
    }
    RasterImage::new(width, height, bytes[pos..pos + len].to_vec())
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], PreprocError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(PreprocError::Format("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize, PreprocError> {
    let tok = header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PreprocError::Format(format!("bad header field {:?}", String::from_utf8_lossy(tok))))
}

pub fn encode_ppm(image: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn read_ppm(path: &Path) -> Result<RasterImage, PreprocError> {
    let bytes = fs::read(path).map_err(|source| PreprocError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_ppm(&bytes)
}

pub fn write_ppm(image: &RasterImage, path: &Path) -> Result<(), PreprocError> {
    fs::write(path, encode_ppm(image)).map_err(|source| PreprocError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn white_two_by_one() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255; 6]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert!(img.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 1\n# depth\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert_eq!(decode_ppm(&bytes).unwrap().pixel(0, 0), [1, 2, 3]);
    }

    #[test]
    fn rejects_grayscale_and_deep_maxval() {
        let mut p5 = b"P5\n1 1\n255\n".to_vec();
        p5.push(0);
        assert!(matches!(decode_ppm(&p5), Err(PreprocError::Format(_))));
        let mut deep = b"P6\n1 1\n65535\n".to_vec();
        deep.extend_from_slice(&[0; 6]);
        assert!(matches!(decode_ppm(&deep), Err(PreprocError::Format(_))));
        assert!(decode_ppm(b"P6\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let img = RasterImage::new(2, 2, (0..12).collect()).unwrap();
        write_ppm(&img, &path).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), img);
    }

    proptest! {
        #[test]
        fn byte_exact_round_trip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let data: Vec<u8> = (0..w * h * 3).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
            let img = RasterImage::new(w, h, data).unwrap();
            let bytes = encode_ppm(&img);
            prop_assert_eq!(decode_ppm(&bytes).unwrap(), img.clone());
            prop_assert_eq!(encode_ppm(&decode_ppm(&bytes).unwrap()), bytes);
        }
    }
}
