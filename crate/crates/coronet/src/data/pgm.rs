//! Binary netpbm decoding: PGM (P5, grayscale) and PPM (P6, RGB), maxval 255.
//!
//! Grayscale images are replicated to 3 channels so every sample feeds the
//! 3-channel backbone; values are scaled by 1/255 into [0, 1].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decode image bytes to an `[H, W, 3]` pixel tensor in [0, 1].
pub fn decode_image(bytes: &[u8]) -> Result<Tensor> {
    let (magic, rest) = bytes
        .split_at_checked(2)
        .ok_or_else(|| Error::format("file shorter than the magic number".to_string()))?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::format(format!(
                "unsupported magic '{}', expected P5 or P6",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut cursor = rest;
    let width = read_header_value(&mut cursor)?;
    let height = read_header_value(&mut cursor)?;
    let maxval = read_header_value(&mut cursor)?;
    if maxval != 255 {
        return Err(Error::format(format!(
            "maxval {maxval} unsupported, expected 255"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    match cursor.first() {
        Some(b) if b.is_ascii_whitespace() => cursor = &cursor[1..],
        _ => return Err(Error::format("missing separator before pixel data".to_string())),
    }
    let needed = width * height * channels;
    if cursor.len() < needed {
        return Err(Error::format(format!(
            "truncated pixel payload: need {needed} bytes, have {}",
            cursor.len()
        )));
    }
    let payload = &cursor[..needed];
    let mut data = Vec::with_capacity(width * height * 3);
    if channels == 1 {
        for &b in payload {
            let v = b as f32 / 255.0;
            data.extend_from_slice(&[v, v, v]);
        }
    } else {
        data.extend(payload.iter().map(|&b| b as f32 / 255.0));
    }
    Tensor::from_values([height, width, 3], data)
}

/// Skip whitespace and `#` comment lines, then read one ASCII integer.
fn read_header_value(cursor: &mut &[u8]) -> Result<usize> {
    loop {
        match cursor.first() {
            Some(b) if b.is_ascii_whitespace() => *cursor = &cursor[1..],
            Some(b'#') => {
                let end = cursor
                    .iter()
                    .position(|&b| b == b'\n')
                    .unwrap_or(cursor.len());
                *cursor = &cursor[end..];
            }
            _ => break,
        }
    }
    let digits = cursor.iter().take_while(|b| b.is_ascii_digit()).count();
    if digits == 0 {
        return Err(Error::format("malformed header: expected an integer".to_string()));
    }
    let value = std::str::from_utf8(&cursor[..digits])
        .expect("digits are ASCII")
        .parse::<usize>()
        .map_err(|_| Error::format("header integer out of range".to_string()))?;
    *cursor = &cursor[digits..];
    Ok(value)
}

/// Encode 8-bit grayscale pixels (row-major) as a binary PGM file.
pub fn encode_pgm(gray: &[u8], height: usize, width: usize) -> Result<Vec<u8>> {
    if gray.len() != height * width {
        return Err(Error::input(format!(
            "{} pixels for a {height}x{width} image",
            gray.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_level_decode() {
        let bytes = encode_pgm(&[0, 255, 128, 64], 2, 2).unwrap();
        let t = decode_image(&bytes).unwrap();
        assert_eq!(t.dims(), &[2, 2, 3]);
        let expect = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        for (i, &e) in expect.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(t.data()[i * 3 + c], e);
            }
        }
    }

    #[test]
    fn p4_magic_is_format_error() {
        let err = decode_image(b"P4\n2 2\n255\n\x00\x01\x02\x03").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let mut bytes = encode_pgm(&[1, 2, 3, 4], 2, 2).unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(decode_image(&bytes).unwrap_err(), Error::Format(_)));
    }

    #[test]
    fn nonstandard_maxval_is_format_error() {
        let err = decode_image(b"P5\n1 1\n65535\n\x00\x00").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("maxval"));
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let bytes = b"P5\n# generated fixture\n2 1\n255\n\x10\x20";
        let t = decode_image(bytes).unwrap();
        assert_eq!(t.dims(), &[1, 2, 3]);
        assert!((t.data()[0] - 16.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn p6_decodes_rgb_triplets() {
        let bytes = b"P6\n1 1\n255\n\x00\x80\xff";
        let t = decode_image(bytes).unwrap();
        assert_eq!(t.dims(), &[1, 1, 3]);
        assert_eq!(t.data()[0], 0.0);
        assert!((t.data()[1] - 128.0 / 255.0).abs() < 1e-7);
        assert_eq!(t.data()[2], 1.0);
    }

    #[test]
    fn decoded_values_stay_inside_unit_interval() {
        let gray: Vec<u8> = (0..=255).collect();
        let bytes = encode_pgm(&gray, 16, 16).unwrap();
        let t = decode_image(&bytes).unwrap();
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
