//! Binary file formats: Middlebury-style flow files and 8-bit portable
//! graymaps/pixmaps.
//!
//! Flow files are little-endian: the `f32` magic `202021.25`, `i32` width,
//! `i32` height, then `height × width` interleaved `(u, v)` `f32` pairs in
//! row-major order. Invalid pixels are written as the conventional
//! "unknown flow" value `1e10` and read back as invalid.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frame::Frame;

pub const FLOW_MAGIC: f32 = 202021.25;

/// Value written for pixels without a flow estimate.
pub const UNKNOWN_FLOW: f32 = 1e10;
const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;

pub fn encode_flow(field: &FlowField) -> Vec<u8> {
    let n = field.width() * field.height();
    let mut out = Vec::with_capacity(12 + 8 * n);
    out.extend_from_slice(&FLOW_MAGIC.to_le_bytes());
    out.extend_from_slice(&(field.width() as i32).to_le_bytes());
    out.extend_from_slice(&(field.height() as i32).to_le_bytes());
    for i in 0..n {
        let (u, v) = if field.valid()[i] {
            (field.u()[i], field.v()[i])
        } else {
            (UNKNOWN_FLOW, UNKNOWN_FLOW)
        };
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::format("flow file shorter than its 12-byte header"));
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    let magic = f32::from_le_bytes(word(0));
    if magic != FLOW_MAGIC {
        return Err(Error::format(format!(
            "bad flow magic {magic}, expected {FLOW_MAGIC}"
        )));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 {
        return Err(Error::format(format!("bad flow dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format("flow dimensions overflow"))?;
    let expected = n
        .checked_mul(8)
        .and_then(|p| p.checked_add(12))
        .ok_or_else(|| Error::format("flow dimensions overflow"))?;
    if bytes.len() < expected {
        return Err(Error::format(format!(
            "truncated flow payload: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..n {
        let fu = f32::from_le_bytes(word(12 + 8 * i));
        let fv = f32::from_le_bytes(word(16 + 8 * i));
        let known = fu.abs() <= UNKNOWN_FLOW_THRESHOLD && fv.abs() <= UNKNOWN_FLOW_THRESHOLD;
        u.push(fu);
        v.push(fv);
        valid.push(known);
    }
    FlowField::new(width, height, u, v, valid)
}

pub fn write_flow_file(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flow(field)).map_err(|e| Error::io(path, e))
}

pub fn read_flow_file(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes)
}

/// Parsed PNM header: magic, width, height, maxval, payload offset.
struct PnmHeader {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    offset: usize,
}

fn parse_pnm_header(bytes: &[u8]) -> Result<PnmHeader> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::format("not a PNM file"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and `#` comments may precede each header field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("malformed PNM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format("PNM header value out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("malformed PNM header"));
    }
    Ok(PnmHeader {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        offset: pos + 1,
    })
}

/// Reads a binary graymap (`P5`, maxval 255) as raw dimensions and bytes.
///
/// Unlike [`decode_pgm`] this accepts any size, which label masks need.
pub fn decode_pgm_raw(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let header = parse_pnm_header(bytes)?;
    if &header.magic != b"P5" {
        return Err(Error::format(format!(
            "expected binary graymap P5, found {}",
            String::from_utf8_lossy(&header.magic)
        )));
    }
    if header.maxval != 255 {
        return Err(Error::format(format!(
            "only 8-bit graymaps are supported (maxval {})",
            header.maxval
        )));
    }
    let n = header.width * header.height;
    let payload = &bytes[header.offset..];
    if payload.len() < n {
        return Err(Error::format(format!(
            "truncated graymap: {} of {n} pixels",
            payload.len()
        )));
    }
    Ok((header.width, header.height, payload[..n].to_vec()))
}

pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    let (w, h, data) = decode_pgm_raw(bytes)?;
    Frame::new(w, h, data).map_err(|e| Error::format(e.to_string()))
}

pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(path, frame.width(), frame.height(), frame.data())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm_raw(&bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(width, height, data)).map_err(|e| Error::io(path, e))
}

/// Binary pixmap (`P6`), interleaved RGB.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn write_ppm(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(width, height, rgb)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_pixel_flow_bytes() {
        // Byte-level oracle assembled by hand from the documented layout.
        let expected: Vec<u8> = [
            &b"PIEH"[..], // 202021.25 = 0x48454950
            &[1, 0, 0, 0],
            &[1, 0, 0, 0],
            &[0x00, 0x00, 0x80, 0x3F], // 1.0
            &[0x00, 0x00, 0x00, 0xC0], // -2.0
        ]
        .concat();
        let field = FlowField::uniform(1, 1, 1.0, -2.0);
        let bytes = encode_flow(&field);
        assert_eq!(bytes.len(), 20);
        assert_eq!(bytes, expected);
        assert_eq!(decode_flow(&bytes).unwrap(), field);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = encode_flow(&FlowField::uniform(2, 2, 0.5, 0.5));
        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_flow(truncated), Err(Error::Format(_))));
        bytes[..4].copy_from_slice(&0.0f32.to_le_bytes());
        assert!(matches!(decode_flow(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_flow(&[0u8; 5]), Err(Error::Format(_))));
    }

    #[test]
    fn invalid_pixels_survive_roundtrip() {
        let mut field = FlowField::uniform(3, 2, 1.5, -0.25);
        field.set(1, 1, None);
        let back = decode_flow(&encode_flow(&field)).unwrap();
        assert_eq!(back, field);
        assert_eq!(back.at(1, 1), None);
    }

    #[test]
    fn file_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        let field = FlowField::uniform(4, 3, -7.0, 0.125);
        write_flow_file(&field, &path).unwrap();
        assert_eq!(read_flow_file(&path).unwrap(), field);
        let frame = Frame::new(8, 8, (0..64).collect()).unwrap();
        let fpath = dir.path().join("f.pgm");
        write_frame(&frame, &fpath).unwrap();
        assert_eq!(read_frame(&fpath).unwrap(), frame);
    }

    #[test]
    fn graymap_roundtrip_and_rejections() {
        let bytes = encode_pgm(2, 2, &[0, 1, 254, 255]);
        assert_eq!(decode_pgm_raw(&bytes).unwrap(), (2, 2, vec![0, 1, 254, 255]));

        let with_comment = b"P5\n# made by hand\n2 2\n255\n\x01\x02\x03\x04";
        assert_eq!(decode_pgm_raw(with_comment).unwrap().2, vec![1, 2, 3, 4]);

        assert!(matches!(decode_pgm_raw(b"P2\n2 2\n255\n0 0 0 0"), Err(Error::Format(_))));
        assert!(matches!(
            decode_pgm_raw(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0"),
            Err(Error::Format(_))
        ));
        assert!(matches!(decode_pgm_raw(b"P5\n2 2\n255\n\0\0"), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn flow_roundtrip_is_bitwise(
            w in 1usize..12,
            h in 1usize..12,
            seed in any::<u64>(),
        ) {
            let n = w * h;
            let mut state = seed;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                // keep clear of NaN and the unknown-flow sentinel
                f32::from_bits((state >> 32) as u32 & 0x4dff_ffff) * if state & 1 == 0 { 1.0 } else { -1.0 }
            };
            let u: Vec<f32> = (0..n).map(|_| next()).collect();
            let v: Vec<f32> = (0..n).map(|_| next()).collect();
            let valid = vec![true; n];
            let field = FlowField::new(w, h, u, v, valid).unwrap();
            let back = decode_flow(&encode_flow(&field)).unwrap();
            prop_assert_eq!(back.width(), w);
            prop_assert_eq!(back.height(), h);
            for i in 0..n {
                prop_assert_eq!(back.u()[i].to_bits(), field.u()[i].to_bits());
                prop_assert_eq!(back.v()[i].to_bits(), field.v()[i].to_bits());
            }
        }
    }
}
