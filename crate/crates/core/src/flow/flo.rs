//! Middlebury `.flo` container.
//!
//! Layout (all little-endian): `f32` magic `202021.25`, `i32` width, `i32`
//! height, then `height * width` interleaved `(u, v)` pairs of `f32` in
//! row-major order. Values are stored at single precision, so a flow whose
//! components are representable as `f32` round-trips bit-exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;

pub const FLO_MAGIC: f32 = 202021.25;
const HEADER_LEN: usize = 12;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let n = flow.height() * flow.width();
    let mut buf = Vec::with_capacity(HEADER_LEN + n * 8);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    buf.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        buf.extend_from_slice(&(*u as f32).to_le_bytes());
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    buf
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            ".flo header truncated: {} bytes",
            bytes.len()
        )));
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!(
            ".flo magic is {magic}, expected {FLO_MAGIC}"
        )));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 {
        return Err(Error::Format(format!(
            ".flo dimensions {width}x{height} are not positive"
        )));
    }
    let n = width as usize * height as usize;
    let expected = HEADER_LEN + n * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            ".flo payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let off = HEADER_LEN + i * 8;
        u.push(f32::from_le_bytes(word(off)) as f64);
        v.push(f32::from_le_bytes(word(off + 4)) as f64);
    }
    FlowField::new(height as usize, width as usize, u, v)
        .map_err(|e| Error::Format(format!(".flo payload rejected: {e}")))
}

pub fn write_flow(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_one_layout_is_28_bytes() {
        let f = FlowField::new(1, 2, vec![1.0, 2.0], vec![-0.5, 0.25]).unwrap();
        let bytes = encode_flo(&f);
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[0..4], &202021.25f32.to_le_bytes());
        assert_eq!(&bytes[4..8], &2i32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1i32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-0.5f32).to_le_bytes());
    }

    #[test]
    fn bad_magic_and_truncation_are_format_errors() {
        let f = FlowField::constant(2, 2, 1.0, 1.0);
        let mut bytes = encode_flo(&f);
        bytes[0] ^= 0xff;
        assert!(matches!(decode_flo(&bytes), Err(Error::Format(_))));
        let bytes = encode_flo(&f);
        assert!(matches!(decode_flo(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(decode_flo(&bytes[..5]), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.flo");
        let f = FlowField::from_fn(3, 5, |y, x| (x as f64 * 0.25, -(y as f64) * 1.5)).unwrap();
        write_flow(&path, &f).unwrap();
        assert_eq!(read_flow(&path).unwrap(), f);
        assert!(read_flow(dir.path().join("missing.flo")).is_err());
    }

    proptest! {
        #[test]
        fn f32_flows_round_trip_bitwise(
            (h, w, u, v) in (1usize..5, 1usize..5).prop_flat_map(|(h, w)| (
                Just(h), Just(w),
                proptest::collection::vec(-1e4f32..1e4, h * w),
                proptest::collection::vec(-1e4f32..1e4, h * w),
            ))
        ) {
            let f = FlowField::new(h, w,
                u.iter().map(|&x| x as f64).collect(),
                v.iter().map(|&x| x as f64).collect()).unwrap();
            let bytes = encode_flo(&f);
            let back = decode_flo(&bytes).unwrap();
            prop_assert!(back.u().iter().zip(f.u()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(back.v().iter().zip(f.v()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(encode_flo(&back), bytes);
        }
    }
}
