//! PRFM binary feature-map files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"PRFM" | H: u32 | W: u32 | C: u32 | H·W·C × f64 (row-major v,u,c) | H·W × u8 mask (1 = valid)
//! ```

use std::path::Path;

use crate::error::{PrismError, Result};
use crate::grid::FeatureMap;

pub const PRFM_MAGIC: &[u8; 4] = b"PRFM";
const HEADER_LEN: usize = 16;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(PrismError::Format(msg.into()))
}

pub fn encode_prfm(map: &FeatureMap) -> Vec<u8> {
    let (h, w, c) = map.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + map.values().len() * 8 + map.pixel_count());
    out.extend_from_slice(PRFM_MAGIC);
    for dim in [h, w, c] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for x in map.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend(map.mask().iter().map(|&b| u8::from(b)));
    out
}

/// Decodes a PRFM payload. Rejects bad magic, zero dimensions, truncated or
/// over-long payloads and mask bytes other than 0/1.
pub fn decode_prfm(bytes: &[u8]) -> Result<FeatureMap> {
    if bytes.len() < HEADER_LEN {
        return format_err(format!("PRFM header truncated: {} bytes", bytes.len()));
    }
    if &bytes[..4] != PRFM_MAGIC {
        return format_err("bad PRFM magic");
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    if h == 0 || w == 0 || c == 0 {
        return format_err(format!("PRFM zero dimension {h}x{w}x{c}"));
    }
    let pixels = h.checked_mul(w);
    let values = pixels.and_then(|p| p.checked_mul(c));
    let expected = values
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(pixels?))
        .and_then(|n| n.checked_add(HEADER_LEN));
    let Some(expected) = expected else {
        return format_err("PRFM dimensions overflow");
    };
    if bytes.len() != expected {
        return format_err(format!("PRFM payload is {} bytes, header implies {expected}", bytes.len()));
    }
    let n = h * w * c;
    let body = &bytes[HEADER_LEN..HEADER_LEN + 8 * n];
    let vals = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    let mut mask = Vec::with_capacity(h * w);
    for &b in &bytes[HEADER_LEN + 8 * n..] {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            other => return format_err(format!("PRFM mask byte {other} is not 0 or 1")),
        }
    }
    FeatureMap::from_values(h, w, c, vals)?.with_mask(mask)
}

pub fn read_prfm(path: impl AsRef<Path>) -> Result<FeatureMap> {
    decode_prfm(&std::fs::read(path)?)
}

pub fn write_prfm(path: impl AsRef<Path>, map: &FeatureMap) -> Result<()> {
    std::fs::write(path, encode_prfm(map))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_map, occlude, Fill};
    use proptest::prelude::*;

    #[test]
    fn byte_layout_is_fixed() {
        let m = FeatureMap::from_values(1, 2, 1, vec![1.0, -2.5]).unwrap();
        let m = m.with_mask(vec![true, false]).unwrap();
        let bytes = encode_prfm(&m);
        assert_eq!(&bytes[..4], b"PRFM");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[24..32], &(-2.5f64).to_le_bytes());
        assert_eq!(&bytes[32..], &[1, 0]);
    }

    #[test]
    fn rejects_malformed_payloads() {
        let m = make_map(2, 3, 2, Fill::Seeded(1)).unwrap();
        let good = encode_prfm(&m);
        assert_eq!(decode_prfm(&good).unwrap(), m);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_prfm(&bad_magic), Err(PrismError::Format(_))));
        assert!(decode_prfm(&good[..good.len() - 1]).is_err());
        assert!(decode_prfm(&good[..10]).is_err());
        let mut long = good.clone();
        long.push(1);
        assert!(decode_prfm(&long).is_err());
        let mut bad_mask = good.clone();
        *bad_mask.last_mut().unwrap() = 2;
        assert!(decode_prfm(&bad_mask).is_err());
        let mut zero = good.clone();
        zero[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(decode_prfm(&zero).is_err());
        let mut huge = good;
        huge[4..16].copy_from_slice(&[0xff; 12]);
        assert!(decode_prfm(&huge).is_err());
    }

    #[test]
    fn file_round_trip_keeps_mask() {
        let m = occlude(&make_map(4, 4, 3, Fill::Seeded(5)).unwrap(), 1, 0, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.prfm");
        write_prfm(&p, &m).unwrap();
        assert_eq!(read_prfm(&p).unwrap(), m);
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_prfm(&bytes);
        }

        #[test]
        fn decode_inverts_encode(h in 1usize..6, w in 1usize..6, c in 1usize..4, seed in any::<u64>()) {
            let m = make_map(h, w, c, Fill::Seeded(seed)).unwrap();
            prop_assert_eq!(decode_prfm(&encode_prfm(&m)).unwrap(), m);
        }
    }
}
