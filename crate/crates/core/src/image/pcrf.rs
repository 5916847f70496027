//! PCRF float tensor files.
//!
//! Layout, all little-endian: the 4-byte magic `PCRF`, a `u32` format version,
//! a `u32` rank, `rank` `u32` dimension sizes, then the samples as IEEE-754
//! `f32` in row-major order.

use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const PCRF_MAGIC: &[u8; 4] = b"PCRF";
pub const PCRF_VERSION: u32 = 1;

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.shape().len() + 4 * t.len());
    out.extend_from_slice(PCRF_MAGIC);
    out.extend_from_slice(&PCRF_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], pos: usize, what: &str) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(pos, format!("truncated {what}")))
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.get(..4) != Some(PCRF_MAGIC.as_slice()) {
        return Err(Error::format(0, "bad magic, expected PCRF"));
    }
    let version = read_u32(bytes, 4, "version")?;
    if version != PCRF_VERSION {
        return Err(Error::format(
            4,
            format!("version {version}, expected {PCRF_VERSION}"),
        ));
    }
    let rank = read_u32(bytes, 8, "rank")? as usize;
    if rank == 0 {
        return Err(Error::format(8, "rank 0 tensors are not allowed"));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut pos = 12;
    for i in 0..rank {
        shape.push(read_u32(bytes, pos, &format!("shape entry {i}"))? as usize);
        pos += 4;
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(12, "shape overflows"))?;
    let payload = &bytes[pos..];
    if payload.len() != count * 4 {
        return Err(Error::format(
            pos,
            format!(
                "payload length {} does not match shape {shape:?} ({} bytes)",
                payload.len(),
                count * 4
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(shape, data).map_err(|e| Error::format(pos, e.to_string()))
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tensor(t))?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_is_36_bytes() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_tensor(&t);
        assert_eq!(bytes.len(), 36);
        assert_eq!(&bytes[..4], b"PCRF");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_rank_zero() {
        let mut bytes = b"PCRF".to_vec();
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(0u32.to_le_bytes());
        assert!(matches!(
            decode_tensor(&bytes),
            Err(Error::Format { offset: 8, .. })
        ));
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn rejects_bad_magic_version_and_length() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let good = encode_tensor(&t);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_tensor(&bad),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_tensor(&bad),
            Err(Error::Format { offset: 4, .. })
        ));

        let bad = &good[..good.len() - 1];
        assert!(matches!(
            decode_tensor(bad),
            Err(Error::Format { offset: 16, .. })
        ));

        let mut bad = good;
        bad.extend([0, 0, 0, 0]);
        assert!(decode_tensor(&bad).is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(
            shape in prop::collection::vec(1usize..5, 1..4),
            bits in prop::collection::vec(any::<u32>(), 64),
        ) {
            let n: usize = shape.iter().product();
            // arbitrary finite bit patterns, including negatives and subnormals
            let data: Vec<f32> = (0..n)
                .map(|i| {
                    let v = f32::from_bits(bits[i % bits.len()]);
                    if v.is_finite() { v } else { f32::from_bits(bits[i % bits.len()] & 0x807f_ffff) }
                })
                .collect();
            let t = Tensor::new(shape, data).unwrap();
            let bytes = encode_tensor(&t);
            let back = decode_tensor(&bytes).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(encode_tensor(&back), bytes);
        }
    }
}
