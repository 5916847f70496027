//! Binary PGM (P5) / PPM (P6) with maxval 255.

use std::fs;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload_offset: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(pos) {
                    pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            _ => return pos,
        }
    }
}

fn read_uint(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let start = skip_space_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(Error::format(start, format!("expected {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let value = text
        .parse::<usize>()
        .map_err(|_| Error::format(start, format!("{what} out of range")))?;
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::format(0, "magic must be P5 or P6")),
    };
    let (width, pos) = read_uint(bytes, 2, "width")?;
    let (height, pos) = read_uint(bytes, pos, "height")?;
    let (maxval, pos) = read_uint(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(pos, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(Error::format(pos, format!("unsupported maxval {maxval}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => {
            return Err(Error::format(
                pos,
                "expected single whitespace after maxval",
            ))
        }
    }
    Ok(Header {
        channels,
        width,
        height,
        payload_offset: pos + 1,
    })
}

/// Parses a P5/P6 byte stream into a planar float image (no rescaling).
pub fn decode_netpbm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let pixels = h.width * h.height;
    let needed = pixels * h.channels;
    let payload = &bytes[h.payload_offset..];
    if payload.len() < needed {
        return Err(Error::format(
            bytes.len(),
            format!("truncated payload: {} of {needed} bytes", payload.len()),
        ));
    }
    let mut data = vec![0.0f32; needed];
    for p in 0..pixels {
        for c in 0..h.channels {
            data[c * pixels + p] = f32::from(payload[p * h.channels + c]);
        }
    }
    Image::new(h.channels, h.height, h.width, data)
}

#[inline]
fn to_byte(v: f32) -> u8 {
    // clamp, then round half away from zero
    v.clamp(0.0, 255.0).round() as u8
}

/// Serializes 1- or 3-channel images as P5 or P6, maxval 255.
pub fn encode_netpbm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::arg(format!(
                "netpbm output needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    let pixels = img.width() * img.height();
    let c = img.channels();
    out.reserve(pixels * c);
    for p in 0..pixels {
        for ch in 0..c {
            out.push(to_byte(img.data()[ch * pixels + p]));
        }
    }
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_netpbm(&fs::read(path)?)
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_netpbm(img)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_p5_bytes_exactly() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 128, 255, 7]);
        let img = decode_netpbm(&bytes).unwrap();
        assert_eq!(img.shape(), (1, 2, 2));
        assert_eq!(img.data(), &[0.0, 128.0, 255.0, 7.0]);
    }

    #[test]
    fn decodes_p6_to_planar() {
        let mut bytes = b"P6 3 1 255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 255, 0, 0, 0, 255]);
        let img = decode_netpbm(&bytes).unwrap();
        assert_eq!(img.shape(), (3, 1, 3));
        assert_eq!(
            img.data(),
            &[255.0, 0.0, 0.0, 0.0, 255.0, 0.0, 0.0, 0.0, 255.0]
        );
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n1 1\n# maxval next\n255\n".to_vec();
        bytes.push(9);
        assert_eq!(decode_netpbm(&bytes).unwrap().data(), &[9.0]);
    }

    #[test]
    fn errors_carry_offsets() {
        match decode_netpbm(b"P3\n1 1\n255\n0") {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        match decode_netpbm(b"P5\n1 1\n65535\n\0\0") {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 12);
                assert!(message.contains("maxval"));
            }
            other => panic!("{other:?}"),
        }
        match decode_netpbm(b"P5\n2 2\n255\n\0\0") {
            Err(Error::Format {
                offset: 13,
                message,
            }) => assert!(message.contains("truncated")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            decode_netpbm(b"P5\nx 2\n255\n"),
            Err(Error::Format { offset: 3, .. })
        ));
    }

    #[test]
    fn save_clamps_and_rounds() {
        let img = Image::new(1, 1, 4, vec![255.7, -3.2, 127.5, 126.5]).unwrap();
        let bytes = encode_netpbm(&img).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[255, 0, 128, 127]);
    }

    #[test]
    fn rejects_two_channel_output() {
        assert!(encode_netpbm(&Image::zeros(2, 1, 1)).is_err());
    }

    proptest! {
        #[test]
        fn eight_bit_round_trip(
            channels in prop::sample::select(vec![1usize, 3]),
            h in 1usize..9,
            w in 1usize..9,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::rng::Rng::new(seed);
            let img = Image::from_fn(channels, h, w, |_, _, _| rng.below(256) as f32);
            let bytes = encode_netpbm(&img).unwrap();
            let back = decode_netpbm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_netpbm(&back).unwrap(), bytes);
        }
    }
}
