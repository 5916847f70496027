//! Planar float images and tensors, mirror padding and PSNR.

mod netpbm;
mod pcrf;

pub use netpbm::{decode_netpbm, encode_netpbm, load_image, save_image};
pub use pcrf::{decode_tensor, encode_tensor, load_tensor, save_tensor, PCRF_MAGIC, PCRF_VERSION};

use crate::error::{Error, Result};

/// Channel-planar image: sample `(c, row, col)` lives at `(c * height + row) * width + col`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::arg(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} samples for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite sample at index {i}")));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for r in 0..height {
                for col in 0..width {
                    data.push(f(c, r, col));
                }
            }
        }
        Image {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, row: usize, col: usize) -> usize {
        (c * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[self.index(c, row, col)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f32) {
        let i = self.index(c, row, col);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    /// Copies the `height × width` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::arg(format!(
                "crop {height}x{width} at ({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Image::from_fn(self.channels, height, width, |c, r, col| {
            self.get(c, top + r, left + col)
        }))
    }

    /// Elementwise `self + other` in float arithmetic; shapes must agree.
    pub fn add_tensor(&self, t: &Tensor) -> Result<Image> {
        if t.len() != self.len() {
            return Err(Error::shape(format!(
                "tensor of {} samples added to image of {}",
                t.len(),
                self.len()
            )));
        }
        let data = self.data.iter().zip(t.data()).map(|(a, b)| a + b).collect();
        Image::new(self.channels, self.height, self.width, data)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.channels, self.height, self.width],
            data: self.data.clone(),
        }
    }

    /// Accepts rank-3 `[C, H, W]` or rank-2 `[H, W]` tensors.
    pub fn from_tensor(t: Tensor) -> Result<Image> {
        let (c, h, w) = match t.shape() {
            [c, h, w] => (*c, *h, *w),
            [h, w] => (1, *h, *w),
            other => {
                return Err(Error::shape(format!(
                    "expected [C,H,W] or [H,W], got {other:?}"
                )))
            }
        };
        Image::new(c, h, w, t.data)
    }
}

/// Row-major float tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::arg("tensor rank must be at least 1"));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} samples, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite sample at index {i}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Frames of one scene, with the denoiser input at `input_index`.
#[derive(Clone, Debug)]
pub struct Burst {
    frames: Vec<Image>,
    input_index: usize,
}

impl Burst {
    pub fn new(frames: Vec<Image>, input_index: usize) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::arg(format!(
                "a burst needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if input_index >= frames.len() {
            return Err(Error::arg(format!(
                "input index {input_index} out of range for {} frames",
                frames.len()
            )));
        }
        let shape = frames[0].shape();
        if let Some(i) = frames.iter().position(|f| f.shape() != shape) {
            return Err(Error::shape(format!(
                "frame {i} has shape {:?}, frame 0 has {shape:?}",
                frames[i].shape()
            )));
        }
        Ok(Burst {
            frames,
            input_index,
        })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn input_index(&self) -> usize {
        self.input_index
    }

    pub fn input(&self) -> &Image {
        &self.frames[self.input_index]
    }

    /// Same frames, different input.
    pub fn with_input(&self, input_index: usize) -> Result<Burst> {
        Burst::new(self.frames.clone(), input_index)
    }

    /// Indices of the reference set: every frame except the input.
    pub fn reference_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.frames.len()).filter(move |&i| i != self.input_index)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.frames[0].shape()
    }
}

/// Reflects a coordinate into `0..dim` without repeating the edge sample.
///
/// Valid for `-(dim - 1) <= p <= 2 * (dim - 1)`.
#[inline]
pub fn mirror_index(p: isize, dim: usize) -> usize {
    let last = dim as isize - 1;
    let q = if p < 0 {
        -p
    } else if p > last {
        2 * last - p
    } else {
        p
    };
    debug_assert!(
        (0..=last).contains(&q),
        "mirror index {p} out of range for {dim}"
    );
    q as usize
}

/// Mirror padding: `padded(-1) == original(1)`.
pub fn mirror_pad(
    img: &Image,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Result<Image> {
    let (c, h, w) = img.shape();
    for (name, pad, dim) in [
        ("top", top, h),
        ("bottom", bottom, h),
        ("left", left, w),
        ("right", right, w),
    ] {
        if pad >= dim {
            return Err(Error::arg(format!(
                "{name} pad {pad} must be smaller than dimension {dim}"
            )));
        }
    }
    let ph = h + top + bottom;
    let pw = w + left + right;
    let col_map: Vec<usize> = (0..pw)
        .map(|j| mirror_index(j as isize - left as isize, w))
        .collect();
    let mut data = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        let plane = img.plane(ch);
        for i in 0..ph {
            let src = mirror_index(i as isize - top as isize, h) * w;
            data.extend(col_map.iter().map(|&j| plane[src + j]));
        }
    }
    Ok(Image {
        channels: c,
        height: ph,
        width: pw,
        data,
    })
}

/// Peak signal-to-noise ratio over the flattened sample array.
///
/// Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape(format!(
            "psnr of {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let sse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}
