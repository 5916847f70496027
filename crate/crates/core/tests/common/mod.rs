//! Slow reference implementations shared by the integration tests.
#![allow(dead_code)]

use pcst::image::{Burst, Image};
use pcst::rng::Rng;

/// Reflect-without-repeat index, written out as a loop.
pub fn reflect(mut p: i64, dim: i64) -> usize {
    loop {
        if p < 0 {
            p = -p;
        } else if p >= dim {
            p = 2 * (dim - 1) - p;
        } else {
            return p as usize;
        }
    }
}

/// Sample of `img` at padded coordinates for a grid starting at `(-k, -l)`.
pub fn padded_sample(img: &Image, c: usize, pr: usize, pc: usize, k: usize, l: usize) -> f32 {
    let r = reflect(pr as i64 - k as i64, img.height() as i64);
    let col = reflect(pc as i64 - l as i64, img.width() as i64);
    img.data()[(c * img.height() + r) * img.width() + col]
}

pub fn grid_shape(h: usize, w: usize, n: usize, k: usize, l: usize) -> (usize, usize) {
    let mut rows = 0;
    while rows * n < h + k {
        rows += 1;
    }
    let mut cols = 0;
    while cols * n < w + l {
        cols += 1;
    }
    (rows, cols)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefMatch {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
    pub distance: f64,
}

/// Every candidate in the clamped box over all non-input frames, fully sorted.
#[allow(clippy::too_many_arguments)]
pub fn ref_neighbors(
    burst: &Burst,
    n: usize,
    b: usize,
    knn: usize,
    k: usize,
    l: usize,
    origin: (usize, usize),
) -> Vec<RefMatch> {
    let (channels, h, w) = burst.shape();
    let (rows, cols) = grid_shape(h, w, n, k, l);
    let (ph, pw) = (rows * n, cols * n);
    let half = (b / 2) as i64;
    let input = burst.input();
    let mut all = Vec::new();
    for (f, frame) in burst.frames().iter().enumerate() {
        if f == burst.input_index() {
            continue;
        }
        for dy in -half..=half {
            for dx in -half..=half {
                let rr = origin.0 as i64 + dy;
                let cc = origin.1 as i64 + dx;
                if rr < 0 || cc < 0 || rr as usize + n > ph || cc as usize + n > pw {
                    continue;
                }
                let (rr, cc) = (rr as usize, cc as usize);
                let mut d = 0.0f64;
                for c in 0..channels {
                    for i in 0..n {
                        for j in 0..n {
                            let a = padded_sample(input, c, origin.0 + i, origin.1 + j, k, l);
                            let q = padded_sample(frame, c, rr + i, cc + j, k, l);
                            let e = f64::from(a) - f64::from(q);
                            d += e * e;
                        }
                    }
                }
                all.push(RefMatch {
                    frame: f,
                    row: rr,
                    col: cc,
                    distance: d,
                });
            }
        }
    }
    all.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap()
            .then(a.frame.cmp(&b.frame))
            .then(a.row.cmp(&b.row))
            .then(a.col.cmp(&b.col))
    });
    all.truncate(knn);
    all
}

/// Whole target for grid `(k, l)`, with one uniform per patch when `knn > 1`.
#[allow(clippy::too_many_arguments)]
pub fn ref_craft(
    burst: &Burst,
    n: usize,
    b: usize,
    knn: usize,
    k: usize,
    l: usize,
    rng: &mut Rng,
) -> Image {
    let (channels, h, w) = burst.shape();
    let (rows, cols) = grid_shape(h, w, n, k, l);
    let mut chosen = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let m = ref_neighbors(burst, n, b, knn, k, l, (i * n, j * n));
            let pick = if knn > 1 {
                (rng.uniform() * m.len() as f64).floor() as usize
            } else {
                0
            };
            chosen.push(m[pick]);
        }
    }
    Image::from_fn(channels, h, w, |c, r, col| {
        let (pr, pc) = (r + k, col + l);
        let m = chosen[(pr / n) * cols + pc / n];
        let src = &burst.frames()[m.frame];
        padded_sample(src, c, m.row + pr % n, m.col + pc % n, k, l)
    })
}

/// Offset draw followed by `ref_craft`, mirroring the sampling protocol.
pub fn ref_sample_target(
    burst: &Burst,
    n: usize,
    b: usize,
    knn: usize,
    rng: &mut Rng,
) -> (Image, (usize, usize)) {
    let idx = rng.below((n * n) as u64) as usize;
    let (k, l) = (idx / n, idx % n);
    (ref_craft(burst, n, b, knn, k, l, rng), (k, l))
}

pub fn random_burst(rng: &mut Rng, channels: usize, h: usize, w: usize, m: usize) -> Burst {
    // coarse levels so exact ties actually occur
    let frames = (0..m)
        .map(|_| Image::from_fn(channels, h, w, |_, _, _| (rng.below(6) * 40) as f32))
        .collect();
    let input = rng.below(m as u64) as usize;
    Burst::new(frames, input).unwrap()
}
