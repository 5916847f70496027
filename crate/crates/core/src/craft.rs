//! Patch-craft target construction.
//!
//! The input frame is tiled by non-overlapping `n × n` patches in one of `n²`
//! offset grids. Every patch is replaced by its nearest neighbour (squared L2,
//! all channels) found in the other frames of the burst inside a `B × B` box
//! centred on the patch, and the stitched result is cropped back to the image
//! support. The input frame itself never takes part in the search.
//!
//! Frames are mirror-padded exactly like the input for the active grid, and a
//! candidate may sit anywhere fully inside the padded frame. Search boxes are
//! cut at the padded frame border rather than extended further.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{mirror_pad, Burst, Image};
use crate::rng::Rng;

pub const DEFAULT_SEARCH_BOX: usize = 65;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CraftParams {
    /// Patch side `n`.
    pub patch_size: usize,
    /// Search box side `B` (odd).
    pub search_box: usize,
    /// Neighbours kept per patch; one is drawn uniformly when `knn > 1`.
    pub knn: usize,
    pub seed: u64,
}

impl CraftParams {
    pub fn new(patch_size: usize, search_box: usize, knn: usize, seed: u64) -> Result<Self> {
        let p = CraftParams {
            patch_size,
            search_box,
            knn,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    /// Patch size from the correlated-Gaussian table, default box, single NN.
    pub fn for_noise(sigma: f64, kernel_size: usize, seed: u64) -> Result<Self> {
        let n = default_patch_size(sigma, kernel_size).ok_or_else(|| {
            Error::arg(format!(
                "no tabulated patch size for sigma={sigma}, k={kernel_size}"
            ))
        })?;
        Self::new(n, DEFAULT_SEARCH_BOX, 1, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::arg("patch size must be at least 1"));
        }
        if self.search_box == 0 || self.search_box.is_multiple_of(2) {
            return Err(Error::arg(format!(
                "search box must be odd and positive, got {}",
                self.search_box
            )));
        }
        if self.knn == 0 {
            return Err(Error::arg("knn must be at least 1"));
        }
        Ok(())
    }
}

/// Patch size for flat-kernel correlated Gaussian noise, indexed by `σ ∈ {5,10,15,20}`
/// and `k ∈ {2,3,4}`.
pub fn default_patch_size(sigma: f64, kernel_size: usize) -> Option<usize> {
    const TABLE: [[usize; 4]; 3] = [[19, 27, 31, 33], [19, 37, 41, 43], [25, 43, 43, 45]];
    let col = [5.0, 10.0, 15.0, 20.0].iter().position(|&s| s == sigma)?;
    let row = kernel_size.checked_sub(2).filter(|&r| r < 3)?;
    Some(TABLE[row][col])
}

/// Patch size for real sensor noise, indexed by ISO.
pub fn real_noise_patch_size(iso: u32) -> Option<usize> {
    match iso {
        1600 => Some(15),
        3200 => Some(25),
        6400 => Some(27),
        12800 => Some(35),
        25600 => Some(37),
        _ => None,
    }
}

/// One of the `n²` tilings of the mirror-padded plane.
///
/// Grid `(k, l)` starts at `(-k, -l)` relative to the image origin, so the
/// padded image has `k` rows on top and `l` columns on the left, plus enough
/// on the bottom and right to complete the last patch row and column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetGrid {
    pub offset: (usize, usize),
    pub patch_size: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub patch_rows: usize,
    pub patch_cols: usize,
}

impl OffsetGrid {
    pub fn new(height: usize, width: usize, n: usize, offset: (usize, usize)) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("patch size must be at least 1"));
        }
        if n > height || n > width {
            return Err(Error::arg(format!(
                "patch size {n} exceeds image {height}x{width}"
            )));
        }
        if offset.0 >= n || offset.1 >= n {
            return Err(Error::arg(format!("offset {offset:?} outside 0..{n}")));
        }
        Ok(OffsetGrid {
            offset,
            patch_size: n,
            image_height: height,
            image_width: width,
            patch_rows: (height + offset.0).div_ceil(n),
            patch_cols: (width + offset.1).div_ceil(n),
        })
    }

    pub fn pad_top(&self) -> usize {
        self.offset.0
    }

    pub fn pad_left(&self) -> usize {
        self.offset.1
    }

    pub fn pad_bottom(&self) -> usize {
        self.padded_height() - self.image_height - self.offset.0
    }

    pub fn pad_right(&self) -> usize {
        self.padded_width() - self.image_width - self.offset.1
    }

    pub fn padded_height(&self) -> usize {
        self.patch_rows * self.patch_size
    }

    pub fn padded_width(&self) -> usize {
        self.patch_cols * self.patch_size
    }

    pub fn patch_count(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    /// Top-left corners in padded coordinates, row-major.
    pub fn patch_origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.patch_size;
        (0..self.patch_rows).flat_map(move |i| (0..self.patch_cols).map(move |j| (i * n, j * n)))
    }

    pub fn pad(&self, img: &Image) -> Result<Image> {
        mirror_pad(
            img,
            self.pad_top(),
            self.pad_bottom(),
            self.pad_left(),
            self.pad_right(),
        )
    }
}

/// All `n²` grids, ordered by offset `(k, l)` row-major.
pub fn offset_grids(height: usize, width: usize, n: usize) -> Result<Vec<OffsetGrid>> {
    let mut grids = Vec::with_capacity(n * n);
    for k in 0..n {
        for l in 0..n {
            grids.push(OffsetGrid::new(height, width, n, (k, l))?);
        }
    }
    Ok(grids)
}

/// A square window into an image.
#[derive(Clone, Copy, Debug)]
pub struct PatchView<'a> {
    pub image: &'a Image,
    pub top: usize,
    pub left: usize,
    pub size: usize,
}

impl<'a> PatchView<'a> {
    pub fn new(image: &'a Image, top: usize, left: usize, size: usize) -> Result<Self> {
        if top + size > image.height() || left + size > image.width() {
            return Err(Error::arg(format!(
                "patch {size}x{size} at ({top},{left}) outside {}x{}",
                image.height(),
                image.width()
            )));
        }
        Ok(PatchView {
            image,
            top,
            left,
            size,
        })
    }
}

/// Unnormalized squared L2 distance, accumulated in `f64` over channels, then
/// rows, then columns.
pub fn patch_distance(a: PatchView<'_>, b: PatchView<'_>) -> Result<f64> {
    if a.size != b.size || a.image.channels() != b.image.channels() {
        return Err(Error::shape(format!(
            "patches {}x{}x{} and {}x{}x{}",
            a.image.channels(),
            a.size,
            a.size,
            b.image.channels(),
            b.size,
            b.size
        )));
    }
    let mut acc = 0.0f64;
    for c in 0..a.image.channels() {
        for r in 0..a.size {
            for col in 0..a.size {
                let d = f64::from(a.image.get(c, a.top + r, a.left + col))
                    - f64::from(b.image.get(c, b.top + r, b.left + col));
                acc += d * d;
            }
        }
    }
    Ok(acc)
}

/// A candidate patch in one of the reference frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    /// Index of the frame within the burst; never the input frame.
    pub frame_index: usize,
    /// Top-left corner in padded coordinates.
    pub position: (usize, usize),
    pub distance: f64,
}

impl Match {
    fn precedes(&self, other: &Match) -> bool {
        self.distance
            .total_cmp(&other.distance)
            .then(self.frame_index.cmp(&other.frame_index))
            .then(self.position.cmp(&other.position))
            .is_lt()
    }
}

/// Burst frames padded for one grid.
pub struct PaddedBurst<'a> {
    burst: &'a Burst,
    grid: OffsetGrid,
    frames: Vec<Image>,
    // the same samples widened once, so the scan loop does no conversions
    wide: Vec<Vec<f64>>,
}

impl<'a> PaddedBurst<'a> {
    pub fn new(burst: &'a Burst, grid: OffsetGrid) -> Result<Self> {
        let (_, h, w) = burst.shape();
        if (h, w) != (grid.image_height, grid.image_width) {
            return Err(Error::shape(format!(
                "grid for {}x{} used with {h}x{w} burst",
                grid.image_height, grid.image_width
            )));
        }
        let frames = burst
            .frames()
            .iter()
            .map(|f| grid.pad(f))
            .collect::<Result<Vec<_>>>()?;
        let wide = frames
            .iter()
            .map(|f| f.data().iter().map(|&v| f64::from(v)).collect())
            .collect();
        Ok(PaddedBurst {
            burst,
            grid,
            frames,
            wide,
        })
    }

    pub fn grid(&self) -> &OffsetGrid {
        &self.grid
    }

    pub fn frame(&self, index: usize) -> &Image {
        &self.frames[index]
    }

    /// Exhaustive box search for the patch of the padded input at `origin`.
    pub fn nearest_neighbors(&self, origin: (usize, usize), params: &CraftParams) -> Vec<Match> {
        let n = params.patch_size;
        let half = params.search_box / 2;
        let (channels, ph, pw) = self.frames[0].shape();
        let plane = ph * pw;
        let input = &self.wide[self.burst.input_index()];
        let (r0, c0) = origin;
        let row_lo = r0.saturating_sub(half);
        let row_hi = (r0 + half).min(ph - n);
        let col_lo = c0.saturating_sub(half);
        let col_hi = (c0 + half).min(pw - n);
        let ncols = col_hi - col_lo + 1;

        let mut best: Vec<Match> = Vec::with_capacity(params.knn + 1);
        let mut acc = vec![0f64; ncols];
        for f in self.burst.reference_indices() {
            let cand = &self.wide[f];
            for rho in row_lo..=row_hi {
                acc.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..channels {
                    let p_plane = &input[c * plane..][..plane];
                    let q_plane = &cand[c * plane..][..plane];
                    for r in 0..n {
                        let p_row = &p_plane[(r0 + r) * pw + c0..][..n];
                        let q_row = &q_plane[(rho + r) * pw + col_lo..][..ncols + n - 1];
                        for (col, &pv) in p_row.iter().enumerate() {
                            // one sequential sum per candidate; vectorized across candidates
                            for (a, &qv) in acc.iter_mut().zip(&q_row[col..col + ncols]) {
                                let d = pv - qv;
                                *a += d * d;
                            }
                        }
                    }
                }
                for (t, &distance) in acc.iter().enumerate() {
                    let m = Match {
                        frame_index: f,
                        position: (rho, col_lo + t),
                        distance,
                    };
                    if best.len() == params.knn && !m.precedes(&best[params.knn - 1]) {
                        continue;
                    }
                    let at = best.partition_point(|b| b.precedes(&m));
                    best.insert(at, m);
                    best.truncate(params.knn);
                }
            }
        }
        best
    }
}

/// The `min(K, candidates)` best matches for the patch at `origin` of `grid`.
pub fn nearest_neighbors(
    burst: &Burst,
    grid: &OffsetGrid,
    origin: (usize, usize),
    params: &CraftParams,
) -> Result<Vec<Match>> {
    params.validate()?;
    check_grid(grid, params)?;
    let padded = PaddedBurst::new(burst, *grid)?;
    let n = params.patch_size;
    if origin.0 + n > grid.padded_height() || origin.1 + n > grid.padded_width() {
        return Err(Error::arg(format!("origin {origin:?} outside padded grid")));
    }
    Ok(padded.nearest_neighbors(origin, params))
}

fn check_grid(grid: &OffsetGrid, params: &CraftParams) -> Result<()> {
    if grid.patch_size != params.patch_size {
        return Err(Error::arg(format!(
            "grid patch size {} differs from params {}",
            grid.patch_size, params.patch_size
        )));
    }
    Ok(())
}

/// Result of stitching one grid.
#[derive(Clone, Debug)]
pub struct PatchCraft {
    pub image: Image,
    /// The match used for each patch, in grid order.
    pub chosen: Vec<Match>,
}

/// Builds the patch-craft image for `grid`, also returning the match used per patch.
///
/// With `knn > 1` one `rng.uniform()` is drawn per patch in grid order before
/// the parallel search, and patch `p` takes match `floor(u_p · len)`.
pub fn build_patchcraft_detailed(
    burst: &Burst,
    grid: &OffsetGrid,
    params: &CraftParams,
    rng: &mut Rng,
) -> Result<PatchCraft> {
    params.validate()?;
    check_grid(grid, params)?;
    let padded = PaddedBurst::new(burst, *grid)?;
    let origins: Vec<(usize, usize)> = grid.patch_origins().collect();
    let picks: Vec<f64> = if params.knn > 1 {
        origins.iter().map(|_| rng.uniform()).collect()
    } else {
        Vec::new()
    };

    let chosen: Vec<Match> = origins
        .par_iter()
        .enumerate()
        .map(|(p, &origin)| {
            let matches = padded.nearest_neighbors(origin, params);
            let pick = match picks.get(p) {
                Some(u) => ((u * matches.len() as f64) as usize).min(matches.len() - 1),
                None => 0,
            };
            matches[pick]
        })
        .collect();

    let n = params.patch_size;
    let (channels, h, w) = burst.shape();
    let pw = grid.padded_width();
    let mut stitched = vec![0f32; channels * grid.padded_height() * pw];
    let plane_len = grid.padded_height() * pw;
    for (&(r0, c0), m) in origins.iter().zip(&chosen) {
        let src = padded.frame(m.frame_index);
        for c in 0..channels {
            let plane = src.plane(c);
            for r in 0..n {
                let from = &plane[(m.position.0 + r) * pw + m.position.1..][..n];
                stitched[c * plane_len + (r0 + r) * pw + c0..][..n].copy_from_slice(from);
            }
        }
    }
    let full = Image::new(channels, grid.padded_height(), pw, stitched)?;
    let image = full.crop(grid.pad_top(), grid.pad_left(), h, w)?;
    Ok(PatchCraft { image, chosen })
}

pub fn build_patchcraft(
    burst: &Burst,
    grid: &OffsetGrid,
    params: &CraftParams,
    rng: &mut Rng,
) -> Result<Image> {
    Ok(build_patchcraft_detailed(burst, grid, params, rng)?.image)
}

/// What was chosen when sampling a target; enough to regenerate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CraftMetadata {
    pub offset: (usize, usize),
    pub input_index: usize,
    pub patch_size: usize,
    pub search_box: usize,
    pub knn: usize,
    pub seed: u64,
    pub patch_count: usize,
    /// Patches taken from each burst frame; the input frame's entry is always 0.
    pub patches_per_frame: Vec<usize>,
    pub mean_distance: f64,
    pub min_distance: f64,
    pub max_distance: f64,
}

/// Draws one of the `n²` grids uniformly (`rng.below(n²)`, offset `(i / n, i % n)`)
/// and builds its patch-craft image.
pub fn sample_target(
    burst: &Burst,
    params: &CraftParams,
    rng: &mut Rng,
) -> Result<(Image, CraftMetadata)> {
    params.validate()?;
    let n = params.patch_size;
    let (_, h, w) = burst.shape();
    let idx = rng.below((n * n) as u64) as usize;
    let grid = OffsetGrid::new(h, w, n, (idx / n, idx % n))?;
    let craft = build_patchcraft_detailed(burst, &grid, params, rng)?;

    let mut patches_per_frame = vec![0usize; burst.len()];
    for m in &craft.chosen {
        patches_per_frame[m.frame_index] += 1;
    }
    let dists = craft.chosen.iter().map(|m| m.distance);
    let meta = CraftMetadata {
        offset: grid.offset,
        input_index: burst.input_index(),
        patch_size: n,
        search_box: params.search_box,
        knn: params.knn,
        seed: params.seed,
        patch_count: craft.chosen.len(),
        patches_per_frame,
        mean_distance: dists.clone().sum::<f64>() / craft.chosen.len() as f64,
        min_distance: dists.clone().fold(f64::INFINITY, f64::min),
        max_distance: dists.fold(f64::NEG_INFINITY, f64::max),
    };
    Ok((craft.image, meta))
}
