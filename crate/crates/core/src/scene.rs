//! Procedural clean bursts for desk-scale experiments.
//!
//! A scene is a continuous intensity function: low-frequency waves, soft
//! blobs, and soft-edged rectangles. Frames sample it at camera offsets that
//! advance by a fixed velocity, and one blob moves on its own, so consecutive
//! frames differ by motion only. Sampling the function directly avoids any
//! resampling blur.

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Camera speed in pixels per frame.
    pub motion: f64,
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

struct Blob {
    x: f64,
    y: f64,
    radius: f64,
    amp: [f64; 3],
}

struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    amp: [f64; 3],
}

struct Scene {
    base: [f64; 3],
    waves: Vec<Wave>,
    blobs: Vec<Blob>,
    rects: Vec<Rect>,
    mover_velocity: (f64, f64),
}

fn colour(rng: &mut Rng, scale: f64) -> [f64; 3] {
    let shared = rng.gaussian() * scale;
    // mostly shared across channels, with a little tint
    [0, 1, 2].map(|_| shared + 0.25 * scale * rng.gaussian())
}

fn soft_step(t: f64) -> f64 {
    1.0 / (1.0 + (-t / 1.5).exp())
}

impl Scene {
    fn random(rng: &mut Rng, p: &SceneParams) -> Scene {
        let extent = p.height.max(p.width) as f64;
        let waves = (0..4)
            .map(|_| {
                let period = 25.0 + rng.uniform() * 70.0;
                let angle = rng.uniform() * std::f64::consts::TAU;
                let k = std::f64::consts::TAU / period;
                Wave {
                    fx: k * angle.cos(),
                    fy: k * angle.sin(),
                    phase: rng.uniform() * std::f64::consts::TAU,
                    amp: colour(rng, 14.0),
                }
            })
            .collect();
        let blobs = (0..7)
            .map(|_| Blob {
                x: rng.uniform() * extent * 1.5 - extent * 0.25,
                y: rng.uniform() * extent * 1.5 - extent * 0.25,
                radius: 4.0 + rng.uniform() * 12.0,
                amp: colour(rng, 35.0),
            })
            .collect();
        let rects = (0..3)
            .map(|_| {
                let (x0, y0) = (rng.uniform() * extent, rng.uniform() * extent);
                let (w, h) = (8.0 + rng.uniform() * 30.0, 8.0 + rng.uniform() * 30.0);
                Rect {
                    x0,
                    y0,
                    x1: x0 + w,
                    y1: y0 + h,
                    amp: colour(rng, 25.0),
                }
            })
            .collect();
        let angle = rng.uniform() * std::f64::consts::TAU;
        Scene {
            base: [0, 1, 2].map(|_| 110.0 + rng.uniform() * 30.0),
            waves,
            blobs,
            rects,
            mover_velocity: (1.5 * angle.cos(), 1.5 * angle.sin()),
        }
    }

    fn sample(&self, c: usize, x: f64, y: f64, frame: f64) -> f64 {
        let mut v = self.base[c];
        for w in &self.waves {
            v += w.amp[c] * (w.fx * x + w.fy * y + w.phase).sin();
        }
        for (i, b) in self.blobs.iter().enumerate() {
            // the first blob moves independently of the camera
            let (bx, by) = if i == 0 {
                (
                    b.x + self.mover_velocity.0 * frame,
                    b.y + self.mover_velocity.1 * frame,
                )
            } else {
                (b.x, b.y)
            };
            let d2 = (x - bx).powi(2) + (y - by).powi(2);
            v += b.amp[c] * (-d2 / (2.0 * b.radius * b.radius)).exp();
        }
        for r in &self.rects {
            let inside = soft_step(x - r.x0)
                * soft_step(r.x1 - x)
                * soft_step(y - r.y0)
                * soft_step(r.y1 - y);
            v += r.amp[c] * inside;
        }
        v.clamp(5.0, 250.0)
    }
}

/// Clean frames of one random scene; frame `t` sees the camera shifted by
/// `t · motion` along a random direction.
pub fn render_burst(params: &SceneParams, rng: &mut Rng) -> Vec<Image> {
    let scene = Scene::random(rng, params);
    let angle = rng.uniform() * std::f64::consts::TAU;
    let (vx, vy) = (params.motion * angle.cos(), params.motion * angle.sin());
    (0..params.frames)
        .map(|t| {
            let tf = t as f64;
            Image::from_fn(params.channels, params.height, params.width, |c, r, col| {
                scene.sample(c.min(2), col as f64 + vx * tf, r as f64 + vy * tf, tf) as f32
            })
        })
        .collect()
}
