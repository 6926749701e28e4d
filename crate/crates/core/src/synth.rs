//! Seeded synthetic test sequences: smooth multi-octave textures viewed
//! through a moving window, with optional moving sprites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frame_io::{FrameBuffer, VideoSequence};

pub const DEFAULT_SIZE: usize = 256;
pub const DEFAULT_FRAMES: usize = 33;

/// Value-noise texture: the sum of bilinearly interpolated random lattices.
#[derive(Clone, Debug)]
pub struct Texture {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Texture {
    /// `octaves` lists `(lattice spacing, amplitude)` pairs.
    pub fn generate(seed: u64, width: usize, height: usize, octaves: &[(usize, f32)]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0f32; width * height];
        for &(spacing, amp) in octaves {
            let gw = width / spacing + 2;
            let gh = height / spacing + 2;
            let lattice: Vec<f32> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
            for y in 0..height {
                let fy = y as f32 / spacing as f32;
                let (iy, ty) = (fy as usize, fy.fract());
                for x in 0..width {
                    let fx = x as f32 / spacing as f32;
                    let (ix, tx) = (fx as usize, fx.fract());
                    let at = |i: usize, j: usize| lattice[i * gw + j];
                    let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
                    let bot = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
                    values[y * width + x] += amp * (top * (1.0 - ty) + bot * ty);
                }
            }
        }
        Texture {
            width,
            height,
            values,
        }
    }

    /// Sample at integer coordinates, wrapping around the texture.
    pub fn at(&self, x: i64, y: i64) -> f32 {
        let x = x.rem_euclid(self.width as i64) as usize;
        let y = y.rem_euclid(self.height as i64) as usize;
        self.values[y * self.width + x]
    }
}

fn to_sample(v: f32) -> u8 {
    (128.0 + v).round().clamp(0.0, 255.0) as u8
}

/// A square patch of its own texture moving at constant velocity.
#[derive(Clone, Debug)]
struct Sprite {
    texture: Texture,
    size: usize,
    start: (f32, f32),
    velocity: (f32, f32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Static,
    Panning,
    HighMotion,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [SceneKind::Static, SceneKind::Panning, SceneKind::HighMotion];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Static => "static",
            SceneKind::Panning => "panning",
            SceneKind::HighMotion => "high-motion",
        }
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scene {s:?}")))
    }
}

/// Builds a `width`x`height` sequence of `frames` frames.
///
/// * `Static`: a smooth, low-contrast texture that never moves.
/// * `Panning`: a detailed texture under a slow diagonal pan.
/// * `HighMotion`: a busy texture panning fast, with sprites crossing it.
pub fn scene(kind: SceneKind, seed: u64, width: usize, height: usize, frames: usize) -> Result<VideoSequence> {
    let tex_w = width * 2;
    let tex_h = height * 2;
    let (background, pan, sprites) = match kind {
        SceneKind::Static => (
            Texture::generate(seed, tex_w, tex_h, &[(64, 40.0), (16, 10.0)]),
            (0.0, 0.0),
            Vec::new(),
        ),
        SceneKind::Panning => (
            Texture::generate(seed, tex_w, tex_h, &[(64, 50.0), (16, 25.0), (4, 10.0)]),
            (1.0, 0.5),
            Vec::new(),
        ),
        SceneKind::HighMotion => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let sprites = (0..4)
                .map(|k| {
                    let size = 24 + 8 * k;
                    Sprite {
                        texture: Texture::generate(seed + 1 + k as u64, size, size, &[(8, 60.0), (2, 20.0)]),
                        size,
                        start: (
                            rng.random_range(0.0..width as f32),
                            rng.random_range(0.0..height as f32),
                        ),
                        velocity: (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)),
                    }
                })
                .collect();
            (
                Texture::generate(seed, tex_w, tex_h, &[(32, 60.0), (8, 30.0), (2, 15.0)]),
                (3.0, -2.0),
                sprites,
            )
        }
    };

    let frames = (0..frames)
        .map(|t| {
            let ox = (pan.0 * t as f32).round() as i64;
            let oy = (pan.1 * t as f32).round() as i64;
            let mut samples: Vec<u8> = (0..height)
                .flat_map(|y| (0..width).map(move |x| (x, y)))
                .map(|(x, y)| to_sample(background.at(x as i64 + ox, y as i64 + oy)))
                .collect();
            for s in &sprites {
                let sx = (s.start.0 + s.velocity.0 * t as f32).round() as i64;
                let sy = (s.start.1 + s.velocity.1 * t as f32).round() as i64;
                for py in 0..s.size as i64 {
                    for px in 0..s.size as i64 {
                        let x = (sx + px).rem_euclid(width as i64) as usize;
                        let y = (sy + py).rem_euclid(height as i64) as usize;
                        samples[y * width + x] = to_sample(s.texture.at(px, py));
                    }
                }
            }
            FrameBuffer::new(width, height, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, 30.0)
}
