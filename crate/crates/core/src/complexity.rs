//! Spatial and temporal texture complexity from weighted 32x32 DCT energy.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{FrameBuffer, VideoSequence};

pub const BLOCK: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    #[serde(rename = "e")]
    pub e_spatial: f64,
    #[serde(rename = "h")]
    pub h_temporal: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameEnergy {
    /// Row-major over the complete 32x32 blocks.
    pub blocks: Vec<f64>,
    pub mean: f64,
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        let n = BLOCK as f64;
        for (k, row) in m.iter_mut().enumerate() {
            let a = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (i, v) in row.iter_mut().enumerate() {
                *v = a * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos();
            }
        }
        m
    })
}

fn weight(u: usize, v: usize) -> f64 {
    2f64.powf((u + v) as f64 / 2.0)
}

/// Weighted AC energy of the 32x32 block at `(x, y)`.
fn block_energy(frame: &FrameBuffer, x: usize, y: usize) -> f64 {
    let c = basis();
    // Rows first: tmp[r][v] = sum_n x[r][n] c[v][n].
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for (r, trow) in tmp.iter_mut().enumerate() {
        let src = &frame.row(y + r)[x..x + BLOCK];
        for (v, t) in trow.iter_mut().enumerate() {
            *t = src.iter().zip(&c[v]).map(|(&s, &b)| s as f64 * b).sum();
        }
    }
    let mut energy = 0.0;
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            if u == 0 && v == 0 {
                continue;
            }
            let coef: f64 = (0..BLOCK).map(|r| c[u][r] * tmp[r][v]).sum();
            energy += weight(u, v) * coef.abs();
        }
    }
    energy / (BLOCK * BLOCK) as f64
}

/// Per-block energies over the complete 32x32 blocks of `frame`; trailing
/// partial rows and columns are ignored.
pub fn frame_energy(frame: &FrameBuffer) -> Result<FrameEnergy> {
    let (bw, bh) = (frame.width() / BLOCK, frame.height() / BLOCK);
    if bw == 0 || bh == 0 {
        return Err(Error::FrameTooSmall(frame.width(), frame.height()));
    }
    if frame.width() % BLOCK != 0 || frame.height() % BLOCK != 0 {
        log::warn!(
            "{}x{} is not a multiple of {BLOCK}; dropping the partial border blocks",
            frame.width(),
            frame.height()
        );
    }
    let blocks: Vec<f64> = (0..bw * bh)
        .into_par_iter()
        .map(|i| block_energy(frame, (i % bw) * BLOCK, (i / bw) * BLOCK))
        .collect();
    let mean = blocks.iter().sum::<f64>() / blocks.len() as f64;
    Ok(FrameEnergy { blocks, mean })
}

pub fn sequence_complexity(seq: &VideoSequence) -> Result<ComplexityScore> {
    let energies = seq
        .frames
        .iter()
        .map(frame_energy)
        .collect::<Result<Vec<_>>>()?;
    if energies.is_empty() {
        return Ok(ComplexityScore {
            e_spatial: 0.0,
            h_temporal: 0.0,
        });
    }
    let e_spatial = energies.iter().map(|e| e.mean).sum::<f64>() / energies.len() as f64;
    let h_temporal = if energies.len() < 2 {
        0.0
    } else {
        energies
            .windows(2)
            .map(|w| {
                w[0].blocks
                    .iter()
                    .zip(&w[1].blocks)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / w[0].blocks.len() as f64
            })
            .sum::<f64>()
            / (energies.len() - 1) as f64
    };
    Ok(ComplexityScore {
        e_spatial,
        h_temporal,
    })
}
