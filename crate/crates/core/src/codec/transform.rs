//! 4x4 Hadamard transform, scalar quantization and exp-Golomb rate estimate.

use crate::codec::QuantizerParams;
use crate::error::{Error, Result};

/// Symmetric 4x4 Hadamard matrix; `H * H = 4 I`.
const H4: [[i32; 4]; 4] = [[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, -1, 1], [1, -1, 1, -1]];

/// Unscaled separable butterfly `H X H` of one tile.
fn butterfly(x: &[i32; 16]) -> [i32; 16] {
    let mut tmp = [0i32; 16];
    for r in 0..4 {
        for c in 0..4 {
            tmp[r * 4 + c] = (0..4).map(|k| H4[r][k] * x[k * 4 + c]).sum();
        }
    }
    let mut out = [0i32; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = (0..4).map(|k| tmp[r * 4 + k] * H4[k][c]).sum();
        }
    }
    out
}

fn butterfly_f64(x: &[f64; 16]) -> [f64; 16] {
    let mut tmp = [0f64; 16];
    for r in 0..4 {
        for c in 0..4 {
            tmp[r * 4 + c] = (0..4).map(|k| H4[r][k] as f64 * x[k * 4 + c]).sum();
        }
    }
    let mut out = [0f64; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = (0..4).map(|k| tmp[r * 4 + k] * H4[k][c] as f64).sum();
        }
    }
    out
}

/// Orthonormal forward transform of one 4x4 tile (row-major).
pub fn hadamard4x4(x: &[i32; 16]) -> [f64; 16] {
    butterfly(x).map(|v| v as f64 / 4.0)
}

/// Inverse of [`hadamard4x4`].
pub fn inverse_hadamard4x4(c: &[f64; 16]) -> [f64; 16] {
    butterfly_f64(c).map(|v| v / 4.0)
}

/// Length in bits of the signed exp-Golomb code for a quantized level.
#[inline]
pub fn level_bits(q: i32) -> u64 {
    if q == 0 {
        0
    } else {
        let mag = q.unsigned_abs();
        2 * (31 - mag.leading_zeros()) as u64 + 3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformResult {
    /// Quantized levels; each tile's 16 levels sit at that tile's sample
    /// positions.
    pub levels: Vec<i32>,
    pub rate: u64,
    /// Dequantized residual after the inverse transform.
    pub residual: Vec<f64>,
}

/// Transforms, quantizes and reconstructs a `w`x`h` residual tile by tile.
pub fn transform_quant_rate(
    residual: &[i32],
    w: usize,
    h: usize,
    quant: &QuantizerParams,
) -> Result<TransformResult> {
    if w % 4 != 0 || h % 4 != 0 || w == 0 || h == 0 {
        return Err(Error::NotMultipleOf4(w, h));
    }
    debug_assert_eq!(residual.len(), w * h);
    let mut levels = vec![0i32; w * h];
    let mut recon = vec![0f64; w * h];
    let mut rate = 0u64;
    let inv_step = 1.0 / quant.qstep;
    for ty in (0..h).step_by(4) {
        for tx in (0..w).step_by(4) {
            let mut tile = [0i32; 16];
            for r in 0..4 {
                let src = (ty + r) * w + tx;
                tile[r * 4..r * 4 + 4].copy_from_slice(&residual[src..src + 4]);
            }
            if tile.iter().all(|&v| v == 0) {
                continue;
            }
            let coeffs = hadamard4x4(&tile);
            let mut deq = [0f64; 16];
            let mut any = false;
            for k in 0..16 {
                let q = (coeffs[k] * inv_step).round() as i32;
                rate += level_bits(q);
                levels[(ty + k / 4) * w + tx + k % 4] = q;
                deq[k] = q as f64 * quant.qstep;
                any |= q != 0;
            }
            if any {
                let rec = inverse_hadamard4x4(&deq);
                for r in 0..4 {
                    let dst = (ty + r) * w + tx;
                    recon[dst..dst + 4].copy_from_slice(&rec[r * 4..r * 4 + 4]);
                }
            }
        }
    }
    Ok(TransformResult {
        levels,
        rate,
        residual: recon,
    })
}
