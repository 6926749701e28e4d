//! Toy closed-loop block coder: prediction, 4x4 Hadamard residual coding and
//! the rate-distortion cost of a single coding unit.

pub mod motion;
pub mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{sse, FrameBuffer};
use crate::qtmt::{CuGeometry, SplitMode};

pub use motion::{predict, Motion, Prediction, Rect, Reference, SadSource, SadTable};
pub use transform::{transform_quant_rate, TransformResult};

pub const MAX_QP: i32 = 51;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerParams {
    pub qp: i32,
    pub qstep: f64,
    pub lambda: f64,
}

impl QuantizerParams {
    /// `qstep = 2^((qp - 4) / 6)`, `lambda = 0.57 * 2^((qp - 12) / 3)`.
    pub fn from_qp(qp: i32) -> Result<Self> {
        if !(0..=MAX_QP).contains(&qp) {
            return Err(Error::QpOutOfRange(qp));
        }
        Ok(QuantizerParams {
            qp,
            qstep: 2f64.powf((qp - 4) as f64 / 6.0),
            lambda: 0.57 * 2f64.powf((qp - 12) as f64 / 3.0),
        })
    }

    /// Explicit step and multiplier, bypassing the QP mapping.
    pub fn with_step(qstep: f64, lambda: f64) -> Self {
        QuantizerParams {
            qp: -1,
            qstep,
            lambda,
        }
    }
}

/// Distortion (SSE), rate (bits) and `j = distortion + lambda * rate`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RdCost {
    pub distortion: u64,
    pub rate: u64,
    pub j: f64,
}

impl RdCost {
    pub fn new(distortion: u64, rate: u64, lambda: f64) -> Self {
        RdCost {
            distortion,
            rate,
            j: distortion as f64 + lambda * rate as f64,
        }
    }

    /// Cost of a split node: the children's costs plus the mode's signalling.
    pub fn split(mode: SplitMode, children: impl IntoIterator<Item = RdCost>, lambda: f64) -> Self {
        let (d, r) = children
            .into_iter()
            .fold((0, mode.signal_bits()), |(d, r), c| (d + c.distortion, r + c.rate));
        RdCost::new(d, r, lambda)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodedBlock {
    pub geometry: CuGeometry,
    /// Reconstruction of the in-frame part of the CU.
    pub reconstruction: Vec<u8>,
    pub rect: Rect,
    pub cost: RdCost,
    /// POC of the chosen reference, `None` for intra.
    pub pred_ref_poc: Option<usize>,
    pub motion: Motion,
}

/// Codes the in-frame part of `cu` as a single leaf signalled with `signal`,
/// taking SADs from `sads`.
pub fn code_block(
    sads: &impl SadSource,
    cu: &CuGeometry,
    original: &FrameBuffer,
    refs: &[Reference<'_>],
    quant: &QuantizerParams,
    signal: SplitMode,
) -> Result<CodedBlock> {
    let (w, h) = cu
        .visible(original.width(), original.height())
        .ok_or(Error::OutsideFrame)?;
    let rect = Rect { x: cu.x, y: cu.y, w, h };
    let pred = motion::predict_with(sads, rect, refs, original);

    let mut orig = Vec::with_capacity(w * h);
    for r in 0..h {
        orig.extend_from_slice(&original.row(cu.y + r)[cu.x..cu.x + w]);
    }
    let residual: Vec<i32> = orig
        .iter()
        .zip(&pred.samples)
        .map(|(&o, &p)| o as i32 - p as i32)
        .collect();
    let tq = transform_quant_rate(&residual, w, h, quant)?;
    let reconstruction: Vec<u8> = pred
        .samples
        .iter()
        .zip(&tq.residual)
        .map(|(&p, &r)| (p as f64 + r).round().clamp(0.0, 255.0) as u8)
        .collect();

    let mut rate = tq.rate + signal.signal_bits();
    if pred.ref_index.is_some() {
        rate += pred.motion.bits();
        if refs.len() == 2 {
            rate += 1;
        }
    }
    let distortion = sse(&orig, &reconstruction);
    Ok(CodedBlock {
        geometry: *cu,
        reconstruction,
        rect,
        cost: RdCost::new(distortion, rate, quant.lambda),
        pred_ref_poc: pred.ref_index.map(|i| refs[i].poc),
        motion: pred.motion,
    })
}

/// RD cost of coding `cu` unsplit, computing SADs directly.
pub fn rd_cost_cu(
    cu: &CuGeometry,
    original: &FrameBuffer,
    refs: &[Reference<'_>],
    quant: &QuantizerParams,
    signal: SplitMode,
) -> Result<CodedBlock> {
    let sads = motion::DirectSad { original, refs };
    code_block(&sads, cu, original, refs, quant, signal)
}
