//! Integer-pel motion search and block prediction.

use serde::{Deserialize, Serialize};

use crate::frame_io::FrameBuffer;

/// Motion vectors are confined to `[-SEARCH_RANGE, SEARCH_RANGE]` per component.
pub const SEARCH_RANGE: i32 = 8;
const STEP_RADII: [i32; 4] = [8, 4, 2, 1];
const VECTORS_PER_AXIS: usize = (2 * SEARCH_RANGE + 1) as usize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Motion {
    pub dx: i32,
    pub dy: i32,
}

impl Motion {
    pub fn bits(self) -> u64 {
        (self.dx.unsigned_abs() + self.dy.unsigned_abs()) as u64
    }
}

/// A reconstructed reference picture.
#[derive(Clone, Copy, Debug)]
pub struct Reference<'a> {
    pub poc: usize,
    pub frame: &'a FrameBuffer,
}

/// Pixel rectangle inside the picture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub samples: Vec<u8>,
    pub motion: Motion,
    /// Index into the reference list, `None` for intra.
    pub ref_index: Option<usize>,
    pub sad: u64,
}

/// Ordering key for candidate vectors: SAD, then vector length, then dy, dx.
#[inline]
fn candidate_key(sad: u64, dx: i32, dy: i32) -> (u64, u32, i32, i32) {
    (sad, dx.unsigned_abs() + dy.unsigned_abs(), dy, dx)
}

/// Admissible displacement range along one axis for a block at `pos` of
/// length `len` in a picture of length `extent`.
fn axis_range(pos: usize, len: usize, extent: usize) -> (i32, i32) {
    let lo = (-(pos as i32)).max(-SEARCH_RANGE);
    let hi = (extent as i32 - (pos + len) as i32).min(SEARCH_RANGE);
    (lo, hi)
}

/// Step search with radii 8, 4, 2, 1 starting from zero motion. Candidates
/// are clamped into the admissible ranges.
pub fn step_search(
    range_x: (i32, i32),
    range_y: (i32, i32),
    mut sad: impl FnMut(i32, i32) -> u64,
) -> (Motion, u64) {
    let mut best = (0, 0);
    let mut best_key = candidate_key(sad(0, 0), 0, 0);
    for r in STEP_RADII {
        let (cx, cy) = best;
        for oy in [-r, 0, r] {
            for ox in [-r, 0, r] {
                if ox == 0 && oy == 0 {
                    continue;
                }
                let dx = (cx + ox).clamp(range_x.0, range_x.1);
                let dy = (cy + oy).clamp(range_y.0, range_y.1);
                if (dx, dy) == best {
                    continue;
                }
                let key = candidate_key(sad(dx, dy), dx, dy);
                if key < best_key {
                    best_key = key;
                    best = (dx, dy);
                }
            }
        }
    }
    (
        Motion {
            dx: best.0,
            dy: best.1,
        },
        best_key.0,
    )
}

/// SAD between the original block at `rect` and the reference block
/// displaced by `(dx, dy)`.
pub fn block_sad(original: &FrameBuffer, reference: &FrameBuffer, rect: Rect, dx: i32, dy: i32) -> u64 {
    let rx = (rect.x as i32 + dx) as usize;
    let ry = (rect.y as i32 + dy) as usize;
    let mut acc = 0u64;
    for r in 0..rect.h {
        let a = &original.row(rect.y + r)[rect.x..rect.x + rect.w];
        let b = &reference.row(ry + r)[rx..rx + rect.w];
        acc += a
            .iter()
            .zip(b)
            .map(|(&p, &q)| (p as i32 - q as i32).unsigned_abs())
            .sum::<u32>() as u64;
    }
    acc
}

fn copy_block(frame: &FrameBuffer, x: usize, y: usize, w: usize, h: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        out.extend_from_slice(&frame.row(y + r)[x..x + w]);
    }
    out
}

/// Flat prediction at the rounded mean of the original block.
pub fn intra_prediction(original: &FrameBuffer, rect: Rect) -> Prediction {
    let n = (rect.w * rect.h) as u64;
    let sum: u64 = (0..rect.h)
        .map(|r| {
            original.row(rect.y + r)[rect.x..rect.x + rect.w]
                .iter()
                .map(|&v| v as u64)
                .sum::<u64>()
        })
        .sum();
    let mean = ((sum + n / 2) / n) as u8;
    let samples = vec![mean; rect.w * rect.h];
    let sad = copy_block(original, rect.x, rect.y, rect.w, rect.h)
        .iter()
        .map(|&v| (v as i64 - mean as i64).unsigned_abs())
        .sum();
    Prediction {
        samples,
        motion: Motion::default(),
        ref_index: None,
        sad,
    }
}

/// Anything able to report the SAD of a displaced block.
pub trait SadSource {
    fn sad(&self, ref_index: usize, rect: Rect, dx: i32, dy: i32) -> u64;
}

/// Computes SADs directly from the pictures.
pub struct DirectSad<'a> {
    pub original: &'a FrameBuffer,
    pub refs: &'a [Reference<'a>],
}

impl SadSource for DirectSad<'_> {
    fn sad(&self, ref_index: usize, rect: Rect, dx: i32, dy: i32) -> u64 {
        block_sad(self.original, self.refs[ref_index].frame, rect, dx, dy)
    }
}

/// Best inter prediction over all references, or intra when `refs` is empty.
pub fn predict_with(
    sads: &impl SadSource,
    rect: Rect,
    refs: &[Reference<'_>],
    original: &FrameBuffer,
) -> Prediction {
    if refs.is_empty() {
        return intra_prediction(original, rect);
    }
    let range_x = axis_range(rect.x, rect.w, original.width());
    let range_y = axis_range(rect.y, rect.h, original.height());
    let mut best: Option<(u64, u32, i32, i32, usize)> = None;
    for (i, _) in refs.iter().enumerate() {
        let (mv, sad) = step_search(range_x, range_y, |dx, dy| sads.sad(i, rect, dx, dy));
        let key = candidate_key(sad, mv.dx, mv.dy);
        let cand = (key.0, key.1, key.2, key.3, i);
        if best.is_none_or(|b| cand < b) {
            best = Some(cand);
        }
    }
    let (sad, _, dy, dx, index) = best.expect("at least one reference");
    let samples = copy_block(
        refs[index].frame,
        (rect.x as i32 + dx) as usize,
        (rect.y as i32 + dy) as usize,
        rect.w,
        rect.h,
    );
    Prediction {
        samples,
        motion: Motion { dx, dy },
        ref_index: Some(index),
        sad,
    }
}

/// Direct-SAD prediction of `rect`.
pub fn predict(rect: Rect, refs: &[Reference<'_>], original: &FrameBuffer) -> Prediction {
    predict_with(&DirectSad { original, refs }, rect, refs, original)
}

/// Per-vector SADs of every 4x4 block in a region, stored as 2-D prefix sums
/// so that the SAD of any 4-aligned rectangle at any vector costs four
/// lookups.
pub struct SadTable {
    origin_x: usize,
    origin_y: usize,
    /// Prefix-table width in entries (blocks across + 1).
    stride: usize,
    /// `[ref][vector]` prefix tables.
    tables: Vec<Vec<Vec<u32>>>,
}

impl SadTable {
    /// Builds tables for the `w`x`h` region at `(x, y)`; all coordinates must
    /// be multiples of 4.
    pub fn build(
        original: &FrameBuffer,
        refs: &[Reference<'_>],
        x: usize,
        y: usize,
        w: usize,
        h: usize,
    ) -> Self {
        debug_assert!(x % 4 == 0 && y % 4 == 0 && w % 4 == 0 && h % 4 == 0);
        let (bw, bh) = (w / 4, h / 4);
        let stride = bw + 1;
        let (fw, fh) = (original.width() as i32, original.height() as i32);
        let tables = refs
            .iter()
            .map(|reference| {
                let mut per_vector = Vec::with_capacity(VECTORS_PER_AXIS * VECTORS_PER_AXIS);
                for dy in -SEARCH_RANGE..=SEARCH_RANGE {
                    for dx in -SEARCH_RANGE..=SEARCH_RANGE {
                        let mut prefix = vec![0u32; stride * (bh + 1)];
                        for by in 0..bh {
                            let mut row_acc = 0u32;
                            for bx in 0..bw {
                                let px = (x + bx * 4) as i32 + dx;
                                let py = (y + by * 4) as i32 + dy;
                                // Unreachable vectors for this block; never queried.
                                let sad = if px < 0 || py < 0 || px + 4 > fw || py + 4 > fh {
                                    0
                                } else {
                                    block_sad(
                                        original,
                                        reference.frame,
                                        Rect {
                                            x: x + bx * 4,
                                            y: y + by * 4,
                                            w: 4,
                                            h: 4,
                                        },
                                        dx,
                                        dy,
                                    ) as u32
                                };
                                row_acc += sad;
                                prefix[(by + 1) * stride + bx + 1] =
                                    prefix[by * stride + bx + 1] + row_acc;
                            }
                        }
                        per_vector.push(prefix);
                    }
                }
                per_vector
            })
            .collect();
        SadTable {
            origin_x: x,
            origin_y: y,
            stride,
            tables,
        }
    }
}

impl SadSource for SadTable {
    fn sad(&self, ref_index: usize, rect: Rect, dx: i32, dy: i32) -> u64 {
        let v = ((dy + SEARCH_RANGE) as usize) * VECTORS_PER_AXIS + (dx + SEARCH_RANGE) as usize;
        let t = &self.tables[ref_index][v];
        let x0 = (rect.x - self.origin_x) / 4;
        let y0 = (rect.y - self.origin_y) / 4;
        let x1 = x0 + rect.w / 4;
        let y1 = y0 + rect.h / 4;
        let s = self.stride;
        (t[y1 * s + x1] + t[y0 * s + x0] - t[y0 * s + x1] - t[y1 * s + x0]) as u64
    }
}
