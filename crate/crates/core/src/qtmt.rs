//! Quad-tree plus multi-type-tree partitioning: split modes, legality,
//! partition trees and the per-CTU partition maps consumed by the
//! reference-guided searcher.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CTU_SIZE: usize = 128;
pub const MIN_CU_SIZE: usize = 4;
pub const MAX_MTT_DEPTH: u8 = 3;
/// Largest dimension an MTT split may be applied to.
pub const MAX_MTT_SIZE: usize = 64;
/// Side of one partition-map cell in pixels.
pub const MAP_CELL: usize = 8;
/// Cells per CTU row/column.
pub const MAP_DIM: usize = CTU_SIZE / MAP_CELL;
pub const MAP_CELLS: usize = MAP_DIM * MAP_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitMode {
    Ns,
    Qt,
    Bth,
    Btv,
    Tth,
    Ttv,
}

impl SplitMode {
    /// All modes in tie-break order.
    pub const ALL: [SplitMode; 6] = [
        SplitMode::Ns,
        SplitMode::Qt,
        SplitMode::Bth,
        SplitMode::Btv,
        SplitMode::Tth,
        SplitMode::Ttv,
    ];

    /// Bits spent signalling the mode.
    pub fn signal_bits(self) -> u64 {
        match self {
            SplitMode::Ns => 1,
            SplitMode::Qt => 2,
            SplitMode::Bth | SplitMode::Btv => 3,
            SplitMode::Tth | SplitMode::Ttv => 4,
        }
    }

    pub fn is_mtt(self) -> bool {
        !matches!(self, SplitMode::Ns | SplitMode::Qt)
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitMode::Ns => "NS",
            SplitMode::Qt => "QT",
            SplitMode::Bth => "BTH",
            SplitMode::Btv => "BTV",
            SplitMode::Tth => "TTH",
            SplitMode::Ttv => "TTV",
        };
        f.write_str(s)
    }
}

/// A set of split modes, iterated in tie-break order.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SplitSet(u8);

impl SplitSet {
    pub const EMPTY: SplitSet = SplitSet(0);
    pub const ALL: SplitSet = SplitSet(0b11_1111);

    pub fn of(modes: &[SplitMode]) -> Self {
        SplitSet(modes.iter().fold(0, |acc, m| acc | m.bit()))
    }

    pub fn contains(self, mode: SplitMode) -> bool {
        self.0 & mode.bit() != 0
    }

    pub fn insert(&mut self, mode: SplitMode) {
        self.0 |= mode.bit();
    }

    pub fn remove(&mut self, mode: SplitMode) {
        self.0 &= !mode.bit();
    }

    pub fn intersect(self, other: SplitSet) -> SplitSet {
        SplitSet(self.0 & other.0)
    }

    /// The set without NS.
    pub fn splits(self) -> SplitSet {
        SplitSet(self.0 & !SplitMode::Ns.bit())
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = SplitMode> {
        SplitMode::ALL.into_iter().filter(move |m| self.contains(*m))
    }
}

impl fmt::Debug for SplitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<SplitMode> for SplitSet {
    fn from_iter<I: IntoIterator<Item = SplitMode>>(iter: I) -> Self {
        let mut s = SplitSet::EMPTY;
        for m in iter {
            s.insert(m);
        }
        s
    }
}

/// Position, size and depth counters of one coding unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CuGeometry {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub qt_depth: u8,
    pub mtt_depth: u8,
    pub in_mtt: bool,
}

impl CuGeometry {
    pub fn ctu_root(x: usize, y: usize) -> Self {
        CuGeometry {
            x,
            y,
            w: CTU_SIZE,
            h: CTU_SIZE,
            qt_depth: 0,
            mtt_depth: 0,
            in_mtt: false,
        }
    }

    /// A CU with no split history, e.g. the root of a sub-problem.
    pub fn block(x: usize, y: usize, w: usize, h: usize) -> Self {
        CuGeometry {
            x,
            y,
            w,
            h,
            qt_depth: 0,
            mtt_depth: 0,
            in_mtt: false,
        }
    }

    #[inline]
    pub fn max_dim(&self) -> usize {
        self.w.max(self.h)
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// The part of the CU inside a `width`x`height` frame as `(w, h)`, or
    /// `None` when the CU lies entirely outside.
    pub fn visible(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        if self.x >= width || self.y >= height {
            return None;
        }
        Some(((width - self.x).min(self.w), (height - self.y).min(self.h)))
    }

    pub fn is_inside(&self, width: usize, height: usize) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }

    fn child(&self, dx: usize, dy: usize, w: usize, h: usize, mode: SplitMode) -> Self {
        let mtt = mode.is_mtt();
        CuGeometry {
            x: self.x + dx,
            y: self.y + dy,
            w,
            h,
            qt_depth: self.qt_depth + u8::from(!mtt),
            mtt_depth: self.mtt_depth + u8::from(mtt),
            in_mtt: self.in_mtt || mtt,
        }
    }
}

/// Modes permitted for `cu`. NS is always included; picture-boundary rules
/// are applied by the searcher.
pub fn legal_splits(cu: &CuGeometry) -> SplitSet {
    let mut set = SplitSet::of(&[SplitMode::Ns]);
    if cu.w == cu.h && cu.w >= 16 && !cu.in_mtt {
        set.insert(SplitMode::Qt);
    }
    if cu.mtt_depth < MAX_MTT_DEPTH && cu.max_dim() <= MAX_MTT_SIZE {
        if cu.h >= 2 * MIN_CU_SIZE {
            set.insert(SplitMode::Bth);
        }
        if cu.w >= 2 * MIN_CU_SIZE {
            set.insert(SplitMode::Btv);
        }
        if cu.h >= 4 * MIN_CU_SIZE {
            set.insert(SplitMode::Tth);
        }
        if cu.w >= 4 * MIN_CU_SIZE {
            set.insert(SplitMode::Ttv);
        }
    }
    set
}

/// Children of `cu` under `mode`, ordered top-to-bottom / left-to-right.
pub fn apply_split(cu: &CuGeometry, mode: SplitMode) -> Result<Vec<CuGeometry>> {
    if mode == SplitMode::Ns || !legal_splits(cu).contains(mode) {
        return Err(Error::IllegalSplit {
            mode,
            w: cu.w,
            h: cu.h,
        });
    }
    Ok(split_children(cu, mode))
}

/// `apply_split` without the legality check.
pub(crate) fn split_children(cu: &CuGeometry, mode: SplitMode) -> Vec<CuGeometry> {
    let (w, h) = (cu.w, cu.h);
    match mode {
        SplitMode::Ns => Vec::new(),
        SplitMode::Qt => vec![
            cu.child(0, 0, w / 2, h / 2, mode),
            cu.child(w / 2, 0, w / 2, h / 2, mode),
            cu.child(0, h / 2, w / 2, h / 2, mode),
            cu.child(w / 2, h / 2, w / 2, h / 2, mode),
        ],
        SplitMode::Bth => vec![
            cu.child(0, 0, w, h / 2, mode),
            cu.child(0, h / 2, w, h / 2, mode),
        ],
        SplitMode::Btv => vec![
            cu.child(0, 0, w / 2, h, mode),
            cu.child(w / 2, 0, w / 2, h, mode),
        ],
        SplitMode::Tth => vec![
            cu.child(0, 0, w, h / 4, mode),
            cu.child(0, h / 4, w, h / 2, mode),
            cu.child(0, 3 * h / 4, w, h / 4, mode),
        ],
        SplitMode::Ttv => vec![
            cu.child(0, 0, w / 4, h, mode),
            cu.child(w / 4, 0, w / 2, h, mode),
            cu.child(3 * w / 4, 0, w / 4, h, mode),
        ],
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub geometry: CuGeometry,
    pub split: SplitMode,
    pub children: Vec<PartitionTree>,
}

impl PartitionTree {
    pub fn leaf(geometry: CuGeometry) -> Self {
        PartitionTree {
            geometry,
            split: SplitMode::Ns,
            children: Vec::new(),
        }
    }

    pub fn leaves(&self) -> Vec<&CuGeometry> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a CuGeometry>) {
        if self.children.is_empty() {
            out.push(&self.geometry);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }

    /// Number of nodes, internal and leaf.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }
}

/// Widths and heights of the CUs covering each 8x8 cell of one CTU.
///
/// Cell `i * 16 + j` covers rows `ctu_y + 8i ..` and columns `ctu_x + 8j ..`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMap {
    pub ctu_x: usize,
    pub ctu_y: usize,
    pub widths: Vec<u8>,
    pub heights: Vec<u8>,
}

impl PartitionMap {
    /// A map with every cell set to `(w, h)`.
    pub fn uniform(ctu_x: usize, ctu_y: usize, w: u8, h: u8) -> Self {
        PartitionMap {
            ctu_x,
            ctu_y,
            widths: vec![w; MAP_CELLS],
            heights: vec![h; MAP_CELLS],
        }
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> (u8, u8) {
        let k = i * MAP_DIM + j;
        (self.widths[k], self.heights[k])
    }

    /// Text record: `CTU x y poc`, then the widths, then the heights.
    pub fn dump(&self, poc: usize) -> String {
        let join = |v: &[u8]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!(
            "CTU {} {} {}\n{}\n{}\n",
            self.ctu_x,
            self.ctu_y,
            poc,
            join(&self.widths),
            join(&self.heights)
        )
    }
}

/// Rasterizes the leaves of a CTU tree onto its 16x16 cell grid.
///
/// Cells outside a `frame_w`x`frame_h` picture hold 0. A cell shared by
/// several leaves (4-pixel CUs) keeps the largest width and the largest
/// height among them.
pub fn record_map(tree: &PartitionTree, frame_w: usize, frame_h: usize) -> PartitionMap {
    let (cx, cy) = (tree.geometry.x, tree.geometry.y);
    let mut map = PartitionMap::uniform(cx, cy, 0, 0);
    for leaf in tree.leaves() {
        let Some((vw, vh)) = leaf.visible(frame_w, frame_h) else {
            continue;
        };
        let j0 = (leaf.x - cx) / MAP_CELL;
        let j1 = (leaf.x - cx + vw - 1) / MAP_CELL;
        let i0 = (leaf.y - cy) / MAP_CELL;
        let i1 = (leaf.y - cy + vh - 1) / MAP_CELL;
        for i in i0..=i1 {
            for j in j0..=j1 {
                let k = i * MAP_DIM + j;
                map.widths[k] = map.widths[k].max(leaf.w as u8);
                map.heights[k] = map.heights[k].max(leaf.h as u8);
            }
        }
    }
    map
}

/// Largest CU width or height recorded in any cell overlapped by `cu`'s
/// footprint, over all given collocated maps. Sentinel cells are ignored;
/// 128 is returned when nothing valid overlaps.
pub fn max_sz_lookup(maps: &[&PartitionMap], cu: &CuGeometry) -> Result<usize> {
    let mut best = 0u8;
    for map in maps {
        if cu.x < map.ctu_x
            || cu.y < map.ctu_y
            || cu.x + cu.w > map.ctu_x + CTU_SIZE
            || cu.y + cu.h > map.ctu_y + CTU_SIZE
        {
            return Err(Error::OutsideCtu);
        }
        let j0 = (cu.x - map.ctu_x) / MAP_CELL;
        let j1 = (cu.x - map.ctu_x + cu.w - 1) / MAP_CELL;
        let i0 = (cu.y - map.ctu_y) / MAP_CELL;
        let i1 = (cu.y - map.ctu_y + cu.h - 1) / MAP_CELL;
        for i in i0..=i1 {
            for j in j0..=j1 {
                let (w, h) = map.cell(i, j);
                best = best.max(w).max(h);
            }
        }
    }
    Ok(if best == 0 { CTU_SIZE } else { best as usize })
}
