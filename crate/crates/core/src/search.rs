//! Recursive RD partition search.
//!
//! Two searchers share one recursion. The exhaustive searcher evaluates every
//! legal QTMT tree. The reference-guided searcher bounds each CU by the CU
//! sizes stored in the collocated partition maps of its nearest
//! lower-layer frames:
//!
//! * a CU larger than the reference maximum skips its NS evaluation and must
//!   split (unless no split is legal, in which case it falls back to the
//!   exhaustive rule);
//! * when the reference maximum exceeds 16, a CU at or below a quarter of it
//!   is evaluated as NS only and not split further;
//! * a reference maximum of a full CTU carries no information and leaves the
//!   CU unbounded.
//!
//! The recursion is memoized on CU geometry. Counters follow the recursion
//! as an unmemoized encoder would walk it: every visit of a CU whose NS cost
//! is evaluated adds one `rd_node`, even if the cost was cached.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{code_block, QuantizerParams, RdCost, Reference, SadTable};
use crate::error::{Error, Result};
use crate::frame_io::{psnr, FrameBuffer, VideoSequence};
use crate::gop::{build_schedule, FrameCoding};
use crate::qtmt::{
    legal_splits, max_sz_lookup, record_map, split_children, CuGeometry, PartitionMap,
    PartitionTree, SplitMode, SplitSet, CTU_SIZE, MIN_CU_SIZE,
};

/// Reference maximum at or below which early termination stays off.
pub const EARLY_SKIP_THRESHOLD: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearcherKind {
    Exhaustive,
    Etrf,
}

impl fmt::Display for SearcherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearcherKind::Exhaustive => "exhaustive",
            SearcherKind::Etrf => "etrf",
        })
    }
}

impl FromStr for SearcherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(SearcherKind::Exhaustive),
            "etrf" => Ok(SearcherKind::Etrf),
            other => Err(Error::Config(format!("unknown searcher {other:?}"))),
        }
    }
}

/// Search range of one CU derived from the reference maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EtrfBound {
    pub max_sz: usize,
    /// Two halvings below `max_sz`, floored at the minimum CU size.
    pub min_allowed: usize,
    pub early_skip_active: bool,
}

impl EtrfBound {
    pub fn from_max_sz(max_sz: usize) -> Self {
        EtrfBound {
            max_sz,
            min_allowed: (max_sz / 4).max(MIN_CU_SIZE),
            early_skip_active: max_sz > EARLY_SKIP_THRESHOLD,
        }
    }

    /// A CTU-sized maximum means the references were not split at all here,
    /// which bounds nothing.
    pub fn is_active(&self) -> bool {
        self.max_sz < CTU_SIZE
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub rd_nodes: u64,
    pub skipped_ns: u64,
    pub terminated: u64,
    pub fallbacks: u64,
    #[serde(rename = "wall_seconds")]
    pub wall_time: f64,
}

impl SearchStats {
    pub fn accumulate(&mut self, other: &SearchStats) {
        self.add_counts(other);
        self.wall_time += other.wall_time;
    }

    fn add_counts(&mut self, other: &SearchStats) {
        self.rd_nodes += other.rd_nodes;
        self.skipped_ns += other.skipped_ns;
        self.terminated += other.terminated;
        self.fallbacks += other.fallbacks;
    }
}

/// Every `(geometry, mode)` pair a search evaluated: NS entries for RD
/// evaluations, split entries for explored splits.
pub type NodeTrace = HashSet<(CuGeometry, SplitMode)>;

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub tree: PartitionTree,
    pub cost: RdCost,
    pub stats: SearchStats,
    pub trace: Option<NodeTrace>,
}

#[derive(Clone, Copy)]
struct Node {
    best: SplitMode,
    cost: RdCost,
    stats: SearchStats,
}

/// One partition search rooted at an arbitrary CU.
pub struct BlockSearch<'a> {
    root: CuGeometry,
    original: &'a FrameBuffer,
    refs: &'a [Reference<'a>],
    quant: QuantizerParams,
    ref_maps: Option<&'a [&'a PartitionMap]>,
    allowed: SplitSet,
    trace: Option<NodeTrace>,
}

impl<'a> BlockSearch<'a> {
    pub fn new(
        root: CuGeometry,
        original: &'a FrameBuffer,
        refs: &'a [Reference<'a>],
        quant: QuantizerParams,
    ) -> Self {
        BlockSearch {
            root,
            original,
            refs,
            quant,
            ref_maps: None,
            allowed: SplitSet::ALL,
            trace: None,
        }
    }

    /// Bounds the search by the given collocated reference maps.
    pub fn with_ref_maps(mut self, maps: &'a [&'a PartitionMap]) -> Self {
        self.ref_maps = Some(maps);
        self
    }

    /// Restricts the split modes considered (NS is always kept).
    pub fn restrict_modes(mut self, allowed: SplitSet) -> Self {
        self.allowed = allowed;
        self.allowed.insert(SplitMode::Ns);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(HashSet::new());
        self
    }

    pub fn run(self) -> Result<SearchOutcome> {
        let (fw, fh) = (self.original.width(), self.original.height());
        let (vw, vh) = self.root.visible(fw, fh).ok_or(Error::OutsideFrame)?;
        let sads = SadTable::build(self.original, self.refs, self.root.x, self.root.y, vw, vh);
        let mut solver = Solver {
            original: self.original,
            refs: self.refs,
            quant: self.quant,
            ref_maps: self.ref_maps,
            allowed: self.allowed,
            sads,
            frame_w: fw,
            frame_h: fh,
            ns_cache: HashMap::new(),
            memo: HashMap::new(),
            trace: self.trace,
        };
        let node = solver.solve(&self.root)?;
        let tree = solver.build_tree(&self.root);
        Ok(SearchOutcome {
            tree,
            cost: node.cost,
            stats: node.stats,
            trace: solver.trace,
        })
    }
}

struct Solver<'a> {
    original: &'a FrameBuffer,
    refs: &'a [Reference<'a>],
    quant: QuantizerParams,
    ref_maps: Option<&'a [&'a PartitionMap]>,
    allowed: SplitSet,
    sads: SadTable,
    frame_w: usize,
    frame_h: usize,
    ns_cache: HashMap<(usize, usize, usize, usize), RdCost>,
    memo: HashMap<CuGeometry, Node>,
    trace: Option<NodeTrace>,
}

impl Solver<'_> {
    fn ns_cost(&mut self, cu: &CuGeometry) -> Result<RdCost> {
        let key = (cu.x, cu.y, cu.w, cu.h);
        if let Some(c) = self.ns_cache.get(&key) {
            return Ok(*c);
        }
        let block = code_block(
            &self.sads,
            cu,
            self.original,
            self.refs,
            &self.quant,
            SplitMode::Ns,
        )?;
        self.ns_cache.insert(key, block.cost);
        Ok(block.cost)
    }

    fn record(&mut self, cu: &CuGeometry, mode: SplitMode) {
        if let Some(t) = self.trace.as_mut() {
            t.insert((*cu, mode));
        }
    }

    fn solve(&mut self, cu: &CuGeometry) -> Result<Node> {
        if let Some(n) = self.memo.get(cu) {
            return Ok(*n);
        }
        let node = self.solve_uncached(cu)?;
        self.memo.insert(*cu, node);
        Ok(node)
    }

    fn solve_uncached(&mut self, cu: &CuGeometry) -> Result<Node> {
        let (fw, fh) = (self.frame_w, self.frame_h);
        if cu.visible(fw, fh).is_none() {
            return Ok(Node {
                best: SplitMode::Ns,
                cost: RdCost::default(),
                stats: SearchStats::default(),
            });
        }

        let mut splits = legal_splits(cu).intersect(self.allowed).splits();
        let mut ns_allowed = true;
        if !cu.is_inside(fw, fh) {
            // Boundary CU: must split, preferring splits whose children do
            // not straddle the picture edge.
            ns_allowed = false;
            let clean: SplitSet = splits
                .iter()
                .filter(|&m| {
                    split_children(cu, m)
                        .iter()
                        .all(|c| c.is_inside(fw, fh) || c.visible(fw, fh).is_none())
                })
                .collect();
            if !clean.is_empty() {
                splits = clean;
            }
            if splits.is_empty() {
                ns_allowed = true;
            }
        }

        let mut stats = SearchStats::default();
        if let Some(maps) = self.ref_maps {
            let bound = EtrfBound::from_max_sz(max_sz_lookup(maps, cu)?);
            if bound.is_active() {
                let size = cu.max_dim();
                if size > bound.max_sz {
                    if splits.is_empty() {
                        stats.fallbacks += 1;
                    } else if ns_allowed {
                        ns_allowed = false;
                        stats.skipped_ns += 1;
                    }
                } else if bound.early_skip_active
                    && size <= bound.min_allowed
                    && ns_allowed
                    && !splits.is_empty()
                {
                    splits = SplitSet::EMPTY;
                    stats.terminated += 1;
                }
            }
        }

        let mut best: Option<(SplitMode, RdCost)> = None;
        if ns_allowed {
            self.record(cu, SplitMode::Ns);
            stats.rd_nodes += 1;
            best = Some((SplitMode::Ns, self.ns_cost(cu)?));
        }
        for mode in splits.iter() {
            self.record(cu, mode);
            let mut child_costs = Vec::with_capacity(4);
            for child in split_children(cu, mode) {
                let n = self.solve(&child)?;
                stats.add_counts(&n.stats);
                child_costs.push(n.cost);
            }
            let cost = RdCost::split(mode, child_costs, self.quant.lambda);
            if best.is_none_or(|(_, b)| cost.j < b.j) {
                best = Some((mode, cost));
            }
        }
        let (best, cost) = best.expect("a CU always has NS or a split");
        Ok(Node { best, cost, stats })
    }

    fn build_tree(&self, cu: &CuGeometry) -> PartitionTree {
        let node = &self.memo[cu];
        if node.best == SplitMode::Ns {
            return PartitionTree::leaf(*cu);
        }
        PartitionTree {
            geometry: *cu,
            split: node.best,
            children: split_children(cu, node.best)
                .iter()
                .map(|c| self.build_tree(c))
                .collect(),
        }
    }
}

pub fn search_ctu_exhaustive(
    ctu_x: usize,
    ctu_y: usize,
    original: &FrameBuffer,
    refs: &[Reference<'_>],
    quant: QuantizerParams,
) -> Result<SearchOutcome> {
    BlockSearch::new(CuGeometry::ctu_root(ctu_x, ctu_y), original, refs, quant).run()
}

pub fn search_ctu_etrf(
    ctu_x: usize,
    ctu_y: usize,
    original: &FrameBuffer,
    refs: &[Reference<'_>],
    quant: QuantizerParams,
    ref_maps: &[&PartitionMap],
) -> Result<SearchOutcome> {
    BlockSearch::new(CuGeometry::ctu_root(ctu_x, ctu_y), original, refs, quant)
        .with_ref_maps(ref_maps)
        .run()
}

/// Reconstructions and partition maps of already coded frames, by POC.
#[derive(Default)]
pub struct ReconStore {
    frames: HashMap<usize, (FrameBuffer, Vec<PartitionMap>)>,
}

impl ReconStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, poc: usize, recon: FrameBuffer, maps: Vec<PartitionMap>) {
        self.frames.insert(poc, (recon, maps));
    }

    pub fn reconstruction(&self, poc: usize) -> Result<&FrameBuffer> {
        self.frames
            .get(&poc)
            .map(|(f, _)| f)
            .ok_or(Error::MissingReference(poc))
    }

    pub fn maps(&self, poc: usize) -> Result<&[PartitionMap]> {
        self.frames
            .get(&poc)
            .map(|(_, m)| m.as_slice())
            .ok_or(Error::MissingReference(poc))
    }

    /// References of `fc` in prediction order.
    pub fn references(&self, fc: &FrameCoding) -> Result<Vec<Reference<'_>>> {
        fc.pred_refs
            .iter()
            .map(|&poc| {
                Ok(Reference {
                    poc,
                    frame: self.reconstruction(poc)?,
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderOptions {
    pub searcher: SearcherKind,
    /// Search CTUs of a frame on the rayon pool.
    pub parallel: bool,
    /// Replace every reference map with a uniform map of this CU size.
    pub map_override: Option<u8>,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        EncoderOptions {
            searcher: SearcherKind::Exhaustive,
            parallel: true,
            map_override: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FrameResult {
    pub poc: usize,
    pub layer: u8,
    pub total_rate: u64,
    pub psnr: f64,
    pub reconstruction: FrameBuffer,
    /// One per CTU, raster order.
    pub maps: Vec<PartitionMap>,
    pub trees: Vec<PartitionTree>,
    pub ctu_costs: Vec<RdCost>,
    pub stats: SearchStats,
}

/// CTU origins of a picture in raster order.
pub fn ctu_origins(width: usize, height: usize) -> Vec<(usize, usize)> {
    (0..height.div_ceil(CTU_SIZE))
        .flat_map(|r| (0..width.div_ceil(CTU_SIZE)).map(move |c| (c * CTU_SIZE, r * CTU_SIZE)))
        .collect()
}

/// Codes one frame and stores its reconstruction and maps.
pub fn encode_frame(
    fc: &FrameCoding,
    original: &FrameBuffer,
    store: &mut ReconStore,
    quant: QuantizerParams,
    opts: &EncoderOptions,
) -> Result<FrameResult> {
    let refs = store.references(fc)?;
    let use_maps = opts.searcher == SearcherKind::Etrf && fc.uses_etrf() && !fc.etrf_refs.is_empty();
    let ref_maps: Vec<&[PartitionMap]> = if use_maps {
        fc.etrf_refs
            .iter()
            .map(|&p| store.maps(p))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let origins = ctu_origins(original.width(), original.height());

    let search = |(k, &(x, y)): (usize, &(usize, usize))| -> Result<SearchOutcome> {
        if !use_maps {
            return search_ctu_exhaustive(x, y, original, &refs, quant);
        }
        let owned: Vec<PartitionMap>;
        let maps: Vec<&PartitionMap> = match opts.map_override {
            Some(v) => {
                owned = vec![PartitionMap::uniform(x, y, v, v)];
                owned.iter().collect()
            }
            None => ref_maps.iter().map(|m| &m[k]).collect(),
        };
        search_ctu_etrf(x, y, original, &refs, quant, &maps)
    };

    let start = Instant::now();
    let outcomes: Vec<SearchOutcome> = if opts.parallel {
        origins.par_iter().enumerate().map(search).collect::<Result<_>>()?
    } else {
        origins.iter().enumerate().map(search).collect::<Result<_>>()?
    };
    let wall = start.elapsed().as_secs_f64();

    let (fw, fh) = (original.width(), original.height());
    let mut recon = FrameBuffer::filled(fw, fh, 0)?;
    let mut stats = SearchStats::default();
    let mut total_rate = 0;
    let mut maps = Vec::with_capacity(outcomes.len());
    let mut trees = Vec::with_capacity(outcomes.len());
    let mut ctu_costs = Vec::with_capacity(outcomes.len());
    let direct = crate::codec::motion::DirectSad {
        original,
        refs: &refs,
    };
    for out in outcomes {
        for leaf in out.tree.leaves() {
            if leaf.visible(fw, fh).is_none() {
                continue;
            }
            let block = code_block(&direct, leaf, original, &refs, &quant, SplitMode::Ns)?;
            recon.write_block(block.rect.x, block.rect.y, block.rect.w, block.rect.h, &block.reconstruction);
        }
        stats.add_counts(&out.stats);
        total_rate += out.cost.rate;
        maps.push(record_map(&out.tree, fw, fh));
        ctu_costs.push(out.cost);
        trees.push(out.tree);
    }
    stats.wall_time = wall;
    let psnr = psnr(original, &recon)?;
    store.insert(fc.poc, recon.clone(), maps.clone());
    Ok(FrameResult {
        poc: fc.poc,
        layer: fc.layer,
        total_rate,
        psnr,
        reconstruction: recon,
        maps,
        trees,
        ctu_costs,
        stats,
    })
}

/// Per-frame record kept in run results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub poc: usize,
    pub layer: u8,
    pub bits: u64,
    pub psnr: f64,
    pub stats: SearchStats,
}

/// All frames coded at one QP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpRun {
    pub qp: i32,
    pub bits: u64,
    pub psnr: f64,
    pub rd_nodes: u64,
    pub wall_seconds: f64,
    pub frames: Vec<FrameSummary>,
}

/// Codes `seq` once per QP in schedule order. `observer` sees every coded
/// frame together with its QP.
pub fn encode_sequence(
    seq: &VideoSequence,
    qps: &[i32],
    opts: &EncoderOptions,
    mut observer: impl FnMut(i32, &FrameResult),
) -> Result<Vec<QpRun>> {
    if seq.is_empty() {
        return Err(Error::Config("empty sequence".into()));
    }
    let schedule = build_schedule(seq.len());
    let mut runs = Vec::with_capacity(qps.len());
    for &qp in qps {
        let quant = QuantizerParams::from_qp(qp)?;
        let mut store = ReconStore::new();
        let mut frames = Vec::with_capacity(seq.len());
        let mut totals = SearchStats::default();
        for fc in schedule.encode_order() {
            let res = encode_frame(fc, &seq.frames[fc.poc], &mut store, quant, opts)?;
            observer(qp, &res);
            totals.accumulate(&res.stats);
            frames.push(FrameSummary {
                poc: res.poc,
                layer: res.layer,
                bits: res.total_rate,
                psnr: res.psnr,
                stats: res.stats,
            });
        }
        frames.sort_by_key(|f| f.poc);
        let psnr = frames.iter().map(|f| f.psnr).sum::<f64>() / frames.len() as f64;
        runs.push(QpRun {
            qp,
            bits: frames.iter().map(|f| f.bits).sum(),
            psnr,
            rd_nodes: totals.rd_nodes,
            wall_seconds: totals.wall_time,
            frames,
        });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::rd_cost_cu;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FrameBuffer {
        FrameBuffer::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap()
    }

    fn q(qp: i32) -> QuantizerParams {
        QuantizerParams::from_qp(qp).unwrap()
    }

    #[test]
    fn bound_rules() {
        let b = EtrfBound::from_max_sz(64);
        assert_eq!((b.min_allowed, b.early_skip_active, b.is_active()), (16, true, true));
        let b = EtrfBound::from_max_sz(16);
        assert_eq!((b.min_allowed, b.early_skip_active), (4, false));
        let b = EtrfBound::from_max_sz(8);
        assert_eq!((b.min_allowed, b.early_skip_active), (4, false));
        let b = EtrfBound::from_max_sz(32);
        assert_eq!((b.min_allowed, b.early_skip_active), (8, true));
        let b = EtrfBound::from_max_sz(128);
        assert_eq!(b.min_allowed, 32);
        assert!(!b.is_active());
    }

    #[test]
    fn flat_static_ctu_stays_unsplit() {
        let f = FrameBuffer::filled(128, 128, 77).unwrap();
        let refs = [Reference { poc: 0, frame: &f }, Reference { poc: 2, frame: &f }];
        let out = search_ctu_exhaustive(0, 0, &f, &refs, q(32)).unwrap();
        assert_eq!(out.tree.split, SplitMode::Ns);
        assert_eq!(out.cost.distortion, 0);
        assert_eq!(out.cost.rate, 2);
        assert_eq!(out.cost.j, q(32).lambda * 2.0);
        assert_eq!(out.stats.skipped_ns + out.stats.terminated + out.stats.fallbacks, 0);
    }

    #[test]
    fn cost_matches_sum_of_leaves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let orig = noise(&mut rng, 128, 128);
        let r = noise(&mut rng, 128, 128);
        let refs = [Reference { poc: 0, frame: &r }];
        let out = BlockSearch::new(CuGeometry::block(32, 32, 64, 64), &orig, &refs, q(37))
            .run()
            .unwrap();
        fn sum(t: &PartitionTree, o: &FrameBuffer, refs: &[Reference<'_>], qp: &QuantizerParams) -> (u64, u64) {
            if t.children.is_empty() {
                let c = rd_cost_cu(&t.geometry, o, refs, qp, SplitMode::Ns).unwrap().cost;
                return (c.distortion, c.rate);
            }
            t.children.iter().fold((0, t.split.signal_bits()), |(d, r), c| {
                let (cd, cr) = sum(c, o, refs, qp);
                (d + cd, r + cr)
            })
        }
        assert_eq!(sum(&out.tree, &orig, &refs, &q(37)), (out.cost.distortion, out.cost.rate));
    }

    #[test]
    fn right_edge_ctu_cannot_stay_unsplit() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let orig = FrameBuffer::filled(136, 128, 50).unwrap();
        let r = noise(&mut rng, 136, 128);
        let _ = r;
        let out = search_ctu_exhaustive(128, 0, &orig, &[], q(32)).unwrap();
        assert_ne!(out.tree.split, SplitMode::Ns);
        for leaf in out.tree.leaves() {
            if leaf.visible(136, 128).is_some() {
                assert!(leaf.is_inside(136, 128) || leaf.mtt_depth == 3, "{leaf:?}");
            }
        }
        let map = record_map(&out.tree, 136, 128);
        for i in 0..16 {
            assert_ne!(map.cell(i, 0), (0, 0));
            assert_eq!(map.cell(i, 1), (0, 0));
        }
    }

    #[test]
    fn uniform_64_maps_limit_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let orig = noise(&mut rng, 128, 128);
        let r = noise(&mut rng, 128, 128);
        let refs = [Reference { poc: 0, frame: &r }];
        let m = PartitionMap::uniform(0, 0, 64, 64);
        let out = BlockSearch::new(CuGeometry::ctu_root(0, 0), &orig, &refs, q(22))
            .with_ref_maps(&[&m])
            .with_trace()
            .run()
            .unwrap();
        let trace = out.trace.unwrap();
        assert!(!trace.contains(&(CuGeometry::ctu_root(0, 0), SplitMode::Ns)));
        assert!(trace.iter().all(|(g, mode)| *mode == SplitMode::Ns || g.max_dim() > 16));
        assert!(trace.iter().all(|(g, _)| g.max_dim() >= 16 || g.w.min(g.h) < 16));
        // A ternary split of a 32-wide CU still yields 8-wide leaves.
        assert!(out.tree.leaves().iter().all(|l| l.max_dim() >= 8));
        assert_eq!(out.tree.split, SplitMode::Qt);
        assert_eq!(out.stats.skipped_ns, 1);
        assert!(out.stats.terminated > 0);
    }

    #[test]
    fn uniform_8_maps_skip_large_ns_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let orig = noise(&mut rng, 64, 64);
        let refs: [Reference; 0] = [];
        let m = PartitionMap::uniform(0, 0, 8, 8);
        let root = CuGeometry::block(0, 0, 32, 32);
        let out = BlockSearch::new(root, &orig, &refs, q(27))
            .with_ref_maps(&[&m])
            .with_trace()
            .run()
            .unwrap();
        let trace = out.trace.unwrap();
        assert_eq!(out.stats.terminated, 0);
        assert!(trace.iter().all(|(g, mode)| {
            *mode != SplitMode::Ns || g.max_dim() <= 8 || legal_splits(g).splits().is_empty()
        }));
        assert!(trace.iter().any(|(g, _)| g.w == 4 && g.h == 4));
    }

    #[test]
    fn degenerate_maps_match_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let orig = noise(&mut rng, 128, 128);
        let r = noise(&mut rng, 128, 128);
        let refs = [Reference { poc: 0, frame: &r }];
        let ex = search_ctu_exhaustive(0, 0, &orig, &refs, q(32)).unwrap();
        for m in [PartitionMap::uniform(0, 0, 128, 128), PartitionMap::uniform(0, 0, 0, 0)] {
            let et = search_ctu_etrf(0, 0, &orig, &refs, q(32), &[&m]).unwrap();
            assert_eq!(et.tree, ex.tree);
            assert_eq!(et.cost, ex.cost);
            assert_eq!(et.stats, ex.stats);
        }
    }

    #[test]
    fn fallback_when_no_split_is_legal() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let orig = noise(&mut rng, 32, 32);
        let mut m = PartitionMap::uniform(0, 0, 4, 4);
        m.widths[0] = 0;
        let root = CuGeometry::block(0, 0, 16, 16);
        // Max size 4: every CU above 4 skips NS, but an 8x4 at the maximum
        // MTT depth has nothing left to split and is coded as NS anyway.
        let out = BlockSearch::new(root, &orig, &[], q(22))
            .with_ref_maps(&[&m])
            .run()
            .unwrap();
        assert!(out.stats.fallbacks > 0);
        assert!(out.tree.leaves().iter().all(|l| l.w == 4 || l.h == 4));
        assert!(out.cost.rate > 0);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let frames: Vec<FrameBuffer> = (0..3).map(|_| noise(&mut rng, 256, 136)).collect();
        let seq = VideoSequence::new(frames, 25.0).unwrap();
        let run = |parallel| {
            let opts = EncoderOptions {
                searcher: SearcherKind::Etrf,
                parallel,
                map_override: None,
            };
            let mut runs = encode_sequence(&seq, &[37], &opts, |_, _| {}).unwrap();
            for r in &mut runs {
                r.wall_seconds = 0.0;
                for f in &mut r.frames {
                    f.stats.wall_time = 0.0;
                }
            }
            runs
        };
        assert_eq!(run(true), run(false));
    }

    #[test]
    fn missing_reference_is_reported() {
        let f = FrameBuffer::filled(128, 128, 0).unwrap();
        let fc = FrameCoding {
            poc: 1,
            layer: 5,
            encode_rank: 1,
            pred_refs: vec![0],
            etrf_refs: vec![0],
        };
        let mut store = ReconStore::new();
        let err = encode_frame(&fc, &f, &mut store, q(22), &EncoderOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingReference(0)));
    }

    #[test]
    fn searcher_names() {
        assert_eq!("etrf".parse::<SearcherKind>().unwrap(), SearcherKind::Etrf);
        assert_eq!(SearcherKind::Exhaustive.to_string(), "exhaustive");
        assert!("fast".parse::<SearcherKind>().is_err());
    }
}
