//! Random-access hierarchical GOP: temporal layers, coding order and
//! reference assignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GOP_SIZE: u32 = 32;
pub const MAX_LAYER: u8 = 5;

/// Lowest temporal layer whose frames use reference partition maps.
pub const ETRF_MIN_LAYER: u8 = 2;

/// Temporal layer of a display index in a GOP-32 dyadic hierarchy.
pub fn temporal_layer(poc: usize, gop_size: u32) -> Result<u8> {
    if gop_size != GOP_SIZE {
        return Err(Error::UnsupportedGop(gop_size));
    }
    Ok(layer_of(poc))
}

fn layer_of(poc: usize) -> u8 {
    let p = poc % GOP_SIZE as usize;
    if p == 0 {
        0
    } else {
        MAX_LAYER - p.trailing_zeros() as u8
    }
}

/// Display distance between a layer-`layer` frame and its nearest lower-layer
/// neighbours.
pub fn reference_distance(layer: u8) -> usize {
    debug_assert!((1..=MAX_LAYER).contains(&layer));
    1 << (MAX_LAYER - layer)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCoding {
    pub poc: usize,
    pub layer: u8,
    pub encode_rank: usize,
    /// Backward reference first, then forward when it exists.
    pub pred_refs: Vec<usize>,
    pub etrf_refs: Vec<usize>,
}

impl FrameCoding {
    pub fn is_intra(&self) -> bool {
        self.pred_refs.is_empty()
    }

    pub fn uses_etrf(&self) -> bool {
        self.layer >= ETRF_MIN_LAYER
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GopSchedule {
    /// Indexed by POC.
    pub entries: Vec<FrameCoding>,
    pub gop_size: u32,
}

impl GopSchedule {
    /// Entries sorted by encode rank.
    pub fn encode_order(&self) -> Vec<&FrameCoding> {
        let mut order: Vec<&FrameCoding> = self.entries.iter().collect();
        order.sort_by_key(|e| e.encode_rank);
        order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV dump: `poc,layer,encode_rank,pred_refs,etrf_refs`, references
    /// joined by `;`.
    pub fn to_csv(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut out = String::from("poc,layer,encode_rank,pred_refs,etrf_refs\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.poc,
                e.layer,
                e.encode_rank,
                join(&e.pred_refs),
                join(&e.etrf_refs)
            ));
        }
        out
    }
}

/// Builds the coding schedule for `num_frames` frames.
///
/// POC 0 forms its own group; every following group holds POCs
/// `32k+1 ..= 32k+32`. Inside a group frames are coded layer by layer with
/// ties broken by ascending POC.
pub fn build_schedule(num_frames: usize) -> GopSchedule {
    let gop = GOP_SIZE as usize;
    let mut entries: Vec<FrameCoding> = (0..num_frames)
        .map(|poc| {
            let layer = layer_of(poc);
            let pred_refs = if layer == 0 {
                Vec::new()
            } else {
                let d = reference_distance(layer);
                let mut refs = vec![poc - d];
                if poc + d < num_frames {
                    refs.push(poc + d);
                }
                refs
            };
            let etrf_refs = if layer >= ETRF_MIN_LAYER {
                pred_refs.clone()
            } else {
                Vec::new()
            };
            FrameCoding {
                poc,
                layer,
                encode_rank: 0,
                pred_refs,
                etrf_refs,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..num_frames).collect();
    order.sort_by_key(|&poc| {
        let group = if poc == 0 { 0 } else { (poc - 1) / gop + 1 };
        (group, layer_of(poc), poc)
    });
    for (rank, poc) in order.into_iter().enumerate() {
        entries[poc].encode_rank = rank;
    }
    GopSchedule {
        entries,
        gop_size: GOP_SIZE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_from_the_hierarchy() {
        let t = |p| temporal_layer(p, 32).unwrap();
        assert_eq!(t(16), 1);
        assert_eq!(t(8), 2);
        assert_eq!(t(4), 3);
        assert_eq!(t(2), 4);
        assert_eq!(t(7), 5);
        assert_eq!(t(0), 0);
        assert_eq!(t(32), 0);
        assert_eq!(t(24), 2);
        assert!(matches!(temporal_layer(3, 16), Err(Error::UnsupportedGop(16))));
    }

    #[test]
    fn references_of_33_frames() {
        let s = build_schedule(33);
        assert_eq!(s.entries[9].layer, 5);
        assert_eq!(s.entries[9].pred_refs, vec![8, 10]);
        assert_eq!(s.entries[9].etrf_refs, vec![8, 10]);
        assert_eq!(s.entries[8].pred_refs, vec![0, 16]);
        assert_eq!(s.entries[8].etrf_refs, vec![0, 16]);
        assert_eq!(s.entries[16].pred_refs, vec![0, 32]);
        assert!(s.entries[16].etrf_refs.is_empty());
        assert!(s.entries[0].pred_refs.is_empty());
        assert!(s.entries[32].pred_refs.is_empty());

        let order: Vec<usize> = s.encode_order().iter().map(|e| e.poc).collect();
        assert_eq!(&order[..5], &[0, 32, 16, 8, 24]);
    }

    #[test]
    fn sequence_end_clipping() {
        let s = build_schedule(2);
        assert_eq!(s.entries[1].pred_refs, vec![0]);
        assert_eq!(s.entries[1].etrf_refs, vec![0]);

        let s = build_schedule(20);
        assert_eq!(s.entries[16].pred_refs, vec![0]);
        assert_eq!(s.entries[18].pred_refs, vec![16]);
    }

    #[test]
    fn csv_dump() {
        let csv = build_schedule(3).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "poc,layer,encode_rank,pred_refs,etrf_refs");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "1,5,2,0;2,0;2");
        assert_eq!(lines[3], "2,4,1,0,0");
    }
}
