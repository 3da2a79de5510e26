//! Input activation staging: which input rows each wave pulls from the
//! activation GB into the input buffer.

use crate::mapper::Wave;
use crate::model::{LayerKind, LayerSpec};
use crate::sparse::{vector_origin, VectorOrigin};

/// One staged input row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StagedRow {
    pub channel: usize,
    pub row: usize,
    /// Byte offset of the row inside the layer's input tensor.
    pub src_offset: usize,
    /// Byte offset of the row inside the input buffer.
    pub buf_offset: usize,
}

/// Input buffer contents for one wave.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StagedWave {
    pub rows: Vec<StagedRow>,
    pub row_len: usize,
    /// Filled only when activation data was supplied.
    pub data: Vec<u8>,
}

impl StagedWave {
    pub fn bytes(&self) -> usize {
        self.rows.len() * self.row_len
    }

    /// Absolute activation-GB addresses of the staged rows.
    pub fn addresses(&self, base: usize) -> Vec<usize> {
        self.rows.iter().map(|r| base + r.src_offset).collect()
    }
}

/// Input rows `(channel, row)` the items of `wave` read, sorted, padding
/// rows excluded.
fn needed_rows(layer: &LayerSpec, wave: &Wave) -> Vec<(usize, usize)> {
    let mut rows = Vec::new();
    for item in &wave.items {
        let orow = item.segment.row * layer.stride;
        match vector_origin(layer, item.vector as usize) {
            VectorOrigin::KernelRow { ci, kr, .. } => {
                let iy = orow as isize + kr as isize - 1;
                if (0..layer.h as isize).contains(&iy) {
                    rows.push((ci, iy as usize));
                }
            }
            VectorOrigin::Triplet { triplet, .. } => {
                for ci in (triplet * 3..triplet * 3 + 3).filter(|&ci| ci < layer.cin) {
                    rows.push((ci, orow));
                }
            }
        }
    }
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Index-driven gather for one wave. Rows are only fetched for vectors the
/// wave actually computes, so pruned vectors never cost activation reads.
/// FC stages its whole flattened input as one row. With `input` given, the
/// staged bytes are copied into `data`.
pub fn sparse_gather(layer: &LayerSpec, wave: &Wave, input: Option<&[u8]>) -> StagedWave {
    if wave.items.is_empty() {
        return StagedWave::default();
    }
    let (pairs, row_len) = if layer.kind == LayerKind::Fc {
        (vec![(0, 0)], layer.cin)
    } else {
        (needed_rows(layer, wave), layer.w)
    };
    let rows: Vec<StagedRow> = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (channel, row))| StagedRow {
            channel,
            row,
            src_offset: (channel * layer.h + row) * row_len,
            buf_offset: i * row_len,
        })
        .collect();
    let data = match input {
        Some(src) => rows.iter().flat_map(|r| &src[r.src_offset..r.src_offset + row_len]).copied().collect(),
        None => Vec::new(),
    };
    StagedWave { rows, row_len, data }
}

/// Bytes the output buffer holds for a wave: every distinct output segment
/// at the layer's output width. Partial sums stay in the lane accumulators.
pub fn out_buffer_bytes(layer: &LayerSpec, wave: &Wave) -> usize {
    let mut segs: Vec<(usize, usize, usize, usize)> = wave
        .items
        .iter()
        .map(|i| (i.out_channel, i.segment.row, i.segment.col_start, i.segment.col_len))
        .collect();
    segs.sort_unstable();
    segs.dedup();
    segs.iter().map(|s| s.3 * layer.out_bits.bytes()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{map_layer, DataflowFlags, EngineConfig};
    use crate::model::QuantMode;

    #[test]
    fn zeroed_vector_row_is_not_fetched() {
        // 1->1 conv on 3x4: the middle output row reads input rows 0,1,2
        let layer = LayerSpec::conv(LayerKind::ConvNormal, 1, 1, 3, 4, QuantMode::Int8);
        let cfg = EngineConfig::default();
        let full = map_layer(0, &layer, &[0, 1, 2], &cfg, DataflowFlags::ALL).unwrap();
        let w = Wave { items: full.items().filter(|i| i.segment.row == 1).copied().collect(), cycles: 0 };
        let rows: Vec<_> = sparse_gather(&layer, &w, None).rows.iter().map(|r| r.row).collect();
        assert_eq!(rows, vec![0, 1, 2]);

        // kernel row 1 pruned: input row 1 is absent for output row 1
        let pruned = map_layer(0, &layer, &[0, 2], &cfg, DataflowFlags::ALL).unwrap();
        let w = Wave { items: pruned.items().filter(|i| i.segment.row == 1).copied().collect(), cycles: 0 };
        let staged = sparse_gather(&layer, &w, None);
        assert_eq!(staged.rows.iter().map(|r| r.row).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(staged.addresses(100), vec![100, 108]);
    }

    #[test]
    fn staged_data_matches_source() {
        let layer = LayerSpec::conv(LayerKind::ConvPw, 4, 1, 2, 2, QuantMode::Int8);
        let src: Vec<u8> = (0..16).collect();
        let sched = map_layer(0, &layer, &[0, 1], &EngineConfig::default(), DataflowFlags::ALL).unwrap();
        let staged = sparse_gather(&layer, &sched.waves[0], Some(&src));
        // both output rows, all four channels
        assert_eq!(staged.rows.len(), 8);
        assert_eq!(&staged.data[..2], &[0, 1]);
        assert_eq!(staged.data.len(), staged.bytes());
    }
}
