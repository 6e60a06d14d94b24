//! Partition tensors: one V×V adjacency slice per label.
//!
//! A [`PartitionStack`] holds K dense V×V matrices. Rows index the output
//! (root) joint, columns the input joint — fixed convention throughout the
//! crate. Slice k of the unnormalized stack has a 1 at (j, i) exactly when
//! joint i carries label k in root j's neighbor set, so the slices are a
//! disjoint partition of A + I.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::partition::{
    connection_labels, full_distance_labels, index_labels, spatial_config_labels,
    DistanceProfile, LabelMap, Strategy, TieRule,
};
use crate::skeleton::{SkeletonLayout, SkeletonSequence};

/// Magic bytes of the binary stack format.
pub const STACK_MAGIC: [u8; 4] = *b"PSTK";

/// Header flag: slices were row-normalized.
pub const FLAG_ROW_NORMALIZED: u32 = 1;
/// Header flag: slices were symmetrically normalized.
pub const FLAG_SYM_NORMALIZED: u32 = 2;

/// How to normalize a stack's slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Leave the binary slices untouched.
    None,
    /// Divide each nonzero row by its sum (the default; zero rows stay zero).
    #[default]
    Row,
    /// Scale entry (j, i) by 1/sqrt(rowsum_j * colsum_i), zero-guarded.
    Symmetric,
}

/// K dense V×V slices, row-major, rows = root joint, columns = input joint.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStack {
    num_slices: usize,
    num_joints: usize,
    slices: Vec<Vec<f64>>,
    normalization: Normalization,
}

impl PartitionStack {
    /// K: number of slices.
    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    /// V: joints per side of each slice.
    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Slice k as a flat row-major V×V matrix.
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn get(&self, k: usize, row: usize, col: usize) -> f64 {
        self.slices[k][row * self.num_joints + col]
    }

    /// A copy with every slice except `k` zeroed — used by linearity checks
    /// that decompose the convolution per partition.
    pub fn with_only_slice(&self, k: usize) -> PartitionStack {
        let mut slices = vec![vec![0.0; self.num_joints * self.num_joints]; self.num_slices];
        slices[k] = self.slices[k].clone();
        PartitionStack {
            num_slices: self.num_slices,
            num_joints: self.num_joints,
            slices,
            normalization: self.normalization,
        }
    }

    /// Elementwise sum of all slices, flat row-major V×V.
    pub fn slice_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.num_joints * self.num_joints];
        for slice in &self.slices {
            for (s, v) in sum.iter_mut().zip(slice) {
                *s += v;
            }
        }
        sum
    }

    /// Structured text: a `K`/`V` header, then each slice row-major with six
    /// decimal places.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("K {}\n", self.num_slices));
        out.push_str(&format!("V {}\n", self.num_joints));
        for (k, slice) in self.slices.iter().enumerate() {
            out.push_str(&format!("slice {k}\n"));
            for row in 0..self.num_joints {
                let cells: Vec<String> = (0..self.num_joints)
                    .map(|col| format!("{:.6}", slice[row * self.num_joints + col]))
                    .collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
        }
        out
    }

    /// Raw binary: 16-byte header (magic, K, V, flags as little-endian u32
    /// fields) followed by K·V·V little-endian f32 values, slice-major.
    pub fn write_binary(&self, writer: &mut impl Write) -> Result<()> {
        writer.write_all(&STACK_MAGIC)?;
        writer.write_all(&(self.num_slices as u32).to_le_bytes())?;
        writer.write_all(&(self.num_joints as u32).to_le_bytes())?;
        let flags = match self.normalization {
            Normalization::None => 0,
            Normalization::Row => FLAG_ROW_NORMALIZED,
            Normalization::Symmetric => FLAG_SYM_NORMALIZED,
        };
        writer.write_all(&flags.to_le_bytes())?;
        for slice in &self.slices {
            for &v in slice {
                writer.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of [`PartitionStack::write_binary`]. Values come back as the
    /// stored f32s, so a write→read→write cycle is byte-identical.
    pub fn read_binary(reader: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        reader.read_exact(&mut header)?;
        if header[0..4] != STACK_MAGIC {
            return Err(Error::Format {
                source_name: "partition stack".into(),
                reason: "bad magic bytes".into(),
            });
        }
        let k = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let v = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let flags = u32::from_le_bytes(header[12..16].try_into().unwrap());
        let normalization = if flags & FLAG_ROW_NORMALIZED != 0 {
            Normalization::Row
        } else if flags & FLAG_SYM_NORMALIZED != 0 {
            Normalization::Symmetric
        } else {
            Normalization::None
        };
        let mut slices = Vec::with_capacity(k);
        let mut buf = [0u8; 4];
        for _ in 0..k {
            let mut slice = Vec::with_capacity(v * v);
            for _ in 0..v * v {
                reader.read_exact(&mut buf)?;
                slice.push(f32::from_le_bytes(buf) as f64);
            }
            slices.push(slice);
        }
        Ok(PartitionStack {
            num_slices: k,
            num_joints: v,
            slices,
            normalization,
        })
    }
}

/// The layout's binary adjacency plus the identity, flat row-major V×V —
/// the matrix every unnormalized stack's slices must sum to.
pub fn adjacency_with_self_loops(layout: &SkeletonLayout) -> Vec<f64> {
    let v = layout.num_joints();
    let mut a = vec![0.0; v * v];
    for j in 0..v {
        a[j * v + j] = 1.0;
    }
    for &(x, y) in layout.edges() {
        a[x * v + y] = 1.0;
        a[y * v + x] = 1.0;
    }
    a
}

/// Build the unnormalized stack of a label map: slice k gets a 1 at (j, i)
/// for every joint i labeled k in root j's neighbor set.
pub fn build_stack(layout: &SkeletonLayout, label_map: &LabelMap) -> Result<PartitionStack> {
    let v = layout.num_joints();
    if label_map.num_roots() != v {
        return Err(Error::Consistency(format!(
            "label map covers {} roots, layout {} has {} joints",
            label_map.num_roots(),
            layout.name(),
            v
        )));
    }
    let k = label_map.num_partitions();
    let mut slices = vec![vec![0.0; v * v]; k];
    for root in 0..v {
        for &(joint, label) in label_map.assignments(root) {
            if label >= k {
                return Err(Error::Consistency(format!(
                    "label {label} at root {root} exceeds partition count {k}"
                )));
            }
            slices[label][root * v + joint] = 1.0;
        }
    }
    Ok(PartitionStack {
        num_slices: k,
        num_joints: v,
        slices,
        normalization: Normalization::None,
    })
}

/// Row-normalize a stack (the default scheme): each nonzero row of each
/// slice is divided by its sum; zero rows stay zero.
pub fn normalize(stack: &PartitionStack) -> PartitionStack {
    normalize_with(stack, Normalization::Row)
}

/// Normalize under an explicit scheme. `Normalization::None` clones.
pub fn normalize_with(stack: &PartitionStack, scheme: Normalization) -> PartitionStack {
    let v = stack.num_joints;
    let slices = match scheme {
        Normalization::None => stack.slices.clone(),
        Normalization::Row => stack
            .slices
            .iter()
            .map(|slice| {
                let mut out = slice.clone();
                for row in 0..v {
                    let sum: f64 = out[row * v..(row + 1) * v].iter().sum();
                    if sum > 0.0 {
                        for cell in &mut out[row * v..(row + 1) * v] {
                            *cell /= sum;
                        }
                    }
                }
                out
            })
            .collect(),
        Normalization::Symmetric => stack
            .slices
            .iter()
            .map(|slice| {
                let mut row_sums = vec![0.0; v];
                let mut col_sums = vec![0.0; v];
                for row in 0..v {
                    for col in 0..v {
                        let val = slice[row * v + col];
                        row_sums[row] += val;
                        col_sums[col] += val;
                    }
                }
                let mut out = slice.clone();
                for row in 0..v {
                    for col in 0..v {
                        let denom = row_sums[row] * col_sums[col];
                        if denom > 0.0 {
                            out[row * v + col] /= denom.sqrt();
                        }
                    }
                }
                out
            })
            .collect(),
    };
    PartitionStack {
        num_slices: stack.num_slices,
        num_joints: stack.num_joints,
        slices,
        normalization: scheme,
    }
}

/// Stacks for one sequence: a single static stack for the topology-only
/// strategies and the spatial baseline, or one stack per frame for the
/// full-distance split.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceStacks {
    Static(PartitionStack),
    PerFrame(Vec<PartitionStack>),
}

impl SequenceStacks {
    /// The stack governing frame `t`.
    pub fn stack_at(&self, t: usize) -> &PartitionStack {
        match self {
            SequenceStacks::Static(stack) => stack,
            SequenceStacks::PerFrame(stacks) => &stacks[t],
        }
    }

    /// Number of distinct stacks held (1 for static, T for per-frame).
    pub fn count(&self) -> usize {
        match self {
            SequenceStacks::Static(_) => 1,
            SequenceStacks::PerFrame(stacks) => stacks.len(),
        }
    }

    pub fn is_per_frame(&self) -> bool {
        matches!(self, SequenceStacks::PerFrame(_))
    }
}

/// Build the (normalized) partition stacks a sequence needs under a
/// strategy. The spatial baseline requires a [`DistanceProfile`] of
/// training-set average distances; `tie_rule` only affects the connection
/// split.
pub fn stacks_for_sequence(
    layout: &SkeletonLayout,
    strategy: Strategy,
    sequence: &SkeletonSequence,
    profile: Option<&DistanceProfile>,
    tie_rule: TieRule,
    scheme: Normalization,
) -> Result<SequenceStacks> {
    sequence.check_layout(layout)?;
    let finish = |map: LabelMap| -> Result<PartitionStack> {
        let stack = build_stack(layout, &map)?;
        Ok(normalize_with(&stack, scheme))
    };
    match strategy {
        Strategy::SpatialConfig => {
            let profile = profile.ok_or_else(|| {
                Error::MissingProfile(
                    "the spatial strategy needs a distance profile of training-set averages"
                        .into(),
                )
            })?;
            let map = spatial_config_labels(layout, profile)?;
            Ok(SequenceStacks::Static(finish(map)?))
        }
        Strategy::FullDistance => {
            let mut stacks = Vec::with_capacity(sequence.num_frames());
            for t in 0..sequence.num_frames() {
                let map = full_distance_labels(layout, sequence.frame(t))?;
                stacks.push(finish(map)?);
            }
            Ok(SequenceStacks::PerFrame(stacks))
        }
        Strategy::Connection => {
            let map = connection_labels(layout, tie_rule);
            Ok(SequenceStacks::Static(finish(map)?))
        }
        Strategy::Index => {
            let map = index_labels(layout);
            Ok(SequenceStacks::Static(finish(map)?))
        }
    }
}
