//! Neighbor-set partition strategies.
//!
//! Each strategy assigns every joint in a neighbor set `B(j) ∪ {j}` a label
//! in `[0, K)`. The root always takes label 0. The spatial-configuration
//! baseline compares average distances to the center of gravity and may give
//! several neighbors the same label; the three priority-based strategies
//! (full distance, connection, index) rank the neighbors and hand out the
//! distinct labels `1..=N`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::skeleton::{
    center_of_gravity, max_degree, Frame, SkeletonLayout, SkeletonSequence,
};

/// The four neighbor-set partition strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Baseline: compare each joint's average distance to the center of
    /// gravity against the root's (K = 3).
    SpatialConfig,
    /// Rank neighbors by their distance to the per-frame center of gravity.
    FullDistance,
    /// Rank neighbors by their connection count (degree), descending.
    Connection,
    /// Rank neighbors by their keypoint index, ascending.
    Index,
}

impl Strategy {
    /// All strategies in their canonical reporting order.
    pub const ALL: [Strategy; 4] = [
        Strategy::SpatialConfig,
        Strategy::FullDistance,
        Strategy::Connection,
        Strategy::Index,
    ];

    /// Short name used on the command line and in tables.
    pub fn cli_name(&self) -> &'static str {
        match self {
            Strategy::SpatialConfig => "spatial",
            Strategy::FullDistance => "fulldist",
            Strategy::Connection => "connection",
            Strategy::Index => "index",
        }
    }

    /// True for the priority-based strategies whose per-root labels are a
    /// bijection onto `1..=N`.
    pub fn is_proposed(&self) -> bool {
        !matches!(self, Strategy::SpatialConfig)
    }

    /// True when the label map must be recomputed for every frame.
    pub fn is_per_frame(&self) -> bool {
        matches!(self, Strategy::FullDistance)
    }

    /// Stable numeric id used in binary checkpoint headers.
    pub fn id(&self) -> u32 {
        match self {
            Strategy::SpatialConfig => 0,
            Strategy::FullDistance => 1,
            Strategy::Connection => 2,
            Strategy::Index => 3,
        }
    }

    pub fn from_id(id: u32) -> Result<Strategy> {
        Ok(match id {
            0 => Strategy::SpatialConfig,
            1 => Strategy::FullDistance,
            2 => Strategy::Connection,
            3 => Strategy::Index,
            other => {
                return Err(Error::InvalidValue(format!(
                    "unknown strategy id {other}"
                )))
            }
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        Ok(match s {
            "spatial" | "spatial_config" => Strategy::SpatialConfig,
            "fulldist" | "full_distance" => Strategy::FullDistance,
            "connection" => Strategy::Connection,
            "index" => Strategy::Index,
            other => {
                return Err(Error::InvalidValue(format!(
                    "unknown strategy `{other}` (expected spatial, fulldist, connection, or index)"
                )))
            }
        })
    }
}

/// How equal-priority neighbors are ordered in the connection split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Deterministic: ascending keypoint index (the default).
    #[default]
    ByIndex,
    /// Shuffle tied groups with a seeded generator; a pure function of
    /// (layout, seed).
    SeededRandom(u64),
}

/// Per-joint distances to the center of gravity — either one frame's
/// instantaneous distances or averages over a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    distances: Vec<f64>,
}

impl DistanceProfile {
    pub fn new(distances: Vec<f64>) -> Result<Self> {
        if let Some(bad) = distances.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidValue(format!(
                "distance profile contains an invalid distance {bad}"
            )));
        }
        Ok(DistanceProfile { distances })
    }

    /// Instantaneous distances of one frame's joints to that frame's cg.
    pub fn from_frame(frame: Frame<'_>) -> Self {
        let cg = center_of_gravity(frame);
        let distances = (0..frame.num_joints())
            .map(|j| frame.distance_to(j, &cg))
            .collect();
        DistanceProfile { distances }
    }

    pub fn distance(&self, joint: usize) -> f64 {
        self.distances[joint]
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// Per-joint degrees, the ranking key of the connection split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeProfile {
    degrees: Vec<usize>,
}

impl DegreeProfile {
    pub fn from_layout(layout: &SkeletonLayout) -> Self {
        let degrees = (0..layout.num_joints())
            .map(|j| layout.neighbors(j).map(|n| n.len()).unwrap_or(0))
            .collect();
        DegreeProfile { degrees }
    }

    pub fn degree(&self, joint: usize) -> usize {
        self.degrees[joint]
    }
}

/// Per-joint keypoint indices, the ranking key of the index split. Trivial
/// (the index of joint `i` is `i`) but kept explicit so the ranking key is
/// named at the call site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexProfile {
    num_joints: usize,
}

impl IndexProfile {
    pub fn from_layout(layout: &SkeletonLayout) -> Self {
        IndexProfile {
            num_joints: layout.num_joints(),
        }
    }

    pub fn index(&self, joint: usize) -> usize {
        debug_assert!(joint < self.num_joints);
        joint
    }
}

/// A complete labeling: for every root, the label of each joint in its
/// neighbor set (root included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    strategy: Strategy,
    num_partitions: usize,
    /// `assignments[root]` lists `(joint, label)` pairs, ascending by joint.
    assignments: Vec<Vec<(usize, usize)>>,
}

impl LabelMap {
    fn new(
        strategy: Strategy,
        num_partitions: usize,
        mut assignments: Vec<Vec<(usize, usize)>>,
    ) -> Self {
        for entry in &mut assignments {
            entry.sort_unstable_by_key(|&(joint, _)| joint);
        }
        LabelMap {
            strategy,
            num_partitions,
            assignments,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// K: the number of partitions labels may fall into.
    pub fn num_partitions(&self) -> usize {
        self.num_partitions
    }

    /// Number of roots (= V).
    pub fn num_roots(&self) -> usize {
        self.assignments.len()
    }

    /// `(joint, label)` pairs of one root's neighbor set, ascending by joint.
    pub fn assignments(&self, root: usize) -> &[(usize, usize)] {
        &self.assignments[root]
    }

    /// Label of `joint` within `root`'s neighbor set, or None when `joint`
    /// is neither the root nor adjacent to it.
    pub fn label_of(&self, root: usize, joint: usize) -> Option<usize> {
        self.assignments[root]
            .iter()
            .find(|&&(j, _)| j == joint)
            .map(|&(_, label)| label)
    }

    /// Line-oriented text form: `root <j>: <i>=<label> ...`, one root per
    /// line, joints ascending.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (root, entries) in self.assignments.iter().enumerate() {
            out.push_str(&format!("root {root}:"));
            for &(joint, label) in entries {
                out.push_str(&format!(" {joint}={label}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Number of partitions K for a strategy on a layout: the spatial baseline
/// always uses 3; the priority-based strategies use `1 + max_degree` so the
/// busiest root's neighbors all fit in distinct partitions.
pub fn partition_count(strategy: Strategy, layout: &SkeletonLayout) -> usize {
    match strategy {
        Strategy::SpatialConfig => 3,
        _ => 1 + max_degree(layout),
    }
}

/// Per-joint average distance to the center of gravity over every frame of
/// every reference sequence.
pub fn average_distances(
    training_sequences: &[SkeletonSequence],
    layout: &SkeletonLayout,
) -> Result<DistanceProfile> {
    if training_sequences.is_empty() {
        return Err(Error::EmptyReferenceSet);
    }
    let v = layout.num_joints();
    let mut sums = vec![0.0; v];
    let mut frames = 0usize;
    for seq in training_sequences {
        seq.check_layout(layout)?;
        for t in 0..seq.num_frames() {
            let frame = seq.frame(t);
            let cg = center_of_gravity(frame);
            for (j, s) in sums.iter_mut().enumerate() {
                *s += frame.distance_to(j, &cg);
            }
            frames += 1;
        }
    }
    if frames == 0 {
        return Err(Error::EmptyReferenceSet);
    }
    for s in &mut sums {
        *s /= frames as f64;
    }
    DistanceProfile::new(sums)
}

/// Spatial-configuration labels: a neighbor strictly closer to the cg than
/// the root (by average distance) takes label 1, strictly farther takes 2,
/// and exactly equal takes 0. The root compares equal to itself, hence 0.
pub fn spatial_config_labels(
    layout: &SkeletonLayout,
    profile: &DistanceProfile,
) -> Result<LabelMap> {
    let v = layout.num_joints();
    if profile.len() != v {
        return Err(Error::ShapeMismatch(format!(
            "distance profile covers {} joints, layout has {}",
            profile.len(),
            v
        )));
    }
    let mut assignments = Vec::with_capacity(v);
    for root in 0..v {
        let r_root = profile.distance(root);
        let mut entry = vec![(root, 0usize)];
        for &i in layout.neighbors(root)? {
            let r_i = profile.distance(i);
            let label = if r_i < r_root {
                1
            } else if r_i > r_root {
                2
            } else {
                0
            };
            entry.push((i, label));
        }
        assignments.push(entry);
    }
    Ok(LabelMap::new(Strategy::SpatialConfig, 3, assignments))
}

/// Rank each root's neighbors and hand out labels `1..=N` in rank order;
/// the root takes 0. `priority` returns the sort key for a joint; ties fall
/// back to ascending joint id unless `shuffle_ties` reorders tied groups.
fn ranked_labels<K, F>(
    layout: &SkeletonLayout,
    strategy: Strategy,
    key: F,
    rng: Option<&mut ChaCha8Rng>,
) -> LabelMap
where
    K: PartialOrd,
    F: Fn(usize) -> K,
{
    let v = layout.num_joints();
    let k = partition_count(strategy, layout);
    let mut rng = rng;
    let mut assignments = Vec::with_capacity(v);
    for root in 0..v {
        let mut ranked: Vec<usize> = layout
            .neighbors(root)
            .expect("root in range by construction")
            .to_vec();
        // Neighbor lists arrive ascending by joint id, and the sort is
        // stable, so equal keys keep that order — the by-index tie rule.
        ranked.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("finite keys"));
        if let Some(rng) = rng.as_deref_mut() {
            shuffle_tied_groups(&mut ranked, &key, rng);
        }
        let mut entry = vec![(root, 0usize)];
        for (m, &joint) in ranked.iter().enumerate() {
            entry.push((joint, m + 1));
        }
        assignments.push(entry);
    }
    LabelMap::new(strategy, k, assignments)
}

/// Reorder maximal runs of equal-keyed joints randomly, leaving the overall
/// ranking intact.
fn shuffle_tied_groups<K, F>(ranked: &mut [usize], key: &F, rng: &mut ChaCha8Rng)
where
    K: PartialOrd,
    F: Fn(usize) -> K,
{
    let mut start = 0;
    while start < ranked.len() {
        let mut end = start + 1;
        while end < ranked.len() && key(ranked[end]) == key(ranked[start]) {
            end += 1;
        }
        if end - start > 1 {
            ranked[start..end].shuffle(rng);
        }
        start = end;
    }
}

/// Full-distance labels for one frame: neighbors sorted ascending by their
/// distance to the frame's center of gravity; the m-th closest takes label
/// m. Ties break by ascending joint id. Recomputed per frame by callers.
pub fn full_distance_labels(layout: &SkeletonLayout, frame: Frame<'_>) -> Result<LabelMap> {
    if frame.num_joints() != layout.num_joints() {
        return Err(Error::ShapeMismatch(format!(
            "frame has {} joints, layout {} has {}",
            frame.num_joints(),
            layout.name(),
            layout.num_joints()
        )));
    }
    let cg = center_of_gravity(frame);
    let distances: Vec<f64> = (0..frame.num_joints())
        .map(|j| frame.distance_to(j, &cg))
        .collect();
    Ok(ranked_labels(
        layout,
        Strategy::FullDistance,
        |j| distances[j],
        None,
    ))
}

/// Connection labels: neighbors sorted descending by degree ("the more
/// connections the joint has, the higher priority"); the m-th takes label m.
/// Static across frames.
pub fn connection_labels(layout: &SkeletonLayout, tie_rule: TieRule) -> LabelMap {
    let degrees = DegreeProfile::from_layout(layout);
    // Sort ascending by negated degree == descending by degree.
    let key = |j: usize| -(degrees.degree(j) as i64);
    match tie_rule {
        TieRule::ByIndex => ranked_labels(layout, Strategy::Connection, key, None),
        TieRule::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ranked_labels(layout, Strategy::Connection, key, Some(&mut rng))
        }
    }
}

/// Index labels: neighbors sorted ascending by keypoint index; the m-th
/// takes label m. Static, fully deterministic, tie-free.
pub fn index_labels(layout: &SkeletonLayout) -> LabelMap {
    let indices = IndexProfile::from_layout(layout);
    ranked_labels(layout, Strategy::Index, |j| indices.index(j), None)
}
