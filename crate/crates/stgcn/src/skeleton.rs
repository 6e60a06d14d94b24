//! Skeleton graph topologies and frame geometry.
//!
//! A [`SkeletonLayout`] is the static joint/edge structure of a skeleton;
//! joint ids double as keypoint indices. A [`SkeletonSequence`] carries the
//! per-frame joint coordinates plus a confidence channel. Everything here is
//! immutable after construction and safe to share across threads.

use crate::error::{Error, Result};

const OPENPOSE18_DATA: &str = include_str!("../data/openpose18.layout");
const NTU25_DATA: &str = include_str!("../data/ntu25.layout");

/// Static skeleton topology: joints, undirected bone edges, keypoint names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonLayout {
    name: String,
    num_joints: usize,
    edges: Vec<(usize, usize)>,
    keypoint_names: Vec<String>,
    adjacency: Vec<Vec<usize>>,
}

/// A root joint together with its 1-hop neighbors, ascending by joint id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub root: usize,
    pub adjacent: Vec<usize>,
}

impl NeighborSet {
    /// Number of adjacent nodes (the root itself is not counted).
    pub fn size(&self) -> usize {
        self.adjacent.len()
    }
}

impl SkeletonLayout {
    /// Build a layout from an explicit edge list, validating the invariants:
    /// endpoints in range, no self-loops, no duplicate unordered edges, and
    /// the graph connected.
    pub fn new(
        name: impl Into<String>,
        num_joints: usize,
        edges: Vec<(usize, usize)>,
        keypoint_names: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: String| Error::InvalidLayout {
            name: name.clone(),
            reason,
        };

        if num_joints == 0 {
            return Err(invalid("layout must have at least one joint".into()));
        }
        if !keypoint_names.is_empty() && keypoint_names.len() != num_joints {
            return Err(invalid(format!(
                "{} keypoint names for {} joints",
                keypoint_names.len(),
                num_joints
            )));
        }
        let keypoint_names = if keypoint_names.is_empty() {
            (0..num_joints).map(|i| format!("joint{i}")).collect()
        } else {
            keypoint_names
        };

        let mut canonical: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= num_joints || b >= num_joints {
                return Err(invalid(format!(
                    "edge ({a}, {b}) has an endpoint outside [0, {num_joints})"
                )));
            }
            if a == b {
                return Err(invalid(format!("self-loop at joint {a}")));
            }
            canonical.push((a.min(b), a.max(b)));
        }
        canonical.sort_unstable();
        if canonical.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate edge in edge list".into()));
        }

        let mut adjacency = vec![Vec::new(); num_joints];
        for &(a, b) in &canonical {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for neighbors in &mut adjacency {
            neighbors.sort_unstable();
        }

        if !is_connected(num_joints, &adjacency) {
            return Err(invalid("graph is not connected".into()));
        }

        Ok(SkeletonLayout {
            name,
            num_joints,
            edges: canonical,
            keypoint_names,
            adjacency,
        })
    }

    /// Parse the line-oriented layout file format:
    ///
    /// ```text
    /// # comment
    /// joints <V>
    /// edge <a> <b>
    /// keypoint <id> <name>   (optional)
    /// ```
    ///
    /// The `joints` header must precede every `edge` line.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let name = name.into();
        let bad = |line_no: usize, reason: String| Error::Format {
            source_name: name.clone(),
            reason: format!("line {line_no}: {reason}"),
        };

        let mut num_joints: Option<usize> = None;
        let mut edges = Vec::new();
        let mut names: Vec<(usize, String)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let directive = parts.next().unwrap();
            match directive {
                "joints" => {
                    let v = parts
                        .next()
                        .ok_or_else(|| bad(line_no, "missing joint count".into()))?;
                    let v: usize = v
                        .parse()
                        .map_err(|_| bad(line_no, format!("bad joint count `{v}`")))?;
                    num_joints = Some(v);
                }
                "edge" => {
                    if num_joints.is_none() {
                        return Err(bad(line_no, "`edge` before `joints` header".into()));
                    }
                    let a = parts
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| bad(line_no, "edge needs two joint ids".into()))?;
                    let b = parts
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| bad(line_no, "edge needs two joint ids".into()))?;
                    edges.push((a, b));
                }
                "keypoint" => {
                    let id = parts
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| bad(line_no, "keypoint needs an id and a name".into()))?;
                    let kp_name = parts
                        .next()
                        .ok_or_else(|| bad(line_no, "keypoint needs an id and a name".into()))?;
                    names.push((id, kp_name.to_string()));
                }
                other => {
                    return Err(bad(line_no, format!("unknown directive `{other}`")));
                }
            }
        }

        let num_joints = num_joints.ok_or_else(|| Error::Format {
            source_name: name.clone(),
            reason: "missing `joints <V>` header".into(),
        })?;

        let keypoint_names = if names.is_empty() {
            Vec::new()
        } else {
            let mut full = vec![String::new(); num_joints];
            for (id, kp_name) in names {
                if id >= num_joints {
                    return Err(Error::Format {
                        source_name: name.clone(),
                        reason: format!("keypoint id {id} out of range"),
                    });
                }
                full[id] = kp_name;
            }
            for (id, kp_name) in full.iter_mut().enumerate() {
                if kp_name.is_empty() {
                    *kp_name = format!("joint{id}");
                }
            }
            full
        };

        SkeletonLayout::new(name, num_joints, edges, keypoint_names)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of joints V.
    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    /// Canonicalized undirected edges, each as (low id, high id), sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn keypoint_names(&self) -> &[String] {
        &self.keypoint_names
    }

    /// 1-hop neighbors of `joint`, ascending by joint id.
    pub fn neighbors(&self, joint: usize) -> Result<&[usize]> {
        self.check_joint(joint)?;
        Ok(&self.adjacency[joint])
    }

    fn check_joint(&self, joint: usize) -> Result<()> {
        if joint >= self.num_joints {
            return Err(Error::JointOutOfRange {
                joint,
                num_joints: self.num_joints,
            });
        }
        Ok(())
    }

    /// Render in the layout file format (the inverse of [`SkeletonLayout::parse`]).
    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("joints {}\n", self.num_joints));
        for &(a, b) in &self.edges {
            out.push_str(&format!("edge {a} {b}\n"));
        }
        for (id, name) in self.keypoint_names.iter().enumerate() {
            out.push_str(&format!("keypoint {id} {name}\n"));
        }
        out
    }
}

fn is_connected(num_joints: usize, adjacency: &[Vec<usize>]) -> bool {
    if num_joints == 1 {
        return true;
    }
    let mut seen = vec![false; num_joints];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(j) = stack.pop() {
        for &n in &adjacency[j] {
            if !seen[n] {
                seen[n] = true;
                count += 1;
                stack.push(n);
            }
        }
    }
    count == num_joints
}

/// Look up one of the built-in layouts: `openpose18` (V=18, 2D+confidence)
/// or `ntu25` (V=25, 3D+confidence).
pub fn builtin_layout(name: &str) -> Result<SkeletonLayout> {
    match name {
        "openpose18" => SkeletonLayout::parse("openpose18", OPENPOSE18_DATA),
        "ntu25" => SkeletonLayout::parse("ntu25", NTU25_DATA),
        other => Err(Error::UnknownLayout(other.to_string())),
    }
}

/// Names of the built-in layouts accepted by [`builtin_layout`].
pub const BUILTIN_LAYOUTS: [&str; 2] = ["openpose18", "ntu25"];

/// The 1-hop neighbor set of `root`.
pub fn neighbor_set(layout: &SkeletonLayout, root: usize) -> Result<NeighborSet> {
    let adjacent = layout.neighbors(root)?.to_vec();
    Ok(NeighborSet { root, adjacent })
}

/// Degree of `joint`: the number of incident bone edges.
pub fn degree(layout: &SkeletonLayout, joint: usize) -> Result<usize> {
    Ok(layout.neighbors(joint)?.len())
}

/// Maximum joint degree over the layout.
pub fn max_degree(layout: &SkeletonLayout) -> usize {
    (0..layout.num_joints())
        .map(|j| layout.adjacency[j].len())
        .max()
        .unwrap_or(0)
}

/// Borrowed view of one frame: V joints with C channels each, confidence last.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    num_joints: usize,
    channels: usize,
    values: &'a [f64],
}

impl<'a> Frame<'a> {
    pub fn new(num_joints: usize, channels: usize, values: &'a [f64]) -> Result<Self> {
        if values.len() != num_joints * channels {
            return Err(Error::ShapeMismatch(format!(
                "frame has {} values, expected {}x{}",
                values.len(),
                num_joints,
                channels
            )));
        }
        Ok(Frame {
            num_joints,
            channels,
            values,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of spatial coordinate channels (confidence excluded).
    pub fn spatial_channels(&self) -> usize {
        self.channels - 1
    }

    /// All channels of one joint, `(X, Y[, Z], C)`.
    pub fn joint(&self, joint: usize) -> &'a [f64] {
        &self.values[joint * self.channels..(joint + 1) * self.channels]
    }

    /// Euclidean distance between a joint's spatial coordinates and `point`.
    pub fn distance_to(&self, joint: usize, point: &[f64]) -> f64 {
        let coords = self.joint(joint);
        coords[..self.spatial_channels()]
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }
}

/// Center of gravity of a frame: the unweighted arithmetic mean of the
/// spatial coordinates over all joints. The confidence channel is excluded.
pub fn center_of_gravity(frame: Frame<'_>) -> Vec<f64> {
    let dims = frame.spatial_channels();
    let mut cg = vec![0.0; dims];
    for j in 0..frame.num_joints() {
        let coords = frame.joint(j);
        for (d, c) in cg.iter_mut().enumerate() {
            *c += coords[d];
        }
    }
    for c in &mut cg {
        *c /= frame.num_joints() as f64;
    }
    cg
}

/// Confidence-weighted center of gravity. Falls back to the unweighted mean
/// when the total confidence is zero.
pub fn center_of_gravity_weighted(frame: Frame<'_>) -> Vec<f64> {
    let dims = frame.spatial_channels();
    let mut cg = vec![0.0; dims];
    let mut total = 0.0;
    for j in 0..frame.num_joints() {
        let values = frame.joint(j);
        let w = values[dims];
        total += w;
        for (d, c) in cg.iter_mut().enumerate() {
            *c += w * values[d];
        }
    }
    if total == 0.0 {
        return center_of_gravity(frame);
    }
    for c in &mut cg {
        *c /= total;
    }
    cg
}

/// A T x V x C tensor of joint values over time, confidence channel last.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    layout_name: String,
    num_frames: usize,
    num_joints: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SkeletonSequence {
    /// Build a sequence, validating finiteness, `T >= 1`, and shape. When the
    /// layout name is a built-in one, V must match it.
    pub fn new(
        layout_name: impl Into<String>,
        num_frames: usize,
        num_joints: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let layout_name = layout_name.into();
        if num_frames == 0 {
            return Err(Error::InvalidValue("sequence needs at least one frame".into()));
        }
        if channels < 2 {
            return Err(Error::InvalidValue(
                "sequence needs at least one coordinate channel plus confidence".into(),
            ));
        }
        if data.len() != num_frames * num_joints * channels {
            return Err(Error::ShapeMismatch(format!(
                "sequence has {} values, expected {}x{}x{}",
                data.len(),
                num_frames,
                num_joints,
                channels
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "sequence contains a non-finite value {bad}"
            )));
        }
        if BUILTIN_LAYOUTS.contains(&layout_name.as_str()) {
            let expected = builtin_layout(&layout_name)?.num_joints();
            if num_joints != expected {
                return Err(Error::ShapeMismatch(format!(
                    "layout {layout_name} has {expected} joints, sequence has {num_joints}"
                )));
            }
        }
        Ok(SkeletonSequence {
            layout_name,
            num_frames,
            num_joints,
            channels,
            data,
        })
    }

    pub fn layout_name(&self) -> &str {
        &self.layout_name
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> Frame<'_> {
        let stride = self.num_joints * self.channels;
        Frame {
            num_joints: self.num_joints,
            channels: self.channels,
            values: &self.data[t * stride..(t + 1) * stride],
        }
    }

    /// Check that this sequence belongs to `layout`.
    pub fn check_layout(&self, layout: &SkeletonLayout) -> Result<()> {
        if self.layout_name != layout.name() {
            return Err(Error::LayoutMismatch {
                sequence: self.layout_name.clone(),
                expected: layout.name().to_string(),
            });
        }
        if self.num_joints != layout.num_joints() {
            return Err(Error::ShapeMismatch(format!(
                "sequence has {} joints, layout {} has {}",
                self.num_joints,
                layout.name(),
                layout.num_joints()
            )));
        }
        Ok(())
    }

    /// Pad (repeating the last frame) or truncate to exactly `frames` frames.
    pub fn fit_frames(&self, frames: usize) -> SkeletonSequence {
        let stride = self.num_joints * self.channels;
        let mut data = Vec::with_capacity(frames * stride);
        for t in 0..frames {
            let src = t.min(self.num_frames - 1);
            data.extend_from_slice(&self.data[src * stride..(src + 1) * stride]);
        }
        SkeletonSequence {
            layout_name: self.layout_name.clone(),
            num_frames: frames,
            num_joints: self.num_joints,
            channels: self.channels,
            data,
        }
    }
}

#[cfg(test)]
pub(crate) mod test_layouts {
    use super::SkeletonLayout;

    /// Path graph 0-1-2.
    pub fn path3() -> SkeletonLayout {
        SkeletonLayout::new("path3", 3, vec![(0, 1), (1, 2)], Vec::new()).unwrap()
    }

    /// Y-shaped 4-joint layout: joint 1 is the hub.
    pub fn y4() -> SkeletonLayout {
        SkeletonLayout::new("y4", 4, vec![(0, 1), (1, 2), (1, 3)], Vec::new()).unwrap()
    }
}
