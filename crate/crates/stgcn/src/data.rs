//! Data ingestion and generation: pose-JSON keypoint files, the internal
//! sequence text format, dataset manifests, and the seeded synthetic
//! dataset used for desk-scale training runs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::skeleton::SkeletonSequence;

/// Joints in a pose-JSON keypoint record.
const POSE_JOINTS: usize = 18;
/// Values per record: 18 joints × (X, Y, confidence).
const POSE_VALUES: usize = POSE_JOINTS * 3;

/// A sequence with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub sequence: SkeletonSequence,
    pub label: usize,
    pub sample_id: String,
}

/// A train/validation split of labeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    pub num_classes: usize,
}

/// Which on-disk representation [`load_sequence`] should expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceFormat {
    /// A directory of per-frame pose-JSON keypoint files, one frame per
    /// file, frames ordered by file name.
    OpenposeDir,
    /// The internal self-describing text format written by
    /// [`save_sequence`].
    Internal,
}

/// Bookkeeping from a directory load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub num_frames: usize,
    /// Frame indices that had no detected person and were zero-filled.
    pub zero_filled_frames: Vec<usize>,
}

/// Parse one pose-JSON keypoint record: the first person's flat
/// `pose_keypoints_2d` (or legacy `pose_keypoints`) array reshaped to
/// 18×(X, Y, C). Returns `Ok(None)` when no person was detected.
pub fn parse_openpose_frame(source_name: &str, text: &str) -> Result<Option<Vec<f64>>> {
    let parse_err = |reason: String| Error::Parse {
        source_name: source_name.to_string(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| parse_err(format!("invalid JSON: {e}")))?;
    let people = value
        .get("people")
        .and_then(|p| p.as_array())
        .ok_or_else(|| parse_err("missing `people` array".into()))?;
    let first = match people.first() {
        Some(person) => person,
        None => return Ok(None),
    };
    let keypoints = first
        .get("pose_keypoints_2d")
        .or_else(|| first.get("pose_keypoints"))
        .and_then(|k| k.as_array())
        .ok_or_else(|| parse_err("person record has no pose keypoints array".into()))?;
    if keypoints.len() != POSE_VALUES {
        return Err(Error::Arity {
            found: keypoints.len(),
            expected: POSE_VALUES,
        });
    }
    let mut frame = Vec::with_capacity(POSE_VALUES);
    for (i, v) in keypoints.iter().enumerate() {
        let x = v
            .as_f64()
            .ok_or_else(|| parse_err(format!("keypoint value {i} is not a number")))?;
        frame.push(x);
    }
    Ok(Some(frame))
}

/// Render a sequence in the internal text format. Floats use the shortest
/// representation that parses back to the identical value, so
/// save → load → save is byte-stable.
pub fn sequence_to_text(sequence: &SkeletonSequence) -> String {
    let mut out = String::new();
    out.push_str(&format!("sequence {}\n", sequence.layout_name()));
    out.push_str(&format!("frames {}\n", sequence.num_frames()));
    out.push_str(&format!("joints {}\n", sequence.num_joints()));
    out.push_str(&format!("channels {}\n", sequence.channels()));
    for t in 0..sequence.num_frames() {
        let cells: Vec<String> = sequence
            .frame(t)
            .values()
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Parse the internal text format (inverse of [`sequence_to_text`]).
pub fn sequence_from_text(source_name: &str, text: &str) -> Result<SkeletonSequence> {
    let bad = |reason: String| Error::Format {
        source_name: source_name.to_string(),
        reason,
    };
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing `{key}` header line")))?;
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| bad(format!("expected `{key} ...`, found `{line}`")))?;
        Ok(rest.trim().to_string())
    };
    let layout_name = header("sequence")?;
    let frames: usize = header("frames")?
        .parse()
        .map_err(|_| bad("bad frame count".into()))?;
    let joints: usize = header("joints")?
        .parse()
        .map_err(|_| bad("bad joint count".into()))?;
    let channels: usize = header("channels")?
        .parse()
        .map_err(|_| bad("bad channel count".into()))?;

    let mut data = Vec::with_capacity(frames * joints * channels);
    for t in 0..frames {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing data line for frame {t}")))?;
        let mut count = 0;
        for cell in line.split_whitespace() {
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(format!("frame {t}: bad number `{cell}`")))?;
            data.push(v);
            count += 1;
        }
        if count != joints * channels {
            return Err(bad(format!(
                "frame {t} has {count} values, expected {}",
                joints * channels
            )));
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing content after the last frame".into()));
    }
    SkeletonSequence::new(layout_name, frames, joints, channels, data)
}

/// Write a sequence file in the internal format.
pub fn save_sequence(sequence: &SkeletonSequence, path: &Path) -> Result<()> {
    fs::write(path, sequence_to_text(sequence))?;
    Ok(())
}

/// Load a sequence from disk. For `OpenposeDir`, every regular file in the
/// directory is one frame (ordered by file name); frames with no detected
/// person are zero-filled and listed in the report.
pub fn load_sequence(path: &Path, format: SequenceFormat) -> Result<(SkeletonSequence, LoadReport)> {
    match format {
        SequenceFormat::Internal => {
            let text = fs::read_to_string(path)?;
            let seq = sequence_from_text(&path.display().to_string(), &text)?;
            let report = LoadReport {
                num_frames: seq.num_frames(),
                zero_filled_frames: Vec::new(),
            };
            Ok((seq, report))
        }
        SequenceFormat::OpenposeDir => {
            let mut files: Vec<PathBuf> = fs::read_dir(path)?
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .map(|entry| entry.path())
                .filter(|p| p.is_file())
                .collect();
            files.sort_by_key(|p| p.file_name().map(|n| n.to_owned()));
            if files.is_empty() {
                return Err(Error::NoFrames(path.display().to_string()));
            }
            let mut data = Vec::with_capacity(files.len() * POSE_VALUES);
            let mut report = LoadReport {
                num_frames: files.len(),
                zero_filled_frames: Vec::new(),
            };
            for (t, file) in files.iter().enumerate() {
                let name = file.display().to_string();
                let text = fs::read_to_string(file)?;
                match parse_openpose_frame(&name, &text) {
                    Ok(Some(frame)) => data.extend_from_slice(&frame),
                    Ok(None) => {
                        data.extend_from_slice(&[0.0; POSE_VALUES]);
                        report.zero_filled_frames.push(t);
                    }
                    // Wrap arity failures so the offending file is named;
                    // parse errors already carry the file name.
                    Err(Error::Arity { found, expected }) => {
                        return Err(Error::Parse {
                            source_name: name,
                            reason: format!(
                                "keypoint record has {found} values, expected {expected}"
                            ),
                        });
                    }
                    Err(other) => return Err(other),
                }
            }
            let seq =
                SkeletonSequence::new("openpose18", files.len(), POSE_JOINTS, 3, data)?;
            Ok((seq, report))
        }
    }
}

/// Recipe for the procedural synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Class 0 raises the right arm, class 1 the left arm, class 2 squats;
    /// further classes ramp one joint sideways.
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub frames: usize,
    /// Standard deviation of the Gaussian coordinate noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 3,
            samples_per_class: 40,
            frames: 32,
            noise_sigma: 0.02,
            seed: 11,
        }
    }
}

/// Neutral standing pose on the 18-joint layout, (x, y) with y pointing up,
/// the figure roughly centered in the unit square.
const BASE_POSE: [(f64, f64); POSE_JOINTS] = [
    (0.50, 0.90), // nose
    (0.50, 0.78), // neck
    (0.38, 0.78), // right shoulder
    (0.34, 0.62), // right elbow
    (0.36, 0.48), // right wrist
    (0.62, 0.78), // left shoulder
    (0.66, 0.62), // left elbow
    (0.64, 0.48), // left wrist
    (0.42, 0.50), // right hip
    (0.42, 0.28), // right knee
    (0.42, 0.06), // right ankle
    (0.58, 0.50), // left hip
    (0.58, 0.28), // left knee
    (0.58, 0.06), // left ankle
    (0.47, 0.93), // right eye
    (0.53, 0.93), // left eye
    (0.44, 0.90), // right ear
    (0.56, 0.90), // left ear
];

/// Displacement of joint `j` at ramp progress `r` in [0, 1] for `class`.
fn class_motion(class: usize, j: usize, r: f64) -> (f64, f64) {
    match class {
        0 => match j {
            4 => (0.0, 0.40 * r),
            3 => (0.0, 0.25 * r),
            _ => (0.0, 0.0),
        },
        1 => match j {
            7 => (0.0, 0.40 * r),
            6 => (0.0, 0.25 * r),
            _ => (0.0, 0.0),
        },
        2 => match j {
            // Knees flare sideways while everything above them drops.
            9 => (-0.05 * r, 0.0),
            12 => (0.05 * r, 0.0),
            10 | 13 => (0.0, 0.0),
            _ => (0.0, -0.25 * r),
        },
        c => {
            if j == c % POSE_JOINTS {
                (0.40 * r, 0.0)
            } else {
                (0.0, 0.0)
            }
        }
    }
}

/// Standard normal draw via Box–Muller, deterministic per generator state.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generate the seeded synthetic dataset: per class, a characteristic joint
/// trajectory plus isotropic Gaussian noise, split 3:1 train:validation.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    if spec.num_classes == 0 || spec.samples_per_class == 0 || spec.frames == 0 {
        return Err(Error::InvalidValue(
            "synthetic dataset needs at least one class, sample, and frame".into(),
        ));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidValue("noise sigma must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let val_per_class = spec.samples_per_class / 4;
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for class in 0..spec.num_classes {
        for n in 0..spec.samples_per_class {
            let mut data = Vec::with_capacity(spec.frames * POSE_VALUES);
            for t in 0..spec.frames {
                let r = if spec.frames > 1 {
                    t as f64 / (spec.frames - 1) as f64
                } else {
                    0.0
                };
                for (j, &(bx, by)) in BASE_POSE.iter().enumerate() {
                    let (dx, dy) = class_motion(class, j, r);
                    let nx = spec.noise_sigma * gaussian(&mut rng);
                    let ny = spec.noise_sigma * gaussian(&mut rng);
                    data.push(bx + dx + nx);
                    data.push(by + dy + ny);
                    data.push(0.9);
                }
            }
            let sequence =
                SkeletonSequence::new("openpose18", spec.frames, POSE_JOINTS, 3, data)?;
            let sample = LabeledSample {
                sequence,
                label: class,
                sample_id: format!("class{class}_sample{n:03}"),
            };
            // The last quarter of each class goes to validation (3:1).
            if n < spec.samples_per_class - val_per_class {
                train.push(sample);
            } else {
                validation.push(sample);
            }
        }
    }
    Ok(Dataset {
        train,
        validation,
        num_classes: spec.num_classes,
    })
}

/// Write a dataset under `dir`: sequence files in `dir/sequences/` plus
/// `train.manifest` and `validation.manifest`, one `<relative path> <label>`
/// line per sample.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let seq_dir = dir.join("sequences");
    fs::create_dir_all(&seq_dir)?;
    for (manifest_name, samples) in [
        ("train.manifest", &dataset.train),
        ("validation.manifest", &dataset.validation),
    ] {
        let mut manifest = String::new();
        for sample in samples {
            let rel = format!("sequences/{}.seq", sample.sample_id);
            save_sequence(&sample.sequence, &dir.join(&rel))?;
            manifest.push_str(&format!("{rel} {}\n", sample.label));
        }
        fs::write(dir.join(manifest_name), manifest)?;
    }
    Ok(())
}

/// Read one manifest written by [`write_dataset`]; paths resolve relative
/// to the manifest's directory.
pub fn read_manifest(manifest: &Path) -> Result<Vec<LabeledSample>> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let text = fs::read_to_string(manifest)?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (rel, label) = line.rsplit_once(' ').ok_or_else(|| Error::Format {
            source_name: manifest.display().to_string(),
            reason: format!("line {}: expected `<path> <label>`", idx + 1),
        })?;
        let label: usize = label.parse().map_err(|_| Error::Format {
            source_name: manifest.display().to_string(),
            reason: format!("line {}: bad label `{label}`", idx + 1),
        })?;
        let path = base.join(rel);
        let (sequence, _) = load_sequence(&path, SequenceFormat::Internal)?;
        let sample_id = Path::new(rel)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| rel.to_string());
        samples.push(LabeledSample {
            sequence,
            label,
            sample_id,
        });
    }
    Ok(samples)
}

/// Placeholder for native 25-joint motion-capture skeleton files. Parsing
/// that format is out of scope; 25-joint data is expected to arrive in the
/// internal sequence format instead, with `sequence ntu25`, V=25 joints and
/// C=4 channels (X, Y, Z, confidence) per joint.
pub fn convert_ntu_skeleton(path: &Path) -> Result<SkeletonSequence> {
    Err(Error::Unsupported(format!(
        "native skeleton file {} not supported: provide the data in the internal \
         sequence format (layout ntu25, 25 joints, 4 channels X Y Z confidence)",
        path.display()
    )))
}
