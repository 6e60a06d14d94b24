//! Model checkpoints: a self-describing binary file plus a text manifest.
//!
//! Binary layout: a header (magic `STGM`, format version, strategy id,
//! layout name, partition count, joint count, input channels, class count,
//! temporal kernel size, mask flag, and the per-layer channel/stride plan)
//! followed by every parameter tensor in declared order as little-endian
//! f32 values. Because parameters are kept f32-exact by construction, a
//! save→load→save cycle is byte-identical.
//!
//! The manifest (`<checkpoint>.manifest`) lists the same header fields in
//! text plus one line per tensor with its shape, value count, and the
//! SHA-256 of its binary payload, and the SHA-256 of the whole file.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gcn::model::{LayerParams, Matrix, ModelMeta, ModelParams};
use crate::partition::Strategy;

/// Magic bytes of the checkpoint format.
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"STGM";
/// Current format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Path of the manifest that accompanies `checkpoint_path`.
pub fn manifest_path(checkpoint_path: &Path) -> PathBuf {
    let mut name = checkpoint_path.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(model: &ModelParams) -> Vec<u8> {
    let meta = &model.meta;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&meta.strategy.id().to_le_bytes());
    let name = meta.layout_name.as_bytes();
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(meta.num_partitions as u32).to_le_bytes());
    out.extend_from_slice(&(meta.num_joints as u32).to_le_bytes());
    out.extend_from_slice(&(meta.in_channels as u32).to_le_bytes());
    out.extend_from_slice(&(meta.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&(meta.temporal_kernel_size as u32).to_le_bytes());
    out.push(meta.mask_enabled as u8);
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        out.extend_from_slice(&(layer.in_channels as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_channels as u32).to_le_bytes());
        out.extend_from_slice(&(layer.temporal_stride as u32).to_le_bytes());
    }
    model.visit_params(|view| {
        for &value in view.values {
            out.extend_from_slice(&(value as f32).to_le_bytes());
        }
    });
    out
}

fn render_manifest(model: &ModelParams, file_name: &str, file_bytes: &[u8]) -> String {
    let meta = &model.meta;
    let mut out = String::new();
    out.push_str(&format!("checkpoint {file_name}\n"));
    out.push_str(&format!("file_sha256 {}\n", hex(&Sha256::digest(file_bytes))));
    out.push_str(&format!("version {CHECKPOINT_VERSION}\n"));
    out.push_str(&format!("strategy {}\n", meta.strategy));
    out.push_str(&format!("layout {}\n", meta.layout_name));
    out.push_str(&format!("partitions {}\n", meta.num_partitions));
    out.push_str(&format!("joints {}\n", meta.num_joints));
    out.push_str(&format!("in_channels {}\n", meta.in_channels));
    out.push_str(&format!("classes {}\n", meta.num_classes));
    out.push_str(&format!("temporal_kernel {}\n", meta.temporal_kernel_size));
    out.push_str(&format!(
        "mask {}\n",
        if meta.mask_enabled { "on" } else { "off" }
    ));
    out.push_str(&format!("layers {}\n", model.layers.len()));
    for (i, layer) in model.layers.iter().enumerate() {
        out.push_str(&format!(
            "layer {i} in {} out {} stride {}\n",
            layer.in_channels, layer.out_channels, layer.temporal_stride
        ));
    }
    model.visit_params(|view| {
        let shape: Vec<String> = view.shape.iter().map(|d| d.to_string()).collect();
        let mut payload = Vec::with_capacity(view.values.len() * 4);
        for &value in view.values {
            payload.extend_from_slice(&(value as f32).to_le_bytes());
        }
        out.push_str(&format!(
            "tensor {} shape {} values {} sha256 {}\n",
            view.name,
            shape.join("x"),
            view.values.len(),
            hex(&Sha256::digest(&payload))
        ));
    });
    out
}

/// Write the binary checkpoint and its text manifest.
pub fn save_checkpoint(model: &ModelParams, path: &Path) -> Result<()> {
    let bytes = encode(model);
    fs::write(path, &bytes)?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    fs::write(manifest_path(path), render_manifest(model, &file_name, &bytes))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    source: String,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Format {
                source_name: self.source.clone(),
                reason: format!(
                    "truncated: wanted {n} bytes at offset {}, file has {}",
                    self.offset,
                    self.bytes.len()
                ),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Read a checkpoint written by [`save_checkpoint`]. The manifest is not
/// consulted; the binary file is self-describing.
pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path)?;
    let source = path.display().to_string();
    let bad = |reason: String| Error::Format {
        source_name: source.clone(),
        reason,
    };
    let mut cur = Cursor {
        bytes: &bytes,
        offset: 0,
        source: source.clone(),
    };

    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let strategy = Strategy::from_id(cur.u32()?)?;
    let name_len = cur.u32()? as usize;
    let layout_name = String::from_utf8(cur.take(name_len)?.to_vec())
        .map_err(|_| bad("layout name is not valid UTF-8".into()))?;
    let num_partitions = cur.u32()? as usize;
    let num_joints = cur.u32()? as usize;
    let in_channels = cur.u32()? as usize;
    let num_classes = cur.u32()? as usize;
    let temporal_kernel_size = cur.u32()? as usize;
    let mask_enabled = match cur.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(bad(format!("bad mask flag {other}"))),
    };
    let num_layers = cur.u32()? as usize;

    let meta = ModelMeta {
        strategy,
        layout_name,
        num_partitions,
        num_joints,
        in_channels,
        num_classes,
        temporal_kernel_size,
        mask_enabled,
    };

    let mut layers = Vec::with_capacity(num_layers);
    let mut expected_in = in_channels;
    for i in 0..num_layers {
        let c_in = cur.u32()? as usize;
        let c_out = cur.u32()? as usize;
        let stride = cur.u32()? as usize;
        if c_in != expected_in {
            return Err(bad(format!(
                "layer {i} expects {c_in} input channels, chain provides {expected_in}"
            )));
        }
        if stride != 1 && stride != 2 {
            return Err(bad(format!("layer {i} has invalid stride {stride}")));
        }
        layers.push(LayerParams {
            in_channels: c_in,
            out_channels: c_out,
            weights: (0..num_partitions)
                .map(|_| Matrix::zeros(c_out, c_in))
                .collect(),
            bias: vec![0.0; c_out],
            mask: mask_enabled.then(|| vec![0.0; num_joints * num_joints]),
            temporal_kernel: vec![0.0; c_out * c_out * temporal_kernel_size],
            temporal_stride: stride,
        });
        expected_in = c_out;
    }

    let mut model = ModelParams {
        meta,
        layers,
        classifier_weight: Matrix::zeros(num_classes, expected_in),
        classifier_bias: vec![0.0; num_classes],
    };

    let mut read_err = None;
    model.visit_params_mut(|values, _| {
        if read_err.is_some() {
            return;
        }
        for v in values.iter_mut() {
            match cur.f32() {
                Ok(x) => *v = x as f64,
                Err(e) => {
                    read_err = Some(e);
                    return;
                }
            }
        }
    });
    if let Some(e) = read_err {
        return Err(e);
    }
    if cur.offset != bytes.len() {
        return Err(bad(format!(
            "{} trailing bytes after parameters",
            bytes.len() - cur.offset
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_model(mask: bool) -> ModelParams {
        let meta = ModelMeta {
            strategy: Strategy::Connection,
            layout_name: "openpose18".into(),
            num_partitions: 4,
            num_joints: 18,
            in_channels: 3,
            num_classes: 5,
            temporal_kernel_size: 9,
            mask_enabled: mask,
        };
        ModelParams::new(meta, &[(6, 1), (8, 2)], 21).unwrap()
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = sample_model(true);
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);

        let bytes1 = fs::read(&path).unwrap();
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&loaded, &path2).unwrap();
        let bytes2 = fs::read(&path2).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn manifest_describes_tensors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = sample_model(true);
        save_checkpoint(&model, &path).unwrap();
        let manifest = fs::read_to_string(manifest_path(&path)).unwrap();
        assert!(manifest.contains("strategy connection"));
        assert!(manifest.contains("layout openpose18"));
        assert!(manifest.contains("mask on"));
        assert!(manifest.contains("tensor layer0.weight0 shape 6x3 values 18 sha256 "));
        assert!(manifest.contains("tensor layer1.temporal shape 8x8x9 values 576 sha256 "));
        assert!(manifest.contains("tensor classifier.weight shape 5x8 values 40 sha256 "));
        // File checksum matches the bytes on disk.
        let bytes = fs::read(&path).unwrap();
        let expect = hex(&Sha256::digest(&bytes));
        assert!(manifest.contains(&format!("file_sha256 {expect}")));
    }

    #[test]
    fn maskless_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = sample_model(false);
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);
        assert!(loaded.layers[0].mask.is_none());
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = sample_model(true);
        save_checkpoint(&model, &path).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad_magic = dir.path().join("bad1.ckpt");
        fs::write(&bad_magic, &bytes).unwrap();
        assert!(load_checkpoint(&bad_magic).is_err());

        let good = fs::read(&path).unwrap();
        let truncated = dir.path().join("bad2.ckpt");
        fs::write(&truncated, &good[..good.len() - 5]).unwrap();
        assert!(load_checkpoint(&truncated).is_err());

        let mut padded = good.clone();
        padded.extend_from_slice(&[0, 0, 0, 0]);
        let trailing = dir.path().join("bad3.ckpt");
        fs::write(&trailing, &padded).unwrap();
        assert!(load_checkpoint(&trailing).is_err());
    }
}
