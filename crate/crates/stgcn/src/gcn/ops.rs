//! Forward and backward passes, hand-derived per operation.
//!
//! Feature maps are dense T×V×C tensors. The spatial graph convolution of a
//! layer computes `out_t = Σ_k ((Ã_k ⊙ M) f_t) W_kᵀ + bias` with Ã_k the
//! normalized adjacency slice for label k (frame-specific for the
//! full-distance strategy) and M the optional edge-importance mask. The
//! temporal convolution then mixes channels along the frame axis per joint.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adjacency::SequenceStacks;
use crate::error::{Error, Result};
use crate::gcn::model::{LayerParams, Matrix, ModelGrads, ModelParams};
use crate::skeleton::{center_of_gravity, SkeletonSequence};

/// Dense T×V×C tensor, flat in [frame][joint][channel] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub frames: usize,
    pub joints: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(frames: usize, joints: usize, channels: usize) -> Self {
        FeatureMap {
            frames,
            joints,
            channels,
            data: vec![0.0; frames * joints * channels],
        }
    }

    pub fn at(&self, t: usize, v: usize, c: usize) -> f64 {
        self.data[(t * self.joints + v) * self.channels + c]
    }

    pub fn set(&mut self, t: usize, v: usize, c: usize, value: f64) {
        self.data[(t * self.joints + v) * self.channels + c] = value;
    }

    /// One frame as a flat V×C slice.
    pub fn frame(&self, t: usize) -> &[f64] {
        let stride = self.joints * self.channels;
        &self.data[t * stride..(t + 1) * stride]
    }

    fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let stride = self.joints * self.channels;
        &mut self.data[t * stride..(t + 1) * stride]
    }
}

/// How sequence values become network input features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    /// Raw channels as stored: coordinates plus confidence.
    #[default]
    Raw,
    /// Coordinates with the per-frame center of gravity subtracted
    /// (confidence unchanged); used by the rigid-invariance checks.
    Centered,
}

/// Turn a sequence into the network's input feature map.
pub fn features_from_sequence(sequence: &SkeletonSequence, mode: FeatureMode) -> FeatureMap {
    let (t, v, c) = (
        sequence.num_frames(),
        sequence.num_joints(),
        sequence.channels(),
    );
    let mut out = FeatureMap {
        frames: t,
        joints: v,
        channels: c,
        data: sequence.data().to_vec(),
    };
    if mode == FeatureMode::Centered {
        let dims = c - 1;
        for ti in 0..t {
            let cg = center_of_gravity(sequence.frame(ti));
            let frame = out.frame_mut(ti);
            for vi in 0..v {
                for d in 0..dims {
                    frame[vi * c + d] -= cg[d];
                }
            }
        }
    }
    out
}

fn check_spatial_shapes(
    input: &FeatureMap,
    stacks: &SequenceStacks,
    frame_stride: usize,
    layer: &LayerParams,
) -> Result<()> {
    if input.channels != layer.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "spatial convolution expects {} input channels, feature map has {}",
            layer.in_channels, input.channels
        )));
    }
    let stack0 = stacks.stack_at(0);
    if stack0.num_joints() != input.joints {
        return Err(Error::ShapeMismatch(format!(
            "stack covers {} joints, feature map has {}",
            stack0.num_joints(),
            input.joints
        )));
    }
    if stack0.num_slices() != layer.weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "stack has {} slices, layer has {} kernel subsets",
            stack0.num_slices(),
            layer.weights.len()
        )));
    }
    if let Some(mask) = &layer.mask {
        if mask.len() != input.joints * input.joints {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                input.joints * input.joints
            )));
        }
    }
    if stacks.is_per_frame() {
        // The last feature row maps to source frame (frames-1)*frame_stride,
        // which must exist in the per-frame stack list.
        let last = (input.frames - 1) * frame_stride;
        if last >= stacks.count() {
            return Err(Error::ShapeMismatch(format!(
                "feature row {} maps to source frame {last}, but only {} per-frame stacks exist",
                input.frames - 1,
                stacks.count()
            )));
        }
    }
    Ok(())
}

/// Dot product with four independent accumulators so the loop pipelines and
/// vectorizes; the summation order is fixed, keeping results deterministic.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut it_a = a.chunks_exact(4);
    let mut it_b = b.chunks_exact(4);
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0, 0.0, 0.0);
    for (ca, cb) in (&mut it_a).zip(&mut it_b) {
        s0 += ca[0] * cb[0];
        s1 += ca[1] * cb[1];
        s2 += ca[2] * cb[2];
        s3 += ca[3] * cb[3];
    }
    let mut rest = 0.0;
    for (x, y) in it_a.remainder().iter().zip(it_b.remainder()) {
        rest += x * y;
    }
    (s0 + s2) + (s1 + s3) + rest
}

/// acc += s * x, elementwise.
#[inline]
fn axpy(acc: &mut [f64], s: f64, x: &[f64]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += s * b;
    }
}

/// Spatial graph convolution. `frame_stride` is the product of the temporal
/// strides of all earlier layers: feature row t corresponds to source frame
/// `t * frame_stride`, which selects the stack for per-frame strategies.
pub fn spatial_gconv(
    input: &FeatureMap,
    stacks: &SequenceStacks,
    frame_stride: usize,
    layer: &LayerParams,
) -> Result<FeatureMap> {
    check_spatial_shapes(input, stacks, frame_stride, layer)?;
    let (t_len, v, c_in, c_out) = (
        input.frames,
        input.joints,
        layer.in_channels,
        layer.out_channels,
    );
    let k_count = layer.weights.len();
    let mut out = FeatureMap::zeros(t_len, v, c_out);
    let mut h = vec![0.0; v * c_in];

    for t in 0..t_len {
        let stack = stacks.stack_at(t * frame_stride);
        let f = input.frame(t);
        let out_frame = out.frame_mut(t);
        for k in 0..k_count {
            let slice = stack.slice(k);
            // h = (Ã_k ⊙ M) f : V×C_in, exploiting slice sparsity.
            h.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..v {
                let h_row = &mut h[j * c_in..(j + 1) * c_in];
                for i in 0..v {
                    let mut b = slice[j * v + i];
                    if b == 0.0 {
                        continue;
                    }
                    if let Some(mask) = &layer.mask {
                        b *= mask[j * v + i];
                    }
                    axpy(h_row, b, &f[i * c_in..(i + 1) * c_in]);
                }
            }
            // out += h W_kᵀ.
            let w = &layer.weights[k];
            for j in 0..v {
                let h_row = &h[j * c_in..(j + 1) * c_in];
                let out_row = &mut out_frame[j * c_out..(j + 1) * c_out];
                for (co, out_cell) in out_row.iter_mut().enumerate() {
                    *out_cell += dot(h_row, w.row(co));
                }
            }
        }
        for j in 0..v {
            for co in 0..c_out {
                out_frame[j * c_out + co] += layer.bias[co];
            }
        }
    }
    Ok(out)
}

/// Gradients of the spatial graph convolution. Returns
/// (dweights, dbias, dmask, dinput); `dmask` is None when the layer has no
/// mask.
#[allow(clippy::type_complexity)]
pub fn spatial_gconv_backward(
    gout: &FeatureMap,
    input: &FeatureMap,
    stacks: &SequenceStacks,
    frame_stride: usize,
    layer: &LayerParams,
) -> (Vec<Matrix>, Vec<f64>, Option<Vec<f64>>, FeatureMap) {
    let (t_len, v, c_in, c_out) = (
        input.frames,
        input.joints,
        layer.in_channels,
        layer.out_channels,
    );
    let k_count = layer.weights.len();
    let mut dweights: Vec<Matrix> = layer
        .weights
        .iter()
        .map(|w| Matrix::zeros(w.rows, w.cols))
        .collect();
    let mut dbias = vec![0.0; c_out];
    let mut dmask = layer.mask.as_ref().map(|m| vec![0.0; m.len()]);
    let mut dinput = FeatureMap::zeros(t_len, v, c_in);

    let mut h = vec![0.0; v * c_in];
    let mut p = vec![0.0; v * c_in];

    for t in 0..t_len {
        let stack = stacks.stack_at(t * frame_stride);
        let f = input.frame(t);
        let g = gout.frame(t);
        for j in 0..v {
            for co in 0..c_out {
                dbias[co] += g[j * c_out + co];
            }
        }
        let din = dinput.frame_mut(t);
        for k in 0..k_count {
            let slice = stack.slice(k);
            let w = &layer.weights[k];
            // Recompute h = (Ã_k ⊙ M) f (cheaper than caching K tensors).
            h.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..v {
                let h_row = &mut h[j * c_in..(j + 1) * c_in];
                for i in 0..v {
                    let mut b = slice[j * v + i];
                    if b == 0.0 {
                        continue;
                    }
                    if let Some(mask) = &layer.mask {
                        b *= mask[j * v + i];
                    }
                    axpy(h_row, b, &f[i * c_in..(i + 1) * c_in]);
                }
            }
            // dW_k += g_tᵀ h ; p = g_t W_k.
            let dw = &mut dweights[k];
            p.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..v {
                let g_row = &g[j * c_out..(j + 1) * c_out];
                let h_row = &h[j * c_in..(j + 1) * c_in];
                let p_row = &mut p[j * c_in..(j + 1) * c_in];
                for co in 0..c_out {
                    let go = g_row[co];
                    if go == 0.0 {
                        continue;
                    }
                    axpy(&mut dw.data[co * c_in..(co + 1) * c_in], go, h_row);
                    axpy(p_row, go, w.row(co));
                }
            }
            // dinput += Bᵀ p ; dmask += ((g W_k) fᵀ) ⊙ Ã_k.
            for j in 0..v {
                let p_row = &p[j * c_in..(j + 1) * c_in];
                for i in 0..v {
                    let a = slice[j * v + i];
                    if a == 0.0 {
                        continue;
                    }
                    let m = layer
                        .mask
                        .as_ref()
                        .map(|mask| mask[j * v + i])
                        .unwrap_or(1.0);
                    let b = a * m;
                    let f_row = &f[i * c_in..(i + 1) * c_in];
                    axpy(&mut din[i * c_in..(i + 1) * c_in], b, p_row);
                    if let Some(dm) = &mut dmask {
                        dm[j * v + i] += dot(p_row, f_row) * a;
                    }
                }
            }
        }
    }
    (dweights, dbias, dmask, dinput)
}

/// The kernel rearranged tap-major (`[tap][co][ci]`, ci contiguous) so the
/// per-tap inner loops work on contiguous rows.
fn tap_major_kernel(kernel: &[f64], c: usize, kt: usize) -> Vec<f64> {
    let mut major = vec![0.0; kernel.len()];
    for co in 0..c {
        for ci in 0..c {
            for u in 0..kt {
                major[(u * c + co) * c + ci] = kernel[(co * c + ci) * kt + u];
            }
        }
    }
    major
}

/// 1-D temporal convolution along the frame axis, independently per joint,
/// with symmetric zero padding. Output length is ceil(T / stride).
pub fn temporal_conv(input: &FeatureMap, layer: &LayerParams, kt: usize) -> FeatureMap {
    let (t_len, v, c) = (input.frames, input.joints, layer.out_channels);
    debug_assert_eq!(input.channels, c);
    let pad = (kt - 1) / 2;
    let stride = layer.temporal_stride;
    let t_out = (t_len + 2 * pad - kt) / stride + 1;
    let major = tap_major_kernel(&layer.temporal_kernel, c, kt);
    let mut out = FeatureMap::zeros(t_out, v, c);
    for to in 0..t_out {
        let out_frame = out.frame_mut(to);
        for (u, tap) in (0..kt).map(|u| (u, (to * stride + u) as isize - pad as isize)) {
            if tap < 0 || tap >= t_len as isize {
                continue;
            }
            let x = input.frame(tap as usize);
            let w_u = &major[u * c * c..(u + 1) * c * c];
            for j in 0..v {
                let x_row = &x[j * c..(j + 1) * c];
                let out_row = &mut out_frame[j * c..(j + 1) * c];
                for (co, out_cell) in out_row.iter_mut().enumerate() {
                    *out_cell += dot(&w_u[co * c..(co + 1) * c], x_row);
                }
            }
        }
    }
    out
}

/// Gradients of the temporal convolution: (dkernel, dinput).
pub fn temporal_conv_backward(
    gout: &FeatureMap,
    input: &FeatureMap,
    layer: &LayerParams,
    kt: usize,
) -> (Vec<f64>, FeatureMap) {
    let (t_len, v, c) = (input.frames, input.joints, layer.out_channels);
    let pad = (kt - 1) / 2;
    let stride = layer.temporal_stride;
    let major = tap_major_kernel(&layer.temporal_kernel, c, kt);
    // Accumulate tap-major for contiguous rows, then scatter back at the end.
    let mut dmajor = vec![0.0; layer.temporal_kernel.len()];
    let mut dinput = FeatureMap::zeros(t_len, v, c);
    for to in 0..gout.frames {
        let g = gout.frame(to);
        for u in 0..kt {
            let tap = (to * stride + u) as isize - pad as isize;
            if tap < 0 || tap >= t_len as isize {
                continue;
            }
            let x = input.frame(tap as usize);
            let dx = dinput.frame_mut(tap as usize);
            let w_u = &major[u * c * c..(u + 1) * c * c];
            let dw_u = &mut dmajor[u * c * c..(u + 1) * c * c];
            for j in 0..v {
                let g_row = &g[j * c..(j + 1) * c];
                let x_row = &x[j * c..(j + 1) * c];
                let dx_row = &mut dx[j * c..(j + 1) * c];
                for co in 0..c {
                    let go = g_row[co];
                    if go == 0.0 {
                        continue;
                    }
                    axpy(&mut dw_u[co * c..(co + 1) * c], go, x_row);
                    axpy(dx_row, go, &w_u[co * c..(co + 1) * c]);
                }
            }
        }
    }
    let mut dkernel = vec![0.0; layer.temporal_kernel.len()];
    for co in 0..c {
        for ci in 0..c {
            for u in 0..kt {
                dkernel[(co * c + ci) * kt + u] = dmajor[(u * c + co) * c + ci];
            }
        }
    }
    (dkernel, dinput)
}

fn relu(map: &FeatureMap) -> FeatureMap {
    FeatureMap {
        frames: map.frames,
        joints: map.joints,
        channels: map.channels,
        data: map.data.iter().map(|&x| x.max(0.0)).collect(),
    }
}

/// Chain gradient through ReLU: pass where the pre-activation was positive.
fn relu_backward(grad: &mut FeatureMap, pre_activation: &FeatureMap) {
    for (g, &z) in grad.data.iter_mut().zip(&pre_activation.data) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Inverted-dropout mask: entries are 0 with probability p, else 1/(1-p).
fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Mean over frames and joints, one value per channel.
fn global_average_pool(map: &FeatureMap) -> Vec<f64> {
    let n = (map.frames * map.joints) as f64;
    let mut pooled = vec![0.0; map.channels];
    for chunk in map.data.chunks(map.channels) {
        for (pc, &x) in pooled.iter_mut().zip(chunk) {
            *pc += x;
        }
    }
    for pc in &mut pooled {
        *pc /= n;
    }
    pooled
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the true class under predicted probabilities. A zero
/// probability is clamped so one hopeless sample keeps a finite loss, but
/// NaN — the signature of a diverged forward pass — propagates so the
/// training loop can abort. (`f64::max` would silently eat the NaN.)
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    let p = probs[label];
    if p.is_nan() {
        return f64::NAN;
    }
    -p.max(f64::MIN_POSITIVE).ln()
}

/// Everything the backward pass needs from one layer's forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: FeatureMap,
    pub z_spatial: FeatureMap,
    pub a_spatial: FeatureMap,
    pub z_temporal: FeatureMap,
    pub dropout_mask: Option<Vec<f64>>,
    pub frame_stride: usize,
}

/// Cached activations of a full forward pass over one sample.
#[derive(Debug, Clone)]
pub struct SampleCache {
    pub layers: Vec<LayerCache>,
    pub final_map: FeatureMap,
    pub pooled: Vec<f64>,
    pub probs: Vec<f64>,
}

fn check_model_input(model: &ModelParams, features: &FeatureMap) -> Result<()> {
    if features.joints != model.meta.num_joints {
        return Err(Error::ShapeMismatch(format!(
            "feature map has {} joints, model expects {}",
            features.joints, model.meta.num_joints
        )));
    }
    if features.channels != model.meta.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "feature map has {} channels, model expects {}",
            features.channels, model.meta.in_channels
        )));
    }
    Ok(())
}

fn forward_impl(
    model: &ModelParams,
    features: &FeatureMap,
    stacks: &SequenceStacks,
    mut dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<SampleCache> {
    check_model_input(model, features)?;
    let kt = model.meta.temporal_kernel_size;
    let mut current = features.clone();
    let mut frame_stride = 1;
    let mut layer_caches = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let input = current;
        let z_spatial = spatial_gconv(&input, stacks, frame_stride, layer)?;
        let a_spatial = relu(&z_spatial);
        let z_temporal = temporal_conv(&a_spatial, layer, kt);
        let mut activated = relu(&z_temporal);
        let mask = match &mut dropout {
            Some((p, rng)) if *p > 0.0 => {
                let m = dropout_mask(activated.data.len(), *p, rng);
                for (x, &keep) in activated.data.iter_mut().zip(&m) {
                    *x *= keep;
                }
                Some(m)
            }
            _ => None,
        };
        layer_caches.push(LayerCache {
            input,
            z_spatial,
            a_spatial,
            z_temporal,
            dropout_mask: mask,
            frame_stride,
        });
        frame_stride *= layer.temporal_stride;
        current = activated;
    }
    let pooled = global_average_pool(&current);
    let w = &model.classifier_weight;
    let logits: Vec<f64> = (0..w.rows)
        .map(|c| {
            let mut acc = model.classifier_bias[c];
            for (ci, &p) in pooled.iter().enumerate() {
                acc += w.get(c, ci) * p;
            }
            acc
        })
        .collect();
    let probs = softmax(&logits);
    Ok(SampleCache {
        layers: layer_caches,
        final_map: current,
        pooled,
        probs,
    })
}

/// Inference-mode forward pass: no dropout, returns class probabilities.
pub fn forward_eval(
    model: &ModelParams,
    features: &FeatureMap,
    stacks: &SequenceStacks,
) -> Result<Vec<f64>> {
    Ok(forward_impl(model, features, stacks, None)?.probs)
}

/// Training-mode forward pass: applies inverted dropout after each layer and
/// keeps the activations needed by [`backward_sample`].
pub fn forward_train(
    model: &ModelParams,
    features: &FeatureMap,
    stacks: &SequenceStacks,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SampleCache> {
    forward_impl(model, features, stacks, Some((dropout, rng)))
}

/// Accumulate the gradients of `scale * cross_entropy(sample)` into `grads`.
/// With `scale = 1/batch_size` the accumulated total is the mean batch loss
/// gradient.
pub fn backward_sample(
    model: &ModelParams,
    cache: &SampleCache,
    stacks: &SequenceStacks,
    label: usize,
    scale: f64,
    grads: &mut ModelGrads,
) {
    let kt = model.meta.temporal_kernel_size;
    let num_classes = model.meta.num_classes;

    // d(mean CE)/dlogits = softmax - onehot, scaled.
    let dlogits: Vec<f64> = (0..num_classes)
        .map(|c| (cache.probs[c] - if c == label { 1.0 } else { 0.0 }) * scale)
        .collect();

    let feat_len = cache.pooled.len();
    let mut dpooled = vec![0.0; feat_len];
    for (c, &dl) in dlogits.iter().enumerate() {
        grads.classifier_bias[c] += dl;
        let w_row = model.classifier_weight.row(c);
        let dw_row = &mut grads.classifier_weight.data[c * feat_len..(c + 1) * feat_len];
        for ci in 0..feat_len {
            dw_row[ci] += dl * cache.pooled[ci];
            dpooled[ci] += dl * w_row[ci];
        }
    }

    // Pool backward: every (t, v) position shares the channel gradient.
    let fm = &cache.final_map;
    let n = (fm.frames * fm.joints) as f64;
    let mut grad = FeatureMap::zeros(fm.frames, fm.joints, fm.channels);
    for chunk in grad.data.chunks_mut(fm.channels) {
        for (g, &dp) in chunk.iter_mut().zip(&dpooled) {
            *g = dp / n;
        }
    }

    for idx in (0..model.layers.len()).rev() {
        let layer = &model.layers[idx];
        let lcache = &cache.layers[idx];
        if let Some(mask) = &lcache.dropout_mask {
            for (g, &keep) in grad.data.iter_mut().zip(mask) {
                *g *= keep;
            }
        }
        relu_backward(&mut grad, &lcache.z_temporal);
        let (dkernel, mut da_spatial) =
            temporal_conv_backward(&grad, &lcache.a_spatial, layer, kt);
        relu_backward(&mut da_spatial, &lcache.z_spatial);
        let (dweights, dbias, dmask, dinput) = spatial_gconv_backward(
            &da_spatial,
            &lcache.input,
            stacks,
            lcache.frame_stride,
            layer,
        );

        let lg = &mut grads.layers[idx];
        for (dk, k) in dkernel.iter().zip(lg.temporal_kernel.iter_mut()) {
            *k += dk;
        }
        for (dw, gw) in dweights.iter().zip(lg.weights.iter_mut()) {
            for (a, b) in dw.data.iter().zip(gw.data.iter_mut()) {
                *b += a;
            }
        }
        for (a, b) in dbias.iter().zip(lg.bias.iter_mut()) {
            *b += a;
        }
        if let (Some(dm), Some(gm)) = (dmask, lg.mask.as_mut()) {
            for (a, b) in dm.iter().zip(gm.iter_mut()) {
                *b += a;
            }
        }
        grad = dinput;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency::{build_stack, normalize, PartitionStack, SequenceStacks};
    use crate::gcn::model::{ModelMeta, ModelParams};
    use crate::partition::{index_labels, Strategy};
    use crate::skeleton::test_layouts::y4;
    use rand::SeedableRng;

    fn y4_stacks() -> SequenceStacks {
        let map = index_labels(&y4());
        SequenceStacks::Static(normalize(&build_stack(&y4(), &map).unwrap()))
    }

    /// Identity stack: K=1, slice 0 = I.
    fn identity_stack(v: usize) -> SequenceStacks {
        let layout = y4();
        assert_eq!(v, 4);
        // Build from an all-zero spatial label map on a constant profile:
        // slice 0 = A + I. Instead construct the pure identity by zeroing
        // the off-diagonal: easier to build via a LabelMap is not possible,
        // so go through binary round trip of a hand-made stack.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PSTK");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&(v as u32).to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        for j in 0..v {
            for i in 0..v {
                let x: f32 = if i == j { 1.0 } else { 0.0 };
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        let _ = &layout;
        SequenceStacks::Static(PartitionStack::read_binary(&mut bytes.as_slice()).unwrap())
    }

    fn layer(k: usize, c_in: usize, c_out: usize, kt: usize, stride: usize) -> LayerParams {
        LayerParams {
            in_channels: c_in,
            out_channels: c_out,
            weights: (0..k).map(|_| Matrix::zeros(c_out, c_in)).collect(),
            bias: vec![0.0; c_out],
            mask: None,
            temporal_kernel: vec![0.0; c_out * c_out * kt],
            temporal_stride: stride,
        }
    }

    #[test]
    fn gconv_zero_everything_is_zero() {
        let input = FeatureMap::zeros(3, 4, 2);
        let l = layer(4, 2, 5, 9, 1);
        let out = spatial_gconv(&input, &y4_stacks(), 1, &l).unwrap();
        assert!(out.data.iter().all(|&x| x == 0.0));
        assert_eq!((out.frames, out.joints, out.channels), (3, 4, 5));
    }

    #[test]
    fn gconv_identity_configuration() {
        // K=1, Ã_0 = I, W_0 = I, bias = 0 -> output equals input.
        let mut input = FeatureMap::zeros(2, 4, 3);
        for (i, x) in input.data.iter_mut().enumerate() {
            *x = (i as f64) * 0.25 - 1.0;
        }
        let mut l = layer(1, 3, 3, 9, 1);
        for c in 0..3 {
            l.weights[0].set(c, c, 1.0);
        }
        let out = spatial_gconv(&input, &identity_stack(4), 1, &l).unwrap();
        assert_eq!(out.data, input.data);
    }

    #[test]
    fn gconv_matches_naive_neighbor_sum() {
        // Brute-force oracle: out[j][co] = Σ_{i ∈ B(j)∪{j}} norm(j,i) ·
        // (W_{label_j(i)} f_i)[co] + bias, with norm from label counts.
        let layout = y4();
        let map = index_labels(&layout);
        let stacks = y4_stacks();
        let (v, c_in, c_out) = (4, 2, 3);
        let mut l = layer(4, c_in, c_out, 9, 1);
        let mut seed = 1.0f64;
        let mut next = || {
            seed = (seed * 1.3 + 0.7) % 2.0;
            seed - 1.0
        };
        for w in &mut l.weights {
            for cell in &mut w.data {
                *cell = next();
            }
        }
        for b in &mut l.bias {
            *b = next();
        }
        let mut input = FeatureMap::zeros(1, v, c_in);
        for x in &mut input.data {
            *x = next();
        }
        let out = spatial_gconv(&input, &stacks, 1, &l).unwrap();
        for j in 0..v {
            for co in 0..c_out {
                let mut expect = l.bias[co];
                let members: Vec<usize> = map
                    .assignments(j)
                    .iter()
                    .map(|&(joint, _)| joint)
                    .collect();
                for &i in &members {
                    let label = map.label_of(j, i).unwrap();
                    let peers = map
                        .assignments(j)
                        .iter()
                        .filter(|&&(_, l2)| l2 == label)
                        .count();
                    let norm = 1.0 / peers as f64;
                    let mut wf = 0.0;
                    for ci in 0..c_in {
                        wf += l.weights[label].get(co, ci) * input.at(0, i, ci);
                    }
                    expect += norm * wf;
                }
                assert!(
                    (out.at(0, j, co) - expect).abs() < 1e-12,
                    "mismatch at joint {j} channel {co}"
                );
            }
        }
    }

    #[test]
    fn gconv_mask_all_ones_is_identity_to_disabled() {
        let mut l = layer(4, 2, 3, 9, 1);
        let mut x = 0.3;
        for w in &mut l.weights {
            for cell in &mut w.data {
                x = (x * 7.7 + 0.1) % 1.0;
                *cell = x;
            }
        }
        let mut input = FeatureMap::zeros(3, 4, 2);
        for cell in &mut input.data {
            x = (x * 3.3 + 0.2) % 1.0;
            *cell = x;
        }
        let plain = spatial_gconv(&input, &y4_stacks(), 1, &l).unwrap();
        l.mask = Some(vec![1.0; 16]);
        let masked = spatial_gconv(&input, &y4_stacks(), 1, &l).unwrap();
        for (a, b) in plain.data.iter().zip(&masked.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gconv_is_linear_over_slices() {
        // Distributivity: the full stack equals the sum over single-slice
        // stacks (bias zero to avoid counting it K times).
        let stacks = y4_stacks();
        let full = match &stacks {
            SequenceStacks::Static(s) => s.clone(),
            _ => unreachable!(),
        };
        let mut l = layer(4, 2, 3, 9, 1);
        let mut x = 0.9;
        for w in &mut l.weights {
            for cell in &mut w.data {
                x = (x * 5.1 + 0.3) % 1.0;
                *cell = x;
            }
        }
        let mut input = FeatureMap::zeros(2, 4, 2);
        for cell in &mut input.data {
            x = (x * 2.9 + 0.4) % 1.0;
            *cell = x;
        }
        let whole = spatial_gconv(&input, &stacks, 1, &l).unwrap();
        let mut summed = FeatureMap::zeros(2, 4, 3);
        for k in 0..4 {
            let only = SequenceStacks::Static(full.with_only_slice(k));
            let part = spatial_gconv(&input, &only, 1, &l).unwrap();
            for (s, p) in summed.data.iter_mut().zip(&part.data) {
                *s += p;
            }
        }
        for (a, b) in whole.data.iter().zip(&summed.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_delta_kernel_is_identity() {
        let (t, v, c) = (5, 4, 3);
        let mut l = layer(1, c, c, 9, 1);
        // Centered delta: tap 4 of the diagonal channels.
        for ch in 0..c {
            l.temporal_kernel[(ch * c + ch) * 9 + 4] = 1.0;
        }
        let mut input = FeatureMap::zeros(t, v, c);
        for (i, x) in input.data.iter_mut().enumerate() {
            *x = i as f64 * 0.5 - 10.0;
        }
        let out = temporal_conv(&input, &l, 9);
        assert_eq!(out.data, input.data);
    }

    #[test]
    fn temporal_moving_average_constant_interior() {
        // Kernel summing to 1 per channel on constant-in-time input keeps
        // the constant away from the padded boundary.
        let (t, v, c) = (20, 2, 1);
        let mut l = layer(1, c, c, 9, 1);
        for u in 0..9 {
            l.temporal_kernel[u] = 1.0 / 9.0;
        }
        let mut input = FeatureMap::zeros(t, v, c);
        for x in &mut input.data {
            *x = 3.5;
        }
        let out = temporal_conv(&input, &l, 9);
        for ti in 4..t - 4 {
            for vi in 0..v {
                assert!((out.at(ti, vi, 0) - 3.5).abs() < 1e-12);
            }
        }
        // Boundary rows see zero padding, so they shrink.
        assert!(out.at(0, 0, 0) < 3.5);
    }

    #[test]
    fn temporal_matches_sliding_window_oracle() {
        let (t, v, c, kt) = (7, 3, 2, 9);
        for stride in [1usize, 2] {
            let mut l = layer(1, c, c, kt, stride);
            let mut x = 0.123;
            for cell in &mut l.temporal_kernel {
                x = (x * 1.7 + 0.31) % 1.0;
                *cell = x - 0.5;
            }
            let mut input = FeatureMap::zeros(t, v, c);
            for cell in &mut input.data {
                x = (x * 2.3 + 0.17) % 1.0;
                *cell = x - 0.5;
            }
            let out = temporal_conv(&input, &l, kt);
            let t_out = (t + 2 * 4 - kt) / stride + 1;
            assert_eq!(out.frames, t_out);
            assert_eq!(out.frames, (t + stride - 1) / stride);
            for to in 0..t_out {
                for j in 0..v {
                    for co in 0..c {
                        let mut expect = 0.0;
                        for u in 0..kt {
                            let tap = (to * stride + u) as isize - 4;
                            if tap < 0 || tap >= t as isize {
                                continue;
                            }
                            for ci in 0..c {
                                expect += l.temporal_kernel[(co * c + ci) * kt + u]
                                    * input.at(tap as usize, j, ci);
                            }
                        }
                        assert!((out.at(to, j, co) - expect).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let probs = softmax(&[1.0, -2.0, 1000.0, 3.0]);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(probs[2] > 0.999);
    }

    #[test]
    fn cross_entropy_clamps_zero_but_propagates_nan() {
        // A zero probability keeps the loss finite...
        assert!(cross_entropy(&[0.0, 1.0], 0).is_finite());
        // ...but a NaN one (diverged forward pass) must not be masked.
        assert!(cross_entropy(&[f64::NAN, 0.5], 0).is_nan());
    }

    #[test]
    fn forward_outputs_distribution() {
        let meta = ModelMeta {
            strategy: Strategy::Index,
            layout_name: "y4".into(),
            num_partitions: 4,
            num_joints: 4,
            in_channels: 3,
            num_classes: 5,
            temporal_kernel_size: 9,
            mask_enabled: true,
        };
        let model = ModelParams::new(meta, &[(6, 1), (8, 2)], 3).unwrap();
        let mut input = FeatureMap::zeros(6, 4, 3);
        let mut x = 0.05;
        for cell in &mut input.data {
            x = (x * 3.1 + 0.23) % 1.0;
            *cell = x;
        }
        let probs = forward_eval(&model, &input, &y4_stacks()).unwrap();
        assert_eq!(probs.len(), 5);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
        // Purity: repeated runs are bitwise identical.
        let again = forward_eval(&model, &input, &y4_stacks()).unwrap();
        assert_eq!(probs, again);
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        // A uniform target distribution equal to the prediction would be the
        // cleanest zero-gradient case, but simpler: scale = 0 kills the
        // upstream loss gradient entirely.
        let meta = ModelMeta {
            strategy: Strategy::Index,
            layout_name: "y4".into(),
            num_partitions: 4,
            num_joints: 4,
            in_channels: 3,
            num_classes: 3,
            temporal_kernel_size: 9,
            mask_enabled: true,
        };
        let model = ModelParams::new(meta, &[(4, 1)], 9).unwrap();
        let input = FeatureMap::zeros(4, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = forward_train(&model, &input, &y4_stacks(), 0.0, &mut rng).unwrap();
        let mut grads = ModelGrads::zeros_like(&model);
        backward_sample(&model, &cache, &y4_stacks(), 0, 0.0, &mut grads);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mask_gradient_zero_off_support() {
        let meta = ModelMeta {
            strategy: Strategy::Index,
            layout_name: "y4".into(),
            num_partitions: 4,
            num_joints: 4,
            in_channels: 3,
            num_classes: 3,
            temporal_kernel_size: 9,
            mask_enabled: true,
        };
        let model = ModelParams::new(meta, &[(4, 1)], 11).unwrap();
        let mut input = FeatureMap::zeros(4, 4, 3);
        let mut x = 0.4;
        for cell in &mut input.data {
            x = (x * 1.9 + 0.27) % 1.0;
            *cell = x;
        }
        let stacks = y4_stacks();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = forward_train(&model, &input, &stacks, 0.0, &mut rng).unwrap();
        let mut grads = ModelGrads::zeros_like(&model);
        backward_sample(&model, &cache, &stacks, 1, 1.0, &mut grads);
        // Support of the summed stack is A + I; off-support mask entries
        // (e.g. (0,2): joints 0 and 2 are not adjacent in Y4) get no signal.
        let dmask = grads.layers[0].mask.as_ref().unwrap();
        assert_eq!(dmask[0 * 4 + 2], 0.0);
        assert_eq!(dmask[2 * 4 + 0], 0.0);
        assert_eq!(dmask[3 * 4 + 0], 0.0);
        // On-support entries do get signal somewhere.
        assert!(dmask.iter().any(|&g| g != 0.0));
    }
}
