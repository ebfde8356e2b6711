//! Text fusion and box attention.
//!
//! Both mechanisms turn the draft's text layers into spatial maps and inject
//! them into the detector through zero-initialized projections, so a freshly
//! constructed mechanism is exactly inert: enabling it changes nothing until
//! training moves the projection weights.
//!
//! Text fusion builds a K-channel map T that carries each text's embedding
//! over the pixel block its bbox covers, averages over texts, runs it through
//! a convolution with the stem's geometry plus a 1x1 channel projection, and
//! adds the result to the stem output feature map. Box attention builds a
//! 3-channel map per pyramid level whose first channel is the mean box
//! indicator, projects it to the pyramid width with a 1x1 convolution, and
//! adds it to that level's features before proposal generation.

use ndarray::{Array3, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::nn::{Binder, Graph, NodeId, ParamId, ParamStore};
use crate::textenc::TextEncoder;
use crate::types::TextLayerRecord;

/// Half-open pixel block `[lo, hi)` covered by a normalized interval.
///
/// Floor/ceil rasterization clamped to bounds; an interval collapsing to an
/// exact cell boundary still marks one row/column.
pub fn raster_span(min: f64, max: f64, extent: usize) -> (usize, usize) {
    let e = extent as f64;
    let mut lo = (min * e).floor() as i64;
    let mut hi = (max * e).ceil() as i64;
    if hi <= lo {
        hi = lo + 1;
    }
    lo = lo.clamp(0, extent as i64 - 1);
    hi = hi.clamp(lo + 1, extent as i64);
    (lo as usize, hi as usize)
}

/// Build the averaged text-embedding map `(K, h, w)`.
///
/// Each text contributes its embedding over the raster block of its bbox and
/// zeros elsewhere; the result is the elementwise mean over all texts. With
/// no texts the map is all zeros.
pub fn build_text_map(
    texts: &[TextLayerRecord],
    encoder: &dyn TextEncoder,
    h: usize,
    w: usize,
) -> Array3<f64> {
    let k = encoder.dim();
    let mut map = Array3::<f64>::zeros((k, h, w));
    if texts.is_empty() {
        return map;
    }
    for text in texts {
        let e = encoder.encode(&text.content);
        let (p0, p1) = raster_span(text.bbox.y_min, text.bbox.y_max, h);
        let (q0, q1) = raster_span(text.bbox.x_min, text.bbox.x_max, w);
        for (c, &v) in e.0.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for p in p0..p1 {
                for q in q0..q1 {
                    map[(c, p, q)] += v;
                }
            }
        }
    }
    map.mapv_inplace(|v| v / texts.len() as f64);
    map
}

/// Build the 3-channel box attention map `(3, h_i, w_i)` for one pyramid
/// level: channel 0 is the per-pixel mean box indicator, channel 1 is all
/// zeros, channel 2 all ones.
pub fn build_box_attention(texts: &[TextLayerRecord], h_i: usize, w_i: usize) -> Array3<f64> {
    let mut map = Array3::<f64>::zeros((3, h_i, w_i));
    map.index_axis_mut(ndarray::Axis(0), 2).fill(1.0);
    if texts.is_empty() {
        return map;
    }
    for text in texts {
        let (p0, p1) = raster_span(text.bbox.y_min, text.bbox.y_max, h_i);
        let (q0, q1) = raster_span(text.bbox.x_min, text.bbox.x_max, w_i);
        for p in p0..p1 {
            for q in q0..q1 {
                map[(0, p, q)] += 1.0;
            }
        }
    }
    let n = texts.len() as f64;
    map.index_axis_mut(ndarray::Axis(0), 0).mapv_inplace(|v| v / n);
    map
}

/// Parameters of the text-fusion branch.
#[derive(Clone, Copy)]
pub struct TextFusionParams {
    pub stem_w: ParamId,
    pub stem_b: ParamId,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
}

impl TextFusionParams {
    /// Register parameters: a K->K convolution with the stem's geometry
    /// (7x7 stride 2 pad 3 plus 3x3/2 max pooling) initialized like a normal
    /// conv layer, and a zero-initialized K->D 1x1 projection.
    pub fn register(store: &mut ParamStore, k: usize, d: usize, seed: u64) -> Self {
        let mut rng = crate::nn::param_rng(seed, "text_fusion.stem.w");
        let stem_w = store.register(
            "text_fusion.stem.w",
            crate::nn::he_normal_init(&[k, k, 7, 7], k * 49, &mut rng),
        );
        let stem_b = store.register("text_fusion.stem.b", ArrayD::zeros(IxDyn(&[k])));
        let proj_w = store.register("text_fusion.proj.w", ArrayD::zeros(IxDyn(&[d, k, 1, 1])));
        let proj_b = store.register("text_fusion.proj.b", ArrayD::zeros(IxDyn(&[d])));
        TextFusionParams { stem_w, stem_b, proj_w, proj_b }
    }
}

/// Fuse the text map into the stem output: `F = C + proj1x1(stemconv(T))`.
///
/// `t_map` must match the stem's input resolution; after the stem-geometry
/// convolution and projection the branch must match `c`'s shape exactly.
pub fn text_fusion_forward(
    g: &mut Graph,
    binder: &mut Binder,
    c: NodeId,
    t_map: Array3<f64>,
    params: &TextFusionParams,
) -> Result<NodeId> {
    let t = g.input(t_map.into_dyn());
    let sw = binder.bind(g, params.stem_w);
    let sb = binder.bind(g, params.stem_b);
    let conv = g.conv2d(t, sw, sb, 2, 3);
    let pooled = g.maxpool2d(conv, 3, 2, 1);
    let pw = binder.bind(g, params.proj_w);
    let pb = binder.bind(g, params.proj_b);
    let t_prime = g.conv2d(pooled, pw, pb, 1, 0);
    if g.value(t_prime).shape() != g.value(c).shape() {
        return Err(Error::ShapeMismatch(format!(
            "text map projects to {:?} but stem features are {:?}",
            g.value(t_prime).shape(),
            g.value(c).shape()
        )));
    }
    Ok(g.add(c, t_prime))
}

/// Parameters of the box-attention branch: one zero-initialized 3->D 1x1
/// convolution shared across pyramid levels.
#[derive(Clone, Copy)]
pub struct BoxAttentionParams {
    pub proj_w: ParamId,
    pub proj_b: ParamId,
}

impl BoxAttentionParams {
    pub fn register(store: &mut ParamStore, d: usize) -> Self {
        let proj_w = store.register("box_attention.proj.w", ArrayD::zeros(IxDyn(&[d, 3, 1, 1])));
        let proj_b = store.register("box_attention.proj.b", ArrayD::zeros(IxDyn(&[d])));
        BoxAttentionParams { proj_w, proj_b }
    }
}

/// Fuse a level's box attention map into its features: `M_i = F_i + conv1x1(B_i)`.
pub fn box_attention_forward(
    g: &mut Graph,
    binder: &mut Binder,
    f_i: NodeId,
    b_i: Array3<f64>,
    params: &BoxAttentionParams,
) -> Result<NodeId> {
    let shape = g.value(f_i).shape().to_vec();
    if b_i.shape()[1..] != shape[1..] {
        return Err(Error::ShapeMismatch(format!(
            "box attention map {:?} does not match features {:?}",
            b_i.shape(),
            shape
        )));
    }
    let b = g.input(b_i.into_dyn());
    let pw = binder.bind(g, params.proj_w);
    let pb = binder.bind(g, params.proj_b);
    let proj = g.conv2d(b, pw, pb, 1, 0);
    Ok(g.add(f_i, proj))
}
