//! Minimal reverse-mode autodiff over `f64` arrays.
//!
//! A [`Graph`] is a Wengert list built during one forward pass; every op
//! records a backward closure that maps the output gradient to parent
//! gradient contributions. Values are dynamic-dimension `ndarray` arrays in
//! double precision, which keeps finite-difference gradient checks tight.
//!
//! The engine is deliberately small: exactly the ops a two-stage detector
//! needs (convolution, pooling, nearest upsampling, linear layers, RoI
//! alignment, softmax cross-entropy, smooth L1). No broadcasting, no graphs
//! surviving across steps.

mod params;

pub use params::{
    accumulate_grads, he_normal_init, param_rng, Binder, ParamId, ParamStore, SgdMomentum,
};

use ndarray::{Array1, Array2, Array4, ArrayD, Axis, Ix2, Ix3, IxDyn};

pub type Arr = ArrayD<f64>;

pub fn scalar(v: f64) -> Arr {
    ArrayD::from_elem(IxDyn(&[]), v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

type BackFn = Box<dyn FnOnce(&Arr) -> Vec<(NodeId, Arr)>>;

struct Node {
    value: Arr,
    back: Option<BackFn>,
}

/// Gradients per node after a backward pass.
pub struct Gradients {
    grads: Vec<Option<Arr>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Arr> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf node (input, constant, or bound parameter).
    pub fn input(&mut self, value: Arr) -> NodeId {
        self.nodes.push(Node { value, back: None });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Arr, back: BackFn) -> NodeId {
        self.nodes.push(Node { value, back: Some(back) });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Arr {
        &self.nodes[id.0].value
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&mut self, root: NodeId) -> Gradients {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be a scalar"
        );
        let mut grads: Vec<Option<Arr>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(ArrayD::ones(self.nodes[root.0].value.raw_dim()));
        for i in (0..=root.0).rev() {
            let Some(back) = self.nodes[i].back.take() else { continue };
            let Some(grad) = grads[i].as_ref() else { continue };
            for (parent, contribution) in back(grad) {
                match &mut grads[parent.0] {
                    Some(existing) => *existing += &contribution,
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Gradients { grads }
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        self.push(value, Box::new(move |g| vec![(a, g.clone()), (b, g.clone())]))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let value = self.value(a).mapv(|v| v * k);
        self.push(value, Box::new(move |g| vec![(a, g.mapv(|v| v * k))]))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|v| v.max(0.0));
        let mask = value.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        self.push(value, Box::new(move |g| vec![(a, g * &mask)]))
    }

    /// Sum a list of scalar nodes.
    pub fn add_n(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let mut acc = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            acc += self.value(p);
        }
        let parts = parts.to_vec();
        self.push(
            acc,
            Box::new(move |g| parts.iter().map(|&p| (p, g.clone())).collect()),
        )
    }

    // ---- shape ----

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let in_shape: Vec<usize> = self.value(a).shape().to_vec();
        let value = self
            .value(a)
            .to_shape(IxDyn(shape))
            .expect("reshape size mismatch")
            .into_owned();
        self.push(
            value,
            Box::new(move |g| {
                vec![(a, g.to_shape(IxDyn(&in_shape)).unwrap().into_owned())]
            }),
        )
    }

    pub fn permute(&mut self, a: NodeId, axes: &[usize]) -> NodeId {
        let value = self
            .value(a)
            .view()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .into_owned();
        let mut inverse = vec![0usize; axes.len()];
        for (i, &ax) in axes.iter().enumerate() {
            inverse[ax] = i;
        }
        self.push(
            value,
            Box::new(move |g| {
                vec![(
                    a,
                    g.view()
                        .permuted_axes(IxDyn(&inverse))
                        .as_standard_layout()
                        .into_owned(),
                )]
            }),
        )
    }

    /// Concatenate 2-d nodes along axis 0.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts
            .iter()
            .map(|&p| self.value(p).view().into_dimensionality::<Ix2>().unwrap())
            .collect();
        let value = ndarray::concatenate(Axis(0), &views)
            .unwrap()
            .into_dyn();
        let spans: Vec<(NodeId, usize)> = parts
            .iter()
            .map(|&p| (p, self.value(p).shape()[0]))
            .collect();
        self.push(
            value,
            Box::new(move |g| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut out = Vec::with_capacity(spans.len());
                let mut row = 0;
                for (p, n) in spans {
                    out.push((p, g2.slice(ndarray::s![row..row + n, ..]).to_owned().into_dyn()));
                    row += n;
                }
                out
            }),
        )
    }

    /// Select rows of a 2-d node.
    pub fn gather_rows(&mut self, a: NodeId, idx: Vec<usize>) -> NodeId {
        let src = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let cols = src.ncols();
        let mut value = Array2::<f64>::zeros((idx.len(), cols));
        for (r, &i) in idx.iter().enumerate() {
            value.row_mut(r).assign(&src.row(i));
        }
        let in_shape = (src.nrows(), cols);
        self.push(
            value.into_dyn(),
            Box::new(move |g| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut dx = Array2::<f64>::zeros(in_shape);
                for (r, &i) in idx.iter().enumerate() {
                    let mut row = dx.row_mut(i);
                    row += &g2.row(r);
                }
                vec![(a, dx.into_dyn())]
            }),
        )
    }

    // ---- dense ----

    /// `x (N,D) . w^T (D,O) + b` -> `(N,O)`
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix2>().unwrap().to_owned();
        let wv = self.value(w).view().into_dimensionality::<Ix2>().unwrap().to_owned();
        let bv = self.value(b).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let mut value = xv.dot(&wv.t());
        value += &bv;
        self.push(
            value.into_dyn(),
            Box::new(move |g| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let dx = g2.dot(&wv);
                let dw = g2.t().dot(&xv);
                let db = g2.sum_axis(Axis(0));
                vec![
                    (x, dx.into_dyn()),
                    (w, dw.into_dyn()),
                    (b, db.into_dyn()),
                ]
            }),
        )
    }

    // ---- convolution ----

    /// 2-d convolution: `x (C,H,W)`, `w (O,C,kh,kw)`, `b (O)`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let wv = self.value(w).view().into_dimensionality::<ndarray::Ix4>().unwrap();
        let bv = self.value(b).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let (c_in, h, width) = xv.dim();
        let (c_out, c_in_w, kh, kw) = wv.dim();
        assert_eq!(c_in, c_in_w, "conv2d channel mismatch");
        assert_eq!(c_out, bv.len());
        let oh = conv_out(h, kh, stride, pad);
        let ow = conv_out(width, kw, stride, pad);

        let cols = im2col(&xv.to_owned(), kh, kw, stride, pad, oh, ow);
        let wm = wv.to_shape((c_out, c_in * kh * kw)).unwrap().to_owned();
        let mut out = wm.dot(&cols);
        for (mut row, &bias) in out.rows_mut().into_iter().zip(bv.iter()) {
            row += bias;
        }
        let value = out.into_shape_with_order((c_out, oh, ow)).unwrap().into_dyn();

        let x_shape = (c_in, h, width);
        self.push(
            value,
            Box::new(move |g| {
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let gm = g3
                    .to_shape((c_out, oh * ow))
                    .unwrap()
                    .to_owned();
                let dw = gm.dot(&cols.t());
                let db = gm.sum_axis(Axis(1));
                let dcols = wm.t().dot(&gm);
                let dx = col2im(&dcols, x_shape, kh, kw, stride, pad, oh, ow);
                vec![
                    (x, dx.into_dyn()),
                    (w, dw.into_shape_with_order((c_out, c_in_w, kh, kw)).unwrap().into_dyn()),
                    (b, db.into_dyn()),
                ]
            }),
        )
    }

    pub fn maxpool2d(&mut self, x: NodeId, k: usize, stride: usize, pad: usize) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (c, h, w) = xv.dim();
        let oh = conv_out(h, k, stride, pad);
        let ow = conv_out(w, k, stride, pad);
        let mut value = ndarray::Array3::<f64>::zeros((c, oh, ow));
        let mut argmax = vec![0usize; c * oh * ow];
        let xs = xv.as_slice().unwrap();
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let flat = (ci * h + iy as usize) * w + ix as usize;
                            if xs[flat] > best {
                                best = xs[flat];
                                best_idx = flat;
                            }
                        }
                    }
                    value[(ci, oy, ox)] = best;
                    argmax[(ci * oh + oy) * ow + ox] = best_idx;
                }
            }
        }
        let x_shape = (c, h, w);
        self.push(
            value.into_dyn(),
            Box::new(move |g| {
                let gs = g.as_slice().unwrap();
                let mut dx = vec![0.0f64; x_shape.0 * x_shape.1 * x_shape.2];
                for (out_flat, &in_flat) in argmax.iter().enumerate() {
                    dx[in_flat] += gs[out_flat];
                }
                vec![(
                    x,
                    Array1::from_vec(dx)
                        .into_shape_with_order(x_shape)
                        .unwrap()
                        .into_dyn(),
                )]
            }),
        )
    }

    /// Nearest-neighbor 2x upsampling, cropped to `(th, tw)`.
    pub fn upsample2_to(&mut self, x: NodeId, th: usize, tw: usize) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (c, h, w) = xv.dim();
        assert!(th <= 2 * h && tw <= 2 * w, "upsample target too large");
        let mut value = ndarray::Array3::<f64>::zeros((c, th, tw));
        for ci in 0..c {
            for y in 0..th {
                for xq in 0..tw {
                    value[(ci, y, xq)] = xv[(ci, y / 2, xq / 2)];
                }
            }
        }
        let x_shape = (c, h, w);
        self.push(
            value.into_dyn(),
            Box::new(move |g| {
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let mut dx = ndarray::Array3::<f64>::zeros(x_shape);
                for ci in 0..x_shape.0 {
                    for y in 0..th {
                        for xq in 0..tw {
                            dx[(ci, y / 2, xq / 2)] += g3[(ci, y, xq)];
                        }
                    }
                }
                vec![(x, dx.into_dyn())]
            }),
        )
    }

    // ---- RoI align ----

    /// RoI Align with bilinear sampling; `rois` are `[x1,y1,x2,y2]` already in
    /// feature-map coordinates. `sampling` points per bin axis are averaged.
    /// Zero-area rois produce all-zero output rows.
    pub fn roi_align(
        &mut self,
        x: NodeId,
        rois: &[[f64; 4]],
        out_h: usize,
        out_w: usize,
        sampling: usize,
    ) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (c, h, w) = xv.dim();
        let table = roi_sampling_table(rois, h, w, out_h, out_w, sampling);
        let n_samples = (sampling * sampling) as f64;
        let mut value = Array4::<f64>::zeros((rois.len(), c, out_h, out_w));
        for (r, bins) in table.iter().enumerate() {
            let Some(bins) = bins else { continue };
            for (bin_idx, points) in bins.iter().enumerate() {
                let (py, px) = (bin_idx / out_w, bin_idx % out_w);
                for ci in 0..c {
                    let mut acc = 0.0;
                    for pt in points {
                        acc += pt.w00 * xv[(ci, pt.y0, pt.x0)]
                            + pt.w01 * xv[(ci, pt.y0, pt.x1)]
                            + pt.w10 * xv[(ci, pt.y1, pt.x0)]
                            + pt.w11 * xv[(ci, pt.y1, pt.x1)];
                    }
                    value[(r, ci, py, px)] = acc / n_samples;
                }
            }
        }
        let x_shape = (c, h, w);
        self.push(
            value.into_dyn(),
            Box::new(move |g| {
                let g4 = g.view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let mut dx = ndarray::Array3::<f64>::zeros(x_shape);
                for (r, bins) in table.iter().enumerate() {
                    let Some(bins) = bins else { continue };
                    for (bin_idx, points) in bins.iter().enumerate() {
                        let (py, px) = (bin_idx / out_w, bin_idx % out_w);
                        for ci in 0..x_shape.0 {
                            let go = g4[(r, ci, py, px)] / n_samples;
                            for pt in points {
                                dx[(ci, pt.y0, pt.x0)] += pt.w00 * go;
                                dx[(ci, pt.y0, pt.x1)] += pt.w01 * go;
                                dx[(ci, pt.y1, pt.x0)] += pt.w10 * go;
                                dx[(ci, pt.y1, pt.x1)] += pt.w11 * go;
                            }
                        }
                    }
                }
                vec![(x, dx.into_dyn())]
            }),
        )
    }

    // ---- losses ----

    /// Mean softmax cross-entropy over rows of `logits (N,C)`.
    pub fn softmax_ce_mean(&mut self, logits: NodeId, targets: Vec<usize>) -> NodeId {
        let z = self.value(logits).view().into_dimensionality::<Ix2>().unwrap();
        let (n, c) = z.dim();
        assert_eq!(n, targets.len());
        assert!(n > 0, "cross-entropy over empty batch");
        let mut probs = Array2::<f64>::zeros((n, c));
        let mut loss = 0.0;
        for (i, row) in z.rows().into_iter().enumerate() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[targets[i]];
            for (j, v) in row.iter().enumerate() {
                probs[(i, j)] = (v - lse).exp();
            }
        }
        loss /= n as f64;
        self.push(
            scalar(loss),
            Box::new(move |g| {
                let gs = g.sum();
                let mut dz = probs;
                for (i, &t) in targets.iter().enumerate() {
                    dz[(i, t)] -= 1.0;
                }
                dz.mapv_inplace(|v| v * gs / n as f64);
                vec![(logits, dz.into_dyn())]
            }),
        )
    }

    /// Smooth-L1 `sum(f(pred - target)) / normalizer`.
    pub fn smooth_l1(&mut self, pred: NodeId, target: Arr, beta: f64, normalizer: f64) -> NodeId {
        assert!(beta > 0.0 && normalizer > 0.0);
        let diff = self.value(pred) - &target;
        let loss = diff
            .iter()
            .map(|&d| {
                if d.abs() < beta {
                    0.5 * d * d / beta
                } else {
                    d.abs() - 0.5 * beta
                }
            })
            .sum::<f64>()
            / normalizer;
        self.push(
            scalar(loss),
            Box::new(move |g| {
                let gs = g.sum() / normalizer;
                let dpred = diff.mapv(|d| (d / beta).clamp(-1.0, 1.0) * gs);
                vec![(pred, dpred)]
            }),
        )
    }

    /// Mean of all entries (scalar output).
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let value = scalar(self.value(a).sum() / n);
        let shape = self.value(a).raw_dim();
        self.push(
            value,
            Box::new(move |g| {
                let gs = g.sum() / n;
                vec![(a, ArrayD::from_elem(shape, gs))]
            }),
        )
    }

    /// Weighted sum of all entries with fixed weights (scalar output).
    pub fn dot_const(&mut self, a: NodeId, weights: Arr) -> NodeId {
        assert_eq!(self.value(a).shape(), weights.shape());
        let value = scalar((self.value(a) * &weights).sum());
        self.push(
            value,
            Box::new(move |g| {
                let gs = g.sum();
                vec![(a, weights.mapv(|w| w * gs))]
            }),
        )
    }
}

pub fn conv_out(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

fn im2col(
    x: &ndarray::Array3<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let xs = x.as_slice().unwrap();
    let mut cols = Array2::<f64>::zeros((c * kh * kw, oh * ow));
    let cs = cols.as_slice_mut().unwrap();
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let base = row * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let in_row = (ci * h + iy as usize) * w;
                    let out_row = base + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cs[out_row + ox] = xs[in_row + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    dcols: &Array2<f64>,
    x_shape: (usize, usize, usize),
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> ndarray::Array3<f64> {
    let (c, h, w) = x_shape;
    let mut dx = ndarray::Array3::<f64>::zeros(x_shape);
    let ds = dx.as_slice_mut().unwrap();
    let cols = dcols.as_slice().unwrap();
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let base = row * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let in_row = (ci * h + iy as usize) * w;
                    let out_row = base + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        ds[in_row + ix as usize] += cols[out_row + ox];
                    }
                }
            }
        }
    }
    dx
}

/// Four bilinear corner indices and weights for one sample point.
#[derive(Clone, Copy)]
struct SamplePoint {
    y0: usize,
    x0: usize,
    y1: usize,
    x1: usize,
    w00: f64,
    w01: f64,
    w10: f64,
    w11: f64,
}

/// Per-roi, per-bin sampling points. `None` marks a degenerate roi.
fn roi_sampling_table(
    rois: &[[f64; 4]],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
    sampling: usize,
) -> Vec<Option<Vec<Vec<SamplePoint>>>> {
    rois.iter()
        .map(|&[x1, y1, x2, y2]| {
            let rw = x2 - x1;
            let rh = y2 - y1;
            if rw <= 0.0 || rh <= 0.0 {
                return None;
            }
            let bin_w = rw / out_w as f64;
            let bin_h = rh / out_h as f64;
            let mut bins = Vec::with_capacity(out_h * out_w);
            for py in 0..out_h {
                for px in 0..out_w {
                    let mut points = Vec::with_capacity(sampling * sampling);
                    for iy in 0..sampling {
                        let sy = y1 + py as f64 * bin_h + (iy as f64 + 0.5) * bin_h / sampling as f64;
                        for ix in 0..sampling {
                            let sx = x1
                                + px as f64 * bin_w
                                + (ix as f64 + 0.5) * bin_w / sampling as f64;
                            points.push(bilinear_point(sy, sx, h, w));
                        }
                    }
                    bins.push(points);
                }
            }
            Some(bins)
        })
        .collect()
}

fn bilinear_point(y: f64, x: f64, h: usize, w: usize) -> SamplePoint {
    // points outside [-1, H] x [-1, W] contribute nothing
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return SamplePoint { y0: 0, x0: 0, y1: 0, x1: 0, w00: 0.0, w01: 0.0, w10: 0.0, w11: 0.0 };
    }
    let y = y.max(0.0);
    let x = x.max(0.0);
    let mut y0 = y as usize;
    let mut x0 = x as usize;
    let (y1, ly) = if y0 >= h - 1 {
        y0 = h - 1;
        (h - 1, 0.0)
    } else {
        (y0 + 1, y - y0 as f64)
    };
    let (x1, lx) = if x0 >= w - 1 {
        x0 = w - 1;
        (w - 1, 0.0)
    } else {
        (x0 + 1, x - x0 as f64)
    };
    let hy = 1.0 - ly;
    let hx = 1.0 - lx;
    SamplePoint {
        y0,
        x0,
        y1,
        x1,
        w00: hy * hx,
        w01: hy * lx,
        w10: ly * hx,
        w11: ly * lx,
    }
}
