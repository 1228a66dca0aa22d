//! Transformer encoder with a linear projector on the target-user position.
//!
//! All parameters live in one flat `f64` buffer; [`Layout`] records where
//! each tensor sits. The forward pass keeps every activation the backward
//! pass needs, and the backward pass accumulates into a gradient buffer with
//! the same layout.
//!
//! Layers are post-norm: `h = LN(x + Attn(x))`, `y = LN(h + FFN(h))`, with a
//! tanh-approximated GELU in the feed-forward block. Training passes may
//! apply inverted dropout to the embeddings, attention probabilities, both
//! residual branches and the projector input.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;

const LN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Mat {
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Mat {
    fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn view<'a>(&self, data: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &data[self.off..self.off + self.len()]).unwrap()
    }

    pub fn view_mut<'a>(&self, data: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut data[self.off..self.off + self.len()]).unwrap()
    }

    fn row<'a>(&self, data: &'a [f64], r: usize) -> &'a [f64] {
        let start = self.off + r * self.cols;
        &data[start..start + self.cols]
    }

    fn row_mut<'a>(&self, data: &'a mut [f64], r: usize) -> &'a mut [f64] {
        let start = self.off + r * self.cols;
        &mut data[start..start + self.cols]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Vect {
    pub off: usize,
    pub len: usize,
}

impl Vect {
    pub fn view<'a>(&self, data: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&data[self.off..self.off + self.len])
    }

    pub fn view_mut<'a>(&self, data: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut data[self.off..self.off + self.len])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerSlots {
    pub wq: Mat,
    pub bq: Vect,
    pub wk: Mat,
    pub bk: Vect,
    pub wv: Mat,
    pub bv: Vect,
    pub wo: Mat,
    pub bo: Vect,
    pub ln1_g: Vect,
    pub ln1_b: Vect,
    pub w1: Mat,
    pub b1: Vect,
    pub w2: Mat,
    pub b2: Vect,
    pub ln2_g: Vect,
    pub ln2_b: Vect,
}

/// Named tensor in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok: Mat,
    pub pos: Mat,
    pub emb_g: Vect,
    pub emb_b: Vect,
    pub layers: Vec<LayerSlots>,
    pub head: Option<(Mat, Vect)>,
    pub proj_w: Vect,
    pub proj_b: Vect,
    pub tensors: Vec<TensorInfo>,
    pub len: usize,
    /// LayerNorm gains, initialized to one.
    unit_init: Vec<Vect>,
}

struct Builder {
    next: usize,
    tensors: Vec<TensorInfo>,
}

impl Builder {
    fn mat(&mut self, name: String, rows: usize, cols: usize) -> Mat {
        let m = Mat { off: self.next, rows, cols };
        self.tensors.push(TensorInfo { name, offset: self.next, shape: vec![rows, cols] });
        self.next += rows * cols;
        m
    }

    fn vect(&mut self, name: String, len: usize) -> Vect {
        let v = Vect { off: self.next, len };
        self.tensors.push(TensorInfo { name, offset: self.next, shape: vec![len] });
        self.next += len;
        v
    }
}

impl Layout {
    pub fn new(config: &ModelConfig, vocab_len: usize) -> Self {
        let d = config.hidden;
        let f = config.intermediate;
        let mut b = Builder { next: 0, tensors: Vec::new() };
        let tok = b.mat("embeddings.token".into(), vocab_len, d);
        let pos = b.mat("embeddings.position".into(), config.max_len, d);
        let emb_g = b.vect("embeddings.norm.gain".into(), d);
        let emb_b = b.vect("embeddings.norm.bias".into(), d);
        let mut unit_init = vec![emb_g];
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |n: &str| format!("layer{l}.{n}");
            let slots = LayerSlots {
                wq: b.mat(p("attn.query.weight"), d, d),
                bq: b.vect(p("attn.query.bias"), d),
                wk: b.mat(p("attn.key.weight"), d, d),
                bk: b.vect(p("attn.key.bias"), d),
                wv: b.mat(p("attn.value.weight"), d, d),
                bv: b.vect(p("attn.value.bias"), d),
                wo: b.mat(p("attn.output.weight"), d, d),
                bo: b.vect(p("attn.output.bias"), d),
                ln1_g: b.vect(p("attn.norm.gain"), d),
                ln1_b: b.vect(p("attn.norm.bias"), d),
                w1: b.mat(p("ffn.in.weight"), d, f),
                b1: b.vect(p("ffn.in.bias"), f),
                w2: b.mat(p("ffn.out.weight"), f, d),
                b2: b.vect(p("ffn.out.bias"), d),
                ln2_g: b.vect(p("ffn.norm.gain"), d),
                ln2_b: b.vect(p("ffn.norm.bias"), d),
            };
            unit_init.push(slots.ln1_g);
            unit_init.push(slots.ln2_g);
            layers.push(slots);
        }
        let (head, proj_in) = if config.head_width > 0 {
            let w = b.mat("head.dense.weight".into(), d, config.head_width);
            let bias = b.vect("head.dense.bias".into(), config.head_width);
            (Some((w, bias)), config.head_width)
        } else {
            (None, d)
        };
        let proj_w = b.vect("projector.weight".into(), proj_in);
        let proj_b = b.vect("projector.bias".into(), 1);
        Layout {
            tok,
            pos,
            emb_g,
            emb_b,
            layers,
            head,
            proj_w,
            proj_b,
            len: b.next,
            tensors: b.tensors,
            unit_init,
        }
    }

    /// Weights ~ N(0, std), biases zero, norm gains one.
    pub fn init<R: Rng>(&self, rng: &mut R, std: f64) -> Vec<f64> {
        let normal = Normal::new(0.0, std).unwrap();
        let mut data = vec![0.0; self.len];
        for t in &self.tensors {
            if t.shape.len() == 2 || t.name == "projector.weight" {
                for x in &mut data[t.offset..t.offset + t.len()] {
                    *x = normal.sample(rng);
                }
            }
        }
        for v in &self.unit_init {
            v.view_mut(&mut data).fill(1.0);
        }
        data
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let t = (C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `weight * BCE(sigmoid(logit), label)`, computed stably from the logit.
pub(crate) fn weighted_bce_with_logit(logit: f64, label: f64, weight: f64) -> f64 {
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    weight * (softplus - label * logit)
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: ArrayView1<f64>, bias: ArrayView1<f64>) -> (Array2<f64>, NormCache) {
    let n = x.nrows();
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(n);
    for (mut row, inv) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.mean().unwrap();
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let y = &xhat * &gain + bias;
    (y, NormCache { xhat, inv_std })
}

/// Backward through LayerNorm; accumulates gain/bias grads, returns dx.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: ArrayView1<f64>,
    mut dgain: ArrayViewMut1<f64>,
    mut dbias: ArrayViewMut1<f64>,
) -> Array2<f64> {
    dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    dbias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let dxhat = dy * &gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    Zip::from(dx.rows_mut())
        .and(dxhat.rows())
        .and(cache.xhat.rows())
        .and(&cache.inv_std)
        .for_each(|mut out, g, xh, &inv| {
            let sum_g = g.sum();
            let sum_gx = g.dot(&xh);
            Zip::from(&mut out).and(&g).and(&xh).for_each(|o, &gi, &xi| {
                *o = inv / d * (d * gi - sum_g - xi * sum_gx);
            });
        });
    dx
}

/// `x W + b`
fn affine(x: &Array2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Accumulates `dW += x^T dy`, `db += colsum(dy)` and returns `dy W^T`.
fn affine_backward(
    x: &Array2<f64>,
    dy: &Array2<f64>,
    w: ArrayView2<f64>,
    mut dw: ArrayViewMut2<f64>,
    mut db: ArrayViewMut1<f64>,
) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), dy, 1.0, &mut dw);
    db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Dropout source for a training pass.
pub(crate) struct Dropout<'a> {
    pub rng: &'a mut dyn RngCore,
    pub rate: f64,
}

impl Dropout<'_> {
    /// Inverted-dropout mask: entries are 0 or 1 / (1 - rate).
    fn mask(&mut self, shape: (usize, usize)) -> Array2<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        Array2::from_shape_simple_fn(shape, || if self.rng.random::<f64>() < self.rate { 0.0 } else { keep })
    }
}

fn maybe_mask(dropout: &mut Option<Dropout>, shape: (usize, usize)) -> Option<Array2<f64>> {
    match dropout {
        Some(d) if d.rate > 0.0 => Some(d.mask(shape)),
        _ => None,
    }
}

fn apply_mask(x: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    prob_masks: Vec<Option<Array2<f64>>>,
    ctx: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    norm1: NormCache,
    h1: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
    norm2: NormCache,
}

/// Activations of one forward pass.
pub(crate) struct Forward {
    ids: Vec<u32>,
    target: usize,
    emb_norm: NormCache,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    /// Encoding of the target-user token.
    target_encoding: Array1<f64>,
    head_act: Option<Array1<f64>>,
    /// Projector input after dropout, and the mask that produced it.
    proj_in: Array1<f64>,
    proj_mask: Option<Array1<f64>>,
    pub logit: f64,
}

impl Forward {
    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }
}

pub(crate) fn forward(
    layout: &Layout,
    config: &ModelConfig,
    params: &[f64],
    ids: &[u32],
    target: usize,
    mut dropout: Option<Dropout>,
) -> Forward {
    let n = ids.len();
    debug_assert!(n <= config.max_len && target < n);
    let d = config.hidden;
    let mut x0 = Array2::zeros((n, d));
    for (i, &id) in ids.iter().enumerate() {
        let tok = layout.tok.row(params, id as usize);
        let pos = layout.pos.row(params, i);
        for ((o, &t), &p) in x0.row_mut(i).iter_mut().zip(tok).zip(pos) {
            *o = t + p;
        }
    }
    let (mut x, emb_norm) = layer_norm(&x0, layout.emb_g.view(params), layout.emb_b.view(params));
    let emb_mask = maybe_mask(&mut dropout, (n, d));
    apply_mask(&mut x, &emb_mask);

    let heads = config.heads;
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut layers = Vec::with_capacity(layout.layers.len());
    for l in &layout.layers {
        let q = affine(&x, l.wq.view(params), l.bq.view(params));
        let k = affine(&x, l.wk.view(params), l.bk.view(params));
        let v = affine(&x, l.wv.view(params), l.bv.view(params));
        let mut ctx = Array2::zeros((n, d));
        let mut probs = Vec::with_capacity(heads);
        let mut prob_masks = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores *= scale;
            softmax_rows(&mut scores);
            let mask = maybe_mask(&mut dropout, (n, n));
            match &mask {
                Some(m) => ctx.slice_mut(cols).assign(&(&scores * m).dot(&v.slice(cols))),
                None => ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols))),
            }
            probs.push(scores);
            prob_masks.push(mask);
        }
        let mut r1 = affine(&ctx, l.wo.view(params), l.bo.view(params));
        let attn_mask = maybe_mask(&mut dropout, (n, d));
        apply_mask(&mut r1, &attn_mask);
        r1 += &x;
        let (h1, norm1) = layer_norm(&r1, l.ln1_g.view(params), l.ln1_b.view(params));
        let pre_act = affine(&h1, l.w1.view(params), l.b1.view(params));
        let act = pre_act.mapv(gelu);
        let mut r2 = affine(&act, l.w2.view(params), l.b2.view(params));
        let ffn_mask = maybe_mask(&mut dropout, (n, d));
        apply_mask(&mut r2, &ffn_mask);
        r2 += &h1;
        let (out, norm2) = layer_norm(&r2, l.ln2_g.view(params), l.ln2_b.view(params));
        layers.push(LayerCache {
            x,
            q,
            k,
            v,
            probs,
            prob_masks,
            ctx,
            attn_mask,
            norm1,
            h1,
            pre_act,
            act,
            ffn_mask,
            norm2,
        });
        x = out;
    }

    let target_encoding = x.row(target).to_owned();
    let (head_act, mut proj_in) = match &layout.head {
        Some((w, b)) => {
            let a = (target_encoding.dot(&w.view(params)) + b.view(params)).mapv(f64::tanh);
            (Some(a.clone()), a)
        }
        None => (None, target_encoding.clone()),
    };
    let proj_mask = maybe_mask(&mut dropout, (1, proj_in.len())).map(|m| m.row(0).to_owned());
    if let Some(m) = &proj_mask {
        proj_in *= m;
    }
    let logit = proj_in.dot(&layout.proj_w.view(params)) + params[layout.proj_b.off];
    Forward {
        ids: ids.to_vec(),
        target,
        emb_norm,
        emb_mask,
        layers,
        target_encoding,
        head_act,
        proj_in,
        proj_mask,
        logit,
    }
}

/// Accumulates `dlogit * d(logit)/d(params)` into `grads`.
pub(crate) fn backward(
    layout: &Layout,
    config: &ModelConfig,
    params: &[f64],
    fwd: &Forward,
    dlogit: f64,
    grads: &mut [f64],
) {
    let n = fwd.ids.len();
    let d = config.hidden;

    // Projector and optional head.
    layout.proj_w.view_mut(grads).scaled_add(dlogit, &fwd.proj_in);
    grads[layout.proj_b.off] += dlogit;
    let mut dproj_in = layout.proj_w.view(params).mapv(|w| w * dlogit);
    if let Some(m) = &fwd.proj_mask {
        dproj_in *= m;
    }
    let dz = match (&layout.head, &fwd.head_act) {
        (Some((w, b)), Some(a)) => {
            let dpre = &dproj_in * &a.mapv(|t| 1.0 - t * t);
            let mut dw = w.view_mut(grads);
            for (i, &zi) in fwd.target_encoding.iter().enumerate() {
                dw.row_mut(i).scaled_add(zi, &dpre);
            }
            b.view_mut(grads).scaled_add(1.0, &dpre);
            w.view(params).dot(&dpre)
        }
        _ => dproj_in,
    };

    let mut dout = Array2::zeros((n, d));
    dout.row_mut(fwd.target).assign(&dz);

    let heads = config.heads;
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    for (l, c) in layout.layers.iter().zip(&fwd.layers).rev() {
        // Feed-forward block.
        let (g2, b2) = split2(grads, l.ln2_g, l.ln2_b);
        let dr2 = layer_norm_backward(&dout, &c.norm2, l.ln2_g.view(params), g2, b2);
        let mut dffn = dr2.clone();
        apply_mask(&mut dffn, &c.ffn_mask);
        let (dw2, db2) = split_mat_vec(grads, l.w2, l.b2);
        let mut dpre = affine_backward(&c.act, &dffn, l.w2.view(params), dw2, db2);
        Zip::from(&mut dpre).and(&c.pre_act).for_each(|g, &u| *g *= gelu_grad(u));
        let (dw1, db1) = split_mat_vec(grads, l.w1, l.b1);
        let mut dh1 = affine_backward(&c.h1, &dpre, l.w1.view(params), dw1, db1);
        dh1 += &dr2;

        // Attention block.
        let (g1, b1) = split2(grads, l.ln1_g, l.ln1_b);
        let dr1 = layer_norm_backward(&dh1, &c.norm1, l.ln1_g.view(params), g1, b1);
        let mut dattn = dr1.clone();
        apply_mask(&mut dattn, &c.attn_mask);
        let (dwo, dbo) = split_mat_vec(grads, l.wo, l.bo);
        let dctx = affine_backward(&c.ctx, &dattn, l.wo.view(params), dwo, dbo);

        let mut dq = Array2::zeros((n, d));
        let mut dk = Array2::zeros((n, d));
        let mut dv = Array2::zeros((n, d));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let a = &c.probs[h];
            let dctx_h = dctx.slice(cols);
            let mut da = dctx_h.dot(&c.v.slice(cols).t());
            match &c.prob_masks[h] {
                Some(m) => {
                    dv.slice_mut(cols).assign(&(a * m).t().dot(&dctx_h));
                    da *= m;
                }
                None => dv.slice_mut(cols).assign(&a.t().dot(&dctx_h)),
            }
            let mut ds = Array2::zeros(a.raw_dim());
            Zip::from(ds.rows_mut()).and(a.rows()).and(da.rows()).for_each(|mut out, ar, dar| {
                let dot = ar.dot(&dar);
                Zip::from(&mut out).and(&ar).and(&dar).for_each(|o, &ai, &dai| {
                    *o = ai * (dai - dot) * scale;
                });
            });
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let mut dx = dr1;
        let (dwq, dbq) = split_mat_vec(grads, l.wq, l.bq);
        dx += &affine_backward(&c.x, &dq, l.wq.view(params), dwq, dbq);
        let (dwk, dbk) = split_mat_vec(grads, l.wk, l.bk);
        dx += &affine_backward(&c.x, &dk, l.wk.view(params), dwk, dbk);
        let (dwv, dbv) = split_mat_vec(grads, l.wv, l.bv);
        dx += &affine_backward(&c.x, &dv, l.wv.view(params), dwv, dbv);
        dout = dx;
    }

    apply_mask(&mut dout, &fwd.emb_mask);
    let (eg, eb) = split2(grads, layout.emb_g, layout.emb_b);
    let dx0 = layer_norm_backward(&dout, &fwd.emb_norm, layout.emb_g.view(params), eg, eb);
    for (i, &id) in fwd.ids.iter().enumerate() {
        let row = dx0.row(i);
        for (g, &v) in layout.tok.row_mut(grads, id as usize).iter_mut().zip(row.iter()) {
            *g += v;
        }
        for (g, &v) in layout.pos.row_mut(grads, i).iter_mut().zip(row.iter()) {
            *g += v;
        }
    }
}

// Disjoint mutable views into the gradient buffer. Slots are laid out in
// declaration order, so the first argument always precedes the second.
fn split2(grads: &mut [f64], a: Vect, b: Vect) -> (ArrayViewMut1<'_, f64>, ArrayViewMut1<'_, f64>) {
    debug_assert!(a.off + a.len <= b.off);
    let (lo, hi) = grads.split_at_mut(b.off);
    (
        ArrayViewMut1::from(&mut lo[a.off..a.off + a.len]),
        ArrayViewMut1::from(&mut hi[..b.len]),
    )
}

fn split_mat_vec(grads: &mut [f64], m: Mat, v: Vect) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
    debug_assert!(m.off + m.len() <= v.off);
    let (lo, hi) = grads.split_at_mut(v.off);
    (
        ArrayViewMut2::from_shape((m.rows, m.cols), &mut lo[m.off..m.off + m.len()]).unwrap(),
        ArrayViewMut1::from(&mut hi[..v.len]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_is_contiguous_and_named_uniquely() {
        let cfg = ModelConfig::miniature();
        let layout = Layout::new(&cfg, 50);
        let mut expected = 0;
        let mut names = std::collections::HashSet::new();
        for t in &layout.tensors {
            assert_eq!(t.offset, expected);
            expected += t.len();
            assert!(names.insert(t.name.clone()));
        }
        assert_eq!(expected, layout.len);
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let cfg = ModelConfig::miniature();
        let layout = Layout::new(&cfg, 50);
        let params = layout.init(&mut ChaCha8Rng::seed_from_u64(1), 0.02);
        let ids = [3u32, 7, 1, 9, 20, 49];
        let a = forward(&layout, &cfg, &params, &ids, 1, None).logit;
        let b = forward(&layout, &cfg, &params, &ids, 1, None).logit;
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a.is_finite());
    }

    #[test]
    fn bce_matches_probability_form() {
        for &(z, y, w) in &[(0.3, 1.0, 1.0), (-2.0, 0.0, 1.5), (5.0, 0.0, 0.25)] {
            let p = sigmoid(z);
            let direct = -w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            assert!((weighted_bce_with_logit(z, y, w) - direct).abs() < 1e-12);
        }
        assert!(weighted_bce_with_logit(800.0, 0.0, 1.0).is_finite());
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
