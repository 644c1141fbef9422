use std::borrow::Cow;
use std::collections::HashMap;

use indexmap::IndexMap;

use crate::conv::{self, ConvGeom, PoolGeom};
use crate::error::{Result, TensorError};
use crate::params::ParameterSet;
use crate::real::Real;
use crate::tensor::{numel, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<R> {
    Constant,
    Param(String),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, R),
    Relu(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        cols: Option<Vec<R>>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Reshape(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Cosine {
        a: Var,
        b: Var,
        // per row: (|a|, |b|, cos, a_clamped, b_clamped)
        stats: Vec<(R, R, R, bool, bool)>,
    },
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Gather {
        x: Var,
        index: Vec<usize>,
    },
    Dueling(Var, Var),
    ConcatChannels(Var, Var),
}

impl<R> Op<R> {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::Reshape(..) => "reshape",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Cosine { .. } => "cosine_similarity",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumLast(..) => "sum_last",
            Op::Gather { .. } => "gather",
            Op::Dueling(..) => "dueling",
            Op::ConcatChannels(..) => "concat_channels",
        }
    }
}

struct Node<'a, R: Real> {
    value: Cow<'a, Tensor<R>>,
    op: Op<R>,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients<R> {
    map: IndexMap<String, Vec<R>>,
}

impl<R: Real> Gradients<R> {
    pub fn get(&self, name: &str) -> Option<&[R]> {
        self.map.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[R])> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn norm(&self) -> R {
        self.map
            .values()
            .flat_map(|g| g.iter())
            .map(|&v| v * v)
            .sum::<R>()
            .sqrt()
    }
}

/// Reverse-mode tape. Parameters are borrowed from their [`ParameterSet`]
/// for the lifetime of the graph; intermediate values are owned.
pub struct Graph<'a, R: Real> {
    nodes: Vec<Node<'a, R>>,
    param_cache: HashMap<(usize, String, bool), Var>,
}

impl<R: Real> Default for Graph<'_, R> {
    fn default() -> Self {
        Self::new()
    }
}

fn rows_last(shape: &[usize]) -> (usize, usize) {
    match shape.last() {
        Some(&last) if last > 0 => (numel(shape) / last, last),
        _ => (numel(shape), 1),
    }
}

impl<'a, R: Real> Graph<'a, R> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_cache: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[R] {
        self.nodes[v.0].value.data()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Cow<'a, Tensor<R>>, op: Op<R>, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NumericFault { op: op.name() });
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_owned(&mut self, shape: Vec<usize>, data: Vec<R>, op: Op<R>, needs_grad: bool) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        self.push(Cow::Owned(t), op, needs_grad)
    }

    pub fn constant(&mut self, t: Tensor<R>) -> Result<Var> {
        self.push(Cow::Owned(t.detached()), Op::Constant, false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor<R>) -> Result<Var> {
        self.push(Cow::Borrowed(t), Op::Constant, false)
    }

    /// Binds a named entry of `set`. Trainable bindings are gradient sinks;
    /// non-trainable ones behave as constants. Repeated binds return the
    /// same node.
    pub fn param(&mut self, set: &'a ParameterSet<R>, name: &str, trainable: bool) -> Result<Var> {
        let key = (set as *const _ as usize, name.to_string(), trainable);
        if let Some(&v) = self.param_cache.get(&key) {
            return Ok(v);
        }
        let t = set
            .get(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?;
        let op = if trainable {
            Op::Param(name.to_string())
        } else {
            Op::Constant
        };
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op,
            needs_grad: trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_cache.insert(key, v);
        Ok(v)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![R::zero(); m * n];
        R::gemm(m, k, n, R::one(), self.data(a), k, 1, self.data(b), n, 1, R::zero(), &mut out, n, 1);
        let ng = self.ng(a) || self.ng(b);
        self.push_owned(vec![m, n], out, Op::MatMul(a, b), ng)
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        let (_, last) = rows_last(sx);
        if sb.len() != 1 || sx.is_empty() || sb[0] != last {
            return Err(TensorError::shape("add_bias", sx, sb));
        }
        let bias = self.data(b);
        let out: Vec<R> = self
            .data(x)
            .chunks(last)
            .flat_map(|row| row.iter().zip(bias).map(|(&v, &c)| v + c))
            .collect();
        let shape = sx.to_vec();
        let ng = self.ng(x) || self.ng(b);
        self.push_owned(shape, out, Op::AddBias(x, b), ng)
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(R, R) -> R) -> Result<(Vec<usize>, Vec<R>)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::shape(op, sa, sb));
        }
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((sa.to_vec(), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.zip("add", a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        self.push_owned(shape, out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.zip("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        self.push_owned(shape, out, Op::Sub(a, b), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.zip("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        self.push_owned(shape, out, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, x: Var, s: R) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| v * s).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x);
        self.push_owned(shape, out, Op::Scale(x, s), ng)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| v.max(R::zero())).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x);
        self.push_owned(shape, out, Op::Relu(x), ng)
    }

    /// NCHW convolution with square stride and symmetric zero padding.
    /// `w` is `[out_channels, in_channels, kh, kw]`, `b` is `[out_channels]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(TensorError::shape("conv2d", sx, sw));
        }
        if stride == 0 {
            return Err(TensorError::invalid("conv2d", "stride must be positive"));
        }
        let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (oc, kh, kw) = (sw[0], sw[2], sw[3]);
        if h + 2 * padding < kh || wd + 2 * padding < kw {
            return Err(TensorError::shape("conv2d", sx, sw));
        }
        if let Some(b) = b {
            if self.shape(b) != [oc] {
                return Err(TensorError::shape("conv2d", self.shape(b), &[oc]));
            }
        }
        let geom = ConvGeom {
            n,
            c,
            h,
            w: wd,
            oc,
            kh,
            kw,
            stride,
            pad: padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (wd + 2 * padding - kw) / stride + 1,
        };
        let cols = conv::im2col(self.data(x), &geom);
        let out = conv::conv_forward(&cols, self.data(w), b.map(|b| self.data(b)), &geom);
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        let keep_cols = self.ng(w);
        self.push_owned(
            vec![n, oc, geom.oh, geom.ow],
            out,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols: keep_cols.then_some(cols),
            },
            ng,
        )
    }

    /// Max pooling with "SAME" padding: each spatial extent becomes
    /// `ceil(extent / stride)`.
    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 4 || kernel == 0 || stride == 0 || sx[2] == 0 || sx[3] == 0 {
            return Err(TensorError::shape("maxpool2d", sx, &[kernel, kernel]));
        }
        let g = PoolGeom::same(sx[0], sx[1], sx[2], sx[3], kernel, stride);
        let (out, argmax) = conv::maxpool_forward(self.data(x), &g);
        let ng = self.ng(x);
        self.push_owned(vec![g.n, g.c, g.oh, g.ow], out, Op::MaxPool { x, argmax }, ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let sx = self.shape(x);
        if numel(sx) != numel(shape) {
            return Err(TensorError::shape("reshape", sx, shape));
        }
        let out = self.data(x).to_vec();
        let ng = self.ng(x);
        self.push_owned(shape.to_vec(), out, Op::Reshape(x), ng)
    }

    /// Collapses all axes after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.is_empty() {
            return Err(TensorError::shape("flatten", sx, &[]));
        }
        let shape = [sx[0], numel(&sx[1..])];
        self.reshape(x, &shape)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let (_, last) = rows_last(&sx);
        let mut out = Vec::with_capacity(numel(&sx));
        for row in self.data(x).chunks(last) {
            let m = row.iter().copied().fold(R::neg_infinity(), R::max);
            let start = out.len();
            let mut z = R::zero();
            for &v in row {
                let e = (v - m).exp();
                z += e;
                out.push(e);
            }
            out[start..].iter_mut().for_each(|e| *e = *e / z);
        }
        let ng = self.ng(x);
        self.push_owned(sx, out, Op::Softmax(x), ng)
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let (_, last) = rows_last(&sx);
        let mut out = Vec::with_capacity(numel(&sx));
        for row in self.data(x).chunks(last) {
            let m = row.iter().copied().fold(R::neg_infinity(), R::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<R>().ln();
            out.extend(row.iter().map(|&v| v - lse));
        }
        let ng = self.ng(x);
        self.push_owned(sx, out, Op::LogSoftmax(x), ng)
    }

    /// Row-wise cosine similarity of two `[rows, d]` tensors -> `[rows]`.
    /// Norms are floored at `1e-8`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || sa.len() != 2 {
            return Err(TensorError::shape("cosine_similarity", sa, sb));
        }
        let (rows, d) = (sa[0], sa[1]);
        let eps = R::lit(1e-8);
        let mut out = Vec::with_capacity(rows);
        let mut stats = Vec::with_capacity(rows);
        for (ra, rb) in self.data(a).chunks(d.max(1)).zip(self.data(b).chunks(d.max(1))).take(rows) {
            let na_raw = ra.iter().map(|&v| v * v).sum::<R>().sqrt();
            let nb_raw = rb.iter().map(|&v| v * v).sum::<R>().sqrt();
            let na = na_raw.max(eps);
            let nb = nb_raw.max(eps);
            let dot: R = ra.iter().zip(rb).map(|(&x, &y)| x * y).sum();
            let c = dot / (na * nb);
            out.push(c);
            stats.push((na, nb, c, na_raw < eps, nb_raw < eps));
        }
        let ng = self.ng(a) || self.ng(b);
        self.push_owned(vec![rows], out, Op::Cosine { a, b, stats }, ng)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().copied().sum::<R>();
        let ng = self.ng(x);
        self.push_owned(vec![], vec![s], Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let len = self.data(x).len();
        if len == 0 {
            return Err(TensorError::invalid("mean", "empty tensor"));
        }
        let s = self.data(x).iter().copied().sum::<R>() / R::lit(len as f64);
        let ng = self.ng(x);
        self.push_owned(vec![], vec![s], Op::Mean(x), ng)
    }

    /// Sums the last axis away.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.is_empty() {
            return Err(TensorError::shape("sum_last", sx, &[]));
        }
        let shape = sx[..sx.len() - 1].to_vec();
        let last = *sx.last().unwrap();
        let out: Vec<R> = if last == 0 {
            vec![R::zero(); numel(&shape)]
        } else {
            self.data(x).chunks(last).map(|r| r.iter().copied().sum()).collect()
        };
        let ng = self.ng(x);
        self.push_owned(shape, out, Op::SumLast(x), ng)
    }

    /// Selects `x[b, index[b], ..]` from a `[batch, choices, ..]` tensor.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() < 2 || sx[0] != index.len() {
            return Err(TensorError::shape("gather", sx, &[index.len()]));
        }
        let (batch, choices) = (sx[0], sx[1]);
        let inner = numel(&sx[2..]);
        if let Some(&bad) = index.iter().find(|&&i| i >= choices) {
            return Err(TensorError::invalid("gather", format!("index {bad} out of range {choices}")));
        }
        let data = self.data(x);
        let mut out = Vec::with_capacity(batch * inner);
        for (b, &i) in index.iter().enumerate() {
            let off = (b * choices + i) * inner;
            out.extend_from_slice(&data[off..off + inner]);
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&sx[2..]);
        let ng = self.ng(x);
        self.push_owned(
            shape,
            out,
            Op::Gather {
                x,
                index: index.to_vec(),
            },
            ng,
        )
    }

    /// Dueling combination: `v[b, z] + a[b, i, z] - mean_i a[b, i, z]`.
    pub fn dueling(&mut self, v: Var, a: Var) -> Result<Var> {
        let (sv, sa) = (self.shape(v), self.shape(a));
        if sv.len() != 2 || sa.len() != 3 || sv[0] != sa[0] || sv[1] != sa[2] || sa[1] == 0 {
            return Err(TensorError::shape("dueling", sv, sa));
        }
        let (batch, actions, atoms) = (sa[0], sa[1], sa[2]);
        let (vd, ad) = (self.data(v), self.data(a));
        let inv = R::one() / R::lit(actions as f64);
        let mut out = vec![R::zero(); batch * actions * atoms];
        for b in 0..batch {
            for z in 0..atoms {
                let mean = (0..actions).map(|i| ad[(b * actions + i) * atoms + z]).sum::<R>() * inv;
                for i in 0..actions {
                    let k = (b * actions + i) * atoms + z;
                    out[k] = vd[b * atoms + z] + ad[k] - mean;
                }
            }
        }
        let shape = sa.to_vec();
        let ng = self.ng(v) || self.ng(a);
        self.push_owned(shape, out, Op::Dueling(v, a), ng)
    }

    /// Concatenates two NCHW tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(TensorError::shape("concat_channels", sa, sb));
        }
        let (n, ca, cb, hw) = (sa[0], sa[1], sb[1], sa[2] * sa[3]);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(n * (ca + cb) * hw);
        for i in 0..n {
            out.extend_from_slice(&da[i * ca * hw..(i + 1) * ca * hw]);
            out.extend_from_slice(&db[i * cb * hw..(i + 1) * cb * hw]);
        }
        let shape = vec![n, ca + cb, sa[2], sa[3]];
        let ng = self.ng(a) || self.ng(b);
        self.push_owned(shape, out, Op::ConcatChannels(a, b), ng)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<R>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        if !self.ng(loss) {
            return Err(TensorError::DetachedTape);
        }
        let mut grads: Vec<Option<Vec<R>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![R::one()]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(node, &g, &mut grads, &mut out)?;
        }
        Ok(out)
    }

    fn acc_with(&self, grads: &mut [Option<Vec<R>>], v: Var, f: impl FnOnce(&mut [R])) {
        if !self.ng(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![R::zero(); self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn acc(&self, grads: &mut [Option<Vec<R>>], v: Var, g: &[R]) {
        self.acc_with(grads, v, |slot| slot.iter_mut().zip(g).for_each(|(s, &x)| *s += x));
    }

    fn backward_node(
        &self,
        node: &Node<'a, R>,
        g: &[R],
        grads: &mut [Option<Vec<R>>],
        out: &mut Gradients<R>,
    ) -> Result<()> {
        match &node.op {
            Op::Constant => {}
            Op::Param(name) => {
                let slot = out.map.entry(name.clone()).or_insert_with(|| vec![R::zero(); g.len()]);
                slot.iter_mut().zip(g).for_each(|(s, &x)| *s += x);
            }
            &Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (ad, bd) = (self.data(a), self.data(b));
                // da = g * b^T ; db = a^T * g
                self.acc_with(grads, a, |da| {
                    R::gemm(m, n, k, R::one(), g, n, 1, bd, 1, n, R::one(), da, k, 1)
                });
                self.acc_with(grads, b, |db| {
                    R::gemm(k, m, n, R::one(), ad, 1, k, g, n, 1, R::one(), db, n, 1)
                });
            }
            &Op::AddBias(x, b) => {
                self.acc(grads, x, g);
                let last = self.shape(b)[0];
                self.acc_with(grads, b, |db| {
                    for row in g.chunks(last) {
                        db.iter_mut().zip(row).for_each(|(s, &v)| *s += v);
                    }
                });
            }
            &Op::Add(a, b) => {
                self.acc(grads, a, g);
                self.acc(grads, b, g);
            }
            &Op::Sub(a, b) => {
                self.acc(grads, a, g);
                self.acc_with(grads, b, |db| db.iter_mut().zip(g).for_each(|(s, &v)| *s -= v));
            }
            &Op::Mul(a, b) => {
                let (ad, bd) = (self.data(a), self.data(b));
                self.acc_with(grads, a, |da| {
                    da.iter_mut().zip(g).zip(bd).for_each(|((s, &gv), &y)| *s += gv * y)
                });
                self.acc_with(grads, b, |db| {
                    db.iter_mut().zip(g).zip(ad).for_each(|((s, &gv), &x)| *s += gv * x)
                });
            }
            &Op::Scale(x, s) => {
                self.acc_with(grads, x, |dx| dx.iter_mut().zip(g).for_each(|(d, &v)| *d += v * s));
            }
            &Op::Relu(x) => {
                let y = node.value.data();
                self.acc_with(grads, x, |dx| {
                    for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(y) {
                        if yv > R::zero() {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                let drows = conv::grad_rows(g, geom);
                if let Some(b) = *b {
                    let p = geom.positions();
                    self.acc_with(grads, b, |db| {
                        for n in 0..geom.n {
                            for (oc, d) in db.iter_mut().enumerate() {
                                let s = &g[(n * geom.oc + oc) * p..(n * geom.oc + oc + 1) * p];
                                *d += s.iter().copied().sum::<R>();
                            }
                        }
                    });
                }
                if self.ng(*w) {
                    let cols = cols.as_ref().expect("conv columns kept when weight needs grad");
                    self.acc_with(grads, *w, |dw| conv::conv_weight_grad(&drows, cols, geom, dw));
                }
                if self.ng(*x) {
                    let dcols = conv::conv_input_grad_cols(&drows, self.data(*w), geom);
                    self.acc_with(grads, *x, |dx| conv::col2im(&dcols, geom, dx));
                }
            }
            Op::MaxPool { x, argmax } => {
                self.acc_with(grads, *x, |dx| {
                    for (&i, &gv) in argmax.iter().zip(g) {
                        dx[i] += gv;
                    }
                });
            }
            &Op::Reshape(x) => self.acc(grads, x, g),
            &Op::Softmax(x) => {
                let y = node.value.data();
                let (_, last) = rows_last(node.value.shape());
                self.acc_with(grads, x, |dx| {
                    for ((drow, grow), yrow) in dx.chunks_mut(last).zip(g.chunks(last)).zip(y.chunks(last)) {
                        let dot: R = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                        for ((d, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += yv * (gv - dot);
                        }
                    }
                });
            }
            &Op::LogSoftmax(x) => {
                let y = node.value.data();
                let (_, last) = rows_last(node.value.shape());
                self.acc_with(grads, x, |dx| {
                    for ((drow, grow), yrow) in dx.chunks_mut(last).zip(g.chunks(last)).zip(y.chunks(last)) {
                        let gs: R = grow.iter().copied().sum();
                        for ((d, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += gv - yv.exp() * gs;
                        }
                    }
                });
            }
            Op::Cosine { a, b, stats } => {
                let d = self.shape(*a)[1];
                let (ad, bd) = (self.data(*a), self.data(*b));
                let grad_side = |dx: &mut [R], own: &[R], other: &[R], own_first: bool| {
                    for (r, &(na, nb, c, ca, cb)) in stats.iter().enumerate() {
                        let (n_own, n_other, clamped) = if own_first { (na, nb, ca) } else { (nb, na, cb) };
                        let gv = g[r];
                        let xo = &own[r * d..(r + 1) * d];
                        let xt = &other[r * d..(r + 1) * d];
                        for ((dv, &o), &t) in dx[r * d..(r + 1) * d].iter_mut().zip(xo).zip(xt) {
                            let mut v = t / (n_own * n_other);
                            if !clamped {
                                v -= c * o / (n_own * n_own);
                            }
                            *dv += gv * v;
                        }
                    }
                };
                self.acc_with(grads, *a, |da| grad_side(da, ad, bd, true));
                self.acc_with(grads, *b, |db| grad_side(db, bd, ad, false));
            }
            &Op::Sum(x) => {
                let g0 = g[0];
                self.acc_with(grads, x, |dx| dx.iter_mut().for_each(|d| *d += g0));
            }
            &Op::Mean(x) => {
                let n = self.value(x).len();
                let g0 = g[0] / R::lit(n as f64);
                self.acc_with(grads, x, |dx| dx.iter_mut().for_each(|d| *d += g0));
            }
            &Op::SumLast(x) => {
                let (_, last) = rows_last(self.shape(x));
                self.acc_with(grads, x, |dx| {
                    for (row, &gv) in dx.chunks_mut(last).zip(g) {
                        row.iter_mut().for_each(|d| *d += gv);
                    }
                });
            }
            Op::Gather { x, index } => {
                let sx = self.shape(*x);
                let choices = sx[1];
                let inner = numel(&sx[2..]);
                self.acc_with(grads, *x, |dx| {
                    for (b, &i) in index.iter().enumerate() {
                        let off = (b * choices + i) * inner;
                        dx[off..off + inner]
                            .iter_mut()
                            .zip(&g[b * inner..(b + 1) * inner])
                            .for_each(|(d, &v)| *d += v);
                    }
                });
            }
            &Op::Dueling(v, a) => {
                let sa = self.shape(a);
                let (batch, actions, atoms) = (sa[0], sa[1], sa[2]);
                let inv = R::one() / R::lit(actions as f64);
                // column sums over actions
                let mut colsum = vec![R::zero(); batch * atoms];
                for b in 0..batch {
                    for i in 0..actions {
                        for z in 0..atoms {
                            colsum[b * atoms + z] += g[(b * actions + i) * atoms + z];
                        }
                    }
                }
                self.acc(grads, v, &colsum);
                self.acc_with(grads, a, |da| {
                    for b in 0..batch {
                        for i in 0..actions {
                            for z in 0..atoms {
                                let k = (b * actions + i) * atoms + z;
                                da[k] += g[k] - colsum[b * atoms + z] * inv;
                            }
                        }
                    }
                });
            }
            &Op::ConcatChannels(a, b) => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (n, ca, cb, hw) = (sa[0], sa[1], sb[1], sa[2] * sa[3]);
                let stride = (ca + cb) * hw;
                self.acc_with(grads, a, |da| {
                    for i in 0..n {
                        let src = &g[i * stride..i * stride + ca * hw];
                        da[i * ca * hw..(i + 1) * ca * hw]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, &v)| *d += v);
                    }
                });
                self.acc_with(grads, b, |db| {
                    for i in 0..n {
                        let src = &g[i * stride + ca * hw..(i + 1) * stride];
                        db[i * cb * hw..(i + 1) * cb * hw]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, &v)| *d += v);
                    }
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(entries: &[(&str, &[usize], &[f64])]) -> ParameterSet<f64> {
        let mut p = ParameterSet::new(0);
        for (name, shape, vals) in entries {
            p.insert(name, Tensor::from_f64(shape, vals).unwrap()).unwrap();
        }
        p
    }

    #[test]
    fn relu_definition() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64(&[3], &[-1.0, 0.0, 2.0]).unwrap()).unwrap();
        let y = g.relu(x).unwrap();
        assert_eq!(g.data(y), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn conv_of_ones_sums_window() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0)).unwrap();
        let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0)).unwrap();
        let y = g.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 1, 1]);
        assert_eq!(g.data(y), &[9.0]);
    }

    #[test]
    fn cosine_orthogonal_and_parallel() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::from_f64(&[2, 2], &[1.0, 0.0, 1.0, 2.0]).unwrap()).unwrap();
        let b = g.constant(Tensor::from_f64(&[2, 2], &[0.0, 1.0, 2.0, 4.0]).unwrap()).unwrap();
        let c = g.cosine_similarity(a, b).unwrap();
        let d = g.data(c);
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn square_gradient() {
        let p = set(&[("p", &[2], &[1.0, 2.0])]);
        let mut g = Graph::new();
        let x = g.param(&p, "p", true).unwrap();
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get("p").unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn dead_relu_gradient_is_zero() {
        let p = set(&[("p", &[1], &[1.0])]);
        let mut g = Graph::new();
        let x = g.param(&p, "p", true).unwrap();
        let y = g.scale(x, -3.0).unwrap();
        let r = g.relu(y).unwrap();
        let loss = g.sum(r).unwrap();
        assert_eq!(g.backward(loss).unwrap().get("p").unwrap(), &[0.0]);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn non_finite_is_a_fault() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::full(&[2], 1e308)).unwrap();
        let err = g.scale(a, 1e10).unwrap_err();
        assert_eq!(err, TensorError::NumericFault { op: "scale" });
    }

    #[test]
    fn backward_rejects_non_scalar_and_detached() {
        let p = set(&[("p", &[2], &[1.0, 2.0])]);
        let mut g = Graph::new();
        let x = g.param(&p, "p", true).unwrap();
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss(_))));
        let c = g.constant(Tensor::full(&[2], 1.0)).unwrap();
        let s = g.sum(c).unwrap();
        assert_eq!(g.backward(s), Err(TensorError::DetachedTape));
    }

    #[test]
    fn frozen_binding_receives_no_gradient() {
        let p = set(&[("p", &[2], &[1.0, 2.0])]);
        let mut g = Graph::new();
        let live = g.param(&p, "p", true).unwrap();
        let frozen = g.param(&p, "p", false).unwrap();
        assert_ne!(live, frozen);
        let m = g.mul(live, frozen).unwrap();
        let loss = g.sum(m).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads.get("p").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn dueling_rows_are_mean_centred() {
        let mut g = Graph::<f64>::new();
        let v = g.constant(Tensor::from_f64(&[1, 2], &[1.0, -1.0]).unwrap()).unwrap();
        let a = g
            .constant(Tensor::from_f64(&[1, 3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let q = g.dueling(v, a).unwrap();
        assert_eq!(g.data(q), &[-1.0, -3.0, 1.0, -1.0, 3.0, 1.0]);
    }

    #[test]
    fn gather_picks_action_rows() {
        let mut g = Graph::<f64>::new();
        let x = g
            .constant(Tensor::from_f64(&[2, 2, 2], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap())
            .unwrap();
        let y = g.gather(x, &[1, 0]).unwrap();
        assert_eq!(g.data(y), &[2.0, 3.0, 4.0, 5.0]);
        assert!(g.gather(x, &[2, 0]).is_err());
    }
}
