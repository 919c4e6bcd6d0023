//! Reverse-mode autodiff tape.
//!
//! Values flow through [`Var`] handles that own (shared) output buffers. The
//! tape only records a node when at least one input requires a gradient, and
//! a node keeps only the tensors its backward rule needs. Intermediates are
//! therefore freed as soon as the forward pass stops referencing them, and
//! `backward` releases each node's saved state right after using it.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::arena::{self, Buffer};
use super::kernels::{self, dot, gemm_nn, gemm_nt, gemm_tn};
use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};
use crate::rng;

pub type NodeId = usize;

/// A value produced on (or bound into) a tape.
#[derive(Clone)]
pub struct Var {
    node: Option<NodeId>,
    shape: Vec<usize>,
    data: Arc<Buffer>,
}

impl Var {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Detached copy-on-write view of the value.
    pub fn value(&self) -> Tensor {
        Tensor::from_buffer(self.shape.clone(), self.data.clone())
    }

    pub fn constant(t: &Tensor) -> Var {
        Var {
            node: None,
            shape: t.shape().to_vec(),
            data: t.storage().clone(),
        }
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var {
            node: None,
            shape: self.shape.clone(),
            data: self.data.clone(),
        }
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("node", &self.node)
            .field("shape", &self.shape)
            .finish()
    }
}

type Saved = Arc<Buffer>;

enum Op {
    Leaf,
    Add {
        a: Option<NodeId>,
        b: Option<NodeId>,
    },
    AddBias {
        x: Option<NodeId>,
        b: Option<NodeId>,
        cols: usize,
    },
    Mul {
        a: Option<NodeId>,
        b: Option<NodeId>,
        av: Saved,
        bv: Saved,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    Matmul {
        a: Option<NodeId>,
        b: Option<NodeId>,
        av: Saved,
        bv: Saved,
        m: usize,
        k: usize,
        n: usize,
    },
    Linear {
        x: Option<NodeId>,
        w: Option<NodeId>,
        b: Option<NodeId>,
        xv: Saved,
        wv: Saved,
        rows: usize,
        inp: usize,
        out: usize,
    },
    LayerNorm {
        x: Option<NodeId>,
        g: Option<NodeId>,
        b: Option<NodeId>,
        gv: Saved,
        xhat: Buffer,
        rstd: Vec<f64>,
        cols: usize,
    },
    Gelu {
        x: NodeId,
        xv: Saved,
    },
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
        dim: usize,
    },
    AttnScores {
        q: Option<NodeId>,
        k: Option<NodeId>,
        qv: Saved,
        kv: Saved,
        heads: usize,
        seq: usize,
        dim: usize,
        scale: f64,
    },
    Softmax {
        x: NodeId,
        y: Saved,
        outer: usize,
        len: usize,
        inner: usize,
    },
    AttnMix {
        p: Option<NodeId>,
        v: Option<NodeId>,
        pv: Saved,
        vv: Saved,
        heads: usize,
        seq: usize,
        dim: usize,
    },
    Dropout {
        x: NodeId,
        mask: Buffer,
    },
    Reshape {
        x: NodeId,
    },
    Transpose {
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Concat {
        parts: Vec<(Option<NodeId>, usize)>,
        outer: usize,
        inner: usize,
    },
    Slice {
        x: NodeId,
        outer: usize,
        axis_len: usize,
        inner: usize,
        start: usize,
        len: usize,
    },
    IndexSelect {
        x: NodeId,
        outer: usize,
        axis_len: usize,
        inner: usize,
        idx: Vec<usize>,
    },
    Sum {
        x: NodeId,
        scale: f64,
    },
    CrossEntropy {
        logits: NodeId,
        probs: Buffer,
        targets: Vec<usize>,
        classes: usize,
    },
    Kl {
        p: Option<NodeId>,
        q: Option<NodeId>,
        p_probs: Vec<f64>,
        q_probs: Vec<f64>,
        log_ratio: Vec<f64>,
        kl: f64,
        temperature: f64,
    },
}

struct Node {
    shape: Vec<usize>,
    op: Op,
}

/// Operation recorder. One tape per forward/backward cycle.
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    no_grad: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Default)]
pub struct Gradients {
    by_node: HashMap<NodeId, Tensor>,
    params: HashMap<String, NodeId>,
}

impl Gradients {
    pub fn wrt(&self, var: &Var) -> Option<&Tensor> {
        var.node.and_then(|id| self.by_node.get(&id))
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|id| self.by_node.get(id))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_finite(op: &str, data: &[f64]) -> Result<()> {
    if let Some(x) = data.iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("{op}: non-finite input {x}")));
    }
    Ok(())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            no_grad: false,
        }
    }

    /// Inference tape: nothing is recorded and no gradient state is kept.
    pub fn no_grad() -> Self {
        Self {
            no_grad: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn arena_bytes_live(&self) -> u64 {
        arena::live_bytes()
    }

    pub fn arena_bytes_peak(&self) -> u64 {
        arena::peak_bytes()
    }

    fn push(&mut self, shape: &[usize], op: Op) -> NodeId {
        self.nodes.push(Node {
            shape: shape.to_vec(),
            op,
        });
        self.nodes.len() - 1
    }

    fn output(&mut self, shape: Vec<usize>, data: Buffer, op: Option<Op>) -> Var {
        let node = op.map(|op| self.push(&shape, op));
        Var {
            node,
            shape,
            data: Arc::new(data),
        }
    }

    fn tracks(&self, inputs: &[&Var]) -> bool {
        !self.no_grad && inputs.iter().any(|v| v.node.is_some())
    }

    /// Binds a tensor as a leaf. Gradients are recorded only when the tensor
    /// requires them.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let node = (!self.no_grad && t.requires_grad()).then(|| self.push(t.shape(), Op::Leaf));
        Var {
            node,
            shape: t.shape().to_vec(),
            data: t.storage().clone(),
        }
    }

    /// Binds a named parameter once per tape; later calls return the same leaf.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        if let Some(v) = self.params.get(name) {
            return v.clone();
        }
        let v = self.leaf(t);
        if v.node.is_some() {
            self.params.insert(name.to_string(), v.clone());
        }
        v
    }

    pub fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        if a.shape != b.shape {
            return Err(Error::shape("add", &a.shape, &b.shape));
        }
        let out: Vec<f64> = a.data.iter().zip(b.data.iter()).map(|(x, y)| x + y).collect();
        let op = self.tracks(&[a, b]).then_some(Op::Add {
            a: a.node,
            b: b.node,
        });
        Ok(self.output(a.shape.clone(), Buffer::from_vec(out), op))
    }

    /// `x[.., n] + b[n]` broadcast over leading dimensions.
    pub fn add_bias(&mut self, x: &Var, b: &Var) -> Result<Var> {
        let cols = b.numel();
        if b.shape.len() != 1 || x.shape.last() != Some(&cols) {
            return Err(Error::shape("add_bias", &x.shape, &b.shape));
        }
        let mut out = x.data.to_vec();
        for row in out.chunks_mut(cols) {
            row.iter_mut().zip(b.data.iter()).for_each(|(o, bb)| *o += bb);
        }
        let op = self.tracks(&[x, b]).then_some(Op::AddBias {
            x: x.node,
            b: b.node,
            cols,
        });
        Ok(self.output(x.shape.clone(), Buffer::from_vec(out), op))
    }

    pub fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        if a.shape != b.shape {
            return Err(Error::shape("mul", &a.shape, &b.shape));
        }
        let out: Vec<f64> = a.data.iter().zip(b.data.iter()).map(|(x, y)| x * y).collect();
        let op = self.tracks(&[a, b]).then(|| Op::Mul {
            a: a.node,
            b: b.node,
            av: a.data.clone(),
            bv: b.data.clone(),
        });
        Ok(self.output(a.shape.clone(), Buffer::from_vec(out), op))
    }

    pub fn scale(&mut self, x: &Var, c: f64) -> Var {
        let out: Vec<f64> = x.data.iter().map(|v| v * c).collect();
        let op = match x.node {
            Some(id) if !self.no_grad => Some(Op::Scale { x: id, c }),
            _ => None,
        };
        self.output(x.shape.clone(), Buffer::from_vec(out), op)
    }

    /// `a[m×k] · b[k×n]`
    pub fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
            return Err(Error::shape("matmul", &a.shape, &b.shape));
        }
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut out = Buffer::zeros(m * n);
        gemm_nn(&a.data, &b.data, &mut out, m, k, n);
        let op = self.tracks(&[a, b]).then(|| Op::Matmul {
            a: a.node,
            b: b.node,
            av: a.data.clone(),
            bv: b.data.clone(),
            m,
            k,
            n,
        });
        Ok(self.output(vec![m, n], out, op))
    }

    /// `x[rows×in] · w[out×in]ᵀ + b[out]`
    pub fn linear(&mut self, x: &Var, w: &Var, b: Option<&Var>) -> Result<Var> {
        if x.shape.len() != 2 || w.shape.len() != 2 || x.shape[1] != w.shape[1] {
            return Err(Error::shape("linear", &x.shape, &w.shape));
        }
        let (rows, inp, out_dim) = (x.shape[0], x.shape[1], w.shape[0]);
        if let Some(b) = b {
            if b.shape != [out_dim] {
                return Err(Error::shape("linear bias", &w.shape, &b.shape));
            }
        }
        let mut out = Buffer::zeros(rows * out_dim);
        if let Some(b) = b {
            for row in out.chunks_mut(out_dim) {
                row.copy_from_slice(&b.data);
            }
        }
        gemm_nt(&x.data, &w.data, &mut out, rows, inp, out_dim);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let op = self.tracks(&inputs).then(|| Op::Linear {
            x: x.node,
            w: w.node,
            b: b.and_then(|b| b.node),
            xv: x.data.clone(),
            wv: w.data.clone(),
            rows,
            inp,
            out: out_dim,
        });
        Ok(self.output(vec![rows, out_dim], out, op))
    }

    /// Row-wise layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: &Var, g: &Var, b: &Var, eps: f64) -> Result<Var> {
        let cols = *x.shape.last().unwrap_or(&0);
        if g.shape != [cols] || b.shape != [cols] {
            return Err(Error::shape("layer_norm", &x.shape, &g.shape));
        }
        let rows = x.numel() / cols.max(1);
        let mut xhat = Buffer::zeros(x.numel());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Buffer::zeros(x.numel());
        for r in 0..rows {
            let row = &x.data[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd.push(rs);
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g.data[c] + b.data[c];
            }
        }
        let op = self.tracks(&[x, g, b]).then(|| Op::LayerNorm {
            x: x.node,
            g: g.node,
            b: b.node,
            gv: g.data.clone(),
            xhat,
            rstd,
            cols,
        });
        Ok(self.output(x.shape.clone(), out, op))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: &Var) -> Var {
        let out: Vec<f64> = x
            .data
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let op = match x.node {
            Some(id) if !self.no_grad => Some(Op::Gelu {
                x: id,
                xv: x.data.clone(),
            }),
            _ => None,
        };
        self.output(x.shape.clone(), Buffer::from_vec(out), op)
    }

    /// Rows of `table[V×d]` selected by `ids`.
    pub fn embedding(&mut self, table: &Var, ids: &[usize]) -> Result<Var> {
        if table.shape.len() != 2 {
            return Err(Error::shape("embedding", &table.shape, &[ids.len()]));
        }
        let (vocab, dim) = (table.shape[0], table.shape[1]);
        let mut out = Buffer::zeros(ids.len() * dim);
        for (r, &id) in ids.iter().enumerate() {
            if id >= vocab {
                return Err(Error::Index {
                    what: "embedding table",
                    index: id,
                    size: vocab,
                });
            }
            out[r * dim..(r + 1) * dim].copy_from_slice(&table.data[id * dim..(id + 1) * dim]);
        }
        let op = match table.node {
            Some(id) if !self.no_grad => Some(Op::Embedding {
                table: id,
                ids: ids.to_vec(),
                dim,
            }),
            _ => None,
        };
        Ok(self.output(vec![ids.len(), dim], out, op))
    }

    /// Scaled, causally masked multi-head attention scores.
    ///
    /// `q`, `k`: `[seq × d]` with heads laid out as contiguous column blocks.
    /// Output `[heads × seq × seq]`; entries above the diagonal are `-inf`.
    pub fn causal_attention_scores(&mut self, q: &Var, k: &Var, heads: usize) -> Result<Var> {
        if q.shape.len() != 2 || q.shape != k.shape || heads == 0 || !q.shape[1].is_multiple_of(heads) {
            return Err(Error::shape("attention_scores", &q.shape, &k.shape));
        }
        let (seq, dim) = (q.shape[0], q.shape[1]);
        let dh = dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Buffer::filled(heads * seq * seq, f64::NEG_INFINITY);
        for h in 0..heads {
            for i in 0..seq {
                let qi = &q.data[i * dim + h * dh..i * dim + (h + 1) * dh];
                for j in 0..=i {
                    let kj = &k.data[j * dim + h * dh..j * dim + (h + 1) * dh];
                    out[(h * seq + i) * seq + j] = dot(qi, kj) * scale;
                }
            }
        }
        let op = self.tracks(&[q, k]).then(|| Op::AttnScores {
            q: q.node,
            k: k.node,
            qv: q.data.clone(),
            kv: k.data.clone(),
            heads,
            seq,
            dim,
            scale,
        });
        Ok(self.output(vec![heads, seq, seq], out, op))
    }

    /// Softmax along `axis`. `-inf` entries are treated as masked (probability
    /// 0); NaN, `+inf`, or a fully masked slice is a numeric error.
    pub fn softmax(&mut self, x: &Var, axis: usize) -> Result<Var> {
        if axis >= x.shape.len() {
            return Err(Error::Index {
                what: "softmax axis",
                index: axis,
                size: x.shape.len(),
            });
        }
        if let Some(v) = x.data.iter().find(|v| v.is_nan() || *v == &f64::INFINITY) {
            return Err(Error::Numeric(format!("softmax: non-finite input {v}")));
        }
        let (outer, len, inner) = split_axis(&x.shape, axis);
        let mut out = Buffer::zeros(x.numel());
        let mut lane = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                for (l, slot) in lane.iter_mut().enumerate() {
                    *slot = x.data[(o * len + l) * inner + i];
                }
                if lane.iter().all(|v| *v == f64::NEG_INFINITY) {
                    return Err(Error::Numeric("softmax: fully masked slice".into()));
                }
                kernels::softmax_in_place(&mut lane);
                for (l, v) in lane.iter().enumerate() {
                    out[(o * len + l) * inner + i] = *v;
                }
            }
        }
        let out = Arc::new(out);
        let node = match x.node {
            Some(id) if !self.no_grad => Some(self.push(
                &x.shape,
                Op::Softmax {
                    x: id,
                    y: out.clone(),
                    outer,
                    len,
                    inner,
                },
            )),
            _ => None,
        };
        Ok(Var {
            node,
            shape: x.shape.clone(),
            data: out,
        })
    }

    /// `out[i, head h] = Σ_j p[h,i,j] · v[j, head h]`
    pub fn attention_mix(&mut self, p: &Var, v: &Var, heads: usize) -> Result<Var> {
        if v.shape.len() != 2 || heads == 0 || !v.shape[1].is_multiple_of(heads) {
            return Err(Error::shape("attention_mix", &p.shape, &v.shape));
        }
        let (seq, dim) = (v.shape[0], v.shape[1]);
        if p.shape != [heads, seq, seq] {
            return Err(Error::shape("attention_mix", &p.shape, &v.shape));
        }
        let dh = dim / heads;
        let mut out = Buffer::zeros(seq * dim);
        for h in 0..heads {
            for i in 0..seq {
                let prow = &p.data[(h * seq + i) * seq..(h * seq + i + 1) * seq];
                for (j, &w) in prow.iter().enumerate() {
                    if w != 0.0 {
                        let vj = &v.data[j * dim + h * dh..j * dim + (h + 1) * dh];
                        kernels::axpy(w, vj, &mut out[i * dim + h * dh..i * dim + (h + 1) * dh]);
                    }
                }
            }
        }
        let op = self.tracks(&[p, v]).then(|| Op::AttnMix {
            p: p.node,
            v: v.node,
            pv: p.data.clone(),
            vv: v.data.clone(),
            heads,
            seq,
            dim,
        });
        Ok(self.output(vec![seq, dim], out, op))
    }

    /// Inverted dropout with a mask drawn from a ChaCha stream seeded by `seed`.
    pub fn dropout(&mut self, x: &Var, p: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config("dropout_p", format!("{p} not in [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x.clone());
        }
        let mut rng = rng::indexed_stream(seed, "dropout-mask", 0);
        let keep = 1.0 / (1.0 - p);
        let mut mask = Buffer::zeros(x.numel());
        for m in mask.iter_mut() {
            *m = if rng.random::<f64>() >= p { keep } else { 0.0 };
        }
        let out: Vec<f64> = x.data.iter().zip(mask.iter()).map(|(v, m)| v * m).collect();
        let op = match x.node {
            Some(id) if !self.no_grad => Some(Op::Dropout { x: id, mask }),
            _ => None,
        };
        Ok(self.output(x.shape.clone(), Buffer::from_vec(out), op))
    }

    pub fn reshape(&mut self, x: &Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != x.numel() {
            return Err(Error::shape("reshape", &x.shape, shape));
        }
        let node = match x.node {
            Some(id) if !self.no_grad => Some(self.push(shape, Op::Reshape { x: id })),
            _ => None,
        };
        Ok(Var {
            node,
            shape: shape.to_vec(),
            data: x.data.clone(),
        })
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, x: &Var) -> Result<Var> {
        if x.shape.len() != 2 {
            return Err(Error::shape("transpose", &x.shape, &[]));
        }
        let (rows, cols) = (x.shape[0], x.shape[1]);
        let mut out = Buffer::zeros(x.numel());
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = x.data[r * cols + c];
            }
        }
        let op = match x.node {
            Some(id) if !self.no_grad => Some(Op::Transpose { x: id, rows, cols }),
            _ => None,
        };
        Ok(self.output(vec![cols, rows], out, op))
    }

    pub fn concat(&mut self, parts: &[&Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        if axis >= first.shape.len() {
            return Err(Error::Index {
                what: "concat axis",
                index: axis,
                size: first.shape.len(),
            });
        }
        for p in parts {
            let same_rank = p.shape.len() == first.shape.len();
            let same_other = same_rank
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !same_other {
                return Err(Error::shape("concat", &first.shape, &p.shape));
            }
        }
        let (outer, _, inner) = split_axis(&first.shape, axis);
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut out = Buffer::zeros(outer * total * inner);
        let mut offset = 0;
        for p in parts {
            let len = p.shape[axis];
            for o in 0..outer {
                let src = &p.data[o * len * inner..(o + 1) * len * inner];
                let dst = (o * total + offset) * inner;
                out[dst..dst + len * inner].copy_from_slice(src);
            }
            offset += len;
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        let op = self.tracks(parts).then(|| Op::Concat {
            parts: parts.iter().map(|p| (p.node, p.shape[axis])).collect(),
            outer,
            inner,
        });
        Ok(self.output(shape, out, op))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: &Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        if axis >= x.shape.len() {
            return Err(Error::Index {
                what: "slice axis",
                index: axis,
                size: x.shape.len(),
            });
        }
        let (outer, axis_len, inner) = split_axis(&x.shape, axis);
        if start + len > axis_len {
            return Err(Error::Index {
                what: "slice range",
                index: start + len,
                size: axis_len,
            });
        }
        let mut out = Buffer::zeros(outer * len * inner);
        for o in 0..outer {
            let src = (o * axis_len + start) * inner;
            out[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&x.data[src..src + len * inner]);
        }
        let mut shape = x.shape.clone();
        shape[axis] = len;
        let op = match x.node {
            Some(id) if !self.no_grad => Some(Op::Slice {
                x: id,
                outer,
                axis_len,
                inner,
                start,
                len,
            }),
            _ => None,
        };
        Ok(self.output(shape, out, op))
    }

    /// Gather entries `idx` along `axis`.
    pub fn index_select(&mut self, x: &Var, axis: usize, idx: &[usize]) -> Result<Var> {
        if axis >= x.shape.len() {
            return Err(Error::Index {
                what: "index_select axis",
                index: axis,
                size: x.shape.len(),
            });
        }
        let (outer, axis_len, inner) = split_axis(&x.shape, axis);
        if let Some(&bad) = idx.iter().find(|&&i| i >= axis_len) {
            return Err(Error::Index {
                what: "index_select",
                index: bad,
                size: axis_len,
            });
        }
        let n = idx.len();
        let mut out = Buffer::zeros(outer * n * inner);
        for o in 0..outer {
            for (slot, &i) in idx.iter().enumerate() {
                let src = (o * axis_len + i) * inner;
                let dst = (o * n + slot) * inner;
                out[dst..dst + inner].copy_from_slice(&x.data[src..src + inner]);
            }
        }
        let mut shape = x.shape.clone();
        shape[axis] = n;
        let op = match x.node {
            Some(id) if !self.no_grad => Some(Op::IndexSelect {
                x: id,
                outer,
                axis_len,
                inner,
                idx: idx.to_vec(),
            }),
            _ => None,
        };
        Ok(self.output(shape, out, op))
    }

    fn reduce(&mut self, x: &Var, scale: f64) -> Var {
        let total: f64 = x.data.iter().sum::<f64>() * scale;
        let op = match x.node {
            Some(id) if !self.no_grad => Some(Op::Sum { x: id, scale }),
            _ => None,
        };
        self.output(Vec::new(), Buffer::from_vec(vec![total]), op)
    }

    pub fn sum(&mut self, x: &Var) -> Var {
        self.reduce(x, 1.0)
    }

    pub fn mean(&mut self, x: &Var) -> Var {
        let n = x.numel().max(1) as f64;
        self.reduce(x, 1.0 / n)
    }

    /// `-log softmax(logits)[target]` for a single logit vector
    /// (`[classes]` or `[1 × classes]`).
    pub fn cross_entropy(&mut self, logits: &Var, target: usize) -> Result<Var> {
        let classes = logits.numel();
        if logits.shape.len() > 2 || (logits.shape.len() == 2 && logits.shape[0] != 1) {
            return Err(Error::shape("cross_entropy", &logits.shape, &[classes]));
        }
        let flat = self.reshape(logits, &[1, classes])?;
        self.cross_entropy_rows(&flat, &[target])
    }

    /// Mean over rows of `-log softmax(logits[r])[targets[r]]`.
    pub fn cross_entropy_rows(&mut self, logits: &Var, targets: &[usize]) -> Result<Var> {
        if logits.shape.len() != 2 || logits.shape[0] != targets.len() || targets.is_empty() {
            return Err(Error::shape("cross_entropy", &logits.shape, &[targets.len()]));
        }
        check_finite("cross_entropy", &logits.data)?;
        let classes = logits.shape[1];
        let mut probs = Buffer::zeros(logits.numel());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= classes {
                return Err(Error::Index {
                    what: "cross_entropy target",
                    index: t,
                    size: classes,
                });
            }
            let row = &logits.data[r * classes..(r + 1) * classes];
            let lse = kernels::log_sum_exp(row);
            total += lse - row[t];
            for c in 0..classes {
                probs[r * classes + c] = (row[c] - lse).exp();
            }
        }
        let loss = total / targets.len() as f64;
        let op = match logits.node {
            Some(id) if !self.no_grad => Some(Op::CrossEntropy {
                logits: id,
                probs,
                targets: targets.to_vec(),
                classes,
            }),
            _ => None,
        };
        Ok(self.output(Vec::new(), Buffer::from_vec(vec![loss]), op))
    }

    /// `KL(softmax(p/T) ‖ softmax(q/T))`. Gradients flow only into `q`; `p`
    /// is treated as a constant target.
    pub fn kl_divergence(&mut self, p_logits: &Var, q_logits: &Var, temperature: f64) -> Result<Var> {
        if p_logits.shape != q_logits.shape {
            return Err(Error::shape("kl_divergence", &p_logits.shape, &q_logits.shape));
        }
        if !(temperature > 0.0) {
            return Err(Error::config("temperature", format!("{temperature} must be > 0")));
        }
        check_finite("kl_divergence", &p_logits.data)?;
        check_finite("kl_divergence", &q_logits.data)?;
        let ps: Vec<f64> = p_logits.data.iter().map(|v| v / temperature).collect();
        let qs: Vec<f64> = q_logits.data.iter().map(|v| v / temperature).collect();
        let (lp, lq) = (kernels::log_sum_exp(&ps), kernels::log_sum_exp(&qs));
        let mut kl = 0.0;
        let mut p_probs = Vec::with_capacity(ps.len());
        let mut q_probs = Vec::with_capacity(qs.len());
        let mut log_ratio = Vec::with_capacity(ps.len());
        for (a, b) in ps.iter().zip(&qs) {
            let (log_p, log_q) = (a - lp, b - lq);
            let p = log_p.exp();
            if p > 0.0 {
                kl += p * (log_p - log_q);
            }
            p_probs.push(p);
            q_probs.push(log_q.exp());
            log_ratio.push(log_p - log_q);
        }
        let op = match (p_logits.node, q_logits.node) {
            (None, None) => None,
            _ if self.no_grad => None,
            (p, q) => Some(Op::Kl {
                p,
                q,
                p_probs,
                q_probs,
                log_ratio,
                kl,
                temperature,
            }),
        };
        Ok(self.output(Vec::new(), Buffer::from_vec(vec![kl]), op))
    }

    /// Reverse-mode sweep from a scalar `loss`. Consumes the tape; returns
    /// gradients for every recorded leaf.
    pub fn backward(mut self, loss: &Var) -> Result<Gradients> {
        if loss.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape
            )));
        }
        let root = loss
            .node
            .ok_or_else(|| Error::Contract("loss does not depend on any trainable tensor".into()))?;
        self.nodes.truncate(root + 1);
        let mut grads: Vec<Option<Buffer>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Buffer::from_vec(vec![1.0]));
        let sizes: Vec<usize> = self.nodes.iter().map(|n| numel(&n.shape)).collect();
        let mut result = Gradients::default();

        while let Some(node) = self.nodes.pop() {
            let id = self.nodes.len();
            let Some(g) = grads[id].take() else {
                continue;
            };
            backprop(id, node, g, &mut grads, &sizes, &mut result)?;
        }
        result.params = self
            .params
            .iter()
            .filter_map(|(name, v)| v.node.map(|id| (name.clone(), id)))
            .filter(|(_, id)| result.by_node.contains_key(id))
            .collect();
        Ok(result)
    }
}

fn slot<'a>(grads: &'a mut [Option<Buffer>], sizes: &[usize], id: NodeId) -> &'a mut Buffer {
    grads[id].get_or_insert_with(|| Buffer::zeros(sizes[id]))
}

fn backprop(
    id: NodeId,
    node: Node,
    g: Buffer,
    grads: &mut [Option<Buffer>],
    sizes: &[usize],
    result: &mut Gradients,
) -> Result<()> {
    match node.op {
        Op::Leaf => {
            let t = Tensor::from_buffer(node.shape, Arc::new(g));
            result.by_node.insert(id, t);
        }
        Op::Add { a, b } => {
            for input in [a, b].into_iter().flatten() {
                let s = slot(grads, sizes, input);
                s.iter_mut().zip(g.iter()).for_each(|(d, v)| *d += v);
            }
        }
        Op::AddBias { x, b, cols } => {
            if let Some(x) = x {
                let s = slot(grads, sizes, x);
                s.iter_mut().zip(g.iter()).for_each(|(d, v)| *d += v);
            }
            if let Some(b) = b {
                let s = slot(grads, sizes, b);
                for row in g.chunks(cols) {
                    s.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
            }
        }
        Op::Mul { a, b, av, bv } => {
            if let Some(a) = a {
                let s = slot(grads, sizes, a);
                for i in 0..g.len() {
                    s[i] += g[i] * bv[i];
                }
            }
            if let Some(b) = b {
                let s = slot(grads, sizes, b);
                for i in 0..g.len() {
                    s[i] += g[i] * av[i];
                }
            }
        }
        Op::Scale { x, c } => {
            let s = slot(grads, sizes, x);
            s.iter_mut().zip(g.iter()).for_each(|(d, v)| *d += v * c);
        }
        Op::Matmul { a, b, av, bv, m, k, n } => {
            if let Some(a) = a {
                // dA = dC · Bᵀ
                gemm_nt(&g, &bv, slot(grads, sizes, a), m, n, k);
            }
            if let Some(b) = b {
                // dB = Aᵀ · dC
                gemm_tn(&av, &g, slot(grads, sizes, b), k, m, n);
            }
        }
        Op::Linear {
            x,
            w,
            b,
            xv,
            wv,
            rows,
            inp,
            out,
        } => {
            if let Some(x) = x {
                gemm_nn(&g, &wv, slot(grads, sizes, x), rows, out, inp);
            }
            if let Some(w) = w {
                gemm_tn(&g, &xv, slot(grads, sizes, w), out, rows, inp);
            }
            if let Some(b) = b {
                let s = slot(grads, sizes, b);
                for row in g.chunks(out) {
                    s.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
            }
        }
        Op::LayerNorm {
            x,
            g: gamma,
            b,
            gv,
            xhat,
            rstd,
            cols,
        } => {
            if let Some(gamma) = gamma {
                let s = slot(grads, sizes, gamma);
                for (gr, hr) in g.chunks(cols).zip(xhat.chunks(cols)) {
                    for c in 0..cols {
                        s[c] += gr[c] * hr[c];
                    }
                }
            }
            if let Some(b) = b {
                let s = slot(grads, sizes, b);
                for gr in g.chunks(cols) {
                    s.iter_mut().zip(gr).for_each(|(d, v)| *d += v);
                }
            }
            if let Some(x) = x {
                let s = slot(grads, sizes, x);
                let n = cols as f64;
                for (r, rs) in rstd.iter().enumerate() {
                    let gr = &g[r * cols..(r + 1) * cols];
                    let hr = &xhat[r * cols..(r + 1) * cols];
                    let mut mean_d = 0.0;
                    let mut mean_dh = 0.0;
                    for c in 0..cols {
                        let d = gr[c] * gv[c];
                        mean_d += d;
                        mean_dh += d * hr[c];
                    }
                    mean_d /= n;
                    mean_dh /= n;
                    for c in 0..cols {
                        let d = gr[c] * gv[c];
                        s[r * cols + c] += rs * (d - mean_d - hr[c] * mean_dh);
                    }
                }
            }
        }
        Op::Gelu { x, xv } => {
            let s = slot(grads, sizes, x);
            for i in 0..g.len() {
                let v = xv[i];
                let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                s[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
            }
        }
        Op::Embedding { table, ids, dim } => {
            let s = slot(grads, sizes, table);
            for (r, &tok) in ids.iter().enumerate() {
                kernels::axpy(1.0, &g[r * dim..(r + 1) * dim], &mut s[tok * dim..(tok + 1) * dim]);
            }
        }
        Op::AttnScores {
            q,
            k,
            qv,
            kv,
            heads,
            seq,
            dim,
            scale,
        } => {
            let dh = dim / heads;
            if let Some(q) = q {
                let s = slot(grads, sizes, q);
                for h in 0..heads {
                    for i in 0..seq {
                        for j in 0..=i {
                            let d = g[(h * seq + i) * seq + j] * scale;
                            if d != 0.0 {
                                let kj = &kv[j * dim + h * dh..j * dim + (h + 1) * dh];
                                kernels::axpy(d, kj, &mut s[i * dim + h * dh..i * dim + (h + 1) * dh]);
                            }
                        }
                    }
                }
            }
            if let Some(k) = k {
                let s = slot(grads, sizes, k);
                for h in 0..heads {
                    for i in 0..seq {
                        let qi = &qv[i * dim + h * dh..i * dim + (h + 1) * dh];
                        for j in 0..=i {
                            let d = g[(h * seq + i) * seq + j] * scale;
                            if d != 0.0 {
                                kernels::axpy(d, qi, &mut s[j * dim + h * dh..j * dim + (h + 1) * dh]);
                            }
                        }
                    }
                }
            }
        }
        Op::Softmax {
            x,
            y,
            outer,
            len,
            inner,
        } => {
            let s = slot(grads, sizes, x);
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let mut inner_prod = 0.0;
                    for l in 0..len {
                        inner_prod += g[at(l)] * y[at(l)];
                    }
                    for l in 0..len {
                        s[at(l)] += y[at(l)] * (g[at(l)] - inner_prod);
                    }
                }
            }
        }
        Op::AttnMix {
            p,
            v,
            pv,
            vv,
            heads,
            seq,
            dim,
        } => {
            let dh = dim / heads;
            if let Some(p) = p {
                let s = slot(grads, sizes, p);
                for h in 0..heads {
                    for i in 0..seq {
                        let gi = &g[i * dim + h * dh..i * dim + (h + 1) * dh];
                        for j in 0..seq {
                            let vj = &vv[j * dim + h * dh..j * dim + (h + 1) * dh];
                            s[(h * seq + i) * seq + j] += dot(gi, vj);
                        }
                    }
                }
            }
            if let Some(v) = v {
                let s = slot(grads, sizes, v);
                for h in 0..heads {
                    for i in 0..seq {
                        let gi = &g[i * dim + h * dh..i * dim + (h + 1) * dh];
                        for j in 0..seq {
                            let w = pv[(h * seq + i) * seq + j];
                            if w != 0.0 {
                                kernels::axpy(w, gi, &mut s[j * dim + h * dh..j * dim + (h + 1) * dh]);
                            }
                        }
                    }
                }
            }
        }
        Op::Dropout { x, mask } => {
            let s = slot(grads, sizes, x);
            for i in 0..g.len() {
                s[i] += g[i] * mask[i];
            }
        }
        Op::Reshape { x } => {
            let s = slot(grads, sizes, x);
            s.iter_mut().zip(g.iter()).for_each(|(d, v)| *d += v);
        }
        Op::Transpose { x, rows, cols } => {
            let s = slot(grads, sizes, x);
            for r in 0..rows {
                for c in 0..cols {
                    s[r * cols + c] += g[c * rows + r];
                }
            }
        }
        Op::Concat { parts, outer, inner } => {
            let total: usize = parts.iter().map(|(_, l)| l).sum();
            let mut offset = 0;
            for (part, len) in parts {
                if let Some(pid) = part {
                    let s = slot(grads, sizes, pid);
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        let dst = o * len * inner;
                        for e in 0..len * inner {
                            s[dst + e] += g[src + e];
                        }
                    }
                }
                offset += len;
            }
        }
        Op::Slice {
            x,
            outer,
            axis_len,
            inner,
            start,
            len,
        } => {
            let s = slot(grads, sizes, x);
            for o in 0..outer {
                let dst = (o * axis_len + start) * inner;
                let src = o * len * inner;
                for e in 0..len * inner {
                    s[dst + e] += g[src + e];
                }
            }
        }
        Op::IndexSelect {
            x,
            outer,
            axis_len,
            inner,
            idx,
        } => {
            let s = slot(grads, sizes, x);
            let n = idx.len();
            for o in 0..outer {
                for (slot_i, &i) in idx.iter().enumerate() {
                    let dst = (o * axis_len + i) * inner;
                    let src = (o * n + slot_i) * inner;
                    for e in 0..inner {
                        s[dst + e] += g[src + e];
                    }
                }
            }
        }
        Op::Sum { x, scale } => {
            let gv = g[0] * scale;
            slot(grads, sizes, x).iter_mut().for_each(|d| *d += gv);
        }
        Op::CrossEntropy {
            logits,
            probs,
            targets,
            classes,
        } => {
            let s = slot(grads, sizes, logits);
            let w = g[0] / targets.len() as f64;
            for (r, &t) in targets.iter().enumerate() {
                for c in 0..classes {
                    let onehot = if c == t { 1.0 } else { 0.0 };
                    s[r * classes + c] += w * (probs[r * classes + c] - onehot);
                }
            }
        }
        Op::Kl {
            p,
            q,
            p_probs,
            q_probs,
            log_ratio,
            kl,
            temperature,
        } => {
            let w = g[0] / temperature;
            if let Some(q) = q {
                let s = slot(grads, sizes, q);
                for i in 0..s.len() {
                    s[i] += w * (q_probs[i] - p_probs[i]);
                }
            }
            if let Some(p) = p {
                let s = slot(grads, sizes, p);
                for i in 0..s.len() {
                    if p_probs[i] > 0.0 {
                        s[i] += w * p_probs[i] * (log_ratio[i] - kl);
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..numel(shape)).map(|_| StandardNormal.sample(&mut r)).collect();
        Tensor::new(shape, data).unwrap().with_requires_grad(true)
    }

    /// Max relative error between analytic and central-difference gradients,
    /// with denominator `max(|a|, |n|) + 1e-6`.
    fn gradcheck(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward(&loss).unwrap();
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(v, t)| grads.wrt(v).map(|g| g.to_vec()).unwrap_or(vec![0.0; t.numel()]))
            .collect();
        let eval = |ins: &[Tensor]| {
            let mut tape = Tape::no_grad();
            let vars: Vec<Var> = ins.iter().map(Var::constant).collect();
            f(&mut tape, &vars).item()
        };
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for (which, t) in inputs.iter().enumerate() {
            if !t.requires_grad() {
                continue;
            }
            for (i, &a) in analytic[which].iter().enumerate() {
                let mut plus = inputs.to_vec();
                plus[which].data_mut()[i] += h;
                let mut minus = inputs.to_vec();
                minus[which].data_mut()[i] -= h;
                let num = (eval(&plus) - eval(&minus)) / (2.0 * h);
                worst = worst.max((a - num).abs() / (a.abs().max(num.abs()) + 1e-6));
            }
        }
        worst
    }

    /// Weighted sum so every output element gets a distinct upstream gradient.
    fn probe(tape: &mut Tape, x: &Var, seed: u64) -> Var {
        let w = Var::constant(&rand_tensor(x.shape(), seed));
        let y = tape.mul(x, &w).unwrap();
        tape.sum(&y)
    }

    #[test]
    fn matmul_known_values_and_grad() {
        let mut tape = Tape::no_grad();
        let a = Var::constant(&Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = Var::constant(&Tensor::new(&[2, 1], vec![0.0, 1.0]).unwrap());
        assert_eq!(tape.matmul(&a, &b).unwrap().data(), &[2.0, 4.0]);
        let err = gradcheck(&[rand_tensor(&[3, 4], 1), rand_tensor(&[4, 2], 2)], |t, v| {
            let y = t.matmul(&v[0], &v[1]).unwrap();
            t.sum(&y)
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(&rand_tensor(&[2, 3], 1));
        let b = tape.leaf(&rand_tensor(&[2, 3], 2));
        let msg = tape.matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn elementwise_grads() {
        let ins = [rand_tensor(&[2, 3], 1), rand_tensor(&[2, 3], 2), rand_tensor(&[3], 3)];
        let err = gradcheck(&ins, |t, v| {
            let a = t.add(&v[0], &v[1]).unwrap();
            let m = t.mul(&a, &v[0]).unwrap();
            let s = t.scale(&m, -0.7);
            let b = t.add_bias(&s, &v[2]).unwrap();
            let g = t.gelu(&b);
            probe(t, &g, 9)
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_and_layer_norm_grads() {
        let ins = [
            rand_tensor(&[3, 5], 1),
            rand_tensor(&[4, 5], 2),
            rand_tensor(&[4], 3),
            rand_tensor(&[4], 4),
            rand_tensor(&[4], 5),
        ];
        let err = gradcheck(&ins, |t, v| {
            let y = t.linear(&v[0], &v[1], Some(&v[2])).unwrap();
            let n = t.layer_norm(&y, &v[3], &v[4], 1e-5).unwrap();
            probe(t, &n, 7)
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn attention_grads() {
        let ins = [rand_tensor(&[4, 6], 1), rand_tensor(&[4, 6], 2), rand_tensor(&[4, 6], 3)];
        let err = gradcheck(&ins, |t, v| {
            let s = t.causal_attention_scores(&v[0], &v[1], 2).unwrap();
            let p = t.softmax(&s, 2).unwrap();
            let o = t.attention_mix(&p, &v[2], 2).unwrap();
            probe(t, &o, 11)
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn attention_is_causal() {
        let mut tape = Tape::no_grad();
        let q = Var::constant(&rand_tensor(&[3, 4], 1));
        let k = Var::constant(&rand_tensor(&[3, 4], 2));
        let s = tape.causal_attention_scores(&q, &k, 1).unwrap();
        let p = tape.softmax(&s, 2).unwrap();
        assert_eq!(p.data()[1], 0.0);
        assert_eq!(p.data()[0], 1.0);
    }

    #[test]
    fn structural_grads() {
        let ins = [rand_tensor(&[2, 3], 1), rand_tensor(&[2, 2], 2), rand_tensor(&[5, 3], 3)];
        let err = gradcheck(&ins, |t, v| {
            let c = t.concat(&[&v[0], &v[1]], 1).unwrap();
            let tr = t.transpose(&c).unwrap();
            let r = t.reshape(&tr, &[2, 5]).unwrap();
            let sl = t.slice(&r, 1, 1, 3).unwrap();
            let e = t.embedding(&v[2], &[4, 0, 4]).unwrap();
            let ix = t.index_select(&e, 0, &[2, 0]).unwrap();
            let a = t.add(&sl, &ix).unwrap();
            let m = t.mean(&a);
            let p = probe(t, &a, 5);
            t.add(&m, &p).unwrap()
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn dropout_grad_uses_mask() {
        let err = gradcheck(&[rand_tensor(&[20], 1)], |t, v| {
            let d = t.dropout(&v[0], 0.3, 42).unwrap();
            probe(t, &d, 2)
        });
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn softmax_values() {
        let mut tape = Tape::no_grad();
        let x = Var::constant(&Tensor::new(&[2], vec![0.0, 0.0]).unwrap());
        assert_eq!(tape.softmax(&x, 0).unwrap().data(), &[0.5, 0.5]);
        let x = Var::constant(&Tensor::new(&[2], vec![1000.0, 0.0]).unwrap());
        let y = tape.softmax(&x, 0).unwrap();
        assert_eq!(y.data()[0], 1.0);
        assert!(y.data()[1] < 1e-300);
        let x = Var::constant(&Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = tape.softmax(&x, 0).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((y.data()[i] - v.exp() / z).abs() < 1e-12);
        }
        let bad = Var::constant(&Tensor::new(&[2], vec![f64::NAN, 0.0]).unwrap());
        assert!(matches!(tape.softmax(&bad, 0), Err(Error::Numeric(_))));
    }

    #[test]
    fn softmax_grad_middle_axis() {
        let err = gradcheck(&[rand_tensor(&[2, 3, 2], 1)], |t, v| {
            let s = t.softmax(&v[0], 1).unwrap();
            probe(t, &s, 3)
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn cross_entropy_values_and_grad() {
        let mut tape = Tape::no_grad();
        let z = Var::constant(&Tensor::new(&[2], vec![0.0, 0.0]).unwrap());
        assert!((tape.cross_entropy(&z, 0).unwrap().item() - 2f64.ln()).abs() < 1e-15);
        let z = Var::constant(&Tensor::new(&[2], vec![800.0, 0.0]).unwrap());
        assert!(tape.cross_entropy(&z, 0).unwrap().item() < 1e-300);
        assert!(matches!(tape.cross_entropy(&z, 2), Err(Error::Index { .. })));

        let logits = rand_tensor(&[4], 3);
        let ce = tape.cross_entropy(&Var::constant(&logits), 1).unwrap().item();
        let d = logits.data();
        let oracle = -(d[1].exp() / d.iter().map(|v| v.exp()).sum::<f64>()).ln();
        assert!((ce - oracle).abs() < 1e-10);

        let err = gradcheck(&[rand_tensor(&[3, 5], 4)], |t, v| t.cross_entropy_rows(&v[0], &[0, 4, 2]).unwrap());
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn kl_values_and_frozen_teacher_grad() {
        let mut tape = Tape::no_grad();
        let p = Var::constant(&Tensor::new(&[2], vec![1.0, 0.0]).unwrap());
        let q = Var::constant(&Tensor::new(&[2], vec![0.0, 1.0]).unwrap());
        let kl = tape.kl_divergence(&p, &q, 1.0).unwrap().item();
        let sm = |a: f64, b: f64| [a.exp() / (a.exp() + b.exp()), b.exp() / (a.exp() + b.exp())];
        let (pp, qq) = (sm(1.0, 0.0), sm(0.0, 1.0));
        let oracle: f64 = (0..2).map(|i| pp[i] * (pp[i] / qq[i]).ln()).sum();
        assert!((kl - oracle).abs() < 1e-10);
        assert_eq!(tape.kl_divergence(&p, &p, 1.0).unwrap().item(), 0.0);
        assert!(tape.kl_divergence(&p, &q, 0.0).is_err());

        let pt = rand_tensor(&[5], 1).with_requires_grad(false);
        let err = gradcheck(&[pt, rand_tensor(&[5], 2)], |t, v| t.kl_divergence(&v[0], &v[1], 1.7).unwrap());
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn kl_grad_into_both_arguments() {
        let err = gradcheck(&[rand_tensor(&[6], 3), rand_tensor(&[6], 4)], |t, v| {
            t.kl_divergence(&v[0], &v[1], 0.8).unwrap()
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn backward_basics() {
        let x = rand_tensor(&[2, 3], 1);
        let mut tape = Tape::new();
        let v = tape.leaf(&x);
        let s = tape.sum(&v);
        let g = tape.backward(&s).unwrap();
        assert!(g.wrt(&v).unwrap().data().iter().all(|&d| d == 1.0));

        let x = Tensor::new(&[1], vec![3.0]).unwrap().with_requires_grad(true);
        let mut tape = Tape::new();
        let v = tape.leaf(&x);
        let sq = tape.mul(&v, &v).unwrap();
        let g = tape.backward(&sq).unwrap();
        assert_eq!(g.wrt(&v).unwrap().data(), &[6.0]);

        let mut tape = Tape::new();
        let v = tape.leaf(&rand_tensor(&[2], 1));
        assert!(matches!(tape.backward(&v), Err(Error::Contract(_))));
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let frozen = rand_tensor(&[3], 1).with_requires_grad(false);
        let mut tape = Tape::new();
        let f = tape.leaf(&frozen);
        let t = tape.leaf(&rand_tensor(&[3], 2));
        let y = tape.mul(&f, &t).unwrap();
        let s = tape.sum(&y);
        let g = tape.backward(&s).unwrap();
        assert!(g.wrt(&f).is_none());
        assert!(g.wrt(&t).is_some());
    }

    #[test]
    fn live_bytes_return_after_cycle() {
        let x = rand_tensor(&[8, 8], 1);
        let w = rand_tensor(&[8, 8], 2);
        let before = arena::live_bytes();
        {
            let mut tape = Tape::new();
            let (xv, wv) = (tape.leaf(&x), tape.leaf(&w));
            let y = tape.linear(&xv, &wv, None).unwrap();
            let g = tape.gelu(&y);
            let s = tape.sum(&g);
            let grads = tape.backward(&s).unwrap();
            assert!(grads.wrt(&wv).is_some());
        }
        assert_eq!(arena::live_bytes(), before);
    }
}
