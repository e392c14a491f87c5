use crate::error::{Result, TensorError};
use crate::gemm::{gemm, View};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// Grouped product `c[g] = a[g] · op(b[g])`; `op` transposes when `trans_b`.
    MatMul {
        a: Var,
        b: Var,
        groups: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Add(Var, Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Reshape(Var),
    SplitHeads {
        x: Var,
        heads: usize,
    },
    MergeHeads {
        x: Var,
        heads: usize,
    },
    ComplexMul {
        a: Var,
        b: Var,
    },
    PowerNormalize {
        x: Var,
        scale: f64,
        floored: bool,
    },
    Pick {
        x: Var,
        idx: Vec<usize>,
    },
    BinaryCrossEntropy {
        p: Var,
        target: Vec<f64>,
        mask: Vec<bool>,
        rows: usize,
        lo: f64,
        hi: f64,
    },
    Sum(Var),
    Mean(Var),
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul { a, b, .. } | Add(a, b) | Mul(a, b) | ComplexMul { a, b } => vec![*a, *b],
            AddBias { x, bias } => vec![*x, *bias],
            LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Embedding { table, .. } => vec![*table],
            Scale(x, _) | Relu(x) | Gelu(x) | Softmax(x) | Reshape(x) | Sum(x) | Mean(x) => {
                vec![*x]
            }
            SplitHeads { x, .. } | MergeHeads { x, .. } | PowerNormalize { x, .. } | Pick { x, .. } => vec![*x],
            BinaryCrossEntropy { p, .. } => vec![*p],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations in execution order.
///
/// Nodes are only ever appended, and every operation's inputs already exist
/// when it is pushed, so index order is a topological order of the graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when the loss does not depend on it or
    /// `var` is not a gradient-carrying leaf.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, zero-filled when absent.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        let needs_grad = op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Tensor::from_parts(shape, data),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn data(&self, var: Var) -> &[f64] {
        self.nodes[var.0].value.data()
    }

    // ---- linear algebra -------------------------------------------------

    /// Matrix product of `a[m×k]` and `b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        Ok(self.grouped_matmul(a, b, 1, m, k, n, false, vec![m, n]))
    }

    /// Applies `w[k×n]` to the last axis of `x[...×k]`, giving `[...×n]`.
    pub fn dense(&mut self, x: Var, w: Var) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.is_empty() || sw.len() != 2 || sx[sx.len() - 1] != sw[0] {
            return Err(TensorError::shape("dense", sx, sw));
        }
        let k = sw[0];
        let n = sw[1];
        let m = self.value(x).len() / k;
        let mut out = sx.to_vec();
        *out.last_mut().unwrap() = n;
        Ok(self.grouped_matmul(x, w, 1, m, k, n, false, out))
    }

    /// Batched product over a leading group axis.
    ///
    /// `a` is `[g×m×k]`; `b` is `[g×k×n]`, or `[g×n×k]` when `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok =
            sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0] && if trans_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(TensorError::shape("bmm", sa, sb));
        }
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        Ok(self.grouped_matmul(a, b, g, m, k, n, trans_b, vec![g, m, n]))
    }

    #[allow(clippy::too_many_arguments)]
    fn grouped_matmul(
        &mut self,
        a: Var,
        b: Var,
        groups: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
        out_shape: Vec<usize>,
    ) -> Var {
        let mut out = vec![0.0; groups * m * n];
        {
            let (da, db) = (self.data(a), self.data(b));
            for g in 0..groups {
                let av = View::rows(&da[g * m * k..(g + 1) * m * k], k);
                let bs = &db[g * k * n..(g + 1) * k * n];
                let bv = if trans_b {
                    View::transposed(bs, k)
                } else {
                    View::rows(bs, n)
                };
                gemm(m, k, n, 1.0, av, bv, 0.0, &mut out[g * m * n..(g + 1) * m * n]);
            }
        }
        self.push(
            out_shape,
            out,
            Op::MatMul {
                a,
                b,
                groups,
                m,
                k,
                n,
                trans_b,
            },
        )
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::shape("add", sa, sb));
        }
        let shape = sa.to_vec();
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(shape, out, Op::Add(a, b)))
    }

    /// Adds `bias[n]` to every row of `x[...×n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.len() != 1 || sx.last() != Some(&sb[0]) {
            return Err(TensorError::shape("add_bias", sx, sb));
        }
        let shape = sx.to_vec();
        let bv = self.data(bias);
        let n = bv.len();
        let out = self.data(x).iter().enumerate().map(|(i, v)| v + bv[i % n]).collect();
        Ok(self.push(shape, out, Op::AddBias { x, bias }))
    }

    /// `x · w + b` over the last axis.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.dense(x, w)?;
        self.add_bias(y, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::shape("mul", sa, sb));
        }
        let shape = sa.to_vec();
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(shape, out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let shape = self.shape(x).to_vec();
        let out = self.data(x).iter().map(|v| v * s).collect();
        self.push(shape, out, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let out = self.data(x).iter().map(|v| v.max(0.0)).collect();
        self.push(shape, out, Op::Relu(x))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let out = self.data(x).iter().map(|&v| gelu(v)).collect();
        self.push(shape, out, Op::Gelu(x))
    }

    /// Softmax over the last axis, stabilized by subtracting the row max.
    pub fn softmax(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let n = self.value(x).last_dim();
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        self.push(shape, out, Op::Softmax(x))
    }

    /// Normalizes each row of the last axis to zero mean and unit variance,
    /// then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let sx = self.shape(x);
        let n = *sx.last().unwrap_or(&1);
        for p in [gain, bias] {
            if self.shape(p) != [n] {
                return Err(TensorError::shape("layer_norm", sx, self.shape(p)));
            }
        }
        let shape = sx.to_vec();
        let (g, b) = (self.data(gain), self.data(bias));
        let xd = self.data(x);
        let rows = xd.len() / n;
        let mut normalized = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let row = &xd[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..n {
                let xh = (row[j] - mean) * istd;
                normalized[r * n + j] = xh;
                out[r * n + j] = xh * g[j] + b[j];
            }
        }
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        ))
    }

    // ---- indexing and layout -------------------------------------------

    /// Gathers rows of `table[V×E]`; the result has shape `lead ++ [E]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], lead: &[usize]) -> Result<Var> {
        let st = self.shape(table);
        if st.len() != 2 || lead.iter().product::<usize>() != ids.len() {
            return Err(TensorError::shape("embedding", st, lead));
        }
        let (v, e) = (st[0], st[1]);
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(TensorError::invalid(
                "embedding",
                format!("id {bad} out of range for table of {v} rows"),
            ));
        }
        let td = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            out.extend_from_slice(&td[i * e..(i + 1) * e]);
        }
        let mut shape = lead.to_vec();
        shape.push(e);
        Ok(self.push(
            shape,
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let sx = self.shape(x);
        if shape.iter().product::<usize>() != self.value(x).len() || shape.contains(&0) {
            return Err(TensorError::shape("reshape", sx, shape));
        }
        let out = self.data(x).to_vec();
        Ok(self.push(shape.to_vec(), out, Op::Reshape(x)))
    }

    /// `[B×L×(H·d)]` to `[(B·H)×L×d]`.
    pub fn split_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 3 || heads == 0 || !sx[2].is_multiple_of(heads) {
            return Err(TensorError::shape("split_heads", sx, &[heads]));
        }
        let (b, l, w) = (sx[0], sx[1], sx[2]);
        let d = w / heads;
        let xd = self.data(x);
        let mut out = vec![0.0; xd.len()];
        for bi in 0..b {
            for li in 0..l {
                for h in 0..heads {
                    let src = (bi * l + li) * w + h * d;
                    let dst = ((bi * heads + h) * l + li) * d;
                    out[dst..dst + d].copy_from_slice(&xd[src..src + d]);
                }
            }
        }
        Ok(self.push(vec![b * heads, l, d], out, Op::SplitHeads { x, heads }))
    }

    /// Inverse of [`Tape::split_heads`].
    pub fn merge_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 3 || heads == 0 || !sx[0].is_multiple_of(heads) {
            return Err(TensorError::shape("merge_heads", sx, &[heads]));
        }
        let (bh, l, d) = (sx[0], sx[1], sx[2]);
        let b = bh / heads;
        let w = heads * d;
        let xd = self.data(x);
        let mut out = vec![0.0; xd.len()];
        for bi in 0..b {
            for li in 0..l {
                for h in 0..heads {
                    let src = ((bi * heads + h) * l + li) * d;
                    let dst = (bi * l + li) * w + h * d;
                    out[dst..dst + d].copy_from_slice(&xd[src..src + d]);
                }
            }
        }
        Ok(self.push(vec![b, l, w], out, Op::MergeHeads { x, heads }))
    }

    /// `[...×V]` to `[...]`, taking entry `idx[r]` from row `r`.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let sx = self.shape(x);
        let v = *sx.last().unwrap_or(&1);
        let rows = self.value(x).len() / v;
        if sx.is_empty() || idx.len() != rows || idx.iter().any(|&i| i >= v) {
            return Err(TensorError::shape("pick", sx, &[idx.len()]));
        }
        let xd = self.data(x);
        let out = idx.iter().enumerate().map(|(r, &i)| xd[r * v + i]).collect();
        let shape = if sx.len() == 1 {
            vec![1]
        } else {
            sx[..sx.len() - 1].to_vec()
        };
        Ok(self.push(shape, out, Op::Pick { x, idx: idx.to_vec() }))
    }

    // ---- complex-valued helpers -----------------------------------------

    /// Complex product of `a[G×M×2]` with one coefficient per group `b[G×2]`.
    pub fn complex_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sa[2] != 2 || sb != [sa[0], 2] {
            return Err(TensorError::shape("complex_mul", sa, sb));
        }
        let shape = sa.to_vec();
        let m = sa[1];
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; ad.len()];
        for g in 0..sa[0] {
            let (br, bi) = (bd[2 * g], bd[2 * g + 1]);
            for s in 0..m {
                let o = (g * m + s) * 2;
                let (ar, ai) = (ad[o], ad[o + 1]);
                out[o] = ar * br - ai * bi;
                out[o + 1] = ar * bi + ai * br;
            }
        }
        Ok(self.push(shape, out, Op::ComplexMul { a, b }))
    }

    /// Scales `x[...×2]` so the mean complex-symbol power is one.
    ///
    /// The mean power is floored at `floor`, so an all-zero input stays zero.
    pub fn power_normalize(&mut self, x: Var, floor: f64) -> Result<Var> {
        let sx = self.shape(x);
        if sx.last() != Some(&2) {
            return Err(TensorError::shape("power_normalize", sx, &[2]));
        }
        let shape = sx.to_vec();
        let xd = self.data(x);
        let symbols = xd.len() / 2;
        let power = xd.iter().map(|v| v * v).sum::<f64>() / symbols as f64;
        let floored = power < floor;
        let scale = 1.0 / power.max(floor).sqrt();
        let out = xd.iter().map(|v| v * scale).collect();
        Ok(self.push(shape, out, Op::PowerNormalize { x, scale, floored }))
    }

    // ---- reductions and losses ------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.push(vec![], vec![s], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.data(x);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.push(vec![], vec![s], Op::Mean(x))
    }

    /// Per-position binary cross-entropy on probabilities `p`,
    /// `-sum(t·ln p + (1-t)·ln(1-p))` over unmasked positions, divided by
    /// `rows`. `p` is clamped to `[lo, hi]` first; the gradient is zero
    /// where the clamp is active.
    pub fn binary_cross_entropy(
        &mut self,
        p: Var,
        target: &[f64],
        mask: &[bool],
        rows: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Var> {
        let sp = self.shape(p);
        let n = self.value(p).len();
        if target.len() != n || mask.len() != n || rows == 0 {
            return Err(TensorError::shape(
                "binary_cross_entropy",
                sp,
                &[target.len(), mask.len()],
            ));
        }
        let pd = self.data(p);
        let mut total = 0.0;
        for i in 0..n {
            if mask[i] {
                let pc = pd[i].clamp(lo, hi);
                total += target[i] * pc.ln() + (1.0 - target[i]) * (1.0 - pc).ln();
            }
        }
        let loss = -total / rows as f64;
        Ok(self.push(
            vec![],
            vec![loss],
            Op::BinaryCrossEntropy {
                p,
                target: target.to_vec(),
                mask: mask.to_vec(),
                rows,
                lo,
                hi,
            },
        ))
    }

    // ---- reverse sweep --------------------------------------------------

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        let mut out: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Op::Leaf = node.op {
                out[i] = Some(Tensor::from_parts(node.value.shape().to_vec(), g));
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        use Op::*;
        match &node.op {
            Leaf => {}
            MatMul {
                a,
                b,
                groups,
                m,
                k,
                n,
                trans_b,
            } => {
                let (m, k, n) = (*m, *k, *n);
                let (da, db) = (self.data(*a), self.data(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for gi in 0..*groups {
                        let gc = &g[gi * m * n..(gi + 1) * m * n];
                        let bs = &db[gi * k * n..(gi + 1) * k * n];
                        // d a = d c · op(b)ᵀ
                        let bt = if *trans_b {
                            View::rows(bs, k)
                        } else {
                            View::transposed(bs, n)
                        };
                        gemm(
                            m,
                            n,
                            k,
                            1.0,
                            View::rows(gc, n),
                            bt,
                            1.0,
                            &mut ga[gi * m * k..(gi + 1) * m * k],
                        );
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for gi in 0..*groups {
                        let gc = &g[gi * m * n..(gi + 1) * m * n];
                        let as_ = &da[gi * m * k..(gi + 1) * m * k];
                        let dst = &mut gb[gi * k * n..(gi + 1) * k * n];
                        if *trans_b {
                            // d b[n×k] = d cᵀ · a
                            gemm(n, m, k, 1.0, View::transposed(gc, n), View::rows(as_, k), 1.0, dst);
                        } else {
                            // d b[k×n] = aᵀ · d c
                            gemm(k, m, n, 1.0, View::transposed(as_, k), View::rows(gc, n), 1.0, dst);
                        }
                    }
                }
            }
            Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(ga) = self.acc(grads, v) {
                        axpy(ga, g, 1.0);
                    }
                }
            }
            AddBias { x, bias } => {
                if let Some(gx) = self.acc(grads, *x) {
                    axpy(gx, g, 1.0);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        axpy(gb, row, 1.0);
                    }
                }
            }
            Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * db[i];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * da[i];
                    }
                }
            }
            Scale(x, s) => {
                if let Some(gx) = self.acc(grads, *x) {
                    axpy(gx, g, *s);
                }
            }
            Relu(x) => {
                let xd = self.data(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        if xd[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                }
            }
            Gelu(x) => {
                let xd = self.data(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * gelu_grad(xd[i]);
                    }
                }
            }
            Softmax(x) => {
                let y = node.value.data();
                let n = node.value.last_dim();
                if let Some(gx) = self.acc(grads, *x) {
                    for ((gr, yr), dst) in g.chunks(n).zip(y.chunks(n)).zip(gx.chunks_mut(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dst[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let n = node.value.last_dim();
                let gain_v = self.data(*gain);
                if let Some(gg) = self.acc(grads, *gain) {
                    for (gr, xr) in g.chunks(n).zip(normalized.chunks(n)) {
                        for j in 0..n {
                            gg[j] += gr[j] * xr[j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for gr in g.chunks(n) {
                        axpy(gb, gr, 1.0);
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let mut dxhat = vec![0.0; n];
                    for (r, ((gr, xr), dst)) in g.chunks(n).zip(normalized.chunks(n)).zip(gx.chunks_mut(n)).enumerate()
                    {
                        for j in 0..n {
                            dxhat[j] = gr[j] * gain_v[j];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                        let mean_dx = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            dst[j] += inv_std[r] * (dxhat[j] - mean_d - xr[j] * mean_dx);
                        }
                    }
                }
            }
            Embedding { table, ids } => {
                if let Some(gt) = self.acc(grads, *table) {
                    let e = node.value.last_dim();
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(&mut gt[id * e..(id + 1) * e], &g[r * e..(r + 1) * e], 1.0);
                    }
                }
            }
            Reshape(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    axpy(gx, g, 1.0);
                }
            }
            SplitHeads { x, heads } => {
                let s = self.shape(*x);
                let (b, l, w) = (s[0], s[1], s[2]);
                let d = w / heads;
                if let Some(gx) = self.acc(grads, *x) {
                    for bi in 0..b {
                        for li in 0..l {
                            for h in 0..*heads {
                                let dst = (bi * l + li) * w + h * d;
                                let src = ((bi * heads + h) * l + li) * d;
                                axpy(&mut gx[dst..dst + d], &g[src..src + d], 1.0);
                            }
                        }
                    }
                }
            }
            MergeHeads { x, heads } => {
                let s = self.shape(*x);
                let (bh, l, d) = (s[0], s[1], s[2]);
                let w = heads * d;
                if let Some(gx) = self.acc(grads, *x) {
                    for bi in 0..bh / heads {
                        for li in 0..l {
                            for h in 0..*heads {
                                let dst = ((bi * heads + h) * l + li) * d;
                                let src = (bi * l + li) * w + h * d;
                                axpy(&mut gx[dst..dst + d], &g[src..src + d], 1.0);
                            }
                        }
                    }
                }
            }
            ComplexMul { a, b } => {
                let s = self.shape(*a);
                let (groups, m) = (s[0], s[1]);
                let (ad, bd) = (self.data(*a), self.data(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for gi in 0..groups {
                        let (br, bi) = (bd[2 * gi], bd[2 * gi + 1]);
                        for si in 0..m {
                            let o = (gi * m + si) * 2;
                            let (gr, gim) = (g[o], g[o + 1]);
                            ga[o] += gr * br + gim * bi;
                            ga[o + 1] += -gr * bi + gim * br;
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for gi in 0..groups {
                        let (mut sr, mut si_) = (0.0, 0.0);
                        for si in 0..m {
                            let o = (gi * m + si) * 2;
                            let (gr, gim) = (g[o], g[o + 1]);
                            let (ar, ai) = (ad[o], ad[o + 1]);
                            sr += gr * ar + gim * ai;
                            si_ += -gr * ai + gim * ar;
                        }
                        gb[2 * gi] += sr;
                        gb[2 * gi + 1] += si_;
                    }
                }
            }
            PowerNormalize { x, scale, floored } => {
                let xd = self.data(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    if *floored {
                        axpy(gx, g, *scale);
                    } else {
                        let symbols = (xd.len() / 2) as f64;
                        let dot: f64 = g.iter().zip(xd).map(|(a, b)| a * b).sum();
                        let c = scale * scale * scale * dot / symbols;
                        for i in 0..g.len() {
                            gx[i] += scale * g[i] - c * xd[i];
                        }
                    }
                }
            }
            Pick { x, idx } => {
                if let Some(gx) = self.acc(grads, *x) {
                    let v = self.value(*x).last_dim();
                    for (r, &i) in idx.iter().enumerate() {
                        gx[r * v + i] += g[r];
                    }
                }
            }
            BinaryCrossEntropy {
                p,
                target,
                mask,
                rows,
                lo,
                hi,
            } => {
                let pd = self.data(*p);
                if let Some(gp) = self.acc(grads, *p) {
                    let s = -g[0] / *rows as f64;
                    for i in 0..pd.len() {
                        if mask[i] && pd[i] > *lo && pd[i] < *hi {
                            gp[i] += s * (target[i] / pd[i] - (1.0 - target[i]) / (1.0 - pd[i]));
                        }
                    }
                }
            }
            Sum(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|v| *v += g[0]);
                }
            }
            Mean(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    let s = g[0] / gx.len() as f64;
                    gx.iter_mut().for_each(|v| *v += s);
                }
            }
        }
    }

    /// Gradient buffer for `v`, allocated on first use; `None` when `v`
    /// does not need a gradient.
    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }
}

fn axpy(dst: &mut [f64], src: &[f64], s: f64) {
    for (d, v) in dst.iter_mut().zip(src) {
        *d += s * v;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
