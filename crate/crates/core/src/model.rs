//! The four trainable networks: semantic encoder, channel encoder, channel
//! decoder and semantic decoder.
//!
//! Tensor layouts:
//!
//! * token ids `[B×L]`
//! * semantic features `u`: `[B×L×E]`
//! * channel symbols `x`, `y`: `[B×M×2]` with `M = C·L`
//! * channel-decoder output `v̂`: `[B×L×V_feat]`
//! * logits `[B×T×V_vocab]` for a decoder prefix of length `T`

use autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stream};
use crate::text::{TokenBatch, END, PAD, START};

/// Mean-power floor used by [`power_normalize`].
pub const POWER_FLOOR: f64 = 1e-12;
const LN_EPS: f64 = 1e-6;
const MASKED: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeConfig {
    pub batch_size: usize,
    /// Tokens per sentence including `START`/`END` and padding (`L`).
    pub max_len: usize,
    pub embed_dim: usize,
    /// Width of the channel-decoder output `v̂`.
    pub feature_dim: usize,
    /// Complex symbols per token (`C`).
    pub symbols_per_token: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_width: usize,
    pub vocab_size: usize,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig {
            batch_size: 64,
            max_len: 22,
            embed_dim: 64,
            feature_dim: 64,
            symbols_per_token: 8,
            num_layers: 2,
            num_heads: 4,
            ffn_width: 128,
            vocab_size: 4000,
        }
    }
}

impl ShapeConfig {
    /// `M = C·L`.
    pub fn symbols_per_sentence(&self) -> usize {
        self.symbols_per_token * self.max_len
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("feature_dim", self.feature_dim),
            ("symbols_per_token", self.symbols_per_token),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("ffn_width", self.ffn_width),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.max_len < 3 {
            return Err(Error::Config("max_len must be at least 3".into()));
        }
        if self.vocab_size <= 4 {
            return Err(Error::Config("vocab_size must exceed the 4 reserved ids".into()));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        Ok(())
    }

    /// Fields in checkpoint order.
    pub(crate) fn to_values(self) -> [usize; 9] {
        [
            self.batch_size,
            self.max_len,
            self.embed_dim,
            self.feature_dim,
            self.symbols_per_token,
            self.num_layers,
            self.num_heads,
            self.ffn_width,
            self.vocab_size,
        ]
    }

    pub(crate) fn from_values(v: &[usize]) -> Result<Self> {
        let [batch_size, max_len, embed_dim, feature_dim, symbols_per_token, num_layers, num_heads, ffn_width, vocab_size] =
            v
        else {
            return Err(Error::Format(format!("shape record has {} fields", v.len())));
        };
        let s = ShapeConfig {
            batch_size: *batch_size,
            max_len: *max_len,
            embed_dim: *embed_dim,
            feature_dim: *feature_dim,
            symbols_per_token: *symbols_per_token,
            num_layers: *num_layers,
            num_heads: *num_heads,
            ffn_width: *ffn_width,
            vocab_size: *vocab_size,
        };
        s.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(s)
    }
}

/// The four parameter sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TransceiverParams {
    pub semantic_encoder: ParamSet,
    pub channel_encoder: ParamSet,
    pub channel_decoder: ParamSet,
    pub semantic_decoder: ParamSet,
}

impl TransceiverParams {
    pub const GROUPS: [&'static str; 4] = [
        "semantic_encoder",
        "channel_encoder",
        "channel_decoder",
        "semantic_decoder",
    ];

    pub fn groups(&self) -> [&ParamSet; 4] {
        [
            &self.semantic_encoder,
            &self.channel_encoder,
            &self.channel_decoder,
            &self.semantic_decoder,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut ParamSet; 4] {
        [
            &mut self.semantic_encoder,
            &mut self.channel_encoder,
            &mut self.channel_decoder,
            &mut self.semantic_decoder,
        ]
    }

    /// Every tensor, group by group in declaration order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.groups().into_iter().flat_map(|g| g.tensors().iter()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.groups_mut()
            .into_iter()
            .flat_map(|g| g.tensors_mut().iter_mut())
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.groups().iter().map(|g| g.num_scalars()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|g| g.tensors().iter().all(Tensor::is_finite))
    }
}

#[derive(Debug, Clone, Copy)]
enum InitKind {
    Xavier,
    Normal(f64),
    Zeros,
    Ones,
}

/// Name, shape and initializer of every parameter, per group, in the
/// order they are drawn.
#[derive(Default)]
struct Layout {
    entries: Vec<(String, Vec<usize>, InitKind)>,
}

impl Layout {
    fn push(&mut self, name: String, shape: Vec<usize>, kind: InitKind) {
        self.entries.push((name, shape, kind));
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        self.push(format!("{name}.w"), vec![fan_in, fan_out], InitKind::Xavier);
        self.push(format!("{name}.b"), vec![fan_out], InitKind::Zeros);
    }

    fn norm(&mut self, name: &str, width: usize) {
        self.push(format!("{name}.gain"), vec![width], InitKind::Ones);
        self.push(format!("{name}.bias"), vec![width], InitKind::Zeros);
    }

    /// Keys carry no bias: a per-query constant added to every score
    /// leaves the softmax unchanged.
    fn attention(&mut self, name: &str, width: usize) {
        self.linear(&format!("{name}.q"), width, width);
        self.push(format!("{name}.k.w"), vec![width, width], InitKind::Xavier);
        self.linear(&format!("{name}.v"), width, width);
        self.linear(&format!("{name}.o"), width, width);
    }
}

fn layout(shape: &ShapeConfig) -> [Layout; 4] {
    let (e, f, v) = (shape.embed_dim, shape.ffn_width, shape.vocab_size);
    let emb = InitKind::Normal(1.0 / (e as f64).sqrt());

    let mut enc = Layout::default();
    enc.push("embedding".into(), vec![v, e], emb);
    for l in 0..shape.num_layers {
        enc.attention(&format!("layer{l}.attn"), e);
        enc.norm(&format!("layer{l}.norm1"), e);
        enc.linear(&format!("layer{l}.ffn1"), e, f);
        enc.linear(&format!("layer{l}.ffn2"), f, e);
        enc.norm(&format!("layer{l}.norm2"), e);
    }

    let two_c = 2 * shape.symbols_per_token;
    let mut chenc = Layout::default();
    chenc.linear("dense", e, two_c);
    let mut chdec = Layout::default();
    chdec.linear("dense", two_c, shape.feature_dim);

    let mut dec = Layout::default();
    dec.push("embedding".into(), vec![v, e], emb);
    if shape.feature_dim != e {
        dec.linear("memory_proj", shape.feature_dim, e);
    }
    for l in 0..shape.num_layers {
        dec.attention(&format!("layer{l}.self_attn"), e);
        dec.norm(&format!("layer{l}.norm1"), e);
        dec.attention(&format!("layer{l}.cross_attn"), e);
        dec.norm(&format!("layer{l}.norm2"), e);
        dec.linear(&format!("layer{l}.ffn1"), e, f);
        dec.linear(&format!("layer{l}.ffn2"), f, e);
        dec.norm(&format!("layer{l}.norm3"), e);
    }
    dec.linear("output", e, v);
    [enc, chenc, chdec, dec]
}

fn materialize<R: Rng>(layout: &Layout, rng: &mut R) -> ParamSet {
    let mut set = ParamSet::new();
    for (name, shape, kind) in &layout.entries {
        let t = match *kind {
            InitKind::Xavier => {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
            }
            InitKind::Normal(sd) => {
                let dist = Normal::new(0.0, sd).expect("positive sd");
                Tensor::from_fn(shape, |_| dist.sample(rng))
            }
            InitKind::Zeros => Tensor::zeros(shape),
            InitKind::Ones => Tensor::ones(shape),
        };
        set.insert(name.clone(), t);
    }
    set
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transceiver {
    shape: ShapeConfig,
    params: TransceiverParams,
}

impl Transceiver {
    /// Fresh parameters, deterministic in `seed`: Xavier-uniform weights,
    /// zero biases, unit norm gains, normal embeddings.
    pub fn new(shape: ShapeConfig, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = rng_from(derive_seed(seed, &[stream::INIT]));
        let [enc, chenc, chdec, dec] = layout(&shape).map(|l| materialize(&l, &mut rng));
        Ok(Transceiver {
            shape,
            params: TransceiverParams {
                semantic_encoder: enc,
                channel_encoder: chenc,
                channel_decoder: chdec,
                semantic_decoder: dec,
            },
        })
    }

    /// Reassembles a model from loaded parameters, checking every tensor
    /// against the layout [`Transceiver::new`] would produce.
    pub fn from_parts(shape: ShapeConfig, params: TransceiverParams) -> Result<Self> {
        shape.validate()?;
        for (want, got) in layout(&shape).iter().zip(params.groups()) {
            if want.entries.len() != got.len() {
                return Err(Error::Format("parameter names do not match the model layout".into()));
            }
            for ((name, dims, _), (got_name, t)) in want.entries.iter().zip(got.iter()) {
                if name != got_name {
                    return Err(Error::Format("parameter names do not match the model layout".into()));
                }
                if dims.as_slice() != t.shape() {
                    return Err(Error::Format(format!(
                        "{name}: expected shape {dims:?}, found {:?}",
                        t.shape()
                    )));
                }
            }
        }
        Ok(Transceiver { shape, params })
    }

    pub fn shape(&self) -> &ShapeConfig {
        &self.shape
    }

    pub fn params(&self) -> &TransceiverParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut TransceiverParams {
        &mut self.params
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape, requires_grad: bool) -> BoundTransceiver<'a> {
        BoundTransceiver {
            shape: self.shape,
            semantic_encoder: self.params.semantic_encoder.bind(tape, requires_grad),
            channel_encoder: self.params.channel_encoder.bind(tape, requires_grad),
            channel_decoder: self.params.channel_decoder.bind(tape, requires_grad),
            semantic_decoder: self.params.semantic_decoder.bind(tape, requires_grad),
        }
    }
}

impl Transceiver {
    /// Uses `vars`, already on a tape, as the parameters. They must follow
    /// the order of [`TransceiverParams::tensors`].
    pub fn attach(&self, vars: &[Var]) -> Result<BoundTransceiver<'_>> {
        let want = self.params.groups().iter().map(|g| g.len()).sum::<usize>();
        if vars.len() != want {
            return Err(Error::Contract(format!(
                "{} variables for {want} parameters",
                vars.len()
            )));
        }
        let [a, b, c, d] = self.params.groups();
        let (va, rest) = vars.split_at(a.len());
        let (vb, rest) = rest.split_at(b.len());
        let (vc, vd) = rest.split_at(c.len());
        Ok(BoundTransceiver {
            shape: self.shape,
            semantic_encoder: a.attach(va).expect("split by length"),
            channel_encoder: b.attach(vb).expect("split by length"),
            channel_decoder: c.attach(vc).expect("split by length"),
            semantic_decoder: d.attach(vd).expect("split by length"),
        })
    }
}

/// A [`Transceiver`] with its parameters placed on a tape.
pub struct BoundTransceiver<'a> {
    pub shape: ShapeConfig,
    pub semantic_encoder: Bound<'a>,
    pub channel_encoder: Bound<'a>,
    pub channel_decoder: Bound<'a>,
    pub semantic_decoder: Bound<'a>,
}

impl BoundTransceiver<'_> {
    /// Every bound variable, in the order of [`TransceiverParams::tensors_mut`].
    pub fn vars(&self) -> Vec<Var> {
        [
            &self.semantic_encoder,
            &self.channel_encoder,
            &self.channel_decoder,
            &self.semantic_decoder,
        ]
        .iter()
        .flat_map(|b| b.vars().iter().copied())
        .collect()
    }

    /// Token batch to features `u[B×L×E]`.
    pub fn semantic_encode(&self, tape: &mut Tape, batch: &TokenBatch) -> Result<Var> {
        let p = &self.semantic_encoder;
        let (b, l) = (batch.rows(), batch.seq_len());
        check_ids(batch.ids(), self.shape.vocab_size)?;
        let mut x = embed(tape, p.var("embedding"), batch.ids(), b, l, self.shape.embed_dim)?;
        let mask = key_padding_mask(batch, self.shape.num_heads);
        for layer in 0..self.shape.num_layers {
            let name = format!("layer{layer}");
            let a = attention(
                tape,
                p,
                &format!("{name}.attn"),
                x,
                x,
                self.shape.num_heads,
                Some(&mask),
            )?;
            let r = tape.add(x, a)?;
            x = layer_norm(tape, p, &format!("{name}.norm1"), r)?;
            let f = feed_forward(tape, p, &name, x)?;
            let r = tape.add(x, f)?;
            x = layer_norm(tape, p, &format!("{name}.norm2"), r)?;
        }
        Ok(x)
    }

    /// `u[B×L×E]` to unit-power symbols `x[B×M×2]`.
    pub fn channel_encode(&self, tape: &mut Tape, u: Var) -> Result<Var> {
        let p = &self.channel_encoder;
        let s = tape.shape(u).to_vec();
        let h = tape.linear(u, p.var("dense.w"), p.var("dense.b"))?;
        let raw = tape.reshape(h, &[s[0], s[1] * self.shape.symbols_per_token, 2])?;
        power_normalize(tape, raw)
    }

    /// Received symbols `y[B×M×2]` to `v̂[B×L×V_feat]`.
    pub fn channel_decode(&self, tape: &mut Tape, y: Var) -> Result<Var> {
        let p = &self.channel_decoder;
        let s = tape.shape(y).to_vec();
        let c = self.shape.symbols_per_token;
        if s.len() != 3 || s[2] != 2 || !s[1].is_multiple_of(c) {
            return Err(Error::Contract(format!("channel decoder input {s:?}")));
        }
        let tokens = tape.reshape(y, &[s[0], s[1] / c, 2 * c])?;
        Ok(tape.linear(tokens, p.var("dense.w"), p.var("dense.b"))?)
    }

    /// Next-token logits `[B×T×V]` for the prefix `prefix[B×T]`, attending
    /// causally over the prefix and freely over `v̂`.
    pub fn semantic_decode(&self, tape: &mut Tape, v_hat: Var, prefix: &[usize], t: usize) -> Result<Var> {
        let p = &self.semantic_decoder;
        let vs = tape.shape(v_hat).to_vec();
        let b = vs[0];
        if prefix.len() != b * t || t == 0 {
            return Err(Error::Contract(format!("prefix of {} ids for {b}×{t}", prefix.len())));
        }
        check_ids(prefix, self.shape.vocab_size)?;
        let memory = if self.shape.feature_dim != self.shape.embed_dim {
            tape.linear(v_hat, p.var("memory_proj.w"), p.var("memory_proj.b"))?
        } else {
            v_hat
        };
        let heads = self.shape.num_heads;
        let causal = causal_mask(b, t, heads);
        let mut x = embed(tape, p.var("embedding"), prefix, b, t, self.shape.embed_dim)?;
        for layer in 0..self.shape.num_layers {
            let name = format!("layer{layer}");
            let a = attention(tape, p, &format!("{name}.self_attn"), x, x, heads, Some(&causal))?;
            let r = tape.add(x, a)?;
            x = layer_norm(tape, p, &format!("{name}.norm1"), r)?;
            let c = attention(tape, p, &format!("{name}.cross_attn"), x, memory, heads, None)?;
            let r = tape.add(x, c)?;
            x = layer_norm(tape, p, &format!("{name}.norm2"), r)?;
            let f = feed_forward(tape, p, &name, x)?;
            let r = tape.add(x, f)?;
            x = layer_norm(tape, p, &format!("{name}.norm3"), r)?;
        }
        Ok(tape.linear(x, p.var("output.w"), p.var("output.b"))?)
    }
}

/// Scales all symbols by `1/sqrt(max(mean power, POWER_FLOOR))`, the mean
/// taken over the whole batch.
pub fn power_normalize(tape: &mut Tape, raw: Var) -> Result<Var> {
    Ok(tape.power_normalize(raw, POWER_FLOOR)?)
}

/// Batch-mean power of a `[..×2]` symbol tensor.
pub fn mean_power(symbols: &Tensor) -> f64 {
    symbols.sq_norm() / (symbols.len() / 2) as f64
}

/// Autoregressive argmax decoding from `START`.
///
/// Each row stops at `END`; a row still open after `max_len − 1` ids gets
/// `END` in its last slot. `PAD` and `START` are never emitted.
pub fn greedy_decode(model: &Transceiver, v_hat: &Tensor, max_len: usize) -> Result<TokenBatch> {
    let b = v_hat.shape()[0];
    let v = model.shape.vocab_size;
    if max_len < 2 {
        return Err(Error::Contract("max_len below 2".into()));
    }
    let mut rows: Vec<Vec<usize>> = vec![vec![START]; b];
    let mut done = vec![false; b];
    for t in 1..max_len {
        if done.iter().all(|&d| d) {
            break;
        }
        let prefix: Vec<usize> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let vh = tape.constant(v_hat.clone());
        let logits = bound.semantic_decode(&mut tape, vh, &prefix, t)?;
        let data = tape.value(logits).data();
        for (r, row) in rows.iter_mut().enumerate() {
            if done[r] {
                row.push(PAD);
                continue;
            }
            let off = (r * t + t - 1) * v;
            let next = if t == max_len - 1 {
                END
            } else {
                argmax_token(&data[off..off + v])
            };
            row.push(next);
            done[r] = next == END;
        }
    }
    for row in &mut rows {
        row.resize(max_len, PAD);
    }
    TokenBatch::new(rows)
}

fn argmax_token(logits: &[f64]) -> usize {
    let mut best = END;
    for (i, &l) in logits.iter().enumerate() {
        if i != PAD && i != START && l > logits[best] {
            best = i;
        }
    }
    best
}

fn check_ids(ids: &[usize], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= vocab) {
        Some(i) => Err(Error::Contract(format!("token id {i} outside vocabulary of {vocab}"))),
        None => Ok(()),
    }
}

fn positional_encoding(len: usize, width: usize) -> Tensor {
    Tensor::from_fn(&[len, width], |i| {
        let (pos, j) = ((i / width) as f64, i % width);
        let rate = 10000f64.powf(-((j - j % 2) as f64) / width as f64);
        if j % 2 == 0 {
            (pos * rate).sin()
        } else {
            (pos * rate).cos()
        }
    })
}

/// Scaled embedding plus sinusoidal positions, `[B×L×E]`.
fn embed(tape: &mut Tape, table: Var, ids: &[usize], b: usize, l: usize, e: usize) -> Result<Var> {
    let emb = tape.embedding(table, ids, &[b, l])?;
    let emb = tape.scale(emb, (e as f64).sqrt());
    let pe = positional_encoding(l, e);
    let mut data = Vec::with_capacity(b * l * e);
    for _ in 0..b {
        data.extend_from_slice(pe.data());
    }
    let pe = tape.constant(Tensor::new(vec![b, l, e], data)?);
    Ok(tape.add(emb, pe)?)
}

/// Additive mask hiding `PAD` keys; position 0 is always visible so every
/// query row has at least one key.
fn key_padding_mask(batch: &TokenBatch, heads: usize) -> Tensor {
    let (b, l) = (batch.rows(), batch.seq_len());
    let mut data = Vec::with_capacity(b * heads * l * l);
    for r in 0..b {
        let row = batch.row(r);
        for _ in 0..heads * l {
            data.extend(
                row.iter()
                    .enumerate()
                    .map(|(j, &id)| if j > 0 && id == PAD { MASKED } else { 0.0 }),
            );
        }
    }
    Tensor::new(vec![b * heads, l, l], data).expect("mask shape")
}

fn causal_mask(b: usize, t: usize, heads: usize) -> Tensor {
    Tensor::from_fn(&[b * heads, t, t], |i| {
        let (q, k) = ((i / t) % t, i % t);
        if k > q {
            MASKED
        } else {
            0.0
        }
    })
}

fn attention(
    tape: &mut Tape,
    p: &Bound<'_>,
    name: &str,
    query: Var,
    source: Var,
    heads: usize,
    mask: Option<&Tensor>,
) -> Result<Var> {
    let w = |s: &str| format!("{name}.{s}");
    let q = tape.linear(query, p.var(&w("q.w")), p.var(&w("q.b")))?;
    let k = tape.dense(source, p.var(&w("k.w")))?;
    let v = tape.linear(source, p.var(&w("v.w")), p.var(&w("v.b")))?;
    let d = tape.shape(q)[2] / heads;
    let (q, k, v) = (
        tape.split_heads(q, heads)?,
        tape.split_heads(k, heads)?,
        tape.split_heads(v, heads)?,
    );
    let scores = tape.bmm(q, k, true)?;
    let mut scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
    if let Some(m) = mask {
        let m = tape.constant(m.clone());
        scores = tape.add(scores, m)?;
    }
    let weights = tape.softmax(scores);
    let ctx = tape.bmm(weights, v, false)?;
    let ctx = tape.merge_heads(ctx, heads)?;
    Ok(tape.linear(ctx, p.var(&w("o.w")), p.var(&w("o.b")))?)
}

fn feed_forward(tape: &mut Tape, p: &Bound<'_>, layer: &str, x: Var) -> Result<Var> {
    let h = tape.linear(x, p.var(&format!("{layer}.ffn1.w")), p.var(&format!("{layer}.ffn1.b")))?;
    let h = tape.gelu(h);
    Ok(tape.linear(h, p.var(&format!("{layer}.ffn2.w")), p.var(&format!("{layer}.ffn2.b")))?)
}

fn layer_norm(tape: &mut Tape, p: &Bound<'_>, name: &str, x: Var) -> Result<Var> {
    Ok(tape.layer_norm(
        x,
        p.var(&format!("{name}.gain")),
        p.var(&format!("{name}.bias")),
        LN_EPS,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ShapeConfig {
        ShapeConfig {
            batch_size: 3,
            max_len: 6,
            embed_dim: 8,
            feature_dim: 8,
            symbols_per_token: 2,
            num_layers: 1,
            num_heads: 2,
            ffn_width: 12,
            vocab_size: 11,
        }
    }

    #[test]
    fn shape_validation() {
        assert!(tiny().validate().is_ok());
        let bad = ShapeConfig { num_heads: 3, ..tiny() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let v = tiny().to_values();
        assert_eq!(ShapeConfig::from_values(&v).unwrap(), tiny());
        assert!(ShapeConfig::from_values(&v[..4]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let a = Transceiver::new(tiny(), 5).unwrap();
        assert_eq!(a, Transceiver::new(tiny(), 5).unwrap());
        assert_ne!(a, Transceiver::new(tiny(), 6).unwrap());
        assert!(a.params().is_finite());
    }

    #[test]
    fn feature_projection_when_widths_differ() {
        let shape = ShapeConfig {
            feature_dim: 6,
            ..tiny()
        };
        let m = Transceiver::new(shape, 1).unwrap();
        assert!(m.params().semantic_decoder.get("memory_proj.w").is_some());
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, false);
        let y = tape.constant(Tensor::zeros(&[1, 12, 2]));
        let v = bound.channel_decode(&mut tape, y).unwrap();
        assert_eq!(tape.shape(v), &[1, 6, 6]);
        let logits = bound.semantic_decode(&mut tape, v, &[START, 5], 2).unwrap();
        assert_eq!(tape.shape(logits), &[1, 2, 11]);
    }

    #[test]
    fn argmax_skips_pad_and_start() {
        assert_eq!(argmax_token(&[9.0, 8.0, 1.0, 0.5]), END);
        assert_eq!(argmax_token(&[9.0, 8.0, 1.0, 1.5]), 3);
    }
}
