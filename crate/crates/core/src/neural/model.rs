use std::fmt;
use std::str::FromStr;

use crate::dataset::Cluster;
use crate::error::{Error, Result};
use crate::scalar::{FlushDenormals, Scalar};
use crate::seqcore::{argmax4, one_hot_into, Base, DnaSequence};

use super::graph::{Graph, Var};
use super::params::{AdamConfig, Init, ParamId, ParamStore};
use super::tensor::Tensor;

pub const LOSS_EPS: f64 = 1e-12;

/// Model variants compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Attention-weighted pooling and conformer encoder.
    Full,
    /// Pooled feature is the plain sum of the one-hot reads.
    NoAttention,
    /// Every read gets weight `1/N`.
    UniformAttention,
    /// Conformer blocks replaced by pre-norm transformer blocks.
    Transformer,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoAttention, Variant::UniformAttention, Variant::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAttention => "no-attention",
            Variant::UniformAttention => "uniform-attention",
            Variant::Transformer => "transformer",
        }
    }

    fn scores_reads(self) -> bool {
        matches!(self, Variant::Full | Variant::Transformer)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?} (expected one of full, no-attention, uniform-attention, transformer)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub conv_kernel: usize,
    pub n_blocks: usize,
    pub h_att: usize,
    pub h_lstm: usize,
    pub variant: Variant,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            len: 60,
            d_model: 128,
            heads: 8,
            conv_kernel: 31,
            n_blocks: 2,
            h_att: 64,
            h_lstm: 128,
            variant: Variant::Full,
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.98,
            l2: 1e-4,
            batch_size: 64,
            epochs: 50,
            seed: 0,
        }
    }
}

/// Keys that determine the parameter layout; checkpoints must agree on these.
pub const ARCHITECTURE_KEYS: [&str; 8] = ["len", "d_model", "heads", "conv_kernel", "n_blocks", "h_att", "h_lstm", "variant"];

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.len == 0 || self.d_model == 0 || self.heads == 0 || self.h_lstm == 0 || self.h_att == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return bad(format!("d_model {} is not divisible by heads {}", self.d_model, self.heads));
        }
        if self.h_att >= self.len {
            return bad(format!("h_att {} must be smaller than len {}", self.h_att, self.len));
        }
        if self.conv_kernel % 2 == 0 {
            return bad(format!("conv_kernel {} must be odd", self.conv_kernel));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.l2 >= 0.0) {
            return bad("optimizer settings out of range".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, l2: self.l2, eps: 1e-8 }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let p = |k: &str, v: String| (k.to_string(), v);
        vec![
            p("len", self.len.to_string()),
            p("d_model", self.d_model.to_string()),
            p("heads", self.heads.to_string()),
            p("conv_kernel", self.conv_kernel.to_string()),
            p("n_blocks", self.n_blocks.to_string()),
            p("h_att", self.h_att.to_string()),
            p("h_lstm", self.h_lstm.to_string()),
            p("variant", self.variant.to_string()),
            p("lr", self.lr.to_string()),
            p("beta1", self.beta1.to_string()),
            p("beta2", self.beta2.to_string()),
            p("l2", self.l2.to_string()),
            p("batch_size", self.batch_size.to_string()),
            p("epochs", self.epochs.to_string()),
            p("seed", self.seed.to_string()),
        ]
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<N: FromStr>(key: &str, v: &str) -> Result<N> {
            v.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad value {v:?} for {key}")))
        }
        match key {
            "len" => self.len = num(key, value)?,
            "d_model" => self.d_model = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "conv_kernel" => self.conv_kernel = num(key, value)?,
            "n_blocks" => self.n_blocks = num(key, value)?,
            "h_att" => self.h_att = num(key, value)?,
            "h_lstm" => self.h_lstm = num(key, value)?,
            "variant" => self.variant = value.trim().parse()?,
            "lr" => self.lr = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "l2" => self.l2 = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// First architecture key whose value differs from `other`.
    pub fn architecture_mismatch(&self, other: &ModelConfig) -> Option<Error> {
        let (a, b) = (self.to_pairs(), other.to_pairs());
        ARCHITECTURE_KEYS.iter().find_map(|key| {
            let get = |p: &[(String, String)]| p.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap_or_default();
            let (x, y) = (get(&a), get(&b));
            (x != y).then(|| Error::ConfigMismatch { key: key.to_string(), expected: x, found: y })
        })
    }
}

struct Ffn {
    ln: (ParamId, ParamId),
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

struct Mhsa {
    ln: (ParamId, ParamId),
    q: (ParamId, ParamId),
    k: (ParamId, ParamId),
    v: (ParamId, ParamId),
    o: (ParamId, ParamId),
}

struct ConvModule {
    ln: (ParamId, ParamId),
    pw1: (ParamId, ParamId),
    dw: (ParamId, ParamId),
    pw2: (ParamId, ParamId),
}

struct Block {
    ffn1: Ffn,
    mhsa: Mhsa,
    conv: Option<ConvModule>,
    ffn2: Option<Ffn>,
}

struct Scorer {
    conv1: ParamId,
    conv2: ParamId,
    w: ParamId,
    b: ParamId,
    v: ParamId,
    k: ParamId,
}

struct Layout {
    scorer: Option<Scorer>,
    up_w: ParamId,
    up_b: ParamId,
    up_conv_w: ParamId,
    up_conv_b: ParamId,
    blocks: Vec<Block>,
    w_ih: ParamId,
    w_hh: ParamId,
    b_lstm: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// Reads of `batch` clusters that all have `n` members, one-hot encoded to
/// `len` positions: `(batch, n, len, 4)`, plus optional reference labels.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub batch: usize,
    pub n: usize,
    pub len: usize,
    pub reads: Vec<T>,
    pub labels: Option<Vec<T>>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_clusters(clusters: &[&Cluster], len: usize) -> Result<Self> {
        let n = clusters.first().ok_or(Error::EmptyTrainingSet)?.size();
        if n == 0 {
            return Err(Error::EmptyCluster);
        }
        if let Some(c) = clusters.iter().find(|c| c.size() != n) {
            return Err(Error::LengthMismatch(n, c.size()));
        }
        let stride = 4 * len;
        let mut reads = vec![T::zero(); clusters.len() * n * stride];
        for (ci, c) in clusters.iter().enumerate() {
            for (ri, r) in c.reads.iter().enumerate() {
                let off = (ci * n + ri) * stride;
                one_hot_into(r, len, &mut reads[off..off + stride]);
            }
        }
        let labels = if clusters.iter().all(|c| c.reference.is_some()) {
            let mut l = vec![T::zero(); clusters.len() * stride];
            for (ci, c) in clusters.iter().enumerate() {
                one_hot_into(c.reference.as_ref().expect("checked"), len, &mut l[ci * stride..(ci + 1) * stride]);
            }
            Some(l)
        } else {
            None
        };
        Ok(Self { batch: clusters.len(), n, len, reads, labels })
    }
}

/// Nodes of interest after one forward pass.
pub struct Forward {
    /// Per-position base probabilities `(B, L, 4)`.
    pub probs: Var,
    /// Read weights `(B, N)`.
    pub alpha: Var,
    /// Weighted sum of the one-hot reads `(B, L, 4)`.
    pub pooled: Var,
    pub loss: Option<Var>,
    /// Self-attention nodes, one per block.
    pub attention: Vec<Var>,
}

/// Attention-pooled, conformer-encoded, LSTM-decoded consensus model.
pub struct RrccModel<T> {
    config: ModelConfig,
    store: ParamStore<T>,
    layout: Layout,
}

fn ln_pair<T: Scalar>(s: &mut ParamStore<T>, prefix: &str, d: usize) -> (ParamId, ParamId) {
    (s.add(&format!("{prefix}.ln.scale"), &[d], Init::Ones), s.add(&format!("{prefix}.ln.offset"), &[d], Init::Zeros))
}

fn dense<T: Scalar>(s: &mut ParamStore<T>, prefix: &str, i: usize, o: usize) -> (ParamId, ParamId) {
    (s.add(&format!("{prefix}.weight"), &[i, o], Init::FanIn), s.add(&format!("{prefix}.bias"), &[o], Init::Zeros))
}

fn ffn<T: Scalar>(s: &mut ParamStore<T>, prefix: &str, d: usize) -> Ffn {
    let ln = ln_pair(s, prefix, d);
    let (w1, b1) = dense(s, &format!("{prefix}.fc1"), d, 2 * d);
    let (w2, b2) = dense(s, &format!("{prefix}.fc2"), 2 * d, d);
    Ffn { ln, w1, b1, w2, b2 }
}

impl<T: Scalar> RrccModel<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (d, l) = (config.d_model, config.len);
        let mut s = ParamStore::new(config.seed);
        let scorer = config.variant.scores_reads().then(|| Scorer {
            conv1: s.add("attn.conv1.weight", &[3, 4, 2], Init::FanIn),
            conv2: s.add("attn.conv2.weight", &[5, 2, 1], Init::FanIn),
            w: s.add("attn.proj.weight", &[l, config.h_att], Init::FanIn),
            b: s.add("attn.proj.bias", &[config.h_att], Init::Zeros),
            v: s.add("attn.score.weight", &[config.h_att, 1], Init::FanIn),
            k: s.add("attn.score.bias", &[1], Init::Zeros),
        });
        let (up_w, up_b) = dense(&mut s, "up.linear", 4, d);
        let up_conv_w = s.add("up.conv.weight", &[3, d, d], Init::FanIn);
        let up_conv_b = s.add("up.conv.bias", &[d], Init::Zeros);
        let transformer = config.variant == Variant::Transformer;
        let blocks = (0..config.n_blocks)
            .map(|i| {
                let p = format!("block{i}");
                let ffn1 = ffn(&mut s, &format!("{p}.ffn1"), d);
                let mhsa = Mhsa {
                    ln: ln_pair(&mut s, &format!("{p}.mhsa"), d),
                    q: dense(&mut s, &format!("{p}.mhsa.query"), d, d),
                    k: dense(&mut s, &format!("{p}.mhsa.key"), d, d),
                    v: dense(&mut s, &format!("{p}.mhsa.value"), d, d),
                    o: dense(&mut s, &format!("{p}.mhsa.out"), d, d),
                };
                let conv = (!transformer).then(|| ConvModule {
                    ln: ln_pair(&mut s, &format!("{p}.conv"), d),
                    pw1: dense(&mut s, &format!("{p}.conv.pointwise1"), d, d),
                    dw: (
                        s.add(&format!("{p}.conv.depthwise.weight"), &[config.conv_kernel, d], Init::FanIn),
                        s.add(&format!("{p}.conv.depthwise.bias"), &[d], Init::Zeros),
                    ),
                    pw2: dense(&mut s, &format!("{p}.conv.pointwise2"), d, d),
                });
                let ffn2 = (!transformer).then(|| ffn(&mut s, &format!("{p}.ffn2"), d));
                Block { ffn1, mhsa, conv, ffn2 }
            })
            .collect();
        let h = config.h_lstm;
        let w_ih = s.add("lstm.w_ih", &[d, 4 * h], Init::FanIn);
        let w_hh = s.add("lstm.w_hh", &[h, 4 * h], Init::FanIn);
        let b_lstm = s.add("lstm.bias", &[4 * h], Init::Zeros);
        let (out_w, out_b) = dense(&mut s, "out", h, 4);
        let layout = Layout { scorer, up_w, up_b, up_conv_w, up_conv_b, blocks, w_ih, w_hh, b_lstm, out_w, out_b };
        Ok(Self { config, store: s, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    fn p(&self, g: &mut Graph<T>, id: ParamId) -> Var {
        g.param(&self.store, id)
    }

    fn dense(&self, g: &mut Graph<T>, x: Var, (w, b): (ParamId, ParamId)) -> Result<Var> {
        let (w, b) = (self.p(g, w), self.p(g, b));
        g.linear(x, w, b)
    }

    fn norm(&self, g: &mut Graph<T>, x: Var, (s, o): (ParamId, ParamId)) -> Result<Var> {
        let (s, o) = (self.p(g, s), self.p(g, o));
        g.layer_norm(x, s, o)
    }

    fn ffn(&self, g: &mut Graph<T>, x: Var, f: &Ffn) -> Result<Var> {
        let h = self.norm(g, x, f.ln)?;
        let h = self.dense(g, h, (f.w1, f.b1))?;
        let h = g.silu(h);
        self.dense(g, h, (f.w2, f.b2))
    }

    fn mhsa(&self, g: &mut Graph<T>, x: Var, m: &Mhsa) -> Result<(Var, Var)> {
        let h = self.norm(g, x, m.ln)?;
        let q = self.dense(g, h, m.q)?;
        let k = self.dense(g, h, m.k)?;
        let v = self.dense(g, h, m.v)?;
        let a = g.multi_head_attention(q, k, v, self.config.heads)?;
        Ok((self.dense(g, a, m.o)?, a))
    }

    fn conv_module(&self, g: &mut Graph<T>, x: Var, c: &ConvModule) -> Result<Var> {
        let h = self.norm(g, x, c.ln)?;
        let h = self.dense(g, h, c.pw1)?;
        let (w, b) = (self.p(g, c.dw.0), self.p(g, c.dw.1));
        let h = g.depthwise_conv(h, w, b)?;
        let h = g.silu(h);
        self.dense(g, h, c.pw2)
    }

    /// Conformer (or transformer) block on `(B, L, d)`; returns the output
    /// and the self-attention node.
    fn block(&self, g: &mut Graph<T>, x: Var, b: &Block) -> Result<(Var, Var)> {
        let half = T::from_f64_lossy(0.5);
        let (x, attn) = match (&b.conv, &b.ffn2) {
            (Some(conv), Some(ffn2)) => {
                let f = self.ffn(g, x, &b.ffn1)?;
                let f = g.scale(f, half);
                let x = g.add(x, f)?;
                let (a, attn) = self.mhsa(g, x, &b.mhsa)?;
                let x = g.add(x, a)?;
                let c = self.conv_module(g, x, conv)?;
                let x = g.add(x, c)?;
                let f = self.ffn(g, x, ffn2)?;
                let f = g.scale(f, half);
                (g.add(x, f)?, attn)
            }
            _ => {
                let (a, attn) = self.mhsa(g, x, &b.mhsa)?;
                let x = g.add(x, a)?;
                let f = self.ffn(g, x, &b.ffn1)?;
                (g.add(x, f)?, attn)
            }
        };
        Ok((x, attn))
    }

    /// Apply encoder block `index` to `x: (B, L, d_model)`.
    pub fn encoder_block(&self, g: &mut Graph<T>, x: Var, index: usize) -> Result<Var> {
        let blk = self.layout.blocks.get(index).ok_or_else(|| Error::InvalidConfig(format!("no encoder block {index}")))?;
        let s = g.value(x).shape();
        if s.len() != 3 || s[2] != self.config.d_model {
            return Err(Error::ShapeMismatch { expected: vec![0, 0, self.config.d_model], found: s.to_vec() });
        }
        Ok(self.block(g, x, blk)?.0)
    }

    /// Read weights `(B, N)` from the scorer, or the fixed weights of the
    /// attention-free variants.
    fn read_weights(&self, g: &mut Graph<T>, reads: Var, batch: &Batch<T>) -> Result<Var> {
        let (b, n, l) = (batch.batch, batch.n, batch.len);
        let Some(sc) = &self.layout.scorer else {
            let w = match self.config.variant {
                Variant::NoAttention => T::one(),
                _ => T::one() / T::from_usize(n).expect("cluster size"),
            };
            return Ok(g.input(Tensor::full(&[b, n], w)));
        };
        let y = g.reshape(reads, &[b * n, l, 4])?;
        let c1 = self.p(g, sc.conv1);
        let y = g.conv1d(y, c1, None)?;
        let c2 = self.p(g, sc.conv2);
        let y = g.conv1d(y, c2, None)?;
        let y = g.reshape(y, &[b * n, l])?;
        let h = self.dense(g, y, (sc.w, sc.b))?;
        let h = g.tanh(h);
        let e = self.dense(g, h, (sc.v, sc.k))?;
        let e = g.reshape(e, &[b, n])?;
        Ok(g.softmax_last(e))
    }

    /// Record the full forward pass of one size-homogeneous batch on `g`.
    pub fn forward(&self, g: &mut Graph<T>, batch: &Batch<T>) -> Result<Forward> {
        let (b, n, l, d) = (batch.batch, batch.n, batch.len, self.config.d_model);
        if l != self.config.len {
            return Err(Error::InconsistentLength { expected: self.config.len, found: l });
        }
        if b == 0 || n == 0 {
            return Err(Error::EmptyCluster);
        }
        let reads = g.input(Tensor::from_vec(&[b, n, l, 4], batch.reads.clone())?);
        let alpha = self.read_weights(g, reads, batch)?;
        if self.config.variant == Variant::UniformAttention {
            let inv = 1.0 / n as f64;
            let tol = 4.0 * T::epsilon().as_f64();
            debug_assert!(g.value(alpha).data().iter().all(|a| (a.as_f64() - inv).abs() <= tol));
        }
        let pooled = g.weighted_set_sum(alpha, reads)?;
        let x = self.dense(g, pooled, (self.layout.up_w, self.layout.up_b))?;
        let (cw, cb) = (self.p(g, self.layout.up_conv_w), self.p(g, self.layout.up_conv_b));
        let mut x = g.conv1d(x, cw, Some(cb))?;
        debug_assert_eq!(g.value(x).shape(), [b, l, d]);
        let mut attention = Vec::with_capacity(self.layout.blocks.len());
        for blk in &self.layout.blocks {
            let (y, a) = self.block(g, x, blk)?;
            x = y;
            attention.push(a);
        }
        let (wi, wh, bl) = (self.p(g, self.layout.w_ih), self.p(g, self.layout.w_hh), self.p(g, self.layout.b_lstm));
        let h = g.lstm(x, wi, wh, bl)?;
        let logits = self.dense(g, h, (self.layout.out_w, self.layout.out_b))?;
        let probs = g.softmax_last(logits);
        let loss = match &batch.labels {
            Some(lab) => Some(g.cross_entropy(probs, &Tensor::from_vec(&[b, l, 4], lab.clone())?, T::from_f64_lossy(LOSS_EPS))?),
            None => None,
        };
        Ok(Forward { probs, alpha, pooled, loss, attention })
    }

    /// Reconstruct one cluster: exactly `config.len` bases.
    pub fn reconstruct(&self, cluster: &Cluster) -> Result<DnaSequence> {
        Ok(self.predict(&[cluster])?.pop().expect("one prediction").sequence)
    }

    /// Forward pass without labels over clusters of equal size.
    pub fn predict(&self, clusters: &[&Cluster]) -> Result<Vec<Prediction>> {
        if clusters.iter().any(|c| c.reads.is_empty()) {
            return Err(Error::EmptyCluster);
        }
        let mut batch = Batch::from_clusters(clusters, self.config.len)?;
        batch.labels = None;
        let _ftz = FlushDenormals::new();
        let mut g = Graph::new();
        let f = self.forward(&mut g, &batch)?;
        Ok(decode_batch(&g, &f, &batch))
    }

    /// Predictions for arbitrary clusters, batched by size; output order matches input.
    pub fn predict_all(&self, clusters: &[Cluster]) -> Result<Vec<Prediction>> {
        let mut out: Vec<Option<Prediction>> = (0..clusters.len()).map(|_| None).collect();
        for group in crate::dataset::batch_by_size(clusters, self.config.batch_size.max(1)) {
            let refs: Vec<&Cluster> = group.iter().map(|&i| &clusters[i]).collect();
            for (i, p) in group.into_iter().zip(self.predict(&refs)?) {
                out[i] = Some(p);
            }
        }
        Ok(out.into_iter().map(|p| p.expect("every cluster predicted")).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub sequence: DnaSequence,
    /// Read weights in read order.
    pub alpha: Vec<f64>,
}

pub(crate) fn decode_batch<T: Scalar>(g: &Graph<T>, f: &Forward, batch: &Batch<T>) -> Vec<Prediction> {
    let probs = g.value(f.probs).data();
    let alpha = g.value(f.alpha).data();
    let l = batch.len;
    (0..batch.batch)
        .map(|b| Prediction {
            sequence: (0..l).map(|p| Base::from_index(argmax4(&probs[(b * l + p) * 4..(b * l + p + 1) * 4]))).collect(),
            alpha: alpha[b * batch.n..(b + 1) * batch.n].iter().map(|a| a.as_f64()).collect(),
        })
        .collect()
}

/// Mean cross-entropy of a `(L, 4)` probability grid against a one-hot label
/// grid, over the label's non-padding positions.
pub fn cross_entropy_loss<T: Scalar>(pred: &crate::seqcore::BaseGrid<T>, label: &crate::seqcore::BaseGrid<T>) -> Result<T> {
    if pred.len() != label.len() {
        return Err(Error::LengthMismatch(pred.len(), label.len()));
    }
    let eps = T::from_f64_lossy(LOSS_EPS);
    let mut total = T::zero();
    let mut count = 0usize;
    for pos in 0..label.len() {
        if label.is_padding(pos) {
            continue;
        }
        count += 1;
        for (&y, &p) in label.column(pos).iter().zip(pred.column(pos)) {
            if !y.is_zero() {
                total -= y * (p + eps).ln();
            }
        }
    }
    Ok(if count == 0 { T::zero() } else { total / T::from_usize(count).expect("count") })
}

/// Adam step on a single parameter store using its accumulated gradients.
pub fn adam_step<T: Scalar>(params: &mut ParamStore<T>, config: &AdamConfig) {
    params.adam_step(config);
}
