use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::tape::{Mask, Params, Tape, Var};
use crate::{shape_err, LsSatError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LsSatConfig {
    pub raw_dim: usize,
    /// Dimension reduction factor; the attention width is `raw_dim / kappa`.
    pub kappa: usize,
    pub heads: usize,
    pub n_self: usize,
    pub n_cross: usize,
    /// Short window length.
    pub tau: usize,
    pub phases: usize,
    /// Identity projections, one head, no normalization and no residuals.
    pub literal: bool,
}

impl Default for LsSatConfig {
    fn default() -> Self {
        Self { raw_dim: 2048, kappa: 16, heads: 8, n_self: 4, n_cross: 8, tau: 20, phases: 10, literal: false }
    }
}

impl LsSatConfig {
    pub fn d(&self) -> usize {
        self.raw_dim / self.kappa.max(1)
    }

    pub fn heads_used(&self) -> usize {
        if self.literal {
            1
        } else {
            self.heads
        }
    }

    pub fn validate(&self) -> Result<(), LsSatError> {
        let bad = |m: String| Err(LsSatError::InvalidConfig(m));
        if self.kappa == 0 || self.raw_dim == 0 || !self.raw_dim.is_multiple_of(self.kappa) {
            return bad(format!("kappa {} must divide raw_dim {}", self.kappa, self.raw_dim));
        }
        if self.heads == 0 || !self.d().is_multiple_of(self.heads_used()) {
            return bad(format!("heads {} must divide d {}", self.heads, self.d()));
        }
        if self.tau == 0 || self.phases == 0 {
            return bad("tau and phases must be positive".into());
        }
        Ok(())
    }
}

/// Which self-attention stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelfStack {
    Long,
    Short,
}

#[derive(Clone, Debug, PartialEq)]
struct Proj {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    ln_q: Option<(usize, usize)>,
    /// Separate normalization of the key/value source in cross blocks.
    ln_kv: Option<(usize, usize)>,
    proj: Option<Proj>,
}

/// Result of one attention block: the output rows and the per-head
/// attention matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOutput {
    pub out: Array2<f64>,
    pub attn: Vec<Array2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsSat {
    cfg: LsSatConfig,
    pub(crate) params: Params,
    reduce_w: usize,
    reduce_b: usize,
    long: Vec<Block>,
    short: Vec<Block>,
    cross: Vec<Block>,
    st: Vec<Block>,
    head_ln: Option<(usize, usize)>,
    head_w: usize,
    head_b: usize,
}

pub(crate) struct KeyValue {
    pub k: Var,
    pub v: Var,
}

fn init(rng: &mut Xoshiro256PlusPlus, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let n = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| n.sample(rng))
}

impl LsSat {
    /// Fresh weights drawn from `seed`.
    pub fn new(cfg: LsSatConfig, seed: u64) -> Result<Self, LsSatError> {
        cfg.validate()?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let d = cfg.d();
        let mut p = Params::default();
        let reduce_w = p.push("reduce.w", init(&mut rng, cfg.raw_dim, d, cfg.raw_dim));
        let reduce_b = p.push("reduce.b", Array2::zeros((1, d)));
        let block = |p: &mut Params, rng: &mut Xoshiro256PlusPlus, name: String, cross: bool| {
            if cfg.literal {
                return Block { ln_q: None, ln_kv: None, proj: None };
            }
            let ln = |p: &mut Params, tag: &str| {
                (
                    p.push(format!("{name}.{tag}.g"), Array2::ones((1, d))),
                    p.push(format!("{name}.{tag}.b"), Array2::zeros((1, d))),
                )
            };
            let ln_q = Some(ln(p, "ln"));
            let ln_kv = cross.then(|| ln(p, "ln_kv"));
            let proj = Proj {
                wq: p.push(format!("{name}.wq"), init(rng, d, d, d)),
                wk: p.push(format!("{name}.wk"), init(rng, d, d, d)),
                wv: p.push(format!("{name}.wv"), init(rng, d, d, d)),
                wo: p.push(format!("{name}.wo"), init(rng, d, d, d)),
                bo: p.push(format!("{name}.bo"), Array2::zeros((1, d))),
            };
            Block { ln_q, ln_kv, proj: Some(proj) }
        };
        let long = (0..cfg.n_self).map(|i| block(&mut p, &mut rng, format!("long.{i}"), false)).collect();
        let short = (0..cfg.n_self).map(|i| block(&mut p, &mut rng, format!("short.{i}"), false)).collect();
        let cross = (0..cfg.n_cross).map(|i| block(&mut p, &mut rng, format!("cross.{i}"), true)).collect();
        let st = (0..cfg.n_cross).map(|i| block(&mut p, &mut rng, format!("st.{i}"), true)).collect();
        let head_ln = (!cfg.literal)
            .then(|| (p.push("head.ln.g", Array2::ones((1, d))), p.push("head.ln.b", Array2::zeros((1, d)))));
        let head_w = p.push("head.w", init(&mut rng, d, cfg.phases, d));
        let head_b = p.push("head.b", Array2::zeros((1, cfg.phases)));
        Ok(Self { cfg, params: p, reduce_w, reduce_b, long, short, cross, st, head_ln, head_w, head_b })
    }

    pub fn config(&self) -> &LsSatConfig {
        &self.cfg
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    // ---- building blocks on a tape ----

    fn ln(t: &mut Tape, x: Var, ln: Option<(usize, usize)>) -> Var {
        match ln {
            Some((g, b)) => {
                let (g, b) = (t.param(g), t.param(b));
                t.layer_norm(x, g, b)
            }
            None => x,
        }
    }

    fn norm_q(&self, t: &mut Tape, blk: &Block, x: Var) -> Var {
        Self::ln(t, x, blk.ln_q)
    }

    fn norm_kv(&self, t: &mut Tape, blk: &Block, x: Var) -> Var {
        Self::ln(t, x, blk.ln_kv.or(blk.ln_q))
    }

    fn project_kv(&self, t: &mut Tape, blk: &Block, normed: Var) -> KeyValue {
        match &blk.proj {
            Some(p) => {
                let (wk, wv) = (t.param(p.wk), t.param(p.wv));
                KeyValue { k: t.matmul(normed, wk), v: t.matmul(normed, wv) }
            }
            None => KeyValue { k: normed, v: normed },
        }
    }

    /// `resid + W_o · concat_h softmax(Q_h K_hᵀ / √d_h) V_h` with the query
    /// taken from the normalized `nq`. In literal mode: the bare attention.
    fn attend(&self, t: &mut Tape, blk: &Block, resid: Var, nq: Var, kv: &KeyValue, mask: Mask) -> (Var, Vec<Var>) {
        let q = match &blk.proj {
            Some(p) => {
                let wq = t.param(p.wq);
                t.matmul(nq, wq)
            }
            None => nq,
        };
        let heads = self.cfg.heads_used();
        let dh = self.cfg.d() / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        let mut attn = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, kv.k, kv.v)
            } else {
                (t.slice_cols(q, h * dh, dh), t.slice_cols(kv.k, h * dh, dh), t.slice_cols(kv.v, h * dh, dh))
            };
            let scores = t.matmul_t(qh, kh);
            let scores = t.scale(scores, scale);
            let p = t.softmax(scores, mask);
            attn.push(p);
            outs.push(t.matmul(p, vh));
        }
        let o = if heads == 1 { outs[0] } else { t.concat_cols(&outs) };
        let out = match &blk.proj {
            Some(p) => {
                let (wo, bo) = (t.param(p.wo), t.param(p.bo));
                let o = t.matmul(o, wo);
                let o = t.add_row(o, bo);
                t.add(resid, o)
            }
            None => o,
        };
        (out, attn)
    }

    fn self_block(&self, t: &mut Tape, blk: &Block, x: Var) -> (Var, Vec<Var>) {
        let nq = self.norm_q(t, blk, x);
        let kv = self.project_kv(t, blk, nq);
        self.attend(t, blk, x, nq, &kv, Mask::Causal { offset: 0 })
    }

    fn cross_block(&self, t: &mut Tape, blk: &Block, x: Var, kv: &KeyValue, mask: Mask) -> (Var, Vec<Var>) {
        let nq = self.norm_q(t, blk, x);
        self.attend(t, blk, x, nq, kv, mask)
    }

    pub(crate) fn cross_kv(&self, t: &mut Tape, layer: usize, src: Var) -> KeyValue {
        let blk = &self.cross[layer];
        let n = self.norm_kv(t, blk, src);
        self.project_kv(t, blk, n)
    }

    pub(crate) fn reduce(&self, t: &mut Tape, raw: Var) -> Var {
        let (w, b) = (t.param(self.reduce_w), t.param(self.reduce_b));
        let r = t.matmul(raw, w);
        t.add_row(r, b)
    }

    /// One long-stack layer for a single new row against cached keys and
    /// values of all rows so far. Appends the new row's key and value to
    /// `cache` and returns the output row.
    pub(crate) fn long_step(
        &self,
        t: &mut Tape,
        layer: usize,
        row: Var,
        cache: &mut (Array2<f64>, Array2<f64>),
    ) -> Var {
        let blk = &self.long[layer];
        let nq = self.norm_q(t, blk, row);
        let kv = self.project_kv(t, blk, nq);
        push_row(&mut cache.0, t.value(kv.k));
        push_row(&mut cache.1, t.value(kv.v));
        let all = KeyValue { k: t.constant(cache.0.clone()), v: t.constant(cache.1.clone()) };
        self.attend(t, blk, row, nq, &all, Mask::None).0
    }

    /// Everything after the long stack for the frame whose reduced feature
    /// is row `cur` of `reduced`: short window, long-short and
    /// spatiotemporal cross attention, head. `cross_kv[l]` holds the layer-`l`
    /// keys/values of the long output and `limit` the number of visible rows.
    pub(crate) fn frame_logits(
        &self,
        t: &mut Tape,
        reduced: Var,
        cur: usize,
        cross_kv: &[KeyValue],
        limit: usize,
    ) -> Var {
        let start = (cur + 1).saturating_sub(self.cfg.tau);
        let mut w = t.slice_rows(reduced, start, cur + 1 - start);
        for blk in &self.short {
            w = self.self_block(t, blk, w).0;
        }
        for (blk, kv) in self.cross.iter().zip(cross_kv) {
            w = self.cross_block(t, blk, w, kv, Mask::Prefix { limit }).0;
        }
        let mut q = t.slice_rows(reduced, cur, 1);
        for blk in &self.st {
            let n = self.norm_kv(t, blk, w);
            let kv = self.project_kv(t, blk, n);
            q = self.cross_block(t, blk, q, &kv, Mask::None).0;
        }
        let h = Self::ln(t, q, self.head_ln);
        let (hw, hb) = (t.param(self.head_w), t.param(self.head_b));
        let z = t.matmul(h, hw);
        t.add_row(z, hb)
    }

    /// Per-frame phase probabilities (`T × K`) for a whole sequence, each
    /// row computed only from frames up to its own.
    pub fn forward_sequence(&self, t: &mut Tape, raw: Var) -> Var {
        let frames = t.value(raw).nrows();
        let reduced = self.reduce(t, raw);
        let mut long = reduced;
        for blk in &self.long {
            long = self.self_block(t, blk, long).0;
        }
        let kvs: Vec<KeyValue> = (0..self.cross.len()).map(|l| self.cross_kv(t, l, long)).collect();
        let logits: Vec<Var> = (0..frames).map(|i| self.frame_logits(t, reduced, i, &kvs, i + 1)).collect();
        let z = t.concat_rows(&logits);
        t.softmax(z, Mask::None)
    }

    fn check_raw(&self, raw: &Array2<f64>) -> Result<(), LsSatError> {
        if raw.ncols() != self.cfg.raw_dim {
            return Err(shape_err("raw features", &[raw.nrows(), self.cfg.raw_dim], &[raw.nrows(), raw.ncols()]));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(LsSatError::NonFinite);
        }
        Ok(())
    }

    /// Probabilities for every frame of `raw` (`T × raw_dim`).
    pub fn predict_sequence(&self, raw: &Array2<f64>) -> Result<Array2<f64>, LsSatError> {
        self.check_raw(raw)?;
        if raw.nrows() == 0 {
            return Ok(Array2::zeros((0, self.cfg.phases)));
        }
        let mut t = Tape::new(&self.params);
        let x = t.constant(raw.clone());
        let p = self.forward_sequence(&mut t, x);
        Ok(t.value(p).clone())
    }

    // ---- single-operation evaluators ----

    fn check_d(&self, what: &str, m: &Array2<f64>) -> Result<(), LsSatError> {
        if m.ncols() != self.cfg.d() || m.nrows() == 0 {
            return Err(shape_err(what, &[m.nrows().max(1), self.cfg.d()], &[m.nrows(), m.ncols()]));
        }
        Ok(())
    }

    /// Linear reduction of one raw feature vector.
    pub fn reduce_dim(&self, raw: &[f64]) -> Result<Vec<f64>, LsSatError> {
        if raw.len() != self.cfg.raw_dim {
            return Err(shape_err("raw feature", &[self.cfg.raw_dim], &[raw.len()]));
        }
        let mut t = Tape::new(&self.params);
        let x = t.constant(Array2::from_shape_vec((1, raw.len()), raw.to_vec()).expect("row"));
        let r = self.reduce(&mut t, x);
        Ok(t.value(r).iter().copied().collect())
    }

    /// Causal self-attention block `layer` of a stack on `n × d` input.
    pub fn self_attention_block(&self, stack: SelfStack, layer: usize, s: &Array2<f64>) -> Result<BlockOutput, LsSatError> {
        self.self_attention_masked(stack, layer, s, Mask::Causal { offset: 0 })
    }

    /// [`Self::self_attention_block`] with an explicit mask; `Mask::None`
    /// gives full (non-causal) attention.
    pub fn self_attention_masked(
        &self,
        stack: SelfStack,
        layer: usize,
        s: &Array2<f64>,
        mask: Mask,
    ) -> Result<BlockOutput, LsSatError> {
        self.check_d("self-attention input", s)?;
        let blocks = match stack {
            SelfStack::Long => &self.long,
            SelfStack::Short => &self.short,
        };
        let blk = blocks.get(layer).ok_or_else(|| LsSatError::InvalidConfig(format!("no layer {layer}")))?;
        let mut t = Tape::new(&self.params);
        let x = t.constant(s.clone());
        let nq = self.norm_q(&mut t, blk, x);
        let kv = self.project_kv(&mut t, blk, nq);
        let (o, attn) = self.attend(&mut t, blk, x, nq, &kv, mask);
        Ok(collect(&t, o, &attn))
    }

    /// Long-short cross block `layer`: queries from `s_sr` (`τ × d`), keys
    /// and values from all of `s_lr` (`t × d`).
    pub fn long_short_cross(&self, layer: usize, s_sr: &Array2<f64>, s_lr: &Array2<f64>) -> Result<BlockOutput, LsSatError> {
        self.check_d("short features", s_sr)?;
        self.check_d("long features", s_lr)?;
        if s_sr.nrows() > s_lr.nrows() {
            return Err(shape_err("short window", &[s_lr.nrows(), self.cfg.d()], &[s_sr.nrows(), s_sr.ncols()]));
        }
        let blk = self.cross.get(layer).ok_or_else(|| LsSatError::InvalidConfig(format!("no layer {layer}")))?;
        let mut t = Tape::new(&self.params);
        let (q, src) = (t.constant(s_sr.clone()), t.constant(s_lr.clone()));
        let kv = self.cross_kv(&mut t, layer, src);
        let (o, attn) = self.cross_block(&mut t, blk, q, &kv, Mask::None);
        Ok(collect(&t, o, &attn))
    }

    /// Spatiotemporal cross block `layer`: the single query `s_t` against
    /// `s_ls` (`τ × d`).
    pub fn spatiotemporal_cross(&self, layer: usize, s_t: &[f64], s_ls: &Array2<f64>) -> Result<BlockOutput, LsSatError> {
        if s_t.len() != self.cfg.d() {
            return Err(shape_err("query", &[self.cfg.d()], &[s_t.len()]));
        }
        self.check_d("long-short features", s_ls)?;
        let blk = self.st.get(layer).ok_or_else(|| LsSatError::InvalidConfig(format!("no layer {layer}")))?;
        let mut t = Tape::new(&self.params);
        let q = t.constant(Array2::from_shape_vec((1, s_t.len()), s_t.to_vec()).expect("row"));
        let src = t.constant(s_ls.clone());
        let n = self.norm_kv(&mut t, blk, src);
        let kv = self.project_kv(&mut t, blk, n);
        let (o, attn) = self.cross_block(&mut t, blk, q, &kv, Mask::None);
        Ok(collect(&t, o, &attn))
    }

    /// Overwrite a tensor by name, keeping its shape.
    pub fn set_param(&mut self, name: &str, value: Array2<f64>) -> Result<(), LsSatError> {
        let id = self.params.index_of(name).ok_or_else(|| LsSatError::InvalidConfig(format!("no tensor {name}")))?;
        let cur = self.params.values[id].dim();
        if value.dim() != cur {
            return Err(shape_err(name, &[cur.0, cur.1], &[value.nrows(), value.ncols()]));
        }
        self.params.values[id] = value;
        Ok(())
    }
}

fn collect(t: &Tape, o: Var, attn: &[Var]) -> BlockOutput {
    BlockOutput { out: t.value(o).clone(), attn: attn.iter().map(|a| t.value(*a).clone()).collect() }
}

pub(crate) fn push_row(m: &mut Array2<f64>, row: &Array2<f64>) {
    m.push_row(row.row(0)).expect("row width matches");
}
