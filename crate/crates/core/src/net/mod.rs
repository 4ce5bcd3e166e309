//! Small bidirectional transformer encoder with exact analytic gradients,
//! per-layer hidden-state capture, and residual-stream patching hooks.
//!
//! Parameters live in one flat vector with a named-entry layout, which keeps
//! the optimizer, finite-difference probing, and checkpointing trivial.
//! Pre-norm residual blocks, learned absolute position embeddings, GELU MLP.
//! The "hidden state at layer l" is the residual-stream value after block l
//! completes; that is the quantity captured and patched.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

// no_std builds get f64::sqrt through the trait; test builds use inherents
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::rng::{derive, gaussian, seeded};
use crate::tensor::{
    linear, linear_backward_input, linear_backward_params, masked_softmax, Mat, Scalar,
};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttnMode {
    FullBidirectional,
    BlockCausal { block_len: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub attn_mode: AttnMode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SeqTooLong { len: usize, max: usize },
    #[error("layer {0} out of range (model has {1})")]
    LayerOutOfRange(usize, usize),
    #[error("position {0} out of range for sequence of length {1}")]
    PositionOutOfRange(usize, usize),
    #[error("token id {0} out of range for vocab of size {1}")]
    TokenOutOfRange(u32, usize),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return Err(NetError::InvalidConfig("zero-sized dimension".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(NetError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 {
            return Err(NetError::InvalidConfig("empty vocab or zero max_seq_len".into()));
        }
        if let AttnMode::BlockCausal { block_len } = self.attn_mode {
            if block_len == 0 {
                return Err(NetError::InvalidConfig("block_len must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Closed-form parameter count for this architecture.
    pub fn param_count(&self) -> usize {
        let (d, ff, v, m, l) = (
            self.d_model,
            self.d_ff,
            self.vocab_size,
            self.max_seq_len,
            self.n_layers,
        );
        let per_layer = 2 * d           // ln1
            + 4 * (d * d + d)           // q,k,v,o projections
            + 2 * d                     // ln2
            + d * ff + ff               // mlp in
            + ff * d + d; // mlp out
        v * d + m * d + l * per_layer + 2 * d + d * v + v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InitKind {
    Gauss,
    Zero,
    One,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn build_entries(cfg: &ModelConfig) -> Vec<(ParamEntry, InitKind)> {
    let (d, ff, v, m) = (cfg.d_model, cfg.d_ff, cfg.vocab_size, cfg.max_seq_len);
    let mut entries = Vec::new();
    let mut offset = 0usize;
    let mut push = |name: String, rows: usize, cols: usize, init: InitKind| {
        entries.push((
            ParamEntry { name, offset, rows, cols },
            init,
        ));
        offset += rows * cols;
    };
    push("tok_emb".into(), v, d, InitKind::Gauss);
    push("pos_emb".into(), m, d, InitKind::Gauss);
    for l in 0..cfg.n_layers {
        push(format!("layer{l}.ln1.g"), 1, d, InitKind::One);
        push(format!("layer{l}.ln1.b"), 1, d, InitKind::Zero);
        push(format!("layer{l}.attn.wq"), d, d, InitKind::Gauss);
        push(format!("layer{l}.attn.bq"), 1, d, InitKind::Zero);
        push(format!("layer{l}.attn.wk"), d, d, InitKind::Gauss);
        push(format!("layer{l}.attn.bk"), 1, d, InitKind::Zero);
        push(format!("layer{l}.attn.wv"), d, d, InitKind::Gauss);
        push(format!("layer{l}.attn.bv"), 1, d, InitKind::Zero);
        push(format!("layer{l}.attn.wo"), d, d, InitKind::Gauss);
        push(format!("layer{l}.attn.bo"), 1, d, InitKind::Zero);
        push(format!("layer{l}.ln2.g"), 1, d, InitKind::One);
        push(format!("layer{l}.ln2.b"), 1, d, InitKind::Zero);
        push(format!("layer{l}.mlp.w1"), d, ff, InitKind::Gauss);
        push(format!("layer{l}.mlp.b1"), 1, ff, InitKind::Zero);
        push(format!("layer{l}.mlp.w2"), ff, d, InitKind::Gauss);
        push(format!("layer{l}.mlp.b2"), 1, d, InitKind::Zero);
    }
    push("final_ln.g".into(), 1, d, InitKind::One);
    push("final_ln.b".into(), 1, d, InitKind::Zero);
    push("out.w".into(), d, v, InitKind::Gauss);
    push("out.b".into(), 1, v, InitKind::Zero);
    entries
}

/// Per-layer parameter offsets into the flat vector.
#[derive(Clone, Debug)]
struct LayerOff {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
struct Offsets {
    tok_emb: usize,
    pos_emb: usize,
    layers: Vec<LayerOff>,
    lnf_g: usize,
    lnf_b: usize,
    out_w: usize,
    out_b: usize,
}

fn build_offsets(entries: &[(ParamEntry, InitKind)], n_layers: usize) -> Offsets {
    let off = |i: usize| entries[i].0.offset;
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let base = 2 + l * 16;
        layers.push(LayerOff {
            ln1_g: off(base),
            ln1_b: off(base + 1),
            wq: off(base + 2),
            bq: off(base + 3),
            wk: off(base + 4),
            bk: off(base + 5),
            wv: off(base + 6),
            bv: off(base + 7),
            wo: off(base + 8),
            bo: off(base + 9),
            ln2_g: off(base + 10),
            ln2_b: off(base + 11),
            w1: off(base + 12),
            b1: off(base + 13),
            w2: off(base + 14),
            b2: off(base + 15),
        });
    }
    let tail = 2 + n_layers * 16;
    Offsets {
        tok_emb: off(0),
        pos_emb: off(1),
        layers,
        lnf_g: off(tail),
        lnf_b: off(tail + 1),
        out_w: off(tail + 2),
        out_b: off(tail + 3),
    }
}

#[derive(Clone, Debug)]
pub struct ModelState<T> {
    pub config: ModelConfig,
    pub params: Vec<T>,
    entries: Vec<(ParamEntry, InitKind)>,
    offsets: Offsets,
}

impl<T: Scalar> PartialEq for ModelState<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Attention layout at call time: mode may override the model default, and
/// block boundaries are anchored at the end of the prompt region.
#[derive(Clone, Copy, Debug)]
pub struct AttnSpec {
    pub mode: AttnMode,
    pub prompt_len: usize,
    /// Length of the blocked generation window starting at `prompt_len`.
    /// Positions past the window (the frozen EOS pad tail) are unrestricted
    /// context, exactly like the prompt. None extends the window to the end
    /// of the sequence.
    pub gen_len: Option<usize>,
}

impl AttnSpec {
    pub fn full() -> AttnSpec {
        AttnSpec { mode: AttnMode::FullBidirectional, prompt_len: 0, gen_len: None }
    }
}

/// Residual-stream replacement applied after `layer` completes: each entry is
/// an absolute sequence position and its replacement row.
#[derive(Clone, Debug)]
pub struct Patch<T> {
    pub layer: usize,
    pub rows: Vec<(usize, Vec<T>)>,
}

pub struct ForwardOutput<T> {
    pub logits: Mat<T>,
    /// Residual-stream output of every layer, captured only on request.
    pub hidden: Option<Vec<Mat<T>>>,
}

struct LnCache<T> {
    xhat: Mat<T>,
    rstd: Vec<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    q: Mat<T>,
    k: Mat<T>,
    v: Mat<T>,
    probs: Vec<Mat<T>>,
    ctx: Mat<T>,
    x_mid: Mat<T>,
    ln2: LnCache<T>,
    h_pre: Mat<T>,
    h_act: Mat<T>,
}

/// Everything backward needs; produced by `forward_cached`.
pub struct ForwardCache<T> {
    ids: Vec<u32>,
    xs: Vec<Mat<T>>, // layer inputs: xs[l] feeds layer l; xs[n_layers] is final
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    y: Mat<T>,
    pub logits: Mat<T>,
}

pub fn init_model<T: Scalar>(config: ModelConfig, seed: u64) -> Result<ModelState<T>, NetError> {
    config.validate()?;
    let entries = build_entries(&config);
    let total: usize = entries.iter().map(|(e, _)| e.len()).sum();
    debug_assert_eq!(total, config.param_count());
    let mut params = vec![T::zero(); total];
    let mut rng = seeded(derive(seed, "init-model"));
    for (entry, init) in &entries {
        let slot = &mut params[entry.offset..entry.offset + entry.len()];
        match init {
            InitKind::Zero => {}
            InitKind::One => slot.fill(T::one()),
            InitKind::Gauss => {
                for p in slot.iter_mut() {
                    *p = T::from_f64(gaussian(&mut rng) * INIT_STD);
                }
            }
        }
    }
    let offsets = build_offsets(&entries, config.n_layers);
    Ok(ModelState { config, params, entries, offsets })
}

impl<T: Scalar> ModelState<T> {
    /// Rebuild a model from a config and a flat parameter vector (checkpoint
    /// load path). The vector length must match the config layout.
    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<ModelState<T>, NetError> {
        config.validate()?;
        if params.len() != config.param_count() {
            return Err(NetError::InvalidConfig(format!(
                "parameter vector has {} values, layout needs {}",
                params.len(),
                config.param_count()
            )));
        }
        let entries = build_entries(&config);
        let offsets = build_offsets(&entries, config.n_layers);
        Ok(ModelState { config, params, entries, offsets })
    }

    pub fn param_entries(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter().map(|(e, _)| e)
    }

    pub fn attn_spec(&self, prompt_len: usize) -> AttnSpec {
        AttnSpec { mode: self.config.attn_mode, prompt_len, gen_len: None }
    }

    fn check_seq(&self, ids: &[u32]) -> Result<(), NetError> {
        if ids.len() > self.config.max_seq_len {
            return Err(NetError::SeqTooLong { len: ids.len(), max: self.config.max_seq_len });
        }
        for &id in ids {
            if id as usize >= self.config.vocab_size {
                return Err(NetError::TokenOutOfRange(id, self.config.vocab_size));
            }
        }
        Ok(())
    }

    pub fn forward(
        &self,
        ids: &[u32],
        attn: &AttnSpec,
        capture_hidden: bool,
    ) -> Result<ForwardOutput<T>, NetError> {
        self.forward_inner(ids, attn, None, capture_hidden)
    }

    pub fn forward_patched(
        &self,
        ids: &[u32],
        attn: &AttnSpec,
        patch: &Patch<T>,
        capture_hidden: bool,
    ) -> Result<ForwardOutput<T>, NetError> {
        if patch.layer >= self.config.n_layers {
            return Err(NetError::LayerOutOfRange(patch.layer, self.config.n_layers));
        }
        for (pos, row) in &patch.rows {
            if *pos >= ids.len() {
                return Err(NetError::PositionOutOfRange(*pos, ids.len()));
            }
            if row.len() != self.config.d_model {
                return Err(NetError::InvalidConfig(format!(
                    "patch row has {} channels, model has {}",
                    row.len(),
                    self.config.d_model
                )));
            }
        }
        self.forward_inner(ids, attn, Some(patch), capture_hidden)
    }

    fn forward_inner(
        &self,
        ids: &[u32],
        attn: &AttnSpec,
        patch: Option<&Patch<T>>,
        capture_hidden: bool,
    ) -> Result<ForwardOutput<T>, NetError> {
        self.check_seq(ids)?;
        let allowed = attention_mask(ids.len(), attn);
        let mut x = self.embed(ids);
        let mut hidden = capture_hidden.then(Vec::new);
        for l in 0..self.config.n_layers {
            x = self.layer_forward(l, &x, &allowed, None).0;
            if let Some(p) = patch {
                if p.layer == l {
                    for (pos, row) in &p.rows {
                        for (c, &v) in row.iter().enumerate() {
                            x.set(*pos, c, v);
                        }
                    }
                }
            }
            if let Some(h) = hidden.as_mut() {
                h.push(x.clone());
            }
        }
        let (y, _) = self.layernorm(&x, self.offsets.lnf_g, self.offsets.lnf_b);
        let logits = self.out_proj(&y);
        Ok(ForwardOutput { logits, hidden })
    }

    /// Forward pass retaining all intermediates for `backward`.
    pub fn forward_cached(&self, ids: &[u32], attn: &AttnSpec) -> Result<ForwardCache<T>, NetError> {
        self.check_seq(ids)?;
        let allowed = attention_mask(ids.len(), attn);
        let mut xs = vec![self.embed(ids)];
        let mut layers = Vec::with_capacity(self.config.n_layers);
        for l in 0..self.config.n_layers {
            let (x_out, cache) = self.layer_forward(l, &xs[l], &allowed, Some(()));
            layers.push(cache.expect("cache requested"));
            xs.push(x_out);
        }
        let (y, lnf) =
            self.layernorm(&xs[self.config.n_layers], self.offsets.lnf_g, self.offsets.lnf_b);
        let logits = self.out_proj(&y);
        Ok(ForwardCache { ids: ids.to_vec(), xs, layers, lnf, y, logits })
    }

    fn embed(&self, ids: &[u32]) -> Mat<T> {
        let d = self.config.d_model;
        let mut x = Mat::zeros(ids.len(), d);
        for (i, &id) in ids.iter().enumerate() {
            let tok = &self.params[self.offsets.tok_emb + id as usize * d..][..d];
            let pos = &self.params[self.offsets.pos_emb + i * d..][..d];
            for (c, xv) in x.row_mut(i).iter_mut().enumerate() {
                *xv = tok[c] + pos[c];
            }
        }
        x
    }

    fn out_proj(&self, y: &Mat<T>) -> Mat<T> {
        let (d, v) = (self.config.d_model, self.config.vocab_size);
        linear(
            y,
            &self.params[self.offsets.out_w..][..d * v],
            &self.params[self.offsets.out_b..][..v],
            d,
            v,
        )
    }

    /// Project captured hidden rows through the output head (final LN
    /// included); used by capture-consistency checks.
    pub fn project_hidden(&self, hidden_rows: &Mat<T>) -> Mat<T> {
        let (y, _) = self.layernorm(hidden_rows, self.offsets.lnf_g, self.offsets.lnf_b);
        self.out_proj(&y)
    }

    fn layernorm(&self, x: &Mat<T>, g_off: usize, b_off: usize) -> (Mat<T>, LnCache<T>) {
        let d = x.cols;
        let g = &self.params[g_off..g_off + d];
        let b = &self.params[b_off..b_off + d];
        let mut out = Mat::zeros(x.rows, d);
        let mut xhat = Mat::zeros(x.rows, d);
        let mut rstd = Vec::with_capacity(x.rows);
        let dn = T::from_f64(d as f64);
        for i in 0..x.rows {
            let row = x.row(i);
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean = mean / dn;
            let mut var = T::zero();
            for &v in row {
                var += (v - mean) * (v - mean);
            }
            var = var / dn;
            let r = (var + T::from_f64(LN_EPS)).sqrt().recip();
            rstd.push(r);
            for c in 0..d {
                let xh = (row[c] - mean) * r;
                xhat.set(i, c, xh);
                out.set(i, c, g[c] * xh + b[c]);
            }
        }
        (out, LnCache { xhat, rstd })
    }

    fn layernorm_backward(
        &self,
        cache: &LnCache<T>,
        dy: &Mat<T>,
        g_off: usize,
        grads: &mut [T],
    ) -> Mat<T> {
        let d = dy.cols;
        let g = &self.params[g_off..g_off + d];
        let mut dx = Mat::zeros(dy.rows, d);
        let dn = T::from_f64(d as f64);
        for i in 0..dy.rows {
            let dyr = dy.row(i);
            let xh = cache.xhat.row(i);
            let mut mean_dyg = T::zero();
            let mut mean_dyg_xh = T::zero();
            for c in 0..d {
                let dyg = dyr[c] * g[c];
                mean_dyg += dyg;
                mean_dyg_xh += dyg * xh[c];
            }
            mean_dyg = mean_dyg / dn;
            mean_dyg_xh = mean_dyg_xh / dn;
            for c in 0..d {
                let dyg = dyr[c] * g[c];
                dx.set(i, c, cache.rstd[i] * (dyg - mean_dyg - xh[c] * mean_dyg_xh));
            }
            // dg/db accumulate; g grads at g_off, b grads immediately after
            for c in 0..d {
                grads[g_off + c] += dyr[c] * xh[c];
                grads[g_off + d + c] += dyr[c];
            }
        }
        dx
    }

    #[allow(clippy::type_complexity)]
    fn layer_forward(
        &self,
        l: usize,
        x_in: &Mat<T>,
        allowed: &[Vec<bool>],
        want_cache: Option<()>,
    ) -> (Mat<T>, Option<LayerCache<T>>) {
        let o = self.offsets.layers[l].clone();
        let d = self.config.d_model;
        let h = self.config.n_heads;
        let hd = d / h;
        let n = x_in.rows;
        let scale = T::from_f64(1.0 / (hd as f64).sqrt());

        let (a, ln1) = self.layernorm(x_in, o.ln1_g, o.ln1_b);
        let q = linear(&a, &self.params[o.wq..][..d * d], &self.params[o.bq..][..d], d, d);
        let k = linear(&a, &self.params[o.wk..][..d * d], &self.params[o.bk..][..d], d, d);
        let v = linear(&a, &self.params[o.wv..][..d * d], &self.params[o.bv..][..d], d, d);

        let mut ctx = Mat::zeros(n, d);
        let mut probs: Vec<Mat<T>> = Vec::with_capacity(h);
        for head in 0..h {
            let hoff = head * hd;
            let mut p = Mat::zeros(n, n);
            for i in 0..n {
                let qi = &q.row(i)[hoff..hoff + hd];
                let prow = p.row_mut(i);
                for j in 0..n {
                    let kj = &k.row(j)[hoff..hoff + hd];
                    let mut s = T::zero();
                    for c in 0..hd {
                        s += qi[c] * kj[c];
                    }
                    prow[j] = s * scale;
                }
                masked_softmax(prow, &allowed[i]);
            }
            for i in 0..n {
                let prow = p.row(i);
                let crow = &mut ctx.row_mut(i)[hoff..hoff + hd];
                for j in 0..n {
                    let pij = prow[j];
                    if pij == T::zero() {
                        continue;
                    }
                    let vj = &v.row(j)[hoff..hoff + hd];
                    for c in 0..hd {
                        crow[c] += pij * vj[c];
                    }
                }
            }
            probs.push(p);
        }
        let attn_out = linear(&ctx, &self.params[o.wo..][..d * d], &self.params[o.bo..][..d], d, d);
        let mut x_mid = x_in.clone();
        for (xv, &av) in x_mid.data.iter_mut().zip(&attn_out.data) {
            *xv += av;
        }

        let (m, ln2) = self.layernorm(&x_mid, o.ln2_g, o.ln2_b);
        let ff = self.config.d_ff;
        let h_pre = linear(&m, &self.params[o.w1..][..d * ff], &self.params[o.b1..][..ff], d, ff);
        let mut h_act = h_pre.clone();
        for hv in h_act.data.iter_mut() {
            *hv = gelu(*hv);
        }
        let mlp_out = linear(&h_act, &self.params[o.w2..][..ff * d], &self.params[o.b2..][..d], ff, d);
        let mut x_out = x_mid.clone();
        for (xv, &mv) in x_out.data.iter_mut().zip(&mlp_out.data) {
            *xv += mv;
        }

        let cache = want_cache.map(|_| LayerCache {
            ln1,
            q,
            k,
            v,
            probs,
            ctx,
            x_mid,
            ln2,
            h_pre,
            h_act,
        });
        (x_out, cache)
    }

    /// Backpropagate `dlogits` through the cached forward pass, accumulating
    /// parameter gradients (sum reduction) into `grads`.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Mat<T>, grads: &mut [T]) {
        assert_eq!(grads.len(), self.params.len());
        let d = self.config.d_model;
        let v = self.config.vocab_size;
        let ff = self.config.d_ff;
        let h = self.config.n_heads;
        let hd = d / h;
        let n = cache.ids.len();
        let scale = T::from_f64(1.0 / (hd as f64).sqrt());

        // output head
        {
            let (dw, db) = wb_slices(grads, self.offsets.out_w, d * v, self.offsets.out_b, v);
            linear_backward_params(&cache.y, dlogits, dw, db, v);
        }
        let dy = linear_backward_input(dlogits, &self.params[self.offsets.out_w..][..d * v], d, v);
        let mut dx = self.layernorm_backward(&cache.lnf, &dy, self.offsets.lnf_g, grads);

        for l in (0..self.config.n_layers).rev() {
            let o = self.offsets.layers[l].clone();
            let lc = &cache.layers[l];
            let x_in = &cache.xs[l];

            // MLP branch: x_out = x_mid + gelu(ln2(x_mid) W1 + b1) W2 + b2
            let d_mlp_out = dx.clone();
            {
                let (dw, db) = wb_slices(grads, o.w2, ff * d, o.b2, d);
                linear_backward_params(&lc.h_act, &d_mlp_out, dw, db, d);
            }
            let mut dh_act =
                linear_backward_input(&d_mlp_out, &self.params[o.w2..][..ff * d], ff, d);
            for (g, &pre) in dh_act.data.iter_mut().zip(&lc.h_pre.data) {
                *g *= gelu_grad(pre);
            }
            {
                let (dw, db) = wb_slices(grads, o.w1, d * ff, o.b1, ff);
                let (m, _) = self.layernorm(&lc.x_mid, o.ln2_g, o.ln2_b);
                linear_backward_params(&m, &dh_act, dw, db, ff);
            }
            let dm = linear_backward_input(&dh_act, &self.params[o.w1..][..d * ff], d, ff);
            let d_ln2_in = self.layernorm_backward(&lc.ln2, &dm, o.ln2_g, grads);
            let mut dx_mid = dx; // residual path
            for (g, &e) in dx_mid.data.iter_mut().zip(&d_ln2_in.data) {
                *g += e;
            }

            // attention branch: x_mid = x_in + (attn(ln1(x_in))) Wo + bo
            let d_attn_out = dx_mid.clone();
            {
                let (dw, db) = wb_slices(grads, o.wo, d * d, o.bo, d);
                linear_backward_params(&lc.ctx, &d_attn_out, dw, db, d);
            }
            let dctx = linear_backward_input(&d_attn_out, &self.params[o.wo..][..d * d], d, d);

            let mut dq = Mat::zeros(n, d);
            let mut dk = Mat::zeros(n, d);
            let mut dv = Mat::zeros(n, d);
            for head in 0..h {
                let hoff = head * hd;
                let p = &lc.probs[head];
                // dp and softmax backward
                let mut ds = Mat::zeros(n, n);
                for i in 0..n {
                    let dctx_i = &dctx.row(i)[hoff..hoff + hd];
                    let prow = p.row(i);
                    let mut dot = T::zero();
                    let dsrow = ds.row_mut(i);
                    for j in 0..n {
                        if prow[j] == T::zero() {
                            continue;
                        }
                        let vj = &lc.v.row(j)[hoff..hoff + hd];
                        let mut dpij = T::zero();
                        for c in 0..hd {
                            dpij += dctx_i[c] * vj[c];
                        }
                        dsrow[j] = dpij;
                        dot += prow[j] * dpij;
                        // dv accumulation
                    }
                    for j in 0..n {
                        if prow[j] == T::zero() {
                            dsrow[j] = T::zero();
                            continue;
                        }
                        dsrow[j] = prow[j] * (dsrow[j] - dot);
                    }
                }
                // dv, dq, dk
                for i in 0..n {
                    let prow = p.row(i);
                    let dctx_i: Vec<T> = dctx.row(i)[hoff..hoff + hd].to_vec();
                    for j in 0..n {
                        let pij = prow[j];
                        if pij != T::zero() {
                            let dvj = &mut dv.row_mut(j)[hoff..hoff + hd];
                            for c in 0..hd {
                                dvj[c] += pij * dctx_i[c];
                            }
                        }
                    }
                }
                for i in 0..n {
                    let dsrow = ds.row(i);
                    let dq_i: &mut [T] = &mut dq.row_mut(i)[hoff..hoff + hd];
                    for j in 0..n {
                        let dsij = dsrow[j] * scale;
                        if dsij == T::zero() {
                            continue;
                        }
                        let kj = &lc.k.row(j)[hoff..hoff + hd];
                        for c in 0..hd {
                            dq_i[c] += dsij * kj[c];
                        }
                    }
                }
                for j in 0..n {
                    let dk_j: &mut [T] = &mut dk.row_mut(j)[hoff..hoff + hd];
                    for i in 0..n {
                        let dsij = ds.get(i, j) * scale;
                        if dsij == T::zero() {
                            continue;
                        }
                        let qi = &lc.q.row(i)[hoff..hoff + hd];
                        for c in 0..hd {
                            dk_j[c] += dsij * qi[c];
                        }
                    }
                }
            }

            // back through q/k/v projections into ln1 output
            let (a, _) = self.layernorm(x_in, o.ln1_g, o.ln1_b);
            let mut da = Mat::zeros(n, d);
            for (w_off, b_off, dmat) in [(o.wq, o.bq, &dq), (o.wk, o.bk, &dk), (o.wv, o.bv, &dv)] {
                let (dw, db) = wb_slices(grads, w_off, d * d, b_off, d);
                linear_backward_params(&a, dmat, dw, db, d);
                let part = linear_backward_input(dmat, &self.params[w_off..][..d * d], d, d);
                for (g, &e) in da.data.iter_mut().zip(&part.data) {
                    *g += e;
                }
            }
            let d_ln1_in = self.layernorm_backward(&lc.ln1, &da, o.ln1_g, grads);
            let mut dx_in = dx_mid; // residual path
            for (g, &e) in dx_in.data.iter_mut().zip(&d_ln1_in.data) {
                *g += e;
            }
            dx = dx_in;
        }

        // embeddings
        for (i, &id) in cache.ids.iter().enumerate() {
            let drow = dx.row(i);
            let tok = self.offsets.tok_emb + id as usize * d;
            let pos = self.offsets.pos_emb + i * d;
            for c in 0..d {
                grads[tok + c] += drow[c];
                grads[pos + c] += drow[c];
            }
        }
    }
}

/// Two disjoint gradient slices for a weight matrix and its adjacent bias.
fn wb_slices<T>(
    grads: &mut [T],
    w_off: usize,
    w_len: usize,
    b_off: usize,
    b_len: usize,
) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(w_off + w_len, b_off);
    let span = &mut grads[w_off..b_off + b_len];
    span.split_at_mut(w_len)
}

/// tanh-approximation GELU.
fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654); // sqrt(2/pi)
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654);
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * a * x * x)
}

/// Build the per-query attention mask. Context positions (the prompt, and
/// anything past the generation window) attend everywhere and are visible to
/// everyone; generation positions see context and blocks up to their own.
pub fn attention_mask(n: usize, attn: &AttnSpec) -> Vec<Vec<bool>> {
    match attn.mode {
        AttnMode::FullBidirectional => vec![vec![true; n]; n],
        AttnMode::BlockCausal { block_len } => {
            let p = attn.prompt_len.min(n);
            let end = attn.gen_len.map_or(n, |g| (p + g).min(n));
            let is_ctx = |pos: usize| pos < p || pos >= end;
            let block_of = |pos: usize| (pos - p) / block_len.max(1);
            (0..n)
                .map(|i| {
                    if is_ctx(i) {
                        vec![true; n]
                    } else {
                        let bi = block_of(i);
                        (0..n).map(|j| is_ctx(j) || block_of(j) <= bi).collect()
                    }
                })
                .collect()
        }
    }
}
