//! Iterative masked-diffusion decoding.
//!
//! Decoding starts from BOS + prompt + SEP + a fully masked generation
//! region (optionally followed by a frozen EOS pad tail). Each step runs one
//! forward pass, ranks the still-masked positions by model confidence, and
//! fixes the most confident ones; the rest stay masked for the next step.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::net::{AttnMode, AttnSpec, ModelState, NetError, Patch};
use crate::tensor::{softmax, Scalar};
use crate::textcodec::{normalize, CodecError, TokenSeq, Vocab, BOS_ID, EOS_ID, MASK_ID, SEP_ID};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("invalid decode config: {0}")]
    InvalidConfig(String),
    #[error("decoded answer is empty")]
    EmptyAnswer,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Shape of the generation region appended after SEP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenRegion {
    /// `gen_len` masked slots; the model must place the answer and its
    /// terminal EOS inside them.
    Length { gen_len: usize },
    /// `n_masks` masked slots followed by `eos_pad` frozen EOS tokens,
    /// mirroring the protected pad tail seen in training.
    Pad { n_masks: usize, eos_pad: usize },
}

impl GenRegion {
    pub fn n_masks(&self) -> usize {
        match *self {
            GenRegion::Length { gen_len } => gen_len,
            GenRegion::Pad { n_masks, .. } => n_masks,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecodeConfig {
    pub steps: usize,
    pub attn: AttnMode,
    /// When set, every masked position with confidence >= threshold is fixed
    /// in addition to the scheduled minimum for the step.
    pub threshold: Option<f64>,
}

impl DecodeConfig {
    pub fn full_attention(steps: usize) -> DecodeConfig {
        DecodeConfig { steps, attn: AttnMode::FullBidirectional, threshold: None }
    }
}

/// Initial decoder state: assembled token buffer plus region bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StartState {
    pub tokens: Vec<u32>,
    /// true = never rewritten (BOS, prompt, SEP, frozen EOS pad)
    pub frozen: Vec<bool>,
    pub prompt_len: usize,
    pub region_start: usize,
    pub region_len: usize,
}

pub fn build_start_state(
    vocab: &Vocab,
    prompt: &str,
    region: &GenRegion,
) -> Result<StartState, DecodeError> {
    if region.n_masks() == 0 {
        return Err(DecodeError::InvalidConfig("generation region is empty".into()));
    }
    let p = vocab.encode(prompt)?;
    let prompt_len = 1 + p.len() + 1;
    let pad = match *region {
        GenRegion::Length { .. } => 0,
        GenRegion::Pad { eos_pad, .. } => eos_pad,
    };
    let n_masks = region.n_masks();
    let n = prompt_len + n_masks + pad;
    let mut tokens = Vec::with_capacity(n);
    let mut frozen = Vec::with_capacity(n);
    tokens.push(BOS_ID);
    frozen.push(true);
    tokens.extend_from_slice(&p.ids);
    frozen.extend(core::iter::repeat_n(true, p.len()));
    tokens.push(SEP_ID);
    frozen.push(true);
    tokens.extend(core::iter::repeat_n(MASK_ID, n_masks));
    frozen.extend(core::iter::repeat_n(false, n_masks));
    tokens.extend(core::iter::repeat_n(EOS_ID, pad));
    frozen.extend(core::iter::repeat_n(true, pad));
    Ok(StartState { tokens, frozen, prompt_len, region_start: prompt_len, region_len: n_masks })
}

/// Split `n_masks` fixes across `steps` as equally as possible, larger
/// shares first: (7, 3) -> [3, 2, 2]. Steps beyond n_masks are dropped.
pub fn fix_schedule(n_masks: usize, steps: usize) -> Vec<usize> {
    if n_masks == 0 || steps == 0 {
        return Vec::new();
    }
    let s = steps.min(n_masks);
    let base = n_masks / s;
    let extra = n_masks % s;
    (0..s).map(|i| base + usize::from(i < extra)).collect()
}

/// Per-block step budgets proportional to each block's mask count, assigned
/// by largest remainder and clamped to [1, m_b]. Blocks without masks get 0.
pub fn block_step_budgets(mask_counts: &[usize], steps: usize) -> Vec<usize> {
    let total: usize = mask_counts.iter().sum();
    if total == 0 || steps == 0 {
        return vec![0; mask_counts.len()];
    }
    let mut budget: Vec<usize> = Vec::with_capacity(mask_counts.len());
    let mut rema: Vec<(usize, u128)> = Vec::new(); // (block, remainder numerator)
    let mut assigned = 0usize;
    for (b, &m) in mask_counts.iter().enumerate() {
        if m == 0 {
            budget.push(0);
            continue;
        }
        let num = steps as u128 * m as u128;
        let q = (num / total as u128) as usize;
        budget.push(q);
        assigned += q;
        rema.push((b, num % total as u128));
    }
    // distribute leftover steps to largest remainders, lowest block on ties
    let mut leftover = steps.saturating_sub(assigned);
    rema.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for (b, _) in rema {
        if leftover == 0 {
            break;
        }
        budget[b] += 1;
        leftover -= 1;
    }
    for (b, q) in budget.iter_mut().enumerate() {
        if mask_counts[b] > 0 {
            *q = (*q).clamp(1, mask_counts[b]);
        }
    }
    budget
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedToken {
    pub pos: usize,
    pub token: u32,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub block: usize,
    pub fixed: Vec<FixedToken>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub tokens: Vec<u32>,
    pub trace: Vec<StepTrace>,
}

impl DecodeResult {
    /// Decoded generation region truncated at its first EOS.
    pub fn answer_text(&self, vocab: &Vocab, state: &StartState) -> Result<String, DecodeError> {
        let region =
            &self.tokens[state.region_start..state.region_start + state.region_len];
        let upto = region.iter().position(|&id| id == EOS_ID).unwrap_or(region.len());
        Ok(vocab.decode_text(&TokenSeq::new(region[..upto].to_vec()))?)
    }
}

/// Iterative confidence decoding. With BlockCausal attention the generation
/// region is decoded block by block, left to right, each block getting a
/// share of the step budget proportional to its mask count.
pub fn decode_iterative<T: Scalar>(
    model: &ModelState<T>,
    state: &StartState,
    cfg: &DecodeConfig,
) -> Result<DecodeResult, DecodeError> {
    decode_iterative_patched(model, state, cfg, None)
}

/// Same as `decode_iterative` but with a residual-stream patch applied on
/// every forward pass (activation-patching interventions).
pub fn decode_iterative_patched<T: Scalar>(
    model: &ModelState<T>,
    state: &StartState,
    cfg: &DecodeConfig,
    patch: Option<&Patch<T>>,
) -> Result<DecodeResult, DecodeError> {
    if cfg.steps == 0 {
        return Err(DecodeError::InvalidConfig("steps must be >= 1".into()));
    }
    let attn = AttnSpec {
        mode: cfg.attn,
        prompt_len: state.prompt_len,
        gen_len: Some(state.region_len),
    };
    // partition the generation region into decode blocks
    let blocks: Vec<(usize, usize)> = match cfg.attn {
        AttnMode::FullBidirectional => vec![(state.region_start, state.region_len)],
        AttnMode::BlockCausal { block_len } => {
            if block_len == 0 {
                return Err(DecodeError::InvalidConfig("block_len must be >= 1".into()));
            }
            let mut bs = Vec::new();
            let mut at = state.region_start;
            let end = state.region_start + state.region_len;
            while at < end {
                let len = block_len.min(end - at);
                bs.push((at, len));
                at += len;
            }
            bs
        }
    };
    let mask_counts: Vec<usize> = blocks
        .iter()
        .map(|&(start, len)| {
            state.tokens[start..start + len]
                .iter()
                .zip(&state.frozen[start..start + len])
                .filter(|&(&tok, &fr)| tok == MASK_ID && !fr)
                .count()
        })
        .collect();
    let budgets = block_step_budgets(&mask_counts, cfg.steps);

    let mut tokens = state.tokens.clone();
    let mut trace = Vec::new();
    for (b, &(start, len)) in blocks.iter().enumerate() {
        let schedule = fix_schedule(mask_counts[b], budgets[b]);
        for &k in &schedule {
            let out = match patch {
                Some(p) => model.forward_patched(&tokens, &attn, p, false)?,
                None => model.forward(&tokens, &attn, false)?,
            };
            // rank still-masked positions of this block by confidence
            let mut cands: Vec<FixedToken> = (start..start + len)
                .filter(|&i| tokens[i] == MASK_ID && !state.frozen[i])
                .map(|i| {
                    let row = out.logits.row(i);
                    // the mask token itself is never a legal output
                    let best = argmax_excluding(row, MASK_ID as usize);
                    let probs = softmax(row);
                    FixedToken { pos: i, token: best as u32, confidence: probs[best].to_f64() }
                })
                .collect();
            cands.sort_by(|a, b| {
                b.confidence
                    .partial_cmp(&a.confidence)
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then(a.pos.cmp(&b.pos))
            });
            let n_fix = match cfg.threshold {
                Some(th) => {
                    let above = cands.iter().filter(|c| c.confidence >= th).count();
                    above.max(k).min(cands.len())
                }
                None => k.min(cands.len()),
            };
            let fixed: Vec<FixedToken> = cands.into_iter().take(n_fix).collect();
            for f in &fixed {
                tokens[f.pos] = f.token;
            }
            trace.push(StepTrace { block: b, fixed });
        }
        // threshold fixing can empty a block early; remaining schedule
        // entries find no candidates and record empty steps, which is fine
    }
    Ok(DecodeResult { tokens, trace })
}

/// Greedy argmax skipping one forbidden index (lowest index wins ties).
fn argmax_excluding<T: Scalar>(row: &[T], skip: usize) -> usize {
    let mut best = usize::from(skip == 0);
    for (i, &x) in row.iter().enumerate() {
        if i != skip && x > row[best] {
            best = i;
        }
    }
    best
}

/// One forward pass, everything fixed at once.
pub fn decode_single_pass<T: Scalar>(
    model: &ModelState<T>,
    state: &StartState,
    attn: AttnMode,
) -> Result<DecodeResult, DecodeError> {
    decode_iterative(model, state, &DecodeConfig { steps: 1, attn, threshold: None })
}

/// Strip the answer-carrier template from decoded text: "The final result is
/// X" -> "X", "Box N contains X" -> "X"; anything else passes through
/// normalized. Errors when nothing remains.
pub fn extract_answer(text: &str) -> Result<String, DecodeError> {
    let norm = normalize(text);
    let lower: String = norm.to_lowercase();
    let rest = if let Some(r) = lower.strip_prefix("the final result is") {
        Some(norm[norm.len() - r.len()..].to_string())
    } else if lower.starts_with("box ") {
        // "box N contains ..."
        lower
            .find(" contains")
            .map(|at| norm[at + " contains".len()..].to_string())
    } else {
        None
    };
    let answer = normalize(rest.as_deref().unwrap_or(&norm).trim());
    if answer.is_empty() {
        return Err(DecodeError::EmptyAnswer);
    }
    Ok(answer)
}
