//! Activation patching of trailing-EOS hidden states.
//!
//! A clean prompt is run once with hidden-state capture; the residual-stream
//! rows of its trailing EOS pad positions at a chosen layer are then spliced
//! into every forward pass of a counterfactual prompt's decode. Attribution
//! asks whose answer the patched output resembles: the donor's (clean), the
//! recipient's (counterfactual), or neither.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::decode::{
    decode_iterative, decode_iterative_patched, build_start_state, DecodeConfig, DecodeError,
    GenRegion, StartState,
};
use crate::corpus::TaskKind;
use crate::evalmetrics::{exact_match, levenshtein_similarity, parse_object_set};
use crate::net::{AttnSpec, ModelState, NetError, Patch};
use crate::tensor::Scalar;
use crate::textcodec::{CodecError, Vocab};

/// Number of trailing EOS positions patched by default.
pub const DEFAULT_PATCH_EOS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatchError {
    #[error("pad tail has {have} EOS tokens, need {need} for patching")]
    InsufficientPad { have: usize, need: usize },
    #[error("generation region must use an EOS pad tail for patching")]
    NoPadRegion,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Captured residual-stream rows at one layer. Positions are absolute in the
/// donor sequence; `region_start` anchors them for re-targeting.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenCapture<T> {
    pub layer: usize,
    pub region_start: usize,
    pub rows: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> HiddenCapture<T> {
    /// Rebase the captured rows onto a recipient whose generation region
    /// starts at `target_region_start`.
    pub fn to_patch(&self, target_region_start: usize) -> Patch<T> {
        // signed offset: captured positions may precede the donor's region
        // start (e.g. whole-sequence captures in equivalence checks)
        let shift = target_region_start as isize - self.region_start as isize;
        Patch {
            layer: self.layer,
            rows: self
                .rows
                .iter()
                .map(|(pos, row)| (((*pos as isize) + shift) as usize, row.clone()))
                .collect(),
        }
    }
}

/// One forward pass over `tokens`, capturing the layer-`layer` residual
/// stream at the given absolute positions.
pub fn capture_hidden<T: Scalar>(
    model: &ModelState<T>,
    tokens: &[u32],
    attn: &AttnSpec,
    layer: usize,
    region_start: usize,
    positions: &[usize],
) -> Result<HiddenCapture<T>, PatchError> {
    if layer >= model.config.n_layers {
        return Err(PatchError::Net(NetError::LayerOutOfRange(layer, model.config.n_layers)));
    }
    for &p in positions {
        if p >= tokens.len() {
            return Err(PatchError::Net(NetError::PositionOutOfRange(p, tokens.len())));
        }
    }
    let out = model.forward(tokens, attn, true)?;
    let hidden = out.hidden.expect("capture requested");
    let rows = positions
        .iter()
        .map(|&p| (p, hidden[layer].row(p).to_vec()))
        .collect();
    Ok(HiddenCapture { layer, region_start, rows })
}

/// Trailing `n_eos` positions of a pad-tailed start state (the EOS
/// scratchpad slots that get patched).
pub fn trailing_eos_positions(state: &StartState, n_eos: usize) -> Result<Vec<usize>, PatchError> {
    let pad_start = state.region_start + state.region_len;
    let have = state.tokens.len() - pad_start;
    if have == 0 {
        return Err(PatchError::NoPadRegion);
    }
    if have < n_eos {
        return Err(PatchError::InsufficientPad { have, need: n_eos });
    }
    Ok((state.tokens.len() - n_eos..state.tokens.len()).collect())
}

/// Outcome of one patching run: raw generation-region texts of the three
/// decodes (donor clean, recipient counterfactual, and patched recipient).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterventionRun {
    pub clean_text: String,
    pub cf_text: String,
    pub patched_text: String,
}

/// Run the full intervention: decode both sides normally, capture the donor's
/// trailing-EOS hidden states at `layer` from a single forward over its
/// initial (all-mask) state, splice them into the recipient's pad tail, and
/// decode the recipient under the patch.
#[allow(clippy::too_many_arguments)]
pub fn run_intervention<T: Scalar>(
    model: &ModelState<T>,
    vocab: &Vocab,
    clean_prompt: &str,
    cf_prompt: &str,
    region: &GenRegion,
    decode_cfg: &DecodeConfig,
    layer: usize,
    n_eos: usize,
) -> Result<InterventionRun, PatchError> {
    if !matches!(region, GenRegion::Pad { .. }) {
        return Err(PatchError::NoPadRegion);
    }
    let clean_state = build_start_state(vocab, clean_prompt, region)?;
    let cf_state = build_start_state(vocab, cf_prompt, region)?;
    let positions = trailing_eos_positions(&clean_state, n_eos)?;

    let attn_clean = AttnSpec {
        mode: decode_cfg.attn,
        prompt_len: clean_state.prompt_len,
        gen_len: Some(clean_state.region_len),
    };
    let capture = capture_hidden(
        model,
        &clean_state.tokens,
        &attn_clean,
        layer,
        clean_state.region_start,
        &positions,
    )?;
    let patch = capture.to_patch(cf_state.region_start);

    let clean = decode_iterative(model, &clean_state, decode_cfg)?;
    let cf = decode_iterative(model, &cf_state, decode_cfg)?;
    let patched = decode_iterative_patched(model, &cf_state, decode_cfg, Some(&patch))?;

    Ok(InterventionRun {
        clean_text: clean.answer_text(vocab, &clean_state)?,
        cf_text: cf.answer_text(vocab, &cf_state)?,
        patched_text: patched.answer_text(vocab, &cf_state)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttributionLabel {
    Clean,
    Counterfactual,
    Neither,
}

/// Whose answer the patched output matches, with the per-side scores that
/// decided it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attribution {
    pub label: AttributionLabel,
    pub clean_score: f64,
    pub cf_score: f64,
}

fn label_from_scores(clean_score: f64, cf_score: f64) -> AttributionLabel {
    if clean_score > cf_score {
        AttributionLabel::Clean
    } else if cf_score > clean_score {
        AttributionLabel::Counterfactual
    } else {
        AttributionLabel::Neither
    }
}

/// Everything a box was ever said or predicted to hold on one side:
/// the true contents plus the objects that side's unpatched decode produced.
pub fn entity_side_set(target: &str, generation: &str) -> BTreeSet<String> {
    let mut set = parse_object_set(target);
    set.extend(parse_object_set(generation));
    set
}

/// Fraction of predicted objects that belong to `side`. An empty prediction
/// scores 1 when the side's set is empty too, else 0.
pub fn entity_side_score(pred: &str, side: &BTreeSet<String>) -> f64 {
    let objs = parse_object_set(pred);
    if objs.is_empty() {
        return if side.is_empty() { 1.0 } else { 0.0 };
    }
    objs.iter().filter(|o| side.contains(*o)).count() as f64 / objs.len() as f64
}

/// Attribute a patched Addition or Sudoku output to one side. Addition uses
/// exact match against each side's target, Sudoku Levenshtein similarity.
pub fn attribute_output(
    kind: TaskKind,
    patched: &str,
    clean_ref: &str,
    cf_ref: &str,
) -> Attribution {
    let (clean_score, cf_score) = match kind {
        TaskKind::Addition => (
            f64::from(exact_match(patched, clean_ref)),
            f64::from(exact_match(patched, cf_ref)),
        ),
        TaskKind::Sudoku => (
            levenshtein_similarity(patched, clean_ref),
            levenshtein_similarity(patched, cf_ref),
        ),
        TaskKind::EntityTracking => {
            // entity needs side sets; delegate for targets-only callers
            let clean = entity_side_set(clean_ref, "");
            let cf = entity_side_set(cf_ref, "");
            (entity_side_score(patched, &clean), entity_side_score(patched, &cf))
        }
    };
    Attribution { label: label_from_scores(clean_score, cf_score), clean_score, cf_score }
}

/// Entity attribution with full side sets (targets plus each side's own
/// uncorrupted generation).
pub fn attribute_entity(
    patched: &str,
    clean_side: &BTreeSet<String>,
    cf_side: &BTreeSet<String>,
) -> Attribution {
    let clean_score = entity_side_score(patched, clean_side);
    let cf_score = entity_side_score(patched, cf_side);
    Attribution { label: label_from_scores(clean_score, cf_score), clean_score, cf_score }
}
