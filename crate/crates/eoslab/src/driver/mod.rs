//! Experiment orchestration: dataset generation, training, evaluation, and
//! the sweep/patch experiment shapes.

pub mod manifest;
pub mod patch;
pub mod sweeps;
pub mod verify;

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{Context, Result};
use eoslab_core::corpus::{
    gen_addition, gen_entity_tracking, gen_sudoku, render_prompt, render_target, PromptStyle,
};
use eoslab_core::decode::{
    build_start_state, decode_iterative, extract_answer, DecodeConfig, GenRegion,
};
use eoslab_core::diffusion::{train, TrainConfig, TrainingRecord};
use eoslab_core::evalmetrics::score;
use eoslab_core::net::ModelState;
use eoslab_core::textcodec::{count_semantic_tokens, TokenSeq, EOS_ID};
use eoslab_core::{TaskInstance, TaskKind, Vocab};
use rayon::prelude::*;

use crate::reports::InstanceRow;

/// How the prompt side of a sequence is rendered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptMode {
    /// Bare task content (expression / scenario / grid). Default: short
    /// sequences keep desk-scale training honest.
    Minimal,
    /// Full instruction template with system text (and Sudoku few-shots).
    Templated,
}

/// Decode-time mask budget per task.
pub fn mask_budget(kind: TaskKind) -> usize {
    match kind {
        TaskKind::Addition => 12,
        TaskKind::EntityTracking => 22,
        TaskKind::Sudoku => 19,
    }
}

/// Published dataset sizes: Addition 1,000; EntityTracking 12,900;
/// Sudoku 2,400.
pub fn generate_dataset(kind: TaskKind, seed: u64, with_trace: bool) -> Vec<TaskInstance> {
    match kind {
        TaskKind::Addition => gen_addition(seed, 200, with_trace),
        TaskKind::EntityTracking => gen_entity_tracking(seed, 100),
        TaskKind::Sudoku => gen_sudoku(seed, 200),
    }
}

pub fn prompt_text(
    inst: &TaskInstance,
    mode: PromptMode,
    style: PromptStyle,
) -> Result<String> {
    Ok(match mode {
        PromptMode::Minimal => inst.prompt.clone(),
        PromptMode::Templated => render_prompt(inst, style)?,
    })
}

pub fn target_text(inst: &TaskInstance, style: PromptStyle) -> Result<String> {
    Ok(render_target(inst, style)?)
}

/// Deterministic vocabulary over everything any mode or style could render
/// for these instances.
pub fn build_vocab(instances: &[TaskInstance]) -> Result<Vocab> {
    let mut texts: Vec<String> = Vec::new();
    for inst in instances {
        texts.push(inst.prompt.clone());
        texts.push(render_prompt(inst, PromptStyle::Immediate)?);
        texts.push(render_target(inst, PromptStyle::Immediate)?);
        if inst.trace.is_some() {
            texts.push(render_prompt(inst, PromptStyle::Trace)?);
            texts.push(render_target(inst, PromptStyle::Trace)?);
        }
    }
    Ok(Vocab::build(texts.iter().map(|s| s.as_str())))
}

pub fn training_pairs(
    instances: &[TaskInstance],
    mode: PromptMode,
    style: PromptStyle,
) -> Result<Vec<(String, String)>> {
    instances
        .iter()
        .map(|i| Ok((prompt_text(i, mode, style)?, target_text(i, style)?)))
        .collect()
}

/// Train with the wall clock feeding the records.
pub fn train_model(
    model: &mut ModelState<f32>,
    vocab: &Vocab,
    pairs: &[(String, String)],
    cfg: &TrainConfig,
) -> Result<Vec<TrainingRecord>> {
    let start = Instant::now();
    let records = train(model, vocab, pairs, cfg, move || start.elapsed().as_millis() as u64)?;
    Ok(records)
}

/// Decode one instance and score it against its reference target.
pub fn evaluate_instance(
    model: &ModelState<f32>,
    vocab: &Vocab,
    inst: &TaskInstance,
    region: &GenRegion,
    decode_cfg: &DecodeConfig,
    mode: PromptMode,
) -> Result<InstanceRow> {
    let prompt = prompt_text(inst, mode, PromptStyle::Immediate)?;
    let state = build_start_state(vocab, &prompt, region)
        .with_context(|| format!("instance {}", inst.id))?;
    let result = decode_iterative(model, &state, decode_cfg)?;
    let text = result.answer_text(vocab, &state)?;
    let answer = extract_answer(&text).unwrap_or_default();
    let region_tokens =
        &result.tokens[state.region_start..state.region_start + state.region_len];
    let seq = TokenSeq::new(region_tokens.to_vec());
    Ok(InstanceRow {
        id: inst.id.clone(),
        kind: inst.kind,
        score: score(inst.kind, &answer, &inst.target),
        semantic: count_semantic_tokens(&seq),
        eos: region_tokens.iter().filter(|&&t| t == EOS_ID).count(),
        axes: inst.difficulty.clone(),
    })
}

/// Decode and score a batch in parallel, attaching an optional sweep axis.
pub fn evaluate(
    model: &ModelState<f32>,
    vocab: &Vocab,
    instances: &[TaskInstance],
    region: &GenRegion,
    decode_cfg: &DecodeConfig,
    mode: PromptMode,
    extra_axis: Option<(&str, u32)>,
) -> Result<Vec<InstanceRow>> {
    let mut rows: Vec<InstanceRow> = instances
        .par_iter()
        .map(|inst| evaluate_instance(model, vocab, inst, region, decode_cfg, mode))
        .collect::<Result<_>>()?;
    if let Some((name, value)) = extra_axis {
        for r in &mut rows {
            r.axes.insert(name.to_string(), value);
        }
    }
    Ok(rows)
}

/// The single task kind of a dataset; mixed datasets are rejected.
pub fn uniform_kind(instances: &[TaskInstance]) -> Result<TaskKind> {
    let first = instances.first().context("empty dataset")?.kind;
    anyhow::ensure!(
        instances.iter().all(|i| i.kind == first),
        "dataset mixes task kinds"
    );
    Ok(first)
}

#[allow(unused)]
fn axes_of(inst: &TaskInstance) -> BTreeMap<String, u32> {
    inst.difficulty.clone()
}
