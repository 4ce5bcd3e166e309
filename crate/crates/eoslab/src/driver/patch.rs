//! The trailing-EoS activation-patching experiment, with identity and
//! full-replacement controls.

use std::collections::BTreeMap;

use anyhow::Result;
use eoslab_core::corpus::make_counterfactual;
use eoslab_core::decode::{
    build_start_state, decode_iterative, decode_iterative_patched, extract_answer, DecodeConfig,
    GenRegion,
};
use eoslab_core::net::{AttnSpec, ModelState};
use eoslab_core::patchbench::{
    attribute_entity, attribute_output, capture_hidden, entity_side_set, run_intervention,
    Attribution, AttributionLabel,
};
use eoslab_core::corpus::PromptStyle;
use eoslab_core::{TaskInstance, TaskKind, Vocab};
use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use super::{mask_budget, prompt_text, uniform_kind, PromptMode};
use crate::reports::PatchSummaryRow;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchInstanceRow {
    pub id: String,
    pub layer: usize,
    pub n_eos: usize,
    pub control: String,
    pub label: String,
    pub clean_score: f64,
    pub cf_score: f64,
}

fn label_str(l: AttributionLabel) -> &'static str {
    match l {
        AttributionLabel::Clean => "clean",
        AttributionLabel::Counterfactual => "counterfactual",
        AttributionLabel::Neither => "neither",
    }
}

fn answer_of(text: &str) -> String {
    extract_answer(text).unwrap_or_default()
}

fn attribute(
    kind: TaskKind,
    patched_text: &str,
    clean_text: &str,
    cf_text: &str,
    clean_target: &str,
    cf_target: &str,
) -> Attribution {
    let patched = answer_of(patched_text);
    match kind {
        TaskKind::EntityTracking => {
            let clean_side = entity_side_set(clean_target, &answer_of(clean_text));
            let cf_side = entity_side_set(cf_target, &answer_of(cf_text));
            attribute_entity(&patched, &clean_side, &cf_side)
        }
        _ => attribute_output(kind, &patched, clean_target, cf_target),
    }
}

/// Patch each instance's trailing-EoS states into its counterfactual at every
/// requested layer; also run the self-patch identity control and the
/// all-positions full-replacement control.
#[allow(clippy::too_many_arguments)]
pub fn run_patch_experiment(
    model: &ModelState<f32>,
    vocab: &Vocab,
    dataset: &[TaskInstance],
    limit: usize,
    layers: &[usize],
    n_eos: usize,
    eos_pad: usize,
    steps: usize,
    mode: PromptMode,
    is_default: bool,
) -> Result<(Vec<PatchInstanceRow>, Vec<PatchSummaryRow>, Manifest)> {
    let kind = uniform_kind(dataset)?;
    anyhow::ensure!(!layers.is_empty(), "no layers given");
    anyhow::ensure!(eos_pad >= n_eos, "eos_pad {eos_pad} < n_eos {n_eos}");
    let region = GenRegion::Pad { n_masks: mask_budget(kind), eos_pad };
    let cfg = DecodeConfig::full_attention(steps);

    let mut rows = Vec::new();
    for inst in dataset.iter().take(limit) {
        let Ok(cf) = make_counterfactual(inst, dataset) else {
            continue; // unpaired instance (e.g. odd addition leftover)
        };
        let clean_prompt = prompt_text(inst, mode, PromptStyle::Immediate)?;
        let cf_prompt = prompt_text(&cf, mode, PromptStyle::Immediate)?;
        for &layer in layers {
            // main run: clean trailing-EoS states into the counterfactual
            let run = run_intervention(
                model, vocab, &clean_prompt, &cf_prompt, &region, &cfg, layer, n_eos,
            )?;
            let a = attribute(
                kind,
                &run.patched_text,
                &run.clean_text,
                &run.cf_text,
                &inst.target,
                &cf.target,
            );
            rows.push(PatchInstanceRow {
                id: inst.id.clone(),
                layer,
                n_eos,
                control: "none".into(),
                label: label_str(a.label).into(),
                clean_score: a.clean_score,
                cf_score: a.cf_score,
            });

            // identity control: donor == recipient, output must not move
            let self_run = run_intervention(
                model, vocab, &clean_prompt, &clean_prompt, &region, &cfg, layer, n_eos,
            )?;
            let identical = self_run.patched_text == self_run.cf_text;
            rows.push(PatchInstanceRow {
                id: inst.id.clone(),
                layer,
                n_eos,
                control: "self".into(),
                label: if identical { "clean" } else { "neither" }.into(),
                clean_score: f64::from(identical),
                cf_score: 0.0,
            });

            // full-replacement control: patching every position at this
            // layer must transfer the donor's single-pass output exactly
            rows.push(full_control_row(
                model, vocab, &clean_prompt, &cf_prompt, &region, layer, n_eos, inst,
            )?);
        }
    }

    let summary = summarize(&rows);
    let manifest = Manifest::PatchExperiment {
        task: kind.as_str().to_string(),
        layers: layers.to_vec(),
        n_eos,
        eos_pad,
        controls: vec!["self".into(), "full".into()],
        is_default,
    };
    Ok((rows, summary, manifest))
}

#[allow(clippy::too_many_arguments)]
fn full_control_row(
    model: &ModelState<f32>,
    vocab: &Vocab,
    clean_prompt: &str,
    cf_prompt: &str,
    region: &GenRegion,
    layer: usize,
    n_eos: usize,
    inst: &TaskInstance,
) -> Result<PatchInstanceRow> {
    let clean_state = build_start_state(vocab, clean_prompt, region)?;
    let cf_state = build_start_state(vocab, cf_prompt, region)?;
    let single = DecodeConfig::full_attention(1);
    let transferred = if clean_state.tokens.len() == cf_state.tokens.len() {
        let attn = AttnSpec { mode: single.attn, prompt_len: clean_state.prompt_len, gen_len: None };
        let all: Vec<usize> = (0..clean_state.tokens.len()).collect();
        let cap = capture_hidden(
            model,
            &clean_state.tokens,
            &attn,
            layer,
            clean_state.region_start,
            &all,
        )?;
        let patch = cap.to_patch(cf_state.region_start);
        let patched = decode_iterative_patched(model, &cf_state, &single, Some(&patch))?;
        let clean = decode_iterative(model, &clean_state, &single)?;
        let r = clean_state.region_start..clean_state.region_start + clean_state.region_len;
        patched.tokens[r.clone()] == clean.tokens[r]
    } else {
        false // length-changing counterfactual: control not applicable
    };
    Ok(PatchInstanceRow {
        id: inst.id.clone(),
        layer,
        n_eos,
        control: "full".into(),
        label: if transferred { "clean" } else { "neither" }.into(),
        clean_score: f64::from(transferred),
        cf_score: 0.0,
    })
}

/// Label fractions per (layer, n_eos, control).
pub fn summarize(rows: &[PatchInstanceRow]) -> Vec<PatchSummaryRow> {
    let mut groups: BTreeMap<(usize, usize, String), (usize, usize, usize, usize)> =
        BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.layer, r.n_eos, r.control.clone())).or_default();
        g.3 += 1;
        match r.label.as_str() {
            "clean" => g.0 += 1,
            "counterfactual" => g.1 += 1,
            _ => g.2 += 1,
        }
    }
    groups
        .into_iter()
        .map(|((layer, n_eos, control), (c, f, n, total))| PatchSummaryRow {
            layer,
            n_eos,
            control,
            frac_clean: c as f64 / total as f64,
            frac_cf: f as f64 / total as f64,
            frac_neither: n as f64 / total as f64,
            count: total,
        })
        .collect()
}
