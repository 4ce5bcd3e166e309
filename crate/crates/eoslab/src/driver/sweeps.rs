//! Generation-length and EoS-padding sweeps.

use anyhow::Result;
use eoslab_core::decode::{DecodeConfig, GenRegion};
use eoslab_core::net::{AttnMode, ModelState};
use eoslab_core::{TaskInstance, Vocab};

use super::manifest::{LengthEntry, Manifest};
use super::{evaluate, mask_budget, uniform_kind, PromptMode};
use crate::reports::InstanceRow;

/// Default pad ladder: powers of two from 1 to 128.
pub fn default_pads() -> Vec<usize> {
    (0..8).map(|i| 1usize << i).collect()
}

/// Default generation lengths: 20 to 80 in steps of 10.
pub fn default_lengths() -> Vec<usize> {
    (2..=8).map(|i| i * 10).collect()
}

/// Sweep the generation-region length L with steps = L/2 and one attention
/// block spanning the whole region (block = L).
pub fn run_length_sweep(
    model: &ModelState<f32>,
    vocab: &Vocab,
    instances: &[TaskInstance],
    lengths: &[usize],
    mode: PromptMode,
) -> Result<(Vec<InstanceRow>, Manifest)> {
    let kind = uniform_kind(instances)?;
    anyhow::ensure!(!lengths.is_empty(), "no lengths given");
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for &length in lengths {
        anyhow::ensure!(length >= 2 && length % 2 == 0, "lengths must be even, got {length}");
        let steps = length / 2;
        let cfg = DecodeConfig {
            steps,
            attn: AttnMode::BlockCausal { block_len: length },
            threshold: None,
        };
        let region = GenRegion::Length { gen_len: length };
        rows.extend(evaluate(
            model,
            vocab,
            instances,
            &region,
            &cfg,
            mode,
            Some(("length", length as u32)),
        )?);
        entries.push(LengthEntry { length, steps, block_len: length });
    }
    Ok((rows, Manifest::LengthSweep { task: kind.as_str().to_string(), entries }))
}

/// Sweep the EoS pad length at a fixed mask budget and step count.
pub fn run_eos_sweep(
    model: &ModelState<f32>,
    vocab: &Vocab,
    instances: &[TaskInstance],
    steps: usize,
    pads: &[usize],
    mode: PromptMode,
) -> Result<(Vec<InstanceRow>, Manifest)> {
    let kind = uniform_kind(instances)?;
    anyhow::ensure!(!pads.is_empty(), "no pad lengths given");
    let n_masks = mask_budget(kind);
    let cfg = DecodeConfig { steps, attn: AttnMode::FullBidirectional, threshold: None };
    let mut rows = Vec::new();
    for &pad in pads {
        let region = GenRegion::Pad { n_masks, eos_pad: pad };
        rows.extend(evaluate(
            model,
            vocab,
            instances,
            &region,
            &cfg,
            mode,
            Some(("eos_pad", pad as u32)),
        )?);
    }
    Ok((
        rows,
        Manifest::EosSweep {
            task: kind.as_str().to_string(),
            n_masks,
            steps,
            pads: pads.to_vec(),
        },
    ))
}
