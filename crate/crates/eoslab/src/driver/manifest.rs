//! Experiment manifests: the parameters a run actually used, emitted next to
//! its outputs so `verify` can check the experiment shape after the fact.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthEntry {
    pub length: usize,
    pub steps: usize,
    pub block_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Manifest {
    LengthSweep {
        task: String,
        entries: Vec<LengthEntry>,
    },
    EosSweep {
        task: String,
        n_masks: usize,
        steps: usize,
        pads: Vec<usize>,
    },
    PatchExperiment {
        task: String,
        layers: Vec<usize>,
        n_eos: usize,
        eos_pad: usize,
        controls: Vec<String>,
        /// false when the EoS count was overridden on the command line
        is_default: bool,
    },
}

pub fn save(path: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Experiment-shape rules. Returns human-readable violations; empty = pass.
pub fn check(manifest: &Manifest) -> Vec<String> {
    let mut v = Vec::new();
    match manifest {
        Manifest::LengthSweep { entries, .. } => {
            if entries.is_empty() {
                v.push("length sweep has no entries".into());
            }
            for e in entries {
                if e.steps * 2 != e.length {
                    v.push(format!(
                        "length {}: steps {} != length/2 (lengths must be even)",
                        e.length, e.steps
                    ));
                }
                if e.block_len != e.length {
                    v.push(format!(
                        "length {}: block_len {} != length",
                        e.length, e.block_len
                    ));
                }
            }
        }
        Manifest::EosSweep { task, n_masks, steps, pads } => {
            let expected = match task.as_str() {
                "addition" => Some(12),
                "entity" => Some(22),
                "sudoku" => Some(19),
                _ => None,
            };
            match expected {
                Some(m) if m != *n_masks => {
                    v.push(format!("task {task}: n_masks {n_masks} != {m}"))
                }
                None => v.push(format!("unknown task `{task}`")),
                _ => {}
            }
            if *steps == 0 {
                v.push("eos sweep steps must be >= 1".into());
            }
            if pads.first() != Some(&1) {
                v.push("pad ladder must start at 1".into());
            }
            for w in pads.windows(2) {
                if w[1] != 2 * w[0] {
                    v.push(format!("pad ladder not doubling: {} -> {}", w[0], w[1]));
                }
            }
            if pads.last().is_some_and(|&p| p > 128) {
                v.push("pad ladder exceeds 128".into());
            }
        }
        Manifest::PatchExperiment { layers, n_eos, eos_pad, controls, is_default, .. } => {
            if layers.is_empty() {
                v.push("patch experiment has no layers".into());
            }
            if *is_default && *n_eos != 16 {
                v.push(format!("default patch run must use 16 EoS positions, got {n_eos}"));
            }
            if eos_pad < n_eos {
                v.push(format!("eos_pad {eos_pad} < n_eos {n_eos}"));
            }
            for required in ["self", "full"] {
                if !controls.iter().any(|c| c == required) {
                    v.push(format!("missing `{required}` control"));
                }
            }
        }
    }
    v
}
