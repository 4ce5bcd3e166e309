//! Command-line interface.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error (clap),
//! 3 IO/data error.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eoslab_core::corpus::PromptStyle;
use eoslab_core::decode::{DecodeConfig, GenRegion};
use eoslab_core::diffusion::TrainConfig;
use eoslab_core::net::{init_model, AttnMode, ModelConfig};
use eoslab_core::{TaskInstance, TaskKind};

use crate::driver::{
    self, build_vocab, generate_dataset, mask_budget, patch::run_patch_experiment,
    sweeps::{default_lengths, default_pads, run_eos_sweep, run_length_sweep},
    training_pairs, uniform_kind, verify as verify_mod, PromptMode,
};
use crate::{checkpoint, jsonl, reports, vocabfile};

#[derive(Parser)]
#[command(name = "eoslab", about = "Masked-diffusion language modeling lab", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Addition,
    Entity,
    Sudoku,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> TaskKind {
        match t {
            TaskArg::Addition => TaskKind::Addition,
            TaskArg::Entity => TaskKind::EntityTracking,
            TaskArg::Sudoku => TaskKind::Sudoku,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Minimal,
    Templated,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> PromptMode {
        match m {
            ModeArg::Minimal => PromptMode::Minimal,
            ModeArg::Templated => PromptMode::Templated,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Immediate,
    Trace,
}

impl From<StyleArg> for PromptStyle {
    fn from(s: StyleArg) -> PromptStyle {
        match s {
            StyleArg::Immediate => PromptStyle::Immediate,
            StyleArg::Trace => PromptStyle::Trace,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    n_heads: usize,
    #[arg(long, default_value_t = 128)]
    d_ff: usize,
    /// 0 = derive from the data (longest training sequence plus pad room)
    #[arg(long, default_value_t = 0)]
    max_seq_len: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a task dataset (JSONL) and optionally its vocabulary.
    GenData {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Attach derivation traces (Addition only).
        #[arg(long)]
        with_trace: bool,
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab_out: PathBuf,
        #[arg(long)]
        train_csv: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        pad_min: usize,
        #[arg(long, default_value_t = 128)]
        pad_max: usize,
        #[arg(long, default_value_t = 50)]
        log_every: usize,
        #[arg(long, value_enum, default_value = "immediate")]
        style: StyleArg,
        #[arg(long, value_enum, default_value = "minimal")]
        mode: ModeArg,
        /// Train on only the first N instances.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Decode a dataset with a trained model and score it.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        steps: usize,
        /// Fixed-length generation region (defaults to the task mask budget).
        #[arg(long)]
        gen_len: Option<usize>,
        /// Pad-mode mask count; combine with --eos-pad.
        #[arg(long)]
        n_masks: Option<usize>,
        /// Pad-mode EoS tail length; selects pad mode when given.
        #[arg(long)]
        eos_pad: Option<usize>,
        #[arg(long)]
        block_len: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value = "minimal")]
        mode: ModeArg,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run the generation-length sweep (steps = L/2, block = L).
    SweepLength {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated even lengths (default 20,30,...,80).
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value = "minimal")]
        mode: ModeArg,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run the EoS-padding sweep (constant steps, task mask budget).
    SweepEos {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 6)]
        steps: usize,
        /// Comma-separated pad ladder (default 1,2,4,...,128).
        #[arg(long, value_delimiter = ',')]
        pads: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value = "minimal")]
        mode: ModeArg,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run the trailing-EoS activation-patching experiment.
    Patch {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Layers to patch (default: every layer).
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        #[arg(long)]
        n_eos: Option<usize>,
        #[arg(long, default_value_t = 32)]
        eos_pad: usize,
        #[arg(long, default_value_t = 6)]
        steps: usize,
        #[arg(long, value_enum, default_value = "minimal")]
        mode: ModeArg,
        #[arg(long, default_value_t = 16)]
        limit: usize,
    },
    /// Aggregate a per-instance CSV along one difficulty axis.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check datasets, manifests, and checkpoints. Exit 1 on violations.
    Verify {
        #[arg(long)]
        data: Vec<PathBuf>,
        #[arg(long)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
}

fn load_data(path: &PathBuf, limit: Option<usize>) -> Result<Vec<TaskInstance>> {
    let mut data: Vec<TaskInstance> = jsonl::read_jsonl(path)?;
    if let Some(n) = limit {
        data.truncate(n);
    }
    anyhow::ensure!(!data.is_empty(), "dataset {} is empty", path.display());
    Ok(data)
}

/// Longest training sequence (with the largest pad) plus decode headroom.
fn auto_max_seq_len(
    pairs: &[(String, String)],
    vocab: &eoslab_core::Vocab,
    pad_max: usize,
    budget: usize,
) -> Result<usize> {
    let mut longest_prompt = 0;
    let mut longest_train = 0;
    for (p, t) in pairs {
        let lp = vocab.encode(p)?.len();
        let lt = vocab.encode(t)?.len();
        longest_prompt = longest_prompt.max(lp);
        longest_train = longest_train.max(3 + lp + lt + pad_max);
    }
    // decode: prompt + mask budget + a full 128-pad tail
    let decode_need = 2 + longest_prompt + budget + 128;
    Ok(longest_train.max(decode_need))
}

/// Returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData { task, seed, out, with_trace, vocab_out } => {
            let data = generate_dataset(task.into(), seed, with_trace);
            jsonl::write_jsonl(&out, &data)?;
            if let Some(vp) = vocab_out {
                vocabfile::save(&vp, &build_vocab(&data)?)?;
            }
            println!("wrote {} instances to {}", data.len(), out.display());
            Ok(0)
        }
        Command::Train {
            data,
            out,
            vocab_out,
            train_csv,
            model,
            steps,
            batch_size,
            lr,
            seed,
            pad_min,
            pad_max,
            log_every,
            style,
            mode,
            limit,
        } => {
            let all = load_data(&data, None)?;
            // vocab covers the full dataset even when training on a slice
            let vocab = build_vocab(&all)?;
            let mut slice = all;
            if let Some(n) = limit {
                slice.truncate(n);
            }
            let kind = uniform_kind(&slice)?;
            let pairs = training_pairs(&slice, mode.into(), style.into())?;
            let max_seq_len = if model.max_seq_len > 0 {
                model.max_seq_len
            } else {
                auto_max_seq_len(&pairs, &vocab, pad_max, mask_budget(kind))?
            };
            let cfg = ModelConfig {
                n_layers: model.layers,
                d_model: model.d_model,
                n_heads: model.n_heads,
                d_ff: model.d_ff,
                vocab_size: vocab.len(),
                max_seq_len,
                attn_mode: AttnMode::FullBidirectional,
            };
            let mut net = init_model::<f32>(cfg, seed)?;
            let tcfg = TrainConfig {
                steps,
                batch_size,
                lr,
                warmup_steps: eoslab_core::diffusion::DEFAULT_WARMUP_STEPS,
                seed,
                eos_pad_range: (pad_min, pad_max),
                log_every,
            };
            let records = driver::train_model(&mut net, &vocab, &pairs, &tcfg)?;
            checkpoint::save(&out, &net).context("saving checkpoint")?;
            vocabfile::save(&vocab_out, &vocab)?;
            if let Some(csv) = train_csv {
                reports::write_training_csv(&csv, &records)?;
            }
            let last = records.last().context("no training records")?;
            println!(
                "trained {} steps, final loss {:.4}, masked_acc {:.3}",
                steps, last.loss, last.masked_acc
            );
            Ok(0)
        }
        Command::Decode {
            model,
            vocab,
            data,
            out,
            steps,
            gen_len,
            n_masks,
            eos_pad,
            block_len,
            threshold,
            mode,
            limit,
        } => {
            let net = checkpoint::load(&model)?;
            let vocab = vocabfile::load(&vocab)?;
            let insts = load_data(&data, limit)?;
            let kind = uniform_kind(&insts)?;
            let region = match (gen_len, eos_pad) {
                (Some(_), Some(_)) => anyhow::bail!("--gen-len conflicts with --eos-pad"),
                (None, Some(pad)) => GenRegion::Pad {
                    n_masks: n_masks.unwrap_or_else(|| mask_budget(kind)),
                    eos_pad: pad,
                },
                (len, None) => GenRegion::Length {
                    gen_len: len.unwrap_or_else(|| mask_budget(kind)),
                },
            };
            let attn = match block_len {
                Some(b) => AttnMode::BlockCausal { block_len: b },
                None => AttnMode::FullBidirectional,
            };
            let cfg = DecodeConfig { steps, attn, threshold };
            let rows =
                driver::evaluate(&net, &vocab, &insts, &region, &cfg, mode.into(), None)?;
            reports::write_instance_csv(&out, &rows)?;
            let mean = rows.iter().map(|r| r.score).sum::<f64>() / rows.len() as f64;
            println!("decoded {} instances, mean score {:.3}", rows.len(), mean);
            Ok(0)
        }
        Command::SweepLength { model, vocab, data, out, manifest, lengths, mode, limit } => {
            let net = checkpoint::load(&model)?;
            let vocab = vocabfile::load(&vocab)?;
            let insts = load_data(&data, limit)?;
            let lengths = lengths.unwrap_or_else(default_lengths);
            let (rows, m) = run_length_sweep(&net, &vocab, &insts, &lengths, mode.into())?;
            reports::write_instance_csv(&out, &rows)?;
            driver::manifest::save(&manifest, &m)?;
            println!("length sweep: {} rows", rows.len());
            Ok(0)
        }
        Command::SweepEos { model, vocab, data, out, manifest, steps, pads, mode, limit } => {
            let net = checkpoint::load(&model)?;
            let vocab = vocabfile::load(&vocab)?;
            let insts = load_data(&data, limit)?;
            let pads = pads.unwrap_or_else(default_pads);
            let (rows, m) = run_eos_sweep(&net, &vocab, &insts, steps, &pads, mode.into())?;
            reports::write_instance_csv(&out, &rows)?;
            driver::manifest::save(&manifest, &m)?;
            println!("eos sweep: {} rows", rows.len());
            Ok(0)
        }
        Command::Patch {
            model,
            vocab,
            data,
            out,
            summary,
            manifest,
            layers,
            n_eos,
            eos_pad,
            steps,
            mode,
            limit,
        } => {
            let net = checkpoint::load(&model)?;
            let vocab = vocabfile::load(&vocab)?;
            let insts = load_data(&data, None)?;
            let layers = layers.unwrap_or_else(|| (0..net.config.n_layers).collect());
            let is_default = n_eos.is_none();
            let n_eos = n_eos.unwrap_or(16);
            let (rows, sum, m) = run_patch_experiment(
                &net, &vocab, &insts, limit, &layers, n_eos, eos_pad, steps, mode.into(),
                is_default,
            )?;
            jsonl::write_jsonl(&out, &rows)?;
            reports::write_patch_summary_csv(&summary, &sum)?;
            driver::manifest::save(&manifest, &m)?;
            println!("patched {} runs", rows.len());
            Ok(0)
        }
        Command::Report { input, axis, out } => {
            let rows = reports::read_instance_csv(&input)?;
            reports::write_axis_summary_csv(&out, &rows, &axis)?;
            println!("wrote axis summary for `{axis}`");
            Ok(0)
        }
        Command::Verify { data, manifest, checkpoint } => {
            anyhow::ensure!(
                !(data.is_empty() && manifest.is_empty() && checkpoint.is_empty()),
                "nothing to verify"
            );
            let mut violations = Vec::new();
            for p in &data {
                for v in verify_mod::verify_dataset_file(p)? {
                    violations.push(format!("{}: {v}", p.display()));
                }
            }
            for p in &manifest {
                for v in verify_mod::verify_manifest_file(p)? {
                    violations.push(format!("{}: {v}", p.display()));
                }
            }
            for p in &checkpoint {
                violations.extend(verify_mod::verify_checkpoint_file(p)?);
            }
            if violations.is_empty() {
                println!("ok");
                Ok(0)
            } else {
                for v in &violations {
                    eprintln!("violation: {v}");
                }
                Ok(1)
            }
        }
    }
}
