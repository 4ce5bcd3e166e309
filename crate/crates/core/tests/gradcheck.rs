//! End-to-end gradient verification in f64: analytic backprop against
//! central finite differences on realistic corrupted sequences.

use eoslab_core::diffusion::{build_train_example, corrupt_resample, grad_check};
use eoslab_core::net::{init_model, AttnMode, AttnSpec, ModelConfig};
use eoslab_core::rng::seeded;
use eoslab_core::textcodec::Vocab;

fn vocab() -> Vocab {
    Vocab::build([
        "What is the result of 99+18-23?",
        "The final result is 94",
        "99+18=117;117-23=94;final 94",
    ])
}

#[test]
fn three_layer_model_passes_gradcheck() {
    let v = vocab();
    let cfg = ModelConfig {
        n_layers: 3,
        d_model: 24,
        n_heads: 4,
        d_ff: 48,
        vocab_size: v.len(),
        max_seq_len: 96,
        attn_mode: AttnMode::FullBidirectional,
    };
    let model = init_model::<f64>(cfg, 99).unwrap();
    let ex = build_train_example(
        &v,
        "What is the result of 99+18-23?",
        "The final result is 94",
        6,
    )
    .unwrap();
    let mut rng = seeded(12);
    let (_, corrupted, masked) = corrupt_resample(&ex.tokens, &ex.protected, &mut rng).unwrap();
    let err = grad_check(
        &model,
        &corrupted,
        &ex.tokens,
        &masked,
        &AttnSpec::full(),
        80,
        5,
    )
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn block_causal_trace_target_passes_gradcheck() {
    let v = vocab();
    let cfg = ModelConfig {
        n_layers: 2,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        vocab_size: v.len(),
        max_seq_len: 96,
        attn_mode: AttnMode::BlockCausal { block_len: 8 },
    };
    let model = init_model::<f64>(cfg, 100).unwrap();
    let ex = build_train_example(
        &v,
        "What is the result of 99+18-23?",
        "99+18=117;117-23=94;final 94",
        4,
    )
    .unwrap();
    let prompt_len = 1 + v.encode("What is the result of 99+18-23?").unwrap().len() + 1;
    let mut rng = seeded(21);
    let (_, corrupted, masked) = corrupt_resample(&ex.tokens, &ex.protected, &mut rng).unwrap();
    let attn = AttnSpec { mode: cfg.attn_mode, prompt_len, gen_len: None };
    let err = grad_check(&model, &corrupted, &ex.tokens, &masked, &attn, 80, 6).unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}
