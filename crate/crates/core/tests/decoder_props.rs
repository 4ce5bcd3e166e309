//! Property tests for the decoder pipeline: fix schedules, block budgets,
//! corruption, and end-to-end decode invariants on a fixed tiny model.

use std::sync::OnceLock;

use eoslab_core::decode::{
    block_step_budgets, build_start_state, decode_iterative, decode_single_pass, fix_schedule,
    DecodeConfig, GenRegion,
};
use eoslab_core::diffusion::{build_train_example, corrupt};
use eoslab_core::net::{init_model, AttnMode, ModelConfig, ModelState};
use eoslab_core::textcodec::{normalize, Vocab, MASK_ID};
use proptest::prelude::*;
use rand::SeedableRng;

fn vocab() -> &'static Vocab {
    static V: OnceLock<Vocab> = OnceLock::new();
    V.get_or_init(|| {
        Vocab::build([
            "What is the result of 99+18-23?",
            "The final result is 0123456789",
            "Box 7 contains the key and the plant",
        ])
    })
}

fn model() -> &'static ModelState<f32> {
    static M: OnceLock<ModelState<f32>> = OnceLock::new();
    M.get_or_init(|| {
        init_model(
            ModelConfig {
                n_layers: 2,
                d_model: 16,
                n_heads: 4,
                d_ff: 32,
                vocab_size: vocab().len(),
                max_seq_len: 96,
                attn_mode: AttnMode::FullBidirectional,
            },
            2024,
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn schedule_partitions_masks(n in 1usize..200, s in 1usize..50) {
        let sched = fix_schedule(n, s);
        prop_assert_eq!(sched.iter().sum::<usize>(), n);
        prop_assert_eq!(sched.len(), s.min(n));
        prop_assert!(sched.iter().all(|&k| k >= 1));
        // ceil-first: non-increasing, spread differs by at most one
        prop_assert!(sched.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(sched[0] - sched[sched.len() - 1] <= 1);
    }

    #[test]
    fn budgets_respect_bounds(
        counts in prop::collection::vec(0usize..30, 1..6),
        steps in 1usize..40,
    ) {
        let budgets = block_step_budgets(&counts, steps);
        prop_assert_eq!(budgets.len(), counts.len());
        for (b, (&m, &q)) in counts.iter().zip(&budgets).enumerate() {
            if m == 0 {
                prop_assert_eq!(q, 0, "block {}", b);
            } else {
                prop_assert!((1..=m).contains(&q), "block {}: budget {} masks {}", b, q, m);
            }
        }
    }

    #[test]
    fn corruption_never_touches_protected(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let ex = build_train_example(
            vocab(),
            "What is the result of 99+18-23?",
            "The final result is 94",
            5,
        ).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let (tokens, masked) = corrupt(&ex.tokens, &ex.protected, t, &mut rng);
        for i in 0..tokens.len() {
            if ex.protected[i] {
                prop_assert_eq!(tokens[i], ex.tokens[i]);
                prop_assert!(!masked[i]);
            }
            prop_assert_eq!(masked[i], tokens[i] == MASK_ID && ex.tokens[i] != MASK_ID);
        }
        if t == 1.0 {
            prop_assert!(masked.iter().zip(&ex.protected).all(|(&m, &p)| m == !p));
        }
    }

    #[test]
    fn normalize_is_idempotent(s in "[a-zA-Z0-9+\\-=/;:,.?! ]{0,40}") {
        let once = normalize(&s);
        prop_assert_eq!(normalize(&once), once);
    }
}

proptest! {
    // forward passes per case make these pricier; keep the volume in the
    // cheap suites above
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn decode_fills_region_and_preserves_prompt(
        gen_len in 1usize..12,
        steps in 1usize..8,
        pad in 0usize..6,
    ) {
        let region = if pad == 0 {
            GenRegion::Length { gen_len }
        } else {
            GenRegion::Pad { n_masks: gen_len, eos_pad: pad }
        };
        let s = build_start_state(vocab(), "What is the result of 99+18-23?", &region).unwrap();
        let r = decode_iterative(model(), &s, &DecodeConfig::full_attention(steps)).unwrap();
        prop_assert!(r.tokens[s.region_start..s.region_start + gen_len]
            .iter()
            .all(|&t| t != MASK_ID));
        prop_assert_eq!(&r.tokens[..s.prompt_len], &s.tokens[..s.prompt_len]);
        prop_assert_eq!(&r.tokens[s.region_start + gen_len..],
            &s.tokens[s.region_start + gen_len..]);
        let fixed: usize = r.trace.iter().map(|t| t.fixed.len()).sum();
        prop_assert_eq!(fixed, gen_len);
    }

    #[test]
    fn single_pass_is_steps_one(gen_len in 1usize..12) {
        let s = build_start_state(
            vocab(),
            "What is the result of 99+18-23?",
            &GenRegion::Length { gen_len },
        ).unwrap();
        let one = decode_iterative(model(), &s, &DecodeConfig::full_attention(1)).unwrap();
        let single = decode_single_pass(model(), &s, AttnMode::FullBidirectional).unwrap();
        prop_assert_eq!(one, single);
    }

    #[test]
    fn whole_region_block_equals_full(gen_len in 1usize..12, steps in 1usize..6) {
        let s = build_start_state(
            vocab(),
            "What is the result of 99+18-23?",
            &GenRegion::Length { gen_len },
        ).unwrap();
        let full = decode_iterative(model(), &s, &DecodeConfig::full_attention(steps)).unwrap();
        let block = decode_iterative(
            model(),
            &s,
            &DecodeConfig {
                steps,
                attn: AttnMode::BlockCausal { block_len: gen_len },
                threshold: None,
            },
        ).unwrap();
        prop_assert_eq!(full, block);
    }

    #[test]
    fn confidences_are_probabilities(gen_len in 1usize..10, steps in 1usize..5) {
        let s = build_start_state(
            vocab(),
            "What is the result of 99+18-23?",
            &GenRegion::Length { gen_len },
        ).unwrap();
        let r = decode_iterative(model(), &s, &DecodeConfig::full_attention(steps)).unwrap();
        for step in &r.trace {
            for f in &step.fixed {
                prop_assert!((0.0..=1.0).contains(&f.confidence));
            }
        }
    }
}
