//! Addition/subtraction expression generator.
//!
//! Operands are uniform in [0,100], operators in {+, -}, and expressions are
//! rejection-sampled until the left-to-right result lands in (0, 1000).
//! Instances are generated in operator-swapped pairs so that every instance
//! has an in-dataset counterfactual whose result also satisfies the range.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::{TaskInstance, TaskKind};
use crate::rng::{derive, seeded};

pub const MIN_OPERANDS: u32 = 2;
pub const MAX_OPERANDS: u32 = 6;

/// Left-to-right evaluation of an operand/operator expression.
pub fn eval_left_to_right(operands: &[i64], plus: &[bool]) -> i64 {
    debug_assert_eq!(plus.len() + 1, operands.len());
    let mut acc = operands[0];
    for (i, &p) in plus.iter().enumerate() {
        if p {
            acc += operands[i + 1];
        } else {
            acc -= operands[i + 1];
        }
    }
    acc
}

fn render_expr(operands: &[i64], plus: &[bool]) -> String {
    let mut s = format!("{}", operands[0]);
    for (i, &p) in plus.iter().enumerate() {
        s.push(if p { '+' } else { '-' });
        s.push_str(&format!("{}", operands[i + 1]));
    }
    s
}

fn render_trace(operands: &[i64], plus: &[bool]) -> String {
    let mut acc = operands[0];
    let mut s = String::new();
    for (i, &p) in plus.iter().enumerate() {
        let next = if p { acc + operands[i + 1] } else { acc - operands[i + 1] };
        if i > 0 {
            s.push(';');
        }
        s.push_str(&format!(
            "{}{}{}={}",
            acc,
            if p { '+' } else { '-' },
            operands[i + 1],
            next
        ));
        acc = next;
    }
    s
}

fn in_range(r: i64) -> bool {
    r > 0 && r < 1000
}

fn make_instance(operands: &[i64], plus: &[bool], with_trace: bool) -> TaskInstance {
    let mut difficulty = BTreeMap::new();
    difficulty.insert(String::from("operand_count"), operands.len() as u32);
    let target = format!("{}", eval_left_to_right(operands, plus));
    let mut inst = TaskInstance::new(
        TaskKind::Addition,
        render_expr(operands, plus),
        target,
        difficulty,
    );
    if with_trace {
        inst.trace = Some(render_trace(operands, plus));
    }
    inst
}

/// `per_level` instances for each operand count in 2..=6, generated as
/// operator-swapped pairs with mutual counterfactual links. Odd `per_level`
/// leaves the last instance of each level unpaired.
pub fn gen_addition(seed: u64, per_level: usize, with_trace: bool) -> Vec<TaskInstance> {
    assert!(per_level >= 1);
    let mut rng = seeded(derive(seed, "gen-addition"));
    let mut out = Vec::with_capacity(per_level * 5);
    for k in MIN_OPERANDS..=MAX_OPERANDS {
        let mut made = 0usize;
        while made < per_level {
            let operands: Vec<i64> = (0..k).map(|_| rng.random_range(0..=100)).collect();
            let plus: Vec<bool> = (0..k - 1).map(|_| rng.random::<bool>()).collect();
            let swapped: Vec<bool> = plus.iter().map(|p| !p).collect();
            if !in_range(eval_left_to_right(&operands, &plus))
                || !in_range(eval_left_to_right(&operands, &swapped))
            {
                continue;
            }
            let mut a = make_instance(&operands, &plus, with_trace);
            if made + 1 < per_level {
                let mut b = make_instance(&operands, &swapped, with_trace);
                if a.id == b.id {
                    // swap changed nothing (all deltas zero); unusable as a pair
                    continue;
                }
                a.counterfactual_id = Some(b.id.clone());
                b.counterfactual_id = Some(a.id.clone());
                out.push(a);
                out.push(b);
                made += 2;
            } else {
                out.push(a);
                made += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::oracle_solve;

    #[test]
    fn table_counts_match() {
        let data = gen_addition(0, 200, false);
        assert_eq!(data.len(), 1000);
        for k in 2..=6u32 {
            let n = data
                .iter()
                .filter(|i| i.difficulty["operand_count"] == k)
                .count();
            assert_eq!(n, 200);
        }
    }

    #[test]
    fn operands_and_results_respect_ranges() {
        for seed in 0..100 {
            let data = gen_addition(seed, 1, false);
            for inst in &data {
                let r: i64 = inst.target.parse().unwrap();
                assert!(r > 0 && r < 1000, "{} -> {}", inst.prompt, r);
            }
        }
    }

    #[test]
    fn targets_agree_with_oracle() {
        let data = gen_addition(3, 10, true);
        for inst in &data {
            assert_eq!(oracle_solve(inst).unwrap(), inst.target);
        }
    }

    #[test]
    fn counterfactual_links_are_symmetric() {
        let data = gen_addition(5, 50, false);
        for inst in &data {
            if let Some(cf) = &inst.counterfactual_id {
                let other = data.iter().find(|i| &i.id == cf).expect("link target");
                assert_eq!(other.counterfactual_id.as_ref(), Some(&inst.id));
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(gen_addition(9, 20, true), gen_addition(9, 20, true));
    }

    #[test]
    fn trace_matches_fixed_format() {
        let operands = [99, 18, 23];
        let plus = [true, false];
        assert_eq!(render_trace(&operands, &plus), "99+18=117;117-23=94");
        assert_eq!(render_expr(&operands, &plus), "99+18-23");
        assert_eq!(eval_left_to_right(&operands, &plus), 94);
    }
}
