//! Counterfactual pairing: operator swaps (Addition), different queried box
//! (Entity Tracking), next puzzle in dataset order (Sudoku).

use alloc::format;
use alloc::string::{String, ToString};

use rand::Rng;

use super::oracle::{solve_addition, solve_entity};
use super::entity::{parse_scenario, NUM_BOXES};
use super::{TaskInstance, TaskKind};
use crate::rng::{fnv1a64, seeded};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CounterfactualError {
    #[error("instance {0} is not part of the dataset")]
    NotInDataset(String),
    #[error("operator swap leaves the result range for {0}")]
    SwapOutOfRange(String),
    #[error("malformed instance prompt: {0}")]
    Malformed(String),
}

/// Produce (or look up) the counterfactual partner of `instance`.
///
/// Addition and Sudoku partners live in the dataset itself; Entity Tracking
/// partners are derived instances querying a different box, deterministic in
/// the instance id. Links are recorded in both directions on the returned
/// instance.
pub fn make_counterfactual(
    instance: &TaskInstance,
    dataset: &[TaskInstance],
) -> Result<TaskInstance, CounterfactualError> {
    match instance.kind {
        TaskKind::Addition => {
            let swapped: String = instance
                .prompt
                .chars()
                .map(|c| match c {
                    '+' => '-',
                    '-' => '+',
                    other => other,
                })
                .collect();
            if let Some(existing) = dataset.iter().find(|i| i.prompt == swapped) {
                return Ok(existing.clone());
            }
            let target = solve_addition(&swapped)
                .map_err(|e| CounterfactualError::Malformed(e.to_string()))?;
            let value: i64 = target.parse().unwrap_or(i64::MIN);
            if value <= 0 || value >= 1000 {
                return Err(CounterfactualError::SwapOutOfRange(instance.id.clone()));
            }
            let mut cf = TaskInstance::new(
                TaskKind::Addition,
                swapped,
                target,
                instance.difficulty.clone(),
            );
            cf.counterfactual_id = Some(instance.id.clone());
            Ok(cf)
        }
        TaskKind::EntityTracking => {
            let (_, q) = parse_scenario(&instance.prompt)
                .map_err(|e| CounterfactualError::Malformed(e.to_string()))?;
            let mut rng = seeded(fnv1a64(instance.id.as_bytes()));
            let mut other = rng.random_range(0..NUM_BOXES);
            if other == q {
                other = (other + 1 + rng.random_range(0..NUM_BOXES - 1)) % NUM_BOXES;
            }
            let question = format!("What does Box {q} contain?");
            let cf_question = format!("What does Box {other} contain?");
            let cf_prompt = instance.prompt.replace(&question, &cf_question);
            if cf_prompt == instance.prompt {
                return Err(CounterfactualError::Malformed(instance.id.clone()));
            }
            let target = solve_entity(&cf_prompt)
                .map_err(|e| CounterfactualError::Malformed(e.to_string()))?;
            let mut difficulty = instance.difficulty.clone();
            // target_ops changes with the queried box; recompute for honesty
            if let Ok((world, newq)) = parse_scenario(&cf_prompt) {
                let concern = world.ops.iter().filter(|o| o.concerns(newq)).count() as u32;
                difficulty.insert("target_ops".to_string(), concern);
            }
            let mut cf =
                TaskInstance::new(TaskKind::EntityTracking, cf_prompt, target, difficulty);
            cf.counterfactual_id = Some(instance.id.clone());
            Ok(cf)
        }
        TaskKind::Sudoku => {
            let pos = dataset
                .iter()
                .position(|i| i.id == instance.id)
                .ok_or_else(|| CounterfactualError::NotInDataset(instance.id.clone()))?;
            Ok(dataset[(pos + 1) % dataset.len()].clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_addition, gen_entity_tracking, gen_sudoku};
    use alloc::collections::BTreeMap;

    #[test]
    fn addition_swap_example() {
        let mut difficulty = BTreeMap::new();
        difficulty.insert(String::from("operand_count"), 3);
        let inst = TaskInstance::new(
            TaskKind::Addition,
            "99+18-23".into(),
            "94".into(),
            difficulty,
        );
        let cf = make_counterfactual(&inst, &[inst.clone()]).unwrap();
        assert_eq!(cf.prompt, "99-18+23");
        assert_eq!(cf.target, "104");
        assert_eq!(cf.counterfactual_id.as_ref(), Some(&inst.id));
    }

    #[test]
    fn addition_swap_out_of_range_is_flagged() {
        let inst = TaskInstance::new(
            TaskKind::Addition,
            "1+1".into(),
            "2".into(),
            BTreeMap::new(),
        );
        assert!(matches!(
            make_counterfactual(&inst, &[inst.clone()]),
            Err(CounterfactualError::SwapOutOfRange(_))
        ));
    }

    #[test]
    fn addition_prefers_in_dataset_partner() {
        let data = gen_addition(11, 10, false);
        let inst = &data[0];
        let cf = make_counterfactual(inst, &data).unwrap();
        assert_eq!(Some(&cf.id), inst.counterfactual_id.as_ref());
    }

    #[test]
    fn entity_partner_queries_a_different_box() {
        let data = gen_entity_tracking(4, 1);
        let inst = &data[40];
        let cf = make_counterfactual(inst, &data).unwrap();
        assert_ne!(cf.prompt, inst.prompt);
        let (_, q) = parse_scenario(&inst.prompt).unwrap();
        let (world_cf, q_cf) = parse_scenario(&cf.prompt).unwrap();
        assert_ne!(q, q_cf);
        // identical description text: only the question changed
        assert_eq!(world_cf.boxes, parse_scenario(&inst.prompt).unwrap().0.boxes);
        assert_eq!(cf.counterfactual_id.as_ref(), Some(&inst.id));
        // deterministic
        assert_eq!(make_counterfactual(inst, &data).unwrap(), cf);
    }

    #[test]
    fn sudoku_last_wraps_to_first() {
        let data = gen_sudoku(5, 2);
        let last = data.last().unwrap();
        let cf = make_counterfactual(last, &data).unwrap();
        assert_eq!(cf.id, data[0].id);
    }
}
