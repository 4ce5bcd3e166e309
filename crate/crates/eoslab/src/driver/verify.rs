//! Post-hoc verification: datasets against their oracles, manifests against
//! the experiment-shape rules, checkpoints against their own layout.

use std::path::Path;

use anyhow::Result;
use eoslab_core::corpus::oracle_solve;
use eoslab_core::TaskInstance;

use super::manifest;
use crate::{checkpoint, jsonl};

/// Re-solve every instance and check targets and counterfactual links.
pub fn verify_dataset(instances: &[TaskInstance]) -> Vec<String> {
    let mut violations = Vec::new();
    for inst in instances {
        match oracle_solve(inst) {
            Ok(ans) if ans == inst.target => {}
            Ok(ans) => violations.push(format!(
                "{}: target `{}` but oracle says `{}`",
                inst.id, inst.target, ans
            )),
            Err(e) => violations.push(format!("{}: oracle failed: {e}", inst.id)),
        }
        if let Some(cf_id) = &inst.counterfactual_id {
            if cf_id == &inst.id {
                violations.push(format!("{}: self-referential counterfactual", inst.id));
            }
        }
    }
    // ids must be unique
    let mut ids: Vec<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    ids.sort_unstable();
    for w in ids.windows(2) {
        if w[0] == w[1] {
            violations.push(format!("duplicate id {}", w[0]));
        }
    }
    violations
}

pub fn verify_dataset_file(path: &Path) -> Result<Vec<String>> {
    let instances: Vec<TaskInstance> = jsonl::read_jsonl(path)?;
    Ok(verify_dataset(&instances))
}

pub fn verify_manifest_file(path: &Path) -> Result<Vec<String>> {
    let m = manifest::load(path)?;
    Ok(manifest::check(&m))
}

/// Loading exercises magic, version, manifest, and shape validation; a
/// re-save must reproduce the file byte for byte.
pub fn verify_checkpoint_file(path: &Path) -> Result<Vec<String>> {
    let model = match checkpoint::load(path) {
        Ok(m) => m,
        Err(e) => return Ok(vec![format!("{}: {e}", path.display())]),
    };
    let tmp = tempfile::NamedTempFile::new()?;
    checkpoint::save(tmp.path(), &model)?;
    let mut violations = Vec::new();
    if std::fs::read(path)? != std::fs::read(tmp.path())? {
        violations.push(format!("{}: re-save is not byte-identical", path.display()));
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use eoslab_core::corpus::gen_addition;

    #[test]
    fn clean_dataset_passes() {
        let data = gen_addition(1, 10, false);
        assert!(verify_dataset(&data).is_empty());
    }

    #[test]
    fn corrupted_target_is_reported() {
        let mut data = gen_addition(1, 10, false);
        data[3].target = "999".into();
        let v = verify_dataset(&data);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("oracle says"));
    }
}
