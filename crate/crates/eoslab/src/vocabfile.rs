//! Vocabulary file: a JSON array of tokens in id order (specials first).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use eoslab_core::Vocab;

pub fn save(path: &Path, vocab: &Vocab) -> Result<()> {
    let json = serde_json::to_string_pretty(vocab.token_list())?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vocab> {
    let json =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let tokens: Vec<String> = serde_json::from_str(&json)?;
    Ok(Vocab::from_token_list(tokens))
}
