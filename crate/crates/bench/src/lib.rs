//! Benchmark fixtures: the shipped corpora, loaded once per benchmark run.

use std::path::{Path, PathBuf};

use wherecheck::analysis::load_files;
use wherecheck::frontend::{Policy, Program};

pub struct Fixture {
    pub name: String,
    pub program: Program,
    pub policy: Policy,
}

pub fn corpus_dir(set: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(set)
}

/// Every program of a corpus directory in name order, with the directory's shared policy.
pub fn load_corpus(set: &str) -> wherecheck::Result<Vec<Fixture>> {
    let dir = corpus_dir(set);
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .map_err(|e| wherecheck::Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "policy" && !n.starts_with('.'))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let (program, policy) = load_files(&dir.join(&name), &dir.join("policy"))?;
            Ok(Fixture { name, program, policy })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_load() {
        assert_eq!(load_corpus("declass").unwrap().len(), 8);
        assert_eq!(load_corpus("io").unwrap().len(), 8);
    }
}
