use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::load::{CorpusFile, Project, Subroutine};
use crate::error::{Error, Result};

/// Files chosen to represent a project for one target subroutine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSelection {
    pub files: Vec<String>,
    /// slots left empty when the project has fewer than `f` usable files
    pub pad: usize,
}

fn stream_seed(seed: u64, target_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(target_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// Uniform sample without replacement of `min(f, usable files)` project
/// files, drawn from a stream keyed by `(seed, target_id)`. Files with no
/// subroutines are never chosen.
pub fn select_context_files(
    project: &Project,
    files: &BTreeMap<String, CorpusFile>,
    target_id: &str,
    f: usize,
    seed: u64,
) -> Result<ContextSelection> {
    if project.files.is_empty() {
        return Err(Error::invalid(format!("project {:?} has no files", project.project_id)));
    }
    let mut usable: Vec<&str> = project
        .files
        .iter()
        .filter(|id| files.get(*id).is_some_and(|file| !file.subroutines.is_empty()))
        .map(String::as_str)
        .collect();
    usable.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, target_id));
    usable.shuffle(&mut rng);
    usable.truncate(f);
    Ok(ContextSelection {
        pad: f - usable.len(),
        files: usable.into_iter().map(str::to_string).collect(),
    })
}

/// The first `s` subroutines of `file` in file order, skipping `target`.
pub fn select_file_context(file: &CorpusFile, target: &Subroutine, s: usize) -> Vec<String> {
    file.subroutines
        .iter()
        .filter(|id| **id != target.id)
        .take(s)
        .cloned()
        .collect()
}
