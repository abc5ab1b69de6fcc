//! Best-effort conversion of a source tree into a corpus directory.
//!
//! Each top-level directory under the source root is one project. Inside
//! brace-delimited languages a subroutine is a `{ … }` block whose header
//! ends in a parameter list (`name(args)`, optionally followed by a
//! `throws` clause or qualifiers); its summary is the first sentence of the
//! comment directly above it. Subroutines without such a comment are
//! skipped. This is a heuristic splitter, not a parser.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walkdir::WalkDir;

use super::load::{write_corpus, RawRecord, Split, SplitAssignment, TextOrTokens};
use crate::error::{Error, Result};

const EXTENSIONS: [&str; 15] = [
    "java", "c", "h", "cc", "cpp", "hpp", "cs", "js", "ts", "go", "rs", "kt", "scala", "swift", "php",
];

const NOT_SUBROUTINES: [&str; 12] = [
    "if", "for", "while", "switch", "catch", "synchronized", "else", "do", "try", "return", "new", "foreach",
];

/// A subroutine found by [`split_subroutines`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub code: String,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestSummary {
    pub projects: usize,
    pub files: usize,
    pub subroutines: usize,
}

struct Comment {
    end: usize,
    text: String,
}

/// Blanks comments and string/char literals, keeping byte offsets.
fn mask_source(src: &str) -> (Vec<u8>, Vec<Comment>) {
    let bytes = src.as_bytes();
    let mut masked = bytes.to_vec();
    let mut comments = Vec::new();
    let mut i = 0;
    let blank = |m: &mut Vec<u8>, from: usize, to: usize| {
        for b in &mut m[from..to] {
            if *b != b'\n' {
                *b = b' ';
            }
        }
    };
    while i < bytes.len() {
        match bytes[i] {
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                let end = bytes[i..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |p| i + p);
                comments.push(Comment {
                    end,
                    text: src[i..end].to_string(),
                });
                blank(&mut masked, i, end);
                i = end;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let end = src[i + 2..].find("*/").map_or(bytes.len(), |p| i + 2 + p + 2);
                comments.push(Comment {
                    end,
                    text: src[i..end].to_string(),
                });
                blank(&mut masked, i, end);
                i = end;
            }
            q @ (b'"' | b'\'' | b'`') => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != q {
                    if bytes[j] == b'\\' {
                        j += 1;
                    }
                    if q != b'`' && bytes.get(j) == Some(&b'\n') {
                        break;
                    }
                    j += 1;
                }
                let end = (j + 1).min(bytes.len());
                blank(&mut masked, i + 1, end.saturating_sub(1).max(i + 1));
                i = end;
            }
            _ => i += 1,
        }
    }
    (masked, comments)
}

fn is_subroutine_header(header: &str) -> bool {
    let header = header.trim();
    let Some(open) = header.find('(') else { return false };
    let Some(close) = header.rfind(')') else { return false };
    if close < open {
        return false;
    }
    let tail = header[close + 1..].trim();
    let tail_ok = tail.is_empty()
        || tail.starts_with("throws")
        || tail.starts_with("->")
        || tail.starts_with(':')
        || tail
            .split_whitespace()
            .all(|w| matches!(w, "const" | "override" | "final" | "noexcept" | "async"));
    if !tail_ok || header.ends_with("->") || header.ends_with("=>") {
        return false;
    }
    let before = header[..open].trim_end();
    let name: String = before
        .chars()
        .rev()
        .take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '$')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if name.is_empty() || name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return false;
    }
    let first = before.split_whitespace().next().unwrap_or("");
    !NOT_SUBROUTINES.contains(&name.as_str()) && !NOT_SUBROUTINES.contains(&first) && !before.contains('=')
}

fn clean_comment(raw: &str) -> String {
    let mut lines = Vec::new();
    for line in raw.lines() {
        let l = line
            .trim()
            .trim_start_matches("/**")
            .trim_start_matches("/*")
            .trim_start_matches("///")
            .trim_start_matches("//")
            .trim_end_matches("*/")
            .trim_start_matches('*')
            .trim();
        if l.starts_with('@') {
            break;
        }
        if l.is_empty() {
            if lines.is_empty() {
                continue;
            }
            break;
        }
        lines.push(l.to_string());
    }
    let text = lines.join(" ");
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for c in text.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            '{' | '}' if !in_tag => {}
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    let out = out.replace("@code", "").replace("@link", "");
    let first = match out.find(". ") {
        Some(p) => &out[..p],
        None => out.trim_end_matches('.'),
    };
    first.trim().to_string()
}

/// Finds commented subroutines in one source file.
pub fn split_subroutines(src: &str) -> Vec<Extracted> {
    let (masked, comments) = mask_source(src);
    let mut out = Vec::new();
    let mut seg_start = 0;
    let mut i = 0;
    while i < masked.len() {
        match masked[i] {
            b';' | b'}' => {
                seg_start = i + 1;
                i += 1;
            }
            b'{' => {
                let header = String::from_utf8_lossy(&masked[seg_start..i]).to_string();
                let lead = header.len() - header.trim_start().len();
                let header_start = seg_start + lead;
                if is_subroutine_header(&header) {
                    let mut depth = 0usize;
                    let mut j = i;
                    while j < masked.len() {
                        match masked[j] {
                            b'{' => depth += 1,
                            b'}' => {
                                depth -= 1;
                                if depth == 0 {
                                    break;
                                }
                            }
                            _ => {}
                        }
                        j += 1;
                    }
                    let end = (j + 1).min(masked.len());
                    let doc = comments
                        .iter()
                        .rev()
                        .find(|c| c.end <= header_start)
                        .filter(|c| masked[c.end..header_start].iter().all(u8::is_ascii_whitespace));
                    if let Some(c) = doc {
                        let summary = clean_comment(&c.text);
                        if !summary.is_empty() && src.is_char_boundary(header_start) && src.is_char_boundary(end) {
                            out.push(Extracted {
                                code: src[header_start..end].to_string(),
                                summary,
                            });
                        }
                    }
                    seg_start = end;
                    i = end;
                } else {
                    seg_start = i + 1;
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    out
}

/// Deterministic project split: about 10% val, 10% test, rest train.
pub fn assign_splits(projects: &[String], seed: u64) -> SplitAssignment {
    let mut order: Vec<&String> = projects.iter().collect();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let (val, test) = match n {
        0 | 1 => (0, 0),
        2 => (0, 1),
        _ => {
            let k = ((n as f64) * 0.1).round().max(1.0) as usize;
            (k, k)
        }
    };
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let split = if i < test {
                Split::Test
            } else if i < test + val {
                Split::Val
            } else {
                Split::Train
            };
            (p.clone(), split)
        })
        .collect();
    SplitAssignment(assignment)
}

/// Walks `src_dir` and writes `subroutines.jsonl` + `splits.json` to `out_dir`.
pub fn ingest(src_dir: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<IngestSummary> {
    let src_dir = src_dir.as_ref();
    if !src_dir.is_dir() {
        return Err(Error::invalid(format!("{} is not a directory", src_dir.display())));
    }
    let mut records = Vec::new();
    let mut per_project: BTreeMap<String, usize> = BTreeMap::new();
    let mut files = 0;
    let mut entries: Vec<_> = WalkDir::new(src_dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .collect();
    entries.sort_by(|a, b| a.path().cmp(b.path()));
    for entry in entries {
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !EXTENSIONS.contains(&ext) {
            continue;
        }
        let rel = path.strip_prefix(src_dir).expect("walkdir stays under its root");
        let mut parts = rel.components();
        let project = if rel.components().count() > 1 {
            parts.next().unwrap().as_os_str().to_string_lossy().to_string()
        } else {
            "root".to_string()
        };
        let Ok(text) = fs::read_to_string(path) else { continue };
        let subs = split_subroutines(&text);
        if subs.is_empty() {
            continue;
        }
        files += 1;
        let file_id = format!("{project}/{}", rel.to_string_lossy().replace('\\', "/"));
        for (pos, s) in subs.into_iter().enumerate() {
            records.push(RawRecord {
                id: format!("{file_id}#{pos}"),
                project_id: project.clone(),
                file_id: file_id.clone(),
                position_in_file: pos,
                code: TextOrTokens::Text(s.code),
                summary: TextOrTokens::Text(s.summary),
            });
            *per_project.entry(project.clone()).or_default() += 1;
        }
    }
    let projects: Vec<String> = per_project.keys().cloned().collect();
    let splits = assign_splits(&projects, 0);
    write_corpus(out_dir, &records, &splits)?;
    Ok(IngestSummary {
        projects: projects.len(),
        files,
        subroutines: records.len(),
    })
}
