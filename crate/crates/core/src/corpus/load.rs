use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::tokenize::tokenize;
use super::vocab::SPECIALS;
use crate::error::{Error, Result};

pub const SUBROUTINES_FILE: &str = "subroutines.jsonl";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subroutine {
    pub id: String,
    pub project_id: String,
    pub file_id: String,
    pub position_in_file: usize,
    pub code_tokens: Vec<String>,
    pub summary_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFile {
    pub file_id: String,
    pub project_id: String,
    /// subroutine ids in file order
    pub subroutines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Project {
    pub project_id: String,
    pub files: Vec<String>,
}

/// Code or summary as it appears on disk: raw text (tokenized on load) or
/// an already tokenized array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextOrTokens {
    Text(String),
    Tokens(Vec<String>),
}

/// One line of `subroutines.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub project_id: String,
    pub file_id: String,
    pub position_in_file: usize,
    pub code: TextOrTokens,
    pub summary: TextOrTokens,
}

/// `splits.json`: project id → split. Parsed by hand so a project named
/// twice is caught instead of silently overwritten.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitAssignment(pub Vec<(String, Split)>);

impl<'de> Deserialize<'de> for SplitAssignment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct Entries;
        impl<'de> Visitor<'de> for Entries {
            type Value = SplitAssignment;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping project ids to train|val|test")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Split>()? {
                    out.push((k, v));
                }
                Ok(SplitAssignment(out))
            }
        }
        d.deserialize_map(Entries)
    }
}

impl Serialize for SplitAssignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

/// Validated corpus: projects → files → subroutines, split by project.
#[derive(Debug, Clone)]
pub struct Corpus {
    subroutines: Vec<Subroutine>,
    by_id: HashMap<String, usize>,
    files: BTreeMap<String, CorpusFile>,
    projects: BTreeMap<String, Project>,
    splits: BTreeMap<String, Split>,
    duplicates_dropped: usize,
}

fn normalize(record: &str, field: &str, value: &TextOrTokens) -> Result<Vec<String>> {
    let tokens = match value {
        TextOrTokens::Text(s) => tokenize(s),
        TextOrTokens::Tokens(ts) => {
            let mut out = Vec::with_capacity(ts.len());
            for t in ts {
                if t.is_empty() || t.chars().any(char::is_whitespace) {
                    return Err(Error::record(record, format!("{field} token {t:?} is empty or has whitespace")));
                }
                let lower = t.to_lowercase();
                if SPECIALS.contains(&lower.as_str()) {
                    return Err(Error::record(record, format!("{field} token {t:?} collides with a reserved token")));
                }
                out.push(lower);
            }
            out
        }
    };
    if tokens.is_empty() {
        return Err(Error::record(record, format!("{field} has no tokens")));
    }
    Ok(tokens)
}

impl Corpus {
    /// Validates records and split assignment. Subroutines whose code tokens
    /// exactly repeat an earlier record are dropped.
    pub fn from_records(records: Vec<RawRecord>, splits: SplitAssignment) -> Result<Self> {
        let mut split_map = BTreeMap::new();
        for (project, split) in splits.0 {
            if let Some(prev) = split_map.insert(project.clone(), split) {
                return Err(Error::record(
                    format!("splits.json:{project}"),
                    format!("project listed twice ({prev} and {split})"),
                ));
            }
        }

        let mut ids = HashSet::new();
        let mut seen_projects = BTreeSet::new();
        let mut parsed = Vec::with_capacity(records.len());
        for (line, r) in records.into_iter().enumerate() {
            let name = format!("line {} (id {:?})", line + 1, r.id);
            if r.id.is_empty() {
                return Err(Error::record(name, "empty id"));
            }
            if !ids.insert(r.id.clone()) {
                return Err(Error::record(name, "duplicate subroutine id"));
            }
            if r.project_id.is_empty() || r.file_id.is_empty() {
                return Err(Error::record(name, "empty project_id or file_id"));
            }
            let code_tokens = normalize(&name, "code", &r.code)?;
            let summary_tokens = normalize(&name, "summary", &r.summary)?;
            seen_projects.insert(r.project_id.clone());
            parsed.push((
                name,
                Subroutine {
                    id: r.id,
                    project_id: r.project_id,
                    file_id: r.file_id,
                    position_in_file: r.position_in_file,
                    code_tokens,
                    summary_tokens,
                },
            ));
        }

        for project in &seen_projects {
            if !split_map.contains_key(project) {
                return Err(Error::record(format!("project {project:?}"), "no split assignment"));
            }
        }
        for project in split_map.keys() {
            if !seen_projects.contains(project) {
                return Err(Error::record(format!("splits.json:{project}"), "split names an unknown project"));
            }
        }

        let mut seen_code: HashSet<Vec<String>> = HashSet::new();
        let mut duplicates_dropped = 0;
        let mut file_owner: HashMap<String, String> = HashMap::new();
        let mut positions: HashSet<(String, usize)> = HashSet::new();
        let mut subroutines = Vec::new();
        for (name, sub) in parsed {
            match file_owner.get(&sub.file_id) {
                Some(owner) if *owner != sub.project_id => {
                    return Err(Error::record(
                        name,
                        format!("file {:?} belongs to project {owner:?}, not {:?}", sub.file_id, sub.project_id),
                    ));
                }
                Some(_) => {}
                None => {
                    file_owner.insert(sub.file_id.clone(), sub.project_id.clone());
                }
            }
            if !positions.insert((sub.file_id.clone(), sub.position_in_file)) {
                return Err(Error::record(
                    name,
                    format!("position {} repeated in file {:?}", sub.position_in_file, sub.file_id),
                ));
            }
            if !seen_code.insert(sub.code_tokens.clone()) {
                duplicates_dropped += 1;
                continue;
            }
            subroutines.push(sub);
        }

        let mut files: BTreeMap<String, CorpusFile> = BTreeMap::new();
        let mut order: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        for sub in &subroutines {
            order
                .entry(sub.file_id.clone())
                .or_default()
                .push((sub.position_in_file, sub.id.clone()));
        }
        let mut projects: BTreeMap<String, Project> = BTreeMap::new();
        for (file_id, mut subs) in order {
            subs.sort();
            let project_id = file_owner[&file_id].clone();
            projects
                .entry(project_id.clone())
                .or_insert_with(|| Project {
                    project_id: project_id.clone(),
                    files: Vec::new(),
                })
                .files
                .push(file_id.clone());
            files.insert(
                file_id.clone(),
                CorpusFile {
                    file_id,
                    project_id,
                    subroutines: subs.into_iter().map(|(_, id)| id).collect(),
                },
            );
        }

        let by_id = subroutines.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        Ok(Self {
            subroutines,
            by_id,
            files,
            projects,
            splits: split_map,
            duplicates_dropped,
        })
    }

    pub fn subroutines(&self) -> &[Subroutine] {
        &self.subroutines
    }

    pub fn subroutine(&self, id: &str) -> Option<&Subroutine> {
        self.by_id.get(id).map(|&i| &self.subroutines[i])
    }

    pub fn file(&self, id: &str) -> Option<&CorpusFile> {
        self.files.get(id)
    }

    pub fn files(&self) -> &BTreeMap<String, CorpusFile> {
        &self.files
    }

    pub fn project(&self, id: &str) -> Option<&Project> {
        self.projects.get(id)
    }

    pub fn projects(&self) -> &BTreeMap<String, Project> {
        &self.projects
    }

    pub fn split_of_project(&self, project_id: &str) -> Option<Split> {
        self.splits.get(project_id).copied()
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    /// Subroutines of one split, in load order.
    pub fn split(&self, split: Split) -> Vec<&Subroutine> {
        self.subroutines
            .iter()
            .filter(|s| self.splits.get(&s.project_id) == Some(&split))
            .collect()
    }

    pub fn split_assignment(&self) -> SplitAssignment {
        SplitAssignment(self.splits.iter().map(|(k, v)| (k.clone(), *v)).collect())
    }
}

/// Reads `subroutines.jsonl` and `splits.json` from `dir`.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let sub_path = dir.join(SUBROUTINES_FILE);
    let text = fs::read_to_string(&sub_path).map_err(|e| Error::io(&sub_path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(line)
            .map_err(|e| Error::record(format!("{}:{}", SUBROUTINES_FILE, i + 1), e.to_string()))?;
        records.push(rec);
    }
    let split_path = dir.join(SPLITS_FILE);
    let text = fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?;
    let splits: SplitAssignment =
        serde_json::from_str(&text).map_err(|e| Error::record(SPLITS_FILE, e.to_string()))?;
    Corpus::from_records(records, splits)
}

/// Writes a corpus directory in the on-disk format `load_corpus` reads.
pub fn write_corpus(dir: impl AsRef<Path>, records: &[RawRecord], splits: &SplitAssignment) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut lines = String::new();
    for r in records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    let p = dir.join(SUBROUTINES_FILE);
    fs::write(&p, lines).map_err(|e| Error::io(&p, e))?;
    let p = dir.join(SPLITS_FILE);
    fs::write(&p, serde_json::to_string_pretty(splits)?).map_err(|e| Error::io(&p, e))?;
    Ok(())
}
