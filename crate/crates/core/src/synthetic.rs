//! Generated corpora for tests, demos and smoke runs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, RawRecord, Split, SplitAssignment, TextOrTokens};
use crate::error::Result;

/// Records plus their project split, ready for [`Corpus::from_records`] or
/// [`crate::corpus::write_corpus`].
#[derive(Debug, Clone)]
pub struct Fixture {
    pub records: Vec<RawRecord>,
    pub splits: SplitAssignment,
}

impl Fixture {
    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::from_records(self.records.clone(), self.splits.clone())
    }
}

fn toks(words: &[&str]) -> TextOrTokens {
    TextOrTokens::Tokens(words.iter().map(|w| w.to_string()).collect())
}

fn record(project: &str, file: &str, pos: usize, code: TextOrTokens, summary: TextOrTokens) -> RawRecord {
    let file_id = format!("{project}/{file}");
    RawRecord {
        id: format!("{file_id}#{pos}"),
        project_id: project.to_string(),
        file_id,
        position_in_file: pos,
        code,
        summary,
    }
}

const VERBS: [&str; 6] = ["get", "set", "add", "remove", "find", "update"];
const NOUNS: [&str; 10] = ["user", "order", "item", "account", "price", "name", "list", "node", "key", "count"];
const FILLER: [&str; 10] = ["int", "void", "return", "this", "if", "null", "new", "string", "for", "value"];

/// Thirty subroutines whose summaries follow from their code, for checking
/// that a model can memorize a small training set. Three train projects of
/// ten examples each, and one small validation project.
pub fn overfit_fixture() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut records = Vec::new();
    let mut split = Vec::new();
    let mut n = 0;
    for p in 0..4 {
        let project = format!("memo{p}");
        let count = if p == 3 { 4 } else { 10 };
        for i in 0..count {
            let verb = VERBS[n % VERBS.len()];
            let noun = NOUNS[(n * 7 / 3) % NOUNS.len()];
            let extra = NOUNS[(n * 3 + 1) % NOUNS.len()];
            let mut code = vec![verb, noun, "(", extra, ")"];
            code.extend((0..3).map(|_| *FILLER.choose(&mut rng).expect("nonempty")));
            let summary = [verb, "the", noun, "of", extra];
            let file = format!("F{}.java", i / 5);
            records.push(record(&project, &file, i % 5, toks(&code), toks(&summary[..3 + n % 3])));
            n += 1;
        }
        split.push((project, if p == 3 { Split::Val } else { Split::Train }));
    }
    Fixture {
        records,
        splits: SplitAssignment(split),
    }
}

pub const DOMAINS: [&str; 8] = ["invoice", "sensor", "player", "patient", "ticket", "vessel", "course", "recipe"];

/// Settings for [`context_fixture`].
#[derive(Debug, Clone, Copy)]
pub struct ContextFixture {
    /// train projects per domain word
    pub train_per_domain: usize,
    /// val and test projects per domain word
    pub heldout_per_domain: usize,
    pub targets_per_project: usize,
    pub anchors_per_file: usize,
    pub anchor_files: usize,
    pub seed: u64,
}

impl Default for ContextFixture {
    fn default() -> Self {
        Self {
            train_per_domain: 5,
            heldout_per_domain: 2,
            targets_per_project: 3,
            anchors_per_file: 2,
            anchor_files: 2,
            seed: 7,
        }
    }
}

/// The file holding a context-fixture project's targets.
pub const TARGET_FILE: &str = "Main.java";

/// A corpus where each project has a domain word. Targets (in
/// [`TARGET_FILE`]) never mention it, but their summary's second token is
/// that word; only the project's other files contain it. Projects are split
/// whole, so held-out projects are unseen combinations of code and domain.
pub fn context_fixture(cfg: &ContextFixture) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut split = Vec::new();
    let per_domain = cfg.train_per_domain + 2 * cfg.heldout_per_domain;
    for domain in DOMAINS.iter() {
        for k in 0..per_domain {
            let project = format!("{domain}{k}");
            for pos in 0..cfg.targets_per_project {
                let verb = VERBS[rng.random_range(0..VERBS.len())];
                let noun = NOUNS[rng.random_range(0..NOUNS.len())];
                let mut code = vec![verb, noun, "("];
                code.extend((0..4).map(|_| *FILLER.choose(&mut rng).expect("nonempty")));
                records.push(record(&project, TARGET_FILE, pos, toks(&code), toks(&[verb, domain, noun])));
            }
            for file in 0..cfg.anchor_files {
                for pos in 0..cfg.anchors_per_file {
                    let noun = NOUNS[rng.random_range(0..NOUNS.len())];
                    let mut code = vec![*domain, noun, "("];
                    code.extend((0..3).map(|_| *FILLER.choose(&mut rng).expect("nonempty")));
                    code.push(domain);
                    let file = format!("Part{file}.java");
                    records.push(record(&project, &file, pos, toks(&code), toks(&["handles", domain, noun])));
                }
            }
            let split_of = if k < cfg.train_per_domain {
                Split::Train
            } else if k < cfg.train_per_domain + cfg.heldout_per_domain {
                Split::Val
            } else {
                Split::Test
            };
            split.push((project, split_of));
        }
    }
    Fixture {
        records,
        splits: SplitAssignment(split),
    }
}

const PIPELINE_TEMPLATES: [(&str, &str); 8] = [
    ("public int get{N}() {{ return {n}; }}", "returns the {n}"),
    ("public void set{N}(int {n}) {{ this.{n} = {n}; }}", "sets the {n}"),
    ("public boolean is{N}Empty() {{ return {n}.isEmpty(); }}", "checks if the {n} is empty"),
    ("public void add{N}(Object {n}) {{ items.add({n}); }}", "adds a {n}"),
    ("public void remove{N}(Object {n}) {{ items.remove({n}); }}", "removes the {n}"),
    ("public String format{N}() {{ return String.valueOf({n}); }}", "formats the {n} as text"),
    ("public void reset{N}() {{ {n} = 0; }}", "resets the {n}"),
    ("public int count{N}() {{ return {n}.size(); }}", "returns the number of {n}"),
];

/// A small three-project corpus (train, val, test) of Java-like accessors,
/// used by the command-line pipeline tests and the demo.
pub fn pipeline_fixture() -> Fixture {
    let names = ["width", "height", "label", "owner", "status", "total", "weight", "color", "speed", "title"];
    let mut records = Vec::new();
    let mut split = Vec::new();
    // 8 templates × 10 names cycle with period 40, so no code repeats
    let mut k = 0;
    for (project, which) in [("shapes", Split::Train), ("ledger", Split::Val), ("garage", Split::Test)] {
        let files = if which == Split::Train { 4 } else { 2 };
        for f in 0..files {
            for pos in 0..5 {
                let (code, summary) = PIPELINE_TEMPLATES[k % PIPELINE_TEMPLATES.len()];
                let n = names[k % names.len()];
                let cap = format!("{}{}", n[..1].to_uppercase(), &n[1..]);
                let fill = |t: &str| t.replace("{N}", &cap).replace("{n}", n).replace("{{", "{").replace("}}", "}");
                let file = format!("src/{}{f}.java", project[..1].to_uppercase() + &project[1..]);
                records.push(record(
                    project,
                    &file,
                    pos,
                    TextOrTokens::Text(fill(code)),
                    TextOrTokens::Text(fill(summary)),
                ));
                k += 1;
            }
        }
        split.push((project.to_string(), which));
    }
    Fixture {
        records,
        splits: SplitAssignment(split),
    }
}
