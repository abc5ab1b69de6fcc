use super::hyper::{HyperParams, Variant};
use super::load::{Corpus, Subroutine};
use super::select::{select_context_files, select_file_context};
use super::vocab::Vocab;
use crate::error::{Error, Result};

/// Context subroutines for a batch, laid out `[B × files × subs × words]`.
///
/// File context uses `files == 1`; its single row of `subs` siblings is what
/// the decoder attends to.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextBlock {
    pub files: usize,
    pub subs: usize,
    pub words: usize,
    pub tokens: Vec<usize>,
    pub word_mask: Vec<bool>,
    /// `[B × files × subs]`
    pub sub_mask: Vec<bool>,
    /// `[B × files]`
    pub file_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Context {
    None,
    File(ContextBlock),
    Project(ContextBlock),
}

impl Context {
    pub fn block(&self) -> Option<&ContextBlock> {
        match self {
            Context::None => None,
            Context::File(b) | Context::Project(b) => Some(b),
        }
    }
}

/// Fixed-shape model input for `size` examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    pub size: usize,
    pub code_len: usize,
    pub dec_len: usize,
    /// `[B × w]`
    pub code: Vec<usize>,
    pub code_mask: Vec<bool>,
    /// `[B × T]`, START-prefixed
    pub dec_input: Vec<usize>,
    /// `[B × T]`, END-suffixed; `dec_input` shifted left by one
    pub dec_target: Vec<usize>,
    pub dec_mask: Vec<bool>,
    pub context: Context,
}

impl Batch {
    pub fn variant(&self) -> Variant {
        match self.context {
            Context::None => Variant::Baseline,
            Context::File(_) => Variant::Fc,
            Context::Project(_) => Variant::Pc,
        }
    }
}

/// Decoder input/target pair under teacher forcing.
pub fn teacher_forcing(vocab: &Vocab, summary: &[String], len: usize) -> (Vec<usize>, Vec<usize>, Vec<bool>) {
    let (full, _) = vocab.encode(summary, len + 1, true);
    let dec_in: Vec<usize> = full[..len]
        .iter()
        .map(|&id| if id == super::vocab::END { super::vocab::PAD } else { id })
        .collect();
    let target: Vec<usize> = full[1..].to_vec();
    let mask = target.iter().map(|&t| t != super::vocab::PAD).collect();
    (dec_in, target, mask)
}

fn push_subroutine(block: &mut ContextBlock, vocab: &Vocab, sub: Option<&Subroutine>) {
    match sub {
        Some(s) => {
            let (ids, mask) = vocab.encode(&s.code_tokens, block.words, false);
            block.tokens.extend(ids);
            block.word_mask.extend(mask);
            block.sub_mask.push(true);
        }
        None => {
            block.tokens.extend(std::iter::repeat_n(super::vocab::PAD, block.words));
            block.word_mask.extend(std::iter::repeat_n(false, block.words));
            block.sub_mask.push(false);
        }
    }
}

/// Builds the tensors for `examples` under `mode`.
pub fn make_batch(
    examples: &[&Subroutine],
    corpus: &Corpus,
    vocab: &Vocab,
    hp: &HyperParams,
    mode: Variant,
) -> Result<Batch> {
    let b = examples.len();
    let (w, t) = (hp.w, hp.decode_max_len);
    let mut batch = Batch {
        ids: Vec::with_capacity(b),
        size: b,
        code_len: w,
        dec_len: t,
        code: Vec::with_capacity(b * w),
        code_mask: Vec::with_capacity(b * w),
        dec_input: Vec::with_capacity(b * t),
        dec_target: Vec::with_capacity(b * t),
        dec_mask: Vec::with_capacity(b * t),
        context: Context::None,
    };
    let (files, subs) = match mode {
        Variant::Baseline => (0, 0),
        Variant::Fc => (1, hp.s),
        Variant::Pc => (hp.f, hp.s),
    };
    let mut block = ContextBlock {
        files,
        subs,
        words: w,
        tokens: Vec::with_capacity(b * files * subs * w),
        word_mask: Vec::with_capacity(b * files * subs * w),
        sub_mask: Vec::with_capacity(b * files * subs),
        file_mask: Vec::with_capacity(b * files),
    };

    for &ex in examples {
        batch.ids.push(ex.id.clone());
        let (ids, mask) = vocab.encode(&ex.code_tokens, w, false);
        batch.code.extend(ids);
        batch.code_mask.extend(mask);
        let (dec_in, target, mask) = teacher_forcing(vocab, &ex.summary_tokens, t);
        batch.dec_input.extend(dec_in);
        batch.dec_target.extend(target);
        batch.dec_mask.extend(mask);

        match mode {
            Variant::Baseline => {}
            Variant::Fc => {
                let file = corpus
                    .file(&ex.file_id)
                    .ok_or_else(|| Error::invalid(format!("{}: unknown file {:?}", ex.id, ex.file_id)))?;
                let siblings = select_file_context(file, ex, hp.s);
                for slot in 0..hp.s {
                    let sub = siblings.get(slot).and_then(|id| corpus.subroutine(id));
                    push_subroutine(&mut block, vocab, sub);
                }
                block.file_mask.push(!siblings.is_empty());
            }
            Variant::Pc => {
                let project = corpus
                    .project(&ex.project_id)
                    .ok_or_else(|| Error::invalid(format!("{}: unknown project {:?}", ex.id, ex.project_id)))?;
                let selection = select_context_files(project, corpus.files(), &ex.id, hp.f, hp.select_seed)?;
                for slot in 0..hp.f {
                    let file = selection.files.get(slot).and_then(|id| corpus.file(id));
                    for k in 0..hp.s {
                        let sub = file
                            .and_then(|f| f.subroutines.get(k))
                            .and_then(|id| corpus.subroutine(id));
                        push_subroutine(&mut block, vocab, sub);
                    }
                    block.file_mask.push(file.is_some());
                }
            }
        }
    }
    batch.context = match mode {
        Variant::Baseline => Context::None,
        Variant::Fc => Context::File(block),
        Variant::Pc => Context::Project(block),
    };
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load::{RawRecord, Split, SplitAssignment, TextOrTokens};
    use crate::corpus::vocab::{build_vocab, END, PAD, START};

    fn rec(id: &str, p: &str, f: &str, pos: usize, code: &str, summary: &str) -> RawRecord {
        RawRecord {
            id: id.into(),
            project_id: p.into(),
            file_id: f.into(),
            position_in_file: pos,
            code: TextOrTokens::Text(code.into()),
            summary: TextOrTokens::Text(summary.into()),
        }
    }

    fn two_file_corpus() -> Corpus {
        Corpus::from_records(
            vec![
                rec("a", "p", "f1", 0, "int getA()", "a b"),
                rec("b", "p", "f1", 1, "int getB()", "returns b"),
                rec("c", "p", "f2", 0, "void setC(int c)", "sets c"),
            ],
            SplitAssignment(vec![("p".into(), Split::Train)]),
        )
        .unwrap()
    }

    #[test]
    fn teacher_forcing_shift() {
        let c = two_file_corpus();
        let v = build_vocab(c.split(Split::Train), 100).unwrap();
        let (dec_in, target, mask) = teacher_forcing(&v, &["a".to_string(), "b".to_string()], 5);
        assert_eq!(dec_in, vec![START, v.id("a"), v.id("b"), PAD, PAD]);
        assert_eq!(target, vec![v.id("a"), v.id("b"), END, PAD, PAD]);
        assert_eq!(mask, vec![true, true, true, false, false]);
    }

    #[test]
    fn pc_block_shapes_and_masks() {
        let c = two_file_corpus();
        let v = build_vocab(c.split(Split::Train), 100).unwrap();
        let hp = HyperParams::default();
        let ex = c.subroutine("a").unwrap();
        let b = make_batch(&[ex], &c, &v, &hp, Variant::Pc).unwrap();
        assert_eq!(b.code.len(), 25);
        let block = b.context.block().unwrap();
        assert_eq!(block.tokens.len(), 10 * 10 * 25);
        assert_eq!(block.sub_mask.len(), 10 * 10);
        let mut want = vec![false; 10];
        want[0] = true;
        want[1] = true;
        assert_eq!(block.file_mask, want);
        assert_eq!(b.variant(), Variant::Pc);
    }

    #[test]
    fn fc_block_excludes_target() {
        let c = two_file_corpus();
        let v = build_vocab(c.split(Split::Train), 100).unwrap();
        let hp = HyperParams { s: 3, w: 4, ..HyperParams::default() };
        let b = make_batch(&[c.subroutine("a").unwrap()], &c, &v, &hp, Variant::Fc).unwrap();
        let block = b.context.block().unwrap();
        assert_eq!(block.sub_mask, vec![true, false, false]);
        assert_eq!(&block.tokens[..4], &v.encode(&c.subroutine("b").unwrap().code_tokens, 4, false).0[..]);

        let lonely = make_batch(&[c.subroutine("c").unwrap()], &c, &v, &hp, Variant::Fc).unwrap();
        assert_eq!(lonely.context.block().unwrap().file_mask, vec![false]);
    }

    #[test]
    fn target_is_shifted_input() {
        let c = two_file_corpus();
        let v = build_vocab(c.split(Split::Train), 100).unwrap();
        let hp = HyperParams { decode_max_len: 3, ..HyperParams::default() };
        let subs: Vec<&Subroutine> = c.subroutines().iter().collect();
        let b = make_batch(&subs, &c, &v, &hp, Variant::Baseline).unwrap();
        for i in 0..b.size {
            for t in 0..b.dec_len - 1 {
                let (tgt, inp) = (b.dec_target[i * 3 + t], b.dec_input[i * 3 + t + 1]);
                if tgt != PAD && inp != PAD {
                    assert_eq!(tgt, inp);
                }
            }
        }
    }
}
