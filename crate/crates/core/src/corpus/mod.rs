//! Corpus ingestion, tokenization, vocabulary, context selection and batching.

mod batch;
mod hyper;
pub mod ingest;
mod load;
mod select;
mod tokenize;
mod vocab;

pub use batch::{make_batch, teacher_forcing, Batch, Context, ContextBlock};
pub use hyper::{HyperParams, RnnKind, Variant};
pub use load::{
    load_corpus, write_corpus, Corpus, CorpusFile, Project, RawRecord, Split, SplitAssignment, Subroutine,
    TextOrTokens, SPLITS_FILE, SUBROUTINES_FILE,
};
pub use select::{select_context_files, select_file_context, ContextSelection};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocab, END, OOV, PAD, SPECIALS, START};
