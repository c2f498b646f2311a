//! Core library for retrieval-augmented question answering over
//! semi-structured documents: United States Code style statutes and
//! financial reports with tables.
//!
//! The pipeline runs in four stages, each owned by a module:
//!
//! * [`statute`] — parse raw statute text into a hierarchy of enumerated
//!   levels (subsection, paragraph, subparagraph, clause, subclause) with
//!   every sentence assigned to exactly one path such as `s7703(a)(1)`.
//! * [`cite`] — find statutory citations in free text, both absolute
//!   (`section 7703(a)`) and relative (`subsection (a)`), and resolve the
//!   relative ones against a context path.
//! * [`retrieval`] — given the citations in a question, pull the relevant
//!   sentences out of a statute corpus under one of three strategies:
//!   mentioned-only, entire-section, or references (one-hop expansion).
//! * [`finqa`] — ingest financial-report QA data (pre/post text plus a
//!   table), select supporting facts, and render them for prompting.
//! * [`program`] — parse and evaluate the arithmetic program DSL used for
//!   numerical answers (`subtract(100, 60), divide(#0, 60)`).
//! * [`prompt`] — build zero-shot, few-shot, and chain-of-thought prompts
//!   from exemplar banks, and extract verdicts/answers from completions.
//! * [`gateway`] — talk to a completions backend (HTTP or an offline mock)
//!   with retries, bounded parallelism, and an append-only response cache.
//! * [`eval`] — score runs, compute 90% confidence intervals, and dump
//!   error cases for hand annotation.

pub mod cite;
pub mod eval;
pub mod finqa;
pub mod gateway;
pub mod program;
pub mod prompt;
pub mod retrieval;
pub mod statute;

pub use cite::{extract_citations, resolve_relative, scan_references, Citation, CitationTarget};
pub use eval::{answers_match, ci90, score_finqa, score_sara, EvalRecord, EvalReport};
pub use finqa::{ingest_finqa, render_facts, retrieve_facts, serialize_table, FactRef, FinQuestion, FinReport};
pub use gateway::{count_tokens_approx, BackendConfig, BackendKind, CompletionRequest, CompletionResult, Gateway};
pub use program::{eval_program, parse_program, programs_equivalent, Program, Value};
pub use prompt::{build_prompt, extract_finqa_answer, extract_sara_verdict, BuiltPrompt, Exemplar, PromptConfig, PromptMode, PromptTask, Verdict};
pub use retrieval::{retrieve, RetrievalStrategy, RetrievedContext, StatuteCorpus};
pub use statute::{parse_statute, LevelKind, ParsedStatute, SectionPath, StatuteSentence};
