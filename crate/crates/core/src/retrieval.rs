//! Statute retrieval: select the sentences a question needs from a corpus
//! of parsed sections.
//!
//! Three strategies, from narrowest to widest:
//!
//! * **MentionedOnly** — for a query path, the spine (sentences assigned
//!   exactly to each ancestor, root included) plus the query's subtree. A
//!   query for `s7703(a)(1)` returns the sentences assigned to `s7703`,
//!   `s7703(a)`, and `s7703(a)(1)`.
//! * **EntireSection** — MentionedOnly of the query truncated to depth 1,
//!   so the example above additionally returns `s7703(a)(2)`; a depth-0
//!   query already covers the whole section.
//! * **References** — MentionedOnly, then one hop: citations scanned from
//!   the first-hop sentences are expanded with their own MentionedOnly
//!   sets. Expansion does not recurse; chasing references transitively
//!   drags in most of the corpus for no benefit.
//!
//! Sections (or paths) cited but absent from the corpus are soft failures:
//! they are recorded in the provenance as [`ProvenanceTag::Missing`] and
//! skipped, because a partial statute corpus is the normal case.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cite::{scan_references, Citation, CitationTarget};
use crate::gateway::count_tokens_approx;
use crate::statute::{
    parse_statute, render_sentences, ParsedStatute, SectionPath, StatuteError, StatuteSentence,
};

// ─── Types ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalStrategy {
    MentionedOnly,
    EntireSection,
    References,
}

impl std::str::FromStr for RetrievalStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mentioned-only" => Ok(RetrievalStrategy::MentionedOnly),
            "entire-section" => Ok(RetrievalStrategy::EntireSection),
            "references" => Ok(RetrievalStrategy::References),
            other => Err(format!(
                "unknown strategy {other:?}: expected mentioned-only, entire-section, or references"
            )),
        }
    }
}

/// Why a path appears in (or is absent from) a retrieved context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceTag {
    /// A path the question cited directly.
    Queried,
    /// Ancestor of a queried path.
    Spine,
    /// Descendant of a queried path.
    Subtree,
    /// Pulled in by one-hop reference expansion.
    Referenced,
    /// Cited but absent from the corpus; nothing retrieved.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub path: SectionPath,
    pub tag: ProvenanceTag,
}

/// The sentences handed to prompting, with bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    /// Deduplicated by (section, ordinal), sorted by section then ordinal.
    pub sentences: Vec<StatuteSentence>,
    /// One entry per distinct path/tag pair, sorted.
    pub provenance: Vec<ProvenanceEntry>,
    /// Character count of [`RetrievedContext::render_text`].
    pub char_count: usize,
    /// `ceil(char_count / 4)`.
    pub approx_tokens: usize,
}

impl RetrievedContext {
    /// Render the retrieved sentences as statute-shaped text: section
    /// headers, enumerator markers re-emitted at path changes, one sentence
    /// per line.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut i = 0;
        while i < self.sentences.len() {
            let section = self.sentences[i].assigned_path.section_number().to_string();
            let slice_start = i;
            while i < self.sentences.len()
                && self.sentences[i].assigned_path.section_number() == section
            {
                i += 1;
            }
            let group = &self.sentences[slice_start..i];
            let root = SectionPath::root(&section).expect("validated by parse");
            // The section heading line renders only if its heading sentence
            // was retrieved; render_sentences handles that via the root
            // heading argument.
            let root_heading = group
                .iter()
                .find(|s| s.is_heading && s.assigned_path.is_root())
                .map(|s| s.text.clone());
            if !out.is_empty() {
                out.push('\n');
            }
            if root_heading.is_none() {
                out.push_str(&format!("§ {section}\n"));
            }
            out.push_str(&render_sentences(group.iter(), &root, root_heading.as_ref()));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("section {0} is not in the corpus")]
    UnknownSection(String),
    #[error(transparent)]
    Statute(#[from] StatuteError),
    #[error("no absolute citations to retrieve for")]
    NoCitationsFound,
    #[error("failed to load statute corpus: {0}")]
    CorpusLoad(String),
}

// ─── Corpus ─────────────────────────────────────────────────────────────────

/// An in-memory set of parsed sections, keyed by section number.
#[derive(Debug, Clone, Default)]
pub struct StatuteCorpus {
    sections: BTreeMap<String, ParsedStatute>,
}

impl StatuteCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, statute: ParsedStatute) {
        self.sections
            .insert(statute.root.section_number().to_string(), statute);
    }

    /// Load every `section<N>.txt` file in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, RetrievalError> {
        let mut corpus = StatuteCorpus::new();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| RetrievalError::CorpusLoad(format!("{}: {e}", dir.display())))?;
        let mut files: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|ext| ext == "txt")
                    && p.file_stem()
                        .and_then(|s| s.to_str())
                        .is_some_and(|s| s.starts_with("section"))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(RetrievalError::CorpusLoad(format!(
                "{}: no section*.txt files found",
                dir.display()
            )));
        }
        for file in files {
            let number = file
                .file_stem()
                .and_then(|s| s.to_str())
                .expect("filtered above")
                .trim_start_matches("section")
                .to_string();
            let raw = std::fs::read_to_string(&file)
                .map_err(|e| RetrievalError::CorpusLoad(format!("{}: {e}", file.display())))?;
            let parsed = parse_statute(&raw, &number)?;
            corpus.insert(parsed);
        }
        Ok(corpus)
    }

    pub fn get(&self, section_number: &str) -> Option<&ParsedStatute> {
        self.sections.get(section_number)
    }

    pub fn sections(&self) -> impl Iterator<Item = &ParsedStatute> {
        self.sections.values()
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    // ─── Strategies ─────────────────────────────────────────────────────────

    /// Spine plus subtree for one query path.
    pub fn retrieve_mentioned_only(
        &self,
        query: &SectionPath,
    ) -> Result<RetrievedContext, RetrievalError> {
        let mut acc = Accumulator::default();
        self.mentioned_only_into(query, ProvenanceTag::Queried, &mut acc)?;
        Ok(acc.finish())
    }

    /// MentionedOnly of the depth-1 truncation (whole section for depth-0).
    pub fn retrieve_entire_section(
        &self,
        query: &SectionPath,
    ) -> Result<RetrievedContext, RetrievalError> {
        // Validate the original query before widening so typos still error.
        let statute = self
            .get(query.section_number())
            .ok_or_else(|| RetrievalError::UnknownSection(query.section_number().to_string()))?;
        if !statute.paths.contains(query) {
            return Err(StatuteError::UnknownPath(query.to_string()).into());
        }
        let widened = query.truncate(1);
        let mut acc = Accumulator::default();
        self.mentioned_only_into(&widened, ProvenanceTag::Queried, &mut acc)?;
        Ok(acc.finish())
    }

    /// MentionedOnly plus one-hop expansion of references scanned from the
    /// first-hop sentences.
    pub fn retrieve_references(
        &self,
        query: &SectionPath,
    ) -> Result<RetrievedContext, RetrievalError> {
        let mut acc = Accumulator::default();
        self.mentioned_only_into(query, ProvenanceTag::Queried, &mut acc)?;
        let first_hop: Vec<StatuteSentence> = acc.sentences.values().cloned().collect();
        let scan = scan_references(&first_hop);
        for referenced in scan.paths {
            // One hop only: expansion sentences are not themselves scanned.
            self.soft_mentioned_only_into(&referenced, ProvenanceTag::Referenced, &mut acc);
        }
        Ok(acc.finish())
    }

    /// Union of the per-query strategy over every absolute citation.
    /// Relative citations cannot be resolved from a bare question and are
    /// ignored here; missing sections and unknown paths are recorded as
    /// [`ProvenanceTag::Missing`] rather than failing the whole retrieval.
    pub fn retrieve(
        &self,
        citations: &[Citation],
        strategy: RetrievalStrategy,
    ) -> Result<RetrievedContext, RetrievalError> {
        let queries: Vec<&SectionPath> = citations.iter().filter_map(|c| c.absolute()).collect();
        if queries.is_empty() {
            return Err(RetrievalError::NoCitationsFound);
        }
        let mut acc = Accumulator::default();
        for query in queries {
            let attempt = |acc: &mut Accumulator| -> Result<(), RetrievalError> {
                match strategy {
                    RetrievalStrategy::MentionedOnly => {
                        self.mentioned_only_into(query, ProvenanceTag::Queried, acc)
                    }
                    RetrievalStrategy::EntireSection => {
                        let statute = self.get(query.section_number()).ok_or_else(|| {
                            RetrievalError::UnknownSection(query.section_number().to_string())
                        })?;
                        if !statute.paths.contains(query) {
                            return Err(StatuteError::UnknownPath(query.to_string()).into());
                        }
                        self.mentioned_only_into(&query.truncate(1), ProvenanceTag::Queried, acc)
                    }
                    RetrievalStrategy::References => {
                        self.mentioned_only_into(query, ProvenanceTag::Queried, acc)?;
                        Ok(())
                    }
                }
            };
            if attempt(&mut acc).is_err() {
                acc.provenance
                    .insert((query.clone(), ProvenanceTag::Missing));
            }
        }
        if strategy == RetrievalStrategy::References {
            let first_hop: Vec<StatuteSentence> = acc.sentences.values().cloned().collect();
            let scan = scan_references(&first_hop);
            for referenced in scan.paths {
                self.soft_mentioned_only_into(&referenced, ProvenanceTag::Referenced, &mut acc);
            }
        }
        Ok(acc.finish())
    }

    /// Core of MentionedOnly shared by all strategies. `query_tag` is the
    /// tag for the query path itself (Queried or Referenced).
    fn mentioned_only_into(
        &self,
        query: &SectionPath,
        query_tag: ProvenanceTag,
        acc: &mut Accumulator,
    ) -> Result<(), RetrievalError> {
        let statute = self
            .get(query.section_number())
            .ok_or_else(|| RetrievalError::UnknownSection(query.section_number().to_string()))?;
        if !statute.paths.contains(query) {
            return Err(StatuteError::UnknownPath(query.to_string()).into());
        }
        let spine_tag = if query_tag == ProvenanceTag::Referenced {
            ProvenanceTag::Referenced
        } else {
            ProvenanceTag::Spine
        };
        for ancestor in query.ancestors() {
            let exact = statute.assigned_exactly(&ancestor);
            if !exact.is_empty() {
                acc.provenance.insert((ancestor.clone(), spine_tag));
            }
            for sentence in exact {
                acc.add(sentence);
            }
        }
        acc.provenance.insert((query.clone(), query_tag));
        for sentence in statute.subtree(query)? {
            if sentence.assigned_path != *query {
                let subtree_tag = if query_tag == ProvenanceTag::Referenced {
                    ProvenanceTag::Referenced
                } else {
                    ProvenanceTag::Subtree
                };
                acc.provenance
                    .insert((sentence.assigned_path.clone(), subtree_tag));
            }
            acc.add(sentence);
        }
        Ok(())
    }

    /// Like `mentioned_only_into` but missing sections/paths become Missing
    /// provenance entries instead of errors (used for reference expansion).
    fn soft_mentioned_only_into(
        &self,
        query: &SectionPath,
        tag: ProvenanceTag,
        acc: &mut Accumulator,
    ) {
        if self.mentioned_only_into(query, tag, acc).is_err() {
            acc.provenance.insert((query.clone(), ProvenanceTag::Missing));
        }
    }
}

/// Free-function form of [`StatuteCorpus::retrieve`], for symmetry with the
/// per-strategy methods.
pub fn retrieve(
    corpus: &StatuteCorpus,
    citations: &[Citation],
    strategy: RetrievalStrategy,
) -> Result<RetrievedContext, RetrievalError> {
    corpus.retrieve(citations, strategy)
}

/// Build a citation list from already-resolved paths (used by the CLI's
/// `--path` mode and by tests).
pub fn citations_for_paths(paths: &[SectionPath]) -> Vec<Citation> {
    paths
        .iter()
        .map(|p| Citation {
            target: CitationTarget::Absolute(p.clone()),
            span: (0, 0),
        })
        .collect()
}

// ─── Accumulator ────────────────────────────────────────────────────────────

#[derive(Default)]
struct Accumulator {
    /// Keyed by (section sort key, ordinal) for dedup and final ordering.
    sentences: BTreeMap<((u64, String), usize), StatuteSentence>,
    provenance: BTreeSet<(SectionPath, ProvenanceTag)>,
}

impl Accumulator {
    fn add(&mut self, sentence: &StatuteSentence) {
        let key = (
            section_key(sentence.assigned_path.section_number()),
            sentence.ordinal,
        );
        self.sentences.entry(key).or_insert_with(|| sentence.clone());
    }

    fn finish(self) -> RetrievedContext {
        let sentences: Vec<StatuteSentence> = self.sentences.into_values().collect();
        let provenance = self
            .provenance
            .into_iter()
            .map(|(path, tag)| ProvenanceEntry { path, tag })
            .collect();
        let mut ctx = RetrievedContext {
            sentences,
            provenance,
            char_count: 0,
            approx_tokens: 0,
        };
        let rendered = ctx.render_text();
        ctx.char_count = rendered.chars().count();
        ctx.approx_tokens = count_tokens_approx(&rendered);
        ctx
    }
}

fn section_key(number: &str) -> (u64, String) {
    let digits: String = number.chars().take_while(|c| c.is_ascii_digit()).collect();
    let suffix: String = number.chars().skip_while(|c| c.is_ascii_digit()).collect();
    (digits.parse().unwrap_or(0), suffix)
}

// ─── Tests ──────────────────────────────────────────────────────────────────
