//! Statute parsing: section hierarchy and sentence-to-path assignment.
//!
//! United States Code style sections nest five enumerated levels below the
//! section root. Each level has a fixed enumerator alphabet, so the depth of
//! a path determines the kind of every component:
//!
//! | depth | level        | enumerators        |
//! |-------|--------------|--------------------|
//! | 1     | subsection   | `(a)`, `(b)`, ...  |
//! | 2     | paragraph    | `(1)`, `(2)`, ...  |
//! | 3     | subparagraph | `(A)`, `(B)`, ...  |
//! | 4     | clause       | `(i)`, `(ii)`, ... |
//! | 5     | subclause    | `(I)`, `(II)`, ... |
//!
//! [`parse_statute`] walks the raw text once, maintaining the deepest open
//! path. A marker at level L replaces the path from depth L onward; text
//! between markers is segmented into sentences and every sentence is
//! assigned to the path that was open where it appeared. Markers like `(i)`
//! are ambiguous (letter nine vs. roman one); they are resolved by sibling
//! continuity — see [`resolve_marker`] for the exact preference order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

// ─── Level kinds ────────────────────────────────────────────────────────────

/// The five enumerated levels below a section root, ordered by depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    Subsection,
    Paragraph,
    Subparagraph,
    Clause,
    Subclause,
}

impl LevelKind {
    pub const ALL: [LevelKind; 5] = [
        LevelKind::Subsection,
        LevelKind::Paragraph,
        LevelKind::Subparagraph,
        LevelKind::Clause,
        LevelKind::Subclause,
    ];

    /// Depth of this level below the section root (subsection = 1).
    pub fn depth(self) -> usize {
        match self {
            LevelKind::Subsection => 1,
            LevelKind::Paragraph => 2,
            LevelKind::Subparagraph => 3,
            LevelKind::Clause => 4,
            LevelKind::Subclause => 5,
        }
    }

    /// The level at a given depth, if any.
    pub fn at_depth(depth: usize) -> Option<LevelKind> {
        LevelKind::ALL.get(depth.wrapping_sub(1)).copied()
    }

    /// Lowercase name used in prose cues ("subsection", "paragraph", ...).
    pub fn cue_word(self) -> &'static str {
        match self {
            LevelKind::Subsection => "subsection",
            LevelKind::Paragraph => "paragraph",
            LevelKind::Subparagraph => "subparagraph",
            LevelKind::Clause => "clause",
            LevelKind::Subclause => "subclause",
        }
    }

    /// First enumerator of the level's sequence.
    pub fn first(self) -> &'static str {
        match self {
            LevelKind::Subsection => "a",
            LevelKind::Paragraph => "1",
            LevelKind::Subparagraph => "A",
            LevelKind::Clause => "i",
            LevelKind::Subclause => "I",
        }
    }

    /// Whether `enumerator` is lexically valid at this level.
    pub fn accepts(self, enumerator: &str) -> bool {
        self.ordinal(enumerator).is_some()
    }

    /// 0-based position of `enumerator` in this level's sequence, or `None`
    /// if it is not valid for the level.
    pub fn ordinal(self, enumerator: &str) -> Option<u32> {
        match self {
            LevelKind::Subsection => letter_ordinal(enumerator, false),
            LevelKind::Subparagraph => letter_ordinal(enumerator, true),
            LevelKind::Paragraph => {
                if !enumerator.is_empty()
                    && enumerator.bytes().all(|b| b.is_ascii_digit())
                    && !(enumerator.len() > 1 && enumerator.starts_with('0'))
                {
                    enumerator.parse::<u32>().ok().and_then(|n| n.checked_sub(1))
                } else {
                    None
                }
            }
            LevelKind::Clause => roman_ordinal(enumerator, false),
            LevelKind::Subclause => roman_ordinal(enumerator, true),
        }
    }

    /// The enumerator that follows `enumerator` at this level, if valid.
    pub fn successor(self, enumerator: &str) -> Option<String> {
        let next = self.ordinal(enumerator)? + 1;
        Some(self.enumerator_at(next))
    }

    /// Enumerator at a 0-based position in this level's sequence.
    pub fn enumerator_at(self, ordinal: u32) -> String {
        match self {
            LevelKind::Subsection => letter_at(ordinal, false),
            LevelKind::Subparagraph => letter_at(ordinal, true),
            LevelKind::Paragraph => (ordinal + 1).to_string(),
            LevelKind::Clause => roman_at(ordinal, false),
            LevelKind::Subclause => roman_at(ordinal, true),
        }
    }
}

/// Letter sequence `a..z, aa, bb, .., zz` (doubled letters follow the single
/// run, matching how the Code extends exhausted alphabets).
fn letter_ordinal(s: &str, upper: bool) -> Option<u32> {
    let bytes = s.as_bytes();
    if bytes.is_empty() || bytes.len() > 2 {
        return None;
    }
    let in_range = |b: u8| if upper { b.is_ascii_uppercase() } else { b.is_ascii_lowercase() };
    if !bytes.iter().copied().all(in_range) {
        return None;
    }
    let base = if upper { b'A' } else { b'a' };
    match bytes {
        [c] => Some((c - base) as u32),
        [c, d] if c == d => Some(26 + (c - base) as u32),
        _ => None,
    }
}

fn letter_at(ordinal: u32, upper: bool) -> String {
    let base = if upper { b'A' } else { b'a' };
    if ordinal < 26 {
        ((base + ordinal as u8) as char).to_string()
    } else {
        let c = (base + (ordinal - 26) as u8) as char;
        format!("{c}{c}")
    }
}

/// Value of a roman numeral in canonical subtractive form, or `None`.
fn roman_ordinal(s: &str, upper: bool) -> Option<u32> {
    if s.is_empty() {
        return None;
    }
    let wrong_case = |c: char| if upper { c.is_ascii_lowercase() } else { c.is_ascii_uppercase() };
    if s.chars().any(wrong_case) {
        return None;
    }
    let digit = |c: char| -> Option<u32> {
        Some(match c.to_ascii_uppercase() {
            'I' => 1,
            'V' => 5,
            'X' => 10,
            'L' => 50,
            'C' => 100,
            'D' => 500,
            'M' => 1000,
            _ => return None,
        })
    };
    let values: Vec<u32> = s.chars().map(digit).collect::<Option<_>>()?;
    let mut total = 0u32;
    let mut i = 0;
    while i < values.len() {
        if i + 1 < values.len() && values[i + 1] > values[i] {
            total += values[i + 1] - values[i];
            i += 2;
        } else {
            total += values[i];
            i += 1;
        }
    }
    // Reject non-canonical spellings like "iiii" by round-tripping.
    if total >= 1 && roman_at(total - 1, upper) == s {
        Some(total - 1)
    } else {
        None
    }
}

fn roman_at(ordinal: u32, upper: bool) -> String {
    let mut n = ordinal + 1;
    const TABLE: [(u32, &str); 13] = [
        (1000, "m"),
        (900, "cm"),
        (500, "d"),
        (400, "cd"),
        (100, "c"),
        (90, "xc"),
        (50, "l"),
        (40, "xl"),
        (10, "x"),
        (9, "ix"),
        (5, "v"),
        (4, "iv"),
        (1, "i"),
    ];
    let mut out = String::new();
    for (value, glyph) in TABLE {
        while n >= value {
            out.push_str(glyph);
            n -= value;
        }
    }
    if upper {
        out.to_ascii_uppercase()
    } else {
        out
    }
}

// ─── Section paths ──────────────────────────────────────────────────────────

/// Errors from constructing or parsing a [`SectionPath`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("invalid section number {0:?}: expected digits with an optional trailing uppercase letter")]
    InvalidSectionNumber(String),
    #[error("component {component:?} is not a valid {} enumerator (depth {depth})", kind.cue_word())]
    InvalidComponent {
        component: String,
        depth: usize,
        kind: LevelKind,
    },
    #[error("path deeper than {max} levels", max = LevelKind::ALL.len())]
    TooDeep,
    #[error("malformed path string {0:?}: expected the form s7703(a)(1)")]
    Malformed(String),
}

/// A node in a section's hierarchy, e.g. `s7703(a)(1)`.
///
/// Ordering is by natural section number (numeric part, then letter suffix)
/// and then by component sequence, so a sorted list of paths reads in
/// document order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SectionPath {
    section_number: String,
    components: Vec<String>,
}

impl SectionPath {
    /// Path for a section root, validating the section number.
    pub fn root(section_number: &str) -> Result<Self, PathError> {
        if !valid_section_number(section_number) {
            return Err(PathError::InvalidSectionNumber(section_number.to_string()));
        }
        Ok(SectionPath {
            section_number: section_number.to_string(),
            components: Vec::new(),
        })
    }

    /// Extend the path by one enumerator, validating it against the level
    /// kind at the new depth.
    pub fn child(&self, enumerator: &str) -> Result<Self, PathError> {
        let depth = self.components.len() + 1;
        let kind = LevelKind::at_depth(depth).ok_or(PathError::TooDeep)?;
        if !kind.accepts(enumerator) {
            return Err(PathError::InvalidComponent {
                component: enumerator.to_string(),
                depth,
                kind,
            });
        }
        let mut components = self.components.clone();
        components.push(enumerator.to_string());
        Ok(SectionPath {
            section_number: self.section_number.clone(),
            components,
        })
    }

    pub fn section_number(&self) -> &str {
        &self.section_number
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    /// Number of components below the section root.
    pub fn depth(&self) -> usize {
        self.components.len()
    }

    pub fn is_root(&self) -> bool {
        self.components.is_empty()
    }

    /// The level kind of the deepest component, `None` at the root.
    pub fn leaf_kind(&self) -> Option<LevelKind> {
        LevelKind::at_depth(self.components.len())
    }

    /// Parent path, `None` at the root.
    pub fn parent(&self) -> Option<SectionPath> {
        if self.components.is_empty() {
            return None;
        }
        let mut components = self.components.clone();
        components.pop();
        Some(SectionPath {
            section_number: self.section_number.clone(),
            components,
        })
    }

    /// Proper ancestors from the root down to the immediate parent.
    ///
    /// `s7703(a)(1)` yields `[s7703, s7703(a)]`; a root path yields `[]`.
    pub fn ancestors(&self) -> Vec<SectionPath> {
        (0..self.components.len())
            .map(|depth| self.truncate(depth))
            .collect()
    }

    /// Prefix of this path with at most `depth` components.
    pub fn truncate(&self, depth: usize) -> SectionPath {
        SectionPath {
            section_number: self.section_number.clone(),
            components: self.components.iter().take(depth).cloned().collect(),
        }
    }

    /// Whether `other` lies in this path's subtree (reflexive).
    pub fn is_prefix_of(&self, other: &SectionPath) -> bool {
        self.section_number == other.section_number
            && other.components.len() >= self.components.len()
            && self.components == other.components[..self.components.len()]
    }

    /// Sort key ordering sections naturally: `s99` before `s100`, `s280`
    /// before `s280A`.
    pub fn sort_key(&self) -> (u64, String, Vec<(u32, String)>) {
        let (num, suffix) = split_section_number(&self.section_number);
        let comps = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let kind = LevelKind::at_depth(i + 1).expect("validated depth");
                (kind.ordinal(c).unwrap_or(u32::MAX), c.clone())
            })
            .collect();
        (num, suffix, comps)
    }
}

fn valid_section_number(s: &str) -> bool {
    let bytes = s.as_bytes();
    if bytes.is_empty() {
        return false;
    }
    let digits = bytes.iter().take_while(|b| b.is_ascii_digit()).count();
    digits > 0 && bytes[digits..].iter().all(|b| b.is_ascii_uppercase()) && bytes.len() - digits <= 1
}

fn split_section_number(s: &str) -> (u64, String) {
    let digits: String = s.chars().take_while(|c| c.is_ascii_digit()).collect();
    let suffix: String = s.chars().skip_while(|c| c.is_ascii_digit()).collect();
    (digits.parse().unwrap_or(0), suffix)
}

impl PartialOrd for SectionPath {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SectionPath {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl fmt::Display for SectionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.section_number)?;
        for c in &self.components {
            write!(f, "({c})")?;
        }
        Ok(())
    }
}

static PATH_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^s([0-9]+[A-Z]?)((?:\([0-9A-Za-z]+\))*)$").expect("static regex"));

impl FromStr for SectionPath {
    type Err = PathError;

    /// Parse the canonical rendering, e.g. `s7703(a)(1)`.
    fn from_str(s: &str) -> Result<Self, PathError> {
        let caps = PATH_RE
            .captures(s)
            .ok_or_else(|| PathError::Malformed(s.to_string()))?;
        let mut path = SectionPath::root(&caps[1])?;
        for comp in component_tokens(caps.get(2).map_or("", |m| m.as_str())) {
            path = path.child(&comp)?;
        }
        Ok(path)
    }
}

fn component_tokens(chain: &str) -> Vec<String> {
    chain
        .split(['(', ')'])
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl Serialize for SectionPath {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SectionPath {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ─── Parsed statutes ────────────────────────────────────────────────────────

/// One sentence of statute text with its hierarchical assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatuteSentence {
    pub text: String,
    pub assigned_path: SectionPath,
    /// Position in the section's reading order, unique within the section.
    pub ordinal: usize,
    /// Character offsets (start, end) into the raw input.
    pub source_span: (usize, usize),
    /// True for heading fragments, which are emitted as sentences but also
    /// recorded in [`ParsedStatute::headings`].
    #[serde(default)]
    pub is_heading: bool,
}

/// A fully parsed section: every path seen, headings, and all sentences in
/// reading order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedStatute {
    pub root: SectionPath,
    /// Every path with at least one marker or sentence; closed under parent.
    pub paths: BTreeSet<SectionPath>,
    pub headings: BTreeMap<SectionPath, String>,
    pub sentences: Vec<StatuteSentence>,
}

impl ParsedStatute {
    /// Sentences assigned to `path` or any descendant, in ordinal order.
    pub fn subtree(&self, path: &SectionPath) -> Result<Vec<&StatuteSentence>, StatuteError> {
        if !self.paths.contains(path) {
            return Err(StatuteError::UnknownPath(path.to_string()));
        }
        Ok(self
            .sentences
            .iter()
            .filter(|s| path.is_prefix_of(&s.assigned_path))
            .collect())
    }

    /// Sentences assigned exactly to `path` (no descendants).
    pub fn assigned_exactly(&self, path: &SectionPath) -> Vec<&StatuteSentence> {
        self.sentences
            .iter()
            .filter(|s| &s.assigned_path == path)
            .collect()
    }

    /// Render back to indented statute text. Re-parsing the result yields an
    /// identical sentence-to-path assignment.
    pub fn render_text(&self) -> String {
        render_sentences(self.sentences.iter(), &self.root, self.headings.get(&self.root))
    }
}

/// Shared renderer used for whole statutes and retrieved subsets: one
/// sentence per line, with enumerator markers re-emitted wherever the path
/// moves below the previous sentence's position.
pub(crate) fn render_sentences<'a, I>(
    sentences: I,
    root: &SectionPath,
    root_heading: Option<&String>,
) -> String
where
    I: Iterator<Item = &'a StatuteSentence>,
{
    let mut out = String::new();
    let mut prev: Option<SectionPath> = None;
    for sentence in sentences {
        let path = &sentence.assigned_path;
        if sentence.is_heading && path.is_root() && root_heading.is_some_and(|h| h == &sentence.text) {
            out.push_str(&format!("§ {}. {}\n", root.section_number(), sentence.text));
            prev = Some(path.clone());
            continue;
        }
        let common = match &prev {
            Some(p) => common_prefix_len(p.components(), path.components()),
            None => 0,
        };
        let mut line = String::new();
        // A sibling move re-emits from the divergence depth; staying on the
        // same path emits no markers.
        let start = if prev.as_ref() == Some(path) { path.depth() } else { common };
        for comp in &path.components()[start..] {
            line.push_str(&format!("({comp}) "));
        }
        line.push_str(&sentence.text);
        out.push_str(line.trim_end());
        out.push('\n');
        prev = Some(path.clone());
    }
    out
}

fn common_prefix_len(a: &[String], b: &[String]) -> usize {
    a.iter().zip(b.iter()).take_while(|(x, y)| x == y).count()
}

// ─── Errors ─────────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum StatuteError {
    #[error("statute text is empty")]
    EmptyInput,
    #[error("malformed enumerator ({marker}) at char {offset}: cannot follow {context}")]
    MalformedEnumerator {
        marker: String,
        offset: usize,
        context: String,
    },
    #[error("unknown path {0}")]
    UnknownPath(String),
    #[error(transparent)]
    Path(#[from] PathError),
}

// ─── Marker resolution ──────────────────────────────────────────────────────

/// How a marker interpretation relates to the open path; lower is preferred.
#[derive(Debug, PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
enum MarkerFit {
    /// Successor of the sibling currently open at that depth.
    Successor,
    /// First enumerator of the next level down.
    Opener,
    /// Later sibling at an open depth (tolerates gaps from repealed units).
    ForwardSibling,
    /// Opens a new level at a non-initial enumerator (repealed leading units).
    LateOpener,
    /// Earlier or equal sibling; tolerated so that one bad marker does not
    /// poison the rest of the section, but never preferred.
    BackwardSibling,
}

/// Resolve a marker token against the currently open component stack.
///
/// Preference order: exact successor of the most recent sibling at a
/// compatible depth, then opening the next level at its first enumerator
/// (this is what sends `(i)` to clause when a subparagraph is open), then
/// forward sibling jumps. Deeper interpretations win ties because the deeper
/// sibling was seen more recently. Returns the new component stack.
fn resolve_marker(current: &[String], token: &str) -> Option<Vec<String>> {
    let mut best: Option<(MarkerFit, usize)> = None;
    for depth in 1..=(current.len() + 1).min(LevelKind::ALL.len()) {
        let kind = LevelKind::at_depth(depth).expect("bounded depth");
        let Some(ord) = kind.ordinal(token) else { continue };
        let fit = if depth == current.len() + 1 {
            if ord == 0 {
                MarkerFit::Opener
            } else {
                MarkerFit::LateOpener
            }
        } else {
            let open = kind.ordinal(&current[depth - 1]);
            match open {
                Some(prev) if ord == prev + 1 => MarkerFit::Successor,
                Some(prev) if ord > prev => MarkerFit::ForwardSibling,
                _ => MarkerFit::BackwardSibling,
            }
        };
        let better = match best {
            None => true,
            // Prefer lower fit; on equal fit prefer the deeper depth.
            Some((bf, bd)) => (fit, std::cmp::Reverse(depth)) < (bf, std::cmp::Reverse(bd)),
        };
        if better {
            best = Some((fit, depth));
        }
    }
    let (_, depth) = best?;
    let mut next: Vec<String> = current[..depth - 1].to_vec();
    next.push(token.to_string());
    Some(next)
}

// ─── Sentence segmentation ──────────────────────────────────────────────────

/// Abbreviations whose trailing period does not end a sentence.
const ABBREVIATIONS: [&str; 3] = ["U.S.", "Sec.", "e.g."];

/// Split a block of text into sentence fragments with byte ranges relative
/// to the block. Boundaries are `. ` and `; `, protected after known
/// abbreviations; a boundary whose remainder is a bare connective ("and",
/// "or") is suppressed so enumerated items keep their trailing conjunction.
pub(crate) fn segment_sentences(block: &str) -> Vec<(usize, usize)> {
    let bytes = block.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let boundary = (bytes[i] == b'.' || bytes[i] == b';')
            && i + 1 < bytes.len()
            && bytes[i + 1] == b' ';
        if boundary && !(bytes[i] == b'.' && ends_with_abbreviation(&block[..=i])) {
            let rest = block[i + 1..].trim();
            if !rest.is_empty() && !matches!(rest, "and" | "or") {
                spans.push((start, i + 1));
                start = i + 1;
            }
        }
        i += 1;
    }
    if start < bytes.len() {
        spans.push((start, bytes.len()));
    }
    // Trim leading/trailing whitespace from each span.
    spans
        .into_iter()
        .filter_map(|(s, e)| trim_span(block, s, e))
        .collect()
}

fn ends_with_abbreviation(prefix: &str) -> bool {
    ABBREVIATIONS.iter().any(|abbr| prefix.ends_with(abbr))
}

fn trim_span(text: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    let slice = &text[start..end];
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        return None;
    }
    let lead = slice.len() - slice.trim_start().len();
    let tail = slice.len() - slice.trim_end().len();
    Some((start + lead, end - tail))
}

// ─── Parsing ────────────────────────────────────────────────────────────────

static MARKER_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\(([0-9A-Za-z]+)\)[ \t]*").expect("static regex"));

static HEADER_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^\s*(?:§|[Ss]ection|[Ss]ec\.)\s*([0-9]+[A-Z]?)\.?\s*(.*)$").expect("static regex")
});

/// Maximum word count for a fragment to qualify as a heading.
const HEADING_MAX_WORDS: usize = 12;

/// Parse raw statute text into a [`ParsedStatute`].
///
/// The first line may be a section header (`§ 7703. Determination of
/// marital status`); its title becomes the root heading. Text before any
/// marker is assigned to the root; dangling flush text after a subtree stays
/// on the deepest open path.
pub fn parse_statute(raw_text: &str, section_number: &str) -> Result<ParsedStatute, StatuteError> {
    if raw_text.trim().is_empty() {
        return Err(StatuteError::EmptyInput);
    }
    let root = SectionPath::root(section_number)?;

    let mut paths: BTreeSet<SectionPath> = BTreeSet::new();
    paths.insert(root.clone());
    let mut headings: BTreeMap<SectionPath, String> = BTreeMap::new();
    let mut sentences: Vec<StatuteSentence> = Vec::new();
    let mut byte_spans: Vec<(usize, usize)> = Vec::new();
    let mut current: Vec<String> = Vec::new();

    let push_sentence = |text: &str,
                             span: (usize, usize),
                             path: SectionPath,
                             is_heading: bool,
                             sentences: &mut Vec<StatuteSentence>,
                             byte_spans: &mut Vec<(usize, usize)>| {
        let ordinal = sentences.len();
        sentences.push(StatuteSentence {
            text: text.to_string(),
            assigned_path: path,
            ordinal,
            source_span: (0, 0), // fixed up from byte_spans at the end
            is_heading,
        });
        byte_spans.push(span);
    };

    let mut offset = 0usize;
    let mut first_content_line = true;
    for line in raw_text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let line_body = line.trim_end_matches(['\n', '\r']);
        if line_body.trim().is_empty() {
            continue;
        }

        // Section header line, only recognized as the first content line.
        if first_content_line {
            first_content_line = false;
            if let Some(caps) = HEADER_RE.captures(line_body) {
                let title = caps.get(2).map_or("", |m| m.as_str()).trim();
                if !title.is_empty() {
                    let m = caps.get(2).expect("matched group");
                    headings.insert(root.clone(), title.to_string());
                    push_sentence(
                        title,
                        (line_start + m.start(), line_start + m.start() + title.len()),
                        root.clone(),
                        true,
                        &mut sentences,
                        &mut byte_spans,
                    );
                }
                continue;
            }
        }

        let indent = line_body.len() - line_body.trim_start().len();
        let mut pos = indent;
        let mut after_marker = false;

        // Leading markers, possibly chained: "(d)(2)(A) In general".
        while let Some(m) = MARKER_RE.captures(&line_body[pos..]) {
            let token = m.get(1).expect("matched group").as_str();
            match resolve_marker(&current, token) {
                Some(next) => {
                    current = next;
                    let mut p = root.clone();
                    for comp in &current {
                        p = p.child(comp)?;
                        paths.insert(p.clone());
                    }
                    after_marker = true;
                    pos += m.get(0).expect("whole match").end();
                }
                None => {
                    return Err(StatuteError::MalformedEnumerator {
                        marker: token.to_string(),
                        offset: char_offset(raw_text, line_start + pos),
                        context: path_of(&root, &current).to_string(),
                    });
                }
            }
        }

        let path = path_of(&root, &current);
        let rest = &line_body[pos..];
        if rest.trim().is_empty() {
            continue;
        }

        let mut fragments = segment_sentences(rest);
        // Heading: the first fragment right after a marker, if it is short,
        // starts uppercase, and ends with the line or a period.
        if after_marker {
            if let Some(&(fs, fe)) = fragments.first() {
                let fragment = &rest[fs..fe];
                let ends_line = rest[fe..].trim().is_empty();
                if is_heading_fragment(fragment, ends_line) {
                    headings.insert(path.clone(), fragment.to_string());
                    push_sentence(
                        fragment,
                        (line_start + pos + fs, line_start + pos + fe),
                        path.clone(),
                        true,
                        &mut sentences,
                        &mut byte_spans,
                    );
                    fragments.remove(0);
                }
            }
        }
        for (fs, fe) in fragments {
            push_sentence(
                &rest[fs..fe],
                (line_start + pos + fs, line_start + pos + fe),
                path.clone(),
                false,
                &mut sentences,
                &mut byte_spans,
            );
        }
    }

    if sentences.is_empty() {
        return Err(StatuteError::EmptyInput);
    }

    // Convert byte spans to character offsets in one pass.
    let mut byte_to_char = vec![0usize; raw_text.len() + 1];
    let mut count = 0usize;
    let mut last = 0usize;
    for (b, _) in raw_text.char_indices() {
        for entry in byte_to_char.iter_mut().take(b + 1).skip(last) {
            *entry = count;
        }
        last = b + 1;
        count += 1;
    }
    for entry in byte_to_char.iter_mut().skip(last) {
        *entry = count;
    }
    for (sentence, (bs, be)) in sentences.iter_mut().zip(&byte_spans) {
        sentence.source_span = (byte_to_char[*bs], byte_to_char[*be]);
    }

    Ok(ParsedStatute {
        root,
        paths,
        headings,
        sentences,
    })
}

fn path_of(root: &SectionPath, components: &[String]) -> SectionPath {
    let mut p = root.clone();
    for comp in components {
        p = p.child(comp).expect("components already validated");
    }
    p
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

fn is_heading_fragment(fragment: &str, ends_line: bool) -> bool {
    let words = fragment.split_whitespace().count();
    if words == 0 || words >= HEADING_MAX_WORDS {
        return false;
    }
    if !(ends_line || fragment.ends_with('.')) {
        return false;
    }
    // Chapeau tails like "if—" or "year," are connective, not headings.
    if fragment.ends_with(['—', ',', ';', ':']) || fragment.ends_with("--") {
        return false;
    }
    fragment
        .chars()
        .find(|c| c.is_alphabetic())
        .is_some_and(|c| c.is_uppercase())
}

// ─── Tests ──────────────────────────────────────────────────────────────────
