//! Citation extraction: find statutory citations in free text and resolve
//! relative ones against a context path.
//!
//! All recognized surface forms live in this module's pattern table:
//!
//! * `section 7703`, `section 152(f)(1)` — absolute, with optional chain;
//! * `sections 151 and 152`, `sections 1, 2, and 63(a)` — absolute lists,
//!   distributed over the conjunction;
//! * `§7703(a)`, `§§ 151 and 152` — symbol forms;
//! * `under 7703(a)(1)` — bare number-with-chain after the cue word "under";
//! * `subsection (a)`, `paragraph (2)`, `subparagraph (B)(ii)`, and their
//!   plural list forms — relative to the enclosing provision, unless
//!   followed by `of section N`, which anchors them absolutely.
//!
//! Cue words match case-insensitively; enumerators are case-sensitive
//! because case picks the level (`(a)` vs `(A)`).

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statute::{LevelKind, SectionPath, StatuteSentence};

// ─── Types ──────────────────────────────────────────────────────────────────

/// What a citation points at.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CitationTarget {
    /// Fully specified path, e.g. `s152(f)(1)`.
    Absolute(SectionPath),
    /// Components anchored at a level cue; needs a context path to resolve,
    /// e.g. `subsection (a)` or `subparagraph (A)(i)`.
    Relative {
        level: LevelKind,
        components: Vec<String>,
    },
}

/// One citation found in text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub target: CitationTarget,
    /// Character offsets (start, end) of the matched text.
    pub span: (usize, usize),
}

impl Citation {
    pub fn is_relative(&self) -> bool {
        matches!(self.target, CitationTarget::Relative { .. })
    }

    /// The absolute path, if this citation carries one.
    pub fn absolute(&self) -> Option<&SectionPath> {
        match &self.target {
            CitationTarget::Absolute(p) => Some(p),
            CitationTarget::Relative { .. } => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CiteError {
    #[error("cannot resolve {cue} {components:?} against {context}: {reason}")]
    UnresolvableRelative {
        cue: &'static str,
        components: String,
        context: String,
        reason: String,
    },
}

/// Resolved references scanned out of statute sentences, with warnings for
/// relatives that could not be resolved.
#[derive(Debug, Clone, Default)]
pub struct ReferenceScan {
    /// Distinct resolved paths in first-seen order.
    pub paths: Vec<SectionPath>,
    pub warnings: Vec<String>,
}

// ─── Pattern table ──────────────────────────────────────────────────────────

/// `(a)(1)(A)` chains with no interior whitespace.
const CHAIN: &str = r"(?:\([0-9A-Za-z]+\))*";

static SECTION_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(r"(?i:\bsection)\s+([0-9]+[A-Z]?)({CHAIN})")).expect("static regex")
});

static SECTION_LIST_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i:\bsections)\s+").expect("static regex"));

static SYMBOL_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(r"§§?\s*([0-9]+[A-Z]?)({CHAIN})")).expect("static regex")
});

static UNDER_BARE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(r"(?i:\bunder)\s+([0-9]+[A-Z]?)((?:\([0-9A-Za-z]+\))+)"))
        .expect("static regex")
});

static RELATIVE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(
        r"(?i:\b(subsections?|paragraphs?|subparagraphs?|clauses?|subclauses?))\s+(\([0-9A-Za-z]+\){CHAIN})"
    ))
    .expect("static regex")
});

/// List continuation after an item: `, (c)(4), or (d)(1)(C)`.
static LIST_TAIL_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(
        r"^(?:\s*,\s*(?:(?i:and|or)\s+)?|\s+(?i:and|or)\s+)(\([0-9A-Za-z]+\){CHAIN})"
    ))
    .expect("static regex")
});

/// Numeric list continuation: `, 2, and 63(a)` after `sections 1`.
static NUM_LIST_TAIL_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(&format!(
        r"^(?:\s*,\s*(?:(?i:and|or)\s+)?|\s+(?i:and|or)\s+)([0-9]+[A-Z]?)({CHAIN})"
    ))
    .expect("static regex")
});

static OF_SECTION_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^\s+of\s+(?i:section)\s+([0-9]+[A-Z]?)").expect("static regex")
});

// ─── Extraction ─────────────────────────────────────────────────────────────

/// Extract every citation in `text`, deduplicated by target, with
/// non-overlapping spans sorted by start offset.
pub fn extract_citations(text: &str) -> Vec<Citation> {
    let mut raw: Vec<(usize, usize, CitationTarget)> = Vec::new();

    // Absolute list form: "sections 151 and 152(a)". Scanned manually past
    // the cue because regex repetition only captures the last item.
    for cue in SECTION_LIST_RE.find_iter(text) {
        let mut pos = cue.end();
        let mut end = cue.end();
        let mut items = Vec::new();
        // First item is mandatory; tails are optional.
        static FIRST_NUM_RE: Lazy<Regex> = Lazy::new(|| {
            Regex::new(&format!(r"^([0-9]+[A-Z]?)({CHAIN})")).expect("static regex")
        });
        if let Some(m) = FIRST_NUM_RE.captures(&text[pos..]) {
            let whole = m.get(0).expect("whole match");
            if let Some(path) = absolute_path(&m[1], m.get(2).map_or("", |g| g.as_str())) {
                items.push(path);
            }
            end = pos + whole.end();
            pos = end;
            while let Some(t) = NUM_LIST_TAIL_RE.captures(&text[pos..]) {
                let whole = t.get(0).expect("whole match");
                if let Some(path) = absolute_path(&t[1], t.get(2).map_or("", |g| g.as_str())) {
                    items.push(path);
                }
                end = pos + whole.end();
                pos = end;
            }
        }
        if items.len() > 1 {
            for path in items {
                raw.push((cue.start(), end, CitationTarget::Absolute(path)));
            }
        }
    }

    for caps in SECTION_RE.captures_iter(text) {
        let whole = caps.get(0).expect("whole match");
        if let Some(path) = absolute_path(&caps[1], caps.get(2).map_or("", |g| g.as_str())) {
            raw.push((whole.start(), whole.end(), CitationTarget::Absolute(path)));
        }
    }

    for caps in SYMBOL_RE.captures_iter(text) {
        let whole = caps.get(0).expect("whole match");
        let mut items = Vec::new();
        if let Some(path) = absolute_path(&caps[1], caps.get(2).map_or("", |g| g.as_str())) {
            items.push(path);
        }
        let mut pos = whole.end();
        let mut end = whole.end();
        // "§§ 151 and 152" distributes like the word form.
        if whole.as_str().starts_with("§§") {
            while let Some(t) = NUM_LIST_TAIL_RE.captures(&text[pos..]) {
                let w = t.get(0).expect("whole match");
                if let Some(path) = absolute_path(&t[1], t.get(2).map_or("", |g| g.as_str())) {
                    items.push(path);
                }
                end = pos + w.end();
                pos = end;
            }
        }
        for path in items {
            raw.push((whole.start(), end, CitationTarget::Absolute(path)));
        }
    }

    for caps in UNDER_BARE_RE.captures_iter(text) {
        let whole = caps.get(0).expect("whole match");
        if let Some(path) = absolute_path(&caps[1], caps.get(2).map_or("", |g| g.as_str())) {
            raw.push((whole.start(), whole.end(), CitationTarget::Absolute(path)));
        }
    }

    for caps in RELATIVE_RE.captures_iter(text) {
        let whole = caps.get(0).expect("whole match");
        let cue = caps.get(1).expect("cue").as_str().to_ascii_lowercase();
        let level = match cue.trim_end_matches('s') {
            "subsection" => LevelKind::Subsection,
            "paragraph" => LevelKind::Paragraph,
            "subparagraph" => LevelKind::Subparagraph,
            "clause" => LevelKind::Clause,
            "subclause" => LevelKind::Subclause,
            _ => continue,
        };
        let mut chains = vec![caps.get(2).expect("chain").as_str().to_string()];
        let mut pos = whole.end();
        let mut end = whole.end();
        if cue.ends_with('s') {
            while let Some(t) = LIST_TAIL_RE.captures(&text[pos..]) {
                let w = t.get(0).expect("whole match");
                chains.push(t[1].to_string());
                end = pos + w.end();
                pos = end;
            }
        }
        // "of section N" anchors the whole list absolutely when the cue is
        // subsection (a direct child of the section root); deeper cues would
        // leave gaps we cannot fill, so they stay relative.
        let anchor = OF_SECTION_RE
            .captures(&text[end..])
            .map(|a| (a.get(0).expect("whole").end(), a[1].to_string()));
        for chain in chains {
            let components = chain_tokens(&chain);
            let Some(valid) = validate_relative(level, &components) else { continue };
            match (&anchor, level) {
                (Some((alen, number)), LevelKind::Subsection) => {
                    if let Some(path) = absolute_path(number, &valid.iter().map(|c| format!("({c})")).collect::<String>()) {
                        raw.push((whole.start(), end + alen, CitationTarget::Absolute(path)));
                    }
                }
                _ => {
                    raw.push((
                        whole.start(),
                        end,
                        CitationTarget::Relative {
                            level,
                            components: valid,
                        },
                    ));
                }
            }
        }
    }

    // Overlap resolution: earlier start wins, longer match breaks ties.
    raw.sort_by(|a, b| (a.0, std::cmp::Reverse(a.1)).cmp(&(b.0, std::cmp::Reverse(b.1))).then_with(|| a.2.cmp(&b.2)));
    let mut out: Vec<Citation> = Vec::new();
    let mut seen_targets = std::collections::BTreeSet::new();
    let mut covered_end = 0usize;
    let mut group: Option<(usize, usize)> = None;
    for (start, end, target) in raw {
        // Citations distributed out of one list share a span; keep them all.
        let same_group = group == Some((start, end));
        if start < covered_end && !same_group {
            continue;
        }
        if seen_targets.insert(target.clone()) {
            out.push(Citation {
                target,
                span: (char_offset(text, start), char_offset(text, end)),
            });
        }
        covered_end = covered_end.max(end);
        group = Some((start, end));
    }
    out.sort_by_key(|c| c.span);
    out
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

fn chain_tokens(chain: &str) -> Vec<String> {
    chain
        .split(['(', ')'])
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Validate a component chain starting at depth 1; returns the longest valid
/// prefix, or `None` if the first component already fails.
fn absolute_path(number: &str, chain: &str) -> Option<SectionPath> {
    let mut path = SectionPath::root(number).ok()?;
    for token in chain_tokens(chain) {
        match path.child(&token) {
            Ok(next) => path = next,
            Err(_) => break,
        }
    }
    Some(path)
}

/// Validate a relative chain whose first component sits at `level`; returns
/// the longest kind-valid prefix, or `None` if even the first fails.
fn validate_relative(level: LevelKind, components: &[String]) -> Option<Vec<String>> {
    let mut valid = Vec::new();
    for (i, comp) in components.iter().enumerate() {
        match LevelKind::at_depth(level.depth() + i) {
            Some(kind) if kind.accepts(comp) => valid.push(comp.clone()),
            _ => break,
        }
    }
    if valid.is_empty() {
        None
    } else {
        Some(valid)
    }
}

// ─── Resolution ─────────────────────────────────────────────────────────────

/// Resolve a relative citation against the path of the provision it appears
/// in. `subsection (a)` inside `s7703(b)(1)` resolves to `s7703(a)`;
/// `paragraph (2)` inside `s7703(a)(1)` resolves to `s7703(a)(2)`.
pub fn resolve_relative(
    level: LevelKind,
    components: &[String],
    context: &SectionPath,
) -> Result<SectionPath, CiteError> {
    let depth = level.depth();
    let err = |reason: String| CiteError::UnresolvableRelative {
        cue: level.cue_word(),
        components: components.join(","),
        context: context.to_string(),
        reason,
    };
    if context.depth() + 1 < depth {
        return Err(err(format!(
            "context has depth {} but a {} needs {} enclosing levels",
            context.depth(),
            level.cue_word(),
            depth - 1
        )));
    }
    let mut path = context.truncate(depth - 1);
    for comp in components {
        path = path
            .child(comp)
            .map_err(|e| err(e.to_string()))?;
    }
    Ok(path)
}

/// Scan statute sentences for references: extract citations from each
/// sentence, resolve relative ones against the sentence's assigned path, and
/// return distinct paths in first-seen order. Unresolvable relatives are
/// dropped with a warning.
pub fn scan_references(sentences: &[StatuteSentence]) -> ReferenceScan {
    let mut scan = ReferenceScan::default();
    let mut seen = std::collections::BTreeSet::new();
    for sentence in sentences {
        for citation in extract_citations(&sentence.text) {
            let resolved = match &citation.target {
                CitationTarget::Absolute(path) => Ok(path.clone()),
                CitationTarget::Relative { level, components } => {
                    resolve_relative(*level, components, &sentence.assigned_path)
                }
            };
            match resolved {
                Ok(path) => {
                    if seen.insert(path.clone()) {
                        scan.paths.push(path);
                    }
                }
                Err(e) => scan.warnings.push(e.to_string()),
            }
        }
    }
    scan
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statute::parse_statute;

    fn path(s: &str) -> SectionPath {
        s.parse().expect("valid path")
    }

    fn absolute_targets(text: &str) -> Vec<String> {
        extract_citations(text)
            .iter()
            .filter_map(|c| c.absolute().map(|p| p.to_string()))
            .collect()
    }

    #[test]
    fn plain_section_with_chain() {
        assert_eq!(absolute_targets("as provided in section 7703(a)(1) of this title"), vec!["s7703(a)(1)"]);
        assert_eq!(absolute_targets("see section 151."), vec!["s151"]);
        assert_eq!(absolute_targets("within the meaning of section 152(f)(1))"), vec!["s152(f)(1)"]);
    }

    #[test]
    fn symbol_forms() {
        assert_eq!(absolute_targets("as defined in §7703(b)"), vec!["s7703(b)"]);
        assert_eq!(absolute_targets("see §§ 151 and 152"), vec!["s151", "s152"]);
    }

    #[test]
    fn and_lists_distribute() {
        assert_eq!(absolute_targets("sections 151 and 152 apply"), vec!["s151", "s152"]);
        assert_eq!(
            absolute_targets("In sections 1, 2, and 63(a) of this title"),
            vec!["s1", "s2", "s63(a)"]
        );
    }

    #[test]
    fn bare_number_after_under() {
        assert_eq!(absolute_targets("a deduction under 7703(a)(1) for the year"), vec!["s7703(a)(1)"]);
        // Bare numbers not preceded by "under" are too ambiguous to extract.
        assert!(absolute_targets("filed form 1040(a) yesterday").is_empty());
    }

    #[test]
    fn spec_sentence_has_no_false_positives() {
        let got = absolute_targets("Section 7703(b)(3) applies to Alice maintaining her household for 2018.");
        assert_eq!(got, vec!["s7703(b)(3)"]);
    }

    #[test]
    fn relative_forms_carry_level() {
        let cites = extract_citations("within the meaning of subsection (a) and paragraph (2)");
        let rels: Vec<_> = cites
            .iter()
            .filter_map(|c| match &c.target {
                CitationTarget::Relative { level, components } => Some((*level, components.join(""))),
                _ => None,
            })
            .collect();
        assert_eq!(
            rels,
            vec![
                (LevelKind::Subsection, "a".to_string()),
                (LevelKind::Paragraph, "2".to_string())
            ]
        );
    }

    #[test]
    fn relative_list_with_chains() {
        let cites = extract_citations("Notwithstanding subsections (c)(1)(B), (c)(4), or (d)(1)(C), if—");
        let rels: Vec<_> = cites
            .iter()
            .filter_map(|c| match &c.target {
                CitationTarget::Relative { components, .. } => Some(components.join(",")),
                _ => None,
            })
            .collect();
        assert_eq!(rels, vec!["c,1,B", "c,4", "d,1,C"]);
    }

    #[test]
    fn relative_anchored_by_of_section() {
        assert_eq!(
            absolute_targets("pursuant to subsections (a) and (b) of section 7703"),
            vec!["s7703(a)", "s7703(b)"]
        );
    }

    #[test]
    fn enumerator_case_is_significant() {
        let cites = extract_citations("see subparagraph (B) and subparagraph (b)");
        // "(b)" is not a valid subparagraph enumerator, so only (B) extracts.
        assert_eq!(cites.len(), 1);
        assert_eq!(
            cites[0].target,
            CitationTarget::Relative {
                level: LevelKind::Subparagraph,
                components: vec!["B".to_string()]
            }
        );
    }

    #[test]
    fn cue_words_are_case_insensitive() {
        assert_eq!(absolute_targets("SECTION 7703 and Section 151"), vec!["s7703", "s151"]);
    }

    #[test]
    fn spans_are_sorted_and_non_overlapping() {
        let text = "under section 7703(a), see sections 151 and 152, or subsection (b)";
        let cites = extract_citations(text);
        for pair in cites.windows(2) {
            assert!(pair[0].span.0 <= pair[1].span.0, "sorted by start");
        }
        // Spans from distinct list groups never interleave.
        let mut last_end = 0;
        let mut last_span = (usize::MAX, usize::MAX);
        for c in &cites {
            if c.span != last_span {
                assert!(c.span.0 >= last_end, "overlap at {:?}", c.span);
                last_end = c.span.1;
                last_span = c.span;
            }
        }
    }

    #[test]
    fn duplicate_mentions_dedup() {
        let got = absolute_targets("section 151 applies; section 151 controls");
        assert_eq!(got, vec!["s151"]);
    }

    #[test]
    fn resolve_relative_within_context() {
        assert_eq!(
            resolve_relative(LevelKind::Subsection, &["a".into()], &path("s7703(b)(1)")).unwrap(),
            path("s7703(a)")
        );
        assert_eq!(
            resolve_relative(LevelKind::Paragraph, &["2".into()], &path("s7703(a)(1)")).unwrap(),
            path("s7703(a)(2)")
        );
        assert_eq!(
            resolve_relative(LevelKind::Subparagraph, &["B".into()], &path("s152(d)(2)(A)")).unwrap(),
            path("s152(d)(2)(B)")
        );
        // Same-depth context also resolves: paragraph cue inside a paragraph's
        // parent subsection.
        assert_eq!(
            resolve_relative(LevelKind::Paragraph, &["2".into()], &path("s7703(a)")).unwrap(),
            path("s7703(a)(2)")
        );
    }

    #[test]
    fn resolve_relative_needs_enough_context() {
        let err = resolve_relative(LevelKind::Paragraph, &["2".into()], &path("s7703"));
        assert!(matches!(err, Err(CiteError::UnresolvableRelative { .. })));
    }

    #[test]
    fn scan_references_resolves_against_assignment() {
        let raw = "\
§ 9. Example
(a) First
This subsection is unremarkable.
(b) Second
(1) Anyone married within the meaning of subsection (a) and described in section 152(f)(1) qualifies.
";
        let parsed = parse_statute(raw, "9").expect("parses");
        let scan = scan_references(&parsed.sentences);
        let got: Vec<String> = scan.paths.iter().map(|p| p.to_string()).collect();
        assert_eq!(got, vec!["s9(a)", "s152(f)(1)"]);
        assert!(scan.warnings.is_empty());
    }

    #[test]
    fn scan_reports_unresolvable_relatives() {
        let raw = "§ 9. Example\nSee paragraph (2) for details.\n";
        let parsed = parse_statute(raw, "9").expect("parses");
        let scan = scan_references(&parsed.sentences);
        assert!(scan.paths.is_empty());
        assert_eq!(scan.warnings.len(), 1, "warnings: {:?}", scan.warnings);
    }

    #[test]
    fn extraction_offsets_are_char_based() {
        // The em-dash is multi-byte; spans must still count characters.
        let text = "whether—see section 151 here";
        let cites = extract_citations(text);
        assert_eq!(cites.len(), 1);
        let (s, e) = cites[0].span;
        let chars: Vec<char> = text.chars().collect();
        let slice: String = chars[s..e].iter().collect();
        assert_eq!(slice, "section 151");
    }
}
