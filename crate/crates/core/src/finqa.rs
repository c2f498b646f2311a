//! Financial-report QA corpus: ingest the public dataset layout, pick
//! supporting facts (gold annotations, a precomputed side file, or a
//! built-in lexical scorer), and render tables and facts for prompting.
//!
//! A report is ordered text (`pre_text` then `post_text`) plus one
//! rectangular table whose row 0 is the header and whose column 0 holds row
//! labels. A *fact* is either one text sentence or one table row; questions
//! carry the dataset's gold facts, and retrieval modes decide which facts
//! reach the prompt.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

// ─── Types ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinReport {
    pub id: String,
    pub pre_text: Vec<String>,
    pub post_text: Vec<String>,
    /// Rectangular after ingest; row 0 is the header, column 0 the row label.
    pub table: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinQuestion {
    /// Question id; doubles as the key into precomputed-retrieval side files.
    pub id: String,
    pub report_id: String,
    pub question: String,
    pub gold_program: String,
    pub gold_answer: String,
    pub gold_facts: Vec<FactRef>,
}

/// One report/question pair as stored in the normalized corpus JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinCase {
    pub report: FinReport,
    pub question: FinQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactKind {
    Text,
    Row,
}

/// Reference to one supporting fact: a sentence (ordinal over
/// `pre_text ++ post_text`) or a table row (index ≥ 1; the header is not a
/// fact). Derived `Ord` gives the canonical fact order: text facts by index,
/// then rows by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FactRef {
    pub kind: FactKind,
    pub index: usize,
}

impl FactRef {
    pub fn text(index: usize) -> Self {
        FactRef { kind: FactKind::Text, index }
    }

    pub fn row(index: usize) -> Self {
        FactRef { kind: FactKind::Row, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactMode {
    Gold,
    Precomputed,
    Lexical,
}

impl std::str::FromStr for FactMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gold" => Ok(FactMode::Gold),
            "precomputed" => Ok(FactMode::Precomputed),
            "lexical" => Ok(FactMode::Lexical),
            other => Err(format!(
                "unknown fact mode {other:?}: expected gold, precomputed, or lexical"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum FinqaError {
    #[error("entry {entry}: {detail}")]
    SchemaMismatch { entry: usize, detail: String },
    #[error("entry {entry}: table is empty")]
    EmptyTable { entry: usize },
    #[error("report {report_id}: fact {kind:?} {index} out of bounds")]
    IndexOutOfBounds {
        report_id: String,
        kind: FactKind,
        index: usize,
    },
    #[error("no precomputed facts for question {0}")]
    MissingPrecomputed(String),
    #[error("side file {path}: {detail}")]
    SideFile { path: String, detail: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

// ─── Ingest ─────────────────────────────────────────────────────────────────

/// Read the dataset's public JSON array layout into normalized pairs.
/// Tables are padded rectangular; `gold_inds` keys (`text_k` / `table_k`)
/// become [`FactRef`]s in canonical order.
pub fn ingest_finqa(path: &Path) -> Result<Vec<(FinReport, FinQuestion)>, FinqaError> {
    let raw = std::fs::read_to_string(path).map_err(|source| FinqaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let entries: Vec<serde_json::Value> =
        serde_json::from_str(&raw).map_err(|e| FinqaError::SchemaMismatch {
            entry: 0,
            detail: format!("not a JSON array of entries: {e}"),
        })?;
    let mut pairs = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        pairs.push(ingest_entry(i, entry)?);
    }
    Ok(pairs)
}

fn ingest_entry(i: usize, entry: &serde_json::Value) -> Result<(FinReport, FinQuestion), FinqaError> {
    let mismatch = |detail: String| FinqaError::SchemaMismatch { entry: i, detail };

    let id = entry
        .get("id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| mismatch("missing id".to_string()))?
        .to_string();
    let pre_text = string_list(entry.get("pre_text"))
        .ok_or_else(|| mismatch("missing pre_text".to_string()))?;
    let post_text = string_list(entry.get("post_text"))
        .ok_or_else(|| mismatch("missing post_text".to_string()))?;

    let raw_table = entry
        .get("table")
        .and_then(|v| v.as_array())
        .ok_or_else(|| mismatch("missing table".to_string()))?;
    let mut table: Vec<Vec<String>> = Vec::with_capacity(raw_table.len());
    for row in raw_table {
        let cells = string_list(Some(row))
            .ok_or_else(|| mismatch("table row is not a list of strings".to_string()))?;
        table.push(cells);
    }
    let width = table.iter().map(Vec::len).max().unwrap_or(0);
    if table.is_empty() || width == 0 {
        return Err(FinqaError::EmptyTable { entry: i });
    }
    for row in &mut table {
        row.resize(width, String::new());
    }

    // Single-question entries use "qa"; a few dataset files number them.
    let qa = entry
        .get("qa")
        .or_else(|| entry.get("qa_0"))
        .ok_or_else(|| mismatch("missing qa block".to_string()))?;
    let question = qa
        .get("question")
        .and_then(|v| v.as_str())
        .ok_or_else(|| mismatch("missing qa.question".to_string()))?
        .to_string();
    let gold_program = qa
        .get("program")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    let gold_answer = match qa.get("answer").and_then(|v| v.as_str()) {
        Some(answer) if !answer.is_empty() => answer.to_string(),
        _ => match qa.get("exe_ans") {
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(serde_json::Value::Bool(b)) => if *b { "yes" } else { "no" }.to_string(),
            Some(serde_json::Value::String(s)) => s.clone(),
            _ => return Err(mismatch("missing qa.answer and qa.exe_ans".to_string())),
        },
    };

    let mut gold_facts = BTreeSet::new();
    if let Some(inds) = qa.get("gold_inds") {
        let map = inds
            .as_object()
            .ok_or_else(|| mismatch("qa.gold_inds is not an object".to_string()))?;
        for key in map.keys() {
            gold_facts.insert(parse_gold_key(key).map_err(|detail| mismatch(detail))?);
        }
    }
    let report = FinReport {
        id: id.clone(),
        pre_text,
        post_text,
        table,
    };
    let gold_facts: Vec<FactRef> = gold_facts.into_iter().collect();
    for fact in &gold_facts {
        check_fact(&report, *fact).map_err(|_| mismatch(format!(
            "gold fact {:?} {} out of bounds",
            fact.kind, fact.index
        )))?;
    }
    let question = FinQuestion {
        id: id.clone(),
        report_id: id,
        question,
        gold_program,
        gold_answer,
        gold_facts,
    };
    Ok((report, question))
}

fn string_list(value: Option<&serde_json::Value>) -> Option<Vec<String>> {
    value?
        .as_array()?
        .iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect()
}

fn parse_gold_key(key: &str) -> Result<FactRef, String> {
    let (kind, rest) = if let Some(rest) = key.strip_prefix("text_") {
        (FactKind::Text, rest)
    } else if let Some(rest) = key.strip_prefix("table_") {
        (FactKind::Row, rest)
    } else {
        return Err(format!("unrecognized gold_inds key {key:?}"));
    };
    let index: usize = rest
        .parse()
        .map_err(|_| format!("unrecognized gold_inds key {key:?}"))?;
    if kind == FactKind::Row && index == 0 {
        return Err("gold_inds key table_0 refers to the header row".to_string());
    }
    Ok(FactRef { kind, index })
}

// ─── Facts ──────────────────────────────────────────────────────────────────

impl FinReport {
    /// Sentences in order: `pre_text` then `post_text`.
    pub fn sentence(&self, index: usize) -> Option<&str> {
        if index < self.pre_text.len() {
            self.pre_text.get(index).map(String::as_str)
        } else {
            self.post_text
                .get(index - self.pre_text.len())
                .map(String::as_str)
        }
    }

    pub fn sentence_count(&self) -> usize {
        self.pre_text.len() + self.post_text.len()
    }

    /// Every fact of the report in canonical order.
    pub fn all_facts(&self) -> Vec<FactRef> {
        let mut facts: Vec<FactRef> = (0..self.sentence_count()).map(FactRef::text).collect();
        facts.extend((1..self.table.len()).map(FactRef::row));
        facts
    }
}

fn check_fact(report: &FinReport, fact: FactRef) -> Result<(), FinqaError> {
    let in_bounds = match fact.kind {
        FactKind::Text => fact.index < report.sentence_count(),
        FactKind::Row => fact.index >= 1 && fact.index < report.table.len(),
    };
    if in_bounds {
        Ok(())
    } else {
        Err(FinqaError::IndexOutOfBounds {
            report_id: report.id.clone(),
            kind: fact.kind,
            index: fact.index,
        })
    }
}

/// The prose form of a fact, used for lexical scoring.
fn fact_text(report: &FinReport, fact: FactRef) -> String {
    match fact.kind {
        FactKind::Text => report.sentence(fact.index).unwrap_or_default().to_string(),
        FactKind::Row => report
            .table
            .get(fact.index)
            .map(|row| row.join(" | "))
            .unwrap_or_default(),
    }
}

// ─── Fact selection ─────────────────────────────────────────────────────────

/// Precomputed retriever outputs, keyed by question id. JSON Lines:
/// `{"qid": "...", "facts": [{"kind": "row", "index": 2}, ...]}`.
#[derive(Debug, Default)]
pub struct PrecomputedFacts {
    by_qid: HashMap<String, Vec<FactRef>>,
}

#[derive(Deserialize)]
struct SideRecord {
    qid: String,
    facts: Vec<FactRef>,
}

impl PrecomputedFacts {
    pub fn load(path: &Path) -> Result<Self, FinqaError> {
        let raw = std::fs::read_to_string(path).map_err(|source| FinqaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut by_qid = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: SideRecord =
                serde_json::from_str(line).map_err(|e| FinqaError::SideFile {
                    path: path.display().to_string(),
                    detail: format!("line {}: {e}", i + 1),
                })?;
            by_qid.insert(record.qid, record.facts);
        }
        Ok(PrecomputedFacts { by_qid })
    }

    pub fn get(&self, qid: &str) -> Option<&[FactRef]> {
        self.by_qid.get(qid).map(Vec::as_slice)
    }
}

/// Select supporting facts for a question.
///
/// * `Gold` — the annotated facts, verbatim; never consults report content.
/// * `Precomputed` — facts from the side file for this question id.
/// * `Lexical` — top-`k` facts by case-folded token overlap with the
///   question, numeric tokens counting double; ties go to the earlier fact
///   in canonical order, zero-overlap facts are never returned.
pub fn retrieve_facts(
    report: &FinReport,
    question: &FinQuestion,
    mode: FactMode,
    k: usize,
    precomputed: Option<&PrecomputedFacts>,
) -> Result<Vec<FactRef>, FinqaError> {
    match mode {
        FactMode::Gold => Ok(question.gold_facts.clone()),
        FactMode::Precomputed => {
            let side = precomputed
                .and_then(|p| p.get(&question.id))
                .ok_or_else(|| FinqaError::MissingPrecomputed(question.id.clone()))?;
            for fact in side {
                check_fact(report, *fact)?;
            }
            Ok(side.to_vec())
        }
        FactMode::Lexical => {
            let question_tokens = tokenize(&question.question);
            let mut scored: Vec<(u32, FactRef)> = report
                .all_facts()
                .into_iter()
                .map(|fact| (overlap_score(&question_tokens, &fact_text(report, fact)), fact))
                .filter(|(score, _)| *score > 0)
                .collect();
            // Stable sort keeps canonical order within equal scores.
            scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            Ok(scored.into_iter().take(k).map(|(_, fact)| fact).collect())
        }
    }
}

/// Case-folded alphanumeric tokens.
fn tokenize(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric() && c != '.')
        .filter(|t| !t.is_empty())
        .map(|t| t.trim_matches('.').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Sum of weights over tokens shared by question and fact; tokens carrying
/// a digit weigh 2 (numbers are the strongest signal in this domain).
fn overlap_score(question_tokens: &BTreeSet<String>, fact: &str) -> u32 {
    tokenize(fact)
        .intersection(question_tokens)
        .map(|t| if t.chars().any(|c| c.is_ascii_digit()) { 2 } else { 1 })
        .sum()
}

// ─── Rendering ──────────────────────────────────────────────────────────────

/// One line per row, cells joined by `" | "`, header first. No template
/// sentences: the table goes into the prompt in tabular form.
pub fn serialize_table(table: &[Vec<String>]) -> String {
    table
        .iter()
        .map(|row| row.join(" | "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Assemble the context block for a prompt: text facts in sentence order
/// (one per line), then the table header plus every selected row, the two
/// sections separated by a blank line.
pub fn render_facts(report: &FinReport, facts: &[FactRef]) -> Result<String, FinqaError> {
    for fact in facts {
        check_fact(report, *fact)?;
    }
    let mut text_indices: Vec<usize> = facts
        .iter()
        .filter(|f| f.kind == FactKind::Text)
        .map(|f| f.index)
        .collect();
    text_indices.sort_unstable();
    text_indices.dedup();
    let mut row_indices: Vec<usize> = facts
        .iter()
        .filter(|f| f.kind == FactKind::Row)
        .map(|f| f.index)
        .collect();
    row_indices.sort_unstable();
    row_indices.dedup();

    let mut blocks = Vec::new();
    if !text_indices.is_empty() {
        let lines: Vec<&str> = text_indices
            .iter()
            .map(|&i| report.sentence(i).expect("checked above"))
            .collect();
        blocks.push(lines.join("\n"));
    }
    if !row_indices.is_empty() {
        let mut rows: Vec<Vec<String>> = vec![report.table[0].clone()];
        rows.extend(row_indices.iter().map(|&i| report.table[i].clone()));
        blocks.push(serialize_table(&rows));
    }
    Ok(blocks.join("\n\n"))
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn fixture_path(name: &str) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/finqa").join(name)
    }

    fn sample_pairs() -> Vec<(FinReport, FinQuestion)> {
        ingest_finqa(&fixture_path("sample.json")).expect("sample fixture ingests")
    }

    #[test]
    fn serialize_table_examples() {
        let table = vec![
            vec!["year".to_string(), "2008".to_string(), "2009".to_string()],
            vec!["net sales".to_string(), "100".to_string(), "120".to_string()],
        ];
        assert_eq!(serialize_table(&table), "year | 2008 | 2009\nnet sales | 100 | 120");
        assert_eq!(serialize_table(&[vec!["total".to_string()]]), "total");
    }

    #[test]
    fn serialize_table_line_count_matches_rows() {
        for (report, _) in sample_pairs() {
            let rendered = serialize_table(&report.table);
            assert_eq!(rendered.lines().count(), report.table.len());
            let widths: BTreeSet<usize> = rendered
                .lines()
                .map(|line| line.split(" | ").count())
                .collect();
            assert_eq!(widths.len(), 1, "uneven cell counts in {}", report.id);
        }
    }

    #[test]
    fn ingest_minimal_entry() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("mini.json");
        let entry = serde_json::json!([{
            "id": "MINI/2019/page_1.pdf-1",
            "pre_text": ["alpha .", "beta ."],
            "post_text": ["gamma ."],
            "table": [
                ["", "2017", "2018", "2019"],
                ["net sales", "60", "80", "100"],
                ["operating expenses", "40", "40", "40"]
            ],
            "qa": {
                "question": "what were net sales in 2019?",
                "program": "table_max(net sales, none)",
                "exe_ans": 100,
                "answer": "100",
                "gold_inds": {"table_1": "net sales | 60 | 80 | 100"}
            }
        }]);
        std::fs::write(&path, entry.to_string()).expect("write");
        let pairs = ingest_finqa(&path).expect("ingest");
        assert_eq!(pairs.len(), 1);
        let (report, question) = &pairs[0];
        assert_eq!(report.pre_text.len(), 2);
        assert_eq!(report.table.len(), 3);
        assert!(report.table.iter().all(|row| row.len() == 4));
        assert_eq!(question.gold_facts, vec![FactRef::row(1)]);
        assert_eq!(question.gold_answer, "100");
        assert_eq!(question.report_id, report.id);
    }

    #[test]
    fn ragged_tables_are_padded_to_max_width() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("ragged.json");
        let entry = serde_json::json!([{
            "id": "RAGGED/1",
            "pre_text": ["x ."],
            "post_text": [],
            "table": [["a", "b", "c"], ["d"], ["e", "f"]],
            "qa": {"question": "q?", "program": "add(1, 2)", "answer": "3"}
        }]);
        std::fs::write(&path, entry.to_string()).expect("write");
        let (report, _) = ingest_finqa(&path).expect("ingest").remove(0);
        assert!(report.table.iter().all(|row| row.len() == 3));
        assert_eq!(report.table[1], vec!["d", "", ""]);
    }

    #[test]
    fn ingest_rejects_bad_entries() {
        let dir = tempfile::tempdir().expect("tempdir");
        let no_table = dir.path().join("empty_table.json");
        std::fs::write(
            &no_table,
            r#"[{"id":"X","pre_text":[],"post_text":[],"table":[],"qa":{"question":"q","answer":"1"}}]"#,
        )
        .expect("write");
        assert!(matches!(
            ingest_finqa(&no_table),
            Err(FinqaError::EmptyTable { entry: 0 })
        ));

        let no_question = dir.path().join("no_question.json");
        std::fs::write(
            &no_question,
            r#"[{"id":"X","pre_text":[],"post_text":[],"table":[["a"]],"qa":{"answer":"1"}}]"#,
        )
        .expect("write");
        assert!(matches!(
            ingest_finqa(&no_question),
            Err(FinqaError::SchemaMismatch { entry: 0, .. })
        ));

        let bad_fact = dir.path().join("bad_fact.json");
        std::fs::write(
            &bad_fact,
            r#"[{"id":"X","pre_text":["s"],"post_text":[],"table":[["a"],["b"]],"qa":{"question":"q","answer":"1","gold_inds":{"table_9":"z"}}}]"#,
        )
        .expect("write");
        assert!(matches!(
            ingest_finqa(&bad_fact),
            Err(FinqaError::SchemaMismatch { entry: 0, .. })
        ));
    }

    #[test]
    fn ingest_is_lossless_for_text() {
        let pairs = sample_pairs();
        let (report, _) = &pairs[0];
        assert_eq!(
            report.pre_text,
            vec![
                "net sales grew strongly in 2019 .".to_string(),
                "operating expenses were held flat year over year .".to_string(),
            ]
        );
        assert_eq!(report.post_text, vec!["the company expects further growth in 2020 .".to_string()]);
    }

    #[test]
    fn gold_inds_map_to_canonical_fact_order() {
        let pairs = sample_pairs();
        let (_, beta) = &pairs[1];
        assert_eq!(beta.gold_facts, vec![FactRef::text(0), FactRef::text(1)]);
        let (_, gamma) = &pairs[2];
        assert_eq!(gamma.gold_facts, vec![FactRef::row(1)]);
    }

    #[test]
    fn gold_mode_is_passthrough() {
        for (report, question) in sample_pairs() {
            let facts = retrieve_facts(&report, &question, FactMode::Gold, 3, None).expect("gold");
            assert_eq!(facts, question.gold_facts);
        }
    }

    #[test]
    fn precomputed_mode_reads_side_file() {
        let dir = tempfile::tempdir().expect("tempdir");
        let side = dir.path().join("side.jsonl");
        std::fs::write(
            &side,
            r#"{"qid":"ALPHA/2019/page_12.pdf-1","facts":[{"kind":"text","index":0},{"kind":"row","index":2}]}"#,
        )
        .expect("write");
        let precomputed = PrecomputedFacts::load(&side).expect("load");
        let pairs = sample_pairs();
        let (report, question) = &pairs[0];
        let facts =
            retrieve_facts(report, question, FactMode::Precomputed, 3, Some(&precomputed))
                .expect("precomputed");
        assert_eq!(facts, vec![FactRef::text(0), FactRef::row(2)]);

        let (report_b, question_b) = &pairs[1];
        let missing =
            retrieve_facts(report_b, question_b, FactMode::Precomputed, 3, Some(&precomputed));
        assert!(matches!(missing, Err(FinqaError::MissingPrecomputed(_))));
    }

    #[test]
    fn lexical_mode_prefers_row_with_matching_numbers() {
        let pairs = sample_pairs();
        let (report, _) = &pairs[0];
        let question = FinQuestion {
            id: "q".to_string(),
            report_id: report.id.clone(),
            question: "operating expenses of 40".to_string(),
            gold_program: String::new(),
            gold_answer: String::new(),
            gold_facts: vec![],
        };
        let facts = retrieve_facts(report, &question, FactMode::Lexical, 1, None).expect("lexical");
        assert_eq!(facts, vec![FactRef::row(2)]);
    }

    #[test]
    fn lexical_mode_breaks_ties_by_canonical_order() {
        let report = FinReport {
            id: "tie".to_string(),
            pre_text: vec!["alpha beta .".to_string(), "alpha beta .".to_string()],
            post_text: vec![],
            table: vec![
                vec!["label".to_string(), "v".to_string()],
                vec!["alpha beta".to_string(), "1".to_string()],
            ],
        };
        let question = FinQuestion {
            id: "q".to_string(),
            report_id: "tie".to_string(),
            question: "alpha beta".to_string(),
            gold_program: String::new(),
            gold_answer: String::new(),
            gold_facts: vec![],
        };
        let facts = retrieve_facts(&report, &question, FactMode::Lexical, 2, None).expect("lexical");
        assert_eq!(facts, vec![FactRef::text(0), FactRef::text(1)]);
    }

    #[test]
    fn lexical_mode_matches_brute_force_ranking() {
        // Independent scorer: count shared lowercase tokens by scanning
        // every question token against the fact's token list, doubling
        // digit-bearing tokens; no set machinery.
        fn brute_tokens(s: &str) -> Vec<String> {
            let mut tokens: Vec<String> = s
                .to_lowercase()
                .split(|c: char| !c.is_alphanumeric() && c != '.')
                .map(|t| t.trim_matches('.').to_string())
                .filter(|t| !t.is_empty())
                .collect();
            tokens.sort();
            tokens.dedup();
            tokens
        }
        fn brute_score(question: &str, fact: &str) -> u32 {
            let q = brute_tokens(question);
            let f = brute_tokens(fact);
            let mut score = 0;
            for token in &q {
                if f.contains(token) {
                    score += if token.bytes().any(|b| b.is_ascii_digit()) { 2 } else { 1 };
                }
            }
            score
        }

        for (report, question) in sample_pairs() {
            let got = retrieve_facts(&report, &question, FactMode::Lexical, 3, None).expect("lexical");
            let mut expected: Vec<(u32, FactRef)> = report
                .all_facts()
                .into_iter()
                .map(|fact| (brute_score(&question.question, &fact_text(&report, fact)), fact))
                .filter(|(s, _)| *s > 0)
                .collect();
            expected.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let expected: Vec<FactRef> = expected.into_iter().take(3).map(|(_, f)| f).collect();
            assert_eq!(got, expected, "ranking mismatch on {}", report.id);
            // Determinism: same inputs, same output.
            let again = retrieve_facts(&report, &question, FactMode::Lexical, 3, None).expect("lexical");
            assert_eq!(got, again);
        }
    }

    #[test]
    fn render_single_text_fact() {
        let pairs = sample_pairs();
        let (report, _) = &pairs[0];
        let rendered = render_facts(report, &[FactRef::text(0)]).expect("render");
        assert_eq!(rendered, "net sales grew strongly in 2019 .");
    }

    #[test]
    fn render_single_row_fact_includes_header() {
        let pairs = sample_pairs();
        let (report, _) = &pairs[0];
        let rendered = render_facts(report, &[FactRef::row(1)]).expect("render");
        assert_eq!(rendered, " | 2017 | 2018 | 2019\nnet sales | 60 | 80 | 100");
    }

    #[test]
    fn render_out_of_bounds_fact_is_an_error() {
        let pairs = sample_pairs();
        let (report, _) = &pairs[0];
        assert!(matches!(
            render_facts(report, &[FactRef::text(99)]),
            Err(FinqaError::IndexOutOfBounds { .. })
        ));
        assert!(matches!(
            render_facts(report, &[FactRef::row(0)]),
            Err(FinqaError::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn table_golden_file() {
        let pairs = sample_pairs();
        let (report, _) = &pairs[0];
        let golden = std::fs::read_to_string(fixture_path("golden/table.txt")).expect("golden");
        assert_eq!(serialize_table(&report.table), golden);
    }

    #[test]
    fn facts_render_golden_file() {
        let pairs = sample_pairs();
        let (report, _) = &pairs[0];
        let golden = std::fs::read_to_string(fixture_path("golden/facts.txt")).expect("golden");
        let rendered = render_facts(report, &[FactRef::text(1), FactRef::row(2)]).expect("render");
        assert_eq!(rendered, golden);
    }

    #[test]
    fn fin_case_round_trips_through_jsonl() {
        let pairs = sample_pairs();
        let case = FinCase {
            report: pairs[3].0.clone(),
            question: pairs[3].1.clone(),
        };
        let line = serde_json::to_string(&case).expect("serialize");
        let back: FinCase = serde_json::from_str(&line).expect("deserialize");
        assert_eq!(back, case);
    }
}
