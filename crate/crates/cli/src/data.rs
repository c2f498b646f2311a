//! Case loading, split selection, seeded sampling, and the raw-file
//! importers that turn distributed data into the JSONL shapes the runner
//! consumes.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use strata_core::finqa::FinCase;
use strata_core::prompt::Verdict;
use strata_core::statute::parse_statute;

use crate::config::{Split, VALIDATION_SIZE};

// ─── Entailment cases ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaraCase {
    pub id: String,
    /// The statement to judge, including its statute citations.
    pub text: String,
    pub gold: Verdict,
}

pub fn load_sara_cases(path: &Path) -> Result<Vec<SaraCase>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading cases {}", path.display()))?;
    let mut cases = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: SaraCase = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad case line", path.display(), i + 1))?;
        cases.push(case);
    }
    sort_unique_by_id(&mut cases, |c| c.id.clone(), path)?;
    Ok(cases)
}

pub fn load_fin_cases(path: &Path) -> Result<Vec<FinCase>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading cases {}", path.display()))?;
    let mut cases = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: FinCase = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad case line", path.display(), i + 1))?;
        cases.push(case);
    }
    sort_unique_by_id(&mut cases, |c| c.question.id.clone(), path)?;
    Ok(cases)
}

fn sort_unique_by_id<T>(items: &mut [T], id: impl Fn(&T) -> String, path: &Path) -> Result<()> {
    items.sort_by_key(&id);
    let mut seen = BTreeSet::new();
    for item in items.iter() {
        if !seen.insert(id(item)) {
            bail!("{}: duplicate case id {:?}", path.display(), id(item));
        }
    }
    Ok(())
}

// ─── Split and sample ───────────────────────────────────────────────────────

/// Validation is the first [`VALIDATION_SIZE`] cases by sorted id; test is
/// the remainder. Callers pass the already-sorted full set.
pub fn select_split<T>(cases: Vec<T>, split: Split) -> Vec<T> {
    let cut = VALIDATION_SIZE.min(cases.len());
    let mut cases = cases;
    match split {
        Split::Validation => {
            cases.truncate(cut);
            cases
        }
        Split::Test => cases.split_off(cut),
    }
}

/// Keep a seeded random subset of `n` cases, preserving sorted order.
pub fn sample_cases<T>(cases: Vec<T>, n: usize, seed: u64) -> Result<Vec<T>> {
    if n > cases.len() {
        bail!("sample_n {} exceeds the {} cases in the split", n, cases.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = rand::seq::index::sample(&mut rng, cases.len(), n).into_vec();
    keep.sort_unstable();
    let keep: BTreeSet<usize> = keep.into_iter().collect();
    Ok(cases
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, c)| c)
        .collect())
}

// ─── Raw entailment importer ────────────────────────────────────────────────

/// One raw case file:
///
/// ```text
/// id: case-7703-a-pos
/// statement: Alice and Bob are treated as married for 2017.
/// answer: Entailment
/// ```
///
/// Lines after `statement:` that do not begin a new field continue the
/// statement and are joined with single spaces.
pub fn parse_raw_case(raw: &str, origin: &str) -> Result<SaraCase> {
    let mut id: Option<String> = None;
    let mut statement: Option<String> = None;
    let mut answer: Option<String> = None;
    let mut in_statement = false;
    for line in raw.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("id:") {
            id = Some(rest.trim().to_string());
            in_statement = false;
        } else if let Some(rest) = trimmed.strip_prefix("statement:") {
            statement = Some(rest.trim().to_string());
            in_statement = true;
        } else if let Some(rest) = trimmed.strip_prefix("answer:") {
            answer = Some(rest.trim().to_string());
            in_statement = false;
        } else if in_statement {
            let acc = statement.as_mut().expect("in_statement implies statement");
            if !acc.is_empty() {
                acc.push(' ');
            }
            acc.push_str(trimmed);
        } else {
            bail!("{origin}: unexpected line {trimmed:?} (expected id:, statement:, or answer:)");
        }
    }
    let id = id.filter(|s| !s.is_empty()).with_context(|| format!("{origin}: missing id"))?;
    let text = statement
        .filter(|s| !s.is_empty())
        .with_context(|| format!("{origin}: missing statement"))?;
    let gold: Verdict = answer
        .with_context(|| format!("{origin}: missing answer (gold label)"))?
        .parse()
        .map_err(|e: String| anyhow::anyhow!("{origin}: {e}"))?;
    Ok(SaraCase { id, text, gold })
}

/// A statute sentence flattened for the normalized corpus file.
#[derive(Debug, Serialize, Deserialize)]
pub struct SentenceRow {
    pub section: String,
    pub path: String,
    pub ordinal: usize,
    pub text: String,
    pub is_heading: bool,
}

/// Parse every statute under `dir` and return one row per sentence, grouped
/// by section in filename order.
pub fn statute_rows(dir: &Path) -> Result<Vec<SentenceRow>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading statute directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .txt statute files under {}", dir.display());
    }
    let mut rows = Vec::new();
    for file in files {
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("bad statute filename {}", file.display()))?;
        let number = stem.trim_start_matches("section").to_string();
        let raw = std::fs::read_to_string(&file)
            .with_context(|| format!("reading statute {}", file.display()))?;
        let parsed = parse_statute(&raw, &number)
            .with_context(|| format!("parsing statute {}", file.display()))?;
        for sentence in &parsed.sentences {
            rows.push(SentenceRow {
                section: number.clone(),
                path: sentence.assigned_path.to_string(),
                ordinal: sentence.ordinal,
                text: sentence.text.clone(),
                is_heading: sentence.is_heading,
            });
        }
    }
    Ok(rows)
}

/// Import a raw data directory (`statutes/*.txt` + `cases/*.txt`) into
/// `out_dir/statutes.jsonl` and `out_dir/cases.jsonl`. Returns
/// (sentence rows, cases) written.
pub fn import_sara(raw_dir: &Path, out_dir: &Path) -> Result<(usize, usize)> {
    let statute_dir = raw_dir.join("statutes");
    let case_dir = raw_dir.join("cases");
    if !statute_dir.is_dir() || !case_dir.is_dir() {
        bail!(
            "{} must contain statutes/ and cases/ subdirectories",
            raw_dir.display()
        );
    }
    let rows = statute_rows(&statute_dir)?;

    let mut case_files: Vec<_> = std::fs::read_dir(&case_dir)
        .with_context(|| format!("reading case directory {}", case_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    case_files.sort();
    if case_files.is_empty() {
        bail!("no .txt case files under {}", case_dir.display());
    }
    let mut cases = Vec::new();
    for file in case_files {
        let raw = std::fs::read_to_string(&file)
            .with_context(|| format!("reading case {}", file.display()))?;
        cases.push(parse_raw_case(&raw, &file.display().to_string())?);
    }
    sort_unique_by_id(&mut cases, |c| c.id.clone(), &case_dir)?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    write_jsonl(&out_dir.join("statutes.jsonl"), &rows)?;
    write_jsonl(&out_dir.join("cases.jsonl"), &cases)?;
    Ok((rows.len(), cases.len()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).context("serializing jsonl line")?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
