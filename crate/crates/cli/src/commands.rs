//! The small subcommands: importers, statute parsing, ad-hoc retrieval and
//! prompt inspection, sampling, program evaluation, re-scoring, and the
//! annotation dump. The `run` pipeline itself lives in [`crate::runner`].

use std::path::Path;

use anyhow::{bail, Context, Result};
use strata_core::cite::extract_citations;
use strata_core::eval::{dump_for_annotation, format_report_table, RecordVerdict};
use strata_core::finqa::{ingest_finqa, FinCase, FinReport};
use strata_core::program::{eval_program, parse_program};
use strata_core::retrieval::{citations_for_paths, RetrievalStrategy, StatuteCorpus};
use strata_core::statute::SectionPath;

use crate::config::{RunConfig, Split};
use crate::data::{import_sara, sample_cases, select_split, statute_rows, write_jsonl};
use crate::runner::{load_run_dir, prompt_for_case, score_records, write_report};

pub fn cmd_import_sara(raw_dir: &Path, out_dir: &Path) -> Result<()> {
    let (sentences, cases) = import_sara(raw_dir, out_dir)?;
    println!(
        "wrote {sentences} statute sentences and {cases} cases to {}",
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_import_finqa(file: &Path, out: &Path) -> Result<()> {
    let pairs = ingest_finqa(file)
        .with_context(|| format!("ingesting {}", file.display()))?;
    let cases: Vec<FinCase> = pairs
        .into_iter()
        .map(|(report, question)| FinCase { report, question })
        .collect();
    write_jsonl(out, &cases)?;
    println!("wrote {} cases to {}", cases.len(), out.display());
    Ok(())
}

pub fn cmd_parse_statutes(input: &Path, out: Option<&Path>) -> Result<()> {
    let rows = if input.is_dir() {
        statute_rows(input)?
    } else {
        let dir = input.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = input
            .file_name()
            .and_then(|s| s.to_str())
            .with_context(|| format!("bad path {}", input.display()))?;
        statute_rows(&dir)?
            .into_iter()
            .filter(|r| format!("section{}.txt", r.section) == name)
            .collect()
    };
    if rows.is_empty() {
        bail!("no statute sentences parsed from {}", input.display());
    }
    match out {
        Some(path) => {
            write_jsonl(path, &rows)?;
            println!("wrote {} sentence rows to {}", rows.len(), path.display());
        }
        None => {
            for row in &rows {
                println!("{}", serde_json::to_string(row)?);
            }
        }
    }
    Ok(())
}

pub fn cmd_retrieve(
    config_path: &Path,
    paths: &[String],
    text: Option<&str>,
    strategy_override: Option<&str>,
) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let statute_dir = config
        .data
        .statute_dir
        .as_ref()
        .context("config has no data.statute_dir; retrieval needs statutes")?;
    let corpus = StatuteCorpus::load_dir(statute_dir)
        .with_context(|| format!("loading statutes from {}", statute_dir.display()))?;
    let strategy: RetrievalStrategy = match strategy_override {
        Some(raw) => raw.parse().map_err(|e: String| anyhow::anyhow!(e))?,
        None => config.strategy()?,
    };

    let citations = if !paths.is_empty() {
        let parsed: Result<Vec<SectionPath>> = paths
            .iter()
            .map(|p| p.parse::<SectionPath>().map_err(|e| anyhow::anyhow!("{p:?}: {e}")))
            .collect();
        citations_for_paths(&parsed?)
    } else if let Some(text) = text {
        let citations = extract_citations(text);
        if citations.is_empty() {
            bail!("no statute citations found in the text");
        }
        citations
    } else {
        bail!("pass --path <section path> or --text <statement>");
    };

    let retrieved = corpus.retrieve(&citations, strategy)?;
    for entry in &retrieved.provenance {
        eprintln!("{}\t{:?}", entry.path, entry.tag);
    }
    println!("{}", retrieved.render_text());
    Ok(())
}

pub fn cmd_build_prompt(config_path: &Path, case_id: &str, mode: Option<&str>) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(mode) = mode {
        config.prompt.mode = mode.to_string();
        config.prompt_mode().map_err(|e| anyhow::anyhow!(e))?;
    }
    let prompt = prompt_for_case(&config, case_id)?;
    print!("{prompt}");
    Ok(())
}

pub fn cmd_sample(
    cases: &Path,
    n: usize,
    seed: u64,
    split: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let mut ids = case_ids(cases)?;
    if let Some(raw) = split {
        let split: Split = raw.parse().map_err(|e: String| anyhow::anyhow!(e))?;
        ids = select_split(ids, split);
    }
    let sampled = sample_cases(ids, n, seed)?;
    match out {
        Some(path) => {
            std::fs::write(path, sampled.join("\n") + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {} ids to {}", sampled.len(), path.display());
        }
        None => {
            for id in &sampled {
                println!("{id}");
            }
        }
    }
    Ok(())
}

/// Pull sorted, unique case ids out of either case file shape: entailment
/// cases carry a top-level `id`, financial cases nest it at `question.id`.
fn case_ids(path: &Path) -> Result<Vec<String>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading cases {}", path.display()))?;
    let mut ids = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad case line", path.display(), i + 1))?;
        let id = value
            .get("id")
            .and_then(|v| v.as_str())
            .or_else(|| {
                value
                    .get("question")
                    .and_then(|q| q.get("id"))
                    .and_then(|v| v.as_str())
            })
            .with_context(|| format!("{}:{}: case line has no id", path.display(), i + 1))?;
        ids.push(id.to_string());
    }
    ids.sort();
    let before = ids.len();
    ids.dedup();
    if ids.len() != before {
        bail!("{}: duplicate case ids", path.display());
    }
    Ok(ids)
}

pub fn cmd_eval(run_dir: &Path, format: &str) -> Result<()> {
    let (config, records) = load_run_dir(run_dir)?;
    let report = score_records(&config, records)?;
    write_report(run_dir, &report)?;
    match format {
        "table" => println!("{}", format_report_table(&report)),
        "json" => println!("{}", serde_json::to_string_pretty(&report)?),
        other => bail!("unknown format {other:?}: expected table or json"),
    }
    Ok(())
}

pub fn cmd_eval_program(program_text: &str, report_file: Option<&Path>) -> Result<()> {
    let report: Option<FinReport> = match report_file {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading report {}", path.display()))?;
            Some(serde_json::from_str(&raw).with_context(|| {
                format!("{} is not a JSON financial report", path.display())
            })?)
        }
        None => None,
    };
    let program = parse_program(program_text)?;
    let value = eval_program(&program, report.as_ref())?;
    println!("{value}");
    Ok(())
}

pub fn cmd_dump_annotations(run_dir: &Path, out: &Path) -> Result<()> {
    let (config, records) = load_run_dir(run_dir)?;
    let report = score_records(&config, records)?;
    dump_for_annotation(&report, out)?;
    let rows = report
        .records
        .iter()
        .filter(|r| r.verdict != RecordVerdict::Correct)
        .count();
    println!("wrote {rows} rows to {}", out.display());
    Ok(())
}

/// Run a config end to end; returns the process exit code.
pub fn cmd_run(config_path: &Path, output_dir: Option<&Path>) -> Result<i32> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(dir) = output_dir {
        config.run.output_dir = std::path::absolute(dir)
            .with_context(|| format!("resolving {}", dir.display()))?;
    }
    let outcome = crate::runner::execute_run(&config)?;
    println!("{}", format_report_table(&outcome.report));
    println!();
    println!("run directory: {}", outcome.run_dir.display());
    if outcome.exhausted > 0 && outcome.completed == 0 {
        eprintln!(
            "error: backend exhausted on all {} attempted cases",
            outcome.exhausted
        );
        return Ok(2);
    }
    Ok(0)
}
