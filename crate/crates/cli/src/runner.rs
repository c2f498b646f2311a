//! The run pipeline: prepare a prompt per case, call the completion gateway,
//! append one record per case as it finishes, then score the records into a
//! report. `eval` and `dump-annotations` reuse the scoring half to re-score a
//! finished run directory without touching any backend.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use strata_core::cite::extract_citations;
use strata_core::eval::{score_finqa, score_sara, EvalReport, FinqaCompletion, SaraCompletion};
use strata_core::finqa::{render_facts, retrieve_facts, FinCase, PrecomputedFacts};
use strata_core::gateway::{CompletionRequest, Gateway};
use strata_core::program::PROGRAM_REL_TOL;
use strata_core::prompt::{build_prompt, load_exemplars, PromptConfig, PromptMode, PromptTask};
use strata_core::retrieval::StatuteCorpus;

use crate::config::RunConfig;
use crate::data::{load_fin_cases, load_sara_cases, sample_cases, select_split};

// ─── Records ────────────────────────────────────────────────────────────────

/// One line of `records.jsonl`: everything needed to re-score the case
/// offline. Volatile details (latency, cache hits) are deliberately absent so
/// repeated runs produce identical artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    /// Gold label (entailment) or gold answer (financial), as display text.
    pub gold: String,
    pub prompt: String,
    pub completion: String,
    /// Pipeline or backend failure; such cases score as incorrect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn records_path(run_dir: &Path) -> PathBuf {
    run_dir.join("records.jsonl")
}

pub fn report_path(run_dir: &Path) -> PathBuf {
    run_dir.join("report.json")
}

/// Load existing records, last occurrence of a case id winning. Unparseable
/// lines (for example a torn final write from an interrupted run) are skipped
/// with a warning; the affected case simply runs again.
pub fn load_records(path: &Path) -> Result<Vec<CaseRecord>> {
    let mut by_id: HashMap<String, (usize, CaseRecord)> = HashMap::new();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading records {}", path.display()))?;
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CaseRecord>(line) {
            Ok(record) => {
                by_id.insert(record.case_id.clone(), (i, record));
            }
            Err(e) => eprintln!("warning: {}:{}: skipping bad record: {e}", path.display(), i + 1),
        }
    }
    let mut records: Vec<(usize, CaseRecord)> = by_id.into_values().collect();
    records.sort_by_key(|(i, _)| *i);
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

// ─── Run ────────────────────────────────────────────────────────────────────

pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub report: EvalReport,
    /// Completions obtained from the gateway in this invocation.
    pub completed: usize,
    /// Cases that failed with a backend-exhaustion error in this invocation.
    pub exhausted: usize,
}

/// A case whose prompt has been built (or has already failed). Prompt
/// construction is deterministic and cheap, so it happens serially up front;
/// only gateway calls run on the worker pool.
struct PreparedCase {
    case_id: String,
    gold: String,
    prompt: Result<String, String>,
}

pub fn execute_run(config: &RunConfig) -> Result<RunOutcome> {
    let run_dir = config.run.output_dir.clone();
    std::fs::create_dir_all(&run_dir)
        .with_context(|| format!("creating run directory {}", run_dir.display()))?;
    config.write_snapshot(&run_dir)?;

    let prepared = match config.run.task {
        PromptTask::Sara => prepare_sara(config)?,
        PromptTask::Finqa => prepare_finqa(config)?,
    };
    if prepared.is_empty() {
        bail!("the selected split is empty; nothing to run");
    }

    let gateway = Gateway::new(config.backend_config()?, Some(&config.cache_dir()))
        .context("building completion gateway")?;
    let (records, completed, exhausted) = complete_all(config, &gateway, prepared, &run_dir)?;

    let report = score_records(config, records)?;
    write_report(&run_dir, &report)?;
    Ok(RunOutcome {
        run_dir,
        report,
        completed,
        exhausted,
    })
}

/// Select the configured split (and optional seeded sample) from the full
/// sorted case list.
fn narrow<T>(config: &RunConfig, cases: Vec<T>) -> Result<Vec<T>> {
    let cases = select_split(cases, config.run.split);
    match config.run.sample_n {
        Some(n) => sample_cases(cases, n, config.run.seed.expect("validated")),
        None => Ok(cases),
    }
}

fn prompt_config(config: &RunConfig) -> Result<PromptConfig> {
    let mode = config.prompt_mode()?;
    let exemplar_bank = match &config.data.exemplar_file {
        Some(path) if mode != PromptMode::ZeroShot => {
            load_exemplars(path).with_context(|| format!("loading exemplars {}", path.display()))?
        }
        _ => Vec::new(),
    };
    Ok(PromptConfig {
        mode,
        exemplar_bank,
        n_exemplars: config.n_exemplars(),
        template: config.template_id(),
        max_prompt_tokens: config.prompt.max_prompt_tokens,
    })
}

fn prepare_sara(config: &RunConfig) -> Result<Vec<PreparedCase>> {
    let statute_dir = config.data.statute_dir.as_ref().expect("validated");
    let corpus = StatuteCorpus::load_dir(statute_dir)
        .with_context(|| format!("loading statutes from {}", statute_dir.display()))?;
    let cases = narrow(config, load_sara_cases(&config.data.cases_file)?)?;
    let prompts = prompt_config(config)?;
    let strategy = config.strategy()?;

    let mut prepared = Vec::with_capacity(cases.len());
    for case in cases {
        let prompt = build_sara_prompt(&corpus, &prompts, strategy, &case.text);
        prepared.push(PreparedCase {
            case_id: case.id,
            gold: case.gold.to_string(),
            prompt,
        });
    }
    Ok(prepared)
}

fn build_sara_prompt(
    corpus: &StatuteCorpus,
    prompts: &PromptConfig,
    strategy: strata_core::retrieval::RetrievalStrategy,
    statement: &str,
) -> Result<String, String> {
    let citations = extract_citations(statement);
    if citations.is_empty() {
        return Err("statement cites no statute sections".to_string());
    }
    let context = corpus
        .retrieve(&citations, strategy)
        .map_err(|e| format!("retrieval failed: {e}"))?
        .render_text();
    build_prompt(prompts, &context, statement)
        .map(|built| built.text)
        .map_err(|e| format!("prompt build failed: {e}"))
}

fn prepare_finqa(config: &RunConfig) -> Result<Vec<PreparedCase>> {
    let cases = narrow(config, load_fin_cases(&config.data.cases_file)?)?;
    let prompts = prompt_config(config)?;
    let fact_mode = config.fact_mode()?;
    let precomputed = match &config.data.precomputed_facts {
        Some(path) => Some(
            PrecomputedFacts::load(path)
                .with_context(|| format!("loading precomputed facts {}", path.display()))?,
        ),
        None => None,
    };

    let mut prepared = Vec::with_capacity(cases.len());
    for case in cases {
        let prompt = build_finqa_prompt(&prompts, fact_mode, config.retrieval.k, precomputed.as_ref(), &case);
        prepared.push(PreparedCase {
            case_id: case.question.id.clone(),
            gold: case.question.gold_answer.clone(),
            prompt,
        });
    }
    Ok(prepared)
}

fn build_finqa_prompt(
    prompts: &PromptConfig,
    fact_mode: strata_core::finqa::FactMode,
    k: usize,
    precomputed: Option<&PrecomputedFacts>,
    case: &FinCase,
) -> Result<String, String> {
    let facts = retrieve_facts(&case.report, &case.question, fact_mode, k, precomputed)
        .map_err(|e| format!("fact selection failed: {e}"))?;
    let context = render_facts(&case.report, &facts)
        .map_err(|e| format!("fact rendering failed: {e}"))?;
    build_prompt(prompts, &context, &case.question.question)
        .map(|built| built.text)
        .map_err(|e| format!("prompt build failed: {e}"))
}

/// Run the gateway over every prepared case that has no record yet, appending
/// records as they complete. Returns all records (kept + new) plus counts of
/// fresh completions and backend-exhaustion failures.
fn complete_all(
    config: &RunConfig,
    gateway: &Gateway,
    prepared: Vec<PreparedCase>,
    run_dir: &Path,
) -> Result<(Vec<CaseRecord>, usize, usize)> {
    let path = records_path(run_dir);
    let existing = load_records(&path)?;
    let known: HashMap<String, CaseRecord> =
        existing.into_iter().map(|r| (r.case_id.clone(), r)).collect();

    let mut kept = Vec::new();
    let mut todo = Vec::new();
    for case in prepared {
        match known.get(&case.case_id) {
            Some(record) => kept.push(record.clone()),
            None => todo.push(case),
        }
    }

    let total = todo.len();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    let sink = Mutex::new((file, Vec::<CaseRecord>::new()));
    let cursor = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let completed = AtomicUsize::new(0);
    let exhausted = AtomicUsize::new(0);
    let failure: Mutex<Option<anyhow::Error>> = Mutex::new(None);

    let workers = config.backend.max_parallel.max(1).min(total.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= todo.len() {
                    break;
                }
                let case = &todo[i];
                let record = run_case(config, gateway, case, &completed, &exhausted);
                let status = match &record.error {
                    None => "ok",
                    Some(e) => e.as_str(),
                };
                let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                eprintln!("[{n}/{total}] {} {status}", record.case_id);
                if let Err(e) = append_record(&sink, record) {
                    *failure.lock().expect("sink lock") = Some(e);
                    break;
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("sink lock").take() {
        return Err(e);
    }

    let (_, fresh) = sink.into_inner().expect("sink lock");
    let mut records = kept;
    records.extend(fresh);
    Ok((
        records,
        completed.load(Ordering::SeqCst),
        exhausted.load(Ordering::SeqCst),
    ))
}

fn run_case(
    config: &RunConfig,
    gateway: &Gateway,
    case: &PreparedCase,
    completed: &AtomicUsize,
    exhausted: &AtomicUsize,
) -> CaseRecord {
    let base = CaseRecord {
        case_id: case.case_id.clone(),
        gold: case.gold.clone(),
        prompt: String::new(),
        completion: String::new(),
        error: None,
    };
    match &case.prompt {
        Err(reason) => CaseRecord {
            error: Some(reason.clone()),
            ..base
        },
        Ok(prompt) => {
            let request = CompletionRequest {
                model_id: config.backend.model_id.clone(),
                prompt: prompt.clone(),
                max_output_tokens: config.backend.max_output_tokens,
                temperature: config.backend.temperature,
                stop_sequences: config.backend.stop_sequences.clone(),
            };
            match gateway.complete(&request) {
                Ok(result) => {
                    completed.fetch_add(1, Ordering::SeqCst);
                    CaseRecord {
                        prompt: prompt.clone(),
                        completion: result.text,
                        ..base
                    }
                }
                Err(e) => {
                    if e.is_backend_exhaustion() {
                        exhausted.fetch_add(1, Ordering::SeqCst);
                    }
                    CaseRecord {
                        prompt: prompt.clone(),
                        error: Some(format!("completion failed: {e}")),
                        ..base
                    }
                }
            }
        }
    }
}

fn append_record(sink: &Mutex<(File, Vec<CaseRecord>)>, record: CaseRecord) -> Result<()> {
    let mut line = serde_json::to_string(&record).context("serializing record")?;
    line.push('\n');
    let mut guard = sink.lock().expect("sink lock");
    guard.0.write_all(line.as_bytes()).context("appending record")?;
    guard.1.push(record);
    Ok(())
}

/// Build the prompt for a single case by id, searching the whole case file
/// regardless of split. Used by the `build-prompt` command.
pub fn prompt_for_case(config: &RunConfig, case_id: &str) -> Result<String> {
    let prompts = prompt_config(config)?;
    match config.run.task {
        PromptTask::Sara => {
            let statute_dir = config.data.statute_dir.as_ref().expect("validated");
            let corpus = StatuteCorpus::load_dir(statute_dir)
                .with_context(|| format!("loading statutes from {}", statute_dir.display()))?;
            let cases = load_sara_cases(&config.data.cases_file)?;
            let case = cases
                .iter()
                .find(|c| c.id == case_id)
                .with_context(|| format!("no case {case_id:?} in {}", config.data.cases_file.display()))?;
            build_sara_prompt(&corpus, &prompts, config.strategy()?, &case.text)
                .map_err(|e| anyhow::anyhow!(e))
        }
        PromptTask::Finqa => {
            let cases = load_fin_cases(&config.data.cases_file)?;
            let case = cases
                .iter()
                .find(|c| c.question.id == case_id)
                .with_context(|| format!("no case {case_id:?} in {}", config.data.cases_file.display()))?;
            let precomputed = match &config.data.precomputed_facts {
                Some(path) => Some(PrecomputedFacts::load(path).with_context(|| {
                    format!("loading precomputed facts {}", path.display())
                })?),
                None => None,
            };
            build_finqa_prompt(
                &prompts,
                config.fact_mode()?,
                config.retrieval.k,
                precomputed.as_ref(),
                case,
            )
            .map_err(|e| anyhow::anyhow!(e))
        }
    }
}

// ─── Scoring ────────────────────────────────────────────────────────────────

/// Score records into a report. Records are sorted by case id first, so the
/// report is identical no matter what order cases finished in.
pub fn score_records(config: &RunConfig, mut records: Vec<CaseRecord>) -> Result<EvalReport> {
    records.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    match config.run.task {
        PromptTask::Sara => {
            let mut completions = Vec::with_capacity(records.len());
            for record in &records {
                let gold = record
                    .gold
                    .parse()
                    .map_err(|e: String| anyhow::anyhow!("record {}: {e}", record.case_id))?;
                completions.push(SaraCompletion {
                    case_id: record.case_id.clone(),
                    gold,
                    completion: record.completion.clone(),
                });
            }
            Ok(score_sara(&completions))
        }
        PromptTask::Finqa => {
            let cases = load_fin_cases(&config.data.cases_file)?;
            let by_id: HashMap<&str, &FinCase> =
                cases.iter().map(|c| (c.question.id.as_str(), c)).collect();
            let mut completions = Vec::with_capacity(records.len());
            for record in &records {
                let case = by_id.get(record.case_id.as_str()).with_context(|| {
                    format!(
                        "record {} not found in {}",
                        record.case_id,
                        config.data.cases_file.display()
                    )
                })?;
                completions.push(FinqaCompletion {
                    case_id: record.case_id.clone(),
                    report: case.report.clone(),
                    question: case.question.clone(),
                    completion: record.completion.clone(),
                });
            }
            Ok(score_finqa(&completions, PROGRAM_REL_TOL))
        }
    }
}

pub fn write_report(run_dir: &Path, report: &EvalReport) -> Result<PathBuf> {
    let path = report_path(run_dir);
    let mut rendered = serde_json::to_string_pretty(report).context("serializing report")?;
    rendered.push('\n');
    std::fs::write(&path, rendered).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Reload a finished run directory from its own artifacts.
pub fn load_run_dir(dir: &Path) -> Result<(RunConfig, Vec<CaseRecord>)> {
    let snapshot = dir.join("config.toml");
    if !snapshot.exists() {
        bail!("{} is not a run directory (no config.toml)", dir.display());
    }
    let config = RunConfig::load(&snapshot)?;
    let path = records_path(dir);
    if !path.exists() {
        bail!("{} has no records.jsonl", dir.display());
    }
    let records = load_records(&path)?;
    if records.is_empty() {
        bail!("{} holds no case records", path.display());
    }
    Ok((config, records))
}
