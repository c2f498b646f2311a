//! Prompt construction and completion parsing. Prompts are built from a
//! fixed instruction, an optional bank of exemplars (few-shot, or
//! chain-of-thought when exemplars carry explanations), and one test block
//! for the question under evaluation. The exemplar section is byte-identical
//! across questions: everything the model sees before the test block is
//! fixed per run.
//!
//! Completions come back as free text; [`extract_sara_verdict`] and
//! [`extract_finqa_answer`] pull the verdict / answer / program back out and
//! never panic on arbitrary input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::count_tokens_approx;

// ─── Types ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptTask {
    Sara,
    Finqa,
}

impl std::fmt::Display for PromptTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PromptTask::Sara => write!(f, "sara"),
            PromptTask::Finqa => write!(f, "finqa"),
        }
    }
}

impl std::str::FromStr for PromptTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sara" => Ok(PromptTask::Sara),
            "finqa" => Ok(PromptTask::Finqa),
            other => Err(format!("unknown task {other:?}: expected sara or finqa")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
    Cot,
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" | "zero-shot" => Ok(PromptMode::ZeroShot),
            "few" | "few-shot" => Ok(PromptMode::FewShot),
            "cot" => Ok(PromptMode::Cot),
            other => Err(format!("unknown prompt mode {other:?}: expected zero, few, or cot")),
        }
    }
}

/// One in-context example. `cot` is the hand-written explanation used in
/// chain-of-thought mode; `program` is the worked program for financial
/// exemplars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub context: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<String>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PromptConfig {
    pub mode: PromptMode,
    pub exemplar_bank: Vec<Exemplar>,
    /// How many exemplars go into the prompt (bank order, from the front).
    pub n_exemplars: usize,
    /// Named template id; see [`template_named`].
    pub template: String,
    /// Hard budget on the token estimate; 0 disables the check.
    pub max_prompt_tokens: usize,
}

impl PromptConfig {
    pub fn sara(mode: PromptMode, exemplar_bank: Vec<Exemplar>) -> Self {
        PromptConfig {
            mode,
            exemplar_bank,
            n_exemplars: 8,
            template: SARA_TEMPLATE.id.to_string(),
            max_prompt_tokens: 0,
        }
    }

    pub fn finqa(mode: PromptMode, exemplar_bank: Vec<Exemplar>) -> Self {
        PromptConfig {
            mode,
            exemplar_bank,
            n_exemplars: 12,
            template: FINQA_TEMPLATE.id.to_string(),
            max_prompt_tokens: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltPrompt {
    pub text: String,
    pub approx_tokens: usize,
    /// Bank indices of the exemplars used, in prompt order.
    pub exemplar_ids: Vec<usize>,
    /// Byte length of the instruction + exemplar section; every prompt built
    /// from the same config shares exactly these leading bytes.
    pub fixed_prefix_len: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt estimate {approx_tokens} tokens exceeds budget {budget}")]
    PromptTooLong { approx_tokens: usize, budget: usize },
    #[error("exemplar {index} has no explanation but the mode is chain-of-thought")]
    MissingCot { index: usize },
    #[error("prompt needs {needed} exemplars but the bank holds {available}")]
    BankTooSmall { needed: usize, available: usize },
    #[error("{0}")]
    InvalidInput(String),
    #[error("no verdict cue found in completion")]
    NoVerdictFound,
    #[error("no answer or program line found in completion")]
    NoAnswerFound,
    #[error("exemplar bank {path}: {detail}")]
    Bank { path: String, detail: String },
}

// ─── Templates ──────────────────────────────────────────────────────────────

/// Fixed wording and block labels for one task. Templates are compiled in;
/// the config names one by id.
#[derive(Debug)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub instruction: &'static str,
    context_label: &'static str,
    question_label: &'static str,
    explanation_label: &'static str,
    program_label: Option<&'static str>,
    answer_label: &'static str,
    /// Whether zero-/few-shot test blocks end with a bare answer cue.
    answer_cue_on_test: bool,
}

static SARA_TEMPLATE: PromptTemplate = PromptTemplate {
    id: "sara-entailment-v1",
    instruction: "Determine whether the statement is Entailment or Contradiction given the statute.",
    context_label: "Statute:",
    question_label: "Statement:",
    explanation_label: "Explanation:",
    program_label: None,
    answer_label: "Answer:",
    answer_cue_on_test: true,
};

static FINQA_TEMPLATE: PromptTemplate = PromptTemplate {
    id: "finqa-program-v1",
    instruction: "Answer the question using the report; show a program.",
    context_label: "Report:",
    question_label: "Question:",
    explanation_label: "Explanation:",
    program_label: Some("Program:"),
    answer_label: "Answer:",
    // The model must emit its own labeled "Program:"/"Answer:" lines, so the
    // test block ends after the question.
    answer_cue_on_test: false,
};

pub fn template_for(task: PromptTask) -> &'static PromptTemplate {
    match task {
        PromptTask::Sara => &SARA_TEMPLATE,
        PromptTask::Finqa => &FINQA_TEMPLATE,
    }
}

pub fn template_named(id: &str) -> Option<&'static PromptTemplate> {
    [&SARA_TEMPLATE, &FINQA_TEMPLATE].into_iter().find(|t| t.id == id)
}

// ─── Building ───────────────────────────────────────────────────────────────

/// Assemble the full prompt for one question. Deterministic: equal inputs
/// give byte-identical output. Never truncates — a prompt over budget is an
/// error the caller must see.
pub fn build_prompt(
    config: &PromptConfig,
    context: &str,
    question: &str,
) -> Result<BuiltPrompt, PromptError> {
    if context.trim().is_empty() {
        return Err(PromptError::InvalidInput("empty context".to_string()));
    }
    if question.trim().is_empty() {
        return Err(PromptError::InvalidInput("empty question".to_string()));
    }
    let template = template_named(&config.template)
        .ok_or_else(|| PromptError::InvalidInput(format!("unknown template {:?}", config.template)))?;

    let exemplar_ids: Vec<usize> = match config.mode {
        PromptMode::ZeroShot => Vec::new(),
        PromptMode::FewShot | PromptMode::Cot => {
            if config.exemplar_bank.len() < config.n_exemplars {
                return Err(PromptError::BankTooSmall {
                    needed: config.n_exemplars,
                    available: config.exemplar_bank.len(),
                });
            }
            (0..config.n_exemplars).collect()
        }
    };

    let mut blocks = vec![template.instruction.to_string()];
    for &index in &exemplar_ids {
        let exemplar = &config.exemplar_bank[index];
        blocks.push(exemplar_block(template, exemplar, config.mode, index)?);
    }
    let test = test_block(template, context, question, config.mode);
    let fixed_prefix_len = blocks.iter().map(|b| b.len() + 2).sum::<usize>();
    blocks.push(test);
    let text = blocks.join("\n\n");
    let approx_tokens = count_tokens_approx(&text);
    if config.max_prompt_tokens > 0 && approx_tokens > config.max_prompt_tokens {
        return Err(PromptError::PromptTooLong {
            approx_tokens,
            budget: config.max_prompt_tokens,
        });
    }
    Ok(BuiltPrompt { text, approx_tokens, exemplar_ids, fixed_prefix_len })
}

fn exemplar_block(
    template: &PromptTemplate,
    exemplar: &Exemplar,
    mode: PromptMode,
    index: usize,
) -> Result<String, PromptError> {
    let mut lines = vec![
        template.context_label.to_string(),
        exemplar.context.clone(),
        format!("{} {}", template.question_label, exemplar.question),
    ];
    if mode == PromptMode::Cot {
        let cot = exemplar
            .cot
            .as_deref()
            .ok_or(PromptError::MissingCot { index })?;
        lines.push(format!("{} {}", template.explanation_label, cot));
    }
    if let (Some(label), Some(program)) = (template.program_label, exemplar.program.as_deref()) {
        lines.push(format!("{label} {program}"));
    }
    lines.push(format!("{} {}", template.answer_label, exemplar.answer));
    Ok(lines.join("\n"))
}

fn test_block(template: &PromptTemplate, context: &str, question: &str, mode: PromptMode) -> String {
    let mut lines = vec![
        template.context_label.to_string(),
        context.to_string(),
        format!("{} {}", template.question_label, question),
    ];
    // Chain-of-thought leaves the model to open its own explanation; a bare
    // answer cue here would skip straight to the verdict.
    if mode != PromptMode::Cot && template.answer_cue_on_test {
        lines.push(template.answer_label.to_string());
    }
    lines.join("\n")
}

/// Load an exemplar bank: JSON Lines, one exemplar per line, bank order
/// preserved.
pub fn load_exemplars(path: &std::path::Path) -> Result<Vec<Exemplar>, PromptError> {
    let raw = std::fs::read_to_string(path).map_err(|e| PromptError::Bank {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut bank = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let exemplar: Exemplar = serde_json::from_str(line).map_err(|e| PromptError::Bank {
            path: path.display().to_string(),
            detail: format!("line {}: {e}", i + 1),
        })?;
        if exemplar.answer.is_empty() {
            return Err(PromptError::Bank {
                path: path.display().to_string(),
                detail: format!("line {}: empty answer", i + 1),
            });
        }
        bank.push(exemplar);
    }
    Ok(bank)
}

// ─── Extraction ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Entailment,
    Contradiction,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Entailment => write!(f, "Entailment"),
            Verdict::Contradiction => write!(f, "Contradiction"),
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().as_str() {
            "entailment" => Ok(Verdict::Entailment),
            "contradiction" => Ok(Verdict::Contradiction),
            other => Err(format!("not a verdict: {other:?}")),
        }
    }
}

/// Scan a completion for the model's verdict. Case-insensitive; the last cue
/// wins, so hedging text before a final "Answer: Contradiction" is harmless.
/// Standalone yes/no count only after an answer cue.
pub fn extract_sara_verdict(completion: &str) -> Result<Verdict, PromptError> {
    let lower = completion.to_lowercase();
    let mut best: Option<(usize, Verdict)> = None;
    let mut consider = |pos: usize, verdict: Verdict| {
        if best.is_none_or(|(p, _)| pos >= p) {
            best = Some((pos, verdict));
        }
    };
    for (pos, _) in lower.match_indices("entailment") {
        consider(pos, Verdict::Entailment);
    }
    for (pos, _) in lower.match_indices("contradiction") {
        consider(pos, Verdict::Contradiction);
    }
    if let Some(answer_pos) = lower.find("answer") {
        for (word, verdict) in [("yes", Verdict::Entailment), ("no", Verdict::Contradiction)] {
            for (pos, _) in lower.match_indices(word) {
                if pos > answer_pos && is_standalone(&lower, pos, word.len()) {
                    consider(pos, verdict);
                }
            }
        }
    }
    best.map(|(_, v)| v).ok_or(PromptError::NoVerdictFound)
}

fn is_standalone(text: &str, pos: usize, len: usize) -> bool {
    let before = text[..pos].chars().next_back();
    let after = text[pos + len..].chars().next();
    before.is_none_or(|c| !c.is_alphanumeric()) && after.is_none_or(|c| !c.is_alphanumeric())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinqaExtraction {
    pub answer: Option<String>,
    pub program: Option<String>,
}

/// Pull the labeled answer and program lines out of a completion. Each label
/// is matched at a line start (after indentation) and the last occurrence
/// wins; missing both is the only failure.
pub fn extract_finqa_answer(completion: &str) -> Result<FinqaExtraction, PromptError> {
    let mut answer = None;
    let mut program = None;
    for line in completion.lines() {
        let line = line.trim_start();
        if let Some(rest) = line.strip_prefix("Program:") {
            program = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("Answer:") {
            answer = Some(rest.trim().to_string());
        }
    }
    if answer.is_none() && program.is_none() {
        return Err(PromptError::NoAnswerFound);
    }
    Ok(FinqaExtraction { answer, program })
}

// ─── Tests ──────────────────────────────────────────────────────────────────
