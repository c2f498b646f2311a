//! Scoring: binary accuracy for the entailment task, program and answer
//! accuracy for the financial task, 90% confidence intervals on every
//! reported fraction, and a CSV dump of error cases for hand annotation.
//!
//! Answer comparison deliberately forgives presentation: units, currency
//! marks, thousands separators, percent scaling, and rounding at the printed
//! precision. It does not forgive genuinely different values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finqa::{FinQuestion, FinReport};
use crate::program::{eval_program, parse_program, values_match};
#[cfg(test)]
use crate::program::PROGRAM_REL_TOL;
use crate::prompt::{extract_finqa_answer, extract_sara_verdict, PromptTask, Verdict};

// ─── Confidence interval ────────────────────────────────────────────────────

/// Margin of a 90% normal-approximation confidence interval:
/// `1.645 · sqrt(p̂ (1 − p̂) / n)`.
pub fn ci90(p_hat: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.645 * (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

// ─── Report types ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordVerdict {
    Correct,
    Incorrect,
    ExtractionFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub case_id: String,
    pub gold: String,
    pub predicted: String,
    pub raw_completion: String,
    pub verdict: RecordVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    /// Financial task only: did the generated program evaluate to the gold
    /// program's value?
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: PromptTask,
    pub n: usize,
    /// Headline accuracy: verdict accuracy for the entailment task, answer
    /// accuracy for the financial task.
    pub accuracy: f64,
    pub ci90: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_ci90: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_ci90: Option<f64>,
    pub records: Vec<EvalRecord>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("writing {path}: {detail}")]
    Write { path: String, detail: String },
}

// ─── Scoring inputs ─────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SaraCompletion {
    pub case_id: String,
    pub gold: Verdict,
    pub completion: String,
}

#[derive(Debug, Clone)]
pub struct FinqaCompletion {
    pub case_id: String,
    pub report: FinReport,
    pub question: FinQuestion,
    pub completion: String,
}

// ─── Scoring ────────────────────────────────────────────────────────────────

pub fn score_sara(cases: &[SaraCompletion]) -> EvalReport {
    let mut records = Vec::with_capacity(cases.len());
    let mut correct = 0usize;
    for case in cases {
        let record = match extract_sara_verdict(&case.completion) {
            Ok(predicted) => {
                let is_correct = predicted == case.gold;
                if is_correct {
                    correct += 1;
                }
                EvalRecord {
                    case_id: case.case_id.clone(),
                    gold: case.gold.to_string(),
                    predicted: predicted.to_string(),
                    raw_completion: case.completion.clone(),
                    verdict: if is_correct {
                        RecordVerdict::Correct
                    } else {
                        RecordVerdict::Incorrect
                    },
                    failure_reason: (!is_correct).then(|| "verdict differs from gold".to_string()),
                    program_correct: None,
                }
            }
            Err(_) => EvalRecord {
                case_id: case.case_id.clone(),
                gold: case.gold.to_string(),
                predicted: String::new(),
                raw_completion: case.completion.clone(),
                verdict: RecordVerdict::ExtractionFailed,
                failure_reason: Some("no verdict cue in completion".to_string()),
                program_correct: None,
            },
        };
        records.push(record);
    }
    let n = cases.len();
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    EvalReport {
        task: PromptTask::Sara,
        n,
        accuracy,
        ci90: ci90(accuracy, n),
        program_accuracy: None,
        program_ci90: None,
        answer_accuracy: None,
        answer_ci90: None,
        records,
    }
}

pub fn score_finqa(cases: &[FinqaCompletion], rel_tol: f64) -> EvalReport {
    let mut records = Vec::with_capacity(cases.len());
    let mut answer_correct = 0usize;
    let mut program_correct_count = 0usize;
    for case in cases {
        let gold_answer = &case.question.gold_answer;
        let record = match extract_finqa_answer(&case.completion) {
            Ok(extraction) => {
                let (answer_ok, answer_reason) = match extraction.answer.as_deref() {
                    Some(answer) if answers_match(answer, gold_answer) => (true, None),
                    Some(answer) => (
                        false,
                        Some(format!("answer {answer:?} does not match gold {gold_answer:?}")),
                    ),
                    None => (false, Some("no answer line in completion".to_string())),
                };
                let (program_ok, program_reason) =
                    check_program(extraction.program.as_deref(), case, rel_tol);
                if answer_ok {
                    answer_correct += 1;
                }
                if program_ok {
                    program_correct_count += 1;
                }
                let failure_reason = match (answer_reason, program_reason) {
                    (None, None) => None,
                    (a, p) => {
                        let parts: Vec<String> = [a, p].into_iter().flatten().collect();
                        Some(parts.join("; "))
                    }
                };
                EvalRecord {
                    case_id: case.case_id.clone(),
                    gold: gold_answer.clone(),
                    predicted: extraction.answer.clone().unwrap_or_default(),
                    raw_completion: case.completion.clone(),
                    verdict: if answer_ok {
                        RecordVerdict::Correct
                    } else {
                        RecordVerdict::Incorrect
                    },
                    failure_reason,
                    program_correct: Some(program_ok),
                }
            }
            Err(_) => EvalRecord {
                case_id: case.case_id.clone(),
                gold: gold_answer.clone(),
                predicted: String::new(),
                raw_completion: case.completion.clone(),
                verdict: RecordVerdict::ExtractionFailed,
                failure_reason: Some("no answer or program line in completion".to_string()),
                program_correct: Some(false),
            },
        };
        records.push(record);
    }
    let n = cases.len();
    let answer_accuracy = if n == 0 { 0.0 } else { answer_correct as f64 / n as f64 };
    let program_accuracy = if n == 0 { 0.0 } else { program_correct_count as f64 / n as f64 };
    EvalReport {
        task: PromptTask::Finqa,
        n,
        accuracy: answer_accuracy,
        ci90: ci90(answer_accuracy, n),
        program_accuracy: Some(program_accuracy),
        program_ci90: Some(ci90(program_accuracy, n)),
        answer_accuracy: Some(answer_accuracy),
        answer_ci90: Some(ci90(answer_accuracy, n)),
        records,
    }
}

fn check_program(
    candidate: Option<&str>,
    case: &FinqaCompletion,
    rel_tol: f64,
) -> (bool, Option<String>) {
    let Some(candidate) = candidate else {
        return (false, Some("no program line in completion".to_string()));
    };
    let gold = match parse_program(&case.question.gold_program) {
        Ok(gold) => gold,
        Err(e) => return (false, Some(format!("gold program does not parse: {e}"))),
    };
    let candidate = match parse_program(candidate) {
        Ok(candidate) => candidate,
        Err(e) => return (false, Some(format!("program does not parse: {e}"))),
    };
    let report = Some(&case.report);
    let gold_value = match eval_program(&gold, report) {
        Ok(value) => value,
        Err(e) => return (false, Some(format!("gold program fails to evaluate: {e}"))),
    };
    match eval_program(&candidate, report) {
        Ok(value) if values_match(&value, &gold_value, rel_tol) => (true, None),
        Ok(value) => (
            false,
            Some(format!("program value {value} differs from gold value {gold_value}")),
        ),
        Err(e) => (false, Some(format!("program fails to evaluate: {e}"))),
    }
}

/// Relative tolerance for answer matching: forgives two-decimal rounding of
/// ratios, the dominant benign mismatch.
pub const ANSWER_REL_TOL: f64 = 5e-3;

// ─── Answer matching ────────────────────────────────────────────────────────

/// One numeric reading of an answer string: the first number in it, its
/// printed decimal places, and whether it carried a percent mark.
#[derive(Debug, Clone, Copy)]
struct NumericReading {
    value: f64,
    decimals: usize,
    percent: bool,
}

static NUMBER_RE: once_cell::sync::Lazy<regex::Regex> = once_cell::sync::Lazy::new(|| {
    regex::Regex::new(r"(-?)\s*\$?\s*(\d[\d,]*(?:\.\d+)?|\.\d+)\s*(%?)").expect("static pattern")
});

fn first_number(text: &str) -> Option<NumericReading> {
    let captures = NUMBER_RE.captures(text)?;
    let negative = &captures[1] == "-";
    let body: String = captures[2].chars().filter(|&c| c != ',').collect();
    let decimals = body.split('.').nth(1).map_or(0, str::len);
    let value: f64 = body.parse().ok()?;
    Some(NumericReading {
        value: if negative { -value } else { value },
        decimals,
        percent: &captures[3] == "%",
    })
}

fn boolean_word(text: &str) -> Option<bool> {
    match text.trim().trim_end_matches('.').to_lowercase().as_str() {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    }
}

/// Candidate interpretations of an answer: as written, plus the ÷100 reading
/// when it carried a percent mark.
fn readings(reading: NumericReading) -> Vec<NumericReading> {
    let mut all = vec![reading];
    if reading.percent {
        all.push(NumericReading {
            value: reading.value / 100.0,
            decimals: reading.decimals + 2,
            percent: false,
        });
    }
    all
}

fn numbers_close(a: NumericReading, b: NumericReading) -> bool {
    // Exact or near-exact relative agreement.
    let scale = a.value.abs().max(b.value.abs());
    if scale == 0.0 {
        return true;
    }
    if (a.value - b.value).abs() / scale <= ANSWER_REL_TOL {
        return true;
    }
    // Rounding forgiveness: equal after rounding both to the coarser printed
    // precision, capped at 5% relative so one-digit answers cannot absorb
    // big errors (0.5 must not match 1).
    let decimals = a.decimals.min(b.decimals).min(12) as i32;
    let factor = 10f64.powi(decimals);
    ((a.value * factor).round() - (b.value * factor).round()).abs() < 0.5
        && (a.value - b.value).abs() / scale <= 0.05
}

/// Do two answer strings state the same value? Units, currency marks,
/// separators, percent scaling, and printed-precision rounding are forgiven;
/// different values are not. Symmetric, and total over arbitrary input.
pub fn answers_match(candidate: &str, gold: &str) -> bool {
    if candidate.trim().eq_ignore_ascii_case(gold.trim()) {
        return !candidate.trim().is_empty();
    }
    match (boolean_word(candidate), boolean_word(gold)) {
        (Some(a), Some(b)) => return a == b,
        (Some(_), None) | (None, Some(_)) => {}
        (None, None) => {}
    }
    let (Some(a), Some(b)) = (first_number(candidate), first_number(gold)) else {
        return false;
    };
    readings(a)
        .into_iter()
        .any(|ra| readings(b).iter().any(|rb| numbers_close(ra, *rb)))
}

// ─── Annotation dump ────────────────────────────────────────────────────────

/// Write the incorrect and extraction-failed cases to a CSV the annotator
/// fills in: `case_id, gold, predicted, category, notes, completion` with
/// category and notes left empty.
pub fn dump_for_annotation(report: &EvalReport, path: &std::path::Path) -> Result<(), EvalError> {
    let write_err = |detail: String| EvalError::Write {
        path: path.display().to_string(),
        detail,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| write_err(e.to_string()))?;
    writer
        .write_record(["case_id", "gold", "predicted", "category", "notes", "completion"])
        .map_err(|e| write_err(e.to_string()))?;
    for record in &report.records {
        if record.verdict == RecordVerdict::Correct {
            continue;
        }
        writer
            .write_record([
                record.case_id.as_str(),
                record.gold.as_str(),
                record.predicted.as_str(),
                "",
                "",
                record.raw_completion.as_str(),
            ])
            .map_err(|e| write_err(e.to_string()))?;
    }
    writer.flush().map_err(|e| write_err(e.to_string()))?;
    Ok(())
}

/// Console rendering in the classic "value ± margin" layout, percentages
/// with two decimals.
pub fn format_report_table(report: &EvalReport) -> String {
    let pct = |value: f64, margin: f64| format!("{:.2} ± {:.2}", value * 100.0, margin * 100.0);
    let mut lines = vec![
        format!("task              {}", report.task),
        format!("n                 {}", report.n),
    ];
    match report.task {
        PromptTask::Sara => lines.push(format!("accuracy          {}", pct(report.accuracy, report.ci90))),
        PromptTask::Finqa => {
            lines.push(format!(
                "answer accuracy   {}",
                pct(
                    report.answer_accuracy.unwrap_or(report.accuracy),
                    report.answer_ci90.unwrap_or(report.ci90)
                )
            ));
            lines.push(format!(
                "program accuracy  {}",
                pct(
                    report.program_accuracy.unwrap_or(0.0),
                    report.program_ci90.unwrap_or(0.0)
                )
            ));
        }
    }
    lines.join("\n")
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ci90_reproduces_published_margins() {
        assert!((ci90(0.50, 100) - 0.0822).abs() <= 1e-4);
        assert!((ci90(0.68, 200) - 0.0543).abs() <= 1e-4);
        assert_eq!(ci90(0.0, 17), 0.0);
        assert_eq!(ci90(1.0, 4), 0.0);
    }

    #[test]
    fn ci90_inversion_recovers_sample_sizes() {
        // n = p(1−p) (1.645 / m)²
        let invert = |p: f64, m: f64| p * (1.0 - p) * (1.645 / m).powi(2);
        assert!((invert(0.50, 0.0822) - 100.0).abs() <= 1.0);
        assert!((invert(0.68, 0.0543) - 200.0).abs() <= 1.0);
    }

    #[test]
    fn ci90_monotonicity() {
        for n in [1usize, 2, 5, 10, 100] {
            assert!(ci90(0.3, n) > ci90(0.3, n * 2));
        }
        for p in [0.0, 0.1, 0.25, 0.4, 0.49] {
            assert!(ci90(p, 50) < ci90(0.5, 50));
            assert!(ci90(1.0 - p, 50) < ci90(0.5, 50));
        }
    }

    proptest! {
        #[test]
        fn ci90_bounds(p in 0.0f64..=1.0, n in 1usize..10_000) {
            let margin = ci90(p, n);
            prop_assert!(margin >= 0.0);
            prop_assert!(margin <= 1.645 * 0.5 / (n as f64).sqrt() + 1e-12);
        }

        #[test]
        fn answers_match_is_reflexive_on_numbers(value in -1.0e9f64..1.0e9, decimals in 0usize..6) {
            let printed = format!("{:.*}", decimals, value);
            prop_assert!(answers_match(&printed, &printed));
        }

        #[test]
        fn answers_match_forgives_prefix_and_suffix(value in 0.0f64..1.0e9, decimals in 0usize..6) {
            let printed = format!("{:.*}", decimals, value);
            let dressed = format!("approximately $ {printed} million");
            prop_assert!(answers_match(&dressed, &printed));
        }
    }

    #[test]
    fn answers_match_forgives_presentation_only() {
        assert!(answers_match("$ 94 million", "94"));
        assert!(answers_match("66.67%", "0.6667"));
        assert!(!answers_match("95", "94"));
        assert!(answers_match("0.6667", "0.67"));
        assert!(answers_match("25%", "0.25"));
        assert!(answers_match("$ 0.28", "0.28"));
        assert!(answers_match("1,250", "1250"));
        assert!(answers_match("94.4", "94"));
        assert!(answers_match("yes", "yes"));
        assert!(answers_match("Yes.", "yes"));
        assert!(!answers_match("yes", "no"));
        assert!(!answers_match("0.5", "1"));
        assert!(!answers_match("increase of roughly", "94"));
        assert!(!answers_match("", "94"));
    }

    #[test]
    fn answers_match_is_symmetric() {
        let pairs = [
            ("$ 94 million", "94"),
            ("66.67%", "0.6667"),
            ("95", "94"),
            ("0.6667", "0.67"),
            ("yes", "no"),
            ("25%", "0.25"),
        ];
        for (a, b) in pairs {
            assert_eq!(answers_match(a, b), answers_match(b, a), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn score_sara_counts_extraction_failures_as_incorrect() {
        let cases = vec![
            SaraCompletion {
                case_id: "s1".to_string(),
                gold: Verdict::Entailment,
                completion: "Answer: Entailment".to_string(),
            },
            SaraCompletion {
                case_id: "s2".to_string(),
                gold: Verdict::Contradiction,
                completion: "Answer: Entailment".to_string(),
            },
            SaraCompletion {
                case_id: "s3".to_string(),
                gold: Verdict::Entailment,
                completion: "The section does not apply.".to_string(),
            },
        ];
        let report = score_sara(&cases);
        assert_eq!(report.n, 3);
        assert!((report.accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.records[0].verdict, RecordVerdict::Correct);
        assert_eq!(report.records[1].verdict, RecordVerdict::Incorrect);
        assert_eq!(report.records[2].verdict, RecordVerdict::ExtractionFailed);
        assert!((report.ci90 - ci90(report.accuracy, 3)).abs() < 1e-15);
    }

    #[test]
    fn score_sara_all_correct() {
        let cases: Vec<SaraCompletion> = (0..4)
            .map(|i| SaraCompletion {
                case_id: format!("s{i}"),
                gold: Verdict::Entailment,
                completion: "… Answer: Entailment".to_string(),
            })
            .collect();
        let report = score_sara(&cases);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.ci90, 0.0);
    }

    fn finqa_case(completion: &str) -> FinqaCompletion {
        FinqaCompletion {
            case_id: "f1".to_string(),
            report: FinReport {
                id: "r1".to_string(),
                pre_text: vec!["revenue was 100 in 2008 .".to_string()],
                post_text: vec![],
                table: vec![
                    vec!["".to_string(), "2007".to_string(), "2008".to_string()],
                    vec!["revenue".to_string(), "60".to_string(), "100".to_string()],
                ],
            },
            question: FinQuestion {
                id: "r1".to_string(),
                report_id: "r1".to_string(),
                question: "what was the percent change?".to_string(),
                gold_program: "subtract(100, 60), divide(#0, 60)".to_string(),
                gold_answer: "66.67%".to_string(),
                gold_facts: vec![],
            },
            completion: completion.to_string(),
        }
    }

    #[test]
    fn score_finqa_program_and_answer_are_independent() {
        // Answer rounded differently, program algebraically equal: both correct.
        let rounded = finqa_case("Program: divide(40, 60)\nAnswer: 66.7%");
        let report = score_finqa(&[rounded], PROGRAM_REL_TOL);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.program_accuracy, Some(1.0));

        // Unparseable program, matching answer.
        let garbled = finqa_case("Program: frob(1, 2)\nAnswer: 66.67%");
        let report = score_finqa(&[garbled], PROGRAM_REL_TOL);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.program_accuracy, Some(0.0));
        assert_eq!(report.records[0].verdict, RecordVerdict::Correct);
        assert!(report.records[0].failure_reason.as_deref().unwrap().contains("parse"));

        // Gold-identical program, wrong answer.
        let wrong = finqa_case("Program: subtract(100, 60), divide(#0, 60)\nAnswer: 42");
        let report = score_finqa(&[wrong], PROGRAM_REL_TOL);
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.program_accuracy, Some(1.0));

        // No cues at all.
        let silent = finqa_case("I am not sure.");
        let report = score_finqa(&[silent], PROGRAM_REL_TOL);
        assert_eq!(report.records[0].verdict, RecordVerdict::ExtractionFailed);
        assert_eq!(report.records[0].program_correct, Some(false));
    }

    #[test]
    fn report_serde_round_trip() {
        let report = score_sara(&[SaraCompletion {
            case_id: "s1".to_string(),
            gold: Verdict::Entailment,
            completion: "Answer: Entailment".to_string(),
        }]);
        let json = serde_json::to_string_pretty(&report).expect("serialize");
        let back: EvalReport = serde_json::from_str(&json).expect("deserialize");
        assert_eq!(back, report);
    }

    #[test]
    fn annotation_dump_round_trips_case_ids() {
        let cases = vec![
            SaraCompletion {
                case_id: "ok".to_string(),
                gold: Verdict::Entailment,
                completion: "Answer: Entailment".to_string(),
            },
            SaraCompletion {
                case_id: "bad".to_string(),
                gold: Verdict::Entailment,
                completion: "Answer: Contradiction".to_string(),
            },
            SaraCompletion {
                case_id: "mute".to_string(),
                gold: Verdict::Entailment,
                completion: "hmm".to_string(),
            },
        ];
        let report = score_sara(&cases);
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("annotations.csv");
        dump_for_annotation(&report, &path).expect("dump");

        let mut reader = csv::Reader::from_path(&path).expect("read");
        let headers = reader.headers().expect("headers").clone();
        assert_eq!(&headers[0], "case_id");
        assert_eq!(&headers[3], "category");
        let ids: Vec<String> = reader
            .records()
            .map(|r| r.expect("row")[0].to_string())
            .collect();
        assert_eq!(ids, vec!["bad".to_string(), "mute".to_string()]);
    }

    #[test]
    fn empty_report_dumps_header_only() {
        let report = score_sara(&[SaraCompletion {
            case_id: "ok".to_string(),
            gold: Verdict::Entailment,
            completion: "Answer: Entailment".to_string(),
        }]);
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("annotations.csv");
        dump_for_annotation(&report, &path).expect("dump");
        let contents = std::fs::read_to_string(&path).expect("read");
        assert_eq!(contents.lines().count(), 1, "header only: {contents}");
    }

    #[test]
    fn table_format_shows_value_and_margin() {
        let report = score_sara(&[
            SaraCompletion {
                case_id: "a".to_string(),
                gold: Verdict::Entailment,
                completion: "Answer: Entailment".to_string(),
            },
            SaraCompletion {
                case_id: "b".to_string(),
                gold: Verdict::Entailment,
                completion: "Answer: Contradiction".to_string(),
            },
        ]);
        let table = format_report_table(&report);
        assert!(table.contains("50.00 ± 58.16"), "{table}");
        let finqa = score_finqa(&[finqa_case("Program: divide(40, 60)\nAnswer: 66.67%")], PROGRAM_REL_TOL);
        let table = format_report_table(&finqa);
        assert!(table.contains("answer accuracy"), "{table}");
        assert!(table.contains("program accuracy"), "{table}");
        assert!(table.contains("100.00 ± 0.00"), "{table}");
    }
}
