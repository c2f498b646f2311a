//! Acceptance criteria for the whole pipeline. Each test prints exactly one
//! `criterion N (label): pass|fail` line (visible with `--show-output` or on
//! failure) and keeps its tolerances pinned inline.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strata_core::eval::{answers_match, ci90};
use strata_core::program::{eval_program, parse_program, programs_equivalent, Value, PROGRAM_REL_TOL};
use strata_core::prompt::{build_prompt, load_exemplars, PromptConfig, PromptMode};
use strata_core::retrieval::{citations_for_paths, RetrievedContext, StatuteCorpus};
use strata_core::statute::{parse_statute, SectionPath};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn criterion(number: u32, label: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("criterion {number} ({label}): pass"),
        Err(message) => {
            println!("criterion {number} ({label}): fail - {message}");
            panic!("criterion {number} ({label}) failed: {message}");
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

// ─── 1. Golden statute parse ────────────────────────────────────────────────

#[test]
fn criterion_1_golden_statute_parse() {
    criterion(1, "golden statute parse under 1s", || {
        let raw = std::fs::read_to_string(fixtures().join("sara/statutes/section7703.txt"))
            .map_err(|e| e.to_string())?;
        let started = Instant::now();
        let parsed = parse_statute(&raw, "7703").map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        ensure!(
            elapsed < Duration::from_secs(1),
            "parse took {elapsed:?}, budget is 1s"
        );

        let golden_raw =
            std::fs::read_to_string(fixtures().join("sara/golden/section7703_sentences.jsonl"))
                .map_err(|e| e.to_string())?;
        let golden: Vec<serde_json::Value> = golden_raw
            .lines()
            .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let actual: Vec<serde_json::Value> = parsed
            .sentences
            .iter()
            .map(|s| {
                serde_json::json!({
                    "section": "7703",
                    "path": s.assigned_path.to_string(),
                    "ordinal": s.ordinal,
                    "text": s.text,
                    "is_heading": s.is_heading,
                })
            })
            .collect();
        ensure!(
            actual.len() == golden.len(),
            "parsed {} sentences, golden has {}",
            actual.len(),
            golden.len()
        );
        for (i, (a, g)) in actual.iter().zip(&golden).enumerate() {
            ensure!(a == g, "sentence {i} differs:\n  parsed {a}\n  golden {g}");
        }
        Ok(())
    });
}

// ─── 2. Worked retrieval example ────────────────────────────────────────────

fn path_set(context: &RetrievedContext) -> BTreeSet<String> {
    context
        .sentences
        .iter()
        .map(|s| s.assigned_path.to_string())
        .collect()
}

#[test]
fn criterion_2_worked_retrieval_example() {
    criterion(2, "worked retrieval example", || {
        let corpus =
            StatuteCorpus::load_dir(&fixtures().join("sara/statutes")).map_err(|e| e.to_string())?;
        let query: SectionPath = "s7703(a)(1)".parse().map_err(|e| format!("{e}"))?;

        let mentioned = corpus
            .retrieve_mentioned_only(&query)
            .map_err(|e| e.to_string())?;
        let expected: BTreeSet<String> = ["s7703", "s7703(a)", "s7703(a)(1)"]
            .into_iter()
            .map(String::from)
            .collect();
        ensure!(
            path_set(&mentioned) == expected,
            "mentioned-only paths {:?}, expected {:?}",
            path_set(&mentioned),
            expected
        );

        let entire = corpus
            .retrieve_entire_section(&query)
            .map_err(|e| e.to_string())?;
        let expected_entire: BTreeSet<String> =
            ["s7703", "s7703(a)", "s7703(a)(1)", "s7703(a)(2)"]
                .into_iter()
                .map(String::from)
                .collect();
        ensure!(
            path_set(&entire) == expected_entire,
            "entire-section paths {:?}, expected {:?}",
            path_set(&entire),
            expected_entire
        );
        Ok(())
    });
}

// ─── 3. Containment across the corpus ───────────────────────────────────────

#[test]
fn criterion_3_strategy_containment() {
    criterion(3, "strategy containment over the corpus", || {
        let started = Instant::now();
        let corpus =
            StatuteCorpus::load_dir(&fixtures().join("sara/statutes")).map_err(|e| e.to_string())?;
        let queries: BTreeSet<SectionPath> = corpus
            .sections()
            .flat_map(|s| s.sentences.iter().map(|sen| sen.assigned_path.clone()))
            .collect();
        ensure!(queries.len() > 10, "expected a nontrivial corpus");

        let keyed = |c: &RetrievedContext| -> BTreeSet<(String, usize)> {
            c.sentences
                .iter()
                .map(|s| (s.assigned_path.section_number().to_string(), s.ordinal))
                .collect()
        };
        for query in &queries {
            let mentioned = keyed(&corpus.retrieve_mentioned_only(query).map_err(|e| e.to_string())?);
            let entire = keyed(&corpus.retrieve_entire_section(query).map_err(|e| e.to_string())?);
            let references = keyed(&corpus.retrieve_references(query).map_err(|e| e.to_string())?);
            ensure!(
                mentioned.is_subset(&entire),
                "{query}: mentioned-only is not contained in entire-section"
            );
            ensure!(
                mentioned.is_subset(&references),
                "{query}: mentioned-only is not contained in references"
            );
        }
        let elapsed = started.elapsed();
        ensure!(
            elapsed < Duration::from_secs(30),
            "containment sweep took {elapsed:?}, budget is 30s"
        );
        Ok(())
    });
}

// ─── 4. Confidence interval margins ─────────────────────────────────────────

#[test]
fn criterion_4_ci_margins() {
    criterion(4, "confidence interval margins", || {
        let cases = [(0.50, 100, 0.0822), (0.68, 200, 0.0543)];
        for (p, n, expected) in cases {
            let margin = ci90(p, n);
            ensure!(
                (margin - expected).abs() <= 1e-4,
                "ci90({p}, {n}) = {margin:.6}, expected {expected} within 1e-4"
            );
        }
        Ok(())
    });
}

// ─── 5. Program evaluation against an independent oracle ───────────────────

#[derive(Clone)]
enum GenArg {
    Lit(f64, String),
    Ref(usize),
}

#[derive(Clone)]
struct GenStep {
    op: &'static str,
    a: GenArg,
    b: GenArg,
}

fn gen_literal(rng: &mut ChaCha8Rng) -> (f64, String) {
    let value = (rng.random_range(-100_000..=100_000) as f64) / 100.0;
    (value, format!("{value}"))
}

fn gen_operand(rng: &mut ChaCha8Rng, values: &[f64], nonzero: bool) -> GenArg {
    if !values.is_empty() && rng.random_bool(0.4) {
        let k = rng.random_range(0..values.len());
        if !nonzero || values[k].abs() >= 1e-6 {
            return GenArg::Ref(k);
        }
    }
    loop {
        let (value, text) = gen_literal(rng);
        if !nonzero || value.abs() >= 1e-6 {
            return GenArg::Lit(value, text);
        }
    }
}

/// Independent straight-line evaluator used as the oracle: keeps its own
/// value column and never consults the library.
fn oracle_eval(steps: &[GenStep]) -> Vec<f64> {
    let mut values: Vec<f64> = Vec::with_capacity(steps.len());
    for step in steps {
        let fetch = |arg: &GenArg| -> f64 {
            match arg {
                GenArg::Lit(v, _) => *v,
                GenArg::Ref(k) => values[*k],
            }
        };
        let (a, b) = (fetch(&step.a), fetch(&step.b));
        let value = match step.op {
            "add" => a + b,
            "subtract" => a - b,
            "multiply" => a * b,
            "divide" => a / b,
            "exp" => a.powf(b),
            other => unreachable!("generator never emits {other}"),
        };
        values.push(value);
    }
    values
}

fn render(steps: &[GenStep]) -> String {
    let arg = |a: &GenArg| match a {
        GenArg::Lit(_, text) => text.clone(),
        GenArg::Ref(k) => format!("#{k}"),
    };
    steps
        .iter()
        .map(|s| format!("{}({}, {})", s.op, arg(&s.a), arg(&s.b)))
        .collect::<Vec<_>>()
        .join(", ")
}

#[test]
fn criterion_5_program_oracle() {
    criterion(5, "1000 seeded programs vs oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0001);
        for case in 0..1000 {
            let n_steps = rng.random_range(1..=4);
            let mut steps: Vec<GenStep> = Vec::with_capacity(n_steps);
            let mut values: Vec<f64> = Vec::new();
            for _ in 0..n_steps {
                let op = ["add", "subtract", "multiply", "divide", "exp"]
                    [rng.random_range(0..5)];
                let a = gen_operand(&mut rng, &values, false);
                let b = match op {
                    "divide" => gen_operand(&mut rng, &values, true),
                    // Small positive integer exponents keep every chain
                    // finite (worst case ~1e243 over four steps).
                    "exp" => {
                        let e = rng.random_range(1..=3);
                        GenArg::Lit(e as f64, format!("{e}"))
                    }
                    _ => gen_operand(&mut rng, &values, false),
                };
                let step = GenStep { op, a, b };
                values = oracle_eval(&{
                    let mut all = steps.clone();
                    all.push(step.clone());
                    all
                });
                steps.push(step);
            }

            let text = render(&steps);
            let oracle = *oracle_eval(&steps).last().expect("at least one step");
            let program = parse_program(&text)
                .map_err(|e| format!("case {case}: {text:?} failed to parse: {e}"))?;
            let value = match eval_program(&program, None) {
                Ok(Value::Number(n)) => n,
                other => return Err(format!("case {case}: {text:?} evaluated to {other:?}")),
            };
            let tolerance = 1e-12 * oracle.abs().max(1.0);
            ensure!(
                (value - oracle).abs() <= tolerance,
                "case {case}: {text:?} gave {value}, oracle says {oracle}"
            );

            let printed = program.to_string();
            let reparsed = parse_program(&printed)
                .map_err(|e| format!("case {case}: canonical form {printed:?} failed: {e}"))?;
            ensure!(
                reparsed == program,
                "case {case}: round trip changed the program: {text:?} vs {printed:?}"
            );
        }
        Ok(())
    });
}

// ─── 6. Answer matching and program equivalence ─────────────────────────────

#[test]
fn criterion_6_matching_rules() {
    criterion(6, "answer matching and program equivalence", || {
        ensure!(
            answers_match("$ 94 million", "94"),
            "currency and unit dressing must be forgiven"
        );
        ensure!(
            answers_match("66.67%", "0.6667"),
            "percent and fractional forms must agree"
        );
        ensure!(!answers_match("95", "94"), "different numbers must not match");

        let divide = parse_program("subtract(100, 60), divide(#0, 60)").map_err(|e| e.to_string())?;
        ensure!(
            programs_equivalent(&divide, &divide, None, PROGRAM_REL_TOL),
            "equivalence must be reflexive on healthy programs"
        );
        let rewritten = parse_program("divide(100, 60), subtract(#0, 1)").map_err(|e| e.to_string())?;
        ensure!(
            programs_equivalent(&rewritten, &divide, None, PROGRAM_REL_TOL),
            "algebraically equal programs must be equivalent"
        );
        let broken = parse_program("divide(1, 0)").map_err(|e| e.to_string())?;
        ensure!(
            !programs_equivalent(&broken, &broken, None, PROGRAM_REL_TOL),
            "a program that fails to evaluate is equivalent to nothing"
        );
        Ok(())
    });
}

// ─── 7. Offline end-to-end runs ─────────────────────────────────────────────

fn mock_run(config: &Path, out_dir: &Path) -> Result<serde_json::Value, String> {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_strata"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--output-dir")
        .arg(out_dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(format!(
            "run exited {:?}: {}",
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    let report = std::fs::read_to_string(out_dir.join("report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&report).map_err(|e| e.to_string())
}

#[test]
fn criterion_7_offline_end_to_end() {
    criterion(7, "offline end-to-end mock runs", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

        let sara = mock_run(&fixtures().join("sara/run.toml"), &dir.path().join("sara-a"))?;
        ensure!(sara["n"] == 4, "entailment run covered {} cases", sara["n"]);
        ensure!(
            sara["accuracy"] == 1.0,
            "entailment accuracy {} should be 1.0",
            sara["accuracy"]
        );

        let finqa = mock_run(&fixtures().join("finqa/run.toml"), &dir.path().join("finqa-a"))?;
        ensure!(finqa["n"] == 4, "financial run covered {} cases", finqa["n"]);
        ensure!(
            finqa["answer_accuracy"] == 1.0 && finqa["program_accuracy"] == 1.0,
            "financial accuracies {}/{} should both be 1.0",
            finqa["answer_accuracy"],
            finqa["program_accuracy"]
        );

        // Determinism: a second pair of runs must yield byte-identical reports.
        mock_run(&fixtures().join("sara/run.toml"), &dir.path().join("sara-b"))?;
        mock_run(&fixtures().join("finqa/run.toml"), &dir.path().join("finqa-b"))?;
        for task in ["sara", "finqa"] {
            let a = std::fs::read(dir.path().join(format!("{task}-a/report.json")))
                .map_err(|e| e.to_string())?;
            let b = std::fs::read(dir.path().join(format!("{task}-b/report.json")))
                .map_err(|e| e.to_string())?;
            ensure!(a == b, "{task} reports differ between repeated runs");
        }
        Ok(())
    });
}

// ─── 8. Prompt shape laws ───────────────────────────────────────────────────

fn count(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}

#[test]
fn criterion_8_prompt_shape_laws() {
    criterion(8, "prompt shape laws", || {
        let corpus =
            StatuteCorpus::load_dir(&fixtures().join("sara/statutes")).map_err(|e| e.to_string())?;
        let bank = load_exemplars(&fixtures().join("sara/exemplars.jsonl")).map_err(|e| e.to_string())?;
        let context_for = |path: &str| -> Result<String, String> {
            let parsed: SectionPath = path.parse().map_err(|e| format!("{e}"))?;
            Ok(corpus
                .retrieve(&citations_for_paths(&[parsed]), strata_core::retrieval::RetrievalStrategy::MentionedOnly)
                .map_err(|e| e.to_string())?
                .render_text())
        };

        let cot = PromptConfig::sara(PromptMode::Cot, bank.clone());
        let first = build_prompt(
            &cot,
            &context_for("s7703(a)")?,
            "Under section 7703(a)(1), Pat is treated as married for 2017.",
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            count(&first.text, "Explanation:") == 8,
            "chain-of-thought prompt holds {} explanations, expected 8",
            count(&first.text, "Explanation:")
        );
        ensure!(
            first.text.ends_with("Pat is treated as married for 2017."),
            "chain-of-thought test block must end with the bare statement"
        );

        let zero = PromptConfig::sara(PromptMode::ZeroShot, Vec::new());
        let zero_prompt = build_prompt(
            &zero,
            &context_for("s7703(a)")?,
            "Under section 7703(a)(1), Pat is treated as married for 2017.",
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            count(&zero_prompt.text, "Explanation:") == 0,
            "zero-shot prompts carry no explanations"
        );
        ensure!(
            count(&zero_prompt.text, "Statement:") == 1,
            "zero-shot prompts hold exactly the test statement"
        );

        // Shared fixed prefix: same config, different case, identical bytes
        // up to the test block.
        let second = build_prompt(
            &cot,
            &context_for("s151(b)")?,
            "Under section 151(b), Quinn is allowed an exemption for 2017.",
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            first.fixed_prefix_len == second.fixed_prefix_len,
            "fixed prefix length must not depend on the case"
        );
        ensure!(
            first.text.as_bytes()[..first.fixed_prefix_len]
                == second.text.as_bytes()[..second.fixed_prefix_len],
            "prompts from one config must share their leading bytes"
        );

        let fin_bank =
            load_exemplars(&fixtures().join("finqa/exemplars.jsonl")).map_err(|e| e.to_string())?;
        let fin_cot = PromptConfig::finqa(PromptMode::Cot, fin_bank);
        let fin = build_prompt(
            &fin_cot,
            " | 2018 | 2019\nnet sales | 80 | 100",
            "what was the percent change in net sales?",
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            count(&fin.text, "Explanation:") == 12,
            "financial chain-of-thought prompt holds {} explanations, expected 12",
            count(&fin.text, "Explanation:")
        );
        ensure!(
            fin.text.ends_with("what was the percent change in net sales?"),
            "financial test block must end after the question"
        );
        Ok(())
    });
}

// ─── 9. Optional live smoke test ────────────────────────────────────────────

/// Opt-in smoke test against a real endpoint. Configure with:
///
/// ```text
/// STRATA_SMOKE_ENDPOINT=https://host/v1/completions \
/// STRATA_SMOKE_MODEL=model-id \
/// STRATA_SMOKE_AUTH_ENV=STRATA_API_KEY \
/// cargo test -p strata-cli --test acceptance -- --ignored criterion_9
/// ```
#[test]
#[ignore = "requires a live completion endpoint"]
fn criterion_9_live_smoke() {
    criterion(9, "live endpoint smoke", || {
        use strata_core::eval::{score_sara, SaraCompletion};
        use strata_core::gateway::{BackendConfig, CompletionRequest, Gateway};

        let endpoint = std::env::var("STRATA_SMOKE_ENDPOINT")
            .map_err(|_| "set STRATA_SMOKE_ENDPOINT to run the live smoke".to_string())?;
        let model = std::env::var("STRATA_SMOKE_MODEL")
            .map_err(|_| "set STRATA_SMOKE_MODEL to run the live smoke".to_string())?;
        let kind = std::env::var("STRATA_SMOKE_KIND").unwrap_or_else(|_| "http-completions".into());
        let auth_env = std::env::var("STRATA_SMOKE_AUTH_ENV").unwrap_or_else(|_| "STRATA_API_KEY".into());

        let corpus =
            StatuteCorpus::load_dir(&fixtures().join("sara/statutes")).map_err(|e| e.to_string())?;
        let raw = std::fs::read_to_string(fixtures().join("sara/cases.jsonl")).map_err(|e| e.to_string())?;
        let mut cases: Vec<serde_json::Value> = raw
            .lines()
            .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        cases.sort_by_key(|c| c["id"].as_str().unwrap_or_default().to_string());
        cases.truncate(10);

        let gateway = Gateway::new(
            BackendConfig {
                kind: kind.parse().map_err(|e: String| e)?,
                endpoint_url: endpoint,
                auth_env_var: auth_env,
                timeout_s: 60.0,
                max_retries: 2,
                max_parallel: 1,
                fixture_path: None,
                retry_base_ms: 1000,
            },
            None,
        )
        .map_err(|e| e.to_string())?;

        let bank = load_exemplars(&fixtures().join("sara/exemplars.jsonl")).map_err(|e| e.to_string())?;
        let config = PromptConfig::sara(PromptMode::FewShot, bank);
        let mut completions = Vec::new();
        for case in &cases {
            let statement = case["text"].as_str().ok_or("case without text")?;
            let citations = strata_core::cite::extract_citations(statement);
            let context = corpus
                .retrieve(&citations, strata_core::retrieval::RetrievalStrategy::MentionedOnly)
                .map_err(|e| e.to_string())?
                .render_text();
            let prompt = build_prompt(&config, &context, statement).map_err(|e| e.to_string())?;
            let result = gateway
                .complete(&CompletionRequest {
                    model_id: model.clone(),
                    prompt: prompt.text,
                    max_output_tokens: 64,
                    temperature: 0.0,
                    stop_sequences: Vec::new(),
                })
                .map_err(|e| e.to_string())?;
            completions.push(SaraCompletion {
                case_id: case["id"].as_str().unwrap_or_default().to_string(),
                gold: case["gold"].as_str().unwrap_or_default().parse().map_err(|e: String| e)?,
                completion: result.text,
            });
        }
        let report = score_sara(&completions);
        let margin = ci90(report.accuracy, report.n);
        println!(
            "live smoke: accuracy {:.3} ± {margin:.3} over {} cases",
            report.accuracy, report.n
        );
        ensure!(
            (0.0..=1.0).contains(&report.accuracy),
            "accuracy {} out of range",
            report.accuracy
        );
        Ok(())
    });
}
