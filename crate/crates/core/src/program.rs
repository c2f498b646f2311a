//! Arithmetic program DSL for numerical answers over financial reports:
//! parse and evaluate step sequences like `subtract(100, 60), divide(#0, 60)`
//! and decide whether two programs compute the same value.
//!
//! Surface syntax, one step per operation, two arguments each:
//!
//! ```text
//! program  := step ("," step)*
//! step     := op "(" arg "," arg ")"
//! op       := add | subtract | multiply | divide | exp | greater
//!           | table_sum | table_average | table_max | table_min
//! arg      := number | number "%" | "#" k | "const_" name | row-name | "none"
//! ```
//!
//! Numbers may carry comma thousands separators (`1,000`); a percent suffix
//! divides by 100 at evaluation time (`14.1%` → 0.141). `#k` references the
//! value of step `k`, which must already exist (no forward references).
//! Table operations take a row-label first argument and the literal `none`
//! second; they aggregate the numeric cells of that row. The full grammar
//! with examples lives in `docs/program-grammar.md`.

use std::fmt;

use crate::finqa::FinReport;
use thiserror::Error;

/// Relative tolerance for program equivalence: loose enough to absorb
/// double-precision printing noise, nothing else.
pub const PROGRAM_REL_TOL: f64 = 1e-4;

// ─── Types ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Subtract,
    Multiply,
    Divide,
    Exp,
    Greater,
    TableSum,
    TableAverage,
    TableMax,
    TableMin,
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Subtract => "subtract",
            Op::Multiply => "multiply",
            Op::Divide => "divide",
            Op::Exp => "exp",
            Op::Greater => "greater",
            Op::TableSum => "table_sum",
            Op::TableAverage => "table_average",
            Op::TableMax => "table_max",
            Op::TableMin => "table_min",
        }
    }

    fn from_name(name: &str) -> Option<Op> {
        Some(match name {
            "add" => Op::Add,
            "subtract" => Op::Subtract,
            "multiply" => Op::Multiply,
            "divide" => Op::Divide,
            "exp" => Op::Exp,
            "greater" => Op::Greater,
            "table_sum" => Op::TableSum,
            "table_average" => Op::TableAverage,
            "table_max" => Op::TableMax,
            "table_min" => Op::TableMin,
            _ => return None,
        })
    }

    pub fn is_table_op(self) -> bool {
        matches!(self, Op::TableSum | Op::TableAverage | Op::TableMax | Op::TableMin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Number(f64),
    /// A percent literal; holds the value *before* division so `14.1%`
    /// prints back as written. Evaluates to the value / 100.
    Percent(f64),
    /// `#k` — the value of step `k`.
    StepRef(usize),
    /// Row label for table operations.
    RowName(String),
    None,
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Number(n) => write!(f, "{n}"),
            Arg::Percent(n) => write!(f, "{n}%"),
            Arg::StepRef(k) => write!(f, "#{k}"),
            Arg::RowName(name) => write!(f, "{name}"),
            Arg::None => write!(f, "none"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub op: Op,
    pub arg1: Arg,
    pub arg2: Arg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub steps: Vec<Step>,
}

impl fmt::Display for Program {
    /// Canonical form: steps joined by `", "`, one space after the inner
    /// comma. Reparsing the output yields the same program.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}({}, {})", step.op.name(), step.arg1, step.arg2)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Number(f64),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => write!(f, "{n}"),
            Value::Bool(true) => write!(f, "yes"),
            Value::Bool(false) => write!(f, "no"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProgramError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown operation {name:?} at position {position}")]
    UnknownOperation { name: String, position: usize },
    #[error("step {step}: argument #{reference} refers to a step that has not run yet")]
    ForwardReference { step: usize, reference: usize },
    #[error("operation {op} expects 2 arguments, found {found}")]
    ArityMismatch { op: String, found: usize },
    #[error("division by zero in step {step}")]
    DivisionByZero { step: usize },
    #[error("table row {0:?} not found")]
    RowNotFound(String),
    #[error("table row {0:?} has no numeric cells")]
    NonNumericRow(String),
    #[error("non-finite result in step {step}")]
    NonFiniteResult { step: usize },
    #[error("step {step}: {message}")]
    Type { step: usize, message: String },
    #[error("program uses table operations but no report was provided")]
    MissingReport,
}

// ─── Parser ─────────────────────────────────────────────────────────────────

struct Scanner {
    chars: Vec<char>,
    pos: usize,
}

impl Scanner {
    fn new(text: &str) -> Self {
        Scanner { chars: text.chars().collect(), pos: 0 }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn syntax(&self, message: impl Into<String>) -> ProgramError {
        ProgramError::Syntax { position: self.pos, message: message.into() }
    }
}

/// Parse program text. Back-references are checked here: `#k` must point at
/// an earlier step.
pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    let mut scanner = Scanner::new(text);
    let mut steps = Vec::new();
    loop {
        scanner.skip_ws();
        if scanner.peek().is_none() {
            break;
        }
        steps.push(parse_step(&mut scanner, steps.len())?);
        scanner.skip_ws();
        match scanner.peek() {
            Some(',') => {
                scanner.bump();
            }
            Some(other) => {
                return Err(scanner.syntax(format!("expected ',' between steps, found {other:?}")))
            }
            None => break,
        }
    }
    if steps.is_empty() {
        return Err(ProgramError::Syntax { position: 0, message: "empty program".to_string() });
    }
    Ok(Program { steps })
}

fn parse_step(scanner: &mut Scanner, index: usize) -> Result<Step, ProgramError> {
    scanner.skip_ws();
    let name_start = scanner.pos;
    let mut name = String::new();
    while scanner.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
        name.push(scanner.bump().expect("peeked"));
    }
    if name.is_empty() {
        return Err(scanner.syntax("expected an operation name"));
    }
    let op = Op::from_name(&name).ok_or(ProgramError::UnknownOperation {
        name: name.clone(),
        position: name_start,
    })?;
    scanner.skip_ws();
    if scanner.peek() != Some('(') {
        return Err(scanner.syntax(format!("expected '(' after {name}")));
    }
    scanner.bump();
    let raw_args = scan_raw_args(scanner)?;
    if raw_args.len() != 2 {
        return Err(ProgramError::ArityMismatch { op: name, found: raw_args.len() });
    }
    let (arg1, arg2) = if op.is_table_op() {
        let label = raw_args[0].0.trim().trim_matches('"').to_string();
        if label.is_empty() {
            return Err(ProgramError::Syntax {
                position: raw_args[0].1,
                message: format!("{name} needs a row name as its first argument"),
            });
        }
        if raw_args[1].0.trim() != "none" {
            return Err(ProgramError::Syntax {
                position: raw_args[1].1,
                message: format!("{name} takes the literal none as its second argument"),
            });
        }
        (Arg::RowName(label), Arg::None)
    } else {
        (
            classify_numeric_arg(&raw_args[0].0, raw_args[0].1, index)?,
            classify_numeric_arg(&raw_args[1].0, raw_args[1].1, index)?,
        )
    };
    Ok(Step { op, arg1, arg2 })
}

/// Collect raw argument texts up to the closing paren. Commas usually
/// separate arguments, but a comma between a digit and a 3-digit group is a
/// thousands separator and stays inside the argument (`1,000`).
fn scan_raw_args(scanner: &mut Scanner) -> Result<Vec<(String, usize)>, ProgramError> {
    let mut args = Vec::new();
    let mut current = String::new();
    let mut start = scanner.pos;
    let mut depth = 0usize;
    loop {
        let Some(c) = scanner.peek() else {
            return Err(scanner.syntax("unterminated argument list"));
        };
        match c {
            '(' => {
                depth += 1;
                current.push(c);
                scanner.bump();
            }
            ')' if depth > 0 => {
                depth -= 1;
                current.push(c);
                scanner.bump();
            }
            ')' => {
                scanner.bump();
                args.push((current.trim().to_string(), start));
                return Ok(args);
            }
            ',' if depth == 0 => {
                if thousands_group_follows(scanner, &current) {
                    current.push(scanner.bump().expect("comma"));
                    for _ in 0..3 {
                        current.push(scanner.bump().expect("digits checked"));
                    }
                } else {
                    scanner.bump();
                    args.push((current.trim().to_string(), start));
                    current = String::new();
                    scanner.skip_ws();
                    start = scanner.pos;
                }
            }
            _ => {
                current.push(c);
                scanner.bump();
            }
        }
    }
}

fn thousands_group_follows(scanner: &Scanner, current: &str) -> bool {
    if !current.trim_end().ends_with(|c: char| c.is_ascii_digit()) {
        return false;
    }
    let next3 = &scanner.chars[scanner.pos + 1..];
    next3.len() >= 3
        && next3[..3].iter().all(|c| c.is_ascii_digit())
        && next3.get(3).is_none_or(|c| !c.is_ascii_digit())
}

fn classify_numeric_arg(raw: &str, position: usize, step: usize) -> Result<Arg, ProgramError> {
    let text = raw.trim();
    let syntax = |message: String| ProgramError::Syntax { position, message };
    if text == "none" {
        return Err(syntax("none is only valid for table operations".to_string()));
    }
    if let Some(rest) = text.strip_prefix('#') {
        let reference: usize = rest
            .parse()
            .map_err(|_| syntax(format!("bad step reference {text:?}")))?;
        if reference >= step {
            return Err(ProgramError::ForwardReference { step, reference });
        }
        return Ok(Arg::StepRef(reference));
    }
    if let Some(rest) = text.strip_prefix("const_") {
        let (negative, digits) = match rest.strip_prefix('m') {
            Some(d) => (true, d),
            None => (false, rest),
        };
        let value: f64 = digits
            .parse()
            .map_err(|_| syntax(format!("unknown constant {text:?}")))?;
        return Ok(Arg::Number(if negative { -value } else { value }));
    }
    let (body, percent) = match text.strip_suffix('%') {
        Some(body) => (body.trim_end(), true),
        None => (text, false),
    };
    let cleaned: String = body.chars().filter(|&c| c != ',').collect();
    let value: f64 = cleaned
        .parse()
        .map_err(|_| syntax(format!("expected a number, #k, or const_* argument, found {text:?}")))?;
    Ok(if percent { Arg::Percent(value) } else { Arg::Number(value) })
}

// ─── Evaluator ──────────────────────────────────────────────────────────────

/// Evaluate steps in order; the program's value is the last step's value.
pub fn eval_program(program: &Program, report: Option<&FinReport>) -> Result<Value, ProgramError> {
    let mut values: Vec<Value> = Vec::with_capacity(program.steps.len());
    for (i, step) in program.steps.iter().enumerate() {
        let value = eval_step(step, i, &values, report)?;
        if let Value::Number(n) = value {
            if !n.is_finite() {
                return Err(ProgramError::NonFiniteResult { step: i });
            }
        }
        values.push(value);
    }
    values
        .last()
        .copied()
        .ok_or(ProgramError::Syntax { position: 0, message: "empty program".to_string() })
}

fn eval_step(
    step: &Step,
    index: usize,
    values: &[Value],
    report: Option<&FinReport>,
) -> Result<Value, ProgramError> {
    if step.op.is_table_op() {
        let Arg::RowName(name) = &step.arg1 else {
            return Err(ProgramError::Type {
                step: index,
                message: "table operation without a row name".to_string(),
            });
        };
        let report = report.ok_or(ProgramError::MissingReport)?;
        let cells = numeric_row_cells(report, name)?;
        let value = match step.op {
            Op::TableSum => cells.iter().sum(),
            Op::TableAverage => cells.iter().sum::<f64>() / cells.len() as f64,
            Op::TableMax => cells.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Op::TableMin => cells.iter().copied().fold(f64::INFINITY, f64::min),
            _ => unreachable!("is_table_op covers exactly these"),
        };
        return Ok(Value::Number(value));
    }

    let a = numeric_operand(&step.arg1, index, values)?;
    let b = numeric_operand(&step.arg2, index, values)?;
    Ok(match step.op {
        Op::Add => Value::Number(a + b),
        Op::Subtract => Value::Number(a - b),
        Op::Multiply => Value::Number(a * b),
        Op::Divide => {
            if b == 0.0 {
                return Err(ProgramError::DivisionByZero { step: index });
            }
            Value::Number(a / b)
        }
        Op::Exp => Value::Number(a.powf(b)),
        Op::Greater => Value::Bool(a > b),
        _ => unreachable!("table ops handled above"),
    })
}

fn numeric_operand(arg: &Arg, step: usize, values: &[Value]) -> Result<f64, ProgramError> {
    match arg {
        Arg::Number(n) => Ok(*n),
        Arg::Percent(n) => Ok(n / 100.0),
        Arg::StepRef(k) => match values.get(*k) {
            Some(Value::Number(n)) => Ok(*n),
            Some(Value::Bool(_)) => Err(ProgramError::Type {
                step,
                message: format!("#{k} is a yes/no value, not a number"),
            }),
            None => Err(ProgramError::ForwardReference { step, reference: *k }),
        },
        Arg::RowName(name) => Err(ProgramError::Type {
            step,
            message: format!("row name {name:?} used in an arithmetic operation"),
        }),
        Arg::None => Err(ProgramError::Type {
            step,
            message: "missing argument".to_string(),
        }),
    }
}

/// Numeric cells of the named row, label cell excluded.
fn numeric_row_cells(report: &FinReport, name: &str) -> Result<Vec<f64>, ProgramError> {
    let wanted = normalize_label(name);
    let row = report
        .table
        .iter()
        .skip(1)
        .find(|row| row.first().is_some_and(|label| normalize_label(label) == wanted))
        .ok_or_else(|| ProgramError::RowNotFound(name.to_string()))?;
    let cells: Vec<f64> = row.iter().skip(1).filter_map(|cell| parse_cell(cell)).collect();
    if cells.is_empty() {
        return Err(ProgramError::NonNumericRow(name.to_string()));
    }
    Ok(cells)
}

/// Case-folded, punctuation-stripped row-label comparison — exact after
/// normalization, never fuzzy.
fn normalize_label(label: &str) -> String {
    label
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parse a table cell as a number: `$`, commas, and spaces are dropped,
/// `(…)` means negative, a trailing `%` divides by 100.
pub(crate) fn parse_cell(cell: &str) -> Option<f64> {
    let mut text = cell.trim();
    let mut negative = false;
    if text.starts_with('(') && text.ends_with(')') {
        negative = true;
        text = text[1..text.len() - 1].trim();
    }
    let mut cleaned: String = text
        .chars()
        .filter(|&c| c != '$' && c != ',' && !c.is_whitespace())
        .collect();
    let percent = cleaned.ends_with('%');
    if percent {
        cleaned.pop();
    }
    let value: f64 = cleaned.parse().ok()?;
    let value = if percent { value / 100.0 } else { value };
    Some(if negative { -value } else { value })
}

// ─── Equivalence ────────────────────────────────────────────────────────────

/// Numbers match within relative tolerance `|a − b| / max(1, |b|) ≤ rel_tol`;
/// booleans must be equal; a number never matches a boolean.
pub fn values_match(a: &Value, b: &Value, rel_tol: f64) -> bool {
    match (a, b) {
        (Value::Number(a), Value::Number(b)) => {
            a.is_finite() && b.is_finite() && (a - b).abs() / b.abs().max(1.0) <= rel_tol
        }
        (Value::Bool(a), Value::Bool(b)) => a == b,
        _ => false,
    }
}

/// Do the two programs evaluate to the same answer? Any evaluation error —
/// on either side — makes the programs non-equivalent.
pub fn programs_equivalent(
    candidate: &Program,
    gold: &Program,
    report: Option<&FinReport>,
    rel_tol: f64,
) -> bool {
    let (Ok(candidate_value), Ok(gold_value)) =
        (eval_program(candidate, report), eval_program(gold, report))
    else {
        return false;
    };
    values_match(&candidate_value, &gold_value, rel_tol)
}

// ─── Tests ──────────────────────────────────────────────────────────────────
