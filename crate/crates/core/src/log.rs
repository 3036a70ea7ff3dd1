//! Derivation logs: the replayable text record of a run.
//!
//! ```text
//! vforge log v1
//! task: expand
//! field: Q
//! step 1: mono3 z 1 [1] => z@1=inf # reduce:scale
//! claim stage z: Reduced end=2 mu=2->1 slope=[1] divisor=[2,0]
//! claim series z: root=z@2 end=2 exact: x1 + x1^2
//! failure ValueNotInGroup: slope [1]/2 is not in the value group
//! ```

use std::fmt;

use num_rational::BigRational;

use crate::chart::{Chart, TransformStep};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::reduction::Termination;
use crate::task::TaskKind;
use crate::value_group::GroupValue;

pub const HEADER: &str = "vforge log v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogStep {
    pub step: TransformStep,
    pub note: String,
    /// Variables whose name or value the step changed, as they read after it.
    pub assigned: Vec<(String, GroupValue)>,
}

impl LogStep {
    pub fn from_charts(step: &TransformStep, note: &str, before: &Chart, after: &Chart) -> LogStep {
        LogStep { step: step.clone(), note: note.to_string(), assigned: changed_vars(before, after) }
    }
}

pub fn changed_vars(before: &Chart, after: &Chart) -> Vec<(String, GroupValue)> {
    before
        .vars()
        .iter()
        .zip(after.vars())
        .filter(|(a, b)| a.name != b.name || a.value != b.value)
        .map(|(_, b)| (b.name.clone(), b.value.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Prepare,
    Unprepared,
    Reduced,
    Translated,
    NewVariable,
}

impl StageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StageKind::Prepare => "prepare",
            StageKind::Unprepared => "unprepared",
            StageKind::Reduced => "Reduced",
            StageKind::Translated => "Translated",
            StageKind::NewVariable => "NewVariable",
        }
    }

    fn parse(s: &str) -> Option<StageKind> {
        Some(match s {
            "prepare" => StageKind::Prepare,
            "unprepared" => StageKind::Unprepared,
            "Reduced" => StageKind::Reduced,
            "Translated" => StageKind::Translated,
            "NewVariable" => StageKind::NewVariable,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Claim {
    /// `substitute(poly) = x^exponents · unit`.
    Monomial { poly: String, exponents: Vec<u32>, unit: String },
    /// The principal generator in the final chart.
    Generator { exponents: Vec<u32> },
    /// `g/h = x^exponents · numerator_unit / denominator_unit`.
    Fraction { exponents: Vec<u32>, numerator_unit: String, denominator_unit: String },
    /// Steps up to `end` carry the relation through one stage.
    Stage {
        relation: String,
        kind: StageKind,
        end: usize,
        mu: Option<(u32, u32)>,
        slope: Option<GroupValue>,
        divisor: Vec<u32>,
    },
    Series { relation: String, root: String, end: usize, termination: Termination, series: String },
    Value { poly: String, value: GroupValue },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub reason: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Log {
    pub task: TaskKind,
    pub field: CoefficientField,
    pub steps: Vec<LogStep>,
    pub claims: Vec<Claim>,
    pub failure: Option<Failure>,
}

fn vec_text<T: fmt::Display>(v: &[T]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(","))
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Claim::Monomial { poly, exponents, unit } => {
                write!(f, "claim monomial {poly}: {} unit: {unit}", vec_text(exponents))
            }
            Claim::Generator { exponents } => write!(f, "claim generator: {}", vec_text(exponents)),
            Claim::Fraction { exponents, numerator_unit, denominator_unit } => write!(
                f,
                "claim fraction: {} numerator-unit: {numerator_unit} denominator-unit: {denominator_unit}",
                vec_text(exponents)
            ),
            Claim::Stage { relation, kind, end, mu, slope, divisor } => {
                write!(f, "claim stage {relation}: {} end={end}", kind.as_str())?;
                if let Some((a, b)) = mu {
                    write!(f, " mu={a}->{b}")?;
                }
                if let Some(s) = slope {
                    write!(f, " slope={s}")?;
                }
                write!(f, " divisor={}", vec_text(divisor))
            }
            Claim::Series { relation, root, end, termination, series } => {
                write!(f, "claim series {relation}: root={root} end={end} ")?;
                match termination {
                    Termination::Exact => write!(f, "exact")?,
                    Termination::Truncated { bound } => write!(f, "truncated={bound}")?,
                }
                write!(f, ": {series}")
            }
            Claim::Value { poly, value } => write!(f, "claim value {poly}: {value}"),
        }
    }
}

impl fmt::Display for Log {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{HEADER}")?;
        writeln!(f, "task: {}", self.task)?;
        writeln!(f, "field: {}", self.field)?;
        for (k, s) in self.steps.iter().enumerate() {
            write!(f, "step {}: {} =>", k + 1, s.step)?;
            for (n, v) in &s.assigned {
                write!(f, " {n}={v}")?;
            }
            if s.note.is_empty() {
                writeln!(f)?;
            } else {
                writeln!(f, " # {}", s.note)?;
            }
        }
        for c in &self.claims {
            writeln!(f, "{c}")?;
        }
        if let Some(fail) = &self.failure {
            writeln!(f, "failure {}: {}", fail.reason, fail.message.replace('\n', " "))?;
        }
        Ok(())
    }
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, column: 1, message: msg.into() }
}

fn parse_vec<T: std::str::FromStr>(s: &str, line: usize) -> Result<Vec<T>> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| bad(line, format!("expected `[..]`, found `{s}`")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| bad(line, format!("bad entry `{x}`"))))
        .collect()
}

fn parse_value(s: &str, line: usize) -> Result<GroupValue> {
    GroupValue::parse(s).map_err(|_| bad(line, format!("bad group value `{s}`")))
}

pub fn parse_step(text: &str, line: usize) -> Result<TransformStep> {
    let t: Vec<&str> = text.split_whitespace().collect();
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(line, format!("bad block `{s}`")));
    Ok(match t.as_slice() {
        ["primitive", a, b] => TransformStep::Primitive { target: a.to_string(), divisor: b.to_string() },
        ["mono1", b, m] => {
            let inner = m
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| bad(line, "bad matrix"))?;
            let matrix = inner
                .split(';')
                .map(|row| parse_vec::<i64>(&format!("[{row}]"), line))
                .collect::<Result<Vec<_>>>()?;
            TransformStep::Mono1 { block: num(b)?, matrix }
        }
        [k @ ("mono2" | "mono3" | "mono4"), v, b, e] => {
            let (var, block, exponents) = (v.to_string(), num(b)?, parse_vec::<u32>(e, line)?);
            match *k {
                "mono2" => TransformStep::Mono2 { var, block, exponents },
                "mono3" => TransformStep::Mono3 { var, block, exponents },
                _ => TransformStep::Mono4 { var, block, exponents },
            }
        }
        ["translate", v, l, e] => TransformStep::Translate {
            var: v.to_string(),
            lambda: l.parse::<BigRational>().map_err(|_| bad(line, format!("bad constant `{l}`")))?,
            exponents: parse_vec::<u32>(e, line)?,
        },
        ["rename", a, b] => TransformStep::Rename { from: a.to_string(), to: b.to_string() },
        _ => return Err(bad(line, format!("unrecognized step `{text}`"))),
    })
}

fn parse_claim(rest: &str, line: usize) -> Result<Claim> {
    let (kind, rest) = rest.split_once(' ').ok_or_else(|| bad(line, "truncated claim"))?;
    match kind {
        "generator:" => Ok(Claim::Generator { exponents: parse_vec(rest, line)? }),
        "fraction:" => {
            let (e, rest) = rest.split_once(" numerator-unit: ").ok_or_else(|| bad(line, "fraction claim"))?;
            let (nu, du) = rest.split_once(" denominator-unit: ").ok_or_else(|| bad(line, "fraction claim"))?;
            Ok(Claim::Fraction { exponents: parse_vec(e, line)?, numerator_unit: nu.into(), denominator_unit: du.into() })
        }
        "monomial" => {
            let (name, rest) = rest.split_once(": ").ok_or_else(|| bad(line, "monomial claim"))?;
            let (e, unit) = rest.split_once(" unit: ").ok_or_else(|| bad(line, "monomial claim"))?;
            Ok(Claim::Monomial { poly: name.into(), exponents: parse_vec(e, line)?, unit: unit.into() })
        }
        "value" => {
            let (name, v) = rest.split_once(": ").ok_or_else(|| bad(line, "value claim"))?;
            Ok(Claim::Value { poly: name.into(), value: parse_value(v, line)? })
        }
        "stage" => {
            let (relation, rest) = rest.split_once(": ").ok_or_else(|| bad(line, "stage claim"))?;
            let mut words = rest.split_whitespace();
            let kind = words.next().and_then(StageKind::parse).ok_or_else(|| bad(line, "stage kind"))?;
            let (mut end, mut mu, mut slope, mut divisor) = (None, None, None, None);
            for w in words {
                let (k, v) = w.split_once('=').ok_or_else(|| bad(line, format!("bad field `{w}`")))?;
                match k {
                    "end" => end = Some(v.parse().map_err(|_| bad(line, "bad end"))?),
                    "mu" => {
                        let (a, b) = v.split_once("->").ok_or_else(|| bad(line, "bad mu"))?;
                        mu = Some((a.parse().map_err(|_| bad(line, "bad mu"))?, b.parse().map_err(|_| bad(line, "bad mu"))?));
                    }
                    "slope" => slope = Some(parse_value(v, line)?),
                    "divisor" => divisor = Some(parse_vec(v, line)?),
                    _ => return Err(bad(line, format!("unknown field `{k}`"))),
                }
            }
            Ok(Claim::Stage {
                relation: relation.into(),
                kind,
                end: end.ok_or_else(|| bad(line, "missing end"))?,
                mu,
                slope,
                divisor: divisor.ok_or_else(|| bad(line, "missing divisor"))?,
            })
        }
        "series" => {
            let (relation, rest) = rest.split_once(": ").ok_or_else(|| bad(line, "series claim"))?;
            let (head, series) = rest.split_once(": ").ok_or_else(|| bad(line, "series claim"))?;
            let (mut root, mut end, mut termination) = (None, None, None);
            for w in head.split_whitespace() {
                if w == "exact" {
                    termination = Some(Termination::Exact);
                } else if let Some(b) = w.strip_prefix("truncated=") {
                    termination = Some(Termination::Truncated { bound: parse_value(b, line)? });
                } else if let Some(r) = w.strip_prefix("root=") {
                    root = Some(r.to_string());
                } else if let Some(e) = w.strip_prefix("end=") {
                    end = Some(e.parse().map_err(|_| bad(line, "bad end"))?);
                } else {
                    return Err(bad(line, format!("unknown field `{w}`")));
                }
            }
            Ok(Claim::Series {
                relation: relation.into(),
                root: root.ok_or_else(|| bad(line, "missing root"))?,
                end: end.ok_or_else(|| bad(line, "missing end"))?,
                termination: termination.ok_or_else(|| bad(line, "missing termination"))?,
                series: series.into(),
            })
        }
        _ => Err(bad(line, format!("unknown claim `{kind}`"))),
    }
}

pub fn parse_log(text: &str) -> Result<Log> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(bad(1, "missing log header")),
    }
    let mut task = None;
    let mut field = None;
    let mut steps = Vec::new();
    let mut claims = Vec::new();
    let mut failure = None;
    for (no, l) in lines {
        let l = l.trim_end();
        if l.is_empty() {
            continue;
        }
        if let Some(v) = l.strip_prefix("task: ") {
            task = Some(v.parse::<TaskKind>().map_err(|m| bad(no, m))?);
        } else if let Some(v) = l.strip_prefix("field: ") {
            field = Some(match v.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["Q"] => CoefficientField::Rationals,
                ["F", p] => CoefficientField::prime(p.parse().map_err(|_| bad(no, "bad prime"))?)?,
                _ => return Err(bad(no, "bad field")),
            });
        } else if let Some(v) = l.strip_prefix("step ") {
            let (idx, rest) = v.split_once(": ").ok_or_else(|| bad(no, "bad step line"))?;
            if idx.parse::<usize>().ok() != Some(steps.len() + 1) {
                return Err(bad(no, format!("step number {idx} out of sequence")));
            }
            let (body, note) = match rest.split_once(" # ") {
                Some((b, n)) => (b, n.to_string()),
                None => (rest, String::new()),
            };
            let (step_text, assigned_text) = body.split_once(" =>").ok_or_else(|| bad(no, "missing `=>`"))?;
            let assigned = assigned_text
                .split_whitespace()
                .map(|a| {
                    let (n, v) = a.split_once('=').ok_or_else(|| bad(no, format!("bad assignment `{a}`")))?;
                    Ok((n.to_string(), parse_value(v, no)?))
                })
                .collect::<Result<Vec<_>>>()?;
            steps.push(LogStep { step: parse_step(step_text, no)?, note, assigned });
        } else if let Some(v) = l.strip_prefix("claim ") {
            claims.push(parse_claim(v, no)?);
        } else if let Some(v) = l.strip_prefix("failure ") {
            let (reason, message) = v.split_once(": ").unwrap_or((v, ""));
            failure = Some(Failure { reason: reason.into(), message: message.into() });
        } else {
            return Err(bad(no, format!("unrecognized line `{l}`")));
        }
    }
    Ok(Log {
        task: task.ok_or_else(|| bad(0, "missing task line"))?,
        field: field.ok_or_else(|| bad(0, "missing field line"))?,
        steps,
        claims,
        failure,
    })
}
