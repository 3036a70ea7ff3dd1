//! Line-oriented task files.
//!
//! ```text
//! # comment
//! blocks: 2
//! vars: x1@1 x2@1
//! weight x2 = 1*sqrt(3) + 1/2*sqrt(2)
//! field: Q
//! task: monomialize
//! poly f: x1 + x2
//! relation z: z^2 - x1^3
//! branch: edge=0 root=1
//! order: 6
//! max-steps: 1000
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::One;

use crate::chart::{Budget, Chart, VarLabel, Variable};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::poly::Poly;
use crate::reduction::BranchChoice;
use crate::value_group::{first_primes, GroupValue, ValuationFrame, Weight};

pub const DEFAULT_ORDER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Monomialize,
    Principalize,
    Fraction,
    Reduce,
    Expand,
    Uniformize,
    /// Reports the value of every `poly` line.
    Verify,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Monomialize => "monomialize",
            TaskKind::Principalize => "principalize",
            TaskKind::Fraction => "fraction",
            TaskKind::Reduce => "reduce",
            TaskKind::Expand => "expand",
            TaskKind::Uniformize => "uniformize",
            TaskKind::Verify => "verify",
        }
    }

    pub fn uses_relations(&self) -> bool {
        matches!(self, TaskKind::Reduce | TaskKind::Expand | TaskKind::Uniformize)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "monomialize" => TaskKind::Monomialize,
            "principalize" => TaskKind::Principalize,
            "fraction" => TaskKind::Fraction,
            "reduce" => TaskKind::Reduce,
            "expand" => TaskKind::Expand,
            "uniformize" => TaskKind::Uniformize,
            "verify" => TaskKind::Verify,
            other => return Err(format!("unknown task `{other}`")),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub kind: TaskKind,
    pub field: CoefficientField,
    /// Block variables in file order, then one root variable per relation.
    pub chart: Chart,
    pub polys: Vec<(String, Poly)>,
    pub relations: Vec<(String, Poly)>,
    pub branch: Vec<BranchChoice>,
    pub order: usize,
    pub max_steps: Option<usize>,
}

impl Task {
    pub fn budget(&self) -> Budget {
        self.max_steps.map(Budget::with_max_steps).unwrap_or_default()
    }

    pub fn level(&self) -> usize {
        1
    }

    pub fn frame(&self) -> &ValuationFrame {
        self.chart.frame()
    }

    pub fn poly(&self, name: &str) -> Option<&Poly> {
        self.polys.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    /// Canonical task text; parsing it gives back an equal task.
    pub fn render(&self) -> String {
        let frame = self.chart.frame();
        let names = self.chart.names();
        let mut out = String::new();
        let sizes: Vec<String> = frame.block_sizes().iter().map(|r| r.to_string()).collect();
        out.push_str(&format!("blocks: {}\n", sizes.join(" ")));
        let block_vars: Vec<&Variable> =
            self.chart.vars().iter().filter(|v| matches!(v.label, VarLabel::Block(_))).collect();
        let decl: Vec<String> = block_vars
            .iter()
            .map(|v| match v.label {
                VarLabel::Block(b) => format!("{}@{}", v.name, b),
                _ => unreachable!(),
            })
            .collect();
        out.push_str(&format!("vars: {}\n", decl.join(" ")));
        let defaults = first_primes(frame.generator_count());
        for (k, v) in block_vars.iter().enumerate() {
            let w = &frame.weights()[generator_index(frame, &v.value)];
            if *w != Weight::sqrt(defaults[k]) {
                out.push_str(&format!("weight {} = {}\n", v.name, w));
            }
        }
        out.push_str(&format!("field: {}\n", self.field));
        out.push_str(&format!("task: {}\n", self.kind));
        for (n, p) in &self.polys {
            out.push_str(&format!("poly {n}: {}\n", p.render(&names)));
        }
        for (z, p) in &self.relations {
            out.push_str(&format!("relation {z}: {}\n", p.render(&names)));
        }
        for b in &self.branch {
            out.push_str(&format!("branch: edge={} root={}\n", b.edge, b.root));
        }
        if self.order != DEFAULT_ORDER {
            out.push_str(&format!("order: {}\n", self.order));
        }
        if let Some(m) = self.max_steps {
            out.push_str(&format!("max-steps: {m}\n"));
        }
        out
    }
}

pub(crate) fn generator_index(frame: &ValuationFrame, v: &GroupValue) -> usize {
    let blocks = v.blocks().expect("generator value");
    let mut k = 0;
    for b in blocks {
        for &x in b {
            if x != 0 {
                return k;
            }
            k += 1;
        }
    }
    frame.generator_count()
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

fn parse_num<T: FromStr>(s: &str, line: usize, column: usize, what: &str) -> Result<T> {
    s.trim().parse::<T>().map_err(|_| perr(line, column, format!("expected {what}, found `{}`", s.trim())))
}

/// `c1*sqrt(p1) + c2*sqrt(p2) ...`; a bare rational stands for `c*sqrt(1)`.
fn parse_weight(text: &str, line: usize, column: usize) -> Result<Weight> {
    let mut terms = Vec::new();
    let mut rest = text.trim();
    let mut sign = BigRational::one();
    if rest.is_empty() {
        return Err(perr(line, column, "empty weight"));
    }
    loop {
        if let Some(r) = rest.strip_prefix('-') {
            sign = -sign;
            rest = r.trim_start();
            continue;
        }
        if let Some(r) = rest.strip_prefix('+') {
            rest = r.trim_start();
            continue;
        }
        let end = rest.find(['+', '-']).unwrap_or(rest.len());
        let term = rest[..end].trim();
        let (coef, rad) = match term.find("sqrt(") {
            Some(pos) => {
                let c = term[..pos].trim().trim_end_matches('*').trim();
                let inner = term[pos + 5..]
                    .strip_suffix(')')
                    .ok_or_else(|| perr(line, column, format!("unclosed sqrt in `{term}`")))?;
                let c = if c.is_empty() { BigRational::one() } else { parse_num::<BigRational>(c, line, column, "a rational")? };
                (c, parse_num::<u64>(inner, line, column, "a radicand")?)
            }
            None => (parse_num::<BigRational>(term, line, column, "a rational")?, 1),
        };
        terms.push((sign.clone() * coef, rad));
        sign = BigRational::one();
        rest = rest[end..].trim_start();
        if rest.is_empty() {
            break;
        }
    }
    Ok(Weight::new(terms))
}

struct Line<'a> {
    no: usize,
    key: &'a str,
    value: &'a str,
    value_col: usize,
}

pub fn parse_task(text: &str) -> Result<Task> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let split = if content.trim_start().starts_with("weight ") {
            content.find("weight").map(|p| (p + 6, p + 6))
        } else {
            content.find(':').map(|c| (c, c + 1))
        };
        let (key_end, value_start) = split.ok_or_else(|| perr(no, 1, "expected `key: value`"))?;
        let key = content[..key_end].trim();
        let value = &content[value_start..];
        let lead = value.len() - value.trim_start().len();
        lines.push(Line { no, key, value: value.trim(), value_col: value_start + 1 + lead });
    }

    let mut blocks: Option<Vec<usize>> = None;
    let mut decls: Vec<(String, usize, usize)> = Vec::new();
    let mut weights: Vec<(String, Weight, usize)> = Vec::new();
    let mut field = None;
    let mut kind = None;
    let mut polys_src: Vec<(String, &Line)> = Vec::new();
    let mut rel_src: Vec<(String, &Line)> = Vec::new();
    let mut branch = Vec::new();
    let mut order = DEFAULT_ORDER;
    let mut max_steps = None;

    for l in &lines {
        let (no, col) = (l.no, l.value_col);
        let mut words = l.key.split_whitespace();
        let head = words.next().unwrap_or("");
        let arg = words.next();
        if words.next().is_some() {
            return Err(perr(no, 1, format!("unexpected key `{}`", l.key)));
        }
        match (head, arg) {
            ("blocks", None) => {
                let sizes = l
                    .value
                    .split_whitespace()
                    .map(|s| parse_num::<usize>(s, no, col, "a block size"))
                    .collect::<Result<Vec<_>>>()?;
                blocks = Some(sizes);
            }
            ("vars", None) => {
                for d in l.value.split_whitespace() {
                    let (n, b) = d.split_once('@').ok_or_else(|| perr(no, col, format!("expected name@block, found `{d}`")))?;
                    decls.push((n.to_string(), parse_num::<usize>(b, no, col, "a block index")?, no));
                }
            }
            ("field", None) => {
                let v: Vec<&str> = l.value.split_whitespace().collect();
                field = Some(match v.as_slice() {
                    ["Q"] => CoefficientField::Rationals,
                    ["F", p] => CoefficientField::prime(parse_num::<u64>(p, no, col, "a prime")?)
                        .map_err(|e| perr(no, col, e.to_string()))?,
                    _ => return Err(perr(no, col, format!("expected `Q` or `F p`, found `{}`", l.value))),
                });
            }
            ("task", None) => kind = Some(l.value.parse::<TaskKind>().map_err(|m| perr(no, col, m))?),
            ("poly", Some(n)) => polys_src.push((n.to_string(), l)),
            ("relation", Some(n)) => rel_src.push((n.to_string(), l)),
            ("branch", None) => {
                let mut choice = BranchChoice::default();
                for part in l.value.split_whitespace() {
                    match part.split_once('=') {
                        Some(("edge", v)) => choice.edge = parse_num(v, no, col, "an edge index")?,
                        Some(("root", v)) => choice.root = parse_num(v, no, col, "a root index")?,
                        _ => return Err(perr(no, col, format!("expected edge=<k> or root=<i>, found `{part}`"))),
                    }
                }
                branch.push(choice);
            }
            ("order", None) => order = parse_num(l.value, no, col, "an order")?,
            ("max-steps", None) => max_steps = Some(parse_num(l.value, no, col, "a step count")?),
            ("weight", None) => {
                let (n, w) = l.value.split_once('=').ok_or_else(|| perr(no, col, "expected `weight name = ...`"))?;
                weights.push((n.trim().to_string(), parse_weight(w, no, col)?, no));
            }
            _ => return Err(perr(no, 1, format!("unknown key `{}`", l.key))),
        }
    }

    let blocks = blocks.ok_or_else(|| perr(0, 0, "missing `blocks:` line"))?;
    let field = field.unwrap_or(CoefficientField::Rationals);
    let kind = kind.ok_or_else(|| perr(0, 0, "missing `task:` line"))?;

    // Generators in block order; within a block, in declaration order.
    let mut per_block: Vec<Vec<&(String, usize, usize)>> = vec![Vec::new(); blocks.len()];
    for d in &decls {
        if d.1 == 0 || d.1 > blocks.len() {
            return Err(perr(d.2, 1, format!("block {} of `{}` out of range", d.1, d.0)));
        }
        per_block[d.1 - 1].push(d);
    }
    for (j, vs) in per_block.iter().enumerate() {
        if vs.len() != blocks[j] {
            return Err(perr(0, 0, format!("block {} declares {} variables, expected {}", j + 1, vs.len(), blocks[j])));
        }
    }
    let primes = first_primes(decls.len());
    let mut gen_weights = Vec::new();
    let mut vars = Vec::new();
    for (j, vs) in per_block.iter().enumerate() {
        for (k, d) in vs.iter().enumerate() {
            let pos = decls.iter().position(|x| std::ptr::eq(x, *d)).unwrap();
            let w = weights
                .iter()
                .find(|(n, _, _)| *n == d.0)
                .map(|(_, w, _)| w.clone())
                .unwrap_or_else(|| Weight::sqrt(primes[pos]));
            gen_weights.push(w);
            vars.push((d.0.clone(), j + 1, k));
        }
    }
    for (n, _, no) in &weights {
        if !decls.iter().any(|d| d.0 == *n) {
            return Err(perr(*no, 1, format!("weight for undeclared variable `{n}`")));
        }
    }
    let frame = Arc::new(ValuationFrame::new(blocks, gen_weights).map_err(|e| perr(0, 0, e.to_string()))?);
    // Declaration order for the chart.
    let mut chart_vars: Vec<Variable> = Vec::new();
    for d in &decls {
        let (_, b, k) = vars.iter().find(|(n, _, _)| *n == d.0).unwrap();
        chart_vars.push(Variable::new(d.0.clone(), frame.generator(*b, *k), VarLabel::Block(*b)));
    }
    for (z, _) in &rel_src {
        chart_vars.push(Variable::new(z.clone(), GroupValue::Infinite, VarLabel::Root));
    }
    let chart = Chart::new(frame, chart_vars, 1).map_err(|e| perr(0, 0, e.to_string()))?;
    let names = chart.names();
    let parse_expr = |l: &Line| Poly::parse_at(l.value, &names, field, l.no, l.value_col);
    let polys = polys_src.iter().map(|(n, l)| Ok((n.clone(), parse_expr(l)?))).collect::<Result<Vec<_>>>()?;
    let relations = rel_src.iter().map(|(n, l)| Ok((n.clone(), parse_expr(l)?))).collect::<Result<Vec<_>>>()?;
    if kind.uses_relations() && relations.is_empty() && kind != TaskKind::Uniformize {
        return Err(perr(0, 0, format!("task `{kind}` needs a `relation` line")));
    }
    Ok(Task { kind, field, chart, polys, relations, branch, order, max_steps })
}
