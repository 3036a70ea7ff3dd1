//! Coordinate charts and the transforms between them.
//!
//! A [`Chart`] is an ordered list of named variables, each with a value in
//! `Γ ∪ {∞}` and a label: a block variable `x_{j,k}`, a prime variable `y`
//! (infinite at the active level), or a root variable `z` whose value is a
//! branch hypothesis owned by the reduction algorithm (`∞` while it is
//! undetermined). Transform steps replace variables in place and give the
//! new variable a fresh name `base@generation`.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::Arc;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::linalg;
use crate::value_group::{GroupValue, Sign, ValuationFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarLabel {
    Block(usize),
    Prime,
    Root,
}

impl fmt::Display for VarLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarLabel::Block(j) => write!(f, "{j}"),
            VarLabel::Prime => write!(f, "prime"),
            VarLabel::Root => write!(f, "root"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub value: GroupValue,
    pub label: VarLabel,
}

impl Variable {
    pub fn new(name: impl Into<String>, value: GroupValue, label: VarLabel) -> Self {
        Variable { name: name.into(), value, label }
    }
}

/// Step limit and cooperative cancellation shared by the long-running
/// engines.
#[derive(Debug, Clone)]
pub struct Budget {
    pub max_steps: usize,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_steps: 1_000_000, cancel: None }
    }
}

impl Budget {
    pub fn with_max_steps(max_steps: usize) -> Self {
        Budget { max_steps, cancel: None }
    }

    pub fn check(&self, used: usize, context: &str, trace: impl FnOnce() -> Vec<String>) -> Result<()> {
        if let Some(flag) = &self.cancel {
            if flag.load(AtomicOrdering::Relaxed) {
                return Err(Error::Cancelled);
            }
        }
        if used > self.max_steps {
            return Err(Error::StepCap { cap: self.max_steps, context: context.to_string(), trace: trace() });
        }
        Ok(())
    }
}

pub fn base_name(name: &str) -> &str {
    name.split('@').next().unwrap_or(name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    frame: Arc<ValuationFrame>,
    vars: Vec<Variable>,
    level: usize,
    generation: usize,
}

impl Chart {
    pub fn new(frame: Arc<ValuationFrame>, vars: Vec<Variable>, level: usize) -> Result<Self> {
        let chart = Chart { frame, vars, level, generation: 0 };
        chart.validate()?;
        Ok(chart)
    }

    /// Chart whose block variables are the frame generators themselves,
    /// named `x{block}{index}` when there is more than one block and
    /// `x{index}` otherwise.
    pub fn standard(frame: Arc<ValuationFrame>) -> Result<Self> {
        let multi = frame.num_blocks() > 1;
        let mut vars = Vec::new();
        for block in 1..=frame.num_blocks() {
            for k in 0..frame.block_size(block) {
                let name = if multi { format!("x{}{}", block, k + 1) } else { format!("x{}", k + 1) };
                vars.push(Variable::new(name, frame.generator(block, k), VarLabel::Block(block)));
            }
        }
        Chart::new(frame, vars, 1)
    }

    pub fn with_extra(&self, extra: Vec<Variable>) -> Result<Self> {
        let mut vars = self.vars.clone();
        vars.extend(extra);
        let chart = Chart { frame: self.frame.clone(), vars, level: self.level, generation: self.generation };
        chart.validate()?;
        Ok(chart)
    }

    pub fn frame(&self) -> &ValuationFrame {
        &self.frame
    }

    pub fn frame_arc(&self) -> Arc<ValuationFrame> {
        self.frame.clone()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.iter().map(|v| v.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::precondition(format!("unknown variable `{name}`")))
    }

    pub fn value(&self, idx: usize) -> &GroupValue {
        &self.vars[idx].value
    }

    pub fn label(&self, idx: usize) -> VarLabel {
        self.vars[idx].label
    }

    /// Indices of the block-`block` variables, in chart order.
    pub fn block_vars(&self, block: usize) -> Vec<usize> {
        (0..self.vars.len()).filter(|&i| self.vars[i].label == VarLabel::Block(block)).collect()
    }

    pub fn vars_with_label(&self, label: VarLabel) -> Vec<usize> {
        (0..self.vars.len()).filter(|&i| self.vars[i].label == label).collect()
    }

    /// Value of the (possibly Laurent) monomial `Π x_k^{e_k}`; `∞` when a
    /// positive exponent sits on an infinite variable.
    pub fn monomial_value(&self, exps: &[i64]) -> Result<GroupValue> {
        if exps.len() != self.vars.len() {
            return Err(Error::precondition(format!(
                "exponent vector has length {}, chart has {} variables",
                exps.len(),
                self.vars.len()
            )));
        }
        let mut acc = self.frame.zero();
        for (e, var) in exps.iter().zip(&self.vars) {
            if *e == 0 {
                continue;
            }
            if var.value.is_infinite() {
                if *e < 0 {
                    return Err(Error::precondition(format!("negative exponent on infinite `{}`", var.name)));
                }
                return Ok(GroupValue::Infinite);
            }
            acc = acc.add(&var.value.scale(*e));
        }
        Ok(acc)
    }

    pub fn monomial_value_nat(&self, exps: &[u32]) -> Result<GroupValue> {
        let signed: Vec<i64> = exps.iter().map(|&e| e as i64).collect();
        self.monomial_value(&signed)
    }

    /// Comparison under `ν_level`.
    pub fn compare(&self, a: &GroupValue, b: &GroupValue) -> Result<Ordering> {
        self.frame.compare_at(a, b, self.level)
    }

    /// Checks the chart invariants: unique names, values conforming to the
    /// frame, a very good basis in every block at or above the level, block
    /// variables positive, prime variables infinite at the level.
    pub fn validate(&self) -> Result<()> {
        let frame = &self.frame;
        if self.level == 0 || self.level > frame.num_blocks() {
            return Err(Error::precondition(format!("level {} out of range", self.level)));
        }
        let mut seen = HashSet::new();
        for v in &self.vars {
            if v.name.is_empty() || !seen.insert(v.name.as_str()) {
                return Err(Error::precondition(format!("duplicate or empty variable name `{}`", v.name)));
            }
            if !frame.conforms(&v.value) {
                return Err(Error::Frame(format!("value of `{}` does not match the frame", v.name)));
            }
        }
        for block in 1..=frame.num_blocks() {
            let idx = self.block_vars(block);
            if block < self.level {
                if !idx.is_empty() {
                    return Err(Error::precondition(format!(
                        "block {block} lies below level {}",
                        self.level
                    )));
                }
                continue;
            }
            if idx.len() != frame.block_size(block) {
                return Err(Error::precondition(format!(
                    "block {block} needs {} variables, chart has {}",
                    frame.block_size(block),
                    idx.len()
                )));
            }
            let mut rows = Vec::new();
            for &i in &idx {
                let v = &self.vars[i];
                let Some(b) = v.value.blocks() else {
                    return Err(Error::precondition(format!("block variable `{}` has infinite value", v.name)));
                };
                if v.value.top_block() != Some(block) {
                    return Err(Error::precondition(format!(
                        "block variable `{}` has value {} outside block {block}",
                        v.name, v.value
                    )));
                }
                if frame.block_sign(block, &b[block - 1]) != Sign::Positive {
                    return Err(Error::precondition(format!("variable `{}` has nonpositive value", v.name)));
                }
                rows.push(b[block - 1].clone());
            }
            if !linalg::is_unit_det(&linalg::integer_determinant(&rows)) {
                return Err(Error::precondition(format!("block {block} values are not a ℤ-basis")));
            }
        }
        for v in &self.vars {
            if v.label == VarLabel::Prime && !frame.truncate_at_level(&v.value, self.level)?.is_infinite() {
                return Err(Error::precondition(format!(
                    "prime variable `{}` must be infinite at level {}",
                    v.name, self.level
                )));
            }
        }
        Ok(())
    }

    /// The chart seen at `level + 1`: block-`level` variables become units
    /// and are dropped.
    pub fn localize(&self) -> Result<Chart> {
        if self.level >= self.frame.num_blocks() {
            return Err(Error::precondition("cannot localize past the top level"));
        }
        let vars = self
            .vars
            .iter()
            .filter(|v| v.label != VarLabel::Block(self.level))
            .cloned()
            .collect();
        let chart = Chart { frame: self.frame.clone(), vars, level: self.level + 1, generation: self.generation };
        chart.validate()?;
        Ok(chart)
    }

    fn fresh_name(&self, old: &str) -> String {
        format!("{}@{}", base_name(old), self.generation + 1)
    }

    fn check_block(&self, block: usize, exps_len: usize) -> Result<Vec<usize>> {
        if block < self.level || block > self.frame.num_blocks() {
            return Err(Error::precondition(format!("block {block} not active in a level-{} chart", self.level)));
        }
        let idx = self.block_vars(block);
        if exps_len != idx.len() {
            return Err(Error::precondition(format!(
                "block {block} has {} variables, got {} exponents",
                idx.len(),
                exps_len
            )));
        }
        Ok(idx)
    }

    fn block_monomial_value(&self, block: usize, exps: &[u32]) -> Result<GroupValue> {
        let idx = self.check_block(block, exps.len())?;
        let mut full = vec![0i64; self.vars.len()];
        for (&i, &e) in idx.iter().zip(exps) {
            full[i] = e as i64;
        }
        self.monomial_value(&full)
    }

    /// Applies one transform step, returning the new chart. Every step
    /// precondition is checked here and reported by name.
    pub fn apply_step(&self, step: &TransformStep) -> Result<Chart> {
        let mut next = self.clone();
        next.generation += 1;
        let frame = &self.frame;
        match step {
            TransformStep::Primitive { target, divisor } => {
                let t = self.index_of(target)?;
                let d = self.index_of(divisor)?;
                if t == d {
                    return Err(Error::precondition("primitive: target equals divisor"));
                }
                for &i in &[t, d] {
                    if !matches!(self.vars[i].label, VarLabel::Block(_)) {
                        return Err(Error::precondition(format!(
                            "primitive: `{}` is not a block variable",
                            self.vars[i].name
                        )));
                    }
                }
                if self.compare(&self.vars[t].value, &self.vars[d].value)? != Ordering::Greater {
                    return Err(Error::precondition(format!(
                        "primitive: value({target}) must exceed value({divisor})"
                    )));
                }
                next.vars[t].name = self.fresh_name(target);
                next.vars[t].value = self.vars[t].value.sub(&self.vars[d].value);
            }
            TransformStep::Mono1 { block, matrix } => {
                let idx = self.check_block(*block, matrix.len())?;
                if matrix.iter().any(|row| row.len() != idx.len() || row.iter().any(|&a| a < 0)) {
                    return Err(Error::precondition("mono1: matrix must be square with natural entries"));
                }
                if !linalg::is_unit_det(&linalg::integer_determinant(matrix)) {
                    return Err(Error::precondition("mono1: determinant must be ±1"));
                }
                let inv = linalg::unimodular_inverse(matrix)
                    .ok_or_else(|| Error::internal("unimodular matrix without integer inverse"))?;
                for (l, row) in inv.iter().enumerate() {
                    let mut v = frame.zero();
                    for (k, &c) in row.iter().enumerate() {
                        if c != 0 {
                            v = v.add(&self.vars[idx[k]].value.scale(c));
                        }
                    }
                    if frame.sign(&v)? != Sign::Positive {
                        return Err(Error::precondition("mono1: transformed values must be positive"));
                    }
                    let i = idx[l];
                    next.vars[i].name = self.fresh_name(&self.vars[i].name);
                    next.vars[i].value = v;
                }
            }
            TransformStep::Mono2 { var, block, exponents } => {
                let u = self.index_of(var)?;
                let m = self.block_monomial_value(*block, exponents)?;
                let value = &self.vars[u].value;
                if matches!(self.vars[u].label, VarLabel::Block(l) if l <= *block) || self.vars[u].label == VarLabel::Root {
                    return Err(Error::precondition(format!("mono2: `{var}` is not above block {block}")));
                }
                if !frame.truncate_at_level(value, *block)?.is_infinite() {
                    return Err(Error::precondition(format!("mono2: `{var}` must be infinite at level {block}")));
                }
                next.vars[u].name = self.fresh_name(var);
                next.vars[u].value = value.sub(&m);
            }
            TransformStep::Mono3 { var, block, exponents } => {
                let u = self.index_of(var)?;
                let m = self.block_monomial_value(*block, exponents)?;
                let value = &self.vars[u].value;
                if matches!(self.vars[u].label, VarLabel::Block(_)) {
                    return Err(Error::precondition(format!("mono3: `{var}` is a block variable")));
                }
                if value.is_infinite() {
                    if self.vars[u].label != VarLabel::Root {
                        return Err(Error::precondition(format!("mono3: `{var}` has infinite value")));
                    }
                } else {
                    let same_top = frame.project(value, *block) == frame.project(&m, *block)
                        && value.top_block().is_none_or(|b| b <= *block);
                    if !same_top || self.compare(value, &m)? == Ordering::Less {
                        return Err(Error::precondition(format!(
                            "mono3: value({var}) must equal the monomial value at level {block}"
                        )));
                    }
                }
                next.vars[u].name = self.fresh_name(var);
                next.vars[u].value = value.sub(&m);
            }
            TransformStep::Mono4 { var, block, exponents } => {
                let u = self.index_of(var)?;
                let m = self.block_monomial_value(*block, exponents)?;
                let value = &self.vars[u].value;
                if matches!(self.vars[u].label, VarLabel::Block(_)) {
                    return Err(Error::precondition(format!("mono4: `{var}` is a block variable")));
                }
                if value.is_infinite() {
                    if self.vars[u].label != VarLabel::Root {
                        return Err(Error::precondition(format!("mono4: `{var}` has infinite value")));
                    }
                } else if value.top_block().is_some_and(|b| b > *block)
                    || self.compare(value, &m)? != Ordering::Greater
                {
                    return Err(Error::precondition(format!(
                        "mono4: value({var}) must exceed the monomial value"
                    )));
                }
                next.vars[u].name = self.fresh_name(var);
                next.vars[u].value = value.sub(&m);
            }
            TransformStep::Translate { var, exponents, .. } => {
                let u = self.index_of(var)?;
                if self.vars[u].label != VarLabel::Root {
                    return Err(Error::precondition(format!("translate: `{var}` is not a root variable")));
                }
                if exponents.len() != self.vars.len() || exponents[u] != 0 {
                    return Err(Error::precondition("translate: monomial must be over the other chart variables"));
                }
                next.vars[u].name = self.fresh_name(var);
                next.vars[u].value = GroupValue::Infinite;
            }
            TransformStep::Rename { from, to } => {
                let u = self.index_of(from)?;
                if to.is_empty() || self.vars.iter().any(|v| &v.name == to) {
                    return Err(Error::precondition(format!("rename: `{to}` is empty or taken")));
                }
                next.vars[u].name = to.clone();
            }
        }
        Ok(next)
    }
}

/// One transform. Variables are referred to by their current names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformStep {
    /// `target = target'·divisor`.
    Primitive { target: String, divisor: String },
    /// `x_{j,k} = Π_l x_{j,l}'^{a_{k,l}}`, `det(a) = ±1`.
    Mono1 { block: usize, matrix: Vec<Vec<i64>> },
    /// `u = Π x_{j,k}^{a_k}·u'` with `u` infinite at level `j`.
    Mono2 { var: String, block: usize, exponents: Vec<u32> },
    /// `y = Π x_{j,k}^{a_k}·y'` with equal value at level `j`.
    Mono3 { var: String, block: usize, exponents: Vec<u32> },
    /// `y = Π x_{j,k}^{a_k}·y'` with `ν(y)` strictly larger.
    Mono4 { var: String, block: usize, exponents: Vec<u32> },
    /// `var = var' + λ·Π x^{e}`.
    Translate { var: String, lambda: BigRational, exponents: Vec<u32> },
    Rename { from: String, to: String },
}

impl TransformStep {
    pub fn kind(&self) -> &'static str {
        match self {
            TransformStep::Primitive { .. } => "primitive",
            TransformStep::Mono1 { .. } => "mono1",
            TransformStep::Mono2 { .. } => "mono2",
            TransformStep::Mono3 { .. } => "mono3",
            TransformStep::Mono4 { .. } => "mono4",
            TransformStep::Translate { .. } => "translate",
            TransformStep::Rename { .. } => "rename",
        }
    }

    /// Name of the variable the step replaces, for single-variable steps.
    pub fn subject(&self) -> Option<&str> {
        match self {
            TransformStep::Primitive { target, .. } => Some(target),
            TransformStep::Mono2 { var, .. }
            | TransformStep::Mono3 { var, .. }
            | TransformStep::Mono4 { var, .. }
            | TransformStep::Translate { var, .. } => Some(var),
            TransformStep::Rename { from, .. } => Some(from),
            TransformStep::Mono1 { .. } => None,
        }
    }
}

fn render_vec<T: fmt::Display>(v: &[T]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(","))
}

impl fmt::Display for TransformStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformStep::Primitive { target, divisor } => write!(f, "primitive {target} {divisor}"),
            TransformStep::Mono1 { block, matrix } => {
                let rows: Vec<String> = matrix
                    .iter()
                    .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                    .collect();
                write!(f, "mono1 {block} [{}]", rows.join(";"))
            }
            TransformStep::Mono2 { var, block, exponents } => write!(f, "mono2 {var} {block} {}", render_vec(exponents)),
            TransformStep::Mono3 { var, block, exponents } => write!(f, "mono3 {var} {block} {}", render_vec(exponents)),
            TransformStep::Mono4 { var, block, exponents } => write!(f, "mono4 {var} {block} {}", render_vec(exponents)),
            TransformStep::Translate { var, lambda, exponents } => {
                let l = if lambda.is_integer() {
                    lambda.to_integer().to_string()
                } else {
                    format!("{}/{}", lambda.numer(), lambda.denom())
                };
                write!(f, "translate {var} {l} {}", render_vec(exponents))
            }
            TransformStep::Rename { from, to } => write!(f, "rename {from} {to}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationEntry {
    pub step: TransformStep,
    pub note: String,
}

/// An initial chart and an append-only list of steps; the final chart is
/// cached and always equals the replay of the steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    initial: Chart,
    entries: Vec<DerivationEntry>,
    current: Chart,
}

impl Derivation {
    pub fn new(initial: Chart) -> Self {
        Derivation { current: initial.clone(), initial, entries: Vec::new() }
    }

    pub fn initial(&self) -> &Chart {
        &self.initial
    }

    pub fn final_chart(&self) -> &Chart {
        &self.current
    }

    pub fn entries(&self) -> &[DerivationEntry] {
        &self.entries
    }

    pub fn steps(&self) -> impl Iterator<Item = &TransformStep> {
        self.entries.iter().map(|e| &e.step)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, step: TransformStep, note: impl Into<String>) -> Result<()> {
        self.current = self.current.apply_step(&step)?;
        self.entries.push(DerivationEntry { step, note: note.into() });
        Ok(())
    }

    /// Appends `other`, whose initial chart must be this derivation's final
    /// chart.
    pub fn extend(&mut self, other: &Derivation) -> Result<()> {
        if other.initial != self.current {
            return Err(Error::internal("derivations do not compose: chart mismatch"));
        }
        self.entries.extend(other.entries.iter().cloned());
        self.current = other.current.clone();
        Ok(())
    }

    /// The prefix consisting of the first `n` steps.
    pub fn prefix(&self, n: usize) -> Result<Derivation> {
        let mut d = Derivation::new(self.initial.clone());
        for e in &self.entries[..n] {
            d.push(e.step.clone(), e.note.clone())?;
        }
        Ok(d)
    }

    /// Replays every step from the initial chart.
    pub fn replay(&self) -> Result<Chart> {
        let mut chart = self.initial.clone();
        for e in &self.entries {
            chart = chart.apply_step(&e.step)?;
        }
        Ok(chart)
    }

    pub fn has_translate(&self) -> bool {
        self.steps().any(|s| matches!(s, TransformStep::Translate { .. }))
    }

    /// Exponent vector, in final-chart variables, of the monomial with
    /// exponents `exps` over initial-chart variables.
    pub fn monomial_image(&self, exps: &[i64]) -> Result<Vec<i64>> {
        if exps.len() != self.initial.len() {
            return Err(Error::precondition("exponent vector does not match the initial chart"));
        }
        let mut e = exps.to_vec();
        let mut chart = self.initial.clone();
        for entry in &self.entries {
            match &entry.step {
                TransformStep::Primitive { target, divisor } => {
                    let t = chart.index_of(target)?;
                    let d = chart.index_of(divisor)?;
                    e[d] += e[t];
                }
                TransformStep::Mono1 { block, matrix } => {
                    let idx = chart.block_vars(*block);
                    let old: Vec<i64> = idx.iter().map(|&i| e[i]).collect();
                    for (l, &i) in idx.iter().enumerate() {
                        e[i] = (0..idx.len()).map(|k| old[k] * matrix[k][l]).sum();
                    }
                }
                TransformStep::Mono2 { var, block, exponents }
                | TransformStep::Mono3 { var, block, exponents }
                | TransformStep::Mono4 { var, block, exponents } => {
                    let u = chart.index_of(var)?;
                    let eu = e[u];
                    for (&i, &a) in chart.block_vars(*block).iter().zip(exponents) {
                        e[i] += eu * a as i64;
                    }
                }
                TransformStep::Translate { .. } => {
                    return Err(Error::precondition(
                        "monomials are not stable under translation; substitute the polynomial instead",
                    ))
                }
                TransformStep::Rename { .. } => {}
            }
            chart = chart.apply_step(&entry.step)?;
        }
        Ok(e)
    }

    /// Matrix whose row `k` is the image of the `k`-th unit vector.
    pub fn exponent_matrix(&self) -> Result<Vec<Vec<i64>>> {
        let n = self.initial.len();
        (0..n)
            .map(|k| {
                let mut unit = vec![0; n];
                unit[k] = 1;
                self.monomial_image(&unit)
            })
            .collect()
    }
}
