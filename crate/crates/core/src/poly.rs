//! Sparse exact polynomials over a [`CoefficientField`], positional over the
//! variables of a chart.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::chart::{Chart, Derivation, TransformStep};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::value_group::GroupValue;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    field: CoefficientField,
    nvars: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

impl Poly {
    pub fn zero(field: CoefficientField, nvars: usize) -> Self {
        Poly { field, nvars, terms: BTreeMap::new() }
    }

    pub fn constant(field: CoefficientField, nvars: usize, c: BigRational) -> Self {
        Poly::monomial(field, nvars, vec![0; nvars], c)
    }

    pub fn one(field: CoefficientField, nvars: usize) -> Self {
        Poly::constant(field, nvars, BigRational::one())
    }

    pub fn monomial(field: CoefficientField, nvars: usize, exps: Vec<u32>, c: BigRational) -> Self {
        assert_eq!(exps.len(), nvars, "exponent arity");
        let mut p = Poly::zero(field, nvars);
        p.add_term(exps, c);
        p
    }

    pub fn var(field: CoefficientField, nvars: usize, idx: usize) -> Self {
        let mut e = vec![0; nvars];
        e[idx] = 1;
        Poly::monomial(field, nvars, e, BigRational::one())
    }

    pub fn from_terms(
        field: CoefficientField,
        nvars: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, BigRational)>,
    ) -> Self {
        let mut p = Poly::zero(field, nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent arity");
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, exps: Vec<u32>, c: BigRational) {
        let c = self.field.normalize(c);
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = self.field.add(o.get(), &c);
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn field(&self) -> CoefficientField {
        self.field
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exps: &[u32]) -> BigRational {
        self.terms.get(exps).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn constant_term(&self) -> BigRational {
        self.coefficient(&vec![0; self.nvars])
    }

    /// Unit of the local ring at the origin: nonzero constant term.
    pub fn is_local_unit(&self) -> bool {
        !self.constant_term().is_zero()
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    /// Exponents and coefficient of a single-term polynomial.
    pub fn as_monomial(&self) -> Option<(&Vec<u32>, &BigRational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    fn check_compat(&self, other: &Poly) {
        assert_eq!(self.field, other.field, "field mismatch");
        assert_eq!(self.nvars, other.nvars, "arity mismatch");
    }

    pub fn add(&self, other: &Poly) -> Poly {
        self.check_compat(other);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        self.scale(&BigRational::from_integer(BigInt::from(-1)))
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        Poly::from_terms(self.field, self.nvars, self.terms.iter().map(|(e, a)| (e.clone(), a * c)))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        self.check_compat(other);
        let mut out = Poly::zero(self.field, self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }

    pub fn mul_monomial(&self, exps: &[u32]) -> Poly {
        Poly::from_terms(
            self.field,
            self.nvars,
            self.terms.iter().map(|(e, c)| (e.iter().zip(exps).map(|(a, b)| a + b).collect(), c.clone())),
        )
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut acc = Poly::one(self.field, self.nvars);
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Appends `extra` variables with exponent zero.
    pub fn extend_vars(&self, extra: usize) -> Poly {
        Poly::from_terms(
            self.field,
            self.nvars + extra,
            self.terms.iter().map(|(e, c)| {
                let mut e = e.clone();
                e.resize(self.nvars + extra, 0);
                (e, c.clone())
            }),
        )
    }

    pub fn degree_in(&self, var: usize) -> Option<u32> {
        self.terms.keys().map(|e| e[var]).max()
    }

    /// Coefficients `a_j` with `f = Σ a_j·var^j`; each `a_j` is free of `var`.
    pub fn coeffs_in(&self, var: usize) -> Vec<Poly> {
        let deg = self.degree_in(var).unwrap_or(0) as usize;
        let mut out = vec![Poly::zero(self.field, self.nvars); deg + 1];
        for (e, c) in &self.terms {
            let j = e[var] as usize;
            let mut e = e.clone();
            e[var] = 0;
            out[j].add_term(e, c.clone());
        }
        out
    }

    /// `Σ coeffs[j]·var^j`.
    pub fn from_coeffs_in(var: usize, coeffs: &[Poly]) -> Poly {
        let first = coeffs.first().expect("at least one coefficient");
        let mut out = Poly::zero(first.field, first.nvars);
        for (j, a) in coeffs.iter().enumerate() {
            for (e, c) in &a.terms {
                let mut e = e.clone();
                e[var] += j as u32;
                out.add_term(e, c.clone());
            }
        }
        out
    }

    /// Coefficients of `f(0,…,0,var,0,…)` by degree in `var`.
    pub fn restrict_to_var(&self, var: usize) -> Vec<BigRational> {
        let deg = self.degree_in(var).unwrap_or(0) as usize;
        let mut out = vec![BigRational::zero(); deg + 1];
        for (e, c) in &self.terms {
            if e.iter().enumerate().all(|(k, &x)| k == var || x == 0) {
                out[e[var] as usize] = c.clone();
            }
        }
        while out.len() > 1 && out.last().is_some_and(|c| c.is_zero()) {
            out.pop();
        }
        out
    }

    fn check_chart(&self, chart: &Chart) -> Result<()> {
        if chart.len() != self.nvars {
            return Err(Error::precondition(format!(
                "polynomial has {} variables, chart has {}",
                self.nvars,
                chart.len()
            )));
        }
        Ok(())
    }

    fn term_value(chart: &Chart, exps: &[u32], level: usize) -> Result<GroupValue> {
        chart.frame().truncate_at_level(&chart.monomial_value_nat(exps)?, level)
    }

    /// `ν̄_level(f)`: the minimum over the support of the truncated monomial
    /// values, `∞` for the zero polynomial.
    pub fn value_of(&self, chart: &Chart, level: usize) -> Result<GroupValue> {
        self.check_chart(chart)?;
        let frame = chart.frame();
        let mut best = GroupValue::Infinite;
        for e in self.terms.keys() {
            let v = Self::term_value(chart, e, level)?;
            if frame.compare(&v, &best)? == Ordering::Less {
                best = v;
            }
        }
        Ok(best)
    }

    /// `ν_level(f)` for the chart's own level, keeping higher blocks: the
    /// minimum of the projected monomial values.
    pub fn valuation(&self, chart: &Chart) -> Result<GroupValue> {
        self.check_chart(chart)?;
        let frame = chart.frame();
        let level = chart.level();
        let mut best = GroupValue::Infinite;
        for e in self.terms.keys() {
            let v = frame.project(&chart.monomial_value_nat(e)?, level);
            if frame.compare(&v, &best)? == Ordering::Less {
                best = v;
            }
        }
        Ok(best)
    }

    /// Sum of the terms attaining [`Self::value_of`].
    pub fn initial_form(&self, chart: &Chart, level: usize) -> Result<Poly> {
        if self.is_zero() {
            return Err(Error::precondition("initial form of the zero polynomial"));
        }
        let min = self.value_of(chart, level)?;
        let mut out = Poly::zero(self.field, self.nvars);
        for (e, c) in &self.terms {
            if Self::term_value(chart, e, level)? == min {
                out.add_term(e.clone(), c.clone());
            }
        }
        Ok(out)
    }

    /// Exact quotient by `Π x^{exps}`; the error names the first term the
    /// monomial does not divide.
    pub fn divide_by_monomial(&self, exps: &[u32]) -> Result<Poly> {
        let exps: Vec<u32> = if exps.is_empty() { vec![0; self.nvars] } else { exps.to_vec() };
        if exps.len() != self.nvars {
            return Err(Error::precondition("monomial arity mismatch"));
        }
        let mut out = Poly::zero(self.field, self.nvars);
        for (e, c) in &self.terms {
            if e.iter().zip(&exps).any(|(a, b)| a < b) {
                return Err(Error::NotDivisible { witness: e.clone() });
            }
            out.terms.insert(e.iter().zip(&exps).map(|(a, b)| a - b).collect(), c.clone());
        }
        Ok(out)
    }

    /// Largest monomial dividing every term.
    pub fn monomial_content(&self) -> Vec<u32> {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else {
            return vec![0; self.nvars];
        };
        let mut g = first.clone();
        for e in it {
            for (a, b) in g.iter_mut().zip(e) {
                *a = (*a).min(*b);
            }
        }
        g
    }

    /// Image under one step applied to `chart` (the chart before the step).
    pub fn substitute_step(&self, chart: &Chart, step: &TransformStep) -> Result<Poly> {
        self.check_chart(chart)?;
        let field = self.field;
        let mut out = Poly::zero(field, self.nvars);
        match step {
            TransformStep::Primitive { target, divisor } => {
                let t = chart.index_of(target)?;
                let d = chart.index_of(divisor)?;
                for (e, c) in &self.terms {
                    let mut e = e.clone();
                    e[d] += e[t];
                    out.add_term(e, c.clone());
                }
            }
            TransformStep::Mono1 { block, matrix } => {
                let idx = chart.block_vars(*block);
                for (e, c) in &self.terms {
                    let mut n = e.clone();
                    for (l, &i) in idx.iter().enumerate() {
                        n[i] = (0..idx.len()).map(|k| e[idx[k]] * matrix[k][l] as u32).sum();
                    }
                    out.add_term(n, c.clone());
                }
            }
            TransformStep::Mono2 { var, block, exponents }
            | TransformStep::Mono3 { var, block, exponents }
            | TransformStep::Mono4 { var, block, exponents } => {
                let u = chart.index_of(var)?;
                let idx = chart.block_vars(*block);
                for (e, c) in &self.terms {
                    let mut e = e.clone();
                    let eu = e[u];
                    for (&i, &a) in idx.iter().zip(exponents) {
                        e[i] += eu * a;
                    }
                    out.add_term(e, c.clone());
                }
            }
            TransformStep::Translate { var, lambda, exponents } => {
                let u = chart.index_of(var)?;
                let lambda = field.try_normalize(lambda.clone())?;
                for (e, c) in &self.terms {
                    let n = e[u];
                    for m in 0..=n {
                        let k = n - m;
                        let coef = field.mul(&field.mul(c, &field.binomial(n, m)), &field.pow(&lambda, k));
                        let mut ne = e.clone();
                        ne[u] = m;
                        for (x, &a) in ne.iter_mut().zip(exponents) {
                            *x += a * k;
                        }
                        out.add_term(ne, coef);
                    }
                }
            }
            TransformStep::Rename { .. } => return Ok(self.clone()),
        }
        Ok(out)
    }

    /// Exact image of `f` in the final chart of `derivation`.
    pub fn substitute(&self, derivation: &Derivation) -> Result<Poly> {
        let mut chart = derivation.initial().clone();
        let mut f = self.clone();
        for step in derivation.steps() {
            f = f.substitute_step(&chart, step)?;
            chart = chart.apply_step(step)?;
        }
        Ok(f)
    }

    fn render_terms<'a>(&self, names: &[String], order: impl Iterator<Item = (&'a Vec<u32>, &'a BigRational)>) -> String {
        let mut s = String::new();
        for (i, (e, c)) in order.enumerate() {
            let negative = self.field.is_negative_repr(c);
            let abs = if negative { -c.clone() } else { c.clone() };
            if i == 0 {
                if negative {
                    s.push('-');
                }
            } else {
                s.push_str(if negative { " - " } else { " + " });
            }
            let mut factors = Vec::new();
            if !abs.is_one() || e.iter().all(|&x| x == 0) {
                factors.push(self.field.render(&abs));
            }
            for (k, &x) in e.iter().enumerate() {
                match x {
                    0 => {}
                    1 => factors.push(names[k].clone()),
                    _ => factors.push(format!("{}^{}", names[k], x)),
                }
            }
            let _ = write!(s, "{}", factors.join("*"));
        }
        if s.is_empty() {
            s.push('0');
        }
        s
    }

    /// Terms in lexicographic exponent order.
    pub fn render(&self, names: &[String]) -> String {
        assert_eq!(names.len(), self.nvars, "name arity");
        self.render_terms(names, self.terms.iter())
    }

    /// Canonical text: terms by ascending value in the chart, ties broken
    /// lexicographically on the exponent vector.
    pub fn render_in(&self, chart: &Chart) -> Result<String> {
        self.check_chart(chart)?;
        let frame = chart.frame();
        let mut keyed = Vec::with_capacity(self.terms.len());
        for (e, c) in &self.terms {
            keyed.push((frame.project(&chart.monomial_value_nat(e)?, chart.level()), e, c));
        }
        let mut err = None;
        keyed.sort_by(|a, b| {
            frame
                .compare(&a.0, &b.0)
                .unwrap_or_else(|e| {
                    err = Some(e);
                    Ordering::Equal
                })
                .then_with(|| a.1.cmp(b.1))
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(self.render_terms(&chart.names(), keyed.into_iter().map(|(_, e, c)| (e, c))))
    }

    pub fn parse(text: &str, names: &[String], field: CoefficientField) -> Result<Poly> {
        Poly::parse_at(text, names, field, 1, 1)
    }

    /// Parses `text`, reporting errors relative to `line` and the column of
    /// its first character.
    pub fn parse_at(text: &str, names: &[String], field: CoefficientField, line: usize, column: usize) -> Result<Poly> {
        Parser { chars: text.chars().collect(), pos: 0, line, column, names, field }.parse()
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    names: &'a [String],
    field: CoefficientField,
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '@' || c == '\''
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, column: self.column + self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn integer(&mut self) -> Result<BigInt> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a number"));
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse().map_err(|_| self.err("bad integer"))
    }

    fn name(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && is_name_char(self.chars[self.pos]) {
            self.pos += 1;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        self.names.iter().position(|n| *n == s).ok_or_else(|| {
            self.pos = start;
            self.err(format!("unknown variable `{s}`"))
        })
    }

    fn factor(&mut self, exps: &mut [u32], coef: &mut BigRational) -> Result<()> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() => {
                let n = self.integer()?;
                let mut v = BigRational::from_integer(n);
                if self.peek() == Some('/') {
                    self.pos += 1;
                    let d = self.integer()?;
                    if d.is_zero() {
                        return Err(self.err("zero denominator"));
                    }
                    v /= BigRational::from_integer(d);
                }
                *coef *= v;
            }
            Some(c) if is_name_start(c) => {
                let k = self.name()?;
                let mut e = 1u32;
                if self.peek() == Some('^') {
                    self.pos += 1;
                    let n = self.integer()?;
                    e = u32::try_from(n).map_err(|_| self.err("exponent too large"))?;
                }
                exps[k] += e;
            }
            Some(c) => return Err(self.err(format!("unexpected `{c}`"))),
            None => return Err(self.err("unexpected end of input")),
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Poly> {
        let n = self.names.len();
        let mut poly = Poly::zero(self.field, n);
        let mut first = true;
        loop {
            let mut sign = BigRational::one();
            match self.peek() {
                None if !first => break,
                None => return Err(self.err("empty polynomial")),
                Some('+') if !first => self.pos += 1,
                Some('-') => {
                    self.pos += 1;
                    sign = -sign;
                }
                Some(c) if !first => return Err(self.err(format!("expected `+` or `-`, found `{c}`"))),
                _ => {}
            }
            first = false;
            let mut exps = vec![0u32; n];
            let mut coef = sign;
            self.factor(&mut exps, &mut coef)?;
            while self.peek() == Some('*') {
                self.pos += 1;
                self.factor(&mut exps, &mut coef)?;
            }
            let c = self.field.try_normalize(coef).map_err(|e| self.err(e.to_string()))?;
            poly.add_term(exps, c);
        }
        Ok(poly)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{VarLabel, Variable};
    use crate::value_group::{ValuationFrame, Weight};
    use std::sync::Arc;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn chart2() -> Chart {
        let frame = Arc::new(ValuationFrame::new(vec![2], vec![Weight::sqrt(2), Weight::sqrt(3)]).unwrap());
        Chart::standard(frame).unwrap()
    }

    #[test]
    fn value_and_initial_form() {
        let chart = chart2();
        let q = CoefficientField::Rationals;
        let n = chart.names();
        let f = Poly::parse("x1 + x2", &n, q).unwrap();
        assert_eq!(f.value_of(&chart, 1).unwrap(), chart.vars()[0].value);
        assert!(Poly::zero(q, 2).value_of(&chart, 1).unwrap().is_infinite());
        let g = Poly::parse("3*x1^2*x2 + x1^5", &n, q).unwrap();
        assert_eq!(g.initial_form(&chart, 1).unwrap(), Poly::parse("3*x1^2*x2", &n, q).unwrap());
        assert!(Poly::zero(q, 2).initial_form(&chart, 1).is_err());
    }

    #[test]
    fn block_two_term_ignored_at_level_one() {
        let frame = Arc::new(ValuationFrame::with_default_weights(vec![1, 1]).unwrap());
        let chart = Chart::standard(frame).unwrap();
        let f = Poly::parse("x21 + x11", &chart.names(), CoefficientField::Rationals).unwrap();
        let v = f.value_of(&chart, 1).unwrap();
        assert_eq!(v, chart.frame().truncate_at_level(&chart.vars()[0].value, 1).unwrap());
    }

    #[test]
    fn division() {
        let q = CoefficientField::Rationals;
        let n = names(&["x1", "x2"]);
        let f = Poly::parse("x1^2 + x1*x2", &n, q).unwrap();
        assert_eq!(f.divide_by_monomial(&[1, 0]).unwrap(), Poly::parse("x1 + x2", &n, q).unwrap());
        assert_eq!(f.divide_by_monomial(&[]).unwrap(), f);
        let x1 = Poly::parse("x1", &n, q).unwrap();
        assert_eq!(x1.divide_by_monomial(&[2, 0]), Err(Error::NotDivisible { witness: vec![1, 0] }));
    }

    #[test]
    fn local_units() {
        let n = names(&["x1", "x2"]);
        assert!(Poly::parse("1 + x1", &n, CoefficientField::Rationals).unwrap().is_local_unit());
        assert!(!Poly::parse("x1", &n, CoefficientField::Rationals).unwrap().is_local_unit());
        let f5 = CoefficientField::prime(5).unwrap();
        assert!(Poly::parse("2 + x1*x2 - x2^3", &n, f5).unwrap().is_local_unit());
    }

    #[test]
    fn substitution_through_translate() {
        let frame = Arc::new(ValuationFrame::with_default_weights(vec![1]).unwrap());
        let chart = Chart::standard(frame)
            .unwrap()
            .with_extra(vec![Variable::new("z", GroupValue::Infinite, VarLabel::Root)])
            .unwrap();
        let q = CoefficientField::Rationals;
        let f = Poly::parse("z^2 - x1^2", &chart.names(), q).unwrap();
        let mut d = Derivation::new(chart);
        d.push(TransformStep::Mono3 { var: "z".into(), block: 1, exponents: vec![1] }, "t").unwrap();
        d.push(
            TransformStep::Translate { var: "z@1".into(), lambda: BigRational::one(), exponents: vec![0, 0] },
            "t",
        )
        .unwrap();
        let g = f.substitute(&d).unwrap();
        let expect = Poly::parse("x1^2*z^2 + 2*x1^2*z", &names(&["x1", "z"]), q).unwrap();
        assert_eq!(g, expect);
    }

    #[test]
    fn parse_errors_carry_position() {
        let n = names(&["x1"]);
        match Poly::parse("x1 + + 2", &n, CoefficientField::Rationals) {
            Err(Error::Parse { line: 1, column: 6, .. }) => {}
            other => panic!("{other:?}"),
        }
        match Poly::parse_at("x1 + y", &n, CoefficientField::Rationals, 4, 10) {
            Err(Error::Parse { line: 4, column: 15, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_rendering_round_trips() {
        let chart = chart2();
        let q = CoefficientField::Rationals;
        let f = Poly::parse("x1^5 - 1/2*x1^2*x2 + 3", &chart.names(), q).unwrap();
        let text = f.render_in(&chart).unwrap();
        assert_eq!(text, "3 - 1/2*x1^2*x2 + x1^5");
        assert_eq!(Poly::parse(&text, &chart.names(), q).unwrap(), f);
    }
}
