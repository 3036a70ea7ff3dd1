//! Task execution and log verification.

use std::cmp::Ordering;

use crate::chart::{Chart, Derivation, VarLabel};
use crate::error::{Error, Result};
use crate::log::{changed_vars, Claim, Failure, Log, LogStep, StageKind};
use crate::perron::{monomialize_element, monomialize_fraction, principalize};
use crate::poly::Poly;
use crate::reduction::{
    expand_root, newton_data, prepare_monic, reduce_once, series_certificate, series_of, BranchChoice,
    ReductionOutcome, StepReport, Termination,
};
use crate::task::{generator_index, Task, TaskKind};
use crate::value_group::GroupValue;

/// Result of running one task. `error` is set for failed runs; the log
/// then records the failure.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: Log,
    pub report: String,
    pub error: Option<Error>,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, Error::exit_code)
    }
}

fn log_steps(deriv: &Derivation) -> Result<Vec<LogStep>> {
    let mut chart = deriv.initial().clone();
    let mut out = Vec::new();
    for e in deriv.entries() {
        let next = chart.apply_step(&e.step)?;
        out.push(LogStep::from_charts(&e.step, &e.note, &chart, &next));
        chart = next;
    }
    Ok(out)
}

fn render_vars(chart: &Chart) -> String {
    chart
        .vars()
        .iter()
        .map(|v| match v.label {
            VarLabel::Block(_) => format!("{}={}", v.name, v.value),
            VarLabel::Prime => format!("{}={}(prime)", v.name, v.value),
            VarLabel::Root => format!("{}={}(root)", v.name, v.value),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn monomial_text(chart: &Chart, exps: &[u32]) -> String {
    let p = Poly::monomial(crate::field::CoefficientField::Rationals, chart.len(), exps.to_vec(), num_traits::One::one());
    p.render(&chart.names())
}

fn stage_kind(o: &ReductionOutcome) -> StageKind {
    match o {
        ReductionOutcome::Reduced { .. } => StageKind::Reduced,
        ReductionOutcome::Translated { .. } => StageKind::Translated,
        ReductionOutcome::NewVariable { .. } => StageKind::NewVariable,
    }
}

fn stage_mu(s: &StepReport) -> (u32, u32) {
    match &s.outcome {
        ReductionOutcome::Reduced { mu, .. } | ReductionOutcome::Translated { mu, .. } => (s.mu_before, *mu),
        ReductionOutcome::NewVariable { .. } => (1, 1),
    }
}

struct Computed {
    deriv: Derivation,
    claims: Vec<Claim>,
    lines: Vec<String>,
}

fn compute(task: &Task) -> Result<Computed> {
    let chart = &task.chart;
    let budget = task.budget();
    let level = task.level();
    let mut deriv = Derivation::new(chart.clone());
    let mut claims = Vec::new();
    let mut lines = Vec::new();
    match task.kind {
        TaskKind::Monomialize => {
            if task.polys.is_empty() {
                return Err(Error::precondition("monomialize needs at least one poly"));
            }
            for (_, f) in &task.polys {
                let fc = f.substitute(&deriv)?;
                let m = monomialize_element(&fc, deriv.final_chart(), &budget)?;
                deriv.extend(&m.derivation)?;
            }
            let fin = deriv.final_chart();
            for (n, f) in &task.polys {
                let img = f.substitute(&deriv)?;
                let exps = img.monomial_content();
                let unit = img.divide_by_monomial(&exps)?;
                if !unit.is_local_unit() {
                    return Err(Error::internal(format!("{n}: monomialization left a non-unit")));
                }
                lines.push(format!("{n} = {} * ({})", monomial_text(fin, &exps), unit.render_in(fin)?));
                claims.push(Claim::Monomial { poly: n.clone(), exponents: exps, unit: unit.render(&fin.names()) });
            }
        }
        TaskKind::Principalize => {
            let gens = task
                .polys
                .iter()
                .map(|(n, p)| {
                    p.as_monomial()
                        .map(|(e, _)| e.clone())
                        .ok_or_else(|| Error::precondition(format!("generator {n} is not a monomial")))
                })
                .collect::<Result<Vec<_>>>()?;
            if gens.is_empty() {
                return Err(Error::precondition("principalize needs at least one generator"));
            }
            let (d, g) = principalize(chart, &gens, &budget)?;
            deriv = d;
            lines.push(format!("principal generator: {}", monomial_text(deriv.final_chart(), &g)));
            claims.push(Claim::Generator { exponents: g });
        }
        TaskKind::Fraction => {
            let [(gn, g), (hn, h)] = task.polys.as_slice() else {
                return Err(Error::precondition("fraction needs exactly two polys, numerator then denominator"));
            };
            let r = monomialize_fraction(g, h, chart, &budget)?;
            deriv = r.derivation;
            let fin = deriv.final_chart();
            let exps: Vec<u32> = r.exponents.iter().map(|&x| x as u32).collect();
            lines.push(format!(
                "{gn}/{hn} = {} * ({}) / ({})",
                monomial_text(fin, &exps),
                r.numerator_unit.render_in(fin)?,
                r.denominator_unit.render_in(fin)?
            ));
            claims.push(Claim::Fraction {
                exponents: exps,
                numerator_unit: r.numerator_unit.render(&fin.names()),
                denominator_unit: r.denominator_unit.render(&fin.names()),
            });
        }
        TaskKind::Reduce => {
            let (z, f) = &task.relations[0];
            let nd = newton_data(f, chart, level, z)?;
            if nd.mu == 1 {
                lines.push(format!("{z}: NewVariable (mu = 1)"));
                claims.push(Claim::Stage {
                    relation: z.clone(),
                    kind: StageKind::NewVariable,
                    end: 0,
                    mu: Some((1, 1)),
                    slope: None,
                    divisor: vec![0; chart.len()],
                });
            } else {
                let choice = task.branch.first().copied().unwrap_or_default();
                let r = reduce_once(f, chart, level, z, choice, &budget)?;
                deriv = r.derivation.clone();
                let (f1, root) = match &r.outcome {
                    ReductionOutcome::Reduced { f, root, .. } | ReductionOutcome::Translated { f, root, .. } => (f, root),
                    ReductionOutcome::NewVariable { f, root } => (f, root),
                };
                let (a, b) = stage_mu(&r);
                lines.push(format!("{z}: {} mu {a} -> {b}, slope {}", r.outcome.tag(), r.slope));
                lines.push(format!("new relation in {root}: {}", f1.render_in(deriv.final_chart())?));
                claims.push(Claim::Stage {
                    relation: z.clone(),
                    kind: stage_kind(&r.outcome),
                    end: deriv.len(),
                    mu: Some((a, b)),
                    slope: Some(r.slope.clone()),
                    divisor: r.divisor.clone(),
                });
            }
        }
        TaskKind::Expand | TaskKind::Uniformize => {
            let prepare = task.kind == TaskKind::Uniformize;
            for (z, g) in &task.relations {
                let tag = |e: Error| match e {
                    Error::Precondition(m) => Error::Precondition(format!("{z}: {m}")),
                    Error::NotInMaximalIdeal(m) => Error::NotInMaximalIdeal(format!("{z}: {m}")),
                    other => other,
                };
                let zi = chart.index_of(z)?;
                let mut root = deriv.final_chart().vars()[zi].name.clone();
                let mut f = g.substitute(&deriv)?;
                if prepare {
                    let p = prepare_monic(&f, deriv.final_chart(), level, &root, &budget).map_err(tag)?;
                    if p.prepared {
                        let n = f.degree_in(zi).unwrap_or(0);
                        let mut divisor = vec![0; chart.len()];
                        for i in deriv.final_chart().block_vars(level) {
                            divisor[i] = n;
                        }
                        deriv.extend(&p.derivation)?;
                        claims.push(Claim::Stage {
                            relation: z.clone(),
                            kind: StageKind::Prepare,
                            end: deriv.len(),
                            mu: None,
                            slope: None,
                            divisor,
                        });
                        lines.push(format!("{z}: prepared as {}", p.poly.render_in(deriv.final_chart())?));
                    } else {
                        claims.push(Claim::Stage {
                            relation: z.clone(),
                            kind: StageKind::Unprepared,
                            end: deriv.len(),
                            mu: None,
                            slope: None,
                            divisor: vec![0; chart.len()],
                        });
                        lines.push(format!("{z}: unprepared"));
                    }
                    f = p.poly;
                    root = p.root;
                }
                let exp = expand_root(&f, deriv.final_chart(), level, &root, &task.branch, task.order, &budget).map_err(tag)?;
                let mut end = deriv.len();
                for s in &exp.steps {
                    end += s.derivation.len();
                    claims.push(Claim::Stage {
                        relation: z.clone(),
                        kind: stage_kind(&s.outcome),
                        end,
                        mu: Some(stage_mu(s)),
                        slope: Some(s.slope.clone()),
                        divisor: s.divisor.clone(),
                    });
                }
                deriv.extend(&exp.derivation)?;
                let series = series_of(task.field, z, &deriv, &exp.root)?;
                let fin = deriv.final_chart();
                let shown = series.render_in(fin)?;
                lines.push(match &exp.termination {
                    Termination::Exact => format!("{z} = {shown}   (exact, {} = {z} - series)", exp.root),
                    Termination::Truncated { bound } => format!("{z} = {shown} + O({bound})"),
                });
                claims.push(Claim::Series {
                    relation: z.clone(),
                    root: exp.root.clone(),
                    end: deriv.len(),
                    termination: exp.termination.clone(),
                    series: series.render(&fin.names()),
                });
            }
        }
        TaskKind::Verify => {
            for (n, f) in &task.polys {
                let v = f.valuation(chart)?;
                lines.push(format!("value({n}) = {v}"));
                claims.push(Claim::Value { poly: n.clone(), value: v });
            }
        }
    }
    Ok(Computed { deriv, claims, lines })
}

fn frame_text(task: &Task) -> String {
    let frame = task.frame();
    let sizes: Vec<String> = frame.block_sizes().iter().map(|r| r.to_string()).collect();
    let weights: Vec<String> = task
        .chart
        .vars()
        .iter()
        .filter(|v| matches!(v.label, VarLabel::Block(_)))
        .map(|v| format!("{}: {}", v.name, frame.weights()[generator_index(frame, &v.value)]))
        .collect();
    format!("blocks {}; weights {}", sizes.join(" "), weights.join(", "))
}

/// Runs a task. Mathematical failures are returned inside the result.
pub fn execute(task: &Task) -> RunResult {
    let mut report = vec![
        format!("task: {}", task.kind),
        format!("field: {}", task.field),
        format!("frame: {}", frame_text(task)),
        format!("initial chart: {}", render_vars(&task.chart)),
    ];
    let outcome = compute(task).and_then(|c| Ok((log_steps(&c.deriv)?, c)));
    match outcome {
        Ok((steps, c)) => {
            report.push(format!("steps: {}", steps.len()));
            report.push(format!("final chart: {}", render_vars(c.deriv.final_chart())));
            report.push("result:".into());
            report.extend(c.lines.iter().map(|l| format!("  {l}")));
            report.push("status: ok".into());
            RunResult {
                log: Log { task: task.kind, field: task.field, steps, claims: c.claims, failure: None },
                report: report.join("\n") + "\n",
                error: None,
            }
        }
        Err(e) => {
            report.push(format!("status: failed ({})", e.reason()));
            report.push(format!("message: {e}"));
            if let Error::StepCap { trace, .. } = &e {
                report.push("last steps:".into());
                report.extend(trace.iter().rev().take(20).rev().map(|t| format!("  {t}")));
            }
            RunResult {
                log: Log {
                    task: task.kind,
                    field: task.field,
                    steps: Vec::new(),
                    claims: Vec::new(),
                    failure: Some(Failure {
                        reason: e.reason().to_string(),
                        message: e.to_string().trim_start_matches(&format!("{}: ", e.reason())).to_string(),
                    }),
                },
                report: report.join("\n") + "\n",
                error: Some(e),
            }
        }
    }
}

fn fail(msg: impl Into<String>) -> Error {
    Error::Verify(msg.into())
}

fn slice(charts: &[Chart], log: &Log, a: usize, b: usize) -> Result<Derivation> {
    if a > b || b > log.steps.len() {
        return Err(fail(format!("stage range {a}..{b} outside the log")));
    }
    let mut d = Derivation::new(charts[a].clone());
    for s in &log.steps[a..b] {
        d.push(s.step.clone(), s.note.clone())?;
    }
    Ok(d)
}

struct RelState {
    relation: String,
    g: Poly,
    zi: usize,
    f: Poly,
    pos: usize,
    stage: usize,
    last_slope: Option<GroupValue>,
    mu: Option<u32>,
}

fn order_in(f: &Poly, zi: usize) -> Option<u32> {
    f.restrict_to_var(zi).iter().position(|c| !num_traits::Zero::is_zero(c)).map(|p| p as u32)
}

/// Replays `log` against `task` and re-checks every claim. Returns the
/// first failure as [`Error::Verify`] with a machine-readable reason.
pub fn verify(log: &Log, task: &Task) -> Result<()> {
    if log.task != task.kind {
        return Err(fail(format!("task mismatch: log is `{}`, task file is `{}`", log.task, task.kind)));
    }
    if log.field != task.field {
        return Err(fail("field mismatch"));
    }
    let mut charts = vec![task.chart.clone()];
    for (k, s) in log.steps.iter().enumerate() {
        let cur = charts.last().unwrap();
        let next = cur.apply_step(&s.step).map_err(|_| fail(format!("replay mismatch at step {}", k + 1)))?;
        if changed_vars(cur, &next) != s.assigned {
            return Err(fail(format!("replay mismatch at step {}", k + 1)));
        }
        charts.push(next);
    }
    let full = slice(&charts, log, 0, log.steps.len())?;
    let fin = charts.last().unwrap();
    let names = fin.names();
    let field = task.field;
    let level = task.level();

    if let Some(failure) = &log.failure {
        if !log.steps.is_empty() || !log.claims.is_empty() {
            return Err(fail("failed run carries steps or claims"));
        }
        return match compute(task) {
            Err(e) if e.reason() == failure.reason => Ok(()),
            Err(e) => Err(fail(format!("failure not reproduced: expected {}, got {}", failure.reason, e.reason()))),
            Ok(_) => Err(fail(format!("failure not reproduced: expected {}, run succeeded", failure.reason))),
        };
    }

    let parse = |text: &str| Poly::parse(text, &names, field).map_err(|e| fail(format!("unparsable claim polynomial: {e}")));
    let count = |pred: fn(&Claim) -> bool| log.claims.iter().filter(|c| pred(c)).count();
    match task.kind {
        TaskKind::Monomialize => {
            let claimed: Vec<&str> = log
                .claims
                .iter()
                .filter_map(|c| match c {
                    Claim::Monomial { poly, .. } => Some(poly.as_str()),
                    _ => None,
                })
                .collect();
            let expected: Vec<&str> = task.polys.iter().map(|(n, _)| n.as_str()).collect();
            if claimed != expected {
                return Err(fail("missing monomialization claims"));
            }
        }
        TaskKind::Principalize if count(|c| matches!(c, Claim::Generator { .. })) != 1 => {
            return Err(fail("missing generator claim"));
        }
        TaskKind::Fraction if count(|c| matches!(c, Claim::Fraction { .. })) != 1 => {
            return Err(fail("missing fraction claim"));
        }
        TaskKind::Reduce if count(|c| matches!(c, Claim::Stage { .. })) != 1 => {
            return Err(fail("reduce log needs exactly one stage claim"));
        }
        TaskKind::Expand | TaskKind::Uniformize => {
            let claimed: Vec<&str> = log
                .claims
                .iter()
                .filter_map(|c| match c {
                    Claim::Series { relation, .. } => Some(relation.as_str()),
                    _ => None,
                })
                .collect();
            let expected: Vec<&str> = task.relations.iter().map(|(n, _)| n.as_str()).collect();
            if claimed != expected {
                return Err(fail("missing series claims"));
            }
        }
        TaskKind::Verify if count(|c| matches!(c, Claim::Value { .. })) != task.polys.len() => {
            return Err(fail("missing value claims"));
        }
        _ => {}
    }

    let mut rel: Option<RelState> = None;
    let mut pos = 0usize;
    for claim in &log.claims {
        match claim {
            Claim::Monomial { poly, exponents, unit } => {
                let f = task.poly(poly).ok_or_else(|| fail(format!("unknown poly `{poly}`")))?;
                let u = parse(unit)?;
                if !u.is_local_unit() {
                    return Err(fail("unit check failed"));
                }
                if exponents.len() != fin.len() || f.substitute(&full)? != u.mul_monomial(exponents) {
                    return Err(fail(format!("monomial claim failed for {poly}")));
                }
            }
            Claim::Generator { exponents } => {
                if exponents.len() != fin.len() {
                    return Err(fail("generator has the wrong length"));
                }
                let mut min: Option<GroupValue> = None;
                for (n, p) in &task.polys {
                    let (e, _) = p.as_monomial().ok_or_else(|| fail(format!("{n} is not a monomial")))?;
                    let (img, _) = p.substitute(&full)?.as_monomial().map(|(e, c)| (e.clone(), c.clone())).ok_or_else(|| fail("image is not a monomial"))?;
                    if img.iter().zip(exponents).any(|(a, b)| a < b) {
                        return Err(fail(format!("divisibility check failed for {n}")));
                    }
                    let v = task.chart.monomial_value_nat(e)?;
                    min = Some(match min {
                        Some(m) if task.chart.compare(&m, &v)? != Ordering::Greater => m,
                        _ => v,
                    });
                }
                if Some(fin.monomial_value_nat(exponents)?) != min {
                    return Err(fail("generator value is not the minimum input value"));
                }
            }
            Claim::Fraction { exponents, numerator_unit, denominator_unit } => {
                let (ug, uh) = (parse(numerator_unit)?, parse(denominator_unit)?);
                if !ug.is_local_unit() || !uh.is_local_unit() {
                    return Err(fail("unit check failed"));
                }
                let (g, h) = (&task.polys[0].1, &task.polys[1].1);
                let lhs = g.substitute(&full)?.mul(&uh);
                let rhs = h.substitute(&full)?.mul(&ug).mul_monomial(exponents);
                if exponents.len() != fin.len() || lhs != rhs {
                    return Err(fail("fraction claim failed"));
                }
            }
            Claim::Value { poly, value } => {
                let f = task.poly(poly).ok_or_else(|| fail(format!("unknown poly `{poly}`")))?;
                if f.valuation(&task.chart)? != *value {
                    return Err(fail(format!("value claim failed for {poly}")));
                }
            }
            Claim::Stage { relation, kind, end, mu, slope, divisor } => {
                if rel.as_ref().map(|r| &r.relation) != Some(relation) {
                    let (_, g) = task
                        .relations
                        .iter()
                        .find(|(n, _)| n == relation)
                        .ok_or_else(|| fail(format!("unknown relation `{relation}`")))?;
                    let zi = task.chart.index_of(relation)?;
                    let f = g.substitute(&slice(&charts, log, 0, pos)?)?;
                    rel = Some(RelState { relation: relation.clone(), g: g.clone(), zi, f, pos, stage: 0, last_slope: None, mu: None });
                }
                let st = rel.as_mut().unwrap();
                let at = &charts[st.pos];
                let root = at.vars()[st.zi].name.clone();
                let sub = slice(&charts, log, st.pos, *end)?;
                let moved = st.f.substitute(&sub)?;
                let next = moved
                    .divide_by_monomial(divisor)
                    .map_err(|_| fail(format!("divisibility check failed at step {end}")))?;
                match kind {
                    StageKind::Prepare | StageKind::Unprepared => {
                        st.mu = None;
                        st.last_slope = None;
                    }
                    StageKind::NewVariable => {
                        let nd = newton_data(&st.f, at, level, &root)?;
                        if nd.mu != 1 || *end != st.pos {
                            return Err(fail("mu-drop check failed: NewVariable needs mu = 1"));
                        }
                    }
                    StageKind::Reduced | StageKind::Translated => {
                        let nd = newton_data(&st.f, at, level, &root)?;
                        let (before, after) = mu.ok_or_else(|| fail("stage without mu"))?;
                        let choice: BranchChoice = if task.kind == TaskKind::Reduce {
                            task.branch.first().copied().unwrap_or_default()
                        } else {
                            task.branch.get(st.stage).copied().unwrap_or_default()
                        };
                        let edge = nd.edges.get(choice.edge).ok_or_else(|| fail("edge choice out of range"))?;
                        let claimed = slope.as_ref().ok_or_else(|| fail("stage without slope"))?;
                        if nd.mu != before || st.mu.is_some_and(|m| m != before) {
                            return Err(fail(format!("mu-drop check failed at step {end}")));
                        }
                        if edge.slope().ok().as_ref() != Some(claimed) {
                            return Err(fail(format!("slope mismatch at step {end}")));
                        }
                        let new_zi = st.zi;
                        if order_in(&next, new_zi) != Some(after) {
                            return Err(fail(format!("mu-drop check failed at step {end}")));
                        }
                        let ok = match kind {
                            StageKind::Reduced => after < before,
                            _ => after == before,
                        };
                        if !ok {
                            return Err(fail(format!("mu-drop check failed at step {end}")));
                        }
                        if let Some(prev) = &st.last_slope {
                            if task.frame().compare(claimed, prev)? != Ordering::Greater {
                                return Err(fail(format!("value ascent failed at step {end}")));
                            }
                        }
                        st.last_slope = if *kind == StageKind::Translated { Some(claimed.clone()) } else { None };
                        st.mu = Some(after);
                        st.stage += 1;
                    }
                }
                st.f = next;
                st.pos = *end;
                pos = *end;
            }
            Claim::Series { relation, root, end, termination, series } => {
                let (_, g) = task
                    .relations
                    .iter()
                    .find(|(n, _)| n == relation)
                    .ok_or_else(|| fail(format!("unknown relation `{relation}`")))?;
                let started = rel.as_ref().is_some_and(|r| r.relation == *relation);
                let expect_end = if started { rel.as_ref().unwrap().pos } else { pos };
                if *end != expect_end {
                    return Err(fail(format!("series claim for {relation} does not close its stages")));
                }
                if let Some(st) = &rel {
                    if started && st.g != *g {
                        return Err(fail("relation mismatch"));
                    }
                }
                let prefix = slice(&charts, log, 0, *end)?;
                let names_at = prefix.final_chart().names();
                let claimed = Poly::parse(series, &names_at, field).map_err(|e| fail(format!("unparsable series: {e}")))?;
                if series_of(field, relation, &prefix, root)? != claimed {
                    return Err(fail(format!("series mismatch for {relation}")));
                }
                series_certificate(g, &prefix, root, termination, level)
                    .map_err(|e| fail(format!("certificate failed for {relation}: {e}")))?;
                rel = None;
                pos = *end;
            }
        }
    }
    if matches!(task.kind, TaskKind::Expand | TaskKind::Uniformize | TaskKind::Reduce) && pos != log.steps.len() {
        return Err(fail("steps after the last claim"));
    }
    Ok(())
}
