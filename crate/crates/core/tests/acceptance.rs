//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always show.

mod common;

use std::cmp::Ordering;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vforge::chart::{Derivation, TransformStep};
use vforge::log::parse_log;
use vforge::perron::{dominate, monomialize_element, principalize};
use vforge::reduction::{check_certificate, expand_root, newton_data, residue_roots, BranchChoice, Termination};
use vforge::runner::{execute, verify};
use vforge::task::{parse_task, Task};
use vforge::{CoefficientField, GroupValue};

const PRIMES: [u64; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(failures: &[String], summary: String) -> Self {
        let detail = match failures.first() {
            None => summary,
            Some(first) => format!("{summary}; {} failures, first: {first}", failures.len()),
        };
        Outcome { pass: failures.is_empty(), detail }
    }
}

/// Tasks whose logs criterion 8 replays.
#[derive(Default)]
struct Corpus {
    tasks: Vec<(String, Task)>,
}

impl Corpus {
    fn add(&mut self, label: String, task: &Task) {
        self.tasks.push((label, task.clone()));
    }
}

/// Random block sizes (at most `max_blocks` blocks of at most 3 variables)
/// with √prime weights distinct inside each block. Returns the task header
/// lines and the variable names in file order.
fn random_header(rng: &mut ChaCha8Rng, max_blocks: usize, field: &str) -> (String, Vec<String>) {
    let t = rng.gen_range(1..=max_blocks);
    let sizes: Vec<usize> = (0..t).map(|_| rng.gen_range(1..=3)).collect();
    let mut names = Vec::new();
    let mut decl = Vec::new();
    let mut weights = String::new();
    for (b, &r) in sizes.iter().enumerate() {
        let primes: Vec<u64> = PRIMES.choose_multiple(rng, r).copied().collect();
        for (k, p) in primes.iter().enumerate() {
            let n = format!("x{}{}", b + 1, k + 1);
            decl.push(format!("{n}@{}", b + 1));
            weights.push_str(&format!("weight {n} = 1*sqrt({p})\n"));
            names.push(n);
        }
    }
    let sizes: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    let header = format!("blocks: {}\nvars: {}\n{weights}field: {field}\n", sizes.join(" "), decl.join(" "));
    (header, names)
}

fn mono_text(names: &[String], exps: &[u32]) -> String {
    let parts: Vec<String> = names
        .iter()
        .zip(exps)
        .filter(|(_, &e)| e > 0)
        .map(|(n, e)| format!("{n}^{e}"))
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

fn random_exps(rng: &mut ChaCha8Rng, n: usize, max: u32) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(0..=max)).collect()
}

fn nonneg(v: &[i64]) -> bool {
    v.iter().all(|&e| e >= 0)
}

fn criterion_1(rng: &mut ChaCha8Rng, corpus: &mut Corpus) -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut steps = 0;
    for case in 0..200 {
        let (header, names) = random_header(rng, 3, "Q");
        let (m1, m2) = (random_exps(rng, names.len(), 10), random_exps(rng, names.len(), 10));
        let probe = parse_task(&format!("{header}task: fraction\npoly g: 1\npoly h: 1\n")).unwrap();
        let c = &probe.chart;
        let (v1, v2) = (c.monomial_value_nat(&m1).unwrap(), c.monomial_value_nat(&m2).unwrap());
        let (lo, hi) = if c.compare(&v1, &v2).unwrap() == Ordering::Greater { (m2, m1) } else { (m1, m2) };
        match dominate(c, &lo, &hi, &probe.budget()) {
            Ok(d) => {
                steps += d.len();
                let diff: Vec<i64> = hi.iter().zip(&lo).map(|(&h, &l)| h as i64 - l as i64).collect();
                let img = d.monomial_image(&diff).unwrap();
                if !nonneg(&img) || d.replay().ok().as_ref() != Some(d.final_chart()) {
                    failures.push(format!("case {case}: image {img:?}"));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
        let text = format!(
            "{header}task: fraction\npoly g: {}\npoly h: {}\n",
            mono_text(&names, &hi),
            mono_text(&names, &lo)
        );
        let task = parse_task(&text).unwrap();
        let run = execute(&task);
        if let Some(e) = &run.error {
            failures.push(format!("case {case}: fraction task failed: {e}"));
        }
        corpus.add(format!("c1/{case}"), &task);
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(60) {
        failures.push(format!("runtime {elapsed:?} exceeds 60 s"));
    }
    Outcome::new(&failures, format!("200 instances, {steps} primitive steps, {:.2} s", elapsed.as_secs_f64()))
}

fn random_poly_text(rng: &mut ChaCha8Rng, names: &[String], f5: bool) -> String {
    let terms = rng.gen_range(1..=8);
    let coeffs: &[i64] = if f5 { &[-4, -3, -2, -1, 1, 2, 3, 4] } else { &[-7, -3, -2, -1, 1, 2, 3, 5] };
    let mut parts = Vec::new();
    for _ in 0..terms {
        let deg = rng.gen_range(0..=6u32);
        let mut exps = vec![0u32; names.len()];
        for _ in 0..deg {
            exps[rng.gen_range(0..names.len())] += 1;
        }
        let c = coeffs.choose(rng).unwrap();
        parts.push(format!("{c}*{}", mono_text(names, &exps)));
    }
    parts.join(" + ").replace("+ -", "- ")
}

fn criterion_2(rng: &mut ChaCha8Rng, corpus: &mut Corpus) -> Outcome {
    let mut failures = Vec::new();
    let mut done = 0;
    let mut case = 0;
    while done < 200 {
        case += 1;
        let f5 = done % 2 == 1;
        let (header, names) = random_header(rng, 2, if f5 { "F 5" } else { "Q" });
        let text = format!("{header}task: monomialize\npoly f: {}\n", random_poly_text(rng, &names, f5));
        let task = parse_task(&text).unwrap();
        let f = task.poly("f").unwrap();
        if f.is_zero() {
            continue;
        }
        done += 1;
        match monomialize_element(f, &task.chart, &task.budget()) {
            Ok(m) => {
                let lhs = f.substitute(&m.derivation).unwrap();
                let rhs = m.unit.mul_monomial(&m.monomial);
                if lhs != rhs || m.unit.constant_term().is_zero() {
                    failures.push(format!("case {case}: identity or unit check failed"));
                }
                let pt: Vec<_> = (0..names.len()).map(|k| qq(k as i64 + 2, 3)).collect();
                if !f5 && eval_poly(f, &pull_back(&m.derivation, &pt)) != eval_poly(&rhs, &pt) {
                    failures.push(format!("case {case}: pointwise pull-back disagrees"));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
        if execute(&task).error.is_some() {
            failures.push(format!("case {case}: monomialize task failed"));
        }
        corpus.add(format!("c2/{case}"), &task);
    }
    Outcome::new(&failures, "200 elements (100 over Q, 100 over F5)".to_string())
}

fn criterion_3(rng: &mut ChaCha8Rng, corpus: &mut Corpus) -> Outcome {
    let mut failures = Vec::new();
    for case in 0..100 {
        let (header, names) = random_header(rng, 3, "Q");
        let gens: Vec<Vec<u32>> = (0..3).map(|_| random_exps(rng, names.len(), 10)).collect();
        let polys: String =
            gens.iter().enumerate().map(|(k, g)| format!("poly m{k}: {}\n", mono_text(&names, g))).collect();
        let task = parse_task(&format!("{header}task: principalize\n{polys}")).unwrap();
        let c = &task.chart;
        match principalize(c, &gens, &task.budget()) {
            Ok((d, g)) => {
                let min = gens
                    .iter()
                    .map(|e| c.monomial_value_nat(e).unwrap())
                    .min_by(|a, b| c.compare(a, b).unwrap())
                    .unwrap();
                if d.final_chart().monomial_value_nat(&g).unwrap() != min {
                    failures.push(format!("case {case}: generator value is not the minimum"));
                }
                for e in &gens {
                    let img = d.monomial_image(&e.iter().map(|&x| x as i64).collect::<Vec<_>>()).unwrap();
                    let quo: Vec<i64> = img.iter().zip(&g).map(|(&a, &b)| a - b as i64).collect();
                    if !nonneg(&quo) {
                        failures.push(format!("case {case}: generator does not divide {img:?}"));
                    }
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
        if execute(&task).error.is_some() {
            failures.push(format!("case {case}: principalize task failed"));
        }
        corpus.add(format!("c3/{case}"), &task);
    }
    Outcome::new(&failures, "100 generator sets".to_string())
}

fn random_root(rng: &mut ChaCha8Rng) -> XPoly {
    loop {
        let deg = rng.gen_range(1..=4);
        let mut s = vec![q(0)];
        s.extend((0..deg).map(|_| q(rng.gen_range(-3..=3))));
        let s = xtrim(s);
        if !s.is_empty() {
            return s;
        }
    }
}

fn criterion_4(rng: &mut ChaCha8Rng, corpus: &mut Corpus) -> Outcome {
    let mut failures = Vec::new();
    let mut branches = 0;
    for case in 0..50 {
        let roots: Vec<XPoly> = (0..rng.gen_range(1..=3)).map(|_| random_root(rng)).collect();
        let fz = planted(&roots);
        let text = to_engine(&fz, CoefficientField::Rationals).render(&["x".to_string(), "z".to_string()]);
        let base = format!("blocks: 1\nvars: x@1\nfield: Q\ntask: expand\nrelation z: {text}\norder: 12\n");
        let task = parse_task(&base).unwrap();
        let f = &task.relations[0].1;
        let nd = newton_data(f, &task.chart, 1, "z").unwrap();
        for (e, edge) in nd.edges.iter().enumerate() {
            for r in 0..residue_roots(f.field(), &edge.residue).len() {
                branches += 1;
                let tag = format!("case {case} edge {e} root {r}");
                let policy = [BranchChoice { edge: e, root: r }];
                let exp = match expand_root(f, &task.chart, 1, "z", &policy, 12, &task.budget()) {
                    Ok(x) => x,
                    Err(err) => {
                        failures.push(format!("{tag}: {err}"));
                        continue;
                    }
                };
                let s = from_engine_x(&exp.series, 0);
                let oracle = newton_puiseux(&fz, &[(e, r)], 12).map(|(terms, exact)| {
                    let mut o = Vec::new();
                    for (c, k) in terms {
                        let k = k as usize;
                        if o.len() <= k {
                            o.resize(k + 1, q(0));
                        }
                        o[k] = c;
                    }
                    (xtrim(o), exact)
                });
                if !exp.is_exact() {
                    failures.push(format!("{tag}: not exact"));
                } else if !eval_at_root(&fz, &s).is_empty() || !roots.contains(&s) {
                    failures.push(format!("{tag}: series {s:?} is not a planted root"));
                } else if oracle != Ok((s.clone(), true)) {
                    failures.push(format!("{tag}: oracle mismatch {oracle:?}"));
                }
                let branch_task = parse_task(&base.replace("order: 12\n", &format!("branch: edge={e} root={r}\norder: 12\n"))).unwrap();
                corpus.add(format!("c4/{case}/{e}/{r}"), &branch_task);
            }
        }
    }
    Outcome::new(&failures, format!("50 polynomials, {branches} first-stage branches"))
}

fn criterion_5(corpus: &mut Corpus) -> Outcome {
    let text = "blocks: 1\nvars: x1@1\nfield: Q\ntask: expand\nrelation z: z^2 - x1^2 - x1^3\norder: 6\n";
    let task = parse_task(text).unwrap();
    corpus.add("c5".to_string(), &task);
    let f = &task.relations[0].1;
    let mut failures = Vec::new();
    match expand_root(f, &task.chart, 1, "z", &[], 6, &task.budget()) {
        Ok(exp) => {
            let s = from_engine_x(&exp.series, 0);
            let mut expect = vec![q(0)];
            expect.extend(sqrt_one_plus_x(6));
            if s != expect {
                failures.push(format!("series {s:?}"));
            }
            if let Err(e) = check_certificate(f, &exp, 1) {
                failures.push(format!("certificate: {e}"));
            }
            let fz: ZPoly = vec![vec![q(0), q(0), q(-1), q(-1)], vec![], vec![q(1)]];
            let residual = eval_at_root(&fz, &s);
            let ord = residual.iter().position(|c| !c.is_zero());
            match (&exp.termination, ord) {
                (Termination::Truncated { bound: GroupValue::Finite(b) }, Some(o)) if (o as i64) > b[0][0] => {}
                other => failures.push(format!("residual order vs bound: {other:?}")),
            }
        }
        Err(e) => failures.push(e.to_string()),
    }
    Outcome::new(&failures, "x1*sqrt(1+x1) to 6 terms".to_string())
}

fn criterion_6(corpus: &mut Corpus) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("half", "z^2 - x1", "ValueNotInGroup"),
        ("unit", "z^2 - 2", "NotInMaximalIdeal"),
        ("cubic", "z^2 + x1*z + x1^2", "ResidueNotInField"),
    ];
    let mut failures = Vec::new();
    for (name, rel, reason) in cases {
        let text = format!("blocks: 1\nvars: x1@1\nfield: Q\ntask: expand\nrelation z: {rel}\n");
        let path = dir.path().join(format!("{name}.task"));
        fs::write(&path, &text).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_vforge")).arg("run").arg(&path).output().unwrap();
        let report = String::from_utf8_lossy(&out.stdout);
        let log = fs::read_to_string(dir.path().join(format!("{name}.log"))).unwrap_or_default();
        if out.status.code() != Some(2)
            || !report.contains(&format!("status: failed ({reason})"))
            || !log.contains(&format!("failure {reason}:"))
        {
            failures.push(format!("{rel}: exit {:?}, report {report:?}", out.status.code()));
        }
        corpus.add(format!("c6/{name}"), &parse_task(&text).unwrap());
    }
    Outcome::new(&failures, "3 relations".to_string())
}

fn random_derivation(rng: &mut ChaCha8Rng, chart: &vforge::chart::Chart) -> Derivation {
    let mut d = Derivation::new(chart.clone());
    for _ in 0..rng.gen_range(0..15) {
        let c = d.final_chart().clone();
        let block = rng.gen_range(1..=c.frame().num_blocks());
        let xs = c.block_vars(block);
        let step = match rng.gen_range(0..3) {
            0 if xs.len() >= 2 => {
                let pair: Vec<usize> = xs.choose_multiple(rng, 2).copied().collect();
                let (t, s) = if c.compare(c.value(pair[0]), c.value(pair[1])).unwrap() == Ordering::Greater {
                    (pair[0], pair[1])
                } else {
                    (pair[1], pair[0])
                };
                TransformStep::Primitive { target: c.vars()[t].name.clone(), divisor: c.vars()[s].name.clone() }
            }
            1 if xs.len() >= 2 => {
                let n = xs.len();
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                let mut matrix: Vec<Vec<i64>> = (0..n).map(|k| (0..n).map(|l| (k == l) as i64).collect()).collect();
                if i != j {
                    matrix[i][j] = rng.gen_range(1..=2);
                }
                TransformStep::Mono1 { block, matrix }
            }
            _ if block > 1 => {
                let u = *xs.choose(rng).unwrap();
                let lower = c.frame().block_size(block - 1);
                TransformStep::Mono2 {
                    var: c.vars()[u].name.clone(),
                    block: block - 1,
                    exponents: random_exps(rng, lower, 2),
                }
            }
            _ => continue,
        };
        if c.apply_step(&step).is_ok() {
            d.push(step, "").unwrap();
        }
    }
    d
}

fn random_value(rng: &mut ChaCha8Rng, sizes: &[usize]) -> GroupValue {
    let zero_top = rng.gen_bool(0.3);
    GroupValue::Finite(
        sizes
            .iter()
            .enumerate()
            .map(|(b, &r)| {
                (0..r)
                    .map(|_| if zero_top && b + 1 == sizes.len() { 0 } else { rng.gen_range(-6..=6) })
                    .collect()
            })
            .collect(),
    )
}

fn criterion_7(rng: &mut ChaCha8Rng) -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut steps = 0;
    for case in 0..500 {
        let (header, names) = random_header(rng, 3, "Q");
        let task =
            parse_task(&format!("{header}task: monomialize\npoly f: {}\n", random_poly_text(rng, &names, false)))
                .unwrap();
        let f = task.poly("f").unwrap();
        if f.is_zero() {
            continue;
        }
        let d = random_derivation(rng, &task.chart);
        steps += d.len();
        let g = f.substitute(&d).unwrap();
        let before = f.valuation(&task.chart).unwrap();
        let after = g.valuation(d.final_chart()).unwrap();
        if before != after {
            failures.push(format!("case {case}: {before} != {after} after {} steps", d.len()));
        }
    }
    let probe = parse_task("blocks: 2 1\nvars: a@1 b@1 c@2\nfield: Q\ntask: monomialize\npoly f: a\n").unwrap();
    let fr = probe.chart.frame();
    let sizes = [2, 1];
    let zero = fr.zero();
    for case in 0..1000 {
        let (a, b, c) = (random_value(rng, &sizes), random_value(rng, &sizes), random_value(rng, &sizes));
        let ab = fr.compare(&a, &b).unwrap();
        let ok_total = ab == fr.compare(&b, &a).unwrap().reverse() && (ab == Ordering::Equal) == (a == b);
        let mut v = [a.clone(), b.clone(), c.clone()];
        v.sort_by(|x, y| fr.compare(x, y).unwrap());
        let ok_trans = fr.compare(&v[0], &v[2]).unwrap() != Ordering::Greater;
        let ok_shift = fr.compare(&a.add(&c), &b.add(&c)).unwrap() == ab;
        // Isolated subgroups are convex: 0 ≤ a ≤ b with b in Γ_1 puts a in Γ_1.
        let in_low = |x: &GroupValue| x.top_block().is_none_or(|t| t <= 1);
        let ok_convex = !(fr.compare(&zero, &a).unwrap() != Ordering::Greater
            && fr.compare(&a, &b).unwrap() != Ordering::Greater
            && in_low(&b))
            || in_low(&a);
        if !(ok_total && ok_trans && ok_shift && ok_convex) {
            failures.push(format!("triple {case}: {a} {b} {c}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(30) {
        failures.push(format!("runtime {elapsed:?} exceeds 30 s"));
    }
    Outcome::new(&failures, format!("500 derivations ({steps} steps), 1000 triples, {:.2} s", elapsed.as_secs_f64()))
}

fn criterion_8(corpus: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    for (label, task) in &corpus.tasks {
        let first = execute(task);
        let text = first.log.to_string();
        match parse_log(&text) {
            Ok(log) => {
                if let Err(e) = verify(&log, task) {
                    failures.push(format!("{label}: {e}"));
                }
            }
            Err(e) => failures.push(format!("{label}: unparsable log: {e}")),
        }
        let again = execute(task);
        if again.log.to_string() != text || again.report != first.report {
            failures.push(format!("{label}: rerun differs"));
        }
    }
    Outcome::new(&failures, format!("{} logs", corpus.tasks.len()))
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_261_016);
    let mut corpus = Corpus::default();
    let results = [
        ("1 perron domination", criterion_1(&mut rng, &mut corpus)),
        ("2 element monomialization", criterion_2(&mut rng, &mut corpus)),
        ("3 ideal principalization", criterion_3(&mut rng, &mut corpus)),
        ("4 newton-puiseux oracle", criterion_4(&mut rng, &mut corpus)),
        ("5 infinite-branch certificate", criterion_5(&mut corpus)),
        ("6 failure typing", criterion_6(&mut corpus)),
        ("7 value invariance", criterion_7(&mut rng)),
        ("8 determinism and replay", criterion_8(&corpus)),
    ];
    let mut all = true;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        all &= o.pass;
    }
    if !all {
        std::process::exit(1);
    }
}
