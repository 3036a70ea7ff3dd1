//! Perron steps, monomial domination, principalization and the
//! monomialization engines built on them.

use std::cmp::Ordering;

use crate::chart::{Budget, Chart, Derivation, TransformStep, VarLabel};
use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::value_group::GroupValue;

fn trace_of(d: &Derivation) -> Vec<String> {
    d.steps().map(|s| s.to_string()).collect()
}

fn push_checked(d: &mut Derivation, step: TransformStep, note: &str, budget: &Budget, context: &str) -> Result<()> {
    d.push(step, note)?;
    budget.check(d.len(), context, || trace_of(d))
}

/// Index of the unique minimum-value variable among `idx`.
fn min_value_var(chart: &Chart, idx: &[usize]) -> Result<usize> {
    let mut best = idx[0];
    for &i in &idx[1..] {
        match chart.compare(chart.value(i), chart.value(best))? {
            Ordering::Less => best = i,
            Ordering::Equal => return Err(Error::internal("two block variables share a value")),
            Ordering::Greater => {}
        }
    }
    Ok(best)
}

/// One Perron step in `block`: `x_k = x_k'·x_p` for every `k ≠ p`, where
/// `x_p` has the smallest value in the block.
pub fn perron_step(chart: &Chart, block: usize) -> Result<Derivation> {
    let idx = chart.block_vars(block);
    if idx.len() < 2 {
        return Err(Error::precondition(format!("block {block} has fewer than two variables")));
    }
    let pivot = min_value_var(chart, &idx)?;
    let mut d = Derivation::new(chart.clone());
    let divisor = chart.vars()[pivot].name.clone();
    for &k in &idx {
        if k != pivot {
            let target = d.final_chart().vars()[k].name.clone();
            d.push(TransformStep::Primitive { target, divisor: divisor.clone() }, "perron")?;
        }
    }
    Ok(d)
}

fn block_of(chart: &Chart, i: usize) -> Option<usize> {
    match chart.label(i) {
        VarLabel::Block(j) => Some(j),
        _ => None,
    }
}

fn check_block_support(chart: &Chart, e: &[i64]) -> Result<()> {
    if e.len() != chart.len() {
        return Err(Error::precondition("exponent vector does not match the chart"));
    }
    for (i, &x) in e.iter().enumerate() {
        if x != 0 && block_of(chart, i).is_none() {
            return Err(Error::precondition(format!(
                "monomial involves non-block variable `{}`",
                chart.vars()[i].name
            )));
        }
    }
    Ok(())
}

/// Pairwise Euclid reduction inside `block`: appends primitive steps to
/// `deriv` until the block part of `d` is nonnegative. The block part must
/// have positive value.
fn clear_block(deriv: &mut Derivation, d: &mut [i64], block: usize, budget: &Budget) -> Result<()> {
    loop {
        let chart = deriv.final_chart();
        let idx = chart.block_vars(block);
        let Some(&q) = idx.iter().find(|&&i| d[i] < 0) else {
            return Ok(());
        };
        let Some(&p) = idx.iter().find(|&&i| d[i] > 0) else {
            return Err(Error::internal(format!("block {block} deficit has no positive part")));
        };
        while d[p] > 0 && d[q] < 0 {
            let chart = deriv.final_chart();
            let (target, divisor) = match chart.compare(chart.value(p), chart.value(q))? {
                Ordering::Greater => (p, q),
                Ordering::Less => (q, p),
                Ordering::Equal => return Err(Error::internal("two block variables share a value")),
            };
            d[divisor] += d[target];
            let step = TransformStep::Primitive {
                target: chart.vars()[target].name.clone(),
                divisor: chart.vars()[divisor].name.clone(),
            };
            push_checked(deriv, step, "dominate:a", budget, "dominate")?;
        }
    }
}

/// Appends steps to `deriv` after which the signed exponent vector `d`
/// (over the current final chart, block variables only, value ≥ 0) is
/// nonnegative. Returns the image of `d`.
pub fn make_nonnegative(deriv: &mut Derivation, d: &[i64], budget: &Budget) -> Result<Vec<i64>> {
    let chart = deriv.final_chart().clone();
    check_block_support(&chart, d)?;
    let value = chart.monomial_value(d)?;
    match chart.frame().sign(&value)? {
        crate::value_group::Sign::Negative => {
            return Err(Error::precondition("monomial quotient has negative value"));
        }
        crate::value_group::Sign::Zero => {
            if d.iter().any(|&x| x != 0) {
                return Err(Error::internal("distinct monomials share a value"));
            }
            return Ok(d.to_vec());
        }
        crate::value_group::Sign::Positive => {}
    }
    let mut d = d.to_vec();
    let l = (0..d.len()).filter(|&i| d[i] != 0).filter_map(|i| block_of(&chart, i)).max().unwrap_or(0);
    clear_block(deriv, &mut d, l, budget)?;
    // Lower-block deficits: x_{l,j*} = x_{l,j*}'·x_k raises d_k by d_{l,j*}.
    let chart = deriv.final_chart().clone();
    let top = chart.block_vars(l);
    let star = top
        .iter()
        .copied()
        .filter(|&i| d[i] > 0)
        .max_by_key(|&i| d[i])
        .ok_or_else(|| Error::internal("top block deficit vanished"))?;
    for k in 0..d.len() {
        while d[k] < 0 {
            let chart = deriv.final_chart();
            if block_of(chart, k).is_none_or(|b| b >= l) {
                return Err(Error::internal("deficit left in the top block"));
            }
            let step = TransformStep::Primitive {
                target: chart.vars()[star].name.clone(),
                divisor: chart.vars()[k].name.clone(),
            };
            d[k] += d[star];
            push_checked(deriv, step, "dominate:b", budget, "dominate")?;
        }
    }
    Ok(d)
}

fn signed(e: &[u32]) -> Vec<i64> {
    e.iter().map(|&x| x as i64).collect()
}

fn unsigned(e: &[i64]) -> Result<Vec<u32>> {
    e.iter()
        .map(|&x| u32::try_from(x).map_err(|_| Error::internal(format!("negative exponent {x} in a monomial image"))))
        .collect()
}

/// A derivation after which the image of `m1` divides the image of `m2`.
pub fn dominate(chart: &Chart, m1: &[u32], m2: &[u32], budget: &Budget) -> Result<Derivation> {
    let (a, b) = (signed(m1), signed(m2));
    check_block_support(chart, &a)?;
    check_block_support(chart, &b)?;
    let (v1, v2) = (chart.monomial_value(&a)?, chart.monomial_value(&b)?);
    if chart.compare(&v1, &v2)? == Ordering::Greater {
        return Err(Error::precondition("dominate: value(M1) exceeds value(M2)"));
    }
    let d: Vec<i64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
    let mut deriv = Derivation::new(chart.clone());
    make_nonnegative(&mut deriv, &d, budget)?;
    Ok(deriv)
}

/// Makes the minimum-value generator divide all others. Returns the
/// derivation and the image of that generator.
pub fn principalize(chart: &Chart, generators: &[Vec<u32>], budget: &Budget) -> Result<(Derivation, Vec<u32>)> {
    let mut deriv = Derivation::new(chart.clone());
    let images = principalize_into(&mut deriv, generators, budget)?;
    Ok((deriv, images))
}

/// As [`principalize`], appending to an existing derivation; generators are
/// over its final chart.
pub fn principalize_into(deriv: &mut Derivation, generators: &[Vec<u32>], budget: &Budget) -> Result<Vec<u32>> {
    let chart = deriv.final_chart().clone();
    if generators.is_empty() {
        return Err(Error::precondition("principalize: no generators"));
    }
    let mut best = 0;
    for (i, g) in generators.iter().enumerate() {
        check_block_support(&chart, &signed(g))?;
        if i > 0 && chart.compare(&chart.monomial_value_nat(g)?, &chart.monomial_value_nat(&generators[best])?)?
            == Ordering::Less
        {
            best = i;
        }
    }
    let mut gens: Vec<Vec<i64>> = generators.iter().map(|g| signed(g)).collect();
    for i in 0..gens.len() {
        let d: Vec<i64> = gens[i].iter().zip(&gens[best]).map(|(x, y)| x - y).collect();
        if d.iter().all(|&x| x >= 0) {
            continue;
        }
        let before = deriv.final_chart().clone();
        let mark = deriv.len();
        make_nonnegative(deriv, &d, budget)?;
        let sub = Derivation::new(before);
        let sub = rebase(&sub, deriv, mark)?;
        for g in gens.iter_mut() {
            *g = sub.monomial_image(g)?;
        }
    }
    unsigned(&gens[best])
}

/// The steps of `full` from index `mark` on, as a derivation starting at
/// `base`'s initial chart.
fn rebase(base: &Derivation, full: &Derivation, mark: usize) -> Result<Derivation> {
    let mut d = base.clone();
    for e in &full.entries()[mark..] {
        d.push(e.step.clone(), e.note.clone())?;
    }
    Ok(d)
}

/// `f = M·u` with `u` a local unit.
#[derive(Debug, Clone)]
pub struct Monomialization {
    pub derivation: Derivation,
    pub monomial: Vec<u32>,
    pub unit: Poly,
}

fn support(f: &Poly) -> Vec<Vec<u32>> {
    f.terms().map(|(e, _)| e.clone()).collect()
}

/// Principalizes the support of `f` and divides out the principal monomial.
pub fn monomialize_element(f: &Poly, chart: &Chart, budget: &Budget) -> Result<Monomialization> {
    if f.is_zero() {
        return Err(Error::precondition("monomialize: zero polynomial"));
    }
    let (derivation, monomial) = principalize(chart, &support(f), budget)?;
    let image = f.substitute(&derivation)?;
    let unit = image.divide_by_monomial(&monomial)?;
    if !unit.is_local_unit() {
        return Err(Error::internal("quotient by the principal monomial is not a unit"));
    }
    Ok(Monomialization { derivation, monomial, unit })
}

/// `g/h = M·(u_g/u_h)` with natural exponents and local units.
#[derive(Debug, Clone)]
pub struct FractionMonomialization {
    pub derivation: Derivation,
    pub exponents: Vec<i64>,
    pub numerator_unit: Poly,
    pub denominator_unit: Poly,
}

pub fn monomialize_fraction(g: &Poly, h: &Poly, chart: &Chart, budget: &Budget) -> Result<FractionMonomialization> {
    if g.is_zero() || h.is_zero() {
        return Err(Error::precondition("monomialize_fraction: zero numerator or denominator"));
    }
    if chart.compare(&g.valuation(chart)?, &h.valuation(chart)?)? == Ordering::Less {
        return Err(Error::NotInValuationRing);
    }
    let mut deriv = Derivation::new(chart.clone());
    principalize_into(&mut deriv, &support(h), budget)?;
    let g1 = g.substitute(&deriv)?;
    principalize_into(&mut deriv, &support(&g1), budget)?;
    let (g2, h2) = (g.substitute(&deriv)?, h.substitute(&deriv)?);
    let chart2 = deriv.final_chart().clone();
    let mh = min_monomial(&h2, &chart2)?;
    let mg = min_monomial(&g2, &chart2)?;
    let d: Vec<i64> = signed(&mg).iter().zip(signed(&mh)).map(|(x, y)| x - y).collect();
    let exponents = make_nonnegative(&mut deriv, &d, budget)?;
    let (g3, h3) = (g.substitute(&deriv)?, h.substitute(&deriv)?);
    let chart3 = deriv.final_chart().clone();
    let mg3 = min_monomial(&g3, &chart3)?;
    let mh3 = min_monomial(&h3, &chart3)?;
    let numerator_unit = g3.divide_by_monomial(&mg3)?;
    let denominator_unit = h3.divide_by_monomial(&mh3)?;
    if !numerator_unit.is_local_unit() || !denominator_unit.is_local_unit() {
        return Err(Error::internal("fraction monomialization left a non-unit"));
    }
    Ok(FractionMonomialization { derivation: deriv, exponents, numerator_unit, denominator_unit })
}

/// Exponents of the unique minimum-value term.
pub fn min_monomial(f: &Poly, chart: &Chart) -> Result<Vec<u32>> {
    let mut best: Option<(GroupValue, Vec<u32>)> = None;
    for (e, _) in f.terms() {
        let v = chart.frame().project(&chart.monomial_value_nat(e)?, chart.level());
        let better = match &best {
            None => true,
            Some((bv, _)) => chart.compare(&v, bv)? == Ordering::Less,
        };
        if better {
            best = Some((v, e.clone()));
        }
    }
    best.map(|(_, e)| e).ok_or_else(|| Error::precondition("zero polynomial has no minimal monomial"))
}

/// Indices of the variables that are infinite at `level` (the generators
/// of the prime ideal), and of the block-`level` variables.
fn split_prime(chart: &Chart, level: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut ys = Vec::new();
    for (i, v) in chart.vars().iter().enumerate() {
        if v.label == VarLabel::Block(level) {
            continue;
        }
        if chart.frame().truncate_at_level(&v.value, level)?.is_infinite() && v.label != VarLabel::Root {
            ys.push(i);
        } else {
            return Err(Error::precondition(format!(
                "variable `{}` is neither a block-{level} parameter nor in the prime",
                v.name
            )));
        }
    }
    Ok((ys, chart.block_vars(level)))
}

/// Monomialization modulo the prime generated by the variables that are
/// infinite at `level`. When `f` has a term free of them, the result is
/// `M·γ` with `γ` a unit; otherwise every such variable is pushed above
/// `threshold` and `M` has value exceeding it.
pub fn monomialize_mod_prime(
    f: &Poly,
    chart: &Chart,
    level: usize,
    threshold: Option<&GroupValue>,
    budget: &Budget,
) -> Result<Monomialization> {
    if chart.level() != level {
        return Err(Error::precondition(format!("chart is at level {}, not {level}", chart.level())));
    }
    if f.is_zero() {
        return Err(Error::precondition("monomialize: zero polynomial"));
    }
    let (ys, xs) = split_prime(chart, level)?;
    let free: Vec<Vec<u32>> = support(f).into_iter().filter(|e| ys.iter().all(|&k| e[k] == 0)).collect();
    let used_ys: Vec<usize> = ys.iter().copied().filter(|&k| f.degree_in(k).unwrap_or(0) > 0).collect();
    let mut deriv = Derivation::new(chart.clone());
    let block_exps: Vec<u32>;
    if !free.is_empty() {
        let m = principalize_into(&mut deriv, &free, budget)?;
        block_exps = xs.iter().map(|&i| m[i]).collect();
    } else {
        let threshold = threshold
            .ok_or_else(|| Error::precondition("polynomial lies in the prime ideal; a threshold is required"))?;
        let frame = chart.frame();
        let rho = frame.project(threshold, level);
        let x1 = chart.value(xs[0]).clone();
        let mut n = 1i64;
        while frame.compare(&x1.scale(n), &rho)? != Ordering::Greater {
            n += 1;
            budget.check(n as usize, "monomialize_mod_prime", Vec::new)?;
        }
        let mut e = vec![0u32; xs.len()];
        e[0] = n as u32;
        block_exps = e;
    }
    for &k in &used_ys {
        let var = deriv.final_chart().vars()[k].name.clone();
        let step = TransformStep::Mono2 { var, block: level, exponents: block_exps.clone() };
        push_checked(&mut deriv, step, "mod_prime", budget, "monomialize_mod_prime")?;
    }
    let mut monomial = vec![0u32; chart.len()];
    for (&i, &a) in xs.iter().zip(&block_exps) {
        monomial[i] = a;
    }
    let image = f.substitute(&deriv)?;
    let unit = image.divide_by_monomial(&monomial)?;
    if !free.is_empty() && !unit.is_local_unit() {
        return Err(Error::internal("mod-prime monomialization left a non-unit"));
    }
    Ok(Monomialization { derivation: deriv, monomial, unit })
}

/// Result of [`diagonalize_parameters`]: for each relation `j`, the pivot
/// column, the exponent vector `d_j` over the final chart, and the name of
/// the new parameter with `z_j = x^{d_j}·y_j(1)`.
#[derive(Debug, Clone)]
pub struct Diagonalization {
    pub derivation: Derivation,
    pub rows: Vec<DiagonalRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagonalRow {
    pub row: usize,
    pub column: usize,
    pub exponents: Vec<u32>,
    pub parameter: String,
    pub definition: String,
}

/// Entry `a_{jk} = b/c` of a linear relation `z_j = Σ_k a_{jk}·y_k`.
#[derive(Debug, Clone)]
pub struct RelationEntry {
    pub numerator: Poly,
    pub denominator: Poly,
}

struct Relations {
    ys: Vec<usize>,
    entries: Vec<Vec<RelationEntry>>,
}

/// `image(e + y) − y`: the monomial factor a step sequence attaches to `y`.
fn attached_factor(sub: &Derivation, base: &[i64], y: usize) -> Result<Vec<i64>> {
    let mut v = base.to_vec();
    v[y] += 1;
    let mut img = sub.monomial_image(&v)?;
    img[y] -= 1;
    Ok(img)
}

impl Relations {
    /// Rewrites every entry through `sub`, folding the monomial factor of
    /// each `y_k`'s image into column `k`.
    fn advance(&mut self, sub: &Derivation) -> Result<()> {
        let zero = vec![0i64; sub.initial().len()];
        for (k, &y) in self.ys.iter().enumerate() {
            let factor = unsigned(&attached_factor(sub, &zero, y)?)?;
            for row in self.entries.iter_mut() {
                let e = &mut row[k];
                e.numerator = e.numerator.substitute(sub)?.mul_monomial(&factor);
                e.denominator = e.denominator.substitute(sub)?;
            }
        }
        Ok(())
    }
}

struct Stage {
    row: usize,
    column: usize,
    exponents: Vec<i64>,
}

struct DiagState {
    deriv: Derivation,
    rel: Relations,
    stages: Vec<Stage>,
    /// Monomials tracked through every appended step.
    monos: Vec<Vec<i64>>,
}

impl DiagState {
    fn apply(&mut self, sub: &Derivation) -> Result<()> {
        self.rel.advance(sub)?;
        for s in self.stages.iter_mut() {
            s.exponents = attached_factor(sub, &s.exponents, self.rel.ys[s.column])?;
        }
        for m in self.monos.iter_mut() {
            *m = sub.monomial_image(m)?;
        }
        self.deriv.extend(sub)
    }
}

/// Eliminates the linear relations `z_j = Σ_k (b_{jk}/c_{jk})·y_k` among the
/// prime parameters `y_vars` at `level`. Each stage picks the minimal-value
/// entry whose numerator is outside the prime, monomializes it together with
/// the denominators of its row, absorbs the row into the new parameter
/// `y_k(1) = z_j/x^{d_j}` and eliminates `y_k` from the remaining rows.
/// Columns whose ratio to the pivot is not in the local ring are first
/// pushed by a `(2,level)` step.
pub fn diagonalize_parameters(
    chart: &Chart,
    level: usize,
    y_vars: &[String],
    entries: &[Vec<RelationEntry>],
    budget: &Budget,
) -> Result<Diagonalization> {
    if chart.level() != level {
        return Err(Error::precondition(format!("chart is at level {}, not {level}", chart.level())));
    }
    let m = y_vars.len();
    if m == 0 || entries.len() != m || entries.iter().any(|r| r.len() != m) {
        return Err(Error::precondition("relation matrix must be square over the given parameters"));
    }
    let field = entries[0][0].numerator.field();
    let (primes, xs) = split_prime(chart, level)?;
    let ys: Vec<usize> = y_vars.iter().map(|n| chart.index_of(n)).collect::<Result<_>>()?;
    if ys.iter().any(|y| !primes.contains(y)) {
        return Err(Error::precondition("relation parameters must lie in the prime"));
    }
    let in_prime = |f: &Poly| f.terms().all(|(e, _)| primes.iter().any(|&k| e[k] > 0));
    for row in entries {
        for e in row {
            if in_prime(&e.denominator) {
                return Err(Error::precondition("relation denominators must lie outside the prime"));
            }
        }
    }
    let mut st = DiagState {
        deriv: Derivation::new(chart.clone()),
        rel: Relations { ys: ys.clone(), entries: entries.to_vec() },
        stages: Vec::new(),
        monos: Vec::new(),
    };
    let mut used_rows = vec![false; m];
    let mut used_cols = vec![false; m];
    for stage in 1..=m {
        let cur = st.deriv.final_chart().clone();
        let mut best: Option<(GroupValue, usize, usize)> = None;
        for j in (0..m).filter(|&j| !used_rows[j]) {
            for k in (0..m).filter(|&k| !used_cols[k]) {
                let e = &st.rel.entries[j][k];
                if e.numerator.is_zero() || in_prime(&e.numerator) {
                    continue;
                }
                let v = e.numerator.value_of(&cur, level)?.sub(&e.denominator.value_of(&cur, level)?);
                let better = match &best {
                    None => true,
                    Some((bv, _, _)) => cur.compare(&v, bv)? == Ordering::Less,
                };
                if better {
                    best = Some((v, j, k));
                }
            }
        }
        let Some((_, j, k)) = best else {
            return Err(Error::SingularSystem { stage });
        };
        // monos[0..m] are the row-j denominator monomials, monos[m] the pivot
        // numerator monomial.
        st.monos.clear();
        for kk in 0..=m {
            let f = if kk < m { st.rel.entries[j][kk].denominator.clone() } else { st.rel.entries[j][k].numerator.clone() };
            let res = monomialize_mod_prime(&f, st.deriv.final_chart(), level, None, budget)?;
            st.apply(&res.derivation)?;
            st.monos.push(signed(&res.monomial));
        }
        let diff: Vec<i64> = st.monos[m].iter().zip(&st.monos[k]).map(|(x, y)| x - y).collect();
        let mut sub = Derivation::new(st.deriv.final_chart().clone());
        make_nonnegative(&mut sub, &diff, budget)
            .map_err(|_| Error::precondition(format!("pivot entry ({}, {}) is not in the local ring", j + 1, k + 1)))?;
        st.apply(&sub)?;
        let mb = unsigned(&st.monos[m])?;
        let dj: Vec<i64> = st.monos[m].iter().zip(&st.monos[k]).map(|(x, y)| x - y).collect();
        // Push the columns whose ratio to the pivot is not in the local ring.
        let mut sub = Derivation::new(st.deriv.final_chart().clone());
        for kk in (0..m).filter(|&kk| kk != k) {
            let e = &st.rel.entries[j][kk];
            if e.numerator.is_zero() {
                continue;
            }
            let n = e.numerator.mul(&st.rel.entries[j][k].denominator);
            let den: Vec<u32> = unsigned(&st.monos[kk])?.iter().zip(&mb).map(|(a, b)| a + b).collect();
            if n.divide_by_monomial(&den).is_ok() {
                continue;
            }
            let mut exps: Vec<u32> = xs.iter().map(|&i| (dj[i] + st.monos[kk][i]) as u32).collect();
            exps[0] += 1;
            let var = sub.final_chart().vars()[ys[kk]].name.clone();
            let step = TransformStep::Mono2 { var, block: level, exponents: exps };
            push_checked(&mut sub, step, "diagonalize:push", budget, "diagonalize_parameters")?;
        }
        st.apply(&sub)?;
        // Ratios r_kk = a_{j,kk}/a_{j,k} as (polynomial, unit) pairs.
        let pivot = st.rel.entries[j][k].clone();
        let ub = pivot.numerator.divide_by_monomial(&mb)?;
        let mut ratios: Vec<Option<(Poly, Poly)>> = vec![None; m];
        for kk in (0..m).filter(|&kk| kk != k) {
            let e = &st.rel.entries[j][kk];
            if e.numerator.is_zero() {
                continue;
            }
            let nkk = unsigned(&st.monos[kk])?;
            let den: Vec<u32> = nkk.iter().zip(&mb).map(|(a, b)| a + b).collect();
            let num = e.numerator.mul(&pivot.denominator).divide_by_monomial(&den)?;
            let unit = e.denominator.divide_by_monomial(&nkk)?.mul(&ub);
            ratios[kk] = Some((num, unit));
        }
        // Eliminate y_k from the other unused rows: a_{j',kk} −= a_{j',k}·r_kk.
        for jj in (0..m).filter(|&jj| jj != j && !used_rows[jj]) {
            let (b2, c2) = (st.rel.entries[jj][k].numerator.clone(), st.rel.entries[jj][k].denominator.clone());
            if b2.is_zero() {
                continue;
            }
            for (kk, r) in ratios.iter().enumerate() {
                let Some((rn, ru)) = r else { continue };
                let e = &mut st.rel.entries[jj][kk];
                let numerator = e.numerator.mul(&c2).mul(ru).sub(&e.denominator.mul(&b2).mul(rn));
                let denominator = e.denominator.mul(&c2).mul(ru);
                *e = RelationEntry { numerator, denominator };
            }
        }
        let old = st.deriv.final_chart().vars()[ys[k]].name.clone();
        let fresh = format!("{}@{}", crate::chart::base_name(&old), st.deriv.final_chart().generation() + 1);
        st.deriv.push(TransformStep::Rename { from: old, to: fresh }, format!("diagonalize:stage{stage}"))?;
        used_rows[j] = true;
        used_cols[k] = true;
        st.stages.push(Stage { row: j, column: k, exponents: dj });
    }
    let fin = st.deriv.final_chart();
    let names = fin.names();
    let mut rows = Vec::with_capacity(m);
    for s in st.stages {
        let exponents = unsigned(&s.exponents)?;
        let mono = Poly::monomial(field, fin.len(), exponents.clone(), num_rational::BigRational::from_integer(1.into()));
        rows.push(DiagonalRow {
            row: s.row,
            column: s.column,
            parameter: names[ys[s.column]].clone(),
            definition: format!("z{} / ({})", s.row + 1, mono.render(&names)),
            exponents,
        });
    }
    rows.sort_by_key(|r| r.row);
    Ok(Diagonalization { derivation: st.deriv, rows })
}
