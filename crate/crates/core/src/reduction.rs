//! Newton polygon reduction: monic preparation, edges and residue roots,
//! single reduction steps, root expansion and the driver over several monic
//! relations.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::chart::{Budget, Chart, Derivation, TransformStep, VarLabel};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::perron::make_nonnegative;
use crate::poly::Poly;
use crate::value_group::GroupValue;

/// One lower-hull segment. The slope `δ = slope_num / slope_den` lives in
/// the divisible hull of the block quotient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub start: u32,
    pub end: u32,
    pub slope_num: GroupValue,
    pub slope_den: u32,
    pub minimal_indices: Vec<u32>,
    /// Coefficients of the residue polynomial by degree.
    pub residue: Vec<BigRational>,
}

impl Edge {
    /// The slope as an element of `Γ`, or [`Error::ValueNotInGroup`].
    pub fn slope(&self) -> Result<GroupValue> {
        let den = self.slope_den as i64;
        match &self.slope_num {
            GroupValue::Finite(b) if b.iter().flatten().all(|x| x % den == 0) => {
                Ok(GroupValue::Finite(b.iter().map(|v| v.iter().map(|x| x / den).collect()).collect()))
            }
            _ => Err(Error::ValueNotInGroup { slope: self.slope_text() }),
        }
    }

    pub fn slope_text(&self) -> String {
        if self.slope_den == 1 {
            self.slope_num.to_string()
        } else {
            format!("{}/{}", self.slope_num, self.slope_den)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewtonData {
    pub mu: u32,
    pub points: Vec<(u32, GroupValue)>,
    /// Sorted by ascending slope.
    pub edges: Vec<Edge>,
}

/// Renders a univariate polynomial in `T`, highest degree first.
pub fn render_univariate(field: CoefficientField, coeffs: &[BigRational]) -> String {
    let names = vec!["T".to_string()];
    let p = Poly::from_terms(
        field,
        1,
        coeffs.iter().enumerate().map(|(j, c)| (vec![j as u32], c.clone())),
    );
    let mut terms: Vec<(Vec<u32>, BigRational)> = p.terms().map(|(e, c)| (e.clone(), c.clone())).collect();
    terms.reverse();
    let mut s = String::new();
    for (i, (e, c)) in terms.iter().enumerate() {
        let single = Poly::monomial(field, 1, e.clone(), c.clone()).render(&names);
        if i == 0 {
            s.push_str(&single);
        } else if let Some(rest) = single.strip_prefix('-') {
            s.push_str(" - ");
            s.push_str(rest);
        } else {
            s.push_str(" + ");
            s.push_str(&single);
        }
    }
    if s.is_empty() {
        s.push('0');
    }
    s
}

fn root_index(chart: &Chart, root: &str) -> Result<usize> {
    let zi = chart.index_of(root)?;
    if chart.label(zi) != VarLabel::Root {
        return Err(Error::precondition(format!("`{root}` is not a root variable")));
    }
    Ok(zi)
}

/// Checks that `f` has positive degree in `z` with coefficients over the
/// block-`level` variables, and returns those coefficients.
fn root_coeffs(f: &Poly, chart: &Chart, level: usize, zi: usize) -> Result<Vec<Poly>> {
    if chart.level() != level {
        return Err(Error::precondition(format!("chart is at level {}, not {level}", chart.level())));
    }
    let xs = chart.block_vars(level);
    for (e, _) in f.terms() {
        if e.iter().enumerate().any(|(k, &x)| x > 0 && k != zi && !xs.contains(&k)) {
            return Err(Error::precondition("coefficients must involve only the block variables of the level"));
        }
    }
    let coeffs = f.coeffs_in(zi);
    if coeffs.len() < 2 {
        return Err(Error::precondition("polynomial must have positive degree in the root variable"));
    }
    Ok(coeffs)
}

/// [`root_coeffs`] plus a leading coefficient of 1.
fn monic_coeffs(f: &Poly, chart: &Chart, level: usize, zi: usize) -> Result<Vec<Poly>> {
    let coeffs = root_coeffs(f, chart, level, zi)?;
    let lead = coeffs.last().expect("nonempty");
    if !(lead.is_monomial() && lead.constant_term().is_one()) {
        return Err(Error::precondition("polynomial must be monic of positive degree in the root variable"));
    }
    Ok(coeffs)
}

fn order_at_zero(coeffs: &[BigRational]) -> Option<u32> {
    coeffs.iter().position(|c| !c.is_zero()).map(|p| p as u32)
}

/// `(v_b − v_a)·(j_c − j_a) − (v_c − v_a)·(j_b − j_a)`, whose sign says
/// whether `b` lies above the segment from `a` to `c`.
fn turn(a: &(u32, GroupValue), b: &(u32, GroupValue), c: &(u32, GroupValue)) -> GroupValue {
    let (ja, jb, jc) = (a.0 as i64, b.0 as i64, c.0 as i64);
    b.1.sub(&a.1).scale(jc - ja).sub(&c.1.sub(&a.1).scale(jb - ja))
}

pub fn newton_data(f: &Poly, chart: &Chart, level: usize, root: &str) -> Result<NewtonData> {
    let zi = root_index(chart, root)?;
    let coeffs = root_coeffs(f, chart, level, zi)?;
    let frame = chart.frame();
    let mu = order_at_zero(&f.restrict_to_var(zi))
        .ok_or_else(|| Error::precondition("polynomial vanishes on the root axis"))?;
    if mu == 0 {
        return Err(Error::NotInMaximalIdeal(format!(
            "f(0,…,0,{root}) has a nonzero constant term"
        )));
    }
    let mut points = Vec::new();
    for (j, a) in coeffs.iter().enumerate().take(mu as usize + 1) {
        if !a.is_zero() {
            points.push((j as u32, a.value_of(chart, level)?));
        }
    }
    // Lower convex hull, left to right.
    let mut hull: Vec<(u32, GroupValue)> = Vec::new();
    for p in &points {
        while hull.len() >= 2 {
            let t = turn(&hull[hull.len() - 2], &hull[hull.len() - 1], p);
            if frame.sign(&t)? != crate::value_group::Sign::Negative {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p.clone());
    }
    let mut edges = Vec::new();
    for w in hull.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let num = a.1.sub(&b.1);
        let den = b.0 - a.0;
        let mut minimal = Vec::new();
        let mut residue = vec![BigRational::zero(); b.0 as usize + 1];
        for p in &points {
            if p.0 < a.0 || p.0 > b.0 {
                continue;
            }
            let on_line = p.1.sub(&a.1).scale(den as i64).add(&num.scale((p.0 - a.0) as i64));
            if on_line.is_zero() {
                minimal.push(p.0);
                let init = coeffs[p.0 as usize].initial_form(chart, level)?;
                let (_, c) = init
                    .as_monomial()
                    .ok_or_else(|| Error::internal("coefficient initial form is not a monomial"))?;
                residue[p.0 as usize] = c.clone();
            }
        }
        edges.push(Edge { start: a.0, end: b.0, slope_num: num, slope_den: den, minimal_indices: minimal, residue });
    }
    // Hull slopes decrease left to right; report ascending.
    edges.reverse();
    Ok(NewtonData { mu, points, edges })
}

fn divisors(n: &BigInt) -> Vec<BigInt> {
    let n = n.abs();
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = BigInt::one();
    while &d * &d <= n {
        if (&n % &d).is_zero() {
            small.push(d.clone());
            let q = &n / &d;
            if q != d {
                large.push(q);
            }
        }
        d += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

/// Nonzero roots of a univariate polynomial in the coefficient field. Over
/// `𝔽_p` they come in the order `1, …, p−1`; over `ℚ` by ascending absolute
/// value with the positive root first.
pub fn residue_roots(field: CoefficientField, coeffs: &[BigRational]) -> Vec<BigRational> {
    let eval = |t: &BigRational| {
        let mut acc = BigRational::zero();
        for c in coeffs.iter().rev() {
            acc = field.add(&field.mul(&acc, t), c);
        }
        acc
    };
    match field {
        CoefficientField::Prime(_) => field.elements().into_iter().flatten().skip(1).filter(|t| eval(t).is_zero()).collect(),
        CoefficientField::Rationals => {
            let Some(low) = coeffs.iter().position(|c| !c.is_zero()) else {
                return Vec::new();
            };
            let high = coeffs.iter().rposition(|c| !c.is_zero()).unwrap();
            if high == low {
                return Vec::new();
            }
            let lcm = coeffs.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
            let b0 = (&coeffs[low] * BigRational::from_integer(lcm.clone())).to_integer();
            let bd = (&coeffs[high] * BigRational::from_integer(lcm)).to_integer();
            let mut cands: Vec<BigRational> = Vec::new();
            for p in divisors(&b0) {
                for q in divisors(&bd) {
                    let r = BigRational::new(p.clone(), q);
                    if !cands.contains(&r) {
                        cands.push(r);
                    }
                }
            }
            cands.sort();
            let mut out = Vec::new();
            for r in cands {
                for t in [r.clone(), -r] {
                    if eval(&t).is_zero() {
                        out.push(t);
                    }
                }
            }
            out
        }
    }
}

/// Which edge and which residue root to follow at a reduction step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchChoice {
    pub edge: usize,
    pub root: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReductionOutcome {
    /// `ord f_1(0,…,0,z_1) < μ`.
    Reduced { f: Poly, root: String, mu: u32 },
    /// Same `μ`; `z = z' + λ·x^l`.
    Translated { lambda: BigRational, exponents: Vec<u32>, f: Poly, root: String, mu: u32 },
    /// `μ = 1`: `f` itself can replace the root variable as a parameter.
    NewVariable { f: Poly, root: String },
}

impl ReductionOutcome {
    pub fn tag(&self) -> &'static str {
        match self {
            ReductionOutcome::Reduced { .. } => "Reduced",
            ReductionOutcome::Translated { .. } => "Translated",
            ReductionOutcome::NewVariable { .. } => "NewVariable",
        }
    }
}

/// Details of one performed reduction step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub derivation: Derivation,
    pub outcome: ReductionOutcome,
    pub mu_before: u32,
    /// `ν(z)` of the followed branch.
    pub slope: GroupValue,
    /// Value of the monomial `f` was divided by (zero when nothing was).
    pub divisor_value: GroupValue,
    pub divisor: Vec<u32>,
}

fn block_vector(chart: &Chart, level: usize, coords: &[i64]) -> Vec<i64> {
    let mut v = vec![0i64; chart.len()];
    for (&i, &c) in chart.block_vars(level).iter().zip(coords) {
        v[i] = c;
    }
    v
}

/// Makes every vector in `force` nonnegative by appending steps to
/// `deriv`, mapping `force` and `track` through each appended piece.
fn nonneg_all(deriv: &mut Derivation, force: &mut [Vec<i64>], track: &mut [Vec<i64>], budget: &Budget) -> Result<()> {
    for i in 0..force.len() {
        if force[i].iter().all(|&x| x >= 0) {
            continue;
        }
        let mut sub = Derivation::new(deriv.final_chart().clone());
        make_nonnegative(&mut sub, &force[i], budget)?;
        for v in force.iter_mut().chain(track.iter_mut()) {
            *v = sub.monomial_image(v)?;
        }
        deriv.extend(&sub)?;
        budget.check(deriv.len(), "reduction", || deriv.steps().map(|s| s.to_string()).collect())?;
    }
    Ok(())
}

fn to_nat(v: &[i64]) -> Result<Vec<u32>> {
    v.iter()
        .map(|&x| u32::try_from(x).map_err(|_| Error::internal("negative exponent after domination")))
        .collect()
}

/// One step of the algorithm, also performed when `μ = 1` (the root
/// expansion continues past that point).
pub fn reduce_once(
    f: &Poly,
    chart: &Chart,
    level: usize,
    root: &str,
    choice: BranchChoice,
    budget: &Budget,
) -> Result<StepReport> {
    let nd = newton_data(f, chart, level, root)?;
    let zi = root_index(chart, root)?;
    let frame = chart.frame();
    let edge = nd.edges.get(choice.edge).ok_or_else(|| {
        Error::precondition(format!("edge {} requested, polygon has {}", choice.edge, nd.edges.len()))
    })?;
    if edge.minimal_indices.len() < 2 {
        return Err(Error::internal("edge with a single minimal index"));
    }
    let delta = edge.slope()?;
    let roots = residue_roots(f.field(), &edge.residue);
    if roots.is_empty() {
        return Err(Error::ResidueNotInField { residue: render_univariate(f.field(), &edge.residue) });
    }
    let alpha = roots
        .get(choice.root)
        .ok_or_else(|| Error::precondition(format!("residue root {} requested, {} available", choice.root, roots.len())))?
        .clone();
    let xs = chart.block_vars(level);
    let basis: Vec<GroupValue> = xs.iter().map(|&i| chart.value(i).clone()).collect();
    let l = frame.integer_representation(&delta, &basis)?;
    let e0 = block_vector(chart, level, &l);
    // g = m_{i1} + i1·e for the edge's first minimal index.
    let i1 = edge.minimal_indices[0];
    let coeffs = f.coeffs_in(zi);
    let init = coeffs[i1 as usize].initial_form(chart, level)?;
    let (m1, _) = init.as_monomial().ok_or_else(|| Error::internal("initial form is not a monomial"))?;
    let g0: Vec<i64> = m1.iter().zip(&e0).map(|(&m, &e)| m as i64 + i1 as i64 * e).collect();
    let mut force = vec![e0.clone()];
    for (m, _) in f.terms() {
        let j = m[zi] as i64;
        let v: Vec<i64> = (0..m.len())
            .map(|k| if k == zi { 0 } else { m[k] as i64 + j * e0[k] - g0[k] })
            .collect();
        force.push(v);
    }
    let mut track = vec![g0];
    let mut deriv = Derivation::new(chart.clone());
    nonneg_all(&mut deriv, &mut force, &mut track, budget)?;
    let x_part = deriv.len();
    let e = to_nat(&force[0])?;
    let g = to_nat(&track[0])?;
    let cur = deriv.final_chart().clone();
    let e_block: Vec<u32> = cur.block_vars(level).iter().map(|&i| e[i]).collect();
    deriv.push(TransformStep::Mono3 { var: root.to_string(), block: level, exponents: e_block }, "reduce:scale")?;
    let zt = deriv.final_chart().vars()[zi].name.clone();
    deriv.push(
        TransformStep::Translate { var: zt, lambda: alpha.clone(), exponents: vec![0; chart.len()] },
        "reduce:translate",
    )?;
    let f1 = f.substitute(&deriv)?.divide_by_monomial(&g)?;
    let mu1 = order_at_zero(&f1.restrict_to_var(zi)).unwrap_or(u32::MAX);
    if mu1 == 0 || mu1 > nd.mu {
        return Err(Error::internal(format!("order after reduction is {mu1}, before {}", nd.mu)));
    }
    let divisor_value = cur.monomial_value_nat(&g)?;
    if mu1 < nd.mu {
        let root1 = deriv.final_chart().vars()[zi].name.clone();
        return Ok(StepReport {
            derivation: deriv,
            outcome: ReductionOutcome::Reduced { f: f1, root: root1, mu: mu1 },
            mu_before: nd.mu,
            slope: delta,
            divisor_value,
            divisor: g,
        });
    }
    // ord = μ: translate z by λ·x^l, in the original chart when l is natural.
    let mut tr = if l.iter().all(|&x| x >= 0) {
        Derivation::new(chart.clone())
    } else {
        deriv.prefix(x_part)?
    };
    let exps = if l.iter().all(|&x| x >= 0) { to_nat(&e0)? } else { e.clone() };
    tr.push(
        TransformStep::Translate { var: root.to_string(), lambda: alpha.clone(), exponents: exps.clone() },
        "reduce:translate",
    )?;
    let f2 = f.substitute(&tr)?;
    let root2 = tr.final_chart().vars()[zi].name.clone();
    Ok(StepReport {
        derivation: tr,
        outcome: ReductionOutcome::Translated { lambda: alpha, exponents: exps, f: f2, root: root2, mu: nd.mu },
        mu_before: nd.mu,
        slope: delta,
        divisor_value: frame.zero(),
        divisor: vec![0; chart.len()],
    })
}

/// A single reduction step; `μ = 1` yields [`ReductionOutcome::NewVariable`]
/// with an empty derivation.
pub fn reduction_step(
    f: &Poly,
    chart: &Chart,
    level: usize,
    root: &str,
    choice: BranchChoice,
    budget: &Budget,
) -> Result<(Derivation, ReductionOutcome)> {
    monic_coeffs(f, chart, level, root_index(chart, root)?)?;
    let nd = newton_data(f, chart, level, root)?;
    if nd.mu == 1 {
        return Ok((Derivation::new(chart.clone()), ReductionOutcome::NewVariable { f: f.clone(), root: root.to_string() }));
    }
    let r = reduce_once(f, chart, level, root, choice, budget)?;
    Ok((r.derivation, r.outcome))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    /// The series is an exact root.
    Exact,
    /// The series is truncated; `f(series)` has value above `bound`.
    Truncated { bound: GroupValue },
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub derivation: Derivation,
    /// The original root variable as a polynomial in the final chart,
    /// including the current root variable.
    pub root_expression: Poly,
    /// `root_expression` with the current root variable set to zero.
    pub series: Poly,
    pub root: String,
    pub termination: Termination,
    pub steps: Vec<StepReport>,
    pub translations: usize,
}

impl Expansion {
    pub fn is_exact(&self) -> bool {
        self.termination == Termination::Exact
    }

    /// `z = λ_1*M_1 + … + O(bound)`.
    pub fn render(&self, original_root: &str) -> Result<String> {
        let chart = self.derivation.final_chart();
        let s = self.series.render_in(chart)?;
        Ok(match &self.termination {
            Termination::Exact => format!("{original_root} = {s}"),
            Termination::Truncated { bound } => format!("{original_root} = {s} + O({bound})"),
        })
    }
}

fn drop_var(f: &Poly, var: usize) -> Poly {
    Poly::from_terms(f.field(), f.nvars(), f.terms().filter(|(e, _)| e[var] == 0).map(|(e, c)| (e.clone(), c.clone())))
}

/// Follows one branch: reduction steps until the root is exact, or until
/// `order` steps have been taken. Each step contributes one term of the
/// series.
pub fn expand_root(
    f: &Poly,
    chart: &Chart,
    level: usize,
    root: &str,
    policy: &[BranchChoice],
    order: usize,
    budget: &Budget,
) -> Result<Expansion> {
    if order == 0 {
        return Err(Error::precondition("truncation order must be at least 1"));
    }
    let zi = root_index(chart, root)?;
    monic_coeffs(f, chart, level, zi)?;
    let frame = chart.frame_arc();
    let mut deriv = Derivation::new(chart.clone());
    let mut f_cur = f.clone();
    let mut root_cur = root.to_string();
    let mut divided = frame.zero();
    let mut last_translation: Option<GroupValue> = None;
    let mut last_slope: Option<GroupValue> = None;
    let mut steps = Vec::new();
    let mut translations = 0usize;
    let termination = loop {
        budget.check(deriv.len(), "expand_root", || deriv.steps().map(|s| s.to_string()).collect())?;
        if f_cur.coeffs_in(zi)[0].is_zero() {
            break Termination::Exact;
        }
        if steps.len() >= order {
            // Every root of f_cur near the origin has value above the last
            // translation monomial, or above zero right after a scaling.
            let mu = newton_data(&f_cur, deriv.final_chart(), level, &root_cur)?.mu;
            let bound = match &last_translation {
                Some(t) => divided.add(&t.scale(mu as i64)),
                None => divided.clone(),
            };
            break Termination::Truncated { bound };
        }
        let choice = policy.get(steps.len()).copied().unwrap_or_default();
        let r = reduce_once(&f_cur, deriv.final_chart(), level, &root_cur, choice, budget)?;
        if let Some(prev) = &last_slope {
            if frame.compare(&r.slope, prev)? != Ordering::Greater {
                return Err(Error::internal("root value failed to increase after a translation"));
            }
        }
        deriv.extend(&r.derivation)?;
        divided = divided.add(&r.divisor_value);
        match &r.outcome {
            ReductionOutcome::Reduced { f, root, .. } => {
                f_cur = f.clone();
                root_cur = root.clone();
                last_slope = None;
                last_translation = None;
            }
            ReductionOutcome::Translated { f, root, .. } => {
                f_cur = f.clone();
                root_cur = root.clone();
                translations += 1;
                last_translation = Some(r.slope.clone());
                last_slope = Some(r.slope.clone());
            }
            ReductionOutcome::NewVariable { .. } => return Err(Error::internal("unexpected NewVariable")),
        }
        steps.push(r);
    };
    let z = Poly::var(f.field(), f.nvars(), zi);
    let root_expression = z.substitute(&deriv)?;
    let series = drop_var(&root_expression, zi);
    Ok(Expansion { derivation: deriv, root_expression, series, root: root_cur, termination, steps, translations })
}

/// `f(series)`: the original polynomial substituted through `deriv`, with
/// the current root variable `root` set to zero.
pub fn evaluate_at_series(f: &Poly, deriv: &Derivation, root: &str) -> Result<Poly> {
    let zi = deriv.final_chart().index_of(root)?;
    Ok(drop_var(&f.substitute(deriv)?, zi))
}

/// The original root variable under `deriv` with the current root variable
/// set to zero.
pub fn series_of(field: CoefficientField, z: &str, deriv: &Derivation, root: &str) -> Result<Poly> {
    let chart = deriv.initial();
    let zi = chart.index_of(z)?;
    let ri = deriv.final_chart().index_of(root)?;
    Ok(drop_var(&Poly::var(field, chart.len(), zi).substitute(deriv)?, ri))
}

/// Checks a root certificate: `f(series) = 0` for an exact expansion, value
/// above the bound otherwise.
pub fn series_certificate(f: &Poly, deriv: &Derivation, root: &str, termination: &Termination, level: usize) -> Result<()> {
    let fs = evaluate_at_series(f, deriv, root)?;
    let chart = deriv.final_chart();
    match termination {
        Termination::Exact => {
            if !fs.is_zero() {
                return Err(Error::Verify("exact root certificate: f(series) is not zero".into()));
            }
        }
        Termination::Truncated { bound } => {
            let v = fs.value_of(chart, level)?;
            if chart.frame().compare(&v, bound)? != Ordering::Greater {
                return Err(Error::Verify(format!("truncated root certificate: value {v} does not exceed {bound}")));
            }
        }
    }
    Ok(())
}

pub fn check_certificate(f: &Poly, expansion: &Expansion, level: usize) -> Result<()> {
    series_certificate(f, &expansion.derivation, &expansion.root, &expansion.termination, level)
}

#[derive(Debug, Clone)]
pub struct PreparedMonic {
    pub derivation: Derivation,
    pub poly: Poly,
    pub root: String,
    pub prepared: bool,
}

/// Rescales a monic relation `g = z^n + Σ a_t z^t` by `z = (x_1⋯x_r)·z0`
/// after shrinking the block values until `(x_1⋯x_r)^{n−t}` properly divides
/// every `a_t`. With a single block variable the values cannot shrink; a deficit
/// then leaves `g` unchanged and unprepared.
pub fn prepare_monic(g: &Poly, chart: &Chart, level: usize, root: &str, budget: &Budget) -> Result<PreparedMonic> {
    let zi = root_index(chart, root)?;
    let coeffs = monic_coeffs(g, chart, level, zi)?;
    let n = (coeffs.len() - 1) as i64;
    for a in &coeffs[..coeffs.len() - 1] {
        if a.is_local_unit() {
            return Err(Error::NotInMaximalIdeal("relation coefficients must lie in the maximal ideal".into()));
        }
    }
    let unprepared = || PreparedMonic { derivation: Derivation::new(chart.clone()), poly: g.clone(), root: root.to_string(), prepared: false };
    let mut deriv = Derivation::new(chart.clone());
    loop {
        let cur = deriv.final_chart().clone();
        let xs = cur.block_vars(level);
        let all_ones = block_vector(&cur, level, &vec![1; xs.len()]);
        let sub_g = g.substitute(&deriv)?;
        let mut deficits = Vec::new();
        let mut short = false;
        for (m, _) in sub_g.terms() {
            let t = m[zi] as i64;
            if t == n {
                continue;
            }
            let d: Vec<i64> = (0..m.len())
                .map(|k| if k == zi { 0 } else { m[k] as i64 - (n - t) * all_ones[k] })
                .collect();
            if cur.frame().sign(&cur.monomial_value(&d)?)? != crate::value_group::Sign::Positive {
                short = true;
                break;
            }
            deficits.push(d);
        }
        if short {
            if xs.len() < 2 {
                return Ok(unprepared());
            }
            // Divide the largest block variable by the smallest.
            let mut order: Vec<usize> = xs.clone();
            let mut err = None;
            order.sort_by(|&a, &b| {
                cur.compare(cur.value(a), cur.value(b)).unwrap_or_else(|e| {
                    err = Some(e);
                    Ordering::Equal
                })
            });
            if let Some(e) = err {
                return Err(e);
            }
            let step = TransformStep::Primitive {
                target: cur.vars()[*order.last().unwrap()].name.clone(),
                divisor: cur.vars()[order[0]].name.clone(),
            };
            deriv.push(step, "prepare:shrink")?;
            budget.check(deriv.len(), "prepare_monic", || deriv.steps().map(|s| s.to_string()).collect())?;
            continue;
        }
        nonneg_all(&mut deriv, &mut deficits, &mut [], budget)?;
        break;
    }
    let cur = deriv.final_chart().clone();
    let ones = vec![1u32; cur.block_vars(level).len()];
    deriv.push(TransformStep::Mono4 { var: root.to_string(), block: level, exponents: ones }, "prepare:scale")?;
    let mut div = vec![0u32; cur.len()];
    for &i in &cur.block_vars(level) {
        div[i] = n as u32;
    }
    let poly = g.substitute(&deriv)?.divide_by_monomial(&div)?;
    let root = deriv.final_chart().vars()[zi].name.clone();
    Ok(PreparedMonic { derivation: deriv, poly, root, prepared: true })
}

/// Outcome for one relation of a presentation.
#[derive(Debug, Clone)]
pub struct RelationReport {
    pub root: String,
    pub prepared: bool,
    pub expansion: Expansion,
    /// Step count of the full derivation after this relation.
    pub derivation_len: usize,
}

#[derive(Debug, Clone)]
pub struct Presentation {
    pub derivation: Derivation,
    pub relations: Vec<RelationReport>,
}

/// Processes the monic relations in order, each in its own root variable:
/// monic preparation, then root expansion.
pub fn uniformize_presentation(
    relations: &[(Poly, String)],
    chart: &Chart,
    level: usize,
    policy: &[BranchChoice],
    order: usize,
    budget: &Budget,
) -> Result<Presentation> {
    let mut deriv = Derivation::new(chart.clone());
    let mut reports = Vec::new();
    for (g, z) in relations {
        let zi = chart.index_of(z)?;
        let cur_root = deriv.final_chart().vars()[zi].name.clone();
        let g_cur = g.substitute(&deriv)?;
        let tag = |e: Error| match e {
            Error::Precondition(m) => Error::Precondition(format!("{z}: {m}")),
            Error::NotInMaximalIdeal(m) => Error::NotInMaximalIdeal(format!("{z}: {m}")),
            other => other,
        };
        let prep = prepare_monic(&g_cur, deriv.final_chart(), level, &cur_root, budget).map_err(tag)?;
        deriv.extend(&prep.derivation)?;
        let exp = expand_root(&prep.poly, deriv.final_chart(), level, &prep.root, policy, order, budget).map_err(tag)?;
        deriv.extend(&exp.derivation)?;
        reports.push(RelationReport {
            root: z.clone(),
            prepared: prep.prepared,
            expansion: exp,
            derivation_len: deriv.len(),
        });
    }
    Ok(Presentation { derivation: deriv, relations: reports })
}

/// Evaluates a univariate polynomial at an integer, for callers building
/// test data.
pub fn eval_univariate(coeffs: &[BigRational], t: i64) -> Option<i64> {
    let mut acc = BigRational::zero();
    for c in coeffs.iter().rev() {
        acc = acc * BigRational::from_integer(t.into()) + c;
    }
    acc.to_integer().to_i64()
}

impl fmt::Display for ReductionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Variable;
    use crate::value_group::ValuationFrame;
    use std::sync::Arc;

    fn chart1(field_vars: &[&str]) -> Chart {
        let frame = Arc::new(ValuationFrame::with_default_weights(vec![1]).unwrap());
        let extra = field_vars.iter().map(|n| Variable::new(*n, GroupValue::Infinite, VarLabel::Root)).collect();
        Chart::standard(frame).unwrap().with_extra(extra).unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn parse(c: &Chart, s: &str) -> Poly {
        Poly::parse(s, &c.names(), CoefficientField::Rationals).unwrap()
    }

    #[test]
    fn newton_examples() {
        let c = chart1(&["z"]);
        let nd = newton_data(&parse(&c, "z^2 - x1"), &c, 1, "z").unwrap();
        assert_eq!(nd.edges.len(), 1);
        assert_eq!(nd.edges[0].minimal_indices, vec![0, 2]);
        assert_eq!(nd.edges[0].slope_den, 2);
        assert!(matches!(nd.edges[0].slope(), Err(Error::ValueNotInGroup { .. })));
        let nd = newton_data(&parse(&c, "z^2 - 2*x1*z + x1^2 - x1^4"), &c, 1, "z").unwrap();
        assert_eq!(nd.edges.len(), 1);
        assert_eq!(nd.edges[0].minimal_indices, vec![0, 1, 2]);
        assert_eq!(nd.edges[0].residue, vec![q(1, 1), q(-2, 1), q(1, 1)]);
        let nd = newton_data(&parse(&c, "z"), &c, 1, "z").unwrap();
        assert_eq!(nd.mu, 1);
        assert!(matches!(newton_data(&parse(&c, "z^2 - 2"), &c, 1, "z"), Err(Error::NotInMaximalIdeal(_))));
    }

    #[test]
    fn rational_root_order() {
        let r = residue_roots(CoefficientField::Rationals, &[q(-4, 1), q(0, 1), q(1, 1)]);
        assert_eq!(r, vec![q(2, 1), q(-2, 1)]);
        let r = residue_roots(CoefficientField::Rationals, &[q(-1, 1), q(2, 1)]);
        assert_eq!(r, vec![q(1, 2)]);
        assert!(residue_roots(CoefficientField::Rationals, &[q(-2, 1), q(0, 1), q(1, 1)]).is_empty());
        let f5 = CoefficientField::prime(5).unwrap();
        let r = residue_roots(f5, &[q(-2, 1), q(0, 1), q(0, 1), q(0, 1), q(0, 1), q(1, 1)]);
        assert_eq!(r, vec![q(2, 1)]);
    }

    #[test]
    fn double_root_translates_then_reduces() {
        let c = chart1(&["z"]);
        let f = parse(&c, "z^2 - 2*x1*z + x1^2 - x1^4");
        let (d, out) = reduction_step(&f, &c, 1, "z", BranchChoice::default(), &Budget::default()).unwrap();
        assert_eq!(d.len(), 1);
        let ReductionOutcome::Translated { lambda, exponents, f: f1, root, .. } = out else { panic!("{out:?}") };
        assert_eq!(lambda, q(1, 1));
        assert_eq!(exponents, vec![1, 0]);
        assert_eq!(f1, Poly::parse(&format!("{root}^2 - x1^4"), &d.final_chart().names(), CoefficientField::Rationals).unwrap());
        let e = expand_root(&f, &c, 1, "z", &[], 10, &Budget::default()).unwrap();
        assert!(e.is_exact());
        assert_eq!(e.series, Poly::parse("x1 + x1^2", &e.derivation.final_chart().names(), CoefficientField::Rationals).unwrap());
        check_certificate(&f, &e, 1).unwrap();
    }

    #[test]
    fn failures_are_typed() {
        let c = chart1(&["z"]);
        let b = Budget::default();
        let err = reduction_step(&parse(&c, "z^2 - x1"), &c, 1, "z", BranchChoice::default(), &b).unwrap_err();
        assert!(matches!(err, Error::ValueNotInGroup { .. }));
        let err = reduction_step(&parse(&c, "z^2 - 2*x1^2"), &c, 1, "z", BranchChoice::default(), &b).unwrap_err();
        assert!(matches!(err, Error::ResidueNotInField { .. }));
        let err = reduction_step(&parse(&c, "z^2 - 2"), &c, 1, "z", BranchChoice::default(), &b).unwrap_err();
        assert!(matches!(err, Error::NotInMaximalIdeal(_)));
    }

    #[test]
    fn artin_schreier_over_f5_is_new_variable() {
        let c = chart1(&["z"]);
        let f5 = CoefficientField::prime(5).unwrap();
        let f = Poly::parse("z^5 - z - x1", &c.names(), f5).unwrap();
        let (d, out) = reduction_step(&f, &c, 1, "z", BranchChoice::default(), &Budget::default()).unwrap();
        assert!(d.is_empty());
        assert!(matches!(out, ReductionOutcome::NewVariable { .. }));
    }

    #[test]
    fn square_root_series() {
        let c = chart1(&["z"]);
        let f = parse(&c, "z^2 - x1^2 - x1^3");
        let e = expand_root(&f, &c, 1, "z", &[], 4, &Budget::default()).unwrap();
        assert!(!e.is_exact());
        let names = e.derivation.final_chart().names();
        let expect = Poly::parse("x1 + 1/2*x1^2 - 1/8*x1^3 + 1/16*x1^4", &names, CoefficientField::Rationals).unwrap();
        assert_eq!(e.series, expect);
        check_certificate(&f, &e, 1).unwrap();
    }

    #[test]
    fn linear_root_is_exact() {
        let c = chart1(&["z"]);
        let f = parse(&c, "z - x1 - x1^2");
        let e = expand_root(&f, &c, 1, "z", &[], 10, &Budget::default()).unwrap();
        assert!(e.is_exact());
        assert!(e.steps.len() <= 2);
        check_certificate(&f, &e, 1).unwrap();
    }

    #[test]
    fn prepare_examples() {
        let c = chart1(&["z"]);
        let b = Budget::default();
        let p = prepare_monic(&parse(&c, "z^2 - x1^3"), &c, 1, "z", &b).unwrap();
        assert!(p.prepared);
        let names = p.derivation.final_chart().names();
        assert_eq!(p.poly, Poly::parse(&format!("{}^2 - x1", p.root), &names, CoefficientField::Rationals).unwrap());
        let p = prepare_monic(&parse(&c, "z^2 - x1"), &c, 1, "z", &b).unwrap();
        assert!(!p.prepared);
        assert!(p.derivation.is_empty());

        let frame = Arc::new(ValuationFrame::new(vec![2], vec![crate::Weight::sqrt(2), crate::Weight::sqrt(3)]).unwrap());
        let c2 = Chart::standard(frame).unwrap().with_extra(vec![Variable::new("z", GroupValue::Infinite, VarLabel::Root)]).unwrap();
        let g = Poly::parse("z^2 - x1*x2", &c2.names(), CoefficientField::Rationals).unwrap();
        let p = prepare_monic(&g, &c2, 1, "z", &b).unwrap();
        assert!(p.prepared);
        let zi = 2;
        assert_eq!(p.poly.degree_in(zi), Some(2));
        assert_eq!(p.poly.coefficient(&[0, 0, 2]), q(1, 1));
    }

    #[test]
    fn presentation_with_two_relations() {
        let c = chart1(&["z1", "z2"]);
        let rels = vec![
            (parse(&c, "z1 - x1"), "z1".to_string()),
            (parse(&c, "z2^2 - 2*x1*z2 + x1^2 - x1^4"), "z2".to_string()),
        ];
        let p = uniformize_presentation(&rels, &c, 1, &[], 10, &Budget::default()).unwrap();
        assert_eq!(p.relations.len(), 2);
        assert!(p.relations.iter().all(|r| r.expansion.is_exact()));
        assert_eq!(p.derivation.replay().unwrap(), *p.derivation.final_chart());
        let empty = uniformize_presentation(&[], &c, 1, &[], 10, &Budget::default()).unwrap();
        assert!(empty.derivation.is_empty());
    }
}
