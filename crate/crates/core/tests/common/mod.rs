//! Independent oracles shared by the integration tests. None of them call
//! into the engine's arithmetic beyond reading polynomial terms.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use vforge::chart::{Chart, Derivation, TransformStep, VarLabel};
use vforge::{CoefficientField, Poly};

pub fn q(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

pub fn qq(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Sign of `Σ c_k·√p_k` from a `digits`-digit truncated decimal expansion.
/// `None` when the magnitude is within the truncation error.
pub fn decimal_sign(terms: &[(BigRational, u64)], digits: u32) -> Option<Ordering> {
    let scale = BigInt::from(10u32).pow(digits);
    let mut acc = BigRational::zero();
    let mut err = BigRational::zero();
    for (c, p) in terms {
        let s = (BigInt::from(*p) * &scale * &scale).sqrt();
        acc += c * BigRational::new(s, scale.clone());
        err += c.abs() * BigRational::new(BigInt::one(), scale.clone());
    }
    if acc.abs() <= err {
        None
    } else {
        Some(acc.cmp(&BigRational::zero()))
    }
}

/// Coefficients of `√(1+x)` up to `x^{n-1}` from `s² = 1 + x`.
pub fn sqrt_one_plus_x(n: usize) -> Vec<BigRational> {
    let mut s = vec![q(1)];
    for k in 1..n {
        let target = if k == 1 { q(1) } else { q(0) };
        let mut conv = q(0);
        for i in 1..k {
            conv += &s[i] * &s[k - i];
        }
        s.push((target - conv) / q(2));
    }
    s
}

/// Polynomial in `x` by ascending degree.
pub type XPoly = Vec<BigRational>;
/// Polynomial in `z` with `XPoly` coefficients.
pub type ZPoly = Vec<XPoly>;

pub fn xtrim(mut p: XPoly) -> XPoly {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

pub fn xadd(a: &XPoly, b: &XPoly) -> XPoly {
    let n = a.len().max(b.len());
    xtrim((0..n).map(|i| a.get(i).cloned().unwrap_or_default() + b.get(i).cloned().unwrap_or_default()).collect())
}

pub fn xmul(a: &XPoly, b: &XPoly) -> XPoly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![q(0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    xtrim(out)
}

pub fn zmul(a: &ZPoly, b: &ZPoly) -> ZPoly {
    let mut out = vec![Vec::new(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = xadd(&out[i + j], &xmul(x, y));
        }
    }
    out
}

/// `∏ (z − s_k(x))`.
pub fn planted(roots: &[XPoly]) -> ZPoly {
    let mut f: ZPoly = vec![vec![q(1)]];
    for s in roots {
        let neg: XPoly = s.iter().map(|c| -c).collect();
        f = zmul(&f, &vec![xtrim(neg), vec![q(1)]]);
    }
    f
}

/// `f(x, s(x))` by Horner's rule; zero iff `z − s` divides `f`.
pub fn eval_at_root(f: &ZPoly, s: &XPoly) -> XPoly {
    let mut acc: XPoly = Vec::new();
    for c in f.iter().rev() {
        acc = xadd(&xmul(&acc, s), c);
    }
    acc
}

/// Engine polynomial in variables `(x, z)` at indices 0 and 1.
pub fn to_engine(f: &ZPoly, field: CoefficientField) -> Poly {
    let mut terms = Vec::new();
    for (j, a) in f.iter().enumerate() {
        for (i, c) in a.iter().enumerate() {
            if !c.is_zero() {
                terms.push((vec![i as u32, j as u32], c.clone()));
            }
        }
    }
    Poly::from_terms(field, 2, terms)
}

/// Univariate series in `x` read off an engine polynomial whose other
/// variables all have exponent zero.
pub fn from_engine_x(p: &Poly, x: usize) -> XPoly {
    let mut out = Vec::new();
    for (e, c) in p.terms() {
        assert!(e.iter().enumerate().all(|(k, &v)| k == x || v == 0), "series involves other variables");
        let d = e[x] as usize;
        if out.len() <= d {
            out.resize(d + 1, q(0));
        }
        out[d] = c.clone();
    }
    xtrim(out)
}

fn ord(p: &XPoly) -> Option<usize> {
    p.iter().position(|c| !c.is_zero())
}

fn rational_roots_sorted(coeffs: &[BigRational]) -> Vec<BigRational> {
    // Brute force over p/q with |p|, |q| bounded by the coefficient sizes.
    let lo = coeffs.iter().position(|c| !c.is_zero()).unwrap();
    let hi = coeffs.iter().rposition(|c| !c.is_zero()).unwrap();
    if lo == hi {
        return Vec::new();
    }
    let eval = |t: &BigRational| coeffs.iter().rev().fold(q(0), |acc, c| acc * t + c);
    let mut denoms = BigInt::one();
    for c in coeffs {
        denoms *= c.denom();
    }
    let a0 = (&coeffs[lo] * BigRational::from_integer(denoms.clone())).to_integer().abs();
    let ad = (&coeffs[hi] * BigRational::from_integer(denoms)).to_integer().abs();
    let mut found = Vec::new();
    let bound = |n: &BigInt| -> i64 { n.to_string().parse::<i64>().unwrap_or(i64::MAX).min(2000) };
    for num in 1..=bound(&a0) {
        if (&a0 % BigInt::from(num)) != BigInt::zero() {
            continue;
        }
        for den in 1..=bound(&ad) {
            if (&ad % BigInt::from(den)) != BigInt::zero() {
                continue;
            }
            for t in [qq(num, den), qq(-num, den)] {
                if eval(&t).is_zero() && !found.contains(&t) {
                    found.push(t);
                }
            }
        }
    }
    found.sort_by(|a, b| a.abs().cmp(&b.abs()).then(b.cmp(a)));
    found
}

/// Classical Newton–Puiseux over `ℚ` with integer slopes: follows the
/// `choices[k]` = (edge, root) branch at step `k` (default `(0, 0)`), edges
/// ordered by ascending slope, roots by ascending absolute value with the
/// positive one first. Returns the series terms `(coefficient, exponent)`
/// and whether the root was found exactly.
pub fn newton_puiseux(f: &ZPoly, choices: &[(usize, usize)], max_terms: usize) -> Result<(Vec<(BigRational, i64)>, bool), String> {
    let mut f = f.clone();
    let mut shift = 0i64;
    let mut terms = Vec::new();
    for step in 0..max_terms {
        if f[0].is_empty() {
            return Ok((terms, true));
        }
        let mu = f.iter().position(|a| a.first().is_some_and(|c| !c.is_zero())).ok_or("no unit coefficient")?;
        if mu == 0 {
            return Err("not in the maximal ideal".into());
        }
        let pts: Vec<(i64, i64)> = f
            .iter()
            .enumerate()
            .take(mu + 1)
            .filter_map(|(j, a)| ord(a).map(|o| (j as i64, o as i64)))
            .collect();
        let mut hull: Vec<(i64, i64)> = Vec::new();
        for &p in &pts {
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if (b.1 - a.1) * (p.0 - a.0) - (p.1 - a.1) * (b.0 - a.0) >= 0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        let mut edges: Vec<((i64, i64), (i64, i64))> = hull.windows(2).map(|w| (w[0], w[1])).collect();
        edges.reverse();
        let (ce, cr) = choices.get(step).copied().unwrap_or((0, 0));
        let (a, b) = *edges.get(ce).ok_or("edge index out of range")?;
        if (a.1 - b.1) % (b.0 - a.0) != 0 {
            return Err("fractional slope".into());
        }
        let delta = (a.1 - b.1) / (b.0 - a.0);
        let rho = a.1 + a.0 * delta;
        let mut residue = vec![q(0); b.0 as usize + 1];
        for &(j, o) in &pts {
            if o + j * delta == rho {
                residue[j as usize] = f[j as usize][o as usize].clone();
            }
        }
        let roots = rational_roots_sorted(&residue);
        let alpha = roots.get(cr).ok_or("no rational residue root")?.clone();
        shift += delta;
        terms.push((alpha.clone(), shift));
        // f(x, x^δ(α + z1)) / x^ρ
        let n = f.len() - 1;
        let mut g: ZPoly = vec![Vec::new(); n + 1];
        for (j, aj) in f.iter().enumerate() {
            // a_j · x^{jδ} · (α + z1)^j
            let mut binom = q(1);
            for k in 0..=j {
                let coef = &binom * pow(&alpha, (j - k) as u32);
                let mut term: XPoly = vec![q(0); j * delta as usize];
                term.extend(aj.iter().cloned());
                let term: XPoly = term.into_iter().map(|c| c * &coef).collect();
                g[k] = xadd(&g[k], &term);
                binom = binom * q((j - k) as i64) / q(k as i64 + 1);
            }
        }
        for c in g.iter_mut() {
            let r = rho as usize;
            assert!(c.iter().take(r).all(|v| v.is_zero()), "division by x^rho failed");
            *c = if c.len() > r { c[r..].to_vec() } else { Vec::new() };
        }
        f = g;
    }
    Ok((terms, f[0].is_empty()))
}

pub fn pow(a: &BigRational, e: u32) -> BigRational {
    (0..e).fold(q(1), |acc, _| acc * a)
}

/// Evaluates a polynomial at a rational point.
pub fn eval_poly(p: &Poly, point: &[BigRational]) -> BigRational {
    let field = p.field();
    let mut acc = q(0);
    for (e, c) in p.terms() {
        let mut t = c.clone();
        for (x, &k) in point.iter().zip(e) {
            t *= pow(x, k);
        }
        acc += t;
    }
    field.normalize(acc)
}

/// Pulls a point of the final chart back to the initial chart by applying
/// each step's defining formula, last step first.
pub fn pull_back(deriv: &Derivation, point: &[BigRational]) -> Vec<BigRational> {
    let mut charts: Vec<Chart> = vec![deriv.initial().clone()];
    for s in deriv.steps() {
        let next = charts.last().unwrap().apply_step(s).unwrap();
        charts.push(next);
    }
    let mut vals = point.to_vec();
    for (k, s) in deriv.steps().enumerate().collect::<Vec<_>>().into_iter().rev() {
        let before = &charts[k];
        let idx = |n: &str| before.vars().iter().position(|v| v.name == n).unwrap();
        let block_mono = |vals: &[BigRational], block: usize, exps: &[u32]| {
            let xs: Vec<usize> = before
                .vars()
                .iter()
                .enumerate()
                .filter(|(_, v)| v.label == VarLabel::Block(block))
                .map(|(i, _)| i)
                .collect();
            xs.iter().zip(exps).fold(q(1), |acc, (&i, &e)| acc * pow(&vals[i], e))
        };
        match s {
            TransformStep::Primitive { target, divisor } => {
                let (t, d) = (idx(target), idx(divisor));
                vals[t] = &vals[t] * &vals[d];
            }
            TransformStep::Mono1 { block, matrix } => {
                let xs: Vec<usize> = before
                    .vars()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.label == VarLabel::Block(*block))
                    .map(|(i, _)| i)
                    .collect();
                let new: Vec<BigRational> = matrix
                    .iter()
                    .map(|row| xs.iter().zip(row).fold(q(1), |acc, (&i, &a)| acc * pow(&vals[i], a as u32)))
                    .collect();
                for (&i, v) in xs.iter().zip(new) {
                    vals[i] = v;
                }
            }
            TransformStep::Mono2 { var, block, exponents }
            | TransformStep::Mono3 { var, block, exponents }
            | TransformStep::Mono4 { var, block, exponents } => {
                let u = idx(var);
                vals[u] = block_mono(&vals, *block, exponents) * &vals[u];
            }
            TransformStep::Translate { var, lambda, exponents } => {
                let u = idx(var);
                let m = vals.iter().zip(exponents).fold(q(1), |acc, (x, &e)| acc * pow(x, e));
                vals[u] = &vals[u] + lambda * m;
            }
            TransformStep::Rename { .. } => {}
        }
    }
    vals
}

/// Exponent maps for reports in tests: term exponent → coefficient.
pub fn term_map(p: &Poly) -> BTreeMap<Vec<u32>, BigRational> {
    p.terms().map(|(e, c)| (e.clone(), c.clone())).collect()
}
