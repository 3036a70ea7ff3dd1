//! The ordered value group `Γ ≅ ℤ^{r_1+…+r_t}` with its chain of isolated
//! subgroups `Γ_1 ⊂ … ⊂ Γ_t`.
//!
//! Elements are integer coordinate vectors, one vector per block, over the
//! frame's fixed generator basis. The order is lexicographic on blocks with
//! the highest block dominating; inside a block two values are compared by
//! the sign of a real number `Σ d_k·w_k`, where every generator weight `w_k`
//! is an exact rational combination of square roots. Signs of such
//! combinations are decided by [`sign_of_combination`].

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn to_ordering(self) -> Ordering {
        match self {
            Sign::Negative => Ordering::Less,
            Sign::Zero => Ordering::Equal,
            Sign::Positive => Ordering::Greater,
        }
    }
}

/// Splits `n = s²·m` with `m` squarefree.
fn squarefree_part(mut n: u64) -> (u64, u64) {
    let mut outside = 1u64;
    let mut inside = 1u64;
    let mut p = 2u64;
    while p * p <= n {
        let mut e = 0;
        while n.is_multiple_of(p) {
            n /= p;
            e += 1;
        }
        outside *= p.pow(e / 2);
        if e % 2 == 1 {
            inside *= p;
        }
        p += 1;
    }
    (outside, inside * n)
}

/// Exact sign of `Σ coeffs[j]·√radicands[j]`.
///
/// Radicands are first reduced to squarefree parts and merged, so that the
/// value is zero exactly when every merged coefficient vanishes. A nonzero
/// value is then bracketed by dyadic intervals of doubling precision until
/// the interval excludes zero.
pub fn sign_of_combination(coeffs: &[BigRational], radicands: &[u64]) -> Sign {
    assert_eq!(coeffs.len(), radicands.len(), "coefficient/radicand length mismatch");
    let mut merged: BTreeMap<u64, BigRational> = BTreeMap::new();
    for (c, &r) in coeffs.iter().zip(radicands) {
        if r == 0 || c.is_zero() {
            continue;
        }
        let (out, inside) = squarefree_part(r);
        *merged.entry(inside).or_insert_with(BigRational::zero) += c * BigRational::from_integer(out.into());
    }
    merged.retain(|_, c| !c.is_zero());
    if merged.is_empty() {
        return Sign::Zero;
    }
    if merged.len() == 1 {
        let c = merged.values().next().unwrap();
        return if c.is_positive() { Sign::Positive } else { Sign::Negative };
    }
    let denom = merged
        .values()
        .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let terms: Vec<(BigInt, BigInt)> = merged
        .iter()
        .map(|(&r, c)| ((c * BigRational::from_integer(denom.clone())).to_integer(), BigInt::from(r)))
        .collect();
    let mut bits: usize = 32;
    loop {
        let mut lo = BigInt::zero();
        let mut hi = BigInt::zero();
        for (c, r) in &terms {
            // s ≤ 2^bits·√r < s + 1
            let s = (r << (2 * bits)).sqrt();
            let s1 = &s + 1u32;
            if c.is_positive() {
                lo += c * &s;
                hi += c * &s1;
            } else {
                lo += c * &s1;
                hi += c * &s;
            }
        }
        if lo.is_positive() {
            return Sign::Positive;
        }
        if hi.is_negative() {
            return Sign::Negative;
        }
        bits *= 2;
    }
}

/// An exact positive real weight `Σ c_j·√p_j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Weight {
    terms: BTreeMap<u64, BigRational>,
}

impl Weight {
    pub fn new(terms: impl IntoIterator<Item = (BigRational, u64)>) -> Self {
        let mut map: BTreeMap<u64, BigRational> = BTreeMap::new();
        for (c, r) in terms {
            *map.entry(r).or_insert_with(BigRational::zero) += c;
        }
        map.retain(|_, c| !c.is_zero());
        Weight { terms: map }
    }

    pub fn sqrt(p: u64) -> Self {
        Weight::new([(BigRational::one(), p)])
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, &BigRational)> {
        self.terms.iter().map(|(&r, c)| (r, c))
    }

    pub fn sign(&self) -> Sign {
        let (coeffs, rads): (Vec<_>, Vec<_>) = self.terms.iter().map(|(&r, c)| (c.clone(), r)).unzip();
        sign_of_combination(&coeffs, &rads)
    }

    pub fn approx(&self) -> f64 {
        self.terms
            .iter()
            .map(|(&r, c)| c.to_f64().unwrap_or(f64::NAN) * (r as f64).sqrt())
            .sum()
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (r, c)) in self.terms.iter().enumerate() {
            let (neg, abs) = (c.is_negative(), c.abs());
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            write!(f, "{}*sqrt({})", abs, r)?;
        }
        Ok(())
    }
}

/// An element of `Γ ∪ {∞}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroupValue {
    Finite(Vec<Vec<i64>>),
    Infinite,
}

impl GroupValue {
    pub fn is_infinite(&self) -> bool {
        matches!(self, GroupValue::Infinite)
    }

    pub fn blocks(&self) -> Option<&[Vec<i64>]> {
        match self {
            GroupValue::Finite(b) => Some(b),
            GroupValue::Infinite => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            GroupValue::Finite(b) => b.iter().flatten().all(|&x| x == 0),
            GroupValue::Infinite => false,
        }
    }

    fn zip_with(&self, other: &GroupValue, op: impl Fn(i64, i64) -> i64) -> GroupValue {
        match (self, other) {
            (GroupValue::Finite(a), GroupValue::Finite(b)) => GroupValue::Finite(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| op(p, q)).collect())
                    .collect(),
            ),
            _ => GroupValue::Infinite,
        }
    }

    /// Sum; `∞` absorbs.
    pub fn add(&self, other: &GroupValue) -> GroupValue {
        self.zip_with(other, |a, b| a + b)
    }

    /// Difference of finite values; `∞ − finite = ∞`.
    pub fn sub(&self, other: &GroupValue) -> GroupValue {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: i64) -> GroupValue {
        match self {
            GroupValue::Finite(b) => {
                GroupValue::Finite(b.iter().map(|v| v.iter().map(|&x| x * k).collect()).collect())
            }
            GroupValue::Infinite => {
                if k == 0 {
                    panic!("0·∞ is undefined")
                }
                GroupValue::Infinite
            }
        }
    }

    /// Highest (1-based) block index carrying a nonzero coordinate.
    pub fn top_block(&self) -> Option<usize> {
        self.blocks()?
            .iter()
            .rposition(|v| v.iter().any(|&x| x != 0))
            .map(|i| i + 1)
    }

    pub fn parse(text: &str) -> Result<GroupValue> {
        let t = text.trim();
        if t == "inf" {
            return Ok(GroupValue::Infinite);
        }
        let inner = t
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::Parse { line: 0, column: 0, message: format!("bad group value `{t}`") })?;
        let blocks = inner
            .split(';')
            .map(|b| {
                let b = b.trim();
                if b.is_empty() {
                    return Ok(Vec::new());
                }
                b.split(',')
                    .map(|x| {
                        x.trim().parse::<i64>().map_err(|e| Error::Parse {
                            line: 0,
                            column: 0,
                            message: format!("bad coordinate `{x}`: {e}"),
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupValue::Finite(blocks))
    }
}

impl fmt::Display for GroupValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupValue::Infinite => write!(f, "inf"),
            GroupValue::Finite(blocks) => {
                write!(f, "[")?;
                for (i, b) in blocks.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    let parts: Vec<String> = b.iter().map(|x| x.to_string()).collect();
                    write!(f, "{}", parts.join(","))?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Block structure plus generator weights. Blocks are indexed from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValuationFrame {
    block_sizes: Vec<usize>,
    weights: Vec<Weight>,
    offsets: Vec<usize>,
}

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

impl ValuationFrame {
    pub fn new(block_sizes: Vec<usize>, weights: Vec<Weight>) -> Result<Self> {
        if block_sizes.is_empty() {
            return Err(Error::Frame("at least one block is required".into()));
        }
        if block_sizes.contains(&0) {
            return Err(Error::Frame("block sizes must be positive".into()));
        }
        let total: usize = block_sizes.iter().sum();
        if weights.len() != total {
            return Err(Error::Frame(format!(
                "expected {total} weights, got {}",
                weights.len()
            )));
        }
        for (k, w) in weights.iter().enumerate() {
            if w.sign() != Sign::Positive {
                return Err(Error::Frame(format!("weight {k} ({w}) is not positive")));
            }
        }
        let mut offsets = Vec::with_capacity(block_sizes.len());
        let mut acc = 0;
        for &r in &block_sizes {
            offsets.push(acc);
            acc += r;
        }
        let frame = ValuationFrame { block_sizes, weights, offsets };
        for block in 1..=frame.num_blocks() {
            let ws = &frame.weights[frame.block_range(block)];
            let radicands: Vec<u64> = {
                let mut all: Vec<u64> = ws
                    .iter()
                    .flat_map(|w| w.terms().map(|(r, _)| squarefree_part(r).1))
                    .collect();
                all.sort_unstable();
                all.dedup();
                all
            };
            let matrix: linalg::QMatrix = ws
                .iter()
                .map(|w| {
                    radicands
                        .iter()
                        .map(|&rad| {
                            w.terms()
                                .filter(|(r, _)| squarefree_part(*r).1 == rad)
                                .fold(BigRational::zero(), |acc, (r, c)| {
                                    acc + c * BigRational::from_integer(squarefree_part(r).0.into())
                                })
                        })
                        .collect()
                })
                .collect();
            if linalg::rank(&matrix) != ws.len() {
                return Err(Error::Frame(format!(
                    "weights of block {block} are not rationally independent"
                )));
            }
        }
        Ok(frame)
    }

    /// Generator `j` of block `i` gets `√(k-th prime)`, with primes
    /// globally distinct across the frame.
    pub fn with_default_weights(block_sizes: Vec<usize>) -> Result<Self> {
        let total: usize = block_sizes.iter().sum();
        let weights = first_primes(total).into_iter().map(Weight::sqrt).collect();
        Self::new(block_sizes, weights)
    }

    pub fn num_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn block_size(&self, block: usize) -> usize {
        self.block_sizes[block - 1]
    }

    pub fn generator_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Weight] {
        &self.weights
    }

    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        let start = self.offsets[block - 1];
        start..start + self.block_sizes[block - 1]
    }

    pub fn zero(&self) -> GroupValue {
        GroupValue::Finite(self.block_sizes.iter().map(|&r| vec![0; r]).collect())
    }

    /// The value of generator `index` (0-based within `block`).
    pub fn generator(&self, block: usize, index: usize) -> GroupValue {
        let mut blocks: Vec<Vec<i64>> = self.block_sizes.iter().map(|&r| vec![0; r]).collect();
        blocks[block - 1][index] = 1;
        GroupValue::Finite(blocks)
    }

    pub fn conforms(&self, v: &GroupValue) -> bool {
        match v {
            GroupValue::Infinite => true,
            GroupValue::Finite(b) => {
                b.len() == self.block_sizes.len()
                    && b.iter().zip(&self.block_sizes).all(|(v, &r)| v.len() == r)
            }
        }
    }

    fn check(&self, v: &GroupValue) -> Result<()> {
        if self.conforms(v) {
            Ok(())
        } else {
            Err(Error::Frame(format!("value {v} does not match block sizes {:?}", self.block_sizes)))
        }
    }

    /// Sign of the real number `⟨coords, weights of block⟩`.
    pub fn block_sign(&self, block: usize, coords: &[i64]) -> Sign {
        let mut coeffs = Vec::new();
        let mut rads = Vec::new();
        for (k, w) in self.weights[self.block_range(block)].iter().enumerate() {
            if coords[k] == 0 {
                continue;
            }
            let d = BigRational::from_integer(coords[k].into());
            for (r, c) in w.terms() {
                coeffs.push(c * &d);
                rads.push(r);
            }
        }
        sign_of_combination(&coeffs, &rads)
    }

    /// Approximate real value of a block's coordinate vector, for diagnostics.
    pub fn block_approx(&self, block: usize, coords: &[i64]) -> f64 {
        self.weights[self.block_range(block)]
            .iter()
            .zip(coords)
            .map(|(w, &c)| w.approx() * c as f64)
            .sum()
    }

    /// Sign of a finite value in the full order.
    pub fn sign(&self, v: &GroupValue) -> Result<Sign> {
        self.check(v)?;
        match v {
            GroupValue::Infinite => Ok(Sign::Positive),
            GroupValue::Finite(b) => Ok(match v.top_block() {
                None => Sign::Zero,
                Some(top) => self.block_sign(top, &b[top - 1]),
            }),
        }
    }

    /// Total order on `Γ ∪ {∞}`: `∞` is the maximum, and for finite values
    /// the highest block where they differ decides.
    pub fn compare(&self, a: &GroupValue, b: &GroupValue) -> Result<Ordering> {
        self.check(a)?;
        self.check(b)?;
        Ok(match (a, b) {
            (GroupValue::Infinite, GroupValue::Infinite) => Ordering::Equal,
            (GroupValue::Infinite, _) => Ordering::Greater,
            (_, GroupValue::Infinite) => Ordering::Less,
            _ => self.sign(&a.sub(b))?.to_ordering(),
        })
    }

    /// Drops blocks below `level`: the view of the specialization `ν_level`
    /// with value group `Γ/Γ_{level−1}`.
    pub fn project(&self, v: &GroupValue, level: usize) -> GroupValue {
        match v {
            GroupValue::Infinite => GroupValue::Infinite,
            GroupValue::Finite(b) => GroupValue::Finite(
                b.iter()
                    .enumerate()
                    .map(|(i, x)| if i + 1 < level { vec![0; x.len()] } else { x.clone() })
                    .collect(),
            ),
        }
    }

    /// Comparison under `ν_level`.
    pub fn compare_at(&self, a: &GroupValue, b: &GroupValue, level: usize) -> Result<Ordering> {
        self.compare(&self.project(a, level), &self.project(b, level))
    }

    /// The rank-one quotient view `ν̄_level`: infinite when any block above
    /// `level` is nonzero, otherwise only the block-`level` coordinates
    /// survive (lower blocks are zeroed).
    pub fn truncate_at_level(&self, v: &GroupValue, level: usize) -> Result<GroupValue> {
        self.check(v)?;
        if level == 0 || level > self.num_blocks() {
            return Err(Error::precondition(format!(
                "level {level} out of range 1..={}",
                self.num_blocks()
            )));
        }
        Ok(match v {
            GroupValue::Infinite => GroupValue::Infinite,
            GroupValue::Finite(b) => {
                if b[level..].iter().flatten().any(|&x| x != 0) {
                    GroupValue::Infinite
                } else {
                    GroupValue::Finite(
                        b.iter()
                            .enumerate()
                            .map(|(i, x)| if i + 1 == level { x.clone() } else { vec![0; x.len()] })
                            .collect(),
                    )
                }
            }
        })
    }

    /// Coordinates of `v` in the basis `basis`, which must be a ℤ-basis of
    /// the block quotient `Γ_i/Γ_{i−1}` where `i` is the basis' top block.
    /// Returns `Ok(None)` when the coordinates exist but some is negative,
    /// and [`Error::NotInSpan`] when `v` is outside the integer span.
    pub fn nonneg_representation(&self, v: &GroupValue, basis: &[GroupValue]) -> Result<Option<Vec<u64>>> {
        Ok(self
            .integer_representation(v, basis)?
            .into_iter()
            .map(|x| u64::try_from(x).ok())
            .collect())
    }

    /// Signed integer coordinates of `v` in `basis` (see
    /// [`Self::nonneg_representation`]).
    pub fn integer_representation(&self, v: &GroupValue, basis: &[GroupValue]) -> Result<Vec<i64>> {
        self.check(v)?;
        let block = basis
            .iter()
            .map(|b| b.top_block())
            .collect::<Option<Vec<_>>>()
            .and_then(|tops| {
                let first = *tops.first()?;
                tops.iter().all(|&t| t == first).then_some(first)
            })
            .ok_or_else(|| Error::precondition("basis values must be finite, nonzero and share one top block"))?;
        if basis.len() != self.block_size(block) {
            return Err(Error::precondition(format!(
                "basis has {} elements, block {block} has rank {}",
                basis.len(),
                self.block_size(block)
            )));
        }
        let rows: Vec<Vec<i64>> = basis.iter().map(|b| b.blocks().unwrap()[block - 1].clone()).collect();
        if !linalg::is_unit_det(&linalg::integer_determinant(&rows)) {
            return Err(Error::precondition("basis values are not a ℤ-basis of the block"));
        }
        let GroupValue::Finite(vb) = v else {
            return Err(Error::NotInSpan);
        };
        if vb[block..].iter().flatten().any(|&x| x != 0) {
            return Err(Error::NotInSpan);
        }
        let sol = linalg::solve_in_row_basis(&rows, &vb[block - 1]).ok_or(Error::NotInSpan)?;
        sol.into_iter()
            .map(|x| {
                if x.is_integer() {
                    x.to_integer().to_i64().ok_or(Error::NotInSpan)
                } else {
                    Err(Error::NotInSpan)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    #[test]
    fn sign_examples() {
        assert_eq!(sign_of_combination(&[r(0), r(0)], &[2, 3]), Sign::Zero);
        assert_eq!(sign_of_combination(&[r(1), r(-1)], &[2, 3]), Sign::Negative);
        assert_eq!(sign_of_combination(&[r(5), r(-4)], &[2, 3]), Sign::Positive);
    }

    #[test]
    fn non_squarefree_radicands_merge() {
        // √8 − 2√2 = 0
        assert_eq!(sign_of_combination(&[r(1), r(-2)], &[8, 2]), Sign::Zero);
        // √4 − 2 = 0 with 2 = 2·√1
        assert_eq!(sign_of_combination(&[r(1), r(-2)], &[4, 1]), Sign::Zero);
    }

    #[test]
    fn compare_examples() {
        let frame = ValuationFrame::new(vec![2, 1], vec![Weight::sqrt(2), Weight::sqrt(3), Weight::sqrt(5)]).unwrap();
        let a = GroupValue::Finite(vec![vec![1, 0], vec![0]]);
        let b = GroupValue::Finite(vec![vec![5, 5], vec![0]]);
        assert_eq!(frame.compare(&a, &b).unwrap(), Ordering::Less);
        assert_eq!(frame.compare(&a, &a).unwrap(), Ordering::Equal);
        let c = GroupValue::Finite(vec![vec![-100, -100], vec![1]]);
        assert_eq!(frame.compare(&c, &frame.zero()).unwrap(), Ordering::Greater);
        assert_eq!(frame.compare(&GroupValue::Infinite, &c).unwrap(), Ordering::Greater);
        assert_eq!(frame.compare(&GroupValue::Infinite, &GroupValue::Infinite).unwrap(), Ordering::Equal);
    }

    #[test]
    fn frame_mismatch_is_error() {
        let frame = ValuationFrame::with_default_weights(vec![2]).unwrap();
        let bad = GroupValue::Finite(vec![vec![1]]);
        assert!(matches!(frame.compare(&bad, &frame.zero()), Err(Error::Frame(_))));
    }

    #[test]
    fn truncate_examples() {
        let frame = ValuationFrame::with_default_weights(vec![2, 1]).unwrap();
        let v = GroupValue::Finite(vec![vec![3, 1], vec![0]]);
        assert_eq!(frame.truncate_at_level(&v, 1).unwrap(), v);
        let w = GroupValue::Finite(vec![vec![3, 1], vec![2]]);
        assert_eq!(frame.truncate_at_level(&w, 1).unwrap(), GroupValue::Infinite);
        assert_eq!(frame.truncate_at_level(&GroupValue::Infinite, 2).unwrap(), GroupValue::Infinite);
        assert_eq!(
            frame.truncate_at_level(&w, 2).unwrap(),
            GroupValue::Finite(vec![vec![0, 0], vec![2]])
        );
        assert!(frame.truncate_at_level(&w, 3).is_err());
    }

    #[test]
    fn representation_examples() {
        let frame = ValuationFrame::with_default_weights(vec![2]).unwrap();
        let b = [frame.generator(1, 0), frame.generator(1, 1)];
        let v = GroupValue::Finite(vec![vec![1, 2]]);
        assert_eq!(frame.nonneg_representation(&v, &b).unwrap(), Some(vec![1, 2]));
        let w = GroupValue::Finite(vec![vec![1, -1]]);
        assert_eq!(frame.nonneg_representation(&w, &b).unwrap(), None);
        let sheared = [
            GroupValue::Finite(vec![vec![1, 1]]),
            GroupValue::Finite(vec![vec![0, 1]]),
        ];
        assert_eq!(frame.nonneg_representation(&v, &sheared).unwrap(), Some(vec![1, 1]));
        let non_basis = [
            GroupValue::Finite(vec![vec![2, 0]]),
            GroupValue::Finite(vec![vec![0, 1]]),
        ];
        assert!(frame.nonneg_representation(&v, &non_basis).is_err());
        let framed = ValuationFrame::with_default_weights(vec![2, 1]).unwrap();
        let b2 = [framed.generator(1, 0), framed.generator(1, 1)];
        let high = GroupValue::Finite(vec![vec![1, 0], vec![1]]);
        assert_eq!(framed.nonneg_representation(&high, &b2), Err(Error::NotInSpan));
    }

    #[test]
    fn rendering_round_trip() {
        let v = GroupValue::Finite(vec![vec![3, -1], vec![0]]);
        assert_eq!(v.to_string(), "[3,-1;0]");
        assert_eq!(GroupValue::parse("[3,-1;0]").unwrap(), v);
        assert_eq!(GroupValue::parse("inf").unwrap(), GroupValue::Infinite);
    }

    #[test]
    fn dependent_weights_rejected() {
        let w = vec![Weight::sqrt(2), Weight::new([(r(2), 2)])];
        assert!(ValuationFrame::new(vec![2], w).is_err());
        assert!(ValuationFrame::new(vec![1], vec![Weight::new([(r(-1), 2)])]).is_err());
    }
}
