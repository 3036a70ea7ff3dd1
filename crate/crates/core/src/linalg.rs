//! Small dense exact linear algebra over `ℚ`, enough for basis checks,
//! coordinate solves and unimodular inverses.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type QMatrix = Vec<Vec<BigRational>>;

pub fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn to_q_matrix(m: &[Vec<i64>]) -> QMatrix {
    m.iter().map(|row| row.iter().map(|&x| q(x)).collect()).collect()
}

/// Row-reduces `m` in place and returns the rank.
fn row_reduce(m: &mut QMatrix) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = m[rank][col].recip();
        for c in col..cols {
            let v = &m[rank][c] * &inv;
            m[rank][c] = v;
        }
        for r in 0..rows {
            if r != rank && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for c in col..cols {
                    let v = &m[rank][c] * &factor;
                    m[r][c] -= v;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

pub fn rank(m: &QMatrix) -> usize {
    let mut work = m.clone();
    row_reduce(&mut work)
}

pub fn determinant(m: &QMatrix) -> BigRational {
    let n = m.len();
    let mut a = m.clone();
    let mut det = BigRational::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return BigRational::zero();
        };
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        det *= a[col][col].clone();
        let inv = a[col][col].recip();
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] * &inv;
            for c in col..n {
                let v = &a[col][c] * &factor;
                a[r][c] -= v;
            }
        }
    }
    det
}

pub fn integer_determinant(m: &[Vec<i64>]) -> BigInt {
    determinant(&to_q_matrix(m)).to_integer()
}

/// Inverse of a square matrix, `None` when singular.
pub fn inverse(m: &QMatrix) -> Option<QMatrix> {
    let n = m.len();
    let mut aug: QMatrix = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
            r
        })
        .collect();
    if row_reduce(&mut aug) < n {
        return None;
    }
    for (i, row) in aug.iter().enumerate() {
        if !row[i].is_one() {
            return None;
        }
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Inverse of a unimodular integer matrix.
pub fn unimodular_inverse(m: &[Vec<i64>]) -> Option<Vec<Vec<i64>>> {
    let inv = inverse(&to_q_matrix(m))?;
    inv.into_iter()
        .map(|row| {
            row.into_iter()
                .map(|x| if x.is_integer() { x.to_integer().to_i64() } else { None })
                .collect::<Option<Vec<_>>>()
        })
        .collect()
}

/// Solves `x · basis = target` for the row vector `x`, where `basis` is a
/// list of row vectors. Returns `None` when no solution exists; the caller
/// guarantees the rows are linearly independent.
pub fn solve_in_row_basis(basis: &[Vec<i64>], target: &[i64]) -> Option<Vec<BigRational>> {
    let k = basis.len();
    let dim = target.len();
    // Columns are basis rows; augmented with target.
    let mut m: QMatrix = (0..dim)
        .map(|c| {
            let mut row: Vec<BigRational> = basis.iter().map(|b| q(b[c])).collect();
            row.push(q(target[c]));
            row
        })
        .collect();
    row_reduce(&mut m);
    let mut x = vec![BigRational::zero(); k];
    for row in &m {
        match row[..k].iter().position(|v| !v.is_zero()) {
            Some(p) => x[p] = row[k].clone(),
            None => {
                if !row[k].is_zero() {
                    return None;
                }
            }
        }
    }
    Some(x)
}

pub fn is_unit_det(d: &BigInt) -> bool {
    d.abs().is_one()
}
