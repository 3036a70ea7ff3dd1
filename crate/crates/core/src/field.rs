//! Exact coefficient fields: `ℚ` and prime fields `𝔽_p`.
//!
//! Elements of both are carried as `BigRational`; prime-field elements are
//! always kept as the least nonnegative residue with denominator one.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientField {
    Rationals,
    Prime(u64),
}

fn is_prime(p: u64) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

impl CoefficientField {
    pub fn prime(p: u64) -> Result<Self> {
        if is_prime(p) {
            Ok(CoefficientField::Prime(p))
        } else {
            Err(Error::precondition(format!("{p} is not prime")))
        }
    }

    pub fn characteristic(&self) -> u64 {
        match self {
            CoefficientField::Rationals => 0,
            CoefficientField::Prime(p) => *p,
        }
    }

    fn modulus(&self) -> Option<BigInt> {
        match self {
            CoefficientField::Rationals => None,
            CoefficientField::Prime(p) => Some(BigInt::from(*p)),
        }
    }

    fn inv_mod(a: &BigInt, p: &BigInt) -> Option<BigInt> {
        let e = a.extended_gcd(p);
        if !e.gcd.is_one() {
            return None;
        }
        Some(e.x.mod_floor(p))
    }

    /// Canonical representative. Over `𝔽_p` a denominator divisible by `p`
    /// has no image and is reported as an error.
    pub fn try_normalize(&self, x: BigRational) -> Result<BigRational> {
        match self.modulus() {
            None => Ok(x),
            Some(p) => {
                let num = x.numer().mod_floor(&p);
                let den = x.denom().mod_floor(&p);
                let inv = Self::inv_mod(&den, &p)
                    .ok_or_else(|| Error::precondition(format!("{x} has no image in F_{p}")))?;
                Ok(BigRational::from_integer((num * inv).mod_floor(&p)))
            }
        }
    }

    pub fn normalize(&self, x: BigRational) -> BigRational {
        self.try_normalize(x).expect("denominator invertible in the field")
    }

    pub fn from_i64(&self, n: i64) -> BigRational {
        self.normalize(BigRational::from_integer(n.into()))
    }

    pub fn one(&self) -> BigRational {
        BigRational::one()
    }

    pub fn add(&self, a: &BigRational, b: &BigRational) -> BigRational {
        self.normalize(a + b)
    }

    pub fn sub(&self, a: &BigRational, b: &BigRational) -> BigRational {
        self.normalize(a - b)
    }

    pub fn mul(&self, a: &BigRational, b: &BigRational) -> BigRational {
        self.normalize(a * b)
    }

    pub fn neg(&self, a: &BigRational) -> BigRational {
        self.normalize(-a)
    }

    pub fn inv(&self, a: &BigRational) -> Option<BigRational> {
        if a.is_zero() {
            return None;
        }
        match self.modulus() {
            None => Some(a.recip()),
            Some(p) => Self::inv_mod(&a.to_integer(), &p).map(BigRational::from_integer),
        }
    }

    pub fn pow(&self, a: &BigRational, e: u32) -> BigRational {
        let mut acc = BigRational::one();
        for _ in 0..e {
            acc = self.mul(&acc, a);
        }
        acc
    }

    /// Binomial coefficient as a field element.
    pub fn binomial(&self, n: u32, k: u32) -> BigRational {
        let mut c = BigInt::one();
        for i in 0..k {
            c = c * BigInt::from(n - i) / BigInt::from(i + 1);
        }
        self.normalize(BigRational::from_integer(c))
    }

    /// Iterates the elements `0, 1, …, p−1` of a prime field.
    pub fn elements(&self) -> Option<impl Iterator<Item = BigRational>> {
        match self {
            CoefficientField::Rationals => None,
            CoefficientField::Prime(p) => Some((0..*p).map(|k| BigRational::from_integer(k.into()))),
        }
    }

    /// Renders a canonical coefficient: integers, `a/b` in lowest terms.
    pub fn render(&self, c: &BigRational) -> String {
        if c.is_integer() {
            c.to_integer().to_string()
        } else {
            format!("{}/{}", c.numer(), c.denom())
        }
    }

    pub fn is_negative_repr(&self, c: &BigRational) -> bool {
        matches!(self, CoefficientField::Rationals) && c.is_negative()
    }

    pub fn as_u64(&self, c: &BigRational) -> Option<u64> {
        c.to_integer().to_u64()
    }
}

impl fmt::Display for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::Rationals => write!(f, "Q"),
            CoefficientField::Prime(p) => write!(f, "F {p}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prime_field_normalizes() {
        let f = CoefficientField::prime(5).unwrap();
        assert_eq!(f.from_i64(-3), BigRational::from_integer(2.into()));
        let half = f.normalize(BigRational::new(1.into(), 2.into()));
        assert_eq!(half, BigRational::from_integer(3.into()));
        assert_eq!(f.inv(&f.from_i64(2)).unwrap(), f.from_i64(3));
        assert!(f.try_normalize(BigRational::new(1.into(), 5.into())).is_err());
    }

    #[test]
    fn composite_characteristic_rejected() {
        assert!(CoefficientField::prime(6).is_err());
    }

    #[test]
    fn binomials() {
        let q = CoefficientField::Rationals;
        assert_eq!(q.binomial(5, 2), q.from_i64(10));
        let f = CoefficientField::prime(5).unwrap();
        assert_eq!(f.binomial(5, 2), f.from_i64(0));
    }
}
