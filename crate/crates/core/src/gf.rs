//! Arithmetic in GF(2^m) for 2 <= m <= 16.
//!
//! Elements are stored as the integer whose bit `i` is the coefficient of
//! `X^i` in the polynomial representation. Multiplication and inversion go
//! through log/antilog tables built once when the field is constructed.

use std::fmt;
use std::ops::{Add, AddAssign, Sub, SubAssign};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `X^4 + X + 1`, the field used by every worked example.
pub const POLY_GF16: u32 = 0b1_0011;
/// `X^8 + X^4 + X^3 + X^2 + 1`.
pub const POLY_GF256: u32 = 0x11d;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("extension degree {0} outside 2..=16")]
    DegreeOutOfRange(u32),
    #[error("polynomial {poly:#x} has degree {actual}, expected {expected}")]
    DegreeMismatch { poly: u32, expected: u32, actual: u32 },
    #[error("polynomial {poly:#x} is not primitive: X has order {order}, expected {expected}")]
    NotPrimitive { poly: u32, order: u32, expected: u32 },
    #[error("division by zero")]
    DivideByZero,
    #[error("value {value} is not an element of GF(2^{m})")]
    OutOfRange { value: u32, m: u32 },
    #[error("operands belong to different fields")]
    FieldMismatch,
}

/// A field element. Addition is XOR and needs no field context; every
/// other operation goes through [`Field`].
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gf(pub u16);

impl Gf {
    pub const ZERO: Gf = Gf(0);
    pub const ONE: Gf = Gf(1);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl fmt::Debug for Gf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl fmt::Display for Gf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

// Characteristic two: addition and subtraction are both XOR.
impl Add for Gf {
    type Output = Gf;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf) -> Gf {
        Gf(self.0 ^ rhs.0)
    }
}

impl Sub for Gf {
    type Output = Gf;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: Gf) -> Gf {
        Gf(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Gf) {
        self.0 ^= rhs.0;
    }
}

impl SubAssign for Gf {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)]
    fn sub_assign(&mut self, rhs: Gf) {
        self.0 ^= rhs.0;
    }
}

struct Tables {
    m: u32,
    poly: u32,
    // log[0] is unused.
    log: Vec<u16>,
    // exp has 2(q-1) entries so log[a] + log[b] never needs reduction.
    exp: Vec<u16>,
}

/// GF(2^m) defined by a primitive polynomial. Cheap to clone.
#[derive(Clone)]
pub struct Field {
    tables: Arc<Tables>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.tables, &other.tables)
            || (self.tables.m == other.tables.m && self.tables.poly == other.tables.poly)
    }
}

impl Eq for Field {}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{}, poly={:#x})", self.tables.m, self.tables.poly)
    }
}

fn degree(poly: u32) -> u32 {
    if poly == 0 {
        0
    } else {
        31 - poly.leading_zeros()
    }
}

impl Field {
    /// Builds GF(2^m) from `poly`, a bitmask of g(X) including the `X^m` term.
    pub fn new(m: u32, poly: u32) -> Result<Self, FieldError> {
        if !(2..=16).contains(&m) {
            return Err(FieldError::DegreeOutOfRange(m));
        }
        let actual = degree(poly);
        if actual != m {
            return Err(FieldError::DegreeMismatch { poly, expected: m, actual });
        }
        let q = 1u32 << m;
        let order = q - 1;
        let mut exp = vec![0u16; 2 * order as usize];
        let mut log = vec![0u16; q as usize];
        let mut x: u32 = 1;
        for i in 0..order {
            if i > 0 && x == 1 {
                return Err(FieldError::NotPrimitive { poly, order: i, expected: order });
            }
            exp[i as usize] = x as u16;
            log[x as usize] = i as u16;
            x <<= 1;
            if x & q != 0 {
                x ^= poly;
            }
        }
        if x != 1 {
            // X^(q-1) must return to 1 for an irreducible modulus.
            return Err(FieldError::NotPrimitive { poly, order: 0, expected: order });
        }
        for i in order..2 * order {
            exp[i as usize] = exp[(i - order) as usize];
        }
        Ok(Field { tables: Arc::new(Tables { m, poly, log, exp }) })
    }

    /// GF(16) with g(X) = X^4 + X + 1.
    pub fn gf16() -> Self {
        Field::new(4, POLY_GF16).expect("X^4+X+1 is primitive")
    }

    /// GF(256) with g(X) = X^8 + X^4 + X^3 + X^2 + 1.
    pub fn gf256() -> Self {
        Field::new(8, POLY_GF256).expect("0x11d is primitive")
    }

    pub fn m(&self) -> u32 {
        self.tables.m
    }

    pub fn poly(&self) -> u32 {
        self.tables.poly
    }

    /// Field size q = 2^m.
    pub fn order(&self) -> usize {
        1usize << self.tables.m
    }

    /// Bytes needed to hold one symbol.
    pub fn symbol_bytes(&self) -> usize {
        (self.tables.m as usize).div_ceil(8)
    }

    pub fn contains(&self, a: Gf) -> bool {
        (a.0 as usize) < self.order()
    }

    pub fn element(&self, value: u32) -> Result<Gf, FieldError> {
        if (value as usize) < self.order() {
            Ok(Gf(value as u16))
        } else {
            Err(FieldError::OutOfRange { value, m: self.tables.m })
        }
    }

    /// The primitive element raised to `i`; negative exponents are allowed.
    pub fn beta_pow(&self, i: i64) -> Gf {
        let order = (self.order() - 1) as i64;
        Gf(self.tables.exp[i.rem_euclid(order) as usize])
    }

    /// Discrete logarithm base beta; `None` for zero.
    pub fn log(&self, a: Gf) -> Option<u32> {
        if a.is_zero() {
            None
        } else {
            Some(self.tables.log[a.0 as usize] as u32)
        }
    }

    pub fn add(&self, a: Gf, b: Gf) -> Gf {
        a + b
    }

    #[inline]
    pub fn mul(&self, a: Gf, b: Gf) -> Gf {
        if a.is_zero() || b.is_zero() {
            return Gf::ZERO;
        }
        let t = &self.tables;
        Gf(t.exp[t.log[a.0 as usize] as usize + t.log[b.0 as usize] as usize])
    }

    pub fn inv(&self, a: Gf) -> Result<Gf, FieldError> {
        if a.is_zero() {
            return Err(FieldError::DivideByZero);
        }
        let order = self.order() - 1;
        let t = &self.tables;
        Ok(Gf(t.exp[(order - t.log[a.0 as usize] as usize) % order]))
    }

    pub fn div(&self, a: Gf, b: Gf) -> Result<Gf, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Gf, e: u64) -> Gf {
        if e == 0 {
            return Gf::ONE;
        }
        match self.log(a) {
            None => Gf::ZERO,
            Some(l) => {
                let order = (self.order() - 1) as u64;
                Gf(self.tables.exp[((l as u64 * (e % order)) % order) as usize])
            }
        }
    }

    /// All q elements in increasing integer order.
    pub fn elements(&self) -> impl Iterator<Item = Gf> {
        (0..self.order()).map(|v| Gf(v as u16))
    }

    /// The default evaluation-point sequence: beta^1, beta^2, ..., beta^(q-1) = 1, then 0.
    pub fn point_sequence(&self) -> impl Iterator<Item = Gf> + '_ {
        let order = self.order() as i64 - 1;
        (1..=order).map(|i| self.beta_pow(i)).chain(std::iter::once(Gf::ZERO))
    }

    /// Renders `a` as a power of beta ("0", "1", "b^7").
    pub fn power_notation(&self, a: Gf) -> String {
        match self.log(a) {
            None => "0".to_string(),
            Some(0) => "1".to_string(),
            Some(1) => "b".to_string(),
            Some(l) => format!("b^{l}"),
        }
    }
}
