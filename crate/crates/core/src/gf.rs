//! Exact arithmetic over GF(2^k) (k ≤ 64) and prime fields GF(p).
//!
//! GF(2^k) elements are bit strings reduced by a fixed low-weight irreducible
//! polynomial per `k` (see [`REDUCTION_POLYNOMIALS`]). Every commitment and
//! hash value in the crate is computed with this table, so values reproduce
//! bit-for-bit across implementations that use the same table.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("field size mismatch: {0} vs {1}")]
    Mismatch(u64, u64),
    #[error("unsupported field parameter {0}")]
    BadParameter(u64),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("value {value} does not fit in the field ({what})")]
    OutOfRange { value: u64, what: String },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("malformed hex string {0:?}")]
    BadHex(String),
}

/// Low terms of the reduction polynomial for each `k` in `1..=64`, indexed by
/// `k - 1`. The full polynomial is `x^k + low(x)`. Trinomials `x^k + x^a + 1`
/// use the smallest such `a`; when no trinomial is irreducible the pentanomial
/// `x^k + x^a + x^b + x^c + 1` with lexicographically smallest `(a, b, c)` is
/// used.
pub const REDUCTION_POLYNOMIALS: [u64; 64] = [
    0x1, 0x3, 0x3, 0x3, 0x5, 0x3, 0x3, 0x1b, // 1..8
    0x3, 0x9, 0x5, 0x9, 0x1b, 0x21, 0x3, 0x2b, // 9..16
    0x9, 0x9, 0x27, 0x9, 0x5, 0x3, 0x21, 0x1b, // 17..24
    0x9, 0x1b, 0x27, 0x3, 0x5, 0x3, 0x9, 0x8d, // 25..32
    0x401, 0x81, 0x5, 0x201, 0x53, 0x63, 0x11, 0x39, // 33..40
    0x9, 0x81, 0x59, 0x21, 0x1b, 0x3, 0x21, 0x2d, // 41..48
    0x201, 0x1d, 0x4b, 0x9, 0x47, 0x201, 0x81, 0x95, // 49..56
    0x11, 0x80001, 0x95, 0x3, 0x27, 0x20000001, 0x3, 0x1b, // 57..64
];

/// The low terms of the reduction polynomial for `k`.
pub fn reduction_polynomial(k: u32) -> Result<u64, GfError> {
    if (1..=64).contains(&k) {
        Ok(REDUCTION_POLYNOMIALS[k as usize - 1])
    } else {
        Err(GfError::BadParameter(k as u64))
    }
}

fn mask(k: u32) -> u64 {
    if k == 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

/// An element of GF(2^k).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gf2k {
    bits: u64,
    k: u32,
}

impl Gf2k {
    pub fn new(bits: u64, k: u32) -> Result<Self, GfError> {
        reduction_polynomial(k)?;
        if bits & !mask(k) != 0 {
            return Err(GfError::OutOfRange {
                value: bits,
                what: format!("GF(2^{k})"),
            });
        }
        Ok(Self { bits, k })
    }

    pub fn zero(k: u32) -> Self {
        Self::new(0, k).expect("field size in 1..=64")
    }

    pub fn one(k: u32) -> Self {
        Self::new(1, k).expect("field size in 1..=64")
    }

    /// Embeds a bit as the zero or the one of GF(2^k).
    pub fn from_bit(bit: bool, k: u32) -> Self {
        if bit {
            Self::one(k)
        } else {
            Self::zero(k)
        }
    }

    /// Keeps the low `k` bits of `bits`.
    pub fn truncate(bits: u64, k: u32) -> Self {
        Self::new(bits & mask(k), k).expect("field size in 1..=64")
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn k(self) -> u32 {
        self.k
    }

    pub fn is_zero(self) -> bool {
        self.bits == 0
    }

    /// Number of elements in the field.
    pub fn order(k: u32) -> u128 {
        1u128 << k
    }

    /// All elements of GF(2^k); only sensible for small `k`.
    pub fn all(k: u32) -> impl Iterator<Item = Gf2k> {
        assert!(k <= 24, "refusing to enumerate GF(2^{k})");
        (0..(1u64 << k)).map(move |b| Gf2k { bits: b, k })
    }

    fn check(self, other: Self) -> Result<(), GfError> {
        if self.k == other.k {
            Ok(())
        } else {
            Err(GfError::Mismatch(self.k as u64, other.k as u64))
        }
    }

    pub fn checked_add(self, other: Self) -> Result<Self, GfError> {
        self.check(other)?;
        Ok(Self {
            bits: self.bits ^ other.bits,
            k: self.k,
        })
    }

    /// Carry-less product reduced by the field's polynomial.
    pub fn checked_mul(self, other: Self) -> Result<Self, GfError> {
        self.check(other)?;
        let k = self.k;
        let low = REDUCTION_POLYNOMIALS[k as usize - 1];
        let top = 1u64 << (k - 1);
        let mut a = self.bits;
        let mut b = other.bits;
        let mut acc = 0u64;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            let carry = a & top != 0;
            a = (a << 1) & mask(k);
            if carry {
                a ^= low;
            }
        }
        Ok(Self { bits: acc, k })
    }

    pub fn pow(self, mut e: u128) -> Self {
        let mut base = self;
        let mut acc = Self::one(self.k);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via `a^(2^k - 2)`.
    pub fn inv(self) -> Result<Self, GfError> {
        if self.is_zero() {
            return Err(GfError::ZeroInverse);
        }
        Ok(self.pow(Self::order(self.k) - 2))
    }

    /// Lowercase hex, most significant bit first, `ceil(k/4)` digits.
    pub fn to_hex(self) -> String {
        let width = (self.k as usize).div_ceil(4);
        format!("{:0width$x}", self.bits, width = width)
    }

    pub fn from_hex(s: &str, k: u32) -> Result<Self, GfError> {
        let bits = u64::from_str_radix(s, 16).map_err(|_| GfError::BadHex(s.to_string()))?;
        Self::new(bits, k)
    }
}

impl fmt::Debug for Gf2k {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf2k(0x{}, k={})", self.to_hex(), self.k)
    }
}

impl fmt::Display for Gf2k {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Gf2k {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

/// `n` for a uniform draw over GF(2^k), with 0 standing for all of `u64`.
pub fn field_range(k: u32) -> u64 {
    if k >= 64 {
        0
    } else {
        1u64 << k
    }
}

impl Add for Gf2k {
    type Output = Gf2k;
    fn add(self, rhs: Gf2k) -> Gf2k {
        self.checked_add(rhs).expect("GF(2^k) operands of equal k")
    }
}

impl Mul for Gf2k {
    type Output = Gf2k;
    fn mul(self, rhs: Gf2k) -> Gf2k {
        self.checked_mul(rhs).expect("GF(2^k) operands of equal k")
    }
}

/// Free-function form of the GF(2^k) product.
pub fn gf2k_mul(a: Gf2k, b: Gf2k) -> Result<Gf2k, GfError> {
    a.checked_mul(b)
}

pub fn gf2k_inv(a: Gf2k) -> Result<Gf2k, GfError> {
    a.inv()
}

/// Deterministic primality test for 64-bit integers (Miller-Rabin with the
/// first twelve primes as witnesses).
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut a: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, a);
            }
            a = mulmod(a, a);
            e >>= 1;
        }
        acc
    };
    'witness: for &a in &WITNESSES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `p >= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// An element of GF(p).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fp {
    value: u64,
    p: u64,
}

impl Fp {
    /// Reduces `value` into the field; `p` must be prime.
    pub fn new(value: u64, p: u64) -> Result<Self, GfError> {
        if !is_prime(p) {
            return Err(GfError::NotPrime(p));
        }
        if p > u32::MAX as u64 {
            return Err(GfError::BadParameter(p));
        }
        Ok(Self { value: value % p, p })
    }

    /// Constructor for a modulus already known to be prime.
    pub(crate) fn raw(value: u64, p: u64) -> Self {
        debug_assert!(value < p);
        Self { value, p }
    }

    pub fn from_i64(v: i64, p: u64) -> Self {
        let m = v.rem_euclid(p as i64) as u64;
        Self::raw(m, p)
    }

    pub fn zero(p: u64) -> Self {
        Self::raw(0, p)
    }

    pub fn one(p: u64) -> Self {
        Self::raw(1 % p, p)
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn modulus(self) -> u64 {
        self.p
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    fn check(self, other: Self) -> Result<(), GfError> {
        if self.p == other.p {
            Ok(())
        } else {
            Err(GfError::Mismatch(self.p, other.p))
        }
    }

    pub fn checked_add(self, o: Self) -> Result<Self, GfError> {
        self.check(o)?;
        Ok(Self::raw((self.value + o.value) % self.p, self.p))
    }

    pub fn checked_sub(self, o: Self) -> Result<Self, GfError> {
        self.check(o)?;
        Ok(Self::raw((self.value + self.p - o.value) % self.p, self.p))
    }

    pub fn checked_mul(self, o: Self) -> Result<Self, GfError> {
        self.check(o)?;
        Ok(Self::raw(self.value * o.value % self.p, self.p))
    }

    /// Inverse by the extended Euclidean algorithm.
    pub fn inv(self) -> Result<Self, GfError> {
        if self.value == 0 {
            return Err(GfError::ZeroInverse);
        }
        let (mut old_r, mut r) = (self.value as i64, self.p as i64);
        let (mut old_s, mut s) = (1i64, 0i64);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        Ok(Self::from_i64(old_s, self.p))
    }

    pub fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Self::one(self.p);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    pub fn to_hex(self) -> String {
        format!("{:x}", self.value)
    }
}

impl Serialize for Fp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.value)
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.p)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for Fp {
    type Output = Fp;
    fn add(self, rhs: Fp) -> Fp {
        self.checked_add(rhs).expect("GF(p) operands of equal modulus")
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, rhs: Fp) -> Fp {
        self.checked_sub(rhs).expect("GF(p) operands of equal modulus")
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, rhs: Fp) -> Fp {
        self.checked_mul(rhs).expect("GF(p) operands of equal modulus")
    }
}

impl Neg for Fp {
    type Output = Fp;
    fn neg(self) -> Fp {
        Fp::raw((self.p - self.value) % self.p, self.p)
    }
}

/// A field element tagged with its field, as it appears in JSON reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldValue {
    pub hex: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
}

impl From<Gf2k> for FieldValue {
    fn from(x: Gf2k) -> Self {
        FieldValue {
            hex: x.to_hex(),
            k: Some(x.k()),
            p: None,
        }
    }
}

impl From<Fp> for FieldValue {
    fn from(x: Fp) -> Self {
        FieldValue {
            hex: x.to_hex(),
            k: None,
            p: Some(x.modulus()),
        }
    }
}
