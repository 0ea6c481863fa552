//! Polynomials over GF(p): sparse multivariate, univariate in coefficient
//! form, and multilinear extensions of Boolean tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::Fp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("parameter error: {0}")]
    Parameter(String),
}

/// Anything that can be evaluated at a point of GF(p)^n.
pub trait FieldFn: Send + Sync {
    fn arity(&self) -> usize;
    fn modulus(&self) -> u64;
    fn eval(&self, point: &[Fp]) -> Fp;
}

/// Sparse polynomial; terms keyed by exponent vector, zero terms dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultivariatePolynomial {
    p: u64,
    nvars: usize,
    terms: BTreeMap<Vec<u16>, u64>,
}

impl MultivariatePolynomial {
    pub fn zero(p: u64, nvars: usize) -> Self {
        Self {
            p,
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(c: u64, p: u64, nvars: usize) -> Self {
        let mut s = Self::zero(p, nvars);
        s.add_term(vec![0; nvars], c % p);
        s
    }

    pub fn var(i: usize, p: u64, nvars: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut s = Self::zero(p, nvars);
        s.add_term(e, 1);
        s
    }

    fn add_term(&mut self, exps: Vec<u16>, c: u64) {
        let p = self.p;
        let slot = self.terms.entry(exps).or_insert(0);
        *slot = (*slot + c) % p;
        self.terms.retain(|_, v| *v != 0);
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (e, &c) in &o.terms {
            out.add_term(e.clone(), c);
        }
        out
    }

    pub fn neg(&self) -> Self {
        let p = self.p;
        Self {
            p,
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, &c)| (e.clone(), (p - c) % p)).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero(self.p, self.nvars);
        for (e1, &c1) in &self.terms {
            for (e2, &c2) in &o.terms {
                let e: Vec<u16> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2 % self.p);
            }
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u16], u64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn individual_degree(&self, var: usize) -> usize {
        self.terms.keys().map(|e| e[var] as usize).max().unwrap_or(0)
    }

    pub fn max_individual_degree(&self) -> usize {
        (0..self.nvars).map(|v| self.individual_degree(v)).max().unwrap_or(0)
    }
}

impl FieldFn for MultivariatePolynomial {
    fn arity(&self) -> usize {
        self.nvars
    }

    fn modulus(&self) -> u64 {
        self.p
    }

    fn eval(&self, point: &[Fp]) -> Fp {
        assert_eq!(point.len(), self.nvars, "evaluation point has wrong arity");
        let mut acc = Fp::zero(self.p);
        for (e, &c) in &self.terms {
            let mut t = Fp::raw(c, self.p);
            for (x, &k) in point.iter().zip(e) {
                if k > 0 {
                    t = t * x.pow(k as u64);
                }
            }
            acc += t;
        }
        acc
    }
}

/// Univariate polynomial in coefficient form, lowest degree first.
pub fn eval_univariate(coeffs: &[Fp], x: Fp) -> Fp {
    let mut acc = Fp::zero(x.modulus());
    for c in coeffs.iter().rev() {
        acc = acc * x + *c;
    }
    acc
}

/// Coefficients of the unique polynomial of degree ≤ `values.len() - 1`
/// through `(j, values[j])` for `j = 0, 1, ...`.
pub fn interpolate(values: &[Fp], p: u64) -> Vec<Fp> {
    let n = values.len();
    let mut out = vec![Fp::zero(p); n];
    for (j, &yj) in values.iter().enumerate() {
        // Basis polynomial L_j(X) = Π_{m≠j} (X − m) / (j − m).
        let mut basis = vec![Fp::one(p)];
        let mut denom = Fp::one(p);
        for m in 0..n {
            if m == j {
                continue;
            }
            let xm = Fp::from_i64(m as i64, p);
            let mut next = vec![Fp::zero(p); basis.len() + 1];
            for (d, &b) in basis.iter().enumerate() {
                next[d + 1] += b;
                next[d] += -(b * xm);
            }
            basis = next;
            denom = denom * (Fp::from_i64(j as i64, p) - xm);
        }
        let scale = yj * denom.inv().expect("interpolation nodes are distinct mod p");
        for (o, b) in out.iter_mut().zip(basis) {
            *o += b * scale;
        }
    }
    out
}

/// Multiplies two univariate polynomials.
pub fn mul_univariate(a: &[Fp], b: &[Fp], p: u64) -> Vec<Fp> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![Fp::zero(p); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Boolean function on {0,1}^s, stored as a truth table indexed by the
/// integer whose bit `j` is coordinate `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoolTable {
    pub s: usize,
    pub values: Vec<bool>,
}

impl BoolTable {
    pub fn new(s: usize, values: Vec<bool>) -> Result<Self, PolyError> {
        if s > 16 || values.len() != 1 << s {
            return Err(PolyError::Parameter(format!(
                "table for s={s} needs {} entries, got {}",
                1u64 << s.min(63),
                values.len()
            )));
        }
        Ok(Self { s, values })
    }

    pub fn from_fn(s: usize, f: impl Fn(usize) -> bool) -> Self {
        Self {
            s,
            values: (0..1usize << s).map(f).collect(),
        }
    }

    pub fn at(&self, bits: &[bool]) -> bool {
        let idx = bits.iter().enumerate().map(|(j, &b)| (b as usize) << j).sum::<usize>();
        self.values[idx]
    }

    /// Every Boolean function on {0,1}^s (only for s ≤ 4).
    pub fn all(s: usize) -> Vec<BoolTable> {
        assert!(s <= 4, "refusing to enumerate all functions on {s} bits");
        let n = 1usize << s;
        (0..1u64 << n)
            .map(|code| BoolTable::from_fn(s, |i| (code >> i) & 1 == 1))
            .collect()
    }
}

/// Multilinear extension of a Boolean table over GF(p).
#[derive(Debug, Clone)]
pub struct Mle {
    pub table: BoolTable,
    pub p: u64,
}

pub const MLE_MAX_S: usize = 12;

impl Mle {
    pub fn new(table: BoolTable, p: u64) -> Result<Self, PolyError> {
        if table.s > MLE_MAX_S {
            return Err(PolyError::Parameter(format!("s={} exceeds {MLE_MAX_S}", table.s)));
        }
        Ok(Self { table, p })
    }

    /// `Σ_w A(w) Π_j (w_j y_j + (1 − w_j)(1 − y_j))`.
    pub fn eval(&self, y: &[Fp]) -> Fp {
        assert_eq!(y.len(), self.table.s);
        let p = self.p;
        let one = Fp::one(p);
        let mut acc = Fp::zero(p);
        for (w, &v) in self.table.values.iter().enumerate() {
            if !v {
                continue;
            }
            let mut term = one;
            for (j, &yj) in y.iter().enumerate() {
                term = term * if (w >> j) & 1 == 1 { yj } else { one - yj };
            }
            acc += term;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f(v: u64, p: u64) -> Fp {
        Fp::new(v, p).unwrap()
    }

    #[test]
    fn polynomial_arithmetic() {
        let p = 7;
        let x = MultivariatePolynomial::var(0, p, 2);
        let y = MultivariatePolynomial::var(1, p, 2);
        let one = MultivariatePolynomial::constant(1, p, 2);
        let q = one.sub(&x).mul(&y); // (1 − x) y
        assert_eq!(q.eval(&[f(3, p), f(2, p)]), f(3, p)); // (1−3)·2 = −4 ≡ 3
        assert_eq!(q.individual_degree(0), 1);
        assert_eq!(q.mul(&q).max_individual_degree(), 2);
        assert_eq!(x.sub(&x), MultivariatePolynomial::zero(p, 2));
    }

    #[test]
    fn interpolation_roundtrip() {
        let p = 101;
        let coeffs = vec![f(5, p), f(0, p), f(7, p), f(1, p)];
        let values: Vec<Fp> = (0..4).map(|j| eval_univariate(&coeffs, f(j, p))).collect();
        assert_eq!(interpolate(&values, p), coeffs);
    }

    #[test]
    fn mle_examples() {
        let p = 13;
        let zero = Mle::new(BoolTable::from_fn(2, |_| false), p).unwrap();
        assert_eq!(zero.eval(&[f(5, p), f(7, p)]), f(0, p));
        let id = Mle::new(BoolTable::new(1, vec![false, true]).unwrap(), p).unwrap();
        for v in 0..p {
            assert_eq!(id.eval(&[f(v, p)]), f(v, p));
        }
    }

    /// Folds the table one coordinate at a time: the value at `y` is
    /// `(1 − y_j)·left + y_j·right` for the two halves along coordinate `j`.
    fn fold_eval(table: &BoolTable, y: &[Fp], p: u64) -> Fp {
        let mut layer: Vec<Fp> = table.values.iter().map(|&b| Fp::new(b as u64, p).unwrap()).collect();
        for &yj in y {
            layer = layer
                .chunks(2)
                .map(|pair| (Fp::one(p) - yj) * pair[0] + yj * pair[1])
                .collect();
        }
        layer[0]
    }

    #[test]
    fn mle_matches_folding_evaluator() {
        let p = 97;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t = BoolTable::new(3, (0..8).map(|_| rng.gen()).collect()).unwrap();
            let y: Vec<Fp> = (0..3).map(|_| f(rng.gen_range(0..p), p)).collect();
            let m = Mle::new(t.clone(), p).unwrap();
            assert_eq!(m.eval(&y), fold_eval(&t, &y, p));
        }
    }

    #[test]
    fn mle_agrees_on_cube() {
        let p = 11;
        for t in BoolTable::all(3) {
            let m = Mle::new(t.clone(), p).unwrap();
            for w in 0..8usize {
                let bits: Vec<bool> = (0..3).map(|j| (w >> j) & 1 == 1).collect();
                let y: Vec<Fp> = bits.iter().map(|&b| f(b as u64, p)).collect();
                assert_eq!(m.eval(&y).value() == 1, t.at(&bits));
            }
        }
    }
}
