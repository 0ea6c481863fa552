//! Two-party strategies `P(x,y|a,b)`, the box zoo, and locality-class tests.
//!
//! Indices: `a`, `b` are the left and right inputs, `x`, `y` the left and
//! right outputs. Tables are stored row-major in `(a, b, x, y)` order.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::Gf2k;
use crate::lp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NonlocalError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("box output not available until both inputs are supplied")]
    NotReady,
}

type Result<T> = std::result::Result<T, NonlocalError>;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    pub a: usize,
    pub b: usize,
    pub x: usize,
    pub y: usize,
    table: Vec<BigRational>,
}

impl Strategy {
    pub fn new(a: usize, b: usize, x: usize, y: usize, table: Vec<BigRational>) -> Result<Self> {
        if a == 0 || b == 0 || x == 0 || y == 0 {
            return Err(NonlocalError::Parameter("empty alphabet".into()));
        }
        if table.len() != a * b * x * y {
            return Err(NonlocalError::Parameter(format!(
                "table has {} entries, expected {}",
                table.len(),
                a * b * x * y
            )));
        }
        let s = Self { a, b, x, y, table };
        for ai in 0..a {
            for bi in 0..b {
                let mut total = BigRational::zero();
                for xi in 0..x {
                    for yi in 0..y {
                        let p = s.p(ai, bi, xi, yi);
                        if p.is_negative() {
                            return Err(NonlocalError::Parameter(format!(
                                "negative probability at (a={ai}, b={bi}, x={xi}, y={yi})"
                            )));
                        }
                        total += p;
                    }
                }
                if !total.is_one() {
                    return Err(NonlocalError::Parameter(format!(
                        "row (a={ai}, b={bi}) sums to {total}"
                    )));
                }
            }
        }
        Ok(s)
    }

    /// Builds a strategy from a probability function.
    pub fn from_fn(
        a: usize,
        b: usize,
        x: usize,
        y: usize,
        f: impl Fn(usize, usize, usize, usize) -> BigRational,
    ) -> Result<Self> {
        let mut table = Vec::with_capacity(a * b * x * y);
        for ai in 0..a {
            for bi in 0..b {
                for xi in 0..x {
                    for yi in 0..y {
                        table.push(f(ai, bi, xi, yi));
                    }
                }
            }
        }
        Self::new(a, b, x, y, table)
    }

    fn idx(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        ((a * self.b + b) * self.x + x) * self.y + y
    }

    pub fn p(&self, a: usize, b: usize, x: usize, y: usize) -> &BigRational {
        &self.table[self.idx(a, b, x, y)]
    }

    pub fn table(&self) -> &[BigRational] {
        &self.table
    }

    fn same_shape(&self, o: &Strategy) -> bool {
        (self.a, self.b, self.x, self.y) == (o.a, o.b, o.x, o.y)
    }

    /// Left marginal `Σ_y P(x,y|a,b)`.
    pub fn left_marginal(&self, a: usize, b: usize, x: usize) -> BigRational {
        (0..self.y).map(|y| self.p(a, b, x, y).clone()).sum()
    }

    /// Right marginal `Σ_x P(x,y|a,b)`.
    pub fn right_marginal(&self, a: usize, b: usize, y: usize) -> BigRational {
        (0..self.x).map(|x| self.p(a, b, x, y).clone()).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct StrategyJson {
    #[serde(rename = "A")]
    a: usize,
    #[serde(rename = "B")]
    b: usize,
    #[serde(rename = "X")]
    x: usize,
    #[serde(rename = "Y")]
    y: usize,
    table: Vec<(i64, i64)>,
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let table = self
            .table
            .iter()
            .map(|r| {
                let n = r.numer().to_i64();
                let d = r.denom().to_i64();
                match (n, d) {
                    (Some(n), Some(d)) => Ok((n, d)),
                    _ => Err(serde::ser::Error::custom("probability does not fit in i64")),
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        StrategyJson {
            a: self.a,
            b: self.b,
            x: self.x,
            y: self.y,
            table,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = StrategyJson::deserialize(d)?;
        let mut table = Vec::with_capacity(raw.table.len());
        for (n, den) in raw.table {
            if den == 0 {
                return Err(serde::de::Error::custom("zero denominator"));
            }
            table.push(q(n, den));
        }
        Strategy::new(raw.a, raw.b, raw.x, raw.y, table).map_err(serde::de::Error::custom)
    }
}

/// A pair of local response functions `x = f_A(a)`, `y = f_B(b)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub f_a: Vec<usize>,
    pub f_b: Vec<usize>,
}

impl DeterministicStrategy {
    pub fn to_strategy(&self, x: usize, y: usize) -> Result<Strategy> {
        if self.f_a.iter().any(|&v| v >= x) || self.f_b.iter().any(|&v| v >= y) {
            return Err(NonlocalError::Parameter("response outside output alphabet".into()));
        }
        Strategy::from_fn(self.f_a.len(), self.f_b.len(), x, y, |a, b, xi, yi| {
            if self.f_a[a] == xi && self.f_b[b] == yi {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        })
    }
}

/// Enumerates every deterministic strategy on the given alphabets.
pub fn deterministic_strategies(
    a: usize,
    b: usize,
    x: usize,
    y: usize,
    cap: u64,
) -> Result<Vec<DeterministicStrategy>> {
    let count = (x as f64).powi(a as i32) * (y as f64).powi(b as i32);
    if count > cap as f64 {
        return Err(NonlocalError::Capacity(format!(
            "{count} deterministic strategies exceed the cap of {cap}"
        )));
    }
    let fa = all_functions(a, x);
    let fb = all_functions(b, y);
    let mut out = Vec::with_capacity(fa.len() * fb.len());
    for f in &fa {
        for g in &fb {
            out.push(DeterministicStrategy {
                f_a: f.clone(),
                f_b: g.clone(),
            });
        }
    }
    Ok(out)
}

fn all_functions(domain: usize, range: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..domain {
        let mut next = Vec::with_capacity(out.len() * range);
        for f in &out {
            for v in 0..range {
                let mut g = f.clone();
                g.push(v);
                next.push(g);
            }
        }
        out = next;
    }
    out
}

/// `Σ |P_U − P_U'|` over all entries.
pub fn strategy_distance(u: &Strategy, v: &Strategy) -> Result<BigRational> {
    if !u.same_shape(v) {
        return Err(NonlocalError::Parameter("alphabet mismatch".into()));
    }
    Ok(u.table.iter().zip(&v.table).map(|(p, q)| (p - q).abs()).sum())
}

/// Each side's output marginal is independent of the other side's input.
pub fn is_no_signalling(u: &Strategy) -> bool {
    for a in 0..u.a {
        for x in 0..u.x {
            let first = u.left_marginal(a, 0, x);
            if (1..u.b).any(|b| u.left_marginal(a, b, x) != first) {
                return false;
            }
        }
    }
    for b in 0..u.b {
        for y in 0..u.y {
            let first = u.right_marginal(0, b, y);
            if (1..u.a).any(|a| u.right_marginal(a, b, y) != first) {
                return false;
            }
        }
    }
    true
}

pub const DEFAULT_VERTEX_CAP: u64 = 1_000_000;
/// Above this many deterministic vertices the locality LP runs in `f64`.
pub const EXACT_VERTEX_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Exact(Vec<(DeterministicStrategy, BigRational)>),
    Approximate {
        weights: Vec<(DeterministicStrategy, f64)>,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalityVerdict {
    pub local: bool,
    /// Convex decomposition into deterministic strategies when `local`.
    pub witness: Option<Weights>,
}

/// Decides membership in the convex hull of deterministic strategies.
pub fn is_local(u: &Strategy, cap: u64) -> Result<LocalityVerdict> {
    let vertices = deterministic_strategies(u.a, u.b, u.x, u.y, cap)?;
    let rows = u.table.len();
    if vertices.len() <= EXACT_VERTEX_LIMIT {
        let mut a = vec![vec![BigRational::zero(); vertices.len()]; rows];
        for (j, v) in vertices.iter().enumerate() {
            for ai in 0..u.a {
                for bi in 0..u.b {
                    a[u.idx(ai, bi, v.f_a[ai], v.f_b[bi])][j] = BigRational::one();
                }
            }
        }
        let Some(lambda) = lp::feasible(&a, &u.table) else {
            return Ok(LocalityVerdict { local: false, witness: None });
        };
        let weights: Vec<_> = vertices
            .into_iter()
            .zip(lambda)
            .filter(|(_, w)| !w.is_zero())
            .collect();
        let mut rebuilt = vec![BigRational::zero(); rows];
        for (v, w) in &weights {
            for ai in 0..u.a {
                for bi in 0..u.b {
                    rebuilt[u.idx(ai, bi, v.f_a[ai], v.f_b[bi])] += w;
                }
            }
        }
        assert_eq!(rebuilt, u.table, "locality witness does not reproduce the strategy");
        Ok(LocalityVerdict {
            local: true,
            witness: Some(Weights::Exact(weights)),
        })
    } else {
        let target: Vec<f64> = u.table.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect();
        let mut a = vec![vec![0.0f64; vertices.len()]; rows];
        for (j, v) in vertices.iter().enumerate() {
            for ai in 0..u.a {
                for bi in 0..u.b {
                    a[u.idx(ai, bi, v.f_a[ai], v.f_b[bi])][j] = 1.0;
                }
            }
        }
        let Some(lambda) = lp::feasible(&a, &target) else {
            return Ok(LocalityVerdict { local: false, witness: None });
        };
        let weights: Vec<_> = vertices
            .into_iter()
            .zip(lambda)
            .filter(|(_, w)| *w > lp::FLOAT_TOLERANCE)
            .collect();
        Ok(LocalityVerdict {
            local: true,
            witness: Some(Weights::Approximate {
                weights,
                tolerance: lp::FLOAT_TOLERANCE,
            }),
        })
    }
}

/// `(1/4) Σ_{a,b} P(x ⊕ y = a ∧ b | a, b)` for binary strategies.
pub fn chsh_value(u: &Strategy) -> Result<BigRational> {
    if (u.a, u.b, u.x, u.y) != (2, 2, 2, 2) {
        return Err(NonlocalError::Parameter("CHSH needs binary alphabets".into()));
    }
    let mut total = BigRational::zero();
    for a in 0..2 {
        for b in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    if x ^ y == a & b {
                        total += u.p(a, b, x, y);
                    }
                }
            }
        }
    }
    Ok(total / BigInt::from(4))
}

/// Largest CHSH value over all deterministic binary strategies.
pub fn chsh_local_max() -> BigRational {
    deterministic_strategies(2, 2, 2, 2, 16)
        .expect("16 strategies")
        .iter()
        .map(|d| chsh_value(&d.to_strategy(2, 2).expect("binary")).expect("binary"))
        .max()
        .expect("nonempty")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoxKind {
    Id,
    Empty,
    Pr,
    FieldPr { k: u32 },
    RSig,
    LSig,
    Sig,
}

impl BoxKind {
    /// Parses the names used in configs and on the command line; `k` is
    /// required exactly for `FIELD_PR`.
    pub fn parse(name: &str, k: Option<u32>) -> Result<Self> {
        let kind = match name.to_ascii_uppercase().as_str() {
            "ID" => BoxKind::Id,
            "EMPTY" => BoxKind::Empty,
            "PR" => BoxKind::Pr,
            "FIELD_PR" => {
                let k = k.ok_or_else(|| NonlocalError::Parameter("FIELD_PR needs k".into()))?;
                if !(1..=64).contains(&k) {
                    return Err(NonlocalError::Parameter(format!("k={k} out of range")));
                }
                return Ok(BoxKind::FieldPr { k });
            }
            "R_SIG" => BoxKind::RSig,
            "L_SIG" => BoxKind::LSig,
            "SIG" => BoxKind::Sig,
            other => return Err(NonlocalError::Parameter(format!("unknown box kind {other}"))),
        };
        if k.is_some() {
            return Err(NonlocalError::Parameter(format!("{name} takes no k")));
        }
        Ok(kind)
    }

    /// Size of each side's input alphabet.
    pub fn input_size(self) -> u64 {
        match self {
            BoxKind::FieldPr { k } => 1u64.checked_shl(k).unwrap_or(0),
            _ => 2,
        }
    }

    fn output_size(self) -> u64 {
        match self {
            BoxKind::Id => 4,
            _ => self.input_size(),
        }
    }

    /// Outputs can be read on one side before the other side's input arrives.
    pub fn is_no_signalling_kind(self) -> bool {
        matches!(self, BoxKind::Empty | BoxKind::Pr | BoxKind::FieldPr { .. })
    }

    /// The kind's defining strategy. `FIELD_PR` is only tabulated for k ≤ 3.
    pub fn strategy(self) -> Result<Strategy> {
        let n = self.input_size() as usize;
        let o = self.output_size() as usize;
        if let BoxKind::FieldPr { k } = self {
            if k > 3 {
                return Err(NonlocalError::Capacity(format!("FIELD_PR({k}) table too large")));
            }
        }
        let half = q(1, 2);
        Strategy::from_fn(n, n, o, o, |a, b, x, y| {
            let (a64, b64, x64, y64) = (a as u64, b as u64, x as u64, y as u64);
            let hit = |c: bool| if c { BigRational::one() } else { BigRational::zero() };
            match self {
                BoxKind::Id => hit(x64 == a64 * 2 + b64 && y64 == a64 * 2 + b64),
                BoxKind::Empty => q(1, 4),
                BoxKind::Pr => {
                    if x ^ y == a & b {
                        half.clone()
                    } else {
                        BigRational::zero()
                    }
                }
                BoxKind::FieldPr { k } => {
                    let prod = (Gf2k::new(a64, k).unwrap() * Gf2k::new(b64, k).unwrap()).bits();
                    if x64 ^ y64 == prod {
                        q(1, n as i64)
                    } else {
                        BigRational::zero()
                    }
                }
                BoxKind::RSig => hit(x64 == a64 && y64 == a64),
                BoxKind::LSig => hit(x64 == b64 && y64 == b64),
                BoxKind::Sig => hit(x64 == b64 && y64 == a64),
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Source of the one uniform value a box draws.
pub trait BoxCoin {
    fn uniform(&mut self, n: u64) -> u64;
}

impl<R: Rng> BoxCoin for R {
    fn uniform(&mut self, n: u64) -> u64 {
        if n == 0 {
            self.gen()
        } else {
            self.gen_range(0..n)
        }
    }
}

/// A one-shot box instance. Each side supplies its input once; outputs are
/// fixed at first sampling and replayed on every later read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlBox {
    pub kind: BoxKind,
    pub index: u64,
    inputs: [Option<u64>; 2],
    outputs: [Option<u64>; 2],
    /// Uniform value drawn when the first output is needed.
    seed_value: Option<u64>,
}

fn slot(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

impl NlBox {
    pub fn new(kind: BoxKind, index: u64) -> Self {
        Self {
            kind,
            index,
            inputs: [None, None],
            outputs: [None, None],
            seed_value: None,
        }
    }

    pub fn input(&mut self, side: Side, value: u64) -> Result<()> {
        let n = self.kind.input_size();
        if n != 0 && value >= n {
            return Err(NonlocalError::Parameter(format!(
                "input {value} outside box alphabet of size {n}"
            )));
        }
        let s = &mut self.inputs[slot(side)];
        if s.is_some() {
            return Err(NonlocalError::ProtocolViolation(format!(
                "box {} received a second {:?} input",
                self.index, side
            )));
        }
        *s = Some(value);
        Ok(())
    }

    pub fn has_input(&self, side: Side) -> bool {
        self.inputs[slot(side)].is_some()
    }

    /// Reads a side's output, sampling it on first read.
    pub fn output(&mut self, side: Side, coin: &mut dyn BoxCoin) -> Result<u64> {
        let me = slot(side);
        if let Some(v) = self.outputs[me] {
            return Ok(v);
        }
        let Some(mine) = self.inputs[me] else {
            return Err(NonlocalError::ProtocolViolation(format!(
                "box {} read on {:?} side before input",
                self.index, side
            )));
        };
        let other = self.inputs[1 - me];
        let v = match self.kind {
            BoxKind::Empty => coin.uniform(2),
            BoxKind::Pr | BoxKind::FieldPr { .. } => match self.outputs[1 - me] {
                None => {
                    let r = coin.uniform(self.kind.input_size());
                    self.seed_value = Some(r);
                    r
                }
                Some(theirs) => {
                    let Some(other) = other else { return Err(NonlocalError::NotReady) };
                    theirs ^ self.relation(mine, other)
                }
            },
            BoxKind::Id => {
                let other = other.ok_or(NonlocalError::NotReady)?;
                let (a, b) = if me == 0 { (mine, other) } else { (other, mine) };
                a * 2 + b
            }
            BoxKind::RSig => {
                let other = other.ok_or(NonlocalError::NotReady)?;
                if me == 0 {
                    mine
                } else {
                    other
                }
            }
            BoxKind::LSig => {
                let other = other.ok_or(NonlocalError::NotReady)?;
                if me == 0 {
                    other
                } else {
                    mine
                }
            }
            BoxKind::Sig => other.ok_or(NonlocalError::NotReady)?,
        };
        self.outputs[me] = Some(v);
        Ok(v)
    }

    fn relation(&self, a: u64, b: u64) -> u64 {
        match self.kind {
            BoxKind::Pr => a & b,
            BoxKind::FieldPr { k } => (Gf2k::truncate(a, k) * Gf2k::truncate(b, k)).bits(),
            _ => unreachable!("relation only defined for PR kinds"),
        }
    }
}

/// A box plus its own seeded generator, for standalone use.
pub struct SeededBox {
    pub inner: NlBox,
    rng: ChaCha8Rng,
}

/// Creates a box with its own seeded generator. `k` is required iff the kind
/// is `FIELD_PR`.
pub fn make_box(name: &str, k: Option<u32>, rng_seed: u64) -> Result<SeededBox> {
    let kind = BoxKind::parse(name, k)?;
    Ok(SeededBox {
        inner: NlBox::new(kind, 0),
        rng: ChaCha8Rng::seed_from_u64(rng_seed),
    })
}

impl SeededBox {
    pub fn from_kind(kind: BoxKind, index: u64, rng_seed: u64) -> Self {
        Self {
            inner: NlBox::new(kind, index),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn input(&mut self, side: Side, value: u64) -> Result<()> {
        self.inner.input(side, value)
    }

    pub fn output(&mut self, side: Side) -> Result<u64> {
        self.inner.output(side, &mut self.rng)
    }

    /// Feeds both inputs and reads `(left, right)`.
    pub fn run(&mut self, a: u64, b: u64) -> Result<(u64, u64)> {
        self.input(Side::Left, a)?;
        self.input(Side::Right, b)?;
        let x = self.output(Side::Left)?;
        let y = self.output(Side::Right)?;
        Ok((x, y))
    }
}

/// Empirical strategy from `samples_per_input` fresh boxes per input pair.
pub fn sample_strategy(kind: BoxKind, samples_per_input: u64, seed: u64) -> Result<Strategy> {
    let n = kind.input_size() as usize;
    let o = kind.output_size() as usize;
    if n * n * o * o > 1 << 16 {
        return Err(NonlocalError::Capacity("strategy table too large to tabulate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; n * n * o * o];
    for a in 0..n {
        for b in 0..n {
            for t in 0..samples_per_input {
                let mut bx = NlBox::new(kind, t);
                bx.input(Side::Left, a as u64)?;
                bx.input(Side::Right, b as u64)?;
                // Alternate which side reads first so both realization orders
                // are exercised.
                let (x, y) = if rng.gen::<bool>() {
                    let x = bx.output(Side::Left, &mut rng)?;
                    (x, bx.output(Side::Right, &mut rng)?)
                } else {
                    let y = bx.output(Side::Right, &mut rng)?;
                    (bx.output(Side::Left, &mut rng)?, y)
                };
                counts[((a * n + b) * o + x as usize) * o + y as usize] += 1;
            }
        }
    }
    let total = samples_per_input as i64;
    Strategy::new(n, n, o, o, counts.into_iter().map(|c| q(c as i64, total)).collect())
}

/// Largest total-variation distance between corresponding conditional rows.
pub fn max_row_tv(u: &Strategy, v: &Strategy) -> Result<BigRational> {
    if !u.same_shape(v) {
        return Err(NonlocalError::Parameter("alphabet mismatch".into()));
    }
    let mut worst = BigRational::zero();
    for a in 0..u.a {
        for b in 0..u.b {
            let mut row = BigRational::zero();
            for x in 0..u.x {
                for y in 0..u.y {
                    row += (u.p(a, b, x, y) - v.p(a, b, x, y)).abs();
                }
            }
            row /= BigInt::from(2);
            if row > worst {
                worst = row;
            }
        }
    }
    Ok(worst)
}
