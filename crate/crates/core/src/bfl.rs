//! Oracle-3-SAT, its arithmetization, the sumcheck protocol on the squared
//! arithmetization, the multilinearity test, and the two-prover protocol
//! that combines them on the runtime.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{is_prime, next_prime, Fp};
use crate::poly::{eval_univariate, interpolate, BoolTable, FieldFn, Mle, MultivariatePolynomial, PolyError};
use crate::runtime::{build_lemip, Ctx, Experiment, Message, Party, PartyFactory, PartyId, RunError, Tape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BflError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("malformed instance: {0}")]
    Instance(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Largest modulus accepted; keeps products of two elements inside `u64`.
const MAX_MODULUS: u64 = u32::MAX as u64;

/// A CNF formula over variables `0..nvars`; literals are `(var, positive)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cnf {
    pub nvars: usize,
    pub clauses: Vec<Vec<(usize, bool)>>,
}

/// On-disk CNF form: 1-based signed literals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnfFile {
    pub vars: usize,
    pub clauses: Vec<Vec<i64>>,
}

impl Cnf {
    pub fn new(nvars: usize, clauses: Vec<Vec<(usize, bool)>>) -> Result<Self, BflError> {
        if clauses.is_empty() {
            return Err(BflError::Instance("formula has no clauses".into()));
        }
        for c in &clauses {
            if c.is_empty() || c.len() > 3 {
                return Err(BflError::Instance(format!("clause with {} literals", c.len())));
            }
            if let Some(&(v, _)) = c.iter().find(|(v, _)| *v >= nvars) {
                return Err(BflError::Instance(format!("variable {v} out of range")));
            }
        }
        Ok(Self { nvars, clauses })
    }

    pub fn from_file(f: &CnfFile) -> Result<Self, BflError> {
        let mut clauses = Vec::new();
        for c in &f.clauses {
            let mut lits = Vec::new();
            for &l in c {
                if l == 0 || l.unsigned_abs() as usize > f.vars {
                    return Err(BflError::Instance(format!("literal {l} out of range")));
                }
                lits.push((l.unsigned_abs() as usize - 1, l > 0));
            }
            clauses.push(lits);
        }
        Self::new(f.vars, clauses)
    }

    pub fn violated(&self, assignment: &[bool]) -> usize {
        self.clauses
            .iter()
            .filter(|c| c.iter().all(|&(v, pos)| assignment[v] != pos))
            .count()
    }

    /// `Σ_clauses Π_literals τ(ℓ)` with `τ(x) = 1 − x` and `τ(¬x) = x`; on
    /// Boolean points it counts violated clauses.
    pub fn arithmetize(&self, p: u64) -> MultivariatePolynomial {
        let n = self.nvars;
        let one = MultivariatePolynomial::constant(1, p, n);
        let mut f = MultivariatePolynomial::zero(p, n);
        for c in &self.clauses {
            let mut term = one.clone();
            for &(v, pos) in c {
                let x = MultivariatePolynomial::var(v, p, n);
                term = term.mul(&if pos { one.sub(&x) } else { x });
            }
            f = f.add(&term);
        }
        f
    }
}

/// Smallest prime that makes `Σ f² ≡ 0 (mod p)` equivalent to every clause
/// being satisfied on every Boolean point, while leaving room for the
/// challenge set and interpolation nodes.
pub fn default_modulus(clauses: usize, m: usize, set_size: usize, round_degree: usize) -> Result<u64, BflError> {
    let c = clauses as u128;
    let need = [
        (3 * c + 1) * m as u128,
        set_size as u128,
        (1u128 << m.min(100)) * c * c + 1,
        round_degree as u128 + 1,
    ]
    .into_iter()
    .max()
    .unwrap_or(2);
    if need > MAX_MODULUS as u128 {
        return Err(BflError::Parameter(format!("instance needs a modulus above {MAX_MODULUS}")));
    }
    let p = next_prime(need as u64);
    if p > MAX_MODULUS {
        return Err(BflError::Parameter(format!("instance needs a modulus above {MAX_MODULUS}")));
    }
    Ok(p)
}

fn check_modulus(p: u64, set_size: usize, round_degree: usize) -> Result<(), BflError> {
    if !is_prime(p) || p > MAX_MODULUS {
        return Err(BflError::Parameter(format!("modulus {p} is not a prime below 2^32")));
    }
    if (set_size as u64) > p {
        return Err(BflError::Parameter(format!("challenge set of size {set_size} does not fit in GF({p})")));
    }
    if round_degree as u64 >= p {
        return Err(BflError::Parameter(format!("GF({p}) too small for degree {round_degree}")));
    }
    Ok(())
}

/// Why a sumcheck run rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "round", rename_all = "snake_case")]
pub enum Rejection {
    /// Round `i` (1-based) failed `g_i(0) + g_i(1) = b_{i-1}`.
    Round(usize),
    FinalCheck,
    /// Round `i` sent a polynomial of excessive degree or bad shape.
    Malformed(usize),
}

/// Public data of a sumcheck instance on `Σ_{x ∈ {0,1}^m} g(x)² = 0`.
#[derive(Debug, Clone)]
pub struct SumcheckParams {
    pub p: u64,
    pub m: usize,
    /// Bound on the individual degree of `g`.
    pub d: usize,
    /// Challenge set `{0, .., |I| − 1}`.
    pub set: Vec<Fp>,
}

impl SumcheckParams {
    /// Requires `|I| ≥ 2dm` and `|I| ≥ 2`.
    pub fn new(p: u64, m: usize, d: usize, set_size: usize) -> Result<Self, BflError> {
        if m == 0 {
            return Err(BflError::Parameter("sumcheck needs at least one variable".into()));
        }
        let d = d.max(1);
        if set_size < 2 || set_size < 2 * d * m {
            return Err(BflError::Parameter(format!(
                "challenge set size {set_size} below 2dm = {}",
                2 * d * m
            )));
        }
        Self::unchecked(p, m, d, set_size)
    }

    /// Skips the `|I| ≥ 2dm` requirement. Only for experiments that do not
    /// rely on the soundness bound, such as exact view comparisons.
    pub fn unchecked(p: u64, m: usize, d: usize, set_size: usize) -> Result<Self, BflError> {
        let d = d.max(1);
        if m == 0 || set_size < 2 {
            return Err(BflError::Parameter("need m ≥ 1 and |I| ≥ 2".into()));
        }
        check_modulus(p, set_size, 2 * d)?;
        Ok(Self {
            p,
            m,
            d,
            set: (0..set_size as u64).map(|v| Fp::raw(v, p)).collect(),
        })
    }

    /// Degree bound on round polynomials.
    pub fn round_degree(&self) -> usize {
        2 * self.d
    }

    /// Soundness bound `2dm / |I|` of the canonical analysis.
    pub fn soundness_bound(&self) -> BigRational {
        BigRational::new(BigInt::from(2 * self.d * self.m), BigInt::from(self.set.len()))
    }
}

/// Verifier state: the running claim `b_i` and the number of completed rounds.
#[derive(Debug, Clone)]
pub struct SumcheckVerifier {
    m: usize,
    degree: usize,
    claim: Fp,
    round: usize,
    last: Vec<Fp>,
}

impl SumcheckVerifier {
    pub fn new(params: &SumcheckParams) -> Self {
        Self {
            m: params.m,
            degree: params.round_degree(),
            claim: Fp::zero(params.p),
            round: 0,
            last: Vec::new(),
        }
    }

    pub fn rounds_done(&self) -> usize {
        self.round
    }

    /// Checks the next round polynomial against the current claim.
    pub fn receive(&mut self, poly: &[Fp]) -> Result<(), Rejection> {
        let i = self.round + 1;
        if i > self.m || poly.is_empty() || poly.len() > self.degree + 1 {
            return Err(Rejection::Malformed(i));
        }
        let p = self.claim.modulus();
        let sum = eval_univariate(poly, Fp::zero(p)) + eval_univariate(poly, Fp::one(p));
        if sum != self.claim {
            return Err(Rejection::Round(i));
        }
        self.last = poly.to_vec();
        Ok(())
    }

    /// Fixes the challenge for the round just received.
    pub fn challenge(&mut self, r: Fp) {
        self.claim = eval_univariate(&self.last, r);
        self.round += 1;
    }

    /// The claimed value of `g(r)²` after all rounds.
    pub fn final_claim(&self) -> Fp {
        debug_assert_eq!(self.round, self.m);
        self.claim
    }
}

/// Round polynomial `X ↦ Σ_{suffix} g(r_1, .., r_{i-1}, X, suffix)²` in
/// coefficient form, computed by direct summation and interpolation.
pub fn square_round_polynomial(g: &dyn FieldFn, challenges: &[Fp], degree: usize) -> Vec<Fp> {
    let m = g.arity();
    let p = g.modulus();
    let i = challenges.len();
    assert!(i < m, "no rounds left");
    let rest = m - i - 1;
    let mut point = challenges.to_vec();
    point.resize(m, Fp::zero(p));
    let values: Vec<Fp> = (0..=degree as u64)
        .map(|x| {
            point[i] = Fp::raw(x, p);
            let mut acc = Fp::zero(p);
            for suffix in 0..1u64 << rest {
                for j in 0..rest {
                    point[i + 1 + j] = Fp::raw((suffix >> j) & 1, p);
                }
                let v = g.eval(&point);
                acc += v * v;
            }
            acc
        })
        .collect();
    let mut coeffs = interpolate(&values, p);
    while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
        coeffs.pop();
    }
    coeffs
}

pub trait SumcheckProver: Send {
    /// Round polynomial for round `challenges.len() + 1`.
    fn round(&mut self, challenges: &[Fp]) -> Vec<Fp>;
}

pub struct HonestSumcheck {
    g: Arc<dyn FieldFn>,
    degree: usize,
}

impl HonestSumcheck {
    pub fn new(g: Arc<dyn FieldFn>, degree: usize) -> Self {
        Self { g, degree }
    }
}

impl SumcheckProver for HonestSumcheck {
    fn round(&mut self, challenges: &[Fp]) -> Vec<Fp> {
        square_round_polynomial(&*self.g, challenges, self.degree)
    }
}

/// Canonical cheater for a false zero claim. Each round it sends
/// `g_i + h` where `h(0) + h(1)` cancels the current discrepancy and `h` has
/// as many roots inside the challenge set as the degree bound allows; a
/// challenge landing on a root makes every later round honest.
pub struct RootPlantingSumcheck {
    g: Arc<dyn FieldFn>,
    degree: usize,
    set: Vec<Fp>,
    last: Vec<Fp>,
}

impl RootPlantingSumcheck {
    pub fn new(g: Arc<dyn FieldFn>, params: &SumcheckParams) -> Self {
        Self {
            g,
            degree: params.round_degree(),
            set: params.set.clone(),
            last: Vec::new(),
        }
    }
}

/// `λ Π (X − ρ)` with `h(0) + h(1) = offset`, using up to `degree` roots from
/// `set \ {0, 1}`. Falls back to fewer roots when no choice gives an
/// invertible normaliser.
fn planted(offset: Fp, degree: usize, set: &[Fp]) -> Vec<Fp> {
    let p = offset.modulus();
    let candidates: Vec<Fp> = set.iter().copied().filter(|v| v.value() > 1).collect();
    for count in (0..=degree.min(candidates.len())).rev() {
        let mut chosen: Vec<usize> = (0..count).collect();
        loop {
            let roots: Vec<Fp> = chosen.iter().map(|&i| candidates[i]).collect();
            let mut prod = vec![Fp::one(p)];
            for &r in &roots {
                prod = crate::poly::mul_univariate(&prod, &[-r, Fp::one(p)], p);
            }
            let norm = eval_univariate(&prod, Fp::zero(p)) + eval_univariate(&prod, Fp::one(p));
            if let Ok(inv) = norm.inv() {
                let lambda = offset * inv;
                return prod.into_iter().map(|c| c * lambda).collect();
            }
            if !next_combination(&mut chosen, candidates.len()) {
                break;
            }
        }
    }
    unreachable!("the constant polynomial always normalises for odd p")
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

impl SumcheckProver for RootPlantingSumcheck {
    fn round(&mut self, challenges: &[Fp]) -> Vec<Fp> {
        let p = self.g.modulus();
        let honest = square_round_polynomial(&*self.g, challenges, self.degree);
        let claim = match challenges.last() {
            None => Fp::zero(p),
            Some(&r) => eval_univariate(&self.last, r),
        };
        let sum = eval_univariate(&honest, Fp::zero(p)) + eval_univariate(&honest, Fp::one(p));
        let offset = claim - sum;
        let mut out = honest;
        if !offset.is_zero() {
            let h = planted(offset, self.degree, &self.set);
            out.resize(out.len().max(h.len()), Fp::zero(p));
            for (o, c) in out.iter_mut().zip(h) {
                *o += c;
            }
        }
        self.last = out.clone();
        out
    }
}

/// Runs the sumcheck with a fixed challenge vector; the final check
/// evaluates `g` directly.
pub fn sumcheck_with_challenges(
    prover: &mut dyn SumcheckProver,
    g: &dyn FieldFn,
    params: &SumcheckParams,
    challenges: &[Fp],
) -> Result<(), Rejection> {
    assert_eq!(challenges.len(), params.m);
    let mut v = SumcheckVerifier::new(params);
    for i in 0..params.m {
        let poly = prover.round(&challenges[..i]);
        v.receive(&poly)?;
        v.challenge(challenges[i]);
    }
    let value = g.eval(challenges);
    if v.final_claim() == value * value {
        Ok(())
    } else {
        Err(Rejection::FinalCheck)
    }
}

/// Runs the sumcheck with challenges drawn uniformly from the set.
pub fn run_sumcheck(
    prover: &mut dyn SumcheckProver,
    g: &dyn FieldFn,
    params: &SumcheckParams,
    seed: u64,
) -> Result<(), Rejection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let challenges: Vec<Fp> = (0..params.m)
        .map(|_| params.set[rng.gen_range(0..params.set.len())])
        .collect();
    sumcheck_with_challenges(prover, g, params, &challenges)
}

/// Exact acceptance probability over all `|I|^m` challenge vectors, with a
/// fresh prover per vector.
pub fn exhaustive_acceptance(
    make_prover: &dyn Fn() -> Box<dyn SumcheckProver>,
    g: &dyn FieldFn,
    params: &SumcheckParams,
) -> BigRational {
    let n = params.set.len();
    let total = (n as u64).pow(params.m as u32);
    let mut accepted = 0u64;
    let mut idx = vec![0usize; params.m];
    for _ in 0..total {
        let ch: Vec<Fp> = idx.iter().map(|&i| params.set[i]).collect();
        if sumcheck_with_challenges(&mut *make_prover(), g, params, &ch).is_ok() {
            accepted += 1;
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    BigRational::new(BigInt::from(accepted), BigInt::from(total))
}

/// Variable blocks of an oracle formula `B(z, b1, b2, b3, t1, t2, t3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Z,
    B1,
    B2,
    B3,
    T1,
    T2,
    T3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub group: Group,
    pub index: usize,
    pub positive: bool,
}

/// An oracle-3-SAT instance: is there `A: {0,1}^s → {0,1}` with
/// `B(z, b1, b2, b3, A(b1), A(b2), A(b3))` true for all `z, b1, b2, b3`?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleFormula {
    pub r: usize,
    pub s: usize,
    pub clauses: Vec<Vec<Literal>>,
}

impl OracleFormula {
    pub fn validate(&self) -> Result<(), BflError> {
        if self.r == 0 || self.s == 0 {
            return Err(BflError::Instance("r and s must be positive".into()));
        }
        if self.s > crate::poly::MLE_MAX_S {
            return Err(BflError::Instance(format!("s={} too large", self.s)));
        }
        self.cnf().map(|_| ())
    }

    /// Number of sumcheck variables `r + 3s`.
    pub fn m(&self) -> usize {
        self.r + 3 * self.s
    }

    /// Flat index: `z`, then `b1`, `b2`, `b3`, then `t1`, `t2`, `t3`.
    pub fn var(&self, l: &Literal) -> Result<usize, BflError> {
        let (base, width) = match l.group {
            Group::Z => (0, self.r),
            Group::B1 => (self.r, self.s),
            Group::B2 => (self.r + self.s, self.s),
            Group::B3 => (self.r + 2 * self.s, self.s),
            Group::T1 => (self.m(), 1),
            Group::T2 => (self.m() + 1, 1),
            Group::T3 => (self.m() + 2, 1),
        };
        if l.index >= width {
            return Err(BflError::Instance(format!("index {} out of range for {:?}", l.index, l.group)));
        }
        Ok(base + l.index)
    }

    pub fn cnf(&self) -> Result<Cnf, BflError> {
        let clauses = self
            .clauses
            .iter()
            .map(|c| c.iter().map(|l| Ok((self.var(l)?, l.positive))).collect::<Result<Vec<_>, BflError>>())
            .collect::<Result<Vec<_>, _>>()?;
        Cnf::new(self.m() + 3, clauses)
    }

    /// Individual degree of `g(z, b) = f(z, b, Â(b1), Â(b2), Â(b3))`: a
    /// `b_j` variable gains one degree per occurrence of `t_j` in a clause.
    pub fn composite_degree(&self) -> Result<usize, BflError> {
        let cnf = self.cnf()?;
        let m = self.m();
        let mut d = 1;
        for c in &cnf.clauses {
            for v in 0..m {
                let direct = c.iter().filter(|(x, _)| *x == v).count();
                let block = if v < self.r { None } else { Some((v - self.r) / self.s) };
                let through = block.map_or(0, |j| c.iter().filter(|(x, _)| *x == m + j).count());
                d = d.max(direct + through);
            }
        }
        Ok(d)
    }

    /// Whether the formula holds everywhere when position `j` reads oracle `j`.
    pub fn holds_with(&self, oracles: [&BoolTable; 3]) -> Result<bool, BflError> {
        let cnf = self.cnf()?;
        let m = self.m();
        if m > 24 {
            return Err(BflError::Parameter("too many variables to check exhaustively".into()));
        }
        let mut a = vec![false; m + 3];
        for x in 0..1u64 << m {
            for (v, slot) in a.iter_mut().enumerate().take(m) {
                *slot = (x >> v) & 1 == 1;
            }
            for j in 0..3 {
                let start = self.r + j * self.s;
                a[m + j] = oracles[j].at(&a[start..start + self.s]);
            }
            if cnf.violated(&a) > 0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// A satisfying oracle, by exhaustive search (`s ≤ 3`).
    pub fn find_oracle(&self) -> Result<Option<BoolTable>, BflError> {
        if self.s > 3 {
            return Err(BflError::Parameter("oracle search limited to s ≤ 3".into()));
        }
        for a in BoolTable::all(self.s) {
            if self.holds_with([&a, &a, &a])? {
                return Ok(Some(a));
            }
        }
        Ok(None)
    }
}

/// `g(z, b) = f(z, b, Â_1(b1), Â_2(b2), Â_3(b3))`.
pub struct OracleComposite {
    f: MultivariatePolynomial,
    r: usize,
    s: usize,
    oracles: [Mle; 3],
}

impl OracleComposite {
    pub fn new(formula: &OracleFormula, p: u64, oracles: [BoolTable; 3]) -> Result<Self, BflError> {
        let f = formula.cnf()?.arithmetize(p);
        let [a, b, c] = oracles;
        Ok(Self {
            f,
            r: formula.r,
            s: formula.s,
            oracles: [Mle::new(a, p)?, Mle::new(b, p)?, Mle::new(c, p)?],
        })
    }
}

impl FieldFn for OracleComposite {
    fn arity(&self) -> usize {
        self.r + 3 * self.s
    }

    fn modulus(&self) -> u64 {
        self.f.modulus()
    }

    fn eval(&self, point: &[Fp]) -> Fp {
        let mut full = point.to_vec();
        for j in 0..3 {
            let start = self.r + j * self.s;
            full.push(self.oracles[j].eval(&point[start..start + self.s]));
        }
        self.f.eval(&full)
    }
}

/// One multilinearity probe: the line through `base` along `axis`, sampled
/// at three distinct values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Probe {
    pub axis: usize,
    pub base: Vec<Fp>,
    pub values: [Fp; 3],
}

impl Probe {
    pub fn points(&self) -> [Vec<Fp>; 3] {
        self.values.map(|v| {
            let mut q = self.base.clone();
            q[self.axis] = v;
            q
        })
    }

    /// Whether `(value_t, answer_t)` are collinear.
    pub fn collinear(&self, answers: &[Fp; 3]) -> bool {
        let [a, b, c] = self.values;
        let [u, v, w] = *answers;
        (v - u) * (c - a) == (w - u) * (b - a)
    }
}

/// Index `idx < C(n, 3)` to the sorted triple of that rank.
pub fn unrank_triple(mut idx: u64, n: u64) -> [u64; 3] {
    let mut out = [0u64; 3];
    let mut start = 0u64;
    for (slot, k) in out.iter_mut().zip([3u64, 2, 1]) {
        let mut x = start;
        loop {
            let block = binomial(n - x - 1, k - 1);
            if idx < block {
                break;
            }
            idx -= block;
            x += 1;
        }
        *slot = x;
        start = x + 1;
    }
    out
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

fn sample_probe(s: usize, set: &[Fp], draw: &mut dyn FnMut(u64) -> u64) -> Probe {
    let n = set.len() as u64;
    let axis = draw(s as u64) as usize;
    let base: Vec<Fp> = (0..s)
        .map(|j| if j == axis { set[0] } else { set[draw(n) as usize] })
        .collect();
    let t = unrank_triple(draw(binomial(n, 3)), n);
    Probe {
        axis,
        base,
        values: t.map(|i| set[i as usize]),
    }
}

/// Runs `probes` independent probes against `oracle`; passes iff every
/// probe's answers are collinear.
pub fn multilinearity_test(
    oracle: &mut dyn FnMut(&[Fp]) -> Fp,
    s: usize,
    set: &[Fp],
    probes: usize,
    seed: u64,
) -> Result<bool, BflError> {
    if probes == 0 {
        return Err(BflError::Parameter("at least one probe is required".into()));
    }
    if s == 0 || set.len() < 3 {
        return Err(BflError::Parameter("need s ≥ 1 and a set of at least three values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        let probe = sample_probe(s, set, &mut |n| rng.gen_range(0..n));
        let answers = probe.points().map(|q| oracle(&q));
        if !probe.collinear(&answers) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Public parameters of the two-prover protocol for one formula.
#[derive(Debug, Clone)]
pub struct BflSetup {
    pub formula: OracleFormula,
    pub sumcheck: SumcheckParams,
    pub f: MultivariatePolynomial,
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BflOptions {
    pub p: Option<u64>,
    pub set_size: Option<usize>,
    pub probes: Option<usize>,
    /// Accept a challenge set below `2dm`; see [`SumcheckParams::unchecked`].
    #[serde(default)]
    pub small_set: bool,
}

pub const DEFAULT_PROBES: usize = 1;
pub const DEFAULT_SET_FACTOR: usize = 4;

impl BflSetup {
    pub fn new(formula: OracleFormula, opts: BflOptions) -> Result<Self, BflError> {
        formula.validate()?;
        let m = formula.m();
        let d = formula.composite_degree()?;
        // Four times the minimum, so one run's sumcheck error is at most 1/4.
        let set_size = opts.set_size.unwrap_or(DEFAULT_SET_FACTOR * 2 * d * m);
        if set_size < 3 {
            return Err(BflError::Parameter("the multilinearity test needs |I| ≥ 3".into()));
        }
        let probes = opts.probes.unwrap_or(DEFAULT_PROBES);
        if probes == 0 {
            return Err(BflError::Parameter("at least one probe is required".into()));
        }
        let p = match opts.p {
            Some(p) => p,
            None => default_modulus(formula.clauses.len(), m, set_size, 2 * d)?,
        };
        let sumcheck = if opts.small_set {
            SumcheckParams::unchecked(p, m, d, set_size)?
        } else {
            SumcheckParams::new(p, m, d, set_size)?
        };
        let f = formula.cnf()?.arithmetize(p);
        Ok(Self {
            formula,
            sumcheck,
            f,
            probes,
        })
    }

    pub fn p(&self) -> u64 {
        self.sumcheck.p
    }

    /// Number of multilinearity questions.
    pub fn n(&self) -> usize {
        3 * self.probes
    }

    /// Number of positions of S the question derivation reads.
    pub fn question_positions(&self) -> u64 {
        (self.sumcheck.m + self.probes * (self.formula.s + 1) + 1) as u64
    }
}

/// Everything the verifiers ask, derived from S alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Questions {
    pub challenges: Vec<Fp>,
    pub probes: Vec<Probe>,
    /// 1-based index of the question repeated to the second prover.
    pub index: usize,
}

impl Questions {
    /// Reads S at consecutive positions starting from `offset`.
    pub fn derive(setup: &BflSetup, offset: u64, shared: &mut dyn FnMut(u64, u64) -> u64) -> Self {
        let set = &setup.sumcheck.set;
        let n = set.len() as u64;
        let mut pos = offset;
        let mut draw = |range: u64| {
            let v = shared(pos, range);
            pos += 1;
            v
        };
        let challenges = (0..setup.sumcheck.m).map(|_| set[draw(n) as usize]).collect();
        let s = setup.formula.s;
        let probes = (0..setup.probes)
            .map(|_| {
                let axis = draw(s as u64) as usize;
                let base: Vec<Fp> = (0..s)
                    .map(|j| if j == axis { set[0] } else { set[draw(n) as usize] })
                    .collect();
                let t = unrank_triple(draw(binomial(n, 3)), n);
                Probe {
                    axis,
                    base,
                    values: t.map(|i| set[i as usize]),
                }
            })
            .collect::<Vec<_>>();
        let index = 1 + draw((3 * probes.len() + 3) as u64) as usize;
        Self {
            challenges,
            probes,
            index,
        }
    }

    pub fn n(&self) -> usize {
        3 * self.probes.len()
    }

    /// Flat encoding: index, challenges, then per probe axis, base, values.
    pub fn to_words(&self) -> Vec<u64> {
        let mut w = vec![self.index as u64];
        w.extend(words(&self.challenges));
        for pr in &self.probes {
            w.push(pr.axis as u64);
            w.extend(words(&pr.base));
            w.extend(words(&pr.values));
        }
        w
    }

    pub fn from_words(setup: &BflSetup, w: &[u64]) -> Option<Self> {
        let (m, s, p) = (setup.sumcheck.m, setup.formula.s, setup.p());
        if w.len() != 1 + m + setup.probes * (1 + s + 3) {
            return None;
        }
        let index = w[0] as usize;
        if index == 0 || index > 3 * setup.probes + 3 {
            return None;
        }
        let challenges = parse_words(&w[1..1 + m], p)?;
        let mut probes = Vec::new();
        for chunk in w[1 + m..].chunks(1 + s + 3) {
            let axis = chunk[0] as usize;
            if axis >= s {
                return None;
            }
            let base = parse_words(&chunk[1..1 + s], p)?;
            let v = parse_words(&chunk[1 + s..], p)?;
            probes.push(Probe {
                axis,
                base,
                values: [v[0], v[1], v[2]],
            });
        }
        Some(Self {
            challenges,
            probes,
            index,
        })
    }

    /// Question `j` (1-based): probe points first, then the three oracle
    /// positions at the sumcheck challenge.
    pub fn point(&self, j: usize, r: usize, s: usize) -> Vec<Fp> {
        let n = self.n();
        if j <= n {
            self.probes[(j - 1) / 3].points()[(j - 1) % 3].clone()
        } else {
            let block = j - n - 1;
            let start = r + block * s;
            self.challenges[start..start + s].to_vec()
        }
    }
}

pub fn words(v: &[Fp]) -> Vec<u64> {
    v.iter().map(|x| x.value()).collect()
}

pub fn parse_words(w: &[u64], p: u64) -> Option<Vec<Fp>> {
    w.iter().map(|&x| (x < p).then(|| Fp::raw(x, p))).collect()
}

/// Final verdict written to the first verifier's tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Accept,
    Sumcheck(Rejection),
    Multilinearity,
    Malformed,
}

impl Verdict {
    pub fn code(self) -> Vec<u64> {
        match self {
            Verdict::Accept => vec![0, 0],
            Verdict::Sumcheck(Rejection::Round(i)) => vec![1, i as u64],
            Verdict::Sumcheck(Rejection::FinalCheck) => vec![2, 0],
            Verdict::Multilinearity => vec![3, 0],
            Verdict::Sumcheck(Rejection::Malformed(i)) => vec![4, i as u64],
            Verdict::Malformed => vec![4, 0],
        }
    }
}

pub const LABEL_VERDICT: &str = "verdict";
pub const LABEL_ANSWERS: &str = "answers";
pub const LABEL_CHECK: &str = "check";

/// First verifier: runs the sumcheck with P1, asks the oracle questions at
/// the final point, then the probes, and tapes the verdict and all answers.
struct FirstVerifier {
    setup: Arc<BflSetup>,
    q: Option<Questions>,
    sc: SumcheckVerifier,
    answers: Vec<Fp>,
    done: bool,
}

impl FirstVerifier {
    fn finish(&mut self, ctx: &mut Ctx, v: Verdict) -> Result<(), RunError> {
        self.done = true;
        ctx.write_tape(LABEL_VERDICT, v.code())?;
        ctx.write_tape(LABEL_ANSWERS, words(&self.answers))
    }
}

impl Party for FirstVerifier {
    fn start(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
        let q = Questions::derive(&self.setup, 0, &mut |pos, n| ctx.shared(pos, n));
        self.answers = vec![Fp::zero(self.setup.p()); q.n() + 3];
        self.q = Some(q);
        ctx.send(PartyId::Prover(1), "begin", vec![])
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> Result<(), RunError> {
        if self.done {
            return Ok(());
        }
        let setup = self.setup.clone();
        let p = setup.p();
        let (r, s) = (setup.formula.r, setup.formula.s);
        let q = self.q.clone().expect("questions derived at start");
        let n = q.n();
        let Some(vals) = parse_words(&msg.words, p) else {
            return self.finish(ctx, Verdict::Malformed);
        };
        match msg.label.as_str() {
            "round" => {
                if let Err(rej) = self.sc.receive(&vals) {
                    return self.finish(ctx, Verdict::Sumcheck(rej));
                }
                let i = self.sc.rounds_done();
                let ch = q.challenges[i];
                self.sc.challenge(ch);
                ctx.send(PartyId::Prover(1), "challenge", vec![ch.value()])?;
                if self.sc.rounds_done() == setup.sumcheck.m {
                    let pts: Vec<u64> = (n + 1..=n + 3).flat_map(|j| words(&q.point(j, r, s))).collect();
                    ctx.send(PartyId::Prover(1), "oracle", pts)?;
                }
                Ok(())
            }
            "oracle-answers" => {
                if vals.len() != 3 || self.sc.rounds_done() != setup.sumcheck.m {
                    return self.finish(ctx, Verdict::Malformed);
                }
                self.answers[n..].copy_from_slice(&vals);
                let mut full = q.challenges.clone();
                full.extend_from_slice(&vals);
                let v = setup.f.eval(&full);
                if self.sc.final_claim() != v * v {
                    return self.finish(ctx, Verdict::Sumcheck(Rejection::FinalCheck));
                }
                let pts: Vec<u64> = (1..=n).flat_map(|j| words(&q.point(j, r, s))).collect();
                ctx.send(PartyId::Prover(1), "probe", pts)
            }
            "probe-answers" => {
                if vals.len() != n {
                    return self.finish(ctx, Verdict::Malformed);
                }
                self.answers[..n].copy_from_slice(&vals);
                let ok = q
                    .probes
                    .iter()
                    .zip(vals.chunks(3))
                    .all(|(pr, a)| pr.collinear(&[a[0], a[1], a[2]]));
                self.finish(ctx, if ok { Verdict::Accept } else { Verdict::Multilinearity })
            }
            _ => self.finish(ctx, Verdict::Malformed),
        }
    }
}

/// Second verifier: repeats one question to P2 and tapes `[index, answer]`.
struct SecondVerifier {
    setup: Arc<BflSetup>,
    index: usize,
    done: bool,
}

impl Party for SecondVerifier {
    fn start(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
        let q = Questions::derive(&self.setup, 0, &mut |pos, n| ctx.shared(pos, n));
        self.index = q.index;
        let pt = q.point(q.index, self.setup.formula.r, self.setup.formula.s);
        ctx.send(PartyId::Prover(2), "query", words(&pt))
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> Result<(), RunError> {
        if self.done {
            return Ok(());
        }
        self.done = true;
        let mut w = vec![self.index as u64];
        w.extend(msg.words.iter().take(1));
        ctx.write_tape(LABEL_CHECK, w)
    }
}

/// Accepts iff the first verifier accepted and the repeated answer matches.
pub fn bfl_decider(tapes: &[Tape]) -> bool {
    let [t1, t2] = tapes else { return false };
    let verdict = t1.iter().find(|e| e.label == LABEL_VERDICT);
    let answers = t1.iter().find(|e| e.label == LABEL_ANSWERS);
    let check = t2.iter().find(|e| e.label == LABEL_CHECK);
    match (verdict, answers, check) {
        (Some(v), Some(a), Some(c)) => {
            v.words == [0, 0]
                && c.words.len() == 2
                && c.words[0] >= 1
                && a.words.get(c.words[0] as usize - 1) == Some(&c.words[1])
        }
        _ => false,
    }
}

/// A deterministic prover pair described by which oracle answers each
/// question type and how the sumcheck is played.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BflStrategy {
    pub name: String,
    /// Oracles inside the sumcheck polynomial, one per position.
    pub sumcheck_oracles: [BoolTable; 3],
    pub plant_roots: bool,
    /// Oracles answering the three questions at the final point.
    pub final_oracles: [BoolTable; 3],
    pub probe_oracle: BoolTable,
    pub second_oracle: BoolTable,
}

impl BflStrategy {
    pub fn honest(a: BoolTable) -> Self {
        Self {
            name: "honest".into(),
            sumcheck_oracles: [a.clone(), a.clone(), a.clone()],
            plant_roots: false,
            final_oracles: [a.clone(), a.clone(), a.clone()],
            probe_oracle: a.clone(),
            second_oracle: a,
        }
    }

    /// One consistent oracle everywhere; the false sumcheck claim is
    /// defended by root planting.
    pub fn root_planting(a: BoolTable) -> Self {
        Self {
            name: "root-planting".into(),
            plant_roots: true,
            ..Self::honest(a)
        }
    }

    /// A different oracle per position makes the sumcheck honest; the
    /// answers disagree with the second prover's oracle somewhere.
    pub fn mixed(oracles: [BoolTable; 3], shared: BoolTable) -> Self {
        Self {
            name: "mixed-oracles".into(),
            sumcheck_oracles: oracles.clone(),
            plant_roots: false,
            final_oracles: oracles,
            probe_oracle: shared.clone(),
            second_oracle: shared,
        }
    }

    /// Strongest scripted strategy this crate knows for the formula: honest
    /// when an oracle exists, else a mixed triple agreeing with its most
    /// common member in as many positions as possible (searched for
    /// `s ≤ 2`), else root planting with the all-zero oracle.
    pub fn best_for(formula: &OracleFormula) -> Result<Self, BflError> {
        let s = formula.s;
        if s <= 3 {
            if let Some(a) = formula.find_oracle()? {
                return Ok(Self::honest(a));
            }
        }
        if s <= 2 {
            let all = BoolTable::all(s);
            let mut best: Option<(usize, [BoolTable; 3], BoolTable)> = None;
            for a in &all {
                for b in &all {
                    for c in &all {
                        if !formula.holds_with([a, b, c])? {
                            continue;
                        }
                        for shared in [a, b, c] {
                            let agree = [a, b, c].iter().filter(|x| **x == shared).count();
                            if best.as_ref().is_none_or(|(n, _, _)| agree > *n) {
                                best = Some((agree, [a.clone(), b.clone(), c.clone()], shared.clone()));
                            }
                        }
                    }
                }
            }
            if let Some((_, o, shared)) = best {
                return Ok(Self::mixed(o, shared));
            }
        }
        Ok(Self::root_planting(BoolTable::from_fn(s, |_| false)))
    }
}

struct FirstProver {
    setup: Arc<BflSetup>,
    sumcheck: Box<dyn SumcheckProver>,
    challenges: Vec<Fp>,
    finals: [Mle; 3],
    probe: Mle,
}

impl Party for FirstProver {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> Result<(), RunError> {
        let p = self.setup.p();
        let s = self.setup.formula.s;
        let vals = parse_words(&msg.words, p).ok_or_else(|| RunError::protocol(ctx.me(), "word outside the field"))?;
        match msg.label.as_str() {
            "begin" => ctx.send(PartyId::Verifier(1), "round", words(&self.sumcheck.round(&[]))),
            "challenge" => {
                self.challenges.extend_from_slice(&vals);
                if self.challenges.len() < self.setup.sumcheck.m {
                    let poly = self.sumcheck.round(&self.challenges);
                    ctx.send(PartyId::Verifier(1), "round", words(&poly))?;
                }
                Ok(())
            }
            "oracle" => {
                let a: Vec<Fp> = vals.chunks(s).zip(&self.finals).map(|(q, o)| o.eval(q)).collect();
                ctx.send(PartyId::Verifier(1), "oracle-answers", words(&a))
            }
            "probe" => {
                let a: Vec<Fp> = vals.chunks(s).map(|q| self.probe.eval(q)).collect();
                ctx.send(PartyId::Verifier(1), "probe-answers", words(&a))
            }
            other => Err(RunError::protocol(ctx.me(), format!("unexpected message {other}"))),
        }
    }
}

struct SecondProver {
    oracle: Mle,
    s: usize,
    p: u64,
}

impl Party for SecondProver {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> Result<(), RunError> {
        let q = parse_words(&msg.words, self.p)
            .filter(|q| q.len() == self.s)
            .ok_or_else(|| RunError::protocol(ctx.me(), "malformed query"))?;
        ctx.send(PartyId::Verifier(2), "answer", vec![self.oracle.eval(&q).value()])
    }
}

pub fn bfl_verifiers(setup: &Arc<BflSetup>) -> Vec<PartyFactory<OracleFormula>> {
    let s1 = setup.clone();
    let s2 = setup.clone();
    vec![
        Arc::new(move |_: &OracleFormula| {
            Box::new(FirstVerifier {
                setup: s1.clone(),
                q: None,
                sc: SumcheckVerifier::new(&s1.sumcheck),
                answers: Vec::new(),
                done: false,
            }) as Box<dyn Party>
        }),
        Arc::new(move |_: &OracleFormula| {
            Box::new(SecondVerifier {
                setup: s2.clone(),
                index: 0,
                done: false,
            }) as Box<dyn Party>
        }),
    ]
}

pub fn bfl_provers(setup: &Arc<BflSetup>, strat: &BflStrategy) -> Result<Vec<PartyFactory<OracleFormula>>, BflError> {
    let p = setup.p();
    let composite: Arc<dyn FieldFn> = Arc::new(OracleComposite::new(&setup.formula, p, strat.sumcheck_oracles.clone())?);
    let finals = strat.final_oracles.clone().map(|t| Mle::new(t, p));
    let [a, b, c] = finals;
    let finals = [a?, b?, c?];
    let probe = Mle::new(strat.probe_oracle.clone(), p)?;
    let second = Mle::new(strat.second_oracle.clone(), p)?;
    let s1 = setup.clone();
    let plant = strat.plant_roots;
    let s = setup.formula.s;
    Ok(vec![
        Arc::new(move |_: &OracleFormula| {
            let sumcheck: Box<dyn SumcheckProver> = if plant {
                Box::new(RootPlantingSumcheck::new(composite.clone(), &s1.sumcheck))
            } else {
                Box::new(HonestSumcheck::new(composite.clone(), s1.sumcheck.round_degree()))
            };
            Box::new(FirstProver {
                setup: s1.clone(),
                sumcheck,
                challenges: Vec::new(),
                finals: finals.clone(),
                probe: probe.clone(),
            }) as Box<dyn Party>
        }),
        Arc::new(move |_: &OracleFormula| {
            Box::new(SecondProver {
                oracle: second.clone(),
                s,
                p,
            }) as Box<dyn Party>
        }),
    ])
}

/// The two-prover protocol with the given prover strategy and no correlator.
pub fn bfl_experiment(setup: &Arc<BflSetup>, strat: &BflStrategy) -> Result<Experiment<OracleFormula>, BflError> {
    Ok(build_lemip(
        2,
        bfl_provers(setup, strat)?,
        bfl_verifiers(setup),
        Arc::new(|_: &OracleFormula, t: &[Tape]| bfl_decider(t)),
        None,
        None,
    )?)
}

/// Small fixtures used by tests, the CLI and the acceptance suite.
pub mod fixtures {
    use super::*;

    fn lit(group: Group, index: usize, positive: bool) -> Literal {
        Literal { group, index, positive }
    }

    /// Satisfied exactly by the identity oracle on one bit:
    /// `t1 ↔ b1` and `t2 ↔ b2`.
    pub fn identity_formula() -> OracleFormula {
        use Group::*;
        OracleFormula {
            r: 1,
            s: 1,
            clauses: vec![
                vec![lit(T1, 0, true), lit(B1, 0, false)],
                vec![lit(T1, 0, false), lit(B1, 0, true)],
                vec![lit(T2, 0, true), lit(B2, 0, false)],
                vec![lit(T2, 0, false), lit(B2, 0, true)],
            ],
        }
    }

    /// No single oracle works (`t1 ↔ b1` but `t2 ↔ ¬b2`), though reading a
    /// different oracle per position satisfies it.
    pub fn contradictory_formula() -> OracleFormula {
        use Group::*;
        OracleFormula {
            r: 1,
            s: 1,
            clauses: vec![
                vec![lit(T1, 0, true), lit(B1, 0, false)],
                vec![lit(T1, 0, false), lit(B1, 0, true)],
                vec![lit(T2, 0, true), lit(B2, 0, true)],
                vec![lit(T2, 0, false), lit(B2, 0, false)],
            ],
        }
    }

    /// `(x1 ∨ x2 ∨ x3) ∧ (¬x1 ∨ x2)`: linear in every variable and not a
    /// tautology.
    pub fn small_cnf() -> Cnf {
        Cnf::new(3, vec![vec![(0, true), (1, true), (2, true)], vec![(0, false), (1, true)]]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::runtime::{estimate_repeated, run};
    use num_traits::Zero;

    fn fp(v: u64, p: u64) -> Fp {
        Fp::new(v, p).unwrap()
    }

    #[test]
    fn arithmetization_counts_violations() {
        let cnf = small_cnf();
        let f = cnf.arithmetize(101);
        for x in 0..8u64 {
            let a: Vec<bool> = (0..3).map(|j| (x >> j) & 1 == 1).collect();
            let pt: Vec<Fp> = a.iter().map(|&b| fp(b as u64, 101)).collect();
            assert_eq!(f.eval(&pt).value(), cnf.violated(&a) as u64);
        }
        assert_eq!(f.max_individual_degree(), 1);
    }

    #[test]
    fn round_polynomial_examples() {
        let p = 97;
        // f = x: g_1(X) = X².
        let f = MultivariatePolynomial::var(0, p, 1);
        assert_eq!(square_round_polynomial(&f, &[], 2), vec![fp(0, p), fp(0, p), fp(1, p)]);
        // f = x·y: g_1(X) = X²(0² + 1²) = X².
        let f = MultivariatePolynomial::var(0, p, 2).mul(&MultivariatePolynomial::var(1, p, 2));
        assert_eq!(square_round_polynomial(&f, &[], 2), vec![fp(0, p), fp(0, p), fp(1, p)]);
    }

    /// Round polynomial from an independent brute-force sum: evaluate the
    /// claimed coefficients at every field point and compare.
    #[test]
    fn round_polynomial_matches_direct_sums() {
        let cnf = small_cnf();
        let p = 31;
        let f = cnf.arithmetize(p);
        let ch = [fp(5, p)];
        let poly = square_round_polynomial(&f, &ch, 2);
        for x in 0..p {
            let mut direct = Fp::zero(p);
            for b in 0..2 {
                let v = f.eval(&[fp(5, p), fp(x, p), fp(b, p)]);
                direct += v * v;
            }
            assert_eq!(eval_univariate(&poly, fp(x, p)), direct);
        }
    }

    #[test]
    fn honest_prover_passes_on_tautology() {
        let taut = Cnf::new(2, vec![vec![(0, true), (0, false), (1, true)]]).unwrap();
        let p = default_modulus(1, 2, 8, 4).unwrap();
        let f: Arc<dyn FieldFn> = Arc::new(taut.arithmetize(p));
        let params = SumcheckParams::new(p, 2, 2, 8).unwrap();
        for seed in 0..20 {
            let mut pr = HonestSumcheck::new(f.clone(), params.round_degree());
            assert_eq!(run_sumcheck(&mut pr, &*f, &params, seed), Ok(()));
        }
    }

    #[test]
    fn honest_prover_on_false_claim_fails_first_round() {
        let cnf = small_cnf();
        let p = default_modulus(2, 3, 8, 2).unwrap();
        let f: Arc<dyn FieldFn> = Arc::new(cnf.arithmetize(p));
        let params = SumcheckParams::new(p, 3, 1, 8).unwrap();
        let mut pr = HonestSumcheck::new(f.clone(), 2);
        assert_eq!(run_sumcheck(&mut pr, &*f, &params, 1), Err(Rejection::Round(1)));
    }

    #[test]
    fn root_planting_matches_closed_form() {
        let cnf = small_cnf();
        let p = default_modulus(2, 3, 8, 2).unwrap();
        let f: Arc<dyn FieldFn> = Arc::new(cnf.arithmetize(p));
        let params = SumcheckParams::new(p, 3, 1, 8).unwrap();
        let g = f.clone();
        let acc = exhaustive_acceptance(&|| Box::new(RootPlantingSumcheck::new(g.clone(), &params)), &*f, &params);
        // Two roots per round in a set of 8: accepted unless all three
        // challenges miss, so 1 − (6/8)³.
        assert_eq!(acc, BigRational::new(37.into(), 64.into()));
        assert!(acc <= params.soundness_bound());
    }

    #[test]
    fn set_size_precondition() {
        assert!(SumcheckParams::new(101, 3, 2, 11).is_err());
        assert!(SumcheckParams::new(101, 3, 2, 12).is_ok());
        assert!(SumcheckParams::new(7, 3, 1, 8).is_err());
    }

    #[test]
    fn triples_enumerate_in_order() {
        let n = 6;
        let all: Vec<[u64; 3]> = (0..binomial(n, 3)).map(|i| unrank_triple(i, n)).collect();
        let mut expect = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    expect.push([a, b, c]);
                }
            }
        }
        assert_eq!(all, expect);
    }

    #[test]
    fn multilinear_oracles_pass_and_squares_fail() {
        let p = 101;
        let set: Vec<Fp> = (0..8).map(|v| fp(v, p)).collect();
        let m = Mle::new(BoolTable::from_fn(2, |i| i == 1 || i == 2), p).unwrap();
        assert!(multilinearity_test(&mut |q| m.eval(q), 2, &set, 20, 3).unwrap());
        assert!(multilinearity_test(&mut |q| m.eval(q), 2, &set, 0, 3).is_err());
        // Adding x_0² is caught on every probe along axis 0.
        let mut caught = 0;
        let mut total = 0;
        for t in 0..binomial(8, 3) {
            let probe = Probe {
                axis: 0,
                base: vec![fp(0, p), fp(3, p)],
                values: unrank_triple(t, 8).map(|i| fp(i, p)),
            };
            let ans = probe.points().map(|q| m.eval(&q) + q[0] * q[0]);
            total += 1;
            if !probe.collinear(&ans) {
                caught += 1;
            }
        }
        assert!(caught as f64 / total as f64 >= 1.0 - 2.0 / 8.0);
    }

    #[test]
    fn formula_helpers() {
        let id = identity_formula();
        let oracle = id.find_oracle().unwrap().unwrap();
        assert_eq!(oracle.values, vec![false, true]);
        assert_eq!(contradictory_formula().find_oracle().unwrap(), None);
        assert_eq!(id.composite_degree().unwrap(), 2);
        let json = serde_json::to_string(&id).unwrap();
        assert!(json.contains("\"group\":\"t1\""));
        let back: OracleFormula = serde_json::from_str(&json).unwrap();
        assert_eq!(back, id);
    }

    #[test]
    fn composite_vanishes_on_cube_for_satisfying_oracle() {
        let id = identity_formula();
        let setup = BflSetup::new(id.clone(), BflOptions::default()).unwrap();
        let a = id.find_oracle().unwrap().unwrap();
        let g = OracleComposite::new(&id, setup.p(), [a.clone(), a.clone(), a]).unwrap();
        for x in 0..16u64 {
            let pt: Vec<Fp> = (0..4).map(|j| fp((x >> j) & 1, setup.p())).collect();
            assert!(g.eval(&pt).is_zero());
        }
    }

    #[test]
    fn honest_provers_always_accepted() {
        let id = identity_formula();
        let setup = Arc::new(BflSetup::new(id.clone(), BflOptions::default()).unwrap());
        let strat = BflStrategy::best_for(&id).unwrap();
        assert_eq!(strat.name, "honest");
        let exp = bfl_experiment(&setup, &strat).unwrap();
        for seed in 0..50 {
            let t = run(&exp, &id, seed).unwrap();
            assert!(t.accept, "seed {seed}");
        }
    }

    #[test]
    fn inconsistent_second_prover_is_caught_on_the_checked_index() {
        let id = identity_formula();
        let setup = Arc::new(BflSetup::new(id.clone(), BflOptions::default()).unwrap());
        let a = id.find_oracle().unwrap().unwrap();
        let mut strat = BflStrategy::honest(a);
        strat.second_oracle = BoolTable::from_fn(1, |i| i == 0);
        let exp = bfl_experiment(&setup, &strat).unwrap();
        let mut rejected = 0;
        for seed in 0..50 {
            let t = run(&exp, &id, seed).unwrap();
            rejected += (!t.accept) as u32;
        }
        assert!(rejected > 0);
    }

    #[test]
    fn local_cheaters_lose_on_contradictory_formula() {
        let x = contradictory_formula();
        let setup = Arc::new(BflSetup::new(x.clone(), BflOptions::default()).unwrap());
        let best = BflStrategy::best_for(&x).unwrap();
        assert_eq!(best.name, "mixed-oracles");
        let exp = bfl_experiment(&setup, &best).unwrap();
        let single = estimate_repeated(&exp, &x, 400, 1, 9).unwrap();
        // Caught exactly when the repeated question is the mismatched
        // position, one of n + 3 = 6.
        assert!((single.rate - 5.0 / 6.0).abs() < 0.06, "{single:?}");
        let planting = bfl_experiment(&setup, &BflStrategy::root_planting(BoolTable::from_fn(1, |i| i == 1))).unwrap();
        let est = estimate_repeated(&planting, &x, 200, 1, 4).unwrap();
        // Four roots per round in a set of 64 over four rounds.
        let exact = 1.0 - (60.0f64 / 64.0).powi(4);
        assert!((est.rate - exact).abs() < 0.1, "{est:?}");
    }

    #[test]
    fn exhaustive_acceptance_is_zero_for_honest_false_claim() {
        let cnf = small_cnf();
        let p = default_modulus(2, 3, 8, 2).unwrap();
        let f: Arc<dyn FieldFn> = Arc::new(cnf.arithmetize(p));
        let params = SumcheckParams::new(p, 3, 1, 8).unwrap();
        let g = f.clone();
        let acc = exhaustive_acceptance(&|| Box::new(HonestSumcheck::new(g.clone(), 2)), &*f, &params);
        assert!(acc.is_zero());
    }
}
