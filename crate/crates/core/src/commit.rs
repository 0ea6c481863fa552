//! Two-prover bit commitment over GF(2^k) with a binding check string, its
//! equivocation through a field-PR box, and exhaustive binding analysis.
//!
//! Commit: `c = b·z1 ⊕ w1` from the committer, `d = w1·z2 ⊕ w2` from the
//! partner. Unveil: `(w1, w2)`; accepted as `b = 1` if `c ⊕ w1 = z1`, as
//! `b = 0` if `c ⊕ w1 = 0`, and only if `d ⊕ w2 = w1·z2`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{field_range, Gf2k, GfError};
use crate::nonlocal::{BoxKind, NonlocalError, SeededBox, Side};
use crate::runtime::{
    build_lemip, Ctx, Experiment, Message, Party, PartyFactory, PartyId, RunError, Tape, BOX_LABEL,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error(transparent)]
    Field(#[from] GfError),
}

impl From<NonlocalError> for CommitError {
    fn from(e: NonlocalError) -> Self {
        match e {
            NonlocalError::Parameter(s) => CommitError::Parameter(s),
            NonlocalError::Capacity(s) => CommitError::Capacity(s),
            other => CommitError::ProtocolViolation(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CommitError>;

/// Verifier keys. `z1` is never zero, otherwise both openings coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Keys {
    pub z1: Gf2k,
    pub z2: Gf2k,
}

impl Keys {
    pub fn new(z1: Gf2k, z2: Gf2k) -> Result<Self> {
        if z1.k() != z2.k() {
            return Err(GfError::Mismatch(z1.k() as u64, z2.k() as u64).into());
        }
        if z1.is_zero() {
            return Err(CommitError::Parameter("z1 must be nonzero".into()));
        }
        Ok(Self { z1, z2 })
    }

    /// Samples keys from a uniform source: `z1` uniform over nonzero
    /// elements, `z2` uniform.
    pub fn sample(k: u32, mut uniform: impl FnMut(u64) -> u64) -> Result<Self> {
        if !(1..=64).contains(&k) {
            return Err(CommitError::Parameter(format!("k={k} out of range")));
        }
        let nonzero = field_range(k).wrapping_sub(1);
        let z1 = Gf2k::new(1 + uniform(nonzero), k)?;
        let z2 = Gf2k::new(uniform(field_range(k)), k)?;
        Self::new(z1, z2)
    }
}

pub fn commit(b: bool, z1: Gf2k, w1: Gf2k) -> Result<Gf2k> {
    Ok(Gf2k::from_bit(b, z1.k()).checked_mul(z1)?.checked_add(w1)?)
}

pub fn check_string(w1: Gf2k, w2: Gf2k, z2: Gf2k) -> Result<Gf2k> {
    Ok(w1.checked_mul(z2)?.checked_add(w2)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Unveil {
    Accept(bool),
    Reject,
}

pub fn verify_unveil(c: Gf2k, d: Gf2k, z1: Gf2k, z2: Gf2k, w1: Gf2k, w2: Gf2k) -> Unveil {
    let k = c.k();
    if [d, z1, z2, w1, w2].iter().any(|v| v.k() != k) {
        return Unveil::Reject;
    }
    let opened = c + w1;
    let b = if opened == z1 && !z1.is_zero() {
        true
    } else if opened.is_zero() {
        false
    } else {
        return Unveil::Reject;
    };
    if d + w2 != w1 * z2 {
        return Unveil::Reject;
    }
    Unveil::Accept(b)
}

/// One commitment session, as recorded in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub index: u64,
    pub k: u32,
    pub z1: Gf2k,
    pub z2: Gf2k,
    pub w1: Gf2k,
    pub w2: Gf2k,
    pub c: Gf2k,
    pub d: Gf2k,
    pub b: bool,
}

impl Session {
    pub fn honest(index: u64, keys: Keys, b: bool, w1: Gf2k, w2: Gf2k) -> Result<Self> {
        Ok(Self {
            index,
            k: keys.z1.k(),
            z1: keys.z1,
            z2: keys.z2,
            w1,
            w2,
            c: commit(b, keys.z1, w1)?,
            d: check_string(w1, w2, keys.z2)?,
            b,
        })
    }

    pub fn verify(&self) -> Unveil {
        verify_unveil(self.c, self.d, self.z1, self.z2, self.w1, self.w2)
    }
}

/// Opens a commitment produced by the box strategy to `target`.
///
/// The committer sent a uniform `c`; the partner fed `z2` into the right side
/// of `bx` and sent its output as `d`. The committer feeds
/// `w1' = c ⊕ target·z1` into the left side and uses the output as `w2'`.
/// The box relation `d ⊕ w2' = w1'·z2` makes the opening valid.
pub fn pr_equivocate(keys: Keys, c: Gf2k, bx: &mut SeededBox, target: bool) -> Result<(Gf2k, Gf2k)> {
    let k = keys.z1.k();
    if bx.inner.kind != (BoxKind::FieldPr { k }) {
        return Err(CommitError::Parameter(format!("need a FIELD_PR({k}) box")));
    }
    if bx.inner.has_input(Side::Left) {
        return Err(CommitError::ProtocolViolation(format!(
            "box {} already consumed",
            bx.inner.index
        )));
    }
    let w1 = commit(target, keys.z1, c)?;
    bx.input(Side::Left, w1.bits())?;
    let w2 = Gf2k::new(bx.output(Side::Left)?, k)?;
    Ok((w1, w2))
}

/// Largest `k` for which [`binding_z2_set`] scans exhaustively.
pub const BINDING_SCAN_MAX_K: u32 = 16;

/// All `z2` under which both openings of `(c, d)` are accepted.
pub fn binding_z2_set(
    c: Gf2k,
    d: Gf2k,
    z1: Gf2k,
    unveil0: (Gf2k, Gf2k),
    unveil1: (Gf2k, Gf2k),
) -> Result<Vec<Gf2k>> {
    let k = c.k();
    if k > BINDING_SCAN_MAX_K {
        return Err(CommitError::Capacity(format!(
            "exhaustive z2 scan needs k ≤ {BINDING_SCAN_MAX_K}, got {k}"
        )));
    }
    if z1.is_zero() {
        return Err(CommitError::Parameter("z1 must be nonzero".into()));
    }
    Ok(Gf2k::all(k)
        .filter(|&z2| {
            verify_unveil(c, d, z1, z2, unveil0.0, unveil0.1) == Unveil::Accept(false)
                && verify_unveil(c, d, z1, z2, unveil1.0, unveil1.1) == Unveil::Accept(true)
        })
        .collect())
}

/// Input of the standalone commit-and-unveil experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitInput {
    pub k: u32,
    /// Bit committed (honest) or the bit the equivocating pair opens to.
    pub b: bool,
}

const Z1_POS: u64 = 0;
const Z2_POS: u64 = 1;
const W1_POS: u64 = 0;
const W2_POS: u64 = 1;

fn gf(me: PartyId, v: u64, k: u32) -> std::result::Result<Gf2k, RunError> {
    Gf2k::new(v, k).map_err(|e| RunError::protocol(me, e.to_string()))
}

fn first_word(me: PartyId, msg: &Message) -> std::result::Result<u64, RunError> {
    msg.words
        .first()
        .copied()
        .ok_or_else(|| RunError::protocol(me, format!("empty {} message", msg.label)))
}

fn shared_keys(ctx: &mut Ctx, k: u32) -> (u64, u64) {
    let z1 = 1 + ctx.shared(Z1_POS, field_range(k).wrapping_sub(1));
    let z2 = ctx.shared(Z2_POS, field_range(k));
    (z1, z2)
}

struct KeyHolder {
    k: u32,
    c: Option<u64>,
    z: (u64, u64),
}

impl Party for KeyHolder {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        self.z = shared_keys(ctx, self.k);
        match ctx.me() {
            PartyId::Verifier(1) => ctx.send(PartyId::Prover(1), "z1", vec![self.z.0]),
            _ => ctx.send(PartyId::Prover(2), "z2", vec![self.z.1]),
        }
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        let me = ctx.me();
        match (me, msg.label.as_str()) {
            (PartyId::Verifier(1), "commit") => {
                self.c = Some(first_word(me, msg)?);
                ctx.send(PartyId::Prover(1), "open", vec![])
            }
            (PartyId::Verifier(1), "unveil") => {
                let c = self.c.ok_or_else(|| RunError::protocol(me, "unveil before commit"))?;
                let [w1, w2] = msg.words[..] else {
                    return Err(RunError::protocol(me, "unveil needs two words"));
                };
                ctx.write_tape("session", vec![self.z.0, self.z.1, c, w1, w2])
            }
            (PartyId::Verifier(2), "check") => ctx.write_tape("check", vec![first_word(me, msg)?]),
            _ => Err(RunError::protocol(me, format!("unexpected {}", msg.label))),
        }
    }
}

struct HonestCommitter {
    k: u32,
    b: bool,
    z1: Option<Gf2k>,
}

impl Party for HonestCommitter {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        let me = ctx.me();
        let k = self.k;
        let w1 = gf(me, ctx.shared_pad(W1_POS, field_range(k)), k)?;
        let w2 = gf(me, ctx.shared_pad(W2_POS, field_range(k)), k)?;
        match (me, msg.label.as_str()) {
            (PartyId::Prover(1), "z1") => {
                let z1 = gf(me, first_word(me, msg)?, k)?;
                self.z1 = Some(z1);
                let c = commit(self.b, z1, w1).map_err(|e| RunError::protocol(me, e.to_string()))?;
                ctx.send(PartyId::Verifier(1), "commit", vec![c.bits()])
            }
            (PartyId::Prover(1), "open") => ctx.send(PartyId::Verifier(1), "unveil", vec![w1.bits(), w2.bits()]),
            (PartyId::Prover(2), "z2") => {
                let z2 = gf(me, first_word(me, msg)?, k)?;
                ctx.send(PartyId::Verifier(2), "check", vec![(w1 * z2 + w2).bits()])
            }
            _ => Err(RunError::protocol(me, format!("unexpected {}", msg.label))),
        }
    }
}

/// Prover pair that commits to nothing and opens to `target` through a
/// FIELD_PR box at index 0.
struct Equivocator {
    k: u32,
    target: bool,
    z1: Option<Gf2k>,
    c: Option<Gf2k>,
    w1: Option<Gf2k>,
}

impl Party for Equivocator {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        let me = ctx.me();
        let k = self.k;
        match (me, msg.label.as_str()) {
            (PartyId::Prover(1), "z1") => {
                self.z1 = Some(gf(me, first_word(me, msg)?, k)?);
                let c = gf(me, ctx.shared_pad(W1_POS, field_range(k)), k)?;
                self.c = Some(c);
                ctx.send(PartyId::Verifier(1), "commit", vec![c.bits()])
            }
            (PartyId::Prover(1), "open") => {
                let (Some(z1), Some(c)) = (self.z1, self.c) else {
                    return Err(RunError::protocol(me, "open before commit"));
                };
                let w1 = Gf2k::from_bit(self.target, k) * z1 + c;
                self.w1 = Some(w1);
                ctx.send(PartyId::ProverHub, BOX_LABEL, vec![0, w1.bits()])
            }
            (PartyId::Prover(1), BOX_LABEL) => {
                let w1 = self.w1.ok_or_else(|| RunError::protocol(me, "unexpected box output"))?;
                ctx.send(PartyId::Verifier(1), "unveil", vec![w1.bits(), msg.words[1]])
            }
            (PartyId::Prover(2), "z2") => ctx.send(PartyId::ProverHub, BOX_LABEL, vec![0, first_word(me, msg)?]),
            (PartyId::Prover(2), BOX_LABEL) => ctx.send(PartyId::Verifier(2), "check", vec![msg.words[1]]),
            _ => Err(RunError::protocol(me, format!("unexpected {}", msg.label))),
        }
    }
}

/// V0 for the commitment experiment: the opening of tape 1's session must be
/// valid against tape 2's check string and decode to the claimed bit.
fn commit_decider(x: &CommitInput, tapes: &[Tape]) -> bool {
    let (Some(s), Some(c)) = (tapes[0].first(), tapes[1].first()) else { return false };
    let k = x.k;
    let g = |v: u64| Gf2k::new(v, k).ok();
    let (Some(z1), Some(z2), Some(cm), Some(w1), Some(w2), Some(d)) = (
        g(s.words[0]),
        g(s.words[1]),
        g(s.words[2]),
        g(s.words[3]),
        g(s.words[4]),
        g(c.words[0]),
    ) else {
        return false;
    };
    verify_unveil(cm, d, z1, z2, w1, w2) == Unveil::Accept(x.b)
}

fn commit_verifiers(k: u32) -> Vec<PartyFactory<CommitInput>> {
    (0..2)
        .map(|_| {
            Arc::new(move |_: &CommitInput| Box::new(KeyHolder { k, c: None, z: (0, 0) }) as Box<dyn Party>)
                as PartyFactory<CommitInput>
        })
        .collect()
}

/// Honest commit-and-unveil of `x.b` as a two-pair LE-MIP.
pub fn commit_experiment(k: u32) -> std::result::Result<Experiment<CommitInput>, RunError> {
    let provers: Vec<PartyFactory<CommitInput>> = (0..2)
        .map(|_| {
            Arc::new(move |x: &CommitInput| Box::new(HonestCommitter { k, b: x.b, z1: None }) as Box<dyn Party>)
                as PartyFactory<CommitInput>
        })
        .collect();
    build_lemip(2, provers, commit_verifiers(k), Arc::new(commit_decider), None, None)
}

/// Provers with a FIELD_PR prover correlator that open to `x.b` without
/// having committed to anything.
pub fn equivocation_experiment(k: u32) -> std::result::Result<Experiment<CommitInput>, RunError> {
    let provers: Vec<PartyFactory<CommitInput>> = (0..2)
        .map(|_| {
            Arc::new(move |x: &CommitInput| {
                Box::new(Equivocator {
                    k,
                    target: x.b,
                    z1: None,
                    c: None,
                    w1: None,
                }) as Box<dyn Party>
            }) as PartyFactory<CommitInput>
        })
        .collect();
    build_lemip(
        2,
        provers,
        commit_verifiers(k),
        Arc::new(commit_decider),
        Some(BoxKind::FieldPr { k }),
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{estimate_accept_probability, run};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(v: u64, k: u32) -> Gf2k {
        Gf2k::new(v, k).unwrap()
    }

    #[test]
    fn commit_examples() {
        let k = 3;
        assert_eq!(commit(false, g(0b011, k), g(0b101, k)).unwrap(), g(0b101, k));
        assert_eq!(commit(true, g(0b011, k), g(0, k)).unwrap(), g(0b011, k));
        // 1·z1 is z1; adding w1 is XOR.
        assert_eq!(commit(true, g(0b011, k), g(0b101, k)).unwrap(), g(0b110, k));
    }

    #[test]
    fn check_string_examples() {
        let k = 3;
        assert_eq!(check_string(g(0, k), g(5, k), g(7, k)).unwrap(), g(5, k));
        assert_eq!(check_string(g(6, k), g(5, k), g(0, k)).unwrap(), g(5, k));
        let (w1, w2, z2) = (g(0b110, k), g(0b001, k), g(0b011, k));
        // x^2+x times x+1 is x^3+x = (x+1)+x = 1 under x^3+x+1.
        assert_eq!(w1 * z2, g(0b001, k));
        assert_eq!(check_string(w1, w2, z2).unwrap(), g(0, k));
    }

    #[test]
    fn unveil_examples() {
        let keys = Keys::new(g(0b011, 3), g(0b101, 3)).unwrap();
        for b in [false, true] {
            let s = Session::honest(0, keys, b, g(0b100, 3), g(0b010, 3)).unwrap();
            assert_eq!(s.verify(), Unveil::Accept(b));
            let tampered = verify_unveil(s.c, s.d, s.z1, s.z2, s.w1, s.w2 + g(1, 3));
            assert_eq!(tampered, Unveil::Reject);
        }
        assert!(Keys::new(g(0, 3), g(1, 3)).is_err());
    }

    #[test]
    fn equivocation_examples() {
        let k = 3;
        let keys = Keys::new(g(0b110, k), g(0b011, k)).unwrap();
        let c = g(0b101, k);
        for target in [false, true] {
            let mut bx = SeededBox::from_kind(BoxKind::FieldPr { k }, 0, 42);
            bx.input(Side::Right, keys.z2.bits()).unwrap();
            let d = g(bx.output(Side::Right).unwrap(), k);
            let (w1, w2) = pr_equivocate(keys, c, &mut bx, target).unwrap();
            if !target {
                assert_eq!(w1, c);
                assert_eq!(d + w2, c * keys.z2);
            } else {
                assert_eq!(w1, c + keys.z1);
            }
            assert_eq!(verify_unveil(c, d, keys.z1, keys.z2, w1, w2), Unveil::Accept(target));
            assert!(matches!(
                pr_equivocate(keys, c, &mut bx, target),
                Err(CommitError::ProtocolViolation(_))
            ));
        }
    }

    #[test]
    fn binding_scan_examples() {
        let k = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z1 = g(rng.gen_range(1..8), k);
            let z2 = g(rng.gen_range(0..8), k);
            let keys = Keys::new(z1, z2).unwrap();
            let s = Session::honest(0, keys, false, g(rng.gen_range(0..8), k), g(rng.gen_range(0..8), k)).unwrap();
            let w1b = s.w1 + z1;
            let w2b = s.w2 + z1 * z2;
            let set = binding_z2_set(s.c, s.d, z1, (s.w1, s.w2), (w1b, w2b)).unwrap();
            assert_eq!(set, vec![z2]);
        }
        let big = g(1, 17);
        assert!(matches!(
            binding_z2_set(big, big, big, (big, big), (big, big)),
            Err(CommitError::Capacity(_))
        ));
    }

    #[test]
    fn zero_z1_makes_openings_coincide() {
        // With z1 = 0 at k = 2 every c opens to both bits if unchecked, which
        // is why keys exclude it; the scan refuses such tuples.
        let k = 2;
        let zero = g(0, k);
        assert!(binding_z2_set(g(1, k), zero, zero, (g(1, k), zero), (g(1, k), zero)).is_err());
        for c in Gf2k::all(k) {
            assert_eq!(c + c, zero);
            assert!(verify_unveil(c, zero, zero, zero, c, zero) != Unveil::Accept(true));
        }
    }

    #[test]
    fn lemip_wrappers() {
        for k in [3, 8] {
            for b in [false, true] {
                let x = CommitInput { k, b };
                let honest = commit_experiment(k).unwrap();
                assert_eq!(estimate_accept_probability(&honest, &x, 200, 1).unwrap().rate, 1.0);
                let attack = equivocation_experiment(k).unwrap();
                assert_eq!(estimate_accept_probability(&attack, &x, 200, 2).unwrap().rate, 1.0);
                let t = run(&attack, &x, 5).unwrap();
                assert!(t.records.iter().all(|r| !matches!(
                    (r.from, r.to),
                    (PartyId::Prover(1), PartyId::Prover(2)) | (PartyId::Prover(2), PartyId::Prover(1))
                )));
            }
        }
        // Without boxes the same provers cannot open at all.
        let no_boxes = equivocation_experiment(3)
            .unwrap()
            .with_provers(equivocation_experiment(3).unwrap().provers(), None);
        assert_eq!(
            estimate_accept_probability(&no_boxes, &CommitInput { k: 3, b: true }, 50, 3).unwrap().rate,
            0.0
        );
    }
}
