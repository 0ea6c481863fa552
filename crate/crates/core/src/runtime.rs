//! Execution engine for locality-explicit multi-prover interactive proofs.
//!
//! Parties are message-driven programs. The engine owns every channel, checks
//! each send against the topology, delivers messages in deterministic rounds
//! (V1..Vk, P1..Pk, then the two correlators) and, once the system is quiet,
//! hands the verifiers' output tapes to the V0 decider.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nonlocal::{BoxCoin, BoxKind, NlBox, NonlocalError, Side};

pub const DEFAULT_ROUND_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    Verifier(u32),
    Prover(u32),
    V0,
    ProverHub,
    VerifierHub,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Verifier(i) => write!(f, "V{i}"),
            PartyId::Prover(i) => write!(f, "P{i}"),
            PartyId::V0 => f.write_str("V0"),
            PartyId::ProverHub => f.write_str("P^"),
            PartyId::VerifierHub => f.write_str("V^"),
        }
    }
}

impl Serialize for PartyId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bad = || serde::de::Error::custom(format!("bad party id {s:?}"));
        match s.as_str() {
            "V0" => Ok(PartyId::V0),
            "P^" => Ok(PartyId::ProverHub),
            "V^" => Ok(PartyId::VerifierHub),
            _ => {
                let (head, num) = s.split_at(1);
                let i: u32 = num.parse().map_err(|_| bad())?;
                match head {
                    "V" => Ok(PartyId::Verifier(i)),
                    "P" => Ok(PartyId::Prover(i)),
                    _ => Err(bad()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("topology violation: {from} attempted to send to {to}")]
    Topology { from: PartyId, to: PartyId },
    #[error("round cap of {0} exceeded")]
    Timeout(usize),
    #[error("protocol error at {party}: {msg}")]
    Protocol { party: PartyId, msg: String },
}

impl RunError {
    pub fn protocol(party: PartyId, msg: impl Into<String>) -> Self {
        RunError::Protocol {
            party,
            msg: msg.into(),
        }
    }
}

/// The channel structure of an LE-MIP with `k` prover/verifier pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Topology {
    pub k: u32,
}

impl Topology {
    pub fn parties(&self) -> Vec<PartyId> {
        let mut v: Vec<PartyId> = (1..=self.k).map(PartyId::Verifier).collect();
        v.extend((1..=self.k).map(PartyId::Prover));
        v.push(PartyId::ProverHub);
        v.push(PartyId::VerifierHub);
        v
    }

    fn valid(&self, p: PartyId) -> bool {
        match p {
            PartyId::Verifier(i) | PartyId::Prover(i) => (1..=self.k).contains(&i),
            _ => true,
        }
    }

    /// Legal channels: Vi↔Pi, V̂↔Vj, P̂↔Pj, and the read-only tape Vℓ→V0.
    pub fn is_legal(&self, from: PartyId, to: PartyId) -> bool {
        use PartyId::*;
        if !self.valid(from) || !self.valid(to) {
            return false;
        }
        matches!(
            (from, to),
            (Verifier(i), Prover(j)) | (Prover(i), Verifier(j)) if i == j
        ) || matches!(
            (from, to),
            (VerifierHub, Verifier(_))
                | (Verifier(_), VerifierHub)
                | (ProverHub, Prover(_))
                | (Prover(_), ProverHub)
                | (Verifier(_), V0)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub from: PartyId,
    pub to: PartyId,
    pub label: String,
    pub words: Vec<u64>,
    /// Sealed payloads are delivered normally but redacted from views.
    pub sealed: bool,
}

/// Whether a random draw is a one-time pad whose value never affects control
/// flow. Exhaustive enumeration may pin pads to zero (see [`Enumerator`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawKind {
    Plain,
    Pad,
}

/// Supplies every random value of one execution.
pub trait CoinSource {
    fn draw(&mut self, party: PartyId, n: u64, kind: DrawKind) -> u64;
    /// Value at position `pos` of a shared random string, `side` 0 for the
    /// provers' string R and 1 for the verifiers' string S.
    fn shared(&mut self, side: u8, pos: u64, n: u64, kind: DrawKind) -> u64;
}

/// SplitMix64 finalizer, used for all seed derivation.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `i` of a run seeded with `master`:
/// `splitmix64(master ^ splitmix64(i))`.
pub fn trial_seed(master: u64, i: u64) -> u64 {
    splitmix64(master ^ splitmix64(i))
}

fn party_tag(p: PartyId) -> u64 {
    match p {
        PartyId::Verifier(i) => 0x100 + i as u64,
        PartyId::Prover(i) => 0x200 + i as u64,
        PartyId::V0 => 1,
        PartyId::ProverHub => 2,
        PartyId::VerifierHub => 3,
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    if n == 0 {
        rng.gen()
    } else {
        rng.gen_range(0..n)
    }
}

/// Seeded coins: one ChaCha stream per party, and shared-string positions
/// derived from `(seed, side, position)` so they do not depend on who reads
/// first.
pub struct SeededCoins {
    seed: u64,
    streams: HashMap<PartyId, ChaCha8Rng>,
}

impl SeededCoins {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            streams: HashMap::new(),
        }
    }
}

impl CoinSource for SeededCoins {
    fn draw(&mut self, party: PartyId, n: u64, _kind: DrawKind) -> u64 {
        let seed = self.seed;
        let rng = self
            .streams
            .entry(party)
            .or_insert_with(|| ChaCha8Rng::seed_from_u64(splitmix64(seed ^ party_tag(party))));
        uniform(rng, n)
    }

    fn shared(&mut self, side: u8, pos: u64, n: u64, _kind: DrawKind) -> u64 {
        let s = splitmix64(splitmix64(self.seed ^ (0xA5A5_0000 + side as u64)) ^ pos);
        uniform(&mut ChaCha8Rng::seed_from_u64(s), n)
    }
}

/// Depth-first enumeration of every coin outcome of a deterministic program.
///
/// Each run replays the current path; a draw past the end of the path opens a
/// new branch at value 0. After a run, [`Enumerator::advance`] moves to the
/// next leaf. The probability of a leaf is the product of `1/n` over its
/// branch points. With `pin_pads`, pad draws return 0 without branching.
pub struct Enumerator {
    path: Vec<(u64, u64)>,
    depth: usize,
    pin_pads: bool,
    shared: HashMap<(u8, u64), u64>,
}

impl Enumerator {
    pub fn new(pin_pads: bool) -> Self {
        Self {
            path: Vec::new(),
            depth: 0,
            pin_pads,
            shared: HashMap::new(),
        }
    }

    fn branch(&mut self, n: u64) -> u64 {
        assert!(n > 0 && n <= 1 << 20, "cannot enumerate a draw over {n} values");
        if self.depth < self.path.len() {
            let (v, m) = self.path[self.depth];
            assert_eq!(m, n, "draw sizes changed between replays; program is not deterministic");
            self.depth += 1;
            v
        } else {
            self.path.push((0, n));
            self.depth += 1;
            0
        }
    }

    /// Probability of the leaf just executed.
    pub fn probability(&self) -> BigRational {
        let mut den = BigInt::one();
        for &(_, n) in &self.path[..self.depth] {
            den *= n;
        }
        BigRational::new(BigInt::one(), den)
    }

    /// Prepares the next leaf; returns false when the tree is exhausted.
    pub fn advance(&mut self) -> bool {
        self.path.truncate(self.depth);
        self.depth = 0;
        self.shared.clear();
        while let Some((v, n)) = self.path.pop() {
            if v + 1 < n {
                self.path.push((v + 1, n));
                return true;
            }
        }
        false
    }
}

impl CoinSource for Enumerator {
    fn draw(&mut self, _party: PartyId, n: u64, kind: DrawKind) -> u64 {
        if self.pin_pads && kind == DrawKind::Pad {
            return 0;
        }
        self.branch(n)
    }

    fn shared(&mut self, side: u8, pos: u64, n: u64, kind: DrawKind) -> u64 {
        if let Some(&v) = self.shared.get(&(side, pos)) {
            return v;
        }
        let v = if self.pin_pads && kind == DrawKind::Pad {
            0
        } else {
            self.branch(n)
        };
        self.shared.insert((side, pos), v);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoinRecord {
    pub party: PartyId,
    pub value: u64,
    pub range: u64,
}

/// Handle a party uses to act during one activation.
pub struct Ctx<'a> {
    me: PartyId,
    topology: Topology,
    outbox: &'a mut Vec<Message>,
    coins: &'a mut dyn CoinSource,
    coin_log: &'a mut Vec<CoinRecord>,
    violation: &'a mut Option<RunError>,
}

impl Ctx<'_> {
    pub fn me(&self) -> PartyId {
        self.me
    }

    pub fn k(&self) -> u32 {
        self.topology.k
    }

    fn push(&mut self, to: PartyId, label: &str, words: Vec<u64>, sealed: bool) -> Result<(), RunError> {
        if !self.topology.is_legal(self.me, to) {
            let err = RunError::Topology { from: self.me, to };
            self.violation.get_or_insert(err.clone());
            return Err(err);
        }
        self.outbox.push(Message {
            from: self.me,
            to,
            label: label.to_string(),
            words,
            sealed,
        });
        Ok(())
    }

    pub fn send(&mut self, to: PartyId, label: &str, words: Vec<u64>) -> Result<(), RunError> {
        self.push(to, label, words, false)
    }

    /// Sends a payload that is delivered but redacted from extracted views.
    pub fn send_sealed(&mut self, to: PartyId, label: &str, words: Vec<u64>) -> Result<(), RunError> {
        self.push(to, label, words, true)
    }

    /// Appends an entry to this verifier's output tape.
    pub fn write_tape(&mut self, label: &str, words: Vec<u64>) -> Result<(), RunError> {
        self.push(PartyId::V0, label, words, false)
    }

    /// Forwards material to the decider without the writer reading it.
    pub fn write_tape_sealed(&mut self, label: &str, words: Vec<u64>) -> Result<(), RunError> {
        self.push(PartyId::V0, label, words, true)
    }

    fn log(&mut self, value: u64, range: u64) -> u64 {
        self.coin_log.push(CoinRecord {
            party: self.me,
            value,
            range,
        });
        value
    }

    /// Private uniform value in `[0, n)`; `n = 0` means a full 64-bit word.
    pub fn coin(&mut self, n: u64) -> u64 {
        let v = self.coins.draw(self.me, n, DrawKind::Plain);
        self.log(v, n)
    }

    /// Private uniform pad in `[0, n)` whose value never drives control flow.
    pub fn pad(&mut self, n: u64) -> u64 {
        let v = self.coins.draw(self.me, n, DrawKind::Pad);
        self.log(v, n)
    }

    fn side(&self) -> u8 {
        match self.me {
            PartyId::Prover(_) | PartyId::ProverHub => 0,
            _ => 1,
        }
    }

    /// Position `pos` of this side's shared random string (R for provers,
    /// S for verifiers).
    pub fn shared(&mut self, pos: u64, n: u64) -> u64 {
        let side = self.side();
        let v = self.coins.shared(side, pos, n, DrawKind::Plain);
        self.log(v, n)
    }

    pub fn shared_pad(&mut self, pos: u64, n: u64) -> u64 {
        let side = self.side();
        let v = self.coins.shared(side, pos, n, DrawKind::Pad);
        self.log(v, n)
    }
}

impl BoxCoin for Ctx<'_> {
    fn uniform(&mut self, n: u64) -> u64 {
        self.pad(n)
    }
}

pub trait Party: Send {
    fn start(&mut self, _ctx: &mut Ctx) -> Result<(), RunError> {
        Ok(())
    }
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> Result<(), RunError>;
}

/// Correlator that absorbs everything: shared randomness only.
pub struct EmptyHub;

impl Party for EmptyHub {
    fn on_message(&mut self, _ctx: &mut Ctx, _msg: &Message) -> Result<(), RunError> {
        Ok(())
    }
}

/// Correlator serving indexed boxes of one kind to parties 1 (left side) and
/// 2 (right side). Requests are `[index, input, index, input, ...]` under the
/// label `"box"`; each answer is `[index, output]` under the same label.
pub struct BoxHub {
    kind: BoxKind,
    boxes: BTreeMap<u64, NlBox>,
    waiting: Vec<(u64, PartyId)>,
}

impl BoxHub {
    pub fn new(kind: BoxKind) -> Self {
        Self {
            kind,
            boxes: BTreeMap::new(),
            waiting: Vec::new(),
        }
    }
}

pub const BOX_LABEL: &str = "box";

impl Party for BoxHub {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> Result<(), RunError> {
        let me = ctx.me();
        let side = match msg.from {
            PartyId::Prover(1) | PartyId::Verifier(1) => Side::Left,
            PartyId::Prover(2) | PartyId::Verifier(2) => Side::Right,
            other => return Err(RunError::protocol(me, format!("{other} has no box side"))),
        };
        if msg.words.len() % 2 != 0 {
            return Err(RunError::protocol(me, "box request must be index/input pairs"));
        }
        let mut replies = Vec::new();
        for pair in msg.words.chunks(2) {
            let (idx, input) = (pair[0], pair[1]);
            let kind = self.kind;
            let bx = self.boxes.entry(idx).or_insert_with(|| NlBox::new(kind, idx));
            bx.input(side, input).map_err(|e| RunError::protocol(me, e.to_string()))?;
            match bx.output(side, ctx) {
                Ok(v) => replies.extend([idx, v]),
                Err(NonlocalError::NotReady) => self.waiting.push((idx, msg.from)),
                Err(e) => return Err(RunError::protocol(me, e.to_string())),
            }
        }
        // Deliver outputs for signalling boxes whose other input just arrived.
        let mut still = Vec::new();
        for (idx, who) in std::mem::take(&mut self.waiting) {
            let s = if matches!(who, PartyId::Prover(1) | PartyId::Verifier(1)) {
                Side::Left
            } else {
                Side::Right
            };
            let bx = self.boxes.get_mut(&idx).expect("waiting box exists");
            match bx.output(s, ctx) {
                Ok(v) => ctx.send(who, BOX_LABEL, vec![idx, v])?,
                Err(NonlocalError::NotReady) => still.push((idx, who)),
                Err(e) => return Err(RunError::protocol(me, e.to_string())),
            }
        }
        self.waiting = still;
        if !replies.is_empty() {
            ctx.send(msg.from, BOX_LABEL, replies)?;
        }
        Ok(())
    }
}

pub type PartyFactory<X> = Arc<dyn Fn(&X) -> Box<dyn Party> + Send + Sync>;
pub type Decider<X> = Arc<dyn Fn(&X, &[Tape]) -> bool + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TapeEntry {
    pub label: String,
    pub words: Vec<u64>,
    /// Visible to the decider but redacted from the writer's view.
    pub sealed: bool,
}

pub type Tape = Vec<TapeEntry>;

pub struct Experiment<X> {
    pub topology: Topology,
    provers: Vec<PartyFactory<X>>,
    verifiers: Vec<PartyFactory<X>>,
    decider: Decider<X>,
    pub prover_correlator: Option<BoxKind>,
    pub verifier_correlator: Option<BoxKind>,
    /// Program run as the prover correlator instead of a box hub.
    prover_hub: Option<PartyFactory<X>>,
    pub round_cap: usize,
}

impl<X> Clone for Experiment<X> {
    fn clone(&self) -> Self {
        Self {
            topology: self.topology,
            provers: self.provers.clone(),
            verifiers: self.verifiers.clone(),
            decider: self.decider.clone(),
            prover_correlator: self.prover_correlator,
            verifier_correlator: self.verifier_correlator,
            prover_hub: self.prover_hub.clone(),
            round_cap: self.round_cap,
        }
    }
}

/// Assembles an experiment. A correlator of `None` is the empty correlator;
/// both sides always get their shared random string.
pub fn build_lemip<X>(
    k: u32,
    provers: Vec<PartyFactory<X>>,
    verifiers: Vec<PartyFactory<X>>,
    decider: Decider<X>,
    prover_correlator: Option<BoxKind>,
    verifier_correlator: Option<BoxKind>,
) -> Result<Experiment<X>, RunError> {
    if k == 0 {
        return Err(RunError::Config("k must be at least 1".into()));
    }
    if provers.len() != k as usize || verifiers.len() != k as usize {
        return Err(RunError::Config(format!(
            "k={k} but {} prover and {} verifier programs",
            provers.len(),
            verifiers.len()
        )));
    }
    Ok(Experiment {
        topology: Topology { k },
        provers,
        verifiers,
        decider,
        prover_correlator,
        verifier_correlator,
        prover_hub: None,
        round_cap: DEFAULT_ROUND_CAP,
    })
}

impl<X> Experiment<X> {
    pub fn with_round_cap(mut self, cap: usize) -> Self {
        self.round_cap = cap;
        self
    }

    /// Replaces the prover programs, keeping everything else.
    pub fn with_provers(mut self, provers: Vec<PartyFactory<X>>, correlator: Option<BoxKind>) -> Self {
        assert_eq!(provers.len(), self.topology.k as usize);
        self.provers = provers;
        self.prover_correlator = correlator;
        self.prover_hub = None;
        self
    }

    /// Replaces the prover programs and runs `hub` as the prover correlator.
    /// Used for simulators that act as one machine behind the provers.
    pub fn with_prover_hub(mut self, provers: Vec<PartyFactory<X>>, hub: PartyFactory<X>) -> Self {
        assert_eq!(provers.len(), self.topology.k as usize);
        self.provers = provers;
        self.prover_correlator = None;
        self.prover_hub = Some(hub);
        self
    }

    pub fn provers(&self) -> Vec<PartyFactory<X>> {
        self.provers.clone()
    }

    pub fn verifiers(&self) -> Vec<PartyFactory<X>> {
        self.verifiers.clone()
    }

    pub fn with_verifiers(mut self, verifiers: Vec<PartyFactory<X>>) -> Self {
        assert_eq!(verifiers.len(), self.topology.k as usize);
        self.verifiers = verifiers;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Record {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub label: String,
    #[serde(serialize_with = "hex_words")]
    pub payload: Vec<u64>,
    pub sealed: bool,
}

fn hex_words<S: serde::Serializer>(w: &[u64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(w.iter().map(|v| format!("{v:x}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct Transcript {
    pub input: serde_json::Value,
    pub records: Vec<Record>,
    pub tapes: Vec<Tape>,
    pub coins: Vec<CoinRecord>,
    pub rounds: usize,
    pub accept: bool,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript serializes")
    }
}

/// Executes one run with the given coin source.
pub fn run_with<X: Serialize>(
    exp: &Experiment<X>,
    x: &X,
    coins: &mut dyn CoinSource,
) -> Result<Transcript, RunError> {
    let topo = exp.topology;
    let order = topo.parties();
    let mut parties: HashMap<PartyId, Box<dyn Party>> = HashMap::new();
    for (i, f) in exp.verifiers.iter().enumerate() {
        parties.insert(PartyId::Verifier(i as u32 + 1), f(x));
    }
    for (i, f) in exp.provers.iter().enumerate() {
        parties.insert(PartyId::Prover(i as u32 + 1), f(x));
    }
    let hub = |c: Option<BoxKind>| -> Box<dyn Party> {
        match c {
            None => Box::new(EmptyHub),
            Some(kind) => Box::new(BoxHub::new(kind)),
        }
    };
    let prover_hub = match &exp.prover_hub {
        Some(f) => f(x),
        None => hub(exp.prover_correlator),
    };
    parties.insert(PartyId::ProverHub, prover_hub);
    parties.insert(PartyId::VerifierHub, hub(exp.verifier_correlator));

    let mut records = Vec::new();
    let mut tapes: Vec<Tape> = vec![Vec::new(); topo.k as usize];
    let mut coin_log = Vec::new();
    let mut inboxes: HashMap<PartyId, VecDeque<Message>> = HashMap::new();
    let mut seq = 0u64;
    let mut violation: Option<RunError> = None;

    let mut dispatch = |from: PartyId,
                        outbox: Vec<Message>,
                        inboxes: &mut HashMap<PartyId, VecDeque<Message>>,
                        records: &mut Vec<Record>,
                        tapes: &mut Vec<Tape>| {
        debug_assert!(outbox.iter().all(|m| m.from == from));
        for m in outbox {
            if m.to == PartyId::V0 {
                let PartyId::Verifier(l) = m.from else { unreachable!("only verifiers write tapes") };
                tapes[l as usize - 1].push(TapeEntry {
                    label: m.label,
                    words: m.words,
                    sealed: m.sealed,
                });
                continue;
            }
            records.push(Record {
                seq,
                from: m.from,
                to: m.to,
                label: m.label.clone(),
                payload: m.words.clone(),
                sealed: m.sealed,
            });
            seq += 1;
            inboxes.entry(m.to).or_default().push_back(m);
        }
    };

    for &p in &order {
        let mut outbox = Vec::new();
        let party = parties.get_mut(&p).expect("party exists");
        let mut ctx = Ctx {
            me: p,
            topology: topo,
            outbox: &mut outbox,
            coins,
            coin_log: &mut coin_log,
            violation: &mut violation,
        };
        let res = party.start(&mut ctx);
        if let Some(v) = violation.take() {
            return Err(v);
        }
        res?;
        dispatch(p, outbox, &mut inboxes, &mut records, &mut tapes);
    }

    let mut rounds = 0usize;
    while inboxes.values().any(|q| !q.is_empty()) {
        rounds += 1;
        if rounds > exp.round_cap {
            return Err(RunError::Timeout(exp.round_cap));
        }
        // Everything queued before this round is delivered this round.
        let mut pending: HashMap<PartyId, VecDeque<Message>> = std::mem::take(&mut inboxes);
        for &p in &order {
            let Some(queue) = pending.remove(&p) else { continue };
            for msg in queue {
                let mut outbox = Vec::new();
                let party = parties.get_mut(&p).expect("party exists");
                let mut ctx = Ctx {
                    me: p,
                    topology: topo,
                    outbox: &mut outbox,
                    coins,
                    coin_log: &mut coin_log,
                    violation: &mut violation,
                };
                let res = party.on_message(&mut ctx, &msg);
                if let Some(v) = violation.take() {
                    return Err(v);
                }
                res?;
                dispatch(p, outbox, &mut inboxes, &mut records, &mut tapes);
            }
        }
    }

    for (l, tape) in tapes.iter().enumerate() {
        for entry in tape {
            records.push(Record {
                seq,
                from: PartyId::Verifier(l as u32 + 1),
                to: PartyId::V0,
                label: entry.label.clone(),
                payload: entry.words.clone(),
                sealed: entry.sealed,
            });
            seq += 1;
        }
    }
    let accept = (exp.decider)(x, &tapes);
    Ok(Transcript {
        input: serde_json::to_value(x).map_err(|e| RunError::Parameter(e.to_string()))?,
        records,
        tapes,
        coins: coin_log,
        rounds,
        accept,
    })
}

/// Executes one seeded run; a pure function of its arguments.
pub fn run<X: Serialize>(exp: &Experiment<X>, x: &X, seed: u64) -> Result<Transcript, RunError> {
    run_with(exp, x, &mut SeededCoins::new(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub accepted: u64,
    pub trials: u64,
    pub rate: f64,
    /// 95% Wilson score interval.
    pub ci: (f64, f64),
}

impl Estimate {
    pub fn from_counts(accepted: u64, trials: u64) -> Self {
        let (lo, hi) = wilson_interval(accepted, trials);
        Self {
            accepted,
            trials,
            rate: accepted as f64 / trials as f64,
            ci: (lo, hi),
        }
    }
}

pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Number of worker threads: `LEMIP_THREADS` if set, else rayon's default.
pub fn thread_count() -> usize {
    std::env::var("LEMIP_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs `trials` independent trial closures in parallel and counts successes.
/// Trial `i` receives `trial_seed(seed, i)`.
pub fn count_parallel<F>(trials: u64, seed: u64, f: F) -> Result<u64, RunError>
where
    F: Fn(u64) -> Result<bool, RunError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| f(trial_seed(seed, i)).map(u64::from))
            .try_reduce(|| 0, |a, b| Ok(a + b))
    })
}

/// Fraction of accepting runs with a Wilson interval.
pub fn estimate_accept_probability<X: Serialize + Sync>(
    exp: &Experiment<X>,
    x: &X,
    trials: u64,
    seed: u64,
) -> Result<Estimate, RunError> {
    estimate_repeated(exp, x, trials, 1, seed)
}

/// Like [`estimate_accept_probability`], but a trial accepts only if all of
/// `reps` sequential repetitions accept. Repetition `j` of a trial seeded `s`
/// runs with `trial_seed(s, j)`.
pub fn estimate_repeated<X: Serialize + Sync>(
    exp: &Experiment<X>,
    x: &X,
    trials: u64,
    reps: u64,
    seed: u64,
) -> Result<Estimate, RunError> {
    if trials == 0 {
        return Err(RunError::Parameter("trials must be at least 1".into()));
    }
    if reps == 0 {
        return Err(RunError::Parameter("repetitions must be at least 1".into()));
    }
    let accepted = count_parallel(trials, seed, |s| {
        for j in 0..reps {
            if !run(exp, x, trial_seed(s, j))?.accept {
                return Ok(false);
            }
        }
        Ok(true)
    })?;
    Ok(Estimate::from_counts(accepted, trials))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ViewRecord {
    pub from: PartyId,
    pub to: PartyId,
    pub label: String,
    /// `None` for sealed payloads.
    pub payload: Option<Vec<u64>>,
}

/// A verifier's (or V0's) incoming and outgoing messages plus its coins.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct View {
    pub party: PartyId,
    pub records: Vec<ViewRecord>,
    pub coins: Vec<u64>,
}

pub fn extract_view(t: &Transcript, v: PartyId) -> Result<View, RunError> {
    if !matches!(v, PartyId::Verifier(_) | PartyId::V0) {
        return Err(RunError::Parameter(format!("views are only extracted for verifiers, not {v}")));
    }
    let records = t
        .records
        .iter()
        .filter(|r| r.from == v || r.to == v)
        .map(|r| ViewRecord {
            from: r.from,
            to: r.to,
            label: r.label.clone(),
            payload: (!r.sealed).then(|| r.payload.clone()),
        })
        .collect();
    let coins = t.coins.iter().filter(|c| c.party == v).map(|c| c.value).collect();
    Ok(View {
        party: v,
        records,
        coins,
    })
}

/// Exact distribution of `observe(transcript)` over all coin outcomes.
pub fn enumerate_distribution<X, K, F>(
    exp: &Experiment<X>,
    x: &X,
    pin_pads: bool,
    mut observe: F,
) -> Result<BTreeMap<K, BigRational>, RunError>
where
    X: Serialize,
    K: Ord,
    F: FnMut(&Transcript) -> K,
{
    let mut en = Enumerator::new(pin_pads);
    let mut dist: BTreeMap<K, BigRational> = BTreeMap::new();
    loop {
        let t = run_with(exp, x, &mut en)?;
        let p = en.probability();
        let slot = dist.entry(observe(&t)).or_insert_with(BigRational::zero);
        *slot += p;
        if !en.advance() {
            break;
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl Party for Echo {
        fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> Result<(), RunError> {
            let PartyId::Verifier(i) = msg.from else { return Ok(()) };
            let w = msg.words.iter().map(|v| v + 1).collect();
            ctx.send(PartyId::Verifier(i), "echo", w)
        }
    }

    struct Asker;
    impl Party for Asker {
        fn start(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
            let PartyId::Verifier(i) = ctx.me() else { unreachable!() };
            let c = ctx.coin(10);
            let s = ctx.shared(0, 100);
            ctx.send(PartyId::Prover(i), "q", vec![c, s])
        }
        fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> Result<(), RunError> {
            ctx.write_tape("answer", msg.words.clone())
        }
    }

    fn echo_experiment(k: u32) -> Experiment<u32> {
        let provers: Vec<PartyFactory<u32>> = (0..k).map(|_| Arc::new(|_: &u32| Box::new(Echo) as Box<dyn Party>) as PartyFactory<u32>).collect();
        let verifiers: Vec<PartyFactory<u32>> = (0..k).map(|_| Arc::new(|_: &u32| Box::new(Asker) as Box<dyn Party>) as PartyFactory<u32>).collect();
        build_lemip(k, provers, verifiers, Arc::new(|_: &u32, t: &[Tape]| t.iter().all(|t| t.len() == 1)), None, None).unwrap()
    }

    #[test]
    fn legal_edges() {
        use PartyId::*;
        let t = Topology { k: 2 };
        assert!(t.is_legal(Verifier(1), Prover(1)));
        assert!(t.is_legal(Prover(2), Verifier(2)));
        assert!(t.is_legal(VerifierHub, Verifier(2)));
        assert!(t.is_legal(Prover(1), ProverHub));
        assert!(t.is_legal(Verifier(2), V0));
        assert!(!t.is_legal(Prover(1), Prover(2)));
        assert!(!t.is_legal(Verifier(1), Verifier(2)));
        assert!(!t.is_legal(Prover(1), Verifier(2)));
        assert!(!t.is_legal(Prover(1), V0));
        assert!(!t.is_legal(Verifier(3), Prover(3)));
        assert!(!t.is_legal(ProverHub, Verifier(1)));
    }

    #[test]
    fn single_pair_runs() {
        let exp = echo_experiment(1);
        let t = run(&exp, &0, 5).unwrap();
        assert!(t.accept);
        assert_eq!(t.tapes.len(), 1);
    }

    #[test]
    fn configuration_errors() {
        let exp = echo_experiment(2);
        let bad = build_lemip::<u32>(3, exp.provers.clone(), exp.verifiers.clone(), exp.decider.clone(), None, None);
        assert!(matches!(bad, Err(RunError::Config(_))));
        assert!(matches!(
            estimate_accept_probability(&exp, &0, 0, 1),
            Err(RunError::Parameter(_))
        ));
    }

    #[test]
    fn determinism_and_views() {
        let exp = echo_experiment(2);
        let a = run(&exp, &0, 77).unwrap();
        let b = run(&exp, &0, 77).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let v1 = extract_view(&a, PartyId::Verifier(1)).unwrap();
        assert_eq!(v1, extract_view(&b, PartyId::Verifier(1)).unwrap());
        assert_eq!(v1.records.len(), 3);
        assert!(v1.records.iter().all(|r| r.from == PartyId::Verifier(1) || r.to == PartyId::Verifier(1)));
        assert_eq!(v1.coins.len(), 2);
        let v0 = extract_view(&a, PartyId::V0).unwrap();
        assert_eq!(v0.records.len(), 2);
        assert!(v0.records.iter().all(|r| r.to == PartyId::V0 && matches!(r.from, PartyId::Verifier(_))));
        assert!(extract_view(&a, PartyId::Prover(1)).is_err());
    }

    #[test]
    fn shared_string_is_shared() {
        let exp = echo_experiment(2);
        for seed in 0..20 {
            let t = run(&exp, &0, seed).unwrap();
            assert_eq!(t.tapes[0][0].words[1], t.tapes[1][0].words[1]);
        }
    }

    struct Chatty(u32);
    impl Party for Chatty {
        fn start(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
            ctx.send(PartyId::Prover(1), "ping", vec![])
        }
        fn on_message(&mut self, ctx: &mut Ctx, _msg: &Message) -> Result<(), RunError> {
            self.0 += 1;
            ctx.send(PartyId::Prover(1), "ping", vec![self.0 as u64])
        }
    }

    #[test]
    fn round_cap() {
        let exp = echo_experiment(1)
            .with_verifiers(vec![Arc::new(|_: &u32| Box::new(Chatty(0)) as Box<dyn Party>)])
            .with_round_cap(50);
        assert_eq!(run(&exp, &0, 1).unwrap_err(), RunError::Timeout(50));
    }

    #[test]
    fn enumerator_covers_every_leaf() {
        let exp = echo_experiment(2);
        // V1 coin (10) · V2 coin (10) · shared S position 0 (100).
        let dist = enumerate_distribution(&exp, &0, false, |t| t.tapes[0][0].words.clone()).unwrap();
        assert_eq!(dist.len(), 1000);
        let total: BigRational = dist.values().cloned().sum();
        assert!(total.is_one());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.35);
        assert_eq!(trial_seed(0, 0), splitmix64(splitmix64(0)));
    }
}
