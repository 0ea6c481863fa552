//! Graph 3-coloring protocols: the two-prover edge check with a merged and
//! a split verifier, the two-verifier commitment and its use to hide the
//! coloring, and the two-out-of-three-prover protocol with its
//! honest-verifier simulator.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{field_range, Gf2k, GfError};
use crate::runtime::{
    build_lemip, extract_view, run, CoinSource, Ctx, DrawKind, Experiment, Message, Party, PartyFactory, PartyId,
    RunError, SeededCoins, Tape, Transcript, View,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThreeColError {
    #[error("graph error: {0}")]
    Graph(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("simulator contract violated: {0}")]
    SimulatorContract(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Field(#[from] GfError),
}

type Result<T> = std::result::Result<T, ThreeColError>;

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Largest graph for which colorings are enumerated by brute force.
pub const MAX_BRUTE_FORCE_NODES: usize = 10;

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(u, v) in &edges {
            if u == v {
                return Err(ThreeColError::Graph(format!("self-loop at node {u}")));
            }
            if u >= n || v >= n {
                return Err(ThreeColError::Graph(format!("edge ({u},{v}) outside {n} nodes")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(ThreeColError::Graph(format!("duplicate edge ({u},{v})")));
            }
        }
        if edges.is_empty() {
            return Err(ThreeColError::Graph("graph has no edges".into()));
        }
        Ok(Self { n, edges })
    }

    /// Parses an edge list, one `u v` pair per line (0-indexed). Blank lines
    /// and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| ThreeColError::Graph(format!("line {}: expected two node indices", i + 1)))?;
            let [u, v] = nums[..] else {
                return Err(ThreeColError::Graph(format!("line {}: expected two node indices", i + 1)));
            };
            edges.push((u, v));
        }
        let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        Self::new(n, edges)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.iter().any(|&(a, b)| (a, b) == (u, v) || (b, a) == (u, v))
    }

    /// Edges in both orientations, each edge `(u, v)` giving `(u, v)` then `(v, u)`.
    pub fn oriented_edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect()
    }

    /// Every proper coloring, in lexicographic order of the color vector.
    pub fn proper_colorings(&self) -> Result<Vec<Coloring>> {
        if self.n > MAX_BRUTE_FORCE_NODES {
            return Err(ThreeColError::Parameter(format!(
                "brute-force coloring limited to {MAX_BRUTE_FORCE_NODES} nodes"
            )));
        }
        let mut out = Vec::new();
        let total = 3usize.pow(self.n as u32);
        for code in 0..total {
            let mut c = vec![0u8; self.n];
            let mut x = code;
            for slot in c.iter_mut().rev() {
                *slot = (x % 3) as u8;
                x /= 3;
            }
            let col = Coloring { colors: c };
            if col.is_proper(self) {
                out.push(col);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coloring {
    pub colors: Vec<u8>,
}

impl Coloring {
    pub fn new(colors: Vec<u8>) -> Result<Self> {
        if colors.iter().any(|&c| c > 2) {
            return Err(ThreeColError::Parameter("colors must be 0, 1 or 2".into()));
        }
        Ok(Self { colors })
    }

    pub fn violated_edges(&self, g: &Graph) -> usize {
        g.edges.iter().filter(|&&(u, v)| self.colors[u] == self.colors[v]).count()
    }

    pub fn is_proper(&self, g: &Graph) -> bool {
        self.colors.len() == g.n && self.violated_edges(g) == 0
    }
}

fn check_colorings(g: &Graph, colorings: &[Coloring]) -> Result<()> {
    if colorings.is_empty() {
        return Err(ThreeColError::Parameter("no coloring supplied".into()));
    }
    if colorings.iter().any(|c| c.colors.len() != g.n) {
        return Err(ThreeColError::Parameter("coloring length differs from node count".into()));
    }
    Ok(())
}

/// Shared-string positions of the edge-check protocols.
const EDGE_POS: u64 = 0;
const NODE_POS: u64 = 1;
const COLORING_POS: u64 = 0;

fn protocol_error(me: PartyId, msg: impl Into<String>) -> RunError {
    RunError::protocol(me, msg)
}

/// Edge check with one verifier questioning both provers. Draws the same
/// shared positions as [`edge_check_experiment`], so a seed decides both
/// versions identically.
pub fn run_protocol1(g: &Graph, colorings: &[Coloring], seed: u64) -> Result<bool> {
    check_colorings(g, colorings)?;
    let mut coins = SeededCoins::new(seed);
    let c = &colorings[coins.shared(0, COLORING_POS, colorings.len() as u64, DrawKind::Plain) as usize];
    let (u, v) = g.edges[coins.shared(1, EDGE_POS, g.edges.len() as u64, DrawKind::Plain) as usize];
    let node = if coins.shared(1, NODE_POS, 2, DrawKind::Plain) == 0 { u } else { v };
    // Both provers answer from the agreed coloring.
    let (cu, cv, cn) = (c.colors[u], c.colors[v], c.colors[node]);
    let first = if node == u { cu } else { cv };
    Ok(cu != cv && cn == first)
}

struct EdgeProver {
    graph: Graph,
    colorings: Arc<Vec<Coloring>>,
    coloring: Option<Coloring>,
}

impl Party for EdgeProver {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        let i = ctx.shared(COLORING_POS, self.colorings.len() as u64) as usize;
        self.coloring = Some(self.colorings[i].clone());
        Ok(())
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        let c = self.coloring.as_ref().expect("chosen at start");
        let me = ctx.me();
        if msg.words.iter().any(|&n| n as usize >= self.graph.n) {
            return Err(protocol_error(me, "node outside the graph"));
        }
        let colors = msg.words.iter().map(|&n| c.colors[n as usize] as u64).collect();
        ctx.send(msg.from, "colors", colors)
    }
}

/// Verifier of the split edge check; the first asks for the edge, the
/// second for one of its nodes.
struct EdgeVerifier {
    graph: Graph,
    first: bool,
    asked: Vec<u64>,
}

impl Party for EdgeVerifier {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        let (u, v) = self.graph.edges[ctx.shared(EDGE_POS, self.graph.edges.len() as u64) as usize];
        let pick = ctx.shared(NODE_POS, 2);
        self.asked = if self.first {
            vec![u as u64, v as u64]
        } else {
            vec![if pick == 0 { u as u64 } else { v as u64 }]
        };
        let me = ctx.me();
        let PartyId::Verifier(i) = me else { unreachable!("verifier program") };
        ctx.send(PartyId::Prover(i), "ask", self.asked.clone())
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        ctx.write_tape("asked", self.asked.clone())?;
        ctx.write_tape("colors", msg.words.clone())
    }
}

fn tape_words<'a>(t: &'a Tape, label: &str) -> Option<&'a [u64]> {
    t.iter().find(|e| e.label == label).map(|e| e.words.as_slice())
}

fn edge_decide(tapes: &[Tape]) -> Option<bool> {
    let [t1, t2] = tapes else { return None };
    let (edge, ec) = (tape_words(t1, "asked")?, tape_words(t1, "colors")?);
    let (node, nc) = (tape_words(t2, "asked")?, tape_words(t2, "colors")?);
    if edge.len() != 2 || ec.len() != 2 || node.len() != 1 || nc.len() != 1 {
        return Some(false);
    }
    let pos = edge.iter().position(|&n| n == node[0])?;
    Some(ec[0] != ec[1] && ec[pos] == nc[0])
}

/// Split-verifier edge check: verifiers agree on an edge and a node of it,
/// provers agree on a coloring drawn from `colorings`.
pub fn edge_check_experiment(g: &Graph, colorings: Vec<Coloring>) -> Result<Experiment<Graph>> {
    check_colorings(g, &colorings)?;
    let colorings = Arc::new(colorings);
    let prover = |colorings: Arc<Vec<Coloring>>| -> PartyFactory<Graph> {
        Arc::new(move |g: &Graph| {
            Box::new(EdgeProver {
                graph: g.clone(),
                colorings: colorings.clone(),
                coloring: None,
            }) as Box<dyn Party>
        })
    };
    let verifier = |first: bool| -> PartyFactory<Graph> {
        Arc::new(move |g: &Graph| {
            Box::new(EdgeVerifier {
                graph: g.clone(),
                first,
                asked: Vec::new(),
            }) as Box<dyn Party>
        })
    };
    Ok(build_lemip(
        2,
        vec![prover(colorings.clone()), prover(colorings)],
        vec![verifier(true), verifier(false)],
        Arc::new(|_: &Graph, t: &[Tape]| edge_decide(t).unwrap_or(false)),
        None,
        None,
    )?)
}

pub fn run_protocol2(g: &Graph, colorings: &[Coloring], seed: u64) -> Result<bool> {
    let exp = edge_check_experiment(g, colorings.to_vec())?;
    Ok(run(&exp, g, seed)?.accept)
}

/// Outcome of one two-verifier commitment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommitOutcome {
    pub accept: bool,
    /// The unveiled bit when the unveiling is valid.
    pub bit: Option<bool>,
    pub r: Gf2k,
    pub x: Gf2k,
    pub w: Gf2k,
}

/// `x + w = r` opens 1, `x + w = 0` opens 0, anything else is invalid.
pub fn open_bit(x: Gf2k, w: Gf2k, r: Gf2k) -> Option<bool> {
    let s = x + w;
    if s == r && !r.is_zero() {
        Some(true)
    } else if s.is_zero() {
        Some(false)
    } else {
        None
    }
}

/// How the unveiling prover behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unveiler {
    Honest,
    /// Knows the verifiers' `r` (by signalling) and unveils `target`
    /// regardless of the committed bit.
    Informed { target: bool },
}

const R_POS: u64 = 0;
const W_POS: u64 = 1;

fn nonzero(ctx: &mut Ctx, pos: u64, k: u32) -> Gf2k {
    Gf2k::truncate(1 + ctx.shared(pos, field_range(k) - 1), k)
}

struct SimpleCommitter {
    k: u32,
    b: bool,
}

impl Party for SimpleCommitter {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        let me = ctx.me();
        let r = Gf2k::new(msg.words.first().copied().unwrap_or(0), self.k).map_err(|e| protocol_error(me, e.to_string()))?;
        let w = Gf2k::truncate(ctx.shared(W_POS, field_range(self.k)), self.k);
        let x = w + Gf2k::from_bit(self.b, self.k) * r;
        ctx.send(msg.from, "x", vec![x.bits()])
    }
}

struct SimpleUnveiler {
    k: u32,
    mode: Unveiler,
    /// The verifiers' `r`, available only to an informed unveiler.
    leaked_r: Gf2k,
    committed: bool,
}

impl Party for SimpleUnveiler {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        let w = Gf2k::truncate(ctx.shared(W_POS, field_range(self.k)), self.k);
        let sent = match self.mode {
            Unveiler::Honest => w,
            Unveiler::Informed { target } if target != self.committed => w + self.leaked_r,
            Unveiler::Informed { .. } => w,
        };
        ctx.send(PartyId::Verifier(2), "w", vec![sent.bits()])
    }

    fn on_message(&mut self, _ctx: &mut Ctx, _msg: &Message) -> std::result::Result<(), RunError> {
        Ok(())
    }
}

struct ChallengeVerifier {
    k: u32,
}

impl Party for ChallengeVerifier {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        let r = nonzero(ctx, R_POS, self.k);
        ctx.write_tape("r", vec![r.bits()])?;
        ctx.send(PartyId::Prover(1), "r", vec![r.bits()])
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        ctx.write_tape("x", msg.words.clone())
    }
}

struct RecordingVerifier;

impl Party for RecordingVerifier {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        ctx.write_tape(&msg.label, msg.words.clone())
    }
}

fn simple_open(k: u32, tapes: &[Tape]) -> Option<(Gf2k, Gf2k, Gf2k, Option<bool>)> {
    let [t1, t2] = tapes else { return None };
    let g = |w: &[u64]| w.first().and_then(|&v| Gf2k::new(v, k).ok());
    let r = g(tape_words(t1, "r")?)?;
    let x = g(tape_words(t1, "x")?)?;
    let w = g(tape_words(t2, "w")?)?;
    Some((r, x, w, open_bit(x, w, r)))
}

/// Single-bit commitment between two verifiers: `V1` sends `r`, `P1`
/// answers `x = w + b·r`, `P2` reveals `w` to `V2`.
pub fn run_protocol3_commitment(b: bool, k: u32, unveiler: Unveiler, seed: u64) -> Result<(CommitOutcome, Transcript)> {
    if !(1..=64).contains(&k) {
        return Err(ThreeColError::Parameter(format!("k={k} outside 1..=64")));
    }
    // An informed unveiler is handed r out of band; read it from the same
    // seeded string the verifiers will use.
    let leaked_r = {
        let mut coins = SeededCoins::new(seed);
        Gf2k::truncate(1 + coins.shared(1, R_POS, field_range(k) - 1, DrawKind::Plain), k)
    };
    let exp = build_lemip(
        2,
        vec![
            Arc::new(move |_: &bool| Box::new(SimpleCommitter { k, b }) as Box<dyn Party>),
            Arc::new(move |_: &bool| {
                Box::new(SimpleUnveiler {
                    k,
                    mode: unveiler,
                    leaked_r,
                    committed: b,
                }) as Box<dyn Party>
            }),
        ],
        vec![
            Arc::new(move |_: &bool| Box::new(ChallengeVerifier { k }) as Box<dyn Party>),
            Arc::new(|_: &bool| Box::new(RecordingVerifier) as Box<dyn Party>),
        ],
        Arc::new(move |_: &bool, t: &[Tape]| simple_open(k, t).is_some_and(|o| o.3.is_some())),
        None,
        None,
    )?;
    let t = run(&exp, &b, seed)?;
    let (r, x, w, bit) = simple_open(k, &t.tapes).ok_or_else(|| ThreeColError::Parameter("incomplete tapes".into()))?;
    Ok((
        CommitOutcome {
            accept: t.accept,
            bit,
            r,
            x,
            w,
        },
        t,
    ))
}

/// Second verifier of the committed coloring protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnveilRequest {
    /// The two nodes of the agreed edge.
    #[default]
    Edge,
    /// The edge's nodes plus one more node.
    ExtraNode(usize),
}

/// Session of bit `j` of node `n`'s color.
fn session(n: usize, j: usize) -> u64 {
    2 * n as u64 + j as u64
}

struct ColorCommitter {
    k: u32,
    n: usize,
    colorings: Arc<Vec<Coloring>>,
}

impl Party for ColorCommitter {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        let me = ctx.me();
        if msg.words.len() != 2 * self.n {
            return Err(protocol_error(me, "expected one string per session"));
        }
        let c = &self.colorings[ctx.shared(COLORING_POS, self.colorings.len() as u64) as usize];
        let mut xs = Vec::with_capacity(2 * self.n);
        for n in 0..self.n {
            for j in 0..2 {
                let s = session(n, j);
                let r = Gf2k::new(msg.words[s as usize], self.k).map_err(|e| protocol_error(me, e.to_string()))?;
                let w = Gf2k::truncate(ctx.shared(1 + s, field_range(self.k)), self.k);
                let bit = (c.colors[n] >> j) & 1 == 1;
                xs.push((w + Gf2k::from_bit(bit, self.k) * r).bits());
            }
        }
        ctx.send(msg.from, "x", xs)
    }
}

struct ColorUnveiler {
    k: u32,
    n: usize,
}

impl Party for ColorUnveiler {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        if msg.words.iter().any(|&n| n as usize >= self.n) {
            return Err(protocol_error(ctx.me(), "node outside the graph"));
        }
        let mut ws = Vec::new();
        for &n in &msg.words {
            for j in 0..2 {
                ws.push(ctx.shared(1 + session(n as usize, j), field_range(self.k)));
            }
        }
        ctx.send(msg.from, "w", ws)
    }
}

struct ColorChallenger {
    k: u32,
    graph: Graph,
}

impl Party for ColorChallenger {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        let (u, v) = self.graph.edges[ctx.shared(EDGE_POS, self.graph.edges.len() as u64) as usize];
        let rs: Vec<u64> = (0..2 * self.graph.n as u64).map(|s| nonzero(ctx, 1 + s, self.k).bits()).collect();
        ctx.write_tape("edge", vec![u as u64, v as u64])?;
        ctx.write_tape("r", rs.clone())?;
        ctx.send(PartyId::Prover(1), "r", rs)
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        ctx.write_tape("x", msg.words.clone())
    }
}

struct ColorRequester {
    graph: Graph,
    request: UnveilRequest,
    nodes: Vec<u64>,
}

impl Party for ColorRequester {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        let (u, v) = self.graph.edges[ctx.shared(EDGE_POS, self.graph.edges.len() as u64) as usize];
        self.nodes = vec![u as u64, v as u64];
        if let UnveilRequest::ExtraNode(e) = self.request {
            self.nodes.push(e as u64);
        }
        ctx.send(PartyId::Prover(2), "unveil", self.nodes.clone())
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        ctx.write_tape("nodes", self.nodes.clone())?;
        ctx.write_tape("w", msg.words.clone())
    }
}

/// Colors unveiled in a committed-coloring run, with `None` for an invalid
/// unveiling (either bit fails or the value is not a color).
pub fn unveiled_colors(k: u32, tapes: &[Tape]) -> Option<BTreeMap<usize, Option<u8>>> {
    let [t1, t2] = tapes else { return None };
    let rs = tape_words(t1, "r")?;
    let xs = tape_words(t1, "x")?;
    let nodes = tape_words(t2, "nodes")?;
    let ws = tape_words(t2, "w")?;
    if rs.len() != xs.len() || ws.len() != 2 * nodes.len() {
        return None;
    }
    let g = |v: u64| Gf2k::new(v, k).ok();
    let mut out = BTreeMap::new();
    for (i, &n) in nodes.iter().enumerate() {
        let mut color = Some(0u8);
        for j in 0..2 {
            let s = session(n as usize, j) as usize;
            if s >= rs.len() {
                return None;
            }
            let bit = open_bit(g(xs[s])?, g(ws[2 * i + j])?, g(rs[s])?);
            color = match (color, bit) {
                (Some(c), Some(b)) => Some(c | (b as u8) << j),
                _ => None,
            };
        }
        out.insert(n as usize, color.filter(|&c| c < 3));
    }
    Some(out)
}

fn committed_decide(k: u32, tapes: &[Tape]) -> Option<bool> {
    let edge = tape_words(tapes.first()?, "edge")?;
    let colors = unveiled_colors(k, tapes)?;
    let cu = (*colors.get(&(edge[0] as usize))?)?;
    let cv = (*colors.get(&(edge[1] as usize))?)?;
    Some(colors.values().all(Option::is_some) && cu != cv)
}

/// Committed coloring: `P1` commits every node's color bit by bit, `V2`
/// asks `P2` to unveil the agreed edge.
pub fn committed_coloring_experiment(
    g: &Graph,
    colorings: Vec<Coloring>,
    k: u32,
    request: UnveilRequest,
) -> Result<Experiment<Graph>> {
    check_colorings(g, &colorings)?;
    if !(2..=64).contains(&k) {
        return Err(ThreeColError::Parameter(format!("k={k} outside 2..=64")));
    }
    if let UnveilRequest::ExtraNode(e) = request {
        if e >= g.n {
            return Err(ThreeColError::Parameter(format!("node {e} outside the graph")));
        }
    }
    let colorings = Arc::new(colorings);
    let n = g.n;
    Ok(build_lemip(
        2,
        vec![
            Arc::new(move |_: &Graph| {
                Box::new(ColorCommitter {
                    k,
                    n,
                    colorings: colorings.clone(),
                }) as Box<dyn Party>
            }),
            Arc::new(move |_: &Graph| Box::new(ColorUnveiler { k, n }) as Box<dyn Party>),
        ],
        vec![
            Arc::new(move |g: &Graph| Box::new(ColorChallenger { k, graph: g.clone() }) as Box<dyn Party>),
            Arc::new(move |g: &Graph| {
                Box::new(ColorRequester {
                    graph: g.clone(),
                    request,
                    nodes: Vec::new(),
                }) as Box<dyn Party>
            }),
        ],
        Arc::new(move |_: &Graph, t: &[Tape]| committed_decide(k, t).unwrap_or(false)),
        None,
        None,
    )?)
}

pub fn run_protocol4(g: &Graph, colorings: &[Coloring], k: u32, request: UnveilRequest, seed: u64) -> Result<Transcript> {
    let exp = committed_coloring_experiment(g, colorings.to_vec(), k, request)?;
    Ok(run(&exp, g, seed)?)
}

/// Blinded color table `W[n, r] = b_n·r + c_n` over GF(3), `r ∈ {1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WTable {
    pub b: Vec<u8>,
    pub c: Vec<u8>,
}

impl WTable {
    pub fn new(b: Vec<u8>, coloring: &Coloring) -> Result<Self> {
        if b.len() != coloring.colors.len() || b.iter().any(|&x| x > 2) {
            return Err(ThreeColError::Parameter("blinding values must be one GF(3) element per node".into()));
        }
        Ok(Self {
            b,
            c: coloring.colors.clone(),
        })
    }

    pub fn w(&self, n: usize, r: u8) -> u8 {
        debug_assert!(r == 1 || r == 2);
        (self.b[n] * r + self.c[n]) % 3
    }

    /// Recovers `(b, c)` from the two entries of one node.
    pub fn solve(w1: u8, w2: u8) -> (u8, u8) {
        let b = (w2 + 3 - w1) % 3;
        let c = (2 * w1 + 3 - w2) % 3;
        (b, c)
    }
}

/// Which test the verifiers of the three-prover protocol set up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Consistency,
    Edge,
    WellDefinition,
}

impl std::str::FromStr for Mode {
    type Err = ThreeColError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistency" => Ok(Mode::Consistency),
            "edge" => Ok(Mode::Edge),
            "well-definition" => Ok(Mode::WellDefinition),
            other => Err(ThreeColError::Parameter(format!("unknown mode {other:?}"))),
        }
    }
}

/// One verifier's query: nodes `(n0, n1)` and strings `(r0, r1)` in {1, 2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Query {
    pub nodes: (usize, usize),
    pub rs: (u8, u8),
}

impl Query {
    fn words(&self) -> Vec<u64> {
        vec![self.nodes.0 as u64, self.nodes.1 as u64, self.rs.0 as u64, self.rs.1 as u64]
    }

    fn from_words(w: &[u64]) -> Option<Self> {
        let [a, b, r0, r1] = w[..] else { return None };
        let r = |v: u64| (v == 1 || v == 2).then_some(v as u8);
        Some(Self {
            nodes: (a as usize, b as usize),
            rs: (r(r0)?, r(r1)?),
        })
    }

    fn cells(&self) -> [(usize, u8); 2] {
        [(self.nodes.0, self.rs.0), (self.nodes.1, self.rs.1)]
    }
}

/// The verifiers' joint choice: the ordered pair of queried provers (1-based)
/// and the two queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueryPlan {
    pub provers: (u32, u32),
    pub first: Query,
    pub second: Query,
}

const ORDERED_PAIRS: [(u32, u32); 6] = [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)];

/// Draws the plan from the verifiers' shared string.
pub fn draw_plan(g: &Graph, mode: Mode, shared: &mut dyn FnMut(u64, u64) -> u64) -> QueryPlan {
    let provers = ORDERED_PAIRS[shared(0, 6) as usize];
    let oriented = g.oriented_edges();
    let nodes = oriented[shared(1, oriented.len() as u64) as usize];
    let rs = (1 + shared(2, 2) as u8, 1 + shared(3, 2) as u8);
    let first = Query { nodes, rs };
    let second = match mode {
        Mode::Consistency => first,
        Mode::Edge => Query {
            nodes,
            rs: (3 - rs.0, 3 - rs.1),
        },
        Mode::WellDefinition => {
            let i = shared(4, 2) as usize;
            let (node, r) = first.cells()[i];
            // Oriented edges with `node` at position j.
            let touching: Vec<((usize, usize), usize)> = oriented
                .iter()
                .filter_map(|&e| {
                    if e.0 == node {
                        Some((e, 0))
                    } else if e.1 == node {
                        Some((e, 1))
                    } else {
                        None
                    }
                })
                .collect();
            let (e, j) = touching[shared(5, touching.len() as u64) as usize];
            let other = 1 + shared(6, 2) as u8;
            let rs = if j == 0 { (r, other) } else { (other, r) };
            Query { nodes: e, rs }
        }
    };
    QueryPlan { provers, first, second }
}

/// Accept rule applied to the two queries and their answers. Every test
/// whose condition holds must pass.
pub fn check_answers(q1: &Query, a1: (u8, u8), q2: &Query, a2: (u8, u8)) -> bool {
    let mut ok = true;
    if q1 == q2 {
        ok &= a1 == a2;
    }
    if q1.nodes == q2.nodes && q1.rs.0 != q2.rs.0 && q1.rs.1 != q2.rs.1 {
        ok &= (a1.0 + a2.0) % 3 != (a1.1 + a2.1) % 3;
    }
    let cells1 = q1.cells();
    let cells2 = q2.cells();
    let ans1 = [a1.0, a1.1];
    let ans2 = [a2.0, a2.1];
    for i in 0..2 {
        for j in 0..2 {
            if cells1[i] == cells2[j] {
                ok &= ans1[i] == ans2[j];
            }
        }
    }
    ok
}

/// Honest verifier of the three-prover protocol.
struct TripleVerifier {
    graph: Graph,
    mode: Mode,
    query: Option<Query>,
}

impl Party for TripleVerifier {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        let plan = draw_plan(&self.graph, self.mode, &mut |pos, n| ctx.shared(pos, n));
        let PartyId::Verifier(me) = ctx.me() else { unreachable!("verifier program") };
        let q = if me == plan.provers.0 {
            plan.first
        } else if me == plan.provers.1 {
            plan.second
        } else {
            return Ok(());
        };
        self.query = Some(q);
        ctx.write_tape("query", q.words())?;
        ctx.send(PartyId::Prover(me), "query", q.words())
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        if self.query.is_some() {
            ctx.write_tape("answer", msg.words.clone())?;
        }
        Ok(())
    }
}

fn triple_decide(tapes: &[Tape]) -> Option<bool> {
    let active: Vec<&Tape> = tapes.iter().filter(|t| tape_words(t, "query").is_some()).collect();
    let [t1, t2] = active[..] else { return None };
    let q1 = Query::from_words(tape_words(t1, "query")?)?;
    let q2 = Query::from_words(tape_words(t2, "query")?)?;
    let ans = |t: &Tape| -> Option<(u8, u8)> {
        let [a, b] = tape_words(t, "answer")?[..] else { return None };
        (a < 3 && b < 3).then_some((a as u8, b as u8))
    };
    Some(check_answers(&q1, ans(t1)?, &q2, ans(t2)?))
}

/// Which tables the three provers answer from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableChoice {
    /// All three share one table.
    #[default]
    Shared,
    /// `prover` (1-based) uses `b_node + 1` in place of `b_node`.
    Inconsistent { prover: u32, node: usize },
}

const B_POS: u64 = 1;

struct TableProver {
    graph: Graph,
    colorings: Arc<Vec<Coloring>>,
    tables: TableChoice,
    table: Option<WTable>,
}

impl Party for TableProver {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        let c = self.colorings[ctx.shared(COLORING_POS, self.colorings.len() as u64) as usize].clone();
        let mut b: Vec<u8> = (0..self.graph.n as u64).map(|n| ctx.shared(B_POS + n, 3) as u8).collect();
        if let TableChoice::Inconsistent { prover, node } = self.tables {
            if ctx.me() == PartyId::Prover(prover) {
                b[node] = (b[node] + 1) % 3;
            }
        }
        self.table = Some(WTable::new(b, &c).map_err(|e| protocol_error(ctx.me(), e.to_string()))?);
        Ok(())
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        let Some(q) = Query::from_words(&msg.words) else { return Ok(()) };
        // Non-edges and unknown nodes go unanswered.
        if q.nodes.0 >= self.graph.n || q.nodes.1 >= self.graph.n || !self.graph.has_edge(q.nodes.0, q.nodes.1) {
            return Ok(());
        }
        let t = self.table.as_ref().expect("built at start");
        let [(n0, r0), (n1, r1)] = q.cells();
        ctx.send(msg.from, "answer", vec![t.w(n0, r0) as u64, t.w(n1, r1) as u64])
    }
}

/// Three-prover protocol: two randomly chosen provers answer from the
/// shared blinded table.
pub fn triple_experiment(g: &Graph, colorings: Vec<Coloring>, mode: Mode, tables: TableChoice) -> Result<Experiment<Graph>> {
    check_colorings(g, &colorings)?;
    if let TableChoice::Inconsistent { prover, node } = &tables {
        if !(1..=3).contains(prover) || *node >= g.n {
            return Err(ThreeColError::Parameter("inconsistent table refers to a missing prover or node".into()));
        }
    }
    let colorings = Arc::new(colorings);
    let provers: Vec<PartyFactory<Graph>> = (0..3)
        .map(|_| {
            let colorings = colorings.clone();
            let tables = tables.clone();
            Arc::new(move |g: &Graph| {
                Box::new(TableProver {
                    graph: g.clone(),
                    colorings: colorings.clone(),
                    tables: tables.clone(),
                    table: None,
                }) as Box<dyn Party>
            }) as PartyFactory<Graph>
        })
        .collect();
    Ok(build_lemip(3, provers, triple_verifiers(mode), Arc::new(|_: &Graph, t: &[Tape]| triple_decide(t).unwrap_or(false)), None, None)?)
}

fn triple_verifiers(mode: Mode) -> Vec<PartyFactory<Graph>> {
    (0..3)
        .map(|_| {
            Arc::new(move |g: &Graph| {
                Box::new(TripleVerifier {
                    graph: g.clone(),
                    mode,
                    query: None,
                }) as Box<dyn Party>
            }) as PartyFactory<Graph>
        })
        .collect()
}

pub fn run_protocol9(g: &Graph, colorings: &[Coloring], mode: Mode, seed: u64) -> Result<Transcript> {
    let exp = triple_experiment(g, colorings.to_vec(), mode, TableChoice::Shared)?;
    Ok(run(&exp, g, seed)?)
}

/// The lazily filled table of the simulator. Knows no coloring: the second
/// entry of a node is fixed so that the node's two entries sum to minus the
/// next color of a random permutation.
#[derive(Debug, Clone)]
pub struct LazyTable {
    colour: [u8; 3],
    coco: usize,
    cells: BTreeMap<(usize, u8), u8>,
    count: BTreeMap<usize, u8>,
}

/// All permutations of {0, 1, 2}, in lexicographic order.
pub const PERMUTATIONS: [[u8; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

impl LazyTable {
    pub fn new(perm: [u8; 3]) -> Self {
        Self {
            colour: perm,
            coco: 0,
            cells: BTreeMap::new(),
            count: BTreeMap::new(),
        }
    }

    /// Value of cell `(n, r)`, sampling with `uniform3` on first touch.
    pub fn get(&mut self, n: usize, r: u8, uniform3: &mut dyn FnMut() -> u8) -> Result<u8> {
        if r != 1 && r != 2 {
            return Err(ThreeColError::SimulatorContract(format!("string {r} outside {{1, 2}}")));
        }
        if let Some(&w) = self.cells.get(&(n, r)) {
            return Ok(w);
        }
        let count = self.count.entry(n).or_insert(0);
        let w = match *count {
            0 => uniform3(),
            1 => {
                if self.coco >= 3 {
                    return Err(ThreeColError::SimulatorContract("more doubled nodes than colors".into()));
                }
                let other = self.cells[&(n, 3 - r)];
                let w = (6 - self.colour[self.coco] - other) % 3;
                self.coco += 1;
                w
            }
            _ => return Err(ThreeColError::SimulatorContract(format!("third distinct query to node {n}"))),
        };
        *count += 1;
        self.cells.insert((n, r), w);
        Ok(w)
    }
}

/// Forwards its verifier's query to the simulator and relays the answer.
struct RelayProver {
    graph: Graph,
    from: Option<PartyId>,
}

impl Party for RelayProver {
    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        match msg.from {
            PartyId::ProverHub => {
                let to = self.from.ok_or_else(|| protocol_error(ctx.me(), "answer before query"))?;
                ctx.send(to, "answer", msg.words.clone())
            }
            from => {
                let Some(q) = Query::from_words(&msg.words) else { return Ok(()) };
                if q.nodes.0 >= self.graph.n || q.nodes.1 >= self.graph.n || !self.graph.has_edge(q.nodes.0, q.nodes.1) {
                    return Ok(());
                }
                self.from = Some(from);
                ctx.send(PartyId::ProverHub, "query", msg.words.clone())
            }
        }
    }
}

/// The simulator proper, answering both relayed queries from one table.
struct SimulatorHub {
    table: Option<LazyTable>,
}

impl Party for SimulatorHub {
    fn start(&mut self, ctx: &mut Ctx) -> std::result::Result<(), RunError> {
        self.table = Some(LazyTable::new(PERMUTATIONS[ctx.coin(6) as usize]));
        Ok(())
    }

    fn on_message(&mut self, ctx: &mut Ctx, msg: &Message) -> std::result::Result<(), RunError> {
        let me = ctx.me();
        let q = Query::from_words(&msg.words).ok_or_else(|| protocol_error(me, "malformed query"))?;
        let table = self.table.as_mut().expect("drawn at start");
        let mut out = Vec::with_capacity(2);
        for (n, r) in q.cells() {
            let w = table
                .get(n, r, &mut || ctx.coin(3) as u8)
                .map_err(|e| protocol_error(me, e.to_string()))?;
            out.push(w as u64);
        }
        ctx.send(msg.from, "answer", out)
    }
}

/// The honest verifiers of the three-prover protocol run against the
/// simulator.
pub fn simulator_experiment(g: &Graph, mode: Mode) -> Result<Experiment<Graph>> {
    // Any coloring list satisfies the builder; the simulator never reads it.
    let real = triple_experiment(g, vec![Coloring { colors: vec![0; g.n] }], mode, TableChoice::Shared)?;
    let relays: Vec<PartyFactory<Graph>> = (0..3)
        .map(|_| {
            Arc::new(|g: &Graph| Box::new(RelayProver { graph: g.clone(), from: None }) as Box<dyn Party>) as PartyFactory<Graph>
        })
        .collect();
    Ok(real.with_prover_hub(relays, Arc::new(|_: &Graph| Box::new(SimulatorHub { table: None }) as Box<dyn Party>)))
}

pub fn run_simulator10(g: &Graph, mode: Mode, seed: u64) -> Result<Transcript> {
    Ok(run(&simulator_experiment(g, mode)?, g, seed)?)
}

/// Views of the three verifiers plus the decision.
pub type JointView = (Vec<View>, bool);

pub fn joint_view(t: &Transcript) -> JointView {
    let views = (1..=3)
        .map(|i| extract_view(t, PartyId::Verifier(i)).expect("verifier view"))
        .collect();
    (views, t.accept)
}

/// Exact joint-view laws of the real protocol (provers agreeing on a
/// uniformly random proper coloring and uniform blinding) and of the
/// simulation.
pub fn exact_view_laws(
    g: &Graph,
    mode: Mode,
) -> Result<(
    BTreeMap<JointView, num_rational::BigRational>,
    BTreeMap<JointView, num_rational::BigRational>,
)> {
    let colorings = g.proper_colorings()?;
    let real = triple_experiment(g, colorings, mode, TableChoice::Shared)?;
    let sim = simulator_experiment(g, mode)?;
    Ok((
        crate::runtime::enumerate_distribution(&real, g, false, joint_view)?,
        crate::runtime::enumerate_distribution(&sim, g, false, joint_view)?,
    ))
}

pub mod fixtures {
    use super::*;

    pub fn triangle() -> Graph {
        Graph::new(3, vec![(0, 1), (1, 2), (0, 2)]).expect("valid graph")
    }

    pub fn k4() -> Graph {
        Graph::new(4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).expect("valid graph")
    }

    pub fn square() -> Graph {
        Graph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).expect("valid graph")
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::runtime::enumerate_distribution;
    use num_rational::BigRational;
    use num_traits::{One, Zero};

    fn rat(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn accept_probability(exp: &Experiment<Graph>, g: &Graph) -> BigRational {
        let d = enumerate_distribution(exp, g, false, |t| t.accept).unwrap();
        d.get(&true).cloned().unwrap_or_else(BigRational::zero)
    }

    #[test]
    fn graph_parsing_and_validation() {
        let g = Graph::parse("# triangle\n0 1\n1 2\n\n0 2\n").unwrap();
        assert_eq!(g, triangle());
        assert!(Graph::parse("0 0\n").is_err());
        assert!(Graph::parse("0 1 2\n").is_err());
        assert!(Graph::parse("0 1\n1 0\n").is_err());
        assert!(Graph::parse("").is_err());
    }

    #[test]
    fn coloring_counts() {
        assert_eq!(triangle().proper_colorings().unwrap().len(), 6);
        assert_eq!(square().proper_colorings().unwrap().len(), 18);
        assert!(k4().proper_colorings().unwrap().is_empty());
    }

    #[test]
    fn edge_check_honest_and_constant() {
        let g = triangle();
        let proper = g.proper_colorings().unwrap();
        let exp = edge_check_experiment(&g, proper).unwrap();
        assert_eq!(accept_probability(&exp, &g), BigRational::one());
        let constant = edge_check_experiment(&g, vec![Coloring::new(vec![1, 1, 1]).unwrap()]).unwrap();
        assert_eq!(accept_probability(&constant, &g), BigRational::zero());
    }

    #[test]
    fn edge_check_on_k4_matches_violation_count() {
        let g = k4();
        // Best fixed coloring of K4 violates exactly one edge.
        let best = (0..81u32)
            .map(|code| Coloring::new((0..4).map(|j| (code / 3u32.pow(j) % 3) as u8).collect()).unwrap())
            .min_by_key(|c| c.violated_edges(&g))
            .unwrap();
        assert_eq!(best.violated_edges(&g), 1);
        // Oracle: enumerate every edge and node pick directly.
        let mut accepted = 0;
        for &(u, v) in &g.edges {
            for node in [u, v] {
                let (cu, cv) = (best.colors[u], best.colors[v]);
                let first = if node == u { cu } else { cv };
                accepted += (cu != cv && best.colors[node] == first) as i64;
            }
        }
        let exp = edge_check_experiment(&g, vec![best]).unwrap();
        let p = accept_probability(&exp, &g);
        assert_eq!(p, rat(accepted, 2 * g.edges.len() as i64));
        assert_eq!(p, rat(5, 6));
    }

    #[test]
    fn merged_and_split_verifier_agree_per_seed() {
        let g = square();
        let cols = vec![Coloring::new(vec![0, 1, 0, 0]).unwrap(), Coloring::new(vec![0, 1, 2, 1]).unwrap()];
        for seed in 0..300 {
            assert_eq!(run_protocol1(&g, &cols, seed).unwrap(), run_protocol2(&g, &cols, seed).unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn simple_commitment_opens_and_breaks() {
        for k in [1, 4, 16] {
            for seed in 0..50 {
                for b in [false, true] {
                    let (o, _) = run_protocol3_commitment(b, k, Unveiler::Honest, seed).unwrap();
                    assert!(o.accept);
                    assert_eq!(o.bit, Some(b));
                    assert_eq!(o.x + o.w, if b { o.r } else { Gf2k::zero(k) });
                    for target in [false, true] {
                        let (o, _) = run_protocol3_commitment(b, k, Unveiler::Informed { target }, seed).unwrap();
                        assert!(o.accept);
                        assert_eq!(o.bit, Some(target));
                    }
                }
            }
        }
    }

    #[test]
    fn committed_coloring_accepts_proper_and_rejects_improper() {
        let g = square();
        let proper = g.proper_colorings().unwrap();
        for seed in 0..100 {
            let t = run_protocol4(&g, &proper, 8, UnveilRequest::Edge, seed).unwrap();
            assert!(t.accept, "seed {seed}");
        }
        let bad = vec![Coloring::new(vec![2, 2, 2, 2]).unwrap()];
        for seed in 0..50 {
            assert!(!run_protocol4(&g, &bad, 8, UnveilRequest::Edge, seed).unwrap().accept);
        }
    }

    #[test]
    fn extra_node_leaks_a_uniform_color() {
        let g = square();
        let proper = g.proper_colorings().unwrap();
        let exp = committed_coloring_experiment(&g, proper, 8, UnveilRequest::ExtraNode(2)).unwrap();
        let runs = 10_000u64;
        let mut counts = [0u64; 3];
        for seed in 0..runs {
            let t = run(&exp, &g, seed).unwrap();
            let colors = unveiled_colors(8, &t.tapes).unwrap();
            counts[colors[&2].unwrap() as usize] += 1;
        }
        let e = runs as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 2 degrees of freedom, 0.999 quantile.
        assert!(chi2 < 13.82, "{counts:?} chi2={chi2}");
    }

    #[test]
    fn wtable_hiding_and_recovery() {
        for c in 0..3u8 {
            for r in 1..=2u8 {
                let mut hits = [0; 3];
                for b in 0..3u8 {
                    let t = WTable::new(vec![b], &Coloring::new(vec![c]).unwrap()).unwrap();
                    hits[t.w(0, r) as usize] += 1;
                }
                assert_eq!(hits, [1, 1, 1]);
            }
            for b in 0..3u8 {
                let t = WTable::new(vec![b], &Coloring::new(vec![c]).unwrap()).unwrap();
                assert_eq!(WTable::solve(t.w(0, 1), t.w(0, 2)), (b, c));
            }
        }
    }

    #[test]
    fn edge_test_identity_exhaustive() {
        // Over (b0, b1, c0, c1, r0, r1) ∈ GF(3)^6 with nonzero strings.
        for code in 0..729u32 {
            let d: Vec<u8> = (0..6).map(|j| (code / 3u32.pow(j) % 3) as u8).collect();
            let (b0, b1, c0, c1, r0, r1) = (d[0], d[1], d[2], d[3], d[4], d[5]);
            if r0 == 0 || r1 == 0 {
                continue;
            }
            let (r2, r3) = (3 - r0, 3 - r1);
            let w = |b: u8, c: u8, r: u8| (b * r + c) % 3;
            let left = (w(b0, c0, r0) + w(b0, c0, r2)) % 3;
            let right = (w(b1, c1, r1) + w(b1, c1, r3)) % 3;
            assert_eq!(left, (2 * c0) % 3);
            assert_eq!(left != right, c0 != c1);
        }
    }

    #[test]
    fn triple_protocol_honest_accepts_in_every_mode() {
        let g = triangle();
        let cols = g.proper_colorings().unwrap();
        for mode in [Mode::Consistency, Mode::Edge, Mode::WellDefinition] {
            for seed in 0..200 {
                assert!(run_protocol9(&g, &cols, mode, seed).unwrap().accept, "{mode:?} seed {seed}");
            }
        }
    }

    #[test]
    fn improper_coloring_fails_edge_mode() {
        let g = triangle();
        let exp = triple_experiment(&g, vec![Coloring::new(vec![0, 0, 1]).unwrap()], Mode::Edge, TableChoice::Shared).unwrap();
        // One of three edges is monochrome.
        assert_eq!(accept_probability(&exp, &g), rat(2, 3));
    }

    #[test]
    fn inconsistent_tables_rejected_at_counted_rate() {
        let g = triangle();
        let cols = vec![Coloring::new(vec![0, 1, 2]).unwrap()];
        let (bad_prover, bad_node) = (3u32, 1usize);
        let exp = triple_experiment(
            &g,
            cols,
            Mode::WellDefinition,
            TableChoice::Inconsistent {
                prover: bad_prover,
                node: bad_node,
            },
        )
        .unwrap();
        // Oracle: walk every verifier choice; a run rejects iff the faulty
        // prover is queried and some matched cell sits on the altered node.
        let oriented = g.oriented_edges();
        let mut total = BigRational::zero();
        let mut rejected = BigRational::zero();
        for &(a, b) in &ORDERED_PAIRS {
            for &e in &oriented {
                for r0 in 1..=2u8 {
                    for r1 in 1..=2u8 {
                        for i in 0..2 {
                            let node = [e.0, e.1][i];
                            let r = [r0, r1][i];
                            let touching: Vec<_> = oriented
                                .iter()
                                .filter_map(|&f| (f.0 == node).then_some((f, 0)).or((f.1 == node).then_some((f, 1))))
                                .collect();
                            for &(f, j) in &touching {
                                for other in 1..=2u8 {
                                    let w = rat(1, 6 * oriented.len() as i64 * 4 * 2 * touching.len() as i64 * 2);
                                    let rs = if j == 0 { (r, other) } else { (other, r) };
                                    let q1 = [(e.0, r0), (e.1, r1)];
                                    let q2 = [(f.0, rs.0), (f.1, rs.1)];
                                    let matched_bad = q1.iter().any(|c| q2.contains(c) && c.0 == bad_node);
                                    total += w.clone();
                                    if (a == bad_prover || b == bad_prover) && matched_bad {
                                        rejected += w;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(total, BigRational::one());
        assert_eq!(accept_probability(&exp, &g), BigRational::one() - rejected);
    }

    #[test]
    fn lazy_table_contract() {
        let mut t = LazyTable::new([2, 0, 1]);
        let mut next = || 1u8;
        let a = t.get(0, 1, &mut next).unwrap();
        let b = t.get(0, 2, &mut next).unwrap();
        assert_eq!((a + b + 2) % 3, 0);
        assert_eq!(t.get(0, 1, &mut next).unwrap(), a);
        assert!(matches!(t.get(0, 0, &mut next), Err(ThreeColError::SimulatorContract(_))));
    }

    #[test]
    fn simulation_matches_real_views_exactly() {
        for g in [triangle(), square()] {
            for mode in [Mode::Consistency, Mode::Edge, Mode::WellDefinition] {
                if g == square() && mode == Mode::WellDefinition {
                    continue;
                }
                let (real, sim) = exact_view_laws(&g, mode).unwrap();
                assert_eq!(real, sim, "{mode:?} on {} nodes", g.n);
                assert!(real.keys().all(|(_, accept)| *accept));
            }
        }
    }

    #[test]
    fn simulator_permutation_is_uniform() {
        let runs = 10_000u64;
        let mut counts = [0u64; 6];
        let exp = simulator_experiment(&triangle(), Mode::Edge).unwrap();
        for seed in 0..runs {
            let t = run(&exp, &triangle(), seed).unwrap();
            let first = t.coins.iter().find(|c| c.party == PartyId::ProverHub).unwrap();
            assert_eq!(first.range, 6);
            counts[first.value as usize] += 1;
        }
        let e = runs as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 5 degrees of freedom, 0.999 quantile.
        assert!(chi2 < 20.52, "{counts:?}");
    }
}
