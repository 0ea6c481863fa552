//! One function per subcommand. Each returns the resolved configuration and
//! the result, both as JSON.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use lemip::bfl::{
    bfl_experiment, default_modulus, exhaustive_acceptance, run_sumcheck, BflOptions, BflSetup, BflStrategy, Cnf,
    CnfFile, HonestSumcheck, OracleFormula, RootPlantingSumcheck, SumcheckParams, SumcheckProver,
};
use lemip::commit::{binding_z2_set, commit_experiment, equivocation_experiment, CommitInput, BINDING_SCAN_MAX_K};
use lemip::gf::{field_range, Gf2k};
use lemip::nonlocal::{
    chsh_local_max, chsh_value, deterministic_strategies, is_local, is_no_signalling, BoxKind, Strategy,
    DEFAULT_VERTEX_CAP,
};
use lemip::poly::FieldFn;
use lemip::runtime::{count_parallel, estimate_repeated, run, splitmix64, trial_seed, Estimate, Transcript};
use lemip::threecol::{
    exact_view_laws, run_protocol1, run_protocol2, run_protocol4, run_protocol9, run_simulator10, Coloring, Graph,
    Mode, UnveilRequest, MAX_BRUTE_FORCE_NODES,
};
use lemip::zkmip::{
    exact_view_distributions, zk_experiment, FirstDeviation, SecondDeviation, ZkOptions, ZkProvers, ZkSetup,
};

use crate::report::{json as to_json, parse_json, read_input, CliError};
use crate::Common;

type Output = Result<(Value, Value), CliError>;

fn rational(r: &num_rational::BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn ratio_f64(r: &num_rational::BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

fn estimate_json(e: &Estimate) -> Value {
    json!({ "accepted": e.accepted, "trials": e.trials, "accept_rate": e.rate, "ci": [e.ci.0, e.ci.1] })
}

fn transcript_json(t: &Transcript) -> Result<Value, CliError> {
    serde_json::to_value(t).map_err(|e| CliError::Internal(e.to_string()))
}

fn require_positive(name: &str, v: u64) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::Validation(format!("--{name} must be at least 1")));
    }
    Ok(())
}

// ---------------------------------------------------------------- nonlocal

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    /// Named box kind: ID, EMPTY, PR, FIELD_PR, R_SIG, L_SIG, SIG.
    #[serde(rename = "box")]
    #[arg(long = "box", conflicts_with = "strategy", required_unless_present = "strategy")]
    pub box_name: Option<String>,
    /// Field size for FIELD_PR (tabulated up to 3).
    #[arg(long)]
    pub k: Option<u32>,
    /// Strategy table as JSON.
    #[arg(long)]
    pub strategy: Option<PathBuf>,
    /// Largest number of deterministic vertices the locality check may enumerate.
    #[arg(long, default_value_t = DEFAULT_VERTEX_CAP)]
    pub vertex_cap: u64,
}

pub fn classify_strategy(a: &ClassifyArgs) -> Output {
    let u: Strategy = match (&a.box_name, &a.strategy) {
        (Some(name), _) => BoxKind::parse(name, a.k)?.strategy()?,
        (None, Some(path)) => parse_json(path)?,
        (None, None) => return Err(CliError::Validation("give --box or --strategy".into())),
    };
    let verdict = is_local(&u, a.vertex_cap)?;
    let chsh = chsh_value(&u).ok();
    Ok((
        to_json(a),
        json!({
            "alphabets": { "A": u.a, "B": u.b, "X": u.x, "Y": u.y },
            "local": verdict.local,
            "no_signalling": is_no_signalling(&u),
            "chsh_value": chsh.as_ref().map(ratio_f64),
            "chsh_value_exact": chsh.as_ref().map(rational),
        }),
    ))
}

#[derive(Debug, Args, Serialize)]
pub struct ChshArgs {
    /// Recompute the local maximum over all 16 deterministic strategies.
    #[arg(long)]
    pub exhaustive: bool,
}

pub fn chsh(a: &ChshArgs) -> Output {
    let local_max = if a.exhaustive {
        let mut best = None;
        for d in deterministic_strategies(2, 2, 2, 2, DEFAULT_VERTEX_CAP)? {
            let v = chsh_value(&d.to_strategy(2, 2)?)?;
            if best.as_ref().is_none_or(|b| v > *b) {
                best = Some(v);
            }
        }
        best.ok_or_else(|| CliError::Internal("no deterministic strategies".into()))?
    } else {
        chsh_local_max()
    };
    let pr = chsh_value(&BoxKind::Pr.strategy()?)?;
    Ok((
        to_json(a),
        json!({
            "local_max": ratio_f64(&local_max),
            "local_max_exact": rational(&local_max),
            "pr_value": ratio_f64(&pr),
            "pr_value_exact": rational(&pr),
        }),
    ))
}

// ------------------------------------------------------------------ commit

#[derive(Debug, Args, Serialize)]
pub struct CommitArgs {
    #[arg(long, default_value_t = 8)]
    pub k: u32,
    /// Bit to commit to (0 or 1).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub bit: u8,
    /// Executions used for the acceptance estimate.
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
}

pub fn commit_demo(a: &CommitArgs, c: &Common) -> Output {
    require_positive("trials", a.trials)?;
    let exp = commit_experiment(a.k)?;
    let x = CommitInput { k: a.k, b: a.bit == 1 };
    let t = run(&exp, &x, c.seed)?;
    let est = estimate_repeated(&exp, &x, a.trials, 1, c.seed)?;
    Ok((to_json(a), json!({ "accept": t.accept, "estimate": estimate_json(&est), "transcript": transcript_json(&t)? })))
}

#[derive(Debug, Args, Serialize)]
pub struct BindingArgs {
    #[arg(long, default_value_t = 8)]
    pub k: u32,
    /// Random double-unveiling tuples to scan.
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
}

/// Deterministic word stream for one scan tuple.
struct Stream(u64);

impl Stream {
    fn next(&mut self, k: u32) -> u64 {
        self.0 = splitmix64(self.0);
        self.0 & (field_range(k).wrapping_sub(1))
    }
}

pub fn binding_scan(a: &BindingArgs, c: &Common) -> Output {
    require_positive("trials", a.trials)?;
    if !(1..=BINDING_SCAN_MAX_K).contains(&a.k) {
        return Err(CliError::Validation(format!("--k must lie in 1..={BINDING_SCAN_MAX_K}")));
    }
    let k = a.k;
    let g = |v: u64| Gf2k::new(v, k).map_err(CliError::from);
    let mut histogram: BTreeMap<usize, u64> = BTreeMap::new();
    let mut crafted_max = 0usize;
    for i in 0..a.trials {
        let mut s = Stream(trial_seed(c.seed, i));
        let z1 = g(1 + s.next(k) % (field_range(k) - 1))?;
        let (cm, d) = (g(s.next(k))?, g(s.next(k))?);
        // Uniform unveilings.
        let u0 = (g(s.next(k))?, g(s.next(k))?);
        let u1 = (g(s.next(k))?, g(s.next(k))?);
        *histogram.entry(binding_z2_set(cm, d, z1, u0, u1)?.len()).or_insert(0) += 1;
        // Unveilings that open c correctly to both bits; only the check
        // strings are free.
        let c0 = (cm, g(s.next(k))?);
        let c1 = (cm + z1, g(s.next(k))?);
        crafted_max = crafted_max.max(binding_z2_set(cm, d, z1, c0, c1)?.len());
    }
    let uniform_max = histogram.keys().max().copied().unwrap_or(0);
    Ok((
        to_json(a),
        json!({
            "field_size": field_range(k),
            "uniform_max_set": uniform_max,
            "crafted_max_set": crafted_max,
            "set_size_histogram": histogram,
            "binding_bound": 1,
            "bound_holds": uniform_max <= 1 && crafted_max <= 1,
        }),
    ))
}

#[derive(Debug, Args, Serialize)]
pub struct AttackArgs {
    #[arg(long, default_value_t = 8)]
    pub k: u32,
    /// Independent executions.
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
}

pub fn attack_demo(a: &AttackArgs, c: &Common) -> Output {
    require_positive("trials", a.trials)?;
    let exp = equivocation_experiment(a.k)?;
    let mut per_target = serde_json::Map::new();
    for b in [false, true] {
        let x = CommitInput { k: a.k, b };
        let est = estimate_repeated(&exp, &x, a.trials, 1, c.seed)?;
        per_target.insert(format!("open_to_{}", u8::from(b)), estimate_json(&est));
    }
    let t = run(&exp, &CommitInput { k: a.k, b: true }, c.seed)?;
    Ok((to_json(a), json!({ "correlator": format!("FIELD_PR({})", a.k), "targets": per_target, "transcript": transcript_json(&t)? })))
}

// --------------------------------------------------------------------- bfl

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumcheckMode {
    Honest,
    /// Sends round polynomials vanishing at as many challenge points as possible.
    RootPlanting,
}

#[derive(Debug, Args, Serialize)]
pub struct SumcheckArgs {
    /// CNF instance ({"vars", "clauses"} with signed 1-based literals) or an
    /// oracle formula, whose expanded CNF is used.
    #[arg(long)]
    pub instance: PathBuf,
    /// Prime modulus; defaults to the smallest admissible prime.
    #[arg(long)]
    pub p: Option<u64>,
    /// Size of the sumcheck challenge set; defaults to 8dm.
    #[arg(long)]
    pub set_size: Option<usize>,
    /// Independent executions.
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = SumcheckMode::Honest)]
    pub mode: SumcheckMode,
}

/// Largest `|I|^m` for which the exact acceptance probability is computed.
const EXHAUSTIVE_LIMIT: u64 = 1 << 20;

fn load_cnf(path: &std::path::Path) -> Result<Cnf, CliError> {
    let text = read_input(path)?;
    if let Ok(f) = serde_json::from_str::<CnfFile>(&text) {
        return Ok(Cnf::from_file(&f)?);
    }
    let formula: OracleFormula = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("malformed {}: {e}", path.display())))?;
    Ok(formula.cnf()?)
}

/// Individual degree of the arithmetization: a variable's degree in a clause
/// product is its number of occurrences there, and summing clauses keeps the
/// maximum.
fn cnf_degree(cnf: &Cnf) -> usize {
    cnf.clauses
        .iter()
        .flat_map(|c| c.iter().map(move |&(v, _)| c.iter().filter(|&&(u, _)| u == v).count()))
        .max()
        .unwrap_or(1)
}

pub fn sumcheck_demo(a: &SumcheckArgs, c: &Common) -> Output {
    require_positive("trials", a.trials)?;
    let cnf = load_cnf(&a.instance)?;
    let m = cnf.nvars;
    let d = cnf_degree(&cnf);
    let set_size = a.set_size.unwrap_or(4 * 2 * d * m);
    let p = match a.p {
        Some(p) => p,
        None => default_modulus(cnf.clauses.len(), m, set_size, 2 * d)?,
    };
    let params = SumcheckParams::new(p, m, d, set_size)?;
    let g: Arc<dyn FieldFn> = Arc::new(cnf.arithmetize(p));
    let mode = a.mode;
    let make = {
        let g = g.clone();
        let params = params.clone();
        move || -> Box<dyn SumcheckProver> {
            match mode {
                SumcheckMode::Honest => Box::new(HonestSumcheck::new(g.clone(), params.round_degree())),
                SumcheckMode::RootPlanting => Box::new(RootPlantingSumcheck::new(g.clone(), &params)),
            }
        }
    };
    let accepted = count_parallel(a.trials, c.seed, |s| Ok(run_sumcheck(&mut *make(), &*g, &params, s).is_ok()))?;
    let est = Estimate::from_counts(accepted, a.trials);
    let space = (set_size as u64).checked_pow(m as u32).filter(|&n| n <= EXHAUSTIVE_LIMIT);
    let exact = space.map(|_| exhaustive_acceptance(&make, &*g, &params));
    let config = json!({
        "instance": a.instance, "mode": a.mode, "trials": a.trials,
        "p": p, "m": m, "d": d, "set_size": set_size,
    });
    Ok((
        config,
        json!({
            "claim_true": (m <= 20).then(|| cnf_all_satisfied(&cnf)),
            "estimate": estimate_json(&est),
            "exact_accept": exact.as_ref().map(rational),
            "soundness_bound": rational(&params.soundness_bound()),
        }),
    ))
}

/// Whether every Boolean point satisfies every clause, which is what
/// `Σ f² = 0` asserts.
fn cnf_all_satisfied(cnf: &Cnf) -> bool {
    (0..1u64 << cnf.nvars).all(|bits| {
        let assignment: Vec<bool> = (0..cnf.nvars).map(|i| bits >> i & 1 == 1).collect();
        cnf.violated(&assignment) == 0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProverMode {
    /// Answers from a satisfying oracle; fails if none exists.
    Honest,
    /// The strongest scripted local strategy for the instance.
    LocalCheat,
}

#[derive(Debug, Args, Serialize)]
pub struct BflArgs {
    /// Oracle formula JSON.
    #[arg(long)]
    pub instance: PathBuf,
    /// Prime modulus; defaults to the smallest admissible prime.
    #[arg(long)]
    pub p: Option<u64>,
    /// Size of the sumcheck challenge set; defaults to 8dm.
    #[arg(long)]
    pub set_size: Option<usize>,
    /// Multilinearity probes per run.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Independent executions.
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    /// Sequential repetitions; a trial accepts only if all accept.
    #[arg(long, default_value_t = 1)]
    pub reps: u64,
    #[arg(long, value_enum, default_value_t = ProverMode::LocalCheat)]
    pub mode: ProverMode,
}

fn strategy_for(formula: &OracleFormula, mode: ProverMode) -> Result<BflStrategy, CliError> {
    match mode {
        ProverMode::Honest => formula
            .find_oracle()?
            .map(BflStrategy::honest)
            .ok_or_else(|| CliError::Validation("no satisfying oracle, so no honest prover exists".into())),
        ProverMode::LocalCheat => Ok(BflStrategy::best_for(formula)?),
    }
}

fn bfl_params(setup: &BflSetup) -> Value {
    json!({
        "p": setup.p(), "m": setup.sumcheck.m, "d": setup.sumcheck.d,
        "set_size": setup.sumcheck.set.len(), "probes": setup.probes,
    })
}

pub fn bfl_run(a: &BflArgs, c: &Common) -> Output {
    require_positive("trials", a.trials)?;
    let formula: OracleFormula = parse_json(&a.instance)?;
    let opts = BflOptions { p: a.p, set_size: a.set_size, probes: a.probes, small_set: false };
    let setup = Arc::new(BflSetup::new(formula.clone(), opts)?);
    let strategy = strategy_for(&formula, a.mode)?;
    let exp = bfl_experiment(&setup, &strategy)?;
    let est = estimate_repeated(&exp, &formula, a.trials, a.reps, c.seed)?;
    let mut config = to_json(a);
    config["params"] = bfl_params(&setup);
    Ok((config, json!({ "strategy": strategy.name, "mode": a.mode, "params": bfl_params(&setup), "estimate": estimate_json(&est) })))
}

// ------------------------------------------------------------------- zkmip

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZkMode {
    Honest,
    LocalCheat,
    /// Box-assisted simulators acting as provers.
    NosigCheat,
    /// Simulators against the chosen verifier programs.
    Simulate,
}

#[derive(Debug, Args, Serialize)]
pub struct ZkCommon {
    /// Oracle formula JSON.
    #[arg(long)]
    pub instance: PathBuf,
    /// Commitment field size.
    #[arg(long, default_value_t = 8)]
    pub k: u32,
    /// Prime modulus; defaults to the smallest admissible prime.
    #[arg(long)]
    pub p: Option<u64>,
    /// Size of the sumcheck challenge set; defaults to 8dm.
    #[arg(long)]
    pub set_size: Option<usize>,
    /// Multilinearity probes per run.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Allow a challenge set below the soundness requirement.
    #[arg(long)]
    pub small_set: bool,
    /// Independent executions.
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    /// Sequential repetitions; a trial accepts only if all accept.
    #[arg(long, default_value_t = 1)]
    pub reps: u64,
}

struct ZkContext {
    formula: OracleFormula,
    setup: Arc<ZkSetup>,
}

fn zk_context(z: &ZkCommon) -> Result<ZkContext, CliError> {
    require_positive("trials", z.trials)?;
    require_positive("reps", z.reps)?;
    let formula: OracleFormula = parse_json(&z.instance)?;
    let opts = ZkOptions {
        k: z.k,
        bfl: BflOptions { p: z.p, set_size: z.set_size, probes: z.probes, small_set: z.small_set },
    };
    let setup = Arc::new(ZkSetup::new(formula.clone(), opts)?);
    Ok(ZkContext { formula, setup })
}

fn zk_params(setup: &ZkSetup) -> Value {
    let mut v = bfl_params(&setup.bfl);
    v["k"] = json!(setup.k);
    v["hash_bits"] = json!(setup.hash_bits);
    v["sessions"] = json!(setup.sessions());
    v
}

fn zk_estimate(
    ctx: &ZkContext,
    z: &ZkCommon,
    mode: ZkMode,
    first: FirstDeviation,
    second: SecondDeviation,
    seed: u64,
) -> Result<Value, CliError> {
    let provers = match mode {
        ZkMode::Honest => ZkProvers::Committed(strategy_for(&ctx.formula, ProverMode::Honest)?),
        ZkMode::LocalCheat => ZkProvers::Committed(strategy_for(&ctx.formula, ProverMode::LocalCheat)?),
        ZkMode::NosigCheat | ZkMode::Simulate => ZkProvers::Simulators,
    };
    let exp = zk_experiment(&ctx.setup, &provers, first, second)?;
    let est = estimate_repeated(&exp, &ctx.formula, z.trials, z.reps, seed)?;
    Ok(json!({
        "mode": mode,
        "accept_rate": est.rate,
        "ci": [est.ci.0, est.ci.1],
        "accepted": est.accepted,
        "trials": est.trials,
        "reps": z.reps,
        "params": zk_params(&ctx.setup),
    }))
}

fn zk_config(z: &ZkCommon, extra: Value, setup: &ZkSetup) -> Value {
    let mut v = to_json(z);
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, extra) {
        dst.extend(src);
    }
    v["params"] = zk_params(setup);
    v
}

#[derive(Debug, Args, Serialize)]
pub struct ZkRunArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub zk: ZkCommon,
    #[arg(long, value_enum, default_value_t = ZkMode::Honest)]
    pub mode: ZkMode,
}

pub fn zk_run(a: &ZkRunArgs, c: &Common) -> Output {
    let ctx = zk_context(&a.zk)?;
    let result = zk_estimate(&ctx, &a.zk, a.mode, FirstDeviation::Honest, SecondDeviation::Honest, c.seed)?;
    Ok((zk_config(&a.zk, json!({ "mode": a.mode }), &ctx.setup), result))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstProgram {
    Honest,
    StaleKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondProgram {
    Honest,
    OtherQuestion,
}

#[derive(Debug, Args, Serialize)]
pub struct ZkSimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub zk: ZkCommon,
    /// Program of the first verifier.
    #[arg(long, value_enum, default_value_t = FirstProgram::Honest)]
    pub first: FirstProgram,
    /// Program of the second verifier.
    #[arg(long, value_enum, default_value_t = SecondProgram::Honest)]
    pub second: SecondProgram,
    /// Also compare the exact view laws of the real and simulated runs. Only
    /// feasible for tiny parameters.
    #[arg(long)]
    pub exact: bool,
}

pub fn zk_simulate(a: &ZkSimulateArgs, c: &Common) -> Output {
    let ctx = zk_context(&a.zk)?;
    let first = match a.first {
        FirstProgram::Honest => FirstDeviation::Honest,
        FirstProgram::StaleKey => FirstDeviation::StaleKey,
    };
    let second = match a.second {
        SecondProgram::Honest => SecondDeviation::Honest,
        SecondProgram::OtherQuestion => SecondDeviation::OtherQuestion,
    };
    let mut result = zk_estimate(&ctx, &a.zk, ZkMode::Simulate, first, second, c.seed)?;
    if a.exact {
        let honest = strategy_for(&ctx.formula, ProverMode::Honest)?;
        let (real, sim) = exact_view_distributions(&ctx.setup, &honest, first, second)?;
        result["exact"] = json!({
            "equal": real == sim,
            "real_support": real.len(),
            "simulated_support": sim.len(),
            "real_probability_counts": probability_counts(real.values()),
            "simulated_probability_counts": probability_counts(sim.values()),
        });
    }
    let extra = json!({ "first": a.first, "second": a.second, "exact": a.exact });
    Ok((zk_config(&a.zk, extra, &ctx.setup), result))
}

/// How many outcomes carry each exact probability.
fn probability_counts<'a>(ps: impl Iterator<Item = &'a num_rational::BigRational>) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for p in ps {
        *out.entry(rational(p)).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Args, Serialize)]
pub struct ZkAttackArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub zk: ZkCommon,
    /// Skip the local-cheater baseline.
    #[arg(long)]
    pub no_baseline: bool,
}

pub fn zk_attack(a: &ZkAttackArgs, c: &Common) -> Output {
    let ctx = zk_context(&a.zk)?;
    let h = FirstDeviation::Honest;
    let s = SecondDeviation::Honest;
    let mut result = zk_estimate(&ctx, &a.zk, ZkMode::NosigCheat, h, s, c.seed)?;
    if !a.no_baseline {
        let local = zk_estimate(&ctx, &a.zk, ZkMode::LocalCheat, h, s, c.seed)?;
        result["local_cheat"] = json!({ "accept_rate": local["accept_rate"], "ci": local["ci"] });
    }
    let extra = json!({ "mode": ZkMode::NosigCheat, "no_baseline": a.no_baseline });
    Ok((zk_config(&a.zk, extra, &ctx.setup), result))
}

// ---------------------------------------------------------------- threecol

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripleMode {
    Consistency,
    Edge,
    WellDefinition,
}

impl From<TripleMode> for Mode {
    fn from(m: TripleMode) -> Self {
        match m {
            TripleMode::Consistency => Mode::Consistency,
            TripleMode::Edge => Mode::Edge,
            TripleMode::WellDefinition => Mode::WellDefinition,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ThreecolRunArgs {
    /// Edge list, one "u v" pair per line, 0-indexed.
    #[arg(long)]
    pub graph: PathBuf,
    /// 1: single-verifier edge check, 2: two-prover edge check, 4: committed
    /// coloring, 9: three-prover protocol.
    #[arg(long, value_parser = ["1", "2", "4", "9"])]
    pub protocol: String,
    /// Test of the three-prover protocol.
    #[arg(long, value_enum, default_value_t = TripleMode::Edge)]
    pub mode: TripleMode,
    /// Commitment field size for the committed coloring protocol.
    #[arg(long, default_value_t = 8)]
    pub k: u32,
    /// Comma-separated colors the provers use; defaults to a uniformly
    /// random proper coloring, or the least-violating ones if none exists.
    #[arg(long)]
    pub coloring: Option<String>,
    /// Independent executions.
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
}

fn load_graph(path: &std::path::Path) -> Result<Graph, CliError> {
    Ok(Graph::parse(&read_input(path)?)?)
}

fn prover_colorings(g: &Graph, given: Option<&str>) -> Result<Vec<Coloring>, CliError> {
    if let Some(text) = given {
        let colors = text
            .split(',')
            .map(|s| s.trim().parse::<u8>().map_err(|e| CliError::Validation(format!("bad color {s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if colors.len() != g.n {
            return Err(CliError::Validation(format!("coloring has {} entries for {} nodes", colors.len(), g.n)));
        }
        return Ok(vec![Coloring::new(colors)?]);
    }
    let proper = g.proper_colorings()?;
    if !proper.is_empty() {
        return Ok(proper);
    }
    // proper_colorings already bounded n, so 3^n is small.
    let all: Vec<Coloring> = (0..3usize.pow(g.n as u32))
        .map(|mut v| {
            let colors = (0..g.n)
                .map(|_| {
                    let c = (v % 3) as u8;
                    v /= 3;
                    c
                })
                .collect();
            Coloring::new(colors)
        })
        .collect::<Result<_, _>>()?;
    let best = all.iter().map(|c| c.violated_edges(g)).min().unwrap_or(0);
    Ok(all.into_iter().filter(|c| c.violated_edges(g) == best).collect())
}

pub fn threecol_run(a: &ThreecolRunArgs, c: &Common) -> Output {
    require_positive("trials", a.trials)?;
    let g = load_graph(&a.graph)?;
    if g.n > MAX_BRUTE_FORCE_NODES && a.coloring.is_none() {
        return Err(CliError::Validation(format!(
            "graphs above {MAX_BRUTE_FORCE_NODES} nodes need an explicit --coloring"
        )));
    }
    let colorings = prover_colorings(&g, a.coloring.as_deref())?;
    let proper = colorings.iter().all(|col| col.is_proper(&g));
    let mode = Mode::from(a.mode);
    let accepted = match a.protocol.as_str() {
        "1" => count_parallel(a.trials, c.seed, |s| run_protocol1(&g, &colorings, s).map_err(run_err))?,
        "2" => count_parallel(a.trials, c.seed, |s| run_protocol2(&g, &colorings, s).map_err(run_err))?,
        "4" => count_parallel(a.trials, c.seed, |s| {
            run_protocol4(&g, &colorings, a.k, UnveilRequest::Edge, s).map(|t| t.accept).map_err(run_err)
        })?,
        "9" => count_parallel(a.trials, c.seed, |s| run_protocol9(&g, &colorings, mode, s).map(|t| t.accept).map_err(run_err))?,
        other => return Err(CliError::Validation(format!("unknown protocol {other}"))),
    };
    let est = Estimate::from_counts(accepted, a.trials);
    Ok((
        to_json(a),
        json!({
            "nodes": g.n,
            "edges": g.edges.len(),
            "prover_colorings": colorings.len(),
            "colorings_proper": proper,
            "estimate": estimate_json(&est),
        }),
    ))
}

/// Carries a module error through the parallel counter, which speaks
/// `RunError`.
fn run_err(e: lemip::threecol::ThreeColError) -> lemip::runtime::RunError {
    match e {
        lemip::threecol::ThreeColError::Run(r) => r,
        other => lemip::runtime::RunError::Parameter(other.to_string()),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ThreecolSimulateArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value_t = TripleMode::Edge)]
    pub mode: TripleMode,
    /// Also include one simulated transcript.
    #[arg(long)]
    pub transcript: bool,
}

pub fn threecol_simulate(a: &ThreecolSimulateArgs, c: &Common) -> Output {
    let g = load_graph(&a.graph)?;
    if g.proper_colorings()?.is_empty() {
        return Err(CliError::Validation("the graph has no proper 3-coloring, so there is no real view to match".into()));
    }
    let mode = Mode::from(a.mode);
    let (real, sim) = exact_view_laws(&g, mode)?;
    let accept = |law: &BTreeMap<lemip::threecol::JointView, num_rational::BigRational>| {
        let total: num_rational::BigRational = law.iter().filter(|((_, acc), _)| *acc).map(|(_, p)| p.clone()).sum();
        rational(&total)
    };
    let mut result = json!({
        "equal": real == sim,
        "real_support": real.len(),
        "simulated_support": sim.len(),
        "real_accept": accept(&real),
        "simulated_accept": accept(&sim),
        "real_probability_counts": probability_counts(real.values()),
        "simulated_probability_counts": probability_counts(sim.values()),
    });
    if a.transcript {
        result["transcript"] = transcript_json(&run_simulator10(&g, mode, c.seed)?)?;
    }
    Ok((to_json(a), result))
}
