//! Command-line front end: `capacity`, `phase`, `simulate`, `bounds` and
//! `verify`. Settings resolve as flags over config file over defaults, and
//! the resolved settings are echoed as one JSON line on stderr before any
//! work starts.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::asymptotics::{
    capacity_with_grid, phase_transition_from, uniform_grid, verify_rate_identity, RemainderMode, DEFAULT_GRID,
    DEFAULT_TOL,
};
use crate::bounds::{
    achievability_excess_bound, achievability_resolution, converse_resolution_bound, AchievabilityParams,
    ConverseParams, Method, DEFAULT_SAMPLES,
};
use crate::channels::{ChannelSpec, FamilyName, NoiseMapSpec, NoiseModel};
use crate::error::{Error, Result};
use crate::experiments::{render, run_trials, write_output, Cell, ExperimentConfig, Format, Tabular};
use crate::ormac::OrMacModel;
use crate::procedure::DEFAULT_BUDGET;

#[derive(Parser, Debug)]
#[command(name = "tq", version, about = "Noisy non-adaptive search for multiple targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (random and echoed if absent)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true, env = "TQ_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Output file (default: stdout)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ChannelArgs {
    /// bsc, bec or custom
    #[arg(long)]
    pub family: Option<FamilyName>,
    /// Noise map: const:A, affine:A,B or table:Q1:F1,Q2:F2,...
    #[arg(long = "f")]
    pub f: Option<NoiseMapSpec>,
    /// Lipschitz constant of the noise map (computed if absent)
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Capacity and dispersion over a range of k
    Capacity(CapacityArgs),
    /// Normal-approximation phase transition in the rate
    Phase(PhaseArgs),
    /// Monte Carlo runs of the query procedure
    Simulate(SimulateArgs),
    /// Achievability and converse bounds
    Bounds(BoundsArgs),
    /// Channel assumption and rate identity checks
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// k, a list `1,3` or an inclusive range `1..4`
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Interior grid points of the initial scan
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PhaseArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Rates in nats per query; default is a sweep around the threshold
    #[arg(long, value_delimiter = ',')]
    pub rates: Vec<f64>,
    /// Sweep size over [0.5, 1.5] times the threshold
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Runs per batch
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Largest number of tuples the decoder may scan
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub fixed_codebook: bool,
    #[arg(long)]
    pub remainder: Option<RemainderMode>,
    #[arg(long)]
    pub record_runtime: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BoundSelection {
    Achievability,
    Converse,
    #[default]
    Both,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long, value_enum)]
    pub kind: Option<BoundSelection>,
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Evaluate the achievability bound at this M instead of solving for −log δ
    #[arg(long)]
    pub m: Option<usize>,
    /// Codebook and query parameter (default p*)
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// exact, monte-carlo or gaussian
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Largest number of users checked
    #[arg(long)]
    pub k: Option<usize>,
    /// Points in the p grid
    #[arg(long)]
    pub grid: Option<usize>,
}

/// `k` in a config file: a number or a list/range string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KField {
    One(usize),
    Text(String),
}

/// `n` in a config file: a number or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NField {
    One(usize),
    Many(Vec<usize>),
}

/// Config file schema. Every field is optional; each subcommand reads the
/// fields it uses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub channel: Option<ChannelSpec>,
    pub k: Option<KField>,
    pub d: Option<usize>,
    pub eps: Option<f64>,
    pub n: Option<NField>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub runs: Option<usize>,
    pub batches: Option<usize>,
    pub m: Option<usize>,
    pub gamma: Option<f64>,
    pub p: Option<f64>,
    pub budget: Option<f64>,
    pub fixed_codebook: Option<bool>,
    pub remainder: Option<RemainderMode>,
    pub record_runtime: Option<bool>,
    pub tol: Option<f64>,
    pub grid: Option<usize>,
    pub rates: Option<Vec<f64>>,
    pub points: Option<usize>,
    pub kind: Option<BoundSelection>,
    pub method: Option<Method>,
    pub samples: Option<usize>,
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn k_single(&self) -> Result<Option<usize>> {
        match &self.k {
            None => Ok(None),
            Some(KField::One(k)) => Ok(Some(*k)),
            Some(KField::Text(s)) => match parse_k_list(s)?.as_slice() {
                [k] => Ok(Some(*k)),
                _ => Err(Error::Config(format!("expected a single k, found {s:?}"))),
            },
        }
    }

    fn n_list(&self) -> Vec<usize> {
        match &self.n {
            None => Vec::new(),
            Some(NField::One(n)) => vec![*n],
            Some(NField::Many(v)) => v.clone(),
        }
    }
}

/// `3`, `1,3,4`, `1..4` or `1..=4` (ranges inclusive).
pub fn parse_k_list(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot read k from {s:?}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.trim_start_matches('='))?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(num).collect::<Result<_>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

fn resolve_channel(flags: &ChannelArgs, file: &FileConfig) -> Result<ChannelSpec> {
    let base = file.channel.clone();
    let family = flags
        .family
        .or(base.as_ref().map(|c| c.family))
        .ok_or_else(|| Error::Config("channel family is required (--family or \"channel.family\")".into()))?;
    let f = flags
        .f
        .clone()
        .or(base.as_ref().map(|c| c.f.clone()))
        .ok_or_else(|| Error::Config("noise map is required (--f or \"channel.f\")".into()))?;
    Ok(ChannelSpec {
        family,
        f,
        mu: flags.mu.or(base.as_ref().and_then(|c| c.mu)),
        table: base.and_then(|c| c.table),
    })
}

fn require<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required setting {name:?}")))
}

fn pick_list<T: Clone>(flag: &[T], file: Vec<T>) -> Vec<T> {
    if flag.is_empty() {
        file
    } else {
        flag.to_vec()
    }
}

/// Settings shared by every subcommand after resolution.
#[derive(Clone, Debug, Serialize)]
struct Common {
    seed: u64,
    threads: usize,
    format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

fn resolve_common(global: &GlobalArgs, file: &FileConfig) -> Result<Common> {
    let threads = global
        .threads
        .or(file.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if threads == 0 {
        return Err(Error::Config("threads must be positive".into()));
    }
    Ok(Common {
        seed: global.seed.or(file.seed).unwrap_or_else(rand::random),
        threads,
        format: global.format.or(file.format).unwrap_or_default(),
        out: global.out.clone().or(file.out.clone()),
    })
}

/// A resolved subcommand ready to run.
enum Plan {
    Capacity { channel: ChannelSpec, ks: Vec<usize>, tol: f64, grid: usize },
    Phase { channel: ChannelSpec, ns: Vec<usize>, k: usize, d: usize, rates: Vec<f64>, points: usize },
    Simulate(ExperimentConfig),
    Bounds(BoundsPlan),
    Verify { channel: ChannelSpec, k: usize, grid: usize },
}

#[derive(Clone, Debug, Serialize)]
struct BoundsPlan {
    channel: ChannelSpec,
    kind: BoundSelection,
    n: Vec<usize>,
    k: usize,
    d: usize,
    eps: Option<f64>,
    m: Option<usize>,
    p: Option<f64>,
    gamma: Option<f64>,
    eta: Option<f64>,
    beta: Option<f64>,
    kappa: Option<f64>,
    method: Method,
    samples: usize,
    seed: u64,
}

fn resolve(command: &Command, file: &FileConfig, common: &Common) -> Result<(Plan, Value)> {
    Ok(match command {
        Command::Capacity(a) => {
            let channel = resolve_channel(&a.channel, file)?;
            let ks = match (&a.k, &file.k) {
                (Some(s), _) => parse_k_list(s)?,
                (None, Some(KField::One(k))) => vec![*k],
                (None, Some(KField::Text(s))) => parse_k_list(s)?,
                (None, None) => (1..=4).collect(),
            };
            let tol = a.tol.or(file.tol).unwrap_or(DEFAULT_TOL);
            let grid = a.grid.or(file.grid).unwrap_or(DEFAULT_GRID);
            let echo = json!({"command": "capacity", "channel": channel, "k": ks, "tol": tol, "grid": grid});
            (Plan::Capacity { channel, ks, tol, grid }, echo)
        }
        Command::Phase(a) => {
            let channel = resolve_channel(&a.channel, file)?;
            let ns = pick_list(&a.n, file.n_list());
            if ns.is_empty() {
                return Err(Error::Config("missing required setting \"n\"".into()));
            }
            let k = require(a.k.or(file.k_single()?), "k")?;
            let d = a.d.or(file.d).unwrap_or(1);
            let rates = pick_list(&a.rates, file.rates.clone().unwrap_or_default());
            let points = a.points.or(file.points).unwrap_or(101);
            let echo = json!({"command": "phase", "channel": channel, "n": ns, "k": k, "d": d, "rates": rates, "points": points});
            (Plan::Phase { channel, ns, k, d, rates, points }, echo)
        }
        Command::Simulate(a) => {
            let cfg = ExperimentConfig {
                channel: resolve_channel(&a.channel, file)?,
                k: require(a.k.or(file.k_single()?), "k")?,
                d: a.d.or(file.d).unwrap_or(1),
                eps: require(a.eps.or(file.eps), "eps")?,
                n: pick_list(&a.n, file.n_list()),
                runs: a.runs.or(file.runs).unwrap_or(1000),
                batches: a.batches.or(file.batches).unwrap_or(10),
                seed: common.seed,
                m: a.m.or(file.m),
                gamma: a.gamma.or(file.gamma),
                p: a.p.or(file.p),
                budget: a.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET),
                fixed_codebook: a.fixed_codebook || file.fixed_codebook.unwrap_or(false),
                remainder: a.remainder.or(file.remainder).unwrap_or_default(),
                record_runtime: a.record_runtime || file.record_runtime.unwrap_or(false),
            };
            cfg.validate()?;
            let mut echo = serde_json::to_value(&cfg).expect("serializable");
            echo.as_object_mut().expect("object").insert("command".into(), "simulate".into());
            (Plan::Simulate(cfg), echo)
        }
        Command::Bounds(a) => {
            let plan = BoundsPlan {
                channel: resolve_channel(&a.channel, file)?,
                kind: a.kind.or(file.kind).unwrap_or_default(),
                n: pick_list(&a.n, file.n_list()),
                k: require(a.k.or(file.k_single()?), "k")?,
                d: a.d.or(file.d).unwrap_or(1),
                eps: a.eps.or(file.eps),
                m: a.m.or(file.m),
                p: a.p.or(file.p),
                gamma: a.gamma.or(file.gamma),
                eta: a.eta.or(file.eta),
                beta: a.beta.or(file.beta),
                kappa: a.kappa.or(file.kappa),
                method: a.method.or(file.method).unwrap_or_default(),
                samples: a.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES),
                seed: common.seed,
            };
            if plan.n.is_empty() {
                return Err(Error::Config("missing required setting \"n\"".into()));
            }
            let needs_eps = plan.kind != BoundSelection::Achievability || plan.m.is_none();
            if needs_eps && plan.eps.is_none() {
                return Err(Error::Config("missing required setting \"eps\"".into()));
            }
            if plan.samples == 0 {
                return Err(Error::Config("samples must be positive".into()));
            }
            let mut echo = serde_json::to_value(&plan).expect("serializable");
            echo.as_object_mut().expect("object").insert("command".into(), "bounds".into());
            (Plan::Bounds(plan), echo)
        }
        Command::Verify(a) => {
            let channel = resolve_channel(&a.channel, file)?;
            let k = a.k.or(file.k_single()?).unwrap_or(3);
            let grid = a.grid.or(file.grid).unwrap_or(19);
            let echo = json!({"command": "verify", "channel": channel, "k": k, "grid": grid});
            (Plan::Verify { channel, k, grid }, echo)
        }
    })
}

// ---------------------------------------------------------------------------
// Output rows

struct CapacityRow {
    k: usize,
    capacity: f64,
    p_star: f64,
    maximizers: usize,
    v_low: f64,
    v_high: f64,
    achieved_tolerance: f64,
}

impl Tabular for CapacityRow {
    const COLUMNS: &'static [&'static str] =
        &["k", "capacity", "p_star", "maximizers", "v_low", "v_high", "achieved_tolerance"];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.k as u64),
            Cell::Float(self.capacity),
            Cell::Float(self.p_star),
            Cell::Int(self.maximizers as u64),
            Cell::Float(self.v_low),
            Cell::Float(self.v_high),
            Cell::Float(self.achieved_tolerance),
        ]
    }
}

struct PhaseRow {
    n: usize,
    k: usize,
    d: usize,
    rate: f64,
    threshold: f64,
    prob: f64,
}

impl Tabular for PhaseRow {
    const COLUMNS: &'static [&'static str] = &["n", "k", "d", "rate", "threshold", "prob"];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.n as u64),
            Cell::Int(self.k as u64),
            Cell::Int(self.d as u64),
            Cell::Float(self.rate),
            Cell::Float(self.threshold),
            Cell::Float(self.prob),
        ]
    }
}

pub struct BoundRow {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub eps: f64,
    pub kind: &'static str,
    pub value: f64,
    pub method: Method,
    pub sigma: f64,
}

impl Tabular for BoundRow {
    const COLUMNS: &'static [&'static str] = &["n", "k", "d", "eps", "kind", "value", "method", "sigma"];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.n as u64),
            Cell::Int(self.k as u64),
            Cell::Int(self.d as u64),
            Cell::Float(self.eps),
            Cell::Text(self.kind.into()),
            Cell::Float(self.value),
            Cell::Text(self.method.to_string()),
            Cell::Float(self.sigma),
        ]
    }
}

struct CheckRow {
    check: &'static str,
    t: usize,
    points: usize,
    failures: usize,
    witness: String,
}

impl Tabular for CheckRow {
    const COLUMNS: &'static [&'static str] = &["check", "t", "points", "failures", "result", "witness"];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Text(self.check.into()),
            Cell::Int(self.t as u64),
            Cell::Int(self.points as u64),
            Cell::Int(self.failures as u64),
            Cell::Text(if self.failures == 0 { "pass" } else { "fail" }.into()),
            Cell::Text(self.witness.clone()),
        ]
    }
}

// ---------------------------------------------------------------------------
// Execution

/// Rendered output and whether every check passed.
struct Outcome {
    text: String,
    ok: bool,
}

fn run_plan(plan: &Plan, format: Format) -> Result<Outcome> {
    let ok = |text| Ok(Outcome { text, ok: true });
    match plan {
        Plan::Capacity { channel, ks, tol, grid } => {
            let noise: NoiseModel<f64> = channel.build()?;
            let rows = ks
                .iter()
                .map(|&k| {
                    let cap = capacity_with_grid(&noise, k, *tol, *grid)?;
                    Ok(CapacityRow {
                        k,
                        capacity: cap.capacity,
                        p_star: cap.p_star(),
                        maximizers: cap.maximizers.len(),
                        v_low: cap.v_low(),
                        v_high: cap.v_high(),
                        achieved_tolerance: cap.trace.achieved_tolerance,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ok(render(&rows, format, Map::new())?)
        }
        Plan::Phase { channel, ns, k, d, rates, points } => {
            let noise: NoiseModel<f64> = channel.build()?;
            let cap = capacity_with_grid(&noise, *k, DEFAULT_TOL, DEFAULT_GRID)?;
            let threshold = cap.capacity / (d * k) as f64;
            let sweep: Vec<f64> = if rates.is_empty() {
                let steps = (*points).max(2) - 1;
                (0..=steps).map(|i| threshold * (0.5 + i as f64 / steps as f64)).collect()
            } else {
                rates.clone()
            };
            let rows: Vec<PhaseRow> = ns
                .iter()
                .flat_map(|&n| {
                    let cap = &cap;
                    sweep.iter().map(move |&rate| PhaseRow {
                        n,
                        k: *k,
                        d: *d,
                        rate,
                        threshold,
                        prob: phase_transition_from(cap, n, *d, rate),
                    })
                })
                .collect();
            ok(render(&rows, format, Map::new())?)
        }
        Plan::Simulate(cfg) => {
            let summary = run_trials(cfg)?;
            let mut extra = Map::new();
            extra.insert("monotone_in_n".into(), Value::Bool(summary.monotone_in_n()));
            ok(render(&summary.points, format, extra)?)
        }
        Plan::Bounds(b) => ok(render(&bound_rows(b)?, format, Map::new())?),
        Plan::Verify { channel, k, grid } => {
            let rows = verify_rows(channel, *k, *grid)?;
            let all = rows.iter().all(|r| r.failures == 0);
            Ok(Outcome { text: render(&rows, format, Map::new())?, ok: all })
        }
    }
}

fn bound_rows(b: &BoundsPlan) -> Result<Vec<BoundRow>> {
    let noise: NoiseModel<f64> = b.channel.build()?;
    let p = match b.p {
        Some(p) => p,
        None => capacity_with_grid(&noise, b.k, DEFAULT_TOL, DEFAULT_GRID)?.p_star(),
    };
    let mut rows = Vec::new();
    for &n in &b.n {
        if b.kind != BoundSelection::Converse {
            let params = AchievabilityParams {
                n,
                k: b.k,
                d: b.d,
                p,
                gamma: b.gamma,
                eta: b.eta,
                method: b.method,
                samples: b.samples,
                seed: b.seed,
            };
            let row = match b.m {
                Some(m) => {
                    let r = achievability_excess_bound(&noise, m, &params)?;
                    BoundRow { n, k: b.k, d: b.d, eps: b.eps.unwrap_or(f64::NAN), kind: "achievability", value: r.value, method: b.method, sigma: r.sigma }
                }
                None => {
                    let eps = b.eps.expect("checked at resolution");
                    let r = achievability_resolution(&noise, eps, &params)?;
                    BoundRow { n, k: b.k, d: b.d, eps, kind: "achievability_resolution", value: r.neg_log_delta, method: b.method, sigma: f64::NAN }
                }
            };
            rows.push(row);
        }
        if b.kind != BoundSelection::Achievability {
            let eps = b.eps.expect("checked at resolution");
            let params = ConverseParams {
                n,
                k: b.k,
                d: b.d,
                eps,
                p_query: p,
                beta: b.beta,
                kappa: b.kappa,
                method: b.method,
                samples: b.samples,
                seed: b.seed,
            };
            let r = converse_resolution_bound(&noise, &params)?;
            rows.push(BoundRow { n, k: b.k, d: b.d, eps, kind: "converse", value: r.value, method: b.method, sigma: r.sigma });
        }
    }
    Ok(rows)
}

fn verify_rows(channel: &ChannelSpec, k: usize, grid: usize) -> Result<Vec<CheckRow>> {
    let noise: NoiseModel<f64> = channel.build()?;
    let ps: Vec<f64> = uniform_grid(grid);
    let mut rows = Vec::new();
    for t in 1..=k {
        let mut rac = CheckRow { check: "rac_assumptions", t, points: ps.len(), failures: 0, witness: String::new() };
        let mut chain = CheckRow { check: "subset_rate_margin", t, points: ps.len(), failures: 0, witness: String::new() };
        for &p in &ps {
            let model = OrMacModel::new(&noise, p, t)?;
            let report = model.verify_rac_assumptions()?;
            if !report.all_hold() {
                rac.failures += 1;
                if rac.witness.is_empty() {
                    let w = [&report.permutation_invariance, &report.reducibility, &report.friendliness, &report.interference]
                        .iter()
                        .find_map(|c| c.witness.clone())
                        .unwrap_or_default();
                    rac.witness = format!("p={p}: {w}");
                }
            }
            if let Some((margin, j)) = model.kappa()? {
                if !(margin > 1e-9) {
                    chain.failures += 1;
                    if chain.witness.is_empty() {
                        chain.witness = format!("p={p}, J={j:#b}: margin {margin:.3e}");
                    }
                }
            }
        }
        rows.push(rac);
        if t >= 2 {
            rows.push(chain);
        }
    }
    let report = verify_rate_identity(&noise, k, 1, &ps)?;
    rows.push(CheckRow {
        check: "rate_identity",
        t: k,
        points: ps.len(),
        failures: report.violations.len() + usize::from(!report.agree),
        witness: match report.violations.first() {
            Some((p, t)) => format!("p={p}: minimum at t={t}"),
            None if !report.agree => format!("max-min {} vs C/(dk) {}", report.max_min, report.capacity_rate),
            None => String::new(),
        },
    });
    Ok(rows)
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    let file = match &cli.global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let common = resolve_common(&cli.global, &file)?;
    let (plan, mut echo) = resolve(&cli.command, &file, &common)?;
    let obj = echo.as_object_mut().expect("object");
    for (key, value) in serde_json::to_value(&common).expect("serializable").as_object().expect("object") {
        obj.entry(key.clone()).or_insert(value.clone());
    }
    writeln!(err, "{echo}").map_err(|e| Error::io(Path::new("<stderr>"), e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| run_plan(&plan, common.format))?;
    match &common.out {
        Some(path) => write_output(path, &outcome.text)?,
        None => out.write_all(outcome.text.as_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e))?,
    }
    Ok(outcome.ok)
}

/// Runs one command with explicit output streams and returns the exit code:
/// 0 on success, 1 on usage, config or contract errors and failed checks,
/// 2 on budget or resource errors.
pub fn run_command_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(true) => 0,
        Ok(false) => {
            let _ = writeln!(err, "error: some checks failed");
            1
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    run_command_with(argv, &mut io::stdout().lock(), &mut io::stderr().lock())
}
