//! Monte Carlo protocol: parameter selection, batched trials of the query
//! procedure, quantile resolution statistics and result files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::asymptotics::{capacity, second_order_from, CapacityResult, RemainderMode, DEFAULT_TOL};
use crate::channels::{ChannelSpec, NoiseModel, Symbol};
use crate::error::{Error, Result};
use crate::procedure::{
    achieved_resolution, apply_noise_with, oracle_noiseless, words_for, Codebook, CubePartition, Decoder,
    DEFAULT_BUDGET, DEFAULT_MEMORY_CAP,
};
use crate::rng::{stream, stream_rng};

fn default_d() -> usize {
    1
}

fn default_runs() -> usize {
    1000
}

fn default_batches() -> usize {
    10
}

fn default_budget() -> f64 {
    DEFAULT_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSpec,
    pub k: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    pub eps: f64,
    pub n: Vec<usize>,
    /// Runs per batch `R`.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Batches `B`.
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the automatic `M`.
    #[serde(default)]
    pub m: Option<usize>,
    /// Overrides `γ = ½ log n`.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Overrides `p = p*`.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    /// Draw one codebook per `n` instead of one per trial.
    #[serde(default)]
    pub fixed_codebook: bool,
    #[serde(default)]
    pub remainder: RemainderMode,
    /// Fill `runtime_s`; otherwise it is 0 so output is reproducible.
    #[serde(default)]
    pub record_runtime: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!("eps = {} must lie in (0, 1)", self.eps)));
        }
        if self.k == 0 || self.d == 0 {
            return Err(Error::Config("k and d must be positive".into()));
        }
        if self.runs == 0 || self.batches == 0 || self.runs * self.batches < 100 {
            return Err(Error::Config(format!(
                "runs x batches = {} x {} must be at least 100",
                self.runs, self.batches
            )));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::Config("n must be a nonempty list of positive lengths".into()));
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("p = {p} must lie in (0, 1)")));
            }
        }
        if self.m == Some(0) {
            return Err(Error::Config("M must be positive".into()));
        }
        if self.gamma.is_some_and(|g| g.is_nan() || g < 0.0) {
            return Err(Error::Config("gamma must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AutoParameters {
    pub m: usize,
    pub gamma: f64,
    pub p: f64,
    /// Unfloored `log M`.
    pub log_m: f64,
}

/// `M = ⌊exp((nC + √(nV) Φ^{-1}(ε) − ½ log n) / (dk))⌋ ∨ 1`, `γ = ½ log n`,
/// `p = p*`.
pub fn auto_parameters(noise: &NoiseModel<f64>, n: usize, k: usize, d: usize, eps: f64) -> Result<AutoParameters> {
    let cap = capacity(noise, k, DEFAULT_TOL)?;
    auto_parameters_from(&cap, n, d, eps)
}

pub fn auto_parameters_from(cap: &CapacityResult<f64>, n: usize, d: usize, eps: f64) -> Result<AutoParameters> {
    if !(cap.capacity > 0.0) {
        return Err(Error::contract(format!("capacity {} is not positive", cap.capacity)));
    }
    let est = second_order_from(cap.capacity, cap.dispersion(eps), n, cap.k, d, eps, RemainderMode::MinusHalfLogN)?;
    let log_m = est.neg_log_delta;
    let m = if log_m <= 0.0 {
        log::warn!("log M = {log_m:.4} at n = {n}; using M = 1");
        1
    } else {
        log_m.exp().floor().clamp(1.0, u32::MAX as f64) as usize
    };
    Ok(AutoParameters { m, gamma: 0.5 * (n as f64).ln(), p: cap.p_star(), log_m })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub targets: Vec<Vec<f64>>,
    pub k_p: usize,
    /// Number of estimates returned.
    pub m: usize,
    pub rho: f64,
    /// `rho > 1/M`.
    pub excess: bool,
    /// 0 unless runtimes are recorded.
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolutionPoint {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub p: f64,
    pub eps: f64,
    pub excess_prob: f64,
    pub delta_hat_mean: f64,
    pub delta_hat_se: f64,
    pub neg_log_delta_hat: f64,
    pub prediction_neg_log_delta: f64,
    pub runtime_s: f64,
    /// `δ̂(ε)` of each batch.
    #[serde(skip)]
    pub delta_hats: Vec<f64>,
    #[serde(skip)]
    pub trials: Vec<TrialRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResolutionSummary {
    pub points: Vec<ResolutionPoint>,
}

impl ResolutionSummary {
    /// Whether the mean `δ̂` is nonincreasing along increasing `n`.
    pub fn monotone_in_n(&self) -> bool {
        let mut pts: Vec<&ResolutionPoint> = self.points.iter().collect();
        pts.sort_by_key(|p| p.n);
        pts.windows(2).all(|w| !(w[1].delta_hat_mean > w[0].delta_hat_mean))
    }
}

/// 1-based rank of `δ̂(ε)` within a batch of `runs`: `⌈(1 − ε) R⌉`.
pub fn quantile_rank(eps: f64, runs: usize) -> usize {
    (((1.0 - eps) * runs as f64 - 1e-9).ceil() as usize).clamp(1, runs)
}

/// The `⌈(1 − ε) R⌉`-th smallest value, `+∞` sorting last.
pub fn quantile_resolution(rhos: &[f64], eps: f64) -> f64 {
    let mut sorted = rhos.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[quantile_rank(eps, rhos.len()) - 1]
}

/// Parameters used at one `n` after applying overrides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointParameters {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub p: f64,
    pub prediction: f64,
}

pub fn point_parameters(cfg: &ExperimentConfig, cap: Option<&CapacityResult<f64>>, n: usize) -> Result<PointParameters> {
    let auto = match (cfg.m, cfg.p, cap) {
        (Some(_), Some(_), _) => None,
        (_, _, Some(cap)) => Some(auto_parameters_from(cap, n, cfg.d, cfg.eps)?),
        _ => return Err(Error::contract("automatic parameters need the capacity")),
    };
    let prediction = match cap {
        Some(cap) => {
            second_order_from(cap.capacity, cap.dispersion(cfg.eps), n, cfg.k, cfg.d, cfg.eps, cfg.remainder)?.neg_log_delta
        }
        None => f64::NAN,
    };
    Ok(PointParameters {
        n,
        m: cfg.m.or(auto.map(|a| a.m)).unwrap_or(1),
        gamma: cfg.gamma.unwrap_or(0.5 * (n as f64).ln()),
        p: cfg.p.or(auto.map(|a| a.p)).unwrap_or(0.5),
        prediction,
    })
}

/// Capacity for the configured `k`, or `None` if no automatic parameter or
/// prediction can be formed.
fn config_capacity(cfg: &ExperimentConfig, noise: &NoiseModel<f64>) -> Result<Option<CapacityResult<f64>>> {
    match capacity(noise, cfg.k, DEFAULT_TOL) {
        Ok(cap) if cap.capacity > 0.0 => Ok(Some(cap)),
        Ok(_) | Err(_) if cfg.m.is_some() && cfg.p.is_some() => Ok(None),
        Ok(cap) => Err(Error::contract(format!("capacity {} is not positive", cap.capacity))),
        Err(e) => Err(e),
    }
}

/// The codebook shared by all trials at length `n` when `fixed_codebook`
/// is set.
pub fn fixed_codebook(cfg: &ExperimentConfig, pp: &PointParameters) -> Result<Codebook> {
    let mut rng = stream_rng(cfg.seed, &[stream::CODEBOOK, pp.n as u64]);
    Codebook::generate_from_rng(pp.m, cfg.d, pp.n, pp.p, cfg.seed, DEFAULT_MEMORY_CAP, &mut rng)
}

fn check_resources(cfg: &ExperimentConfig, pp: &PointParameters, decoder: &Decoder) -> Result<()> {
    decoder.check_budget()?;
    let rows = CubePartition::new(pp.m, cfg.d)?.cells() as u64;
    let required = rows.saturating_mul(words_for(pp.n) as u64).saturating_mul(8);
    if required > DEFAULT_MEMORY_CAP {
        return Err(Error::Resource { required, cap: DEFAULT_MEMORY_CAP });
    }
    Ok(())
}

fn run_trial(
    cfg: &ExperimentConfig,
    noise: &NoiseModel<f64>,
    decoder: &Decoder,
    pp: &PointParameters,
    shared: Option<&Codebook>,
    trial: usize,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let ids = |s: u64| [s, pp.n as u64, trial as u64];
    let owned;
    let cb = match shared {
        Some(cb) => cb,
        None => {
            let mut rng = stream_rng(cfg.seed, &ids(stream::CODEBOOK));
            owned = Codebook::generate_from_rng(pp.m, cfg.d, pp.n, pp.p, cfg.seed, DEFAULT_MEMORY_CAP, &mut rng)?;
            &owned
        }
    };
    let mut rng = stream_rng(cfg.seed, &ids(stream::TARGETS));
    let targets: Vec<Vec<f64>> = (0..cfg.k).map(|_| (0..cfg.d).map(|_| rng.random::<f64>()).collect()).collect();
    let answers = oracle_noiseless(&targets, cb)?;
    let mut rng = stream_rng(cfg.seed, &ids(stream::NOISE));
    let y = apply_noise_with(&answers.z, &cb.column_densities(), noise, &mut rng)?;
    let out = decoder.decode(&y, cb)?;
    let rho = achieved_resolution(&targets, &out.centers);
    Ok(TrialRecord {
        trial,
        targets,
        k_p: answers.k_p,
        m: out.m,
        rho,
        excess: rho > 1.0 / pp.m as f64,
        wall_time_s: if cfg.record_runtime { start.elapsed().as_secs_f64() } else { 0.0 },
    })
}

/// Runs `R × B` trials at every `n`. Records are in trial order whatever
/// the worker count.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<ResolutionSummary> {
    cfg.validate()?;
    let noise: NoiseModel<f64> = cfg.channel.build()?;
    let cap = config_capacity(cfg, &noise)?;
    let params = cfg
        .n
        .iter()
        .map(|&n| point_parameters(cfg, cap.as_ref(), n))
        .collect::<Result<Vec<_>>>()?;
    let decoders = params
        .iter()
        .map(|pp| {
            let part = CubePartition::new(pp.m, cfg.d)?;
            let dec = Decoder::new(&noise, pp.p, part, cfg.k, pp.gamma)?.with_budget(cfg.budget);
            check_resources(cfg, pp, &dec)?;
            Ok(dec)
        })
        .collect::<Result<Vec<_>>>()?;

    let total = cfg.runs * cfg.batches;
    let mut points = Vec::with_capacity(params.len());
    for (pp, decoder) in params.iter().zip(&decoders) {
        let start = Instant::now();
        let shared = if cfg.fixed_codebook { Some(fixed_codebook(cfg, pp)?) } else { None };
        let trials = (0..total)
            .into_par_iter()
            .map(|i| run_trial(cfg, &noise, decoder, pp, shared.as_ref(), i))
            .collect::<Result<Vec<_>>>()?;
        let excess_prob = trials.iter().filter(|t| t.excess).count() as f64 / total as f64;
        let rhos: Vec<f64> = trials.iter().map(|t| t.rho).collect();
        let delta_hats: Vec<f64> = rhos.chunks(cfg.runs).map(|b| quantile_resolution(b, cfg.eps)).collect();
        let (mean, se) = mean_and_se(&delta_hats);
        points.push(ResolutionPoint {
            n: pp.n,
            m: pp.m,
            gamma: pp.gamma,
            p: pp.p,
            eps: cfg.eps,
            excess_prob,
            delta_hat_mean: mean,
            delta_hat_se: se,
            neg_log_delta_hat: -mean.ln(),
            prediction_neg_log_delta: pp.prediction,
            runtime_s: if cfg.record_runtime { start.elapsed().as_secs_f64() } else { 0.0 },
            delta_hats,
            trials,
        });
    }
    Ok(ResolutionSummary { points })
}

/// Mean and standard error across batches; the error is NaN for one batch.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

// ---------------------------------------------------------------------------
// Exact excess probability for a fixed codebook

/// Largest `|Y|^n` enumerated by [`exact_excess_probability`].
pub const MAX_OUTPUTS: f64 = (1u64 << 22) as f64;

/// Exact probability that the procedure misses resolution `1/M` with a
/// fixed codebook: targets uniform over `[0,1]^d`, every output sequence
/// enumerated.
pub fn exact_excess_probability(
    noise: &NoiseModel<f64>,
    decoder: &Decoder,
    cb: &Codebook,
    k: usize,
) -> Result<f64> {
    let (n, d) = (cb.n(), cb.d());
    let part = CubePartition::new(cb.m(), d)?;
    let ny = noise.alphabet_len();
    let outputs = (ny as f64).powi(n as i32);
    if outputs > MAX_OUTPUTS || (part.cells() as f64).powi(k as i32) > MAX_OUTPUTS {
        return Err(Error::MethodUnavailable(format!("exact enumeration of {outputs:.3e} output sequences")));
    }
    let outputs = outputs as usize;
    let sizes = cb.column_densities();
    let delta = 1.0 / cb.m() as f64;
    let cell_weight = (part.cells() as f64).powi(k as i32).recip();
    let mut total = 0.0;
    let mut cells = vec![1usize; k];
    loop {
        // OR of the occupied rows, then every output sequence.
        let z: Vec<bool> = (0..n).map(|l| cells.iter().any(|&c| cb.bit(c - 1, l))).collect();
        let mut y: Vec<Symbol> = vec![0; n];
        for code in 0..outputs {
            let mut rest = code;
            let mut prob = 1.0;
            for l in 0..n {
                y[l] = rest % ny;
                rest /= ny;
                prob *= noise.transition_prob(sizes[l], z[l], y[l])?;
            }
            if prob == 0.0 {
                continue;
            }
            let out = decoder.decode(&y, cb)?;
            let miss = miss_probability(&part, &cells, &out.centers, delta);
            total += cell_weight * prob * miss;
        }
        if !advance(&mut cells, part.cells()) {
            break;
        }
    }
    Ok(total)
}

/// Steps through all tuples in `[1, max]^k`.
fn advance(cells: &mut [usize], max: usize) -> bool {
    for c in cells.iter_mut() {
        if *c < max {
            *c += 1;
            return true;
        }
        *c = 1;
    }
    false
}

/// Probability, with target `i` uniform in cell `cells[i]`, that the
/// Hausdorff distance to `estimates` exceeds `delta`. The indicator is
/// constant between interval breakpoints, so it is integrated exactly on
/// the product of per-coordinate breakpoint grids.
pub fn miss_probability(part: &CubePartition, cells: &[usize], estimates: &[Vec<f64>], delta: f64) -> f64 {
    if estimates.is_empty() {
        return 1.0;
    }
    let m = part.m() as f64;
    let d = part.d();
    // Per target and coordinate: sorted breakpoints inside its cell.
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for &c in cells {
        let coords = part.gamma_inverse(c).expect("valid cell");
        for (j, &w) in coords.iter().enumerate() {
            let (lo, hi) = ((w - 1) as f64 / m, w as f64 / m);
            let mut pts = vec![lo, hi];
            for e in estimates {
                for b in [e[j] - delta, e[j] + delta] {
                    if b > lo && b < hi {
                        pts.push(b);
                    }
                }
            }
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            axes.push(pts);
        }
    }
    let dims = axes.len();
    let mut idx = vec![0usize; dims];
    let mut point = vec![0.0; dims];
    let mut miss = 0.0;
    loop {
        let mut vol = 1.0;
        for (a, &i) in idx.iter().enumerate() {
            let (lo, hi) = (axes[a][i], axes[a][i + 1]);
            point[a] = 0.5 * (lo + hi);
            vol *= (hi - lo) * m;
        }
        let targets: Vec<Vec<f64>> = point.chunks(d).map(|c| c.to_vec()).collect();
        if achieved_resolution(&targets, estimates) > delta {
            miss += vol;
        }
        let mut a = 0;
        loop {
            if a == dims {
                return miss;
            }
            idx[a] += 1;
            if idx[a] + 1 < axes[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Output

/// One value in a result row.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn into_text(self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(v),
            Cell::Text(s) => s,
        }
    }

    fn into_json(self) -> Value {
        match self {
            Cell::Int(v) => Value::from(v),
            Cell::Float(v) if v.is_finite() => Value::from(v),
            Cell::Float(v) => Value::from(format_float(v)),
            Cell::Text(s) => Value::from(s),
        }
    }
}

/// Shortest round-trip form; non-finite values as `inf`, `-inf`, `nan`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        v.to_string()
    }
}

pub fn parse_float(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "nan" => Ok(f64::NAN),
        other => other.parse().map_err(|_| Error::Config(format!("not a number: {other:?}"))),
    }
}

fn json_float(v: &Value) -> Result<f64> {
    match v {
        Value::Number(x) => x.as_f64().ok_or_else(|| Error::Config(format!("not a float: {x}"))),
        Value::String(s) => parse_float(s),
        other => Err(Error::Config(format!("expected a number, found {other}"))),
    }
}

/// Rows as named cells in a fixed column order.
pub trait Tabular {
    const COLUMNS: &'static [&'static str];
    fn cells(&self) -> Vec<Cell>;
}

pub const SUMMARY_COLUMNS: &[&str] = &[
    "n",
    "M",
    "gamma",
    "p",
    "eps",
    "excess_prob",
    "delta_hat_mean",
    "delta_hat_se",
    "neg_log_delta_hat",
    "prediction_neg_log_delta",
    "runtime_s",
];

impl Tabular for ResolutionPoint {
    const COLUMNS: &'static [&'static str] = SUMMARY_COLUMNS;

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.n as u64),
            Cell::Int(self.m as u64),
            Cell::Float(self.gamma),
            Cell::Float(self.p),
            Cell::Float(self.eps),
            Cell::Float(self.excess_prob),
            Cell::Float(self.delta_hat_mean),
            Cell::Float(self.delta_hat_se),
            Cell::Float(self.neg_log_delta_hat),
            Cell::Float(self.prediction_neg_log_delta),
            Cell::Float(self.runtime_s),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

pub fn to_csv<T: Tabular>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::contract(format!("csv: {e}"));
    w.write_record(T::COLUMNS).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.cells().into_iter().map(Cell::into_text)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::contract(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// `{"rows": [{column: value, …}, …]}` plus any `extra` top-level fields.
pub fn to_json<T: Tabular>(rows: &[T], extra: Map<String, Value>) -> String {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            let obj: Map<String, Value> =
                T::COLUMNS.iter().zip(r.cells()).map(|(c, v)| (c.to_string(), v.into_json())).collect();
            Value::Object(obj)
        })
        .collect();
    let mut top = extra;
    top.insert("rows".into(), Value::Array(rows));
    let mut s = serde_json::to_string_pretty(&Value::Object(top)).expect("serializable");
    s.push('\n');
    s
}

pub fn render<T: Tabular>(rows: &[T], format: Format, extra: Map<String, Value>) -> Result<String> {
    match format {
        Format::Csv => to_csv(rows),
        Format::Json => Ok(to_json(rows, extra)),
    }
}

pub fn write_output(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the summary to `path` in `format`.
pub fn emit_results(summary: &ResolutionSummary, format: Format, path: &Path) -> Result<()> {
    let mut extra = Map::new();
    extra.insert("monotone_in_n".into(), Value::Bool(summary.monotone_in_n()));
    write_output(path, &render(&summary.points, format, extra)?)
}

/// Reads the rows of a summary written as JSON.
pub fn summary_from_json(text: &str) -> Result<ResolutionSummary> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("summary JSON: {e}")))?;
    let rows = v
        .get("rows")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Config("summary JSON has no \"rows\" array".into()))?;
    let points = rows
        .iter()
        .map(|r| {
            let f = |name: &str| -> Result<f64> {
                json_float(r.get(name).ok_or_else(|| Error::Config(format!("row lacks {name:?}")))?)
            };
            let u = |name: &str| -> Result<usize> {
                r.get(name)
                    .and_then(Value::as_u64)
                    .map(|x| x as usize)
                    .ok_or_else(|| Error::Config(format!("row lacks integer {name:?}")))
            };
            Ok(ResolutionPoint {
                n: u("n")?,
                m: u("M")?,
                gamma: f("gamma")?,
                p: f("p")?,
                eps: f("eps")?,
                excess_prob: f("excess_prob")?,
                delta_hat_mean: f("delta_hat_mean")?,
                delta_hat_se: f("delta_hat_se")?,
                neg_log_delta_hat: f("neg_log_delta_hat")?,
                prediction_neg_log_delta: f("prediction_neg_log_delta")?,
                runtime_s: f("runtime_s")?,
                delta_hats: Vec::new(),
                trials: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResolutionSummary { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::gaussian_quantile;
    use crate::channels::{FamilyName, NoiseMapSpec};

    fn bsc_spec(f: NoiseMapSpec) -> ChannelSpec {
        ChannelSpec { family: FamilyName::Bsc, f, mu: None, table: None }
    }

    fn config(f: NoiseMapSpec, k: usize, n: Vec<usize>) -> ExperimentConfig {
        ExperimentConfig {
            channel: bsc_spec(f),
            k,
            d: 1,
            eps: 0.3,
            n,
            runs: 100,
            batches: 1,
            seed: 7,
            m: None,
            gamma: None,
            p: None,
            budget: DEFAULT_BUDGET,
            fixed_codebook: false,
            remainder: RemainderMode::MinusHalfLogN,
            record_runtime: false,
        }
    }

    #[test]
    fn quantile_rank_arithmetic() {
        assert_eq!(quantile_rank(0.3, 1000), 700);
        assert_eq!(quantile_rank(0.25, 100), 75);
        assert_eq!(quantile_rank(0.001, 10), 10);
        let rhos: Vec<f64> = (1..=1000).rev().map(|i| i as f64).collect();
        assert_eq!(quantile_resolution(&rhos, 0.3), 700.0);
        let mut with_inf = vec![f64::INFINITY; 400];
        with_inf.extend((1..=600).map(|i| i as f64));
        assert_eq!(quantile_resolution(&with_inf, 0.3), f64::INFINITY);
        assert_eq!(quantile_resolution(&with_inf, 0.5), 500.0);
    }

    #[test]
    fn auto_parameter_examples() {
        let noise: NoiseModel<f64> = bsc_spec(NoiseMapSpec::Affine { a: 0.3, b: 0.1 }).build().unwrap();
        let cap = capacity(&noise, 2, DEFAULT_TOL).unwrap();
        let a = auto_parameters_from(&cap, 100, 1, 0.3).unwrap();
        assert!((1..10).contains(&a.m), "M = {}", a.m);
        assert!((a.gamma - 0.5 * 100f64.ln()).abs() < 1e-15);
        assert_eq!(a.p, cap.p_star());

        let half = auto_parameters_from(&cap, 300, 1, 0.5).unwrap();
        let expect = (300.0 * cap.capacity - 0.5 * 300f64.ln()) / 2.0;
        assert!((half.log_m - expect).abs() < 1e-12);

        // Independent check of the closed form.
        let n = 200.0;
        let lm = (n * cap.capacity + (n * cap.dispersion(0.3)).sqrt() * gaussian_quantile(0.3).unwrap() - 0.5 * n.ln()) / 2.0;
        assert_eq!(auto_parameters_from(&cap, 200, 1, 0.3).unwrap().m, lm.exp().floor() as usize);

        // Below the root of nC = ½ log n.
        let tiny = auto_parameters_from(&cap, 5, 1, 0.3).unwrap();
        assert!(tiny.log_m <= 0.0);
        assert_eq!(tiny.m, 1);
    }

    #[test]
    fn noiseless_recovery_has_no_excess() {
        let mut cfg = config(NoiseMapSpec::Constant { a: 0.0 }, 2, vec![64]);
        for m in [2, 5, 8] {
            cfg.m = Some(m);
            cfg.p = Some(0.3);
            cfg.gamma = Some(1.0);
            let s = run_trials(&cfg).unwrap();
            assert_eq!(s.points[0].excess_prob, 0.0, "M = {m}");
            assert!(s.points[0].trials.iter().all(|t| t.rho <= 0.5 / m as f64 + 1e-12));
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = config(NoiseMapSpec::Affine { a: 0.3, b: 0.1 }, 2, vec![100, 200]);
        cfg.runs = 50;
        cfg.batches = 2;
        let a = run_trials(&cfg).unwrap();
        let b = run_trials(&cfg).unwrap();
        assert_eq!(to_csv(&a.points).unwrap(), to_csv(&b.points).unwrap());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| run_trials(&cfg)).unwrap();
        assert_eq!(to_csv(&a.points).unwrap(), to_csv(&c.points).unwrap());
        assert_eq!(a.points[1].trials, c.points[1].trials);
        cfg.seed += 1;
        let d = run_trials(&cfg).unwrap();
        assert_ne!(a.points[1].trials, d.points[1].trials);
    }

    #[test]
    fn invariants_of_records() {
        let mut cfg = config(NoiseMapSpec::Constant { a: 0.1 }, 2, vec![60]);
        cfg.m = Some(4);
        cfg.p = Some(0.3);
        let s = run_trials(&cfg).unwrap();
        for t in &s.points[0].trials {
            assert!(t.rho >= 0.0);
            assert_eq!(t.excess, t.rho > 0.25);
            assert_eq!(t.targets.len(), 2);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(NoiseMapSpec::Constant { a: 0.1 }, 1, vec![50]);
        cfg.eps = 1.0;
        assert!(matches!(run_trials(&cfg), Err(Error::Config(_))));
        cfg.eps = 0.3;
        cfg.runs = 10;
        cfg.batches = 5;
        assert!(matches!(run_trials(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn budget_is_checked_before_running() {
        let mut cfg = config(NoiseMapSpec::Constant { a: 0.1 }, 2, vec![50]);
        cfg.m = Some(5000);
        cfg.p = Some(0.3);
        cfg.budget = 1e6;
        match run_trials(&cfg) {
            Err(Error::Budget { t, tuples, .. }) => {
                assert_eq!(t, 2);
                assert_eq!(tuples, 5000.0 * 4999.0 / 2.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn useless_channel_is_rejected_for_auto_parameters() {
        let cfg = config(NoiseMapSpec::Constant { a: 0.5 }, 1, vec![50]);
        assert!(matches!(run_trials(&cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn miss_probability_one_dimension() {
        let part = CubePartition::new(4, 1).unwrap();
        // Exact center of the right cell never misses.
        assert_eq!(miss_probability(&part, &[2], &[vec![0.375]], 0.25), 0.0);
        // Neighbor center: miss iff the target lies below 0.375.
        let p = miss_probability(&part, &[2], &[vec![0.625]], 0.25);
        assert!((p - 0.5).abs() < 1e-12);
        let p = miss_probability(&part, &[2], &[vec![0.875]], 0.25);
        assert!((p - 1.0).abs() < 1e-12);
        let p = miss_probability(&part, &[1], &[vec![0.375]], 0.25);
        assert!((p - 0.5).abs() < 1e-12);
        assert_eq!(miss_probability(&part, &[1, 3], &[], 0.25), 1.0);
    }

    #[test]
    fn miss_probability_matches_sampling() {
        let part = CubePartition::new(3, 2).unwrap();
        let est = vec![vec![0.2, 0.5], vec![0.9, 0.1]];
        let cells = [2, 7];
        let exact = miss_probability(&part, &cells, &est, 0.3);
        let mut rng = stream_rng(1, &[]);
        let trials = 200_000;
        let mut miss = 0;
        for _ in 0..trials {
            let targets: Vec<Vec<f64>> = cells
                .iter()
                .map(|&c| {
                    let w = part.gamma_inverse(c).unwrap();
                    w.iter().map(|&w| ((w - 1) as f64 + rng.random::<f64>()) / 3.0).collect()
                })
                .collect();
            if achieved_resolution(&targets, &est) > 0.3 {
                miss += 1;
            }
        }
        let freq = miss as f64 / trials as f64;
        assert!((freq - exact).abs() < 4.0 * (exact * (1.0 - exact) / trials as f64).sqrt() + 1e-9);
    }

    #[test]
    fn csv_shapes_and_json_round_trip() {
        let empty = ResolutionSummary::default();
        let csv = to_csv(&empty.points).unwrap();
        assert_eq!(csv, SUMMARY_COLUMNS.join(",") + "\n");

        let mut cfg = config(NoiseMapSpec::Constant { a: 0.1 }, 1, vec![40]);
        cfg.m = Some(3);
        cfg.p = Some(0.5);
        let mut s = run_trials(&cfg).unwrap();
        s.points[0].delta_hat_se = f64::NAN;
        s.points[0].neg_log_delta_hat = f64::NEG_INFINITY;
        let csv = to_csv(&s.points).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(!csv.contains('\r'));

        let json = to_json(&s.points, Map::new());
        let back = summary_from_json(&json).unwrap();
        assert_eq!(to_csv(&back.points).unwrap(), csv);
        for (a, b) in back.points[0].cells().into_iter().zip(s.points[0].cells()) {
            match (a, b) {
                (Cell::Float(x), Cell::Float(y)) => {
                    assert!(x.is_nan() && y.is_nan() || x == y || ((x - y) / y).abs() < 1e-12)
                }
                (x, y) => assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn exact_excess_matches_fixed_codebook_runs() {
        let mut cfg = config(NoiseMapSpec::Constant { a: 0.1 }, 1, vec![6]);
        cfg.m = Some(2);
        cfg.p = Some(0.5);
        cfg.gamma = Some(0.2);
        cfg.fixed_codebook = true;
        cfg.runs = 4000;
        let s = run_trials(&cfg).unwrap();
        let pp = point_parameters(&cfg, None, 6).unwrap();
        let cb = fixed_codebook(&cfg, &pp).unwrap();
        let noise: NoiseModel<f64> = cfg.channel.build().unwrap();
        let dec = Decoder::new(&noise, 0.5, CubePartition::new(2, 1).unwrap(), 1, 0.2).unwrap();
        let exact = exact_excess_probability(&noise, &dec, &cb, 1).unwrap();
        let sigma = (exact * (1.0 - exact) / 4000.0).sqrt();
        let mc = s.points[0].excess_prob;
        assert!((mc - exact).abs() <= 3.0 * sigma, "{mc} vs {exact}");
    }
}
