//! Finite-length bounds: the random-coding achievability bound on the
//! excess-resolution probability and the converse bound on `−log δ*`
//! evaluated at constant query size.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::gaussian_cdf;
use crate::asymptotics::gaussian_quantile;
use crate::channels::NoiseModel;
use crate::error::{Error, Result};
use crate::ormac::{bits_to_vec, central_moments, OrMacModel};
use crate::rng::{stream, stream_rng};

pub const DEFAULT_SAMPLES: usize = 100_000;
/// Largest number of type classes enumerated by the exact method.
pub const MAX_TYPES: f64 = 2e7;
const SHARD: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    #[default]
    MonteCarlo,
    Gaussian,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "monte-carlo",
            Method::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact-enumeration" => Ok(Method::Exact),
            "mc" | "monte-carlo" => Ok(Method::MonteCarlo),
            "gaussian" | "gaussian-approx" => Ok(Method::Gaussian),
            other => Err(Error::Config(format!("unknown bound method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Achievability,
    Converse,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::Achievability => "achievability",
            BoundKind::Converse => "converse",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Term {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub method: Method,
    /// Monte Carlo sample count, 0 when none were drawn.
    pub samples: usize,
    /// Standard error of the Monte Carlo part.
    pub sigma: f64,
    /// Achievability: probability bound clipped to `[0,1]`. Converse: upper
    /// bound on `−log δ*` in nats.
    pub value: f64,
    pub unclipped: f64,
    pub terms: Vec<Term>,
}

// ---------------------------------------------------------------------------
// Shared sampling machinery

/// Draws multinomial cell counts for `n` trials by sequential binomials.
fn sample_counts<R: Rng + ?Sized>(probs: &[f64], n: usize, rng: &mut R, counts: &mut [u64]) {
    let mut left = n as u64;
    let mut mass = 1.0;
    let last = probs.len() - 1;
    for (c, &p) in probs.iter().enumerate() {
        if c == last || left == 0 {
            counts[c] = if c == last { left } else { 0 };
            left -= counts[c];
            continue;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        counts[c] = draw;
        left -= draw;
        mass -= p;
    }
}

/// Runs `per_sample` over `samples` multinomial draws in fixed-size shards,
/// each with its own seeded stream, and concatenates the outputs in order.
fn sharded_samples<T: Send>(
    probs: &[f64],
    n: usize,
    samples: usize,
    seed: u64,
    ids: &[u64],
    per_sample: impl Fn(&[u64]) -> T + Sync,
) -> Vec<T> {
    let shards = samples.div_ceil(SHARD);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut streams = ids.to_vec();
            streams.push(s as u64);
            let mut rng = stream_rng(seed, &streams);
            let mut counts = vec![0u64; probs.len()];
            let len = SHARD.min(samples - s * SHARD);
            (0..len)
                .map(|_| {
                    sample_counts(probs, n, &mut rng, &mut counts);
                    per_sample(&counts)
                })
                .collect::<Vec<T>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Calls `visit(counts, weight)` for every type class of `n` draws over
/// `probs`, with `weight` its multinomial probability.
fn enumerate_types(probs: &[f64], n: usize, visit: &mut impl FnMut(&[u64], f64)) -> Result<()> {
    let cells = probs.len();
    let types = crate::procedure::binomial(n + cells - 1, cells - 1);
    if types > MAX_TYPES {
        return Err(Error::MethodUnavailable(format!(
            "exact enumeration needs {types:.3e} type classes, cap is {MAX_TYPES:.0e}"
        )));
    }
    let log_fact: Vec<f64> = (0..=n).scan(0.0, |acc, i| {
        if i > 0 {
            *acc += (i as f64).ln();
        }
        Some(*acc)
    }).collect();
    let log_p: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let mut counts = vec![0u64; cells];
    fn rec(
        c: usize,
        left: usize,
        acc: f64,
        probs: &[f64],
        log_p: &[f64],
        log_fact: &[f64],
        counts: &mut [u64],
        visit: &mut impl FnMut(&[u64], f64),
    ) {
        let last = probs.len() - 1;
        if c == last {
            counts[c] = left as u64;
            if left > 0 && probs[c] == 0.0 {
                return;
            }
            let term = if left > 0 { left as f64 * log_p[c] } else { 0.0 };
            visit(counts, (acc + term - log_fact[left]).exp());
            return;
        }
        let max = if probs[c] == 0.0 { 0 } else { left };
        for x in 0..=max {
            counts[c] = x as u64;
            let term = if x > 0 { x as f64 * log_p[c] } else { 0.0 };
            rec(c + 1, left - x, acc + term - log_fact[x], probs, log_p, log_fact, counts, visit);
        }
    }
    rec(0, n, log_fact[n], probs, &log_p, &log_fact, &mut counts, visit);
    Ok(())
}

/// Weighted sample sorted by value, with a right-continuous CDF.
#[derive(Clone, Debug, Default)]
struct WeightedCdf {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WeightedCdf {
    fn new(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let (values, cumulative) = points
            .into_iter()
            .map(|(v, w)| {
                acc += w;
                (v, acc)
            })
            .unzip();
        WeightedCdf { values, cumulative }
    }

    fn uniform(values: Vec<f64>) -> Self {
        let w = 1.0 / values.len() as f64;
        Self::new(values.into_iter().map(|v| (v, w)).collect())
    }

    /// `P(V ≤ x)`.
    fn cdf(&self, x: f64) -> f64 {
        let idx = self.values.partition_point(|v| *v <= x);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1].min(1.0)
        }
    }

    /// `inf{v : P(V ≤ v) > α}`.
    fn quantile_above(&self, alpha: f64) -> f64 {
        let idx = self.cumulative.partition_point(|c| *c <= alpha);
        self.values.get(idx).copied().unwrap_or(f64::INFINITY)
    }

    fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

// ---------------------------------------------------------------------------
// Achievability

#[derive(Clone, Debug, PartialEq)]
pub struct AchievabilityParams {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    /// Nominal Bernoulli parameter of the codebook.
    pub p: f64,
    /// Defaults to `½ log n`.
    pub gamma: Option<f64>,
    /// Defaults to `√(d log M / (2 M^d))`.
    pub eta: Option<f64>,
    pub method: Method,
    pub samples: usize,
    pub seed: u64,
}

impl AchievabilityParams {
    pub fn new(n: usize, k: usize, d: usize, p: f64) -> Self {
        AchievabilityParams {
            n,
            k,
            d,
            p,
            gamma: None,
            eta: None,
            method: Method::MonteCarlo,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }

    fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(0.5 * (self.n as f64).ln())
    }
}

/// Per-`t` distribution of the largest `log M` at which a draw from
/// `(P_{X[t]Y})^n` still passes every subset condition.
enum TailLaw {
    /// Critical `log M` of each draw: the draw fails iff `log M ≥ L*`.
    Critical { cdf: WeightedCdf, samples: usize },
    /// Berry–Esseen for `J = ∅`, Monte Carlo for each nonempty `J`.
    Gaussian { c: f64, v: f64, t3: f64, per_subset: Vec<WeightedCdf>, samples: usize },
}

/// The tail term `max_t Pr{(X^n_[t], Y^n) fails some subset condition}` as a
/// function of `log M`.
pub struct TailModel {
    n: usize,
    d: usize,
    gamma: f64,
    laws: Vec<TailLaw>,
}

struct SubsetCells {
    probs: Vec<f64>,
    /// `dens[j][cell]` for proper subsets `j = 0..2^t − 1`.
    dens: Vec<Vec<f64>>,
}

fn subset_cells(model: &OrMacModel<f64>) -> Result<SubsetCells> {
    let t = model.t();
    let ny = model.alphabet_len();
    let mut probs = Vec::new();
    let mut cells = Vec::new();
    for bits in 0u32..1 << t {
        let x = bits_to_vec(bits, t);
        for y in 0..ny {
            let w = model.joint_prob(&x, y)?;
            if w > 0.0 {
                probs.push(w);
                cells.push((x.clone(), y));
            }
        }
    }
    let dens = (0..model.full_set())
        .map(|j| cells.iter().map(|(x, y)| model.info_density(j, x, *y)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsetCells { probs, dens })
}

impl TailModel {
    pub fn build(noise: &NoiseModel<f64>, params: &AchievabilityParams) -> Result<Self> {
        let gamma = params.gamma();
        let (n, d) = (params.n, params.d);
        let mut laws = Vec::with_capacity(params.k);
        for t in 1..=params.k {
            let model = OrMacModel::new(noise, params.p, t)?;
            let cells = subset_cells(&model)?;
            let critical = |counts: &[u64]| -> f64 {
                cells
                    .dens
                    .iter()
                    .enumerate()
                    .map(|(j, dens)| {
                        let s: f64 = counts.iter().zip(dens).map(|(c, v)| *c as f64 * v).sum();
                        let free = t - j.count_ones() as usize;
                        (s - gamma) / (d * free) as f64
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            let ids = [stream::BOUND_MC, t as u64];
            let law = match params.method {
                Method::Exact => {
                    let mut points = Vec::new();
                    enumerate_types(&cells.probs, n, &mut |counts, w| points.push((critical(counts), w)))?;
                    TailLaw::Critical { cdf: WeightedCdf::new(points), samples: 0 }
                }
                Method::MonteCarlo => {
                    let values = sharded_samples(&cells.probs, n, params.samples, params.seed, &ids, critical);
                    TailLaw::Critical { cdf: WeightedCdf::uniform(values), samples: params.samples }
                }
                Method::Gaussian => {
                    let m0 = model.moments(0)?;
                    if m0.v <= 0.0 {
                        return Err(Error::MethodUnavailable(format!(
                            "Gaussian approximation needs V_∅ > 0 (t = {t})"
                        )));
                    }
                    let per_subset = (1..cells.dens.len())
                        .map(|j| {
                            let free = t - j.count_ones() as usize;
                            let dens = &cells.dens[j];
                            let jids = [stream::SUBSET_MC, t as u64, j as u64];
                            let values = sharded_samples(&cells.probs, n, params.samples, params.seed, &jids, |counts| {
                                let s: f64 = counts.iter().zip(dens).map(|(c, v)| *c as f64 * v).sum();
                                (s - gamma) / (d * free) as f64
                            });
                            WeightedCdf::uniform(values)
                        })
                        .collect();
                    let samples = if t > 1 { params.samples } else { 0 };
                    TailLaw::Gaussian { c: m0.c, v: m0.v, t3: m0.t3, per_subset, samples }
                }
            };
            laws.push(law);
        }
        Ok(TailModel { n, d, gamma, laws })
    }

    /// `(tail, σ)` at `log M`.
    pub fn tail(&self, log_m: f64) -> (f64, f64) {
        let nf = self.n as f64;
        let mut best = (0.0, 0.0);
        for (ti, law) in self.laws.iter().enumerate() {
            let t = ti + 1;
            let (p, sigma) = match law {
                TailLaw::Critical { cdf, samples } => {
                    let p = cdf.cdf(log_m);
                    let sigma = if *samples > 0 { (p * (1.0 - p) / *samples as f64).sqrt() } else { 0.0 };
                    (p, sigma)
                }
                TailLaw::Gaussian { c, v, t3, per_subset, samples } => {
                    let thr = (self.d * t) as f64 * log_m + self.gamma;
                    let be = 6.0 * t3 / (nf.sqrt() * v.powf(1.5));
                    let mut p = gaussian_cdf((thr - nf * c) / (nf * v).sqrt()) + be;
                    let mut var = 0.0;
                    for cdf in per_subset {
                        let q = cdf.cdf(log_m);
                        p += q;
                        var += q * (1.0 - q) / *samples as f64;
                    }
                    (p.min(1.0), var.sqrt())
                }
            };
            if p > best.0 {
                best = (p, sigma);
            }
        }
        best
    }

    /// A `log M` beyond which every draw fails.
    fn saturation(&self) -> f64 {
        self.laws
            .iter()
            .map(|law| match law {
                TailLaw::Critical { cdf, .. } => cdf.max(),
                TailLaw::Gaussian { c, v, .. } => {
                    (self.n as f64 * c + 10.0 * (self.n as f64 * v).sqrt()) / self.d as f64
                }
            })
            .fold(0.0, f64::max)
            .max(0.0)
    }
}

/// `4n e^{−2M^dη²} + e^{nμηc} ((k+1) 2^k e^{−γ} + tail)` at real-valued `log M`.
fn assemble(
    noise: &NoiseModel<f64>,
    params: &AchievabilityParams,
    tail: &TailModel,
    log_m: f64,
) -> Result<(f64, f64, f64, Vec<Term>)> {
    let (n, k, d) = (params.n, params.k, params.d);
    let md = (d as f64 * log_m).exp();
    let eta = params.eta.unwrap_or_else(|| (d as f64 * log_m / (2.0 * md)).sqrt());
    if !(eta > 0.0) {
        return Err(Error::Domain { what: "eta", value: eta });
    }
    let gamma = params.gamma();
    if !(gamma > 0.0) {
        return Err(Error::Domain { what: "gamma", value: gamma });
    }
    let atypical = 4.0 * n as f64 * (-2.0 * md * eta * eta).exp();
    let mu = noise.mu();
    let factor = if mu == 0.0 {
        1.0
    } else {
        (n as f64 * mu * eta * noise.continuity_constant(params.p)?).exp()
    };
    let decoding = (k + 1) as f64 * 2f64.powi(k as i32) * (-gamma).exp();
    let (tail_value, sigma) = tail.tail(log_m);
    let unclipped = atypical + factor * (decoding + tail_value);
    let terms = vec![
        Term { name: "atypicality", value: atypical },
        Term { name: "change_of_measure_factor", value: factor },
        Term { name: "wrong_tuple", value: decoding },
        Term { name: "threshold_tail", value: tail_value },
    ];
    Ok((unclipped, eta, sigma, terms))
}

/// The achievability bound on the excess-resolution probability at
/// resolution `1/M`.
pub fn achievability_excess_bound(noise: &NoiseModel<f64>, m: usize, params: &AchievabilityParams) -> Result<BoundReport> {
    validate_common(params.n, params.k, params.d)?;
    if m == 0 {
        return Err(Error::contract("M must be positive"));
    }
    let tail = TailModel::build(noise, params)?;
    achievability_from_tail(noise, m, params, &tail)
}

fn achievability_from_tail(
    noise: &NoiseModel<f64>,
    m: usize,
    params: &AchievabilityParams,
    tail: &TailModel,
) -> Result<BoundReport> {
    let (unclipped, eta, sigma, terms) = assemble(noise, params, tail, (m as f64).ln())?;
    Ok(BoundReport {
        kind: BoundKind::Achievability,
        n: params.n,
        k: params.k,
        d: params.d,
        m: Some(m),
        eps: None,
        p: params.p,
        eta: Some(eta),
        gamma: Some(params.gamma()),
        beta: None,
        kappa: None,
        method: params.method,
        samples: if params.method == Method::Exact { 0 } else { params.samples },
        sigma,
        value: unclipped.clamp(0.0, 1.0),
        unclipped,
        terms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImpliedResolution {
    /// Largest `log M` (nats, `M` real) with bound `≤ ε`; 0 if none.
    pub neg_log_delta: f64,
    /// Bound value at that point.
    pub bound: f64,
    pub achievable: bool,
}

/// `−log δ` implied by the achievability bound: the largest `log M` whose
/// bound does not exceed `eps`, by grid scan and bisection.
pub fn achievability_resolution(noise: &NoiseModel<f64>, eps: f64, params: &AchievabilityParams) -> Result<ImpliedResolution> {
    validate_common(params.n, params.k, params.d)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain { what: "eps", value: eps });
    }
    let tail = TailModel::build(noise, params)?;
    let bound = |log_m: f64| assemble(noise, params, &tail, log_m).map(|r| r.0);
    let upper = tail.saturation() + 1.0;
    const GRID: usize = 4000;
    let step = upper / GRID as f64;
    let mut last_ok: Option<usize> = None;
    for i in 1..=GRID {
        if bound(i as f64 * step)? <= eps {
            last_ok = Some(i);
        }
    }
    let Some(i) = last_ok else {
        return Ok(ImpliedResolution { neg_log_delta: 0.0, bound: f64::NAN, achievable: false });
    };
    let (mut lo, mut hi) = (i as f64 * step, (i + 1) as f64 * step);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if bound(mid)? <= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ImpliedResolution { neg_log_delta: lo, bound: bound(lo)?, achievable: true })
}

fn validate_common(n: usize, k: usize, d: usize) -> Result<()> {
    if n == 0 || k == 0 || d == 0 {
        return Err(Error::contract("n, k and d must be positive"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Converse

#[derive(Clone, Debug, PartialEq)]
pub struct ConverseParams {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub eps: f64,
    /// Constant query size `|A_l|`.
    pub p_query: f64,
    /// Defaults to `1/√n`.
    pub beta: Option<f64>,
    /// Defaults to `1/√n`.
    pub kappa: Option<f64>,
    pub method: Method,
    pub samples: usize,
    pub seed: u64,
}

impl ConverseParams {
    pub fn new(n: usize, k: usize, d: usize, eps: f64, p_query: f64) -> Self {
        ConverseParams {
            n,
            k,
            d,
            eps,
            p_query,
            beta: None,
            kappa: None,
            method: Method::MonteCarlo,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

/// Law of `(Z, Y)` for one constant-size query and its density
/// `ı_A(z; y) = log P(y|z) / P(y)`, over cells of positive probability.
pub struct QueryDensity {
    pub probs: Vec<f64>,
    pub dens: Vec<f64>,
}

impl QueryDensity {
    pub fn new(noise: &NoiseModel<f64>, p_query: f64, k: usize) -> Result<Self> {
        let level = noise.noise_level(p_query)?;
        let rows = noise.rows_at_level(level)?;
        let pz1 = 1.0 - (1.0 - p_query).powi(k as i32);
        let ny = rows[0].len();
        let py: Vec<f64> = (0..ny).map(|y| (1.0 - pz1) * rows[0][y] + pz1 * rows[1][y]).collect();
        let mut probs = Vec::new();
        let mut dens = Vec::new();
        for (z, pz) in [(0, 1.0 - pz1), (1, pz1)] {
            for y in 0..ny {
                let w = pz * rows[z][y];
                if w > 0.0 {
                    probs.push(w);
                    dens.push(rows[z][y].ln() - py[y].ln());
                }
            }
        }
        Ok(QueryDensity { probs, dens })
    }

    /// `(C, V, T)` of the per-query density.
    pub fn moments(&self) -> (f64, f64, f64) {
        let cells: Vec<(f64, f64)> = self.probs.iter().copied().zip(self.dens.iter().copied()).collect();
        let s = central_moments(0, &cells);
        (s.c, s.v, s.t3)
    }
}

/// Upper bound on `−log δ*(n, k, d, ε)` with every query of size `p_query`.
pub fn converse_resolution_bound(noise: &NoiseModel<f64>, params: &ConverseParams) -> Result<BoundReport> {
    let ConverseParams { n, k, d, eps, p_query, .. } = *params;
    validate_common(n, k, d)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain { what: "eps", value: eps });
    }
    if !(0.0..=1.0).contains(&p_query) {
        return Err(Error::Domain { what: "p_query", value: p_query });
    }
    let root = 1.0 / (n as f64).sqrt();
    let beta = params.beta.unwrap_or(root);
    let kappa = params.kappa.unwrap_or(root);
    let spread = 2.0 * (k * k * d) as f64 * beta;
    if !(beta > 0.0 && beta <= eps / 2.0) {
        return Err(Error::contract(format!("beta = {beta} must lie in (0, eps/2 = {}]", eps / 2.0)));
    }
    if !(kappa > 0.0 && kappa < 1.0 - eps - spread) {
        return Err(Error::contract(format!(
            "kappa = {kappa} must lie in (0, 1 - eps - 2k²dβ = {})",
            1.0 - eps - spread
        )));
    }
    let alpha = eps + spread + kappa;
    let q = QueryDensity::new(noise, p_query, k)?;
    let (quantile, sigma, samples) = match params.method {
        Method::Exact => {
            let mut points = Vec::new();
            enumerate_types(&q.probs, n, &mut |counts, w| {
                let s: f64 = counts.iter().zip(&q.dens).map(|(c, v)| *c as f64 * v).sum();
                points.push((s, w));
            })?;
            (WeightedCdf::new(points).quantile_above(alpha), 0.0, 0)
        }
        Method::MonteCarlo => {
            let mut values = sharded_samples(&q.probs, n, params.samples, params.seed, &[stream::CONVERSE_MC], |counts| {
                counts.iter().zip(&q.dens).map(|(c, v)| *c as f64 * v).sum::<f64>()
            });
            values.sort_by(f64::total_cmp);
            let idx = ((alpha * params.samples as f64).floor() as usize).min(values.len() - 1);
            let quantile = values[idx];
            // Spread of the empirical quantile from the binomial count at α.
            let width = (alpha * (1.0 - alpha) / params.samples as f64).sqrt() * params.samples as f64;
            let lo = values[(idx as f64 - width).max(0.0) as usize];
            let hi = values[((idx as f64 + width) as usize).min(values.len() - 1)];
            (quantile, 0.5 * (hi - lo), params.samples)
        }
        Method::Gaussian => {
            let (c, v, t3) = q.moments();
            let nf = n as f64;
            let quantile = if v <= 0.0 {
                nf * c
            } else {
                let level = alpha + 6.0 * t3 / (nf.sqrt() * v.powf(1.5));
                if level >= 1.0 {
                    f64::INFINITY
                } else {
                    nf * c + (nf * v).sqrt() * gaussian_quantile(level)?
                }
            };
            (quantile, 0.0, 0)
        }
    };
    let dk = (d * k) as f64;
    let value = (quantile - kappa.ln() - dk * beta.ln()) / dk;
    Ok(BoundReport {
        kind: BoundKind::Converse,
        n,
        k,
        d,
        m: None,
        eps: Some(eps),
        p: p_query,
        eta: None,
        gamma: None,
        beta: Some(beta),
        kappa: Some(kappa),
        method: params.method,
        samples,
        sigma: sigma / dk,
        value,
        unclipped: value,
        terms: vec![
            Term { name: "alpha", value: alpha },
            Term { name: "density_quantile", value: quantile },
            Term { name: "neg_log_kappa", value: -kappa.ln() },
            Term { name: "neg_dk_log_beta", value: -dk * beta.ln() },
        ],
    })
}
