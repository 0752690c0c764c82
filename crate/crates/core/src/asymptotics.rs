//! Capacity `C(k)`, dispersion `V(k, ε)`, the second-order resolution
//! approximation, the phase-transition curve and Gaussian numerics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::NoiseModel;
use crate::error::{Error, Result};
use crate::ormac::OrMacModel;
use crate::scalar::{xlogy, Scalar};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_GRID: usize = 256;
const MAX_GOLDEN_ITERS: usize = 200;

/// `h_b(x)` in nats.
pub fn binary_entropy<F: Scalar>(x: F) -> Result<F> {
    if !(x >= F::zero() && x <= F::one()) {
        return Err(Error::Domain { what: "binary entropy argument", value: x.as_f64() });
    }
    Ok(-xlogy(x, x) - xlogy(F::one() - x, F::one() - x))
}

/// `C_∅(p, t) = I(X_[t]; Y)` at nominal parameter `p`.
pub fn mutual_info<F: Scalar>(noise: &NoiseModel<F>, p: F, t: usize) -> Result<F> {
    Ok(OrMacModel::new(noise, p, t)?.moments(0)?.c)
}

/// `V_∅(p, t)`.
pub fn density_variance<F: Scalar>(noise: &NoiseModel<F>, p: F, t: usize) -> Result<F> {
    Ok(OrMacModel::new(noise, p, t)?.moments(0)?.v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerTrace {
    pub grid_points: usize,
    pub brackets: usize,
    pub refinement_iterations: usize,
    /// Widest final bracket in `p`.
    pub achieved_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityResult<F> {
    pub k: usize,
    /// `C(k)` in nats.
    pub capacity: F,
    /// Every maximizer within `tol` of the best value, increasing.
    pub maximizers: Vec<F>,
    /// `V_∅(p*, k)` for each maximizer.
    pub variances: Vec<F>,
    pub trace: OptimizerTrace,
}

impl<F: Scalar> CapacityResult<F> {
    /// `V(k, ε)`: smallest variance over maximizers for `ε ≤ ½`, largest otherwise.
    pub fn dispersion(&self, eps: F) -> F {
        let it = self.variances.iter().copied();
        if eps <= F::lit(0.5) {
            it.fold(F::infinity(), F::min)
        } else {
            it.fold(F::neg_infinity(), F::max)
        }
    }

    pub fn v_low(&self) -> F {
        self.dispersion(F::zero())
    }

    pub fn v_high(&self) -> F {
        self.dispersion(F::one())
    }

    /// Smallest maximizer.
    pub fn p_star(&self) -> F {
        self.maximizers[0]
    }
}

/// Maximizes `f` on `(0, 1)`: evaluate on `grid` interior points, then
/// golden-section search each bracket around a (run of) local grid maxima.
/// Returns `(argmax, value)` pairs within `tol` of the best, sorted by argument.
pub fn maximize_unit_interval<F: Scalar>(
    f: impl Fn(F) -> Result<F>,
    grid: usize,
    tol: F,
) -> Result<(Vec<(F, F)>, OptimizerTrace)> {
    if grid < 3 {
        return Err(Error::contract("optimizer grid needs at least three points"));
    }
    if !(tol > F::zero()) {
        return Err(Error::Domain { what: "tol", value: tol.as_f64() });
    }
    let step = F::one() / F::from_usize_lossy(grid + 1);
    let xs: Vec<F> = (1..=grid).map(|i| F::from_usize_lossy(i) * step).collect();
    let vs: Vec<F> = xs.iter().map(|x| f(*x)).collect::<Result<_>>()?;

    let is_peak = |i: usize| (i == 0 || vs[i] >= vs[i - 1]) && (i + 1 == grid || vs[i] >= vs[i + 1]);
    let mut brackets = Vec::new();
    let mut i = 0;
    while i < grid {
        if is_peak(i) {
            let start = i;
            while i + 1 < grid && is_peak(i + 1) {
                i += 1;
            }
            let lo = if start == 0 { F::zero() } else { xs[start - 1] };
            let hi = if i + 1 == grid { F::one() } else { xs[i + 1] };
            brackets.push((lo, hi));
        }
        i += 1;
    }

    let mut trace = OptimizerTrace {
        grid_points: grid,
        brackets: brackets.len(),
        refinement_iterations: 0,
        achieved_tolerance: 0.0,
    };
    let mut found = Vec::with_capacity(brackets.len());
    for (lo, hi) in brackets {
        let (x, v, iters, width) = golden_section(&f, lo, hi, tol)?;
        trace.refinement_iterations += iters;
        trace.achieved_tolerance = trace.achieved_tolerance.max(width.as_f64());
        found.push((x, v));
    }
    let best = found.iter().map(|(_, v)| *v).fold(F::neg_infinity(), F::max);
    found.retain(|(_, v)| *v >= best - tol);
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok((found, trace))
}

fn golden_section<F: Scalar>(f: &impl Fn(F) -> Result<F>, mut a: F, mut b: F, tol: F) -> Result<(F, F, usize, F)> {
    let inv_phi = (F::lit(5.0).sqrt() - F::one()) / F::lit(2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut iters = 0;
    while b - a > tol && iters < MAX_GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        iters += 1;
    }
    let (x, v) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok((x, v, iters, b - a))
}

pub fn capacity<F: Scalar>(noise: &NoiseModel<F>, k: usize, tol: F) -> Result<CapacityResult<F>> {
    capacity_with_grid(noise, k, tol, DEFAULT_GRID)
}

pub fn capacity_with_grid<F: Scalar>(noise: &NoiseModel<F>, k: usize, tol: F, grid: usize) -> Result<CapacityResult<F>> {
    if k == 0 {
        return Err(Error::contract("target count k must be at least 1"));
    }
    let (found, trace) = maximize_unit_interval(|p| mutual_info(noise, p, k), grid, tol)?;
    let capacity = found.iter().map(|(_, v)| *v).fold(F::neg_infinity(), F::max).max(F::zero());
    let maximizers: Vec<F> = found.iter().map(|(p, _)| *p).collect();
    let variances = maximizers
        .iter()
        .map(|p| density_variance(noise, *p, k))
        .collect::<Result<_>>()?;
    Ok(CapacityResult { k, capacity, maximizers, variances, trace })
}

/// `V(k, ε)`.
pub fn dispersion<F: Scalar>(noise: &NoiseModel<F>, k: usize, eps: F) -> Result<F> {
    if !(eps > F::zero() && eps < F::one()) {
        return Err(Error::Domain { what: "eps", value: eps.as_f64() });
    }
    Ok(capacity(noise, k, F::lit(DEFAULT_TOL))?.dispersion(eps))
}

/// Standard normal CDF.
pub fn gaussian_cdf<F: Scalar>(x: F) -> F {
    F::lit(0.5) * (-x / F::SQRT_2()).erfc()
}

/// Standard normal quantile: rational approximation refined by two Halley
/// steps in double precision.
pub fn gaussian_quantile<F: Scalar>(eps: F) -> Result<F> {
    let p = eps.as_f64();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain { what: "quantile level", value: p });
    }
    Ok(F::lit(normal_quantile_f64(p)))
}

fn normal_quantile_f64(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        // Work with the smaller tail to keep the residual accurate.
        let e = if x < 0.0 {
            gaussian_cdf(x) - p
        } else {
            (1.0 - p) - gaussian_cdf(-x)
        };
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
        x -= u / (1.0 + x * u / 2.0);
    }
    x
}

/// Choice of the `Θ(log n)` remainder in the second-order approximation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderMode {
    #[default]
    MinusHalfLogN,
    PlusHalfLogN,
    Zero,
}

impl RemainderMode {
    pub fn remainder<F: Scalar>(self, n: usize) -> F {
        let half_log_n = F::lit(0.5) * F::from_usize_lossy(n).ln();
        match self {
            RemainderMode::MinusHalfLogN => -half_log_n,
            RemainderMode::PlusHalfLogN => half_log_n,
            RemainderMode::Zero => F::zero(),
        }
    }
}

impl fmt::Display for RemainderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemainderMode::MinusHalfLogN => "minus_half_log_n",
            RemainderMode::PlusHalfLogN => "plus_half_log_n",
            RemainderMode::Zero => "zero",
        })
    }
}

impl FromStr for RemainderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minus_half_log_n" => Ok(RemainderMode::MinusHalfLogN),
            "plus_half_log_n" => Ok(RemainderMode::PlusHalfLogN),
            "zero" => Ok(RemainderMode::Zero),
            other => Err(Error::Config(format!("unknown remainder mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResolutionEstimate<F> {
    /// Estimated `-log δ` in nats.
    pub neg_log_delta: F,
    /// `false` when the estimate is not positive.
    pub achievable: bool,
}

/// `(n C + √(n V) Φ^{-1}(ε) + r(n)) / (d k)` from precomputed `C(k)`, `V(k, ε)`.
pub fn second_order_from<F: Scalar>(
    c: F,
    v: F,
    n: usize,
    k: usize,
    d: usize,
    eps: F,
    mode: RemainderMode,
) -> Result<ResolutionEstimate<F>> {
    if n == 0 || k == 0 || d == 0 {
        return Err(Error::contract("n, k and d must be positive"));
    }
    let nf = F::from_usize_lossy(n);
    let value = (nf * c + (nf * v).sqrt() * gaussian_quantile(eps)? + mode.remainder(n))
        / F::from_usize_lossy(d * k);
    Ok(ResolutionEstimate { neg_log_delta: value, achievable: value > F::zero() })
}

pub fn second_order_resolution<F: Scalar>(
    noise: &NoiseModel<F>,
    n: usize,
    k: usize,
    d: usize,
    eps: F,
    mode: RemainderMode,
) -> Result<ResolutionEstimate<F>> {
    let cap = capacity(noise, k, F::lit(DEFAULT_TOL))?;
    second_order_from(cap.capacity, cap.dispersion(eps), n, k, d, eps, mode)
}

/// `Φ((d k n R − n C) / √(n V))` from a precomputed capacity result. With
/// several maximizers the smaller variance is used when the numerator is
/// not positive (ε* ≤ ½) and the larger one otherwise. `V = 0` falls back to
/// a step at `C / (d k)`.
pub fn phase_transition_from<F: Scalar>(cap: &CapacityResult<F>, n: usize, d: usize, rate: F) -> F {
    let nf = F::from_usize_lossy(n);
    let num = F::from_usize_lossy(d * cap.k) * nf * rate - nf * cap.capacity;
    let v = if num <= F::zero() { cap.v_low() } else { cap.v_high() };
    if v <= F::zero() {
        return if num < F::zero() {
            F::zero()
        } else if num > F::zero() {
            F::one()
        } else {
            F::lit(0.5)
        };
    }
    gaussian_cdf(num / (nf * v).sqrt())
}

pub fn phase_transition_prob<F: Scalar>(noise: &NoiseModel<F>, n: usize, k: usize, d: usize, rate: F) -> Result<F> {
    let cap = capacity(noise, k, F::lit(DEFAULT_TOL))?;
    Ok(phase_transition_from(&cap, n, d, rate))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateIdentityReport {
    pub k: usize,
    pub d: usize,
    pub grid_points: usize,
    /// Grid points where `min_t C_∅(p,t)/t` differs from `C_∅(p,k)/k`, with
    /// the minimizing `t`.
    pub violations: Vec<(f64, usize)>,
    /// `max_p min_t C_∅(p,t) / (d t)`.
    pub max_min: f64,
    /// `C(k) / (d k)`.
    pub capacity_rate: f64,
    pub agree: bool,
}

impl RateIdentityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.agree
    }
}

/// Checks `min_t C_∅(p,t)/t = C_∅(p,k)/k` on `grid` and that
/// `max_p min_t C_∅(p,t)/(d t)` equals `C(k)/(d k)`.
pub fn verify_rate_identity<F: Scalar>(noise: &NoiseModel<F>, k: usize, d: usize, grid: &[F]) -> Result<RateIdentityReport> {
    const MAX_K: usize = 6;
    if k == 0 || k > MAX_K {
        return Err(Error::contract(format!("rate identity check needs 1 <= k <= {MAX_K}")));
    }
    let tol = F::lit(1e-10);
    let min_over_t = |p: F| -> Result<(F, usize)> {
        let mut best = (F::infinity(), 0);
        for t in 1..=k {
            let v = mutual_info(noise, p, t)? / F::from_usize_lossy(t);
            // Ties go to the larger t.
            if v <= best.0 {
                best = (v, t);
            }
        }
        Ok(best)
    };
    let mut violations = Vec::new();
    for p in grid {
        let (min, argmin) = min_over_t(*p)?;
        let at_k = mutual_info(noise, *p, k)? / F::from_usize_lossy(k);
        if (min - at_k).abs() > tol {
            violations.push((p.as_f64(), argmin));
        }
    }
    let df = F::from_usize_lossy(d);
    let (found, _) = maximize_unit_interval(|p| Ok(min_over_t(p)?.0 / df), DEFAULT_GRID, F::lit(DEFAULT_TOL))?;
    let max_min = found.iter().map(|(_, v)| *v).fold(F::neg_infinity(), F::max).as_f64();
    let cap = capacity(noise, k, F::lit(DEFAULT_TOL))?;
    let capacity_rate = cap.capacity.as_f64() / (d * k) as f64;
    Ok(RateIdentityReport {
        k,
        d,
        grid_points: grid.len(),
        violations,
        max_min,
        capacity_rate,
        agree: (max_min - capacity_rate).abs() <= 1e-6,
    })
}

/// `p = i / (points + 1)`, `i = 1..=points`.
pub fn uniform_grid<F: Scalar>(points: usize) -> Vec<F> {
    (1..=points)
        .map(|i| F::from_usize_lossy(i) / F::from_usize_lossy(points + 1))
        .collect()
}
