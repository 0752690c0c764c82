//! The t-user binary OR multiple-access channel induced by a noise model at
//! Bernoulli input parameter `p`, its information densities and moments.
//!
//! Subsets `J ⊆ [t]` are bitmasks: bit `i` stands for user `i + 1`.

use serde::Serialize;

use crate::channels::{NoiseModel, Symbol};
use crate::error::{Error, Result};
use crate::scalar::{xlogy, Scalar};

pub type Subset = u32;

/// Largest `t` for which exact moments are computed unless raised.
pub const DEFAULT_MAX_USERS: usize = 16;
const HARD_MAX_USERS: usize = 31;

pub fn or_reduce(x: &[bool]) -> bool {
    x.iter().any(|b| *b)
}

pub fn subset_len(j: Subset) -> usize {
    j.count_ones() as usize
}

/// Members of `j` in increasing order, 0-based.
pub fn subset_members(j: Subset) -> impl Iterator<Item = usize> {
    (0..Subset::BITS as usize).filter(move |i| j >> i & 1 == 1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfoDensityStats<F> {
    pub subset: Subset,
    /// Mean `C_J` (nats).
    pub c: F,
    /// Variance `V_J` (nats²).
    pub v: F,
    /// Third absolute central moment `T_J` (nats³).
    pub t3: F,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrMacModel<F> {
    p: F,
    t: usize,
    level: F,
    rows: [Vec<F>; 2],
    max_users: usize,
}

impl<F: Scalar> OrMacModel<F> {
    /// Joint law at nominal parameter `p`: inputs i.i.d. Bern(p), channel
    /// `P^{f(p)}_{Y|Z}` applied to their OR.
    pub fn new(noise: &NoiseModel<F>, p: F, t: usize) -> Result<Self> {
        if !(p >= F::zero() && p <= F::one()) {
            return Err(Error::Domain { what: "p", value: p.as_f64() });
        }
        if t == 0 || t > HARD_MAX_USERS {
            return Err(Error::contract(format!("user count t = {t} must lie in [1, {HARD_MAX_USERS}]")));
        }
        let level = noise.noise_level(p)?;
        Self::from_rows(noise.rows_at_level(level)?, level, p, t)
    }

    /// Model with explicit transition rows, bypassing the noise map.
    pub fn from_rows(rows: [Vec<F>; 2], level: F, p: F, t: usize) -> Result<Self> {
        if rows[0].len() != rows[1].len() {
            return Err(Error::contract("transition rows differ in length"));
        }
        Ok(OrMacModel { p, t, level, rows, max_users: DEFAULT_MAX_USERS })
    }

    pub fn with_max_users(mut self, max_users: usize) -> Self {
        self.max_users = max_users.min(HARD_MAX_USERS);
        self
    }

    /// Same channel and `p`, different user count.
    pub fn with_users(&self, t: usize) -> Result<Self> {
        if t == 0 || t > HARD_MAX_USERS {
            return Err(Error::contract(format!("user count t = {t} must lie in [1, {HARD_MAX_USERS}]")));
        }
        Ok(OrMacModel { t, ..self.clone() })
    }

    pub fn p(&self) -> F {
        self.p
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Noise level `f(p)` the channel is evaluated at.
    pub fn level(&self) -> F {
        self.level
    }

    pub fn rows(&self) -> &[Vec<F>; 2] {
        &self.rows
    }

    pub fn alphabet_len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn full_set(&self) -> Subset {
        ((1u64 << self.t) - 1) as Subset
    }

    /// `P(Y = y | Z = z)`.
    #[inline]
    pub fn channel(&self, z: bool, y: Symbol) -> F {
        self.rows[z as usize][y]
    }

    /// Probability that `m` i.i.d. Bern(p) inputs are all zero.
    #[inline]
    pub fn all_zero_prob(&self, m: usize) -> F {
        (F::one() - self.p).powi(m as i32)
    }

    /// Output law when `m` inputs are unobserved and all observed inputs are
    /// zero: `(1-p)^m P(y|0) + (1 - (1-p)^m) P(y|1)`.
    #[inline]
    pub fn mixture(&self, m: usize, y: Symbol) -> F {
        let a = self.all_zero_prob(m);
        a * self.channel(false, y) + (F::one() - a) * self.channel(true, y)
    }

    fn check_subset(&self, j: Subset) -> Result<()> {
        if j & !self.full_set() != 0 {
            return Err(Error::contract(format!("subset {j:#b} is not contained in [{}]", self.t)));
        }
        Ok(())
    }

    fn check_symbol(&self, y: Symbol) -> Result<()> {
        if y >= self.alphabet_len() {
            return Err(Error::InvalidSymbol { symbol: y, alphabet: self.alphabet_len() });
        }
        Ok(())
    }

    /// `P_{Y|X_J}(y | x_J)`; `x_j` lists the inputs of `J` in increasing
    /// user order.
    pub fn cond_prob_given_subset(&self, j: Subset, x_j: &[bool], y: Symbol) -> Result<F> {
        self.check_subset(j)?;
        self.check_symbol(y)?;
        if x_j.len() != subset_len(j) {
            return Err(Error::contract(format!(
                "assignment has {} entries, subset has {}",
                x_j.len(),
                subset_len(j)
            )));
        }
        Ok(if or_reduce(x_j) {
            self.channel(true, y)
        } else {
            self.mixture(self.t - subset_len(j), y)
        })
    }

    /// `Π Bern_p(x_i) · P(y | OR(x))`.
    pub fn joint_prob(&self, x: &[bool], y: Symbol) -> Result<F> {
        if x.len() != self.t {
            return Err(Error::contract(format!("input vector has length {}, expected {}", x.len(), self.t)));
        }
        self.check_symbol(y)?;
        let ones = x.iter().filter(|b| **b).count();
        let px = self.p.powi(ones as i32) * (F::one() - self.p).powi((self.t - ones) as i32);
        Ok(px * self.channel(or_reduce(x), y))
    }

    /// `ı_J(x; y) = log P(y | x) - log P(y | x_J)`. A zero denominator with a
    /// positive numerator gives `+∞`.
    pub fn info_density(&self, j: Subset, x: &[bool], y: Symbol) -> Result<F> {
        self.check_subset(j)?;
        if x.len() != self.t {
            return Err(Error::contract(format!("input vector has length {}, expected {}", x.len(), self.t)));
        }
        let x_j: Vec<bool> = subset_members(j).map(|i| x[i]).collect();
        let den = self.cond_prob_given_subset(j, &x_j, y)?;
        let num = self.channel(or_reduce(x), y);
        density(num, den)
    }

    /// Per-symbol density when the conditioned inputs are all zero and `m`
    /// inputs are unconditioned: `[ı(z=0, y), ı(z=1, y)]` for each `y`.
    /// `None` marks an undefined (0/0) entry.
    pub fn density_table(&self, m: usize) -> Vec<[Option<F>; 2]> {
        (0..self.alphabet_len())
            .map(|y| {
                let den = self.mixture(m, y);
                [false, true].map(|z| density(self.channel(z, y), den).ok())
            })
            .collect()
    }

    /// Exact `C_J`, `V_J`, `T_J`. The density depends on `x` only through
    /// `OR(x_J)` and `OR(x_{[t]∖J})`, so the expectation runs over those two
    /// bits and `y`.
    pub fn moments(&self, j: Subset) -> Result<InfoDensityStats<F>> {
        if self.t > self.max_users {
            return Err(Error::CapacityExceeded { t: self.t, max: self.max_users });
        }
        self.check_subset(j)?;
        let m = self.t - subset_len(j);
        let p_j_zero = self.all_zero_prob(subset_len(j));
        let p_rest_zero = self.all_zero_prob(m);
        let mut cells: Vec<(F, F)> = Vec::with_capacity(4 * self.alphabet_len());
        for a in [false, true] {
            let pa = if a { F::one() - p_j_zero } else { p_j_zero };
            for b in [false, true] {
                let pb = if b { F::one() - p_rest_zero } else { p_rest_zero };
                for y in 0..self.alphabet_len() {
                    let w = pa * pb * self.channel(a || b, y);
                    if w == F::zero() {
                        continue;
                    }
                    let i = if a { F::zero() } else { density(self.channel(b, y), self.mixture(m, y))? };
                    cells.push((w, i));
                }
            }
        }
        Ok(central_moments(j, &cells))
    }

    /// Moments for every `J ⊆ [t]`, indexed by bitmask.
    pub fn all_moments(&self) -> Result<Vec<InfoDensityStats<F>>> {
        (0..=self.full_set()).map(|j| self.moments(j)).collect()
    }

    /// `min over nonempty proper J` of `C_J/(t-|J|) - C_∅/t`; `None` for `t = 1`.
    pub fn kappa(&self) -> Result<Option<(F, Subset)>> {
        if self.t < 2 {
            return Ok(None);
        }
        let t = F::from_usize_lossy(self.t);
        let c0 = self.moments(0)?.c / t;
        let mut best: Option<(F, Subset)> = None;
        for j in 1..self.full_set() {
            let free = F::from_usize_lossy(self.t - subset_len(j));
            let margin = self.moments(j)?.c / free - c0;
            if best.is_none_or(|(b, _)| margin < b) {
                best = Some((margin, j));
            }
        }
        Ok(best)
    }

    /// Checks the four random-access-channel assumptions by exhaustive
    /// enumeration of the joint law.
    pub fn verify_rac_assumptions(&self) -> Result<RacReport> {
        const MAX_T: usize = 6;
        if self.t > MAX_T {
            return Err(Error::CapacityExceeded { t: self.t, max: MAX_T });
        }
        Ok(RacReport {
            t: self.t,
            permutation_invariance: self.check_permutation_invariance(),
            reducibility: self.check_reducibility(),
            friendliness: self.check_friendliness(),
            interference: self.check_interference(),
        })
    }

    fn conditional_from_joint(&self, x: &[bool], y: Symbol) -> F {
        let px: F = (0..self.alphabet_len()).map(|v| self.joint_prob(x, v).unwrap()).fold(F::zero(), |a, b| a + b);
        if px == F::zero() {
            F::zero()
        } else {
            self.joint_prob(x, y).unwrap() / px
        }
    }

    fn check_permutation_invariance(&self) -> Check {
        let tol = F::lit(1e-12);
        for bits in 0u32..1 << self.t {
            let x = bits_to_vec(bits, self.t);
            for i in 0..self.t.saturating_sub(1) {
                let mut swapped = x.clone();
                swapped.swap(i, i + 1);
                for y in 0..self.alphabet_len() {
                    let (a, b) = (self.conditional_from_joint(&x, y), self.conditional_from_joint(&swapped, y));
                    if (a - b).abs() > tol {
                        return Check::fail(format!("x = {x:?}, swap ({}, {}), y = {y}", i + 1, i + 2));
                    }
                }
            }
        }
        Check::pass()
    }

    fn check_reducibility(&self) -> Check {
        let tol = F::lit(1e-12);
        for s in 1..self.t {
            let smaller = self.with_users(s).expect("s < t");
            for bits in 0u32..1 << s {
                let xs = bits_to_vec(bits, s);
                let mut full = xs.clone();
                full.resize(self.t, false);
                for y in 0..self.alphabet_len() {
                    let a = self.conditional_from_joint(&full, y);
                    let b = smaller.conditional_from_joint(&xs, y);
                    if (a - b).abs() > tol {
                        return Check::fail(format!("s = {s}, x = {xs:?}, y = {y}"));
                    }
                }
            }
        }
        Check::pass()
    }

    /// `I(X_[s]; Y | X_[s+1:t] = 0) >= I(X_[s]; Y | X_[s+1:t])` for `s < t`.
    fn check_friendliness(&self) -> Check {
        let tol = F::lit(1e-12);
        for s in 1..self.t {
            let rest: Subset = self.full_set() & !(((1u64 << s) - 1) as Subset);
            let lhs = self.mutual_info_given_rest_zero(s);
            let rhs = self.brute_conditional_mi(rest);
            if lhs < rhs - tol {
                return Check::fail(format!("s = {s}: {lhs} < {rhs}"));
            }
        }
        Check::pass()
    }

    /// `I(X_[s]; Y | X_[s+1:t] = 0)` by enumeration of the first `s` inputs.
    fn mutual_info_given_rest_zero(&self, s: usize) -> F {
        let ny = self.alphabet_len();
        let mut py = vec![F::zero(); ny];
        let mut terms = Vec::new();
        for bits in 0u32..1 << s {
            let mut x = bits_to_vec(bits, s);
            let ones = bits.count_ones() as i32;
            let px = self.p.powi(ones) * (F::one() - self.p).powi(s as i32 - ones);
            x.resize(self.t, false);
            for (y, acc) in py.iter_mut().enumerate() {
                let w = self.conditional_from_joint(&x, y);
                *acc = *acc + px * w;
                terms.push((px, w, y));
            }
        }
        terms
            .into_iter()
            .filter(|(px, w, _)| *px * *w > F::zero())
            .fold(F::zero(), |acc, (px, w, y)| acc + px * w * (w / py[y]).ln())
    }

    /// `I(X_{[t]∖J}; Y | X_J)` by enumeration of all `2^t · |Y|` cells.
    fn brute_conditional_mi(&self, j: Subset) -> F {
        let ny = self.alphabet_len();
        let n = 1usize << self.t;
        let mut joint = vec![F::zero(); n * ny];
        for bits in 0..n {
            let x = bits_to_vec(bits as u32, self.t);
            for y in 0..ny {
                joint[bits * ny + y] = self.joint_prob(&x, y).unwrap();
            }
        }
        let mut pj = std::collections::HashMap::<u32, F>::new();
        let mut pjy = std::collections::HashMap::<(u32, usize), F>::new();
        let mut px = vec![F::zero(); n];
        for bits in 0..n {
            let key = bits as u32 & j;
            for y in 0..ny {
                let w = joint[bits * ny + y];
                px[bits] = px[bits] + w;
                let e = pj.entry(key).or_insert(F::zero());
                *e = *e + w;
                let e = pjy.entry((key, y)).or_insert(F::zero());
                *e = *e + w;
            }
        }
        let mut acc = F::zero();
        for bits in 0..n {
            let key = bits as u32 & j;
            for y in 0..ny {
                let w = joint[bits * ny + y];
                if w > F::zero() {
                    // log [P(y|x) / P(y|x_J)]
                    acc = acc + w * ((w / px[bits]) / (pjy[&(key, y)] / pj[&key])).ln();
                }
            }
        }
        acc
    }

    /// For each `s < t`, some cell has `P(x_[s+1:t] | x_[s], y) ≠ P(x_[s+1:t] | y)`.
    fn check_interference(&self) -> Check {
        let tol = F::lit(1e-10);
        let ny = self.alphabet_len();
        let n = 1u32 << self.t;
        for s in 1..self.t {
            let low_mask = (1u32 << s) - 1;
            let mut p_low_y = std::collections::HashMap::<(u32, usize), F>::new();
            let mut p_high_y = std::collections::HashMap::<(u32, usize), F>::new();
            let mut p_y = vec![F::zero(); ny];
            for bits in 0..n {
                let x = bits_to_vec(bits, self.t);
                for y in 0..ny {
                    let w = self.joint_prob(&x, y).unwrap();
                    p_y[y] = p_y[y] + w;
                    let e = p_low_y.entry((bits & low_mask, y)).or_insert(F::zero());
                    *e = *e + w;
                    let e = p_high_y.entry((bits & !low_mask, y)).or_insert(F::zero());
                    *e = *e + w;
                }
            }
            let mut found = false;
            'cells: for bits in 0..n {
                let x = bits_to_vec(bits, self.t);
                for y in 0..ny {
                    let plow = p_low_y[&(bits & low_mask, y)];
                    if plow == F::zero() || p_y[y] == F::zero() {
                        continue;
                    }
                    let given_both = self.joint_prob(&x, y).unwrap() / plow;
                    let given_y = p_high_y[&(bits & !low_mask, y)] / p_y[y];
                    if (given_both - given_y).abs() > tol {
                        found = true;
                        break 'cells;
                    }
                }
            }
            if !found {
                return Check::fail(format!("s = {s}: inputs are conditionally independent given Y"));
            }
        }
        Check::pass()
    }
}

fn density<F: Scalar>(num: F, den: F) -> Result<F> {
    match (num > F::zero(), den > F::zero()) {
        (true, true) => Ok(num.ln() - den.ln()),
        (true, false) => Ok(F::infinity()),
        (false, true) => Ok(F::neg_infinity()),
        (false, false) => Err(Error::UndefinedDensity),
    }
}

/// Mean, variance and third absolute central moment of a weighted sample.
pub(crate) fn central_moments<F: Scalar>(subset: Subset, cells: &[(F, F)]) -> InfoDensityStats<F> {
    let c = cells.iter().fold(F::zero(), |acc, (w, i)| acc + *w * *i);
    let (v, t3) = cells.iter().fold((F::zero(), F::zero()), |(v, t3), (w, i)| {
        let d = (*i - c).abs();
        (v + *w * d * d, t3 + *w * d * d * d)
    });
    InfoDensityStats { subset, c: c.max(F::zero()), v, t3 }
}

pub(crate) fn bits_to_vec(bits: u32, t: usize) -> Vec<bool> {
    (0..t).map(|i| bits >> i & 1 == 1).collect()
}

/// Entropy-based `I(X_[t]; Y) = H(Y) - H(Y|Z)`.
pub fn mutual_information<F: Scalar>(model: &OrMacModel<F>) -> F {
    let pz1 = F::one() - model.all_zero_prob(model.t());
    let mut hy = F::zero();
    let mut hyz = F::zero();
    for y in 0..model.alphabet_len() {
        let py = model.mixture(model.t(), y);
        hy = hy - xlogy(py, py);
        for (z, pz) in [(false, F::one() - pz1), (true, pz1)] {
            let w = model.channel(z, y);
            hyz = hyz - pz * xlogy(w, w);
        }
    }
    hy - hyz
}

/// Outcome of one assumption check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Check {
    fn pass() -> Self {
        Check { holds: true, witness: None }
    }

    fn fail(witness: String) -> Self {
        Check { holds: false, witness: Some(witness) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RacReport {
    pub t: usize,
    pub permutation_invariance: Check,
    pub reducibility: Check,
    pub friendliness: Check,
    pub interference: Check,
}

impl RacReport {
    pub fn all_hold(&self) -> bool {
        self.permutation_invariance.holds && self.reducibility.holds && self.friendliness.holds && self.interference.holds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{NoiseMap, ERASURE};
    use proptest::prelude::*;

    fn bsc(a: f64, b: f64) -> NoiseModel<f64> {
        NoiseModel::bsc(NoiseMap::affine(a, b).unwrap()).unwrap()
    }

    fn bec(a: f64, b: f64) -> NoiseModel<f64> {
        NoiseModel::bec(NoiseMap::affine(a, b).unwrap()).unwrap()
    }

    fn hb(x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
        }
    }

    /// Brute-force `P(y | x_J)` by summing the joint law over the other inputs.
    fn brute_cond(m: &OrMacModel<f64>, j: Subset, x_j: &[bool], y: usize) -> f64 {
        let t = m.t();
        let (mut num, mut den) = (0.0, 0.0);
        for bits in 0u32..1 << t {
            let x = bits_to_vec(bits, t);
            let matches = subset_members(j).zip(x_j).all(|(i, v)| x[i] == *v);
            if !matches {
                continue;
            }
            for v in 0..m.alphabet_len() {
                let w = m.joint_prob(&x, v).unwrap();
                den += w;
                if v == y {
                    num += w;
                }
            }
        }
        num / den
    }

    /// Brute-force moments of `ı_J` from the per-cell density.
    fn brute_moments(m: &OrMacModel<f64>, j: Subset) -> (f64, f64, f64) {
        let mut cells = Vec::new();
        for bits in 0u32..1 << m.t() {
            let x = bits_to_vec(bits, m.t());
            for y in 0..m.alphabet_len() {
                let w = m.joint_prob(&x, y).unwrap();
                if w > 0.0 {
                    cells.push((w, m.info_density(j, &x, y).unwrap()));
                }
            }
        }
        let c: f64 = cells.iter().map(|(w, i)| w * i).sum();
        let v: f64 = cells.iter().map(|(w, i)| w * (i - c).powi(2)).sum();
        let t3: f64 = cells.iter().map(|(w, i)| w * (i - c).abs().powi(3)).sum();
        (c, v, t3)
    }

    #[test]
    fn or_reduce_exhaustive() {
        assert!(!or_reduce(&[false, false, false]));
        assert!(or_reduce(&[false, true, false]));
        for bits in 0u32..8 {
            assert_eq!(or_reduce(&bits_to_vec(bits, 3)), bits != 0);
        }
    }

    #[test]
    fn cond_prob_examples() {
        let m = OrMacModel::new(&bsc(0.1, 0.0), 0.5, 1).unwrap();
        assert!((m.cond_prob_given_subset(0, &[], 1).unwrap() - 0.5).abs() < 1e-15);

        let m = OrMacModel::new(&bsc(0.2, 0.0), 0.3, 2).unwrap();
        let v = m.cond_prob_given_subset(0b01, &[false], 1).unwrap();
        assert!((v - 0.38).abs() < 1e-15);
        assert!((brute_cond(&m, 0b01, &[false], 1) - 0.38).abs() < 1e-15);

        let full = m.cond_prob_given_subset(0b11, &[false, true], 0).unwrap();
        assert_eq!(full, m.channel(true, 0));
        assert!(m.cond_prob_given_subset(0b100, &[true], 0).is_err());
        assert!(m.cond_prob_given_subset(0b11, &[true], 0).is_err());
    }

    #[test]
    fn closed_form_matches_marginalization() {
        for noise in [bsc(0.3, 0.1), bec(0.6, 0.2)] {
            for t in 1..=5 {
                let m = OrMacModel::new(&noise, 0.37, t).unwrap();
                for j in 0..=m.full_set() {
                    for bits in 0u32..1 << subset_len(j) {
                        let x_j = bits_to_vec(bits, subset_len(j));
                        for y in 0..m.alphabet_len() {
                            let a = m.cond_prob_given_subset(j, &x_j, y).unwrap();
                            assert!((a - brute_cond(&m, j, &x_j, y)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn info_density_examples() {
        let m = OrMacModel::new(&bsc(0.1, 0.0), 0.5, 1).unwrap();
        let v = m.info_density(0, &[true], 1).unwrap();
        assert!((v - (0.9f64 / 0.5).ln()).abs() < 1e-12);
        assert!((v - 0.5878).abs() < 1e-4);

        let clean = OrMacModel::new(&bsc(0.0, 0.0), 0.5, 1).unwrap();
        assert!((clean.info_density(0, &[true], 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(clean.info_density(0, &[true], 0).unwrap(), f64::NEG_INFINITY);

        // P(y|x) = 0 and P(y|x_J) = 0: erasure-free BEC cell with y on the wrong side.
        let e = OrMacModel::new(&bec(0.0, 0.0), 0.0, 1).unwrap();
        assert!(matches!(e.info_density(0, &[false], 1), Err(Error::UndefinedDensity)));
        assert_eq!(e.info_density(0, &[true], 1).unwrap(), f64::INFINITY);
        assert!(e.info_density(0, &[false], ERASURE).is_err());
    }

    #[test]
    fn moments_match_exhaustive_expectation() {
        for noise in [bsc(0.3, 0.1), bec(0.6, 0.2), bsc(0.05, 0.0)] {
            for t in 1..=4 {
                let m = OrMacModel::new(&noise, 0.23, t).unwrap();
                for j in 0..=m.full_set() {
                    let s = m.moments(j).unwrap();
                    let (c, v, t3) = brute_moments(&m, j);
                    assert!((s.c - c).abs() < 1e-12, "t={t} J={j:b}: {} vs {c}", s.c);
                    assert!((s.v - v).abs() < 1e-12);
                    assert!((s.t3 - t3).abs() < 1e-12);
                    assert!(s.c >= 0.0 && s.v >= 0.0 && s.t3 >= 0.0);
                }
                let c0 = m.moments(0).unwrap().c;
                assert!((c0 - mutual_information(&m)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_moments_equal_brute_conditional_mi() {
        let m = OrMacModel::new(&bsc(0.2, 0.0), 0.3, 3).unwrap();
        for j in 0..=m.full_set() {
            assert!((m.moments(j).unwrap().c - m.brute_conditional_mi(j)).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_closed_forms() {
        let m = OrMacModel::new(&bsc(0.1, 0.0), 0.5, 1).unwrap();
        let c = m.moments(0).unwrap().c;
        assert!((c - (2f64.ln() - hb(0.1))).abs() < 1e-12);
        assert!((c - 0.3681).abs() < 1e-4);

        for (alpha, p, k) in [(0.4, 0.3, 2), (0.1, 0.2, 3), (0.7, 0.5, 1)] {
            let m = OrMacModel::new(&bec(alpha, 0.0), p, k).unwrap();
            let expect = (1.0 - alpha) * hb((1.0f64 - p).powi(k as i32));
            assert!((m.moments(0).unwrap().c - expect).abs() < 1e-12);
        }

        for t in 1..=4 {
            let m = OrMacModel::new(&bsc(0.5, 0.0), 0.4, t).unwrap();
            let s = m.moments(0).unwrap();
            assert!(s.c.abs() < 1e-15 && s.v.abs() < 1e-15);
        }
    }

    #[test]
    fn moments_respect_user_cap() {
        let m = OrMacModel::new(&bsc(0.2, 0.0), 0.1, 17).unwrap();
        assert!(matches!(m.moments(0), Err(Error::CapacityExceeded { t: 17, max: 16 })));
        assert!(m.clone().with_max_users(20).moments(0).is_ok());
    }

    #[test]
    fn rac_examples() {
        let r = OrMacModel::new(&bsc(0.2, 0.0), 0.3, 2).unwrap().verify_rac_assumptions().unwrap();
        assert!(r.all_hold(), "{r:?}");
        let r = OrMacModel::new(&bec(0.4, 0.0), 0.5, 3).unwrap().verify_rac_assumptions().unwrap();
        assert!(r.all_hold(), "{r:?}");
        let r = OrMacModel::new(&bsc(0.5, 0.0), 0.5, 2).unwrap().verify_rac_assumptions().unwrap();
        assert!(!r.interference.holds);
        assert!(r.permutation_invariance.holds && r.reducibility.holds);
    }

    #[test]
    fn kappa_positive_for_nondegenerate_channels() {
        for noise in [bsc(0.3, 0.1), bec(0.6, 0.2)] {
            for t in 2..=4 {
                for i in 1..20 {
                    let p = i as f64 * 0.05;
                    let m = OrMacModel::new(&noise, p, t).unwrap();
                    let (kappa, _) = m.kappa().unwrap().unwrap();
                    assert!(kappa > 1e-9, "t={t} p={p}: {kappa}");
                }
            }
        }
    }

    #[test]
    fn single_precision_moments_track_double() {
        let n64 = bsc(0.3, 0.1);
        let n32 = NoiseModel::<f32>::bsc(NoiseMap::affine(0.3, 0.1).unwrap()).unwrap();
        let a = OrMacModel::new(&n64, 0.25, 3).unwrap().moments(0).unwrap();
        let b = OrMacModel::new(&n32, 0.25, 3).unwrap().moments(0).unwrap();
        assert!((a.c - b.c as f64).abs() < 1e-5);
        assert!((a.v - b.v as f64).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn joint_law_sums_to_one(a in 0.0f64..0.4, b in 0.0f64..0.1, p in 0.0f64..1.0, t in 1usize..6) {
            let m = OrMacModel::new(&bsc(a, b), p, t).unwrap();
            let mut s = 0.0;
            for bits in 0u32..1 << t {
                let x = bits_to_vec(bits, t);
                for y in 0..2 {
                    s += m.joint_prob(&x, y).unwrap();
                }
            }
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn chain_rule_splits_mutual_information(a in 0.0f64..0.45, p in 0.02f64..0.98, t in 2usize..5) {
            // C_∅ = I(X_J; Y) + C_J, and X_J acts on Y only through OR(X_J).
            let m = OrMacModel::new(&bsc(a, 0.0), p, t).unwrap();
            let c0 = m.moments(0).unwrap().c;
            for j in 1..m.full_set() {
                let cj = m.moments(j).unwrap().c;
                let s = subset_len(j);
                let mut ij = 0.0;
                for y in 0..2 {
                    let py = m.mixture(t, y);
                    for z in [false, true] {
                        let pz = if z { 1.0 - m.all_zero_prob(s) } else { m.all_zero_prob(s) };
                        let pyz = if z { m.channel(true, y) } else { m.mixture(t - s, y) };
                        if pz * pyz > 0.0 {
                            ij += pz * pyz * (pyz / py).ln();
                        }
                    }
                }
                prop_assert!((c0 - ij - cj).abs() < 1e-12);
            }
        }
    }
}
