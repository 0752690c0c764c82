//! Binary-input channels whose noise level depends on the size of the query.
//!
//! A [`NoiseModel`] pairs a channel family (BSC, BEC or a custom
//! row-stochastic table) with a Lipschitz [`NoiseMap`] `f`. Asking a query of
//! Lebesgue measure `q` produces a channel with noise level `r = f(q)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output symbol index into [`NoiseModel::alphabet`].
pub type Symbol = usize;

/// Erasure symbol of the BEC alphabet `(0, 1, e)`.
pub const ERASURE: Symbol = 2;

const LIPSCHITZ_GRID: usize = 1000;
const FD_STEP: f64 = 1e-6;

/// Shape of the noise map `f : [0,1] -> [0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseShape<F> {
    Constant(F),
    /// `f(q) = a + b q`
    Affine { a: F, b: F },
    /// Piecewise-linear interpolation through `(q_i, f_i)`; `q` must cover `[0,1]`.
    Table { q: Vec<F>, f: Vec<F> },
}

/// Lipschitz noise map with its constant `mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMap<F> {
    shape: NoiseShape<F>,
    mu: F,
}

impl<F: Scalar> NoiseMap<F> {
    pub fn constant(a: F) -> Result<Self> {
        Self::new(NoiseShape::Constant(a), F::zero())
    }

    pub fn affine(a: F, b: F) -> Result<Self> {
        Self::new(NoiseShape::Affine { a, b }, b.abs())
    }

    pub fn table(q: Vec<F>, f: Vec<F>) -> Result<Self> {
        if q.len() != f.len() || q.len() < 2 {
            return Err(Error::contract("noise table needs at least two (q, f) knots of equal length"));
        }
        let mu = q
            .windows(2)
            .zip(f.windows(2))
            .map(|(qw, fw)| ((fw[1] - fw[0]) / (qw[1] - qw[0])).abs())
            .fold(F::zero(), F::max);
        Self::new(NoiseShape::Table { q, f }, mu)
    }

    /// Builds a map and checks range and Lipschitz invariants against `mu`.
    pub fn new(shape: NoiseShape<F>, mu: F) -> Result<Self> {
        if let NoiseShape::Table { q, .. } = &shape {
            let ordered = q.windows(2).all(|w| w[0] < w[1]);
            if !ordered || q[0] != F::zero() || q[q.len() - 1] != F::one() {
                return Err(Error::contract("noise table knots must increase strictly from 0 to 1"));
            }
        }
        if !(mu >= F::zero()) || !mu.is_finite() {
            return Err(Error::Domain { what: "mu", value: mu.as_f64() });
        }
        let map = NoiseMap { shape, mu };
        let tol = F::lit(1e-9);
        let mut prev: Option<(F, F)> = None;
        for q in map.check_points() {
            let v = map.eval(q);
            if !(v >= F::zero() && v <= F::one()) {
                return Err(Error::InvalidNoise { level: v.as_f64(), family: "noise map" });
            }
            if let Some((pq, pv)) = prev {
                if (v - pv).abs() > map.mu * (q - pq) * (F::one() + tol) + F::lit(8.0) * F::epsilon() {
                    return Err(Error::contract(format!(
                        "noise map is not {}-Lipschitz near q = {}",
                        map.mu, q
                    )));
                }
            }
            prev = Some((q, v));
        }
        Ok(map)
    }

    /// Grid plus table knots, sorted.
    fn check_points(&self) -> Vec<F> {
        let mut pts: Vec<F> = (0..=LIPSCHITZ_GRID)
            .map(|i| F::from_usize_lossy(i) / F::from_usize_lossy(LIPSCHITZ_GRID))
            .collect();
        if let NoiseShape::Table { q, .. } = &self.shape {
            pts.extend(q.iter().copied());
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            pts.dedup();
        }
        pts
    }

    pub fn mu(&self) -> F {
        self.mu
    }

    pub fn shape(&self) -> &NoiseShape<F> {
        &self.shape
    }

    /// Raises the advertised Lipschitz constant. Lowering it below the
    /// map's own constant is rejected.
    pub fn with_mu(self, mu: F) -> Result<Self> {
        Self::new(self.shape, mu)
    }

    pub fn is_constant(&self) -> bool {
        match &self.shape {
            NoiseShape::Constant(_) => true,
            NoiseShape::Affine { b, .. } => *b == F::zero(),
            NoiseShape::Table { f, .. } => f.iter().all(|v| *v == f[0]),
        }
    }

    /// `f(q)`; `q` is clamped into `[0,1]`.
    pub fn eval(&self, q: F) -> F {
        let q = q.max(F::zero()).min(F::one());
        match &self.shape {
            NoiseShape::Constant(a) => *a,
            NoiseShape::Affine { a, b } => *a + *b * q,
            NoiseShape::Table { q: qs, f } => interpolate(qs, f, q),
        }
    }

    /// Smallest and largest value on the check grid.
    pub fn range(&self) -> (F, F) {
        self.check_points()
            .into_iter()
            .map(|q| self.eval(q))
            .fold((F::infinity(), F::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

fn interpolate<F: Scalar>(xs: &[F], ys: &[F], x: F) -> F {
    let idx = xs.partition_point(|v| *v <= x);
    if idx == 0 {
        return ys[0];
    }
    if idx >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[idx - 1], xs[idx]);
    let w = (x - x0) / (x1 - x0);
    ys[idx - 1] + w * (ys[idx] - ys[idx - 1])
}

/// Custom channel: transition rows tabulated at increasing noise levels and
/// linearly interpolated in between.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomChannel<F> {
    alphabet: Vec<String>,
    levels: Vec<F>,
    /// `rows[i][z][y]` at `levels[i]`.
    rows: Vec<[Vec<F>; 2]>,
}

impl<F: Scalar> CustomChannel<F> {
    pub fn new(alphabet: Vec<String>, levels: Vec<F>, rows: Vec<[Vec<F>; 2]>) -> Result<Self> {
        if alphabet.len() < 2 {
            return Err(Error::contract("custom alphabet needs at least two symbols"));
        }
        if levels.is_empty() || levels.len() != rows.len() {
            return Err(Error::contract("custom channel needs one row pair per noise level"));
        }
        if !levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::contract("custom channel levels must increase strictly"));
        }
        let tol = F::lit(1e-12);
        for (level, pair) in levels.iter().zip(&rows) {
            for row in pair {
                if row.len() != alphabet.len() {
                    return Err(Error::contract("custom row length differs from alphabet size"));
                }
                if row.iter().any(|v| !(*v >= F::zero() && *v <= F::one())) {
                    return Err(Error::contract(format!("custom row at level {level} has entries outside [0,1]")));
                }
                let sum = row.iter().fold(F::zero(), |a, b| a + *b);
                if (sum - F::one()).abs() > tol {
                    return Err(Error::contract(format!("custom row at level {level} sums to {sum}")));
                }
            }
        }
        Ok(CustomChannel { alphabet, levels, rows })
    }

    fn row(&self, r: F, z: bool) -> Option<Vec<F>> {
        let (lo, hi) = (self.levels[0], self.levels[self.levels.len() - 1]);
        if !(r >= lo && r <= hi) {
            return None;
        }
        let z = z as usize;
        let idx = self.levels.partition_point(|v| *v <= r);
        if idx == 0 || idx >= self.levels.len() {
            let i = if idx == 0 { 0 } else { self.levels.len() - 1 };
            return Some(self.rows[i][z].clone());
        }
        let (l0, l1) = (self.levels[idx - 1], self.levels[idx]);
        let w = (r - l0) / (l1 - l0);
        Some(
            self.rows[idx - 1][z]
                .iter()
                .zip(&self.rows[idx][z])
                .map(|(a, b)| *a + w * (*b - *a))
                .collect(),
        )
    }

    pub fn levels(&self) -> &[F] {
        &self.levels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChannelFamily<F> {
    Bsc,
    Bec,
    Custom(CustomChannel<F>),
}

impl<F> ChannelFamily<F> {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelFamily::Bsc => "bsc",
            ChannelFamily::Bec => "bec",
            ChannelFamily::Custom(_) => "custom",
        }
    }
}

/// A query-dependent binary-input channel.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel<F> {
    family: ChannelFamily<F>,
    noise_map: NoiseMap<F>,
}

impl<F: Scalar> NoiseModel<F> {
    pub fn new(family: ChannelFamily<F>, noise_map: NoiseMap<F>) -> Result<Self> {
        let model = NoiseModel { family, noise_map };
        for q in model.noise_map.check_points() {
            model.check_level(model.noise_map.eval(q))?;
        }
        Ok(model)
    }

    pub fn bsc(noise_map: NoiseMap<F>) -> Result<Self> {
        Self::new(ChannelFamily::Bsc, noise_map)
    }

    pub fn bec(noise_map: NoiseMap<F>) -> Result<Self> {
        Self::new(ChannelFamily::Bec, noise_map)
    }

    pub fn family(&self) -> &ChannelFamily<F> {
        &self.family
    }

    pub fn noise_map(&self) -> &NoiseMap<F> {
        &self.noise_map
    }

    pub fn mu(&self) -> F {
        self.noise_map.mu()
    }

    pub fn alphabet(&self) -> Vec<String> {
        match &self.family {
            ChannelFamily::Bsc => vec!["0".into(), "1".into()],
            ChannelFamily::Bec => vec!["0".into(), "1".into(), "e".into()],
            ChannelFamily::Custom(c) => c.alphabet.clone(),
        }
    }

    pub fn alphabet_len(&self) -> usize {
        match &self.family {
            ChannelFamily::Bsc => 2,
            ChannelFamily::Bec => 3,
            ChannelFamily::Custom(c) => c.alphabet.len(),
        }
    }

    pub fn is_query_independent(&self) -> bool {
        self.noise_map.is_constant()
    }

    /// `f(q)` after checking `q ∈ [0,1]`.
    pub fn noise_level(&self, q: F) -> Result<F> {
        if !(q >= F::zero() && q <= F::one()) {
            return Err(Error::Domain { what: "query size q", value: q.as_f64() });
        }
        Ok(self.noise_map.eval(q))
    }

    /// Rejects noise levels outside the family's admissible range.
    pub fn check_level(&self, r: F) -> Result<()> {
        let ok = match &self.family {
            ChannelFamily::Bsc => r >= F::zero() && r <= F::lit(0.5),
            ChannelFamily::Bec => r >= F::zero() && r < F::one(),
            ChannelFamily::Custom(c) => r >= c.levels[0] && r <= c.levels[c.levels.len() - 1],
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidNoise { level: r.as_f64(), family: self.family.name() })
        }
    }

    /// Transition row `P^r(. | z)` at an explicit noise level `r`.
    pub fn row_at_level(&self, r: F, z: bool) -> Result<Vec<F>> {
        self.check_level(r)?;
        let one = F::one();
        Ok(match &self.family {
            ChannelFamily::Bsc => {
                if z {
                    vec![r, one - r]
                } else {
                    vec![one - r, r]
                }
            }
            ChannelFamily::Bec => {
                if z {
                    vec![F::zero(), one - r, r]
                } else {
                    vec![one - r, F::zero(), r]
                }
            }
            ChannelFamily::Custom(c) => c
                .row(r, z)
                .ok_or(Error::InvalidNoise { level: r.as_f64(), family: "custom" })?,
        })
    }

    /// Both rows `[P^r(.|0), P^r(.|1)]`.
    pub fn rows_at_level(&self, r: F) -> Result<[Vec<F>; 2]> {
        Ok([self.row_at_level(r, false)?, self.row_at_level(r, true)?])
    }

    pub fn prob_at_level(&self, r: F, z: bool, y: Symbol) -> Result<F> {
        let row = self.row_at_level(r, z)?;
        row.get(y)
            .copied()
            .ok_or(Error::InvalidSymbol { symbol: y, alphabet: row.len() })
    }

    /// `P^{f(q)}_{Y|Z}(y | z)`.
    pub fn transition_prob(&self, q: F, z: bool, y: Symbol) -> Result<F> {
        if y >= self.alphabet_len() {
            return Err(Error::InvalidSymbol { symbol: y, alphabet: self.alphabet_len() });
        }
        self.prob_at_level(self.noise_level(q)?, z, y)
    }

    /// Draws an output symbol for input `z` at query size `q` by inversion of
    /// one uniform variate from `rng`.
    pub fn sample_output<R: Rng + ?Sized>(&self, q: F, z: bool, rng: &mut R) -> Result<Symbol> {
        let row = self.row_at_level(self.noise_level(q)?, z)?;
        let u = F::lit(rng.random::<f64>());
        Ok(sample_from_row(&row, u))
    }

    /// Local continuity constant `sup_{y,z} |d/dr log P^r(y|z)|` at `r = f(q)`.
    pub fn continuity_constant(&self, q: F) -> Result<F> {
        let r = self.noise_level(q)?;
        self.continuity_constant_at_level(r)
    }

    pub fn continuity_constant_at_level(&self, r: F) -> Result<F> {
        self.check_level(r)?;
        let one = F::one();
        match &self.family {
            ChannelFamily::Bsc | ChannelFamily::Bec => {
                if r <= F::zero() || r >= one {
                    return Err(Error::UnboundedContinuity { level: r.as_f64() });
                }
                Ok(one / r.min(one - r))
            }
            ChannelFamily::Custom(c) => {
                let h = F::lit(FD_STEP);
                let (lo, hi) = (c.levels[0], c.levels[c.levels.len() - 1]);
                let (a, b) = ((r - h).max(lo), (r + h).min(hi));
                if !(b > a) {
                    return Err(Error::UnboundedContinuity { level: r.as_f64() });
                }
                let mut sup = F::zero();
                for z in [false, true] {
                    let (ra, rb, rc) = (self.row_at_level(a, z)?, self.row_at_level(b, z)?, self.row_at_level(r, z)?);
                    for y in 0..rc.len() {
                        if ra[y] == F::zero() && rb[y] == F::zero() {
                            continue;
                        }
                        if ra[y] <= F::zero() || rb[y] <= F::zero() || rc[y] <= F::zero() {
                            return Err(Error::UnboundedContinuity { level: r.as_f64() });
                        }
                        let d = ((rb[y].ln() - ra[y].ln()) / (b - a)).abs();
                        sup = sup.max(d);
                    }
                }
                Ok(sup)
            }
        }
    }
}

/// Inverse-CDF draw from a probability row given a uniform `u ∈ [0,1)`.
pub(crate) fn sample_from_row<F: Scalar>(row: &[F], u: F) -> Symbol {
    let mut acc = F::zero();
    let mut last = 0;
    for (y, p) in row.iter().enumerate() {
        if *p > F::zero() {
            acc = acc + *p;
            last = y;
            if u < acc {
                return y;
            }
        }
    }
    last
}

// ---------------------------------------------------------------------------
// Configuration surface

/// Serialized form of a noise map, e.g. `{"kind":"affine","a":0.3,"b":0.1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseMapSpec {
    Constant { a: f64 },
    Affine { a: f64, b: f64 },
    Table { q: Vec<f64>, f: Vec<f64> },
}

impl NoiseMapSpec {
    pub fn build<F: Scalar>(&self, mu: Option<f64>) -> Result<NoiseMap<F>> {
        let map = match self {
            NoiseMapSpec::Constant { a } => NoiseMap::constant(F::lit(*a))?,
            NoiseMapSpec::Affine { a, b } => NoiseMap::affine(F::lit(*a), F::lit(*b))?,
            NoiseMapSpec::Table { q, f } => NoiseMap::table(
                q.iter().map(|v| F::lit(*v)).collect(),
                f.iter().map(|v| F::lit(*v)).collect(),
            )?,
        };
        match mu {
            Some(mu) => map.with_mu(F::lit(mu)),
            None => Ok(map),
        }
    }
}

impl fmt::Display for NoiseMapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseMapSpec::Constant { a } => write!(f, "const:{a}"),
            NoiseMapSpec::Affine { a, b } => write!(f, "affine:{a},{b}"),
            NoiseMapSpec::Table { q, f: v } => {
                let knots: Vec<String> = q.iter().zip(v).map(|(a, b)| format!("{a}:{b}")).collect();
                write!(f, "table:{}", knots.join(","))
            }
        }
    }
}

/// Parses `const:A`, `affine:A,B` or `table:q0:f0,q1:f1,...`.
impl FromStr for NoiseMapSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse noise map {s:?}; expected const:A, affine:A,B or table:q:f,..."));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        match kind.trim() {
            "const" | "constant" => Ok(NoiseMapSpec::Constant { a: num(rest)? }),
            "affine" => {
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                Ok(NoiseMapSpec::Affine { a: num(a)?, b: num(b)? })
            }
            "table" => {
                let mut q = Vec::new();
                let mut f = Vec::new();
                for knot in rest.split(',') {
                    let (a, b) = knot.split_once(':').ok_or_else(bad)?;
                    q.push(num(a)?);
                    f.push(num(b)?);
                }
                Ok(NoiseMapSpec::Table { q, f })
            }
            _ => Err(bad()),
        }
    }
}

/// Custom channel table as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomTableSpec {
    pub alphabet: Vec<String>,
    pub levels: Vec<f64>,
    /// `rows[i] = [P(.|0), P(.|1)]` at `levels[i]`.
    pub rows: Vec<[Vec<f64>; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Bsc,
    Bec,
    Custom,
}

impl FromStr for FamilyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bsc" => Ok(FamilyName::Bsc),
            "bec" => Ok(FamilyName::Bec),
            "custom" => Ok(FamilyName::Custom),
            other => Err(Error::Config(format!("unknown channel family {other:?}"))),
        }
    }
}

/// Channel specification, e.g.
/// `{"family":"bsc","f":{"kind":"affine","a":0.3,"b":0.1},"mu":0.1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub family: FamilyName,
    pub f: NoiseMapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<CustomTableSpec>,
}

impl ChannelSpec {
    pub fn build<F: Scalar>(&self) -> Result<NoiseModel<F>> {
        let map = self.f.build(self.mu)?;
        let family = match self.family {
            FamilyName::Bsc => ChannelFamily::Bsc,
            FamilyName::Bec => ChannelFamily::Bec,
            FamilyName::Custom => {
                let t = self
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::Config("custom family requires a \"table\" field".into()))?;
                let lift = |v: &Vec<f64>| v.iter().map(|x| F::lit(*x)).collect::<Vec<F>>();
                ChannelFamily::Custom(CustomChannel::new(
                    t.alphabet.clone(),
                    t.levels.iter().map(|x| F::lit(*x)).collect(),
                    t.rows.iter().map(|[a, b]| [lift(a), lift(b)]).collect(),
                )?)
            }
        };
        NoiseModel::new(family, map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn bsc(map: NoiseMap<f64>) -> NoiseModel<f64> {
        NoiseModel::bsc(map).unwrap()
    }

    #[test]
    fn transition_examples() {
        let m = bsc(NoiseMap::constant(0.3).unwrap());
        assert_eq!(m.transition_prob(0.7, false, 1).unwrap(), 0.3);

        let e = NoiseModel::bec(NoiseMap::constant(0.4).unwrap()).unwrap();
        assert_eq!(e.transition_prob(0.2, true, ERASURE).unwrap(), 0.4);
        assert_eq!(e.transition_prob(0.2, true, 0).unwrap(), 0.0);

        let a = bsc(NoiseMap::affine(0.3, 0.1).unwrap());
        assert!((a.transition_prob(0.5, true, 1).unwrap() - 0.65).abs() < 1e-15);
    }

    #[test]
    fn transition_errors() {
        let m = bsc(NoiseMap::constant(0.3).unwrap());
        assert!(matches!(m.transition_prob(0.1, false, 2), Err(Error::InvalidSymbol { .. })));
        assert!(matches!(m.prob_at_level(0.7, false, 0), Err(Error::InvalidNoise { .. })));
        assert!(NoiseModel::bsc(NoiseMap::affine(0.3, 0.4).unwrap()).is_err());
        assert!(NoiseModel::bec(NoiseMap::constant(1.0).unwrap()).is_err());
    }

    #[test]
    fn lipschitz_constant_enforced() {
        assert!(NoiseMap::affine(0.3, 0.1).unwrap().with_mu(0.05).is_err());
        assert!(NoiseMap::affine(0.3, 0.1).unwrap().with_mu(0.2).is_ok());
        let t = NoiseMap::<f64>::table(vec![0.0, 0.5, 1.0], vec![0.1, 0.3, 0.2]).unwrap();
        assert!((t.mu() - 0.4).abs() < 1e-12);
        assert!((t.eval(0.25) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rows_are_stochastic_on_grid() {
        let models = [
            bsc(NoiseMap::affine(0.3, 0.1).unwrap()),
            NoiseModel::bec(NoiseMap::affine(0.6, 0.2).unwrap()).unwrap(),
        ];
        for m in &models {
            for i in 0..100 {
                let q = i as f64 / 99.0;
                for z in [false, true] {
                    let s: f64 = (0..m.alphabet_len()).map(|y| m.transition_prob(q, z, y).unwrap()).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn noiseless_and_full_erasure_sampling() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let clean = bsc(NoiseMap::constant(0.0).unwrap());
        let erase = NoiseModel::bec(NoiseMap::constant(1.0 - 1e-15).unwrap()).unwrap();
        for i in 0..1000 {
            let z = i % 3 == 0;
            assert_eq!(clean.sample_output(0.5, z, &mut rng).unwrap(), z as usize);
            assert_eq!(erase.sample_output(0.5, z, &mut rng).unwrap(), ERASURE);
        }
    }

    #[test]
    fn sampling_frequency_matches_crossover() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        let m = bsc(NoiseMap::constant(0.3).unwrap());
        let n = 1_000_000;
        let ones = (0..n).filter(|_| m.sample_output(0.0, false, &mut rng).unwrap() == 1).count();
        assert!((ones as f64 / n as f64 - 0.3).abs() < 0.002);
    }

    #[test]
    fn sampling_passes_chi_square() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let m = NoiseModel::bec(NoiseMap::affine(0.6, 0.2).unwrap()).unwrap();
        let draws = 100_000;
        for z in [false, true] {
            let mut counts = [0usize; 3];
            for _ in 0..draws {
                counts[m.sample_output(0.25, z, &mut rng).unwrap()] += 1;
            }
            let row = m.rows_at_level(0.65).unwrap()[z as usize].clone();
            let mut chi2 = 0.0;
            let mut dof = 0;
            for y in 0..3 {
                let e = row[y] * draws as f64;
                if e > 0.0 {
                    chi2 += (counts[y] as f64 - e).powi(2) / e;
                    dof += 1;
                } else {
                    assert_eq!(counts[y], 0);
                }
            }
            let dof = (dof - 1) as f64;
            assert!(chi2 < dof + 3.0 * (2.0 * dof).sqrt(), "chi2 = {chi2}");
        }
    }

    #[test]
    fn continuity_constant_examples() {
        let c = |r: f64| bsc(NoiseMap::constant(r).unwrap()).continuity_constant(0.5).unwrap();
        assert!((c(0.25) - 4.0).abs() < 1e-12);
        assert!((c(0.5) - 2.0).abs() < 1e-12);
        let bec = NoiseModel::<f64>::bec(NoiseMap::constant(0.5).unwrap()).unwrap();
        assert!((bec.continuity_constant(0.1).unwrap() - 2.0).abs() < 1e-12);
        let clean = bsc(NoiseMap::constant(0.0).unwrap());
        assert!(matches!(clean.continuity_constant(0.3), Err(Error::UnboundedContinuity { .. })));
    }

    #[test]
    fn continuity_bound_holds_for_small_steps() {
        let models = [
            bsc(NoiseMap::affine(0.3, 0.1).unwrap()),
            NoiseModel::bec(NoiseMap::affine(0.6, 0.2).unwrap()).unwrap(),
        ];
        for m in &models {
            for i in 1..20 {
                let q = i as f64 / 20.0;
                let c = m.continuity_constant(q).unwrap();
                let r = m.noise_level(q).unwrap();
                for xi in [1e-3, 1e-4] {
                    for s in [-1.0, 1.0] {
                        let r2 = m.noise_level(q + s * xi).unwrap();
                        let step = (r2 - r).abs();
                        assert!(step <= m.mu() * xi * (1.0 + 1e-12));
                        let mut worst: f64 = 0.0;
                        for z in [false, true] {
                            let (a, b) = (m.row_at_level(r, z).unwrap(), m.row_at_level(r2, z).unwrap());
                            for y in 0..a.len() {
                                if a[y] > 0.0 {
                                    worst = worst.max((a[y].ln() - b[y].ln()).abs());
                                }
                            }
                        }
                        assert!(worst <= c * step * (1.0 + 1e-2) + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn custom_table_interpolates_and_estimates_constant() {
        let spec: ChannelSpec = serde_json::from_str(
            r#"{"family":"custom","f":{"kind":"constant","a":0.2},
                "table":{"alphabet":["0","1"],"levels":[0.0,0.5],
                "rows":[[[1.0,0.0],[0.0,1.0]],[[0.5,0.5],[0.5,0.5]]]}}"#,
        )
        .unwrap();
        let m: NoiseModel<f64> = spec.build().unwrap();
        // Interpolated table equals a BSC with crossover 0.2.
        assert!((m.transition_prob(0.9, false, 1).unwrap() - 0.2).abs() < 1e-12);
        let c = m.continuity_constant(0.3).unwrap();
        assert!((c - 5.0).abs() < 1e-4, "{c}");
    }

    #[test]
    fn channel_spec_parses_documented_form() {
        let spec: ChannelSpec =
            serde_json::from_str(r#"{"family":"bsc","f":{"kind":"affine","a":0.3,"b":0.1},"mu":0.1}"#).unwrap();
        let m: NoiseModel<f64> = spec.build().unwrap();
        assert_eq!(m.family().name(), "bsc");
        assert!((m.mu() - 0.1).abs() < 1e-15);
        assert!(serde_json::from_str::<ChannelSpec>(r#"{"family":"bsc","f":{"kind":"affine","a":0.3},"mu":0.1}"#).is_err());
    }

    #[test]
    fn noise_map_spec_from_str() {
        assert_eq!("const:0.11".parse::<NoiseMapSpec>().unwrap(), NoiseMapSpec::Constant { a: 0.11 });
        assert_eq!(
            "affine:0.3,0.1".parse::<NoiseMapSpec>().unwrap(),
            NoiseMapSpec::Affine { a: 0.3, b: 0.1 }
        );
        let t: NoiseMapSpec = "table:0:0.1,1:0.2".parse().unwrap();
        assert_eq!(t.to_string(), "table:0:0.1,1:0.2");
        assert!("cubic:1".parse::<NoiseMapSpec>().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let m = NoiseModel::<f32>::bsc(NoiseMap::affine(0.3, 0.1).unwrap()).unwrap();
        assert!((m.transition_prob(0.5, true, 1).unwrap() - 0.65).abs() < 1e-6);
    }
}
