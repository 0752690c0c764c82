//! Threshold tuple decoder.
//!
//! For `t = k, …, 1` the decoder looks for tuples of codebook rows whose
//! accumulated densities `Σ_l ı_J` exceed `d (t − |J|) log M + γ` for every
//! proper subset `J` of the tuple. Densities are evaluated under the nominal
//! law at parameter `p`.
//!
//! Each density depends on a query only through `y_l` and two OR bits, so
//! sums reduce to popcounts of packed rows against per-symbol masks. Rows are
//! ranked by an optimistic bound on their share of the `J = ∅` score and the
//! search over tuples stops as soon as the bound falls below the threshold.

use serde::Serialize;

use super::codebook::{tail_mask, Codebook};
use super::partition::CubePartition;
use crate::channels::{NoiseModel, Symbol};
use crate::error::{Error, Result};
use crate::ormac::OrMacModel;

pub const DEFAULT_BUDGET: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodeOutput {
    /// Number of estimates; 0 means an error was declared.
    pub m: usize,
    /// Accepted cell indices, 1-based and increasing.
    pub indices: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// The `t` whose scan succeeded, 0 if none did.
    pub t_loop_exit: usize,
}

impl DecodeOutput {
    fn empty() -> Self {
        DecodeOutput { m: 0, indices: Vec::new(), centers: Vec::new(), t_loop_exit: 0 }
    }
}

/// Per-symbol densities `[ı(z=0), ı(z=1)]` with `m` unconditioned inputs.
type Table = Vec<[Option<f64>; 2]>;

#[derive(Clone, Debug)]
pub struct Decoder {
    partition: CubePartition,
    k: usize,
    gamma: f64,
    budget: f64,
    /// `d log M`.
    dlogm: f64,
    /// `tables[m]` for `m = 0..=k` (index 0 unused).
    tables: Vec<Table>,
}

/// Packed positions of each output symbol in `y^n`.
#[derive(Clone, Debug)]
pub struct SymbolMasks {
    masks: Vec<Vec<u64>>,
    counts: Vec<u64>,
    valid: Vec<u64>,
}

impl SymbolMasks {
    pub fn new(y: &[Symbol], alphabet: usize) -> Result<Self> {
        let words = y.len().div_ceil(64);
        let mut masks = vec![vec![0u64; words]; alphabet];
        for (l, &s) in y.iter().enumerate() {
            if s >= alphabet {
                return Err(Error::InvalidSymbol { symbol: s, alphabet });
            }
            masks[s][l / 64] |= 1 << (l % 64);
        }
        let counts = masks.iter().map(|m| popcount(m)).collect();
        let mut valid = vec![u64::MAX; words];
        if let Some(last) = valid.last_mut() {
            *last = tail_mask(y.len());
        }
        Ok(SymbolMasks { masks, counts, valid })
    }
}

#[inline]
fn popcount(words: &[u64]) -> u64 {
    words.iter().map(|w| w.count_ones() as u64).sum()
}

#[inline]
fn popcount_and(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as u64).sum()
}

/// `C(n, t)` as a float.
pub fn binomial(n: usize, t: usize) -> f64 {
    if t > n {
        return 0.0;
    }
    let t = t.min(n - t);
    (0..t).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Depth-first enumeration of tuples of ranked rows whose `J = ∅` score may
/// exceed the threshold.
struct Scan<'a> {
    t: usize,
    /// Threshold less a rounding allowance.
    cut: f64,
    base: f64,
    /// Largest positive part of any ranked row.
    pmax: f64,
    ranked: &'a [(f64, usize)],
    /// `(P, own score)` per ranked row: its positive part and the ∅ score
    /// it would have alone.
    parts: &'a [(f64, f64)],
    prefix: &'a [f64],
    /// Rows in ranked order, contiguous.
    packed: &'a [u64],
    words: usize,
    /// `(δ, mask)` for every symbol with a nonzero increment.
    signed: Vec<(f64, &'a [u64])>,
    /// `ors[h]` is the OR of the first `h` chosen rows.
    ors: Vec<Vec<u64>>,
    chosen: Vec<usize>,
    /// Sum of the positive parts of the chosen rows.
    chosen_pos: f64,
}

impl Scan<'_> {
    /// `J = ∅` score of the OR at depth `h`, before cover checks.
    fn score_at(&self, h: usize) -> f64 {
        let or = &self.ors[h];
        self.base + self.signed.iter().map(|(delta, m)| delta * popcount_and(or, m) as f64).sum::<f64>()
    }

    fn dfs(&mut self, start: usize, partial: f64, visit: &mut impl FnMut(&[usize])) {
        let h = self.chosen.len();
        let left = self.t - h;
        let n = self.ranked.len();
        let here = self.score_at(h);
        for j in start..n.saturating_sub(left - 1) {
            // Optimistic completion: this row plus the next best left − 1.
            if partial + self.prefix[j + left] - self.prefix[j] <= self.cut {
                break;
            }
            let (pos, own) = self.parts[j];
            if left == 1 && (here + pos <= self.cut || own + self.chosen_pos <= self.cut) {
                continue;
            }
            let row = &self.packed[j * self.words..(j + 1) * self.words];
            if left == 1 {
                let prev = &self.ors[h];
                let score = self.base
                    + self
                        .signed
                        .iter()
                        .map(|(delta, m)| {
                            let c: u32 = prev.iter().zip(row).zip(*m).map(|((a, b), m)| ((a | b) & m).count_ones()).sum();
                            delta * c as f64
                        })
                        .sum::<f64>();
                if score <= self.cut {
                    continue;
                }
            } else {
                let (lower, upper) = self.ors.split_at_mut(h + 1);
                upper[0].copy_from_slice(&lower[h]);
                or_into(&mut upper[0], row);
                // Adding rows raises the score by at most their positive parts.
                if self.score_at(h + 1) + (left - 1) as f64 * self.pmax <= self.cut {
                    continue;
                }
            }
            self.chosen.push(j);
            if left == 1 {
                visit(&self.chosen);
            } else {
                self.chosen_pos += pos;
                self.dfs(j + 1, partial + self.ranked[j].0, visit);
                self.chosen_pos -= pos;
            }
            self.chosen.pop();
        }
    }
}

/// How each symbol enters the `J = ∅` score of a tuple.
#[derive(Clone, Copy, Debug)]
enum Role {
    /// Finite on both inputs: contributes `a` per position plus `δ = b − a`
    /// where the tuple's OR is 1.
    Normal { delta: f64 },
    /// `P(y|0) = 0`: the tuple must cover these positions.
    Cover,
    /// `P(y|1) = 0`: rows with a one here are excluded.
    Forbid,
}

struct EmptySetTerms {
    base: f64,
    roles: Vec<Role>,
    cover: Vec<u64>,
    forbidden: Vec<u64>,
}

impl Decoder {
    /// Decoder for up to `k` targets with nominal parameter `p`.
    pub fn new(noise: &NoiseModel<f64>, p: f64, partition: CubePartition, k: usize, gamma: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain { what: "nominal p", value: p });
        }
        if k == 0 {
            return Err(Error::contract("k must be at least 1"));
        }
        if !(gamma >= 0.0) {
            return Err(Error::Domain { what: "gamma", value: gamma });
        }
        let model = OrMacModel::new(noise, p, 1)?;
        let tables = (0..=k).map(|m| model.density_table(m)).collect();
        Ok(Decoder {
            partition,
            k,
            gamma,
            budget: DEFAULT_BUDGET,
            dlogm: partition.d() as f64 * (partition.m() as f64).ln(),
            tables,
        })
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alphabet_len(&self) -> usize {
        self.tables[1].len()
    }

    /// Largest `C(M^d, t)` the decoder would scan.
    pub fn check_budget(&self) -> Result<()> {
        for t in (1..=self.k).rev() {
            let tuples = binomial(self.partition.cells(), t);
            if tuples > self.budget {
                return Err(Error::Budget { t, tuples, budget: self.budget });
            }
        }
        Ok(())
    }

    fn threshold(&self, free: usize) -> f64 {
        free as f64 * self.dlogm + self.gamma
    }

    pub fn decode(&self, y: &[Symbol], cb: &Codebook) -> Result<DecodeOutput> {
        if cb.m() != self.partition.m() || cb.d() != self.partition.d() {
            return Err(Error::contract("codebook and decoder partitions differ"));
        }
        if y.len() != cb.n() {
            return Err(Error::contract(format!("received {} answers for {} queries", y.len(), cb.n())));
        }
        let masks = SymbolMasks::new(y, self.alphabet_len())?;
        if self.gamma.is_infinite() {
            return Ok(DecodeOutput::empty());
        }
        for t in (1..=self.k).rev() {
            let tuples = binomial(cb.rows(), t);
            if tuples > self.budget {
                return Err(Error::Budget { t, tuples, budget: self.budget });
            }
            if let Some(rows) = self.search(t, &masks, cb) {
                let indices: Vec<usize> = rows.iter().map(|r| r + 1).collect();
                let centers = indices.iter().map(|i| self.partition.center(*i)).collect::<Result<_>>()?;
                return Ok(DecodeOutput { m: t, indices, centers, t_loop_exit: t });
            }
        }
        Ok(DecodeOutput::empty())
    }

    fn empty_set_terms(&self, t: usize, masks: &SymbolMasks) -> Option<EmptySetTerms> {
        let words = masks.valid.len();
        let mut terms = EmptySetTerms {
            base: 0.0,
            roles: Vec::with_capacity(masks.masks.len()),
            cover: vec![0; words],
            forbidden: vec![0; words],
        };
        for (y, pair) in self.tables[t].iter().enumerate() {
            let count = masks.counts[y] as f64;
            let role = match *pair {
                [Some(a), Some(b)] if a.is_finite() && b.is_finite() => {
                    terms.base += a * count;
                    Role::Normal { delta: b - a }
                }
                [Some(a), Some(b)] if a == f64::NEG_INFINITY && b.is_finite() => {
                    terms.base += b * count;
                    Role::Cover
                }
                [Some(a), Some(b)] if b == f64::NEG_INFINITY && a.is_finite() => {
                    terms.base += a * count;
                    Role::Forbid
                }
                // Undefined or unreachable under the nominal law.
                _ if count == 0.0 => Role::Normal { delta: 0.0 },
                _ => return None,
            };
            match role {
                Role::Cover => or_into(&mut terms.cover, &masks.masks[y]),
                Role::Forbid => or_into(&mut terms.forbidden, &masks.masks[y]),
                Role::Normal { .. } => {}
            }
            terms.roles.push(role);
        }
        Some(terms)
    }

    /// Lexicographically smallest accepted `t`-tuple of 0-based rows.
    fn search(&self, t: usize, masks: &SymbolMasks, cb: &Codebook) -> Option<Vec<usize>> {
        if t > cb.rows() {
            return None;
        }
        let terms = self.empty_set_terms(t, masks)?;
        let tau = self.threshold(t);
        // Pruning threshold, loosened to absorb rounding in the bounds.
        let cut = tau - 1e-9 * (1.0 + tau.abs());
        let tf = t as f64;

        // Per row: positive and negative parts of its share of the ∅ score.
        let parts: Vec<(f64, f64, usize)> = (0..cb.rows())
            .filter(|&i| popcount_and(cb.row(i), &terms.forbidden) == 0)
            .map(|i| {
                let row = cb.row(i);
                let (mut pos, mut neg) = (0.0, 0.0);
                for (y, role) in terms.roles.iter().enumerate() {
                    if let Role::Normal { delta } = role {
                        if *delta > 0.0 {
                            pos += delta * popcount_and(row, &masks.masks[y]) as f64;
                        } else if *delta < 0.0 {
                            neg += delta * popcount_and(row, &masks.masks[y]) as f64;
                        }
                    }
                }
                (pos, neg, i)
            })
            .collect();
        // The OR of a tuple covers each member and at most the union of their
        // positive positions, so the ∅ score is at most one member's own score
        // plus the other members' positive parts. Every member must therefore
        // clear τ − (t − 1) max P over the surviving rows.
        let mut alive = parts;
        for _ in 0..3 {
            let pmax = alive.iter().map(|r| r.0).fold(0.0, f64::max);
            alive.retain(|r| terms.base + r.0 + r.1 + (tf - 1.0) * pmax > cut);
        }
        let pmax = alive.iter().map(|r| r.0).fold(0.0, f64::max);
        alive.sort_by(|a, b| (b.0 + b.1 / tf).total_cmp(&(a.0 + a.1 / tf)).then(a.2.cmp(&b.2)));
        let ranked: Vec<(f64, usize)> = alive.iter().map(|(pos, neg, i)| (pos + neg / tf, *i)).collect();
        let parts: Vec<(f64, f64)> = alive.iter().map(|(pos, neg, _)| (*pos, terms.base + pos + neg)).collect();
        let mut prefix = vec![0.0; ranked.len() + 1];
        for (j, (v, _)) in ranked.iter().enumerate() {
            prefix[j + 1] = prefix[j] + v;
        }

        let words = masks.valid.len();
        let packed: Vec<u64> = ranked.iter().flat_map(|(_, i)| cb.row(*i).iter().copied()).collect();
        let mut scan = Scan {
            t,
            cut,
            base: terms.base,
            pmax,
            ranked: &ranked,
            parts: &parts,
            prefix: &prefix,
            packed: &packed,
            words,
            signed: terms
                .roles
                .iter()
                .enumerate()
                .filter_map(|(y, role)| match role {
                    Role::Normal { delta } if *delta != 0.0 => Some((*delta, masks.masks[y].as_slice())),
                    _ => None,
                })
                .collect(),
            ors: vec![vec![0u64; words]; t + 1],
            chosen: Vec::with_capacity(t),
            chosen_pos: 0.0,
        };
        let mut best: Option<Vec<usize>> = None;
        let mut acc = vec![0u64; words];
        scan.dfs(0, terms.base, &mut |rows: &[usize]| {
            let mut tuple: Vec<usize> = rows.iter().map(|j| ranked[*j].1).collect();
            tuple.sort_unstable();
            if best.as_ref().is_some_and(|b| *b <= tuple) {
                return;
            }
            if self.accepts(&tuple, &terms, tau, masks, cb, &mut acc) {
                best = Some(tuple);
            }
        });
        best
    }

    /// Exact check of every proper subset condition for a sorted tuple.
    fn accepts(
        &self,
        tuple: &[usize],
        terms: &EmptySetTerms,
        tau: f64,
        masks: &SymbolMasks,
        cb: &Codebook,
        or_all: &mut [u64],
    ) -> bool {
        let t = tuple.len();
        or_all.fill(0);
        for &i in tuple {
            or_into(or_all, cb.row(i));
        }
        if terms.cover.iter().zip(or_all.iter()).any(|(c, o)| c & !o != 0) {
            return false;
        }
        let mut score = terms.base;
        for (y, role) in terms.roles.iter().enumerate() {
            if let Role::Normal { delta } = role {
                if *delta != 0.0 {
                    score += delta * popcount_and(or_all, &masks.masks[y]) as f64;
                }
            }
        }
        if !(score > tau) {
            return false;
        }
        let words = masks.valid.len();
        let mut in_j = vec![0u64; words];
        let mut rest = vec![0u64; words];
        for j in 1..(1u32 << t) - 1 {
            in_j.fill(0);
            rest.fill(0);
            for (pos, &i) in tuple.iter().enumerate() {
                if j >> pos & 1 == 1 {
                    or_into(&mut in_j, cb.row(i));
                } else {
                    or_into(&mut rest, cb.row(i));
                }
            }
            let free = t - j.count_ones() as usize;
            match self.subset_score(&self.tables[free], &in_j, &rest, masks) {
                Some(s) if s > self.threshold(free) => {}
                _ => return false,
            }
        }
        true
    }

    /// `Σ_l ı_J` where `in_j` is the OR of the conditioned rows and `rest`
    /// the OR of the others. `None` if a visited cell has density `−∞` or is
    /// undefined.
    fn subset_score(&self, table: &Table, in_j: &[u64], rest: &[u64], masks: &SymbolMasks) -> Option<f64> {
        let mut score = 0.0;
        for (y, pair) in table.iter().enumerate() {
            if masks.counts[y] == 0 {
                continue;
            }
            let my = &masks.masks[y];
            let (mut c0, mut c1) = (0u64, 0u64);
            for w in 0..my.len() {
                let open = !in_j[w] & my[w];
                c1 += (open & rest[w]).count_ones() as u64;
                c0 += (open & !rest[w]).count_ones() as u64;
            }
            for (count, value) in [(c0, pair[0]), (c1, pair[1])] {
                if count > 0 {
                    match value {
                        Some(v) if v.is_finite() => score += v * count as f64,
                        _ => return None,
                    }
                }
            }
        }
        Some(score)
    }

    /// `Σ_l ı_∅` for the given 0-based rows by direct per-query lookup.
    pub fn empty_set_score_naive(&self, y: &[Symbol], cb: &Codebook, rows: &[usize]) -> f64 {
        let table = &self.tables[rows.len()];
        (0..cb.n())
            .map(|l| {
                let z = rows.iter().any(|&i| cb.bit(i, l));
                table[y[l]][z as usize].unwrap_or(f64::NAN)
            })
            .sum()
    }

    /// `Σ_l ı_∅` for the given 0-based rows via packed popcounts.
    pub fn empty_set_score(&self, y: &[Symbol], cb: &Codebook, rows: &[usize]) -> Result<f64> {
        let masks = SymbolMasks::new(y, self.alphabet_len())?;
        let mut or_all = vec![0u64; cb.words_per_row()];
        for &i in rows {
            or_into(&mut or_all, cb.row(i));
        }
        let none = vec![0u64; cb.words_per_row()];
        Ok(self
            .subset_score(&self.tables[rows.len()], &none, &or_all, &masks)
            .unwrap_or(f64::NEG_INFINITY))
    }

    /// Two-row decomposition of the `J = ∅` score:
    /// `Σ_l ı_∅ = base + s(i) + s(j) − Σ_l w_l x_l(i) x_l(j)`, with
    /// `w_l = ı(1, y_l) − ı(0, y_l)` and `s(i) = Σ_l w_l x_l(i)`. Returns
    /// `(base, s, w)`, or `None` when some density is infinite.
    pub fn pair_decomposition(&self, y: &[Symbol], cb: &Codebook) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let table = &self.tables[2];
        let mut base = 0.0;
        let mut w = Vec::with_capacity(y.len());
        for &s in y {
            let (a, b) = (table[s][0]?, table[s][1]?);
            if !a.is_finite() || !b.is_finite() {
                return None;
            }
            base += a;
            w.push(b - a);
        }
        let s = (0..cb.rows())
            .map(|i| (0..cb.n()).filter(|&l| cb.bit(i, l)).map(|l| w[l]).sum())
            .collect();
        Some((base, s, w))
    }
}

#[inline]
fn or_into(acc: &mut [u64], row: &[u64]) {
    for (a, r) in acc.iter_mut().zip(row) {
        *a |= r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::NoiseMap;
    use crate::rng::StreamRng;
    use rand::{Rng, SeedableRng};

    fn bsc(a: f64) -> NoiseModel<f64> {
        NoiseModel::bsc(NoiseMap::constant(a).unwrap()).unwrap()
    }

    /// OR of the given rows, query by query.
    fn noiseless(cb: &Codebook, rows: &[usize]) -> Vec<Symbol> {
        (0..cb.n()).map(|l| rows.iter().any(|&i| cb.bit(i, l)) as usize).collect()
    }

    /// Exhaustive decoder: every tuple, every subset, per-query sums.
    fn brute_decode(dec: &Decoder, noise: &NoiseModel<f64>, p: f64, y: &[Symbol], cb: &Codebook) -> Option<Vec<usize>> {
        let model = OrMacModel::new(noise, p, 1).unwrap();
        for t in (1..=dec.k).rev() {
            let mut tuples: Vec<Vec<usize>> = vec![vec![]];
            for _ in 0..t {
                tuples = tuples
                    .into_iter()
                    .flat_map(|tu| {
                        let start = tu.last().map_or(0, |x| x + 1);
                        (start..cb.rows()).map(move |i| {
                            let mut v = tu.clone();
                            v.push(i);
                            v
                        })
                    })
                    .collect();
            }
            let model_t = model.with_users(t).unwrap();
            for tu in tuples {
                let ok = (0..(1u32 << t) - 1).all(|j| {
                    let mut sum = 0.0;
                    for l in 0..cb.n() {
                        let x: Vec<bool> = tu.iter().map(|&i| cb.bit(i, l)).collect();
                        match model_t.info_density(j, &x, y[l]) {
                            Ok(v) => sum += v,
                            Err(_) => return false,
                        }
                    }
                    sum > dec.threshold(t - j.count_ones() as usize)
                });
                if ok {
                    return Some(tu);
                }
            }
        }
        None
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(10, 3), 120.0);
        assert_eq!(binomial(5, 7), 0.0);
        assert_eq!(binomial(8861, 2), 8861.0 * 8860.0 / 2.0);
    }

    #[test]
    fn noiseless_recovery_of_two_targets() {
        let noise = bsc(0.0);
        let part = CubePartition::new(4, 1).unwrap();
        let cb = Codebook::generate(4, 1, 64, 0.3, 11).unwrap();
        let dec = Decoder::new(&noise, 0.3, part, 2, 1.0).unwrap();
        let y = noiseless(&cb, &[0, 2]);
        let out = dec.decode(&y, &cb).unwrap();
        assert_eq!(out.indices, vec![1, 3]);
        assert_eq!(out.centers, vec![vec![0.125], vec![0.625]]);
        assert_eq!(out.t_loop_exit, 2);
    }

    #[test]
    fn shared_cell_falls_back_to_single_estimate() {
        let noise = bsc(0.0);
        let part = CubePartition::new(4, 1).unwrap();
        let cb = Codebook::generate(4, 1, 64, 0.3, 12).unwrap();
        let dec = Decoder::new(&noise, 0.3, part, 2, 1.0).unwrap();
        let y = noiseless(&cb, &[1]);
        let out = dec.decode(&y, &cb).unwrap();
        assert_eq!(out.m, 1);
        assert_eq!(out.indices, vec![2]);
        assert_eq!(out.t_loop_exit, 1);
    }

    #[test]
    fn infinite_gamma_declares_error() {
        let part = CubePartition::new(4, 1).unwrap();
        let cb = Codebook::generate(4, 1, 64, 0.3, 1).unwrap();
        let dec = Decoder::new(&bsc(0.0), 0.3, part, 2, f64::INFINITY).unwrap();
        let out = dec.decode(&noiseless(&cb, &[0, 1]), &cb).unwrap();
        assert_eq!(out.m, 0);
        assert_eq!(out.t_loop_exit, 0);
    }

    #[test]
    fn budget_guard_reports_tuple_count() {
        let part = CubePartition::new(2000, 1).unwrap();
        let cb = Codebook::generate(2000, 1, 64, 0.3, 1).unwrap();
        let dec = Decoder::new(&bsc(0.1), 0.3, part, 3, 1.0).unwrap().with_budget(1e6);
        match dec.decode(&vec![0; 64], &cb) {
            Err(Error::Budget { t, tuples, .. }) => {
                assert_eq!(t, 3);
                assert_eq!(tuples, binomial(2000, 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pair_decomposition_matches_naive_sum() {
        let noise = NoiseModel::bsc(NoiseMap::affine(0.3, 0.1).unwrap()).unwrap();
        let part = CubePartition::new(64, 1).unwrap();
        let cb = Codebook::generate(64, 1, 200, 0.23, 5).unwrap();
        let dec = Decoder::new(&noise, 0.23, part, 2, 1.0).unwrap();
        let mut rng = StreamRng::seed_from_u64(8);
        let y: Vec<Symbol> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let (base, s, w) = dec.pair_decomposition(&y, &cb).unwrap();
        for _ in 0..1000 {
            let i = rng.random_range(0..64);
            let j = rng.random_range(0..64);
            if i == j {
                continue;
            }
            let naive = dec.empty_set_score_naive(&y, &cb, &[i, j]);
            let overlap: f64 = (0..200).filter(|&l| cb.bit(i, l) && cb.bit(j, l)).map(|l| w[l]).sum();
            let decomposed = base + s[i] + s[j] - overlap;
            let fast = dec.empty_set_score(&y, &cb, &[i, j]).unwrap();
            assert!((naive - decomposed).abs() < 1e-9);
            assert!((naive - fast).abs() < 1e-9);
        }
    }

    #[test]
    fn agrees_with_exhaustive_decoder() {
        let mut rng = StreamRng::seed_from_u64(21);
        let mut decoded = 0;
        for (alpha, bec) in [(0.1, false), (0.0, false), (0.3, true), (0.05, false)] {
            let map = NoiseMap::constant(alpha).unwrap();
            let noise = if bec { NoiseModel::bec(map).unwrap() } else { NoiseModel::bsc(map).unwrap() };
            for trial in 0..40u64 {
                let (m, k, n, p) = (5 + (trial % 3) as usize, 1 + (trial % 3) as usize, 24 + trial as usize, 0.3);
                let part = CubePartition::new(m, 1).unwrap();
                let cb = Codebook::generate(m, 1, n, p, trial).unwrap();
                let gamma = 0.5 * (n as f64).ln();
                let dec = Decoder::new(&noise, p, part, k, gamma).unwrap();
                let truth: Vec<usize> = (0..k).map(|_| rng.random_range(0..m)).collect();
                let z = noiseless(&cb, &truth);
                let y: Vec<Symbol> = z
                    .iter()
                    .map(|&b| noise.sample_output(0.5, b == 1, &mut rng).unwrap())
                    .collect();
                let fast = dec.decode(&y, &cb).unwrap();
                let brute = brute_decode(&dec, &noise, p, &y, &cb);
                let expect: Vec<usize> = brute.map(|v| v.into_iter().map(|i| i + 1).collect()).unwrap_or_default();
                assert_eq!(fast.indices, expect, "alpha={alpha} trial={trial}");
                decoded += (fast.m > 0) as usize;
            }
        }
        assert!(decoded > 40, "only {decoded} decodes succeeded");
    }
}
