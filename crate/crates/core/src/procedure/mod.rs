//! The non-adaptive query procedure: partition the cube, draw a random
//! codebook whose columns define the queries, answer them through the noisy
//! channel, and decode with the threshold tuple decoder.

mod codebook;
mod decoder;
mod partition;

pub use codebook::{tail_mask, words_for, BernoulliWords, Codebook, DEFAULT_MEMORY_CAP, FORMAT_VERSION, MAGIC};
pub use decoder::{binomial, DecodeOutput, Decoder, SymbolMasks, DEFAULT_BUDGET};
pub use partition::{quantize, CubePartition};

use rand::Rng;

use crate::channels::{NoiseModel, Symbol};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use rand::SeedableRng;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiselessAnswers {
    /// `z_l`: whether query `l` contains any target.
    pub z: Vec<bool>,
    /// Distinct occupied cells, 1-based and increasing.
    pub cells: Vec<usize>,
    /// Number of distinct occupied cells.
    pub k_p: usize,
}

/// Quantizes the targets and ORs the codebook rows of the occupied cells.
pub fn oracle_noiseless(targets: &[Vec<f64>], cb: &Codebook) -> Result<NoiselessAnswers> {
    let part = CubePartition::new(cb.m(), cb.d())?;
    let mut cells = targets.iter().map(|s| part.cell_of(s)).collect::<Result<Vec<_>>>()?;
    cells.sort_unstable();
    cells.dedup();
    let mut acc = vec![0u64; cb.words_per_row()];
    for &c in &cells {
        for (a, r) in acc.iter_mut().zip(cb.row(c - 1)) {
            *a |= r;
        }
    }
    let z = (0..cb.n()).map(|l| acc[l / 64] >> (l % 64) & 1 == 1).collect();
    Ok(NoiselessAnswers { z, k_p: cells.len(), cells })
}

/// Passes `z` through the channel with query-dependent noise: query `l` uses
/// noise level `f(q_l)` at its realized size `q_l`.
pub fn apply_noise_with<R: Rng + ?Sized>(
    z: &[bool],
    sizes: &[f64],
    noise: &NoiseModel<f64>,
    rng: &mut R,
) -> Result<Vec<Symbol>> {
    if z.len() != sizes.len() {
        return Err(Error::contract("answer and query-size lengths differ"));
    }
    z.iter()
        .zip(sizes)
        .map(|(&b, &q)| noise.sample_output(q, b, rng))
        .collect()
}

pub fn apply_noise(z: &[bool], cb: &Codebook, noise: &NoiseModel<f64>, seed: u64) -> Result<Vec<Symbol>> {
    let mut rng = StreamRng::seed_from_u64(seed);
    apply_noise_with(z, &cb.column_densities(), noise, &mut rng)
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Symmetric `L∞` Hausdorff distance between targets and estimates; `+∞`
/// when there are no estimates.
pub fn achieved_resolution(targets: &[Vec<f64>], estimates: &[Vec<f64>]) -> f64 {
    if estimates.is_empty() || targets.is_empty() {
        return f64::INFINITY;
    }
    let directed = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        from.iter()
            .map(|a| to.iter().map(|b| linf(a, b)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(targets, estimates).max(directed(estimates, targets))
}

/// `(excess, rho)`: whether the estimates miss resolution `delta`, and the
/// achieved resolution.
pub fn run_resolution(targets: &[Vec<f64>], out: &DecodeOutput, delta: f64) -> (bool, f64) {
    let rho = achieved_resolution(targets, &out.centers);
    (rho > delta, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::NoiseMap;
    use proptest::prelude::*;

    fn bsc(a: f64, b: f64) -> NoiseModel<f64> {
        NoiseModel::bsc(NoiseMap::affine(a, b).unwrap()).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let cb = Codebook::generate(2, 1, 50, 0.5, 3).unwrap();
        let ans = oracle_noiseless(&[vec![0.2], vec![0.8]], &cb).unwrap();
        assert_eq!(ans.cells, vec![1, 2]);
        assert_eq!(ans.k_p, 2);
        for l in 0..50 {
            assert_eq!(ans.z[l], cb.bit(0, l) || cb.bit(1, l));
        }
        let same = oracle_noiseless(&[vec![0.1], vec![0.2]], &cb).unwrap();
        assert_eq!(same.k_p, 1);

        let zero = Codebook::generate(4, 2, 70, 0.0, 3).unwrap();
        let ans = oracle_noiseless(&[vec![0.3, 0.9], vec![0.6, 0.1]], &zero).unwrap();
        assert!(ans.z.iter().all(|b| !b));
    }

    #[test]
    fn noiseless_channel_passes_answers() {
        let cb = Codebook::generate(8, 1, 300, 0.4, 3).unwrap();
        let ans = oracle_noiseless(&[vec![0.3]], &cb).unwrap();
        let y = apply_noise(&ans.z, &cb, &bsc(0.0, 0.0), 9).unwrap();
        assert!(ans.z.iter().zip(&y).all(|(z, y)| *z as usize == *y));
    }

    #[test]
    fn constant_noise_flip_rate() {
        let n = 100_000;
        let z = vec![false; n];
        let sizes = vec![0.4; n];
        let mut rng = StreamRng::seed_from_u64(4);
        let y = apply_noise_with(&z, &sizes, &bsc(0.2, 0.0), &mut rng).unwrap();
        let rate = y.iter().filter(|s| **s == 1).count() as f64 / n as f64;
        assert!((rate - 0.2).abs() < 4.0 * (0.16f64 / n as f64).sqrt());
    }

    #[test]
    fn flip_probability_follows_query_size() {
        let noise = bsc(0.3, 0.1);
        assert!((noise.transition_prob(0.5, true, 0).unwrap() - 0.35).abs() < 1e-15);
        let n = 100_000;
        let mut rng = StreamRng::seed_from_u64(5);
        let y = apply_noise_with(&vec![true; n], &vec![0.5; n], &noise, &mut rng).unwrap();
        let rate = y.iter().filter(|s| **s == 0).count() as f64 / n as f64;
        assert!((rate - 0.35).abs() < 4.0 * (0.35f64 * 0.65 / n as f64).sqrt());
    }

    #[test]
    fn resolution_examples() {
        let part = CubePartition::new(10, 1).unwrap();
        let targets = vec![vec![0.13], vec![0.77]];
        let centers: Vec<Vec<f64>> = targets.iter().map(|s| part.center(part.cell_of(s).unwrap()).unwrap()).collect();
        let out = DecodeOutput { m: 2, indices: vec![2, 8], centers, t_loop_exit: 2 };
        let (excess, rho) = run_resolution(&targets, &out, 0.1);
        assert!(!excess && rho <= 0.05 + 1e-15);

        let empty = DecodeOutput { m: 0, indices: vec![], centers: vec![], t_loop_exit: 0 };
        let (excess, rho) = run_resolution(&targets, &empty, 1e9);
        assert!(excess && rho.is_infinite());

        let one = DecodeOutput { m: 1, indices: vec![2], centers: vec![vec![0.12]], t_loop_exit: 1 };
        let (_, rho) = run_resolution(&[vec![0.1], vec![0.9]], &one, 0.1);
        assert!((rho - 0.78).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn norm_sandwich(v in proptest::collection::vec(-1.0f64..1.0, 1..8)) {
            let inf = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let two = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(inf <= two + 1e-15);
            prop_assert!(two <= (v.len() as f64).sqrt() * inf + 1e-15);
        }

        #[test]
        fn resolution_is_symmetric(a in proptest::collection::vec(0.0f64..1.0, 1..4), b in proptest::collection::vec(0.0f64..1.0, 1..4)) {
            let ta: Vec<Vec<f64>> = a.iter().map(|x| vec![*x]).collect();
            let tb: Vec<Vec<f64>> = b.iter().map(|x| vec![*x]).collect();
            prop_assert_eq!(achieved_resolution(&ta, &tb), achieved_resolution(&tb, &ta));
        }
    }
}
