use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const MAGIC: &[u8; 4] = b"TQCB";
pub const FORMAT_VERSION: u32 = 1;
/// Default ceiling on packed codebook storage.
pub const DEFAULT_MEMORY_CAP: u64 = 1 << 30;

/// `M^d` binary rows of length `n`, each packed into `⌈n/64⌉` words with
/// query `l` at bit `l % 64` of word `l / 64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    n: usize,
    m: usize,
    d: usize,
    rows: usize,
    words: usize,
    bits: Vec<u64>,
    p: f64,
    seed: u64,
}

/// `⌈n / 64⌉`.
pub fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

/// Mask of the valid bits in the last word of a row.
pub fn tail_mask(n: usize) -> u64 {
    match n % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl Codebook {
    pub fn generate(m: usize, d: usize, n: usize, p: f64, seed: u64) -> Result<Self> {
        Self::generate_with_cap(m, d, n, p, seed, DEFAULT_MEMORY_CAP)
    }

    /// i.i.d. Bern(p) bits from a stream seeded with `seed`.
    pub fn generate_with_cap(m: usize, d: usize, n: usize, p: f64, seed: u64, cap: u64) -> Result<Self> {
        let mut rng = StreamRng::seed_from_u64(seed);
        Self::generate_from_rng(m, d, n, p, seed, cap, &mut rng)
    }

    pub fn generate_from_rng<R: Rng + ?Sized>(
        m: usize,
        d: usize,
        n: usize,
        p: f64,
        seed: u64,
        cap: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain { what: "p", value: p });
        }
        if n == 0 {
            return Err(Error::contract("codebook needs at least one query"));
        }
        let rows = super::CubePartition::new(m, d)?.cells();
        let words = words_for(n);
        let required = (rows as u64).saturating_mul(words as u64).saturating_mul(8);
        if required > cap {
            return Err(Error::Resource { required, cap });
        }
        let sampler = BernoulliWords::new(p);
        let tail = tail_mask(n);
        let mut bits = vec![0u64; rows * words];
        for row in bits.chunks_exact_mut(words) {
            for w in row.iter_mut() {
                *w = sampler.sample(rng);
            }
            if let Some(last) = row.last_mut() {
                *last &= tail;
            }
        }
        Ok(Codebook { n, m, d, rows, words, bits, p, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `M^d`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn words_per_row(&self) -> usize {
        self.words
    }

    /// Packed row for cell `i` (0-based).
    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// `x_l(i)` for 0-based row `i` and query `l`.
    #[inline]
    pub fn bit(&self, i: usize, l: usize) -> bool {
        self.row(i)[l / 64] >> (l % 64) & 1 == 1
    }

    /// Number of ones in each column.
    pub fn column_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n];
        for i in 0..self.rows {
            for (wi, w) in self.row(i).iter().enumerate() {
                let mut w = *w;
                while w != 0 {
                    counts[wi * 64 + w.trailing_zeros() as usize] += 1;
                    w &= w - 1;
                }
            }
        }
        counts
    }

    /// Realized query sizes `|A_l| = q_l`: fraction of sub-cubes in query `l`.
    pub fn column_densities(&self) -> Vec<f64> {
        let rows = self.rows as f64;
        self.column_counts().into_iter().map(|c| c as f64 / rows).collect()
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(MAGIC)?;
        write(&FORMAT_VERSION.to_le_bytes())?;
        write(&(self.m as u32).to_le_bytes())?;
        write(&(self.d as u32).to_le_bytes())?;
        write(&(self.n as u64).to_le_bytes())?;
        write(&self.p.to_le_bytes())?;
        write(&self.seed.to_le_bytes())?;
        for word in &self.bits {
            write(&word.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn import(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut read = |len: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            Ok(buf)
        };
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
        let head = read(40)?;
        if &head[0..4] != MAGIC {
            return Err(Error::contract(format!("{}: not a codebook file", path.display())));
        }
        let version = u32_at(&head[4..8]);
        if version != FORMAT_VERSION {
            return Err(Error::contract(format!("{}: unsupported codebook version {version}", path.display())));
        }
        let m = u32_at(&head[8..12]) as usize;
        let d = u32_at(&head[12..16]) as usize;
        let n = u64_at(&head[16..24]) as usize;
        let p = f64::from_le_bytes(head[24..32].try_into().unwrap());
        let seed = u64_at(&head[32..40]);
        let rows = super::CubePartition::new(m, d)?.cells();
        let words = words_for(n);
        let body = read(rows * words * 8)?;
        let bits: Vec<u64> = body.chunks_exact(8).map(u64_at).collect();
        let tail = tail_mask(n);
        if words > 0 && bits.chunks_exact(words).any(|row| row[words - 1] & !tail != 0) {
            return Err(Error::contract(format!("{}: padding bits are set", path.display())));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::contract(format!("{}: trailing bytes after codebook", path.display())));
        }
        Ok(Codebook { n, m, d, rows, words, bits, p, seed })
    }
}

/// Draws 64 Bernoulli bits at once. `p` is rounded to a multiple of 2^-32;
/// each output bit equals `u < p` for an independent 32-bit uniform `u`,
/// built one binary digit of `p` at a time from the least significant.
#[derive(Clone, Copy, Debug)]
pub struct BernoulliWords {
    threshold: u64,
}

impl BernoulliWords {
    pub fn new(p: f64) -> Self {
        BernoulliWords { threshold: (p.clamp(0.0, 1.0) * 4_294_967_296.0).round() as u64 }
    }

    /// Probability actually sampled.
    pub fn effective_p(&self) -> f64 {
        self.threshold as f64 / 4_294_967_296.0
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.threshold {
            0 => 0,
            t if t >= 1 << 32 => u64::MAX,
            t => {
                let mut acc = 0u64;
                for j in t.trailing_zeros()..32 {
                    let r: u64 = rng.random();
                    acc = if t >> j & 1 == 1 { acc | r } else { acc & r };
                }
                acc
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_parameters() {
        let zero = Codebook::generate(4, 2, 100, 0.0, 1).unwrap();
        assert!(zero.column_densities().iter().all(|q| *q == 0.0));
        let one = Codebook::generate(4, 2, 100, 1.0, 1).unwrap();
        assert!(one.column_densities().iter().all(|q| *q == 1.0));
        assert_eq!(one.row(3)[1], tail_mask(100));
    }

    #[test]
    fn column_density_concentrates() {
        let cb = Codebook::generate(1024, 1, 256, 0.3, 9).unwrap();
        let q = cb.column_densities();
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        assert!((mean - 0.3).abs() < 0.01);
    }

    #[test]
    fn bernoulli_words_frequency() {
        let mut rng = StreamRng::seed_from_u64(3);
        for p in [0.013, 0.23, 0.5, 0.77] {
            let s = BernoulliWords::new(p);
            let draws = 20_000;
            let ones: u32 = (0..draws).map(|_| s.sample(&mut rng).count_ones()).sum();
            let trials = draws as f64 * 64.0;
            let sigma = (p * (1.0 - p) / trials).sqrt();
            assert!((ones as f64 / trials - p).abs() < 4.0 * sigma, "p = {p}");
        }
    }

    #[test]
    fn bernoulli_bits_are_pairwise_independent() {
        // Adjacent bits of one word must not be correlated.
        let mut rng = StreamRng::seed_from_u64(5);
        let s = BernoulliWords::new(0.3);
        let draws = 50_000;
        let both: u32 = (0..draws).map(|_| {
            let w = s.sample(&mut rng);
            (w & (w >> 1) & 0x5555_5555_5555_5555).count_ones()
        }).sum();
        let trials = draws as f64 * 32.0;
        let sigma = (0.09 * 0.91 / trials).sqrt();
        assert!((both as f64 / trials - 0.09).abs() < 4.0 * sigma);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Codebook::generate(8, 1, 130, 0.4, 77).unwrap();
        let b = Codebook::generate(8, 1, 130, 0.4, 77).unwrap();
        let c = Codebook::generate(8, 1, 130, 0.4, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn memory_cap_reports_size() {
        let err = Codebook::generate_with_cap(1000, 2, 640, 0.5, 1, 1 << 20).unwrap_err();
        match err {
            Error::Resource { required, cap } => {
                assert_eq!(required, 1_000_000 * 10 * 8);
                assert_eq!(cap, 1 << 20);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn export_import_round_trip() {
        let cb = Codebook::generate(5, 2, 70, 0.35, 123).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.bin");
        cb.export(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"TQCB");
        assert_eq!(bytes.len(), 40 + 25 * 2 * 8);
        assert_eq!(Codebook::import(&path).unwrap(), cb);

        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(Codebook::import(&path).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(Codebook::import(&path).is_err());
    }
}
