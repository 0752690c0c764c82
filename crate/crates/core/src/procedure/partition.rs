use crate::error::{Error, Result};

/// Partition of `[0,1]^d` into `M^d` equal sub-cubes, indexed `1..=M^d`
/// with the first coordinate most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CubePartition {
    m: usize,
    d: usize,
    cells: usize,
}

impl CubePartition {
    pub fn new(m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::contract("M and d must be positive"));
        }
        let cells = u32::try_from(m)
            .ok()
            .and_then(|m| m.checked_pow(u32::try_from(d).ok()?))
            .ok_or_else(|| Error::contract(format!("M^d = {m}^{d} does not fit in 32 bits")))?;
        Ok(CubePartition { m, d, cells: cells as usize })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `M^d`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// `Γ(i_1, …, i_d) = 1 + Σ_j (i_j − 1) M^{d−j}`.
    pub fn gamma_index(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.d {
            return Err(Error::contract(format!("expected {} coordinates, got {}", self.d, coords.len())));
        }
        let mut idx = 0;
        for &c in coords {
            if c == 0 || c > self.m {
                return Err(Error::contract(format!("coordinate {c} outside [1, {}]", self.m)));
            }
            idx = idx * self.m + (c - 1);
        }
        Ok(idx + 1)
    }

    pub fn gamma_inverse(&self, i: usize) -> Result<Vec<usize>> {
        if i == 0 || i > self.cells {
            return Err(Error::contract(format!("cell index {i} outside [1, {}]", self.cells)));
        }
        let mut rest = i - 1;
        let mut coords = vec![0; self.d];
        for c in coords.iter_mut().rev() {
            *c = rest % self.m + 1;
            rest /= self.m;
        }
        Ok(coords)
    }

    /// Cell containing `point`; coordinates are clamped into `[0,1]`.
    pub fn cell_of(&self, point: &[f64]) -> Result<usize> {
        let coords: Vec<usize> = point.iter().map(|s| quantize(*s, self.m)).collect();
        self.gamma_index(&coords)
    }

    /// Center of cell `i`: `(2w − 1) / (2M)` per coordinate.
    pub fn center(&self, i: usize) -> Result<Vec<f64>> {
        let two_m = 2.0 * self.m as f64;
        Ok(self
            .gamma_inverse(i)?
            .into_iter()
            .map(|w| (2 * w - 1) as f64 / two_m)
            .collect())
    }
}

/// `⌈sM⌉` with `q(0) = 1`; intervals are closed on the left except the last.
pub fn quantize(s: f64, m: usize) -> usize {
    let s = s.clamp(0.0, 1.0);
    ((s * m as f64).ceil() as usize).clamp(1, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_examples() {
        let p = CubePartition::new(3, 2).unwrap();
        assert_eq!(p.gamma_index(&[1, 1]).unwrap(), 1);
        assert_eq!(p.gamma_index(&[2, 3]).unwrap(), 6);
        assert_eq!(p.gamma_index(&[3, 3]).unwrap(), 9);
        for i in 1..=9 {
            assert_eq!(p.gamma_index(&p.gamma_inverse(i).unwrap()).unwrap(), i);
        }
        assert!(p.gamma_index(&[0, 1]).is_err());
        assert!(p.gamma_index(&[4, 1]).is_err());
        assert!(p.gamma_inverse(10).is_err());
        assert!(p.gamma_inverse(0).is_err());
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.3, 4), 2);
        assert_eq!(quantize(1.0, 4), 4);
        assert_eq!(quantize(0.0, 4), 1);
        assert_eq!(quantize(0.25, 4), 1);
        assert_eq!(quantize(0.2500001, 4), 2);
    }

    #[test]
    fn centers_lie_in_their_cells() {
        let p = CubePartition::new(5, 3).unwrap();
        for i in 1..=p.cells() {
            let c = p.center(i).unwrap();
            assert_eq!(p.cell_of(&c).unwrap(), i);
        }
    }

    #[test]
    fn rejects_oversized_partitions() {
        assert!(CubePartition::new(1 << 16, 3).is_err());
        assert!(CubePartition::new(0, 1).is_err());
    }
}
