//! Sobol low-discrepancy points with Joe–Kuo direction numbers (up to 21
//! dimensions), generated in Gray-code order.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 21;
const BITS: usize = 32;

// primitive polynomials with leading and trailing bits, then initial m_j
const POLY: [u32; MAX_DIM] = [
    1, 3, 7, 11, 13, 19, 25, 37, 41, 47, 55, 59, 61, 67, 91, 97, 103, 109, 115, 131, 137,
];
const VINIT: [[u32; 7]; MAX_DIM] = [
    [1, 0, 0, 0, 0, 0, 0],
    [1, 0, 0, 0, 0, 0, 0],
    [1, 3, 0, 0, 0, 0, 0],
    [1, 3, 1, 0, 0, 0, 0],
    [1, 1, 1, 0, 0, 0, 0],
    [1, 1, 3, 3, 0, 0, 0],
    [1, 3, 5, 13, 0, 0, 0],
    [1, 1, 5, 5, 17, 0, 0],
    [1, 1, 5, 5, 5, 0, 0],
    [1, 1, 7, 11, 19, 0, 0],
    [1, 1, 5, 1, 1, 0, 0],
    [1, 1, 1, 3, 11, 0, 0],
    [1, 3, 5, 5, 31, 0, 0],
    [1, 3, 3, 9, 7, 49, 0],
    [1, 1, 1, 15, 21, 21, 0],
    [1, 3, 1, 13, 27, 49, 0],
    [1, 1, 1, 15, 7, 5, 0],
    [1, 3, 1, 15, 13, 25, 0],
    [1, 1, 5, 5, 19, 61, 0],
    [1, 3, 7, 11, 23, 15, 103],
    [1, 3, 7, 13, 13, 15, 69],
];

/// Stateful generator; the first point returned is index 1 (index 0 is the
/// origin and is skipped).
#[derive(Debug, Clone)]
pub struct SobolGenerator {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl SobolGenerator {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::pre(format!("Sobol dimension must lie in 1..={MAX_DIM}, got {dim}")));
        }
        let directions = (0..dim).map(direction_numbers).collect();
        Ok(Self { directions, state: vec![0; dim], index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Index of the point most recently returned.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Next point in `[0, 1)^D`.
    pub fn next_point(&mut self) -> Vec<f64> {
        // Gray code: flip the direction at the lowest zero bit of the old index
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < BITS, "Sobol sequence exhausted");
        self.index += 1;
        for (s, v) in self.state.iter_mut().zip(&self.directions) {
            *s ^= v[c];
        }
        self.state.iter().map(|&s| s as f64 / 2f64.powi(BITS as i32)).collect()
    }
}

fn direction_numbers(d: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if d == 0 {
        for (j, vj) in v.iter_mut().enumerate() {
            *vj = 1 << (BITS - 1 - j);
        }
        return v;
    }
    let p = POLY[d];
    let s = (32 - p.leading_zeros() - 1) as usize;
    for j in 0..s {
        v[j] = VINIT[d][j] << (BITS - 1 - j);
    }
    for j in s..BITS {
        let mut x = v[j - s] ^ (v[j - s] >> s);
        for k in 1..s {
            if (p >> (s - k)) & 1 == 1 {
                x ^= v[j - k];
            }
        }
        v[j] = x;
    }
    v
}

/// The first `n` Sobol points (indices 1..=n) in the unit cube.
pub fn sobol_unit(dim: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::pre("need at least one Sobol point"));
    }
    let mut g = SobolGenerator::new(dim)?;
    Ok((0..n).map(|_| g.next_point()).collect())
}

/// The first `n` Sobol points mapped affinely onto `[-1, 1]^D`.
pub fn sobol_points(dim: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    Ok(sobol_unit(dim, n)?
        .into_iter()
        .map(|p| p.into_iter().map(|u| 2.0 * u - 1.0).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points() {
        let p = sobol_unit(2, 3).unwrap();
        assert_eq!(p, vec![vec![0.5, 0.5], vec![0.75, 0.25], vec![0.25, 0.75]]);
        assert_eq!(sobol_unit(4, 1).unwrap(), vec![vec![0.5; 4]]);
    }

    #[test]
    fn mapped_cube() {
        let p = sobol_points(3, 2).unwrap();
        assert_eq!(p[0], vec![0.0; 3]);
        assert_eq!(p[1], vec![0.5, -0.5, -0.5]);
    }

    #[test]
    fn dimension_bounds() {
        assert!(SobolGenerator::new(0).is_err());
        assert!(SobolGenerator::new(22).is_err());
        assert!(SobolGenerator::new(21).is_ok());
    }

    #[test]
    fn one_dimension_is_van_der_corput_permutation() {
        let mut p: Vec<f64> = sobol_unit(1, 63).unwrap().into_iter().map(|v| v[0]).collect();
        p.sort_by(f64::total_cmp);
        for (i, v) in p.iter().enumerate() {
            assert_eq!(*v, (i + 1) as f64 / 64.0);
        }
    }
}
