//! Unscrambled Sobol low-discrepancy sequence.
//!
//! Direction numbers are the Joe & Kuo `new-joe-kuo-6.21201` set, truncated
//! to the first 1024 dimensions and embedded from
//! `data/new-joe-kuo-6.21201.dims-1024.txt`. Points are generated in Gray
//! code order with 32-bit precision, so the sequence matches the standard
//! reference generators bit for bit.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const BITS: usize = 32;
const TABLE: &str = include_str!("../data/new-joe-kuo-6.21201.dims-1024.txt");

/// Largest supported dimension.
pub const MAX_DIM: usize = 1024;

fn directions() -> &'static [[u32; BITS]] {
    static DIRS: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    DIRS.get_or_init(|| {
        let mut dirs = Vec::with_capacity(MAX_DIM);
        // First dimension: van der Corput in base 2.
        let mut first = [0u32; BITS];
        for (c, v) in first.iter_mut().enumerate() {
            *v = 1 << (31 - c);
        }
        dirs.push(first);

        for line in TABLE.lines().skip(1) {
            let nums: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse().expect("direction table is well formed"))
                .collect();
            let (s, a, m) = (nums[1] as usize, nums[2], &nums[3..]);
            debug_assert_eq!(m.len(), s);
            let mut v = [0u32; BITS];
            for c in 0..s.min(BITS) {
                v[c] = m[c] << (31 - c);
            }
            for c in s..BITS {
                let mut x = v[c - s] ^ (v[c - s] >> s);
                for j in 1..s {
                    if (a >> (s - 1 - j)) & 1 == 1 {
                        x ^= v[c - j];
                    }
                }
                v[c] = x;
            }
            dirs.push(v);
        }
        debug_assert_eq!(dirs.len(), MAX_DIM);
        dirs
    })
}

/// Incremental Sobol generator over `dim` dimensions.
#[derive(Debug, Clone)]
pub struct Sobol {
    dim: usize,
    index: u64,
    state: Vec<u32>,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("Sobol dimension must be at least 1".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::Capability(format!(
                "Sobol dimension {dim} exceeds the direction-number table (maximum {MAX_DIM})"
            )));
        }
        Ok(Sobol {
            dim,
            index: 0,
            state: vec![0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Jump so that the next point returned has sequence index `index`.
    pub fn seek(&mut self, index: u64) -> Result<()> {
        if index >= 1 << BITS {
            return Err(Error::Capability(format!(
                "Sobol index {index} exceeds 2^{BITS}"
            )));
        }
        let gray = index ^ (index >> 1);
        let dirs = directions();
        for (d, s) in self.state.iter_mut().enumerate() {
            *s = (0..BITS)
                .filter(|&c| (gray >> c) & 1 == 1)
                .fold(0, |acc, c| acc ^ dirs[d][c]);
        }
        self.index = index;
        Ok(())
    }

    /// Next point as raw 32-bit integers (value = integer / 2^32).
    pub fn next_raw(&mut self) -> Result<Vec<u32>> {
        if self.index >= 1 << BITS {
            return Err(Error::Capability(format!(
                "Sobol sequence exhausted after 2^{BITS} points"
            )));
        }
        let out = self.state.clone();
        let c = (!self.index).trailing_zeros() as usize;
        if c < BITS {
            let dirs = directions();
            for (d, s) in self.state.iter_mut().enumerate() {
                *s ^= dirs[d][c];
            }
        }
        self.index += 1;
        Ok(out)
    }

    pub fn next_point(&mut self) -> Result<Vec<f64>> {
        const SCALE: f64 = 1.0 / (1u64 << BITS) as f64;
        Ok(self
            .next_raw()?
            .into_iter()
            .map(|x| x as f64 * SCALE)
            .collect())
    }
}

/// The first `n` points of the `dim`-dimensional sequence after skipping
/// `skip` points. Every coordinate lies in `[0, 1)`.
pub fn sobol_sequence(dim: usize, n: usize, skip: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Config("Sobol sample size must be at least 1".into()));
    }
    let mut gen = Sobol::new(dim)?;
    gen.seek(skip)?;
    (0..n).map(|_| gen.next_point()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(dim: usize, n: usize, skip: u64) -> Vec<Vec<u32>> {
        let mut g = Sobol::new(dim).unwrap();
        g.seek(skip).unwrap();
        (0..n).map(|_| g.next_raw().unwrap()).collect()
    }

    #[test]
    fn origin_then_half() {
        let pts = sobol_sequence(2, 4, 0).unwrap();
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(sobol_sequence(3, 1, 1).unwrap()[0], vec![0.5, 0.5, 0.5]);
    }

    // Reference values from scipy.stats.qmc.Sobol(scramble=False, bits=32),
    // which uses the same Joe & Kuo direction numbers.
    #[test]
    fn matches_reference_generator() {
        let expected: [[u32; 5]; 8] = [
            [0, 0, 0, 0, 0],
            [2147483648, 2147483648, 2147483648, 2147483648, 2147483648],
            [3221225472, 1073741824, 1073741824, 1073741824, 3221225472],
            [1073741824, 3221225472, 3221225472, 3221225472, 1073741824],
            [1610612736, 1610612736, 2684354560, 3758096384, 1610612736],
            [3758096384, 3758096384, 536870912, 1610612736, 3758096384],
            [2684354560, 536870912, 3758096384, 2684354560, 2684354560],
            [536870912, 2684354560, 1610612736, 536870912, 536870912],
        ];
        let got = raw(5, 8, 0);
        for (row, want) in got.iter().zip(expected.iter()) {
            assert_eq!(row.as_slice(), want.as_slice());
        }

        let p = &raw(64, 1, 1000)[0];
        assert_eq!(
            [p[0], p[1], p[31], p[62], p[63]],
            [943718400, 415236096, 624951296, 1111490560, 1916796928]
        );
        let p = &raw(1024, 1, 299)[0];
        assert_eq!(
            [p[0], p[500], p[1022], p[1023]],
            [2105540608, 2709520384, 293601280, 310378496]
        );
    }

    #[test]
    fn seek_agrees_with_stepping() {
        let stepped = raw(7, 40, 0);
        for skip in [1u64, 5, 17, 32, 39] {
            assert_eq!(raw(7, 1, skip)[0], stepped[skip as usize]);
        }
    }

    #[test]
    fn dimension_limits() {
        assert!(matches!(Sobol::new(0), Err(Error::Config(_))));
        match Sobol::new(MAX_DIM + 1) {
            Err(Error::Capability(msg)) => assert!(msg.contains("1024")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unit_interval_and_stratification() {
        // Each 1-D projection of the first 2^m points hits every dyadic cell once.
        let pts = sobol_sequence(16, 256, 0).unwrap();
        for d in 0..16 {
            let mut cells = vec![0; 256];
            for p in &pts {
                assert!((0.0..1.0).contains(&p[d]));
                cells[(p[d] * 256.0) as usize] += 1;
            }
            assert!(cells.iter().all(|&c| c == 1), "dimension {d}");
        }
    }
}
