use crate::error::{MopolError, Result};
use crate::pareto::WeightVector;
use crate::rng;

const BITS: usize = 32;

/// Primitive polynomial (middle coefficients) and initial direction numbers
/// for the first eight Sobol dimensions, from the Joe-Kuo tables.
const DIRECTIONS: [(u32, &[u32]); 8] = [
    (0, &[]),
    (0, &[1]),
    (1, &[1, 3]),
    (1, &[1, 3, 1]),
    (2, &[1, 1, 1]),
    (1, &[1, 1, 3, 3]),
    (4, &[1, 3, 5, 13]),
    (2, &[1, 1, 5, 5, 17]),
];

pub const MAX_DIMENSIONS: usize = DIRECTIONS.len();

fn direction_vector(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    let (a, m) = DIRECTIONS[dim];
    if m.is_empty() {
        // van der Corput
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = 1 << (31 - i);
        }
        return v;
    }
    let s = m.len();
    for i in 0..s {
        v[i] = m[i] << (31 - i);
    }
    for i in s..BITS {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 0..s - 1 {
            if (a >> (s - 2 - k)) & 1 == 1 {
                x ^= v[i - k - 1];
            }
        }
        v[i] = x;
    }
    v
}

/// Digitally shifted Sobol points in `[0, 1)^dims`.
///
/// A shift of zero gives the plain sequence starting at the origin. Any shift
/// preserves the net structure of every power-of-two prefix.
pub fn sobol_points(count: usize, dims: usize, shift_seed: Option<u64>) -> Result<Vec<Vec<f64>>> {
    if dims == 0 || dims > MAX_DIMENSIONS {
        return Err(MopolError::invalid(format!(
            "Sobol dimension {dims} outside 1..={MAX_DIMENSIONS}"
        )));
    }
    if count as u64 > 1 << BITS {
        return Err(MopolError::invalid("too many Sobol points requested"));
    }
    let dirs: Vec<[u32; BITS]> = (0..dims).map(direction_vector).collect();
    let shifts: Vec<u32> = (0..dims)
        .map(|j| shift_seed.map_or(0, |s| rng::derive_seed(s, &[0x534f_424c, j as u64]) as u32))
        .collect();
    let scale = 1.0 / (1u64 << BITS) as f64;
    Ok((0..count as u64)
        .map(|i| {
            let gray = i ^ (i >> 1);
            (0..dims)
                .map(|j| {
                    let mut x = 0u32;
                    for (bit, v) in dirs[j].iter().enumerate() {
                        if (gray >> bit) & 1 == 1 {
                            x ^= v;
                        }
                    }
                    f64::from(x ^ shifts[j]) * scale
                })
                .collect()
        })
        .collect())
}

/// Map a unit-cube point onto the simplex through sorted spacings, which
/// carries the uniform distribution on the cube to the uniform one on the simplex.
pub fn cube_to_simplex(u: &[f64]) -> Result<WeightVector> {
    let mut s = u.to_vec();
    s.sort_by(f64::total_cmp);
    let mut coords = Vec::with_capacity(s.len());
    let mut prev = 0.0;
    for v in s {
        coords.push(v - prev);
        prev = v;
    }
    WeightVector::from_coords(&coords)
}

/// `2 (n_outcomes + 1)` initial weight vectors from a shifted Sobol sequence
/// over the simplex coordinates.
pub fn sobol_init(n_outcomes: usize, seed: u64) -> Result<Vec<WeightVector>> {
    if n_outcomes < 2 {
        return Err(MopolError::invalid("at least two outcomes are required"));
    }
    let dims = n_outcomes - 1;
    sobol_points(2 * (n_outcomes + 1), dims, Some(seed))?
        .iter()
        .map(|u| cube_to_simplex(u))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(sobol_init(2, 0).unwrap().len(), 6);
        assert_eq!(sobol_init(3, 0).unwrap().len(), 8);
        assert!(sobol_init(1, 0).is_err());
        assert!(sobol_init(MAX_DIMENSIONS + 2, 0).is_err());
    }

    #[test]
    fn points_lie_on_the_simplex() {
        for n_y in 2..=MAX_DIMENSIONS + 1 {
            for w in sobol_init(n_y, 7).unwrap() {
                assert_eq!(w.len(), n_y);
                assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(w.as_slice().iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn plain_sequence_prefix() {
        let pts = sobol_points(4, 2, None).unwrap();
        let expect = [[0.0, 0.0], [0.5, 0.5], [0.75, 0.25], [0.25, 0.75]];
        for (p, e) in pts.iter().zip(expect) {
            assert_eq!(p.as_slice(), e.as_slice());
        }
    }

    #[test]
    fn prefixes_are_nets_in_every_pair_of_leading_dimensions() {
        // each dimension alone stratifies [0,1) into 2^m cells, one point per cell
        for shift in [None, Some(3)] {
            let m = 8;
            let pts = sobol_points(1 << m, MAX_DIMENSIONS, shift).unwrap();
            for j in 0..MAX_DIMENSIONS {
                let mut cells = vec![0; 1 << m];
                for p in &pts {
                    cells[(p[j] * f64::from(1 << m)) as usize] += 1;
                }
                assert!(cells.iter().all(|&c| c == 1), "dim {j}");
            }
            // dims 0 and 1 form a (0, m, 2)-net: every elementary box holds one point
            for a in 0..=m {
                let b = m - a;
                let mut cells = vec![0; 1 << m];
                for p in &pts {
                    let i = (p[0] * f64::from(1 << a)) as usize;
                    let k = (p[1] * f64::from(1 << b)) as usize;
                    cells[(i << b) | k] += 1;
                }
                assert!(cells.iter().all(|&c| c == 1), "a={a}");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(sobol_init(3, 5).unwrap(), sobol_init(3, 5).unwrap());
        assert_ne!(sobol_init(3, 5).unwrap(), sobol_init(3, 6).unwrap());
    }
}
