//! Seeded generators for test spaces, weights and symbols.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::SpaceModel;

/// A recipe for a generated space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpaceGenerator {
    /// Points `0..size` on a line with `d = |i - j|`.
    #[serde(rename = "grid-1d")]
    Grid1d { size: usize },
    /// `size` points filled row by row into a square lattice, Euclidean distance.
    #[serde(rename = "grid-2d")]
    Grid2d { size: usize },
    /// Uniform points in the unit cube of dimension `dim`.
    RandomCloud {
        size: usize,
        seed: u64,
        #[serde(default = "default_dim")]
        dim: usize,
        /// Masses drawn from `[0.5, 1.5]` instead of all ones.
        #[serde(default)]
        random_mass: bool,
    },
    /// Points on a line with `d = |i - j|^(1 + epsilon)`.
    Snowflake { size: usize, epsilon: f64 },
    /// Leaves of a binary trie: `d(i, j) = 2^h` where `h` is the bit length of `i xor j`.
    Tree { size: usize },
}

fn default_dim() -> usize {
    2
}

impl SpaceGenerator {
    pub fn size(&self) -> usize {
        match *self {
            SpaceGenerator::Grid1d { size }
            | SpaceGenerator::Grid2d { size }
            | SpaceGenerator::RandomCloud { size, .. }
            | SpaceGenerator::Snowflake { size, .. }
            | SpaceGenerator::Tree { size } => size,
        }
    }

    /// Parses `kind:size` shorthand such as `grid-1d:16` or `snowflake:8:0.5`.
    pub fn parse_short(text: &str, seed: u64) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let size: usize = parts
            .get(1)
            .ok_or_else(|| Error::param("generator", "expected kind:size"))?
            .parse()
            .map_err(|_| Error::param("generator", format!("bad size in `{text}`")))?;
        let extra = |i: usize, default: f64| -> Result<f64> {
            parts.get(i).map_or(Ok(default), |s| {
                s.parse().map_err(|_| Error::param("generator", format!("bad parameter `{s}`")))
            })
        };
        Ok(match parts[0] {
            "grid-1d" => SpaceGenerator::Grid1d { size },
            "grid-2d" => SpaceGenerator::Grid2d { size },
            "random-cloud" => SpaceGenerator::RandomCloud {
                size,
                seed,
                dim: extra(2, 2.0)? as usize,
                random_mass: true,
            },
            "snowflake" => SpaceGenerator::Snowflake {
                size,
                epsilon: extra(2, 0.5)?,
            },
            "tree" => SpaceGenerator::Tree { size },
            other => return Err(Error::param("generator", format!("unknown kind `{other}`"))),
        })
    }
}

/// Builds the space described by `gen`.
pub fn generate_space(gen: &SpaceGenerator) -> Result<SpaceModel> {
    let size = gen.size();
    if size < 2 {
        return Err(Error::param("size", format!("need at least 2 points, got {size}")));
    }
    let ids: Vec<String> = (0..size).map(|i| i.to_string()).collect();
    match *gen {
        SpaceGenerator::Grid1d { .. } => {
            let coords = (0..size).map(|i| vec![i as f64]).collect();
            SpaceModel::from_coords(ids, vec![1.0; size], coords, 1.0)
        }
        SpaceGenerator::Grid2d { .. } => {
            let w = (size as f64).sqrt().ceil() as usize;
            let coords = (0..size).map(|i| vec![(i % w) as f64, (i / w) as f64]).collect();
            SpaceModel::from_coords(ids, vec![1.0; size], coords, 1.0)
        }
        SpaceGenerator::RandomCloud {
            seed,
            dim,
            random_mass,
            ..
        } => {
            if dim == 0 {
                return Err(Error::param("dim", "must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coords: Vec<Vec<f64>> =
                (0..size).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
            let mass = if random_mass {
                (0..size).map(|_| rng.gen_range(0.5..1.5)).collect()
            } else {
                vec![1.0; size]
            };
            SpaceModel::from_coords(ids, mass, coords, 1.0)
        }
        SpaceGenerator::Snowflake { epsilon, .. } => {
            if !(epsilon.is_finite() && epsilon >= 0.0) {
                return Err(Error::param("epsilon", "must be finite and >= 0"));
            }
            let coords = (0..size).map(|i| vec![i as f64]).collect();
            SpaceModel::from_coords(ids, vec![1.0; size], coords, 1.0 + epsilon)
        }
        SpaceGenerator::Tree { .. } => {
            let mut dist = vec![0.0; size * size];
            for i in 0..size {
                for j in 0..size {
                    if i != j {
                        let h = usize::BITS - (i ^ j).leading_zeros();
                        dist[i * size + j] = f64::from(2u32.pow(h));
                    }
                }
            }
            let coords = (0..size).map(|i| vec![i as f64]).collect();
            SpaceModel::new(ids, vec![1.0; size], dist, Some(coords))
        }
    }
}

/// A seeded weight `exp(spread * u)` with `u` uniform in `[-1, 1]`.
pub fn log_uniform_weight(n: usize, spread: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (spread * rng.gen_range(-1.0..=1.0)).exp()).collect()
}

/// A power weight `(1 + |x - x_0|)^gamma` over the first coordinate (or index).
pub fn power_weight(space: &SpaceModel, anchor: usize, gamma: f64) -> Vec<f64> {
    (0..space.len()).map(|x| (1.0 + space.d(x, anchor)).powf(gamma)).collect()
}

/// A seeded symbol with entries uniform in `[-1, 1]`, or in the unit square when `complex`.
pub fn random_symbol(n: usize, complex: bool, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let re = rng.gen_range(-1.0..=1.0);
            let im = if complex { rng.gen_range(-1.0..=1.0) } else { 0.0 };
            Complex64::new(re, im)
        })
        .collect()
}

/// A seeded vector with entries `±1`.
pub fn random_signs(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_sizes_are_rejected() {
        assert!(generate_space(&SpaceGenerator::Grid1d { size: 1 }).is_err());
        assert!(generate_space(&SpaceGenerator::Tree { size: 0 }).is_err());
    }

    #[test]
    fn tree_is_an_ultrametric() {
        let s = generate_space(&SpaceGenerator::Tree { size: 8 }).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    assert!(s.d(i, j) <= s.d(i, k).max(s.d(k, j)));
                }
            }
        }
        assert_eq!(s.quasi_triangle_constant().a0, 1.0);
        assert_eq!(s.d(0, 1), 2.0);
        assert_eq!(s.d(0, 7), 8.0);
    }

    #[test]
    fn snowflake_constant() {
        let s = generate_space(&SpaceGenerator::Snowflake { size: 3, epsilon: 1.0 }).unwrap();
        assert_eq!(s.quasi_triangle_constant().a0, 2.0);
    }

    #[test]
    fn shorthand() {
        assert_eq!(
            SpaceGenerator::parse_short("grid-1d:16", 0).unwrap(),
            SpaceGenerator::Grid1d { size: 16 }
        );
        assert!(SpaceGenerator::parse_short("moebius:3", 0).is_err());
    }

    #[test]
    fn clouds_are_reproducible() {
        let g = SpaceGenerator::RandomCloud {
            size: 10,
            seed: 4,
            dim: 2,
            random_mass: true,
        };
        let a = generate_space(&g).unwrap();
        let b = generate_space(&g).unwrap();
        assert_eq!(a.masses(), b.masses());
        assert_eq!(a.d(3, 7), b.d(3, 7));
    }
}
