//! Exact chain-rule sampling: `x_1 ~ p(x_1)`, then each `x_k` from
//! `p(x_k | x_1, …, x_{k−1})` in index order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::model::{BinaryVector, GrassmannBinary, Observation};

/// Generator used for every seeded stream. Recorded in output metadata.
pub type SeededRng = ChaCha20Rng;
pub const RNG_ALGORITHM: &str = "chacha20";

/// Conditional means this far outside [0, 1] are clamped, beyond it rejected.
pub const CLAMP_TOL: f64 = 1e-9;

/// Prefix tables are precomputed up to this dimension.
const PRECOMPUTE_MAX_P: usize = 12;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Independent stream `stream` under the same seed.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// N binary vectors of a fixed dimension plus their state counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    dim: usize,
    rows: Vec<BinaryVector>,
    counts: BTreeMap<u64, u64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn from_rows(dim: usize, rows: Vec<BinaryVector>) -> Result<Self> {
        let mut d = Self::new(dim);
        for r in rows {
            d.push(r)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, row: BinaryVector) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        *self.counts.entry(row.mask()).or_default() += 1;
        self.rows.push(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[BinaryVector] {
        &self.rows
    }

    /// `n_δ` keyed by state bitmask; absent states have count zero.
    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn count(&self, mask: u64) -> u64 {
        self.counts.get(&mask).copied().unwrap_or(0)
    }
}

/// Chain-rule sampler bound to one model.
pub struct Sampler<'a> {
    model: &'a GrassmannBinary,
    /// Conditional mean of `x_k` for every prefix, at `2^k − 1 + prefix`.
    /// NaN marks prefixes of probability zero.
    prefix_means: Option<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a GrassmannBinary) -> Result<Self> {
        let p = model.dim();
        let prefix_means = if p <= PRECOMPUTE_MAX_P {
            let mut table = Vec::with_capacity((1 << p) - 1);
            for k in 0..p {
                for prefix in 0u64..1 << k {
                    let m = match model.conditional_mean(k, &prefix_observation(prefix, k)) {
                        Ok(m) => m,
                        Err(Error::ZeroEvidence { .. }) => f64::NAN,
                        Err(e) => return Err(e),
                    };
                    table.push(m);
                }
            }
            Some(table)
        } else {
            None
        };
        Ok(Self { model, prefix_means })
    }

    fn mean_at(&self, k: usize, prefix: u64) -> Result<f64> {
        let raw = match &self.prefix_means {
            Some(t) => t[(1usize << k) - 1 + prefix as usize],
            None => self.model.conditional_mean(k, &prefix_observation(prefix, k))?,
        };
        if !(-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&raw) {
            return Err(Error::InvalidConditionalMean { index: k, mean: raw });
        }
        Ok(raw.clamp(0.0, 1.0))
    }

    /// Draws one state as a bitmask.
    pub fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let mut state = 0u64;
        for k in 0..self.model.dim() {
            let mean = self.mean_at(k, state)?;
            if rng.random::<f64>() < mean {
                state |= 1 << k;
            }
        }
        Ok(state)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BinaryVector> {
        Ok(BinaryVector::from_mask(self.sample_mask(rng)?, self.model.dim()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let mut data = Dataset::new(self.model.dim());
        for _ in 0..n {
            data.push(self.sample_one(rng)?)?;
        }
        Ok(data)
    }
}

fn prefix_observation(prefix: u64, k: usize) -> Observation {
    let mut obs = Observation::empty();
    for i in 0..k {
        obs.insert(i, prefix >> i & 1 == 1);
    }
    obs
}

pub fn sample_one<R: Rng + ?Sized>(d: &GrassmannBinary, rng: &mut R) -> Result<BinaryVector> {
    Sampler::new(d)?.sample_one(rng)
}

pub fn sample<R: Rng + ?Sized>(d: &GrassmannBinary, n: usize, rng: &mut R) -> Result<Dataset> {
    Sampler::new(d)?.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelOptions, SigmaMatrix};

    #[test]
    fn empty_sample() {
        let d = GrassmannBinary::independent(&[0.3, 0.6]).unwrap();
        let data = sample(&d, 0, &mut seeded_rng(1)).unwrap();
        assert!(data.is_empty());
        assert_eq!(data.dim(), 2);
    }

    #[test]
    fn seeded_runs_repeat() {
        let d = GrassmannBinary::independent(&[0.3, 0.6, 0.5]).unwrap();
        let a = sample(&d, 200, &mut seeded_rng(42)).unwrap();
        let b = sample(&d, 200, &mut seeded_rng(42)).unwrap();
        let c = sample(&d, 200, &mut seeded_rng(43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn univariate_mean_converges() {
        let d = GrassmannBinary::independent(&[0.7]).unwrap();
        let n = 100_000;
        let data = sample(&d, n, &mut seeded_rng(5)).unwrap();
        let mean = data.count(1) as f64 / n as f64;
        let se = (0.7f64 * 0.3 / n as f64).sqrt();
        assert!((mean - 0.7).abs() < 4.0 * se);
    }

    #[test]
    fn counts_match_rows() {
        let d = GrassmannBinary::independent(&[0.3, 0.6]).unwrap();
        let data = sample(&d, 500, &mut seeded_rng(9)).unwrap();
        assert_eq!(data.counts().values().sum::<u64>(), 500);
        for (&mask, &n) in data.counts() {
            let actual = data.rows().iter().filter(|r| r.mask() == mask).count() as u64;
            assert_eq!(actual, n);
        }
    }

    #[test]
    fn invalid_model_is_reported() {
        let s = SigmaMatrix::from_rows(&[[0.5, 0.9], [0.9, 0.5]]).unwrap();
        let d = GrassmannBinary::from_sigma(s, &ModelOptions::default()).unwrap();
        // p(x2=1 | x1=1) = (0.25 - 0.81)/0.5 < 0
        let err = sample(&d, 1000, &mut seeded_rng(3)).unwrap_err();
        assert!(matches!(err, Error::InvalidConditionalMean { index: 1, .. }));
    }

    #[test]
    fn streams_differ() {
        let mut a = stream_rng(1, 0);
        let mut b = stream_rng(1, 1);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn dataset_rejects_wrong_length() {
        let mut data = Dataset::new(3);
        assert!(data.push(BinaryVector::from_mask(0, 2)).is_err());
    }
}
