//! Random parameter matrices for tests and experiments.

use rand::Rng;

use crate::matrix::{inverse, Matrix};
use crate::model::SigmaMatrix;

/// Σ whose `Λ − I` is strictly diagonally dominant with a positive diagonal,
/// hence a P-matrix: every state has positive probability.
pub fn random_valid_sigma<R: Rng + ?Sized>(p: usize, rng: &mut R) -> SigmaMatrix {
    loop {
        let mut shifted = Matrix::zeros(p, p);
        for i in 0..p {
            let diag = rng.random_range(0.1..3.0);
            shifted[(i, i)] = diag;
            if p > 1 {
                let budget = diag * rng.random_range(0.0..0.95);
                let weights: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm: f64 = weights
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, w)| w.abs())
                    .sum();
                for j in (0..p).filter(|&j| j != i) {
                    shifted[(i, j)] = budget * weights[j] / norm.max(1e-12);
                }
            }
        }
        let mut lambda = shifted;
        for i in 0..p {
            lambda[(i, i)] += 1.0;
        }
        if let Ok(sigma) = inverse(&lambda) {
            if let Ok(s) = SigmaMatrix::new(sigma) {
                return s;
            }
        }
    }
}

/// Σ with means in (0.05, 0.95) and off-diagonal entries uniform in
/// `[-scale, scale]`. Not necessarily valid.
pub fn random_sigma<R: Rng + ?Sized>(p: usize, scale: f64, rng: &mut R) -> SigmaMatrix {
    let mut m = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            m[(i, j)] = if i == j {
                rng.random_range(0.05..0.95)
            } else {
                rng.random_range(-scale..=scale)
            };
        }
    }
    SigmaMatrix::new(m).expect("diagonal in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrassmannBinary, ModelOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn generated_models_are_valid() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for p in 1..=8 {
            for _ in 0..10 {
                let s = random_valid_sigma(p, &mut rng);
                let d = GrassmannBinary::from_sigma(s, &ModelOptions::strict()).unwrap();
                assert!(d.joint_table().unwrap().iter().all(|&x| x > 0.0));
            }
        }
    }
}
