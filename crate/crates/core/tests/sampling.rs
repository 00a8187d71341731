use statrs::distribution::{ChiSquared, ContinuousCDF};

use grassmann_binary::estimation::{summarize, theoretical_stat_moments};
use grassmann_binary::experiment::benchmark_model;
use grassmann_binary::sampler::{sample, seeded_rng, stream_rng, Sampler};
use grassmann_binary::synth::random_valid_sigma;
use grassmann_binary::{GrassmannBinary, Matrix, ModelOptions, SigmaMatrix};

/// Pearson chi-square p-value of observed counts against expected
/// probabilities, with `cells − 1` degrees of freedom.
fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((probs.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn dense_counts(data: &grassmann_binary::Dataset) -> Vec<u64> {
    (0u64..1 << data.dim()).map(|m| data.count(m)).collect()
}

#[test]
fn state_frequencies_are_exact() {
    let n = 200_000;
    for p in 1..=6 {
        let mut rng = seeded_rng(p as u64);
        let d = GrassmannBinary::from_sigma(random_valid_sigma(p, &mut rng), &ModelOptions::strict()).unwrap();
        let data = sample(&d, n, &mut rng).unwrap();
        for (mask, &pi) in d.joint_table().unwrap().iter().enumerate() {
            let freq = data.count(mask as u64) as f64 / n as f64;
            let bound = 5.0 * (pi * (1.0 - pi) / n as f64).sqrt();
            assert!((freq - pi).abs() <= bound, "p={p} state={mask}: {freq} vs {pi}");
        }
    }
}

#[test]
fn relabeling_permutes_the_sampled_law() {
    let p = 5;
    let mut rng = seeded_rng(31);
    let d = GrassmannBinary::from_sigma(random_valid_sigma(p, &mut rng), &ModelOptions::strict()).unwrap();
    let perm = [3usize, 0, 4, 1, 2];
    let mut s = Matrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            s[(a, b)] = d.sigma()[(perm[a], perm[b])];
        }
    }
    let permuted = GrassmannBinary::from_sigma(SigmaMatrix::new(s).unwrap(), &ModelOptions::strict()).unwrap();
    let data = sample(&permuted, 100_000, &mut rng).unwrap();
    let mut counts = vec![0u64; 1 << p];
    for (&mask, &c) in data.counts() {
        let original = (0..p).fold(0u64, |m, a| m | (mask >> a & 1) << perm[a]);
        counts[original as usize] += c;
    }
    let pv = chi_square_p(&counts, &d.joint_table().unwrap());
    assert!(pv > 1e-4, "p-value {pv}");
}

#[test]
fn benchmark_covariance_within_standard_errors() {
    let d = benchmark_model().unwrap();
    let n = 100_000;
    let data = sample(&d, n, &mut seeded_rng(13)).unwrap();
    let s = summarize(&data).unwrap();
    let theory = theoretical_stat_moments(&d, n).unwrap();
    let se = theory.var_of_covariances[(0, 2)].sqrt();
    let got = s.covariance(0, 2).unwrap();
    assert!((got - d.covariance(0, 2).unwrap()).abs() < 4.0 * se);
}

#[test]
fn goodness_of_fit_across_seeds() {
    let d = benchmark_model().unwrap();
    let table = d.joint_table().unwrap();
    let sampler = Sampler::new(&d).unwrap();
    let seeds = 200;
    let passed = (0..seeds)
        .filter(|&seed| {
            let data = sampler.sample(500, &mut stream_rng(seed, 0)).unwrap();
            chi_square_p(&dense_counts(&data), &table) > 1e-4
        })
        .count();
    assert!(passed as f64 >= 0.99 * seeds as f64, "{passed}/{seeds}");
}

#[test]
fn independent_model_draws_independent_coordinates() {
    let d = GrassmannBinary::independent(&[0.2, 0.5, 0.8]).unwrap();
    let data = sample(&d, 50_000, &mut seeded_rng(2)).unwrap();
    let s = summarize(&data).unwrap();
    let se = (0.16f64 * 0.25 / 50_000.0).sqrt();
    assert!(s.covariance(0, 1).unwrap().abs() < 4.0 * se);
}
