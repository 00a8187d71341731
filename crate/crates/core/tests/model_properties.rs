use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use grassmann_binary::matrix::{inverse, is_p0_matrix_with};
use grassmann_binary::model::PROB_TOL;
use grassmann_binary::oracle::oracle_table;
use grassmann_binary::synth::{random_sigma, random_valid_sigma};
use grassmann_binary::{GrassmannBinary, IndexSet, Matrix, ModelOptions, Observation, SigmaMatrix};

fn valid_model(p: usize, seed: u64) -> GrassmannBinary {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    GrassmannBinary::from_sigma(random_valid_sigma(p, &mut rng), &ModelOptions::strict()).unwrap()
}

fn table(sigma: Matrix) -> Vec<f64> {
    GrassmannBinary::from_sigma(SigmaMatrix::new(sigma).unwrap(), &ModelOptions::unchecked())
        .unwrap()
        .joint_table()
        .unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn all_observations(p: usize) -> impl Iterator<Item = Observation> {
    (0..3usize.pow(p as u32)).map(move |mut code| {
        let mut pairs = Vec::new();
        for i in 0..p {
            match code % 3 {
                1 => pairs.push((i, false)),
                2 => pairs.push((i, true)),
                _ => {}
            }
            code /= 3;
        }
        Observation::new(pairs, p).unwrap()
    })
}

#[test]
fn every_marginal_matches_enumeration() {
    for p in 1..=8 {
        let d = valid_model(p, 100 + p as u64);
        let oracle = oracle_table(&d).unwrap();
        for mask in 1u64..1 << p {
            let keep = IndexSet::from_mask(mask);
            let m = d.marginal(&keep).unwrap();
            let err = oracle.marginal(&keep).max_abs_diff(&m.joint_table().unwrap());
            assert!(err < 1e-10, "p={p} keep={keep}: {err}");
        }
    }
}

#[test]
fn every_conditional_matches_enumeration() {
    for p in 1..=6 {
        let d = valid_model(p, 200 + p as u64);
        let oracle = oracle_table(&d).unwrap();
        for obs in all_observations(p) {
            let (ot, oe) = oracle.conditional(&obs).unwrap();
            let c = d.conditional(&obs).unwrap();
            assert!((c.evidence - oe).abs() < 1e-10);
            let lhs: Vec<f64> = c.model.joint_table().unwrap().iter().map(|v| v * c.evidence).collect();
            let rhs: Vec<f64> = ot.probs().iter().map(|v| v * oe).collect();
            assert!(max_diff(&lhs, &rhs) < 1e-10, "p={p} obs={obs:?}");
        }
    }
}

#[test]
fn every_central_moment_matches_enumeration() {
    for p in 1..=6 {
        let d = valid_model(p, 300 + p as u64);
        let oracle = oracle_table(&d).unwrap();
        for mask in 1u64..1 << p {
            let r = IndexSet::from_mask(mask);
            let err = (d.central_moment(&r).unwrap() - oracle.central_moment(&r)).abs();
            assert!(err < 1e-9, "p={p} r={r}: {err}");
        }
    }
}

#[test]
fn partial_correlation_is_conditional_pearson() {
    for p in 2..=6 {
        let d = valid_model(p, 400 + p as u64);
        let oracle = oracle_table(&d).unwrap();
        for obs in all_observations(p).step_by(5) {
            for i in 0..p {
                for j in i + 1..p {
                    if obs.contains(i) || obs.contains(j) {
                        continue;
                    }
                    let full = d.partial_correlation_condition(i, j, &obs);
                    let (ct, _) = oracle.conditional(&full).unwrap();
                    let rem = full.remaining(p);
                    let pi = rem.iter().position(|k| k == i).unwrap();
                    let pj = rem.iter().position(|k| k == j).unwrap();
                    let got = d.partial_correlation(i, j, &obs).unwrap();
                    assert!((got - ct.pearson(pi, pj)).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn positivity_iff_p0_exhaustive() {
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for k in 0..300 {
        let p = 1 + k % 8;
        let s = random_sigma(p, 0.05 + 0.5 * (k % 5) as f64 / 5.0, &mut rng);
        let Ok(lambda) = inverse(s.matrix()) else {
            continue;
        };
        let d = GrassmannBinary::from_sigma(s, &ModelOptions::unchecked()).unwrap();
        let min = oracle_table(&d).unwrap().min();
        let shifted = &lambda - &Matrix::identity(p);
        let tol = PROB_TOL * d.det_lambda().abs();
        let p0 = is_p0_matrix_with(&shifted, tol, 20).unwrap().holds();
        assert_eq!(p0, min >= -PROB_TOL, "p={p} min={min}");
        let checked = d.check_validity().unwrap();
        assert_eq!(checked == grassmann_binary::Validity::Valid, p0);
    }
}

#[test]
fn invalid_witness_names_a_negative_state() {
    let s = SigmaMatrix::from_rows(&[[0.5, 0.9], [0.9, 0.5]]).unwrap();
    let d = GrassmannBinary::from_sigma(s, &ModelOptions::default()).unwrap();
    let grassmann_binary::Validity::Invalid { witness } = d.validity().clone() else {
        panic!("expected invalid");
    };
    let ones = !witness.mask() & 0b11;
    assert!(d.joint_prob_mask(ones) < 0.0);
    let strict = SigmaMatrix::from_rows(&[[0.5, 0.9], [0.9, 0.5]]).unwrap();
    assert!(GrassmannBinary::from_sigma(strict, &ModelOptions::strict()).is_err());
}

fn model_strategy(max_p: usize) -> impl Strategy<Value = GrassmannBinary> {
    (1..=max_p, any::<u64>()).prop_map(|(p, seed)| valid_model(p, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tables_sum_to_one(d in model_strategy(10)) {
        let total: f64 = d.joint_table().unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_determinant_routes_agree(d in model_strategy(7)) {
        let t = oracle_table(&d).unwrap();
        prop_assert!(t.max_abs_diff(&d.joint_table().unwrap()) < 1e-10);
    }

    #[test]
    fn lambda_inverts_sigma(d in model_strategy(10)) {
        let prod = d.lambda() * d.sigma();
        prop_assert!(prod.max_abs_diff(&Matrix::identity(d.dim())) < 1e-9);
    }

    #[test]
    fn flip_coding_permutes_the_table(d in model_strategy(7), flip_bits in any::<u64>()) {
        let p = d.dim();
        let mask = flip_bits & ((1 << p) - 1);
        let flipped = d.flip_coding(&IndexSet::from_mask(mask)).unwrap();
        let a = d.joint_table().unwrap();
        let b = flipped.joint_table().unwrap();
        for s in 0..a.len() {
            prop_assert!((a[s] - b[s ^ mask as usize]).abs() < 1e-10);
        }
    }

    #[test]
    fn gauge_scaling_preserves_the_table(d in model_strategy(7), row in any::<usize>(), log_c in -3.0f64..3.0, neg in any::<bool>()) {
        let p = d.dim();
        let i = row % p;
        let c = log_c.exp() * if neg { -1.0 } else { 1.0 };
        let mut s = d.sigma().clone();
        for j in (0..p).filter(|&j| j != i) {
            s[(i, j)] *= c;
            s[(j, i)] /= c;
        }
        prop_assert!(max_diff(&d.joint_table().unwrap(), &table(s)) < 1e-10);
    }

    #[test]
    fn transposition_preserves_the_table(d in model_strategy(7)) {
        prop_assert!(max_diff(&d.joint_table().unwrap(), &table(d.sigma().transpose())) < 1e-10);
    }

    #[test]
    fn uncorrelated_blocks_factorize(split in 1usize..4, p in 2usize..7, seed in any::<u64>()) {
        let split = split.min(p - 1);
        let a = valid_model(split, seed);
        let b = valid_model(p - split, seed.wrapping_add(1));
        let mut s = Matrix::zeros(p, p);
        for i in 0..split {
            for j in 0..split {
                s[(i, j)] = a.sigma()[(i, j)];
            }
        }
        for i in 0..p - split {
            for j in 0..p - split {
                s[(split + i, split + j)] = b.sigma()[(i, j)];
            }
        }
        let joint = table(s);
        let (ta, tb) = (a.joint_table().unwrap(), b.joint_table().unwrap());
        for (state, &v) in joint.iter().enumerate() {
            let lo = state & ((1 << split) - 1);
            let hi = state >> split;
            prop_assert!((v - ta[lo] * tb[hi]).abs() < 1e-10);
        }
    }

    #[test]
    fn covariances_match_enumeration(d in model_strategy(6)) {
        let t = oracle_table(&d).unwrap();
        let p = d.dim();
        for i in 0..p {
            for j in 0..p {
                prop_assert!((d.covariance(i, j).unwrap() - t.covariance(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn entropy_matches_enumeration(d in model_strategy(8)) {
        let t = oracle_table(&d).unwrap();
        prop_assert!((d.entropy().unwrap() - t.entropy()).abs() < 1e-9);
    }
}
