//! Fast paths against the brute-force oracle on small random instances.

#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use partdpp::oracle::{
    brute_conditional, brute_distribution, brute_partition_function, iyer_mixture_value,
    naive_gram, reference_det,
};
use partdpp::*;

#[test]
fn univariate_coefficients_are_minor_sums() {
    let mut rng = rng(11);
    for m in 1..=7 {
        let k = random_kernel(&mut rng, m, m + 1);
        let c = char_coeffs_univariate(&k);
        let c = c.univariate().unwrap();
        for size in 1..=m {
            let spec = PartitionSpec::cardinality(m, size).unwrap();
            let brute = brute_partition_function(&k, &spec).unwrap();
            assert!(rel_err(c[m - size].abs(), brute) < 1e-8, "m={m} k={size}");
        }
        assert!((c[m].abs() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn multivariate_tensor_matches_subset_sums() {
    let mut rng = rng(12);
    let k = random_kernel(&mut rng, 6, 6);
    let partition = Partition::contiguous(&[3, 3]).unwrap();
    let tensor = multichar_all_coeffs(&k, &partition).unwrap();
    for pos in 0..tensor.as_slice().len() {
        let idx = tensor.index_of(pos);
        let quotas: Vec<usize> = idx.iter().map(|&i| 3 - i).collect();
        let got = tensor.as_slice()[pos];
        let sign = if idx.iter().sum::<usize>() % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        let want = if quotas.iter().sum::<usize>() == 0 {
            1.0
        } else {
            let spec = PartitionSpec::new(partition.clone(), quotas).unwrap();
            brute_partition_function(&k, &spec).unwrap()
        };
        assert!(
            rel_err(got, sign * want) < 1e-7,
            "{idx:?}: {got} vs {}",
            sign * want
        );
        let single = multichar_coeff(&k, &partition, &idx).unwrap();
        assert!(rel_err(single, got) <= 1e-12);
    }
    let det = reference_det(k.as_slice(), 6);
    assert!(rel_err(tensor.get(&[0, 0]).unwrap(), det) < 1e-8);
    assert!(rel_err(tensor.get(&[3, 3]).unwrap(), 1.0) < 1e-12);
}

#[test]
fn diagonal_product_of_factors() {
    let k = Kernel::diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    let partition = Partition::contiguous(&[2, 2]).unwrap();
    // (1-x₁)(2-x₁)(3-x₂)(4-x₂): coefficient of x₁x₂ is (-3)(-7).
    assert!(rel_err(multichar_coeff(&k, &partition, &[1, 1]).unwrap(), 21.0) < 1e-12);
    let t = multichar_all_coeffs(&k, &partition).unwrap();
    let f1 = [2.0, -3.0, 1.0];
    let f2 = [12.0, -7.0, 1.0];
    for a in 0..3 {
        for b in 0..3 {
            assert!(rel_err(t.get(&[a, b]).unwrap(), f1[a] * f2[b]) < 1e-12);
        }
    }
}

#[test]
fn lemma_identity_with_sign() {
    let mut rng = rng(13);
    for trial in 0..60 {
        let m = 4 + trial % 5;
        let p = 1 + trial % 3;
        let n = if trial % 4 == 0 { m - 2 } else { m + 1 };
        let k = random_kernel(&mut rng, m, n);
        let partition = random_partition(&mut rng, m, p);
        let quotas = random_quotas(&mut rng, &partition);
        let spec = PartitionSpec::new(partition, quotas).unwrap();
        let report = partition_function_report(&k, &spec).unwrap();
        let brute = brute_partition_function(&k, &spec).unwrap();
        let scale = k.trace().powi(spec.k() as i32);
        if brute <= 1e-10 * scale {
            assert!(
                report.z <= 1e-8 * scale,
                "trial {trial}: {} vs {brute}",
                report.z
            );
            continue;
        }
        assert!(
            rel_err(report.z, brute) < 1e-7,
            "trial {trial}: {} vs {brute}",
            report.z
        );
        let want_sign = if (spec.m() - spec.k()).is_multiple_of(2) {
            1
        } else {
            -1
        };
        assert_eq!(report.sign, want_sign);
    }
}

#[test]
fn single_part_matches_univariate() {
    let mut rng = rng(14);
    for m in [3, 5, 8] {
        let k = random_kernel(&mut rng, m, m);
        let uni = char_coeffs_univariate(&k);
        let multi = multichar_all_coeffs(&k, &Partition::single(m).unwrap()).unwrap();
        for (a, b) in uni.as_slice().iter().zip(multi.as_slice()) {
            assert!(rel_err(*b, *a) < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn block_diagonal_kernel_factors() {
    let mut rng = rng(15);
    for _ in 0..5 {
        let b1 = random_kernel(&mut rng, 3, 4);
        let b2 = random_kernel(&mut rng, 4, 4);
        let mut data = vec![0.0; 49];
        for i in 0..3 {
            for j in 0..3 {
                data[i * 7 + j] = b1.get(i, j);
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                data[(i + 3) * 7 + j + 3] = b2.get(i, j);
            }
        }
        let k = Kernel::new(7, data).unwrap();
        let t = multichar_all_coeffs(&k, &Partition::contiguous(&[3, 4]).unwrap()).unwrap();
        let c1 = char_coeffs_univariate(&b1);
        let c2 = char_coeffs_univariate(&b2);
        for a in 0..=3 {
            for b in 0..=4 {
                let want = c1.univariate().unwrap()[a] * c2.univariate().unwrap()[b];
                assert!(rel_err(t.get(&[a, b]).unwrap(), want) < 1e-7);
            }
        }
    }
}

#[test]
fn permutation_within_part_leaves_coefficients() {
    let mut rng = rng(16);
    let k = random_kernel(&mut rng, 6, 6);
    let partition = Partition::new(vec![0, 1, 0, 1, 0, 1]).unwrap();
    // Swap items 0 and 2 (both in part 0).
    let perm = [2, 1, 0, 3, 4, 5];
    let mut data = vec![0.0; 36];
    for i in 0..6 {
        for j in 0..6 {
            data[i * 6 + j] = k.get(perm[i], perm[j]);
        }
    }
    let kp = Kernel::new(6, data).unwrap();
    let a = multichar_all_coeffs(&k, &partition).unwrap();
    let b = multichar_all_coeffs(&kp, &partition).unwrap();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!(rel_err(*x, *y) < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn marginals_match_tuple_enumeration() {
    let mut rng = rng(17);
    for trial in 0..20 {
        let m = 4 + trial % 4;
        let a = random_features(&mut rng, m, m);
        let k = gram(&a);
        let partition = random_partition(&mut rng, m, 2);
        let quotas = random_quotas(&mut rng, &partition);
        let spec = PartitionSpec::new(partition, quotas).unwrap();
        // Random reachable prefix.
        let mut state = SampleState::new(&a, &spec).unwrap();
        let steps = rng_index(&mut rng, spec.k());
        for _ in 0..steps {
            let probs = marginal_step_probs(&spec, &state).unwrap();
            let i = (0..m)
                .max_by(|&x, &y| probs[x].total_cmp(&probs[y]))
                .unwrap();
            state.advance(i).unwrap();
        }
        let fast = marginal_step_probs(&spec, &state).unwrap();
        let brute = brute_conditional(&k, &spec, state.chosen()).unwrap();
        for (f, b) in fast.iter().zip(&brute) {
            assert!((f - b).abs() < 1e-8, "trial {trial}: {fast:?} vs {brute:?}");
        }
        let total: f64 = fast.iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
}

fn rng_index(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> usize {
    use rand::Rng;
    rng.random_range(0..n)
}

#[test]
fn kdpp_route_agrees_with_multivariate_route() {
    let mut rng = rng(18);
    let a = random_features(&mut rng, 7, 5);
    let spec = PartitionSpec::cardinality(7, 3).unwrap();
    let mut state = SampleState::new(&a, &spec).unwrap();
    for i in [4, 1] {
        let x = partdpp::kdpp_step_probs(&state).unwrap();
        let y = marginal_step_probs(&spec, &state).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-9);
        }
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        state.advance(i).unwrap();
    }
}

#[test]
fn chain_of_marginals_gives_set_probability() {
    let mut rng = rng(19);
    let a = random_features(&mut rng, 7, 5);
    let spec = PartitionSpec::new(Partition::contiguous(&[3, 4]).unwrap(), vec![1, 2]).unwrap();
    let dist = brute_distribution(&gram(&a), &spec).unwrap();
    for order in [[0usize, 3, 5], [5, 0, 3], [6, 4, 2]] {
        let mut state = SampleState::new(&a, &spec).unwrap();
        let mut product = 1.0;
        for &i in &order {
            product *= marginal_step_probs(&spec, &state).unwrap()[i];
            state.advance(i).unwrap();
        }
        let subset = Subset::new(order.to_vec(), 7).unwrap();
        let exact = exact_set_probability(&a, &spec, &subset).unwrap();
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        let oracle = dist[&Subset::new(sorted, 7).unwrap()];
        // Tuple probability times k! is the set probability.
        assert!(rel_err(product * 6.0, exact) < 1e-6);
        assert!(rel_err(exact, oracle) < 1e-7);
    }
}

#[test]
fn mixture_formula_is_not_the_partition_function() {
    let k = Kernel::diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    let spec = PartitionSpec::new(Partition::contiguous(&[2, 2]).unwrap(), vec![1, 1]).unwrap();
    assert_eq!(iyer_mixture_value(&k, &spec).unwrap(), 10.0);
    assert_eq!(brute_partition_function(&k, &spec).unwrap(), 21.0);

    let mut rng = rng(20);
    for _ in 0..10 {
        let k = random_kernel(&mut rng, 6, 6);
        let spec = PartitionSpec::new(Partition::contiguous(&[3, 3]).unwrap(), vec![1, 1]).unwrap();
        let mix = iyer_mixture_value(&k, &spec).unwrap();
        let z = brute_partition_function(&k, &spec).unwrap();
        assert!(rel_err(mix, z) > 1e-6);
    }
}

#[test]
fn gram_and_minors_against_naive_routes() {
    let mut rng = rng(21);
    let a = random_features(&mut rng, 5, 3);
    let k = gram(&a);
    for (x, y) in k.as_slice().iter().zip(naive_gram(&a)) {
        assert!((x - y).abs() <= 1e-14 * y.abs().max(1.0));
    }
    let k6 = random_kernel(&mut rng, 6, 6);
    for s in [[0usize, 2, 4], [1, 3, 5], [0, 1, 5]] {
        let sub: Vec<f64> = s
            .iter()
            .flat_map(|&i| s.iter().map(move |&j| (i, j)))
            .map(|(i, j)| k6.get(i, j))
            .collect();
        let want = reference_det(&sub, 3);
        assert!(rel_err(principal_minor_det(&k6, &s).unwrap(), want) < 1e-10);
    }
}

#[test]
fn exact_set_probability_matches_oracle() {
    let mut rng = rng(22);
    let a = random_features(&mut rng, 6, 6);
    let partition = Partition::new(vec![0, 1, 2, 0, 1, 2]).unwrap();
    let spec = PartitionSpec::new(partition, vec![1, 1, 1]).unwrap();
    let dist = brute_distribution(&gram(&a), &spec).unwrap();
    for (s, p) in &dist {
        let got = exact_set_probability(&a, &spec, s).unwrap();
        assert!(rel_err(got, *p) < 1e-7);
    }
    let bad = Subset::new(vec![0, 3, 1], 6).unwrap();
    assert_eq!(exact_set_probability(&a, &spec, &bad).unwrap(), 0.0);
}
