use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use subnet_hpo::space::GroupId;
use subnet_hpo::surrogate::{standard_benchmarks, Objective};

#[test]
fn transfer_costs_about_039_of_complete() {
    for b in standard_benchmarks() {
        let obj = b.objective();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mut complete, mut transfer) = (0.0, 0.0);
        for _ in 0..1000 {
            let config = b.space.sample_uniform(&mut rng);
            let fresh = obj.eval_complete(&config, &mut rng);
            let frozen: BTreeMap<GroupId, _> = b
                .space
                .subnets()
                .map(|g| (g, fresh.states[&g].clone()))
                .collect();
            let moved = obj.eval_transfer(&config, &frozen, &mut rng).unwrap();
            complete += fresh.cost;
            transfer += moved.cost;
        }
        let ratio = transfer / complete;
        assert!((ratio - 0.39).abs() <= 0.02, "{}: ratio {ratio}", b.name);
    }
}

#[test]
fn every_benchmark_has_a_good_configuration() {
    for b in standard_benchmarks() {
        let obj = b.objective();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let best = (0..10_000)
            .map(|_| obj.noiseless_merge_loss(&b.space.sample_uniform(&mut rng)))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.3, "{}: best noiseless l_M {best}", b.name);
    }
}

#[test]
fn mean_complete_cost_matches_expectation() {
    for b in standard_benchmarks() {
        let obj = b.objective();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4000;
        let mean = (0..n)
            .map(|_| {
                obj.eval_complete(&b.space.sample_uniform(&mut rng), &mut rng)
                    .cost
            })
            .sum::<f64>()
            / n as f64;
        let expected = obj.expected_complete_cost();
        assert!(
            (mean / expected - 1.0).abs() < 0.02,
            "{}: {mean} vs {expected}",
            b.name
        );
        assert!(obj.min_complete_cost() < mean);
    }
}
