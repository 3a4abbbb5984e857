use pcmarg::circuit::{Circuit, CircuitConfig};
use pcmarg::logspace::{log_add_exp, log_sum_exp};
use pcmarg::{QueryPattern, State};
use proptest::prelude::*;

fn all_patterns(m: usize) -> Vec<QueryPattern> {
    (0..3usize.pow(m as u32))
        .map(|mut idx| {
            let states = (0..m)
                .map(|_| {
                    let s = [State::Zero, State::One, State::Marginalized][idx % 3];
                    idx /= 3;
                    s
                })
                .collect();
            QueryPattern::new(0, states)
        })
        .collect()
}

/// Marginal by explicit enumeration of complete assignments.
fn enumerated(circuit: &Circuit, pattern: &QueryPattern) -> f64 {
    let values: Vec<f64> = pattern
        .completions()
        .iter()
        .map(|c| circuit.evaluate(c).unwrap())
        .collect();
    log_sum_exp(&values)
}

#[test]
fn marginals_match_enumeration_m8() {
    let c = Circuit::new(CircuitConfig::new(8, 4, 17, -10.0)).unwrap();
    for p in all_patterns(8) {
        let fast = c.evaluate(&p).unwrap();
        let slow = enumerated(&c, &p);
        assert!((fast - slow).abs() < 1e-8, "{p}: {fast} vs {slow}");
    }
}

#[test]
fn marginals_match_enumeration_padded() {
    for m in [3, 5, 6, 7] {
        let c = Circuit::new(CircuitConfig::new(m, 3, m as u64, -10.0)).unwrap();
        for p in all_patterns(m) {
            assert!((c.evaluate(&p).unwrap() - enumerated(&c, &p)).abs() < 1e-8);
        }
    }
}

#[test]
fn marginalizing_a_digit_sums_its_two_cases() {
    let c = Circuit::new(CircuitConfig::new(6, 5, 3, -10.0)).unwrap();
    for p in all_patterns(6).iter().step_by(7) {
        for pos in 0..6 {
            if p.get(pos) == State::Marginalized {
                continue;
            }
            let zero = c.evaluate(&p.with(pos, State::Zero)).unwrap();
            let one = c.evaluate(&p.with(pos, State::One)).unwrap();
            let marg = c.evaluate(&p.with(pos, State::Marginalized)).unwrap();
            assert!((marg - log_add_exp(zero, one)).abs() < 1e-9);
        }
    }
}

#[test]
fn unit_parameters_give_closed_form_constant() {
    let mut c = Circuit::new(CircuitConfig::new(4, 2, 0, -1.0)).unwrap();
    c.set_params(&vec![0.0; c.num_params()]).unwrap();
    let (n, m_hat) = (2.0f64, 4.0f64);
    // Sum layers have 2 and 1 rows.
    let closed = m_hat * 2f64.ln() + (2.0 + 1.0) * n.ln() + n.ln();
    let z = c.normalizing_constant();
    assert!((z - closed).abs() < 1e-12, "{z} vs {closed}");
    let brute = enumerated(&c, &QueryPattern::filled(0, 4, State::Marginalized));
    assert!((z - brute).abs() < 1e-12);
}

#[test]
fn constant_dominates_every_complete_pattern() {
    let c = Circuit::new(CircuitConfig::new(5, 3, 8, -10.0)).unwrap();
    let z = c.normalizing_constant();
    for p in QueryPattern::filled(0, 5, State::Marginalized).completions() {
        assert!(c.evaluate(&p).unwrap() <= z);
    }
    let again = c.normalizing_constant();
    assert_eq!(z.to_bits(), again.to_bits());
}

#[test]
fn gradients_match_central_differences() {
    let c = Circuit::new(CircuitConfig::new(4, 3, 5, -1.0)).unwrap();
    let patterns: Vec<QueryPattern> = all_patterns(4).into_iter().step_by(4).take(20).collect();
    assert_eq!(patterns.len(), 20);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for p in &patterns {
        let grad = c.backward(p).unwrap();
        for i in 0..c.num_params() {
            let mut plus = c.clone();
            let mut params = c.params().to_vec();
            params[i] += h;
            plus.set_params(&params).unwrap();
            params[i] -= 2.0 * h;
            let mut minus = c.clone();
            minus.set_params(&params).unwrap();
            let fd = (plus.evaluate(p).unwrap() - minus.evaluate(p).unwrap()) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "param {i} on {p}: analytic {} vs fd {fd}", grad[i]);
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn root_responsibilities_sum_to_one() {
    let c = Circuit::new(CircuitConfig::new(6, 4, 2, -10.0)).unwrap();
    for p in all_patterns(6).iter().step_by(31) {
        let g = c.backward(p).unwrap();
        let s: f64 = (0..4).map(|k| g[c.root_index(k)]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn batch_matches_loop_bitwise() {
    let c = Circuit::new(CircuitConfig::new(7, 6, 4, -10.0)).unwrap();
    let base = all_patterns(7);
    let patterns: Vec<QueryPattern> = base.iter().cycle().take(10_000).cloned().collect();
    let batch = c.evaluate_batch(&patterns).unwrap();
    assert_eq!(batch.len(), 10_000);
    for (p, v) in patterns.iter().zip(&batch) {
        assert_eq!(c.evaluate(p).unwrap().to_bits(), v.to_bits());
    }
    assert!(c.evaluate_batch(&[]).unwrap().is_empty());
}

fn state() -> impl Strategy<Value = State> {
    prop_oneof![Just(State::Zero), Just(State::One), Just(State::Marginalized)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marginalization_is_exact(
        seed in any::<u64>(),
        latent in 1usize..5,
        states in prop::collection::vec(state(), 1..7),
    ) {
        let c = Circuit::new(CircuitConfig::new(states.len(), latent, seed, -10.0)).unwrap();
        let p = QueryPattern::new(0, states);
        prop_assert!((c.evaluate(&p).unwrap() - enumerated(&c, &p)).abs() < 1e-8);
    }

    #[test]
    fn serialization_round_trips(seed in any::<u64>(), m in 1usize..9, latent in 1usize..4) {
        let c = Circuit::new(CircuitConfig::new(m, latent, seed, -10.0)).unwrap();
        let back = Circuit::from_bytes(&c.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), c.to_bytes());
        c.audit_scopes().unwrap();
    }
}
