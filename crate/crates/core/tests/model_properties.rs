mod common;

use common::*;
use lrbn::model::{
    conditional_logprob_visible, deserialize, joint_logprob, prior_logprob, serialize,
};
use lrbn::{DeepLrbn, LatentState, LrbnError, VisibleKind};
use proptest::prelude::*;

#[test]
fn discrete_joint_sums_to_one_over_all_configurations() {
    let mut r = rng(11);
    let model = random_model(&mut r, &[3, 4], VisibleKind::Binary, 2.0);
    let mut total = 0.0;
    for x in all_states(3) {
        for h in all_states(4) {
            total += joint_logprob(&model, &to_f64(&x), &LatentState::new(vec![h]))
                .unwrap()
                .exp();
        }
    }
    assert!((total - 1.0).abs() < 1e-10, "{total}");
}

#[test]
fn deep_joint_normalises() {
    let mut r = rng(12);
    for sizes in [[4usize, 3, 2].as_slice(), &[3, 5, 4, 2], &[2, 2, 2, 2, 2]] {
        let model = random_model(&mut r, sizes, VisibleKind::Binary, 1.5);
        let latent: Vec<usize> = sizes[1..].to_vec();
        let mut total = 0.0;
        for x in all_states(sizes[0]) {
            for bits in all_states(latent.iter().sum()) {
                let s = split_state(&bits, &latent);
                total += joint_logprob(&model, &to_f64(&x), &s).unwrap().exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "{sizes:?}: {total}");
    }
}

#[test]
fn joint_matches_naive_decomposition() {
    let mut r = rng(13);
    for kind in [VisibleKind::Binary, VisibleKind::Gaussian] {
        for _ in 0..50 {
            let model = random_model(&mut r, &[5, 4, 3, 2], kind, 2.0);
            let x = random_visible(&mut r, 5, kind);
            let s = LatentState::new(vec![
                random_bits(&mut r, 4),
                random_bits(&mut r, 3),
                random_bits(&mut r, 2),
            ]);
            let got = joint_logprob(&model, &x, &s).unwrap();
            let want = naive_deep_joint(&model, &x, &s);
            assert!(
                (got - want).abs() < 1e-12 * want.abs().max(1.0),
                "{got} vs {want}"
            );
        }
    }
}

#[test]
fn single_pair_matches_energy_forms() {
    let mut r = rng(14);
    for _ in 0..50 {
        let model = random_model(&mut r, &[4, 3], VisibleKind::Binary, 2.0);
        let p = &model.layers()[0];
        let x = random_binary(&mut r, 4);
        let h = random_bits(&mut r, 3);
        // exp(xᵀWh + bᵀx + dᵀh) / Π_i(1+e^{a_i}) / Π_j(1+e^{d_j})
        let mut log_num = 0.0;
        let mut log_den = 0.0;
        for i in 0..4 {
            let mut a = p.b()[i];
            for j in 0..3 {
                log_num += x[i] * p.weight(i, j) * f64::from(h[j]);
                a += p.weight(i, j) * f64::from(h[j]);
            }
            log_num += p.b()[i] * x[i];
            log_den += (1.0 + a.exp()).ln();
        }
        for j in 0..3 {
            log_num += p.d()[j] * f64::from(h[j]);
            log_den += (1.0 + p.d()[j].exp()).ln();
        }
        let got = joint_logprob(&model, &x, &LatentState::new(vec![h])).unwrap();
        assert!((got - (log_num - log_den)).abs() < 1e-10);
    }
    for _ in 0..50 {
        let model = random_model(&mut r, &[4, 3], VisibleKind::Gaussian, 2.0);
        let p = &model.layers()[0];
        let x = random_real(&mut r, 4);
        let h = random_bits(&mut r, 3);
        // −½‖x − Wh − b‖² + dᵀh − Σ log(1+e^{d_j}) − (n/2) log 2π
        let mut v = -2.0 * (2.0 * std::f64::consts::PI).ln();
        for i in 0..4 {
            let mean = p.b()[i]
                + (0..3)
                    .map(|j| p.weight(i, j) * f64::from(h[j]))
                    .sum::<f64>();
            v -= 0.5 * (x[i] - mean).powi(2);
        }
        for j in 0..3 {
            v += p.d()[j] * f64::from(h[j]) - (1.0 + p.d()[j].exp()).ln();
        }
        let got = joint_logprob(&model, &x, &LatentState::new(vec![h])).unwrap();
        assert!((got - v).abs() < 1e-10);
    }
}

#[test]
fn worked_values() {
    assert!((prior_logprob(&[0.0, 0.0], &[1, 0]).unwrap() - 0.25f64.ln()).abs() < 1e-12);
    assert!((prior_logprob(&[2.0], &[1]).unwrap() + 0.126928).abs() < 1e-6);
    assert_eq!(prior_logprob(&[], &[]).unwrap(), 0.0);
    let m = DeepLrbn::zeros(&[3, 2], VisibleKind::Binary).unwrap();
    let v = conditional_logprob_visible(
        &m.layers()[0],
        &[1, 0],
        &[1.0, 0.0, 1.0],
        VisibleKind::Binary,
    )
    .unwrap();
    assert!((v + 2.079442).abs() < 1e-6);
    assert!(matches!(
        conditional_logprob_visible(
            &m.layers()[0],
            &[1, 0],
            &[1.0, 0.5, 1.0],
            VisibleKind::Binary
        ),
        Err(LrbnError::NonBinary { .. })
    ));
}

fn arb_model() -> impl Strategy<Value = DeepLrbn> {
    (
        proptest::collection::vec(1usize..6, 2..5),
        any::<u64>(),
        prop_oneof![Just(VisibleKind::Binary), Just(VisibleKind::Gaussian)],
    )
        .prop_map(|(sizes, seed, kind)| random_model(&mut rng(seed), &sizes, kind, 3.0))
}

proptest! {
    #[test]
    fn serialization_round_trip_is_identity(model in arb_model()) {
        let bytes = serialize(&model);
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(serialize(&back), bytes);
    }

    #[test]
    fn truncated_containers_are_rejected(model in arb_model(), cut in 0.0f64..1.0) {
        let bytes = serialize(&model);
        let n = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(deserialize(&bytes[..n.min(bytes.len() - 1)]).is_err());
    }
}
