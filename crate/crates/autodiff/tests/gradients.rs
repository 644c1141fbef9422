use bbf_autodiff::{Graph, ParameterSet, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "support/ops.rs"]
mod ops;

use ops::{all_op_checks, TOL};

#[test]
fn every_op_matches_central_differences() {
    let checks = all_op_checks();
    for op in ops::OPS {
        assert!(checks.iter().any(|c| c.op == op), "`{op}` has no check");
    }
    for c in checks {
        assert!(c.checked > 0, "{}: nothing checked", c.op);
        assert!(c.max_rel_error < TOL, "{}: max relative error {}", c.op, c.max_rel_error);
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn two_losses(set: &ParameterSet<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let grads_of = |which: u8| {
        let mut g = Graph::new();
        let w = g.param(set, "w", true).unwrap();
        let r = g.relu(w).unwrap();
        let l1 = g.sum(r).unwrap();
        let sq = g.mul(w, w).unwrap();
        let l2 = g.mean(sq).unwrap();
        let loss = match which {
            0 => l1,
            1 => l2,
            _ => g.add(l1, l2).unwrap(),
        };
        g.backward(loss).unwrap().get("w").unwrap().to_vec()
    };
    (grads_of(0), grads_of(1), grads_of(2))
}

proptest! {
    #[test]
    fn tape_is_linear_in_the_loss(vals in prop::collection::vec(-3.0f64..3.0, 1..12)) {
        let mut set = ParameterSet::new(0);
        set.insert("w", Tensor::new(vec![vals.len()], vals).unwrap()).unwrap();
        let (g1, g2, gsum) = two_losses(&set);
        for i in 0..gsum.len() {
            prop_assert!((g1[i] + g2[i] - gsum[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_backward_accumulates(vals in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let mut set = ParameterSet::new(0);
        set.insert("w", Tensor::new(vec![vals.len()], vals.clone()).unwrap()).unwrap();
        let grads = {
            let mut g = Graph::new();
            let w = g.param(&set, "w", true).unwrap();
            let sq = g.mul(w, w).unwrap();
            let loss = g.sum(sq).unwrap();
            g.backward(loss).unwrap()
        };
        set.accumulate(&grads).unwrap();
        set.accumulate(&grads).unwrap();
        let acc = set.get("w").unwrap().grad().unwrap();
        for (a, v) in acc.iter().zip(&vals) {
            prop_assert!((a - 4.0 * v).abs() < 1e-12);
        }
        set.zero_grad();
        prop_assert!(set.get("w").unwrap().grad().unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[2, 3, 6, 6]);
        let w = random_tensor(&mut rng, &[4, 3, 3, 3]);
        let run = || {
            let mut g = Graph::<f64>::new();
            let xv = g.constant(x.clone()).unwrap();
            let wv = g.constant(w.clone()).unwrap();
            let y = g.conv2d(xv, wv, None, 1, 1).unwrap();
            let y = g.maxpool2d(y, 3, 2).unwrap();
            g.data(y).to_vec()
        };
        prop_assert_eq!(run(), run());
    }
}
