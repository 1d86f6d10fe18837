mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ratt_core::corpus::{draw_subsample_mask, SubsampleMask};
use ratt_core::model::ParamGroup;
use ratt_core::numerics::{lstm_step, Graph, LstmWeights, NodeId, Tensor};
use ratt_core::training::Mode;

type Builder = dyn Fn(&mut Graph<'_>, &[NodeId]) -> NodeId;

/// Worst relative error (see `common::relative_error`) between tape gradients and central differences of
/// the scalar built by `build` over every entry of every leaf.
fn check(leaves: &[Tensor], build: &Builder) -> f64 {
    let eval = |ls: &[Tensor]| {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ls.iter().map(|t| g.variable(t.clone())).collect();
        let out = build(&mut g, &ids);
        g.scalar(out)
    };
    let mut g = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &ids);
    let grads = g.backward(out).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (li, leaf) in leaves.iter().enumerate() {
        let analytic = grads.wrt(ids[li]);
        for k in 0..leaf.len() {
            let mut ls = leaves.to_vec();
            ls[li].data_mut()[k] += h;
            let up = eval(&ls);
            ls[li].data_mut()[k] -= 2.0 * h;
            let down = eval(&ls);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[k];
            worst = worst.max(common::relative_error(a, numeric));
        }
    }
    worst
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matvec_sum_gradient(w in vec_strategy(12), x in vec_strategy(4)) {
        let leaves = [Tensor::matrix(3, 4, w).unwrap(), Tensor::vector(x)];
        let err = check(&leaves, &|g, ids| {
            let y = g.matvec(ids[0], ids[1]).unwrap();
            let t = g.tanh(y);
            let parts: Vec<NodeId> = (0..3).map(|i| g.slice(t, i, 1).unwrap()).collect();
            g.sum(&parts).unwrap()
        });
        prop_assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn softmax_jacobian(u in vec_strategy(5), c in vec_strategy(5)) {
        let leaves = [Tensor::vector(u)];
        let weights = Tensor::vector(c);
        let err = check(&leaves, &move |g, ids| {
            let p = g.softmax(ids[0]).unwrap();
            let w = g.constant(weights.clone());
            g.dot(p, w).unwrap()
        });
        prop_assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn lstm_step_gradient(
        x in vec_strategy(3),
        h0 in vec_strategy(2),
        c0 in vec_strategy(2),
        wih in vec_strategy(24),
        whh in vec_strategy(16),
        b in vec_strategy(8),
    ) {
        let leaves = [
            Tensor::vector(x),
            Tensor::vector(h0),
            Tensor::vector(c0),
            Tensor::matrix(8, 3, wih).unwrap(),
            Tensor::matrix(8, 2, whh).unwrap(),
            Tensor::vector(b),
        ];
        let err = check(&leaves, &|g, ids| {
            let w = LstmWeights { w_ih: ids[3], w_hh: ids[4], bias: ids[5] };
            let (h, c) = lstm_step(g, ids[0], ids[1], ids[2], &w).unwrap();
            let (h2, c2) = lstm_step(g, ids[0], h, c, &w).unwrap();
            let hc = g.mul(h2, c2).unwrap();
            let s = g.concat(&[hc, h2]).unwrap();
            let ones = g.constant(Tensor::vector(vec![1.0, -0.5, 0.25, 2.0]));
            g.dot(s, ones).unwrap()
        });
        prop_assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn attention_pooling_losses(u in vec_strategy(4), items in vec_strategy(8), raw in vec_strategy(4)) {
        let target: Vec<f64> = {
            let e: Vec<f64> = raw.iter().map(|r| r.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        };
        let leaves = [Tensor::vector(u), Tensor::vector(items)];
        let err = check(&leaves, &move |g, ids| {
            let a = g.softmax(ids[0]).unwrap();
            let hs: Vec<NodeId> = (0..4).map(|i| g.slice(ids[1], 2 * i, 2).unwrap()).collect();
            let z = g.weighted_sum(a, &hs).unwrap();
            let y = g.softmax(z).unwrap();
            let clf = g.neg_log_pick(y, 1).unwrap();
            let kl = g.kl_div(target.clone(), a).unwrap();
            let r = g.sigmoid(ids[0]);
            let bce = g.bce_mean(vec![0.0, 1.0, 1.0, 0.0], r).unwrap();
            let half = g.scale(kl, 0.5);
            g.sum(&[clf, half, bce]).unwrap()
        });
        prop_assert!(err < 1e-6, "relative error {err}");
    }
}

fn model_check(mode: Mode, gamma: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let insts: Vec<_> = (0..6).map(|i| common::random_instance(&mut rng, i, 5)).collect();
    let model = common::small_model(3);
    let mut config = common::mode_config(mode);
    config.gamma = gamma;
    let mask = if gamma < 1.0 {
        draw_subsample_mask(&insts, gamma, 5).unwrap()
    } else {
        SubsampleMask::full(&insts)
    };
    for inst in &insts {
        for group in ParamGroup::ALL {
            let err = common::gradient_error(&model, inst, &config, &mask, group, 16, 1e-5);
            assert!(err < 1e-4, "{mode:?} {} instance {}: {err}", group.name(), inst.id);
        }
    }
}

#[test]
fn full_model_gradients_baseline() {
    model_check(Mode::Baseline, 1.0);
}

#[test]
fn full_model_gradients_attn_trained_subsampled() {
    model_check(Mode::AttnTrained, 0.5);
}

#[test]
fn full_model_gradients_pred_rationales() {
    model_check(Mode::PredRationales, 1.0);
}
