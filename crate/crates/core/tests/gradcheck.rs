//! Finite-difference gradient verification. The numeric side uses forward
//! evaluations only (central differences, eps = 1e-5 at f64), so it is an
//! oracle independent of every backward-pass code path.

use std::sync::Arc;

use wavenet_core::attention::{AttentionBlock, SqueezeMode};
use wavenet_core::fdcheck::{central_diff, max_rel_err};
use wavenet_core::filterbank::build_assignment_scaled;
use wavenet_core::nn::{
    census, cross_entropy_label_smoothing, Grads, MicroNet, Parameterized,
};
use wavenet_core::{Rng, Tensor};

const EPS: f64 = 1e-5;
const BLOCK_TOL: f64 = 1e-6;
const NET_TOL: f64 = 1e-5;
const SEEDS: [u64; 5] = [101, 202, 303, 404, 505];

fn make_block(mode: SqueezeMode, seed: u64) -> AttentionBlock {
    let assignment = (mode == SqueezeMode::WavenetC).then(|| {
        Arc::new(build_assignment_scaled(&mut Rng::new(seed ^ 0xfeed), 2, 8).unwrap())
    });
    AttentionBlock::new(8, 2, mode, assignment, &mut Rng::new(seed)).unwrap()
}

/// Scalar objective: <forward(x), probe>, a fixed linear functional of the
/// block output.
fn block_objective(block: &AttentionBlock, x: &Tensor, probe: &Tensor) -> f64 {
    let (scaled, _) = block.forward(x).unwrap();
    scaled.dot(probe).unwrap()
}

fn check_block(mode: SqueezeMode, seed: u64) {
    let block = make_block(mode, seed);
    let mut rng = Rng::new(seed ^ 0x5eed);
    let x = Tensor::rand_range(&mut rng, &[2, 8, 4, 4], -1.0, 1.0);
    let probe = Tensor::rand_range(&mut rng, &[2, 8, 4, 4], -1.0, 1.0);

    let (_, state) = block.forward(&x).unwrap();
    let (gx, grads) = block.backward(&state, &probe).unwrap();

    // Input gradient.
    let mut f = |vals: &[f64]| {
        let xt = Tensor::new(x.dims(), vals.to_vec()).unwrap();
        block_objective(&block, &xt, &probe)
    };
    let num = central_diff(&mut f, x.data(), EPS);
    let err = max_rel_err(gx.data(), &num);
    assert!(err <= BLOCK_TOL, "{} input grad err {err:.3e}", mode.as_str());

    // w1.
    let mut f = |vals: &[f64]| {
        let mut b = block.clone();
        b.w1 = Tensor::new(block.w1.dims(), vals.to_vec()).unwrap();
        block_objective(&b, &x, &probe)
    };
    let num = central_diff(&mut f, block.w1.data(), EPS);
    let err = max_rel_err(grads.w1.data(), &num);
    assert!(err <= BLOCK_TOL, "{} w1 grad err {err:.3e}", mode.as_str());

    // w2.
    let mut f = |vals: &[f64]| {
        let mut b = block.clone();
        b.w2 = Tensor::new(block.w2.dims(), vals.to_vec()).unwrap();
        block_objective(&b, &x, &probe)
    };
    let num = central_diff(&mut f, block.w2.data(), EPS);
    let err = max_rel_err(grads.w2.data(), &num);
    assert!(err <= BLOCK_TOL, "{} w2 grad err {err:.3e}", mode.as_str());

    // Combination weights (wavenet only).
    if let (Some(c), Some(gc)) = (&block.combine, &grads.combine) {
        let mut f = |vals: &[f64]| {
            let mut b = block.clone();
            b.combine = Some(Tensor::new(&[4], vals.to_vec()).unwrap());
            block_objective(&b, &x, &probe)
        };
        let num = central_diff(&mut f, c.data(), EPS);
        let err = max_rel_err(gc.data(), &num);
        assert!(err <= BLOCK_TOL, "{} combine grad err {err:.3e}", mode.as_str());
        for v in num {
            assert!(v.is_finite());
        }
    }
}

#[test]
fn attention_block_gradients_gap() {
    for seed in SEEDS {
        check_block(SqueezeMode::Gap, seed);
    }
}

#[test]
fn attention_block_gradients_haar() {
    for seed in SEEDS {
        check_block(SqueezeMode::Haar, seed);
    }
}

#[test]
fn attention_block_gradients_wavenet() {
    for seed in SEEDS {
        check_block(SqueezeMode::Wavenet, seed);
    }
}

#[test]
fn attention_block_gradients_wavenet_c() {
    for seed in SEEDS {
        check_block(SqueezeMode::WavenetC, seed);
    }
}

#[test]
fn combine_gradient_at_init_is_finite_and_matches_differences() {
    // At the (1, 0, 0, 0) initialization the detail paths carry no forward
    // signal, but their gradients must still be exact.
    let block = make_block(SqueezeMode::Wavenet, 777);
    let mut rng = Rng::new(778);
    let x = Tensor::rand_range(&mut rng, &[1, 8, 8, 8], -1.0, 1.0);
    let probe = Tensor::rand_range(&mut rng, &[1, 8, 8, 8], -1.0, 1.0);
    let (_, state) = block.forward(&x).unwrap();
    let (_, grads) = block.backward(&state, &probe).unwrap();
    let gc = grads.combine.unwrap();
    let mut f = |vals: &[f64]| {
        let mut b = block.clone();
        b.combine = Some(Tensor::new(&[4], vals.to_vec()).unwrap());
        block_objective(&b, &x, &probe)
    };
    let num = central_diff(&mut f, block.combine.as_ref().unwrap().data(), EPS);
    for (&a, &n) in gc.data().iter().zip(&num) {
        assert!(a.is_finite() && n.is_finite());
    }
    assert!(max_rel_err(gc.data(), &num) <= BLOCK_TOL);
}

fn micro_loss(net: &MicroNet, x: &Tensor, labels: &[usize]) -> f64 {
    let mut probe = net.clone();
    let logits = probe.forward(x, true).unwrap();
    let (loss, _) = cross_entropy_label_smoothing(&logits, labels, 0.1).unwrap();
    loss
}

#[test]
fn micro_net_gradients_across_seeds() {
    for seed in SEEDS {
        let mode = match seed % 4 {
            0 => SqueezeMode::Gap,
            1 => SqueezeMode::Haar,
            2 => SqueezeMode::Wavenet,
            _ => SqueezeMode::WavenetC,
        };
        let assignment = (mode == SqueezeMode::WavenetC).then(|| {
            Arc::new(build_assignment_scaled(&mut Rng::new(seed ^ 0xaaaa), 2, 8).unwrap())
        });
        let mut net = MicroNet::new(&mut Rng::new(seed), mode, 3, assignment).unwrap();
        let mut rng = Rng::new(seed ^ 0xbeef);
        let x = Tensor::rand_range(&mut rng, &[2, 1, 8, 8], -1.0, 1.0);
        let labels = [seed as usize % 3, (seed as usize + 1) % 3];

        let logits = net.forward(&x, true).unwrap();
        let (_, dlogits) = cross_entropy_label_smoothing(&logits, &labels, 0.1).unwrap();
        let mut grads = Grads::new();
        let gx = net.backward(&dlogits, &mut grads).unwrap();

        for (name, _) in census(&net) {
            let mut current = Vec::new();
            net.visit_params(&mut |n, t| {
                if n == name {
                    current = t.data().to_vec();
                }
            });
            let mut f = |vals: &[f64]| {
                let mut probe = net.clone();
                probe.visit_params_mut(&mut |n, t| {
                    if n == name {
                        t.data_mut().copy_from_slice(vals);
                    }
                });
                micro_loss(&probe, &x, &labels)
            };
            let num = central_diff(&mut f, &current, EPS);
            let err = max_rel_err(grads.get(&name).unwrap().data(), &num);
            assert!(
                err <= NET_TOL,
                "seed {seed} mode {} param {name}: err {err:.3e}",
                mode.as_str()
            );
        }

        // Input gradient too.
        let mut f = |vals: &[f64]| {
            let xt = Tensor::new(x.dims(), vals.to_vec()).unwrap();
            micro_loss(&net, &xt, &labels)
        };
        let num = central_diff(&mut f, x.data(), EPS);
        let err = max_rel_err(gx.data(), &num);
        assert!(err <= NET_TOL, "seed {seed} input grad err {err:.3e}");
    }
}
