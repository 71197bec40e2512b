//! Finite-difference verification of every differentiable graph op.
//!
//! Central differences (h = 1e-5, f64) are the independent oracle; autodiff
//! gradients must agree to relative error < 1e-4 on random small shapes.

use mtead_numeric::graph::{ActKind, Graph, Var};
use mtead_numeric::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>) -> Tensor {
    let n: usize = dims.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(dims, data).unwrap().param()
}

/// Checks autodiff gradients of `f` (a scalar-valued graph program over the
/// given inputs) against central finite differences on every input element.
fn gradcheck(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) {
    let eval = |tensors: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t)).collect();
        let loss = f(&mut g, &vars);
        g.value(loss)[0]
    };

    // Autodiff pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let loss = f(&mut g, &vars);
    g.backward(loss).unwrap();
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| g.grad(*v).expect("input requires grad").to_vec())
        .collect();

    // Finite differences, one element at a time.
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for ei in 0..input.numel() {
            let orig = input.data()[ei];
            work[ti].data_mut()[ei] = orig + H;
            let up = eval(&work);
            work[ti].data_mut()[ei] = orig - H;
            let down = eval(&work);
            work[ti].data_mut()[ei] = orig;
            let fd = (up - down) / (2.0 * H);
            let ad = grads[ti][ei];
            let denom = ad.abs().max(fd.abs()).max(1e-4);
            assert!(
                (ad - fd).abs() / denom < TOL,
                "gradient mismatch at input {ti} element {ei}: autodiff {ad} vs finite-diff {fd}"
            );
        }
    }
}

#[test]
fn matmul_grad() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_tensor(&mut rng, vec![3, 4]);
    let b = random_tensor(&mut rng, vec![4, 2]);
    gradcheck(&[a, b], |g, v| {
        let c = g.matmul(v[0], v[1]).unwrap();
        g.sum(c)
    });
}

#[test]
fn elementwise_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_tensor(&mut rng, vec![2, 3]);
    let b = random_tensor(&mut rng, vec![2, 3]);
    gradcheck(&[a.clone(), b.clone()], |g, v| {
        let s = g.add(v[0], v[1]).unwrap();
        let d = g.sub(s, v[1]).unwrap();
        let m = g.mul(d, v[0]).unwrap();
        let sc = g.scale(m, 1.7);
        let sh = g.add_scalar(sc, 0.3);
        g.sum(sh)
    });
}

#[test]
fn bias_and_broadcast_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(&mut rng, vec![4, 3]);
    let bias = random_tensor(&mut rng, vec![3]);
    gradcheck(&[a, bias], |g, v| {
        let y = g.add_bias(v[0], v[1]).unwrap();
        let b = g.broadcast_rows(v[1], 4).unwrap();
        let z = g.mul(y, b).unwrap();
        g.sum(z)
    });
}

#[test]
fn activation_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [ActKind::Sigmoid, ActKind::Tanh, ActKind::Softmax] {
        let a = random_tensor(&mut rng, vec![3, 5]);
        gradcheck(&[a], move |g, v| {
            let y = g.activation(v[0], kind);
            let w = g.mul(y, y).unwrap(); // make softmax loss non-constant
            g.sum(w)
        });
    }
    // Relu checked away from the kink at zero.
    let data: Vec<f64> = (0..12)
        .map(|i| if i % 2 == 0 { 0.5 + i as f64 * 0.1 } else { -0.5 - i as f64 * 0.1 })
        .collect();
    let a = Tensor::new(vec![3, 4], data).unwrap().param();
    gradcheck(&[a], |g, v| {
        let y = g.relu(v[0]);
        g.sum(y)
    });
}

#[test]
fn shape_op_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_tensor(&mut rng, vec![2, 3]);
    let b = random_tensor(&mut rng, vec![2, 3]);
    gradcheck(&[a, b], |g, v| {
        let t = g.transpose(v[0]).unwrap();
        let r = g.reshape(t, vec![3, 2]).unwrap();
        let c = g.concat_last(&[r, r]).unwrap();
        let st = g.stack_axis0(&[v[0], v[1]]).unwrap();
        let sw = g.swap_axes01(st).unwrap();
        let sl = g.slice_axis0(sw, 1).unwrap();
        let s1 = g.sum(c);
        let s2 = g.sum(sl);
        let total = g.add(s1, s2).unwrap();
        g.sum(total)
    });
}

#[test]
fn sqrt_and_norm_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pos = {
        let mut t = random_tensor(&mut rng, vec![2, 3]);
        t.data_mut().iter_mut().for_each(|v| *v = v.abs() + 0.5);
        t
    };
    gradcheck(&[pos], |g, v| {
        let y = g.sqrt(v[0]).unwrap();
        g.sum(y)
    });

    let x = random_tensor(&mut rng, vec![6, 3]);
    gradcheck(&[x], |g, v| {
        let y = g.norm_time(v[0], 1e-5).unwrap();
        let z = g.mul(y, y).unwrap();
        g.sum(z)
    });
}

#[test]
fn conv1d_grad() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for stride in [1usize, 2] {
        let x = random_tensor(&mut rng, vec![7, 3]);
        let w = random_tensor(&mut rng, vec![3, 3, 2]);
        let b = random_tensor(&mut rng, vec![2]);
        gradcheck(&[x, w, b], move |g, v| {
            let y = g.conv1d(v[0], v[1], v[2], stride).unwrap();
            let z = g.mul(y, y).unwrap();
            g.sum(z)
        });
    }
}

#[test]
fn lstm_grad_both_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for reverse in [false, true] {
        let x = random_tensor(&mut rng, vec![2, 5, 3]);
        let wx = {
            let mut t = random_tensor(&mut rng, vec![3, 8]);
            t.data_mut().iter_mut().for_each(|v| *v *= 0.5);
            t
        };
        let wh = {
            let mut t = random_tensor(&mut rng, vec![2, 8]);
            t.data_mut().iter_mut().for_each(|v| *v *= 0.5);
            t
        };
        let b = random_tensor(&mut rng, vec![8]);
        gradcheck(&[x, wx, wh, b], move |g, v| {
            let y = g.lstm(v[0], v[1], v[2], v[3], reverse).unwrap();
            let z = g.mul(y, y).unwrap();
            g.sum(z)
        });
    }
}

#[test]
fn bce_grad() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let logits = random_tensor(&mut rng, vec![4, 2]);
    let labels = Tensor::new(
        vec![4, 2],
        (0..8).map(|i| (i % 2) as f64).collect(),
    )
    .unwrap();
    gradcheck(&[logits], move |g, v| {
        let p = g.sigmoid(v[0]);
        g.bce_sum(p, &labels).unwrap()
    });
}

#[test]
fn random_mlp_matches_finite_differences() {
    // Three-layer MLP with tanh nonlinearities, the classic end-to-end case.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random_tensor(&mut rng, vec![2, 4]);
    let w1 = random_tensor(&mut rng, vec![4, 6]);
    let b1 = random_tensor(&mut rng, vec![6]);
    let w2 = random_tensor(&mut rng, vec![6, 5]);
    let b2 = random_tensor(&mut rng, vec![5]);
    let w3 = random_tensor(&mut rng, vec![5, 1]);
    gradcheck(&[x, w1, b1, w2, b2, w3], |g, v| {
        let h1 = g.matmul(v[0], v[1]).unwrap();
        let h1 = g.add_bias(h1, v[2]).unwrap();
        let h1 = g.tanh(h1);
        let h2 = g.matmul(h1, v[3]).unwrap();
        let h2 = g.add_bias(h2, v[4]).unwrap();
        let h2 = g.tanh(h2);
        let y = g.matmul(h2, v[5]).unwrap();
        g.sum(y)
    });
}

#[test]
fn forward_and_grads_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = random_tensor(&mut rng, vec![2, 6, 3]);
        let wx = random_tensor(&mut rng, vec![3, 16]);
        let wh = random_tensor(&mut rng, vec![4, 16]);
        let b = random_tensor(&mut rng, vec![16]);
        let mut g = Graph::new();
        let vars = [g.leaf(&x), g.leaf(&wx), g.leaf(&wh), g.leaf(&b)];
        let y = g.lstm(vars[0], vars[1], vars[2], vars[3], false).unwrap();
        let z = g.mul(y, y).unwrap();
        let loss = g.sum(z);
        g.backward(loss).unwrap();
        let value = g.value(loss)[0];
        let grads: Vec<Vec<f64>> = vars.iter().map(|v| g.grad(*v).unwrap().to_vec()).collect();
        (value, grads)
    };
    let (v1, g1) = run();
    let (v2, g2) = run();
    assert_eq!(v1.to_bits(), v2.to_bits());
    for (a, b) in g1.iter().zip(&g2) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
