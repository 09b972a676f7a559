#![allow(dead_code)]

use ltlab::arch::Architecture;
use ltlab::bbn::BbnModel;
use ltlab::nn::{softmax_xent, Affine, Layer, Network, Parameter};
use ltlab::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps exact zeros (dead
/// ReLUs) from dividing rounding noise by zero.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn gaussian(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

pub fn labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// 1 to 4 Affine layers of width 1..=16, each optionally followed by ReLU.
pub fn random_network(rng: &mut ChaCha8Rng) -> Network {
    let depth = rng.random_range(1..=4);
    let mut width = rng.random_range(1..=16);
    let mut layers = Vec::new();
    for i in 0..depth {
        let out = if i + 1 == depth { rng.random_range(2..=16) } else { rng.random_range(1..=16) };
        layers.push(Layer::Affine(Affine::init(width, out, rng)));
        if i + 1 < depth && rng.random_bool(0.7) {
            layers.push(Layer::Relu);
        }
        width = out;
    }
    let mut net = Network::new(layers).unwrap();
    jitter_biases(net.params_mut(), rng);
    net
}

fn xent(net: &Network, x: &Tensor, y: &[usize]) -> f64 {
    softmax_xent(&net.predict(x).unwrap(), y).unwrap().0
}

fn perturb_all<M, F>(model: &mut M, params: impl Fn(&mut M) -> Vec<&mut Parameter>, loss: F, analytic: &[f64]) -> f64
where
    F: Fn(&M) -> f64,
{
    let sizes: Vec<usize> = params(model).iter().map(|p| p.value.len()).collect();
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for (pi, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            let orig = params(model)[pi].value.values()[j];
            params(model)[pi].value.values_mut()[j] = orig + FD_STEP;
            let plus = loss(model);
            params(model)[pi].value.values_mut()[j] = orig - FD_STEP;
            let minus = loss(model);
            params(model)[pi].value.values_mut()[j] = orig;
            worst = worst.max(rel_err(analytic[k], (plus - minus) / (2.0 * FD_STEP)));
            k += 1;
        }
    }
    worst
}

/// Worst relative error between backprop and central differences over
/// every parameter entry of `net` under mean cross-entropy.
pub fn network_gradcheck(net: &Network, x: &Tensor, y: &[usize]) -> f64 {
    let mut net = net.clone();
    net.zero_grad();
    let acts = net.forward(x).unwrap();
    let (_, g) = softmax_xent(acts.output(), y).unwrap();
    net.backward(&acts, &g).unwrap();
    let analytic: Vec<f64> = net.params().iter().flat_map(|p| p.grad.values().to_vec()).collect();
    perturb_all(&mut net, |n| n.params_mut(), |n| xent(n, x, y), &analytic)
}

/// Moves zero-initialized biases off zero. With exact-zero biases a sample
/// whose inputs to a layer are all zero sits on a ReLU kink, where central
/// differences are meaningless.
pub fn jitter_biases(params: Vec<&mut Parameter>, rng: &mut ChaCha8Rng) {
    for p in params {
        if p.value.shape().len() == 1 {
            for v in p.value.values_mut() {
                *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
}

/// Trunk 4→4, branches 4→3, C = 3, biases jittered.
pub fn tiny_bbn(seed: u64) -> BbnModel {
    let arch = Architecture {
        trunk: vec![4],
        branch: vec![3],
    };
    let mut m = BbnModel::new(&arch, 4, 3, seed).unwrap();
    jitter_biases(m.params_mut(), &mut rng(seed));
    m
}

/// Same check for the full bilateral loss.
pub fn bbn_gradcheck(model: &BbnModel, x_c: &Tensor, y_c: &[usize], x_r: &Tensor, y_r: &[usize], alpha: f64) -> f64 {
    let mut m = model.clone();
    m.zero_grad();
    m.accumulate_gradients(x_c, y_c, x_r, y_r, alpha).unwrap();
    let analytic: Vec<f64> = m.params().iter().flat_map(|p| p.grad.values().to_vec()).collect();
    let loss = |m: &BbnModel| m.clone().accumulate_gradients(x_c, y_c, x_r, y_r, alpha).unwrap();
    perturb_all(&mut m, |m| m.params_mut(), loss, &analytic)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
