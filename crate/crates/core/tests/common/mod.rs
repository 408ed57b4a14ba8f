//! Random model generators and naive reference implementations shared by
//! the integration tests. Nothing here calls the library's probability code.

#![allow(dead_code)]

use lrbn::{DeepLrbn, LatentState, LayerParams, VisibleKind};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_layer(
    rng: &mut ChaCha8Rng,
    n_lower: usize,
    n_upper: usize,
    scale: f64,
) -> LayerParams {
    let w = Array2::from_shape_fn((n_lower, n_upper), |_| rng.random_range(-scale..scale));
    let b = (0..n_lower)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    let d = (0..n_upper)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    LayerParams::new(w.view(), b, d).unwrap()
}

pub fn random_model(
    rng: &mut ChaCha8Rng,
    sizes: &[usize],
    kind: VisibleKind,
    scale: f64,
) -> DeepLrbn {
    let layers = sizes
        .windows(2)
        .map(|p| random_layer(rng, p[0], p[1], scale))
        .collect();
    DeepLrbn::new(layers, kind).unwrap()
}

pub fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect()
}

pub fn random_binary(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    random_bits(rng, n).into_iter().map(f64::from).collect()
}

pub fn random_real(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

pub fn random_visible(rng: &mut ChaCha8Rng, n: usize, kind: VisibleKind) -> Vec<f64> {
    match kind {
        VisibleKind::Binary => random_binary(rng, n),
        VisibleKind::Gaussian => random_real(rng, n),
    }
}

/// All binary vectors of length `n`, built by recursive doubling.
pub fn all_states(n: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                let mut a = s.clone();
                a.push(0);
                let mut b = s;
                b.push(1);
                [a, b]
            })
            .collect();
    }
    out
}

fn ln1pexp(a: f64) -> f64 {
    (1.0 + a.exp()).ln()
}

/// `log P(lower | upper)` from the textbook formula, plain loops.
pub fn naive_conditional(p: &LayerParams, upper: &[u8], lower: &[f64], kind: VisibleKind) -> f64 {
    let mut total = 0.0;
    for i in 0..p.n_lower() {
        let mut a = p.b()[i];
        for j in 0..p.n_upper() {
            a += p.weight(i, j) * f64::from(upper[j]);
        }
        total += match kind {
            VisibleKind::Binary => lower[i] * a - ln1pexp(a),
            VisibleKind::Gaussian => {
                -0.5 * (lower[i] - a).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        };
    }
    total
}

pub fn naive_prior(d: &[f64], h: &[u8]) -> f64 {
    d.iter()
        .zip(h)
        .map(|(&dj, &hj)| {
            if hj == 1 {
                dj - ln1pexp(dj)
            } else {
                -ln1pexp(dj)
            }
        })
        .sum()
}

pub fn naive_deep_joint(model: &DeepLrbn, x: &[f64], s: &LatentState) -> f64 {
    let top = model.depth() - 1;
    let mut total = naive_prior(model.top().d(), &s.layers[top]);
    for l in (1..=top).rev() {
        let below: Vec<f64> = s.layers[l - 1].iter().map(|&v| f64::from(v)).collect();
        total += naive_conditional(
            &model.layers()[l],
            &s.layers[l],
            &below,
            VisibleKind::Binary,
        );
    }
    total + naive_conditional(&model.layers()[0], &s.layers[0], x, model.visible_kind())
}

pub fn naive_pair_joint(p: &LayerParams, x: &[f64], h: &[u8], kind: VisibleKind) -> f64 {
    naive_prior(p.d(), h) + naive_conditional(p, h, x, kind)
}

/// Splits a flat bit vector into per-layer states.
pub fn split_state(bits: &[u8], sizes: &[usize]) -> LatentState {
    let mut layers = Vec::new();
    let mut at = 0;
    for &n in sizes {
        layers.push(bits[at..at + n].to_vec());
        at += n;
    }
    LatentState::new(layers)
}

pub fn to_f64(h: &[u8]) -> Vec<f64> {
    h.iter().map(|&v| f64::from(v)).collect()
}

/// Naive exhaustive argmax, first maximum in enumeration order.
pub fn naive_map(p: &LayerParams, x: &[f64], kind: VisibleKind) -> (Vec<u8>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for h in all_states(p.n_upper()) {
        let v = naive_pair_joint(p, x, &h, kind);
        if v > best.1 {
            best = (h, v);
        }
    }
    best
}
