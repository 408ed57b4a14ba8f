//! Reconstruction, ancestral sampling and log-likelihood estimation.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_len, LrbnError, Result};
use crate::inference::{icm_map, init_latent, state_from_index, IcmConfig, MAX_ENUMERATION_BITS};
use crate::math::{sigmoid, softplus, LogSumExp};
use crate::model::{
    conditional_logprob_visible, joint_logprob, visible_logprob_from_activations, DeepLrbn,
    LatentState, VisibleKind,
};
use crate::rng::{self, Rng, Stream};

/// Decodes `x` through its own MAP code: `h* = argmax P(h¹ | x)` by ICM on
/// the first pair, then `x̃ = argmax P(x | h*)`.
///
/// Only `h¹` is inferred, since `x` depends on the deeper layers only
/// through it.
pub fn reconstruct(model: &DeepLrbn, x: &[f64], icm: &IcmConfig) -> Result<Vec<f64>> {
    let pair = &model.layers()[0];
    let kind = model.visible_kind();
    check_len("visible vector", pair.n_lower(), x.len())?;
    let init = init_latent(pair, x, kind)?;
    let r = icm_map(pair, x, &init, icm, kind)?;
    Ok(decode(&r.activations, kind))
}

fn decode(a: &[f64], kind: VisibleKind) -> Vec<f64> {
    match kind {
        VisibleKind::Binary => a
            .iter()
            .map(|&ai| f64::from(u8::from(sigmoid(ai) > 0.5)))
            .collect(),
        VisibleKind::Gaussian => a.to_vec(),
    }
}

/// `‖x − x̃‖²`; on binary data the number of mismatched pixels.
pub fn reconstruction_error(x: &[f64], x_tilde: &[f64]) -> Result<f64> {
    check_len("reconstruction", x.len(), x_tilde.len())?;
    Ok(x.iter().zip(x_tilde).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Mean reconstruction error over the rows of `data`.
pub fn mean_reconstruction_error(
    model: &DeepLrbn,
    data: ArrayView2<'_, f64>,
    icm: &IcmConfig,
) -> Result<f64> {
    if data.nrows() == 0 {
        return Err(LrbnError::EmptyData("no samples to reconstruct"));
    }
    let errors = (0..data.nrows())
        .into_par_iter()
        .map(|m| {
            let x = data.row(m).to_vec();
            reconstruct(model, &x, icm).and_then(|r| reconstruction_error(&x, &r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(errors.iter().sum::<f64>() / data.nrows() as f64)
}

fn bernoulli_layer(logits: &[f64], rng: &mut Rng) -> Vec<u8> {
    logits
        .iter()
        .map(|&z| u8::from(rng.random::<f64>() < sigmoid(z)))
        .collect()
}

/// Draws the latent layers only: `hᴸ` from its prior, then each lower
/// latent layer from its conditional. Visible parameters are not touched.
pub fn sample_latents(model: &DeepLrbn, rng: &mut Rng) -> LatentState {
    let depth = model.depth();
    let mut layers = vec![Vec::new(); depth];
    layers[depth - 1] = bernoulli_layer(model.top().d(), rng);
    for l in (1..depth).rev() {
        let a = model.layers()[l]
            .activations(&layers[l])
            .expect("sampled state matches the layer");
        layers[l - 1] = bernoulli_layer(&a, rng);
    }
    LatentState::new(layers)
}

/// Exact sample `(x, h¹, …, hᴸ)` from the model joint.
pub fn ancestral_sample(model: &DeepLrbn, rng: &mut Rng) -> (Vec<f64>, LatentState) {
    let state = sample_latents(model, rng);
    let a = model.layers()[0]
        .activations(&state.layers[0])
        .expect("sampled state matches the layer");
    let x = match model.visible_kind() {
        VisibleKind::Binary => bernoulli_layer(&a, rng)
            .into_iter()
            .map(f64::from)
            .collect(),
        VisibleKind::Gaussian => a
            .iter()
            .map(|&mean| {
                let z: f64 = StandardNormal.sample(rng);
                mean + z
            })
            .collect(),
    };
    (x, state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CslConfig {
    pub sample_count: usize,
    pub repetitions: usize,
    pub rng_seed: u64,
}

impl Default for CslConfig {
    fn default() -> Self {
        Self {
            sample_count: 1_000_000,
            repetitions: 10,
            rng_seed: 0,
        }
    }
}

impl CslConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 || self.repetitions == 0 {
            return Err(LrbnError::InvalidConfig(
                "CSL needs at least one sample and one repetition".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CslEstimate {
    /// Mean over repetitions.
    pub mean: f64,
    pub per_repetition: Vec<f64>,
    pub sample_count: usize,
}

impl CslEstimate {
    fn from_repetitions(per_repetition: Vec<f64>, sample_count: usize) -> Self {
        let mean = per_repetition.iter().sum::<f64>() / per_repetition.len() as f64;
        Self {
            mean,
            per_repetition,
            sample_count,
        }
    }

    /// Population standard deviation across repetitions.
    pub fn spread(&self) -> f64 {
        let n = self.per_repetition.len() as f64;
        (self
            .per_repetition
            .iter()
            .map(|v| (v - self.mean).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

fn repetition_rng(cfg: &CslConfig, rep: usize) -> Rng {
    rng::stream(cfg.rng_seed, Stream::Csl, rep as u64)
}

/// Conservative sampling-based log-likelihood of one sample:
/// `log mean_{h ∈ S} P(x | h¹)` with `S` drawn by ancestral sampling of the
/// latent layers. Its expectation is a lower bound on `log P(x)`.
///
/// Repetition `r` draws from the stream `(rng_seed, r)`, the same samples
/// [`csl_logprob_batch`] shares across all instances.
pub fn csl_logprob(model: &DeepLrbn, x: &[f64], cfg: &CslConfig) -> Result<CslEstimate> {
    cfg.validate()?;
    let pair = &model.layers()[0];
    check_len("visible vector", pair.n_lower(), x.len())?;
    if model.visible_kind() == VisibleKind::Binary {
        crate::model::check_binary(x)?;
    }
    let per_repetition = (0..cfg.repetitions)
        .map(|rep| {
            let mut rng = repetition_rng(cfg, rep);
            let mut acc = LogSumExp::new();
            for _ in 0..cfg.sample_count {
                let s = sample_latents(model, &mut rng);
                let a = pair
                    .activations(&s.layers[0])
                    .expect("sampled state matches the layer");
                acc.push(visible_logprob_from_activations(
                    &a,
                    x,
                    model.visible_kind(),
                ));
            }
            acc.mean_value()
        })
        .collect();
    Ok(CslEstimate::from_repetitions(
        per_repetition,
        cfg.sample_count,
    ))
}

const CSL_BLOCK: usize = 512;

/// CSL for every row of `data`, sharing each repetition's latent samples
/// across rows.
///
/// `log P(x | h¹)` is affine in `x` given `a = W h¹ + b`, so a block of
/// samples is scored against all rows with one matrix product. Per-row
/// results equal [`csl_logprob`] up to summation order.
pub fn csl_logprob_batch(
    model: &DeepLrbn,
    data: ArrayView2<'_, f64>,
    cfg: &CslConfig,
) -> Result<Vec<CslEstimate>> {
    cfg.validate()?;
    let pair = &model.layers()[0];
    check_len("data columns", pair.n_lower(), data.ncols())?;
    let kind = model.visible_kind();
    if kind == VisibleKind::Binary {
        if let Some(v) = data.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(LrbnError::InvalidValue(format!("binary data contains {v}")));
        }
    }
    let n_rows = data.nrows();
    let n_d = pair.n_lower();
    let data = data.to_owned();
    let row_sq: Vec<f64> = data.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut per_row: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.repetitions); n_rows];

    for rep in 0..cfg.repetitions {
        let mut rng = repetition_rng(cfg, rep);
        let mut acc = vec![LogSumExp::new(); n_rows];
        let mut remaining = cfg.sample_count;
        while remaining > 0 {
            let block = remaining.min(CSL_BLOCK);
            remaining -= block;
            let mut acts = Array2::<f64>::zeros((block, n_d));
            let mut offsets = Vec::with_capacity(block);
            for mut a_row in acts.rows_mut() {
                let s = sample_latents(model, &mut rng);
                let a = pair
                    .activations(&s.layers[0])
                    .expect("sampled state matches the layer");
                // log P(x | h) = x·a − c(a), with c depending on the family
                let c = match kind {
                    VisibleKind::Binary => a.iter().map(|&v| softplus(v)).sum::<f64>(),
                    VisibleKind::Gaussian => {
                        0.5 * a.iter().map(|v| v * v).sum::<f64>()
                            + 0.5 * n_d as f64 * (2.0 * PI).ln()
                    }
                };
                offsets.push(c);
                a_row.iter_mut().zip(&a).for_each(|(dst, &v)| *dst = v);
            }
            let scores = data.dot(&acts.t());
            acc.par_iter_mut().enumerate().for_each(|(m, acc)| {
                let extra = match kind {
                    VisibleKind::Binary => 0.0,
                    VisibleKind::Gaussian => 0.5 * row_sq[m],
                };
                for (s, c) in scores.row(m).iter().zip(&offsets) {
                    acc.push(s - c - extra);
                }
            });
        }
        for (out, a) in per_row.iter_mut().zip(&acc) {
            out.push(a.mean_value());
        }
    }
    Ok(per_row
        .into_iter()
        .map(|v| CslEstimate::from_repetitions(v, cfg.sample_count))
        .collect())
}

/// Mean test log-probability per repetition over all rows of `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct CslSummary {
    pub mean: f64,
    pub per_repetition: Vec<f64>,
    pub sample_count: usize,
}

pub fn csl_dataset(
    model: &DeepLrbn,
    data: ArrayView2<'_, f64>,
    cfg: &CslConfig,
) -> Result<CslSummary> {
    if data.nrows() == 0 {
        return Err(LrbnError::EmptyData("no samples to evaluate"));
    }
    let rows = csl_logprob_batch(model, data, cfg)?;
    let n = rows.len() as f64;
    let per_repetition: Vec<f64> = (0..cfg.repetitions)
        .map(|r| rows.iter().map(|e| e.per_repetition[r]).sum::<f64>() / n)
        .collect();
    let mean = per_repetition.iter().sum::<f64>() / per_repetition.len() as f64;
    Ok(CslSummary {
        mean,
        per_repetition,
        sample_count: cfg.sample_count,
    })
}

/// `log P(x) = log Σ_h P(x, h)` by enumerating every latent configuration of
/// every layer. Limited to `Σ n_h ≤ 20`.
pub fn exact_logprob(model: &DeepLrbn, x: &[f64]) -> Result<f64> {
    let total = model.total_latent();
    if total > MAX_ENUMERATION_BITS {
        return Err(LrbnError::TooLarge {
            what: "total latent size",
            size: total,
            limit: MAX_ENUMERATION_BITS,
        });
    }
    check_len("visible vector", model.n_visible(), x.len())?;
    let sizes: Vec<usize> = model.layers().iter().map(|p| p.n_upper()).collect();
    let values = (0..(1u64 << total))
        .into_par_iter()
        .map(|k| {
            let bits = state_from_index(k, total);
            let mut layers = Vec::with_capacity(sizes.len());
            let mut offset = 0;
            for &n in &sizes {
                layers.push(bits[offset..offset + n].to_vec());
                offset += n;
            }
            joint_logprob(model, x, &LatentState::new(layers))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = LogSumExp::new();
    for v in values {
        acc.push(v);
    }
    Ok(acc.value())
}

/// `log P(x | h¹)` for a sampled state; exposed for estimator tests.
pub fn visible_given_state(model: &DeepLrbn, x: &[f64], s: &LatentState) -> Result<f64> {
    conditional_logprob_visible(&model.layers()[0], &s.layers[0], x, model.visible_kind())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerParams;
    use ndarray::array;

    #[test]
    fn reconstruction_error_examples() {
        assert_eq!(reconstruction_error(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            reconstruction_error(&[1.0, 0.0, 1.0, 1.0, 0.0], &[0.0, 1.0, 1.0, 0.0, 0.0]).unwrap(),
            3.0
        );
        assert_eq!(reconstruction_error(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert!(reconstruction_error(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn disconnected_model_reconstructs_zeros() {
        let p =
            LayerParams::new(array![[0.0], [0.0], [0.0]].view(), vec![-8.0; 3], vec![0.5]).unwrap();
        let m = DeepLrbn::new(vec![p], VisibleKind::Binary).unwrap();
        let r = reconstruct(&m, &[1.0, 0.0, 1.0], &IcmConfig::default()).unwrap();
        assert_eq!(r, vec![0.0; 3]);
    }

    #[test]
    fn zero_model_csl_is_constant() {
        let m = DeepLrbn::zeros(&[5, 3, 2], VisibleKind::Binary).unwrap();
        let cfg = CslConfig {
            sample_count: 37,
            repetitions: 2,
            rng_seed: 9,
        };
        let e = csl_logprob(&m, &[1.0, 0.0, 0.0, 1.0, 1.0], &cfg).unwrap();
        for v in &e.per_repetition {
            assert!((v - 5.0 * 0.5f64.ln()).abs() < 1e-12);
        }
        assert!(exact_logprob(&m, &[1.0, 0.0, 0.0, 1.0, 1.0]).unwrap() - 5.0 * 0.5f64.ln() < 1e-12);
    }

    #[test]
    fn csl_rejects_zero_samples() {
        let m = DeepLrbn::zeros(&[2, 1], VisibleKind::Binary).unwrap();
        let cfg = CslConfig {
            sample_count: 0,
            repetitions: 1,
            rng_seed: 0,
        };
        assert!(csl_logprob(&m, &[0.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn exact_logprob_guards_size() {
        let m = DeepLrbn::zeros(&[2, 11, 10], VisibleKind::Binary).unwrap();
        assert!(matches!(
            exact_logprob(&m, &[0.0, 1.0]),
            Err(LrbnError::TooLarge { .. })
        ));
    }
}
