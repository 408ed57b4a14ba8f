//! Hard-EM learning.
//!
//! Maximum likelihood would need `log Σ_h P(x, h)`, a sum over exponentially
//! many states. Hard EM maximises the max-out objective
//! `Σ_m log max_h P(x⁽ᵐ⁾, h)` instead: the E-step fills in each sample's MAP
//! state by ICM, the M-step is then a complete-data problem (independent
//! logistic or least-squares regressions), solved here by minibatch gradient
//! ascent.

mod closed_form;
mod finetune;
mod gradient;
mod stack;

pub use closed_form::{
    closed_form_b, closed_form_d, closed_form_w, hard_em_closed_form, HardEmStep, PRIOR_LOGIT_CLAMP,
};
pub use finetune::{
    finetune_supervised, finetune_unsupervised, train_supervised, FinetuneConfig, FinetuneReport,
    SupervisedReport,
};
pub use gradient::{ascend, gradient, gradient_discrete, gradient_hybrid, LayerGradient};
pub use stack::{greedy_stack, map_codes};

pub(crate) use gradient::accumulate_gradient;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::data_io::split_indices;
use crate::error::{check_len, LrbnError, Result};
use crate::inference::{icm_map, init_latent, IcmConfig, IcmResult};
use crate::math::logit;
use crate::model::{LayerParams, VisibleKind};
use crate::rng::{self, Stream};

/// Offsets of freshly initialised binary units are clamped to this range.
pub const INIT_OFFSET_CLAMP: f64 = 4.0;
/// Initial weights are drawn from `U(-INIT_WEIGHT_SCALE, INIT_WEIGHT_SCALE)`.
pub const INIT_WEIGHT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub max_epochs: usize,
    pub icm: IcmConfig,
    pub rng_seed: u64,
    /// Samples held out of the training set to drive early stopping.
    pub validation_size: usize,
    /// Epochs without a validation improvement before stopping.
    pub early_stop_patience: usize,
    /// Start each sample's ICM from its previous MAP state instead of the
    /// feed-forward initialisation.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.25,
            minibatch_size: 20,
            max_epochs: 20,
            icm: IcmConfig::default(),
            rng_seed: 0,
            validation_size: 100,
            early_stop_patience: 5,
            warm_start: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(LrbnError::InvalidConfig(format!(
                "learning rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        if self.minibatch_size == 0 {
            return Err(LrbnError::InvalidConfig(
                "minibatch size must be at least 1".into(),
            ));
        }
        if self.early_stop_patience == 0 {
            return Err(LrbnError::InvalidConfig(
                "early-stop patience must be at least 1".into(),
            ));
        }
        self.icm.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    Converged,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStopped => "early_stopped",
            StopReason::Converged => "converged",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean completed-data log-likelihood over the epoch's E-steps.
    pub train_objective: f64,
    /// Mean `max_h log P(x, h)` over the validation set after the epoch.
    pub validation_objective: Option<f64>,
    /// Mean ICM sweeps per training sample.
    pub mean_sweeps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Epoch whose parameters were returned (best validation objective).
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

/// Initial parameters: `W ~ U(±0.01)`, `b` the logit of the per-unit mean
/// (binary, clamped to ±4) or the mean (gaussian), `d = 0`.
pub fn init_layer_params(
    data: ArrayView2<'_, f64>,
    n_upper: usize,
    kind: VisibleKind,
    seed: u64,
) -> Result<LayerParams> {
    if data.nrows() == 0 {
        return Err(LrbnError::EmptyData(
            "cannot initialise from an empty data set",
        ));
    }
    let n_lower = data.ncols();
    let mut p = LayerParams::zeros(n_lower, n_upper);
    let mut rng = rng::stream(seed, Stream::ParamInit, 0);
    for j in 0..n_upper {
        for w in p.column_mut(j) {
            *w = rng.random_range(-INIT_WEIGHT_SCALE..INIT_WEIGHT_SCALE);
        }
    }
    let m = data.nrows() as f64;
    for (i, col) in data.columns().into_iter().enumerate() {
        let mean = col.sum() / m;
        p.b_mut()[i] = match kind {
            VisibleKind::Binary => {
                let lo = crate::math::sigmoid(-INIT_OFFSET_CLAMP);
                logit(mean.clamp(lo, 1.0 - lo)).clamp(-INIT_OFFSET_CLAMP, INIT_OFFSET_CLAMP)
            }
            VisibleKind::Gaussian => mean,
        };
    }
    Ok(p)
}

pub(crate) fn row(data: &ArrayView2<'_, f64>, m: usize) -> Vec<f64> {
    data.row(m).to_vec()
}

fn e_step(
    params: &LayerParams,
    data: &ArrayView2<'_, f64>,
    m: usize,
    warm: Option<&[u8]>,
    icm: &IcmConfig,
    kind: VisibleKind,
) -> Result<IcmResult> {
    let x = row(data, m);
    let init = match warm {
        Some(h) => h.to_vec(),
        None => init_latent(params, &x, kind)?,
    };
    icm_map(params, &x, &init, icm, kind)
}

/// Mean `max_h log P(x, h)` over `rows`, with `h` from ICM started at the
/// feed-forward initialisation.
pub fn mean_completed_loglik(
    params: &LayerParams,
    data: ArrayView2<'_, f64>,
    rows: &[usize],
    icm: &IcmConfig,
    kind: VisibleKind,
) -> Result<f64> {
    if rows.is_empty() {
        return Err(LrbnError::EmptyData("no rows to evaluate"));
    }
    let values = rows
        .par_iter()
        .map(|&m| e_step(params, &data, m, None, icm, kind).map(|r| r.final_joint_logprob))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / rows.len() as f64)
}

/// Hard-EM training of one pair (Algorithm 1) from fresh parameters.
pub fn train_layer(
    data: ArrayView2<'_, f64>,
    n_upper: usize,
    cfg: &TrainConfig,
    kind: VisibleKind,
) -> Result<(LayerParams, TrainReport)> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(LrbnError::EmptyData("training data is empty"));
    }
    let (train_rows, _) = split_rows(data.nrows(), cfg)?;
    let init = init_layer_params(
        data.select(ndarray::Axis(0), &train_rows).view(),
        n_upper,
        kind,
        cfg.rng_seed,
    )?;
    train_layer_from(init, data, cfg, kind)
}

fn split_rows(m: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if cfg.validation_size >= m {
        return Err(LrbnError::InvalidConfig(format!(
            "validation size {} leaves no training data out of {m} samples",
            cfg.validation_size
        )));
    }
    split_indices(m, cfg.validation_size, cfg.rng_seed)
}

/// Hard-EM training of one pair starting from `params`.
///
/// Each epoch visits the training rows in a seeded random order, in
/// minibatches. The E-step runs ICM per sample, warm-started from that
/// sample's previous MAP state (feed-forward initialisation on the first
/// visit); the M-step adds `λ` times the minibatch-mean gradient. After each
/// epoch the validation rows are scored by `max_h log P(x, h)`; training stops
/// after `early_stop_patience` epochs without improvement and the best
/// parameters are returned.
pub fn train_layer_from(
    mut params: LayerParams,
    data: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    kind: VisibleKind,
) -> Result<(LayerParams, TrainReport)> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(LrbnError::EmptyData("training data is empty"));
    }
    check_len("data columns", params.n_lower(), data.ncols())?;
    if kind == VisibleKind::Binary {
        if let Some(v) = data.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(LrbnError::InvalidValue(format!(
                "binary training data contains {v}"
            )));
        }
    }
    let (train_rows, val_rows) = split_rows(data.nrows(), cfg)?;
    let mut warm: Vec<Option<Vec<u8>>> = vec![None; data.nrows()];
    let mut grad = LayerGradient::zeros_like(&params);
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, LayerParams)> = None;
    let mut since_best = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..cfg.max_epochs {
        let mut order = train_rows.clone();
        order.shuffle(&mut rng::stream(
            cfg.rng_seed,
            Stream::Shuffle,
            epoch as u64,
        ));
        let mut objective_sum = 0.0;
        let mut sweeps = 0usize;
        for (batch_no, batch) in order.chunks(cfg.minibatch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&m| {
                    let icm = cfg.icm.with_seed(rng::derive_seed(
                        cfg.icm.rng_seed,
                        Stream::IcmOrder,
                        (epoch * data.nrows() + m) as u64,
                    ));
                    e_step(&params, &data, m, warm[m].as_deref(), &icm, kind)
                })
                .collect::<Result<Vec<_>>>()?;
            grad.clear();
            for (&m, r) in batch.iter().zip(&results) {
                accumulate_gradient(
                    &params,
                    &row(&data, m),
                    &r.state,
                    Some(&r.activations),
                    kind,
                    &mut grad,
                )?;
                objective_sum += r.final_joint_logprob;
                sweeps += r.sweeps_used;
            }
            if cfg.warm_start {
                for (&m, r) in batch.iter().zip(results) {
                    warm[m] = Some(r.state);
                }
            }
            ascend(&mut params, &grad, cfg.learning_rate / batch.len() as f64);
            if !params.is_finite() {
                return Err(LrbnError::NonFinite(format!(
                    "parameters after epoch {epoch}, minibatch {batch_no} (learning rate {})",
                    cfg.learning_rate
                )));
            }
        }
        let n_train = train_rows.len() as f64;
        let validation_objective = if val_rows.is_empty() {
            None
        } else {
            Some(mean_completed_loglik(
                &params, data, &val_rows, &cfg.icm, kind,
            )?)
        };
        epochs.push(EpochRecord {
            epoch,
            train_objective: objective_sum / n_train,
            validation_objective,
            mean_sweeps: sweeps as f64 / n_train,
        });
        log::debug!(
            "epoch {epoch}: train {:.4} validation {:?}",
            objective_sum / n_train,
            validation_objective
        );

        if let Some(v) = validation_objective {
            match &best {
                Some((bv, _, _)) if v <= *bv => since_best += 1,
                _ => {
                    best = Some((v, epoch, params.clone()));
                    since_best = 0;
                }
            }
            if since_best >= cfg.early_stop_patience {
                stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
    }

    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, Some(epoch)),
        None => (params, epochs.len().checked_sub(1)),
    };
    Ok((
        params,
        TrainReport {
            epochs,
            stop_reason,
            best_epoch,
        },
    ))
}

/// One pass of minibatch gradient ascent over completed pairs
/// `(lower(m), upper(m))`, `m` in `rows`, visited in a seeded order.
pub(crate) fn sgd_epoch<L, U>(
    params: &mut LayerParams,
    rows: &[usize],
    lower: L,
    upper: U,
    kind: VisibleKind,
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<()>
where
    L: Fn(usize) -> Vec<f64>,
    U: Fn(usize) -> Vec<u8>,
{
    let mut order = rows.to_vec();
    order.shuffle(&mut rng::stream(shuffle_seed, Stream::Shuffle, 0));
    let mut grad = LayerGradient::zeros_like(params);
    for batch in order.chunks(cfg.minibatch_size) {
        grad.clear();
        for &m in batch {
            accumulate_gradient(params, &lower(m), &upper(m), None, kind, &mut grad)?;
        }
        ascend(params, &grad, cfg.learning_rate / batch.len() as f64);
    }
    params.check_finite("parameters after a fine-tuning epoch")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            minibatch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn init_offsets_follow_data_means() {
        let data = Array2::from_shape_vec(
            (4, 3),
            vec![
                1.0, 0.0, 1.0, //
                1.0, 0.0, 0.0, //
                1.0, 0.0, 1.0, //
                1.0, 0.0, 0.0,
            ],
        )
        .unwrap();
        let p = init_layer_params(data.view(), 5, VisibleKind::Binary, 3).unwrap();
        assert_eq!(p.b()[0], INIT_OFFSET_CLAMP);
        assert_eq!(p.b()[1], -INIT_OFFSET_CLAMP);
        assert!(p.b()[2].abs() < 1e-12);
        assert!(p.d().iter().all(|&v| v == 0.0));
        assert!(p.w().iter().all(|w| w.abs() < INIT_WEIGHT_SCALE));
        assert_eq!(
            p,
            init_layer_params(data.view(), 5, VisibleKind::Binary, 3).unwrap()
        );
    }

    #[test]
    fn empty_data_is_rejected() {
        let data = Array2::<f64>::zeros((0, 3));
        assert!(matches!(
            train_layer(data.view(), 2, &TrainConfig::default(), VisibleKind::Binary),
            Err(LrbnError::EmptyData(_))
        ));
    }

    #[test]
    fn oversized_validation_is_rejected() {
        let data = Array2::<f64>::zeros((10, 3));
        let cfg = TrainConfig {
            validation_size: 10,
            ..TrainConfig::default()
        };
        assert!(train_layer(data.view(), 2, &cfg, VisibleKind::Binary).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let data =
            Array2::from_shape_vec((4, 2), vec![1.0, 2.0, -1.0, 3.0, 0.5, 1e200, 2.0, -1e200])
                .unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e10,
            validation_size: 0,
            minibatch_size: 2,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let err = train_layer(data.view(), 2, &cfg, VisibleKind::Gaussian).unwrap_err();
        assert!(matches!(err, LrbnError::NonFinite(_)), "{err}");
    }
}
