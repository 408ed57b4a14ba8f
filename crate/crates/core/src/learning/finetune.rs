//! Fine-tuning of a greedily stacked model.
//!
//! Given `h^{l}` the layers below and above it are independent, so the deep
//! objective `Σ_m log max P(x, h¹, …, hᴸ)` can be improved three layers at a
//! time: re-infer the middle layer of the window `{l−1, l, l+1}` with both
//! neighbours fixed, then update the two pairs touching it on the completed
//! data. Windows are visited top-down, from `{L−2, L−1, L}` to `{0, 1, 2}`.
//! Passes alternate with a bottom-up refresh of every pair until the
//! validation objective stops improving or the parameters stop moving.

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{greedy_stack, init_layer_params, row, sgd_epoch, StopReason, TrainConfig};
use crate::data_io::split_indices;
use crate::error::{check_len, LrbnError, Result};
use crate::inference::{
    bottom_up_codes, deep_map, icm_map, refine_middle, refine_top, refine_top_down, IcmConfig,
};
use crate::model::{
    joint_logprob, pair_joint_logprob, u8_to_f64, DeepLrbn, LabelTarget, LatentState, LayerParams,
    VisibleKind,
};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub train: TrainConfig,
    /// Number of (bottom-up refresh, top-down pass) alternations; the first
    /// alternation skips the refresh since the model was just pre-trained.
    pub alternations: usize,
    /// Stop once the largest parameter change relative to the largest
    /// parameter magnitude falls below this.
    pub convergence_tol: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            alternations: 2,
            convergence_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassRecord {
    pub alternation: usize,
    /// Mean deep joint over the training rows at their maintained states.
    pub train_objective: f64,
    pub validation_objective: Option<f64>,
    pub relative_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneReport {
    pub initial_train_objective: f64,
    pub initial_validation_objective: Option<f64>,
    pub passes: Vec<PassRecord>,
    pub stop_reason: StopReason,
}

impl FinetuneReport {
    fn empty() -> Self {
        Self {
            initial_train_objective: f64::NAN,
            initial_validation_objective: None,
            passes: Vec::new(),
            stop_reason: StopReason::Converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedReport {
    /// `Σ_m log P(h^{L−1,(m)}, t⁽ᵐ⁾)` before and after every epoch of the
    /// top-pair fit.
    pub top_fit_objective: Vec<f64>,
    pub finetune: FinetuneReport,
    /// Latent states of the training rows after the last pass.
    pub final_states: Vec<LatentState>,
}

fn relative_change(before: &DeepLrbn, after: &DeepLrbn) -> f64 {
    let diff = before
        .layers()
        .iter()
        .zip(after.layers())
        .map(|(a, b)| a.max_abs_diff(b))
        .fold(0.0, f64::max);
    let scale = before
        .layers()
        .iter()
        .map(LayerParams::max_abs)
        .fold(1.0, f64::max);
    diff / scale
}

/// Input vector of pair `l` for the sample at position `k`.
fn lower_input(
    xs: &ArrayView2<'_, f64>,
    rows: &[usize],
    states: &[LatentState],
    l: usize,
    k: usize,
) -> Vec<f64> {
    if l == 0 {
        row(xs, rows[k])
    } else {
        u8_to_f64(&states[k].layers[l - 1])
    }
}

fn mean_joint(
    model: &DeepLrbn,
    xs: &ArrayView2<'_, f64>,
    rows: &[usize],
    states: &[LatentState],
) -> Result<f64> {
    let total: f64 = rows
        .par_iter()
        .zip(states)
        .map(|(&m, s)| joint_logprob(model, &row(xs, m), s))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(total / rows.len().max(1) as f64)
}

fn validation_objective(
    model: &DeepLrbn,
    xs: &ArrayView2<'_, f64>,
    rows: &[usize],
    targets: Option<&[Vec<u8>]>,
    icm: &IcmConfig,
) -> Result<Option<f64>> {
    if rows.is_empty() {
        return Ok(None);
    }
    let values = rows
        .par_iter()
        .map(|&m| {
            let x = row(xs, m);
            match targets {
                None => deep_map(model, &x, icm).map(|(_, v)| v),
                Some(t) => {
                    let mut s = bottom_up_codes(model, &x, icm)?;
                    *s.layers.last_mut().unwrap() = t[m].clone();
                    refine_top_down(model, &x, &mut s, icm, true)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(values.iter().sum::<f64>() / rows.len() as f64))
}

/// One top-down fine-tuning pass over all windows.
fn top_down_pass(
    model: &mut DeepLrbn,
    xs: &ArrayView2<'_, f64>,
    rows: &[usize],
    states: &mut [LatentState],
    cfg: &TrainConfig,
    clamp_top: bool,
    seed: u64,
) -> Result<()> {
    let icm = cfg.icm;
    let positions: Vec<usize> = (0..rows.len()).collect();
    if !clamp_top {
        let m: &DeepLrbn = model;
        states
            .par_iter_mut()
            .zip(rows)
            .try_for_each(|(s, &r)| refine_top(m, &row(xs, r), s, &icm))?;
    }
    for l in (1..model.depth()).rev() {
        {
            let m: &DeepLrbn = model;
            states
                .par_iter_mut()
                .zip(rows)
                .try_for_each(|(s, &r)| refine_middle(m, &row(xs, r), s, l, &icm).map(|_| ()))?;
        }
        let lower_kind = model.lower_kind(l - 1);
        let st: &[LatentState] = states;
        sgd_epoch(
            &mut model.layers_mut()[l - 1],
            &positions,
            |k| lower_input(xs, rows, st, l - 1, k),
            |k| st[k].layers[l - 1].clone(),
            lower_kind,
            cfg,
            rng::derive_seed(seed, Stream::Shuffle, (2 * l) as u64),
        )?;
        sgd_epoch(
            &mut model.layers_mut()[l],
            &positions,
            |k| lower_input(xs, rows, st, l, k),
            |k| st[k].layers[l].clone(),
            VisibleKind::Binary,
            cfg,
            rng::derive_seed(seed, Stream::Shuffle, (2 * l + 1) as u64),
        )?;
    }
    Ok(())
}

/// Bottom-up refresh: every pair re-infers its upper layer as a standalone
/// two-layer model (warm-started) and takes one epoch of gradient steps.
fn bottom_up_refresh(
    model: &mut DeepLrbn,
    xs: &ArrayView2<'_, f64>,
    rows: &[usize],
    states: &mut [LatentState],
    cfg: &TrainConfig,
    clamp_top: bool,
    seed: u64,
) -> Result<()> {
    let positions: Vec<usize> = (0..rows.len()).collect();
    for l in 0..model.depth() {
        let kind = model.lower_kind(l);
        let is_clamped = clamp_top && l + 1 == model.depth();
        if !is_clamped {
            let pair = &model.layers()[l];
            let updated = (0..rows.len())
                .into_par_iter()
                .map(|k| {
                    let below = lower_input(xs, rows, states, l, k);
                    icm_map(pair, &below, &states[k].layers[l], &cfg.icm, kind).map(|r| r.state)
                })
                .collect::<Result<Vec<_>>>()?;
            for (s, h) in states.iter_mut().zip(updated) {
                s.layers[l] = h;
            }
        }
        let st: &[LatentState] = states;
        sgd_epoch(
            &mut model.layers_mut()[l],
            &positions,
            |k| lower_input(xs, rows, st, l, k),
            |k| st[k].layers[l].clone(),
            kind,
            cfg,
            rng::derive_seed(seed, Stream::Layer, l as u64),
        )?;
    }
    Ok(())
}

fn alternate(
    model: &mut DeepLrbn,
    xs: &ArrayView2<'_, f64>,
    train_rows: &[usize],
    val_rows: &[usize],
    states: &mut [LatentState],
    targets: Option<&[Vec<u8>]>,
    cfg: &FinetuneConfig,
) -> Result<FinetuneReport> {
    let clamp = targets.is_some();
    let icm = cfg.train.icm;
    let mut report = FinetuneReport {
        initial_train_objective: mean_joint(model, xs, train_rows, states)?,
        initial_validation_objective: validation_objective(model, xs, val_rows, targets, &icm)?,
        passes: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best = report
        .initial_validation_objective
        .map(|v| (v, model.clone()));
    let mut since_best = 0;
    for alternation in 0..cfg.alternations {
        let before = model.clone();
        let seed = rng::derive_seed(cfg.train.rng_seed, Stream::Layer, 1000 + alternation as u64);
        if alternation > 0 {
            bottom_up_refresh(model, xs, train_rows, states, &cfg.train, clamp, seed)?;
        }
        top_down_pass(model, xs, train_rows, states, &cfg.train, clamp, seed)?;
        let rel = relative_change(&before, model);
        let validation = validation_objective(model, xs, val_rows, targets, &icm)?;
        report.passes.push(PassRecord {
            alternation,
            train_objective: mean_joint(model, xs, train_rows, states)?,
            validation_objective: validation,
            relative_change: rel,
        });
        log::info!("fine-tuning pass {alternation}: {:?}", report.passes.last());
        if let Some(v) = validation {
            match &best {
                Some((bv, _)) if v <= *bv => since_best += 1,
                _ => {
                    best = Some((v, model.clone()));
                    since_best = 0;
                }
            }
            if since_best >= cfg.train.early_stop_patience {
                report.stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
        if rel < cfg.convergence_tol {
            report.stop_reason = StopReason::Converged;
            break;
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(report)
}

fn split(m: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if cfg.validation_size >= m {
        return Err(LrbnError::InvalidConfig(format!(
            "validation size {} leaves no training data out of {m} samples",
            cfg.validation_size
        )));
    }
    split_indices(m, cfg.validation_size, cfg.rng_seed)
}

/// Unsupervised fine-tuning. Models with a single latent layer have no
/// middle layer and are returned unchanged.
pub fn finetune_unsupervised(
    model: &DeepLrbn,
    data: ArrayView2<'_, f64>,
    cfg: &FinetuneConfig,
) -> Result<(DeepLrbn, FinetuneReport)> {
    cfg.train.validate()?;
    if model.depth() < 2 {
        log::warn!("fine-tuning needs at least two latent layers; model returned unchanged");
        return Ok((model.clone(), FinetuneReport::empty()));
    }
    if data.nrows() == 0 {
        return Err(LrbnError::EmptyData("fine-tuning data is empty"));
    }
    check_len("data columns", model.n_visible(), data.ncols())?;
    let (train_rows, val_rows) = split(data.nrows(), &cfg.train)?;
    let mut states = train_rows
        .par_iter()
        .map(|&m| bottom_up_codes(model, &row(&data, m), &cfg.train.icm))
        .collect::<Result<Vec<_>>>()?;
    let mut tuned = model.clone();
    let report = alternate(
        &mut tuned,
        &data,
        &train_rows,
        &val_rows,
        &mut states,
        None,
        cfg,
    )?;
    Ok((tuned, report))
}

fn targets_for(labels: &[usize], num_classes: usize) -> Result<Vec<Vec<u8>>> {
    labels
        .iter()
        .map(|&c| LabelTarget::new(c, num_classes).map(|t| t.as_slice().to_vec()))
        .collect::<Result<_>>()
        .map_err(|e| {
            LrbnError::InvalidConfig(format!(
                "labels do not fit the {num_classes}-unit top layer: {e}"
            ))
        })
}

/// Supervised fine-tuning of a model whose lower `L−1` pairs were
/// pre-trained greedily and whose top layer has one unit per class.
///
/// Fits the top pair on the complete pairs `(h^{L−1}, t)` by gradient
/// ascent, then runs top-down passes with the top layer clamped to `t`.
pub fn finetune_supervised(
    model: &DeepLrbn,
    data: ArrayView2<'_, f64>,
    labels: Option<&[usize]>,
    cfg: &FinetuneConfig,
) -> Result<(DeepLrbn, SupervisedReport)> {
    cfg.train.validate()?;
    let labels = labels.ok_or(LrbnError::MissingLabels)?;
    if model.depth() < 2 {
        return Err(LrbnError::InvalidConfig(
            "supervised fine-tuning needs a latent layer below the label layer".into(),
        ));
    }
    if data.nrows() == 0 {
        return Err(LrbnError::EmptyData("fine-tuning data is empty"));
    }
    check_len("labels", data.nrows(), labels.len())?;
    check_len("data columns", model.n_visible(), data.ncols())?;
    let num_classes = model.top().n_upper();
    let targets = targets_for(labels, num_classes)?;
    let (train_rows, val_rows) = split(data.nrows(), &cfg.train)?;

    let mut states = train_rows
        .par_iter()
        .map(|&m| {
            let mut s = bottom_up_codes(model, &row(&data, m), &cfg.train.icm)?;
            *s.layers.last_mut().unwrap() = targets[m].clone();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tuned = model.clone();
    let top = tuned.depth() - 1;
    let positions: Vec<usize> = (0..train_rows.len()).collect();
    let top_objective = |p: &LayerParams, states: &[LatentState]| -> Result<f64> {
        states
            .iter()
            .map(|s| {
                pair_joint_logprob(
                    p,
                    &u8_to_f64(&s.layers[top - 1]),
                    &s.layers[top],
                    VisibleKind::Binary,
                )
            })
            .sum()
    };
    let mut top_fit_objective = vec![top_objective(tuned.top(), &states)?];
    for epoch in 0..cfg.train.max_epochs {
        let st: &[LatentState] = &states;
        sgd_epoch(
            &mut tuned.layers_mut()[top],
            &positions,
            |k| u8_to_f64(&st[k].layers[top - 1]),
            |k| st[k].layers[top].clone(),
            VisibleKind::Binary,
            &cfg.train,
            rng::derive_seed(cfg.train.rng_seed, Stream::Shuffle, 5000 + epoch as u64),
        )?;
        top_fit_objective.push(top_objective(tuned.top(), &states)?);
    }

    let finetune = alternate(
        &mut tuned,
        &data,
        &train_rows,
        &val_rows,
        &mut states,
        Some(&targets),
        cfg,
    )?;
    Ok((
        tuned,
        SupervisedReport {
            top_fit_objective,
            finetune,
            final_states: states,
        },
    ))
}

/// All three supervised steps from scratch: greedy pre-training of the
/// hidden layers, a label layer of `num_classes` units on top, then
/// [`finetune_supervised`].
pub fn train_supervised(
    data: ArrayView2<'_, f64>,
    labels: &[usize],
    visible_kind: VisibleKind,
    hidden_sizes: &[usize],
    num_classes: usize,
    cfg: &FinetuneConfig,
) -> Result<(DeepLrbn, SupervisedReport)> {
    if hidden_sizes.is_empty() {
        return Err(LrbnError::InvalidConfig(
            "supervised training needs at least one hidden layer".into(),
        ));
    }
    let (hidden, _) = greedy_stack(data, visible_kind, hidden_sizes, &cfg.train)?;
    let codes = (0..data.nrows())
        .into_par_iter()
        .map(|m| {
            bottom_up_codes(&hidden, &row(&data, m), &cfg.train.icm).map(|s| u8_to_f64(s.top()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_top_lower = *hidden_sizes.last().unwrap();
    let code_matrix =
        ndarray::Array2::from_shape_fn((data.nrows(), n_top_lower), |(m, j)| codes[m][j]);
    let top = init_layer_params(
        code_matrix.view(),
        num_classes,
        VisibleKind::Binary,
        rng::derive_seed(cfg.train.rng_seed, Stream::Layer, hidden_sizes.len() as u64),
    )?;
    let mut layers = hidden.into_layers();
    layers.push(top);
    let model = DeepLrbn::new(layers, visible_kind)?;
    finetune_supervised(&model, data, Some(labels), cfg)
}
