//! Greedy layer-wise construction of a deep model.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::{row, train_layer, TrainConfig, TrainReport};
use crate::error::{LrbnError, Result};
use crate::inference::{icm_map, init_latent, IcmConfig};
use crate::model::{DeepLrbn, LayerParams, VisibleKind};
use crate::rng::{self, Stream};

/// MAP codes of every row of `data` under a trained pair (ICM from the
/// feed-forward initialisation), as a 0/1 matrix.
pub fn map_codes(
    params: &LayerParams,
    data: ArrayView2<'_, f64>,
    icm: &IcmConfig,
    kind: VisibleKind,
) -> Result<Array2<f64>> {
    let codes = (0..data.nrows())
        .into_par_iter()
        .map(|m| {
            let x = row(&data, m);
            let init = init_latent(params, &x, kind)?;
            icm_map(params, &x, &init, icm, kind).map(|r| r.state)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = params.n_upper();
    Ok(Array2::from_shape_fn((data.nrows(), n), |(m, j)| {
        codes[m][j] as f64
    }))
}

/// Trains pair 0 on `data`, then each higher pair as a fresh binary-visible
/// two-layer model on the MAP codes of the pair below it.
///
/// `latent_sizes` lists `n_h¹, …, n_hᴸ`. Pair 0 uses `cfg.rng_seed`
/// unchanged; pair `l > 0` uses a seed derived from it and `l`.
pub fn greedy_stack(
    data: ArrayView2<'_, f64>,
    visible_kind: VisibleKind,
    latent_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<(DeepLrbn, Vec<TrainReport>)> {
    if latent_sizes.is_empty() {
        return Err(LrbnError::InvalidConfig(
            "at least one latent layer is required".into(),
        ));
    }
    let mut layers = Vec::with_capacity(latent_sizes.len());
    let mut reports = Vec::with_capacity(latent_sizes.len());
    let mut codes: Option<Array2<f64>> = None;
    for (l, &n_upper) in latent_sizes.iter().enumerate() {
        let kind = if l == 0 {
            visible_kind
        } else {
            VisibleKind::Binary
        };
        let layer_cfg = if l == 0 {
            cfg.clone()
        } else {
            TrainConfig {
                rng_seed: rng::derive_seed(cfg.rng_seed, Stream::Layer, l as u64),
                ..cfg.clone()
            }
        };
        let input = codes.as_ref().map(|c| c.view()).unwrap_or(data);
        log::info!("training pair {l}: {} -> {n_upper}", input.ncols());
        let (params, report) = train_layer(input, n_upper, &layer_cfg, kind)?;
        if l + 1 < latent_sizes.len() {
            codes = Some(map_codes(&params, input, &cfg.icm, kind)?);
        }
        layers.push(params);
        reports.push(report);
    }
    Ok((DeepLrbn::new(layers, visible_kind)?, reports))
}
