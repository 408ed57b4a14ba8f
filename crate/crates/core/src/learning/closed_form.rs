//! Exact M-step for gaussian visibles.
//!
//! With the latent states fixed, `Σ_m log P(x⁽ᵐ⁾, h⁽ᵐ⁾)` is a concave
//! quadratic in `(W, b)`. Setting its gradient to zero gives
//!
//! ```text
//! W = (Σ_m (x⁽ᵐ⁾ − b) h⁽ᵐ⁾ᵀ) (Σ_m h⁽ᵐ⁾ h⁽ᵐ⁾ᵀ)⁻¹
//! ```
//!
//! for `W` given `b`, `b = mean(x − W h)` for `b` given `W`, and
//! `d_j = logit(mean h_j)` for the prior.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{check_len, LrbnError, Result};
use crate::inference::{icm_map, init_latent, IcmConfig};
use crate::math::logit;
use crate::model::{pair_joint_logprob, LayerParams, VisibleKind};

/// Bound applied to closed-form prior biases when a unit is always or never on.
pub const PRIOR_LOGIT_CLAMP: f64 = 10.0;

/// Solves `(Σ h hᵀ + εI) Wᵀ = Σ h (x − b)ᵀ` for `W` (`n_lower × n_upper`).
///
/// With `ridge == 0` a rank-deficient Gram matrix is an error that reports
/// the rank.
pub fn closed_form_w(
    xs: ArrayView2<'_, f64>,
    hs: &[Vec<u8>],
    b: &[f64],
    ridge: f64,
) -> Result<Array2<f64>> {
    if hs.is_empty() {
        return Err(LrbnError::EmptyData(
            "closed-form M-step needs at least one sample",
        ));
    }
    check_len("sample count", xs.nrows(), hs.len())?;
    check_len("offsets b", xs.ncols(), b.len())?;
    let n_lower = xs.ncols();
    let n_upper = hs[0].len();
    let mut gram = DMatrix::<f64>::zeros(n_upper, n_upper);
    let mut rhs = DMatrix::<f64>::zeros(n_upper, n_lower);
    for (x, h) in xs.rows().into_iter().zip(hs) {
        check_len("latent state", n_upper, h.len())?;
        let on: Vec<usize> = (0..n_upper).filter(|&j| h[j] != 0).collect();
        for &j in &on {
            for &k in &on {
                gram[(j, k)] += 1.0;
            }
            for (i, (&xi, &bi)) in x.iter().zip(b).enumerate() {
                rhs[(j, i)] += xi - bi;
            }
        }
    }
    for j in 0..n_upper {
        gram[(j, j)] += ridge;
    }
    if ridge == 0.0 {
        let svd = gram.clone().svd(false, false);
        let max_sv = svd.singular_values.max();
        let tol = max_sv * n_upper.max(1) as f64 * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < n_upper {
            return Err(LrbnError::Singular {
                size: n_upper,
                rank,
            });
        }
    }
    let wt = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or(LrbnError::Singular {
            size: n_upper,
            rank: 0,
        })?,
    };
    Ok(Array2::from_shape_fn((n_lower, n_upper), |(i, j)| {
        wt[(j, i)]
    }))
}

/// `b = mean_m (x⁽ᵐ⁾ − W h⁽ᵐ⁾)`.
pub fn closed_form_b(
    params: &LayerParams,
    xs: ArrayView2<'_, f64>,
    hs: &[Vec<u8>],
) -> Result<Vec<f64>> {
    if hs.is_empty() {
        return Err(LrbnError::EmptyData(
            "closed-form M-step needs at least one sample",
        ));
    }
    check_len("sample count", xs.nrows(), hs.len())?;
    let mut acc = vec![0.0; params.n_lower()];
    for (x, h) in xs.rows().into_iter().zip(hs) {
        let a = params.activations(h)?;
        for ((s, &xi), (&ai, &bi)) in acc.iter_mut().zip(x).zip(a.iter().zip(params.b())) {
            // a includes the current b
            *s += xi - (ai - bi);
        }
    }
    let m = hs.len() as f64;
    Ok(acc.into_iter().map(|s| s / m).collect())
}

/// `d_j = logit(mean h_j)`, clamped to `±PRIOR_LOGIT_CLAMP`.
pub fn closed_form_d(hs: &[Vec<u8>], n_upper: usize) -> Result<Vec<f64>> {
    if hs.is_empty() {
        return Err(LrbnError::EmptyData(
            "closed-form M-step needs at least one sample",
        ));
    }
    let m = hs.len() as f64;
    (0..n_upper)
        .map(|j| {
            let on = hs
                .iter()
                .map(|h| h.get(j).copied().unwrap_or(0) as f64)
                .sum::<f64>();
            let p = on / m;
            let v = if p <= 0.0 {
                -PRIOR_LOGIT_CLAMP
            } else if p >= 1.0 {
                PRIOR_LOGIT_CLAMP
            } else {
                logit(p).clamp(-PRIOR_LOGIT_CLAMP, PRIOR_LOGIT_CLAMP)
            };
            Ok(v)
        })
        .collect()
}

/// Per-alternation objective of [`hard_em_closed_form`].
#[derive(Debug, Clone, PartialEq)]
pub struct HardEmStep {
    /// `Σ_m log P(x⁽ᵐ⁾, h⁽ᵐ⁾)` right after the E-step.
    pub after_e_step: f64,
    /// The same sum after the M-step, states unchanged.
    pub after_m_step: f64,
}

/// Full-batch hard EM for a gaussian-visible pair with the exact M-step.
///
/// The E-step runs ICM warm-started from the previous states (feed-forward
/// initialisation on the first alternation); the M-step updates `W`, then
/// `b`, then `d` in closed form. Units that are never on carry no
/// information about their weights, so their columns are left untouched.
pub fn hard_em_closed_form(
    xs: ArrayView2<'_, f64>,
    mut params: LayerParams,
    icm: &IcmConfig,
    alternations: usize,
) -> Result<(LayerParams, Vec<HardEmStep>)> {
    if xs.nrows() == 0 {
        return Err(LrbnError::EmptyData("hard EM needs at least one sample"));
    }
    check_len("data columns", params.n_lower(), xs.ncols())?;
    let kind = VisibleKind::Gaussian;
    let mut states: Vec<Vec<u8>> = xs
        .rows()
        .into_iter()
        .map(|x| init_latent(&params, x.as_slice().unwrap_or(&x.to_vec()), kind))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = xs.rows().into_iter().map(|r| r.to_vec()).collect();
    let objective = |p: &LayerParams, states: &[Vec<u8>]| -> Result<f64> {
        rows.iter()
            .zip(states)
            .map(|(x, h)| pair_joint_logprob(p, x, h, kind))
            .sum()
    };
    let mut trace = Vec::with_capacity(alternations);
    for _ in 0..alternations {
        for (x, h) in rows.iter().zip(states.iter_mut()) {
            *h = icm_map(&params, x, h, icm, kind)?.state;
        }
        let after_e_step = objective(&params, &states)?;

        let active: Vec<usize> = (0..params.n_upper())
            .filter(|&j| states.iter().any(|h| h[j] != 0))
            .collect();
        if !active.is_empty() {
            let sub: Vec<Vec<u8>> = states
                .iter()
                .map(|h| active.iter().map(|&j| h[j]).collect())
                .collect();
            let w_sub = match closed_form_w(xs, &sub, params.b(), 0.0) {
                Err(LrbnError::Singular { .. }) => closed_form_w(xs, &sub, params.b(), 1e-8)?,
                other => other?,
            };
            for (k, &j) in active.iter().enumerate() {
                for i in 0..params.n_lower() {
                    params.set_weight(i, j, w_sub[(i, k)]);
                }
            }
        }
        let b = closed_form_b(&params, xs, &states)?;
        params.b_mut().copy_from_slice(&b);
        let d = closed_form_d(&states, params.n_upper())?;
        params.d_mut().copy_from_slice(&d);
        params.check_finite("closed-form M-step")?;

        let after_m_step = objective(&params, &states)?;
        trace.push(HardEmStep {
            after_e_step,
            after_m_step,
        });
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_gram_recovers_paired_columns() {
        let xs = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]];
        let hs = vec![vec![1, 0], vec![0, 1]];
        let w = closed_form_w(xs.view(), &hs, &[0.0; 3], 0.0).unwrap();
        assert_eq!(w.column(0).to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(w.column(1).to_vec(), vec![-1.0, 0.5, 4.0]);
    }

    #[test]
    fn singular_gram_is_reported() {
        let xs = array![[1.0, 2.0], [3.0, 4.0]];
        let hs = vec![vec![1, 1], vec![1, 1]];
        match closed_form_w(xs.view(), &hs, &[0.0; 2], 0.0) {
            Err(LrbnError::Singular { size: 2, rank: 1 }) => {}
            other => panic!("expected rank-1 error, got {other:?}"),
        }
        let msg = closed_form_w(xs.view(), &hs, &[0.0; 2], 0.0)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("rank 1"), "{msg}");
        assert!(closed_form_w(xs.view(), &hs, &[0.0; 2], 0.1).is_ok());
    }

    #[test]
    fn closed_form_d_clamps() {
        let hs = vec![vec![1, 0, 1], vec![1, 0, 0]];
        let d = closed_form_d(&hs, 3).unwrap();
        assert_eq!(d[0], PRIOR_LOGIT_CLAMP);
        assert_eq!(d[1], -PRIOR_LOGIT_CLAMP);
        assert!(d[2].abs() < 1e-15);
    }
}
