//! Gradients of the completed-data log-probability `log P(x, h)` of one pair.
//!
//! With `a = W h + b` and residual `r`:
//!
//! ```text
//! binary:   r_i = x_i − σ(a_i)      gaussian:  r_i = x_i − a_i
//! ∂/∂w_ij = h_j r_i    ∂/∂b_i = r_i    ∂/∂d_j = h_j − σ(d_j)
//! ```
//!
//! For binary visibles each lower unit is an independent logistic regression
//! on `h`; for gaussian visibles a least-squares regression.

use ndarray::{ArrayView2, ShapeBuilder};

use crate::error::{check_len, Result};
use crate::math::sigmoid;
use crate::model::{check_binary, LayerParams, VisibleKind};

/// Gradient with the shape of a [`LayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    n_lower: usize,
    n_upper: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
}

impl LayerGradient {
    pub fn zeros(n_lower: usize, n_upper: usize) -> Self {
        Self {
            n_lower,
            n_upper,
            w: vec![0.0; n_lower * n_upper],
            b: vec![0.0; n_lower],
            d: vec![0.0; n_upper],
        }
    }

    pub fn zeros_like(params: &LayerParams) -> Self {
        Self::zeros(params.n_lower(), params.n_upper())
    }

    /// `n_lower × n_upper` view of the weight gradient.
    pub fn w(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.n_lower, self.n_upper).f(), &self.w)
            .expect("gradient storage matches its shape")
    }

    pub fn dw(&self, i: usize, j: usize) -> f64 {
        self.w[j * self.n_lower + i]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn clear(&mut self) {
        self.w.iter_mut().for_each(|v| *v = 0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
        self.d.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Largest absolute entry of the weight gradient.
    pub fn w_inf_norm(&self) -> f64 {
        self.w.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn add_assign(&mut self, other: &LayerGradient) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
        for (a, b) in self.d.iter_mut().zip(&other.d) {
            *a += b;
        }
    }
}

/// `θ ← θ + step · g`.
pub fn ascend(params: &mut LayerParams, grad: &LayerGradient, step: f64) {
    for (p, g) in params.w_raw_mut().iter_mut().zip(&grad.w) {
        *p += step * g;
    }
    for (p, g) in params.b_mut().iter_mut().zip(&grad.b) {
        *p += step * g;
    }
    for (p, g) in params.d_mut().iter_mut().zip(&grad.d) {
        *p += step * g;
    }
}

/// Adds the gradient at `(x, h)` into `grad`. `activations`, when supplied,
/// must equal `W h + b` (ICM hands it out for free).
pub(crate) fn accumulate_gradient(
    params: &LayerParams,
    x: &[f64],
    h: &[u8],
    activations: Option<&[f64]>,
    kind: VisibleKind,
    grad: &mut LayerGradient,
) -> Result<()> {
    check_len("lower vector", params.n_lower(), x.len())?;
    check_len("latent state", params.n_upper(), h.len())?;
    let owned;
    let a = match activations {
        Some(a) => {
            check_len("activations", params.n_lower(), a.len())?;
            a
        }
        None => {
            owned = params.activations(h)?;
            &owned
        }
    };
    let residual: Vec<f64> = match kind {
        VisibleKind::Binary => x.iter().zip(a).map(|(&xi, &ai)| xi - sigmoid(ai)).collect(),
        VisibleKind::Gaussian => x.iter().zip(a).map(|(&xi, &ai)| xi - ai).collect(),
    };
    let n = params.n_lower();
    for (j, &hj) in h.iter().enumerate() {
        if hj != 0 {
            for (g, r) in grad.w[j * n..(j + 1) * n].iter_mut().zip(&residual) {
                *g += r;
            }
        }
        grad.d[j] += hj as f64 - sigmoid(params.d()[j]);
    }
    for (g, r) in grad.b.iter_mut().zip(&residual) {
        *g += r;
    }
    Ok(())
}

pub fn gradient(
    params: &LayerParams,
    x: &[f64],
    h: &[u8],
    kind: VisibleKind,
) -> Result<LayerGradient> {
    let mut g = LayerGradient::zeros_like(params);
    accumulate_gradient(params, x, h, None, kind, &mut g)?;
    Ok(g)
}

/// Gradient of `log P(x, h)` for a binary lower layer.
pub fn gradient_discrete(params: &LayerParams, x: &[f64], h: &[u8]) -> Result<LayerGradient> {
    check_len("lower vector", params.n_lower(), x.len())?;
    check_binary(x)?;
    gradient(params, x, h, VisibleKind::Binary)
}

/// Gradient of `log P(x, h)` for a unit-variance gaussian lower layer.
pub fn gradient_hybrid(params: &LayerParams, x: &[f64], h: &[u8]) -> Result<LayerGradient> {
    gradient(params, x, h, VisibleKind::Gaussian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_state_has_no_weight_gradient() {
        let p = LayerParams::zeros(3, 2);
        let g = gradient_discrete(&p, &[1.0, 0.0, 1.0], &[0, 0]).unwrap();
        assert!(g.w().iter().all(|&v| v == 0.0));
        assert_eq!(g.b(), &[0.5, -0.5, 0.5]);
        assert_eq!(g.d(), &[-0.5, -0.5]);
    }

    #[test]
    fn single_unit_discrete_gradient() {
        let p = LayerParams::zeros(1, 1);
        let g = gradient_discrete(&p, &[1.0], &[1]).unwrap();
        assert_eq!(g.dw(0, 0), 0.5);
        assert_eq!(g.b(), &[0.5]);
        assert_eq!(g.d(), &[0.5]);
    }

    #[test]
    fn hybrid_gradient_examples() {
        let p = LayerParams::zeros(1, 1);
        let g = gradient_hybrid(&p, &[2.0], &[1]).unwrap();
        assert_eq!(g.dw(0, 0), 2.0);
        assert_eq!(g.b(), &[2.0]);

        let p = LayerParams::new(
            array![[0.5, -1.0], [2.0, 0.25]].view(),
            vec![0.1, -0.2],
            vec![0.0, 0.0],
        )
        .unwrap();
        let x = [0.5 - 1.0 + 0.1, 2.0 + 0.25 - 0.2];
        let g = gradient_hybrid(&p, &x, &[1, 1]).unwrap();
        assert!(g.w_inf_norm() < 1e-15);
        assert!(g.b().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn ascend_applies_scaled_step() {
        let mut p = LayerParams::zeros(1, 1);
        let g = gradient_discrete(&p, &[1.0], &[1]).unwrap();
        ascend(&mut p, &g, 0.5);
        assert_eq!(p.weight(0, 0), 0.25);
        assert_eq!(p.b(), &[0.25]);
        assert_eq!(p.d(), &[0.25]);
    }

    #[test]
    fn discrete_gradient_rejects_real_input() {
        let p = LayerParams::zeros(2, 1);
        assert!(gradient_discrete(&p, &[0.3, 1.0], &[1]).is_err());
    }
}
