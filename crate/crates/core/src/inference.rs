//! MAP inference of latent states.
//!
//! The posterior over one latent layer does not factorise: every latent unit
//! shares every visible child, so observing the children couples the parents.
//! Inference therefore works on the conditional pseudo-likelihood
//! `Π_j P(h_j | h_{-j}, x)` by coordinate ascent (iterated conditional modes,
//! ICM): each unit in turn is set to the mode of its full conditional. Every
//! such update can only raise the joint `P(x, h)`, so a sweep is monotone and
//! the procedure stops at a state no single flip can improve.
//!
//! The log-odds of a flip are evaluated incrementally from a cached activation
//! vector `a = W h + b`, which costs `O(n_lower)` per unit instead of the
//! `O(n_lower · n_upper)` of two full joint evaluations. A sweep is therefore
//! `O(n_lower · n_upper)` and `t` sweeps `O(t · n_lower · n_upper)`; the naive
//! two-evaluation form costs `O(t · n_lower · n_upper²)`.
//!
//! The brute-force routines enumerate all `2^n` states and exist as oracles.

use rand::seq::SliceRandom;

use crate::error::{check_len, LrbnError, Result};
use crate::math::{sigmoid, softplus};
use crate::model::{
    check_binary, conditional_logprob_visible, dot, joint_logprob, pair_joint_logprob,
    prior_logprob, u8_to_f64, visible_logprob_from_activations, DeepLrbn, ExpWeights, LatentState,
    LayerParams, VisibleKind,
};
use crate::rng::{self, Stream};

/// Largest latent layer the exhaustive routines accept.
pub const MAX_ENUMERATION_BITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    #[default]
    Ascending,
    /// A fresh permutation per sweep drawn from `IcmConfig::rng_seed`.
    SeededPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IcmConfig {
    pub max_sweeps: usize,
    pub sweep_order: SweepOrder,
    pub rng_seed: u64,
}

impl Default for IcmConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 10,
            sweep_order: SweepOrder::Ascending,
            rng_seed: 0,
        }
    }
}

impl IcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(LrbnError::InvalidConfig(
                "max_sweeps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcmResult {
    pub state: Vec<u8>,
    /// Log-probability of the terms that depend on the inferred layer, at
    /// `state`. For [`icm_map`] this is the pair joint `log P(x, h)`.
    pub final_joint_logprob: f64,
    pub sweeps_used: usize,
    /// A full sweep changed nothing.
    pub converged: bool,
    /// `W · state + b` of the pair below the inferred layer.
    pub activations: Vec<f64>,
    /// Number of flip log-odds evaluated.
    pub delta_evaluations: usize,
}

/// One accepted change of a unit, reported to tracing observers.
#[derive(Debug)]
pub struct FlipEvent<'a> {
    pub sweep: usize,
    pub unit: usize,
    /// Change of the tracked log-probability caused by this flip (≥ 0).
    pub gain: f64,
    pub state: &'a [u8],
    pub joint: f64,
}

/// Feed-forward initialisation: drop the link directions so the latent units
/// become independent given `x`, then threshold each posterior at one half
/// (ties go to 0).
///
/// Binary: `σ(Σ_i w_ij x_i + d_j)`. Gaussian: `σ(Σ_i w_ij x_i + d_j − s_j)`
/// with `s_j = ½ Σ_i w_ij²`, the diagonal of `½ WᵀW`.
pub fn init_latent(params: &LayerParams, x: &[f64], kind: VisibleKind) -> Result<Vec<u8>> {
    let mut u = params.upward_input(x)?;
    if kind == VisibleKind::Gaussian {
        for (j, uj) in u.iter_mut().enumerate() {
            let col = params.column(j);
            *uj -= 0.5 * dot(col, col);
        }
    }
    Ok(u.into_iter().map(|v| u8::from(sigmoid(v) > 0.5)).collect())
}

/// `log P(h_j = 1, h_{-j}, x) − log P(h_j = 0, h_{-j}, x)` under the pair's
/// own prior, given `activations = W h + b` evaluated with `h_j = 0`.
pub fn flip_delta(
    params: &LayerParams,
    j: usize,
    h: &[u8],
    x: &[f64],
    activations: &[f64],
    kind: VisibleKind,
) -> Result<f64> {
    check_len("latent state", params.n_upper(), h.len())?;
    check_len("lower vector", params.n_lower(), x.len())?;
    check_len("activations", params.n_lower(), activations.len())?;
    if j >= params.n_upper() {
        return Err(LrbnError::DimensionMismatch {
            context: "latent unit index",
            expected: params.n_upper(),
            found: j,
        });
    }
    Ok(params.d()[j] + likelihood_delta(params.column(j), x, activations, kind))
}

fn likelihood_delta(col: &[f64], x: &[f64], a0: &[f64], kind: VisibleKind) -> f64 {
    match kind {
        VisibleKind::Binary => col
            .iter()
            .zip(x)
            .zip(a0)
            .map(|((&w, &xi), &ai)| xi * w - softplus(ai + w) + softplus(ai))
            .sum(),
        VisibleKind::Gaussian => col
            .iter()
            .zip(x)
            .zip(a0)
            .map(|((&w, &xi), &ai)| w * (xi - ai) - 0.5 * w * w)
            .sum(),
    }
}

/// Per-unit quantities of the binary sweeper at activation `a`:
/// `s = σ(−|a|)`, the residual `x − σ(a)` and the slope `σ'(a)`.
fn refresh_slopes(a: &[f64], x: &[f64], small: &mut [f64], resid: &mut [f64], curv: &mut [f64]) {
    for ((((&ai, &xi), s), r), q) in a.iter().zip(x).zip(small).zip(resid).zip(curv) {
        let t = (-ai.abs()).exp();
        *s = t / (1.0 + t);
        let p = if ai >= 0.0 { 1.0 / (1.0 + t) } else { *s };
        *r = xi - p;
        *q = t / ((1.0 + t) * (1.0 + t));
    }
}

/// `softplus(a + t) − softplus(a)` given `s = σ(−|a|)`, `em = expm1(t)` and
/// `em_neg = expm1(−t)`. The two branches keep the `log1p` argument in
/// `[−½, ∞)`.
#[inline]
fn softplus_step(a: f64, s: f64, t: f64, em: f64, em_neg: f64) -> f64 {
    if a <= 0.0 {
        (s * em).ln_1p()
    } else {
        t + (s * em_neg).ln_1p()
    }
}

/// Coordinate-ascent state for one latent layer with an arbitrary vector of
/// prior log-odds (the pair's `d`, or the top-down input of the layer above).
struct Sweeper<'a> {
    params: &'a LayerParams,
    prior_logits: &'a [f64],
    x: &'a [f64],
    kind: VisibleKind,
    h: Vec<u8>,
    /// `W h + b`
    a: Vec<f64>,
    /// binary: x · w_j; gaussian: ½‖w_j‖²
    per_unit: Vec<f64>,
    /// gaussian: x − a
    resid: Vec<f64>,
    /// binary only, see [`refresh_slopes`]
    small: Vec<f64>,
    curv: Vec<f64>,
    exp_w: Option<&'a ExpWeights>,
    joint: f64,
    evaluations: usize,
}

impl<'a> Sweeper<'a> {
    fn new(
        params: &'a LayerParams,
        prior_logits: &'a [f64],
        x: &'a [f64],
        kind: VisibleKind,
        init: &[u8],
    ) -> Result<Self> {
        check_len("lower vector", params.n_lower(), x.len())?;
        check_len("initial latent state", params.n_upper(), init.len())?;
        check_len("prior log-odds", params.n_upper(), prior_logits.len())?;
        if kind == VisibleKind::Binary {
            check_binary(x)?;
        }
        let a = params.activations(init)?;
        let joint =
            prior_logprob(prior_logits, init)? + visible_logprob_from_activations(&a, x, kind);
        let n = a.len();
        let mut sweeper = Self {
            params,
            prior_logits,
            x,
            kind,
            h: init.to_vec(),
            per_unit: Vec::new(),
            resid: vec![0.0; n],
            small: Vec::new(),
            curv: Vec::new(),
            exp_w: None,
            a,
            joint,
            evaluations: 0,
        };
        match kind {
            VisibleKind::Binary => {
                sweeper.per_unit = (0..params.n_upper())
                    .map(|j| dot(params.column(j), x))
                    .collect();
                sweeper.small = vec![0.0; n];
                sweeper.curv = vec![0.0; n];
                sweeper.exp_w = Some(params.exp_weights());
                refresh_slopes(
                    &sweeper.a,
                    x,
                    &mut sweeper.small,
                    &mut sweeper.resid,
                    &mut sweeper.curv,
                );
            }
            VisibleKind::Gaussian => {
                sweeper.per_unit = (0..params.n_upper())
                    .map(|j| 0.5 * dot(params.column(j), params.column(j)))
                    .collect();
                for ((r, &xi), &ai) in sweeper.resid.iter_mut().zip(x).zip(&sweeper.a) {
                    *r = xi - ai;
                }
            }
        }
        Ok(sweeper)
    }

    /// Binary only: decides the sign of the flip log-odds without
    /// transcendental functions when possible.
    ///
    /// Expanding each softplus difference around the current activations
    /// gives `Σ_i w_ij (x_i − σ(a_i))` with a remainder of at most
    /// `½ w_ij² max σ'` over the step, and `σ'(a + t) ≤ σ'(a) e^{|t|}`.
    /// Returns `Some(on)` when the remainder cannot change the sign.
    fn screen(&self, j: usize, growth: f64) -> Option<bool> {
        let col = self.params.column(j);
        let (mut lin, mut bound) = (0.0, 0.0);
        for ((&w, &r), &q) in col.iter().zip(&self.resid).zip(&self.curv) {
            lin += w * r;
            bound += w * w * (q * growth).min(0.25);
        }
        let centre = self.prior_logits[j] + lin;
        let margin = 0.5 * bound + 1e-9 * (1.0 + centre.abs() + bound);
        if centre > margin {
            Some(true)
        } else if centre < -margin {
            Some(false)
        } else {
            None
        }
    }

    /// Log-odds of unit `j` being on given every other unit.
    fn delta(&mut self, j: usize) -> f64 {
        self.evaluations += 1;
        let col = self.params.column(j);
        let on = self.h[j] != 0;
        let lik = match (self.kind, self.exp_w) {
            (VisibleKind::Binary, Some(e)) => {
                let r = j * self.params.n_lower()..(j + 1) * self.params.n_lower();
                let (up, down) = (&e.up[r.clone()], &e.down[r]);
                let mut s = 0.0;
                if on {
                    // softplus(a) − softplus(a − w)
                    for i in 0..col.len() {
                        s += softplus_step(self.a[i], self.small[i], -col[i], down[i], up[i]);
                    }
                    self.per_unit[j] + s
                } else {
                    for i in 0..col.len() {
                        s += softplus_step(self.a[i], self.small[i], col[i], up[i], down[i]);
                    }
                    self.per_unit[j] - s
                }
            }
            _ => {
                let wr = dot(col, &self.resid);
                if on {
                    wr + self.per_unit[j]
                } else {
                    wr - self.per_unit[j]
                }
            }
        };
        self.prior_logits[j] + lik
    }

    /// Applies the conditional mode of unit `j`; returns the gain if it changed.
    fn update(&mut self, j: usize) -> Option<f64> {
        let on = self.h[j] != 0;
        if let Some(e) = self.exp_w {
            if self.screen(j, e.growth[j]) == Some(on) {
                self.evaluations += 1;
                return None;
            }
        }
        let delta = self.delta(j);
        let want_on = delta > 0.0;
        if want_on == on {
            return None;
        }
        let col = self.params.column(j);
        let sign = if want_on { 1.0 } else { -1.0 };
        for (ai, &w) in self.a.iter_mut().zip(col) {
            *ai += sign * w;
        }
        match self.kind {
            VisibleKind::Binary => refresh_slopes(
                &self.a,
                self.x,
                &mut self.small,
                &mut self.resid,
                &mut self.curv,
            ),
            VisibleKind::Gaussian => {
                for (ri, &w) in self.resid.iter_mut().zip(col) {
                    *ri -= sign * w;
                }
            }
        }
        self.h[j] = u8::from(want_on);
        let gain = if want_on { delta } else { -delta };
        self.joint += gain;
        Some(gain)
    }

    fn run(
        mut self,
        cfg: &IcmConfig,
        mut observer: Option<&mut dyn FnMut(&FlipEvent<'_>)>,
    ) -> Result<IcmResult> {
        cfg.validate()?;
        let n = self.params.n_upper();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng::stream(cfg.rng_seed, Stream::IcmOrder, 0);
        let mut sweeps_used = 0;
        let mut converged = n == 0;
        while !converged && sweeps_used < cfg.max_sweeps {
            if cfg.sweep_order == SweepOrder::SeededPermutation {
                order.shuffle(&mut rng);
            }
            let mut changed = false;
            for &j in &order {
                if let Some(gain) = self.update(j) {
                    changed = true;
                    if let Some(obs) = observer.as_deref_mut() {
                        obs(&FlipEvent {
                            sweep: sweeps_used,
                            unit: j,
                            gain,
                            state: &self.h,
                            joint: self.joint,
                        });
                    }
                }
            }
            sweeps_used += 1;
            converged = !changed;
        }
        if !self.joint.is_finite() {
            return Err(LrbnError::NonFinite("ICM joint log-probability".into()));
        }
        debug_assert!(
            {
                let fresh = prior_logprob(self.prior_logits, &self.h).unwrap()
                    + visible_logprob_from_activations(
                        &self.params.activations(&self.h).unwrap(),
                        self.x,
                        self.kind,
                    );
                (fresh - self.joint).abs() <= 1e-9 * fresh.abs().max(1.0)
            },
            "stale activation cache"
        );
        Ok(IcmResult {
            state: self.h,
            final_joint_logprob: self.joint,
            sweeps_used,
            converged,
            activations: self.a,
            delta_evaluations: self.evaluations,
        })
    }
}

/// MAP state of the pair's upper layer given its lower layer, by ICM from
/// `init`, under the pair's own prior `σ(d)`.
pub fn icm_map(
    params: &LayerParams,
    x: &[f64],
    init: &[u8],
    cfg: &IcmConfig,
    kind: VisibleKind,
) -> Result<IcmResult> {
    Sweeper::new(params, params.d(), x, kind, init)?.run(cfg, None)
}

/// [`icm_map`] reporting every accepted flip to `observer`.
pub fn icm_map_traced(
    params: &LayerParams,
    x: &[f64],
    init: &[u8],
    cfg: &IcmConfig,
    kind: VisibleKind,
    observer: &mut dyn FnMut(&FlipEvent<'_>),
) -> Result<IcmResult> {
    Sweeper::new(params, params.d(), x, kind, init)?.run(cfg, Some(observer))
}

/// Top-down log-odds `c = W_up h_above + b_up` of a middle layer.
fn top_down_logits(upper_pair: &LayerParams, h_above: &[u8]) -> Result<Vec<f64>> {
    upper_pair.activations(h_above)
}

fn check_middle(
    lower_pair: &LayerParams,
    upper_pair: &LayerParams,
    h_below: &[f64],
    h_above: &[u8],
) -> Result<()> {
    check_len(
        "middle layer (pair chaining)",
        lower_pair.n_upper(),
        upper_pair.n_lower(),
    )?;
    check_len("layer below", lower_pair.n_lower(), h_below.len())?;
    check_len("layer above", upper_pair.n_upper(), h_above.len())?;
    Ok(())
}

/// MAP state of a middle layer `h^l` given `h^{l-1}` (`h_below`) and
/// `h^{l+1}` (`h_above`).
///
/// Given `h_above` the middle units have independent priors `σ(c_j)` with
/// `c = W_up h_above + b_up`, so the flip log-odds are `c_j` plus the same
/// likelihood term as in [`flip_delta`] with `x = h_below`.
/// `final_joint_logprob` is `log P(h^l | h^{l+1}) + log P(h^{l-1} | h^l)`.
pub fn icm_map_middle(
    lower_pair: &LayerParams,
    upper_pair: &LayerParams,
    h_below: &[f64],
    h_above: &[u8],
    init: &[u8],
    cfg: &IcmConfig,
    below_kind: VisibleKind,
) -> Result<IcmResult> {
    check_middle(lower_pair, upper_pair, h_below, h_above)?;
    let c = top_down_logits(upper_pair, h_above)?;
    Sweeper::new(lower_pair, &c, h_below, below_kind, init)?.run(cfg, None)
}

/// [`icm_map_middle`] reporting every accepted flip to `observer`.
#[allow(clippy::too_many_arguments)]
pub fn icm_map_middle_traced(
    lower_pair: &LayerParams,
    upper_pair: &LayerParams,
    h_below: &[f64],
    h_above: &[u8],
    init: &[u8],
    cfg: &IcmConfig,
    below_kind: VisibleKind,
    observer: &mut dyn FnMut(&FlipEvent<'_>),
) -> Result<IcmResult> {
    check_middle(lower_pair, upper_pair, h_below, h_above)?;
    let c = top_down_logits(upper_pair, h_above)?;
    Sweeper::new(lower_pair, &c, h_below, below_kind, init)?.run(cfg, Some(observer))
}

/// Flip log-odds of middle unit `j`, for callers that track their own cache.
pub fn middle_flip_delta(
    lower_pair: &LayerParams,
    upper_pair: &LayerParams,
    j: usize,
    h_below: &[f64],
    h_above: &[u8],
    activations: &[f64],
    below_kind: VisibleKind,
) -> Result<f64> {
    check_middle(lower_pair, upper_pair, h_below, h_above)?;
    check_len("activations", lower_pair.n_lower(), activations.len())?;
    let c = top_down_logits(upper_pair, h_above)?;
    Ok(c[j] + likelihood_delta(lower_pair.column(j), h_below, activations, below_kind))
}

fn check_enumerable(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_BITS {
        return Err(LrbnError::TooLarge {
            what: "latent layer",
            size: n,
            limit: MAX_ENUMERATION_BITS,
        });
    }
    Ok(())
}

/// The `k`-th binary vector of length `n` in lexicographic order.
pub fn state_from_index(k: u64, n: usize) -> Vec<u8> {
    (0..n).map(|j| ((k >> (n - 1 - j)) & 1) as u8).collect()
}

fn argmax_over_states(
    n: usize,
    mut score: impl FnMut(&[u8]) -> Result<f64>,
) -> Result<(Vec<u8>, f64)> {
    check_enumerable(n)?;
    let mut best = (vec![0; n], f64::NEG_INFINITY);
    for k in 0..(1u64 << n) {
        let h = state_from_index(k, n);
        let v = score(&h)?;
        // strict: on ties the lexicographically smallest state wins
        if v > best.1 {
            best = (h, v);
        }
    }
    Ok(best)
}

/// Exact MAP of the pair's upper layer by enumerating all `2^n_upper` states.
pub fn bruteforce_map(
    params: &LayerParams,
    x: &[f64],
    kind: VisibleKind,
) -> Result<(Vec<u8>, f64)> {
    check_len("lower vector", params.n_lower(), x.len())?;
    argmax_over_states(params.n_upper(), |h| pair_joint_logprob(params, x, h, kind))
}

/// Exact MAP of a middle layer given both neighbours.
pub fn bruteforce_map_middle(
    lower_pair: &LayerParams,
    upper_pair: &LayerParams,
    h_below: &[f64],
    h_above: &[u8],
    below_kind: VisibleKind,
) -> Result<(Vec<u8>, f64)> {
    check_middle(lower_pair, upper_pair, h_below, h_above)?;
    argmax_over_states(lower_pair.n_upper(), |h| {
        let below = conditional_logprob_visible(lower_pair, h, h_below, below_kind)?;
        let mid =
            conditional_logprob_visible(upper_pair, h_above, &u8_to_f64(h), VisibleKind::Binary)?;
        Ok(below + mid)
    })
}

/// Bottom-up MAP codes: each latent layer inferred by ICM from its
/// feed-forward initialisation, treating each pair as a standalone
/// two-layer model (the codes of greedy stacking).
pub fn bottom_up_codes(model: &DeepLrbn, x: &[f64], cfg: &IcmConfig) -> Result<LatentState> {
    let mut layers = Vec::with_capacity(model.depth());
    let mut below = x.to_vec();
    for (l, pair) in model.layers().iter().enumerate() {
        let kind = model.lower_kind(l);
        let init = init_latent(pair, &below, kind)?;
        let h = icm_map(pair, &below, &init, cfg, kind)?.state;
        below = u8_to_f64(&h);
        layers.push(h);
    }
    Ok(LatentState::new(layers))
}

/// Re-infers middle layer `l` (`1 ≤ l < L`) of `state` in place and returns
/// its new local log-probability.
///
/// ICM runs twice, once from the feed-forward initialisation and once from
/// the current state; the better result is kept, so the deep joint never
/// decreases.
pub fn refine_middle(
    model: &DeepLrbn,
    x: &[f64],
    state: &mut LatentState,
    l: usize,
    cfg: &IcmConfig,
) -> Result<f64> {
    assert!(
        l >= 1 && l < model.depth(),
        "middle layer index out of range"
    );
    let lower = &model.layers()[l - 1];
    let upper = &model.layers()[l];
    let kind = model.lower_kind(l - 1);
    let below = if l == 1 {
        x.to_vec()
    } else {
        u8_to_f64(&state.layers[l - 2])
    };
    let above = state.layers[l].clone();
    let fresh_init = init_latent(lower, &below, kind)?;
    let fresh = icm_map_middle(lower, upper, &below, &above, &fresh_init, cfg, kind)?;
    let warm = icm_map_middle(
        lower,
        upper,
        &below,
        &above,
        &state.layers[l - 1],
        cfg,
        kind,
    )?;
    let best = if fresh.final_joint_logprob > warm.final_joint_logprob {
        fresh
    } else {
        warm
    };
    state.layers[l - 1] = best.state;
    Ok(best.final_joint_logprob)
}

/// Re-infers the top layer given the layer below it, warm-started from the
/// current state. The top pair's `d` is the model prior, so this is the
/// exact conditional of `hᴸ`.
pub fn refine_top(
    model: &DeepLrbn,
    x: &[f64],
    state: &mut LatentState,
    cfg: &IcmConfig,
) -> Result<()> {
    let top = model.depth() - 1;
    let pair = model.top();
    let kind = model.lower_kind(top);
    let below = if top == 0 {
        x.to_vec()
    } else {
        u8_to_f64(&state.layers[top - 1])
    };
    state.layers[top] = icm_map(pair, &below, &state.layers[top], cfg, kind)?.state;
    Ok(())
}

/// One top-down refinement pass: the top layer (unless clamped), then every
/// middle layer from `L−1` down to 1. Returns the deep joint afterwards.
pub fn refine_top_down(
    model: &DeepLrbn,
    x: &[f64],
    state: &mut LatentState,
    cfg: &IcmConfig,
    clamp_top: bool,
) -> Result<f64> {
    if !clamp_top {
        refine_top(model, x, state, cfg)?;
    }
    for l in (1..model.depth()).rev() {
        refine_middle(model, x, state, l, cfg)?;
    }
    joint_logprob(model, x, state)
}

/// Approximate MAP of all latent layers of a deep model: bottom-up codes,
/// then one top-down refinement pass. Returns the state and its deep joint.
pub fn deep_map(model: &DeepLrbn, x: &[f64], cfg: &IcmConfig) -> Result<(LatentState, f64)> {
    let mut state = bottom_up_codes(model, x, cfg)?;
    let joint = if model.depth() > 1 {
        refine_top_down(model, x, &mut state, cfg, false)?
    } else {
        joint_logprob(model, x, &state)?
    };
    Ok((state, joint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(w: f64, b: f64, d: f64) -> LayerParams {
        LayerParams::new(array![[w]].view(), vec![b], vec![d]).unwrap()
    }

    #[test]
    fn init_examples() {
        let zero = LayerParams::zeros(3, 4);
        assert_eq!(
            init_latent(&zero, &[1.0, 0.0, 1.0], VisibleKind::Binary).unwrap(),
            vec![0; 4]
        );
        assert_eq!(
            init_latent(&single(2.0, 0.0, -1.0), &[1.0], VisibleKind::Binary).unwrap(),
            vec![1]
        );
        // σ(2 + 0 − 2) = 0.5 is a tie
        assert_eq!(
            init_latent(&single(2.0, 0.0, 0.0), &[1.0], VisibleKind::Gaussian).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn flip_delta_examples() {
        let p = LayerParams::new(array![[0.0, 0.7]].view(), vec![0.2], vec![-1.5, 0.3]).unwrap();
        let a = [0.2];
        let v = flip_delta(&p, 0, &[0, 0], &[1.0], &a, VisibleKind::Binary).unwrap();
        assert_eq!(v, -1.5);

        let v = flip_delta(
            &single(1.0, 0.0, 0.0),
            0,
            &[0],
            &[1.0],
            &[0.0],
            VisibleKind::Binary,
        )
        .unwrap();
        // 1 − log(1 + e) + log 2
        assert!((v - 0.379_885_493_041_722_3).abs() < 1e-12);
        assert!(flip_delta(&p, 2, &[0, 0], &[1.0], &a, VisibleKind::Binary).is_err());
    }

    #[test]
    fn decoupled_units_follow_their_prior() {
        let p = LayerParams::new(
            array![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]].view(),
            vec![0.3, -0.2],
            vec![1.0, -2.0, 0.5],
        )
        .unwrap();
        let r = icm_map(
            &p,
            &[1.0, 0.0],
            &[0, 1, 0],
            &IcmConfig::default(),
            VisibleKind::Binary,
        )
        .unwrap();
        assert_eq!(r.state, vec![1, 0, 1]);
        assert!(r.converged);
        assert_eq!(r.sweeps_used, 2);
        assert_eq!(r.delta_evaluations, 6);
    }

    #[test]
    fn empty_latent_layer_is_trivially_converged() {
        let p = LayerParams::zeros(3, 0);
        let r = icm_map(
            &p,
            &[1.0, 0.0, 1.0],
            &[],
            &IcmConfig::default(),
            VisibleKind::Binary,
        )
        .unwrap();
        assert!(r.state.is_empty());
        assert!(r.converged);
        assert_eq!(r.sweeps_used, 0);
        assert!((r.final_joint_logprob - 3.0 * (0.5f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_sweeps_is_rejected() {
        let cfg = IcmConfig {
            max_sweeps: 0,
            ..IcmConfig::default()
        };
        assert!(icm_map(
            &single(1.0, 0.0, 0.0),
            &[1.0],
            &[0],
            &cfg,
            VisibleKind::Binary
        )
        .is_err());
    }

    #[test]
    fn bruteforce_examples() {
        let p = LayerParams::new(array![[0.0, 0.0]].view(), vec![0.0], vec![1.0, -1.0]).unwrap();
        assert_eq!(
            bruteforce_map(&p, &[1.0], VisibleKind::Binary).unwrap().0,
            vec![1, 0]
        );
        let z = LayerParams::zeros(2, 3);
        assert_eq!(
            bruteforce_map(&z, &[0.0, 1.0], VisibleKind::Binary)
                .unwrap()
                .0,
            vec![0, 0, 0]
        );
        let big = LayerParams::zeros(1, 21);
        assert!(matches!(
            bruteforce_map(&big, &[0.0], VisibleKind::Binary),
            Err(LrbnError::TooLarge { .. })
        ));
    }

    #[test]
    fn lexicographic_state_order() {
        assert_eq!(state_from_index(0, 3), vec![0, 0, 0]);
        assert_eq!(state_from_index(1, 3), vec![0, 0, 1]);
        assert_eq!(state_from_index(4, 3), vec![1, 0, 0]);
    }

    #[test]
    fn middle_with_vanishing_likelihood_follows_top_down_input() {
        let lower = LayerParams::zeros(2, 3);
        let upper = LayerParams::new(
            array![[1.0], [-1.0], [0.5]].view(),
            vec![-0.2, 0.4, -1.0],
            vec![0.0],
        )
        .unwrap();
        // c = (0.8, -0.6, -0.5)
        let r = icm_map_middle(
            &lower,
            &upper,
            &[1.0, 0.0],
            &[1],
            &[0, 1, 1],
            &IcmConfig::default(),
            VisibleKind::Binary,
        )
        .unwrap();
        assert_eq!(r.state, vec![1, 0, 0]);
        assert!(r.converged);
    }
}
