//! Parameter containers and exact log-probabilities.
//!
//! A [`LayerParams`] couples a lower layer (`n_lower` units, the visible layer
//! for pair 0) with the layer directly above it (`n_upper` binary units):
//!
//! ```text
//! P(h_j = 1)         = σ(d_j)
//! P(x_i = 1 | h)     = σ(Σ_j w_ij h_j + b_i)          binary lower layer
//! x_i | h            ~ N(Σ_j w_ij h_j + b_i, 1)       gaussian lower layer
//! ```
//!
//! A [`DeepLrbn`] is an ordered stack of pairs. Its joint is the top pair's
//! prior times every conditional going down; the `d` vectors of the lower
//! pairs are kept (they act as the prior while a pair is pre-trained and as
//! the initialisation prior for inference) but do not enter the deep joint.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{check_len, LrbnError, Result};
use crate::math::{sigmoid, softplus};

/// Distribution family of the visible layer. Latent layers are always binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VisibleKind {
    Binary,
    Gaussian,
}

impl VisibleKind {
    fn to_byte(self) -> u8 {
        match self {
            VisibleKind::Binary => 0,
            VisibleKind::Gaussian => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(VisibleKind::Binary),
            1 => Some(VisibleKind::Gaussian),
            _ => None,
        }
    }
}

impl std::fmt::Display for VisibleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VisibleKind::Binary => f.write_str("binary"),
            VisibleKind::Gaussian => f.write_str("gaussian"),
        }
    }
}

/// Parameters of one adjacent layer pair.
///
/// `w` is `n_lower × n_upper`; it is stored column-major so that the weights
/// fanning out of one upper unit are contiguous, which is the access pattern
/// of inference and of the gradient updates.
#[derive(Debug, Clone)]
pub struct LayerParams {
    n_lower: usize,
    n_upper: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
    exp_cache: ExpCache,
}

impl PartialEq for LayerParams {
    fn eq(&self, other: &Self) -> bool {
        self.n_lower == other.n_lower
            && self.n_upper == other.n_upper
            && self.w == other.w
            && self.b == other.b
            && self.d == other.d
    }
}

/// `expm1(±w_ij)` and `e^{max_i |w_ij|}` per column, built on first use by
/// inference and dropped whenever a weight changes.
pub(crate) struct ExpWeights {
    pub(crate) up: Vec<f64>,
    pub(crate) down: Vec<f64>,
    pub(crate) growth: Vec<f64>,
}

#[derive(Clone, Default)]
struct ExpCache(OnceLock<Arc<ExpWeights>>);

impl std::fmt::Debug for ExpCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.0.get().is_some() {
            "cached"
        } else {
            "empty"
        })
    }
}

impl LayerParams {
    pub fn zeros(n_lower: usize, n_upper: usize) -> Self {
        Self {
            n_lower,
            n_upper,
            w: vec![0.0; n_lower * n_upper],
            b: vec![0.0; n_lower],
            d: vec![0.0; n_upper],
            exp_cache: ExpCache::default(),
        }
    }

    /// Builds a pair from an `n_lower × n_upper` weight matrix (any memory
    /// layout), lower offsets `b` and upper prior biases `d`.
    pub fn new(w: ArrayView2<'_, f64>, b: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let (n_lower, n_upper) = w.dim();
        check_len("offsets b", n_lower, b.len())?;
        check_len("prior biases d", n_upper, d.len())?;
        let mut p = Self::zeros(n_lower, n_upper);
        for j in 0..n_upper {
            p.column_mut(j)
                .iter_mut()
                .zip(w.column(j))
                .for_each(|(dst, &src)| *dst = src);
        }
        p.b = b;
        p.d = d;
        p.check_finite("layer parameters")?;
        Ok(p)
    }

    pub fn n_lower(&self) -> usize {
        self.n_lower
    }

    pub fn n_upper(&self) -> usize {
        self.n_upper
    }

    /// Weight matrix as an `n_lower × n_upper` view.
    pub fn w(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.n_lower, self.n_upper).f(), &self.w)
            .expect("weight storage matches its shape")
    }

    pub fn w_owned(&self) -> Array2<f64> {
        self.w().to_owned()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[j * self.n_lower + i]
    }

    #[inline]
    pub fn set_weight(&mut self, i: usize, j: usize, v: f64) {
        self.invalidate();
        self.w[j * self.n_lower + i] = v;
    }

    /// Weights from upper unit `j` to every lower unit.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.w[j * self.n_lower..(j + 1) * self.n_lower]
    }

    #[inline]
    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        self.invalidate();
        &mut self.w[j * self.n_lower..(j + 1) * self.n_lower]
    }

    /// Replaces the weight matrix; `w` must be `n_lower × n_upper`.
    pub fn set_w(&mut self, w: ArrayView2<'_, f64>) -> Result<()> {
        check_len("weight rows", self.n_lower, w.nrows())?;
        check_len("weight columns", self.n_upper, w.ncols())?;
        for j in 0..self.n_upper {
            for (dst, &src) in self.column_mut(j).iter_mut().zip(w.column(j)) {
                *dst = src;
            }
        }
        Ok(())
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn d_mut(&mut self) -> &mut [f64] {
        &mut self.d
    }

    pub(crate) fn w_raw_mut(&mut self) -> &mut [f64] {
        self.invalidate();
        &mut self.w
    }

    #[inline]
    fn invalidate(&mut self) {
        if self.exp_cache.0.get().is_some() {
            self.exp_cache = ExpCache::default();
        }
    }

    pub(crate) fn exp_weights(&self) -> &ExpWeights {
        self.exp_cache.0.get_or_init(|| {
            let up: Vec<f64> = self.w.iter().map(|&w| w.exp_m1()).collect();
            let down: Vec<f64> = self.w.iter().map(|&w| (-w).exp_m1()).collect();
            let growth = (0..self.n_upper)
                .map(|j| {
                    let r = j * self.n_lower..(j + 1) * self.n_lower;
                    1.0 + up[r.clone()]
                        .iter()
                        .zip(&down[r])
                        .fold(0.0f64, |m, (u, d)| m.max(*u).max(*d))
                })
                .collect();
            Arc::new(ExpWeights { up, down, growth })
        })
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(&self.b)
            .chain(&self.d)
            .all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(LrbnError::NonFinite(context.to_string()))
        }
    }

    /// `a = W h + b`.
    pub fn activations(&self, h: &[u8]) -> Result<Vec<f64>> {
        check_len("latent state", self.n_upper, h.len())?;
        let mut a = self.b.clone();
        for (j, &hj) in h.iter().enumerate() {
            if hj != 0 {
                for (ai, &w) in a.iter_mut().zip(self.column(j)) {
                    *ai += w;
                }
            }
        }
        Ok(a)
    }

    /// `W^T x + d`, the input to the factorised (undirected) posterior used
    /// for initialisation.
    pub fn upward_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("lower vector", self.n_lower, x.len())?;
        Ok((0..self.n_upper)
            .map(|j| dot(self.column(j), x) + self.d[j])
            .collect())
    }

    /// Largest absolute difference to another pair of the same shape.
    pub fn max_abs_diff(&self, other: &LayerParams) -> f64 {
        self.w
            .iter()
            .zip(&other.w)
            .chain(self.b.iter().zip(&other.b))
            .chain(self.d.iter().zip(&other.d))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute parameter value, used for relative change tests.
    pub fn max_abs(&self) -> f64 {
        self.w
            .iter()
            .chain(&self.b)
            .chain(&self.d)
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One binary configuration per latent layer, bottom (`h¹`) first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatentState {
    pub layers: Vec<Vec<u8>>,
}

impl LatentState {
    pub fn new(layers: Vec<Vec<u8>>) -> Self {
        Self { layers }
    }

    pub fn zeros(model: &DeepLrbn) -> Self {
        Self {
            layers: model.layers.iter().map(|p| vec![0; p.n_upper()]).collect(),
        }
    }

    pub fn top(&self) -> &[u8] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// One-hot class indicator `t` used as the clamped top layer in supervised
/// fine-tuning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTarget(Vec<u8>);

impl LabelTarget {
    pub fn new(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(LrbnError::InvalidValue(format!(
                "label {class} outside [0, {num_classes})"
            )));
        }
        let mut t = vec![0; num_classes];
        t[class] = 1;
        Ok(Self(t))
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn class(&self) -> usize {
        self.0.iter().position(|&v| v == 1).expect("one-hot")
    }
}

/// A stack of layer pairs, `layers[0]` touching the visible layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLrbn {
    layers: Vec<LayerParams>,
    visible_kind: VisibleKind,
}

impl DeepLrbn {
    pub fn new(layers: Vec<LayerParams>, visible_kind: VisibleKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(LrbnError::DimensionInconsistency(
                "a model needs at least one latent layer".into(),
            ));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].n_upper() != pair[1].n_lower() {
                return Err(LrbnError::DimensionInconsistency(format!(
                    "pair {l} has {} upper units but pair {} has {} lower units",
                    pair[0].n_upper(),
                    l + 1,
                    pair[1].n_lower()
                )));
            }
        }
        Ok(Self {
            layers,
            visible_kind,
        })
    }

    /// All-zero model with the given sizes `[n_d, n_h¹, …, n_hᴸ]`.
    pub fn zeros(layer_sizes: &[usize], visible_kind: VisibleKind) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(LrbnError::InvalidConfig(
                "layer sizes need a visible and at least one latent layer".into(),
            ));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|s| LayerParams::zeros(s[0], s[1]))
            .collect();
        Self::new(layers, visible_kind)
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<LayerParams> {
        self.layers
    }

    pub fn visible_kind(&self) -> VisibleKind {
        self.visible_kind
    }

    /// Number of latent layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `[n_d, n_h¹, …, n_hᴸ]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].n_lower())
            .chain(self.layers.iter().map(LayerParams::n_upper))
            .collect()
    }

    pub fn n_visible(&self) -> usize {
        self.layers[0].n_lower()
    }

    pub fn total_latent(&self) -> usize {
        self.layers.iter().map(LayerParams::n_upper).sum()
    }

    pub fn top(&self) -> &LayerParams {
        self.layers.last().expect("at least one layer")
    }

    /// Kind of the lower layer of pair `l`.
    pub fn lower_kind(&self, l: usize) -> VisibleKind {
        if l == 0 {
            self.visible_kind
        } else {
            VisibleKind::Binary
        }
    }

    pub fn check_state(&self, s: &LatentState) -> Result<()> {
        check_len("latent layer count", self.layers.len(), s.layers.len())?;
        for (p, h) in self.layers.iter().zip(&s.layers) {
            check_len("latent layer", p.n_upper(), h.len())?;
        }
        Ok(())
    }

    /// `log P(x, h¹, …, hᴸ)`.
    pub fn joint_logprob(&self, x: &[f64], s: &LatentState) -> Result<f64> {
        joint_logprob(self, x, s)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serialize(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        deserialize(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn check_binary_u8(h: &[u8]) -> Result<()> {
    match h.iter().position(|&v| v > 1) {
        Some(index) => Err(LrbnError::NonBinary {
            index,
            value: h[index] as f64,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_binary(x: &[f64]) -> Result<()> {
    match x.iter().position(|&v| v != 0.0 && v != 1.0) {
        Some(index) => Err(LrbnError::NonBinary {
            index,
            value: x[index],
        }),
        None => Ok(()),
    }
}

/// `Σ_j [h_j d_j − log(1 + e^{d_j})]`.
pub fn prior_logprob(d: &[f64], h: &[u8]) -> Result<f64> {
    check_len("prior state", d.len(), h.len())?;
    check_binary_u8(h)?;
    Ok(d.iter()
        .zip(h)
        .map(|(&dj, &hj)| if hj != 0 { dj } else { 0.0 } - softplus(dj))
        .sum())
}

/// Log-density of the lower layer given activations `a = W h + b`.
pub(crate) fn visible_logprob_from_activations(a: &[f64], x: &[f64], kind: VisibleKind) -> f64 {
    match kind {
        VisibleKind::Binary => a
            .iter()
            .zip(x)
            .map(|(&ai, &xi)| xi * ai - softplus(ai))
            .sum(),
        VisibleKind::Gaussian => {
            let sq: f64 = a
                .iter()
                .zip(x)
                .map(|(&ai, &xi)| (xi - ai) * (xi - ai))
                .sum();
            -0.5 * sq - 0.5 * a.len() as f64 * (2.0 * PI).ln()
        }
    }
}

/// `log P(x | h)` for one layer pair.
pub fn conditional_logprob_visible(
    params: &LayerParams,
    h: &[u8],
    x: &[f64],
    kind: VisibleKind,
) -> Result<f64> {
    check_len("lower vector", params.n_lower(), x.len())?;
    check_binary_u8(h)?;
    if kind == VisibleKind::Binary {
        check_binary(x)?;
    }
    let a = params.activations(h)?;
    Ok(visible_logprob_from_activations(&a, x, kind))
}

/// `log P(x, h)` of a standalone two-layer model using this pair's own prior.
pub fn pair_joint_logprob(
    params: &LayerParams,
    x: &[f64],
    h: &[u8],
    kind: VisibleKind,
) -> Result<f64> {
    Ok(prior_logprob(params.d(), h)? + conditional_logprob_visible(params, h, x, kind)?)
}

pub(crate) fn u8_to_f64(h: &[u8]) -> Vec<f64> {
    h.iter().map(|&v| v as f64).collect()
}

/// Deep joint `log P(x, h¹, …, hᴸ)`: prior of the top layer plus every
/// conditional from the top down to the visible layer.
pub fn joint_logprob(model: &DeepLrbn, x: &[f64], s: &LatentState) -> Result<f64> {
    model.check_state(s)?;
    let top = model.depth() - 1;
    let mut total = prior_logprob(model.layers[top].d(), &s.layers[top])?;
    for l in (1..model.depth()).rev() {
        let below = u8_to_f64(&s.layers[l - 1]);
        total += conditional_logprob_visible(
            &model.layers[l],
            &s.layers[l],
            &below,
            VisibleKind::Binary,
        )?;
    }
    total += conditional_logprob_visible(&model.layers[0], &s.layers[0], x, model.visible_kind)?;
    Ok(total)
}

/// Probability of the top unit `j` being on under the pair's prior.
pub fn prior_probability(params: &LayerParams, j: usize) -> f64 {
    sigmoid(params.d()[j])
}

// ---------------------------------------------------------------------------
// container format
//
//   "LRBN" | u32 version | u8 visible kind | u32 L | (L+1) × u32 sizes
//   then per pair: W (n_lower × n_upper, row-major), b, d as f64
//   every integer and float little-endian

const MAGIC: &[u8; 4] = b"LRBN";
pub const FORMAT_VERSION: u32 = 1;

pub fn serialize(model: &DeepLrbn) -> Vec<u8> {
    let sizes = model.layer_sizes();
    let n_floats: usize = model
        .layers
        .iter()
        .map(|p| p.n_lower() * p.n_upper() + p.n_lower() + p.n_upper())
        .sum();
    let mut out = Vec::with_capacity(13 + 4 * sizes.len() + 8 * n_floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(model.visible_kind.to_byte());
    out.extend_from_slice(&(model.depth() as u32).to_le_bytes());
    for s in &sizes {
        out.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    for p in &model.layers {
        for i in 0..p.n_lower() {
            for j in 0..p.n_upper() {
                out.extend_from_slice(&p.weight(i, j).to_le_bytes());
            }
        }
        for v in p.b().iter().chain(p.d()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(LrbnError::Truncated("container"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<DeepLrbn> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(LrbnError::BadMagic {
            expected: "LRBN".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(LrbnError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let kind_byte = r.u8()?;
    let kind = VisibleKind::from_byte(kind_byte).ok_or_else(|| {
        LrbnError::DimensionInconsistency(format!("unknown visible kind tag {kind_byte}"))
    })?;
    let depth = r.u32()? as usize;
    if depth == 0 {
        return Err(LrbnError::DimensionInconsistency(
            "container declares zero latent layers".into(),
        ));
    }
    // each declared size occupies four bytes, so a depth larger than the
    // remaining input is a truncation, not an allocation request
    if depth.saturating_add(1).saturating_mul(4) > bytes.len() - r.pos {
        return Err(LrbnError::Truncated("container"));
    }
    let sizes = (0..=depth)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;

    let mut expected_floats: usize = 0;
    for s in sizes.windows(2) {
        let count = s[0]
            .checked_mul(s[1])
            .and_then(|w| w.checked_add(s[0]))
            .and_then(|v| v.checked_add(s[1]))
            .ok_or_else(|| LrbnError::DimensionInconsistency("declared sizes overflow".into()))?;
        expected_floats = expected_floats
            .checked_add(count)
            .ok_or_else(|| LrbnError::DimensionInconsistency("declared sizes overflow".into()))?;
    }
    let remaining = bytes.len() - r.pos;
    let expected_bytes = expected_floats
        .checked_mul(8)
        .ok_or_else(|| LrbnError::DimensionInconsistency("declared sizes overflow".into()))?;
    if remaining < expected_bytes {
        return Err(LrbnError::Truncated("container"));
    }
    if remaining > expected_bytes {
        return Err(LrbnError::DimensionInconsistency(format!(
            "declared sizes {sizes:?} account for {expected_bytes} payload bytes but {remaining} are present"
        )));
    }

    let mut layers = Vec::with_capacity(depth);
    for s in sizes.windows(2) {
        let (n_lower, n_upper) = (s[0], s[1]);
        let mut p = LayerParams::zeros(n_lower, n_upper);
        for i in 0..n_lower {
            for j in 0..n_upper {
                p.set_weight(i, j, r.f64()?);
            }
        }
        for v in p.b_mut() {
            *v = r.f64()?;
        }
        for v in p.d_mut() {
            *v = r.f64()?;
        }
        p.check_finite("container payload")?;
        layers.push(p);
    }
    DeepLrbn::new(layers, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const LN_HALF: f64 = -std::f64::consts::LN_2;

    #[test]
    fn prior_examples() {
        assert!((prior_logprob(&[0.0, 0.0], &[1, 0]).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        assert!((prior_logprob(&[2.0], &[1]).unwrap() + 0.126_928_011_042_972_6).abs() < 1e-12);
        assert_eq!(prior_logprob(&[], &[]).unwrap(), 0.0);
        assert!(matches!(
            prior_logprob(&[0.0], &[1, 0]),
            Err(LrbnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn conditional_examples() {
        let p = LayerParams::zeros(3, 2);
        let v = conditional_logprob_visible(&p, &[1, 0], &[1.0, 0.0, 1.0], VisibleKind::Binary)
            .unwrap();
        assert!((v - 3.0 * LN_HALF).abs() < 1e-15);

        let one = LayerParams::new(array![[1.0]].view(), vec![0.0], vec![0.0]).unwrap();
        let v = conditional_logprob_visible(&one, &[1], &[1.0], VisibleKind::Binary).unwrap();
        // 1 − log(1 + e)
        assert!((v + 0.313_261_687_518_222_9).abs() < 1e-12);

        let g = LayerParams::new(
            array![[0.5, -1.0], [2.0, 0.25]].view(),
            vec![0.1, -0.2],
            vec![0.0, 0.0],
        )
        .unwrap();
        let x = [0.5 - 1.0 + 0.1, 2.0 + 0.25 - 0.2];
        let v = conditional_logprob_visible(&g, &[1, 1], &x, VisibleKind::Gaussian).unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn conditional_rejects_bad_input() {
        let p = LayerParams::zeros(2, 1);
        assert!(matches!(
            conditional_logprob_visible(&p, &[1], &[0.5, 1.0], VisibleKind::Binary),
            Err(LrbnError::NonBinary { index: 0, .. })
        ));
        assert!(matches!(
            conditional_logprob_visible(&p, &[1], &[1.0], VisibleKind::Binary),
            Err(LrbnError::DimensionMismatch { .. })
        ));
        assert!(conditional_logprob_visible(&p, &[1], &[0.5, 1.0], VisibleKind::Gaussian).is_ok());
    }

    #[test]
    fn joint_of_zero_model_is_uniform() {
        let m = DeepLrbn::zeros(&[2, 1], VisibleKind::Binary).unwrap();
        for x in [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]] {
            for h in [0u8, 1] {
                let s = LatentState::new(vec![vec![h]]);
                let v = m.joint_logprob(&x, &s).unwrap();
                assert!((v - 3.0 * LN_HALF).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn model_construction_checks_chaining() {
        let bad = DeepLrbn::new(
            vec![LayerParams::zeros(4, 3), LayerParams::zeros(2, 2)],
            VisibleKind::Binary,
        );
        assert!(matches!(bad, Err(LrbnError::DimensionInconsistency(_))));
        assert!(DeepLrbn::new(vec![], VisibleKind::Binary).is_err());
        let m = DeepLrbn::zeros(&[5, 3, 2], VisibleKind::Gaussian).unwrap();
        assert_eq!(m.layer_sizes(), vec![5, 3, 2]);
        assert_eq!(m.depth(), 2);
        assert_eq!(m.lower_kind(1), VisibleKind::Binary);
    }

    #[test]
    fn weight_view_matches_storage() {
        let w = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let p = LayerParams::new(w.view(), vec![0.0; 2], vec![0.0; 3]).unwrap();
        assert_eq!(p.w(), w.view());
        assert_eq!(p.column(1), &[2.0, 5.0]);
        assert_eq!(p.activations(&[1, 0, 1]).unwrap(), vec![4.0, 10.0]);
        assert_eq!(p.upward_input(&[1.0, 1.0]).unwrap(), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn label_target_is_one_hot() {
        let t = LabelTarget::new(2, 4).unwrap();
        assert_eq!(t.as_slice(), &[0, 0, 1, 0]);
        assert_eq!(t.class(), 2);
        assert!(LabelTarget::new(4, 4).is_err());
    }

    #[test]
    fn container_errors() {
        assert!(matches!(
            deserialize(&[]),
            Err(LrbnError::Truncated("container"))
        ));
        assert!(matches!(
            deserialize(b"NOPE\x01\x00\x00\x00"),
            Err(LrbnError::BadMagic { .. })
        ));
        let m = DeepLrbn::zeros(&[3, 2], VisibleKind::Binary).unwrap();
        let mut bytes = m.to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            deserialize(&bytes),
            Err(LrbnError::VersionMismatch { found: 9, .. })
        ));

        let mut bytes = m.to_bytes();
        // declare 3 × 1 instead of 3 × 2: payload too long for the header
        bytes[17] = 1;
        let err = deserialize(&bytes).unwrap_err();
        assert!(err.to_string().contains("dimension inconsistency"), "{err}");

        let bytes = m.to_bytes();
        assert!(matches!(
            deserialize(&bytes[..bytes.len() - 1]),
            Err(LrbnError::Truncated("container"))
        ));
    }

    #[test]
    fn container_layout_is_row_major_little_endian() {
        let w = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let p = LayerParams::new(w.view(), vec![7.0, 8.0, 9.0], vec![10.0, 11.0]).unwrap();
        let m = DeepLrbn::new(vec![p], VisibleKind::Gaussian).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"LRBN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 1);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[17..21].try_into().unwrap()), 2);
        let floats: Vec<f64> = bytes[21..]
            .chunks(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(
            floats,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0]
        );
    }
}
