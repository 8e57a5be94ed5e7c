//! One-dimensional CNN over log-spectrograms.
//!
//! ```text
//! x: F0 x T0
//!   -> conv: N filters of size F0 x 1, ReLU             N x T0
//!   -> max-pool along time, kernel k, stride s          N x T1,  T1 = ceil(T0 / s)
//!   -> flatten (filter-major)                           n3 = T1 * N
//!   -> dense n4, ReLU
//!   -> dense 1, sigmoid                                 P(depressed)
//! ```
//!
//! Pooling windows past the right edge read zeros. Inputs to the pool are
//! post-ReLU, so the padding never changes the maximum of a window that
//! contains a positive activation.

mod model_file;

pub use model_file::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Label, Result};

/// Marks a pooled value that came from zero padding.
pub const NO_ARGMAX: usize = usize::MAX;
const PROB_CLAMP: f64 = 1e-12;

/// Layer sizes that do not depend on the input dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    /// Number of convolution filters, N.
    pub filters: usize,
    /// Temporal pooling kernel, k.
    pub pool_kernel: usize,
    /// Temporal pooling stride, s.
    pub pool_stride: usize,
    /// Pooling padding, p. Recorded with the model; the pool always pads the
    /// right edge as far as `T1 = ceil(T0 / s)` requires.
    pub pool_padding: usize,
    /// Hidden dense width, n4.
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            filters: 128,
            pool_kernel: 5,
            pool_stride: 4,
            pool_padding: 4,
            hidden: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub f0: usize,
    pub t0: usize,
    pub arch: Architecture,
}

impl NetworkConfig {
    pub fn new(f0: usize, t0: usize, arch: Architecture) -> Result<Self> {
        let cfg = Self { f0, t0, arch };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        if self.f0 == 0 || self.t0 == 0 {
            return Err(Error::InvalidArgument(format!("input must be non-empty, got {}x{}", self.f0, self.t0)));
        }
        if a.filters == 0 || a.hidden == 0 {
            return Err(Error::InvalidArgument("filter count and hidden width must be positive".into()));
        }
        if a.pool_kernel == 0 || a.pool_stride == 0 {
            return Err(Error::InvalidArgument("pooling kernel and stride must be at least 1".into()));
        }
        Ok(())
    }

    /// T1.
    pub fn pooled_len(&self) -> usize {
        self.t0.div_ceil(self.arch.pool_stride)
    }

    /// n3 = T1 * N.
    pub fn flat_len(&self) -> usize {
        self.pooled_len() * self.arch.filters
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    fn layout(&self) -> Layout {
        let n = self.arch.filters;
        let h = self.arch.hidden;
        let w1 = 0;
        let b1 = w1 + n * self.f0;
        let w4 = b1 + n;
        let b4 = w4 + h * self.flat_len();
        let wout = b4 + h;
        let bout = wout + h;
        Layout {
            w1,
            b1,
            w4,
            b4,
            wout,
            bout,
            total: bout + 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w4: usize,
    b4: usize,
    wout: usize,
    bout: usize,
    total: usize,
}

/// All trainable weights in one contiguous buffer, ordered
/// W1 (N x F0), b1 (N), W4 (n4 x n3), b4 (n4), Wout (n4), bout.
///
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    cfg: NetworkConfig,
    data: Vec<f64>,
}

pub type Gradients = NetworkParams;

pub struct ParamsMut<'a> {
    pub w1: ArrayViewMut2<'a, f64>,
    pub b1: ArrayViewMut1<'a, f64>,
    pub w4: ArrayViewMut2<'a, f64>,
    pub b4: ArrayViewMut1<'a, f64>,
    pub wout: ArrayViewMut1<'a, f64>,
    pub bout: &'a mut f64,
}

impl NetworkParams {
    pub fn zeros(cfg: NetworkConfig) -> Self {
        Self {
            data: vec![0.0; cfg.param_count()],
            cfg,
        }
    }

    pub fn from_vec(cfg: NetworkConfig, data: Vec<f64>) -> Result<Self> {
        if data.len() != cfg.param_count() {
            return Err(Error::shape(format!("{} parameters", cfg.param_count()), data.len()));
        }
        Ok(Self { cfg, data })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        let l = self.cfg.layout();
        ArrayView2::from_shape((self.cfg.arch.filters, self.cfg.f0), &self.data[l.w1..l.b1]).unwrap()
    }

    pub fn b1(&self) -> ArrayView1<'_, f64> {
        let l = self.cfg.layout();
        ArrayView1::from(&self.data[l.b1..l.w4])
    }

    pub fn w4(&self) -> ArrayView2<'_, f64> {
        let l = self.cfg.layout();
        ArrayView2::from_shape((self.cfg.arch.hidden, self.cfg.flat_len()), &self.data[l.w4..l.b4]).unwrap()
    }

    pub fn b4(&self) -> ArrayView1<'_, f64> {
        let l = self.cfg.layout();
        ArrayView1::from(&self.data[l.b4..l.wout])
    }

    pub fn wout(&self) -> ArrayView1<'_, f64> {
        let l = self.cfg.layout();
        ArrayView1::from(&self.data[l.wout..l.bout])
    }

    pub fn bout(&self) -> f64 {
        self.data[self.cfg.layout().bout]
    }

    pub fn parts_mut(&mut self) -> ParamsMut<'_> {
        let l = self.cfg.layout();
        let (n, f0, h, n3) = (self.cfg.arch.filters, self.cfg.f0, self.cfg.arch.hidden, self.cfg.flat_len());
        let (w1, rest) = self.data.split_at_mut(l.b1);
        let (b1, rest) = rest.split_at_mut(l.w4 - l.b1);
        let (w4, rest) = rest.split_at_mut(l.b4 - l.w4);
        let (b4, rest) = rest.split_at_mut(l.wout - l.b4);
        let (wout, bout) = rest.split_at_mut(l.bout - l.wout);
        ParamsMut {
            w1: ArrayViewMut2::from_shape((n, f0), w1).unwrap(),
            b1: ArrayViewMut1::from(b1),
            w4: ArrayViewMut2::from_shape((h, n3), w4).unwrap(),
            b4: ArrayViewMut1::from(b4),
            wout: ArrayViewMut1::from(wout),
            bout: &mut bout[0],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()> {
        if other.cfg != self.cfg {
            return Err(Error::shape(format!("{:?}", self.cfg), format!("{:?}", other.cfg)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(cfg: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    cfg.validate()?;
    let mut params = NetworkParams::zeros(*cfg);
    let mut rng = rng::seeded(seed);
    let (n, h) = (cfg.arch.filters, cfg.arch.hidden);
    let mut fill = |view: &mut dyn Iterator<Item = &mut f64>, fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for w in view {
            *w = dist.sample(&mut rng);
        }
    };
    let p = params.parts_mut();
    let (mut w1, mut w4, mut wout) = (p.w1, p.w4, p.wout);
    fill(&mut w1.iter_mut(), cfg.f0, n);
    fill(&mut w4.iter_mut(), cfg.flat_len(), h);
    fill(&mut wout.iter_mut(), h, 1);
    Ok(params)
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_input(cfg: &NetworkConfig, x: &ArrayView2<f64>) -> Result<()> {
    if x.dim() != (cfg.f0, cfg.t0) {
        return Err(Error::shape(format!("{}x{} input", cfg.f0, cfg.t0), format!("{:?}", x.dim())));
    }
    // ReLU and max-pooling would silently drop NaN
    if let Some(((f, t), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("input value {v} at ({f}, {t}) is not finite")));
    }
    Ok(())
}

fn conv_pre(params: &NetworkParams, x: &ArrayView2<f64>) -> Array2<f64> {
    let cfg = params.config();
    let mut z = Array2::zeros((cfg.arch.filters, cfg.t0));
    for (mut row, &b) in z.axis_iter_mut(Axis(0)).zip(params.b1()) {
        row.fill(b);
    }
    general_mat_mul(1.0, &params.w1(), x, 1.0, &mut z);
    z
}

/// `out[n][t] = relu(sum_f W1[n][f] x[f][t] + b1[n])`.
pub fn conv_freq(params: &NetworkParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(params.config(), &x)?;
    Ok(conv_pre(params, &x).mapv(relu))
}

/// Max over windows `[j*s, j*s + k)` along each row, `T1 = ceil(T0 / s)`.
/// Columns past the end read as 0. Ties resolve to the smallest index;
/// [`NO_ARGMAX`] marks a window whose maximum was a padded zero.
pub fn maxpool_time(act: ArrayView2<f64>, k: usize, s: usize) -> Result<(Array2<f64>, Array2<usize>)> {
    if k < 1 || s < 1 {
        return Err(Error::InvalidArgument(format!("pooling needs k >= 1 and s >= 1, got k={k}, s={s}")));
    }
    let (rows, t0) = act.dim();
    let t1 = t0.div_ceil(s);
    let mut vals = Array2::zeros((rows, t1));
    let mut args = Array2::from_elem((rows, t1), NO_ARGMAX);
    for (r, row) in act.axis_iter(Axis(0)).enumerate() {
        for j in 0..t1 {
            let start = j * s;
            let end = (start + k).min(t0);
            let mut best = f64::NEG_INFINITY;
            let mut arg = NO_ARGMAX;
            for t in start..end {
                if row[t] > best {
                    best = row[t];
                    arg = t;
                }
            }
            if start + k > t0 && 0.0 > best {
                best = 0.0;
                arg = NO_ARGMAX;
            }
            vals[[r, j]] = best;
            args[[r, j]] = arg;
        }
    }
    Ok((vals, args))
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub conv_pre: Array2<f64>,
    pub conv_act: Array2<f64>,
    pub pooled: Array2<f64>,
    pub argmax: Array2<usize>,
    pub hidden_pre: Array1<f64>,
    pub hidden: Array1<f64>,
    pub logit: f64,
    pub probability: f64,
}

impl ForwardCache {
    /// Which ReLUs are open and where each pooling window routes. Two
    /// parameter settings with the same pattern lie on the same smooth piece
    /// of the loss surface.
    pub fn activation_pattern(&self) -> (Vec<bool>, Vec<usize>, Vec<bool>) {
        (
            self.conv_pre.iter().map(|&v| v > 0.0).collect(),
            self.argmax.iter().copied().collect(),
            self.hidden_pre.iter().map(|&v| v > 0.0).collect(),
        )
    }
}

pub fn forward(params: &NetworkParams, x: ArrayView2<f64>) -> Result<(f64, ForwardCache)> {
    let cfg = params.config();
    check_input(cfg, &x)?;
    let conv_pre = conv_pre(params, &x);
    let conv_act = conv_pre.mapv(relu);
    let (pooled, argmax) = maxpool_time(conv_act.view(), cfg.arch.pool_kernel, cfg.arch.pool_stride)?;
    // standard layout, so this is the filter-major flatten
    let flat = pooled.view().into_shape_with_order(cfg.flat_len()).expect("contiguous");
    let hidden_pre = params.w4().dot(&flat) + params.b4();
    let hidden = hidden_pre.mapv(relu);
    let logit = params.wout().dot(&hidden) + params.bout();
    let probability = sigmoid(logit);
    Ok((
        probability,
        ForwardCache {
            conv_pre,
            conv_act,
            pooled,
            argmax,
            hidden_pre,
            hidden,
            logit,
            probability,
        },
    ))
}

pub fn predict(params: &NetworkParams, x: ArrayView2<f64>) -> Result<f64> {
    forward(params, x).map(|(p, _)| p)
}

/// Binary cross-entropy with the probability clamped to `[1e-12, 1 - 1e-12]`.
pub fn loss_bce(p: f64, y: Label) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    match y {
        Label::Depressed => -p.ln(),
        Label::NonDepressed => -(1.0 - p).ln(),
    }
}

fn target(y: Label) -> f64 {
    y.as_u8() as f64
}

/// Add the gradient of `loss_bce(forward(x), y)` into `grad`.
pub fn accumulate_gradient(
    params: &NetworkParams,
    cache: &ForwardCache,
    x: ArrayView2<f64>,
    y: Label,
    grad: &mut Gradients,
) -> Result<()> {
    let cfg = params.config();
    check_input(cfg, &x)?;
    if grad.config() != cfg {
        return Err(Error::shape(format!("{cfg:?}"), format!("{:?}", grad.config())));
    }
    if cache.conv_pre.dim() != (cfg.arch.filters, cfg.t0) || cache.hidden.len() != cfg.arch.hidden {
        return Err(Error::shape("forward cache for this network", "cache of another shape"));
    }
    let g = grad.parts_mut();

    let d_logit = cache.probability - target(y);
    *g.bout += d_logit;
    let mut gwout = g.wout;
    gwout.scaled_add(d_logit, &cache.hidden);

    let d_hidden_pre: Array1<f64> = params
        .wout()
        .iter()
        .zip(&cache.hidden_pre)
        .map(|(&w, &z)| if z > 0.0 { d_logit * w } else { 0.0 })
        .collect();
    let mut gb4 = g.b4;
    gb4 += &d_hidden_pre;

    let flat = cache.pooled.view().into_shape_with_order(cfg.flat_len()).expect("contiguous");
    let mut gw4 = g.w4;
    let mut d_flat = Array1::<f64>::zeros(cfg.flat_len());
    for ((mut grow, wrow), &d) in gw4.axis_iter_mut(Axis(0)).zip(params.w4().axis_iter(Axis(0))).zip(&d_hidden_pre) {
        if d != 0.0 {
            grow.scaled_add(d, &flat);
            d_flat.scaled_add(d, &wrow);
        }
    }
    let d_pooled = d_flat.into_shape_with_order((cfg.arch.filters, cfg.pooled_len())).expect("sizes match");

    // route through pooling argmax and the conv ReLU gate; only argmax
    // columns carry gradient, so W1 is updated one routed column at a time
    let xt = x.t().as_standard_layout().into_owned();
    let mut gb1 = g.b1;
    let mut gw1 = g.w1;
    for ((n, j), &t) in cache.argmax.indexed_iter() {
        if t != NO_ARGMAX && cache.conv_pre[[n, t]] > 0.0 {
            let d = d_pooled[[n, j]];
            gb1[n] += d;
            gw1.row_mut(n).scaled_add(d, &xt.row(t));
        }
    }
    Ok(())
}

/// Exact gradient of the loss for one sample.
pub fn backward(params: &NetworkParams, cache: &ForwardCache, x: ArrayView2<f64>, y: Label) -> Result<Gradients> {
    let mut grad = NetworkParams::zeros(*params.config());
    accumulate_gradient(params, cache, x, y, &mut grad)?;
    Ok(grad)
}

/// Forward, loss and gradient accumulation for one sample. Returns the loss.
pub fn sample_step(params: &NetworkParams, x: ArrayView2<f64>, y: Label, grad: &mut Gradients) -> Result<f64> {
    let (p, cache) = forward(params, x)?;
    accumulate_gradient(params, &cache, x, y, grad)?;
    Ok(loss_bce(p, y))
}

/// Central differences `(L(theta + h) - L(theta - h)) / 2h`, one parameter at a time.
pub fn numerical_gradient(params: &NetworkParams, x: ArrayView2<f64>, y: Label, h: f64) -> Result<Gradients> {
    check_input(params.config(), &x)?;
    let mut probe = params.clone();
    let mut grad = NetworkParams::zeros(*params.config());
    for i in 0..params.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let up = loss_bce(predict(&probe, x)?, y);
        probe.data[i] = orig - h;
        let down = loss_bce(predict(&probe, x)?, y);
        probe.data[i] = orig;
        grad.data[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Parameters with index ranges, for reporting.
pub fn block_names(cfg: &NetworkConfig) -> [(&'static str, std::ops::Range<usize>); 6] {
    let l = cfg.layout();
    [
        ("w1", l.w1..l.b1),
        ("b1", l.b1..l.w4),
        ("w4", l.w4..l.b4),
        ("b4", l.b4..l.wout),
        ("wout", l.wout..l.bout),
        ("bout", l.bout..l.total),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_cfg() -> NetworkConfig {
        NetworkConfig::new(
            6,
            9,
            Architecture {
                filters: 3,
                pool_kernel: 2,
                pool_stride: 2,
                pool_padding: 2,
                hidden: 4,
            },
        )
        .unwrap()
    }

    #[test]
    fn default_parameter_count() {
        let cfg = NetworkConfig::new(513, 125, Architecture::default()).unwrap();
        assert_eq!(cfg.pooled_len(), 32);
        assert_eq!(cfg.flat_len(), 4096);
        assert_eq!(cfg.param_count(), 128 * 513 + 128 + 128 * 4096 + 128 + 128 + 1);
        assert_eq!(cfg.param_count(), 590_337);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = small_cfg();
        let a = init_params(&cfg, 1).unwrap();
        assert_eq!(a, init_params(&cfg, 1).unwrap());
        assert_ne!(a, init_params(&cfg, 2).unwrap());
        let bound = (6.0 / (6.0 + 3.0f64)).sqrt();
        assert!(a.w1().iter().all(|w| w.abs() <= bound));
        assert!(a.b1().iter().all(|&b| b == 0.0));
        assert!(a.b4().iter().all(|&b| b == 0.0));
        assert_eq!(a.bout(), 0.0);
    }

    #[test]
    fn conv_zero_weights_give_zero() {
        let p = NetworkParams::zeros(small_cfg());
        let x = Array2::from_elem((6, 9), 0.7);
        assert!(conv_freq(&p, x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_one_hot_selects_frequency() {
        let mut p = NetworkParams::zeros(small_cfg());
        for n in 0..3 {
            p.parts_mut().w1[[n, 4]] = 1.0;
        }
        let x = Array2::from_shape_fn((6, 9), |(f, t)| (f * 10 + t) as f64);
        let out = conv_freq(&p, x.view()).unwrap();
        for n in 0..3 {
            assert_eq!(out.row(n), x.row(4));
        }
    }

    #[test]
    fn conv_rejects_wrong_shape() {
        let p = NetworkParams::zeros(small_cfg());
        assert!(conv_freq(&p, Array2::zeros((5, 9)).view()).is_err());
        assert!(forward(&p, Array2::zeros((6, 8)).view()).is_err());
    }

    #[test]
    fn pooling_hand_example() {
        let act = array![[1.0, 3.0, 2.0, 0.0, 5.0, 4.0]];
        let (v, a) = maxpool_time(act.view(), 3, 2).unwrap();
        assert_eq!(v, array![[3.0, 5.0, 5.0]]);
        assert_eq!(a, array![[1, 4, 4]]);
    }

    #[test]
    fn pooling_identity_and_sizes() {
        let act = array![[0.5, 0.0, 2.0]];
        let (v, a) = maxpool_time(act.view(), 1, 1).unwrap();
        assert_eq!(v, act);
        assert_eq!(a, array![[0, 1, 2]]);
        let (v, _) = maxpool_time(Array2::<f64>::zeros((2, 125)).view(), 5, 4).unwrap();
        assert_eq!(v.dim(), (2, 32));
        assert!(maxpool_time(act.view(), 0, 1).is_err());
        assert!(maxpool_time(act.view(), 1, 0).is_err());
    }

    #[test]
    fn pooling_ties_go_left_and_padding_can_win() {
        let (_, a) = maxpool_time(array![[2.0, 2.0, 1.0]].view(), 2, 2).unwrap();
        assert_eq!(a[[0, 0]], 0);
        let (v, a) = maxpool_time(array![[-1.0, -2.0, -3.0]].view(), 2, 2).unwrap();
        assert_eq!(v[[0, 1]], 0.0);
        assert_eq!(a[[0, 1]], NO_ARGMAX);
        assert_eq!(a[[0, 0]], 0);
    }

    #[test]
    fn zero_params_give_half() {
        let p = NetworkParams::zeros(small_cfg());
        let x = Array2::from_shape_fn((6, 9), |(f, t)| (f + t) as f64);
        assert_eq!(predict(&p, x.view()).unwrap(), 0.5);
    }

    #[test]
    fn saturated_bias() {
        let mut p = NetworkParams::zeros(small_cfg());
        *p.parts_mut().bout = 20.0;
        let prob = predict(&p, Array2::zeros((6, 9)).view()).unwrap();
        assert!((prob - (1.0 - 2.061_153_6e-9)).abs() < 1e-15);
    }

    #[test]
    fn bce_values() {
        assert!((loss_bce(0.5, Label::Depressed) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((loss_bce(0.5, Label::NonDepressed) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(loss_bce(1.0, Label::Depressed) < 1e-11);
        assert!(loss_bce(0.0, Label::NonDepressed) < 1e-11);
        assert!(loss_bce(0.0, Label::Depressed).is_finite());
        assert!((loss_bce(0.9, Label::NonDepressed) - 2.302_585_092_994_045).abs() < 1e-12);
    }

    #[test]
    fn output_bias_gradient_is_p_minus_y() {
        let cfg = small_cfg();
        let p = init_params(&cfg, 3).unwrap();
        let x = Array2::from_shape_fn((6, 9), |(f, t)| ((f * 3 + t) % 5) as f64 / 5.0);
        for y in [Label::Depressed, Label::NonDepressed] {
            let (prob, cache) = forward(&p, x.view()).unwrap();
            let g = backward(&p, &cache, x.view(), y).unwrap();
            assert_eq!(g.bout(), prob - y.as_u8() as f64);
        }
    }

    #[test]
    fn zero_input_gives_zero_conv_weight_gradient() {
        let cfg = small_cfg();
        let mut p = init_params(&cfg, 4).unwrap();
        p.parts_mut().b1.fill(0.3);
        let x = Array2::zeros((6, 9));
        let (_, cache) = forward(&p, x.view()).unwrap();
        let g = backward(&p, &cache, x.view(), Label::Depressed).unwrap();
        assert!(g.w1().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn numerical_gradient_matches_bias_only_probe() {
        let mut p = NetworkParams::zeros(small_cfg());
        *p.parts_mut().bout = 0.37;
        let x = Array2::from_elem((6, 9), 0.2);
        let g = numerical_gradient(&p, x.view(), Label::Depressed, 1e-5).unwrap();
        assert!((g.bout() - (sigmoid(0.37) - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn bout_is_monotone() {
        let cfg = small_cfg();
        let mut p = init_params(&cfg, 8).unwrap();
        let x = Array2::from_shape_fn((6, 9), |(f, t)| ((f + 2 * t) % 7) as f64 / 7.0);
        let mut last = predict(&p, x.view()).unwrap();
        for _ in 0..10 {
            *p.parts_mut().bout += 0.25;
            let now = predict(&p, x.view()).unwrap();
            assert!(now > last);
            last = now;
        }
    }

    #[test]
    fn flat_layout_matches_views() {
        let cfg = small_cfg();
        let p = init_params(&cfg, 5).unwrap();
        let names = block_names(&cfg);
        assert_eq!(names[0].1.len(), 18);
        assert_eq!(names[2].1.len(), 4 * 15);
        assert_eq!(names[5].1.end, p.len());
        assert_eq!(p.w4()[[1, 0]], p.as_slice()[names[2].1.start + 15]);
    }
}
