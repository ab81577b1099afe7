//! A small encoder plus multi-layer refinement decoder emitting one
//! [`MixtureOutput`] per layer, with hand-written reverse mode.
//!
//! Shapes (`H` hidden, `D` context, `N` components, `T` horizon, `O = 5T + 1`):
//!
//! ```text
//! encoder_w  H x D    encoder_b  H
//! queries    N x H                      shared by all layers
//! per layer: ctx_w H x H, feat_w H x 4, hidden_b H, out_w O x H, out_b O
//! ```
//!
//! Layer 1 refines a straight line from the origin to each component's anchor
//! endpoint; layer `n > 1` refines the means of layer `n - 1`. The output row
//! `o` of a component is split as `[dx (T), dy (T), log_sx (T), log_sy (T),
//! rho_raw (T), logit]`, with position offsets scaled by `pos_scale`.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchors::AnchorLibrary;
use crate::error::{Error, Result};
use crate::loss::MixtureGrad;
use crate::types::{GaussianBounds, GaussianTrajectory, MixtureOutput, Point2, Scene};

/// Number of trajectory features fed back into each layer (midpoint and endpoint).
const FEATURES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub context_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_components: usize,
    pub horizon: usize,
    pub dt: f64,
    /// Length scale of position offsets and trajectory features.
    pub pos_scale: f64,
    /// Gain applied to the fan-in scaled init of the output heads.
    pub out_gain: f64,
    pub seed: u64,
    pub bounds: GaussianBounds,
}

impl ModelConfig {
    pub fn new(context_dim: usize, horizon: usize, dt: f64) -> Self {
        Self {
            context_dim,
            hidden_dim: 64,
            num_layers: 6,
            num_components: 16,
            horizon,
            dt,
            pos_scale: 10.0,
            out_gain: 0.1,
            seed: 0,
            bounds: GaussianBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("context_dim", self.context_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("horizon", self.horizon),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.num_components < 2 {
            return Err(Error::Config("need at least two components".into()));
        }
        if !(self.dt > 0.0 && self.pos_scale > 0.0) {
            return Err(Error::Config("dt and pos_scale must be positive".into()));
        }
        Ok(())
    }

    fn out_dim(&self) -> usize {
        5 * self.horizon + 1
    }
}

/// Offsets of every tensor inside the flat weight vector.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    h: usize,
    d: usize,
    n: usize,
    t: usize,
    o: usize,
    encoder_w: usize,
    encoder_b: usize,
    queries: usize,
    layers: usize,
    layer_stride: usize,
    total: usize,
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ctx_w: usize,
    feat_w: usize,
    hidden_b: usize,
    out_w: usize,
    out_b: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let (h, d, n, t, o) = (
            cfg.hidden_dim,
            cfg.context_dim,
            cfg.num_components,
            cfg.horizon,
            cfg.out_dim(),
        );
        let encoder_w = 0;
        let encoder_b = encoder_w + h * d;
        let queries = encoder_b + h;
        let layers = queries + n * h;
        let layer_stride = h * h + h * FEATURES + h + o * h + o;
        Self {
            h,
            d,
            n,
            t,
            o,
            encoder_w,
            encoder_b,
            queries,
            layers,
            layer_stride,
            total: layers + cfg.num_layers * layer_stride,
        }
    }

    /// `layer` is 0-based here.
    fn layer(&self, layer: usize) -> LayerOffsets {
        let base = self.layers + layer * self.layer_stride;
        let ctx_w = base;
        let feat_w = ctx_w + self.h * self.h;
        let hidden_b = feat_w + self.h * FEATURES;
        let out_w = hidden_b + self.h;
        let out_b = out_w + self.o * self.h;
        LayerOffsets {
            ctx_w,
            feat_w,
            hidden_b,
            out_w,
            out_b,
        }
    }
}

/// Trainable weights plus the (non-trainable) intention points the decoder starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub anchors: AnchorLibrary,
    pub weights: Vec<f64>,
}

impl ModelParams {
    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    /// Parameters with every weight set to zero.
    pub fn zeroed(&self) -> Self {
        Self {
            weights: vec![0.0; self.weights.len()],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let layout = Layout::new(&self.config);
        if self.weights.len() != layout.total {
            return Err(Error::Shape(format!(
                "{} weights, layout needs {}",
                self.weights.len(),
                layout.total
            )));
        }
        if self.anchors.num_anchors() != self.config.num_components {
            return Err(Error::Shape(format!(
                "{} anchors for {} components",
                self.anchors.num_anchors(),
                self.config.num_components
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("non-finite model weight".into()));
        }
        Ok(())
    }

    /// Expected length of the weight vector for `cfg`.
    pub fn weight_count(cfg: &ModelConfig) -> usize {
        Layout::new(cfg).total
    }
}

/// Row widths of every weight tensor, in storage order. Concatenating the
/// rows reproduces the flat weight vector.
pub fn tensor_rows(cfg: &ModelConfig) -> Vec<usize> {
    let lay = Layout::new(cfg);
    let mut rows = Vec::new();
    rows.extend(std::iter::repeat_n(lay.d, lay.h));
    rows.push(lay.h);
    rows.extend(std::iter::repeat_n(lay.h, lay.n));
    for _ in 0..cfg.num_layers {
        rows.extend(std::iter::repeat_n(lay.h, lay.h));
        rows.extend(std::iter::repeat_n(FEATURES, lay.h));
        rows.push(lay.h);
        rows.extend(std::iter::repeat_n(lay.h, lay.o));
        rows.push(lay.o);
    }
    debug_assert_eq!(rows.iter().sum::<usize>(), lay.total);
    rows
}

/// Deterministic initialisation from `cfg.seed`.
pub fn init_model(cfg: &ModelConfig, anchors: &AnchorLibrary) -> Result<ModelParams> {
    cfg.validate()?;
    if anchors.num_anchors() != cfg.num_components {
        return Err(Error::Shape(format!(
            "{} anchors for {} components",
            anchors.num_anchors(),
            cfg.num_components
        )));
    }
    let lay = Layout::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; lay.total];
    let fill = |w: &mut [f64], fan_in: usize, gain: f64, rng: &mut ChaCha8Rng| {
        let bound = gain / (fan_in as f64).sqrt();
        for x in w {
            *x = rng.random_range(-bound..bound);
        }
    };

    fill(&mut w[lay.encoder_w..lay.encoder_b], lay.d, 1.0, &mut rng);

    // Queries: a random linear embedding of the (scaled) anchor endpoints.
    let embed: Vec<[f64; 2]> = (0..lay.h)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let endpoints = anchors.sets()[0].endpoints();
    for (k, p) in endpoints.iter().enumerate() {
        let row = &mut w[lay.queries + k * lay.h..lay.queries + (k + 1) * lay.h];
        for (q, e) in row.iter_mut().zip(&embed) {
            *q = (e[0] * p.x + e[1] * p.y) / cfg.pos_scale;
        }
    }

    for l in 0..cfg.num_layers {
        let off = lay.layer(l);
        fill(&mut w[off.ctx_w..off.feat_w], lay.h, 1.0, &mut rng);
        fill(&mut w[off.feat_w..off.hidden_b], FEATURES, 1.0, &mut rng);
        fill(&mut w[off.out_w..off.out_b], lay.h, cfg.out_gain, &mut rng);
    }

    Ok(ModelParams {
        config: cfg.clone(),
        anchors: anchors.clone(),
        weights: w,
    })
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    context: Vec<f64>,
    hidden: Vec<f64>,
    /// `[layer][component]` hidden activations, `H` each.
    act: Vec<Vec<f64>>,
    /// `[layer][component]` trajectory features, `FEATURES` each.
    feat: Vec<Vec<f64>>,
    /// `[layer][component]` pass-through mask of the log-sigma clamp, `2T` each.
    sigma_pass: Vec<Vec<bool>>,
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Straight-line base trajectory from the origin to `end`.
fn base_trajectory(end: Point2, t: usize) -> (Vec<f64>, Vec<f64>) {
    let xs = (1..=t).map(|i| end.x * i as f64 / t as f64).collect();
    let ys = (1..=t).map(|i| end.y * i as f64 / t as f64).collect();
    (xs, ys)
}

fn features(mx: &[f64], my: &[f64], scale: f64) -> [f64; FEATURES] {
    let t = mx.len();
    let mid = (t - 1) / 2;
    [
        mx[mid] / scale,
        my[mid] / scale,
        mx[t - 1] / scale,
        my[t - 1] / scale,
    ]
}

/// Forward pass returning all layer outputs.
pub fn forward(params: &ModelParams, scene: &Scene) -> Result<Vec<MixtureOutput>> {
    forward_with_tape(params, scene).map(|(o, _)| o)
}

/// Forward pass that also records what [`backward_with_tape`] needs.
pub fn forward_with_tape(params: &ModelParams, scene: &Scene) -> Result<(Vec<MixtureOutput>, Tape)> {
    forward_impl(params, scene, true)
}

/// Forward pass for training: means and logits of every component, but the
/// spread heads (log sigma, rho) left at zero placeholders until
/// [`fill_spread_heads`] computes them for the components that need them.
pub fn forward_training(params: &ModelParams, scene: &Scene) -> Result<(Vec<MixtureOutput>, Tape)> {
    forward_impl(params, scene, false)
}

/// Log-sigma (clamped), rho and clamp pass-mask rows of one component.
fn spread_head(w: &[f64], off: &LayerOffsets, act: &[f64], t: usize, h: usize, bounds: &GaussianBounds) -> SpreadHead {
    let row = |r: usize| dot(&w[off.out_w + r * h..off.out_w + (r + 1) * h], act) + w[off.out_b + r];
    let raw: Vec<f64> = (2 * t..4 * t).map(row).collect();
    let (lo, hi) = (bounds.log_sigma_min, bounds.log_sigma_max);
    SpreadHead {
        pass: raw.iter().map(|&v| (lo..=hi).contains(&v)).collect(),
        log_sigma_x: raw[..t].iter().map(|v| v.clamp(lo, hi)).collect(),
        log_sigma_y: raw[t..].iter().map(|v| v.clamp(lo, hi)).collect(),
        rho_raw: (4 * t..5 * t).map(row).collect(),
    }
}

struct SpreadHead {
    log_sigma_x: Vec<f64>,
    log_sigma_y: Vec<f64>,
    rho_raw: Vec<f64>,
    pass: Vec<bool>,
}

/// Computes the deferred spread heads of component `k` at 0-based `layer`.
pub fn fill_spread_heads(
    params: &ModelParams,
    tape: &mut Tape,
    outputs: &mut [MixtureOutput],
    layer: usize,
    k: usize,
) -> Result<()> {
    let cfg = &params.config;
    let lay = Layout::new(cfg);
    if layer >= cfg.num_layers || layer >= outputs.len() || k >= lay.n {
        return Err(Error::Shape(format!("no component {k} at layer {layer}")));
    }
    let idx = layer * lay.n + k;
    let head = spread_head(&params.weights, &lay.layer(layer), &tape.act[idx], lay.t, lay.h, &cfg.bounds);
    let c = &mut outputs[layer].components[k];
    c.log_sigma_x = head.log_sigma_x;
    c.log_sigma_y = head.log_sigma_y;
    c.rho_raw = head.rho_raw;
    tape.sigma_pass[idx] = head.pass;
    Ok(())
}

fn forward_impl(params: &ModelParams, scene: &Scene, full: bool) -> Result<(Vec<MixtureOutput>, Tape)> {
    let cfg = &params.config;
    let lay = Layout::new(cfg);
    if scene.context.len() != lay.d {
        return Err(Error::Shape(format!(
            "context has {} entries, model expects {}",
            scene.context.len(),
            lay.d
        )));
    }
    let w = &params.weights;
    let anchors = params.anchors.for_category(scene.category)?;
    let (h, t) = (lay.h, lay.t);
    let s = cfg.pos_scale;

    let hidden: Vec<f64> = (0..h)
        .map(|i| {
            let row = &w[lay.encoder_w + i * lay.d..lay.encoder_w + (i + 1) * lay.d];
            (dot(row, &scene.context) + w[lay.encoder_b + i]).tanh()
        })
        .collect();

    let mut means: Vec<(Vec<f64>, Vec<f64>)> = anchors
        .endpoints()
        .into_iter()
        .map(|e| base_trajectory(e, t))
        .collect();

    let mut outputs = Vec::with_capacity(cfg.num_layers);
    let mut tape = Tape {
        context: scene.context.clone(),
        hidden: hidden.clone(),
        act: Vec::with_capacity(cfg.num_layers * lay.n),
        feat: Vec::with_capacity(cfg.num_layers * lay.n),
        sigma_pass: Vec::with_capacity(cfg.num_layers * lay.n),
    };
    let row = |off: &LayerOffsets, r: usize, act: &[f64]| dot(&w[off.out_w + r * h..off.out_w + (r + 1) * h], act) + w[off.out_b + r];

    for l in 0..cfg.num_layers {
        let off = lay.layer(l);
        let ctx: Vec<f64> = (0..h)
            .map(|i| dot(&w[off.ctx_w + i * h..off.ctx_w + (i + 1) * h], &hidden) + w[off.hidden_b + i])
            .collect();
        let mut components = Vec::with_capacity(lay.n);
        let mut logits = Vec::with_capacity(lay.n);
        for (k, (mx, my)) in means.iter_mut().enumerate() {
            let f = features(mx, my, s);
            let q = &w[lay.queries + k * h..lay.queries + (k + 1) * h];
            let act: Vec<f64> = (0..h)
                .map(|i| {
                    let fw = &w[off.feat_w + i * FEATURES..off.feat_w + (i + 1) * FEATURES];
                    (ctx[i] + q[i] + dot(fw, &f)).tanh()
                })
                .collect();
            for i in 0..t {
                mx[i] += s * row(&off, i, &act);
                my[i] += s * row(&off, t + i, &act);
            }
            let head = if full {
                spread_head(w, &off, &act, t, h, &cfg.bounds)
            } else {
                SpreadHead {
                    log_sigma_x: vec![0.0; t],
                    log_sigma_y: vec![0.0; t],
                    rho_raw: vec![0.0; t],
                    pass: vec![false; 2 * t],
                }
            };
            components.push(GaussianTrajectory {
                mu_x: mx.clone(),
                mu_y: my.clone(),
                log_sigma_x: head.log_sigma_x,
                log_sigma_y: head.log_sigma_y,
                rho_raw: head.rho_raw,
            });
            logits.push(row(&off, 5 * t, &act));
            tape.act.push(act);
            tape.feat.push(f.to_vec());
            tape.sigma_pass.push(head.pass);
        }
        outputs.push(MixtureOutput {
            components,
            score_logits: logits,
            layer_index: l + 1,
        });
    }
    Ok((outputs, tape))
}

/// Gradient of `sum_l <grads[l], outputs[l]>` with respect to the weights.
pub fn backward(params: &ModelParams, scene: &Scene, grads: &[MixtureGrad]) -> Result<Vec<f64>> {
    let (_, tape) = forward_with_tape(params, scene)?;
    backward_with_tape(params, &tape, grads)
}

pub fn backward_with_tape(params: &ModelParams, tape: &Tape, grads: &[MixtureGrad]) -> Result<Vec<f64>> {
    let mut dw = vec![0.0; params.num_weights()];
    backward_accumulate(params, tape, grads, &mut dw)?;
    Ok(dw)
}

/// Adds the weight gradient into `dw` instead of allocating a fresh vector.
pub fn backward_accumulate(params: &ModelParams, tape: &Tape, grads: &[MixtureGrad], dw: &mut [f64]) -> Result<()> {
    let cfg = &params.config;
    let lay = Layout::new(cfg);
    if dw.len() != lay.total {
        return Err(Error::Shape(format!("gradient buffer has {} entries, model {}", dw.len(), lay.total)));
    }
    if grads.len() != cfg.num_layers {
        return Err(Error::Shape(format!(
            "{} layer gradients for {} layers",
            grads.len(),
            cfg.num_layers
        )));
    }
    for g in grads {
        if g.components.len() != lay.n
            || g.score_logits.len() != lay.n
            || g.components.iter().any(|c| c.mu_x.len() != lay.t)
        {
            return Err(Error::Shape("output gradient does not match model shape".into()));
        }
    }
    let w = &params.weights;
    let (h, t, o) = (lay.h, lay.t, lay.o);
    let s = cfg.pos_scale;
    let mut d_hidden = vec![0.0; h];
    // Gradient w.r.t. the means each layer hands to the next, per component.
    let mut carry: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0; t], vec![0.0; t]); lay.n];
    let mut d_out = vec![0.0; o];
    let mut d_act = vec![0.0; h];

    for l in (0..cfg.num_layers).rev() {
        let off = lay.layer(l);
        let mut d_ctx = vec![0.0; h];
        for k in 0..lay.n {
            let idx = l * lay.n + k;
            let act = &tape.act[idx];
            let feat = &tape.feat[idx];
            let pass = &tape.sigma_pass[idx];
            let g = &grads[l].components[k];
            let (cx, cy) = &mut carry[k];
            for i in 0..t {
                cx[i] += g.mu_x[i];
                cy[i] += g.mu_y[i];
                d_out[i] = s * cx[i];
                d_out[t + i] = s * cy[i];
                d_out[2 * t + i] = if pass[i] { g.log_sigma_x[i] } else { 0.0 };
                d_out[3 * t + i] = if pass[t + i] { g.log_sigma_y[i] } else { 0.0 };
                d_out[4 * t + i] = g.rho_raw[i];
            }
            d_out[5 * t] = grads[l].score_logits[k];

            d_act.iter_mut().for_each(|x| *x = 0.0);
            let mut any = false;
            for (r, &gr) in d_out.iter().enumerate() {
                if gr == 0.0 {
                    continue;
                }
                any = true;
                axpy(&mut dw[off.out_w + r * h..off.out_w + (r + 1) * h], gr, act);
                dw[off.out_b + r] += gr;
                axpy(&mut d_act, gr, &w[off.out_w + r * h..off.out_w + (r + 1) * h]);
            }
            if !any {
                continue;
            }
            let mut d_feat = [0.0; FEATURES];
            for i in 0..h {
                let dp = d_act[i] * (1.0 - act[i] * act[i]);
                if dp == 0.0 {
                    continue;
                }
                d_ctx[i] += dp;
                dw[lay.queries + k * h + i] += dp;
                let fw = off.feat_w + i * FEATURES;
                for j in 0..FEATURES {
                    dw[fw + j] += dp * feat[j];
                    d_feat[j] += dp * w[fw + j];
                }
            }
            // Means of the previous layer feed this layer's features; the
            // residual path is already in `carry`.
            let mid = (t - 1) / 2;
            cx[mid] += d_feat[0] / s;
            cy[mid] += d_feat[1] / s;
            cx[t - 1] += d_feat[2] / s;
            cy[t - 1] += d_feat[3] / s;
        }
        for i in 0..h {
            let dc = d_ctx[i];
            if dc == 0.0 {
                continue;
            }
            dw[off.hidden_b + i] += dc;
            axpy(&mut dw[off.ctx_w + i * h..off.ctx_w + (i + 1) * h], dc, &tape.hidden);
            axpy(&mut d_hidden, dc, &w[off.ctx_w + i * h..off.ctx_w + (i + 1) * h]);
        }
    }

    for i in 0..h {
        let dp = d_hidden[i] * (1.0 - tape.hidden[i] * tape.hidden[i]);
        dw[lay.encoder_b + i] += dp;
        axpy(
            &mut dw[lay.encoder_w + i * lay.d..lay.encoder_w + (i + 1) * lay.d],
            dp,
            &tape.context,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::GaussianGrad;
    use crate::types::{AnchorSet, Trajectory};

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            hidden_dim: 8,
            num_layers: 3,
            num_components: 4,
            ..ModelConfig::new(3, 4, 0.5)
        }
    }

    fn anchors(n: usize) -> AnchorLibrary {
        let pts: Vec<Point2> = (0..n)
            .map(|k| {
                let a = k as f64 * 0.7 - 1.0;
                Point2::new(20.0 * a.cos(), 20.0 * a.sin())
            })
            .collect();
        AnchorLibrary::single(AnchorSet::from_endpoints(&pts).unwrap()).unwrap()
    }

    fn scene(cfg: &ModelConfig) -> Scene {
        let xs: Vec<f64> = (1..=cfg.horizon).map(|i| i as f64 * 4.0).collect();
        let ys: Vec<f64> = (1..=cfg.horizon).map(|i| i as f64 * 0.5).collect();
        Scene {
            context: (0..cfg.context_dim).map(|i| 0.3 * i as f64 - 0.2).collect(),
            gt: Trajectory::from_xy(&xs, &ys, cfg.dt).unwrap(),
            latent_mode: 0,
            category: 0,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = small_cfg();
        let a = init_model(&cfg, &anchors(4)).unwrap();
        let b = init_model(&cfg, &anchors(4)).unwrap();
        assert_eq!(a, b);
        let c = init_model(&ModelConfig { seed: 1, ..cfg }, &anchors(4)).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn deferred_heads_match_full_forward() {
        let cfg = small_cfg();
        let p = init_model(&cfg, &anchors(4)).unwrap();
        let sc = scene(&cfg);
        let (full, full_tape) = forward_with_tape(&p, &sc).unwrap();
        let (mut lazy, mut tape) = forward_training(&p, &sc).unwrap();
        for l in 0..3 {
            assert_eq!(full[l].score_logits, lazy[l].score_logits);
            for k in 0..4 {
                assert_eq!(full[l].components[k].mu_x, lazy[l].components[k].mu_x);
                fill_spread_heads(&p, &mut tape, &mut lazy, l, k).unwrap();
            }
        }
        assert_eq!(full, lazy);
        assert_eq!(full_tape.sigma_pass, tape.sigma_pass);
    }

    #[test]
    fn init_rejects_anchor_count() {
        assert!(init_model(&small_cfg(), &anchors(5)).is_err());
    }

    #[test]
    fn output_shapes() {
        let cfg = small_cfg();
        let p = init_model(&cfg, &anchors(4)).unwrap();
        let outs = forward(&p, &scene(&cfg)).unwrap();
        assert_eq!(outs.len(), 3);
        for (l, o) in outs.iter().enumerate() {
            assert_eq!(o.layer_index, l + 1);
            assert_eq!(o.num_components(), 4);
            assert!(o.validate(&cfg.bounds).is_ok());
            assert!(o.components.iter().all(|c| c.horizon() == 4));
        }
    }

    #[test]
    fn zero_weights_give_base_lines() {
        let cfg = small_cfg();
        let lib = anchors(4);
        let p = init_model(&cfg, &lib).unwrap().zeroed();
        let outs = forward(&p, &scene(&cfg)).unwrap();
        for (c, e) in outs[0].components.iter().zip(lib.sets()[0].endpoints()) {
            for i in 0..4 {
                let f = (i + 1) as f64 / 4.0;
                assert!((c.mu_x[i] - e.x * f).abs() < 1e-12);
                assert!((c.mu_y[i] - e.y * f).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_output_grads_give_zero_param_grads() {
        let cfg = small_cfg();
        let p = init_model(&cfg, &anchors(4)).unwrap();
        let g = vec![MixtureGrad::zeros(4, 4); 3];
        let dw = backward(&p, &scene(&cfg), &g).unwrap();
        assert!(dw.iter().all(|&x| x == 0.0));
    }

    fn random_grads(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Vec<MixtureGrad> {
        let mut v = || -> Vec<f64> { (0..cfg.horizon).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let mut out = Vec::new();
        for _ in 0..cfg.num_layers {
            let comps = (0..cfg.num_components)
                .map(|_| GaussianGrad {
                    mu_x: v(),
                    mu_y: v(),
                    log_sigma_x: v(),
                    log_sigma_y: v(),
                    rho_raw: v(),
                })
                .collect();
            out.push(MixtureGrad {
                components: comps,
                score_logits: (0..cfg.num_components).map(|_| 0.5).collect(),
            });
        }
        out
    }

    fn pairing(outs: &[MixtureOutput], grads: &[MixtureGrad]) -> f64 {
        let mut s = 0.0;
        for (o, g) in outs.iter().zip(grads) {
            for (c, gc) in o.components.iter().zip(&g.components) {
                s += dot(&c.mu_x, &gc.mu_x)
                    + dot(&c.mu_y, &gc.mu_y)
                    + dot(&c.log_sigma_x, &gc.log_sigma_x)
                    + dot(&c.log_sigma_y, &gc.log_sigma_y)
                    + dot(&c.rho_raw, &gc.rho_raw);
            }
            s += dot(&o.score_logits, &g.score_logits);
        }
        s
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = small_cfg();
        let p = init_model(&cfg, &anchors(4)).unwrap();
        let sc = scene(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_grads(&mut rng, &cfg);
        let dw = backward(&p, &sc, &g).unwrap();
        let eps = 1e-4;
        for _ in 0..100 {
            let i = rng.random_range(0..p.num_weights());
            let mut plus = p.clone();
            plus.weights[i] += eps;
            let mut minus = p.clone();
            minus.weights[i] -= eps;
            let fd = (pairing(&forward(&plus, &sc).unwrap(), &g)
                - pairing(&forward(&minus, &sc).unwrap(), &g))
                / (2.0 * eps);
            let rel = (fd - dw[i]).abs() / fd.abs().max(dw[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "weight {i}: fd {fd} analytic {}", dw[i]);
        }
    }

    #[test]
    fn backward_is_linear() {
        let cfg = small_cfg();
        let p = init_model(&cfg, &anchors(4)).unwrap();
        let sc = scene(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g1 = random_grads(&mut rng, &cfg);
        let g2 = random_grads(&mut rng, &cfg);
        let sum: Vec<MixtureGrad> = g1
            .iter()
            .zip(&g2)
            .map(|(a, b)| {
                let add = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u + v).collect::<Vec<_>>();
                MixtureGrad {
                    components: a
                        .components
                        .iter()
                        .zip(&b.components)
                        .map(|(c, d)| GaussianGrad {
                            mu_x: add(&c.mu_x, &d.mu_x),
                            mu_y: add(&c.mu_y, &d.mu_y),
                            log_sigma_x: add(&c.log_sigma_x, &d.log_sigma_x),
                            log_sigma_y: add(&c.log_sigma_y, &d.log_sigma_y),
                            rho_raw: add(&c.rho_raw, &d.rho_raw),
                        })
                        .collect(),
                    score_logits: add(&a.score_logits, &b.score_logits),
                }
            })
            .collect();
        let d1 = backward(&p, &sc, &g1).unwrap();
        let d2 = backward(&p, &sc, &g2).unwrap();
        let ds = backward(&p, &sc, &sum).unwrap();
        for i in 0..ds.len() {
            assert!((ds[i] - d1[i] - d2[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_rejects_bad_shapes() {
        let cfg = small_cfg();
        let p = init_model(&cfg, &anchors(4)).unwrap();
        let g = vec![MixtureGrad::zeros(4, 4); 2];
        assert!(backward(&p, &scene(&cfg), &g).is_err());
    }
}
