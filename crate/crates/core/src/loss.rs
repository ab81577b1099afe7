//! Winner-takes-all mixture loss with exact gradients.
//!
//! Per decoder layer the positive component receives a bivariate Gaussian
//! negative log-likelihood on its trajectory, and the score logits receive
//! either a masked binary cross entropy (neutral components excluded) or a
//! softmax cross entropy over all components.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::types::{GaussianBounds, GaussianTrajectory, MatchResult, MixtureOutput, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClsKind {
    #[default]
    Bce,
    Ce,
}

impl ClsKind {
    pub fn name(self) -> &'static str {
        match self {
            ClsKind::Bce => "bce",
            ClsKind::Ce => "ce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bce" => Some(ClsKind::Bce),
            "ce" => Some(ClsKind::Ce),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub lambda_reg: f64,
    pub lambda_cls: f64,
    pub cls_kind: ClsKind,
    pub per_layer_weights: Vec<f64>,
    pub bounds: GaussianBounds,
}

impl LossConfig {
    pub fn uniform(num_layers: usize, cls_kind: ClsKind) -> Self {
        Self {
            lambda_reg: 1.0,
            lambda_cls: 1.0,
            cls_kind,
            per_layer_weights: vec![1.0; num_layers],
            bounds: GaussianBounds::default(),
        }
    }

    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if self.per_layer_weights.len() != num_layers {
            return Err(Error::Shape(format!(
                "{} layer weights for {} layers",
                self.per_layer_weights.len(),
                num_layers
            )));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_cls >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    /// Layer-weighted sum of regression terms (before `lambda_reg`).
    pub reg: f64,
    /// Layer-weighted sum of classification terms (before `lambda_cls`).
    pub cls: f64,
    pub per_layer: Vec<(f64, f64)>,
}

impl LossBreakdown {
    /// Accumulates `other` into `self`, for averaging over a batch.
    pub fn add_assign(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.reg += other.reg;
        self.cls += other.cls;
        if self.per_layer.is_empty() {
            self.per_layer = vec![(0.0, 0.0); other.per_layer.len()];
        }
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            a.0 += b.0;
            a.1 += b.1;
        }
    }

    pub fn scale(&mut self, f: f64) {
        self.total *= f;
        self.reg *= f;
        self.cls *= f;
        for p in &mut self.per_layer {
            p.0 *= f;
            p.1 *= f;
        }
    }
}

/// Gradient with respect to every field of a [`GaussianTrajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrad {
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub log_sigma_x: Vec<f64>,
    pub log_sigma_y: Vec<f64>,
    pub rho_raw: Vec<f64>,
}

impl GaussianGrad {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            mu_x: vec![0.0; horizon],
            mu_y: vec![0.0; horizon],
            log_sigma_x: vec![0.0; horizon],
            log_sigma_y: vec![0.0; horizon],
            rho_raw: vec![0.0; horizon],
        }
    }

    pub fn is_zero(&self) -> bool {
        [
            &self.mu_x,
            &self.mu_y,
            &self.log_sigma_x,
            &self.log_sigma_y,
            &self.rho_raw,
        ]
        .iter()
        .all(|v| v.iter().all(|&g| g == 0.0))
    }

    fn scaled(mut self, f: f64) -> Self {
        for v in [
            &mut self.mu_x,
            &mut self.mu_y,
            &mut self.log_sigma_x,
            &mut self.log_sigma_y,
            &mut self.rho_raw,
        ] {
            v.iter_mut().for_each(|g| *g *= f);
        }
        self
    }
}

/// Gradient with respect to one layer's [`MixtureOutput`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGrad {
    pub components: Vec<GaussianGrad>,
    pub score_logits: Vec<f64>,
}

impl MixtureGrad {
    pub fn zeros(num_components: usize, horizon: usize) -> Self {
        Self {
            components: vec![GaussianGrad::zeros(horizon); num_components],
            score_logits: vec![0.0; num_components],
        }
    }
}

/// Per-step-averaged bivariate Gaussian NLL of `gt` under `comp`.
pub fn gaussian_nll(
    comp: &GaussianTrajectory,
    gt: &Trajectory,
    bounds: &GaussianBounds,
) -> Result<(f64, GaussianGrad)> {
    let t_len = comp.horizon();
    if gt.horizon() != t_len {
        return Err(Error::Shape(format!(
            "component horizon {} vs ground truth {}",
            t_len,
            gt.horizon()
        )));
    }
    let inv_t = 1.0 / t_len as f64;
    let log_2pi = (2.0 * PI).ln();
    let mut loss = 0.0;
    let mut g = GaussianGrad::zeros(t_len);
    for (t, p) in gt.points().iter().enumerate() {
        let lx = comp.log_sigma_x[t];
        let ly = comp.log_sigma_y[t];
        let th = comp.rho_raw[t].tanh();
        let rho = bounds.rho_bound * th;
        let sx = lx.exp();
        let sy = ly.exp();
        let dx = p.x - comp.mu_x[t];
        let dy = p.y - comp.mu_y[t];
        let zx = dx / sx;
        let zy = dy / sy;
        let one = 1.0 - rho * rho;
        let q = zx * zx - 2.0 * rho * zx * zy + zy * zy;

        loss += lx + ly + 0.5 * one.ln() + log_2pi + q / (2.0 * one);

        g.mu_x[t] = -(zx - rho * zy) / (one * sx) * inv_t;
        g.mu_y[t] = -(zy - rho * zx) / (one * sy) * inv_t;
        g.log_sigma_x[t] = (1.0 - (zx * zx - rho * zx * zy) / one) * inv_t;
        g.log_sigma_y[t] = (1.0 - (zy * zy - rho * zx * zy) / one) * inv_t;
        let d_rho = -rho / one - zx * zy / one + rho * q / (one * one);
        g.rho_raw[t] = d_rho * bounds.rho_bound * (1.0 - th * th) * inv_t;
    }
    Ok((loss * inv_t, g))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross entropy averaged over masked-in logits.
///
/// Masked-out (neutral) logits get exactly zero gradient.
pub fn bce_scores(logits: &[f64], positive_index: usize, mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    if mask.len() != logits.len() {
        return Err(Error::Shape(format!(
            "mask has {} entries for {} logits",
            mask.len(),
            logits.len()
        )));
    }
    if !mask.get(positive_index).copied().unwrap_or(false) {
        return Err(Error::Validation(crate::error::ValidationError::MaskInconsistent(
            format!("positive index {positive_index} is masked out"),
        )));
    }
    let n_in = mask.iter().filter(|&&m| m).count() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, (&z, &m)) in logits.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        let y = if i == positive_index { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        grad[i] = (sigmoid(z) - y) / n_in;
    }
    Ok((loss / n_in, grad))
}

/// Softmax cross entropy over all logits.
pub fn ce_scores(logits: &[f64], positive_index: usize) -> Result<(f64, Vec<f64>)> {
    if positive_index >= logits.len() {
        return Err(Error::Shape(format!(
            "positive index {positive_index} out of {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let lse = max + sum.ln();
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[positive_index] -= 1.0;
    Ok((lse - logits[positive_index], grad))
}

/// Deeply supervised mixture loss over all decoder layers.
pub fn mixture_loss(
    outputs: &[MixtureOutput],
    matches: &[MatchResult],
    gt: &Trajectory,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<MixtureGrad>)> {
    if outputs.len() != matches.len() {
        return Err(Error::Shape(format!(
            "{} outputs but {} matches",
            outputs.len(),
            matches.len()
        )));
    }
    cfg.validate(outputs.len())?;
    let mut breakdown = LossBreakdown {
        per_layer: Vec::with_capacity(outputs.len()),
        ..Default::default()
    };
    let mut grads = Vec::with_capacity(outputs.len());
    for ((out, m), &w) in outputs.iter().zip(matches).zip(&cfg.per_layer_weights) {
        let n = out.num_components();
        if m.distinct_mask.len() != n {
            return Err(Error::Shape(format!(
                "match covers {} components, output has {n}",
                m.distinct_mask.len()
            )));
        }
        let pos = m.positive_index;
        let (reg, reg_grad) = gaussian_nll(&out.components[pos], gt, &cfg.bounds)?;
        let (cls, cls_grad) = match cfg.cls_kind {
            ClsKind::Bce => bce_scores(&out.score_logits, pos, &m.distinct_mask)?,
            ClsKind::Ce => ce_scores(&out.score_logits, pos)?,
        };
        breakdown.per_layer.push((reg, cls));
        breakdown.reg += w * reg;
        breakdown.cls += w * cls;
        breakdown.total += w * (cfg.lambda_reg * reg + cfg.lambda_cls * cls);

        let mut g = MixtureGrad::zeros(n, gt.horizon());
        g.components[pos] = reg_grad.scaled(w * cfg.lambda_reg);
        g.score_logits = cls_grad.into_iter().map(|x| x * w * cfg.lambda_cls).collect();
        grads.push(g);
    }
    Ok((breakdown, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Point2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LOG_2PI: f64 = 1.8378770664093453;

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect(), 0.1).unwrap()
    }

    #[test]
    fn nll_zero_residual() {
        let g = traj(&[(1.0, 2.0), (3.0, 4.0)]);
        let (l, _) = gaussian_nll(&GaussianTrajectory::isotropic(&g), &g, &GaussianBounds::default())
            .unwrap();
        assert!((l - LOG_2PI).abs() < 1e-12);
        assert!((LOG_2PI - 1.837877).abs() < 1e-6);
    }

    #[test]
    fn nll_unit_residual() {
        let g = traj(&[(1.0, 0.0)]);
        let comp = GaussianTrajectory::isotropic(&traj(&[(0.0, 0.0)]));
        let (l, _) = gaussian_nll(&comp, &g, &GaussianBounds::default()).unwrap();
        assert!((l - (LOG_2PI + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn nll_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = GaussianBounds::default();
        for _ in 0..20 {
            let t = 4;
            let gt = Trajectory::from_xy(
                &(0..t).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>(),
                &(0..t).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>(),
                0.1,
            )
            .unwrap();
            let comp = GaussianTrajectory {
                mu_x: (0..t).map(|_| rng.random_range(-3.0..3.0)).collect(),
                mu_y: (0..t).map(|_| rng.random_range(-3.0..3.0)).collect(),
                log_sigma_x: (0..t).map(|_| rng.random_range(-1.0..1.0)).collect(),
                log_sigma_y: (0..t).map(|_| rng.random_range(-1.0..1.0)).collect(),
                rho_raw: (0..t).map(|_| rng.random_range(-1.5..1.5)).collect(),
            };
            let (_, g) = gaussian_nll(&comp, &gt, &b).unwrap();
            let analytic = flatten(&[&g.mu_x, &g.mu_y, &g.log_sigma_x, &g.log_sigma_y, &g.rho_raw]);
            let base = flatten(&[
                &comp.mu_x,
                &comp.mu_y,
                &comp.log_sigma_x,
                &comp.log_sigma_y,
                &comp.rho_raw,
            ]);
            let eval = |v: &[f64]| gaussian_nll(&unflatten(v, t), &gt, &b).unwrap().0;
            let eps = 1e-5;
            for (i, &an) in analytic.iter().enumerate() {
                let mut plus = base.clone();
                plus[i] += eps;
                let mut minus = base.clone();
                minus[i] -= eps;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4, "coordinate {i}: fd {fd} analytic {an}");
            }
        }
    }

    fn flatten(parts: &[&Vec<f64>]) -> Vec<f64> {
        parts.iter().flat_map(|v| v.iter().copied()).collect()
    }

    fn unflatten(v: &[f64], t: usize) -> GaussianTrajectory {
        GaussianTrajectory {
            mu_x: v[0..t].to_vec(),
            mu_y: v[t..2 * t].to_vec(),
            log_sigma_x: v[2 * t..3 * t].to_vec(),
            log_sigma_y: v[3 * t..4 * t].to_vec(),
            rho_raw: v[4 * t..5 * t].to_vec(),
        }
    }

    #[test]
    fn bce_examples() {
        let (l, _) = bce_scores(&[0.0], 0, &[true]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = bce_scores(&[0.0; 4], 2, &[true; 4]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_scores(&[0.0, 0.0], 1, &[true, false]).is_err());
    }

    #[test]
    fn bce_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = 6;
            let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
            let pos = rng.random_range(0..n);
            mask[pos] = true;
            let (_, g) = bce_scores(&logits, pos, &mask).unwrap();
            let eps = 1e-5;
            for i in 0..n {
                let mut p = logits.clone();
                p[i] += eps;
                let mut m = logits.clone();
                m[i] -= eps;
                let fd = (bce_scores(&p, pos, &mask).unwrap().0 - bce_scores(&m, pos, &mask).unwrap().0)
                    / (2.0 * eps);
                if !mask[i] {
                    assert_eq!(g[i], 0.0);
                    assert!(fd.abs() < 1e-12);
                } else {
                    let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-12);
                    assert!(rel < 1e-6, "bce logit {i}: fd {fd} analytic {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn ce_examples() {
        let (l, _) = ce_scores(&[0.3, 0.3], 1).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = ce_scores(&[100.0, 0.0], 0).unwrap();
        assert!(l.abs() < 1e-40);
    }

    #[test]
    fn ce_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
            let pos = rng.random_range(0..5);
            let (_, g) = ce_scores(&logits, pos).unwrap();
            let eps = 1e-5;
            for i in 0..5 {
                let mut p = logits.clone();
                p[i] += eps;
                let mut m = logits.clone();
                m[i] -= eps;
                let fd = (ce_scores(&p, pos).unwrap().0 - ce_scores(&m, pos).unwrap().0) / (2.0 * eps);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-12);
                assert!(rel < 1e-6, "ce logit {i}: fd {fd} analytic {}", g[i]);
            }
        }
    }

    fn unit_output(gt: &Trajectory, n: usize, layer: usize) -> MixtureOutput {
        MixtureOutput {
            components: (0..n)
                .map(|k| GaussianTrajectory::isotropic(&gt.translated(k as f64, 0.0)))
                .collect(),
            score_logits: vec![0.0; n],
            layer_index: layer,
        }
    }

    fn all_true(n: usize, pos: usize) -> MatchResult {
        MatchResult {
            positive_index: pos,
            distinct_mask: vec![true; n],
            distances: (0..n).map(|k| k as f64).collect(),
        }
    }

    #[test]
    fn composition_reg_only() {
        let gt = traj(&[(1.0, 1.0), (2.0, 2.0)]);
        let outs: Vec<_> = (1..=3).map(|l| unit_output(&gt, 4, l)).collect();
        let ms = vec![all_true(4, 0); 3];
        let mut cfg = LossConfig::uniform(3, ClsKind::Bce);
        cfg.lambda_cls = 0.0;
        cfg.per_layer_weights = vec![1.0, 0.5, 2.0];
        let (b, _) = mixture_loss(&outs, &ms, &gt, &cfg).unwrap();
        assert!((b.total - 3.5 * LOG_2PI).abs() < 1e-12);
    }

    #[test]
    fn composition_cls_only() {
        let gt = traj(&[(1.0, 1.0), (2.0, 2.0)]);
        let outs: Vec<_> = (1..=2).map(|l| unit_output(&gt, 4, l)).collect();
        let ms = vec![all_true(4, 2); 2];
        let mut cfg = LossConfig::uniform(2, ClsKind::Bce);
        cfg.lambda_reg = 0.0;
        let (b, _) = mixture_loss(&outs, &ms, &gt, &cfg).unwrap();
        for &(_, c) in &b.per_layer {
            assert!((c - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn winner_takes_all_and_neutral_gradients() {
        let gt = traj(&[(1.0, 1.0), (2.0, 2.0)]);
        let outs = vec![unit_output(&gt, 4, 1)];
        let m = MatchResult {
            positive_index: 2,
            distinct_mask: vec![true, false, true, false],
            distances: vec![2.0, f64::INFINITY, 0.0, f64::INFINITY],
        };
        let (_, g) = mixture_loss(&outs, &[m], &gt, &LossConfig::uniform(1, ClsKind::Bce)).unwrap();
        assert_eq!(g[0].score_logits[1], 0.0);
        assert_eq!(g[0].score_logits[3], 0.0);
        assert!(g[0].score_logits[0] != 0.0);
        for k in [0, 1, 3] {
            assert!(g[0].components[k].is_zero());
        }
    }

    #[test]
    fn layer_weight_length_checked() {
        let gt = traj(&[(1.0, 1.0)]);
        let outs = vec![unit_output(&gt, 2, 1)];
        let cfg = LossConfig::uniform(2, ClsKind::Ce);
        assert!(mixture_loss(&outs, &[all_true(2, 0)], &gt, &cfg).is_err());
    }
}
