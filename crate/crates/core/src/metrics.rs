//! Top-K selection, score transforms, displacement metrics and a single-bucket
//! average precision.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{descending_order, endpoint_distance, greedy_nms, mean_pointwise_distance, nms_threshold, LengthMode};
use crate::loss::{sigmoid, ClsKind};
use crate::model::{forward, ModelParams};
use crate::types::{MixtureOutput, Scene, Trajectory};

pub const DEFAULT_K: usize = 6;
pub const DEFAULT_MISS_THRESHOLD: f64 = 2.0;

/// Probabilities from raw logits: independent sigmoids for BCE-trained
/// models, a softmax for CE-trained ones.
pub fn component_scores(logits: &[f64], cls: ClsKind) -> Vec<f64> {
    match cls {
        ClsKind::Bce => logits.iter().map(|&z| sigmoid(z)).collect(),
        ClsKind::Ce => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        }
    }
}

/// Exactly `K` predictions for one scene, scores descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedPredictions {
    /// Component index of each prediction.
    pub indices: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
    pub scores: Vec<f64>,
    /// How many leading NMS survivors were taken before back-filling.
    pub num_kept: usize,
    pub sigma: f64,
}

impl SelectedPredictions {
    pub fn k(&self) -> usize {
        self.indices.len()
    }
}

/// Greedy endpoint NMS, first `k` survivors, then back-fill from suppressed
/// components by score. The result is ordered by score, ties by component index.
pub fn select_top_k(
    output: &MixtureOutput,
    scores: &[f64],
    k: usize,
    dt: f64,
    length_mode: LengthMode,
) -> Result<SelectedPredictions> {
    let n = output.num_components();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k must lie in 1..={n}, got {k}")));
    }
    if scores.len() != n {
        return Err(Error::Shape(format!("{} scores for {n} components", scores.len())));
    }
    let order = descending_order(scores);
    let top = output.components[order[0]].mean_trajectory(dt);
    let sigma = nms_threshold(length_mode.measure(&top));
    let endpoints: Vec<_> = output.components.iter().map(|c| c.endpoint()).collect();
    let nms = greedy_nms(&endpoints, scores, sigma)?;

    let mut chosen: Vec<usize> = nms.kept.iter().copied().take(k).collect();
    let num_kept = chosen.len();
    if chosen.len() < k {
        let keep = nms.mask(n);
        chosen.extend(order.iter().copied().filter(|&i| !keep[i]).take(k - chosen.len()));
    }
    chosen.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    Ok(SelectedPredictions {
        trajectories: chosen.iter().map(|&i| output.components[i].mean_trajectory(dt)).collect(),
        scores: chosen.iter().map(|&i| scores[i]).collect(),
        indices: chosen,
        num_kept,
        sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    #[default]
    Original,
    /// Divided by the per-scene sum.
    Scaled,
    /// Plus `K - rank`, rank 1 being the highest.
    Rank,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 3] = [ScoreMode::Original, ScoreMode::Scaled, ScoreMode::Rank];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Original => "original",
            ScoreMode::Scaled => "scaled",
            ScoreMode::Rank => "rank",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Transforms one scene's descending scores.
pub fn score_transform(scores: &[f64], mode: ScoreMode) -> Result<Vec<f64>> {
    let k = scores.len();
    match mode {
        ScoreMode::Original => Ok(scores.to_vec()),
        ScoreMode::Scaled => {
            let sum: f64 = scores.iter().sum();
            if sum.is_nan() || sum <= 0.0 {
                return Err(Error::ZeroScoreSum);
            }
            Ok(scores.iter().map(|s| s / sum).collect())
        }
        ScoreMode::Rank => Ok(scores
            .iter()
            .enumerate()
            .map(|(i, s)| s + (k - (i + 1)) as f64)
            .collect()),
    }
}

pub fn min_ade(selected: &SelectedPredictions, gt: &Trajectory) -> Result<f64> {
    let mut best = f64::INFINITY;
    for t in &selected.trajectories {
        best = best.min(mean_pointwise_distance(t, gt)?);
    }
    Ok(best)
}

pub fn min_fde(selected: &SelectedPredictions, gt: &Trajectory) -> f64 {
    selected
        .trajectories
        .iter()
        .map(|t| endpoint_distance(t.endpoint(), gt.endpoint()))
        .fold(f64::INFINITY, f64::min)
}

/// Fraction of scenes whose minFDE exceeds `threshold`.
pub fn miss_rate(min_fdes: &[f64], threshold: f64) -> f64 {
    if min_fdes.is_empty() {
        return 0.0;
    }
    min_fdes.iter().filter(|&&d| d > threshold).count() as f64 / min_fdes.len() as f64
}

/// One scene's contribution to the AP sweep: transformed scores in rank order
/// and the endpoint error of each prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ApScene {
    pub scores: Vec<f64>,
    pub endpoint_errors: Vec<f64>,
}

impl ApScene {
    pub fn new(selected: &SelectedPredictions, transformed: &[f64], gt: &Trajectory) -> Result<Self> {
        if transformed.len() != selected.k() {
            return Err(Error::Shape(format!(
                "{} transformed scores for {} predictions",
                transformed.len(),
                selected.k()
            )));
        }
        Ok(Self {
            scores: transformed.to_vec(),
            endpoint_errors: selected
                .trajectories
                .iter()
                .map(|t| endpoint_distance(t.endpoint(), gt.endpoint()))
                .collect(),
        })
    }

    /// Rank of the single true positive, if any prediction is within `threshold`.
    pub fn true_positive(&self, threshold: f64) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (r, (&s, &e)) in self.scores.iter().zip(&self.endpoint_errors).enumerate() {
            if e <= threshold && best.is_none_or(|b| s > self.scores[b]) {
                best = Some(r);
            }
        }
        best
    }
}

/// Interpolated AP over predictions pooled from all scenes; at most one true
/// positive per scene and recall measured against the number of scenes.
pub fn average_precision(scenes: &[ApScene], threshold: f64) -> Result<f64> {
    if scenes.is_empty() {
        return Err(Error::EmptyInput("average precision scenes"));
    }
    let mut pooled: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (si, s) in scenes.iter().enumerate() {
        if s.scores.len() != s.endpoint_errors.len() {
            return Err(Error::Shape(format!("scene {si}: scores and errors differ in length")));
        }
        let tp = s.true_positive(threshold);
        for (r, &score) in s.scores.iter().enumerate() {
            pooled.push((score, si, r, tp == Some(r)));
        }
    }
    pooled.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let total = scenes.len() as f64;
    let mut precision = Vec::with_capacity(pooled.len());
    let mut recall = Vec::with_capacity(pooled.len());
    let mut tp = 0usize;
    for (i, p) in pooled.iter().enumerate() {
        tp += p.3 as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / total);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (&p, &r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneMetrics {
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsBundle {
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: f64,
    pub map_original: f64,
    pub map_scaled: f64,
    pub map_rank: f64,
    pub per_scene: Vec<SceneMetrics>,
}

impl MetricsBundle {
    pub fn map(&self, mode: ScoreMode) -> f64 {
        match mode {
            ScoreMode::Original => self.map_original,
            ScoreMode::Scaled => self.map_scaled,
            ScoreMode::Rank => self.map_rank,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub k: usize,
    pub miss_threshold: f64,
    pub length_mode: LengthMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            miss_threshold: DEFAULT_MISS_THRESHOLD,
            length_mode: LengthMode::ArcLength,
        }
    }
}

/// Metrics over one selection per scene.
pub fn metrics_bundle(selections: &[(SelectedPredictions, &Trajectory)], miss_threshold: f64) -> Result<MetricsBundle> {
    if selections.is_empty() {
        return Err(Error::EmptyInput("evaluation scenes"));
    }
    let mut per_scene = Vec::with_capacity(selections.len());
    let mut ap_inputs: [Vec<ApScene>; 3] = Default::default();
    for (sel, gt) in selections {
        let fde = min_fde(sel, gt);
        per_scene.push(SceneMetrics {
            min_ade: min_ade(sel, gt)?,
            min_fde: fde,
            miss: fde > miss_threshold,
        });
        for (slot, mode) in ap_inputs.iter_mut().zip(ScoreMode::ALL) {
            slot.push(ApScene::new(sel, &score_transform(&sel.scores, mode)?, gt)?);
        }
    }
    let n = per_scene.len() as f64;
    let fdes: Vec<f64> = per_scene.iter().map(|s| s.min_fde).collect();
    Ok(MetricsBundle {
        min_ade: per_scene.iter().map(|s| s.min_ade).sum::<f64>() / n,
        min_fde: fdes.iter().sum::<f64>() / n,
        miss_rate: miss_rate(&fdes, miss_threshold),
        map_original: average_precision(&ap_inputs[0], miss_threshold)?,
        map_scaled: average_precision(&ap_inputs[1], miss_threshold)?,
        map_rank: average_precision(&ap_inputs[2], miss_threshold)?,
        per_scene,
    })
}

/// Metrics for every decoder layer; the last entry is the model's final output.
pub fn evaluate(
    params: &ModelParams,
    scenes: &[Scene],
    cls: ClsKind,
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<Vec<MetricsBundle>> {
    if scenes.is_empty() {
        return Err(Error::EmptyInput("evaluation scenes"));
    }
    let dt = params.config.dt;
    let per_scene: Vec<Result<Vec<SelectedPredictions>>> = exec.map(scenes, |scene| {
        if scene.gt.horizon() != params.config.horizon {
            return Err(Error::Shape(format!(
                "scene horizon {} differs from model horizon {}",
                scene.gt.horizon(),
                params.config.horizon
            )));
        }
        forward(params, scene)?
            .iter()
            .map(|out| {
                let scores = component_scores(&out.score_logits, cls);
                select_top_k(out, &scores, cfg.k, dt, cfg.length_mode)
            })
            .collect()
    });
    let mut by_scene = Vec::with_capacity(scenes.len());
    for r in per_scene {
        by_scene.push(r?);
    }
    (0..params.config.num_layers)
        .map(|l| {
            let sel: Vec<(SelectedPredictions, &Trajectory)> = by_scene
                .iter()
                .zip(scenes)
                .map(|(layers, s)| (layers[l].clone(), &s.gt))
                .collect();
            metrics_bundle(&sel, cfg.miss_threshold)
        })
        .collect()
}
