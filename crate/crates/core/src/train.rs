//! Per-layer label assignment under each paradigm and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::anchors::{anchors_for_layer, select_distinct, EvolveSchedule};
use crate::assignment::{match_anchor_based, match_eda, match_prediction_based};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{nms_threshold, LengthMode};
use crate::loss::{mixture_loss, ClsKind, LossBreakdown, LossConfig};
use crate::model::{adam_step, backward_accumulate, fill_spread_heads, forward_training, AdamState, ModelParams};
use crate::types::{AnchorSet, MatchResult, MixtureOutput, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Paradigm {
    /// Match against the layer's own predictions.
    Prediction,
    /// Match against static intention points.
    Anchor,
    /// Evolving anchors, optionally restricted to distinct ones.
    Eda,
}

impl Paradigm {
    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Prediction => "pred",
            Paradigm::Anchor => "anchor",
            Paradigm::Eda => "eda",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pred" | "prediction" => Some(Paradigm::Prediction),
            "anchor" => Some(Paradigm::Anchor),
            "eda" => Some(Paradigm::Eda),
            _ => None,
        }
    }
}

/// Everything that decides which component is positive at each layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignConfig {
    pub paradigm: Paradigm,
    pub schedule: EvolveSchedule,
    pub distinct: bool,
    pub length_mode: LengthMode,
}

impl AssignConfig {
    pub fn eda(schedule: EvolveSchedule, distinct: bool) -> Self {
        Self {
            paradigm: Paradigm::Eda,
            schedule,
            distinct,
            length_mode: LengthMode::ArcLength,
        }
    }

    /// Rejects flag combinations that would otherwise be silently ignored.
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if self.schedule.num_layers() != num_layers {
            return Err(Error::Schedule(format!(
                "schedule built for {} layers, model has {num_layers}",
                self.schedule.num_layers()
            )));
        }
        match self.paradigm {
            Paradigm::Prediction if self.distinct => Err(Error::Config(
                "distinct selection is defined on anchors; not available with prediction-based matching"
                    .into(),
            )),
            Paradigm::Prediction | Paradigm::Anchor if self.schedule.evolve_times() > 0 => {
                Err(Error::Config(format!(
                    "evolving anchors require the eda paradigm, got `{}`",
                    self.paradigm.name()
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Distinct-anchor mask for one layer: NMS over anchor endpoints ordered by the
/// layer's logits, radius from the length of its top-scored mean trajectory.
pub fn distinct_mask(
    anchors: &AnchorSet,
    output: &MixtureOutput,
    dt: f64,
    length_mode: LengthMode,
) -> Result<Vec<bool>> {
    let top = output.components[output.top_index()].mean_trajectory(dt);
    let sigma = nms_threshold(length_mode.measure(&top));
    select_distinct(anchors, &output.score_logits, sigma)
}

/// Label assignment for every decoder layer of one scene.
pub fn assign_layers(
    outputs: &[MixtureOutput],
    predefined: &AnchorSet,
    scene: &Scene,
    cfg: &AssignConfig,
) -> Result<Vec<MatchResult>> {
    let gt = &scene.gt;
    let dt = gt.dt();
    let mut matches = Vec::with_capacity(outputs.len());
    for (l, out) in outputs.iter().enumerate() {
        let m = match cfg.paradigm {
            Paradigm::Prediction => match_prediction_based(out, gt)?,
            Paradigm::Anchor if !cfg.distinct => match_anchor_based(predefined, gt)?,
            Paradigm::Anchor | Paradigm::Eda => {
                let anchors = anchors_for_layer(l + 1, predefined, &outputs[..l], &cfg.schedule, dt)?;
                let mask = if cfg.distinct {
                    distinct_mask(&anchors, out, dt, cfg.length_mode)?
                } else {
                    vec![true; anchors.len()]
                };
                match_eda(&anchors, &mask, gt)?
            }
        };
        matches.push(m);
    }
    Ok(matches)
}

/// Scenes per work unit of a batch. Fixed so that the summation order, and
/// therefore every bit of the result, does not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

/// Loss of a single scene; its weight gradient is added into `dw`.
pub fn scene_loss_grad_into(
    params: &ModelParams,
    scene: &Scene,
    assign: &AssignConfig,
    loss: &LossConfig,
    dw: &mut [f64],
) -> Result<LossBreakdown> {
    let (mut outputs, mut tape) = forward_training(params, scene)?;
    let predefined = params.anchors.for_category(scene.category)?;
    let matches = assign_layers(&outputs, predefined, scene, assign)?;
    for (l, m) in matches.iter().enumerate() {
        fill_spread_heads(params, &mut tape, &mut outputs, l, m.positive_index)?;
    }
    let (breakdown, out_grads) = mixture_loss(&outputs, &matches, &scene.gt, loss)?;
    backward_accumulate(params, &tape, &out_grads, dw)?;
    Ok(breakdown)
}

/// Loss and weight gradient for a single scene.
pub fn scene_loss_grad(
    params: &ModelParams,
    scene: &Scene,
    assign: &AssignConfig,
    loss: &LossConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut dw = vec![0.0; params.num_weights()];
    let b = scene_loss_grad_into(params, scene, assign, loss, &mut dw)?;
    Ok((b, dw))
}

/// Mean loss and gradient over a batch; chunks of [`GRAD_CHUNK`] scenes are
/// reduced in input order.
pub fn batch_loss_grad(
    params: &ModelParams,
    scenes: &[&Scene],
    assign: &AssignConfig,
    loss: &LossConfig,
    exec: Exec,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if scenes.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let chunks: Vec<&[&Scene]> = scenes.chunks(GRAD_CHUNK).collect();
    let per_chunk = exec.map(&chunks, |chunk| -> Result<(LossBreakdown, Vec<f64>)> {
        let mut dw = vec![0.0; params.num_weights()];
        let mut b = LossBreakdown::default();
        for s in chunk.iter() {
            b.add_assign(&scene_loss_grad_into(params, s, assign, loss, &mut dw)?);
        }
        Ok((b, dw))
    });
    let mut total = LossBreakdown::default();
    let mut grad = vec![0.0; params.num_weights()];
    for r in per_chunk {
        let (b, g) = r?;
        total.add_assign(&b);
        for (acc, x) in grad.iter_mut().zip(&g) {
            *acc += x;
        }
    }
    let inv = 1.0 / scenes.len() as f64;
    total.scale(inv);
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((total, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub assign: AssignConfig,
    pub cls_kind: ClsKind,
    pub lambda_reg: f64,
    pub lambda_cls: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(assign: AssignConfig, cls_kind: ClsKind) -> Self {
        Self {
            assign,
            cls_kind,
            lambda_reg: 1.0,
            lambda_cls: 1.0,
            epochs: 30,
            lr: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }

    pub fn loss_config(&self, num_layers: usize) -> LossConfig {
        LossConfig {
            lambda_reg: self.lambda_reg,
            lambda_cls: self.lambda_cls,
            ..LossConfig::uniform(num_layers, self.cls_kind)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

/// Trains `params` in place and returns the per-epoch mean losses.
///
/// `on_epoch` sees each epoch's log as soon as it completes.
pub fn train(
    params: &mut ModelParams,
    scenes: &[Scene],
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    let num_layers = params.config.num_layers;
    cfg.assign.validate(num_layers)?;
    if scenes.is_empty() {
        return Err(Error::EmptyInput("training scenes"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let loss_cfg = cfg.loss_config(num_layers);
    let mut state = AdamState::new(params.num_weights());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = LossBreakdown::default();
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Scene> = chunk.iter().map(|&i| &scenes[i]).collect();
            let (mut b, g) = batch_loss_grad(params, &batch, &cfg.assign, &loss_cfg, exec)?;
            adam_step(&mut params.weights, &g, &mut state, cfg.lr)?;
            b.scale(batch.len() as f64);
            epoch_loss.add_assign(&b);
            seen += batch.len();
        }
        epoch_loss.scale(1.0 / seen as f64);
        let log = EpochLog {
            epoch,
            loss: epoch_loss,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::AnchorLibrary;
    use crate::data::{generate_dataset, GenConfig};
    use crate::model::{init_model, ModelConfig};
    use crate::types::Point2;

    fn setup() -> (ModelParams, Vec<Scene>) {
        let ds = generate_dataset(
            &GenConfig {
                num_scenes: 40,
                horizon: 4,
                ..GenConfig::default()
            },
            Exec::Sequential,
        )
        .unwrap();
        let pts: Vec<Point2> = (0..4).map(|k| Point2::new(3.0 + k as f64, k as f64 - 1.5)).collect();
        let lib = AnchorLibrary::single(AnchorSet::from_endpoints(&pts).unwrap()).unwrap();
        let cfg = ModelConfig {
            hidden_dim: 8,
            num_layers: 3,
            num_components: 4,
            ..ModelConfig::new(ds.context_dim, 4, ds.dt)
        };
        (init_model(&cfg, &lib).unwrap(), ds.scenes)
    }

    #[test]
    fn rejects_distinct_with_prediction() {
        let cfg = AssignConfig {
            paradigm: Paradigm::Prediction,
            schedule: EvolveSchedule::fixed(3),
            distinct: true,
            length_mode: LengthMode::ArcLength,
        };
        assert!(cfg.validate(3).is_err());
        let evolving_anchor = AssignConfig {
            paradigm: Paradigm::Anchor,
            schedule: EvolveSchedule::new(3, vec![1]).unwrap(),
            distinct: false,
            length_mode: LengthMode::ArcLength,
        };
        assert!(evolving_anchor.validate(3).is_err());
        assert!(AssignConfig::eda(EvolveSchedule::fixed(6), true).validate(3).is_err());
    }

    #[test]
    fn anchor_and_static_eda_train_identically() {
        let (p0, scenes) = setup();
        let mut a = p0.clone();
        let mut b = p0.clone();
        let mut cfg = TrainConfig::new(
            AssignConfig {
                paradigm: Paradigm::Anchor,
                schedule: EvolveSchedule::fixed(3),
                distinct: false,
                length_mode: LengthMode::ArcLength,
            },
            ClsKind::Bce,
        );
        cfg.epochs = 2;
        cfg.batch_size = 8;
        let la = train(&mut a, &scenes, &cfg, Exec::Sequential, |_| {}).unwrap();
        cfg.assign = AssignConfig::eda(EvolveSchedule::fixed(3), false);
        let lb = train(&mut b, &scenes, &cfg, Exec::Sequential, |_| {}).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_epochs_keeps_init() {
        let (p0, scenes) = setup();
        let mut p = p0.clone();
        let mut cfg = TrainConfig::new(AssignConfig::eda(EvolveSchedule::fixed(3), true), ClsKind::Bce);
        cfg.epochs = 0;
        train(&mut p, &scenes, &cfg, Exec::Sequential, |_| {}).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn parallel_batch_matches_sequential() {
        let (p, scenes) = setup();
        let refs: Vec<&Scene> = scenes.iter().collect();
        let assign = AssignConfig::eda(EvolveSchedule::new(3, vec![1]).unwrap(), true);
        let loss = LossConfig::uniform(3, ClsKind::Bce);
        let a = batch_loss_grad(&p, &refs, &assign, &loss, Exec::Sequential).unwrap();
        let b = batch_loss_grad(&p, &refs, &assign, &loss, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_reduces_loss() {
        let (mut p, scenes) = setup();
        let mut cfg = TrainConfig::new(AssignConfig::eda(EvolveSchedule::new(3, vec![1]).unwrap(), true), ClsKind::Bce);
        cfg.epochs = 15;
        cfg.batch_size = 8;
        cfg.lr = 3e-3;
        let logs = train(&mut p, &scenes, &cfg, Exec::Sequential, |_| {}).unwrap();
        assert!(logs.last().unwrap().loss.total < logs[0].loss.total);
    }
}
