//! Predefined anchors, the evolving-anchor schedule and distinct-anchor selection.

mod kmeans;

pub use kmeans::{kmeans_endpoints, kmeans_from_init, kmeans_plus_plus, KMeansResult};

use crate::error::{Error, Result};
use crate::geometry::greedy_nms;
use crate::types::{AnchorSet, MixtureOutput, Point2};

/// Decoder layers (1-based) whose outputs replace the anchors of every later layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolveSchedule {
    num_layers: usize,
    evolve_after: Vec<usize>,
}

impl EvolveSchedule {
    pub fn new(num_layers: usize, evolve_after: Vec<usize>) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Schedule("decoder needs at least one layer".into()));
        }
        for w in evolve_after.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Schedule(format!(
                    "entries must be strictly increasing, got {:?}",
                    evolve_after
                )));
            }
        }
        if let Some(&bad) = evolve_after.iter().find(|&&l| l == 0 || l >= num_layers) {
            return Err(Error::Schedule(format!(
                "layer {bad} is not in 1..{num_layers}; evolving after the final layer has no effect"
            )));
        }
        Ok(Self {
            num_layers,
            evolve_after,
        })
    }

    /// The schedule with no evolution: static anchors everywhere.
    pub fn fixed(num_layers: usize) -> Self {
        Self {
            num_layers,
            evolve_after: Vec::new(),
        }
    }

    /// Ablation schedules for 0, 1, 2 and 5 updates on a six-layer decoder.
    pub fn for_evolve_times(num_layers: usize, times: usize) -> Result<Self> {
        let layers = match (num_layers, times) {
            (_, 0) => vec![],
            (6, 1) => vec![3],
            (6, 2) => vec![2, 4],
            (n, t) if t + 1 == n => (1..n).collect(),
            (n, t) => {
                // Spread updates evenly over the decoder.
                if t >= n {
                    return Err(Error::Schedule(format!(
                        "{t} updates do not fit a {n}-layer decoder"
                    )));
                }
                (1..=t).map(|i| (i * n) / (t + 1)).collect()
            }
        };
        Self::new(num_layers, layers)
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn evolve_after(&self) -> &[usize] {
        &self.evolve_after
    }

    pub fn evolve_times(&self) -> usize {
        self.evolve_after.len()
    }

    /// Layer whose output feeds the anchors of `layer_index`, if any.
    pub fn source_layer(&self, layer_index: usize) -> Option<usize> {
        self.evolve_after
            .iter()
            .copied()
            .take_while(|&l| l < layer_index)
            .last()
    }
}

/// Anchors used for label assignment at `layer_index` (1-based).
///
/// `layer_outputs[i]` is the output of layer `i + 1`.
pub fn anchors_for_layer(
    layer_index: usize,
    predefined: &AnchorSet,
    layer_outputs: &[MixtureOutput],
    schedule: &EvolveSchedule,
    dt: f64,
) -> Result<AnchorSet> {
    match schedule.source_layer(layer_index) {
        None => Ok(predefined.clone()),
        Some(k) => {
            let out = layer_outputs
                .get(k - 1)
                .ok_or(Error::MissingLayerOutput(k))?;
            Ok(AnchorSet::from_output(out, dt))
        }
    }
}

/// Mask of anchors surviving greedy NMS on their endpoints, ordered by the
/// layer's raw score logits.
pub fn select_distinct(anchors: &AnchorSet, scores: &[f64], sigma: f64) -> Result<Vec<bool>> {
    let endpoints = anchors.endpoints();
    let keep = greedy_nms(&endpoints, scores, sigma)?;
    Ok(keep.mask(endpoints.len()))
}

/// One predefined anchor set per category tag.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLibrary {
    sets: Vec<AnchorSet>,
}

impl AnchorLibrary {
    pub fn new(sets: Vec<AnchorSet>) -> Result<Self> {
        let n = sets.first().ok_or(Error::EmptyInput("anchor library"))?.len();
        for s in &sets {
            s.validate_len(n)?;
            if !s.is_predefined() {
                return Err(Error::Config("anchor library holds evolved anchors".into()));
            }
        }
        Ok(Self { sets })
    }

    pub fn single(set: AnchorSet) -> Result<Self> {
        Self::new(vec![set])
    }

    pub fn num_categories(&self) -> usize {
        self.sets.len()
    }

    pub fn num_anchors(&self) -> usize {
        self.sets[0].len()
    }

    pub fn sets(&self) -> &[AnchorSet] {
        &self.sets
    }

    pub fn for_category(&self, category: usize) -> Result<&AnchorSet> {
        self.sets.get(category).ok_or_else(|| {
            Error::Config(format!(
                "no anchors for category {category} ({} available)",
                self.sets.len()
            ))
        })
    }

    /// Fits `k` intention points per category with k-means.
    pub fn fit(
        endpoints_by_category: &[Vec<Point2>],
        k: usize,
        seed: u64,
        max_iters: usize,
    ) -> Result<(Self, Vec<KMeansResult>)> {
        let mut sets = Vec::new();
        let mut fits = Vec::new();
        for (c, pts) in endpoints_by_category.iter().enumerate() {
            let r = kmeans_endpoints(pts, k, seed.wrapping_add(c as u64), max_iters)?;
            sets.push(AnchorSet::from_endpoints(&r.centroids)?);
            fits.push(r);
        }
        Ok((Self::new(sets)?, fits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{GaussianTrajectory, Trajectory};

    fn output(layer: usize, offset: f64) -> MixtureOutput {
        let comps = (0..3)
            .map(|k| {
                let t = Trajectory::from_xy(
                    &[1.0 + offset, 2.0 + offset],
                    &[k as f64, k as f64],
                    0.5,
                )
                .unwrap();
                GaussianTrajectory::isotropic(&t)
            })
            .collect();
        MixtureOutput {
            components: comps,
            score_logits: vec![0.0; 3],
            layer_index: layer,
        }
    }

    fn predefined() -> AnchorSet {
        AnchorSet::from_endpoints(&[
            Point2::new(10.0, 0.0),
            Point2::new(0.0, 10.0),
            Point2::new(-10.0, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(EvolveSchedule::new(6, vec![2, 4]).is_ok());
        assert!(EvolveSchedule::new(6, vec![4, 2]).is_err());
        assert!(EvolveSchedule::new(6, vec![2, 2]).is_err());
        assert!(EvolveSchedule::new(6, vec![6]).is_err());
        assert!(EvolveSchedule::new(6, vec![0]).is_err());
    }

    #[test]
    fn ablation_schedules() {
        let s = |t| EvolveSchedule::for_evolve_times(6, t).unwrap().evolve_after().to_vec();
        assert_eq!(s(0), Vec::<usize>::new());
        assert_eq!(s(1), vec![3]);
        assert_eq!(s(2), vec![2, 4]);
        assert_eq!(s(5), vec![1, 2, 3, 4, 5]);
        assert!(EvolveSchedule::for_evolve_times(6, 6).is_err());
        assert_eq!(
            EvolveSchedule::for_evolve_times(3, 1).unwrap().evolve_after(),
            &[1]
        );
    }

    #[test]
    fn twice_evolving_rule() {
        let sched = EvolveSchedule::new(6, vec![2, 4]).unwrap();
        let outs: Vec<_> = (1..=5).map(|l| output(l, l as f64)).collect();
        let pre = predefined();
        for layer in 1..=6 {
            let a = anchors_for_layer(layer, &pre, &outs[..layer - 1], &sched, 0.5).unwrap();
            let expect_src = match layer {
                1 | 2 => None,
                3 | 4 => Some(2),
                _ => Some(4),
            };
            match expect_src {
                None => assert_eq!(a, pre),
                Some(k) => assert_eq!(a, AnchorSet::from_output(&outs[k - 1], 0.5)),
            }
        }
    }

    #[test]
    fn five_updates_use_previous_layer() {
        let sched = EvolveSchedule::new(6, vec![1, 2, 3, 4, 5]).unwrap();
        let outs: Vec<_> = (1..=5).map(|l| output(l, l as f64)).collect();
        let a = anchors_for_layer(6, &predefined(), &outs, &sched, 0.5).unwrap();
        assert_eq!(a, AnchorSet::from_output(&outs[4], 0.5));
    }

    #[test]
    fn static_schedule_returns_predefined() {
        let sched = EvolveSchedule::fixed(6);
        for layer in 1..=6 {
            let a = anchors_for_layer(layer, &predefined(), &[], &sched, 0.5).unwrap();
            assert_eq!(a, predefined());
        }
    }

    #[test]
    fn missing_layer_output() {
        let sched = EvolveSchedule::new(6, vec![2]).unwrap();
        let outs = vec![output(1, 0.0)];
        assert!(matches!(
            anchors_for_layer(3, &predefined(), &outs, &sched, 0.5),
            Err(Error::MissingLayerOutput(2))
        ));
    }

    #[test]
    fn distinct_selection_examples() {
        let far = predefined();
        assert_eq!(select_distinct(&far, &[0.1, 0.2, 0.3], 2.5).unwrap(), vec![true; 3]);
        let near = AnchorSet::from_endpoints(&[
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(20.0, 0.0),
        ])
        .unwrap();
        assert_eq!(
            select_distinct(&near, &[-1.0, 2.0, 0.0], 2.5).unwrap(),
            vec![false, true, true]
        );
    }
}
