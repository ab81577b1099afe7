//! Positive-component selection: prediction-based, anchor-based and
//! evolving + distinct anchors.
//!
//! All three reduce to an argmin over a distance vector. Ties go to the lower
//! index and masked-out entries carry `f64::INFINITY`.

use crate::error::{Error, Result};
use crate::geometry::{endpoint_distance, mean_pointwise_distance};
use crate::types::{Anchor, AnchorSet, AnchorSource, MatchResult, MixtureOutput, Trajectory};

/// Distance from an anchor to the ground truth.
///
/// Predefined anchors are intention points and compare endpoints; evolved
/// anchors compare the full trajectory.
pub fn anchor_distance(anchor: &Anchor, gt: &Trajectory) -> Result<f64> {
    match anchor.source() {
        AnchorSource::Predefined => Ok(endpoint_distance(anchor.endpoint(), gt.endpoint())),
        AnchorSource::Evolved { .. } => {
            let t = anchor.trajectory().ok_or_else(|| {
                Error::Config("evolved anchor is missing its trajectory".into())
            })?;
            mean_pointwise_distance(t, gt)
        }
    }
}

fn argmin_masked(distances: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&d, &m)) in distances.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|b| d < distances[b]) {
            best = Some(i);
        }
    }
    best
}

/// Matches the ground truth against the layer's own mean trajectories.
pub fn match_prediction_based(output: &MixtureOutput, gt: &Trajectory) -> Result<MatchResult> {
    let distances = output
        .components
        .iter()
        .map(|c| mean_pointwise_distance(&c.mean_trajectory(gt.dt()), gt))
        .collect::<Result<Vec<_>>>()?;
    let mask = vec![true; distances.len()];
    let positive_index = argmin_masked(&distances, &mask).ok_or(Error::EmptyMask)?;
    Ok(MatchResult {
        positive_index,
        distinct_mask: mask,
        distances,
    })
}

/// Matches the ground truth endpoint against static intention points.
pub fn match_anchor_based(anchors: &AnchorSet, gt: &Trajectory) -> Result<MatchResult> {
    let distances = anchors
        .anchors()
        .iter()
        .enumerate()
        .map(|(i, a)| match a.source() {
            AnchorSource::Predefined => Ok(endpoint_distance(a.endpoint(), gt.endpoint())),
            AnchorSource::Evolved { .. } => Err(Error::EvolvedAnchor(i)),
        })
        .collect::<Result<Vec<_>>>()?;
    let mask = vec![true; distances.len()];
    let positive_index = argmin_masked(&distances, &mask).ok_or(Error::EmptyMask)?;
    Ok(MatchResult {
        positive_index,
        distinct_mask: mask,
        distances,
    })
}

/// Matches the ground truth against the distinct subset of the current anchors.
pub fn match_eda(anchors: &AnchorSet, distinct_mask: &[bool], gt: &Trajectory) -> Result<MatchResult> {
    if distinct_mask.len() != anchors.len() {
        return Err(Error::Shape(format!(
            "mask has {} entries for {} anchors",
            distinct_mask.len(),
            anchors.len()
        )));
    }
    let distances = anchors
        .anchors()
        .iter()
        .zip(distinct_mask)
        .map(|(a, &m)| if m { anchor_distance(a, gt) } else { Ok(f64::INFINITY) })
        .collect::<Result<Vec<_>>>()?;
    let positive_index = argmin_masked(&distances, distinct_mask).ok_or(Error::EmptyMask)?;
    Ok(MatchResult {
        positive_index,
        distinct_mask: distinct_mask.to_vec(),
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{GaussianTrajectory, Point2};

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect(), 0.5).unwrap()
    }

    fn gt() -> Trajectory {
        traj(&[(1.0, 0.0), (2.0, 0.5), (3.0, 1.0)])
    }

    #[test]
    fn anchor_distance_examples() {
        let g = gt();
        let a = Anchor::predefined(g.endpoint()).unwrap();
        assert_eq!(anchor_distance(&a, &g).unwrap(), 0.0);
        assert_eq!(anchor_distance(&Anchor::evolved(g.clone(), 2), &g).unwrap(), 0.0);
        let shifted = Anchor::evolved(g.translated(3.0, 4.0), 2);
        assert!((anchor_distance(&shifted, &g).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn prediction_based_picks_exact_component() {
        let g = gt();
        let comps = vec![
            GaussianTrajectory::isotropic(&g.translated(1.0, 0.0)),
            GaussianTrajectory::isotropic(&g),
            GaussianTrajectory::isotropic(&g.translated(-1.0, 0.0)),
        ];
        let out = MixtureOutput {
            components: comps,
            score_logits: vec![0.0; 3],
            layer_index: 1,
        };
        let m = match_prediction_based(&out, &g).unwrap();
        assert_eq!(m.positive_index, 1);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn prediction_based_tie_goes_low() {
        let g = gt();
        let out = MixtureOutput {
            components: vec![
                GaussianTrajectory::isotropic(&g.translated(0.0, 1.0)),
                GaussianTrajectory::isotropic(&g.translated(0.0, -1.0)),
            ],
            score_logits: vec![0.0; 2],
            layer_index: 1,
        };
        assert_eq!(match_prediction_based(&out, &g).unwrap().positive_index, 0);
    }

    #[test]
    fn anchor_based_examples() {
        let g = gt();
        let mut pts: Vec<Point2> = (0..16).map(|i| Point2::new(i as f64 * 10.0, 50.0)).collect();
        pts[7] = g.endpoint();
        let set = AnchorSet::from_endpoints(&pts).unwrap();
        assert_eq!(match_anchor_based(&set, &g).unwrap().positive_index, 7);

        let e = g.endpoint();
        let mut pts: Vec<Point2> = (0..16).map(|i| Point2::new(i as f64 * 10.0, 50.0)).collect();
        pts[2] = Point2::new(e.x + 1.0, e.y);
        pts[9] = Point2::new(e.x, e.y - 1.0);
        let set = AnchorSet::from_endpoints(&pts).unwrap();
        assert_eq!(match_anchor_based(&set, &g).unwrap().positive_index, 2);
    }

    #[test]
    fn anchor_based_rejects_evolved() {
        let set = AnchorSet::new(vec![
            Anchor::predefined(Point2::new(0.0, 0.0)).unwrap(),
            Anchor::evolved(gt(), 2),
        ])
        .unwrap();
        assert!(matches!(match_anchor_based(&set, &gt()), Err(Error::EvolvedAnchor(1))));
    }

    #[test]
    fn eda_mask_behaviour() {
        let g = gt();
        let set = AnchorSet::from_endpoints(&[
            g.endpoint(),
            Point2::new(10.0, 0.0),
            Point2::new(-4.0, 2.0),
        ])
        .unwrap();
        let m = match_eda(&set, &[false, false, true], &g).unwrap();
        assert_eq!(m.positive_index, 2);
        assert_eq!(m.distances[0], f64::INFINITY);
        assert!(m.validate().is_ok());

        let all = match_eda(&set, &[true; 3], &g).unwrap();
        assert_eq!(all, match_anchor_based(&set, &g).unwrap());

        assert!(matches!(match_eda(&set, &[false; 3], &g), Err(Error::EmptyMask)));
    }
}
