//! Domain types shared across the crate.
//!
//! Everything here is immutable after construction. Constructors validate
//! the invariants and `validate` re-checks them on values that were
//! assembled field by field.

use crate::error::ValidationError;

/// A 2D point in length units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Fixed-horizon sequence of waypoints sampled every `dt` seconds.
///
/// The agent sits at the origin at time zero; `points[t]` is its position at
/// time `(t + 1) * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<Point2>,
    dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Point2>, dt: f64) -> Result<Self, ValidationError> {
        let t = Self { points, dt };
        t.validate()?;
        Ok(t)
    }

    pub fn from_xy(xs: &[f64], ys: &[f64], dt: f64) -> Result<Self, ValidationError> {
        if xs.len() != ys.len() {
            return Err(ValidationError::DimensionMismatch {
                what: "trajectory y coordinates",
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let points = xs.iter().zip(ys).map(|(&x, &y)| Point2::new(x, y)).collect();
        Self::new(points, dt)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.points.is_empty() {
            return Err(ValidationError::Empty { what: "trajectory" });
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ValidationError::OutOfRange {
                what: "trajectory dt",
                detail: format!("{} is not a positive finite step", self.dt),
            });
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            return Err(ValidationError::NonFinite { what: "trajectory" });
        }
        Ok(())
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> usize {
        self.points.len()
    }

    pub fn endpoint(&self) -> Point2 {
        *self.points.last().expect("validated trajectory is non-empty")
    }

    /// Sum of segment lengths between consecutive waypoints.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Straight-line distance from the first to the last waypoint.
    pub fn displacement(&self) -> f64 {
        self.points[0].distance(self.endpoint())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Trajectory {
        Trajectory {
            points: self
                .points
                .iter()
                .map(|p| Point2::new(p.x + dx, p.y + dy))
                .collect(),
            dt: self.dt,
        }
    }

    pub fn scaled(&self, factor: f64) -> Trajectory {
        Trajectory {
            points: self
                .points
                .iter()
                .map(|p| Point2::new(p.x * factor, p.y * factor))
                .collect(),
            dt: self.dt,
        }
    }
}

/// Limits applied to the Gaussian head parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBounds {
    pub log_sigma_min: f64,
    pub log_sigma_max: f64,
    /// Correlation is `rho_bound * tanh(rho_raw)`; must be below one.
    pub rho_bound: f64,
}

impl Default for GaussianBounds {
    fn default() -> Self {
        Self {
            log_sigma_min: -5.0,
            log_sigma_max: 5.0,
            rho_bound: 0.5,
        }
    }
}

/// Per-step bivariate Gaussian over a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTrajectory {
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub log_sigma_x: Vec<f64>,
    pub log_sigma_y: Vec<f64>,
    pub rho_raw: Vec<f64>,
}

impl GaussianTrajectory {
    /// Unit-variance, uncorrelated Gaussian centred on `mean`.
    pub fn isotropic(mean: &Trajectory) -> Self {
        let t = mean.horizon();
        Self {
            mu_x: mean.points().iter().map(|p| p.x).collect(),
            mu_y: mean.points().iter().map(|p| p.y).collect(),
            log_sigma_x: vec![0.0; t],
            log_sigma_y: vec![0.0; t],
            rho_raw: vec![0.0; t],
        }
    }

    pub fn horizon(&self) -> usize {
        self.mu_x.len()
    }

    pub fn endpoint(&self) -> Point2 {
        let t = self.horizon() - 1;
        Point2::new(self.mu_x[t], self.mu_y[t])
    }

    pub fn mean_trajectory(&self, dt: f64) -> Trajectory {
        Trajectory {
            points: self
                .mu_x
                .iter()
                .zip(&self.mu_y)
                .map(|(&x, &y)| Point2::new(x, y))
                .collect(),
            dt,
        }
    }

    pub fn validate(&self, bounds: &GaussianBounds) -> Result<(), ValidationError> {
        let t = self.mu_x.len();
        if t == 0 {
            return Err(ValidationError::Empty { what: "gaussian trajectory" });
        }
        for (what, v) in [
            ("mu_y", &self.mu_y),
            ("log_sigma_x", &self.log_sigma_x),
            ("log_sigma_y", &self.log_sigma_y),
            ("rho_raw", &self.rho_raw),
        ] {
            if v.len() != t {
                return Err(ValidationError::DimensionMismatch {
                    what,
                    expected: t,
                    got: v.len(),
                });
            }
        }
        let all = [
            &self.mu_x,
            &self.mu_y,
            &self.log_sigma_x,
            &self.log_sigma_y,
            &self.rho_raw,
        ];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(ValidationError::NonFinite { what: "gaussian trajectory" });
        }
        let lo = bounds.log_sigma_min;
        let hi = bounds.log_sigma_max;
        if self
            .log_sigma_x
            .iter()
            .chain(&self.log_sigma_y)
            .any(|&s| s < lo || s > hi)
        {
            return Err(ValidationError::OutOfRange {
                what: "log sigma",
                detail: format!("outside [{lo}, {hi}]"),
            });
        }
        if !(bounds.rho_bound >= 0.0 && bounds.rho_bound < 1.0) {
            return Err(ValidationError::OutOfRange {
                what: "rho bound",
                detail: format!("{} is not in [0, 1)", bounds.rho_bound),
            });
        }
        Ok(())
    }
}

/// One decoder layer's mixture: Gaussian components plus raw score logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureOutput {
    pub components: Vec<GaussianTrajectory>,
    pub score_logits: Vec<f64>,
    /// 1-based decoder layer that produced this output.
    pub layer_index: usize,
}

impl MixtureOutput {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn mean_trajectories(&self, dt: f64) -> Vec<Trajectory> {
        self.components.iter().map(|c| c.mean_trajectory(dt)).collect()
    }

    /// Index of the highest logit; ties go to the lower index.
    pub fn top_index(&self) -> usize {
        argmax(&self.score_logits)
    }

    pub fn validate(&self, bounds: &GaussianBounds) -> Result<(), ValidationError> {
        if self.components.len() < 2 {
            return Err(ValidationError::OutOfRange {
                what: "component count",
                detail: format!("{} < 2", self.components.len()),
            });
        }
        if self.score_logits.len() != self.components.len() {
            return Err(ValidationError::DimensionMismatch {
                what: "score logits",
                expected: self.components.len(),
                got: self.score_logits.len(),
            });
        }
        if self.score_logits.iter().any(|s| !s.is_finite()) {
            return Err(ValidationError::NonFinite { what: "score logits" });
        }
        let t = self.components[0].horizon();
        for c in &self.components {
            c.validate(bounds)?;
            if c.horizon() != t {
                return Err(ValidationError::DimensionMismatch {
                    what: "component horizon",
                    expected: t,
                    got: c.horizon(),
                });
            }
        }
        Ok(())
    }
}

/// Where an anchor came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorSource {
    /// A k-means intention point.
    Predefined,
    /// The mean trajectory of a component at the given 1-based decoder layer.
    Evolved { layer: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    endpoint: Point2,
    trajectory: Option<Trajectory>,
    source: AnchorSource,
}

impl Anchor {
    pub fn predefined(endpoint: Point2) -> Result<Self, ValidationError> {
        let a = Self {
            endpoint,
            trajectory: None,
            source: AnchorSource::Predefined,
        };
        a.validate()?;
        Ok(a)
    }

    /// Anchor taken from a layer output; the endpoint is the trajectory's last point.
    pub fn evolved(trajectory: Trajectory, layer: usize) -> Self {
        Self {
            endpoint: trajectory.endpoint(),
            trajectory: Some(trajectory),
            source: AnchorSource::Evolved { layer },
        }
    }

    pub fn endpoint(&self) -> Point2 {
        self.endpoint
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.trajectory.as_ref()
    }

    pub fn source(&self) -> AnchorSource {
        self.source
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.endpoint.is_finite() {
            return Err(ValidationError::NonFinite { what: "anchor endpoint" });
        }
        match (&self.source, &self.trajectory) {
            (AnchorSource::Predefined, None) => Ok(()),
            (AnchorSource::Predefined, Some(_)) => Err(ValidationError::Provenance(
                "predefined anchor carries a trajectory".into(),
            )),
            (AnchorSource::Evolved { .. }, None) => Err(ValidationError::Provenance(
                "evolved anchor has no trajectory".into(),
            )),
            (AnchorSource::Evolved { .. }, Some(t)) => {
                t.validate()?;
                if t.endpoint() != self.endpoint {
                    return Err(ValidationError::Provenance(
                        "evolved anchor endpoint differs from its last waypoint".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Anchors index-aligned with the mixture components.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self, ValidationError> {
        if anchors.is_empty() {
            return Err(ValidationError::Empty { what: "anchor set" });
        }
        for a in &anchors {
            a.validate()?;
        }
        Ok(Self { anchors })
    }

    pub fn from_endpoints(endpoints: &[Point2]) -> Result<Self, ValidationError> {
        let anchors = endpoints
            .iter()
            .map(|&p| Anchor::predefined(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(anchors)
    }

    /// Anchors built from a layer's mean trajectories.
    pub fn from_output(output: &MixtureOutput, dt: f64) -> Self {
        Self {
            anchors: output
                .components
                .iter()
                .map(|c| Anchor::evolved(c.mean_trajectory(dt), output.layer_index))
                .collect(),
        }
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn endpoints(&self) -> Vec<Point2> {
        self.anchors.iter().map(Anchor::endpoint).collect()
    }

    pub fn is_predefined(&self) -> bool {
        self.anchors
            .iter()
            .all(|a| a.source == AnchorSource::Predefined)
    }

    pub fn validate_len(&self, n: usize) -> Result<(), ValidationError> {
        if self.anchors.len() != n {
            return Err(ValidationError::DimensionMismatch {
                what: "anchor set",
                expected: n,
                got: self.anchors.len(),
            });
        }
        Ok(())
    }
}

/// A training or evaluation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub context: Vec<f64>,
    pub gt: Trajectory,
    /// Generating maneuver. Diagnostics only, never fed to the model.
    pub latent_mode: usize,
    pub category: usize,
}

impl Scene {
    pub fn validate(&self, context_dim: usize, num_modes: usize) -> Result<(), ValidationError> {
        if self.context.len() != context_dim {
            return Err(ValidationError::DimensionMismatch {
                what: "scene context",
                expected: context_dim,
                got: self.context.len(),
            });
        }
        if self.context.iter().any(|c| !c.is_finite()) {
            return Err(ValidationError::NonFinite { what: "scene context" });
        }
        if self.latent_mode >= num_modes {
            return Err(ValidationError::OutOfRange {
                what: "latent mode",
                detail: format!("{} >= {}", self.latent_mode, num_modes),
            });
        }
        self.gt.validate()
    }
}

/// Outcome of label assignment for one layer of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub positive_index: usize,
    pub distinct_mask: Vec<bool>,
    /// Distance of each anchor (or prediction) to the ground truth;
    /// `f64::INFINITY` where the mask is false.
    pub distances: Vec<f64>,
}

impl MatchResult {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.distinct_mask.len();
        if self.distances.len() != n {
            return Err(ValidationError::DimensionMismatch {
                what: "match distances",
                expected: n,
                got: self.distances.len(),
            });
        }
        if self.positive_index >= n {
            return Err(ValidationError::MaskInconsistent(format!(
                "positive index {} out of {} components",
                self.positive_index, n
            )));
        }
        if !self.distinct_mask[self.positive_index] {
            return Err(ValidationError::MaskInconsistent(format!(
                "positive index {} is not distinct",
                self.positive_index
            )));
        }
        let best = self.distances[self.positive_index];
        if best.is_nan() {
            return Err(ValidationError::NonFinite { what: "match distances" });
        }
        for (i, (&d, &m)) in self.distances.iter().zip(&self.distinct_mask).enumerate() {
            if m && d < best {
                return Err(ValidationError::MaskInconsistent(format!(
                    "index {i} is closer than the positive {}",
                    self.positive_index
                )));
            }
        }
        Ok(())
    }

    pub fn num_distinct(&self) -> usize {
        self.distinct_mask.iter().filter(|&&m| m).count()
    }
}

/// Index of the largest value, ties resolved toward the lower index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Trajectory {
        let pts = (1..=n).map(|i| Point2::new(i as f64, 0.0)).collect();
        Trajectory::new(pts, 0.1).unwrap()
    }

    #[test]
    fn nan_coordinate_is_rejected() {
        let err = Trajectory::new(vec![Point2::new(0.0, f64::NAN)], 0.1).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        assert!(Trajectory::new(vec![], 0.1).is_err());
    }

    #[test]
    fn mask_inconsistency_is_rejected() {
        let m = MatchResult {
            positive_index: 1,
            distinct_mask: vec![true, false],
            distances: vec![1.0, f64::INFINITY],
        };
        assert!(matches!(m.validate(), Err(ValidationError::MaskInconsistent(_))));
    }

    #[test]
    fn positive_must_be_closest() {
        let m = MatchResult {
            positive_index: 1,
            distinct_mask: vec![true, true],
            distances: vec![1.0, 2.0],
        };
        assert!(m.validate().is_err());
        let ok = MatchResult {
            positive_index: 0,
            ..m
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn well_formed_scene_validates() {
        let s = Scene {
            context: vec![0.5, 0.25, 0.25],
            gt: line(4),
            latent_mode: 1,
            category: 0,
        };
        assert!(s.validate(3, 2).is_ok());
        assert!(s.validate(4, 2).is_err());
        assert!(s.validate(3, 1).is_err());
    }

    #[test]
    fn evolved_anchor_endpoint_matches_last_point() {
        let t = line(5);
        let a = Anchor::evolved(t.clone(), 2);
        assert_eq!(a.endpoint(), t.endpoint());
        assert!(a.validate().is_ok());
    }

    #[test]
    fn gaussian_bounds_enforced() {
        let mut g = GaussianTrajectory::isotropic(&line(3));
        assert!(g.validate(&GaussianBounds::default()).is_ok());
        g.log_sigma_x[1] = 6.0;
        assert!(g.validate(&GaussianBounds::default()).is_err());
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
