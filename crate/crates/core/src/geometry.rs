//! Trajectory distances and greedy endpoint NMS.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{Point2, Trajectory};

/// Euclidean distance between two final points.
pub fn endpoint_distance(a: Point2, b: Point2) -> f64 {
    a.distance(b)
}

/// Mean over time of the per-step Euclidean distance.
pub fn mean_pointwise_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.horizon() != b.horizon() {
        return Err(Error::Shape(format!(
            "trajectory horizons differ: {} vs {}",
            a.horizon(),
            b.horizon()
        )));
    }
    let sum: f64 = a
        .points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| p.distance(*q))
        .sum();
    Ok(sum / a.horizon() as f64)
}

/// How the length of the top-scored trajectory is measured for the NMS threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthMode {
    #[default]
    ArcLength,
    Displacement,
}

impl LengthMode {
    pub fn measure(self, t: &Trajectory) -> f64 {
        match self {
            LengthMode::ArcLength => t.arc_length(),
            LengthMode::Displacement => t.displacement(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LengthMode::ArcLength => "arc",
            LengthMode::Displacement => "displacement",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "arc" => Some(LengthMode::ArcLength),
            "displacement" => Some(LengthMode::Displacement),
            _ => None,
        }
    }
}

pub const NMS_SIGMA_MIN: f64 = 2.5;
pub const NMS_SIGMA_MAX: f64 = 3.5;

/// Endpoint NMS radius scaled with the length of the most confident trajectory.
pub fn nms_threshold(length: f64) -> f64 {
    let scaled = NMS_SIGMA_MIN + 1.5 * (length - 10.0) / (50.0 - 10.0);
    NMS_SIGMA_MAX.min(NMS_SIGMA_MIN.max(scaled))
}

/// Result of greedy NMS.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NmsKeepList {
    /// Kept indices in descending score order.
    pub kept: Vec<usize>,
    /// Suppressed index -> kept index that suppressed it.
    pub suppressed_by: BTreeMap<usize, usize>,
}

impl NmsKeepList {
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &k in &self.kept {
            m[k] = true;
        }
        m
    }
}

/// Indices sorted by descending score, ties toward the lower index.
pub fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    order
}

/// Greedy NMS over endpoints.
///
/// Candidates are visited in descending score order; one is kept when it lies
/// farther than `sigma` from every endpoint kept so far. Otherwise it is
/// attributed to the nearest kept endpoint.
pub fn greedy_nms(endpoints: &[Point2], scores: &[f64], sigma: f64) -> Result<NmsKeepList> {
    if endpoints.is_empty() {
        return Err(Error::EmptyInput("nms candidates"));
    }
    if endpoints.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} endpoints but {} scores",
            endpoints.len(),
            scores.len()
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!("nms radius {sigma} must be finite and >= 0")));
    }

    let mut out = NmsKeepList::default();
    for i in descending_order(scores) {
        let mut nearest: Option<(usize, f64)> = None;
        for &k in &out.kept {
            let d = endpoints[i].distance(endpoints[k]);
            if d <= sigma && nearest.is_none_or(|(nk, nd)| d < nd || (d == nd && k < nk)) {
                nearest = Some((k, d));
            }
        }
        match nearest {
            Some((k, _)) => {
                out.suppressed_by.insert(i, k);
            }
            None => out.kept.push(i),
        }
    }
    Ok(out)
}
