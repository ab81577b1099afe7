//! Reference implementations written independently of the library, plus
//! random instance builders shared by the integration suites.

#![allow(dead_code)]

use eda_core::types::{GaussianTrajectory, MixtureOutput, Point2, Trajectory};
use rand::Rng;

/// NMS by repeated selection: take the best remaining candidate, drop every
/// candidate within `sigma` of it, repeat.
pub fn reference_nms(endpoints: &[Point2], scores: &[f64], sigma: f64) -> Vec<usize> {
    let n = endpoints.len();
    let mut alive = vec![true; n];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if alive[i] && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        kept.push(b);
        for i in 0..n {
            let d = ((endpoints[i].x - endpoints[b].x).powi(2) + (endpoints[i].y - endpoints[b].y).powi(2)).sqrt();
            if d <= sigma {
                alive[i] = false;
            }
        }
    }
    kept
}

/// Top-K by reference NMS then back-fill, re-sorted by score.
pub fn reference_select(endpoints: &[Point2], scores: &[f64], sigma: f64, k: usize) -> Vec<usize> {
    let kept = reference_nms(endpoints, scores, sigma);
    let mut chosen: Vec<usize> = kept.iter().copied().take(k).collect();
    let mut rest: Vec<usize> = (0..scores.len()).filter(|i| !kept.contains(i)).collect();
    rest.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    for i in rest {
        if chosen.len() == k {
            break;
        }
        chosen.push(i);
    }
    chosen.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    chosen
}

/// AP as the mean, over scenes, of the interpolated precision at each true
/// positive: `AP = (1/S) * sum_tp max_{j >= pos(tp)} precision_j`.
pub fn brute_force_ap(scenes: &[(Vec<f64>, Vec<f64>)], threshold: f64) -> f64 {
    // Pool as (score, scene, rank, is_tp).
    let mut pool = Vec::new();
    for (s, (scores, errors)) in scenes.iter().enumerate() {
        let mut tp: Option<usize> = None;
        for r in 0..scores.len() {
            if errors[r] <= threshold {
                match tp {
                    Some(t) if scores[t] >= scores[r] => {}
                    _ => tp = Some(r),
                }
            }
        }
        for r in 0..scores.len() {
            pool.push((scores[r], s, r, tp == Some(r)));
        }
    }
    // Insertion sort keeps the comparison rules explicit.
    let before = |a: &(f64, usize, usize, bool), b: &(f64, usize, usize, bool)| {
        a.0 > b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
    };
    for i in 1..pool.len() {
        let mut j = i;
        while j > 0 && before(&pool[j], &pool[j - 1]) {
            pool.swap(j, j - 1);
            j -= 1;
        }
    }
    let precision: Vec<f64> = (0..pool.len())
        .map(|i| pool[..=i].iter().filter(|p| p.3).count() as f64 / (i + 1) as f64)
        .collect();
    let mut sum = 0.0;
    for i in 0..pool.len() {
        if pool[i].3 {
            sum += precision[i..].iter().copied().fold(0.0, f64::max);
        }
    }
    sum / scenes.len() as f64
}

pub fn random_point(rng: &mut impl Rng, extent: f64) -> Point2 {
    Point2::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent))
}

pub fn random_trajectory(rng: &mut impl Rng, horizon: usize, extent: f64) -> Trajectory {
    let pts = (0..horizon).map(|_| random_point(rng, extent)).collect();
    Trajectory::new(pts, 0.5).unwrap()
}

pub fn random_output(rng: &mut impl Rng, n: usize, horizon: usize, extent: f64) -> MixtureOutput {
    MixtureOutput {
        components: (0..n)
            .map(|_| {
                let mean = random_trajectory(rng, horizon, extent);
                let mut g = GaussianTrajectory::isotropic(&mean);
                for v in g
                    .log_sigma_x
                    .iter_mut()
                    .chain(g.log_sigma_y.iter_mut())
                    .chain(g.rho_raw.iter_mut())
                {
                    *v = rng.random_range(-1.0..1.0);
                }
                g
            })
            .collect(),
        score_logits: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
        layer_index: 1,
    }
}

/// Max relative error with a floor on the denominator.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
