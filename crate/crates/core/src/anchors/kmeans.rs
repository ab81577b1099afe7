//! Lloyd's k-means over 2D endpoints with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::Point2;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Point2>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances of every point to its centroid.
    pub objective: f64,
    /// Objective after each assignment step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: Point2, b: Point2) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy
}

fn count_distinct(points: &[Point2]) -> usize {
    let mut keys: Vec<(u64, u64)> = points
        .iter()
        .map(|p| (p.x.to_bits(), p.y.to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means++ seeding: the first centre is uniform, later ones are drawn with
/// probability proportional to squared distance from the nearest chosen centre.
pub fn kmeans_plus_plus(points: &[Point2], k: usize, rng: &mut impl Rng) -> Vec<Point2> {
    let mut centres = Vec::with_capacity(k);
    centres.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|&p| sq_dist(p, centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        centres.push(c);
        for (w, &p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, c));
        }
    }
    centres
}

/// Seeded k-means over endpoints.
pub fn kmeans_endpoints(
    points: &[Point2],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(Error::TooFewDistinctPoints {
            needed: k,
            got: distinct,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_plus_plus(points, k, &mut rng);
    kmeans_from_init(points, init, max_iters)
}

fn assign(points: &[Point2], centroids: &[Point2], assignment: &mut [usize]) -> f64 {
    let mut objective = 0.0;
    for (a, &p) in assignment.iter_mut().zip(points) {
        let mut best = 0;
        let mut best_d = sq_dist(p, centroids[0]);
        for (j, &c) in centroids.iter().enumerate().skip(1) {
            let d = sq_dist(p, c);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        *a = best;
        objective += best_d;
    }
    objective
}

fn cluster_means(points: &[Point2], assignment: &[usize], k: usize) -> Vec<Option<Point2>> {
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for (&a, p) in assignment.iter().zip(points) {
        sums[a].0 += p.x;
        sums[a].1 += p.y;
        sums[a].2 += 1;
    }
    sums.into_iter()
        .map(|(sx, sy, n)| (n > 0).then(|| Point2::new(sx / n as f64, sy / n as f64)))
        .collect()
}

/// Lloyd iterations from explicit initial centroids.
///
/// Stops once assignments no longer change or after `max_iters` updates.
/// A cluster that empties is re-seeded at the point lying farthest from its
/// own centroid.
pub fn kmeans_from_init(
    points: &[Point2],
    init: Vec<Point2>,
    max_iters: usize,
) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::EmptyInput("k-means points"));
    }
    if init.is_empty() {
        return Err(Error::Config("k-means needs at least one centroid".into()));
    }
    let k = init.len();
    let mut centroids = init;
    let mut assignment = vec![0usize; points.len()];
    let mut objective = assign(points, &centroids, &mut assignment);
    let mut history = vec![objective];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let means = cluster_means(points, &assignment, k);
        for (c, m) in centroids.iter_mut().zip(&means) {
            if let Some(m) = m {
                *c = *m;
            }
        }
        for j in 0..k {
            if means[j].is_none() {
                let far = points
                    .iter()
                    .zip(&assignment)
                    .enumerate()
                    .map(|(i, (&p, &a))| (i, sq_dist(p, centroids[a])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                centroids[j] = points[far];
            }
        }
        let previous = assignment.clone();
        objective = assign(points, &centroids, &mut assignment);
        history.push(objective);
        if assignment == previous {
            converged = true;
            break;
        }
    }

    Ok(KMeansResult {
        centroids,
        assignment,
        objective,
        history,
        iterations,
        converged,
    })
}
