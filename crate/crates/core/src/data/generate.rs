//! Synthetic multimodal driving scenes.
//!
//! Every scene starts at the origin heading along +x. A context-dependent
//! prior over maneuvers is drawn and written into the context vector; the
//! actual maneuver is then sampled from that prior, so the context carries
//! only the prior, never the outcome.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::types::{Point2, Scene, Trajectory};

/// Speed normalisation used in the context vector.
pub const SPEED_SCALE: f64 = 10.0;
const SUBSTEPS: usize = 8;

/// A constant-turn-rate maneuver with a linear speed ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct Maneuver {
    pub name: String,
    /// Yaw rate in rad/s, positive turns left.
    pub turn_rate: f64,
    /// Speed at the horizon relative to the initial speed.
    pub final_speed_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub num_scenes: usize,
    /// Trailing share of scenes held out for evaluation.
    pub eval_fraction: f64,
    pub num_modes: usize,
    pub mode_prior_sharpness: f64,
    pub noise_sigma: f64,
    pub horizon: usize,
    pub dt: f64,
    pub seed: u64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub hard_turn_rate: f64,
    pub soft_turn_rate: f64,
    pub brake_factor: f64,
    pub hard_turn_speed_factor: f64,
    /// Relative per-scene perturbation of turn rate and speed factor.
    pub jitter: f64,
    pub num_categories: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_scenes: 10_000,
            eval_fraction: 0.2,
            num_modes: 6,
            mode_prior_sharpness: 2.0,
            noise_sigma: 0.1,
            horizon: 16,
            dt: 0.25,
            seed: 0,
            speed_min: 4.0,
            speed_max: 12.0,
            hard_turn_rate: 0.35,
            soft_turn_rate: 0.12,
            brake_factor: 0.5,
            hard_turn_speed_factor: 0.8,
            jitter: 0.1,
            num_categories: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_modes < 2 {
            return bad("num_modes must be at least 2");
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return bad("noise_sigma must be non-negative");
        }
        if self.horizon == 0 || self.dt.is_nan() || self.dt <= 0.0 {
            return bad("horizon and dt must be positive");
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return bad("speed range must be positive and ordered");
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return bad("eval_fraction must lie in [0, 1)");
        }
        if self.num_categories == 0 {
            return bad("num_categories must be positive");
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad("jitter must lie in [0, 1)");
        }
        if !self.mode_prior_sharpness.is_finite() || self.mode_prior_sharpness < 0.0 {
            return bad("mode_prior_sharpness must be finite and non-negative");
        }
        Ok(())
    }

    /// Context layout: `[speed / SPEED_SCALE, category, prior_0 .. prior_{M-1}]`.
    pub fn context_dim(&self) -> usize {
        self.num_modes + 2
    }

    pub fn train_count(&self) -> usize {
        self.num_scenes - (self.num_scenes as f64 * self.eval_fraction).round() as usize
    }

    pub fn maneuvers(&self) -> Vec<Maneuver> {
        let m = |name: &str, turn_rate: f64, final_speed_factor: f64| Maneuver {
            name: name.to_string(),
            turn_rate,
            final_speed_factor,
        };
        if self.num_modes == 6 {
            return vec![
                m("hard-left", self.hard_turn_rate, self.hard_turn_speed_factor),
                m("soft-left", self.soft_turn_rate, 1.0),
                m("straight-slow", 0.0, self.brake_factor),
                m("straight-fast", 0.0, 1.0),
                m("soft-right", -self.soft_turn_rate, 1.0),
                m("hard-right", -self.hard_turn_rate, self.hard_turn_speed_factor),
            ];
        }
        let n = self.num_modes;
        (0..n)
            .map(|i| {
                let frac = 1.0 - 2.0 * i as f64 / (n - 1) as f64;
                m(&format!("turn-{i}"), self.hard_turn_rate * frac, 1.0)
            })
            .collect()
    }
}

/// Generated scenes plus the train/eval split point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenes: Vec<Scene>,
    pub train_count: usize,
    pub context_dim: usize,
    pub horizon: usize,
    pub dt: f64,
    pub num_modes: usize,
}

impl Dataset {
    pub fn train(&self) -> &[Scene] {
        &self.scenes[..self.train_count]
    }

    pub fn eval(&self) -> &[Scene] {
        &self.scenes[self.train_count..]
    }

    pub fn num_categories(&self) -> usize {
        self.scenes.iter().map(|s| s.category + 1).max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_count > self.scenes.len() {
            return Err(Error::Config(format!(
                "train count {} exceeds {} scenes",
                self.train_count,
                self.scenes.len()
            )));
        }
        for s in &self.scenes {
            s.validate(self.context_dim, self.num_modes)?;
            if s.gt.horizon() != self.horizon {
                return Err(Error::Shape(format!(
                    "scene horizon {} vs dataset {}",
                    s.gt.horizon(),
                    self.horizon
                )));
            }
        }
        Ok(())
    }

    /// Ground-truth endpoints of the training split grouped by category.
    pub fn train_endpoints_by_category(&self) -> Vec<Vec<Point2>> {
        let mut out = vec![Vec::new(); self.num_categories()];
        for s in self.train() {
            out[s.category].push(s.gt.endpoint());
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of scene `index`, independent of generation order.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// The observable part of a scene: what the context vector is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCue {
    pub category: usize,
    pub speed: f64,
    pub prior: Vec<f64>,
}

impl SceneCue {
    pub fn context(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.prior.len() + 2);
        c.push(self.speed / SPEED_SCALE);
        c.push(self.category as f64);
        c.extend_from_slice(&self.prior);
        c
    }
}

fn draw_cue(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> SceneCue {
    let category = rng.random_range(0..cfg.num_categories);
    let cat_scale = 1.0 / (1.0 + category as f64);
    let speed = cat_scale * rng.random_range(cfg.speed_min..=cfg.speed_max);
    // Dirichlet(1) weights, sharpened and renormalised.
    let raw: Vec<f64> = (0..cfg.num_modes)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let sharp: Vec<f64> = raw.iter().map(|w| w.powf(cfg.mode_prior_sharpness)).collect();
    let total: f64 = sharp.iter().sum();
    let prior = sharp.iter().map(|w| w / total).collect();
    SceneCue {
        category,
        speed,
        prior,
    }
}

/// Replays the draws that determine the context of scene `index`.
pub fn scene_cue(cfg: &GenConfig, index: usize) -> SceneCue {
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(cfg.seed, index));
    draw_cue(cfg, &mut rng)
}

fn sample_categorical(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Noise-free rollout of a constant-turn-rate maneuver with a linear speed ramp.
pub fn rollout(speed: f64, turn_rate: f64, final_speed_factor: f64, horizon: usize, dt: f64) -> Vec<Point2> {
    let total = horizon as f64 * dt;
    let h = dt / SUBSTEPS as f64;
    let speed_at = |tau: f64| speed * (1.0 + (final_speed_factor - 1.0) * tau / total);
    let (mut x, mut y) = (0.0, 0.0);
    let mut pts = Vec::with_capacity(horizon);
    for step in 0..horizon {
        for sub in 0..SUBSTEPS {
            let tau = step as f64 * dt + (sub as f64 + 0.5) * h;
            let v = speed_at(tau);
            let heading = turn_rate * tau;
            x += v * heading.cos() * h;
            y += v * heading.sin() * h;
        }
        pts.push(Point2::new(x, y));
    }
    pts
}

/// Generates scene `index` of the dataset described by `cfg`.
pub fn generate_scene(cfg: &GenConfig, maneuvers: &[Maneuver], index: usize) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(cfg.seed, index));
    let cue = draw_cue(cfg, &mut rng);
    let mode = sample_categorical(&cue.prior, &mut rng);
    let man = &maneuvers[mode];
    let turn = man.turn_rate * (1.0 + cfg.jitter * rng.random_range(-1.0..=1.0));
    let factor = man.final_speed_factor * (1.0 + 0.5 * cfg.jitter * rng.random_range(-1.0..=1.0));
    let mut pts = rollout(cue.speed, turn, factor, cfg.horizon, cfg.dt);
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        for p in &mut pts {
            p.x += noise.sample(&mut rng);
            p.y += noise.sample(&mut rng);
        }
    }
    Ok(Scene {
        context: cue.context(),
        gt: Trajectory::new(pts, cfg.dt)?,
        latent_mode: mode,
        category: cue.category,
    })
}

/// Generates the full dataset; identical for any `exec` mode.
pub fn generate_dataset(cfg: &GenConfig, exec: Exec) -> Result<Dataset> {
    cfg.validate()?;
    let maneuvers = cfg.maneuvers();
    let scenes = exec
        .map_range(cfg.num_scenes, |i| generate_scene(cfg, &maneuvers, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        scenes,
        train_count: cfg.train_count(),
        context_dim: cfg.context_dim(),
        horizon: cfg.horizon,
        dt: cfg.dt,
        num_modes: cfg.num_modes,
    })
}
