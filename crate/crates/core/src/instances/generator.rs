//! Procedural CVRPTW generator.
//!
//! Per instance a set of latents fixes the spatial scale, horizon, service
//! time, distance-to-time coefficient and three mixtures (spatial layout,
//! window width, window phase). Customer windows are placed inside the
//! per-node feasibility bounds `[L_j, U_j]` so that every customer can be
//! served by a dedicated route.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::{CustomerRecord, DistanceRule, RoutingInstance, Task};
use crate::error::{Error, Result};

/// Beta parameters of the narrow, medium and loose width components.
pub const WIDTH_BETAS: [(f64, f64); 3] = [(2.0, 18.0), (4.0, 8.0), (6.0, 2.0)];
/// Minimum normalized distance of outliers from the depot and cluster centers.
pub const OUTLIER_CLEARANCE: f64 = 0.35;
const OUTLIER_RESAMPLES: usize = 100;
const POSITION_RETRIES: usize = 50;
const CORRIDOR_WIDTH: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLatents {
    /// Spatial scale `S`: normalized coordinates are multiplied by it.
    pub spatial_scale: f64,
    /// Horizon ratio `H`; `T_max = H * S`.
    pub horizon_ratio: f64,
    /// Service ratio; service time `s = ratio * S`.
    pub service_ratio: f64,
    /// Distance-to-time coefficient.
    pub time_coef: f64,
    pub clusters: usize,
    /// Weights of clustered, uniform, corridor and outlier placement.
    pub pi_space: [f64; 4],
    /// Weights of the narrow, medium and loose window widths.
    pub pi_width: [f64; 3],
    /// Weights of the cluster, radial, angular and random phases.
    pub pi_phase: [f64; 4],
    pub constrained_fraction: f64,
    pub phase_noise: f64,
    /// Minimum window width in time units.
    pub min_width: f64,
    pub capacity: f64,
    pub rng_seed: u64,
}

impl Default for GeneratorLatents {
    fn default() -> Self {
        let spatial_scale = 100.0;
        let horizon_ratio = 4.0;
        Self {
            spatial_scale,
            horizon_ratio,
            service_ratio: 0.1,
            time_coef: 1.0,
            clusters: 3,
            pi_space: [0.4, 0.3, 0.2, 0.1],
            pi_width: [1.0 / 3.0; 3],
            pi_phase: [0.25; 4],
            constrained_fraction: 0.6,
            phase_noise: 0.05,
            min_width: 0.02 * spatial_scale * horizon_ratio,
            capacity: 50.0,
            rng_seed: 0,
        }
    }
}

fn check_mixture(name: &str, w: &[f64]) -> Result<()> {
    let sum: f64 = w.iter().sum();
    if w.iter().any(|&v| v.is_nan() || v < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInstance(format!(
            "mixture {name} must be nonnegative and sum to 1 (sum {sum})"
        )));
    }
    Ok(())
}

impl GeneratorLatents {
    pub fn horizon(&self) -> f64 {
        self.horizon_ratio * self.spatial_scale
    }

    pub fn service_time(&self) -> f64 {
        self.service_ratio * self.spatial_scale
    }

    pub fn validate(&self) -> Result<()> {
        check_mixture("pi_space", &self.pi_space)?;
        check_mixture("pi_width", &self.pi_width)?;
        check_mixture("pi_phase", &self.pi_phase)?;
        if !(0.0..=1.0).contains(&self.constrained_fraction) {
            return Err(Error::InvalidInstance("constrained_fraction outside [0, 1]".into()));
        }
        let positive = [
            ("spatial_scale", self.spatial_scale),
            ("horizon_ratio", self.horizon_ratio),
            ("service_ratio", self.service_ratio),
            ("time_coef", self.time_coef),
            ("min_width", self.min_width),
            ("capacity", self.capacity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInstance(format!("{name} must be positive")));
            }
        }
        if self.phase_noise.is_nan() || self.phase_noise < 0.0 {
            return Err(Error::InvalidInstance("phase_noise must be nonnegative".into()));
        }
        if self.clusters == 0 {
            return Err(Error::InvalidInstance("at least one cluster required".into()));
        }
        Ok(())
    }
}

/// Ranges from which per-instance latents are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPrior {
    pub spatial_scale: (f64, f64),
    pub horizon_ratio: (f64, f64),
    pub service_ratio: (f64, f64),
    pub time_coef: (f64, f64),
    pub clusters: (usize, usize),
    pub constrained_fraction: (f64, f64),
    pub phase_noise: f64,
    pub min_width_ratio: f64,
    pub capacity: f64,
}

impl Default for LatentPrior {
    fn default() -> Self {
        Self {
            spatial_scale: (50.0, 200.0),
            horizon_ratio: (2.5, 10.0),
            service_ratio: (0.02, 0.2),
            time_coef: (0.8, 1.0),
            clusters: (1, 6),
            constrained_fraction: (0.25, 1.0),
            phase_noise: 0.05,
            min_width_ratio: 0.02,
            capacity: 50.0,
        }
    }
}

fn dirichlet<const N: usize>(rng: &mut impl Rng, alpha: [f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for (o, a) in out.iter_mut().zip(alpha) {
        *o = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
    }
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        out.iter_mut().for_each(|v| *v /= sum);
    } else {
        out = [1.0 / N as f64; N];
    }
    // Renormalize so the weights sum to one to within rounding.
    let sum: f64 = out.iter().sum();
    out[N - 1] = (out[N - 1] + 1.0 - sum).max(0.0);
    out
}

impl LatentPrior {
    /// Draws one latent set; `seed` drives both the draw and the instance.
    pub fn sample(&self, seed: u64) -> GeneratorLatents {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let uni = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        let spatial_scale = uni(&mut rng, self.spatial_scale);
        let horizon_ratio = uni(&mut rng, self.horizon_ratio);
        let service_ratio = uni(&mut rng, self.service_ratio);
        let time_coef = uni(&mut rng, self.time_coef);
        let clusters = rng.random_range(self.clusters.0..=self.clusters.1);
        let pi_space = dirichlet(&mut rng, [2.0, 2.0, 1.0, 0.5]);
        let pi_width = dirichlet(&mut rng, [1.0; 3]);
        let pi_phase = dirichlet(&mut rng, [1.0; 4]);
        let constrained_fraction = uni(&mut rng, self.constrained_fraction);
        GeneratorLatents {
            spatial_scale,
            horizon_ratio,
            service_ratio,
            time_coef,
            clusters,
            pi_space,
            pi_width,
            pi_phase,
            constrained_fraction,
            phase_noise: self.phase_noise,
            min_width: self.min_width_ratio * horizon_ratio * spatial_scale,
            capacity: self.capacity,
            rng_seed: seed,
        }
    }
}

fn pick(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn clip01(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

struct Layout {
    depot: [f64; 2],
    centers: Vec<[f64; 2]>,
    spreads: Vec<f64>,
    corridor: ([f64; 2], [f64; 2]),
}

impl Layout {
    fn nearest_center(&self, p: [f64; 2]) -> usize {
        let mut best = 0;
        for (k, c) in self.centers.iter().enumerate() {
            if dist(p, *c) < dist(p, self.centers[best]) {
                best = k;
            }
        }
        best
    }

    /// Samples a normalized position from `component`, returning it with its
    /// cluster index.
    fn sample(&self, component: usize, rng: &mut impl Rng) -> ([f64; 2], usize) {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        match component {
            0 => {
                let k = rng.random_range(0..self.centers.len());
                let c = self.centers[k];
                let s = self.spreads[k];
                let p = clip01([c[0] + s * normal.sample(rng), c[1] + s * normal.sample(rng)]);
                (p, k)
            }
            1 => {
                let p = [rng.random(), rng.random()];
                (p, self.nearest_center(p))
            }
            2 => {
                let (a, b) = self.corridor;
                let t: f64 = rng.random();
                let dir = [b[0] - a[0], b[1] - a[1]];
                let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt().max(1e-12);
                let perp = [-dir[1] / len, dir[0] / len];
                let off = CORRIDOR_WIDTH * normal.sample(rng);
                let p = clip01([a[0] + t * dir[0] + off * perp[0], a[1] + t * dir[1] + off * perp[1]]);
                (p, self.nearest_center(p))
            }
            _ => {
                let mut p = [rng.random(), rng.random()];
                for _ in 0..OUTLIER_RESAMPLES {
                    let far_depot = dist(p, self.depot) > OUTLIER_CLEARANCE;
                    let far_centers = self.centers.iter().all(|c| dist(p, *c) > OUTLIER_CLEARANCE);
                    if far_depot && far_centers {
                        break;
                    }
                    p = [rng.random(), rng.random()];
                }
                (p, self.nearest_center(p))
            }
        }
    }
}

/// Feasibility bounds `(L_j, U_j)` of a customer whose depot travel time is
/// `travel`: it can be reached by `L_j` and must start service by `U_j` to
/// return before the horizon.
pub fn feasibility_bounds(travel: f64, t_max: f64, service: f64) -> (f64, f64) {
    (travel, t_max - travel - service)
}

/// Window of a constrained customer with phase `phase` in `[0, 1]` and
/// sampled relative width `omega`.
pub fn constrained_window(lower: f64, upper: f64, phase: f64, omega: f64, min_width: f64) -> (f64, f64) {
    let center = lower + phase * (upper - lower);
    let width = min_width.max(omega * (upper - lower));
    (lower.max(center - 0.5 * width), upper.min(center + 0.5 * width))
}

struct Node {
    unit: [f64; 2],
    cluster: usize,
    travel: f64,
}

/// Generates a CVRPTW instance with `n` customers from `latents`.
///
/// Deterministic in `latents.rng_seed`.
pub fn generate_cvrptw(latents: &GeneratorLatents, n: usize) -> Result<RoutingInstance> {
    if n == 0 {
        return Err(Error::InvalidInstance("customer count must be at least 1".into()));
    }
    latents.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(latents.rng_seed);
    let scale = latents.spatial_scale;
    let t_max = latents.horizon();
    let service = latents.service_time();

    let depot = [0.25 + 0.5 * rng.random::<f64>(), 0.25 + 0.5 * rng.random::<f64>()];
    let centers: Vec<[f64; 2]> = (0..latents.clusters)
        .map(|_| [0.1 + 0.8 * rng.random::<f64>(), 0.1 + 0.8 * rng.random::<f64>()])
        .collect();
    let spreads = (0..latents.clusters)
        .map(|_| 0.02 + 0.06 * rng.random::<f64>())
        .collect();
    let corridor = (
        [rng.random::<f64>(), rng.random::<f64>()],
        [rng.random::<f64>(), rng.random::<f64>()],
    );
    let layout = Layout {
        depot,
        centers,
        spreads,
        corridor,
    };

    let mut nodes = Vec::with_capacity(n);
    for j in 0..n {
        let component = pick(&mut rng, &latents.pi_space);
        let mut placed = None;
        for _ in 0..POSITION_RETRIES {
            let (unit, cluster) = layout.sample(component, &mut rng);
            let travel = latents.time_coef * scale * dist(unit, depot);
            let (lower, upper) = feasibility_bounds(travel, t_max, service);
            if upper >= lower {
                placed = Some(Node { unit, cluster, travel });
                break;
            }
        }
        match placed {
            Some(node) => nodes.push(node),
            None => {
                return Err(Error::Generator {
                    customer: j + 1,
                    message: format!(
                        "no position with U >= L after {POSITION_RETRIES} retries \
                         (T_max {t_max:.3}, service {service:.3}); horizon too tight"
                    ),
                })
            }
        }
    }

    let max_radius = nodes.iter().map(|nd| dist(nd.unit, depot)).fold(0.0f64, f64::max);
    let phase_noise = Normal::new(0.0, latents.phase_noise).expect("finite std");
    let width_components: Vec<Beta<f64>> = WIDTH_BETAS
        .iter()
        .map(|&(a, b)| Beta::new(a, b).expect("valid beta"))
        .collect();

    let mut customers = Vec::with_capacity(n);
    for nd in &nodes {
        let (lower, upper) = feasibility_bounds(nd.travel, t_max, service);
        let psi_cluster = if latents.clusters > 1 {
            nd.cluster as f64 / (latents.clusters - 1) as f64
        } else {
            0.0
        };
        let psi_radial = if max_radius > 0.0 {
            dist(nd.unit, depot) / max_radius
        } else {
            0.0
        };
        let angle = (nd.unit[1] - depot[1]).atan2(nd.unit[0] - depot[0]);
        let psi_angular = (angle + PI) / (2.0 * PI);
        let psi_rand: f64 = rng.random();
        let psi = [psi_cluster, psi_radial, psi_angular, psi_rand];
        let mixed: f64 = latents.pi_phase.iter().zip(psi).map(|(w, p)| w * p).sum();
        let phase = (mixed + phase_noise.sample(&mut rng)).clamp(0.0, 1.0);

        let constrained = rng.random_bool(latents.constrained_fraction);
        let width_component = pick(&mut rng, &latents.pi_width);
        let omega = width_components[width_component].sample(&mut rng);
        let demand = rng.random_range(1..=9) as f64;

        let (open, close) = if constrained {
            constrained_window(lower, upper, phase, omega, latents.min_width)
        } else {
            let wide_close = t_max - service - nd.travel;
            (0.0f64.clamp(lower, upper), wide_close.clamp(lower, upper))
        };
        customers.push(CustomerRecord {
            position: [scale * nd.unit[0], scale * nd.unit[1]],
            demand: demand.min(latents.capacity),
            window_open: open,
            window_close: close,
            service_time: service,
        });
    }

    Ok(RoutingInstance {
        task: Task::Cvrptw,
        depot: [scale * depot[0], scale * depot[1]],
        customers,
        capacity: Some(latents.capacity),
        horizon: Some(t_max),
        distance_rule: DistanceRule::Exact,
        name: format!("gen-n{n}-s{}", latents.rng_seed),
        time_factor: latents.time_coef,
        spatial_scale: Some(scale),
    })
}

/// Random training instance for any task. CVRPTW instances come from the
/// procedural generator with latents drawn from the default prior; TSP and CVRP
/// instances are uniform in a 100×100 square with demands in `1..=9`.
pub fn random_instance(task: Task, n: usize, seed: u64) -> Result<RoutingInstance> {
    if task == Task::Cvrptw {
        return generate_cvrptw(&LatentPrior::default().sample(seed), n);
    }
    if n == 0 {
        return Err(Error::InvalidInstance("customer count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = || [100.0 * rng.random::<f64>(), 100.0 * rng.random::<f64>()];
    let depot = point();
    let positions: Vec<[f64; 2]> = (0..n).map(|_| point()).collect();
    let customers = positions
        .into_iter()
        .map(|p| CustomerRecord {
            demand: if task == Task::Cvrp {
                rng.random_range(1..=9) as f64
            } else {
                0.0
            },
            ..CustomerRecord::at(p)
        })
        .collect();
    let capacity = match n {
        0..=20 => 30.0,
        21..=50 => 40.0,
        _ => 50.0,
    };
    Ok(RoutingInstance {
        task,
        depot,
        customers,
        capacity: (task == Task::Cvrp).then_some(capacity),
        horizon: None,
        distance_rule: DistanceRule::Exact,
        name: format!("{}-n{n}-s{seed}", task.to_string().to_lowercase()),
        time_factor: 1.0,
        spatial_scale: None,
    })
}
