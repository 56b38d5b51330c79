//! REINFORCE with K-rollout groups.
//!
//! Each instance is rolled out `K` times under distinct rollout codes. Costs
//! are scaled by the batch median and turned into advantages (soft top-1,
//! hard top-1 or group mean); the loss `−Σ A_i log π(ξ_i)` is differentiated
//! on one tape per instance and the per-instance gradients are summed in
//! instance order, so results do not depend on the worker count.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{random_instance, RoutingInstance, Task};
use crate::mdp::RoutingEnv;
use crate::policy::{rollout, rollout_code, DecodeMode, Forward, PolicyParams, Reference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    SoftTop1,
    HardTop1,
    GroupMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: Task,
    pub advantage: AdvantageMode,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Epochs over which `λ_morph` ramps from 0 to 1; 0 disables morphing.
    pub morph_epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rollouts: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    pub customers: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Cvrptw,
            advantage: AdvantageMode::SoftTop1,
            tau_start: 4.0,
            tau_end: 0.25,
            morph_epochs: 0,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-3,
            batch_size: 16,
            rollouts: 8,
            batches_per_epoch: 8,
            epochs: 30,
            customers: 10,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Training(m.to_string()));
        if !(self.tau_start >= self.tau_end && self.tau_end > 0.0) {
            return bad("need tau_start >= tau_end > 0");
        }
        if self.rollouts < 2 {
            return bad("at least two rollouts per instance are required");
        }
        if self.batch_size == 0 || self.batches_per_epoch == 0 {
            return bad("batch_size and batches_per_epoch must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.customers == 0 {
            return bad("customers must be positive");
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.batches_per_epoch
    }

    /// Steps over which τ decays: the first 1/300 of training, at least one.
    pub fn tau_decay_steps(&self) -> usize {
        self.total_steps().div_ceil(300).max(1)
    }

    /// Exponential decay from `tau_start` to `tau_end`, then constant.
    pub fn tau_at(&self, step: usize) -> f64 {
        let frac = (step as f64 / self.tau_decay_steps() as f64).min(1.0);
        self.tau_start * (self.tau_end / self.tau_start).powf(frac)
    }

    /// Linear ramp of the morphing weight.
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        if self.morph_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / self.morph_epochs as f64).min(1.0)
        }
    }
}

fn check_group(costs: &[f64]) -> Result<()> {
    if costs.len() < 2 {
        return Err(Error::Training(format!(
            "group of {} rollouts; need at least 2",
            costs.len()
        )));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Training("non-finite rollout cost".into()));
    }
    Ok(())
}

/// `−τ log((1/|S|) Σ_{j∈S} exp(−ĉ_j/τ))`, evaluated around the minimum cost so
/// that large temperatures keep full precision.
fn soft_min(scaled: &[f64], tau: f64, skip: Option<usize>) -> f64 {
    let vals = || {
        scaled
            .iter()
            .enumerate()
            .filter(move |(i, _)| Some(*i) != skip)
            .map(|(_, c)| *c)
    };
    let min = vals().fold(f64::INFINITY, f64::min);
    let count = vals().count() as f64;
    let mean_expm1 = vals().map(|c| (-(c - min) / tau).exp_m1()).sum::<f64>() / count;
    min - tau * mean_expm1.ln_1p()
}

/// Soft top-1 advantages `A_i = (K−1)(m_loo(i) − m_all)` on costs scaled by
/// `s_scale`.
pub fn soft_top1_advantage(costs: &[f64], tau: f64, s_scale: f64) -> Result<Vec<f64>> {
    check_group(costs)?;
    if !(tau > 0.0 && s_scale > 0.0) {
        return Err(Error::Training("tau and cost scale must be positive".into()));
    }
    let k = costs.len();
    let scaled: Vec<f64> = costs.iter().map(|c| c / s_scale).collect();
    let m_all = soft_min(&scaled, tau, None);
    Ok((0..k)
        .map(|i| (k as f64 - 1.0) * (soft_min(&scaled, tau, Some(i)) - m_all))
        .collect())
}

/// Mean-centered one-hot on the cheapest rollout (lowest index on ties).
pub fn hard_top1_advantage(costs: &[f64]) -> Result<Vec<f64>> {
    check_group(costs)?;
    let k = costs.len();
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = i;
        }
    }
    Ok((0..k)
        .map(|i| f64::from(u8::from(i == best)) - 1.0 / k as f64)
        .collect())
}

/// `A_i = mean(c) − c_i`
pub fn group_mean_advantage(costs: &[f64]) -> Result<Vec<f64>> {
    check_group(costs)?;
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    Ok(costs.iter().map(|c| mean - c).collect())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Where training instances come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Fresh random instances per batch.
    Generated,
    /// A fixed pool cycled in order.
    Fixed(Vec<RoutingInstance>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_cost: f64,
    pub mean_abs_advantage: f64,
    pub grad_norm: f64,
    pub tau: f64,
    pub lambda_morph: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub mean_cost: f64,
    pub mean_abs_advantage: f64,
    pub grad_norm: f64,
}

/// SplitMix64 finalizer used to derive independent stream seeds.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub params: PolicyParams,
    reference: Option<PolicyParams>,
    adam: Option<Adam>,
    pub step: usize,
    pub epoch: usize,
    pool: Option<rayon::ThreadPool>,
}

struct InstanceRollouts<'p> {
    fwd: Forward<'p>,
    costs: Vec<f64>,
    log_probs: Vec<crate::autodiff::Var>,
}

impl Trainer {
    pub fn new(config: TrainConfig, params: PolicyParams) -> Result<Self> {
        config.validate()?;
        if params.config.task != config.task {
            return Err(Error::Training("policy task differs from training task".into()));
        }
        let reference = (config.morph_epochs > 0).then(|| params.clone());
        let adam = (config.optimizer == OptimizerKind::Adam).then(|| Adam {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            t: 0,
        });
        Ok(Self {
            config,
            params,
            reference,
            adam,
            step: 0,
            epoch: 0,
            pool: None,
        })
    }

    /// Freezes `reference` as the morphing anchor.
    pub fn with_reference(mut self, reference: PolicyParams) -> Self {
        self.reference = Some(reference);
        self
    }

    /// Runs on a dedicated pool of `jobs` workers instead of the global one.
    pub fn with_jobs(mut self, jobs: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Training(e.to_string()))?;
        self.pool = Some(pool);
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.config.tau_at(self.step)
    }

    pub fn lambda_morph(&self) -> f64 {
        self.config.lambda_at(self.epoch)
    }

    fn batch(&self, data: &DataSource, batch_idx: usize) -> Result<Vec<RoutingInstance>> {
        let cfg = &self.config;
        match data {
            DataSource::Generated => (0..cfg.batch_size)
                .map(|i| {
                    let seed = derive_seed(cfg.seed, self.step as u64, i as u64);
                    random_instance(cfg.task, cfg.customers, seed)
                })
                .collect(),
            DataSource::Fixed(pool) => {
                if pool.is_empty() {
                    return Err(Error::Training("empty training set".into()));
                }
                let start = batch_idx * cfg.batch_size;
                Ok((0..cfg.batch_size)
                    .map(|i| pool[(start + i) % pool.len()].clone())
                    .collect())
            }
        }
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    /// One gradient update on `batch`.
    pub fn train_step(&mut self, batch: &[RoutingInstance]) -> Result<StepStats> {
        let cfg = self.config.clone();
        let tau = self.tau();
        let lambda = self.lambda_morph();
        let step = self.step;
        let params = &self.params;
        let reference = self.reference.as_ref().filter(|_| lambda < 1.0);

        // Phase 1: sample every rollout on a per-instance tape.
        let rollouts_for = |i: usize, inst: &RoutingInstance| -> Result<InstanceRollouts> {
            let env = RoutingEnv::new(inst);
            let mut fwd = Forward::new(params);
            let enc = fwd.encode(inst);
            let mut reference = reference.map(|r| Reference::new(r, inst, lambda));
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ 0x5eed, step as u64, i as u64));
            let mut costs = Vec::with_capacity(cfg.rollouts);
            let mut log_probs = Vec::with_capacity(cfg.rollouts);
            for k in 0..cfg.rollouts {
                let code = rollout_code(&mut rng, params.config.code_dim, k);
                let out = rollout(
                    &mut fwd,
                    &enc,
                    &env,
                    &code,
                    DecodeMode::Sample {
                        rng: &mut rng,
                        temperature: cfg.temperature,
                    },
                    reference.as_mut(),
                    true,
                    false,
                )?;
                costs.push(out.cost);
                log_probs.push(out.log_prob_var.expect("recorded rollout"));
            }
            Ok(InstanceRollouts { fwd, costs, log_probs })
        };
        let mut groups: Vec<InstanceRollouts> = self.install(|| {
            batch
                .par_iter()
                .enumerate()
                .map(|(i, inst)| rollouts_for(i, inst))
                .collect::<Result<Vec<_>>>()
        })?;
        let all_costs: Vec<f64> = groups.iter().flat_map(|g| g.costs.iter().copied()).collect();
        let s_scale = median(&all_costs);
        if s_scale.is_nan() || s_scale <= 0.0 {
            return Err(Error::Training(format!("batch median cost {s_scale} is not positive")));
        }

        // Phase 2: advantages and the reverse sweep of each tape.
        let weight = 1.0 / (batch.len() * cfg.rollouts) as f64;
        let n_params = params.len();
        let grad_for = |g: &mut InstanceRollouts| -> Result<(Vec<f64>, f64)> {
            let adv = match cfg.advantage {
                AdvantageMode::SoftTop1 => soft_top1_advantage(&g.costs, tau, s_scale)?,
                AdvantageMode::HardTop1 => hard_top1_advantage(&g.costs)?,
                AdvantageMode::GroupMean => {
                    let scaled: Vec<f64> = g.costs.iter().map(|c| c / s_scale).collect();
                    group_mean_advantage(&scaled)?
                }
            };
            let tape = &mut g.fwd.tape;
            let mut loss = None;
            for (lp, a) in g.log_probs.iter().zip(&adv) {
                let term = tape.scale(*lp, -a * weight);
                loss = Some(match loss {
                    Some(acc) => tape.add(acc, term),
                    None => term,
                });
            }
            let mut grad = vec![0.0; n_params];
            tape.accumulate_param_grads(loss.expect("rollouts > 0"), &mut grad);
            Ok((grad, adv.iter().map(|a| a.abs()).sum::<f64>()))
        };
        let per_instance: Vec<(Vec<f64>, f64)> =
            self.install(|| groups.par_iter_mut().map(grad_for).collect::<Result<Vec<_>>>())?;
        drop(groups);

        let mut grad = vec![0.0; self.params.len()];
        let mut abs_adv = 0.0;
        for (g, a) in &per_instance {
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
            abs_adv += a;
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: self.params.describe(i),
            });
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        self.apply(&grad);
        self.step += 1;
        Ok(StepStats {
            mean_cost: all_costs.iter().sum::<f64>() / all_costs.len() as f64,
            mean_abs_advantage: abs_adv / all_costs.len() as f64,
            grad_norm,
        })
    }

    fn apply(&mut self, grad: &[f64]) {
        let lr = self.config.learning_rate;
        match &mut self.adam {
            None => {
                for (p, g) in self.params.data.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Some(adam) => {
                let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
                adam.t += 1;
                let c1 = 1.0 - b1.powi(adam.t);
                let c2 = 1.0 - b2.powi(adam.t);
                for i in 0..grad.len() {
                    adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * grad[i];
                    adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * grad[i] * grad[i];
                    let mh = adam.m[i] / c1;
                    let vh = adam.v[i] / c2;
                    self.params.data[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }

    pub fn train_epoch(&mut self, data: &DataSource) -> Result<EpochMetrics> {
        let mut cost = 0.0;
        let mut adv = 0.0;
        let mut norm = 0.0;
        let tau = self.tau();
        let lambda = self.lambda_morph();
        let batches = self.config.batches_per_epoch;
        for b in 0..batches {
            let batch = self.batch(data, self.epoch * batches + b)?;
            let s = self.train_step(&batch)?;
            cost += s.mean_cost;
            adv += s.mean_abs_advantage;
            norm += s.grad_norm;
        }
        let n = batches as f64;
        let m = EpochMetrics {
            epoch: self.epoch,
            mean_cost: cost / n,
            mean_abs_advantage: adv / n,
            grad_norm: norm / n,
            tau,
            lambda_morph: lambda,
        };
        self.epoch += 1;
        Ok(m)
    }

    /// Runs the remaining configured epochs, calling `on_epoch` after each.
    pub fn fit(&mut self, data: &DataSource, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<Vec<EpochMetrics>> {
        let mut out = Vec::new();
        while self.epoch < self.config.epochs {
            let m = self.train_epoch(data)?;
            on_epoch(&m);
            out.push(m);
        }
        Ok(out)
    }
}

/// Writes metrics as CSV: epoch, mean_cost, grad_norm, tau, lambda_morph.
pub fn write_metrics_csv<W: Write>(metrics: &[EpochMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "mean_cost", "grad_norm", "tau", "lambda_morph"])?;
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            format!("{:.6}", m.mean_cost),
            format!("{:.6}", m.grad_norm),
            format!("{:.6}", m.tau),
            format!("{:.6}", m.lambda_morph),
        ])?;
    }
    w.flush()?;
    Ok(())
}
