//! Decoding strategies: greedy, sampling, 8-fold dihedral augmentation and a
//! plain beam search, plus benchmark evaluation and SVG route plots.

mod eval;
mod svg;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use eval::{evaluate_benchmark, load_references, DecodeKind, DecodeSettings, EvalReport, EvalRow};
pub use svg::solution_svg;

use crate::autodiff::log_sum_exp;
use crate::consequences::{candidate_features, step_summary};
use crate::error::{contract, Error, Result};
use crate::instances::RoutingInstance;
use crate::mdp::{ConstructionState, RoutingEnv, Solution};
use crate::policy::{rollout, rollout_code, DecodeMode, Forward, PolicyParams};
use crate::training::derive_seed;

fn check_task(inst: &RoutingInstance, params: &PolicyParams) -> Result<()> {
    if inst.task != params.config.task {
        return Err(Error::Checkpoint(format!(
            "policy was built for {} but the instance is {}",
            params.config.task, inst.task
        )));
    }
    Ok(())
}

/// Argmax decoding with the zero rollout code.
pub fn greedy_decode(inst: &RoutingInstance, params: &PolicyParams) -> Result<Solution> {
    check_task(inst, params)?;
    let env = RoutingEnv::new(inst);
    let mut fwd = Forward::new(params);
    let enc = fwd.encode(inst);
    let code = vec![0.0; params.config.code_dim];
    let out = rollout(&mut fwd, &enc, &env, &code, DecodeMode::Greedy, None, false, false)?;
    Ok(out.solution)
}

#[derive(Debug, Clone)]
pub struct SampleResult {
    pub best: Solution,
    /// Cost of every sample, in sample order.
    pub costs: Vec<f64>,
}

impl SampleResult {
    pub fn mean(&self) -> f64 {
        self.costs.iter().sum::<f64>() / self.costs.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.costs.iter().map(|c| (c - m).powi(2)).sum::<f64>() / self.costs.len() as f64).sqrt()
    }
}

/// Best of `count` sampled rollouts at temperature 1.
pub fn sample_decode(inst: &RoutingInstance, params: &PolicyParams, count: usize, seed: u64) -> Result<SampleResult> {
    sample_decode_with_temperature(inst, params, count, seed, 1.0)
}

/// Sample `i` uses its own stream derived from `(seed, i)`, so the first `N`
/// samples are identical for every budget `≥ N`.
pub fn sample_decode_with_temperature(
    inst: &RoutingInstance,
    params: &PolicyParams,
    count: usize,
    seed: u64,
    temperature: f64,
) -> Result<SampleResult> {
    check_task(inst, params)?;
    if count == 0 {
        return Err(contract("sample count must be at least 1"));
    }
    let env = RoutingEnv::new(inst);
    let mut fwd = Forward::new(params);
    let enc = fwd.encode(inst);
    let mut best: Option<Solution> = None;
    let mut costs = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 0));
        let code = rollout_code(&mut rng, params.config.code_dim, i);
        let out = rollout(
            &mut fwd,
            &enc,
            &env,
            &code,
            DecodeMode::Sample {
                rng: &mut rng,
                temperature,
            },
            None,
            false,
            false,
        )?;
        costs.push(out.cost);
        if best.as_ref().is_none_or(|b| out.cost < b.distance) {
            best = Some(out.solution);
        }
    }
    Ok(SampleResult {
        best: best.expect("count >= 1"),
        costs,
    })
}

/// Applies dihedral symmetry `k` (0..8) of the unit square to coordinates
/// normalized by the instance bounding box, then maps them back.
pub fn dihedral_transform(inst: &RoutingInstance, k: usize) -> RoutingInstance {
    let n = inst.num_nodes();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..n {
        let p = inst.position(i);
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let span = if span > 0.0 { span } else { 1.0 };
    let map = |p: [f64; 2]| -> [f64; 2] {
        let (u, v) = ((p[0] - lo[0]) / span, (p[1] - lo[1]) / span);
        let (a, b) = match k % 8 {
            0 => (u, v),
            1 => (v, 1.0 - u),
            2 => (1.0 - u, 1.0 - v),
            3 => (1.0 - v, u),
            4 => (1.0 - u, v),
            5 => (u, 1.0 - v),
            6 => (v, u),
            _ => (1.0 - v, 1.0 - u),
        };
        [lo[0] + a * span, lo[1] + b * span]
    };
    let mut out = inst.clone();
    out.depot = map(inst.depot);
    for c in &mut out.customers {
        c.position = map(c.position);
    }
    out
}

/// Greedy decoding on each of `folds` dihedral images (1 or 8); routes are
/// re-costed on the original instance and the cheapest is returned.
pub fn augmented_multistart(inst: &RoutingInstance, params: &PolicyParams, folds: usize) -> Result<Solution> {
    if folds != 1 && folds != 8 {
        return Err(contract("folds must be 1 or 8"));
    }
    let mut best = greedy_decode(inst, params)?;
    for k in 1..folds {
        let image = dihedral_transform(inst, k);
        let sol = greedy_decode(&image, params)?;
        let sol = Solution::from_routes(inst, sol.routes);
        if crate::mdp::verify_solution(&sol, inst).is_feasible() && sol.distance < best.distance {
            best = sol;
        }
    }
    Ok(best)
}

struct Beam {
    state: ConstructionState,
    log_prob: f64,
}

/// Beam search on cumulative log-probability. The returned solution is the
/// cheapest among finished beams and the greedy decode, so it never costs
/// more than greedy.
pub fn beam_decode(inst: &RoutingInstance, params: &PolicyParams, width: usize) -> Result<Solution> {
    check_task(inst, params)?;
    if width == 0 {
        return Err(contract("beam width must be at least 1"));
    }
    let env = RoutingEnv::new(inst);
    let mut fwd = Forward::new(params);
    let enc = fwd.encode(inst);
    let code = vec![0.0; params.config.code_dim];

    let mut active = vec![Beam {
        state: env.initial_state(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Solution> = Vec::new();
    while !active.is_empty() {
        // (score, beam index, action)
        let mut pool: Vec<(f64, usize, usize)> = Vec::new();
        for (b, beam) in active.iter().enumerate() {
            let mask = env.feasible_actions(&beam.state)?;
            let table = candidate_features(&env, &beam.state, &mask);
            let summary = step_summary(&env, &beam.state, &table);
            let mark = fwd.tape.len();
            let ev = fwd.step(&enc, &env, &beam.state, &table, &summary, &code, None)?;
            let logits = fwd.tape.value(ev.logits).data.clone();
            fwd.tape.truncate(mark);
            let lse = log_sum_exp(&logits);
            for (u, a) in logits.iter().zip(&ev.actions) {
                pool.push((beam.log_prob + u - lse, b, *a));
            }
        }
        pool.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        pool.truncate(width);
        let mut next = Vec::with_capacity(pool.len());
        for (score, b, a) in pool {
            let state = env.apply_action(&active[b].state, a)?;
            if env.is_terminal(&state) {
                finished.push(env.to_solution(&state)?);
            } else {
                next.push(Beam { state, log_prob: score });
            }
        }
        active = next;
    }
    let mut best = greedy_decode(inst, params)?;
    for sol in finished {
        if sol.distance < best.distance {
            best = sol;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_cvrptw, CustomerRecord, DistanceRule, GeneratorLatents, Task};
    use crate::mdp::verify_solution;
    use crate::policy::PolicyConfig;

    fn setup() -> (RoutingInstance, PolicyParams) {
        let inst = generate_cvrptw(&GeneratorLatents::default(), 8).unwrap();
        let params = PolicyParams::new(PolicyConfig::small(Task::Cvrptw, 8), 3).unwrap();
        (inst, params)
    }

    #[test]
    fn zero_policy_breaks_ties_by_node_id() {
        let inst = RoutingInstance {
            task: Task::Tsp,
            depot: [0.0, 0.0],
            customers: vec![CustomerRecord::at([1.0, 0.0]), CustomerRecord::at([0.0, 1.0])],
            capacity: None,
            horizon: None,
            distance_rule: DistanceRule::Exact,
            name: "tri".into(),
            time_factor: 1.0,
            spatial_scale: None,
        };
        let params = PolicyParams::zeros(PolicyConfig::small(Task::Tsp, 4)).unwrap();
        assert_eq!(greedy_decode(&inst, &params).unwrap().routes, vec![vec![1, 2]]);
    }

    #[test]
    fn greedy_is_deterministic_and_feasible() {
        let (inst, params) = setup();
        let a = greedy_decode(&inst, &params).unwrap();
        assert_eq!(a, greedy_decode(&inst, &params).unwrap());
        assert!(verify_solution(&a, &inst).is_feasible());
    }

    #[test]
    fn sampling_budget_is_monotone() {
        let (inst, params) = setup();
        let small = sample_decode(&inst, &params, 4, 9).unwrap();
        let large = sample_decode(&inst, &params, 16, 9).unwrap();
        assert_eq!(&large.costs[..4], &small.costs[..]);
        assert!(large.best.distance <= small.best.distance);
        assert!(verify_solution(&large.best, &inst).is_feasible());
    }

    #[test]
    fn beam_and_augmentation_bounds() {
        let (inst, params) = setup();
        let greedy = greedy_decode(&inst, &params).unwrap();
        assert_eq!(beam_decode(&inst, &params, 1).unwrap().routes, greedy.routes);
        let beam = beam_decode(&inst, &params, 16).unwrap();
        assert!(beam.distance <= greedy.distance);
        assert!(verify_solution(&beam, &inst).is_feasible());
        assert_eq!(augmented_multistart(&inst, &params, 1).unwrap(), greedy);
        let aug = augmented_multistart(&inst, &params, 8).unwrap();
        assert!(aug.distance <= greedy.distance);
        assert!(verify_solution(&aug, &inst).is_feasible());
        assert!(augmented_multistart(&inst, &params, 3).is_err());
    }

    #[test]
    fn dihedral_maps_preserve_distances() {
        let (inst, _) = setup();
        for k in 0..8 {
            let t = dihedral_transform(&inst, k);
            for a in 0..inst.num_nodes() {
                for b in 0..inst.num_nodes() {
                    assert!((t.distance(a, b) - inst.distance(a, b)).abs() < 1e-9);
                }
            }
        }
    }
}
