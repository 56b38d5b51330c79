use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Encoded, Forward};
use super::PolicyParams;
use crate::autodiff::{log_sum_exp, Var};
use crate::consequences::{candidate_features, step_summary, ConsequenceTable, SUMMARY_DIM};
use crate::error::{contract, Error, Result};
use crate::instances::RoutingInstance;
use crate::mdp::{ConstructionState, RoutingEnv, Solution};

/// How actions are chosen during a rollout.
pub enum DecodeMode<'a> {
    /// Highest logit; ties go to the lowest node id.
    Greedy,
    /// Multinomial sampling from `softmax(u / temperature)`; a temperature of
    /// zero falls back to greedy.
    Sample { rng: &'a mut ChaCha8Rng, temperature: f64 },
    /// Replays a fixed action sequence.
    Forced(&'a [usize]),
}

/// Action sequence plus the rollout code it was generated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub code: Vec<f64>,
}

/// Per-step quantities kept for diagnostics.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub progress: f64,
    pub feasible_customers: usize,
    pub actions: Vec<usize>,
    pub probs: Vec<f64>,
    pub chosen: usize,
    pub alpha: f64,
    pub base: Vec<f64>,
    pub local: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
}

pub struct RolloutOutput {
    pub trajectory: Trajectory,
    pub solution: Solution,
    pub cost: f64,
    pub log_prob: f64,
    /// Tape node holding `Σ log π`, present when recording.
    pub log_prob_var: Option<Var>,
    pub steps: Vec<StepRecord>,
}

/// Frozen policy whose unclipped logits anchor score morphing.
pub struct Reference<'r> {
    fwd: Forward<'r>,
    enc: Encoded,
    pub lambda: f64,
}

impl<'r> Reference<'r> {
    pub fn new(params: &'r PolicyParams, inst: &RoutingInstance, lambda: f64) -> Self {
        let mut fwd = Forward::new(params);
        fwd.clip = false;
        let enc = fwd.encode(inst);
        Self { fwd, enc, lambda }
    }

    fn logits(
        &mut self,
        env: &RoutingEnv,
        state: &ConstructionState,
        table: &ConsequenceTable,
        summary: &[f64; SUMMARY_DIM],
        code: &[f64],
    ) -> Result<Vec<f64>> {
        let mark = self.fwd.tape.len();
        let ev = self.fwd.step(&self.enc, env, state, table, summary, code, None)?;
        let u = self.fwd.tape.value(ev.logits).data.clone();
        self.fwd.tape.truncate(mark);
        Ok(u)
    }
}

/// Rollout code: zeros for rollout 0, random bits otherwise.
pub fn rollout_code(rng: &mut ChaCha8Rng, dim: usize, index: usize) -> Vec<f64> {
    if index == 0 {
        vec![0.0; dim]
    } else {
        (0..dim).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect()
    }
}

fn greedy_index(logits: &[f64], actions: &[usize]) -> usize {
    let mut best = 0;
    for k in 1..logits.len() {
        if logits[k] > logits[best] || (logits[k] == logits[best] && actions[k] < actions[best]) {
            best = k;
        }
    }
    best
}

fn sample_index(rng: &mut ChaCha8Rng, logits: &[f64], temperature: f64) -> usize {
    let scaled: Vec<f64> = logits.iter().map(|u| u / temperature).collect();
    let lse = log_sum_exp(&scaled);
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (k, s) in scaled.iter().enumerate() {
        acc += (s - lse).exp();
        if draw < acc {
            return k;
        }
    }
    scaled.len() - 1
}

/// Runs one construction from the initial state. With `record`, every step
/// stays on the tape and `log_prob_var` can be differentiated; otherwise each
/// step is discarded after use.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    fwd: &mut Forward,
    enc: &Encoded,
    env: &RoutingEnv,
    code: &[f64],
    mut mode: DecodeMode,
    mut reference: Option<&mut Reference>,
    record: bool,
    collect_steps: bool,
) -> Result<RolloutOutput> {
    let mut state = env.initial_state();
    let mut log_prob = 0.0;
    let mut log_prob_var: Option<Var> = None;
    let mut actions_taken = Vec::new();
    let mut steps = Vec::new();
    while !env.is_terminal(&state) {
        let mask = env.feasible_actions(&state)?;
        let table = candidate_features(env, &state, &mask);
        let summary = step_summary(env, &state, &table);
        let u_ref = match reference.as_deref_mut() {
            Some(r) => Some((r.logits(env, &state, &table, &summary, code)?, r.lambda)),
            None => None,
        };
        let mark = fwd.tape.len();
        let ev = fwd.step(
            enc,
            env,
            &state,
            &table,
            &summary,
            code,
            u_ref.as_ref().map(|(u, l)| (u.as_slice(), *l)),
        )?;
        let logits = fwd.tape.value(ev.logits).data.clone();
        let idx = match &mut mode {
            DecodeMode::Greedy => greedy_index(&logits, &ev.actions),
            DecodeMode::Sample { temperature, .. } if *temperature <= 0.0 => greedy_index(&logits, &ev.actions),
            DecodeMode::Sample { rng, temperature } => sample_index(rng, &logits, *temperature),
            DecodeMode::Forced(seq) => {
                let want = *seq
                    .get(actions_taken.len())
                    .ok_or_else(|| contract("forced trajectory ended before the construction"))?;
                ev.actions
                    .iter()
                    .position(|&a| a == want)
                    .ok_or_else(|| contract(format!("forced action {want} is not feasible")))?
            }
        };
        let lse = log_sum_exp(&logits);
        log_prob += logits[idx] - lse;
        if record {
            let lp = fwd.tape.log_softmax_pick(ev.logits, idx);
            log_prob_var = Some(match log_prob_var {
                Some(acc) => fwd.tape.add(acc, lp),
                None => lp,
            });
        }
        if collect_steps {
            let vals = |v: Var| fwd.tape.value(v).data.clone();
            steps.push(StepRecord {
                step: state.step,
                progress: state.visited_customers as f64 / env.num_customers().max(1) as f64,
                feasible_customers: table.len(),
                actions: ev.actions.clone(),
                probs: logits.iter().map(|u| (u - lse).exp()).collect(),
                chosen: ev.actions[idx],
                alpha: fwd.tape.scalar(ev.alpha),
                base: vals(ev.base),
                local: ev.local.map(vals),
                v: ev.v.map(vals),
            });
        }
        if !record {
            fwd.tape.truncate(mark);
        }
        let action = ev.actions[idx];
        env.step(&mut state, action)?;
        actions_taken.push(action);
    }
    if let DecodeMode::Forced(seq) = mode {
        if seq.len() != actions_taken.len() {
            return Err(contract("forced trajectory is longer than the construction"));
        }
    }
    Ok(RolloutOutput {
        trajectory: Trajectory {
            actions: actions_taken,
            code: code.to_vec(),
        },
        solution: env.to_solution(&state)?,
        cost: env.cost(&state),
        log_prob,
        log_prob_var,
        steps,
    })
}

/// `Σ_t log π(a_t | s_t)` of a fixed trajectory.
pub fn logprob(params: &PolicyParams, inst: &RoutingInstance, traj: &Trajectory) -> Result<f64> {
    let env = RoutingEnv::new(inst);
    let mut fwd = Forward::new(params);
    let enc = fwd.encode(inst);
    let out = rollout(
        &mut fwd,
        &enc,
        &env,
        &traj.code,
        DecodeMode::Forced(&traj.actions),
        None,
        false,
        false,
    )?;
    Ok(out.log_prob)
}

/// `Σ_t log π(a_t | s_t)` and its gradient with respect to the flat parameter
/// vector. Features are treated as constants.
pub fn logprob_and_grad(params: &PolicyParams, inst: &RoutingInstance, traj: &Trajectory) -> Result<(f64, Vec<f64>)> {
    let env = RoutingEnv::new(inst);
    let mut fwd = Forward::new(params);
    let enc = fwd.encode(inst);
    let out = rollout(
        &mut fwd,
        &enc,
        &env,
        &traj.code,
        DecodeMode::Forced(&traj.actions),
        None,
        true,
        false,
    )?;
    let root = out.log_prob_var.ok_or_else(|| contract("empty trajectory"))?;
    let mut grad = vec![0.0; params.len()];
    fwd.tape.accumulate_param_grads(root, &mut grad);
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            param: params.describe(i),
        });
    }
    Ok((fwd.tape.scalar(root), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_cvrptw, GeneratorLatents, Task};
    use crate::mdp::verify_solution;
    use crate::policy::PolicyConfig;
    use rand::SeedableRng;

    fn inst() -> RoutingInstance {
        generate_cvrptw(&GeneratorLatents::default(), 6).unwrap()
    }

    #[test]
    fn sampled_rollout_is_feasible_and_replayable() {
        let inst = inst();
        let env = RoutingEnv::new(&inst);
        let params = PolicyParams::new(PolicyConfig::small(Task::Cvrptw, 8), 7).unwrap();
        let mut fwd = Forward::new(&params);
        let enc = fwd.encode(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let code = rollout_code(&mut rng, 4, 1);
        let out = rollout(
            &mut fwd,
            &enc,
            &env,
            &code,
            DecodeMode::Sample {
                rng: &mut rng,
                temperature: 1.0,
            },
            None,
            false,
            false,
        )
        .unwrap();
        assert!(verify_solution(&out.solution, &inst).is_feasible());
        let lp = logprob(&params, &inst, &out.trajectory).unwrap();
        assert!((lp - out.log_prob).abs() < 1e-12);
    }

    #[test]
    fn duplicate_trajectory_doubles_gradient() {
        let inst = inst();
        let params = PolicyParams::new(PolicyConfig::small(Task::Cvrptw, 8), 8).unwrap();
        let env = RoutingEnv::new(&inst);
        let mut fwd = Forward::new(&params);
        let enc = fwd.encode(&inst);
        let code = vec![0.0; 4];
        let a = rollout(&mut fwd, &enc, &env, &code, DecodeMode::Greedy, None, true, false).unwrap();
        let b = rollout(
            &mut fwd,
            &enc,
            &env,
            &code,
            DecodeMode::Forced(&a.trajectory.actions),
            None,
            true,
            false,
        )
        .unwrap();
        let sum = fwd.tape.add(a.log_prob_var.unwrap(), b.log_prob_var.unwrap());
        let mut g2 = vec![0.0; params.len()];
        fwd.tape.accumulate_param_grads(sum, &mut g2);
        let (_, g1) = logprob_and_grad(&params, &inst, &a.trajectory).unwrap();
        for (x, y) in g1.iter().zip(&g2) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn zero_temperature_matches_greedy() {
        let inst = inst();
        let env = RoutingEnv::new(&inst);
        let params = PolicyParams::new(PolicyConfig::small(Task::Cvrptw, 8), 9).unwrap();
        let mut fwd = Forward::new(&params);
        let enc = fwd.encode(&inst);
        let code = vec![0.0; 4];
        let g = rollout(&mut fwd, &enc, &env, &code, DecodeMode::Greedy, None, false, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = rollout(
            &mut fwd,
            &enc,
            &env,
            &code,
            DecodeMode::Sample {
                rng: &mut rng,
                temperature: 0.0,
            },
            None,
            false,
            false,
        )
        .unwrap();
        assert_eq!(g.trajectory, s.trajectory);
    }

    #[test]
    fn full_morph_equals_plain_scoring() {
        let inst = inst();
        let env = RoutingEnv::new(&inst);
        let params = PolicyParams::new(PolicyConfig::small(Task::Cvrptw, 8), 10).unwrap();
        let reference_params = PolicyParams::new(PolicyConfig::small(Task::Cvrptw, 8), 11).unwrap();
        let mut fwd = Forward::new(&params);
        let enc = fwd.encode(&inst);
        let code = vec![0.0; 4];
        let plain = rollout(&mut fwd, &enc, &env, &code, DecodeMode::Greedy, None, false, false).unwrap();
        let mut r = Reference::new(&reference_params, &inst, 1.0);
        let morphed = rollout(
            &mut fwd,
            &enc,
            &env,
            &code,
            DecodeMode::Greedy,
            Some(&mut r),
            false,
            false,
        )
        .unwrap();
        assert_eq!(plain.trajectory, morphed.trajectory);
        assert!((plain.log_prob - morphed.log_prob).abs() < 1e-12);
    }
}
