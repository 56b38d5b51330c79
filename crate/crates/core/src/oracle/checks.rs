use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{contract, Result};
use crate::instances::{random_instance, RoutingInstance, Task};
use crate::mdp::RoutingEnv;
use crate::policy::{
    logprob, logprob_and_grad, rollout, rollout_code, DecodeMode, Forward, LocalMode, PolicyConfig, PolicyParams,
    Trajectory,
};
use crate::training::{group_mean_advantage, soft_top1_advantage};

/// Outcome of a randomized numeric check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Largest deviation seen across all trials.
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The linear scorer `ℓ_j(X) = aᵀx_j + bᵀΣ_{u≠j} x_u` with `b = −a/(m−1)`.
fn canonical_scores(a: &[f64], x: &[Vec<f64>]) -> Vec<f64> {
    let m = x.len();
    let b: Vec<f64> = a.iter().map(|v| -v / (m as f64 - 1.0)).collect();
    let p = a.len();
    let total: Vec<f64> = (0..p).map(|k| x.iter().map(|r| r[k]).sum()).collect();
    x.iter()
        .map(|xj| {
            let others: Vec<f64> = (0..p).map(|k| total[k] - xj[k]).collect();
            dot(a, xj) + dot(&b, &others)
        })
        .collect()
}

/// Checks numerically that the equivariant linear scorer with zero-sum
/// weights equals `m/(m−1)·aᵀ(x_j − μ)`, sums to zero and commutes with
/// permutations of the rows.
pub fn canonical_scorer_check(m: usize, p: usize, trials: usize, seed: u64) -> Result<CheckReport> {
    if m < 2 || p == 0 {
        return Err(contract("canonical scorer check needs m >= 2 and p >= 1"));
    }
    let tol = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut max_error = 0.0f64;
    for _ in 0..trials {
        let a: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = normal_mat(&mut rng, m, p);
        let ell = canonical_scores(&a, &x);
        let mu: Vec<f64> = (0..p).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / m as f64).collect();
        let factor = m as f64 / (m as f64 - 1.0);
        let mut err = 0.0f64;
        for (j, xj) in x.iter().enumerate() {
            let centered: Vec<f64> = xj.iter().zip(&mu).map(|(v, u)| v - u).collect();
            err = err.max((ell[j] - factor * dot(&a, &centered)).abs());
        }
        err = err.max(ell.iter().sum::<f64>().abs());
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let ellp = canonical_scores(&a, &xp);
        for (k, &i) in perm.iter().enumerate() {
            err = err.max((ellp[k] - ell[i]).abs());
        }
        max_error = max_error.max(err);
        if err > tol {
            failures += 1;
        }
    }
    Ok(CheckReport {
        name: format!("canonical_scorer m={m} p={p}"),
        trials,
        failures,
        max_error,
        tolerance: tol,
    })
}

/// Checks that soft top-1 advantages at τ = 1e8 match group-mean advantages
/// on scaled costs, for groups of size 2, 4, 8 and 128.
pub fn soft_top1_limit_check(trials: usize, seed: u64) -> Result<CheckReport> {
    let tol = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [2usize, 4, 8, 128];
    let mut failures = 0;
    let mut max_error = 0.0f64;
    for t in 0..trials {
        let k = sizes[t % sizes.len()];
        let costs: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..10.0)).collect();
        let s_scale = crate::training::median(&costs);
        let soft = soft_top1_advantage(&costs, 1e8, s_scale)?;
        let scaled: Vec<f64> = costs.iter().map(|c| c / s_scale).collect();
        let hard = group_mean_advantage(&scaled)?;
        let err = soft.iter().zip(&hard).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        max_error = max_error.max(err);
        if err > tol {
            failures += 1;
        }
    }
    Ok(CheckReport {
        name: "soft_top1_limit".into(),
        trials,
        failures,
        max_error,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_error: f64,
    /// Parameter entry where the largest error occurs, as `slot[r,c]`.
    pub worst_param: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the analytic gradient of `log π(trajectory)` with central
/// differences. `indices` restricts the check to a subset of entries.
pub fn finite_diff_grad(
    params: &PolicyParams,
    inst: &RoutingInstance,
    traj: &Trajectory,
    h: f64,
    indices: Option<&[usize]>,
) -> Result<GradCheck> {
    if !(1e-6..=1e-4).contains(&h) {
        return Err(contract("finite-difference step must lie in [1e-6, 1e-4]"));
    }
    let (_, grad) = logprob_and_grad(params, inst, traj)?;
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let numeric = idx
        .par_iter()
        .map(|&i| -> Result<f64> {
            let mut p = params.clone();
            p.data[i] = params.data[i] + h;
            let up = logprob(&p, inst, traj)?;
            p.data[i] = params.data[i] - h;
            let down = logprob(&p, inst, traj)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: idx.len(),
    };
    for (&i, &num) in idx.iter().zip(&numeric) {
        let ana = grad[i];
        let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-3);
        if rel > out.max_rel_error || out.worst_param.is_empty() {
            out.max_rel_error = rel;
            out.worst_param = params.describe(i);
            out.analytic = ana;
            out.numeric = num;
        }
    }
    Ok(out)
}

/// A random width-8 network (task, variant flags and weights drawn from
/// `seed`) with an instance of 3 to 6 customers and one sampled trajectory.
pub fn random_gradient_case(seed: u64) -> Result<(PolicyParams, RoutingInstance, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let task = [Task::Tsp, Task::Cvrp, Task::Cvrptw][rng.random_range(0..3)];
    let mut config = PolicyConfig::small(task, 8);
    config.local = [
        LocalMode::Off,
        LocalMode::Centered,
        LocalMode::RawLinear,
        LocalMode::CenteredMlp,
        LocalMode::NaiveMlp,
    ][rng.random_range(0..5)];
    config.summary = rng.random();
    config.gate_attn = rng.random();
    config.depth_mixer = rng.random();
    config.clip_logits = rng.random();
    let params = PolicyParams::new(config, rng.random())?;
    let inst = random_instance(task, rng.random_range(3..=6), rng.random())?;
    let env = RoutingEnv::new(&inst);
    let mut fwd = Forward::new(&params);
    let enc = fwd.encode(&inst);
    let code = rollout_code(&mut rng, params.config.code_dim, 1);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let out = rollout(
        &mut fwd,
        &enc,
        &env,
        &code,
        DecodeMode::Sample {
            rng: &mut sample_rng,
            temperature: 1.0,
        },
        None,
        false,
        false,
    )?;
    Ok((params, inst, out.trajectory))
}

/// Finite-difference check (h = 1e-5) over `trials` random cases; fails a
/// case whose maximum relative error exceeds 1e-4.
pub fn gradient_check(trials: usize, seed: u64) -> Result<CheckReport> {
    let tol = 1e-4;
    let mut failures = 0;
    let mut max_error = 0.0f64;
    for t in 0..trials {
        let (params, inst, traj) = random_gradient_case(crate::training::derive_seed(seed, t as u64, 0))?;
        let g = finite_diff_grad(&params, &inst, &traj, 1e-5, None)?;
        max_error = max_error.max(g.max_rel_error);
        if g.max_rel_error > tol {
            failures += 1;
        }
    }
    Ok(CheckReport {
        name: "finite_difference_gradient".into(),
        trials,
        failures,
        max_error,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_scorer() {
        // m=2, p=1, a=1: ℓ₁ = x₁ − x₂ = 2(x₁ − μ)
        let ell = canonical_scores(&[1.0], &[vec![3.0], vec![0.5]]);
        assert!((ell[0] - 2.5).abs() < 1e-15 && (ell[1] + 2.5).abs() < 1e-15);
        let flat = canonical_scores(&[0.3, -0.7], &vec![vec![1.0, 2.0]; 4]);
        assert!(flat.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn checks_pass() {
        for m in 2..=4 {
            assert!(canonical_scorer_check(m, 3, 50, 1).unwrap().passed());
        }
        assert!(soft_top1_limit_check(40, 2).unwrap().passed());
        assert!(canonical_scorer_check(1, 3, 1, 0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let report = gradient_check(3, 11).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn linear_path_is_near_exact() {
        let (mut params, inst, traj) = random_gradient_case(5).unwrap();
        params.config.local = LocalMode::Centered;
        params.set_zero(&["gamma", "beta", "alpha", "cand"]);
        let idx = params.indices_with_prefix(&["w_phi"]);
        let g = finite_diff_grad(&params, &inst, &traj, 1e-5, Some(&idx)).unwrap();
        assert!(g.max_rel_error <= 1e-8, "{g:?}");
    }

    #[test]
    fn disabled_gate_has_zero_gradient() {
        let (mut params, inst, traj) = random_gradient_case(8).unwrap();
        params.config.gate_attn = false;
        let (_, grad) = logprob_and_grad(&params, &inst, &traj).unwrap();
        for i in params.indices_with_prefix(&["layer0.gate", "layer1.gate"]) {
            assert_eq!(grad[i], 0.0);
        }
    }
}
