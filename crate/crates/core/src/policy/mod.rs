//! The learnable scoring pipeline.
//!
//! A small attention encoder embeds the instance once. At each decoding step
//! the context `h` is modulated by the step summary (`γ`, `β`, `α`), and every
//! feasible action is scored as `α⟨h, k_j⟩ + ⟨h̃, W_φ φ_j⟩`, optionally morphed
//! towards a frozen reference and clipped.

mod checkpoint;
mod network;
mod params;
mod rollout;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::instances::Task;

pub use checkpoint::{Checkpoint, Normalization, CHECKPOINT_VERSION};
pub use network::{node_features, Encoded, Forward, StepEval};
pub use params::{PolicyParams, Slot};
pub use rollout::{
    logprob, logprob_and_grad, rollout, rollout_code, DecodeMode, Reference, RolloutOutput, StepRecord, Trajectory,
};

/// How the local consequence term enters the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMode {
    /// No local term: `u = α⟨h, k⟩`.
    Off,
    /// Shared linear comparator on centered features.
    Centered,
    /// Shared linear comparator on uncentered features.
    RawLinear,
    /// Candidate-wise MLP on `[h̃; centered φ]`.
    CenteredMlp,
    /// Candidate-wise MLP on `[h̃; raw φ]`.
    NaiveMlp,
}

impl LocalMode {
    pub fn centered(self) -> bool {
        matches!(self, LocalMode::Centered | LocalMode::CenteredMlp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub task: Task,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub mod_hidden: usize,
    pub cand_hidden: usize,
    pub code_dim: usize,
    pub local: LocalMode,
    pub summary: bool,
    pub gate_attn: bool,
    pub gate_lambda: f64,
    pub depth_mixer: bool,
    pub clip_logits: bool,
    pub clip_c: f64,
}

impl PolicyConfig {
    /// Desk-scale defaults: d=64, two layers, four heads.
    pub fn desk(task: Task) -> Self {
        Self {
            task,
            d_model: 64,
            layers: 2,
            heads: 4,
            ff_hidden: 128,
            mod_hidden: 64,
            cand_hidden: 64,
            code_dim: 16,
            local: LocalMode::Centered,
            summary: true,
            gate_attn: false,
            gate_lambda: 0.5,
            depth_mixer: false,
            clip_logits: false,
            clip_c: 10.0,
        }
    }

    /// A reduced network of width `d` used by tests and gradient checks.
    pub fn small(task: Task, d: usize) -> Self {
        Self {
            d_model: d,
            layers: 2,
            heads: 2,
            ff_hidden: 2 * d,
            mod_hidden: d,
            cand_hidden: d,
            code_dim: 4,
            ..Self::desk(task)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(contract("d_model must be a positive multiple of heads"));
        }
        if !(0.0..=1.0).contains(&self.gate_lambda) {
            return Err(contract("gate_lambda must lie in [0, 1]"));
        }
        if self.clip_c <= 0.0 {
            return Err(contract("clip_c must be positive"));
        }
        Ok(())
    }
}

/// Softmax over feasible logits; masked entries get exactly zero.
pub fn policy_distribution(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(contract("logits and mask differ in length"));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(u, _)| *u)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(contract("no feasible action to normalize over"));
    }
    let mut p: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(u, m)| if *m { (u - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

/// `u_ref + λ(u − u_ref)`
pub fn morph(u: f64, u_ref: f64, lambda: f64) -> f64 {
    u_ref + lambda * (u - u_ref)
}

/// `C·tanh(u/C)`
pub fn clip_logit(u: f64, c: f64) -> f64 {
    c * (u / c).tanh()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_examples() {
        assert_eq!(policy_distribution(&[0.0, 0.0], &[true, true]).unwrap(), vec![0.5, 0.5]);
        let p = policy_distribution(&[2f64.ln(), 0.0], &[true, true]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let q = policy_distribution(&[2f64.ln() + 7.0, 7.0], &[true, true]).unwrap();
        assert!((p[0] - q[0]).abs() < 1e-15);
        let r = policy_distribution(&[5.0, 1.0, 2.0], &[false, true, true]).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(policy_distribution(&[1.0], &[false]).is_err());
    }

    #[test]
    fn morph_examples() {
        assert_eq!(morph(3.0, 1.0, 0.0), 1.0);
        assert_eq!(morph(3.0, 1.0, 1.0), 3.0);
        assert_eq!(morph(2.0, 0.0, 0.5), 1.0);
        // affine in lambda
        let f = |l| morph(2.5, -1.0, l);
        assert!((f(0.25) - (0.75 * f(0.0) + 0.25 * f(1.0))).abs() < 1e-15);
    }

    #[test]
    fn clip_is_bounded() {
        assert!(clip_logit(1e6, 10.0) <= 10.0);
        assert!((clip_logit(0.01, 10.0) - 0.01).abs() < 1e-6);
    }
}
