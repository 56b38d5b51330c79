use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{context_scalars, node_feature_dim};
use super::PolicyConfig;
use crate::consequences::{phi_dim, SUMMARY_DIM};
use crate::error::{Error, Result};

/// One named parameter matrix inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub fan_in: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All learnable weights, stored as one flat `f64` vector with a named layout.
///
/// Every slot exists regardless of variant flags, so disabled components keep
/// an exactly-zero gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub slots: Vec<Slot>,
    pub data: Vec<f64>,
    index: HashMap<String, usize>,
}

struct LayoutBuilder {
    slots: Vec<Slot>,
    offset: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize) {
        self.slots.push(Slot {
            name: name.into(),
            rows,
            cols,
            offset: self.offset,
            fan_in,
        });
        self.offset += rows * cols;
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, out: usize) {
        self.add(format!("{prefix}_w"), fan_in, out, fan_in);
        self.add(format!("{prefix}_b"), 1, out, fan_in);
    }

    fn mlp(&mut self, prefix: &str, input: usize, hidden: usize, out: usize) {
        self.linear(&format!("{prefix}.l1"), input, hidden);
        self.linear(&format!("{prefix}.l2"), hidden, out);
    }
}

fn layout(config: &PolicyConfig) -> Vec<Slot> {
    let d = config.d_model;
    let p = phi_dim(config.task);
    let mut b = LayoutBuilder {
        slots: Vec::new(),
        offset: 0,
    };
    b.linear("node_embed", node_feature_dim(config.task), d);
    b.linear("depot_embed", 2, d);
    for l in 0..config.layers {
        for m in ["wq", "wk", "wv", "wo"] {
            b.add(format!("layer{l}.{m}"), d, d, d);
        }
        b.linear(&format!("layer{l}.ff1"), d, config.ff_hidden);
        b.linear(&format!("layer{l}.ff2"), config.ff_hidden, d);
        b.linear(&format!("layer{l}.gate"), d, config.heads);
        b.add(format!("layer{l}.depth_q"), d, 1, d);
    }
    b.linear("context", 2 * d + context_scalars() + config.code_dim, d);
    b.add("key_w", d, d, d);
    let mod_in = d + SUMMARY_DIM;
    b.mlp("gamma", mod_in, config.mod_hidden, d);
    b.mlp("beta", mod_in, config.mod_hidden, d);
    b.mlp("alpha", mod_in, config.mod_hidden, 1);
    b.add("w_phi", d, p, d);
    b.mlp("cand", d + p, config.cand_hidden, 1);
    b.slots
}

impl PolicyParams {
    /// Uniform initialization in `±1/√fan_in`.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in &params.slots {
            let bound = 1.0 / (slot.fan_in.max(1) as f64).sqrt();
            for v in &mut params.data[slot.offset..slot.offset + slot.len()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    pub fn zeros(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        let slots = layout(&config);
        let total = slots.iter().map(Slot::len).sum();
        let index = slots.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        Ok(Self {
            config,
            slots,
            data: vec![0.0; total],
            index,
        })
    }

    /// Rebuilds parameters from a flat vector; the length must match the layout.
    pub fn from_flat(config: PolicyConfig, flat: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if flat.len() != p.data.len() {
            return Err(Error::Checkpoint(format!(
                "flat vector has {} entries, layout expects {}",
                flat.len(),
                p.data.len()
            )));
        }
        p.data = flat;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn slot_index(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter slot `{name}`"))
    }

    pub fn slot(&self, name: &str) -> &Slot {
        &self.slots[self.slot_index(name)]
    }

    pub fn values(&self, name: &str) -> &[f64] {
        let s = self.slot(name);
        &self.data[s.offset..s.offset + s.len()]
    }

    pub fn values_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self.slot(name).clone();
        &mut self.data[s.offset..s.offset + s.len()]
    }

    /// Name of the slot containing flat index `i`, with the in-slot position.
    pub fn describe(&self, i: usize) -> String {
        for s in &self.slots {
            if i >= s.offset && i < s.offset + s.len() {
                let k = i - s.offset;
                return format!("{}[{},{}]", s.name, k / s.cols, k % s.cols);
            }
        }
        format!("#{i}")
    }

    /// Flat indices of every slot whose name starts with one of `prefixes`.
    pub fn indices_with_prefix(&self, prefixes: &[&str]) -> Vec<usize> {
        self.slots
            .iter()
            .filter(|s| prefixes.iter().any(|p| s.name.starts_with(p)))
            .flat_map(|s| s.offset..s.offset + s.len())
            .collect()
    }

    pub fn set_zero(&mut self, prefixes: &[&str]) {
        for i in self.indices_with_prefix(prefixes) {
            self.data[i] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::Task;

    #[test]
    fn flat_round_trip() {
        let cfg = PolicyConfig::small(Task::Cvrptw, 8);
        let p = PolicyParams::new(cfg.clone(), 3).unwrap();
        let q = PolicyParams::from_flat(cfg.clone(), p.flat().to_vec()).unwrap();
        assert_eq!(p, q);
        assert!(PolicyParams::from_flat(cfg, vec![0.0; 3]).is_err());
    }

    #[test]
    fn slots_tile_the_vector() {
        let p = PolicyParams::zeros(PolicyConfig::desk(Task::Tsp)).unwrap();
        let mut next = 0;
        for s in &p.slots {
            assert_eq!(s.offset, next);
            next += s.len();
        }
        assert_eq!(next, p.len());
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let cfg = PolicyConfig::small(Task::Cvrp, 8);
        let a = PolicyParams::new(cfg.clone(), 11).unwrap();
        let b = PolicyParams::new(cfg, 11).unwrap();
        assert_eq!(a, b);
        let s = a.slot("w_phi");
        let bound = 1.0 / (s.fan_in as f64).sqrt();
        assert!(a.values("w_phi").iter().all(|v| v.abs() <= bound));
    }
}
