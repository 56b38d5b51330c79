use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{augmented_multistart, beam_decode, greedy_decode, sample_decode};
use crate::error::{Error, Result};
use crate::instances::{instance_files, RoutingInstance};
use crate::mdp::{verify_solution, Solution};
use crate::policy::PolicyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeKind {
    Greedy,
    Sample,
    Aug8,
    Beam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeSettings {
    pub kind: DecodeKind,
    /// Sample count or beam width.
    pub budget: usize,
    pub seed: u64,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            kind: DecodeKind::Greedy,
            budget: 16,
            seed: 0,
        }
    }
}

impl DecodeSettings {
    pub fn decode(&self, inst: &RoutingInstance, params: &PolicyParams) -> Result<Solution> {
        match self.kind {
            DecodeKind::Greedy => greedy_decode(inst, params),
            DecodeKind::Sample => Ok(sample_decode(inst, params, self.budget, self.seed)?.best),
            DecodeKind::Aug8 => augmented_multistart(inst, params, 8),
            DecodeKind::Beam => beam_decode(inst, params, self.budget),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub customers: usize,
    pub cost: f64,
    pub reference: Option<f64>,
    pub gap_percent: Option<f64>,
    pub feasible: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn mean_cost(&self) -> f64 {
        self.rows.iter().map(|r| r.cost).sum::<f64>() / self.rows.len().max(1) as f64
    }

    /// Mean gap over rows that have a reference.
    pub fn mean_gap(&self) -> Option<f64> {
        let gaps: Vec<f64> = self.rows.iter().filter_map(|r| r.gap_percent).collect();
        (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
    }

    pub fn all_feasible(&self) -> bool {
        self.rows.iter().all(|r| r.feasible)
    }

    /// One row per instance followed by a `MEAN` row.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "name",
            "customers",
            "cost",
            "reference",
            "gap_percent",
            "feasible",
            "seconds",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.customers.to_string(),
                format!("{:.4}", r.cost),
                opt(r.reference),
                opt(r.gap_percent),
                r.feasible.to_string(),
                format!("{:.3}", r.seconds),
            ])?;
        }
        let mean_secs = self.rows.iter().map(|r| r.seconds).sum::<f64>() / self.rows.len().max(1) as f64;
        w.write_record([
            "MEAN".to_string(),
            String::new(),
            format!("{:.4}", self.mean_cost()),
            String::new(),
            opt(self.mean_gap()),
            self.all_feasible().to_string(),
            format!("{mean_secs:.3}"),
        ])?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct RefRecord {
    name: String,
    ref_cost: f64,
}

/// Reads a `name,ref_cost` CSV of best-known costs.
pub fn load_references(path: &Path) -> Result<HashMap<String, f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for rec in r.deserialize() {
        let rec: RefRecord = rec?;
        out.insert(rec.name, rec.ref_cost);
    }
    Ok(out)
}

/// Decodes every instance file in `dir` (sorted by file name), verifies each
/// solution and reports the gap to `refs` where a reference exists.
pub fn evaluate_benchmark(
    dir: &Path,
    params: &PolicyParams,
    refs: &HashMap<String, f64>,
    settings: &DecodeSettings,
) -> Result<EvalReport> {
    let files = instance_files(dir)?;
    if files.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no instance files in {}", dir.display()),
        )));
    }
    let rows = files
        .par_iter()
        .map(|path| -> Result<EvalRow> {
            let inst = RoutingInstance::load(path)?;
            let start = Instant::now();
            let sol = settings.decode(&inst, params)?;
            let seconds = start.elapsed().as_secs_f64();
            let feasible = verify_solution(&sol, &inst).is_feasible();
            let reference = refs.get(&inst.name).copied();
            Ok(EvalRow {
                name: inst.name.clone(),
                customers: inst.num_customers(),
                cost: sol.distance,
                reference,
                gap_percent: reference.map(|r| (sol.distance - r) / r * 100.0),
                feasible,
                seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_instance, Task};
    use crate::policy::PolicyConfig;

    #[test]
    fn evaluates_directory_with_refs() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..3 {
            let mut inst = random_instance(Task::Cvrp, 6, seed).unwrap();
            inst.name = format!("inst{seed}");
            std::fs::write(dir.path().join(format!("inst{seed}.json")), inst.to_json().unwrap()).unwrap();
        }
        std::fs::write(dir.path().join("refs.csv"), "name,ref_cost\ninst1,100\n").unwrap();
        let refs = load_references(&dir.path().join("refs.csv")).unwrap();
        let params = PolicyParams::new(PolicyConfig::small(Task::Cvrp, 8), 0).unwrap();
        let report = evaluate_benchmark(dir.path(), &params, &refs, &DecodeSettings::default()).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.all_feasible());
        let r1 = &report.rows[1];
        assert_eq!(r1.name, "inst1");
        assert!((r1.gap_percent.unwrap() - (r1.cost - 100.0)).abs() < 1e-9);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().last().unwrap().starts_with("MEAN"));
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let inst = random_instance(Task::Tsp, 5, 0).unwrap();
        let params = PolicyParams::new(PolicyConfig::small(Task::Cvrp, 8), 0).unwrap();
        assert!(matches!(greedy_decode(&inst, &params), Err(Error::Checkpoint(_))));
    }
}
