//! Problem data: the immutable [`RoutingInstance`], benchmark parsers,
//! the native JSON format and the procedural CVRPTW generator.

mod generator;
mod solomon;
mod tsplib;

pub use generator::{
    constrained_window, feasibility_bounds, generate_cvrptw, random_instance, GeneratorLatents, LatentPrior,
};
pub use solomon::parse_solomon;
pub use tsplib::{parse_tsplib, parse_tsplib_tour};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plane, in instance units.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "TSP")]
    Tsp,
    #[serde(rename = "CVRP")]
    Cvrp,
    #[serde(rename = "CVRPTW")]
    Cvrptw,
}

impl Task {
    pub fn has_capacity(self) -> bool {
        !matches!(self, Task::Tsp)
    }

    pub fn has_time(self) -> bool {
        matches!(self, Task::Cvrptw)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Tsp => "TSP",
            Task::Cvrp => "CVRP",
            Task::Cvrptw => "CVRPTW",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TSP" => Ok(Task::Tsp),
            "CVRP" => Ok(Task::Cvrp),
            "CVRPTW" => Ok(Task::Cvrptw),
            other => Err(Error::UnsupportedFormat(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceRule {
    /// Unrounded Euclidean distance.
    Exact,
    /// TSPLIB `nint` convention: Euclidean distance rounded half-up.
    Euc2dRounded,
}

/// Euclidean distance between two points under `rule`.
pub fn euc2d_distance(a: Point, b: Point, rule: DistanceRule) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let d = (dx * dx + dy * dy).sqrt();
    match rule {
        DistanceRule::Exact => d,
        DistanceRule::Euc2dRounded => (d + 0.5).floor(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub position: Point,
    pub demand: f64,
    pub window_open: f64,
    pub window_close: f64,
    pub service_time: f64,
}

impl CustomerRecord {
    /// A customer with no load or time attributes (TSP cities).
    pub fn at(position: Point) -> Self {
        Self {
            position,
            demand: 0.0,
            window_open: 0.0,
            window_close: 0.0,
            service_time: 0.0,
        }
    }
}

fn is_unit(v: &f64) -> bool {
    *v == 1.0
}

fn unit() -> f64 {
    1.0
}

/// Immutable problem data. Node 0 is the depot (the start city for TSP);
/// customer `i` of [`customers`](Self::customers) is node `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingInstance {
    pub task: Task,
    pub depot: Point,
    pub customers: Vec<CustomerRecord>,
    pub capacity: Option<f64>,
    pub horizon: Option<f64>,
    pub distance_rule: DistanceRule,
    pub name: String,
    /// Travel time per unit of distance. Only written when it differs from 1.
    #[serde(default = "unit", skip_serializing_if = "is_unit")]
    pub time_factor: f64,
    /// Spatial scale used by the generator, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_scale: Option<f64>,
}

impl RoutingInstance {
    pub fn num_customers(&self) -> usize {
        self.customers.len()
    }

    /// Number of nodes including the depot.
    pub fn num_nodes(&self) -> usize {
        self.customers.len() + 1
    }

    pub fn position(&self, node: usize) -> Point {
        if node == 0 {
            self.depot
        } else {
            self.customers[node - 1].position
        }
    }

    pub fn customer(&self, node: usize) -> &CustomerRecord {
        &self.customers[node - 1]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        euc2d_distance(self.position(a), self.position(b), self.distance_rule)
    }

    pub fn travel_time(&self, a: usize, b: usize) -> f64 {
        self.time_factor * self.distance(a, b)
    }

    pub fn capacity_or_inf(&self) -> f64 {
        self.capacity.unwrap_or(f64::INFINITY)
    }

    pub fn horizon_or_inf(&self) -> f64 {
        self.horizon.unwrap_or(f64::INFINITY)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads an instance, choosing the parser from the file extension:
    /// `.tsp` is TSPLIB, `.json` is the native format, anything else Solomon.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("tsp") => parse_tsplib(&text),
            Some("json") => Self::from_json(&text),
            _ => parse_solomon(&text),
        }
    }

    /// Loads every `.txt`, `.tsp`, `.vrp` and `.json` file in `dir`, sorted by
    /// file name.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        instance_files(dir)?.iter().map(|p| Self::load(p)).collect()
    }
}

/// Instance files in `dir`, sorted by file name.
pub fn instance_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let ext = p
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or("")
                .to_ascii_lowercase();
            p.is_file() && matches!(ext.as_str(), "txt" | "tsp" | "vrp" | "json")
        })
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    NoCustomers,
    MissingCapacity,
    MissingHorizon,
    NonFinite,
    NegativeDemand,
    DemandExceedsCapacity,
    NegativeWindowOpen,
    WindowInverted,
    NegativeService,
    Unreachable,
    NoReturn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Customer node id (1-based), when the violation concerns one customer.
    pub customer: Option<usize>,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, customer: Option<usize>, kind: ViolationKind, message: String) {
        self.violations.push(Violation {
            customer,
            kind,
            message,
        });
    }
}

/// Checks every instance invariant and, for CVRPTW, that each customer can
/// be served by a dedicated route leaving the depot at time 0.
pub fn validate_instance(inst: &RoutingInstance) -> ValidationReport {
    let mut report = ValidationReport::default();
    if inst.customers.is_empty() {
        report.push(None, ViolationKind::NoCustomers, "instance has no customers".into());
    }
    if !(inst.depot[0].is_finite() && inst.depot[1].is_finite()) {
        report.push(None, ViolationKind::NonFinite, "depot coordinate is not finite".into());
    }
    let capacity = match (inst.task.has_capacity(), inst.capacity) {
        (true, Some(c)) if c > 0.0 && c.is_finite() => Some(c),
        (true, _) => {
            report.push(
                None,
                ViolationKind::MissingCapacity,
                "positive finite capacity required".into(),
            );
            None
        }
        (false, _) => None,
    };
    let horizon = match (inst.task.has_time(), inst.horizon) {
        (true, Some(h)) if h > 0.0 && h.is_finite() => Some(h),
        (true, _) => {
            report.push(
                None,
                ViolationKind::MissingHorizon,
                "CVRPTW requires a positive horizon".into(),
            );
            None
        }
        (false, _) => None,
    };

    for (i, c) in inst.customers.iter().enumerate() {
        let id = i + 1;
        let fields = [
            c.position[0],
            c.position[1],
            c.demand,
            c.window_open,
            c.window_close,
            c.service_time,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            report.push(
                Some(id),
                ViolationKind::NonFinite,
                format!("customer {id} has a non-finite field"),
            );
            continue;
        }
        if c.demand < 0.0 {
            report.push(
                Some(id),
                ViolationKind::NegativeDemand,
                format!("customer {id} has negative demand {}", c.demand),
            );
        }
        if let Some(cap) = capacity {
            if c.demand > cap {
                report.push(
                    Some(id),
                    ViolationKind::DemandExceedsCapacity,
                    format!("customer {id} demand {} exceeds capacity {cap}", c.demand),
                );
            }
        }
        if c.window_open < 0.0 {
            report.push(
                Some(id),
                ViolationKind::NegativeWindowOpen,
                format!("customer {id} window opens at {}", c.window_open),
            );
        }
        if c.window_close < c.window_open {
            report.push(
                Some(id),
                ViolationKind::WindowInverted,
                format!(
                    "customer {id} window [{}, {}] is inverted",
                    c.window_open, c.window_close
                ),
            );
        }
        if c.service_time < 0.0 {
            report.push(
                Some(id),
                ViolationKind::NegativeService,
                format!("customer {id} has negative service time"),
            );
        }
        if let Some(t_max) = horizon {
            let out = inst.travel_time(0, id);
            let back = inst.travel_time(id, 0);
            if out > c.window_close {
                report.push(
                    Some(id),
                    ViolationKind::Unreachable,
                    format!(
                        "customer {id}: earliest arrival {out} is after window close {}",
                        c.window_close
                    ),
                );
            } else if out.max(c.window_open) + c.service_time + back > t_max {
                report.push(
                    Some(id),
                    ViolationKind::NoReturn,
                    format!("customer {id}: cannot return to the depot by {t_max}"),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_tw() -> RoutingInstance {
        RoutingInstance {
            task: Task::Cvrptw,
            depot: [0.0, 0.0],
            customers: vec![
                CustomerRecord {
                    position: [3.0, 4.0],
                    demand: 2.0,
                    window_open: 0.0,
                    window_close: 20.0,
                    service_time: 1.0,
                },
                CustomerRecord {
                    position: [0.0, 6.0],
                    demand: 3.0,
                    window_open: 10.0,
                    window_close: 30.0,
                    service_time: 1.0,
                },
            ],
            capacity: Some(5.0),
            horizon: Some(100.0),
            distance_rule: DistanceRule::Exact,
            name: "small".into(),
            time_factor: 1.0,
            spatial_scale: None,
        }
    }

    #[test]
    fn distance_rules() {
        assert_eq!(euc2d_distance([0.0, 0.0], [0.0, 0.0], DistanceRule::Exact), 0.0);
        assert_eq!(euc2d_distance([0.0, 0.0], [3.0, 4.0], DistanceRule::Exact), 5.0);
        assert_eq!(euc2d_distance([0.0, 0.0], [3.0, 4.0], DistanceRule::Euc2dRounded), 5.0);
        assert_eq!(euc2d_distance([0.0, 0.0], [1.0, 1.0], DistanceRule::Euc2dRounded), 1.0);
        assert_eq!(euc2d_distance([0.0, 0.0], [0.0, 2.5], DistanceRule::Euc2dRounded), 3.0);
    }

    #[test]
    fn valid_instance_has_no_violations() {
        assert!(validate_instance(&small_tw()).is_valid());
    }

    #[test]
    fn inverted_window_is_reported() {
        let mut inst = small_tw();
        inst.customers[1].window_open = 40.0;
        let report = validate_instance(&inst);
        let inverted: Vec<_> = report
            .violations
            .iter()
            .filter(|v| v.kind == ViolationKind::WindowInverted)
            .collect();
        assert_eq!(inverted.len(), 1);
        assert_eq!(inverted[0].customer, Some(2));
    }

    #[test]
    fn demand_over_capacity_is_reported() {
        let mut inst = small_tw();
        inst.customers[0].demand = 6.0;
        let report = validate_instance(&inst);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::DemandExceedsCapacity && v.customer == Some(1)));
    }

    #[test]
    fn unreachable_and_no_return() {
        let mut inst = small_tw();
        inst.customers[0].window_close = 4.0;
        inst.customers[1].window_open = 95.0;
        inst.customers[1].window_close = 96.0;
        let kinds: Vec<_> = validate_instance(&inst).violations.iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::Unreachable));
        assert!(kinds.contains(&ViolationKind::NoReturn));
    }

    #[test]
    fn empty_instance_rejected() {
        let mut inst = small_tw();
        inst.customers.clear();
        assert!(!validate_instance(&inst).is_valid());
    }

    #[test]
    fn native_json_field_names() {
        let inst = small_tw();
        let v: serde_json::Value = serde_json::from_str(&inst.to_json().unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "capacity",
                "customers",
                "depot",
                "distance_rule",
                "horizon",
                "name",
                "task"
            ]
        );
        assert_eq!(obj["task"], "CVRPTW");
        assert_eq!(RoutingInstance::from_json(&inst.to_json().unwrap()).unwrap(), inst);
    }
}
