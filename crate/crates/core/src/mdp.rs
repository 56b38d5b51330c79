//! Exact construction MDPs for TSP, CVRP and CVRPTW.
//!
//! [`RoutingEnv`] wraps an instance with a precomputed distance matrix and
//! exposes the feasibility mask and the deterministic transition. Solutions
//! are checked by [`verify_solution`], which replays routes from scratch and
//! never looks at the construction log.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::instances::{RoutingInstance, Task};

/// Slack used by the verifier when comparing replayed times and loads.
pub const VERIFY_EPS: f64 = 1e-9;

pub const DEPOT: usize = 0;

/// Timing of one visit. Fields are zero for tasks without time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub node: usize,
    pub arrival: f64,
    pub wait: f64,
    pub service_start: f64,
    pub departure: f64,
}

/// An instance plus cached distances and travel times.
#[derive(Debug, Clone)]
pub struct RoutingEnv<'a> {
    pub inst: &'a RoutingInstance,
    n_nodes: usize,
    dist: Vec<f64>,
    diameter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionState {
    pub current: usize,
    pub time: f64,
    pub remaining_capacity: f64,
    /// Indexed by node; slot 0 is only set for TSP, where node 0 is the start.
    pub visited: Vec<bool>,
    pub visited_customers: usize,
    /// Every action taken so far, depot returns included.
    pub route_log: Vec<VisitRecord>,
    pub step: usize,
    pub served_since_depot: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionMask {
    /// Indexed by node id; slot 0 is the depot.
    pub feasible: Vec<bool>,
    /// Feasible customers in ascending id order (the set `F_t`).
    pub customers: Vec<usize>,
    pub depot: bool,
}

impl ActionMask {
    /// Candidate actions: feasible customers followed by the depot.
    pub fn actions(&self) -> Vec<usize> {
        let mut out = self.customers.clone();
        if self.depot {
            out.push(DEPOT);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.customers.len() + usize::from(self.depot)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One-step consequences of moving to customer `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub travel_distance: f64,
    pub travel_time: f64,
    pub arrival: f64,
    pub wait: f64,
    pub service_start: f64,
    pub departure: f64,
}

impl<'a> RoutingEnv<'a> {
    pub fn new(inst: &'a RoutingInstance) -> Self {
        let n_nodes = inst.num_nodes();
        let mut dist = vec![0.0; n_nodes * n_nodes];
        let mut diameter = 0.0f64;
        for a in 0..n_nodes {
            for b in 0..n_nodes {
                let d = inst.distance(a, b);
                dist[a * n_nodes + b] = d;
                diameter = diameter.max(d);
            }
        }
        Self {
            inst,
            n_nodes,
            dist,
            diameter,
        }
    }

    pub fn task(&self) -> Task {
        self.inst.task
    }

    pub fn num_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn num_customers(&self) -> usize {
        self.n_nodes - 1
    }

    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n_nodes + b]
    }

    #[inline]
    pub fn travel_time(&self, a: usize, b: usize) -> f64 {
        self.inst.time_factor * self.distance(a, b)
    }

    /// Largest pairwise distance; 1 for degenerate instances.
    pub fn diameter(&self) -> f64 {
        if self.diameter > 0.0 {
            self.diameter
        } else {
            1.0
        }
    }

    pub fn capacity(&self) -> f64 {
        self.inst.capacity_or_inf()
    }

    pub fn horizon(&self) -> f64 {
        self.inst.horizon_or_inf()
    }

    pub fn initial_state(&self) -> ConstructionState {
        let mut visited = vec![false; self.n_nodes];
        if self.task() == Task::Tsp {
            visited[DEPOT] = true;
        }
        ConstructionState {
            current: DEPOT,
            time: 0.0,
            remaining_capacity: self.capacity(),
            visited,
            visited_customers: 0,
            route_log: Vec::new(),
            step: 0,
            served_since_depot: 0,
            distance: 0.0,
        }
    }

    pub fn is_terminal(&self, state: &ConstructionState) -> bool {
        let all = state.visited_customers == self.num_customers();
        match self.task() {
            Task::Tsp => all,
            _ => all && state.current == DEPOT,
        }
    }

    /// Timing consequences of going from the current node to customer `j`.
    pub fn transition(&self, state: &ConstructionState, j: usize) -> Transition {
        let travel_distance = self.distance(state.current, j);
        if self.task() != Task::Cvrptw {
            return Transition {
                travel_distance,
                travel_time: travel_distance,
                arrival: 0.0,
                wait: 0.0,
                service_start: 0.0,
                departure: 0.0,
            };
        }
        let c = self.inst.customer(j);
        let travel_time = self.travel_time(state.current, j);
        let arrival = state.time + travel_time;
        let wait = (c.window_open - arrival).max(0.0);
        let service_start = arrival + wait;
        Transition {
            travel_distance,
            travel_time,
            arrival,
            wait,
            service_start,
            departure: service_start + c.service_time,
        }
    }

    pub fn customer_feasible(&self, state: &ConstructionState, j: usize) -> bool {
        if j == DEPOT || j >= self.n_nodes || state.visited[j] {
            return false;
        }
        let c = self.inst.customer(j);
        if self.task().has_capacity() && c.demand > state.remaining_capacity {
            return false;
        }
        if self.task().has_time() {
            let tr = self.transition(state, j);
            if tr.arrival > c.window_close {
                return false;
            }
            if tr.departure + self.travel_time(j, DEPOT) > self.horizon() {
                return false;
            }
        }
        true
    }

    pub fn feasible_actions(&self, state: &ConstructionState) -> Result<ActionMask> {
        if self.is_terminal(state) {
            return Err(contract("mask requested for a terminal state"));
        }
        let mut feasible = vec![false; self.n_nodes];
        let mut customers = Vec::new();
        for j in 1..self.n_nodes {
            if self.customer_feasible(state, j) {
                feasible[j] = true;
                customers.push(j);
            }
        }
        let mut depot = false;
        if self.task() != Task::Tsp && state.current != DEPOT {
            depot = state.served_since_depot >= 1 || customers.is_empty();
        }
        feasible[DEPOT] = depot;
        if customers.is_empty() && !depot {
            return Err(contract(format!(
                "no feasible action at step {} (node {}); some customer cannot be served from the depot",
                state.step, state.current
            )));
        }
        Ok(ActionMask {
            feasible,
            customers,
            depot,
        })
    }

    /// Applies `action` in place. Errors if it is not feasible.
    pub fn step(&self, state: &mut ConstructionState, action: usize) -> Result<()> {
        if self.is_terminal(state) {
            return Err(contract("action applied to a terminal state"));
        }
        if action == DEPOT {
            let allowed = self.task() != Task::Tsp
                && state.current != DEPOT
                && (state.served_since_depot >= 1 || (1..self.n_nodes).all(|j| !self.customer_feasible(state, j)));
            if !allowed {
                return Err(contract(format!("depot return not allowed at step {}", state.step)));
            }
            let travel = self.distance(state.current, DEPOT);
            let arrival = if self.task().has_time() {
                state.time + self.travel_time(state.current, DEPOT)
            } else {
                0.0
            };
            state.distance += travel;
            state.route_log.push(VisitRecord {
                node: DEPOT,
                arrival,
                wait: 0.0,
                service_start: arrival,
                departure: 0.0,
            });
            state.current = DEPOT;
            state.time = 0.0;
            state.remaining_capacity = self.capacity();
            state.served_since_depot = 0;
        } else {
            if !self.customer_feasible(state, action) {
                return Err(contract(format!(
                    "customer {action} is not feasible at step {}",
                    state.step
                )));
            }
            let tr = self.transition(state, action);
            let c = self.inst.customer(action);
            state.distance += tr.travel_distance;
            state.route_log.push(VisitRecord {
                node: action,
                arrival: tr.arrival,
                wait: tr.wait,
                service_start: tr.service_start,
                departure: tr.departure,
            });
            state.current = action;
            if self.task().has_time() {
                state.time = tr.departure;
            }
            if self.task().has_capacity() {
                state.remaining_capacity -= c.demand;
            }
            state.visited[action] = true;
            state.visited_customers += 1;
            state.served_since_depot += 1;
        }
        state.step += 1;
        Ok(())
    }

    /// Pure transition: returns the successor state.
    pub fn apply_action(&self, state: &ConstructionState, action: usize) -> Result<ConstructionState> {
        let mut next = state.clone();
        self.step(&mut next, action)?;
        Ok(next)
    }

    /// Total distance of a (possibly partial) construction; TSP tours are closed
    /// once complete.
    pub fn cost(&self, state: &ConstructionState) -> f64 {
        if self.task() == Task::Tsp && self.is_terminal(state) {
            state.distance + self.distance(state.current, DEPOT)
        } else {
            state.distance
        }
    }

    pub fn to_solution(&self, state: &ConstructionState) -> Result<Solution> {
        if !self.is_terminal(state) {
            return Err(Error::IncompleteSolution(format!(
                "{} of {} customers visited",
                state.visited_customers,
                self.num_customers()
            )));
        }
        let mut routes = Vec::new();
        let mut current = Vec::new();
        for rec in &state.route_log {
            if rec.node == DEPOT {
                if !current.is_empty() {
                    routes.push(std::mem::take(&mut current));
                }
            } else {
                current.push(rec.node);
            }
        }
        if !current.is_empty() {
            routes.push(current);
        }
        Ok(Solution {
            routes,
            distance: self.cost(state),
            trace: state.route_log.iter().filter(|r| r.node != DEPOT).copied().collect(),
        })
    }
}

/// A complete solution: customer routes, each implicitly starting and ending
/// at the depot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub routes: Vec<Vec<usize>>,
    pub distance: f64,
    #[serde(default)]
    pub trace: Vec<VisitRecord>,
}

impl Solution {
    pub fn from_routes(inst: &RoutingInstance, routes: Vec<Vec<usize>>) -> Self {
        let distance = route_distance(inst, &routes);
        Self {
            routes,
            distance,
            trace: Vec::new(),
        }
    }

    /// Node sequence with depot visits: `0, r1.., 0, r2.., 0`.
    pub fn node_sequence(&self) -> Vec<usize> {
        let mut seq = vec![DEPOT];
        for r in &self.routes {
            seq.extend(r);
            seq.push(DEPOT);
        }
        seq
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn route_distance(inst: &RoutingInstance, routes: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for r in routes {
        let mut prev = DEPOT;
        for &j in r {
            total += inst.distance(prev, j);
            prev = j;
        }
        total += inst.distance(prev, DEPOT);
    }
    total
}

fn coverage_problem(inst: &RoutingInstance, routes: &[Vec<usize>]) -> Option<String> {
    let n = inst.num_customers();
    let mut seen = vec![0usize; n + 1];
    for r in routes {
        for &j in r {
            if j == DEPOT || j > n {
                return Some(format!("invalid node id {j} inside a route"));
            }
            seen[j] += 1;
        }
    }
    (1..=n).find(|&j| seen[j] != 1).map(|j| {
        if seen[j] == 0 {
            format!("customer {j} is not visited")
        } else {
            format!("customer {j} is visited {} times", seen[j])
        }
    })
}

/// Sum of consecutive travel distances under the instance's distance rule.
pub fn solution_cost(sol: &Solution, inst: &RoutingInstance) -> Result<f64> {
    if let Some(msg) = coverage_problem(inst, &sol.routes) {
        return Err(Error::IncompleteSolution(msg));
    }
    Ok(route_distance(inst, &sol.routes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteViolationKind {
    Missing,
    Duplicate,
    InvalidNode,
    Capacity,
    TimeWindow,
    Horizon,
    RouteCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteViolation {
    pub kind: RouteViolationKind,
    pub route: Option<usize>,
    pub customer: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub violations: Vec<RouteViolation>,
    pub distance: f64,
    /// Replayed customer visits in route order.
    pub replay: Vec<VisitRecord>,
}

impl VerificationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: RouteViolationKind, route: Option<usize>, customer: Option<usize>, message: String) {
        self.violations.push(RouteViolation {
            kind,
            route,
            customer,
            message,
        });
    }
}

/// Replays `sol` against the raw instance data and reports every coverage,
/// capacity, time-window and horizon violation.
pub fn verify_solution(sol: &Solution, inst: &RoutingInstance) -> VerificationReport {
    use RouteViolationKind::*;
    let mut report = VerificationReport::default();
    let n = inst.num_customers();
    let mut seen = vec![0usize; n + 1];
    let task = inst.task;

    if task == Task::Tsp && sol.routes.len() != 1 {
        report.push(
            RouteCount,
            None,
            None,
            format!("TSP tour must be one route, found {}", sol.routes.len()),
        );
    }

    for (r_idx, route) in sol.routes.iter().enumerate() {
        let mut prev = DEPOT;
        let mut time = 0.0f64;
        let mut load = 0.0f64;
        for &j in route {
            if j == DEPOT || j > n {
                report.push(
                    InvalidNode,
                    Some(r_idx),
                    None,
                    format!("route {r_idx} contains invalid node {j}"),
                );
                continue;
            }
            seen[j] += 1;
            let c = &inst.customers[j - 1];
            report.distance += inst.distance(prev, j);
            let mut rec = VisitRecord {
                node: j,
                arrival: 0.0,
                wait: 0.0,
                service_start: 0.0,
                departure: 0.0,
            };
            if task.has_time() {
                let arrival = time + inst.time_factor * inst.distance(prev, j);
                if arrival > c.window_close + VERIFY_EPS {
                    report.push(
                        TimeWindow,
                        Some(r_idx),
                        Some(j),
                        format!(
                            "customer {j} reached at {arrival:.6} after window close {}",
                            c.window_close
                        ),
                    );
                }
                let wait = (c.window_open - arrival).max(0.0);
                let start = arrival + wait;
                rec = VisitRecord {
                    node: j,
                    arrival,
                    wait,
                    service_start: start,
                    departure: start + c.service_time,
                };
                time = rec.departure;
            }
            if task.has_capacity() {
                load += c.demand;
            }
            report.replay.push(rec);
            prev = j;
        }
        report.distance += inst.distance(prev, DEPOT);
        if task.has_time() {
            let back = time + inst.time_factor * inst.distance(prev, DEPOT);
            if back > inst.horizon_or_inf() + VERIFY_EPS {
                report.push(
                    Horizon,
                    Some(r_idx),
                    None,
                    format!("route {r_idx} returns at {back:.6} after horizon"),
                );
            }
        }
        if task.has_capacity() && load > inst.capacity_or_inf() + VERIFY_EPS {
            report.push(
                Capacity,
                Some(r_idx),
                None,
                format!("route {r_idx} load {load} exceeds capacity"),
            );
        }
    }
    for (j, &count) in seen.iter().enumerate().skip(1) {
        match count {
            0 => report.push(Missing, None, Some(j), format!("customer {j} is not visited")),
            1 => {}
            k => report.push(Duplicate, None, Some(j), format!("customer {j} is visited {k} times")),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{CustomerRecord, DistanceRule};

    fn cust(x: f64, y: f64, demand: f64, e: f64, l: f64, s: f64) -> CustomerRecord {
        CustomerRecord {
            position: [x, y],
            demand,
            window_open: e,
            window_close: l,
            service_time: s,
        }
    }

    fn inst(task: Task, customers: Vec<CustomerRecord>) -> RoutingInstance {
        RoutingInstance {
            task,
            depot: [0.0, 0.0],
            customers,
            capacity: task.has_capacity().then_some(10.0),
            horizon: task.has_time().then_some(100.0),
            distance_rule: DistanceRule::Exact,
            name: "t".into(),
            time_factor: 1.0,
            spatial_scale: None,
        }
    }

    #[test]
    fn initial_states() {
        let tw = inst(Task::Cvrptw, vec![cust(1.0, 0.0, 1.0, 0.0, 50.0, 1.0)]);
        let env = RoutingEnv::new(&tw);
        let s = env.initial_state();
        assert_eq!(s.remaining_capacity, 10.0);
        assert_eq!(s.time, 0.0);
        assert_eq!(s.served_since_depot, 0);

        let tsp = inst(Task::Tsp, vec![cust(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)]);
        let env = RoutingEnv::new(&tsp);
        let s = env.initial_state();
        assert!(s.visited[0]);
        assert_eq!(s.visited.iter().filter(|v| **v).count(), 1);
    }

    #[test]
    fn capacity_masks_customer() {
        let i = inst(
            Task::Cvrp,
            vec![cust(1.0, 0.0, 5.0, 0.0, 0.0, 0.0), cust(2.0, 0.0, 6.0, 0.0, 0.0, 0.0)],
        );
        let env = RoutingEnv::new(&i);
        let mut s = env.initial_state();
        env.step(&mut s, 1).unwrap();
        assert_eq!(s.remaining_capacity, 5.0);
        let mask = env.feasible_actions(&s).unwrap();
        assert!(!mask.feasible[2]);
        assert!(mask.depot);
        assert_eq!(mask.customers, Vec::<usize>::new());
    }

    #[test]
    fn late_arrival_masked() {
        // time 10, travel 5, l_j = 14
        let i = inst(
            Task::Cvrptw,
            vec![
                cust(0.0, 10.0, 1.0, 0.0, 90.0, 0.0),
                cust(0.0, 15.0, 1.0, 0.0, 14.0, 0.0),
            ],
        );
        let env = RoutingEnv::new(&i);
        let mut s = env.initial_state();
        env.step(&mut s, 1).unwrap();
        assert_eq!(s.time, 10.0);
        assert!(!env.customer_feasible(&s, 2));
    }

    #[test]
    fn customer_transition_arithmetic() {
        // time 10, travel 5, e = 20, s = 3
        let i = inst(
            Task::Cvrptw,
            vec![
                cust(0.0, 10.0, 1.0, 0.0, 90.0, 0.0),
                cust(0.0, 15.0, 1.0, 20.0, 60.0, 3.0),
            ],
        );
        let env = RoutingEnv::new(&i);
        let s = env.apply_action(&env.initial_state(), 1).unwrap();
        let s2 = env.apply_action(&s, 2).unwrap();
        let rec = s2.route_log.last().unwrap();
        assert_eq!(
            (rec.arrival, rec.wait, rec.service_start, rec.departure),
            (15.0, 5.0, 20.0, 23.0)
        );
        assert_eq!(s2.time, 23.0);
        assert_eq!(s2.remaining_capacity, 8.0);
    }

    #[test]
    fn no_wait_when_window_open() {
        let i = inst(Task::Cvrptw, vec![cust(0.0, 10.0, 1.0, 5.0, 90.0, 2.0)]);
        let env = RoutingEnv::new(&i);
        let s = env.apply_action(&env.initial_state(), 1).unwrap();
        let rec = s.route_log[0];
        assert_eq!(rec.wait, 0.0);
        assert_eq!(rec.departure, 12.0);
    }

    #[test]
    fn depot_return_resets() {
        let i = inst(
            Task::Cvrptw,
            vec![
                cust(0.0, 10.0, 4.0, 0.0, 90.0, 1.0),
                cust(0.0, 5.0, 1.0, 0.0, 90.0, 1.0),
            ],
        );
        let env = RoutingEnv::new(&i);
        let s = env.apply_action(&env.initial_state(), 1).unwrap();
        let s = env.apply_action(&s, DEPOT).unwrap();
        assert_eq!(s.remaining_capacity, 10.0);
        assert_eq!(s.time, 0.0);
        assert_eq!(s.distance, 20.0);
        // depot-to-depot is never allowed
        assert!(!env.feasible_actions(&s).unwrap().depot);
        assert!(env.apply_action(&s, DEPOT).is_err());
    }

    #[test]
    fn terminal_mask_is_error() {
        let i = inst(Task::Cvrp, vec![cust(1.0, 0.0, 1.0, 0.0, 0.0, 0.0)]);
        let env = RoutingEnv::new(&i);
        let s = env.apply_action(&env.initial_state(), 1).unwrap();
        let mask = env.feasible_actions(&s).unwrap();
        assert!(mask.depot && mask.customers.is_empty());
        let s = env.apply_action(&s, DEPOT).unwrap();
        assert!(env.is_terminal(&s));
        assert!(env.feasible_actions(&s).is_err());
    }

    #[test]
    fn infeasible_action_is_contract_violation() {
        let i = inst(Task::Cvrp, vec![cust(1.0, 0.0, 11.0, 0.0, 0.0, 0.0)]);
        let env = RoutingEnv::new(&i);
        assert!(matches!(
            env.apply_action(&env.initial_state(), 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn unit_square_tour() {
        let i = inst(
            Task::Tsp,
            vec![
                cust(1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                cust(1.0, 1.0, 0.0, 0.0, 0.0, 0.0),
                cust(0.0, 1.0, 0.0, 0.0, 0.0, 0.0),
            ],
        );
        let sol = Solution::from_routes(&i, vec![vec![1, 2, 3]]);
        assert_eq!(solution_cost(&sol, &i).unwrap(), 4.0);
        assert!(verify_solution(&sol, &i).is_feasible());
        assert!(solution_cost(&Solution::from_routes(&i, vec![vec![1, 2]]), &i).is_err());
    }

    #[test]
    fn verifier_reports_duplicates_and_lateness() {
        let i = inst(
            Task::Cvrptw,
            vec![
                cust(0.0, 10.0, 1.0, 0.0, 90.0, 0.0),
                cust(0.0, 50.0, 1.0, 0.0, 30.0, 0.0),
            ],
        );
        let dup = Solution::from_routes(&i, vec![vec![1, 1, 2]]);
        let rep = verify_solution(&dup, &i);
        assert!(rep.violations.iter().any(|v| v.kind == RouteViolationKind::Duplicate));

        let late = Solution::from_routes(&i, vec![vec![1, 2]]);
        let rep = verify_solution(&late, &i);
        let tw: Vec<_> = rep
            .violations
            .iter()
            .filter(|v| v.kind == RouteViolationKind::TimeWindow)
            .collect();
        assert_eq!(tw.len(), 1);
        assert_eq!(tw[0].customer, Some(2));
    }

    #[test]
    fn single_customer_cost_is_out_and_back() {
        let mut i = inst(Task::Cvrptw, vec![cust(3.0, 4.0, 1.0, 0.0, 90.0, 1.0)]);
        i.time_factor = 2.0;
        let env = RoutingEnv::new(&i);
        let s = env.apply_action(&env.initial_state(), 1).unwrap();
        let s = env.apply_action(&s, DEPOT).unwrap();
        let sol = env.to_solution(&s).unwrap();
        let delta = env.travel_time(0, 1);
        assert_eq!(sol.distance, 2.0 * delta / i.time_factor);
        assert!(verify_solution(&sol, &i).is_feasible());
    }

    #[test]
    fn solution_json_fields() {
        let i = inst(Task::Cvrp, vec![cust(1.0, 0.0, 1.0, 0.0, 0.0, 0.0)]);
        let sol = Solution::from_routes(&i, vec![vec![1]]);
        let v: serde_json::Value = serde_json::from_str(&sol.to_json().unwrap()).unwrap();
        assert!(v.get("routes").is_some() && v.get("distance").is_some() && v.get("trace").is_some());
        assert_eq!(sol.node_sequence(), vec![0, 1, 0]);
    }
}
