//! Per-step candidate consequence tables.
//!
//! For every feasible customer the table records the one-step effects of
//! choosing it (travel, wait, slack, arrival, departure for CVRPTW; travel,
//! demand ratio and depot distance for CVRP; travel for TSP), plus an angle
//! feature. Relative features are centered on the feasible-set mean; the depot
//! row is the centered image of a zero raw vector.

use std::io::Write;

use crate::error::Result;
use crate::instances::{Point, Task};
use crate::mdp::{ActionMask, ConstructionState, RoutingEnv, DEPOT};

pub const SUMMARY_DIM: usize = 4;
pub const SLACK_FLOOR: f64 = -1.0;
pub const DEMAND_RATIO_CAP: f64 = 1.5;

pub fn rel_dim(task: Task) -> usize {
    match task {
        Task::Cvrptw => 5,
        Task::Cvrp => 3,
        Task::Tsp => 1,
    }
}

pub fn abs_dim(_task: Task) -> usize {
    1
}

/// Width of the per-candidate vector `φ = [x_abs; x_rel]`.
pub fn phi_dim(task: Task) -> usize {
    rel_dim(task) + abs_dim(task)
}

/// Row-major candidate features for one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsequenceTable {
    pub task: Task,
    /// Feasible customers, ascending (the set `F_t`).
    pub candidates: Vec<usize>,
    /// Whether the depot is a selectable action at this step.
    pub depot: bool,
    pub rel_dim: usize,
    pub abs_dim: usize,
    /// `|F_t| × rel_dim`, uncentered.
    pub x_rel: Vec<f64>,
    /// `|F_t| × abs_dim`.
    pub x_abs: Vec<f64>,
    /// Raw relative vector of the depot action (zero unless probed).
    pub depot_raw: Vec<f64>,
    /// Column means of `x_rel` over `F_t`; zero when `F_t` is empty.
    pub mu: Vec<f64>,
    /// `x_rel − μ`.
    pub x_bar: Vec<f64>,
    /// `depot_raw − μ`.
    pub depot_row: Vec<f64>,
}

impl ConsequenceTable {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn rel_row(&self, i: usize) -> &[f64] {
        &self.x_rel[i * self.rel_dim..(i + 1) * self.rel_dim]
    }

    pub fn centered_row(&self, i: usize) -> &[f64] {
        &self.x_bar[i * self.rel_dim..(i + 1) * self.rel_dim]
    }

    pub fn abs_row(&self, i: usize) -> &[f64] {
        &self.x_abs[i * self.abs_dim..(i + 1) * self.abs_dim]
    }

    /// Action ids in table order: candidates, then the depot if selectable.
    pub fn actions(&self) -> Vec<usize> {
        let mut a = self.candidates.clone();
        if self.depot {
            a.push(DEPOT);
        }
        a
    }

    /// Stacked `φ` rows for every action, `[x_abs; relative block]`, using the
    /// centered block when `centered` and the raw one otherwise. The depot row
    /// has a zero absolute block.
    pub fn phi(&self, centered: bool) -> (usize, Vec<f64>) {
        let width = self.rel_dim + self.abs_dim;
        let mut out = Vec::with_capacity((self.len() + 1) * width);
        for i in 0..self.len() {
            out.extend_from_slice(self.abs_row(i));
            out.extend_from_slice(if centered {
                self.centered_row(i)
            } else {
                self.rel_row(i)
            });
        }
        if self.depot {
            out.extend(std::iter::repeat_n(0.0, self.abs_dim));
            out.extend_from_slice(if centered { &self.depot_row } else { &self.depot_raw });
        }
        (width, out)
    }

    /// Adds the same offset `delta` to every raw relative row (depot included)
    /// and recenters.
    pub fn with_offset(&self, delta: &[f64]) -> ConsequenceTable {
        assert_eq!(delta.len(), self.rel_dim, "offset width must match relative features");
        let mut t = self.clone();
        for row in t.x_rel.chunks_mut(self.rel_dim) {
            for (x, d) in row.iter_mut().zip(delta) {
                *x += d;
            }
        }
        for (x, d) in t.depot_raw.iter_mut().zip(delta) {
            *x += d;
        }
        center(&mut t);
        t
    }

    /// One CSV row per action: id, x_rel…, x_bar…, x_abs…, μ….
    pub fn write_csv<W: Write>(&self, step: usize, out: &mut csv::Writer<W>) -> Result<()> {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>();
        for i in 0..self.len() {
            let mut rec = vec![step.to_string(), self.candidates[i].to_string()];
            rec.extend(fmt(self.rel_row(i)));
            rec.extend(fmt(self.centered_row(i)));
            rec.extend(fmt(self.abs_row(i)));
            rec.extend(fmt(&self.mu));
            out.write_record(&rec)?;
        }
        if self.depot {
            let mut rec = vec![step.to_string(), DEPOT.to_string()];
            rec.extend(fmt(&self.depot_raw));
            rec.extend(fmt(&self.depot_row));
            rec.extend(fmt(&vec![0.0; self.abs_dim]));
            rec.extend(fmt(&self.mu));
            out.write_record(&rec)?;
        }
        Ok(())
    }
}

/// Header matching [`ConsequenceTable::write_csv`].
pub fn csv_header(task: Task) -> Vec<String> {
    let (p, q) = (rel_dim(task), abs_dim(task));
    let mut h = vec!["step".to_string(), "id".to_string()];
    h.extend((0..p).map(|k| format!("x_rel{k}")));
    h.extend((0..p).map(|k| format!("x_bar{k}")));
    h.extend((0..q).map(|k| format!("x_abs{k}")));
    h.extend((0..p).map(|k| format!("mu{k}")));
    h
}

/// Signed angle at `center` from `from` to `to`, divided by π. Uses the +x axis
/// as reference when `from` coincides with `center`.
fn signed_angle(center: Point, from: Point, to: Point) -> f64 {
    let (ax, ay) = (from[0] - center[0], from[1] - center[1]);
    let (bx, by) = (to[0] - center[0], to[1] - center[1]);
    if bx == 0.0 && by == 0.0 {
        return 0.0;
    }
    let (ax, ay) = if ax == 0.0 && ay == 0.0 { (1.0, 0.0) } else { (ax, ay) };
    (ax * by - ay * bx).atan2(ax * bx + ay * by) / std::f64::consts::PI
}

fn centroid(env: &RoutingEnv) -> Point {
    let n = env.num_nodes() as f64;
    let mut c = [0.0, 0.0];
    for i in 0..env.num_nodes() {
        let p = env.inst.position(i);
        c[0] += p[0] / n;
        c[1] += p[1] / n;
    }
    c
}

/// Builds the table for `state` restricted to the customers in `mask`, with
/// the centered block already filled in.
pub fn candidate_features(env: &RoutingEnv, state: &ConstructionState, mask: &ActionMask) -> ConsequenceTable {
    let task = env.task();
    let (p, q) = (rel_dim(task), abs_dim(task));
    let m = mask.customers.len();
    let mut x_rel = Vec::with_capacity(m * p);
    let mut x_abs = Vec::with_capacity(m * q);
    let inst = env.inst;
    let cur = inst.position(state.current);
    let angle_center = match task {
        Task::Tsp => centroid(env),
        _ => inst.depot,
    };
    let diam = env.diameter();
    for &j in &mask.customers {
        match task {
            Task::Cvrptw => {
                let t_max = env.horizon();
                let c = inst.customer(j);
                let tr = env.transition(state, j);
                x_rel.extend_from_slice(&[
                    tr.travel_time / t_max,
                    tr.wait / t_max,
                    ((c.window_close - tr.arrival) / t_max).max(SLACK_FLOOR),
                    tr.arrival / t_max,
                    tr.departure / t_max,
                ]);
            }
            Task::Cvrp => {
                let demand = inst.customer(j).demand;
                let ratio = if state.remaining_capacity > 0.0 {
                    (demand / state.remaining_capacity).clamp(0.0, DEMAND_RATIO_CAP)
                } else if demand > 0.0 {
                    DEMAND_RATIO_CAP
                } else {
                    0.0
                };
                x_rel.extend_from_slice(&[
                    env.distance(state.current, j) / diam,
                    ratio,
                    env.distance(j, DEPOT) / diam,
                ]);
            }
            Task::Tsp => x_rel.push(env.distance(state.current, j) / diam),
        }
        x_abs.push(signed_angle(angle_center, cur, inst.position(j)));
    }
    let mut table = ConsequenceTable {
        task,
        candidates: mask.customers.clone(),
        depot: mask.depot,
        rel_dim: p,
        abs_dim: q,
        x_rel,
        x_abs,
        depot_raw: vec![0.0; p],
        mu: vec![0.0; p],
        x_bar: Vec::new(),
        depot_row: Vec::new(),
    };
    center(&mut table);
    table
}

/// Recomputes `μ`, the centered block and the depot row from the raw block.
pub fn center(table: &mut ConsequenceTable) {
    let p = table.rel_dim;
    let m = table.len();
    // Columns are summed in sorted order so that μ does not depend on the
    // order of the candidates.
    let mut mu = vec![0.0; p];
    if m > 0 {
        let mut col = Vec::with_capacity(m);
        for (k, acc) in mu.iter_mut().enumerate() {
            col.clear();
            col.extend(table.x_rel.chunks(p).map(|row| row[k]));
            col.sort_by(f64::total_cmp);
            *acc = col.iter().sum::<f64>() / m as f64;
        }
    }
    table.x_bar = table
        .x_rel
        .chunks(p)
        .flat_map(|row| row.iter().zip(&mu).map(|(x, u)| x - u).collect::<Vec<_>>())
        .collect();
    table.depot_row = table.depot_raw.iter().zip(&mu).map(|(x, u)| x - u).collect();
    table.mu = mu;
}

/// The step summary `r_t`. Zero when no customer is feasible.
pub fn step_summary(env: &RoutingEnv, state: &ConstructionState, table: &ConsequenceTable) -> [f64; SUMMARY_DIM] {
    let m = table.len();
    if m == 0 {
        return [0.0; SUMMARY_DIM];
    }
    let rho = m as f64 / env.num_customers().max(1) as f64;
    let mean_col = |k: usize| (0..m).map(|i| table.rel_row(i)[k]).sum::<f64>() / m as f64;
    match table.task {
        Task::Cvrptw => {
            let min_slack = (0..m).map(|i| table.rel_row(i)[2]).fold(f64::INFINITY, f64::min);
            [rho, mean_col(0), mean_col(1), min_slack]
        }
        Task::Cvrp => {
            let cap = env.capacity();
            let after: Vec<f64> = table
                .candidates
                .iter()
                .map(|&j| (state.remaining_capacity - env.inst.customer(j).demand) / cap)
                .collect();
            let mean = after.iter().sum::<f64>() / m as f64;
            let min = after.iter().cloned().fold(f64::INFINITY, f64::min);
            [rho, mean_col(0), mean, min]
        }
        Task::Tsp => [rho, mean_col(0), 0.0, 0.0],
    }
}
