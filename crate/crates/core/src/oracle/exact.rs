use crate::error::{contract, Error, Result};
use crate::instances::{RoutingInstance, Task};
use crate::mdp::{RoutingEnv, Solution, DEPOT};

pub const TSP_LIMIT: usize = 15;
pub const VRP_LIMIT: usize = 10;

fn tour_solution(inst: &RoutingInstance, tour: Vec<usize>) -> Solution {
    Solution::from_routes(inst, vec![tour])
}

/// Held-Karp dynamic program over the customers, with the depot as the
/// fixed start of the closed tour.
pub fn exact_tsp(inst: &RoutingInstance) -> Result<Solution> {
    let n = inst.num_customers();
    if n > TSP_LIMIT {
        return Err(Error::TooLarge {
            size: n,
            limit: TSP_LIMIT,
        });
    }
    if n == 0 {
        return Ok(tour_solution(inst, Vec::new()));
    }
    let env = RoutingEnv::new(inst);
    let full = 1usize << n;
    // dp[mask * n + j]: shortest path from the depot through `mask` ending at customer j+1
    let mut dp = vec![f64::INFINITY; full * n];
    let mut parent = vec![usize::MAX; full * n];
    for j in 0..n {
        dp[(1 << j) * n + j] = env.distance(DEPOT, j + 1);
    }
    for mask in 1..full {
        for j in 0..n {
            if mask & (1 << j) == 0 {
                continue;
            }
            let cur = dp[mask * n + j];
            if !cur.is_finite() {
                continue;
            }
            for k in 0..n {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let cand = cur + env.distance(j + 1, k + 1);
                if cand < dp[next * n + k] {
                    dp[next * n + k] = cand;
                    parent[next * n + k] = j;
                }
            }
        }
    }
    let last_mask = full - 1;
    let mut best = (f64::INFINITY, 0);
    for j in 0..n {
        let c = dp[last_mask * n + j] + env.distance(j + 1, DEPOT);
        if c < best.0 {
            best = (c, j);
        }
    }
    let mut tour = Vec::with_capacity(n);
    let (mut mask, mut j) = (last_mask, best.1);
    loop {
        tour.push(j + 1);
        let p = parent[mask * n + j];
        mask &= !(1 << j);
        if p == usize::MAX {
            break;
        }
        j = p;
    }
    tour.reverse();
    Ok(tour_solution(inst, tour))
}

/// Minimum over every permutation of the customers. Used to cross-check
/// [`exact_tsp`]; practical up to about ten customers.
pub fn enumerate_tsp(inst: &RoutingInstance) -> Result<Solution> {
    let n = inst.num_customers();
    if n > VRP_LIMIT {
        return Err(Error::TooLarge {
            size: n,
            limit: VRP_LIMIT,
        });
    }
    let env = RoutingEnv::new(inst);
    let mut perm: Vec<usize> = (1..=n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    permute(&mut perm, 0, &mut |p| {
        let mut c = 0.0;
        let mut prev = DEPOT;
        for &j in p {
            c += env.distance(prev, j);
            prev = j;
        }
        c += env.distance(prev, DEPOT);
        if c < best.0 {
            best = (c, p.to_vec());
        }
    });
    Ok(tour_solution(inst, best.1))
}

fn permute(v: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

#[derive(Clone, Copy)]
struct Node {
    current: usize,
    time: f64,
    load: f64,
    visited: u32,
    served: usize,
    distance: f64,
}

struct Search<'a> {
    env: RoutingEnv<'a>,
    n: usize,
    prune: bool,
    /// Cheapest edge entering each node.
    min_in: Vec<f64>,
    /// Customers sorted by window opening, then id.
    order: Vec<usize>,
    path: Vec<usize>,
    best: f64,
    best_path: Vec<usize>,
}

impl Search<'_> {
    fn feasible(&self, s: &Node, j: usize) -> Option<Node> {
        if s.visited & (1 << j) != 0 {
            return None;
        }
        let inst = self.env.inst;
        let c = inst.customer(j);
        let task = inst.task;
        if task.has_capacity() && c.demand > s.load {
            return None;
        }
        let mut time = s.time;
        if task.has_time() {
            let arrival = s.time + self.env.travel_time(s.current, j);
            if arrival > c.window_close {
                return None;
            }
            let departure = arrival.max(c.window_open) + c.service_time;
            if departure + self.env.travel_time(j, DEPOT) > self.env.horizon() {
                return None;
            }
            time = departure;
        }
        Some(Node {
            current: j,
            time,
            load: s.load - if task.has_capacity() { c.demand } else { 0.0 },
            visited: s.visited | (1 << j),
            served: s.served + 1,
            distance: s.distance + self.env.distance(s.current, j),
        })
    }

    fn lower_bound(&self, s: &Node) -> f64 {
        let mut lb = s.distance;
        let mut open = false;
        for j in 1..=self.n {
            if s.visited & (1 << j) == 0 {
                lb += self.min_in[j];
                open = true;
            }
        }
        if open || s.current != DEPOT {
            lb += self.min_in[DEPOT];
        }
        lb
    }

    fn dfs(&mut self, s: Node) {
        let all = (s.visited.count_ones() as usize) == self.n;
        if all {
            let total = s.distance + self.env.distance(s.current, DEPOT);
            if total < self.best {
                self.best = total;
                self.best_path = self.path.clone();
            }
            return;
        }
        if self.prune && self.lower_bound(&s) >= self.best {
            return;
        }
        for idx in 0..self.order.len() {
            let j = self.order[idx];
            if let Some(next) = self.feasible(&s, j) {
                self.path.push(j);
                self.dfs(next);
                self.path.pop();
            }
        }
        if s.current != DEPOT && s.served >= 1 {
            let inst = self.env.inst;
            let next = Node {
                current: DEPOT,
                time: 0.0,
                load: inst.capacity_or_inf(),
                visited: s.visited,
                served: 0,
                distance: s.distance + self.env.distance(s.current, DEPOT),
            };
            self.path.push(DEPOT);
            self.dfs(next);
            self.path.pop();
        }
    }
}

fn search_vrp(inst: &RoutingInstance, prune: bool) -> Result<Solution> {
    if inst.task == Task::Tsp {
        return Err(contract("exact_vrp expects a CVRP or CVRPTW instance"));
    }
    let n = inst.num_customers();
    if n > VRP_LIMIT {
        return Err(Error::TooLarge {
            size: n,
            limit: VRP_LIMIT,
        });
    }
    let env = RoutingEnv::new(inst);
    let min_in = (0..=n)
        .map(|j| {
            (0..=n)
                .filter(|&i| i != j)
                .map(|i| env.distance(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .map(|d| if d.is_finite() { d } else { 0.0 })
        .collect();
    let mut order: Vec<usize> = (1..=n).collect();
    order.sort_by(|&a, &b| {
        inst.customer(a)
            .window_open
            .total_cmp(&inst.customer(b).window_open)
            .then(a.cmp(&b))
    });
    let mut search = Search {
        env,
        n,
        prune,
        min_in,
        order,
        path: Vec::new(),
        best: f64::INFINITY,
        best_path: Vec::new(),
    };
    let root = Node {
        current: DEPOT,
        time: 0.0,
        load: inst.capacity_or_inf(),
        visited: 0,
        served: 0,
        distance: 0.0,
    };
    search.dfs(root);
    if !search.best.is_finite() {
        return Err(Error::InvalidInstance("no feasible solution exists".into()));
    }
    let routes = search
        .best_path
        .split(|&v| v == DEPOT)
        .filter(|r| !r.is_empty())
        .map(<[usize]>::to_vec)
        .collect();
    Ok(Solution::from_routes(inst, routes))
}

/// Depth-first search over customer orderings with depot returns, pruned by
/// a lower bound on the remaining distance.
pub fn exact_vrp(inst: &RoutingInstance) -> Result<Solution> {
    search_vrp(inst, true)
}

/// The same search without bound pruning.
pub fn enumerate_vrp(inst: &RoutingInstance) -> Result<Solution> {
    search_vrp(inst, false)
}

/// Compares [`exact_tsp`] with [`enumerate_tsp`] on `tsp_trials` random
/// 8-customer TSP instances and [`exact_vrp`] with [`enumerate_vrp`] on
/// `vrp_trials` random 8-customer CVRPTW instances.
pub fn exact_solver_check(tsp_trials: usize, vrp_trials: usize, seed: u64) -> Result<super::CheckReport> {
    let tol = 1e-9;
    let mut failures = 0;
    let mut max_error = 0.0f64;
    let mut record = |a: &Solution, b: &Solution, inst: &RoutingInstance| {
        let err = (a.distance - b.distance).abs();
        max_error = max_error.max(err);
        if err > tol || !crate::mdp::verify_solution(a, inst).is_feasible() {
            failures += 1;
        }
    };
    for t in 0..tsp_trials {
        let inst = crate::instances::random_instance(Task::Tsp, 8, crate::training::derive_seed(seed, t as u64, 1))?;
        record(&exact_tsp(&inst)?, &enumerate_tsp(&inst)?, &inst);
    }
    for t in 0..vrp_trials {
        let inst = crate::instances::random_instance(Task::Cvrptw, 8, crate::training::derive_seed(seed, t as u64, 2))?;
        record(&exact_vrp(&inst)?, &enumerate_vrp(&inst)?, &inst);
    }
    Ok(super::CheckReport {
        name: "exact_solvers".into(),
        trials: tsp_trials + vrp_trials,
        failures,
        max_error,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_cvrptw, random_instance, CustomerRecord, DistanceRule, GeneratorLatents};
    use crate::mdp::verify_solution;

    fn plain(task: Task, pts: &[[f64; 2]]) -> RoutingInstance {
        RoutingInstance {
            task,
            depot: pts[0],
            customers: pts[1..].iter().map(|&p| CustomerRecord::at(p)).collect(),
            capacity: None,
            horizon: None,
            distance_rule: DistanceRule::Exact,
            name: "t".into(),
            time_factor: 1.0,
            spatial_scale: None,
        }
    }

    #[test]
    fn square_and_line() {
        let sq = plain(Task::Tsp, &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert!((exact_tsp(&sq).unwrap().distance - 4.0).abs() < 1e-12);
        let line = plain(Task::Tsp, &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert!((exact_tsp(&line).unwrap().distance - 4.0).abs() < 1e-12);
    }

    #[test]
    fn held_karp_matches_enumeration() {
        for seed in 0..10 {
            let inst = random_instance(Task::Tsp, 7, seed).unwrap();
            let a = exact_tsp(&inst).unwrap();
            let b = enumerate_tsp(&inst).unwrap();
            assert!((a.distance - b.distance).abs() < 1e-9);
            assert!(verify_solution(&a, &inst).is_feasible());
        }
    }

    #[test]
    fn size_caps() {
        let big = random_instance(Task::Tsp, 16, 0).unwrap();
        assert!(matches!(exact_tsp(&big), Err(Error::TooLarge { size: 16, limit: 15 })));
        let big = random_instance(Task::Cvrp, 11, 0).unwrap();
        assert!(matches!(exact_vrp(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn single_customer_out_and_back() {
        let mut inst = plain(Task::Cvrp, &[[0.0, 0.0], [3.0, 4.0]]);
        inst.capacity = Some(10.0);
        inst.customers[0].demand = 1.0;
        let sol = exact_vrp(&inst).unwrap();
        assert_eq!(sol.routes, vec![vec![1]]);
        assert!((sol.distance - 10.0).abs() < 1e-12);
    }

    #[test]
    fn full_demand_forces_two_routes() {
        let mut inst = plain(Task::Cvrp, &[[0.0, 0.0], [10.0, 0.0], [-10.0, 0.0]]);
        inst.capacity = Some(5.0);
        for c in &mut inst.customers {
            c.demand = 5.0;
        }
        let sol = exact_vrp(&inst).unwrap();
        assert_eq!(sol.routes.len(), 2);
        assert!((sol.distance - 40.0).abs() < 1e-12);
    }

    #[test]
    fn pruning_preserves_optimum() {
        let inst = generate_cvrptw(&GeneratorLatents::default(), 6).unwrap();
        let a = exact_vrp(&inst).unwrap();
        let b = enumerate_vrp(&inst).unwrap();
        assert!((a.distance - b.distance).abs() < 1e-9);
        assert!(verify_solution(&a, &inst).is_feasible());
    }
}
