use std::path::PathBuf;

use proptest::prelude::*;

use conroute_core::instances::{
    generate_cvrptw, parse_solomon, parse_tsplib, parse_tsplib_tour, random_instance, validate_instance, LatentPrior,
};
use conroute_core::mdp::{verify_solution, RouteViolationKind};
use conroute_core::{DistanceRule, RoutingInstance, Solution, Task};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(data(name)).unwrap()
}

#[test]
fn berlin52_optimal_tour_costs_7542() {
    let inst = parse_tsplib(&read("berlin52.tsp")).unwrap();
    assert_eq!(inst.num_customers(), 51);
    assert_eq!(inst.distance_rule, DistanceRule::Euc2dRounded);
    let tour = parse_tsplib_tour(&read("berlin52.opt.tour")).unwrap();
    assert_eq!(tour.len(), 52);
    assert_eq!(tour[0], 0);
    let sol = Solution::from_routes(&inst, vec![tour[1..].to_vec()]);
    let report = verify_solution(&sol, &inst);
    assert!(report.is_feasible(), "{:?}", report.violations);
    assert_eq!(report.distance, 7542.0);
}

#[test]
fn solomon_headers_and_depot() {
    for (file, name) in [("C101.txt", "C101"), ("R101.txt", "R101")] {
        let inst = parse_solomon(&read(file)).unwrap();
        assert_eq!(inst.name, name);
        assert_eq!(inst.task, Task::Cvrptw);
        assert_eq!(inst.num_customers(), 100);
        assert_eq!(inst.distance_rule, DistanceRule::Exact);
        assert!(validate_instance(&inst).is_valid());
    }
    let c101 = parse_solomon(&read("C101.txt")).unwrap();
    assert_eq!(c101.capacity, Some(200.0));
    assert_eq!(c101.horizon, Some(1236.0));
    assert_eq!(c101.depot, [40.0, 50.0]);
    let first = c101.customer(1);
    assert_eq!(first.position, [45.0, 68.0]);
    assert_eq!(
        (first.demand, first.window_open, first.window_close, first.service_time),
        (10.0, 912.0, 967.0, 90.0)
    );
}

#[test]
fn load_dispatches_on_format() {
    let a = RoutingInstance::load(&data("C101.txt")).unwrap();
    let b = RoutingInstance::load(&data("berlin52.tsp")).unwrap();
    assert_eq!(a.task, Task::Cvrptw);
    assert_eq!(b.task, Task::Tsp);
}

#[test]
fn truncated_documents_fail_with_line_numbers() {
    let text = read("C101.txt");
    let cut: String = text.lines().take(14).collect::<Vec<_>>().join("\n") + "\n 13 x 1 1 1 1 1\n";
    let err = parse_solomon(&cut).unwrap_err().to_string();
    assert!(err.contains("line 15"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_instances_are_valid(n in 1usize..60, seed in any::<u64>()) {
        let latents = LatentPrior::default().sample(seed);
        let inst = generate_cvrptw(&latents, n).unwrap();
        prop_assert_eq!(inst.num_customers(), n);
        let report = validate_instance(&inst);
        prop_assert!(report.is_valid(), "{:?}", report.violations);
        for j in 1..=n {
            let sol = Solution::from_routes(&inst, vec![vec![j]]);
            let r = verify_solution(&sol, &inst);
            let single_route_ok = r.violations.iter().all(|v| v.kind == RouteViolationKind::Missing);
            prop_assert!(single_route_ok, "customer {} unreachable: {:?}", j, r.violations);
        }
    }

    #[test]
    fn json_round_trip_is_exact(task in prop_oneof![Just(Task::Tsp), Just(Task::Cvrp), Just(Task::Cvrptw)],
                                n in 1usize..30, seed in any::<u64>()) {
        let inst = random_instance(task, n, seed).unwrap();
        let back = RoutingInstance::from_json(&inst.to_json().unwrap()).unwrap();
        prop_assert_eq!(inst, back);
    }

    #[test]
    fn generation_is_seed_deterministic(n in 1usize..40, seed in any::<u64>()) {
        let a = generate_cvrptw(&LatentPrior::default().sample(seed), n).unwrap();
        let b = generate_cvrptw(&LatentPrior::default().sample(seed), n).unwrap();
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
