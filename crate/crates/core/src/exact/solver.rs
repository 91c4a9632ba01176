//! Optimal route search: a full-enumeration oracle and the branch-and-bound
//! solver used by the CLI. Both rank candidates by (makespan, flattened
//! route tensor), so equal-cost optima resolve to the same canonical answer.

use std::time::Instant;

use itertools::Itertools;

use crate::domain::{DistanceMatrix, Instance};

use super::{sequence_cost, ExactSolution, RouteMatrix, SolveError, SolveLimits};

/// Candidate ranking shared by both searches: lower makespan wins, ties go
/// to the lexicographically smaller flattened route tensor.
struct Best {
    makespan: f64,
    routes: Vec<Vec<usize>>,
    flat: Vec<bool>,
}

impl Best {
    fn consider(this: &mut Option<Best>, instance: &Instance, makespan: f64, routes: &[Vec<usize>]) {
        let better = match this {
            None => true,
            Some(best) => {
                makespan < best.makespan
                    || (makespan == best.makespan
                        && lex_less(instance, routes, &best.flat))
            }
        };
        if better {
            let flat = RouteMatrix::from_sequences(
                instance.n_responders(),
                instance.n_victims(),
                routes,
            )
            .flattened()
            .to_vec();
            *this = Some(Best { makespan, routes: routes.to_vec(), flat });
        }
    }
}

fn lex_less(instance: &Instance, routes: &[Vec<usize>], reference: &[bool]) -> bool {
    let flat =
        RouteMatrix::from_sequences(instance.n_responders(), instance.n_victims(), routes);
    flat.flattened() < reference
}

fn check_size(instance: &Instance, limits: &SolveLimits) -> Result<(), SolveError> {
    let victims = instance.n_victims();
    if victims > limits.max_victims {
        return Err(SolveError::TooManyVictims { victims, limit: limits.max_victims });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

/// Enumerate every assignment of victims to responders and every visit order
/// within each responder, and return the best routing.
///
/// Deliberately independent of [`solve_exact`]'s search (no pruning, no
/// shared recursion) so it can serve as a correctness oracle. The victim
/// cap still applies; the time limit is ignored.
pub fn brute_force_solve(
    instance: &Instance,
    limits: &SolveLimits,
) -> Result<ExactSolution, SolveError> {
    check_size(instance, limits)?;
    let n = instance.n_responders();
    let m = instance.n_victims();
    if m == 0 {
        return Ok(ExactSolution::from_routes(instance, vec![Vec::new(); n]));
    }
    let d = instance.distance_matrix();
    let mut best: Option<Best> = None;

    // Owner vector: owner[v] = responder that tags victim v.
    let mut owner = vec![0usize; m];
    loop {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (v, &r) in owner.iter().enumerate() {
            groups[r].push(v);
        }
        enumerate_orders(instance, &d, &groups, 0, &mut vec![Vec::new(); n], &mut best);

        // Advance the base-n owner counter.
        let mut pos = 0;
        loop {
            if pos == m {
                let best = best.expect("at least one assignment was evaluated");
                return Ok(ExactSolution::from_routes(instance, best.routes));
            }
            owner[pos] += 1;
            if owner[pos] < n {
                break;
            }
            owner[pos] = 0;
            pos += 1;
        }
    }
}

/// Recurse over all visit orders within each responder's assigned group.
fn enumerate_orders(
    instance: &Instance,
    d: &DistanceMatrix,
    groups: &[Vec<usize>],
    r: usize,
    routes: &mut Vec<Vec<usize>>,
    best: &mut Option<Best>,
) {
    if r == groups.len() {
        let makespan = routes
            .iter()
            .enumerate()
            .map(|(i, seq)| sequence_cost(instance, d, i, seq))
            .fold(0.0, f64::max);
        Best::consider(best, instance, makespan, routes);
        return;
    }
    let len = groups[r].len();
    for perm in groups[r].iter().copied().permutations(len) {
        routes[r] = perm;
        enumerate_orders(instance, d, groups, r + 1, routes, best);
    }
    routes[r] = Vec::new();
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

/// Find a routing of provably minimal makespan.
///
/// Depth-first search that grows responder routes one appended victim at a
/// time (responders are completed in index order), pruning any branch whose
/// cost lower bound strictly exceeds the incumbent; equal-cost branches stay
/// alive so the canonical tie-break matches [`brute_force_solve`] exactly.
pub fn solve_exact(instance: &Instance, limits: &SolveLimits) -> Result<ExactSolution, SolveError> {
    check_size(instance, limits)?;
    let n = instance.n_responders();
    let m = instance.n_victims();
    if m == 0 {
        return Ok(ExactSolution::from_routes(instance, vec![Vec::new(); n]));
    }
    let d = instance.distance_matrix();

    // Cheapest way into each victim node from anywhere, for the lower bound.
    let min_entry: Vec<f64> = (1..=m)
        .map(|k| {
            (0..=m)
                .filter(|&j| j != k)
                .map(|j| d.get(j, k))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    // cheapest_later[v][r]: cheapest completion bound for victim v if it is
    // routed to any responder with index >= r (fresh-route bound).
    let mut cheapest_later = vec![vec![f64::INFINITY; n + 1]; m];
    for (v, row) in cheapest_later.iter_mut().enumerate() {
        for r in (0..n).rev() {
            let spec = instance.responders[r];
            let own = min_entry[v] / spec.speed + f64::from(spec.tag_time);
            row[r] = row[r + 1].min(own);
        }
    }

    let mut search = Search {
        instance,
        d: &d,
        min_entry,
        cheapest_later,
        best: seed_incumbent(instance, &d),
        deadline: limits.time_limit.map(|t| (Instant::now(), t)),
        node_count: 0,
        timed_out: false,
    };
    let mut routes: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut remaining: Vec<bool> = vec![true; m];
    let mut costs = vec![0.0; n];
    search.dfs(0, 0, m, &mut routes, &mut remaining, &mut costs, 0.0);

    if search.timed_out {
        let incumbent = search
            .best
            .map(|b| Box::new(ExactSolution::from_routes(instance, b.routes)));
        return Err(SolveError::TimedOut { incumbent });
    }
    let best = search.best.expect("search space is never empty");
    Ok(ExactSolution::from_routes(instance, best.routes))
}

/// Greedy warm start: repeatedly hand the idlest responder its nearest
/// unrouted victim. Only used to seed the incumbent; the search still proves
/// optimality.
fn seed_incumbent(instance: &Instance, d: &DistanceMatrix) -> Option<Best> {
    let n = instance.n_responders();
    let m = instance.n_victims();
    let mut routes: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut at = vec![0usize; n]; // current node per responder
    let mut cost = vec![0.0f64; n];
    let mut remaining: Vec<usize> = (0..m).collect();
    while !remaining.is_empty() {
        let i = (0..n)
            .min_by(|&a, &b| cost[a].total_cmp(&cost[b]))
            .expect("at least one responder");
        let spec = instance.responders[i];
        let (pos, &victim) = remaining
            .iter()
            .enumerate()
            .min_by(|(_, &a), (_, &b)| d.get(at[i], a + 1).total_cmp(&d.get(at[i], b + 1)))
            .expect("non-empty remaining");
        cost[i] += d.get(at[i], victim + 1) / spec.speed + f64::from(spec.tag_time);
        at[i] = victim + 1;
        routes[i].push(victim);
        remaining.remove(pos);
    }
    let mut best = None;
    let makespan = routes
        .iter()
        .enumerate()
        .map(|(i, seq)| sequence_cost(instance, d, i, seq))
        .fold(0.0, f64::max);
    Best::consider(&mut best, instance, makespan, &routes);
    best
}

struct Search<'a> {
    instance: &'a Instance,
    d: &'a DistanceMatrix,
    min_entry: Vec<f64>,
    cheapest_later: Vec<Vec<f64>>,
    best: Option<Best>,
    deadline: Option<(Instant, std::time::Duration)>,
    node_count: u64,
    timed_out: bool,
}

impl Search<'_> {
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &mut self,
        r: usize,
        at: usize,
        left: usize,
        routes: &mut Vec<Vec<usize>>,
        remaining: &mut Vec<bool>,
        costs: &mut Vec<f64>,
        max_done: f64,
    ) {
        if self.timed_out {
            return;
        }
        self.node_count += 1;
        if self.node_count % 1024 == 1 {
            if let Some((started, budget)) = self.deadline {
                if started.elapsed() > budget {
                    self.timed_out = true;
                    return;
                }
            }
        }

        let n = self.instance.n_responders();
        if r == n {
            if left == 0 {
                let makespan = max_done;
                Best::consider(&mut self.best, self.instance, makespan, routes);
            }
            return;
        }

        // Lower bound: finished work plus, for each unrouted victim, the
        // cheapest completion over "append to the open route" and "route via
        // any later responder". Prune strictly worse branches only, so
        // equal-cost optima survive for the canonical tie-break.
        if let Some(best) = &self.best {
            let spec = self.instance.responders[r];
            let mut lb = max_done.max(costs[r]);
            for v in 0..remaining.len() {
                if !remaining[v] {
                    continue;
                }
                let via_open = costs[r] + self.min_entry[v] / spec.speed + f64::from(spec.tag_time);
                let bound = via_open.min(self.cheapest_later[v][r + 1]);
                lb = lb.max(bound);
            }
            if lb > best.makespan {
                return;
            }
        }

        // Close responder r and hand the rest to the next one.
        self.dfs(r + 1, 0, left, routes, remaining, costs, max_done.max(costs[r]));

        // Or append each still-unrouted victim to responder r's route.
        let spec = self.instance.responders[r];
        for v in 0..remaining.len() {
            if !remaining[v] {
                continue;
            }
            let leg = self.d.get(at, v + 1) / spec.speed + f64::from(spec.tag_time);
            remaining[v] = false;
            routes[r].push(v);
            // Save and restore rather than subtracting the leg back out:
            // float addition does not round-trip, and the tie-break needs
            // costs bitwise identical to a fresh leg-by-leg sum.
            let saved = costs[r];
            costs[r] = saved + leg;
            self.dfs(r, v + 1, left - 1, routes, remaining, costs, max_done);
            costs[r] = saved;
            routes[r].pop();
            remaining[v] = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_instance, Point, ResponderSpec, ScenarioConfig, VictimSpec};
    use crate::exact::validate;
    use approx::assert_relative_eq;

    fn responders(n: usize) -> Vec<ResponderSpec> {
        (0..n).map(|id| ResponderSpec { id, speed: 1.0, tag_time: 3 }).collect()
    }

    fn victims_at(points: &[(f64, f64)]) -> Vec<VictimSpec> {
        points
            .iter()
            .enumerate()
            .map(|(id, &(x, y))| VictimSpec { id, position: Point::new(x, y), health: 0.5 })
            .collect()
    }

    fn instance(n: usize, points: &[(f64, f64)]) -> Instance {
        Instance::new(100.0, 60.0, Point::new(0.0, 0.0), responders(n), victims_at(points), 0)
            .unwrap()
    }

    #[test]
    fn single_victim_makespan_is_travel_plus_tag() {
        let inst = instance(1, &[(5.0, 0.0)]);
        let sol = solve_exact(&inst, &SolveLimits::default()).unwrap();
        assert_relative_eq!(sol.makespan, 8.0);
        assert_eq!(sol.routes, vec![vec![0]]);
    }

    #[test]
    fn collinear_victims_are_visited_in_order() {
        // 0 -> 2 -> 4 -> 6 gives 2+3 + 2+3 + 2+3 = 15; any other order is worse.
        let inst = instance(1, &[(2.0, 0.0), (4.0, 0.0), (6.0, 0.0)]);
        let sol = solve_exact(&inst, &SolveLimits::default()).unwrap();
        assert_relative_eq!(sol.makespan, 15.0);
        assert_eq!(sol.routes, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn two_responders_split_symmetric_victims() {
        let inst = instance(2, &[(5.0, 0.0), (5.0, 0.0)]);
        let sol = solve_exact(&inst, &SolveLimits::default()).unwrap();
        let oracle = brute_force_solve(&inst, &SolveLimits::default()).unwrap();
        assert_relative_eq!(sol.makespan, 8.0);
        // Identical-cost optima resolve to the same canonical routing.
        assert_eq!(sol.routes, oracle.routes);
        let mut tagged: Vec<usize> = sol.routes.iter().flatten().copied().collect();
        tagged.sort_unstable();
        assert_eq!(tagged, vec![0, 1]);
        assert_eq!(sol.routes.iter().filter(|r| r.len() == 1).count(), 2);
    }

    #[test]
    fn surplus_responders_stay_home() {
        let inst = instance(3, &[(4.0, 3.0)]);
        let sol = solve_exact(&inst, &SolveLimits::default()).unwrap();
        assert_relative_eq!(sol.makespan, 8.0);
        assert_eq!(sol.routes.iter().filter(|r| r.is_empty()).count(), 2);
    }

    #[test]
    fn solver_matches_oracle_on_random_instances() {
        let mut checked = 0;
        for seed in 0..40u64 {
            let n = 1 + (seed as usize) % 3;
            let m = 2 + (seed as usize) % 5;
            let config = ScenarioConfig::new(n, m, 40.0, 25.0);
            let inst = generate_instance(&config, seed).unwrap();
            let sol = solve_exact(&inst, &SolveLimits::default()).unwrap();
            let oracle = brute_force_solve(&inst, &SolveLimits::default()).unwrap();
            assert_eq!(sol.makespan.to_bits(), oracle.makespan.to_bits(), "seed {seed}");
            assert_eq!(sol.routes, oracle.routes, "seed {seed}");
            let report = validate(&inst, &sol.matrix(&inst));
            assert!(report.is_feasible(), "seed {seed}: {:?}", report.violations);
            checked += 1;
        }
        assert_eq!(checked, 40);
    }

    #[test]
    fn optimum_never_beats_an_arbitrary_feasible_routing() {
        for seed in 0..20u64 {
            let config = ScenarioConfig::new(2, 5, 40.0, 25.0);
            let inst = generate_instance(&config, seed).unwrap();
            let d = inst.distance_matrix();
            let sol = solve_exact(&inst, &SolveLimits::default()).unwrap();
            // A blunt feasible routing: odd victims to responder 0 in index
            // order, even victims to responder 1.
            let routes: Vec<Vec<usize>> = vec![
                (0..5).filter(|v| v % 2 == 1).collect(),
                (0..5).filter(|v| v % 2 == 0).collect(),
            ];
            let blunt = routes
                .iter()
                .enumerate()
                .map(|(i, seq)| sequence_cost(&inst, &d, i, seq))
                .fold(0.0, f64::max);
            assert!(sol.makespan <= blunt + 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn victim_cap_is_enforced() {
        let config = ScenarioConfig::new(2, 10, 40.0, 25.0);
        let inst = generate_instance(&config, 1).unwrap();
        match solve_exact(&inst, &SolveLimits::default()) {
            Err(SolveError::TooManyVictims { victims: 10, limit: 9 }) => {}
            other => panic!("expected size error, got {other:?}"),
        }
    }

    #[test]
    fn zero_time_budget_times_out() {
        let config = ScenarioConfig::new(3, 9, 40.0, 25.0);
        let inst = generate_instance(&config, 1).unwrap();
        let limits =
            SolveLimits { time_limit: Some(std::time::Duration::ZERO), ..SolveLimits::default() };
        match solve_exact(&inst, &limits) {
            Err(SolveError::TimedOut { .. }) => {}
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn no_victims_is_a_trivial_solution() {
        let inst = Instance::new(
            10.0,
            10.0,
            Point::new(0.0, 0.0),
            responders(2),
            vec![],
            0,
        )
        .unwrap();
        let sol = solve_exact(&inst, &SolveLimits::default()).unwrap();
        assert_eq!(sol.makespan, 0.0);
        assert_eq!(sol.routes, vec![Vec::<usize>::new(); 2]);
    }
}
