//! Exact min-max route optimization.
//!
//! Victims must each be tagged by exactly one responder; every responder
//! follows a route that starts at the shared start node. A route's cost is
//! the sum of leg travel times plus one tag duration per visited victim; the
//! objective is to minimize the *maximum* route cost (the time the last
//! victim is tagged, in continuous time).
//!
//! [`solve_exact`] is a depth-first branch-and-bound over (victim →
//! responder, position-in-route) assignments. [`brute_force_solve`] keeps a
//! deliberately independent full enumeration around as a slower oracle; both
//! break cost ties by the lexicographically smallest flattened route tensor,
//! so their answers are comparable bit for bit.

mod lp;
mod solver;

pub use lp::build_ilp_text;
pub use solver::{brute_force_solve, solve_exact};

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

use crate::domain::{DistanceMatrix, Instance};

/// Errors raised by the exact solver and the LP exporter.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("instance has {victims} victims; exact solving is limited to {limit}")]
    TooManyVictims { victims: usize, limit: usize },
    #[error("time limit exceeded; best incumbent carried in the error")]
    TimedOut { incumbent: Option<Box<ExactSolution>> },
    #[error("instance has no victims")]
    EmptyInstance,
}

/// Resource guards for [`solve_exact`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveLimits {
    /// Hard cap on victim count; the search space grows factorially.
    pub max_victims: usize,
    /// Optional wall-clock budget.
    pub time_limit: Option<Duration>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits { max_victims: 9, time_limit: None }
    }
}

// ---------------------------------------------------------------------------
// Route tensor
// ---------------------------------------------------------------------------

/// Binary route tensor: `get(i, j, k)` is true when responder `i` travels
/// from node `j` to node `k`.
///
/// Node 0 is the start; node `j >= 1` is victim `j - 1`. Arc targets are
/// victim nodes only (routes never return to the start). The storage keeps
/// `j == k` self-loop slots so tensor flattening matches the integer-program
/// variable layout; well-formed routes leave them unset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteMatrix {
    n: usize,
    m: usize,
    x: Vec<bool>,
}

impl RouteMatrix {
    pub fn empty(n: usize, m: usize) -> Self {
        RouteMatrix { n, m, x: vec![false; n * (m + 1) * m] }
    }

    /// Build the tensor for per-responder victim visit sequences
    /// (0-based victim indices, in visit order).
    pub fn from_sequences(n: usize, m: usize, sequences: &[Vec<usize>]) -> Self {
        assert_eq!(sequences.len(), n, "one sequence per responder");
        let mut matrix = RouteMatrix::empty(n, m);
        for (i, seq) in sequences.iter().enumerate() {
            let mut from = 0; // start node
            for &victim in seq {
                matrix.set(i, from, victim + 1, true);
                from = victim + 1;
            }
        }
        matrix
    }

    pub fn n_responders(&self) -> usize {
        self.n
    }

    pub fn n_victims(&self) -> usize {
        self.m
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.n && j <= self.m && (1..=self.m).contains(&k));
        (i * (self.m + 1) + j) * self.m + (k - 1)
    }

    /// Arc indicator for responder `i` travelling node `j` → node `k`
    /// (`k` must be a victim node).
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.x[self.idx(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.idx(i, j, k);
        self.x[idx] = value;
    }

    /// Flattened variable layout (responder-major, then from-node, then
    /// to-node); used for canonical tie-breaking between equal-cost optima.
    pub fn flattened(&self) -> &[bool] {
        &self.x
    }
}

// ---------------------------------------------------------------------------
// Costs
// ---------------------------------------------------------------------------

/// Cost of responder `i`'s route in `matrix`: the sum over its arcs of
/// travel time plus one tag duration per arc target.
pub fn route_cost(instance: &Instance, matrix: &RouteMatrix, i: usize) -> f64 {
    let d = instance.distance_matrix();
    route_cost_with(instance, &d, matrix, i)
}

/// As [`route_cost`] but reusing a precomputed distance matrix.
pub fn route_cost_with(
    instance: &Instance,
    distances: &DistanceMatrix,
    matrix: &RouteMatrix,
    i: usize,
) -> f64 {
    let spec = instance.responders[i];
    let mut cost = 0.0;
    for j in 0..=matrix.m {
        for k in 1..=matrix.m {
            if matrix.get(i, j, k) {
                cost += distances.get(j, k) / spec.speed + f64::from(spec.tag_time);
            }
        }
    }
    cost
}

/// Cost of a visit sequence for responder `i`, accumulated leg by leg in
/// visit order (the solver's summation order; keeps float results identical
/// across the solver and the oracle).
pub(crate) fn sequence_cost(
    instance: &Instance,
    distances: &DistanceMatrix,
    i: usize,
    sequence: &[usize],
) -> f64 {
    let spec = instance.responders[i];
    let mut cost = 0.0;
    let mut from = 0;
    for &victim in sequence {
        let node = victim + 1;
        cost += distances.get(from, node) / spec.speed + f64::from(spec.tag_time);
        from = node;
    }
    cost
}

// ---------------------------------------------------------------------------
// Solutions
// ---------------------------------------------------------------------------

/// An optimal routing: per-responder visit sequences plus derived times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    /// Victim indices (0-based) in visit order, one sequence per responder.
    pub routes: Vec<Vec<usize>>,
    /// Maximum route completion time (the objective value).
    pub makespan: f64,
    /// Completion time of each responder's route.
    pub per_responder_time: Vec<f64>,
    /// Tag-completion time of each victim along its responder's route.
    pub victim_completion: Vec<f64>,
}

impl ExactSolution {
    pub(crate) fn from_routes(instance: &Instance, routes: Vec<Vec<usize>>) -> Self {
        let d = instance.distance_matrix();
        let m = instance.n_victims();
        let mut per_responder_time = Vec::with_capacity(routes.len());
        let mut victim_completion = vec![0.0; m];
        for (i, seq) in routes.iter().enumerate() {
            let spec = instance.responders[i];
            let mut t = 0.0;
            let mut from = 0;
            for &victim in seq {
                let node = victim + 1;
                t += d.get(from, node) / spec.speed + f64::from(spec.tag_time);
                victim_completion[victim] = t;
                from = node;
            }
            per_responder_time.push(t);
        }
        let makespan = per_responder_time.iter().copied().fold(0.0, f64::max);
        ExactSolution { routes, makespan, per_responder_time, victim_completion }
    }

    /// The binary route tensor for this solution.
    pub fn matrix(&self, instance: &Instance) -> RouteMatrix {
        RouteMatrix::from_sequences(instance.n_responders(), instance.n_victims(), &self.routes)
    }

    /// Node visit order values: position 0 for the start, 1-based visit
    /// positions for routed victims, 1 for victims the responder never
    /// visits (any in-range value satisfies the ordering constraints for
    /// unused arcs).
    pub fn order_values(&self, instance: &Instance) -> Vec<Vec<u32>> {
        let m = instance.n_victims();
        self.routes
            .iter()
            .map(|seq| {
                let mut u = vec![1u32; m + 1];
                u[0] = 0;
                for (pos, &victim) in seq.iter().enumerate() {
                    u[victim + 1] = pos as u32 + 1;
                }
                u
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Feasibility checking
// ---------------------------------------------------------------------------

/// One broken routing rule, with enough indices to locate it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// More route starts than responders.
    StartDegree { departures: usize },
    /// A victim tagged by a number of responders other than one.
    SingleTagger { victim: usize, taggers: usize },
    /// A victim left more than once.
    LeaveOnce { victim: usize, departures: usize },
    /// A responder routed through more victims than exist.
    RouteLength { responder: usize, arcs: usize },
    /// A victim left by a responder other than its tagger.
    LeaverNotTagger { responder: usize, victim: usize },
    /// A responder's arcs contain a cycle (routes must be open paths).
    Subtour { responder: usize, nodes: Vec<usize> },
}

/// Outcome of checking a route tensor against the routing rules.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every routing rule on `matrix`, reporting all violations found.
pub fn validate(instance: &Instance, matrix: &RouteMatrix) -> FeasibilityReport {
    let n = matrix.n_responders();
    let m = matrix.n_victims();
    assert_eq!(
        (n, m),
        (instance.n_responders(), instance.n_victims()),
        "route matrix shape must match the instance"
    );
    let mut violations = Vec::new();

    // No more start departures than responders.
    let departures: usize = (0..n)
        .map(|i| (1..=m).filter(|&k| matrix.get(i, 0, k)).count())
        .sum();
    if departures > n {
        violations.push(Violation::StartDegree { departures });
    }

    // Each victim is entered (tagged) exactly once, over all responders.
    for k in 1..=m {
        let taggers: usize = (0..n)
            .map(|i| (0..=m).filter(|&j| matrix.get(i, j, k)).count())
            .sum();
        if taggers != 1 {
            violations.push(Violation::SingleTagger { victim: k - 1, taggers });
        }
    }

    // Each victim is left at most once, over all responders.
    for j in 1..=m {
        let leaves: usize = (0..n)
            .map(|i| (1..=m).filter(|&k| matrix.get(i, j, k)).count())
            .sum();
        if leaves > 1 {
            violations.push(Violation::LeaveOnce { victim: j - 1, departures: leaves });
        }
    }

    for i in 0..n {
        // A responder's route cannot exceed the victim count.
        let arcs = (0..=m)
            .flat_map(|j| (1..=m).map(move |k| (j, k)))
            .filter(|&(j, k)| matrix.get(i, j, k))
            .count();
        if arcs > m {
            violations.push(Violation::RouteLength { responder: i, arcs });
        }

        // Only the tagger of a victim may leave it.
        for k in 1..=m {
            let enters = (0..=m).any(|j| matrix.get(i, j, k));
            if !enters {
                continue;
            }
            for a in 0..n {
                if a == i {
                    continue;
                }
                if (1..=m).any(|b| matrix.get(a, k, b)) {
                    violations.push(Violation::LeaverNotTagger { responder: a, victim: k - 1 });
                }
            }
        }

        // Routes are open paths: any directed cycle in this responder's arcs
        // (self-loops included) breaks the visit ordering.
        violations.extend(find_cycle(matrix, i).map(|nodes| Violation::Subtour { responder: i, nodes }));
    }

    FeasibilityReport { violations }
}

/// Find one directed cycle among responder `i`'s arcs, if any.
fn find_cycle(matrix: &RouteMatrix, i: usize) -> Option<Vec<usize>> {
    let m = matrix.n_victims();
    // 0 = unvisited, 1 = on the current path, 2 = done.
    let mut color = vec![0u8; m + 1];
    let mut stack = Vec::new();

    fn dfs(
        matrix: &RouteMatrix,
        i: usize,
        node: usize,
        color: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        color[node] = 1;
        stack.push(node);
        for k in 1..=matrix.n_victims() {
            if !matrix.get(i, node, k) {
                continue;
            }
            match color[k] {
                1 => {
                    let at = stack.iter().position(|&s| s == k).unwrap();
                    let mut cycle: Vec<usize> = stack[at..].to_vec();
                    cycle.push(k);
                    return Some(cycle);
                }
                0 => {
                    if let Some(cycle) = dfs(matrix, i, k, color, stack) {
                        return Some(cycle);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        color[node] = 2;
        None
    }

    for start in 0..=m {
        if color[start] == 0 {
            if let Some(cycle) = dfs(matrix, i, start, &mut color, &mut stack) {
                return Some(cycle);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Point, ResponderSpec, VictimSpec};
    use approx::assert_relative_eq;

    fn line_instance(speed: f64, tag_time: u32, xs: &[f64]) -> Instance {
        let responders = vec![ResponderSpec { id: 0, speed, tag_time }];
        let victims = xs
            .iter()
            .enumerate()
            .map(|(id, &x)| VictimSpec { id, position: Point::new(x, 0.0), health: 0.5 })
            .collect();
        Instance::new(100.0, 10.0, Point::new(0.0, 0.0), responders, victims, 0).unwrap()
    }

    #[test]
    fn single_leg_cost_is_travel_plus_tag() {
        let inst = line_instance(1.0, 3, &[10.0]);
        let matrix = RouteMatrix::from_sequences(1, 1, &[vec![0]]);
        assert_relative_eq!(route_cost(&inst, &matrix, 0), 13.0);
    }

    #[test]
    fn empty_route_costs_nothing() {
        let inst = line_instance(1.0, 3, &[10.0]);
        let matrix = RouteMatrix::empty(1, 1);
        assert_relative_eq!(route_cost(&inst, &matrix, 0), 0.0);
    }

    #[test]
    fn two_leg_cost_tracks_speed() {
        // Legs of 4 and 6 units at speed 2, tag time 3: 2+3 + 3+3 = 11.
        let inst = line_instance(2.0, 3, &[4.0, 10.0]);
        let matrix = RouteMatrix::from_sequences(1, 2, &[vec![0, 1]]);
        assert_relative_eq!(route_cost(&inst, &matrix, 0), 11.0);
    }

    #[test]
    fn matrix_and_sequence_costs_agree() {
        let inst = line_instance(1.5, 2, &[3.0, 9.0, 4.5]);
        let d = inst.distance_matrix();
        let seq = vec![2, 0, 1];
        let matrix = RouteMatrix::from_sequences(1, 3, &[seq.clone()]);
        assert_relative_eq!(
            route_cost(&inst, &matrix, 0),
            sequence_cost(&inst, &d, 0, &seq),
            max_relative = 1e-12
        );
    }

    #[test]
    fn solution_times_accumulate_along_route() {
        let inst = line_instance(1.0, 3, &[2.0, 6.0]);
        let sol = ExactSolution::from_routes(&inst, vec![vec![0, 1]]);
        assert_relative_eq!(sol.victim_completion[0], 5.0); // 2 + 3
        assert_relative_eq!(sol.victim_completion[1], 12.0); // 5 + 4 + 3
        assert_relative_eq!(sol.makespan, 12.0);
        assert_eq!(sol.per_responder_time, vec![12.0]);
    }

    #[test]
    fn order_values_follow_visit_positions() {
        let inst = line_instance(1.0, 3, &[2.0, 6.0, 4.0]);
        let sol = ExactSolution::from_routes(&inst, vec![vec![2, 0]]);
        let u = sol.order_values(&inst);
        assert_eq!(u[0][0], 0); // start
        assert_eq!(u[0][3], 1); // victim 2 visited first
        assert_eq!(u[0][1], 2); // victim 0 visited second
        assert_eq!(u[0][2], 1); // unvisited: any in-range value
    }

    #[test]
    fn validate_accepts_wellformed_routes() {
        let inst = line_instance(1.0, 3, &[2.0, 6.0, 4.0]);
        let matrix = RouteMatrix::from_sequences(1, 3, &[vec![0, 2, 1]]);
        assert!(validate(&inst, &matrix).is_feasible());
    }

    #[test]
    fn validate_flags_double_tagging() {
        let two = Instance::new(
            100.0,
            10.0,
            Point::new(0.0, 0.0),
            vec![
                ResponderSpec { id: 0, speed: 1.0, tag_time: 3 },
                ResponderSpec { id: 1, speed: 1.0, tag_time: 3 },
            ],
            vec![
                VictimSpec { id: 0, position: Point::new(2.0, 0.0), health: 0.5 },
                VictimSpec { id: 1, position: Point::new(6.0, 0.0), health: 0.5 },
            ],
            0,
        )
        .unwrap();
        // Both responders enter victim 2 (node 2).
        let mut matrix = RouteMatrix::empty(2, 2);
        matrix.set(0, 0, 2, true);
        matrix.set(1, 0, 2, true);
        let report = validate(&two, &matrix);
        assert!(report
            .violations
            .contains(&Violation::SingleTagger { victim: 1, taggers: 2 }));
        // Victim 0 is never tagged.
        assert!(report
            .violations
            .contains(&Violation::SingleTagger { victim: 0, taggers: 0 }));
    }

    #[test]
    fn validate_flags_two_cycles_as_subtours() {
        let inst = line_instance(1.0, 3, &[2.0, 6.0]);
        let mut matrix = RouteMatrix::empty(1, 2);
        matrix.set(0, 1, 2, true);
        matrix.set(0, 2, 1, true);
        let report = validate(&inst, &matrix);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Subtour { responder: 0, .. })));
    }

    #[test]
    fn validate_flags_self_loops_as_subtours() {
        let inst = line_instance(1.0, 3, &[2.0]);
        let mut matrix = RouteMatrix::empty(1, 1);
        matrix.set(0, 1, 1, true);
        let report = validate(&inst, &matrix);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Subtour { responder: 0, .. })));
    }

    #[test]
    fn validate_flags_foreign_departures() {
        let two = Instance::new(
            100.0,
            10.0,
            Point::new(0.0, 0.0),
            vec![
                ResponderSpec { id: 0, speed: 1.0, tag_time: 3 },
                ResponderSpec { id: 1, speed: 1.0, tag_time: 3 },
            ],
            vec![
                VictimSpec { id: 0, position: Point::new(2.0, 0.0), health: 0.5 },
                VictimSpec { id: 1, position: Point::new(6.0, 0.0), health: 0.5 },
            ],
            0,
        )
        .unwrap();
        // Responder 0 tags victim 0, but responder 1 departs from it.
        let mut matrix = RouteMatrix::empty(2, 2);
        matrix.set(0, 0, 1, true);
        matrix.set(1, 1, 2, true);
        let report = validate(&two, &matrix);
        assert!(report
            .violations
            .contains(&Violation::LeaverNotTagger { responder: 1, victim: 0 }));
    }
}
