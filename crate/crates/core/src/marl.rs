//! Cooperative multi-agent RL environment over the simulator.
//!
//! The environment exposes the same world dynamics as the policy simulator
//! (both funnel through one action-application routine) but lets each
//! responder pick its own action from a legality mask instead of following a
//! hand-written policy. Observations are a flat global feature vector;
//! rewards are dense time penalties plus a decaying bonus on each completed
//! tag.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Instance, RngStream};
use crate::sim::{apply_action, shuffled_order, Action, FsmState, WorldState};

/// Flat action indices per agent: fixed verbs first, then one select per
/// victim.
pub const ACT_IDLE: usize = 0;
pub const ACT_MOVE: usize = 1;
pub const ACT_TAG: usize = 2;
pub const ACT_SELECT_BASE: usize = 3;

/// Number of discrete actions available to each agent.
pub fn n_actions(n_victims: usize) -> usize {
    ACT_SELECT_BASE + n_victims
}

/// Length of the encoded global state vector.
pub fn state_dim(n_responders: usize, n_victims: usize) -> usize {
    n_responders * n_victims + 4 * n_responders + 2 * n_victims
}

/// Map a flat action index to a simulator action.
pub fn index_action(index: usize, n_victims: usize) -> Action {
    match index {
        ACT_IDLE => Action::Idle,
        ACT_MOVE => Action::Move,
        ACT_TAG => Action::Tag,
        _ => {
            let victim = index - ACT_SELECT_BASE;
            assert!(victim < n_victims, "select index {index} out of range");
            Action::Select(victim)
        }
    }
}

/// Map a simulator action back to its flat index.
pub fn action_index(action: Action) -> usize {
    match action {
        Action::Idle => ACT_IDLE,
        Action::Move => ACT_MOVE,
        Action::Tag => ACT_TAG,
        Action::Select(v) => ACT_SELECT_BASE + v,
    }
}

/// Quantize a distance into one of `bins` buckets: bucket 0 within the
/// proximity radius, bucket 1 within twice the radius, then coarse
/// map-width-scaled buckets capped at `bins - 1`.
pub fn bin_distance(distance: f64, zeta: f64, width: f64, bins: usize) -> usize {
    debug_assert!(bins >= 2, "need at least two distance bins");
    if distance < zeta {
        0
    } else if distance < 2.0 * zeta {
        1
    } else {
        let bucket = (distance / (width / bins as f64)).floor() as usize;
        bucket.min(bins - 1)
    }
}

/// Encode the global state: binned responder-victim distances (normalized to
/// `[0, 1]`), per-responder FSM one-hots, per-victim claim bits, per-victim
/// tagged bits.
pub fn encode_state(world: &WorldState, bins: usize) -> Vec<f64> {
    let n = world.responders.len();
    let m = world.victims.len();
    let mut state = Vec::with_capacity(state_dim(n, m));
    let denom = (bins - 1) as f64;
    for i in 0..n {
        for j in 0..m {
            let bucket = bin_distance(world.dist_to_victim(i, j), world.zeta, world.instance.width, bins);
            state.push(bucket as f64 / denom);
        }
    }
    for responder in &world.responders {
        for fsm in FsmState::ALL {
            state.push(if responder.fsm == fsm { 1.0 } else { 0.0 });
        }
    }
    for victim in &world.victims {
        state.push(if victim.claimed_by.is_some() { 1.0 } else { 0.0 });
    }
    for victim in &world.victims {
        state.push(if victim.tagged { 1.0 } else { 0.0 });
    }
    state
}

/// Legality mask over the flat action space for responder `i`.
///
/// Idle or selecting responders (and movers whose claim was preempted) may
/// select any untagged unclaimed victim, and may idle only when no such
/// victim exists. A mover out of range must keep moving; one in range must
/// begin tagging; a tagger must keep tagging.
pub fn legal_mask(world: &WorldState, i: usize) -> Vec<bool> {
    let m = world.victims.len();
    let mut mask = vec![false; n_actions(m)];
    let responder = &world.responders[i];
    match responder.fsm {
        FsmState::Move if responder.claim.is_some() => {
            let v = responder.claim.unwrap();
            if world.dist_to_victim(i, v) < world.zeta {
                mask[ACT_TAG] = true;
            } else {
                mask[ACT_MOVE] = true;
            }
        }
        FsmState::Tag => mask[ACT_TAG] = true,
        FsmState::Idle | FsmState::SelectV | FsmState::Move => {
            let mut any = false;
            for (j, victim) in world.victims.iter().enumerate() {
                if !victim.tagged && victim.claimed_by.is_none() {
                    mask[ACT_SELECT_BASE + j] = true;
                    any = true;
                }
            }
            if !any {
                mask[ACT_IDLE] = true;
            }
        }
    }
    mask
}

/// Demote all but one of any set of agents selecting the same victim: the
/// nearest keeps the select (ties to the lower agent id), the rest idle.
pub fn resolve_conflicts(world: &WorldState, chosen: &mut [usize]) {
    let mut selectors: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &action) in chosen.iter().enumerate() {
        if action >= ACT_SELECT_BASE {
            selectors.entry(action - ACT_SELECT_BASE).or_default().push(i);
        }
    }
    for (victim, agents) in selectors {
        if agents.len() < 2 {
            continue;
        }
        let winner = agents
            .iter()
            .copied()
            .min_by(|&a, &b| {
                world
                    .dist_to_victim(a, victim)
                    .total_cmp(&world.dist_to_victim(b, victim))
                    .then(a.cmp(&b))
            })
            .unwrap();
        for agent in agents {
            if agent != winner {
                chosen[agent] = ACT_IDLE;
            }
        }
    }
}

/// Tag-completion bonus: a base that decays by half a point every ten steps,
/// scaled up ten percent per victim already tagged (including this one).
pub fn compute_reward(steps_at_start: u64, tagged_after: usize) -> f64 {
    let base = 30.0 - 0.5 * (steps_at_start / 10) as f64;
    base * (1.0 + 0.1 * tagged_after as f64)
}

/// Per-step time penalty for every agent that did not complete a tag.
pub const STEP_PENALTY: f64 = -1.0;

/// What one environment step produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    /// Per-agent rewards in agent order.
    pub rewards: Vec<f64>,
    /// Sum of the per-agent rewards.
    pub team_reward: f64,
    /// Actions actually executed after conflict resolution.
    pub executed: Vec<usize>,
    pub done: bool,
}

/// One stored experience for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Executed flat action index per agent.
    pub actions: Vec<usize>,
    pub team_reward: f64,
    pub next_state: Vec<f64>,
    /// Legality masks in the successor state, used for the bootstrap max.
    pub next_masks: Vec<Vec<bool>>,
    pub done: bool,
}

/// A running environment episode.
pub struct Env<'a> {
    world: WorldState<'a>,
    scheduler_rng: ChaCha8Rng,
    bins: usize,
}

impl<'a> Env<'a> {
    /// Fresh episode on `instance`. The seed drives only the activation
    /// shuffle, through the same named stream the simulator uses, so an
    /// environment and a simulation built from one seed schedule agents
    /// identically.
    pub fn new(instance: &'a Instance, zeta: f64, bins: usize, seed: u64) -> Self {
        assert!(bins >= 2, "need at least two distance bins");
        Env {
            world: WorldState::new(instance, zeta),
            scheduler_rng: RngStream::new(seed).scheduler(),
            bins,
        }
    }

    pub fn world(&self) -> &WorldState<'a> {
        &self.world
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn is_done(&self) -> bool {
        self.world.all_tagged()
    }

    pub fn clock(&self) -> u64 {
        self.world.clock
    }

    pub fn state(&self) -> Vec<f64> {
        encode_state(&self.world, self.bins)
    }

    pub fn masks(&self) -> Vec<Vec<bool>> {
        (0..self.world.responders.len()).map(|i| legal_mask(&self.world, i)).collect()
    }

    /// Execute one joint action. Conflicting selects are resolved first;
    /// every executed action must then be legal under the step-start mask,
    /// except that conflict losers execute idle wherever demotion put them.
    pub fn step(&mut self, chosen: &[usize]) -> StepOutcome {
        let n = self.world.responders.len();
        assert_eq!(chosen.len(), n, "one action per agent");
        let mut executed = chosen.to_vec();
        resolve_conflicts(&self.world, &mut executed);
        #[cfg(debug_assertions)]
        {
            let masks = self.masks();
            for (i, &action) in executed.iter().enumerate() {
                debug_assert!(
                    action == ACT_IDLE || masks[i][action],
                    "agent {i} executed illegal action {action}"
                );
            }
        }
        let steps_at_start = self.world.clock;
        let m = self.world.victims.len();
        let order = shuffled_order(n, &mut self.scheduler_rng);
        let mut rewards = vec![STEP_PENALTY; n];
        for &i in &order {
            let completed = apply_action(&mut self.world, i, index_action(executed[i], m));
            if completed {
                rewards[i] = compute_reward(steps_at_start, self.world.tagged_count);
            }
        }
        self.world.clock += 1;
        let team_reward = rewards.iter().sum();
        StepOutcome { rewards, team_reward, executed, done: self.world.all_tagged() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_instance, Point, ResponderSpec, ScenarioConfig, VictimSpec};
    use crate::policies::PolicyKind;
    use crate::sim::Simulation;
    use rand::Rng;

    fn small_instance() -> Instance {
        let responders = vec![
            ResponderSpec { id: 0, speed: 1.0, tag_time: 3 },
            ResponderSpec { id: 1, speed: 1.0, tag_time: 3 },
        ];
        let victims = vec![
            VictimSpec { id: 0, position: Point::new(5.0, 0.0), health: 0.3 },
            VictimSpec { id: 1, position: Point::new(0.0, 8.0), health: 0.9 },
        ];
        Instance::new(100.0, 60.0, Point::new(0.0, 0.0), responders, victims, 0).unwrap()
    }

    #[test]
    fn distance_bins_follow_the_documented_scheme() {
        // zeta 1, width 100, 5 bins: width bucket is 20 units.
        assert_eq!(bin_distance(0.0, 1.0, 100.0, 5), 0);
        assert_eq!(bin_distance(0.99, 1.0, 100.0, 5), 0);
        assert_eq!(bin_distance(1.0, 1.0, 100.0, 5), 1);
        assert_eq!(bin_distance(1.99, 1.0, 100.0, 5), 1);
        assert_eq!(bin_distance(25.0, 1.0, 100.0, 5), 1); // 25/20 floors to 1
        assert_eq!(bin_distance(45.0, 1.0, 100.0, 5), 2);
        assert_eq!(bin_distance(99.0, 1.0, 100.0, 5), 4);
        assert_eq!(bin_distance(500.0, 1.0, 100.0, 5), 4); // capped
    }

    #[test]
    fn state_layout_matches_hand_encoding() {
        let instance = small_instance();
        let world = WorldState::new(&instance, 1.0);
        let state = encode_state(&world, 5);
        assert_eq!(state.len(), state_dim(2, 2));
        // Distances from (0,0): 5 and 8 both land in width bucket 0.
        assert_eq!(&state[0..4], &[0.0, 0.0, 0.0, 0.0]);
        // Both responders idle.
        assert_eq!(&state[4..8], &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&state[8..12], &[1.0, 0.0, 0.0, 0.0]);
        // No claims, nothing tagged.
        assert_eq!(&state[12..16], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn state_reflects_claims_tags_and_fsm() {
        let instance = small_instance();
        let mut world = WorldState::new(&instance, 1.0);
        apply_action(&mut world, 0, Action::Select(1));
        world.victims[0].tagged = true;
        world.tagged_count = 1;
        let state = encode_state(&world, 5);
        // Responder 0 is now moving.
        assert_eq!(&state[4..8], &[0.0, 0.0, 1.0, 0.0]);
        // Victim 1 claimed, victim 0 tagged.
        assert_eq!(&state[12..16], &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn masks_track_fsm_states() {
        let instance = small_instance();
        let mut world = WorldState::new(&instance, 1.0);
        // Idle with free victims: only selects.
        assert_eq!(legal_mask(&world, 0), vec![false, false, false, true, true]);

        // Mover out of range: only move.
        apply_action(&mut world, 0, Action::Select(0));
        assert_eq!(legal_mask(&world, 0), vec![false, true, false, false, false]);
        // Other agent can no longer select the claimed victim.
        assert_eq!(legal_mask(&world, 1), vec![false, false, false, false, true]);

        // Mover in range: only tag.
        world.responders[0].position = Point::new(4.5, 0.0);
        assert_eq!(legal_mask(&world, 0), vec![false, false, true, false, false]);

        // Tagger: only tag.
        apply_action(&mut world, 0, Action::Tag);
        assert_eq!(world.responders[0].fsm, FsmState::Tag);
        assert_eq!(legal_mask(&world, 0), vec![false, false, true, false, false]);

        // No selectable victim left: idle only.
        apply_action(&mut world, 1, Action::Select(1));
        world.responders[1].claim = None; // pretend preempted
        world.victims[1].tagged = true;
        assert_eq!(legal_mask(&world, 1), vec![true, false, false, false, false]);
    }

    #[test]
    fn conflicting_selects_go_to_the_nearest_agent() {
        let instance = small_instance();
        let mut world = WorldState::new(&instance, 1.0);
        world.responders[1].position = Point::new(4.0, 0.0); // closer to victim 0
        let mut chosen = vec![ACT_SELECT_BASE, ACT_SELECT_BASE];
        resolve_conflicts(&world, &mut chosen);
        assert_eq!(chosen, vec![ACT_IDLE, ACT_SELECT_BASE]);
    }

    #[test]
    fn select_ties_break_to_the_lower_agent_id() {
        let instance = small_instance();
        let world = WorldState::new(&instance, 1.0); // both at the start point
        let mut chosen = vec![ACT_SELECT_BASE + 1, ACT_SELECT_BASE + 1];
        resolve_conflicts(&world, &mut chosen);
        assert_eq!(chosen, vec![ACT_SELECT_BASE + 1, ACT_IDLE]);
    }

    #[test]
    fn distinct_selects_pass_through_untouched() {
        let instance = small_instance();
        let world = WorldState::new(&instance, 1.0);
        let mut chosen = vec![ACT_SELECT_BASE + 1, ACT_SELECT_BASE];
        resolve_conflicts(&world, &mut chosen);
        assert_eq!(chosen, vec![ACT_SELECT_BASE + 1, ACT_SELECT_BASE]);
    }

    #[test]
    fn tag_bonus_decays_with_time_and_grows_with_coverage() {
        // First victim tagged before step ten: 30 * 1.1.
        assert_eq!(compute_reward(0, 1), 33.0);
        assert_eq!(compute_reward(9, 1), 33.0);
        // Third victim tagged in the twenties: 29 * 1.3.
        assert!((compute_reward(25, 3) - 37.7).abs() < 1e-12);
        // Integer-exact cross-check: (60 - k) * (10 + v) / 20.
        for steps in [0u64, 7, 10, 99, 123, 600] {
            for tagged in [1usize, 2, 5, 40] {
                let k = steps / 10;
                let exact = (60 - k as i64) as f64 * (10 + tagged) as f64 / 20.0;
                let got = compute_reward(steps, tagged);
                assert!((got - exact).abs() < 1e-9, "steps {steps} tagged {tagged}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn env_and_simulation_agree_step_for_step() {
        // Drive the environment with the actions a policy simulation takes;
        // identical seeds shuffle identically, so the worlds must match
        // after every step.
        for seed in [3u64, 11, 42] {
            let config = ScenarioConfig::new(3, 6, 40.0, 25.0);
            let instance = generate_instance(&config, seed).unwrap();
            let mut simulation = Simulation::new(&instance, PolicyKind::Nvp, 1.0, seed);
            let mut env = Env::new(&instance, 1.0, 5, seed);
            while !simulation.is_done() {
                let taken = simulation.step();
                let mut chosen = vec![ACT_IDLE; instance.n_responders()];
                for (i, action) in taken {
                    chosen[i] = action_index(action);
                }
                let outcome = env.step(&chosen);
                assert_eq!(outcome.executed, chosen, "seed {seed}: conflict resolution fired");
                assert_eq!(env.world(), simulation.world(), "seed {seed}: worlds diverged");
            }
            assert!(env.is_done());
        }
    }

    #[test]
    fn random_legal_play_preserves_invariants() {
        let mut rng = RngStream::new(7).exploration();
        for seed in 0..5u64 {
            let config = ScenarioConfig::new(3, 5, 30.0, 20.0);
            let instance = generate_instance(&config, seed).unwrap();
            let mut env = Env::new(&instance, 1.0, 5, seed);
            let mut steps = 0;
            while !env.is_done() && steps < 2000 {
                let masks = env.masks();
                let chosen: Vec<usize> = masks
                    .iter()
                    .map(|mask| {
                        let legal: Vec<usize> =
                            mask.iter().enumerate().filter(|(_, &b)| b).map(|(a, _)| a).collect();
                        legal[rng.gen_range(0..legal.len())]
                    })
                    .collect();
                let outcome = env.step(&chosen);
                // Conflict-freeness: executed selects are unique.
                let selects: Vec<usize> =
                    outcome.executed.iter().filter(|&&a| a >= ACT_SELECT_BASE).copied().collect();
                let unique: std::collections::HashSet<_> = selects.iter().collect();
                assert_eq!(unique.len(), selects.len(), "duplicate select executed");
                steps += 1;
            }
            assert!(env.is_done(), "seed {seed}: random legal play failed to finish");
            assert_eq!(env.world().tagged_count, instance.n_victims());
        }
    }

    #[test]
    fn env_steps_are_deterministic_per_seed() {
        let config = ScenarioConfig::new(2, 4, 30.0, 20.0);
        let instance = generate_instance(&config, 9).unwrap();
        let run = |seed: u64| {
            let mut env = Env::new(&instance, 1.0, 5, seed);
            let mut log = Vec::new();
            for _ in 0..40 {
                if env.is_done() {
                    break;
                }
                let masks = env.masks();
                let chosen: Vec<usize> = masks
                    .iter()
                    .map(|m| m.iter().position(|&b| b).expect("some action is always legal"))
                    .collect();
                let outcome = env.step(&chosen);
                log.push((outcome.executed, outcome.team_reward, env.state()));
            }
            log
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn some_action_is_always_legal() {
        let mut rng = RngStream::new(13).exploration();
        for seed in 0..5u64 {
            let config = ScenarioConfig::new(4, 6, 30.0, 20.0);
            let instance = generate_instance(&config, seed).unwrap();
            let mut env = Env::new(&instance, 1.0, 5, seed);
            let mut steps = 0;
            while !env.is_done() && steps < 5000 {
                let masks = env.masks();
                for (i, mask) in masks.iter().enumerate() {
                    assert!(mask.iter().any(|&b| b), "agent {i} has no legal action");
                }
                let chosen: Vec<usize> = masks
                    .iter()
                    .map(|mask| {
                        let legal: Vec<usize> =
                            mask.iter().enumerate().filter(|(_, &b)| b).map(|(a, _)| a).collect();
                        legal[rng.gen_range(0..legal.len())]
                    })
                    .collect();
                env.step(&chosen);
                steps += 1;
            }
            assert!(env.is_done(), "seed {seed}: random play did not terminate");
        }
    }
}
