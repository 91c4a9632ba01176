//! Discrete-time multi-agent simulator.
//!
//! Time advances in unit steps. Each step the scheduler activates every
//! responder once, in a freshly shuffled order; an activated responder
//! performs exactly one FSM action: select a victim (or idle), advance one
//! movement increment, or tick its tag timer. A victim counts as reached
//! when the responder is within `zeta` of it; tagging then takes `tag_time`
//! further activations, after which the victim gets its triage color and the
//! responder re-plans.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    derive_seed, generate_instance, start_color, DomainError, Instance, Point, ResponderSpec,
    RngStream, ScenarioConfig, TriageColor, VictimSpec,
};
use crate::experiments::mean_std;
use crate::policies::{Policy, PolicyKind};

/// Errors raised while running episodes and experiments.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("episode exceeded the step cap of {cap} steps")]
    StepCapExceeded { cap: u64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

// ---------------------------------------------------------------------------
// Mutable world state
// ---------------------------------------------------------------------------

/// Responder FSM states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    Idle,
    SelectV,
    Move,
    Tag,
}

impl FsmState {
    pub const ALL: [FsmState; 4] =
        [FsmState::Idle, FsmState::SelectV, FsmState::Move, FsmState::Tag];

    pub fn name(&self) -> &'static str {
        match self {
            FsmState::Idle => "idle",
            FsmState::SelectV => "select_v",
            FsmState::Move => "move",
            FsmState::Tag => "tag",
        }
    }
}

/// One action taken during one activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Idle,
    Move,
    Tag,
    /// Claim the victim with this index.
    Select(usize),
}

impl Action {
    /// The FSM state a responder effectively occupies while performing this
    /// action (used for state-timeline output).
    pub fn psi(&self) -> FsmState {
        match self {
            Action::Idle => FsmState::Idle,
            Action::Select(_) => FsmState::SelectV,
            Action::Move => FsmState::Move,
            Action::Tag => FsmState::Tag,
        }
    }
}

/// Mutable per-responder state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponderState {
    pub spec: ResponderSpec,
    pub position: Point,
    pub fsm: FsmState,
    /// Claimed victim index, present exactly while moving or tagging.
    pub claim: Option<usize>,
    /// Remaining tag activations; meaningful only in the tag state.
    pub tag_timer: u32,
}

/// Mutable per-victim state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VictimState {
    pub spec: VictimSpec,
    pub tagged: bool,
    /// Responder currently claiming this victim, if any.
    pub claimed_by: Option<usize>,
    /// Triage color, assigned exactly once at tag completion.
    pub color: Option<TriageColor>,
}

/// Complete mutable state of one running episode.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState<'a> {
    pub instance: &'a Instance,
    pub responders: Vec<ResponderState>,
    pub victims: Vec<VictimState>,
    pub clock: u64,
    pub tagged_count: usize,
    pub tags_per_responder: Vec<usize>,
    /// Proximity radius: arrival test and preemption floor.
    pub zeta: f64,
}

impl<'a> WorldState<'a> {
    /// Fresh episode state: everyone idle at the start position, no victim
    /// tagged or claimed.
    pub fn new(instance: &'a Instance, zeta: f64) -> Self {
        let responders = instance
            .responders
            .iter()
            .map(|&spec| ResponderState {
                spec,
                position: instance.start,
                fsm: FsmState::Idle,
                claim: None,
                tag_timer: 0,
            })
            .collect();
        let victims = instance
            .victims
            .iter()
            .map(|&spec| VictimState { spec, tagged: false, claimed_by: None, color: None })
            .collect();
        WorldState {
            instance,
            responders,
            victims,
            clock: 0,
            tagged_count: 0,
            tags_per_responder: vec![0; instance.n_responders()],
            zeta,
        }
    }

    pub fn all_tagged(&self) -> bool {
        self.tagged_count == self.victims.len()
    }

    /// Distance from responder `i` to victim `v`.
    pub fn dist_to_victim(&self, i: usize, v: usize) -> f64 {
        self.responders[i].position.dist(self.victims[v].spec.position)
    }
}

// ---------------------------------------------------------------------------
// FSM transition
// ---------------------------------------------------------------------------

/// Decide what responder `i` does this activation under `policy`.
///
/// Idle and selection states run the policy; a mover whose claim was
/// preempted re-plans immediately; a mover in range begins tagging (the
/// in-range transition is expressed as a tag action); a tagger keeps
/// tagging.
pub(crate) fn dictated_action(
    world: &WorldState,
    i: usize,
    policy: &Policy,
    policy_rng: &mut ChaCha8Rng,
) -> Action {
    let responder = &world.responders[i];
    let select = |rng: &mut ChaCha8Rng| match policy.select(world, i, rng) {
        Some(v) => Action::Select(v),
        None => Action::Idle,
    };
    match responder.fsm {
        FsmState::Idle | FsmState::SelectV => select(policy_rng),
        FsmState::Move => match responder.claim {
            None => select(policy_rng), // claim was preempted: re-plan now
            Some(v) => {
                if world.dist_to_victim(i, v) < world.zeta {
                    Action::Tag
                } else {
                    Action::Move
                }
            }
        },
        FsmState::Tag => Action::Tag,
    }
}

/// Apply one activation's action; returns true when a tag completed.
pub(crate) fn apply_action(world: &mut WorldState, i: usize, action: Action) -> bool {
    match action {
        Action::Idle => {
            world.responders[i].fsm = FsmState::Idle;
            false
        }
        Action::Select(v) => {
            debug_assert!(!world.victims[v].tagged, "selected a tagged victim");
            if let Some(prev) = world.victims[v].claimed_by {
                if prev != i {
                    // Preempted claimant keeps moving state but loses the
                    // claim; it re-plans at its next activation.
                    world.responders[prev].claim = None;
                }
            }
            world.victims[v].claimed_by = Some(i);
            let responder = &mut world.responders[i];
            responder.claim = Some(v);
            responder.fsm = FsmState::Move;
            false
        }
        Action::Move => advance_toward_claim(world, i),
        Action::Tag => {
            if world.responders[i].fsm == FsmState::Tag {
                tick_tag(world, i)
            } else {
                // In range but still in the move state: this activation is
                // the arrival that begins tagging.
                advance_toward_claim(world, i)
            }
        }
    }
}

/// One movement increment toward the claimed victim; entering tag range
/// starts the tag timer. Returns true in the degenerate zero-tag-time case
/// where arrival completes the tag outright.
fn advance_toward_claim(world: &mut WorldState, i: usize) -> bool {
    let v = world.responders[i].claim.expect("moving without a claim");
    let target = world.victims[v].spec.position;
    let speed = world.responders[i].spec.speed;
    let responder = &mut world.responders[i];
    responder.position = responder.position.advance_toward(target, speed);
    if responder.position.dist(target) < world.zeta {
        responder.fsm = FsmState::Tag;
        responder.tag_timer = responder.spec.tag_time;
        if responder.tag_timer == 0 {
            return complete_tag(world, i);
        }
    }
    false
}

fn tick_tag(world: &mut WorldState, i: usize) -> bool {
    let responder = &mut world.responders[i];
    debug_assert!(responder.tag_timer > 0, "tag tick without remaining time");
    responder.tag_timer -= 1;
    if responder.tag_timer == 0 {
        complete_tag(world, i)
    } else {
        false
    }
}

fn complete_tag(world: &mut WorldState, i: usize) -> bool {
    let v = world.responders[i].claim.expect("tagging without a claim");
    let victim = &mut world.victims[v];
    debug_assert!(!victim.tagged, "victim tagged twice");
    victim.tagged = true;
    victim.claimed_by = None;
    victim.color =
        Some(start_color(victim.spec.health).expect("instance health is validated on build"));
    world.tagged_count += 1;
    world.tags_per_responder[i] += 1;
    let more_work = !world.all_tagged();
    let responder = &mut world.responders[i];
    responder.claim = None;
    responder.fsm = if more_work { FsmState::SelectV } else { FsmState::Idle };
    true
}

/// Scheduler activation order for one step.
pub(crate) fn shuffled_order(n: usize, scheduler_rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(scheduler_rng);
    order
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

/// One policy-driven episode in progress.
pub struct Simulation<'a> {
    world: WorldState<'a>,
    policy: Policy,
    scheduler_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    series: Vec<usize>,
    timelines: Vec<Vec<Action>>,
    seed: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(instance: &'a Instance, kind: PolicyKind, zeta: f64, seed: u64) -> Self {
        let streams = RngStream::new(seed);
        Simulation {
            world: WorldState::new(instance, zeta),
            policy: Policy::new(kind, instance),
            scheduler_rng: streams.scheduler(),
            policy_rng: streams.policy(),
            series: Vec::new(),
            timelines: vec![Vec::new(); instance.n_responders()],
            seed,
        }
    }

    pub fn world(&self) -> &WorldState<'a> {
        &self.world
    }

    pub fn is_done(&self) -> bool {
        self.world.all_tagged()
    }

    /// Advance one time step; every responder acts once in shuffled order.
    /// Returns the actions taken, in activation order.
    pub fn step(&mut self) -> Vec<(usize, Action)> {
        let n = self.world.responders.len();
        let order = shuffled_order(n, &mut self.scheduler_rng);
        let mut taken = Vec::with_capacity(n);
        for &i in &order {
            let action = dictated_action(&self.world, i, &self.policy, &mut self.policy_rng);
            apply_action(&mut self.world, i, action);
            taken.push((i, action));
        }
        self.world.clock += 1;
        self.series.push(self.world.tagged_count);
        for &(i, action) in &taken {
            self.timelines[i].push(action);
        }
        taken
    }

    /// Run to completion, erroring if `step_cap` steps pass first.
    pub fn run(&mut self, step_cap: u64) -> Result<(), SimError> {
        while !self.is_done() {
            if self.world.clock >= step_cap {
                return Err(SimError::StepCapExceeded { cap: step_cap });
            }
            self.step();
        }
        Ok(())
    }

    pub fn into_result(self) -> EpisodeResult {
        EpisodeResult {
            t_all: self.world.clock,
            series: self.series,
            timelines: self.timelines,
            tags_per_responder: self.world.tags_per_responder.clone(),
            victim_colors: self.world.victims.iter().map(|v| v.color).collect(),
            seed: self.seed,
        }
    }
}

/// Generous default guard against non-terminating configurations.
pub fn default_step_cap(instance: &Instance) -> u64 {
    let slowest = instance
        .responders
        .iter()
        .map(|r| r.speed)
        .fold(f64::INFINITY, f64::min);
    let m = instance.n_victims() as f64;
    (10.0 * m * (instance.width + instance.height) / slowest).ceil() as u64
}

/// Everything recorded about one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    /// Steps until the last victim was tagged.
    pub t_all: u64,
    /// Cumulative tagged count after each step.
    pub series: Vec<usize>,
    /// Action taken by each responder at each step.
    pub timelines: Vec<Vec<Action>>,
    pub tags_per_responder: Vec<usize>,
    pub victim_colors: Vec<Option<TriageColor>>,
    pub seed: u64,
}

impl EpisodeResult {
    /// Tagged-count series as `t,tagged_count` rows.
    pub fn write_series_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,tagged_count")?;
        for (t, count) in self.series.iter().enumerate() {
            writeln!(w, "{},{}", t + 1, count)?;
        }
        Ok(())
    }

    /// Per-responder state timeline as `t,responder_id,psi` rows.
    pub fn write_timeline_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,responder_id,psi")?;
        for t in 0..self.t_all as usize {
            for (i, timeline) in self.timelines.iter().enumerate() {
                writeln!(w, "{},{},{}", t + 1, i, timeline[t].psi().name())?;
            }
        }
        Ok(())
    }
}

/// Run one episode of `kind` on `instance` with the default step cap.
pub fn run_episode(
    instance: &Instance,
    kind: PolicyKind,
    zeta: f64,
    seed: u64,
) -> Result<EpisodeResult, SimError> {
    let mut simulation = Simulation::new(instance, kind, zeta, seed);
    simulation.run(default_step_cap(instance))?;
    Ok(simulation.into_result())
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Seed-derivation tags (see [`derive_seed`]).
pub mod seed_tags {
    /// Per-iteration experiment episodes.
    pub const EXPERIMENT: u64 = 0x45;
    /// Per-episode training instances.
    pub const TRAIN_EPISODE: u64 = 0x54;
    /// Evaluation rollouts.
    pub const EVAL_EPISODE: u64 = 0x56;
    /// Network weight initialization.
    pub const NET_INIT: u64 = 0x4e;
}

/// Aggregated results for one (scenario, policy) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub policy: PolicyKind,
    pub iterations: usize,
    /// Per-iteration seeds, recorded so any row can be replayed.
    pub seeds: Vec<u64>,
    pub t_alls: Vec<u64>,
    pub mean: f64,
    pub std: f64,
    /// Mean cumulative tagged count per step; shorter episodes count as
    /// fully tagged beyond their end.
    pub mean_curve: Vec<f64>,
}

/// Run `iterations` independent episodes of `kind` on fresh instances drawn
/// from `config`, in parallel, and aggregate deterministically (reduction
/// follows iteration order regardless of thread timing).
pub fn run_experiment(
    config: &ScenarioConfig,
    kind: PolicyKind,
    iterations: usize,
    base_seed: u64,
) -> Result<ExperimentResult, SimError> {
    use rayon::prelude::*;

    let seeds: Vec<u64> =
        (0..iterations).map(|i| derive_seed(base_seed, seed_tags::EXPERIMENT, i as u64)).collect();
    let episodes: Vec<EpisodeResult> = seeds
        .par_iter()
        .map(|&seed| -> Result<EpisodeResult, SimError> {
            let instance = generate_instance(config, seed)?;
            run_episode(&instance, kind, config.zeta, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let t_alls: Vec<u64> = episodes.iter().map(|e| e.t_all).collect();
    let values: Vec<f64> = t_alls.iter().map(|&t| t as f64).collect();
    let (mean, std) = mean_std(&values);

    let longest = episodes.iter().map(|e| e.series.len()).max().unwrap_or(0);
    let m = config.n_victims;
    let mut mean_curve = vec![0.0; longest];
    for episode in &episodes {
        for (t, slot) in mean_curve.iter_mut().enumerate() {
            *slot += *episode.series.get(t).unwrap_or(&m) as f64;
        }
    }
    for slot in &mut mean_curve {
        *slot /= episodes.len().max(1) as f64;
    }

    Ok(ExperimentResult { policy: kind, iterations, seeds, t_alls, mean, std, mean_curve })
}
