//! Scenario domain: geometry, triage classification, and seeded instance
//! generation.
//!
//! An [`Instance`] is the immutable description of one incident: a
//! rectangular area, a shared responder start position, responder
//! capabilities, and victim positions/health. Mutable episode state lives in
//! [`crate::sim::WorldState`].
//!
//! Randomness is split into named sub-streams ([`RngStream`]) so that, for a
//! fixed seed, draws for victim placement, health, scheduling, policy
//! tie-breaking, and exploration never perturb each other.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by domain constructors and classifiers.
#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn invalid(msg: impl Into<String>) -> DomainError {
    DomainError::InvalidParameter(msg.into())
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// A position in the incident area, in area units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Euclidean distance to another point.
    pub fn dist(&self, other: Point) -> f64 {
        euclidean_dist(*self, other)
    }

    /// Move up to `step` units toward `target`; never overshoots.
    pub fn advance_toward(&self, target: Point, step: f64) -> Point {
        let d = self.dist(target);
        if d <= step || d == 0.0 {
            return target;
        }
        let f = step / d;
        Point::new(self.x + (target.x - self.x) * f, self.y + (target.y - self.y) * f)
    }
}

/// Euclidean distance between two points.
pub fn euclidean_dist(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Time (in steps) for a responder moving at `speed` units/step to cover
/// `distance` units.
pub fn travel_time(distance: f64, speed: f64) -> Result<f64, DomainError> {
    if !(speed > 0.0) {
        return Err(invalid(format!("speed must be positive, got {speed}")));
    }
    if !(distance >= 0.0) {
        return Err(invalid(format!("distance must be non-negative, got {distance}")));
    }
    Ok(distance / speed)
}

// ---------------------------------------------------------------------------
// Triage
// ---------------------------------------------------------------------------

/// START triage category assigned when a victim is tagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriageColor {
    Black,
    Red,
    Yellow,
    Green,
}

impl std::fmt::Display for TriageColor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TriageColor::Black => "black",
            TriageColor::Red => "red",
            TriageColor::Yellow => "yellow",
            TriageColor::Green => "green",
        };
        f.write_str(s)
    }
}

/// Classify a health level `h` in `[0, 1]` into its triage color.
///
/// The four categories partition the unit interval: black `[0, 0.25)`,
/// red `[0.25, 0.5)`, yellow `[0.5, 0.75)`, green `[0.75, 1]`.
pub fn start_color(h: f64) -> Result<TriageColor, DomainError> {
    if !(0.0..=1.0).contains(&h) {
        return Err(invalid(format!("health must lie in [0, 1], got {h}")));
    }
    Ok(if h < 0.25 {
        TriageColor::Black
    } else if h < 0.5 {
        TriageColor::Red
    } else if h < 0.75 {
        TriageColor::Yellow
    } else {
        TriageColor::Green
    })
}

/// Health strictly below this threshold counts as critical (black or red).
pub const CRITICAL_HEALTH: f64 = 0.5;

// ---------------------------------------------------------------------------
// Instance description
// ---------------------------------------------------------------------------

/// Static description of one responder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponderSpec {
    pub id: usize,
    /// Movement speed in units per step.
    pub speed: f64,
    /// Steps needed to tag a victim once in range.
    pub tag_time: u32,
}

/// Static description of one victim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VictimSpec {
    pub id: usize,
    pub position: Point,
    /// Health level in `[0, 1]`; drawn uniformly at generation time.
    pub health: f64,
}

/// Immutable description of one incident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub width: f64,
    pub height: f64,
    /// Shared responder start position.
    pub start: Point,
    pub responders: Vec<ResponderSpec>,
    pub victims: Vec<VictimSpec>,
    /// Seed the instance was generated from (provenance; unused by loads).
    pub seed: u64,
}

impl Instance {
    /// Build and validate an instance from parts.
    ///
    /// Victims may be empty (a trivially solved incident); responders may
    /// not. Positions must lie inside the area and health in `[0, 1]`.
    pub fn new(
        width: f64,
        height: f64,
        start: Point,
        responders: Vec<ResponderSpec>,
        victims: Vec<VictimSpec>,
        seed: u64,
    ) -> Result<Self, DomainError> {
        if !(width > 0.0) || !(height > 0.0) {
            return Err(invalid(format!("area must be positive, got {width}x{height}")));
        }
        if responders.is_empty() {
            return Err(invalid("at least one responder required"));
        }
        let inside = |p: Point| (0.0..=width).contains(&p.x) && (0.0..=height).contains(&p.y);
        if !inside(start) {
            return Err(invalid("start position outside the area"));
        }
        for (i, r) in responders.iter().enumerate() {
            if r.id != i {
                return Err(invalid(format!("responder ids must be 0..n in order, got {}", r.id)));
            }
            if !(r.speed > 0.0) {
                return Err(invalid(format!("responder {} speed must be positive", i)));
            }
        }
        for (j, v) in victims.iter().enumerate() {
            if v.id != j {
                return Err(invalid(format!("victim ids must be 0..m in order, got {}", v.id)));
            }
            if !inside(v.position) {
                return Err(invalid(format!("victim {} outside the area", j)));
            }
            if !(0.0..=1.0).contains(&v.health) {
                return Err(invalid(format!("victim {} health outside [0, 1]", j)));
            }
        }
        Ok(Instance { width, height, start, responders, victims, seed })
    }

    pub fn n_responders(&self) -> usize {
        self.responders.len()
    }

    pub fn n_victims(&self) -> usize {
        self.victims.len()
    }

    /// Node position: node 0 is the start, node `j >= 1` is victim `j - 1`.
    pub fn node_position(&self, node: usize) -> Point {
        if node == 0 {
            self.start
        } else {
            self.victims[node - 1].position
        }
    }

    /// Pairwise node distances, derived from positions (never authoritative).
    pub fn distance_matrix(&self) -> DistanceMatrix {
        DistanceMatrix::from_instance(self)
    }
}

/// Distances over the node set {start} ∪ victims.
///
/// Node 0 is the start position; node `j >= 1` is victim `j - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    nodes: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    fn from_instance(instance: &Instance) -> Self {
        let nodes = instance.n_victims() + 1;
        let mut d = vec![0.0; nodes * nodes];
        for j in 0..nodes {
            for k in (j + 1)..nodes {
                let dist = euclidean_dist(instance.node_position(j), instance.node_position(k));
                d[j * nodes + k] = dist;
                d[k * nodes + j] = dist;
            }
        }
        DistanceMatrix { nodes, d }
    }

    /// Number of nodes (victims + 1).
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Distance between two nodes (0 = start, `j >= 1` = victim `j - 1`).
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.d[from * self.nodes + to]
    }
}

// ---------------------------------------------------------------------------
// Scenario configuration and generation
// ---------------------------------------------------------------------------

/// Parameters from which random instances are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_responders: usize,
    pub n_victims: usize,
    pub width: f64,
    pub height: f64,
    /// Responder speed in units per step.
    pub speed: f64,
    /// Steps needed to tag a victim once in range.
    pub tag_time: u32,
    /// Shared responder start position.
    pub start: Point,
    /// Proximity radius: arrival test for the simulator, innermost distance
    /// bin for the learner, preemption floor for the local heuristics.
    pub zeta: f64,
}

impl ScenarioConfig {
    /// Scenario with the stock dynamics: speed 1, tag time 3, start at the
    /// area corner, proximity radius 1.
    pub fn new(n_responders: usize, n_victims: usize, width: f64, height: f64) -> Self {
        ScenarioConfig {
            n_responders,
            n_victims,
            width,
            height,
            speed: 1.0,
            tag_time: 3,
            start: Point::new(0.0, 0.0),
            zeta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.n_responders == 0 {
            return Err(invalid("n_responders must be at least 1"));
        }
        if self.n_victims == 0 {
            return Err(invalid("n_victims must be at least 1"));
        }
        if !(self.width > 0.0) || !(self.height > 0.0) {
            return Err(invalid("area dimensions must be positive"));
        }
        if !(self.speed > 0.0) {
            return Err(invalid("speed must be positive"));
        }
        if !(self.zeta > 0.0) {
            return Err(invalid("zeta must be positive"));
        }
        Ok(())
    }
}

/// Named, mutually independent RNG sub-streams for one seed.
///
/// Each accessor returns a fresh generator positioned at the head of its
/// stream; the same seed always yields the same per-stream sequence, and a
/// draw from one stream never shifts another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RngStream {
    seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    /// Victim placement draws.
    pub fn placement(&self) -> ChaCha8Rng {
        self.stream(1)
    }

    /// Victim health draws.
    pub fn health(&self) -> ChaCha8Rng {
        self.stream(2)
    }

    /// Per-step scheduler activation order.
    pub fn scheduler(&self) -> ChaCha8Rng {
        self.stream(3)
    }

    /// Heuristic-policy randomness (random victim picks).
    pub fn policy(&self) -> ChaCha8Rng {
        self.stream(4)
    }

    /// Epsilon-greedy exploration draws.
    pub fn exploration(&self) -> ChaCha8Rng {
        self.stream(5)
    }

    /// Replay-buffer minibatch sampling draws.
    pub fn sampling(&self) -> ChaCha8Rng {
        self.stream(6)
    }

    /// Network weight initialization draws.
    pub fn init(&self) -> ChaCha8Rng {
        self.stream(7)
    }
}

/// Derive a child seed from a base seed, a purpose tag, and an index.
///
/// Used wherever a family of independent seeds is needed (per-iteration
/// experiment runs, per-episode training instances, evaluation rollouts).
/// SplitMix64-style finalizer: deterministic and well spread.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw a random instance for `config` using the placement and health
/// sub-streams of `seed`.
pub fn generate_instance(config: &ScenarioConfig, seed: u64) -> Result<Instance, DomainError> {
    config.validate()?;
    let streams = RngStream::new(seed);
    let mut placement = streams.placement();
    let mut health = streams.health();

    let victims = (0..config.n_victims)
        .map(|id| {
            let x = placement.gen_range(0.0..config.width);
            let y = placement.gen_range(0.0..config.height);
            VictimSpec { id, position: Point::new(x, y), health: health.gen_range(0.0..=1.0) }
        })
        .collect();
    let responders = (0..config.n_responders)
        .map(|id| ResponderSpec { id, speed: config.speed, tag_time: config.tag_time })
        .collect();

    Instance::new(config.width, config.height, config.start, responders, victims, seed)
}
