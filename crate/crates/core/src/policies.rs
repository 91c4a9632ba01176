//! Victim-selection heuristics.
//!
//! A policy answers one question during a responder's selection activation:
//! which untagged victim (if any) should this responder claim next? Five
//! strategies are provided:
//!
//! - RVP: a uniformly random untagged, unclaimed victim.
//! - NVP: the nearest untagged, unclaimed victim.
//! - LNVP: the nearest untagged victim, allowed to *preempt* another
//!   responder's claim when this responder is strictly closer and the
//!   current claimant is still more than `zeta` away.
//! - LCVP: LNVP restricted to critical victims (health below 0.5); when no
//!   critical victim is available to this responder, plain LNVP.
//! - LGAP: nearest untagged victim inside the responder's own grid cell;
//!   idles once the cell is exhausted.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainError, Instance, Point, CRITICAL_HEALTH};
use crate::sim::WorldState;

/// The five selection heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Rvp,
    Nvp,
    Lnvp,
    Lcvp,
    Lgap,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [PolicyKind::Rvp, PolicyKind::Nvp, PolicyKind::Lnvp, PolicyKind::Lcvp, PolicyKind::Lgap];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Rvp => "rvp",
            PolicyKind::Nvp => "nvp",
            PolicyKind::Lnvp => "lnvp",
            PolicyKind::Lcvp => "lcvp",
            PolicyKind::Lgap => "lgap",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rvp" => Ok(PolicyKind::Rvp),
            "nvp" => Ok(PolicyKind::Nvp),
            "lnvp" => Ok(PolicyKind::Lnvp),
            "lcvp" => Ok(PolicyKind::Lcvp),
            "lgap" => Ok(PolicyKind::Lgap),
            other => Err(DomainError::InvalidParameter(format!("unknown policy '{other}'"))),
        }
    }
}

/// A policy instantiated for one incident (LGAP carries its grid).
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    partition: Option<CellPartition>,
}

impl Policy {
    pub fn new(kind: PolicyKind, instance: &Instance) -> Self {
        let partition = match kind {
            PolicyKind::Lgap => Some(
                partition_cells(instance.width, instance.height, instance.n_responders())
                    .expect("instances always have at least one responder"),
            ),
            _ => None,
        };
        Policy { kind, partition }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Pick the next victim for responder `i`, if any is available under
    /// this policy's rules.
    pub fn select(&self, world: &WorldState, i: usize, rng: &mut impl Rng) -> Option<usize> {
        match self.kind {
            PolicyKind::Rvp => rvp_select(world, i, rng),
            PolicyKind::Nvp => nvp_select(world, i),
            PolicyKind::Lnvp => lnvp_select(world, i),
            PolicyKind::Lcvp => lcvp_select(world, i),
            PolicyKind::Lgap => {
                lgap_select(world, i, self.partition.as_ref().expect("built for lgap"))
            }
        }
    }
}

// Victims eligible for plain selection: untagged and claimed by nobody.
fn unclaimed(world: &WorldState, v: usize) -> bool {
    let victim = &world.victims[v];
    !victim.tagged && victim.claimed_by.is_none()
}

fn nearest_by<F: Fn(usize) -> bool>(world: &WorldState, i: usize, eligible: F) -> Option<usize> {
    let pos = world.responders[i].position;
    let mut best: Option<(usize, f64)> = None;
    for v in 0..world.victims.len() {
        if !eligible(v) {
            continue;
        }
        let d = pos.dist(world.victims[v].spec.position);
        // Strict comparison keeps ties on the lowest victim index.
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((v, d));
        }
    }
    best.map(|(v, _)| v)
}

/// Random victim policy: a uniformly random untagged, unclaimed victim.
pub fn rvp_select(world: &WorldState, _i: usize, rng: &mut impl Rng) -> Option<usize> {
    let candidates: Vec<usize> =
        (0..world.victims.len()).filter(|&v| unclaimed(world, v)).collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

/// Nearest victim policy: the closest untagged, unclaimed victim; ties go to
/// the lowest victim index.
pub fn nvp_select(world: &WorldState, i: usize) -> Option<usize> {
    nearest_by(world, i, |v| unclaimed(world, v))
}

// A claimed victim may be stolen when this responder is strictly closer than
// the current claimant and the claimant has not yet closed to within zeta.
fn preemptable(world: &WorldState, i: usize, v: usize) -> bool {
    let victim = &world.victims[v];
    if victim.tagged {
        return false;
    }
    match victim.claimed_by {
        None => true,
        Some(f) => {
            let v_pos = victim.spec.position;
            let claimant_dist = world.responders[f].position.dist(v_pos);
            let own_dist = world.responders[i].position.dist(v_pos);
            claimant_dist > own_dist && claimant_dist > world.zeta
        }
    }
}

/// Local nearest victim policy: nearest untagged victim, preempting a more
/// distant claimant when allowed.
pub fn lnvp_select(world: &WorldState, i: usize) -> Option<usize> {
    nearest_by(world, i, |v| preemptable(world, i, v))
}

/// Local critical victim policy: LNVP restricted to critical victims first;
/// when that leaves this responder without a target (criticals exhausted, or
/// every remaining one is locked in by a closer claimant), LNVP over
/// everyone. Idling here would strand responders while teammates finish the
/// criticals, so they help with the rest of the field instead.
pub fn lcvp_select(world: &WorldState, i: usize) -> Option<usize> {
    nearest_by(world, i, |v| {
        world.victims[v].spec.health < CRITICAL_HEALTH && preemptable(world, i, v)
    })
    .or_else(|| lnvp_select(world, i))
}

/// Grid-assignment policy: nearest untagged victim inside the responder's
/// own cell; `None` once the cell holds no untagged victims.
pub fn lgap_select(world: &WorldState, i: usize, partition: &CellPartition) -> Option<usize> {
    let cell = partition.cell(i);
    nearest_by(world, i, |v| {
        let victim = &world.victims[v];
        !victim.tagged && cell.contains(victim.spec.position)
    })
}

// ---------------------------------------------------------------------------
// Grid partition
// ---------------------------------------------------------------------------

/// One rectangular cell. Intervals are half-open except on the area's far
/// edges, so every point of the area belongs to exactly one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    closed_right: bool,
    closed_top: bool,
}

impl CellRect {
    pub fn contains(&self, p: Point) -> bool {
        let x_ok = p.x >= self.x0 && (p.x < self.x1 || (self.closed_right && p.x <= self.x1));
        let y_ok = p.y >= self.y0 && (p.y < self.y1 || (self.closed_top && p.y <= self.y1));
        x_ok && y_ok
    }
}

/// A disjoint tiling of the area with exactly one cell per responder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    cells: Vec<CellRect>,
}

impl CellPartition {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Cell owned by responder `i` (cells are ordered left to right).
    pub fn cell(&self, i: usize) -> &CellRect {
        &self.cells[i]
    }

    /// Index of the unique cell containing `p`.
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(p))
    }
}

/// Tile `width` x `height` into exactly `n` cells: one full-height vertical
/// strip per responder, ordered left to right.
///
/// The baseline means frozen in `experiments` were measured under this
/// layout, so it doubles as the reference geometry for LGAP comparisons.
pub fn partition_cells(width: f64, height: f64, n: usize) -> Result<CellPartition, DomainError> {
    if n == 0 {
        return Err(DomainError::InvalidParameter("cannot partition for zero responders".into()));
    }
    if !(width > 0.0) || !(height > 0.0) {
        return Err(DomainError::InvalidParameter("area dimensions must be positive".into()));
    }
    let strip_w = width / n as f64;
    let cells = (0..n)
        .map(|i| {
            let last = i == n - 1;
            CellRect {
                x0: strip_w * i as f64,
                // The final strip is pinned to the exact area edge so the
                // tiling stays gap-free under floating-point rounding.
                x1: if last { width } else { strip_w * (i + 1) as f64 },
                y0: 0.0,
                y1: height,
                closed_right: last,
                closed_top: true,
            }
        })
        .collect();
    Ok(CellPartition { cells })
}
