//! Named scenario presets, reference baselines, and experiment runners.
//!
//! Presets come in two families: the large `e*` scenarios used to compare
//! the hand-written policies, and the smaller `r*` scenarios sized for
//! training. Reference mean completion times for the heuristics on the
//! `e*` family are frozen here so regression runs can check themselves
//! with a tolerance instead of eyeballing numbers.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::domain::{derive_seed, generate_instance, DomainError, ScenarioConfig};
use crate::policies::PolicyKind;
use crate::sim::{run_episode, run_experiment, SimError};
use crate::train::{evaluate, load_checkpoint, TrainError};

/// Sub-stream tag for per-preset seeds.
const PRESET_TAG: u64 = 0x50;

/// Errors from experiment runners.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown scenario preset `{0}`")]
    UnknownPreset(String),
    #[error("no checkpoint at {}: train this preset first", .path.display())]
    MissingCheckpoint { path: PathBuf },
    #[error("checkpoint at {} was trained for a different scenario shape", .path.display())]
    CheckpointMismatch { path: PathBuf },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// A named scenario shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioPreset {
    pub name: &'static str,
    /// Stable id used for seed derivation.
    pub id: u64,
    pub n_responders: usize,
    pub n_victims: usize,
    pub width: f64,
    pub height: f64,
}

impl ScenarioPreset {
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig::new(self.n_responders, self.n_victims, self.width, self.height)
    }
}

/// Policy-comparison scenarios (all on the 100 x 60 map).
pub const E_PRESETS: [ScenarioPreset; 9] = [
    ScenarioPreset { name: "e1", id: 1, n_responders: 5, n_victims: 10, width: 100.0, height: 60.0 },
    ScenarioPreset { name: "e2", id: 2, n_responders: 5, n_victims: 20, width: 100.0, height: 60.0 },
    ScenarioPreset { name: "e3", id: 3, n_responders: 5, n_victims: 100, width: 100.0, height: 60.0 },
    ScenarioPreset { name: "e4", id: 4, n_responders: 5, n_victims: 1000, width: 100.0, height: 60.0 },
    ScenarioPreset { name: "e5", id: 5, n_responders: 20, n_victims: 100, width: 100.0, height: 60.0 },
    ScenarioPreset { name: "e6", id: 6, n_responders: 20, n_victims: 1000, width: 100.0, height: 60.0 },
    ScenarioPreset { name: "e7", id: 7, n_responders: 80, n_victims: 100, width: 100.0, height: 60.0 },
    ScenarioPreset { name: "e8", id: 8, n_responders: 80, n_victims: 1000, width: 100.0, height: 60.0 },
    ScenarioPreset { name: "e9", id: 9, n_responders: 320, n_victims: 1000, width: 100.0, height: 60.0 },
];

/// Training-sized scenarios.
pub const R_PRESETS: [ScenarioPreset; 8] = [
    ScenarioPreset { name: "r1", id: 101, n_responders: 3, n_victims: 5, width: 5.0, height: 5.0 },
    ScenarioPreset { name: "r2", id: 102, n_responders: 3, n_victims: 10, width: 5.0, height: 5.0 },
    ScenarioPreset { name: "r3", id: 103, n_responders: 3, n_victims: 5, width: 25.0, height: 15.0 },
    ScenarioPreset { name: "r4", id: 104, n_responders: 5, n_victims: 15, width: 25.0, height: 15.0 },
    ScenarioPreset { name: "r5", id: 105, n_responders: 5, n_victims: 50, width: 25.0, height: 15.0 },
    ScenarioPreset { name: "r6", id: 106, n_responders: 5, n_victims: 10, width: 50.0, height: 30.0 },
    ScenarioPreset { name: "r7", id: 107, n_responders: 5, n_victims: 100, width: 50.0, height: 30.0 },
    ScenarioPreset { name: "r8", id: 108, n_responders: 20, n_victims: 100, width: 50.0, height: 30.0 },
];

/// Look a preset up by case-insensitive name.
pub fn find_preset(name: &str) -> Option<&'static ScenarioPreset> {
    let lower = name.to_ascii_lowercase();
    E_PRESETS.iter().chain(R_PRESETS.iter()).find(|p| p.name == lower)
}

/// Presets used by default for the heuristic comparison (the rest of the
/// `e*` family takes much longer; ask for it explicitly).
pub const DEFAULT_HEURISTIC_PRESETS: [&str; 5] = ["e1", "e2", "e3", "e5", "e7"];

// ---------------------------------------------------------------------------
// Frozen reference results
// ---------------------------------------------------------------------------

/// Reference mean completion times for the five heuristics on one `e*`
/// preset (100 iterations on re-randomized instances).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeuristicBaseline {
    pub preset: &'static str,
    pub rvp: f64,
    pub nvp: f64,
    pub lnvp: f64,
    pub lcvp: f64,
    pub lgap: f64,
}

pub const HEURISTIC_BASELINES: [HeuristicBaseline; 9] = [
    HeuristicBaseline { preset: "e1", rvp: 136.0, nvp: 124.0, lnvp: 118.0, lcvp: 115.0, lgap: 126.0 },
    HeuristicBaseline { preset: "e2", rvp: 226.0, nvp: 152.0, lnvp: 145.0, lcvp: 174.0, lgap: 161.0 },
    HeuristicBaseline { preset: "e3", rvp: 956.0, nvp: 298.0, lnvp: 288.0, lcvp: 375.0, lgap: 317.0 },
    HeuristicBaseline { preset: "e4", rvp: 9135.0, nvp: 1328.0, lnvp: 1316.0, lcvp: 1573.0, lgap: 1383.0 },
    HeuristicBaseline { preset: "e5", rvp: 299.0, nvp: 164.0, lnvp: 153.0, lcvp: 197.0, lgap: 177.0 },
    HeuristicBaseline { preset: "e6", rvp: 2381.0, nvp: 411.0, lnvp: 420.0, lcvp: 506.0, lgap: 470.0 },
    HeuristicBaseline { preset: "e7", rvp: 122.0, nvp: 132.0, lnvp: 111.0, lcvp: 117.0, lgap: 148.0 },
    HeuristicBaseline { preset: "e8", rvp: 657.0, nvp: 218.0, lnvp: 190.0, lcvp: 258.0, lgap: 238.0 },
    HeuristicBaseline { preset: "e9", rvp: 231.0, nvp: 152.0, lnvp: 118.0, lcvp: 136.0, lgap: 146.0 },
];

/// Reference mean for one heuristic on one preset, when frozen.
pub fn baseline_mean(preset: &str, policy: PolicyKind) -> Option<f64> {
    let lower = preset.to_ascii_lowercase();
    let row = HEURISTIC_BASELINES.iter().find(|r| r.preset == lower)?;
    Some(match policy {
        PolicyKind::Rvp => row.rvp,
        PolicyKind::Nvp => row.nvp,
        PolicyKind::Lnvp => row.lnvp,
        PolicyKind::Lcvp => row.lcvp,
        PolicyKind::Lgap => row.lgap,
    })
}

/// Reference results for the learned policy on the training presets where
/// they are frozen, with the heuristics measured on the same evaluation
/// protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LearnedBaseline {
    pub preset: &'static str,
    pub learned_mean: f64,
    pub learned_std: f64,
    /// Strongest claim-aware heuristic on this preset, when frozen.
    pub lnvp_mean: Option<f64>,
    pub rvp_mean: f64,
}

pub const LEARNED_BASELINES: [LearnedBaseline; 2] = [
    LearnedBaseline { preset: "r1", learned_mean: 12.8, learned_std: 1.3, lnvp_mean: Some(15.0), rvp_mean: 15.7 },
    LearnedBaseline { preset: "r3", learned_mean: 33.6, learned_std: 4.3, lnvp_mean: None, rvp_mean: 34.8 },
];

pub fn learned_baseline(preset: &str) -> Option<&'static LearnedBaseline> {
    let lower = preset.to_ascii_lowercase();
    LEARNED_BASELINES.iter().find(|r| r.preset == lower)
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// Mean and sample standard deviation (n - 1 denominator; zero for fewer
/// than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// Heuristic comparison
// ---------------------------------------------------------------------------

/// One (preset, policy) cell of the heuristic comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicCell {
    pub preset: &'static str,
    pub policy: PolicyKind,
    pub iterations: usize,
    pub mean: f64,
    pub std: f64,
    /// Frozen reference mean, when one exists for this cell.
    pub expected: Option<f64>,
}

/// Run all five heuristics on the named presets. Within a preset every
/// policy sees the same instance set (paired comparison); presets get
/// independent seeds.
pub fn run_heuristic_baselines(
    preset_names: &[&str],
    iterations: usize,
    base_seed: u64,
) -> Result<Vec<HeuristicCell>, ExperimentError> {
    let mut cells = Vec::new();
    for name in preset_names {
        let preset =
            find_preset(name).ok_or_else(|| ExperimentError::UnknownPreset(name.to_string()))?;
        let config = preset.scenario();
        let cell_seed = derive_seed(base_seed, PRESET_TAG, preset.id);
        for policy in PolicyKind::ALL {
            let result = run_experiment(&config, policy, iterations, cell_seed)?;
            cells.push(HeuristicCell {
                preset: preset.name,
                policy,
                iterations,
                mean: result.mean,
                std: result.std,
                expected: baseline_mean(preset.name, policy),
            });
        }
    }
    Ok(cells)
}

/// Relative deviations beyond `tolerance` (as a fraction of the reference
/// mean); empty means every measured cell is inside the band.
pub fn check_heuristic_cells(cells: &[HeuristicCell], tolerance: f64) -> Vec<String> {
    let mut failures = Vec::new();
    for cell in cells {
        if let Some(expected) = cell.expected {
            let deviation = (cell.mean - expected).abs() / expected;
            if deviation > tolerance {
                failures.push(format!(
                    "{}/{}: mean {:.1} deviates {:.1}% from reference {:.1} (allowed {:.0}%)",
                    cell.preset,
                    cell.policy,
                    cell.mean,
                    deviation * 100.0,
                    expected,
                    tolerance * 100.0
                ));
            }
        }
    }
    failures
}

/// Heuristic comparison as CSV rows.
pub fn write_heuristic_csv<W: std::io::Write>(
    cells: &[HeuristicCell],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "preset,policy,iterations,mean,std,expected")?;
    for cell in cells {
        let expected = cell.expected.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{:.3},{:.3},{}",
            cell.preset, cell.policy, cell.iterations, cell.mean, cell.std, expected
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Learned-policy comparison
// ---------------------------------------------------------------------------

/// Mean and spread for one policy in a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub mean: f64,
    pub std: f64,
}

/// The learned policy against every heuristic on identical instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub preset: String,
    pub eval_episodes: usize,
    /// First row is the learned policy, then the heuristics.
    pub rows: Vec<PolicySummary>,
}

impl ComparisonTable {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "preset,policy,mean,std")?;
        for row in &self.rows {
            writeln!(w, "{},{},{:.3},{:.3}", self.preset, row.policy, row.mean, row.std)?;
        }
        Ok(())
    }
}

/// Evaluate a trained checkpoint greedily on fresh instances, then run
/// every heuristic on exactly the same instances.
pub fn run_learned_comparison(
    preset_name: &str,
    checkpoint_path: &Path,
    eval_episodes: usize,
    base_seed: u64,
) -> Result<ComparisonTable, ExperimentError> {
    let preset = find_preset(preset_name)
        .ok_or_else(|| ExperimentError::UnknownPreset(preset_name.to_string()))?;
    let scenario = preset.scenario();
    if !checkpoint_path.exists() {
        return Err(ExperimentError::MissingCheckpoint { path: checkpoint_path.to_path_buf() });
    }
    let checkpoint = load_checkpoint(checkpoint_path)?;
    if checkpoint.config.scenario.n_responders != scenario.n_responders
        || checkpoint.config.scenario.n_victims != scenario.n_victims
    {
        return Err(ExperimentError::CheckpointMismatch { path: checkpoint_path.to_path_buf() });
    }

    let report = evaluate(
        &checkpoint.params,
        &scenario,
        checkpoint.config.bins,
        eval_episodes,
        base_seed,
    )?;
    let mut rows = vec![PolicySummary {
        policy: "fdqn".to_string(),
        mean: report.mean_t_all,
        std: report.std_t_all,
    }];

    for kind in PolicyKind::ALL {
        let mut times = Vec::with_capacity(report.seeds.len());
        for &seed in &report.seeds {
            let instance = generate_instance(&scenario, seed)?;
            let episode = run_episode(&instance, kind, scenario.zeta, seed)?;
            times.push(episode.t_all as f64);
        }
        let (mean, std) = mean_std(&times);
        rows.push(PolicySummary { policy: kind.name().to_string(), mean, std });
    }

    Ok(ComparisonTable { preset: preset.name.to_string(), eval_episodes, rows })
}

// ---------------------------------------------------------------------------
// Tagging-progress curves
// ---------------------------------------------------------------------------

/// Mean cumulative tagged count per step for each policy on one preset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveTable {
    pub preset: String,
    pub iterations: usize,
    /// `(policy, step, mean tagged count)` in tidy layout.
    pub rows: Vec<(PolicyKind, usize, f64)>,
}

impl CurveTable {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "policy,t,mean_tagged")?;
        for (policy, t, mean) in &self.rows {
            writeln!(w, "{},{},{:.4}", policy, t, mean)?;
        }
        Ok(())
    }
}

/// Tagging-progress curves for all five heuristics on one preset, sharing
/// instances across policies.
pub fn tagged_curves(
    preset_name: &str,
    iterations: usize,
    base_seed: u64,
) -> Result<CurveTable, ExperimentError> {
    let preset = find_preset(preset_name)
        .ok_or_else(|| ExperimentError::UnknownPreset(preset_name.to_string()))?;
    let config = preset.scenario();
    let cell_seed = derive_seed(base_seed, PRESET_TAG, preset.id);
    let mut rows = Vec::new();
    for policy in PolicyKind::ALL {
        let result = run_experiment(&config, policy, iterations, cell_seed)?;
        for (t, mean) in result.mean_curve.iter().enumerate() {
            rows.push((policy, t + 1, *mean));
        }
    }
    Ok(CurveTable { preset: preset.name.to_string(), iterations, rows })
}
