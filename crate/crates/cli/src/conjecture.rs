//! Randomized probe of the sign of `min Re λ(L_B)` on directed formations.
//!
//! Every trial draws its own seed from the batch seed, so any single trial can
//! be regenerated with [`generate_trial`] without replaying the batch.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bearing_core::analysis::{is_bearing_persistent, is_infinitesimally_bearing_rigid, laplacian_spectrum};
use bearing_core::linalg::{projector, Vector};
use bearing_core::{AnalysisError, DirectedGraph, Formation, Tolerances};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Scenario;

/// Generated edges shorter than this are rejected.
pub const MIN_EDGE_LENGTH: f64 = 1e-3;
/// Minimum `|P_{g1} g2|` between outgoing bearings in the capped model.
pub const NON_COLLINEAR_MARGIN: f64 = 1e-3;
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ConjectureError {
    #[error("invalid batch config: {0}")]
    ConfigInvalid(String),
    #[error("trial seed {seed}: no connected nondegenerate formation after {MAX_ATTEMPTS} attempts")]
    GenerationFailed { seed: u64 },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphModel {
    /// Every ordered pair is an edge with probability `edge_probability`.
    ErdosRenyiDirected,
    /// Each agent picks up to `out_degree_cap` heads with pairwise non-collinear bearings.
    OutDegreeCapped,
    /// Every unordered pair is a two-way edge with probability `edge_probability`.
    Undirected,
}

impl fmt::Display for GraphModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphModel::ErdosRenyiDirected => "erdos-renyi-directed",
            GraphModel::OutDegreeCapped => "out-degree-capped",
            GraphModel::Undirected => "undirected",
        })
    }
}

impl FromStr for GraphModel {
    type Err = ConjectureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "erdos-renyi-directed" => Ok(GraphModel::ErdosRenyiDirected),
            "out-degree-capped" | "random-out-degree-capped" => Ok(GraphModel::OutDegreeCapped),
            "undirected" => Ok(GraphModel::Undirected),
            other => Err(ConjectureError::ConfigInvalid(format!("unknown graph model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureBatchConfig {
    pub trials: usize,
    /// Inclusive agent-count bounds.
    pub n_range: [usize; 2],
    /// Inclusive dimension bounds.
    pub d_range: [usize; 2],
    pub graph_model: GraphModel,
    pub edge_probability: f64,
    pub out_degree_cap: usize,
    pub seed: u64,
    pub position_box: [f64; 2],
    pub tolerances: Tolerances,
}

impl Default for ConjectureBatchConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            n_range: [3, 10],
            d_range: [2, 3],
            graph_model: GraphModel::ErdosRenyiDirected,
            edge_probability: 0.35,
            out_degree_cap: 2,
            seed: 42,
            position_box: [-5.0, 5.0],
            tolerances: Tolerances::default(),
        }
    }
}

impl ConjectureBatchConfig {
    pub fn validate(&self) -> Result<(), ConjectureError> {
        let bad = |msg: &str| Err(ConjectureError::ConfigInvalid(msg.to_owned()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.n_range[0] < 3 || self.n_range[0] > self.n_range[1] {
            return bad("n_range must satisfy 3 <= lo <= hi");
        }
        if self.d_range[0] < 2 || self.d_range[0] > self.d_range[1] {
            return bad("d_range must satisfy 2 <= lo <= hi");
        }
        if !(self.edge_probability > 0.0 && self.edge_probability <= 1.0) {
            return bad("edge_probability must lie in (0, 1]");
        }
        if self.out_degree_cap == 0 {
            return bad("out_degree_cap must be at least 1");
        }
        if !(self.position_box[0] < self.position_box[1]) {
            return bad("position box must be [lo, hi] with lo < hi");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Regenerates this trial through [`generate_trial`].
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub min_real_part: f64,
    /// `None` when the rank and subspace tests disagreed.
    pub persistent: Option<bool>,
    pub rigid: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub config: ConjectureBatchConfig,
    pub aggregate_min_real_part: f64,
    pub persistent_count: usize,
    pub rigid_count: usize,
    pub inconsistent_count: usize,
    /// Trial indices with `min_real_part < -conjecture tolerance`.
    pub violations: Vec<usize>,
    pub trials: Vec<TrialRecord>,
}

impl BatchReport {
    pub fn has_violation(&self) -> bool {
        !self.violations.is_empty()
    }
}

pub fn trial_seed(batch_seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

fn non_collinear(bearings: &[Vector]) -> bool {
    bearings.iter().enumerate().all(|(a, ga)| {
        bearings[a + 1..]
            .iter()
            .all(|gb| (projector(ga).expect("unit bearing") * gb).norm() > NON_COLLINEAR_MARGIN)
    })
}

fn bearing_between(p: &Vector, d: usize, i: usize, j: usize) -> Vector {
    let e = p.rows(j * d, d) - p.rows(i * d, d);
    let len = e.norm();
    e / len
}

fn min_edge_length(p: &Vector, d: usize, edges: &[(usize, usize)]) -> f64 {
    edges
        .iter()
        .map(|&(i, j)| (p.rows((j - 1) * d, d) - p.rows((i - 1) * d, d)).norm())
        .fold(f64::INFINITY, f64::min)
}

fn draw_edges(cfg: &ConjectureBatchConfig, rng: &mut ChaCha8Rng, n: usize, d: usize, p: &Vector) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    match cfg.graph_model {
        GraphModel::ErdosRenyiDirected => {
            for i in 1..=n {
                for j in 1..=n {
                    if i != j && rng.gen_bool(cfg.edge_probability) {
                        edges.push((i, j));
                    }
                }
            }
        }
        GraphModel::Undirected => {
            for i in 1..=n {
                for j in i + 1..=n {
                    if rng.gen_bool(cfg.edge_probability) {
                        edges.push((i, j));
                        edges.push((j, i));
                    }
                }
            }
        }
        GraphModel::OutDegreeCapped => {
            let cap = cfg.out_degree_cap.min(n - 1);
            for i in 0..n {
                let k = rng.gen_range(0..=cap);
                let heads = (0..MAX_ATTEMPTS)
                    .map(|_| {
                        sample(rng, n - 1, k)
                            .into_iter()
                            .map(|h| if h >= i { h + 1 } else { h })
                            .collect::<Vec<_>>()
                    })
                    .find(|heads| {
                        let bearings: Vec<Vector> = heads.iter().map(|&j| bearing_between(p, d, i, j)).collect();
                        non_collinear(&bearings)
                    })
                    .unwrap_or_default();
                edges.extend(heads.into_iter().map(|j| (i + 1, j + 1)));
            }
        }
    }
    edges
}

/// Draws a weakly connected, nondegenerate formation from `seed`.
pub fn generate_trial(cfg: &ConjectureBatchConfig, seed: u64) -> Result<Formation, ConjectureError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = cfg.position_box;
    for _ in 0..MAX_ATTEMPTS {
        let n = rng.gen_range(cfg.n_range[0]..=cfg.n_range[1]);
        let d = rng.gen_range(cfg.d_range[0]..=cfg.d_range[1]);
        let p = Vector::from_fn(n * d, |_, _| rng.gen_range(lo..hi));
        let edges = draw_edges(cfg, &mut rng, n, d, &p);
        if edges.is_empty() || min_edge_length(&p, d, &edges) < MIN_EDGE_LENGTH {
            continue;
        }
        let graph = DirectedGraph::new(n, &edges).expect("generated edges are valid");
        if !graph.is_weakly_connected() {
            continue;
        }
        if let Ok(f) = Formation::new(graph, d, p) {
            return Ok(f);
        }
    }
    Err(ConjectureError::GenerationFailed { seed })
}

fn run_trial(cfg: &ConjectureBatchConfig, trial: usize) -> Result<(TrialRecord, Formation), ConjectureError> {
    let seed = trial_seed(cfg.seed, trial);
    let f = generate_trial(cfg, seed)?;
    let tol = &cfg.tolerances;
    let min_real_part = laplacian_spectrum(f.constraints_from_target())
        .map(|s| s.min_real_part)
        .unwrap_or(f64::NAN);
    let mut note = None;
    let mut keep = |r: Result<bool, AnalysisError>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            note = Some(e.to_string());
            None
        }
    };
    let persistent = keep(is_bearing_persistent(&f, tol));
    let rigid = keep(is_infinitesimally_bearing_rigid(&f, tol));
    let record = TrialRecord {
        trial,
        seed,
        n: f.agent_count(),
        d: f.dim(),
        m: f.graph().edge_count(),
        min_real_part,
        persistent,
        rigid,
        note,
    };
    Ok((record, f))
}

/// Runs the batch on `jobs` worker threads (0 picks the rayon default).
///
/// Records are ordered by trial index. The returned formations are the
/// violating trials, in the same order as `violations`.
pub fn run_batch(cfg: &ConjectureBatchConfig, jobs: usize) -> Result<(BatchReport, Vec<Formation>), ConjectureError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ConjectureError::Pool(e.to_string()))?;
    let outcomes: Vec<(TrialRecord, Formation)> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect::<Result<_, _>>())?;

    let threshold = -cfg.tolerances.conjecture;
    let mut violations = Vec::new();
    let mut dumps = Vec::new();
    let mut trials = Vec::with_capacity(outcomes.len());
    for (record, f) in outcomes {
        if record.min_real_part < threshold {
            violations.push(record.trial);
            dumps.push(f);
        }
        trials.push(record);
    }
    let report = BatchReport {
        config: cfg.clone(),
        aggregate_min_real_part: trials.iter().map(|r| r.min_real_part).fold(f64::INFINITY, f64::min),
        persistent_count: trials.iter().filter(|r| r.persistent == Some(true)).count(),
        rigid_count: trials.iter().filter(|r| r.rigid == Some(true)).count(),
        inconsistent_count: trials.iter().filter(|r| r.note.is_some()).count(),
        violations,
        trials,
    };
    Ok((report, dumps))
}

/// Writes one replayable scenario file per violating trial.
pub fn dump_violations(dir: &Path, report: &BatchReport, formations: &[Formation]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (&trial, f) in report.violations.iter().zip(formations) {
        let record = &report.trials[trial];
        let name = format!("conjecture_trial_{trial}");
        let notes = format!(
            "min real part {:e}; trial seed {} of batch seed {}",
            record.min_real_part, record.seed, report.config.seed
        );
        let scenario = Scenario::from_formation(&name, f, None, Some(notes));
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, scenario.to_json())?;
        written.push(path);
    }
    Ok(written)
}
