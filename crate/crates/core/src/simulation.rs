//! Closed-loop simulation of `dp/dt = -L_B p`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{check_bearing_equivalence, AnalysisError, EquivalenceCheck};
use crate::formation::{centroid_of, edge_vectors_of, spread_of, translation_vectors, BearingConstraintSet, Formation, DEGENERATE_EDGE_TOL};
use crate::linalg::{least_squares, Matrix, Vector, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("initial state has length {found}, expected {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("trajectory has not converged; final shape is undefined")]
    NotConverged,
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    Rk4,
    /// Exact propagation by the matrix exponential of one step.
    ExpmOracle,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
            Integrator::ExpmOracle => "expm-oracle",
        })
    }
}

impl FromStr for Integrator {
    type Err = SimulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            "expm-oracle" | "expm" => Ok(Integrator::ExpmOracle),
            other => Err(SimulationError::ConfigInvalid(format!(
                "unknown integrator '{other}' (expected euler, rk4 or expm-oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_max: f64,
    pub integrator: Integrator,
    /// A sample with `|L_B p| <` this marks convergence.
    pub convergence_threshold: f64,
    /// Record every `record_stride`-th step (the final step is always recorded).
    pub record_stride: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 50.0,
            integrator: Integrator::Rk4,
            convergence_threshold: 1e-8,
            record_stride: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |msg: &str| Err(SimulationError::ConfigInvalid(msg.to_owned()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be positive");
        }
        if !(self.t_max >= self.dt) || !self.t_max.is_finite() {
            return bad("t_max must be at least dt");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1");
        }
        if !(self.convergence_threshold > 0.0) {
            return bad("convergence_threshold must be positive");
        }
        Ok(())
    }

    /// Number of integration steps needed to reach `t_max`.
    pub fn step_count(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil() as usize
    }
}

/// Recorded samples of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    /// `|L_B p(t)| = |dp/dt|`.
    pub control_norm: Vec<f64>,
    /// `sum_k |P_{g*_k}(p_i - p_j)|`; `None` while some edge is shorter than the
    /// degenerate-edge threshold.
    pub bearing_error: Vec<Option<f64>>,
    /// Diagnostic: agent centroid.
    pub centroid: Vec<Vec<f64>>,
    /// Diagnostic: RMS distance of agents from the centroid.
    pub spread: Vec<f64>,
    pub converged_at: Option<f64>,
    pub seed: Option<u64>,
    pub config: SimulationConfig,
    pub dim: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_positions(&self) -> Vector {
        Vector::from_column_slice(self.positions.last().expect("trajectory has samples"))
    }

    pub fn final_control_norm(&self) -> f64 {
        *self.control_norm.last().expect("trajectory has samples")
    }

    pub fn final_bearing_error(&self) -> Option<f64> {
        *self.bearing_error.last().expect("trajectory has samples")
    }
}

/// Control input of 0-based agent `i` from its relative measurements only.
///
/// `relative` holds `(edge index, p_j - p_i)` for every outgoing edge of `i`.
fn agent_control(c: &BearingConstraintSet, projectors: &[Matrix], relative: &[(usize, Vector)]) -> Vector {
    let mut u = Vector::zeros(c.dim());
    for (k, r) in relative {
        // -P (p_i - p_j) = P (p_j - p_i)
        u += &projectors[*k] * r;
    }
    u
}

/// One explicit Euler step where each agent evaluates its own control law
/// from the relative positions of its out-neighbors.
pub fn step_agentwise(c: &BearingConstraintSet, p: &Vector, dt: f64) -> Vector {
    let d = c.dim();
    let graph = c.graph();
    let projectors = c.edge_projectors();
    let mut next = p.clone();
    for i in 0..graph.vertex_count() {
        let pi = p.rows(i * d, d);
        let relative: Vec<(usize, Vector)> = graph
            .outgoing_edge_indices(i)
            .map(|k| {
                let j = graph.edges()[k].head_index();
                (k, p.rows(j * d, d) - pi)
            })
            .collect();
        let u = agent_control(c, &projectors, &relative);
        let mut block = next.rows_mut(i * d, d);
        block += u * dt;
    }
    next
}

/// `e^{-L_B t} p0`.
pub fn expm_oracle(c: &BearingConstraintSet, p0: &Vector, t: f64) -> Vector {
    if t == 0.0 {
        return p0.clone();
    }
    (c.bearing_laplacian() * -t).exp() * p0
}

fn rk4_step(l: &Matrix, p: &Vector, dt: f64) -> Vector {
    let k1 = -(l * p);
    let k2 = -(l * (p + &k1 * (dt / 2.0)));
    let k3 = -(l * (p + &k2 * (dt / 2.0)));
    let k4 = -(l * (p + &k3 * dt));
    p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn bearing_error_if_defined(c: &BearingConstraintSet, p: &Vector) -> Option<f64> {
    let d = c.dim();
    let e = edge_vectors_of(c.graph(), d, p);
    let degenerate = (0..c.graph().edge_count()).any(|k| e.rows(k * d, d).norm() < DEGENERATE_EDGE_TOL);
    (!degenerate).then(|| c.bearing_error(p))
}

/// Integrates the closed loop from `p0` and records metrics along the way.
pub fn simulate(
    c: &BearingConstraintSet,
    p0: &Vector,
    cfg: &SimulationConfig,
    seed: Option<u64>,
) -> Result<Trajectory, SimulationError> {
    cfg.validate()?;
    if p0.len() != c.state_dim() {
        return Err(SimulationError::WrongLength {
            expected: c.state_dim(),
            found: p0.len(),
        });
    }
    let d = c.dim();
    let l = c.bearing_laplacian();
    let steps = cfg.step_count();
    let propagator = match cfg.integrator {
        Integrator::ExpmOracle => Some((l * -cfg.dt).exp()),
        _ => None,
    };

    let mut traj = Trajectory {
        times: Vec::new(),
        positions: Vec::new(),
        control_norm: Vec::new(),
        bearing_error: Vec::new(),
        centroid: Vec::new(),
        spread: Vec::new(),
        converged_at: None,
        seed,
        config: *cfg,
        dim: d,
    };
    let record = |traj: &mut Trajectory, t: f64, p: &Vector| {
        let control = (l * p).norm();
        if traj.converged_at.is_none() && control < cfg.convergence_threshold {
            traj.converged_at = Some(t);
        }
        traj.times.push(t);
        traj.positions.push(p.iter().copied().collect());
        traj.control_norm.push(control);
        traj.bearing_error.push(bearing_error_if_defined(c, p));
        traj.centroid.push(centroid_of(p, d).iter().copied().collect());
        traj.spread.push(spread_of(p, d));
    };

    let mut p = p0.clone();
    record(&mut traj, 0.0, &p);
    for k in 1..=steps {
        p = match (cfg.integrator, &propagator) {
            (Integrator::Euler, _) => &p - (l * &p) * cfg.dt,
            (Integrator::Rk4, _) => rk4_step(l, &p, cfg.dt),
            (Integrator::ExpmOracle, Some(phi)) => phi * &p,
            (Integrator::ExpmOracle, None) => unreachable!("propagator built above"),
        };
        if k % cfg.record_stride == 0 || k == steps {
            record(&mut traj, k as f64 * cfg.dt, &p);
        }
    }
    Ok(traj)
}

/// Comparison of a converged configuration with the target formation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCheck {
    pub equivalent: bool,
    pub same_shape: bool,
    /// Least-squares `s` in `q ≈ s p* + 1 ⊗ t`.
    pub scale_ratio: f64,
    pub translation: Vec<f64>,
    /// `|q - (s p* + 1 ⊗ t)|`.
    pub shape_residual: f64,
    pub equivalence: EquivalenceCheck,
}

/// Checks whether the final sample is bearing equivalent to `target` and
/// whether it is a translated and scaled copy of it.
pub fn final_shape_check(traj: &Trajectory, target: &Formation, tolerance: f64) -> Result<ShapeCheck, SimulationError> {
    if traj.converged_at.is_none() {
        return Err(SimulationError::NotConverged);
    }
    let q = traj.final_positions();
    let equivalence = check_bearing_equivalence(target, &q, tolerance)?;
    let n = target.agent_count();
    let d = target.dim();
    let mut columns = vec![target.positions().clone()];
    columns.extend(translation_vectors(n, d));
    let basis = Matrix::from_columns(&columns);
    let x = least_squares(&basis, &q, DEFAULT_RANK_TOL).map_err(AnalysisError::from)?;
    let shape_residual = (&basis * &x - &q).norm();
    Ok(ShapeCheck {
        equivalent: equivalence.equivalent,
        same_shape: shape_residual < tolerance * q.norm().max(1.0),
        scale_ratio: x[0],
        translation: x.iter().skip(1).copied().collect(),
        shape_residual,
        equivalence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(edges: &[(usize, usize)]) -> Formation {
        let g = DirectedGraph::new(4, edges).unwrap();
        Formation::new(g, 2, dvector![-1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0]).unwrap()
    }

    const FIG2A: [(usize, usize); 5] = [(1, 4), (1, 2), (2, 3), (3, 4), (2, 4)];
    const FIG3A: [(usize, usize); 5] = [(1, 4), (2, 1), (2, 3), (3, 4), (2, 4)];

    fn single_edge() -> BearingConstraintSet {
        let g = DirectedGraph::new(2, &[(1, 2)]).unwrap();
        BearingConstraintSet::new(g, 2, vec![dvector![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn agentwise_step_examples() {
        let f = square(&FIG2A);
        let c = f.constraints_from_target();
        assert_eq!(step_agentwise(c, f.positions(), 0.1), *f.positions());

        let p = dvector![0.3, -1.0, 2.0, 0.5, -0.4, 1.1, 0.9, 0.2];
        let next = step_agentwise(c, &p, 0.05);
        // Agent 4 has no out-neighbors.
        assert_eq!(next.rows(6, 2), p.rows(6, 2));
        let matrix_form = &p - c.bearing_laplacian() * &p * 0.05;
        assert!((next - matrix_form).norm() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let base = SimulationConfig::default();
        for bad in [
            SimulationConfig { dt: 0.0, ..base },
            SimulationConfig { dt: -1.0, ..base },
            SimulationConfig { t_max: 0.001, ..base },
            SimulationConfig { record_stride: 0, ..base },
        ] {
            assert!(matches!(bad.validate(), Err(SimulationError::ConfigInvalid(_))));
        }
        assert_eq!(base.step_count(), 5000);
        assert_eq!("expm-oracle".parse::<Integrator>().unwrap(), Integrator::ExpmOracle);
        assert!("leapfrog".parse::<Integrator>().is_err());
    }

    #[test]
    fn constant_trajectory_at_target() {
        let f = square(&FIG3A);
        let cfg = SimulationConfig {
            t_max: 1.0,
            ..Default::default()
        };
        let traj = simulate(f.constraints_from_target(), f.positions(), &cfg, None).unwrap();
        assert_eq!(traj.len(), 101);
        for (pos, err) in traj.positions.iter().zip(&traj.bearing_error) {
            assert!((Vector::from_column_slice(pos) - f.positions()).norm() < 1e-14);
            assert!(err.unwrap() < 1e-14);
        }
        assert_eq!(traj.converged_at, Some(0.0));
    }

    #[test]
    fn expm_matches_single_edge_closed_form() {
        let c = single_edge();
        let p0 = dvector![0.5, 2.0, 3.0, -1.0];
        assert_eq!(expm_oracle(&c, &p0, 0.0), p0);
        for t in [0.3, 1.0, 4.0] {
            let p = expm_oracle(&c, &p0, t);
            // Only agent 1's y coordinate moves, relaxing toward agent 2's at rate e^{-t}.
            let y1 = -1.0 + (2.0 - -1.0) * (-t).exp();
            assert!((p - dvector![0.5, y1, 3.0, -1.0]).norm() < 1e-13);
        }
    }

    #[test]
    fn rk4_agrees_with_oracle() {
        let f = square(&FIG2A);
        let c = f.constraints_from_target();
        let p0 = dvector![0.3, -1.0, 2.0, 0.5, -0.4, 1.1, 0.9, 0.2];
        let cfg = SimulationConfig {
            t_max: 10.0,
            ..Default::default()
        };
        let traj = simulate(c, &p0, &cfg, None).unwrap();
        let oracle = expm_oracle(c, &p0, 10.0);
        assert!((traj.final_positions() - oracle).amax() < 1e-6);
    }

    #[test]
    fn integrators_agree_at_t10() {
        let f = square(&FIG3A);
        let c = f.constraints_from_target();
        let p0 = dvector![1.3, -0.2, 0.4, 1.5, -1.4, 0.1, 0.9, -0.8];
        let run = |integrator, dt| {
            let cfg = SimulationConfig {
                dt,
                t_max: 10.0,
                integrator,
                ..Default::default()
            };
            simulate(c, &p0, &cfg, None).unwrap().final_positions()
        };
        let euler = run(Integrator::Euler, 1e-3);
        let rk4 = run(Integrator::Rk4, 0.01);
        let exact = run(Integrator::ExpmOracle, 0.01);
        assert!((&rk4 - &exact).amax() < 1e-5);
        assert!((&euler - &exact).amax() < 1e-5, "{}", (&euler - &exact).amax());
    }

    #[test]
    fn undirected_energy_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = DirectedGraph::undirected(5, &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 1), (1, 3)]).unwrap();
        let target = Formation::new(g, 2, Vector::from_fn(10, |_, _| rng.gen_range(-2.0..2.0))).unwrap();
        let c = target.constraints_from_target();
        let p0 = Vector::from_fn(10, |_, _| rng.gen_range(-2.0..2.0));
        let cfg = SimulationConfig {
            t_max: 10.0,
            record_stride: 10,
            ..Default::default()
        };
        let traj = simulate(c, &p0, &cfg, None).unwrap();
        let l = c.bearing_laplacian();
        let energy: Vec<f64> = traj
            .positions
            .iter()
            .map(|p| {
                let p = Vector::from_column_slice(p);
                p.dot(&(l * &p))
            })
            .collect();
        for w in energy.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn converged_flag_matches_final_control() {
        let f = square(&FIG3A);
        let c = f.constraints_from_target();
        let p0 = dvector![1.3, -0.2, 0.4, 1.5, -1.4, 0.1, 0.9, -0.8];
        let traj = simulate(c, &p0, &SimulationConfig::default(), Some(3)).unwrap();
        assert!(traj.converged_at.is_some());
        assert!(traj.final_control_norm() < traj.config.convergence_threshold);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.seed, Some(3));
        assert_eq!(traj.len(), traj.bearing_error.len());
    }

    #[test]
    fn bearing_error_undefined_for_coincident_agents() {
        let c = single_edge();
        let cfg = SimulationConfig {
            t_max: 0.02,
            ..Default::default()
        };
        let traj = simulate(&c, &dvector![1.0, 1.0, 1.0, 1.0], &cfg, None).unwrap();
        assert!(traj.bearing_error.iter().all(Option::is_none));
    }

    fn converged(q: Vector, dim: usize) -> Trajectory {
        Trajectory {
            times: vec![0.0],
            positions: vec![q.iter().copied().collect()],
            control_norm: vec![0.0],
            bearing_error: vec![Some(0.0)],
            centroid: vec![vec![0.0; dim]],
            spread: vec![0.0],
            converged_at: Some(0.0),
            seed: None,
            config: SimulationConfig::default(),
            dim,
        }
    }

    #[test]
    fn shape_check_examples() {
        let target = square(&FIG2A);
        let check = final_shape_check(&converged(target.positions().clone(), 2), &target, 1e-8).unwrap();
        assert!(check.equivalent && check.same_shape);
        assert!((check.scale_ratio - 1.0).abs() < 1e-12);
        assert!(check.translation.iter().all(|t| t.abs() < 1e-12));

        let q = target.positions() * 3.0 + Vector::from_element(8, 5.0);
        let check = final_shape_check(&converged(q, 2), &target, 1e-8).unwrap();
        assert!(check.same_shape);
        assert!((check.scale_ratio - 3.0).abs() < 1e-12);
        assert!(check.translation.iter().all(|t| (t - 5.0).abs() < 1e-12));

        let mut not_done = converged(target.positions().clone(), 2);
        not_done.converged_at = None;
        assert_eq!(
            final_shape_check(&not_done, &target, 1e-8),
            Err(SimulationError::NotConverged)
        );
    }

    #[test]
    fn fig3a_converges_to_a_spurious_equilibrium() {
        let target = square(&FIG3A);
        let c = target.constraints_from_target();
        let p0 = dvector![1.3, -0.2, 0.4, 1.5, -1.4, 0.1, 0.9, -0.8];
        let traj = simulate(c, &p0, &SimulationConfig::default(), None).unwrap();
        assert!(traj.final_control_norm() < 1e-8);
        assert!(traj.final_bearing_error().unwrap() > 1e-3);
        let check = final_shape_check(&traj, &target, 1e-6).unwrap();
        assert!(!check.equivalent);
    }
}
