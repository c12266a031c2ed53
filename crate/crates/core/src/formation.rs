//! Formations, bearing constraint sets and the matrices built from them.
//!
//! Positions are stacked agent by agent: agent `i` (0-based) occupies entries
//! `i*d .. (i+1)*d` of the position vector.

use std::sync::OnceLock;

use nalgebra::DVectorView;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::DirectedGraph;
use crate::linalg::{self, nullspace_basis, projector, Matrix, SubspaceBasis, Vector};

/// Edges shorter than this have no meaningful bearing.
pub const DEGENERATE_EDGE_TOL: f64 = 1e-9;

/// Allowed deviation of a supplied bearing from unit length.
pub const UNIT_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormationError {
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("position vector has length {found}, expected {expected}")]
    PositionLength { expected: usize, found: usize },
    #[error("position vector contains non-finite entries")]
    NonFinite,
    #[error("edge #{index} ({tail}, {head}) has length {length:e}, below the degenerate-edge threshold")]
    DegenerateEdge {
        index: usize,
        tail: usize,
        head: usize,
        length: f64,
    },
    #[error("expected {expected} bearings (one per edge), got {found}")]
    BearingCount { expected: usize, found: usize },
    #[error("bearing #{index} has {found} components, expected {expected}")]
    BearingDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("bearing #{index} has norm {norm}, expected a unit vector")]
    NonUnitBearing { index: usize, norm: f64 },
    #[error("bearing constraints are infeasible (least-squares residual {residual:e})")]
    Infeasible { residual: f64 },
}

fn check_dim(d: usize) -> Result<(), FormationError> {
    if d < 2 {
        Err(FormationError::DimensionTooSmall(d))
    } else {
        Ok(())
    }
}

fn block(p: &Vector, i: usize, d: usize) -> DVectorView<'_, f64> {
    p.rows(i * d, d)
}

/// Stacked edge vectors `e_k = p_head - p_tail` for an arbitrary position vector.
pub fn edge_vectors_of(graph: &DirectedGraph, d: usize, p: &Vector) -> Vector {
    let mut e = Vector::zeros(d * graph.edge_count());
    for (k, edge) in graph.edges().iter().enumerate() {
        let ek = block(p, edge.head_index(), d) - block(p, edge.tail_index(), d);
        e.rows_mut(k * d, d).copy_from(&ek);
    }
    e
}

/// The bearing function: stacked unit edge vectors for an arbitrary position vector.
pub fn bearing_function(graph: &DirectedGraph, d: usize, p: &Vector) -> Result<Vector, FormationError> {
    let mut g = edge_vectors_of(graph, d, p);
    for (k, edge) in graph.edges().iter().enumerate() {
        let mut gk = g.rows_mut(k * d, d);
        let length = gk.norm();
        if !(length > DEGENERATE_EDGE_TOL) {
            let (tail, head) = edge.ids();
            return Err(FormationError::DegenerateEdge {
                index: k,
                tail,
                head,
                length,
            });
        }
        gk /= length;
    }
    Ok(g)
}

/// Stacked translation directions `1 ⊗ I_d`, one vector per axis.
pub fn translation_vectors(n: usize, d: usize) -> Vec<Vector> {
    (0..d)
        .map(|axis| Vector::from_fn(n * d, |r, _| if r % d == axis { 1.0 } else { 0.0 }))
        .collect()
}

/// A directed graph together with agent positions.
#[derive(Debug, Clone)]
pub struct Formation {
    graph: DirectedGraph,
    dim: usize,
    positions: Vector,
    rigidity: OnceLock<Matrix>,
    constraints: OnceLock<BearingConstraintSet>,
}

impl Formation {
    pub fn new(graph: DirectedGraph, dim: usize, positions: Vector) -> Result<Self, FormationError> {
        check_dim(dim)?;
        let expected = dim * graph.vertex_count();
        if positions.len() != expected {
            return Err(FormationError::PositionLength {
                expected,
                found: positions.len(),
            });
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(FormationError::NonFinite);
        }
        bearing_function(&graph, dim, &positions)?;
        Ok(Self {
            graph,
            dim,
            positions,
            rigidity: OnceLock::new(),
            constraints: OnceLock::new(),
        })
    }

    /// Builds a formation from one coordinate slice per agent.
    pub fn from_points(graph: DirectedGraph, points: &[Vec<f64>]) -> Result<Self, FormationError> {
        let dim = points.first().map_or(0, Vec::len);
        check_dim(dim)?;
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        if points.iter().any(|pt| pt.len() != dim) {
            return Err(FormationError::PositionLength {
                expected: dim * points.len(),
                found: flat.len(),
            });
        }
        Self::new(graph, dim, Vector::from_vec(flat))
    }

    /// Same graph, new positions.
    pub fn with_positions(&self, positions: Vector) -> Result<Self, FormationError> {
        Self::new(self.graph.clone(), self.dim, positions)
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agent_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn positions(&self) -> &Vector {
        &self.positions
    }

    /// Position of 0-based agent `i`.
    pub fn position(&self, i: usize) -> Vector {
        block(&self.positions, i, self.dim).into_owned()
    }

    pub fn edge_vectors(&self) -> Vector {
        edge_vectors_of(&self.graph, self.dim, &self.positions)
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        let e = self.edge_vectors();
        (0..self.graph.edge_count())
            .map(|k| e.rows(k * self.dim, self.dim).norm())
            .collect()
    }

    /// Stacked bearings, i.e. the bearing function evaluated at this formation.
    pub fn bearings(&self) -> Vector {
        bearing_function(&self.graph, self.dim, &self.positions)
            .expect("edges validated at construction")
    }

    /// Bearing of edge `k` as a unit vector.
    pub fn bearing(&self, k: usize) -> Vector {
        let e = self.graph.edges()[k];
        let v = block(&self.positions, e.head_index(), self.dim)
            - block(&self.positions, e.tail_index(), self.dim);
        let n = v.norm();
        v / n
    }

    /// `diag(P_{g_k} / |e_k|) (H ⊗ I_d)`, the Jacobian of the bearing function.
    pub fn bearing_rigidity_matrix(&self) -> &Matrix {
        self.rigidity.get_or_init(|| {
            let d = self.dim;
            let m = self.graph.edge_count();
            let e = self.edge_vectors();
            let mut weights = Matrix::zeros(d * m, d * m);
            for k in 0..m {
                let ek: Vector = e.rows(k * d, d).into_owned();
                let pk = projector(&ek).expect("edges validated at construction") / ek.norm();
                weights.view_mut((k * d, k * d), (d, d)).copy_from(&pk);
            }
            weights * self.graph.expand(d)
        })
    }

    /// The constraint set realized by this formation's own bearings.
    pub fn constraints_from_target(&self) -> &BearingConstraintSet {
        self.constraints.get_or_init(|| {
            let d = self.dim;
            let g = self.bearings();
            let bearings = (0..self.graph.edge_count())
                .map(|k| g.rows(k * d, d).into_owned())
                .collect();
            BearingConstraintSet::new(self.graph.clone(), d, bearings)
                .expect("bearings of a valid formation are unit vectors")
        })
    }

    /// Bearing Laplacian built from this formation's own bearings.
    pub fn bearing_laplacian(&self) -> &Matrix {
        self.constraints_from_target().bearing_laplacian()
    }

    /// Orthonormal basis of `span{1 ⊗ I_d, p}`: translations and scaling.
    pub fn trivial_motion_basis(&self, tol_rel: f64) -> SubspaceBasis {
        let mut vectors = translation_vectors(self.agent_count(), self.dim);
        vectors.push(self.positions.clone());
        SubspaceBasis::span_of(&vectors, self.dim * self.agent_count(), tol_rel)
            .expect("vectors share the ambient dimension")
    }

    /// Centroid of the agent positions.
    pub fn centroid(&self) -> Vector {
        centroid_of(&self.positions, self.dim)
    }
}

pub(crate) fn centroid_of(p: &Vector, d: usize) -> Vector {
    let n = p.len() / d;
    let mut c = Vector::zeros(d);
    for i in 0..n {
        c += block(p, i, d);
    }
    c / n as f64
}

/// Root-mean-square distance of the agents from their centroid.
pub(crate) fn spread_of(p: &Vector, d: usize) -> f64 {
    let n = p.len() / d;
    let c = centroid_of(p, d);
    let sum: f64 = (0..n).map(|i| (block(p, i, d) - &c).norm_squared()).sum();
    (sum / n as f64).sqrt()
}

/// Outcome of searching for a formation that realizes a constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Smallest value of `sum_k |P_{g*_k} e'_k|^2` (square-rooted) over
    /// unit-norm, translation-free configurations.
    pub residual: f64,
    /// A realizing configuration with nondegenerate edges, when one was found.
    pub witness: Option<Vector>,
}

/// Desired unit bearings, one per edge of a directed graph.
#[derive(Debug, Clone)]
pub struct BearingConstraintSet {
    graph: DirectedGraph,
    dim: usize,
    bearings: Vec<Vector>,
    laplacian: OnceLock<Matrix>,
}

impl BearingConstraintSet {
    pub fn new(graph: DirectedGraph, dim: usize, bearings: Vec<Vector>) -> Result<Self, FormationError> {
        check_dim(dim)?;
        if bearings.len() != graph.edge_count() {
            return Err(FormationError::BearingCount {
                expected: graph.edge_count(),
                found: bearings.len(),
            });
        }
        for (index, g) in bearings.iter().enumerate() {
            if g.len() != dim {
                return Err(FormationError::BearingDimension {
                    index,
                    expected: dim,
                    found: g.len(),
                });
            }
            let norm = g.norm();
            if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(FormationError::NonUnitBearing { index, norm });
            }
        }
        Ok(Self {
            graph,
            dim,
            bearings,
            laplacian: OnceLock::new(),
        })
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bearings(&self) -> &[Vector] {
        &self.bearings
    }

    /// Size of the stacked state, `d * n`.
    pub fn state_dim(&self) -> usize {
        self.dim * self.graph.vertex_count()
    }

    pub fn edge_projectors(&self) -> Vec<Matrix> {
        self.bearings
            .iter()
            .map(|g| projector(g).expect("unit bearings"))
            .collect()
    }

    /// Matrix-weighted Laplacian with off-diagonal blocks `-P_{g*_ij}`.
    pub fn bearing_laplacian(&self) -> &Matrix {
        self.laplacian.get_or_init(|| {
            let d = self.dim;
            let n = self.graph.vertex_count();
            let mut l = Matrix::zeros(d * n, d * n);
            for (edge, p) in self.graph.edges().iter().zip(self.edge_projectors()) {
                let (i, j) = (edge.tail_index(), edge.head_index());
                let mut diag = l.view_mut((i * d, i * d), (d, d));
                diag += &p;
                let mut off = l.view_mut((i * d, j * d), (d, d));
                off -= &p;
            }
            l
        })
    }

    /// `diag(P_{g*_k}) (H ⊗ I_d)`: stacked projected edge vectors.
    pub fn projected_incidence(&self) -> Matrix {
        let d = self.dim;
        let m = self.graph.edge_count();
        let mut weights = Matrix::zeros(d * m, d * m);
        for (k, p) in self.edge_projectors().into_iter().enumerate() {
            weights.view_mut((k * d, k * d), (d, d)).copy_from(&p);
        }
        weights * self.graph.expand(d)
    }

    /// `|P_{g*_k} (p_i - p_j)|` for every edge `k = (i, j)`.
    pub fn edge_residuals(&self, p: &Vector) -> Vec<f64> {
        let d = self.dim;
        self.graph
            .edges()
            .iter()
            .zip(self.edge_projectors())
            .map(|(e, proj)| {
                let diff = block(p, e.tail_index(), d) - block(p, e.head_index(), d);
                (proj * diff).norm()
            })
            .collect()
    }

    /// Sum of the per-edge projected errors.
    pub fn bearing_error(&self, p: &Vector) -> f64 {
        self.edge_residuals(p).iter().sum()
    }

    /// Searches the null space of the projected incidence matrix for a
    /// translation-free configuration with nondegenerate edges.
    pub fn feasibility(&self, tol_rel: f64) -> Feasibility {
        let d = self.dim;
        let n = self.graph.vertex_count();
        let translations = Matrix::from_columns(&translation_vectors(n, d)).transpose();
        let complement = nullspace_basis(&translations, tol_rel)
            .expect("finite matrix")
            .as_matrix()
            .clone();
        let reduced = self.projected_incidence() * &complement;
        let residual = if reduced.nrows() == 0 {
            0.0
        } else {
            let s = linalg::singular_values(&reduced).expect("finite matrix");
            if s.len() < reduced.ncols() {
                0.0
            } else {
                s.last().copied().unwrap_or(0.0)
            }
        };
        let coeffs = nullspace_basis(&reduced, tol_rel).expect("finite matrix");
        if coeffs.is_empty() {
            return Feasibility {
                feasible: false,
                residual,
                witness: None,
            };
        }
        let candidates = &complement * coeffs.as_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(0x6265_6172);
        for _ in 0..32 {
            let w = Vector::from_fn(candidates.ncols(), |_, _| rng.gen_range(-1.0..1.0));
            let mut p = &candidates * w;
            p /= p.norm();
            let Ok(g) = bearing_function(&self.graph, d, &p) else {
                continue;
            };
            let e = edge_vectors_of(&self.graph, d, &p);
            let shortest = (0..self.graph.edge_count())
                .map(|k| e.rows(k * d, d).norm())
                .fold(f64::INFINITY, f64::min);
            if shortest < 1e-6 {
                continue;
            }
            // Prefer the orientation that matches most of the requested bearings.
            let aligned: f64 = (0..self.graph.edge_count())
                .map(|k| g.rows(k * d, d).dot(&self.bearings[k]).signum())
                .sum();
            if aligned < 0.0 {
                p = -p;
            }
            return Feasibility {
                feasible: true,
                residual,
                witness: Some(p),
            };
        }
        Feasibility {
            feasible: false,
            residual,
            witness: None,
        }
    }

    /// A formation realizing these constraints up to bearing equivalence.
    pub fn realize(&self, tol_rel: f64) -> Result<Formation, FormationError> {
        let f = self.feasibility(tol_rel);
        match f.witness {
            Some(p) => Formation::new(self.graph.clone(), self.dim, p),
            None => Err(FormationError::Infeasible { residual: f.residual }),
        }
    }
}
