//! Rigidity, persistence and stability classification of formations.
//!
//! Every classification that reduces to a rank comparison is computed twice,
//! once by counting singular values and once by comparing null spaces through
//! projection residuals. The two must agree; when they do not, the tolerance
//! is too close to a singular value and an [`AnalysisError::InconsistentRankTests`]
//! is returned instead of a guess.

use nalgebra::{Complex, Schur};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formation::{
    bearing_function, centroid_of, translation_vectors, BearingConstraintSet, Formation,
    FormationError,
};
use crate::linalg::{
    numeric_rank, nullspace_basis, projector, spectral_projector_zero, subspace_contains,
    LinalgError, Matrix, SubspaceBasis, Vector, DEFAULT_RANK_TOL,
};

/// Numerical thresholds used by the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value cutoff for every rank decision.
    pub rank_rel: f64,
    /// Residual below which a vector counts as lying in a subspace.
    pub subspace: f64,
    /// `|P_{g1} g2|` below this means two outgoing bearings are collinear.
    pub collinear: f64,
    /// Eigenvalues with modulus below this count as zero.
    pub zero_eigenvalue: f64,
    /// Real parts below `-conjecture` are reported as violation candidates.
    pub conjecture: f64,
    /// Bearing-equivalence residual threshold.
    pub equivalence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: DEFAULT_RANK_TOL,
            subspace: 1e-8,
            collinear: 1e-9,
            zero_eigenvalue: 1e-8,
            conjecture: 1e-8,
            equivalence: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("{test}: rank test says {rank_test}, subspace test says {subspace_test}; adjust --tol-rank")]
    InconsistentRankTests {
        test: &'static str,
        rank_test: bool,
        subspace_test: bool,
    },
    #[error("bearing-equivalence criteria disagree (edgewise residual {edgewise:e}, rigidity residual {rigidity:e})")]
    CriteriaDisagree { edgewise: f64, rigidity: f64 },
    #[error("this test is only defined in 2-D, got dimension {0}")]
    WrongDimension(usize),
    #[error("position vector has length {found}, expected {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("spectrum has an eigenvalue with real part {min_real_part:e}")]
    UnstableSpectrum { min_real_part: f64 },
    #[error("eigenvalue iteration did not converge")]
    EigenSolverFailed,
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Infinitesimal bearing rigidity: `rank(R_B) = dn - d - 1`, cross-checked
/// against `Null(R_B) = span{1 ⊗ I_d, p}`.
pub fn is_infinitesimally_bearing_rigid(f: &Formation, tol: &Tolerances) -> Result<bool> {
    let rb = f.bearing_rigidity_matrix();
    let (d, n) = (f.dim(), f.agent_count());
    let rank_test = numeric_rank(rb, tol.rank_rel)? == d * n - d - 1;
    let null = nullspace_basis(rb, tol.rank_rel)?;
    let trivial = f.trivial_motion_basis(tol.rank_rel);
    let subspace_test = subspace_contains(&trivial, &null, tol.subspace)?
        && subspace_contains(&null, &trivial, tol.subspace)?;
    agree("infinitesimal rigidity", rank_test, subspace_test)
}

/// Bearing persistence: `Null(R_B) = Null(L_B)`, with `L_B` built from the
/// formation's own bearings.
pub fn is_bearing_persistent(f: &Formation, tol: &Tolerances) -> Result<bool> {
    let rb = f.bearing_rigidity_matrix();
    let lb = f.bearing_laplacian();
    let rank_test = numeric_rank(rb, tol.rank_rel)? == numeric_rank(lb, tol.rank_rel)?;
    let null_r = nullspace_basis(rb, tol.rank_rel)?;
    let null_l = nullspace_basis(lb, tol.rank_rel)?;
    if !subspace_contains(&null_l, &null_r, tol.subspace)? {
        // Null(R_B) ⊆ Null(L_B) always holds; failing it means the tolerance is off.
        return Err(AnalysisError::InconsistentRankTests {
            test: "null-space chain",
            rank_test,
            subspace_test: false,
        });
    }
    let subspace_test = subspace_contains(&null_r, &null_l, tol.subspace)?;
    agree("bearing persistence", rank_test, subspace_test)
}

fn agree(test: &'static str, rank_test: bool, subspace_test: bool) -> Result<bool> {
    if rank_test == subspace_test {
        Ok(rank_test)
    } else {
        Err(AnalysisError::InconsistentRankTests {
            test,
            rank_test,
            subspace_test,
        })
    }
}

/// Result of comparing a candidate configuration against a formation's bearings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub equivalent: bool,
    /// `max_k |P_{g_k} g'_k|`.
    pub max_edge_residual: f64,
    /// `|R_B(p) q|`, made dimensionless by `|p - c(p)| / |q - c(q)|`.
    pub rigidity_residual: f64,
    /// Per edge: `true` when the candidate bearing points opposite to the reference.
    pub flipped: Vec<bool>,
}

/// Bearing equivalence of `f` and the configuration `q` on the same graph.
pub fn check_bearing_equivalence(f: &Formation, q: &Vector, tolerance: f64) -> Result<EquivalenceCheck> {
    let d = f.dim();
    if q.len() != f.positions().len() {
        return Err(AnalysisError::WrongLength {
            expected: f.positions().len(),
            found: q.len(),
        });
    }
    let g_ref = f.bearings();
    let g_new = bearing_function(f.graph(), d, q)?;
    let mut max_edge_residual = 0.0f64;
    let mut flipped = Vec::with_capacity(f.graph().edge_count());
    for k in 0..f.graph().edge_count() {
        let gk: Vector = g_ref.rows(k * d, d).into_owned();
        let gq: Vector = g_new.rows(k * d, d).into_owned();
        max_edge_residual = max_edge_residual.max((projector(&gk)? * &gq).norm());
        flipped.push(gk.dot(&gq) < 0.0);
    }
    let centered = |v: &Vector| -> f64 {
        let c = centroid_of(v, d);
        let mut out = v.clone();
        for i in 0..v.len() / d {
            let mut b = out.rows_mut(i * d, d);
            b -= &c;
        }
        out.norm()
    };
    let rigidity_residual =
        (f.bearing_rigidity_matrix() * q).norm() * centered(f.positions()) / centered(q);
    let edgewise_ok = max_edge_residual < tolerance;
    let rigidity_ok = rigidity_residual < tolerance;
    if edgewise_ok != rigidity_ok {
        return Err(AnalysisError::CriteriaDisagree {
            edgewise: max_edge_residual,
            rigidity: rigidity_residual,
        });
    }
    Ok(EquivalenceCheck {
        equivalent: edgewise_ok,
        max_edge_residual,
        rigidity_residual,
        flipped,
    })
}

/// Outcome of the 2-D out-degree / non-collinearity test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficientConditionCheck {
    pub condition_holds: bool,
    /// 1-based ids of agents with more than two outgoing edges or a collinear pair.
    pub violating_agents: Vec<usize>,
}

/// Sufficient condition for persistence in the plane: every agent has at most
/// two outgoing edges, and any pair of them is non-collinear. Passing implies
/// persistence; failing implies nothing.
pub fn sufficient_persistence_2d(f: &Formation, tol: &Tolerances) -> Result<SufficientConditionCheck> {
    if f.dim() != 2 {
        return Err(AnalysisError::WrongDimension(f.dim()));
    }
    let mut violating_agents = Vec::new();
    for i in 0..f.agent_count() {
        let out: Vec<usize> = f.graph().outgoing_edge_indices(i).collect();
        let ok = match out.as_slice() {
            [] | [_] => true,
            [a, b] => (projector(&f.bearing(*a))? * f.bearing(*b)).norm() > tol.collinear,
            _ => false,
        };
        if !ok {
            violating_agents.push(i + 1);
        }
    }
    Ok(SufficientConditionCheck {
        condition_holds: violating_agents.is_empty(),
        violating_agents,
    })
}

/// Eigenvalues of a bearing Laplacian, sorted by real part.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    pub min_real_part: f64,
}

impl Spectrum {
    /// Eigenvalues with `|λ| < tol`.
    pub fn near_zero_count(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|z| z.norm() < tol).count()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `[re, im]` pairs, the layout used in reports.
    pub fn as_pairs(&self) -> Vec<[f64; 2]> {
        self.eigenvalues.iter().map(|z| [z.re, z.im]).collect()
    }
}

/// All eigenvalues of a square matrix via the real Schur form.
pub fn matrix_spectrum(m: &Matrix) -> Result<Spectrum> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        }
        .into());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000).ok_or(AnalysisError::EigenSolverFailed)?;
    let mut eigenvalues: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let min_real_part = eigenvalues.first().map_or(0.0, |z| z.re);
    Ok(Spectrum {
        eigenvalues,
        min_real_part,
    })
}

/// Spectrum of the bearing Laplacian of a constraint set.
pub fn laplacian_spectrum(c: &BearingConstraintSet) -> Result<Spectrum> {
    matrix_spectrum(c.bearing_laplacian())
}

/// Predicted steady state of `dp/dt = -L_B p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPrediction {
    pub p_inf: Vector,
    pub valid: bool,
    pub reason: Option<String>,
}

/// Steady state as the spectral projection of `p0` onto `Null(L_B)`.
///
/// Only meaningful when every nonzero eigenvalue has a positive real part and
/// the zero eigenvalue is semisimple.
pub fn predict_limit(c: &BearingConstraintSet, p0: &Vector, tol: &Tolerances) -> Result<LimitPrediction> {
    predict_limit_for_matrix(c.bearing_laplacian(), p0, tol)
}

pub(crate) fn predict_limit_for_matrix(l: &Matrix, p0: &Vector, tol: &Tolerances) -> Result<LimitPrediction> {
    if p0.len() != l.ncols() {
        return Err(AnalysisError::WrongLength {
            expected: l.ncols(),
            found: p0.len(),
        });
    }
    let spectrum = matrix_spectrum(l)?;
    if spectrum.min_real_part < -tol.zero_eigenvalue {
        return Err(AnalysisError::UnstableSpectrum {
            min_real_part: spectrum.min_real_part,
        });
    }
    let projector = spectral_projector_zero(l, tol.rank_rel)?;
    let p_inf = &projector.matrix * p0;
    let oscillatory = spectrum
        .eigenvalues
        .iter()
        .any(|z| z.norm() >= tol.zero_eigenvalue && z.re <= tol.zero_eigenvalue);
    let (valid, reason) = if oscillatory {
        (
            false,
            Some("nonzero eigenvalues on the imaginary axis; the trajectory does not settle".to_owned()),
        )
    } else {
        (true, None)
    };
    Ok(LimitPrediction { p_inf, valid, reason })
}

/// How the positions used for classification were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassificationMode {
    /// The formation's own positions define the bearings.
    Positions,
    /// Constraints were given as raw bearings; a realizing configuration was computed.
    RealizedFromBearings,
}

/// Everything known about one formation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub mode: ClassificationMode,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub rank_rb: usize,
    pub rank_lb: usize,
    pub nullity_rb: usize,
    pub nullity_lb: usize,
    pub is_rigid: bool,
    pub is_persistent: bool,
    /// `|R_B (1 ⊗ I_d)|_F`, `|R_B p|`, and `max |L_B v|` over a basis of `Null(R_B)`.
    pub null_chain_residuals: [f64; 3],
    /// `[re, im]` pairs sorted by real part.
    pub spectrum: Vec<[f64; 2]>,
    pub min_real_part: f64,
    pub trivial_space_dim: usize,
    pub weakly_connected: bool,
    pub undirected: bool,
    /// Only evaluated in 2-D.
    pub sufficient_condition: Option<SufficientConditionCheck>,
    pub conjecture_violation_candidate: bool,
    /// Columns of an orthonormal basis of `Null(R_B)`.
    pub null_rb_basis: Vec<Vec<f64>>,
    /// Columns of an orthonormal basis of `Null(L_B)`.
    pub null_lb_basis: Vec<Vec<f64>>,
}

fn basis_columns(b: &SubspaceBasis) -> Vec<Vec<f64>> {
    b.vectors().map(|v| v.iter().copied().collect()).collect()
}

/// Full classification of a formation, with internal consistency checks.
pub fn classify(f: &Formation, tol: &Tolerances) -> Result<AnalysisReport> {
    classify_with_mode(f, tol, ClassificationMode::Positions)
}

/// Classifies a constraint set given only as bearings by first computing a
/// realizing configuration.
pub fn classify_constraints(c: &BearingConstraintSet, tol: &Tolerances) -> Result<AnalysisReport> {
    let f = c.realize(tol.rank_rel)?;
    classify_with_mode(&f, tol, ClassificationMode::RealizedFromBearings)
}

fn classify_with_mode(f: &Formation, tol: &Tolerances, mode: ClassificationMode) -> Result<AnalysisReport> {
    let (n, d, m) = (f.agent_count(), f.dim(), f.graph().edge_count());
    let rb = f.bearing_rigidity_matrix();
    let lb = f.bearing_laplacian();
    let rank_rb = numeric_rank(rb, tol.rank_rel)?;
    let rank_lb = numeric_rank(lb, tol.rank_rel)?;
    let null_r = nullspace_basis(rb, tol.rank_rel)?;
    let null_l = nullspace_basis(lb, tol.rank_rel)?;
    let is_rigid = is_infinitesimally_bearing_rigid(f, tol)?;
    let is_persistent = is_bearing_persistent(f, tol)?;

    let translations = Matrix::from_columns(&translation_vectors(n, d));
    let null_chain_residuals = [
        (rb * translations).norm(),
        (rb * f.positions()).norm(),
        null_r.vectors().map(|v| (lb * v).norm()).fold(0.0, f64::max),
    ];

    let nullity_rb = null_r.dim();
    let nullity_lb = null_l.dim();
    if nullity_rb > nullity_lb {
        return Err(AnalysisError::InconsistentRankTests {
            test: "null-space chain",
            rank_test: false,
            subspace_test: true,
        });
    }
    let trivial = f.trivial_motion_basis(tol.rank_rel);
    let direct = nullity_lb == d + 1 && subspace_contains(&trivial, &null_l, tol.subspace)?;
    agree("rigid-and-persistent", is_rigid && is_persistent, direct)?;
    let undirected = f.graph().is_undirected();
    if undirected && !is_persistent {
        return Err(AnalysisError::InconsistentRankTests {
            test: "undirected persistence",
            rank_test: false,
            subspace_test: true,
        });
    }

    let spectrum = matrix_spectrum(lb)?;
    let sufficient_condition = if d == 2 {
        Some(sufficient_persistence_2d(f, tol)?)
    } else {
        None
    };
    Ok(AnalysisReport {
        mode,
        n,
        d,
        m,
        rank_rb,
        rank_lb,
        nullity_rb,
        nullity_lb,
        is_rigid,
        is_persistent,
        null_chain_residuals,
        spectrum: spectrum.as_pairs(),
        min_real_part: spectrum.min_real_part,
        trivial_space_dim: trivial.dim(),
        weakly_connected: f.graph().is_weakly_connected(),
        undirected,
        sufficient_condition,
        conjecture_violation_candidate: spectrum.min_real_part < -tol.conjecture,
        null_rb_basis: basis_columns(&null_r),
        null_lb_basis: basis_columns(&null_l),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;
    use nalgebra::dvector;

    fn square(edges: &[(usize, usize)]) -> Formation {
        let g = DirectedGraph::new(4, edges).unwrap();
        Formation::new(g, 2, dvector![-1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0]).unwrap()
    }

    fn fig3b() -> Formation {
        let g = DirectedGraph::new(4, &[(1, 4), (1, 2), (3, 2), (3, 4)]).unwrap();
        Formation::new(g, 2, dvector![0.0, 3.0, 2.0, 0.0, 0.0, 0.0, -2.0, 0.0]).unwrap()
    }

    const FIG2A: [(usize, usize); 5] = [(1, 4), (1, 2), (2, 3), (3, 4), (2, 4)];
    const FIG2B: [(usize, usize); 4] = [(1, 4), (2, 1), (2, 3), (3, 4)];
    const FIG3A: [(usize, usize); 5] = [(1, 4), (2, 1), (2, 3), (3, 4), (2, 4)];

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn rigidity_examples() {
        assert!(is_infinitesimally_bearing_rigid(&square(&FIG2A), &tol()).unwrap());
        assert!(is_infinitesimally_bearing_rigid(&square(&FIG3A), &tol()).unwrap());
        assert!(!is_infinitesimally_bearing_rigid(&square(&FIG2B), &tol()).unwrap());
        let g = DirectedGraph::new(2, &[(1, 2)]).unwrap();
        let pair = Formation::new(g, 2, dvector![0.0, 0.0, 1.0, 2.0]).unwrap();
        assert!(is_infinitesimally_bearing_rigid(&pair, &tol()).unwrap());
    }

    #[test]
    fn persistence_examples() {
        assert!(is_bearing_persistent(&square(&FIG2A), &tol()).unwrap());
        assert!(!is_bearing_persistent(&square(&FIG3A), &tol()).unwrap());
        let g = DirectedGraph::undirected(4, &[(1, 2), (2, 3), (3, 4)]).unwrap();
        let f = Formation::new(g, 2, dvector![0.0, 0.0, 1.0, 0.3, 2.0, -0.4, 2.5, 1.0]).unwrap();
        assert!(is_bearing_persistent(&f, &tol()).unwrap());
    }

    #[test]
    fn equivalence_examples() {
        let f = square(&FIG2A);
        let own = check_bearing_equivalence(&f, f.positions(), 1e-8).unwrap();
        assert!(own.equivalent);
        assert!(own.max_edge_residual < 1e-12);

        let q = f.positions() * 2.0 + Vector::from_fn(8, |r, _| if r % 2 == 0 { 5.0 } else { -3.0 });
        assert!(check_bearing_equivalence(&f, &q, 1e-8).unwrap().equivalent);

        let s3 = 3f64.sqrt();
        let g = DirectedGraph::new(3, &[(1, 2), (2, 3), (3, 1)]).unwrap();
        let tri = Formation::new(g, 2, dvector![-s3, -1.0, 0.0, 2.0, s3, -1.0]).unwrap();
        let reflected = -tri.positions();
        let check = check_bearing_equivalence(&tri, &reflected, 1e-8).unwrap();
        assert!(check.equivalent);
        assert_eq!(check.flipped, vec![true, true, true]);

        let mut moved = f.positions().clone();
        moved[2] += 0.5;
        let check = check_bearing_equivalence(&f, &moved, 1e-8).unwrap();
        assert!(!check.equivalent);
        assert!(check.max_edge_residual > 0.1);
    }

    #[test]
    fn equivalence_is_symmetric() {
        let f = square(&FIG3A);
        let q = dvector![-1.2, 0.8, 1.1, 1.3, 0.9, -1.4, -1.0, -0.7];
        let other = f.with_positions(q.clone()).unwrap();
        let forward = check_bearing_equivalence(&f, &q, 1e-8).unwrap();
        let backward = check_bearing_equivalence(&other, f.positions(), 1e-8).unwrap();
        assert_eq!(forward.equivalent, backward.equivalent);
        assert!((forward.max_edge_residual - backward.max_edge_residual).abs() < 1e-12);
    }

    #[test]
    fn equivalence_rejects_degenerate_candidate() {
        let f = square(&FIG2A);
        let q = Vector::zeros(8);
        assert!(matches!(
            check_bearing_equivalence(&f, &q, 1e-8),
            Err(AnalysisError::Formation(FormationError::DegenerateEdge { .. }))
        ));
    }

    #[test]
    fn sufficient_condition_examples() {
        assert!(sufficient_persistence_2d(&square(&FIG2A), &tol()).unwrap().condition_holds);
        assert!(sufficient_persistence_2d(&square(&FIG2B), &tol()).unwrap().condition_holds);
        let c = sufficient_persistence_2d(&square(&FIG3A), &tol()).unwrap();
        assert!(!c.condition_holds);
        assert_eq!(c.violating_agents, vec![2]);
        let c = sufficient_persistence_2d(&fig3b(), &tol()).unwrap();
        assert!(!c.condition_holds);
        assert_eq!(c.violating_agents, vec![3]);

        let g = DirectedGraph::new(2, &[(1, 2)]).unwrap();
        let f3 = Formation::new(g, 3, dvector![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            sufficient_persistence_2d(&f3, &tol()),
            Err(AnalysisError::WrongDimension(3))
        );
    }

    #[test]
    fn spectrum_examples() {
        let g = DirectedGraph::new(2, &[(1, 2)]).unwrap();
        let c = BearingConstraintSet::new(g, 2, vec![dvector![1.0, 0.0]]).unwrap();
        let s = laplacian_spectrum(&c).unwrap();
        let re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        for (got, want) in re.iter().zip([0.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(s.eigenvalues.iter().all(|z| z.im.abs() < 1e-12));

        let g = DirectedGraph::undirected(4, &[(1, 4), (1, 2), (2, 3), (3, 4)]).unwrap();
        let f = Formation::new(g, 2, dvector![-1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0]).unwrap();
        let s = laplacian_spectrum(f.constraints_from_target()).unwrap();
        assert!(s.eigenvalues.iter().all(|z| z.im.abs() < 1e-10 && z.re >= -1e-10));
    }

    #[test]
    fn fig3a_spectrum_regression() {
        let s = laplacian_spectrum(square(&FIG3A).constraints_from_target()).unwrap();
        assert_eq!(s.near_zero_count(1e-8), 4);
        // Remaining eigenvalues computed independently: {1, 1, 1, 2}.
        let nonzero: Vec<_> = s.eigenvalues.iter().filter(|z| z.norm() >= 1e-8).collect();
        assert_eq!(nonzero.len(), 4);
        assert!(nonzero.iter().all(|z| z.re > 0.5));
        let mut re: Vec<f64> = nonzero.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        for (got, want) in re.iter().zip([1.0, 1.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-4, "{re:?}");
        }
    }

    #[test]
    fn predict_limit_examples() {
        let f = square(&FIG2A);
        let c = f.constraints_from_target();
        let p0 = f.positions() * 1.7;
        let pred = predict_limit(c, &p0, &tol()).unwrap();
        assert!(pred.valid);
        assert!((pred.p_inf - &p0).norm() < 1e-10);

        let g = DirectedGraph::undirected(4, &[(1, 4), (1, 2), (2, 3), (3, 4)]).unwrap();
        let f = Formation::new(g, 2, dvector![-1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0]).unwrap();
        let c = f.constraints_from_target();
        let p0 = dvector![0.3, -0.2, 1.5, 0.4, -0.7, 2.0, 0.1, 0.0];
        let pred = predict_limit(c, &p0, &tol()).unwrap();
        let null = nullspace_basis(c.bearing_laplacian(), DEFAULT_RANK_TOL).unwrap();
        assert!((pred.p_inf - null.project(&p0)).norm() < 1e-10);
    }

    #[test]
    fn predict_limit_gates() {
        let t = tol();
        let p0 = dvector![1.0, 1.0, 1.0];
        let unstable = Matrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        assert!(matches!(
            predict_limit_for_matrix(&unstable, &p0, &t),
            Err(AnalysisError::UnstableSpectrum { .. })
        ));
        let defective = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            predict_limit_for_matrix(&defective, &p0, &t),
            Err(AnalysisError::Linalg(LinalgError::DefectiveZeroEigenvalue { .. }))
        ));
        let rotation = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let pred = predict_limit_for_matrix(&rotation, &p0, &t).unwrap();
        assert!(!pred.valid);
        assert!(pred.reason.is_some());
        assert!(matches!(
            predict_limit_for_matrix(&rotation, &dvector![1.0], &t),
            Err(AnalysisError::WrongLength { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn classify_examples() {
        let r = classify(&square(&FIG2A), &tol()).unwrap();
        assert!(r.is_rigid && r.is_persistent);
        assert_eq!((r.rank_rb, r.nullity_rb, r.nullity_lb), (5, 3, 3));
        assert!(r.sufficient_condition.as_ref().unwrap().condition_holds);

        let r = classify(&square(&FIG2B), &tol()).unwrap();
        assert!(!r.is_rigid && r.is_persistent);

        let r = classify(&square(&FIG3A), &tol()).unwrap();
        assert!(r.is_rigid && !r.is_persistent);
        assert_eq!(r.nullity_lb, 4);

        let r = classify(&fig3b(), &tol()).unwrap();
        assert!(!r.is_rigid && !r.is_persistent);
        assert!(r.null_chain_residuals.iter().all(|&x| x < 1e-9));
        assert_eq!(r.trivial_space_dim, 3);
        assert_eq!(r.mode, ClassificationMode::Positions);
    }

    #[test]
    fn classify_from_bearings_only() {
        let c = square(&FIG3A).constraints_from_target().clone();
        let r = classify_constraints(&c, &tol()).unwrap();
        assert_eq!(r.mode, ClassificationMode::RealizedFromBearings);
        assert!(r.is_rigid && !r.is_persistent);
    }

    #[test]
    fn spectral_limit_is_a_fixed_point() {
        let f = square(&FIG3A);
        let c = f.constraints_from_target();
        let p0 = dvector![0.4, 1.1, -0.3, 0.9, 1.2, -1.5, -0.8, 0.2];
        let pred = predict_limit(c, &p0, &tol()).unwrap();
        assert!(pred.valid);
        assert!((c.bearing_laplacian() * &pred.p_inf).norm() < 1e-9);
        let again = predict_limit(c, &pred.p_inf, &tol()).unwrap();
        assert!((again.p_inf - &pred.p_inf).norm() < 1e-10);
    }
}
