use bearing_core::analysis::{
    check_bearing_equivalence, classify, is_bearing_persistent, laplacian_spectrum, predict_limit, Tolerances,
};
use bearing_core::formation::translation_vectors;
use bearing_core::linalg::{nullspace_basis, spectral_projector_zero, subspace_contains, SubspaceBasis, Vector};
use bearing_core::simulation::{expm_oracle, simulate, SimulationConfig};
use bearing_core::{DirectedGraph, Formation};
use proptest::prelude::*;

/// Random directed formation: `(n, d, positions, edge mask)`.
fn formation_strategy(n: std::ops::Range<usize>, d: std::ops::Range<usize>) -> impl Strategy<Value = Formation> {
    (n, d).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-5.0f64..5.0, n * d),
            prop::collection::vec(prop::bool::weighted(0.4), n * n),
        )
            .prop_filter_map("degenerate or empty", move |(p, mask)| {
                let edges: Vec<_> = (0..n * n)
                    .filter(|&k| mask[k] && k / n != k % n)
                    .map(|k| (k / n + 1, k % n + 1))
                    .collect();
                if edges.is_empty() {
                    return None;
                }
                let g = DirectedGraph::new(n, &edges).ok()?;
                let f = Formation::new(g, d, Vector::from_vec(p)).ok()?;
                f.edge_lengths().iter().all(|&l| l > 1e-2).then_some(f)
            })
    })
}

/// Planar formation where each agent has at most two non-collinear outgoing edges.
fn capped_planar_strategy() -> impl Strategy<Value = Formation> {
    (3usize..9).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n * 2),
            prop::collection::vec((0usize..3, 0usize..n, 0usize..n), n),
        )
            .prop_filter_map("collinear or degenerate", move |(p, picks)| {
                let mut edges = Vec::new();
                for (i, &(k, a, b)) in picks.iter().enumerate() {
                    let heads: Vec<usize> = [a, b].into_iter().filter(|&j| j != i).take(k).collect();
                    if heads.len() == 2 && heads[0] == heads[1] {
                        edges.push((i + 1, heads[0] + 1));
                        continue;
                    }
                    edges.extend(heads.iter().map(|&j| (i + 1, j + 1)));
                }
                let g = DirectedGraph::new(n, &edges).ok()?;
                let f = Formation::new(g, 2, Vector::from_vec(p)).ok()?;
                if f.edge_lengths().iter().any(|&l| l < 1e-2) {
                    return None;
                }
                // Independent collinearity test: 2-D cross product of outgoing bearings.
                for i in 0..n {
                    let out: Vec<Vector> = (0..f.graph().edge_count())
                        .filter(|&k| f.graph().edges()[k].tail_index() == i)
                        .map(|k| f.bearing(k))
                        .collect();
                    if out.len() == 2 && (out[0][0] * out[1][1] - out[0][1] * out[1][0]).abs() < 1e-3 {
                        return None;
                    }
                }
                Some(f)
            })
    })
}

fn trivial_span(f: &Formation) -> SubspaceBasis {
    let mut vs = translation_vectors(f.agent_count(), f.dim());
    vs.push(f.positions().clone());
    SubspaceBasis::span_of(&vs, f.positions().len(), 1e-10).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn null_chain_holds(f in formation_strategy(3..8, 2..4)) {
        let tol = Tolerances::default();
        let null_r = nullspace_basis(f.bearing_rigidity_matrix(), tol.rank_rel).unwrap();
        let null_l = nullspace_basis(f.bearing_laplacian(), tol.rank_rel).unwrap();
        prop_assert!(subspace_contains(&null_r, &trivial_span(&f), 1e-8).unwrap());
        prop_assert!(subspace_contains(&null_l, &null_r, 1e-8).unwrap());
    }

    #[test]
    fn rigid_and_persistent_iff_laplacian_null_space_is_trivial(f in formation_strategy(3..7, 2..4)) {
        let Ok(report) = classify(&f, &Tolerances::default()) else { return Ok(()); };
        let d = f.dim();
        let null_l = nullspace_basis(f.bearing_laplacian(), 1e-10).unwrap();
        let trivial = trivial_span(&f);
        let direct = null_l.dim() == d + 1
            && subspace_contains(&null_l, &trivial, 1e-8).unwrap()
            && subspace_contains(&trivial, &null_l, 1e-8).unwrap();
        prop_assert_eq!(report.is_rigid && report.is_persistent, direct);
        prop_assert!(report.nullity_rb <= report.nullity_lb);
    }

    #[test]
    fn capped_out_degree_implies_persistence(f in capped_planar_strategy()) {
        prop_assert!(is_bearing_persistent(&f, &Tolerances::default()).unwrap());
    }

    #[test]
    fn equivalence_is_symmetric(f in formation_strategy(3..7, 2..4), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let q = Vector::from_fn(f.positions().len(), |_, _| rng.gen_range(-5.0..5.0));
        let Ok(g) = f.with_positions(q.clone()) else { return Ok(()); };
        if g.edge_lengths().iter().any(|&l| l < 1e-2) {
            return Ok(());
        }
        let forward = check_bearing_equivalence(&f, &q, 1e-8).unwrap();
        let backward = check_bearing_equivalence(&g, f.positions(), 1e-8).unwrap();
        prop_assert_eq!(forward.equivalent, backward.equivalent);

        // Scaled and shifted copies are always equivalent in both directions.
        let shifted = f.positions() * -2.5 + Vector::from_fn(q.len(), |r, _| (r % f.dim()) as f64);
        prop_assert!(check_bearing_equivalence(&f, &shifted, 1e-8).unwrap().equivalent);
    }

    #[test]
    fn near_zero_eigenvalues_count_the_null_space(f in formation_strategy(3..7, 2..4)) {
        let l = f.bearing_laplacian();
        // Only semisimple zero eigenvalues have a well-conditioned count.
        prop_assume!(spectral_projector_zero(l, 1e-10).is_ok());
        let spectrum = laplacian_spectrum(f.constraints_from_target()).unwrap();
        let nullity = nullspace_basis(l, 1e-10).unwrap().dim();
        prop_assert_eq!(spectrum.near_zero_count(1e-8), nullity);
    }

    #[test]
    fn predicted_limit_matches_long_horizon_oracle(f in formation_strategy(3..6, 2..3), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let c = f.constraints_from_target();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p0 = Vector::from_fn(f.positions().len(), |_, _| rng.gen_range(-2.0..2.0));
        let Ok(limit) = predict_limit(c, &p0, &Tolerances::default()) else { return Ok(()); };
        prop_assume!(limit.valid);
        let spectrum = laplacian_spectrum(c).unwrap();
        let slowest = spectrum
            .eigenvalues
            .iter()
            .filter(|z| z.norm() > 1e-8)
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        prop_assume!(slowest > 0.2);
        let horizon = 40.0 / slowest;
        let p_t = expm_oracle(c, &p0, horizon);
        prop_assert!((p_t - &limit.p_inf).amax() < 1e-6);
        prop_assert!((c.bearing_laplacian() * &limit.p_inf).norm() < 1e-8);
    }

    #[test]
    fn rk4_tracks_oracle(f in formation_strategy(3..6, 2..4), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let c = f.constraints_from_target();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p0 = Vector::from_fn(f.positions().len(), |_, _| rng.gen_range(-2.0..2.0));
        let radius = laplacian_spectrum(c).unwrap().spectral_radius();
        let cfg = SimulationConfig { dt: 0.05 / radius.max(1.0), t_max: 2.0, record_stride: 1000, ..Default::default() };
        let traj = simulate(c, &p0, &cfg, None).unwrap();
        let t_end = *traj.times.last().unwrap();
        prop_assert!((traj.final_positions() - expm_oracle(c, &p0, t_end)).amax() < 1e-6 * p0.amax().max(1.0));
    }
}
