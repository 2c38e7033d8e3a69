use super::*;
use crate::ifs::{build_graph, IfsSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn triangle(w: [f64; 3]) -> ConductanceField {
    ConductanceField::new(3, vec![(0, 1), (0, 2), (1, 2)], w.to_vec(), FieldOrigin::Deterministic).unwrap()
}

fn path2() -> ConductanceField {
    ConductanceField::new(3, vec![(0, 1), (1, 2)], vec![1.0, 1.0], FieldOrigin::Deterministic).unwrap()
}

/// Star-mesh elimination of every non-boundary vertex, one at a time.
/// Independent of the Cholesky-based Schur complement.
fn star_mesh_trace(field: &ConductanceField, boundary: &[usize]) -> DMatrix<f64> {
    let n = field.num_vertices();
    let mut c = DMatrix::<f64>::zeros(n, n);
    for (&(a, b), &w) in field.edges().iter().zip(field.weights()) {
        c[(a, b)] += w;
        c[(b, a)] += w;
    }
    let mut alive: Vec<bool> = vec![true; n];
    for v in 0..n {
        if boundary.contains(&v) {
            continue;
        }
        alive[v] = false;
        let total: f64 = (0..n).filter(|&u| alive[u]).map(|u| c[(v, u)]).sum();
        for i in 0..n {
            for j in 0..n {
                if i != j && alive[i] && alive[j] {
                    c[(i, j)] += c[(v, i)] * c[(v, j)] / total;
                }
            }
        }
        for u in 0..n {
            c[(v, u)] = 0.0;
            c[(u, v)] = 0.0;
        }
    }
    DMatrix::from_fn(boundary.len(), boundary.len(), |i, j| if i == j { 0.0 } else { c[(boundary[i], boundary[j])] })
}

pub(crate) fn random_network(rng: &mut ChaCha8Rng, max_vertices: usize) -> ConductanceField {
    let n = rng.random_range(2..=max_vertices);
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !edges.contains(&(a.min(b), a.max(b))) && !edges.contains(&(a.max(b), a.min(b))) {
            edges.push((a, b));
        }
    }
    let weights = edges.iter().map(|_| rng.random_range(0.1..10.0)).collect();
    ConductanceField::new(n, edges, weights, FieldOrigin::Random).unwrap()
}

#[test]
fn energy_golden_values() {
    let t = triangle([1.0, 1.0, 1.0]);
    assert_eq!(energy(&t, &[3.0, 3.0, 3.0]).unwrap(), 0.0);
    // Edges (0,1) and (0,2) each carry a unit difference.
    assert_eq!(energy(&t, &[1.0, 0.0, 0.0]).unwrap(), 2.0);
    let f = [0.3, -1.2, 2.5];
    let f2: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
    assert!((energy(&t, &f2).unwrap() - 4.0 * energy(&t, &f).unwrap()).abs() < 1e-12);
    assert!(matches!(energy(&t, &[1.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn field_rejects_nonpositive_weights() {
    let r = ConductanceField::new(2, vec![(0, 1)], vec![0.0], FieldOrigin::Random);
    assert!(matches!(r, Err(Error::InvalidField(_))));
    let r = ConductanceField::new(3, vec![(0, 1)], vec![1.0], FieldOrigin::Random);
    assert!(matches!(r, Err(Error::InvalidField(_))));
}

#[test]
fn trace_without_interior_is_identity() {
    let t = triangle([1.0, 2.0, 3.0]);
    let form = trace_to(&t, &[0, 1, 2]).unwrap();
    assert_eq!(form.conductance[(0, 1)], 1.0);
    assert_eq!(form.conductance[(0, 2)], 2.0);
    assert_eq!(form.conductance[(1, 2)], 3.0);
}

#[test]
fn gasket_level_one_traces_to_three_fifths() {
    let g1 = build_graph(&IfsSpec::sierpinski_gasket(), 1).unwrap();
    let field = ConductanceField::uniform(&g1, 1.0).unwrap();
    let form = trace_to(&field, g1.boundary()).unwrap();
    let oracle = star_mesh_trace(&field, g1.boundary());
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!((form.conductance[(i, j)] - 0.6).abs() < 1e-14);
                assert!((oracle[(i, j)] - 0.6).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn series_law() {
    let form = trace_to(&path2(), &[0, 2]).unwrap();
    assert!((form.conductance[(0, 1)] - 0.5).abs() < 1e-15);
}

#[test]
fn disconnected_interior_is_singular() {
    let f = ConductanceField::new(4, vec![(0, 1), (2, 3)], vec![1.0, 1.0], FieldOrigin::Random).unwrap();
    assert!(matches!(trace_to(&f, &[0, 1]), Err(Error::SingularTrace(_))));
    assert!(matches!(effective_resistance(&f, 0, 2), Err(Error::Unreachable(_))));
}

#[test]
fn resistance_examples() {
    let e = ConductanceField::new(2, vec![(0, 1)], vec![4.0], FieldOrigin::Random).unwrap();
    assert!((effective_resistance(&e, 0, 1).unwrap() - 0.25).abs() < 1e-15);
    let t = triangle([1.0, 1.0, 1.0]);
    // 1 ∥ (1 + 1)
    assert!((effective_resistance(&t, 0, 2).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    assert_eq!(effective_resistance(&t, 1, 1).unwrap(), 0.0);
    let g1 = build_graph(&IfsSpec::sierpinski_gasket(), 1).unwrap();
    let field = ConductanceField::uniform(&g1, 1.0).unwrap();
    let b = g1.boundary();
    let r = effective_resistance(&field, b[0], b[1]).unwrap();
    assert!((r - 10.0 / 9.0).abs() < 1e-13);
    assert!((effective_resistance_via_trace(&field, b[0], b[1]).unwrap() - r).abs() < 1e-10);
}

#[test]
fn pairwise_examples() {
    let e = ConductanceField::new(2, vec![(0, 1)], vec![2.0], FieldOrigin::Random).unwrap();
    let k = pairwise_resistance(&e, &[1, 0]).unwrap();
    assert!((k.get(0, 1).unwrap() - 0.5).abs() < 1e-15);
    let t = triangle([1.0, 1.0, 1.0]);
    let k = pairwise_resistance(&t, &[0, 1, 2]).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 0.0 } else { 2.0 / 3.0 };
            assert!((k.matrix()[(i, j)] - want).abs() < 1e-14);
        }
    }
    k.check_metric(1e-10).unwrap();
}

#[test]
fn green_kernel_examples() {
    let t = triangle([1.0, 1.0, 1.0]);
    let k = pairwise_resistance(&t, &[0, 1, 2]).unwrap();
    assert_eq!(green_kernel(&k, 0, 0, 2).unwrap(), 0.0);
    assert_eq!(green_kernel(&k, 0, 1, 0).unwrap(), 0.0);
    assert!((green_kernel(&k, 0, 1, 1).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    assert!((green_kernel(&k, 0, 1, 2).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    assert!(green_kernel(&k, 0, 1, 7).is_err());
}

#[test]
fn hitting_time_examples() {
    let t = triangle([1.0, 1.0, 1.0]);
    let zero = expected_hitting_time(&t, &[0.0; 3], 1, 0).unwrap();
    assert_eq!((zero.via_green, zero.via_solve), (0.0, 0.0));
    let nu = t.vertex_measure();
    assert_eq!(nu, vec![2.0, 2.0, 2.0]);
    let h = expected_hitting_time(&t, &nu, 1, 0).unwrap();
    assert!((h.via_green - 2.0).abs() < 1e-12);
    assert!((h.via_solve - 2.0).abs() < 1e-12);
    assert!(expected_hitting_time(&t, &[1.0, -1.0, 1.0], 1, 0).is_err());
}

#[test]
fn kernel_csv_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let f = random_network(&mut rng, 12);
    let all: Vec<usize> = (0..f.num_vertices()).collect();
    let k = pairwise_resistance(&f, &all).unwrap();
    let mut buf = Vec::new();
    k.write_csv(&mut buf).unwrap();
    let back = ResistanceKernel::read_csv(&buf[..]).unwrap();
    assert_eq!(back, k);
    assert!(ResistanceKernel::read_csv(&b"0,1\n0.0,1.0\n"[..]).is_err());
}

#[test]
fn hierarchical_coarsening_matches_dense_trace() {
    for spec in [IfsSpec::sierpinski_gasket(), IfsSpec::vicsek()] {
        let n = 3;
        let g = build_graph(&spec, n).unwrap();
        let g1 = build_graph(&spec, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = (0..g.num_edges()).map(|_| rng.random_range(0.5..20.0)).collect();
        let field = ConductanceField::on_graph(&g, w.clone(), FieldOrigin::Random).unwrap();
        let ren = CellRenormalizer::from_level_one(&g1).unwrap();
        for k in 0..n {
            let coarse_graph = build_graph(&spec, k).unwrap();
            let cw = ren.coarsen_to(&w, n, k).unwrap();
            let coarse = ConductanceField::on_graph(&coarse_graph, cw, FieldOrigin::Random).unwrap();
            let emb = g.embed(&coarse_graph).unwrap();
            let dense = pairwise_resistance(&field, &emb).unwrap();
            let all: Vec<usize> = (0..coarse_graph.num_vertices()).collect();
            let hier = pairwise_resistance(&coarse, &all).unwrap();
            let diff = (dense.matrix() - hier.matrix()).amax();
            assert!(diff < 1e-10, "level {k}: {diff}");
        }
    }
}

#[test]
fn formula_and_solve_agree_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let f = random_network(&mut rng, 12);
        let n = f.num_vertices();
        let theta: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..5.0) }).collect();
        let x = rng.random_range(0..n);
        let y = (x + 1 + rng.random_range(0..n - 1)) % n;
        let h = expected_hitting_time(&f, &theta, y, x).unwrap();
        assert!(h.relative_gap() <= 1e-8, "{h:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_metrics(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_network(&mut rng, 10);
        let all: Vec<usize> = (0..f.num_vertices()).collect();
        let k = pairwise_resistance(&f, &all).unwrap();
        prop_assert!(k.check_metric(1e-10).is_ok(), "{:?}", k.check_metric(1e-10));
        let (x, y) = (0, f.num_vertices() - 1);
        let a = effective_resistance(&f, x, y).unwrap();
        let b = effective_resistance_via_trace(&f, x, y).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        prop_assert!((k.get(x, y).unwrap() - a).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn trace_composes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_network(&mut rng, 12);
        let n = f.num_vertices();
        prop_assume!(n >= 4);
        let a: Vec<usize> = vec![0, n - 1];
        let ab: Vec<usize> = vec![0, n / 2, n - 1];
        let direct = trace_to(&f, &a).unwrap();
        let mid = trace_to(&f, &ab).unwrap().to_field().unwrap();
        let via = trace_to(&mid, &[0, 2]).unwrap();
        prop_assert!((direct.conductance.clone() - via.conductance).amax() < 1e-10);
        let oracle = star_mesh_trace(&f, &a);
        prop_assert!((direct.conductance - oracle).amax() < 1e-10);
    }

    #[test]
    fn rayleigh_monotonicity(seed in any::<u64>(), bump in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_network(&mut rng, 12);
        let e = rng.random_range(0..f.edges().len());
        let mut w = f.weights().to_vec();
        w[e] += bump;
        let g = ConductanceField::new(f.num_vertices(), f.edges().to_vec(), w, FieldOrigin::Random).unwrap();
        let all: Vec<usize> = (0..f.num_vertices()).collect();
        let before = pairwise_resistance(&f, &all).unwrap();
        let after = pairwise_resistance(&g, &all).unwrap();
        for i in 0..all.len() {
            for j in 0..all.len() {
                prop_assert!(after.matrix()[(i, j)] <= before.matrix()[(i, j)] + 1e-12);
            }
        }
    }

    #[test]
    fn harmonic_extension_energy_matches_trace(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_network(&mut rng, 12);
        let n = f.num_vertices();
        prop_assume!(n >= 3);
        let boundary: Vec<usize> = vec![0, 1, n - 1];
        let data: Vec<f64> = boundary.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let form = trace_to(&f, &boundary).unwrap();
        // Harmonic extension: solve L_II u_I = -L_IB u_B.
        let interior: Vec<usize> = (0..n).filter(|v| !boundary.contains(v)).collect();
        let l = f.laplacian();
        let mut u = vec![0.0; n];
        for (k, &b) in boundary.iter().enumerate() {
            u[b] = data[k];
        }
        if !interior.is_empty() {
            let lii = l.select_rows(&interior).select_columns(&interior);
            let lib = l.select_rows(&interior).select_columns(&boundary);
            let rhs = -(lib * DVector::from_column_slice(&data));
            let sol = lii.lu().solve(&rhs).unwrap();
            for (k, &v) in interior.iter().enumerate() {
                u[v] = sol[k];
            }
        }
        let e_full = energy(&f, &u).unwrap();
        let e_form = form.energy(&data).unwrap();
        prop_assert!((e_full - e_form).abs() <= 1e-10 * e_full.max(1.0));
    }

    #[test]
    fn commute_time_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_network(&mut rng, 12);
        let n = f.num_vertices();
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let (x, y) = (0, n - 1);
        let there = expected_hitting_time(&f, &theta, y, x).unwrap().via_solve;
        let back = expected_hitting_time(&f, &theta, x, y).unwrap().via_solve;
        let r = effective_resistance(&f, x, y).unwrap();
        let total: f64 = theta.iter().sum();
        prop_assert!(((there + back) - r * total).abs() <= 1e-8 * (r * total));
    }
}
