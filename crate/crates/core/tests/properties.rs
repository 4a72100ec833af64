use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use stokes_lod_core::basis::SparseVector;
use stokes_lod_core::coeffs::{element_uniform, generate_multiscale_coefficient, RandomCoefficientSpec};
use stokes_lod_core::cr::{assemble_rhs, local_gradients, local_stiffness, CrSpace};
use stokes_lod_core::mesh::MeshHierarchy;
use stokes_lod_core::sparse::{factorize, CscMatrix, TripletMatrix};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn triangle() -> impl Strategy<Value = [[f64; 2]; 3]> {
    prop::array::uniform3(prop::array::uniform2(-2.0..2.0f64)).prop_filter("non-degenerate", |p| {
        let a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        a.abs() > 1e-2
    })
}

fn to_dense(m: &CscMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (r, c, v) in m.iter() {
        d[(r, c)] += v;
    }
    d
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn local_stiffness_is_symmetric_psd_with_zero_row_sums(p in triangle()) {
        let k = local_stiffness(p);
        let scale = k.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..3 {
            prop_assert!(k[i].iter().sum::<f64>().abs() <= 1e-12 * scale);
            for j in 0..3 {
                prop_assert!((k[i][j] - k[j][i]).abs() <= 1e-12 * scale);
            }
        }
        let eig = DMatrix::from_fn(3, 3, |i, j| k[i][j]).symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&l| l >= -1e-12 * scale));
    }

    #[test]
    fn gradients_reproduce_nodal_values(p in triangle()) {
        let g = local_gradients(p);
        let mid = |i: usize| {
            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
            [(p[a][0] + p[b][0]) / 2.0, (p[a][1] + p[b][1]) / 2.0]
        };
        let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        for i in 0..3 {
            for j in 0..3 {
                let m = mid(j);
                // phi_i is 1/3 at the centroid and affine with gradient g[i]
                let value = 1.0 / 3.0 + g[i][0] * (m[0] - c[0]) + g[i][1] * (m[1] - c[1]);
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((value - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn midpoint_rule_is_exact_for_affine_loads(a in prop::array::uniform6(-3.0..3.0f64), level in 0u32..4) {
        let hier = MeshHierarchy::build(0, level).unwrap();
        let mesh = hier.mesh(level).unwrap();
        let space = CrSpace::unconstrained(mesh);
        let f = |x: [f64; 2]| [a[0] + a[1] * x[0] + a[2] * x[1], a[3] + a[4] * x[0] + a[5] * x[1]];
        let rhs = assemble_rhs(&space, f);
        // the CR basis sums to one, so the load components add up to int f
        let exact = [a[0] + a[1] / 2.0 + a[2] / 2.0, a[3] + a[4] / 2.0 + a[5] / 2.0];
        for (j, expected) in exact.iter().enumerate() {
            let total: f64 = (0..mesh.num_edges()).map(|e| rhs[space.dof(e, j).unwrap()]).sum();
            prop_assert!((total - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_affine_interpolant_is_trace(a in prop::array::uniform6(-3.0..3.0f64), level in 0u32..4) {
        let hier = MeshHierarchy::build(0, level).unwrap();
        let space = CrSpace::unconstrained(hier.mesh(level).unwrap());
        let v = space.interpolate(|x| [a[0] + a[1] * x[0] + a[2] * x[1], a[3] + a[4] * x[0] + a[5] * x[1]]);
        for d in space.elementwise_divergence(&v) {
            prop_assert!((d - (a[1] + a[5])).abs() < 1e-10);
        }
    }

    #[test]
    fn hierarchy_maps_are_consistent(level in 1u32..5, seed in any::<u64>()) {
        let hier = MeshHierarchy::build(0, level).unwrap();
        let fine = hier.mesh(level).unwrap();
        prop_assert_eq!(fine.num_triangles(), 2 << (2 * level));
        prop_assert!((fine.areas().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let t = (seed as usize) % fine.num_triangles();
        for coarse in 0..level {
            let k = hier.ancestor(level, t, coarse);
            prop_assert!(hier.descendants(coarse, k, level).contains(&t));
            let child_area: f64 = hier.descendants(coarse, k, level).map(|c| fine.area(c)).sum();
            prop_assert!((child_area - hier.mesh(coarse).unwrap().area(k)).abs() < 1e-14);
        }
        let mesh = hier.mesh(level).unwrap();
        let boundary = 4usize << level;
        prop_assert_eq!(mesh.num_vertices() + mesh.num_triangles(), mesh.num_edges() + 1);
        prop_assert_eq!(mesh.interior_edges().len(), mesh.num_edges() - boundary);
    }

    #[test]
    fn coefficient_draws_are_reproducible(seed in any::<u64>(), e in 0usize..10_000) {
        let u = element_uniform(seed, e);
        prop_assert!((0.0..1.0).contains(&u));
        prop_assert_eq!(u.to_bits(), element_uniform(seed, e).to_bits());
    }

    #[test]
    fn coefficients_stay_in_bounds(seed in any::<u64>()) {
        let hier = MeshHierarchy::build(0, 3).unwrap();
        let spec = RandomCoefficientSpec::new(3, seed);
        let nu = generate_multiscale_coefficient(&spec, &hier).unwrap();
        prop_assert!(nu.values().iter().all(|&v| (v >= spec.background_min && v < spec.background_max) || v == spec.inclusion_value));
    }

    #[test]
    fn csc_transpose_and_products_agree(entries in prop::collection::vec((0usize..7, 0usize..5, -5.0..5.0f64), 0..40), x in prop::collection::vec(-1.0..1.0f64, 5), y in prop::collection::vec(-1.0..1.0f64, 7)) {
        let mut t = TripletMatrix::new(7, 5);
        for &(r, c, v) in &entries {
            t.push(r, c, v);
        }
        let m = t.to_csc();
        let d = to_dense(&m);
        let ax = m.mul_vec(&x);
        let dx = &d * DVector::from_column_slice(&x);
        for i in 0..7 {
            prop_assert!((ax[i] - dx[i]).abs() < 1e-12);
        }
        let aty = m.mul_transpose_vec(&y);
        let tty = m.transpose().mul_vec(&y);
        for i in 0..5 {
            prop_assert!((aty[i] - tty[i]).abs() < 1e-12);
        }
        prop_assert_eq!(m.transpose().transpose().iter().collect::<Vec<_>>(), m.iter().collect::<Vec<_>>());
    }

    #[test]
    fn sparse_vector_dense_round_trip(pairs in prop::collection::btree_map(0usize..50, -1.0..1.0f64, 0..20)) {
        let v = SparseVector { indices: pairs.keys().copied().collect(), values: pairs.values().copied().collect() };
        let d = v.to_dense(50);
        for (i, x) in &pairs {
            prop_assert_eq!(d[*i], *x);
            prop_assert_eq!(v.get(*i), *x);
        }
        prop_assert!((v.dot(&d) - pairs.values().map(|x| x * x).sum::<f64>()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(config(24))]

    /// Random symmetric saddle systems of size 50 against a dense LU.
    #[test]
    fn saddle_solve_matches_dense_lu(seed in any::<u64>(), density in 0.05..0.3f64) {
        use rand_chacha::ChaCha8Rng;
        use rand_chacha::rand_core::{RngCore, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let (n, m) = (40usize, 10usize);
        let mut t = TripletMatrix::new(n + m, n + m);
        for i in 0..n {
            t.push(i, i, 25.0 + unit());
            for j in 0..i {
                if unit() < density {
                    let v = unit() - 0.5;
                    t.push(i, j, v);
                    t.push(j, i, v);
                }
            }
        }
        for r in 0..m {
            // one guaranteed entry per constraint row keeps B full rank
            t.push(n + r, 4 * r, 1.0);
            t.push(4 * r, n + r, 1.0);
            for c in 0..n {
                if c != 4 * r && unit() < density {
                    let v = unit() - 0.5;
                    t.push(n + r, c, v);
                    t.push(c, n + r, v);
                }
            }
        }
        let a = t.to_csc();
        let b: Vec<f64> = (0..n + m).map(|_| unit() - 0.5).collect();
        let x = factorize(&a).unwrap().solve(&b).unwrap();
        let dense = to_dense(&a).lu().solve(&DVector::from_column_slice(&b)).unwrap();
        prop_assert!(rel_diff(&x, dense.as_slice()) < 1e-10);
    }
}
