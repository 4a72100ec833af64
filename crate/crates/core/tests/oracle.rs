//! Sparse saddle solves against a dense LU on the smallest hierarchies.

use nalgebra::{DMatrix, DVector};
use stokes_lod_core::basis::{patch_groups, unit_rhs, CorrectorBasis, Operators, PatchSolver, GLOBAL_ORDER};
use stokes_lod_core::coeffs::{constant_field, generate_multiscale_coefficient, inject_to_fine, RandomCoefficientSpec};
use stokes_lod_core::cr::{assemble_rhs, CrSpace};
use stokes_lod_core::mesh::MeshHierarchy;
use stokes_lod_core::solver::{assemble_coarse_system, assemble_fine_system};
use stokes_lod_core::sparse::{CscMatrix, SaddleSystem};

fn dense_solve(m: &CscMatrix, b: &[f64]) -> Vec<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (r, c, v) in m.iter() {
        d[(r, c)] += v;
    }
    d.lu().solve(&DVector::from_column_slice(b)).expect("dense oracle is nonsingular").as_slice().to_vec()
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn check_system(system: &SaddleSystem) {
    let x = system.solve().unwrap();
    let y = dense_solve(&system.matrix, &system.rhs);
    assert!(rel_diff(&x, &y) < 1e-9, "{}", rel_diff(&x, &y));
}

fn setup(fine: u32) -> (MeshHierarchy, Operators, Vec<f64>) {
    let hier = MeshHierarchy::build(0, fine).unwrap();
    let spec = RandomCoefficientSpec::new(fine, 3);
    let nu = inject_to_fine(&generate_multiscale_coefficient(&spec, &hier).unwrap(), &hier, fine).unwrap();
    let mesh = hier.mesh(fine).unwrap();
    let sigma = constant_field(mesh, 0.0).unwrap();
    let ops = Operators::assemble(&hier, 1, fine, &nu, &sigma).unwrap();
    let rhs = assemble_rhs(&CrSpace::new(mesh), |x| [-x[1], x[0]]);
    (hier, ops, rhs)
}

#[test]
fn fine_reference_on_tiny_mesh() {
    let (hier, ops, rhs) = setup(2);
    check_system(&assemble_fine_system(&hier, &ops, &rhs).unwrap());
}

#[test]
fn basis_and_coarse_systems_on_tiny_mesh() {
    let (hier, ops, rhs) = setup(2);
    for order in [1, GLOBAL_ORDER] {
        let mut solved = Vec::new();
        for group in patch_groups(&hier, 1, 2, order).unwrap() {
            let solver = PatchSolver::new(&hier, &ops, &group.patch).unwrap();
            let coarse = hier.mesh(1).unwrap();
            for &f in &group.faces {
                let i = coarse.interior_index(f).unwrap();
                for j in 0..2 {
                    let b = unit_rhs(&solver.system, &solver.indices, 2 * i + j).unwrap();
                    let x = solver.factorization.solve(&b).unwrap();
                    let y = dense_solve(&solver.system.matrix, &b);
                    assert!(rel_diff(&x, &y) < 1e-9);
                }
            }
            solved.push(solver.solve_faces(&hier, 1, &group.faces, order).unwrap());
        }
        let basis = CorrectorBasis::from_groups(&hier, &ops, order, solved).unwrap();
        check_system(&assemble_coarse_system(&hier, &ops, &basis, &rhs).unwrap().system);
    }
}
