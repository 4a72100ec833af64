//! Coarse Galerkin solve in the span of the basis, pressure post-processing,
//! the fine-scale reference solve, and error evaluation.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{CorrectorBasis, Operators};
use crate::cr::{self, CrSpace};
use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;
use crate::sparse::{factorize, BlockLayout, CscMatrix, SaddleSystem, TripletMatrix};

/// Multiscale solution for one basis.
#[derive(Clone, Debug, PartialEq)]
pub struct LodSolution {
    /// One coefficient per basis function.
    pub coefficients: Vec<f64>,
    /// Reconstructed fine CR velocity.
    pub velocity: Vec<f64>,
    /// Coarse piecewise constant pressure with zero mean.
    pub coarse_pressure: Vec<f64>,
    /// Coarse pressure injected to the fine mesh plus the weighted basis pressures.
    pub postprocessed_pressure: Vec<f64>,
}

/// Fine-scale CR / P0 solution.
#[derive(Clone, Debug, PartialEq)]
pub struct FineSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

/// Assembled coarse saddle system.
#[derive(Clone, Debug)]
pub struct CoarseSystem {
    /// `a(phi_i, phi_k)`.
    pub stiffness: CscMatrix,
    /// `b(phi_i, 1_K)`, coarse triangles by basis functions.
    pub divergence: CscMatrix,
    pub rhs: Vec<f64>,
    pub system: SaddleSystem,
}

/// `Phi^T A Phi` by sparse products over the basis supports.
pub fn galerkin_stiffness(ops: &Operators, basis: &CorrectorBasis) -> CscMatrix {
    let n = ops.num_velocity_dofs();
    let nb = basis.len();
    // row-wise view of Phi: for each CR unknown the (function, value) pairs
    let mut row_ptr = vec![0usize; n + 1];
    for bf in &basis.functions {
        for &d in bf.velocity.indices.iter() {
            row_ptr[d + 1] += 1;
        }
    }
    for d in 0..n {
        row_ptr[d + 1] += row_ptr[d];
    }
    let mut fill = row_ptr.clone();
    let mut cols = vec![0usize; row_ptr[n]];
    let mut vals = vec![0.0; row_ptr[n]];
    for (i, bf) in basis.functions.iter().enumerate() {
        for (d, v) in bf.velocity.iter() {
            cols[fill[d]] = i;
            vals[fill[d]] = v;
            fill[d] += 1;
        }
    }

    let mut y = vec![0.0; n];
    let mut touched = Vec::new();
    let mut marked = vec![false; n];
    let mut row = vec![0.0; nb];
    let mut row_touched = Vec::new();
    let mut row_marked = vec![false; nb];
    let mut t = TripletMatrix::new(nb, nb);
    for (i, bf) in basis.functions.iter().enumerate() {
        for (d, v) in bf.velocity.iter() {
            for (r, a) in ops.a.column(d) {
                if !marked[r] {
                    marked[r] = true;
                    touched.push(r);
                }
                y[r] += a * v;
            }
        }
        for &r in &touched {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let c = cols[k];
                if c < i {
                    continue;
                }
                if !row_marked[c] {
                    row_marked[c] = true;
                    row_touched.push(c);
                }
                row[c] += vals[k] * y[r];
            }
        }
        row_touched.sort_unstable();
        for &c in &row_touched {
            t.push(i, c, row[c]);
            if c != i {
                t.push(c, i, row[c]);
            }
            row[c] = 0.0;
            row_marked[c] = false;
        }
        row_touched.clear();
        for &r in &touched {
            y[r] = 0.0;
            marked[r] = false;
        }
        touched.clear();
    }
    t.to_csc()
}

/// Assembles the coarse saddle system; the zero-mean pressure condition is
/// a scalar multiplier row.
pub fn assemble_coarse_system(hier: &MeshHierarchy, ops: &Operators, basis: &CorrectorBasis, fine_rhs: &[f64]) -> Result<CoarseSystem> {
    let n = ops.num_velocity_dofs();
    if fine_rhs.len() != n {
        return Err(Error::DimensionMismatch {
            what: "fine load vector",
            expected: n,
            found: fine_rhs.len(),
        });
    }
    if basis.coarse_level != ops.coarse_level || basis.fine_level != ops.fine_level {
        return Err(Error::InvalidLevels {
            coarse: basis.coarse_level,
            fine: basis.fine_level,
        });
    }
    let coarse = hier.mesh(ops.coarse_level)?;
    let nb = basis.len();
    let nk = coarse.num_triangles();
    let stiffness = galerkin_stiffness(ops, basis);
    let mut bt = TripletMatrix::new(nk, nb);
    for (i, bf) in basis.functions.iter().enumerate() {
        for (k, rho) in bf.divergence.iter() {
            bt.push(k, i, -coarse.area(k) * rho);
        }
    }
    let divergence = bt.to_csc();
    let rhs: Vec<f64> = basis.functions.iter().map(|bf| bf.velocity.dot(fine_rhs)).collect();

    let mut layout = BlockLayout::new();
    let u = layout.push("velocity", nb);
    let p = layout.push("pressure", nk);
    let mean = layout.push("mean", 1);
    let mut t = TripletMatrix::new(layout.total(), layout.total());
    t.push_block(u, u, &stiffness);
    t.push_block(p, u, &divergence);
    t.push_block_transposed(u, p, &divergence);
    for k in 0..nk {
        t.push(p + k, mean, coarse.area(k));
        t.push(mean, p + k, coarse.area(k));
    }
    let mut full_rhs = vec![0.0; layout.total()];
    full_rhs[..nb].copy_from_slice(&rhs);
    let system = SaddleSystem::new(layout, t.to_csc(), full_rhs)?;
    Ok(CoarseSystem {
        stiffness,
        divergence,
        rhs,
        system,
    })
}

/// Solves the multiscale method for the load vector `fine_rhs`.
pub fn solve_lod(hier: &MeshHierarchy, ops: &Operators, basis: &CorrectorBasis, fine_rhs: &[f64]) -> Result<LodSolution> {
    let coarse = assemble_coarse_system(hier, ops, basis, fine_rhs)?;
    let x = coarse.system.solve()?;
    let layout = &coarse.system.layout;
    let coefficients = x[layout.range("velocity")].to_vec();
    let coarse_pressure = x[layout.range("pressure")].to_vec();
    let velocity = basis.combine(&coefficients, ops.num_velocity_dofs());
    let mut solution = LodSolution {
        coefficients,
        velocity,
        coarse_pressure,
        postprocessed_pressure: Vec::new(),
    };
    solution.postprocessed_pressure = postprocess_pressure(hier, &solution, basis)?;
    Ok(solution)
}

/// Injected coarse pressure plus `sum_i c_i xi_i`.
pub fn postprocess_pressure(hier: &MeshHierarchy, sol: &LodSolution, basis: &CorrectorBasis) -> Result<Vec<f64>> {
    let mut p = cr::inject_p0(&sol.coarse_pressure, hier, basis.coarse_level, basis.fine_level)?;
    let fine = basis.combine_pressures(&sol.coefficients, p.len());
    p.iter_mut().zip(&fine).for_each(|(a, b)| *a += b);
    Ok(p)
}

/// Assembles the fine Stokes system with the pressure of fine triangle 0
/// pinned to zero; the pressure block holds triangles `1..`.
pub fn assemble_fine_system(hier: &MeshHierarchy, ops: &Operators, fine_rhs: &[f64]) -> Result<SaddleSystem> {
    let fine = hier.mesh(ops.fine_level)?;
    let n = ops.num_velocity_dofs();
    if fine_rhs.len() != n {
        return Err(Error::DimensionMismatch {
            what: "fine load vector",
            expected: n,
            found: fine_rhs.len(),
        });
    }
    let nt = fine.num_triangles();
    let mut layout = BlockLayout::new();
    let u = layout.push("velocity", n);
    let p = layout.push("pressure", nt - 1);
    let mut t = TripletMatrix::with_capacity(layout.total(), layout.total(), ops.a.nnz() + 2 * ops.b.nnz());
    t.push_block(u, u, &ops.a);
    for (row, col, v) in ops.b.iter() {
        if row > 0 {
            t.push(p + row - 1, u + col, v);
            t.push(u + col, p + row - 1, v);
        }
    }
    let mut rhs = vec![0.0; layout.total()];
    rhs[..n].copy_from_slice(fine_rhs);
    SaddleSystem::new(layout, t.to_csc(), rhs)
}

/// Fine-scale reference solution with zero-mean pressure.
pub fn solve_fine_reference(hier: &MeshHierarchy, ops: &Operators, fine_rhs: &[f64]) -> Result<FineSolution> {
    let mesh = hier.mesh(ops.fine_level)?;
    let system = assemble_fine_system(hier, ops, fine_rhs)?;
    let x = factorize(&system.matrix)?.solve(&system.rhs)?;
    let mut pressure = Vec::with_capacity(mesh.num_triangles());
    pressure.push(0.0);
    pressure.extend_from_slice(&x[system.layout.range("pressure")]);
    let mean = cr::p0_integral(mesh, &pressure) / mesh.areas().iter().sum::<f64>();
    pressure.iter_mut().for_each(|q| *q -= mean);
    Ok(FineSolution {
        velocity: x[system.layout.range("velocity")].to_vec(),
        pressure,
    })
}

/// Errors of a multiscale solution against the fine reference.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorRecord {
    /// Broken H1 seminorm of the velocity error.
    pub u_h1: f64,
    pub u_l2: f64,
    /// L2 error of the post-processed pressure.
    pub p_l2: f64,
    /// L2 error of the coarse pressure against the projected reference pressure.
    pub pih_p_l2: f64,
}

/// Computes the four error measures.
pub fn compute_errors(hier: &MeshHierarchy, coarse_level: u32, fine_level: u32, fine: &FineSolution, lod: &LodSolution) -> Result<ErrorRecord> {
    let mesh = hier.mesh(fine_level)?;
    let coarse = hier.mesh(coarse_level)?;
    let space = CrSpace::new(mesh);
    let checks = [
        ("velocity length", space.num_dofs(), fine.velocity.len()),
        ("velocity length", space.num_dofs(), lod.velocity.len()),
        ("pressure length", mesh.num_triangles(), fine.pressure.len()),
        ("pressure length", mesh.num_triangles(), lod.postprocessed_pressure.len()),
        ("coarse pressure length", coarse.num_triangles(), lod.coarse_pressure.len()),
    ];
    for (what, expected, found) in checks {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
    }
    let du: Vec<f64> = fine.velocity.iter().zip(&lod.velocity).map(|(a, b)| a - b).collect();
    let dp: Vec<f64> = fine.pressure.iter().zip(&lod.postprocessed_pressure).map(|(a, b)| a - b).collect();
    let projected = cr::l2_projection_coarse(&fine.pressure, hier, coarse_level, fine_level)?;
    let dph: Vec<f64> = projected.iter().zip(&lod.coarse_pressure).map(|(a, b)| a - b).collect();
    Ok(ErrorRecord {
        u_h1: space.h1_seminorm(&du),
        u_l2: space.l2_norm(&du),
        p_l2: cr::p0_l2_norm(mesh, &dp),
        pih_p_l2: cr::p0_l2_norm(coarse, &dph),
    })
}

/// Largest elementwise divergence magnitude of a fine CR velocity.
pub fn max_divergence(hier: &MeshHierarchy, fine_level: u32, velocity: &[f64]) -> Result<f64> {
    let space = CrSpace::new(hier.mesh(fine_level)?);
    Ok(space.elementwise_divergence(velocity).iter().map(|d| libm::fabs(*d)).fold(0.0, f64::max))
}
