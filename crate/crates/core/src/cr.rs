//! Crouzeix-Raviart velocities and piecewise constant pressures on a fine
//! mesh: operator assembly, interpolation, transfer between levels, norms.
//!
//! Velocity unknowns live at edge midpoints. In the Dirichlet space only
//! interior edges carry unknowns and unknown `(e, j)` has index
//! `2 * interior_index(e) + j`; the unconstrained space numbers all edges.

use alloc::vec;
use alloc::vec::Vec;

use crate::coeffs::PiecewiseConstantField;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshHierarchy};
use crate::sparse::{CscMatrix, TripletMatrix};

const NO_DOF: usize = usize::MAX;

/// Vector Crouzeix-Raviart space on a mesh.
#[derive(Clone, Debug)]
pub struct CrSpace<'m> {
    mesh: &'m Mesh,
    /// Gradients of the three scalar basis functions on each triangle.
    gradients: Vec<[[f64; 2]; 3]>,
    /// First unknown of each edge, `NO_DOF` on constrained edges.
    edge_dof: Vec<usize>,
    dof_edges: Vec<usize>,
}

/// Gradients of the scalar CR basis functions `1 - 2 lambda_i` of the
/// triangle with vertices `p`.
pub fn local_gradients(p: [[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let twice_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    core::array::from_fn(|i| {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        [-2.0 * (a[1] - b[1]) / twice_area, -2.0 * (b[0] - a[0]) / twice_area]
    })
}

/// Element stiffness `int_T grad phi_i . grad phi_k` of the scalar basis.
pub fn local_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let g = local_gradients(p);
    let area = 0.5 * libm::fabs((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    core::array::from_fn(|i| core::array::from_fn(|k| area * (g[i][0] * g[k][0] + g[i][1] * g[k][1])))
}

impl<'m> CrSpace<'m> {
    /// Space with homogeneous Dirichlet conditions: boundary edges carry no unknown.
    pub fn new(mesh: &'m Mesh) -> Self {
        Self::with_edges(mesh, mesh.interior_edges().to_vec())
    }

    /// Space with an unknown on every edge, boundary included.
    pub fn unconstrained(mesh: &'m Mesh) -> Self {
        Self::with_edges(mesh, (0..mesh.num_edges()).collect())
    }

    fn with_edges(mesh: &'m Mesh, dof_edges: Vec<usize>) -> Self {
        let gradients = mesh
            .triangles()
            .iter()
            .map(|tri| local_gradients(tri.map(|v| mesh.vertices()[v])))
            .collect();
        let mut edge_dof = vec![NO_DOF; mesh.num_edges()];
        for (i, &e) in dof_edges.iter().enumerate() {
            edge_dof[e] = 2 * i;
        }
        CrSpace {
            mesh,
            gradients,
            edge_dof,
            dof_edges,
        }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.dof_edges.len()
    }

    /// Unknown of component `j` at edge `e`, or `None` on a constrained edge.
    #[inline]
    pub fn dof(&self, e: usize, j: usize) -> Option<usize> {
        let d = self.edge_dof[e];
        (d != NO_DOF).then(|| d + j)
    }

    /// The edge carrying unknown `dof`.
    pub fn dof_edge(&self, dof: usize) -> usize {
        self.dof_edges[dof / 2]
    }

    pub fn gradients(&self, t: usize) -> [[f64; 2]; 3] {
        self.gradients[t]
    }

    /// Interpolant taking the value of `f` at the midpoint of every edge with unknowns.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut v = vec![0.0; self.num_dofs()];
        for (i, &e) in self.dof_edges.iter().enumerate() {
            let value = f(self.mesh.edges()[e].midpoint);
            v[2 * i] = value[0];
            v[2 * i + 1] = value[1];
        }
        v
    }

    /// First unknown of each local edge of triangle `t`.
    fn local_dofs(&self, t: usize) -> [Option<usize>; 3] {
        self.mesh.triangle_edges(t).map(|e| self.dof(e, 0))
    }

    fn check_field(&self, field: &PiecewiseConstantField, what: &'static str) -> Result<()> {
        if field.len() != self.mesh.num_triangles() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.mesh.num_triangles(),
                found: field.len(),
            });
        }
        Ok(())
    }

    /// Gradients of `v` on triangle `t`, rows indexed by component.
    pub fn element_gradient(&self, v: &[f64], t: usize) -> [[f64; 2]; 2] {
        let g = self.gradients[t];
        let mut out = [[0.0; 2]; 2];
        for (i, dof) in self.local_dofs(t).into_iter().enumerate() {
            if let Some(d) = dof {
                for (j, row) in out.iter_mut().enumerate() {
                    row[0] += v[d + j] * g[i][0];
                    row[1] += v[d + j] * g[i][1];
                }
            }
        }
        out
    }

    /// Divergence of `v` on each triangle.
    pub fn elementwise_divergence(&self, v: &[f64]) -> Vec<f64> {
        (0..self.mesh.num_triangles())
            .map(|t| {
                let g = self.element_gradient(v, t);
                g[0][0] + g[1][1]
            })
            .collect()
    }

    /// `sum_K |K| |grad v|^2` restricted to the triangles selected by `keep`.
    pub fn broken_energy_on(&self, v: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
        (0..self.mesh.num_triangles())
            .filter(|&t| keep(t))
            .map(|t| {
                let g = self.element_gradient(v, t);
                self.mesh.area(t) * (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1])
            })
            .fold(0.0, |a, b| a + b)
    }

    /// Broken H1 seminorm `(sum_K ||grad v||_K^2)^(1/2)`.
    pub fn h1_seminorm(&self, v: &[f64]) -> f64 {
        libm::sqrt(self.broken_energy_on(v, |_| true))
    }

    /// L2 norm; exact since the scalar basis is L2-orthogonal on each triangle
    /// with `int_T phi_i^2 = |T| / 3`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        let mut sum = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let w = self.mesh.area(t) / 3.0;
            for d in self.local_dofs(t).into_iter().flatten() {
                sum += w * (v[d] * v[d] + v[d + 1] * v[d + 1]);
            }
        }
        libm::sqrt(sum)
    }
}

/// `a(u, v) = (nu grad u, grad v) + (sigma u, v)` on the CR space.
pub fn assemble_velocity_form(space: &CrSpace, nu: &PiecewiseConstantField, sigma: &PiecewiseConstantField) -> Result<CscMatrix> {
    space.check_field(nu, "viscosity length")?;
    space.check_field(sigma, "reaction length")?;
    nu.check_positive()?;
    sigma.check_nonnegative()?;
    let mesh = space.mesh;
    let mut a = TripletMatrix::with_capacity(space.num_dofs(), space.num_dofs(), 18 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let g = space.gradients[t];
        let area = mesh.area(t);
        let nu_t = nu.values()[t];
        let mass = sigma.values()[t] * area / 3.0;
        let dofs = space.local_dofs(t);
        for (i, di) in dofs.iter().enumerate() {
            let Some(di) = *di else { continue };
            for (k, dk) in dofs.iter().enumerate() {
                let Some(dk) = *dk else { continue };
                let mut value = nu_t * area * (g[i][0] * g[k][0] + g[i][1] * g[k][1]);
                if i == k {
                    value += mass;
                }
                a.push(di, dk, value);
                a.push(di + 1, dk + 1, value);
            }
        }
    }
    Ok(a.to_csc())
}

/// Unit-coefficient stiffness matrix `(grad u, grad v)`.
pub fn assemble_stiffness(space: &CrSpace) -> CscMatrix {
    let n = space.mesh.num_triangles();
    let one = PiecewiseConstantField::new(space.mesh.level(), vec![1.0; n]);
    let zero = PiecewiseConstantField::new(space.mesh.level(), vec![0.0; n]);
    assemble_velocity_form(space, &one, &zero).expect("unit coefficients are admissible")
}

/// Diagonal CR mass matrix `(u, v)`.
pub fn assemble_mass(space: &CrSpace) -> CscMatrix {
    let mut m = TripletMatrix::with_capacity(space.num_dofs(), space.num_dofs(), 6 * space.mesh.num_triangles());
    for t in 0..space.mesh.num_triangles() {
        let w = space.mesh.area(t) / 3.0;
        for d in space.local_dofs(t).into_iter().flatten() {
            m.push(d, d, w);
            m.push(d + 1, d + 1, w);
        }
    }
    m.to_csc()
}

/// `B[t, (e, j)] = -int_t d_j phi_e`; rows are fine triangles.
pub fn assemble_divergence(space: &CrSpace) -> CscMatrix {
    let mesh = space.mesh;
    let mut b = TripletMatrix::with_capacity(mesh.num_triangles(), space.num_dofs(), 6 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let g = space.gradients[t];
        let area = mesh.area(t);
        for (i, d) in space.local_dofs(t).into_iter().enumerate() {
            if let Some(d) = d {
                b.push(t, d, -area * g[i][0]);
                b.push(t, d + 1, -area * g[i][1]);
            }
        }
    }
    b.to_csc()
}

/// `M[K, t] = |t|` for fine triangles `t` inside coarse triangle `K`.
pub fn assemble_coarse_average(hier: &MeshHierarchy, coarse_level: u32, fine_level: u32) -> Result<CscMatrix> {
    if coarse_level > fine_level {
        return Err(Error::InvalidLevels {
            coarse: coarse_level,
            fine: fine_level,
        });
    }
    let coarse = hier.mesh(coarse_level)?;
    let fine = hier.mesh(fine_level)?;
    let mut m = TripletMatrix::with_capacity(coarse.num_triangles(), fine.num_triangles(), fine.num_triangles());
    for t in 0..fine.num_triangles() {
        m.push(hier.ancestor(fine_level, t, coarse_level), t, fine.area(t));
    }
    Ok(m.to_csc())
}

/// Face integrals `int_F v . e_j` for every coarse interior face `F`; row
/// `(F, j)` has index `2 * interior_index(F) + j`.
pub fn assemble_face_averages(space: &CrSpace, hier: &MeshHierarchy, coarse_level: u32) -> Result<CscMatrix> {
    let fine_level = space.mesh.level();
    let coarse = hier.mesh(coarse_level)?;
    let rows = 2 * coarse.interior_edges().len();
    let per_face = 1usize << fine_level.saturating_sub(coarse_level);
    let mut c = TripletMatrix::with_capacity(rows, space.num_dofs(), 2 * per_face * coarse.interior_edges().len());
    for (i, &f) in coarse.interior_edges().iter().enumerate() {
        for e in hier.fine_edges_on(coarse_level, f, fine_level)? {
            let d = space.dof(e, 0).ok_or(Error::BoundaryFace { face: f })?;
            let len = space.mesh.edges()[e].length;
            c.push(2 * i, d, len);
            c.push(2 * i + 1, d + 1, len);
        }
    }
    Ok(c.to_csc())
}

/// Load vector `(f, phi_(e,j))` by the edge-midpoint rule on each triangle.
pub fn assemble_rhs(space: &CrSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let mesh = space.mesh;
    let mut rhs = vec![0.0; space.num_dofs()];
    for t in 0..mesh.num_triangles() {
        let w = mesh.area(t) / 3.0;
        for (e, d) in mesh.triangle_edges(t).into_iter().zip(space.local_dofs(t)) {
            if let Some(d) = d {
                let value = f(mesh.edges()[e].midpoint);
                rhs[d] += w * value[0];
                rhs[d + 1] += w * value[1];
            }
        }
    }
    rhs
}

fn check_p0(mesh: &Mesh, q: &[f64], what: &'static str) -> Result<()> {
    if q.len() != mesh.num_triangles() {
        return Err(Error::DimensionMismatch {
            what,
            expected: mesh.num_triangles(),
            found: q.len(),
        });
    }
    Ok(())
}

/// L2-orthogonal projection of a fine piecewise constant onto coarse piecewise constants.
pub fn l2_projection_coarse(q: &[f64], hier: &MeshHierarchy, coarse_level: u32, fine_level: u32) -> Result<Vec<f64>> {
    if coarse_level > fine_level {
        return Err(Error::InvalidLevels {
            coarse: coarse_level,
            fine: fine_level,
        });
    }
    let fine = hier.mesh(fine_level)?;
    let coarse = hier.mesh(coarse_level)?;
    check_p0(fine, q, "fine P0 length")?;
    let mut out = vec![0.0; coarse.num_triangles()];
    for (t, &v) in q.iter().enumerate() {
        out[hier.ancestor(fine_level, t, coarse_level)] += fine.area(t) * v;
    }
    for (k, o) in out.iter_mut().enumerate() {
        *o /= coarse.area(k);
    }
    Ok(out)
}

/// Copies coarse piecewise constant values onto the fine triangles.
pub fn inject_p0(q: &[f64], hier: &MeshHierarchy, coarse_level: u32, fine_level: u32) -> Result<Vec<f64>> {
    if coarse_level > fine_level {
        return Err(Error::InvalidLevels {
            coarse: coarse_level,
            fine: fine_level,
        });
    }
    check_p0(hier.mesh(coarse_level)?, q, "coarse P0 length")?;
    let fine = hier.mesh(fine_level)?;
    Ok((0..fine.num_triangles()).map(|t| q[hier.ancestor(fine_level, t, coarse_level)]).collect())
}

/// L2 norm of a piecewise constant function.
pub fn p0_l2_norm(mesh: &Mesh, q: &[f64]) -> f64 {
    libm::sqrt(q.iter().zip(mesh.areas()).map(|(v, a)| a * v * v).sum())
}

/// `sum_K |K| q_K`.
pub fn p0_integral(mesh: &Mesh, q: &[f64]) -> f64 {
    q.iter().zip(mesh.areas()).map(|(v, a)| a * v).sum()
}

/// Energy and L2 evaluators built from the unit stiffness and the mass matrix.
#[derive(Clone, Debug)]
pub struct Norms {
    pub stiffness: CscMatrix,
    pub mass: CscMatrix,
}

impl Norms {
    pub fn new(space: &CrSpace) -> Self {
        Norms {
            stiffness: assemble_stiffness(space),
            mass: assemble_mass(space),
        }
    }

    pub fn h1_seminorm(&self, v: &[f64]) -> f64 {
        libm::sqrt(self.stiffness.bilinear(v, v).max(0.0))
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        libm::sqrt(self.mass.bilinear(v, v).max(0.0))
    }
}
