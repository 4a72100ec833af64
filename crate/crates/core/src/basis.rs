//! Patch-local saddle-point problems for the multiscale velocity basis, the
//! operator `R^l` built from it, and decay and localization measurements.
//!
//! For a coarse interior face `F`, component `j` and order `l`, the basis
//! function solves on the patch `N^l(F)`
//!
//! ```text
//! [ A   B^T  C^T  0   ] [ phi    ]   [ 0        ]
//! [ B   0    0    M^T ] [ xi     ] = [ 0        ]
//! [ C   0    0    0   ] [ lambda ]   [ e_(F,j)  ]
//! [ 0   M    0    0   ] [ rho    ]   [ 0        ]
//! ```
//!
//! with velocity unknowns on the fine edges interior to the patch, one
//! pressure `xi` per fine patch triangle, one multiplier per coarse face
//! inside the patch and component, and one multiplier `rho` per coarse
//! patch triangle. The second row makes the divergence of `phi` equal to
//! `rho_K` on every fine triangle of `K`, the fourth gives `xi` zero coarse
//! averages. The system is nonsingular for every patch, including the
//! whole domain: `rho` absorbs the constant pressure mode.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::coeffs::PiecewiseConstantField;
use crate::cr::{self, CrSpace};
use crate::error::{Error, Result};
use crate::mesh::{vertex_neighborhood, face_neighborhood, MeshHierarchy, Patch};
use crate::sparse::{factorize, BlockLayout, CscMatrix, Factorization, SaddleSystem, TripletMatrix};

/// Patch order that always covers the whole domain.
pub const GLOBAL_ORDER: usize = usize::MAX;

/// Sparse vector with sorted indices. Functions from one patch share
/// their index arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    pub indices: Arc<[usize]>,
    pub values: Vec<f64>,
}

impl Default for SparseVector {
    fn default() -> Self {
        SparseVector {
            indices: Arc::from(Vec::new()),
            values: Vec::new(),
        }
    }
}

impl SparseVector {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> f64 {
        self.indices.binary_search(&index).map_or(0.0, |k| self.values[k])
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.add_to(&mut out, 1.0);
        out
    }

    /// `out += alpha * self`.
    pub fn add_to(&self, out: &mut [f64], alpha: f64) {
        for (i, v) in self.iter() {
            out[i] += alpha * v;
        }
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }
}

/// Global fine-scale operators shared by all patch problems.
#[derive(Clone, Debug)]
pub struct Operators {
    pub coarse_level: u32,
    pub fine_level: u32,
    /// Velocity form, CR unknowns squared.
    pub a: CscMatrix,
    /// Divergence, fine triangles by CR unknowns.
    pub b: CscMatrix,
    /// Face integrals, `2 * (coarse interior faces)` by CR unknowns.
    pub c: CscMatrix,
    /// Coarse averages, coarse triangles by fine triangles.
    pub m: CscMatrix,
}

impl Operators {
    /// Assembles all operators with viscosity `nu` and reaction `sigma`
    /// given on the fine mesh.
    pub fn assemble(hier: &MeshHierarchy, coarse_level: u32, fine_level: u32, nu: &PiecewiseConstantField, sigma: &PiecewiseConstantField) -> Result<Self> {
        if coarse_level > fine_level {
            return Err(Error::InvalidLevels {
                coarse: coarse_level,
                fine: fine_level,
            });
        }
        let fine = hier.mesh(fine_level)?;
        let space = CrSpace::new(fine);
        Ok(Operators {
            coarse_level,
            fine_level,
            a: cr::assemble_velocity_form(&space, nu, sigma)?,
            b: cr::assemble_divergence(&space),
            c: cr::assemble_face_averages(&space, hier, coarse_level)?,
            m: cr::assemble_coarse_average(hier, coarse_level, fine_level)?,
        })
    }

    pub fn num_velocity_dofs(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_basis_functions(&self) -> usize {
        self.c.nrows()
    }
}

/// One basis function with the multipliers of its patch problem, all in
/// global numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisFunction {
    pub face: usize,
    pub component: usize,
    pub order: usize,
    /// CR velocity, indexed by global CR unknown.
    pub velocity: SparseVector,
    /// Fine piecewise constant pressure, indexed by fine triangle.
    pub pressure: SparseVector,
    /// Face multipliers, indexed by face-integral row `2 * interior_index(E) + k`.
    pub multipliers: SparseVector,
    /// Divergence per coarse patch triangle, indexed by coarse triangle.
    pub divergence: SparseVector,
}

impl BasisFunction {
    /// Face-integral row of this function.
    pub fn row(&self, hier: &MeshHierarchy, coarse_level: u32) -> Result<usize> {
        let coarse = hier.mesh(coarse_level)?;
        coarse
            .interior_index(self.face)
            .map(|i| 2 * i + self.component)
            .ok_or(Error::BoundaryFace { face: self.face })
    }

    /// `a(phi, phi)` recovered from the face multiplier.
    pub fn energy_from_multiplier(&self, row: usize) -> f64 {
        -self.multipliers.get(row)
    }
}

/// Levels `coarse = l_0 < l_1 < ... < l_m` on which the divergence
/// multiplier is represented. Consecutive levels are at most
/// [`LINK_STEP`] apart and the finest is at most `LINK_STEP` above `fine`,
/// so every constraint row touches at most `4^LINK_STEP` fine triangles.
pub fn link_levels(coarse_level: u32, fine_level: u32) -> Vec<u32> {
    let mut levels = Vec::new();
    let mut l = fine_level.saturating_sub(LINK_STEP).max(coarse_level);
    while l > coarse_level {
        levels.push(l);
        l = l.saturating_sub(LINK_STEP).max(coarse_level);
    }
    levels.push(coarse_level);
    levels.reverse();
    levels
}

/// Level distance between linked copies of the divergence multiplier.
pub const LINK_STEP: u32 = 2;

/// Global unknown indices of a patch problem.
#[derive(Clone, Debug)]
pub struct PatchIndices {
    pub fine_level: u32,
    pub velocity: Arc<[usize]>,
    pub pressure: Arc<[usize]>,
    pub faces: Arc<[usize]>,
    pub coarse: Arc<[usize]>,
    /// Link levels and the patch triangles on each, coarsest first.
    pub links: Vec<(u32, Vec<usize>)>,
}

impl PatchIndices {
    pub fn new(hier: &MeshHierarchy, patch: &Patch) -> Result<Self> {
        let fine = hier.mesh(patch.fine_level)?;
        let coarse = hier.mesh(patch.coarse_level)?;
        let mut velocity = Vec::with_capacity(2 * patch.fine_edges.len());
        for &e in &patch.fine_edges {
            let i = fine.interior_index(e).ok_or(Error::Backend("patch edge on boundary"))?;
            velocity.extend([2 * i, 2 * i + 1]);
        }
        let mut faces = Vec::with_capacity(2 * patch.coarse_faces.len());
        for &f in &patch.coarse_faces {
            let i = coarse.interior_index(f).ok_or(Error::BoundaryFace { face: f })?;
            faces.extend([2 * i, 2 * i + 1]);
        }
        let links = link_levels(patch.coarse_level, patch.fine_level)
            .into_iter()
            .map(|l| {
                let tris = patch
                    .coarse_triangles
                    .iter()
                    .flat_map(|&k| hier.descendants(patch.coarse_level, k, l))
                    .collect();
                (l, tris)
            })
            .collect();
        Ok(PatchIndices {
            fine_level: patch.fine_level,
            velocity: velocity.into(),
            pressure: patch.fine_triangles.as_slice().into(),
            faces: faces.into(),
            coarse: patch.coarse_triangles.as_slice().into(),
            links,
        })
    }
}

/// Assembles the patch saddle matrix; the right-hand side is zero and is
/// set per face and component by [`unit_rhs`].
///
/// The coarse averaging rows `M xi = 0` and columns `M^T rho` are not
/// assembled directly: `rho` is copied to every link level through equality
/// constraints and only the finest copy couples to `xi`. Eliminating the
/// copies recovers the four-block system, while every row stays short.
pub fn assemble_basis_saddle(hier: &MeshHierarchy, ops: &Operators, indices: &PatchIndices) -> Result<SaddleSystem> {
    if indices.faces.is_empty() {
        return Err(Error::EmptyPatch {
            face: usize::MAX,
            order: 0,
        });
    }
    let fine = hier.mesh(indices.fine_level)?;
    let a = ops.a.submatrix(&indices.velocity, &indices.velocity);
    let b = ops.b.submatrix(&indices.pressure, &indices.velocity);
    let c = ops.c.submatrix(&indices.faces, &indices.velocity);

    let mut layout = BlockLayout::new();
    let u = layout.push("velocity", indices.velocity.len());
    let p = layout.push("pressure", indices.pressure.len());
    let l = layout.push("multipliers", indices.faces.len());
    let r = layout.push("divergence", indices.links.iter().map(|(_, t)| t.len()).sum());
    let k = layout.push("links", indices.links[1..].iter().map(|(_, t)| t.len()).sum());
    let n = layout.total();

    let mut t = TripletMatrix::with_capacity(n, n, a.nnz() + 2 * (b.nnz() + c.nnz()) + 2 * indices.pressure.len() + 4 * (n - k));
    t.push_block(u, u, &a);
    t.push_block(p, u, &b);
    t.push_block_transposed(u, p, &b);
    t.push_block(l, u, &c);
    t.push_block_transposed(u, l, &c);

    let mut rho_offset = r;
    let mut link_offset = k;
    for w in 0..indices.links.len() {
        let (level, tris) = &indices.links[w];
        if w > 0 {
            let (parent_level, parents) = &indices.links[w - 1];
            let parent_offset = rho_offset - parents.len();
            for (i, &tri) in tris.iter().enumerate() {
                let parent = hier.ancestor(*level, tri, *parent_level);
                let pi = parents.binary_search(&parent).map_err(|_| Error::Backend("link parent outside patch"))?;
                t.push(link_offset + i, rho_offset + i, 1.0);
                t.push(rho_offset + i, link_offset + i, 1.0);
                t.push(link_offset + i, parent_offset + pi, -1.0);
                t.push(parent_offset + pi, link_offset + i, -1.0);
            }
            link_offset += tris.len();
        }
        if w + 1 == indices.links.len() {
            for (j, &ft) in indices.pressure.iter().enumerate() {
                let owner = hier.ancestor(indices.fine_level, ft, *level);
                let oi = tris.binary_search(&owner).map_err(|_| Error::Backend("fine triangle outside patch"))?;
                t.push(rho_offset + oi, p + j, fine.area(ft));
                t.push(p + j, rho_offset + oi, fine.area(ft));
            }
        }
        rho_offset += tris.len();
    }
    SaddleSystem::new(layout, t.to_csc(), vec![0.0; n])
}

/// Right-hand side selecting the face-integral row `row` of the patch.
pub fn unit_rhs(system: &SaddleSystem, indices: &PatchIndices, row: usize) -> Option<Vec<f64>> {
    let local = indices.faces.binary_search(&row).ok()?;
    let mut rhs = vec![0.0; system.layout.total()];
    rhs[system.layout.range("multipliers").start + local] = 1.0;
    Some(rhs)
}

fn scatter(global: &Arc<[usize]>, local: &[f64]) -> SparseVector {
    SparseVector {
        indices: global.clone(),
        values: local.to_vec(),
    }
}

/// Splits a patch solution into a basis function in global numbering.
pub fn extract_basis_function(system: &SaddleSystem, indices: &PatchIndices, x: &[f64], face: usize, component: usize, order: usize) -> BasisFunction {
    let l = &system.layout;
    BasisFunction {
        face,
        component,
        order,
        velocity: scatter(&indices.velocity, &x[l.range("velocity")]),
        pressure: scatter(&indices.pressure, &x[l.range("pressure")]),
        multipliers: scatter(&indices.faces, &x[l.range("multipliers")]),
        divergence: scatter(&indices.coarse, &x[l.range("divergence")][..indices.coarse.len()]),
    }
}

/// Faces whose patches of a given order cover the same coarse triangles,
/// so that one factorization serves all of them.
#[derive(Clone, Debug)]
pub struct PatchGroup {
    pub order: usize,
    pub patch: Patch,
    pub faces: Vec<usize>,
}

/// Groups all coarse interior faces by patch, ordered by their first face.
pub fn patch_groups(hier: &MeshHierarchy, coarse_level: u32, fine_level: u32, order: usize) -> Result<Vec<PatchGroup>> {
    if order == 0 {
        return Err(Error::ZeroPatchOrder);
    }
    let coarse = hier.mesh(coarse_level)?;
    let mut by_patch: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut groups: Vec<PatchGroup> = Vec::new();
    for &f in coarse.interior_edges() {
        let omega = face_neighborhood(coarse, f)?;
        let key = vertex_neighborhood(coarse, &omega, order);
        match by_patch.get(&key) {
            Some(&g) => groups[g].faces.push(f),
            None => {
                by_patch.insert(key, groups.len());
                groups.push(PatchGroup {
                    order,
                    patch: Patch::build(hier, coarse_level, fine_level, f, order)?,
                    faces: vec![f],
                });
            }
        }
    }
    Ok(groups)
}

fn basis_error(face: usize, component: usize, order: usize, source: Error) -> Error {
    Error::BasisSolve {
        face,
        component,
        order,
        source: Box::new(source),
    }
}

/// A factorized patch problem.
pub struct PatchSolver {
    pub indices: PatchIndices,
    pub system: SaddleSystem,
    pub factorization: Factorization,
}

impl PatchSolver {
    pub fn new(hier: &MeshHierarchy, ops: &Operators, patch: &Patch) -> Result<Self> {
        let indices = PatchIndices::new(hier, patch)?;
        let system = assemble_basis_saddle(hier, ops, &indices).map_err(|e| match e {
            Error::EmptyPatch { .. } => Error::EmptyPatch {
                face: patch.face,
                order: patch.order,
            },
            e => e,
        })?;
        let factorization = factorize(&system.matrix)?;
        Ok(PatchSolver {
            indices,
            system,
            factorization,
        })
    }

    /// Solves for both components of every face in `faces`, a bounded
    /// number of right-hand sides at a time.
    pub fn solve_faces(&self, hier: &MeshHierarchy, coarse_level: u32, faces: &[usize], order: usize) -> Result<Vec<BasisFunction>> {
        let coarse = hier.mesh(coarse_level)?;
        let mut out = Vec::with_capacity(2 * faces.len());
        for chunk in faces.chunks(FACES_PER_SOLVE) {
            let mut rhs = Vec::with_capacity(2 * chunk.len());
            let mut labels = Vec::with_capacity(2 * chunk.len());
            for &f in chunk {
                let i = coarse.interior_index(f).ok_or(Error::BoundaryFace { face: f })?;
                for j in 0..2 {
                    let b = unit_rhs(&self.system, &self.indices, 2 * i + j).ok_or(Error::EmptyPatch { face: f, order })?;
                    rhs.push(b);
                    labels.push((f, j));
                }
            }
            let refs: Vec<&[f64]> = rhs.iter().map(Vec::as_slice).collect();
            let solutions = self.factorization.solve_many(&refs).map_err(|e| {
                let (f, j) = labels[0];
                basis_error(f, j, order, e)
            })?;
            out.extend(
                solutions
                    .iter()
                    .zip(labels)
                    .map(|(x, (f, j))| extract_basis_function(&self.system, &self.indices, x, f, j, order)),
            );
        }
        Ok(out)
    }
}

/// Faces solved together against one factorization.
const FACES_PER_SOLVE: usize = 16;

/// Computes all basis functions of one patch group.
pub fn solve_group(hier: &MeshHierarchy, ops: &Operators, group: &PatchGroup) -> Result<Vec<BasisFunction>> {
    let solver = PatchSolver::new(hier, ops, &group.patch).map_err(|e| basis_error(group.faces[0], 0, group.order, e))?;
    solver.solve_faces(hier, ops.coarse_level, &group.faces, group.order)
}

/// Solves the basis problem of one face and component.
pub fn solve_basis(hier: &MeshHierarchy, ops: &Operators, face: usize, component: usize, order: usize) -> Result<BasisFunction> {
    let patch = Patch::build(hier, ops.coarse_level, ops.fine_level, face, order)?;
    let solver = PatchSolver::new(hier, ops, &patch).map_err(|e| basis_error(face, component, order, e))?;
    let mut out = solver.solve_faces(hier, ops.coarse_level, &[face], order)?;
    Ok(out.swap_remove(component))
}

/// All basis functions of one order, ordered by face-integral row.
#[derive(Clone, Debug)]
pub struct CorrectorBasis {
    pub coarse_level: u32,
    pub fine_level: u32,
    pub order: usize,
    pub functions: Vec<BasisFunction>,
}

impl CorrectorBasis {
    /// Orders functions of all groups by (face, component) row.
    pub fn from_groups(hier: &MeshHierarchy, ops: &Operators, order: usize, groups: Vec<Vec<BasisFunction>>) -> Result<Self> {
        let coarse = hier.mesh(ops.coarse_level)?;
        let expected = 2 * coarse.interior_edges().len();
        let mut slots: Vec<Option<BasisFunction>> = vec![None; expected];
        for bf in groups.into_iter().flatten() {
            let row = bf.row(hier, ops.coarse_level)?;
            slots[row] = Some(bf);
        }
        let functions: Vec<BasisFunction> = slots.into_iter().flatten().collect();
        if functions.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "basis function count",
                expected,
                found: functions.len(),
            });
        }
        Ok(CorrectorBasis {
            coarse_level: ops.coarse_level,
            fine_level: ops.fine_level,
            order,
            functions,
        })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// `R^l v = sum_(F,j) (int_F v . e_j) phi_(F,j)`.
    pub fn apply(&self, ops: &Operators, v: &[f64]) -> Vec<f64> {
        let weights = ops.c.mul_vec(v);
        self.combine(&weights, ops.num_velocity_dofs())
    }

    /// `sum_i w_i phi_i` as a dense CR vector.
    pub fn combine(&self, weights: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (bf, &w) in self.functions.iter().zip(weights) {
            if w != 0.0 {
                bf.velocity.add_to(&mut out, w);
            }
        }
        out
    }

    /// `sum_i w_i xi_i` as a dense fine P0 vector.
    pub fn combine_pressures(&self, weights: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (bf, &w) in self.functions.iter().zip(weights) {
            if w != 0.0 {
                bf.pressure.add_to(&mut out, w);
            }
        }
        out
    }
}

/// Computes every basis function of order `order`, one factorization per
/// distinct patch.
pub fn compute_basis(hier: &MeshHierarchy, ops: &Operators, order: usize) -> Result<CorrectorBasis> {
    let groups = patch_groups(hier, ops.coarse_level, ops.fine_level, order)?;
    let solved = groups.iter().map(|g| solve_group(hier, ops, g)).collect::<Result<Vec<_>>>()?;
    CorrectorBasis::from_groups(hier, ops, order, solved)
}

/// Broken H1 seminorm of `phi` on the fine triangles outside `N^k(F)`,
/// where `N^0(F)` is the pair of coarse triangles sharing `F`.
pub fn measure_decay(hier: &MeshHierarchy, coarse_level: u32, fine_level: u32, bf: &BasisFunction, k: usize) -> Result<f64> {
    let coarse = hier.mesh(coarse_level)?;
    let fine = hier.mesh(fine_level)?;
    let omega = face_neighborhood(coarse, bf.face)?;
    let mut is_inside = vec![false; coarse.num_triangles()];
    for t in vertex_neighborhood(coarse, &omega, k) {
        is_inside[t] = true;
    }
    let space = CrSpace::new(fine);
    let v = bf.velocity.to_dense(space.num_dofs());
    let energy = space.broken_energy_on(&v, |t| !is_inside[hier.ancestor(fine_level, t, coarse_level)]);
    Ok(libm::sqrt(energy))
}

/// Decay profile `k = 0, 1, ...` until `N^k(F)` covers the domain, where
/// the value is zero.
pub fn decay_profile(hier: &MeshHierarchy, coarse_level: u32, fine_level: u32, bf: &BasisFunction) -> Result<Vec<f64>> {
    let coarse = hier.mesh(coarse_level)?;
    let fine = hier.mesh(fine_level)?;
    let space = CrSpace::new(fine);
    let v = bf.velocity.to_dense(space.num_dofs());
    let omega = face_neighborhood(coarse, bf.face)?;
    let mut out = Vec::new();
    for k in 0.. {
        let inside = vertex_neighborhood(coarse, &omega, k);
        let full = inside.len() == coarse.num_triangles();
        let mut is_inside = vec![false; coarse.num_triangles()];
        for t in inside {
            is_inside[t] = true;
        }
        let energy = space.broken_energy_on(&v, |t| !is_inside[hier.ancestor(fine_level, t, coarse_level)]);
        out.push(libm::sqrt(energy));
        if full {
            break;
        }
    }
    Ok(out)
}

/// Measured residuals of the defining properties of one basis function.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConstraintReport {
    /// Largest `|int_E phi . e_k - delta|` over all coarse interior faces.
    pub face_integral: f64,
    /// Largest spread of the fine divergence within one coarse triangle,
    /// relative to the largest fine divergence magnitude (or 1).
    pub divergence_spread: f64,
    /// Largest `|rho_K - div phi|` relative as above.
    pub divergence_multiplier: f64,
    /// Largest `|Pi_H xi|`.
    pub pressure_average: f64,
    /// `|a(phi, phi) + lambda_(F,j)| / a(phi, phi)`.
    pub energy_identity: f64,
    /// Velocity unknowns outside the patch with nonzero value.
    pub support_violations: usize,
}

impl ConstraintReport {
    /// Componentwise maximum.
    pub fn merge(self, other: ConstraintReport) -> ConstraintReport {
        ConstraintReport {
            face_integral: self.face_integral.max(other.face_integral),
            divergence_spread: self.divergence_spread.max(other.divergence_spread),
            divergence_multiplier: self.divergence_multiplier.max(other.divergence_multiplier),
            pressure_average: self.pressure_average.max(other.pressure_average),
            energy_identity: self.energy_identity.max(other.energy_identity),
            support_violations: self.support_violations + other.support_violations,
        }
    }
}

/// Checks face integrals, divergence structure, pressure averages, energy
/// identity and support of `bf` against the global operators.
pub fn check_basis_function(hier: &MeshHierarchy, ops: &Operators, bf: &BasisFunction) -> Result<ConstraintReport> {
    let row = bf.row(hier, ops.coarse_level)?;
    let fine = hier.mesh(ops.fine_level)?;
    let coarse = hier.mesh(ops.coarse_level)?;
    let v = bf.velocity.to_dense(ops.num_velocity_dofs());

    let integrals = ops.c.mul_vec(&v);
    let face_integral = integrals
        .iter()
        .enumerate()
        .map(|(r, x)| libm::fabs(x - if r == row { 1.0 } else { 0.0 }))
        .fold(0.0, f64::max);

    let space = CrSpace::new(fine);
    let div = space.elementwise_divergence(&v);
    let scale = div.iter().map(|d| libm::fabs(*d)).fold(0.0, f64::max).max(1.0);
    let mut lo = vec![f64::INFINITY; coarse.num_triangles()];
    let mut hi = vec![f64::NEG_INFINITY; coarse.num_triangles()];
    let mut divergence_multiplier: f64 = 0.0;
    for (t, &d) in div.iter().enumerate() {
        let k = hier.ancestor(ops.fine_level, t, ops.coarse_level);
        lo[k] = lo[k].min(d);
        hi[k] = hi[k].max(d);
        if bf.pressure.indices.binary_search(&t).is_ok() {
            divergence_multiplier = divergence_multiplier.max(libm::fabs(d - bf.divergence.get(k)) / scale);
        }
    }
    let divergence_spread = lo.iter().zip(&hi).map(|(l, h)| (h - l) / scale).fold(0.0, f64::max);

    let xi = bf.pressure.to_dense(fine.num_triangles());
    let averages = cr::l2_projection_coarse(&xi, hier, ops.coarse_level, ops.fine_level)?;
    let pressure_average = averages.iter().map(|a| libm::fabs(*a)).fold(0.0, f64::max);

    let energy = ops.a.bilinear(&v, &v);
    let energy_identity = libm::fabs(energy - bf.energy_from_multiplier(row)) / energy;

    let patch = Patch::build(hier, ops.coarse_level, ops.fine_level, bf.face, bf.order)?;
    let support_violations = bf
        .velocity
        .iter()
        .filter(|&(d, x)| x != 0.0 && patch.local_fine_edge(space.dof_edge(d)).is_none())
        .count();

    Ok(ConstraintReport {
        face_integral,
        divergence_spread,
        divergence_multiplier,
        pressure_average,
        energy_identity,
        support_violations,
    })
}

/// `max_(F,j) ||grad(phi_(F,j) - phi^l_(F,j))||` for each order in `orders`,
/// comparing against the whole-domain basis. The whole-domain system is
/// factorized once; localized functions are not retained.
pub fn localization_error(hier: &MeshHierarchy, ops: &Operators, orders: &[usize]) -> Result<Vec<f64>> {
    let coarse = hier.mesh(ops.coarse_level)?;
    let fine = hier.mesh(ops.fine_level)?;
    let space = CrSpace::new(fine);
    let n = space.num_dofs();
    let faces = coarse.interior_edges();
    let first = *faces.first().ok_or(Error::EmptyPatch { face: 0, order: 0 })?;
    let global_patch = Patch::build(hier, ops.coarse_level, ops.fine_level, first, GLOBAL_ORDER)?;
    let global = PatchSolver::new(hier, ops, &global_patch).map_err(|e| basis_error(first, 0, GLOBAL_ORDER, e))?;

    let reference: BTreeMap<(usize, usize), SparseVector> = global
        .solve_faces(hier, ops.coarse_level, faces, GLOBAL_ORDER)?
        .into_iter()
        .map(|bf| ((bf.face, bf.component), bf.velocity))
        .collect();

    let mut errors = vec![0.0f64; orders.len()];
    for (oi, &order) in orders.iter().enumerate() {
        for group in patch_groups(hier, ops.coarse_level, ops.fine_level, order)? {
            if group.patch.is_global(coarse) {
                continue;
            }
            for l in solve_group(hier, ops, &group)? {
                let mut diff = reference[&(l.face, l.component)].to_dense(n);
                l.velocity.add_to(&mut diff, -1.0);
                errors[oi] = errors[oi].max(space.h1_seminorm(&diff));
            }
        }
    }
    Ok(errors)
}
