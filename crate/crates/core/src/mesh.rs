//! Triangulations of the unit square obtained by uniform red refinement,
//! the entity maps between refinement levels, and vertex-neighborhood
//! patches around coarse faces.
//!
//! Every vertex of a level-`k` mesh sits on the dyadic grid `2^-k Z^2`, so
//! vertices are stored with integer grid coordinates next to their floating
//! point positions. Geometric questions between levels (which fine edges lie
//! on a coarse edge) are answered exactly on the integer grid.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Marker for the missing second neighbour of a boundary edge.
pub const NO_TRIANGLE: usize = usize::MAX;

/// Finest level accepted by [`MeshHierarchy::build`] unless a different limit
/// is passed to [`MeshHierarchy::build_with_limit`]. Level 10 holds about two
/// million triangles.
pub const DEFAULT_MAX_LEVEL: u32 = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Endpoint indices, sorted ascending.
    pub vertices: [usize; 2],
    /// Adjacent triangles; the second entry is [`NO_TRIANGLE`] on the boundary.
    pub triangles: [usize; 2],
    pub midpoint: [f64; 2],
    pub length: f64,
    pub boundary: bool,
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        !self.boundary
    }
}

/// A conforming triangulation of the unit square at a fixed refinement level.
///
/// Local edge `i` of a triangle is the edge opposite its local vertex `i`.
#[derive(Clone, Debug)]
pub struct Mesh {
    level: u32,
    grid: Vec<[u32; 2]>,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    triangle_edges: Vec<[usize; 3]>,
    triangle_edge_signs: Vec<[i8; 3]>,
    areas: Vec<f64>,
    vertex_triangle_ptr: Vec<usize>,
    vertex_triangles: Vec<usize>,
    interior_edges: Vec<usize>,
    interior_index: Vec<usize>,
    grid_lookup: Vec<usize>,
}

impl Mesh {
    /// The level-0 mesh: the unit square cut along the diagonal from (0,0) to (1,1).
    pub fn initial() -> Mesh {
        let grid = vec![[0, 0], [1, 0], [1, 1], [0, 1]];
        let triangles = vec![[0, 1, 2], [0, 2, 3]];
        Mesh::from_grid(0, grid, triangles).expect("initial mesh is valid")
    }

    /// Builds a mesh from integer grid coordinates (scale `2^level`) and
    /// counterclockwise vertex triples.
    pub fn from_grid(level: u32, grid: Vec<[u32; 2]>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        let scale = 1.0 / (1u64 << level) as f64;
        let vertices: Vec<[f64; 2]> = grid
            .iter()
            .map(|g| [g[0] as f64 * scale, g[1] as f64 * scale])
            .collect();

        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|v| vertices[v]);
            let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
            if !(area > 0.0) {
                return Err(Error::DegenerateTriangle { triangle: t, area });
            }
            areas.push(area);
        }

        // (min vertex, max vertex, triangle, local edge)
        let mut half_edges: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                half_edges.push((a.min(b), a.max(b), t, i));
            }
        }
        half_edges.sort_unstable();

        let mut edges = Vec::with_capacity(half_edges.len() / 2 + 1);
        let mut triangle_edges = vec![[0usize; 3]; triangles.len()];
        let mut triangle_edge_signs = vec![[0i8; 3]; triangles.len()];
        let mut k = 0;
        while k < half_edges.len() {
            let (a, b, _, _) = half_edges[k];
            let mut end = k + 1;
            while end < half_edges.len() && half_edges[end].0 == a && half_edges[end].1 == b {
                end += 1;
            }
            let count = end - k;
            if count > 2 {
                return Err(Error::NonConforming { a, b, count });
            }
            let index = edges.len();
            let mut adjacent = [NO_TRIANGLE; 2];
            for (slot, &(_, _, t, i)) in half_edges[k..end].iter().enumerate() {
                adjacent[slot] = t;
                triangle_edges[t][i] = index;
                triangle_edge_signs[t][i] = if triangles[t][(i + 1) % 3] == a { 1 } else { -1 };
            }
            let (pa, pb) = (vertices[a], vertices[b]);
            let dx = pb[0] - pa[0];
            let dy = pb[1] - pa[1];
            edges.push(Edge {
                vertices: [a, b],
                triangles: adjacent,
                midpoint: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                length: libm::sqrt(dx * dx + dy * dy),
                boundary: count == 1,
            });
            k = end;
        }

        let mut interior_edges = Vec::new();
        let mut interior_index = vec![usize::MAX; edges.len()];
        for (e, edge) in edges.iter().enumerate() {
            if edge.is_interior() {
                interior_index[e] = interior_edges.len();
                interior_edges.push(e);
            }
        }

        let mut vertex_triangle_ptr = vec![0usize; vertices.len() + 1];
        for tri in &triangles {
            for &v in tri {
                vertex_triangle_ptr[v + 1] += 1;
            }
        }
        for v in 0..vertices.len() {
            vertex_triangle_ptr[v + 1] += vertex_triangle_ptr[v];
        }
        let mut fill = vertex_triangle_ptr.clone();
        let mut vertex_triangles = vec![0usize; vertex_triangle_ptr[vertices.len()]];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_triangles[fill[v]] = t;
                fill[v] += 1;
            }
        }

        let side = (1usize << level) + 1;
        let mut grid_lookup = vec![usize::MAX; side * side];
        for (v, g) in grid.iter().enumerate() {
            let (x, y) = (g[0] as usize, g[1] as usize);
            if x < side && y < side {
                grid_lookup[y * side + x] = v;
            }
        }

        Ok(Mesh {
            level,
            grid,
            vertices,
            triangles,
            edges,
            triangle_edges,
            triangle_edge_signs,
            areas,
            vertex_triangle_ptr,
            vertex_triangles,
            interior_edges,
            interior_index,
            grid_lookup,
        })
    }

    /// Builds a mesh from floating point vertex positions, snapping them to
    /// the dyadic grid of the level implied by the triangle count.
    pub fn from_coordinates(vertices: &[[f64; 2]], triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        let mut level = 0u32;
        while 2usize << (2 * level) < triangles.len() {
            level += 1;
        }
        if 2usize << (2 * level) != triangles.len() {
            return Err(Error::DimensionMismatch {
                what: "triangle count of a red-refined unit square",
                expected: 2usize << (2 * level),
                found: triangles.len(),
            });
        }
        let scale = (1u64 << level) as f64;
        let grid = vertices
            .iter()
            .map(|p| [libm::round(p[0] * scale) as u32, libm::round(p[1] * scale) as u32])
            .collect();
        Mesh::from_grid(level, grid, triangles)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Side length of the squares formed by pairs of triangles.
    pub fn mesh_size(&self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn grid_coordinates(&self) -> &[[u32; 2]] {
        &self.grid
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    /// +1 when local edge `i` runs from its lower to its higher vertex index
    /// in the counterclockwise traversal of triangle `t`, -1 otherwise.
    pub fn triangle_edge_signs(&self, t: usize) -> [i8; 3] {
        self.triangle_edge_signs[t]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn barycenter(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Interior edges in ascending global edge order.
    pub fn interior_edges(&self) -> &[usize] {
        &self.interior_edges
    }

    /// Position of edge `e` in [`Mesh::interior_edges`], if interior.
    pub fn interior_index(&self, e: usize) -> Option<usize> {
        match self.interior_index[e] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[self.vertex_triangle_ptr[v]..self.vertex_triangle_ptr[v + 1]]
    }

    /// Vertex at integer grid position `g` (scale `2^level`).
    pub fn vertex_at(&self, g: [u32; 2]) -> Option<usize> {
        let side = (1usize << self.level) + 1;
        let (x, y) = (g[0] as usize, g[1] as usize);
        if x >= side || y >= side {
            return None;
        }
        match self.grid_lookup[y * side + x] {
            usize::MAX => None,
            v => Some(v),
        }
    }

    /// Edge joining vertices `a` and `b`, by binary search over the
    /// lexicographically sorted edge list.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let key = [a.min(b), a.max(b)];
        self.edges.binary_search_by(|e| e.vertices.cmp(&key)).ok()
    }

    /// Euler characteristic `V - E + T`, equal to 1 for the square.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    /// Splits every triangle into four congruent children through its edge
    /// midpoints. Old vertices keep their indices, the midpoint of old edge
    /// `e` becomes vertex `V + e`, and the children of triangle `t` are
    /// `4t..4t+4` (three corner children followed by the middle one).
    pub fn refine_red(&self) -> Mesh {
        let nv = self.vertices.len();
        let mut grid: Vec<[u32; 2]> = Vec::with_capacity(nv + self.edges.len());
        grid.extend(self.grid.iter().map(|g| [2 * g[0], 2 * g[1]]));
        for edge in &self.edges {
            let [a, b] = edge.vertices.map(|v| self.grid[v]);
            grid.push([a[0] + b[0], a[1] + b[1]]);
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let [e_a, e_b, e_c] = self.triangle_edges[t];
            // midpoints opposite a, b, c
            let (m_bc, m_ca, m_ab) = (nv + e_a, nv + e_b, nv + e_c);
            triangles.push([a, m_ab, m_ca]);
            triangles.push([m_ab, b, m_bc]);
            triangles.push([m_ca, m_bc, c]);
            triangles.push([m_ab, m_bc, m_ca]);
        }
        Mesh::from_grid(self.level + 1, grid, triangles).expect("red refinement preserves conformity")
    }
}

/// All meshes from the initial one down to a fine level, with the maps
/// between levels.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    meshes: Vec<Mesh>,
}

impl MeshHierarchy {
    /// Builds levels `0..=fine_level`. `coarse_level` only has to be a member.
    pub fn build(coarse_level: u32, fine_level: u32) -> Result<MeshHierarchy> {
        MeshHierarchy::build_with_limit(coarse_level, fine_level, DEFAULT_MAX_LEVEL)
    }

    pub fn build_with_limit(coarse_level: u32, fine_level: u32, max_level: u32) -> Result<MeshHierarchy> {
        if coarse_level > fine_level {
            return Err(Error::InvalidLevels {
                coarse: coarse_level,
                fine: fine_level,
            });
        }
        if fine_level > max_level {
            return Err(Error::ResourceLimit {
                level: fine_level,
                limit: max_level,
            });
        }
        let mut meshes = Vec::with_capacity(fine_level as usize + 1);
        meshes.push(Mesh::initial());
        for _ in 0..fine_level {
            let next = meshes.last().unwrap().refine_red();
            meshes.push(next);
        }
        Ok(MeshHierarchy { meshes })
    }

    pub fn finest_level(&self) -> u32 {
        self.meshes.len() as u32 - 1
    }

    pub fn mesh(&self, level: u32) -> Result<&Mesh> {
        self.meshes.get(level as usize).ok_or(Error::MissingLevel {
            level,
            finest: self.finest_level(),
        })
    }

    pub fn meshes(&self) -> &[Mesh] {
        &self.meshes
    }

    fn check_pair(&self, coarse: u32, fine: u32) -> Result<()> {
        if coarse > fine {
            return Err(Error::InvalidLevels { coarse, fine });
        }
        self.mesh(fine).map(|_| ())
    }

    /// Level-`coarse` triangle containing triangle `t` of level `fine`.
    pub fn ancestor(&self, fine: u32, t: usize, coarse: u32) -> usize {
        debug_assert!(coarse <= fine);
        t >> (2 * (fine - coarse))
    }

    /// Level-`fine` triangles inside triangle `t` of level `coarse`; always a
    /// contiguous index range of length `4^(fine - coarse)`.
    pub fn descendants(&self, coarse: u32, t: usize, fine: u32) -> Range<usize> {
        debug_assert!(coarse <= fine);
        let shift = 2 * (fine - coarse);
        (t << shift)..((t + 1) << shift)
    }

    /// Level-`fine` edges lying on edge `e` of level `coarse`, ordered from the
    /// lower-indexed endpoint of `e`. Found by walking the integer grid.
    pub fn fine_edges_on(&self, coarse: u32, e: usize, fine: u32) -> Result<Vec<usize>> {
        self.check_pair(coarse, fine)?;
        let cm = self.mesh(coarse)?;
        let fm = self.mesh(fine)?;
        let factor = 1u32 << (fine - coarse);
        let [a, b] = cm.edges()[e].vertices.map(|v| cm.grid_coordinates()[v]);
        let start = [a[0] * factor, a[1] * factor];
        let step = [b[0] as i64 - a[0] as i64, b[1] as i64 - a[1] as i64];
        let point = |s: u32| -> [u32; 2] {
            [
                (start[0] as i64 + step[0] * s as i64) as u32,
                (start[1] as i64 + step[1] * s as i64) as u32,
            ]
        };
        let mut out = Vec::with_capacity(factor as usize);
        for s in 0..factor {
            let p = fm.vertex_at(point(s)).ok_or(Error::Backend("grid vertex missing"))?;
            let q = fm.vertex_at(point(s + 1)).ok_or(Error::Backend("grid vertex missing"))?;
            out.push(fm.edge_between(p, q).ok_or(Error::Backend("fine edge missing"))?);
        }
        Ok(out)
    }

    /// For every edge of level `fine`, the level-`coarse` edge it lies on, if any.
    pub fn coarse_edge_of_fine_edges(&self, coarse: u32, fine: u32) -> Result<Vec<Option<usize>>> {
        let fm = self.mesh(fine)?;
        let cm = self.mesh(coarse)?;
        let mut map = vec![None; fm.num_edges()];
        for e in 0..cm.num_edges() {
            for f in self.fine_edges_on(coarse, e, fine)? {
                map[f] = Some(e);
            }
        }
        Ok(map)
    }
}

/// Coarse triangles reached from `seed` by `order` rounds of "add every
/// triangle sharing a vertex with the current set". Returned sorted.
pub fn vertex_neighborhood(mesh: &Mesh, seed: &[usize], order: usize) -> Vec<usize> {
    let mut inside = vec![false; mesh.num_triangles()];
    let mut current: Vec<usize> = Vec::with_capacity(seed.len());
    for &t in seed {
        if !inside[t] {
            inside[t] = true;
            current.push(t);
        }
    }
    let mut vertex_seen = vec![false; mesh.num_vertices()];
    for _ in 0..order {
        let mut added = Vec::new();
        for &t in &current {
            for &v in &mesh.triangles()[t] {
                if vertex_seen[v] {
                    continue;
                }
                vertex_seen[v] = true;
                for &n in mesh.vertex_triangles(v) {
                    if !inside[n] {
                        inside[n] = true;
                        added.push(n);
                    }
                }
            }
        }
        if added.is_empty() {
            break;
        }
        current.extend(added);
    }
    current.sort_unstable();
    current
}

/// The triangles sharing face `face`.
pub fn face_neighborhood(mesh: &Mesh, face: usize) -> Result<[usize; 2]> {
    let edge = mesh.edges().get(face).ok_or(Error::FaceOutOfRange {
        face,
        count: mesh.num_edges(),
    })?;
    if edge.boundary {
        return Err(Error::BoundaryFace { face });
    }
    Ok(edge.triangles)
}

/// Patch of order `order` around a coarse interior face, together with the
/// induced fine submesh.
///
/// All index lists are sorted ascending; the local index of an entity is its
/// position in the corresponding list.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub face: usize,
    pub order: usize,
    pub coarse_level: u32,
    pub fine_level: u32,
    pub coarse_triangles: Vec<usize>,
    pub fine_triangles: Vec<usize>,
    /// Fine interior edges whose two neighbours both lie in the patch.
    pub fine_edges: Vec<usize>,
    /// Fine edges of patch triangles that are not in `fine_edges`.
    pub boundary_edges: Vec<usize>,
    /// Coarse interior faces whose two neighbours both lie in the patch.
    pub coarse_faces: Vec<usize>,
}

impl Patch {
    pub fn build(hier: &MeshHierarchy, coarse_level: u32, fine_level: u32, face: usize, order: usize) -> Result<Patch> {
        if order == 0 {
            return Err(Error::ZeroPatchOrder);
        }
        hier.check_pair(coarse_level, fine_level)?;
        let cm = hier.mesh(coarse_level)?;
        let fm = hier.mesh(fine_level)?;
        let omega = face_neighborhood(cm, face)?;
        let coarse_triangles = vertex_neighborhood(cm, &omega, order);

        let mut in_coarse = vec![false; cm.num_triangles()];
        for &t in &coarse_triangles {
            in_coarse[t] = true;
        }
        let coarse_faces: Vec<usize> = cm
            .interior_edges()
            .iter()
            .copied()
            .filter(|&e| cm.edges()[e].triangles.iter().all(|&t| in_coarse[t]))
            .collect();

        let mut fine_triangles = Vec::with_capacity(coarse_triangles.len() << (2 * (fine_level - coarse_level)));
        for &t in &coarse_triangles {
            fine_triangles.extend(hier.descendants(coarse_level, t, fine_level));
        }
        let shift = 2 * (fine_level - coarse_level);
        let in_patch = |t: usize| t != NO_TRIANGLE && in_coarse[t >> shift];

        let mut fine_edges = Vec::new();
        let mut boundary_edges = Vec::new();
        for &t in &fine_triangles {
            for e in fm.triangle_edges(t) {
                let edge = &fm.edges()[e];
                // visit each edge once, from its first adjacent patch triangle
                let first = if in_patch(edge.triangles[0]) {
                    edge.triangles[0]
                } else {
                    edge.triangles[1]
                };
                if first != t {
                    continue;
                }
                if edge.is_interior() && edge.triangles.iter().all(|&n| in_patch(n)) {
                    fine_edges.push(e);
                } else {
                    boundary_edges.push(e);
                }
            }
        }
        fine_edges.sort_unstable();
        boundary_edges.sort_unstable();

        Ok(Patch {
            face,
            order,
            coarse_level,
            fine_level,
            coarse_triangles,
            fine_triangles,
            fine_edges,
            boundary_edges,
            coarse_faces,
        })
    }

    pub fn local_fine_edge(&self, e: usize) -> Option<usize> {
        self.fine_edges.binary_search(&e).ok()
    }

    pub fn local_fine_triangle(&self, t: usize) -> Option<usize> {
        self.fine_triangles.binary_search(&t).ok()
    }

    pub fn local_coarse_triangle(&self, t: usize) -> Option<usize> {
        self.coarse_triangles.binary_search(&t).ok()
    }

    pub fn local_coarse_face(&self, f: usize) -> Option<usize> {
        self.coarse_faces.binary_search(&f).ok()
    }

    /// True when the patch covers the whole coarse mesh.
    pub fn is_global(&self, coarse: &Mesh) -> bool {
        self.coarse_triangles.len() == coarse.num_triangles()
    }
}
