//! Basis computation spread over a rayon thread pool. Patch groups are
//! solved independently and merged in face order, so the result does not
//! depend on the thread count.

use rayon::prelude::*;
use rayon::ThreadPool;
use stokes_lod_core::basis::{patch_groups, solve_group, CorrectorBasis, Operators};
use stokes_lod_core::mesh::MeshHierarchy;

use crate::error::Result;

pub const THREADS_ENV: &str = "STOKES_LOD_THREADS";

/// Builds a pool with `threads` workers, or rayon's default when `None`.
pub fn thread_pool(threads: Option<usize>) -> Result<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

/// Parallel version of `basis::compute_basis`.
pub fn compute_basis(pool: &ThreadPool, hier: &MeshHierarchy, ops: &Operators, order: usize) -> Result<CorrectorBasis> {
    let groups = patch_groups(hier, ops.coarse_level, ops.fine_level, order)?;
    let solved = pool.install(|| groups.par_iter().map(|g| solve_group(hier, ops, g)).collect::<Result<Vec<_>, _>>())?;
    Ok(CorrectorBasis::from_groups(hier, ops, order, solved)?)
}
