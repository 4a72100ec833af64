//! The experiments: basis decay, localization error and convergence
//! against a fine reference, plus a single exported solve.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::ThreadPool;
use stokes_lod_core::basis::{check_basis_function, decay_profile, localization_error, ConstraintReport, CorrectorBasis, Operators, PatchSolver, GLOBAL_ORDER};
use stokes_lod_core::coeffs::{constant_field, generate_multiscale_coefficient, inject_to_fine, PiecewiseConstantField};
use stokes_lod_core::cr::{assemble_rhs, CrSpace};
use stokes_lod_core::mesh::{MeshHierarchy, Patch};
use stokes_lod_core::solver::{compute_errors, max_divergence, solve_fine_reference, solve_lod, ErrorRecord, FineSolution, LodSolution};

use crate::config::{format_order, Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::io::{self, fmt_f64};
use crate::parallel;
use crate::report::Table;

/// Right-hand side `f(x, y) = (-y, x)`.
pub fn load(x: [f64; 2]) -> [f64; 2] {
    [-x[1], x[0]]
}

/// Mesh size of coarse level `c`.
pub fn mesh_size(level: u32) -> f64 {
    1.0 / (1u64 << level) as f64
}

/// Mesh hierarchy, fine viscosity and load vector shared by all runs of
/// one configuration.
pub struct Problem {
    pub hier: MeshHierarchy,
    pub fine_level: u32,
    pub viscosity: PiecewiseConstantField,
    pub reaction: PiecewiseConstantField,
    pub rhs: Vec<f64>,
}

impl Problem {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let hier = MeshHierarchy::build(0, config.fine_level)?;
        let coarse = generate_multiscale_coefficient(&config.coefficients, &hier)?;
        let viscosity = inject_to_fine(&coarse, &hier, config.fine_level)?;
        let fine = hier.mesh(config.fine_level)?;
        let reaction = constant_field(fine, 0.0)?;
        let rhs = assemble_rhs(&CrSpace::new(fine), load);
        Ok(Problem {
            hier,
            fine_level: config.fine_level,
            viscosity,
            reaction,
            rhs,
        })
    }

    pub fn operators(&self, coarse_level: u32) -> Result<Operators> {
        Ok(Operators::assemble(&self.hier, coarse_level, self.fine_level, &self.viscosity, &self.reaction)?)
    }

    pub fn fine_reference(&self, ops: &Operators) -> Result<FineSolution> {
        Ok(solve_fine_reference(&self.hier, ops, &self.rhs)?)
    }
}

/// Least-squares fit of `ln(values)` against the index. Returns
/// `(slope, r_squared)`; `None` with fewer than two positive values.
pub fn log_linear_fit(values: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = values.iter().filter(|(_, y)| *y > 0.0).map(|&(x, y)| (x, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// Interior coarse face whose midpoint is closest to the domain center;
/// the lowest index wins ties.
pub fn central_face(hier: &MeshHierarchy, coarse_level: u32) -> Result<usize> {
    let mesh = hier.mesh(coarse_level)?;
    let dist = |e: usize| {
        let m = mesh.edges()[e].midpoint;
        (m[0] - 0.5).powi(2) + (m[1] - 0.5).powi(2)
    };
    mesh.interior_edges()
        .iter()
        .copied()
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))
        .ok_or_else(|| HarnessError::Usage(format!("coarse level {coarse_level} has no interior faces")))
}

#[derive(Clone, Debug)]
pub struct DecayResult {
    pub coarse_level: u32,
    pub face: usize,
    /// `energy_outside` for `k = 0, 1, ...`, one profile per component.
    pub profiles: [Vec<f64>; 2],
    /// `|phi_(F,0)|` at each fine barycenter.
    pub modulus: Vec<f64>,
}

/// Whole-domain basis functions of the central face and their decay.
pub fn run_decay(config: &ExperimentConfig, problem: &Problem) -> Result<Vec<DecayResult>> {
    let hier = &problem.hier;
    let mut out = Vec::new();
    for &c in &config.coarse_levels {
        let ops = problem.operators(c)?;
        let face = central_face(hier, c)?;
        let patch = Patch::build(hier, c, problem.fine_level, face, GLOBAL_ORDER)?;
        let solver = PatchSolver::new(hier, &ops, &patch)?;
        let functions = solver.solve_faces(hier, c, &[face], GLOBAL_ORDER)?;
        let profiles = [
            decay_profile(hier, c, problem.fine_level, &functions[0])?,
            decay_profile(hier, c, problem.fine_level, &functions[1])?,
        ];
        let fine = hier.mesh(problem.fine_level)?;
        let space = CrSpace::new(fine);
        let v = functions[0].velocity.to_dense(space.num_dofs());
        let modulus = (0..fine.num_triangles())
            .map(|t| {
                let mut value = [0.0f64; 2];
                for e in fine.triangle_edges(t) {
                    for (j, x) in value.iter_mut().enumerate() {
                        if let Some(d) = space.dof(e, j) {
                            *x += v[d] / 3.0;
                        }
                    }
                }
                value[0].hypot(value[1])
            })
            .collect();
        out.push(DecayResult {
            coarse_level: c,
            face,
            profiles,
            modulus,
        });
    }
    Ok(out)
}

pub fn decay_table(result: &DecayResult) -> Table {
    let mut t = Table::new(&["face", "component", "k", "energy_outside"]);
    for (j, profile) in result.profiles.iter().enumerate() {
        for (k, v) in profile.iter().enumerate() {
            t.push(vec![result.face.to_string(), j.to_string(), k.to_string(), fmt_f64(*v)]);
        }
    }
    t
}

pub fn modulus_table(problem: &Problem, result: &DecayResult) -> Result<Table> {
    let fine = problem.hier.mesh(problem.fine_level)?;
    let mut t = Table::new(&["triangle", "x", "y", "modulus"]);
    for (i, m) in result.modulus.iter().enumerate() {
        let [x, y] = fine.barycenter(i);
        t.push(vec![i.to_string(), fmt_f64(x), fmt_f64(y), fmt_f64(*m)]);
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizationRow {
    pub coarse_level: u32,
    pub order: usize,
    pub errloc: f64,
    /// Every patch of this order covers the whole domain.
    pub saturated: bool,
}

pub fn run_localization(config: &ExperimentConfig, problem: &Problem) -> Result<Vec<LocalizationRow>> {
    let hier = &problem.hier;
    let mut rows = Vec::new();
    for &c in &config.coarse_levels {
        let ops = problem.operators(c)?;
        let errors = localization_error(hier, &ops, &config.orders)?;
        let coarse = hier.mesh(c)?;
        for (&order, errloc) in config.orders.iter().zip(errors) {
            let saturated = coarse
                .interior_edges()
                .iter()
                .map(|&f| Patch::build(hier, c, problem.fine_level, f, order).map(|p| p.is_global(coarse)))
                .collect::<Result<Vec<bool>, _>>()?
                .into_iter()
                .all(|g| g);
            rows.push(LocalizationRow {
                coarse_level: c,
                order,
                errloc,
                saturated,
            });
        }
    }
    Ok(rows)
}

pub fn localization_table(rows: &[LocalizationRow]) -> Table {
    let mut t = Table::new(&["H", "ell", "errloc"]);
    for r in rows {
        t.push(vec![fmt_f64(mesh_size(r.coarse_level)), format_order(r.order), fmt_f64(r.errloc)]);
    }
    t
}

/// One LOD solve with its errors and invariant checks.
#[derive(Clone, Debug)]
pub struct ConvergenceRun {
    pub coarse_level: u32,
    pub order: usize,
    pub errors: ErrorRecord,
    /// Basis computation and coarse solve.
    pub seconds: f64,
    pub basis_len: usize,
    /// Largest fine elementwise divergence over `||grad u||`.
    pub divergence_ratio: f64,
    /// Merged over all basis functions of the run.
    pub constraints: ConstraintReport,
}

/// Observed orders between consecutive configured coarse levels at one
/// patch order. `H` is the finer of the two.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderRow {
    pub coarse_level: u32,
    pub order: usize,
    pub u_h1: Option<f64>,
    pub u_l2: Option<f64>,
    pub p_l2: Option<f64>,
    pub pih_p_l2: Option<f64>,
}

/// `log(e_a / e_b) / log(H_a / H_b)`, defined for positive errors.
pub fn observed_order(coarse_a: u32, err_a: f64, coarse_b: u32, err_b: f64) -> Option<f64> {
    (err_a > 0.0 && err_b > 0.0 && coarse_a != coarse_b).then(|| (err_a / err_b).ln() / (mesh_size(coarse_a) / mesh_size(coarse_b)).ln())
}

#[derive(Clone, Debug, Default)]
pub struct ErrorTable {
    pub runs: Vec<ConvergenceRun>,
}

impl ErrorTable {
    pub fn run(&self, coarse_level: u32, order: usize) -> Option<&ConvergenceRun> {
        self.runs.iter().find(|r| r.coarse_level == coarse_level && r.order == order)
    }

    pub fn orders(&self) -> Vec<OrderRow> {
        let mut out = Vec::new();
        let mut patch_orders: Vec<usize> = self.runs.iter().map(|r| r.order).collect();
        patch_orders.sort_unstable();
        patch_orders.dedup();
        for order in patch_orders {
            let mut runs: Vec<&ConvergenceRun> = self.runs.iter().filter(|r| r.order == order).collect();
            runs.sort_by_key(|r| r.coarse_level);
            for pair in runs.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let ord = |f: fn(&ErrorRecord) -> f64| observed_order(a.coarse_level, f(&a.errors), b.coarse_level, f(&b.errors));
                out.push(OrderRow {
                    coarse_level: b.coarse_level,
                    order,
                    u_h1: ord(|e| e.u_h1),
                    u_l2: ord(|e| e.u_l2),
                    p_l2: ord(|e| e.p_l2),
                    pih_p_l2: ord(|e| e.pih_p_l2),
                });
            }
        }
        out
    }

    pub fn errors_table(&self, timings: bool) -> Table {
        let mut t = Table::new(&["H", "ell", "err_u_h1", "err_u_l2", "err_p_l2", "err_pih_p_l2", "seconds"]);
        for r in &self.runs {
            t.push(vec![
                fmt_f64(mesh_size(r.coarse_level)),
                format_order(r.order),
                fmt_f64(r.errors.u_h1),
                fmt_f64(r.errors.u_l2),
                fmt_f64(r.errors.p_l2),
                fmt_f64(r.errors.pih_p_l2),
                fmt_f64(if timings { r.seconds } else { f64::NAN }),
            ]);
        }
        t
    }

    pub fn orders_table(&self) -> Table {
        let mut t = Table::new(&["H", "ell", "order_u_h1", "order_u_l2", "order_p_l2", "order_pih_p_l2"]);
        let opt = |x: Option<f64>| fmt_f64(x.unwrap_or(f64::NAN));
        for r in self.orders() {
            t.push(vec![fmt_f64(mesh_size(r.coarse_level)), format_order(r.order), opt(r.u_h1), opt(r.u_l2), opt(r.p_l2), opt(r.pih_p_l2)]);
        }
        t
    }
}

/// Basis, coarse solve and checks for one `(H, ell)`.
pub fn solve_one(pool: &ThreadPool, problem: &Problem, ops: &Operators, order: usize, basis: Option<CorrectorBasis>) -> Result<(CorrectorBasis, LodSolution, f64)> {
    let start = Instant::now();
    let basis = match basis {
        Some(b) => b,
        None => parallel::compute_basis(pool, &problem.hier, ops, order)?,
    };
    let lod = solve_lod(&problem.hier, ops, &basis, &problem.rhs)?;
    Ok((basis, lod, start.elapsed().as_secs_f64()))
}

fn diagnostics(problem: &Problem, ops: &Operators, basis: &CorrectorBasis, lod: &LodSolution) -> Result<(f64, ConstraintReport)> {
    let fine = problem.hier.mesh(problem.fine_level)?;
    let div = max_divergence(&problem.hier, problem.fine_level, &lod.velocity)?;
    let norm = CrSpace::new(fine).h1_seminorm(&lod.velocity);
    let ratio = if norm > 0.0 { div / norm } else { div };
    let mut report = ConstraintReport::default();
    for bf in &basis.functions {
        report = report.merge(check_basis_function(&problem.hier, ops, bf)?);
    }
    Ok((ratio, report))
}

/// Fine reference once, then every `(H, ell)` of the configuration.
pub fn run_convergence(config: &ExperimentConfig, problem: &Problem, pool: &ThreadPool) -> Result<ErrorTable> {
    let mut table = ErrorTable::default();
    let mut reference: Option<FineSolution> = None;
    for &c in &config.coarse_levels {
        let ops = problem.operators(c)?;
        if reference.is_none() {
            reference = Some(problem.fine_reference(&ops)?);
        }
        let fine = reference.as_ref().expect("reference computed above");
        for &order in &config.orders {
            let (basis, lod, seconds) = solve_one(pool, problem, &ops, order, None)?;
            let errors = compute_errors(&problem.hier, c, problem.fine_level, fine, &lod)?;
            let (divergence_ratio, constraints) = diagnostics(problem, &ops, &basis, &lod)?;
            table.runs.push(ConvergenceRun {
                coarse_level: c,
                order,
                errors,
                seconds,
                basis_len: basis.len(),
                divergence_ratio,
                constraints,
            });
        }
    }
    Ok(table)
}

/// Extra outputs of the `solve` experiment.
#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    /// Read the basis from this directory instead of computing it.
    pub basis_dir: Option<PathBuf>,
    pub export_basis: bool,
    pub export_matrices: bool,
}

/// Single solve; writes the mesh, viscosity, solution vectors and an error
/// row into the output directory.
pub fn run_solve(config: &ExperimentConfig, problem: &Problem, pool: &ThreadPool, options: &SolveOptions) -> Result<ConvergenceRun> {
    let (c, order) = (config.coarse_levels[0], config.orders[0]);
    let ops = problem.operators(c)?;
    let reference = problem.fine_reference(&ops)?;
    let loaded = match &options.basis_dir {
        Some(dir) => {
            let b = io::read_basis(dir)?;
            let expected = ops.num_basis_functions();
            if (b.coarse_level, b.fine_level, b.order) != (c, problem.fine_level, order) || b.len() != expected {
                return Err(HarnessError::Usage(format!(
                    "basis in {} has levels {}/{}, order {} and {} functions; expected {c}/{}, order {} and {expected}",
                    dir.display(),
                    b.coarse_level,
                    b.fine_level,
                    format_order(b.order),
                    b.len(),
                    problem.fine_level,
                    format_order(order),
                )));
            }
            Some(b)
        }
        None => None,
    };
    let (basis, lod, seconds) = solve_one(pool, problem, &ops, order, loaded)?;
    let errors = compute_errors(&problem.hier, c, problem.fine_level, &reference, &lod)?;
    let (divergence_ratio, constraints) = diagnostics(problem, &ops, &basis, &lod)?;
    let run = ConvergenceRun {
        coarse_level: c,
        order,
        errors,
        seconds,
        basis_len: basis.len(),
        divergence_ratio,
        constraints,
    };

    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let fine = problem.hier.mesh(problem.fine_level)?;
    io::write_file(&out.join("mesh.txt"), |w| io::write_mesh(w, fine))?;
    io::write_file(&out.join("viscosity.txt"), |w| io::write_field(w, &problem.viscosity))?;
    let vectors: [(&str, &[f64]); 6] = [
        ("velocity.txt", &lod.velocity),
        ("pressure.txt", &lod.postprocessed_pressure),
        ("coarse_pressure.txt", &lod.coarse_pressure),
        ("coefficients.txt", &lod.coefficients),
        ("reference_velocity.txt", &reference.velocity),
        ("reference_pressure.txt", &reference.pressure),
    ];
    for (name, v) in vectors {
        io::write_file(&out.join(name), |w| io::write_vector(w, v))?;
    }
    if options.export_basis {
        io::write_basis(&out.join("basis"), &basis)?;
    }
    if options.export_matrices {
        for (name, m) in [("A.mtx", &ops.a), ("B.mtx", &ops.b), ("C.mtx", &ops.c), ("M.mtx", &ops.m)] {
            io::write_file(&out.join(name), |w| io::write_matrix_market(w, m))?;
        }
    }
    let table = ErrorTable { runs: vec![run.clone()] };
    table.errors_table(config.timings).save(&out.join("solve.csv"), config)?;
    Ok(run)
}

/// Files written by [`run_experiment`].
pub fn output_files(config: &ExperimentConfig) -> Vec<PathBuf> {
    let out = |name: String| config.out_dir.join(name);
    match config.experiment {
        Experiment::Decay => config
            .coarse_levels
            .iter()
            .flat_map(|c| [out(format!("decay_c{c}.csv")), out(format!("modulus_c{c}.csv"))])
            .collect(),
        Experiment::Localization => vec![out("localization.csv".into())],
        Experiment::Convergence => vec![out("convergence.csv".into()), out("convergence_orders.csv".into())],
        Experiment::Solve => vec![out("solve.csv".into())],
    }
}

/// Runs the configured experiment and writes its CSV files.
pub fn run_experiment(config: &ExperimentConfig, options: &SolveOptions) -> Result<Vec<PathBuf>> {
    let pool = parallel::thread_pool(config.threads)?;
    let problem = Problem::new(config)?;
    let path = |name: String| -> PathBuf { Path::new(&config.out_dir).join(name) };
    match config.experiment {
        Experiment::Decay => {
            for r in run_decay(config, &problem)? {
                decay_table(&r).save(&path(format!("decay_c{}.csv", r.coarse_level)), config)?;
                modulus_table(&problem, &r)?.save(&path(format!("modulus_c{}.csv", r.coarse_level)), config)?;
            }
        }
        Experiment::Localization => {
            localization_table(&run_localization(config, &problem)?).save(&path("localization.csv".into()), config)?;
        }
        Experiment::Convergence => {
            let table = run_convergence(config, &problem, &pool)?;
            table.errors_table(config.timings).save(&path("convergence.csv".into()), config)?;
            table.orders_table().save(&path("convergence_orders.csv".into()), config)?;
        }
        Experiment::Solve => {
            run_solve(config, &problem, &pool, options)?;
        }
    }
    Ok(output_files(config))
}
