//! Acceptance suite. Each criterion runs at its stated tolerance and prints
//! one `PASS`/`FAIL` line; the process fails if any criterion fails.
//!
//! Runs sequentially in a custom harness so that the memory-heavy
//! convergence and localization runs never overlap.

use std::fs;
use std::path::Path;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use stokes_lod::config::{Experiment, ExperimentConfig, Overrides};
use stokes_lod::experiments::{log_linear_fit, run_convergence, run_localization, ErrorTable, OrderRow, Problem};
use stokes_lod::parallel;
use stokes_lod_core::basis::{check_basis_function, patch_groups, unit_rhs, ConstraintReport, CorrectorBasis, PatchSolver, GLOBAL_ORDER};
use stokes_lod_core::cr::{l2_projection_coarse, p0_l2_norm, CrSpace};
use stokes_lod_core::mesh::{MeshHierarchy, Patch};
use stokes_lod_core::solver::{assemble_coarse_system, assemble_fine_system, max_divergence, solve_fine_reference, solve_lod};
use stokes_lod_core::sparse::{CscMatrix, SaddleSystem};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(experiment: Experiment, o: Overrides) -> ExperimentConfig {
    ExperimentConfig::resolve(experiment, o).expect("valid acceptance configuration")
}

fn overrides(coarse: &[u32], fine: u32, eps: u32, ell: &[usize]) -> Overrides {
    Overrides {
        coarse: Some(coarse.to_vec()),
        fine: Some(fine),
        eps: Some(eps),
        ell: Some(ell.to_vec()),
        threads: Some(1),
        ..Default::default()
    }
}

/// Invariant checks collected from every run of the suite.
#[derive(Default)]
struct Ledger {
    divergence: Vec<(String, f64)>,
    constraints: Vec<(String, ConstraintReport, usize)>,
}

fn constraints_ok(r: &ConstraintReport) -> bool {
    r.face_integral <= 1e-9 && r.divergence_spread <= 1e-9 && r.divergence_multiplier <= 1e-9 && r.pressure_average <= 1e-10 && r.energy_identity <= 1e-9 && r.support_violations == 0
}

/// Desk-scale convergence run: eps 2^-5, fine 2^-7, H = 2^-1..2^-4, ell = 3.
fn convergence_run(ledger: &mut Ledger) -> ErrorTable {
    let cfg = config(Experiment::Convergence, overrides(&[1, 2, 3, 4], 7, 5, &[3]));
    let problem = Problem::new(&cfg).unwrap();
    let pool = parallel::thread_pool(cfg.threads).unwrap();
    let table = run_convergence(&cfg, &problem, &pool).unwrap();
    for r in &table.runs {
        let label = format!("convergence H=2^-{} ell={}", r.coarse_level, r.order);
        ledger.divergence.push((label.clone(), r.divergence_ratio));
        ledger.constraints.push((label, r.constraints, r.basis_len));
    }
    table
}

fn finest_orders(table: &ErrorTable) -> OrderRow {
    *table.orders().iter().max_by_key(|r| r.coarse_level).expect("at least two coarse levels")
}

fn criterion_1(table: &ErrorTable) -> Outcome {
    let o = finest_orders(table);
    let (h1, l2) = (o.u_h1.unwrap_or(f64::NAN), o.u_l2.unwrap_or(f64::NAN));
    let all: Vec<String> = table
        .orders()
        .iter()
        .map(|r| format!("{:.2}/{:.2}", r.u_h1.unwrap_or(f64::NAN), r.u_l2.unwrap_or(f64::NAN)))
        .collect();
    verdict(h1 >= 1.7 && l2 >= 2.4, format!("finest-pair order H1 {h1:.3} (>= 1.7), L2 {l2:.3} (>= 2.4); all pairs H1/L2 {}", all.join(", ")))
}

fn criterion_2(table: &ErrorTable) -> Outcome {
    let p = finest_orders(table).p_l2.unwrap_or(f64::NAN);
    verdict(p >= 0.8, format!("finest-pair post-processed pressure order {p:.3} (>= 0.8)"))
}

/// Localization on eps 2^-5, fine 2^-7, H = 2^-2 over all pre-saturation orders.
fn criterion_3() -> Outcome {
    let (coarse, fine) = (2u32, 7u32);
    let hier = MeshHierarchy::build(0, fine).unwrap();
    let mesh = hier.mesh(coarse).unwrap();
    let saturated = |order: usize| mesh.interior_edges().iter().all(|&f| Patch::build(&hier, coarse, fine, f, order).unwrap().is_global(mesh));
    let last = (1..).find(|&l| saturated(l)).unwrap() - 1;
    let orders: Vec<usize> = (1..=last).collect();
    let cfg = config(Experiment::Localization, overrides(&[coarse], fine, 5, &orders));
    let problem = Problem::new(&cfg).unwrap();
    let rows = run_localization(&cfg, &problem).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| r.errloc).collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.order as f64, r.errloc)).collect();
    let (slope, r2) = log_linear_fit(&pts).unwrap_or((f64::NAN, f64::NAN));
    let ok = ratios.iter().all(|&q| q <= 0.7) && slope < 0.0 && r2 >= 0.9 && rows.iter().all(|r| !r.saturated);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ");
    verdict(ok, format!("ell 1..={last}: errloc {}; ratios {} (<= 0.7); slope {slope:.3}, R^2 {r2:.4} (>= 0.9)", fmt(&errs), fmt(&ratios)))
}

/// Whole-domain patches on H = 2^-2, fine 2^-5.
fn criterion_4(ledger: &mut Ledger) -> Outcome {
    let cfg = config(Experiment::Convergence, overrides(&[2], 5, 4, &[GLOBAL_ORDER]));
    let problem = Problem::new(&cfg).unwrap();
    let ops = problem.operators(2).unwrap();
    let fine = solve_fine_reference(&problem.hier, &ops, &problem.rhs).unwrap();
    let pool = parallel::thread_pool(Some(1)).unwrap();
    let basis = parallel::compute_basis(&pool, &problem.hier, &ops, GLOBAL_ORDER).unwrap();
    let lod = solve_lod(&problem.hier, &ops, &basis, &problem.rhs).unwrap();

    let fine_mesh = problem.hier.mesh(5).unwrap();
    let space = CrSpace::new(fine_mesh);
    let ru = basis.apply(&ops, &fine.velocity);
    let du: Vec<f64> = lod.velocity.iter().zip(&ru).map(|(a, b)| a - b).collect();
    let u_rel = space.h1_seminorm(&du) / space.h1_seminorm(&fine.velocity);
    let projected = l2_projection_coarse(&fine.pressure, &problem.hier, 2, 5).unwrap();
    let dp: Vec<f64> = lod.coarse_pressure.iter().zip(&projected).map(|(a, b)| a - b).collect();
    let p_rel = p0_l2_norm(problem.hier.mesh(2).unwrap(), &dp) / p0_l2_norm(fine_mesh, &fine.pressure);

    let div = max_divergence(&problem.hier, 5, &lod.velocity).unwrap() / space.h1_seminorm(&lod.velocity);
    ledger.divergence.push(("global H=2^-2 fine 2^-5".into(), div));
    let report = basis.functions.iter().fold(ConstraintReport::default(), |acc, bf| acc.merge(check_basis_function(&problem.hier, &ops, bf).unwrap()));
    ledger.constraints.push(("global H=2^-2 fine 2^-5".into(), report, basis.len()));

    verdict(u_rel <= 1e-8 && p_rel <= 1e-8, format!("|grad(u - R u_h)|/|grad u_h| = {u_rel:.2e}, |p_H - Pi_H p_h|/|p_h| = {p_rel:.2e} (<= 1e-8)"))
}

fn criterion_5(ledger: &Ledger) -> Outcome {
    let worst = ledger.divergence.iter().cloned().fold((String::new(), 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    verdict(
        ledger.divergence.iter().all(|(_, r)| *r <= 1e-8),
        format!("{} runs; largest max|div u|/|grad u| = {:.2e} ({}) (<= 1e-8)", ledger.divergence.len(), worst.1, worst.0),
    )
}

fn criterion_6(ledger: &Ledger) -> Outcome {
    let total = ledger.constraints.iter().fold(ConstraintReport::default(), |a, (_, r, _)| a.merge(*r));
    let count: usize = ledger.constraints.iter().map(|c| c.2).sum();
    let failing: Vec<&str> = ledger.constraints.iter().filter(|(_, r, _)| !constraints_ok(r)).map(|(l, _, _)| l.as_str()).collect();
    verdict(
        failing.is_empty(),
        format!(
            "{count} functions; face {:.1e} (<= 1e-9), div spread {:.1e} (<= 1e-9), Pi_H xi {:.1e} (<= 1e-10), energy {:.1e} (<= 1e-9), support violations {}{}",
            total.face_integral,
            total.divergence_spread,
            total.pressure_average,
            total.energy_identity,
            total.support_violations,
            if failing.is_empty() { String::new() } else { format!("; failing: {}", failing.join(", ")) }
        ),
    )
}

fn dense_solve(m: &CscMatrix, b: &[f64]) -> Vec<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (r, c, v) in m.iter() {
        d[(r, c)] += v;
    }
    d.lu().solve(&DVector::from_column_slice(b)).map(|x| x.as_slice().to_vec()).unwrap_or_else(|| vec![f64::NAN; b.len()])
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

/// Every sparse saddle solve on H = 2^-1 / h = 2^-3 against a dense LU.
fn criterion_7(ledger: &mut Ledger) -> Outcome {
    let (c, f) = (1u32, 3u32);
    let cfg = config(Experiment::Convergence, overrides(&[c], f, 3, &[1]));
    let problem = Problem::new(&cfg).unwrap();
    let ops = problem.operators(c).unwrap();
    let mut worst = 0.0f64;
    let mut solves = 0usize;
    let mut check = |system: &SaddleSystem, x: &[f64], b: &[f64]| {
        worst = worst.max(rel_diff(x, &dense_solve(&system.matrix, b)));
        solves += 1;
    };

    let fine = assemble_fine_system(&problem.hier, &ops, &problem.rhs).unwrap();
    check(&fine, &fine.solve().unwrap(), &fine.rhs);

    let coarse_mesh = problem.hier.mesh(c).unwrap();
    for order in [1, 2, GLOBAL_ORDER] {
        let mut solved = Vec::new();
        for group in patch_groups(&problem.hier, c, f, order).unwrap() {
            let solver = PatchSolver::new(&problem.hier, &ops, &group.patch).unwrap();
            for &face in &group.faces {
                let i = coarse_mesh.interior_index(face).unwrap();
                for j in 0..2 {
                    let b = unit_rhs(&solver.system, &solver.indices, 2 * i + j).unwrap();
                    check(&solver.system, &solver.factorization.solve(&b).unwrap(), &b);
                }
            }
            solved.push(solver.solve_faces(&problem.hier, c, &group.faces, order).unwrap());
        }
        let basis = CorrectorBasis::from_groups(&problem.hier, &ops, order, solved).unwrap();
        let coarse = assemble_coarse_system(&problem.hier, &ops, &basis, &problem.rhs).unwrap();
        check(&coarse.system, &coarse.system.solve().unwrap(), &coarse.system.rhs);

        let report = basis.functions.iter().fold(ConstraintReport::default(), |acc, bf| acc.merge(check_basis_function(&problem.hier, &ops, bf).unwrap()));
        let label = format!("oracle H=2^-1 fine 2^-3 ell={}", stokes_lod::config::format_order(order));
        ledger.constraints.push((label.clone(), report, basis.len()));
        let lod = solve_lod(&problem.hier, &ops, &basis, &problem.rhs).unwrap();
        let div = max_divergence(&problem.hier, f, &lod.velocity).unwrap() / CrSpace::new(problem.hier.mesh(f).unwrap()).h1_seminorm(&lod.velocity);
        ledger.divergence.push((label, div));
    }
    verdict(worst <= 1e-9, format!("{solves} solves; largest relative difference {worst:.2e} (<= 1e-9)"))
}

/// Interior face counts from Euler's formula against the mesh and the basis size.
fn criterion_8(table: &ErrorTable) -> Outcome {
    let hier = MeshHierarchy::build(0, 6).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for k in 1..=5u32 {
        let n = 1usize << k;
        let (v, t) = ((n + 1) * (n + 1), 2 * n * n);
        let interior = (v + t - 1) - 4 * n;
        let mesh = hier.mesh(k).unwrap();
        let grouped: usize = patch_groups(&hier, k, 6, 1).unwrap().iter().map(|g| g.faces.len()).sum();
        ok &= mesh.interior_edges().len() == interior && grouped == interior;
        if let Some(run) = table.runs.iter().find(|r| r.coarse_level == k) {
            ok &= run.basis_len == 2 * interior;
            details.push(format!("H=2^-{k}: {} = 2*{interior}", run.basis_len));
        } else {
            details.push(format!("H=2^-{k}: #F = {interior}"));
        }
    }
    verdict(ok, details.join(", "))
}

fn cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_stokes-lod"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Repeated CLI invocations, with one and two threads, give identical bytes.
fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["convergence", "--coarse", "1,2", "--fine", "4", "--eps", "3", "--ell", "1,global"],
        &["localization", "--coarse", "1,2", "--fine", "4", "--eps", "3", "--ell", "1,2,3"],
        &["decay", "--coarse", "2", "--fine", "4", "--eps", "3"],
    ];
    let mut compared = 0;
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "1", "2"] {
            let dir = tmp.path().join(format!("{i}-{}", outputs.len()));
            let mut a = args.to_vec();
            a.extend(["--threads", threads]);
            cli(&a, &dir)?;
            outputs.push(csv_files(&dir));
        }
        if outputs[0].is_empty() || outputs.iter().any(|o| *o != outputs[0]) {
            return Err(format!("{} output differs between runs", args[0]));
        }
        compared += outputs[0].len();
    }
    Ok(format!("{compared} CSV files byte-identical across 3 invocations each (threads 1, 1, 2)"))
}

fn main() {
    let mut ledger = Ledger::default();
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("criterion {n}: PASS: {d}"),
            Err(d) => println!("criterion {n}: FAIL: {d}"),
        }
        results.push((n, outcome));
    };

    report(9, criterion_9());
    report(7, criterion_7(&mut ledger));
    report(4, criterion_4(&mut ledger));
    report(3, criterion_3());
    let table = convergence_run(&mut ledger);
    report(1, criterion_1(&table));
    report(2, criterion_2(&table));
    report(5, criterion_5(&ledger));
    report(6, criterion_6(&ledger));
    report(8, criterion_8(&table));

    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results.iter().filter(|r| r.1.is_err()).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
