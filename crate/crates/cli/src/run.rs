//! Executes a [`RunConfig`] and writes the CSV and summary artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use curvem_core::analysis::{fit_rates, ConvergenceReport, ConvergenceRow, ManufacturedProblem};
use curvem_core::experiment::{
    patch_test, patch_test_on, problem_for, quadrature_audit, run_manufactured,
    run_manufactured_on, ExperimentError, ExperimentKind, RunRecord, RunSettings,
};
use curvem_core::mesh::{import_mesh, straighten_mesh, validate_mesh, MeshError};
use curvem_core::vem::{local_operators, Coefficient, VemOptions};
use curvem_core::Mesh;

use crate::config::{ConfigError, RateCheck, RunConfig};

pub const PATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Mesh(String),
    Solver(String),
    Io(String),
    /// Artifacts were written but a requested check failed.
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Mesh(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io(_) | CliError::Check(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Mesh(m) => write!(f, "mesh error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Mesh(_) | ExperimentError::Validation { .. } => {
                CliError::Mesh(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Mesh(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn settings(config: &RunConfig) -> RunSettings {
    RunSettings {
        options: VemOptions {
            boost: config.boost,
            load: config.load,
            ..VemOptions::default()
        },
        solver: config.solver,
        tol: config.tol,
        max_iter: config.max_iter,
        rho: config.rho,
    }
}

/// Summary text of a finished run (also written to `<out>/<experiment>_summary.txt`).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

pub fn execute(config: &RunConfig) -> Result<RunOutput, CliError> {
    fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    match config.experiment {
        ExperimentKind::Patch => run_patch(config),
        ExperimentKind::QuadratureAudit => run_audit(config),
        kind => run_convergence_study(config, kind),
    }
}

/// Meshes given on the command line, labelled `1, 2, ...`.
fn load_meshes(paths: &[PathBuf]) -> Result<Vec<(usize, Mesh)>, CliError> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            import_mesh(p)
                .map(|m| (i + 1, m))
                .map_err(|e| CliError::Mesh(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn run_convergence_study(config: &RunConfig, kind: ExperimentKind) -> Result<RunOutput, CliError> {
    let (problem, straighten) = problem_for::<f64>(kind).expect("convergence experiment");
    let settings = settings(config);
    let meshes = load_meshes(&config.meshes)?;
    let family = if meshes.is_empty() {
        kind.mesh_family().to_string()
    } else {
        "imported meshes".to_string()
    };
    let name = kind.name();

    let mut combined = String::from("k,n,h,ndof,errH1,errL2,rateH1,rateL2\n");
    let mut summary = String::new();
    let mut files = Vec::new();
    let mut violations = Vec::new();
    for &k in &config.ks {
        let mut records: Vec<RunRecord> = Vec::new();
        if meshes.is_empty() {
            for &n in &config.ns {
                records.push(run_manufactured(&problem, k, n, straighten, &settings)?);
            }
        } else {
            for (n, mesh) in &meshes {
                records.push(run_manufactured_on(
                    &problem, mesh, k, *n, straighten, &settings,
                )?);
            }
        }
        let mut report = ConvergenceReport::default();
        for r in &records {
            report.push(ConvergenceRow {
                h: r.h,
                ndof: r.ndof,
                err_h1: r.errors.h1,
                err_l2: r.errors.l2,
            });
        }
        for (r, line) in records.iter().zip(report.csv_lines()) {
            let _ = writeln!(combined, "{k},{},{line}", r.n);
        }
        let path = config.out.join(format!("{name}_k{k}.csv"));
        write_file(&path, &report.to_csv())?;
        files.push(path);

        let _ = write!(
            summary,
            "{name} | mesh family: {family} | k={k} | n: {} | dofs: {} | errH1: {} | errL2: {}",
            join(records.iter().map(|r| r.n)),
            join(records.iter().map(|r| r.ndof)),
            join(records.iter().map(|r| format!("{:.3e}", r.errors.h1))),
            join(records.iter().map(|r| format!("{:.3e}", r.errors.l2))),
        );
        if let Ok(rates) = fit_rates(&report) {
            let (h1, l2) = rates.last();
            let _ = write!(
                summary,
                " | last-interval rates H1 {h1:.2} L2 {l2:.2} | fitted rates H1 {:.2} L2 {:.2}",
                rates.fit_h1, rates.fit_l2
            );
            let kf = k as f64;
            match config.check {
                RateCheck::Optimal if h1 < kf - 0.2 || l2 < kf + 0.75 => violations.push(format!(
                    "k={k}: rates H1 {h1:.2} L2 {l2:.2} below k-0.2 / k+0.75"
                )),
                RateCheck::Suboptimal if h1 > 1.8 || l2 > 2.5 => violations.push(format!(
                    "k={k}: rates H1 {h1:.2} L2 {l2:.2} above 1.8 / 2.5"
                )),
                _ => {}
            }
        }
        summary.push('\n');

        if config.verbose {
            let path = config.out.join(format!("{name}_k{k}_elements.txt"));
            write_file(
                &path,
                &element_dump(config, &problem, &meshes, k, straighten, &settings)?,
            )?;
            files.push(path);
        }
    }
    let path = config.out.join(format!("{name}.csv"));
    write_file(&path, &combined)?;
    files.push(path);
    finish(config, summary, files, violations)
}

/// Text dump of every local stiffness matrix and load vector.
fn element_dump(
    config: &RunConfig,
    problem: &ManufacturedProblem<f64>,
    meshes: &[(usize, Mesh)],
    k: usize,
    straighten: bool,
    settings: &RunSettings,
) -> Result<String, CliError> {
    let owned: Vec<(usize, Mesh)> = if meshes.is_empty() {
        config
            .ns
            .iter()
            .map(|&n| (problem.mesh)(n).map(|m| (n, m)))
            .collect::<Result<_, _>>()?
    } else {
        meshes.to_vec()
    };
    let coeff = Coefficient::new(problem.kappa.iter().copied(), problem.source.clone())
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let mut out = String::new();
    for (n, mesh) in owned {
        let mesh = if straighten {
            straighten_mesh(&mesh)?
        } else {
            mesh
        };
        for e in 0..mesh.n_elements() {
            let (_, ops) = local_operators(&mesh, e, k, &coeff, settings.options)
                .map_err(|err| CliError::Solver(err.to_string()))?;
            let m = &ops.stiffness;
            let _ = writeln!(out, "n {n} element {e} k {k} size {}", m.rows());
            for i in 0..m.rows() {
                let _ = writeln!(
                    out,
                    "{}",
                    join(m.row(i).iter().map(|v| format!("{v:.16e}")))
                );
            }
            let _ = writeln!(
                out,
                "load {}",
                join(ops.load.iter().map(|v| format!("{v:.16e}")))
            );
        }
    }
    Ok(out)
}

fn run_patch(config: &RunConfig) -> Result<RunOutput, CliError> {
    let settings = settings(config);
    let meshes = load_meshes(&config.meshes)?;
    let family = if meshes.is_empty() {
        ExperimentKind::Patch.mesh_family()
    } else {
        "imported meshes"
    };
    let mut csv = String::from("k,n,ndof,err\n");
    let mut summary = String::new();
    let mut worst: f64 = 0.0;
    for &k in &config.ks {
        let mut rows = Vec::new();
        if meshes.is_empty() {
            for &n in &config.ns {
                rows.push((n, patch_test::<f64>(k, n, &settings)?));
            }
        } else {
            for (n, mesh) in &meshes {
                rows.push((*n, patch_test_on(mesh, k, *n, &settings)?));
            }
        }
        for &(n, (err, ndof)) in &rows {
            let _ = writeln!(csv, "{k},{n},{ndof},{err:.6e}");
            worst = worst.max(err);
        }
        let _ = writeln!(
            summary,
            "patch | mesh family: {family} | k={k} | n: {} | dofs: {} | max DoF error: {:.2e}",
            join(rows.iter().map(|r| r.0)),
            join(rows.iter().map(|r| r.1 .1)),
            rows.iter().map(|r| r.1 .0).fold(0.0, f64::max),
        );
    }
    let path = config.out.join("patch.csv");
    write_file(&path, &csv)?;
    let mut violations = Vec::new();
    if worst <= PATCH_TOLERANCE {
        summary.push_str("patch test passed (err ≤ 1e-9)\n");
    } else {
        summary.push_str(&format!("patch test FAILED (err {worst:.2e} > 1e-9)\n"));
        violations.push(format!("patch error {worst:.2e}"));
    }
    finish(config, summary, vec![path], violations)
}

fn run_audit(config: &RunConfig) -> Result<RunOutput, CliError> {
    let (rows, disk) = quadrature_audit(&config.ms, config.trials, config.seed)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let path = config.out.join("quadrature-audit.csv");
    write_file(&path, &audit_csv(&rows))?;
    let summary = audit_summary(&rows, disk, config.trials);
    finish(config, summary, vec![path], Vec::new())
}

pub fn audit_csv(rows: &[curvem_core::experiment::AuditRow]) -> String {
    let mut csv = String::from("M,max_rel_err\n");
    for r in rows {
        let _ = writeln!(csv, "{},{:.6e}", r.m, r.max_relative_error);
    }
    csv
}

pub fn audit_summary(
    rows: &[curvem_core::experiment::AuditRow],
    disk: f64,
    trials: usize,
) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(
            s,
            "quadrature-audit | mesh family: {} | M={} | polygons: {trials} | max relative error {:.2e}",
            ExperimentKind::QuadratureAudit.mesh_family(),
            r.m,
            r.max_relative_error
        );
    }
    let _ = writeln!(
        s,
        "quadrature-audit | unit disk (3 uneven arcs) area error {disk:.2e}"
    );
    s
}

fn finish(
    config: &RunConfig,
    summary: String,
    mut files: Vec<PathBuf>,
    violations: Vec<String>,
) -> Result<RunOutput, CliError> {
    let path = config
        .out
        .join(format!("{}_summary.txt", config.experiment.name()));
    write_file(&path, &summary)?;
    files.push(path);
    if !violations.is_empty() {
        print!("{summary}");
        return Err(CliError::Check(violations.join("; ")));
    }
    Ok(RunOutput { summary, files })
}

/// `curvem validate`: returns the report summary, or a mesh error when the
/// mesh cannot be read or fails validation.
pub fn validate_file(path: &Path, rho: f64) -> Result<String, CliError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(CliError::Config(format!("rho = {rho} outside (0, 1)")));
    }
    let mesh: Mesh =
        import_mesh(path).map_err(|e| CliError::Mesh(format!("{}: {e}", path.display())))?;
    let report = validate_mesh(&mesh, rho);
    let text = format!(
        "{}: {} vertices, {} edges, {} elements\n{}",
        path.display(),
        mesh.n_vertices(),
        mesh.n_edges(),
        mesh.n_elements(),
        report.summary()
    );
    if report.pass {
        Ok(text)
    } else {
        Err(CliError::Mesh(text))
    }
}
