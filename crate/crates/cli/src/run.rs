//! Subcommand implementations. Each writes its artifacts under the output
//! directory and returns the names of the checks that failed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cpl_core::continuation::{run_homotopy, ContinuationOptions};
use cpl_core::domain::{validate_simple_domain, Profile};
use cpl_core::exec::Exec;
use cpl_core::field::{fmt_f64, Field, RawField};
use cpl_core::grid::{Extent, MeridianGrid};
use cpl_core::morse::{census_csv, find_critical_points, Census, CensusOptions, PointType};
use cpl_core::nonlinearity::check_hypotheses;
use cpl_core::oracle3d::{compare_with_axisymmetric, solve_3d, OracleComparison, OracleOptions, VoxelField};
use cpl_core::solver::{newton_solve, AxisymmetricLaplacian, SolveReport, SolverOptions};
use cpl_core::stability::{eigen_comment, is_stable, smallest_eigenvalue, EigenOptions};
use cpl_core::verify::{verify_solution, VerifyOptions};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Oracle acceptance thresholds.
pub const ORACLE_LINF_REL: f64 = 2e-2;
pub const ORACLE_CP_CELLS: f64 = 2.0;
pub const ORACLE_WITNESS_REL: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Eigen,
    Census,
    Verify,
    Continue,
    Oracle3d,
    Report,
}

pub struct Context {
    pub config: Option<RunConfig>,
    pub out: PathBuf,
    pub quiet: bool,
    /// Field to verify instead of solving.
    pub field: Option<PathBuf>,
    /// Voxel field to compare instead of solving.
    pub voxel: Option<PathBuf>,
    pub exec: Exec,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn cfg(&self) -> Result<&RunConfig> {
        self.config.as_ref().ok_or_else(|| CliError::Usage("this subcommand needs --config".into()))
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(CliError::io(&path))?;
        Ok(path)
    }

    fn solver(&self) -> Result<SolverOptions> {
        let c = self.cfg()?;
        Ok(SolverOptions {
            tol_pde: c.tol_pde,
            tol_lin: c.tol_lin,
            max_newton: c.max_newton,
            max_lin_iter: c.max_lin_iter,
            exec: self.exec,
        })
    }

    fn eigen(&self) -> Result<EigenOptions> {
        let c = self.cfg()?;
        Ok(EigenOptions { tol_eig: c.tol_eig, max_lin_iter: c.max_lin_iter, exec: self.exec, ..EigenOptions::default() })
    }

    fn census_opts(&self) -> Result<CensusOptions> {
        Ok(CensusOptions { tol_cp: self.cfg()?.tol_cp, exec: self.exec, ..CensusOptions::default() })
    }
}

/// Rejects domains and nonlinearities outside the theorems' hypotheses.
fn preflight(ctx: &Context) -> Result<()> {
    let c = ctx.cfg()?;
    let v = validate_simple_domain(&c.domain, 2000)?;
    if !v.pass {
        let why: Vec<String> = v.failed().map(|f| format!("{}: {}", f.name, f.detail)).collect();
        return Err(CliError::Usage(format!("domain is not simple rotationally symmetric: {}", why.join("; "))));
    }
    if !v.convex {
        ctx.say("note: domain nonconvex");
    }
    let h = check_hypotheses(&c.nonlinearity, 400);
    if !h.pass() {
        return Err(CliError::Usage(format!("nonlinearity violates the hypotheses: {}", h.violations.join("; "))));
    }
    Ok(())
}

fn target_lap(c: &RunConfig) -> Result<AxisymmetricLaplacian> {
    let d = &c.domain;
    let extent = Extent { r: d.radial_extent(), z: d.axis_height() };
    let grid = Arc::new(MeridianGrid::build(d, extent, c.nr, c.nz, 1.0)?);
    Ok(AxisymmetricLaplacian::new(grid, d.n)?)
}

fn solve(ctx: &Context) -> Result<(AxisymmetricLaplacian, Field, SolveReport)> {
    preflight(ctx)?;
    let c = ctx.cfg()?;
    let lap = target_lap(c)?;
    let u0 = Field::zeros(lap.grid.clone(), c.domain.n);
    let (u, rep) = newton_solve(&lap, &c.nonlinearity, &u0, &ctx.solver()?)?;
    Ok((lap, u, rep))
}

fn solve_csv(rep: &SolveReport) -> String {
    format!(
        "newton_iterations,final_residual,converged,damping_events,linear_iterations,positivity_violation\n{},{},{},{},{},{}\n",
        rep.newton_iterations,
        fmt_f64(rep.final_residual),
        rep.converged,
        rep.damping_events,
        rep.linear_iterations,
        rep.positivity_violation.map_or_else(String::new, fmt_f64)
    )
}

fn solve_failures(rep: &SolveReport) -> Vec<String> {
    let mut f = Vec::new();
    if !rep.converged {
        f.push(format!("newton: residual {:e} after {} iterations", rep.final_residual, rep.newton_iterations));
    }
    if let Some(m) = rep.positivity_violation {
        f.push(format!("positivity: min u = {m:e}"));
    }
    f
}

fn census_failures(census: &Census) -> Vec<String> {
    let single = census.points.len() == 1
        && census.points[0].on_axis
        && census.points[0].kind == PointType::Max
        && census.unique_nondegenerate_max;
    if single {
        Vec::new()
    } else {
        vec![format!("census: {} critical points, expected one nondegenerate maximum on the axis", census.points.len())]
    }
}

fn oracle_failures(cmp: &OracleComparison) -> Vec<String> {
    let mut f = Vec::new();
    if cmp.linf_rel > ORACLE_LINF_REL {
        f.push(format!("oracle: linf_rel {:e} > {ORACLE_LINF_REL:e}", cmp.linf_rel));
    }
    if cmp.clusters.len() != 1 {
        f.push(format!("oracle: {} critical voxel clusters", cmp.clusters.len()));
    }
    if cmp.cp_offset_cells > ORACLE_CP_CELLS {
        f.push(format!("oracle: critical point offset {} cells", cmp.cp_offset_cells));
    }
    if !cmp.witnesses_pass(ORACLE_WITNESS_REL) {
        f.push(format!("oracle: symmetry witnesses {:e}, {:e}", cmp.rotation_witness, cmp.mirror_witness));
    }
    f
}

fn description(c: &RunConfig) -> Vec<String> {
    if c.domain.description.is_empty() {
        Vec::new()
    } else {
        vec![c.domain.description.clone()]
    }
}

pub fn run(cmd: Subcommand, ctx: &Context) -> Result<Vec<String>> {
    fs::create_dir_all(&ctx.out).map_err(CliError::io(&ctx.out))?;
    match cmd {
        Subcommand::Solve => cmd_solve(ctx),
        Subcommand::Eigen => cmd_eigen(ctx),
        Subcommand::Census => cmd_census(ctx),
        Subcommand::Verify => cmd_verify(ctx),
        Subcommand::Continue => cmd_continue(ctx),
        Subcommand::Oracle3d => cmd_oracle(ctx),
        Subcommand::Report => cmd_report(ctx),
    }
}

fn cmd_solve(ctx: &Context) -> Result<Vec<String>> {
    let (_, u, rep) = solve(ctx)?;
    let c = ctx.cfg()?;
    let path = ctx.out.join("solution.cpfield");
    u.write_cpfield(&path, 1.0, &description(c))?;
    ctx.write("solve_report.csv", &solve_csv(&rep))?;
    ctx.say(format!(
        "solve: {} Newton steps, residual {:e}, max u = {}",
        rep.newton_iterations,
        rep.final_residual,
        fmt_f64(u.max())
    ));
    Ok(solve_failures(&rep))
}

fn cmd_eigen(ctx: &Context) -> Result<Vec<String>> {
    let (lap, u, rep) = solve(ctx)?;
    let mut failures = solve_failures(&rep);
    if !rep.converged {
        return Ok(failures);
    }
    let c = ctx.cfg()?;
    let st = smallest_eigenvalue(&lap, &c.nonlinearity, &u, &ctx.eigen()?)?;
    st.eigenfield.write_cpfield(&ctx.out.join("eigenfield.cpfield"), 1.0, &[eigen_comment(&st)])?;
    let stable = is_stable(&st, None);
    ctx.write(
        "stability.csv",
        &format!(
            "lambda1,residual,iterations,shift,stable,single_signed\n{},{},{},{},{},{}\n",
            fmt_f64(st.lambda1),
            fmt_f64(st.residual),
            st.iterations,
            fmt_f64(st.shift),
            stable,
            st.single_signed
        ),
    )?;
    ctx.say(format!("eigen: lambda1 = {} (residual {:e})", fmt_f64(st.lambda1), st.residual));
    if !stable {
        failures.push(format!("stability: lambda1 = {} is not above {:e}", st.lambda1, st.margin()));
    }
    Ok(failures)
}

fn cmd_census(ctx: &Context) -> Result<Vec<String>> {
    let (_, u, rep) = solve(ctx)?;
    let mut failures = solve_failures(&rep);
    if !rep.converged {
        return Ok(failures);
    }
    let census = find_critical_points(&u, &ctx.census_opts()?)?;
    ctx.write("census.csv", &census_csv(&census, u.n))?;
    for p in &census.points {
        ctx.say(format!("census: {} at (r, z) = ({:.6}, {:.6}), eigenvalues {:?}", p.kind.as_str(), p.r, p.z, p.eigenvalues));
    }
    failures.extend(census_failures(&census));
    Ok(failures)
}

fn load_field(ctx: &Context, path: &Path) -> Result<(AxisymmetricLaplacian, Field)> {
    let c = ctx.cfg()?;
    let raw = RawField::read(path)?;
    let lap = target_lap(c)?;
    if raw.n != c.domain.n {
        return Err(CliError::Usage(format!("field has n = {} but the config has n = {}", raw.n, c.domain.n)));
    }
    let u = Field::from_raw(&raw, lap.grid.clone())?;
    Ok((lap, u))
}

fn cmd_verify(ctx: &Context) -> Result<Vec<String>> {
    let c = ctx.cfg()?;
    let (lap, u, mut failures) = match &ctx.field {
        Some(p) => {
            preflight(ctx)?;
            let (lap, u) = load_field(ctx, p)?;
            (lap, u, Vec::new())
        }
        None => {
            let (lap, u, rep) = solve(ctx)?;
            if !rep.converged {
                return Ok(solve_failures(&rep));
            }
            (lap, u, solve_failures(&rep))
        }
    };
    let opts = VerifyOptions {
        tol_pde: c.tol_pde,
        seeds: c.seeds,
        seed: c.seed,
        census: ctx.census_opts()?,
        solver: ctx.solver()?,
    };
    let v = verify_solution(&lap, &c.nonlinearity, &u, c.domain.radial_extent(), &opts)?;
    ctx.write("verification.csv", &v.report.to_csv())?;
    ctx.write("verification.txt", &v.report.to_text())?;
    ctx.say(v.report.to_text());
    if !v.geometry_violations.is_empty() {
        ctx.say(format!("moving plane skipped for lambda = {:?}", v.geometry_violations));
    }
    failures.extend(v.report.checks.iter().filter(|l| !l.pass).map(|l| format!("verify: {}", l.name)));
    Ok(failures)
}

fn cmd_continue(ctx: &Context) -> Result<Vec<String>> {
    preflight(ctx)?;
    let c = ctx.cfg()?;
    let oracle = (c.domain.n == 3).then(|| OracleOptions { n: c.oracle_n, tol: c.tol_pde, exec: ctx.exec, ..OracleOptions::default() });
    let opts = ContinuationOptions {
        nr: c.nr,
        nz: c.nz,
        t_step0: c.t_step0,
        t_step_min: c.t_step_min,
        solver: ctx.solver()?,
        eigen: ctx.eigen()?,
        census: ctx.census_opts()?,
        verify: Some(VerifyOptions {
            tol_pde: c.tol_pde,
            seeds: c.seeds,
            seed: c.seed,
            census: ctx.census_opts()?,
            solver: ctx.solver()?,
        }),
        oracle,
        field_dir: c.emit_fields.then(|| ctx.out.join("fields")),
        ..ContinuationOptions::default()
    };
    let rec = run_homotopy(&c.domain, &c.nonlinearity, &opts)?;
    ctx.write("continuation.csv", &rec.to_csv())?;
    let mut failures = Vec::new();
    for r in &rec.rejections {
        ctx.say(format!("continue: step to t = {} rejected: {}", r.t, r.reason));
    }
    if let Some(t) = rec.first_failure_t {
        failures.push(format!("continue: step size fell below t_step_min after t = {t}"));
    }
    ctx.say(format!("continue: {} accepted steps, final t = {:?}", rec.steps.len(), rec.final_t()));
    if let Some(f) = &rec.final_checks {
        f.field.write_cpfield(&ctx.out.join("final_solution.cpfield"), 1.0, &[eigen_comment(&f.stability)])?;
        if let Some(v) = &f.verification {
            ctx.write("verification.csv", &v.report.to_csv())?;
            ctx.say(v.report.to_text());
            failures.extend(v.report.checks.iter().filter(|l| !l.pass).map(|l| format!("verify: {}", l.name)));
        }
        match &f.oracle {
            Some(Ok(cmp)) => {
                ctx.write("oracle_comparison.csv", &cmp.to_csv())?;
                failures.extend(oracle_failures(cmp));
            }
            Some(Err(e)) => failures.push(format!("oracle: {e}")),
            None => {}
        }
    }
    if !rec.completed {
        failures.push("continue: t = 1 not reached".into());
    }
    Ok(failures)
}

fn cmd_oracle(ctx: &Context) -> Result<Vec<String>> {
    let c = ctx.cfg()?;
    if c.domain.n != 3 {
        return Err(CliError::Usage(format!("the voxel oracle needs n = 3, the config has n = {}", c.domain.n)));
    }
    let (_, u, rep) = solve(ctx)?;
    if !rep.converged {
        return Ok(solve_failures(&rep));
    }
    let census = find_critical_points(&u, &ctx.census_opts()?)?;
    let v = match &ctx.voxel {
        Some(p) => VoxelField::read(p)?,
        None => {
            let opts = OracleOptions { n: c.oracle_n, tol: c.tol_pde, exec: ctx.exec, ..OracleOptions::default() };
            let s = solve_3d(&c.domain, &c.nonlinearity, &opts)?;
            s.field.write(&ctx.out.join("oracle.cpvox"))?;
            ctx.say(format!("oracle3d: {} Newton steps, residual {:e}", s.newton_iterations, s.residual));
            s.field
        }
    };
    let cmp = compare_with_axisymmetric(&v, &u, &census)?;
    ctx.write("oracle_comparison.csv", &cmp.to_csv())?;
    ctx.say(format!(
        "oracle3d: linf_rel = {:e}, offset = {:.3} cells, witnesses {:e} / {:e}",
        cmp.linf_rel, cmp.cp_offset_cells, cmp.rotation_witness, cmp.mirror_witness
    ));
    Ok(oracle_failures(&cmp))
}

/// Artifacts the report knows about, with the columns that must read `true`.
const ARTIFACTS: &[(&str, &[&str])] = &[
    ("solve_report.csv", &["converged"]),
    ("stability.csv", &["stable"]),
    ("census.csv", &[]),
    ("verification.csv", &["pass"]),
    ("continuation.csv", &["converged"]),
    ("oracle_comparison.csv", &[]),
];

fn cmd_report(ctx: &Context) -> Result<Vec<String>> {
    let mut summary = String::from("artifact,row,column,value\n");
    let mut failures = Vec::new();
    let mut found = 0;
    for (name, flags) in ARTIFACTS {
        let path = ctx.out.join(name);
        let Ok(text) = fs::read_to_string(&path) else { continue };
        found += 1;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        for (row, line) in lines.enumerate() {
            for (col, value) in header.iter().zip(line.split(',')) {
                let _ = writeln!(summary, "{name},{row},{col},{value}");
                if flags.contains(col) && value != "true" {
                    failures.push(format!("report: {name} row {row} has {col} = {value}"));
                }
            }
        }
    }
    let mut heat = None;
    for name in ["solution.cpfield", "final_solution.cpfield"] {
        let path = ctx.out.join(name);
        if path.exists() {
            heat = Some(RawField::read(&path)?);
            found += 1;
            break;
        }
    }
    if found == 0 {
        return Err(CliError::NothingToAggregate(ctx.out.clone()));
    }
    if let Some(raw) = heat {
        let h = raw.rmax / (raw.nr - 1) as f64;
        let mut s = String::from("r,z,u\n");
        for j in 0..raw.nz {
            for i in 0..raw.nr {
                let v = raw.data[j * raw.nr + i];
                if v.is_finite() {
                    let z = raw.zmin + j as f64 * h;
                    let _ = writeln!(s, "{},{},{}", fmt_f64(i as f64 * h), fmt_f64(z), fmt_f64(v));
                }
            }
        }
        ctx.write("heatmap.csv", &s)?;
    }
    ctx.write("summary.csv", &summary)?;
    ctx.say(format!("report: {found} artifacts aggregated, {} failing entries", failures.len()));
    Ok(failures)
}
