//! Domain homotopy from the ball `B_a` to the target, re-solving at every
//! step from the previous solution.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use crate::domain::{HomotopyFamily, MeridianDomain, Profile};
use crate::error::{Error, Result};
use crate::field::{fmt_f64, Field, Interpolant};
use crate::grid::{Extent, MeridianGrid};
use crate::morse::{find_critical_points, CensusOptions};
use crate::nonlinearity::Nonlinearity;
use crate::oracle3d::{compare_with_axisymmetric, solve_3d, OracleComparison, OracleOptions};
use crate::solver::{newton_solve, AxisymmetricLaplacian, SolverOptions};
use crate::stability::{eigen_comment, is_stable, smallest_eigenvalue, EigenOptions, StabilityReport};
use crate::verify::{check_monotonicity, verify_solution, Verification, VerifyOptions};

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    pub nr: usize,
    pub nz: usize,
    pub t_step0: f64,
    pub t_step_min: f64,
    pub solver: SolverOptions,
    pub eigen: EigenOptions,
    pub census: CensusOptions,
    /// A `λ₁` slope above `jump_factor` times the running median slope plus
    /// `jump_floor` halves the step.
    pub jump_factor: f64,
    pub jump_floor: f64,
    /// Full verification at `t = 1`.
    pub verify: Option<VerifyOptions>,
    /// Voxel comparison at `t = 1` (three dimensions only).
    pub oracle: Option<OracleOptions>,
    /// Accepted fields are written here as CPFIELD files.
    pub field_dir: Option<PathBuf>,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            nr: 65,
            nz: 129,
            t_step0: 0.05,
            t_step_min: 1e-4,
            solver: SolverOptions::default(),
            eigen: EigenOptions::default(),
            census: CensusOptions::default(),
            jump_factor: 10.0,
            jump_floor: 1.0,
            verify: None,
            oracle: None,
            field_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub converged: bool,
    pub lambda1: f64,
    pub cp_count: usize,
    pub m_z: f64,
    pub m_r: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FinalChecks {
    pub field: Field,
    pub stability: StabilityReport,
    pub verification: Option<Verification>,
    pub oracle: Option<std::result::Result<OracleComparison, String>>,
}

#[derive(Debug, Clone)]
pub struct ContinuationRecord {
    pub steps: Vec<StepRecord>,
    pub first_failure_t: Option<f64>,
    pub completed: bool,
    pub rejections: Vec<Rejection>,
    pub final_checks: Option<FinalChecks>,
}

impl ContinuationRecord {
    /// The record without runtimes, which is what reruns must reproduce.
    pub fn to_csv(&self) -> String {
        self.csv(true)
    }

    pub fn to_csv_without_runtime(&self) -> String {
        self.csv(false)
    }

    fn csv(&self, runtime: bool) -> String {
        let mut s = String::from("t,converged,lambda1,cp_count,m_z,m_r,runtime_s\n");
        for st in &self.steps {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                fmt_f64(st.t),
                st.converged,
                fmt_f64(st.lambda1),
                st.cp_count,
                fmt_f64(st.m_z),
                fmt_f64(st.m_r),
                if runtime { fmt_f64(st.runtime_s) } else { String::new() }
            );
        }
        s
    }

    pub fn final_t(&self) -> Option<f64> {
        self.steps.last().map(|s| s.t)
    }
}

/// Interpolates `u_prev`, which lives on `old_domain`, onto `grid_next`.
/// New nodes outside the old domain get 0 and the result is clamped at 0.
pub fn warm_start_transfer(u_prev: &Field, old_domain: &dyn Profile, grid_next: Arc<MeridianGrid>) -> Field {
    let interp = Interpolant::new(u_prev);
    Field::from_fn(grid_next, u_prev.n, |r, z| if old_domain.inside(r, z) { interp.value(r, z).max(0.0) } else { 0.0 })
}

struct Accepted {
    t: f64,
    field: Field,
    stability: StabilityReport,
}

/// Solve, stability and gate evaluation at one `t`.
fn attempt(
    family: &HomotopyFamily,
    extent: Extent,
    nl: &Nonlinearity,
    t: f64,
    prev: Option<(&Field, f64)>,
    opts: &ContinuationOptions,
) -> Result<(Field, StabilityReport, StepRecord)> {
    let start = Instant::now();
    let n = family.target.n;
    let dom = family.at(t);
    let grid = Arc::new(MeridianGrid::build(&dom, extent, opts.nr, opts.nz, t)?);
    let lap = AxisymmetricLaplacian::new(grid.clone(), n)?;
    let u0 = match prev {
        Some((p, tp)) => warm_start_transfer(p, &family.at(tp), grid.clone()),
        None => Field::zeros(grid, n),
    };
    let (u, rep) = newton_solve(&lap, nl, &u0, &opts.solver)?;
    let mut rec = StepRecord {
        t,
        converged: true,
        lambda1: f64::NAN,
        cp_count: 0,
        m_z: f64::NAN,
        m_r: f64::NAN,
        runtime_s: 0.0,
    };
    if !rep.converged {
        return Err(Error::Contract(format!("Newton did not converge (residual {:e})", rep.final_residual)));
    }
    let stab = smallest_eigenvalue(&lap, nl, &u, &opts.eigen)?;
    rec.lambda1 = stab.lambda1;
    let mono = check_monotonicity(&u);
    rec.m_z = mono.m_z;
    rec.m_r = mono.m_r;
    let census = find_critical_points(&u, &opts.census)?;
    rec.cp_count = census.points.len();
    rec.runtime_s = start.elapsed().as_secs_f64();
    if !is_stable(&stab, None) {
        return Err(Error::Contract(format!("unstable: lambda1 = {}", stab.lambda1)));
    }
    if rec.cp_count != 1 {
        return Err(Error::Contract(format!("{} critical points", rec.cp_count)));
    }
    if !mono.pass() {
        return Err(Error::Contract(format!("monotonicity fails: m_z = {:e}, m_r = {:e}", mono.m_z, mono.m_r)));
    }
    Ok((u, stab, rec))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Continues from `t = 0` to `t = 1`, halving the step on every gate failure
/// and doubling it after three accepted steps in a row.
pub fn run_homotopy(target: &MeridianDomain, nl: &Nonlinearity, opts: &ContinuationOptions) -> Result<ContinuationRecord> {
    if !(opts.t_step0 > 0.0 && opts.t_step0 <= 0.1) {
        return Err(Error::Contract(format!("t_step0 must lie in (0, 0.1], got {}", opts.t_step0)));
    }
    if !(opts.t_step_min > 0.0 && opts.t_step_min <= opts.t_step0) {
        return Err(Error::Contract("t_step_min must lie in (0, t_step0]".into()));
    }
    let family = HomotopyFamily::new(target.clone());
    let extent = Extent { r: family.max_extent(), z: family.a };
    if let Some(dir) = &opts.field_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut record =
        ContinuationRecord { steps: Vec::new(), first_failure_t: None, completed: false, rejections: Vec::new(), final_checks: None };

    let dump = |k: usize, acc: &Accepted| -> Result<()> {
        if let Some(dir) = &opts.field_dir {
            let path = dir.join(format!("step_{k:04}.cpfield"));
            acc.field.write_cpfield(&path, acc.t, &[eigen_comment(&acc.stability)])?;
        }
        Ok(())
    };

    let (field, stability, rec) = attempt(&family, extent, nl, 0.0, None, opts)
        .map_err(|e| Error::Setup(format!("the solve on the starting ball failed: {e}")))?;
    let mut last = Accepted { t: 0.0, field, stability };
    record.steps.push(rec);
    dump(0, &last)?;

    let mut step = opts.t_step0;
    let mut streak = 0;
    let mut slopes: Vec<f64> = Vec::new();
    while last.t < 1.0 {
        if step < opts.t_step_min {
            record.first_failure_t = Some(last.t);
            return Ok(record);
        }
        let t = if family.is_constant() || last.t + step >= 1.0 - 1e-12 { 1.0 } else { last.t + step };
        let outcome = attempt(&family, extent, nl, t, Some((&last.field, last.t)), opts).and_then(|(u, stab, rec)| {
            let slope = (stab.lambda1 - last.stability.lambda1).abs() / (t - last.t);
            if !slopes.is_empty() {
                let bound = opts.jump_factor * median(&slopes) + opts.jump_floor;
                if slope > bound {
                    return Err(Error::Contract(format!("lambda1 slope {slope:e} exceeds {bound:e}")));
                }
            }
            Ok((u, stab, rec, slope))
        });
        match outcome {
            Ok((field, stability, rec, slope)) => {
                slopes.push(slope);
                record.steps.push(rec);
                last = Accepted { t, field, stability };
                dump(record.steps.len() - 1, &last)?;
                streak += 1;
                if streak >= 3 {
                    step = (2.0 * step).min(opts.t_step0);
                    streak = 0;
                }
            }
            Err(e) => {
                record.rejections.push(Rejection { t, reason: e.to_string() });
                step *= 0.5;
                streak = 0;
            }
        }
    }
    record.completed = true;

    let u = last.field;
    let verification = match &opts.verify {
        Some(v) => {
            let lap = AxisymmetricLaplacian::new(u.grid.clone(), target.n)?;
            Some(verify_solution(&lap, nl, &u, target.radial_extent(), v)?)
        }
        None => None,
    };
    let oracle = match (&opts.oracle, target.n) {
        (Some(o), 3) => {
            let census = match &verification {
                Some(v) => v.census.clone(),
                None => find_critical_points(&u, &opts.census)?,
            };
            Some(
                solve_3d(target, nl, o)
                    .and_then(|s| compare_with_axisymmetric(&s.field, &u, &census))
                    .map_err(|e| e.to_string()),
            )
        }
        _ => None,
    };
    record.final_checks = Some(FinalChecks { field: u, stability: last.stability, verification, oracle });
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ProfileFunction;

    fn ball_grid(nr: usize, nz: usize) -> Arc<MeridianGrid> {
        let d = MeridianDomain::new(3, ProfileFunction::ball(1.0).unwrap(), "").unwrap();
        Arc::new(MeridianGrid::build(&d, Extent { r: 1.0, z: 1.0 }, nr, nz, 1.0).unwrap())
    }

    #[test]
    fn identical_grid_transfer_is_identity() {
        let d = MeridianDomain::new(3, ProfileFunction::ball(1.0).unwrap(), "").unwrap();
        let g = ball_grid(33, 65);
        let u = Field::from_fn(g.clone(), 3, |r, z| (1.0 - r * r - z * z) * (1.0 + r * z));
        let v = warm_start_transfer(&u, &d, g);
        assert!(u.linf_distance(&v) < 1e-14);
    }

    #[test]
    fn shrinking_domain_resets_new_band() {
        let small = MeridianDomain::new(3, ProfileFunction::ball(0.7).unwrap(), "").unwrap();
        let gs = Arc::new(MeridianGrid::build(&small, Extent { r: 1.0, z: 1.0 }, 33, 65, 1.0).unwrap());
        let u = Field::from_fn(gs, 3, |r, z| 0.49 - r * r - z * z);
        let v = warm_start_transfer(&u, &small, ball_grid(33, 65));
        for k in 0..v.values.len() {
            let (r, z) = v.grid.coords(k);
            if r.hypot(z) > 0.75 {
                assert_eq!(v.values[k], 0.0);
            }
        }
        assert!(v.min() >= 0.0);
    }

    #[test]
    fn refinement_transfer_is_second_order() {
        let f = |r: f64, z: f64| (1.0 - r * r - z * z) * (1.0 + r * r * z);
        let coarse = Field::from_fn(ball_grid(33, 65), 3, f);
        let fine = Field::from_fn(ball_grid(65, 129), 3, f);
        let d = MeridianDomain::new(3, ProfileFunction::ball(1.0).unwrap(), "").unwrap();
        let v = warm_start_transfer(&coarse, &d, fine.grid.clone());
        let h = coarse.grid.h;
        assert!(v.linf_distance(&fine) < 5.0 * h * h, "{}", v.linf_distance(&fine));
    }

    #[test]
    fn ball_target_is_constant_in_t() {
        let d = MeridianDomain::new(3, ProfileFunction::ball(1.0).unwrap(), "").unwrap();
        let nl = Nonlinearity::constant(1.0).unwrap();
        let opts = ContinuationOptions { nr: 33, nz: 65, t_step0: 0.1, ..ContinuationOptions::default() };
        let rec = run_homotopy(&d, &nl, &opts).unwrap();
        assert!(rec.completed);
        assert!(rec.first_failure_t.is_none());
        assert_eq!(rec.final_t(), Some(1.0));
        assert_eq!(rec.steps.len(), 2);
        let l0 = rec.steps[0].lambda1;
        assert!(rec.steps.iter().all(|s| (s.lambda1 - l0).abs() < 1e-7 && s.cp_count == 1));
        assert!(rec.steps.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn rejects_large_initial_step() {
        let d = MeridianDomain::new(3, ProfileFunction::ball(1.0).unwrap(), "").unwrap();
        let nl = Nonlinearity::constant(1.0).unwrap();
        let opts = ContinuationOptions { t_step0: 0.5, ..ContinuationOptions::default() };
        assert!(matches!(run_homotopy(&d, &nl, &opts), Err(Error::Contract(_))));
    }
}
