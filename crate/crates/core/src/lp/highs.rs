use std::ffi::{c_void, CString};
use std::time::Instant;

use highs_sys::*;

use super::{Basis, LpProblem, LpSolution, LpSolver, LpStatus, Method, SolveOptions};
use crate::error::{Error, Result};

/// HiGHS through its C API.
#[derive(Clone, Copy, Debug, Default)]
pub struct HighsSolver;

struct Handle(*mut c_void);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { Highs_destroy(self.0) }
    }
}

impl Handle {
    fn new() -> Self {
        Self(unsafe { Highs_create() })
    }

    fn check(status: HighsInt, what: &str) -> Result<()> {
        if status == kHighsStatusError {
            Err(Error::Solver(format!("HiGHS rejected {what}")))
        } else {
            Ok(())
        }
    }

    fn set_bool(&self, name: &str, value: bool) -> Result<()> {
        let c = CString::new(name).expect("option name");
        Self::check(
            unsafe { Highs_setBoolOptionValue(self.0, c.as_ptr(), value as HighsInt) },
            name,
        )
    }

    fn set_int(&self, name: &str, value: HighsInt) -> Result<()> {
        let c = CString::new(name).expect("option name");
        Self::check(unsafe { Highs_setIntOptionValue(self.0, c.as_ptr(), value) }, name)
    }

    fn set_double(&self, name: &str, value: f64) -> Result<()> {
        let c = CString::new(name).expect("option name");
        Self::check(unsafe { Highs_setDoubleOptionValue(self.0, c.as_ptr(), value) }, name)
    }

    fn set_string(&self, name: &str, value: &str) -> Result<()> {
        let c = CString::new(name).expect("option name");
        let v = CString::new(value).expect("option value");
        Self::check(
            unsafe { Highs_setStringOptionValue(self.0, c.as_ptr(), v.as_ptr()) },
            name,
        )
    }

    fn int_info(&self, name: &str) -> i64 {
        let c = CString::new(name).expect("info name");
        let mut v: HighsInt = 0;
        unsafe { Highs_getIntInfoValue(self.0, c.as_ptr(), &mut v) };
        v as i64
    }
}

fn to_int(n: usize, what: &str) -> Result<HighsInt> {
    HighsInt::try_from(n).map_err(|_| Error::Solver(format!("{what} exceeds the HiGHS index range")))
}

fn load(handle: &Handle, problem: &LpProblem) -> Result<()> {
    let n = problem.num_vars();
    let m = problem.num_rows();
    let mut row_lower = Vec::with_capacity(m);
    let mut row_upper = Vec::with_capacity(m);
    let mut start = Vec::with_capacity(m + 1);
    let mut index = Vec::with_capacity(problem.ineq.nonzeros() + problem.eq.nonzeros());
    let mut value = Vec::with_capacity(index.capacity());
    for (block, equality) in [(&problem.ineq, false), (&problem.eq, true)] {
        let (rs, cols, vals) = block.raw();
        for r in 0..block.rows() {
            start.push(to_int(index.len(), "nonzero count")?);
            for k in rs[r]..rs[r + 1] {
                index.push(cols[k] as HighsInt);
                value.push(vals[k]);
            }
            let b = block.rhs()[r];
            row_lower.push(if equality { b } else { -f64::INFINITY });
            row_upper.push(b);
        }
    }
    start.push(to_int(index.len(), "nonzero count")?);
    let status = unsafe {
        Highs_passLp(
            handle.0,
            to_int(n, "column count")?,
            to_int(m, "row count")?,
            to_int(index.len(), "nonzero count")?,
            kHighsMatrixFormatRowwise,
            kHighsObjSenseMinimize,
            problem.objective_offset,
            problem.cost().as_ptr(),
            problem.lower().as_ptr(),
            problem.upper().as_ptr(),
            row_lower.as_ptr(),
            row_upper.as_ptr(),
            start.as_ptr(),
            index.as_ptr(),
            value.as_ptr(),
        )
    };
    Handle::check(status, "the model")
}

fn configure(handle: &Handle, options: &SolveOptions) -> Result<()> {
    handle.set_bool("output_flag", false)?;
    handle.set_string(
        "solver",
        match options.method {
            Method::Simplex => "simplex",
            Method::InteriorPoint => "ipm",
            Method::Choose => "choose",
        },
    )?;
    handle.set_double("primal_feasibility_tolerance", options.tolerance)?;
    handle.set_double("dual_feasibility_tolerance", options.tolerance)?;
    if let Some(limit) = options.iteration_limit {
        let limit = HighsInt::try_from(limit).unwrap_or(HighsInt::MAX);
        handle.set_int("simplex_iteration_limit", limit)?;
        handle.set_int("ipm_iteration_limit", limit)?;
    }
    if let Some(t) = options.time_limit_seconds {
        handle.set_double("time_limit", t)?;
    }
    Ok(())
}

/// Dual objective from HiGHS duals: each row or column dual multiplies the
/// bound its sign says is active.
fn dual_objective(
    problem: &LpProblem,
    col_value: &[f64],
    col_dual: &[f64],
    row_value: &[f64],
    row_dual: &[f64],
) -> f64 {
    let pick = |dual: f64, lo: f64, up: f64, primal: f64| {
        let bound = if dual > 0.0 { lo } else { up };
        dual * if bound.is_finite() { bound } else { primal }
    };
    let mut total = problem.objective_offset;
    let ineq_rows = problem.ineq.rows();
    for (r, (&y, &ax)) in row_dual.iter().zip(row_value).enumerate() {
        let (lo, up) = if r < ineq_rows {
            (-f64::INFINITY, problem.ineq.rhs()[r])
        } else {
            let b = problem.eq.rhs()[r - ineq_rows];
            (b, b)
        };
        total += pick(y, lo, up, ax);
    }
    for j in 0..col_dual.len() {
        total += pick(col_dual[j], problem.lower()[j], problem.upper()[j], col_value[j]);
    }
    total
}

fn run(problem: &LpProblem, options: &SolveOptions, basis: Option<&Basis>) -> Result<LpSolution> {
    problem.validate()?;
    let started = Instant::now();
    let n = problem.num_vars();
    let m = problem.num_rows();
    if n == 0 {
        let feasible = problem.max_violation(&[]) <= options.tolerance;
        let mut sol = LpSolution::new(problem, if feasible { LpStatus::Optimal } else { LpStatus::Infeasible });
        if feasible {
            sol.objective = Some(problem.objective_offset);
            sol.dual_objective = Some(problem.objective_offset);
            sol.primal = Some(Vec::new());
        }
        return Ok(sol);
    }

    let handle = Handle::new();
    configure(&handle, options)?;
    load(&handle, problem)?;
    if let Some(b) = basis {
        if b.columns.len() == n && b.rows.len() == m {
            let status = unsafe { Highs_setBasis(handle.0, b.columns.as_ptr(), b.rows.as_ptr()) };
            if status == kHighsStatusError {
                log::debug!("HiGHS refused the warm-start basis; solving cold");
            }
        }
    }
    Handle::check(unsafe { Highs_run(handle.0) }, "the solve")?;
    let mut model_status = unsafe { Highs_getModelStatus(handle.0) };
    if model_status == kHighsModelStatusUnboundedOrInfeasible {
        // Presolve could not tell which; let the simplex decide.
        handle.set_string("presolve", "off")?;
        handle.set_string("solver", "simplex")?;
        Handle::check(unsafe { Highs_run(handle.0) }, "the solve")?;
        model_status = unsafe { Highs_getModelStatus(handle.0) };
    }
    let status = match model_status {
        s if s == kHighsModelStatusOptimal => LpStatus::Optimal,
        s if s == kHighsModelStatusInfeasible => LpStatus::Infeasible,
        s if s == kHighsModelStatusUnbounded => LpStatus::Unbounded,
        s if s == kHighsModelStatusUnboundedOrInfeasible => LpStatus::Infeasible,
        s if s == kHighsModelStatusIterationLimit || s == kHighsModelStatusTimeLimit => {
            LpStatus::IterationLimit
        }
        other => return Err(Error::Solver(format!("HiGHS finished with model status {other}"))),
    };

    let mut sol = LpSolution::new(problem, status);
    sol.iterations = (handle.int_info("simplex_iteration_count").max(0)
        + handle.int_info("ipm_iteration_count").max(0)) as u64;
    if status == LpStatus::Optimal {
        let mut col_value = vec![0.0; n];
        let mut col_dual = vec![0.0; n];
        let mut row_value = vec![0.0; m];
        let mut row_dual = vec![0.0; m];
        unsafe {
            Highs_getSolution(
                handle.0,
                col_value.as_mut_ptr(),
                col_dual.as_mut_ptr(),
                row_value.as_mut_ptr(),
                row_dual.as_mut_ptr(),
            );
        }
        let mut cols = vec![0 as HighsInt; n];
        let mut rows = vec![0 as HighsInt; m];
        let basis_ok = unsafe { Highs_getBasis(handle.0, cols.as_mut_ptr(), rows.as_mut_ptr()) };
        if basis_ok != kHighsStatusError {
            sol.basis = Some(Basis { columns: cols, rows });
        }
        sol.objective = Some(unsafe { Highs_getObjectiveValue(handle.0) });
        sol.dual_objective = Some(dual_objective(problem, &col_value, &col_dual, &row_value, &row_dual));
        sol.primal = Some(col_value);
    }
    sol.seconds = started.elapsed().as_secs_f64();
    Ok(sol)
}

impl LpSolver for HighsSolver {
    fn solve(&self, problem: &LpProblem, options: &SolveOptions) -> Result<LpSolution> {
        run(problem, options, None)
    }

    fn solve_warm(
        &self,
        problem: &LpProblem,
        previous: &LpSolution,
        options: &SolveOptions,
    ) -> Result<LpSolution> {
        previous.same_shape(problem)?;
        run(problem, options, previous.basis.as_ref())
    }
}
