use num_complex::Complex64;
use serde::Serialize;

use super::{assemble_single_period, require_optimal, OpfCase};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, warm_start, LpSolution, SolveOptions, VarKind, VarTag};
use crate::powerflow::{backward_voltage_update, nodal_currents, ComplexVoltageState, InjectionSet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FbsOpfOptions {
    /// Stop once the mean absolute voltage update is at most this.
    pub epsilon: f64,
    pub h_max: usize,
    pub solver: SolveOptions,
}

impl Default for FbsOpfOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            h_max: 4,
            solver: SolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub h: usize,
    pub objective: f64,
    /// LP voltage magnitudes, slack included (index 0 holds `v_s`).
    pub lp_voltages: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    /// Mean absolute change of the complex voltages produced by this
    /// iteration's sweep.
    pub voltage_change: f64,
    pub lp_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DispatchSolution {
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub loss_p: Vec<f64>,
    pub loss_q: Vec<f64>,
    /// LP voltage magnitudes for every bus; the slack entry is `v_s`.
    pub voltages: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub final_change: f64,
    pub converged: bool,
    #[serde(skip)]
    pub voltage_state: ComplexVoltageState,
    pub history: Vec<IterationRecord>,
}

fn decode(case: &OpfCase, sol: &LpSolution) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let get = |kind, i| sol.value(&VarTag::new(kind, i, None)).unwrap_or(0.0);
    let ng = case.generators.len();
    let l = case.net.branch_count();
    let mut v = vec![case.v_s; case.net.bus_count()];
    for j in case.bibc.reduced_buses() {
        v[j] = get(VarKind::Voltage, j);
    }
    (
        (0..ng).map(|g| get(VarKind::PGen, g)).collect(),
        (0..ng).map(|g| get(VarKind::QGen, g)).collect(),
        (0..l).map(|b| get(VarKind::LossP, b)).collect(),
        (0..l).map(|b| get(VarKind::LossQ, b)).collect(),
        v,
    )
}

/// Net bus injections `C_g g - d` for a dispatch.
pub(crate) fn net_injection(case: &OpfCase, p_gen: &[f64], q_gen: &[f64]) -> InjectionSet {
    let mut inj = InjectionSet {
        p: case.demand.p.iter().map(|d| -d).collect(),
        q: case.demand.q.iter().map(|d| -d).collect(),
    };
    for (g, spec) in case.generators.iter().enumerate() {
        inj.p[spec.bus] += p_gen[g];
        inj.q[spec.bus] += q_gen[g];
    }
    inj
}

/// Runs exactly `h` iterations, or stops early when `stop` says so.
fn iterate(
    case: &OpfCase,
    h_max: usize,
    solver: &SolveOptions,
    stop: impl Fn(f64) -> bool,
) -> Result<DispatchSolution> {
    if h_max == 0 {
        return Err(Error::InvalidParameter("h_max must be at least 1".into()));
    }
    let v_s = Complex64::new(case.v_s, 0.0);
    let mut state = ComplexVoltageState::flat(case.net.bus_count(), case.bibc.slack(), v_s);
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut previous: Option<LpSolution> = None;
    let mut last = None;
    for h in 1..=h_max {
        let model = case.linear_model(&state.magnitudes())?;
        let lp = assemble_single_period(case, &model)?;
        let sol = match &previous {
            Some(prev) => warm_start(&lp, prev, solver)?,
            None => solve_lp(&lp, solver)?,
        };
        require_optimal(&lp, &sol, solver)?;
        let (p_gen, q_gen, loss_p, loss_q, v) = decode(case, &sol);

        let inj = net_injection(case, &p_gen, &q_gen);
        let currents = nodal_currents(&state, &inj)?;
        let next = backward_voltage_update(&case.net, &case.bibc, &currents, v_s)?;
        let change = next.mean_abs_change(&state);
        state = next;

        history.push(IterationRecord {
            h,
            objective: sol.objective.unwrap_or(f64::NAN),
            lp_voltages: v.clone(),
            p_gen: p_gen.clone(),
            q_gen: q_gen.clone(),
            voltage_change: change,
            lp_seconds: sol.seconds,
        });
        let done = stop(change);
        last = Some((p_gen, q_gen, loss_p, loss_q, v, sol.objective.unwrap_or(f64::NAN), change, done));
        previous = Some(sol);
        if done {
            break;
        }
    }
    let (p_gen, q_gen, loss_p, loss_q, voltages, objective, final_change, converged) =
        last.expect("at least one iteration");
    Ok(DispatchSolution {
        p_gen,
        q_gen,
        loss_p,
        loss_q,
        voltages,
        objective,
        iterations: history.len(),
        final_change,
        converged,
        voltage_state: state,
        history,
    })
}

/// Iterative FBS-OPF: LP, forward currents, backward voltages, repeated
/// until the mean voltage update is at most `epsilon` or `h_max` LPs have
/// been solved. Running out of iterations is an error only when the updates
/// never shrank.
pub fn run_fbs_opf(case: &OpfCase, options: &FbsOpfOptions) -> Result<DispatchSolution> {
    if !(options.epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {}",
            options.epsilon
        )));
    }
    let eps = options.epsilon;
    let sol = iterate(case, options.h_max, &options.solver, |c| c <= eps)?;
    if !sol.converged && sol.history.len() > 1 {
        let shrinking = sol
            .history
            .windows(2)
            .any(|w| w[1].voltage_change < w[0].voltage_change);
        if !shrinking {
            return Err(Error::NotConverging {
                iterations: sol.iterations,
            });
        }
    }
    Ok(sol)
}

/// Exactly `h` iterations with no stopping test, for convergence studies.
pub fn run_fbs_opf_iterations(case: &OpfCase, h: usize, solver: &SolveOptions) -> Result<DispatchSolution> {
    iterate(case, h, solver, |_| false)
}
