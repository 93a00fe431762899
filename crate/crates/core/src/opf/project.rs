use num_complex::Complex64;
use serde::Serialize;

use super::fbs::net_injection;
use super::OpfCase;
use crate::error::Result;
use crate::powerflow::{solve_power_flow, PowerFlowOptions};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LimitViolation {
    Undervoltage { bus: usize, value: f64, limit: f64 },
    Overvoltage { bus: usize, value: f64, limit: f64 },
    Overcurrent { branch: usize, value: f64, limit: f64 },
}

impl LimitViolation {
    pub fn excess(&self) -> f64 {
        match *self {
            LimitViolation::Undervoltage { value, limit, .. } => limit - value,
            LimitViolation::Overvoltage { value, limit, .. }
            | LimitViolation::Overcurrent { value, limit, .. } => value - limit,
        }
    }
}

/// Exact power flow at a fixed dispatch.
#[derive(Clone, Debug, Serialize)]
pub struct ProjectionReport {
    pub voltages: Vec<f64>,
    pub branch_currents: Vec<f64>,
    pub branch_losses: Vec<f64>,
    pub total_loss: f64,
    /// Active and reactive power the slack delivers to the rest of the
    /// network (losses included, slack-bus generators and loads excluded).
    pub slack_p: f64,
    pub slack_q: f64,
    pub violations: Vec<LimitViolation>,
    /// Mean over non-slack buses of `|v_lp - |v_exact||`.
    pub voltage_mae: f64,
    pub max_voltage_error: f64,
}

impl ProjectionReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Fixes `p_gen`/`q_gen`, lets the slack balance, and compares the exact
/// state with the LP's voltages and limits.
pub fn project_dispatch(
    case: &OpfCase,
    p_gen: &[f64],
    q_gen: &[f64],
    lp_voltages: &[f64],
) -> Result<ProjectionReport> {
    let slack = case.bibc.slack();
    let inj = net_injection(case, p_gen, q_gen);
    let pf = solve_power_flow(
        &case.net,
        &case.bibc,
        &inj,
        Complex64::new(case.v_s, 0.0),
        PowerFlowOptions::default(),
    )?;
    let voltages = pf.voltages.magnitudes();
    let currents: Vec<f64> = pf.branch_currents.iter().map(|i| i.norm()).collect();
    let tol = 1e-9;
    let mut violations = Vec::new();
    for (j, &v) in voltages.iter().enumerate() {
        if j == slack {
            continue;
        }
        if v < case.limits.v_min[j] - tol {
            violations.push(LimitViolation::Undervoltage {
                bus: j,
                value: v,
                limit: case.limits.v_min[j],
            });
        }
        if v > case.limits.v_max[j] + tol {
            violations.push(LimitViolation::Overvoltage {
                bus: j,
                value: v,
                limit: case.limits.v_max[j],
            });
        }
    }
    for (b, &i) in currents.iter().enumerate() {
        if i > case.limits.i_max[b] + tol {
            violations.push(LimitViolation::Overcurrent {
                branch: b,
                value: i,
                limit: case.limits.i_max[b],
            });
        }
    }
    let errors: Vec<f64> = (0..voltages.len())
        .filter(|&j| j != slack)
        .map(|j| (lp_voltages[j] - voltages[j]).abs())
        .collect();
    let voltage_mae = if errors.is_empty() {
        0.0
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    Ok(ProjectionReport {
        max_voltage_error: errors.iter().copied().fold(0.0, f64::max),
        voltages,
        branch_currents: currents,
        branch_losses: pf.branch_losses,
        total_loss: pf.total_loss,
        slack_p: pf.slack_power.re,
        slack_q: pf.slack_power.im,
        violations,
        voltage_mae,
    })
}
