use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::{Configuration, Scenario};
use crate::error::{Error, Result};
use crate::lp::SolveOptions;
use crate::opf::{project_dispatch, run_fbs_opf_iterations};
use crate::storage::{
    break_even_cost, compute_revenue, placement_profile, solve_baseline, solve_multiperiod, solve_sizing,
    MultiPeriodCase, PlacementEntry, StorageMode, SweepMode,
};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::parse(path, e)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub h: usize,
    pub objective: f64,
    /// Mean absolute gap between LP and exact voltages, non-slack buses.
    pub voltage_mae: f64,
    pub max_voltage_error: f64,
    /// Limit violations of the exact state at this iteration's dispatch.
    pub violations: usize,
    pub voltage_change: f64,
    /// `|J(h) - J(h_max)| / |J(h_max)|`.
    pub objective_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub scenario_hash: String,
    pub period: usize,
    pub rows: Vec<ConvergenceRow>,
    pub seconds: f64,
}

impl ConvergenceReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs `h_max` FBS-OPF iterations on one period and projects every
/// iteration's dispatch onto the exact power flow.
pub fn run_convergence_study(
    scenario: &Scenario,
    h_max: usize,
    period: usize,
    solver: &SolveOptions,
) -> Result<ConvergenceReport> {
    let started = Instant::now();
    let case = scenario.single_period(period)?;
    let sol = run_fbs_opf_iterations(&case, h_max, solver)?;
    let last = sol.history.last().map_or(f64::NAN, |r| r.objective);
    let rows = sol
        .history
        .iter()
        .map(|r| {
            let rep = project_dispatch(&case, &r.p_gen, &r.q_gen, &r.lp_voltages)?;
            Ok(ConvergenceRow {
                h: r.h,
                objective: r.objective,
                voltage_mae: rep.voltage_mae,
                max_voltage_error: rep.max_voltage_error,
                violations: rep.violations.len(),
                voltage_change: r.voltage_change,
                objective_gap: ((r.objective - last) / last).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport {
        scenario_hash: scenario.hash(),
        period,
        rows,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ViabilityRow {
    /// Capacity cost over the calendar life, currency per kWh.
    pub cost: f64,
    /// `optimal`, or the failure message.
    pub status: String,
    pub capacity_kwh: f64,
    pub capacity_by_storage_kwh: Vec<f64>,
    pub objective: f64,
    pub operational_cost: f64,
    pub investment: f64,
    pub revenue: f64,
    pub profit: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViabilityReport {
    pub configuration: Configuration,
    pub scenario_hash: String,
    pub seed: u64,
    pub storage_labels: Vec<String>,
    /// Operational cost without storage.
    pub baseline_cost: f64,
    pub rows: Vec<ViabilityRow>,
    /// Largest cost point with positive profit.
    pub break_even: Option<f64>,
    /// Capacity per candidate at the most expensive cost point that still
    /// builds storage (the high-cost regime).
    pub placement: Vec<PlacementEntry>,
    pub seconds: f64,
}

impl ViabilityReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let mut head: Vec<String> = [
            "configuration",
            "cost_eur_per_kwh",
            "status",
            "capacity_kwh",
            "objective",
            "operational_cost",
            "investment",
            "revenue",
            "profit",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        head.extend(self.storage_labels.iter().map(|l| format!("z_{l}_kwh")));
        w.write_record(&head).map_err(csv_err(path))?;
        for r in &self.rows {
            let mut rec = vec![
                self.configuration.to_string(),
                r.cost.to_string(),
                r.status.clone(),
                r.capacity_kwh.to_string(),
                r.objective.to_string(),
                r.operational_cost.to_string(),
                r.investment.to_string(),
                r.revenue.to_string(),
                r.profit.to_string(),
            ];
            rec.extend(r.capacity_by_storage_kwh.iter().map(|z| z.to_string()));
            w.write_record(&rec).map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_placement_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        for p in &self.placement {
            w.serialize(p).map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Baseline, cost sweep, break-even and placement for one storage layout.
pub fn run_viability_study(
    scenario: &Scenario,
    configuration: Configuration,
    cost_points: &[f64],
    terminal_soc: bool,
    mode: SweepMode,
    solver: &SolveOptions,
) -> Result<ViabilityReport> {
    let started = Instant::now();
    let configured = scenario.with_configuration(configuration, 0.0);
    let mut case = configured.to_case()?;
    case.terminal_soc = terminal_soc;
    let baseline = solve_baseline(&case, solver)?;
    let points = solve_sizing(&case, cost_points, mode, solver)?;
    let base_kw = case.net.base.power_kw();
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        rows.push(match &p.outcome {
            Ok(r) => {
                let rev = compute_revenue(&r.solution, &baseline)?;
                ViabilityRow {
                    cost: p.cost_point,
                    status: "optimal".into(),
                    capacity_kwh: r.total_capacity() * base_kw,
                    capacity_by_storage_kwh: r.z.iter().map(|z| z * base_kw).collect(),
                    objective: r.solution.objective,
                    operational_cost: r.solution.operational_cost,
                    investment: rev.investment,
                    revenue: rev.revenue,
                    profit: rev.profit,
                }
            }
            Err(msg) => ViabilityRow {
                cost: p.cost_point,
                status: msg.clone(),
                capacity_kwh: f64::NAN,
                capacity_by_storage_kwh: vec![f64::NAN; case.storages.len()],
                objective: f64::NAN,
                operational_cost: f64::NAN,
                investment: f64::NAN,
                revenue: f64::NAN,
                profit: f64::NAN,
            },
        });
    }
    let placement = points
        .iter()
        .filter_map(|p| p.outcome.as_ref().ok())
        .filter(|r| r.total_capacity() > 1e-7)
        .max_by(|a, b| a.cost_point.total_cmp(&b.cost_point))
        .map(|r| placement_profile(&case, r))
        .unwrap_or_default();
    Ok(ViabilityReport {
        configuration,
        scenario_hash: scenario.hash(),
        seed: scenario.document.seed,
        storage_labels: case.storages.iter().map(|s| s.label.clone()).collect(),
        baseline_cost: baseline.operational_cost,
        rows,
        break_even: break_even_cost(&points, &baseline),
        placement,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RuntimeRow {
    pub steps: usize,
    pub variables: usize,
    pub rows: usize,
    pub nonzeros: usize,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RuntimeReport {
    pub rows: Vec<RuntimeRow>,
    /// Slope of `ln(total_seconds)` against `ln(steps)`.
    pub slope: f64,
}

impl RuntimeReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Solves the sizing LP (each storage at its own cost) on the first `N`
/// periods for every `N` in `steps`.
pub fn benchmark_runtime(case: &MultiPeriodCase, steps: &[usize], solver: &SolveOptions) -> Result<RuntimeReport> {
    let mode = if case.storages.is_empty() {
        StorageMode::Fixed
    } else {
        StorageMode::Sizing { capacity_cost: None }
    };
    let mut rows = Vec::with_capacity(steps.len());
    for &n in steps {
        let sub = case.truncated(n)?;
        let started = Instant::now();
        let sol = solve_multiperiod(&sub, mode, solver)?;
        rows.push(RuntimeRow {
            steps: n,
            variables: sol.variables,
            rows: sol.rows,
            nonzeros: sol.nonzeros,
            assembly_seconds: sol.assembly_seconds,
            solve_seconds: sol.solve_seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        });
    }
    let slope = if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.steps as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.total_seconds.max(1e-9)).collect();
        loglog_slope(&x, &y)
    } else {
        f64::NAN
    };
    Ok(RuntimeReport { rows, slope })
}

/// Run metadata written next to every report.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
    /// Conventions behind the reported numbers.
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, scenario: &Scenario, parameters: serde_json::Value) -> Self {
        Self {
            tool: "fbsopf".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            scenario_hash: scenario.hash(),
            seed: scenario.document.seed,
            parameters,
            outputs: Vec::new(),
            notes: vec![
                "storage cost per horizon = cost * horizon_days / (calendar_life_years * 365)".into(),
                "revenue = baseline operational cost - operational cost with storage; profit = revenue - investment"
                    .into(),
            ],
        }
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::parse(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [24.0, 96.0, 384.0, 744.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert!((loglog_slope(&x, &y) - 1.7).abs() < 1e-12);
    }
}
