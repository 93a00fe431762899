use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::horizon_capacity_cost;
use super::multiperiod::{assemble_multiperiod, decode, MultiPeriodCase, MultiPeriodSolution, StorageMode};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, warm_start, LpSolution, SolveOptions};
use crate::opf::require_optimal;

/// Capacities below this (pu·h) count as "not built".
const ZERO_CAPACITY: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SweepMode {
    /// One problem, repriced and warm-started point after point.
    #[default]
    Sequential,
    /// Independent cold solves on the rayon pool.
    Parallel,
}

#[derive(Clone, Debug, Serialize)]
pub struct SizingResult {
    /// Capacity cost over the calendar life, currency per kWh.
    pub cost_point: f64,
    /// The same cost charged to the horizon.
    pub horizon_cost: f64,
    /// Capacity per storage, pu·h.
    pub z: Vec<f64>,
    pub solution: MultiPeriodSolution,
}

impl SizingResult {
    pub fn total_capacity(&self) -> f64 {
        self.z.iter().sum()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub cost_point: f64,
    /// `Err` carries the failure message; the sweep continues past it.
    pub outcome: std::result::Result<SizingResult, String>,
}

fn finish(
    case: &MultiPeriodCase,
    problem: &super::MultiPeriodProblem,
    cost: f64,
    sol: Result<LpSolution>,
    solver: &SolveOptions,
    assembly: f64,
) -> std::result::Result<(SizingResult, LpSolution), String> {
    let sol = sol.map_err(|e| e.to_string())?;
    require_optimal(&problem.lp, &sol, solver).map_err(|e| e.to_string())?;
    let solution = decode(case, problem, &sol, assembly);
    let days_cost = case
        .storages
        .first()
        .map_or(0.0, |s| horizon_capacity_cost(cost, &case.horizon, s.calendar_life_years));
    Ok((
        SizingResult {
            cost_point: cost,
            horizon_cost: days_cost,
            z: solution.capacity.clone().unwrap_or_default(),
            solution,
        },
        sol,
    ))
}

/// One sizing LP per capacity cost. Costs are charged to the horizon
/// through the calendar life of each storage.
pub fn solve_sizing(
    case: &MultiPeriodCase,
    cost_points: &[f64],
    mode: SweepMode,
    solver: &SolveOptions,
) -> Result<Vec<SweepPoint>> {
    if case.storages.is_empty() {
        return Err(Error::InvalidParameter("sizing needs at least one storage candidate".into()));
    }
    if let Some(c) = cost_points.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::InvalidParameter(format!("capacity cost {c} is not a non-negative number")));
    }
    let started = Instant::now();
    let model = case.linear_model()?;
    let template = assemble_multiperiod(case, &model, StorageMode::Sizing { capacity_cost: Some(0.0) })?;
    let assembly = started.elapsed().as_secs_f64();

    Ok(match mode {
        SweepMode::Sequential => {
            let mut problem = template;
            let mut previous: Option<LpSolution> = None;
            let mut out = Vec::with_capacity(cost_points.len());
            for &cost in cost_points {
                problem.set_capacity_cost(case, cost);
                let sol = match &previous {
                    Some(prev) => warm_start(&problem.lp, prev, solver),
                    None => solve_lp(&problem.lp, solver),
                };
                let outcome = match finish(case, &problem, cost, sol, solver, assembly) {
                    Ok((result, sol)) => {
                        previous = Some(sol);
                        Ok(result)
                    }
                    Err(e) => {
                        log::warn!("sizing at cost {cost} failed: {e}");
                        Err(e)
                    }
                };
                out.push(SweepPoint {
                    cost_point: cost,
                    outcome,
                });
            }
            out
        }
        SweepMode::Parallel => cost_points
            .par_iter()
            .map(|&cost| {
                let mut problem = template.clone();
                problem.set_capacity_cost(case, cost);
                let sol = solve_lp(&problem.lp, solver);
                SweepPoint {
                    cost_point: cost,
                    outcome: finish(case, &problem, cost, sol, solver, assembly).map(|(r, _)| r),
                }
            })
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Revenue {
    /// Operational savings against the run without storage.
    pub revenue: f64,
    /// Capacity cost charged to the horizon.
    pub investment: f64,
    pub profit: f64,
}

/// Revenue of a storage run against a baseline solved on the same
/// scenario without storage.
pub fn compute_revenue(with_storage: &MultiPeriodSolution, baseline: &MultiPeriodSolution) -> Result<Revenue> {
    if with_storage.fingerprint != baseline.fingerprint {
        return Err(Error::ScenarioMismatch {
            left: with_storage.fingerprint.clone(),
            right: baseline.fingerprint.clone(),
        });
    }
    let revenue = baseline.operational_cost - with_storage.operational_cost;
    Ok(Revenue {
        revenue,
        investment: with_storage.storage_cost,
        profit: revenue - with_storage.storage_cost,
    })
}

/// Largest swept cost at which building storage still pays off, i.e. the
/// sizing LP installs capacity with positive profit. `None` when no point
/// qualifies.
pub fn break_even_cost(points: &[SweepPoint], baseline: &MultiPeriodSolution) -> Option<f64> {
    points
        .iter()
        .filter_map(|p| p.outcome.as_ref().ok())
        .filter(|r| r.total_capacity() > ZERO_CAPACITY)
        .filter(|r| {
            compute_revenue(&r.solution, baseline)
                .map(|rev| rev.profit > 1e-9 * baseline.operational_cost.abs().max(1.0))
                .unwrap_or(false)
        })
        .map(|r| r.cost_point)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlacementEntry {
    pub storage: String,
    pub bus: usize,
    pub bus_label: String,
    /// Installed capacity in pu·h and kWh.
    pub capacity: f64,
    pub capacity_kwh: f64,
    pub zero: bool,
}

/// Capacity per candidate, largest first (ties by bus).
pub fn placement_profile(case: &MultiPeriodCase, result: &SizingResult) -> Vec<PlacementEntry> {
    let base_kw = case.net.base.power_kw();
    let mut entries: Vec<PlacementEntry> = case
        .storages
        .iter()
        .zip(&result.z)
        .map(|(s, &z)| PlacementEntry {
            storage: s.label.clone(),
            bus: s.bus,
            bus_label: case.net.buses[s.bus].label.clone(),
            capacity: z,
            capacity_kwh: z * base_kw,
            zero: z <= ZERO_CAPACITY,
        })
        .collect();
    entries.sort_by(|a, b| b.capacity.total_cmp(&a.capacity).then(a.bus.cmp(&b.bus)));
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::test_nets::{branch, network};
    use crate::opf::tests::gen;
    use crate::opf::{Demand, OperatingLimits};
    use crate::storage::{solve_baseline, solve_multiperiod, GeneratorProfile, Horizon, StorageSpec};

    fn candidate(label: &str, bus: usize) -> StorageSpec {
        StorageSpec {
            label: label.into(),
            bus,
            p_rated: 0.5,
            eta_ch: 0.88,
            eta_dis: 0.88,
            e0: 0.0,
            e_min: 0.0,
            e_max: None,
            cost: 0.0,
            calendar_life_years: 1.0,
        }
    }

    /// Slack 0 feeds bus 1 and, through a weak branch, bus 2. Bus 2 has the
    /// PV and the load; the weak branch caps export and import.
    fn congested_case() -> MultiPeriodCase {
        let mut weak = branch(0, 2, 0.01, 0.01);
        weak.current_limit = 0.2;
        let net = network(3, vec![branch(0, 1, 0.01, 0.01), weak]).normalized().unwrap();
        let grid = gen("grid", 0, (-10.0, 10.0), (-10.0, 10.0), 0.0);
        let pv = gen("pv", 2, (0.0, 1.0), (-0.1, 0.1), 1e-4);
        let profiles = vec![
            GeneratorProfile {
                availability: None,
                cost: Some(vec![0.03, 0.03, 0.03, 0.03]),
            },
            GeneratorProfile {
                availability: Some(vec![1.0, 1.0, 0.0, 0.0]),
                cost: None,
            },
        ];
        let mut demand = Vec::new();
        for _ in 0..4 {
            let mut d = Demand::zeros(3);
            d.p[2] = 0.15;
            demand.push(d);
        }
        let limits = OperatingLimits {
            i_max: net.current_limits(),
            ..OperatingLimits::uniform(&net, 0.8, 1.2)
        };
        MultiPeriodCase::new(
            net,
            vec![grid, pv],
            profiles,
            vec![candidate("upstream", 1), candidate("downstream", 2)],
            limits,
            demand,
            1.0,
            Horizon::new(4, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn congestion_pulls_capacity_downstream() {
        let case = congested_case();
        let points = solve_sizing(&case, &[0.1], SweepMode::Sequential, &SolveOptions::default()).unwrap();
        let result = points[0].outcome.as_ref().unwrap();
        let profile = placement_profile(&case, result);
        assert_eq!(profile[0].storage, "downstream");
        assert!(profile[0].capacity > 0.1);
        assert!(profile[1].zero, "{profile:?}");
    }

    #[test]
    fn sweep_is_monotone_and_modes_agree() {
        let case = congested_case();
        let costs: Vec<f64> = (0..8).map(|i| i as f64 * 40.0).collect();
        let opts = SolveOptions::default();
        let seq = solve_sizing(&case, &costs, SweepMode::Sequential, &opts).unwrap();
        let par = solve_sizing(&case, &costs, SweepMode::Parallel, &opts).unwrap();
        let baseline = solve_baseline(&case, &opts).unwrap();
        let mut last = (f64::INFINITY, f64::INFINITY);
        for (a, b) in seq.iter().zip(&par) {
            let (a, b) = (a.outcome.as_ref().unwrap(), b.outcome.as_ref().unwrap());
            let scale = a.solution.objective.abs().max(1.0);
            assert!((a.solution.objective - b.solution.objective).abs() < 1e-7 * scale);
            let rev = compute_revenue(&a.solution, &baseline).unwrap();
            assert!(rev.profit >= -1e-7);
            assert!(a.total_capacity() <= last.0 + 1e-7);
            assert!(rev.revenue <= last.1 + 1e-7);
            last = (a.total_capacity(), rev.revenue);
        }
        let huge = solve_sizing(&case, &[1e7], SweepMode::Sequential, &opts).unwrap();
        let huge = huge[0].outcome.as_ref().unwrap();
        assert!(huge.total_capacity() < ZERO_CAPACITY);
        let idle = compute_revenue(&huge.solution, &baseline).unwrap();
        assert!(idle.revenue.abs() < 1e-7, "{idle:?}");
        assert!(break_even_cost(&seq, &baseline).is_some());
    }

    #[test]
    fn revenue_rejects_other_scenarios() {
        let case = congested_case();
        let opts = SolveOptions::default();
        let a = solve_multiperiod(&case.without_storage(), StorageMode::Fixed, &opts).unwrap();
        let mut other = case.without_storage();
        other.demand[0].p[2] = 0.16;
        let b = solve_multiperiod(&other, StorageMode::Fixed, &opts).unwrap();
        assert!(matches!(compute_revenue(&a, &b), Err(Error::ScenarioMismatch { .. })));
        let zero = compute_revenue(&a, &a).unwrap();
        assert_eq!(zero.revenue, 0.0);
    }
}
