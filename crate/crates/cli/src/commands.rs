use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use num_complex::Complex64;
use serde_json::json;

use fbsopf::lp::{write_lp_format, RowFamily};
use nalgebra::DMatrix;
use fbsopf::opf::{assemble_single_period, project_dispatch, run_fbs_opf, FbsOpfOptions};
use fbsopf::powerflow::{solve_power_flow, PowerFlowOptions};
use fbsopf::scenario::{
    benchmark_runtime, load_scenario, run_convergence_study, run_viability_study, write_manifest, Manifest, Scenario,
};
use fbsopf::storage::{
    compute_revenue, horizon_capacity_cost, placement_profile, solve_baseline, solve_multiperiod, MultiPeriodCase,
    MultiPeriodSolution, SizingResult, StorageMode, SweepMode,
};
use fbsopf::Error;

use crate::{Cli, Command, Common, Layout};

/// Collects report files and writes the manifest last.
struct Output {
    dir: Option<PathBuf>,
    manifest: Manifest,
}

impl Output {
    fn new(common: &Common, command: &str, scenario: &Scenario, params: serde_json::Value) -> Result<Self> {
        if let Some(dir) = &common.out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(Self {
            dir: common.out.clone(),
            manifest: Manifest::new(command, scenario, params),
        })
    }

    /// Path for `name` when writing is enabled; records it in the manifest.
    fn file(&mut self, name: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        self.manifest.outputs.push(name.to_string());
        Some(dir.join(name))
    }

    fn table(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let Some(path) = self.file(name) else { return Ok(()) };
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(dir) = &self.dir {
            write_manifest(dir, &self.manifest)?;
            println!("reports written to {}", dir.display());
        }
        Ok(())
    }
}

fn strings<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidParameter(msg.into()).into()
}

fn load(common: &Common) -> Result<Scenario> {
    let s = load_scenario(&common.scenario)?;
    Ok(match common.seed {
        Some(seed) if seed != s.document.seed => s.with_seed(seed)?,
        _ => s,
    })
}

pub fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let scenario = load(common)?;
    match &cli.command {
        Command::Validate => validate(common, &scenario),
        Command::Powerflow { period } => powerflow(common, &scenario, *period),
        Command::Opf { period } => opf(common, &scenario, *period),
        Command::Mpopf => mpopf(common, &scenario),
        Command::Size { layout, cost } => size(common, &scenario, *layout, *cost),
        Command::Sweep {
            layout,
            costs,
            cost_min,
            cost_max,
            points,
            parallel,
        } => {
            let costs = if costs.is_empty() {
                cost_range(*cost_min, *cost_max, *points)?
            } else {
                costs.clone()
            };
            sweep(common, &scenario, layout, &costs, *parallel)
        }
        Command::ConvergenceStudy { period } => convergence(common, &scenario, *period),
        Command::Bench { steps, layout } => bench(common, &scenario, steps, *layout),
        Command::Linearize { period, dump, lp } => linearize(common, &scenario, *period, dump.as_deref(), lp.as_deref()),
    }
}

fn cost_range(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(min <= max) {
        return Err(invalid(format!("need points >= 1 and cost_min <= cost_max, got {points} points on [{min}, {max}]")));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) / (points - 1) as f64;
    Ok((0..points).map(|i| min + step * i as f64).collect())
}

fn validate(common: &Common, s: &Scenario) -> Result<()> {
    let case = s.to_case()?;
    let d = &s.document;
    println!("scenario   {}", d.name);
    println!("grid       {} ({} buses, {} branches)", s.net.name, s.net.bus_count(), s.net.branch_count());
    println!("horizon    {} x {} h from {}", d.horizon.steps, d.horizon.hours, d.horizon.start);
    println!("devices    {} generators, {} storages", case.generators.len(), case.storages.len());
    println!("seed       {}", d.seed);
    println!("hash       {}", s.hash());
    let out = Output::new(common, "validate", s, json!({}))?;
    out.finish()
}

fn powerflow(common: &Common, s: &Scenario, period: usize) -> Result<()> {
    let case = s.single_period(period)?;
    let slack = case.bibc.slack();
    let p_gen: Vec<f64> = case
        .generators
        .iter()
        .map(|g| if g.bus == slack { 0.0 } else { g.p_max })
        .collect();
    let q_gen = vec![0.0; case.generators.len()];
    let inj = case.injections(&p_gen, &q_gen);
    let pf = solve_power_flow(
        &case.net,
        &case.bibc,
        &inj,
        Complex64::new(case.v_s, 0.0),
        PowerFlowOptions::default(),
    )?;
    let kw = case.net.base.power_kw();
    let amps = case.net.base.current_a();
    let mags = pf.voltages.magnitudes();
    let (vmin, vmax) = mags.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    println!("period {period} ({}): converged in {} sweeps", s.timestamp(period), pf.iterations);
    println!("slack supplies {:.3} kW, {:.3} kvar", pf.slack_power.re * kw, pf.slack_power.im * kw);
    println!("losses {:.3} kW; voltage range [{vmin:.5}, {vmax:.5}] pu", pf.total_loss * kw);

    let mut out = Output::new(common, "powerflow", s, json!({ "period": period }))?;
    let buses: Vec<Vec<String>> = case
        .net
        .buses
        .iter()
        .zip(pf.voltages.voltages())
        .map(|(b, v)| {
            vec![
                b.id.to_string(),
                b.label.clone(),
                v.norm().to_string(),
                v.arg().to_degrees().to_string(),
                (v.norm() * b.base_voltage).to_string(),
            ]
        })
        .collect();
    out.table("buses.csv", &strings(["bus", "label", "v_pu", "angle_deg", "v_volt"]), &buses)?;
    let branches: Vec<Vec<String>> = case
        .net
        .branches
        .iter()
        .enumerate()
        .map(|(i, br)| {
            let current = pf.branch_currents[i].norm();
            vec![
                br.label.clone(),
                case.net.buses[br.from_bus].label.clone(),
                case.net.buses[br.to_bus].label.clone(),
                (current * amps).to_string(),
                (br.current_limit * amps).to_string(),
                (pf.branch_losses[i] * kw).to_string(),
            ]
        })
        .collect();
    out.table(
        "branches.csv",
        &strings(["branch", "from", "to", "current_a", "limit_a", "loss_kw"]),
        &branches,
    )?;
    out.finish()
}

fn opf(common: &Common, s: &Scenario, period: usize) -> Result<()> {
    let case = s.single_period(period)?;
    let options = FbsOpfOptions {
        epsilon: common.epsilon,
        h_max: common.h_max,
        solver: common.solver(),
    };
    let sol = run_fbs_opf(&case, &options)?;
    let rep = project_dispatch(&case, &sol.p_gen, &sol.q_gen, &sol.voltages)?;
    let kw = case.net.base.power_kw();
    println!(
        "objective {:.6} after {} iterations ({}converged, last update {:.2e} pu)",
        sol.objective,
        sol.iterations,
        if sol.converged { "" } else { "not " },
        sol.final_change
    );
    println!(
        "exact projection: voltage MAE {:.3e} pu, max error {:.3e} pu, {} limit violations",
        rep.voltage_mae,
        rep.max_voltage_error,
        rep.violations.len()
    );
    for v in &rep.violations {
        println!("  {v:?}");
    }

    let params = json!({ "period": period, "epsilon": common.epsilon, "h_max": common.h_max });
    let mut out = Output::new(common, "opf", s, params)?;
    let dispatch: Vec<Vec<String>> = case
        .generators
        .iter()
        .enumerate()
        .map(|(g, spec)| {
            vec![
                spec.label.clone(),
                case.net.buses[spec.bus].label.clone(),
                (sol.p_gen[g] * kw).to_string(),
                (sol.q_gen[g] * kw).to_string(),
                (spec.p_max * kw).to_string(),
            ]
        })
        .collect();
    out.table(
        "dispatch.csv",
        &strings(["generator", "bus", "p_kw", "q_kvar", "p_available_kw"]),
        &dispatch,
    )?;
    let voltages: Vec<Vec<String>> = case
        .net
        .buses
        .iter()
        .map(|b| {
            vec![
                b.label.clone(),
                sol.voltages[b.id].to_string(),
                rep.voltages[b.id].to_string(),
            ]
        })
        .collect();
    out.table("voltages.csv", &strings(["bus", "v_lp_pu", "v_exact_pu"]), &voltages)?;
    let iterations: Vec<Vec<String>> = sol
        .history
        .iter()
        .map(|r| vec![r.h.to_string(), r.objective.to_string(), r.voltage_change.to_string()])
        .collect();
    out.table("iterations.csv", &strings(["h", "objective", "voltage_change_pu"]), &iterations)?;
    out.finish()
}

/// Per-period totals plus each storage's power and energy.
fn period_rows(s: &Scenario, case: &MultiPeriodCase, sol: &MultiPeriodSolution) -> (Vec<String>, Vec<Vec<String>>) {
    let kw = case.net.base.power_kw();
    let slack = case.bibc.slack();
    let mut header = strings(["timestamp", "price", "load_kw", "pv_available_kw", "pv_kw", "feeder_kw"]);
    for st in &case.storages {
        header.push(format!("{}_p_kw", st.label));
        header.push(format!("{}_e_kwh", st.label));
    }
    let rows = (0..case.horizon.steps)
        .map(|k| {
            let mut pv_avail = 0.0;
            let mut pv = 0.0;
            let mut feeder = 0.0;
            for (g, (spec, prof)) in case.generators.iter().zip(&case.profiles).enumerate() {
                if spec.bus == slack {
                    feeder += sol.p_gen[k][g];
                } else {
                    let share = prof.availability.as_ref().map_or(1.0, |a| a[k]);
                    pv_avail += spec.p_max * share;
                    pv += sol.p_gen[k][g];
                }
            }
            let mut row = vec![
                s.timestamp(k),
                s.series.price[k].to_string(),
                (case.demand[k].p.iter().sum::<f64>() * kw).to_string(),
                (pv_avail * kw).to_string(),
                (pv * kw).to_string(),
                (feeder * kw).to_string(),
            ];
            for st in 0..case.storages.len() {
                row.push(((sol.p_dis[k][st] + sol.p_ch[k][st]) * kw).to_string());
                row.push((sol.energy[k][st] * kw).to_string());
            }
            row
        })
        .collect();
    (header, rows)
}

fn mpopf(common: &Common, s: &Scenario) -> Result<()> {
    let mut case = s.to_case()?;
    case.terminal_soc = common.terminal_soc;
    if let Some(st) = case.storages.iter().find(|st| st.e_max.is_none()) {
        return Err(invalid(format!(
            "storage `{}` has no e_max_kwh; use `size` to choose capacities",
            st.label
        )));
    }
    let sol = solve_multiperiod(&case, StorageMode::Fixed, &common.solver())?;
    println!(
        "{} periods, {} variables, {} rows: objective {:.6}, operational cost {:.6}",
        case.horizon.steps, sol.variables, sol.rows, sol.objective, sol.operational_cost
    );
    println!("assembly {:.2} s, solve {:.2} s", sol.assembly_seconds, sol.solve_seconds);
    let params = json!({ "terminal_soc": common.terminal_soc });
    let mut out = Output::new(common, "mpopf", s, params)?;
    let (header, rows) = period_rows(s, &case, &sol);
    out.table("periods.csv", &header, &rows)?;
    out.finish()
}

fn size(common: &Common, s: &Scenario, layout: Layout, cost: Option<f64>) -> Result<()> {
    let configured = match layout.configuration() {
        Some(config) => {
            let c = cost.ok_or_else(|| invalid("--cost is required with a generated layout"))?;
            s.with_configuration(config, c)
        }
        None => s.clone(),
    };
    let mut case = configured.to_case()?;
    case.terminal_soc = common.terminal_soc;
    let Some(first) = case.storages.first() else {
        return Err(invalid("the scenario has no storage candidates"));
    };
    let solver = common.solver();
    let solution = solve_multiperiod(&case, StorageMode::Sizing { capacity_cost: cost }, &solver)?;
    let baseline = solve_baseline(&case, &solver)?;
    let cost_point = cost.unwrap_or(first.cost);
    let result = SizingResult {
        cost_point,
        horizon_cost: horizon_capacity_cost(cost_point, &case.horizon, first.calendar_life_years),
        z: solution.capacity.clone().unwrap_or_default(),
        solution,
    };
    let rev = compute_revenue(&result.solution, &baseline)?;
    let placement = placement_profile(&case, &result);
    println!(
        "installed {:.3} kWh; revenue {:.4}, investment {:.4}, profit {:.4}",
        result.total_capacity() * case.net.base.power_kw(),
        rev.revenue,
        rev.investment,
        rev.profit
    );
    for p in placement.iter().filter(|p| !p.zero) {
        println!("  {:<12} {:<6} {:>10.3} kWh", p.storage, p.bus_label, p.capacity_kwh);
    }

    let params = json!({ "layout": format!("{layout:?}").to_lowercase(), "cost": cost, "terminal_soc": common.terminal_soc });
    let mut out = Output::new(common, "size", &configured, params)?;
    let rows: Vec<Vec<String>> = placement
        .iter()
        .map(|p| vec![p.storage.clone(), p.bus_label.clone(), p.capacity_kwh.to_string()])
        .collect();
    out.table("placement.csv", &strings(["storage", "bus", "capacity_kwh"]), &rows)?;
    let (header, rows) = period_rows(&configured, &case, &result.solution);
    out.table("periods.csv", &header, &rows)?;
    out.finish()
}

fn sweep(common: &Common, s: &Scenario, layouts: &[Layout], costs: &[f64], parallel: bool) -> Result<()> {
    let mode = if parallel { SweepMode::Parallel } else { SweepMode::Sequential };
    let params = json!({
        "layouts": layouts.iter().map(|l| format!("{l:?}").to_lowercase()).collect::<Vec<_>>(),
        "costs": costs,
        "parallel": parallel,
        "terminal_soc": common.terminal_soc,
    });
    let mut out = Output::new(common, "sweep", s, params)?;
    let mut summary = Vec::new();
    for &layout in layouts {
        let config = layout
            .configuration()
            .ok_or_else(|| invalid("sweep compares generated layouts: centralized, distributed"))?;
        let report = run_viability_study(s, config, costs, common.terminal_soc, mode, &common.solver())?;
        if report.rows.iter().all(|r| r.status != "optimal") {
            return Err(Error::Solver(format!("every {config} sweep point failed: {}", report.rows[0].status)).into());
        }
        println!("{config}: baseline operational cost {:.4}", report.baseline_cost);
        println!("  {:>10} {:>12} {:>12} {:>12}", "cost", "z_kwh", "revenue", "profit");
        for r in &report.rows {
            println!(
                "  {:>10.2} {:>12.3} {:>12.4} {:>12.4}{}",
                r.cost,
                r.capacity_kwh,
                r.revenue,
                r.profit,
                if r.status == "optimal" { String::new() } else { format!("  ({})", r.status) }
            );
        }
        match report.break_even {
            Some(c) => println!("  break-even cost {c}"),
            None => println!("  no swept cost is profitable"),
        }
        if let Some(path) = out.file(&format!("sweep_{config}.csv")) {
            report.write_csv(&path)?;
        }
        if let Some(path) = out.file(&format!("placement_{config}.csv")) {
            report.write_placement_csv(&path)?;
        }
        summary.push(json!({
            "configuration": config,
            "baseline_cost": report.baseline_cost,
            "break_even": report.break_even,
            "seconds": report.seconds,
        }));
    }
    if let Some(path) = out.file("summary.json") {
        fs::write(&path, serde_json::to_string_pretty(&summary)?).with_context(|| format!("writing {}", path.display()))?;
    }
    out.finish()
}

fn convergence(common: &Common, s: &Scenario, period: usize) -> Result<()> {
    let report = run_convergence_study(s, common.h_max, period, &common.solver())?;
    println!("{:>3} {:>14} {:>11} {:>11} {:>5} {:>11}", "h", "objective", "mae_pu", "max_pu", "viol", "gap");
    for r in &report.rows {
        println!(
            "{:>3} {:>14.6} {:>11.3e} {:>11.3e} {:>5} {:>11.3e}",
            r.h, r.objective, r.voltage_mae, r.max_voltage_error, r.violations, r.objective_gap
        );
    }
    let params = json!({ "period": period, "h_max": common.h_max });
    let mut out = Output::new(common, "convergence-study", s, params)?;
    if let Some(path) = out.file("convergence.csv") {
        report.write_csv(&path)?;
    }
    out.finish()
}

fn bench(common: &Common, s: &Scenario, steps: &[usize], layout: Layout) -> Result<()> {
    if let Some(&n) = steps.iter().find(|&&n| n == 0 || n > s.steps()) {
        return Err(invalid(format!("bench horizon {n} outside 1..={}", s.steps())));
    }
    let configured = match layout.configuration() {
        Some(config) => s.with_configuration(config, 100.0),
        None => s.clone(),
    };
    let mut case = configured.to_case()?;
    case.terminal_soc = common.terminal_soc;
    let report = benchmark_runtime(&case, steps, &common.solver())?;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "steps", "vars", "rows", "nnz", "seconds");
    for r in &report.rows {
        println!(
            "{:>6} {:>10} {:>10} {:>10} {:>10.3}",
            r.steps, r.variables, r.rows, r.nonzeros, r.total_seconds
        );
    }
    println!("log-log slope {:.3}", report.slope);
    let params = json!({ "steps": steps, "layout": format!("{layout:?}").to_lowercase() });
    let mut out = Output::new(common, "bench", &configured, params)?;
    if let Some(path) = out.file("runtime.csv") {
        report.write_csv(&path)?;
    }
    out.finish()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn linearize(common: &Common, s: &Scenario, period: usize, dump: Option<&Path>, lp_path: Option<&Path>) -> Result<()> {
    let case = s.single_period(period)?;
    let flat = vec![case.v_s; case.net.bus_count()];
    let model = case.linear_model(&flat)?;
    let lp = assemble_single_period(&case, &model)?;
    println!(
        "B_v {}x{}, B_r {}x{}",
        model.bv.nrows(),
        model.bv.ncols(),
        model.br.nrows(),
        model.br.ncols()
    );
    println!("LP: {} variables, {} rows", lp.num_vars(), lp.num_rows());
    for family in [
        RowFamily::PowerBalance,
        RowFamily::VoltageApproximation,
        RowFamily::LossP,
        RowFamily::LossQ,
        RowFamily::BranchFlow,
    ] {
        let n = lp.eq.count_family(family) + lp.ineq.count_family(family);
        println!("  {n:>5} {family}");
    }
    if let Some(path) = dump {
        let matrices = json!({
            "voltage_magnitudes": model.voltage_magnitudes,
            "b_v": rows(&model.bv),
            "b_r": rows(&model.br),
            "loss_l0": rows(&model.planes.l0),
            "loss_l1": rows(&model.planes.l1),
            "loss_b": model.planes.b.as_slice(),
            "i0": model.i0,
            "i1": model.i1,
        });
        fs::write(path, serde_json::to_string_pretty(&matrices)?).with_context(|| format!("writing {}", path.display()))?;
        println!("model written to {}", path.display());
    }
    if let Some(path) = lp_path {
        let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_lp_format(&lp, &mut file).with_context(|| format!("writing {}", path.display()))?;
        println!("LP written to {}", path.display());
    }
    let mut out = Output::new(common, "linearize", s, json!({ "period": period }))?;
    let amps = case.net.base.current_a();
    let rows: Vec<Vec<String>> = case
        .net
        .branches
        .iter()
        .enumerate()
        .map(|(b, br)| vec![br.label.clone(), (model.i0[b] * amps).to_string(), (model.i1[b] * amps).to_string()])
        .collect();
    out.table("supporting_currents.csv", &strings(["branch", "i0_a", "i1_a"]), &rows)?;
    out.finish()
}
