use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{horizon_capacity_cost, Horizon, StorageSpec};
use crate::error::{Error, Result};
use crate::grid::{BibcMatrix, RadialNetwork};
use crate::linearize::{supporting_currents, LinearGridModel};
use crate::lp::{solve_lp, LpProblem, LpSolution, RowFamily, SolveOptions, VarKind, VarTag};
use crate::opf::{
    add_generator_columns, add_network_rows, bus_p_max, require_optimal, Demand, GeneratorSpec, Injector,
    OperatingLimits,
};

/// Time-varying overrides for one generator. Missing series mean "constant".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    /// Availability factor per period, multiplies `p_max` (PV output).
    pub availability: Option<Vec<f64>>,
    /// Cost per period in currency per kWh (spot prices).
    pub cost: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct MultiPeriodCase {
    pub net: RadialNetwork,
    pub bibc: BibcMatrix,
    pub generators: Vec<GeneratorSpec>,
    /// Empty, or one entry per generator.
    pub profiles: Vec<GeneratorProfile>,
    pub storages: Vec<StorageSpec>,
    pub limits: OperatingLimits,
    /// `demand[k]` is the per-bus demand of period `k`.
    pub demand: Vec<Demand>,
    pub v_s: f64,
    pub horizon: Horizon,
    /// Enforce `e(N) >= e0`.
    pub terminal_soc: bool,
    /// Refuse to assemble problems with more variables than this.
    pub max_variables: usize,
}

pub const DEFAULT_MAX_VARIABLES: usize = 5_000_000;

#[derive(Serialize)]
struct FingerprintView<'a> {
    net: &'a RadialNetwork,
    generators: &'a [GeneratorSpec],
    profiles: &'a [GeneratorProfile],
    limits: &'a OperatingLimits,
    demand: &'a [Demand],
    v_s: f64,
    horizon: &'a Horizon,
    terminal_soc: bool,
}

impl MultiPeriodCase {
    pub fn new(
        net: RadialNetwork,
        generators: Vec<GeneratorSpec>,
        profiles: Vec<GeneratorProfile>,
        storages: Vec<StorageSpec>,
        limits: OperatingLimits,
        demand: Vec<Demand>,
        v_s: f64,
        horizon: Horizon,
    ) -> Result<Self> {
        let bibc = crate::grid::build_bibc(&net)?;
        let case = Self {
            net,
            bibc,
            generators,
            profiles,
            storages,
            limits,
            demand,
            v_s,
            horizon,
            terminal_soc: false,
            max_variables: DEFAULT_MAX_VARIABLES,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.net.bus_count();
        let steps = self.horizon.steps;
        Horizon::new(steps, self.horizon.hours)?;
        for g in &self.generators {
            g.validate(n)?;
        }
        for s in &self.storages {
            s.validate(n)?;
        }
        self.limits.validate(&self.net)?;
        if !(self.v_s > 0.0) {
            return Err(Error::InvalidParameter("slack voltage must be positive".into()));
        }
        let series = |context: &'static str, len: usize| {
            if len == steps {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context,
                    expected: steps,
                    found: len,
                })
            }
        };
        series("demand periods", self.demand.len())?;
        for d in &self.demand {
            if d.p.len() != n || d.q.len() != n {
                return Err(Error::Dimension {
                    context: "demand buses",
                    expected: n,
                    found: d.p.len().min(d.q.len()),
                });
            }
        }
        if !self.profiles.is_empty() {
            if self.profiles.len() != self.generators.len() {
                return Err(Error::Dimension {
                    context: "generator profiles",
                    expected: self.generators.len(),
                    found: self.profiles.len(),
                });
            }
            for p in &self.profiles {
                if let Some(a) = &p.availability {
                    series("availability series", a.len())?;
                    if a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        return Err(Error::InvalidParameter("availability must be finite and >= 0".into()));
                    }
                }
                if let Some(c) = &p.cost {
                    series("price series", c.len())?;
                    if c.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidParameter("prices must be finite".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over everything except the storage fleet, so runs with and
    /// without storage on the same grid and data share a fingerprint.
    pub fn fingerprint(&self) -> String {
        let view = FingerprintView {
            net: &self.net,
            generators: &self.generators,
            profiles: &self.profiles,
            limits: &self.limits,
            demand: &self.demand,
            v_s: self.v_s,
            horizon: &self.horizon,
            terminal_soc: self.terminal_soc,
        };
        let json = serde_json::to_vec(&view).expect("scenario data serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn without_storage(&self) -> Self {
        Self {
            storages: Vec::new(),
            ..self.clone()
        }
    }

    /// Same case restricted to the first `steps` periods.
    pub fn truncated(&self, steps: usize) -> Result<Self> {
        if steps == 0 || steps > self.horizon.steps {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate {} periods to {steps}",
                self.horizon.steps
            )));
        }
        let cut = |v: &Option<Vec<f64>>| v.as_ref().map(|s| s[..steps].to_vec());
        Ok(Self {
            demand: self.demand[..steps].to_vec(),
            profiles: self
                .profiles
                .iter()
                .map(|p| GeneratorProfile {
                    availability: cut(&p.availability),
                    cost: cut(&p.cost),
                })
                .collect(),
            horizon: Horizon {
                steps,
                hours: self.horizon.hours,
            },
            ..self.clone()
        })
    }

    fn p_max(&self, g: usize, k: usize) -> f64 {
        let scale = self
            .profiles
            .get(g)
            .and_then(|p| p.availability.as_ref())
            .map_or(1.0, |a| a[k]);
        self.generators[g].p_max * scale
    }

    fn cost(&self, g: usize, k: usize) -> f64 {
        self.profiles
            .get(g)
            .and_then(|p| p.cost.as_ref())
            .map_or(self.generators[g].cost, |c| c[k])
    }

    /// The single linear model used for every period: flat voltages at
    /// `v_s`, supporting currents from generator and storage ratings.
    pub fn linear_model(&self) -> Result<LinearGridModel> {
        let n = self.net.bus_count();
        let mut p_max = bus_p_max(n, &self.generators);
        for s in &self.storages {
            p_max[s.bus] += s.p_rated;
        }
        let (i0, i1) = supporting_currents(&self.bibc, &p_max);
        LinearGridModel::build(&self.net, &self.bibc, &vec![self.v_s; n], i0, i1)
    }

    fn estimated_variables(&self, sizing: bool) -> usize {
        let per_period = 2 * self.generators.len()
            + 2 * self.net.branch_count()
            + (self.net.bus_count() - 1)
            + 4 * self.storages.len();
        per_period * self.horizon.steps + if sizing { self.storages.len() } else { 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StorageMode {
    /// Energy bounded by each storage's `e_min`/`e_max`.
    Fixed,
    /// Capacities `z` are variables. `capacity_cost` overrides every
    /// storage's `cost` (currency per kWh over the calendar life).
    Sizing { capacity_cost: Option<f64> },
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Layout {
    pub p_gen: Vec<Vec<usize>>,
    pub q_gen: Vec<Vec<usize>>,
    pub p_dis: Vec<Vec<usize>>,
    pub p_ch: Vec<Vec<usize>>,
    pub q_sto: Vec<Vec<usize>>,
    pub energy: Vec<Vec<usize>>,
    pub loss_p: Vec<Vec<usize>>,
    pub loss_q: Vec<Vec<usize>>,
    pub voltage: Vec<Vec<usize>>,
    pub capacity: Vec<usize>,
}

/// An assembled multiperiod LP and where its variables live.
#[derive(Clone, Debug)]
pub struct MultiPeriodProblem {
    pub lp: LpProblem,
    pub mode: StorageMode,
    pub(crate) layout: Layout,
}

impl MultiPeriodProblem {
    /// Reprices every capacity variable; the problem shape is unchanged, so
    /// a previous basis stays usable.
    pub fn set_capacity_cost(&mut self, case: &MultiPeriodCase, cost_per_kwh: f64) {
        let base_kw = case.net.base.power_kw();
        for (s, &var) in self.layout.capacity.iter().enumerate() {
            let c = horizon_capacity_cost(cost_per_kwh, &case.horizon, case.storages[s].calendar_life_years);
            self.lp.set_cost(var, c * base_kw);
        }
    }
}

/// Stacks one network block per period, adds the storage devices as
/// injector pairs and links periods through energy states
/// `e(k+1) = e(k) - T (p_dis(k)/η_dis + η_ch p_ch(k))`.
pub fn assemble_multiperiod(
    case: &MultiPeriodCase,
    model: &LinearGridModel,
    mode: StorageMode,
) -> Result<MultiPeriodProblem> {
    case.validate()?;
    let sizing = matches!(mode, StorageMode::Sizing { .. });
    let estimate = case.estimated_variables(sizing);
    if estimate > case.max_variables {
        return Err(Error::TooLarge {
            variables: estimate,
            cap: case.max_variables,
        });
    }
    if model.buses() != case.net.bus_count() || model.branches() != case.net.branch_count() {
        return Err(Error::Dimension {
            context: "linear model",
            expected: case.net.bus_count(),
            found: model.buses(),
        });
    }
    if sizing {
        if let Some(s) = case.storages.iter().find(|s| s.e_max.is_some()) {
            log::debug!("sizing mode ignores the fixed capacity of `{}`", s.label);
        }
    }

    let t = case.horizon.hours;
    let base_kw = case.net.base.power_kw();
    let mut lp = LpProblem::new();
    let mut layout = Layout::default();

    if sizing {
        for (s, spec) in case.storages.iter().enumerate() {
            let var = lp.add_var(VarTag::new(VarKind::Capacity, s, None), 0.0, spec.e0, f64::INFINITY)?;
            layout.capacity.push(var);
        }
    }

    for k in 0..case.horizon.steps {
        let period = Some(k);
        let gens = &case.generators;
        let (mut p_inj, mut q_inj) =
            add_generator_columns(&mut lp, gens, base_kw * t, |g| (gens[g].p_min, case.p_max(g, k)), period)?;
        for (g, inj) in p_inj.iter().enumerate() {
            lp.set_cost(inj.var, case.cost(g, k) * base_kw * t);
        }
        layout.p_gen.push(p_inj.iter().map(|i| i.var).collect());
        layout.q_gen.push(q_inj.iter().map(|i| i.var).collect());

        let (mut dis, mut ch, mut qs) = (Vec::new(), Vec::new(), Vec::new());
        for (s, spec) in case.storages.iter().enumerate() {
            let tag = |kind| VarTag::new(kind, s, period);
            dis.push(lp.add_var(tag(VarKind::Discharge), 0.0, 0.0, spec.p_rated)?);
            ch.push(lp.add_var(tag(VarKind::Charge), 0.0, -spec.p_rated, 0.0)?);
            qs.push(lp.add_var(tag(VarKind::StorageQ), 0.0, -spec.p_rated, spec.p_rated)?);
            p_inj.push(Injector { bus: spec.bus, var: dis[s] });
            p_inj.push(Injector { bus: spec.bus, var: ch[s] });
            q_inj.push(Injector { bus: spec.bus, var: qs[s] });
        }

        let vars = add_network_rows(
            &mut lp,
            &case.bibc,
            model,
            &case.limits,
            &p_inj,
            &q_inj,
            &case.demand[k],
            case.v_s,
            period,
        )?;

        let mut energy = Vec::with_capacity(case.storages.len());
        for (s, spec) in case.storages.iter().enumerate() {
            let last = k + 1 == case.horizon.steps;
            let (mut lo, hi) = match (mode, spec.e_max) {
                (StorageMode::Fixed, Some(e_max)) => (spec.e_min, e_max),
                (StorageMode::Fixed, None) => {
                    return Err(Error::InvalidParameter(format!(
                        "storage `{}` has no capacity; solve it in sizing mode",
                        spec.label
                    )))
                }
                (StorageMode::Sizing { .. }, _) => (0.0, f64::INFINITY),
            };
            if last && case.terminal_soc {
                lo = lo.max(spec.e0);
            }
            let e = lp.add_var(VarTag::new(VarKind::Energy, s, Some(k + 1)), 0.0, lo, hi)?;
            let mut row = vec![(e, 1.0), (dis[s], t / spec.eta_dis), (ch[s], t * spec.eta_ch)];
            let rhs = match layout.energy.last() {
                Some(prev) => {
                    row.push((prev[s], -1.0));
                    0.0
                }
                None => spec.e0,
            };
            lp.add_eq(row, rhs, RowFamily::EnergyBalance, period);
            if sizing {
                lp.add_le([(e, 1.0), (layout.capacity[s], -1.0)], 0.0, RowFamily::CapacityLimit, period);
            }
            energy.push(e);
        }

        layout.p_dis.push(dis);
        layout.p_ch.push(ch);
        layout.q_sto.push(qs);
        layout.energy.push(energy);
        layout.loss_p.push(vars.loss_p);
        layout.loss_q.push(vars.loss_q);
        layout.voltage.push(vars.voltage);
    }

    let mut problem = MultiPeriodProblem { lp, mode, layout };
    if let StorageMode::Sizing { capacity_cost } = mode {
        for (s, &var) in problem.layout.capacity.iter().enumerate() {
            let spec = &case.storages[s];
            let c = horizon_capacity_cost(
                capacity_cost.unwrap_or(spec.cost),
                &case.horizon,
                spec.calendar_life_years,
            );
            problem.lp.set_cost(var, c * base_kw);
        }
    }
    Ok(problem)
}

/// Per-period dispatch trace and cost split of a solved multiperiod LP.
/// Powers in pu, energies and capacities in pu·h, costs in currency.
#[derive(Clone, Debug, Serialize)]
pub struct MultiPeriodSolution {
    pub p_gen: Vec<Vec<f64>>,
    pub q_gen: Vec<Vec<f64>>,
    pub p_dis: Vec<Vec<f64>>,
    pub p_ch: Vec<Vec<f64>>,
    pub q_sto: Vec<Vec<f64>>,
    /// `energy[k][s]` is `e_s(k + 1)`.
    pub energy: Vec<Vec<f64>>,
    /// LP voltage magnitudes per period, every bus.
    pub voltages: Vec<Vec<f64>>,
    /// Total linearized losses per period, active plus reactive terms.
    pub losses: Vec<f64>,
    /// Capacity per storage; `None` outside sizing mode.
    pub capacity: Option<Vec<f64>>,
    pub objective: f64,
    pub operational_cost: f64,
    pub storage_cost: f64,
    pub variables: usize,
    pub rows: usize,
    pub nonzeros: usize,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
    pub fingerprint: String,
}

impl MultiPeriodSolution {
    pub fn total_capacity(&self) -> f64 {
        self.capacity.as_ref().map_or(0.0, |z| z.iter().sum())
    }

    /// Largest `min(p_dis, -p_ch)` over all periods and storages.
    pub fn max_simultaneous(&self) -> f64 {
        self.p_dis
            .iter()
            .zip(&self.p_ch)
            .flat_map(|(d, c)| d.iter().zip(c).map(|(d, c)| d.min(-c)))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn decode(
    case: &MultiPeriodCase,
    problem: &MultiPeriodProblem,
    sol: &LpSolution,
    assembly_seconds: f64,
) -> MultiPeriodSolution {
    let x = sol.primal.as_deref().unwrap_or(&[]);
    let pick = |vars: &Vec<Vec<usize>>| -> Vec<Vec<f64>> {
        vars.iter().map(|row| row.iter().map(|&j| x[j]).collect()).collect()
    };
    let layout = &problem.layout;
    let reduced: Vec<usize> = case.bibc.reduced_buses().collect();
    let voltages = layout
        .voltage
        .iter()
        .map(|vars| {
            let mut v = vec![case.v_s; case.net.bus_count()];
            for (r, &j) in reduced.iter().enumerate() {
                v[j] = x[vars[r]];
            }
            v
        })
        .collect();
    let losses = layout
        .loss_p
        .iter()
        .zip(&layout.loss_q)
        .map(|(p, q)| p.iter().chain(q).map(|&j| x[j]).sum())
        .collect();
    let capacity = matches!(problem.mode, StorageMode::Sizing { .. })
        .then(|| layout.capacity.iter().map(|&j| x[j]).collect::<Vec<f64>>());
    let storage_cost: f64 = layout.capacity.iter().map(|&j| problem.lp.cost()[j] * x[j]).sum();
    let objective = sol.objective.unwrap_or(f64::NAN);
    MultiPeriodSolution {
        p_gen: pick(&layout.p_gen),
        q_gen: pick(&layout.q_gen),
        p_dis: pick(&layout.p_dis),
        p_ch: pick(&layout.p_ch),
        q_sto: pick(&layout.q_sto),
        energy: pick(&layout.energy),
        voltages,
        losses,
        capacity,
        objective,
        operational_cost: objective - storage_cost,
        storage_cost,
        variables: problem.lp.num_vars(),
        rows: problem.lp.num_rows(),
        nonzeros: problem.lp.ineq.nonzeros() + problem.lp.eq.nonzeros(),
        assembly_seconds,
        solve_seconds: sol.seconds,
        fingerprint: case.fingerprint(),
    }
}

/// Assembles against the flat-voltage model and solves.
pub fn solve_multiperiod(
    case: &MultiPeriodCase,
    mode: StorageMode,
    solver: &SolveOptions,
) -> Result<MultiPeriodSolution> {
    let started = Instant::now();
    let model = case.linear_model()?;
    let problem = assemble_multiperiod(case, &model, mode)?;
    let assembly = started.elapsed().as_secs_f64();
    let sol = solve_lp(&problem.lp, solver)?;
    require_optimal(&problem.lp, &sol, solver)?;
    Ok(decode(case, &problem, &sol, assembly))
}

/// The same scenario without storage, solved on the storage case's linear
/// model so that revenue against it reflects the storage alone and not a
/// change of supporting currents.
pub fn solve_baseline(case: &MultiPeriodCase, solver: &SolveOptions) -> Result<MultiPeriodSolution> {
    let started = Instant::now();
    let model = case.linear_model()?;
    let bare = case.without_storage();
    let problem = assemble_multiperiod(&bare, &model, StorageMode::Fixed)?;
    let assembly = started.elapsed().as_secs_f64();
    let sol = solve_lp(&problem.lp, solver)?;
    require_optimal(&problem.lp, &sol, solver)?;
    Ok(decode(&bare, &problem, &sol, assembly))
}
