//! Single-period LP assembly and the iterative FBS-OPF loop.
//!
//! Decision vector per period: `[p_gen, q_gen, loss_p, loss_q, v]`, with
//! `v` the non-slack voltage magnitudes. The feeder is an ordinary generator
//! at the slack bus whose negative output means export.

mod fbs;
mod project;

use serde::{Deserialize, Serialize};

pub use fbs::{run_fbs_opf, run_fbs_opf_iterations, DispatchSolution, FbsOpfOptions, IterationRecord};
pub use project::{project_dispatch, LimitViolation, ProjectionReport};

use crate::error::{Error, Result};
use crate::grid::{BibcMatrix, BusId, RadialNetwork};
use crate::linearize::{supporting_currents, LinearGridModel};
use crate::lp::{LpProblem, LpSolution, RowFamily, SolveOptions, VarKind, VarTag};
use crate::powerflow::InjectionSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub label: String,
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Currency per kWh.
    pub cost: f64,
}

impl GeneratorSpec {
    pub fn validate(&self, buses: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("generator `{}`: {m}", self.label)));
        if self.bus >= buses {
            return bad(format!("bus {} does not exist", self.bus));
        }
        if !(self.p_min <= self.p_max) || !(self.q_min <= self.q_max) {
            return bad("lower bound above upper bound".into());
        }
        if !(self.cost >= 0.0) || !self.cost.is_finite() {
            return bad(format!("cost must be finite and non-negative, got {}", self.cost));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingLimits {
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    pub i_max: Vec<f64>,
}

impl OperatingLimits {
    /// Same voltage band at every bus; branch limits taken from the network.
    pub fn uniform(net: &RadialNetwork, v_min: f64, v_max: f64) -> Self {
        Self {
            v_min: vec![v_min; net.bus_count()],
            v_max: vec![v_max; net.bus_count()],
            i_max: net.current_limits(),
        }
    }

    pub fn validate(&self, net: &RadialNetwork) -> Result<()> {
        let (n, l) = (net.bus_count(), net.branch_count());
        for (ctx, len, want) in [
            ("v_min", self.v_min.len(), n),
            ("v_max", self.v_max.len(), n),
            ("i_max", self.i_max.len(), l),
        ] {
            if len != want {
                return Err(Error::Dimension {
                    context: ctx,
                    expected: want,
                    found: len,
                });
            }
        }
        if self.v_min.iter().zip(&self.v_max).any(|(&lo, &hi)| !(lo > 0.0 && lo < hi)) {
            return Err(Error::InvalidParameter("voltage limits need 0 < v_min < v_max".into()));
        }
        if self.i_max.iter().any(|&i| !(i > 0.0)) {
            return Err(Error::InvalidParameter("branch limits must be positive".into()));
        }
        Ok(())
    }
}

/// Per-bus consumption, positive when consuming.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Demand {
    pub fn zeros(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn uniform(n: usize, slack: BusId, p: f64, q: f64) -> Self {
        let mut d = Self {
            p: vec![p; n],
            q: vec![q; n],
        };
        d.p[slack] = 0.0;
        d.q[slack] = 0.0;
        d
    }
}

/// Everything a single-period OPF needs.
#[derive(Clone, Debug)]
pub struct OpfCase {
    pub net: RadialNetwork,
    pub bibc: BibcMatrix,
    pub generators: Vec<GeneratorSpec>,
    pub limits: OperatingLimits,
    pub demand: Demand,
    pub v_s: f64,
}

impl OpfCase {
    pub fn new(
        net: RadialNetwork,
        generators: Vec<GeneratorSpec>,
        limits: OperatingLimits,
        demand: Demand,
        v_s: f64,
    ) -> Result<Self> {
        let bibc = crate::grid::build_bibc(&net)?;
        let case = Self {
            net,
            bibc,
            generators,
            limits,
            demand,
            v_s,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.net.bus_count();
        for g in &self.generators {
            g.validate(n)?;
        }
        self.limits.validate(&self.net)?;
        if self.demand.p.len() != n || self.demand.q.len() != n {
            return Err(Error::Dimension {
                context: "demand",
                expected: n,
                found: self.demand.p.len().min(self.demand.q.len()),
            });
        }
        if !(self.v_s > 0.0) {
            return Err(Error::InvalidParameter("slack voltage must be positive".into()));
        }
        Ok(())
    }

    /// Installed `p_max` summed per bus, `C_g p_max`.
    pub fn bus_p_max(&self) -> Vec<f64> {
        bus_p_max(self.net.bus_count(), &self.generators)
    }

    /// Net bus injections `C_g g - d` for a dispatch.
    pub fn injections(&self, p_gen: &[f64], q_gen: &[f64]) -> InjectionSet {
        fbs::net_injection(self, p_gen, q_gen)
    }

    /// Linear model at the given magnitudes with the default supporting
    /// currents.
    pub fn linear_model(&self, vmag: &[f64]) -> Result<LinearGridModel> {
        let (i0, i1) = supporting_currents(&self.bibc, &self.bus_p_max());
        LinearGridModel::build(&self.net, &self.bibc, vmag, i0, i1)
    }
}

pub(crate) fn bus_p_max(n: usize, gens: &[GeneratorSpec]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for g in gens {
        out[g.bus] += g.p_max;
    }
    out
}

/// A column that injects power at a bus.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Injector {
    pub bus: BusId,
    pub var: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct PeriodVars {
    pub loss_p: Vec<usize>,
    pub loss_q: Vec<usize>,
    /// Voltage variable of every non-slack bus, in `bibc.reduced_buses()` order.
    pub voltage: Vec<usize>,
}

fn row_entries(row: impl Fn(BusId) -> f64, injectors: &[Injector]) -> Vec<(usize, f64)> {
    injectors.iter().map(|inj| (inj.var, row(inj.bus))).collect()
}

fn dot(row: impl Fn(usize) -> f64, x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(j, v)| row(j) * v).sum()
}

/// Adds loss, voltage and branch rows of one period. Generator columns must
/// exist already; `p_inj` and `q_inj` say where they inject.
#[allow(clippy::too_many_arguments)]
pub(crate) fn add_network_rows(
    lp: &mut LpProblem,
    bibc: &BibcMatrix,
    model: &LinearGridModel,
    limits: &OperatingLimits,
    p_inj: &[Injector],
    q_inj: &[Injector],
    demand: &Demand,
    v_s: f64,
    period: Option<usize>,
) -> Result<PeriodVars> {
    let n = bibc.buses();
    let l = bibc.branches();
    let tag = |kind, index| VarTag::new(kind, index, period);

    let loss_p = (0..l)
        .map(|b| lp.add_var(tag(VarKind::LossP, b), 0.0, 0.0, f64::INFINITY))
        .collect::<Result<Vec<_>>>()?;
    let loss_q = (0..l)
        .map(|b| lp.add_var(tag(VarKind::LossQ, b), 0.0, 0.0, f64::INFINITY))
        .collect::<Result<Vec<_>>>()?;
    let reduced: Vec<BusId> = bibc.reduced_buses().collect();
    let voltage = reduced
        .iter()
        .map(|&j| lp.add_var(tag(VarKind::Voltage, j), 0.0, limits.v_min[j], limits.v_max[j]))
        .collect::<Result<Vec<_>>>()?;

    // Power balance
    let mut balance: Vec<(usize, f64)> = p_inj.iter().map(|i| (i.var, 1.0)).collect();
    balance.extend(loss_p.iter().chain(&loss_q).map(|&v| (v, -1.0)));
    lp.add_eq(balance, demand.p.iter().sum(), RowFamily::PowerBalance, period);

    // Voltage approximation
    for (r, &vj) in voltage.iter().enumerate() {
        let bv = model.bv.row(r);
        let mut entries = row_entries(|bus| bv[bus], p_inj);
        entries.extend(row_entries(|bus| bv[n + bus], q_inj));
        entries.push((vj, -1.0));
        let rhs = dot(|j| bv[j], &demand.p) + dot(|j| bv[n + j], &demand.q) - v_s;
        lp.add_eq(entries, rhs, RowFamily::VoltageApproximation, period);
    }

    // Loss epigraphs: loss ± L (C g - d) ≥ b_or_0
    let planes = &model.planes;
    for (injectors, d, losses, family) in [
        (p_inj, &demand.p, &loss_p, RowFamily::LossP),
        (q_inj, &demand.q, &loss_q, RowFamily::LossQ),
    ] {
        for b in 0..l {
            for (mat, offset) in [(&planes.l0, 0.0), (&planes.l1, planes.b[b])] {
                let row = mat.row(b);
                let ld = dot(|j| row[j], d);
                for sign in [-1.0, 1.0] {
                    let mut entries: Vec<(usize, f64)> = injectors
                        .iter()
                        .map(|i| (i.var, sign * row[i.bus]))
                        .collect();
                    entries.push((losses[b], 1.0));
                    lp.add_ge(entries, sign * ld + offset, family, period);
                }
            }
        }
    }

    // Branch flow limits
    for b in 0..l {
        let row = model.br.row(b);
        let entries = row_entries(|bus| row[bus], p_inj);
        let brd = dot(|j| row[j], &demand.p);
        lp.add_le(entries.clone(), limits.i_max[b] + brd, RowFamily::BranchFlow, period);
        lp.add_ge(entries, -limits.i_max[b] + brd, RowFamily::BranchFlow, period);
    }

    Ok(PeriodVars {
        loss_p,
        loss_q,
        voltage,
    })
}

/// Adds `p_gen`/`q_gen` columns for every generator with cost scaled by
/// `cost_scale` (base kW times step hours).
pub(crate) fn add_generator_columns(
    lp: &mut LpProblem,
    gens: &[GeneratorSpec],
    cost_scale: f64,
    p_bounds: impl Fn(usize) -> (f64, f64),
    period: Option<usize>,
) -> Result<(Vec<Injector>, Vec<Injector>)> {
    let mut p = Vec::with_capacity(gens.len());
    let mut q = Vec::with_capacity(gens.len());
    for (g, spec) in gens.iter().enumerate() {
        let (lo, hi) = p_bounds(g);
        let var = lp.add_var(VarTag::new(VarKind::PGen, g, period), spec.cost * cost_scale, lo, hi)?;
        p.push(Injector { bus: spec.bus, var });
    }
    for (g, spec) in gens.iter().enumerate() {
        let var = lp.add_var(VarTag::new(VarKind::QGen, g, period), 0.0, spec.q_min, spec.q_max)?;
        q.push(Injector { bus: spec.bus, var });
    }
    Ok((p, q))
}

/// Single-period OPF LP. The objective is in currency per hour.
pub fn assemble_single_period(case: &OpfCase, model: &LinearGridModel) -> Result<LpProblem> {
    case.validate()?;
    if model.buses() != case.net.bus_count() || model.branches() != case.net.branch_count() {
        return Err(Error::Dimension {
            context: "linear model",
            expected: case.net.bus_count(),
            found: model.buses(),
        });
    }
    let mut lp = LpProblem::new();
    let gens = &case.generators;
    let (p_inj, q_inj) = add_generator_columns(
        &mut lp,
        gens,
        case.net.base.power_kw(),
        |g| (gens[g].p_min, gens[g].p_max),
        None,
    )?;
    add_network_rows(
        &mut lp,
        &case.bibc,
        model,
        &case.limits,
        &p_inj,
        &q_inj,
        &case.demand,
        case.v_s,
        None,
    )?;
    Ok(lp)
}

/// Constraint families whose relaxation restores feasibility, tried one at
/// a time and then in pairs.
pub fn diagnose_infeasibility(lp: &LpProblem, options: &SolveOptions) -> Vec<String> {
    #[derive(Clone, Copy)]
    enum Relax {
        Voltage,
        Branch,
        Generator,
    }
    let name = |r: Relax| match r {
        Relax::Voltage => "voltage limits".to_string(),
        Relax::Branch => RowFamily::BranchFlow.to_string(),
        Relax::Generator => "generator limits".to_string(),
    };
    let relax = |set: &[Relax]| -> bool {
        let mut p = lp.clone();
        for r in set {
            match r {
                Relax::Voltage | Relax::Generator => {
                    let kinds: &[VarKind] = if matches!(r, Relax::Voltage) {
                        &[VarKind::Voltage]
                    } else {
                        &[VarKind::PGen, VarKind::QGen]
                    };
                    let idx: Vec<usize> = p
                        .registry()
                        .tags()
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| kinds.contains(&t.kind))
                        .map(|(j, _)| j)
                        .collect();
                    for j in idx {
                        p.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
                    }
                }
                Relax::Branch => {
                    for row in 0..p.ineq.rows() {
                        if p.ineq.family(row).0 == RowFamily::BranchFlow {
                            p.ineq.rhs_mut()[row] = 1e9;
                        }
                    }
                }
            }
        }
        matches!(crate::lp::solve_lp(&p, options), Ok(s) if s.is_optimal())
    };
    let all = [Relax::Voltage, Relax::Branch, Relax::Generator];
    let singles: Vec<String> = all.iter().filter(|r| relax(&[**r])).map(|r| name(*r)).collect();
    if !singles.is_empty() {
        return singles;
    }
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            if relax(&[*a, *b]) {
                return vec![format!("{} together with {}", name(*a), name(*b))];
            }
        }
    }
    vec!["power balance".into()]
}

pub(crate) fn require_optimal(lp: &LpProblem, sol: &LpSolution, options: &SolveOptions) -> Result<()> {
    use crate::lp::LpStatus;
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(Error::Infeasible {
            binding: diagnose_infeasibility(lp, options),
        }),
        LpStatus::Unbounded => Err(Error::Unbounded),
        LpStatus::IterationLimit => Err(Error::Solver("iteration limit reached".into())),
    }
}
