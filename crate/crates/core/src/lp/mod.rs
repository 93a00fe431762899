//! Solver-agnostic linear programs.
//!
//! An [`LpProblem`] is `min cᵀx + offset` subject to `A_ub x ≤ b_ub`,
//! `A_eq x = b_eq` and `lower ≤ x ≤ upper`. Constraint matrices are stored
//! row-compressed; every variable carries a unique [`VarTag`] and every row
//! a [`RowFamily`], so solutions can be decoded and infeasibilities
//! attributed without knowing column positions.
//!
//! Two backends implement [`LpSolver`]: [`HighsSolver`] (the HiGHS dual
//! simplex, used for everything by default) and [`DenseSimplex`], a small
//! bounded tableau simplex kept as an independent cross-check for toy
//! problems.

mod highs;
mod lp_format;
mod simplex;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

pub use highs::HighsSolver;
pub use lp_format::write_lp_format;
pub use simplex::DenseSimplex;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VarKind {
    PGen,
    QGen,
    LossP,
    LossQ,
    Voltage,
    Discharge,
    Charge,
    StorageQ,
    Energy,
    Capacity,
    Free,
}

impl VarKind {
    fn stem(self) -> &'static str {
        match self {
            VarKind::PGen => "p_gen",
            VarKind::QGen => "q_gen",
            VarKind::LossP => "loss_p",
            VarKind::LossQ => "loss_q",
            VarKind::Voltage => "v",
            VarKind::Discharge => "p_dis",
            VarKind::Charge => "p_ch",
            VarKind::StorageQ => "q_sto",
            VarKind::Energy => "e",
            VarKind::Capacity => "z",
            VarKind::Free => "x",
        }
    }
}

/// Identifies one decision variable: what it is, which element (generator,
/// branch, bus or storage index) and which period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarTag {
    pub kind: VarKind,
    pub index: usize,
    pub period: Option<usize>,
}

impl VarTag {
    pub fn new(kind: VarKind, index: usize, period: Option<usize>) -> Self {
        Self {
            kind,
            index,
            period,
        }
    }
}

impl fmt::Display for VarTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind.stem(), self.index)?;
        if let Some(k) = self.period {
            write!(f, "_t{k}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RowFamily {
    PowerBalance,
    VoltageApproximation,
    LossP,
    LossQ,
    BranchFlow,
    EnergyBalance,
    CapacityLimit,
    Other,
}

impl fmt::Display for RowFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RowFamily::PowerBalance => "power balance",
            RowFamily::VoltageApproximation => "voltage approximation",
            RowFamily::LossP => "active-power loss planes",
            RowFamily::LossQ => "reactive-power loss planes",
            RowFamily::BranchFlow => "branch flow limits",
            RowFamily::EnergyBalance => "storage energy balance",
            RowFamily::CapacityLimit => "storage capacity limits",
            RowFamily::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VariableRegistry {
    tags: Vec<VarTag>,
    index: HashMap<VarTag, usize>,
}

impl VariableRegistry {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[VarTag] {
        &self.tags
    }

    pub fn get(&self, tag: &VarTag) -> Option<usize> {
        self.index.get(tag).copied()
    }
}

/// Row-compressed sparse constraint block with one right-hand side per row.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintBlock {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    families: Vec<(RowFamily, Option<usize>)>,
}

impl Default for ConstraintBlock {
    fn default() -> Self {
        Self {
            row_start: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            rhs: Vec::new(),
            families: Vec::new(),
        }
    }
}

impl ConstraintBlock {
    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.vals.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn rhs_mut(&mut self) -> &mut [f64] {
        &mut self.rhs
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[r]..self.row_start[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn family(&self, r: usize) -> (RowFamily, Option<usize>) {
        self.families[r]
    }

    pub fn count_family(&self, family: RowFamily) -> usize {
        self.families.iter().filter(|(f, _)| *f == family).count()
    }

    fn push(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64, family: RowFamily, period: Option<usize>) {
        for (c, v) in entries {
            if v != 0.0 {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.row_start.push(self.cols.len());
        self.rhs.push(rhs);
        self.families.push((family, period));
    }

    /// `A x` for this block.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub(crate) fn raw(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_start, &self.cols, &self.vals)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpProblem {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    registry: Arc<VariableRegistry>,
    pub ineq: ConstraintBlock,
    pub eq: ConstraintBlock,
    pub objective_offset: f64,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, tag: VarTag, cost: f64, lower: f64, upper: f64) -> Result<usize> {
        let registry = Arc::make_mut(&mut self.registry);
        if registry.index.contains_key(&tag) {
            return Err(Error::MalformedProblem(format!("variable {tag} declared twice")));
        }
        let idx = registry.tags.len();
        registry.tags.push(tag);
        registry.index.insert(tag, idx);
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        Ok(idx)
    }

    /// Adds `Σ a_j x_j ≤ rhs`.
    pub fn add_le(
        &mut self,
        entries: impl IntoIterator<Item = (usize, f64)>,
        rhs: f64,
        family: RowFamily,
        period: Option<usize>,
    ) {
        self.ineq.push(entries, rhs, family, period);
    }

    /// Adds `Σ a_j x_j ≥ rhs` as a negated `≤` row.
    pub fn add_ge(
        &mut self,
        entries: impl IntoIterator<Item = (usize, f64)>,
        rhs: f64,
        family: RowFamily,
        period: Option<usize>,
    ) {
        self.ineq
            .push(entries.into_iter().map(|(c, v)| (c, -v)), -rhs, family, period);
    }

    pub fn add_eq(
        &mut self,
        entries: impl IntoIterator<Item = (usize, f64)>,
        rhs: f64,
        family: RowFamily,
        period: Option<usize>,
    ) {
        self.eq.push(entries, rhs, family, period);
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.ineq.rows() + self.eq.rows()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.cost[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn scale_costs(&mut self, factor: f64) {
        for c in &mut self.cost {
            *c *= factor;
        }
        self.objective_offset *= factor;
    }

    pub fn registry(&self) -> &Arc<VariableRegistry> {
        &self.registry
    }

    pub fn var(&self, tag: &VarTag) -> Option<usize> {
        self.registry.get(tag)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.cost.iter().zip(x).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (ax, b) in self.ineq.apply(x).iter().zip(self.ineq.rhs()) {
            worst = worst.max(ax - b);
        }
        for (ax, b) in self.eq.apply(x).iter().zip(self.eq.rhs()) {
            worst = worst.max((ax - b).abs());
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    /// Structural checks every backend relies on.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let mut problems = Vec::new();
        for j in 0..n {
            if !self.cost[j].is_finite() {
                problems.push(format!("cost of {} is not finite", self.registry.tags[j]));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                problems.push(format!(
                    "bounds of {} are inconsistent: [{}, {}]",
                    self.registry.tags[j], self.lower[j], self.upper[j]
                ));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                problems.push(format!("bounds of {} are infinite on the wrong side", self.registry.tags[j]));
            }
        }
        for (name, block) in [("inequality", &self.ineq), ("equality", &self.eq)] {
            if block.cols.iter().any(|&c| c >= n) {
                problems.push(format!("{name} block references a column beyond {n}"));
            }
            if block.vals.iter().any(|v| !v.is_finite()) || block.rhs.iter().any(|v| !v.is_finite()) {
                problems.push(format!("{name} block has non-finite entries"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::MalformedProblem(problems.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Backend-specific simplex basis, reusable for warm starts.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    pub columns: Vec<i32>,
    pub rows: Vec<i32>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective `J = cᵀx + offset`; present iff optimal.
    pub objective: Option<f64>,
    pub primal: Option<Vec<f64>>,
    /// Dual objective, when the backend reports duals.
    pub dual_objective: Option<f64>,
    pub basis: Option<Basis>,
    pub iterations: u64,
    pub seconds: f64,
    registry: Arc<VariableRegistry>,
    rows: usize,
}

impl LpSolution {
    pub(crate) fn new(problem: &LpProblem, status: LpStatus) -> Self {
        Self {
            status,
            objective: None,
            primal: None,
            dual_objective: None,
            basis: None,
            iterations: 0,
            seconds: 0.0,
            registry: Arc::clone(&problem.registry),
            rows: problem.num_rows(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, tag: &VarTag) -> Option<f64> {
        let idx = self.registry.get(tag)?;
        self.primal.as_ref().map(|x| x[idx])
    }

    pub fn value_by_name(&self, name: &str) -> Option<f64> {
        let idx = self.registry.tags.iter().position(|t| t.to_string() == name)?;
        self.primal.as_ref().map(|x| x[idx])
    }

    pub fn registry(&self) -> &VariableRegistry {
        &self.registry
    }

    pub(crate) fn same_shape(&self, problem: &LpProblem) -> Result<()> {
        if self.rows != problem.num_rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows before, {} now",
                self.rows,
                problem.num_rows()
            )));
        }
        if !Arc::ptr_eq(&self.registry, &problem.registry) && *self.registry != *problem.registry {
            return Err(Error::ShapeMismatch("variable registries differ".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Highs,
    DenseSimplex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Simplex,
    InteriorPoint,
    /// Let the backend pick.
    Choose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub backend: Backend,
    pub method: Method,
    pub iteration_limit: Option<u64>,
    pub time_limit_seconds: Option<f64>,
    /// Primal and dual feasibility tolerance handed to the backend.
    pub tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Highs,
            method: Method::Simplex,
            iteration_limit: None,
            time_limit_seconds: None,
            tolerance: 1e-7,
        }
    }
}

pub trait LpSolver {
    fn solve(&self, problem: &LpProblem, options: &SolveOptions) -> Result<LpSolution>;

    /// Re-solves `problem` starting from `previous`. The optimum must match a
    /// cold solve; backends without warm-start support simply cold solve.
    fn solve_warm(
        &self,
        problem: &LpProblem,
        previous: &LpSolution,
        options: &SolveOptions,
    ) -> Result<LpSolution> {
        previous.same_shape(problem)?;
        self.solve(problem, options)
    }
}

pub fn solve_lp(problem: &LpProblem, options: &SolveOptions) -> Result<LpSolution> {
    match options.backend {
        Backend::Highs => HighsSolver.solve(problem, options),
        Backend::DenseSimplex => DenseSimplex::default().solve(problem, options),
    }
}

pub fn warm_start(problem: &LpProblem, previous: &LpSolution, options: &SolveOptions) -> Result<LpSolution> {
    match options.backend {
        Backend::Highs => HighsSolver.solve_warm(problem, previous, options),
        Backend::DenseSimplex => DenseSimplex::default().solve_warm(problem, previous, options),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(i: usize) -> VarTag {
        VarTag::new(VarKind::Free, i, None)
    }

    #[test]
    fn duplicate_variable_rejected() {
        let mut lp = LpProblem::new();
        lp.add_var(tag(0), 1.0, 0.0, 1.0).unwrap();
        assert!(lp.add_var(tag(0), 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn validate_catches_inverted_bounds() {
        let mut lp = LpProblem::new();
        lp.add_var(tag(0), 1.0, 2.0, 1.0).unwrap();
        assert!(matches!(lp.validate(), Err(Error::MalformedProblem(_))));
    }

    #[test]
    fn ge_rows_are_negated() {
        let mut lp = LpProblem::new();
        let x = lp.add_var(tag(0), 1.0, 0.0, 10.0).unwrap();
        lp.add_ge([(x, 2.0)], 3.0, RowFamily::Other, None);
        assert_eq!(lp.ineq.row(0).collect::<Vec<_>>(), vec![(0, -2.0)]);
        assert_eq!(lp.ineq.rhs(), &[-3.0]);
        assert!(lp.max_violation(&[1.0]) > 0.0);
        assert_eq!(lp.max_violation(&[1.5]), 0.0);
    }

    #[test]
    fn names_are_stable() {
        assert_eq!(VarTag::new(VarKind::PGen, 3, Some(12)).to_string(), "p_gen_3_t12");
        assert_eq!(VarTag::new(VarKind::Voltage, 1, None).to_string(), "v_1");
    }
}
