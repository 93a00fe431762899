//! Battery storage: energy dynamics, the multiperiod OPF and capacity
//! sizing.
//!
//! Storage power uses the generation sign convention. Discharging power is
//! in `[0, p_rated]`, charging power in `[-p_rated, 0]`, and the energy
//! update is `e(k+1) = e(k) + B [p_dis(k); p_ch(k)]` with
//! `B = T [-diag(1/η_dis) | -diag(η_ch)]`.

mod multiperiod;
mod sizing;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use multiperiod::{
    assemble_multiperiod, solve_baseline, solve_multiperiod, GeneratorProfile, MultiPeriodCase, MultiPeriodProblem,
    MultiPeriodSolution, StorageMode,
};
pub use sizing::{
    break_even_cost, compute_revenue, placement_profile, solve_sizing, PlacementEntry, Revenue,
    SizingResult, SweepMode, SweepPoint,
};

use crate::error::{Error, Result};
use crate::grid::BusId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub label: String,
    pub bus: BusId,
    /// Rating in pu; caps charging and discharging power and the reactive
    /// box.
    pub p_rated: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    /// Energies in pu·h.
    pub e0: f64,
    pub e_min: f64,
    /// `None` makes the capacity a decision variable.
    pub e_max: Option<f64>,
    /// Capacity cost, currency per kWh over the calendar life.
    pub cost: f64,
    pub calendar_life_years: f64,
}

impl StorageSpec {
    pub fn validate(&self, buses: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("storage `{}`: {m}", self.label)));
        if self.bus >= buses {
            return bad(format!("bus {} does not exist", self.bus));
        }
        for (name, eta) in [("charging", self.eta_ch), ("discharging", self.eta_dis)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return bad(format!("{name} efficiency must lie in (0, 1], got {eta}"));
            }
        }
        if !(self.p_rated > 0.0) {
            return bad("rating must be positive".into());
        }
        if let Some(e_max) = self.e_max {
            if !(self.e_min <= self.e0 && self.e0 <= e_max) {
                return bad("needs e_min <= e0 <= e_max".into());
            }
        } else if !(self.e0 >= 0.0) {
            return bad("initial energy must be non-negative".into());
        }
        if !(self.cost >= 0.0) || !(self.calendar_life_years > 0.0) {
            return bad("cost must be non-negative and calendar life positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub steps: usize,
    /// Step length in hours.
    pub hours: f64,
}

impl Horizon {
    pub fn new(steps: usize, hours: f64) -> Result<Self> {
        if steps == 0 || !(hours > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon needs N >= 1 and T > 0, got N = {steps}, T = {hours}"
            )));
        }
        Ok(Self { steps, hours })
    }

    pub fn days(&self) -> f64 {
        self.steps as f64 * self.hours / 24.0
    }
}

/// Capacity cost charged to one horizon: the calendar-life cost spread
/// evenly over the days of the life.
pub fn horizon_capacity_cost(cost: f64, horizon: &Horizon, calendar_life_years: f64) -> f64 {
    cost * horizon.days() / (calendar_life_years * 365.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageDynamics {
    /// `n_s × 2 n_s` input matrix.
    pub b: DMatrix<f64>,
    pub steps: usize,
}

pub fn build_storage_dynamics(fleet: &[StorageSpec], horizon: &Horizon) -> StorageDynamics {
    let ns = fleet.len();
    let mut b = DMatrix::zeros(ns, 2 * ns);
    for (s, spec) in fleet.iter().enumerate() {
        b[(s, s)] = -horizon.hours / spec.eta_dis;
        b[(s, ns + s)] = -horizon.hours * spec.eta_ch;
    }
    StorageDynamics {
        b,
        steps: horizon.steps,
    }
}

impl StorageDynamics {
    pub fn storages(&self) -> usize {
        self.b.nrows()
    }

    /// Stacked identities, `(N n_s) × n_s`.
    pub fn s_x(&self) -> DMatrix<f64> {
        let ns = self.storages();
        DMatrix::from_fn(self.steps * ns, ns, |r, c| if r % ns == c { 1.0 } else { 0.0 })
    }

    /// Dense block lower-triangular `S_u`, `(N n_s) × (N 2 n_s)`. Refuses
    /// sizes above `cap` entries; use [`StorageDynamics::apply_su`] instead.
    pub fn su_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        let ns = self.storages();
        let (rows, cols) = (self.steps * ns, self.steps * 2 * ns);
        if rows * cols > cap {
            return Err(Error::TooLarge {
                variables: rows * cols,
                cap,
            });
        }
        let mut su = DMatrix::zeros(rows, cols);
        for k in 0..self.steps {
            for j in 0..=k {
                su.view_mut((k * ns, j * 2 * ns), (ns, 2 * ns)).copy_from(&self.b);
            }
        }
        Ok(su)
    }

    /// `S_u U` without forming `S_u`: block prefix sums of `B u(j)`.
    /// `u` stacks `[p_dis(k); p_ch(k)]` for `k = 0..N`.
    pub fn apply_su(&self, u: &[f64]) -> Result<Vec<f64>> {
        let ns = self.storages();
        if u.len() != self.steps * 2 * ns {
            return Err(Error::Dimension {
                context: "storage input sequence",
                expected: self.steps * 2 * ns,
                found: u.len(),
            });
        }
        let mut out = Vec::with_capacity(self.steps * ns);
        let mut acc = vec![0.0; ns];
        for k in 0..self.steps {
            let uk = &u[k * 2 * ns..(k + 1) * 2 * ns];
            for (s, a) in acc.iter_mut().enumerate() {
                *a += (0..2 * ns).map(|c| self.b[(s, c)] * uk[c]).sum::<f64>();
            }
            out.extend_from_slice(&acc);
        }
        Ok(out)
    }

    /// `E = S_x e0 + S_u U`, returned per step `k = 1..N`.
    pub fn energy_trajectory(&self, e0: &[f64], u: &[f64]) -> Result<Vec<Vec<f64>>> {
        let ns = self.storages();
        let su = self.apply_su(u)?;
        Ok(su
            .chunks(ns.max(1))
            .take(self.steps)
            .map(|chunk| chunk.iter().zip(e0).map(|(d, e)| e + d).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn unit(eta_ch: f64, eta_dis: f64) -> StorageSpec {
        StorageSpec {
            label: "s".into(),
            bus: 1,
            p_rated: 1.0,
            eta_ch,
            eta_dis,
            e0: 0.0,
            e_min: 0.0,
            e_max: Some(10.0),
            cost: 0.0,
            calendar_life_years: 10.0,
        }
    }

    #[test]
    fn two_step_unit_efficiency_su() {
        let d = build_storage_dynamics(&[unit(1.0, 1.0)], &Horizon::new(2, 1.0).unwrap());
        let su = d.su_dense(1000).unwrap();
        let expected = DMatrix::from_row_slice(2, 4, &[-1.0, -1.0, 0.0, 0.0, -1.0, -1.0, -1.0, -1.0]);
        assert_eq!(su, expected);
        assert_eq!(d.s_x(), DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
    }

    #[test]
    fn efficiency_examples() {
        let d = build_storage_dynamics(&[unit(0.88, 0.88)], &Horizon::new(1, 1.0).unwrap());
        // Discharging 0.88 pu for an hour drains 1 pu·h.
        let e = d.energy_trajectory(&[5.0], &[0.88, 0.0]).unwrap();
        assert!((e[0][0] - 4.0).abs() < 1e-12);
        // Charging at -1 pu stores 0.88 pu·h.
        let e = d.energy_trajectory(&[5.0], &[0.0, -1.0]).unwrap();
        assert!((e[0][0] - 5.88).abs() < 1e-12);
    }

    #[test]
    fn horizon_cost_scaling() {
        let h = Horizon::new(744, 1.0).unwrap();
        assert!((horizon_capacity_cost(365.0, &h, 1.0) - 31.0).abs() < 1e-12);
    }

    #[test]
    fn dense_su_has_size_cap() {
        let d = build_storage_dynamics(&[unit(1.0, 1.0)], &Horizon::new(100, 1.0).unwrap());
        assert!(matches!(d.su_dense(100), Err(Error::TooLarge { .. })));
    }

    proptest! {
        #[test]
        fn structured_su_matches_dense(
            steps in 1usize..8,
            etas in prop::collection::vec((0.5f64..=1.0, 0.5f64..=1.0), 1..4),
            hours in 0.25f64..2.0,
            seed in prop::collection::vec(-1.0f64..1.0, 64),
        ) {
            let fleet: Vec<_> = etas.iter().map(|&(c, d)| unit(c, d)).collect();
            let dyn_ = build_storage_dynamics(&fleet, &Horizon::new(steps, hours).unwrap());
            let len = steps * 2 * fleet.len();
            let u: Vec<f64> = (0..len).map(|i| seed[i % seed.len()]).collect();
            let dense = dyn_.su_dense(1 << 20).unwrap() * nalgebra::DVector::from_column_slice(&u);
            let fast = dyn_.apply_su(&u).unwrap();
            for (a, b) in dense.iter().zip(&fast) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // One-step increments match the state equation.
            let e0 = vec![0.0; fleet.len()];
            let traj = dyn_.energy_trajectory(&e0, &u).unwrap();
            let ns = fleet.len();
            for k in 1..steps {
                for s in 0..ns {
                    let dis = u[k * 2 * ns + s];
                    let ch = u[k * 2 * ns + ns + s];
                    let step = -hours * (dis / fleet[s].eta_dis + fleet[s].eta_ch * ch);
                    prop_assert!((traj[k][s] - traj[k - 1][s] - step).abs() < 1e-12);
                }
            }
        }
    }
}
