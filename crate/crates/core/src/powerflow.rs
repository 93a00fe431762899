//! Exact forward-backward sweep load flow for radial networks.
//!
//! The forward stage turns nodal power injections into nodal currents
//! `i = conj(s / v)`; the backward stage maps them onto branch currents with
//! the BIBC matrix and accumulates the branch voltage drops:
//! `v = v_s + Mᵀ (R + jX) M_f i`. Injections follow the generation-positive
//! convention, so loads are negative.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{BibcMatrix, RadialNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVoltageState {
    voltages: Vec<Complex64>,
    slack: usize,
}

impl ComplexVoltageState {
    pub fn flat(n: usize, slack: usize, v_s: Complex64) -> Self {
        Self {
            voltages: vec![v_s; n],
            slack,
        }
    }

    pub fn from_voltages(voltages: Vec<Complex64>, slack: usize) -> Self {
        Self { voltages, slack }
    }

    pub fn slack_voltage(&self) -> Complex64 {
        self.voltages[self.slack]
    }

    pub fn voltages(&self) -> &[Complex64] {
        &self.voltages
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.norm()).collect()
    }

    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }

    /// Mean over non-slack buses of `|v_j - other_j|`.
    pub fn mean_abs_change(&self, other: &Self) -> f64 {
        mean_non_slack(self.slack, self.voltages.len(), |j| {
            (self.voltages[j] - other.voltages[j]).norm()
        })
    }

    /// Mean over non-slack buses of `||v_j| - |other_j||`.
    pub fn mean_magnitude_change(&self, other: &Self) -> f64 {
        mean_non_slack(self.slack, self.voltages.len(), |j| {
            (self.voltages[j].norm() - other.voltages[j].norm()).abs()
        })
    }
}

fn mean_non_slack(slack: usize, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    (0..n).filter(|&j| j != slack).map(f).sum::<f64>() / (n - 1) as f64
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InjectionSet {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

pub fn nodal_currents(v: &ComplexVoltageState, inj: &InjectionSet) -> Result<Vec<Complex64>> {
    if inj.p.len() != v.len() || inj.q.len() != v.len() {
        return Err(Error::Dimension {
            context: "nodal currents",
            expected: v.len(),
            found: inj.p.len().min(inj.q.len()),
        });
    }
    v.voltages
        .iter()
        .enumerate()
        .map(|(j, &vj)| {
            if vj.norm() == 0.0 {
                return Err(Error::ZeroVoltage { bus: j });
            }
            Ok((Complex64::new(inj.p[j], inj.q[j]) / vj).conj())
        })
        .collect()
}

/// Branch currents `i_b = M_f i`, positive towards the slack.
pub fn branch_currents(bibc: &BibcMatrix, currents: &[Complex64]) -> Vec<Complex64> {
    (0..bibc.branches())
        .map(|b| {
            (0..bibc.buses())
                .filter(|&j| bibc.full[(b, j)] != 0.0)
                .map(|j| currents[j] * bibc.full[(b, j)])
                .sum()
        })
        .collect()
}

pub fn backward_voltage_update(
    net: &RadialNetwork,
    bibc: &BibcMatrix,
    currents: &[Complex64],
    v_s: Complex64,
) -> Result<ComplexVoltageState> {
    let n = bibc.buses();
    if currents.len() != n {
        return Err(Error::Dimension {
            context: "backward voltage update",
            expected: n,
            found: currents.len(),
        });
    }
    let drops: Vec<Complex64> = branch_currents(bibc, currents)
        .into_iter()
        .zip(&net.branches)
        .map(|(ib, br)| Complex64::new(br.resistance, br.reactance) * ib)
        .collect();
    let voltages = (0..n)
        .map(|j| {
            v_s + drops
                .iter()
                .enumerate()
                .filter(|&(b, _)| bibc.full[(b, j)] != 0.0)
                .map(|(_, d)| d)
                .sum::<Complex64>()
        })
        .collect();
    Ok(ComplexVoltageState {
        voltages,
        slack: bibc.slack(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PowerFlowSolution {
    pub voltages: ComplexVoltageState,
    pub nodal_currents: Vec<Complex64>,
    pub branch_currents: Vec<Complex64>,
    pub branch_losses: Vec<f64>,
    pub total_loss: f64,
    /// Complex power injected by the slack bus.
    pub slack_power: Complex64,
    pub iterations: usize,
    /// Mean absolute voltage change of every sweep.
    pub change_history: Vec<f64>,
}

pub fn solve_power_flow(
    net: &RadialNetwork,
    bibc: &BibcMatrix,
    inj: &InjectionSet,
    v_s: Complex64,
    options: PowerFlowOptions,
) -> Result<PowerFlowSolution> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "power flow tolerance must be positive, got {}",
            options.tol
        )));
    }
    let n = bibc.buses();
    let slack = bibc.slack();
    let mut v = ComplexVoltageState::flat(n, slack, v_s);
    let mut history = Vec::new();
    for iteration in 1..=options.max_iter {
        let currents = match nodal_currents(&v, inj) {
            Ok(c) => c,
            // The iterate collapsed onto zero voltage: no operating point.
            Err(Error::ZeroVoltage { .. }) if iteration > 1 => {
                return Err(Error::PowerFlowDiverged {
                    iterations: iteration,
                    last_change: history.last().copied().unwrap_or(f64::NAN),
                })
            }
            Err(e) => return Err(e),
        };
        let next = backward_voltage_update(net, bibc, &currents, v_s)?;
        let change = next.mean_abs_change(&v);
        history.push(change);
        v = next;
        if !change.is_finite() {
            break;
        }
        if change < options.tol {
            return Ok(finish(net, bibc, inj, v, iteration, history)?);
        }
    }
    Err(Error::PowerFlowDiverged {
        iterations: options.max_iter,
        last_change: history.last().copied().unwrap_or(f64::NAN),
    })
}

fn finish(
    net: &RadialNetwork,
    bibc: &BibcMatrix,
    inj: &InjectionSet,
    voltages: ComplexVoltageState,
    iterations: usize,
    change_history: Vec<f64>,
) -> Result<PowerFlowSolution> {
    let slack = bibc.slack();
    let mut currents = nodal_currents(&voltages, inj)?;
    currents[slack] = Complex64::new(0.0, 0.0);
    let ib = branch_currents(bibc, &currents);
    let branch_losses: Vec<f64> = ib
        .iter()
        .zip(&net.branches)
        .map(|(i, br)| br.resistance * i.norm_sqr())
        .collect();
    let slack_current: Complex64 = -currents.iter().sum::<Complex64>();
    let slack_power = voltages.slack_voltage() * slack_current.conj();
    Ok(PowerFlowSolution {
        total_loss: branch_losses.iter().sum(),
        voltages,
        nodal_currents: currents,
        branch_currents: ib,
        branch_losses,
        slack_power,
        iterations,
        change_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_bibc;
    use crate::grid::test_nets::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn nodal_current_examples() {
        let v = ComplexVoltageState::from_voltages(vec![c(1.0, 0.0)], 0);
        let i = nodal_currents(&v, &InjectionSet { p: vec![0.1], q: vec![0.0] }).unwrap();
        assert!((i[0] - c(0.1, 0.0)).norm() < 1e-15);
        let i = nodal_currents(&v, &InjectionSet { p: vec![0.0], q: vec![0.1] }).unwrap();
        assert!((i[0] - c(0.0, -0.1)).norm() < 1e-15);
    }

    #[test]
    fn nodal_current_hand_division() {
        // v = 0.95∠-1°, s = 0.1 + j0.02.
        // i = conj(s)/conj(v) = (0.1 - j0.02) / (0.95∠+1°)
        //   = |s|/0.95 ∠(atan2(-0.02, 0.1) - 1°)
        let theta = -1f64.to_radians();
        let v = c(0.95 * theta.cos(), 0.95 * theta.sin());
        let state = ComplexVoltageState::from_voltages(vec![v], 0);
        let i = nodal_currents(&state, &InjectionSet { p: vec![0.1], q: vec![0.02] }).unwrap();
        let mag = (0.1f64.powi(2) + 0.02f64.powi(2)).sqrt() / 0.95;
        let ang = (-0.02f64).atan2(0.1) - 1f64.to_radians();
        assert!((i[0] - Complex64::from_polar(mag, ang)).norm() < 1e-15);
        // Explicit rectangular values for the record.
        assert!((i[0].re - 0.104_879_706_7).abs() < 1e-9, "{}", i[0]);
        assert!((i[0].im - (-0.022_886_520_6)).abs() < 1e-9, "{}", i[0]);
    }

    #[test]
    fn zero_voltage_is_rejected() {
        let v = ComplexVoltageState::from_voltages(vec![c(1.0, 0.0), c(0.0, 0.0)], 0);
        let err = nodal_currents(&v, &InjectionSet::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::ZeroVoltage { bus: 1 }));
    }

    #[test]
    fn backward_update_examples() {
        let net = two_bus(0.1, 0.0);
        let bibc = build_bibc(&net).unwrap();
        let v = backward_voltage_update(&net, &bibc, &[c(0.0, 0.0); 2], c(1.0, 0.0)).unwrap();
        assert_eq!(v.voltages(), &[c(1.0, 0.0), c(1.0, 0.0)]);
        let v = backward_voltage_update(&net, &bibc, &[c(0.0, 0.0), c(-0.1, 0.0)], c(1.0, 0.0))
            .unwrap();
        assert!((v.voltages()[1] - c(0.99, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_injection_power_flow() {
        let net = chain3();
        let bibc = build_bibc(&net).unwrap();
        let sol = solve_power_flow(
            &net,
            &bibc,
            &InjectionSet::zeros(3),
            c(1.0, 0.0),
            PowerFlowOptions::default(),
        )
        .unwrap();
        assert!(sol.voltages.voltages().iter().all(|v| *v == c(1.0, 0.0)));
        assert_eq!(sol.total_loss, 0.0);
    }

    #[test]
    fn overloaded_feeder_diverges() {
        let net = two_bus(0.1, 0.0);
        let bibc = build_bibc(&net).unwrap();
        // v(1 - v) = 0.1 * 5 has no real root.
        let inj = InjectionSet {
            p: vec![0.0, -5.0],
            q: vec![0.0, 0.0],
        };
        let err = solve_power_flow(&net, &bibc, &inj, c(1.0, 0.0), PowerFlowOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::PowerFlowDiverged { .. }));
    }
}
