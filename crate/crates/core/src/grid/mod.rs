//! Radial network data model.
//!
//! A [`RadialNetwork`] is a spanning tree of branches rooted at a single
//! slack bus. After [`RadialNetwork::normalized`] the slack bus sits at
//! index 0, bus ids are contiguous, and every branch points away from the
//! slack (`from_bus` is the upstream end). All electrical quantities are
//! per-unit on the network's [`PerUnitBase`].

mod bibc;
mod file;
mod per_unit;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use bibc::{build_bibc, BibcMatrix};
pub use file::{load_grid_file, parse_grid, GridBranch, GridBus, GridDocument, BUNDLED_CIGRE_LV};
pub use per_unit::{to_per_unit, PerUnitBase, PhysicalValue, Unit};

use crate::error::{Error, Result};

pub type BusId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    Slack,
    Load,
    GeneratorCapable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bus {
    pub id: BusId,
    pub label: String,
    pub kind: BusKind,
    /// Line-to-neutral base voltage in volts, used when reporting SI voltages.
    pub base_voltage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Branch {
    pub label: String,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub resistance: f64,
    pub reactance: f64,
    pub current_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialNetwork {
    pub name: String,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub base: PerUnitBase,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoSlack,
    MultipleSlack(Vec<BusId>),
    NonContiguousIds { position: usize, id: BusId },
    BranchCount { buses: usize, branches: usize },
    UnknownBus { branch: usize, bus: BusId },
    SelfLoop { branch: usize },
    Cycle { branch: usize },
    Disconnected { buses: Vec<BusId> },
    NegativeImpedance { branch: usize },
    ZeroImpedance { branch: usize },
    NonPositiveCurrentLimit { branch: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSlack => write!(f, "no slack bus"),
            Violation::MultipleSlack(ids) => write!(f, "multiple slack buses {ids:?}"),
            Violation::NonContiguousIds { position, id } => {
                write!(f, "bus at position {position} has id {id}")
            }
            Violation::BranchCount { buses, branches } => write!(
                f,
                "{branches} branches for {buses} buses (a radial network needs {})",
                buses.saturating_sub(1)
            ),
            Violation::UnknownBus { branch, bus } => {
                write!(f, "branch {branch} references unknown bus {bus}")
            }
            Violation::SelfLoop { branch } => write!(f, "branch {branch} is a self-loop"),
            Violation::Cycle { branch } => write!(f, "cycle detected at branch {branch}"),
            Violation::Disconnected { buses } => {
                write!(f, "buses {buses:?} are not connected to the slack")
            }
            Violation::NegativeImpedance { branch } => {
                write!(f, "branch {branch} has negative resistance or reactance")
            }
            Violation::ZeroImpedance { branch } => write!(f, "branch {branch} has zero impedance"),
            Violation::NonPositiveCurrentLimit { branch } => {
                write!(f, "branch {branch} has a non-positive current limit")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_cycle(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::Cycle { .. }))
    }

    pub fn is_disconnected(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::Disconnected { .. }))
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidNetwork(self.violations))
        }
    }
}

/// Checks radiality, connectivity, the single-slack rule, and branch
/// parameters. Never fails; the report carries every violation found.
pub fn validate_network(net: &RadialNetwork) -> ValidationReport {
    let mut violations = Vec::new();
    let n = net.buses.len();

    for (position, bus) in net.buses.iter().enumerate() {
        if bus.id != position {
            violations.push(Violation::NonContiguousIds {
                position,
                id: bus.id,
            });
        }
    }

    let slacks: Vec<BusId> = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .collect();
    match slacks.len() {
        0 => violations.push(Violation::NoSlack),
        1 => {}
        _ => violations.push(Violation::MultipleSlack(slacks.clone())),
    }

    if net.branches.len() + 1 != n {
        violations.push(Violation::BranchCount {
            buses: n,
            branches: net.branches.len(),
        });
    }

    for (k, br) in net.branches.iter().enumerate() {
        if br.resistance < 0.0 || br.reactance < 0.0 {
            violations.push(Violation::NegativeImpedance { branch: k });
        } else if br.resistance == 0.0 && br.reactance == 0.0 {
            violations.push(Violation::ZeroImpedance { branch: k });
        }
        if !(br.current_limit > 0.0) {
            violations.push(Violation::NonPositiveCurrentLimit { branch: k });
        }
    }

    // Union-find over endpoints: any branch joining two already-connected
    // buses closes a cycle.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (k, br) in net.branches.iter().enumerate() {
        let mut endpoints_ok = true;
        for bus in [br.from_bus, br.to_bus] {
            if bus >= n {
                violations.push(Violation::UnknownBus { branch: k, bus });
                endpoints_ok = false;
            }
        }
        if !endpoints_ok {
            continue;
        }
        if br.from_bus == br.to_bus {
            violations.push(Violation::SelfLoop { branch: k });
            continue;
        }
        let (a, b) = (find(&mut parent, br.from_bus), find(&mut parent, br.to_bus));
        if a == b {
            violations.push(Violation::Cycle { branch: k });
        } else {
            parent[a] = b;
        }
    }

    if let Some(&slack) = slacks.first() {
        if slack < n {
            let root = find(&mut parent, slack);
            let stray: Vec<BusId> = (0..n).filter(|&j| find(&mut parent, j) != root).collect();
            if !stray.is_empty() {
                violations.push(Violation::Disconnected { buses: stray });
            }
        }
    }

    ValidationReport { violations }
}

impl RadialNetwork {
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn slack(&self) -> BusId {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .unwrap_or(0)
    }

    pub fn bus_by_label(&self, label: &str) -> Option<BusId> {
        self.buses.iter().find(|b| b.label == label).map(|b| b.id)
    }

    pub fn resistances(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.resistance).collect()
    }

    pub fn reactances(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.reactance).collect()
    }

    pub fn current_limits(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.current_limit).collect()
    }

    /// Validates the network, moves the slack bus to index 0 (other buses
    /// keep their relative order) and orients every branch away from the
    /// slack.
    pub fn normalized(mut self) -> Result<Self> {
        validate_network(&self).into_result()?;
        let n = self.buses.len();
        let slack = self.slack();

        let mut new_id = vec![0usize; n];
        let mut next = 1;
        for (old, slot) in new_id.iter_mut().enumerate() {
            if old == slack {
                *slot = 0;
            } else {
                *slot = next;
                next += 1;
            }
        }
        for bus in &mut self.buses {
            bus.id = new_id[bus.id];
        }
        self.buses.sort_by_key(|b| b.id);
        for br in &mut self.branches {
            br.from_bus = new_id[br.from_bus];
            br.to_bus = new_id[br.to_bus];
        }

        let parent_branch = self.upstream_branches();
        for (k, br) in self.branches.iter_mut().enumerate() {
            if parent_branch[br.from_bus] == Some(k) {
                std::mem::swap(&mut br.from_bus, &mut br.to_bus);
            }
        }
        Ok(self)
    }

    /// For each bus, the branch connecting it to its upstream neighbour
    /// (`None` for the slack). Assumes a valid tree.
    pub fn upstream_branches(&self) -> Vec<Option<usize>> {
        let n = self.buses.len();
        let mut adjacency: Vec<Vec<(usize, BusId)>> = vec![Vec::new(); n];
        for (k, br) in self.branches.iter().enumerate() {
            adjacency[br.from_bus].push((k, br.to_bus));
            adjacency[br.to_bus].push((k, br.from_bus));
        }
        let slack = self.slack();
        let mut upstream = vec![None; n];
        let mut seen = vec![false; n];
        seen[slack] = true;
        let mut queue = VecDeque::from([slack]);
        while let Some(bus) = queue.pop_front() {
            for &(k, next) in &adjacency[bus] {
                if !seen[next] {
                    seen[next] = true;
                    upstream[next] = Some(k);
                    queue.push_back(next);
                }
            }
        }
        upstream
    }

    /// Branches between the slack and `bus`, ordered from the slack outwards.
    pub fn path_from_slack(&self, bus: BusId) -> Vec<usize> {
        let upstream = self.upstream_branches();
        let mut path = Vec::new();
        let mut at = bus;
        while let Some(k) = upstream[at] {
            path.push(k);
            let br = &self.branches[k];
            at = if br.to_bus == at { br.from_bus } else { br.to_bus };
        }
        path.reverse();
        path
    }
}

#[cfg(test)]
pub(crate) mod test_nets {
    use super::*;

    pub fn bus(id: BusId, kind: BusKind) -> Bus {
        Bus {
            id,
            label: format!("B{id}"),
            kind,
            base_voltage: 230.0,
        }
    }

    pub fn branch(from: BusId, to: BusId, r: f64, x: f64) -> Branch {
        Branch {
            label: format!("{from}-{to}"),
            from_bus: from,
            to_bus: to,
            resistance: r,
            reactance: x,
            current_limit: 1.0,
        }
    }

    pub fn network(n: usize, branches: Vec<Branch>) -> RadialNetwork {
        let buses = (0..n)
            .map(|i| bus(i, if i == 0 { BusKind::Slack } else { BusKind::Load }))
            .collect();
        RadialNetwork {
            name: "test".into(),
            buses,
            branches,
            base: PerUnitBase::new(100e3, 230.0).unwrap(),
        }
    }

    pub fn two_bus(r: f64, x: f64) -> RadialNetwork {
        network(2, vec![branch(0, 1, r, x)]).normalized().unwrap()
    }

    pub fn chain3() -> RadialNetwork {
        network(3, vec![branch(0, 1, 0.1, 0.05), branch(1, 2, 0.1, 0.05)])
            .normalized()
            .unwrap()
    }
}
