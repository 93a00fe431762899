//! TOML grid documents.
//!
//! ```toml
//! name = "example"
//! [base]
//! power_va = 100000.0     # three-phase power base
//! voltage_v = 230.94      # line-to-neutral voltage base
//!
//! [[bus]]
//! label = "R0"
//! kind = "slack"          # slack | load | generator-capable
//! base_voltage_v = 230.94
//!
//! [[branch]]
//! label = "R0-R1"
//! from = "R0"
//! to = "R1"
//! resistance_ohm = 0.0032 # referred to the network voltage base
//! reactance_ohm = 0.0128
//! current_limit_a = 721.7
//! source = "free text"
//! ```
//!
//! Buses may be listed in any order and carry arbitrary labels; the loaded
//! network is normalized so the slack bus gets index 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Branch, Bus, BusKind, PerUnitBase, PhysicalValue, RadialNetwork, Unit};
use crate::error::{Error, Result};

/// The CIGRE European LV benchmark, residential feeder (19 buses).
pub const BUNDLED_CIGRE_LV: &str = include_str!("../../assets/cigre_lv.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDocument {
    pub name: String,
    pub base: PerUnitBase,
    #[serde(rename = "bus")]
    pub buses: Vec<GridBus>,
    #[serde(rename = "branch")]
    pub branches: Vec<GridBranch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBus {
    pub label: String,
    pub kind: BusKind,
    pub base_voltage_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBranch {
    pub label: String,
    pub from: String,
    pub to: String,
    pub resistance_ohm: f64,
    pub reactance_ohm: f64,
    pub current_limit_a: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
}

impl GridDocument {
    pub fn to_network(&self) -> Result<RadialNetwork> {
        let mut problems = Vec::new();
        let buses: Vec<Bus> = self
            .buses
            .iter()
            .enumerate()
            .map(|(id, b)| Bus {
                id,
                label: b.label.clone(),
                kind: b.kind,
                base_voltage: b.base_voltage_v,
            })
            .collect();
        for (i, b) in buses.iter().enumerate() {
            if buses[..i].iter().any(|o| o.label == b.label) {
                problems.push(format!("duplicate bus label `{}`", b.label));
            }
        }
        let lookup = |label: &str, problems: &mut Vec<String>, branch: &str| {
            buses.iter().position(|b| b.label == label).unwrap_or_else(|| {
                problems.push(format!("branch `{branch}` references unknown bus `{label}`"));
                usize::MAX
            })
        };
        let base = self.base;
        let branches: Vec<Branch> = self
            .branches
            .iter()
            .map(|b| Branch {
                label: b.label.clone(),
                from_bus: lookup(&b.from, &mut problems, &b.label),
                to_bus: lookup(&b.to, &mut problems, &b.label),
                resistance: base.to_per_unit(PhysicalValue::new(b.resistance_ohm, Unit::Ohm)),
                reactance: base.to_per_unit(PhysicalValue::new(b.reactance_ohm, Unit::Ohm)),
                current_limit: base
                    .to_per_unit(PhysicalValue::new(b.current_limit_a, Unit::Ampere)),
            })
            .collect();
        if !problems.is_empty() {
            return Err(Error::Schema(problems));
        }
        RadialNetwork {
            name: self.name.clone(),
            buses,
            branches,
            base,
        }
        .normalized()
    }
}

pub fn parse_grid(text: &str, origin: &Path) -> Result<RadialNetwork> {
    let doc: GridDocument = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
    doc.to_network()
}

pub fn load_grid_file(path: &Path) -> Result<RadialNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_bibc, validate_network};
    use std::collections::VecDeque;

    fn cigre() -> RadialNetwork {
        parse_grid(BUNDLED_CIGRE_LV, Path::new("cigre_lv.toml")).unwrap()
    }

    #[test]
    fn bundled_cigre_is_valid() {
        let net = cigre();
        assert_eq!(net.bus_count(), 19);
        assert_eq!(net.branch_count(), 18);
        assert!(validate_network(&net).is_valid());
        assert_eq!(net.buses[0].label, "R0");
    }

    // Independent depth oracle: BFS over an undirected adjacency list.
    fn bfs_depths(net: &RadialNetwork) -> Vec<usize> {
        let n = net.bus_count();
        let mut adj = vec![Vec::new(); n];
        for br in &net.branches {
            adj[br.from_bus].push(br.to_bus);
            adj[br.to_bus].push(br.from_bus);
        }
        let mut depth = vec![usize::MAX; n];
        depth[0] = 0;
        let mut q = VecDeque::from([0]);
        while let Some(u) = q.pop_front() {
            for &w in &adj[u] {
                if depth[w] == usize::MAX {
                    depth[w] = depth[u] + 1;
                    q.push_back(w);
                }
            }
        }
        depth
    }

    #[test]
    fn cigre_bibc_column_sums_equal_depth() {
        let net = cigre();
        let m = build_bibc(&net).unwrap();
        let depth = bfs_depths(&net);
        for j in 0..net.bus_count() {
            assert_eq!(m.full.column(j).sum() as usize, depth[j], "bus {j}");
        }
        // R15 hangs off R4 through R12..R14: transformer + 3 UG1 + 4 UG3.
        let r15 = net.bus_by_label("R15").unwrap();
        assert_eq!(depth[r15], 8);
    }

    #[test]
    fn unknown_bus_reference_is_named() {
        let text = BUNDLED_CIGRE_LV.replacen("to = \"R2\"", "to = \"R99\"", 1);
        let err = parse_grid(&text, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("R99"), "{err}");
    }

    #[test]
    fn document_round_trips_through_toml() {
        let doc: GridDocument = toml::from_str(BUNDLED_CIGRE_LV).unwrap();
        let again: GridDocument = toml::from_str(&toml::to_string(&doc).unwrap()).unwrap();
        assert_eq!(doc, again);
    }
}
