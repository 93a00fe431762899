use nalgebra::DMatrix;

use super::{validate_network, RadialNetwork};
use crate::error::Result;

/// Bus-injection to branch-current incidence.
///
/// `full[(b, j)]` is 1 iff branch `b` lies on the path from the slack to
/// bus `j`. `reduced` drops the slack column.
#[derive(Clone, Debug, PartialEq)]
pub struct BibcMatrix {
    pub full: DMatrix<f64>,
    pub reduced: DMatrix<f64>,
    slack: usize,
}

impl BibcMatrix {
    pub fn branches(&self) -> usize {
        self.full.nrows()
    }

    pub fn buses(&self) -> usize {
        self.full.ncols()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    /// Non-slack bus ids in the order of the reduced matrix columns.
    pub fn reduced_buses(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.buses()).filter(move |&j| j != self.slack)
    }

    /// Buses downstream of (and including the far end of) branch `b`.
    pub fn downstream(&self, b: usize) -> Vec<usize> {
        (0..self.buses()).filter(|&j| self.full[(b, j)] != 0.0).collect()
    }
}

pub fn build_bibc(net: &RadialNetwork) -> Result<BibcMatrix> {
    validate_network(net).into_result()?;
    let n = net.bus_count();
    let l = net.branch_count();
    let slack = net.slack();
    let upstream = net.upstream_branches();

    let mut full = DMatrix::zeros(l, n);
    for j in 0..n {
        let mut at = j;
        while let Some(k) = upstream[at] {
            full[(k, j)] = 1.0;
            let br = &net.branches[k];
            at = if br.to_bus == at { br.from_bus } else { br.to_bus };
        }
    }
    let reduced = full.clone().remove_column(slack);
    Ok(BibcMatrix {
        full,
        reduced,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::test_nets::*;

    #[test]
    fn chain_columns_follow_path() {
        let m = build_bibc(&chain3()).unwrap();
        assert_eq!(m.full.column(0).as_slice(), &[0.0, 0.0]);
        assert_eq!(m.full.column(1).as_slice(), &[1.0, 0.0]);
        assert_eq!(m.full.column(2).as_slice(), &[1.0, 1.0]);
        assert_eq!(m.reduced.ncols(), 2);
        assert_eq!(m.reduced.column(1).as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn star_columns_are_disjoint() {
        let net = network(3, vec![branch(0, 1, 0.1, 0.0), branch(0, 2, 0.1, 0.0)])
            .normalized()
            .unwrap();
        let m = build_bibc(&net).unwrap();
        assert_eq!(m.full.column(1).as_slice(), &[1.0, 0.0]);
        assert_eq!(m.full.column(2).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_meshed_input() {
        let net = network(
            3,
            vec![
                branch(0, 1, 0.1, 0.1),
                branch(0, 2, 0.1, 0.1),
                branch(1, 2, 0.1, 0.1),
            ],
        );
        assert!(build_bibc(&net).is_err());
    }
}
