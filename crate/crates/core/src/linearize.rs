//! Linear voltage, branch-flow and loss models around a voltage state.
//!
//! All operators scale the BIBC matrix by `|V_df| = diag(1/|v|)`:
//!
//! * voltage sensitivity `B_v = [Mᵀ R M_f |V_df|  Mᵀ X M_f |V_df|]`,
//!   so `v - v_s ≈ B_v [p; q]`;
//! * branch sensitivity `B_r = M_f |V_df|`, so `i_b ≈ B_r p`;
//! * two loss planes per branch, `L0 = diag(i0) R M_f |V_df|` through the
//!   origin and `L1 = diag(i0 + i1) R M_f |V_df|` with offset
//!   `b = -r i0 i1`. The pair is exact at branch currents `0, ±i0, ±i1`.
//!
//! Voltage angles are ignored: only magnitudes enter `|V_df|`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{BibcMatrix, RadialNetwork};

/// Floor applied to supporting currents of branches without downstream
/// generation.
pub const SUPPORTING_CURRENT_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LossPlanes {
    pub l0: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGridModel {
    /// `(n-1) × 2n` voltage sensitivity.
    pub bv: DMatrix<f64>,
    /// `l × n` branch-current sensitivity.
    pub br: DMatrix<f64>,
    pub planes: LossPlanes,
    pub i0: Vec<f64>,
    pub i1: Vec<f64>,
    /// The `|v|` snapshot the model was built from.
    pub voltage_magnitudes: Vec<f64>,
}

fn inverse_magnitudes(vmag: &[f64], n: usize) -> Result<DVector<f64>> {
    if vmag.len() != n {
        return Err(Error::Dimension {
            context: "voltage magnitudes",
            expected: n,
            found: vmag.len(),
        });
    }
    vmag.iter()
        .enumerate()
        .map(|(bus, &m)| {
            if m > 0.0 && m.is_finite() {
                Ok(1.0 / m)
            } else {
                Err(Error::ZeroVoltage { bus })
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(DVector::from_vec)
}

/// `diag(row_scale) · M_f · diag(1/|v|)`.
fn scaled_bibc(bibc: &BibcMatrix, row_scale: &[f64], inv: &DVector<f64>) -> DMatrix<f64> {
    let mut m = bibc.full.clone();
    for (b, mut row) in m.row_iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x *= row_scale[b] * inv[j];
        }
    }
    m
}

pub fn build_voltage_sensitivity(
    net: &RadialNetwork,
    bibc: &BibcMatrix,
    vmag: &[f64],
) -> Result<DMatrix<f64>> {
    let n = bibc.buses();
    let inv = inverse_magnitudes(vmag, n)?;
    let ones = vec![1.0; bibc.branches()];
    let scaled = scaled_bibc(bibc, &ones, &inv);
    let mt = bibc.reduced.transpose();
    let r = DMatrix::from_diagonal(&DVector::from_vec(net.resistances()));
    let x = DMatrix::from_diagonal(&DVector::from_vec(net.reactances()));
    let mut bv = DMatrix::zeros(n - 1, 2 * n);
    bv.columns_mut(0, n).copy_from(&(&mt * r * &scaled));
    bv.columns_mut(n, n).copy_from(&(&mt * x * &scaled));
    Ok(bv)
}

pub fn build_branch_sensitivity(bibc: &BibcMatrix, vmag: &[f64]) -> Result<DMatrix<f64>> {
    let inv = inverse_magnitudes(vmag, bibc.buses())?;
    Ok(scaled_bibc(bibc, &vec![1.0; bibc.branches()], &inv))
}

pub fn build_loss_planes(
    net: &RadialNetwork,
    bibc: &BibcMatrix,
    vmag: &[f64],
    i0: &[f64],
    i1: &[f64],
) -> Result<LossPlanes> {
    let l = bibc.branches();
    for (name, v) in [("i0", i0), ("i1", i1)] {
        if v.len() != l {
            return Err(Error::Dimension {
                context: if name == "i0" { "supporting currents i0" } else { "supporting currents i1" },
                expected: l,
                found: v.len(),
            });
        }
    }
    if let Some(branch) = (0..l).find(|&k| !(i0[k] > 0.0) || !(i1[k] > 0.0)) {
        return Err(Error::SupportingCurrent { branch });
    }
    let inv = inverse_magnitudes(vmag, bibc.buses())?;
    let r = net.resistances();
    let s0: Vec<f64> = (0..l).map(|k| i0[k] * r[k]).collect();
    let s1: Vec<f64> = (0..l).map(|k| (i0[k] + i1[k]) * r[k]).collect();
    Ok(LossPlanes {
        l0: scaled_bibc(bibc, &s0, &inv),
        l1: scaled_bibc(bibc, &s1, &inv),
        b: DVector::from_iterator(l, (0..l).map(|k| -r[k] * i0[k] * i1[k])),
    })
}

/// Supporting currents at 25 % and 75 % of the largest branch current the
/// installed generation can drive, `M_f C_g p_max`, floored at
/// [`SUPPORTING_CURRENT_FLOOR`].
pub fn supporting_currents(bibc: &BibcMatrix, bus_p_max: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max_current = &bibc.full * DVector::from_column_slice(bus_p_max);
    let split = |share: f64| -> Vec<f64> {
        max_current
            .iter()
            .map(|&c| (share * c.abs()).max(SUPPORTING_CURRENT_FLOOR))
            .collect()
    };
    (split(0.25), split(0.75))
}

impl LinearGridModel {
    pub fn build(
        net: &RadialNetwork,
        bibc: &BibcMatrix,
        vmag: &[f64],
        i0: Vec<f64>,
        i1: Vec<f64>,
    ) -> Result<Self> {
        Ok(Self {
            bv: build_voltage_sensitivity(net, bibc, vmag)?,
            br: build_branch_sensitivity(bibc, vmag)?,
            planes: build_loss_planes(net, bibc, vmag, &i0, &i1)?,
            i0,
            i1,
            voltage_magnitudes: vmag.to_vec(),
        })
    }

    pub fn buses(&self) -> usize {
        self.br.ncols()
    }

    pub fn branches(&self) -> usize {
        self.br.nrows()
    }
}

/// Piecewise-linear loss estimate per branch for a nodal injection vector
/// `x` (active or reactive):
/// `max{L0 x, -L0 x, L1 x + b, -L1 x + b}`.
pub fn pwl_loss_eval(planes: &LossPlanes, x: &[f64]) -> Vec<f64> {
    let x = DVector::from_column_slice(x);
    let a0 = &planes.l0 * &x;
    let a1 = &planes.l1 * &x;
    (0..planes.b.len())
        .map(|k| {
            a0[k]
                .abs()
                .max(a1[k] + planes.b[k])
                .max(-a1[k] + planes.b[k])
        })
        .collect()
}
