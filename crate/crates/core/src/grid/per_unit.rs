use serde::{Deserialize, Serialize};

use super::RadialNetwork;
use crate::error::{Error, Result};

/// Per-unit bases for a balanced three-phase network.
///
/// `power_va` is the three-phase power base and `voltage_v` the
/// line-to-neutral voltage base, so
/// `Z_base = 3 V² / S` and `I_base = S / (3 V)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBase", into = "RawBase")]
pub struct PerUnitBase {
    power_va: f64,
    voltage_v: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBase {
    power_va: f64,
    voltage_v: f64,
}

impl TryFrom<RawBase> for PerUnitBase {
    type Error = Error;
    fn try_from(raw: RawBase) -> Result<Self> {
        PerUnitBase::new(raw.power_va, raw.voltage_v)
    }
}

impl From<PerUnitBase> for RawBase {
    fn from(b: PerUnitBase) -> Self {
        RawBase {
            power_va: b.power_va,
            voltage_v: b.voltage_v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Watt,
    Var,
    VoltAmpere,
    Volt,
    Ampere,
    Ohm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalValue {
    pub value: f64,
    pub unit: Unit,
}

impl PhysicalValue {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }
}

impl PerUnitBase {
    pub fn new(power_va: f64, voltage_v: f64) -> Result<Self> {
        for (name, value) in [("power", power_va), ("voltage", voltage_v)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidBase(format!("{name} base must be positive, got {value}")));
            }
        }
        Ok(Self {
            power_va,
            voltage_v,
        })
    }

    pub fn power_va(&self) -> f64 {
        self.power_va
    }

    pub fn voltage_v(&self) -> f64 {
        self.voltage_v
    }

    pub fn power_kw(&self) -> f64 {
        self.power_va / 1e3
    }

    pub fn impedance_ohm(&self) -> f64 {
        3.0 * self.voltage_v * self.voltage_v / self.power_va
    }

    pub fn current_a(&self) -> f64 {
        self.power_va / (3.0 * self.voltage_v)
    }

    pub fn base_of(&self, unit: Unit) -> f64 {
        match unit {
            Unit::Watt | Unit::Var | Unit::VoltAmpere => self.power_va,
            Unit::Volt => self.voltage_v,
            Unit::Ampere => self.current_a(),
            Unit::Ohm => self.impedance_ohm(),
        }
    }

    pub fn to_per_unit(&self, quantity: PhysicalValue) -> f64 {
        quantity.value / self.base_of(quantity.unit)
    }

    pub fn from_per_unit(&self, pu: f64, unit: Unit) -> PhysicalValue {
        PhysicalValue::new(pu * self.base_of(unit), unit)
    }
}

pub fn to_per_unit(net: &RadialNetwork, quantity: PhysicalValue) -> f64 {
    net.base.to_per_unit(quantity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_and_voltage_examples() {
        let base = PerUnitBase::new(100e3, 400.0).unwrap();
        assert!((base.to_per_unit(PhysicalValue::new(30e3, Unit::Watt)) - 0.3).abs() < 1e-15);
        assert_eq!(base.to_per_unit(PhysicalValue::new(400.0, Unit::Volt)), 1.0);
    }

    #[test]
    fn table_one_load_is_consistent() {
        let base = PerUnitBase::new(100e3, 400.0 / 3f64.sqrt()).unwrap();
        let p = base.to_per_unit(PhysicalValue::new(5e3, Unit::Watt));
        let q = base.to_per_unit(PhysicalValue::new(1e3, Unit::Var));
        assert!((p - 0.05).abs() < 1e-15);
        assert!((q - 0.01).abs() < 1e-15);
        // 400 V line-to-line on 100 kVA: Z_base = 1.6 ohm.
        assert!((base.impedance_ohm() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_bases() {
        assert!(PerUnitBase::new(0.0, 230.0).is_err());
        assert!(PerUnitBase::new(1e5, -1.0).is_err());
        assert!(PerUnitBase::new(f64::NAN, 230.0).is_err());
    }

    fn unit() -> impl Strategy<Value = Unit> {
        prop_oneof![
            Just(Unit::Watt),
            Just(Unit::Var),
            Just(Unit::VoltAmpere),
            Just(Unit::Volt),
            Just(Unit::Ampere),
            Just(Unit::Ohm),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(s in 1e-3f64..1e9, v in 1e-2f64..1e6, x in -1e7f64..1e7, u in unit()) {
            let base = PerUnitBase::new(s, v).unwrap();
            let back = base.from_per_unit(base.to_per_unit(PhysicalValue::new(x, u)), u);
            prop_assert!((back.value - x).abs() <= 1e-12 * x.abs().max(f64::MIN_POSITIVE));
        }
    }
}
