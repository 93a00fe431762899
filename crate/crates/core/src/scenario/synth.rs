//! Deterministic synthetic household, PV and price profiles.
//!
//! These stand in for measured load profiles and spot-market prices, which
//! are not redistributable. Envelopes (1 h resolution, one household):
//!
//! * load: 0.15 kW base, a morning peak near 07:30 (09:00 on weekends) and
//!   an evening peak near 19:00, scaled per household by U(0.7, 1.3) and
//!   per step by a clipped N(1, 0.2) factor. Mean about 0.35 kW; reactive
//!   power is 0.2 of active power (power factor about 0.98).
//! * PV availability in [0, 1] of installed power: a sin^1.5 bell between
//!   06:00 and 20:00, times a daily clearness U(0.35, 1), an hourly cloud
//!   factor 1 - 0.3 U(0, 1) and a per-household factor U(0.95, 1.05),
//!   clipped to 1. Zero outside daylight, so always zero at midnight.
//!   Capacity factor about 0.19.
//! * price in currency per kWh: 0.035 base, night discount, morning and
//!   evening peaks, a midday solar dip, a weekend discount, daily N(0, 0.003)
//!   and hourly N(0, 0.002) noise, clipped to [0.015, 0.08]. Always positive.
//!
//! The same seed always yields bit-identical series.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    /// Step length in hours.
    pub resolution: f64,
    /// `load_kw[k][h]`: household `h` in period `k`.
    pub load_kw: Vec<Vec<f64>>,
    pub load_kvar: Vec<Vec<f64>>,
    /// Share of installed PV power available, per household.
    pub pv_availability: Vec<Vec<f64>>,
    pub price: Vec<f64>,
}

impl Profiles {
    pub fn steps(&self) -> usize {
        self.price.len()
    }
}

fn bump(t: f64, center: f64, width: f64) -> f64 {
    // Circular distance so peaks near midnight wrap.
    let mut d = (t - center).abs();
    if d > 12.0 {
        d = 24.0 - d;
    }
    (-0.5 * (d / width).powi(2)).exp()
}

fn sun(t: f64) -> f64 {
    const RISE: f64 = 6.0;
    const SET: f64 = 20.0;
    if t <= RISE || t >= SET {
        0.0
    } else {
        (std::f64::consts::PI * (t - RISE) / (SET - RISE)).sin().powf(1.5)
    }
}

/// `days · 24 / resolution` steps for `households` households. The first
/// step starts on a Monday at midnight.
pub fn synth_profiles(seed: u64, days: usize, resolution: f64, households: usize) -> Result<Profiles> {
    if days == 0 {
        return Err(Error::InvalidParameter("profiles need at least one day".into()));
    }
    let per_day = 24.0 / resolution;
    if !(resolution > 0.0) || (per_day - per_day.round()).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "resolution must divide a day evenly, got {resolution} h"
        )));
    }
    let per_day = per_day.round() as usize;
    let steps = days * per_day;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0);
    let noise = Normal::<f64>::new(1.0, 0.2).expect("valid normal");
    let day_noise = Normal::<f64>::new(0.0, 0.003).expect("valid normal");
    let hour_noise = Normal::<f64>::new(0.0, 0.002).expect("valid normal");

    let scale: Vec<f64> = (0..households).map(|_| rng.gen_range(0.7..1.3)).collect();
    let mut load_kw = Vec::with_capacity(steps);
    let mut pv = Vec::with_capacity(steps);
    let mut price = Vec::with_capacity(steps);
    for day in 0..days {
        let weekend = day % 7 >= 5;
        let clearness = rng.gen_range(0.35..1.0);
        let day_offset = day_noise.sample(&mut rng);
        for s in 0..per_day {
            let t = s as f64 * resolution;
            let morning = if weekend { bump(t, 9.0, 1.2) * 0.6 } else { bump(t, 7.5, 1.0) * 0.5 };
            let evening = bump(t, 19.0, 1.5) * if weekend { 1.0 } else { 0.9 };
            let shape = 0.15 + morning + evening;
            load_kw.push(
                scale
                    .iter()
                    .map(|sc| sc * shape * noise.sample(&mut rng).clamp(0.4f64, 1.8))
                    .collect::<Vec<f64>>(),
            );

            let cloud = 1.0 - 0.3 * unit.sample(&mut rng);
            let bell = sun(t) * clearness * cloud;
            pv.push(
                (0..households)
                    .map(|_| {
                        let own: f64 = rng.gen_range(0.95..1.05);
                        (bell * own).min(1.0)
                    })
                    .collect::<Vec<f64>>(),
            );

            let base = 0.035 - 0.008 * bump(t, 3.0, 2.5)
                + 0.010 * bump(t, 8.0, 1.5)
                + 0.015 * bump(t, 19.0, 2.0)
                - 0.006 * bump(t, 13.0, 2.0)
                - if weekend { 0.004 } else { 0.0 };
            price.push((base + day_offset + hour_noise.sample(&mut rng)).clamp(0.015, 0.08));
        }
    }
    let load_kvar = load_kw
        .iter()
        .map(|row: &Vec<f64>| row.iter().map(|p| 0.2 * p).collect())
        .collect();
    Ok(Profiles {
        resolution,
        load_kw,
        load_kvar,
        pv_availability: pv,
        price,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_at_one_hour_has_744_points() {
        let p = synth_profiles(7, 31, 1.0, 18).unwrap();
        assert_eq!(p.steps(), 744);
        assert_eq!(p.load_kw.len(), 744);
        assert_eq!(p.pv_availability[0].len(), 18);
    }

    #[test]
    fn same_seed_same_series() {
        let a = synth_profiles(42, 3, 1.0, 4).unwrap();
        let b = synth_profiles(42, 3, 1.0, 4).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_ne!(a, synth_profiles(43, 3, 1.0, 4).unwrap());
    }

    #[test]
    fn envelopes() {
        let p = synth_profiles(1, 31, 1.0, 18).unwrap();
        for (k, row) in p.pv_availability.iter().enumerate() {
            let hour = k % 24;
            if hour == 0 || hour <= 6 || hour >= 20 {
                assert!(row.iter().all(|&a| a == 0.0), "sun at {hour}:00");
            }
            assert!(row.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
        assert!(p.price.iter().all(|&c| c > 0.0));
        let mean_load: f64 =
            p.load_kw.iter().flatten().sum::<f64>() / (p.load_kw.len() * 18) as f64;
        assert!((0.25..0.5).contains(&mean_load), "mean load {mean_load}");
        let cf: f64 = p.pv_availability.iter().flatten().sum::<f64>() / (744.0 * 18.0);
        assert!((0.12..0.3).contains(&cf), "capacity factor {cf}");
        // Evening prices beat midday ones by more than the round-trip loss.
        let at = |h: usize| (0..31).map(|d| p.price[d * 24 + h]).sum::<f64>() / 31.0;
        assert!(at(19) / at(13) > 1.0 / (0.88 * 0.88));
    }

    #[test]
    fn odd_resolution_rejected() {
        assert!(synth_profiles(1, 1, 0.7, 1).is_err());
        assert!(synth_profiles(1, 0, 1.0, 1).is_err());
    }
}
