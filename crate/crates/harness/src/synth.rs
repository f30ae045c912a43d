//! Synthetic hourly traces drawn from per-hour categorical distributions over the bins.
//!
//! The diurnal template is a structural stand-in (night-time zero PV, daytime demand and
//! price peaks), not a statistical model of any measured site.

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use microgrid_core::Exogenous64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::{ExogenousTrace, TraceRecord};

/// Weights over the pv, demand and price bins for one hour of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourDistribution {
    pub pv: Vec<f64>,
    pub demand: Vec<f64>,
    pub price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalProfile {
    pub pv_bins: Vec<f64>,
    pub demand_bins: Vec<f64>,
    pub price_bins: Vec<f64>,
    /// One entry per hour of day, starting at midnight.
    pub hours: Vec<HourDistribution>,
}

// Index of the most likely bin per hour of day.
const PV_MODE: [usize; 24] = [
    0, 0, 0, 0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 3, 2, 2, 1, 1, 0, 0, 0, 0, 0, 0,
];
const DEMAND_MODE: [usize; 24] = [
    1, 0, 0, 0, 0, 1, 2, 3, 5, 6, 7, 7, 6, 7, 7, 6, 6, 5, 5, 4, 3, 3, 2, 1,
];
// 0 off-peak, 1 mid, 2 peak.
const PRICE_MODE: [usize; 24] = [
    0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 2, 2, 1, 1, 2, 2, 2, 1, 1, 1, 1, 0, 0, 0,
];

fn spread(n: usize, mode: usize, centre: f64, side: f64) -> Vec<f64> {
    (0..n)
        .map(|i| match i.abs_diff(mode) {
            0 => centre,
            1 => side,
            _ => 0.0,
        })
        .collect()
}

impl DiurnalProfile {
    /// Template over pv {0,10,20,30}, demand {40,...,110} and price {70,130,140}.
    pub fn reference() -> Self {
        let pv_bins = vec![0.0, 10.0, 20.0, 30.0];
        let demand_bins: Vec<f64> = (0..8).map(|i| 40.0 + 10.0 * i as f64).collect();
        let price_bins = vec![70.0, 130.0, 140.0];
        let hours = (0..24)
            .map(|h| HourDistribution {
                pv: if PV_MODE[h] == 0 && !(7..=17).contains(&h) {
                    spread(pv_bins.len(), 0, 1.0, 0.0)
                } else {
                    spread(pv_bins.len(), PV_MODE[h], 0.6, 0.2)
                },
                demand: spread(demand_bins.len(), DEMAND_MODE[h], 0.6, 0.2),
                price: spread(price_bins.len(), PRICE_MODE[h], 0.8, 0.1),
            })
            .collect();
        Self {
            pv_bins,
            demand_bins,
            price_bins,
            hours,
        }
    }
}

pub fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 3, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid constant date")
}

struct Samplers {
    pv: WeightedIndex<f64>,
    demand: WeightedIndex<f64>,
    price: WeightedIndex<f64>,
}

/// Draws `hours` consecutive hourly records starting at `start`.
///
/// # Panics
/// If the profile does not have 24 hours, or a weight vector is empty, all zero, negative
/// or of a different length than its bins.
pub fn synth_trace(
    seed: u64,
    hours: usize,
    start: NaiveDateTime,
    profile: &DiurnalProfile,
) -> ExogenousTrace {
    assert_eq!(profile.hours.len(), 24, "profile must cover 24 hours");
    let samplers: Vec<Samplers> = profile
        .hours
        .iter()
        .map(|h| {
            assert_eq!(h.pv.len(), profile.pv_bins.len());
            assert_eq!(h.demand.len(), profile.demand_bins.len());
            assert_eq!(h.price.len(), profile.price_bins.len());
            Samplers {
                pv: WeightedIndex::new(&h.pv).expect("valid pv weights"),
                demand: WeightedIndex::new(&h.demand).expect("valid demand weights"),
                price: WeightedIndex::new(&h.price).expect("valid price weights"),
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..hours)
        .map(|k| {
            let timestamp = start + Duration::hours(k as i64);
            let s = &samplers[timestamp.hour() as usize];
            let pv = profile.pv_bins[s.pv.sample(&mut rng)];
            let demand = profile.demand_bins[s.demand.sample(&mut rng)];
            let price = profile.price_bins[s.price.sample(&mut rng)];
            TraceRecord {
                timestamp,
                exog: Exogenous64 { demand, pv, price },
            }
        })
        .collect();
    let mut trace = ExogenousTrace::new(records, format!("synthetic(seed={seed})"));
    trace.meta.discretized = true;
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_trace() {
        let p = DiurnalProfile::reference();
        let a = synth_trace(7, 240, default_start(), &p);
        let b = synth_trace(7, 240, default_start(), &p);
        assert_eq!(a, b);
        let c = synth_trace(8, 240, default_start(), &p);
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn values_lie_on_bins_and_nights_are_dark() {
        let p = DiurnalProfile::reference();
        let t = synth_trace(1, 24 * 30, default_start(), &p);
        assert_eq!(t.len(), 720);
        for r in &t.records {
            assert!([0.0, 10.0, 20.0, 30.0].contains(&r.exog.pv));
            assert!(p.demand_bins.contains(&r.exog.demand));
            assert!([70.0, 130.0, 140.0].contains(&r.exog.price));
            let h = r.timestamp.hour();
            if h < 6 || h >= 19 {
                assert_eq!(r.exog.pv, 0.0, "pv at hour {h}");
            }
            assert!(r.exog.demand > r.exog.pv);
        }
    }

    #[test]
    fn timestamps_are_hourly() {
        let t = synth_trace(3, 50, default_start(), &DiurnalProfile::reference());
        for w in t.records.windows(2) {
            assert_eq!(w[1].timestamp - w[0].timestamp, Duration::hours(1));
        }
    }
}
