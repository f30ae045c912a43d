//! Deterministic grid-connected microgrid MDP.
//!
//! A state carries the previous dispatchable-generator output, the current exogenous
//! observation (demand, PV, grid price) and the ESS state of charge. An action fixes the
//! generator output, the ESS flow (positive discharges, negative charges) and the curtailed
//! demand; the grid exchange follows from the supply/demand balance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{positive_part, Scalar};
use crate::spaces::ActionSpace;

/// Physical and economic constants of the microgrid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Scalar + Deserialize<'de>")
)]
pub struct MicrogridParams<T> {
    /// Length of one period in hours.
    pub dt: T,
    /// Dispatchable generation cost per kWh.
    pub c_dg: T,
    /// Demand-response (curtailment) cost per kWh.
    pub c_dr: T,
    /// ESS discharge cost per kWh.
    pub c_b: T,
    pub p_dg_max: T,
    pub p_dg_min: T,
    /// Maximum generator ramp per hour.
    pub ramp: T,
    /// ESS charge/discharge power capacity.
    pub ess_power_cap: T,
    /// ESS energy capacity.
    pub ess_storage_cap: T,
    /// Fraction of current demand that may be curtailed.
    pub dr_rate: T,
    pub ess_efficiency: T,
    /// Substitute reward 0 instead of failing when demand - pv <= 0.
    pub zero_reward_on_degenerate: bool,
}

impl<T: Scalar> Default for MicrogridParams<T> {
    fn default() -> Self {
        Self::reference()
    }
}

impl<T: Scalar> MicrogridParams<T> {
    /// Reference campus microgrid: DG 0-60 kW at 500/kWh with 30 kW ramp, 50 kWh / 50 kW
    /// lossless ESS with 50/kWh discharge cost, 20 % curtailable demand at 200/kWh.
    pub fn reference() -> Self {
        let l = T::lit;
        Self {
            dt: l(1.0),
            c_dg: l(500.0),
            c_dr: l(200.0),
            c_b: l(50.0),
            p_dg_max: l(60.0),
            p_dg_min: l(0.0),
            ramp: l(30.0),
            ess_power_cap: l(50.0),
            ess_storage_cap: l(50.0),
            dr_rate: l(0.2),
            ess_efficiency: l(1.0),
            zero_reward_on_degenerate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        let fields = [
            ("dt", self.dt),
            ("c_dg", self.c_dg),
            ("c_dr", self.c_dr),
            ("c_b", self.c_b),
            ("p_dg_max", self.p_dg_max),
            ("p_dg_min", self.p_dg_min),
            ("ramp", self.ramp),
            ("ess_power_cap", self.ess_power_cap),
            ("ess_storage_cap", self.ess_storage_cap),
            ("dr_rate", self.dr_rate),
            ("ess_efficiency", self.ess_efficiency),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("{name} is not finite")));
        }
        let invalid = |msg: &str| Err(Error::InvalidParams(msg.to_owned()));
        if self.dt <= z {
            return invalid("dt must be positive");
        }
        if self.p_dg_min > self.p_dg_max {
            return invalid("p_dg_min exceeds p_dg_max");
        }
        if self.ramp <= z {
            return invalid("ramp must be positive");
        }
        if self.ess_power_cap < z || self.ess_storage_cap < z {
            return invalid("ESS capacities must be non-negative");
        }
        if self.dr_rate < z || self.dr_rate > T::one() {
            return invalid("dr_rate must lie in [0, 1]");
        }
        if self.ess_efficiency <= z || self.ess_efficiency > T::one() {
            return invalid("ess_efficiency must lie in (0, 1]");
        }
        Ok(())
    }

    /// Largest single-period ESS flow, `C^B * dt`.
    #[inline]
    pub fn ess_flow_cap(&self) -> T {
        self.ess_power_cap * self.dt
    }

    /// Admissible ESS flow interval `[lo, hi]` at state of charge `soc`.
    pub fn ess_bounds(&self, soc: T) -> (T, T) {
        let cap = self.ess_flow_cap();
        let rho = self.ess_efficiency;
        let lo = -((self.ess_storage_cap - soc) / rho).min(cap);
        let hi = (rho * soc).min(cap);
        (lo, hi)
    }
}

/// Exogenous observation for one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exogenous<T> {
    pub demand: T,
    pub pv: T,
    pub price: T,
}

impl<T: Scalar> Exogenous<T> {
    pub fn new(demand: T, pv: T, price: T) -> Result<Self> {
        let e = Self { demand, pv, price };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("demand", self.demand),
            ("pv", self.pv),
            ("price", self.price),
        ] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::InvalidExogenous(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Demand left after local PV generation.
    #[inline]
    pub fn net_demand(&self) -> T {
        self.demand - self.pv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State<T> {
    /// Generator output in the previous period.
    pub prev_dg: T,
    pub exog: Exogenous<T>,
    /// Stored ESS energy.
    pub soc: T,
}

impl<T: Scalar> State<T> {
    pub fn new(prev_dg: T, exog: Exogenous<T>, soc: T) -> Self {
        Self { prev_dg, exog, soc }
    }
}

/// A dispatch decision. The grid exchange is derived from the balance
/// `demand = grid + dg + ess + dr + pv`, so every value of this type is balanced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action<T> {
    dg: T,
    ess: T,
    dr: T,
    grid: T,
}

impl<T: Scalar> Action<T> {
    pub fn balanced(exog: &Exogenous<T>, dg: T, ess: T, dr: T) -> Self {
        let grid = exog.demand - exog.pv - dg - ess - dr;
        Self { dg, ess, dr, grid }
    }

    #[inline]
    pub fn dg(&self) -> T {
        self.dg
    }

    /// ESS flow: positive discharges, negative charges.
    #[inline]
    pub fn ess(&self) -> T {
        self.ess
    }

    #[inline]
    pub fn dr(&self) -> T {
        self.dr
    }

    /// Grid exchange: positive buys, negative sells.
    #[inline]
    pub fn grid(&self) -> T {
        self.grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult<T> {
    pub next_state: State<T>,
    pub cost: T,
    pub reward: T,
}

/// The operating constraint an action violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    GeneratorBounds,
    Ramp,
    EssBounds,
    DemandResponse,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::GeneratorBounds => "generator bounds",
            Constraint::Ramp => "ramp",
            Constraint::EssBounds => "ESS bounds",
            Constraint::DemandResponse => "demand response",
        })
    }
}

/// Hourly operation cost. Negative when grid sales outweigh the other terms.
pub fn cost_of<T: Scalar>(state: &State<T>, action: &Action<T>, params: &MicrogridParams<T>) -> T {
    params.c_dg * action.dg
        + params.c_b * positive_part(action.ess)
        + state.exog.price * action.grid
        + params.c_dr * action.dr
}

/// Cost of covering the whole net demand with the dispatchable generator.
pub fn worst_case_cost<T: Scalar>(state: &State<T>, params: &MicrogridParams<T>) -> Result<T> {
    let net = state.exog.net_demand();
    if net <= T::zero() {
        return Err(Error::DegenerateBaseline {
            demand: state.exog.demand.as_f64(),
            pv: state.exog.pv.as_f64(),
        });
    }
    Ok(params.c_dg * net)
}

/// Negated relative change of the hourly cost against the worst-case baseline.
pub fn reward_of<T: Scalar>(
    state: &State<T>,
    action: &Action<T>,
    params: &MicrogridParams<T>,
) -> Result<T> {
    let baseline = match worst_case_cost(state, params) {
        Ok(b) => b,
        Err(Error::DegenerateBaseline { .. }) if params.zero_reward_on_degenerate => {
            return Ok(T::zero())
        }
        Err(e) => return Err(e),
    };
    let cost = cost_of(state, action, params);
    Ok(-(cost - baseline) / baseline)
}

/// State of charge after applying ESS flow `ess` at `soc`.
pub fn soc_next<T: Scalar>(soc: T, ess: T, params: &MicrogridParams<T>) -> Result<T> {
    let rho = params.ess_efficiency;
    let next = if ess >= T::zero() {
        soc - ess / rho
    } else {
        soc - rho * ess
    };
    let tol = T::tolerance();
    let cap = params.ess_storage_cap;
    if next < -tol || next > cap + tol {
        return Err(Error::SocBoundsViolation {
            soc: next.as_f64(),
            cap: cap.as_f64(),
        });
    }
    Ok(next.max(T::zero()).min(cap))
}

/// Checks the generator bound, ramp, ESS and demand-response constraints for the
/// decision `(dg, ess, dr)` taken in `state`.
pub fn check_constraints<T: Scalar>(
    state: &State<T>,
    dg: T,
    ess: T,
    dr: T,
    params: &MicrogridParams<T>,
) -> std::result::Result<(), Constraint> {
    let tol = T::tolerance();
    if dg < params.p_dg_min - tol || dg > params.p_dg_max + tol {
        return Err(Constraint::GeneratorBounds);
    }
    if (dg - state.prev_dg).abs() > params.ramp * params.dt + tol {
        return Err(Constraint::Ramp);
    }
    let (lo, hi) = params.ess_bounds(state.soc);
    if ess < lo - tol || ess > hi + tol {
        return Err(Constraint::EssBounds);
    }
    if dr < -tol || dr > params.dr_rate * state.exog.demand + tol {
        return Err(Constraint::DemandResponse);
    }
    Ok(())
}

/// Indices of every grid point of `aspace` that is admissible in `state`, ascending.
pub fn feasible_actions<T: Scalar>(
    state: &State<T>,
    params: &MicrogridParams<T>,
    aspace: &ActionSpace<T>,
) -> Vec<usize> {
    let tol = T::tolerance();
    let (ess_lo, ess_hi) = params.ess_bounds(state.soc);
    let ramp = params.ramp * params.dt;
    let dr_hi = params.dr_rate * state.exog.demand;
    let dgs: Vec<usize> = aspace
        .dg_levels()
        .iter()
        .enumerate()
        .filter(|(_, &dg)| {
            dg >= params.p_dg_min - tol
                && dg <= params.p_dg_max + tol
                && (dg - state.prev_dg).abs() <= ramp + tol
        })
        .map(|(i, _)| i)
        .collect();
    let esses: Vec<usize> = aspace
        .ess_levels()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e >= ess_lo - tol && e <= ess_hi + tol)
        .map(|(i, _)| i)
        .collect();
    let drs: Vec<usize> = aspace
        .dr_levels()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d >= -tol && d <= dr_hi + tol)
        .map(|(i, _)| i)
        .collect();

    let mut out = Vec::with_capacity(dgs.len() * esses.len() * drs.len());
    for &g in &dgs {
        for &e in &esses {
            for &d in &drs {
                out.push(aspace.index_of_levels(g, e, d));
            }
        }
    }
    out
}

/// Applies `action` in `state` and moves to the next period with observation `next_exog`.
pub fn step<T: Scalar>(
    state: &State<T>,
    action: &Action<T>,
    next_exog: &Exogenous<T>,
    params: &MicrogridParams<T>,
) -> Result<StepResult<T>> {
    check_constraints(state, action.dg, action.ess, action.dr, params).map_err(|constraint| {
        Error::InfeasibleAction {
            dg: action.dg.as_f64(),
            ess: action.ess.as_f64(),
            dr: action.dr.as_f64(),
            constraint,
        }
    })?;
    let soc = soc_next(state.soc, action.ess, params)?;
    let cost = cost_of(state, action, params);
    let reward = reward_of(state, action, params)?;
    Ok(StepResult {
        next_state: State::new(action.dg, *next_exog, soc),
        cost,
        reward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{build_spaces, Bins};

    fn params() -> MicrogridParams<f64> {
        MicrogridParams::reference()
    }

    fn state(prev_dg: f64, demand: f64, pv: f64, price: f64, soc: f64) -> State<f64> {
        State::new(prev_dg, Exogenous::new(demand, pv, price).unwrap(), soc)
    }

    #[test]
    fn cost_examples() {
        let p = params();
        let s = state(60.0, 110.0, 0.0, 140.0, 0.0);
        let a = Action::balanced(&s.exog, 60.0, 0.0, 0.0);
        assert_eq!(a.grid(), 50.0);
        assert_eq!(cost_of(&s, &a, &p), 37000.0);

        let s = state(0.0, 40.0, 30.0, 70.0, 0.0);
        let a = Action::balanced(&s.exog, 0.0, 0.0, 0.0);
        assert_eq!(a.grid(), 10.0);
        assert_eq!(cost_of(&s, &a, &p), 700.0);

        let s = state(0.0, 40.0, 30.0, 140.0, 0.0);
        let a = Action::balanced(&s.exog, 20.0, 0.0, 0.0);
        assert_eq!(a.grid(), -10.0);
        assert_eq!(cost_of(&s, &a, &p), 8600.0);
    }

    #[test]
    fn discharge_cost_applies_only_to_discharge() {
        let p = params();
        let s = state(0.0, 60.0, 0.0, 100.0, 30.0);
        let charge = Action::balanced(&s.exog, 0.0, -10.0, 0.0);
        let discharge = Action::balanced(&s.exog, 0.0, 10.0, 0.0);
        assert_eq!(cost_of(&s, &charge, &p), 100.0 * 70.0);
        assert_eq!(cost_of(&s, &discharge, &p), 100.0 * 50.0 + 50.0 * 10.0);
    }

    #[test]
    fn worst_case_examples() {
        let p = params();
        assert_eq!(
            worst_case_cost(&state(0.0, 100.0, 0.0, 70.0, 0.0), &p),
            Ok(50000.0)
        );
        assert_eq!(
            worst_case_cost(&state(0.0, 40.0, 30.0, 70.0, 0.0), &p),
            Ok(5000.0)
        );
        assert!(matches!(
            worst_case_cost(&state(0.0, 30.0, 30.0, 70.0, 0.0), &p),
            Err(Error::DegenerateBaseline { .. })
        ));
    }

    #[test]
    fn reward_examples() {
        let p = params();
        // Everything from the generator: cost equals the baseline.
        let s = state(60.0, 60.0, 0.0, 140.0, 0.0);
        let a = Action::balanced(&s.exog, 60.0, 0.0, 0.0);
        assert_eq!(reward_of(&s, &a, &p).unwrap(), 0.0);

        // dg 60 plus 40 bought at 175: 37000 against a 50000 baseline.
        let s = state(60.0, 100.0, 0.0, 175.0, 0.0);
        let a = Action::balanced(&s.exog, 60.0, 0.0, 0.0);
        assert_eq!(cost_of(&s, &a, &p), 37000.0);
        assert!((reward_of(&s, &a, &p).unwrap() - 0.26).abs() < 1e-12);

        // Free grid energy: zero cost.
        let s = state(0.0, 40.0, 10.0, 0.0, 0.0);
        let a = Action::balanced(&s.exog, 0.0, 0.0, 0.0);
        assert_eq!(reward_of(&s, &a, &p).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_reward_can_be_zeroed() {
        let mut p = params();
        let s = state(0.0, 30.0, 30.0, 70.0, 0.0);
        let a = Action::balanced(&s.exog, 0.0, 0.0, 0.0);
        assert!(matches!(
            reward_of(&s, &a, &p),
            Err(Error::DegenerateBaseline { .. })
        ));
        p.zero_reward_on_degenerate = true;
        assert_eq!(reward_of(&s, &a, &p), Ok(0.0));
    }

    #[test]
    fn soc_examples() {
        let mut p = params();
        assert_eq!(soc_next(20.0, -10.0, &p).unwrap(), 30.0);
        p.ess_efficiency = 0.9;
        assert!((soc_next(20.0, -10.0, &p).unwrap() - 29.0).abs() < 1e-12);
        assert!((soc_next(20.0, 10.0, &p).unwrap() - (20.0 - 10.0 / 0.9)).abs() < 1e-12);
        assert!(matches!(
            soc_next(5.0, 10.0, &p),
            Err(Error::SocBoundsViolation { .. })
        ));
        assert!(matches!(
            soc_next(45.0, -10.0, &params()),
            Err(Error::SocBoundsViolation { .. })
        ));
    }

    fn reference_aspace() -> ActionSpace<f64> {
        build_spaces(&params(), &Bins::reference()).unwrap().1
    }

    #[test]
    fn empty_battery_cannot_discharge() {
        let p = params();
        let aspace = reference_aspace();
        let s = state(0.0, 80.0, 10.0, 130.0, 0.0);
        let feas = feasible_actions(&s, &p, &aspace);
        assert!(!feas.is_empty());
        assert!(feas.iter().all(|&i| aspace.levels(i).1 <= 0.0));
    }

    #[test]
    fn full_battery_cannot_charge() {
        let p = params();
        let aspace = reference_aspace();
        let s = state(0.0, 80.0, 10.0, 130.0, 50.0);
        let feas = feasible_actions(&s, &p, &aspace);
        assert!(feas.iter().all(|&i| aspace.levels(i).1 >= 0.0));
    }

    #[test]
    fn ramp_window_from_zero() {
        let p = params();
        let aspace = reference_aspace();
        let s = state(0.0, 80.0, 10.0, 130.0, 20.0);
        let mut dgs: Vec<f64> = feasible_actions(&s, &p, &aspace)
            .into_iter()
            .map(|i| aspace.levels(i).0)
            .collect();
        dgs.dedup();
        assert_eq!(dgs, vec![0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn small_demand_blocks_curtailment() {
        let p = params();
        let aspace = reference_aspace();
        let s = state(0.0, 40.0, 10.0, 130.0, 20.0);
        assert!(feasible_actions(&s, &p, &aspace)
            .into_iter()
            .all(|i| aspace.levels(i).2 == 0.0));
    }

    #[test]
    fn step_identity_and_charge() {
        let p = params();
        let s = state(0.0, 60.0, 10.0, 70.0, 20.0);
        let zero = Action::balanced(&s.exog, 0.0, 0.0, 0.0);
        let r = step(&s, &zero, &s.exog, &p).unwrap();
        assert_eq!(r.next_state.soc, 20.0);
        assert_eq!(r.next_state.prev_dg, 0.0);

        let charge = Action::balanced(&s.exog, 10.0, -10.0, 0.0);
        let next = Exogenous::new(90.0, 0.0, 140.0).unwrap();
        let r = step(&s, &charge, &next, &p).unwrap();
        assert_eq!(r.next_state.soc, 30.0);
        assert_eq!(r.next_state.prev_dg, 10.0);
        assert_eq!(r.next_state.exog, next);
        let again = step(&s, &charge, &next, &p).unwrap();
        assert_eq!(r.cost.to_bits(), again.cost.to_bits());
        assert_eq!(r.reward.to_bits(), again.reward.to_bits());
        assert_eq!(r.next_state, again.next_state);
    }

    #[test]
    fn step_rejects_infeasible() {
        let p = params();
        let s = state(0.0, 60.0, 10.0, 70.0, 20.0);
        let jump = Action::balanced(&s.exog, 60.0, 0.0, 0.0);
        assert!(matches!(
            step(&s, &jump, &s.exog, &p),
            Err(Error::InfeasibleAction {
                constraint: Constraint::Ramp,
                ..
            })
        ));
        let over = Action::balanced(&s.exog, 0.0, 30.0, 0.0);
        assert!(matches!(
            step(&s, &over, &s.exog, &p),
            Err(Error::InfeasibleAction {
                constraint: Constraint::EssBounds,
                ..
            })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.ess_efficiency = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.p_dg_min = 70.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.dr_rate = 1.5;
        assert!(p.validate().is_err());
        assert!(Exogenous::new(-1.0, 0.0, 0.0).is_err());
    }
}
