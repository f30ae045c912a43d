//! Discrete state and action spaces.
//!
//! Controls are gridded in fixed steps (10 kWh by default). Observed quantities (PV, demand,
//! price) are snapped onto configured bins. Both spaces use a dense row-major index:
//! states in the order (prev_dg, pv, demand, soc, price), actions in the order
//! (dg, ess, dr). Serialized Q-tables rely on this order.

use serde::{Deserialize, Serialize};

use crate::env::{feasible_actions, Action, Exogenous, MicrogridParams, State};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default control discretization step in kWh.
pub const GRID_STEP: f64 = 10.0;

/// Observation bins for the exogenous components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Scalar + Deserialize<'de>")
)]
pub struct Bins<T> {
    pub pv: Vec<T>,
    pub demand: Vec<T>,
    pub price: Vec<T>,
}

impl<T: Scalar> Default for Bins<T> {
    fn default() -> Self {
        Self::reference()
    }
}

impl<T: Scalar> Bins<T> {
    /// Bins of the reference campus data set.
    pub fn reference() -> Self {
        let v = |xs: &[f64]| xs.iter().copied().map(T::lit).collect::<Vec<_>>();
        Self {
            pv: v(&[0.0, 10.0, 20.0, 30.0]),
            demand: v(&[40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0]),
            price: v(&[70.0, 130.0, 140.0]),
        }
    }
}

fn check_levels<T: Scalar>(name: &'static str, levels: &[T]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidBins {
            name,
            reason: "empty".into(),
        });
    }
    if levels.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidBins {
            name,
            reason: "non-finite value".into(),
        });
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidBins {
            name,
            reason: "not strictly increasing".into(),
        });
    }
    Ok(())
}

/// `lo, lo + step, ...` up to `hi` (inclusive, within tolerance).
fn stepped_levels<T: Scalar>(lo: T, hi: T, step: T) -> Vec<T> {
    let count = ((hi - lo) / step + T::tolerance())
        .floor()
        .to_usize()
        .unwrap_or(0);
    (0..=count).map(|i| lo + step * T::lit(i as f64)).collect()
}

/// Position of `x` in `levels` when it lies on the grid.
fn position<T: Scalar>(levels: &[T], x: T) -> Option<usize> {
    let tol = T::tolerance();
    levels.iter().position(|&l| (l - x).abs() <= tol)
}

/// Index and value of the level nearest to `x`; ties go to the larger level.
pub fn snap_to_levels<T: Scalar>(levels: &[T], x: T) -> (usize, T) {
    let mut best = 0;
    let mut best_dist = (levels[0] - x).abs();
    for (i, &l) in levels.iter().enumerate().skip(1) {
        let d = (l - x).abs();
        if d <= best_dist {
            best = i;
            best_dist = d;
        }
    }
    (best, levels[best])
}

/// Per-component level indices of a gridded state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateCoords {
    pub prev_dg: usize,
    pub pv: usize,
    pub demand: usize,
    pub soc: usize,
    pub price: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace<T> {
    prev_dg_levels: Vec<T>,
    pv_levels: Vec<T>,
    demand_levels: Vec<T>,
    soc_levels: Vec<T>,
    price_levels: Vec<T>,
}

impl<T: Scalar> StateSpace<T> {
    pub fn from_levels(
        prev_dg_levels: Vec<T>,
        pv_levels: Vec<T>,
        demand_levels: Vec<T>,
        soc_levels: Vec<T>,
        price_levels: Vec<T>,
    ) -> Result<Self> {
        check_levels("prev_dg", &prev_dg_levels)?;
        check_levels("pv", &pv_levels)?;
        check_levels("demand", &demand_levels)?;
        check_levels("soc", &soc_levels)?;
        check_levels("price", &price_levels)?;
        Ok(Self {
            prev_dg_levels,
            pv_levels,
            demand_levels,
            soc_levels,
            price_levels,
        })
    }

    pub fn prev_dg_levels(&self) -> &[T] {
        &self.prev_dg_levels
    }
    pub fn pv_levels(&self) -> &[T] {
        &self.pv_levels
    }
    pub fn demand_levels(&self) -> &[T] {
        &self.demand_levels
    }
    pub fn soc_levels(&self) -> &[T] {
        &self.soc_levels
    }
    pub fn price_levels(&self) -> &[T] {
        &self.price_levels
    }

    /// Level counts in index order (prev_dg, pv, demand, soc, price).
    pub fn dims(&self) -> [usize; 5] {
        [
            self.prev_dg_levels.len(),
            self.pv_levels.len(),
            self.demand_levels.len(),
            self.soc_levels.len(),
            self.price_levels.len(),
        ]
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snaps every exogenous component to its nearest bin. Idempotent.
    pub fn discretize_observation(&self, raw: &Exogenous<T>) -> Exogenous<T> {
        Exogenous {
            demand: snap_to_levels(&self.demand_levels, raw.demand).1,
            pv: snap_to_levels(&self.pv_levels, raw.pv).1,
            price: snap_to_levels(&self.price_levels, raw.price).1,
        }
    }

    /// Nearest SOC level index and value.
    pub fn snap_soc(&self, soc: T) -> (usize, T) {
        snap_to_levels(&self.soc_levels, soc)
    }

    pub fn coords(&self, state: &State<T>) -> Result<StateCoords> {
        let find = |component: &'static str, levels: &[T], value: T| {
            position(levels, value).ok_or(Error::OffGridState {
                component,
                value: value.as_f64(),
            })
        };
        Ok(StateCoords {
            prev_dg: find("prev_dg", &self.prev_dg_levels, state.prev_dg)?,
            pv: find("pv", &self.pv_levels, state.exog.pv)?,
            demand: find("demand", &self.demand_levels, state.exog.demand)?,
            soc: find("soc", &self.soc_levels, state.soc)?,
            price: find("price", &self.price_levels, state.exog.price)?,
        })
    }

    pub fn index_of_coords(&self, c: &StateCoords) -> usize {
        let [_, npv, nd, nsoc, np] = self.dims();
        (((c.prev_dg * npv + c.pv) * nd + c.demand) * nsoc + c.soc) * np + c.price
    }

    pub fn coords_of_index(&self, index: usize) -> Result<StateCoords> {
        let size = self.len();
        if index >= size {
            return Err(Error::IndexOutOfRange { index, size });
        }
        let [_, npv, nd, nsoc, np] = self.dims();
        let mut rest = index;
        let price = rest % np;
        rest /= np;
        let soc = rest % nsoc;
        rest /= nsoc;
        let demand = rest % nd;
        rest /= nd;
        let pv = rest % npv;
        let prev_dg = rest / npv;
        Ok(StateCoords {
            prev_dg,
            pv,
            demand,
            soc,
            price,
        })
    }

    /// Row-major index of a gridded state.
    pub fn state_index(&self, state: &State<T>) -> Result<usize> {
        Ok(self.index_of_coords(&self.coords(state)?))
    }

    pub fn state_from_index(&self, index: usize) -> Result<State<T>> {
        let c = self.coords_of_index(index)?;
        Ok(State::new(
            self.prev_dg_levels[c.prev_dg],
            Exogenous {
                demand: self.demand_levels[c.demand],
                pv: self.pv_levels[c.pv],
                price: self.price_levels[c.price],
            },
            self.soc_levels[c.soc],
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace<T> {
    dg_levels: Vec<T>,
    ess_levels: Vec<T>,
    dr_levels: Vec<T>,
}

impl<T: Scalar> ActionSpace<T> {
    pub fn from_levels(dg_levels: Vec<T>, ess_levels: Vec<T>, dr_levels: Vec<T>) -> Result<Self> {
        check_levels("dg", &dg_levels)?;
        check_levels("ess", &ess_levels)?;
        check_levels("dr", &dr_levels)?;
        Ok(Self {
            dg_levels,
            ess_levels,
            dr_levels,
        })
    }

    pub fn dg_levels(&self) -> &[T] {
        &self.dg_levels
    }
    pub fn ess_levels(&self) -> &[T] {
        &self.ess_levels
    }
    pub fn dr_levels(&self) -> &[T] {
        &self.dr_levels
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.dg_levels.len(),
            self.ess_levels.len(),
            self.dr_levels.len(),
        ]
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index_of_levels(&self, dg: usize, ess: usize, dr: usize) -> usize {
        (dg * self.ess_levels.len() + ess) * self.dr_levels.len() + dr
    }

    /// Level indices `(dg, ess, dr)` of an action index.
    #[inline]
    pub fn level_indices(&self, index: usize) -> (usize, usize, usize) {
        let nd = self.dr_levels.len();
        let ne = self.ess_levels.len();
        (index / (ne * nd), (index / nd) % ne, index % nd)
    }

    /// Control values `(dg, ess, dr)` of an action index.
    #[inline]
    pub fn levels(&self, index: usize) -> (T, T, T) {
        let (g, e, d) = self.level_indices(index);
        (self.dg_levels[g], self.ess_levels[e], self.dr_levels[d])
    }

    /// Balanced action for `index` under observation `exog`.
    pub fn action_at(&self, index: usize, exog: &Exogenous<T>) -> Action<T> {
        let (dg, ess, dr) = self.levels(index);
        Action::balanced(exog, dg, ess, dr)
    }

    /// Row-major index of an action; the grid exchange is ignored.
    pub fn action_index(&self, action: &Action<T>) -> Result<usize> {
        let find = |component: &'static str, levels: &[T], value: T| {
            position(levels, value).ok_or(Error::OffGridAction {
                component,
                value: value.as_f64(),
            })
        };
        let g = find("dg", &self.dg_levels, action.dg())?;
        let e = find("ess", &self.ess_levels, action.ess())?;
        let d = find("dr", &self.dr_levels, action.dr())?;
        Ok(self.index_of_levels(g, e, d))
    }
}

/// Builds both spaces with the default 10 kWh control step.
pub fn build_spaces<T: Scalar>(
    params: &MicrogridParams<T>,
    bins: &Bins<T>,
) -> Result<(StateSpace<T>, ActionSpace<T>)> {
    build_spaces_with_step(params, bins, T::lit(GRID_STEP))
}

/// Builds both spaces. Generator levels span `p_dg_min..=p_dg_max`, ESS flows
/// `-S^B..=C^B`, curtailment `0..=floor(max(phi * demand) / step) * step` and SOC
/// `0..=S^B`, all in increments of `step`.
pub fn build_spaces_with_step<T: Scalar>(
    params: &MicrogridParams<T>,
    bins: &Bins<T>,
    step: T,
) -> Result<(StateSpace<T>, ActionSpace<T>)> {
    params.validate()?;
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::InvalidParams(format!(
            "grid step {step} must be positive"
        )));
    }
    check_levels("pv", &bins.pv)?;
    check_levels("demand", &bins.demand)?;
    check_levels("price", &bins.price)?;

    let dg = stepped_levels(params.p_dg_min, params.p_dg_max, step);
    let ess = stepped_levels(-params.ess_storage_cap, params.ess_power_cap, step);
    let max_demand = *bins.demand.last().expect("checked non-empty");
    let dr = stepped_levels(T::zero(), params.dr_rate * max_demand, step);
    let soc = stepped_levels(T::zero(), params.ess_storage_cap, step);

    let sspace = StateSpace::from_levels(
        dg.clone(),
        bins.pv.clone(),
        bins.demand.clone(),
        soc,
        bins.price.clone(),
    )?;
    let aspace = ActionSpace::from_levels(dg, ess, dr)?;
    Ok((sspace, aspace))
}

/// Checks that the spaces fit the parameters: previous-generator levels equal the generator
/// action levels and every SOC level lies in `[0, S^B]` starting from empty storage.
pub fn check_consistency<T: Scalar>(
    sspace: &StateSpace<T>,
    aspace: &ActionSpace<T>,
    params: &MicrogridParams<T>,
) -> Result<()> {
    let tol = T::tolerance();
    let same_dg = sspace.prev_dg_levels.len() == aspace.dg_levels.len()
        && sspace
            .prev_dg_levels
            .iter()
            .zip(&aspace.dg_levels)
            .all(|(a, b)| (*a - *b).abs() <= tol);
    if !same_dg {
        return Err(Error::ConfigMismatch(
            "previous-generator state levels must equal the generator action levels".into(),
        ));
    }
    let soc = &sspace.soc_levels;
    if soc[0].abs() > tol || soc[soc.len() - 1] > params.ess_storage_cap + tol {
        return Err(Error::ConfigMismatch(format!(
            "SOC levels must start at 0 and stay within the storage capacity {}",
            params.ess_storage_cap
        )));
    }
    Ok(())
}

/// Precomputed feasible action lists for every (prev_dg, soc, demand) level triple, the
/// only state components the constraints depend on.
#[derive(Debug, Clone)]
pub struct FeasibleCache {
    dims: [usize; 3],
    sets: Vec<Vec<usize>>,
}

impl FeasibleCache {
    pub fn new<T: Scalar>(
        sspace: &StateSpace<T>,
        aspace: &ActionSpace<T>,
        params: &MicrogridParams<T>,
    ) -> Self {
        let dims = [
            sspace.prev_dg_levels.len(),
            sspace.soc_levels.len(),
            sspace.demand_levels.len(),
        ];
        let mut sets = Vec::with_capacity(dims.iter().product());
        for &prev_dg in &sspace.prev_dg_levels {
            for &soc in &sspace.soc_levels {
                for &demand in &sspace.demand_levels {
                    let exog = Exogenous {
                        demand,
                        pv: T::zero(),
                        price: T::zero(),
                    };
                    sets.push(feasible_actions(
                        &State::new(prev_dg, exog, soc),
                        params,
                        aspace,
                    ));
                }
            }
        }
        Self { dims, sets }
    }

    #[inline]
    pub fn get(&self, c: &StateCoords) -> &[usize] {
        let [_, ns, nd] = self.dims;
        &self.sets[(c.prev_dg * ns + c.soc) * nd + c.demand]
    }
}
