//! Evaluation measures: average cost, ESS benefit, Q-value difference and regrets.

use serde::{Deserialize, Serialize};

use crate::dp::Trajectory;
use crate::error::{Error, Result};
use crate::learner::QTable;
use crate::scalar::Scalar;

/// Per-period quantities of a validation window `[start, end)` in trace coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalWindow<T> {
    pub start: usize,
    pub end: usize,
    pub costs: Vec<T>,
    pub rewards: Vec<T>,
    pub ess: Vec<T>,
    pub prices: Vec<T>,
}

impl<T: Scalar> EvalWindow<T> {
    pub fn new(
        start: usize,
        costs: Vec<T>,
        rewards: Vec<T>,
        ess: Vec<T>,
        prices: Vec<T>,
    ) -> Result<Self> {
        let n = costs.len();
        if n == 0 {
            return Err(Error::TraceTooShort { len: 0, min: 1 });
        }
        if rewards.len() != n || ess.len() != n || prices.len() != n {
            return Err(Error::ConfigMismatch(
                "evaluation window sequences differ in length".into(),
            ));
        }
        Ok(Self {
            start,
            end: start + n,
            costs,
            rewards,
            ess,
            prices,
        })
    }

    pub fn from_trajectory(start: usize, trajectory: &Trajectory<T>) -> Result<Self> {
        let steps = &trajectory.steps;
        Self::new(
            start,
            steps.iter().map(|s| s.cost).collect(),
            steps.iter().map(|s| s.reward).collect(),
            steps.iter().map(|s| s.action.ess()).collect(),
            steps.iter().map(|s| s.state.exog.price).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean hourly operation cost over the window.
pub fn average_cost<T: Scalar>(window: &EvalWindow<T>) -> T {
    let sum: T = window.costs.iter().copied().sum();
    sum / T::lit(window.len() as f64)
}

/// Mean of `price * ess` over the window: discharges earn the price, charges pay it.
pub fn ess_benefit<T: Scalar>(window: &EvalWindow<T>) -> T {
    let sum: T = window
        .prices
        .iter()
        .zip(&window.ess)
        .map(|(&p, &e)| p * e)
        .sum();
    sum / T::lit(window.len() as f64)
}

/// Root mean square difference between two equally sized Q-tables.
pub fn q_value_difference<T: Scalar>(current: &QTable<T>, previous: &QTable<T>) -> Result<T> {
    if current.dims() != previous.dims() {
        return Err(Error::DimensionMismatch {
            left: current.dims(),
            right: previous.dims(),
        });
    }
    let n = current.values().len();
    if n == 0 {
        return Ok(T::zero());
    }
    let sum: T = current
        .values()
        .iter()
        .zip(previous.values())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok((sum / T::lit(n as f64)).sqrt())
}

/// Average cost and ESS benefit of one policy on one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeasures<T> {
    pub average_cost: T,
    pub ess_benefit: T,
}

impl<T: Scalar> PolicyMeasures<T> {
    pub fn of(window: &EvalWindow<T>) -> Self {
        Self {
            average_cost: average_cost(window),
            ess_benefit: ess_benefit(window),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regrets<T> {
    /// `AC(policy) - AC(optimal)`.
    pub average_cost: T,
    /// `EB(optimal) - EB(policy)`.
    pub ess_benefit: T,
}

pub fn regrets<T: Scalar>(ac_policy: T, eb_policy: T, ac_optimal: T, eb_optimal: T) -> Regrets<T> {
    Regrets {
        average_cost: ac_policy - ac_optimal,
        ess_benefit: eb_optimal - eb_policy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(costs: Vec<f64>, ess: Vec<f64>, prices: Vec<f64>) -> EvalWindow<f64> {
        let n = costs.len();
        EvalWindow::new(0, costs, vec![0.0; n], ess, prices).unwrap()
    }

    #[test]
    fn average_cost_examples() {
        let w = window(vec![42.0; 5], vec![0.0; 5], vec![70.0; 5]);
        assert_eq!(average_cost(&w), 42.0);
        let alternating: Vec<f64> = (0..24)
            .map(|i| if i % 2 == 0 { 0.0 } else { 100.0 })
            .collect();
        let w = window(alternating, vec![0.0; 24], vec![70.0; 24]);
        assert_eq!(average_cost(&w), 50.0);
    }

    #[test]
    fn ess_benefit_examples() {
        let w = window(vec![1.0; 3], vec![0.0; 3], vec![70.0, 130.0, 140.0]);
        assert_eq!(ess_benefit(&w), 0.0);
        let w = window(vec![0.0; 2], vec![-10.0, 10.0], vec![70.0, 140.0]);
        assert_eq!(ess_benefit(&w), 350.0);
    }

    #[test]
    fn window_validation() {
        assert!(EvalWindow::<f64>::new(0, vec![], vec![], vec![], vec![]).is_err());
        assert!(EvalWindow::new(0, vec![1.0], vec![], vec![1.0], vec![1.0]).is_err());
        let w = EvalWindow::new(
            696,
            vec![1.0, 2.0],
            vec![0.0; 2],
            vec![0.0; 2],
            vec![1.0; 2],
        )
        .unwrap();
        assert_eq!((w.start, w.end, w.len()), (696, 698, 2));
    }

    #[test]
    fn q_difference_examples() {
        let a = QTable::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(q_value_difference(&a, &a).unwrap(), 0.0);
        let b = QTable::from_values(2, 2, vec![1.0, 2.0, 5.0, 4.0]).unwrap();
        assert_eq!(q_value_difference(&a, &b).unwrap(), 1.0);
        let c = QTable::from_values(2, 2, vec![1.0, 2.0, 3.0 + 2.0 * 3.5, 4.0]).unwrap();
        assert_eq!(q_value_difference(&a, &c).unwrap(), 3.5);
        let d = QTable::<f64>::zeros(3, 2);
        assert!(matches!(
            q_value_difference(&a, &d),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn regret_examples() {
        let r = regrets(8183.33_f64, 375.0, 8183.33, 375.0);
        assert_eq!((r.average_cost, r.ess_benefit), (0.0, 0.0));
        let r = regrets(9789.58_f64, 191.66, 8183.33, 375.0);
        assert!((r.average_cost - 1606.25).abs() < 1e-9);
        assert!((r.ess_benefit - 183.34).abs() < 1e-9);
    }
}
