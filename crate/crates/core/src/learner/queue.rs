//! FIFO bookkeeping of ESS charging decisions and the retroactive credit they receive when
//! the stored energy is later discharged.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::learner::QTable;
use crate::scalar::Scalar;

/// An outstanding (not yet discharged) amount of charged energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeRecord<T> {
    pub state_index: usize,
    pub action_index: usize,
    /// Unmatched part of the charged amount `|P^B|`.
    pub remaining: T,
    /// Period in which the charge happened.
    pub period: usize,
    /// Grid price during the charging period.
    pub price: T,
}

/// A charged amount consumed by a discharge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match<T> {
    pub period: usize,
    pub amount: T,
    /// Adjustment added to the charging action's Q-value.
    pub adjustment: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DischargeOutcome<T> {
    pub matches: Vec<Match<T>>,
    /// Part of the discharge no queued charge could account for.
    pub unmatched: T,
}

impl<T: Scalar> DischargeOutcome<T> {
    pub fn matched_total(&self) -> T {
        self.matches.iter().map(|m| m.amount).sum()
    }
}

/// FIFO of charge records, oldest at the front.
#[derive(Debug, Clone)]
pub struct ChargeQueue<T> {
    records: VecDeque<ChargeRecord<T>>,
    enqueued: T,
    matched: T,
}

impl<T: Scalar> Default for ChargeQueue<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ChargeQueue<T> {
    pub fn new() -> Self {
        Self {
            records: VecDeque::new(),
            enqueued: T::zero(),
            matched: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn front(&self) -> Option<&ChargeRecord<T>> {
        self.records.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChargeRecord<T>> {
        self.records.iter()
    }

    /// Sum of unmatched charge over all records.
    pub fn outstanding(&self) -> T {
        self.records.iter().map(|r| r.remaining).sum()
    }

    /// Total charge ever enqueued since the last [`ChargeQueue::clear`].
    pub fn total_enqueued(&self) -> T {
        self.enqueued
    }

    /// Total charge consumed by discharges since the last [`ChargeQueue::clear`].
    pub fn total_matched(&self) -> T {
        self.matched
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.enqueued = T::zero();
        self.matched = T::zero();
    }
}

/// Queues a charging decision `ess < 0` taken at period `t` and price `price`.
pub fn on_charge<T: Scalar>(
    queue: &mut ChargeQueue<T>,
    state_index: usize,
    action_index: usize,
    ess: T,
    t: usize,
    price: T,
) -> Result<()> {
    if !(ess < T::zero()) {
        return Err(Error::NotACharge(ess.as_f64()));
    }
    if let Some(tail) = queue.records.back() {
        if t <= tail.period {
            return Err(Error::NonMonotonicPeriod {
                period: t,
                tail: tail.period,
            });
        }
    }
    let amount = -ess;
    queue.records.push_back(ChargeRecord {
        state_index,
        action_index,
        remaining: amount,
        period: t,
        price,
    });
    queue.enqueued += amount;
    Ok(())
}

/// Matches a discharge `ess > 0` at period `t` against the oldest queued charges and credits
/// each matched charging action with `beta * gamma^(t - tau) * (price - p_tau) * amount`.
pub fn on_discharge<T: Scalar>(
    q: &mut QTable<T>,
    queue: &mut ChargeQueue<T>,
    ess: T,
    t: usize,
    price: T,
    beta: T,
    gamma: T,
) -> Result<DischargeOutcome<T>> {
    if !(ess > T::zero()) {
        return Err(Error::NotADischarge(ess.as_f64()));
    }
    let mut left = ess;
    let mut matches = Vec::new();
    while left > T::zero() {
        let Some(front) = queue.records.front_mut() else {
            break;
        };
        let amount = left.min(front.remaining);
        let lag = t
            .checked_sub(front.period)
            .ok_or(Error::NonMonotonicPeriod {
                period: t,
                tail: front.period,
            })?;
        let lag = i32::try_from(lag).unwrap_or(i32::MAX);
        let adjustment = beta * gamma.powi(lag) * (price - front.price) * amount;
        // adding a signed zero could still flip the sign bit of a zero entry
        if adjustment != T::zero() {
            q.add(front.state_index, front.action_index, adjustment);
        }
        matches.push(Match {
            period: front.period,
            amount,
            adjustment,
        });
        left -= amount;
        queue.matched += amount;
        if amount >= front.remaining {
            queue.records.pop_front();
        } else {
            front.remaining -= amount;
        }
    }
    if left > T::zero() {
        log::debug!("discharge of {ess} at period {t} left {left} without a matching charge");
    }
    Ok(DischargeOutcome {
        matches,
        unmatched: left,
    })
}
