//! Tabular Q-learning over the masked microgrid MDP, with optional delayed Q-update of
//! charging decisions.
//!
//! Each training step draws one uniform `f64` from the run's RNG to decide between
//! exploration and exploitation, and a second draw (`gen_range` over the feasible list)
//! only when exploring. Reproducing a run only requires the same seed and this order.

mod qtable;
mod queue;

pub use qtable::QTable;
pub use queue::{on_charge, on_discharge, ChargeQueue, ChargeRecord, DischargeOutcome, Match};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{evaluate_policy, GreedyPolicy, Initial};
use crate::env::{self, Exogenous, MicrogridParams, State};
use crate::error::{Error, Result};
use crate::metrics::{EvalWindow, PolicyMeasures};
use crate::scalar::Scalar;
use crate::spaces::{check_consistency, ActionSpace, FeasibleCache, StateSpace};

/// Learning hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Scalar + Deserialize<'de>")
)]
pub struct Hyperparams<T> {
    /// Number of training episodes.
    pub episodes: usize,
    /// TD step size.
    pub learning_rate: T,
    /// Scale of the delayed charging credit; zero gives plain Q-learning.
    pub adaptation_rate: T,
    pub discount: T,
    pub epsilon_start: T,
    pub epsilon_end: T,
    /// Share of the episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: T,
    pub seed: u64,
}

impl<T: Scalar> Default for Hyperparams<T> {
    fn default() -> Self {
        Self::reference()
    }
}

impl<T: Scalar> Hyperparams<T> {
    /// 3000 episodes, learning rate 0.3, adaptation rate 1e-5, discount 0.9, epsilon
    /// decaying from 1.0 to 0.01 over the first 80 % of episodes.
    pub fn reference() -> Self {
        Self {
            episodes: 3000,
            learning_rate: T::lit(0.3),
            adaptation_rate: T::lit(1e-5),
            discount: T::lit(0.9),
            epsilon_start: T::lit(1.0),
            epsilon_end: T::lit(0.01),
            epsilon_decay_fraction: T::lit(0.8),
            seed: 0,
        }
    }

    /// Same settings without the delayed charging credit.
    pub fn vanilla(&self) -> Self {
        Self {
            adaptation_rate: T::zero(),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparams(m.to_owned()));
        let (z, one) = (T::zero(), T::one());
        if self.episodes == 0 {
            return bad("episodes must be at least 1");
        }
        if !(self.learning_rate > z && self.learning_rate <= one) {
            // α = 0 is accepted for diagnostics only through `train_unchecked`
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.adaptation_rate >= z) || !self.adaptation_rate.is_finite() {
            return bad("adaptation_rate must be non-negative");
        }
        if !(self.discount >= z && self.discount <= one) {
            return bad("discount must lie in [0, 1]");
        }
        for (name, e) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(e >= z && e <= one) {
                return Err(Error::InvalidHyperparams(format!(
                    "{name} must lie in [0, 1]"
                )));
            }
        }
        if !(self.epsilon_decay_fraction > z && self.epsilon_decay_fraction <= one) {
            return bad("epsilon_decay_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Exploration rate for episode `k` (1-based): linear from `epsilon_start` at `k = 1` to
/// `epsilon_end` at the end of the decay phase, constant afterwards.
pub fn epsilon_schedule<T: Scalar>(k: usize, hp: &Hyperparams<T>) -> T {
    let decay = (hp.epsilon_decay_fraction * T::lit(hp.episodes as f64))
        .round()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    if decay <= 1 {
        return if k <= 1 {
            hp.epsilon_start
        } else {
            hp.epsilon_end
        };
    }
    let progress = T::lit((k.max(1) - 1).min(decay - 1) as f64) / T::lit((decay - 1) as f64);
    hp.epsilon_start + (hp.epsilon_end - hp.epsilon_start) * progress
}

/// Epsilon-greedy choice among `feasible` (ascending). Greedy ties go to the lowest index.
pub fn select_action<T: Scalar, R: Rng + ?Sized>(
    q: &QTable<T>,
    state: usize,
    feasible: &[usize],
    epsilon: T,
    rng: &mut R,
) -> Result<usize> {
    if feasible.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    let u: f64 = rng.gen();
    if u < epsilon.as_f64() {
        Ok(feasible[rng.gen_range(0..feasible.len())])
    } else {
        q.argmax_over(state, feasible)
            .ok_or(Error::EmptyFeasibleSet)
    }
}

/// `Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + gamma max_{a' in feasible_next} Q(s',a'))`.
#[allow(clippy::too_many_arguments)]
pub fn td_update<T: Scalar>(
    q: &mut QTable<T>,
    state: usize,
    action: usize,
    reward: T,
    next_state: usize,
    feasible_next: &[usize],
    alpha: T,
    gamma: T,
) -> Result<()> {
    let next_best = q
        .max_over(next_state, feasible_next)
        .ok_or(Error::EmptyFeasibleSet)?;
    let target = reward + gamma * next_best;
    let updated = (T::one() - alpha) * q.get(state, action) + alpha * target;
    q.set(state, action, updated);
    Ok(())
}

/// Inputs of one training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup<'a, T> {
    /// Discretized training trace, replayed every episode.
    pub train: &'a [Exogenous<T>],
    /// Discretized window the greedy policy is scored on after each episode.
    pub validation: &'a [Exogenous<T>],
    /// Position of the validation window in the full trace (reporting only).
    pub validation_start: usize,
    pub sspace: &'a StateSpace<T>,
    pub aspace: &'a ActionSpace<T>,
    pub params: &'a MicrogridParams<T>,
    pub hp: &'a Hyperparams<T>,
}

/// Learning-curve point recorded at the end of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCurve<T> {
    pub episode: usize,
    pub avg_cost: T,
    pub ess_benefit: T,
    pub q_diff: T,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats<T> {
    pub steps: usize,
    pub charges: usize,
    pub discharges: usize,
    pub delayed_updates: usize,
    /// Discharged energy that found no queued charge.
    pub unmatched_energy: T,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub qtable: QTable<T>,
    pub curves: Vec<EpisodeCurve<T>>,
    pub stats: TrainStats<T>,
}

/// What a training step did, reported to [`train_with_observer`] callbacks.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent<'a, T> {
    pub episode: usize,
    pub t: usize,
    pub state: &'a State<T>,
    pub state_index: usize,
    pub action_index: usize,
    pub feasible: &'a [usize],
    pub next_soc: T,
    pub queue: &'a ChargeQueue<T>,
}

/// Runs Q-learning with delayed Q-update (plain Q-learning when the adaptation rate is 0).
pub fn train<T: Scalar>(setup: &TrainSetup<'_, T>) -> Result<TrainOutcome<T>> {
    train_with_observer(setup, |_| {})
}

/// [`train`] with a callback invoked after every step.
pub fn train_with_observer<T: Scalar, F>(
    setup: &TrainSetup<'_, T>,
    observer: F,
) -> Result<TrainOutcome<T>>
where
    F: FnMut(&StepEvent<'_, T>),
{
    setup.hp.validate()?;
    train_unchecked(setup, observer)
}

/// Training loop without hyperparameter validation, so that degenerate settings such as a
/// zero learning rate can be exercised.
pub fn train_unchecked<T: Scalar, F>(
    setup: &TrainSetup<'_, T>,
    mut observer: F,
) -> Result<TrainOutcome<T>>
where
    F: FnMut(&StepEvent<'_, T>),
{
    let TrainSetup {
        train,
        validation,
        validation_start,
        sspace,
        aspace,
        params,
        hp,
    } = *setup;
    if train.len() < 2 {
        return Err(Error::TraceTooShort {
            len: train.len(),
            min: 2,
        });
    }
    if validation.is_empty() {
        return Err(Error::TraceTooShort { len: 0, min: 1 });
    }
    check_consistency(sspace, aspace, params)?;

    let cache = FeasibleCache::new(sspace, aspace, params);
    let initial = Initial::reset(sspace);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut q = QTable::zeros(sspace.len(), aspace.len());
    q.take_snapshot();
    let mut queue = ChargeQueue::new();
    let mut stats = TrainStats::default();
    let mut curves = Vec::with_capacity(hp.episodes);

    for episode in 1..=hp.episodes {
        let epsilon = epsilon_schedule(episode, hp);
        queue.clear();
        let mut state = initial.state(train[0]);
        let mut coords = sspace.coords(&state)?;
        let mut s = sspace.index_of_coords(&coords);

        for t in 0..train.len() - 1 {
            let feasible = cache.get(&coords);
            let a = select_action(&q, s, feasible, epsilon, &mut rng)?;
            debug_assert!(feasible.binary_search(&a).is_ok());
            let action = aspace.action_at(a, &state.exog);
            let out = env::step(&state, &action, &train[t + 1], params)?;
            let mut next = out.next_state;
            next.soc = sspace.snap_soc(next.soc).1;

            let ess = action.ess();
            if ess < T::zero() {
                on_charge(&mut queue, s, a, ess, t, state.exog.price)?;
                stats.charges += 1;
            } else if ess > T::zero() {
                let m = on_discharge(
                    &mut q,
                    &mut queue,
                    ess,
                    t,
                    state.exog.price,
                    hp.adaptation_rate,
                    hp.discount,
                )?;
                stats.discharges += 1;
                stats.delayed_updates += m.matches.len();
                stats.unmatched_energy += m.unmatched;
            }

            let next_coords = sspace.coords(&next)?;
            let next_s = sspace.index_of_coords(&next_coords);
            td_update(
                &mut q,
                s,
                a,
                out.reward,
                next_s,
                cache.get(&next_coords),
                hp.learning_rate,
                hp.discount,
            )?;
            stats.steps += 1;

            observer(&StepEvent {
                episode,
                t,
                state: &state,
                state_index: s,
                action_index: a,
                feasible,
                next_soc: next.soc,
                queue: &queue,
            });

            state = next;
            coords = next_coords;
            s = next_s;
        }

        let policy = GreedyPolicy { q: &q, sspace };
        let rollout = evaluate_policy(&policy, validation, sspace, aspace, params, &initial)?;
        let measures =
            PolicyMeasures::of(&EvalWindow::from_trajectory(validation_start, &rollout)?);
        curves.push(EpisodeCurve {
            episode,
            avg_cost: measures.average_cost,
            ess_benefit: measures.ess_benefit,
            q_diff: q.epoch_difference(),
        });
    }

    Ok(TrainOutcome {
        qtable: q,
        curves,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_endpoints_and_midpoint() {
        let mut hp = Hyperparams::<f64>::reference();
        hp.episodes = 1000;
        assert_eq!(epsilon_schedule(1, &hp), 1.0);
        assert!((epsilon_schedule(1000, &hp) - 0.01).abs() < 1e-15);
        assert!((epsilon_schedule(800, &hp) - 0.01).abs() < 1e-15);
        hp.epsilon_decay_fraction = 1.0;
        hp.epsilon_end = 0.0;
        let mid = epsilon_schedule(500, &hp);
        assert!((mid - 0.5).abs() <= 1.0 / 999.0, "{mid}");
        assert_eq!(epsilon_schedule(1000, &hp), 0.0);
        hp.episodes = 1;
        assert_eq!(epsilon_schedule(1, &hp), 1.0);
    }

    #[test]
    fn greedy_selection_respects_mask() {
        let mut q = QTable::<f64>::zeros(2, 5);
        q.set(1, 4, 3.0);
        q.set(1, 2, 1.0);
        q.set(1, 0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_action(&q, 1, &[0, 2, 4], 0.0, &mut rng).unwrap(), 4);
        // best entry masked out: fall back to best feasible
        let feasible = [0, 2];
        let pick = select_action(&q, 1, &feasible, 0.0, &mut rng).unwrap();
        let scan = *feasible
            .iter()
            .max_by(|a, b| q.get(1, **a).partial_cmp(&q.get(1, **b)).unwrap())
            .unwrap();
        assert_eq!(pick, scan);
        assert!(matches!(
            select_action(&q, 1, &[], 0.0, &mut rng),
            Err(Error::EmptyFeasibleSet)
        ));
    }

    #[test]
    fn exploration_is_reproducible() {
        let q = QTable::<f64>::zeros(1, 40);
        let feasible: Vec<usize> = (0..40).collect();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| select_action(&q, 0, &feasible, 1.0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn td_update_examples() {
        let mut q = QTable::<f64>::zeros(2, 2);
        q.set(1, 1, 1.0);
        td_update(&mut q, 0, 0, 0.5, 1, &[0, 1], 0.3, 0.9).unwrap();
        assert!((q.get(0, 0) - 0.42).abs() < 1e-15);

        let before = q.get(0, 0);
        td_update(&mut q, 0, 0, 0.5, 1, &[0, 1], 0.0, 0.9).unwrap();
        assert_eq!(q.get(0, 0), before);

        td_update(&mut q, 0, 0, 0.0, 1, &[0, 1], 1.0, 0.0).unwrap();
        assert_eq!(q.get(0, 0), 0.0);
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::<f64>::reference().validate().is_ok());
        let mut hp = Hyperparams::<f64>::reference();
        hp.learning_rate = 0.0;
        assert!(hp.validate().is_err());
        let mut hp = Hyperparams::<f64>::reference();
        hp.discount = 1.5;
        assert!(hp.validate().is_err());
        let mut hp = Hyperparams::<f64>::reference();
        hp.episodes = 0;
        assert!(hp.validate().is_err());
        assert_eq!(
            Hyperparams::<f64>::reference().vanilla().adaptation_rate,
            0.0
        );
    }
}
