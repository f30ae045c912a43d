use microgrid_core::env::{self, check_constraints, Exogenous, MicrogridParams};
use microgrid_core::learner::{
    on_charge, on_discharge, train, train_unchecked, train_with_observer, ChargeQueue, Hyperparams,
    QTable, TrainSetup,
};
use microgrid_core::spaces::{build_spaces, Bins};
use microgrid_core::{ActionSpace64, StateSpace64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Toy {
    params: MicrogridParams<f64>,
    sspace: StateSpace64,
    aspace: ActionSpace64,
    trace: Vec<Exogenous<f64>>,
}

/// Two days with cheap nights, expensive afternoons and midday sun.
fn toy() -> Toy {
    let params = MicrogridParams::reference();
    let (sspace, aspace) = build_spaces(&params, &Bins::reference()).unwrap();
    let trace = (0..48)
        .map(|h| {
            let hour = h % 24;
            Exogenous {
                demand: if (8..20).contains(&hour) { 100.0 } else { 50.0 },
                pv: if (10..15).contains(&hour) { 20.0 } else { 0.0 },
                price: match hour {
                    0..=7 => 70.0,
                    13..=18 => 140.0,
                    _ => 130.0,
                },
            }
        })
        .collect();
    Toy {
        params,
        sspace,
        aspace,
        trace,
    }
}

fn setup<'a>(toy: &'a Toy, hp: &'a Hyperparams<f64>) -> TrainSetup<'a, f64> {
    TrainSetup {
        train: &toy.trace[..24],
        validation: &toy.trace[24..],
        validation_start: 24,
        sspace: &toy.sspace,
        aspace: &toy.aspace,
        params: &toy.params,
        hp,
    }
}

fn toy_hp(episodes: usize, seed: u64) -> Hyperparams<f64> {
    Hyperparams {
        episodes,
        seed,
        ..Hyperparams::reference()
    }
}

/// Plain tabular Q-learning written from the algorithm description: epsilon-greedy over the
/// feasible set (one uniform draw, then an index draw when exploring), step, TD update.
fn plain_q_learning(toy: &Toy, hp: &Hyperparams<f64>) -> Vec<f64> {
    let (s_space, a_space, p) = (&toy.sspace, &toy.aspace, &toy.params);
    let train = &toy.trace[..24];
    let n_a = a_space.len();
    let mut q = vec![0.0f64; s_space.len() * n_a];
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let decay = ((hp.epsilon_decay_fraction * hp.episodes as f64).round() as usize).max(1);
    for k in 1..=hp.episodes {
        let eps = if decay <= 1 {
            if k == 1 {
                hp.epsilon_start
            } else {
                hp.epsilon_end
            }
        } else {
            let frac = ((k - 1).min(decay - 1)) as f64 / (decay - 1) as f64;
            hp.epsilon_start + (hp.epsilon_end - hp.epsilon_start) * frac
        };
        let mut state = env::State::new(0.0, train[0], 0.0);
        for t in 0..train.len() - 1 {
            let s = s_space.state_index(&state).unwrap();
            let feasible = env::feasible_actions(&state, p, a_space);
            let u: f64 = rng.gen();
            let a = if u < eps {
                feasible[rng.gen_range(0..feasible.len())]
            } else {
                let mut best = feasible[0];
                for &c in &feasible[1..] {
                    if q[s * n_a + c] > q[s * n_a + best] {
                        best = c;
                    }
                }
                best
            };
            let action = a_space.action_at(a, &state.exog);
            let out = env::step(&state, &action, &train[t + 1], p).unwrap();
            let next = out.next_state;
            let s2 = s_space.state_index(&next).unwrap();
            let next_best = env::feasible_actions(&next, p, a_space)
                .iter()
                .map(|&c| q[s2 * n_a + c])
                .fold(f64::NEG_INFINITY, f64::max);
            let target = out.reward + hp.discount * next_best;
            q[s * n_a + a] = (1.0 - hp.learning_rate) * q[s * n_a + a] + hp.learning_rate * target;
            state = next;
        }
    }
    q
}

#[test]
fn zero_adaptation_rate_is_plain_q_learning_bit_for_bit() {
    let toy = toy();
    let hp = toy_hp(50, 11).vanilla();
    let learned = train(&setup(&toy, &hp)).unwrap();
    let reference = plain_q_learning(&toy, &hp);
    assert_eq!(learned.qtable.values().len(), reference.len());
    let differing = learned
        .qtable
        .values()
        .iter()
        .zip(&reference)
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    assert_eq!(differing, 0);
    assert!(reference.iter().any(|&v| v != 0.0));
}

#[test]
fn delayed_update_changes_the_table() {
    let toy = toy();
    let hp = toy_hp(50, 11);
    let delayed = train(&setup(&toy, &hp)).unwrap();
    let vanilla = train(&setup(&toy, &hp.vanilla())).unwrap();
    assert!(delayed.stats.delayed_updates > 0);
    assert_ne!(delayed.qtable, vanilla.qtable);
}

#[test]
fn every_chosen_action_is_feasible_and_charge_is_conserved() {
    let toy = toy();
    let hp = toy_hp(30, 5);
    let mut steps = 0;
    let out = train_with_observer(&setup(&toy, &hp), |ev| {
        steps += 1;
        assert!(ev.feasible.binary_search(&ev.action_index).is_ok());
        let (dg, ess, dr) = toy.aspace.levels(ev.action_index);
        assert!(check_constraints(ev.state, dg, ess, dr, &toy.params).is_ok());
        let q = ev.queue;
        assert_eq!(q.total_enqueued(), q.total_matched() + q.outstanding());
        // lossless storage starting empty: queued energy is exactly the stored energy
        assert_eq!(q.outstanding(), ev.next_soc);
        assert!(q
            .iter()
            .zip(q.iter().skip(1))
            .all(|(a, b)| a.period < b.period));
    })
    .unwrap();
    assert_eq!(steps, 30 * 23);
    assert_eq!(out.stats.steps, steps);
    assert_eq!(out.stats.unmatched_energy, 0.0);
    assert_eq!(out.curves.len(), 30);
}

#[test]
fn zero_learning_rate_without_delay_leaves_q_untouched() {
    let toy = toy();
    let mut hp = toy_hp(1, 0).vanilla();
    hp.learning_rate = 0.0;
    assert!(train(&setup(&toy, &hp)).is_err());
    let out = train_unchecked(&setup(&toy, &hp), |_| {}).unwrap();
    assert!(out.qtable.values().iter().all(|&v| v == 0.0));
}

#[test]
fn training_is_reproducible_from_the_seed() {
    let toy = toy();
    let a = train(&setup(&toy, &toy_hp(20, 3))).unwrap();
    let b = train(&setup(&toy, &toy_hp(20, 3))).unwrap();
    assert_eq!(a.qtable, b.qtable);
    assert_eq!(a.curves, b.curves);
    let c = train(&setup(&toy, &toy_hp(20, 4))).unwrap();
    assert_ne!(a.qtable, c.qtable);
}

#[test]
fn q_difference_curve_reaches_zero_without_updates() {
    let toy = toy();
    let mut hp = toy_hp(3, 0).vanilla();
    hp.learning_rate = 0.0;
    let out = train_unchecked(&setup(&toy, &hp), |_| {}).unwrap();
    assert!(out.curves.iter().all(|c| c.q_diff == 0.0));
}

proptest! {
    #[test]
    fn credit_sign_follows_price_spread(p_charge in 0.0..300.0f64, p_dis in 0.0..300.0f64,
                                        amount in 1u32..6, lag in 1usize..10) {
        let amount = amount as f64 * 10.0;
        let mut q = QTable::<f64>::zeros(2, 2);
        let mut queue = ChargeQueue::new();
        on_charge(&mut queue, 1, 1, -amount, 0, p_charge).unwrap();
        on_discharge(&mut q, &mut queue, amount, lag, p_dis, 1e-5, 0.9).unwrap();
        let v = q.get(1, 1);
        let expected = 1e-5 * 0.9f64.powi(lag as i32) * (p_dis - p_charge) * amount;
        prop_assert!((v - expected).abs() <= 1e-15);
        prop_assert_eq!(v > 0.0, p_dis > p_charge);
        prop_assert_eq!(v < 0.0, p_dis < p_charge);
        prop_assert!(queue.is_empty());
    }

    #[test]
    fn credit_shrinks_geometrically_with_lag(lag in 1usize..20, gamma in 0.1..1.0f64) {
        let credit = |lag: usize| {
            let mut q = QTable::<f64>::zeros(1, 1);
            let mut queue = ChargeQueue::new();
            on_charge(&mut queue, 0, 0, -10.0, 0, 70.0).unwrap();
            on_discharge(&mut q, &mut queue, 10.0, lag, 140.0, 1e-5, gamma).unwrap();
            q.get(0, 0)
        };
        prop_assert!((credit(lag + 1) / credit(lag) - gamma).abs() <= 1e-12);
    }

    #[test]
    fn fifo_matching_conserves_energy(charges in prop::collection::vec(1u32..6, 1..8),
                                      discharges in prop::collection::vec(1u32..6, 1..8)) {
        let mut q = QTable::<f64>::zeros(8, 1);
        let mut queue = ChargeQueue::new();
        let mut t = 0;
        for (i, c) in charges.iter().enumerate() {
            on_charge(&mut queue, i, 0, -(*c as f64) * 10.0, t, 70.0).unwrap();
            t += 1;
        }
        let mut unmatched = 0.0;
        for d in &discharges {
            let out = on_discharge(&mut q, &mut queue, *d as f64 * 10.0, t, 140.0, 1e-5, 0.9).unwrap();
            prop_assert_eq!(out.matched_total() + out.unmatched, *d as f64 * 10.0);
            unmatched += out.unmatched;
            t += 1;
        }
        let charged: f64 = charges.iter().map(|&c| c as f64 * 10.0).sum();
        let discharged: f64 = discharges.iter().map(|&d| d as f64 * 10.0).sum();
        prop_assert_eq!(queue.total_enqueued(), charged);
        prop_assert_eq!(queue.total_matched() + queue.outstanding(), charged);
        prop_assert_eq!(queue.total_matched() + unmatched, discharged);
        prop_assert_eq!(queue.total_matched(), charged.min(discharged));
    }
}
