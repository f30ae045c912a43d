//! Exact finite-horizon optimization over a fixed exogenous trace, an exhaustive
//! enumeration oracle for tiny instances, and deterministic policy rollouts.
//!
//! With the exogenous components pinned by the trace, the decision state at period `t`
//! reduces to (SOC level, previous generator level). Terminal value is zero: energy left in
//! the ESS at the end of the horizon is not credited.

use crate::env::{self, Exogenous, MicrogridParams, State};
use crate::error::{Error, Result};
use crate::learner::QTable;
use crate::scalar::Scalar;
use crate::spaces::{check_consistency, ActionSpace, StateSpace};

/// Upper bound on `|A|^T` accepted by [`brute_force_oracle`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Storage level and generator output the rollout or optimization starts from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Initial<T> {
    pub prev_dg: T,
    pub soc: T,
}

impl<T: Scalar> Initial<T> {
    /// Empty storage and the lowest generator level (zero for the reference system).
    pub fn reset(sspace: &StateSpace<T>) -> Self {
        Self {
            prev_dg: sspace.prev_dg_levels()[0],
            soc: sspace.soc_levels()[0],
        }
    }

    pub fn state(&self, exog: Exogenous<T>) -> State<T> {
        State::new(self.prev_dg, exog, self.soc)
    }
}

fn level_position<T: Scalar>(levels: &[T], value: T, component: &'static str) -> Result<usize> {
    let tol = T::tolerance();
    levels
        .iter()
        .position(|&l| (l - value).abs() <= tol)
        .ok_or(Error::OffGridState {
            component,
            value: value.as_f64(),
        })
}

/// Advances `state` under action `index` and snaps the resulting SOC onto the SOC grid.
/// The snap is the identity whenever the ESS efficiency is 1.
fn transition<T: Scalar>(
    state: &State<T>,
    index: usize,
    next_exog: &Exogenous<T>,
    sspace: &StateSpace<T>,
    aspace: &ActionSpace<T>,
    params: &MicrogridParams<T>,
) -> Result<(env::Action<T>, env::StepResult<T>)> {
    let action = aspace.action_at(index, &state.exog);
    let mut out = env::step(state, &action, next_exog, params)?;
    out.next_state.soc = sspace.snap_soc(out.next_state.soc).1;
    Ok((action, out))
}

/// Same as [`transition`] but without computing the reward, which the optimizers do not use
/// and which is undefined on degenerate baselines.
fn transition_cost<T: Scalar>(
    state: &State<T>,
    index: usize,
    sspace: &StateSpace<T>,
    aspace: &ActionSpace<T>,
    params: &MicrogridParams<T>,
) -> Result<(T, usize, T)> {
    let action = aspace.action_at(index, &state.exog);
    env::check_constraints(state, action.dg(), action.ess(), action.dr(), params).map_err(
        |constraint| Error::InfeasibleAction {
            dg: action.dg().as_f64(),
            ess: action.ess().as_f64(),
            dr: action.dr().as_f64(),
            constraint,
        },
    )?;
    let soc = env::soc_next(state.soc, action.ess(), params)?;
    let (soc_i, _) = sspace.snap_soc(soc);
    Ok((env::cost_of(state, &action, params), soc_i, action.dg()))
}

/// Optimal decisions and cost-to-go for every (period, SOC level, previous generator level).
#[derive(Debug, Clone)]
pub struct DpPolicy<T> {
    horizon: usize,
    soc_levels: Vec<T>,
    dg_levels: Vec<T>,
    actions: Vec<usize>,
    cost_to_go: Vec<T>,
}

impl<T: Scalar> DpPolicy<T> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn soc_levels(&self) -> &[T] {
        &self.soc_levels
    }

    pub fn dg_levels(&self) -> &[T] {
        &self.dg_levels
    }

    #[inline]
    fn cell(&self, soc_i: usize, dg_i: usize) -> usize {
        soc_i * self.dg_levels.len() + dg_i
    }

    #[inline]
    fn layer(&self) -> usize {
        self.soc_levels.len() * self.dg_levels.len()
    }

    /// Optimal action index at period `t < horizon`.
    pub fn action(&self, t: usize, soc_i: usize, dg_i: usize) -> usize {
        self.actions[t * self.layer() + self.cell(soc_i, dg_i)]
    }

    /// Minimum total cost from period `t` onward; zero at `t == horizon`.
    pub fn cost_to_go(&self, t: usize, soc_i: usize, dg_i: usize) -> T {
        self.cost_to_go[t * self.layer() + self.cell(soc_i, dg_i)]
    }

    /// Minimum total cost over the horizon from `initial`.
    pub fn optimal_cost(&self, initial: &Initial<T>) -> Result<T> {
        let soc_i = level_position(&self.soc_levels, initial.soc, "soc")?;
        let dg_i = level_position(&self.dg_levels, initial.prev_dg, "prev_dg")?;
        Ok(self.cost_to_go(0, soc_i, dg_i))
    }
}

/// Backward induction `V_t(x, g) = min_a C_t + V_{t+1}(x', a.dg)` with `V_T = 0`; ties keep
/// the lowest action index.
pub fn backward_induction<T: Scalar>(
    trace: &[Exogenous<T>],
    sspace: &StateSpace<T>,
    aspace: &ActionSpace<T>,
    params: &MicrogridParams<T>,
) -> Result<DpPolicy<T>> {
    if trace.is_empty() {
        return Err(Error::TraceTooShort { len: 0, min: 1 });
    }
    check_consistency(sspace, aspace, params)?;
    let horizon = trace.len();
    let soc_levels = sspace.soc_levels().to_vec();
    let dg_levels = sspace.prev_dg_levels().to_vec();
    let (ns, ng) = (soc_levels.len(), dg_levels.len());
    let layer = ns * ng;
    // generator level of each action's dg component, as a prev_dg index
    let dg_next: Vec<usize> = aspace
        .dg_levels()
        .iter()
        .map(|&g| level_position(&dg_levels, g, "dg"))
        .collect::<Result<_>>()?;

    let mut actions = vec![0usize; horizon * layer];
    let mut cost_to_go = vec![T::zero(); (horizon + 1) * layer];
    for t in (0..horizon).rev() {
        for soc_i in 0..ns {
            for dg_i in 0..ng {
                let state = State::new(dg_levels[dg_i], trace[t], soc_levels[soc_i]);
                let feasible = env::feasible_actions(&state, params, aspace);
                let mut best: Option<(usize, T)> = None;
                for a in feasible {
                    let (cost, next_soc, _) = transition_cost(&state, a, sspace, aspace, params)?;
                    let next_dg = dg_next[aspace.level_indices(a).0];
                    let total = cost + cost_to_go[(t + 1) * layer + next_soc * ng + next_dg];
                    if best.is_none_or(|(_, v)| total < v) {
                        best = Some((a, total));
                    }
                }
                let (a, v) = best.ok_or(Error::EmptyFeasibleSet)?;
                actions[t * layer + soc_i * ng + dg_i] = a;
                cost_to_go[t * layer + soc_i * ng + dg_i] = v;
            }
        }
    }
    Ok(DpPolicy {
        horizon,
        soc_levels,
        dg_levels,
        actions,
        cost_to_go,
    })
}

/// Largest violation of the Bellman equation over all table entries.
pub fn bellman_residual<T: Scalar>(
    policy: &DpPolicy<T>,
    trace: &[Exogenous<T>],
    sspace: &StateSpace<T>,
    aspace: &ActionSpace<T>,
    params: &MicrogridParams<T>,
) -> Result<T> {
    let mut worst = T::zero();
    let (ns, ng) = (policy.soc_levels.len(), policy.dg_levels.len());
    for soc_i in 0..ns {
        for dg_i in 0..ng {
            worst = worst.max(policy.cost_to_go(policy.horizon, soc_i, dg_i).abs());
        }
    }
    for (t, exog) in trace.iter().enumerate().take(policy.horizon) {
        for soc_i in 0..ns {
            for dg_i in 0..ng {
                let state = State::new(policy.dg_levels[dg_i], *exog, policy.soc_levels[soc_i]);
                let mut best = T::infinity();
                for a in env::feasible_actions(&state, params, aspace) {
                    let (cost, next_soc, dg) = transition_cost(&state, a, sspace, aspace, params)?;
                    let next_dg = level_position(&policy.dg_levels, dg, "dg")?;
                    best = best.min(cost + policy.cost_to_go(t + 1, next_soc, next_dg));
                }
                worst = worst.max((policy.cost_to_go(t, soc_i, dg_i) - best).abs());
            }
        }
    }
    Ok(worst)
}

/// Exhaustive search over every feasible action sequence from `initial`. Returns the
/// minimum total cost and the first optimal sequence in lexicographic index order.
pub fn brute_force_oracle<T: Scalar>(
    trace: &[Exogenous<T>],
    sspace: &StateSpace<T>,
    aspace: &ActionSpace<T>,
    params: &MicrogridParams<T>,
    initial: &Initial<T>,
) -> Result<(T, Vec<usize>)> {
    if trace.is_empty() {
        return Err(Error::TraceTooShort { len: 0, min: 1 });
    }
    let sequences = (aspace.len() as f64).powi(trace.len() as i32);
    if sequences > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            sequences,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    struct Search<'a, T> {
        trace: &'a [Exogenous<T>],
        sspace: &'a StateSpace<T>,
        aspace: &'a ActionSpace<T>,
        params: &'a MicrogridParams<T>,
        path: Vec<usize>,
        best: Option<(T, Vec<usize>)>,
    }

    impl<T: Scalar> Search<'_, T> {
        fn visit(&mut self, t: usize, prev_dg: T, soc: T, spent: T) -> Result<()> {
            if t == self.trace.len() {
                if self.best.as_ref().is_none_or(|(c, _)| spent < *c) {
                    self.best = Some((spent, self.path.clone()));
                }
                return Ok(());
            }
            let state = State::new(prev_dg, self.trace[t], soc);
            for a in env::feasible_actions(&state, self.params, self.aspace) {
                let action = self.aspace.action_at(a, &state.exog);
                let cost = env::cost_of(&state, &action, self.params);
                let next_soc = env::soc_next(soc, action.ess(), self.params)?;
                let next_soc = self.sspace.snap_soc(next_soc).1;
                self.path.push(a);
                self.visit(t + 1, action.dg(), next_soc, spent + cost)?;
                self.path.pop();
            }
            Ok(())
        }
    }

    let mut search = Search {
        trace,
        sspace,
        aspace,
        params,
        path: Vec::with_capacity(trace.len()),
        best: None,
    };
    search.visit(0, initial.prev_dg, initial.soc, T::zero())?;
    search.best.ok_or(Error::EmptyFeasibleSet)
}

/// A decision rule consulted at each period of a rollout.
pub trait Policy<T: Scalar> {
    /// Picks one of `feasible` (ascending action indices) for `state` at period `t`.
    fn decide(&self, t: usize, state: &State<T>, feasible: &[usize]) -> Result<usize>;
}

/// Greedy policy of a Q-table: highest Q among feasible actions, lowest index on ties.
/// Unvisited rows are all zero and therefore select the lowest feasible index.
pub struct GreedyPolicy<'a, T> {
    pub q: &'a QTable<T>,
    pub sspace: &'a StateSpace<T>,
}

impl<T: Scalar> Policy<T> for GreedyPolicy<'_, T> {
    fn decide(&self, _t: usize, state: &State<T>, feasible: &[usize]) -> Result<usize> {
        let s = self.sspace.state_index(state)?;
        self.q
            .argmax_over(s, feasible)
            .ok_or(Error::EmptyFeasibleSet)
    }
}

impl<T: Scalar> Policy<T> for DpPolicy<T> {
    fn decide(&self, t: usize, state: &State<T>, feasible: &[usize]) -> Result<usize> {
        if t >= self.horizon {
            return Err(Error::IndexOutOfRange {
                index: t,
                size: self.horizon,
            });
        }
        let soc_i = level_position(&self.soc_levels, state.soc, "soc")?;
        let dg_i = level_position(&self.dg_levels, state.prev_dg, "prev_dg")?;
        let a = self.action(t, soc_i, dg_i);
        if feasible.binary_search(&a).is_err() {
            return Err(Error::ConfigMismatch(format!(
                "DP action {a} at period {t} is not feasible for the rollout state"
            )));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep<T> {
    pub t: usize,
    pub state: State<T>,
    pub action_index: usize,
    pub action: env::Action<T>,
    pub cost: T,
    pub reward: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub steps: Vec<TrajectoryStep<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn total_cost(&self) -> T {
        self.steps.iter().map(|s| s.cost).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Deterministic rollout of `policy` over `trace` from `initial`. The final period moves
/// to a state that is discarded, so its next observation is irrelevant.
pub fn evaluate_policy<T: Scalar, P: Policy<T> + ?Sized>(
    policy: &P,
    trace: &[Exogenous<T>],
    sspace: &StateSpace<T>,
    aspace: &ActionSpace<T>,
    params: &MicrogridParams<T>,
    initial: &Initial<T>,
) -> Result<Trajectory<T>> {
    let mut steps = Vec::with_capacity(trace.len());
    let Some(first) = trace.first() else {
        return Ok(Trajectory { steps });
    };
    let mut state = initial.state(*first);
    for t in 0..trace.len() {
        let feasible = env::feasible_actions(&state, params, aspace);
        if feasible.is_empty() {
            return Err(Error::EmptyFeasibleSet);
        }
        let a = policy.decide(t, &state, &feasible)?;
        let next_exog = trace.get(t + 1).unwrap_or(&trace[t]);
        let (action, out) = transition(&state, a, next_exog, sspace, aspace, params)?;
        steps.push(TrajectoryStep {
            t,
            state,
            action_index: a,
            action,
            cost: out.cost,
            reward: out.reward,
        });
        state = out.next_state;
    }
    Ok(Trajectory { steps })
}
