//! Training, optimization and comparison runs over a configured trace.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use microgrid_core::dp::{self, evaluate_policy, GreedyPolicy, Initial, Trajectory};
use microgrid_core::learner::{self, EpisodeCurve, TrainSetup, TrainStats};
use microgrid_core::metrics::{regrets, EvalWindow, PolicyMeasures};
use microgrid_core::spaces::build_spaces;
use microgrid_core::{
    ActionSpace64, DpPolicy64, Exogenous64, Hyperparams64, QTable64, StateSpace64,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{save_curves, save_dispatch, save_dp_policy, save_json};
use crate::config::RunConfig;
use crate::qtable_io::{save_qtable, QTableHeader};
use crate::trace::{ExogenousTrace, TraceMeta};

/// A configuration resolved into a discretized trace and its spaces.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub trace: ExogenousTrace,
    pub exog: Vec<Exogenous64>,
    pub sspace: StateSpace64,
    pub aspace: ActionSpace64,
    pub validation_start: usize,
}

impl Prepared {
    pub fn new(config: &RunConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let raw = config.load_trace()?;
        Self::from_trace(config, &raw)
    }

    /// Uses `trace` as loaded (prices already scaled) in place of the configured source.
    pub fn from_trace(config: &RunConfig, trace: &ExogenousTrace) -> anyhow::Result<Self> {
        config.check_split(trace.len())?;
        let (sspace, aspace) = build_spaces(&config.params, &config.bins)?;
        let trace = trace.discretize(&sspace);
        let exog = trace.exogenous();
        Ok(Self {
            config: config.clone(),
            validation_start: exog.len() - config.validation_hours,
            trace,
            exog,
            sspace,
            aspace,
        })
    }

    pub fn train_window(&self) -> &[Exogenous64] {
        &self.exog[..self.validation_start]
    }

    pub fn validation_window(&self) -> &[Exogenous64] {
        &self.exog[self.validation_start..]
    }

    pub fn initial(&self) -> Initial<f64> {
        Initial::reset(&self.sspace)
    }

    fn rollout<P: dp::Policy<f64>>(&self, policy: &P) -> anyhow::Result<Evaluated> {
        let trajectory = evaluate_policy(
            policy,
            self.validation_window(),
            &self.sspace,
            &self.aspace,
            &self.config.params,
            &self.initial(),
        )?;
        let window = EvalWindow::from_trajectory(self.validation_start, &trajectory)?;
        Ok(Evaluated {
            measures: PolicyMeasures::of(&window),
            total_cost: trajectory.total_cost(),
            trajectory,
        })
    }

    pub fn evaluate_qtable(&self, q: &QTable64) -> anyhow::Result<Evaluated> {
        anyhow::ensure!(
            q.dims() == (self.sspace.len(), self.aspace.len()),
            "Q-table dimensions {:?} do not match spaces ({}, {})",
            q.dims(),
            self.sspace.len(),
            self.aspace.len()
        );
        self.rollout(&GreedyPolicy {
            q,
            sspace: &self.sspace,
        })
    }

    pub fn train(&self, hp: &Hyperparams64) -> anyhow::Result<Trained> {
        let setup = TrainSetup {
            train: self.train_window(),
            validation: self.validation_window(),
            validation_start: self.validation_start,
            sspace: &self.sspace,
            aspace: &self.aspace,
            params: &self.config.params,
            hp,
        };
        let outcome = learner::train(&setup)?;
        let evaluated = self.evaluate_qtable(&outcome.qtable)?;
        Ok(Trained {
            hyperparams: *hp,
            qtable: outcome.qtable,
            curves: outcome.curves,
            stats: outcome.stats,
            evaluated,
        })
    }

    pub fn optimize(&self) -> anyhow::Result<Optimal> {
        let policy = dp::backward_induction(
            self.validation_window(),
            &self.sspace,
            &self.aspace,
            &self.config.params,
        )?;
        let evaluated = self.rollout(&policy)?;
        Ok(Optimal {
            optimal_cost: policy.optimal_cost(&self.initial())?,
            policy,
            evaluated,
        })
    }

    pub fn qtable_header(&self, hp: &Hyperparams64) -> QTableHeader {
        QTableHeader::new(&self.sspace, &self.aspace, hp)
    }
}

/// Rollout of a policy over the validation window.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub trajectory: Trajectory<f64>,
    pub measures: PolicyMeasures<f64>,
    pub total_cost: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub hyperparams: Hyperparams64,
    pub qtable: QTable64,
    pub curves: Vec<EpisodeCurve<f64>>,
    pub stats: TrainStats<f64>,
    pub evaluated: Evaluated,
}

#[derive(Debug, Clone)]
pub struct Optimal {
    pub policy: DpPolicy64,
    pub optimal_cost: f64,
    pub evaluated: Evaluated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Delayed,
    Vanilla,
    Greedy,
    Dp,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Delayed => "delayed",
            Self::Vanilla => "vanilla",
            Self::Greedy => "greedy",
            Self::Dp => "dp",
        }
    }
}

/// Measures of one policy on the validation window, with regrets against the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: PolicyKind,
    pub seed: Option<u64>,
    pub average_cost: f64,
    pub ess_benefit: f64,
    pub total_cost: f64,
    pub regret_average_cost: f64,
    pub regret_ess_benefit: f64,
}

impl PolicyRow {
    pub fn new(
        policy: PolicyKind,
        seed: Option<u64>,
        eval: &Evaluated,
        optimal: &Evaluated,
    ) -> Self {
        let r = regrets(
            eval.measures.average_cost,
            eval.measures.ess_benefit,
            optimal.measures.average_cost,
            optimal.measures.ess_benefit,
        );
        Self {
            policy,
            seed,
            average_cost: eval.measures.average_cost,
            ess_benefit: eval.measures.ess_benefit,
            total_cost: eval.total_cost,
            regret_average_cost: r.average_cost,
            regret_ess_benefit: r.ess_benefit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub trace: TraceMeta,
    pub trace_len: usize,
    pub validation_start: usize,
    pub validation_end: usize,
}

impl WindowInfo {
    fn of(prep: &Prepared) -> Self {
        Self {
            trace: prep.trace.meta.clone(),
            trace_len: prep.exog.len(),
            validation_start: prep.validation_start,
            validation_end: prep.exog.len(),
        }
    }
}

/// Contents of `summary.json` for a single-policy command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub window: WindowInfo,
    pub hyperparams: Option<Hyperparams64>,
    pub stats: Option<TrainStats<f64>>,
    pub optimal: PolicyRow,
    pub result: PolicyRow,
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_optimal(prep: &Prepared, opt: &Optimal, dir: &Path) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    save_dispatch(
        &dir.join("dispatch_dp.csv"),
        prep.validation_start,
        &opt.evaluated.trajectory,
    )?;
    save_dp_policy(
        &dir.join("dp_policy.csv"),
        prep.validation_start,
        &opt.policy,
        &prep.aspace,
    )
}

fn write_trained(
    prep: &Prepared,
    kind: PolicyKind,
    trained: &Trained,
    dir: &Path,
    with_qtable: bool,
) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    save_curves(&dir.join("curves.csv"), &trained.curves)?;
    save_dispatch(
        &dir.join(format!("dispatch_{}.csv", kind.name())),
        prep.validation_start,
        &trained.evaluated.trajectory,
    )?;
    if with_qtable {
        save_qtable(
            &dir.join("qtable.csv"),
            &trained.qtable,
            &prep.qtable_header(&trained.hyperparams),
        )?;
    }
    Ok(())
}

/// Trains one policy and writes curves, dispatch, Q-table and summary into `out`.
pub fn run_train(prep: &Prepared, hp: &Hyperparams64, out: &Path) -> anyhow::Result<RunSummary> {
    ensure_dir(out)?;
    let kind = if hp.adaptation_rate == 0.0 {
        PolicyKind::Vanilla
    } else {
        PolicyKind::Delayed
    };
    let opt = prep.optimize()?;
    write_optimal(prep, &opt, out)?;
    let trained = prep.train(hp)?;
    write_trained(prep, kind, &trained, out, true)?;
    let summary = RunSummary {
        window: WindowInfo::of(prep),
        hyperparams: Some(*hp),
        stats: Some(trained.stats),
        optimal: PolicyRow::new(PolicyKind::Dp, None, &opt.evaluated, &opt.evaluated),
        result: PolicyRow::new(kind, Some(hp.seed), &trained.evaluated, &opt.evaluated),
    };
    save_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Solves the validation window exactly and writes the optimal dispatch and policy.
pub fn run_dp(prep: &Prepared, out: &Path) -> anyhow::Result<RunSummary> {
    let opt = prep.optimize()?;
    write_optimal(prep, &opt, out)?;
    let row = PolicyRow::new(PolicyKind::Dp, None, &opt.evaluated, &opt.evaluated);
    let summary = RunSummary {
        window: WindowInfo::of(prep),
        hyperparams: None,
        stats: None,
        optimal: row.clone(),
        result: row,
    };
    save_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Greedy rollout of a stored Q-table; writes dispatch and summary when `out` is given.
pub fn run_eval(
    prep: &Prepared,
    q: &QTable64,
    header: &QTableHeader,
    out: Option<&Path>,
) -> anyhow::Result<RunSummary> {
    header.check_spaces(&prep.sspace, &prep.aspace)?;
    let opt = prep.optimize()?;
    let eval = prep.evaluate_qtable(q)?;
    let kind = if header.hyperparams.adaptation_rate == 0.0 {
        PolicyKind::Vanilla
    } else {
        PolicyKind::Delayed
    };
    let summary = RunSummary {
        window: WindowInfo::of(prep),
        hyperparams: Some(header.hyperparams),
        stats: None,
        optimal: PolicyRow::new(PolicyKind::Dp, None, &opt.evaluated, &opt.evaluated),
        result: PolicyRow::new(kind, Some(header.hyperparams.seed), &eval, &opt.evaluated),
    };
    if let Some(out) = out {
        ensure_dir(out)?;
        save_dispatch(
            &out.join(format!("dispatch_{}.csv", PolicyKind::Greedy.name())),
            prep.validation_start,
            &eval.trajectory,
        )?;
        save_json(&out.join("summary.json"), &summary)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub policy: PolicyKind,
    pub runs: usize,
    pub average_cost: Stat,
    pub ess_benefit: Stat,
    pub regret_average_cost: Stat,
    pub regret_ess_benefit: Stat,
}

impl Aggregate {
    fn of(policy: PolicyKind, rows: &[&PolicyRow]) -> Self {
        let col =
            |f: fn(&PolicyRow) -> f64| Stat::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            policy,
            runs: rows.len(),
            average_cost: col(|r| r.average_cost),
            ess_benefit: col(|r| r.ess_benefit),
            regret_average_cost: col(|r| r.regret_average_cost),
            regret_ess_benefit: col(|r| r.regret_ess_benefit),
        }
    }
}

/// Seed-by-seed comparison of delayed-update against plain Q-learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub seeds: usize,
    /// Seeds where the delayed-update AC-regret is strictly lower.
    pub lower_ac_regret: usize,
    /// Seeds where the delayed-update EB-regret is strictly lower.
    pub lower_eb_regret: usize,
    /// Seeds where both regrets are strictly lower.
    pub lower_both: usize,
    /// Mean delayed AC-regret divided by mean vanilla AC-regret.
    pub mean_ac_regret_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub window: WindowInfo,
    pub hyperparams: Hyperparams64,
    pub seeds: Vec<u64>,
    pub optimal_cost: f64,
    pub rows: Vec<PolicyRow>,
    pub aggregates: Vec<Aggregate>,
    pub verdict: Verdict,
}

impl CompareSummary {
    pub fn rows_of(&self, kind: PolicyKind) -> impl Iterator<Item = &PolicyRow> {
        self.rows.iter().filter(move |r| r.policy == kind)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CompareOptions {
    /// Also write each run's Q-table.
    pub save_qtables: bool,
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Delayed-update and plain Q-learning for every seed plus the exact optimum, with all
/// artifacts written under `out`. Runs are executed in parallel; results are ordered by
/// seed, so the summary does not depend on scheduling.
pub fn run_compare(
    prep: &Prepared,
    seeds: &[u64],
    out: &Path,
    opts: CompareOptions,
) -> anyhow::Result<CompareSummary> {
    anyhow::ensure!(!seeds.is_empty(), "compare needs at least one seed");
    ensure_dir(out)?;
    let opt = prep.optimize()?;
    write_optimal(prep, &opt, &out.join("dp"))?;
    info!(
        "optimal validation cost {:.4} (AC {:.4}, EB {:.4})",
        opt.optimal_cost, opt.evaluated.measures.average_cost, opt.evaluated.measures.ess_benefit
    );

    let base = prep.config.hyperparams;
    let jobs: Vec<(u64, PolicyKind)> = seeds
        .iter()
        .flat_map(|&s| [(s, PolicyKind::Delayed), (s, PolicyKind::Vanilla)])
        .collect();
    let rows: Vec<PolicyRow> = jobs
        .par_iter()
        .map(|&(seed, kind)| -> anyhow::Result<PolicyRow> {
            let mut hp = Hyperparams64 { seed, ..base };
            if kind == PolicyKind::Vanilla {
                hp = hp.vanilla();
            }
            let trained = prep
                .train(&hp)
                .with_context(|| format!("{} run, seed {seed}", kind.name()))?;
            let dir = seed_dir(out, seed).join(kind.name());
            write_trained(prep, kind, &trained, &dir, opts.save_qtables)?;
            let row = PolicyRow::new(kind, Some(seed), &trained.evaluated, &opt.evaluated);
            info!(
                "seed {seed} {}: AC regret {:.4}, EB regret {:.4}",
                kind.name(),
                row.regret_average_cost,
                row.regret_ess_benefit
            );
            Ok(row)
        })
        .collect::<anyhow::Result<_>>()?;

    let dp_row = PolicyRow::new(PolicyKind::Dp, None, &opt.evaluated, &opt.evaluated);
    let pick = |k: PolicyKind| rows.iter().filter(|r| r.policy == k).collect::<Vec<_>>();
    let (delayed, vanilla) = (pick(PolicyKind::Delayed), pick(PolicyKind::Vanilla));
    let pairs = || delayed.iter().zip(&vanilla);
    let aggregates = vec![
        Aggregate::of(PolicyKind::Delayed, &delayed),
        Aggregate::of(PolicyKind::Vanilla, &vanilla),
        Aggregate::of(PolicyKind::Dp, &[&dp_row]),
    ];
    let verdict = Verdict {
        seeds: seeds.len(),
        lower_ac_regret: pairs()
            .filter(|(d, v)| d.regret_average_cost < v.regret_average_cost)
            .count(),
        lower_eb_regret: pairs()
            .filter(|(d, v)| d.regret_ess_benefit < v.regret_ess_benefit)
            .count(),
        lower_both: pairs()
            .filter(|(d, v)| {
                d.regret_average_cost < v.regret_average_cost
                    && d.regret_ess_benefit < v.regret_ess_benefit
            })
            .count(),
        mean_ac_regret_ratio: aggregates[0].regret_average_cost.mean
            / aggregates[1].regret_average_cost.mean,
    };

    let mut all_rows = rows;
    all_rows.push(dp_row);
    let summary = CompareSummary {
        window: WindowInfo::of(prep),
        hyperparams: base,
        seeds: seeds.to_vec(),
        optimal_cost: opt.optimal_cost,
        rows: all_rows,
        aggregates,
        verdict,
    };
    save_json(&out.join("summary.json"), &summary)?;
    write_comparison_table(&out.join("comparison.csv"), &summary)?;
    Ok(summary)
}

/// Mean measures and regrets per policy, one row each.
pub fn write_comparison_table(path: &Path, summary: &CompareSummary) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "policy",
        "runs",
        "average_cost",
        "ess_benefit",
        "regret_average_cost",
        "regret_ess_benefit",
    ])?;
    for a in &summary.aggregates {
        w.write_record([
            a.policy.name().to_string(),
            a.runs.to_string(),
            a.average_cost.mean.to_string(),
            a.ess_benefit.mean.to_string(),
            a.regret_average_cost.mean.to_string(),
            a.regret_ess_benefit.mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text rendering of the comparison table.
pub fn format_table(summary: &CompareSummary) -> String {
    let mut s = format!(
        "{:<8} {:>5} {:>12} {:>12} {:>12} {:>12}\n",
        "policy", "runs", "AC", "EB", "R_AC", "R_EB"
    );
    for a in &summary.aggregates {
        s.push_str(&format!(
            "{:<8} {:>5} {:>12.3} {:>12.3} {:>12.3} {:>12.3}\n",
            a.policy.name(),
            a.runs,
            a.average_cost.mean,
            a.ess_benefit.mean,
            a.regret_average_cost.mean,
            a.regret_ess_benefit.mean
        ));
    }
    let v = &summary.verdict;
    s.push_str(&format!(
        "delayed lower AC-regret in {}/{} seeds, lower EB-regret in {}/{}, both in {}/{}; mean AC-regret ratio {:.3}\n",
        v.lower_ac_regret, v.seeds, v.lower_eb_regret, v.seeds, v.lower_both, v.seeds, v.mean_ac_regret_ratio
    ));
    s
}
