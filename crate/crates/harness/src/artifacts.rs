//! CSV and JSON output files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use microgrid_core::dp::Trajectory;
use microgrid_core::learner::EpisodeCurve;
use microgrid_core::{ActionSpace64, DpPolicy64};
use serde::Serialize;

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_curves<W: Write>(writer: W, curves: &[EpisodeCurve<f64>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["episode", "avg_cost", "ess_benefit", "q_diff"])?;
    for c in curves {
        w.write_record([
            c.episode.to_string(),
            c.avg_cost.to_string(),
            c.ess_benefit.to_string(),
            c.q_diff.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_curves(path: &Path, curves: &[EpisodeCurve<f64>]) -> anyhow::Result<()> {
    write_curves(create(path)?, curves)
}

/// One row per rollout period; `t` is the index into the full trace.
pub fn write_dispatch<W: Write>(
    writer: W,
    offset: usize,
    trajectory: &Trajectory<f64>,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "t", "demand", "pv", "price", "dg", "ess", "dr", "grid", "soc", "cost", "reward",
    ])?;
    for s in &trajectory.steps {
        let e = &s.state.exog;
        w.write_record([
            (offset + s.t).to_string(),
            e.demand.to_string(),
            e.pv.to_string(),
            e.price.to_string(),
            s.action.dg().to_string(),
            s.action.ess().to_string(),
            s.action.dr().to_string(),
            s.action.grid().to_string(),
            s.state.soc.to_string(),
            s.cost.to_string(),
            s.reward.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dispatch(
    path: &Path,
    offset: usize,
    trajectory: &Trajectory<f64>,
) -> anyhow::Result<()> {
    write_dispatch(create(path)?, offset, trajectory)
}

/// Optimal decision and cost-to-go for every period and (SOC, previous generator) level.
pub fn write_dp_policy<W: Write>(
    writer: W,
    offset: usize,
    policy: &DpPolicy64,
    aspace: &ActionSpace64,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "soc", "prev_dg", "dg", "ess", "dr", "cost_to_go"])?;
    for t in 0..policy.horizon() {
        for (si, soc) in policy.soc_levels().iter().enumerate() {
            for (gi, prev_dg) in policy.dg_levels().iter().enumerate() {
                let (dg, ess, dr) = aspace.levels(policy.action(t, si, gi));
                w.write_record([
                    (offset + t).to_string(),
                    soc.to_string(),
                    prev_dg.to_string(),
                    dg.to_string(),
                    ess.to_string(),
                    dr.to_string(),
                    policy.cost_to_go(t, si, gi).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dp_policy(
    path: &Path,
    offset: usize,
    policy: &DpPolicy64,
    aspace: &ActionSpace64,
) -> anyhow::Result<()> {
    write_dp_policy(create(path)?, offset, policy, aspace)
}

pub fn save_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}
