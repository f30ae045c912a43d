//! Q-table CSV files.
//!
//! Line 1 is `# microgrid-qtable ` followed by a JSON header; line 2 is the column header
//! `state,a0,...`; then one row per state index. Values are written in shortest round-trip
//! form, so a reload is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context};
use microgrid_core::{ActionSpace64, Hyperparams64, QTable64, StateSpace64};
use serde::{Deserialize, Serialize};

const MAGIC: &str = "# microgrid-qtable ";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLevels {
    pub prev_dg: Vec<f64>,
    pub pv: Vec<f64>,
    pub demand: Vec<f64>,
    pub soc: Vec<f64>,
    pub price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLevels {
    pub dg: Vec<f64>,
    pub ess: Vec<f64>,
    pub dr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableHeader {
    pub format_version: u32,
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major, last component fastest.
    pub state_order: Vec<String>,
    pub action_order: Vec<String>,
    pub state_levels: StateLevels,
    pub action_levels: ActionLevels,
    pub hyperparams: Hyperparams64,
}

impl QTableHeader {
    pub fn new(sspace: &StateSpace64, aspace: &ActionSpace64, hp: &Hyperparams64) -> Self {
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            format_version: FORMAT_VERSION,
            n_states: sspace.len(),
            n_actions: aspace.len(),
            state_order: names(&["prev_dg", "pv", "demand", "soc", "price"]),
            action_order: names(&["dg", "ess", "dr"]),
            state_levels: StateLevels {
                prev_dg: sspace.prev_dg_levels().to_vec(),
                pv: sspace.pv_levels().to_vec(),
                demand: sspace.demand_levels().to_vec(),
                soc: sspace.soc_levels().to_vec(),
                price: sspace.price_levels().to_vec(),
            },
            action_levels: ActionLevels {
                dg: aspace.dg_levels().to_vec(),
                ess: aspace.ess_levels().to_vec(),
                dr: aspace.dr_levels().to_vec(),
            },
            hyperparams: *hp,
        }
    }

    /// Fails unless the table was written for exactly these spaces.
    pub fn check_spaces(
        &self,
        sspace: &StateSpace64,
        aspace: &ActionSpace64,
    ) -> anyhow::Result<()> {
        let expected = Self::new(sspace, aspace, &self.hyperparams);
        ensure!(
            self.state_levels == expected.state_levels && self.state_order == expected.state_order,
            "Q-table state space does not match the configured spaces"
        );
        ensure!(
            self.action_levels == expected.action_levels
                && self.action_order == expected.action_order,
            "Q-table action space does not match the configured spaces"
        );
        Ok(())
    }
}

pub fn write_qtable<W: Write>(
    writer: W,
    q: &QTable64,
    header: &QTableHeader,
) -> anyhow::Result<()> {
    ensure!(
        q.dims() == (header.n_states, header.n_actions),
        "header dimensions {:?} differ from table {:?}",
        (header.n_states, header.n_actions),
        q.dims()
    );
    let mut w = BufWriter::new(writer);
    writeln!(w, "{MAGIC}{}", serde_json::to_string(header)?)?;
    let mut line = String::from("state");
    for a in 0..q.n_actions() {
        line.push_str(&format!(",a{a}"));
    }
    writeln!(w, "{line}")?;
    for s in 0..q.n_states() {
        line.clear();
        line.push_str(&s.to_string());
        for v in q.row(s) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_qtable<R: Read>(reader: R) -> anyhow::Result<(QTable64, QTableHeader)> {
    let mut r = BufReader::new(reader);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let Some(json) = first.trim_end().strip_prefix(MAGIC) else {
        bail!("missing `{}` header line", MAGIC.trim_end());
    };
    let header: QTableHeader = serde_json::from_str(json).context("parsing Q-table header")?;
    ensure!(
        header.format_version == FORMAT_VERSION,
        "unsupported Q-table format version {}",
        header.format_version
    );

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    ensure!(
        rdr.headers()?.len() == header.n_actions + 1,
        "column count does not match n_actions = {}",
        header.n_actions
    );
    let mut values = Vec::with_capacity(header.n_states * header.n_actions);
    for (expected, row) in rdr.records().enumerate() {
        let row = row?;
        let s: usize = row[0]
            .parse()
            .with_context(|| format!("state index on row {expected}"))?;
        ensure!(
            s == expected,
            "rows out of order: found state {s}, expected {expected}"
        );
        for field in row.iter().skip(1) {
            values.push(
                field
                    .parse::<f64>()
                    .with_context(|| format!("value `{field}` for state {s}"))?,
            );
        }
    }
    let q = QTable64::from_values(header.n_states, header.n_actions, values)?;
    Ok((q, header))
}

pub fn save_qtable(path: &Path, q: &QTable64, header: &QTableHeader) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_qtable(file, q, header)
}

pub fn load_qtable(path: &Path) -> anyhow::Result<(QTable64, QTableHeader)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_qtable(file).with_context(|| format!("reading {}", path.display()))
}
