//! Metrics rows and their CSV form
//! (`sim_time,relative_time,iteration,loss,accuracy,algorithm,gamma`).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timing::Ticks;

pub const CSV_COLUMNS: [&str; 7] = [
    "sim_time",
    "relative_time",
    "iteration",
    "loss",
    "accuracy",
    "algorithm",
    "gamma",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sfl,
    AflBaseline,
    Csmaafl,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Sfl => "sfl",
            Algorithm::AflBaseline => "afl-baseline",
            Algorithm::Csmaafl => "csmaafl",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sfl" => Ok(Algorithm::Sfl),
            "afl-baseline" => Ok(Algorithm::AflBaseline),
            "csmaafl" => Ok(Algorithm::Csmaafl),
            other => Err(format!(
                "unknown algorithm `{other}` (expected sfl, afl-baseline or csmaafl)"
            )),
        }
    }
}

/// One evaluation of the global model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sim_time: Ticks,
    /// `sim_time` in units of one synchronous round.
    pub relative_time: f64,
    /// Rounds (synchronous) or aggregations (asynchronous) so far.
    pub iteration: u64,
    pub loss: f64,
    pub accuracy: f64,
    pub algorithm: Algorithm,
    pub gamma: Option<f64>,
}

pub fn write_csv(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Report(format!(
            "{}: columns {:?} do not match {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>(),
            CSV_COLUMNS
        )));
    }
    let records = r
        .deserialize()
        .collect::<std::result::Result<Vec<MetricsRecord>, _>>()?;
    Ok(records)
}
