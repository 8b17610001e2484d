//! Side-by-side comparison of metrics CSVs on the relative time axis.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{read_csv, MetricsRecord};

#[derive(Debug, Clone)]
pub struct Run {
    pub name: String,
    pub records: Vec<MetricsRecord>,
}

impl Run {
    /// Accuracy of the latest record at or before `t`.
    pub fn accuracy_at(&self, t: f64) -> Option<f64> {
        self.records
            .iter()
            .take_while(|r| r.relative_time <= t + TIME_EPS)
            .last()
            .map(|r| r.accuracy)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.accuracy)
    }

    /// First relative time with accuracy at least `target`.
    pub fn time_to_accuracy(&self, target: f64) -> Option<f64> {
        self.records.iter().find(|r| r.accuracy >= target).map(|r| r.relative_time)
    }
}

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CatchUp {
    pub leader: usize,
    pub follower: usize,
    /// Earliest aligned time from which the follower stays within the
    /// tolerance of the leader for the rest of the common horizon.
    pub time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<Run>,
    pub times: Vec<f64>,
    pub target: f64,
    pub tolerance: f64,
    pub catch_ups: Vec<CatchUp>,
}

pub fn load_runs(paths: &[PathBuf]) -> Result<Vec<Run>> {
    if paths.len() < 2 {
        return Err(Error::Report(format!("need at least two metrics files, got {}", paths.len())));
    }
    paths
        .iter()
        .map(|p| {
            let records = read_csv(p)?;
            if records.is_empty() {
                return Err(Error::Report(format!("{} has no records", p.display())));
            }
            Ok(Run { name: run_name(p), records })
        })
        .collect()
}

fn run_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// `target` defaults to the lowest final accuracy among the runs, which
/// every run reaches at least once.
pub fn compare(runs: Vec<Run>, target: Option<f64>, tolerance: f64) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::Report("need at least two runs".into()));
    }
    let mut times: Vec<f64> = runs.iter().flat_map(|r| r.records.iter().map(|x| x.relative_time)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
    let target = target.unwrap_or_else(|| runs.iter().map(Run::final_accuracy).fold(f64::INFINITY, f64::min));

    let horizon = runs
        .iter()
        .map(|r| r.records.last().map_or(0.0, |x| x.relative_time))
        .fold(f64::INFINITY, f64::min);
    let common: Vec<f64> = times.iter().copied().filter(|&t| t <= horizon + TIME_EPS).collect();

    let mut catch_ups = Vec::new();
    for leader in 0..runs.len() {
        for follower in 0..runs.len() {
            if leader == follower {
                continue;
            }
            let ok = |t: f64| match (runs[leader].accuracy_at(t), runs[follower].accuracy_at(t)) {
                (Some(a), Some(b)) => b >= a - tolerance,
                _ => false,
            };
            let mut time = None;
            for &t in common.iter().rev() {
                if ok(t) {
                    time = Some(t);
                } else {
                    break;
                }
            }
            catch_ups.push(CatchUp { leader, follower, time });
        }
    }
    Ok(Comparison { runs, times, target, tolerance, catch_ups })
}

pub fn compare_runs(paths: &[PathBuf], target: Option<f64>, tolerance: f64) -> Result<Comparison> {
    compare(load_runs(paths)?, target, tolerance)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Run comparison");
        let _ = writeln!(
            s,
            "# Time axis: relative time = simulated ticks / duration of one synchronous round \
             (max download + slowest local computation + sum of uploads) under the same configuration."
        );
        let _ = writeln!(s, "# Accuracy between evaluations holds the latest value. diff = run - {}.", self.runs[0].name);
        let _ = writeln!(s);
        let _ = writeln!(s, "## Summary (target accuracy {:.4})", self.target);
        let _ = writeln!(s, "{:<32} {:>10} {:>16}", "run", "final_acc", "time_to_target");
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{:<32} {:>10.4} {:>16}",
                r.name,
                r.final_accuracy(),
                opt(r.time_to_accuracy(self.target), 2)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "## Catch-up (follower stays within {} of leader from this time on)", self.tolerance);
        for c in &self.catch_ups {
            let _ = writeln!(
                s,
                "{} catches up with {} at {}",
                self.runs[c.follower].name,
                self.runs[c.leader].name,
                opt(c.time, 2)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "## Accuracy by relative time");
        let mut header = format!("{:>10}", "rel_time");
        for (k, r) in self.runs.iter().enumerate() {
            let _ = write!(header, " {:>14}", truncate(&r.name, 14));
            if k > 0 {
                let _ = write!(header, " {:>8}", "diff");
            }
        }
        let _ = writeln!(s, "{header}");
        for &t in &self.times {
            let base = self.runs[0].accuracy_at(t);
            let _ = write!(s, "{t:>10.3}");
            for (k, r) in self.runs.iter().enumerate() {
                let a = r.accuracy_at(t);
                let _ = write!(s, " {:>14}", opt(a, 4));
                if k > 0 {
                    let d = a.zip(base).map(|(a, b)| a - b);
                    let _ = write!(s, " {:>8}", opt(d, 4));
                }
            }
            let _ = writeln!(s);
        }
        s
    }

    /// One gnuplot data block per run (`index N`), columns
    /// `relative_time accuracy loss`.
    pub fn plot_data(&self) -> String {
        let mut s = String::new();
        for (k, r) in self.runs.iter().enumerate() {
            if k > 0 {
                s.push_str("\n\n");
            }
            let _ = writeln!(s, "# index {k}: {}", r.name);
            let _ = writeln!(s, "# relative_time accuracy loss");
            for x in &r.records {
                let _ = writeln!(s, "{} {} {}", x.relative_time, x.accuracy, x.loss);
            }
        }
        s
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
