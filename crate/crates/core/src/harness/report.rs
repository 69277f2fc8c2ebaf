use std::fmt::Write as _;

use crate::harness::BenchConfig;
use crate::metrics::{median, WaitSample, WaitStats};

/// Metrics of one run (or the median over runs).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    /// Aggregate acquisitions per second.
    pub throughput: f64,
    pub normal_throughput: f64,
    pub fifo_throughput: f64,
    pub spread: f64,
    pub migration: f64,
    pub rstddev: f64,
    pub theil_t: f64,
    pub fifo_waits: WaitStats,
    pub acquisitions: u64,
    pub migrations: u64,
    pub per_thread: Vec<u64>,
    pub elapsed_secs: f64,
    pub warnings: Vec<String>,
    /// Raw wait samples, kept only when requested.
    pub samples: Vec<WaitSample>,
}

fn med(runs: &[RunMetrics], f: impl Fn(&RunMetrics) -> f64) -> f64 {
    let mut v: Vec<f64> = runs.iter().map(f).collect();
    median(&mut v)
}

/// Elementwise median over runs.
pub fn aggregate_runs(runs: &[RunMetrics]) -> RunMetrics {
    assert!(!runs.is_empty(), "no runs to aggregate");
    let mut warnings: Vec<String> = Vec::new();
    for w in runs.iter().flat_map(|r| &r.warnings) {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    RunMetrics {
        throughput: med(runs, |r| r.throughput),
        normal_throughput: med(runs, |r| r.normal_throughput),
        fifo_throughput: med(runs, |r| r.fifo_throughput),
        spread: med(runs, |r| r.spread),
        migration: med(runs, |r| r.migration),
        rstddev: med(runs, |r| r.rstddev),
        theil_t: med(runs, |r| r.theil_t),
        fifo_waits: WaitStats {
            count: med(runs, |r| r.fifo_waits.count as f64) as u64,
            rstddev: med(runs, |r| r.fifo_waits.rstddev),
            theil_t: med(runs, |r| r.fifo_waits.theil_t),
            worst: med(runs, |r| r.fifo_waits.worst),
            avg: med(runs, |r| r.fifo_waits.avg),
            median: med(runs, |r| r.fifo_waits.median),
        },
        acquisitions: med(runs, |r| r.acquisitions as f64) as u64,
        migrations: med(runs, |r| r.migrations as f64) as u64,
        per_thread: Vec::new(),
        elapsed_secs: med(runs, |r| r.elapsed_secs),
        warnings,
        samples: Vec::new(),
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub runs: Vec<RunMetrics>,
    pub median: RunMetrics,
}

/// CSV columns, in emission order. Ratios are plain ratios, not percent.
pub const CSV_HEADER: [&str; 16] = [
    "row",
    "lock",
    "threads",
    "fifo_threads",
    "throughput",
    "normal_throughput",
    "fifo_throughput",
    "spread",
    "migration",
    "rstddev_ratio",
    "theil_t",
    "fifo_rstddev_ratio",
    "fifo_worst",
    "fifo_avg",
    "fifo_median",
    "warnings",
];

fn ratio(v: f64, sentinel: &str) -> String {
    if v.is_infinite() {
        sentinel.to_owned()
    } else {
        format!("{v:.6}")
    }
}

impl BenchReport {
    pub fn new(config: BenchConfig, runs: Vec<RunMetrics>) -> Self {
        let median = aggregate_runs(&runs);
        Self {
            config,
            runs,
            median,
        }
    }

    fn row(&self, label: String, m: &RunMetrics) -> Vec<String> {
        vec![
            label,
            self.config.lock.to_string(),
            self.config.threads.to_string(),
            self.config.fifo_threads.to_string(),
            format!("{:.0}", m.throughput),
            format!("{:.0}", m.normal_throughput),
            format!("{:.0}", m.fifo_throughput),
            ratio(m.spread, "unbounded"),
            ratio(m.migration, "no-migration"),
            format!("{:.6}", m.rstddev),
            format!("{:.6}", m.theil_t),
            format!("{:.6}", m.fifo_waits.rstddev),
            format!("{:.0}", m.fifo_waits.worst),
            format!("{:.6}", m.fifo_waits.avg),
            format!("{:.1}", m.fifo_waits.median),
            m.warnings.join("; "),
        ]
    }

    /// One row per run followed by exactly one `median` row.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .enumerate()
            .map(|(i, m)| self.row(format!("run{i}"), m))
            .collect();
        rows.push(self.row("median".to_owned(), &self.median));
        rows
    }

    pub fn summary(&self) -> String {
        let c = &self.config;
        let m = &self.median;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} | threads {} (+{} fifo) | {} runs x {:.1}s | topology {}",
            c.lock,
            c.threads,
            c.fifo_threads,
            c.runs,
            c.duration.as_secs_f64(),
            c.topology
        );
        let _ = writeln!(
            s,
            "  throughput {:.3} M/s  spread {}  migration {}  rstddev {:.3}  theil-t {:.3}",
            m.throughput / 1e6,
            ratio(m.spread, "unbounded"),
            ratio(m.migration, "no-migration"),
            m.rstddev,
            m.theil_t
        );
        if c.fifo_threads > 0 {
            let f = &m.fifo_waits;
            let _ = writeln!(
                s,
                "  fifo {:.3} M/s normal {:.3} M/s | fifo waits rstddev {:.2} worst {:.0} avg {:.1} median {:.1}",
                m.fifo_throughput / 1e6,
                m.normal_throughput / 1e6,
                f.rstddev,
                f.worst,
                f.avg,
                f.median
            );
        }
        for w in &m.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(t: f64, spread: f64) -> RunMetrics {
        RunMetrics {
            throughput: t,
            spread,
            ..RunMetrics::default()
        }
    }

    #[test]
    fn identical_runs_aggregate_to_themselves() {
        let r = run(5.0, 1.5);
        let m = aggregate_runs(&[r.clone(), r.clone(), r.clone()]);
        assert_eq!(m.throughput, 5.0);
        assert_eq!(m.spread, 1.5);
    }

    #[test]
    fn elementwise_median() {
        let m = aggregate_runs(&[run(1.0, 9.0), run(2.0, f64::INFINITY), run(9.0, 1.0)]);
        assert_eq!(m.throughput, 2.0);
        assert_eq!(m.spread, 9.0);
    }

    #[test]
    fn median_row_once() {
        let rep = BenchReport::new(BenchConfig::default(), vec![run(1.0, 1.0); 3]);
        let rows = rep.csv_rows();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.iter().filter(|r| r[0] == "median").count(), 1);
        assert!(rows.iter().all(|r| r.len() == CSV_HEADER.len()));
    }

    #[test]
    fn sentinels_render() {
        let mut r = run(1.0, f64::INFINITY);
        r.migration = f64::INFINITY;
        let rep = BenchReport::new(BenchConfig::default(), vec![r]);
        let row = &rep.csv_rows()[0];
        assert_eq!(row[7], "unbounded");
        assert_eq!(row[8], "no-migration");
    }
}
