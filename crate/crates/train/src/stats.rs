use std::fmt::Write as _;

use crate::error::{Result, TrainError};

/// Losses observed in one generator iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Wasserstein distance, mean D2(fake) - mean D2(real) on the last critic batch.
    pub wd: f64,
    pub s_r: f64,
    pub s_g: f64,
    pub ce: Option<f64>,
}

/// Mean step statistics over the iterations leading up to `g_iter`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatRecord {
    pub g_iter: u64,
    pub wd: f64,
    pub s_r: f64,
    pub s_g: f64,
    pub ce: Option<f64>,
}

impl StatRecord {
    pub fn mean_of(g_iter: u64, steps: &[StepStats]) -> Self {
        let n = steps.len().max(1) as f64;
        let mean = |f: fn(&StepStats) -> f64| steps.iter().map(f).sum::<f64>() / n;
        let ce = steps.iter().map(|s| s.ce).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n);
        Self { g_iter, wd: mean(|s| s.wd), s_r: mean(|s| s.s_r), s_g: mean(|s| s.s_g), ce }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub records: Vec<StatRecord>,
}

pub const STATS_HEADER: &str = "g_iter,wd,s_r,s_g,ce";

impl TrainStats {
    pub fn push(&mut self, r: StatRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.g_iter <= last.g_iter {
                return Err(TrainError::Stats(format!("record {} does not follow {}", r.g_iter, last.g_iter)));
            }
        }
        self.records.push(r);
        Ok(())
    }

    /// Unsupervised runs leave the `ce` column empty.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{STATS_HEADER}\n");
        for r in &self.records {
            let ce = r.ce.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.g_iter, r.wd, r.s_r, r.s_g, ce);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(STATS_HEADER) {
            return Err(TrainError::Stats(format!("stats table must start with `{STATS_HEADER}`")));
        }
        let mut out = TrainStats::default();
        for (i, line) in lines.enumerate() {
            let bad = || TrainError::Stats(format!("stats line {}: `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            out.push(StatRecord {
                g_iter: f[0].parse().map_err(|_| bad())?,
                wd: num(f[1])?,
                s_r: num(f[2])?,
                s_g: num(f[3])?,
                ce: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            })?;
        }
        Ok(out)
    }

    pub fn wd_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.wd).collect()
    }
}
