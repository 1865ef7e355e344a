use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const REPORT_HEADER: &str =
    "epoch,train_ppl,valid_ppl,lr,epsilon,gamma,tau,frac_teacher,frac_pred,frac_neigh,frac_mixed";

/// One row of `reports.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_ppl: f64,
    pub valid_ppl: f64,
    pub lr: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// Temperature in effect during the epoch.
    pub tau: f64,
    pub frac_teacher: f64,
    pub frac_pred: f64,
    pub frac_neigh: f64,
    pub frac_mixed: f64,
}

impl EpochReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_ppl,
            self.valid_ppl,
            self.lr,
            self.epsilon,
            self.gamma,
            self.tau,
            self.frac_teacher,
            self.frac_pred,
            self.frac_neigh,
            self.frac_mixed
        )
    }

    /// Share of inputs that were not the gold token.
    pub fn replacement_fraction(&self) -> f64 {
        self.frac_pred + self.frac_neigh + self.frac_mixed
    }

    fn parse_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return None;
        }
        let x = |i: usize| f[i].parse::<f64>().ok();
        Some(EpochReport {
            epoch: f[0].parse().ok()?,
            train_ppl: x(1)?,
            valid_ppl: x(2)?,
            lr: x(3)?,
            epsilon: x(4)?,
            gamma: x(5)?,
            tau: x(6)?,
            frac_teacher: x(7)?,
            frac_pred: x(8)?,
            frac_neigh: x(9)?,
            frac_mixed: x(10)?,
        })
    }
}

pub fn reports_to_csv(reports: &[EpochReport]) -> String {
    let mut out = String::new();
    writeln!(out, "{REPORT_HEADER}").expect("write to String");
    for r in reports {
        writeln!(out, "{}", r.csv_row()).expect("write to String");
    }
    out
}

pub fn write_reports(path: &Path, reports: &[EpochReport]) -> Result<()> {
    fs::write(path, reports_to_csv(reports)).map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: &Path) -> Result<Vec<EpochReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "unexpected reports header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            EpochReport::parse_row(line).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("malformed report row {line:?}"),
            })
        })
        .collect()
}
