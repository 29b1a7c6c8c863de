//! Training loss records and their CSV form.

use std::fmt::Write;

use crate::error::TrainError;

pub const CSV_HEADER: &str = "step,lr,loss,seconds";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    pub records: Vec<LossRecord>,
}

impl LossLog {
    pub fn push(&mut self, r: LossRecord) {
        debug_assert!(self.records.last().is_none_or(|l| l.step < r.step));
        self.records.push(r);
    }

    pub fn last(&self) -> Option<&LossRecord> {
        self.records.last()
    }

    /// Drops records after `step`, used when resuming from a checkpoint.
    pub fn truncate_after(&mut self, step: u64) {
        self.records.retain(|r| r.step <= step);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}", format_row(r));
        }
        s
    }

    /// Parses CSV text; line numbers in errors are 1-based.
    pub fn from_csv(text: &str) -> Result<LossLog, TrainError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => {
                return Err(TrainError::LogFormat {
                    line: 1,
                    msg: format!("expected header `{CSV_HEADER}`"),
                })
            }
        }
        let mut log = LossLog::default();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| TrainError::LogFormat { line: line_no, msg };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", cols.len())));
            }
            let num = |j: usize| -> Result<f64, TrainError> {
                cols[j]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("bad number `{}`", cols[j])))
            };
            let step = cols[0]
                .parse::<u64>()
                .map_err(|_| err(format!("bad step `{}`", cols[0])))?;
            if log.last().is_some_and(|l| l.step >= step) {
                return Err(err("steps must be strictly increasing".into()));
            }
            log.records.push(LossRecord {
                step,
                lr: num(1)?,
                loss: num(2)?,
                seconds: num(3)?,
            });
        }
        Ok(log)
    }
}

pub fn format_row(r: &LossRecord) -> String {
    format!("{},{:e},{},{:.3}", r.step, r.lr, r.loss, r.seconds)
}
