use std::fmt;

use serde::{Deserialize, Serialize};

use crate::format::{fmt_f64, fmt_opt};

pub const METRICS_HEADER: &str = "epoch,split,task_loss,psd_loss,joint_loss,avg_return,wallclock_s";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

/// Per-step mean losses for one split at one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: Split,
    pub task_loss: f64,
    pub psd_loss: f64,
    pub joint_loss: f64,
    pub avg_return: Option<f64>,
    pub wallclock_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<MetricRow>,
    /// Optimizer steps whose gradient was clipped, as `(epoch, norm)`.
    pub clip_events: Vec<(usize, f64)>,
}

impl RunMetrics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch,
                r.split,
                fmt_f64(r.task_loss),
                fmt_f64(r.psd_loss),
                fmt_f64(r.joint_loss),
                fmt_opt(r.avg_return),
                fmt_opt(r.wallclock_s),
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(METRICS_HEADER) {
            return Err("unexpected metrics header".into());
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(format!("row {}: expected 7 fields", i + 1));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| format!("row {}: bad number '{s}'", i + 1))
            };
            let opt = |s: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            rows.push(MetricRow {
                epoch: f[0]
                    .parse()
                    .map_err(|_| format!("row {}: bad epoch", i + 1))?,
                split: match f[1] {
                    "train" => Split::Train,
                    "val" => Split::Val,
                    other => return Err(format!("row {}: unknown split '{other}'", i + 1)),
                },
                task_loss: num(f[2])?,
                psd_loss: num(f[3])?,
                joint_loss: num(f[4])?,
                avg_return: opt(f[5])?,
                wallclock_s: opt(f[6])?,
            });
        }
        Ok(Self {
            rows,
            clip_events: Vec::new(),
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Task loss per epoch for `split`, starting at epoch 0.
    pub fn task_curve(&self, split: Split) -> Vec<f64> {
        self.split(split).map(|r| r.task_loss).collect()
    }

    pub fn final_task_loss(&self, split: Split) -> Option<f64> {
        self.split(split).last().map(|r| r.task_loss)
    }

    /// Mean of the recorded average returns over epochs ≥ 1.
    pub fn mean_return(&self, split: Split) -> Option<f64> {
        let vals: Vec<f64> = self
            .split(split)
            .filter(|r| r.epoch >= 1)
            .filter_map(|r| r.avg_return)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let m = RunMetrics {
            rows: vec![
                MetricRow {
                    epoch: 0,
                    split: Split::Train,
                    task_loss: 0.1,
                    psd_loss: 0.0,
                    joint_loss: 0.1,
                    avg_return: None,
                    wallclock_s: Some(0.25),
                },
                MetricRow {
                    epoch: 1,
                    split: Split::Val,
                    task_loss: 1.0 / 3.0,
                    psd_loss: 2.0,
                    joint_loss: 3.0,
                    avg_return: Some(200.0),
                    wallclock_s: None,
                },
            ],
            clip_events: Vec::new(),
        };
        let text = m.to_csv();
        assert!(text.starts_with(METRICS_HEADER));
        let back = RunMetrics::parse_csv(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_csv(), text);
        assert_eq!(back.mean_return(Split::Val), Some(200.0));
    }
}
