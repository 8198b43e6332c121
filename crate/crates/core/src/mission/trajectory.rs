//! Per-tick trajectory records, their CSV form, and mission summaries.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tasks::SetBounds;

use super::run::MissionState;

/// Columns that precede the per-joint and per-task columns.
pub const TRAJECTORY_FIXED_COLUMNS: [&str; 5] = ["tick", "t", "phase", "phase_name", "state"];

/// A set-based task as it appears in the log header.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedTask {
    pub id: String,
    pub bounds: SetBounds,
}

impl LoggedTask {
    pub fn is_active(&self, value: f64) -> bool {
        value > self.bounds.upper_activation() || value < self.bounds.lower_activation()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub tick: u64,
    pub t: f64,
    pub phase: usize,
    pub phase_name: String,
    pub state: MissionState,
    pub q: Vec<f64>,
    /// Commanded joint velocity applied during this tick.
    pub qd: Vec<f64>,
    /// σ of each logged set-based task, header order.
    pub set_values: Vec<f64>,
    pub set_active: Vec<bool>,
    /// Controlled-frame error: position then orientation vector.
    pub error: [f64; 6],
    pub position_error: f64,
    /// Rotation angle of the orientation error (rad).
    pub orientation_error: f64,
    /// Masks over the hierarchy's set-based tasks (bit = ordinal).
    pub active_mask: u64,
    pub chosen_mask: u64,
    pub n_candidates: usize,
    pub n_feasible: usize,
    pub candidate_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub joint_count: usize,
    pub set_tasks: Vec<LoggedTask>,
    pub rows: Vec<LogRow>,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

impl TrajectoryLog {
    pub fn new(joint_count: usize, set_tasks: Vec<LoggedTask>) -> Self {
        TrajectoryLog {
            joint_count,
            set_tasks,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = TRAJECTORY_FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        h.extend((1..=self.joint_count).map(|i| format!("q{i}")));
        h.extend((1..=self.joint_count).map(|i| format!("qd{i}")));
        for t in &self.set_tasks {
            h.push(t.id.clone());
            h.push(format!("{}_min", t.id));
            h.push(format!("{}_max", t.id));
            h.push(format!("{}_active", t.id));
        }
        for c in [
            "ex",
            "ey",
            "ez",
            "rx",
            "ry",
            "rz",
            "pos_err",
            "ori_err",
            "active_mask",
            "chosen_mask",
            "n_candidates",
            "n_feasible",
            "candidate_norms",
        ] {
            h.push(c.to_string());
        }
        h
    }

    fn record(&self, r: &LogRow) -> Vec<String> {
        let mut rec = vec![
            r.tick.to_string(),
            num(r.t),
            r.phase.to_string(),
            r.phase_name.clone(),
            r.state.as_str().to_string(),
        ];
        rec.extend(r.q.iter().map(|v| num(*v)));
        rec.extend(r.qd.iter().map(|v| num(*v)));
        for (i, t) in self.set_tasks.iter().enumerate() {
            rec.push(num(r.set_values[i]));
            rec.push(num(t.bounds.min));
            rec.push(num(t.bounds.max));
            rec.push(u8::from(r.set_active[i]).to_string());
        }
        rec.extend(r.error.iter().map(|v| num(*v)));
        rec.push(num(r.position_error));
        rec.push(num(r.orientation_error));
        rec.push(r.active_mask.to_string());
        rec.push(r.chosen_mask.to_string());
        rec.push(r.n_candidates.to_string());
        rec.push(r.n_feasible.to_string());
        rec.push(r.candidate_norms.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";"));
        rec
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io {
            path: "trajectory.csv".into(),
            message: e.to_string(),
        };
        w.write_record(self.header()).map_err(io)?;
        for r in &self.rows {
            w.write_record(self.record(r)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "trajectory.csv".into(),
            message: e.to_string(),
        })
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.set_tasks.iter().position(|t| t.id == id)
    }
}

/// How close one set-based task came to its bounds over a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundMargin {
    pub task: String,
    pub min: f64,
    pub max: f64,
    pub lowest: f64,
    pub highest: f64,
    /// Smallest `σ − min` seen; negative means the bound was crossed.
    pub lower_margin: f64,
    /// Smallest `max − σ` seen.
    pub upper_margin: f64,
    /// Inactive-to-active transitions.
    pub activations: usize,
    pub active_ticks: usize,
    /// Activation flips that last a single tick (0-1-0 or 1-0-1).
    pub chatter: usize,
}

impl BoundMargin {
    pub fn within_bounds(&self) -> bool {
        self.lower_margin >= 0.0 && self.upper_margin >= 0.0
    }
}

pub fn bound_margins(log: &TrajectoryLog) -> Vec<BoundMargin> {
    log.set_tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let values: Vec<f64> = log.rows.iter().map(|r| r.set_values[i]).collect();
            let active: Vec<bool> = log.rows.iter().map(|r| r.set_active[i]).collect();
            let lowest = values.iter().copied().fold(f64::INFINITY, f64::min);
            let highest = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut activations = usize::from(active.first() == Some(&true));
            activations += active.windows(2).filter(|w| !w[0] && w[1]).count();
            let chatter = active.windows(3).filter(|w| w[0] == w[2] && w[0] != w[1]).count();
            BoundMargin {
                task: t.id.clone(),
                min: t.bounds.min,
                max: t.bounds.max,
                lowest,
                highest,
                lower_margin: lowest - t.bounds.min,
                upper_margin: t.bounds.max - highest,
                activations,
                active_ticks: active.iter().filter(|a| **a).count(),
                chatter,
            }
        })
        .collect()
}

pub fn write_bound_margins<W: Write>(margins: &[BoundMargin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "bound_margins.csv".into(),
        message: e.to_string(),
    };
    w.write_record([
        "task",
        "min",
        "max",
        "lowest",
        "highest",
        "lower_margin",
        "upper_margin",
        "activations",
        "active_ticks",
        "chatter",
    ])
    .map_err(io)?;
    for m in margins {
        w.write_record([
            m.task.clone(),
            num(m.min),
            num(m.max),
            num(m.lowest),
            num(m.highest),
            num(m.lower_margin),
            num(m.upper_margin),
            m.activations.to_string(),
            m.active_ticks.to_string(),
            m.chatter.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "bound_margins.csv".into(),
        message: e.to_string(),
    })
}

/// A finished waypoint phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub name: String,
    pub start_tick: u64,
    pub end_tick: u64,
    pub duration: f64,
    /// Tracking error at the tick the phase ended.
    pub position_error: f64,
    pub orientation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionSummary {
    pub command: String,
    pub state: MissionState,
    pub fault: Option<String>,
    pub ticks: u64,
    pub sim_time: f64,
    pub phases: Vec<PhaseRecord>,
    pub final_position_error: f64,
    pub final_orientation_error: f64,
    pub bounds: Vec<BoundMargin>,
    pub max_candidates: usize,
    /// Solved ticks whose feasible set came out empty.
    pub empty_feasible_ticks: usize,
}

impl MissionSummary {
    pub fn to_json(&self) -> String {
        // Non-finite bounds are not representable in JSON.
        let mut v = serde_json::to_value(self).expect("summary serializes");
        if let Some(bounds) = v.get_mut("bounds").and_then(|b| b.as_array_mut()) {
            for (b, m) in bounds.iter_mut().zip(&self.bounds) {
                for (key, val) in [("min", m.min), ("max", m.max), ("upper_margin", m.upper_margin), ("lower_margin", m.lower_margin)] {
                    if !val.is_finite() {
                        b[key] = serde_json::Value::String(num(val));
                    }
                }
            }
        }
        serde_json::to_string_pretty(&v).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: f64, active: bool) -> LogRow {
        LogRow {
            tick: 0,
            t: 0.0,
            phase: 0,
            phase_name: "p".into(),
            state: MissionState::Running,
            q: vec![0.0],
            qd: vec![0.0],
            set_values: vec![v],
            set_active: vec![active],
            error: [0.0; 6],
            position_error: 0.0,
            orientation_error: 0.0,
            active_mask: 0,
            chosen_mask: 0,
            n_candidates: 1,
            n_feasible: 1,
            candidate_norms: vec![0.0],
        }
    }

    fn log_with(values: &[(f64, bool)]) -> TrajectoryLog {
        let mut log = TrajectoryLog::new(
            1,
            vec![LoggedTask {
                id: "d".into(),
                bounds: SetBounds::lower_only(0.25, 0.03).unwrap(),
            }],
        );
        log.rows = values.iter().map(|&(v, a)| row(v, a)).collect();
        log
    }

    #[test]
    fn margins_count_activations_and_chatter() {
        let log = log_with(&[(0.3, false), (0.27, true), (0.26, true), (0.29, false), (0.27, true), (0.3, false)]);
        let m = &bound_margins(&log)[0];
        assert_eq!(m.activations, 2);
        assert_eq!(m.chatter, 2);
        assert_eq!(m.active_ticks, 3);
        assert!((m.lower_margin - 0.01).abs() < 1e-12);
        assert!(m.upper_margin.is_infinite());
        assert!(m.within_bounds());
    }

    #[test]
    fn csv_header_matches_records() {
        let log = log_with(&[(0.3, false)]);
        let text = String::from_utf8(log.to_csv_bytes()).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), first.len());
        let max_col = header.iter().position(|h| *h == "d_max").unwrap();
        assert_eq!(first[max_col], "inf");
    }
}
