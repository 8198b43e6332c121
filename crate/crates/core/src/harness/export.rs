//! Per-figure CSV bundles cut from a trajectory log.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Which figure files an export produced and how it went.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExportReport {
    pub files: Vec<PathBuf>,
    /// Data rows written to every file.
    pub rows: usize,
    pub warnings: Vec<String>,
}

impl ExportReport {
    /// Complete, non-empty exports only.
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty() && self.rows > 0
    }
}

struct Figure {
    file: &'static str,
    /// (output column, source column)
    columns: Vec<(&'static str, String)>,
}

fn figures(header: &csv::StringRecord) -> Vec<Figure> {
    let has = |c: &str| header.iter().any(|h| h == c);
    let mut out = vec![Figure {
        file: "pose_error.csv",
        columns: ["ex", "ey", "ez", "rx", "ry", "rz", "pos_err", "ori_err"]
            .into_iter()
            .map(|c| (c, c.to_string()))
            .collect(),
    }];
    for (file, task, joint) in [("joint4_limits.csv", "joint4_limit", "q4"), ("joint2_limits.csv", "joint2_limit", "q2")] {
        if has(task) {
            out.push(Figure {
                file,
                columns: vec![
                    (joint, joint.to_string()),
                    ("min", format!("{task}_min")),
                    ("max", format!("{task}_max")),
                    ("active", format!("{task}_active")),
                ],
            });
        }
    }
    if has("obstacle_distance") {
        out.push(Figure {
            file: "obstacle_distance.csv",
            columns: vec![
                ("distance", "obstacle_distance".into()),
                ("threshold", "obstacle_distance_min".into()),
                ("active", "obstacle_distance_active".into()),
            ],
        });
    }
    out
}

/// Writes the figure files for the log read from `input` into `out_dir`.
///
/// A log that ends in a malformed or truncated record is exported up to the
/// last complete row, with a warning. An empty or headerless log yields
/// header-only files and a warning.
pub fn export_plots<R: Read>(input: R, out_dir: &Path) -> Result<ExportReport> {
    let io = |path: &Path, e: &dyn std::fmt::Display| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, &e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let mut report = ExportReport::default();
    let header = match reader.headers() {
        Ok(h) if !h.is_empty() && h.iter().any(|c| c == "t") => h.clone(),
        _ => {
            report.warnings.push("trajectory log is empty or has no header".into());
            csv::StringRecord::from(vec!["t"])
        }
    };
    let figs = figures(&header);
    let index = |name: &str| header.iter().position(|h| h == name);

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        match rec {
            Ok(r) => rows.push(r),
            Err(e) => {
                report.warnings.push(format!("log truncated at data row {}: {e}", i + 1));
                break;
            }
        }
    }
    if rows.is_empty() && report.warnings.is_empty() {
        report.warnings.push("trajectory log has no rows".into());
    }

    for fig in figs {
        let path = out_dir.join(fig.file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, &e))?;
        let mut head = vec!["t"];
        head.extend(fig.columns.iter().map(|(c, _)| *c));
        w.write_record(&head).map_err(|e| io(&path, &e))?;
        let t = index("t");
        let sources: Vec<Option<usize>> = fig.columns.iter().map(|(_, src)| index(src)).collect();
        if let Some(missing) = fig.columns.iter().zip(&sources).find(|(_, s)| s.is_none()) {
            report.warnings.push(format!("{}: column '{}' missing", fig.file, missing.0 .1));
        }
        for r in &rows {
            let mut out = vec![t.and_then(|i| r.get(i)).unwrap_or("")];
            out.extend(sources.iter().map(|s| s.and_then(|i| r.get(i)).unwrap_or("")));
            w.write_record(&out).map_err(|e| io(&path, &e))?;
        }
        w.flush().map_err(|e| io(&path, &e))?;
        report.files.push(path);
    }
    report.rows = rows.len();
    for warning in &report.warnings {
        log::warn!("{warning}");
    }
    Ok(report)
}

pub fn export_plots_file(log: &Path, out_dir: &Path) -> Result<ExportReport> {
    let file = fs::File::open(log).map_err(|e| Error::Io {
        path: log.to_path_buf(),
        message: e.to_string(),
    })?;
    export_plots(file, out_dir)
}
