//! Deterministic CSV and JSON emission of study results.

use super::runners::{ReportRow, StudyOutcome};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const CSV_HEADER: &str = "experiment,arm,seed,k,window_start,n_points,noise,epochs,\
learning_rate,consistency_weight,hidden,dropout,rmse,mae,smape,mad";

pub fn write_rows_csv(rows: &[ReportRow], path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.arm,
            r.seed,
            r.k,
            r.window_start,
            r.n_points,
            r.noise,
            r.epochs,
            r.learning_rate,
            r.consistency_weight,
            r.hidden,
            r.dropout,
            r.rmse,
            r.mae,
            r.smape,
            r.mad
        )?;
    }
    w.flush()
}

/// JSON summary: mean +/- std per arm plus the raw per-seed values.
pub fn write_summary_json(outcome: &StudyOutcome, path: &Path) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(outcome).expect("outcome serializes");
    std::fs::write(path, json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let rows = vec![ReportRow {
            experiment: "test".into(),
            arm: "full".into(),
            seed: 1,
            k: 2,
            window_start: 3,
            n_points: 8,
            noise: 0.1,
            epochs: 10,
            learning_rate: 1e-3,
            consistency_weight: 0.1,
            hidden: 4,
            dropout: 0.0,
            rmse: 0.5,
            mae: 0.25,
            smape: 10.0,
            mad: 0.1,
        }];
        let dir = std::env::temp_dir().join("afdsta-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rows.csv");
        write_rows_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "test,full,1,2,3,8,0.1,10,0.001,0.1,4,0,0.5,0.25,10,0.1"
        );
        std::fs::remove_file(&path).ok();
    }
}
