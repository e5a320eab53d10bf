use crate::eval::{EVAL_DIR, REPORT_CSV};
use crate::CliError;
use hsiseg_core::metrics::{render_report_table, ReportFormat, ReportRow, TABLE_HEADER};
use std::path::{Path, PathBuf};

/// Rows of one run's `eval/report.csv`; cells are percentages.
pub fn read_report(run: &Path) -> Result<Vec<ReportRow>, CliError> {
    let path = run.join(EVAL_DIR).join(REPORT_CSV);
    if !path.is_file() {
        return Err(CliError::input(format!("missing evaluation report {}", path.display())));
    }
    let bad = |msg: String| CliError::input(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(&path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(TABLE_HEADER.split(',')) {
        return Err(bad(format!("unexpected header, want {TABLE_HEADER}")));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut metrics = [None; 6];
        for (i, m) in metrics.iter_mut().enumerate() {
            let cell = &rec[i + 2];
            *m = match cell.parse::<f64>() {
                Ok(v) => Some(v / 100.0),
                Err(_) if cell == "—" => None,
                Err(_) => return Err(bad(format!("bad cell {cell:?}"))),
            };
        }
        rows.push(ReportRow { dataset: rec[0].to_string(), model: rec[1].to_string(), metrics });
    }
    Ok(rows)
}

pub fn cmd_report(runs: &[PathBuf], format: ReportFormat) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for run in runs {
        rows.extend(read_report(run)?);
    }
    print!("{}", render_report_table(&rows, format));
    Ok(())
}
