//! Report artifacts: runs.csv, the structured-text summary, and per-target
//! plot data files.
//!
//! Everything here is derivable from runs.csv alone, so regenerating a
//! summary from an existing output directory reproduces it byte for byte.
//! Wall-clock duration is deliberately kept out of the files and only
//! printed to stdout.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::campaign::{CampaignReport, OutcomeCounts, RunRow, RUNS_CSV_HEADER};
use crate::harness::OUTCOMES;

pub fn write_runs_csv(path: &Path, rows: &[RunRow]) -> io::Result<()> {
    let mut out = String::with_capacity(rows.len() * 64 + 128);
    out.push_str(RUNS_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    fs::write(path, out)
}

pub fn read_runs_csv(path: &Path) -> io::Result<Vec<RunRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != RUNS_CSV_HEADER {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unexpected runs.csv header: {line}"),
                ));
            }
            continue;
        }
        match RunRow::from_csv(line) {
            Some(row) => rows.push(row),
            None => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("malformed runs.csv line {}: {line}", i + 1),
                ))
            }
        }
    }
    Ok(rows)
}

fn counts_line(name: &str, counts: &OutcomeCounts) -> String {
    let pct = counts.percentages();
    let mut line = format!("{name:<28} {:>8}", counts.total());
    for p in pct {
        let _ = write!(line, " {p:>8.2}");
    }
    line
}

/// Structured-text summary: totals in the seven-outcome shape, then
/// per-category and per-target breakdowns.
pub fn format_summary(report: &CampaignReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "campaign summary");
    let _ = writeln!(out, "seed {}", report.seed);
    let _ = writeln!(out, "runs {}", report.rows.len());
    let fault_types: Vec<String> = {
        let mut v: Vec<String> = report.rows.iter().map(|r| r.fault_type.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let _ = writeln!(out, "fault_types {}", fault_types.join(","));
    let _ = writeln!(out);

    let header = {
        let mut h = format!("{:<28} {:>8}", "scope", "runs");
        for o in OUTCOMES {
            let _ = write!(h, " {:>8}", o.label());
        }
        h
    };

    let _ = writeln!(out, "totals by fault type (percent per outcome)");
    let _ = writeln!(out, "{header}");
    for ft in &fault_types {
        let mut counts = OutcomeCounts::default();
        for row in report.rows.iter().filter(|r| &r.fault_type == ft) {
            counts.add(row.outcome);
        }
        let _ = writeln!(out, "{}", counts_line(ft, &counts));
    }
    let _ = writeln!(out, "{}", counts_line("all", &report.totals));
    let _ = writeln!(out);

    let _ = writeln!(out, "per category");
    let _ = writeln!(out, "{header}");
    for (name, counts) in &report.per_category {
        let _ = writeln!(out, "{}", counts_line(name, counts));
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "per target");
    let _ = writeln!(out, "{header}");
    for (name, counts) in &report.per_target {
        let _ = writeln!(out, "{}", counts_line(name, counts));
    }
    out
}

pub fn write_summary(path: &Path, report: &CampaignReport) -> io::Result<()> {
    fs::write(path, format_summary(report))
}

/// Per-target stacked percentages by outcome, one file per category and
/// fault type: `plotdata/<category>_<faulttype>.csv`.
pub fn write_plotdata(dir: &Path, report: &CampaignReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut groups: Vec<(String, String)> = Vec::new();
    for row in &report.rows {
        let key = (row.category.clone(), row.fault_type.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (category, fault_type) in groups {
        let mut targets: Vec<String> = Vec::new();
        for row in &report.rows {
            if row.category == category && row.fault_type == fault_type && !targets.contains(&row.target)
            {
                targets.push(row.target.clone());
            }
        }
        let mut out = String::from("target");
        for o in OUTCOMES {
            let _ = write!(out, ",{}", o.as_str());
        }
        out.push('\n');
        for target in targets {
            let mut counts = OutcomeCounts::default();
            for row in report
                .rows
                .iter()
                .filter(|r| r.target == target && r.fault_type == fault_type)
            {
                counts.add(row.outcome);
            }
            let pct = counts.percentages();
            let _ = write!(out, "{target}");
            for p in pct {
                let _ = write!(out, ",{p:.2}");
            }
            out.push('\n');
        }
        fs::write(dir.join(format!("{category}_{fault_type}.csv")), out)?;
    }
    Ok(())
}

/// Writes the full output directory: runs.csv, report.summary, plotdata/.
pub fn write_report_dir(dir: &Path, report: &CampaignReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_runs_csv(&dir.join("runs.csv"), &report.rows)?;
    write_summary(&dir.join("report.summary"), report)?;
    write_plotdata(&dir.join("plotdata"), report)?;
    Ok(())
}

/// Rebuilds summary and plot data from an existing runs.csv.
pub fn regenerate(dir: &Path) -> io::Result<()> {
    let rows = read_runs_csv(&dir.join("runs.csv"))?;
    let report = CampaignReport::from_rows(rows, 0);
    write_summary(&dir.join("report.summary"), &report)?;
    write_plotdata(&dir.join("plotdata"), &report)?;
    Ok(())
}
