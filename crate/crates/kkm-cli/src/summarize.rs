//! Aggregates a results CSV into one row per configuration group with the
//! mean and sample standard deviation of every numeric column.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

/// Columns whose values define a configuration group.
const GROUP_COLS: [&str; 6] = ["dataset", "algo", "kernel", "b", "tau", "lr"];
/// Columns that get aggregated. Empty cells (inapplicable metrics) are
/// skipped rather than treated as zero.
const VALUE_COLS: [&str; 6] = [
    "iters_run",
    "kernel_build_ms",
    "cluster_ms",
    "final_cost",
    "ari",
    "nmi",
];

fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(input: &Path, out: &Path) -> Result<()> {
    let mut rdr =
        csv::Reader::from_path(input).with_context(|| format!("reading {}", input.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no `{name}` column", input.display()))
    };
    let group_idx: Vec<usize> = GROUP_COLS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let value_idx: Vec<usize> = VALUE_COLS.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut groups: BTreeMap<Vec<String>, Vec<Vec<Option<f64>>>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let key: Vec<String> = group_idx
            .iter()
            .map(|&i| record.get(i).unwrap_or("").to_string())
            .collect();
        let vals: Vec<Option<f64>> = value_idx
            .iter()
            .map(|&i| {
                let cell = record.get(i).unwrap_or("");
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .with_context(|| format!("non-numeric `{cell}` in column {i}"))
                }
            })
            .collect::<Result<_>>()?;
        groups.entry(key).or_default().push(vals);
    }
    if groups.is_empty() {
        return Err(anyhow!("{} has no data rows", input.display()));
    }

    let mut wtr =
        csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    let mut header: Vec<String> = GROUP_COLS.iter().map(|s| s.to_string()).collect();
    header.push("runs".into());
    for name in VALUE_COLS {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    wtr.write_record(&header)?;

    for (key, rows) in &groups {
        let mut record = key.clone();
        record.push(rows.len().to_string());
        for c in 0..VALUE_COLS.len() {
            let present: Vec<f64> = rows.iter().filter_map(|r| r[c]).collect();
            if present.is_empty() {
                record.push(String::new());
                record.push(String::new());
            } else {
                let (mean, std) = mean_std(&present);
                record.push(mean.to_string());
                record.push(std.to_string());
            }
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    println!("wrote {} group(s) to {}", groups.len(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::CSV_HEADER;

    #[test]
    fn sample_std_uses_n_minus_one() {
        let (mean, std) = mean_std(&[0.4, 0.6]);
        assert!((mean - 0.5).abs() < 1e-12);
        assert!((std - (0.02f64).sqrt()).abs() < 1e-12);
        let (_, lone) = mean_std(&[3.0]);
        assert_eq!(lone, 0.0);
    }

    #[test]
    fn groups_and_aggregates_rows() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("rows.csv");
        let out = dir.path().join("summary.csv");
        let mut wtr = csv::Writer::from_path(&input).unwrap();
        wtr.write_record(CSV_HEADER).unwrap();
        for (seed, ari) in [(0, "0.4"), (1, "0.6")] {
            wtr.write_record([
                "blobs:n=10,k=2",
                "mini-batch",
                "gaussian",
                "kappa=1",
                "2",
                "8",
                "",
                "0",
                "sqrt",
                &seed.to_string(),
                "5",
                "1.0",
                "2.0",
                "0.25",
                ari,
                "",
            ])
            .unwrap();
        }
        wtr.write_record([
            "blobs:n=10,k=2",
            "full-batch",
            "gaussian",
            "kappa=1",
            "2",
            "",
            "",
            "",
            "",
            "0",
            "7",
            "1.0",
            "9.0",
            "0.20",
            "1.0",
            "1.0",
        ])
        .unwrap();
        wtr.flush().unwrap();
        drop(wtr);

        summarize(&input, &out).unwrap();
        let mut rdr = csv::Reader::from_path(&out).unwrap();
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        // BTreeMap ordering puts full-batch before mini-batch.
        assert_eq!(&rows[0][1], "full-batch");
        assert_eq!(&rows[0][6], "1");
        let mini = &rows[1];
        assert_eq!(&mini[6], "2");
        let ari_mean: f64 = mini[15].parse().unwrap();
        let ari_std: f64 = mini[16].parse().unwrap();
        assert!((ari_mean - 0.5).abs() < 1e-12);
        assert!((ari_std - 0.141421356).abs() < 1e-6);
        // nmi was empty on the mini-batch rows, so its aggregate is empty.
        assert_eq!(&mini[17], "");
    }
}
