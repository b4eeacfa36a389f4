use std::fs;

use vigxray::metrics::{aggregate, format_table, read_metrics_csv, write_aggregate_csv};

use crate::error::CliError;
use crate::AggregateArgs;

pub fn run(a: &AggregateArgs) -> Result<(), CliError> {
    let dir = &a.input_dir;
    let listing = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<_> = listing
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.to_string_lossy().ends_with(".metrics.csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Validation(format!(
            "no *.metrics.csv files in {}",
            dir.display()
        )));
    }
    let mut reports = Vec::with_capacity(files.len());
    for f in &files {
        let (id, m) = read_metrics_csv(f)?;
        if let Some(first) = reports.first().map(Vec::len) {
            if m.len() != first {
                return Err(CliError::Data(format!(
                    "{id} has {} layers, {} has {first}",
                    m.len(),
                    files[0].display()
                )));
            }
        }
        reports.push(m);
    }
    let rows = aggregate(&reports, if a.single_layer { 1 } else { 2 })?;
    let out = a.out.clone().unwrap_or_else(|| dir.join("aggregate.csv"));
    write_aggregate_csv(&out, &rows)?;
    print!("{}", format_table(&rows));
    println!("{} images, {} rows -> {}", reports.len(), rows.len(), out.display());
    Ok(())
}
