//! Drive the experiment runner from a JSON config, the same path the
//! `torus-rds` binary takes, and print the resulting rows.
//!
//! `cargo run --release --example config_run [config.json]`

use std::path::PathBuf;

use torus_rds::runner::{execute, parse_config, to_csv};

fn main() -> torus_rds::Result<()> {
    let path = std::env::args().nth(1).map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/sweep.json"),
        PathBuf::from,
    );
    let cfg = parse_config(&std::fs::read_to_string(&path)?)?;
    let out = execute(&cfg)?;
    for row in &out.rows {
        let metrics: Vec<String> = row
            .metrics
            .iter()
            .map(|m| format!("{} = {:.5}", m.name, m.value))
            .collect();
        println!("{}: {}", row.label, metrics.join(", "));
    }
    for (k, v) in &out.summary {
        println!("summary {k} = {v:.5}");
    }
    eprintln!("\n{}", to_csv(&out.rows)?);
    Ok(())
}
