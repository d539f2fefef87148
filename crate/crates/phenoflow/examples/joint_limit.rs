//! All three limits at once. Along the path (N, k, 1/nu) = (8, 10, 10) * 2^j
//! the model should approach a continuum Hele-Shaw-type state. There is no
//! independent solver for that target, so convergence is measured the
//! Cauchy way: the L2 distance between final pressures of consecutive path
//! entries must shrink, and the complementarity residual p (1 - nbar),
//! which vanishes in the limit, must die alongside it.

use std::path::Path;

use phenoflow::config::parse_config;
use phenoflow::sweep::{default_joint_path, self_convergence, sweep, SweepGrid};

fn main() -> phenoflow::Result<()> {
    let base = parse_config(
        "[grid]\npoints = 256\n[params]\nT = 1.0\n[snapshots]\ncount = 17\n",
        Path::new("<example>"),
    )?;
    let path = default_joint_path();
    let grid = SweepGrid::from_path(&base, &path)?;

    let dir = std::env::temp_dir().join("phenoflow-joint-limit");
    let table = sweep(&grid, &dir)?;
    for row in table.rows() {
        println!(
            "entry N={:<3} k={:<4} nu={:<8} {}",
            row.phenotypes,
            row.stiffness,
            row.viscosity,
            if row.ok { "ok" } else { "failed" }
        );
    }

    let distances = self_convergence(&table, &path)?;
    println!("\nconsecutive final-pressure L2 distances (must decrease):");
    for (j, d) in distances.iter().enumerate() {
        println!("  step {j} -> {}: {d:.6e}", j + 1);
    }

    println!("\ncomplementarity residual |p (1 - nbar)|, accumulated over the run:");
    for &tuple in &path {
        let row = table.find(tuple).expect("path entry was swept");
        let record = table.diagnostics(row)?;
        let value = record.get("complementarity_cum").unwrap().last().unwrap().abs();
        println!("  N={:<3} k={:<4} nu={:<8} residual {value:.6e}", tuple.0, tuple.1, tuple.2);
    }
    println!("\nsweep entries cached under {}", dir.display());
    Ok(())
}
