//! The stiff-pressure limit k -> infinity. The pressure law p = k/(k-1)
//! nbar^(k-1) turns into a hard constraint "nbar <= 1 and p vanishes off
//! the saturated set"; the weak-form excess functional measures how far a
//! finite-k run sits from that complementarity relation and should decay
//! like 1/k.

use std::path::Path;

use phenoflow::config::parse_config;
use phenoflow::diagnostics::{default_bump, pressure_excess_functional};
use phenoflow::runner::execute;
use phenoflow::sweep::fit_rate;

fn main() -> phenoflow::Result<()> {
    let mut points = Vec::new();
    println!("{:>6} {:>18}", "k", "|excess functional|");
    for k in [10.0, 20.0, 40.0, 80.0] {
        let cfg = parse_config(
            &format!(
                "[grid]\npoints = 512\n[params]\nN = 8\nk = {k}\nnu = 1e-3\nT = 0.5\n\
                 [snapshots]\ncount = 17\n"
            ),
            Path::new("<example>"),
        )?;
        let traj = execute(&cfg)?.trajectory().clone();
        // Test function: a fixed smooth bump over the initially occupied
        // region, so all four values weigh the same part of space-time.
        let psi = default_bump(&traj)?;
        let value = pressure_excess_functional(&traj, &psi, 0.0)?.abs();
        println!("{k:>6} {value:>18.8e}");
        points.push((k, value));
    }

    let fit = fit_rate(&points)?;
    println!("\nfitted |excess| ~ k^{:.3}  (the limit theory predicts -1)", fit.slope);
    Ok(())
}
