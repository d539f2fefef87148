//! How fast does the Brinkman closure collapse onto Darcy as nu -> 0?
//! The space-time L2 distance between the velocity potential W and the
//! pressure p should shrink like sqrt(nu). This example sweeps five
//! viscosities and fits the observed rate on a log-log line.

use std::path::Path;

use phenoflow::config::parse_config;
use phenoflow::diagnostics::w_minus_p_l2;
use phenoflow::runner::execute;
use phenoflow::sweep::fit_rate;

fn main() -> phenoflow::Result<()> {
    let mut points = Vec::new();
    println!("{:>10} {:>16}", "nu", "||W - p||_L2");
    for nu in [1e-3, 3e-3, 1e-2, 3e-2, 1e-1] {
        let cfg = parse_config(
            &format!(
                "[grid]\npoints = 512\n[params]\nN = 8\nk = 10.0\nnu = {nu}\nT = 0.5\n\
                 [snapshots]\ncount = 17\n"
            ),
            Path::new("<example>"),
        )?;
        let distance = w_minus_p_l2(execute(&cfg)?.trajectory());
        println!("{nu:>10.0e} {distance:>16.8e}");
        points.push((nu, distance));
    }

    let fit = fit_rate(&points)?;
    println!(
        "\nfitted ||W - p|| ~ nu^{:.3}  (r2 = {:.4}, sqrt(nu) predicts 0.5)",
        fit.slope, fit.r_squared
    );
    Ok(())
}
