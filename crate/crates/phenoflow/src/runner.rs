//! Glue between a RunConfig and the solver: build the initial state, run,
//! attach the diagnostics record, write the output directory.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::diagnostics::{compute_record, DiagnosticsRecord};
use crate::dynamics::{run, Trajectory};
use crate::error::{Error, Result};
use crate::io::{summarize_params, write_diagnostics, write_snapshot};

pub struct RunOutput {
    config: RunConfig,
    trajectory: Trajectory,
    record: DiagnosticsRecord,
}

impl RunOutput {
    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn record(&self) -> &DiagnosticsRecord {
        &self.record
    }

    pub fn summary(&self) -> String {
        let last = self.trajectory.final_snapshot();
        let mass: f64 = last.state().densities().iter().map(|d| d.mass()).sum();
        format!(
            "{} | t={} mass={:.6e} max_p={:.6e} steps={} clipped={}",
            summarize_params(self.config.params(), self.config.phenotypes(), self.config.law()),
            last.time(),
            mass,
            last.pressure().max(),
            self.trajectory.dt_history().len(),
            self.trajectory.clipped_cells()
        )
    }
}

/// First 16 hex digits of the SHA-256 of the canonical config text; two
/// configs share an id exactly when they describe the same computation.
pub fn run_id(config: &RunConfig) -> String {
    let digest = Sha256::digest(config.identity_toml().as_bytes());
    let mut id = String::with_capacity(16);
    for byte in &digest[..8] {
        id.push_str(&format!("{byte:02x}"));
    }
    id
}

/// Simulates the configured run and computes its diagnostics record.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    let initial = config.initial_state()?;
    let trajectory = run(
        &initial,
        config.params(),
        config.law(),
        config.snapshot_times(),
    )?;
    let record = compute_record(&trajectory, &run_id(config))?;
    Ok(RunOutput {
        config: config.clone(),
        trajectory,
        record,
    })
}

/// Writes `diagnostics.csv`, the per-snapshot pressure fields `p_<j>.pfld`,
/// and the final pressure as `p_final.pfld`.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_diagnostics(output.record(), &dir.join("diagnostics.csv"))?;
    for (j, snap) in output.trajectory().snapshots().iter().enumerate() {
        write_snapshot(snap.pressure(), &dir.join(format!("p_{j:03}.pfld")))?;
    }
    write_snapshot(
        output.trajectory().final_snapshot().pressure(),
        &dir.join("p_final.pfld"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::io::read_snapshot;
    use std::path::Path;

    fn small_config() -> RunConfig {
        parse_config(
            "[grid]\npoints = 64\n[params]\nT = 0.05\nN = 2\n[snapshots]\ncount = 3\n",
            Path::new("test.toml"),
        )
        .unwrap()
    }

    #[test]
    fn execute_produces_aligned_outputs() {
        let out = execute(&small_config()).unwrap();
        assert_eq!(out.trajectory().snapshots().len(), 3);
        assert_eq!(out.record().times(), &[0.0, 0.025, 0.05]);
        assert!(out.record().get("nbar_linf").is_some());
        assert!(out.summary().contains("clipped=0"));
    }

    #[test]
    fn run_id_tracks_the_computation_not_the_destination() {
        let a = small_config();
        let b = small_config().with_output_dir("elsewhere");
        assert_eq!(run_id(&a), run_id(&b));
        let c = a.clone().with_stiffness(12.0).unwrap();
        assert_ne!(run_id(&a), run_id(&c));
        assert_eq!(run_id(&a).len(), 16);
    }

    #[test]
    fn outputs_land_in_the_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = execute(&small_config()).unwrap();
        write_outputs(&out, dir.path()).unwrap();
        let p = read_snapshot(&dir.path().join("p_final.pfld")).unwrap();
        let last = out.trajectory().final_snapshot().pressure();
        assert_eq!(p.values(), last.values());
        assert!(dir.path().join("diagnostics.csv").exists());
        assert!(dir.path().join("p_002.pfld").exists());
    }
}
