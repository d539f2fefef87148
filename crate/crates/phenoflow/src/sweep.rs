//! Parameter sweeps over (N, k, nu), rate fitting, and self-convergence
//! measurements toward the joint limit N -> inf, k -> inf, nu -> 0.
//!
//! A sweep persists one directory per entry, keyed by a content hash of the
//! entry's canonical config, so reruns reuse finished work byte for byte:
//! `<root>/manifest` plus `<root>/entry-<hash>/{config, diagnostics.csv,
//! p_final.pfld, status}`. Aborted runs (support escape, nonfinite values)
//! mark their entry `failed` without stopping the sweep.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{RunConfig, SweepAxes};
use crate::dynamics::{run, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::io::{read_snapshot, write_bytes_atomic, write_diagnostics, write_snapshot};
use crate::runner::{execute, run_id};

#[derive(Clone, Debug)]
pub struct SweepEntry {
    phenotypes: usize,
    stiffness: f64,
    viscosity: f64,
    config: RunConfig,
    hash: String,
}

impl SweepEntry {
    pub fn tuple(&self) -> (usize, f64, f64) {
        (self.phenotypes, self.stiffness, self.viscosity)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }
}

/// The cartesian product of parameter axes over a shared base run.
pub struct SweepGrid {
    entries: Vec<SweepEntry>,
}

impl SweepGrid {
    pub fn new(base: &RunConfig, axes: &SweepAxes) -> Result<Self> {
        check_sorted("N", &axes.phenotypes, |a, b| b > a)?;
        check_sorted("k", &axes.stiffness, |a, b| b > a)?;
        check_sorted("nu", &axes.viscosity, |a, b| b > a)?;
        let mut entries = Vec::with_capacity(
            axes.phenotypes.len() * axes.stiffness.len() * axes.viscosity.len(),
        );
        for &n in &axes.phenotypes {
            for &k in &axes.stiffness {
                for &nu in &axes.viscosity {
                    let config = base
                        .clone()
                        .with_phenotypes(n)?
                        .with_stiffness(k)?
                        .with_viscosity(nu)?;
                    let hash = run_id(&config);
                    entries.push(SweepEntry {
                        phenotypes: n,
                        stiffness: k,
                        viscosity: nu,
                        config,
                        hash,
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    /// One entry per (N, k, nu) tuple of an explicit path over a shared
    /// base run. The coupled-limit studies live on a diagonal of the
    /// parameter space, which no axis product expresses without running
    /// the whole cube. Repeated tuples collapse to one entry.
    pub fn from_path(base: &RunConfig, path: &[(usize, f64, f64)]) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::InvalidInput("sweep path is empty".into()));
        }
        let mut entries: Vec<SweepEntry> = Vec::with_capacity(path.len());
        for &(n, k, nu) in path {
            let config = base
                .clone()
                .with_phenotypes(n)?
                .with_stiffness(k)?
                .with_viscosity(nu)?;
            let hash = run_id(&config);
            if entries.iter().any(|e| e.hash == hash) {
                continue;
            }
            entries.push(SweepEntry {
                phenotypes: n,
                stiffness: k,
                viscosity: nu,
                config,
                hash,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[SweepEntry] {
        &self.entries
    }
}

fn check_sorted<T: PartialOrd>(
    name: &str,
    list: &[T],
    increasing: impl Fn(&T, &T) -> bool,
) -> Result<()> {
    if list.is_empty() {
        return Err(Error::InvalidInput(format!("sweep axis {name} is empty")));
    }
    if list.windows(2).any(|w| !increasing(&w[0], &w[1])) {
        return Err(Error::InvalidInput(format!(
            "sweep axis {name} must increase strictly"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub hash: String,
    pub phenotypes: usize,
    pub stiffness: f64,
    pub viscosity: f64,
    pub ok: bool,
}

/// Result table of a finished sweep, backed by its directory.
pub struct SweepTable {
    root: PathBuf,
    rows: Vec<SweepRow>,
}

/// Operational errors stop the sweep; anything a single simulation can
/// signal (support escape, pressure blow-up, nonfinite values) only fails
/// its entry.
fn is_fatal(e: &Error) -> bool {
    matches!(
        e,
        Error::Io { .. } | Error::BadFormat { .. } | Error::Parse { .. }
    )
}

fn row_from_status(entry: &SweepEntry, status: &str) -> SweepRow {
    SweepRow {
        hash: entry.hash.clone(),
        phenotypes: entry.phenotypes,
        stiffness: entry.stiffness,
        viscosity: entry.viscosity,
        ok: status.trim_end() == "ok",
    }
}

fn run_entry(entry: &SweepEntry, root: &Path) -> Result<SweepRow> {
    let dir = root.join(format!("entry-{}", entry.hash));
    let status_path = dir.join("status");
    if status_path.exists() {
        let status =
            std::fs::read_to_string(&status_path).map_err(|e| Error::io(&status_path, e))?;
        return Ok(row_from_status(entry, &status));
    }

    // Build in a scratch directory and rename into place, so interrupted
    // sweeps never leave a half-written entry that a rerun would trust.
    let tmp = root.join(format!("entry-{}.tmp", entry.hash));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    std::fs::write(tmp.join("config"), entry.config.identity_toml())
        .map_err(|e| Error::io(&tmp.join("config"), e))?;

    let status = match execute(&entry.config) {
        Ok(out) => {
            write_diagnostics(out.record(), &tmp.join("diagnostics.csv"))?;
            write_snapshot(
                out.trajectory().final_snapshot().pressure(),
                &tmp.join("p_final.pfld"),
            )?;
            "ok\n".to_string()
        }
        Err(e) if is_fatal(&e) => return Err(e),
        Err(e) => format!("failed: {}\n", e.to_string().replace('\n', " ")),
    };
    std::fs::write(tmp.join("status"), &status).map_err(|e| Error::io(&status_path, e))?;
    std::fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
    Ok(row_from_status(entry, &status))
}

/// Runs every entry (in parallel, reusing finished ones) and writes the
/// manifest. The resulting directory tree is a pure function of the grid.
pub fn sweep(grid: &SweepGrid, root: &Path) -> Result<SweepTable> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let rows: Vec<SweepRow> = grid
        .entries()
        .par_iter()
        .map(|entry| run_entry(entry, root))
        .collect::<Result<_>>()?;

    let mut manifest = String::from("PFSWEEP 1\n");
    manifest.push_str(&format!("entries {}\n", rows.len()));
    for r in &rows {
        manifest.push_str(&format!(
            "{} N={} k={:.16e} nu={:.16e} status={}\n",
            r.hash,
            r.phenotypes,
            r.stiffness,
            r.viscosity,
            if r.ok { "ok" } else { "failed" }
        ));
    }
    write_bytes_atomic(&root.join("manifest"), manifest.as_bytes())?;

    Ok(SweepTable {
        root: root.to_path_buf(),
        rows,
    })
}

impl SweepTable {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join("manifest");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |message: String| Error::BadFormat {
            path: path.clone(),
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some("PFSWEEP 1") {
            return Err(bad("missing PFSWEEP 1 header".into()));
        }
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("entries "))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad("missing entry count".into()))?;

        let mut rows = Vec::with_capacity(count);
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 5 {
                return Err(bad(format!("malformed row {line:?}")));
            }
            let field = |token: &str, prefix: &str| -> Result<String> {
                token
                    .strip_prefix(prefix)
                    .map(str::to_string)
                    .ok_or_else(|| bad(format!("expected {prefix}... in {line:?}")))
            };
            let parse_err = |what: &str| bad(format!("unreadable {what} in {line:?}"));
            rows.push(SweepRow {
                hash: t[0].to_string(),
                phenotypes: field(t[1], "N=")?.parse().map_err(|_| parse_err("N"))?,
                stiffness: field(t[2], "k=")?.parse().map_err(|_| parse_err("k"))?,
                viscosity: field(t[3], "nu=")?.parse().map_err(|_| parse_err("nu"))?,
                ok: match field(t[4], "status=")?.as_str() {
                    "ok" => true,
                    "failed" => false,
                    other => return Err(bad(format!("unknown status {other:?}"))),
                },
            });
        }
        if rows.len() != count {
            return Err(bad(format!("{} rows for {count} declared entries", rows.len())));
        }
        let missing: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| !root.join(format!("entry-{}", r.hash)).join("status").exists())
            .collect();
        if let Some(r) = missing.first() {
            return Err(Error::MissingEntries(format!(
                "manifest lists entry-{} but its directory is gone",
                r.hash
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            rows,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    pub fn find(&self, tuple: (usize, f64, f64)) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.phenotypes == tuple.0 && r.stiffness == tuple.1 && r.viscosity == tuple.2
        })
    }

    pub fn entry_dir(&self, row: &SweepRow) -> PathBuf {
        self.root.join(format!("entry-{}", row.hash))
    }

    fn require_ok(&self, row: &SweepRow) -> Result<()> {
        if !row.ok {
            return Err(Error::MissingEntries(format!(
                "entry-{} (N={} k={} nu={}) failed; see its status file",
                row.hash, row.phenotypes, row.stiffness, row.viscosity
            )));
        }
        Ok(())
    }

    pub fn final_pressure(&self, row: &SweepRow) -> Result<Field> {
        self.require_ok(row)?;
        read_snapshot(&self.entry_dir(row).join("p_final.pfld"))
    }

    pub fn diagnostics(&self, row: &SweepRow) -> Result<crate::diagnostics::DiagnosticsRecord> {
        self.require_ok(row)?;
        crate::io::read_diagnostics(&self.entry_dir(row).join("diagnostics.csv"))
    }

    pub fn entry_config(&self, row: &SweepRow) -> Result<RunConfig> {
        crate::config::load_config(&self.entry_dir(row).join("config"))
    }
}

/// Least-squares exponent fit of value ~ C * parameter^slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits log(value) against log(parameter). A value of exactly 0 means the
/// family already converged identically there; that short-circuits to the
/// slope = +inf sentinel rather than poisoning the logs.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(x, v) in points {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::InvalidInput(format!("nonpositive fit parameter {x}")));
        }
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidInput(format!("negative fit value {v}")));
        }
    }
    if points.iter().any(|&(_, v)| v == 0.0) {
        return Ok(RateFit {
            slope: f64::INFINITY,
            intercept: f64::NEG_INFINITY,
            r_squared: 1.0,
            points: points.len(),
        });
    }

    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(x, _)| x.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, v)| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput(
            "rate fit needs at least two distinct parameters".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ym) * (y - ym)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: points.len(),
    })
}

/// Conservative coarsening to `points` cells per axis: each coarse value is
/// the plain average of its block, so coarse sums track fine sums exactly
/// (block sums divided by a power of two).
pub fn restrict(field: &Field, points: usize) -> Result<Field> {
    let g = field.grid();
    let n = g.points_per_axis();
    if points == n {
        return Ok(field.clone());
    }
    if points > n || n % points != 0 {
        return Err(Error::InvalidInput(format!(
            "cannot restrict {n} cells per axis onto {points}"
        )));
    }
    let r = n / points;
    let coarse_grid = SpatialGrid::new(g.dim(), points, g.box_length())?;
    let v = field.values();
    let values = match g.dim() {
        1 => (0..points)
            .map(|c| v[c * r..(c + 1) * r].iter().sum::<f64>() / r as f64)
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(points * points);
            for ci in 0..points {
                for cj in 0..points {
                    let mut sum = 0.0;
                    for fi in ci * r..(ci + 1) * r {
                        for fj in cj * r..(cj + 1) * r {
                            sum += v[fi * n + fj];
                        }
                    }
                    out.push(sum / (r * r) as f64);
                }
            }
            out
        }
    };
    Field::new(coarse_grid, values)
}

fn windowed_l2_distance(a: &Field, b: &Field, center: &[f64], radius: f64) -> f64 {
    let g = a.grid();
    let mut acc = 0.0;
    for c in 0..g.cells() {
        let x = g.cell_center(c);
        let mut r2 = 0.0;
        for (d, &cd) in center.iter().enumerate() {
            let dx = g.wrap(x[d], cd);
            r2 += dx * dx;
        }
        if r2 <= radius * radius {
            let d = a.values()[c] - b.values()[c];
            acc += d * d;
        }
    }
    (acc * g.cell_measure()).sqrt()
}

/// Pairwise final-pressure distances along a path of (N, k, nu) tuples,
/// measured in L2 on the bump window (radius box/4 around the configured
/// center) after conservative restriction to the coarsest grid involved.
pub fn self_convergence(table: &SweepTable, path: &[(usize, f64, f64)]) -> Result<Vec<f64>> {
    if path.len() < 2 {
        return Err(Error::InvalidInput(
            "self-convergence needs at least two path entries".into(),
        ));
    }
    let rows: Vec<&SweepRow> = path
        .iter()
        .map(|&t| {
            table.find(t).ok_or_else(|| {
                Error::MissingEntries(format!(
                    "no sweep entry for (N={}, k={}, nu={})",
                    t.0, t.1, t.2
                ))
            })
        })
        .collect::<Result<_>>()?;
    let fields: Vec<Field> = rows.iter().map(|r| table.final_pressure(r)).collect::<Result<_>>()?;
    let coarsest = fields
        .iter()
        .map(|f| f.grid().points_per_axis())
        .min()
        .expect("nonempty path");
    let coarse: Vec<Field> = fields
        .iter()
        .map(|f| restrict(f, coarsest))
        .collect::<Result<_>>()?;

    let cfg = table.entry_config(rows[0])?;
    let center = cfg.initial().center().to_vec();
    let radius = cfg.grid().box_length() / 4.0;
    Ok(coarse
        .windows(2)
        .map(|w| windowed_l2_distance(&w[0], &w[1], &center, radius))
        .collect())
}

/// The inviscid endpoint: the same run with nu forced to 0, where the
/// potential solve short-circuits to W = p bitwise.
pub fn darcy_reference(config: &RunConfig) -> Result<Trajectory> {
    let darcy = config.clone().with_viscosity(0.0)?;
    let initial = darcy.initial_state()?;
    run(&initial, darcy.params(), darcy.law(), darcy.snapshot_times())
}

/// Space-time L2 distance between the pressure fields of two trajectories
/// on the same grid and snapshot schedule (trapezoidal in time).
pub fn trajectory_pressure_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let sa = a.snapshots();
    let sb = b.snapshots();
    if sa.len() != sb.len() || a.grid() != b.grid() {
        return Err(Error::InvalidInput(
            "trajectories differ in schedule or grid".into(),
        ));
    }
    let measure = a.grid().cell_measure();
    let mut acc = 0.0;
    for (j, (pa, pb)) in sa.iter().zip(sb).enumerate() {
        if pa.time() != pb.time() {
            return Err(Error::InvalidInput(
                "trajectories differ in schedule or grid".into(),
            ));
        }
        let left = if j == 0 { pa.time() } else { sa[j - 1].time() };
        let right = if j + 1 == sa.len() { pa.time() } else { sa[j + 1].time() };
        let weight = 0.5 * (right - left);
        let mut sq = 0.0;
        for (x, y) in pa.pressure().values().iter().zip(pb.pressure().values()) {
            let d = x - y;
            sq += d * d;
        }
        acc += weight * sq * measure;
    }
    Ok(acc.sqrt())
}

pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

/// Trend check on >= 4 points: decreasing overall, with at most one
/// inversion, and that one tolerated only when it and its neighboring
/// ratios all sit within 10% of flat (measurement noise, not growth).
pub fn decreasing_trend(values: &[f64]) -> Result<bool> {
    if values.len() < 4 {
        return Err(Error::InvalidInput(
            "trend verdicts need at least 4 points".into(),
        ));
    }
    let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    let inversions: Vec<usize> = ratios
        .iter()
        .enumerate()
        .filter(|(_, &r)| r >= 1.0)
        .map(|(i, _)| i)
        .collect();
    Ok(match inversions.as_slice() {
        [] => true,
        [i] => {
            let near_flat = |r: f64| (r - 1.0).abs() <= 0.1;
            let mut ok = near_flat(ratios[*i]);
            if *i > 0 {
                ok &= near_flat(ratios[i - 1]);
            }
            if i + 1 < ratios.len() {
                ok &= near_flat(ratios[i + 1]);
            }
            ok
        }
        _ => false,
    })
}

/// The default coupled path: (N, k, 1/nu) = (8, 10, 10) * 2^j for j = 0..3,
/// driving all three limits together.
pub fn default_joint_path() -> Vec<(usize, f64, f64)> {
    (0..4)
        .map(|j| {
            let s = (1u32 << j) as f64;
            (8usize << j, 10.0 * s, 1.0 / (10.0 * s))
        })
        .collect()
}
