//! The acceptance gate: one test per numbered criterion, each printing a
//! single PASS/FAIL line (run with --nocapture to see them). Tolerances sit
//! next to the criterion they guard.

use std::f64::consts::PI;
use std::path::Path;

use phenoflow::config::{parse_config, RunConfig, SweepAxes};
use phenoflow::diagnostics::{
    default_bump, energy_evolution_residual, phenotype_lipschitz_check,
    pressure_excess_functional, reconstruction_defect, riemann_vs_integral, w_minus_p_l2,
    TestFunction,
};
use phenoflow::dynamics::{advect_step, homogeneous_oracle, run, Trajectory};
use phenoflow::grid::{Field, SpatialGrid};
use phenoflow::model::{EntropyPair, GrowthLaw, MultiState, PhenotypeSet, SimParams};
use phenoflow::runner::execute;
use phenoflow::spectral::SpectralPlan;
use phenoflow::sweep::{
    default_joint_path, fit_rate, self_convergence, strictly_decreasing, sweep, SweepGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn fmt_sci(values: &[f64]) -> String {
    let inner: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", inner.join(", "))
}

fn config(text: &str) -> RunConfig {
    parse_config(text, Path::new("acceptance.toml")).expect("valid acceptance config")
}

fn law_default() -> GrowthLaw {
    GrowthLaw::linear(1.0, 1.0, 1.0).unwrap()
}

const HELMHOLTZ_TOL: f64 = 1e-10;

#[test]
fn c01_helmholtz_resolvent_exactness() {
    // Single modes are resolvent eigenfunctions: W = p / (1 + nu |xi|^2).
    let mut worst = 0.0_f64;
    let g1 = SpatialGrid::new(1, 256, 10.0).unwrap();
    let plan1 = SpectralPlan::new(g1);
    for nu in [1e-3, 1e-2, 0.3] {
        let xi = 2.0 * PI * 3.0 / 10.0;
        let p = Field::from_fn(g1, |x| (xi * x[0] + 0.7).cos()).unwrap();
        let w = plan1.solve_w(&p, nu).unwrap();
        let factor = 1.0 / (1.0 + nu * xi * xi);
        for (wv, pv) in w.values().iter().zip(p.values()) {
            worst = worst.max((wv - factor * pv).abs());
        }
    }
    let g2 = SpatialGrid::new(2, 32, 4.0).unwrap();
    let plan2 = SpectralPlan::new(g2);
    let (xi0, xi1) = (2.0 * PI * 2.0 / 4.0, 2.0 * PI * 5.0 / 4.0);
    let p2 = Field::from_fn(g2, |x| (xi0 * x[0] + xi1 * x[1]).cos()).unwrap();
    let w2 = plan2.solve_w(&p2, 0.05).unwrap();
    let factor2 = 1.0 / (1.0 + 0.05 * (xi0 * xi0 + xi1 * xi1));
    for (wv, pv) in w2.values().iter().zip(p2.values()) {
        worst = worst.max((wv - factor2 * pv).abs());
    }

    // Round trip (I - nu Lap) W = p on random data, plus the nu = 0 bypass.
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut roundtrip = 0.0_f64;
    for nu in [1e-3, 0.1] {
        let p = Field::new(g1, (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let w = plan1.solve_w(&p, nu).unwrap();
        let lap = plan1.laplacian(&w).unwrap();
        for c in 0..g1.cells() {
            roundtrip =
                roundtrip.max((w.values()[c] - nu * lap.values()[c] - p.values()[c]).abs());
        }
    }
    let p = Field::new(g1, (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let w0 = plan1.solve_w(&p, 0.0).unwrap();
    let bitwise = w0
        .values()
        .iter()
        .zip(p.values())
        .all(|(a, b)| a.to_bits() == b.to_bits());

    verdict(
        "01 helmholtz-exactness",
        worst <= HELMHOLTZ_TOL && roundtrip <= HELMHOLTZ_TOL && bitwise,
        &format!("mode error {worst:.2e}, round trip {roundtrip:.2e}, nu=0 bitwise {bitwise}"),
    );
}

const ORACLE_TOL: f64 = 1e-3;

#[test]
fn c02_homogeneous_run_matches_ode_oracle() {
    let grid = SpatialGrid::new(1, 8, 10.0).unwrap();
    let levels: Vec<f64> = PhenotypeSet::new(4)
        .unwrap()
        .traits()
        .iter()
        .map(|&a| 0.8 * (1.0 + 0.5 * (a - 0.5)))
        .collect();
    let state = MultiState::homogeneous(grid, &levels).unwrap();
    let params = SimParams::new(10.0, 1e-2, 1.0, 0.4, 1e-4).unwrap();
    let traj = run(&state, &params, &law_default(), &[0.0, 1.0]).unwrap();
    let oracle = homogeneous_oracle(&levels, &law_default(), 10.0, 1.0, 1e-4).unwrap();

    let mut worst = 0.0_f64;
    for (i, expect) in oracle.iter().enumerate() {
        let d = traj.final_snapshot().state().density(i);
        worst = worst.max((d.values()[0] - expect).abs() / expect);
        worst = worst.max((d.max() - d.min()).abs() / expect);
    }
    verdict(
        "02 ode-oracle-equivalence",
        worst <= ORACLE_TOL,
        &format!("worst relative error {worst:.3e} at dt = 1e-4"),
    );
}

const MASS_BOUND_SLACK: f64 = 1e-6;
const CONSERVATION_TOL: f64 = 1e-13;

#[test]
fn c03_gronwall_mass_bound_and_conservation() {
    // Gmax = 1: G = 1 - p never exceeds 1, so mass(t) <= e^t mass(0) and in
    // particular e * mass(0) at every snapshot of a T = 1 run.
    let cfg = config(
        "[grid]\npoints = 128\n[params]\nT = 1.0\n[law]\ngamma0 = 1.0\ngamma1 = 0.0\n[snapshots]\ncount = 17\n",
    );
    let out = execute(&cfg).unwrap();
    let total = |s: &phenoflow::dynamics::Snapshot| -> f64 {
        s.state().densities().iter().map(Field::mass).sum()
    };
    let mass0 = total(&out.trajectory().snapshots()[0]);
    let bound = std::f64::consts::E * mass0 * (1.0 + MASS_BOUND_SLACK);
    let worst = out
        .trajectory()
        .snapshots()
        .iter()
        .map(&total)
        .fold(0.0_f64, f64::max);

    // G == 0: transport alone conserves every species' mass.
    let grid = SpatialGrid::new(1, 128, 10.0).unwrap();
    let bump = Field::from_fn(grid, |x| 0.5 * (-x[0] * x[0] / 0.5).exp()).unwrap();
    let mut state = MultiState::new(PhenotypeSet::new(2).unwrap(), vec![bump.clone(), bump], 0.0).unwrap();
    let params = SimParams::new(10.0, 1e-2, 1.0, 0.4, 1e-2).unwrap();
    let plan = SpectralPlan::new(grid);
    let m0: f64 = state.densities().iter().map(Field::mass).sum();
    for _ in 0..400 {
        state = advect_step(&plan, &state, &params, 2e-4).unwrap().0;
    }
    let m1: f64 = state.densities().iter().map(Field::mass).sum();
    let drift = (m1 - m0).abs() / m0;

    verdict(
        "03 gronwall-mass-bound",
        worst <= bound && drift <= CONSERVATION_TOL,
        &format!(
            "max mass {worst:.6e} vs e-bound {bound:.6e}; growth-free drift {drift:.2e}"
        ),
    );
}

const PRESSURE_CAP_MARGIN: f64 = 1.05;

#[test]
fn c04_positivity_and_pressure_cap_matrix() {
    let mut detail = String::new();
    let mut pass = true;
    for k in [10.0, 40.0] {
        for nu in [1e-2, 1e-3] {
            let cfg = config(&format!("[params]\nk = {k}\nnu = {nu}\nT = 1.0\n"));
            let out = execute(&cfg).unwrap();
            let traj = out.trajectory();
            let p0_max = traj.snapshots()[0].pressure().max();
            let cap = PRESSURE_CAP_MARGIN * p0_max.max(cfg.law().max_carrying_pressure());
            let attained = traj
                .snapshots()
                .iter()
                .map(|s| s.pressure().max())
                .fold(0.0_f64, f64::max);
            let ok = traj.clipped_cells() == 0 && attained <= cap;
            pass &= ok;
            detail.push_str(&format!(
                "k={k} nu={nu}: max_p {attained:.3} vs {cap:.3}, clips {}; ",
                traj.clipped_cells()
            ));
        }
    }
    verdict("04 positivity-pressure-cap", pass, detail.trim_end_matches("; "));
}

const NU_AXIS: [f64; 5] = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];

fn sweep_run(points: usize, n: usize, k: f64, nu: f64) -> Trajectory {
    let cfg = config(&format!(
        "[grid]\npoints = {points}\n[params]\nN = {n}\nk = {k}\nnu = {nu}\nT = 0.5\n[snapshots]\ncount = 17\n"
    ));
    execute(&cfg).unwrap().trajectory().clone()
}

#[test]
fn c05_inviscid_rate_sqrt_nu() {
    let points: Vec<(f64, f64)> = NU_AXIS
        .iter()
        .map(|&nu| (nu, w_minus_p_l2(&sweep_run(512, 8, 10.0, nu))))
        .collect();
    let fit = fit_rate(&points).unwrap();
    verdict(
        "05 inviscid-rate",
        fit.slope >= 0.45 && fit.r_squared >= 0.95,
        &format!(
            "||W - p|| ~ nu^{:.3}, r2 {:.4} over {:?}",
            fit.slope, fit.r_squared, NU_AXIS
        ),
    );
}

#[test]
fn c06_stiff_pressure_rate_one_over_k() {
    let ks = [10.0, 20.0, 40.0, 80.0];
    let mut points = Vec::new();
    for &k in &ks {
        let traj = sweep_run(512, 8, k, 1e-3);
        let psi = default_bump(&traj).unwrap();
        let value = pressure_excess_functional(&traj, &psi, 0.0).unwrap().abs();
        points.push((k, value));
    }
    let fit = fit_rate(&points).unwrap();
    verdict(
        "06 stiff-pressure-rate",
        fit.slope <= -0.8,
        &format!("|pressure excess| ~ k^{:.3} over {ks:?}", fit.slope),
    );
}

#[test]
fn c07_reconstruction_defect_rate_and_darcy_zero() {
    let mut values = Vec::new();
    for &nu in &NU_AXIS {
        let traj = sweep_run(512, 8, 20.0, nu);
        let phi = default_bump(&traj).unwrap();
        values.push((nu, reconstruction_defect(&traj, &phi).unwrap()));
    }
    let fit = fit_rate(&values).unwrap();
    // Decreasing in nu means increasing along the descending-nu ordering.
    let descending: Vec<f64> = values.iter().rev().map(|&(_, v)| v).collect();

    let darcy = sweep_run(128, 4, 20.0, 0.0);
    let phi = default_bump(&darcy).unwrap();
    let at_zero = reconstruction_defect(&darcy, &phi).unwrap();

    verdict(
        "07 reconstruction-defect-rate",
        strictly_decreasing(&descending) && fit.slope >= 0.15 && at_zero == 0.0,
        &format!(
            "defect ~ nu^{:.3}, strictly decreasing {}, nu=0 value {at_zero:e}",
            fit.slope,
            strictly_decreasing(&descending)
        ),
    );
}

#[test]
fn c08_trait_riemann_rate_and_closed_form() {
    let ns = [8usize, 16, 32, 64];
    let mut points = Vec::new();
    for &n in &ns {
        let traj = sweep_run(256, n, 10.0, 1e-2);
        let last = traj.final_snapshot();
        let gap = riemann_vs_integral(last.state(), traj.law(), last.pressure()).unwrap();
        points.push((n as f64, gap));
    }
    let fit = fit_rate(&points).unwrap();

    // Flat data under G = 1 + a - p at p = 0: the trait mean lands exactly
    // 1/(2N) above the integral, and dyadic N keeps the arithmetic exact.
    let grid = SpatialGrid::new(1, 16, 4.0).unwrap();
    let mut exact = true;
    for &n in &ns {
        let state = MultiState::homogeneous(grid, &vec![1.0; n]).unwrap();
        let gap = riemann_vs_integral(&state, &law_default(), &Field::zeros(grid)).unwrap();
        exact &= gap.to_bits() == (1.0 / (2.0 * n as f64)).to_bits();
    }

    verdict(
        "08 trait-riemann-rate",
        fit.slope <= -0.9 && exact,
        &format!("gap ~ N^{:.3} over {ns:?}, closed form exact {exact}", fit.slope),
    );
}

const ENERGY_DECREASE_FACTOR: f64 = 1.8;

#[test]
fn c09_energy_identity_refinement() {
    // Strictly positive smooth data: the balance is evaluated from snapshot
    // sums, so the run stays vacuum-free and snapshots dense (513) to keep
    // sampling error below the scheme error being measured.
    let pair = EntropyPair::dissipation_default(10.0).unwrap();
    let eta = TestFunction::time_ramp();
    let mut residuals = Vec::new();
    for (pts, max_dt) in [(128usize, 4e-4), (256, 2e-4), (512, 1e-4)] {
        let grid = SpatialGrid::new(1, pts, 10.0).unwrap();
        let set = PhenotypeSet::new(4).unwrap();
        let densities: Vec<Field> = set
            .traits()
            .iter()
            .map(|&a| {
                Field::from_fn(grid, |x| {
                    0.4 + 0.05 * (1.0 + 0.4 * (a - 0.625)) * (2.0 * PI * x[0] / 10.0).cos()
                })
                .unwrap()
            })
            .collect();
        let state = MultiState::new(set, densities, 0.0).unwrap();
        let params = SimParams::new(10.0, 1e-2, 0.5, 0.4, max_dt).unwrap();
        let times: Vec<f64> = (0..513).map(|j| 0.5 * j as f64 / 512.0).collect();
        let traj = run(&state, &params, &law_default(), &times).unwrap();
        residuals.push(energy_evolution_residual(&traj, &pair, &eta).unwrap());
    }
    let r01 = residuals[0] / residuals[1];
    let r12 = residuals[1] / residuals[2];

    let zero = MultiState::homogeneous(SpatialGrid::new(1, 64, 10.0).unwrap(), &[0.0, 0.0]).unwrap();
    let zparams = SimParams::new(10.0, 1e-2, 0.25, 0.4, 1e-2).unwrap();
    let ztraj = run(&zero, &zparams, &law_default(), &[0.0, 0.25]).unwrap();
    let zres = energy_evolution_residual(&ztraj, &pair, &eta).unwrap();

    verdict(
        "09 energy-identity-refinement",
        r01 >= ENERGY_DECREASE_FACTOR && r12 >= ENERGY_DECREASE_FACTOR && zres == 0.0,
        &format!(
            "residuals {} ratios {r01:.2}/{r12:.2}, zero state {zres:e}",
            fmt_sci(&residuals)
        ),
    );
}

const LIPSCHITZ_ZERO_TOL: f64 = 1e-12;

#[test]
fn c10_phenotype_lipschitz_bound() {
    // Traits 0.25 and 0.75 are slices 0 and 2 of the default 4-phenotype run.
    let out = execute(&config("")).unwrap();
    let report = phenotype_lipschitz_check(out.trajectory(), 0, 2).unwrap();

    let zero_cfg = config(
        "[params]\nT = 0.5\n[law]\ngamma1 = 0.0\n[initial]\ntrait_modulation = 0.0\n",
    );
    let zout = execute(&zero_cfg).unwrap();
    let zreport = phenotype_lipschitz_check(zout.trajectory(), 0, 2).unwrap();

    verdict(
        "10 phenotype-lipschitz",
        report.pass && report.trait_gap == 0.5 && zreport.d_max <= LIPSCHITZ_ZERO_TOL,
        &format!(
            "bound utilization {:.3} over gap {}, trait-blind distance {:.1e}",
            report.ratio, report.trait_gap, zreport.d_max
        ),
    );
}

#[test]
fn c11_joint_limit_self_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let base = config("[grid]\npoints = 256\n[params]\nT = 1.0\n[snapshots]\ncount = 17\n");
    let path = default_joint_path();
    let grid = SweepGrid::from_path(&base, &path).unwrap();
    let table = sweep(&grid, dir.path()).unwrap();
    assert!(table.rows().iter().all(|r| r.ok), "joint-path entry failed");

    let distances = self_convergence(&table, &path).unwrap();
    let mut complementarity = Vec::new();
    for &tuple in &path {
        let row = table.find(tuple).expect("path entry present");
        let record = table.diagnostics(row).unwrap();
        let series = record.get("complementarity_cum").expect("series present");
        complementarity.push(series.last().unwrap().abs());
    }

    verdict(
        "11 joint-limit-self-convergence",
        strictly_decreasing(&distances) && strictly_decreasing(&complementarity),
        &format!(
            "pressure distances {}, |complementarity| {}",
            fmt_sci(&distances),
            fmt_sci(&complementarity)
        ),
    );
}

#[test]
fn c12_persistence_round_trips() {
    let dir = tempfile::tempdir().unwrap();

    // PFLD: bitwise.
    let grid = SpatialGrid::new(1, 64, 7.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let field = Field::new(grid, (0..64).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap();
    let fpath = dir.path().join("field.pfld");
    phenoflow::io::write_snapshot(&field, &fpath).unwrap();
    let back = phenoflow::io::read_snapshot(&fpath).unwrap();
    let field_ok = back.grid() == grid
        && field
            .values()
            .iter()
            .zip(back.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());

    // Diagnostics CSV: value exact on a real record.
    let out = execute(&config(
        "[grid]\npoints = 64\n[params]\nT = 0.05\nN = 2\n[snapshots]\ncount = 3\n",
    ))
    .unwrap();
    let cpath = dir.path().join("diag.csv");
    phenoflow::io::write_diagnostics(out.record(), &cpath).unwrap();
    let rec = phenoflow::io::read_diagnostics(&cpath).unwrap();
    let mut csv_ok = rec.times() == out.record().times();
    for (name, values) in out.record().series() {
        match rec.get(name) {
            Some(b) => {
                csv_ok &= values.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            None => csv_ok = false,
        }
    }

    // Sweep rerun from scratch: bytewise-identical tree.
    let base = config("[grid]\npoints = 64\n[params]\nT = 0.05\nN = 2\n[snapshots]\ncount = 3\n");
    let axes = SweepAxes {
        phenotypes: vec![2],
        stiffness: vec![10.0, 12.0],
        viscosity: vec![1e-2],
    };
    let sgrid = SweepGrid::new(&base, &axes).unwrap();
    let (dir_a, dir_b) = (dir.path().join("a"), dir.path().join("b"));
    sweep(&sgrid, &dir_a).unwrap();
    let table = sweep(&sgrid, &dir_b).unwrap();
    let mut sweep_ok = std::fs::read(dir_a.join("manifest")).unwrap()
        == std::fs::read(dir_b.join("manifest")).unwrap();
    for row in table.rows() {
        for name in ["config", "diagnostics.csv", "p_final.pfld", "status"] {
            let entry = format!("entry-{}", row.hash);
            sweep_ok &= std::fs::read(dir_a.join(&entry).join(name)).unwrap()
                == std::fs::read(dir_b.join(&entry).join(name)).unwrap();
        }
    }

    verdict(
        "12 persistence-round-trips",
        field_ok && csv_ok && sweep_ok,
        &format!("pfld bitwise {field_ok}, csv values {csv_ok}, sweep rerun {sweep_ok}"),
    );
}
