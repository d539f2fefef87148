//! Trajectory functionals: a priori bound checks, dissipation identities,
//! and the integral quantities whose decay rates the limit sweeps measure.
//!
//! Space integrals are exact cell sums; time integrals are trapezoidal over
//! the snapshot grid. Rate checks downstream compare these numbers as
//! ratios, so consistent low-order quadrature is enough.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::model::{fractions, mean_density, EntropyPair, GrowthLaw, MultiState};
use crate::dynamics::Trajectory;
use crate::spectral::SpectralPlan;

/// Trapezoid rule over possibly nonuniform sample times.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    let mut acc = 0.0;
    for j in 1..times.len() {
        acc += 0.5 * (values[j] + values[j - 1]) * (times[j] - times[j - 1]);
    }
    acc
}

/// Partial trapezoid integrals aligned to the sample times (first entry 0).
pub fn trapezoid_cumulative(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for j in 0..times.len() {
        if j > 0 {
            acc += 0.5 * (values[j] + values[j - 1]) * (times[j] - times[j - 1]);
        }
        out.push(acc);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunctionKind {
    /// phi(x) chi(t): cubic spatial bump (1 - r^2/R^2)^3 under a C^2 time
    /// window.
    SpaceTimeBump,
    /// eta(t) = t, constant in space.
    TimeRamp,
    /// Smoothed ball indicator: plateau 1 inside the inner radius, C^2
    /// falloff to 0 at the outer radius, same time window as the bump.
    IndicatorSmooth,
}

/// Nonnegative space-time weight with values in [0, 1] for the bump kinds;
/// their support sits strictly inside the box and strictly inside (0, T).
#[derive(Clone, Debug)]
pub struct TestFunction {
    kind: TestFunctionKind,
    center: Vec<f64>,
    inner_radius: f64,
    radius: f64,
    window: (f64, f64),
}

fn check_window(window: (f64, f64), t_final: f64) -> Result<()> {
    if !(window.0 > 0.0 && window.0 < window.1 && window.1 < t_final) {
        return Err(Error::InvalidParameter(format!(
            "time window [{}, {}] must sit strictly inside (0, {t_final})",
            window.0, window.1
        )));
    }
    Ok(())
}

fn check_support(center: &[f64], radius: f64, box_length: f64) -> Result<()> {
    if center.is_empty() || center.len() > 2 || center.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("bad test-function center".into()));
    }
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "test-function radius must be positive, got {radius}"
        )));
    }
    for c in center {
        if c.abs() + radius >= box_length / 2.0 {
            return Err(Error::InvalidParameter(
                "test-function support reaches the box boundary".into(),
            ));
        }
    }
    Ok(())
}

/// C^2 window on [0, 1], peak value 1 at the midpoint.
fn time_window_profile(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        let b = 4.0 * s * (1.0 - s);
        b * b * b
    }
}

/// Smootherstep: C^2 monotone ramp from 0 to 1 on [0, 1].
fn smootherstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

fn smootherstep_deriv(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        0.0
    } else {
        30.0 * u * u * (1.0 - u) * (1.0 - u)
    }
}

impl TestFunction {
    pub fn bump(
        center: &[f64],
        radius: f64,
        window: (f64, f64),
        box_length: f64,
        t_final: f64,
    ) -> Result<Self> {
        check_support(center, radius, box_length)?;
        check_window(window, t_final)?;
        Ok(Self {
            kind: TestFunctionKind::SpaceTimeBump,
            center: center.to_vec(),
            inner_radius: 0.0,
            radius,
            window,
        })
    }

    pub fn smooth_indicator(
        center: &[f64],
        inner_radius: f64,
        outer_radius: f64,
        window: (f64, f64),
        box_length: f64,
        t_final: f64,
    ) -> Result<Self> {
        check_support(center, outer_radius, box_length)?;
        check_window(window, t_final)?;
        if !(inner_radius > 0.0 && inner_radius < outer_radius) {
            return Err(Error::InvalidParameter(
                "indicator needs 0 < inner radius < outer radius".into(),
            ));
        }
        Ok(Self {
            kind: TestFunctionKind::IndicatorSmooth,
            center: center.to_vec(),
            inner_radius,
            radius: outer_radius,
            window,
        })
    }

    pub fn time_ramp() -> Self {
        Self {
            kind: TestFunctionKind::TimeRamp,
            center: Vec::new(),
            inner_radius: 0.0,
            radius: 0.0,
            window: (0.0, f64::INFINITY),
        }
    }

    pub fn kind(&self) -> TestFunctionKind {
        self.kind
    }

    /// Scalar time factor: the window profile for bump kinds, t itself for
    /// the ramp.
    pub fn time_value(&self, t: f64) -> f64 {
        match self.kind {
            TestFunctionKind::TimeRamp => t,
            _ => {
                let (t0, t1) = self.window;
                time_window_profile((t - t0) / (t1 - t0))
            }
        }
    }

    pub fn time_derivative(&self, t: f64) -> f64 {
        match self.kind {
            TestFunctionKind::TimeRamp => 1.0,
            _ => {
                // Bump kinds are never differentiated in time by the
                // functionals; finite difference would do if they were.
                let (t0, t1) = self.window;
                let s = (t - t0) / (t1 - t0);
                if s <= 0.0 || s >= 1.0 {
                    0.0
                } else {
                    let b = 4.0 * s * (1.0 - s);
                    3.0 * b * b * 4.0 * (1.0 - 2.0 * s) / (t1 - t0)
                }
            }
        }
    }

    fn spatial_value(&self, grid: SpatialGrid, x: &[f64]) -> f64 {
        match self.kind {
            TestFunctionKind::TimeRamp => 1.0,
            TestFunctionKind::SpaceTimeBump => {
                let s = self.scaled_r2(grid, x);
                if s >= 1.0 {
                    0.0
                } else {
                    let q = 1.0 - s;
                    q * q * q
                }
            }
            TestFunctionKind::IndicatorSmooth => {
                let r = self.distance(grid, x);
                if r <= self.inner_radius {
                    1.0
                } else if r >= self.radius {
                    0.0
                } else {
                    smootherstep((self.radius - r) / (self.radius - self.inner_radius))
                }
            }
        }
    }

    fn distance(&self, grid: SpatialGrid, x: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for (xa, ca) in x.iter().zip(&self.center) {
            let d = grid.wrap(*xa, *ca);
            r2 += d * d;
        }
        r2.sqrt()
    }

    fn scaled_r2(&self, grid: SpatialGrid, x: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for (xa, ca) in x.iter().zip(&self.center) {
            let d = grid.wrap(*xa, *ca);
            r2 += d * d;
        }
        r2 / (self.radius * self.radius)
    }

    /// psi(x, t) sampled on the grid.
    pub fn weight_field(&self, grid: SpatialGrid, t: f64) -> Field {
        let tv = self.time_value(t);
        let values = (0..grid.cells())
            .map(|c| {
                let x = grid.cell_center(c);
                tv * self.spatial_value(grid, &x[..grid.dim()])
            })
            .collect();
        Field::from_values_unchecked(grid, values)
    }

    /// Spatial gradient of psi(., t), one component per axis.
    pub fn weight_gradient(&self, grid: SpatialGrid, t: f64) -> Vec<Field> {
        let tv = self.time_value(t);
        let dim = grid.dim();
        let mut comps = vec![vec![0.0; grid.cells()]; dim];
        for c in 0..grid.cells() {
            let x = grid.cell_center(c);
            match self.kind {
                TestFunctionKind::TimeRamp => {}
                TestFunctionKind::SpaceTimeBump => {
                    let s = self.scaled_r2(grid, &x[..dim]);
                    if s < 1.0 {
                        let q = 1.0 - s;
                        for (axis, comp) in comps.iter_mut().enumerate() {
                            let d = grid.wrap(x[axis], self.center[axis]);
                            comp[c] = tv * (-6.0) * q * q * d / (self.radius * self.radius);
                        }
                    }
                }
                TestFunctionKind::IndicatorSmooth => {
                    let r = self.distance(grid, &x[..dim]);
                    if r > self.inner_radius && r < self.radius {
                        let shell = self.radius - self.inner_radius;
                        let u = (self.radius - r) / shell;
                        let dpsi_dr = -smootherstep_deriv(u) / shell;
                        for (axis, comp) in comps.iter_mut().enumerate() {
                            let d = grid.wrap(x[axis], self.center[axis]);
                            comp[c] = tv * dpsi_dr * d / r;
                        }
                    }
                }
            }
        }
        comps
            .into_iter()
            .map(|v| Field::from_values_unchecked(grid, v))
            .collect()
    }
}

/// The standard weight: C^2 bump of radius L/4 at the initial mass
/// centroid, active on the middle half of the time span.
pub fn default_bump(traj: &Trajectory) -> Result<TestFunction> {
    let grid = traj.grid();
    let t_final = traj.final_snapshot().time();
    if t_final <= 0.0 {
        return Err(Error::InvalidInput(
            "default weight needs a positive time span".into(),
        ));
    }
    let nbar0 = mean_density(traj.snapshots()[0].state());
    let center = nbar0.centroid();
    TestFunction::bump(
        &center[..grid.dim()],
        grid.box_length() / 4.0,
        (t_final / 4.0, 3.0 * t_final / 4.0),
        grid.box_length(),
        t_final,
    )
}

fn l2_sq(grid: SpatialGrid, components: &[Field]) -> f64 {
    let mut acc = 0.0;
    for f in components {
        for v in f.values() {
            acc += v * v;
        }
    }
    acc * grid.cell_measure()
}

/// Per-cell mixture sum F_i G(p, a_i).
fn growth_mix(state: &MultiState, law: &GrowthLaw, p: &Field) -> Vec<f64> {
    let fracs = fractions(state);
    let traits = state.phenotypes().traits();
    let mut out = vec![0.0; state.grid().cells()];
    for (i, f) in fracs.iter().enumerate() {
        for (c, o) in out.iter_mut().enumerate() {
            *o += f.values()[c] * law.eval_raw(p.values()[c], traits[i]);
        }
    }
    out
}

/// Per-cell growth density (1/N) sum n_i G(p, a_i), the discrete form of
/// the trait integral of n G.
fn growth_density(state: &MultiState, law: &GrowthLaw, p: &Field) -> Vec<f64> {
    let traits = state.phenotypes().traits();
    let inv_n = 1.0 / state.count() as f64;
    let mut out = vec![0.0; state.grid().cells()];
    for (i, d) in state.densities().iter().enumerate() {
        for (c, o) in out.iter_mut().enumerate() {
            *o += inv_n * d.values()[c] * law.eval_raw(p.values()[c], traits[i]);
        }
    }
    out
}

/// Space-time L2 distance between potential and pressure:
/// (iint (W - p)^2 dx dt)^(1/2). Identically zero on the nu = 0 branch,
/// where the potential is a bitwise copy of the pressure.
pub fn w_minus_p_l2(traj: &Trajectory) -> f64 {
    let grid = traj.grid();
    let per_snap: Vec<f64> = traj
        .snapshots()
        .iter()
        .map(|s| {
            let mut acc = 0.0;
            for (w, p) in s.potential().values().iter().zip(s.pressure().values()) {
                let d = w - p;
                acc += d * d;
            }
            acc * grid.cell_measure()
        })
        .collect();
    let times: Vec<f64> = traj.snapshots().iter().map(|s| s.time()).collect();
    trapezoid(&times, &per_snap).max(0.0).sqrt()
}

/// (iint |grad W|^2 dx dt)^(1/2); the sweeps check this admits a bound
/// uniform in N, k, and nu.
pub fn grad_w_l2(traj: &Trajectory) -> Result<f64> {
    let grid = traj.grid();
    let plan = SpectralPlan::new(grid);
    let mut per_snap = Vec::with_capacity(traj.snapshots().len());
    for s in traj.snapshots() {
        let grad = plan.gradient(s.potential())?;
        per_snap.push(l2_sq(grid, &grad));
    }
    let times: Vec<f64> = traj.snapshots().iter().map(|s| s.time()).collect();
    Ok(trapezoid(&times, &per_snap).max(0.0).sqrt())
}

/// iint psi (p - V)_+ (Lap W + sum_i F_i G_i) dx dt. Exactly zero whenever
/// V dominates the pressure; decays like 1/k across stiffness sweeps.
pub fn pressure_excess_functional(traj: &Trajectory, psi: &TestFunction, v: f64) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold must be nonnegative, got {v}"
        )));
    }
    let grid = traj.grid();
    let plan = SpectralPlan::new(grid);
    let mut per_snap = Vec::with_capacity(traj.snapshots().len());
    for s in traj.snapshots() {
        let lap_w = plan.laplacian(s.potential())?;
        let mix = growth_mix(s.state(), traj.law(), s.pressure());
        let weight = psi.weight_field(grid, s.time());
        let mut acc = 0.0;
        for c in 0..grid.cells() {
            let excess = (s.pressure().values()[c] - v).max(0.0);
            if excess > 0.0 {
                acc += weight.values()[c] * excess * (lap_w.values()[c] + mix[c]);
            }
        }
        per_snap.push(acc * grid.cell_measure());
    }
    let times: Vec<f64> = traj.snapshots().iter().map(|s| s.time()).collect();
    Ok(trapezoid(&times, &per_snap))
}

/// iint phi |nbar - ((k-1) W / k)^(1/(k-1))| |grad W| dx dt, evaluated as
/// c_k |p^(1/(k-1)) - W^(1/(k-1))| |grad W| with c_k = ((k-1)/k)^(1/(k-1)),
/// which is the same quantity under the pressure law but hits exact zero
/// on the nu = 0 branch where W and p agree bitwise.
pub fn reconstruction_defect(traj: &Trajectory, phi: &TestFunction) -> Result<f64> {
    let grid = traj.grid();
    let plan = SpectralPlan::new(grid);
    let k = traj.params().stiffness();
    let inv_km1 = 1.0 / (k - 1.0);
    let c_k = ((k - 1.0) / k).powf(inv_km1);
    let mut per_snap = Vec::with_capacity(traj.snapshots().len());
    for s in traj.snapshots() {
        let grad = plan.gradient(s.potential())?;
        let weight = phi.weight_field(grid, s.time());
        let mut acc = 0.0;
        for c in 0..grid.cells() {
            let wv = weight.values()[c];
            if wv == 0.0 {
                continue;
            }
            let p_root = s.pressure().values()[c].powf(inv_km1);
            let w_root = s.potential().values()[c].max(0.0).powf(inv_km1);
            let mut g2 = 0.0;
            for comp in &grad {
                g2 += comp.values()[c] * comp.values()[c];
            }
            acc += wv * c_k * (p_root - w_root).abs() * g2.sqrt();
        }
        per_snap.push(acc * grid.cell_measure());
    }
    let times: Vec<f64> = traj.snapshots().iter().map(|s| s.time()).collect();
    Ok(trapezoid(&times, &per_snap))
}

/// iint psi p (Lap p + (1/N) sum_i n_i G_i) dx dt with the Laplacian taken
/// weakly: the p Lap p psi part becomes -iint psi |grad p_s|^2 - iint p
/// grad psi . grad p_s, where p_s mollifies p with a Gaussian of width 2h
/// before the spectral derivative touches it.
pub fn complementarity_residual(traj: &Trajectory, psi: &TestFunction) -> Result<f64> {
    let grid = traj.grid();
    let plan = SpectralPlan::new(grid);
    let sigma = 2.0 * grid.spacing();
    let mut per_snap = Vec::with_capacity(traj.snapshots().len());
    for s in traj.snapshots() {
        let p_smooth = plan.smooth(s.pressure(), sigma)?;
        let grad_ps = plan.gradient(&p_smooth)?;
        let gden = growth_density(s.state(), traj.law(), s.pressure());
        let weight = psi.weight_field(grid, s.time());
        let weight_grad = psi.weight_gradient(grid, s.time());
        let mut acc = 0.0;
        for c in 0..grid.cells() {
            let p = s.pressure().values()[c];
            let mut gp2 = 0.0;
            let mut cross = 0.0;
            for (gps, wg) in grad_ps.iter().zip(&weight_grad) {
                gp2 += gps.values()[c] * gps.values()[c];
                cross += wg.values()[c] * gps.values()[c];
            }
            acc += -weight.values()[c] * gp2 - p * cross + weight.values()[c] * p * gden[c];
        }
        per_snap.push(acc * grid.cell_measure());
    }
    let times: Vec<f64> = traj.snapshots().iter().map(|s| s.time()).collect();
    Ok(trapezoid(&times, &per_snap))
}

/// |LHS - RHS| of the weighted entropy balance with time weight eta:
/// LHS = eta(T) int e(nbar(T)) - eta(0) int e(nbar(0)) - iint eta' e(nbar);
/// RHS = iint [eta (z'(p) - z'(W)) Lap W - z''(W) eta |grad W|^2
///             + eta (e(nbar) + z'(p)) sum_i F_i G_i(p)].
pub fn energy_evolution_residual(
    traj: &Trajectory,
    pair: &EntropyPair,
    eta: &TestFunction,
) -> Result<f64> {
    if eta.kind() != TestFunctionKind::TimeRamp {
        return Err(Error::InvalidInput(
            "the entropy balance takes a time-ramp weight".into(),
        ));
    }
    let grid = traj.grid();
    let plan = SpectralPlan::new(grid);
    let snaps = traj.snapshots();
    let times: Vec<f64> = snaps.iter().map(|s| s.time()).collect();

    let mut entropy_total = Vec::with_capacity(snaps.len());
    let mut lhs_integrand = Vec::with_capacity(snaps.len());
    let mut rhs_integrand = Vec::with_capacity(snaps.len());
    for s in snaps {
        let nbar = mean_density(s.state());
        let e_total: f64 =
            nbar.values().iter().map(|&n| pair.e(n)).sum::<f64>() * grid.cell_measure();
        entropy_total.push(e_total);
        lhs_integrand.push(eta.time_derivative(s.time()) * e_total);

        let lap_w = plan.laplacian(s.potential())?;
        let grad_w = plan.gradient(s.potential())?;
        let mix = growth_mix(s.state(), traj.law(), s.pressure());
        let etav = eta.time_value(s.time());
        let mut acc = 0.0;
        for c in 0..grid.cells() {
            let p = s.pressure().values()[c];
            let w = s.potential().values()[c];
            let mut gw2 = 0.0;
            for comp in &grad_w {
                gw2 += comp.values()[c] * comp.values()[c];
            }
            acc += etav * (pair.z_prime(p) - pair.z_prime(w)) * lap_w.values()[c]
                - pair.z_double_prime(w) * etav * gw2
                + etav * (pair.e(nbar.values()[c]) + pair.z_prime(p)) * mix[c];
        }
        rhs_integrand.push(acc * grid.cell_measure());
    }

    let t_final = *times.last().expect("nonempty trajectory");
    let lhs = eta.time_value(t_final) * entropy_total[entropy_total.len() - 1]
        - eta.time_value(times[0]) * entropy_total[0]
        - trapezoid(&times, &lhs_integrand);
    let rhs = trapezoid(&times, &rhs_integrand);
    Ok((lhs - rhs).abs())
}

/// Outcome of the one a priori check suite a run must pass.
#[derive(Clone, Debug)]
pub struct AprioriCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Worst attained value across snapshots.
    pub attained: f64,
    /// The bound at the worst snapshot.
    pub bound: f64,
    /// Worst utilization attained/bound; 0 when nothing attained, so the
    /// zero state passes with zero margins.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct AprioriReport {
    pub checks: Vec<AprioriCheck>,
    pub pass: bool,
}

fn utilization(attained: f64, bound: f64) -> f64 {
    if attained == 0.0 {
        0.0
    } else if bound == 0.0 {
        f64::INFINITY
    } else {
        attained / bound
    }
}

/// Measures the three a priori estimates on a trajectory: the mass bound
/// mass(t) <= mass(0) e^(Gmax t) (1 + 1e-6), the 5 percent pressure cap,
/// and the first-moment bound
/// (||nbar0||_L1 + ||nbar||_inf ||grad W||_L2(QT)) e^(Gmax t).
pub fn verify_apriori(traj: &Trajectory) -> AprioriReport {
    let law = traj.law();
    let g_max = law.sup_range(1.1 * law.max_carrying_pressure());
    let snaps = traj.snapshots();

    let nbar: Vec<Field> = snaps.iter().map(|s| mean_density(s.state())).collect();
    let mass0 = nbar[0].mass();

    let mut mass_worst = (0.0, 0.0, 0.0);
    for (s, nb) in snaps.iter().zip(&nbar) {
        let bound = mass0 * (g_max * s.time()).exp() * (1.0 + 1e-6);
        let u = utilization(nb.mass(), bound);
        if u >= mass_worst.2 {
            mass_worst = (nb.mass(), bound, u);
        }
    }
    let mass_check = AprioriCheck {
        name: "mass-growth",
        pass: mass_worst.2 <= 1.0,
        attained: mass_worst.0,
        bound: mass_worst.1,
        margin: mass_worst.2,
    };

    let p0_max = snaps[0].pressure().max();
    let p_cap = 1.05 * p0_max.max(law.max_carrying_pressure());
    let p_attained = snaps
        .iter()
        .map(|s| s.pressure().max())
        .fold(0.0_f64, f64::max);
    let p_util = utilization(p_attained.max(0.0), p_cap);
    let pressure_check = AprioriCheck {
        name: "pressure-cap",
        pass: p_util <= 1.0,
        attained: p_attained,
        bound: p_cap,
        margin: p_util,
    };

    let nbar_sup = nbar.iter().map(Field::max).fold(0.0_f64, f64::max);
    let grad_w = grad_w_l2(traj).unwrap_or(f64::NAN);
    let moment_base = nbar[0].norm_l1() + nbar_sup * grad_w;
    let mut moment_worst = (0.0, 0.0, 0.0);
    for (s, nb) in snaps.iter().zip(&nbar) {
        let bound = moment_base * (g_max * s.time()).exp();
        let u = utilization(nb.first_moment(), bound);
        if u >= moment_worst.2 {
            moment_worst = (nb.first_moment(), bound, u);
        }
    }
    let moment_check = AprioriCheck {
        name: "first-moment",
        pass: moment_worst.2 <= 1.0 && moment_worst.2.is_finite(),
        attained: moment_worst.0,
        bound: moment_worst.1,
        margin: moment_worst.2,
    };

    let pass = mass_check.pass && pressure_check.pass && moment_check.pass;
    AprioriReport {
        checks: vec![mass_check, pressure_check, moment_check],
        pass,
    }
}

#[derive(Clone, Debug)]
pub struct LipschitzReport {
    pub pass: bool,
    /// Worst d(t) / bound over snapshots; 0 when both sides vanish.
    pub ratio: f64,
    pub c1: f64,
    pub c2: f64,
    pub d_initial: f64,
    pub d_max: f64,
    pub trait_gap: f64,
}

/// Trait-Lipschitz estimate between two phenotype slices of one run:
/// d(t) = int |n(., t, a) - n(., t, b)| dx stays below C1 d(0) + C2 |a-b|
/// with C1 = e^(Gmax T) and C2 = (||n_a||_L1 |dG/da| / Gmax)(e^(Gmax T)-1),
/// all factors measured from the trajectory.
pub fn phenotype_lipschitz_check(
    traj: &Trajectory,
    slice_a: usize,
    slice_b: usize,
) -> Result<LipschitzReport> {
    let snaps = traj.snapshots();
    let count = snaps[0].state().count();
    if slice_a >= count || slice_b >= count {
        return Err(Error::InvalidInput(format!(
            "phenotype slices {slice_a}, {slice_b} out of range for {count} phenotypes"
        )));
    }
    let law = traj.law();
    let traits = snaps[0].state().phenotypes().traits();
    let trait_gap = (traits[slice_a] - traits[slice_b]).abs();
    let t_final = snaps.last().expect("nonempty").time();

    let p_measured = snaps
        .iter()
        .map(|s| s.pressure().max())
        .fold(0.0_f64, f64::max);
    let g_max = law.sup_range(p_measured.max(1.1 * law.max_carrying_pressure()));
    let ga_max = law.trait_slope_bound();
    let n_a_l1 = snaps
        .iter()
        .map(|s| s.state().density(slice_a).norm_l1())
        .fold(0.0_f64, f64::max);

    let c1 = (g_max * t_final).exp();
    let c2 = if g_max > 0.0 {
        n_a_l1 * ga_max / g_max * ((g_max * t_final).exp() - 1.0)
    } else {
        n_a_l1 * ga_max * t_final
    };

    let d: Vec<f64> = snaps
        .iter()
        .map(|s| {
            let grid = s.state().grid();
            let mut acc = 0.0;
            for (a, b) in s
                .state()
                .density(slice_a)
                .values()
                .iter()
                .zip(s.state().density(slice_b).values())
            {
                acc += (a - b).abs();
            }
            acc * grid.cell_measure()
        })
        .collect();
    let d_initial = d[0];
    let d_max = d.iter().fold(0.0_f64, |m, &v| m.max(v));
    let bound = c1 * d_initial + c2 * trait_gap;
    let (ratio, pass) = if bound > 0.0 {
        (d_max / bound, d_max / bound <= 1.0)
    } else {
        (0.0, d_max <= 1e-12)
    };
    Ok(LipschitzReport {
        pass,
        ratio,
        c1,
        c2,
        d_initial,
        d_max,
        trait_gap,
    })
}

/// RMS-over-cells gap between the discrete growth mean (1/N) sum n_i G_i
/// and the trait integral of the piecewise-linear interpolant against G,
/// the latter by composite Simpson on 16N aligned subintervals.
pub fn riemann_vs_integral(state: &MultiState, law: &GrowthLaw, p: &Field) -> Result<f64> {
    if p.grid() != state.grid() {
        return Err(Error::InvalidInput(
            "pressure grid differs from the state grid".into(),
        ));
    }
    let grid = state.grid();
    let count = state.count();
    let traits = state.phenotypes().traits();
    let subintervals = 16 * count;

    // Piecewise-linear in the trait with flat extension below the first
    // node a_1 = 1/N.
    let interp = |c: usize, a: f64| -> f64 {
        let pos = a * count as f64 - 1.0;
        if pos <= 0.0 {
            state.density(0).values()[c]
        } else if pos >= (count - 1) as f64 {
            state.density(count - 1).values()[c]
        } else {
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            state.density(j).values()[c] * (1.0 - frac)
                + state.density(j + 1).values()[c] * frac
        }
    };

    let mut sum_sq = 0.0;
    for c in 0..grid.cells() {
        let pc = p.values()[c];
        let mut riemann = 0.0;
        for (i, a) in traits.iter().enumerate() {
            riemann += state.density(i).values()[c] * law.eval_raw(pc, *a);
        }
        riemann /= count as f64;

        let da = 1.0 / subintervals as f64;
        let mut integral = 0.0;
        for s in 0..subintervals {
            let a0 = s as f64 * da;
            let am = a0 + 0.5 * da;
            let a1 = a0 + da;
            let f0 = interp(c, a0) * law.eval_raw(pc, a0);
            let fm = interp(c, am) * law.eval_raw(pc, am);
            let f1 = interp(c, a1) * law.eval_raw(pc, a1);
            integral += da / 6.0 * (f0 + 4.0 * fm + f1);
        }
        let diff = riemann - integral;
        sum_sq += diff * diff;
    }
    Ok((sum_sq / grid.cells() as f64).sqrt())
}

/// Named per-snapshot series for one run, aligned to snapshot times.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    run_id: String,
    times: Vec<f64>,
    series: BTreeMap<String, Vec<f64>>,
}

impl DiagnosticsRecord {
    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn series(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.series
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series.get(name).map(Vec::as_slice)
    }

    pub(crate) fn from_parts(
        run_id: String,
        times: Vec<f64>,
        series: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        for (name, values) in &series {
            if values.len() != times.len() {
                return Err(Error::InvalidInput(format!(
                    "series {name} has {} entries for {} times",
                    values.len(),
                    times.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "series {name} contains nonfinite values"
                )));
            }
        }
        Ok(Self {
            run_id,
            times,
            series,
        })
    }
}

/// Evaluate the full diagnostic set on a trajectory. Space-time
/// functionals appear as cumulative partial integrals so the final entry
/// of each series equals the corresponding scalar functional; the weight
/// for the weighted ones is the default bump (skipped on zero-length time
/// spans, where those integrals are identically zero anyway).
pub fn compute_record(traj: &Trajectory, run_id: &str) -> Result<DiagnosticsRecord> {
    let grid = traj.grid();
    let plan = SpectralPlan::new(grid);
    let snaps = traj.snapshots();
    let times: Vec<f64> = snaps.iter().map(|s| s.time()).collect();
    let count = snaps[0].state().count();
    let law = traj.law();
    let k = traj.params().stiffness();
    let t_final = *times.last().expect("nonempty");

    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut push = |name: String, values: Vec<f64>| {
        series.insert(name, values);
    };

    for i in 0..count {
        let masses = snaps
            .iter()
            .map(|s| s.state().density(i).mass())
            .collect();
        push(format!("mass_phenotype_{:02}", i + 1), masses);
    }

    let nbar: Vec<Field> = snaps.iter().map(|s| mean_density(s.state())).collect();
    push("nbar_linf".into(), nbar.iter().map(Field::norm_linf).collect());
    push("nbar_l1".into(), nbar.iter().map(Field::norm_l1).collect());
    push("nbar_l2".into(), nbar.iter().map(Field::norm_l2).collect());
    push(
        "p_linf".into(),
        snaps.iter().map(|s| s.pressure().norm_linf()).collect(),
    );
    push(
        "p_l1".into(),
        snaps.iter().map(|s| s.pressure().norm_l1()).collect(),
    );
    push(
        "p_l2".into(),
        snaps.iter().map(|s| s.pressure().norm_l2()).collect(),
    );
    push(
        "w_linf".into(),
        snaps.iter().map(|s| s.potential().norm_linf()).collect(),
    );
    push(
        "w_l1".into(),
        snaps.iter().map(|s| s.potential().norm_l1()).collect(),
    );
    push(
        "w_l2".into(),
        snaps.iter().map(|s| s.potential().norm_l2()).collect(),
    );
    push(
        "first_moment".into(),
        nbar.iter().map(Field::first_moment).collect(),
    );

    let mut grad_sq = Vec::with_capacity(snaps.len());
    let mut wp_sq = Vec::with_capacity(snaps.len());
    for s in snaps {
        let grad = plan.gradient(s.potential())?;
        grad_sq.push(l2_sq(grid, &grad));
        let mut acc = 0.0;
        for (w, p) in s.potential().values().iter().zip(s.pressure().values()) {
            let d = w - p;
            acc += d * d;
        }
        wp_sq.push(acc * grid.cell_measure());
    }
    push(
        "grad_w_l2_sq_cum".into(),
        trapezoid_cumulative(&times, &grad_sq),
    );
    push(
        "w_minus_p_l2_sq_cum".into(),
        trapezoid_cumulative(&times, &wp_sq),
    );

    if t_final > 0.0 {
        let psi = default_bump(traj)?;
        let mut excess = Vec::with_capacity(snaps.len());
        let mut defect = Vec::with_capacity(snaps.len());
        let mut compl = Vec::with_capacity(snaps.len());
        let inv_km1 = 1.0 / (k - 1.0);
        let c_k = ((k - 1.0) / k).powf(inv_km1);
        let sigma = 2.0 * grid.spacing();
        for s in snaps {
            let weight = psi.weight_field(grid, s.time());
            let weight_grad = psi.weight_gradient(grid, s.time());
            let lap_w = plan.laplacian(s.potential())?;
            let grad_w = plan.gradient(s.potential())?;
            let mix = growth_mix(s.state(), law, s.pressure());
            let gden = growth_density(s.state(), law, s.pressure());
            let p_smooth = plan.smooth(s.pressure(), sigma)?;
            let grad_ps = plan.gradient(&p_smooth)?;

            let mut acc_excess = 0.0;
            let mut acc_defect = 0.0;
            let mut acc_compl = 0.0;
            for c in 0..grid.cells() {
                let wv = weight.values()[c];
                let p = s.pressure().values()[c];
                let w = s.potential().values()[c];
                acc_excess += wv * p.max(0.0) * (lap_w.values()[c] + mix[c]);
                let mut gw2 = 0.0;
                for comp in &grad_w {
                    gw2 += comp.values()[c] * comp.values()[c];
                }
                if wv != 0.0 {
                    acc_defect += wv
                        * c_k
                        * (p.powf(inv_km1) - w.max(0.0).powf(inv_km1)).abs()
                        * gw2.sqrt();
                }
                let mut gp2 = 0.0;
                let mut cross = 0.0;
                for (gps, wg) in grad_ps.iter().zip(&weight_grad) {
                    gp2 += gps.values()[c] * gps.values()[c];
                    cross += wg.values()[c] * gps.values()[c];
                }
                acc_compl += -wv * gp2 - p * cross + wv * p * gden[c];
            }
            excess.push(acc_excess * grid.cell_measure());
            defect.push(acc_defect * grid.cell_measure());
            compl.push(acc_compl * grid.cell_measure());
        }
        push(
            "pressure_excess_cum".into(),
            trapezoid_cumulative(&times, &excess),
        );
        push(
            "reconstruction_defect_cum".into(),
            trapezoid_cumulative(&times, &defect),
        );
        push(
            "complementarity_cum".into(),
            trapezoid_cumulative(&times, &compl),
        );
    } else {
        push("pressure_excess_cum".into(), vec![0.0; snaps.len()]);
        push("reconstruction_defect_cum".into(), vec![0.0; snaps.len()]);
        push("complementarity_cum".into(), vec![0.0; snaps.len()]);
    }

    // Entropy balance residual on each truncated [0, t_j], built
    // incrementally from the same trapezoid partial sums.
    let pair = EntropyPair::dissipation_default(k)?;
    let eta = TestFunction::time_ramp();
    let mut entropy_total = Vec::with_capacity(snaps.len());
    let mut rhs_integrand = Vec::with_capacity(snaps.len());
    for s in snaps {
        let nb = mean_density(s.state());
        entropy_total
            .push(nb.values().iter().map(|&n| pair.e(n)).sum::<f64>() * grid.cell_measure());
        let lap_w = plan.laplacian(s.potential())?;
        let grad_w = plan.gradient(s.potential())?;
        let mix = growth_mix(s.state(), law, s.pressure());
        let etav = eta.time_value(s.time());
        let mut acc = 0.0;
        for c in 0..grid.cells() {
            let p = s.pressure().values()[c];
            let w = s.potential().values()[c];
            let mut gw2 = 0.0;
            for comp in &grad_w {
                gw2 += comp.values()[c] * comp.values()[c];
            }
            acc += etav * (pair.z_prime(p) - pair.z_prime(w)) * lap_w.values()[c]
                - pair.z_double_prime(w) * etav * gw2
                + etav * (pair.e(nb.values()[c]) + pair.z_prime(p)) * mix[c];
        }
        rhs_integrand.push(acc * grid.cell_measure());
    }
    let lhs_cum = trapezoid_cumulative(&times, &entropy_total);
    let rhs_cum = trapezoid_cumulative(&times, &rhs_integrand);
    let energy_series: Vec<f64> = (0..snaps.len())
        .map(|j| {
            let lhs = eta.time_value(times[j]) * entropy_total[j]
                - eta.time_value(times[0]) * entropy_total[0]
                - lhs_cum[j];
            (lhs - rhs_cum[j]).abs()
        })
        .collect();
    push("energy_residual_cum".into(), energy_series);

    let mut riemann = Vec::with_capacity(snaps.len());
    for s in snaps {
        riemann.push(riemann_vs_integral(s.state(), law, s.pressure())?);
    }
    push("riemann_gap".into(), riemann);

    let lip = if count >= 2 {
        let report = phenotype_lipschitz_check(traj, 0, count - 1)?;
        let bound = report.c1 * report.d_initial + report.c2 * report.trait_gap;
        snaps
            .iter()
            .map(|s| {
                let mut acc = 0.0;
                for (a, b) in s
                    .state()
                    .density(0)
                    .values()
                    .iter()
                    .zip(s.state().density(count - 1).values())
                {
                    acc += (a - b).abs();
                }
                let d = acc * grid.cell_measure();
                if bound > 0.0 {
                    d / bound
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        vec![0.0; snaps.len()]
    };
    push("lipschitz_ratio".into(), lip);

    DiagnosticsRecord::from_parts(run_id.to_string(), times, series)
}
