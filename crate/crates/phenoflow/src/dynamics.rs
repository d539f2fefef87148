//! Time integration: donor-cell upwind transport in the potential's
//! velocity field plus forward-Euler growth, with the step-size rule and
//! the runtime guards (positivity, support, pressure cap, finiteness).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::model::{
    fractions, mean_density, pressure, pressure_scalar, GrowthLaw, MultiState, SimParams,
};
use crate::spectral::SpectralPlan;

/// Guard thresholds fixed by the runtime contract: mass within two cells of
/// the boundary must stay below 1e-10 of the total, and the pressure may
/// overshoot its theoretical cap by at most 5 percent.
const SUPPORT_MARGIN_CELLS: usize = 2;
const SUPPORT_TOL: f64 = 1e-10;
const MAX_PRINCIPLE_SLACK: f64 = 1.05;
/// Velocity floor in the advective step bound.
const VELOCITY_EPS: f64 = 1e-12;

/// One stored time level: densities plus the pressure and potential that
/// generated the step leaving it.
#[derive(Clone, Debug)]
pub struct Snapshot {
    state: MultiState,
    pressure: Field,
    potential: Field,
}

impl Snapshot {
    pub fn new(state: MultiState, pressure: Field, potential: Field) -> Result<Self> {
        if pressure.grid() != state.grid() || potential.grid() != state.grid() {
            return Err(Error::InvalidField(
                "snapshot fields live on different grids".into(),
            ));
        }
        Ok(Self {
            state,
            pressure,
            potential,
        })
    }

    /// Build a snapshot by evaluating the closure fields on `state`.
    pub fn compute(plan: &SpectralPlan, state: &MultiState, params: &SimParams) -> Result<Self> {
        let nbar = mean_density(state);
        let p = pressure(&nbar, params.stiffness())?;
        let w = plan.solve_w(&p, params.viscosity())?;
        Self::new(state.clone(), p, w)
    }

    pub fn state(&self) -> &MultiState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.time()
    }

    pub fn pressure(&self) -> &Field {
        &self.pressure
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }
}

/// A completed run: the recorded snapshots plus step-size history and the
/// positivity-clip tally (zero on every accepted run).
#[derive(Clone, Debug)]
pub struct Trajectory {
    params: SimParams,
    law: GrowthLaw,
    snapshots: Vec<Snapshot>,
    dt_history: Vec<f64>,
    clipped_cells: u64,
}

impl Trajectory {
    /// Stitch preexisting snapshots into a trajectory; used by synthetic
    /// diagnostics tests.
    pub fn assemble(params: SimParams, law: GrowthLaw, snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InvalidInput("trajectory needs a snapshot".into()));
        }
        let grid = snapshots[0].state.grid();
        let count = snapshots[0].state.count();
        for pair in snapshots.windows(2) {
            if pair[1].time() <= pair[0].time() {
                return Err(Error::InvalidInput(
                    "snapshot times must increase strictly".into(),
                ));
            }
        }
        for s in &snapshots {
            if s.state.grid() != grid || s.state.count() != count {
                return Err(Error::InvalidInput(
                    "snapshots disagree on grid or phenotype count".into(),
                ));
            }
        }
        Ok(Self {
            params,
            law,
            snapshots,
            dt_history: Vec::new(),
            clipped_cells: 0,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn law(&self) -> &GrowthLaw {
        &self.law
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn dt_history(&self) -> &[f64] {
        &self.dt_history
    }

    pub fn clipped_cells(&self) -> u64 {
        self.clipped_cells
    }

    pub fn grid(&self) -> SpatialGrid {
        self.snapshots[0].state.grid()
    }

    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("nonempty by construction")
    }
}

/// Step bound dt = min(cfl h / max(|grad W|, eps), 0.5 / sup|G|,
/// relaxation cap, max_dt). The growth sup runs over pressures up to 1.1
/// times the largest carrying pressure, the operating range the pressure
/// cap enforces.
///
/// The relaxation cap is the explicit-stability limit of the diffusive
/// mode hiding in the transport term: linearizing div(n grad W) around a
/// flat state gives an effective diffusivity n dp/dn = (k-1) p, screened
/// by the resolvent above wavenumber 1/sqrt(nu). Its stiffest mode relaxes
/// at rate dim (k-1) p_max / max(nu, (h/pi)^2), and the advective bound
/// alone leaves that mode unstable: bulk cell noise then grows past the
/// pressure cap on stock grids. Half the stability limit keeps a margin
/// against the nonlinear amplification of density ripples by the stiff
/// pressure law.
pub fn cfl_dt(
    params: &SimParams,
    law: &GrowthLaw,
    grid: SpatialGrid,
    grad_w_max: f64,
    p_max: f64,
) -> f64 {
    let advective = params.cfl() * grid.spacing() / grad_w_max.max(VELOCITY_EPS);
    let range = law.sup_range(1.1 * law.max_carrying_pressure());
    let reactive = if range > 0.0 { 0.5 / range } else { f64::INFINITY };
    advective
        .min(reactive)
        .min(relaxation_dt(params, grid, p_max))
        .min(params.max_dt())
}

/// Half the explicit-stability limit of the screened diffusive mode; see
/// the cfl_dt docs. Infinite on a pressure-free state.
fn relaxation_dt(params: &SimParams, grid: SpatialGrid, p_max: f64) -> f64 {
    if p_max <= 0.0 {
        return f64::INFINITY;
    }
    let screened = params
        .viscosity()
        .max((grid.spacing() / std::f64::consts::PI).powi(2));
    0.5 * screened / (grid.dim() as f64 * (params.stiffness() - 1.0) * p_max)
}

struct StepFields {
    nbar: Field,
    pressure: Field,
    potential: Field,
    grad: Vec<Field>,
    grad_max: f64,
}

fn compute_fields(plan: &SpectralPlan, state: &MultiState, params: &SimParams) -> Result<StepFields> {
    let nbar = mean_density(state);
    let p = pressure(&nbar, params.stiffness())?;
    let w = plan.solve_w(&p, params.viscosity())?;
    let grad = plan.gradient(&w)?;
    let grad_max = grad.iter().map(Field::max_abs).fold(0.0, f64::max);
    Ok(StepFields {
        nbar,
        pressure: p,
        potential: w,
        grad,
        grad_max,
    })
}

/// Donor-cell transport of one species in the velocity field -grad W, plus
/// optional growth dt n G, then the positivity clip. Negative undershoot
/// beyond 1e-12 of the density scale counts as a clip; smaller undershoot
/// is round-off and snaps silently.
fn species_update(
    n: &[f64],
    growth: Option<&[f64]>,
    grad: &[Field],
    dt: f64,
    grid: SpatialGrid,
) -> (Vec<f64>, u64) {
    let npts = grid.points_per_axis();
    let h = grid.spacing();
    let mut out = vec![0.0; grid.cells()];

    if grid.dim() == 1 {
        let gw = grad[0].values();
        let mut flux = vec![0.0; npts];
        for (f, fv) in flux.iter_mut().enumerate() {
            let left = (f + npts - 1) % npts;
            let u = -0.5 * (gw[left] + gw[f]);
            *fv = if u >= 0.0 { u * n[left] } else { u * n[f] };
        }
        for (c, o) in out.iter_mut().enumerate() {
            let right = (c + 1) % npts;
            *o = n[c] - dt / h * (flux[right] - flux[c]);
        }
    } else {
        let gw0 = grad[0].values();
        let gw1 = grad[1].values();
        let idx = |i: usize, j: usize| i * npts + j;
        let mut flux0 = vec![0.0; grid.cells()];
        let mut flux1 = vec![0.0; grid.cells()];
        for i in 0..npts {
            let prev_i = (i + npts - 1) % npts;
            for j in 0..npts {
                let prev_j = (j + npts - 1) % npts;
                let u0 = -0.5 * (gw0[idx(prev_i, j)] + gw0[idx(i, j)]);
                flux0[idx(i, j)] = if u0 >= 0.0 {
                    u0 * n[idx(prev_i, j)]
                } else {
                    u0 * n[idx(i, j)]
                };
                let u1 = -0.5 * (gw1[idx(i, prev_j)] + gw1[idx(i, j)]);
                flux1[idx(i, j)] = if u1 >= 0.0 {
                    u1 * n[idx(i, prev_j)]
                } else {
                    u1 * n[idx(i, j)]
                };
            }
        }
        for i in 0..npts {
            let next_i = (i + 1) % npts;
            for j in 0..npts {
                let next_j = (j + 1) % npts;
                out[idx(i, j)] = n[idx(i, j)]
                    - dt / h * (flux0[idx(next_i, j)] - flux0[idx(i, j)])
                    - dt / h * (flux1[idx(i, next_j)] - flux1[idx(i, j)]);
            }
        }
    }

    if let Some(g) = growth {
        for (c, o) in out.iter_mut().enumerate() {
            *o += dt * n[c] * g[c];
        }
    }

    let scale = n.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let snap = 1e-12 * scale;
    let mut clipped = 0u64;
    for o in out.iter_mut() {
        if *o < 0.0 {
            if *o < -snap {
                clipped += 1;
            }
            *o = 0.0;
        }
    }
    (out, clipped)
}

fn step_with_fields(
    state: &MultiState,
    fields: &StepFields,
    law: Option<&GrowthLaw>,
    dt: f64,
) -> (MultiState, u64) {
    let grid = state.grid();
    let traits = state.phenotypes().traits();
    let results: Vec<(Vec<f64>, u64)> = (0..state.count())
        .into_par_iter()
        .map(|i| {
            let growth: Option<Vec<f64>> = law.map(|l| {
                fields
                    .pressure
                    .values()
                    .iter()
                    .map(|&p| l.eval_raw(p, traits[i]))
                    .collect()
            });
            species_update(
                state.density(i).values(),
                growth.as_deref(),
                &fields.grad,
                dt,
                grid,
            )
        })
        .collect();
    let mut clipped = 0;
    let mut densities = Vec::with_capacity(results.len());
    for (values, c) in results {
        clipped += c;
        densities.push(Field::from_values_unchecked(grid, values));
    }
    let next = MultiState::from_parts_unchecked(
        state.phenotypes().clone(),
        densities,
        state.time() + dt,
    );
    (next, clipped)
}

fn check_dt(dt: f64, bound: f64) -> Result<()> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {dt}"
        )));
    }
    if dt > bound * (1.0 + 1e-9) {
        return Err(Error::CflExceeded { dt, bound });
    }
    Ok(())
}

/// One combined transport + growth step. Rejects dt beyond the step bound
/// for the current state. Returns the new state and the clip count.
pub fn advect_reaction_step(
    plan: &SpectralPlan,
    state: &MultiState,
    params: &SimParams,
    law: &GrowthLaw,
    dt: f64,
) -> Result<(MultiState, u64)> {
    let fields = compute_fields(plan, state, params)?;
    let bound = cfl_dt(params, law, state.grid(), fields.grad_max, fields.pressure.max());
    check_dt(dt, bound)?;
    Ok(step_with_fields(state, &fields, Some(law), dt))
}

/// Transport-only step (growth switched off), same bound minus the growth
/// cap. Exercised by the conservation tests: with no growth, per-species
/// mass is exact up to round-off.
pub fn advect_step(
    plan: &SpectralPlan,
    state: &MultiState,
    params: &SimParams,
    dt: f64,
) -> Result<(MultiState, u64)> {
    let fields = compute_fields(plan, state, params)?;
    let grid = state.grid();
    let advective = params.cfl() * grid.spacing() / fields.grad_max.max(VELOCITY_EPS);
    let bound = advective
        .min(relaxation_dt(params, grid, fields.pressure.max()))
        .min(params.max_dt());
    check_dt(dt, bound)?;
    Ok(step_with_fields(state, &fields, None, dt))
}

fn guard_state(
    state: &MultiState,
    fields: &StepFields,
    pressure_cap: f64,
    enforce_support: bool,
) -> Result<()> {
    for d in state.densities() {
        if !d.is_finite() {
            return Err(Error::NonFinite {
                context: "density".into(),
                time: state.time(),
            });
        }
    }
    if !fields.pressure.is_finite() || !fields.potential.is_finite() {
        return Err(Error::NonFinite {
            context: "closure fields".into(),
            time: state.time(),
        });
    }
    let max_p = fields.pressure.max();
    if max_p > pressure_cap {
        return Err(Error::MaxPrincipleViolation {
            time: state.time(),
            max_p,
            bound: pressure_cap,
        });
    }
    if enforce_support {
        let fraction = fields.nbar.edge_mass_fraction(SUPPORT_MARGIN_CELLS);
        if fraction > SUPPORT_TOL {
            return Err(Error::SupportViolation {
                time: state.time(),
                fraction,
                cells: SUPPORT_MARGIN_CELLS,
            });
        }
    }
    Ok(())
}

/// Integrate from `initial` (time 0) through every requested snapshot time,
/// recording a snapshot exactly at each one. Steps follow the bound from
/// `cfl_dt`, truncated so snapshot times are hit exactly; the trailing
/// truncated step assigns the snapshot time directly instead of
/// accumulating round-off. A horizon of zero records the initial state
/// alone.
pub fn run(
    initial: &MultiState,
    params: &SimParams,
    law: &GrowthLaw,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    if snapshot_times.is_empty() {
        return Err(Error::InvalidInput("no snapshot times requested".into()));
    }
    if snapshot_times[0] < 0.0 || snapshot_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("snapshot times must be finite and nonnegative".into()));
    }
    for pair in snapshot_times.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidInput(
                "snapshot times must increase strictly".into(),
            ));
        }
    }
    let last = *snapshot_times.last().expect("nonempty");
    if last > params.horizon() * (1.0 + 1e-9) + 1e-15 {
        return Err(Error::InvalidInput(format!(
            "snapshot time {last} exceeds the horizon {}",
            params.horizon()
        )));
    }
    if initial.time() != 0.0 {
        return Err(Error::InvalidInput("runs start at time zero".into()));
    }

    let grid = initial.grid();
    let plan = SpectralPlan::new(grid);
    let initial_fields = compute_fields(&plan, initial, params)?;
    let pressure_cap = MAX_PRINCIPLE_SLACK
        * initial_fields
            .pressure
            .max()
            .max(law.max_carrying_pressure());
    // The edge guard exists to catch compactly supported data spreading into
    // the artificial box boundary. Data that already occupies the edge
    // (spatially homogeneous states) is torus-native and exempt.
    let enforce_support =
        initial_fields.nbar.edge_mass_fraction(SUPPORT_MARGIN_CELLS) <= SUPPORT_TOL;

    let mut state = initial.clone();
    let mut fields = initial_fields;
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    let mut dt_history = Vec::new();
    let mut clipped = 0u64;
    let mut next_snap = 0;

    loop {
        guard_state(&state, &fields, pressure_cap, enforce_support)?;
        while next_snap < snapshot_times.len() && state.time() == snapshot_times[next_snap] {
            snapshots.push(Snapshot::new(
                state.clone(),
                fields.pressure.clone(),
                fields.potential.clone(),
            )?);
            next_snap += 1;
        }
        if next_snap == snapshot_times.len() {
            break;
        }
        let target = snapshot_times[next_snap];
        let remaining = target - state.time();
        let bound = cfl_dt(params, law, grid, fields.grad_max, fields.pressure.max());
        let dt = bound.min(remaining);
        let (mut next, nclip) = step_with_fields(&state, &fields, Some(law), dt);
        if dt >= remaining {
            // Hit the snapshot time exactly rather than accumulating t + dt.
            next = MultiState::from_parts_unchecked(
                next.phenotypes().clone(),
                next.densities().to_vec(),
                target,
            );
        }
        clipped += nclip;
        dt_history.push(dt);
        state = next;
        fields = compute_fields(&plan, &state, params)?;
    }

    Ok(Trajectory {
        params: *params,
        law: *law,
        snapshots,
        dt_history,
        clipped_cells: clipped,
    })
}

/// Reference solution for spatially homogeneous data: classical RK4 on the
/// exact ODE system dn_i/dt = n_i G(p(nbar), a_i), with a step no larger
/// than 1e-4 so the time-discretization error is negligible against the
/// 1e-3 comparison tolerances.
pub fn homogeneous_oracle(
    initial: &[f64],
    law: &GrowthLaw,
    stiffness: f64,
    t_final: f64,
    dt_fine: f64,
) -> Result<Vec<f64>> {
    if initial.is_empty() {
        return Err(Error::InvalidInput("oracle needs at least one species".into()));
    }
    if initial.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(
            "oracle initial densities must be finite and nonnegative".into(),
        ));
    }
    if !stiffness.is_finite() || stiffness < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "oracle needs stiffness >= 2, got {stiffness}"
        )));
    }
    if !t_final.is_finite() || t_final < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "oracle horizon must be nonnegative, got {t_final}"
        )));
    }
    if !dt_fine.is_finite() || dt_fine <= 0.0 || dt_fine > 1e-4 {
        return Err(Error::InvalidParameter(format!(
            "oracle step must lie in (0, 1e-4], got {dt_fine}"
        )));
    }
    if t_final == 0.0 {
        return Ok(initial.to_vec());
    }

    let count = initial.len();
    let traits: Vec<f64> = (1..=count).map(|i| i as f64 / count as f64).collect();
    let deriv = |n: &[f64], out: &mut [f64]| {
        let nbar = n.iter().sum::<f64>() / count as f64;
        let p = pressure_scalar(nbar.max(0.0), stiffness);
        for i in 0..count {
            out[i] = n[i] * law.eval_raw(p, traits[i]);
        }
    };

    let steps = (t_final / dt_fine).ceil() as usize;
    let dt = t_final / steps as f64;
    let mut n = initial.to_vec();
    let mut k1 = vec![0.0; count];
    let mut k2 = vec![0.0; count];
    let mut k3 = vec![0.0; count];
    let mut k4 = vec![0.0; count];
    let mut tmp = vec![0.0; count];
    for _ in 0..steps {
        deriv(&n, &mut k1);
        for i in 0..count {
            tmp[i] = n[i] + 0.5 * dt * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..count {
            tmp[i] = n[i] + 0.5 * dt * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..count {
            tmp[i] = n[i] + dt * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..count {
            n[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(n)
}

/// Residual of the pressure evolution law measured on the stored snapshots:
/// centered-in-time dp/dt against grad p . grad W + (k-1) p (Lap W + sum_i
/// F_i G_i). Averaged in L1 over cells with p > 1e-8, then over interior
/// snapshots; a trajectory with no such cells scores exactly zero.
pub fn pressure_evolution_residual(traj: &Trajectory) -> Result<f64> {
    let snaps = traj.snapshots();
    if snaps.len() < 3 {
        return Err(Error::InvalidInput(
            "pressure residual needs at least three snapshots".into(),
        ));
    }
    let grid = traj.grid();
    let plan = SpectralPlan::new(grid);
    let k = traj.params().stiffness();
    let law = traj.law();

    let mut total = 0.0;
    let mut used = 0usize;
    for j in 1..snaps.len() - 1 {
        let (prev, cur, next) = (&snaps[j - 1], &snaps[j], &snaps[j + 1]);
        let span = next.time() - prev.time();
        let grad_p = plan.gradient(cur.pressure())?;
        let grad_w = plan.gradient(cur.potential())?;
        let lap_w = plan.laplacian(cur.potential())?;
        let fracs = fractions(cur.state());
        let traits = cur.state().phenotypes().traits();
        let p = cur.pressure().values();

        let mut sum = 0.0;
        let mut cells = 0usize;
        for c in 0..grid.cells() {
            if p[c] <= 1e-8 {
                continue;
            }
            let dpdt = (next.pressure().values()[c] - prev.pressure().values()[c]) / span;
            let mut advect = 0.0;
            for axis in 0..grid.dim() {
                advect += grad_p[axis].values()[c] * grad_w[axis].values()[c];
            }
            let mut growth = 0.0;
            for (i, f) in fracs.iter().enumerate() {
                growth += f.values()[c] * law.eval_raw(p[c], traits[i]);
            }
            let rhs = advect + (k - 1.0) * p[c] * (lap_w.values()[c] + growth);
            sum += (dpdt - rhs).abs();
            cells += 1;
        }
        if cells > 0 {
            total += sum / cells as f64;
            used += 1;
        }
    }
    Ok(if used > 0 { total / used as f64 } else { 0.0 })
}
