//! Domain types and algebraic relations: the stiff pressure law, mean
//! density, phenotype fractions, growth laws, and entropy pairs.
//!
//! Pressure closure: p = k/(k-1) * nbar^(k-1) with stiffness k. Growth laws
//! G(p, a) are strictly decreasing in pressure with slope at most -c and have
//! a unique nonnegative zero p_M(a) per trait.

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};

/// Traits a_i = i/N for i = 1..N.
#[derive(Clone, Debug, PartialEq)]
pub struct PhenotypeSet {
    traits: Vec<f64>,
}

impl PhenotypeSet {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter(
                "phenotype count must be at least 1".into(),
            ));
        }
        let traits = (1..=count).map(|i| i as f64 / count as f64).collect();
        Ok(Self { traits })
    }

    pub fn count(&self) -> usize {
        self.traits.len()
    }

    pub fn traits(&self) -> &[f64] {
        &self.traits
    }
}

/// The N phenotype density fields at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiState {
    phenotypes: PhenotypeSet,
    densities: Vec<Field>,
    time: f64,
}

impl MultiState {
    pub fn new(phenotypes: PhenotypeSet, densities: Vec<Field>, time: f64) -> Result<Self> {
        if densities.len() != phenotypes.count() {
            return Err(Error::InvalidParameter(format!(
                "{} densities for {} phenotypes",
                densities.len(),
                phenotypes.count()
            )));
        }
        let grid = densities[0].grid();
        for (i, d) in densities.iter().enumerate() {
            if d.grid() != grid {
                return Err(Error::InvalidField(format!(
                    "density {i} lives on a different grid"
                )));
            }
            if d.min() < 0.0 {
                return Err(Error::InvalidField(format!("density {i} has negative values")));
            }
        }
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidParameter(format!("bad time {time}")));
        }
        Ok(Self {
            phenotypes,
            densities,
            time,
        })
    }

    /// Spatially constant state with density `values[i]` for phenotype i.
    pub fn homogeneous(grid: SpatialGrid, values: &[f64]) -> Result<Self> {
        let phenotypes = PhenotypeSet::new(values.len())?;
        let densities = values
            .iter()
            .map(|&v| Field::constant(grid, v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(phenotypes, densities, 0.0)
    }

    pub(crate) fn from_parts_unchecked(
        phenotypes: PhenotypeSet,
        densities: Vec<Field>,
        time: f64,
    ) -> Self {
        Self {
            phenotypes,
            densities,
            time,
        }
    }

    pub fn phenotypes(&self) -> &PhenotypeSet {
        &self.phenotypes
    }

    pub fn densities(&self) -> &[Field] {
        &self.densities
    }

    pub fn density(&self, i: usize) -> &Field {
        &self.densities[i]
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grid(&self) -> SpatialGrid {
        self.densities[0].grid()
    }

    pub fn count(&self) -> usize {
        self.phenotypes.count()
    }
}

/// nbar = (1/N) sum of the phenotype densities, cellwise.
pub fn mean_density(state: &MultiState) -> Field {
    let grid = state.grid();
    let inv_n = 1.0 / state.count() as f64;
    let mut acc = vec![0.0; grid.cells()];
    for d in state.densities() {
        for (a, v) in acc.iter_mut().zip(d.values()) {
            *a += v;
        }
    }
    for a in acc.iter_mut() {
        *a *= inv_n;
    }
    Field::from_values_unchecked(grid, acc)
}

/// Scalar pressure law p = k/(k-1) * n^(k-1).
pub fn pressure_scalar(n: f64, k: f64) -> f64 {
    k / (k - 1.0) * n.powf(k - 1.0)
}

/// Cellwise pressure law. The model requires k > 2; k = 2 is admitted here
/// because the formula is well defined and useful in unit tests.
pub fn pressure(nbar: &Field, k: f64) -> Result<Field> {
    if !k.is_finite() || k < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "pressure law needs k >= 2, got {k}"
        )));
    }
    if nbar.min() < 0.0 {
        return Err(Error::InvalidInput("pressure law on negative density".into()));
    }
    let values = nbar.values().iter().map(|&n| pressure_scalar(n, k)).collect();
    Ok(Field::from_values_unchecked(nbar.grid(), values))
}

/// Phenotype fractions F_i = n_i / sum_j n_j, zero where the total vanishes.
pub fn fractions(state: &MultiState) -> Vec<Field> {
    let grid = state.grid();
    let cells = grid.cells();
    let mut total = vec![0.0; cells];
    for d in state.densities() {
        for (t, v) in total.iter_mut().zip(d.values()) {
            *t += v;
        }
    }
    state
        .densities()
        .iter()
        .map(|d| {
            let values = d
                .values()
                .iter()
                .zip(&total)
                .map(|(&v, &t)| if t > 0.0 { v / t } else { 0.0 })
                .collect();
            Field::from_values_unchecked(grid, values)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthKind {
    /// G(p, a) = gamma0 + gamma1 a - p.
    Linear,
    /// G(p, a) = (gamma0 + gamma1 a) exp(-p) - c p.
    ExpDecay,
}

/// Parametric growth family with decay constant c > 0: dG/dp <= -c
/// everywhere on p >= 0, a in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthLaw {
    kind: GrowthKind,
    gamma0: f64,
    gamma1: f64,
    decay: f64,
}

impl GrowthLaw {
    pub fn linear(gamma0: f64, gamma1: f64, decay: f64) -> Result<Self> {
        Self::build(GrowthKind::Linear, gamma0, gamma1, decay)
    }

    pub fn exp_decay(gamma0: f64, gamma1: f64, decay: f64) -> Result<Self> {
        Self::build(GrowthKind::ExpDecay, gamma0, gamma1, decay)
    }

    fn build(kind: GrowthKind, gamma0: f64, gamma1: f64, decay: f64) -> Result<Self> {
        if !gamma0.is_finite() || !gamma1.is_finite() || !decay.is_finite() {
            return Err(Error::InvalidParameter("nonfinite growth coefficient".into()));
        }
        if decay <= 0.0 {
            return Err(Error::InvalidParameter(
                "growth decay constant c must be positive".into(),
            ));
        }
        match kind {
            // dG/dp = -1, so c <= 1 is the largest valid decay constant.
            GrowthKind::Linear if decay > 1.0 => Err(Error::InvalidParameter(
                "linear growth law has pressure slope -1; decay constant c must not exceed 1"
                    .into(),
            )),
            // dG/dp = -(gamma0 + gamma1 a) e^(-p) - c <= -c needs a
            // nonnegative rate coefficient on all traits.
            GrowthKind::ExpDecay if gamma0 < 0.0 || gamma0 + gamma1 < 0.0 => {
                Err(Error::InvalidParameter(
                    "exp-decay growth law needs gamma0 + gamma1 a >= 0 on [0, 1]".into(),
                ))
            }
            _ => Ok(Self {
                kind,
                gamma0,
                gamma1,
                decay,
            }),
        }
    }

    pub fn kind(&self) -> GrowthKind {
        self.kind
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// G(p, a) without the trait range check; callers pass traits from a
    /// validated PhenotypeSet.
    pub(crate) fn eval_raw(&self, p: f64, a: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&a));
        match self.kind {
            GrowthKind::Linear => self.gamma0 + self.gamma1 * a - p,
            GrowthKind::ExpDecay => (self.gamma0 + self.gamma1 * a) * (-p).exp() - self.decay * p,
        }
    }

    /// G(p, a) for a trait in [0, 1].
    pub fn eval(&self, p: f64, a: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidInput(format!("trait {a} outside [0, 1]")));
        }
        Ok(self.eval_raw(p, a))
    }

    /// Cellwise G(p(x), a).
    pub fn eval_field(&self, p: &Field, a: f64) -> Result<Field> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidInput(format!("trait {a} outside [0, 1]")));
        }
        let values = p.values().iter().map(|&pc| self.eval_raw(pc, a)).collect();
        Ok(Field::from_values_unchecked(p.grid(), values))
    }

    /// The unique p* >= 0 with G(p*, a) = 0: closed form for the linear
    /// kind, bracketing bisection (tolerance 1e-12) otherwise.
    pub fn carrying_pressure(&self, a: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidInput(format!("trait {a} outside [0, 1]")));
        }
        match self.kind {
            GrowthKind::Linear => {
                let p = self.gamma0 + self.gamma1 * a;
                if p < 0.0 {
                    Err(Error::InvalidInput(format!(
                        "growth law has no nonnegative zero at trait {a}: G(0) = {p} < 0"
                    )))
                } else {
                    Ok(p)
                }
            }
            GrowthKind::ExpDecay => {
                let g0 = self.eval_raw(0.0, a);
                if g0 < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "growth law has no nonnegative zero at trait {a}: G(0) = {g0} < 0"
                    )));
                }
                let upper = g0 / self.decay + 1.0;
                if self.eval_raw(upper, a) > 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "no sign change bracketed in [0, {upper}] at trait {a}"
                    )));
                }
                let (mut lo, mut hi) = (0.0_f64, upper);
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if self.eval_raw(mid, a) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// max over a in [0, 1] of p_M(a); both kinds are monotone in a, sampled
    /// anyway for safety.
    pub fn max_carrying_pressure(&self) -> f64 {
        let samples = 101;
        (0..samples)
            .filter_map(|i| {
                let a = i as f64 / (samples - 1) as f64;
                self.carrying_pressure(a).ok()
            })
            .fold(0.0_f64, f64::max)
    }

    /// sup over a of G(0, a); G is decreasing in p so this bounds G from
    /// above on the whole operating range.
    pub fn sup_at_zero_pressure(&self) -> f64 {
        self.eval_raw(0.0, 0.0).max(self.eval_raw(0.0, 1.0))
    }

    /// sup of |G| over [0, p_max] x [0, 1]. G is monotone in each argument
    /// for both kinds, so the corners attain the extremes.
    pub fn sup_range(&self, p_max: f64) -> f64 {
        [
            self.eval_raw(0.0, 0.0),
            self.eval_raw(0.0, 1.0),
            self.eval_raw(p_max, 0.0),
            self.eval_raw(p_max, 1.0),
        ]
        .iter()
        .fold(0.0_f64, |m, g| m.max(g.abs()))
    }

    /// Uniform bound on |dG/da|.
    pub fn trait_slope_bound(&self) -> f64 {
        // Linear: dG/da = gamma1. Exp-decay: gamma1 e^(-p), maximal at p = 0.
        self.gamma1.abs()
    }
}

/// Convex pair (e, z) with n e'(n) - e(n) = z'(p) under the pressure law;
/// e(n) = n^m / m, so e(n) = n^(k+1)/(k+1) at m = k+1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyPair {
    m: f64,
    k: f64,
}

impl EntropyPair {
    pub fn new(m: f64, k: f64) -> Result<Self> {
        if !m.is_finite() || m < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "entropy exponent m must be at least 2, got {m}"
            )));
        }
        if !k.is_finite() || k < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "entropy pair needs stiffness k >= 2, got {k}"
            )));
        }
        Ok(Self { m, k })
    }

    /// The dissipation bookkeeping choice m = k + 1.
    pub fn dissipation_default(k: f64) -> Result<Self> {
        Self::new(k + 1.0, k)
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn e(&self, n: f64) -> f64 {
        let n = n.max(0.0);
        n.powf(self.m) / self.m
    }

    pub fn e_prime(&self, n: f64) -> f64 {
        let n = n.max(0.0);
        n.powf(self.m - 1.0)
    }

    /// z'(p) = (1 - 1/m) ((k-1) p / k)^(m/(k-1)). Negative inputs clamp to
    /// 0; the potential can undershoot by round-off.
    pub fn z_prime(&self, p: f64) -> f64 {
        let p = p.max(0.0);
        (1.0 - 1.0 / self.m) * ((self.k - 1.0) * p / self.k).powf(self.m / (self.k - 1.0))
    }

    pub fn z_double_prime(&self, p: f64) -> f64 {
        let p = p.max(0.0);
        let q = self.m / (self.k - 1.0);
        (1.0 - 1.0 / self.m)
            * q
            * ((self.k - 1.0) / self.k).powf(q)
            * p.powf(q - 1.0)
    }

    pub fn z(&self, p: f64) -> f64 {
        let p = p.max(0.0);
        let q = self.m / (self.k - 1.0);
        (1.0 - 1.0 / self.m) * ((self.k - 1.0) / self.k).powf(q) * p.powf(q + 1.0) / (q + 1.0)
    }
}

/// Stiffness, viscosity, horizon, and step control. The phenotype count
/// lives in the state, the grid in the fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    stiffness: f64,
    viscosity: f64,
    horizon: f64,
    cfl: f64,
    max_dt: f64,
}

impl SimParams {
    pub fn new(stiffness: f64, viscosity: f64, horizon: f64, cfl: f64, max_dt: f64) -> Result<Self> {
        if !stiffness.is_finite() || stiffness <= 2.0 {
            return Err(Error::InvalidParameter("stiffness must exceed 2".into()));
        }
        if !viscosity.is_finite() || viscosity < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "viscosity must be nonnegative, got {viscosity}"
            )));
        }
        // horizon 0 is the degenerate single-snapshot run.
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be nonnegative, got {horizon}"
            )));
        }
        if !cfl.is_finite() || cfl <= 0.0 || cfl >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "cfl must lie strictly inside (0, 1), got {cfl}"
            )));
        }
        if !max_dt.is_finite() || max_dt <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "max_dt must be positive, got {max_dt}"
            )));
        }
        Ok(Self {
            stiffness,
            viscosity,
            horizon,
            cfl,
            max_dt,
        })
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn cfl(&self) -> f64 {
        self.cfl
    }

    pub fn max_dt(&self) -> f64 {
        self.max_dt
    }

    pub fn with_viscosity(mut self, viscosity: f64) -> Result<Self> {
        if !viscosity.is_finite() || viscosity < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "viscosity must be nonnegative, got {viscosity}"
            )));
        }
        self.viscosity = viscosity;
        Ok(self)
    }
}
