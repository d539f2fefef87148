//! Run configuration: a TOML file with sections `[grid]`, `[params]`,
//! `[law]`, `[initial]`, `[snapshots]`, and `[output]`, every key optional.
//!
//! Defaults: 1-d grid of 256 points on a box of length 10; N = 4 phenotypes,
//! k = 10, nu = 1e-2, horizon T = 1, max_dt = 1e-2; cfl 0.4 in 1-d viscous
//! runs and 0.2 when nu = 0 or d = 2 (steeper fronts); linear growth law
//! with gamma0 = gamma1 = c = 1; a centered Gaussian profile of width 0.5,
//! amplitude 0.8, trait modulation 0.5; 17 evenly spaced snapshots; output
//! directory "out". Unknown keys are rejected so typos cannot silently fall
//! back to defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::model::{GrowthKind, GrowthLaw, MultiState, PhenotypeSet, SimParams};

/// Initial data must keep this many cells clear of the box edge so the
/// domain-truncation guard starts from a clean state.
const SUPPORT_CELLS: usize = 4;
const SUPPORT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialProfile {
    Gaussian,
    /// Two Gaussians of the common width, offset by 2x the width from the
    /// center along the first axis.
    DoubleBump,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    profile: InitialProfile,
    center: Vec<f64>,
    width: f64,
    amplitude: f64,
    trait_modulation: f64,
}

impl InitialData {
    pub fn profile(&self) -> InitialProfile {
        self.profile
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn trait_modulation(&self) -> f64 {
        self.trait_modulation
    }

    /// Shared spatial factor of the initial densities.
    pub fn spatial_profile(&self, x: &[f64]) -> f64 {
        let gauss = |shift: f64| {
            let mut r2 = 0.0;
            for (d, &xd) in x.iter().enumerate() {
                let c = self.center[d] + if d == 0 { shift } else { 0.0 };
                r2 += (xd - c) * (xd - c);
            }
            (-r2 / (2.0 * self.width * self.width)).exp()
        };
        match self.profile {
            InitialProfile::Gaussian => self.amplitude * gauss(0.0),
            InitialProfile::DoubleBump => {
                self.amplitude * (gauss(2.0 * self.width) + gauss(-2.0 * self.width))
            }
        }
    }

    /// Per-phenotype multiplier 1 + modulation * (a - 1/2); positive for all
    /// traits because |modulation| < 2.
    pub fn species_factor(&self, a: f64) -> f64 {
        1.0 + self.trait_modulation * (a - 0.5)
    }
}

/// A fully validated run description.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    grid: SpatialGrid,
    phenotypes: usize,
    params: SimParams,
    law: GrowthLaw,
    initial: InitialData,
    snapshot_times: Vec<f64>,
    output_dir: PathBuf,
}

impl RunConfig {
    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn phenotypes(&self) -> usize {
        self.phenotypes
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn law(&self) -> &GrowthLaw {
        &self.law
    }

    pub fn initial(&self) -> &InitialData {
        &self.initial
    }

    pub fn snapshot_times(&self) -> &[f64] {
        &self.snapshot_times
    }

    pub fn output_dir(&self) -> &Path {
        &self.output_dir
    }

    pub fn with_output_dir<P: Into<PathBuf>>(mut self, dir: P) -> Self {
        self.output_dir = dir.into();
        self
    }

    /// Same run with a different phenotype count.
    pub fn with_phenotypes(mut self, count: usize) -> Result<Self> {
        PhenotypeSet::new(count)?;
        self.phenotypes = count;
        Ok(self)
    }

    /// Same run with a different pressure stiffness.
    pub fn with_stiffness(mut self, k: f64) -> Result<Self> {
        self.params = SimParams::new(
            k,
            self.params.viscosity(),
            self.params.horizon(),
            self.params.cfl(),
            self.params.max_dt(),
        )?;
        Ok(self)
    }

    /// Same run with a different viscosity (0 selects the Darcy branch).
    pub fn with_viscosity(mut self, nu: f64) -> Result<Self> {
        self.params = SimParams::new(
            self.params.stiffness(),
            nu,
            self.params.horizon(),
            self.params.cfl(),
            self.params.max_dt(),
        )?;
        check_viscosity_cap(nu, self.grid.box_length())?;
        Ok(self)
    }

    /// Builds the initial MultiState described by the `[initial]` section.
    pub fn initial_state(&self) -> Result<MultiState> {
        let phenotypes = PhenotypeSet::new(self.phenotypes)?;
        let densities = phenotypes
            .traits()
            .iter()
            .map(|&a| {
                let factor = self.initial.species_factor(a);
                Field::from_fn(self.grid, |x| factor * self.initial.spatial_profile(x))
            })
            .collect::<Result<Vec<_>>>()?;
        MultiState::new(phenotypes, densities, 0.0)
    }

    /// Canonical serialization: explicit snapshot times, floats at 17
    /// significant digits, fixed section order. Loading the output yields an
    /// identical RunConfig.
    pub fn to_toml(&self) -> String {
        self.to_toml_with_dir(&self.output_dir.display().to_string())
    }

    /// Canonical text with the output directory pinned to "."; two configs
    /// describe the same computation iff these strings match, which makes
    /// this the hash basis for sweep entries.
    pub(crate) fn identity_toml(&self) -> String {
        self.to_toml_with_dir(".")
    }

    fn to_toml_with_dir(&self, dir: &str) -> String {
        let f = fmt_float;
        let mut s = String::new();
        s.push_str("[grid]\n");
        s.push_str(&format!("dim = {}\n", self.grid.dim()));
        s.push_str(&format!("points = {}\n", self.grid.points_per_axis()));
        s.push_str(&format!("box_length = {}\n\n", f(self.grid.box_length())));

        s.push_str("[params]\n");
        s.push_str(&format!("N = {}\n", self.phenotypes));
        s.push_str(&format!("k = {}\n", f(self.params.stiffness())));
        s.push_str(&format!("nu = {}\n", f(self.params.viscosity())));
        s.push_str(&format!("T = {}\n", f(self.params.horizon())));
        s.push_str(&format!("cfl = {}\n", f(self.params.cfl())));
        s.push_str(&format!("max_dt = {}\n\n", f(self.params.max_dt())));

        s.push_str("[law]\n");
        let kind = match self.law.kind() {
            GrowthKind::Linear => "linear",
            GrowthKind::ExpDecay => "exp-decay",
        };
        s.push_str(&format!("kind = \"{kind}\"\n"));
        s.push_str(&format!("gamma0 = {}\n", f(self.law.gamma0())));
        s.push_str(&format!("gamma1 = {}\n", f(self.law.gamma1())));
        s.push_str(&format!("c = {}\n\n", f(self.law.decay())));

        s.push_str("[initial]\n");
        let profile = match self.initial.profile {
            InitialProfile::Gaussian => "gaussian",
            InitialProfile::DoubleBump => "double-bump",
        };
        s.push_str(&format!("profile = \"{profile}\"\n"));
        let center: Vec<String> = self.initial.center.iter().map(|&c| f(c)).collect();
        s.push_str(&format!("center = [{}]\n", center.join(", ")));
        s.push_str(&format!("width = {}\n", f(self.initial.width)));
        s.push_str(&format!("amplitude = {}\n", f(self.initial.amplitude)));
        s.push_str(&format!(
            "trait_modulation = {}\n\n",
            f(self.initial.trait_modulation)
        ));

        s.push_str("[snapshots]\n");
        let times: Vec<String> = self.snapshot_times.iter().map(|&t| f(t)).collect();
        s.push_str(&format!("times = [{}]\n\n", times.join(", ")));

        s.push_str("[output]\n");
        s.push_str(&format!("directory = {:?}\n", dir));
        s
    }
}

/// 17 significant digits: enough for exact f64 round trips through text.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    sweep: Option<RawAxes>,
    grid: Option<RawGrid>,
    params: Option<RawParams>,
    law: Option<RawLaw>,
    initial: Option<RawInitial>,
    snapshots: Option<RawSnapshots>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: Option<u32>,
    points: Option<u32>,
    box_length: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(rename = "N")]
    n: Option<u32>,
    k: Option<f64>,
    nu: Option<f64>,
    #[serde(rename = "T")]
    t: Option<f64>,
    cfl: Option<f64>,
    max_dt: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLaw {
    kind: Option<String>,
    gamma0: Option<f64>,
    gamma1: Option<f64>,
    c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    profile: Option<String>,
    center: Option<Vec<f64>>,
    width: Option<f64>,
    amplitude: Option<f64>,
    trait_modulation: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSnapshots {
    count: Option<u32>,
    times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
}

/// Sweep axes; each lists the values one parameter takes, missing axes stay
/// at the base config's value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxes {
    #[serde(rename = "N")]
    n: Option<Vec<u32>>,
    k: Option<Vec<f64>>,
    nu: Option<Vec<f64>>,
}

/// Parameter lists a sweep iterates over (cartesian product).
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxes {
    pub phenotypes: Vec<usize>,
    pub stiffness: Vec<f64>,
    pub viscosity: Vec<f64>,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let raw = parse_raw(text, origin)?;
    if raw.sweep.is_some() {
        return Err(Error::Validation(
            "run configuration does not take a [sweep] section; use the sweep command".into(),
        ));
    }
    resolve(raw)
}

pub fn load_sweep_config(path: &Path) -> Result<(RunConfig, SweepAxes)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sweep_config(&text, path)
}

pub fn parse_sweep_config(text: &str, origin: &Path) -> Result<(RunConfig, SweepAxes)> {
    let mut raw = parse_raw(text, origin)?;
    let Some(axes) = raw.sweep.take() else {
        return Err(Error::Validation(
            "sweep configuration needs a [sweep] section listing the axes".into(),
        ));
    };
    let base = resolve(raw)?;
    let phenotypes = match axes.n {
        Some(list) => {
            let list: Vec<usize> = list.into_iter().map(|v| v as usize).collect();
            check_axis("N", &list, |&a, &b| b > a)?;
            list
        }
        None => vec![base.phenotypes()],
    };
    let stiffness = match axes.k {
        Some(list) => {
            check_axis("k", &list, |&a, &b| b > a)?;
            list
        }
        None => vec![base.params().stiffness()],
    };
    let viscosity = match axes.nu {
        Some(list) => {
            check_axis("nu", &list, |&a, &b| b > a)?;
            list
        }
        None => vec![base.params().viscosity()],
    };
    Ok((
        base,
        SweepAxes {
            phenotypes,
            stiffness,
            viscosity,
        },
    ))
}

fn check_axis<T>(name: &str, list: &[T], increasing: impl Fn(&T, &T) -> bool) -> Result<()> {
    if list.is_empty() {
        return Err(Error::Validation(format!("sweep axis {name} is empty")));
    }
    if list.windows(2).any(|w| !increasing(&w[0], &w[1])) {
        return Err(Error::Validation(format!(
            "sweep axis {name} must increase strictly"
        )));
    }
    Ok(())
}

fn parse_raw(text: &str, origin: &Path) -> Result<RawFile> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

fn check_viscosity_cap(nu: f64, box_length: f64) -> Result<()> {
    let cap = (box_length / 8.0) * (box_length / 8.0);
    if nu > cap {
        return Err(Error::Validation(format!(
            "viscosity {nu} exceeds (box_length/8)^2 = {cap}; the periodic resolvent needs the \
             screening length well inside the box"
        )));
    }
    Ok(())
}

fn resolve(raw: RawFile) -> Result<RunConfig> {
    let g = raw.grid.unwrap_or_default();
    let dim = g.dim.unwrap_or(1) as usize;
    let points = g.points.unwrap_or(256) as usize;
    let box_length = g.box_length.unwrap_or(10.0);
    let grid = SpatialGrid::new(dim, points, box_length)?;

    let p = raw.params.unwrap_or_default();
    let phenotypes = p.n.unwrap_or(4) as usize;
    PhenotypeSet::new(phenotypes)?;
    let stiffness = p.k.unwrap_or(10.0);
    let nu = p.nu.unwrap_or(1e-2);
    let horizon = p.t.unwrap_or(1.0);
    let cfl = p
        .cfl
        .unwrap_or(if nu == 0.0 || dim == 2 { 0.2 } else { 0.4 });
    let max_dt = p.max_dt.unwrap_or(1e-2);
    let params = SimParams::new(stiffness, nu, horizon, cfl, max_dt)?;
    check_viscosity_cap(nu, box_length)?;

    let l = raw.law.unwrap_or_default();
    let gamma0 = l.gamma0.unwrap_or(1.0);
    let gamma1 = l.gamma1.unwrap_or(1.0);
    let c = l.c.unwrap_or(1.0);
    let law = match l.kind.as_deref().unwrap_or("linear") {
        "linear" => GrowthLaw::linear(gamma0, gamma1, c)?,
        "exp-decay" => GrowthLaw::exp_decay(gamma0, gamma1, c)?,
        other => {
            return Err(Error::Validation(format!(
                "unknown growth law kind {other:?} (expected \"linear\" or \"exp-decay\")"
            )))
        }
    };

    let i = raw.initial.unwrap_or_default();
    let profile = match i.profile.as_deref().unwrap_or("gaussian") {
        "gaussian" => InitialProfile::Gaussian,
        "double-bump" => InitialProfile::DoubleBump,
        other => {
            return Err(Error::Validation(format!(
                "unknown initial profile {other:?} (expected \"gaussian\" or \"double-bump\")"
            )))
        }
    };
    let center = i.center.unwrap_or_else(|| vec![0.0; dim]);
    if center.len() != dim {
        return Err(Error::Validation(format!(
            "initial center has {} coordinates for a {dim}-d grid",
            center.len()
        )));
    }
    let half = box_length / 2.0;
    if center.iter().any(|&c| !c.is_finite() || c < -half || c >= half) {
        return Err(Error::Validation("initial center lies outside the box".into()));
    }
    let width = i.width.unwrap_or(0.5);
    if !width.is_finite() || width <= 0.0 {
        return Err(Error::Validation(format!("initial width must be positive, got {width}")));
    }
    let amplitude = i.amplitude.unwrap_or(0.8);
    if !amplitude.is_finite() || amplitude < 0.0 {
        return Err(Error::Validation(format!(
            "initial amplitude must be nonnegative, got {amplitude}"
        )));
    }
    let trait_modulation = i.trait_modulation.unwrap_or(0.5);
    if !trait_modulation.is_finite() || trait_modulation.abs() >= 2.0 {
        return Err(Error::Validation(
            "trait modulation must stay inside (-2, 2) to keep every phenotype positive".into(),
        ));
    }
    let initial = InitialData {
        profile,
        center,
        width,
        amplitude,
        trait_modulation,
    };

    let s = raw.snapshots.unwrap_or_default();
    let snapshot_times = match (s.count, s.times) {
        (Some(_), Some(_)) => {
            return Err(Error::Validation(
                "snapshots take either a count or explicit times, not both".into(),
            ))
        }
        (_, None) if horizon == 0.0 => vec![0.0],
        (count, None) => {
            let count = count.unwrap_or(17) as usize;
            if count < 2 {
                return Err(Error::Validation(
                    "snapshot count must be at least 2 to cover both endpoints".into(),
                ));
            }
            (0..count)
                .map(|j| horizon * (j as f64 / (count - 1) as f64))
                .collect()
        }
        (None, Some(times)) => {
            if times.is_empty() {
                return Err(Error::Validation("snapshot times are empty".into()));
            }
            if times.iter().any(|t| !t.is_finite()) {
                return Err(Error::Validation("snapshot times must be finite".into()));
            }
            if times[0] != 0.0 {
                return Err(Error::Validation("snapshot times must start at 0".into()));
            }
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Validation(
                    "snapshot times must increase strictly".into(),
                ));
            }
            if *times.last().expect("nonempty") > horizon {
                return Err(Error::Validation(format!(
                    "snapshot time {} beyond the horizon {horizon}",
                    times.last().expect("nonempty")
                )));
            }
            times
        }
    };

    let output_dir = PathBuf::from(raw.output.unwrap_or_default().directory.unwrap_or_else(|| "out".into()));

    let config = RunConfig {
        grid,
        phenotypes,
        params,
        law,
        initial,
        snapshot_times,
        output_dir,
    };

    // Trait factors are positive scalars, so the mean density has the same
    // support as the shared profile; one field check covers every species.
    let profile_field = Field::from_fn(grid, |x| config.initial.spatial_profile(x))?;
    if profile_field.edge_mass_fraction(SUPPORT_CELLS) > SUPPORT_TOL {
        return Err(Error::Validation(format!(
            "initial data must keep {SUPPORT_CELLS} cells clear of the box edge; widen the box \
             or narrow the profile"
        )));
    }

    Ok(config)
}
