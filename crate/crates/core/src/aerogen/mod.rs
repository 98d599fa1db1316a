//! Surrogate surface-pressure data: airfoil geometry, a vortex panel solver,
//! two related fidelity levels, Gaussian sensor noise and dataset files.

mod geometry;
mod panel;

pub use geometry::{default_airfoil, parametric_airfoil, AirfoilGeometry, MIN_SURFACE_POINTS};
pub use panel::{panel_solve, PanelSolution, PanelSolver};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::quasirandom::{parse_finite, DoePlan};

/// Sea-level ISA density [kg/m³].
pub const SEA_LEVEL_DENSITY: f64 = 1.225;
/// Sea-level ISA static pressure [Pa].
pub const SEA_LEVEL_PRESSURE: f64 = 101_325.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowCondition {
    pub v_inf: f64,
    pub alpha: f64,
    pub rho: f64,
    pub p_static: f64,
}

impl FlowCondition {
    pub fn new(v_inf: f64, alpha: f64, ambient: Ambient) -> Result<Self> {
        if !(v_inf > 0.0) || !v_inf.is_finite() {
            return Err(Error::invalid(format!("onflow speed must be positive, got {v_inf}")));
        }
        if !(ambient.rho > 0.0) {
            return Err(Error::invalid(format!("density must be positive, got {}", ambient.rho)));
        }
        Ok(FlowCondition {
            v_inf,
            alpha,
            rho: ambient.rho,
            p_static: ambient.p_static,
        })
    }

    pub fn dynamic_pressure(&self) -> f64 {
        0.5 * self.rho * self.v_inf * self.v_inf
    }
}

/// Freestream density and static pressure shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ambient {
    pub rho: f64,
    pub p_static: f64,
}

impl Default for Ambient {
    fn default() -> Self {
        Ambient {
            rho: SEA_LEVEL_DENSITY,
            p_static: SEA_LEVEL_PRESSURE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fidelity {
    /// Attached potential flow straight from the panel solver.
    #[serde(rename = "A")]
    Inviscid,
    /// Panel solution at a saturated angle with a separated suction-side plateau.
    #[serde(rename = "B")]
    StallCorrected,
    #[serde(rename = "external")]
    External,
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::Inviscid => "A",
            Fidelity::StallCorrected => "B",
            Fidelity::External => "external",
        })
    }
}

impl FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" | "inviscid" => Ok(Fidelity::Inviscid),
            "B" | "b" | "stall" | "stall-corrected" => Ok(Fidelity::StallCorrected),
            "external" => Ok(Fidelity::External),
            other => Err(Error::invalid(format!("unknown fidelity `{other}` (expected A, B or external)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureSample {
    /// Surface pressures [Pa] in surface-loop order.
    pub pressures: Vec<f64>,
    /// Angle of attack [deg].
    pub alpha: f64,
    /// Onflow speed [m/s].
    pub v_inf: f64,
    pub fidelity: Fidelity,
    /// Relative noise level applied to this sample, 0 when clean.
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    pub samples: Vec<PressureSample>,
    pub domain_tag: String,
    pub doe: Option<DoePlan>,
    pub n_surface_full: usize,
}

impl DomainDataset {
    pub fn new(samples: Vec<PressureSample>, domain_tag: impl Into<String>, doe: Option<DoePlan>) -> Result<Self> {
        let n_surface_full = samples.first().map(|s| s.pressures.len()).unwrap_or(0);
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.pressures.len() != n_surface_full) {
            return Err(Error::invalid(format!(
                "sample {i} has {} pressures, expected {n_surface_full}",
                s.pressures.len()
            )));
        }
        if let Some(first) = samples.first() {
            if samples.iter().any(|s| s.fidelity != first.fidelity) {
                return Err(Error::invalid("all samples of a dataset must share one fidelity"));
            }
        }
        Ok(DomainDataset {
            samples,
            domain_tag: domain_tag.into(),
            doe,
            n_surface_full,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same samples under another domain tag.
    pub fn retagged(mut self, tag: impl Into<String>) -> Self {
        self.domain_tag = tag.into();
        self
    }

    /// Subset in the given order; the DoE reference is dropped.
    pub fn select(&self, indices: &[usize], tag: impl Into<String>) -> DomainDataset {
        DomainDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            domain_tag: tag.into(),
            doe: None,
            n_surface_full: self.n_surface_full,
        }
    }

    /// Smallest and largest pressure over every sample and surface point.
    pub fn pressure_range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .flat_map(|s| s.pressures.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }

    /// Delimited text: `alpha_deg,v_inf,fidelity,noise_sigma,p_0,...,p_{n-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha_deg,v_inf,fidelity,noise_sigma");
        for i in 0..self.n_surface_full {
            out.push_str(&format!(",p_{i}"));
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{:?},{:?},{},{:?}", s.alpha, s.v_inf, s.fidelity, s.noise_sigma));
            for p in &s.pressures {
                out.push_str(&format!(",{p:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic_str(path, &self.to_csv())
    }
}

/// Smooth post-stall saturation of the angle of attack.
///
/// The angle passes through unchanged up to `alpha_stall / 2`; beyond that
/// the excess is squashed with a tanh knee of half-width
/// `softness · alpha_stall / 2`, so with `softness = 1` the effective angle
/// approaches `alpha_stall` from below. The map is odd, continuous with a
/// continuous first derivative, and strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StallModel {
    pub alpha_stall: f64,
    pub softness: f64,
    /// Forward travel of the separation point per degree beyond onset, in chords.
    pub separation_rate: f64,
    /// Most forward separation location, in chords.
    pub separation_limit: f64,
}

impl Default for StallModel {
    fn default() -> Self {
        StallModel {
            alpha_stall: 12.0,
            softness: 1.0,
            separation_rate: 0.05,
            separation_limit: 0.3,
        }
    }
}

impl StallModel {
    fn onset(&self) -> f64 {
        0.5 * self.alpha_stall
    }

    pub fn effective_alpha(&self, alpha: f64) -> f64 {
        stall_correction(alpha, self.alpha_stall, self.softness)
    }

    /// Chordwise separation location for the given geometric angle; 1.0 means
    /// attached flow.
    pub fn separation_point(&self, alpha: f64) -> f64 {
        let excess = alpha.abs() - self.onset();
        if excess <= 0.0 {
            1.0
        } else {
            (1.0 - self.separation_rate * excess).max(self.separation_limit)
        }
    }
}

/// Effective angle after stall saturation; see [`StallModel`].
pub fn stall_correction(alpha: f64, alpha_stall: f64, softness: f64) -> f64 {
    debug_assert!(softness > 0.0 && alpha_stall > 0.0);
    let onset = 0.5 * alpha_stall;
    let a = alpha.abs();
    if a <= onset {
        return alpha;
    }
    let width = softness * onset;
    (onset + width * ((a - onset) / width).tanh()).copysign(alpha)
}

/// Cp for one fidelity level at geometric angle `alpha`.
fn surface_cp(solver: &PanelSolver, fidelity: Fidelity, stall: &StallModel, alpha: f64) -> Result<Vec<f64>> {
    match fidelity {
        Fidelity::Inviscid => Ok(solver.solve(alpha)?.cp),
        Fidelity::StallCorrected => {
            let mut cp = solver.solve(stall.effective_alpha(alpha))?.cp;
            let x_sep = stall.separation_point(alpha);
            if x_sep < 1.0 {
                apply_separation_plateau(solver, &mut cp, alpha >= 0.0, x_sep);
            }
            Ok(cp)
        }
        Fidelity::External => Err(Error::invalid("external data cannot be generated")),
    }
}

/// Holds the suction-side pressure aft of `x_sep` at its value at `x_sep`.
fn apply_separation_plateau(solver: &PanelSolver, cp: &mut [f64], upper: bool, x_sep: f64) {
    let m = cp.len();
    let xs: Vec<f64> = solver.control_points().map(|p| p.0).collect();
    // The loop runs lower TE→LE then LE→TE upper; pick the half on the
    // suction side, ordered from the leading edge aft.
    let side: Vec<usize> = if upper { (m / 2..m).collect() } else { (0..m / 2).rev().collect() };
    let Some(pos) = side.iter().position(|&i| xs[i] >= x_sep) else {
        return;
    };
    let plateau = if pos == 0 {
        cp[side[0]]
    } else {
        let (i0, i1) = (side[pos - 1], side[pos]);
        let t = (x_sep - xs[i0]) / (xs[i1] - xs[i0]);
        cp[i0] + t * (cp[i1] - cp[i0])
    };
    for &i in &side[pos..] {
        cp[i] = plateau;
    }
}

/// Solves every DoE point and converts Cp to absolute pressure
/// `P = p_static + ½ρV∞²·Cp`. Output order equals DoE order.
pub fn generate_dataset(
    doe: &DoePlan,
    geometry: &AirfoilGeometry,
    fidelity: Fidelity,
    ambient: Ambient,
) -> Result<DomainDataset> {
    generate_dataset_with(doe, geometry, fidelity, ambient, &StallModel::default())
}

pub fn generate_dataset_with(
    doe: &DoePlan,
    geometry: &AirfoilGeometry,
    fidelity: Fidelity,
    ambient: Ambient,
    stall: &StallModel,
) -> Result<DomainDataset> {
    if doe.is_empty() {
        return Err(Error::invalid("DoE plan is empty"));
    }
    if fidelity == Fidelity::External {
        return Err(Error::invalid("external data cannot be generated; use import_dataset"));
    }
    let solver = PanelSolver::new(geometry)?;
    let samples = doe
        .points
        .par_iter()
        .enumerate()
        .map(|(k, point)| {
            let flow = FlowCondition::new(point.v_inf, point.alpha, ambient)
                .map_err(|e| Error::invalid(format!("DoE point {k}: {e}")))?;
            let cp = surface_cp(&solver, fidelity, stall, point.alpha).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("DoE point {k}: {m}")),
                other => Error::invalid(format!("DoE point {k}: {other}")),
            })?;
            let q = flow.dynamic_pressure();
            Ok(PressureSample {
                pressures: cp.iter().map(|c| flow.p_static + q * c).collect(),
                alpha: point.alpha,
                v_inf: point.v_inf,
                fidelity,
                noise_sigma: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tag = match fidelity {
        Fidelity::Inviscid => "D_S",
        _ => "D_R",
    };
    DomainDataset::new(samples, tag, Some(doe.clone()))
}

/// Adds zero-mean i.i.d. Gaussian noise to every surface point.
///
/// The standard deviation is `sigma` times the pressure range of the input
/// dataset. Each sample yields `copies` noisy samples with its labels; the
/// output is ordered sample-major, copy-minor.
pub fn add_noise(dataset: &DomainDataset, sigma: f64, copies: usize, seed: u64) -> Result<DomainDataset> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if copies == 0 {
        return Err(Error::invalid("at least one noisy copy per sample is required"));
    }
    let (lo, hi) = dataset.pressure_range();
    let sigma_abs = if dataset.is_empty() { 0.0 } else { sigma * (hi - lo) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma_abs.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let mut samples = Vec::with_capacity(dataset.len() * copies);
    for s in &dataset.samples {
        for _ in 0..copies {
            let pressures = if sigma_abs == 0.0 {
                s.pressures.clone()
            } else {
                s.pressures.iter().map(|p| p + normal.sample(&mut rng)).collect()
            };
            samples.push(PressureSample {
                pressures,
                noise_sigma: sigma,
                ..s.clone()
            });
        }
    }
    Ok(DomainDataset {
        samples,
        domain_tag: "D_n".to_string(),
        doe: dataset.doe.clone(),
        n_surface_full: dataset.n_surface_full,
    })
}

/// Reads a dataset file written by [`DomainDataset::write`] or an external tool.
pub fn import_dataset(path: &Path, domain_tag: &str) -> Result<DomainDataset> {
    let text = fsutil::read_to_string(path)?;
    parse_dataset(&text, domain_tag, Some(path))
}

pub fn parse_dataset(text: &str, domain_tag: &str, path: Option<&Path>) -> Result<DomainDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, Some(1), e.to_string()))?
        .clone();
    let fixed = ["alpha_deg", "v_inf", "fidelity", "noise_sigma"];
    if headers.len() <= fixed.len() || headers.iter().zip(fixed).any(|(h, f)| h != f) {
        return Err(Error::parse(
            path,
            Some(1),
            "expected header `alpha_deg,v_inf,fidelity,noise_sigma,p_0,...`",
        ));
    }
    for (i, h) in headers.iter().skip(fixed.len()).enumerate() {
        if h != format!("p_{i}") {
            return Err(Error::parse(path, Some(1), format!("expected column `p_{i}`, found `{h}`")));
        }
    }
    let width = headers.len() - fixed.len();
    let mut samples = Vec::new();
    let mut fidelity0 = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.position().map(|p| p.line()), e.to_string()))?;
        let line = record.position().map(|p| p.line());
        if record.len() != headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!("row has {} pressures, expected {width}", record.len().saturating_sub(fixed.len())),
            ));
        }
        let alpha = parse_finite(&record[0], path, line)?;
        let v_inf = parse_finite(&record[1], path, line)?;
        let fidelity: Fidelity = record[2].parse().map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        if *fidelity0.get_or_insert(fidelity) != fidelity {
            return Err(Error::parse(path, line, "mixed fidelities in one dataset"));
        }
        let noise_sigma = parse_finite(&record[3], path, line)?;
        let pressures = record
            .iter()
            .skip(fixed.len())
            .map(|v| parse_finite(v, path, line))
            .collect::<Result<Vec<_>>>()?;
        samples.push(PressureSample {
            pressures,
            alpha,
            v_inf,
            fidelity,
            noise_sigma,
        });
    }
    DomainDataset::new(samples, domain_tag, None).map_err(|e| Error::parse(path, None, e.to_string()))
}
