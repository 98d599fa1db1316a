use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aerogen::{default_airfoil, parametric_airfoil, AirfoilGeometry, Ambient, StallModel};
use crate::architectures::ArchitectureKind;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::pipeline::{SplitSpec, Task, TrainConfig};
use crate::quasirandom::DomainBounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    OfflineSweep,
    DistributionShift,
    DomainExtension,
    NoisyDomain,
    TaskAdaptation,
    Timing,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::OfflineSweep => "offline_sweep",
            ScenarioKind::DistributionShift => "distribution_shift",
            ScenarioKind::DomainExtension => "domain_extension",
            ScenarioKind::NoisyDomain => "noisy_domain",
            ScenarioKind::TaskAdaptation => "task_adaptation",
            ScenarioKind::Timing => "timing",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            ScenarioKind::OfflineSweep,
            ScenarioKind::DistributionShift,
            ScenarioKind::DomainExtension,
            ScenarioKind::NoisyDomain,
            ScenarioKind::TaskAdaptation,
            ScenarioKind::Timing,
        ];
        let norm = s.to_ascii_lowercase().replace('-', "_");
        all.into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown scenario kind `{s}`")))
    }
}

/// Airfoil used to generate data: a file or parametric section parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometrySpec {
    pub path: Option<PathBuf>,
    pub camber: f64,
    pub camber_pos: f64,
    pub thickness: f64,
    pub n_points: usize,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec {
            path: None,
            camber: 0.02,
            camber_pos: 0.4,
            thickness: 0.16,
            n_points: 600,
        }
    }
}

impl GeometrySpec {
    pub fn build(&self) -> Result<AirfoilGeometry> {
        match &self.path {
            Some(p) => AirfoilGeometry::read(p),
            None if *self == GeometrySpec::default() => Ok(default_airfoil()),
            None => parametric_airfoil(self.camber, self.camber_pos, self.thickness, self.n_points),
        }
    }
}

/// Per-architecture training settings; unset fields inherit from the
/// scenario-wide `offline` and `transfer` tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchOverrides {
    pub offline: Option<TrainConfig>,
    pub transfer: Option<TrainConfig>,
}

/// Declarative description of one scenario. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub kind: ScenarioKind,
    pub architectures: Vec<ArchitectureKind>,
    pub tasks: Vec<Task>,
    pub n_s: Vec<usize>,
    pub dataset_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Numbers of trailing linear layers retrained in transfer runs.
    pub last_k: Vec<usize>,
    /// Relative noise levels of the noisy-domain scenario.
    pub noise_sigmas: Vec<f64>,
    pub noise_copies: usize,
    pub split: SplitSpec,
    /// Offline training; `seed` and `task` are overridden per run.
    pub offline: TrainConfig,
    /// Transfer training; `seed` and `task` are overridden per run.
    pub transfer: TrainConfig,
    /// Keyed by architecture name, e.g. `[overrides.convnet-d.offline]`.
    pub overrides: BTreeMap<ArchitectureKind, ArchOverrides>,
    pub bounds: DomainBounds,
    pub geometry: GeometrySpec,
    pub stall: StallModel,
    pub ambient: Ambient,
    pub save_checkpoints: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::for_kind(ScenarioKind::DistributionShift)
    }
}

impl ScenarioSpec {
    /// Defaults of each scenario kind.
    pub fn for_kind(kind: ScenarioKind) -> Self {
        let convnets = vec![ArchitectureKind::ConvNetS, ArchitectureKind::ConvNetD];
        let (architectures, n_s, dataset_sizes, last_k) = match kind {
            ScenarioKind::OfflineSweep => (
                vec![ArchitectureKind::Fcnn, ArchitectureKind::ConvNetS, ArchitectureKind::ConvNetD],
                vec![38, 75, 150, 299, 597],
                vec![128, 256, 512, 1024],
                vec![1],
            ),
            ScenarioKind::Timing => (convnets, vec![75], vec![512, 1024], vec![1, 2]),
            ScenarioKind::TaskAdaptation => (convnets, vec![75], vec![1024], vec![1, 2]),
            _ => (convnets, vec![75], vec![1024], vec![1]),
        };
        ScenarioSpec {
            name: kind.name().to_string(),
            kind,
            architectures,
            tasks: Task::ALL.to_vec(),
            n_s,
            dataset_sizes,
            seeds: (0..5).collect(),
            last_k,
            noise_sigmas: vec![0.01, 0.02, 0.05, 0.1],
            noise_copies: 10,
            split: SplitSpec::default(),
            offline: TrainConfig::default(),
            transfer: TrainConfig::default(),
            overrides: BTreeMap::new(),
            bounds: DomainBounds::default(),
            geometry: GeometrySpec::default(),
            stall: StallModel::default(),
            ambient: Ambient::default(),
            save_checkpoints: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::invalid(format!("scenario `{}` lists no {name}", self.name)))
            } else {
                Ok(())
            }
        };
        nonempty("architectures", self.architectures.len())?;
        nonempty("tasks", self.tasks.len())?;
        nonempty("n_s values", self.n_s.len())?;
        nonempty("dataset sizes", self.dataset_sizes.len())?;
        nonempty("seeds", self.seeds.len())?;
        if self.kind != ScenarioKind::OfflineSweep {
            nonempty("last_k values", self.last_k.len())?;
        }
        if let Some(k) = self.last_k.iter().find(|k| !(1..=2).contains(*k)) {
            return Err(Error::invalid(format!("last_k values must be 1 or 2, got {k}")));
        }
        if self.kind == ScenarioKind::NoisyDomain {
            nonempty("noise sigmas", self.noise_sigmas.len())?;
            if self.noise_copies == 0 {
                return Err(Error::invalid("noise_copies must be at least 1"));
            }
        }
        if let Some(s) = self.noise_sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("noise sigma must be non-negative, got {s}")));
        }
        if self.kind == ScenarioKind::DomainExtension {
            if let Some(n) = self.dataset_sizes.iter().find(|n| *n % 2 != 0) {
                return Err(Error::invalid(format!("domain extension needs even dataset sizes, got {n}")));
            }
        }
        if self.kind == ScenarioKind::Timing && !(self.last_k.contains(&1) && self.last_k.contains(&2)) {
            return Err(Error::invalid("timing scenarios need last_k = [1, 2]"));
        }
        self.split.validate()?;
        for arch in &self.architectures {
            self.offline_for(*arch).validate()?;
            self.transfer_for(*arch).validate()?;
        }
        self.bounds.validate()?;
        Ok(())
    }

    pub fn offline_for(&self, arch: ArchitectureKind) -> &TrainConfig {
        self.overrides.get(&arch).and_then(|o| o.offline.as_ref()).unwrap_or(&self.offline)
    }

    pub fn transfer_for(&self, arch: ArchitectureKind) -> &TrainConfig {
        self.overrides.get(&arch).and_then(|o| o.transfer.as_ref()).unwrap_or(&self.transfer)
    }

    pub fn from_toml(text: &str, path: Option<&Path>) -> Result<Self> {
        // Typed parse first so errors carry a line number.
        toml::from_str::<ScenarioSpec>(text).map_err(|e| toml_error(e, text, path))?;
        // Fill unspecified fields from the defaults of the declared kind.
        let table: toml::Table = toml::from_str(text).map_err(|e| toml_error(e, text, path))?;
        let kind = match table.get("kind") {
            Some(toml::Value::String(k)) => k.parse()?,
            Some(_) => return Err(Error::parse(path, None, "`kind` must be a string")),
            None => ScenarioKind::DistributionShift,
        };
        let mut base = toml::Table::try_from(ScenarioSpec::for_kind(kind)).expect("defaults serialize");
        merge(&mut base, table);
        inherit_overrides(&mut base);
        let spec: ScenarioSpec =
            toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| toml_error(e, text, path))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&fsutil::read_to_string(path)?, Some(path))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid(format!("cannot serialize scenario: {e}")))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Completes each per-architecture table from the scenario-wide one.
fn inherit_overrides(spec: &mut toml::Table) {
    let Some(toml::Value::Table(overrides)) = spec.get("overrides").cloned() else {
        return;
    };
    let mut resolved = toml::Table::new();
    for (arch, value) in overrides {
        let toml::Value::Table(mut per_arch) = value else {
            resolved.insert(arch, value);
            continue;
        };
        for section in ["offline", "transfer"] {
            if let (Some(toml::Value::Table(own)), Some(toml::Value::Table(shared))) =
                (per_arch.get(section).cloned(), spec.get(section))
            {
                let mut full = shared.clone();
                merge(&mut full, own);
                per_arch.insert(section.to_string(), toml::Value::Table(full));
            }
        }
        resolved.insert(arch, toml::Value::Table(per_arch));
    }
    spec.insert("overrides".to_string(), toml::Value::Table(resolved));
}

fn toml_error(e: toml::de::Error, text: &str, path: Option<&Path>) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
    Error::parse(path, line, e.message().to_string())
}
