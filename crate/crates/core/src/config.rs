//! Run configuration, read from TOML and overridable field by field.
//!
//! ```toml
//! seed = 0
//! metric = "sphere"
//!
//! [family]
//! catalog = "n_z1z2"
//!
//! [grid]
//! resolution = 9
//! margin = 0.2
//!
//! [thresholds]
//! slope = 0.5
//! growth = 1000.0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{entry, CatalogEntry, RescalingSpec, ScanSpec};
use crate::expr::{FamilyFile, HolomorphicFamily};
use crate::geometry::{Domain, DomainSpec};
use crate::marty::SweepMode;
use crate::mu::{geometric_schedule, DetectionOptions};
use crate::rescale::{DEFAULT_ESCAPE_RADIUS, DEFAULT_TOL};
use crate::targets::TargetMetric;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Where the family comes from: a catalog name, a family file, or inline
/// component expressions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, Complex64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: Option<usize>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Explicit indices; otherwise `2^0 .. 2^max_exponent`.
    pub indices: Option<Vec<u64>>,
    pub max_exponent: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub slope: Option<f64>,
    pub growth: Option<f64>,
    pub straddle: Option<f64>,
    pub tol: Option<f64>,
    pub escape_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleConfig {
    pub strategy: Option<String>,
    pub point: Option<Vec<Complex64>>,
    pub center: Option<Vec<String>>,
    pub scale: Option<String>,
    pub schedule: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, Complex64>,
    pub grid_radius: Option<f64>,
    pub grid_resolution: Option<usize>,
    pub reference: Option<Vec<String>>,
    #[serde(default)]
    pub override_check: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub metric: Option<TargetMetric>,
    pub mode: Option<SweepMode>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub svg: bool,
    pub max_degree: Option<usize>,
    #[serde(default)]
    pub family: FamilySource,
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub rescale: RescaleConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Turns the configuration into concrete inputs, filling gaps from the
    /// catalog entry when the family comes from one.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let base = self.base_entry()?;
        let mut family = match (&base, &self.family.components) {
            (Some(e), None) => e.family().map_err(|e| invalid(e.to_string()))?,
            (None, Some(components)) => {
                let dim = self
                    .family
                    .dim
                    .ok_or_else(|| invalid("inline family needs `dim`"))?;
                let domain = match &self.domain {
                    Some(spec) => spec.build(dim).map_err(|e| invalid(e.to_string()))?,
                    None => Domain::full_space(dim),
                };
                let sources: Vec<&str> = components.iter().map(String::as_str).collect();
                HolomorphicFamily::parse(
                    &sources,
                    dim,
                    domain,
                    self.family.constants.clone(),
                    self.family.description.clone(),
                )
                .map_err(|e| invalid(e.to_string()))?
            }
            (None, None) => return Err(invalid("no family given (catalog, file, or components)")),
            (Some(_), Some(_)) => {
                return Err(invalid("give only one of catalog, file, or components"))
            }
        };
        if let Some(spec) = &self.domain {
            let domain = spec
                .build(family.ambient_dim())
                .map_err(|e| invalid(e.to_string()))?;
            family = family.with_domain(domain).map_err(|e| invalid(e.to_string()))?;
        }
        let metric = match (self.metric, &base) {
            (Some(m), _) => m,
            (None, Some(e)) => e.metric,
            (None, None) if family.target_dim() == 1 => TargetMetric::RiemannSphere,
            (None, None) => TargetMetric::Euclidean(family.target_dim()),
        };
        if metric.dim() != family.target_dim() {
            return Err(invalid(format!(
                "metric {metric} does not fit a family with {} components",
                family.target_dim()
            )));
        }
        let scan = base.as_ref().map(|e| e.scan.clone()).unwrap_or_default();
        let schedule = match &self.schedule.indices {
            Some(ix) => ix.clone(),
            None => geometric_schedule(self.schedule.max_exponent.unwrap_or(scan.max_exponent)),
        };
        check_schedule(&schedule)?;
        let resolution = self.grid.resolution.unwrap_or(scan.resolution);
        let margin = self.grid.margin.unwrap_or(scan.margin);
        if resolution < 2 {
            return Err(invalid("grid resolution must be at least 2"));
        }
        if !(margin > 0.0 && margin < 1.0) {
            return Err(invalid("grid margin must lie in (0, 1)"));
        }
        let defaults = DetectionOptions::default();
        let detection = DetectionOptions {
            slope_threshold: self.thresholds.slope.unwrap_or(defaults.slope_threshold),
            growth_threshold: self.thresholds.growth.unwrap_or(defaults.growth_threshold),
            straddle_slope: self.thresholds.straddle.unwrap_or(defaults.straddle_slope),
        };
        let tol = self.thresholds.tol.unwrap_or(DEFAULT_TOL);
        let escape_radius = self.thresholds.escape_radius.unwrap_or(DEFAULT_ESCAPE_RADIUS);
        for (name, v) in [
            ("slope", detection.slope_threshold),
            ("growth", detection.growth_threshold),
            ("straddle", detection.straddle_slope),
            ("tol", tol),
            ("escape_radius", escape_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("threshold `{name}` must be positive")));
            }
        }
        let max_degree = self.max_degree.unwrap_or(scan.max_degree);
        if max_degree == 0 {
            return Err(invalid("max_degree must be at least 1"));
        }
        let rescaling = self.rescaling(base.as_ref().and_then(|e| e.rescaling.clone()))?;
        Ok(Resolved {
            name: base.as_ref().map(|e| e.name.clone()),
            domain: family.domain().clone(),
            family,
            metric,
            mode: self.mode.unwrap_or(SweepMode::Derivative),
            scan: ScanSpec {
                resolution,
                margin,
                max_exponent: scan.max_exponent,
                max_degree,
            },
            schedule,
            detection,
            tol,
            escape_radius,
            seed: self.seed,
            rescaling,
            override_check: self.rescale.override_check,
        })
    }

    fn base_entry(&self) -> Result<Option<CatalogEntry>, ConfigError> {
        match (&self.family.catalog, &self.family.file) {
            (Some(_), Some(_)) => Err(invalid("give only one of catalog, file, or components")),
            (Some(name), None) => entry(name)
                .map(Some)
                .ok_or_else(|| invalid(format!("unknown catalog entry '{name}'"))),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                if let Ok(e) = CatalogEntry::from_toml(&text) {
                    return Ok(Some(e));
                }
                let file: FamilyFile =
                    toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                let metric = if file.target_dim == 1 {
                    TargetMetric::RiemannSphere
                } else {
                    TargetMetric::Euclidean(file.target_dim)
                };
                Ok(Some(CatalogEntry {
                    name: path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    disputed: false,
                    metric,
                    family: file,
                    expected: crate::catalog::Expected {
                        verdict: crate::catalog::ExpectedVerdict::NotNormal,
                        locus: String::new(),
                        locus_class: None,
                    },
                    scan: ScanSpec::default(),
                    rescaling: None,
                }))
            }
            (None, None) => Ok(None),
        }
    }

    fn rescaling(&self, base: Option<RescalingSpec>) -> Result<Option<RescalingSpec>, ConfigError> {
        let r = &self.rescale;
        let touched = r.strategy.is_some()
            || r.point.is_some()
            || r.center.is_some()
            || r.scale.is_some()
            || r.schedule.is_some()
            || !r.constants.is_empty()
            || r.grid_radius.is_some()
            || r.grid_resolution.is_some()
            || r.reference.is_some();
        let mut spec = match (base, touched) {
            (Some(b), _) => b,
            (None, false) => return Ok(None),
            (None, true) => RescalingSpec {
                strategy: "lemma".into(),
                point: Vec::new(),
                center: Vec::new(),
                scale: None,
                schedule: geometric_schedule(12),
                constants: BTreeMap::new(),
                grid_radius: 1.0,
                grid_resolution: 9,
                expected_outcome: String::new(),
                nonconstant: None,
                limit: None,
                limit_tolerance: None,
            },
        };
        if let Some(s) = &r.strategy {
            if s != &spec.strategy {
                spec.center.clear();
                spec.scale = None;
            }
            spec.strategy = s.clone();
        }
        if let Some(p) = &r.point {
            spec.point = p.clone();
        }
        if let Some(c) = &r.center {
            spec.center = c.clone();
        }
        if let Some(s) = &r.scale {
            spec.scale = Some(s.clone());
        }
        if let Some(s) = &r.schedule {
            spec.schedule = s.clone();
        }
        for (k, v) in &r.constants {
            spec.constants.insert(k.clone(), *v);
        }
        if let Some(x) = r.grid_radius {
            spec.grid_radius = x;
        }
        if let Some(x) = r.grid_resolution {
            spec.grid_resolution = x;
        }
        if let Some(x) = &r.reference {
            spec.limit = Some(x.clone());
        }
        if !["lemma", "derivative", "explicit"].contains(&spec.strategy.as_str()) {
            return Err(invalid(format!("unknown rescaling strategy '{}'", spec.strategy)));
        }
        if spec.point.is_empty() {
            return Err(invalid("rescaling needs a base point"));
        }
        check_schedule(&spec.schedule)?;
        Ok(Some(spec))
    }
}

fn check_schedule(schedule: &[u64]) -> Result<(), ConfigError> {
    if schedule.is_empty() || schedule[0] == 0 {
        return Err(invalid("schedule must be non-empty with indices >= 1"));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("schedule must be strictly increasing"));
    }
    Ok(())
}

/// Concrete inputs of a run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: Option<String>,
    pub family: HolomorphicFamily,
    pub domain: Domain,
    pub metric: TargetMetric,
    pub mode: SweepMode,
    pub scan: ScanSpec,
    pub schedule: Vec<u64>,
    pub detection: DetectionOptions,
    pub tol: f64,
    pub escape_radius: f64,
    pub seed: u64,
    pub rescaling: Option<RescalingSpec>,
    pub override_check: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_defaults_fill_in() {
        let cfg = RunConfig::from_toml("[family]\ncatalog = \"n_z1z2\"\n").unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.metric, TargetMetric::RiemannSphere);
        assert_eq!(r.schedule.len(), 15);
        assert_eq!(r.scan.resolution, 9);
        assert_eq!(r.seed, 0);
    }

    #[test]
    fn inline_family_with_domain() {
        let text = r#"
metric = "euclidean:1"
[family]
components = ["z1^n"]
dim = 2
[domain]
name = "polydisc"
radii = [1.5, 1.5]
[schedule]
indices = [1, 2, 4, 8]
"#;
        let r = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        assert_eq!(r.domain.name(), "polydisc");
        assert_eq!(r.schedule, vec![1, 2, 4, 8]);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[family]\ncatalog = \"nope\"\n",
            "[family]\ncatalog = \"n_z\"\n[schedule]\nindices = [4, 2]\n",
            "[family]\ncatalog = \"n_z\"\n[thresholds]\ntol = -1.0\n",
            "[family]\ncatalog = \"n_z\"\n[grid]\nmargin = 1.5\n",
            "metric = \"sphere\"\n[family]\ncatalog = \"n_z\"\n",
            "[family]\ncomponents = [\"z1\"]\n",
        ] {
            assert!(RunConfig::from_toml(text).unwrap().resolve().is_err(), "{text}");
        }
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.family.catalog = Some("exp_n_z1".into());
        cfg.thresholds.tol = Some(0.01);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
