//! Worked example families with their expected outcomes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::expr::{parse_with, Expr, FamilyError, FamilyFile, HolomorphicFamily, ParseContext};
use crate::geometry::{Domain, DomainSpec};
use crate::mu::{geometric_schedule, Verdict};
use crate::rescale::{RescaleError, Strategy};
use crate::targets::TargetMetric;

/// What the verdict of an entry must be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ExpectedVerdict {
    Exact(Verdict),
    /// Any verdict other than `Normal` or `Inconclusive`.
    NotNormal,
    /// `NotNormal_QuasiNormal` or `NotQuasiNormal`.
    NotWeaklyNormal,
}

impl ExpectedVerdict {
    pub fn matches(self, v: Verdict) -> bool {
        match self {
            ExpectedVerdict::Exact(e) => e == v,
            ExpectedVerdict::NotNormal => v.is_normal() == Some(false),
            ExpectedVerdict::NotWeaklyNormal => v.is_weakly_normal() == Some(false),
        }
    }
}

impl fmt::Display for ExpectedVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpectedVerdict::Exact(v) => write!(f, "{v}"),
            ExpectedVerdict::NotNormal => f.write_str("NotNormal"),
            ExpectedVerdict::NotWeaklyNormal => f.write_str("NotWeaklyNormal"),
        }
    }
}

impl FromStr for ExpectedVerdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NotNormal" => Ok(ExpectedVerdict::NotNormal),
            "NotWeaklyNormal" => Ok(ExpectedVerdict::NotWeaklyNormal),
            other => other.parse().map(ExpectedVerdict::Exact),
        }
    }
}

impl TryFrom<String> for ExpectedVerdict {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ExpectedVerdict> for String {
    fn from(v: ExpectedVerdict) -> Self {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub verdict: ExpectedVerdict,
    /// Human-readable description of the non-normality locus.
    pub locus: String,
    /// Locus class name, checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locus_class: Option<String>,
}

/// Grid and schedule used when scanning an entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub resolution: usize,
    pub margin: f64,
    /// The schedule is `j = 2^t`, `t = 0..=max_exponent`.
    pub max_exponent: u32,
    pub max_degree: usize,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            resolution: 9,
            margin: 0.2,
            max_exponent: 14,
            max_degree: 4,
        }
    }
}

impl ScanSpec {
    pub fn schedule(&self) -> Vec<u64> {
        geometric_schedule(self.max_exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescalingSpec {
    /// `explicit`, `derivative`, or `lemma`.
    pub strategy: String,
    /// Base point `p0`, as `[re, im]` pairs.
    pub point: Vec<Complex64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub center: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    pub schedule: Vec<u64>,
    /// Constants shared by the center, scale, and limit expressions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, Complex64>,
    pub grid_radius: f64,
    pub grid_resolution: usize,
    /// Expected outcome name of the convergence test.
    pub expected_outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonconstant: Option<bool>,
    /// Claimed limit, one expression per target component, in `z1..zn`
    /// standing for ξ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_tolerance: Option<f64>,
}

impl RescalingSpec {
    pub fn strategy(&self) -> Result<Strategy, RescaleError> {
        match self.strategy.as_str() {
            "lemma" => Ok(Strategy::Lemma),
            "derivative" => Ok(Strategy::Derivative),
            "explicit" => {
                let scale = self.scale.as_deref().ok_or_else(|| {
                    RescaleError::Invalid("explicit strategy needs a scale".into())
                })?;
                Strategy::explicit(&self.center, scale, &self.constants)
            }
            other => Err(RescaleError::Invalid(format!("unknown strategy '{other}'"))),
        }
    }

    /// Parsed limit expressions over `dim` variables.
    pub fn reference(&self, dim: usize) -> Result<Option<Vec<Expr>>, RescaleError> {
        let Some(limit) = &self.limit else {
            return Ok(None);
        };
        let ctx = ParseContext {
            ambient_dim: dim,
            constants: self.constants.clone(),
        };
        limit
            .iter()
            .map(|s| {
                parse_with(s, &ctx).map_err(|error| RescaleError::Parse {
                    source_text: s.clone(),
                    error,
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

/// One worked example: the family file plus the expected outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    #[serde(default)]
    pub disputed: bool,
    pub metric: TargetMetric,
    #[serde(flatten)]
    pub family: FamilyFile,
    pub expected: Expected,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescaling: Option<RescalingSpec>,
}

impl CatalogEntry {
    pub fn family(&self) -> Result<HolomorphicFamily, FamilyError> {
        HolomorphicFamily::from_file(&self.family)
    }

    pub fn domain(&self) -> Result<Domain, FamilyError> {
        Ok(self.family.domain.build(self.family.dim)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("catalog entry serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, FamilyError> {
        toml::from_str(text).map_err(|e| FamilyError::Format(e.to_string()))
    }

    pub fn file_name(&self) -> String {
        format!("{}.toml", self.name)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn family_file(description: &str, dim: usize, components: &[&str], domain: Domain) -> FamilyFile {
    FamilyFile {
        description: description.into(),
        dim,
        target_dim: components.len(),
        components: components.iter().map(|s| s.to_string()).collect(),
        constants: BTreeMap::new(),
        domain: DomainSpec::from_domain(&domain),
    }
}

fn expected(verdict: ExpectedVerdict, locus: &str, class: Option<&str>) -> Expected {
    Expected {
        verdict,
        locus: locus.into(),
        locus_class: class.map(str::to_string),
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn explicit(
    point: Vec<Complex64>,
    center: &[&str],
    scale: &str,
    schedule: Vec<u64>,
    constants: &[(&str, Complex64)],
    limit: &[&str],
    limit_tolerance: f64,
) -> RescalingSpec {
    RescalingSpec {
        strategy: "explicit".into(),
        point,
        center: strings(center),
        scale: Some(scale.into()),
        schedule,
        constants: constants.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        grid_radius: 1.0,
        grid_resolution: 9,
        expected_outcome: "ConvergesUniformly".into(),
        nonconstant: Some(true),
        limit: Some(strings(limit)),
        limit_tolerance: Some(limit_tolerance),
    }
}

/// The shipped examples, in a fixed order.
pub fn catalog_entries() -> Vec<CatalogEntry> {
    use ExpectedVerdict::*;
    let bidisc = Domain::unit_polydisc(2, 1.0);
    let c2 = Domain::full_space(2);
    let sqrt_schedule = vec![64, 256, 1024, 4096, 16384];
    vec![
        CatalogEntry {
            name: "z1_pow_n".into(),
            disputed: false,
            metric: TargetMetric::Euclidean(1),
            family: family_file("f_n(z1, z2) = z1^n on C^2", 2, &["z1^n"], c2.clone()),
            expected: expected(
                Exact(Verdict::NotQuasiNormal),
                "|z1| >= 1 inside the sample box; not normal on |z1| = 1",
                Some("HasInteriorClosure"),
            ),
            scan: ScanSpec::default(),
            rescaling: Some(explicit(
                vec![c(1.0, 0.0), c(0.0, 0.0)],
                &["exp(i*theta/n)", "0"],
                "1/n",
                vec![125, 250, 500, 1000],
                &[("theta", c(0.0, 0.0))],
                &["exp(z1 + i*theta)"],
                0.01,
            )),
        },
        CatalogEntry {
            name: "n_z".into(),
            disputed: false,
            metric: TargetMetric::Euclidean(2),
            family: family_file("f_n(z) = n z on C^2", 2, &["n*z1", "n*z2"], c2.clone()),
            expected: expected(
                Exact(Verdict::NotQuasiNormal),
                "every point, the origin included, is a mu1-point",
                Some("HasInteriorClosure"),
            ),
            scan: ScanSpec::default(),
            rescaling: Some(RescalingSpec {
                strategy: "derivative".into(),
                point: vec![c(0.0, 0.0), c(0.0, 0.0)],
                center: Vec::new(),
                scale: None,
                schedule: geometric_schedule(12),
                constants: BTreeMap::new(),
                grid_radius: 1.0,
                grid_resolution: 9,
                expected_outcome: "ConvergesUniformly".into(),
                nonconstant: Some(true),
                limit: Some(strings(&["z1", "z2"])),
                limit_tolerance: Some(1e-9),
            }),
        },
        CatalogEntry {
            name: "n_z1z2".into(),
            disputed: false,
            metric: TargetMetric::RiemannSphere,
            family: family_file(
                "f_n(z1, z2) = n z1 z2 on the unit bidisc",
                2,
                &["n*z1*z2"],
                bidisc.clone(),
            ),
            expected: expected(
                Exact(Verdict::NotNormalQuasiNormal),
                "z1*z2 = 0, an analytic set of codimension 1 (mu2-points)",
                Some("AnalyticThin"),
            ),
            scan: ScanSpec::default(),
            rescaling: None,
        },
        CatalogEntry {
            name: "n_z1z2_rescaled".into(),
            disputed: true,
            metric: TargetMetric::RiemannSphere,
            family: family_file(
                "f_n(z1, z2) = n z1 z2 on the unit bidisc, rescaled at (0, b)",
                2,
                &["n*z1*z2"],
                bidisc.clone(),
            ),
            expected: expected(NotWeaklyNormal, "z1*z2 = 0", Some("AnalyticThin")),
            scan: ScanSpec::default(),
            rescaling: Some(explicit(
                vec![c(0.0, 0.0), c(0.5, 0.0)],
                &["0", "b + 1/sqrt(n)"],
                "1/sqrt(n)",
                sqrt_schedule.clone(),
                &[("b", c(0.5, 0.0))],
                &["b*z1*z2"],
                0.05,
            )),
        },
        CatalogEntry {
            name: "exp_n_z1".into(),
            disputed: false,
            metric: TargetMetric::RiemannSphere,
            family: family_file("f_n(z1, z2) = exp(n z1) on C^2", 2, &["exp(n*z1)"], c2.clone()),
            expected: expected(
                Exact(Verdict::NotQuasiNormal),
                "Re z1 = 0, a real hypersurface (lambda-points)",
                Some("NonAnalytic"),
            ),
            scan: ScanSpec::default(),
            rescaling: None,
        },
        CatalogEntry {
            name: "exp_n_z1z2".into(),
            disputed: false,
            metric: TargetMetric::RiemannSphere,
            family: family_file(
                "f_n(z1, z2) = exp(n z1 z2) on the unit bidisc",
                2,
                &["exp(n*z1*z2)"],
                bidisc.clone(),
            ),
            expected: expected(NotNormal, "Re(z1 z2) = 0, through the origin", None),
            scan: ScanSpec::default(),
            rescaling: Some(explicit(
                vec![c(0.0, 0.0), c(0.0, 0.0)],
                &["a/sqrt(n)", "b/sqrt(n)"],
                "1/sqrt(n)",
                vec![4, 16, 64, 256, 1024, 4096],
                &[("a", c(0.5, 0.2)), ("b", c(-0.3, 0.1))],
                &["exp((a+z1)*(b+z2))"],
                1e-12,
            )),
        },
        CatalogEntry {
            name: "cos_n_z1z2".into(),
            disputed: true,
            metric: TargetMetric::RiemannSphere,
            family: family_file(
                "f_n(z1, z2) = cos(n z1 z2) on the unit bidisc, rescaled at (a, 0)",
                2,
                &["cos(n*z1*z2)"],
                bidisc.clone(),
            ),
            expected: expected(NotWeaklyNormal, "z1*z2 = 0 (as stated)", None),
            scan: ScanSpec::default(),
            rescaling: Some(explicit(
                vec![c(0.5, 0.0), c(0.0, 0.0)],
                &["a + 1/sqrt(n)", "0"],
                "1/sqrt(n)",
                sqrt_schedule,
                &[("a", c(0.5, 0.0))],
                &["cos(a*z1*z2)"],
                0.05,
            )),
        },
        CatalogEntry {
            name: "exp_n_z_disc".into(),
            disputed: false,
            metric: TargetMetric::RiemannSphere,
            family: family_file("f_n(z) = exp(n z) on the unit disc", 1, &["exp(n*z)"], Domain::UnitDisc),
            expected: expected(
                Exact(Verdict::NotQuasiNormal),
                "Re z = 0 inside the disc",
                Some("NonAnalytic"),
            ),
            scan: ScanSpec::default(),
            rescaling: None,
        },
        CatalogEntry {
            name: "z_over_n".into(),
            disputed: false,
            metric: TargetMetric::Euclidean(1),
            family: family_file("f_n(z) = z/n on the unit disc", 1, &["z/n"], Domain::UnitDisc),
            expected: expected(Exact(Verdict::Normal), "empty", Some("Empty")),
            scan: ScanSpec::default(),
            rescaling: None,
        },
    ]
}

pub fn entry(name: &str) -> Option<CatalogEntry> {
    catalog_entries().into_iter().find(|e| e.name == name)
}

pub fn entry_names() -> Vec<String> {
    catalog_entries().into_iter().map(|e| e.name).collect()
}
