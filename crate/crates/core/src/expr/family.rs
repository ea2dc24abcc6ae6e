use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::Expr;
use super::dual::DualComplex;
use super::eval::eval_expr;
use super::parser::{parse_with, ParseContext};
use super::{EvalError, ParseError};
use crate::geometry::{Domain, DomainSpec, GeometryError};

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("component {component}: {source}")]
    Parse {
        component: usize,
        #[source]
        source: ParseError,
    },
    #[error("domain: {0}")]
    Domain(#[from] GeometryError),
    #[error("invalid family: {0}")]
    Invalid(String),
    #[error("family file: {0}")]
    Format(String),
}

/// A sequence of holomorphic maps `z ↦ f_j(z) ∈ C^k` indexed by `j ≥ 1`,
/// with `j` entering the expressions through the symbol `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HolomorphicFamily {
    components: Vec<Expr>,
    ambient_dim: usize,
    description: String,
    domain: Domain,
    constants: BTreeMap<String, Complex64>,
}

impl HolomorphicFamily {
    pub fn new(
        components: Vec<Expr>,
        ambient_dim: usize,
        domain: Domain,
        description: impl Into<String>,
    ) -> Result<Self, FamilyError> {
        if ambient_dim == 0 {
            return Err(FamilyError::Invalid("ambient dimension must be at least 1".into()));
        }
        if components.is_empty() {
            return Err(FamilyError::Invalid("target dimension must be at least 1".into()));
        }
        if let Some(e) = components.iter().find(|e| e.max_var() > ambient_dim) {
            return Err(FamilyError::Invalid(format!(
                "component '{e}' uses a variable beyond z{ambient_dim}"
            )));
        }
        if domain.dim() != ambient_dim {
            return Err(FamilyError::Domain(GeometryError::DimensionMismatch {
                expected: ambient_dim,
                got: domain.dim(),
            }));
        }
        Ok(Self {
            components,
            ambient_dim,
            description: description.into(),
            domain,
            constants: BTreeMap::new(),
        })
    }

    /// Parses each component source in a context carrying `constants`.
    pub fn parse(
        sources: &[&str],
        ambient_dim: usize,
        domain: Domain,
        constants: BTreeMap<String, Complex64>,
        description: impl Into<String>,
    ) -> Result<Self, FamilyError> {
        let ctx = ParseContext {
            ambient_dim,
            constants: constants.clone(),
        };
        let components = sources
            .iter()
            .enumerate()
            .map(|(i, s)| parse_with(s, &ctx).map_err(|source| FamilyError::Parse { component: i, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let mut family = Self::new(components, ambient_dim, domain, description)?;
        family.constants = constants;
        Ok(family)
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn constants(&self) -> &BTreeMap<String, Complex64> {
        &self.constants
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self, FamilyError> {
        if domain.dim() != self.ambient_dim {
            return Err(FamilyError::Domain(GeometryError::DimensionMismatch {
                expected: self.ambient_dim,
                got: domain.dim(),
            }));
        }
        self.domain = domain;
        Ok(self)
    }

    fn check(&self, point: &[Complex64], index: u64) -> Result<(), EvalError> {
        if index == 0 {
            return Err(EvalError::InvalidIndex);
        }
        if point.len() != self.ambient_dim {
            return Err(EvalError::PointDimension {
                expected: self.ambient_dim,
                got: point.len(),
            });
        }
        Ok(())
    }

    /// `f_index(point)`, componentwise.
    pub fn eval(&self, point: &[Complex64], index: u64) -> Result<Vec<Complex64>, EvalError> {
        self.check(point, index)?;
        self.components
            .iter()
            .map(|e| eval_expr(e, point, index as f64))
            .collect()
    }

    /// Holomorphic Jacobian `∂f_a/∂z_b`, one dual-number pass per variable.
    pub fn jacobian(&self, point: &[Complex64], index: u64) -> Result<DMatrix<Complex64>, EvalError> {
        Ok(self.eval_with_jacobian(point, index)?.1)
    }

    pub fn eval_with_jacobian(
        &self,
        point: &[Complex64],
        index: u64,
    ) -> Result<(Vec<Complex64>, DMatrix<Complex64>), EvalError> {
        self.check(point, index)?;
        let k = self.target_dim();
        let n = self.ambient_dim;
        let mut jac = DMatrix::zeros(k, n);
        let mut values = vec![Complex64::new(0.0, 0.0); k];
        let mut vars: Vec<DualComplex> = point.iter().map(|p| DualComplex::constant(*p)).collect();
        for b in 0..n {
            vars[b].derivative = Complex64::new(1.0, 0.0);
            for (a, e) in self.components.iter().enumerate() {
                let d = eval_expr(e, &vars, index as f64)?;
                jac[(a, b)] = d.derivative;
                if b == 0 {
                    values[a] = d.value;
                }
            }
            vars[b].derivative = Complex64::new(0.0, 0.0);
        }
        Ok((values, jac))
    }

    pub fn to_file(&self) -> FamilyFile {
        FamilyFile {
            description: self.description.clone(),
            dim: self.ambient_dim,
            target_dim: self.target_dim(),
            components: self.components.iter().map(|e| e.to_string()).collect(),
            constants: self.constants.clone(),
            domain: DomainSpec::from_domain(&self.domain),
        }
    }

    pub fn from_file(file: &FamilyFile) -> Result<Self, FamilyError> {
        if file.components.len() != file.target_dim {
            return Err(FamilyError::Format(format!(
                "target_dim is {} but {} components are listed",
                file.target_dim,
                file.components.len()
            )));
        }
        let domain = file.domain.build(file.dim)?;
        let sources: Vec<&str> = file.components.iter().map(String::as_str).collect();
        Self::parse(
            &sources,
            file.dim,
            domain,
            file.constants.clone(),
            file.description.clone(),
        )
    }

    pub fn from_toml(text: &str) -> Result<Self, FamilyError> {
        let file: FamilyFile = toml::from_str(text).map_err(|e| FamilyError::Format(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("family file serializes")
    }
}

/// On-disk family definition.
///
/// ```toml
/// description = "f_n(z1, z2) = n z1 z2 on the unit bidisc"
/// dim = 2
/// target_dim = 1
/// components = ["n*z1*z2"]
///
/// [domain]
/// name = "polydisc"
/// radii = [1.0, 1.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    #[serde(default)]
    pub description: String,
    pub dim: usize,
    pub target_dim: usize,
    pub components: Vec<String>,
    /// Named complex constants, written as `[re, im]`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, Complex64>,
    pub domain: DomainSpec,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fam(src: &[&str], dim: usize) -> HolomorphicFamily {
        HolomorphicFamily::parse(src, dim, Domain::full_space(dim), BTreeMap::new(), "").unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = fam(&["n*z1*z2"], 2);
        assert_eq!(f.eval(&[c(0.5, 0.0), c(0.5, 0.0)], 4).unwrap(), vec![c(1.0, 0.0)]);
        let g = fam(&["exp(n*z1*z2)"], 2);
        for j in [1, 7, 1000] {
            assert_eq!(g.eval(&[c(0.0, 0.0), c(0.3, -1.2)], j).unwrap(), vec![c(1.0, 0.0)]);
        }
    }

    #[test]
    fn power_sequence_approaches_e() {
        let f = fam(&["z1^n"], 2);
        let j = 1000u64;
        let theta: f64 = 0.0;
        let z1 = Complex64::from_polar(1.0, theta / j as f64) + c(1.0 / j as f64, 0.0);
        let v = f.eval(&[z1, c(0.0, 0.0)], j).unwrap()[0];
        assert!((v - c(std::f64::consts::E, 0.0)).norm() < 0.002, "{v}");
    }

    #[test]
    fn jacobian_examples() {
        let f = fam(&["z1^2", "z1*z2"], 2);
        let j = f.jacobian(&[c(1.0, 0.0), c(2.0, 0.0)], 1).unwrap();
        assert_eq!(j[(0, 0)], c(2.0, 0.0));
        assert_eq!(j[(0, 1)], c(0.0, 0.0));
        assert_eq!(j[(1, 0)], c(2.0, 0.0));
        assert_eq!(j[(1, 1)], c(1.0, 0.0));

        let g = fam(&["n*z1", "n*z2"], 2);
        let j = g.jacobian(&[c(0.3, 0.1), c(-0.7, 2.0)], 100).unwrap();
        assert_eq!(j, DMatrix::from_diagonal_element(2, 2, c(100.0, 0.0)));
    }

    #[test]
    fn eval_errors() {
        let f = fam(&["1/z1"], 1);
        assert_eq!(f.eval(&[c(0.0, 0.0)], 1), Err(EvalError::DivisionByZero));
        let f = fam(&["log(z1)"], 1);
        assert_eq!(f.eval(&[c(0.0, 0.0)], 1), Err(EvalError::LogOfZero));
        assert_eq!(
            f.eval(&[c(-1.0, 0.0)], 1),
            Err(EvalError::BranchCut { func: "log" })
        );
        let f = fam(&["sqrt(z1)"], 1);
        assert!(f.eval(&[c(0.0, 0.0)], 1).is_ok());
        assert_eq!(
            f.jacobian(&[c(0.0, 0.0)], 1),
            Err(EvalError::NotDifferentiable { func: "sqrt" })
        );
        assert_eq!(f.eval(&[c(1.0, 0.0)], 0), Err(EvalError::InvalidIndex));
        assert!(matches!(
            f.eval(&[c(1.0, 0.0), c(0.0, 0.0)], 1),
            Err(EvalError::PointDimension { .. })
        ));
        let f = fam(&["z1^(n/2)"], 1);
        assert!(f.eval(&[c(2.0, 0.0)], 2).is_ok());
        assert!(matches!(
            f.eval(&[c(2.0, 0.0)], 3),
            Err(EvalError::NonIntegerExponent { .. })
        ));
    }

    #[test]
    fn principal_branches() {
        let f = fam(&["sqrt(z1)", "log(z1)"], 1);
        let v = f.eval(&[c(0.0, 1.0)], 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - c(s, s)).norm() < 1e-15);
        assert!((v[1] - c(0.0, std::f64::consts::FRAC_PI_2)).norm() < 1e-15);
    }

    #[test]
    fn family_file_round_trip() {
        let mut constants = BTreeMap::new();
        constants.insert("a".to_string(), c(0.3, -0.1));
        let f = HolomorphicFamily::parse(
            &["exp(n*(a + z1)*z2)"],
            2,
            Domain::unit_polydisc(2, 1.0),
            constants,
            "test family",
        )
        .unwrap();
        let text = f.to_toml();
        let back = HolomorphicFamily::from_toml(&text).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn family_file_mismatched_target_dim() {
        let text = r#"
            dim = 1
            target_dim = 2
            components = ["z1"]
            [domain]
            name = "disc"
        "#;
        assert!(matches!(
            HolomorphicFamily::from_toml(text),
            Err(FamilyError::Format(_))
        ));
    }
}
