use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::expr::{parse_with, Expr, ParseContext};

use super::GeometryError;

/// A bounded region given by `|g(z)| < 1` for every defining expression `g`,
/// intersected with an axis-aligned box in real coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericDomain {
    pub dim: usize,
    pub defining: Vec<Expr>,
    /// `(lo, hi)` per real coordinate, ordered `Re z1, Im z1, Re z2, ...`.
    pub bounds: Vec<(f64, f64)>,
}

/// Source domains in C^n.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    UnitDisc,
    Polydisc {
        center: Vec<Complex64>,
        radii: Vec<f64>,
    },
    Ball {
        center: Vec<Complex64>,
        radius: f64,
    },
    /// All of C^n. `half_width` only sets the box used for sampling grids.
    FullSpace { dim: usize, half_width: f64 },
    GenericBounded(GenericDomain),
}

pub const DEFAULT_FULL_SPACE_HALF_WIDTH: f64 = 2.0;

impl Domain {
    pub fn polydisc(center: Vec<Complex64>, radii: Vec<f64>) -> Result<Self, GeometryError> {
        if center.is_empty() || center.len() != radii.len() {
            return Err(GeometryError::InvalidDomain(
                "polydisc center and radii must have the same nonzero length".into(),
            ));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(GeometryError::InvalidDomain("polydisc radii must be positive".into()));
        }
        Ok(Domain::Polydisc { center, radii })
    }

    /// Polydisc centred at the origin with equal radii.
    pub fn unit_polydisc(dim: usize, radius: f64) -> Self {
        Domain::Polydisc {
            center: vec![Complex64::new(0.0, 0.0); dim],
            radii: vec![radius; dim],
        }
    }

    pub fn ball(center: Vec<Complex64>, radius: f64) -> Result<Self, GeometryError> {
        if center.is_empty() {
            return Err(GeometryError::InvalidDomain("ball center must be nonempty".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::InvalidDomain("ball radius must be positive".into()));
        }
        Ok(Domain::Ball { center, radius })
    }

    pub fn full_space(dim: usize) -> Self {
        Domain::FullSpace {
            dim,
            half_width: DEFAULT_FULL_SPACE_HALF_WIDTH,
        }
    }

    pub fn generic(
        dim: usize,
        defining: Vec<Expr>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self, GeometryError> {
        if bounds.len() != 2 * dim {
            return Err(GeometryError::InvalidDomain(format!(
                "generic domain needs {} real bounds, got {}",
                2 * dim,
                bounds.len()
            )));
        }
        if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(GeometryError::InvalidDomain("empty bounding box".into()));
        }
        if defining.iter().any(|e| e.max_var() > dim || e.depends_on_param()) {
            return Err(GeometryError::InvalidDomain(
                "defining expressions must use z1..zn only".into(),
            ));
        }
        Ok(Domain::GenericBounded(GenericDomain {
            dim,
            defining,
            bounds,
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::UnitDisc => 1,
            Domain::Polydisc { center, .. } | Domain::Ball { center, .. } => center.len(),
            Domain::FullSpace { dim, .. } => *dim,
            Domain::GenericBounded(g) => g.dim,
        }
    }

    pub fn is_hyperbolic(&self) -> bool {
        !matches!(self, Domain::FullSpace { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::UnitDisc => "disc",
            Domain::Polydisc { .. } => "polydisc",
            Domain::Ball { .. } => "ball",
            Domain::FullSpace { .. } => "full",
            Domain::GenericBounded(_) => "generic",
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, z: &[Complex64]) -> bool {
        if z.len() != self.dim() || z.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self {
            Domain::UnitDisc => z[0].norm_sqr() < 1.0,
            Domain::Polydisc { center, radii } => z
                .iter()
                .zip(center)
                .zip(radii)
                .all(|((zi, ci), r)| (zi - ci).norm() < *r),
            Domain::Ball { center, radius } => {
                let s: f64 = z.iter().zip(center).map(|(a, b)| (a - b).norm_sqr()).sum();
                s < radius * radius
            }
            Domain::FullSpace { .. } => true,
            Domain::GenericBounded(g) => {
                let in_box = z.iter().enumerate().all(|(a, c)| {
                    let (lo_r, hi_r) = g.bounds[2 * a];
                    let (lo_i, hi_i) = g.bounds[2 * a + 1];
                    c.re > lo_r && c.re < hi_r && c.im > lo_i && c.im < hi_i
                });
                in_box
                    && g.defining.iter().all(|e| {
                        crate::expr::eval_scalar(e, z, 1.0).is_ok_and(|v| v.norm() < 1.0)
                    })
            }
        }
    }

    /// Per-real-axis `(center, half-width)` of the box the grid is laid on,
    /// before shrinking by the margin.
    fn sampling_box(&self) -> Vec<(f64, f64)> {
        match self {
            Domain::UnitDisc => vec![(0.0, 1.0), (0.0, 1.0)],
            Domain::Polydisc { center, radii } => center
                .iter()
                .zip(radii)
                .flat_map(|(c, r)| [(c.re, *r), (c.im, *r)])
                .collect(),
            Domain::Ball { center, radius } => center
                .iter()
                .flat_map(|c| [(c.re, *radius), (c.im, *radius)])
                .collect(),
            Domain::FullSpace { dim, half_width } => vec![(0.0, *half_width); 2 * dim],
            Domain::GenericBounded(g) => g
                .bounds
                .iter()
                .map(|(lo, hi)| ((lo + hi) / 2.0, (hi - lo) / 2.0))
                .collect(),
        }
    }

    /// Lattice of interior points, row-major over `Re z1, Im z1, Re z2, ...`
    /// (last axis fastest).
    ///
    /// Each real axis gets `resolution` equally spaced values spanning the
    /// domain's box shrunk by `1 - margin` about its center; points outside
    /// the domain are dropped. Full space ignores the margin and uses its
    /// sampling box as is.
    pub fn sample_grid(&self, resolution: usize, margin: f64) -> Result<Grid, GeometryError> {
        if resolution < 2 {
            return Err(GeometryError::InvalidGrid("resolution must be at least 2".into()));
        }
        if !(margin > 0.0 && margin < 1.0) {
            return Err(GeometryError::InvalidGrid("margin must lie in (0, 1)".into()));
        }
        let shrink = match self {
            Domain::FullSpace { .. } => 1.0,
            _ => 1.0 - margin,
        };
        let axes: Vec<Vec<f64>> = self
            .sampling_box()
            .into_iter()
            .map(|(c, h)| {
                let h = h * shrink;
                (0..resolution)
                    .map(|k| c - h + 2.0 * h * k as f64 / (resolution - 1) as f64)
                    .collect()
            })
            .collect();
        Ok(Grid::lattice(axes, |p| self.contains(p)))
    }
}

/// Sample points on a lattice, with each point's lattice index kept so that
/// neighbourhood structure is recoverable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub axes: Vec<Vec<f64>>,
    pub points: Vec<Vec<Complex64>>,
    pub cells: Vec<Vec<usize>>,
}

impl Grid {
    /// Builds the full lattice over `axes` (one list of values per real
    /// coordinate) and keeps the points accepted by `keep`.
    pub fn lattice(axes: Vec<Vec<f64>>, keep: impl Fn(&[Complex64]) -> bool) -> Self {
        let real_dim = axes.len();
        let dim = real_dim / 2;
        let mut points = Vec::new();
        let mut cells = Vec::new();
        let mut index = vec![0usize; real_dim];
        if axes.iter().any(|a| a.is_empty()) {
            return Self {
                dim,
                axes,
                points,
                cells,
            };
        }
        loop {
            let p: Vec<Complex64> = (0..dim)
                .map(|a| Complex64::new(axes[2 * a][index[2 * a]], axes[2 * a + 1][index[2 * a + 1]]))
                .collect();
            if keep(&p) {
                points.push(p);
                cells.push(index.clone());
            }
            // odometer increment, last axis fastest
            let mut axis = real_dim;
            loop {
                if axis == 0 {
                    return Self {
                        dim,
                        axes,
                        points,
                        cells,
                    };
                }
                axis -= 1;
                index[axis] += 1;
                if index[axis] < axes[axis].len() {
                    break;
                }
                index[axis] = 0;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest lattice step over the real axes.
    pub fn spacing(&self) -> f64 {
        self.axes
            .iter()
            .filter(|a| a.len() > 1)
            .map(|a| (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64)
            .fold(0.0, f64::max)
    }
}

/// Serialized form of a domain inside family and config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<Complex64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Half-width of the sampling box for full space.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defining: Option<Vec<String>>,
}

impl DomainSpec {
    /// Parses the short forms `disc`, `polydisc[:r]`, `ball[:r]`, and
    /// `full[:half_width]`.
    pub fn parse_short(src: &str) -> Result<Self, GeometryError> {
        let (name, arg) = match src.split_once(':') {
            Some((n, a)) => {
                let v: f64 = a
                    .trim()
                    .parse()
                    .map_err(|_| GeometryError::InvalidDomain(format!("bad parameter in '{src}'")))?;
                (n.trim(), Some(v))
            }
            None => (src.trim(), None),
        };
        let mut spec = DomainSpec {
            name: name.to_string(),
            ..Default::default()
        };
        match name {
            "disc" | "unit_disc" if arg.is_none() => {}
            "polydisc" | "ball" => spec.radius = arg,
            "full" | "full_space" => spec.half_width = arg,
            _ => return Err(GeometryError::InvalidDomain(format!("unknown domain '{src}'"))),
        }
        Ok(spec)
    }

    pub fn build(&self, ambient_dim: usize) -> Result<Domain, GeometryError> {
        let dim = self.dim.unwrap_or(ambient_dim);
        if dim != ambient_dim {
            return Err(GeometryError::DimensionMismatch {
                expected: ambient_dim,
                got: dim,
            });
        }
        let zero = || vec![Complex64::new(0.0, 0.0); dim];
        let domain = match self.name.as_str() {
            "disc" | "unit_disc" => {
                if dim != 1 {
                    return Err(GeometryError::DimensionMismatch { expected: 1, got: dim });
                }
                Domain::UnitDisc
            }
            "polydisc" => Domain::polydisc(
                self.center.clone().unwrap_or_else(zero),
                self.radii.clone().unwrap_or_else(|| vec![self.radius.unwrap_or(1.0); dim]),
            )?,
            "ball" => Domain::ball(
                self.center.clone().unwrap_or_else(zero),
                self.radius.unwrap_or(1.0),
            )?,
            "full" | "full_space" => Domain::FullSpace {
                dim,
                half_width: self.half_width.unwrap_or(DEFAULT_FULL_SPACE_HALF_WIDTH),
            },
            "generic" => {
                let ctx = ParseContext::new(dim);
                let defining = self
                    .defining
                    .iter()
                    .flatten()
                    .map(|s| parse_with(s, &ctx))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| GeometryError::InvalidDomain(e.to_string()))?;
                let bounds = self.bounds.clone().ok_or_else(|| {
                    GeometryError::InvalidDomain("generic domain needs bounds".into())
                })?;
                Domain::generic(dim, defining, bounds)?
            }
            other => return Err(GeometryError::InvalidDomain(format!("unknown domain '{other}'"))),
        };
        if domain.dim() != ambient_dim {
            return Err(GeometryError::DimensionMismatch {
                expected: ambient_dim,
                got: domain.dim(),
            });
        }
        Ok(domain)
    }

    pub fn from_domain(domain: &Domain) -> Self {
        let mut spec = DomainSpec {
            name: domain.name().to_string(),
            ..Default::default()
        };
        match domain {
            Domain::UnitDisc => {}
            Domain::Polydisc { center, radii } => {
                spec.center = Some(center.clone());
                spec.radii = Some(radii.clone());
            }
            Domain::Ball { center, radius } => {
                spec.center = Some(center.clone());
                spec.radius = Some(*radius);
            }
            Domain::FullSpace { dim, half_width } => {
                spec.dim = Some(*dim);
                spec.half_width = Some(*half_width);
            }
            Domain::GenericBounded(g) => {
                spec.dim = Some(g.dim);
                spec.bounds = Some(g.bounds.clone());
                spec.defining = Some(g.defining.iter().map(|e| e.to_string()).collect());
            }
        }
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_disc_grid_with_half_margin() {
        let g = Domain::UnitDisc.sample_grid(3, 0.5).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.points.iter().all(|p| p[0].re.abs() <= 0.5 && p[0].im.abs() <= 0.5));
        assert_eq!(g.points[0][0], Complex64::new(-0.5, -0.5));
        assert_eq!(g.points[1][0], Complex64::new(-0.5, 0.0));
    }

    #[test]
    fn polydisc_grid_points_are_interior() {
        let d = Domain::unit_polydisc(2, 1.0);
        for res in [3, 5, 8] {
            let g = d.sample_grid(res, 0.1).unwrap();
            assert!(!g.is_empty());
            assert!(g.points.iter().all(|p| d.contains(p)));
        }
    }

    #[test]
    fn full_space_box_lattice() {
        let g = Domain::full_space(2).sample_grid(4, 0.5).unwrap();
        assert_eq!(g.len(), 256);
        assert!(g.points.iter().flatten().all(|c| c.re.abs() <= 2.0 && c.im.abs() <= 2.0));
        assert!((g.spacing() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn disc_filter_drops_corners() {
        let g = Domain::UnitDisc.sample_grid(5, 0.01).unwrap();
        assert!(g.len() < 25);
        assert!(g.points.iter().all(|p| p[0].norm() < 1.0));
    }

    #[test]
    fn bad_grid_parameters() {
        assert!(Domain::UnitDisc.sample_grid(1, 0.5).is_err());
        assert!(Domain::UnitDisc.sample_grid(3, 0.0).is_err());
        assert!(Domain::UnitDisc.sample_grid(3, 1.0).is_err());
    }

    #[test]
    fn hyperbolicity_flags() {
        assert!(Domain::UnitDisc.is_hyperbolic());
        assert!(Domain::unit_polydisc(2, 1.0).is_hyperbolic());
        assert!(Domain::ball(vec![Complex64::new(0.0, 0.0); 2], 1.0).unwrap().is_hyperbolic());
        assert!(!Domain::full_space(2).is_hyperbolic());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Domain::polydisc(vec![Complex64::new(0.0, 0.0)], vec![0.0]).is_err());
        assert!(Domain::polydisc(vec![Complex64::new(0.0, 0.0)], vec![1.0, 1.0]).is_err());
        assert!(Domain::ball(vec![Complex64::new(0.0, 0.0)], -1.0).is_err());
        assert!(Domain::generic(1, vec![], vec![(1.0, 0.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn generic_domain_membership() {
        // the unit disc described implicitly
        let g = Domain::generic(
            1,
            vec![crate::expr::parse("z1", 1).unwrap()],
            vec![(-1.0, 1.0), (-1.0, 1.0)],
        )
        .unwrap();
        assert!(g.contains(&[Complex64::new(0.5, 0.5)]));
        assert!(!g.contains(&[Complex64::new(0.8, 0.8)]));
    }

    #[test]
    fn short_domain_forms() {
        let b = DomainSpec::parse_short("ball:2").unwrap().build(2).unwrap();
        assert_eq!(b, Domain::ball(vec![Complex64::new(0.0, 0.0); 2], 2.0).unwrap());
        assert_eq!(DomainSpec::parse_short("disc").unwrap().build(1).unwrap(), Domain::UnitDisc);
        assert!(DomainSpec::parse_short("polydisc:x").is_err());
        assert!(DomainSpec::parse_short("annulus").is_err());
    }

    #[test]
    fn spec_round_trip() {
        let domains = [
            Domain::UnitDisc,
            Domain::unit_polydisc(2, 1.5),
            Domain::ball(vec![Complex64::new(0.1, 0.0), Complex64::new(0.0, 0.2)], 2.0).unwrap(),
            Domain::full_space(3),
        ];
        for d in domains {
            let spec = DomainSpec::from_domain(&d);
            assert_eq!(spec.build(d.dim()).unwrap(), d);
        }
    }
}
