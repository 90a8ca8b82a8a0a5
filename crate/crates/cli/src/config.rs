//! JSON experiment configuration.

use std::sync::Arc;

use dtnlab::assemble::{assemble, AssembledSystem};
use dtnlab::coeffs::{certify, pullback, CoefficientConfig, CoefficientSet, Diffeo, DiffeoConfig, Transport};
use dtnlab::exprlang::{parse_expr, Expr};
use dtnlab::mesh::{
    build_polygon_mesh, build_structured_square, l_shape, refine, regular_polygon,
    partition_edges, BoundaryPartition, Mesh, Point, Side,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    /// Structured unit square with `n × n` cells.
    Square { n: usize },
    /// Simple polygon meshed with target edge length `h`.
    Polygon { vertices: Vec<Point>, h: f64 },
    /// `[0,1]²` minus its upper-right quarter.
    Lshape { h: f64 },
    /// Regular polygon inscribed in a circle.
    Disk { sides: usize, radius: f64, h: f64 },
}

impl DomainSpec {
    pub fn mesh(&self) -> Result<Mesh, ConfigError> {
        let m = match self {
            DomainSpec::Square { n } => build_structured_square(*n),
            DomainSpec::Polygon { vertices, h } => build_polygon_mesh(vertices, *h),
            DomainSpec::Lshape { h } => build_polygon_mesh(&l_shape(), *h),
            DomainSpec::Disk { sides, radius, h } => build_polygon_mesh(&regular_polygon(*sides, *radius), *h),
        };
        m.map_err(|e| invalid(format!("domain: {e}")))
    }

    /// Mesh after `level` uniform refinements. Squares are rebuilt at
    /// `n·2^level` so that every level keeps the structured pattern.
    pub fn mesh_at(&self, level: usize) -> Result<Mesh, ConfigError> {
        match self {
            DomainSpec::Square { n } => DomainSpec::Square { n: n << level }.mesh(),
            _ => {
                let mut m = self.mesh()?;
                for _ in 0..level {
                    m = refine(&m);
                }
                Ok(m)
            }
        }
    }
}

/// Γ0 is the union of the named bounding-box sides, the polygon sides with
/// the given labels and the edges whose midpoint makes `predicate` positive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gamma0Spec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sides: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
}

impl Gamma0Spec {
    fn check(&self) -> Result<(), ConfigError> {
        for s in &self.sides {
            Side::parse(s).ok_or_else(|| invalid(format!("unknown side {s:?} (bottom, right, top, left)")))?;
        }
        if let Some(p) = &self.predicate {
            parse_expr(p).map_err(|e| invalid(format!("Γ0 predicate {p:?}: {e}")))?;
        }
        Ok(())
    }

    pub fn partition(&self, mesh: &Mesh) -> Result<BoundaryPartition, ConfigError> {
        self.check()?;
        let sides: Vec<_> = self
            .sides
            .iter()
            .filter_map(|s| Side::parse(s))
            .map(|s| mesh.side_predicate(s))
            .collect();
        let predicate: Option<Expr> = self.predicate.as_deref().map(parse_expr).transpose().ok().flatten();
        let failure = std::cell::RefCell::new(None);
        let part = partition_edges(mesh, |e, be| {
            let m = mesh.edge_midpoint(e);
            let by_expr = match &predicate {
                Some(p) => match p.eval(m[0], m[1]) {
                    Ok(v) => v > 0.0,
                    Err(err) => {
                        failure.borrow_mut().get_or_insert_with(|| format!("Γ0 predicate at {m:?}: {err}"));
                        false
                    }
                },
                None => false,
            };
            by_expr || self.labels.contains(&be.label) || sides.iter().any(|f| f(m))
        });
        if let Some(msg) = failure.into_inner() {
            return Err(invalid(msg));
        }
        part
            .map_err(|e| invalid(format!("Γ0: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffeoSpec {
    /// `x + (ex, ey)·sin²(πx)sin²(πy)` on the unit square.
    Bump { ex: f64, ey: f64 },
    /// `x + (ex, ey)·sin⁴(πx)sin⁴(πy)`, flat to third order at the boundary.
    BumpFlat { ex: f64, ey: f64 },
    /// Area-preserving rotation of the square's interior.
    Twist { eps: f64 },
    Custom {
        map: [dtnlab::coeffs::FieldSpec; 2],
        jacobian: [[dtnlab::coeffs::FieldSpec; 2]; 2],
    },
}

impl DiffeoSpec {
    pub fn build(&self, mesh: &Mesh) -> Result<Diffeo, ConfigError> {
        let phi = match self {
            DiffeoSpec::Bump { ex, ey } => Diffeo::square_bump(*ex, *ey),
            DiffeoSpec::BumpFlat { ex, ey } => Diffeo::square_bump_flat(*ex, *ey),
            DiffeoSpec::Twist { eps } => Diffeo::square_twist(*eps),
            DiffeoSpec::Custom { map, jacobian } => Diffeo::from_config(&DiffeoConfig {
                map: map.clone(),
                jacobian: jacobian.clone(),
            })
            .map_err(|e| invalid(format!("diffeo: {e}")))?,
        };
        phi.certify_boundary_fixed(mesh).map_err(|e| invalid(format!("diffeo: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSpec {
    pub mu_min: f64,
    pub mu_max: f64,
    pub steps: usize,
}

impl Default for CurvesSpec {
    fn default() -> Self {
        Self {
            mu_min: -50.0,
            mu_max: 50.0,
            steps: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSpec {
    pub mu: Vec<f64>,
    pub k: usize,
}

impl Default for LimitSpec {
    fn default() -> Self {
        Self {
            mu: vec![-1e2, -1e3, -1e4],
            k: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemigroupSpec {
    pub lambda: f64,
    pub lumped: bool,
    pub t: Vec<f64>,
    pub trials: usize,
    /// Larger Dirichlet part for the domination check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma0_tilde: Option<Gamma0Spec>,
}

impl Default for SemigroupSpec {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            lumped: true,
            t: vec![0.1, 1.0, 10.0],
            trials: 50,
            gamma0_tilde: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    pub diffeo: DiffeoSpec,
    pub transport: Transport,
    pub k: usize,
    pub mu: Vec<f64>,
    pub refinements: usize,
    pub lambda_count: usize,
}

impl Default for GaugeSpec {
    fn default() -> Self {
        Self {
            domain: None,
            diffeo: DiffeoSpec::BumpFlat { ex: 0.1, ey: 0.05 },
            transport: Transport::Unitary,
            k: 6,
            mu: vec![-5.0, 0.0, 5.0],
            refinements: 3,
            lambda_count: 8,
        }
    }
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub domain: DomainSpec,
    #[serde(default)]
    pub gamma0: Gamma0Spec,
    /// Coefficients of the operator under study.
    #[serde(default)]
    pub a: CoefficientConfig,
    /// Second coefficient set; its potential is compared with `a`'s in the
    /// semigroup experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<CoefficientConfig>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Values of λ for the Steklov and duality experiments; by default one
    /// in each of the first three gaps of the Dirichlet spectrum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub curves: CurvesSpec,
    #[serde(default)]
    pub limit: LimitSpec,
    #[serde(default)]
    pub semigroup: SemigroupSpec,
    #[serde(default)]
    pub gauge: GaugeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Static checks that need no mesh.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(invalid(format!("name {:?} must be nonempty and use [A-Za-z0-9._-]", self.name)));
        }
        check_domain(&self.domain)?;
        if let Some(d) = &self.gauge.domain {
            check_domain(d)?;
        }
        self.gamma0.check()?;
        if let Some(g) = &self.semigroup.gamma0_tilde {
            g.check()?;
        }
        CoefficientSet::from_config(&self.a).map_err(|e| invalid(format!("a: {e}")))?;
        if let Some(b) = &self.b {
            CoefficientSet::from_config(b).map_err(|e| invalid(format!("b: {e}")))?;
        }
        if self.k == 0 || self.gauge.k == 0 || self.limit.k == 0 {
            return Err(invalid("eigenpair counts must be positive"));
        }
        let c = &self.curves;
        if c.steps < 2 || !(c.mu_min < c.mu_max) {
            return Err(invalid("curves need steps ≥ 2 and mu_min < mu_max"));
        }
        let m = &self.limit.mu;
        if m.is_empty() || m.iter().any(|&v| !(v < 0.0)) || m.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("limit.mu must be negative and decreasing"));
        }
        if self.semigroup.t.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(invalid("semigroup times must be finite and nonnegative"));
        }
        if self.gauge.refinements > 6 {
            return Err(invalid("at most 6 gauge refinements"));
        }
        if self.gauge.lambda_count == 0 {
            return Err(invalid("gauge.lambda_count must be positive"));
        }
        if let Some(l) = &self.lambda {
            if l.is_empty() || l.iter().any(|v| !v.is_finite()) {
                return Err(invalid("lambda must be a nonempty list of finite values"));
            }
        }
        Ok(())
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn coefficients_a(&self) -> CoefficientSet {
        CoefficientSet::from_config(&self.a).expect("checked at load time")
    }

    pub fn coefficients_b(&self) -> Option<CoefficientSet> {
        self.b
            .as_ref()
            .map(|b| CoefficientSet::from_config(b).expect("checked at load time"))
    }

    /// Mesh, partition and assembled system for coefficients `c`.
    pub fn system(&self, mesh: Arc<Mesh>, gamma0: &Gamma0Spec, c: &CoefficientSet) -> Result<AssembledSystem, ConfigError> {
        let part = gamma0.partition(&mesh)?;
        assemble(mesh, &part, c).map_err(|e| invalid(format!("assembly: {e}")))
    }

    /// Gauge partner of `a` on `mesh`.
    pub fn gauge_coefficients(&self, mesh: &Mesh) -> Result<CoefficientSet, ConfigError> {
        let phi = self.gauge.diffeo.build(mesh)?;
        let b = pullback(&self.coefficients_a(), &phi, self.gauge.transport)
            .map_err(|e| invalid(format!("pullback: {e}")))?;
        certify(&b, mesh).map_err(|e| invalid(format!("pullback: {e}")))?;
        Ok(b)
    }
}

fn check_domain(d: &DomainSpec) -> Result<(), ConfigError> {
    let ok = match d {
        DomainSpec::Square { n } => *n >= 1,
        DomainSpec::Polygon { vertices, h } => vertices.len() >= 3 && *h > 0.0,
        DomainSpec::Lshape { h } => *h > 0.0,
        DomainSpec::Disk { sides, radius, h } => *sides >= 3 && *radius > 0.0 && *h > 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(invalid(format!("bad domain parameters {d:?}")))
    }
}
