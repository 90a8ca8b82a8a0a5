//! Coefficient sets `a = {a_kj, a_k, ã_k, a_0}` of the elliptic form and
//! their transport under boundary-fixing diffeomorphisms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::{parse_expr, DomainError, Expr, ParseError};
use crate::mesh::{Mesh, Point};
use crate::quadrature;

#[derive(Debug, Clone, Error)]
pub enum CoeffError {
    #[error("coefficient evaluation failed at {point:?}: {source}")]
    Domain { source: DomainError, point: Point },
    #[error("coefficients are not elliptic: smallest eigenvalue {eta} at {point:?}")]
    NonElliptic { eta: f64, point: Point },
    #[error("diffeomorphism Jacobian determinant {det} ≤ 0 at {point:?}")]
    SingularJacobian { det: f64, point: Point },
    #[error("diffeomorphism is not the identity on the boundary (defect {defect:e} at {point:?})")]
    NotBoundaryFixed { defect: f64, point: Point },
    #[error("could not invert the diffeomorphism at {point:?}")]
    InverseFailed { point: Point },
    #[error("bad coefficient expression `{text}`: {source}")]
    Parse { text: String, source: ParseError },
}

/// A scalar field on the domain.
#[derive(Debug, Clone)]
pub enum Field {
    Const(f64),
    Expr(Arc<Expr>),
}

impl Field {
    pub fn parse(text: &str) -> Result<Field, CoeffError> {
        let e = parse_expr(text).map_err(|source| CoeffError::Parse {
            text: text.to_string(),
            source,
        })?;
        Ok(match e.as_constant() {
            Some(v) => Field::Const(v),
            None => Field::Expr(Arc::new(e)),
        })
    }

    pub fn eval(&self, p: Point) -> Result<f64, CoeffError> {
        match self {
            Field::Const(v) => Ok(*v),
            Field::Expr(e) => e
                .eval(p[0], p[1])
                .map_err(|source| CoeffError::Domain { source, point: p }),
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Const(v)
    }
}

/// Coefficient values at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoefficients {
    pub a: [[f64; 2]; 2],
    pub drift: [f64; 2],
    pub codrift: [f64; 2],
    pub a0: f64,
}

impl PointCoefficients {
    /// Smallest eigenvalue of the symmetric part of `a`.
    pub fn ellipticity(&self) -> f64 {
        let p = self.a[0][0];
        let q = self.a[1][1];
        let r = 0.5 * (self.a[0][1] + self.a[1][0]);
        0.5 * (p + q) - (0.25 * (p - q) * (p - q) + r * r).sqrt()
    }

    fn is_symmetric(&self) -> bool {
        let scale = self.a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tol = 1e-12 * scale;
        (self.a[0][1] - self.a[1][0]).abs() <= tol
            && (self.drift[0] - self.codrift[0]).abs() <= tol
            && (self.drift[1] - self.codrift[1]).abs() <= tol
    }
}

#[derive(Debug, Clone)]
struct FieldSet {
    a: [[Field; 2]; 2],
    drift: [Field; 2],
    codrift: [Field; 2],
    a0: Field,
}

/// How lower-order terms follow a change of variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    /// `u ↦ u∘Φ⁻¹`: the forms agree, the L² inner product picks up `det DΦ`.
    Form,
    /// `u ↦ (det DΦ)^{-1/2} u∘Φ⁻¹`: forms and L² inner products both agree,
    /// so spectra coincide. Needs `det DΦ = 1` on the boundary for traces to agree.
    Unitary,
}

#[derive(Debug, Clone)]
enum Repr {
    Fields(FieldSet),
    Modified {
        base: Box<CoefficientSet>,
        principal_scale: f64,
        potential_shift: f64,
    },
    Pullback {
        base: Box<CoefficientSet>,
        phi: Diffeo,
        mode: Transport,
    },
}

#[derive(Debug, Clone)]
pub struct CoefficientSet {
    repr: Repr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub eta: f64,
    pub symmetric: bool,
}

impl Default for CoefficientSet {
    fn default() -> Self {
        Self::identity()
    }
}

impl CoefficientSet {
    /// `a = I`, no drift, no potential.
    pub fn identity() -> Self {
        Self::from_fields(
            [[1.0.into(), 0.0.into()], [0.0.into(), 1.0.into()]],
            [0.0.into(), 0.0.into()],
            [0.0.into(), 0.0.into()],
            0.0.into(),
        )
    }

    pub fn from_fields(a: [[Field; 2]; 2], drift: [Field; 2], codrift: [Field; 2], a0: Field) -> Self {
        Self {
            repr: Repr::Fields(FieldSet { a, drift, codrift, a0 }),
        }
    }

    /// Constant coefficients.
    pub fn constant(a: [[f64; 2]; 2], drift: [f64; 2], codrift: [f64; 2], a0: f64) -> Self {
        Self::from_fields(
            [[a[0][0].into(), a[0][1].into()], [a[1][0].into(), a[1][1].into()]],
            [drift[0].into(), drift[1].into()],
            [codrift[0].into(), codrift[1].into()],
            a0.into(),
        )
    }

    /// Multiplies the principal part by `s`.
    pub fn scaled_principal(&self, s: f64) -> Self {
        self.modified(s, 0.0)
    }

    /// Adds `shift` to the potential `a_0`.
    pub fn shifted_potential(&self, shift: f64) -> Self {
        self.modified(1.0, shift)
    }

    fn modified(&self, principal_scale: f64, potential_shift: f64) -> Self {
        Self {
            repr: Repr::Modified {
                base: Box::new(self.clone()),
                principal_scale,
                potential_shift,
            },
        }
    }

    pub fn eval(&self, p: Point) -> Result<PointCoefficients, CoeffError> {
        match &self.repr {
            Repr::Fields(f) => Ok(PointCoefficients {
                a: [
                    [f.a[0][0].eval(p)?, f.a[0][1].eval(p)?],
                    [f.a[1][0].eval(p)?, f.a[1][1].eval(p)?],
                ],
                drift: [f.drift[0].eval(p)?, f.drift[1].eval(p)?],
                codrift: [f.codrift[0].eval(p)?, f.codrift[1].eval(p)?],
                a0: f.a0.eval(p)?,
            }),
            Repr::Modified {
                base,
                principal_scale,
                potential_shift,
            } => {
                let mut c = base.eval(p)?;
                for row in &mut c.a {
                    for v in row {
                        *v *= principal_scale;
                    }
                }
                c.a0 += potential_shift;
                Ok(c)
            }
            Repr::Pullback { base, phi, mode } => transport_at(base, phi, *mode, p),
        }
    }

    pub fn from_config(cfg: &CoefficientConfig) -> Result<Self, CoeffError> {
        let f = |s: &FieldSpec| s.to_field();
        let a = match &cfg.a {
            Some(m) => [[f(&m[0][0])?, f(&m[0][1])?], [f(&m[1][0])?, f(&m[1][1])?]],
            None => [[1.0.into(), 0.0.into()], [0.0.into(), 1.0.into()]],
        };
        let drift = match &cfg.drift {
            Some(d) => [f(&d[0])?, f(&d[1])?],
            None => [0.0.into(), 0.0.into()],
        };
        let codrift = match &cfg.codrift {
            Some(d) => [f(&d[0])?, f(&d[1])?],
            None => drift.clone(),
        };
        let a0 = match &cfg.a0 {
            Some(v) => f(v)?,
            None => 0.0.into(),
        };
        Ok(Self::from_fields(a, drift, codrift, a0))
    }
}

/// JSON coefficient block. Omitted entries default to `a = I`, zero drift,
/// `codrift = drift` and `a0 = 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<[[FieldSpec; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<[FieldSpec; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codrift: Option<[FieldSpec; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Number(f64),
    Text(String),
}

impl FieldSpec {
    pub fn to_field(&self) -> Result<Field, CoeffError> {
        match self {
            FieldSpec::Number(v) => Ok(Field::Const(*v)),
            FieldSpec::Text(s) => Field::parse(s),
        }
    }
}

/// Samples the coefficients at every quadrature node of `mesh` and returns
/// the ellipticity constant and the symmetry flag.
pub fn certify(c: &CoefficientSet, mesh: &Mesh) -> Result<Certificate, CoeffError> {
    let mut eta = f64::INFINITY;
    let mut worst = [0.0, 0.0];
    let mut symmetric = true;
    for t in 0..mesh.triangles().len() {
        for (p, _) in quadrature::triangle(mesh.triangle_points(t)) {
            let v = c.eval(p)?;
            let e = v.ellipticity();
            if e < eta {
                eta = e;
                worst = p;
            }
            symmetric &= v.is_symmetric();
        }
    }
    if !(eta > 0.0) {
        return Err(CoeffError::NonElliptic { eta, point: worst });
    }
    Ok(Certificate { eta, symmetric })
}

/// A change of variables `Φ` of the domain, given by its components and
/// Jacobian `DΦ[i][j] = ∂Φ_i/∂x_j`.
#[derive(Debug, Clone)]
pub struct Diffeo {
    map: [Field; 2],
    jacobian: [[Field; 2]; 2],
    boundary_fixed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffeoConfig {
    pub map: [FieldSpec; 2],
    pub jacobian: [[FieldSpec; 2]; 2],
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Number(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffeoReport {
    pub min_det: f64,
    pub max_det: f64,
    pub boundary_defect: f64,
    /// Largest boundary deviation of `det DΦ` from 1.
    pub boundary_det_defect: f64,
}

impl Diffeo {
    pub fn new(map: [Field; 2], jacobian: [[Field; 2]; 2]) -> Self {
        Self {
            map,
            jacobian,
            boundary_fixed: false,
        }
    }

    pub fn identity() -> Self {
        Self {
            map: [Field::parse("x").unwrap(), Field::parse("y").unwrap()],
            jacobian: [[1.0.into(), 0.0.into()], [0.0.into(), 1.0.into()]],
            boundary_fixed: true,
        }
    }

    pub fn from_config(cfg: &DiffeoConfig) -> Result<Self, CoeffError> {
        let f = |s: &FieldSpec| s.to_field();
        Ok(Self::new(
            [f(&cfg.map[0])?, f(&cfg.map[1])?],
            [
                [f(&cfg.jacobian[0][0])?, f(&cfg.jacobian[0][1])?],
                [f(&cfg.jacobian[1][0])?, f(&cfg.jacobian[1][1])?],
            ],
        ))
    }

    fn from_text(map: [String; 2], jac: [[String; 2]; 2]) -> Self {
        let f = |s: &str| Field::parse(s).expect("built-in diffeomorphism expression");
        Self::new(
            [f(&map[0]), f(&map[1])],
            [[f(&jac[0][0]), f(&jac[0][1])], [f(&jac[1][0]), f(&jac[1][1])]],
        )
    }

    /// Displacement `(ex, ey)·g` of the unit square with
    /// `g = sin²(πx) sin²(πy)`. `DΦ = I` on the boundary, `det DΦ` varies inside.
    /// Invertible for `|ex| + |ey| < 1/π`.
    pub fn square_bump(ex: f64, ey: f64) -> Self {
        Self::sine_bump(ex, ey, 2)
    }

    /// Like [`Diffeo::square_bump`] with `g = sin⁴(πx) sin⁴(πy)`, so that
    /// `DΦ − I` and `∇ det DΦ` also vanish on the boundary.
    /// Invertible for `|ex| + |ey| < 0.24`.
    pub fn square_bump_flat(ex: f64, ey: f64) -> Self {
        Self::sine_bump(ex, ey, 4)
    }

    fn sine_bump(ex: f64, ey: f64, k: u32) -> Self {
        let g = format!("(sin(pi*x)^{k}*sin(pi*y)^{k})");
        let gx = format!("({k}*pi*sin(pi*x)^{}*cos(pi*x)*sin(pi*y)^{k})", k - 1);
        let gy = format!("({k}*pi*sin(pi*x)^{k}*sin(pi*y)^{}*cos(pi*y))", k - 1);
        Self::from_text(
            [format!("x + {ex:?}*{g}"), format!("y + {ey:?}*{g}")],
            [
                [format!("1 + {ex:?}*{gx}"), format!("{ex:?}*{gy}")],
                [format!("{ey:?}*{gx}"), format!("1 + {ey:?}*{gy}")],
            ],
        )
    }

    /// Area-preserving twist of the unit square: points at distance `r` from
    /// the centre rotate by `eps·(1 − 4r²)³` inside the inscribed disk.
    pub fn square_twist(eps: f64) -> Self {
        let qx = "(x - 0.5)";
        let qy = "(y - 0.5)";
        let s = format!("max(0, 1 - 4*({qx}^2 + {qy}^2))");
        let w = format!("({eps:?}*{s}^3)");
        let c = format!("cos({w})");
        let sn = format!("sin({w})");
        // r⊥ = R(ω) J q and ∇ω = −24 ε s² q
        let rx = format!("(-{qy}*{c} - {qx}*{sn})");
        let ry = format!("(-{qy}*{sn} + {qx}*{c})");
        let k = format!("(-24*{eps:?}*{s}^2)");
        Self::from_text(
            [
                format!("0.5 + {c}*{qx} - {sn}*{qy}"),
                format!("0.5 + {sn}*{qx} + {c}*{qy}"),
            ],
            [
                [format!("{c} + {rx}*{k}*{qx}"), format!("-{sn} + {rx}*{k}*{qy}")],
                [format!("{sn} + {ry}*{k}*{qx}"), format!("{c} + {ry}*{k}*{qy}")],
            ],
        )
    }

    pub fn is_boundary_fixed(&self) -> bool {
        self.boundary_fixed
    }

    pub fn apply(&self, p: Point) -> Result<Point, CoeffError> {
        Ok([self.map[0].eval(p)?, self.map[1].eval(p)?])
    }

    pub fn jacobian(&self, p: Point) -> Result<[[f64; 2]; 2], CoeffError> {
        let j = &self.jacobian;
        Ok([
            [j[0][0].eval(p)?, j[0][1].eval(p)?],
            [j[1][0].eval(p)?, j[1][1].eval(p)?],
        ])
    }

    pub fn det(&self, p: Point) -> Result<f64, CoeffError> {
        let f = self.jacobian(p)?;
        Ok(f[0][0] * f[1][1] - f[0][1] * f[1][0])
    }

    /// Newton iteration for `Φ(x) = y`, started at `y`.
    pub fn inverse(&self, y: Point) -> Result<Point, CoeffError> {
        let mut x = y;
        let tol = 1e-14 * (1.0 + y[0].abs().max(y[1].abs()));
        for _ in 0..60 {
            let fx = self.apply(x)?;
            let r = [fx[0] - y[0], fx[1] - y[1]];
            if r[0].abs().max(r[1].abs()) <= tol {
                return Ok(x);
            }
            let f = self.jacobian(x)?;
            let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
            if !(det > 0.0) {
                return Err(CoeffError::SingularJacobian { det, point: x });
            }
            x[0] -= (f[1][1] * r[0] - f[0][1] * r[1]) / det;
            x[1] -= (-f[1][0] * r[0] + f[0][0] * r[1]) / det;
        }
        Err(CoeffError::InverseFailed { point: y })
    }

    /// Samples `det DΦ` at the quadrature nodes and the boundary behaviour at
    /// two Gauss points per boundary edge (plus the edge endpoints).
    pub fn inspect(&self, mesh: &Mesh) -> Result<DiffeoReport, CoeffError> {
        let mut report = DiffeoReport {
            min_det: f64::INFINITY,
            max_det: f64::NEG_INFINITY,
            boundary_defect: 0.0,
            boundary_det_defect: 0.0,
        };
        for t in 0..mesh.triangles().len() {
            for (p, _) in quadrature::triangle(mesh.triangle_points(t)) {
                let d = self.det(p)?;
                report.min_det = report.min_det.min(d);
                report.max_det = report.max_det.max(d);
            }
        }
        for e in 0..mesh.boundary_edges().len() {
            let [a, b] = mesh.boundary_edges()[e].vertices;
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let mut pts: Vec<Point> = quadrature::edge(pa, pb).iter().map(|q| q.0).collect();
            pts.push(pa);
            for p in pts {
                let q = self.apply(p)?;
                report.boundary_defect = report.boundary_defect.max((q[0] - p[0]).abs().max((q[1] - p[1]).abs()));
                report.boundary_det_defect = report.boundary_det_defect.max((self.det(p)? - 1.0).abs());
            }
        }
        Ok(report)
    }

    /// Verifies `det DΦ > 0` and `Φ = id` on the boundary of `mesh`, then
    /// marks the map boundary-fixed.
    pub fn certify_boundary_fixed(mut self, mesh: &Mesh) -> Result<Self, CoeffError> {
        let r = self.inspect(mesh)?;
        if !(r.min_det > 0.0) {
            return Err(CoeffError::SingularJacobian {
                det: r.min_det,
                point: [f64::NAN, f64::NAN],
            });
        }
        if r.boundary_defect > 1e-12 {
            return Err(CoeffError::NotBoundaryFixed {
                defect: r.boundary_defect,
                point: [f64::NAN, f64::NAN],
            });
        }
        self.boundary_fixed = true;
        Ok(self)
    }
}

/// Coefficients of the operator transported by `phi`. Evaluation at `y`
/// inverts `Φ` numerically.
pub fn pullback(c: &CoefficientSet, phi: &Diffeo, mode: Transport) -> Result<CoefficientSet, CoeffError> {
    if !phi.boundary_fixed {
        return Err(CoeffError::NotBoundaryFixed {
            defect: f64::NAN,
            point: [f64::NAN, f64::NAN],
        });
    }
    Ok(CoefficientSet {
        repr: Repr::Pullback {
            base: Box::new(c.clone()),
            phi: phi.clone(),
            mode,
        },
    })
}

fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn transport_at(base: &CoefficientSet, phi: &Diffeo, mode: Transport, y: Point) -> Result<PointCoefficients, CoeffError> {
    let x = phi.inverse(y)?;
    let c = base.eval(x)?;
    let f = phi.jacobian(x)?;
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    if !(det > 0.0) {
        return Err(CoeffError::SingularJacobian { det, point: x });
    }
    // F a Fᵀ
    let mut fa_ft = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s += f[i][k] * c.a[k][l] * f[j][l];
                }
            }
            fa_ft[i][j] = s;
        }
    }
    let fd = mat_vec(&f, c.drift);
    let fdt = mat_vec(&f, c.codrift);
    match mode {
        Transport::Form => Ok(PointCoefficients {
            a: fa_ft.map(|r| r.map(|v| v / det)),
            drift: fd.map(|v| v / det),
            codrift: fdt.map(|v| v / det),
            a0: c.a0 / det,
        }),
        Transport::Unitary => {
            // σ = det^{1/2} as a function of y, g = ∇_y σ = F^{-T} ∇_x det / (2σ)
            let grad_det = det_gradient(phi, x)?;
            let sigma = det.sqrt();
            let finv_t = [[f[1][1] / det, -f[1][0] / det], [-f[0][1] / det, f[0][0] / det]];
            let gx = [grad_det[0] / (2.0 * sigma), grad_det[1] / (2.0 * sigma)];
            let g = mat_vec(&finv_t, gx);
            let p = fa_ft.map(|r| r.map(|v| v / det));
            let pg = mat_vec(&p, g);
            let ptg = [p[0][0] * g[0] + p[1][0] * g[1], p[0][1] * g[0] + p[1][1] * g[1]];
            let q_plus = [(fd[0] + fdt[0]) / det, (fd[1] + fdt[1]) / det];
            let g_pg = g[0] * pg[0] + g[1] * pg[1];
            Ok(PointCoefficients {
                a: fa_ft,
                drift: [sigma * pg[0] + fd[0], sigma * pg[1] + fd[1]],
                codrift: [sigma * ptg[0] + fdt[0], sigma * ptg[1] + fdt[1]],
                a0: g_pg + sigma * (q_plus[0] * g[0] + q_plus[1] * g[1]) + c.a0,
            })
        }
    }
}

fn det_gradient(phi: &Diffeo, x: Point) -> Result<[f64; 2], CoeffError> {
    const STEP: f64 = 1e-5;
    let mut g = [0.0; 2];
    for (k, gk) in g.iter_mut().enumerate() {
        let mut xp = x;
        let mut xm = x;
        xp[k] += STEP;
        xm[k] -= STEP;
        *gk = (phi.det(xp)? - phi.det(xm)?) / (2.0 * STEP);
    }
    Ok(g)
}
