//! The boundary semigroup generated by minus the D-t-N operator on Γ1,
//! extended by zero on Γ0, and checks of its order properties.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::assemble::{AssembledSystem, CONSTRAINED};
use crate::dtn::{dtn_matrix, DtnError, DtnMatrix};
use crate::linalg::{sym_geneig, LinalgError};
use crate::mesh::{BoundaryPartition, Mesh};
use crate::spectral::dirichlet_spectrum;

/// Default relative tolerance for order-property checks.
pub const TOL_POS: f64 = 1e-8;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SemigroupError {
    #[error(transparent)]
    Dtn(#[from] DtnError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),
    #[error("negative time t = {0}")]
    NegativeTime(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Γ0 of the second system does not contain Γ0 of the first")]
    NotNested,
}

/// Facts about the generator that the order properties depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypotheses {
    pub symmetric: bool,
    /// `λ₁ᴰ − λ`: nonnegative when the Dirichlet operator shifted by λ is accretive.
    pub dirichlet_margin: f64,
    pub a0_min: f64,
    pub first_order_max: f64,
    pub nonobtuse_mesh: bool,
    pub constant_coefficients: bool,
    pub lumped: bool,
}

impl Hypotheses {
    fn require_positivity(&self) -> Result<(), SemigroupError> {
        if !self.symmetric {
            return Err(SemigroupError::Hypothesis("coefficients are not symmetric".into()));
        }
        if !(self.dirichlet_margin >= 0.0) {
            return Err(SemigroupError::Hypothesis(format!(
                "Dirichlet operator is not accretive (λ₁ᴰ − λ = {:e})",
                self.dirichlet_margin
            )));
        }
        Ok(())
    }

    fn require_submarkov(&self) -> Result<(), SemigroupError> {
        self.require_positivity()?;
        if self.a0_min < 0.0 {
            return Err(SemigroupError::Hypothesis(format!("a0 takes the negative value {}", self.a0_min)));
        }
        if self.first_order_max != 0.0 {
            return Err(SemigroupError::Hypothesis("first-order coefficients are not zero".into()));
        }
        Ok(())
    }

    /// Failures are hard only where a discrete maximum principle is expected.
    fn strict(&self) -> bool {
        self.nonobtuse_mesh && self.lumped && self.constant_coefficients
    }
}

#[derive(Debug, Clone)]
pub struct BoundarySemigroup {
    dtn: DtnMatrix,
    lumped: bool,
    mass: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    mesh: Arc<Mesh>,
    partition: BoundaryPartition,
    /// Mesh boundary vertices, ascending.
    full_boundary: Vec<usize>,
    /// Position in the Γ1 dof list for each entry of `full_boundary`.
    slot: Vec<Option<usize>>,
    hypotheses: Hypotheses,
    principal: Vec<[[f64; 2]; 2]>,
    potential: Vec<f64>,
}

impl BoundarySemigroup {
    /// Builds `e^{−tN}` from `S(λ)` and the lumped (`lumped = true`) or
    /// consistent boundary mass.
    pub fn new(sys: &AssembledSystem, lambda: f64, lumped: bool) -> Result<Self, SemigroupError> {
        if !sys.is_symmetric() {
            return Err(SemigroupError::Hypothesis("coefficients are not symmetric".into()));
        }
        let dtn = dtn_matrix(sys, lambda)?;
        let mass = if lumped { dtn.bb_lumped_matrix() } else { dtn.bb.clone() };
        let spec = sym_geneig(&dtn.s, &mass, dtn.dim())?;
        let dirichlet_margin = if sys.interior_dofs().is_empty() {
            f64::INFINITY
        } else {
            dirichlet_spectrum(sys, 1)
                .map_err(|e| SemigroupError::Hypothesis(e.to_string()))?
                .eigenvalues[0]
                - lambda
        };
        let mesh = sys.mesh().clone();
        let full_boundary = mesh.boundary_vertices();
        let slot = full_boundary
            .iter()
            .map(|&v| {
                let d = sys.dof_map()[v];
                if d == CONSTRAINED {
                    None
                } else {
                    sys.boundary_dofs().binary_search(&d).ok()
                }
            })
            .collect();
        let hypotheses = Hypotheses {
            symmetric: true,
            dirichlet_margin,
            a0_min: sys.a0_min(),
            first_order_max: sys.first_order_max(),
            nonobtuse_mesh: mesh.quality().all_nonobtuse,
            constant_coefficients: sys.has_constant_coefficients(),
            lumped,
        };
        Ok(Self {
            eigenvalues: DVector::from_vec(spec.eigenvalues),
            eigenvectors: spec.eigenvectors,
            dtn,
            lumped,
            mass,
            partition: sys.partition().clone(),
            mesh,
            full_boundary,
            slot,
            hypotheses,
            principal: sys.coefficient_samples().iter().map(|s| s.a).collect(),
            potential: sys.coefficient_samples().iter().map(|s| s.a0).collect(),
        })
    }

    pub fn dtn(&self) -> &DtnMatrix {
        &self.dtn
    }

    pub fn is_lumped(&self) -> bool {
        self.lumped
    }

    /// Boundary mass defining the generator and the L² norm on Γ1.
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn hypotheses(&self) -> Hypotheses {
        self.hypotheses
    }

    /// Smallest eigenvalue of the generator pair, the exponential decay rate.
    pub fn w0(&self) -> f64 {
        self.eigenvalues.get(0).copied().unwrap_or(f64::INFINITY)
    }

    pub fn gamma1_dim(&self) -> usize {
        self.dtn.dim()
    }

    /// Mesh boundary vertices indexing full boundary vectors.
    pub fn full_boundary(&self) -> &[usize] {
        &self.full_boundary
    }

    pub fn restrict(&self, phi: &DVector<f64>) -> Result<DVector<f64>, SemigroupError> {
        if phi.len() != self.full_boundary.len() {
            return Err(SemigroupError::Dimension(format!(
                "boundary vector has length {}, expected {}",
                phi.len(),
                self.full_boundary.len()
            )));
        }
        let mut out = DVector::zeros(self.gamma1_dim());
        for (i, s) in self.slot.iter().enumerate() {
            if let Some(k) = s {
                out[*k] = phi[i];
            }
        }
        Ok(out)
    }

    pub fn extend_by_zero(&self, phi: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.full_boundary.len(),
            self.slot.iter().map(|s| s.map_or(0.0, |k| phi[k])),
        )
    }

    /// `T_t` as a matrix on the Γ1 dofs.
    pub fn matrix(&self, t: f64) -> Result<DMatrix<f64>, SemigroupError> {
        if !(t >= 0.0) {
            return Err(SemigroupError::NegativeTime(t));
        }
        let decay = self.eigenvalues.map(|l| (-t * l).exp());
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * decay[j]);
        Ok(scaled * (v.transpose() * &self.mass))
    }

    pub fn evolve_gamma1(&self, phi: &DVector<f64>, t: f64) -> Result<DVector<f64>, SemigroupError> {
        if !(t >= 0.0) {
            return Err(SemigroupError::NegativeTime(t));
        }
        let coeffs = self.eigenvectors.transpose() * (&self.mass * phi);
        let decay = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(self.eigenvalues.iter()).map(|(c, l)| c * (-t * l).exp()),
        );
        Ok(&self.eigenvectors * decay)
    }

    /// `T_t φ` on the full boundary: restrict to Γ1, evolve, extend by zero.
    pub fn evolve(&self, phi: &DVector<f64>, t: f64) -> Result<DVector<f64>, SemigroupError> {
        let r = self.restrict(phi)?;
        Ok(self.extend_by_zero(&self.evolve_gamma1(&r, t)?))
    }

    pub fn mass_norm(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&(&self.mass * phi)).max(0.0).sqrt()
    }

    fn same_boundary(&self, other: &Self) -> Result<(), SemigroupError> {
        if self.mesh.vertices() != other.mesh.vertices() || self.mesh.triangles() != other.mesh.triangles() {
            return Err(SemigroupError::Dimension("semigroups live on different meshes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Warn => "WARN",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub t: f64,
    pub trial: usize,
    pub min_entry: f64,
    pub max_entry: f64,
    pub violation: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub check: String,
    pub rows: Vec<CheckRow>,
}

impl Report {
    pub fn max_violation(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.violation))
    }

    pub fn min_entry(&self) -> f64 {
        self.rows.iter().fold(f64::INFINITY, |m, r| m.min(r.min_entry))
    }

    pub fn verdict(&self) -> Verdict {
        self.rows.iter().map(|r| r.verdict).max().unwrap_or(Verdict::Pass)
    }
}

pub const REPORT_CSV_HEADER: &str = "check,t,trial,min_entry,max_entry,violation,verdict";

/// Writes rows of several reports under one `check,t,trial,...` header.
pub fn write_reports_csv<'a>(
    reports: impl IntoIterator<Item = &'a Report>,
    out: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for rep in reports {
        for r in &rep.rows {
            writeln!(
                out,
                "{},{},{},{:.12e},{:.12e},{:.6e},{}",
                r.check, r.t, r.trial, r.min_entry, r.max_entry, r.violation, r.verdict
            )?;
        }
    }
    Ok(())
}

fn verdict(violation: f64, tol: f64, strict: bool) -> Verdict {
    if violation <= tol {
        Verdict::Pass
    } else if strict {
        Verdict::Fail
    } else {
        Verdict::Warn
    }
}

fn check_t_list(t_list: &[f64]) -> Result<(), SemigroupError> {
    match t_list.iter().find(|t| !(**t >= 0.0)) {
        Some(&t) => Err(SemigroupError::NegativeTime(t)),
        None => Ok(()),
    }
}

/// Nonnegative data with roughly half of the entries switched off.
fn random_nonnegative(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let v: f64 = rng.random();
        if rng.random_bool(0.5) {
            v
        } else {
            0.0
        }
    })
}

fn inputs(n: usize, trials: usize, first: DVector<f64>, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    let mut out = vec![first];
    out.extend((0..trials).map(|_| random_nonnegative(n, rng)));
    out
}

fn extremes(v: &DVector<f64>) -> (f64, f64) {
    if v.is_empty() {
        (0.0, 0.0)
    } else {
        (v.min(), v.max())
    }
}

/// `T_t φ ≥ 0` for nonnegative φ. Trial 0 checks every entry of the
/// matrix of `T_t` (all indicator inputs at once), later trials use random
/// nonnegative data; violations are relative to `‖φ‖∞`.
pub fn positivity_report(
    sg: &BoundarySemigroup,
    t_list: &[f64],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Report, SemigroupError> {
    sg.hypotheses.require_positivity()?;
    check_t_list(t_list)?;
    let strict = sg.hypotheses.strict();
    let n = sg.gamma1_dim();
    let data = inputs(n, trials, DVector::zeros(n), rng);
    let mut rows = Vec::new();
    for &t in t_list {
        let tm = sg.matrix(t)?;
        for (trial, phi) in data.iter().enumerate() {
            let (lo, hi, scale) = if trial == 0 {
                let (lo, hi) = if tm.is_empty() { (0.0, 0.0) } else { (tm.min(), tm.max()) };
                (lo, hi, 1.0)
            } else {
                let (lo, hi) = extremes(&(&tm * phi));
                (lo, hi, phi.amax().max(f64::MIN_POSITIVE))
            };
            let violation = (-lo).max(0.0) / scale;
            rows.push(CheckRow {
                check: "positivity".into(),
                t,
                trial,
                min_entry: lo,
                max_entry: hi,
                violation,
                verdict: verdict(violation, TOL_POS, strict),
            });
        }
    }
    Ok(Report {
        check: "positivity".into(),
        rows,
    })
}

/// `0 ≤ T_t φ ≤ 1` for `0 ≤ φ ≤ 1`; trial 0 is `φ = 1`.
pub fn submarkov_report(
    sg: &BoundarySemigroup,
    t_list: &[f64],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Report, SemigroupError> {
    sg.hypotheses.require_submarkov()?;
    check_t_list(t_list)?;
    let strict = sg.hypotheses.strict();
    let n = sg.gamma1_dim();
    let data = inputs(n, trials, DVector::from_element(n, 1.0), rng);
    let mut rows = Vec::new();
    for &t in t_list {
        for (trial, phi) in data.iter().enumerate() {
            let (lo, hi) = extremes(&sg.evolve_gamma1(phi, t)?);
            let violation = (-lo).max(hi - 1.0).max(0.0);
            rows.push(CheckRow {
                check: "submarkov".into(),
                t,
                trial,
                min_entry: lo,
                max_entry: hi,
                violation,
                verdict: verdict(violation, TOL_POS, strict),
            });
        }
    }
    Ok(Report {
        check: "submarkov".into(),
        rows,
    })
}

/// Entrywise comparison `0 ≤ lower φ ≤ upper φ` on full boundary vectors;
/// trial 0 is `φ = 1`.
fn compare(
    name: &str,
    upper: &BoundarySemigroup,
    lower: &BoundarySemigroup,
    t_list: &[f64],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Report, SemigroupError> {
    check_t_list(t_list)?;
    let strict = upper.hypotheses.strict() && lower.hypotheses.strict();
    let n = upper.full_boundary.len();
    let data = inputs(n, trials, DVector::from_element(n, 1.0), rng);
    let mut rows = Vec::new();
    for &t in t_list {
        for (trial, phi) in data.iter().enumerate() {
            let hi_v = upper.evolve(phi, t)?;
            let lo_v = lower.evolve(phi, t)?;
            let diff = &lo_v - &hi_v;
            let (lo, _) = extremes(&lo_v);
            let (_, excess) = extremes(&diff);
            let violation = (-lo).max(excess).max(0.0) / phi.amax().max(f64::MIN_POSITIVE);
            rows.push(CheckRow {
                check: name.into(),
                t,
                trial,
                min_entry: lo,
                max_entry: excess,
                violation,
                verdict: verdict(violation, TOL_POS, strict),
            });
        }
    }
    Ok(Report {
        check: name.into(),
        rows,
    })
}

/// `0 ≤ T̃_t φ ≤ T_t φ` where `T̃` has the larger Dirichlet part.
/// `min_entry` is the smallest entry of `T̃_t φ` and `max_entry` the
/// largest entry of `T̃_t φ − T_t φ`.
pub fn domination_report(
    sg: &BoundarySemigroup,
    sg_tilde: &BoundarySemigroup,
    t_list: &[f64],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Report, SemigroupError> {
    sg.same_boundary(sg_tilde)?;
    if !sg.partition.is_nested_in(&sg_tilde.partition) {
        return Err(SemigroupError::NotNested);
    }
    if sg.principal != sg_tilde.principal || sg.potential != sg_tilde.potential {
        return Err(SemigroupError::Hypothesis("coefficients differ".into()));
    }
    sg.hypotheses.require_positivity()?;
    sg_tilde.hypotheses.require_positivity()?;
    compare("domination", sg, sg_tilde, t_list, trials, rng)
}

/// `0 ≤ T^{b0}_t φ ≤ T^{a0}_t φ` for potentials `a0 ≤ b0`.
pub fn potential_monotonicity_report(
    sg_a0: &BoundarySemigroup,
    sg_b0: &BoundarySemigroup,
    t_list: &[f64],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Report, SemigroupError> {
    sg_a0.same_boundary(sg_b0)?;
    if sg_a0.partition != sg_b0.partition {
        return Err(SemigroupError::Hypothesis("boundary partitions differ".into()));
    }
    if sg_a0.principal != sg_b0.principal {
        return Err(SemigroupError::Hypothesis("principal coefficients differ".into()));
    }
    if sg_a0.hypotheses.first_order_max != 0.0 || sg_b0.hypotheses.first_order_max != 0.0 {
        return Err(SemigroupError::Hypothesis("first-order coefficients are not zero".into()));
    }
    if let Some(i) = (0..sg_a0.potential.len()).find(|&i| sg_b0.potential[i] < sg_a0.potential[i]) {
        return Err(SemigroupError::Hypothesis(format!(
            "potentials are not ordered at quadrature node {i} ({} > {})",
            sg_a0.potential[i], sg_b0.potential[i]
        )));
    }
    sg_a0.hypotheses.require_positivity()?;
    sg_b0.hypotheses.require_positivity()?;
    compare("potential", sg_a0, sg_b0, t_list, trials, rng)
}

/// `‖T_t φ‖ ≤ e^{−w₀t}‖φ‖` in the boundary-mass norm; violations relative to `‖φ‖`.
pub fn growth_report(
    sg: &BoundarySemigroup,
    t_list: &[f64],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Report, SemigroupError> {
    check_t_list(t_list)?;
    let n = sg.gamma1_dim();
    let data: Vec<DVector<f64>> = (0..trials.max(1))
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let mut rows = Vec::new();
    for &t in t_list {
        let bound = (-sg.w0() * t).exp();
        for (trial, phi) in data.iter().enumerate() {
            let norm = sg.mass_norm(phi);
            let out = sg.mass_norm(&sg.evolve_gamma1(phi, t)?);
            let violation = (out - bound * norm).max(0.0) / norm.max(f64::MIN_POSITIVE);
            rows.push(CheckRow {
                check: "growth".into(),
                t,
                trial,
                min_entry: out,
                max_entry: bound * norm,
                violation,
                verdict: verdict(violation, 1e-10, true),
            });
        }
    }
    Ok(Report {
        check: "growth".into(),
        rows,
    })
}

/// Operator norms of `T_t` on weighted ℓ^p spaces with the lumped boundary
/// mass as weights (`p = 2` uses the generator's own mass). Rows are
/// labelled `lp1`, `lp2`, `lpinf`; `min_entry` holds the norm and
/// `max_entry` the bound (`1` for p ∈ {1, ∞}, `e^{−w₀t}` for p = 2).
pub fn lp_contraction_report(
    sg: &BoundarySemigroup,
    p_list: &[f64],
    t_list: &[f64],
) -> Result<Report, SemigroupError> {
    sg.hypotheses.require_submarkov()?;
    check_t_list(t_list)?;
    let strict = sg.hypotheses.strict();
    let w = &sg.dtn.bb_lumped;
    let chol = sg
        .mass
        .clone()
        .cholesky()
        .ok_or(SemigroupError::Linalg(LinalgError::NotPositiveDefinite))?;
    let l = chol.l();
    let mut rows = Vec::new();
    for &t in t_list {
        let tm = sg.matrix(t)?;
        for &p in p_list {
            let (label, norm, bound) = if p == 1.0 {
                let norm = (0..tm.ncols())
                    .map(|j| (0..tm.nrows()).map(|i| w[i] * tm[(i, j)].abs()).sum::<f64>() / w[j])
                    .fold(0.0, f64::max);
                ("lp1", norm, 1.0)
            } else if p == 2.0 {
                // ‖Lᵀ T L⁻ᵀ‖₂ with mass = L Lᵀ
                let lt_t = l.transpose() * &tm;
                let x = l
                    .solve_lower_triangular(&lt_t.transpose())
                    .ok_or(SemigroupError::Linalg(LinalgError::NotPositiveDefinite))?
                    .transpose();
                let norm = if x.is_empty() { 0.0 } else { x.singular_values().max() };
                ("lp2", norm, (-sg.w0() * t).exp())
            } else if p.is_infinite() && p > 0.0 {
                let norm = tm
                    .row_iter()
                    .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                ("lpinf", norm, 1.0)
            } else {
                return Err(SemigroupError::Dimension(format!("unsupported exponent p = {p}")));
            };
            let violation = (norm - bound).max(0.0);
            rows.push(CheckRow {
                check: label.into(),
                t,
                trial: 0,
                min_entry: norm,
                max_entry: bound,
                violation,
                verdict: verdict(violation, TOL_POS, strict || p == 2.0),
            });
        }
    }
    Ok(Report {
        check: "lp".into(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemble::assemble;
    use crate::coeffs::CoefficientSet;
    use crate::mesh::{build_structured_square, partition_boundary};

    fn semigroup(gamma0: impl Fn([f64; 2]) -> bool) -> BoundarySemigroup {
        let mesh = Arc::new(build_structured_square(6).unwrap());
        let part = partition_boundary(&mesh, gamma0).unwrap();
        let sys = assemble(mesh, &part, &CoefficientSet::identity()).unwrap();
        BoundarySemigroup::new(&sys, 0.0, true).unwrap()
    }

    #[test]
    fn identity_at_time_zero_and_zero_on_gamma0() {
        let sg = semigroup(|p| p[0] < 1e-12);
        let n = sg.full_boundary().len();
        let phi = DVector::from_fn(n, |i, _| 1.0 + i as f64);
        let out = sg.evolve(&phi, 0.0).unwrap();
        let expected = sg.extend_by_zero(&sg.restrict(&phi).unwrap());
        assert!((out - &expected).amax() < 1e-12);
        let later = sg.evolve(&phi, 0.3).unwrap();
        for (i, v) in later.iter().enumerate() {
            if sg.slot[i].is_none() {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(matches!(sg.evolve(&phi, -1.0), Err(SemigroupError::NegativeTime(_))));
    }

    #[test]
    fn constants_are_invariant_without_gamma0() {
        let sg = semigroup(|_| false);
        let one = DVector::from_element(sg.full_boundary().len(), 1.0);
        for t in [0.1, 1.0, 10.0] {
            assert!((sg.evolve(&one, t).unwrap() - &one).amax() < 1e-10);
        }
    }

    #[test]
    fn csv_rows() {
        let sg = semigroup(|p| p[1] < 1e-12);
        let mut rng = rand::rng();
        let rep = positivity_report(&sg, &[0.5], 2, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_reports_csv([&rep], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(REPORT_CSV_HEADER));
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().skip(1).all(|l| l.starts_with("positivity,0.5,")));
    }
}
