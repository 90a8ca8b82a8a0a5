//! The partial Dirichlet-to-Neumann matrix as a Schur complement of
//! `A − λM` over the interior dofs, with harmonic extension and the
//! splitting of a function into its harmonic part and an interior part.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

use crate::assemble::AssembledSystem;
use crate::linalg::{self, max_abs, submatrix, subvector, Factorization, LinalgError};

/// Interior blocks with a condition estimate above this are treated as
/// singular, i.e. λ is numerically a Dirichlet eigenvalue.
pub const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DtnError {
    #[error("λ = {lambda} is numerically in the Dirichlet spectrum (condition estimate {cond:e})")]
    NearDirichletSpectrum { lambda: f64, cond: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct HarmonicExtensionResult {
    /// Full free-dof vector.
    pub u: DVector<f64>,
    /// Largest interior row of `(A − λM)u`.
    pub residual_interior: f64,
}

#[derive(Debug, Clone)]
pub struct DtnMatrix {
    pub s: DMatrix<f64>,
    /// Consistent boundary mass on the Γ1 dofs.
    pub bb: DMatrix<f64>,
    /// Lumped boundary mass on the Γ1 dofs.
    pub bb_lumped: DVector<f64>,
    pub lambda: f64,
    pub cond_interior: f64,
}

impl DtnMatrix {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn bb_lumped_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.bb_lumped)
    }

    /// Coordinate dump of `S` with `lambda` and `cond_interior` metadata.
    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        linalg::write_matrix(
            &self.s,
            &[("lambda", self.lambda), ("cond_interior", self.cond_interior)],
            out,
        )
    }
}

/// Factorized interior block of `A − λM`, reusable across boundary data.
pub struct InteriorSolver<'a> {
    sys: &'a AssembledSystem,
    lambda: f64,
    c: DMatrix<f64>,
    c_ii: Factorization,
}

impl<'a> InteriorSolver<'a> {
    pub fn new(sys: &'a AssembledSystem, lambda: f64) -> Result<Self, DtnError> {
        if !lambda.is_finite() {
            return Err(DtnError::InvalidArgument(format!("λ = {lambda}")));
        }
        let c = sys.a() - sys.m() * lambda;
        let idx = sys.interior_dofs();
        let c_ii = Factorization::new(&submatrix(&c, idx, idx));
        if !(c_ii.cond <= COND_LIMIT) {
            return Err(DtnError::NearDirichletSpectrum {
                lambda,
                cond: c_ii.cond,
            });
        }
        Ok(Self { sys, lambda, c, c_ii })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cond(&self) -> f64 {
        self.c_ii.cond
    }

    /// `A − λM` on all free dofs.
    pub fn shifted(&self) -> &DMatrix<f64> {
        &self.c
    }

    fn near_singular(&self) -> DtnError {
        DtnError::NearDirichletSpectrum {
            lambda: self.lambda,
            cond: f64::INFINITY,
        }
    }

    /// Free-dof matrix whose columns are the extensions of the Γ1 unit vectors.
    pub fn extension_matrix(&self) -> Result<DMatrix<f64>, DtnError> {
        let (bd, id) = (self.sys.boundary_dofs(), self.sys.interior_dofs());
        let n = self.sys.num_dofs();
        let mut e = DMatrix::zeros(n, bd.len());
        for (j, &d) in bd.iter().enumerate() {
            e[(d, j)] = 1.0;
        }
        if !id.is_empty() {
            let x = self
                .c_ii
                .solve(&submatrix(&self.c, id, bd))
                .ok_or_else(|| self.near_singular())?;
            for (r, &d) in id.iter().enumerate() {
                for j in 0..bd.len() {
                    e[(d, j)] = -x[(r, j)];
                }
            }
        }
        Ok(e)
    }

    pub fn extend(&self, phi: &DVector<f64>) -> Result<HarmonicExtensionResult, DtnError> {
        let (bd, id) = (self.sys.boundary_dofs(), self.sys.interior_dofs());
        if phi.len() != bd.len() {
            return Err(DtnError::Dimension(format!(
                "boundary vector has length {}, expected {}",
                phi.len(),
                bd.len()
            )));
        }
        let mut u = DVector::zeros(self.sys.num_dofs());
        for (k, &d) in bd.iter().enumerate() {
            u[d] = phi[k];
        }
        if !id.is_empty() {
            let rhs = -(submatrix(&self.c, id, bd) * phi);
            let x = self.c_ii.solve_vector(&rhs).ok_or_else(|| self.near_singular())?;
            for (k, &d) in id.iter().enumerate() {
                u[d] = x[k];
            }
        }
        let r = &self.c * &u;
        let residual_interior = id.iter().fold(0.0f64, |m, &d| m.max(r[d].abs()));
        Ok(HarmonicExtensionResult { u, residual_interior })
    }

    pub fn dtn(&self) -> Result<DtnMatrix, DtnError> {
        let (bd, id) = (self.sys.boundary_dofs(), self.sys.interior_dofs());
        let mut s = submatrix(&self.c, bd, bd);
        if !id.is_empty() {
            let x = self
                .c_ii
                .solve(&submatrix(&self.c, id, bd))
                .ok_or_else(|| self.near_singular())?;
            s -= submatrix(&self.c, bd, id) * x;
        }
        if self.sys.is_symmetric() {
            s = linalg::symmetrize(&s);
        }
        Ok(DtnMatrix {
            s,
            bb: submatrix(self.sys.b(), bd, bd),
            bb_lumped: subvector(self.sys.b_lumped(), bd),
            lambda: self.lambda,
            cond_interior: self.c_ii.cond,
        })
    }
}

/// Solves `L(λ)u = 0` in the interior with `u = φ` on the Γ1 dofs.
pub fn harmonic_extension(
    sys: &AssembledSystem,
    lambda: f64,
    phi: &DVector<f64>,
) -> Result<HarmonicExtensionResult, DtnError> {
    InteriorSolver::new(sys, lambda)?.extend(phi)
}

/// `S(λ) = C_BB − C_BI C_II⁻¹ C_IB` with `C = A − λM`.
pub fn dtn_matrix(sys: &AssembledSystem, lambda: f64) -> Result<DtnMatrix, DtnError> {
    InteriorSolver::new(sys, lambda)?.dtn()
}

/// Splits `u` into an interior part `u0` (indexed by the interior dofs)
/// and the harmonic extension `u1` of its Γ1 trace.
pub fn decompose(
    sys: &AssembledSystem,
    lambda: f64,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, HarmonicExtensionResult), DtnError> {
    if u.len() != sys.num_dofs() {
        return Err(DtnError::Dimension(format!(
            "vector has length {}, expected {}",
            u.len(),
            sys.num_dofs()
        )));
    }
    let phi = subvector(u, sys.boundary_dofs());
    let u1 = harmonic_extension(sys, lambda, &phi)?;
    let id = sys.interior_dofs();
    let u0 = DVector::from_iterator(id.len(), id.iter().map(|&d| u[d] - u1.u[d]));
    Ok((u0, u1))
}

/// Places an interior-indexed vector into a free-dof vector.
pub fn embed_interior(sys: &AssembledSystem, u0: &DVector<f64>) -> DVector<f64> {
    let mut u = DVector::zeros(sys.num_dofs());
    for (k, &d) in sys.interior_dofs().iter().enumerate() {
        u[d] = u0[k];
    }
    u
}

/// Empirical constants of the boundary form: `φᵀSφ + w φᵀBbφ ≥ δ‖u_φ‖²`
/// and `|φᵀSψ| ≤ M ‖u_φ‖ ‖u_ψ‖`, with `‖u‖² = uᵀ(K + M)u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    pub w_est: f64,
    pub delta_est: f64,
    pub m_est: f64,
    pub trials: usize,
}

struct TrialForms {
    s: Vec<f64>,
    b: Vec<f64>,
    h: Vec<f64>,
    cross: Vec<f64>,
}

fn sample_forms(
    sys: &AssembledSystem,
    lambda: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<TrialForms, DtnError> {
    if trials == 0 {
        return Err(DtnError::NoTrials);
    }
    let solver = InteriorSolver::new(sys, lambda)?;
    let d = solver.dtn()?;
    let e = solver.extension_matrix()?;
    let gram = e.transpose() * (sys.k() + sys.m()) * &e;
    let nb = d.dim();
    if nb == 0 {
        return Err(DtnError::Dimension("Γ1 has no free dofs".into()));
    }
    let phis: Vec<DVector<f64>> = (0..trials)
        .map(|_| DVector::from_fn(nb, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let mut f = TrialForms {
        s: Vec::with_capacity(trials),
        b: Vec::with_capacity(trials),
        h: Vec::with_capacity(trials),
        cross: Vec::with_capacity(trials),
    };
    for (i, phi) in phis.iter().enumerate() {
        let s_phi = &d.s * phi;
        f.s.push(phi.dot(&s_phi));
        f.b.push(phi.dot(&(&d.bb * phi)));
        f.h.push(phi.dot(&(&gram * phi)));
        let psi = &phis[(i + 1) % trials];
        let h_psi = psi.dot(&(&gram * psi));
        f.cross.push(psi.dot(&s_phi).abs() / (f.h[i] * h_psi).sqrt());
    }
    Ok(f)
}

fn delta_at(f: &TrialForms, w: f64) -> f64 {
    (0..f.s.len())
        .map(|i| (f.s[i] + w * f.b[i]) / f.h[i])
        .fold(f64::INFINITY, f64::min)
}

pub fn coercivity_report(
    sys: &AssembledSystem,
    lambda: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<CoercivityReport, DtnError> {
    let f = sample_forms(sys, lambda, trials, rng)?;
    // smallest w making every sampled φᵀSφ + wφᵀBbφ at least φᵀBbφ
    let w_est = (0..trials)
        .map(|i| 1.0 - f.s[i] / f.b[i])
        .fold(1.0f64, f64::max);
    let m_est = (0..trials)
        .map(|i| (f.s[i].abs() / f.h[i]).max(f.cross[i]))
        .fold(0.0f64, f64::max);
    Ok(CoercivityReport {
        w_est,
        delta_est: delta_at(&f, w_est),
        m_est,
        trials,
    })
}

/// Largest δ over the sampled boundary vectors at a fixed `w`.
pub fn coercivity_delta(
    sys: &AssembledSystem,
    lambda: f64,
    w: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<f64, DtnError> {
    Ok(delta_at(&sample_forms(sys, lambda, trials, rng)?, w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessReport {
    /// `‖S(λ+dλ) − 2S(λ) + S(λ−dλ)‖_max / dλ²`
    pub max_defect: f64,
    /// `‖S(λ+dλ) − S(λ−dλ)‖_max / 2dλ`
    pub derivative: f64,
    /// Same with step `dλ/2`.
    pub derivative_half: f64,
    pub richardson_ratio: f64,
    /// Largest eigenvalue of the symmetric part of the central difference.
    pub max_slope_eigenvalue: f64,
}

impl SmoothnessReport {
    pub fn is_stable(&self) -> bool {
        self.max_defect.is_finite() && (self.richardson_ratio - 1.0).abs() <= 0.05
    }
}

/// Finite-difference regularity of `λ ↦ S(λ)`.
pub fn smoothness_check(
    sys: &AssembledSystem,
    lambda: f64,
    dlambda: f64,
) -> Result<SmoothnessReport, DtnError> {
    if !(dlambda > 0.0 && dlambda.is_finite()) {
        return Err(DtnError::InvalidArgument(format!("dλ = {dlambda}")));
    }
    if sys.is_symmetric() && !sys.interior_dofs().is_empty() {
        let (ad, md) = sys.dirichlet_system().map_err(|e| DtnError::InvalidArgument(e.to_string()))?;
        let spec = linalg::sym_geneig(&ad, &md, ad.nrows())?;
        if let Some(&hit) = spec
            .eigenvalues
            .iter()
            .find(|&&v| v >= lambda - dlambda && v <= lambda + dlambda)
        {
            return Err(DtnError::NearDirichletSpectrum {
                lambda: hit,
                cond: f64::INFINITY,
            });
        }
    }
    let s = |l: f64| dtn_matrix(sys, l).map(|d| d.s);
    let s0 = s(lambda)?;
    let (sp, sm) = (s(lambda + dlambda)?, s(lambda - dlambda)?);
    let (sp2, sm2) = (s(lambda + 0.5 * dlambda)?, s(lambda - 0.5 * dlambda)?);
    let max_defect = max_abs(&(&sp - &s0 * 2.0 + &sm)) / (dlambda * dlambda);
    let diff = (&sp - &sm) / (2.0 * dlambda);
    let derivative = max_abs(&diff);
    let derivative_half = max_abs(&((&sp2 - &sm2) / dlambda));
    let max_slope_eigenvalue = if diff.nrows() == 0 {
        0.0
    } else {
        SymmetricEigen::new(linalg::symmetrize(&diff)).eigenvalues.max()
    };
    Ok(SmoothnessReport {
        max_defect,
        derivative,
        derivative_half,
        richardson_ratio: derivative / derivative_half,
        max_slope_eigenvalue,
    })
}
