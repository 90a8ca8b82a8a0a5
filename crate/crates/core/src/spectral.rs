//! Dirichlet, Robin and Steklov spectra, eigenvalue curves in the Robin
//! parameter, and comparisons between two coefficient sets.

use std::io::Write;
use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::assemble::{AssembleError, AssembledSystem};
use crate::dtn::{dtn_matrix, DtnError, InteriorSolver};
use crate::linalg::{clusters, inf_norm, max_abs, subvector, LinalgError};

pub use crate::linalg::{sym_geneig, Spectrum};

/// Relative gap below which eigenvalues count as one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dtn(#[from] DtnError),
    #[error("{0}")]
    Assemble(String),
    #[error("index {index} out of range ({available} eigenpairs available)")]
    IndexOutOfRange { index: usize, available: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("at μ = {mu}: {source}")]
    AtMu {
        mu: f64,
        #[source]
        source: Box<SpectralError>,
    },
}

impl From<AssembleError> for SpectralError {
    fn from(e: AssembleError) -> Self {
        SpectralError::Assemble(e.to_string())
    }
}

/// `k` smallest eigenpairs of `(A_D, M_D)`.
pub fn dirichlet_spectrum(sys: &AssembledSystem, k: usize) -> Result<Spectrum, SpectralError> {
    let (ad, md) = sys.dirichlet_system()?;
    Ok(sym_geneig(&ad, &md, k)?)
}

/// `k` smallest eigenpairs of `(A − μB, M)` on the free dofs.
pub fn robin_spectrum(sys: &AssembledSystem, mu: f64, k: usize) -> Result<Spectrum, SpectralError> {
    Ok(sym_geneig(&sys.robin_matrix(mu), sys.m(), k)?)
}

/// `k` smallest eigenpairs of `(S(λ), Bb)`.
pub fn steklov_spectrum(sys: &AssembledSystem, lambda: f64, k: usize) -> Result<Spectrum, SpectralError> {
    let d = dtn_matrix(sys, lambda)?;
    Ok(sym_geneig(&d.s, &d.bb, k)?)
}

fn cluster_of(values: &[f64], i: usize) -> Range<usize> {
    clusters(values, CLUSTER_TOL)
        .into_iter()
        .find(|r| r.contains(&i))
        .unwrap_or(i..i + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub steklov_eigenvalue: f64,
    /// `‖(A − λM − μB)u‖ / (‖A‖ ‖u‖)` for the extended Steklov vector.
    pub forward_residual: f64,
    /// `‖(S − μBb)φ‖ / (‖S‖ ‖φ‖)` for the Γ1 trace of the Robin eigenvector at μ
    /// whose eigenvalue is closest to λ.
    pub reverse_residual: f64,
    /// Distance from λ to the nearest Robin eigenvalue at μ.
    pub robin_gap: f64,
    pub steklov_multiplicity: usize,
    pub robin_multiplicity: usize,
}

impl DualityReport {
    pub fn multiplicities_agree(&self) -> bool {
        self.steklov_multiplicity == self.robin_multiplicity
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.forward_residual <= tol && self.reverse_residual <= tol && self.multiplicities_agree()
    }
}

/// Checks that the `j`-th (0-based) Steklov eigenvalue `μ` at `λ` makes `λ`
/// a Robin eigenvalue at `μ`, in both directions and with multiplicity.
pub fn duality_check(sys: &AssembledSystem, lambda: f64, j: usize) -> Result<DualityReport, SpectralError> {
    let solver = InteriorSolver::new(sys, lambda)?;
    let d = solver.dtn()?;
    let nb = d.dim();
    if j >= nb {
        return Err(SpectralError::IndexOutOfRange {
            index: j,
            available: nb,
        });
    }
    let stek = sym_geneig(&d.s, &d.bb, nb)?;
    let mu = stek.eigenvalues[j];
    let u = solver.extend(&stek.vector(j))?.u;
    let a_norm = inf_norm(sys.a()).max(f64::MIN_POSITIVE);
    let r = solver.shifted() * &u - sys.b() * &u * mu;
    let forward_residual = r.norm() / (a_norm * u.norm());

    let robin = robin_spectrum(sys, mu, sys.num_dofs())?;
    let nearest = (0..robin.len())
        .min_by(|&a, &b| {
            (robin.eigenvalues[a] - lambda)
                .abs()
                .total_cmp(&(robin.eigenvalues[b] - lambda).abs())
        })
        .ok_or_else(|| SpectralError::Dimension("no free dofs".into()))?;
    let robin_gap = (robin.eigenvalues[nearest] - lambda).abs();
    let phi = subvector(&robin.vector(nearest), sys.boundary_dofs());
    let s_norm = inf_norm(&d.s).max(f64::MIN_POSITIVE);
    let reverse_residual = (&d.s * &phi - &d.bb * &phi * mu).norm() / (s_norm * phi.norm());

    let lambda_tol = CLUSTER_TOL * lambda.abs().max(1.0);
    let robin_multiplicity = robin
        .eigenvalues
        .iter()
        .filter(|&&v| (v - lambda).abs() <= lambda_tol)
        .count();
    Ok(DualityReport {
        steklov_eigenvalue: mu,
        forward_residual,
        reverse_residual,
        robin_gap,
        steklov_multiplicity: cluster_of(&stek.eigenvalues, j).len(),
        robin_multiplicity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenCurve {
    pub mu_grid: Vec<f64>,
    /// `values[k][i]` is the `k`-th eigenvalue at `mu_grid[i]`.
    pub values: Vec<Vec<f64>>,
    /// Cluster grouping of the computed eigenvalues at each sample.
    pub clusters: Vec<Vec<Range<usize>>>,
}

impl EigenCurve {
    /// Largest relative increase of any curve between consecutive samples
    /// (zero or negative when every curve is non-increasing).
    pub fn max_violation(&self) -> f64 {
        self.steps()
            .map(|(a, b)| (b - a) / a.abs().max(1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest decrease between consecutive samples.
    pub fn min_decrease(&self) -> f64 {
        self.steps().map(|(a, b)| a - b).fold(f64::INFINITY, f64::min)
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }

    fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .flat_map(|row| row.windows(2).map(|w| (w[0], w[1])))
    }

    /// CSV with header `mu,lambda_1,...,lambda_k`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.values.len()).map(|k| format!("lambda_{k}")).collect();
        writeln!(out, "mu,{}", header.join(","))?;
        for (i, mu) in self.mu_grid.iter().enumerate() {
            let row: Vec<String> = self.values.iter().map(|r| format!("{:.12e}", r[i])).collect();
            writeln!(out, "{mu:.12e},{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn linspace(a: f64, b: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| {
            if i + 1 == steps {
                b
            } else {
                a + (b - a) * i as f64 / (steps - 1) as f64
            }
        })
        .collect()
}

/// The `k` lowest Robin eigenvalues on an even grid of `steps` values of μ.
pub fn eigen_curves(
    sys: &AssembledSystem,
    mu_min: f64,
    mu_max: f64,
    steps: usize,
    k: usize,
) -> Result<EigenCurve, SpectralError> {
    if steps < 2 || !(mu_min < mu_max) {
        return Err(SpectralError::InvalidArgument(format!(
            "need steps ≥ 2 and μ_min < μ_max (got {steps}, {mu_min}, {mu_max})"
        )));
    }
    let mu_grid = linspace(mu_min, mu_max, steps);
    let samples = mu_grid
        .par_iter()
        .map(|&mu| {
            robin_spectrum(sys, mu, k)
                .map(|s| s.eigenvalues)
                .map_err(|e| SpectralError::AtMu {
                    mu,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values = (0..k).map(|j| samples.iter().map(|s| s[j]).collect()).collect();
    let clusters = samples.iter().map(|s| clusters(s, CLUSTER_TOL)).collect();
    Ok(EigenCurve {
        mu_grid,
        values,
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub mu: f64,
    pub eigenvalues: Vec<f64>,
    /// `λ_k^D − λ_k^μ`
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitStudy {
    pub dirichlet: Vec<f64>,
    pub rows: Vec<LimitRow>,
}

impl LimitStudy {
    pub fn total_gap(&self, row: usize) -> f64 {
        self.rows[row].gaps.iter().sum()
    }

    /// Reduction of the summed gap per decade of |μ| between consecutive rows.
    pub fn decade_ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let decades = (w[1].mu.abs() / w[0].mu.abs()).log10();
                (self.total_gap(i) / self.total_gap(i + 1)).powf(1.0 / decades)
            })
            .collect()
    }

    pub fn gaps_positive(&self) -> bool {
        self.rows.iter().all(|r| r.gaps.iter().all(|&g| g > 0.0))
    }

    pub fn gaps_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[0].gaps.iter().zip(&w[1].gaps).all(|(a, b)| b <= a)
        })
    }
}

/// Gaps between Robin and Dirichlet eigenvalues as μ → −∞.
pub fn dirichlet_limit_study(
    sys: &AssembledSystem,
    k: usize,
    mu_list: &[f64],
) -> Result<LimitStudy, SpectralError> {
    if mu_list.iter().any(|&m| !(m < 0.0)) || mu_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(SpectralError::InvalidArgument(
            "μ values must be negative and decreasing".into(),
        ));
    }
    let dirichlet = dirichlet_spectrum(sys, k)?.eigenvalues;
    let rows = mu_list
        .par_iter()
        .map(|&mu| {
            let ev = robin_spectrum(sys, mu, k)?.eigenvalues;
            let gaps = ev.iter().zip(&dirichlet).map(|(r, d)| d - r).collect();
            Ok(LimitRow {
                mu,
                eigenvalues: ev,
                gaps,
            })
        })
        .collect::<Result<Vec<_>, SpectralError>>()?;
    Ok(LimitStudy { dirichlet, rows })
}

#[derive(Debug, Clone)]
pub struct MatchReport {
    pub eigenvalues_a: Vec<f64>,
    pub eigenvalues_b: Vec<f64>,
    /// `|λ_{a,i} − λ_{b,i}|`
    pub gaps: Vec<f64>,
    /// Per index: the clusters containing `i` have the same extent in both spectra.
    pub multiplicity_agree: Vec<bool>,
    /// Clusters of the first spectrum with more than one member; within
    /// them the index pairing of eigenvectors is arbitrary.
    pub degenerate_clusters: Vec<Range<usize>>,
    /// `U = Ψ Φᵀ M`
    pub unitary: DMatrix<f64>,
    /// `max_i ‖(A_b − μB) UΦ_i − λ_{a,i} M UΦ_i‖ / (‖A_b − μB‖ ‖UΦ_i‖)`
    pub conjugation_residual: f64,
    /// `‖(UΦ)ᵀ M (UΦ) − I‖_max`
    pub unitarity_defect: f64,
    /// Sine of the largest principal angle between the Γ1 traces of the
    /// two computed eigenspaces.
    pub trace_angle_sin: f64,
    /// Counting functions agree at midpoints between the first spectrum's clusters.
    pub counting_consistent: bool,
}

impl MatchReport {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().fold(0.0, |m, &g| m.max(g))
    }

    pub fn flagged(&self, tol: f64) -> Vec<usize> {
        (0..self.gaps.len()).filter(|&i| self.gaps[i] > tol).collect()
    }
}

fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax)
        .count();
    u.columns(0, rank).into_owned()
}

fn same_discretization(a: &AssembledSystem, b: &AssembledSystem) -> bool {
    a.num_dofs() == b.num_dofs()
        && a.partition() == b.partition()
        && a.mesh().vertices() == b.mesh().vertices()
        && a.mesh().triangles() == b.mesh().triangles()
}

/// Compares the Robin spectra of two systems on the same mesh and builds
/// the map sending the eigenvectors of the first onto those of the second.
pub fn match_and_unitary(
    sys_a: &AssembledSystem,
    sys_b: &AssembledSystem,
    mu: f64,
    k: usize,
) -> Result<MatchReport, SpectralError> {
    if !same_discretization(sys_a, sys_b) {
        return Err(SpectralError::Dimension(
            "systems must share mesh and boundary partition".into(),
        ));
    }
    let (sa, sb) = (robin_spectrum(sys_a, mu, k)?, robin_spectrum(sys_b, mu, k)?);
    let m = sys_a.m();
    let (phi, psi) = (&sa.eigenvectors, &sb.eigenvectors);
    let unitary = psi * phi.transpose() * m;
    let image = &unitary * phi;
    let kb = sys_b.robin_matrix(mu);
    let kb_norm = inf_norm(&kb).max(f64::MIN_POSITIVE);
    let mut conjugation_residual: f64 = 0.0;
    for i in 0..k {
        let v = image.column(i);
        let r = &kb * v - m * v * sa.eigenvalues[i];
        conjugation_residual = conjugation_residual.max(r.norm() / (kb_norm * v.norm()));
    }
    let unitarity_defect = max_abs(&(image.transpose() * m * &image - DMatrix::identity(k, k)));

    let bd = sys_a.boundary_dofs();
    let rows = |v: &DMatrix<f64>| DMatrix::from_fn(bd.len(), k, |r, c| v[(bd[r], c)]);
    let (qa, qb) = (orthonormal_columns(&rows(phi)), orthonormal_columns(&rows(psi)));
    let trace_angle_sin = if qa.ncols() == 0 || qa.ncols() != qb.ncols() {
        if qa.ncols() == qb.ncols() {
            0.0
        } else {
            1.0
        }
    } else {
        let resid = &qa - &qb * (qb.transpose() * &qa);
        resid.singular_values().max()
    };

    let gaps: Vec<f64> = (0..k)
        .map(|i| (sa.eigenvalues[i] - sb.eigenvalues[i]).abs())
        .collect();
    let multiplicity_agree = (0..k)
        .map(|i| cluster_of(&sa.eigenvalues, i) == cluster_of(&sb.eigenvalues, i))
        .collect();
    let ca = clusters(&sa.eigenvalues, CLUSTER_TOL);
    let counting_consistent = ca.windows(2).all(|w| {
        let x = 0.5 * (sa.eigenvalues[w[0].end - 1] + sa.eigenvalues[w[1].start]);
        sa.count_below(x) == sb.count_below(x)
    });
    Ok(MatchReport {
        degenerate_clusters: ca.into_iter().filter(|r| r.len() > 1).collect(),
        eigenvalues_a: sa.eigenvalues,
        eigenvalues_b: sb.eigenvalues,
        gaps,
        multiplicity_agree,
        unitary,
        conjugation_residual,
        unitarity_defect,
        trace_angle_sin,
        counting_consistent,
    })
}

/// `max_λ ‖S_a(λ) − S_b(λ)‖_max` over the given values of λ.
pub fn dtn_equality_check(
    sys_a: &AssembledSystem,
    sys_b: &AssembledSystem,
    lambdas: &[f64],
) -> Result<f64, SpectralError> {
    if sys_a.boundary_dofs() != sys_b.boundary_dofs() {
        return Err(SpectralError::Dimension("Γ1 dofs differ".into()));
    }
    let defects = lambdas
        .par_iter()
        .map(|&l| {
            let (a, b) = (dtn_matrix(sys_a, l)?, dtn_matrix(sys_b, l)?);
            Ok(max_abs(&(a.s - b.s)))
        })
        .collect::<Result<Vec<f64>, SpectralError>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// `count` evenly spaced values of λ in the gap below the first Dirichlet
/// eigenvalue (in `(0, λ₁ᴰ)` when `λ₁ᴰ > 0`).
pub fn default_lambda_grid(sys: &AssembledSystem, count: usize) -> Result<Vec<f64>, SpectralError> {
    let l1 = dirichlet_spectrum(sys, 1)?.eigenvalues[0];
    let span = l1.abs().max(1.0);
    Ok((1..=count)
        .map(|i| l1 - span + span * i as f64 / (count + 1) as f64)
        .collect())
}

/// Every Steklov pair at λ with the residual `‖(A − λM − μⱼB)uⱼ‖ / (‖A‖ ‖uⱼ‖)`
/// of its harmonic extension `uⱼ`.
pub fn duality_residuals(sys: &AssembledSystem, lambda: f64) -> Result<(Spectrum, Vec<f64>), SpectralError> {
    let solver = InteriorSolver::new(sys, lambda)?;
    let d = solver.dtn()?;
    let stek = sym_geneig(&d.s, &d.bb, d.dim())?;
    let u = solver.extension_matrix()? * &stek.eigenvectors;
    let cu = solver.shifted() * &u;
    let bu = sys.b() * &u;
    let a_norm = inf_norm(sys.a()).max(f64::MIN_POSITIVE);
    let residuals = (0..stek.len())
        .map(|j| (cu.column(j) - bu.column(j) * stek.eigenvalues[j]).norm() / (a_norm * u.column(j).norm()))
        .collect();
    Ok((stek, residuals))
}

/// One λ in each of the first `count` gaps of the Dirichlet spectrum: the
/// first below λ₁ᴰ, the others halfway between consecutive clusters.
pub fn gap_lambdas(sys: &AssembledSystem, count: usize) -> Result<Vec<f64>, SpectralError> {
    let (ad, md) = sys.dirichlet_system()?;
    let d = sym_geneig(&ad, &md, ad.nrows())?.eigenvalues;
    let groups = clusters(&d, CLUSTER_TOL);
    if groups.len() < count {
        return Err(SpectralError::InvalidArgument(format!(
            "only {} Dirichlet clusters, {count} gaps requested",
            groups.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    if count > 0 {
        out.push(d[0] - 0.5 * d[0].abs().max(1.0));
    }
    for w in groups.windows(2).take(count.saturating_sub(1)) {
        out.push(0.5 * (d[w[0].end - 1] + d[w[1].start]));
    }
    Ok(out)
}
