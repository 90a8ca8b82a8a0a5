//! Dense linear-algebra helpers: generalized symmetric eigenproblems,
//! eigenvalue clustering, condition estimation and a text dump format.

use std::io::{BufRead, Write};
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not symmetric (defect {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("eigensolver did not converge")]
    ConvergenceFailure,
}

/// Eigenpairs of `K v = λ G v` in ascending order; eigenvectors are the
/// columns of `eigenvectors` and are `G`-orthonormal.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// `max_i ‖K v_i − λ_i G v_i‖ / (‖K‖ ‖v_i‖)`
    pub residual_max: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// Groups of indices with relative gaps ≤ `rel_tol`.
    pub fn clusters(&self, rel_tol: f64) -> Vec<Range<usize>> {
        clusters(&self.eigenvalues, rel_tol)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        self.eigenvalues.iter().filter(|&&v| v < x).count()
    }
}

/// Absolute floor, relative to the largest magnitude in a list, below which
/// two values are considered equal regardless of their size.
const CLUSTER_FLOOR: f64 = 1e-10;

/// Splits an ascending list into runs of (relatively) equal values.
pub fn clusters(values: &[f64], rel_tol: f64) -> Vec<Range<usize>> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let (a, b) = (values[i - 1], values[i]);
            (b - a).abs() > rel_tol * a.abs().max(b.abs()) + CLUSTER_FLOOR * scale
        };
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let mut d = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            d = d.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    d
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    m.is_square() && symmetry_defect(m) <= rel_tol * max_abs(m)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// `k` smallest eigenpairs of the symmetric-definite pencil `(K, G)`,
/// computed by reducing `L⁻¹ K L⁻ᵀ` (with `G = L Lᵀ`) to a standard
/// symmetric eigenproblem. Each eigenvector is signed so that its
/// largest-magnitude entry is positive.
pub fn sym_geneig(k_mat: &DMatrix<f64>, g_mat: &DMatrix<f64>, k: usize) -> Result<Spectrum, LinalgError> {
    let n = k_mat.nrows();
    if !k_mat.is_square() || g_mat.shape() != (n, n) {
        return Err(LinalgError::Dimension(format!(
            "K is {:?}, G is {:?}",
            k_mat.shape(),
            g_mat.shape()
        )));
    }
    if k > n {
        return Err(LinalgError::Dimension(format!("requested {k} eigenpairs of a {n}×{n} pencil")));
    }
    for m in [k_mat, g_mat] {
        let defect = symmetry_defect(m);
        if defect > 1e-10 * max_abs(m) {
            return Err(LinalgError::NotSymmetric(defect));
        }
    }
    let chol = symmetrize(g_mat).cholesky().ok_or(LinalgError::NotPositiveDefinite)?;
    let l = chol.l();
    let w = l
        .solve_lower_triangular(k_mat)
        .ok_or(LinalgError::NotPositiveDefinite)?;
    let c = l
        .solve_lower_triangular(&w.transpose())
        .ok_or(LinalgError::NotPositiveDefinite)?;
    let c = symmetrize(&c);
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 0).ok_or(LinalgError::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(k);
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(n, k, |r, j| eig.eigenvectors[(r, order[j])]);
    let mut v = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(LinalgError::NotPositiveDefinite)?;
    for mut col in v.column_iter_mut() {
        let imax = col.iamax();
        if n > 0 && col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    let k_norm = inf_norm(k_mat).max(f64::MIN_POSITIVE);
    let mut residual_max: f64 = 0.0;
    for (j, &lam) in eigenvalues.iter().enumerate() {
        let vj = v.column(j);
        let r = k_mat * vj - g_mat * vj * lam;
        residual_max = residual_max.max(r.norm() / (k_norm * vj.norm()));
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors: v,
        residual_max,
    })
}

/// Dense LU with a 1-norm condition estimate (Hager's method).
pub struct Factorization {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    pub cond: f64,
}

impl Factorization {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let lu = m.clone().lu();
        let lu_t = if is_symmetric(m, 1e-14) {
            None
        } else {
            Some(m.transpose().lu())
        };
        let mut f = Self {
            lu,
            lu_t,
            cond: f64::INFINITY,
        };
        if n == 0 {
            f.cond = 1.0;
            return f;
        }
        let norm1 = m
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if let Some(inv_norm) = f.inverse_norm1_estimate() {
            let cond = norm1 * inv_norm;
            f.cond = if cond.is_finite() { cond } else { f64::INFINITY };
        }
        f
    }

    fn solve_vec(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        self.lu.solve(b).filter(|x| x.iter().all(|v| v.is_finite()))
    }

    fn solve_t_vec(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.lu_t {
            Some(lu) => lu.solve(b),
            None => self.lu.solve(b),
        }
        .filter(|x| x.iter().all(|v| v.is_finite()))
    }

    fn inverse_norm1_estimate(&self) -> Option<f64> {
        let n = self.lu.l().nrows();
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve_vec(&x)?;
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_t_vec(&xi)?;
            let j = z.iamax();
            if z[j].abs() <= z.dot(&x) {
                break;
            }
            x = DVector::zeros(n);
            x[j] = 1.0;
        }
        // alternating probe guards against the classic underestimates
        let probe = DVector::from_fn(n, |i, _| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        });
        let alt = self.solve_vec(&probe)?.iter().map(|v| v.abs()).sum::<f64>();
        Some(est.max(2.0 * alt / (3.0 * n as f64)))
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        self.lu.solve(b).filter(|x| x.iter().all(|v| v.is_finite()))
    }

    pub fn solve_vector(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        self.solve_vec(b)
    }
}

pub const MAT_HEADER: &str = "DTNLAB-MAT v1";

#[derive(Debug, Error)]
pub enum MatIoError {
    #[error("matrix file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes the nonzero entries of `m` as `row col value` lines in row-major
/// order. `metadata` lines are emitted as `# key value` comments.
pub fn write_matrix(
    m: &DMatrix<f64>,
    metadata: &[(&str, f64)],
    out: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(out, "{MAT_HEADER}")?;
    for (k, v) in metadata {
        writeln!(out, "# {k} {v:.17e}")?;
    }
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), nnz)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(out, "{i} {j} {v:.17e}")?;
            }
        }
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix`], returning it with its metadata.
pub fn read_matrix(input: impl BufRead) -> Result<(DMatrix<f64>, Vec<(String, f64)>), MatIoError> {
    let err = |line: usize, message: &str| MatIoError::Parse {
        line,
        message: message.to_string(),
    };
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != MAT_HEADER {
        return Err(err(1, "missing DTNLAB-MAT v1 header"));
    }
    let mut meta = Vec::new();
    let mut lineno = 1;
    let mut matrix: Option<(DMatrix<f64>, usize)> = None;
    let mut seen = 0;
    for line in lines {
        let line = line?;
        lineno += 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields[0] == "#" {
            if matrix.is_some() || fields.len() != 3 {
                return Err(err(lineno, "misplaced metadata line"));
            }
            let v = fields[2].parse().map_err(|_| err(lineno, "bad metadata value"))?;
            meta.push((fields[1].to_string(), v));
            continue;
        }
        if fields.len() != 3 {
            return Err(err(lineno, "expected three fields"));
        }
        match &mut matrix {
            None => {
                let r: usize = fields[0].parse().map_err(|_| err(lineno, "bad row count"))?;
                let c: usize = fields[1].parse().map_err(|_| err(lineno, "bad column count"))?;
                let nnz: usize = fields[2].parse().map_err(|_| err(lineno, "bad entry count"))?;
                matrix = Some((DMatrix::zeros(r, c), nnz));
            }
            Some((m, _)) => {
                let i: usize = fields[0].parse().map_err(|_| err(lineno, "bad row index"))?;
                let j: usize = fields[1].parse().map_err(|_| err(lineno, "bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| err(lineno, "bad value"))?;
                if i >= m.nrows() || j >= m.ncols() {
                    return Err(err(lineno, "index out of range"));
                }
                m[(i, j)] = v;
                seen += 1;
            }
        }
    }
    let (m, nnz) = matrix.ok_or_else(|| err(lineno, "missing size line"))?;
    if seen != nnz {
        return Err(err(lineno, "entry count mismatch"));
    }
    Ok((m, meta))
}
