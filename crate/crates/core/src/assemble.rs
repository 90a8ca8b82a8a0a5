//! P1 finite-element assembly with the Dirichlet part of the boundary
//! eliminated from the unknowns.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::coeffs::{certify, Certificate, CoeffError, CoefficientSet, PointCoefficients};
use crate::linalg::submatrix;
use crate::mesh::{BoundaryPartition, Mesh, Point};
use crate::quadrature;

/// Marker in [`AssembledSystem::dof_map`] for eliminated vertices.
pub const CONSTRAINED: usize = usize::MAX;

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error(transparent)]
    Coefficients(CoeffError),
    #[error("coefficient evaluation failed at a quadrature node: {0}")]
    QuadratureFailure(CoeffError),
    #[error("the mesh has no interior degrees of freedom")]
    EmptyInterior,
    #[error("boundary partition does not belong to this mesh")]
    PartitionMismatch,
}

impl From<CoeffError> for AssembleError {
    fn from(e: CoeffError) -> Self {
        match e {
            CoeffError::Domain { .. } => AssembleError::QuadratureFailure(e),
            other => AssembleError::Coefficients(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    mesh: Arc<Mesh>,
    partition: BoundaryPartition,
    a: DMatrix<f64>,
    m: DMatrix<f64>,
    b: DMatrix<f64>,
    b_lumped: DVector<f64>,
    k: DMatrix<f64>,
    dof_map: Vec<usize>,
    dof_vertex: Vec<usize>,
    boundary_dofs: Vec<usize>,
    interior_dofs: Vec<usize>,
    certificate: Certificate,
    samples: Vec<PointCoefficients>,
}

struct Local {
    tri: [usize; 3],
    a: [[f64; 3]; 3],
    m: [[f64; 3]; 3],
    k: [[f64; 3]; 3],
    samples: [PointCoefficients; 3],
}

fn local_matrices(mesh: &Mesh, t: usize, c: &CoefficientSet) -> Result<Local, CoeffError> {
    let tri = mesh.triangles()[t];
    let p = mesh.triangle_points(t);
    let area = crate::mesh::signed_area(p[0], p[1], p[2]);
    let grads: [[f64; 2]; 3] = std::array::from_fn(|i| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        [
            (p[j][1] - p[k][1]) / (2.0 * area),
            (p[k][0] - p[j][0]) / (2.0 * area),
        ]
    });
    let mut a = [[0.0; 3]; 3];
    let nodes = quadrature::triangle(p);
    let samples = [c.eval(nodes[0].0)?, c.eval(nodes[1].0)?, c.eval(nodes[2].0)?];
    for (q, &(_, w)) in nodes.iter().enumerate() {
        let bary = quadrature::TRIANGLE_NODES[q];
        let v = samples[q];
        for i in 0..3 {
            let gi = grads[i];
            let ag_i = [
                v.a[0][0] * gi[0] + v.a[0][1] * gi[1],
                v.a[1][0] * gi[0] + v.a[1][1] * gi[1],
            ];
            for j in 0..3 {
                let gj = grads[j];
                // ∇φ_jᵀ a ∇φ_i
                let principal = gj[0] * ag_i[0] + gj[1] * ag_i[1];
                let drift = (v.drift[0] * gj[0] + v.drift[1] * gj[1]) * bary[i];
                let codrift = (v.codrift[0] * gi[0] + v.codrift[1] * gi[1]) * bary[j];
                a[i][j] += w * (principal + drift + codrift + v.a0 * bary[i] * bary[j]);
            }
        }
    }
    let m = std::array::from_fn(|i| {
        std::array::from_fn(|j| if i == j { area / 6.0 } else { area / 12.0 })
    });
    let k = std::array::from_fn(|i| {
        std::array::from_fn(|j| area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]))
    });
    Ok(Local { tri, a, m, k, samples })
}

/// Assembles the form, mass and Γ1 boundary-mass matrices on the free
/// (non-Γ0) vertices. Entry `(i, j)` of the form matrix is `𝔞(φ_j, φ_i)`.
pub fn assemble(
    mesh: Arc<Mesh>,
    part: &BoundaryPartition,
    c: &CoefficientSet,
) -> Result<AssembledSystem, AssembleError> {
    let nb = mesh.boundary_edges().len();
    if part.gamma0_edges.len() + part.gamma1_edges.len() != nb
        || part.gamma0_edges.iter().chain(&part.gamma1_edges).any(|&e| e >= nb)
    {
        return Err(AssembleError::PartitionMismatch);
    }
    let certificate = certify(c, &mesh)?;
    let nv = mesh.num_vertices();
    let mut dof_map = vec![0usize; nv];
    for &v in &part.constrained_vertices {
        dof_map[v] = CONSTRAINED;
    }
    let mut dof_vertex = Vec::with_capacity(nv);
    for (v, d) in dof_map.iter_mut().enumerate() {
        if *d != CONSTRAINED {
            *d = dof_vertex.len();
            dof_vertex.push(v);
        }
    }
    let n = dof_vertex.len();

    let locals = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| local_matrices(&mesh, t, c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut a = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    let mut samples = Vec::with_capacity(3 * locals.len());
    for loc in &locals {
        samples.extend_from_slice(&loc.samples);
        for i in 0..3 {
            let di = dof_map[loc.tri[i]];
            if di == CONSTRAINED {
                continue;
            }
            for j in 0..3 {
                let dj = dof_map[loc.tri[j]];
                if dj == CONSTRAINED {
                    continue;
                }
                a[(di, dj)] += loc.a[i][j];
                m[(di, dj)] += loc.m[i][j];
                k[(di, dj)] += loc.k[i][j];
            }
        }
    }

    let mut b = DMatrix::zeros(n, n);
    let mut b_lumped = DVector::zeros(n);
    let mut on_gamma1 = vec![false; n];
    for &e in &part.gamma1_edges {
        let len = mesh.edge_length(e);
        let [va, vb] = mesh.boundary_edges()[e].vertices;
        let (da, db) = (dof_map[va], dof_map[vb]);
        for (d, other) in [(da, db), (db, da)] {
            if d == CONSTRAINED {
                continue;
            }
            on_gamma1[d] = true;
            b[(d, d)] += len / 3.0;
            b_lumped[d] += len / 2.0;
            if other != CONSTRAINED {
                b[(d, other)] += len / 6.0;
            }
        }
    }
    let boundary_dofs: Vec<usize> = (0..n).filter(|&d| on_gamma1[d]).collect();
    let interior_dofs: Vec<usize> = (0..n).filter(|&d| !on_gamma1[d]).collect();

    Ok(AssembledSystem {
        mesh,
        partition: part.clone(),
        a,
        m,
        b,
        b_lumped,
        k,
        dof_map,
        dof_vertex,
        boundary_dofs,
        interior_dofs,
        certificate,
        samples,
    })
}

impl AssembledSystem {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn partition(&self) -> &BoundaryPartition {
        &self.partition
    }

    /// Form matrix of `𝔞`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Consistent domain mass matrix.
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Consistent Γ1 boundary mass matrix.
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Row-sum lumped Γ1 boundary mass (diagonal).
    pub fn b_lumped(&self) -> &DVector<f64> {
        &self.b_lumped
    }

    /// Stiffness matrix of the unit Laplacian, used for discrete H¹ norms.
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_vertex.len()
    }

    /// Vertex index → free dof index, or [`CONSTRAINED`].
    pub fn dof_map(&self) -> &[usize] {
        &self.dof_map
    }

    /// Free dof index → vertex index.
    pub fn dof_vertex(&self) -> &[usize] {
        &self.dof_vertex
    }

    /// Free dofs on Γ1, ascending.
    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    pub fn quadrature_order(&self) -> usize {
        quadrature::TRIANGLE_ORDER
    }

    pub fn certificate(&self) -> Certificate {
        self.certificate
    }

    /// Coefficient values at every quadrature node, triangle by triangle.
    pub fn coefficient_samples(&self) -> &[PointCoefficients] {
        &self.samples
    }

    pub fn a0_min(&self) -> f64 {
        self.samples.iter().map(|s| s.a0).fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute drift or codrift component.
    pub fn first_order_max(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.drift.into_iter().chain(s.codrift))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when every sampled coefficient equals the first sample.
    pub fn has_constant_coefficients(&self) -> bool {
        self.samples.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_symmetric(&self) -> bool {
        self.certificate.symmetric
    }

    /// Nodal interpolant of `f` on the free dofs.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> DVector<f64> {
        let verts = self.mesh.vertices();
        DVector::from_iterator(self.num_dofs(), self.dof_vertex.iter().map(|&v| f(verts[v])))
    }

    /// Matrix of `𝔞^μ`, i.e. `A − μB`.
    pub fn robin_matrix(&self, mu: f64) -> DMatrix<f64> {
        &self.a - &self.b * mu
    }

    /// `A` and `M` restricted to the interior dofs.
    pub fn dirichlet_system(&self) -> Result<(DMatrix<f64>, DMatrix<f64>), AssembleError> {
        if self.interior_dofs.is_empty() {
            return Err(AssembleError::EmptyInterior);
        }
        let idx = &self.interior_dofs;
        Ok((submatrix(&self.a, idx, idx), submatrix(&self.m, idx, idx)))
    }
}
