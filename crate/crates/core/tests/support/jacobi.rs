//! Dense generalized eigenvalue oracle built from Jacobi rotations.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

/// Cyclic Jacobi rotations on a symmetric matrix; returns (eigenvalues, Q)
/// with `A = Q diag(eigenvalues) Qᵀ`.
pub fn jacobi(mut a: Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut q: Mat = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                if a[p][r] == 0.0 {
                    continue;
                }
                let theta = (a[r][r] - a[p][p]) / (2.0 * a[p][r]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akr) = (a[k][p], a[k][r]);
                    a[k][p] = c * akp - s * akr;
                    a[k][r] = s * akp + c * akr;
                }
                for k in 0..n {
                    let (apk, ark) = (a[p][k], a[r][k]);
                    a[p][k] = c * apk - s * ark;
                    a[r][k] = s * apk + c * ark;
                }
                for row in q.iter_mut() {
                    let (qp, qr) = (row[p], row[r]);
                    row[p] = c * qp - s * qr;
                    row[r] = s * qp + c * qr;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), q)
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| (0..m).map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Eigenvalues of `Kv = λGv` via `G^{-1/2} K G^{-1/2}`, both by Jacobi.
pub fn oracle(k: &Mat, g: &Mat) -> Vec<f64> {
    let n = k.len();
    let (gl, gq) = jacobi(g.clone());
    let inv_sqrt: Mat = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|m| gq[i][m] * gq[j][m] / gl[m].sqrt()).sum())
                .collect()
        })
        .collect();
    let mut c = matmul(&matmul(&inv_sqrt, k), &inv_sqrt);
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (c[i][j] + c[j][i]);
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    let mut ev = jacobi(c).0;
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn random_pair(n: usize, seed: u64) -> (Mat, Mat) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-1.0..1.0);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    let r: Mat = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let g: Mat = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|m| r[m][i] * r[m][j]).sum::<f64>() / n as f64 + if i == j { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    (k, g)
}
