use std::sync::Arc;

use dtnlab::assemble::{assemble, AssembledSystem};
use dtnlab::coeffs::{CoefficientSet, Field};
use dtnlab::mesh::{build_polygon_mesh, build_structured_square, l_shape, partition_boundary, Mesh, Side};
use dtnlab::spectral::{
    dirichlet_limit_study, dirichlet_spectrum, dtn_equality_check, duality_check, eigen_curves,
    match_and_unitary, robin_spectrum, steklov_spectrum, SpectralError, CLUSTER_TOL,
};
use proptest::prelude::*;

fn system(mesh: Mesh, sides: &[Side], c: &CoefficientSet) -> AssembledSystem {
    let preds: Vec<_> = sides.iter().map(|&s| mesh.side_predicate(s)).collect();
    let part = partition_boundary(&mesh, |p| preds.iter().any(|f| f(p))).unwrap();
    assemble(Arc::new(mesh), &part, c).unwrap()
}

fn laplace_square(n: usize, sides: &[Side]) -> AssembledSystem {
    system(build_structured_square(n).unwrap(), sides, &CoefficientSet::identity())
}

fn variable(c1: f64, c2: f64) -> CoefficientSet {
    let f = |s: String| Field::parse(&s).unwrap();
    let off = f(format!("{}*sin(x+y)", 0.3 * c1));
    CoefficientSet::from_fields(
        [[f(format!("1 + {c1}*x")), off.clone()], [off, f(format!("1 + {c1}*y^2"))]],
        [0.0.into(), 0.0.into()],
        [0.0.into(), 0.0.into()],
        f(format!("{c2}*(1 + x*y)")),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn duality_is_exact(
        lshape in any::<bool>(),
        c1 in 0.0f64..1.0,
        c2 in -2.0f64..2.0,
        sides in prop::sample::subsequence(vec![Side::Bottom, Side::Left], 0..=2),
        frac in 0.1f64..0.9,
        j in 0usize..3,
    ) {
        let mesh = if lshape {
            build_polygon_mesh(&l_shape(), 0.2).unwrap()
        } else {
            build_structured_square(6).unwrap()
        };
        let sys = system(mesh, &sides, &variable(c1, c2));
        let d = dirichlet_spectrum(&sys, 2).unwrap().eigenvalues;
        // One λ below the Dirichlet spectrum and one inside the first gap.
        for lambda in [d[0] - 5.0 * frac, d[0] + frac * (d[1] - d[0])] {
            let r = duality_check(&sys, lambda, j).unwrap();
            prop_assert!(r.forward_residual <= 1e-8, "forward {}", r.forward_residual);
            prop_assert!(r.reverse_residual <= 1e-8, "reverse {}", r.reverse_residual);
            prop_assert!(r.robin_gap <= 1e-8 * lambda.abs().max(1.0));
            prop_assert!(r.multiplicities_agree());
        }
    }
}

#[test]
fn steklov_double_cluster_maps_to_robin_double_eigenvalue() {
    let sys = laplace_square(8, &[]);
    let st = steklov_spectrum(&sys, 0.0, 8).unwrap();
    let pair = st
        .clusters(CLUSTER_TOL)
        .into_iter()
        .find(|r| r.len() == 2)
        .expect("the square has a double Steklov eigenvalue");
    for j in pair {
        let r = duality_check(&sys, 0.0, j).unwrap();
        assert_eq!(r.steklov_multiplicity, 2);
        assert_eq!(r.robin_multiplicity, 2);
        assert!(r.passes(1e-8));
    }
}

#[test]
fn duality_index_out_of_range() {
    let sys = laplace_square(4, &[Side::Left]);
    let nb = sys.boundary_dofs().len();
    assert!(matches!(
        duality_check(&sys, 1.0, nb),
        Err(SpectralError::IndexOutOfRange { .. })
    ));
}

#[test]
fn doubling_the_principal_part_doubles_dirichlet_eigenvalues() {
    let mesh = build_structured_square(8).unwrap();
    let a = system(mesh.clone(), &[], &CoefficientSet::identity());
    let b = system(mesh, &[], &CoefficientSet::identity().scaled_principal(2.0));
    let (la, lb) = (dirichlet_spectrum(&a, 5).unwrap(), dirichlet_spectrum(&b, 5).unwrap());
    for (x, y) in la.eigenvalues.iter().zip(&lb.eigenvalues) {
        assert!((2.0 * x - y).abs() <= 1e-10 * y);
    }
}

#[test]
fn neumann_and_steklov_ground_states() {
    let sys = laplace_square(8, &[]);
    let r = robin_spectrum(&sys, 0.0, 2).unwrap();
    assert!(r.eigenvalues[0].abs() <= 1e-10);
    let v = r.vector(0);
    assert!((v.max() - v.min()) <= 1e-8 * v.amax());
    let s = steklov_spectrum(&sys, 0.0, 2).unwrap();
    assert!(s.eigenvalues[0].abs() <= 1e-10);
    let mixed = laplace_square(8, &[Side::Left]);
    assert!(steklov_spectrum(&mixed, 0.0, 1).unwrap().eigenvalues[0] > 1e-3);
}

#[test]
fn spectrum_invariants_on_robin_problem() {
    let sys = system(build_polygon_mesh(&l_shape(), 0.15).unwrap(), &[Side::Bottom], &variable(0.5, 1.0));
    let s = robin_spectrum(&sys, 3.0, 10).unwrap();
    let k = sys.robin_matrix(3.0);
    for i in 0..10 {
        for j in 0..10 {
            let g = s.vector(i).dot(&(sys.m() * s.vector(j)));
            assert!((g - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-8);
        }
        let v = s.vector(i);
        let r = &k * &v - sys.m() * &v * s.eigenvalues[i];
        assert!(r.norm() <= 1e-8 * k.norm() * v.norm());
    }
    assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn eigen_curves_properties() {
    let sys = laplace_square(6, &[]);
    let k = 4;
    let c = eigen_curves(&sys, -20.0, 100.0, 13, k).unwrap();
    assert!(c.is_monotone(1e-8));
    assert!(c.min_decrease() > 0.0);
    let zero = c.mu_grid.iter().position(|&m| m == 0.0).unwrap();
    let mixed = robin_spectrum(&sys, 0.0, k).unwrap().eigenvalues;
    for j in 0..k {
        assert_eq!(c.values[j][zero], mixed[j]);
    }
    let d = dirichlet_spectrum(&sys, k).unwrap().eigenvalues;
    for (j, row) in c.values.iter().enumerate() {
        for &v in row {
            assert!(v <= d[j] + 1e-10 * d[j].abs());
        }
    }
    // The constant vector has Rayleigh quotient −μ|∂Ω|/|Ω| = −4μ.
    for (i, &mu) in c.mu_grid.iter().enumerate() {
        assert!(c.values[0][i] <= -4.0 * mu + 1e-10 * mu.abs().max(1.0));
    }
    let mut csv = Vec::new();
    c.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("mu,lambda_1,lambda_2,lambda_3,lambda_4\n"));
    assert_eq!(text.lines().count(), 14);
    assert!(eigen_curves(&sys, 0.0, 1.0, 1, k).is_err());
}

#[test]
fn dirichlet_limit_tracks_double_cluster() {
    let sys = laplace_square(8, &[]);
    let study = dirichlet_limit_study(&sys, 3, &[-1e2, -1e3, -1e4]).unwrap();
    assert!(study.gaps_positive());
    assert!(study.gaps_decreasing());
    assert!(study.decade_ratios().iter().all(|&r| r >= 5.0));
    // λ₂ and λ₃ form a cluster in the limit and at each μ.
    let d = &study.dirichlet;
    assert!((d[1] - d[2]).abs() <= CLUSTER_TOL * d[1]);
    for row in &study.rows {
        assert!((row.eigenvalues[1] - row.eigenvalues[2]).abs() <= 1e-6 * d[1]);
    }
    assert!(study.total_gap(2) < study.total_gap(0));
    assert!(dirichlet_limit_study(&sys, 1, &[-10.0, -5.0]).is_err());
}

#[test]
fn matching_a_system_with_itself() {
    let sys = system(build_structured_square(6).unwrap(), &[Side::Top], &variable(0.3, 0.5));
    let r = match_and_unitary(&sys, &sys, 2.0, 6).unwrap();
    assert_eq!(r.max_gap(), 0.0);
    assert!(r.conjugation_residual <= 1e-10);
    assert!(r.unitarity_defect <= 1e-8);
    assert!(r.trace_angle_sin <= 1e-8);
    assert!(r.counting_consistent);
    assert!(r.multiplicity_agree.iter().all(|&b| b));
}

#[test]
fn shifted_potential_shifts_the_spectrum() {
    let mesh = build_structured_square(6).unwrap();
    let base = CoefficientSet::identity();
    let a = system(mesh.clone(), &[Side::Left], &base);
    let b = system(mesh, &[Side::Left], &base.shifted_potential(1.0));
    let r = match_and_unitary(&a, &b, -1.0, 6).unwrap();
    for g in &r.gaps {
        assert!((g - 1.0).abs() <= 1e-10);
    }
    assert_eq!(r.flagged(1e-6).len(), 6);
    // Eigenvectors are unchanged by a constant shift.
    assert!(r.trace_angle_sin <= 1e-8);
    assert!(dtn_equality_check(&a, &b, &[0.0]).unwrap() > 1e-3);
    assert_eq!(dtn_equality_check(&a, &a, &[0.0, 1.0, 5.0]).unwrap(), 0.0);
}

#[test]
fn matching_requires_same_discretization() {
    let a = laplace_square(4, &[Side::Left]);
    let b = laplace_square(5, &[Side::Left]);
    let c = laplace_square(4, &[Side::Right]);
    assert!(match_and_unitary(&a, &b, 0.0, 3).is_err());
    assert!(match_and_unitary(&a, &c, 0.0, 3).is_err());
}
