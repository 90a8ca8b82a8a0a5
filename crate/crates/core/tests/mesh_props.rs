use dtnlab::mesh::{
    build_polygon_mesh, build_structured_square, l_shape, partition_boundary, read_mesh, refine,
    regular_polygon, write_mesh, Mesh, Point,
};
use proptest::prelude::*;
use std::collections::HashSet;

/// Star-shaped polygon from random radii at equally spaced angles.
fn star(radii: &[f64]) -> Vec<Point> {
    let m = radii.len();
    radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}

fn euler(mesh: &Mesh) -> i64 {
    mesh.num_vertices() as i64 - mesh.num_edges() as i64 + mesh.triangles().len() as i64
}

fn longest_edge(mesh: &Mesh) -> f64 {
    let v = mesh.vertices();
    mesh.triangles()
        .iter()
        .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
        .map(|(a, b)| (v[a][0] - v[b][0]).hypot(v[a][1] - v[b][1]))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn polygon_meshes_are_valid(radii in prop::collection::vec(0.6f64..1.4, 5..14), h in 0.15f64..0.6) {
        let poly = star(&radii);
        let mesh = build_polygon_mesh(&poly, h).unwrap();
        mesh.validate().unwrap();
        prop_assert_eq!(euler(&mesh), 1);
        prop_assert!(mesh.h_max() <= 2.0 * h + 1e-12);
        prop_assert!((mesh.h_max() - longest_edge(&mesh)).abs() < 1e-12);
        let perimeter: f64 = (0..poly.len())
            .map(|k| {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .sum();
        prop_assert!((mesh.boundary_length() - perimeter).abs() < 1e-9 * perimeter);
        let shoelace: f64 = (0..poly.len())
            .map(|k| {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                0.5 * (a[0] * b[1] - b[0] * a[1])
            })
            .sum();
        prop_assert!((mesh.area() - shoelace).abs() < 1e-9 * shoelace);
        for p in &poly {
            prop_assert!(mesh.vertices().iter().any(|v| v == p));
        }
    }

    #[test]
    fn refinement_preserves_validity_and_partition(
        radii in prop::collection::vec(0.7f64..1.3, 5..9),
        cut in -0.5f64..0.5,
    ) {
        let mesh = build_polygon_mesh(&star(&radii), 0.5).unwrap();
        let part = match partition_boundary(&mesh, |p| p[0] < cut) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let child = refine(&mesh);
        child.validate().unwrap();
        prop_assert_eq!(euler(&child), 1);
        prop_assert_eq!(child.triangles().len(), 4 * mesh.triangles().len());
        prop_assert!((child.area() - mesh.area()).abs() < 1e-12 * mesh.area());
        let cp = part.refine(&child).unwrap();
        prop_assert!((cp.gamma0_length(&child) - part.gamma0_length(&mesh)).abs() < 1e-12);
        prop_assert_eq!(cp.gamma0_edges.len(), 2 * part.gamma0_edges.len());
        prop_assert_eq!(cp.gamma0_edges.len() + cp.gamma1_edges.len(), child.boundary_edges().len());
    }

    #[test]
    fn partition_invariants(n in 1usize..8, mask in 0u8..15) {
        let mesh = build_structured_square(n).unwrap();
        let sides = [
            mesh.side_predicate(dtnlab::mesh::Side::Bottom),
            mesh.side_predicate(dtnlab::mesh::Side::Right),
            mesh.side_predicate(dtnlab::mesh::Side::Top),
            mesh.side_predicate(dtnlab::mesh::Side::Left),
        ];
        let sel = |p: Point| (0..4).any(|s| mask & (1 << s) != 0 && sides[s](p));
        let part = partition_boundary(&mesh, sel).unwrap();
        let all: HashSet<usize> = part.gamma0_edges.iter().chain(&part.gamma1_edges).copied().collect();
        prop_assert_eq!(all.len(), mesh.boundary_edges().len());
        prop_assert_eq!(part.gamma0_edges.len() + part.gamma1_edges.len(), all.len());
        prop_assert!(!part.gamma1_edges.is_empty());
        let touched: HashSet<usize> = part
            .gamma0_edges
            .iter()
            .flat_map(|&e| mesh.boundary_edges()[e].vertices)
            .collect();
        let constrained: HashSet<usize> = part.constrained_vertices.iter().copied().collect();
        prop_assert_eq!(&touched, &constrained);
        // Interface corners shared by a Γ0 and a Γ1 edge are constrained.
        for &e in &part.gamma1_edges {
            for v in mesh.boundary_edges()[e].vertices {
                if part.gamma0_edges.iter().any(|&f| mesh.boundary_edges()[f].vertices.contains(&v)) {
                    prop_assert!(constrained.contains(&v));
                }
            }
        }
        // Γ0 selected by a sub-mask nests inside the full one.
        let sub = mask & mask.wrapping_sub(1);
        let sub_sel = |p: Point| (0..4).any(|s| sub & (1 << s) != 0 && sides[s](p));
        let inner = partition_boundary(&mesh, sub_sel).unwrap();
        prop_assert!(inner.is_nested_in(&part));
    }
}

#[test]
fn structured_refinement_halves_h_exactly() {
    let mut mesh = build_structured_square(1).unwrap();
    let h0 = mesh.h_max();
    assert_eq!(h0, 2f64.sqrt());
    for k in 1..=5 {
        mesh = refine(&mesh);
        mesh.validate().unwrap();
        assert_eq!(mesh.h_max(), h0 / f64::powi(2.0, k));
        assert!(mesh.quality().all_nonobtuse);
    }
    assert_eq!(mesh.triangles().len(), 2 * 4usize.pow(5));
}

#[test]
fn refined_square_matches_structured_counts() {
    let a = refine(&refine(&build_structured_square(2).unwrap()));
    let b = build_structured_square(8).unwrap();
    assert_eq!(a.num_vertices(), b.num_vertices());
    assert_eq!(a.triangles().len(), b.triangles().len());
    assert_eq!(a.h_max(), b.h_max());
}

#[test]
fn disk_and_l_shape_examples() {
    let disk = build_polygon_mesh(&regular_polygon(16, 1.0), 0.3).unwrap();
    disk.validate().unwrap();
    assert_eq!(euler(&disk), 1);
    let l = build_polygon_mesh(&l_shape(), 0.25).unwrap();
    l.validate().unwrap();
    assert!((l.area() - 0.75).abs() < 1e-12);
    assert!((l.boundary_length() - 4.0).abs() < 1e-12);
}

#[test]
fn all_gamma0_rejected_and_empty_gamma0_allowed() {
    let mesh = build_structured_square(3).unwrap();
    assert!(partition_boundary(&mesh, |_| true).is_err());
    let p = partition_boundary(&mesh, |_| false).unwrap();
    assert!(p.gamma0_edges.is_empty() && p.constrained_vertices.is_empty());
}

#[test]
fn polygon_mesh_serialization_round_trip() {
    let mesh = build_polygon_mesh(&l_shape(), 0.2).unwrap();
    let mut buf = Vec::new();
    write_mesh(&mesh, &mut buf).unwrap();
    let back = read_mesh(buf.as_slice()).unwrap();
    assert_eq!(back, mesh);
}
