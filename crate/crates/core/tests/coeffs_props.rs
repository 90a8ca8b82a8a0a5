use dtnlab::coeffs::{certify, pullback, CoefficientSet, Diffeo, Field, PointCoefficients, Transport};
use dtnlab::mesh::{build_structured_square, Point};
use proptest::prelude::*;

type Scalar = fn(Point) -> f64;

fn form_density(c: &PointCoefficients, (u, gu): (f64, [f64; 2]), (v, gv): (f64, [f64; 2])) -> f64 {
    let mut s = 0.0;
    for k in 0..2 {
        for j in 0..2 {
            s += c.a[k][j] * gu[k] * gv[j];
        }
        s += c.drift[k] * gu[k] * v + c.codrift[k] * u * gv[k];
    }
    s + c.a0 * u * v
}

fn gradient(f: &dyn Fn(Point) -> f64, p: Point) -> [f64; 2] {
    const H: f64 = 1e-6;
    let d = |k: usize| {
        let (mut a, mut b) = (p, p);
        a[k] += H;
        b[k] -= H;
        (f(a) - f(b)) / (2.0 * H)
    };
    [d(0), d(1)]
}

/// Midpoint rule on an `n × n` grid of `[0,1]²`.
fn integrate(n: usize, f: impl Fn(Point) -> f64) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += f([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
        }
    }
    s * h * h
}

/// `𝔞_b(Tu, Tv)` and `𝔞_a(u, v)` with `Tu = σ·(u∘Φ⁻¹)`, `σ = 1` for form
/// transport and `σ = (det DΦ∘Φ⁻¹)^{-1/2}` for unitary transport.
fn both_sides(c: &CoefficientSet, phi: &Diffeo, mode: Transport, u: Scalar, v: Scalar) -> (f64, f64) {
    let b = pullback(c, phi, mode).unwrap();
    let transported = |f: Scalar| {
        move |y: Point| {
            let x = phi.inverse(y).unwrap();
            let sigma = match mode {
                Transport::Form => 1.0,
                Transport::Unitary => phi.det(x).unwrap().powf(-0.5),
            };
            sigma * f(x)
        }
    };
    let (tu, tv) = (transported(u), transported(v));
    let n = 100;
    let lhs = integrate(n, |y| {
        form_density(&b.eval(y).unwrap(), (tu(y), gradient(&tu, y)), (tv(y), gradient(&tv, y)))
    });
    let rhs = integrate(n, |x| {
        form_density(&c.eval(x).unwrap(), (u(x), gradient(&u, x)), (v(x), gradient(&v, x)))
    });
    (lhs, rhs)
}

fn sample_coefficients() -> CoefficientSet {
    let f = |s: &str| Field::parse(s).unwrap();
    let off = f("0.2*sin(x*y)");
    CoefficientSet::from_fields(
        [[f("1.5 + 0.5*x"), off.clone()], [off, f("1 + y^2")]],
        [f("0.3*y"), f("-0.2")],
        [f("0.3*y"), f("-0.2")],
        f("1 + x"),
    )
}

#[test]
fn transported_forms_agree() {
    let c = sample_coefficients();
    let u: Scalar = |p| (0.5 * p[0]).exp() * (2.0 * p[1]).cos();
    let v: Scalar = |p| p[0] * p[1] + p[1] + 0.3;
    for (phi, mode) in [
        (Diffeo::square_bump_flat(0.1, 0.05), Transport::Form),
        (Diffeo::square_bump_flat(0.1, 0.05), Transport::Unitary),
        (Diffeo::square_bump(0.08, -0.05), Transport::Form),
        (Diffeo::square_bump(0.08, -0.05), Transport::Unitary),
        (Diffeo::square_twist(0.3), Transport::Unitary),
    ] {
        let phi = phi.certify_boundary_fixed(&build_structured_square(8).unwrap()).unwrap();
        let (lhs, rhs) = both_sides(&c, &phi, mode, u, v);
        assert!((lhs - rhs).abs() <= 1e-4 * rhs.abs(), "{mode:?}: {lhs} vs {rhs}");
    }
}

#[test]
fn non_boundary_fixed_map_is_rejected() {
    let shift = Diffeo::new(
        [Field::parse("x + 0.1").unwrap(), Field::parse("y").unwrap()],
        [[1.0.into(), 0.0.into()], [0.0.into(), 1.0.into()]],
    );
    assert!(shift.clone().certify_boundary_fixed(&build_structured_square(4).unwrap()).is_err());
    assert!(pullback(&CoefficientSet::identity(), &shift, Transport::Form).is_err());
}

#[test]
fn boundary_points_are_fixed() {
    let phi = Diffeo::square_bump_flat(0.1, 0.05);
    for k in 0..=40 {
        let s = k as f64 / 40.0;
        for p in [[s, 0.0], [1.0, s], [s, 1.0], [0.0, s]] {
            let q = phi.apply(p).unwrap();
            assert!((q[0] - p[0]).abs() <= 1e-15 && (q[1] - p[1]).abs() <= 1e-15);
            assert!((phi.det(p).unwrap() - 1.0).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eta_scales_linearly(p in 0.5f64..3.0, q in 0.5f64..3.0, r in -0.4f64..0.4, s in 0.01f64..100.0) {
        let mesh = build_structured_square(3).unwrap();
        let a = [[p, r], [r, q]];
        let base = certify(&CoefficientSet::constant(a, [0.0; 2], [0.0; 2], 0.0), &mesh).unwrap();
        let scaled = certify(&CoefficientSet::constant(a.map(|row| row.map(|v| v * s)), [0.0; 2], [0.0; 2], 0.0), &mesh).unwrap();
        let exact = 0.5 * (p + q) - (0.25 * (p - q).powi(2) + r * r).sqrt();
        prop_assert!((base.eta - exact).abs() <= 1e-12 * exact.max(1.0));
        prop_assert!((scaled.eta - s * base.eta).abs() <= 1e-12 * scaled.eta.max(1.0));
        prop_assert!(base.symmetric);
    }

    #[test]
    fn identity_pullback_is_identity(x in 0.0f64..1.0, y in 0.0f64..1.0, unitary in any::<bool>()) {
        let c = sample_coefficients();
        let mode = if unitary { Transport::Unitary } else { Transport::Form };
        let id = Diffeo::identity();
        let b = pullback(&c, &id, mode).unwrap();
        let (cb, ca) = (b.eval([x, y]).unwrap(), c.eval([x, y]).unwrap());
        for k in 0..2 {
            for j in 0..2 {
                prop_assert!((cb.a[k][j] - ca.a[k][j]).abs() <= 1e-14);
            }
            prop_assert!((cb.drift[k] - ca.drift[k]).abs() <= 1e-14);
            prop_assert!((cb.codrift[k] - ca.codrift[k]).abs() <= 1e-14);
        }
        prop_assert!((cb.a0 - ca.a0).abs() <= 1e-12);
    }

    #[test]
    fn inverse_round_trip(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let phi = Diffeo::square_bump_flat(0.1, 0.05);
        let p = phi.apply([x, y]).unwrap();
        let back = phi.inverse(p).unwrap();
        prop_assert!((back[0] - x).abs() <= 1e-12 && (back[1] - y).abs() <= 1e-12);
        prop_assert!(phi.det([x, y]).unwrap() > 0.0);
    }
}
