use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use parastab::config::parse_expr;
use parastab::fem::{local_matrices, spacetime_norm2, time_mass_quadratic};
use parastab::{FemOperators, Mesh};
use proptest::prelude::*;

fn ops(rings: usize) -> FemOperators {
    FemOperators::assemble(&Mesh::disk(rings))
}

#[test]
fn reference_triangle_element_matrices() {
    let loc = local_matrices([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let mass = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
    let stiff = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
    let g1 = [[-1.0, 1.0, 0.0]; 3];
    for i in 0..3 {
        for j in 0..3 {
            assert_abs_diff_eq!(loc.mass[i][j], mass[i][j] / 24.0, epsilon = 1e-14);
            assert_abs_diff_eq!(loc.stiffness[i][j], stiff[i][j] / 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(loc.g1[i][j], g1[i][j] / 6.0, epsilon = 1e-14);
        }
    }
}

#[test]
fn mass_total_is_polygon_area() {
    let mesh = Mesh::disk(6);
    let o = FemOperators::assemble(&mesh);
    let ones = DVector::from_element(o.n_points(), 1.0);
    assert_abs_diff_eq!(
        ones.dot(&o.mass.full.mul_vec(&ones)),
        mesh.polygon_area(),
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(o.norm_h2(&ones), mesh.area(), epsilon = 1e-12);
}

#[test]
fn reaction_matrix_examples() {
    let o = ops(3);
    let n = o.n_points();
    let zero = o.reaction_matrix(&DVector::zeros(n)).unwrap();
    assert_eq!(zero.max_abs(), 0.0);

    let scaled = o.reaction_matrix(&DVector::from_element(n, 2.5)).unwrap();
    let diff = scaled.lin_comb_same_pattern(1.0, &o.mass.full, -2.5);
    assert!(diff.max_abs() < 1e-15);

    let mut e1 = DVector::zeros(n);
    e1[0] = 1.0;
    let r = o.reaction_matrix(&e1).unwrap();
    for (j, m) in o.mass.full.row(0) {
        let expected = if j == 0 { m } else { m / 2.0 };
        assert_abs_diff_eq!(r.get(0, j), expected, epsilon = 1e-16);
    }
}

#[test]
fn convection_matrix_examples() {
    let o = ops(3);
    let n = o.n_points();
    let (zero, one) = (DVector::zeros(n), DVector::from_element(n, 1.0));
    assert_eq!(o.convection_matrix(&zero, &zero).unwrap().max_abs(), 0.0);
    let c = o.convection_matrix(&one, &zero).unwrap();
    assert!(c.lin_comb_same_pattern(1.0, &o.g1.full, -1.0).max_abs() < 1e-15);

    // Interior blocks of the convection matrices are antisymmetric.
    for g in [&o.g1.ii, &o.g2.ii] {
        let d = g.to_dense();
        assert!((&d + d.transpose()).amax() < 1e-14);
    }
}

#[test]
fn elliptic_reproduces_linear_function() {
    let o = ops(5);
    let n = o.n_points();
    let x1 = o.eval(&parse_expr("x1").unwrap(), 0.0);
    let z = DVector::zeros(n);
    let v = o
        .solve_elliptic(1.0, &z, &z, &z, &z, &o.boundary(&x1))
        .unwrap();
    assert!((v - x1).amax() < 1e-10);

    let zero = o
        .solve_elliptic(1.0, &z, &z, &z, &z, &DVector::zeros(o.n_boundary()))
        .unwrap();
    assert_eq!(zero.amax(), 0.0);
}

fn paper_elliptic(rings: usize) -> f64 {
    let mesh = Mesh::disk(rings);
    let o = FemOperators::assemble(&mesh);
    let f = |s: &str| o.eval(&parse_expr(s).unwrap(), 0.0);
    let v = o
        .solve_elliptic(
            0.5,
            &f("sin(x1) + x2"),
            &f("2*x1*x2"),
            &f("-2*sin(x2)"),
            &f("cos(3*x2)^2 + sin(x1) + 2"),
            &DVector::zeros(o.n_boundary()),
        )
        .unwrap();
    assert!(v.iter().all(|x| x.is_finite()));
    o.norm_h2(&v)
}

#[test]
fn elliptic_self_convergence() {
    let (a, b, c) = (paper_elliptic(4), paper_elliptic(8), paper_elliptic(16));
    assert!(a > 0.0 && b > 0.0 && c > 0.0);
    assert!((c - b).abs() < (b - a).abs());
}

#[test]
fn norm_examples() {
    let o = ops(4);
    assert_eq!(o.norm_h2(&DVector::zeros(o.n_points())), 0.0);
    assert_abs_diff_eq!(
        spacetime_norm2(&[1.0, 1.0, 1.0], 0.5).unwrap(),
        1.0,
        epsilon = 1e-15
    );
    assert_abs_diff_eq!(
        time_mass_quadratic(&[1.0, 1.0], 1.0).unwrap(),
        1.0,
        epsilon = 1e-15
    );
    assert!(spacetime_norm2(&[1.0], 0.5).is_err());
}

proptest! {
    #[test]
    fn linear_patch_test(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let o = ops(4);
        let v = DVector::from_iterator(o.n_points(), o.points().iter().map(|p| a + b * p[0] + c * p[1]));
        let ones = DVector::from_element(o.n_points(), 1.0);
        let lumped = o.mass.full.mul_vec(&ones);
        let sv = o.stiffness.full.mul_vec(&v);
        let g1v = o.g1.full.mul_vec(&v);
        let g2v = o.g2.full.mul_vec(&v);
        for i in 0..o.n_interior() {
            prop_assert!(sv[i].abs() < 1e-12);
        }
        for i in 0..o.n_points() {
            prop_assert!((g1v[i] - b * lumped[i]).abs() < 1e-12);
            prop_assert!((g2v[i] - c * lumped[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_is_positive_definite_on_samples(seed in proptest::collection::vec(-1.0f64..1.0, 19)) {
        let o = ops(2);
        let v = DVector::from_vec(seed);
        prop_assume!(v.norm() > 1e-6);
        prop_assert!(o.norm_h2(&v) > 0.0);
    }
}
