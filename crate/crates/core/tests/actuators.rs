use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use parastab::actuators::{gram_schmidt_m, Arc, BoundaryActuatorSet, InternalActuatorSet, Rect};
use parastab::{Error, FemOperators, Mesh};
use proptest::prelude::*;

fn ops(rings: usize) -> (Mesh, FemOperators) {
    let mesh = Mesh::disk(rings);
    let ops = FemOperators::assemble(&mesh);
    (mesh, ops)
}

#[test]
fn regular_grid_on_omega() {
    let (_, o) = ops(12);
    let set =
        InternalActuatorSet::grid(&o, Rect::new(0.0, 0.5, 0.0, 1.0 / 3.0), 3, 2, None).unwrap();
    assert_eq!(set.count(), 6);
    for c in &set.cells {
        assert!((c.x1 - c.x0 - 1.0 / 6.0).abs() < 1e-15);
        assert!((c.y1 - c.y0 - 1.0 / 6.0).abs() < 1e-15);
    }
    // Each interior node of omega belongs to exactly one cell.
    let total: DVector<f64> = set.indicators.iter().sum();
    assert!(total.iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn separated_cells_are_only_rescaled() {
    let (_, o) = ops(10);
    let cells = vec![
        Rect::new(-0.6, -0.3, -0.6, -0.3),
        Rect::new(0.3, 0.6, 0.3, 0.6),
    ];
    let set = InternalActuatorSet::from_cells(&o, cells, None).unwrap();
    let r = &set.gs_r;
    assert_eq!(r[(0, 1)], 0.0);
    assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0);
}

#[test]
fn projector_is_idempotent() {
    let (_, o) = ops(10);
    let set =
        InternalActuatorSet::grid(&o, Rect::new(0.0, 0.5, 0.0, 1.0 / 3.0), 3, 2, None).unwrap();
    let p = set.projector(&o);
    assert!((&p * &p - &p).amax() < 1e-9);
}

#[test]
fn empty_cell_is_rejected() {
    let (_, o) = ops(2);
    let r = InternalActuatorSet::grid(&o, Rect::new(0.0, 0.5, 0.0, 1.0 / 3.0), 3, 2, None);
    assert!(matches!(r, Err(Error::EmptyCell(_))));
}

#[test]
fn gram_schmidt_examples() {
    let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
    let (q, _) = gram_schmidt_m(&[DVector::from_vec(vec![1.0, 0.0])], &m).unwrap();
    assert!((q[0][0] - 0.5).abs() < 1e-15 && q[0][1] == 0.0);

    let basis = [
        DVector::from_vec(vec![0.5, 0.0]),
        DVector::from_vec(vec![0.0, 1.0]),
    ];
    let (q, _) = gram_schmidt_m(&basis, &m).unwrap();
    for (a, b) in q.iter().zip(&basis) {
        assert!((a - b).amax() < 1e-12);
    }

    let v = DVector::from_vec(vec![1.0, 2.0]);
    assert!(matches!(
        gram_schmidt_m(&[v.clone(), v], &m),
        Err(Error::RankDeficient(2))
    ));
}

#[test]
fn boundary_shape_values() {
    let arc = Arc {
        theta0: PI,
        theta1: 1.25 * PI,
        freq: 2,
    };
    assert_eq!(arc.eval(PI, false), 0.0);
    assert!((arc.eval(PI + PI / 8.0, false) - 1f64.sin()).abs() < 1e-12);
    assert_eq!(arc.eval(0.5 * PI, false), 0.0);
    // The scaled variant vanishes at both ends.
    assert!(arc.eval(1.25 * PI - 1e-12, true).abs() < 1e-9);
}

fn standard(o: &FemOperators, mesh: &Mesh, sigma: f64) -> BoundaryActuatorSet {
    BoundaryActuatorSet::standard(
        o,
        &mesh.boundary_theta(),
        PI,
        1.25 * PI,
        4,
        sigma,
        0.5,
        false,
    )
    .unwrap()
}

#[test]
fn traces_vanish_off_the_arc() {
    let (mesh, o) = ops(8);
    let set = standard(&o, &mesh, 10.0);
    for (b, th) in mesh.boundary_theta().iter().enumerate() {
        if !(PI..=1.25 * PI).contains(th) {
            assert!(set.traces.row(b).iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn extension_norm_decreases_with_varsigma() {
    let (mesh, o) = ops(8);
    let ni = o.n_interior();
    // Larger values give a boundary layer thinner than the mesh, where the
    // discrete extension no longer tends to zero.
    let norms: Vec<Vec<f64>> = [0.1, 1.0, 10.0, 100.0]
        .iter()
        .map(|&s| {
            let set = standard(&o, &mesh, s);
            (0..4)
                .map(|i| set.extensions.column(i).rows(0, ni).norm())
                .collect()
        })
        .collect();
    for w in norms.windows(2) {
        for i in 0..4 {
            assert!(w[1][i] < w[0][i], "{norms:?}");
        }
    }
}

#[test]
fn b_bar_represents_the_h_inner_product() {
    let (mesh, o) = ops(8);
    let set = standard(&o, &mesh, 10.0);
    let ni = o.n_interior();
    let m_ii = o.mass_ii_dense();
    for seed in 0..3 {
        let yi = DVector::from_fn(ni, |i, _| ((i * 7 + seed * 3) as f64 * 0.37).sin());
        let y = o.join(&yi, &DVector::zeros(o.n_boundary()));
        for j in 0..set.count() {
            let psi = set.extensions.column(j).into_owned();
            let lhs = psi.dot(&o.mass.full.mul_vec(&y));
            let rhs = set.b_bar.column(j).dot(&(&m_ii * &yi));
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}

#[test]
fn too_many_actuators_for_the_arc() {
    let (mesh, o) = ops(4);
    let r = BoundaryActuatorSet::standard(
        &o,
        &mesh.boundary_theta(),
        PI,
        1.25 * PI,
        6,
        10.0,
        0.25,
        false,
    );
    assert!(matches!(r, Err(Error::RankDeficient(_))));
}

proptest! {
    #[test]
    fn gram_schmidt_gives_m_orthonormal_vectors(entries in proptest::collection::vec(-1.0f64..1.0, 4 * 6)) {
        // A small SPD weight.
        let m = DMatrix::from_row_slice(6, 6, &[
            4.0, 1.0, 0.0, 0.0, 0.0, 1.0,
            1.0, 4.0, 1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 4.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 4.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0, 4.0, 1.0,
            1.0, 0.0, 0.0, 0.0, 1.0, 4.0,
        ]);
        let vs: Vec<DVector<f64>> = entries.chunks(6).map(|c| DVector::from_column_slice(c)).collect();
        if let Ok((q, r)) = gram_schmidt_m(&vs, &m) {
            let qm = DMatrix::from_columns(&q);
            let gram = qm.transpose() * &m * &qm;
            prop_assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-9);
            let back = &qm * &r;
            for (i, v) in vs.iter().enumerate() {
                prop_assert!((back.column(i) - v).amax() < 1e-9);
            }
        }
    }
}
