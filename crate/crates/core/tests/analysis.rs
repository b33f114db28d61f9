use nalgebra::{DMatrix, DVector};
use parastab::analysis::{
    bisect_threshold, convergence_ratios, cost_series, decay_metrics, decay_metrics_series,
    m_lambda, DECAY_CEILING,
};
use parastab::riccati::RiccatiPath;
use parastab::sim_linear::{simulate_internal, LinearSetup, TimeGrid, Trajectory};
use parastab::{CoefficientField, Error, FemOperators, Mesh};
use proptest::prelude::*;

fn exact_decay(lambda: f64, k: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let times: Vec<f64> = (0..=n).map(|j| j as f64 * k).collect();
    (times.iter().map(|t| (-lambda * t).exp()).collect(), times)
}

#[test]
fn decay_metric_examples() {
    let (norms, times) = exact_decay(2.0, 0.1, 20);
    let m = decay_metrics_series(&norms, &times, 2.0, DECAY_CEILING).unwrap();
    assert!((m.weighted_sup - 1.0).abs() < 1e-12 && m.stabilized);

    let m = decay_metrics_series(
        &[1.0, 4.0 * (-0.2f64).exp()],
        &[0.0, 0.1],
        2.0,
        DECAY_CEILING,
    )
    .unwrap();
    assert!((m.weighted_sup - 4.0).abs() < 1e-12);

    let m = decay_metrics_series(&[1.0, f64::INFINITY], &[0.0, 0.1], 2.0, DECAY_CEILING).unwrap();
    assert!(m.weighted_sup.is_infinite() && !m.stabilized);

    assert!(matches!(
        decay_metrics_series(&[0.0, 1.0], &[0.0, 1.0], 1.0, DECAY_CEILING),
        Err(Error::ZeroInitialNorm)
    ));
}

#[test]
fn m_lambda_examples() {
    let (norms, _) = exact_decay(3.0, 0.05, 40);
    assert!(m_lambda(&norms, 3.0, 0.05).unwrap().abs() < 1e-12);

    let m = m_lambda(&[1.0, 4.0 * (-1f64).exp()], 1.0, 1.0).unwrap();
    assert!((m - 4f64.ln()).abs() < 1e-12);

    let norms: Vec<f64> = (0..10).map(|j| 1.0 + j as f64).collect();
    let r = |j: usize| 0.5 * j as f64 * 0.1 + norms[j].ln();
    assert!((m_lambda(&norms, 0.5, 0.1).unwrap() - (r(9) - r(0))).abs() < 1e-12);
}

#[test]
fn ratio_examples() {
    assert_eq!(
        convergence_ratios(&[1.0, 0.25, 0.0625]).unwrap(),
        vec![4.0, 4.0]
    );
    assert_eq!(convergence_ratios(&[1.0, 0.5]).unwrap(), vec![2.0]);
    assert!(convergence_ratios(&[1.0]).is_err());
    assert!(matches!(
        convergence_ratios(&[1.0, 0.0]),
        Err(Error::NonPositiveEntry { index: 1, .. })
    ));
}

fn free_heat(o: &FemOperators, z0: &DVector<f64>, n_t: usize) -> Trajectory {
    let coeff = CoefficientField::zero();
    let setup = LinearSetup {
        ops: o,
        coeff: &coeff,
        nu: 0.25,
        lambda: 0.0,
        grid: TimeGrid::new(1.0, n_t).unwrap(),
    };
    simulate_internal(&setup, None, z0).unwrap()
}

#[test]
fn cost_examples() {
    let o = FemOperators::assemble(&Mesh::disk(3));
    let ni = o.n_interior();
    let path = RiccatiPath::constant(DMatrix::identity(ni, ni), 5);
    let zero = free_heat(&o, &DVector::zeros(o.n_points()), 5);
    assert!(cost_series(&path, &zero, None)
        .unwrap()
        .iter()
        .all(|&c| c == 0.0));

    let mut e1 = DVector::zeros(o.n_points());
    e1[0] = 1.0;
    let tr = free_heat(&o, &e1, 5);
    assert_eq!(cost_series(&path, &tr, None).unwrap()[0], 1.0);

    let short = RiccatiPath::constant(DMatrix::identity(ni, ni), 4);
    assert!(cost_series(&short, &tr, None).is_err());
}

#[test]
fn blow_up_trajectory_is_not_stabilized() {
    let o = FemOperators::assemble(&Mesh::disk(3));
    let mut z0 = DVector::zeros(o.n_points());
    z0[0] = 1.0;
    let mut tr = free_heat(&o, &z0, 4);
    tr.blow_up = Some(2);
    let m = decay_metrics(&tr, 1.0, DECAY_CEILING).unwrap();
    assert!(m.weighted_sup.is_infinite() && !m.stabilized);
}

#[test]
fn bisection_finds_a_known_edge() {
    let t = bisect_threshold(-1.0, 1.0, 1e-8, |x| Ok(x < 0.42)).unwrap();
    assert!(t < 0.42 && 0.42 - t < 1e-8);
}

proptest! {
    #[test]
    fn m_lambda_is_nonnegative_and_monotone(
        norms in proptest::collection::vec(1e-6f64..1e3, 2..40),
        lambda in 0.0f64..5.0,
        bump in 1.0f64..3.0,
    ) {
        let m = m_lambda(&norms, lambda, 0.1).unwrap();
        prop_assert!(m >= 0.0);
        // Larger later norms with the same start never lower the probe.
        let mut larger = norms.clone();
        for v in larger.iter_mut().skip(1) {
            *v *= bump;
        }
        prop_assert!(m_lambda(&larger, lambda, 0.1).unwrap() >= m - 1e-12);
        prop_assert!(m_lambda(&norms, lambda + 0.5, 0.1).unwrap() >= m - 1e-12);
    }
}
