use std::f64::consts::{E, PI};

use parastab::estimates::{
    actuator_bounds, ball_volume, t_star_upsilon, theta, theta_bar, TheoryParams,
};
use proptest::prelude::*;

#[test]
fn theta_examples() {
    for d in 1..4 {
        assert_eq!(theta(1.0, 0.0, 0.0, d).unwrap(), 2.0);
    }
    assert!((theta(2.0, 1.0, 1.0, 2).unwrap() - 10.5).abs() < 1e-12);
    assert!(theta(1e12, 0.0, 0.0, 2).unwrap() - 1.0 < 1e-11);
}

#[test]
fn t_star_examples() {
    let p = TheoryParams {
        n_a: 1.0,
        n_b: 0.0,
        n_w: 1.0,
        ..TheoryParams::default()
    };
    let (t_star, _) = t_star_upsilon(&p).unwrap();
    assert!((t_star - 0.5f64.sqrt()).abs() < 1e-12);

    let zero = TheoryParams {
        n_a: 0.0,
        n_b: 0.0,
        n_w: 0.0,
        ..TheoryParams::default()
    };
    let (t_star, upsilon) = t_star_upsilon(&zero).unwrap();
    assert!(t_star.is_infinite());
    assert!((upsilon - 2.0 * E).abs() < 1e-12);
    // Both branches agree: Theta_bar at zero norms is D_hat.
    assert_eq!(theta_bar(1.7, 1.0, 0.0, 0.0, 0.0, 2), 1.7);
}

#[test]
fn ball_volumes() {
    assert!((ball_volume(1) - 2.0).abs() < 1e-15);
    assert!((ball_volume(2) - PI).abs() < 1e-15);
    assert!((ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    assert!((ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
}

#[test]
fn actuator_bound_examples() {
    let p = TheoryParams {
        d: 2,
        d_rc: 1.0,
        domain_volume: PI,
        actuated_volume: 1.0 / 6.0,
        n_w: 1.0,
        ..TheoryParams::default()
    };
    let b = actuator_bounds(&p).unwrap();
    assert!((b.d_d - 12.0 * PI).abs() < 1e-12);
    assert!((b.m_simple.raw - 2.0 * E).abs() < 1e-12);
    assert_eq!(b.m_simple.ceil, 6.0);
    assert!((b.t_star_part - 0.5).abs() < 1e-15);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(theta(0.0, 0.0, 0.0, 2).is_err());
    let p = TheoryParams {
        n_a: -1.0,
        ..TheoryParams::default()
    };
    assert!(t_star_upsilon(&p).is_err());
    let p = TheoryParams {
        d: 0,
        ..TheoryParams::default()
    };
    assert!(actuator_bounds(&p).is_err());
}

fn params(d: u32, n_a: f64, n_b: f64, n_w: f64) -> TheoryParams {
    TheoryParams {
        d,
        n_a,
        n_b,
        n_w,
        ..TheoryParams::default()
    }
}

proptest! {
    #[test]
    fn theta_is_at_least_one(r in 1e-3f64..1e3, t1 in 0.0f64..10.0, t2 in 0.0f64..10.0, d in 1u32..4) {
        prop_assert!(theta(r, t1, t2, d).unwrap() >= 1.0);
    }

    #[test]
    fn bounds_grow_with_the_norms(
        d in 1u32..4,
        n_a in 0.0f64..3.0,
        n_b in 0.0f64..3.0,
        n_w in 0.0f64..3.0,
        da in 0.0f64..1.0,
        db in 0.0f64..1.0,
        dw in 0.0f64..1.0,
    ) {
        let lo = actuator_bounds(&params(d, n_a, n_b, n_w)).unwrap();
        let hi = actuator_bounds(&params(d, n_a + da, n_b + db, n_w + dw)).unwrap();
        prop_assert!(hi.upsilon >= lo.upsilon);
        prop_assert!(hi.m_eig.raw >= lo.m_eig.raw);
        prop_assert!(hi.m_pc.raw >= lo.m_pc.raw);
        prop_assert!(hi.m_simple.raw >= lo.m_simple.raw);
    }

    #[test]
    fn simple_bound_scales_as_a_power(d in 1u32..4, n_w in 0.1f64..5.0, factor in 1.1f64..10.0) {
        let a = actuator_bounds(&params(d, 1.0, 0.0, n_w)).unwrap().m_simple.raw;
        let b = actuator_bounds(&params(d, 1.0, 0.0, n_w * factor)).unwrap().m_simple.raw;
        let slope = (b / a).ln() / factor.ln();
        prop_assert!((slope - f64::from(d)).abs() < 1e-9);
    }
}
